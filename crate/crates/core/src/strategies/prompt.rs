use serde::{Deserialize, Serialize};

use crate::types::{CandidateList, EvalSample};

/// Vocabulary used when rendering prompts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    #[default]
    Movies,
    Books,
}

impl Domain {
    fn plural(self) -> &'static str {
        match self {
            Domain::Movies => "movies",
            Domain::Books => "books",
        }
    }

    fn singular(self) -> &'static str {
        match self {
            Domain::Movies => "movie",
            Domain::Books => "book",
        }
    }

    fn consumed(self) -> &'static str {
        match self {
            Domain::Movies => "watched",
            Domain::Books => "read",
        }
    }
}

pub const STANDARD_FORMAT: &str =
    "Respond with a numbered list of exactly the candidate titles, one per line, no extra text.";

/// A rendered prompt in its parts. `candidates` keeps the presented order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub history_header: String,
    pub history: String,
    pub candidates_header: String,
    pub candidates: Vec<String>,
    pub instruction: String,
    pub output_format: String,
}

impl PromptBundle {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.history_header);
        out.push('\n');
        out.push_str(&self.history);
        out.push_str("\n\n");
        out.push_str(&self.candidates_header);
        out.push('\n');
        for c in &self.candidates {
            out.push_str("- ");
            out.push_str(c);
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&self.instruction);
        out.push('\n');
        out.push_str(&self.output_format);
        out
    }
}

fn base(sample: &EvalSample, order: &CandidateList, domain: Domain) -> PromptBundle {
    let history = sample
        .history()
        .entries()
        .iter()
        .map(|e| sample.title(&e.id))
        .collect::<Vec<_>>()
        .join(", ");
    PromptBundle {
        history_header: format!(
            "The user has previously {} the following {}:",
            domain.consumed(),
            domain.plural()
        ),
        history,
        candidates_header: format!("Here is a list of candidate {}:", domain.plural()),
        candidates: order.ids().iter().map(|id| sample.title(id).to_owned()).collect(),
        instruction: String::new(),
        output_format: String::new(),
    }
}

/// The list-wise ranking prompt over `order`.
pub fn build_standard_prompt(sample: &EvalSample, order: &CandidateList, domain: Domain) -> PromptBundle {
    PromptBundle {
        instruction: format!(
            "Rank all candidate {} based on the user's preferences.",
            domain.plural()
        ),
        output_format: STANDARD_FORMAT.to_owned(),
        ..base(sample, order, domain)
    }
}

/// The iterative-selection prompt asking for `count` items out of `remaining`.
pub fn build_rise_prompt(sample: &EvalSample, remaining: &CandidateList, count: usize, domain: Domain) -> PromptBundle {
    let instruction = if count == 1 {
        format!("Recommend exactly one {} from the candidate list.", domain.singular())
    } else {
        format!("Recommend exactly {count} {} from the candidate list.", domain.plural())
    };
    let output_format = if count == 1 {
        "Respond with exactly 1 title, one per line.".to_owned()
    } else {
        format!("Respond with exactly {count} titles, one per line.")
    };
    PromptBundle {
        instruction,
        output_format,
        ..base(sample, remaining, domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ids, HistoryEntry, InteractionHistory, ItemId};
    use std::collections::BTreeMap;

    fn sample() -> EvalSample {
        let hist_titles = [
            "John Wick",
            "Gone in 60 Seconds",
            "WALL-E",
            "Mad Max: Fury Road",
            "Big Hero 6",
        ];
        let cand_titles = [
            "The Fast and the Furious",
            "Inside Out",
            "The Dark Knight",
            "The Notebook",
            "Goodfellas",
        ];
        let mut titles = BTreeMap::new();
        let mut history = Vec::new();
        for (i, t) in hist_titles.iter().enumerate() {
            let id = ItemId::new(format!("h{i}"));
            titles.insert(id.clone(), t.to_string());
            history.push(HistoryEntry {
                id,
                rating: 5,
                timestamp: 0,
            });
        }
        let mut cands = Vec::new();
        for (i, t) in cand_titles.iter().enumerate() {
            let id = ItemId::new(format!("c{i}"));
            titles.insert(id.clone(), t.to_string());
            cands.push(id);
        }
        EvalSample::new(
            "u1",
            InteractionHistory::new(history).unwrap(),
            CandidateList::new(cands).unwrap(),
            ids(&["c2", "c1", "c4"]),
            titles,
        )
        .unwrap()
    }

    #[test]
    fn standard_prompt_matches_template() {
        let s = sample();
        let text = build_standard_prompt(&s, s.candidates(), Domain::Movies).render();
        let expected = "The user has previously watched the following movies:\n\
John Wick, Gone in 60 Seconds, WALL-E, Mad Max: Fury Road, Big Hero 6\n\
\n\
Here is a list of candidate movies:\n\
- The Fast and the Furious\n\
- Inside Out\n\
- The Dark Knight\n\
- The Notebook\n\
- Goodfellas\n\
\n\
Rank all candidate movies based on the user's preferences.\n\
Respond with a numbered list of exactly the candidate titles, one per line, no extra text.";
        assert_eq!(text, expected);
    }

    #[test]
    fn candidate_order_is_preserved() {
        let s = sample();
        let order = CandidateList::new(ids(&["c3", "c1", "c2", "c0", "c4"])).unwrap();
        let p = build_standard_prompt(&s, &order, Domain::Movies);
        assert_eq!(
            p.candidates,
            [
                "The Notebook",
                "Inside Out",
                "The Dark Knight",
                "The Fast and the Furious",
                "Goodfellas"
            ]
        );
    }

    #[test]
    fn rise_instruction_wording() {
        let s = sample();
        let one = build_rise_prompt(&s, s.candidates(), 1, Domain::Movies);
        assert_eq!(one.instruction, "Recommend exactly one movie from the candidate list.");
        let three = build_rise_prompt(&s, s.candidates(), 3, Domain::Books);
        assert_eq!(three.instruction, "Recommend exactly 3 books from the candidate list.");
        assert_eq!(three.output_format, "Respond with exactly 3 titles, one per line.");
        assert!(three
            .render()
            .starts_with("The user has previously read the following books:"));
    }
}
