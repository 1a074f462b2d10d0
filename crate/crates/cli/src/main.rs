use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use posbias_core::backend::{
    BackendKind, BackendSpec, ParsePolicy, RelevanceSource, RemoteSpec, SimulatorPreset, SimulatorSpec,
};
use posbias_core::data::{draw_samples, export_samples, DistributionKind, SyntheticSpec};
use posbias_core::runner::{
    emit_report, load_report, render_markdown, resume, run_experiment, sample_seed, DatasetSpec, ExperimentConfig,
    ReportFormat, RunError, RunOptions, RunReport, SensHeadline,
};
use posbias_core::strategies::Domain;

#[derive(Parser)]
#[command(name = "posbias", version, about = "Position-bias experiments for LLM rankers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw evaluation samples and export them as JSON lines.
    Sample(SampleArgs),
    /// Run an experiment from a config file and/or flags, or resume one.
    Run(Box<RunArgs>),
    /// Re-aggregate a run directory and rewrite its reports.
    Report(ReportArgs),
    /// Sweep the simulated biased ranker over beta, K and N on synthetic data.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone, Default)]
struct DatasetArgs {
    /// MovieLens-1M directory (ratings.dat, movies.dat).
    #[arg(long, value_name = "DIR")]
    movielens: Option<PathBuf>,
    /// Amazon review dump (JSON lines).
    #[arg(long, value_name = "FILE")]
    amazon_reviews: Option<PathBuf>,
    /// Amazon metadata with titles (JSON lines).
    #[arg(long, value_name = "FILE", requires = "amazon_reviews")]
    amazon_meta: Option<PathBuf>,
    /// Samples previously written by `posbias sample`.
    #[arg(long, value_name = "FILE")]
    samples_file: Option<PathBuf>,
    /// Seeded synthetic catalog.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
}

impl DatasetArgs {
    fn spec(&self) -> Result<Option<DatasetSpec>> {
        let mut found = Vec::new();
        if let Some(dir) = &self.movielens {
            found.push(DatasetSpec::Movielens { dir: dir.clone() });
        }
        if let Some(reviews) = &self.amazon_reviews {
            found.push(DatasetSpec::AmazonBooks {
                reviews: reviews.clone(),
                metadata: self.amazon_meta.clone(),
            });
        }
        if let Some(path) = &self.samples_file {
            found.push(DatasetSpec::Samples { path: path.clone() });
        }
        if self.synthetic {
            found.push(DatasetSpec::Synthetic {
                spec: SyntheticSpec::default(),
                seed: self.synthetic_seed,
            });
        }
        if found.len() > 1 {
            bail!("choose one dataset source");
        }
        Ok(found.pop())
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 30])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values = ["full"])]
    distributions: Vec<DistributionKind>,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 10)]
    history_len: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Oracle,
    Echo,
    Reverse,
    Biased,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue the run in this directory; other config flags are ignored.
    #[arg(long, value_name = "DIR", conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// e.g. standard,bootstrap,rise@1
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    rise_n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    distributions: Option<Vec<DistributionKind>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    history_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_failure_fraction: Option<f64>,
    #[arg(long, value_parser = serde_value::<SensHeadline>)]
    sens_headline: Option<SensHeadline>,
    #[arg(long, value_parser = serde_value::<Domain>)]
    domain: Option<Domain>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_parser = serde_value::<ParsePolicy>)]
    parse_policy: Option<ParsePolicy>,
    #[arg(long)]
    max_repair_retries: Option<u32>,
    #[arg(long)]
    reshuffle_each_iteration: Option<bool>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Use a simulated ranker.
    #[arg(long, value_enum, conflicts_with = "base_url")]
    simulator: Option<Preset>,
    #[arg(long, default_value_t = 0.6)]
    beta: f64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Chat-completions base URL, e.g. http://localhost:8000/v1
    #[arg(long, requires = "model")]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Confirm the projected call count of a remote run.
    #[arg(long, short)]
    yes: bool,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values = ["csv", "markdown", "json"])]
    format: Vec<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.3, 0.6])]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 30])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values = ["standard", "bootstrap", "rise@1"])]
    strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5])]
    rise_n: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Keep bias strength independent of list length.
    #[arg(long)]
    no_length_scaling: bool,
    /// Take relevance from ground truth instead of seeded hashes.
    #[arg(long)]
    ground_truth_relevance: bool,
    #[arg(long, default_value_t = 4)]
    max_concurrency: usize,
    /// Keep run directories here (default: a temporary directory).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Parses a flag through the type's lowercase serde name.
fn serde_value<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|e| e.to_string())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Sample(a) => sample(a),
        Command::Run(a) => run(*a),
        Command::Report(a) => report(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn sample(a: SampleArgs) -> Result<()> {
    let spec = a.dataset.spec()?.context("a dataset is required")?;
    let catalog = spec.load()?.context("cannot sample from a samples file")?;
    let mut drawn = Vec::new();
    for &d in &a.distributions {
        for &k in &a.k {
            drawn.extend(draw_samples(
                &catalog,
                k,
                d,
                a.count,
                a.history_len,
                sample_seed(a.seed, d, k),
            )?);
        }
    }
    let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    export_samples(&mut out, &drawn)?;
    out.flush()?;
    info!("wrote {} samples to {}", drawn.len(), a.out.display());
    Ok(())
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut c: ExperimentConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if let Some(d) = a.dataset.spec()? {
                c.dataset = d;
            }
            c
        }
        None => ExperimentConfig::new(a.dataset.spec()?.context("pass --config or a dataset flag")?),
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value.clone() {
                $field = v;
            }
        };
    }
    set!(c.k_values, a.k);
    set!(c.strategies, a.strategies);
    set!(c.rise_n_sweep, a.rise_n);
    set!(c.distributions, a.distributions);
    set!(c.sample_count, a.samples);
    set!(c.trials, a.trials);
    set!(c.history_len, a.history_len);
    set!(c.experiment_seed, a.seed);
    set!(c.max_failure_fraction, a.max_failure_fraction);
    set!(c.sens_headline, a.sens_headline);
    set!(c.domain, a.domain);
    set!(c.strategy_params.temperature, a.temperature);
    set!(c.strategy_params.parse_policy, a.parse_policy);
    set!(c.strategy_params.max_repair_retries, a.max_repair_retries);
    set!(c.strategy_params.reshuffle_each_iteration, a.reshuffle_each_iteration);
    if let Some(p) = a.simulator {
        let preset = match p {
            Preset::Oracle => SimulatorPreset::Oracle,
            Preset::Echo => SimulatorPreset::Echo,
            Preset::Reverse => SimulatorPreset::Reverse,
            Preset::Biased => SimulatorPreset::Biased {
                beta: a.beta,
                noise: a.noise,
            },
        };
        c.backend.kind = BackendKind::Simulator(preset.spec(c.experiment_seed));
    }
    if let (Some(url), Some(model)) = (&a.base_url, &a.model) {
        let mut r = RemoteSpec::new(url.clone(), model.clone());
        if let Some(var) = &a.api_key_env {
            r.api_key_env = Some(var.clone());
        }
        c.backend.kind = BackendKind::Remote(r);
    } else if let (Some(var), BackendKind::Remote(r)) = (&a.api_key_env, &mut c.backend.kind) {
        r.api_key_env = Some(var.clone());
    }
    set!(c.backend.max_concurrency, a.max_concurrency);
    set!(c.output_dir, a.output_dir.clone().map(Some));
    if c.output_dir.is_none() {
        c.output_dir = Some(PathBuf::from(format!("runs/{}", &c.hash()[..12])));
    }
    Ok(c)
}

fn confirm_hint(err: RunError) -> anyhow::Error {
    match err {
        RunError::ConfirmationRequired { projected } => {
            anyhow::anyhow!("this run will make about {projected} backend calls; rerun with --yes to proceed")
        }
        other => other.into(),
    }
}

fn print_report(report: &RunReport, dir: &Path) {
    println!("{}", render_markdown(report));
    println!("reports written to {}", dir.display());
}

fn run(a: RunArgs) -> Result<()> {
    let opts = RunOptions {
        confirm_remote: a.yes,
        backend: None,
    };
    if let Some(dir) = &a.resume {
        let report = resume(dir, &opts).map_err(confirm_hint)?;
        print_report(&report, dir);
        return Ok(());
    }
    let config = build_config(&a)?;
    let dir = config.output_dir.clone().expect("set above");
    eprintln!("projected backend calls: {}", config.projected_calls()?);
    let report = run_experiment(&config, &opts).map_err(confirm_hint)?;
    print_report(&report, &dir);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let report = load_report(&a.run_dir)?;
    let formats: Vec<ReportFormat> = a.format.iter().map(|&f| f.into()).collect();
    emit_report(&report, &a.run_dir, &formats)?;
    print_report(&report, &a.run_dir);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let scratch;
    let root = match &a.output_dir {
        Some(d) => d.clone(),
        None => {
            scratch = tempfile::tempdir()?;
            scratch.path().to_owned()
        }
    };
    println!("| beta | strategy | K | PC | Sim | Sens | NDCG@5 |");
    println!("|---:|---|---:|---|---|---|---|");
    for &beta in &a.beta {
        let mut params = SimulatorPreset::Biased { beta, noise: a.noise }.spec(a.seed).params;
        params.length_scaling = !a.no_length_scaling;
        params.relevance_source = if a.ground_truth_relevance {
            RelevanceSource::FromGroundTruth
        } else {
            RelevanceSource::SeededHash
        };
        let mut c = ExperimentConfig::new(DatasetSpec::Synthetic {
            spec: SyntheticSpec::default(),
            seed: a.seed,
        });
        c.k_values = a.k.clone();
        c.strategies = a.strategies.clone();
        c.rise_n_sweep = a.rise_n.clone();
        c.sample_count = a.samples;
        c.trials = a.trials;
        c.experiment_seed = a.seed;
        c.backend = BackendSpec {
            kind: BackendKind::Simulator(SimulatorSpec {
                params,
                seed: a.seed,
                reverse_output: false,
            }),
            max_concurrency: a.max_concurrency,
        };
        c.output_dir = Some(root.join(format!("beta-{beta}")));
        let report = run_experiment(&c, &RunOptions::default())?;
        for cell in &report.cells {
            let f = |m: &Option<posbias_core::MetricSummary>| m.as_ref().map_or("n/a".into(), |s| s.display());
            println!(
                "| {beta} | {} | {} | {} | {} | {} | {} |",
                cell.strategy,
                cell.k,
                f(&cell.pc),
                f(&cell.sim),
                f(&cell.sens),
                f(&cell.ndcg_at_5)
            );
        }
    }
    Ok(())
}
