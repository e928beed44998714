//! `corrnet` command line: run the pipeline, generate synthetic
//! panels, or recompute metrics and similarities from saved artifacts.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use corrnet::pipeline::{recompute_jaccard, recompute_metrics, EmitFlags};
use corrnet::{
    export, generate, render_summary, run_pipeline, ClusteringRule, DensityConvention, Error,
    FillPolicy, Layout, RunConfig, SynthSpec, WindowMode,
};

#[derive(Parser)]
#[command(
    name = "corrnet",
    version,
    about = "Correlation networks, topology metrics, and Jaccard market-state tracking from daily closing prices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a price file and write all artifacts
    Run(Box<RunArgs>),
    /// Generate a synthetic price panel from a JSON spec
    Synth(SynthArgs),
    /// Recompute metrics.csv from a run's saved correlation matrices
    Metrics(MetricsArgs),
    /// Recompute the Jaccard matrix and regime flags from a run's saved networks
    Jaccard(JaccardArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    /// Columns date,instrument,close
    Long,
    /// A date column plus one column per instrument
    Wide,
}

#[derive(Clone, Copy, ValueEnum)]
enum FillArg {
    /// Keep only dates every instrument traded on
    Intersect,
    /// Carry the most recent close into missing dates
    Ffill,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowModeArg {
    /// One window per calendar year
    Year,
    /// Fixed-length windows advancing by a fixed step
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    /// density = 2M / (N(N-1))
    Prose,
    /// density = M / (N(N-1))
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    /// C_i = 0 for vertices with two or fewer neighbors
    Paper,
    /// C_i = 0 only for vertices with fewer than two neighbors
    Standard,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; the flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV to analyze
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    /// Calendar alignment policy
    #[arg(long, value_enum)]
    fill: Option<FillArg>,
    #[arg(long = "window-mode", value_enum)]
    window_mode: Option<WindowModeArg>,
    /// Trading days per window (fixed mode)
    #[arg(long = "window-length")]
    window_length: Option<usize>,
    /// Trading days between window starts (fixed mode)
    #[arg(long = "window-step")]
    window_step: Option<usize>,
    /// Minimum rows for a calendar-year window to be kept
    #[arg(long = "min-days")]
    min_days: Option<usize>,
    /// Correlation threshold for network construction
    #[arg(long, conflicts_with = "theta_sweep")]
    theta: Option<f64>,
    /// Comma-separated list of thresholds to evaluate per window
    #[arg(long = "theta-sweep", value_delimiter = ',')]
    theta_sweep: Option<Vec<f64>>,
    #[arg(long = "density-convention", value_enum)]
    density_convention: Option<ConventionArg>,
    #[arg(long = "clustering-rule", value_enum)]
    clustering_rule: Option<RuleArg>,
    /// Also report whole-network node/edge/component counts
    #[arg(long = "all-components")]
    all_components: bool,
    /// File with one instrument label per line; restricts the panel
    #[arg(long)]
    subset: Option<PathBuf>,
    /// Flag a window when its adjacent similarity falls below this
    /// fraction of the median
    #[arg(long = "regime-drop")]
    regime_drop: Option<f64>,
    /// Variance floor below which a column counts as constant
    #[arg(long = "sigma-floor")]
    sigma_floor: Option<f64>,
    /// Output directory (created atomically)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count; defaults to available parallelism
    #[arg(long)]
    threads: Option<usize>,
    /// Replace an existing output directory
    #[arg(long)]
    force: bool,
    /// Artifact families to write: all, or a comma list of
    /// volatility,correlation,networks,metrics,similarity
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
    /// Skip the summary table
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file with the panel spec
    #[arg(long)]
    spec: PathBuf,
    /// Where to write the wide-layout CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Run directory holding corr_<window>.csv files
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, conflicts_with = "theta_sweep")]
    theta: Option<f64>,
    #[arg(long = "theta-sweep", value_delimiter = ',')]
    theta_sweep: Option<Vec<f64>>,
    #[arg(long = "density-convention", value_enum)]
    density_convention: Option<ConventionArg>,
    #[arg(long = "clustering-rule", value_enum)]
    clustering_rule: Option<RuleArg>,
    #[arg(long = "all-components")]
    all_components: bool,
    /// Write to a file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct JaccardArgs {
    /// Run directory holding network_<window>.dot files
    #[arg(long)]
    dir: PathBuf,
    /// Select one theta when the directory holds a sweep
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "regime-drop", default_value_t = 0.5)]
    regime_drop: f64,
    /// Print the regime flags instead of the similarity matrix
    #[arg(long)]
    flags: bool,
    /// Write to a file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_run_config(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(input) = &args.input {
        config.input = input.clone();
    }
    if let Some(layout) = args.layout {
        config.layout = match layout {
            LayoutArg::Long => Layout::Long,
            LayoutArg::Wide => Layout::Wide,
        };
    }
    if let Some(fill) = args.fill {
        config.fill = match fill {
            FillArg::Intersect => FillPolicy::Intersect,
            FillArg::Ffill => FillPolicy::ForwardFill,
        };
    }
    if let Some(mode) = args.window_mode {
        config.window.mode = match mode {
            WindowModeArg::Year => WindowMode::Year,
            WindowModeArg::Fixed => WindowMode::Fixed,
        };
    }
    if let Some(length) = args.window_length {
        config.window.length = length;
    }
    if let Some(step) = args.window_step {
        config.window.step = step;
    }
    if let Some(min_days) = args.min_days {
        config.window.min_days = min_days;
    }
    if let Some(theta) = args.theta {
        config.thetas = vec![theta];
    }
    if let Some(sweep) = &args.theta_sweep {
        config.thetas = sweep.clone();
    }
    if let Some(convention) = args.density_convention {
        config.density_convention = convention_from(convention);
    }
    if let Some(rule) = args.clustering_rule {
        config.clustering_rule = rule_from(rule);
    }
    if args.all_components {
        config.all_components = true;
    }
    if let Some(subset) = &args.subset {
        config.subset = Some(subset.clone());
    }
    if let Some(drop) = args.regime_drop {
        config.regime_drop = drop;
    }
    if let Some(floor) = args.sigma_floor {
        config.sigma_floor = floor;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(threads) = args.threads {
        config.threads = Some(threads);
    }
    if args.force {
        config.force = true;
    }
    if let Some(emit) = &args.emit {
        config.emit = parse_emit(emit)?;
    }
    Ok(config)
}

fn convention_from(arg: ConventionArg) -> DensityConvention {
    match arg {
        ConventionArg::Prose => DensityConvention::Prose,
        ConventionArg::Paper => DensityConvention::PaperLiteral,
    }
}

fn rule_from(arg: RuleArg) -> ClusteringRule {
    match arg {
        RuleArg::Paper => ClusteringRule::Paper,
        RuleArg::Standard => ClusteringRule::Standard,
    }
}

fn parse_emit(items: &[String]) -> Result<EmitFlags, Error> {
    if items.iter().any(|i| i == "all") {
        return Ok(EmitFlags::default());
    }
    let mut flags = EmitFlags {
        volatility: false,
        correlation: false,
        networks: false,
        metrics: false,
        similarity: false,
    };
    for item in items {
        match item.as_str() {
            "volatility" => flags.volatility = true,
            "correlation" => flags.correlation = true,
            "networks" => flags.networks = true,
            "metrics" => flags.metrics = true,
            "similarity" => flags.similarity = true,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown artifact family {other:?}"
                )))
            }
        }
    }
    Ok(flags)
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let config = build_run_config(args)?;
    let outcome = run_pipeline(&config)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    if !args.quiet {
        print!("{}", render_summary(&outcome));
    }
    eprintln!(
        "wrote {} artifacts to {}",
        outcome.manifest.artifacts.len() + 1,
        outcome.out_dir.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Error::InvalidSynthSpec(format!("{}: {e}", args.spec.display())))?;
    let spec = SynthSpec::from_json(&text)?;
    let panel = generate(&spec)?;
    let csv = export::panel_to_wide_csv(&panel);
    fs::write(&args.out, csv).map_err(|e| Error::InvalidConfig(format!(
        "cannot write {}: {e}",
        args.out.display()
    )))?;
    eprintln!(
        "wrote {} rows x {} instruments to {}",
        panel.n_dates(),
        panel.n_instruments(),
        args.out.display()
    );
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<(), Error> {
    let thetas = match (&args.theta, &args.theta_sweep) {
        (Some(t), _) => vec![*t],
        (None, Some(sweep)) => sweep.clone(),
        (None, None) => vec![0.3],
    };
    let convention = args
        .density_convention
        .map_or(DensityConvention::Prose, convention_from);
    let rule = args.clustering_rule.map_or(ClusteringRule::Paper, rule_from);
    let csv = recompute_metrics(&args.dir, &thetas, convention, rule, args.all_components)?;
    write_or_print(&args.out, &csv)
}

fn cmd_jaccard(args: &JaccardArgs) -> Result<(), Error> {
    let (matrix, flags) = recompute_jaccard(&args.dir, args.theta, args.regime_drop)?;
    let output = if args.flags { &flags } else { &matrix };
    write_or_print(&args.out, output)
}

fn write_or_print(target: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match target {
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Jaccard(args) => cmd_jaccard(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("corrnet: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
