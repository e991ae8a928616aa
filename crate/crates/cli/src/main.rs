use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hnn_core::config::{Dgp, RunConfig, SyntheticData};
use hnn_core::estimate::{with_threads, MeanPolicy};
use hnn_core::model::Variant;
use hnn_core::run::{self, Artifacts, Prepared, RunManifest};
use hnn_core::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "hnn", version, about = "Hemisphere neural networks for Phillips-curve components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the inference ensemble and export component paths with bands.
    Estimate(RunArgs),
    /// Pseudo-out-of-sample forecasts against the configured benchmarks.
    Forecast(RunArgs),
    /// Permutation importance of each variable for the configured hemispheres.
    Vi(RunArgs),
    /// Compare network states with principal-component extractions.
    Ablation(RunArgs),
    /// Re-export saved draws at another band level or format.
    Export(ExportArgs),
    /// Write a synthetic panel in FRED-QD layout.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the root seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "hnn-out")]
    out: PathBuf,
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    /// Output directory of an `estimate` run.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = 0.68)]
    level: f64,
    /// Divide in-sample sums by (1 - frac)·B instead of the per-date count.
    #[arg(long)]
    fixed_mean: Option<f64>,
    /// Rescale factorized states to this standard deviation.
    #[arg(long)]
    identify_std: Option<f64>,
    #[arg(long)]
    center: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DgpArg {
    Demo,
    LatentState,
    TwoRegimeVolatility,
    PlantedDriver,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = DgpArg::Demo)]
    dgp: DgpArg,
    #[arg(long, default_value_t = 260)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load(args: &RunArgs) -> hnn_core::Result<Prepared> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = RunConfig::from_toml(&text)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(v) = args.variant {
        config.model.variant = v;
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    run::prepare(config, &base)
}

fn finish(mut manifest: RunManifest, art: Artifacts) -> hnn_core::Result<()> {
    manifest.outputs = art.files;
    let path = manifest.write(&art.dir)?;
    println!("wrote {} files and {}", manifest.outputs.len(), path.display());
    Ok(())
}

fn cmd_estimate(args: &RunArgs) -> hnn_core::Result<()> {
    let prep = load(args)?;
    let mut manifest = RunManifest::new(&prep, "estimate");
    let est = manifest.timings.time("estimate", || run::estimate(&prep))?;
    let mut art = Artifacts::new(&args.out)?;
    run::write_estimate(&prep, &est, &mut art, &mut manifest)?;
    finish(manifest, art)
}

fn cmd_vi(args: &RunArgs) -> hnn_core::Result<()> {
    let prep = load(args)?;
    let mut manifest = RunManifest::new(&prep, "vi");
    let est = manifest.timings.time("estimate", || run::estimate(&prep))?;
    let hemis = run::vi_hemispheres(&prep.config);
    let reports = manifest.timings.time("vi", || run::variable_importance(&prep, &est.ensemble, &hemis))?;
    let mut art = Artifacts::new(&args.out)?;
    run::write_vi(&reports, prep.config.vi.top, &mut art)?;
    for r in &reports {
        if let Some(e) = r.entries.first() {
            println!("{}: top variable {} (VI {:.3})", r.hemisphere, e.variable, e.vi);
        }
    }
    manifest.draws = est.ensemble.log.clone();
    finish(manifest, art)
}

fn cmd_forecast(args: &RunArgs) -> hnn_core::Result<()> {
    let prep = load(args)?;
    let mut manifest = RunManifest::new(&prep, "forecast");
    let res = manifest.timings.time("forecast", || run::forecast(&prep))?;
    let mut art = Artifacts::new(&args.out)?;
    run::write_forecast(&res, &mut art)?;
    for r in res.summary.iter().filter(|r| r.sample == "excl") {
        let ratio = r.score.ratio.map_or("NA".into(), |v| format!("{v:.3}"));
        println!("{:<12} rmse {:.4} ratio {ratio} n {}", r.score.model, r.score.rmse, r.score.n);
    }
    finish(manifest, art)
}

fn cmd_ablation(args: &RunArgs) -> hnn_core::Result<()> {
    let prep = load(args)?;
    let mut manifest = RunManifest::new(&prep, "ablation");
    let est = manifest.timings.time("estimate", || run::estimate(&prep))?;
    let reports = if prep.config.ablation.weighted {
        let hemis = if prep.config.ablation.hemispheres.is_empty() {
            prep.config.state_hemispheres()
        } else {
            prep.config.ablation.hemispheres.clone()
        };
        manifest.timings.time("vi", || run::variable_importance(&prep, &est.ensemble, &hemis))?
    } else {
        Vec::new()
    };
    let ex = manifest.timings.time("pca", || run::ablation(&prep, &est, &reports))?;
    let mut art = Artifacts::new(&args.out)?;
    run::write_ablation(&prep.features.dates, &ex, &mut art)?;
    manifest.draws = est.ensemble.log.clone();
    finish(manifest, art)
}

fn cmd_export(args: &ExportArgs) -> hnn_core::Result<()> {
    let mut paths = run::read_paths(&args.from.join("paths.json"))?;
    if let Some(sd) = args.identify_std {
        paths = paths.identify_factorization(sd)?;
    }
    if args.center {
        paths = paths.center_contributions()?;
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::Config(format!("--level {} not in (0, 1)", args.level)));
    }
    let policy = match args.fixed_mean {
        Some(f) => MeanPolicy::Fixed { train_frac: f },
        None => MeanPolicy::PerT,
    };
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent)?;
    }
    match args.format {
        Format::Csv => {
            let f = fs::File::create(&args.out)?;
            paths.write_csv(f, args.level, policy)?;
        }
        Format::Json => run::write_json_file(&args.out, &run::tidy_json(&paths, args.level, policy)?)?,
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> hnn_core::Result<()> {
    let dgp = match args.dgp {
        DgpArg::Demo => Dgp::Demo,
        DgpArg::LatentState => Dgp::LatentState,
        DgpArg::TwoRegimeVolatility => Dgp::TwoRegimeVolatility,
        DgpArg::PlantedDriver => Dgp::PlantedDriver,
    };
    let panel = SyntheticData { dgp, n: args.n, seed: args.seed }.panel()?;
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent)?;
    }
    panel.write_csv(fs::File::create(&args.out)?)?;
    println!("wrote {} quarters to {}", panel.len(), args.out.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data | ErrorCategory::Io => 3,
        ErrorCategory::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Estimate(a) | Command::Forecast(a) | Command::Vi(a) | Command::Ablation(a) => a.threads,
        _ => 0,
    };
    let result = with_threads(threads, || match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Vi(a) => cmd_vi(a),
        Command::Ablation(a) => cmd_ablation(a),
        Command::Export(a) => cmd_export(a),
        Command::Simulate(a) => cmd_simulate(a),
    })
    .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
