use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wfw_cli::config::{ExperimentConfig, FunctionalConfig, FwRunConfig, ScheduleConfig, TrustRegionConfig};
use wfw_cli::experiments::{mixture_observations, run_deconv, run_fw, run_mmd_flow, run_trust_region};
use wfw_cli::plot::{emit_plot, read_series, PlotSpec};
use wfw_core::frank_wolfe::FWStatus;
use wfw_core::ParticleCloud;

/// Frank-Wolfe in Wasserstein space on particle clouds.
#[derive(Parser)]
#[command(name = "wfw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the outer loop on one functional.
    Fw(FwArgs),
    /// Solve one trust-region step and print its dual report as JSON.
    TrustRegion(TrustRegionArgs),
    /// Deconvolution of a noisy planar mixture.
    Deconv(ExperimentArgs),
    /// Student-teacher MMD fit against an explicit-Euler gradient flow.
    MmdFlow(ExperimentArgs),
    /// Run whatever experiment a config file names.
    Run(ExperimentArgs),
    /// Draw a line chart of trace columns.
    Plot(PlotArgs),
    /// Write a synthetic cloud.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct FwArgs {
    /// JSON config with `"experiment": "fw"`; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential from the registry: quadratic, double-well, zero, linear:a1,..., constant:c.
    #[arg(long)]
    objective: Option<String>,
    /// Pair interaction: zero, quadratic or quadratic:strength.
    #[arg(long)]
    interaction: Option<String>,
    /// Fit an MMD to this target cloud instead of a potential.
    #[arg(long, conflicts_with_all = ["objective", "data"])]
    target: Option<PathBuf>,
    /// Kernel for `--target`: gaussian or imq.
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Fit an entropic deconvolution to these observations.
    #[arg(long, conflicts_with = "objective", requires = "sigma2")]
    data: Option<PathBuf>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_wall_secs: Option<f64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Final cloud.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Clouds carry a header row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct TrustRegionArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "quadratic")]
    objective: String,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Use the sampled oracle with this failure probability.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Transported cloud.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Trace CSV, optionally `path=label`; repeat to overlay.
    #[arg(long = "trace", required = true)]
    traces: Vec<String>,
    #[arg(long, default_value = "iter")]
    x: String,
    #[arg(long, default_value = "J")]
    y: String,
    #[arg(long)]
    log_y: bool,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenerateKind,
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Noisy observations of a planar mixture with modes on a regular polygon.
    Mixture {
        #[arg(long, default_value_t = 4)]
        modes: usize,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Noise variance.
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Scaled standard normal cloud.
    Gaussian {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        header: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fw(args) => fw(args),
        Command::TrustRegion(args) => {
            let cfg = TrustRegionConfig {
                seed: args.seed,
                input: args.input,
                objective: args.objective,
                delta: args.delta,
                eps: args.eps,
                gamma: args.gamma,
                header: args.header,
                output: args.output,
            };
            dispatch(ExperimentConfig::TrustRegion(cfg))
        }
        Command::Deconv(args) => experiment(args, "deconv"),
        Command::MmdFlow(args) => experiment(args, "mmd-flow"),
        Command::Run(args) => experiment(args, ""),
        Command::Plot(args) => plot(args),
        Command::Generate(args) => generate(args),
    }
}

fn fw(args: FwArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => match ExperimentConfig::load(path)? {
            ExperimentConfig::Fw(c) => c,
            _ => bail!("{} is not an fw config", path.display()),
        },
        None => FwRunConfig {
            seed: args.seed.context("--seed is required without --config")?,
            input: args.input.clone().context("--input is required without --config")?,
            functional: FunctionalConfig::default(),
            schedule: ScheduleConfig::default(),
            header: false,
            trace: None,
            output: None,
        },
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(input) = args.input {
        cfg.input = input;
    }
    if let Some(target) = args.target {
        cfg.functional = FunctionalConfig::Mmd {
            target,
            kernel: args.kernel,
            sigma: args.sigma,
            beta: 0.5,
        };
    } else if let Some(data) = args.data {
        cfg.functional = FunctionalConfig::Deconv {
            data,
            sigma2: args.sigma2.context("--data needs --sigma2")?,
        };
    } else if args.objective.is_some() || args.interaction.is_some() {
        let (v0, w0) = match &cfg.functional {
            FunctionalConfig::Potential { v, w } => (v.clone(), w.clone()),
            _ => ("quadratic".into(), "zero".into()),
        };
        cfg.functional = FunctionalConfig::Potential {
            v: args.objective.unwrap_or(v0),
            w: args.interaction.unwrap_or(w0),
        };
    }
    if let Some(k) = args.iters {
        cfg.schedule.k_max = k;
    }
    if let Some(e) = args.epsilon {
        cfg.schedule.epsilon = e;
    }
    if args.max_wall_secs.is_some() {
        cfg.schedule.max_wall_secs = args.max_wall_secs;
    }
    if args.trace.is_some() {
        cfg.trace = args.trace;
    }
    if args.output.is_some() {
        cfg.output = args.output;
    }
    cfg.header |= args.header;
    dispatch(ExperimentConfig::Fw(cfg))
}

fn experiment(args: ExperimentArgs, expected: &str) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let name = match &cfg {
        ExperimentConfig::Deconv(_) => "deconv",
        ExperimentConfig::MmdFlow(_) => "mmd-flow",
        ExperimentConfig::Fw(_) => "fw",
        ExperimentConfig::TrustRegion(_) => "trust-region",
    };
    if !expected.is_empty() && name != expected {
        bail!("{} configures {name}, not {expected}", args.config.display());
    }
    if let Some(dir) = args.output_dir {
        match &mut cfg {
            ExperimentConfig::Deconv(c) => c.output_dir = Some(dir),
            ExperimentConfig::MmdFlow(c) => c.output_dir = Some(dir),
            _ => bail!("--output-dir applies to deconv and mmd-flow only"),
        }
    }
    dispatch(cfg)
}

fn dispatch(cfg: ExperimentConfig) -> Result<ExitCode> {
    match cfg {
        ExperimentConfig::Fw(c) => {
            let out = run_fw(&c)?;
            let last = out.trace.last();
            println!(
                "status={:?} iterations={} final_J={} last_s={} grad_evals={}",
                out.status,
                out.trace.len(),
                out.final_objective,
                last.map_or(f64::NAN, |r| r.s),
                out.total_grad_evals()
            );
            Ok(status_code(out.status))
        }
        ExperimentConfig::TrustRegion(c) => {
            let out = run_trust_region(&c)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        ExperimentConfig::Deconv(c) => {
            let report = run_deconv(&c)?;
            let first = report.averaged.first().copied().unwrap_or(f64::NAN);
            let last = report.averaged.last().copied().unwrap_or(f64::NAN);
            println!(
                "seeds={} mean_J_initial={first} mean_J_final={last} max_marginal_error={}",
                report.runs.len(),
                report.max_marginal_error
            );
            print_files(&report.files);
            Ok(ExitCode::SUCCESS)
        }
        ExperimentConfig::MmdFlow(c) => {
            let report = run_mmd_flow(&c)?;
            for (name, rows) in [("fw", &report.fw_rows), ("flow", &report.baseline_rows)] {
                if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
                    println!(
                        "{name}: val_mmd2 {} -> {} after {} gradient evaluations",
                        a.val_mmd2, b.val_mmd2, b.grad_evals
                    );
                }
            }
            print_files(&report.files);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn status_code(status: FWStatus) -> ExitCode {
    match status {
        FWStatus::Converged => ExitCode::SUCCESS,
        FWStatus::IterationBudget | FWStatus::WallClockBudget => ExitCode::from(2),
    }
}

fn print_files(files: &[PathBuf]) {
    if let Some(dir) = files.first().and_then(|f| f.parent()) {
        println!("wrote {} files to {}", files.len(), dir.display());
    }
}

fn plot(args: PlotArgs) -> Result<ExitCode> {
    let mut series = Vec::new();
    for t in &args.traces {
        let (path, label) = match t.split_once('=') {
            Some((p, l)) => (p, l.to_string()),
            None => (
                t.as_str(),
                Path::new(t)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| t.clone()),
            ),
        };
        let file = std::fs::File::open(path).with_context(|| format!("opening {path}"))?;
        series.push(read_series(file, &args.x, &args.y, &label)?);
    }
    let spec = PlotSpec {
        title: args.title,
        x_label: args.x,
        y_label: args.y,
        log_y: args.log_y,
        ..PlotSpec::default()
    };
    std::fs::write(&args.output, emit_plot(&series, &spec))
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn generate(args: GenerateArgs) -> Result<ExitCode> {
    match args.kind {
        GenerateKind::Mixture {
            modes,
            radius,
            n,
            noise,
            seed,
            output,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mixture_observations(modes, radius, n, noise, &mut rng)?.write_csv(&output, false)?;
        }
        GenerateKind::Gaussian {
            n,
            dim,
            scale,
            seed,
            output,
            header,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ParticleCloud::gaussian(n, dim, scale, &mut rng)?.write_csv(&output, header)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
