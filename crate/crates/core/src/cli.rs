//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or invalid data,
//! 3 numerical failure of the batch.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataio;
use crate::engine::{self, Backend, MonitorConfig};
use crate::error::Error;
use crate::mosum::{self, CriticalValueRequest};
use crate::synth::{self, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const THREADS_ENV: &str = "BREAKWATCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "breakwatch", version, about = "Batched MOSUM break detection for pixel time series")]
struct Cli {
    /// Worker threads (default: machine parallelism)
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic stack in BTS1 format
    Generate(GenerateArgs),
    /// Run break detection over a BTS1 stack
    Monitor(MonitorArgs),
    /// Simulate the critical value of the MOSUM boundary
    CriticalValue(CriticalValueArgs),
    /// Time the fused backend over several pixel counts
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    m: usize,
    #[arg(long = "N", default_value_t = 200)]
    n_obs: usize,
    #[arg(long, default_value_t = 23.0)]
    freq: f64,
    #[arg(long, default_value_t = 0.01)]
    noise_std: f64,
    #[arg(long, default_value_t = 0.1)]
    break_mag: f64,
    #[arg(long, default_value_t = 0.4)]
    break_frac: f64,
    #[arg(long, default_value_t = 0.5)]
    break_ratio: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Fused,
    Naive,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// History length
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// MOSUM bandwidth
    #[arg(long, default_value_t = 50)]
    h: usize,
    /// Harmonic terms
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 23.0)]
    freq: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Critical value; simulated from --alpha when omitted
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = BackendArg::Fused)]
    backend: BackendArg,
    /// Print per-phase timings
    #[arg(long)]
    profile: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CriticalValueArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    h_frac: f64,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = 100)]
    n_sim: usize,
    #[arg(long, default_value_t = mosum::DEFAULT_CALIBRATION_REPS)]
    reps: usize,
    #[arg(long, default_value_t = mosum::DEFAULT_CALIBRATION_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 23.0)]
    freq: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated pixel counts
    #[arg(long, value_delimiter = ',', required = true)]
    m_list: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N", default_value_t = 200)]
    n_obs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            EXIT_NUMERICAL
        } else if e.is_data() {
            EXIT_DATA
        } else {
            EXIT_USAGE
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: EXIT_USAGE, message }
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure { code: EXIT_DATA, message: format!("{}: {e}", path.display()) }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Normal output goes to `stdout`,
/// diagnostics to `stderr`.
pub fn dispatch<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };

    let pool = match cli.threads {
        Some(0) => {
            let _ = writeln!(stderr, "error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };

    let mut buffered: Vec<u8> = Vec::new();
    let outcome = pool.install(|| match cli.command {
        Command::Generate(a) => run_generate(a, &mut buffered),
        Command::Monitor(a) => run_monitor(a, &mut buffered),
        Command::CriticalValue(a) => run_critical_value(a, &mut buffered),
        Command::Bench(a) => run_bench(a, &mut buffered),
    });
    let _ = stdout.write_all(&buffered);
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn monitor_config(model: &ModelArgs, lambda: Option<f64>, backend: Backend) -> Result<MonitorConfig, Failure> {
    let config = MonitorConfig {
        history: model.n,
        bandwidth: model.h,
        harmonics: model.k,
        freq: model.freq,
        alpha: model.alpha,
        lambda,
        backend,
        ..Default::default()
    };
    config.validate().map_err(|e| usage(format!("{e} (check --n, --h, --k, --freq, --alpha, --lambda)")))?;
    Ok(config)
}

fn create(path: &std::path::Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn run_generate(a: GenerateArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let spec = SynthSpec {
        n_pixels: a.m,
        n_obs: a.n_obs,
        freq: a.freq,
        noise_std: a.noise_std,
        break_mag: a.break_mag,
        break_frac: a.break_frac,
        break_ratio: a.break_ratio,
        seed: a.seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let (stack, truth) = synth::generate(&spec)?;
    let bytes = dataio::write_stack(&stack, create(&a.out)?)?;
    let breaks = truth.iter().filter(|&&b| b).count();
    let _ = writeln!(
        stdout,
        "wrote {} ({bytes} bytes): N={} m={} break series={breaks}",
        a.out.display(),
        stack.n_obs(),
        stack.n_pixels()
    );
    Ok(())
}

fn run_monitor(a: MonitorArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let backend = match a.backend {
        BackendArg::Fused => Backend::Fused,
        BackendArg::Naive => Backend::Naive,
    };
    let config = monitor_config(&a.model, a.lambda, backend)?;
    let file = File::open(&a.input).map_err(|e| io_failure(&a.input, e))?;
    let stack = dataio::read_stack(BufReader::new(file))?;
    config
        .validate_for(stack.n_obs())
        .map_err(|e| usage(format!("{e} (--n against input with N = {})", stack.n_obs())))?;

    let (map, timings) = engine::profile_run(&stack, &config)?;
    dataio::write_break_map(&map, create(&a.out)?)?;

    let invalid = map.valid.iter().filter(|&&v| !v).count();
    let _ = writeln!(stdout, "lambda: {:.6}", map.lambda);
    let _ = writeln!(stdout, "breaks: {} of {} pixels ({invalid} invalid)", map.detected_count(), map.len());
    if a.profile {
        let t = timings;
        let _ = writeln!(stdout, "ingest: {:.6} s", t.ingest);
        let _ = writeln!(stdout, "model: {:.6} s", t.model);
        let _ = writeln!(stdout, "predictions: {:.6} s", t.predictions);
        let _ = writeln!(stdout, "residuals: {:.6} s", t.residuals);
        let _ = writeln!(stdout, "mosum: {:.6} s", t.mosum);
        let _ = writeln!(stdout, "breaks: {:.6} s", t.breaks);
        let _ = writeln!(stdout, "total: {:.6} s", t.total);
    }
    Ok(())
}

fn run_critical_value(a: CriticalValueArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let req = CriticalValueRequest {
        alpha: a.alpha,
        h_frac: a.h_frac,
        horizon: a.horizon,
        n_sim: a.n_sim,
        reps: a.reps,
        seed: a.seed,
        harmonics: a.k,
        freq: a.freq,
    };
    req.validate().map_err(|e| usage(e.to_string()))?;
    let lambda = mosum::critical_value(&req)?;
    let _ = writeln!(stdout, "{lambda:.6}");
    Ok(())
}

fn run_bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    if a.m_list.iter().any(|&m| m == 0) {
        return Err(usage("--m-list entries must be positive".into()));
    }
    let config = monitor_config(&a.model, None, Backend::Fused)?;
    config
        .validate_for(a.n_obs)
        .map_err(|e| usage(format!("{e} (check --n against --N)")))?;
    let template = SynthSpec {
        n_obs: a.n_obs,
        freq: a.model.freq,
        seed: a.seed,
        ..Default::default()
    };
    let rows = synth::bench_scaling(&a.m_list, &config, &template)?;
    synth::write_bench_csv(&rows, create(&a.out)?)?;
    for r in &rows {
        let _ = writeln!(stdout, "m={} total={:.6} s", r.n_pixels, r.timings.total);
    }
    Ok(())
}
