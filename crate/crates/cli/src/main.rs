//! `bench`: FLOP counts, timed sweeps against a dense baseline, property
//! suites and operator dumps for Monarch convolutions.

mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use m2_core::field::{exact_root, FieldKind};
use m2_core::monarch::{dense_flop_count, flop_count, monarch_dft, monarch_idft, FlopOp, MonarchFactorization};
use m2_core::report::{emit_report, nearest_square, sweep, ReportFormat, SweepRow};
use m2_core::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TIMING_NOTE: &str = "\
Timing methodology: each measurement runs 3 untimed warmup iterations and
then 10 timed iterations; the median wall-clock time is reported in
milliseconds. The dense baseline is an N×N complex DFT matvec from a twiddle
table; the Monarch side is a full convolution (forward Monarch DFT, pointwise
product with a precomputed kernel spectrum, inverse Monarch DFT). FLOP
columns are closed-form counts (a complex multiply-add is 8 real FLOPs) and
do not depend on the machine.";

#[derive(Parser, Debug)]
#[command(name = "bench", version, about = "Monarch convolution FLOP counts, timings and checks", after_help = TIMING_NOTE)]
struct Cli {
    /// Worker threads for operator-internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form FLOPs of an order-p Monarch convolution and of a dense matvec.
    Flops {
        /// Sequence length; must be b^p for an integer b.
        #[arg(long)]
        n: usize,
        /// Monarch order.
        #[arg(long, default_value_t = 2)]
        p: usize,
    },
    /// FLOP counts and median timings over a list of sizes.
    #[command(after_help = TIMING_NOTE)]
    Sweep {
        /// Comma-separated perfect-square sizes.
        #[arg(long, value_delimiter = ',', default_value = "1024,4096,16384")]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report FLOP counts only; skip the timed runs.
        #[arg(long)]
        no_timing: bool,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite; exits 0 when every check passes.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serialize a Monarch operator to the binary factor format.
    Dump {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, value_enum, default_value_t = Kind::Dft)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Causal,
    Dft,
    Real,
    Multivar,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    /// The Monarch DFT (complex, order 2).
    Dft,
    /// The Monarch inverse DFT (complex, order 2).
    Idft,
    /// Random real factors of the given order.
    Random,
    /// Random complex factors of the given order.
    RandomComplex,
}

fn check_square(n: usize) -> Result<()> {
    if exact_root(n, 2).is_none() {
        bail!("size {n} is not a perfect square; nearest valid size is {}", nearest_square(n));
    }
    Ok(())
}

fn check_power(n: usize, p: usize) -> Result<usize> {
    if p == 0 {
        bail!("order p must be at least 1");
    }
    if p == 2 {
        check_square(n)?;
    }
    exact_root(n, p as u32).with_context(|| format!("size {n} is not a perfect {p}-th power"))
}

fn flops(n: usize, p: usize) -> Result<()> {
    let b = check_power(n, p)?;
    let m2 = flop_count(n, p, FlopOp::Conv)?;
    let dense = dense_flop_count(n);
    println!("n = {n}, p = {p}, block size = {b}");
    println!("m2_conv_flops = {m2}");
    println!("dense_flops = {dense}");
    println!("ratio = {}", dense as f64 / m2 as f64);
    Ok(())
}

fn run_sweep(sizes: &[usize], format: Format, seed: u64, timed: bool, out: Option<PathBuf>) -> Result<()> {
    for &n in sizes {
        check_square(n)?;
    }
    let rows: Vec<SweepRow> = sweep(sizes, seed, timed)?;
    for r in &rows {
        if let (Some(d), Some(m)) = (r.dense_ms, r.m2_ms) {
            if r.size >= 16384 && m >= d {
                eprintln!(
                    "warning: at N = {} the Monarch convolution ({m:.3} ms) was not faster than the dense matvec ({d:.3} ms)",
                    r.size
                );
            }
        }
    }
    let fmt = match format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    let bytes = emit_report(&rows, fmt);
    match out {
        Some(path) => std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn dump(n: usize, p: usize, kind: Kind, seed: u64, out: PathBuf) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (field, recipe) = match kind {
        Kind::Dft | Kind::Idft => {
            if p != 2 {
                bail!("--kind {kind:?} is built at order 2; got --p {p}");
            }
            check_square(n)?;
            let m = if matches!(kind, Kind::Dft) { monarch_dft(n)? } else { monarch_idft(n)? };
            m.save(&out)?;
            (FieldKind::Complex, m.recipe())
        }
        Kind::Random => {
            check_power(n, p)?;
            let m = MonarchFactorization::<f64>::random(n, p, &mut rng)?;
            m.save(&out)?;
            (FieldKind::Real, m.recipe())
        }
        Kind::RandomComplex => {
            check_power(n, p)?;
            let m = MonarchFactorization::<Complex64>::random(n, p, &mut rng)?;
            m.save(&out)?;
            (FieldKind::Complex, m.recipe())
        }
    };
    println!("wrote {} (n = {n}, p = {p}, field = {field:?}, recipe = {recipe:?})", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Flops { n, p } => flops(n, p)?,
        Command::Sweep { sizes, format, seed, no_timing, out } => run_sweep(&sizes, format, seed, !no_timing, out)?,
        Command::Verify { suite, seed } => {
            return Ok(if verify::run(suite, seed)? { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Dump { n, p, kind, seed, out } => dump(n, p, kind, seed, out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Usage errors (including unknown subcommands) exit with status 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
