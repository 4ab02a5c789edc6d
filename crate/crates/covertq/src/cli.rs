use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use covertq_core::analytics::{
    c0, c0_finite, detectability, expansion, expected_rho, ii_quantities, iia_c0, iia_cycle_counts, iia_f, t_w,
    BatchPMF, Statistic, SystemParams, C0,
};
use covertq_core::detect::{decide, Detector, Llr};
use covertq_core::rng::stream;
use covertq_core::simqueue::run;
use serde::Serialize;
use serde_json::json;

use crate::config::{load_config, parse_json_arg, DetectorJson, PolicyJson, StatisticJson};
use crate::error::{AppError, AppResult};
use crate::experiments::{sweep_from_spec, verify, write_csv, Check, ScalingSpec, VerifyOptions};
use crate::trace::{read_trace, write_trace};

#[derive(Debug, Parser)]
#[command(name = "covertq", version, about = "Covert cycle stealing in an M/G/1 queue")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate busy periods and write a JSON-lines trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Policy JSON, inline or a file path.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a detector over a recorded trace.
    Detect {
        #[arg(long)]
        config: PathBuf,
        /// Detector JSON, inline or a file path.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        trace: PathBuf,
        /// Seed for the random-job pick.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate P_E over an n grid and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Scaling spec JSON, inline or a file path.
        #[arg(long)]
        scaling: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an analytic quantity.
    Analytics {
        quantity: Quantity,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_enum, default_value = "yv")]
        statistic: StatisticArg,
        /// Batch pmf `[Q(0), Q(1), ...]` for II-A quantities.
        #[arg(long)]
        batch: Option<String>,
        #[arg(long)]
        pi_j: Option<f64>,
        /// Print the bare number; a divergent verdict exits with code 4.
        #[arg(long)]
        scalar: bool,
    },
    /// Compare analytic values with simulation or quadrature.
    Verify {
        which: Check,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<String>,
        /// Busy periods (cycles) to simulate.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Quantity {
    #[value(name = "t_w")]
    TW,
    Detectability,
    C0,
    C0Finite,
    ExpectedRho,
    Expansion,
    Ii,
    IiaF,
    IiaC0,
    CycleCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum StatisticArg {
    Yv,
    YOnly,
    IiYv,
    IiYOnly,
}

impl From<StatisticArg> for Statistic {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Yv => Statistic::YV,
            StatisticArg::YOnly => Statistic::YOnly,
            StatisticArg::IiYv => Statistic::IIYV,
            StatisticArg::IiYOnly => Statistic::IIYOnly,
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    emit(&text)
}

/// Write one line to stdout; a closed pipe is not an error.
fn emit(text: &str) -> AppResult<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn need<T>(v: Option<T>, flag: &str) -> AppResult<T> {
    v.ok_or_else(|| AppError::Config(format!("--{flag} is required for this quantity")))
}

fn batch_arg(batch: Option<&str>) -> AppResult<BatchPMF> {
    match batch {
        Some(b) => Ok(BatchPMF::new(parse_json_arg::<Vec<f64>>(b)?)?),
        None => Ok(BatchPMF::point(1)),
    }
}

fn c0_output(v: C0, scalar: bool) -> AppResult<()> {
    match (v, scalar) {
        (C0::Finite { value }, true) => {
            emit(&value.to_string())
        }
        (C0::Divergent { .. }, true) => Err(AppError::Divergent("c0")),
        (v, false) => print_json(&v),
    }
}

fn scalar_or_json<T: Serialize>(scalar: bool, value: f64, full: &T) -> AppResult<()> {
    if scalar {
        emit(&value.to_string())
    } else {
        print_json(full)
    }
}

#[allow(clippy::too_many_arguments)]
fn analytics(
    quantity: Quantity,
    params: &SystemParams,
    q: Option<f64>,
    n: Option<u64>,
    statistic: Statistic,
    batch: Option<&str>,
    pi_j: Option<f64>,
    scalar: bool,
) -> AppResult<()> {
    match quantity {
        Quantity::TW => {
            let r = t_w(params, need(q, "q")?, need(n, "n")?)?;
            scalar_or_json(scalar, r.value, &r)
        }
        Quantity::Detectability => {
            let r = detectability(params, need(q, "q")?, need(n, "n")?, statistic)?;
            scalar_or_json(scalar, r.pe_lower, &r)
        }
        Quantity::C0 => c0_output(c0(params), scalar),
        Quantity::C0Finite => {
            let f = c0_finite(params)?;
            print_json(&f)
        }
        Quantity::ExpectedRho => {
            let v = expected_rho(params)?;
            scalar_or_json(scalar, v, &json!({ "expected_rho": v }))
        }
        Quantity::Expansion => {
            let r = expansion(need(q, "q")?, params.r)?;
            scalar_or_json(scalar, r.mean_sqrt_xi_exact, &r)
        }
        Quantity::Ii => {
            let q = need(q, "q")?;
            let ii = ii_quantities(params, q)?;
            let t = ii.t_plus(need(n, "n")? as f64);
            scalar_or_json(scalar, t, &json!({ "q": q, "t_plus": t }))
        }
        Quantity::IiaF => {
            let v = iia_f(params, need(q, "q")?, &batch_arg(batch)?, need(pi_j, "pi-j")?)?;
            scalar_or_json(scalar, v, &json!({ "f": v }))
        }
        Quantity::IiaC0 => c0_output(iia_c0(params, &batch_arg(batch)?, need(pi_j, "pi-j")?)?, scalar),
        Quantity::CycleCounts => {
            let r = iia_cycle_counts(params, need(q, "q")?, &batch_arg(batch)?)?;
            scalar_or_json(scalar, r.e_nw, &r)
        }
    }
}

pub fn execute(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Simulate { config, policy, n, seed, out } => {
            let params = load_config(&config)?.params()?;
            let policy = parse_json_arg::<PolicyJson>(&policy)?.build()?;
            let r = run(&params, &policy, n, seed)?;
            write_trace(&r, BufWriter::new(File::create(&out)?))?;
            print_json(&json!({
                "seed": r.seed,
                "n_bps": r.bps.len(),
                "alice_inserted": r.alice_inserted,
                "alice_served": r.alice_served,
                "willie_served": r.willie_served,
                "wall_time_simulated": r.wall_time_simulated,
            }))
        }
        Command::Detect { config, spec, trace, seed } => {
            let params = load_config(&config)?.params()?;
            let spec_json = parse_json_arg::<DetectorJson>(&spec)?;
            let det = Detector::new(&spec_json.build()?, &params)?;
            let bps = read_trace(BufReader::new(File::open(&trace)?))?;
            let mut rng = stream(seed, &[]);
            let mut llr = Llr::default();
            for bp in &bps {
                det.observe(bp, &mut rng, &mut llr)?;
            }
            let decision = decide(llr.value)?;
            if llr.clamped > 0 {
                eprintln!("warning: {} ratios clamped at the floor", llr.clamped);
            }
            let statistic: StatisticJson = spec_json.statistic;
            print_json(&json!({
                "statistic": statistic,
                "n_bps": bps.len(),
                "llr": llr.value,
                "clamped": llr.clamped,
                "decision": format!("{decision:?}"),
            }))
        }
        Command::Sweep { config, scaling, out } => {
            let params = load_config(&config)?.params()?;
            let spec: ScalingSpec = parse_json_arg(&scaling)?;
            let rows = sweep_from_spec(&params, &spec)?;
            let mut f = BufWriter::new(File::create(&out)?);
            write_csv(&rows, &mut f)?;
            f.flush()?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Analytics { quantity, config, q, n, statistic, batch, pi_j, scalar } => {
            let params = load_config(&config)?.params()?;
            analytics(quantity, &params, q, n, statistic.into(), batch.as_deref(), pi_j, scalar)
        }
        Command::Verify { which, config, policy, n, seed } => {
            let params = load_config(&config)?.params()?;
            let policy = policy.map(|p| parse_json_arg::<PolicyJson>(&p)?.build()).transpose()?;
            if let Some(p) = &policy {
                p.validate(&params)?;
            }
            let mut opts = VerifyOptions { seed, ..VerifyOptions::default() };
            if let Some(n) = n {
                opts.n_bps = n;
            }
            print_json(&verify(&params, policy.as_ref(), which, opts))
        }
    }
}

/// Parse arguments, run, and map errors onto exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
