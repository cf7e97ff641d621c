//! `qfusion` command-line driver.
//!
//! Exit status: 0 on success, 2 when the input is invalid, 3 when a detector
//! is degenerate (outputs are still written, with NaN rows for it), 1 for
//! anything else.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qfusion::design::{
    design, lqu_calibration, run_design_table, threshold_sweep, DesignError, DesignKind, DesignResult, GridRange,
    Optimizer, PsoParams,
};
use qfusion::harness::{fisher_table, sha256_hex, Experiment, ExperimentConfig, HarnessError, RunManifest, RunOptions};
use qfusion::{ChannelError, DetectorError, NumericsError, QuantizerError, QuantizerKind, QuantizerSpec, SignalError};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "qfusion", version, about = "Quantized LMPT fusion: design, analysis and Monte Carlo")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design thresholds for one quantizer and write them as JSON.
    Design(DesignArgs),
    /// Whole-network Fisher information of each detector in a config.
    Fisher(FisherArgs),
    /// ARE table over bit depths and crossover probabilities.
    Are(AreArgs),
    /// ROC: detection versus false-alarm probability.
    Roc(RunArgs),
    /// Detection probability versus number of sensors.
    PdVsM(RunArgs),
    /// Detection probability versus SNR.
    PdVsSnr(RunArgs),
    /// Detection under a misassumed channel crossover probability.
    Mismatch(RunArgs),
    /// Parse and check a config or quantizer file without running it.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Pso,
    Grid,
    Lqu,
    Fixed,
}

#[derive(Args, Debug)]
struct PsoArgs {
    /// Seed for the particle swarm.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    swarm: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

impl PsoArgs {
    fn params(&self) -> PsoParams {
        PsoParams {
            swarm_size: self.swarm,
            iterations: self.iterations,
            restarts: self.restarts,
            seed: self.seed,
            ..PsoParams::default()
        }
    }
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Quantizer kind: rq or lq.
    #[arg(long)]
    kind: QuantizerKind,
    /// Bits per sensor.
    #[arg(long, default_value_t = 1)]
    q: u32,
    /// Channel crossover probability.
    #[arg(long, default_value_t = 0.0)]
    pe: f64,
    /// Noise standard deviation of the sensor measurement.
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
    #[arg(long, value_enum, default_value_t = Method::Pso)]
    method: Method,
    /// Grid step in units of sigma_w (grid method and --sweep).
    #[arg(long, default_value_t = 0.001)]
    step: f64,
    /// Span of the uniform LQ grid in units of sigma_w.
    #[arg(long, default_value_t = 3.0)]
    range_factor: f64,
    /// Thresholds for the fixed method, comma separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[command(flatten)]
    pso: PsoArgs,
    /// Instead of designing, write the 1-bit normalized FI over
    /// START:STOP:STEP (in units of sigma_w) as CSV.
    #[arg(long, value_name = "START:STOP:STEP", allow_hyphen_values = true)]
    sweep: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FisherArgs {
    #[arg(long)]
    config: PathBuf,
    /// Sparsity levels; defaults to 0 and the configured p.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AreArgs {
    /// Columns: rq, lq, lqu.
    #[arg(long, value_delimiter = ',', default_value = "rq,lq,lqu")]
    kind: Vec<DesignKind>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    q: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1,0.2")]
    pe: Vec<f64>,
    /// Span of the uniform LQ grid in units of sigma_w.
    #[arg(long, default_value_t = 3.0)]
    range_factor: f64,
    #[command(flatten)]
    pso: PsoArgs,
    /// Instead of the table, find the uniform-grid spans that reach this ARE
    /// for each (q, pe).
    #[arg(long, value_name = "TARGET")]
    calibrate_lqu: Option<f64>,
    /// Span interval scanned by --calibrate-lqu.
    #[arg(long, value_name = "LO:HI", default_value = "0.5:8")]
    span: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true)]
struct ValidateArgs {
    /// Experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Quantizer spec or design result.
    #[arg(long)]
    spec: Option<PathBuf>,
}

/// Failure classes that map to dedicated exit codes.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Degenerate(Vec<String>),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Invalid(m) => write!(f, "{m}"),
            Failure::Degenerate(labels) => {
                write!(f, "degenerate detector(s): {} (zero Fisher information at p = 0)", labels.join(", "))
            }
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Invalid(_) => 2,
                Failure::Degenerate(_) => 3,
            };
        }
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            if h.is_degenerate() {
                return 3;
            }
            if h.is_validation() {
                return 2;
            }
            if let HarnessError::Io { .. } = h {
                continue;
            }
            return 1;
        }
        if let Some(d) = cause.downcast_ref::<DetectorError>() {
            return if matches!(d, DetectorError::Degenerate) { 3 } else { 2 };
        }
        if cause.is::<DesignError>()
            || cause.is::<QuantizerError>()
            || cause.is::<ChannelError>()
            || cause.is::<SignalError>()
            || cause.is::<NumericsError>()
            || cause.is::<serde_json::Error>()
        {
            return 2;
        }
    }
    1
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Failure::Invalid(msg.into()).into()
}

fn parse_range(text: &str, parts: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("cannot parse range '{text}': {e}")))?;
    if v.len() != parts {
        return Err(invalid(format!("range '{text}' needs {parts} colon-separated numbers")));
    }
    Ok(v)
}

/// Output sink: a file (with a manifest beside it) or stdout.
fn write_output(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn manifest(out: Option<&Path>, command: &str, seed: u64, hash: String, trials: Option<usize>) -> Result<()> {
    if let Some(path) = out {
        let m = RunManifest::new(command, seed, hash, trials, vec![path.display().to_string()]);
        let mpath = RunManifest::path_for(path);
        m.write(&mpath)?;
        log::info!("wrote {} and {}", path.display(), mpath.display());
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<ExperimentConfig>().with_context(|| format!("in {}", path.display()))
}

fn cmd_design(a: &DesignArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.pe) {
        return Err(invalid(format!("pe {} is outside [0, 1)", a.pe)));
    }
    let params = json!({
        "kind": a.kind, "q": a.q, "pe": a.pe, "sigma_w": a.sigma_w, "method": format!("{:?}", a.method),
        "step": a.step, "range_factor": a.range_factor, "thresholds": a.thresholds,
        "pso": a.pso.params(), "sweep": a.sweep,
    });
    let hash = sha256_hex(params.to_string().as_bytes());
    if let Some(range) = &a.sweep {
        let r = parse_range(range, 3)?;
        if a.q != 1 {
            return Err(invalid("--sweep evaluates 1-bit quantizers; use --q 1"));
        }
        let pts = threshold_sweep(a.kind, a.pe, a.sigma_w, GridRange { start: r[0], stop: r[1], step: r[2] })?;
        write_output(a.out.as_deref(), |w| {
            writeln!(w, "tau,normalized_fi")?;
            for (x, v) in pts {
                writeln!(w, "{x},{v}")?;
            }
            Ok(())
        })?;
        return manifest(a.out.as_deref(), "design", a.pso.seed, hash, None);
    }
    let optimizer = match a.method {
        Method::Pso => Optimizer::Pso(a.pso.params()),
        Method::Grid => Optimizer::Grid { step: a.step },
        Method::Lqu => {
            if a.kind != QuantizerKind::Lq {
                return Err(invalid("the uniform grid method designs LQ quantizers; use --kind lq"));
            }
            Optimizer::Lqu { range_factor: a.range_factor }
        }
        Method::Fixed => Optimizer::Fixed { thresholds: a.thresholds.clone() },
    };
    let result = design(a.kind, a.q, a.pe, a.sigma_w, &optimizer)?;
    let text = serde_json::to_string_pretty(&result)?;
    write_output(a.out.as_deref(), |w| Ok(writeln!(w, "{text}")?))?;
    manifest(a.out.as_deref(), "design", a.pso.seed, hash, None)?;
    if result.is_degenerate() {
        return Err(Failure::Degenerate(vec![format!("{}-bit {}", a.q, a.kind)]).into());
    }
    Ok(())
}

fn cmd_fisher(a: &FisherArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let ps = if a.p.is_empty() { vec![0.0, cfg.system.p] } else { a.p.clone() };
    let table = fisher_table(&cfg, &ps)?;
    write_output(a.out.as_deref(), |w| Ok(table.write_csv(w)?))?;
    let hash = sha256_hex(json!({ "config": cfg.hash(), "p": ps }).to_string().as_bytes());
    manifest(a.out.as_deref(), "fisher", cfg.seed, hash, None)?;
    if !table.degenerate.is_empty() {
        return Err(Failure::Degenerate(table.degenerate).into());
    }
    Ok(())
}

fn thresholds_field(spec: &QuantizerSpec) -> String {
    spec.thresholds().iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
}

fn cmd_are(a: &AreArgs) -> Result<()> {
    if a.pe.iter().any(|pe| !(0.0..1.0).contains(pe)) {
        return Err(invalid("every pe must lie in [0, 1)"));
    }
    let span = parse_range(&a.span, 2)?;
    let params = a.pso.params();
    let hash = sha256_hex(
        json!({
            "kind": a.kind.iter().map(|k| k.to_string()).collect::<Vec<_>>(), "q": a.q, "pe": a.pe,
            "range_factor": a.range_factor, "pso": params, "calibrate_lqu": a.calibrate_lqu, "span": a.span,
        })
        .to_string()
        .as_bytes(),
    );
    if let Some(target) = a.calibrate_lqu {
        let mut lines = Vec::new();
        for &q in &a.q {
            for &pe in &a.pe {
                let roots = lqu_calibration(q, pe, target, (span[0], span[1]))?;
                if roots.is_empty() {
                    log::warn!("q={q} pe={pe}: no span in [{}, {}] reaches ARE {target}", span[0], span[1]);
                }
                for r in roots {
                    lines.push(format!("{q},{pe},{target},{r}"));
                }
            }
        }
        write_output(a.out.as_deref(), |w| {
            writeln!(w, "q,pe,target_are,range_factor")?;
            for l in &lines {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
        return manifest(a.out.as_deref(), "are", a.pso.seed, hash, None);
    }
    let rows = run_design_table(&a.q, &a.pe, &a.kind, &params, a.range_factor)?;
    write_output(a.out.as_deref(), |w| {
        writeln!(w, "kind,q,pe,are,normalized_fi,thresholds")?;
        for r in &rows {
            let are = if r.result.are.is_finite() { r.result.are.to_string() } else { "inf".into() };
            writeln!(w, "{},{},{},{are},{},{}", r.kind, r.q, r.pe, r.result.normalized_fi, thresholds_field(&r.result.spec))?;
        }
        Ok(())
    })?;
    manifest(a.out.as_deref(), "are", a.pso.seed, hash, None)?;
    let degenerate: Vec<String> =
        rows.iter().filter(|r| r.result.is_degenerate()).map(|r| format!("{} q={} pe={}", r.kind, r.q, r.pe)).collect();
    if !degenerate.is_empty() {
        return Err(Failure::Degenerate(degenerate).into());
    }
    Ok(())
}

fn cmd_run(experiment: Experiment, a: &RunArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if a.threads == Some(0) {
        return Err(invalid("--threads must be at least 1"));
    }
    let result = experiment.run(&cfg, RunOptions { threads: a.threads })?;
    write_output(a.out.as_deref(), |w| Ok(result.write_csv(w)?))?;
    manifest(a.out.as_deref(), experiment.name(), cfg.seed, cfg.hash(), Some(cfg.trials))?;
    if !result.degenerate.is_empty() {
        return Err(Failure::Degenerate(result.degenerate).into());
    }
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    if let Some(path) = &a.config {
        let cfg = load_config(path)?;
        println!(
            "{}: ok ({} detector(s), sweep {} over {} point(s), {} trials)",
            path.display(),
            cfg.detector_labels().len(),
            cfg.sweep.axis,
            cfg.sweep.values.len(),
            cfg.trials
        );
    }
    if let Some(path) = &a.spec {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let spec = match serde_json::from_str::<DesignResult>(&text) {
            Ok(r) => r.spec,
            Err(_) => serde_json::from_str::<QuantizerSpec>(&text).with_context(|| format!("in {}", path.display()))?,
        };
        println!("{}: ok ({}-bit {}, {} thresholds)", path.display(), spec.bits(), spec.kind(), spec.thresholds().len());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Fisher(a) => cmd_fisher(a),
        Command::Are(a) => cmd_are(a),
        Command::Roc(a) => cmd_run(Experiment::Roc, a),
        Command::PdVsM(a) => cmd_run(Experiment::PdVsSensors, a),
        Command::PdVsSnr(a) => cmd_run(Experiment::PdVsSnr, a),
        Command::Mismatch(a) => cmd_run(Experiment::Mismatch, a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
