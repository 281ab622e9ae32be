//! Batch front end. Every command reads a system document (JSON), runs one
//! computation and writes a result document:
//!
//! ```json
//! { "command": "...", "version": "...", "seed": 1, "inputs": {...},
//!   "payload": {...}, "wall_clock_seconds": 0.1 }
//! ```
//!
//! The payload is deterministic for fixed inputs and seed; the wall clock is
//! kept outside it. Tabular payloads are also written as CSV with `--csv`.
//!
//! Exit codes: 0 success, 1 validation error, 2 numeric-domain error,
//! 3 acceptance failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{json, Value};

use crate::acceptance::{run_criterion, AcceptanceOptions};
use crate::bio::{
    capacity, correct_decoding_envelope, exponent_report, moderate_deviations_constant,
    one_shot_achievability, one_shot_converse, second_order_rate, BioSystem,
};
use crate::error::{Error, Result};
use crate::exponent::{pc_upper_bound, ExponentConfig, ExponentSolver};
use crate::prob::{mutual_information, SystemDoc, SystemTriple};
use crate::region::{
    boundary_trace, corner_point, exponent_upper_bound, hyperplane_table, membership_sh,
    membership_with, AuxScheme, RateTriple, RegionConfig,
};
use crate::sim::{
    empirical_exponent, estimate_pe, DecayTarget, DecoderSpec, EncoderSpec, SimConfig, SimMode,
};

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub const DEFAULT_SEED: u64 = 20241014;

#[derive(Debug, Parser, Serialize)]
#[command(name = "contentid", version, about = "Content identification with lossy recovery: regions, exponents, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed for every randomized step.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Result document path; stdout when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Also write the tabular part of the payload as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// JSON document `{"region": {...}, "exponent": {...}}` overriding search budgets.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SystemArg {
    /// System document: `{"px": [...], "pyx": [[...]], "pzx": [[...]], "distortion": [[...]]}`.
    #[arg(long)]
    pub system: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TripleArgs {
    #[arg(long)]
    pub ri: f64,
    #[arg(long)]
    pub rc: f64,
    #[arg(long)]
    pub d: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderArg {
    Ml,
    Stochastic,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderArg {
    Identity,
    QuantizeBin,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Auto,
    Explicit,
    Grouped,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitArg {
    Correct,
    Error,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Alphabets, information quantities and corner points of a system.
    Info {
        #[command(flatten)]
        system: SystemArg,
    },
    /// Correct-decoding exponents of identification without compression.
    BioExponent {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Blocklengths for the finite-n envelope.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Capacity, dispersion, second-order and one-shot bounds.
    BioAsymptotics {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.5, 0.7])]
        eps: Vec<f64>,
        /// Rate for the one-shot bounds.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Membership of a rate triple, plus an optional boundary trace.
    Region {
        #[command(flatten)]
        system: SystemArg,
        #[command(flatten)]
        triple: TripleArgs,
        /// Trace the `(Rⁱ, Rᶜ)` frontier at this distortion.
        #[arg(long)]
        trace_d: Option<f64>,
        #[arg(long, default_value_t = 21)]
        trace_points: usize,
    },
    /// Strong-converse rate function and its tilted lower bound.
    ExponentF {
        #[command(flatten)]
        system: SystemArg,
        #[command(flatten)]
        triple: TripleArgs,
        /// Blocklengths for the correct-decoding bound `7e^{-nF}`.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Divergence upper bound on the excess-distortion exponent.
    #[command(alias = "theorem3-bound")]
    DivergenceBound {
        #[command(flatten)]
        system: SystemArg,
        #[command(flatten)]
        triple: TripleArgs,
    },
    /// Monte Carlo of enrollment, identification and recovery.
    Simulate {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Number of enrolled items.
        #[arg(long, conflicts_with = "id_rate")]
        items: Option<f64>,
        /// Items `round(e^{n·rate})` per blocklength.
        #[arg(long)]
        id_rate: Option<f64>,
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = DecoderArg::Ml)]
        decoder: DecoderArg,
        #[arg(long, value_enum, default_value_t = EncoderArg::Identity)]
        encoder: EncoderArg,
        #[arg(long)]
        codebook_rate: Option<f64>,
        #[arg(long)]
        bin_rate: Option<f64>,
        /// Test channel rows as JSON, e.g. `[[0.8,0.2],[0.2,0.8]]`.
        #[arg(long)]
        test_channel: Option<String>,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        /// Fit a decay exponent across the blocklengths (needs at least three).
        #[arg(long, value_enum)]
        fit: Option<FitArg>,
    },
    /// Acceptance suite; exit 3 unless every criterion passes.
    Verify {
        #[arg(long, value_delimiter = ',', default_values_t = (1..=9u8).collect::<Vec<_>>())]
        criteria: Vec<u8>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Info { .. } => "info",
            Command::BioExponent { .. } => "bio-exponent",
            Command::BioAsymptotics { .. } => "bio-asymptotics",
            Command::Region { .. } => "region",
            Command::ExponentF { .. } => "exponent-f",
            Command::DivergenceBound { .. } => "divergence-bound",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
        }
    }

    fn system_path(&self) -> Option<&Path> {
        match self {
            Command::Info { system }
            | Command::BioExponent { system, .. }
            | Command::BioAsymptotics { system, .. }
            | Command::Region { system, .. }
            | Command::ExponentF { system, .. }
            | Command::DivergenceBound { system, .. }
            | Command::Simulate { system, .. } => Some(&system.system),
            Command::Verify { .. } => None,
        }
    }
}

/// Search budget overrides; absent fields keep their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub region: RegionConfig,
    pub exponent: ExponentConfig,
}

/// Emitted result document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDoc {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Value,
    pub payload: Value,
    pub wall_clock_seconds: f64,
}

/// Payload plus an optional table for CSV output.
struct Outcome {
    payload: Value,
    table: Option<Table>,
    exit: i32,
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Outcome {
    fn plain(payload: Value) -> Self {
        Outcome {
            payload,
            table: None,
            exit: 0,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
    })
}

pub fn load_system(path: &Path) -> Result<(SystemDoc, SystemTriple)> {
    let doc: SystemDoc = read_json(path)?;
    let sys = SystemTriple::from_doc(&doc)?;
    Ok((doc, sys))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable payload")
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn info(sys: &SystemTriple) -> Result<Outcome> {
    let link = |bio: BioSystem| {
        json!({
            "c_bio": capacity(&bio),
            "variance": bio.variance(),
        })
    };
    let enrollment = BioSystem::new(sys.px().clone(), sys.pyx().clone())?;
    let identification = BioSystem::from_triple(sys)?;
    let corners = json!({
        "identity": corner_point(sys, &AuxScheme::identity(sys))?,
        "constant": corner_point(sys, &AuxScheme::constant(sys))?,
    });
    Ok(Outcome::plain(json!({
        "alphabets": {"x": sys.nx(), "y": sys.ny(), "z": sys.nz(), "xhat": sys.nxhat()},
        "d_plus": sys.d_plus(),
        "i_xy": mutual_information(sys.px(), sys.pyx())?,
        "i_xz": mutual_information(sys.px(), sys.pzx())?,
        "i_yz": capacity(&identification),
        "enrollment_link": link(enrollment),
        "identification_link": link(identification),
        "corners": corners,
    })))
}

fn bio_exponent(sys: &SystemTriple, rates: &[f64], ns: &[usize]) -> Result<Outcome> {
    let bio = BioSystem::from_triple(sys)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &r in rates {
        let rep = exponent_report(&bio, r)?;
        let mut env = Vec::new();
        for &n in ns {
            let (lo, hi) = correct_decoding_envelope(&bio, r, n)?;
            env.push(json!({"n": n, "lower": lo, "upper": hi}));
            table.push(vec![num(r), n.to_string(), num(rep.e_lower), num(rep.e_upper), num(lo), num(hi)]);
        }
        if ns.is_empty() {
            table.push(vec![num(r), String::new(), num(rep.e_lower), num(rep.e_upper), String::new(), String::new()]);
        }
        rows.push(json!({"report": rep, "envelope": env}));
    }
    Ok(Outcome {
        payload: json!({"capacity": capacity(&bio), "rates": rows}),
        table: Some(Table {
            header: vec!["rate", "n", "e_lower", "e_upper", "pc_lower", "pc_upper"],
            rows: table,
        }),
        exit: 0,
    })
}

fn bio_asymptotics(sys: &SystemTriple, n: usize, eps: &[f64], rate: Option<f64>) -> Result<Outcome> {
    let bio = BioSystem::from_triple(sys)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &e in eps {
        let log_m = second_order_rate(&bio, e, n)?;
        rows.push(json!({"eps": e, "log_items": log_m, "rate": log_m / n as f64}));
        table.push(vec![num(e), num(log_m), num(log_m / n as f64)]);
    }
    let one_shot = match rate {
        Some(r) => {
            let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.004).collect();
            let mut conv = f64::INFINITY;
            let mut ach: f64 = 0.0;
            for &g in &grid {
                conv = conv.min(one_shot_converse(&bio, n, r, g)?.prob);
                ach = ach.max(one_shot_achievability(&bio, n, r, g)?.prob);
            }
            json!({"rate": r, "pc_upper": conv, "pc_lower": ach, "slack_grid": grid})
        }
        None => Value::Null,
    };
    Ok(Outcome {
        payload: json!({
            "n": n,
            "capacity": capacity(&bio),
            "variance": bio.variance(),
            "moderate_deviations_constant": moderate_deviations_constant(&bio)?,
            "second_order": rows,
            "one_shot": one_shot,
        }),
        table: Some(Table {
            header: vec!["eps", "log_items", "rate"],
            rows: table,
        }),
        exit: 0,
    })
}

fn triple(t: &TripleArgs) -> Result<RateTriple> {
    RateTriple::new(t.ri, t.rc, t.d)
}

fn region(sys: &SystemTriple, t: &TripleArgs, trace: Option<(f64, usize)>, cfg: &RegionConfig) -> Result<Outcome> {
    let t = triple(t)?;
    let table = hyperplane_table(sys, cfg);
    let m = membership_with(sys, &table, &t, cfg);
    let sh = membership_sh(&table, &t, cfg.margin);
    let mut out = Outcome::plain(json!({"triple": t, "membership": m, "supporting_hyperplanes": sh}));
    if let Some((d, points)) = trace {
        let pts = boundary_trace(sys, d, points, cfg)?;
        out.table = Some(Table {
            header: vec!["r_i", "r_c"],
            rows: pts.iter().map(|p| vec![num(p.r_i), num(p.r_c)]).collect(),
        });
        out.payload["frontier"] = json!({"d": d, "points": pts});
    }
    Ok(out)
}

fn exponent_f(sys: &SystemTriple, t: &TripleArgs, ns: &[usize], cfg: &ExponentConfig) -> Result<Outcome> {
    let t = triple(t)?;
    let solver = ExponentSolver::new(sys, cfg.clone());
    let f = solver.f_exponent(&t);
    let ft = solver.tilde_f(&t);
    let bounds = ns
        .iter()
        .map(|&n| Ok(json!({"n": n, "pc_upper": pc_upper_bound(f.f_hat, n)?})))
        .collect::<Result<Vec<Value>>>()?;
    Ok(Outcome::plain(json!({"triple": t, "f": f, "f_tilde": ft, "pc_bounds": bounds})))
}

fn divergence_bound(sys: &SystemTriple, t: &TripleArgs, cfg: &RegionConfig) -> Result<Outcome> {
    let t = triple(t)?;
    let b = exponent_upper_bound(sys, &t, cfg)?;
    Ok(Outcome::plain(json!({"triple": t, "bound": b})))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    sys: &SystemTriple,
    ns: &[usize],
    items: Option<f64>,
    id_rate: Option<f64>,
    d: f64,
    trials: usize,
    decoder: DecoderArg,
    encoder: EncoderArg,
    codebook_rate: Option<f64>,
    bin_rate: Option<f64>,
    test_channel: Option<&str>,
    mode: ModeArg,
    fit: Option<FitArg>,
    seed: u64,
) -> Result<Outcome> {
    let decoder = match decoder {
        DecoderArg::Ml => DecoderSpec::MaxLikelihood,
        DecoderArg::Stochastic => DecoderSpec::StochasticLikelihood,
    };
    let encoder = match encoder {
        EncoderArg::Identity => EncoderSpec::Identity,
        EncoderArg::QuantizeBin => {
            let missing = |what: &str| Error::Parse(format!("--encoder quantize-bin requires --{what}"));
            let rows: Vec<Vec<f64>> = serde_json::from_str(test_channel.ok_or_else(|| missing("test-channel"))?)
                .map_err(|e| Error::Parse(format!("--test-channel: column {}: {e}", e.column())))?;
            EncoderSpec::QuantizeBin {
                codebook_rate: codebook_rate.ok_or_else(|| missing("codebook-rate"))?,
                bin_rate: bin_rate.ok_or_else(|| missing("bin-rate"))?,
                test_channel: rows,
            }
        }
    };
    let mode = match mode {
        ModeArg::Auto => SimMode::Auto,
        ModeArg::Explicit => SimMode::Explicit,
        ModeArg::Grouped => SimMode::Grouped,
    };
    let items_at = |n: usize| match (items, id_rate) {
        (_, Some(r)) => (n as f64 * r).exp().round().max(1.0),
        (Some(m), None) => m,
        (None, None) => 1.0,
    };
    let template = SimConfig::new(sys.clone(), ns[0], items_at(ns[0]), d, trials, seed)?
        .with_decoder(decoder)
        .with_mode(mode)
        .with_encoder(encoder)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &n in ns {
        let cfg = SimConfig {
            n,
            items: items_at(n),
            ..template.clone()
        };
        cfg.validate()?;
        let est = estimate_pe(&cfg)?;
        table.push(vec![
            n.to_string(),
            num(cfg.items),
            num(est.p_e_hat),
            num(est.p_c_hat),
            num(est.ci_halfwidth),
            num(est.identification_error_rate),
            num(est.excess_distortion_rate),
        ]);
        rows.push(json!({"n": n, "items": cfg.items, "estimate": est}));
    }
    let fit = match fit {
        Some(f) => {
            let target = match f {
                FitArg::Correct => DecayTarget::CorrectDecoding,
                FitArg::Error => DecayTarget::Error,
            };
            to_value(&empirical_exponent(&template, id_rate, ns, target)?)
        }
        None => Value::Null,
    };
    Ok(Outcome {
        payload: json!({"runs": rows, "fit": fit}),
        table: Some(Table {
            header: vec!["n", "items", "p_e", "p_c", "ci_halfwidth", "id_error_rate", "excess_distortion_rate"],
            rows: table,
        }),
        exit: 0,
    })
}

fn verify(criteria: &[u8], seed: u64) -> Result<Outcome> {
    let opts = AcceptanceOptions { seed };
    let mut reports = Vec::new();
    for &id in criteria {
        if !(1..=9).contains(&id) {
            return Err(Error::domain("criterion", id as f64, "1..=9"));
        }
        let r = run_criterion(id, &opts);
        eprintln!("{}", r.line());
        reports.push(r);
    }
    let all = reports.iter().all(|r| r.passed);
    Ok(Outcome {
        table: Some(Table {
            header: vec!["criterion", "passed", "seconds", "summary"],
            rows: reports
                .iter()
                .map(|r| vec![r.id.to_string(), r.passed.to_string(), format!("{:.3}", r.seconds), r.summary.clone()])
                .collect(),
        }),
        payload: json!({"all_passed": all, "criteria": reports}),
        exit: if all { 0 } else { 3 },
    })
}

fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn dispatch(cli: &Cli, sys: Option<&SystemTriple>, ov: &Overrides) -> Result<Outcome> {
    let sys = || sys.expect("system loaded for this command");
    match &cli.command {
        Command::Info { .. } => info(sys()),
        Command::BioExponent { rates, n, .. } => bio_exponent(sys(), rates, n),
        Command::BioAsymptotics { n, eps, rate, .. } => bio_asymptotics(sys(), *n, eps, *rate),
        Command::Region {
            triple,
            trace_d,
            trace_points,
            ..
        } => region(sys(), triple, trace_d.map(|d| (d, *trace_points)), &ov.region),
        Command::ExponentF { triple, n, .. } => exponent_f(sys(), triple, n, &ov.exponent),
        Command::DivergenceBound { triple, .. } => divergence_bound(sys(), triple, &ov.region),
        Command::Simulate {
            n,
            items,
            id_rate,
            d,
            trials,
            decoder,
            encoder,
            codebook_rate,
            bin_rate,
            test_channel,
            mode,
            fit,
            ..
        } => simulate(
            sys(),
            n,
            *items,
            *id_rate,
            *d,
            *trials,
            *decoder,
            *encoder,
            *codebook_rate,
            *bin_rate,
            test_channel.as_deref(),
            *mode,
            *fit,
            cli.seed,
        ),
        Command::Verify { criteria } => verify(criteria, cli.seed),
    }
}

/// Runs a parsed command line; returns the result document and exit code.
pub fn run(cli: &Cli) -> Result<(ResultDoc, i32)> {
    let start = Instant::now();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::domain("threads", 0.0, ">= 1"));
        }
        // a pool already built by an earlier call keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let ov: Overrides = match &cli.config {
        Some(p) => read_json(p)?,
        None => Overrides::default(),
    };
    let loaded = cli.command.system_path().map(load_system).transpose()?;
    let outcome = dispatch(cli, loaded.as_ref().map(|l| &l.1), &ov)?;
    if let (Some(path), Some(table)) = (&cli.csv, &outcome.table) {
        write_csv(path, table)?;
    }
    let inputs = json!({
        "arguments": to_value(cli),
        "system": loaded.as_ref().map(|l| to_value(&l.0)),
        "config": to_value(&ov),
    });
    let doc = ResultDoc {
        command: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cli.seed,
        inputs,
        payload: outcome.payload,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((doc, outcome.exit))
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok((doc, code)) => {
            let text = serde_json::to_string_pretty(&doc).expect("serializable document");
            let written = match &cli.output {
                Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
                None => {
                    // a closed pipe is not an error of the computation
                    let _ = writeln!(std::io::stdout(), "{text}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
