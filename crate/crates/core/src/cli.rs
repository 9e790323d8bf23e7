//! Command-line front end.
//!
//! Every command builds a [`ScenarioConfig`] from defaults, an optional JSON
//! file, `--set` overrides and `--seed`, then writes its reports into the
//! output directory. Failures print a JSON object on stderr; the exit code
//! is 2 for ZF infeasibility and 1 otherwise.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::eval::metrics::{evaluate_mu, evaluate_mu_coherent, evaluate_su};
use crate::eval::report::{CdfReport, Db, Metadata, SweepReport};
use crate::eval::scenario::{generate_scenario, ScenarioConfig};
use crate::eval::sweep::{cdf_study, design_for_user, frequency_sweep, parse_designs, Design};
use crate::mu::{zf_feasibility, ZfFeasibility};
use crate::su::Diagnostics;
use crate::{CVector, Error, Result};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "NONCOBF_THREADS";

/// Default Monte-Carlo draws of `design-su` and `design-mu`.
pub const DEFAULT_DRAWS: usize = 1000;

/// RNG stream base for Monte-Carlo phase draws of `design-su`.
const SU_DRAW_STREAM_BASE: u64 = 1 << 41;

#[derive(Debug, Parser)]
#[command(name = "noncobf", version, about = "Non-coherent beamforming design and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-user designs for every user of the scenario, judged alone.
    DesignSu(RunArgs),
    /// Multi-user designs with a ZF feasibility report.
    DesignMu(RunArgs),
    /// Beamforming gain of one user across the band.
    Sweep(RunArgs),
    /// Gain (one user) or SINR (several users) CDFs over random locations.
    CdfStudy(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON scenario configuration; omitted fields take their defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config field, e.g. `--set array.n_horizontal=8`. Values
    /// are parsed as JSON, falling back to a plain string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Comma-separated list of coherent, uniform, stationary, worstcase,
    /// zf-stationary, zf-worstcase, rzf.
    #[arg(long)]
    pub designs: Option<String>,
    /// Monte-Carlo phase draws per user.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Frequency points across the band; defaults to `num_subcarriers`.
    #[arg(long)]
    pub freq_points: Option<usize>,
    /// One-based user evaluated by `sweep`.
    #[arg(long, default_value_t = 1)]
    pub user: usize,
}

/// A parsed invocation.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: CommandKind,
    pub args: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    DesignSu,
    DesignMu,
    Sweep,
    CdfStudy,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::DesignSu => "design-su",
            CommandKind::DesignMu => "design-mu",
            CommandKind::Sweep => "sweep",
            CommandKind::CdfStudy => "cdf-study",
        }
    }
}

impl From<Command> for RunSpec {
    fn from(c: Command) -> Self {
        let (command, args) = match c {
            Command::DesignSu(a) => (CommandKind::DesignSu, a),
            Command::DesignMu(a) => (CommandKind::DesignMu, a),
            Command::Sweep(a) => (CommandKind::Sweep, a),
            Command::CdfStudy(a) => (CommandKind::CdfStudy, a),
        };
        RunSpec { command, args }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .expect("object")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if !node.is_object() {
        *node = Value::Object(Map::new());
    }
    node.as_object_mut()
        .expect("object")
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Defaults, then the file, then `--set` in order, then `--seed`.
pub fn load_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut value = serde_json::to_value(ScenarioConfig::default())?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        }
        merge(&mut value, file);
    }
    for o in &args.overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key.trim(), parsed)?;
    }
    if let Some(seed) = args.seed {
        value["seed"] = json!(seed);
    }
    let config: ScenarioConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
    config.validate().map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })?;
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn complex_pairs(g: &CVector) -> Vec<[f64; 2]> {
    g.iter().map(|z| [z.re, z.im]).collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn db_all(xs: &[f64]) -> Vec<Db> {
    xs.iter().map(|&x| Db::from_linear(x)).collect()
}

#[derive(Debug, Serialize)]
struct SuDesignReport {
    design: Design,
    objective_value: f64,
    stationary_gain_db: Db,
    worst_case_gain_db: Db,
    mean_sample_gain_db: Option<Db>,
    min_sample_gain_db: Option<Db>,
    samples_db: Vec<Db>,
    beamformer: Vec<[f64; 2]>,
    diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Serialize)]
struct SuUserReport {
    user: usize,
    num_paths: usize,
    /// `|h|^2` of the mean-phase channel at the carrier.
    channel_power_db: Db,
    designs: Vec<SuDesignReport>,
}

#[derive(Debug, Serialize)]
struct SuReport {
    metadata: Metadata,
    draws: usize,
    users: Vec<SuUserReport>,
}

fn design_su(config: &ScenarioConfig, args: &RunArgs) -> Result<()> {
    let designs = parse_designs(args.designs.as_deref().unwrap_or("coherent,uniform,stationary,worstcase"))?;
    if let Some(d) = designs
        .iter()
        .find(|d| !matches!(d, Design::Coherent | Design::Uniform | Design::Stationary | Design::WorstCase))
    {
        return Err(Error::Config(format!("design-su does not support '{d}'; use design-mu")));
    }
    let draws = args.draws.unwrap_or(DEFAULT_DRAWS);
    let generated = generate_scenario(config)?;
    let mut users = Vec::with_capacity(config.num_users);
    for (k, loc) in generated.locations.iter().enumerate() {
        let user = generated.scenario.user(k)?;
        let h = loc.channel_at(&generated.geometry, config.carrier_frequency, config.evaluation_time)?;
        let mut reports = Vec::with_capacity(designs.len());
        for &design in &designs {
            let bf = design_for_user(design, &generated.scenario, k, &h, &config.worst_case)?;
            // Every design sees the same draws.
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(SU_DRAW_STREAM_BASE + k as u64);
            let mut rec = evaluate_su(&bf, &user.signatures, &user.phase_model, draws, &mut rng)?;
            if design == Design::Coherent {
                // The coherent design follows the channel: matched to each draw.
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(SU_DRAW_STREAM_BASE + k as u64);
                let l = user.signatures.num_paths();
                rec.samples = (0..draws)
                    .map(|_| Ok((user.signatures.matrix() * user.phase_model.sample(l, &mut rng)?).norm_squared()))
                    .collect::<Result<_>>()?;
            }
            reports.push(SuDesignReport {
                design,
                objective_value: bf.objective_value,
                stationary_gain_db: Db::from_linear(rec.stationary_gain),
                worst_case_gain_db: Db::from_linear(rec.worst_case_gain),
                mean_sample_gain_db: (draws > 0).then(|| Db::from_linear(mean(&rec.samples))),
                min_sample_gain_db: (draws > 0).then(|| Db::from_linear(min(&rec.samples))),
                samples_db: db_all(&rec.samples),
                beamformer: complex_pairs(&bf.g),
                diagnostics: bf.diagnostics,
            });
        }
        users.push(SuUserReport {
            user: k + 1,
            num_paths: user.signatures.num_paths(),
            channel_power_db: Db::from_linear(h.norm_squared()),
            designs: reports,
        });
    }
    write_json(
        &args.out.join("design_su.json"),
        &SuReport {
            metadata: Metadata::new(CommandKind::DesignSu.name(), config),
            draws,
            users,
        },
    )
}

#[derive(Debug, Serialize)]
struct MuUserReport {
    user: usize,
    objective_value: Option<f64>,
    stationary_sinr_db: Option<Db>,
    mean_sinr_db: Option<Db>,
    /// Largest `sum_{k' != k} p_k' |g_k'^H h_k|^2` over the draws, linear.
    max_interference: Option<f64>,
    sinr_samples_db: Vec<Db>,
    beamformer: Option<Vec<[f64; 2]>>,
    diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Serialize)]
struct MuDesignReport {
    design: Design,
    users: Vec<MuUserReport>,
}

#[derive(Debug, Serialize)]
struct MuReport {
    metadata: Metadata,
    draws: usize,
    feasibility: Vec<ZfFeasibility>,
    designs: Vec<MuDesignReport>,
}

#[derive(Debug, Serialize)]
struct FeasibilityReport<'a> {
    metadata: Metadata,
    users: &'a [ZfFeasibility],
}

fn design_mu(config: &ScenarioConfig, args: &RunArgs) -> Result<()> {
    let designs = parse_designs(
        args.designs
            .as_deref()
            .unwrap_or("coherent,stationary,zf-stationary,zf-worstcase,rzf"),
    )?;
    let draws = args.draws.unwrap_or(DEFAULT_DRAWS);
    let generated = generate_scenario(config)?;
    let scenario = &generated.scenario;
    let feasibility = zf_feasibility(scenario)?;
    write_json(
        &args.out.join("feasibility.json"),
        &FeasibilityReport {
            metadata: Metadata::new(CommandKind::DesignMu.name(), config),
            users: &feasibility,
        },
    )?;
    if designs.iter().any(|d| d.is_zero_forcing()) {
        if let Some(f) = feasibility.iter().find(|f| !f.feasible) {
            return Err(Error::ZfInfeasible { user: f.user - 1 });
        }
    }

    let h: Vec<CVector> = generated
        .locations
        .iter()
        .map(|loc| loc.channel_at(&generated.geometry, config.carrier_frequency, config.evaluation_time))
        .collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(designs.len());
    for &design in &designs {
        let users = if design == Design::Coherent {
            evaluate_mu_coherent(scenario, draws, config.seed)?
                .into_iter()
                .map(|rec| MuUserReport {
                    user: rec.user + 1,
                    objective_value: None,
                    stationary_sinr_db: None,
                    mean_sinr_db: (draws > 0).then(|| Db::from_linear(mean(&rec.sinr))),
                    max_interference: (draws > 0).then(|| rec.interference.iter().copied().fold(0.0, f64::max)),
                    sinr_samples_db: db_all(&rec.sinr),
                    beamformer: None,
                    diagnostics: None,
                })
                .collect()
        } else {
            let bfs = (0..scenario.num_users())
                .map(|k| design_for_user(design, scenario, k, &h[k], &config.worst_case))
                .collect::<Result<Vec<_>>>()?;
            let gs: Vec<CVector> = bfs.iter().map(|b| b.g.clone()).collect();
            evaluate_mu(scenario, &gs, draws, config.seed)?
                .into_iter()
                .zip(bfs)
                .map(|(rec, bf)| MuUserReport {
                    user: rec.user + 1,
                    objective_value: Some(bf.objective_value),
                    stationary_sinr_db: Some(Db::from_linear(rec.stationary_sinr)),
                    mean_sinr_db: (draws > 0).then(|| Db::from_linear(mean(&rec.sinr))),
                    max_interference: (draws > 0).then(|| rec.interference.iter().copied().fold(0.0, f64::max)),
                    sinr_samples_db: db_all(&rec.sinr),
                    beamformer: Some(complex_pairs(&bf.g)),
                    diagnostics: bf.diagnostics,
                })
                .collect()
        };
        reports.push(MuDesignReport { design, users });
    }
    write_json(
        &args.out.join("design_mu.json"),
        &MuReport {
            metadata: Metadata::new(CommandKind::DesignMu.name(), config),
            draws,
            feasibility,
            designs: reports,
        },
    )
}

fn sweep(config: &ScenarioConfig, args: &RunArgs) -> Result<()> {
    let designs = parse_designs(args.designs.as_deref().unwrap_or("coherent,uniform,stationary,worstcase"))?;
    if args.user == 0 || args.user > config.num_users {
        return Err(Error::Config(format!(
            "--user must be in 1..={}",
            config.num_users
        )));
    }
    let n = args.freq_points.unwrap_or(config.num_subcarriers);
    if n < 2 {
        return Err(Error::Config("a sweep needs at least two frequency points".into()));
    }
    let generated = generate_scenario(config)?;
    let result = frequency_sweep(config, &generated, args.user - 1, &designs, n)?;
    let file = BufWriter::new(fs::File::create(args.out.join("sweep.csv"))?);
    crate::eval::report::write_sweep_csv(file, &result)?;
    write_json(
        &args.out.join("sweep.json"),
        &SweepReport::new(Metadata::new(CommandKind::Sweep.name(), config), &result),
    )
}

fn cdf(config: &ScenarioConfig, args: &RunArgs) -> Result<()> {
    let default = if config.num_users == 1 {
        "coherent,uniform,stationary,worstcase"
    } else {
        "coherent,stationary,zf-stationary,rzf"
    };
    let designs = parse_designs(args.designs.as_deref().unwrap_or(default))?;
    let n = args.freq_points.unwrap_or(config.num_subcarriers);
    if n == 0 {
        return Err(Error::Config("--freq-points must be >= 1".into()));
    }
    let study = cdf_study(config, &designs, n)?;
    let report = CdfReport::new(Metadata::new(CommandKind::CdfStudy.name(), config), &study)?;
    report.write_csv(BufWriter::new(fs::File::create(args.out.join("cdf.csv"))?))?;
    write_json(&args.out.join("cdf_study.json"), &report)
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))),
        },
    }
}

/// Runs one command, writing its artifacts into `spec.args.out`.
pub fn run(spec: &RunSpec) -> Result<()> {
    let config = load_config(&spec.args)?;
    fs::create_dir_all(&spec.args.out)?;
    let work = || match spec.command {
        CommandKind::DesignSu => design_su(&config, &spec.args),
        CommandKind::DesignMu => design_mu(&config, &spec.args),
        CommandKind::Sweep => sweep(&config, &spec.args),
        CommandKind::CdfStudy => cdf(&config, &spec.args),
    };
    match thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Machine-readable failure report.
pub fn error_json(err: &Error) -> Value {
    let mut v = json!({
        "error": err.kind(),
        "message": err.to_string(),
    });
    if let Error::ZfInfeasible { user } = err {
        v["blocked_users"] = json!([user + 1]);
    }
    v
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ZfInfeasible { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs, reports, and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let v = json!({ "error": "config", "message": e.to_string().trim_end() });
            eprintln!("{v}");
            return 1;
        }
    };
    match run(&cli.command.into()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
