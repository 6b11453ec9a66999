use std::path::{Path, PathBuf};

use clap::Args;
use lts_core::bench::{records_csv, run_experiment, summarize, summary_csv, ExperimentSpec, Method, SweepMode};
use lts_core::control::{synthesize as synth, verify_on_plant, DynamicController, SynthOptions, REPORT_CSV_HEADER};
use lts_core::lti::{collect as collect_rollouts, generate_system, GenSpec, LtiSystem, RolloutSet};
use lts_core::seeds::{derive_seed, STREAM_DATA, STREAM_VERIFY};
use lts_core::sysid::{fixed_length_preset, identify as ident, svals_csv, IdentConfig, ReducedModel};
use serde_json::{Map, Value};

use crate::config::{self, decode, finish, merged, require, take, Overrides};
use crate::{CliError, Common};

fn output(explicit: Option<PathBuf>, common: &Common, name: &str) -> Result<PathBuf, CliError> {
    match explicit {
        Some(p) => Ok(p),
        None => Ok(config::out_dir(common.out_dir.as_deref())?.join(name)),
    }
}

/// `--k 3` or `--k auto`.
fn order_value(k: &Option<String>) -> Option<Value> {
    k.as_ref().map(|s| match s.parse::<u64>() {
        Ok(n) => Value::from(n),
        Err(_) => Value::from(s.as_str()),
    })
}

#[derive(Args)]
pub struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// State dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Number of unstable eigenvalues.
    #[arg(long)]
    k: Option<usize>,
    /// Interval for unstable eigenvalues, as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    unstable_range: Option<Vec<f64>>,
    /// Interval for stable eigenvalues, as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    stable_range: Option<Vec<f64>>,
    #[arg(long)]
    d_u: Option<usize>,
    #[arg(long)]
    d_y: Option<usize>,
    #[arg(long)]
    basis_conditioning_cap: Option<f64>,
    /// Draw a nonzero feedthrough matrix.
    #[arg(long)]
    feedthrough: bool,
    /// Process noise standard deviation.
    #[arg(long)]
    sigma_w: Option<f64>,
    /// Measurement noise standard deviation.
    #[arg(long)]
    sigma_v: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: system.json in the output directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn gen(a: GenArgs) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags
        .put("n", &a.n)
        .put("k", &a.k)
        .put("unstable_range", &a.unstable_range)
        .put("stable_range", &a.stable_range)
        .put("d_u", &a.d_u)
        .put("d_y", &a.d_y)
        .put("basis_conditioning_cap", &a.basis_conditioning_cap)
        .flag("feedthrough", a.feedthrough)
        .put("sigma_w", &a.sigma_w)
        .put("sigma_v", &a.sigma_v)
        .put("seed", &a.seed);
    let mut map = merged(a.common.config.as_deref(), flags)?;
    let seed: u64 = take(&mut map, "seed", 0)?;
    let sigma_w: f64 = take(&mut map, "sigma_w", 0.0)?;
    let sigma_v: f64 = take(&mut map, "sigma_v", 0.0)?;
    for key in ["n", "k"] {
        if !map.contains_key(key) {
            return Err(CliError::Invalid(format!("missing required field `{key}`")));
        }
    }
    let spec: GenSpec = decode(map, "gen config")?;
    spec.validate()?;
    let sys = generate_system(&spec, seed)?.with_noise(sigma_w, sigma_v)?;
    let path = output(a.output, &a.common, "system.json")?;
    config::write(&path, &sys.to_json())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Args)]
pub struct CollectArgs {
    #[command(flatten)]
    common: Common,
    /// Plant JSON file.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Number of rollouts M.
    #[arg(long)]
    rollouts: Option<usize>,
    /// Rollout length T.
    #[arg(long)]
    t: Option<usize>,
    /// Input standard deviation.
    #[arg(long)]
    sigma_u: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: rollouts.json in the output directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn collect(a: CollectArgs) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags
        .put("system", &a.system)
        .put("rollouts", &a.rollouts)
        .put("t", &a.t)
        .put("sigma_u", &a.sigma_u)
        .put("seed", &a.seed);
    let mut map = merged(a.common.config.as_deref(), flags)?;
    let system: PathBuf = require(&mut map, "system")?;
    let rollouts: usize = require(&mut map, "rollouts")?;
    let t: usize = require(&mut map, "t")?;
    let sigma_u: f64 = take(&mut map, "sigma_u", 1.0)?;
    let seed: u64 = take(&mut map, "seed", 0)?;
    finish(&map, "collect config")?;
    let sys = LtiSystem::from_json(&config::read(&system)?)?;
    let data = collect_rollouts(&sys, rollouts, t, sigma_u, seed)?;
    let path = output(a.output, &a.common, "rollouts.json")?;
    config::write(&path, &data.to_json())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Args)]
pub struct IdentArgs {
    /// Lifting offset m (even).
    #[arg(long)]
    m: Option<usize>,
    /// Hankel block rows (default: floor((T - m) / 2)).
    #[arg(long)]
    p: Option<usize>,
    /// Hankel block columns (default: floor((T - m) / 2)).
    #[arg(long)]
    q: Option<usize>,
    /// Model order, or `auto` for the largest spectral gap.
    #[arg(long)]
    k: Option<String>,
    /// Largest order considered by `auto`.
    #[arg(long)]
    k_max: Option<usize>,
}

impl IdentArgs {
    fn put(&self, flags: &mut Overrides, section: Option<&str>) {
        let k = order_value(&self.k);
        match section {
            Some(s) => {
                flags
                    .put_in(s, "m", &self.m)
                    .put_in(s, "p", &self.p)
                    .put_in(s, "q", &self.q)
                    .put_in(s, "k", &k)
                    .put_in(s, "k_max", &self.k_max);
            }
            None => {
                flags
                    .put("m", &self.m)
                    .put("p", &self.p)
                    .put("q", &self.q)
                    .put("k", &k)
                    .put("k_max", &self.k_max);
            }
        }
    }
}

/// Identification settings from a map, with `m = 4` and `p = q =
/// floor((T - m) / 2)` filled in when absent.
fn ident_config(mut map: Map<String, Value>, t: usize) -> Result<IdentConfig, CliError> {
    let m = match map.get("m") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::Invalid(format!("field `m`: {e}")))?,
        None => 4usize,
    };
    map.insert("m".into(), Value::from(m));
    if !map.contains_key("p") || !map.contains_key("q") {
        let (p, q) = fixed_length_preset(t, m)?;
        map.entry("p").or_insert(Value::from(p));
        map.entry("q").or_insert(Value::from(q));
    }
    if !map.contains_key("k") {
        return Err(CliError::Invalid("missing required field `k`".into()));
    }
    decode(map, "identification config")
}

#[derive(Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    common: Common,
    /// Rollouts JSON file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    ident: IdentArgs,
    /// Also write the Hankel singular values as CSV here.
    #[arg(long)]
    svals: Option<PathBuf>,
    /// Output file (default: model.json in the output directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn identify(a: IdentifyArgs) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags.put("data", &a.data).put("svals", &a.svals);
    a.ident.put(&mut flags, None);
    let mut map = merged(a.common.config.as_deref(), flags)?;
    let data: PathBuf = require(&mut map, "data")?;
    let svals: Option<PathBuf> = take(&mut map, "svals", None)?;
    let rollouts = RolloutSet::from_json(&config::read(&data)?)?;
    let cfg = ident_config(map, rollouts.t())?;
    let model = ident(&rollouts, &cfg)?;
    if let Some(p) = svals {
        config::write(&p, &svals_csv(&model.hankel_svals))?;
    }
    let path = output(a.output, &a.common, "model.json")?;
    config::write(&path, &model.to_json())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Args)]
pub struct SynthFlags {
    /// Weight ladder shared by the state and observer Riccati equations.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Frequency grid points for certificates.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Golden-section iterations per peak.
    #[arg(long)]
    grid_refine_iters: Option<usize>,
    /// Angular tolerance of peak refinement.
    #[arg(long)]
    grid_tol: Option<f64>,
}

impl SynthFlags {
    /// Flags as a `SynthOptions`-shaped object.
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        if let Some(w) = &self.weights {
            m.insert("weights".into(), serde_json::to_value(w).expect("weights serialize"));
        }
        let mut grid = Map::new();
        for (key, v) in [
            ("n_points", self.grid_points.map(Value::from)),
            ("refine_iters", self.grid_refine_iters.map(Value::from)),
            ("tol", self.grid_tol.map(Value::from)),
        ] {
            if let Some(v) = v {
                grid.insert(key.into(), v);
            }
        }
        if !grid.is_empty() {
            m.insert("grid".into(), Value::Object(grid));
        }
        m
    }
}

/// `SynthOptions` from a map, where a partial `grid` keeps the default
/// values for the keys it omits.
fn synth_options(mut map: Map<String, Value>) -> Result<SynthOptions, CliError> {
    let defaults = serde_json::to_value(SynthOptions::default()).expect("options serialize");
    if let Some(Value::Object(grid)) = map.get_mut("grid") {
        if let Some(Value::Object(full)) = defaults.get("grid") {
            for (k, v) in full {
                grid.entry(k.clone()).or_insert(v.clone());
            }
        }
    }
    let opts: SynthOptions = decode(map, "synthesis config")?;
    opts.validate()?;
    Ok(opts)
}

fn overlay(map: &mut Map<String, Value>, over: Map<String, Value>) {
    for (key, value) in over {
        match (map.get_mut(&key), value) {
            (Some(Value::Object(inner)), Value::Object(o)) => inner.extend(o),
            (_, v) => {
                map.insert(key, v);
            }
        }
    }
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Identified model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthFlags,
    /// Output file (default: controller.json in the output directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn synthesize(a: SynthArgs) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags.put("model", &a.model);
    let mut map = merged(a.common.config.as_deref(), flags)?;
    overlay(&mut map, a.synth.overrides());
    let model: PathBuf = require(&mut map, "model")?;
    let opts = synth_options(map)?;
    let model = ReducedModel::from_json(&config::read(&model)?)?;
    let ctrl = synth(&model, &opts)?;
    let path = output(a.output, &a.common, "controller.json")?;
    config::write(&path, &ctrl.to_json())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Plant JSON file.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Controller JSON file.
    #[arg(long)]
    controller: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: report.json in the output directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags
        .put("system", &a.system)
        .put("controller", &a.controller)
        .put("seed", &a.seed);
    let mut map = merged(a.common.config.as_deref(), flags)?;
    let system: PathBuf = require(&mut map, "system")?;
    let controller: PathBuf = require(&mut map, "controller")?;
    let seed: u64 = take(&mut map, "seed", 0)?;
    finish(&map, "verify config")?;
    let sys = LtiSystem::from_json(&config::read(&system)?)?;
    let ctrl = DynamicController::from_json(&config::read(&controller)?)?;
    let report = verify_on_plant(&sys, &ctrl, seed);
    let path = output(a.output, &a.common, "report.json")?;
    config::write(&path, &report.to_json())?;
    println!("{REPORT_CSV_HEADER}\n{}", report.csv_line());
    if report.stabilized {
        Ok(())
    } else {
        Err(CliError::NotStabilized(report.closed_loop_radius))
    }
}

#[derive(Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Plant JSON file.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Number of rollouts M.
    #[arg(long)]
    rollouts: Option<usize>,
    /// Rollout length T.
    #[arg(long)]
    t: Option<usize>,
    /// Input standard deviation.
    #[arg(long)]
    sigma_u: Option<f64>,
    /// Master seed for data collection and verification.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    ident: IdentArgs,
    #[command(flatten)]
    synth: SynthFlags,
}

/// Collect, identify, synthesize and verify; writes `rollouts.json`,
/// `model.json`, `controller.json` and `report.json` to the output directory.
pub fn pipeline(a: PipelineArgs) -> Result<(), CliError> {
    let mut flags = Overrides::default();
    flags
        .put("system", &a.system)
        .put("rollouts", &a.rollouts)
        .put("t", &a.t)
        .put("sigma_u", &a.sigma_u)
        .put("seed", &a.seed);
    a.ident.put(&mut flags, Some("ident"));
    let mut map = merged(a.common.config.as_deref(), flags)?;
    let synth_over = a.synth.overrides();
    if !synth_over.is_empty() {
        let section = map
            .entry("synth")
            .or_insert_with(|| Value::Object(Map::new()));
        match section {
            Value::Object(s) => overlay(s, synth_over),
            _ => return Err(CliError::Invalid("field `synth` must be an object".into())),
        }
    }
    let system: PathBuf = require(&mut map, "system")?;
    let rollouts: usize = require(&mut map, "rollouts")?;
    let t: usize = require(&mut map, "t")?;
    let sigma_u: f64 = take(&mut map, "sigma_u", 1.0)?;
    let seed: u64 = take(&mut map, "seed", 0)?;
    let ident_map: Map<String, Value> = take(&mut map, "ident", Map::new())?;
    let synth_map: Map<String, Value> = take(&mut map, "synth", Map::new())?;
    finish(&map, "pipeline config")?;
    if rollouts == 0 {
        return Err(CliError::Invalid("rollouts must be at least 1".into()));
    }
    let cfg = ident_config(ident_map, t)?;
    cfg.validate(t)?;
    let opts = synth_options(synth_map)?;
    let sys = LtiSystem::from_json(&config::read(&system)?)?;
    cfg.check_order(sys.d_u(), sys.d_y())?;

    let dir = config::out_dir(a.common.out_dir.as_deref())?;
    let data = collect_rollouts(&sys, rollouts, t, sigma_u, derive_seed(seed, STREAM_DATA, 0))?;
    config::write(&dir.join("rollouts.json"), &data.to_json())?;
    let model = ident(&data, &cfg)?;
    config::write(&dir.join("model.json"), &model.to_json())?;
    let ctrl = synth(&model, &opts)?;
    config::write(&dir.join("controller.json"), &ctrl.to_json())?;
    let report = verify_on_plant(&sys, &ctrl, derive_seed(seed, STREAM_VERIFY, 0));
    config::write(&dir.join("report.json"), &report.to_json())?;
    println!("{REPORT_CSV_HEADER}\n{}", report.csv_line());
    if report.stabilized {
        Ok(())
    } else {
        Err(CliError::NotStabilized(report.closed_loop_radius))
    }
}

#[derive(Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// `length_sweep` or `count_sweep`.
    #[arg(long, value_enum)]
    mode: Option<ModeFlag>,
    /// Unstable dimension of every plant.
    #[arg(long)]
    k: Option<usize>,
    /// State dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Noise levels (sigma_w = sigma_v), comma separated.
    #[arg(long, value_delimiter = ',')]
    sigma_list: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Methods to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<MethodFlag>>,
    /// Rollouts per state dimension in the length sweep.
    #[arg(long)]
    rollouts_per_n: Option<usize>,
    /// Rollout length in the count sweep.
    #[arg(long)]
    fixed_t: Option<usize>,
    /// Lifting offset for the lifted method.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeFlag {
    LengthSweep,
    CountSweep,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodFlag {
    LtsP,
    HoKalmanFull,
}

/// Runs the sweep and writes `records.csv` and `summary.csv`.
pub fn experiment(a: ExperimentArgs) -> Result<(), CliError> {
    let mode = a.mode.map(|m| match m {
        ModeFlag::LengthSweep => SweepMode::LengthSweep,
        ModeFlag::CountSweep => SweepMode::CountSweep,
    });
    let methods = a.methods.as_ref().map(|ms| {
        ms.iter()
            .map(|m| match m {
                MethodFlag::LtsP => Method::LtsP,
                MethodFlag::HoKalmanFull => Method::HoKalmanFull,
            })
            .collect::<Vec<_>>()
    });
    let mut flags = Overrides::default();
    flags
        .put("mode", &mode)
        .put("k", &a.k)
        .put("n_list", &a.n_list)
        .put("sigma_list", &a.sigma_list)
        .put("trials", &a.trials)
        .put("methods", &methods)
        .put("rollouts_per_n", &a.rollouts_per_n)
        .put("fixed_t", &a.fixed_t)
        .put("m", &a.m)
        .put("seed", &a.seed);
    let map = merged(a.common.config.as_deref(), flags)?;
    let text = serde_json::to_string(&Value::Object(map)).expect("config serializes");
    let spec = ExperimentSpec::from_json(&text)?;
    let records = run_experiment(&spec)?;
    let cells = summarize(&records)?;
    let dir = config::out_dir(a.common.out_dir.as_deref())?;
    write_tables(&dir, &records_csv(&records), &summary_csv(&cells))?;
    print!("{}", summary_csv(&cells));
    Ok(())
}

fn write_tables(dir: &Path, records: &str, summary: &str) -> Result<(), CliError> {
    config::write(&dir.join("records.csv"), records)?;
    config::write(&dir.join("summary.csv"), summary)
}
