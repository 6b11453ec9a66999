//! Multi-trial experiments: the smallest rollout length (at a fixed rollout
//! count per state dimension) or the smallest rollout count (at a fixed
//! length) after which the learned controller stabilizes the true plant.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::{log_ladder, synthesize, verify_on_plant, FreqGrid, SynthOptions};
use crate::error::{Error, Result};
use crate::lti::{collect, generate_system, GenSpec, LtiSystem, RolloutSet};
use crate::seeds::{derive_seed, STREAM_DATA, STREAM_SYSTEM, STREAM_VERIFY};
use crate::sysid::{estimate_markov, identify_from_markov, IdentConfig, MarkovEstimate, ReducedModel};


pub const SUMMARY_CSV_HEADER: &str = "method,n,sigma,trials,median_cost,mean_cost,std_cost,censored_frac";
pub const RECORDS_CSV_HEADER: &str = "method,n,sigma,trial,cost,stabilized,closed_loop_radius,pipeline_errors";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Unstable-part identification with lifting `m` and order `k`.
    LtsP,
    /// Classical realization of the whole plant: `m = 0`, order `n`.
    HoKalmanFull,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LtsP => "lts_p",
            Method::HoKalmanFull => "ho_kalman_full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Fixed rollout count `rollouts_per_n * n`, increasing length.
    LengthSweep,
    /// Fixed length `fixed_t`, increasing rollout count.
    CountSweep,
}

/// Arithmetic ladder `start, start + step, ...` up to and including `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub start: usize,
    pub step: usize,
    pub cap: usize,
}

impl Ladder {
    pub fn values(&self) -> impl Iterator<Item = usize> {
        (self.start..=self.cap).step_by(self.step.max(1))
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.start == 0 || self.step == 0 || self.cap < self.start {
            return Err(Error::Parameter(format!(
                "{what} ladder needs start >= 1, step >= 1 and cap >= start, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One experiment: every method on every `(n, sigma)` cell for `trials`
/// random plants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_k")]
    pub k: usize,
    pub n_list: Vec<usize>,
    pub sigma_list: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub mode: SweepMode,
    /// Rollout count per state dimension in length sweeps.
    #[serde(default = "default_rollouts_per_n")]
    pub rollouts_per_n: usize,
    /// Rollout length in count sweeps.
    #[serde(default = "default_fixed_t")]
    pub fixed_t: usize,
    /// Lifting offset for `lts_p`; `p = q = floor((T - m) / 2)`.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_t_ladder")]
    pub t_ladder: Ladder,
    #[serde(default = "default_m_ladder")]
    pub m_ladder: Ladder,
    #[serde(default = "one")]
    pub d_u: usize,
    #[serde(default = "one")]
    pub d_y: usize,
    #[serde(default = "one_f")]
    pub sigma_u: f64,
    #[serde(default = "bench_synth")]
    pub synth: SynthOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    5
}
fn default_trials() -> usize {
    30
}
fn default_methods() -> Vec<Method> {
    vec![Method::LtsP, Method::HoKalmanFull]
}
fn default_rollouts_per_n() -> usize {
    4
}
fn default_fixed_t() -> usize {
    70
}
fn default_m() -> usize {
    4
}
fn default_t_ladder() -> Ladder {
    Ladder {
        start: 10,
        step: 4,
        cap: 200,
    }
}
fn default_m_ladder() -> Ladder {
    Ladder {
        start: 5,
        step: 5,
        cap: 400,
    }
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}

/// Synthesis settings used by the harness: a coarser weight ladder and
/// frequency grid than the library default, since every sweep point
/// runs a full design.
pub fn bench_synth() -> SynthOptions {
    SynthOptions {
        weights: log_ladder(5, 1e-2, 1e2),
        grid: FreqGrid {
            n_points: 512,
            ..FreqGrid::default()
        },
    }
}

impl ExperimentSpec {
    /// The desk-scale grid: `k = 5`, `n` in {10, 20, 40}, `sigma = 0.4`.
    pub fn standard(mode: SweepMode) -> Self {
        ExperimentSpec {
            k: default_k(),
            n_list: vec![10, 20, 40],
            sigma_list: vec![0.4],
            trials: default_trials(),
            methods: default_methods(),
            mode,
            rollouts_per_n: default_rollouts_per_n(),
            fixed_t: default_fixed_t(),
            m: default_m(),
            t_ladder: default_t_ladder(),
            m_ladder: default_m_ladder(),
            d_u: 1,
            d_y: 1,
            sigma_u: 1.0,
            synth: bench_synth(),
            seed: 0,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_list.is_empty() || self.sigma_list.is_empty() || self.methods.is_empty() {
            return bad("n_list, sigma_list and methods must be nonempty".into());
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < self.k) {
            return bad(format!("every n must be at least k = {}, got {n}", self.k));
        }
        if let Some(s) = self.sigma_list.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return bad(format!("noise levels must be finite and >= 0, got {s}"));
        }
        if !self.m.is_multiple_of(2) {
            return bad(format!("m must be even, got {}", self.m));
        }
        if self.d_u == 0 || self.d_y == 0 {
            return bad("d_u and d_y must be at least 1".into());
        }
        if !(self.sigma_u.is_finite() && self.sigma_u > 0.0) {
            return bad(format!("sigma_u must be positive, got {}", self.sigma_u));
        }
        if self.rollouts_per_n == 0 || self.fixed_t == 0 {
            return bad("rollouts_per_n and fixed_t must be at least 1".into());
        }
        self.t_ladder.validate("T")?;
        self.m_ladder.validate("M")?;
        self.synth.validate()
    }

    /// Identification settings of `method` at rollout length `t`.
    pub fn ident_config(&self, method: Method, n: usize, t: usize) -> IdentConfig {
        match method {
            Method::LtsP => {
                let p = t.saturating_sub(self.m) / 2;
                IdentConfig::fixed(self.m, p, p, self.k)
            }
            Method::HoKalmanFull => {
                let p = t / 2;
                IdentConfig::fixed(0, p, p, n)
            }
        }
    }

    fn cap(&self) -> usize {
        match self.mode {
            SweepMode::LengthSweep => self.t_ladder.cap,
            SweepMode::CountSweep => self.m_ladder.cap,
        }
    }
}

/// Outcome of one method on one plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub n: usize,
    pub sigma: f64,
    pub trial_index: usize,
    /// Smallest ladder value that stabilized, `None` when censored.
    pub cost: Option<usize>,
    /// Top of the ladder, the censoring marker.
    pub cap: usize,
    pub stabilized: bool,
    /// True closed-loop spectral radius at `cost`, or the smallest one seen
    /// on the ladder when censored (infinite if no point produced a controller).
    pub closed_loop_radius: f64,
    /// Ladder points at which identification or synthesis failed.
    pub pipeline_errors: usize,
}

impl TrialRecord {
    pub fn is_censored(&self) -> bool {
        self.cost.is_none()
    }
}

/// Full-order baseline: the whole plant realized from the Markov fit with
/// no lifting, `k = n` and `p = q = floor(T / 2)`.
pub fn ho_kalman_full_baseline(data: &RolloutSet, n: usize) -> Result<ReducedModel> {
    let t = data.t();
    let cfg = IdentConfig::fixed(0, t / 2, t / 2, n);
    cfg.validate(t)
        .and_then(|_| cfg.check_order(data.d_u(), data.d_y()))
        .map_err(|e| e.at("config"))?;
    let phi = estimate_markov(data).map_err(|e| e.at("markov"))?;
    identify_from_markov(&phi, &cfg)
}

/// Seed of trial `trial` in cell `(n, sigma_index)`; both methods share it,
/// so they see the same plant and the same data.
pub fn trial_seed(seed: u64, n: usize, sigma_index: usize, trial: usize) -> u64 {
    let cell = derive_seed(derive_seed(seed, STREAM_SYSTEM, n as u64), STREAM_SYSTEM, sigma_index as u64);
    derive_seed(cell, STREAM_SYSTEM, trial as u64)
}

/// Length sweep. Errors only for an invalid spec.
pub fn run_length_sweep(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    if spec.mode != SweepMode::LengthSweep {
        return Err(Error::Parameter("run_length_sweep needs mode = length_sweep".into()));
    }
    run(spec)
}

/// Count sweep. Errors only for an invalid spec.
pub fn run_count_sweep(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    if spec.mode != SweepMode::CountSweep {
        return Err(Error::Parameter("run_count_sweep needs mode = count_sweep".into()));
    }
    run(spec)
}

/// Either sweep, chosen by `spec.mode`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    run(spec)
}

fn run(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let mut records = Vec::new();
    for &n in &spec.n_list {
        for (si, &sigma) in spec.sigma_list.iter().enumerate() {
            for trial in 0..spec.trials {
                let seed = trial_seed(spec.seed, n, si, trial);
                let outcomes = run_trial(spec, n, sigma, seed);
                for (method, o) in spec.methods.iter().zip(outcomes) {
                    log::info!(
                        "{} n={n} sigma={sigma} trial={trial}: cost {:?}",
                        method.name(),
                        o.cost
                    );
                    records.push(TrialRecord {
                        method: *method,
                        n,
                        sigma,
                        trial_index: trial,
                        stabilized: o.cost.is_some(),
                        cost: o.cost,
                        cap: spec.cap(),
                        closed_loop_radius: o.radius,
                        pipeline_errors: o.errors,
                    });
                }
            }
        }
    }
    // methods were interleaved per trial; group them for the CSV
    records.sort_by_key(|r| r.method);
    Ok(records)
}

#[derive(Debug, Clone)]
struct Outcome {
    cost: Option<usize>,
    radius: f64,
    errors: usize,
}

fn run_trial(spec: &ExperimentSpec, n: usize, sigma: f64, seed: u64) -> Vec<Outcome> {
    let mut out = vec![
        Outcome {
            cost: None,
            radius: f64::INFINITY,
            errors: 0,
        };
        spec.methods.len()
    ];
    let sys = match make_plant(spec, n, sigma, seed) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("trial with seed {seed} has no plant: {e}");
            return out;
        }
    };
    let data_seed = derive_seed(seed, STREAM_DATA, 0);
    let verify_seed = derive_seed(seed, STREAM_VERIFY, 0);
    let full = match spec.mode {
        SweepMode::LengthSweep => collect(&sys, spec.rollouts_per_n * n, spec.t_ladder.cap, spec.sigma_u, data_seed),
        SweepMode::CountSweep => collect(&sys, spec.m_ladder.cap, spec.fixed_t, spec.sigma_u, data_seed),
    };
    let ladder: Vec<usize> = match spec.mode {
        SweepMode::LengthSweep => spec.t_ladder.values().collect(),
        SweepMode::CountSweep => spec.m_ladder.values().collect(),
    };
    for value in ladder {
        if out.iter().all(|o| o.cost.is_some()) {
            break;
        }
        let data = match spec.mode {
            SweepMode::LengthSweep => full
                .as_ref()
                .map_err(clone_err)
                .and_then(|d| d.truncate(value))
                .or_else(|_| collect(&sys, spec.rollouts_per_n * n, value, spec.sigma_u, data_seed)),
            SweepMode::CountSweep => full
                .as_ref()
                .map_err(clone_err)
                .and_then(|d| d.first(value))
                .or_else(|_| collect(&sys, value, spec.fixed_t, spec.sigma_u, data_seed)),
        };
        // one Markov fit per ladder point, shared by the methods
        let mut phi: Option<Result<MarkovEstimate>> = None;
        for (method, o) in spec.methods.iter().zip(out.iter_mut()) {
            if o.cost.is_some() {
                continue;
            }
            let attempt = data.as_ref().map_err(clone_err).and_then(|d| {
                let cfg = spec.ident_config(*method, n, d.t());
                cfg.validate(d.t()).and_then(|_| cfg.check_order(d.d_u(), d.d_y()))?;
                let phi = phi.get_or_insert_with(|| estimate_markov(d));
                let model = identify_from_markov(phi.as_ref().map_err(clone_err)?, &cfg)?;
                let ctrl = synthesize(&model, &spec.synth)?;
                Ok(verify_on_plant(&sys, &ctrl, verify_seed))
            });
            match attempt {
                Ok(report) => {
                    o.radius = o.radius.min(report.closed_loop_radius);
                    if report.stabilized {
                        o.cost = Some(value);
                        o.radius = report.closed_loop_radius;
                    }
                }
                Err(e) => {
                    log::debug!("{} at {value}: {e}", method.name());
                    o.errors += 1;
                }
            }
        }
    }
    out
}

fn clone_err(e: &Error) -> Error {
    Error::NumericFailure(e.to_string())
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub method: Method,
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    /// Median with censored trials counted as infinite.
    pub median_cost: f64,
    /// Mean and sample standard deviation over the uncensored trials.
    pub mean_cost: Option<f64>,
    pub std_cost: Option<f64>,
    pub censored_frac: f64,
}

/// Per `(method, n, sigma)` statistics, in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<CellSummary>> {
    if records.is_empty() {
        return Err(Error::Parameter("no records to summarize".into()));
    }
    let mut keys: Vec<(Method, usize, f64)> = Vec::new();
    for r in records {
        let key = (r.method, r.n, r.sigma);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    Ok(keys
        .into_iter()
        .map(|(method, n, sigma)| {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| (r.method, r.n, r.sigma) == (method, n, sigma))
                .collect();
            let mut costs: Vec<f64> = cell
                .iter()
                .map(|r| r.cost.map_or(f64::INFINITY, |c| c as f64))
                .collect();
            costs.sort_by(f64::total_cmp);
            let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
            let mean = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
            let std = mean.map(|mu| {
                if finite.len() < 2 {
                    0.0
                } else {
                    let ss: f64 = finite.iter().map(|c| (c - mu).powi(2)).sum();
                    (ss / (finite.len() - 1) as f64).sqrt()
                }
            });
            CellSummary {
                method,
                n,
                sigma,
                trials: cell.len(),
                median_cost: median(&costs),
                mean_cost: mean,
                std_cost: std,
                censored_frac: (costs.len() - finite.len()) as f64 / costs.len() as f64,
            }
        })
        .collect())
}

/// Median of sorted values; an infinite middle value stays infinite.
fn median(sorted: &[f64]) -> f64 {
    let len = sorted.len();
    if len % 2 == 1 {
        sorted[len / 2]
    } else {
        (sorted[len / 2 - 1] + sorted[len / 2]) / 2.0
    }
}

/// Summary table as CSV; censored statistics are written as `censored`.
pub fn summary_csv(cells: &[CellSummary]) -> String {
    let num = |x: f64| if x.is_finite() { x.to_string() } else { "censored".into() };
    let opt = |x: Option<f64>| x.map_or_else(|| "censored".into(), num);
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.method.name(),
            c.n,
            c.sigma,
            c.trials,
            num(c.median_cost),
            opt(c.mean_cost),
            opt(c.std_cost),
            c.censored_frac
        );
    }
    out
}

/// Per-trial CSV; a censored cost is written as `>cap`.
pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(RECORDS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let cost = r.cost.map_or_else(|| format!(">{}", r.cap), |c| c.to_string());
        let radius = if r.closed_loop_radius.is_finite() {
            r.closed_loop_radius.to_string()
        } else {
            "inf".into()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method.name(),
            r.n,
            r.sigma,
            r.trial_index,
            cost,
            r.stabilized,
            radius,
            r.pipeline_errors
        );
    }
    out
}

/// The plant a trial runs on, for inspection outside the harness.
pub fn trial_plant(spec: &ExperimentSpec, n: usize, sigma_index: usize, trial: usize) -> Result<LtiSystem> {
    let sigma = *spec
        .sigma_list
        .get(sigma_index)
        .ok_or_else(|| Error::Parameter(format!("no noise level at index {sigma_index}")))?;
    make_plant(spec, n, sigma, trial_seed(spec.seed, n, sigma_index, trial))
}

fn make_plant(spec: &ExperimentSpec, n: usize, sigma: f64, seed: u64) -> Result<LtiSystem> {
    let gen = GenSpec {
        d_u: spec.d_u,
        d_y: spec.d_y,
        ..GenSpec::new(n, spec.k)
    };
    generate_system(&gen, seed)?.with_noise(sigma, sigma)
}
