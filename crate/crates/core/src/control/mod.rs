//! Output-feedback synthesis on an identified model, small-gain
//! certification, and ground-truth verification on the full plant.
//!
//! Controllers use positive feedback, `u = K(z) y`. The certificate of a
//! controller is `||K (I - F K)^-1||_inf` for the identified unstable part
//! `F`; by the small-gain theorem any stable remainder `Delta` with
//! `certificate * ||Delta||_inf < 1` is then stabilized as well.

mod hinf;

pub use hinf::{hinf_norm, hinf_norm_capped, Bounded, FreqGrid};

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lti::{closed_loop_matrix, feedback_loop, true_decomposition, unit_vector, LtiSystem, Realization, StateSpace};
use crate::numerics::{lqr_gain, rows, solve_dare, spectral_radius, Mat};
use crate::seeds::{self, derive_seed, STREAM_VERIFY};
use crate::sysid::ReducedModel;

const SIM_STEPS: usize = 500;

/// `K(z) (I - G(z) K(z))^-1` as a state-space system with state `[x; xi]`.
pub fn series_sensitivity(model: &impl Realization, ctrl: &impl Realization) -> Result<StateSpace> {
    feedback_loop(model, ctrl)
}

/// One `(rho, mu)` point of a synthesis sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    /// State-feedback weight; absent for the zero controller.
    pub rho: Option<f64>,
    /// Observer weight; absent for the zero controller.
    pub mu: Option<f64>,
    /// Certificate, when it was computed in full.
    pub certificate: Option<f64>,
    /// Lower bound on the certificate when evaluation stopped early because
    /// it already exceeded the best value found.
    pub lower_bound: Option<f64>,
    pub error: Option<String>,
}

/// Controller as it runs on the plant, with its design record.
///
/// When the model carries a feedthrough estimate `d_fold`, the matrices
/// already include the correction that feeds `y - d_fold u` to the
/// designed controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicController {
    #[serde(with = "rows")]
    pub a_k: Mat,
    #[serde(with = "rows")]
    pub b_k: Mat,
    #[serde(with = "rows")]
    pub c_k: Mat,
    #[serde(with = "rows")]
    pub d_k: Mat,
    #[serde(with = "rows")]
    pub d_fold: Mat,
    /// Small-gain certificate; infinite (`null` in JSON) when not computed.
    #[serde(with = "finite_or_null")]
    pub certificate: f64,
    pub rho: Option<f64>,
    pub mu: Option<f64>,
    pub design_log: Vec<SweepPoint>,
}

mod finite_or_null {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl DynamicController {
    /// A controller given directly by its matrices, not yet certified.
    pub fn from_parts(a_k: Mat, b_k: Mat, c_k: Mat, d_k: Mat) -> Result<Self> {
        crate::lti::check_quadruple(&a_k, &b_k, &c_k, &d_k)?;
        let d_fold = Mat::zeros(d_k.ncols(), d_k.nrows());
        Ok(DynamicController {
            a_k,
            b_k,
            c_k,
            d_k,
            d_fold,
            certificate: f64::INFINITY,
            rho: None,
            mu: None,
            design_log: Vec::new(),
        })
    }

    pub fn static_gain(k: Mat) -> Self {
        let ss = StateSpace::static_gain(k);
        Self::from_parts(ss.a, ss.b, ss.c, ss.d).expect("static gain is consistent")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut ctrl: DynamicController = serde_json::from_str(s)?;
        let nk = ctrl.a_k.nrows();
        let (d_u, d_y) = ctrl.d_k.shape();
        // empty row lists lose their column count
        if nk == 0 {
            ctrl.b_k = Mat::zeros(0, d_y);
            if ctrl.c_k.ncols() == 0 {
                ctrl.c_k = Mat::zeros(d_u, 0);
            }
        }
        crate::lti::check_quadruple(&ctrl.a_k, &ctrl.b_k, &ctrl.c_k, &ctrl.d_k)
            .map_err(|e| Error::Format(e.to_string()))?;
        if ctrl.d_fold.shape() != (d_y, d_u) {
            return Err(Error::Format("d_fold must be d_y x d_u".into()));
        }
        Ok(ctrl)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("controller serializes")
    }
}

impl Realization for DynamicController {
    fn a(&self) -> &Mat {
        &self.a_k
    }
    fn b(&self) -> &Mat {
        &self.b_k
    }
    fn c(&self) -> &Mat {
        &self.c_k
    }
    fn d(&self) -> &Mat {
        &self.d_k
    }
}

/// Rewrites a controller designed for `y` so that it can be driven by the
/// raw plant output while internally acting on `y - d_hat u`.
pub fn fold_feedthrough(ctrl: &StateSpace, d_hat: &Mat) -> Result<StateSpace> {
    let (d_u, d_y) = ctrl.d.shape();
    if d_hat.shape() != (d_y, d_u) {
        return Err(Error::Dimension("d_hat must be d_y x d_u".into()));
    }
    let e = (Mat::identity(d_u, d_u) + &ctrl.d * d_hat)
        .try_inverse()
        .ok_or(Error::WellPosedness)?;
    let d_k = &e * &ctrl.d;
    let c_k = &e * &ctrl.c;
    let a_k = &ctrl.a - &ctrl.b * d_hat * &c_k;
    let b_k = &ctrl.b * (Mat::identity(d_y, d_y) - d_hat * &d_k);
    Ok(StateSpace {
        a: a_k,
        b: b_k,
        c: c_k,
        d: d_k,
    })
}

/// Synthesis settings: the weight ladder shared by `rho` and `mu`, and the
/// frequency grid used for certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOptions {
    #[serde(default = "default_ladder")]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub grid: FreqGrid,
}

fn default_ladder() -> Vec<f64> {
    log_ladder(13, 1e-3, 1e3)
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            weights: default_ladder(),
            grid: FreqGrid::default(),
        }
    }
}

/// `count` logarithmically spaced values from `lo` to `hi`.
pub fn log_ladder(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

impl SynthOptions {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Parameter("weights must be a nonempty list of positive numbers".into()));
        }
        if self.weights.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("weights must be strictly increasing".into()));
        }
        self.grid.validate()
    }
}

fn observer_controller(model: &StateSpace, k: &Mat, l: &Mat) -> StateSpace {
    StateSpace {
        a: &model.a - &model.b * k - l * &model.c,
        b: l.clone(),
        c: -k,
        d: Mat::zeros(k.nrows(), l.ncols()),
    }
}

/// Observer-based output feedback for the identified model.
///
/// For every `rho` on the ladder the state-feedback gain comes from the
/// Riccati equation with state weight `rho I` and unit input weight, and
/// for every `mu` the predictor gain comes from the dual equation with
/// weight `mu I`. The pair with the smallest certificate wins, ties going
/// to the smaller `rho` and then `mu`. A model that is already stable gets
/// the zero controller, whose certificate is 0.
pub fn synthesize(model: &ReducedModel, opts: &SynthOptions) -> Result<DynamicController> {
    opts.validate()?;
    let plant = model.strictly_proper();
    let (k, d_u, d_y) = (model.k, model.d_hat.ncols(), model.d_hat.nrows());
    let mut log = Vec::new();

    if spectral_radius(&plant.a)? < 1.0 {
        log.push(SweepPoint {
            rho: None,
            mu: None,
            certificate: Some(0.0),
            lower_bound: None,
            error: None,
        });
        let zero = StateSpace::static_gain(Mat::zeros(d_u, d_y));
        return finish(zero, model, 0.0, None, None, log);
    }

    let ik = Mat::identity(k, k);
    // errors are kept as text so every sweep point can report them
    let gains = |a: &Mat, b: &Mat, w: f64, r_dim: usize| -> std::result::Result<Mat, String> {
        let r = Mat::identity(r_dim, r_dim);
        solve_dare(a, b, &(&ik * w), &r)
            .and_then(|p| lqr_gain(a, b, &r, &p))
            .map_err(|e| e.to_string())
    };
    let at = plant.a.transpose();
    let ct = plant.c.transpose();
    let feedback: Vec<_> = opts.weights.iter().map(|&w| gains(&plant.a, &plant.b, w, d_u)).collect();
    let observers: Vec<_> = opts
        .weights
        .iter()
        .map(|&w| gains(&at, &ct, w, d_y).map(|g| g.transpose()))
        .collect();

    let mut best: Option<(f64, StateSpace, f64, f64)> = None;
    for (&rho, kg) in opts.weights.iter().zip(&feedback) {
        for (&mu, lg) in opts.weights.iter().zip(&observers) {
            let mut point = SweepPoint {
                rho: Some(rho),
                mu: Some(mu),
                certificate: None,
                lower_bound: None,
                error: None,
            };
            let outcome = (|| -> Result<Option<(f64, StateSpace)>> {
                let kg = kg.as_ref().map_err(|e| Error::NumericFailure(e.clone()))?;
                let lg = lg.as_ref().map_err(|e| Error::NumericFailure(e.clone()))?;
                let ctrl = observer_controller(&plant, kg, lg);
                let sens = series_sensitivity(&plant, &ctrl)?;
                let cap = best.as_ref().map_or(f64::INFINITY, |b| b.0);
                match hinf_norm_capped(&sens, &opts.grid, cap)? {
                    Bounded::Norm(x) => {
                        point.certificate = Some(x);
                        Ok(Some((x, ctrl)))
                    }
                    Bounded::Exceeds(x) => {
                        point.lower_bound = Some(x);
                        Ok(None)
                    }
                }
            })();
            match outcome {
                Ok(Some((x, ctrl))) if best.as_ref().is_none_or(|b| x < b.0) => {
                    best = Some((x, ctrl, rho, mu));
                }
                Ok(_) => {}
                Err(e) => point.error = Some(e.to_string()),
            }
            log.push(point);
        }
    }
    match best {
        Some((cert, ctrl, rho, mu)) => finish(ctrl, model, cert, Some(rho), Some(mu), log),
        None => {
            let first = log.iter().find_map(|p| p.error.clone()).unwrap_or_default();
            Err(Error::SynthesisInfeasible(format!(
                "none of {} sweep points stabilizes the model (first error: {first})",
                log.len()
            )))
        }
    }
}

fn finish(
    designed: StateSpace,
    model: &ReducedModel,
    certificate: f64,
    rho: Option<f64>,
    mu: Option<f64>,
    design_log: Vec<SweepPoint>,
) -> Result<DynamicController> {
    let folded = fold_feedthrough(&designed, &model.d_hat)?;
    Ok(DynamicController {
        a_k: folded.a,
        b_k: folded.b,
        c_k: folded.c,
        d_k: folded.d,
        d_fold: model.d_hat.clone(),
        certificate,
        rho,
        mu,
        design_log,
    })
}

/// Small-gain certificate of a controller against a model, with the
/// guarantee margin when a bound on the neglected dynamics is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallGainReport {
    pub certificate: f64,
    pub delta_bound: Option<f64>,
    /// `1 - certificate * delta_bound`.
    pub small_gain_margin: Option<f64>,
    /// Whether stability is guaranteed for every remainder within the bound.
    pub guaranteed: Option<bool>,
}

/// Computes `||K (I - G K)^-1||_inf` for the model including its
/// feedthrough estimate, which for a folded controller equals the value for
/// the designed controller on the strictly proper model.
pub fn certify_small_gain(
    model: &impl Realization,
    ctrl: &impl Realization,
    delta_bound: Option<f64>,
    grid: &FreqGrid,
) -> Result<SmallGainReport> {
    let sens = series_sensitivity(model, ctrl)?;
    let certificate = hinf_norm(&sens, grid)?;
    if let Some(b) = delta_bound {
        if !(b >= 0.0) {
            return Err(Error::Parameter(format!("delta bound must be >= 0, got {b}")));
        }
    }
    let small_gain_margin = delta_bound.map(|b| 1.0 - certificate * b);
    Ok(SmallGainReport {
        certificate,
        delta_bound,
        small_gain_margin,
        guaranteed: small_gain_margin.map(|m| m > 0.0),
    })
}

/// Ground-truth check of a controller on the full plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    /// Spectral radius of the true closed loop (infinite if ill-posed).
    #[serde(with = "finite_or_null")]
    pub closed_loop_radius: f64,
    pub stabilized: bool,
    #[serde(with = "finite_or_null")]
    pub certificate: f64,
    /// `||Delta + D - d_fold||_inf` for the true stable remainder `Delta`.
    pub delta_hinf_bound: Option<f64>,
    pub small_gain_margin: Option<f64>,
    /// The simulated closed-loop state ended smaller than it started.
    pub sim_decay_check: bool,
}

pub const REPORT_CSV_HEADER: &str =
    "closed_loop_radius,stabilized,certificate,delta_hinf_bound,small_gain_margin,sim_decay_check";

impl StabilizationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV record matching [`REPORT_CSV_HEADER`]; absent values are empty.
    pub fn csv_line(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let fin = |x: f64| if x.is_finite() { x.to_string() } else { "inf".into() };
        format!(
            "{},{},{},{},{},{}",
            fin(self.closed_loop_radius),
            self.stabilized,
            fin(self.certificate),
            opt(self.delta_hinf_bound),
            opt(self.small_gain_margin),
            self.sim_decay_check
        )
    }
}

/// Spectral radius of the plant in closed loop with the controller;
/// infinite when the interconnection is ill-posed.
pub fn closed_loop_radius(sys: &LtiSystem, ctrl: &impl Realization) -> f64 {
    closed_loop_matrix(sys, ctrl)
        .and_then(|a| spectral_radius(&a))
        .unwrap_or(f64::INFINITY)
}

/// Whether a radius counts as stabilized.
pub fn is_stabilizing(radius: f64) -> bool {
    radius < 1.0 - 1e-9
}

/// Radius test, a noise-free closed-loop simulation from a random unit
/// state, and the small-gain margin against the true stable remainder.
pub fn verify_on_plant(sys: &LtiSystem, ctrl: &DynamicController, seed: u64) -> StabilizationReport {
    let closed_loop_radius = closed_loop_radius(sys, ctrl);
    let delta_hinf_bound = true_decomposition(sys).ok().and_then(|(_, mut stable)| {
        if stable.d.shape() != ctrl.d_fold.shape() {
            return None;
        }
        stable.d -= &ctrl.d_fold;
        hinf_norm(&stable, &FreqGrid::default()).ok()
    });
    let small_gain_margin = match delta_hinf_bound {
        Some(b) if ctrl.certificate.is_finite() => Some(1.0 - ctrl.certificate * b),
        _ => None,
    };
    let mut rng = seeds::rng(derive_seed(seed, STREAM_VERIFY, 0));
    let x0 = unit_vector(sys.n() + ctrl.order(), &mut rng);
    let sim_decay_check = simulate_closed_loop(sys, ctrl, &x0, SIM_STEPS).is_some_and(|norm| norm < x0.norm());
    StabilizationReport {
        closed_loop_radius,
        stabilized: is_stabilizing(closed_loop_radius),
        certificate: ctrl.certificate,
        delta_hinf_bound,
        small_gain_margin,
        sim_decay_check,
    }
}

/// Steps plant and controller side by side without noise and returns the
/// final norm of `[x; xi]`, or `None` on blow-up or an ill-posed loop.
fn simulate_closed_loop(sys: &LtiSystem, ctrl: &impl Realization, x0: &DVector<f64>, steps: usize) -> Option<f64> {
    let n = sys.n();
    let d_u = sys.d_u();
    let mut x = x0.rows(0, n).into_owned();
    let mut xi = x0.rows(n, ctrl.order()).into_owned();
    let solve = (Mat::identity(d_u, d_u) - ctrl.d() * &sys.d).try_inverse()?;
    for _ in 0..steps {
        let u = &solve * (ctrl.c() * &xi + ctrl.d() * (&sys.c * &x));
        let y = &sys.c * &x + &sys.d * &u;
        xi = ctrl.a() * &xi + ctrl.b() * &y;
        x = &sys.a * &x + &sys.b * &u;
        let norm = (x.norm_squared() + xi.norm_squared()).sqrt();
        if !(norm < 1e100) {
            return None;
        }
    }
    Some((x.norm_squared() + xi.norm_squared()).sqrt())
}
