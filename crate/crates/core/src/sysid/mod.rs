//! Identification of the unstable part of a plant from rollouts.
//!
//! Markov parameters are fitted by least squares over all rollouts, the
//! lifted Hankel matrix starting `m` blocks in is truncated to rank `k`,
//! and a `k`-state model is read off its observability/controllability
//! factors.

mod presets;

pub use presets::{fixed_length_preset, theorem_presets, Preset, PresetHints};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lti::{Realization, Rollout, RolloutSet};
use crate::numerics::{eigenvalues, inverse_condition, lstsq_left, lstsq_right, norm2, rows, svd, Mat};

/// Gap ratios below this are reported as a weak spectral gap.
pub const WEAK_GAP: f64 = 10.0;

/// Least-squares estimate of `[D, CB, CAB, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovEstimate {
    /// `d_y x T*d_u`; block `j` (from 1) multiplies `u_{t-j+1}`.
    #[serde(with = "rows")]
    pub phi: Mat,
    #[serde(with = "rows")]
    pub d_hat: Mat,
    pub d_u: usize,
    pub d_y: usize,
    pub rollouts: usize,
    pub t: usize,
    pub sigma_u: f64,
}

impl MarkovEstimate {
    /// Block `j`, counted from 1.
    pub fn block(&self, j: usize) -> Mat {
        self.phi.columns((j - 1) * self.d_u, self.d_u).into_owned()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let est: MarkovEstimate = serde_json::from_str(s)?;
        let shape_ok = est.d_u > 0
            && est.d_y > 0
            && est.phi.shape() == (est.d_y, est.t * est.d_u)
            && est.d_hat.shape() == (est.d_y, est.d_u);
        if !shape_ok {
            return Err(Error::Format("Markov estimate shapes do not match d_u, d_y, t".into()));
        }
        crate::numerics::ensure_finite(&est.phi, "Markov estimate")?;
        Ok(est)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Lifted Hankel matrix with block `(i, j)` equal to Markov block `i + j + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelEstimate {
    pub h: Mat,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub d_u: usize,
    pub d_y: usize,
    pub svals: Vec<f64>,
}

/// Balanced rank-`k` factors `o_hat * c_hat` of a Hankel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub o_hat: Mat,
    pub c_hat: Mat,
    pub k: usize,
    pub sigma_top: Vec<f64>,
    /// `sigma_k / sigma_{k+1}`, infinite when nothing is truncated.
    pub gap_ratio: f64,
    pub d_u: usize,
    pub d_y: usize,
}

/// Order chosen from the Hankel spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEstimate {
    pub k: usize,
    pub gap_ratio: f64,
}

impl OrderEstimate {
    pub fn is_weak(&self) -> bool {
        self.gap_ratio < WEAK_GAP
    }
}

/// Identified `k`-state model of the unstable part, plus the estimated feedthrough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedModel {
    #[serde(with = "rows")]
    pub n1: Mat,
    #[serde(with = "rows")]
    pub b1: Mat,
    #[serde(with = "rows")]
    pub c1: Mat,
    #[serde(with = "rows")]
    pub d_hat: Mat,
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub sigma_top: Vec<f64>,
    #[serde(with = "maybe_inf")]
    pub gap_ratio: f64,
    pub hankel_svals: Vec<f64>,
    /// Spectral norm of the difference between the two `N^(m/2)` estimates.
    pub power_discrepancy: f64,
    /// Eigenvalues of `n1` as `[re, im]`, sorted by decreasing modulus.
    #[serde(with = "complex_pairs")]
    pub eigenvalues: Vec<Complex64>,
}

impl ReducedModel {
    pub fn from_json(s: &str) -> Result<Self> {
        let model: ReducedModel = serde_json::from_str(s)?;
        let (k, d_u, d_y) = (model.k, model.d_hat.ncols(), model.d_hat.nrows());
        let shape_ok = k >= 1
            && d_u > 0
            && model.n1.shape() == (k, k)
            && model.b1.shape() == (k, d_u)
            && model.c1.shape() == (d_y, k);
        if !shape_ok {
            return Err(Error::Format("model matrices do not fit k, d_u, d_y".into()));
        }
        for (m, what) in [
            (&model.n1, "n1"),
            (&model.b1, "b1"),
            (&model.c1, "c1"),
            (&model.d_hat, "d_hat"),
        ] {
            crate::numerics::ensure_finite(m, what)?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// The same model with its feedthrough removed.
    pub fn strictly_proper(&self) -> crate::lti::StateSpace {
        crate::lti::StateSpace {
            a: self.n1.clone(),
            b: self.b1.clone(),
            c: self.c1.clone(),
            d: Mat::zeros(self.d_hat.nrows(), self.d_hat.ncols()),
        }
    }
}

impl Realization for ReducedModel {
    fn a(&self) -> &Mat {
        &self.n1
    }
    fn b(&self) -> &Mat {
        &self.b1
    }
    fn c(&self) -> &Mat {
        &self.c1
    }
    fn d(&self) -> &Mat {
        &self.d_hat
    }
}

mod maybe_inf {
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

mod complex_pairs {
    use super::*;

    pub fn serialize<S: Serializer>(z: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(z.iter().map(|z| [z.re, z.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect())
    }
}

/// Block upper-triangular Toeplitz matrix of one rollout's inputs.
///
/// Column `t` stacks `u_t, u_{t-1}, ..., u_0` followed by zeros, so that
/// the noiseless outputs are `phi * toeplitz_inputs(rollout)`.
pub fn toeplitz_inputs(rollout: &Rollout) -> Mat {
    let u = &rollout.inputs;
    let (d_u, t_len) = u.shape();
    let mut out = Mat::zeros(t_len * d_u, t_len);
    for t in 0..t_len {
        for r in 0..=t {
            out.view_mut((r * d_u, t), (d_u, 1)).copy_from(&u.column(t - r));
        }
    }
    out
}

/// Fits the Markov parameters to all rollouts by orthogonal least squares.
pub fn estimate_markov(data: &RolloutSet) -> Result<MarkovEstimate> {
    let (m, t, d_u, d_y) = (data.m(), data.t(), data.d_u(), data.d_y());
    let mut u = Mat::zeros(t * d_u, m * t);
    let mut y = Mat::zeros(d_y, m * t);
    for (i, r) in data.rollouts.iter().enumerate() {
        u.columns_mut(i * t, t).copy_from(&toeplitz_inputs(r));
        y.columns_mut(i * t, t).copy_from(&r.outputs);
    }
    let phi = lstsq_right(&y, &u).map_err(|e| match e {
        Error::RankDeficient { ratio, context } => Error::RankDeficient {
            ratio,
            context: format!("{context} with M = {m}, T = {t}, d_u = {d_u}"),
        },
        e => e,
    })?;
    let d_hat = phi.columns(0, d_u).into_owned();
    Ok(MarkovEstimate {
        phi,
        d_hat,
        d_u,
        d_y,
        rollouts: m,
        t,
        sigma_u: data.sigma_u,
    })
}

fn check_lifting(m: usize, p: usize, q: usize, t: usize) -> Result<()> {
    if !m.is_multiple_of(2) {
        return Err(Error::Parameter(format!("m must be even, got {m}")));
    }
    if p == 0 || q == 0 {
        return Err(Error::Parameter(format!("need p >= 1 and q >= 1, got p = {p}, q = {q}")));
    }
    if m + p + q > t {
        return Err(Error::Parameter(format!(
            "m + p + q <= T violated: {m} + {p} + {q} > {t}"
        )));
    }
    Ok(())
}

/// Builds the `p x q` block Hankel matrix offset by `m` from the estimate.
pub fn assemble_hankel(phi: &MarkovEstimate, m: usize, p: usize, q: usize) -> Result<HankelEstimate> {
    check_lifting(m, p, q, phi.t)?;
    let (d_u, d_y) = (phi.d_u, phi.d_y);
    let mut h = Mat::zeros(p * d_y, q * d_u);
    for i in 1..=p {
        for j in 1..=q {
            let col = (i + j + m - 1) * d_u;
            h.view_mut(((i - 1) * d_y, (j - 1) * d_u), (d_y, d_u))
                .copy_from(&phi.phi.columns(col, d_u));
        }
    }
    let svals = crate::numerics::singular_values(&h)?;
    Ok(HankelEstimate {
        h,
        m,
        p,
        q,
        d_u,
        d_y,
        svals,
    })
}

/// Picks the order at the largest ratio between consecutive singular values.
///
/// Only `k <= k_max` is considered, `sigma_k` must be above the rounding
/// floor `1e-12 * sigma_1`, and ties go to the smaller `k`.
pub fn detect_order(svals: &[f64], k_max: usize) -> Result<OrderEstimate> {
    if svals.len() < 2 {
        return Err(Error::Parameter("order detection needs at least two singular values".into()));
    }
    if k_max == 0 {
        return Err(Error::Parameter("k_max must be at least 1".into()));
    }
    if !(svals[0] >= 1e-12) {
        return Err(Error::DegenerateHankel(svals[0]));
    }
    let mut best = OrderEstimate {
        k: 0,
        gap_ratio: f64::NEG_INFINITY,
    };
    // values at the rounding floor carry no order information
    let floor = 1e-12 * svals[0];
    for i in 1..=k_max.min(svals.len() - 1) {
        if svals[i - 1] < floor {
            break;
        }
        let ratio = if svals[i] > 0.0 {
            svals[i - 1] / svals[i]
        } else {
            f64::INFINITY
        };
        if ratio > best.gap_ratio {
            best = OrderEstimate { k: i, gap_ratio: ratio };
        }
    }
    if best.is_weak() {
        log::warn!(
            "weak spectral gap: best ratio {:.3} at k = {}; the lifting may be too short",
            best.gap_ratio,
            best.k
        );
    }
    Ok(best)
}

/// Rank-`k` truncation of the Hankel matrix split evenly between its factors.
pub fn factor_rank_k(h: &HankelEstimate, k: usize) -> Result<LowRankFactors> {
    let limit = h.h.nrows().min(h.h.ncols());
    if k == 0 || k > limit {
        return Err(Error::Parameter(format!("need 1 <= k <= {limit}, got k = {k}")));
    }
    let dec = svd(&h.h)?;
    let ratio = dec.s[k - 1] / dec.s[0].max(f64::MIN_POSITIVE);
    if !(ratio >= 1e-12) {
        return Err(Error::RankDeficient {
            ratio,
            context: format!(" (Hankel singular value {k} relative to the largest)"),
        });
    }
    let mut o_hat = dec.u.columns(0, k).into_owned();
    let mut c_hat = dec.vt.rows(0, k).into_owned();
    for j in 0..k {
        let r = dec.s[j].sqrt();
        o_hat.column_mut(j).scale_mut(r);
        c_hat.row_mut(j).scale_mut(r);
    }
    let gap_ratio = match dec.s.get(k) {
        Some(&next) if next > 0.0 => dec.s[k - 1] / next,
        _ => f64::INFINITY,
    };
    Ok(LowRankFactors {
        o_hat,
        c_hat,
        k,
        sigma_top: dec.s[..k].to_vec(),
        gap_ratio,
        d_u: h.d_u,
        d_y: h.d_y,
    })
}

fn invertible(m: &Mat, what: &'static str) -> Result<Mat> {
    let ratio = inverse_condition(m)?;
    if !(ratio >= 1e-10) {
        return Err(Error::ExtractionSingular { what, ratio });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::ExtractionSingular { what, ratio })
}

/// Reads `(n1, b1, c1)` off the factors of an `m`-offset Hankel matrix.
///
/// `n1` comes from the one-block shift of `o_hat`. The `m/2`-th power of
/// the state matrix is estimated separately from `o_hat` and from `c_hat`,
/// and undone on the first block row (for `c1`) and column (for `b1`).
pub fn extract_model(
    f: &LowRankFactors,
    m: usize,
    p: usize,
    q: usize,
    d_hat: &Mat,
) -> Result<ReducedModel> {
    let (k, d_u, d_y) = (f.k, f.d_u, f.d_y);
    let h = m / 2;
    if !m.is_multiple_of(2) {
        return Err(Error::Parameter(format!("m must be even, got {m}")));
    }
    if f.o_hat.shape() != (p * d_y, k) || f.c_hat.shape() != (k, q * d_u) {
        return Err(Error::Dimension(format!(
            "factors do not match p = {p}, q = {q}, k = {k}"
        )));
    }
    if d_hat.shape() != (d_y, d_u) {
        return Err(Error::Dimension("d_hat must be d_y x d_u".into()));
    }
    if p < 2 || p < h + 1 || q < h + 1 {
        return Err(Error::Parameter(format!(
            "need p >= 2, p >= m/2 + 1 and q >= m/2 + 1, got m = {m}, p = {p}, q = {q}"
        )));
    }
    let o_rows = |from: usize, count: usize| f.o_hat.rows(from * d_y, count * d_y).into_owned();
    let c_cols = |from: usize, count: usize| f.c_hat.columns(from * d_u, count * d_u).into_owned();

    let n1 = lstsq_left(&o_rows(0, p - 1), &o_rows(1, p - 1))?;
    let (c1, b1, power_discrepancy) = if h == 0 {
        (o_rows(0, 1), c_cols(0, 1), 0.0)
    } else {
        let from_o = lstsq_left(&o_rows(0, p - h), &o_rows(h, p - h))?;
        let from_c = lstsq_right(&c_cols(h, q - h), &c_cols(0, q - h))?;
        let c1 = o_rows(0, 1) * invertible(&from_o, "observability-side N^(m/2)")?;
        let b1 = invertible(&from_c, "controllability-side N^(m/2)")? * c_cols(0, 1);
        (c1, b1, norm2(&(from_o - from_c)))
    };
    for (mat, what) in [(&n1, "n1"), (&b1, "b1"), (&c1, "c1")] {
        crate::numerics::ensure_finite(mat, what)?;
    }
    let eigenvalues = eigenvalues(&n1)?;
    Ok(ReducedModel {
        n1,
        b1,
        c1,
        d_hat: d_hat.clone(),
        k,
        m,
        p,
        q,
        sigma_top: f.sigma_top.clone(),
        gap_ratio: f.gap_ratio,
        hankel_svals: Vec::new(),
        power_discrepancy,
        eigenvalues,
    })
}

/// How the model order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderChoice {
    Fixed(usize),
    /// Largest spectral gap, searched up to `IdentConfig::k_max`.
    Auto,
}

impl Serialize for OrderChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OrderChoice::Fixed(k) => s.serialize_u64(*k as u64),
            OrderChoice::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for OrderChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Fixed(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Fixed(k) => Ok(OrderChoice::Fixed(k)),
            Raw::Word(w) if w == "auto" => Ok(OrderChoice::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "k must be a positive integer or \"auto\", got {w:?}"
            ))),
        }
    }
}

/// Lifting and order settings for [`identify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentConfig {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub k: OrderChoice,
    /// Search cap for automatic order selection, default `min(p, q) - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

impl IdentConfig {
    pub fn fixed(m: usize, p: usize, q: usize, k: usize) -> Self {
        IdentConfig {
            m,
            p,
            q,
            k: OrderChoice::Fixed(k),
            k_max: None,
        }
    }

    pub fn auto(m: usize, p: usize, q: usize) -> Self {
        IdentConfig {
            m,
            p,
            q,
            k: OrderChoice::Auto,
            k_max: None,
        }
    }

    fn k_max(&self) -> usize {
        self.k_max
            .unwrap_or(self.p.min(self.q).saturating_sub(1).max(1))
    }

    /// Checks the configuration against a rollout length.
    pub fn validate(&self, t: usize) -> Result<()> {
        check_lifting(self.m, self.p, self.q, t)?;
        let h = self.m / 2;
        if self.p < 2 || self.p < h + 1 || self.q < h + 1 {
            return Err(Error::Parameter(format!(
                "need p >= 2, p >= m/2 + 1 and q >= m/2 + 1, got m = {}, p = {}, q = {}",
                self.m, self.p, self.q
            )));
        }
        if let OrderChoice::Fixed(0) = self.k {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks that a fixed order fits the Hankel and shift-regression
    /// blocks, which need at least `k` rows (or columns) each.
    pub fn check_order(&self, d_u: usize, d_y: usize) -> Result<()> {
        let OrderChoice::Fixed(k) = self.k else {
            return Ok(());
        };
        let h = self.m / 2;
        let rows = (self.p - 1).min(self.p - h) * d_y;
        let cols = (self.q - h) * d_u;
        if k > rows.min(cols) {
            return Err(Error::Parameter(format!(
                "order k = {k} needs at least k rows and columns in the shifted Hankel blocks; \
                 m = {}, p = {}, q = {}, d_u = {d_u}, d_y = {d_y} give {rows} rows and {cols} columns",
                self.m, self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Full identification: Markov fit, Hankel assembly, order choice,
/// truncation and extraction, with errors tagged by stage.
pub fn identify(data: &RolloutSet, cfg: &IdentConfig) -> Result<ReducedModel> {
    cfg.validate(data.t())
        .and_then(|_| cfg.check_order(data.d_u(), data.d_y()))
        .map_err(|e| e.at("config"))?;
    let phi = estimate_markov(data).map_err(|e| e.at("markov"))?;
    identify_from_markov(&phi, cfg)
}

/// [`identify`] starting from an existing Markov estimate.
pub fn identify_from_markov(phi: &MarkovEstimate, cfg: &IdentConfig) -> Result<ReducedModel> {
    cfg.validate(phi.t)
        .and_then(|_| cfg.check_order(phi.d_u, phi.d_y))
        .map_err(|e| e.at("config"))?;
    let hankel = assemble_hankel(phi, cfg.m, cfg.p, cfg.q).map_err(|e| e.at("hankel"))?;
    let k = match cfg.k {
        OrderChoice::Fixed(k) => k,
        OrderChoice::Auto => {
            detect_order(&hankel.svals, cfg.k_max())
                .map_err(|e| e.at("order"))?
                .k
        }
    };
    let factors = factor_rank_k(&hankel, k).map_err(|e| e.at("factor"))?;
    let mut model =
        extract_model(&factors, cfg.m, cfg.p, cfg.q, &phi.d_hat).map_err(|e| e.at("extract"))?;
    model.hankel_svals = hankel.svals;
    Ok(model)
}

/// Singular values as CSV with header `i,sigma_i`, indexed from 1.
pub fn svals_csv(svals: &[f64]) -> String {
    let mut out = String::from("i,sigma_i\n");
    for (i, s) in svals.iter().enumerate() {
        out.push_str(&format!("{},{:e}\n", i + 1, s));
    }
    out
}
