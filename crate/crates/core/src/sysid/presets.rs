use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_M: usize = 10;
const MAX_M: usize = 40;
/// Target for the truncation factor `((|lambda_{k+1}| + 1) / 2)^m` when `m`
/// is picked from a stable-modulus guess.
const TRUNCATION_TARGET: f64 = 1e-2;

/// What is known up front about the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetHints {
    pub d_u: usize,
    pub d_y: usize,
    /// Lifting offset; chosen from `stable_modulus` or a default when absent.
    #[serde(default)]
    pub m: Option<usize>,
    /// Guess of the largest stable eigenvalue modulus.
    #[serde(default)]
    pub stable_modulus: Option<f64>,
    /// Lower bound on the number of rollouts.
    #[serde(default)]
    pub min_rollouts: usize,
}

impl PresetHints {
    pub fn new(d_u: usize, d_y: usize) -> Self {
        PresetHints {
            d_u,
            d_y,
            m: None,
            stable_modulus: None,
            min_rollouts: 0,
        }
    }
}

/// Rollout length, lifting and rollout count for one identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub t: usize,
    pub rollouts: usize,
    /// The sample-complexity lower bound the rollout count was derived from.
    pub bound: f64,
    pub formula: String,
}

/// Settings with `p = q = m`, `T = 3m + 2` and the smallest `M` exceeding
/// `8 d_u T + 4 (d_u + d_y + 4) log(3T / delta)`, where `delta` is the
/// allowed failure probability.
pub fn theorem_presets(hints: &PresetHints, delta: f64) -> Result<Preset> {
    if hints.d_u == 0 || hints.d_y == 0 {
        return Err(Error::Parameter("d_u and d_y must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let m = match (hints.m, hints.stable_modulus) {
        (Some(m), _) if m == 0 || m % 2 != 0 => {
            return Err(Error::Parameter(format!("m must be a positive even number, got {m}")))
        }
        (Some(m), _) => m,
        (None, Some(rho)) if (0.0..1.0).contains(&rho) => {
            let factor = (rho + 1.0) / 2.0;
            (1..=MAX_M / 2)
                .map(|i| 2 * i)
                .find(|&m| factor.powi(m as i32) <= TRUNCATION_TARGET)
                .unwrap_or(MAX_M)
        }
        (None, Some(rho)) => {
            return Err(Error::Parameter(format!("stable_modulus must lie in [0, 1), got {rho}")))
        }
        (None, None) => DEFAULT_M,
    };
    let t = 3 * m + 2;
    let (d_u, d_y) = (hints.d_u as f64, hints.d_y as f64);
    let bound = 8.0 * d_u * t as f64 + 4.0 * (d_u + d_y + 4.0) * (3.0 * t as f64 / delta).ln();
    let rollouts = (bound.floor() as usize + 1).max(hints.min_rollouts);
    let formula = format!(
        "p = q = m = {m}; T = 3m + 2 = {t}; M > 8*{d_u}*{t} + 4*({d_u}+{d_y}+4)*ln(3*{t}/{delta}) = {bound:.2}"
    );
    log::info!("preset: {formula}; M = {rollouts}");
    Ok(Preset {
        m,
        p: m,
        q: m,
        t,
        rollouts,
        bound,
        formula,
    })
}

/// `p = q = floor((T - m) / 2)` for a given rollout length.
pub fn fixed_length_preset(t: usize, m: usize) -> Result<(usize, usize)> {
    if !m.is_multiple_of(2) {
        return Err(Error::Parameter(format!("m must be even, got {m}")));
    }
    let p = t.saturating_sub(m) / 2;
    if p < (m / 2 + 1).max(2) {
        return Err(Error::Parameter(format!("T = {t} is too short for m = {m}")));
    }
    Ok((p, p))
}
