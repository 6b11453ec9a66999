use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::LtiSystem;
use crate::error::{Error, Result};
use crate::numerics::{singular_values, Mat};
use crate::seeds;

const MAX_BASIS_DRAWS: usize = 100;

/// Recipe for a random benchmark plant with a planted real spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_unstable")]
    pub unstable_range: (f64, f64),
    #[serde(default = "default_stable")]
    pub stable_range: (f64, f64),
    #[serde(default = "one")]
    pub d_u: usize,
    #[serde(default = "one")]
    pub d_y: usize,
    #[serde(default = "default_cap")]
    pub basis_conditioning_cap: f64,
    /// Draw a nonzero feedthrough `D` with standard normal entries.
    #[serde(default)]
    pub feedthrough: bool,
}

fn default_unstable() -> (f64, f64) {
    (1.1, 2.0)
}
fn default_stable() -> (f64, f64) {
    (0.0, 0.5)
}
fn one() -> usize {
    1
}
fn default_cap() -> f64 {
    100.0
}

impl GenSpec {
    pub fn new(n: usize, k: usize) -> Self {
        GenSpec {
            n,
            k,
            unstable_range: default_unstable(),
            stable_range: default_stable(),
            d_u: 1,
            d_y: 1,
            basis_conditioning_cap: default_cap(),
            feedthrough: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.k == 0 || self.k > self.n {
            return bad(format!("need 0 < k <= n, got k = {}, n = {}", self.k, self.n));
        }
        if self.d_u == 0 || self.d_y == 0 {
            return bad("d_u and d_y must be at least 1".into());
        }
        let (lo, hi) = self.unstable_range;
        if !(lo > 1.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("unstable_range must satisfy 1 < lo <= hi, got [{lo}, {hi}]"));
        }
        let (lo, hi) = self.stable_range;
        if !(lo >= 0.0 && lo <= hi && hi < 1.0) {
            return bad(format!("stable_range must satisfy 0 <= lo <= hi < 1, got [{lo}, {hi}]"));
        }
        if !(self.basis_conditioning_cap >= 1.0) {
            return bad("basis_conditioning_cap must be >= 1".into());
        }
        Ok(())
    }
}

/// Draws `A = Q diag(lambda) Q^-1` with `k` eigenvalues from `unstable_range`
/// and `n - k` from `stable_range`, a Gaussian basis `Q` redrawn until its
/// condition number is within the cap, and Gaussian `B`, `C` (and `D` when
/// requested).
pub fn generate_system(spec: &GenSpec, seed: u64) -> Result<LtiSystem> {
    spec.validate()?;
    let mut rng = seeds::rng(seed);
    let n = spec.n;
    let unstable = Uniform::new_inclusive(spec.unstable_range.0, spec.unstable_range.1)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let stable = Uniform::new_inclusive(spec.stable_range.0, spec.stable_range.1)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let spectrum: Vec<f64> = (0..n)
        .map(|i| {
            if i < spec.k {
                unstable.sample(&mut rng)
            } else {
                stable.sample(&mut rng)
            }
        })
        .collect();

    let mut basis = None;
    let mut best = f64::INFINITY;
    for _ in 0..MAX_BASIS_DRAWS {
        let q = gaussian(n, n, &mut rng);
        let s = singular_values(&q)?;
        let cond = s[0] / s[n - 1];
        best = best.min(cond);
        if cond <= spec.basis_conditioning_cap {
            basis = Some(q);
            break;
        }
    }
    let q = basis.ok_or_else(|| {
        Error::Generation(format!(
            "no basis with condition number <= {} in {MAX_BASIS_DRAWS} draws (best {best:.1})",
            spec.basis_conditioning_cap
        ))
    })?;
    let q_inv = q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Generation("basis not invertible".into()))?;
    let a = &q * Mat::from_diagonal(&DVector::from_vec(spectrum)) * q_inv;
    let b = gaussian(n, spec.d_u, &mut rng);
    let c = gaussian(spec.d_y, n, &mut rng);
    let d = if spec.feedthrough {
        gaussian(spec.d_y, spec.d_u, &mut rng)
    } else {
        Mat::zeros(spec.d_y, spec.d_u)
    };
    LtiSystem::new(a, b, c, d)
}

fn gaussian(rows: usize, cols: usize, rng: &mut seeds::Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{eigenvalues, schur_split_unstable};

    #[test]
    fn degenerate_interval() {
        let mut spec = GenSpec::new(1, 1);
        spec.unstable_range = (2.0, 2.0);
        let sys = generate_system(&spec, 1).unwrap();
        assert!((sys.a[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fully_unstable_spectrum_in_range() {
        let sys = generate_system(&GenSpec::new(5, 5), 42).unwrap();
        for e in eigenvalues(&sys.a).unwrap() {
            assert!(e.norm() >= 1.1 - 1e-9 && e.norm() <= 2.0 + 1e-9, "{e}");
        }
    }

    #[test]
    fn split_recovers_k() {
        for seed in 0..5 {
            let sys = generate_system(&GenSpec::new(12, 3), seed).unwrap();
            assert_eq!(schur_split_unstable(&sys.a).unwrap().k(), 3);
        }
    }

    #[test]
    fn deterministic() {
        let spec = GenSpec::new(6, 2);
        assert_eq!(generate_system(&spec, 5).unwrap(), generate_system(&spec, 5).unwrap());
        assert_ne!(generate_system(&spec, 5).unwrap(), generate_system(&spec, 6).unwrap());
    }

    #[test]
    fn validation() {
        assert!(generate_system(&GenSpec::new(3, 0), 0).is_err());
        assert!(generate_system(&GenSpec::new(3, 4), 0).is_err());
        let mut spec = GenSpec::new(3, 1);
        spec.stable_range = (0.0, 1.0);
        assert!(matches!(generate_system(&spec, 0), Err(Error::Parameter(_))));
        let mut spec = GenSpec::new(30, 1);
        spec.basis_conditioning_cap = 1.0;
        assert!(matches!(generate_system(&spec, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn feedthrough_flag() {
        let mut spec = GenSpec::new(3, 1);
        assert!(generate_system(&spec, 0).unwrap().d.iter().all(|&x| x == 0.0));
        spec.feedthrough = true;
        assert!(generate_system(&spec, 0).unwrap().d.iter().any(|&x| x != 0.0));
    }
}
