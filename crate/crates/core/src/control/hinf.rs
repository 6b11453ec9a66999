use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::Realization;
use crate::numerics::{cnorm2, spectral_radius, FreqResponse};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const PEAKS_REFINED: usize = 3;
/// Stride of the coarse first pass used when a cap is given.
const COARSE_STRIDE: usize = 16;

/// Frequency grid for H-infinity norms: `n_points` angles spanning
/// `[0, pi]` (conjugate symmetry covers the lower half circle), then
/// golden-section refinement of the best peaks down to `tol` in angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqGrid {
    pub n_points: usize,
    pub refine_iters: usize,
    pub tol: f64,
}

impl Default for FreqGrid {
    fn default() -> Self {
        FreqGrid {
            n_points: 4096,
            refine_iters: 100,
            tol: 1e-6,
        }
    }
}

impl FreqGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 64 {
            return Err(Error::Parameter(format!(
                "frequency grid needs at least 64 points, got {}",
                self.n_points
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Parameter(format!("grid tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn angle(&self, i: usize) -> f64 {
        PI * i as f64 / (self.n_points - 1) as f64
    }
}

fn on_circle(theta: f64) -> Complex64 {
    // exact at the real-axis endpoints
    if theta == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if theta == PI {
        Complex64::new(-1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, theta)
    }
}

/// Outcome of a capped norm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounded {
    Norm(f64),
    /// The response exceeded the cap somewhere; the value is a lower bound.
    Exceeds(f64),
}

/// `sup_{|z| = 1} sigma_max(G(z))` for a stable `G`.
pub fn hinf_norm(ss: &impl Realization, grid: &FreqGrid) -> Result<f64> {
    match hinf_norm_capped(ss, grid, f64::INFINITY)? {
        Bounded::Norm(x) | Bounded::Exceeds(x) => Ok(x),
    }
}

/// Like [`hinf_norm`] but stops as soon as the response is seen above `cap`.
pub fn hinf_norm_capped(ss: &impl Realization, grid: &FreqGrid, cap: f64) -> Result<Bounded> {
    grid.validate()?;
    if ss.order() > 0 {
        let radius = spectral_radius(ss.a())?;
        if !(radius < 1.0) {
            return Err(Error::UnstableSystem(radius));
        }
    }
    let fr = FreqResponse::new(ss.a(), ss.b(), ss.c(), ss.d());
    let gain = |theta: f64| -> Result<f64> { Ok(cnorm2(&fr.eval(on_circle(theta))?)) };

    let n = grid.n_points;
    let mut values = vec![f64::NAN; n];
    let mut best = 0.0f64;
    if cap.is_finite() {
        for i in (0..n).step_by(COARSE_STRIDE).chain(std::iter::once(n - 1)) {
            values[i] = gain(grid.angle(i))?;
            best = best.max(values[i]);
            if best > cap {
                return Ok(Bounded::Exceeds(best));
            }
        }
    }
    for (i, v) in values.iter_mut().enumerate() {
        if v.is_nan() {
            *v = gain(grid.angle(i))?;
            best = best.max(*v);
            if best > cap {
                return Ok(Bounded::Exceeds(best));
            }
        }
    }

    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i == n - 1 || values[i] >= values[i + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    for &i in peaks.iter().take(PEAKS_REFINED) {
        let lo = grid.angle(i.saturating_sub(1));
        let hi = grid.angle((i + 1).min(n - 1));
        best = best.max(golden_max(&gain, lo, hi, grid)?);
        if best > cap {
            return Ok(Bounded::Exceeds(best));
        }
    }
    Ok(Bounded::Norm(best))
}

fn golden_max(f: &impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, grid: &FreqGrid) -> Result<f64> {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let mut best = f1.max(f2);
    for _ in 0..grid.refine_iters {
        if hi - lo < grid.tol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1)?;
            best = best.max(f1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2)?;
            best = best.max(f2);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::StateSpace;
    use nalgebra::dmatrix;

    fn first_order(pole: f64) -> StateSpace {
        StateSpace::new(dmatrix![pole], dmatrix![1.0], dmatrix![1.0], dmatrix![0.0]).unwrap()
    }

    #[test]
    fn first_order_peaks() {
        let g = FreqGrid::default();
        assert!((hinf_norm(&first_order(0.5), &g).unwrap() - 2.0).abs() < 1e-4);
        assert!((hinf_norm(&first_order(-0.5), &g).unwrap() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn static_gain() {
        let d = dmatrix![1.0, 2.0; 3.0, 4.0];
        let norm = hinf_norm(&StateSpace::static_gain(d.clone()), &FreqGrid::default()).unwrap();
        assert!((norm - crate::numerics::norm2(&d)).abs() < 1e-12);
    }

    #[test]
    fn interior_resonance_is_refined() {
        // lightly damped pair at angle 1.0 rad, off the coarse grid
        let (r, w) = (0.99f64, 1.0f64);
        let a = dmatrix![r * w.cos(), -r * w.sin(); r * w.sin(), r * w.cos()];
        let sys = StateSpace::new(a, dmatrix![1.0; 0.0], dmatrix![0.0, 1.0], dmatrix![0.0]).unwrap();
        let grid = FreqGrid {
            n_points: 64,
            ..FreqGrid::default()
        };
        let coarse = hinf_norm(&sys, &grid).unwrap();
        let dense = (0..200_000)
            .map(|i| {
                let z = on_circle(PI * i as f64 / 199_999.0);
                cnorm2(&crate::lti::transfer_eval(&sys, z).unwrap())
            })
            .fold(0.0, f64::max);
        assert!((coarse - dense).abs() < 1e-4 * dense, "{coarse} vs {dense}");
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(
            hinf_norm(&first_order(1.5), &FreqGrid::default()),
            Err(Error::UnstableSystem(_))
        ));
    }

    #[test]
    fn cap_short_circuits() {
        let g = FreqGrid::default();
        assert!(matches!(
            hinf_norm_capped(&first_order(0.5), &g, 1.0).unwrap(),
            Bounded::Exceeds(x) if x > 1.0
        ));
        match hinf_norm_capped(&first_order(0.5), &g, 3.0).unwrap() {
            Bounded::Norm(x) => assert!((x - 2.0).abs() < 1e-4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        let g = FreqGrid {
            n_points: 10,
            ..FreqGrid::default()
        };
        assert!(hinf_norm(&first_order(0.5), &g).is_err());
    }
}
