use super::{ensure_finite, ensure_square, identity, spectral_radius, Mat};
use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const CONVERGED: f64 = 1e-12;
const ACCEPTED: f64 = 1e-8;
const NEWTON_ITER: usize = 50;
const SMITH_ITER: usize = 64;
/// State-weight scalings tried for a stabilizing Newton start.
const FALLBACK_SCALES: [f64; 3] = [1e-2, 1e-4, 1e-6];

/// Stabilizing solution of `P = A'PA - A'PB (B'PB + R)^-1 B'PA + Q`.
///
/// Structure-preserving doubling: with `G = B R^-1 B'` the iteration
///
/// ```text
/// W     = I + G_k H_k
/// A_k+1 = A_k W^-1 A_k
/// G_k+1 = G_k + A_k W^-1 G_k A_k'
/// H_k+1 = H_k + A_k' H_k W^-1 A_k
/// ```
///
/// converges quadratically with `H_k -> P`. If the residual is still large
/// (cheap-control problems with a large `G`), Newton steps from the doubling
/// estimate polish it, provided its gain stabilizes. The result is accepted when the
/// Riccati residual is below `1e-8 (1 + ||P||)` and `A - BK` is Schur stable.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    ensure_square(a, "DARE state matrix")?;
    ensure_square(q, "DARE state weight")?;
    ensure_square(r, "DARE input weight")?;
    let n = a.nrows();
    if b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
        return Err(Error::Dimension(format!(
            "DARE shapes: a {n}x{n}, b {}x{}, q {}x{}, r {}x{}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    for (m, what) in [(a, "a"), (b, "b"), (q, "q"), (r, "r")] {
        ensure_finite(m, if what == "a" { "DARE a" } else { "DARE weights" })?;
    }
    if (q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) {
        return Err(Error::Parameter("DARE state weight q must be symmetric".into()));
    }
    if n > 0 {
        let qmin = q.clone().symmetric_eigenvalues().min();
        if qmin < -1e-12 * (1.0 + q.norm()) {
            return Err(Error::Parameter("DARE state weight q must be positive semidefinite".into()));
        }
    }
    let r_chol = nalgebra::Cholesky::new(r.clone())
        .ok_or_else(|| Error::Parameter("DARE input weight r must be positive definite".into()))?;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    let g = b * r_chol.solve(&b.transpose());
    let (mut p, mut converged) = doubling(a, &g, q)?;
    let accepted = |p: &Mat| -> Result<bool> {
        Ok((dare_rhs(a, b, q, r, p)? - p).norm() <= ACCEPTED * (1.0 + p.norm()))
    };
    if !accepted(&p)? {
        // Newton needs a stabilizing start; the doubling estimate may not
        // give one, while the same problem with a lighter state weight often does
        let starts = std::iter::once(Some(p.clone())).chain(
            FALLBACK_SCALES
                .iter()
                .map(|&s| doubling(a, &g, &(q * s)).ok().map(|(p0, _)| p0)),
        );
        for start in starts.flatten() {
            if let Some(refined) = newton_refine(a, b, q, r, &start) {
                if accepted(&refined)? {
                    p = refined;
                    converged = true;
                    break;
                }
            }
        }
    }
    let residual = (dare_rhs(a, b, q, r, &p)? - &p).norm();
    if !converged && residual > ACCEPTED * (1.0 + p.norm()) {
        return Err(Error::SynthesisInfeasible(format!(
            "doubling did not converge in {MAX_ITER} iterations"
        )));
    }
    if residual > ACCEPTED * (1.0 + p.norm()) {
        return Err(Error::SynthesisInfeasible(format!(
            "Riccati residual {residual:e} too large; (a, b) may not be stabilizable"
        )));
    }
    let k = lqr_gain(a, b, r, &p)?;
    let rho = spectral_radius(&(a - b * k))?;
    if rho >= 1.0 {
        return Err(Error::SynthesisInfeasible(format!(
            "Riccati solution is not stabilizing (closed-loop radius {rho})"
        )));
    }
    Ok(p)
}

/// Doubling iterates from `(A, G, Q)`; returns the last `H` and whether the
/// step size fell below the convergence threshold.
fn doubling(a: &Mat, g: &Mat, q: &Mat) -> Result<(Mat, bool)> {
    let n = a.nrows();
    let mut ak = a.clone();
    let mut gk = g.clone();
    let mut hk = q.clone();
    let eye = identity(n);
    for _ in 0..MAX_ITER {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let x1 = lu
            .solve(&ak)
            .ok_or_else(|| Error::SynthesisInfeasible("doubling step hit a singular I + GH".into()))?;
        let x2 = lu
            .solve(&gk)
            .ok_or_else(|| Error::SynthesisInfeasible("doubling step hit a singular I + GH".into()))?;
        let h_next = &hk + ak.transpose() * &hk * &x1;
        let g_next = &gk + &ak * x2 * ak.transpose();
        let a_next = &ak * x1;
        let h_next = (&h_next + h_next.transpose()) * 0.5;
        let g_next = (&g_next + g_next.transpose()) * 0.5;
        if !h_next.iter().chain(g_next.iter()).chain(a_next.iter()).all(|x| x.is_finite()) {
            return Err(Error::SynthesisInfeasible("doubling iteration diverged".into()));
        }
        let step = (&h_next - &hk).norm();
        hk = h_next;
        gk = g_next;
        ak = a_next;
        if step <= CONVERGED * (1.0 + hk.norm()) {
            return Ok((hk, true));
        }
    }
    Ok((hk, false))
}

/// Newton (Hewer) iteration from `p`, each step solving the Stein equation
/// of the current closed loop. `None` once a gain fails to stabilize.
fn newton_refine(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Option<Mat> {
    let mut p = p.clone();
    for _ in 0..NEWTON_ITER {
        let k = lqr_gain(a, b, r, &p).ok()?;
        let closed = a - b * &k;
        if spectral_radius(&closed).ok()? >= 1.0 {
            return None;
        }
        let next = solve_stein(&closed, &(q + k.transpose() * r * &k))?;
        let step = (&next - &p).norm();
        p = next;
        if step <= CONVERGED * (1.0 + p.norm()) {
            break;
        }
    }
    Some(p)
}

/// `X = A'XA + W` for Schur-stable `A`, by Smith's squaring iteration.
fn solve_stein(a: &Mat, w: &Mat) -> Option<Mat> {
    let mut x = w.clone();
    let mut ak = a.clone();
    for _ in 0..SMITH_ITER {
        let inc = ak.transpose() * &x * &ak;
        x += &inc;
        ak = &ak * &ak;
        if !x.iter().chain(ak.iter()).all(|v| v.is_finite()) {
            return None;
        }
        if inc.norm() <= f64::EPSILON * x.norm() {
            break;
        }
    }
    Some((&x + x.transpose()) * 0.5)
}

/// `K = (B'PB + R)^-1 B'PA`, so that `A - BK` is the closed loop.
pub fn lqr_gain(a: &Mat, b: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let bt_p = b.transpose() * p;
    let lhs = &bt_p * b + r;
    lhs.lu()
        .solve(&(bt_p * a))
        .ok_or_else(|| Error::SynthesisInfeasible("B'PB + R is singular".into()))
}

fn dare_rhs(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let at_p = a.transpose() * p;
    let k = lqr_gain(a, b, r, p)?;
    Ok(&at_p * a - &at_p * b * k + q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> Mat {
        dmatrix![x]
    }

    #[test]
    fn deadbeat_scalar() {
        let p = solve_dare(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_scalar() {
        // P^2 - 4P - 1 = 0 -> P = 2 + sqrt 5
        let (a, b, r) = (scalar(2.0), scalar(1.0), scalar(1.0));
        let p = solve_dare(&a, &b, &scalar(1.0), &r).unwrap();
        let want = 2.0 + 5f64.sqrt();
        assert!((p[(0, 0)] - want).abs() < 1e-8);
        let k = lqr_gain(&a, &b, &r, &p).unwrap()[(0, 0)];
        assert!((k - 2.0 * want / (want + 1.0)).abs() < 1e-10);
        assert!((k - 1.618033988749895).abs() < 1e-8);
        assert!((2.0 - k - 0.381966011250105).abs() < 1e-8);
    }

    #[test]
    fn stable_zero_cost() {
        let p = solve_dare(&scalar(0.5), &scalar(1.0), &scalar(0.0), &scalar(1.0)).unwrap();
        assert!(p[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_weights() {
        let one = scalar(1.0);
        assert!(matches!(
            solve_dare(&one, &one, &scalar(-1.0), &one),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            solve_dare(&one, &one, &one, &scalar(0.0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn unstabilizable_pair() {
        // the mode at 2 is not reachable from b
        let a = dmatrix![2.0, 0.0; 0.0, 0.5];
        let b = dmatrix![0.0; 1.0];
        let err = solve_dare(&a, &b, &Mat::identity(2, 2), &scalar(1.0)).unwrap_err();
        assert!(matches!(err, Error::SynthesisInfeasible(_)), "{err:?}");
    }

    #[test]
    fn stein_matches_series() {
        let a = dmatrix![0.5, 0.3; -0.2, 0.7];
        let w = dmatrix![2.0, 0.5; 0.5, 1.0];
        let x = solve_stein(&a, &w).unwrap();
        let mut series = w.clone();
        let mut ak = a.clone();
        for _ in 0..400 {
            series += ak.transpose() * &w * &ak;
            ak = &ak * &a;
        }
        assert!((&x - &series).norm() < 1e-12 * series.norm());
        assert!((a.transpose() * &x * &a + &w - &x).norm() < 1e-12 * x.norm());
    }

    #[test]
    fn cheap_control_with_large_input_matrix() {
        // G = B B' of order 1e12 leaves I + GH badly conditioned
        let a = dmatrix![1.39, 0.4, 0.0; 0.0, 0.97, 0.3; 0.1, 0.0, 0.95];
        let b = dmatrix![2e6; -1.1e6; 7e5];
        for w in [1e-2, 1.0, 1e2] {
            let q = Mat::identity(3, 3) * w;
            let r = scalar(1.0);
            let p = solve_dare(&a, &b, &q, &r).unwrap();
            let res = (dare_rhs(&a, &b, &q, &r, &p).unwrap() - &p).norm();
            assert!(res < 1e-8 * (1.0 + p.norm()), "weight {w}: residual {res}");
            let k = lqr_gain(&a, &b, &r, &p).unwrap();
            assert!(spectral_radius(&(&a - &b * k)).unwrap() < 1.0);
        }
    }

    #[test]
    fn random_stabilizable_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=3);
            let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5));
            let b = Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let q = Mat::identity(n, n) * rng.random_range(0.01..10.0);
            let r = Mat::identity(m, m);
            let p = solve_dare(&a, &b, &q, &r).unwrap_or_else(|e| panic!("trial {trial}: {e}"));
            let res = (dare_rhs(&a, &b, &q, &r, &p).unwrap() - &p).norm();
            assert!(res < 1e-8 * (1.0 + p.norm()), "trial {trial}: residual {res}");
            let k = lqr_gain(&a, &b, &r, &p).unwrap();
            assert!(spectral_radius(&(&a - &b * k)).unwrap() < 1.0);
            assert!(p.clone().symmetric_eigenvalues().min() > -1e-9);
        }
    }
}
