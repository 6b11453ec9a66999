//! Dense linear-algebra kernels shared by the identification and control code.
//!
//! Matrices are plain `nalgebra` dynamic matrices. Complex arithmetic only
//! shows up in eigenvalues and in transfer-function evaluation on the unit
//! circle; every stored model stays real.

mod dare;
mod freq;
mod schur;

pub mod rows;

pub use dare::{lqr_gain, solve_dare};
pub use freq::FreqResponse;
pub use schur::{schur_split_unstable, SchurSplit, MARGINAL_TOL};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;


/// Thin singular value decomposition `m = u * diag(s) * vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Mat {
        let r = self.s.len();
        let mut us = self.u.columns(0, r).into_owned();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.vt.rows(0, r)
    }

    /// Best rank-`r` approximation (Eckart-Young).
    pub fn truncate(&self, r: usize) -> Mat {
        let r = r.min(self.s.len());
        let mut us = self.u.columns(0, r).into_owned();
        for j in 0..r {
            us.column_mut(j).scale_mut(self.s[j]);
        }
        us * self.vt.rows(0, r)
    }
}

pub(crate) fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Thin SVD with singular values sorted nonincreasing.
pub fn svd(m: &Mat) -> Result<SvdResult> {
    ensure_finite(m, "svd input")?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(SvdResult {
            u: Mat::zeros(r, 0),
            s: Vec::new(),
            vt: Mat::zeros(0, c),
        });
    }
    let dec = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::NumericFailure(format!("SVD of {r}x{c} matrix failed: {e:?}")))?;
    let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());
    let k = fs.nrows();
    let s: Vec<f64> = (0..k).map(|i| fs[i]).collect();
    let u = Mat::from_fn(r, k, |i, j| fu[(i, j)]);
    let vt = Mat::from_fn(k, c, |i, j| fv[(j, i)]);
    debug_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    Ok(SvdResult { u, s, vt })
}

pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    ensure_finite(m, "singular value input")?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    to_faer(m)
        .singular_values()
        .map_err(|e| Error::NumericFailure(format!("singular values failed: {e:?}")))
}

fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Spectral norm.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m)
        .ok()
        .and_then(|s| s.first().copied())
        .unwrap_or(f64::NAN)
}

/// Largest singular value of a complex matrix.
pub fn cnorm2(m: &CMat) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, _) | (_, 1) => m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        _ => m.clone().singular_values().max(),
    }
}

/// Eigenvalues with multiplicity, sorted by nonincreasing modulus.
///
/// Equal moduli are ordered by decreasing real part and then decreasing
/// imaginary part, so a conjugate pair lists `+i` before `-i`.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    ensure_square(m, "eigenvalue input")?;
    ensure_finite(m, "eigenvalue input")?;
    let (_, t) = schur::real_schur(m)?;
    let mut eigs = schur::quasi_triangular_eigenvalues(&t);
    sort_by_modulus(&mut eigs);
    Ok(eigs)
}

pub(crate) fn sort_by_modulus(eigs: &mut [Complex64]) {
    eigs.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Solves `min_X ||y - X u||_F` through a QR factorisation of `u^T`.
///
/// `u` must have full row rank: its smallest singular value has to exceed
/// `1e-10` times the largest.
pub fn lstsq_right(y: &Mat, u: &Mat) -> Result<Mat> {
    if y.ncols() != u.ncols() {
        return Err(Error::Dimension(format!(
            "lstsq: y has {} columns but u has {}",
            y.ncols(),
            u.ncols()
        )));
    }
    ensure_finite(y, "lstsq target")?;
    ensure_finite(u, "lstsq regressor")?;
    let (r, n) = u.shape();
    if r == 0 {
        return Ok(Mat::zeros(y.nrows(), 0));
    }
    if n < r {
        return Err(Error::RankDeficient {
            ratio: 0.0,
            context: format!(" ({r} regressor rows but only {n} samples)"),
        });
    }
    let qr = u.transpose().qr();
    let rfac = qr.r();
    let sv = singular_values(&rfac)?;
    let ratio = sv.last().copied().unwrap_or(0.0) / sv[0].max(f64::MIN_POSITIVE);
    if !(ratio > 1e-10) {
        return Err(Error::RankDeficient {
            ratio,
            context: String::new(),
        });
    }
    let mut rhs = y.transpose();
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, r).into_owned();
    let xt = rfac
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::NumericFailure("triangular solve failed".into()))?;
    Ok(xt.transpose())
}

/// Solves `min_X ||a X - b||_F`.
pub fn lstsq_left(a: &Mat, b: &Mat) -> Result<Mat> {
    Ok(lstsq_right(&b.transpose(), &a.transpose())?.transpose())
}

/// Ratio of smallest to largest singular value, 0 for an empty or zero matrix.
pub fn inverse_condition(m: &Mat) -> Result<f64> {
    let s = singular_values(m)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => Ok(lo / hi),
        _ => Ok(0.0),
    }
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Builds a matrix from row vectors, with an explicit shape so that empty
/// dimensions survive a round trip through nested arrays.
pub fn mat_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Mat> {
    if rows.len() != nrows {
        return Err(Error::Format(format!(
            "expected {nrows} rows, found {}",
            rows.len()
        )));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Format(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub(crate) fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn svd_identity() {
        let r = svd(&Mat::identity(2, 2)).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0]);
    }

    #[test]
    fn svd_diagonal_with_zero() {
        let r = svd(&dmatrix![3.0, 0.0; 0.0, 0.0]).unwrap();
        assert!((r.s[0] - 3.0).abs() < 1e-14 && r.s[1].abs() < 1e-14);
        assert!((r.u[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((r.vt[(0, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_nilpotent() {
        // M^T M = diag(0, 4): singular values are sqrt(4) and 0.
        let r = svd(&dmatrix![0.0, 2.0; 0.0, 0.0]).unwrap();
        assert!((r.s[0] - 2.0).abs() < 1e-14);
        assert!(r.s[1].abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(r, c) in &[(1, 7), (9, 4), (30, 30), (200, 200), (5, 120)] {
            let m = random(r, c, &mut rng);
            let d = svd(&m).unwrap();
            let err = norm2(&(d.reconstruct() - &m));
            assert!(err <= 1e-10 * norm2(&m), "{r}x{c}: {err}");
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let m = dmatrix![1.0, f64::NAN];
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn eigenvalues_diagonal() {
        let e = eigenvalues(&dmatrix![0.5, 0.0; 0.0, 2.0]).unwrap();
        assert!((e[0].re - 2.0).abs() < 1e-14 && (e[1].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_rotation() {
        let e = eigenvalues(&dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        assert!((e[0] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        assert!((e[1] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn eigenvalues_golden_companion() {
        // z^2 - z - 1 = 0 -> (1 +- sqrt 5) / 2
        let e = eigenvalues(&dmatrix![1.0, 1.0; 1.0, 0.0]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((e[0].re - phi).abs() < 1e-12);
        assert!((e[1].re - (1.0 - phi)).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_nonsquare() {
        assert!(matches!(eigenvalues(&Mat::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn spectral_radius_cases() {
        assert_eq!(spectral_radius(&Mat::zeros(3, 3)).unwrap(), 0.0);
        let r = spectral_radius(&dmatrix![0.9, 0.0; 0.0, -1.1]).unwrap();
        assert!((r - 1.1).abs() < 1e-14);
        // companion of z^2 - z + 0.25 has the double root 0.5
        let r = spectral_radius(&dmatrix![0.0, 1.0; -0.25, 1.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-7);
    }

    #[test]
    fn lstsq_exact_square() {
        let u = dmatrix![2.0, 1.0; 1.0, 3.0];
        let x = lstsq_right(&u, &u).unwrap();
        assert!((x - Mat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn lstsq_scalar() {
        let x = lstsq_right(&dmatrix![2.0, 4.0], &dmatrix![1.0, 2.0]).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random(3, 50, &mut rng);
        let e = random(1, 50, &mut rng) * 1e-3;
        let y = Mat::from_element(1, 3, 3.0) * &u + &e;
        let x = lstsq_right(&y, &u).unwrap();
        let gram = &u * u.transpose();
        let x_ne = &y * u.transpose() * gram.try_inverse().unwrap();
        assert!((&x - &x_ne).norm() < 1e-12);
        assert!((&x - Mat::from_element(1, 3, 3.0)).norm() < 10.0 * e.norm());
    }

    #[test]
    fn lstsq_rank_deficient() {
        let u = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 6.0];
        let y = dmatrix![1.0, 1.0, 1.0];
        match lstsq_right(&y, &u) {
            Err(Error::RankDeficient { ratio, .. }) => assert!(ratio < 1e-10),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        // more unknowns than samples
        assert!(matches!(
            lstsq_right(&dmatrix![1.0], &dmatrix![1.0; 2.0]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn lstsq_residual_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let u = random(6, 40, &mut rng);
            let y = random(3, 40, &mut rng);
            let x = lstsq_right(&y, &u).unwrap();
            let g = (&y - &x * &u) * u.transpose();
            assert!(g.norm() <= 1e-8 * y.norm() * u.norm());
        }
    }
}
