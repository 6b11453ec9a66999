use num_complex::Complex64;

use super::{ensure_finite, ensure_square, Mat};
use crate::error::{Error, Result};

/// Half-width of the band around the unit circle treated as marginal.
pub const MARGINAL_TOL: f64 = 1e-8;

/// `A = [Q1 Q2] blockdiag(N1, N2) [R1; R2]` with `R = Q^-1`.
///
/// `Q1` is an orthonormal basis of the invariant subspace for the
/// eigenvalues outside the unit circle, `Q2` an orthonormal basis of the
/// invariant subspace for those inside. `Q` as a whole is not orthogonal.
#[derive(Debug, Clone)]
pub struct SchurSplit {
    pub q1: Mat,
    pub n1: Mat,
    pub q2: Mat,
    pub n2: Mat,
    pub r1: Mat,
    pub r2: Mat,
}

impl SchurSplit {
    /// Number of unstable eigenvalues.
    pub fn k(&self) -> usize {
        self.n1.nrows()
    }

    pub fn reconstruct(&self) -> Mat {
        let n = self.q1.nrows();
        let k = self.k();
        let mut q = Mat::zeros(n, n);
        q.columns_mut(0, k).copy_from(&self.q1);
        q.columns_mut(k, n - k).copy_from(&self.q2);
        let mut r = Mat::zeros(n, n);
        r.rows_mut(0, k).copy_from(&self.r1);
        r.rows_mut(k, n - k).copy_from(&self.r2);
        q * super::block_diag(&self.n1, &self.n2) * r
    }
}

/// Real Schur form with explicit block structure: `m = z t z^T`.
pub(crate) struct RealSchur {
    pub z: Mat,
    pub t: Mat,
    /// Diagonal block sizes (1 or 2) from the top-left corner.
    pub blocks: Vec<usize>,
}

pub(crate) fn real_schur(m: &Mat) -> Result<(Mat, Mat)> {
    let s = decompose(m)?;
    Ok((s.z, s.t))
}

fn decompose(m: &Mat) -> Result<RealSchur> {
    let n = m.nrows();
    if n == 0 {
        return Ok(RealSchur {
            z: Mat::zeros(0, 0),
            t: Mat::zeros(0, 0),
            blocks: Vec::new(),
        });
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::NumericFailure(format!("real Schur of {n}x{n} matrix did not converge")))?;
    let (mut z, mut t) = schur.unpack();
    let blocks = standardize(&mut t, &mut z);
    Ok(RealSchur { z, t, blocks })
}

/// Zeroes negligible subdiagonals and splits 2x2 blocks whose eigenvalues
/// are real, returning the resulting block sizes.
fn standardize(t: &mut Mat, z: &mut Mat) -> Vec<usize> {
    let n = t.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let sub = t[(i + 1, i)];
            let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            if sub.abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                t[(i + 1, i)] = 0.0;
            } else {
                if let Some((c, s)) = real_pair_rotation(t, i) {
                    apply_rotation(t, z, i, c, s);
                    t[(i + 1, i)] = 0.0;
                    blocks.push(1);
                    i += 1;
                    continue;
                }
                blocks.push(2);
                i += 2;
                continue;
            }
        }
        blocks.push(1);
        i += 1;
    }
    blocks
}

/// Rotation triangularizing the 2x2 block at `i` when its eigenvalues are real.
fn real_pair_rotation(t: &Mat, i: usize) -> Option<(f64, f64)> {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let half = (a - d) / 2.0;
    let disc = half * half + b * c;
    if disc < 0.0 {
        return None;
    }
    let mean = (a + d) / 2.0;
    let root = disc.sqrt();
    let lambda = if half >= 0.0 { mean + root } else { mean - root };
    // eigenvector of [[a, b], [c, d]] for lambda
    let (v0, v1) = if (lambda - d).abs() + c.abs() > (lambda - a).abs() + b.abs() {
        (lambda - d, c)
    } else {
        (b, lambda - a)
    };
    let nv = v0.hypot(v1);
    if nv == 0.0 {
        return None;
    }
    Some((v0 / nv, v1 / nv))
}

/// `t <- G^T t G`, `z <- z G` with `G` acting on coordinates `i, i+1` and
/// first column `(c, s)`.
fn apply_rotation(t: &mut Mat, z: &mut Mat, i: usize, c: f64, s: f64) {
    let n = t.nrows();
    for j in 0..n {
        let (x, y) = (t[(i, j)], t[(i + 1, j)]);
        t[(i, j)] = c * x + s * y;
        t[(i + 1, j)] = -s * x + c * y;
    }
    for r in 0..n {
        let (x, y) = (t[(r, i)], t[(r, i + 1)]);
        t[(r, i)] = c * x + s * y;
        t[(r, i + 1)] = -s * x + c * y;
    }
    for r in 0..z.nrows() {
        let (x, y) = (z[(r, i)], z[(r, i + 1)]);
        z[(r, i)] = c * x + s * y;
        z[(r, i + 1)] = -s * x + c * y;
    }
}

fn block_eigenvalues(t: &Mat, start: usize, size: usize) -> Vec<Complex64> {
    if size == 1 {
        return vec![Complex64::new(t[(start, start)], 0.0)];
    }
    let (a, b, c, d) = (
        t[(start, start)],
        t[(start, start + 1)],
        t[(start + 1, start)],
        t[(start + 1, start + 1)],
    );
    let mean = (a + d) / 2.0;
    let half = (a - d) / 2.0;
    let disc = half * half + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        vec![Complex64::new(mean + r, 0.0), Complex64::new(mean - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        vec![Complex64::new(mean, r), Complex64::new(mean, -r)]
    }
}

pub(crate) fn quasi_triangular_eigenvalues(t: &Mat) -> Vec<Complex64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        out.extend(block_eigenvalues(t, i, size));
        i += size;
    }
    out
}

/// Swaps the adjacent diagonal blocks of sizes `p` (at `j`) and `q` (at `j + p`).
fn swap_blocks(t: &mut Mat, z: &mut Mat, j: usize, p: usize, q: usize) -> Result<()> {
    let w = p + q;
    // T11 X - X T22 = T12, vectorized column-major
    let dim = p * q;
    let mut kron = Mat::zeros(dim, dim);
    let mut rhs = nalgebra::DVector::zeros(dim);
    for jj in 0..q {
        for ii in 0..p {
            let row = ii + p * jj;
            rhs[row] = t[(j + ii, j + p + jj)];
            for k in 0..p {
                kron[(row, k + p * jj)] += t[(j + ii, j + k)];
            }
            for l in 0..q {
                kron[(row, ii + p * l)] -= t[(j + p + l, j + p + jj)];
            }
        }
    }
    let x = kron
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericFailure("Schur block swap: Sylvester system singular".into()))?;

    let mut basis = Mat::zeros(w, q);
    for jj in 0..q {
        for ii in 0..p {
            basis[(ii, jj)] = -x[ii + p * jj];
        }
        basis[(p + jj, jj)] = 1.0;
    }
    let qr = basis.qr();
    let mut qt = Mat::identity(w, w);
    qr.q_tr_mul(&mut qt);
    let qf = qt.transpose();

    let rows = t.rows(j, w).into_owned();
    t.rows_mut(j, w).copy_from(&(&qt * rows));
    let cols = t.columns(j, w).into_owned();
    t.columns_mut(j, w).copy_from(&(cols * &qf));
    let zc = z.columns(j, w).into_owned();
    z.columns_mut(j, w).copy_from(&(zc * &qf));

    let scale = t.view((j, j), (w, w)).norm().max(f64::MIN_POSITIVE);
    let leak = t.view((j + q, j), (p, q)).norm();
    if leak > 1e-10 * scale {
        return Err(Error::NumericFailure(format!(
            "Schur block swap lost accuracy (residual {leak:e})"
        )));
    }
    t.view_mut((j + q, j), (p, q)).fill(0.0);
    Ok(())
}

/// Moves every block whose eigenvalues satisfy `select` to the leading
/// positions, preserving relative order otherwise.
fn reorder(s: &mut RealSchur, select: impl Fn(Complex64) -> bool) -> Result<usize> {
    let mut sizes = s.blocks.clone();
    let mut chosen: Vec<bool> = {
        let mut start = 0;
        sizes
            .iter()
            .map(|&sz| {
                let e = block_eigenvalues(&s.t, start, sz)[0];
                start += sz;
                select(e)
            })
            .collect()
    };
    let mut dest = 0;
    for i in 0..sizes.len() {
        if !chosen[i] {
            continue;
        }
        for b in (dest..i).rev() {
            let start: usize = sizes[..b].iter().sum();
            swap_blocks(&mut s.t, &mut s.z, start, sizes[b], sizes[b + 1])?;
            sizes.swap(b, b + 1);
            chosen.swap(b, b + 1);
        }
        dest += 1;
    }
    s.blocks = sizes;
    Ok(s.blocks[..dest].iter().sum())
}

/// Splits `a` into its unstable (|lambda| > 1) and stable (|lambda| < 1) parts.
///
/// Fails with [`Error::IllPosedSplit`] if some eigenvalue has modulus within
/// [`MARGINAL_TOL`] of 1.
pub fn schur_split_unstable(a: &Mat) -> Result<SchurSplit> {
    ensure_square(a, "split input")?;
    ensure_finite(a, "split input")?;
    let n = a.nrows();
    let base = decompose(a)?;
    let eigs = quasi_triangular_eigenvalues(&base.t);
    if let Some(bad) = eigs.iter().find(|e| (e.norm() - 1.0).abs() <= MARGINAL_TOL) {
        return Err(Error::IllPosedSplit {
            modulus: bad.norm(),
            tol: MARGINAL_TOL,
        });
    }

    let mut unstable_first = RealSchur {
        z: base.z.clone(),
        t: base.t.clone(),
        blocks: base.blocks.clone(),
    };
    let k = reorder(&mut unstable_first, |e| e.norm() > 1.0)?;
    let mut stable_first = base;
    let ks = reorder(&mut stable_first, |e| e.norm() < 1.0)?;
    debug_assert_eq!(k + ks, n);

    let q1 = unstable_first.z.columns(0, k).into_owned();
    let n1 = unstable_first.t.view((0, 0), (k, k)).into_owned();
    let q2 = stable_first.z.columns(0, n - k).into_owned();
    let n2 = stable_first.t.view((0, 0), (n - k, n - k)).into_owned();

    let mut q = Mat::zeros(n, n);
    q.columns_mut(0, k).copy_from(&q1);
    q.columns_mut(k, n - k).copy_from(&q2);
    let r = q
        .try_inverse()
        .ok_or_else(|| Error::NumericFailure("invariant subspaces are not complementary".into()))?;
    Ok(SchurSplit {
        r1: r.rows(0, k).into_owned(),
        r2: r.rows(k, n - k).into_owned(),
        q1,
        n1,
        q2,
        n2,
    })
}
