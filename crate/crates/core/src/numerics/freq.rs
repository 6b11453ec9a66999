use num_complex::Complex64;

use super::{CMat, Mat};
use crate::error::{Error, Result};

/// Repeated evaluation of `C (zI - A)^-1 B + D`.
///
/// `A` is reduced once to upper Hessenberg form, after which every
/// evaluation costs `O(n^2)` per input column instead of a dense solve.
#[derive(Debug, Clone)]
pub struct FreqResponse {
    h: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
    scale: f64,
}

impl FreqResponse {
    pub fn new(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Self {
        let n = a.nrows();
        let (h, b, c) = if n > 2 {
            let (q, h) = nalgebra::Hessenberg::new(a.clone()).unpack();
            (h, q.transpose() * b, c * q)
        } else {
            (a.clone(), b.clone(), c.clone())
        };
        let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        FreqResponse {
            h,
            b,
            c,
            d: d.clone(),
            scale,
        }
    }

    pub fn order(&self) -> usize {
        self.h.nrows()
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let n = self.h.nrows();
        let (ny, nu) = self.d.shape();
        let mut out = self.d.map(|x| Complex64::new(x, 0.0));
        if n == 0 {
            return Ok(out);
        }
        // M = zI - H, upper Hessenberg; eliminate the subdiagonal with
        // partial pivoting between neighbouring rows.
        let mut m = CMat::from_fn(n, n, |i, j| {
            let v = Complex64::new(-self.h[(i, j)], 0.0);
            if i == j {
                v + z
            } else {
                v
            }
        });
        let mut rhs = self.b.map(|x| Complex64::new(x, 0.0));
        for i in 0..n - 1 {
            if m[(i + 1, i)].norm() > m[(i, i)].norm() {
                m.swap_rows(i, i + 1);
                rhs.swap_rows(i, i + 1);
            }
            let piv = m[(i, i)];
            if piv.norm() <= 1e-12 * self.scale {
                return Err(Error::PoleProximity {
                    z,
                    distance: piv.norm(),
                });
            }
            let f = m[(i + 1, i)] / piv;
            if f != Complex64::new(0.0, 0.0) {
                for j in i..n {
                    let v = m[(i, j)];
                    m[(i + 1, j)] -= f * v;
                }
                for j in 0..nu {
                    let v = rhs[(i, j)];
                    rhs[(i + 1, j)] -= f * v;
                }
            }
        }
        let last = m[(n - 1, n - 1)];
        if last.norm() <= 1e-12 * self.scale {
            return Err(Error::PoleProximity {
                z,
                distance: last.norm(),
            });
        }
        for col in 0..nu {
            for i in (0..n).rev() {
                let mut acc = rhs[(i, col)];
                for j in i + 1..n {
                    acc -= m[(i, j)] * rhs[(j, col)];
                }
                rhs[(i, col)] = acc / m[(i, i)];
            }
        }
        for r in 0..ny {
            for col in 0..nu {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    acc += rhs[(j, col)] * self.c[(r, j)];
                }
                out[(r, col)] += acc;
            }
        }
        Ok(out)
    }
}
