//! Ground-truth plants: representation, random generation, simulation and
//! exact transfer-function evaluation.

mod generate;
mod simulate;

pub use generate::{generate_system, GenSpec};
pub use simulate::{collect, simulate_from, simulate_rollout, Rollout, RolloutSet};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, ensure_square, inverse_condition, mat_from_rows, mat_to_rows,
    schur_split_unstable, to_complex, CMat, Mat,
};

/// Anything with a state-space quadruple `(A, B, C, D)`.
pub trait Realization {
    fn a(&self) -> &Mat;
    fn b(&self) -> &Mat;
    fn c(&self) -> &Mat;
    fn d(&self) -> &Mat;

    fn order(&self) -> usize {
        self.a().nrows()
    }
    fn inputs(&self) -> usize {
        self.d().ncols()
    }
    fn outputs(&self) -> usize {
        self.d().nrows()
    }
}

/// Plain state-space quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        check_quadruple(&a, &b, &c, &d)?;
        Ok(StateSpace { a, b, c, d })
    }

    /// Memoryless gain `D`.
    pub fn static_gain(d: Mat) -> Self {
        let (ny, nu) = d.shape();
        StateSpace {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, nu),
            c: Mat::zeros(ny, 0),
            d,
        }
    }

    pub fn of(r: &impl Realization) -> Self {
        StateSpace {
            a: r.a().clone(),
            b: r.b().clone(),
            c: r.c().clone(),
            d: r.d().clone(),
        }
    }
}

impl Realization for StateSpace {
    fn a(&self) -> &Mat {
        &self.a
    }
    fn b(&self) -> &Mat {
        &self.b
    }
    fn c(&self) -> &Mat {
        &self.c
    }
    fn d(&self) -> &Mat {
        &self.d
    }
}

pub(crate) fn check_quadruple(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<()> {
    ensure_square(a, "A")?;
    let n = a.nrows();
    if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "inconsistent quadruple: A {n}x{n}, B {}x{}, C {}x{}, D {}x{}",
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    ensure_finite(c, "C")?;
    ensure_finite(d, "D")
}

/// Simulated plant `x+ = Ax + Bu + w`, `y = Cx + Du + v` with i.i.d.
/// Gaussian `w ~ N(0, sigma_w^2 I)` and `v ~ N(0, sigma_v^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemDoc", into = "SystemDoc")]
pub struct LtiSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub sigma_w: f64,
    pub sigma_v: f64,
}

impl LtiSystem {
    /// Noise-free plant.
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        check_quadruple(&a, &b, &c, &d)?;
        Ok(LtiSystem {
            a,
            b,
            c,
            d,
            sigma_w: 0.0,
            sigma_v: 0.0,
        })
    }

    pub fn with_noise(mut self, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        for (s, name) in [(sigma_w, "sigma_w"), (sigma_v, "sigma_v")] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {s}")));
            }
        }
        self.sigma_w = sigma_w;
        self.sigma_v = sigma_v;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serializes")
    }
}

impl Realization for LtiSystem {
    fn a(&self) -> &Mat {
        &self.a
    }
    fn b(&self) -> &Mat {
        &self.b
    }
    fn c(&self) -> &Mat {
        &self.c
    }
    fn d(&self) -> &Mat {
        &self.d
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    n: usize,
    d_u: usize,
    d_y: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    sigma_w: f64,
    sigma_v: f64,
}

impl TryFrom<SystemDoc> for LtiSystem {
    type Error = Error;

    fn try_from(doc: SystemDoc) -> Result<Self> {
        let a = mat_from_rows(&doc.a, doc.n, doc.n)?;
        let b = mat_from_rows(&doc.b, doc.n, doc.d_u)?;
        let c = mat_from_rows(&doc.c, doc.d_y, doc.n)?;
        let d = mat_from_rows(&doc.d, doc.d_y, doc.d_u)?;
        LtiSystem::new(a, b, c, d)?.with_noise(doc.sigma_w, doc.sigma_v)
    }
}

impl From<LtiSystem> for SystemDoc {
    fn from(s: LtiSystem) -> Self {
        SystemDoc {
            n: s.n(),
            d_u: s.d_u(),
            d_y: s.d_y(),
            a: mat_to_rows(&s.a),
            b: mat_to_rows(&s.b),
            c: mat_to_rows(&s.c),
            d: mat_to_rows(&s.d),
            sigma_w: s.sigma_w,
            sigma_v: s.sigma_v,
        }
    }
}

/// `C (zI - A)^-1 B + D` by a dense complex LU solve.
pub fn transfer_eval(sys: &impl Realization, z: Complex64) -> Result<CMat> {
    let n = sys.order();
    let mut out = to_complex(sys.d());
    if n == 0 {
        return Ok(out);
    }
    let zi_a = CMat::from_fn(n, n, |i, j| {
        let v = Complex64::new(-sys.a()[(i, j)], 0.0);
        if i == j {
            v + z
        } else {
            v
        }
    });
    let lu = zi_a.lu();
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    let scale = sys.a().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if min_pivot <= 1e-12 * scale {
        return Err(Error::PoleProximity {
            z,
            distance: min_pivot,
        });
    }
    let x = lu
        .solve(&to_complex(sys.b()))
        .ok_or(Error::PoleProximity { z, distance: 0.0 })?;
    out += to_complex(sys.c()) * x;
    Ok(out)
}

/// Additive split `F_full(z) = F(z) + Delta(z)` of a plant into its unstable
/// and stable parts.
///
/// The unstable part is `(N1, R1 B, C Q1, 0)`, the stable part
/// `(N2, R2 B, C Q2, D)`; both are noise free.
pub fn true_decomposition(sys: &LtiSystem) -> Result<(LtiSystem, LtiSystem)> {
    let split = schur_split_unstable(&sys.a)?;
    let unstable = LtiSystem::new(
        split.n1.clone(),
        &split.r1 * &sys.b,
        &sys.c * &split.q1,
        Mat::zeros(sys.d_y(), sys.d_u()),
    )?;
    let stable = LtiSystem::new(
        split.n2.clone(),
        &split.r2 * &sys.b,
        &sys.c * &split.q2,
        sys.d.clone(),
    )?;
    Ok((unstable, stable))
}

/// Positive-feedback interconnection of `plant` and `ctrl` with an external
/// signal `r` added to the plant output: `e = y + r`, `u = K e`. The
/// returned system maps `r` to `u`, with state `[x; xi]`.
pub(crate) fn feedback_loop(plant: &impl Realization, ctrl: &impl Realization) -> Result<StateSpace> {
    let (n, nk) = (plant.order(), ctrl.order());
    let (ny, nu) = (plant.outputs(), plant.inputs());
    if ctrl.inputs() != ny || ctrl.outputs() != nu {
        return Err(Error::Dimension(format!(
            "controller maps {} outputs to {} inputs, plant has {ny} outputs and {nu} inputs",
            ctrl.inputs(),
            ctrl.outputs()
        )));
    }
    let (a, b, c, d) = (plant.a(), plant.b(), plant.c(), plant.d());
    let (ak, bk, ck, dk) = (ctrl.a(), ctrl.b(), ctrl.c(), ctrl.d());
    let loop_gain = Mat::identity(nu, nu) - dk * d;
    if nu > 0 && inverse_condition(&loop_gain)? < 1e-12 {
        return Err(Error::WellPosedness);
    }
    let e = loop_gain.try_inverse().ok_or(Error::WellPosedness)?;
    let ux = &e * dk * c;
    let uxi = &e * ck;
    let ur = &e * dk;
    let ex = c + d * &ux;
    let exi = d * &uxi;
    let er = d * &ur + Mat::identity(ny, ny);

    let mut acl = Mat::zeros(n + nk, n + nk);
    acl.view_mut((0, 0), (n, n)).copy_from(&(a + b * &ux));
    acl.view_mut((0, n), (n, nk)).copy_from(&(b * &uxi));
    acl.view_mut((n, 0), (nk, n)).copy_from(&(bk * ex));
    acl.view_mut((n, n), (nk, nk)).copy_from(&(ak + bk * exi));
    let mut bcl = Mat::zeros(n + nk, ny);
    bcl.view_mut((0, 0), (n, ny)).copy_from(&(b * &ur));
    bcl.view_mut((n, 0), (nk, ny)).copy_from(&(bk * er));
    let mut ccl = Mat::zeros(nu, n + nk);
    ccl.view_mut((0, 0), (nu, n)).copy_from(&ux);
    ccl.view_mut((0, n), (nu, nk)).copy_from(&uxi);
    Ok(StateSpace {
        a: acl,
        b: bcl,
        c: ccl,
        d: ur,
    })
}

/// State matrix of the loop `u = K(z) y` closed around `sys`, state `[x; xi]`.
///
/// For `D = 0` this is `[[A + B D_K C, B C_K], [B_K C, A_K]]`.
pub fn closed_loop_matrix(sys: &impl Realization, ctrl: &impl Realization) -> Result<Mat> {
    Ok(feedback_loop(sys, ctrl)?.a)
}

pub(crate) fn unit_vector(len: usize, rng: &mut crate::seeds::Rng) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: DVector<f64> = DVector::from_fn(len, |_, _| StandardNormal.sample(rng));
        let nv = v.norm();
        if nv > 0.0 {
            return v / nv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> LtiSystem {
        LtiSystem::new(dmatrix![a], dmatrix![b], dmatrix![c], dmatrix![d]).unwrap()
    }

    fn unit_circle(points: usize) -> impl Iterator<Item = Complex64> {
        (0..points).map(move |i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / points as f64))
    }

    #[test]
    fn transfer_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert!((transfer_eval(&scalar(0.0, 1.0, 1.0, 0.0), one).unwrap()[(0, 0)] - 1.0).norm() < 1e-15);
        assert!((transfer_eval(&scalar(0.5, 1.0, 1.0, 0.0), one).unwrap()[(0, 0)] - 2.0).norm() < 1e-15);
        let g = transfer_eval(&scalar(2.0, 1.0, 1.0, 0.0), -one).unwrap()[(0, 0)];
        assert!((g + 1.0 / 3.0).norm() < 1e-15);
    }

    #[test]
    fn transfer_at_pole() {
        let err = transfer_eval(&scalar(0.5, 1.0, 1.0, 0.0), Complex64::new(0.5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::PoleProximity { .. }));
    }

    #[test]
    fn decomposition_of_diagonal_plant() {
        let sys = LtiSystem::new(
            dmatrix![2.0, 0.0; 0.0, 0.5],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![0.0],
        )
        .unwrap();
        let (f, delta) = true_decomposition(&sys).unwrap();
        for z in unit_circle(16) {
            let fz = transfer_eval(&f, z).unwrap()[(0, 0)];
            let dz = transfer_eval(&delta, z).unwrap()[(0, 0)];
            assert!((fz - 1.0 / (z - 2.0)).norm() < 1e-14);
            assert!((dz - 1.0 / (z - 0.5)).norm() < 1e-14);
        }
    }

    #[test]
    fn decomposition_fully_unstable() {
        let sys = LtiSystem::new(
            dmatrix![2.0, 1.0; 0.0, 3.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.7],
        )
        .unwrap();
        let (f, delta) = true_decomposition(&sys).unwrap();
        assert_eq!((f.n(), delta.n()), (2, 0));
        let z = Complex64::new(0.0, 1.0);
        assert!((transfer_eval(&delta, z).unwrap()[(0, 0)] - 0.7).norm() < 1e-15);
    }

    #[test]
    fn static_controller_closed_loop() {
        let sys = scalar(2.0, 1.0, 1.0, 0.0);
        let k = StateSpace::static_gain(dmatrix![-2.0]);
        let acl = closed_loop_matrix(&sys, &k).unwrap();
        assert_eq!(acl.shape(), (1, 1));
        assert!(acl[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn zero_controller_keeps_open_loop() {
        let sys = scalar(2.0, 1.0, 1.0, 0.0);
        let k = StateSpace::new(dmatrix![0.3], dmatrix![0.0], dmatrix![0.0], dmatrix![0.0]).unwrap();
        let acl = closed_loop_matrix(&sys, &k).unwrap();
        assert_eq!(acl, dmatrix![2.0, 0.0; 0.0, 0.3]);
    }

    #[test]
    fn ill_posed_loop() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0);
        let k = StateSpace::static_gain(dmatrix![1.0]);
        assert!(matches!(closed_loop_matrix(&sys, &k), Err(Error::WellPosedness)));
    }

    #[test]
    fn system_json_round_trip() {
        let sys = LtiSystem::new(
            dmatrix![0.1, 0.2; 0.3, 0.4],
            dmatrix![1.0; 2.0],
            dmatrix![3.0, 4.0],
            dmatrix![0.0],
        )
        .unwrap()
        .with_noise(0.4, 0.4)
        .unwrap();
        let back = LtiSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(back, sys);
        let v: serde_json::Value = serde_json::from_str(&sys.to_json()).unwrap();
        for key in ["a", "b", "c", "d", "sigma_w", "sigma_v", "n", "d_u", "d_y"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn system_json_rejects_bad_documents() {
        let good = scalar(0.5, 1.0, 1.0, 0.0).to_json();
        let extra = good.replacen('{', "{\"bogus\": 1,", 1);
        assert!(LtiSystem::from_json(&extra).is_err());
        let wrong_dim = good.replace("\"n\": 1", "\"n\": 2");
        assert!(LtiSystem::from_json(&wrong_dim).is_err());
        let neg = good.replace("\"sigma_w\": 0.0", "\"sigma_w\": -1.0");
        assert!(LtiSystem::from_json(&neg).is_err());
    }
}
