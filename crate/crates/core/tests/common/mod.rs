#![allow(dead_code)]

use lts_core::lti::{transfer_eval, LtiSystem, Realization};
use lts_core::numerics::{cnorm2, Mat};
use lts_core::seeds::{self, Rng};
use lts_core::sysid::{MarkovEstimate, ReducedModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> Rng {
    seeds::rng(seed)
}

pub fn gaussian(rng: &mut Rng, r: usize, c: usize) -> Mat {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn uniform(rng: &mut Rng, r: usize, c: usize, lo: f64, hi: f64) -> Mat {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

/// Points `exp(i 2 pi (j + 1/2) / n)`, avoiding the real axis.
pub fn circle(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * (j as f64 + 0.5) / n as f64))
        .collect()
}

/// `sup_j ||G(z_j) - H(z_j)||` over the points.
pub fn sup_gap(g: &impl Realization, h: &impl Realization, points: &[Complex64]) -> f64 {
    points
        .iter()
        .map(|&z| cnorm2(&(transfer_eval(g, z).unwrap() - transfer_eval(h, z).unwrap())))
        .fold(0.0, f64::max)
}

/// `[D, CB, CAB, ...]` with `t` blocks.
pub fn true_markov(sys: &LtiSystem, t: usize) -> Mat {
    let (dy, du) = (sys.d_y(), sys.d_u());
    let mut phi = Mat::zeros(dy, t * du);
    phi.view_mut((0, 0), (dy, du)).copy_from(&sys.d);
    let mut ab = sys.b.clone();
    for j in 1..t {
        phi.view_mut((0, j * du), (dy, du)).copy_from(&(&sys.c * &ab));
        ab = &sys.a * ab;
    }
    phi
}

pub fn markov_estimate(phi: Mat, d_u: usize) -> MarkovEstimate {
    let d_y = phi.nrows();
    let t = phi.ncols() / d_u;
    MarkovEstimate {
        d_hat: phi.columns(0, d_u).into_owned(),
        phi,
        d_u,
        d_y,
        rollouts: 0,
        t,
        sigma_u: 1.0,
    }
}

/// A bare reduced model around `(n1, b1, c1, d)`.
pub fn reduced(n1: Mat, b1: Mat, c1: Mat, d_hat: Mat) -> ReducedModel {
    let k = n1.nrows();
    ReducedModel {
        eigenvalues: lts_core::numerics::eigenvalues(&n1).unwrap(),
        n1,
        b1,
        c1,
        d_hat,
        k,
        m: 0,
        p: 1,
        q: 1,
        sigma_top: vec![],
        gap_ratio: f64::INFINITY,
        hankel_svals: vec![],
        power_discrepancy: 0.0,
    }
}

/// Random `k`-state model with real unstable poles in `[1.1, 2]`, at least
/// 0.1 apart, with a conditioned basis and well-conditioned controllability
/// and observability matrices.
pub fn unstable_model(rng: &mut Rng, k: usize, d_u: usize, d_y: usize) -> ReducedModel {
    loop {
        let poles: Vec<f64> = (0..k).map(|_| rng.random_range(1.1..2.0)).collect();
        let separated = poles
            .iter()
            .enumerate()
            .all(|(i, a)| poles[..i].iter().all(|b| (a - b).abs() >= 0.1));
        if !separated {
            continue;
        }
        let s = gaussian(rng, k, k);
        if lts_core::numerics::inverse_condition(&s).unwrap() <= 1e-2 {
            continue;
        }
        let si = s.clone().try_inverse().unwrap();
        let n1 = &s * Mat::from_diagonal(&nalgebra::DVector::from_vec(poles)) * si;
        let (b1, c1) = (gaussian(rng, k, d_u), gaussian(rng, d_y, k));
        let mut ctrb = Mat::zeros(k, k * d_u);
        let mut obsv = Mat::zeros(k * d_y, k);
        let (mut nb, mut cn) = (b1.clone(), c1.clone());
        for j in 0..k {
            ctrb.view_mut((0, j * d_u), (k, d_u)).copy_from(&nb);
            obsv.view_mut((j * d_y, 0), (d_y, k)).copy_from(&cn);
            nb = &n1 * nb;
            cn *= &n1;
        }
        if well_posed(&ctrb, k) && well_posed(&obsv, k) {
            return reduced(n1, b1, c1, Mat::zeros(d_y, d_u));
        }
    }
}

fn well_posed(m: &Mat, k: usize) -> bool {
    let sv = lts_core::numerics::singular_values(m).unwrap();
    sv[k - 1] > 1e-3 * sv[0]
}

/// Random well-conditioned square matrix.
pub fn well_conditioned(rng: &mut Rng, n: usize) -> Mat {
    loop {
        let s = gaussian(rng, n, n) + Mat::identity(n, n) * 2.0;
        if lts_core::numerics::inverse_condition(&s).unwrap() > 0.1 {
            return s;
        }
    }
}
