use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LtiSystem;
use crate::error::{Error, Result};
use crate::numerics::{mat_from_rows, Mat};
use crate::seeds::{self, derive_seed, STREAM_INPUT, STREAM_ROLLOUT};

const BLOW_UP: f64 = 1e100;

/// One input/output trajectory. Column `t` of `inputs`/`outputs` is `u_t`/`y_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RolloutDoc", into = "RolloutDoc")]
pub struct Rollout {
    pub inputs: Mat,
    pub outputs: Mat,
    pub seed: u64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolloutDoc {
    seed: u64,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

fn time_major(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let t = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if t == 0 || width == 0 {
        return Err(Error::Format(format!("{what} must be a nonempty list of nonempty vectors")));
    }
    Ok(mat_from_rows(rows, t, width)?.transpose())
}

fn to_time_major(m: &Mat) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

impl TryFrom<RolloutDoc> for Rollout {
    type Error = Error;

    fn try_from(doc: RolloutDoc) -> Result<Self> {
        let inputs = time_major(&doc.inputs, "inputs")?;
        let outputs = time_major(&doc.outputs, "outputs")?;
        if inputs.ncols() != outputs.ncols() {
            return Err(Error::Format(format!(
                "rollout has {} inputs but {} outputs",
                inputs.ncols(),
                outputs.ncols()
            )));
        }
        crate::numerics::ensure_finite(&inputs, "rollout inputs")?;
        crate::numerics::ensure_finite(&outputs, "rollout outputs")?;
        Ok(Rollout {
            inputs,
            outputs,
            seed: doc.seed,
        })
    }
}

impl From<Rollout> for RolloutDoc {
    fn from(r: Rollout) -> Self {
        RolloutDoc {
            seed: r.seed,
            inputs: to_time_major(&r.inputs),
            outputs: to_time_major(&r.outputs),
        }
    }
}

/// `M` rollouts of a common length `T`, with the input level used to excite them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RolloutSetDoc", into = "RolloutSetDoc")]
pub struct RolloutSet {
    pub rollouts: Vec<Rollout>,
    pub sigma_u: f64,
    /// Master seed the per-rollout seeds were derived from.
    pub seed: u64,
}

impl RolloutSet {
    pub fn new(rollouts: Vec<Rollout>, sigma_u: f64, seed: u64) -> Result<Self> {
        let first = rollouts
            .first()
            .ok_or_else(|| Error::Parameter("a rollout set needs at least one rollout".into()))?;
        let shape = (first.inputs.nrows(), first.outputs.nrows(), first.len());
        if let Some(i) = rollouts
            .iter()
            .position(|r| (r.inputs.nrows(), r.outputs.nrows(), r.len()) != shape)
        {
            return Err(Error::Dimension(format!(
                "rollout {i} differs in length or signal dimensions from rollout 0"
            )));
        }
        if !(sigma_u.is_finite() && sigma_u >= 0.0) {
            return Err(Error::Parameter(format!("sigma_u must be finite and >= 0, got {sigma_u}")));
        }
        Ok(RolloutSet {
            rollouts,
            sigma_u,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.rollouts.len()
    }
    pub fn t(&self) -> usize {
        self.rollouts[0].len()
    }
    pub fn d_u(&self) -> usize {
        self.rollouts[0].inputs.nrows()
    }
    pub fn d_y(&self) -> usize {
        self.rollouts[0].outputs.nrows()
    }

    /// The first `m` rollouts.
    pub fn first(&self, m: usize) -> Result<RolloutSet> {
        if m == 0 || m > self.m() {
            return Err(Error::Parameter(format!("cannot take {m} of {} rollouts", self.m())));
        }
        RolloutSet::new(self.rollouts[..m].to_vec(), self.sigma_u, self.seed)
    }

    /// Every rollout cut to its first `t` steps.
    pub fn truncate(&self, t: usize) -> Result<RolloutSet> {
        if t == 0 || t > self.t() {
            return Err(Error::Parameter(format!("cannot cut length {} rollouts to {t}", self.t())));
        }
        let rollouts = self
            .rollouts
            .iter()
            .map(|r| Rollout {
                inputs: r.inputs.columns(0, t).into_owned(),
                outputs: r.outputs.columns(0, t).into_owned(),
                seed: r.seed,
            })
            .collect();
        RolloutSet::new(rollouts, self.sigma_u, self.seed)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rollouts serialize")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolloutSetDoc {
    m: usize,
    t: usize,
    d_u: usize,
    d_y: usize,
    sigma_u: f64,
    seed: u64,
    rollouts: Vec<Rollout>,
}

impl TryFrom<RolloutSetDoc> for RolloutSet {
    type Error = Error;

    fn try_from(doc: RolloutSetDoc) -> Result<Self> {
        let set = RolloutSet::new(doc.rollouts, doc.sigma_u, doc.seed)
            .map_err(|e| Error::Format(e.to_string()))?;
        if (set.m(), set.t(), set.d_u(), set.d_y()) != (doc.m, doc.t, doc.d_u, doc.d_y) {
            return Err(Error::Format("declared m, t, d_u, d_y do not match the rollouts".into()));
        }
        Ok(set)
    }
}

impl From<RolloutSet> for RolloutSetDoc {
    fn from(s: RolloutSet) -> Self {
        RolloutSetDoc {
            m: s.m(),
            t: s.t(),
            d_u: s.d_u(),
            d_y: s.d_y(),
            sigma_u: s.sigma_u,
            seed: s.seed,
            rollouts: s.rollouts,
        }
    }
}

/// Runs `sys` from rest on the given inputs (`d_u x T`, one column per step).
pub fn simulate_rollout(sys: &LtiSystem, inputs: &Mat, seed: u64) -> Result<Rollout> {
    simulate_from(sys, inputs, seed, None)
}

/// Like [`simulate_rollout`] but from an arbitrary initial state.
///
/// Per step the generator draws `v_t` (d_y normals) and then `w_t`
/// (n normals), regardless of the noise levels, so the noise realization
/// depends only on the seed.
pub fn simulate_from(
    sys: &LtiSystem,
    inputs: &Mat,
    seed: u64,
    x0: Option<&DVector<f64>>,
) -> Result<Rollout> {
    let (n, d_y) = (sys.n(), sys.d_y());
    if inputs.nrows() != sys.d_u() {
        return Err(Error::Dimension(format!(
            "inputs have {} channels, plant expects {}",
            inputs.nrows(),
            sys.d_u()
        )));
    }
    let mut x = match x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::Dimension(format!("initial state has length {}, expected {n}", x0.len())))
        }
        Some(x0) => x0.clone(),
        None => DVector::zeros(n),
    };
    let steps = inputs.ncols();
    let mut rng = seeds::rng(seed);
    let mut outputs = Mat::zeros(d_y, steps);
    let mut v = DVector::<f64>::zeros(d_y);
    let mut w = DVector::<f64>::zeros(n);
    for t in 0..steps {
        v.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut rng));
        w.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut rng));
        let u = inputs.column(t);
        let y = &sys.c * &x + &sys.d * u + &v * sys.sigma_v;
        outputs.set_column(t, &y);
        x = &sys.a * &x + &sys.b * u + &w * sys.sigma_w;
        let norm = x.norm();
        if !(norm <= BLOW_UP) {
            return Err(Error::BlowUp {
                step: t + 1,
                rollout: None,
            });
        }
    }
    Ok(Rollout {
        inputs: inputs.clone(),
        outputs,
        seed,
    })
}

/// `M` independent rollouts of length `T` under i.i.d. `N(0, sigma_u^2)` inputs.
///
/// Rollout `i` uses seed `derive_seed(seed, STREAM_ROLLOUT, i)` for its
/// noise and a further derived seed for its inputs, so the first `M`
/// rollouts of a larger collection coincide with a smaller one.
pub fn collect(sys: &LtiSystem, m: usize, t: usize, sigma_u: f64, seed: u64) -> Result<RolloutSet> {
    if m == 0 || t == 0 {
        return Err(Error::Parameter(format!("need M >= 1 and T >= 1, got M = {m}, T = {t}")));
    }
    if !(sigma_u.is_finite() && sigma_u >= 0.0) {
        return Err(Error::Parameter(format!("sigma_u must be finite and >= 0, got {sigma_u}")));
    }
    let rollouts = (0..m)
        .map(|i| {
            let s = derive_seed(seed, STREAM_ROLLOUT, i as u64);
            let mut rng = seeds::rng(derive_seed(s, STREAM_INPUT, 0));
            let inputs = Mat::from_fn(sys.d_u(), t, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma_u * z
            });
            simulate_rollout(sys, &inputs, s).map_err(|e| match e {
                Error::BlowUp { step, .. } => Error::BlowUp {
                    step,
                    rollout: Some(i),
                },
                e => e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RolloutSet::new(rollouts, sigma_u, seed)
}
