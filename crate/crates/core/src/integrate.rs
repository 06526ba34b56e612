//! Euler–Maruyama time stepping for `dX = b dt + √2 σ dW`.
//!
//! Hitting detection is sample based: a region counts as hit when a sampled
//! state lies in its closure. Crossings between samples are missed, which
//! biases hitting times and exit statistics by O(√dt).

use log::warn;

use crate::error::{Error, Result};
use crate::model::{BoundingBox, BoxPolicy, DiffusionModel};
use crate::rng::StreamRng;
use crate::{mat_vec, norm, Point};

/// A uniformly sampled path `X_0, X_dt, X_2dt, …`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Point>,
    pub seed: u64,
    pub stream_id: u64,
    pub dim: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Elapsed model time from the first to the last sample.
    pub fn duration(&self) -> f64 {
        self.states.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn last(&self) -> Point {
        *self.states.last().expect("trajectory has at least one state")
    }
}

/// One Euler–Maruyama step with fresh normals from `rng`.
#[inline]
pub fn em_step(model: &DiffusionModel, x: &Point, dt: f64, rng: &mut StreamRng) -> Point {
    let mut xi = [0.0; 2];
    for v in xi.iter_mut().take(model.dim()) {
        *v = rng.normal();
    }
    em_step_with(model, x, dt, &xi)
}

/// One Euler–Maruyama step with given standard normals `xi`.
#[inline]
pub fn em_step_with(model: &DiffusionModel, x: &Point, dt: f64, xi: &Point) -> Point {
    let b = model.drift(x);
    let s = model.sigma(x);
    let noise = mat_vec(&s, xi);
    let c = (2.0 * dt).sqrt();
    let mut y = [0.0; 2];
    for k in 0..model.dim() {
        y[k] = x[k] + b[k] * dt + c * noise[k];
    }
    y
}

fn reflect_into(domain: &BoundingBox, x: &mut Point) {
    for k in 0..domain.dim {
        let (lo, hi) = (domain.lo[k], domain.hi[k]);
        let w = hi - lo;
        // fold onto [0, 2w) then mirror the upper half
        let mut t = (x[k] - lo).rem_euclid(2.0 * w);
        if t > w {
            t = 2.0 * w - t;
        }
        x[k] = lo + t;
    }
}

/// Applies the model's box policy to a freshly stepped state.
#[inline]
pub(crate) fn enforce_box(model: &DiffusionModel, step: usize, mut x: Point) -> Result<Point> {
    let domain = model.domain();
    if domain.contains(&x) {
        return Ok(x);
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::BoxExit { step, state: x });
    }
    match model.policy() {
        BoxPolicy::Confine => Err(Error::BoxExit { step, state: x }),
        BoxPolicy::Reflect => {
            reflect_into(domain, &mut x);
            Ok(x)
        }
    }
}

fn check_start(model: &DiffusionModel, x0: &Point, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Model(format!("time step must be positive, got {dt}")));
    }
    if !model.domain().contains(x0) {
        return Err(Error::BoxExit { step: 0, state: *x0 });
    }
    let b = model.drift(x0);
    if dt * norm(&b) > 0.1 * model.domain().diameter() {
        warn!(
            "dt·|b(x0)| = {:.3e} exceeds a tenth of the box diameter",
            dt * norm(&b)
        );
    }
    Ok(())
}

/// Drives the chain for `n_steps` steps, handing every state (including `x0`,
/// index 0) to `visit`. Returns the final state. Nothing is stored.
pub fn simulate_with(
    model: &DiffusionModel,
    x0: &Point,
    dt: f64,
    n_steps: usize,
    rng: &mut StreamRng,
    mut visit: impl FnMut(usize, &Point),
) -> Result<Point> {
    check_start(model, x0, dt)?;
    let mut x = *x0;
    visit(0, &x);
    for k in 1..=n_steps {
        x = enforce_box(model, k, em_step(model, &x, dt, rng))?;
        visit(k, &x);
    }
    Ok(x)
}

/// `n_steps` Euler–Maruyama steps from `x0` on stream `(seed, stream_id)`.
pub fn simulate(
    model: &DiffusionModel,
    x0: &Point,
    dt: f64,
    n_steps: usize,
    seed: u64,
    stream_id: u64,
) -> Result<Trajectory> {
    let mut rng = StreamRng::new(seed, stream_id);
    let mut states = Vec::with_capacity(n_steps + 1);
    simulate_with(model, x0, dt, n_steps, &mut rng, |_, x| states.push(*x))?;
    Ok(Trajectory {
        dt,
        states,
        seed,
        stream_id,
        dim: model.dim(),
    })
}

/// Steps until the first sample satisfying `stop` (checked on `x0` too).
/// Returns the path and the hit index, or `None` after `max_steps` steps.
pub fn simulate_until(
    model: &DiffusionModel,
    x0: &Point,
    dt: f64,
    stop: &dyn Fn(&Point) -> bool,
    max_steps: usize,
    seed: u64,
    stream_id: u64,
) -> Result<(Trajectory, Option<usize>)> {
    check_start(model, x0, dt)?;
    let mut rng = StreamRng::new(seed, stream_id);
    let mut x = *x0;
    let mut states = vec![x];
    let mut hit = stop(&x).then_some(0);
    let mut k = 0;
    while hit.is_none() && k < max_steps {
        k += 1;
        x = enforce_box(model, k, em_step(model, &x, dt, &mut rng))?;
        states.push(x);
        if stop(&x) {
            hit = Some(k);
        }
    }
    let traj = Trajectory {
        dt,
        states,
        seed,
        stream_id,
        dim: model.dim(),
    };
    Ok((traj, hit))
}

/// Like [`simulate_until`] but keeps only the hit index and state.
pub fn run_until(
    model: &DiffusionModel,
    x0: &Point,
    dt: f64,
    stop: &dyn Fn(&Point) -> bool,
    max_steps: usize,
    rng: &mut StreamRng,
) -> Result<Option<(usize, Point)>> {
    check_start(model, x0, dt)?;
    let mut x = *x0;
    if stop(&x) {
        return Ok(Some((0, x)));
    }
    for k in 1..=max_steps {
        x = enforce_box(model, k, em_step(model, &x, dt, rng))?;
        if stop(&x) {
            return Ok(Some((k, x)));
        }
    }
    Ok(None)
}
