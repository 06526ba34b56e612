//! The transition path process: `dY = K(Y) dt + √2 σ(Y) dŴ` with
//! `K = b + 2a∇q/q`, started on ∂A or in Θ and absorbed on B̄.
//!
//! The drift is singular on ∂A, where `q = 0`, and pushes the path away from
//! Ā. Three devices keep the discretization faithful to that behaviour:
//!
//! * A start on ∂A takes one deterministic micro-step of length
//!   `ε = dt_max/100` along the small-time profile `y₀ + 2√ε a∇q/⟨∇q, a∇q⟩^{1/2}`.
//! * Steps are `dt = min(dt_max, 0.1 (q/|g|)², 0.5 q/(|∇q| |K|))` with
//!   `g = √2 σᵀ∇q`, so neither the noise nor the drift crosses the boundary
//!   layer in one step. The same two bounds are also applied with the
//!   distance `d` to Ā in place of `q/|∇q|`.
//! * A proposal landing in Ā (or where the interpolated `q` is not positive)
//!   is rejected and retried with the same normals and half the step, at most
//!   30 times.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField, SNAP_FRACTION};
use crate::integrate::enforce_box;
use crate::measure::BoundaryMeasure;
use crate::model::{DiffusionModel, Region};
use crate::pde::{extend_into_regions, gradient};
use crate::rng::StreamRng;
use crate::{dot, mat_vec, norm, Point};

/// Safety factor of the noise-based step bound.
pub const C_SAFE: f64 = 0.1;
/// Fraction of the distance to ∂A that one drift increment may cover.
pub const DRIFT_FRACTION: f64 = 0.5;
/// Ratio of the boundary micro-step to `dt_max`.
pub const EPS_RATIO: f64 = 1e-2;
/// Width, in cells, of the layer next to ∂A where `q` follows its boundary
/// Taylor expansion.
pub const BOUNDARY_LAYER: f64 = 2.0;
/// Rejections allowed at one site.
pub const MAX_HALVINGS: usize = 30;

/// Committor data needed by the sampler: `q` and `∇q` continued linearly into
/// the regions so that bilinear interpolation stays accurate up to ∂A.
#[derive(Clone, Debug)]
pub struct TppField {
    model: DiffusionModel,
    q: ScalarField,
    grad: VectorField,
    a: Region,
    b: Region,
}

impl TppField {
    pub fn new(model: &DiffusionModel, q: &ScalarField) -> Result<Self> {
        let grid = q.grid();
        let (a, b) = grid
            .regions()
            .ok_or_else(|| Error::Grid("committor grid has no regions".into()))?;
        let (a, b) = (a.clone(), b.clone());
        let g = gradient(q);
        let (q, grad) = extend_into_regions(q, &g)?;
        Ok(Self {
            model: model.clone(),
            q,
            grad,
            a,
            b,
        })
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.q.grid()
    }

    pub fn region_a(&self) -> &Region {
        &self.a
    }

    pub fn region_b(&self) -> &Region {
        &self.b
    }

    /// Extended committor values.
    pub fn q(&self) -> &ScalarField {
        &self.q
    }

    /// Extended nodal committor gradient.
    pub fn grad_q(&self) -> &VectorField {
        &self.grad
    }

    /// Committor at `y`. Within [`BOUNDARY_LAYER`] cells of ∂A the bilinear
    /// interpolant is blended into `∇q(p)·(y − p)`, `p` the projection of `y`
    /// onto ∂A, so that the zero level of `q` is exactly ∂A.
    #[inline]
    pub fn q_at(&self, y: &Point) -> f64 {
        let h = self.grid().max_spacing();
        let d = self.a.signed_distance(y);
        if d >= BOUNDARY_LAYER * h {
            return self.q.interpolate(y);
        }
        let p = self.a.project(y);
        let g = self.grad.interpolate(&p);
        let lin = g[0] * (y[0] - p[0]) + g[1] * (y[1] - p[1]);
        let inner = 0.5 * BOUNDARY_LAYER * h;
        if d <= inner {
            lin
        } else {
            let w = (d - inner) / (BOUNDARY_LAYER * h - inner);
            (1.0 - w) * lin + w * self.q.interpolate(y)
        }
    }

    #[inline]
    pub fn grad_at(&self, y: &Point) -> Point {
        self.grad.interpolate(y)
    }
}

/// `K(y) = b(y) + 2a(y)∇q(y)/q(y)`, with `q` and `∇q` interpolated.
pub fn tpp_drift(field: &TppField, y: &Point) -> Result<Point> {
    let q = field.q_at(y);
    if !(q > 0.0) {
        return Err(Error::NonPositiveCommittor { value: q, location: *y });
    }
    Ok(drift_with(field, y, q, &field.grad_at(y)))
}

#[inline]
fn drift_with(field: &TppField, y: &Point, q: f64, gq: &Point) -> Point {
    let b = field.model.drift(y);
    let ag = mat_vec(&field.model.diffusion(y), gq);
    [b[0] + 2.0 * ag[0] / q, b[1] + 2.0 * ag[1] / q]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedB,
    StepLimit,
}

/// Per-path summary, available without recording the states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TppSummary {
    pub start: Point,
    pub end: Point,
    /// Time at absorption (or at the step limit).
    pub time: f64,
    pub steps: usize,
    pub rejections: usize,
    /// Smallest interpolated `q` over accepted states after the first.
    pub min_q: f64,
    /// Accepted states in Ā after the first (always 0 by construction).
    pub a_visits: usize,
    pub termination: Termination,
}

/// A recorded transition path.
#[derive(Clone, Debug, PartialEq)]
pub struct TppPath {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    /// Interpolated committor at each state.
    pub q: Vec<f64>,
    /// Step taken from each state (0 for the last).
    pub dt_eff: Vec<f64>,
    pub summary: TppSummary,
    pub seed: u64,
    pub stream_id: u64,
}

impl TppPath {
    pub fn reached_b(&self) -> bool {
        self.summary.termination == Termination::ReachedB
    }

    pub fn hitting_time(&self) -> f64 {
        self.summary.time
    }
}

/// Step-size bound at `y`.
#[inline]
pub fn step_size(field: &TppField, y: &Point, q: f64, gq: &Point, k: &Point, dt_max: f64) -> f64 {
    let a = field.model.diffusion(y);
    let g2 = 2.0 * dot(gq, &mat_vec(&a, gq));
    let mut dt = dt_max;
    if g2 > 0.0 {
        dt = dt.min(C_SAFE * q * q / g2);
    }
    let drift = norm(gq) * norm(k);
    if drift > 0.0 {
        dt = dt.min(DRIFT_FRACTION * q / drift);
    }
    // the same bounds against the geometric distance to Ā, which can differ
    // from q/|∇q| where the interpolated q misplaces the boundary
    let d = field.a.signed_distance(y);
    if d > 0.0 {
        let tr = a[0][0] + a[1][1];
        dt = dt.min(C_SAFE * d * d / (2.0 * tr));
        let kn = norm(k);
        if kn > 0.0 {
            dt = dt.min(DRIFT_FRACTION * d / kn);
        }
    }
    dt
}

/// Runs one path and hands each accepted state to `visit(t, y, q, dt_next)`;
/// `dt_next` is the step taken from `y` (0 for the terminal state).
pub fn run_tpp(
    field: &TppField,
    y0: &Point,
    dt_max: f64,
    max_steps: usize,
    rng: &mut StreamRng,
    mut visit: impl FnMut(f64, &Point, f64, f64),
) -> Result<TppSummary> {
    if !(dt_max > 0.0) {
        return Err(Error::Model(format!("dt_max must be positive, got {dt_max}")));
    }
    let model = &field.model;
    let dim = model.dim();
    let h = field.grid().max_spacing();
    let sd_a = field.a.signed_distance(y0);
    if sd_a < -h {
        return Err(Error::FarFromBoundary {
            location: *y0,
            distance: -sd_a,
            limit: h,
        });
    }
    let mut summary = TppSummary {
        start: *y0,
        end: *y0,
        time: 0.0,
        steps: 0,
        rejections: 0,
        min_q: f64::INFINITY,
        a_visits: 0,
        termination: Termination::StepLimit,
    };
    let mut t = 0.0;
    let mut y = *y0;
    if field.b.contains_closure(&y) {
        visit(0.0, &y, field.q_at(&y), 0.0);
        summary.termination = Termination::ReachedB;
        return Ok(summary);
    }
    if sd_a <= SNAP_FRACTION * h {
        // start on ∂A: deterministic micro-step along the small-time profile
        let p = field.a.project(&y);
        let gq = field.grad_at(&p);
        let ag = mat_vec(&model.diffusion(&p), &gq);
        let s = dot(&gq, &ag).sqrt();
        if !(s > 0.0) {
            return Err(Error::NonPositiveCommittor {
                value: s,
                location: p,
            });
        }
        let eps = EPS_RATIO * dt_max;
        visit(0.0, &p, 0.0, eps);
        let c = 2.0 * eps.sqrt() / s;
        y = [p[0] + c * ag[0], p[1] + c * ag[1]];
        t = eps;
        summary.steps = 1;
    }

    let mut xi = [0.0; 2];
    loop {
        let q = field.q_at(&y);
        if !(q > 0.0) || field.a.contains_closure(&y) {
            return Err(Error::NonPositiveCommittor { value: q, location: y });
        }
        summary.min_q = summary.min_q.min(q);
        if field.b.contains_closure(&y) {
            visit(t, &y, q, 0.0);
            summary.termination = Termination::ReachedB;
            break;
        }
        if summary.steps >= max_steps {
            visit(t, &y, q, 0.0);
            break;
        }
        let gq = field.grad_at(&y);
        let k = drift_with(field, &y, q, &gq);
        let mut dt = step_size(field, &y, q, &gq, &k, dt_max);
        let sigma = model.sigma(&y);
        for v in xi.iter_mut().take(dim) {
            *v = rng.normal();
        }
        let noise = mat_vec(&sigma, &xi);
        let mut tries = 0;
        let next = loop {
            let c = (2.0 * dt).sqrt();
            let mut z = [0.0; 2];
            for j in 0..dim {
                z[j] = y[j] + k[j] * dt + c * noise[j];
            }
            let z = enforce_box(model, summary.steps + 1, z)?;
            if !field.a.contains_closure(&z) && field.q_at(&z) > 0.0 {
                break z;
            }
            tries += 1;
            summary.rejections += 1;
            if tries > MAX_HALVINGS {
                return Err(Error::TooManyRejections {
                    rejections: tries,
                    location: y,
                });
            }
            dt *= 0.5;
        };
        visit(t, &y, q, dt);
        t += dt;
        y = next;
        summary.steps += 1;
    }
    summary.end = y;
    summary.time = t;
    Ok(summary)
}

/// Samples one transition path from `y0` (on ∂A or in Θ) on stream `(seed, stream_id)`.
pub fn sample_tpp(
    field: &TppField,
    y0: &Point,
    dt_max: f64,
    seed: u64,
    stream_id: u64,
    max_steps: usize,
) -> Result<TppPath> {
    let mut rng = StreamRng::new(seed, stream_id);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut qs = Vec::new();
    let mut dts = Vec::new();
    let summary = run_tpp(field, y0, dt_max, max_steps, &mut rng, |t, y, q, dt| {
        times.push(t);
        states.push(*y);
        qs.push(q);
        dts.push(dt);
    })?;
    Ok(TppPath {
        times,
        states,
        q: qs,
        dt_eff: dts,
        summary,
        seed,
        stream_id,
    })
}

const EXIT_SALT: u64 = 0xE817_D157_0000_0001;

/// `n` draws from a normalized boundary measure by inverse CDF over its atoms.
/// On a disk each draw is spread uniformly over the arc its atom represents.
pub fn sample_exit_distribution(eta: &BoundaryMeasure, n: usize, seed: u64) -> Result<Vec<Point>> {
    let mass = eta.total_mass();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(mass));
    }
    let mut cdf = Vec::with_capacity(eta.len());
    let mut acc = 0.0;
    for &w in eta.weights() {
        if w < 0.0 {
            return Err(Error::NotNormalized(mass));
        }
        acc += w;
        cdf.push(acc);
    }
    let region = eta.region();
    let on_atoms = region.atoms().len() == eta.len()
        && region.atoms().iter().zip(eta.points()).all(|(a, p)| a.point == *p);
    let mut rng = StreamRng::new(seed ^ EXIT_SALT, 0);
    Ok((0..n)
        .map(|_| {
            let u = rng.uniform() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            // skip zero-weight atoms that share the CDF value
            let i = (i..cdf.len()).find(|&j| eta.weights()[j] > 0.0).unwrap_or(i);
            let jitter = rng.uniform();
            if on_atoms {
                region.point_in_atom(i, jitter)
            } else {
                eta.points()[i]
            }
        })
        .collect())
}

/// Results of an ensemble started from an exit distribution.
#[derive(Clone, Debug)]
pub struct TppEnsemble {
    /// Absorption times (crossover times).
    pub crossover_times: Vec<f64>,
    /// Absorption points projected onto ∂B.
    pub hit_points: Vec<Point>,
    pub starts: Vec<Point>,
    /// Mean occupation time per unit volume, `Σ_paths Σ_steps dt·1_cell / (n |cell|)`.
    pub occupation: ScalarField,
    pub rejections: usize,
    pub min_q: f64,
    pub a_visits: usize,
}

/// Paths per deterministic reduction chunk.
const CHUNK: usize = 64;

/// Runs `n_paths` transition paths with starts drawn from `eta_a_minus`; path
/// `i` uses stream `(seed, i)`. Occupation is binned on `occupation_grid`.
pub fn tpp_ensemble(
    field: &TppField,
    eta_a_minus: &BoundaryMeasure,
    n_paths: usize,
    occupation_grid: &Arc<Grid>,
    dt_max: f64,
    seed: u64,
    max_steps: usize,
) -> Result<TppEnsemble> {
    if n_paths < 100 {
        return Err(Error::InsufficientData(format!(
            "{n_paths} paths requested, need at least 100"
        )));
    }
    let starts = sample_exit_distribution(eta_a_minus, n_paths, seed)?;
    let og = occupation_grid.clone();
    let b = field.region_b().clone();
    type Chunk = (Vec<(f64, Point, TppSummary)>, Vec<f64>);
    let chunks: Vec<Chunk> = starts
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| -> Result<Chunk> {
            let mut occ = vec![0.0; og.len()];
            let mut out = Vec::with_capacity(chunk.len());
            for (j, y0) in chunk.iter().enumerate() {
                let id = (c * CHUNK + j) as u64;
                let mut rng = StreamRng::new(seed, id);
                let s = run_tpp(field, y0, dt_max, max_steps, &mut rng, |_, y, _, dt| {
                    if dt > 0.0 {
                        if let Some(i) = og.nearest_node(y) {
                            occ[i] += dt;
                        }
                    }
                })?;
                if s.termination == Termination::StepLimit {
                    return Err(Error::StepLimit { max_steps });
                }
                out.push((s.time, b.project(&s.end), s));
            }
            Ok((out, occ))
        })
        .collect::<Result<_>>()?;
    let mut occ = vec![0.0; og.len()];
    let mut crossover_times = Vec::with_capacity(n_paths);
    let mut hit_points = Vec::with_capacity(n_paths);
    let (mut rejections, mut min_q, mut a_visits) = (0, f64::INFINITY, 0);
    for (paths, o) in chunks {
        for (acc, v) in occ.iter_mut().zip(&o) {
            *acc += v;
        }
        for (t, p, s) in paths {
            crossover_times.push(t);
            hit_points.push(p);
            rejections += s.rejections;
            min_q = min_q.min(s.min_q);
            a_visits += s.a_visits;
        }
    }
    for (i, v) in occ.iter_mut().enumerate() {
        *v /= n_paths as f64 * og.weight(i);
    }
    Ok(TppEnsemble {
        crossover_times,
        hit_points,
        starts,
        occupation: ScalarField::new(og, occ),
        rejections,
        min_q,
        a_visits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelDescriptor};
    use crate::pde::solve_committor;

    fn bessel_field() -> TppField {
        let m = build_model(&ModelDescriptor::new("brownian1d")).unwrap();
        let a = Region::interval("A", -2.0, 0.0).unwrap();
        let b = Region::interval("B", 1.0, 3.0).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [512, 1], &a, &b).unwrap());
        let q = solve_committor(&m, &g).unwrap();
        TppField::new(&m, &q).unwrap()
    }

    #[test]
    fn bessel_drift() {
        let f = bessel_field();
        for y in [0.05, 0.3, 0.77] {
            let k = tpp_drift(&f, &[y, 0.0]).unwrap();
            assert!((k[0] - 1.0 / y).abs() < 1e-6 / y, "{} vs {}", k[0], 1.0 / y);
        }
        assert!(tpp_drift(&f, &[-0.5, 0.0]).is_err());
    }

    #[test]
    fn path_stays_out_of_a_and_ends_at_one() {
        let f = bessel_field();
        for id in 0..20 {
            let p = sample_tpp(&f, &[0.0, 0.0], 1e-4, 5, id, 1_000_000).unwrap();
            assert!(p.reached_b());
            assert!(p.states[1..].iter().all(|y| y[0] > 0.0));
            assert!(p.q[1..].iter().all(|&q| q > 0.0));
            assert!(p.states.last().unwrap()[0] >= 1.0);
            assert_eq!(p.summary.a_visits, 0);
        }
    }

    #[test]
    fn deterministic_paths() {
        let f = bessel_field();
        let a = sample_tpp(&f, &[0.0, 0.0], 1e-4, 5, 3, 1_000_000).unwrap();
        let b = sample_tpp(&f, &[0.0, 0.0], 1e-4, 5, 3, 1_000_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_limit_flag() {
        let f = bessel_field();
        let p = sample_tpp(&f, &[0.0, 0.0], 1e-4, 5, 3, 10).unwrap();
        assert_eq!(p.summary.termination, Termination::StepLimit);
    }

    #[test]
    fn single_atom_measure() {
        let a = Region::interval("A", -2.0, 0.0).unwrap();
        let eta = BoundaryMeasure::on_atoms(&a, vec![0.0, 1.0]).unwrap();
        let pts = sample_exit_distribution(&eta, 100, 1).unwrap();
        assert!(pts.iter().all(|p| p[0] == 0.0));
        let bad = BoundaryMeasure::on_atoms(&a, vec![0.0, 2.0]).unwrap();
        assert!(sample_exit_distribution(&bad, 1, 1).is_err());
    }
}
