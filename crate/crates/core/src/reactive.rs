//! Entrance and exit times on sampled paths, reactive segments and their
//! empirical statistics.
//!
//! For a path `X_0, X_1, …` and regions A, B (closures Ā, B̄):
//!
//! * `τ_{A,0}^+` is the first index in Ā;
//! * `τ_{B,k}^+` is the first index in B̄ after `τ_{A,k}^+`;
//! * `τ_{A,k+1}^+` is the first index in Ā after `τ_{B,k}^+`;
//! * `τ_{A,k}^-` is the last index in Ā before `τ_{B,k}^+`;
//! * `τ_{B,k}^-` is the last index in B̄ before `τ_{A,k+1}^+`.
//!
//! The k-th reactive segment is the stretch `[τ_{A,k}^-, τ_{B,k}^+]`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::integrate::{simulate_with, Trajectory};
use crate::measure::BoundaryMeasure;
use crate::model::{DiffusionModel, Region};
use crate::rng::StreamRng;
use crate::stats::{batch_means, Estimate};
use crate::Point;

#[derive(Clone, Debug, PartialEq)]
pub struct ReactiveSegment {
    pub k: usize,
    /// τ_{A,k}^+
    pub idx_a_plus: usize,
    /// τ_{A,k}^-
    pub idx_a_minus: usize,
    /// τ_{B,k}^+
    pub idx_b_plus: usize,
    /// τ_{B,k}^-: last B̄ index before the next entrance to Ā, or before the
    /// end of the path when there is none.
    pub idx_b_minus: usize,
    /// τ_{A,k+1}^+, if the path reaches Ā again.
    pub next_a_plus: Option<usize>,
    /// States at indices `idx_a_minus..=idx_b_plus`.
    pub path: Vec<Point>,
    /// State at `idx_a_plus`.
    pub x_a_plus: Point,
    /// State at `idx_b_minus`.
    pub x_b_minus: Point,
}

impl ReactiveSegment {
    pub fn x_a_minus(&self) -> Point {
        self.path[0]
    }

    pub fn x_b_plus(&self) -> Point {
        *self.path.last().expect("segment path is never empty")
    }

    /// Crossover duration `τ_{B,k}^+ − τ_{A,k}^-` in steps.
    pub fn crossover_steps(&self) -> usize {
        self.idx_b_plus - self.idx_a_minus
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Start,
    LastA,
    LastB,
}

/// Online segmentation: feed states in order, collect segments at the end.
///
/// Memory is bounded by the longest excursion out of Ā that ends in B̄ plus
/// the excursions that return to Ā, each discarded on return.
#[derive(Clone, Debug)]
pub struct SegmentScanner {
    a: Region,
    b: Region,
    phase: Phase,
    index: usize,
    a_plus: (usize, Point),
    last_a: usize,
    last_b: (usize, Point),
    buffer: Vec<Point>,
    open: Option<ReactiveSegment>,
    done: Vec<ReactiveSegment>,
}

impl SegmentScanner {
    pub fn new(a: &Region, b: &Region) -> Self {
        Self {
            a: a.clone(),
            b: b.clone(),
            phase: Phase::Start,
            index: 0,
            a_plus: (0, [0.0; 2]),
            last_a: 0,
            last_b: (0, [0.0; 2]),
            buffer: Vec::new(),
            open: None,
            done: Vec::new(),
        }
    }

    /// Number of states consumed.
    pub fn len(&self) -> usize {
        self.index
    }

    pub fn is_empty(&self) -> bool {
        self.index == 0
    }

    pub fn push(&mut self, x: &Point) {
        let i = self.index;
        self.index += 1;
        let in_a = self.a.contains_closure(x);
        let in_b = !in_a && self.b.contains_closure(x);
        match self.phase {
            Phase::Start => {
                if in_a {
                    self.enter_a(i, x);
                }
            }
            Phase::LastA => {
                if in_a {
                    self.last_a = i;
                    self.buffer.clear();
                    self.buffer.push(*x);
                } else if in_b {
                    self.buffer.push(*x);
                    let path = std::mem::take(&mut self.buffer);
                    self.open = Some(ReactiveSegment {
                        k: self.done.len(),
                        idx_a_plus: self.a_plus.0,
                        idx_a_minus: self.last_a,
                        idx_b_plus: i,
                        idx_b_minus: i,
                        next_a_plus: None,
                        path,
                        x_a_plus: self.a_plus.1,
                        x_b_minus: *x,
                    });
                    self.last_b = (i, *x);
                    self.phase = Phase::LastB;
                } else {
                    self.buffer.push(*x);
                }
            }
            Phase::LastB => {
                if in_b {
                    self.last_b = (i, *x);
                } else if in_a {
                    self.close(Some(i));
                    self.enter_a(i, x);
                }
            }
        }
    }

    fn enter_a(&mut self, i: usize, x: &Point) {
        self.phase = Phase::LastA;
        self.a_plus = (i, *x);
        self.last_a = i;
        self.buffer.clear();
        self.buffer.push(*x);
    }

    fn close(&mut self, next: Option<usize>) {
        if let Some(mut s) = self.open.take() {
            s.idx_b_minus = self.last_b.0;
            s.x_b_minus = self.last_b.1;
            s.next_a_plus = next;
            self.done.push(s);
        }
    }

    /// Completed segments; the last one may lack `next_a_plus`.
    pub fn finish(mut self) -> Vec<ReactiveSegment> {
        self.close(None);
        self.done
    }
}

/// Reactive segments of `traj` in chronological order.
pub fn segment_reactive(traj: &Trajectory, a: &Region, b: &Region) -> Vec<ReactiveSegment> {
    segment_states(&traj.states, a, b)
}

pub fn segment_states(states: &[Point], a: &Region, b: &Region) -> Vec<ReactiveSegment> {
    let mut scanner = SegmentScanner::new(a, b);
    for x in states {
        scanner.push(x);
    }
    scanner.finish()
}

/// Which sampled boundary event to collect.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryEvent {
    /// `X` at `τ_{A,k}^-`, estimating η_A^-.
    AExit,
    /// `X` at `τ_{A,k}^+`, estimating η_A^+.
    AEntrance,
    /// `X` at `τ_{B,k}^-`, estimating η_B^-.
    BExit,
    /// `X` at `τ_{B,k}^+`, estimating η_B^+.
    BEntrance,
}

impl BoundaryEvent {
    pub fn on_a(self) -> bool {
        matches!(self, Self::AExit | Self::AEntrance)
    }
}

/// Raw sampled states of the chosen event, one per segment (exits from B only
/// for segments followed by a return to Ā).
pub fn boundary_samples(segments: &[ReactiveSegment], which: BoundaryEvent) -> Vec<Point> {
    segments
        .iter()
        .filter_map(|s| match which {
            BoundaryEvent::AExit => Some(s.x_a_minus()),
            BoundaryEvent::AEntrance => Some(s.x_a_plus),
            BoundaryEvent::BEntrance => Some(s.x_b_plus()),
            BoundaryEvent::BExit => s.next_a_plus.map(|_| s.x_b_minus),
        })
        .collect()
}

/// Empirical exit or entrance distribution: each sample is moved to its
/// nearest boundary atom with weight `1/N`. Samples deeper than `limit` inside
/// the region indicate a time step too large for the boundary resolution.
pub fn empirical_boundary_distribution(
    segments: &[ReactiveSegment],
    which: BoundaryEvent,
    a: &Region,
    b: &Region,
    limit: f64,
) -> Result<BoundaryMeasure> {
    let region = if which.on_a() { a } else { b };
    let samples = boundary_samples(segments, which);
    if samples.is_empty() {
        return Err(Error::InsufficientData("no boundary events".into()));
    }
    let mut weights = vec![0.0; region.atoms().len()];
    let w = 1.0 / samples.len() as f64;
    for x in &samples {
        let d = region.signed_distance(x).abs();
        if d > limit {
            return Err(Error::FarFromBoundary {
                location: *x,
                distance: d,
                limit,
            });
        }
        weights[region.nearest_atom(x)] += w;
    }
    BoundaryMeasure::on_atoms(region, weights)
}

/// Rate, reaction times and crossover times with batch-means standard errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionStatistics {
    pub transitions: usize,
    pub total_time: f64,
    /// ν_R = N_T / T
    pub rate: Estimate,
    pub t_ab: Estimate,
    pub t_ba: Estimate,
    pub c_ab: Estimate,
    pub c_ba: Estimate,
}

/// Statistics of one path of duration `total_time` sampled every `dt`.
pub fn reaction_statistics(
    segments: &[ReactiveSegment],
    total_time: f64,
    dt: f64,
) -> Result<ReactionStatistics> {
    pooled_reaction_statistics(&[(segments, total_time)], dt)
}

/// Statistics pooled over independent paths, each weighted by its duration.
pub fn pooled_reaction_statistics(
    runs: &[(&[ReactiveSegment], f64)],
    dt: f64,
) -> Result<ReactionStatistics> {
    let mut t_ab = Vec::new();
    let mut c_ab = Vec::new();
    let mut t_ba = Vec::new();
    let mut c_ba = Vec::new();
    let mut cycles = Vec::new();
    let mut total = 0.0;
    for (segments, duration) in runs {
        total += duration;
        for s in segments.iter() {
            t_ab.push((s.idx_b_plus - s.idx_a_plus) as f64 * dt);
            c_ab.push((s.idx_b_plus - s.idx_a_minus) as f64 * dt);
            if let Some(next) = s.next_a_plus {
                t_ba.push((next - s.idx_b_plus) as f64 * dt);
                c_ba.push((next - s.idx_b_minus) as f64 * dt);
                cycles.push((next - s.idx_a_plus) as f64 * dt);
            }
        }
    }
    let n = t_ab.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} reactive segments, need at least 2"
        )));
    }
    let rate = n as f64 / total;
    let cyc = batch_means(&cycles);
    let rate_se = if cyc.value > 0.0 {
        rate * cyc.stderr / cyc.value
    } else {
        f64::NAN
    };
    let stats = ReactionStatistics {
        transitions: n,
        total_time: total,
        rate: Estimate {
            value: rate,
            stderr: rate_se,
        },
        t_ab: batch_means(&t_ab),
        t_ba: batch_means(&t_ba),
        c_ab: batch_means(&c_ab),
        c_ba: batch_means(&c_ba),
    };
    debug_assert!(stats.c_ab.value <= stats.t_ab.value);
    Ok(stats)
}

/// Occupation density of reactive samples: every sample strictly inside a
/// segment adds `dt/T` to its nearest node, divided by the node's cell volume.
pub fn empirical_reactive_density(
    segments: &[ReactiveSegment],
    dt: f64,
    total_time: f64,
    grid: &Arc<Grid>,
) -> ScalarField {
    let mut acc = vec![0.0; grid.len()];
    accumulate_reactive_density(segments, dt, &mut acc, grid);
    finish_density(acc, total_time, grid)
}

/// Adds `dt` per interior reactive sample to `acc` (per node, not yet normalized).
pub fn accumulate_reactive_density(segments: &[ReactiveSegment], dt: f64, acc: &mut [f64], grid: &Grid) {
    for s in segments {
        let m = s.path.len();
        for x in &s.path[1..m.saturating_sub(1).max(1)] {
            if let Some(i) = grid.nearest_node(x) {
                acc[i] += dt;
            }
        }
    }
}

/// Divides accumulated occupation times by `T` and the cell volumes.
pub fn finish_density(mut acc: Vec<f64>, total_time: f64, grid: &Arc<Grid>) -> ScalarField {
    for (i, v) in acc.iter_mut().enumerate() {
        *v /= total_time * grid.weight(i);
    }
    ScalarField::new(grid.clone(), acc)
}

/// Chronological entrance points into Ā, projected onto ∂A.
pub fn entrance_chain(segments: &[ReactiveSegment], a: &Region) -> Vec<Point> {
    segments.iter().map(|s| a.project(&s.x_a_plus)).collect()
}

/// Reactive segments of independent streams, scanned on the fly.
#[derive(Clone, Debug)]
pub struct PooledRun {
    pub dt: f64,
    /// Duration of every stream.
    pub duration: f64,
    /// Segments per stream, in stream order.
    pub runs: Vec<Vec<ReactiveSegment>>,
    /// Pooled reactive occupation density, when a histogram grid was given.
    pub density: Option<ScalarField>,
}

impl PooledRun {
    pub fn segments(&self) -> impl Iterator<Item = &ReactiveSegment> {
        self.runs.iter().flatten()
    }

    pub fn count(&self) -> usize {
        self.runs.iter().map(Vec::len).sum()
    }

    pub fn total_time(&self) -> f64 {
        self.duration * self.runs.len() as f64
    }

    pub fn statistics(&self) -> Result<ReactionStatistics> {
        let v: Vec<(&[ReactiveSegment], f64)> =
            self.runs.iter().map(|s| (s.as_slice(), self.duration)).collect();
        pooled_reaction_statistics(&v, self.dt)
    }
}

/// Runs `streams` independent paths of `steps` steps from `x0`; stream `i`
/// uses `(seed, i)`. States are never stored in full: segments are cut while
/// stepping, and unless `keep_paths` is set each segment keeps only its first
/// and last state. Reactive samples are binned on `hist` when given.
#[allow(clippy::too_many_arguments)]
pub fn pooled_segments(
    model: &DiffusionModel,
    a: &Region,
    b: &Region,
    x0: &Point,
    dt: f64,
    steps: usize,
    streams: usize,
    seed: u64,
    hist: Option<&Arc<Grid>>,
    keep_paths: bool,
) -> Result<PooledRun> {
    if streams == 0 {
        return Err(Error::InsufficientData("no streams requested".into()));
    }
    let out: Vec<(Vec<ReactiveSegment>, Vec<f64>)> = (0..streams as u64)
        .into_par_iter()
        .map(|id| -> Result<_> {
            let mut rng = StreamRng::new(seed, id);
            let mut scan = SegmentScanner::new(a, b);
            simulate_with(model, x0, dt, steps, &mut rng, |_, x| scan.push(x))?;
            let mut segs = scan.finish();
            let mut acc = Vec::new();
            if let Some(g) = hist {
                acc = vec![0.0; g.len()];
                accumulate_reactive_density(&segs, dt, &mut acc, g);
            }
            if !keep_paths {
                for s in &mut segs {
                    let (first, last) = (s.x_a_minus(), s.x_b_plus());
                    s.path = vec![first, last];
                }
            }
            Ok((segs, acc))
        })
        .collect::<Result<_>>()?;
    let duration = steps as f64 * dt;
    let mut runs = Vec::with_capacity(streams);
    let mut acc = hist.map(|g| vec![0.0; g.len()]);
    for (segs, o) in out {
        if let Some(acc) = acc.as_mut() {
            for (t, v) in acc.iter_mut().zip(&o) {
                *t += v;
            }
        }
        runs.push(segs);
    }
    let density = hist.zip(acc).map(|(g, acc)| finish_density(acc, duration * streams as f64, g));
    Ok(PooledRun {
        dt,
        duration,
        runs,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regions() -> (Region, Region) {
        (
            Region::interval("A", -1.1, -0.9).unwrap(),
            Region::interval("B", 0.9, 1.1).unwrap(),
        )
    }

    fn states(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| [x, 0.0]).collect()
    }

    #[test]
    fn hand_example() {
        let (a, b) = regions();
        let s = segment_states(&states(&[-1.0, -0.5, 0.2, -0.95, 0.3, 0.8, 1.0, 0.5]), &a, &b);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].idx_a_plus, s[0].idx_a_minus, s[0].idx_b_plus), (0, 3, 6));
        assert_eq!(s[0].idx_b_minus, 6);
        assert_eq!(s[0].next_a_plus, None);
        assert_eq!(s[0].path.len(), 4);
    }

    #[test]
    fn never_reaching_b() {
        let (a, b) = regions();
        assert!(segment_states(&states(&[-1.0, 0.0, 0.5, -1.0, 0.3]), &a, &b).is_empty());
        assert!(segment_states(&states(&[1.0, 0.0, 0.5]), &a, &b).is_empty());
    }

    #[test]
    fn two_cycles() {
        let (a, b) = regions();
        let xs = [0.0, -1.0, 0.0, 1.0, 0.95, 0.5, 1.0, 0.0, -1.0, -1.05, 0.0, 1.0];
        let s = segment_states(&states(&xs), &a, &b);
        assert_eq!(s.len(), 2);
        assert_eq!(
            (s[0].idx_a_plus, s[0].idx_a_minus, s[0].idx_b_plus, s[0].idx_b_minus),
            (1, 1, 3, 6)
        );
        assert_eq!(s[0].next_a_plus, Some(8));
        assert_eq!((s[1].idx_a_plus, s[1].idx_a_minus, s[1].idx_b_plus), (8, 9, 11));
    }

    fn seg(ap: usize, am: usize, bp: usize, bm: usize, next: Option<usize>) -> ReactiveSegment {
        ReactiveSegment {
            k: 0,
            idx_a_plus: ap,
            idx_a_minus: am,
            idx_b_plus: bp,
            idx_b_minus: bm,
            next_a_plus: next,
            path: vec![[0.0; 2]; bp - am + 1],
            x_a_plus: [0.0; 2],
            x_b_minus: [0.0; 2],
        }
    }

    #[test]
    fn synthetic_statistics() {
        let segs = vec![seg(0, 3, 6, 6, Some(10)), seg(10, 13, 16, 18, None)];
        let st = reaction_statistics(&segs, 20.0, 1.0).unwrap();
        assert_eq!(st.t_ab.value, 6.0);
        assert_eq!(st.c_ab.value, 3.0);
        assert_eq!(st.t_ba.value, 4.0);
        assert_eq!(st.c_ba.value, 4.0);
        assert_eq!(st.rate.value, 0.1);
        assert!(reaction_statistics(&segs[..1], 20.0, 1.0).is_err());
    }

    #[test]
    fn exit_measure_projects_to_atoms() {
        let (a, b) = regions();
        let s = segment_states(&states(&[-1.0, -0.91, 0.0, 0.95]), &a, &b);
        let m = empirical_boundary_distribution(&s, BoundaryEvent::AExit, &a, &b, 0.05).unwrap();
        assert_eq!(m.weights(), &[0.0, 1.0]);
        assert!(empirical_boundary_distribution(&s, BoundaryEvent::AExit, &a, &b, 0.001).is_err());
    }

    #[test]
    fn no_segments_zero_density() {
        let g = Arc::new(Grid::new(&crate::model::BoundingBox::new_1d(-2.0, 2.0), [41, 1]).unwrap());
        let d = empirical_reactive_density(&[], 0.01, 10.0, &g);
        assert!(d.values().iter().all(|&v| v == 0.0));
    }
}
