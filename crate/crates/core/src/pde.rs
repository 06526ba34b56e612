//! Finite differences for the generator `L` and the time-reversed generator `L̃`.
//!
//! Diffusion is discretized with second-order central differences. Next to a
//! Dirichlet region the stencil arm is shortened to the boundary crossing
//! (Shortley–Weller), so the region boundary is resolved to second order
//! rather than by a staircase. Drift uses central differences where the local
//! cell Péclet number `|b_k| h / a_kk` is at most 2 and first-order upwinding
//! elsewhere; both choices keep the matrix an M-matrix, hence a discrete
//! maximum principle. Box faces are homogeneous Neumann via mirrored nodes.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Fixed, Grid, NodeClass, ScalarField, VectorField};
use crate::integrate::run_until;
use crate::model::{DiffusionModel, InvariantDensity, Region};
use crate::rng::StreamRng;
use crate::sparse::{self, CsrBuilder, CsrMatrix, SolveInfo};
use crate::{dot, mat_vec, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `L u = tr(a∇²u) + b·∇u`.
    Forward,
    /// `L̃ u = −b·∇u + (2/ρ) div(aρ)·∇u + tr(a∇²u)`.
    Backward,
}

/// A discretized generator: rows of `L` at free nodes, identity rows at nodes
/// holding Dirichlet data.
#[derive(Clone, Debug)]
pub struct Generator {
    grid: Arc<Grid>,
    fixed: Fixed,
    matrix: CsrMatrix,
}

/// Smallest ratio of region radius to grid spacing accepted by the solvers.
pub const MIN_CELLS_PER_RADIUS: f64 = 8.0;

impl Generator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn fixed(&self) -> Fixed {
        self.fixed
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.apply(u)
    }

    /// Solves `L u = f` at free nodes with `u = boundary(class)` on fixed nodes.
    pub fn solve(
        &self,
        f: impl Fn(usize) -> f64,
        boundary: impl Fn(NodeClass) -> f64,
    ) -> Result<(Vec<f64>, SolveInfo)> {
        let rhs: Vec<f64> = (0..self.grid.len())
            .map(|i| {
                let c = self.grid.class(i);
                if self.fixed.contains(c) {
                    boundary(c)
                } else {
                    f(i)
                }
            })
            .collect();
        let x0: Vec<f64> = (0..self.grid.len())
            .map(|i| if self.fixed.contains(self.grid.class(i)) { rhs[i] } else { 0.0 })
            .collect();
        sparse::solve(&self.matrix, &rhs, Some(&x0))
    }
}

fn check_resolution(grid: &Grid) -> Result<()> {
    if let Some((a, b)) = grid.regions() {
        let r = a.radius().min(b.radius());
        let h = grid.max_spacing();
        if h * MIN_CELLS_PER_RADIUS > r * (1.0 + 1e-12) {
            return Err(Error::Grid(format!(
                "spacing {h:.4e} does not resolve region radius {r:.4e} (need h ≤ r/{MIN_CELLS_PER_RADIUS})"
            )));
        }
    }
    Ok(())
}

/// Assembles the generator with drift `drift` and the model's diffusion.
pub fn assemble(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
    drift: &(dyn Fn(&Point) -> Point + Sync),
    fixed: Fixed,
) -> Result<Generator> {
    if model.dim() != grid.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: grid.dim(),
        });
    }
    check_resolution(grid)?;
    let n = grid.len();
    let mut builder = CsrBuilder::new(n);
    for idx in 0..n {
        let class = grid.class(idx);
        if fixed.contains(class) {
            builder.add(idx, 1.0);
            builder.finish_row();
            continue;
        }
        let x = grid.point(idx);
        let a = model.diffusion(&x);
        if grid.dim() == 2 && (a[0][1].abs() > 1e-14 || a[1][0].abs() > 1e-14) {
            return Err(Error::Model(
                "grid solver supports diagonal diffusion matrices only".into(),
            ));
        }
        let b = drift(&x);
        let mut diag = 0.0;
        for k in 0..grid.dim() {
            let h = grid.spacing(k);
            let arm = |dir: i32| -> Option<(usize, f64)> {
                let nb = grid.neighbor(idx, k, dir)?;
                if fixed.contains(grid.class(nb)) {
                    Some((nb, grid.crossing_fraction(idx, k, dir) * h))
                } else {
                    Some((nb, h))
                }
            };
            let (left, right) = match (arm(-1), arm(1)) {
                (Some(l), Some(r)) => (l, r),
                (None, Some(r)) => (r, r),
                (Some(l), None) => (l, l),
                (None, None) => unreachable!("axes have at least three nodes"),
            };
            let (cl, hl) = left;
            let (cr, hr) = right;
            let akk = a[k][k];
            let mut wl = 2.0 * akk / (hl * (hl + hr));
            let mut wr = 2.0 * akk / (hr * (hl + hr));
            let bk = b[k];
            if bk.abs() * hl.max(hr) <= 2.0 * akk {
                wr += bk * hl / (hr * (hl + hr));
                wl -= bk * hr / (hl * (hl + hr));
            } else if bk > 0.0 {
                wr += bk / hr;
            } else {
                wl -= bk / hl;
            }
            builder.add(cl, wl);
            builder.add(cr, wr);
            diag -= wl + wr;
        }
        builder.add(idx, diag);
        builder.finish_row();
    }
    Ok(Generator {
        grid: grid.clone(),
        fixed,
        matrix: builder.build(),
    })
}

/// Drift of the time-reversed process, `b̃ = −b + 2(div a + a∇log ρ)`.
pub fn backward_drift(model: &DiffusionModel, rho: &InvariantDensity, x: &Point) -> Point {
    let b = model.drift(x);
    let g = rho.grad_log_at(x);
    let ag = mat_vec(&model.diffusion(x), &g);
    let da = model.div_diffusion(x);
    [-b[0] + 2.0 * (da[0] + ag[0]), -b[1] + 2.0 * (da[1] + ag[1])]
}

/// Discretizes `L` or `L̃` with Dirichlet rows on both regions.
pub fn discretize_generator(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
    which: Direction,
    rho: Option<&InvariantDensity>,
) -> Result<Generator> {
    discretize_with(model, grid, which, rho, Fixed::BOTH)
}

fn discretize_with(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
    which: Direction,
    rho: Option<&InvariantDensity>,
    fixed: Fixed,
) -> Result<Generator> {
    match which {
        Direction::Forward => assemble(model, grid, &|x| model.drift(x), fixed),
        Direction::Backward => {
            let rho = rho.ok_or_else(|| {
                Error::Model("the backward generator needs the invariant density".into())
            })?;
            assemble(model, grid, &|x| backward_drift(model, rho, x), fixed)
        }
    }
}

fn require_regions(grid: &Grid) -> Result<()> {
    grid.regions()
        .map(|_| ())
        .ok_or_else(|| Error::Grid("grid has no reactant/product regions".into()))
}

/// Forward committor: `L q = 0` in Θ, `q = 0` on Ā, `q = 1` on B̄.
pub fn solve_committor(model: &DiffusionModel, grid: &Arc<Grid>) -> Result<ScalarField> {
    require_regions(grid)?;
    let op = discretize_generator(model, grid, Direction::Forward, None)?;
    let (q, _) = op.solve(|_| 0.0, |c| if c == NodeClass::B { 1.0 } else { 0.0 })?;
    Ok(ScalarField::new(grid.clone(), q).with_fixed(Fixed::BOTH))
}

/// Backward committor: `L̃ q̃ = 0` in Θ, `q̃ = 1` on Ā, `q̃ = 0` on B̄.
pub fn solve_backward_committor(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
    rho: &InvariantDensity,
) -> Result<ScalarField> {
    require_regions(grid)?;
    let op = discretize_generator(model, grid, Direction::Backward, Some(rho))?;
    let (q, _) = op.solve(|_| 0.0, |c| if c == NodeClass::A { 1.0 } else { 0.0 })?;
    Ok(ScalarField::new(grid.clone(), q).with_fixed(Fixed::BOTH))
}

fn only(class: NodeClass) -> Result<Fixed> {
    match class {
        NodeClass::A => Ok(Fixed::A_ONLY),
        NodeClass::B => Ok(Fixed::B_ONLY),
        other => Err(Error::Grid(format!("{other:?} is not a target region"))),
    }
}

/// Mean hitting time of `target`: `L u = −1` off the target, `u = 0` on it.
pub fn solve_mean_hitting_time(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
    target: NodeClass,
) -> Result<ScalarField> {
    require_regions(grid)?;
    let fixed = only(target)?;
    let op = discretize_with(model, grid, Direction::Forward, None, fixed)?;
    let (u, _) = op.solve(|_| -1.0, |_| 0.0)?;
    Ok(ScalarField::new(grid.clone(), u).with_fixed(fixed))
}

/// Mean time for the transition path process to reach its target region.
#[derive(Clone, Debug)]
pub struct TppHittingTime {
    /// `v` at every node: `w/h` in Θ, 0 on the target, boundary values on the source.
    pub field: ScalarField,
    /// Solution of `L w = −h`, `w = 0` on ∂Θ.
    pub w: ScalarField,
    /// `v` at each boundary atom of the source region.
    pub boundary: Vec<f64>,
    /// Θ nodes that cannot reach the target without crossing the source.
    pub shadow: Vec<bool>,
}

/// Θ nodes from which the target is unreachable through free nodes.
fn shadow_nodes(grid: &Grid, target: NodeClass) -> Vec<bool> {
    let n = grid.len();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| grid.class(i) == target).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for k in 0..grid.dim() {
            for dir in [-1, 1] {
                if let Some(nb) = grid.neighbor(i, k, dir) {
                    if !seen[nb] && grid.is_theta(nb) {
                        seen[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    (0..n).map(|i| grid.is_theta(i) && !seen[i]).collect()
}

/// Mean hitting time of the transition path process (the diffusion conditioned
/// by `h`, with `h = q` for target B and `h = 1 − q` for target A).
///
/// Solves `L w = −h` with `w = 0` on ∂Θ and sets `v = w/h` in Θ. On the source
/// boundary, where `h` vanishes, `v` is the ratio of normal fluxes of `w` and `h`.
pub fn solve_tpp_mean_hitting(
    model: &DiffusionModel,
    q: &ScalarField,
    target: NodeClass,
) -> Result<TppHittingTime> {
    let grid = q.grid().clone();
    require_regions(&grid)?;
    let source = match target {
        NodeClass::B => NodeClass::A,
        NodeClass::A => NodeClass::B,
        other => return Err(Error::Grid(format!("{other:?} is not a target region"))),
    };
    let h = if target == NodeClass::B {
        q.clone()
    } else {
        q.map(|v| 1.0 - v)
    };
    let shadow = shadow_nodes(&grid, target);
    for i in 0..grid.len() {
        if grid.is_theta(i) && !shadow[i] && h.at(i) < 1e-14 {
            return Err(Error::CommittorVanishes {
                value: h.at(i),
                location: grid.point(i),
            });
        }
    }
    let op = discretize_generator(model, &grid, Direction::Forward, None)?;
    let (w, _) = op.solve(|i| if shadow[i] { 0.0 } else { -h.at(i) }, |_| 0.0)?;
    let w = ScalarField::new(grid.clone(), w).with_fixed(Fixed::BOTH);

    let gw = gradient(&w);
    let gh = gradient(&h);
    let flux_w = boundary_normal_flux(model, &w, &gw, source)?;
    let flux_h = boundary_normal_flux(model, &h, &gh, source)?;
    let boundary: Vec<f64> = flux_w
        .iter()
        .zip(&flux_h)
        .map(|(fw, fh)| if fh.abs() > 0.0 { fw / fh } else { 0.0 })
        .collect();

    let region = grid.region(source).expect("regions checked").clone();
    let values = (0..grid.len())
        .map(|i| {
            let c = grid.class(i);
            if c == target || shadow[i] {
                0.0
            } else if c == source {
                boundary[region.nearest_atom(&grid.point(i))]
            } else {
                w.at(i) / h.at(i)
            }
        })
        .collect();
    Ok(TppHittingTime {
        field: ScalarField::new(grid, values),
        w,
        boundary,
        shadow,
    })
}

/// Nodal gradient. Central differences at free nodes, shortened to the
/// boundary crossing next to fixed nodes and second-order one-sided at box
/// faces; zero at fixed nodes, where the field is constant.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid().clone();
    let values = (0..grid.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|idx| node_gradient(f, idx))
        .collect();
    VectorField::new(grid, values)
}

fn node_gradient(f: &ScalarField, idx: usize) -> Point {
    let grid = f.grid();
    let mut g = [0.0; 2];
    if f.is_fixed(idx) {
        return g;
    }
    let f0 = f.at(idx);
    for (k, gk) in g.iter_mut().enumerate().take(grid.dim()) {
        let h = grid.spacing(k);
        let arm = |dir: i32| -> Option<(f64, f64, bool)> {
            let nb = grid.neighbor(idx, k, dir)?;
            if f.is_fixed(nb) {
                Some((f.at(nb), grid.crossing_fraction(idx, k, dir) * h, true))
            } else {
                Some((f.at(nb), h, false))
            }
        };
        *gk = match (arm(-1), arm(1)) {
            (Some((fl, hl, _)), Some((fr, hr, _))) => {
                hl / (hr * (hl + hr)) * (fr - f0) + hr / (hl * (hl + hr)) * (f0 - fl)
            }
            (None, Some(side)) => one_sided(f, idx, k, 1, f0, side),
            (Some(side), None) => one_sided(f, idx, k, -1, f0, side),
            (None, None) => 0.0,
        };
    }
    g
}

fn one_sided(f: &ScalarField, idx: usize, k: usize, dir: i32, f0: f64, near: (f64, f64, bool)) -> f64 {
    let s = dir as f64;
    let (f1, h1, cut) = near;
    if !cut {
        let n1 = f.grid().neighbor(idx, k, dir).expect("near neighbour exists");
        if let Some(n2) = f.grid().neighbor(n1, k, dir) {
            if !f.is_fixed(n2) {
                let f2 = f.at(n2);
                return s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h1);
            }
        }
    }
    s * (f1 - f0) / h1
}

/// Trapezoid quadrature of `f` over the nodes selected by `mask`.
pub fn quadrature(f: &ScalarField, mask: impl Fn(usize) -> bool) -> f64 {
    let grid = f.grid();
    (0..grid.len())
        .filter(|&i| mask(i))
        .map(|i| grid.weight(i) * f.at(i))
        .sum()
}

/// Gradient of `f` at boundary point `p`, whose unit normal `n` points out of Θ.
///
/// The nodal gradient is interpolated at `p − d n` for `d = s, s + h, s + 2h`,
/// with `s` starting at 1.5 cells, and extrapolated quadratically back to `p`.
/// All interpolation stencils must avoid fixed nodes; `s` grows up to 6 cells
/// before giving up.
pub fn boundary_gradient(f: &ScalarField, g: &VectorField, p: &Point, n: &Point) -> Result<Point> {
    let grid = f.grid();
    let h = grid.max_spacing();
    let domain = grid.domain();
    let clean = |x: &Point| {
        if !domain.contains(x) {
            return false;
        }
        let (nodes, _, m) = grid.stencil(x);
        nodes[..m].iter().all(|&i| !f.is_fixed(i))
    };
    let mut s = 1.5 * h;
    while s <= 6.0 * h {
        let d = [s, s + h, s + 2.0 * h];
        let xs = d.map(|d| [p[0] - d * n[0], p[1] - d * n[1]]);
        if xs.iter().all(clean) {
            let mut out = [0.0; 2];
            for i in 0..3 {
                let l: f64 = (0..3).filter(|&j| j != i).map(|j| d[j] / (d[j] - d[i])).product();
                let gi = g.interpolate(&xs[i]);
                out[0] += l * gi[0];
                out[1] += l * gi[1];
            }
            return Ok(out);
        }
        s *= 1.25;
    }
    Err(Error::BoundarySampling(*p))
}

/// `n̂·a∇f` at every boundary atom of the region of class `class`, with `n̂`
/// pointing out of Θ.
pub fn boundary_normal_flux(
    model: &DiffusionModel,
    f: &ScalarField,
    g: &VectorField,
    class: NodeClass,
) -> Result<Vec<f64>> {
    let region = f
        .grid()
        .region(class)
        .ok_or_else(|| Error::Grid(format!("no region of class {class:?}")))?;
    region
        .atoms()
        .iter()
        .map(|atom| {
            let grad = boundary_gradient(f, g, &atom.point, &atom.normal)?;
            Ok(dot(&atom.normal, &mat_vec(&model.diffusion(&atom.point), &grad)))
        })
        .collect()
}

/// Depth, in cells, to which [`extend_into_regions`] continues a field.
pub const EXTENSION_CELLS: f64 = 3.0;

/// Continues `f` linearly into the fixed regions: at fixed nodes within
/// [`EXTENSION_CELLS`] of the boundary the value becomes `f(p) + ∇f(p)·(x − p)`,
/// `p` the nearest boundary point, and the gradient becomes `∇f(p)`. Bilinear
/// interpolation of the result is accurate up to the boundary from the Θ side.
pub fn extend_into_regions(f: &ScalarField, g: &VectorField) -> Result<(ScalarField, VectorField)> {
    let grid = f.grid().clone();
    let limit = EXTENSION_CELLS * grid.max_spacing();
    let updates: Vec<Option<(f64, Point)>> = (0..grid.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|idx| -> Result<Option<(f64, Point)>> {
            if !f.is_fixed(idx) {
                return Ok(None);
            }
            let Some(region) = grid.region(grid.class(idx)) else {
                return Ok(None);
            };
            let x = grid.point(idx);
            if -region.signed_distance(&x) > limit {
                return Ok(None);
            }
            let (p, n) = boundary_frame(region, &x);
            let gb = boundary_gradient(f, g, &p, &n)?;
            let v = f.at(idx) + gb[0] * (x[0] - p[0]) + gb[1] * (x[1] - p[1]);
            Ok(Some((v, gb)))
        })
        .collect::<Result<_>>()?;
    let mut fv = f.values().to_vec();
    let mut gv = g.values().to_vec();
    for (idx, u) in updates.into_iter().enumerate() {
        if let Some((v, gb)) = u {
            fv[idx] = v;
            gv[idx] = gb;
        }
    }
    Ok((
        ScalarField::new(grid.clone(), fv).with_fixed(f.fixed()),
        VectorField::new(grid, gv),
    ))
}

fn boundary_frame(region: &Region, x: &Point) -> (Point, Point) {
    let p = region.project(x);
    (p, region.normal_at(&p))
}

/// Monte Carlo committor: the fraction of `n_samples` Euler–Maruyama runs from
/// `x` that reach B̄ before Ā, with binomial standard error. Run `i` uses stream
/// `(seed, i)`.
pub fn committor_mc_estimate(
    model: &DiffusionModel,
    a: &Region,
    b: &Region,
    x: &Point,
    dt: f64,
    n_samples: usize,
    seed: u64,
    max_steps: usize,
) -> Result<(f64, f64)> {
    if b.contains_closure(x) {
        return Ok((1.0, 0.0));
    }
    if a.contains_closure(x) {
        return Ok((0.0, 0.0));
    }
    if n_samples == 0 {
        return Err(Error::InsufficientData("no samples requested".into()));
    }
    let stop = |y: &Point| a.contains_closure(y) || b.contains_closure(y);
    let hits: Vec<bool> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, i);
            match run_until(model, x, dt, &stop, max_steps, &mut rng)? {
                Some((_, y)) => Ok(b.contains_closure(&y)),
                None => Err(Error::StepLimit { max_steps }),
            }
        })
        .collect::<Result<_>>()?;
    let n = n_samples as f64;
    let p = hits.iter().filter(|&&h| h).count() as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, invariant_density, BoundingBox, ModelDescriptor};

    fn brownian_setup(nodes: usize) -> (DiffusionModel, Arc<Grid>) {
        let m = build_model(&ModelDescriptor::new("brownian1d")).unwrap();
        let a = Region::interval("A", -2.0, 0.0).unwrap();
        let b = Region::interval("B", 1.0, 3.0).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [nodes, 1], &a, &b).unwrap());
        (m, g)
    }

    #[test]
    fn laplacian_stencil_scaling() {
        let m = build_model(&ModelDescriptor::new("brownian1d")).unwrap();
        let g = Arc::new(Grid::new(m.domain(), [71, 1]).unwrap());
        let op = assemble(&m, &g, &|x| m.drift(x), Fixed::NONE).unwrap();
        let h = g.spacing(0);
        let c = 1.0 / (2.0 * h * h);
        let mid = 35;
        assert!((op.matrix().get(mid, mid - 1) - c).abs() < 1e-9 * c);
        assert!((op.matrix().get(mid, mid) + 2.0 * c).abs() < 1e-9 * c);
        assert!((op.matrix().get(mid, mid + 1) - c).abs() < 1e-9 * c);
    }

    #[test]
    fn constants_are_annihilated() {
        let m = build_model(&ModelDescriptor::new("doublewell2d").beta(2.0)).unwrap();
        let a = Region::disk("A", [-1.0, 0.0], 0.3, 64).unwrap();
        let b = Region::disk("B", [1.0, 0.0], 0.3, 64).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [161, 161], &a, &b).unwrap());
        let op = discretize_generator(&m, &g, Direction::Forward, None).unwrap();
        let lu = op.apply(&vec![1.0; g.len()]);
        for i in 0..g.len() {
            if g.is_theta(i) {
                assert!(lu[i].abs() < 1e-9, "{} at {:?}", lu[i], g.point(i));
            }
        }
        assert!(op.matrix().has_m_matrix_signs() || {
            // identity rows are positive; check Θ rows have the M-matrix sign pattern
            (0..g.len()).filter(|&i| g.is_theta(i)).all(|i| {
                op.matrix().row(i).all(|(j, v)| if i == j { v < 0.0 } else { v >= 0.0 })
            })
        });
    }

    #[test]
    fn brownian_committor_is_linear() {
        let (m, g) = brownian_setup(512);
        let q = solve_committor(&m, &g).unwrap();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            if (0.0..=1.0).contains(&x) {
                assert!((q.at(i) - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normal_flux_sign_convention() {
        let (m, g) = brownian_setup(512);
        let q = solve_committor(&m, &g).unwrap();
        let gq = gradient(&q);
        let fa = boundary_normal_flux(&m, &q, &gq, NodeClass::A).unwrap();
        // atoms: lo endpoint (shadow side) then hi endpoint (facing B)
        assert!(fa[0].abs() < 1e-8);
        assert!((fa[1] + 0.5).abs() < 1e-3);
        let fb = boundary_normal_flux(&m, &q, &gq, NodeClass::B).unwrap();
        assert!((fb[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn bessel_mean_hitting_time() {
        let (m, g) = brownian_setup(1024);
        let q = solve_committor(&m, &g).unwrap();
        let v = solve_tpp_mean_hitting(&m, &q, NodeClass::B).unwrap();
        let a = g.region(NodeClass::A).unwrap();
        let at_zero = v.boundary[a.nearest_atom(&[0.0, 0.0])];
        assert!((at_zero - 1.0 / 3.0).abs() < 1e-3, "{at_zero}");
        for i in 0..g.len() {
            let x = g.point(i)[0];
            if g.is_theta(i) && (0.0..1.0).contains(&x) {
                assert!((v.field.at(i) - (1.0 - x * x) / 3.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn reversible_backward_equals_forward() {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
        let a = Region::interval("A", -1.1, -0.9).unwrap();
        let b = Region::interval("B", 0.9, 1.1).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [401, 1], &a, &b).unwrap());
        let rho = invariant_density(&m, &g).unwrap();
        let fwd = discretize_generator(&m, &g, Direction::Forward, None).unwrap();
        let bwd = discretize_generator(&m, &g, Direction::Backward, Some(&rho)).unwrap();
        for t in 0..3 {
            let u: Vec<f64> = (0..g.len()).map(|i| (0.01 * (i * (t + 1)) as f64).sin()).collect();
            let (lf, lb) = (fwd.apply(&u), bwd.apply(&u));
            let scale = lf.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            for i in 0..g.len() {
                assert!((lf[i] - lb[i]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn gradient_exact_for_linears() {
        let g = Arc::new(Grid::new(&BoundingBox::new_2d([-1.0, -2.0], [2.0, 1.0]), [13, 17]).unwrap());
        let f = ScalarField::from_fn(g.clone(), |p| 3.0 * p[0] - 0.5 * p[1] + 1.0);
        let gf = gradient(&f);
        for i in 0..g.len() {
            let v = gf.at(i);
            assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_hitting_time_vanishes_on_target() {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
        let a = Region::interval("A", -1.1, -0.9).unwrap();
        let b = Region::interval("B", 0.9, 1.1).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [401, 1], &a, &b).unwrap());
        let u = solve_mean_hitting_time(&m, &g, NodeClass::B).unwrap();
        for i in 0..g.len() {
            if g.class(i) == NodeClass::B {
                assert_eq!(u.at(i), 0.0);
            } else {
                assert!(u.at(i) >= 0.0);
            }
        }
    }

    #[test]
    fn stationarity_residual_is_second_order() {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(1.0)).unwrap();
        let mut errs = Vec::new();
        for n in [201, 401, 801] {
            let g = Arc::new(Grid::new(m.domain(), [n, 1]).unwrap());
            let rho = invariant_density(&m, &g).unwrap();
            let op = assemble(&m, &g, &|x| m.drift(x), Fixed::NONE).unwrap();
            // discrete adjoint in the trapezoid inner product: W⁻¹ Lᵀ W ρ
            let wr: Vec<f64> = (0..g.len()).map(|i| g.weight(i) * rho.field().at(i)).collect();
            let r = op.matrix().apply_transpose(&wr);
            let x_max = (1..g.len() - 1)
                .filter(|&i| g.point(i)[0].abs() < 2.0)
                .map(|i| (r[i] / g.weight(i)).abs())
                .fold(0.0, f64::max);
            errs.push(x_max);
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order > 1.8, "{errs:?}");
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
        let a = Region::interval("A", -1.1, -0.9).unwrap();
        let b = Region::interval("B", 0.9, 1.1).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [101, 1], &a, &b).unwrap());
        assert!(matches!(solve_committor(&m, &g), Err(Error::Grid(_))));
    }
}
