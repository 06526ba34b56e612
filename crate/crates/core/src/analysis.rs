//! Committor-based formulas: boundary measures, rate and time quadratures,
//! the reactive density and the reactive current with its flux and flow map.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, NodeClass, ScalarField, VectorField};
use crate::measure::BoundaryMeasure;
use crate::model::{DiffusionModel, InvariantDensity, Region};
use crate::pde::{
    boundary_normal_flux, extend_into_regions, gradient, quadrature, solve_backward_committor,
    solve_committor, solve_mean_hitting_time, solve_tpp_mean_hitting, TppHittingTime,
};
use crate::rng::splitmix64;
use crate::{dot, mat_vec, norm, Point};

/// Reactive exit and entrance distributions with their shared normalizer.
#[derive(Clone, Debug)]
pub struct BoundaryMeasures {
    /// η_A^-: `−ρ n̂·a∇q dσ_A / ν`
    pub eta_a_minus: BoundaryMeasure,
    /// η_A^+: `ρ n̂·a∇q̃ dσ_A / ν`
    pub eta_a_plus: BoundaryMeasure,
    /// η_B^-: `ρ n̂·a∇q dσ_B / ν`
    pub eta_b_minus: BoundaryMeasure,
    /// η_B^+: `−ρ n̂·a∇q̃ dσ_B / ν`
    pub eta_b_plus: BoundaryMeasure,
    /// ν, the raw mass of η_A.
    pub nu: f64,
    /// Raw mass of η_B = `ρ n̂·a∇q dσ_B`.
    pub raw_mass_b: f64,
    /// Raw masses of the two entrance measures (A, B).
    pub raw_mass_entrance: (f64, f64),
}

/// Weights below `−HOPF_TOLERANCE · max weight` violate the Hopf sign condition.
pub const HOPF_TOLERANCE: f64 = 1e-10;

fn checked_measure(region: &Region, raw: Vec<f64>) -> Result<BoundaryMeasure> {
    let max = raw.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    for (w, atom) in raw.iter().zip(region.atoms()) {
        if *w < -HOPF_TOLERANCE * max {
            return Err(Error::HopfSign {
                weight: *w,
                location: atom.point,
            });
        }
    }
    BoundaryMeasure::on_atoms(region, raw)
}

/// η_A^±, η_B^± from the normal fluxes of `q` and `q̃` at the boundary atoms.
pub fn exit_entrance_measures(
    model: &DiffusionModel,
    rho: &InvariantDensity,
    q: &ScalarField,
    q_tilde: &ScalarField,
) -> Result<BoundaryMeasures> {
    let grid = q.grid();
    let (a, b) = grid
        .regions()
        .ok_or_else(|| Error::Grid("grid has no regions".into()))?;
    let gq = gradient(q);
    let gt = gradient(q_tilde);
    let raw = |region: &Region, flux: Vec<f64>, sign: f64| -> Vec<f64> {
        region
            .atoms()
            .iter()
            .zip(flux)
            .map(|(atom, f)| sign * rho.value_at(&atom.point) * f * atom.weight)
            .collect()
    };
    let a_minus = raw(a, boundary_normal_flux(model, q, &gq, NodeClass::A)?, -1.0);
    let b_minus = raw(b, boundary_normal_flux(model, q, &gq, NodeClass::B)?, 1.0);
    let a_plus = raw(a, boundary_normal_flux(model, q_tilde, &gt, NodeClass::A)?, 1.0);
    let b_plus = raw(b, boundary_normal_flux(model, q_tilde, &gt, NodeClass::B)?, -1.0);

    let a_minus = checked_measure(a, a_minus)?;
    let b_minus = checked_measure(b, b_minus)?;
    let a_plus = checked_measure(a, a_plus)?;
    let b_plus = checked_measure(b, b_plus)?;
    let nu = a_minus.total_mass();
    if !(nu > 0.0) {
        return Err(Error::NotNormalized(nu));
    }
    Ok(BoundaryMeasures {
        raw_mass_b: b_minus.total_mass(),
        raw_mass_entrance: (a_plus.total_mass(), b_plus.total_mass()),
        eta_a_minus: a_minus.scaled_by_mass(nu)?,
        eta_a_plus: a_plus.scaled_by_mass(nu)?,
        eta_b_minus: b_minus.scaled_by_mass(nu)?,
        eta_b_plus: b_plus.scaled_by_mass(nu)?,
        nu,
    })
}

/// `ν_R = ∫_Θ ρ ∇q·a∇q` as the discrete Dirichlet energy of `q`: each grid edge
/// contributes `a_kk ρ ((Δq)/ℓ)² ℓ` at its midpoint, with edges cut at the
/// region boundary (where `q` takes its boundary value) shortened to the
/// crossing. Transverse directions use trapezoid weights.
pub fn rate_quadrature(model: &DiffusionModel, rho: &InvariantDensity, q: &ScalarField) -> f64 {
    let grid = q.grid();
    let dim = grid.dim();
    let edge = |idx: usize| -> f64 {
        let mut total = 0.0;
        for k in 0..dim {
            let Some(nb) = grid.neighbor(idx, k, 1) else {
                continue;
            };
            let (ti, tn) = (grid.is_theta(idx), grid.is_theta(nb));
            if !ti && !tn {
                continue;
            }
            let h = grid.spacing(k);
            let (start, len) = if ti && tn {
                (grid.point(idx), h)
            } else if ti {
                (grid.point(idx), grid.crossing_fraction(idx, k, 1) * h)
            } else {
                let t = grid.crossing_fraction(nb, k, -1) * h;
                let mut s = grid.point(nb);
                s[k] -= t;
                (s, t)
            };
            let mut mid = start;
            mid[k] += 0.5 * len;
            let slope = (q.at(nb) - q.at(idx)) / len;
            let tw = if dim == 2 {
                let ij = grid.ij(idx);
                grid.axis(1 - k).weight(ij[1 - k])
            } else {
                1.0
            };
            let a = model.diffusion(&mid)[k][k];
            total += a * rho.value_at(&mid) * slope * slope * len * tw;
        }
        total
    };
    chunked_sum(grid.len(), edge)
}

/// Deterministic parallel sum of `f(0..n)`: fixed chunks, ordered reduction.
fn chunked_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
        .collect();
    partial.iter().sum()
}

/// Reaction and crossover times from whole-box quadratures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeQuadratures {
    /// `ν_R⁻¹ ∫ρ q̃`
    pub t_ab: f64,
    /// `ν_R⁻¹ ∫ρ(1 − q̃)`
    pub t_ba: f64,
    /// `ν_R⁻¹ ∫ρ q q̃`
    pub c_ab: f64,
    /// `ν_R⁻¹ ∫ρ(1 − q)(1 − q̃)`
    pub c_ba: f64,
}

/// Trapezoid quadratures over the whole box; `q` and `q̃` hold their boundary
/// values on the region nodes.
pub fn time_quadratures(
    rho: &InvariantDensity,
    q: &ScalarField,
    q_tilde: &ScalarField,
    nu_r: f64,
) -> TimeQuadratures {
    let grid = q.grid();
    let r = rho.field();
    let integral = |f: &(dyn Fn(usize) -> f64 + Sync)| -> f64 {
        chunked_sum(grid.len(), |i| grid.weight(i) * r.at(i) * f(i))
    };
    TimeQuadratures {
        t_ab: integral(&|i| q_tilde.at(i)) / nu_r,
        t_ba: integral(&|i| 1.0 - q_tilde.at(i)) / nu_r,
        c_ab: integral(&|i| q.at(i) * q_tilde.at(i)) / nu_r,
        c_ba: integral(&|i| (1.0 - q.at(i)) * (1.0 - q_tilde.at(i))) / nu_r,
    }
}

/// `ρ_R = ρ q q̃` on Θ nodes, zero on Ā and B̄.
pub fn reactive_density_field(rho: &InvariantDensity, q: &ScalarField, q_tilde: &ScalarField) -> ScalarField {
    let grid = q.grid().clone();
    let values = (0..grid.len())
        .map(|i| {
            if grid.is_theta(i) {
                rho.field().at(i) * q.at(i) * q_tilde.at(i)
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::new(grid, values)
}

/// Fields continued into the regions for evaluation up to the boundary.
#[derive(Clone, Debug)]
pub struct ExtendedFields {
    pub q: ScalarField,
    pub grad_q: VectorField,
    pub q_tilde: ScalarField,
    pub grad_q_tilde: VectorField,
}

impl ExtendedFields {
    pub fn new(q: &ScalarField, q_tilde: &ScalarField) -> Result<Self> {
        let (q, grad_q) = extend_into_regions(q, &gradient(q))?;
        let (q_tilde, grad_q_tilde) = extend_into_regions(q_tilde, &gradient(q_tilde))?;
        Ok(Self {
            q,
            grad_q,
            q_tilde,
            grad_q_tilde,
        })
    }
}

/// `J_R = (bρ − div(aρ)) q q̃ + ρ a (q̃∇q − q∇q̃)` with
/// `div(aρ) = ρ(div a + a∇log ρ)`.
pub fn current_at(model: &DiffusionModel, rho: &InvariantDensity, x: &Point, q: f64, gq: &Point, qt: f64, gqt: &Point) -> Point {
    let r = rho.value_at(x);
    let a = model.diffusion(x);
    let b = model.drift(x);
    let da = model.div_diffusion(x);
    let agl = mat_vec(&a, &rho.grad_log_at(x));
    let mix = [qt * gq[0] - q * gqt[0], qt * gq[1] - q * gqt[1]];
    let am = mat_vec(&a, &mix);
    let mut j = [0.0; 2];
    for k in 0..model.dim() {
        j[k] = r * (b[k] - da[k] - agl[k]) * q * qt + r * am[k];
    }
    j
}

/// Nodal reactive current from the extended fields (zero deep inside the regions).
pub fn current_field(model: &DiffusionModel, rho: &InvariantDensity, fields: &ExtendedFields) -> VectorField {
    let grid = fields.q.grid().clone();
    let values = (0..grid.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let x = grid.point(i);
            current_at(
                model,
                rho,
                &x,
                fields.q.at(i),
                &fields.grad_q.at(i),
                fields.q_tilde.at(i),
                &fields.grad_q_tilde.at(i),
            )
        })
        .collect();
    VectorField::new(grid, values)
}

/// `ρ a ∇q`, the current of a reversible model.
pub fn reversible_current(model: &DiffusionModel, rho: &InvariantDensity, fields: &ExtendedFields) -> VectorField {
    let grid = fields.q.grid().clone();
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let v = mat_vec(&model.diffusion(&x), &fields.grad_q.at(i));
            let r = rho.value_at(&x);
            [r * v[0], r * v[1]]
        })
        .collect();
    VectorField::new(grid, values)
}

/// Largest node-wise `|J − K|` over Θ nodes, relative to `max |J|` there.
pub fn relative_max_difference(j: &VectorField, k: &VectorField) -> f64 {
    let grid = j.grid();
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        if grid.is_theta(i) {
            let (u, v) = (j.at(i), k.at(i));
            diff = diff.max(norm(&[u[0] - v[0], u[1] - v[1]]));
            scale = scale.max(norm(&u));
        }
    }
    diff / scale
}

/// Nodes at least one cell from ∂Θ: Θ nodes whose axis neighbours are all Θ
/// nodes inside the box.
pub fn interior_mask(grid: &Grid) -> Vec<bool> {
    (0..grid.len())
        .map(|i| {
            grid.class(i) == NodeClass::Interior
                && (0..grid.dim()).all(|k| {
                    [-1, 1].iter().all(|&d| {
                        grid.neighbor(i, k, d)
                            .is_some_and(|n| grid.class(n) == NodeClass::Interior)
                    })
                })
        })
        .collect()
}

/// `max |div_h J| · h / max|J|` over nodes at least one cell from ∂Θ, with
/// central differences for the divergence.
pub fn divergence_check(j: &VectorField) -> f64 {
    let grid = j.grid();
    let mask = interior_mask(grid);
    let h = grid.max_spacing();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        if !mask[i] {
            continue;
        }
        scale = scale.max(norm(&j.at(i)));
        let mut div = 0.0;
        for k in 0..grid.dim() {
            let (l, r) = (grid.neighbor(i, k, -1).unwrap(), grid.neighbor(i, k, 1).unwrap());
            div += (j.at(r)[k] - j.at(l)[k]) / (2.0 * grid.spacing(k));
        }
        worst = worst.max(div.abs());
    }
    worst * h / scale
}

/// Adds a deterministic ±`fraction`·max|J| perturbation to every component at
/// Θ nodes; used to show that the divergence check is not vacuous.
pub fn perturb_current(j: &VectorField, fraction: f64, seed: u64) -> VectorField {
    let grid = j.grid().clone();
    let amp = fraction * j.max_norm();
    let values = (0..grid.len())
        .map(|i| {
            let mut v = j.at(i);
            if grid.is_theta(i) {
                for (k, vk) in v.iter_mut().enumerate().take(grid.dim()) {
                    let bit = splitmix64(seed ^ ((i as u64) << 1 | k as u64)) & 1;
                    *vk += if bit == 0 { amp } else { -amp };
                }
            }
            v
        })
        .collect();
    VectorField::new(grid, values)
}

/// A closed curve (2D) or a point (1D) separating A from B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    /// Circle discretized by `n` midpoint nodes; normal points outward.
    Circle { center: Point, radius: f64, n: usize },
    /// The point `x` with unit normal `normal` (±1) on the first axis.
    Point { x: f64, normal: f64 },
}

/// Flux `∫_S n̂·J` with `J` interpolated bilinearly. The surface must stay at
/// least one cell away from Ā ∪ B̄.
pub fn surface_flux(j: &VectorField, surface: &Surface) -> Result<f64> {
    let grid = j.grid();
    let (a, b) = grid
        .regions()
        .ok_or_else(|| Error::Grid("grid has no regions".into()))?;
    let h = grid.max_spacing();
    let check = |p: &Point| -> Result<()> {
        if a.signed_distance(p) < h || b.signed_distance(p) < h || !grid.domain().contains(p) {
            Err(Error::SurfaceIntersects(*p))
        } else {
            Ok(())
        }
    };
    match *surface {
        Surface::Point { x, normal } => {
            let p = [x, 0.0];
            check(&p)?;
            Ok(normal * j.interpolate(&p)[0])
        }
        Surface::Circle { center, radius, n } => {
            let ds = 2.0 * PI * radius / n as f64;
            let mut flux = 0.0;
            for i in 0..n {
                let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                let (s, c) = t.sin_cos();
                let p = [center[0] + radius * c, center[1] + radius * s];
                check(&p)?;
                flux += dot(&[c, s], &j.interpolate(&p)) * ds;
            }
            Ok(flux)
        }
    }
}

/// Endpoints of the `J_R` flow from ∂A and the transported measure.
#[derive(Clone, Debug)]
pub struct StreamlineMap {
    /// Indices of the ∂A atoms used as starting points.
    pub start_atoms: Vec<usize>,
    /// Projection onto ∂B of each streamline's first point in B̄.
    pub end_points: Vec<Point>,
    /// Pushforward of η_A^- (weights unchanged, not renormalized).
    pub pushforward: BoundaryMeasure,
    /// η_A^- mass on atoms below the start threshold.
    pub omitted_mass: f64,
    /// Atoms whose streamline ran into a stagnation point of `J_R` before reaching B̄.
    pub stalled_atoms: Vec<usize>,
    /// η_A^- mass carried by `stalled_atoms`; not part of the pushforward.
    pub stalled_mass: f64,
}

/// Atoms with weight at most this fraction of the largest are not started.
pub const START_THRESHOLD: f64 = 1e-6;

/// Follows `dZ/dt = J(Z)/|J(Z)|` by RK4 with step h/2 from each charged atom of
/// η_A^- until Z enters B̄.
pub fn streamline_map(j: &VectorField, eta_a_minus: &BoundaryMeasure) -> Result<StreamlineMap> {
    let grid = j.grid();
    let (_, b) = grid
        .regions()
        .ok_or_else(|| Error::Grid("grid has no regions".into()))?;
    let h = grid.max_spacing();
    let step = 0.5 * h;
    let domain = grid.domain();
    let cap = (40.0 * domain.diameter() / step) as usize + 1000;
    let tiny = 1e-12 * j.max_norm();
    let unit = |p: &Point| -> Option<Point> {
        let v = j.interpolate(p);
        let n = norm(&v);
        (n > tiny).then(|| [v[0] / n, v[1] / n])
    };
    let wmax = eta_a_minus.weights().iter().fold(0.0f64, |m, w| m.max(*w));
    let starts: Vec<usize> = (0..eta_a_minus.len())
        .filter(|&i| eta_a_minus.weights()[i] > START_THRESHOLD * wmax)
        .collect();
    let omitted_mass = (0..eta_a_minus.len())
        .filter(|i| !starts.contains(i))
        .map(|i| eta_a_minus.weights()[i])
        .fold(0.0, |a, w| a + w);
    let ends: Vec<Option<Point>> = starts
        .par_iter()
        .map(|&i| {
            let mut z = eta_a_minus.points()[i];
            for _ in 0..cap {
                if b.contains_closure(&z) {
                    return Some(b.project(&z));
                }
                let k1 = unit(&z)?;
                let z2 = [z[0] + 0.5 * step * k1[0], z[1] + 0.5 * step * k1[1]];
                let k2 = unit(&z2)?;
                let z3 = [z[0] + 0.5 * step * k2[0], z[1] + 0.5 * step * k2[1]];
                let k3 = unit(&z3)?;
                let z4 = [z[0] + step * k3[0], z[1] + step * k3[1]];
                let k4 = unit(&z4)?;
                for d in 0..2 {
                    z[d] += step / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                }
            }
            None
        })
        .collect();
    let w = eta_a_minus.weights();
    let mut start_atoms = Vec::with_capacity(starts.len());
    let mut end_points = Vec::with_capacity(starts.len());
    let mut stalled_atoms = Vec::new();
    for (&i, end) in starts.iter().zip(ends) {
        match end {
            Some(p) => {
                start_atoms.push(i);
                end_points.push(p);
            }
            None => stalled_atoms.push(i),
        }
    }
    if start_atoms.is_empty() {
        return Err(Error::Stagnation {
            location: eta_a_minus.points()[starts.first().copied().unwrap_or(0)],
            steps: cap,
        });
    }
    let stalled_mass = stalled_atoms.iter().fold(0.0, |a, &i| a + w[i]);
    let weights = start_atoms.iter().map(|&i| w[i]).collect();
    let pushforward = BoundaryMeasure::new(b.clone(), end_points.clone(), weights)?;
    Ok(StreamlineMap {
        start_atoms,
        end_points,
        pushforward,
        omitted_mass,
        stalled_atoms,
        stalled_mass,
    })
}

/// Cross-checks of the time quadratures through hitting-time solves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingTimeChecks {
    /// `∫η_A^+ u_B`
    pub t_ab: f64,
    /// `∫η_B^+ u_A`
    pub t_ba: f64,
    /// `∫η_A^- v_B`
    pub c_ab: f64,
    /// `∫η_B^- v_A`
    pub c_ba: f64,
}

/// Everything computable from `ρ`, `q` and `q̃` on one grid.
#[derive(Clone, Debug)]
pub struct TptAnalytics {
    pub q: ScalarField,
    pub q_tilde: ScalarField,
    pub measures: BoundaryMeasures,
    /// `∫ρ∇q·a∇q`
    pub nu_r: f64,
    pub times: TimeQuadratures,
    pub hitting: HittingTimeChecks,
    pub u_b: ScalarField,
    pub u_a: ScalarField,
    pub v_b: TppHittingTime,
    pub v_a: TppHittingTime,
    pub rho_r: ScalarField,
    pub extended: ExtendedFields,
    pub current: VectorField,
}

impl TptAnalytics {
    pub fn compute(model: &DiffusionModel, rho: &InvariantDensity, grid: &Arc<Grid>) -> Result<Self> {
        let ((q, q_tilde), (u_b, u_a)) = rayon::join(
            || {
                rayon::join(
                    || solve_committor(model, grid),
                    || solve_backward_committor(model, grid, rho),
                )
            },
            || {
                rayon::join(
                    || solve_mean_hitting_time(model, grid, NodeClass::B),
                    || solve_mean_hitting_time(model, grid, NodeClass::A),
                )
            },
        );
        let (q, q_tilde, u_b, u_a) = (q?, q_tilde?, u_b?, u_a?);
        Self::from_committors(model, rho, q, q_tilde, u_b, u_a)
    }

    pub fn from_committors(
        model: &DiffusionModel,
        rho: &InvariantDensity,
        q: ScalarField,
        q_tilde: ScalarField,
        u_b: ScalarField,
        u_a: ScalarField,
    ) -> Result<Self> {
        let measures = exit_entrance_measures(model, rho, &q, &q_tilde)?;
        let nu_r = rate_quadrature(model, rho, &q);
        let times = time_quadratures(rho, &q, &q_tilde, nu_r);
        let (v_b, v_a) = rayon::join(
            || solve_tpp_mean_hitting(model, &q, NodeClass::B),
            || solve_tpp_mean_hitting(model, &q, NodeClass::A),
        );
        let (v_b, v_a) = (v_b?, v_a?);
        let on = |m: &BoundaryMeasure, values: &dyn Fn(usize, &Point) -> f64| -> f64 {
            m.points()
                .iter()
                .enumerate()
                .map(|(i, p)| m.weights()[i] * values(i, p))
                .sum()
        };
        let hitting = HittingTimeChecks {
            t_ab: on(&measures.eta_a_plus, &|_, p| u_b.interpolate(p)),
            t_ba: on(&measures.eta_b_plus, &|_, p| u_a.interpolate(p)),
            c_ab: on(&measures.eta_a_minus, &|i, _| v_b.boundary[i]),
            c_ba: on(&measures.eta_b_minus, &|i, _| v_a.boundary[i]),
        };
        let rho_r = reactive_density_field(rho, &q, &q_tilde);
        let extended = ExtendedFields::new(&q, &q_tilde)?;
        let current = current_field(model, rho, &extended);
        Ok(Self {
            q,
            q_tilde,
            measures,
            nu_r,
            times,
            hitting,
            u_b,
            u_a,
            v_b,
            v_a,
            rho_r,
            extended,
            current,
        })
    }

    /// `∫ρ_R` over the box.
    pub fn reactive_mass(&self) -> f64 {
        quadrature(&self.rho_r, |_| true)
    }
}

/// `max |q̃ − (1 − q)|` over all nodes.
pub fn reversibility_gap(q: &ScalarField, q_tilde: &ScalarField) -> f64 {
    q.values()
        .iter()
        .zip(q_tilde.values())
        .map(|(a, b)| (b - (1.0 - a)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, invariant_density, ModelDescriptor};

    fn dw1d(nodes: usize) -> (DiffusionModel, InvariantDensity, Arc<Grid>) {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
        let a = Region::interval("A", -1.1, -0.9).unwrap();
        let b = Region::interval("B", 0.9, 1.1).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [nodes, 1], &a, &b).unwrap());
        let rho = invariant_density(&m, &g).unwrap();
        (m, rho, g)
    }

    #[test]
    fn one_dimensional_identities() {
        let (m, rho, g) = dw1d(1001);
        let t = TptAnalytics::compute(&m, &rho, &g).unwrap();
        let nu = t.measures.nu;
        assert!((t.nu_r - nu).abs() / nu < 1e-2, "{} vs {nu}", t.nu_r);
        assert!((t.measures.raw_mass_b - nu).abs() / nu < 1e-2);
        // η_A^- sits on the B-facing endpoint
        let w = t.measures.eta_a_minus.weights();
        assert!(w[0] < 1e-8 && (w[1] - 1.0).abs() < 1e-8);
        assert!((t.times.t_ab + t.times.t_ba - 1.0 / t.nu_r).abs() < 1e-10 / t.nu_r);
        assert!((t.reactive_mass() - t.nu_r * t.times.c_ab).abs() < 1e-10);
        assert!((t.hitting.t_ab - t.times.t_ab).abs() / t.times.t_ab < 0.02);
        assert!((t.hitting.c_ab - t.times.c_ab).abs() / t.times.c_ab < 0.02);
        assert!(t.times.c_ab < t.times.t_ab && t.times.c_ba < t.times.t_ba);
        // the current is constant across the channel
        let mut vals = Vec::new();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            if g.is_theta(i) && x > -0.85 && x < 0.85 {
                vals.push(t.current.at(i)[0]);
            }
        }
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!((hi - lo) / hi < 1e-3);
        let div = divergence_check(&t.current);
        assert!(div < 1e-3, "{div}");
        let f = surface_flux(&t.current, &Surface::Point { x: 0.0, normal: 1.0 }).unwrap();
        assert!((f - t.nu_r).abs() / t.nu_r < 1e-2);
    }

    #[test]
    fn streamline_in_one_dimension() {
        let (m, rho, g) = dw1d(1001);
        let t = TptAnalytics::compute(&m, &rho, &g).unwrap();
        let s = streamline_map(&t.current, &t.measures.eta_a_minus).unwrap();
        assert_eq!(s.start_atoms, vec![1]);
        assert!((s.end_points[0][0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn perturbation_is_detected() {
        let (m, rho, g) = dw1d(1001);
        let t = TptAnalytics::compute(&m, &rho, &g).unwrap();
        let base = divergence_check(&t.current);
        let bad = divergence_check(&perturb_current(&t.current, 0.01, 7));
        assert!(bad > 10.0 * base.max(1e-6));
    }

    #[test]
    fn surface_inside_region_rejected() {
        let (m, rho, g) = dw1d(1001);
        let t = TptAnalytics::compute(&m, &rho, &g).unwrap();
        assert!(matches!(
            surface_flux(&t.current, &Surface::Point { x: -1.0, normal: 1.0 }),
            Err(Error::SurfaceIntersects(_))
        ));
    }
}
