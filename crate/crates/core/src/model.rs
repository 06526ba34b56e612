//! Diffusion models, reactant/product regions and the invariant density.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::rng::StreamRng;
use crate::{dist, Mat, Point};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl BoundingBox {
    pub fn new_1d(lo: f64, hi: f64) -> Self {
        Self {
            dim: 1,
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn new_2d(lo: Point, hi: Point) -> Self {
        Self { dim: 2, lo, hi }
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    pub fn diameter(&self) -> f64 {
        dist(&self.lo, &self.hi)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|k| self.hi[k] - self.lo[k]).product()
    }

    /// The box scaled by `factor` about its centre.
    pub fn enlarged(&self, factor: f64) -> Self {
        let mut out = *self;
        for k in 0..self.dim {
            let c = 0.5 * (self.lo[k] + self.hi[k]);
            let r = 0.5 * (self.hi[k] - self.lo[k]) * factor;
            out.lo[k] = c - r;
            out.hi[k] = c + r;
        }
        out
    }

    /// A uniformly distributed point of the box.
    pub fn sample(&self, rng: &mut StreamRng) -> Point {
        let mut p = [0.0; 2];
        for k in 0..self.dim {
            p[k] = self.lo[k] + (self.hi[k] - self.lo[k]) * rng.uniform();
        }
        p
    }
}

/// What a trajectory does at the faces of the bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxPolicy {
    /// Leaving the box is an error.
    Confine,
    /// Mirror reflection at the faces; the box is the state space.
    Reflect,
}

type DriftFn = dyn Fn(&Point) -> Point + Send + Sync;
type SigmaFn = dyn Fn(&Point) -> Mat + Send + Sync;
type PotentialFn = dyn Fn(&Point) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&Point) -> Point + Send + Sync;

/// Coefficients of a user-supplied model.
pub struct CustomCoefficients {
    pub drift: Box<DriftFn>,
    pub sigma: Box<SigmaFn>,
    /// Potential V and its gradient, when the invariant density is `e^{-βV}/Z`.
    pub potential: Option<(Box<PotentialFn>, Box<GradientFn>)>,
    pub reversible: bool,
    pub constant_diffusion: bool,
}

#[derive(Clone)]
pub enum Family {
    /// `b = 0`, `σ = β^{-1/2}`; reflecting box.
    Brownian1d,
    /// `V = (x² − 1)²`, `b = −V'`, `σ = β^{-1/2}`.
    DoubleWell1d,
    /// `V = (x² − 1)² + 2y²`, `b = −∇V`, `σ = β^{-1/2} I`.
    DoubleWell2d,
    /// Same `V` and `σ` as [`Family::DoubleWell2d`], `b = −∇V + c J∇V` with `J` the
    /// quarter-turn rotation. The perturbation is tangent to level sets of `V`
    /// and divergence free, so `e^{−βV}` stays invariant but the dynamics are
    /// not reversible.
    Shear2d { c: f64 },
    Custom(Arc<CustomCoefficients>),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Brownian1d => write!(f, "Brownian1d"),
            Family::DoubleWell1d => write!(f, "DoubleWell1d"),
            Family::DoubleWell2d => write!(f, "DoubleWell2d"),
            Family::Shear2d { c } => write!(f, "Shear2d {{ c: {c} }}"),
            Family::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Parameters naming one of the built-in model families.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDescriptor {
    pub family: String,
    pub beta: Option<f64>,
    pub shear: Option<f64>,
    pub domain: Option<BoundingBox>,
}

impl ModelDescriptor {
    pub fn new(family: &str) -> Self {
        Self {
            family: family.to_string(),
            beta: None,
            shear: None,
            domain: None,
        }
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn shear(mut self, c: f64) -> Self {
        self.shear = Some(c);
        self
    }

    pub fn domain(mut self, domain: BoundingBox) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Canonical text form; hashed into dump headers and reports.
    pub fn canonical(&self) -> String {
        let mut s = format!("family={}", self.family);
        if let Some(b) = self.beta {
            s.push_str(&format!(";beta={b:.17e}"));
        }
        if let Some(c) = self.shear {
            s.push_str(&format!(";shear={c:.17e}"));
        }
        if let Some(d) = &self.domain {
            for k in 0..d.dim {
                s.push_str(&format!(";box{k}=[{:.17e},{:.17e}]", d.lo[k], d.hi[k]));
            }
        }
        s
    }
}

/// The diffusion `dX = b(X) dt + √2 σ(X) dW` on a bounding box.
///
/// Values are immutable after construction; custom coefficients are shared
/// behind an `Arc`, so clones are cheap and safe to read from many threads.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    dim: usize,
    family: Family,
    beta: f64,
    domain: BoundingBox,
    policy: BoxPolicy,
    ellipticity: (f64, f64),
    descriptor: String,
}

const PROBE_SEED: u64 = 0x005E_ED0F_7E57;
const PROBES: usize = 100;

/// Builds and validates a built-in model.
///
/// Families: `brownian1d`, `doublewell1d`, `doublewell2d`, `shear2d`.
pub fn build_model(desc: &ModelDescriptor) -> Result<DiffusionModel> {
    if let Some(beta) = desc.beta {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Model(format!("beta must be positive, got {beta}")));
        }
    }
    let need_beta = || {
        desc.beta
            .ok_or_else(|| Error::Model(format!("family {} requires beta", desc.family)))
    };
    let (dim, family, beta, default_box, policy) = match desc.family.as_str() {
        "brownian1d" => (
            1,
            Family::Brownian1d,
            desc.beta.unwrap_or(2.0),
            BoundingBox::new_1d(-3.0, 4.0),
            BoxPolicy::Reflect,
        ),
        "doublewell1d" => (
            1,
            Family::DoubleWell1d,
            need_beta()?,
            BoundingBox::new_1d(-2.5, 2.5),
            BoxPolicy::Confine,
        ),
        "doublewell2d" => (
            2,
            Family::DoubleWell2d,
            need_beta()?,
            BoundingBox::new_2d([-2.5, -2.5], [2.5, 2.5]),
            BoxPolicy::Confine,
        ),
        "shear2d" => (
            2,
            Family::Shear2d {
                c: desc.shear.unwrap_or(0.5),
            },
            need_beta()?,
            BoundingBox::new_2d([-2.5, -2.5], [2.5, 2.5]),
            BoxPolicy::Confine,
        ),
        other => return Err(Error::Model(format!("unknown model family '{other}'"))),
    };
    if desc.shear.is_some() && !matches!(family, Family::Shear2d { .. }) {
        return Err(Error::Model("shear is only meaningful for shear2d".into()));
    }
    let domain = desc.domain.unwrap_or(default_box);
    if domain.dim != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: domain.dim,
        });
    }
    let model = DiffusionModel {
        dim,
        family,
        beta,
        domain,
        policy,
        ellipticity: (1.0 / beta, 1.0 / beta),
        descriptor: desc.canonical(),
    };
    model.validate()?;
    Ok(model)
}

impl DiffusionModel {
    /// A model with caller-supplied coefficients. `beta` is only used when
    /// `coefficients.potential` is present.
    pub fn custom(
        dim: usize,
        domain: BoundingBox,
        coefficients: CustomCoefficients,
        beta: f64,
        ellipticity: (f64, f64),
        name: &str,
    ) -> Self {
        Self {
            dim,
            family: Family::Custom(Arc::new(coefficients)),
            beta,
            domain,
            policy: BoxPolicy::Confine,
            ellipticity,
            descriptor: format!("custom={name}"),
        }
    }

    pub fn with_policy(mut self, policy: BoxPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_domain(mut self, domain: BoundingBox) -> Self {
        self.domain = domain;
        self
    }

    /// Checks uniform ellipticity and, for reversible models, `b = −∇V` at
    /// random probe points of the box.
    pub fn validate(&self) -> Result<()> {
        let (lam, big_lam) = self.ellipticity;
        if !(lam > 0.0 && big_lam >= lam) {
            return Err(Error::Model(format!("bad ellipticity bounds ({lam}, {big_lam})")));
        }
        let mut rng = StreamRng::new(PROBE_SEED, 0);
        for _ in 0..PROBES {
            let x = self.domain.sample(&mut rng);
            let a = self.diffusion(&x);
            if (a[0][1] - a[1][0]).abs() > 1e-12 * (1.0 + a[0][1].abs()) {
                return Err(Error::Model(format!("a(x) not symmetric at {x:?}")));
            }
            let (e_min, e_max) = eigen_range(&a, self.dim);
            let slack = 1e-12 * big_lam;
            if e_min < lam - slack || e_max > big_lam + slack || e_min <= 0.0 {
                return Err(Error::Model(format!(
                    "a(x) not SPD within [{lam}, {big_lam}] at {x:?}: eigenvalues [{e_min}, {e_max}]"
                )));
            }
            if self.is_reversible() {
                let b = self.drift(&x);
                let g = self.numeric_grad_potential(&x);
                for k in 0..self.dim {
                    let tol = 1e-5 * (1.0 + b[k].abs());
                    if (b[k] + g[k]).abs() > tol {
                        return Err(Error::Model(format!(
                            "drift differs from -grad V at {x:?}: b={b:?}, grad V={g:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn numeric_grad_potential(&self, x: &Point) -> Point {
        let mut g = [0.0; 2];
        for k in 0..self.dim {
            let h = 1e-5 * (1.0 + x[k].abs());
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            let vp = self.potential(&xp).unwrap_or(0.0);
            let vm = self.potential(&xm).unwrap_or(0.0);
            g[k] = (vp - vm) / (2.0 * h);
        }
        g
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain(&self) -> &BoundingBox {
        &self.domain
    }

    pub fn policy(&self) -> BoxPolicy {
        self.policy
    }

    pub fn ellipticity(&self) -> (f64, f64) {
        self.ellipticity
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Inverse temperature, if the model has a Gibbs invariant density.
    pub fn beta(&self) -> Option<f64> {
        self.has_gibbs_density().then_some(self.beta)
    }

    /// Whether the invariant density is known to be `e^{−βV}/Z`.
    pub fn has_gibbs_density(&self) -> bool {
        match &self.family {
            Family::Custom(c) => c.potential.is_some(),
            _ => true,
        }
    }

    /// Whether the generator is self-adjoint in `L²(ρ)` (`b = −∇V`, `a = β⁻¹ I`).
    pub fn is_reversible(&self) -> bool {
        match &self.family {
            Family::Shear2d { c } => *c == 0.0,
            Family::Custom(c) => c.reversible,
            _ => true,
        }
    }

    pub fn has_constant_diffusion(&self) -> bool {
        match &self.family {
            Family::Custom(c) => c.constant_diffusion,
            _ => true,
        }
    }

    #[inline]
    pub fn potential(&self, x: &Point) -> Option<f64> {
        match &self.family {
            Family::Brownian1d => Some(0.0),
            Family::DoubleWell1d => Some((x[0] * x[0] - 1.0).powi(2)),
            Family::DoubleWell2d | Family::Shear2d { .. } => {
                Some((x[0] * x[0] - 1.0).powi(2) + 2.0 * x[1] * x[1])
            }
            Family::Custom(c) => c.potential.as_ref().map(|(v, _)| v(x)),
        }
    }

    #[inline]
    pub fn grad_potential(&self, x: &Point) -> Option<Point> {
        match &self.family {
            Family::Brownian1d => Some([0.0, 0.0]),
            Family::DoubleWell1d => Some([4.0 * x[0] * (x[0] * x[0] - 1.0), 0.0]),
            Family::DoubleWell2d | Family::Shear2d { .. } => {
                Some([4.0 * x[0] * (x[0] * x[0] - 1.0), 4.0 * x[1]])
            }
            Family::Custom(c) => c.potential.as_ref().map(|(_, g)| g(x)),
        }
    }

    /// Drift `b(x)`.
    #[inline]
    pub fn drift(&self, x: &Point) -> Point {
        match &self.family {
            Family::Brownian1d => [0.0, 0.0],
            Family::DoubleWell1d => [-4.0 * x[0] * (x[0] * x[0] - 1.0), 0.0],
            Family::DoubleWell2d => [-4.0 * x[0] * (x[0] * x[0] - 1.0), -4.0 * x[1]],
            Family::Shear2d { c } => {
                let gx = 4.0 * x[0] * (x[0] * x[0] - 1.0);
                let gy = 4.0 * x[1];
                // J∇V = (−V_y, V_x)
                [-gx - c * gy, -gy + c * gx]
            }
            Family::Custom(c) => (c.drift)(x),
        }
    }

    /// Noise matrix `σ(x)`.
    #[inline]
    pub fn sigma(&self, x: &Point) -> Mat {
        match &self.family {
            Family::Custom(c) => (c.sigma)(x),
            _ => {
                let s = (1.0 / self.beta).sqrt();
                if self.dim == 1 {
                    [[s, 0.0], [0.0, 0.0]]
                } else {
                    [[s, 0.0], [0.0, s]]
                }
            }
        }
    }

    /// `a(x) = σ(x) σ(x)ᵀ`.
    #[inline]
    pub fn diffusion(&self, x: &Point) -> Mat {
        let s = self.sigma(x);
        let mut a = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                a[i][j] = s[i][0] * s[j][0] + s[i][1] * s[j][1];
            }
        }
        a
    }

    /// Column divergence of `a`, `(div a)_i = Σ_j ∂_j a_ij`.
    pub fn div_diffusion(&self, x: &Point) -> Point {
        if self.has_constant_diffusion() {
            return [0.0, 0.0];
        }
        let mut out = [0.0; 2];
        for j in 0..self.dim {
            let h = 1e-5 * (1.0 + x[j].abs());
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += h;
            xm[j] -= h;
            let ap = self.diffusion(&xp);
            let am = self.diffusion(&xm);
            for (i, o) in out.iter_mut().enumerate().take(self.dim) {
                *o += (ap[i][j] - am[i][j]) / (2.0 * h);
            }
        }
        out
    }

    /// `∇ log ρ = −β∇V` for models with a Gibbs density.
    #[inline]
    pub fn grad_log_density(&self, x: &Point) -> Option<Point> {
        if !self.has_gibbs_density() {
            return None;
        }
        self.grad_potential(x).map(|g| [-self.beta * g[0], -self.beta * g[1]])
    }
}

fn eigen_range(a: &Mat, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (a[0][0], a[0][0]);
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// One point of a discretized region boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryAtom {
    pub point: Point,
    /// Surface measure carried by the atom (arc length in 2D, 1 in 1D).
    pub weight: f64,
    /// Unit normal pointing out of Θ, i.e. into the region.
    pub normal: Point,
}

/// Caller-defined region: a signed distance plus an explicit boundary discretization.
pub struct CustomShape {
    pub signed_distance: Box<PotentialFn>,
    pub atoms: Vec<BoundaryAtom>,
    pub extent: BoundingBox,
}

#[derive(Clone)]
pub enum Shape {
    Interval { lo: f64, hi: f64 },
    Disk { center: Point, radius: f64 },
    Custom(Arc<CustomShape>),
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Interval { lo, hi } => write!(f, "Interval({lo}, {hi})"),
            Shape::Disk { center, radius } => write!(f, "Disk({center:?}, {radius})"),
            Shape::Custom(c) => write!(f, "Custom({} atoms)", c.atoms.len()),
        }
    }
}

/// A bounded open set (A or B) with its boundary discretization.
#[derive(Clone, Debug)]
pub struct Region {
    name: String,
    dim: usize,
    shape: Shape,
    atoms: Vec<BoundaryAtom>,
}

impl Region {
    /// The open interval `(lo, hi)`; boundary atoms are the two endpoints.
    pub fn interval(name: &str, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Region(format!("{name}: empty interval ({lo}, {hi})")));
        }
        let atoms = vec![
            BoundaryAtom {
                point: [lo, 0.0],
                weight: 1.0,
                normal: [1.0, 0.0],
            },
            BoundaryAtom {
                point: [hi, 0.0],
                weight: 1.0,
                normal: [-1.0, 0.0],
            },
        ];
        Ok(Self {
            name: name.into(),
            dim: 1,
            shape: Shape::Interval { lo, hi },
            atoms,
        })
    }

    /// The open disk; `n_atoms` equispaced boundary atoms, the first at angle 0.
    pub fn disk(name: &str, center: Point, radius: f64, n_atoms: usize) -> Result<Self> {
        if !(radius > 0.0) || n_atoms < 8 {
            return Err(Error::Region(format!(
                "{name}: need radius > 0 and at least 8 atoms"
            )));
        }
        let w = 2.0 * PI * radius / n_atoms as f64;
        let atoms = (0..n_atoms)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n_atoms as f64;
                let (s, c) = t.sin_cos();
                BoundaryAtom {
                    point: [center[0] + radius * c, center[1] + radius * s],
                    weight: w,
                    normal: [-c, -s],
                }
            })
            .collect();
        Ok(Self {
            name: name.into(),
            dim: 2,
            shape: Shape::Disk { center, radius },
            atoms,
        })
    }

    /// A region given by a signed distance function and caller-supplied atoms.
    pub fn custom(name: &str, dim: usize, shape: CustomShape) -> Result<Self> {
        if shape.atoms.is_empty() {
            return Err(Error::Region(format!("{name}: custom region needs boundary atoms")));
        }
        let atoms = shape.atoms.clone();
        Ok(Self {
            name: name.into(),
            dim,
            shape: Shape::Custom(Arc::new(shape)),
            atoms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn atoms(&self) -> &[BoundaryAtom] {
        &self.atoms
    }

    /// Negative inside, zero on the boundary, positive outside.
    #[inline]
    pub fn signed_distance(&self, x: &Point) -> f64 {
        match &self.shape {
            Shape::Interval { lo, hi } => (lo - x[0]).max(x[0] - hi),
            Shape::Disk { center, radius } => dist(x, center) - radius,
            Shape::Custom(c) => (c.signed_distance)(x),
        }
    }

    /// Membership of the open set.
    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Membership of the closure.
    #[inline]
    pub fn contains_closure(&self, x: &Point) -> bool {
        self.signed_distance(x) <= 0.0
    }

    /// Smallest box containing the closure.
    pub fn extent(&self) -> BoundingBox {
        match &self.shape {
            Shape::Interval { lo, hi } => BoundingBox::new_1d(*lo, *hi),
            Shape::Disk { center, radius } => BoundingBox::new_2d(
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Shape::Custom(c) => c.extent,
        }
    }

    /// Inradius-like length scale used for grid resolution checks.
    pub fn radius(&self) -> f64 {
        match &self.shape {
            Shape::Interval { lo, hi } => 0.5 * (hi - lo),
            Shape::Disk { radius, .. } => *radius,
            Shape::Custom(c) => {
                let e = c.extent;
                (0..e.dim).map(|k| 0.5 * (e.hi[k] - e.lo[k])).fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn center(&self) -> Point {
        match &self.shape {
            Shape::Interval { lo, hi } => [0.5 * (lo + hi), 0.0],
            Shape::Disk { center, .. } => *center,
            Shape::Custom(c) => [
                0.5 * (c.extent.lo[0] + c.extent.hi[0]),
                0.5 * (c.extent.lo[1] + c.extent.hi[1]),
            ],
        }
    }

    /// Total surface measure of the boundary (counting measure in 1D).
    pub fn surface_measure(&self) -> f64 {
        match &self.shape {
            Shape::Interval { .. } => 2.0,
            Shape::Disk { radius, .. } => 2.0 * PI * radius,
            Shape::Custom(c) => c.atoms.iter().map(|a| a.weight).sum(),
        }
    }

    pub fn nearest_atom(&self, x: &Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, a) in self.atoms.iter().enumerate() {
            let d = dist(x, &a.point);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Nearest boundary point (exact for intervals and disks, nearest atom otherwise).
    pub fn project(&self, x: &Point) -> Point {
        match &self.shape {
            Shape::Interval { lo, hi } => {
                if (x[0] - lo).abs() <= (x[0] - hi).abs() {
                    [*lo, 0.0]
                } else {
                    [*hi, 0.0]
                }
            }
            Shape::Disk { center, radius } => {
                let d = dist(x, center);
                if d == 0.0 {
                    [center[0] + radius, center[1]]
                } else {
                    [
                        center[0] + radius * (x[0] - center[0]) / d,
                        center[1] + radius * (x[1] - center[1]) / d,
                    ]
                }
            }
            Shape::Custom(_) => self.atoms[self.nearest_atom(x)].point,
        }
    }

    /// Unit normal into the region at boundary point `p`.
    pub fn normal_at(&self, p: &Point) -> Point {
        match &self.shape {
            Shape::Interval { lo, hi } => {
                if (p[0] - lo).abs() <= (p[0] - hi).abs() {
                    [1.0, 0.0]
                } else {
                    [-1.0, 0.0]
                }
            }
            Shape::Disk { center, .. } => {
                let d = dist(p, center).max(f64::MIN_POSITIVE);
                [(center[0] - p[0]) / d, (center[1] - p[1]) / d]
            }
            Shape::Custom(_) => self.atoms[self.nearest_atom(p)].normal,
        }
    }

    /// A point of the arc owned by atom `i`, `u ∈ [0, 1)` spread uniformly across it.
    pub fn point_in_atom(&self, i: usize, u: f64) -> Point {
        match &self.shape {
            Shape::Disk { center, radius } => {
                let n = self.atoms.len() as f64;
                let t = 2.0 * PI * (i as f64 + u - 0.5) / n;
                let (s, c) = t.sin_cos();
                [center[0] + radius * c, center[1] + radius * s]
            }
            _ => self.atoms[i].point,
        }
    }

    /// Angle of boundary point `p` about the region centre, in `[0, 2π)`,
    /// measured counter-clockwise from direction `reference`.
    pub fn boundary_angle(&self, p: &Point, reference: &Point) -> f64 {
        let c = self.center();
        let v = [p[0] - c[0], p[1] - c[1]];
        let t = (v[1].atan2(v[0]) - reference[1].atan2(reference[0])).rem_euclid(2.0 * PI);
        if t >= 2.0 * PI {
            0.0
        } else {
            t
        }
    }
}

/// Fails unless the closures of `a` and `b` are disjoint.
pub fn check_disjoint(a: &Region, b: &Region) -> Result<()> {
    let names = format!("{} and {}", a.name(), b.name());
    match (&a.shape, &b.shape) {
        (Shape::Interval { lo: l1, hi: h1 }, Shape::Interval { lo: l2, hi: h2 }) => {
            if !(h1 < l2 || h2 < l1) {
                return Err(Error::NotDisjoint(names));
            }
        }
        (
            Shape::Disk {
                center: c1,
                radius: r1,
            },
            Shape::Disk {
                center: c2,
                radius: r2,
            },
        ) => {
            if dist(c1, c2) <= r1 + r2 {
                return Err(Error::NotDisjoint(names));
            }
        }
        _ => {
            let mut min = f64::INFINITY;
            for p in a.atoms() {
                if b.contains_closure(&p.point) {
                    return Err(Error::NotDisjoint(names));
                }
                for q in b.atoms() {
                    min = min.min(dist(&p.point, &q.point));
                }
            }
            if b.atoms().iter().any(|q| a.contains_closure(&q.point)) || min <= 0.0 {
                return Err(Error::NotDisjoint(names));
            }
        }
    }
    Ok(())
}

/// The invariant density on a grid.
#[derive(Clone, Debug)]
pub struct InvariantDensity {
    field: ScalarField,
    normalizer: f64,
    model: Option<DiffusionModel>,
}

/// `ρ = e^{−βV}/Z` on `grid`, with `Z` from trapezoid quadrature over the box.
///
/// Unless the model reflects at the box, the box must hold all but a negligible
/// part of the mass: `Z` on the box and on the box enlarged 1.5× (same spacing)
/// must agree to 1e-6 relative.
pub fn invariant_density(model: &DiffusionModel, grid: &Arc<Grid>) -> Result<InvariantDensity> {
    let beta = model
        .beta()
        .ok_or_else(|| Error::Model("no analytic invariant density for this model".into()))?;
    // Shift by min V so the largest weight is 1.
    let v_ref = (0..grid.len())
        .filter_map(|i| model.potential(&grid.point(i)))
        .fold(f64::INFINITY, f64::min);
    let weight = |x: &Point| (-beta * (model.potential(x).unwrap_or(0.0) - v_ref)).exp();
    let z_box: f64 = (0..grid.len()).map(|i| grid.weight(i) * weight(&grid.point(i))).sum();

    if model.policy() == BoxPolicy::Confine {
        let domain = grid.domain();
        let big = domain.enlarged(1.5);
        let mut nodes = [1usize; 2];
        for k in 0..grid.dim() {
            let h = grid.spacing(k);
            nodes[k] = ((big.hi[k] - big.lo[k]) / h).round() as usize + 1;
        }
        let g_big = Grid::new(&big, nodes)?;
        let z_big: f64 = (0..g_big.len())
            .map(|i| g_big.weight(i) * weight(&g_big.point(i)))
            .sum();
        let rel = (z_big - z_box).abs() / z_big;
        if rel >= 1e-6 {
            return Err(Error::BoxTooSmall { rel_diff: rel });
        }
    }

    let values = (0..grid.len()).map(|i| weight(&grid.point(i)) / z_box).collect();
    Ok(InvariantDensity {
        field: ScalarField::new(grid.clone(), values),
        normalizer: z_box * (-beta * v_ref).exp(),
        model: Some(model.clone()),
    })
}

/// Density estimated from samples (e.g. a long trajectory) by nearest-node
/// histogram, normalized to unit mass on the grid.
pub fn invariant_density_from_samples<'a>(
    samples: impl IntoIterator<Item = &'a Point>,
    grid: &Arc<Grid>,
) -> Result<InvariantDensity> {
    let mut counts = vec![0.0; grid.len()];
    let mut total = 0.0;
    for p in samples {
        if let Some(i) = grid.nearest_node(p) {
            counts[i] += 1.0;
            total += 1.0;
        }
    }
    if total == 0.0 {
        return Err(Error::InsufficientData("no samples inside the grid".into()));
    }
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, c)| c / (total * grid.weight(i)))
        .collect();
    Ok(InvariantDensity {
        field: ScalarField::new(grid.clone(), values),
        normalizer: 1.0,
        model: None,
    })
}

impl InvariantDensity {
    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    /// The normalizing constant `Z` (1 for empirical densities).
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn is_analytic(&self) -> bool {
        self.model.is_some()
    }

    /// `ρ(x)`: exact for Gibbs densities, interpolated otherwise.
    pub fn value_at(&self, x: &Point) -> f64 {
        match &self.model {
            Some(m) => {
                let beta = m.beta().unwrap_or(1.0);
                (-beta * m.potential(x).unwrap_or(0.0)).exp() / self.normalizer
            }
            None => self.field.interpolate(x),
        }
    }

    /// `∇ log ρ` at node `idx`: exact for Gibbs densities, central differences of
    /// `log ρ` otherwise.
    pub fn grad_log_at_node(&self, idx: usize) -> Point {
        let grid = self.field.grid();
        let x = grid.point(idx);
        if let Some(g) = self.model.as_ref().and_then(|m| m.grad_log_density(&x)) {
            return g;
        }
        let mut g = [0.0; 2];
        let v = self.field.values();
        let ln = |i: usize| v[i].max(f64::MIN_POSITIVE).ln();
        for (k, gk) in g.iter_mut().enumerate().take(grid.dim()) {
            let h = grid.spacing(k);
            *gk = match (grid.neighbor(idx, k, -1), grid.neighbor(idx, k, 1)) {
                (Some(l), Some(r)) => (ln(r) - ln(l)) / (2.0 * h),
                (None, Some(r)) => (ln(r) - ln(idx)) / h,
                (Some(l), None) => (ln(idx) - ln(l)) / h,
                (None, None) => 0.0,
            };
        }
        g
    }

    /// `∇ log ρ` at an arbitrary point.
    pub fn grad_log_at(&self, x: &Point) -> Point {
        if let Some(g) = self.model.as_ref().and_then(|m| m.grad_log_density(x)) {
            return g;
        }
        let grid = self.field.grid();
        let (nodes, w, m) = grid.stencil(x);
        let mut g = [0.0; 2];
        for k in 0..m {
            let gi = self.grad_log_at_node(nodes[k]);
            g[0] += w[k] * gi[0];
            g[1] += w[k] * gi[1];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_has_half_diffusion() {
        let m = build_model(&ModelDescriptor::new("brownian1d")).unwrap();
        for x in [-2.0, 0.0, 3.5] {
            assert_eq!(m.drift(&[x, 0.0]), [0.0, 0.0]);
            assert!((m.diffusion(&[x, 0.0])[0][0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn doublewell_critical_points() {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
        assert_eq!(m.drift(&[0.0, 0.0])[0], 0.0);
        assert_eq!(m.drift(&[1.0, 0.0])[0], 0.0);
        let m2 = build_model(&ModelDescriptor::new("doublewell2d").beta(2.0)).unwrap();
        assert_eq!(m2.drift(&[1.0, 0.0]), [0.0, 0.0]);
        assert_eq!(m2.potential(&[1.0, 0.0]), Some(0.0));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            build_model(&ModelDescriptor::new("lorenz")),
            Err(Error::Model(_))
        ));
        assert!(build_model(&ModelDescriptor::new("doublewell1d").beta(0.0)).is_err());
        assert!(build_model(&ModelDescriptor::new("doublewell1d").beta(-1.0)).is_err());
        assert!(build_model(&ModelDescriptor::new("doublewell1d")).is_err());
    }

    #[test]
    fn degenerate_sigma_rejected() {
        let m = DiffusionModel::custom(
            2,
            BoundingBox::new_2d([-1.0, -1.0], [1.0, 1.0]),
            CustomCoefficients {
                drift: Box::new(|_| [0.0, 0.0]),
                sigma: Box::new(|_| [[1.0, 0.0], [0.0, 0.0]]),
                potential: None,
                reversible: false,
                constant_diffusion: true,
            },
            1.0,
            (0.5, 1.0),
            "degenerate",
        );
        assert!(m.validate().is_err());
    }

    #[test]
    fn shear_is_not_reversible_but_keeps_gibbs_density() {
        let m = build_model(&ModelDescriptor::new("shear2d").beta(2.0).shear(0.5)).unwrap();
        assert!(!m.is_reversible());
        assert!(m.has_gibbs_density());
        // L*ρ = 0 pointwise: β⁻¹Δρ − div(bρ), checked with finite differences
        let beta = 2.0;
        let rho = |x: &Point| (-beta * m.potential(x).unwrap()).exp();
        let h = 1e-4;
        for x in [[0.3, -0.2], [-1.1, 0.4], [0.7, 0.7]] {
            let mut lap = -4.0 * rho(&x);
            let mut div = 0.0;
            for k in 0..2 {
                let mut p = x;
                let mut q = x;
                p[k] += h;
                q[k] -= h;
                lap += rho(&p) + rho(&q);
                div += (m.drift(&p)[k] * rho(&p) - m.drift(&q)[k] * rho(&q)) / (2.0 * h);
            }
            let res = lap / (beta * h * h) - div;
            assert!(res.abs() < 1e-5, "residual {res} at {x:?}");
        }
    }

    #[test]
    fn region_predicates_agree_with_distance() {
        let r = Region::disk("A", [-1.0, 0.0], 0.3, 64).unwrap();
        let mut rng = StreamRng::new(3, 0);
        let b = BoundingBox::new_2d([-2.0, -1.0], [0.0, 1.0]);
        for _ in 0..10_000 {
            let x = b.sample(&mut rng);
            assert_eq!(r.contains(&x), r.signed_distance(&x) < 0.0);
        }
        let total: f64 = r.atoms().iter().map(|a| a.weight).sum();
        assert!((total - r.surface_measure()).abs() < 1e-12);
    }

    #[test]
    fn overlapping_regions_rejected() {
        let a = Region::interval("A", -1.0, 0.5).unwrap();
        let b = Region::interval("B", 0.5, 1.0).unwrap();
        let e = check_disjoint(&a, &b).unwrap_err();
        assert!(e.to_string().contains("closures not disjoint"));
        let c = Region::disk("A", [0.0, 0.0], 1.0, 32).unwrap();
        let d = Region::disk("B", [1.5, 0.0], 0.6, 32).unwrap();
        assert!(check_disjoint(&c, &d).is_err());
    }

    #[test]
    fn uniform_density_in_reflecting_box() {
        let m = build_model(&ModelDescriptor::new("brownian1d").domain(BoundingBox::new_1d(-3.0, 3.0)))
            .unwrap();
        let g = Arc::new(Grid::new(m.domain(), [601, 1]).unwrap());
        let rho = invariant_density(&m, &g).unwrap();
        for &v in rho.field().values() {
            assert!((v - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boltzmann_ratio() {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
        let g = Arc::new(Grid::new(m.domain(), [1001, 1]).unwrap());
        let rho = invariant_density(&m, &g).unwrap();
        let r = rho.value_at(&[0.0, 0.0]) / rho.value_at(&[1.0, 0.0]);
        assert!((r - (-3.0f64).exp()).abs() < 1e-14);
        let mass: f64 = (0..g.len()).map(|i| g.weight(i) * rho.field().at(i)).sum();
        assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn small_box_detected() {
        let m = build_model(
            &ModelDescriptor::new("doublewell1d")
                .beta(3.0)
                .domain(BoundingBox::new_1d(-1.2, 1.2)),
        )
        .unwrap();
        let g = Arc::new(Grid::new(m.domain(), [241, 1]).unwrap());
        assert!(matches!(invariant_density(&m, &g), Err(Error::BoxTooSmall { .. })));
    }
}
