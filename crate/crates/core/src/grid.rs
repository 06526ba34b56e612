//! Rectangular node grids and the fields that live on them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Region};
use crate::Point;

/// Nodes closer than this fraction of a cell to a region belong to its closure.
pub const SNAP_FRACTION: f64 = 1e-9;

/// Uniformly spaced nodes `lo, lo + h, …, hi` along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    fn degenerate() -> Self {
        Self { lo: 0.0, hi: 0.0, n: 1 }
    }

    #[inline]
    pub fn h(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.h()
        }
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if self.n < 2 {
            1.0
        } else if i == 0 || i + 1 == self.n {
            0.5 * self.h()
        } else {
            self.h()
        }
    }
}

/// Node classification relative to the reactant and product regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeClass {
    /// In Θ, away from the box faces.
    Interior = 0,
    /// In the closure of A.
    A = 1,
    /// In the closure of B.
    B = 2,
    /// In Θ, on a face of the bounding box.
    BoxBoundary = 3,
}

impl NodeClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Interior),
            1 => Some(Self::A),
            2 => Some(Self::B),
            3 => Some(Self::BoxBoundary),
            _ => None,
        }
    }

    #[inline]
    pub fn is_theta(self) -> bool {
        matches!(self, Self::Interior | Self::BoxBoundary)
    }
}

/// Which region classes hold Dirichlet data in a field.
///
/// A field that is fixed on a class is constant there (the boundary value), and
/// finite differences taken from Θ towards that class stop at the boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Fixed {
    pub a: bool,
    pub b: bool,
}

impl Fixed {
    pub const NONE: Fixed = Fixed { a: false, b: false };
    pub const BOTH: Fixed = Fixed { a: true, b: true };
    pub const B_ONLY: Fixed = Fixed { a: false, b: true };
    pub const A_ONLY: Fixed = Fixed { a: true, b: false };

    #[inline]
    pub fn contains(self, class: NodeClass) -> bool {
        match class {
            NodeClass::A => self.a,
            NodeClass::B => self.b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    axes: [Axis; 2],
    classes: Vec<NodeClass>,
    regions: Option<(Region, Region)>,
}

impl Grid {
    /// A grid over `domain` with no reactant/product regions; every node is in Θ.
    pub fn new(domain: &BoundingBox, nodes: [usize; 2]) -> Result<Self> {
        let dim = domain.dim;
        let mut axes = [Axis::degenerate(); 2];
        for k in 0..dim {
            if nodes[k] < 3 {
                return Err(Error::Grid(format!("axis {k} needs at least 3 nodes")));
            }
            if !(domain.hi[k] > domain.lo[k]) {
                return Err(Error::Grid(format!("empty axis {k}")));
            }
            axes[k] = Axis::new(domain.lo[k], domain.hi[k], nodes[k]);
        }
        let mut grid = Self {
            dim,
            axes,
            classes: Vec::new(),
            regions: None,
        };
        grid.classes = (0..grid.len()).map(|idx| grid.box_class(idx)).collect();
        Ok(grid)
    }

    /// Smallest positive spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|k| self.axes[k].h()).fold(f64::INFINITY, f64::min)
    }

    /// A grid classified against the reactant region `a` and product region `b`.
    pub fn with_regions(domain: &BoundingBox, nodes: [usize; 2], a: &Region, b: &Region) -> Result<Self> {
        let mut grid = Self::new(domain, nodes)?;
        for r in [a, b] {
            if r.dim() != grid.dim {
                return Err(Error::Dimension {
                    expected: grid.dim,
                    got: r.dim(),
                });
            }
        }
        crate::model::check_disjoint(a, b)?;
        // nodes within roundoff of a boundary belong to the closure
        let snap = SNAP_FRACTION * grid.min_spacing();
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            if a.signed_distance(&p) <= snap {
                grid.classes[idx] = NodeClass::A;
            } else if b.signed_distance(&p) <= snap {
                grid.classes[idx] = NodeClass::B;
            }
        }
        for (name, class) in [("A", NodeClass::A), ("B", NodeClass::B)] {
            if !grid.classes.contains(&class) {
                return Err(Error::Grid(format!("region {name} contains no grid node")));
            }
        }
        grid.regions = Some((a.clone(), b.clone()));
        grid.check_separation()?;
        Ok(grid)
    }

    fn box_class(&self, idx: usize) -> NodeClass {
        let ij = self.ij(idx);
        let on_face = (0..self.dim).any(|k| ij[k] == 0 || ij[k] + 1 == self.axes[k].n);
        if on_face {
            NodeClass::BoxBoundary
        } else {
            NodeClass::Interior
        }
    }

    /// Along every grid line that meets both regions, at least three Θ nodes
    /// separate consecutive runs of A and B nodes.
    fn check_separation(&self) -> Result<()> {
        for axis in 0..self.dim {
            let other = 1 - axis;
            let lines = if self.dim == 1 { 1 } else { self.axes[other].n };
            for line in 0..lines {
                let mut last: Option<(NodeClass, usize)> = None;
                for s in 0..self.axes[axis].n {
                    let mut ij = [0usize; 2];
                    ij[axis] = s;
                    ij[other] = line;
                    let c = self.classes[self.index(ij)];
                    if matches!(c, NodeClass::A | NodeClass::B) {
                        if let Some((prev, at)) = last {
                            if prev != c && s - at - 1 < 3 {
                                return Err(Error::Grid(format!(
                                    "fewer than 3 Θ nodes between A and B along axis {axis}, line {line}"
                                )));
                            }
                        }
                        last = Some((c, s));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].n, self.axes[1].n]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.axes[0].n * self.axes[1].n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ij: [usize; 2]) -> usize {
        ij[0] + self.axes[0].n * ij[1]
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> [usize; 2] {
        let nx = self.axes[0].n;
        [idx % nx, idx / nx]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let [i, j] = self.ij(idx);
        let mut p = [0.0; 2];
        p[0] = self.axes[0].coord(i);
        if self.dim == 2 {
            p[1] = self.axes[1].coord(j);
        }
        p
    }

    #[inline]
    pub fn class(&self, idx: usize) -> NodeClass {
        self.classes[idx]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    #[inline]
    pub fn is_theta(&self, idx: usize) -> bool {
        self.classes[idx].is_theta()
    }

    pub fn regions(&self) -> Option<(&Region, &Region)> {
        self.regions.as_ref().map(|(a, b)| (a, b))
    }

    pub fn region(&self, class: NodeClass) -> Option<&Region> {
        match (class, &self.regions) {
            (NodeClass::A, Some((a, _))) => Some(a),
            (NodeClass::B, Some((_, b))) => Some(b),
            _ => None,
        }
    }

    pub fn domain(&self) -> BoundingBox {
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for k in 0..self.dim {
            lo[k] = self.axes[k].lo;
            hi[k] = self.axes[k].hi;
        }
        BoundingBox { dim: self.dim, lo, hi }
    }

    #[inline]
    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].h()
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    /// Trapezoid quadrature weight (dual-cell volume) of a node.
    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        let [i, j] = self.ij(idx);
        let mut w = self.axes[0].weight(i);
        if self.dim == 2 {
            w *= self.axes[1].weight(j);
        }
        w
    }

    /// Neighbour of `idx` one step along `axis` in direction `dir` (±1), if inside the box.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i32) -> Option<usize> {
        let mut ij = self.ij(idx);
        let s = ij[axis] as i64 + dir as i64;
        if s < 0 || s >= self.axes[axis].n as i64 {
            return None;
        }
        ij[axis] = s as usize;
        Some(self.index(ij))
    }

    /// Fraction θ ∈ (0, 1] of the spacing from Θ node `idx` to the boundary of the
    /// region that holds its neighbour along (`axis`, `dir`). Returns 1 when the
    /// neighbour is not in a region.
    pub fn crossing_fraction(&self, idx: usize, axis: usize, dir: i32) -> f64 {
        let Some(nb) = self.neighbor(idx, axis, dir) else {
            return 1.0;
        };
        let Some(region) = self.region(self.classes[nb]) else {
            return 1.0;
        };
        if !self.classes[idx].is_theta() {
            return 1.0;
        }
        let p = self.point(idx);
        let h = self.spacing(axis) * dir as f64;
        let at = |t: f64| {
            let mut x = p;
            x[axis] += t * h;
            region.signed_distance(&x)
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        if at(lo) <= 0.0 {
            return f64::MIN_POSITIVE;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if at(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi.max(1e-12)
    }

    /// Cell containing `p` (lower-left node multi-index) and local coordinates in [0, 1].
    /// Points outside the box are clamped onto it.
    #[inline]
    pub fn locate(&self, p: &Point) -> ([usize; 2], [f64; 2]) {
        let mut cell = [0usize; 2];
        let mut t = [0.0; 2];
        for k in 0..self.dim {
            let ax = &self.axes[k];
            let h = ax.h();
            let s = ((p[k] - ax.lo) / h).clamp(0.0, (ax.n - 1) as f64);
            let i = (s.floor() as usize).min(ax.n - 2);
            cell[k] = i;
            t[k] = s - i as f64;
        }
        (cell, t)
    }

    /// Nodes and bilinear weights used to interpolate at `p`.
    #[inline]
    pub fn stencil(&self, p: &Point) -> ([usize; 4], [f64; 4], usize) {
        let (cell, t) = self.locate(p);
        if self.dim == 1 {
            let i = cell[0];
            ([i, i + 1, 0, 0], [1.0 - t[0], t[0], 0.0, 0.0], 2)
        } else {
            let i00 = self.index(cell);
            let nx = self.axes[0].n;
            (
                [i00, i00 + 1, i00 + nx, i00 + nx + 1],
                [
                    (1.0 - t[0]) * (1.0 - t[1]),
                    t[0] * (1.0 - t[1]),
                    (1.0 - t[0]) * t[1],
                    t[0] * t[1],
                ],
                4,
            )
        }
    }

    /// Node nearest to `p`, or `None` when `p` lies outside the box.
    pub fn nearest_node(&self, p: &Point) -> Option<usize> {
        let mut ij = [0usize; 2];
        for k in 0..self.dim {
            let ax = &self.axes[k];
            let s = (p[k] - ax.lo) / ax.h();
            if s < -0.5 || s > (ax.n - 1) as f64 + 0.5 || !s.is_finite() {
                return None;
            }
            ij[k] = (s.round().max(0.0) as usize).min(ax.n - 1);
        }
        Some(self.index(ij))
    }
}

/// Values on every node of a grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    fixed: Fixed,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        Self {
            grid,
            values,
            fixed: Fixed::NONE,
        }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self::new(grid, vec![0.0; n])
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    /// Marks the region classes on which this field carries Dirichlet data.
    pub fn with_fixed(mut self, fixed: Fixed) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn fixed(&self) -> Fixed {
        self.fixed
    }

    #[inline]
    pub fn is_fixed(&self, idx: usize) -> bool {
        self.fixed.contains(self.grid.class(idx))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Bilinear (linear in 1D) interpolation; points outside the box are clamped.
    #[inline]
    pub fn interpolate(&self, p: &Point) -> f64 {
        let (nodes, w, m) = self.grid.stencil(p);
        let mut s = 0.0;
        for k in 0..m {
            s += w[k] * self.values[nodes[k]];
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            fixed: self.fixed,
        }
    }

    /// Integrates the field over each dual cell of `target` (nearest-node
    /// binning of this field's nodes) and divides by the cell volume.
    pub fn rebin(&self, target: &Arc<Grid>) -> ScalarField {
        let mut acc = vec![0.0; target.len()];
        for idx in 0..self.grid.len() {
            let p = self.grid.point(idx);
            if let Some(t) = target.nearest_node(&p) {
                acc[t] += self.values[idx] * self.grid.weight(idx);
            }
        }
        for (t, a) in acc.iter_mut().enumerate() {
            *a /= target.weight(t);
        }
        ScalarField::new(target.clone(), acc)
    }
}

/// A vector in R^d on every node of a grid.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<Grid>,
    values: Vec<Point>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, values: Vec<Point>) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Point] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Point {
        self.values[idx]
    }

    #[inline]
    pub fn interpolate(&self, p: &Point) -> Point {
        let (nodes, w, m) = self.grid.stencil(p);
        let mut s = [0.0; 2];
        for k in 0..m {
            let v = self.values[nodes[k]];
            s[0] += w[k] * v[0];
            s[1] += w[k] * v[1];
        }
        s
    }

    pub fn component(&self, k: usize) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|v| v[k]).collect())
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(crate::norm(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;

    fn box1d(lo: f64, hi: f64) -> BoundingBox {
        BoundingBox::new_1d(lo, hi)
    }

    #[test]
    fn classification_matches_predicates() {
        let a = Region::interval("A", -2.0, 0.0).unwrap();
        let b = Region::interval("B", 1.0, 3.0).unwrap();
        let g = Grid::with_regions(&box1d(-3.0, 4.0), [512, 1], &a, &b).unwrap();
        for idx in 0..g.len() {
            let p = g.point(idx);
            let expect = if a.contains_closure(&p) {
                NodeClass::A
            } else if b.contains_closure(&p) {
                NodeClass::B
            } else if idx == 0 || idx == g.len() - 1 {
                NodeClass::BoxBoundary
            } else {
                NodeClass::Interior
            };
            assert_eq!(g.class(idx), expect);
        }
    }

    #[test]
    fn crowded_regions_rejected() {
        let a = Region::interval("A", -1.0, 0.0).unwrap();
        let b = Region::interval("B", 0.05, 1.0).unwrap();
        let err = Grid::with_regions(&box1d(-2.0, 2.0), [41, 1], &a, &b).unwrap_err();
        assert!(err.to_string().contains("fewer than 3"));
    }

    #[test]
    fn crossing_fraction_finds_boundary() {
        let a = Region::interval("A", -1.0, 0.03).unwrap();
        let b = Region::interval("B", 0.9, 1.5).unwrap();
        let g = Grid::with_regions(&box1d(-2.0, 2.0), [41, 1], &a, &b).unwrap();
        // nodes every 0.1; node at 0.1 has its left neighbour 0.0 inside A
        let idx = g.nearest_node(&[0.1, 0.0]).unwrap();
        let theta = g.crossing_fraction(idx, 0, -1);
        assert!((theta - 0.7).abs() < 1e-9, "{theta}");
        assert_eq!(g.crossing_fraction(idx, 0, 1), 1.0);
    }

    #[test]
    fn bilinear_reproduces_bilinear_functions() {
        let g = Arc::new(Grid::new(&BoundingBox::new_2d([-1.0, 0.0], [1.0, 2.0]), [11, 9]).unwrap());
        let f = ScalarField::from_fn(g, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]);
        for p in [[0.13, 0.77], [-0.99, 1.99], [0.5, 0.25]] {
            let exact = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
            assert!((f.interpolate(&p) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_volume() {
        let g = Grid::new(&BoundingBox::new_2d([-1.0, 0.0], [1.0, 3.0]), [21, 31]).unwrap();
        let v: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        assert!((v - 6.0).abs() < 1e-12);
    }
}
