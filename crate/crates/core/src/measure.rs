//! Weighted atoms on a region boundary.

use crate::error::{Error, Result};
use crate::model::Region;
use crate::Point;

/// A finite measure `Σ w_i δ_{x_i}` supported on the boundary of a region.
#[derive(Clone, Debug)]
pub struct BoundaryMeasure {
    region: Region,
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl BoundaryMeasure {
    pub fn new(region: Region, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::NotNormalized(*w));
        }
        Ok(Self {
            region,
            points,
            weights,
        })
    }

    /// A measure on the region's own boundary atoms.
    pub fn on_atoms(region: &Region, weights: Vec<f64>) -> Result<Self> {
        let points = region.atoms().iter().map(|a| a.point).collect();
        Self::new(region.clone(), points, weights)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= 1e-12
    }

    /// The measure divided by its total mass.
    pub fn normalized(&self) -> Result<Self> {
        self.scaled_by_mass(self.total_mass())
    }

    /// The measure divided by `mass`.
    pub fn scaled_by_mass(&self, mass: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NotNormalized(mass));
        }
        Ok(Self {
            region: self.region.clone(),
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w / mass).collect(),
        })
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    /// Integrals of `1`, `φ` and `φ²`, with `φ` the boundary angle measured
    /// from `reference` (see [`Region::boundary_angle`]).
    pub fn angle_moments(&self, reference: &Point) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (p, w) in self.points.iter().zip(&self.weights) {
            let phi = self.region.boundary_angle(p, reference);
            m[0] += w;
            m[1] += w * phi;
            m[2] += w * phi * phi;
        }
        m
    }
}

/// Unit vector from the centre of `other` towards the centre of `region`.
/// Boundary angles measured from it are 0 on the side of `region` facing away
/// from `other` and π on the facing side.
pub fn away_direction(region: &Region, other: &Region) -> Point {
    let (c, o) = (region.center(), other.center());
    let v = [c[0] - o[0], c[1] - o[1]];
    let n = crate::norm(&v);
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

/// Largest relative difference of the angle moments of two measures.
pub fn moment_distance(mu: &BoundaryMeasure, eta: &BoundaryMeasure, reference: &Point) -> f64 {
    let a = mu.angle_moments(reference);
    let b = eta.angle_moments(reference);
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
