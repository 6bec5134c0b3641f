//! Contract designs and the discrete lattice they live on.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("incentive weight {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("recruited count {n} exceeds maximum {max}")]
    TooManyAdded { n: u32, max: u32 },
    #[error("alpha grid needs at least 1 point, got {0}")]
    GridTooSmall(usize),
    #[error("design {0} is not on the lattice")]
    OffLattice(DesignPoint),
}

/// A principal's decision: the shared incentive (tax) weight and the number
/// of recruited agents.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DesignPoint {
    pub alpha: f64,
    pub n_added: u32,
}

impl DesignPoint {
    pub fn new(alpha: f64, n_added: u32) -> Result<Self, DesignError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DesignError::AlphaOutOfRange(alpha));
        }
        Ok(Self { alpha, n_added })
    }

    /// Ordering used to break score ties: lower alpha first, then fewer
    /// recruits.
    pub fn tie_order(&self, other: &Self) -> Ordering {
        self.alpha
            .total_cmp(&other.alpha)
            .then(self.n_added.cmp(&other.n_added))
    }
}

impl PartialEq for DesignPoint {
    fn eq(&self, other: &Self) -> bool {
        self.alpha.to_bits() == other.alpha.to_bits() && self.n_added == other.n_added
    }
}

impl Eq for DesignPoint {}

impl Hash for DesignPoint {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.alpha.to_bits().hash(state);
        self.n_added.hash(state);
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(alpha={}, n_added={})", self.alpha, self.n_added)
    }
}

/// The design lattice: `alpha_steps` evenly spaced weights on `[0, 1]`
/// crossed with `0..=max_added` recruits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub max_added: u32,
    pub alpha_steps: usize,
}

impl DesignSpace {
    pub fn new(max_added: u32, alpha_steps: usize) -> Result<Self, DesignError> {
        if alpha_steps == 0 {
            return Err(DesignError::GridTooSmall(alpha_steps));
        }
        Ok(Self { max_added, alpha_steps })
    }

    pub fn len(&self) -> usize {
        self.alpha_steps * (self.max_added as usize + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alpha_at(&self, i: usize) -> f64 {
        if self.alpha_steps == 1 {
            return 0.0;
        }
        i as f64 / (self.alpha_steps - 1) as f64
    }

    /// Nearest lattice weight.
    pub fn snap_alpha(&self, alpha: f64) -> f64 {
        let i = (alpha.clamp(0.0, 1.0) * (self.alpha_steps - 1) as f64).round() as usize;
        self.alpha_at(i)
    }

    /// Lattice point `index`, alpha-major then recruit count.
    pub fn point(&self, index: usize) -> DesignPoint {
        let per_alpha = self.max_added as usize + 1;
        DesignPoint {
            alpha: self.alpha_at(index / per_alpha),
            n_added: (index % per_alpha) as u32,
        }
    }

    pub fn index_of(&self, design: &DesignPoint) -> Option<usize> {
        if design.n_added > self.max_added || !(0.0..=1.0).contains(&design.alpha) {
            return None;
        }
        let i = (design.alpha * (self.alpha_steps - 1) as f64).round() as usize;
        if self.alpha_at(i).to_bits() != design.alpha.to_bits() {
            return None;
        }
        Some(i * (self.max_added as usize + 1) + design.n_added as usize)
    }

    pub fn contains(&self, design: &DesignPoint) -> bool {
        self.index_of(design).is_some()
    }

    pub fn check(&self, design: &DesignPoint) -> Result<(), DesignError> {
        if design.n_added > self.max_added {
            return Err(DesignError::TooManyAdded { n: design.n_added, max: self.max_added });
        }
        if !(0.0..=1.0).contains(&design.alpha) {
            return Err(DesignError::AlphaOutOfRange(design.alpha));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Vec<DesignPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Kernel inputs on the unit square: alpha as is, recruits divided by
    /// the maximum.
    pub fn features<T: Scalar>(&self, design: &DesignPoint) -> [T; 2] {
        let n = if self.max_added == 0 {
            0.0
        } else {
            design.n_added as f64 / self.max_added as f64
        };
        [T::lit(design.alpha), T::lit(n)]
    }

    pub fn lower_corner(&self) -> DesignPoint {
        DesignPoint { alpha: 0.0, n_added: 0 }
    }

    pub fn upper_corner(&self) -> DesignPoint {
        DesignPoint { alpha: self.alpha_at(self.alpha_steps - 1), n_added: self.max_added }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_round_trips_indices() {
        let space = DesignSpace::new(3, 101).unwrap();
        assert_eq!(space.len(), 404);
        for i in 0..space.len() {
            assert_eq!(space.index_of(&space.point(i)), Some(i));
        }
        assert_eq!(space.point(0), space.lower_corner());
        assert_eq!(space.point(403), space.upper_corner());
    }

    #[test]
    fn off_lattice_points_are_rejected() {
        let space = DesignSpace::new(3, 101).unwrap();
        assert!(!space.contains(&DesignPoint { alpha: 0.005, n_added: 1 }));
        assert!(!space.contains(&DesignPoint { alpha: 0.5, n_added: 4 }));
        assert!(space.contains(&DesignPoint { alpha: space.snap_alpha(0.004), n_added: 0 }));
        assert!(DesignPoint::new(1.5, 0).is_err());
        assert!(DesignSpace::new(3, 0).is_err());
        let single = DesignSpace::new(0, 1).unwrap();
        assert_eq!(single.lattice(), vec![DesignPoint { alpha: 0.0, n_added: 0 }]);
    }

    #[test]
    fn features_are_normalized() {
        let space = DesignSpace::new(4, 11).unwrap();
        let f: [f64; 2] = space.features(&DesignPoint { alpha: 0.3, n_added: 2 });
        assert_eq!(f, [0.3, 0.5]);
    }

    #[test]
    fn tie_order_prefers_low_alpha_then_few_recruits() {
        let a = DesignPoint { alpha: 0.1, n_added: 3 };
        let b = DesignPoint { alpha: 0.2, n_added: 0 };
        let c = DesignPoint { alpha: 0.1, n_added: 1 };
        assert_eq!(a.tie_order(&b), Ordering::Less);
        assert_eq!(c.tie_order(&a), Ordering::Less);
    }
}
