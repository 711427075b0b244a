use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// Initial and deformed mesh points; index `i` in both lists is the same material point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshPair {
    initial: Vec<Point>,
    deformed: Vec<Point>,
}

impl MeshPair {
    pub fn new(initial: Vec<Point>, deformed: Vec<Point>) -> Result<Self> {
        if initial.len() != deformed.len() {
            return Err(Error::Mesh {
                line: 0,
                message: format!(
                    "{} initial points but {} deformed points",
                    initial.len(),
                    deformed.len()
                ),
            });
        }
        if initial
            .iter()
            .chain(&deformed)
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Mesh {
                line: 0,
                message: "non-finite coordinate".into(),
            });
        }
        Ok(MeshPair { initial, deformed })
    }

    /// Pair whose deformed state is `f` applied to every initial point.
    pub fn from_map(initial: Vec<Point>, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let deformed = initial.iter().map(f).collect();
        Self::new(initial, deformed)
    }

    pub fn identity(initial: Vec<Point>) -> Self {
        MeshPair {
            deformed: initial.clone(),
            initial,
        }
    }

    pub fn initial(&self) -> &[Point] {
        &self.initial
    }

    pub fn deformed(&self) -> &[Point] {
        &self.deformed
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn displacement(&self, i: usize) -> crate::Vector {
        self.deformed[i] - self.initial[i]
    }

    /// Largest displacement magnitude over all points.
    pub fn max_displacement(&self) -> f64 {
        (0..self.len())
            .map(|i| self.displacement(i).norm())
            .fold(0.0, f64::max)
    }
}
