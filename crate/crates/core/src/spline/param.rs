use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Parametric coordinates on a curve, surface or trivariate (one value per direction).
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParametricPoint {
    coords: [f64; 3],
    len: usize,
}

impl ParametricPoint {
    pub fn new(coords: &[f64]) -> Self {
        assert!(coords.len() <= 3, "at most three parametric directions");
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        ParametricPoint {
            coords: c,
            len: coords.len(),
        }
    }

    pub fn curve(u: f64) -> Self {
        Self::new(&[u])
    }

    pub fn surface(u: f64, v: f64) -> Self {
        Self::new(&[u, v])
    }

    pub fn volume(u: f64, v: f64, w: f64) -> Self {
        Self::new(&[u, v, w])
    }

    pub(crate) fn pushed(&self, u: f64) -> Self {
        let mut out = *self;
        out.coords[out.len] = u;
        out.len += 1;
        out
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for ParametricPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords[..self.len]
    }
}

impl DerefMut for ParametricPoint {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.len]
    }
}

impl std::fmt::Debug for ParametricPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl From<Vec<f64>> for ParametricPoint {
    fn from(v: Vec<f64>) -> Self {
        ParametricPoint::new(&v[..v.len().min(3)])
    }
}

impl From<ParametricPoint> for Vec<f64> {
    fn from(p: ParametricPoint) -> Self {
        p.to_vec()
    }
}
