use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform rectangular grid on a box in ℝᵈ, together with the codimension of
/// the immersions that live over it.
///
/// Points are stored row-major: axis 0 varies slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    extent: Vec<(f64, f64)>,
    resolution: Vec<usize>,
    codim: usize,
}

impl Chart {
    pub fn new(extent: Vec<(f64, f64)>, resolution: Vec<usize>, codim: usize) -> Result<Self> {
        if extent.len() != resolution.len() {
            return Err(Error::InvalidChart(format!(
                "{} intervals but {} resolutions",
                extent.len(),
                resolution.len()
            )));
        }
        if extent.len() < 2 {
            return Err(Error::InvalidChart("intrinsic dimension must be at least 2".into()));
        }
        if codim < 1 {
            return Err(Error::InvalidChart("codimension must be at least 1".into()));
        }
        for (axis, (&(a, b), &n)) in extent.iter().zip(&resolution).enumerate() {
            if n < 3 {
                return Err(Error::InvalidChart(format!("axis {axis} has {n} < 3 points")));
            }
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidChart(format!("axis {axis} interval [{a}, {b}] is empty")));
            }
        }
        Ok(Self { extent, resolution, codim })
    }

    /// Square chart `[a, b]^d` with `n` points per axis.
    pub fn cube(d: usize, a: f64, b: f64, n: usize, codim: usize) -> Result<Self> {
        Self::new(vec![(a, b); d], vec![n; d], codim)
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    /// Ambient dimension d + k.
    pub fn ambient(&self) -> usize {
        self.dim() + self.codim
    }

    pub fn extent(&self) -> &[(f64, f64)] {
        &self.extent
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (a, b) = self.extent[axis];
        (b - a) / (self.resolution[axis] - 1) as f64
    }

    /// Largest grid spacing.
    pub fn h(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn n_points(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Stride of `axis` in the flat point index.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution[axis + 1..].iter().product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = idx % self.resolution[axis];
            idx /= self.resolution[axis];
        }
        out
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.extent[axis].0 + i as f64 * self.spacing(axis)
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }

    /// Trapezoidal quadrature weight of a grid point, including the cell volume.
    pub fn weight(&self, idx: usize) -> f64 {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(axis, &i)| {
                let h = self.spacing(axis);
                if i == 0 || i + 1 == self.resolution[axis] {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    /// All quadrature weights in point order.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_points()).map(|i| self.weight(i)).collect()
    }

    pub fn contains(&self, multi: &[usize]) -> bool {
        multi.len() == self.dim() && multi.iter().zip(&self.resolution).all(|(&i, &n)| i < n)
    }

    /// Lowest-index corner.
    pub fn origin_index(&self) -> Vec<usize> {
        vec![0; self.dim()]
    }

    /// Index of the grid point nearest the centre of the box.
    pub fn centre_index(&self) -> usize {
        let multi: Vec<usize> = self.resolution.iter().map(|n| n / 2).collect();
        self.index(&multi)
    }

    /// Same box and codimension with a different resolution.
    pub fn with_resolution(&self, resolution: Vec<usize>) -> Result<Self> {
        Self::new(self.extent.clone(), resolution, self.codim)
    }

    pub fn with_codim(&self, codim: usize) -> Result<Self> {
        Self::new(self.extent.clone(), self.resolution.clone(), codim)
    }
}
