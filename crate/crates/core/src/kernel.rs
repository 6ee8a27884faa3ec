//! Normalized 2-D blur kernels.

use serde::{Deserialize, Serialize};

use crate::error::{FlareError, Result};

/// Tolerance on the unit-sum invariant.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// A square, odd-sized, nonnegative kernel whose weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlareKernel {
    size: usize,
    weights: Vec<f64>,
}

impl FlareKernel {
    /// Validates and wraps row-major `weights`.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(FlareError::Parameter(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(FlareError::Dimension(format!(
                "kernel has {} weights, expected {}",
                weights.len(),
                size * size
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(FlareError::Parameter(format!("kernel weight {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(FlareError::Parameter(format!("kernel sums to {sum}, expected 1")));
        }
        Ok(Self { size, weights })
    }

    /// Scales nonnegative weights to unit sum.
    pub fn normalized(size: usize, mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(FlareError::Parameter("kernel weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(size, weights)
    }

    pub fn delta(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let mut weights = vec![0.0; size * size];
        weights[size * size / 2] = 1.0;
        Self { size, weights }
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let n = (size * size) as f64;
        Self { size, weights: vec![1.0 / n; size * size] }
    }

    /// Sampled isotropic Gaussian, renormalized over the window.
    /// `sigma == 0` gives the delta kernel.
    pub fn gaussian(size: usize, sigma: f64) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        if sigma <= 0.0 {
            return Self::delta(size);
        }
        let r = (size / 2) as f64;
        let g: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let mut weights = Vec::with_capacity(size * size);
        for gy in &g {
            for gx in &g {
                weights.push(gy * gx);
            }
        }
        Self::normalized(size, weights).expect("gaussian weights are positive")
    }

    /// Smallest odd window that holds `±3σ` of a Gaussian.
    pub fn gaussian_support(sigma: f64) -> usize {
        2 * (3.0 * sigma).ceil().max(0.0) as usize + 1
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the center.
    #[inline]
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }

    /// Full linear convolution `self ∗ other`; the result has size `s1 + s2 - 1`.
    pub fn convolve(&self, other: &FlareKernel) -> FlareKernel {
        let n = self.size + other.size - 1;
        let mut out = vec![0.0; n * n];
        for ay in 0..self.size {
            for ax in 0..self.size {
                let a = self.weights[ay * self.size + ax];
                if a == 0.0 {
                    continue;
                }
                for by in 0..other.size {
                    for bx in 0..other.size {
                        out[(ay + by) * n + ax + bx] += a * other.weights[by * other.size + bx];
                    }
                }
            }
        }
        FlareKernel::normalized(n, out).expect("convolution of unit kernels has unit mass")
    }

    /// Pads with zeros to a larger odd size, keeping the center.
    pub fn padded(&self, size: usize) -> FlareKernel {
        assert!(size >= self.size && size % 2 == 1);
        let off = (size - self.size) / 2;
        let mut weights = vec![0.0; size * size];
        for y in 0..self.size {
            for x in 0..self.size {
                weights[(y + off) * size + x + off] = self.weights[y * self.size + x];
            }
        }
        FlareKernel { size, weights }
    }
}
