//! Fourier operators on a uniform periodic grid.
//!
//! The Nyquist mode is dropped by every operator so derivatives of real
//! fields stay real and `D` and `D⁻¹` are exactly skew on the grid.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

pub const MIN_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nodes: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(nodes: usize, length: f64) -> Result<Self> {
        let g = Grid { nodes, length };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < MIN_NODES {
            return Err(Error::config("grid", format!("need at least {MIN_NODES} nodes, got {}", self.nodes)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::config("length", "period must be positive"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.nodes as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.nodes).map(|i| i as f64 * h).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.coords().into_iter().map(f).collect()
    }

    /// Trapezoid rule, spectrally accurate for periodic integrands.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.spacing()
    }

    pub fn inner(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum::<f64>() * self.spacing()
    }
}

/// FFT plans and wavenumbers for one grid.
#[derive(Clone)]
pub struct Spectral {
    pub grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `i k` per mode, zero at the mean and Nyquist modes.
    ik: Vec<Complex64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Result<Self> {
        grid.validate()?;
        let m = grid.nodes;
        let mut planner = FftPlanner::new();
        let ik = (0..m)
            .map(|j| {
                let signed = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
                if m % 2 == 0 && j == m / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, 2.0 * PI * signed / grid.length)
                }
            })
            .collect();
        Ok(Spectral { grid, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m), ik })
    }

    pub fn nodes(&self) -> usize {
        self.grid.nodes
    }

    pub fn wavenumbers(&self) -> &[Complex64] {
        &self.ik
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        if self.nodes() % 2 == 0 {
            buf[self.nodes() / 2] = Complex64::new(0.0, 0.0);
        }
        buf
    }

    pub fn inverse(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut buf = hat.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / self.nodes() as f64;
        buf.into_iter().map(|c| c.re * s).collect()
    }

    /// Applies the Fourier multiplier `sym(i k)`.
    pub fn multiply(&self, f: &[f64], sym: impl Fn(Complex64) -> Complex64) -> Vec<f64> {
        let mut hat = self.forward(f);
        for (h, &k) in hat.iter_mut().zip(&self.ik) {
            *h *= sym(k);
        }
        self.inverse(&hat)
    }

    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        self.multiply(f, |k| k.powu(order))
    }

    /// Zero-mean periodic antiderivative of `w − mean(w)`, and the removed mean.
    pub fn antiderivative(&self, w: &[f64]) -> (Vec<f64>, f64) {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let out = self.multiply(w, |k| if k.im == 0.0 { Complex64::new(0.0, 0.0) } else { 1.0 / k });
        (out, mean)
    }

    pub fn d_inv(&self, w: &[f64]) -> Vec<f64> {
        self.antiderivative(w).0
    }

    /// Shift by `s` along the period: `f(l + s)`.
    pub fn translate(&self, f: &[f64], s: f64) -> Vec<f64> {
        self.multiply(f, |k| (k * s).exp())
    }
}
