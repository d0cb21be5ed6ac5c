use std::sync::Arc;

use super::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Low,
    High,
}

/// Wavenumber-ball splitting `P_N` (|k| ≤ k_c) / `Q_N` (the rest).
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinCutoff {
    cutoff_wavenumber: f64,
    lambda_n: f64,
}

// Lattice |k|² are integers; the slack absorbs k_c = √2 style inputs.
const SHELL_SLACK: f64 = 1e-9;

impl GalerkinCutoff {
    /// `lambda_N` is the first active `|k|²` strictly above `k_c²`
    /// (infinite when the cutoff swallows the whole grid).
    pub fn new(grid: &Arc<Grid>, cutoff_wavenumber: f64) -> Self {
        assert!(cutoff_wavenumber > 0.0, "cutoff wavenumber must be positive");
        let kc2 = cutoff_wavenumber * cutoff_wavenumber;
        let lambda_n = grid
            .eigenvalues()
            .into_iter()
            .find(|&l| l > kc2 + SHELL_SLACK)
            .unwrap_or(f64::INFINITY);
        Self { cutoff_wavenumber, lambda_n }
    }

    pub fn cutoff_wavenumber(&self) -> f64 {
        self.cutoff_wavenumber
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda_n
    }

    pub fn is_low(&self, k2: f64) -> bool {
        k2 <= self.cutoff_wavenumber * self.cutoff_wavenumber + SHELL_SLACK
    }

    pub fn keeps(&self, k2: f64, part: Part) -> bool {
        match part {
            Part::Low => self.is_low(k2),
            Part::High => !self.is_low(k2),
        }
    }
}
