use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::{Grid, SpectralError};
use crate::rng::standard_normal;

/// Fourier-series coefficients of a real (scalar or two-component) field.
///
/// `f(x) = Σ_k f̂(k) e^{ik·x}`; components are stored back to back.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    components: usize,
    data: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_shape(&other.grid) && self.components == other.components && self.data == other.data
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>, components: usize) -> Self {
        assert!(components == 1 || components == 2, "fields have 1 or 2 components");
        Self { grid: grid.clone(), components, data: vec![Complex64::default(); components * grid.len()] }
    }

    pub fn scalar(grid: &Arc<Grid>) -> Self {
        Self::zeros(grid, 1)
    }

    pub fn from_coefficients(grid: &Arc<Grid>, components: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), components * grid.len());
        let mut f = Self { grid: grid.clone(), components, data };
        f.clear_inactive();
        f
    }

    /// Transform physical samples (one slice per component) to coefficients.
    pub fn from_physical(grid: &Arc<Grid>, samples: &[Vec<f64>]) -> Self {
        let mut f = Self::zeros(grid, samples.len());
        for (c, s) in samples.iter().enumerate() {
            assert_eq!(s.len(), grid.len());
            let buf = f.component_mut(c);
            for (b, &x) in buf.iter_mut().zip(s) {
                *b = Complex64::new(x, 0.0);
            }
            grid.forward(buf);
        }
        f.clear_inactive();
        f.symmetrize();
        f
    }

    pub fn to_physical(&self) -> Vec<Vec<f64>> {
        (0..self.components)
            .map(|c| {
                let mut buf = self.component(c).to_vec();
                self.grid.inverse(&mut buf);
                buf.into_iter().map(|z| z.re).collect()
            })
            .collect()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn coeff(&self, c: usize, kx: i64, ky: i64) -> Complex64 {
        self.grid.index_of(kx, ky).map(|i| self.component(c)[i]).unwrap_or_default()
    }

    /// Set `f̂(k) = value` and `f̂(-k) = conj(value)`.
    pub fn set_mode(&mut self, c: usize, kx: i64, ky: i64, value: Complex64) {
        let i = self.grid.index_of(kx, ky).expect("wavenumber outside the active lattice");
        let j = self.grid.mirror(i);
        let comp = self.component_mut(c);
        if i == j {
            comp[i] = Complex64::new(value.re, 0.0);
        } else {
            comp[i] = value;
            comp[j] = value.conj();
        }
    }

    pub fn check_grid(&self, other: &SpectralField) -> Result<(), SpectralError> {
        if !self.grid.same_shape(&other.grid) {
            return Err(SpectralError::GridMismatch);
        }
        Ok(())
    }

    pub fn expect_components(&self, n: usize) -> Result<(), SpectralError> {
        if self.components != n {
            return Err(SpectralError::ComponentMismatch { expected: n, found: self.components });
        }
        Ok(())
    }

    pub fn is_mean_zero(&self) -> bool {
        (0..self.components).all(|c| self.component(c)[0] == Complex64::default())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest `|f̂(-k) - conj f̂(k)|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for c in 0..self.components {
            let comp = self.component(c);
            for (i, z) in comp.iter().enumerate() {
                worst = worst.max((comp[self.grid.mirror(i)] - z.conj()).norm());
            }
        }
        worst / scale
    }

    /// Largest `|k·û(k)|` relative to `max |k||û|`; two-component fields only.
    pub fn divergence_defect(&self) -> f64 {
        assert_eq!(self.components, 2);
        let (u, v) = (self.component(0), self.component(1));
        let (mut worst, mut scale) = (0.0f64, f64::MIN_POSITIVE);
        for i in 0..self.grid.len() {
            let (kx, ky) = (self.grid.kx(i), self.grid.ky(i));
            worst = worst.max((u[i] * kx + v[i] * ky).norm());
            scale = scale.max(self.grid.k2(i).sqrt() * (u[i].norm() + v[i].norm()));
        }
        worst / scale
    }

    /// Project onto the Hermitian-symmetric subspace (averages `k` with `-k`).
    pub fn symmetrize(&mut self) {
        let n = self.grid.len();
        for c in 0..self.components {
            let comp = &mut self.data[c * n..(c + 1) * n];
            for i in 0..n {
                let j = self.grid.mirror(i);
                if j > i {
                    let avg = 0.5 * (comp[i] + comp[j].conj());
                    comp[i] = avg;
                    comp[j] = avg.conj();
                } else if j == i {
                    comp[i].im = 0.0;
                }
            }
        }
    }

    pub fn clear_inactive(&mut self) {
        let n = self.grid.len();
        for (i, z) in self.data.iter_mut().enumerate() {
            if !self.grid.is_active(i % n) {
                *z = Complex64::default();
            }
        }
    }

    pub fn remove_mean(&mut self) {
        let n = self.grid.len();
        for c in 0..self.components {
            self.data[c * n] = Complex64::default();
        }
    }

    /// Zero everything outside the 2/3-rule band.
    pub fn dealias(&mut self) {
        let n = self.grid.len();
        for (i, z) in self.data.iter_mut().enumerate() {
            if !self.grid.is_dealiased(i % n) {
                *z = Complex64::default();
            }
        }
    }

    pub fn dealiased(mut self) -> Self {
        self.dealias();
        self
    }

    /// Multiply every mode by `symbol(flat index)`, the same for each component.
    pub fn map_symbol(&self, symbol: impl Fn(usize) -> f64) -> Self {
        let n = self.grid.len();
        let data = self.data.iter().enumerate().map(|(i, z)| z * symbol(i % n)).collect();
        Self { grid: self.grid.clone(), components: self.components, data }
    }

    /// L² inner product over the box, `(2π)^d Σ_k Re(f̂ conj ĝ)` summed over components.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert!(self.grid.same_shape(&other.grid) && self.components == other.components);
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a * b.conj()).re).sum();
        s * self.grid.volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `Σ_k w(k) |f̂(k)|² (2π)^d` over all components.
    pub fn weighted_norm_sq(&self, weight: impl Fn(usize) -> f64) -> f64 {
        let n = self.grid.len();
        self.data.iter().enumerate().map(|(i, z)| weight(i % n) * z.norm_sqr()).sum::<f64>() * self.grid.volume()
    }

    /// Random mean-zero real field with Gaussian coefficients of standard deviation
    /// `envelope(|k|)`, restricted to the dealiased band.
    pub fn random_scalar<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, envelope: impl Fn(f64) -> f64) -> Self {
        let mut f = Self::scalar(grid);
        for i in 0..grid.len() {
            let j = grid.mirror(i);
            if j < i || !grid.is_dealiased(i) || grid.k2(i) == 0.0 {
                continue;
            }
            let amp = envelope(grid.k2(i).sqrt());
            let z = Complex64::new(standard_normal(rng), standard_normal(rng)) * amp;
            let comp = f.component_mut(0);
            if i == j {
                comp[i] = Complex64::new(z.re, 0.0);
            } else {
                comp[i] = z;
                comp[j] = z.conj();
            }
        }
        f
    }

    /// Odd (sine-series) random field on a one-dimensional grid.
    pub fn random_odd<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, envelope: impl Fn(f64) -> f64) -> Self {
        assert_eq!(grid.dim(), 1);
        let mut f = Self::scalar(grid);
        for j in 1..grid.modes_x() as i64 {
            let Some(i) = grid.index_of(j, 0) else { break };
            if !grid.is_dealiased(i) {
                break;
            }
            let b = standard_normal(rng) * envelope(j as f64);
            // b sin(jx) = (b / 2i) e^{ijx} - (b / 2i) e^{-ijx}
            f.set_mode(0, j, 0, Complex64::new(0.0, -0.5 * b));
        }
        f
    }

    pub fn scaled(&self, a: f64) -> Self {
        let data = self.data.iter().map(|z| z * a).collect();
        Self { grid: self.grid.clone(), components: self.components, data }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y * a;
        }
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        assert_eq!(self.data.len(), rhs.data.len());
        for (x, y) in self.data.iter_mut().zip(&rhs.data) {
            *x += y;
        }
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        assert_eq!(self.data.len(), rhs.data.len());
        for (x, y) in self.data.iter_mut().zip(&rhs.data) {
            *x -= y;
        }
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scaled(a)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}
