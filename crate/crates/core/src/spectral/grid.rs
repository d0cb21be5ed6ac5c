use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SpectralError;

/// Periodic box `[0, 2π)^d` sampled on `modes_x × modes_y` points.
///
/// Coefficients are stored row-major, flat index `iy * modes_x + ix`, with the
/// usual FFT wavenumber ordering along each axis. A one-dimensional grid is a
/// grid with `modes_y == 1`.
///
/// Only wavenumbers with `|k_i| < modes_i / 2` are active: the Nyquist row and
/// column are kept at zero by every operation so that Hermitian symmetry is
/// never ambiguous.
pub struct Grid {
    nx: usize,
    ny: usize,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    mirror: Vec<usize>,
    active: Vec<bool>,
    dealiased: Vec<bool>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Option<(FftPlan, FftPlan)>,
}

type FftPlan = Arc<dyn Fft<f64>>;

fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    pub fn new(modes_x: usize, modes_y: usize) -> Result<Arc<Self>, SpectralError> {
        for n in [modes_x, modes_y] {
            if n == 0 || !n.is_power_of_two() {
                return Err(SpectralError::InvalidGrid(format!(
                    "mode counts must be powers of two, got {modes_x}x{modes_y}"
                )));
            }
        }
        if modes_x < 4 {
            return Err(SpectralError::InvalidGrid(format!(
                "need at least 4 modes along x, got {modes_x}"
            )));
        }
        let (nx, ny) = (modes_x, modes_y);
        let len = nx * ny;
        let mut kx = Vec::with_capacity(len);
        let mut ky = Vec::with_capacity(len);
        let mut k2 = Vec::with_capacity(len);
        let mut mirror = Vec::with_capacity(len);
        let mut active = Vec::with_capacity(len);
        let mut dealiased = Vec::with_capacity(len);
        for iy in 0..ny {
            for ix in 0..nx {
                let (a, b) = (wavenumber(ix, nx), wavenumber(iy, ny));
                kx.push(a as f64);
                ky.push(b as f64);
                k2.push((a * a + b * b) as f64);
                mirror.push(((ny - iy) % ny) * nx + (nx - ix) % nx);
                let on = 2 * a.unsigned_abs() < nx as u64 && 2 * b.unsigned_abs() < ny as u64;
                active.push(on);
                // 2/3 rule: drop any |k_i| > n_i / 3
                dealiased.push(on && 3 * a.unsigned_abs() <= nx as u64 && 3 * b.unsigned_abs() <= ny as u64);
            }
        }
        let mut planner = FftPlanner::new();
        let fft_x = planner.plan_fft_forward(nx);
        let ifft_x = planner.plan_fft_inverse(nx);
        let fft_y = (ny > 1).then(|| (planner.plan_fft_forward(ny), planner.plan_fft_inverse(ny)));
        Ok(Arc::new(Self { nx, ny, kx, ky, k2, mirror, active, dealiased, fft_x, ifft_x, fft_y }))
    }

    pub fn modes_x(&self) -> usize {
        self.nx
    }

    pub fn modes_y(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial dimension: 1 when `modes_y == 1`, else 2.
    pub fn dim(&self) -> i32 {
        if self.ny == 1 {
            1
        } else {
            2
        }
    }

    pub fn box_length(&self) -> f64 {
        2.0 * PI
    }

    /// `(2π)^d`, the factor turning coefficient sums into box integrals.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim())
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    pub fn kx(&self, idx: usize) -> f64 {
        self.kx[idx]
    }

    pub fn ky(&self, idx: usize) -> f64 {
        self.ky[idx]
    }

    /// Eigenvalue of `-Δ` at this mode.
    pub fn k2(&self, idx: usize) -> f64 {
        self.k2[idx]
    }

    pub fn k2_table(&self) -> &[f64] {
        &self.k2
    }

    /// Flat index of `-k`.
    pub fn mirror(&self, idx: usize) -> usize {
        self.mirror[idx]
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    pub fn is_dealiased(&self, idx: usize) -> bool {
        self.dealiased[idx]
    }

    pub fn index_of(&self, kx: i64, ky: i64) -> Option<usize> {
        let wrap = |k: i64, n: usize| -> Option<usize> {
            (2 * k.unsigned_abs() < n as u64).then(|| k.rem_euclid(n as i64) as usize)
        };
        Some(wrap(ky, self.ny)? * self.nx + wrap(kx, self.nx)?)
    }

    /// Distinct nonzero eigenvalues `|k|²` over active modes, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = (0..self.len())
            .filter(|&i| self.active[i] && self.k2[i] > 0.0)
            .map(|i| self.k2[i])
            .collect();
        ev.sort_by(f64::total_cmp);
        ev.dedup();
        ev
    }

    /// Physical samples to Fourier-series coefficients (scaled by `1/N`).
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.fft_x.process(data);
        if let Some((fwd, _)) = &self.fft_y {
            self.along_y(data, fwd.as_ref());
        }
        let scale = 1.0 / self.len() as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }

    /// Fourier-series coefficients to physical samples.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.ifft_x.process(data);
        if let Some((_, inv)) = &self.fft_y {
            self.along_y(data, inv.as_ref());
        }
    }

    fn along_y(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let mut t = vec![Complex64::default(); nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                t[ix * ny + iy] = data[iy * nx + ix];
            }
        }
        fft.process(&mut t);
        for ix in 0..nx {
            for iy in 0..ny {
                data[iy * nx + ix] = t[ix * ny + iy];
            }
        }
    }

    /// Physical coordinates of sample `j` (flat index).
    pub fn point(&self, j: usize) -> (f64, f64) {
        let h = 2.0 * PI;
        let (ix, iy) = (j % self.nx, j / self.nx);
        (h * ix as f64 / self.nx as f64, h * iy as f64 / self.ny as f64)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("modes_x", &self.nx).field("modes_y", &self.ny).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid::new(12, 16).is_err());
        assert!(Grid::new(16, 0).is_err());
        assert!(Grid::new(16, 16).is_ok());
        assert!(Grid::new(128, 1).is_ok());
    }

    #[test]
    fn eigenvalues_ascending_from_one() {
        let g = Grid::new(8, 8).unwrap();
        let ev = g.eigenvalues();
        assert_eq!(&ev[..5], &[1.0, 2.0, 4.0, 5.0, 8.0]);
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mirror_and_index() {
        let g = Grid::new(8, 8).unwrap();
        let i = g.index_of(3, -2).unwrap();
        assert_eq!((g.kx(i), g.ky(i)), (3.0, -2.0));
        assert_eq!(g.mirror(i), g.index_of(-3, 2).unwrap());
        assert!(g.index_of(4, 0).is_none());
        assert!(g.is_dealiased(g.index_of(2, 2).unwrap()));
        assert!(!g.is_dealiased(i));
    }

    #[test]
    fn transform_round_trip() {
        let g = Grid::new(16, 8).unwrap();
        let orig: Vec<Complex64> = (0..g.len()).map(|j| Complex64::new((j as f64).sin(), 0.0)).collect();
        let mut d = orig.clone();
        g.forward(&mut d);
        g.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
