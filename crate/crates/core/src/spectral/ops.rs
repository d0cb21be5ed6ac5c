use num_complex::Complex64;

use super::{GalerkinCutoff, Part, SpectralError, SpectralField};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn require_mean_zero(f: &SpectralField, op: &'static str) -> Result<(), SpectralError> {
    if f.is_mean_zero() {
        Ok(())
    } else {
        Err(SpectralError::MeanZeroViolation { op })
    }
}

/// `Λ^s = (-Δ)^{s/2}`: multiplies mode `k` by `|k|^s`. The `k = 0` coefficient
/// is dropped for any `s ≠ 0`; negative powers need a mean-zero input.
pub fn fractional_laplacian(f: &SpectralField, s: f64) -> Result<SpectralField, SpectralError> {
    if s == 0.0 {
        return Ok(f.clone());
    }
    if s < 0.0 {
        require_mean_zero(f, "fractional_laplacian")?;
    }
    let grid = f.grid().clone();
    let half = 0.5 * s;
    Ok(f.map_symbol(|i| {
        let k2 = grid.k2(i);
        if k2 == 0.0 {
            0.0
        } else {
            k2.powf(half)
        }
    }))
}

/// Velocity with curl `xi`: `û(k) = i (k₂, -k₁) ξ̂(k) / |k|²`.
pub fn biot_savart(xi: &SpectralField) -> Result<SpectralField, SpectralError> {
    xi.expect_components(1)?;
    require_mean_zero(xi, "biot_savart")?;
    let grid = xi.grid().clone();
    let mut out = SpectralField::zeros(&grid, 2);
    let src = xi.component(0);
    let n = grid.len();
    let data = out.data_mut();
    for i in 1..n {
        let k2 = grid.k2(i);
        if k2 == 0.0 {
            continue;
        }
        let w = src[i] * I / k2;
        data[i] = w * grid.ky(i);
        data[n + i] = -w * grid.kx(i);
    }
    Ok(out)
}

/// Scalar curl `∂₁u₂ - ∂₂u₁`.
pub fn curl(vel: &SpectralField) -> Result<SpectralField, SpectralError> {
    vel.expect_components(2)?;
    let grid = vel.grid().clone();
    let (u, v) = (vel.component(0), vel.component(1));
    let data = (0..grid.len()).map(|i| I * (v[i] * grid.kx(i) - u[i] * grid.ky(i))).collect();
    Ok(SpectralField::from_coefficients(&grid, 1, data))
}

pub fn gradient(f: &SpectralField) -> Result<SpectralField, SpectralError> {
    f.expect_components(1)?;
    let grid = f.grid().clone();
    let src = f.component(0);
    let mut data: Vec<Complex64> = src.iter().enumerate().map(|(i, z)| I * z * grid.kx(i)).collect();
    data.extend(src.iter().enumerate().map(|(i, z)| I * z * grid.ky(i)));
    Ok(SpectralField::from_coefficients(&grid, 2, data))
}

/// Per-mode projection onto divergence-free fields, `û - k (k·û) / |k|²`.
pub fn leray_project(f: &SpectralField) -> Result<SpectralField, SpectralError> {
    f.expect_components(2)?;
    let grid = f.grid().clone();
    let n = grid.len();
    let mut out = f.clone();
    let data = out.data_mut();
    for i in 0..n {
        let k2 = grid.k2(i);
        if k2 == 0.0 {
            continue;
        }
        let (kx, ky) = (grid.kx(i), grid.ky(i));
        let dot = (data[i] * kx + data[n + i] * ky) / k2;
        data[i] -= dot * kx;
        data[n + i] -= dot * ky;
    }
    Ok(out)
}

/// Pseudo-spectral `vel · ∇scalar`.
///
/// With `dealias` set, inputs and output are restricted to the 2/3-rule band,
/// which makes every retained output coefficient alias-free.
pub fn advect(vel: &SpectralField, scalar: &SpectralField, dealias: bool) -> Result<SpectralField, SpectralError> {
    vel.check_grid(scalar)?;
    vel.expect_components(2)?;
    scalar.expect_components(1)?;
    let grid = scalar.grid().clone();
    let n = grid.len();
    let keep = |i: usize| if dealias { grid.is_dealiased(i) } else { grid.is_active(i) };
    let (u, v, t) = (vel.component(0), vel.component(1), scalar.component(0));
    // pack two real fields per complex transform
    let mut a = vec![Complex64::default(); n];
    let mut b = vec![Complex64::default(); n];
    for i in 0..n {
        if keep(i) {
            a[i] = u[i] + I * v[i];
            let d = I * t[i];
            b[i] = d * grid.kx(i) + I * d * grid.ky(i);
        }
    }
    grid.inverse(&mut a);
    grid.inverse(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = Complex64::new(x.re * y.re + x.im * y.im, 0.0);
    }
    grid.forward(&mut a);
    for (i, z) in a.iter_mut().enumerate() {
        if !keep(i) {
            *z = Complex64::default();
        }
    }
    let mut out = SpectralField::from_coefficients(&grid, 1, a);
    out.symmetrize();
    Ok(out)
}

/// Apply `func` pointwise in physical space; the result is transformed back
/// and restricted to the dealiased band.
pub fn pointwise(f: &SpectralField, func: impl Fn(f64) -> f64) -> SpectralField {
    let grid = f.grid().clone();
    let mut out = SpectralField::zeros(&grid, f.components());
    for c in 0..f.components() {
        let mut buf = f.component(c).to_vec();
        grid.inverse(&mut buf);
        for z in buf.iter_mut() {
            *z = Complex64::new(func(z.re), 0.0);
        }
        grid.forward(&mut buf);
        out.component_mut(c).copy_from_slice(&buf);
    }
    out.dealias();
    out.symmetrize();
    out
}

pub fn galerkin_project(f: &SpectralField, cutoff: &GalerkinCutoff, part: Part) -> SpectralField {
    let grid = f.grid().clone();
    f.map_symbol(|i| if cutoff.keeps(grid.k2(i), part) { 1.0 } else { 0.0 })
}

/// `(Σ_k |k|^{2s} |f̂(k)|² (2π)^d)^{1/2}`; `s = 0` is the plain L² norm.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> Result<f64, SpectralError> {
    if s == 0.0 {
        return Ok(f.norm());
    }
    if s < 0.0 {
        require_mean_zero(f, "sobolev_norm")?;
    }
    let grid = f.grid().clone();
    Ok(f
        .weighted_norm_sq(|i| {
            let k2 = grid.k2(i);
            if k2 == 0.0 {
                0.0
            } else {
                k2.powf(s)
            }
        })
        .sqrt())
}

/// `(∫ f⁴ dx)^{1/4}` by grid quadrature (scalar fields).
pub fn l4_norm(f: &SpectralField) -> f64 {
    let grid = f.grid();
    let phys = f.to_physical();
    let cell = grid.volume() / grid.len() as f64;
    (phys[0].iter().map(|x| x.powi(4)).sum::<f64>() * cell).powf(0.25)
}
