//! Velocity fields in `X_N`: synthesis on grids, Sobolev-type norms, pointwise
//! evaluation for characteristics, and Helmholtz–Leray pressure recovery.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::basis::{BasisSet, Parity, MODE_NORM};
use crate::error::{Error, Result};
use crate::grid::{quadrature_weight, GridField};

/// Coefficient vector of a field in `X_N = span{w_1, …, w_N}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVelocity {
    basis: Arc<BasisSet>,
    coeffs: Vec<f64>,
}

impl SpectralVelocity {
    pub fn new(basis: Arc<BasisSet>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for a basis of {} modes",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zero(basis: Arc<BasisSet>) -> Self {
        let n = basis.len();
        Self {
            basis,
            coeffs: vec![0.0; n],
        }
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `‖f‖_{X_N}`, the Euclidean norm of the coefficients.
    pub fn x_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `‖∇u‖₂ = (Σ λ_i f_i²)^{1/2}`.
    pub fn h1dot(&self) -> f64 {
        weighted_norm(&self.basis, &self.coeffs, 1)
    }

    /// `‖∇²u‖₂ = (Σ λ_i² f_i²)^{1/2}`.
    pub fn h2dot(&self) -> f64 {
        weighted_norm(&self.basis, &self.coeffs, 2)
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let mut u = [0.0; 2];
        for (mode, c) in self.basis.modes().iter().zip(&self.coeffs) {
            let w = mode.eval(x);
            u[0] += c * w[0];
            u[1] += c * w[1];
        }
        u
    }
}

/// `(Σ λ_i^power f_i²)^{1/2}`.
pub fn weighted_norm(basis: &BasisSet, coeffs: &[f64], power: i32) -> f64 {
    basis
        .modes()
        .iter()
        .zip(coeffs)
        .map(|(m, c)| m.eigenvalue.powi(power) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Mode values on a fixed grid, shared by synthesis and matrix assembly.
///
/// Each mode is `w_i = d_i φ_i` with `φ_i = trig(k_i·x)/(√2π)`; the table
/// stores `φ_i` and its phase derivative `ψ_i`, so that `∇φ_i = k_i ψ_i`.
#[derive(Clone, Debug)]
pub struct ModeTable {
    basis: Arc<BasisSet>,
    m: usize,
    phi: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
}

impl ModeTable {
    pub fn new(basis: &Arc<BasisSet>, m: usize) -> Result<Self> {
        basis.check_grid(m)?;
        let (cos_t, sin_t): (Vec<f64>, Vec<f64>) = (0..m)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / m as f64;
                (th.cos(), th.sin())
            })
            .unzip();
        let mi = m as i64;
        let mut phi = Vec::with_capacity(basis.len());
        let mut psi = Vec::with_capacity(basis.len());
        for mode in basis.modes() {
            let (k1, k2) = (mode.k[0] as i64, mode.k[1] as i64);
            let mut p = Vec::with_capacity(m * m);
            let mut d = Vec::with_capacity(m * m);
            for b in 0..mi {
                for a in 0..mi {
                    let j = (k1 * a + k2 * b).rem_euclid(mi) as usize;
                    let (c, s) = (cos_t[j], sin_t[j]);
                    match mode.parity {
                        Parity::Cos => {
                            p.push(c * MODE_NORM);
                            d.push(-s * MODE_NORM);
                        }
                        Parity::Sin => {
                            p.push(s * MODE_NORM);
                            d.push(c * MODE_NORM);
                        }
                    }
                }
            }
            phi.push(p);
            psi.push(d);
        }
        Ok(Self {
            basis: basis.clone(),
            m,
            phi,
            psi,
        })
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn phi(&self, i: usize) -> &[f64] {
        &self.phi[i]
    }

    pub fn psi(&self, i: usize) -> &[f64] {
        &self.psi[i]
    }

    /// `Σ f_i w_i` at every node.
    pub fn synthesize(&self, coeffs: &[f64]) -> GridField {
        let mut out = GridField::zeros(self.m, 2);
        let vals = out.values_mut();
        for (i, mode) in self.basis.modes().iter().enumerate() {
            let c = coeffs[i];
            if c == 0.0 {
                continue;
            }
            let (dx, dy) = (c * mode.direction[0], c * mode.direction[1]);
            for (node, &p) in vals.chunks_exact_mut(2).zip(&self.phi[i]) {
                node[0] += dx * p;
                node[1] += dy * p;
            }
        }
        out
    }

    /// Jacobian samples `[∂_x u_x, ∂_y u_x, ∂_x u_y, ∂_y u_y]` at every node.
    pub fn gradient(&self, coeffs: &[f64]) -> GridField {
        let mut out = GridField::zeros(self.m, 4);
        let vals = out.values_mut();
        for (i, mode) in self.basis.modes().iter().enumerate() {
            let c = coeffs[i];
            if c == 0.0 {
                continue;
            }
            let (k1, k2) = (mode.k[0] as f64, mode.k[1] as f64);
            let (dx, dy) = (c * mode.direction[0], c * mode.direction[1]);
            let t = [dx * k1, dx * k2, dy * k1, dy * k2];
            for (node, &s) in vals.chunks_exact_mut(4).zip(&self.psi[i]) {
                for (n, tj) in node.iter_mut().zip(&t) {
                    *n += tj * s;
                }
            }
        }
        out
    }

    /// Spectral Laplacian `Δu = −Σ λ_i f_i w_i` on the grid.
    pub fn laplacian(&self, coeffs: &[f64]) -> GridField {
        let scaled: Vec<f64> = self
            .basis
            .modes()
            .iter()
            .zip(coeffs)
            .map(|(m, c)| -m.eigenvalue * c)
            .collect();
        self.synthesize(&scaled)
    }

    /// Quadrature inner products `(g, w_i)` of a vector grid field with each mode.
    pub fn project(&self, g: &GridField) -> Result<Vec<f64>> {
        if g.m() != self.m || g.components() != 2 {
            return Err(Error::invalid("projection needs a vector field on the table grid"));
        }
        let w = quadrature_weight(self.m);
        Ok(self
            .basis
            .modes()
            .iter()
            .enumerate()
            .map(|(i, mode)| {
                let mut acc = 0.0;
                for (node, &p) in g.values().chunks_exact(2).zip(&self.phi[i]) {
                    acc += (node[0] * mode.direction[0] + node[1] * mode.direction[1]) * p;
                }
                acc * w
            })
            .collect())
    }
}

/// Samples `u` on the `m × m` grid.
pub fn synthesize(u: &SpectralVelocity, m: usize) -> Result<GridField> {
    Ok(ModeTable::new(u.basis(), m)?.synthesize(u.coeffs()))
}

/// Samples `∇u` on the grid as a row-major 2×2 tensor field.
pub fn gradient_grid(u: &SpectralVelocity, m: usize) -> Result<GridField> {
    Ok(ModeTable::new(u.basis(), m)?.gradient(u.coeffs()))
}

/// Norms of a velocity field used throughout the estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub h1dot: f64,
    pub h2dot: f64,
    pub linf: f64,
    pub grad_linf: f64,
    pub l6: f64,
}

/// `l2`, `h1dot`, `h2dot` come from the coefficients; the rest are sampled
/// on the grid (max over nodes, trapezoid for `l6`).
pub fn norms(u: &SpectralVelocity, m: usize) -> Result<NormReport> {
    let table = ModeTable::new(u.basis(), m)?;
    Ok(norms_with(&table, u.coeffs()))
}

pub fn norms_with(table: &ModeTable, coeffs: &[f64]) -> NormReport {
    let field = table.synthesize(coeffs);
    let grad = table.gradient(coeffs);
    let basis = table.basis();
    NormReport {
        l2: coeffs.iter().map(|c| c * c).sum::<f64>().sqrt(),
        h1dot: weighted_norm(basis, coeffs, 1),
        h2dot: weighted_norm(basis, coeffs, 2),
        linf: field.max_magnitude(),
        grad_linf: grad.max_magnitude(),
        l6: field.lq_norm(6.0),
    }
}

/// `‖u‖_∞² / (‖∇u‖₂ ‖∇²u‖₂)`, the empirical constant in the
/// Gagliardo–Nirenberg interpolation `‖u‖_∞² ≤ C ‖∇u‖₂ ‖∇²u‖₂`.
pub fn gagliardo_nirenberg_ratio(u: &SpectralVelocity, m: usize) -> Result<f64> {
    let r = norms(u, m)?;
    if r.h1dot == 0.0 {
        return Err(Error::invalid(
            "Gagliardo-Nirenberg ratio is undefined for the zero field",
        ));
    }
    Ok(r.linf * r.linf / (r.h1dot * r.h2dot))
}

/// Recovers the zero-mean scalar `p` whose gradient is the gradient part of
/// `residual`, by solving `Δp = div(residual)` in trigonometric space.
pub fn leray_pressure(residual: &GridField) -> Result<GridField> {
    if residual.components() != 2 {
        return Err(Error::invalid("leray_pressure needs a vector field"));
    }
    let m = residual.m();
    let scale = residual.max_magnitude().max(1.0);
    let area = 4.0 * PI * PI;
    for (c, mean) in residual.integral().iter().enumerate() {
        if (mean / area).abs() > 1e-10 * scale {
            return Err(Error::invalid(format!(
                "residual component {c} has nonzero mean {:e}",
                mean / area
            )));
        }
    }
    let dft = Dft2::new(m);
    let split = |c: usize| -> Vec<f64> {
        residual.values().chunks_exact(2).map(|n| n[c]).collect()
    };
    let rx = dft.forward(&split(0));
    let ry = dft.forward(&split(1));
    let mut p_hat = vec![(0.0, 0.0); m * m];
    for b in 0..m {
        for a in 0..m {
            let (k1, k2) = (dft.wavenumber(a), dft.wavenumber(b));
            if k1 == 0.0 && k2 == 0.0 {
                continue;
            }
            let idx = a + b * m;
            // p̂ = −i (k·r̂) / |k|²
            let dot = (k1 * rx[idx].0 + k2 * ry[idx].0, k1 * rx[idx].1 + k2 * ry[idx].1);
            let k2sum = k1 * k1 + k2 * k2;
            p_hat[idx] = (dot.1 / k2sum, -dot.0 / k2sum);
        }
    }
    let p = dft.inverse_real(&p_hat);
    GridField::from_values(m, 1, p)
}

/// Separable direct DFT on an `m × m` periodic grid; O(m³).
struct Dft2 {
    m: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Dft2 {
    fn new(m: usize) -> Self {
        let (cos, sin) = (0..m)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / m as f64;
                (th.cos(), th.sin())
            })
            .unzip();
        Self { m, cos, sin }
    }

    /// Signed wavenumber for index `j`; the Nyquist index of an even grid is
    /// mapped to 0 so its derivative vanishes.
    fn wavenumber(&self, j: usize) -> f64 {
        let m = self.m;
        if 2 * j == m {
            0.0
        } else if 2 * j < m {
            j as f64
        } else {
            j as f64 - m as f64
        }
    }

    /// `x̂(k) = Σ x_n e^{−2πi k·n/m}`.
    fn forward(&self, x: &[f64]) -> Vec<(f64, f64)> {
        let cx: Vec<(f64, f64)> = x.iter().map(|&v| (v, 0.0)).collect();
        self.transform(&cx, -1.0)
    }

    fn inverse_real(&self, x: &[(f64, f64)]) -> Vec<f64> {
        let n = (self.m * self.m) as f64;
        self.transform(x, 1.0).into_iter().map(|(re, _)| re / n).collect()
    }

    fn transform(&self, x: &[(f64, f64)], sign: f64) -> Vec<(f64, f64)> {
        let m = self.m;
        let mut tmp = vec![(0.0, 0.0); m * m];
        // along a (fastest index)
        for b in 0..m {
            for k in 0..m {
                let mut acc = (0.0, 0.0);
                for a in 0..m {
                    let j = (k * a) % m;
                    let (c, s) = (self.cos[j], sign * self.sin[j]);
                    let v = x[a + b * m];
                    acc.0 += v.0 * c - v.1 * s;
                    acc.1 += v.0 * s + v.1 * c;
                }
                tmp[k + b * m] = acc;
            }
        }
        let mut out = vec![(0.0, 0.0); m * m];
        for a in 0..m {
            for k in 0..m {
                let mut acc = (0.0, 0.0);
                for b in 0..m {
                    let j = (k * b) % m;
                    let (c, s) = (self.cos[j], sign * self.sin[j]);
                    let v = tmp[a + b * m];
                    acc.0 += v.0 * c - v.1 * s;
                    acc.1 += v.0 * s + v.1 * c;
                }
                out[a + k * m] = acc;
            }
        }
        out
    }
}

/// Evaluates a field in `X_N` at arbitrary points.
///
/// Coefficients are folded per wavevector, and `e^{i k·x}` is built from
/// powers of `e^{ix}` and `e^{iy}`, so one evaluation costs two `sin_cos`
/// calls plus a complex multiply per wavevector.
#[derive(Clone, Debug)]
pub struct PointSampler {
    waves: Vec<[i32; 2]>,
    /// wave index of each mode
    mode_wave: Vec<usize>,
    k_max: usize,
    /// per wave: `[a_x, a_y, b_x, b_y]` with `u = Σ a cos θ + b sin θ`
    amps: Vec<[f64; 4]>,
}

const MAX_K: usize = 64;

impl PointSampler {
    pub fn new(basis: &BasisSet) -> Self {
        let mut waves: Vec<[i32; 2]> = Vec::new();
        let mut mode_wave = Vec::with_capacity(basis.len());
        for mode in basis.modes() {
            let idx = match waves.iter().position(|&k| k == mode.k) {
                Some(i) => i,
                None => {
                    waves.push(mode.k);
                    waves.len() - 1
                }
            };
            mode_wave.push(idx);
        }
        assert!(basis.k_max() < MAX_K, "basis too large for PointSampler");
        let amps = vec![[0.0; 4]; waves.len()];
        Self {
            waves,
            mode_wave,
            k_max: basis.k_max(),
            amps,
        }
    }

    /// Loads coefficients for subsequent evaluations.
    pub fn set_coeffs(&mut self, basis: &BasisSet, coeffs: &[f64]) {
        for a in self.amps.iter_mut() {
            *a = [0.0; 4];
        }
        for ((mode, &c), &w) in basis.modes().iter().zip(coeffs).zip(&self.mode_wave) {
            let s = c * MODE_NORM;
            let off = match mode.parity {
                Parity::Cos => 0,
                Parity::Sin => 2,
            };
            self.amps[w][off] += s * mode.direction[0];
            self.amps[w][off + 1] += s * mode.direction[1];
        }
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let km = self.k_max;
        let mut px = [(1.0f64, 0.0f64); MAX_K];
        let mut py = [(1.0f64, 0.0f64); MAX_K];
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        for j in 1..=km {
            let (r, i) = px[j - 1];
            px[j] = (r * cx - i * sx, r * sx + i * cx);
            let (r, i) = py[j - 1];
            py[j] = (r * cy - i * sy, r * sy + i * cy);
        }
        let mut u = [0.0; 2];
        for (k, a) in self.waves.iter().zip(&self.amps) {
            let ex = px[k[0] as usize];
            let ey = if k[1] >= 0 {
                py[k[1] as usize]
            } else {
                let (r, i) = py[(-k[1]) as usize];
                (r, -i)
            };
            let c = ex.0 * ey.0 - ex.1 * ey.1;
            let s = ex.0 * ey.1 + ex.1 * ey.0;
            u[0] += a[0] * c + a[2] * s;
            u[1] += a[1] * c + a[3] * s;
        }
        u
    }
}
