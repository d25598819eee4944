//! Density transport by exact backtracking of characteristics.
//!
//! The density at `(x, t)` is `ρ₀ₙ(Φ(0; x, t))`, where `Φ` follows the
//! advecting velocity backwards from `τ = t` to `τ = 0`. Because every
//! sample is an exact evaluation of `ρ₀ₙ`, the computed density can never
//! leave the range of the initial profile.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::fields::{PointSampler, SpectralVelocity};
use crate::grid::{grid_point, GridField};

/// Analytic initial density profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityProfile {
    Constant(f64),
    /// `2 + sin x · sin y`
    Bump,
    /// `2 + sin x`
    Wave,
    /// Smooth profile equal to 1 away from `(π, π)` and vanishing on the
    /// disk of radius [`WELL_INNER`] around it.
    VacuumWell,
}

pub const WELL_INNER: f64 = 0.6;
pub const WELL_OUTER: f64 = 2.4;

impl DensityProfile {
    /// `(ρ, ∇ρ)` at `x`.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        match *self {
            DensityProfile::Constant(c) => (c, [0.0, 0.0]),
            DensityProfile::Bump => {
                let (sx, cx) = x[0].sin_cos();
                let (sy, cy) = x[1].sin_cos();
                (2.0 + sx * sy, [cx * sy, sx * cy])
            }
            DensityProfile::Wave => {
                let (s, c) = x[0].sin_cos();
                (2.0 + s, [c, 0.0])
            }
            DensityProfile::VacuumWell => {
                let dx = wrap(x[0] - PI);
                let dy = wrap(x[1] - PI);
                let r = (dx * dx + dy * dy).sqrt();
                let width = WELL_OUTER - WELL_INNER;
                let (s, ds) = smooth_step((r - WELL_INNER) / width);
                if ds == 0.0 || r == 0.0 {
                    (s, [0.0, 0.0])
                } else {
                    let g = ds / width / r;
                    (s, [g * dx, g * dy])
                }
            }
        }
    }

    /// Certified `(inf, sup)` of the profile.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            DensityProfile::Constant(c) => (c, c),
            DensityProfile::Bump | DensityProfile::Wave => (1.0, 3.0),
            DensityProfile::VacuumWell => (0.0, 1.0),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DensityProfile::Constant(c) => format!("constant:{c}"),
            DensityProfile::Bump => "bump".into(),
            DensityProfile::Wave => "wave".into(),
            DensityProfile::VacuumWell => "vacuum_well".into(),
        }
    }
}

impl std::str::FromStr for DensityProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "constant" => return Ok(DensityProfile::Constant(1.0)),
            "bump" => return Ok(DensityProfile::Bump),
            "wave" => return Ok(DensityProfile::Wave),
            "vacuum_well" | "vacuum-well" => return Ok(DensityProfile::VacuumWell),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("constant:") {
            let c: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad constant density `{v}`")))?;
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::invalid("constant density must be finite and >= 0"));
            }
            return Ok(DensityProfile::Constant(c));
        }
        Err(Error::invalid(format!("unknown density kind `{s}`")))
    }
}

/// Wraps an offset into `[−π, π)`.
#[inline]
fn wrap(d: f64) -> f64 {
    (d + PI).rem_euclid(2.0 * PI) - PI
}

/// C^∞ step from 0 (z ≤ 0) to 1 (z ≥ 1), with its derivative.
fn smooth_step(z: f64) -> (f64, f64) {
    if z <= 0.0 {
        return (0.0, 0.0);
    }
    if z >= 1.0 {
        return (1.0, 0.0);
    }
    let e = |s: f64| (-1.0 / s).exp();
    let (a, b) = (e(z), e(1.0 - z));
    let (da, db) = (a / (z * z), b / ((1.0 - z) * (1.0 - z)));
    let den = a + b;
    (a / den, (da * b + a * db) / (den * den))
}

/// Initial density `ρ₀ₙ = ρ₀ + 1/n + δ cos x cos y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensitySource {
    pub profile: DensityProfile,
    /// `None` means no floor (`n = ∞`).
    pub floor: Option<u64>,
    /// Amplitude of an optional `cos x cos y` perturbation.
    pub perturbation: f64,
}

impl DensitySource {
    pub fn new(profile: DensityProfile) -> Self {
        Self {
            profile,
            floor: None,
            perturbation: 0.0,
        }
    }

    pub fn floor_value(&self) -> f64 {
        self.floor.map_or(0.0, |n| 1.0 / n as f64)
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.eval_with_gradient(x).0
    }

    pub fn eval_with_gradient(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let (mut r, mut g) = self.profile.eval(x);
        r += self.floor_value();
        if self.perturbation != 0.0 {
            let (sx, cx) = x[0].sin_cos();
            let (sy, cy) = x[1].sin_cos();
            let d = self.perturbation;
            r += d * cx * cy;
            g[0] -= d * sx * cy;
            g[1] -= d * cx * sy;
        }
        (r, g)
    }

    /// Certified `(inf ρ₀ₙ, sup ρ₀ₙ)`.
    pub fn bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.profile.range();
        let f = self.floor_value();
        let d = self.perturbation.abs();
        (lo + f - d, hi + f + d)
    }

    /// True when the density is the same constant everywhere.
    pub fn is_uniform(&self) -> bool {
        matches!(self.profile, DensityProfile::Constant(_)) && self.perturbation == 0.0
    }

    pub fn has_vacuum(&self) -> bool {
        self.bounds().0 <= 0.0
    }

    pub fn sample(&self, m: usize) -> GridField {
        GridField::scalar_from_fn(m, |x| self.eval(x))
    }
}

/// Returns the source with floor `ρ₀ + 1/n`; `None` removes the floor.
pub fn lift_floor(source: &DensitySource, n: Option<u64>) -> Result<DensitySource> {
    if n == Some(0) {
        return Err(Error::invalid("floor index n must be at least 1"));
    }
    Ok(DensitySource { floor: n, ..*source })
}

/// A velocity field that can be frozen at a time and sampled at points.
pub trait VelocityField {
    /// End of the time interval on which the field is defined.
    fn horizon(&self) -> f64;

    fn at_time(&self, t: f64) -> Box<dyn Fn([f64; 2]) -> [f64; 2] + '_>;
}

/// Uniform translation; not representable in `X_N` (nonzero mean).
#[derive(Clone, Copy, Debug)]
pub struct ConstantFlow(pub [f64; 2]);

impl VelocityField for ConstantFlow {
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }

    fn at_time(&self, _t: f64) -> Box<dyn Fn([f64; 2]) -> [f64; 2] + '_> {
        let v = self.0;
        Box::new(move |_| v)
    }
}

/// Steady shear `v = (a sin y, 0)`, whose characteristics are
/// `Φ(0; (x, y), t) = (x − a t sin y, y)`.
#[derive(Clone, Copy, Debug)]
pub struct ShearFlow {
    pub amplitude: f64,
}

impl VelocityField for ShearFlow {
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }

    fn at_time(&self, _t: f64) -> Box<dyn Fn([f64; 2]) -> [f64; 2] + '_> {
        let a = self.amplitude;
        Box::new(move |x| [a * x[1].sin(), 0.0])
    }
}

/// Time-indexed coefficients with their time derivatives, evaluated
/// between nodes by cubic Hermite interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityHistory {
    basis: Arc<BasisSet>,
    times: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl VelocityHistory {
    pub fn new(
        basis: Arc<BasisSet>,
        times: Vec<f64>,
        coeffs: Vec<Vec<f64>>,
        derivs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = basis.len();
        if times.is_empty() || times.len() != coeffs.len() || times.len() != derivs.len() {
            return Err(Error::invalid("history times, coefficients and derivatives differ in length"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("history times must start at 0 and increase strictly"));
        }
        if coeffs.iter().chain(&derivs).any(|c| c.len() != n) {
            return Err(Error::invalid("history state has the wrong number of coefficients"));
        }
        Ok(Self {
            basis,
            times,
            coeffs,
            derivs,
        })
    }

    /// The field `u` held fixed on `[0, t_end]`.
    pub fn constant(u: &SpectralVelocity, t_end: f64) -> Self {
        let zero = vec![0.0; u.coeffs().len()];
        Self {
            basis: u.basis().clone(),
            times: vec![0.0, t_end],
            coeffs: vec![u.coeffs().to_vec(), u.coeffs().to_vec()],
            derivs: vec![zero.clone(), zero],
        }
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coeffs(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    pub fn derivs(&self, k: usize) -> &[f64] {
        &self.derivs[k]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> SpectralVelocity {
        SpectralVelocity::new(self.basis.clone(), self.coeffs[k].clone())
            .expect("history coefficients match basis")
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let last = self.times.len() - 1;
        if last == 0 {
            return (0, 0.0, 0.0);
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, last) - 1;
        let h = self.times[k + 1] - self.times[k];
        (k, (t - self.times[k]) / h, h)
    }

    /// Coefficients at time `t` (clamped to the stored interval).
    pub fn coeffs_at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, *self.times.last().unwrap());
        if let Ok(k) = self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            return self.coeffs[k].clone();
        }
        let (k, s, h) = self.locate(t);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (f0, f1) = (&self.coeffs[k], &self.coeffs[k + 1]);
        let (d0, d1) = (&self.derivs[k], &self.derivs[k + 1]);
        (0..f0.len())
            .map(|i| h00 * f0[i] + h10 * h * d0[i] + h01 * f1[i] + h11 * h * d1[i])
            .collect()
    }

    /// Time derivative of the Hermite interpolant at `t`.
    pub fn derivs_at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, *self.times.last().unwrap());
        if let Ok(k) = self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            return self.derivs[k].clone();
        }
        let (k, s, h) = self.locate(t);
        let s2 = s * s;
        let h00 = (6.0 * s2 - 6.0 * s) / h;
        let h10 = 3.0 * s2 - 4.0 * s + 1.0;
        let h01 = (-6.0 * s2 + 6.0 * s) / h;
        let h11 = 3.0 * s2 - 2.0 * s;
        let (f0, f1) = (&self.coeffs[k], &self.coeffs[k + 1]);
        let (d0, d1) = (&self.derivs[k], &self.derivs[k + 1]);
        (0..f0.len())
            .map(|i| h00 * f0[i] + h10 * d0[i] + h01 * f1[i] + h11 * d1[i])
            .collect()
    }

    pub fn velocity_at(&self, t: f64) -> SpectralVelocity {
        SpectralVelocity::new(self.basis.clone(), self.coeffs_at(t))
            .expect("history coefficients match basis")
    }

    /// `sup_k ‖f_k − g_k‖_{X_N}` over shared nodes.
    pub fn sup_distance(&self, other: &VelocityHistory) -> Result<f64> {
        if self.times != other.times || self.basis.len() != other.basis.len() {
            return Err(Error::invalid("histories live on different grids"));
        }
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max))
    }
}

impl VelocityField for VelocityHistory {
    fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn at_time(&self, t: f64) -> Box<dyn Fn([f64; 2]) -> [f64; 2] + '_> {
        let mut sampler = PointSampler::new(&self.basis);
        sampler.set_coeffs(&self.basis, &self.coeffs_at(t));
        Box::new(move |x| sampler.eval(x))
    }
}

/// Foot of the characteristic through `(x, t)`, `Φ(0; x, t)`, by classical
/// RK4 with step at most `dtau`. Not reduced modulo the period.
pub fn backtrack<V: VelocityField + ?Sized>(
    field: &V,
    x: [f64; 2],
    t: f64,
    dtau: f64,
) -> Result<[f64; 2]> {
    let mut pts = [x];
    backtrack_many(field, &mut pts, t, dtau)?;
    Ok(pts[0])
}

/// [`backtrack`] applied in place to many points that share `t`; the
/// frozen velocity is built once per RK stage and reused for all points.
pub fn backtrack_many<V: VelocityField + ?Sized>(
    field: &V,
    points: &mut [[f64; 2]],
    t: f64,
    dtau: f64,
) -> Result<()> {
    if !(dtau > 0.0) {
        return Err(Error::invalid("characteristic step dtau must be positive"));
    }
    if !(t >= 0.0) || t > field.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "time {t} outside the velocity history [0, {}]",
            field.horizon()
        )));
    }
    if t == 0.0 {
        return Ok(());
    }
    let n = ((t / dtau) - 1e-9).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let mut v_start = field.at_time(t);
    for s in 0..n {
        let tau = t - s as f64 * h;
        let tau_end = if s + 1 == n { 0.0 } else { tau - h };
        let v_mid = field.at_time(tau - 0.5 * h);
        let v_end = field.at_time(tau_end);
        for p in points.iter_mut() {
            let k1 = v_start(*p);
            let k2 = v_mid([p[0] - 0.5 * h * k1[0], p[1] - 0.5 * h * k1[1]]);
            let k3 = v_mid([p[0] - 0.5 * h * k2[0], p[1] - 0.5 * h * k2[1]]);
            let k4 = v_end([p[0] - h * k3[0], p[1] - h * k3[1]]);
            p[0] -= h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            p[1] -= h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
        v_start = v_end;
        if let Some(bad) = points.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::Divergence {
                t: tau,
                message: format!("non-finite characteristic position {bad:?}"),
            });
        }
    }
    Ok(())
}

/// `ρ(x_ab, t) = ρ₀ₙ(Φ(0; x_ab, t))` on the `m × m` grid.
pub fn density_at<V: VelocityField + ?Sized>(
    source: &DensitySource,
    field: &V,
    m: usize,
    t: f64,
    dtau: f64,
) -> Result<GridField> {
    if source.is_uniform() {
        // ρ₀ₙ is the same at every foot point
        return Ok(GridField::scalar_from_fn(m, |x| source.eval(x)));
    }
    let mut pts: Vec<[f64; 2]> = (0..m * m).map(|p| grid_point(m, p % m, p / m)).collect();
    backtrack_many(field, &mut pts, t, dtau)?;
    GridField::from_values(m, 1, pts.iter().map(|&x| source.eval(x)).collect())
}

/// `‖∇ρ‖_γ` with periodic central differences and trapezoid quadrature.
pub fn grad_density_norm(rho: &GridField, gamma: f64) -> Result<f64> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma must lie in [1, ∞)"));
    }
    if rho.m() < 4 {
        return Err(Error::invalid("finite-difference gradient needs M >= 4"));
    }
    Ok(rho.central_gradient()?.lq_norm(gamma))
}

/// `‖ρ‖_{W^{1,γ}} = ‖ρ‖_γ + ‖∇ρ‖_γ`.
pub fn w1_norm(rho: &GridField, gamma: f64) -> Result<f64> {
    Ok(rho.lq_norm(gamma) + grad_density_norm(rho, gamma)?)
}

/// `∂_t ρ = −u·∇ρ` on the grid, with `∇ρ` by central differences.
pub fn advective_derivative(u: &GridField, rho: &GridField) -> Result<GridField> {
    if u.components() != 2 || rho.components() != 1 || u.m() != rho.m() {
        return Err(Error::invalid("advective derivative needs matching vector and scalar grids"));
    }
    let g = rho.central_gradient()?;
    let vals = (0..rho.len())
        .map(|p| {
            let (v, d) = (u.vec2(p), g.vec2(p));
            -(v[0] * d[0] + v[1] * d[1])
        })
        .collect();
    GridField::from_values(rho.m(), 1, vals)
}

/// `‖∂_t ρ‖_γ` at time `t` for density transported by `field`.
pub fn density_time_derivative_norm<V: VelocityField + ?Sized>(
    source: &DensitySource,
    field: &V,
    m: usize,
    t: f64,
    gamma: f64,
    dtau: f64,
) -> Result<f64> {
    let rho = density_at(source, field, m, t, dtau)?;
    let v = field.at_time(t);
    let u = GridField::vector_from_fn(m, |x| v(x));
    Ok(advective_derivative(&u, &rho)?.lq_norm(gamma))
}

/// One ledger sample for the transport growth bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportSample {
    pub t: f64,
    /// `‖ρ(t)‖_{W^{1,γ}}`
    pub rho_w1: f64,
    /// `‖∇v(t)‖_∞`
    pub grad_v_linf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportCheck {
    pub pass: bool,
    /// Smallest `bound / observed` over the samples (1 for a frozen density).
    pub margin: f64,
    pub worst_t: f64,
}

/// Checks `‖ρ(t)‖_{W^{1,γ}} ≤ exp(∫₀ᵗ ‖∇v‖_∞) ‖ρ₀‖_{W^{1,γ}} · (1 + eps)`
/// at every sample, with the time integral by trapezoid.
pub fn transport_growth_check(samples: &[TransportSample], eps: f64) -> Result<TransportCheck> {
    if samples.is_empty() {
        return Err(Error::invalid("transport check needs at least one sample"));
    }
    if samples
        .iter()
        .any(|s| !(s.t.is_finite() && s.rho_w1.is_finite() && s.grad_v_linf.is_finite()))
    {
        return Err(Error::invalid("transport samples contain missing (non-finite) entries"));
    }
    if samples[0].t != 0.0 {
        return Err(Error::invalid("transport samples must start at t = 0"));
    }
    let rho0 = samples[0].rho_w1;
    let mut integral = 0.0;
    let mut margin = f64::INFINITY;
    let mut worst_t = 0.0;
    let mut pass = true;
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let p = &samples[i - 1];
            integral += 0.5 * (s.t - p.t) * (s.grad_v_linf + p.grad_v_linf);
        }
        let bound = integral.exp() * rho0;
        if s.rho_w1 > bound * (1.0 + eps) {
            pass = false;
        }
        let ratio = if s.rho_w1 == 0.0 { f64::INFINITY } else { bound / s.rho_w1 };
        if ratio < margin {
            margin = ratio;
            worst_t = s.t;
        }
    }
    Ok(TransportCheck {
        pass,
        margin,
        worst_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{enumerate_modes, Parity};
    use std::f64::consts::SQRT_2;

    fn shear_history(t_end: f64) -> VelocityHistory {
        // (sin y, 0) = −√2π · w_{(0,1),sin}
        let b = enumerate_modes(4).unwrap();
        let i = b.index_of([0, 1], Parity::Sin).unwrap();
        let mut c = vec![0.0; 4];
        c[i] = -SQRT_2 * PI;
        VelocityHistory::constant(&SpectralVelocity::new(b, c).unwrap(), t_end)
    }

    #[test]
    fn floor_examples() {
        let s = lift_floor(&DensitySource::new(DensityProfile::Constant(0.0)), Some(10)).unwrap();
        assert!((s.eval([1.0, 2.0]) - 0.1).abs() < 1e-16);
        assert_eq!(s.bounds(), (0.1, 0.1));

        let b = DensitySource::new(DensityProfile::Bump);
        assert_eq!(lift_floor(&b, None).unwrap(), b);
        assert!(lift_floor(&b, Some(0)).is_err());

        // W^{1,γ} distance of the lifted profile: (1/n)(4π²)^{1/γ}
        let well = DensitySource::new(DensityProfile::VacuumWell);
        for &(n, gamma) in &[(10u64, 2.0), (100, 3.0), (1000, 1.5)] {
            let lifted = lift_floor(&well, Some(n)).unwrap();
            let m = 32;
            let diff = lifted.sample(m).zip_map(&well.sample(m), |a, b| a - b).unwrap();
            let d = w1_norm(&diff, gamma).unwrap();
            let expect = (4.0 * PI * PI).powf(1.0 / gamma) / n as f64;
            assert!((d - expect).abs() < 1e-10 * expect.max(1.0), "{d} vs {expect}");
        }
    }

    #[test]
    fn vacuum_well_gradient_matches_finite_differences() {
        let p = DensityProfile::VacuumWell;
        let h = 1e-6;
        for &x in &[[PI + 1.0, PI + 0.3], [PI - 0.5, PI - 0.7], [0.2, 5.9], [PI, PI + 1.5]] {
            let (_, g) = p.eval(x);
            let fx = (p.eval([x[0] + h, x[1]]).0 - p.eval([x[0] - h, x[1]]).0) / (2.0 * h);
            let fy = (p.eval([x[0], x[1] + h]).0 - p.eval([x[0], x[1] - h]).0) / (2.0 * h);
            assert!((fx - g[0]).abs() < 1e-6 && (fy - g[1]).abs() < 1e-6);
        }
        assert_eq!(p.eval([PI, PI]).0, 0.0);
        assert_eq!(p.eval([0.0, 0.0]).0, 1.0);
    }

    #[test]
    fn backtrack_zero_and_constant_velocity() {
        let zero = ConstantFlow([0.0, 0.0]);
        assert_eq!(backtrack(&zero, [1.0, 2.0], 0.7, 0.01).unwrap(), [1.0, 2.0]);
        let b = enumerate_modes(4).unwrap();
        let still = VelocityHistory::constant(&SpectralVelocity::zero(b), 1.0);
        assert_eq!(backtrack(&still, [1.0, 2.0], 0.7, 0.01).unwrap(), [1.0, 2.0]);

        let c = ConstantFlow([1.0, 0.0]);
        let p = backtrack(&c, [1.0, 2.0], 0.3, 0.01).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-14 && (p[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn backtrack_shear_is_fourth_order() {
        let flow = ShearFlow { amplitude: 1.0 };
        let (x, t): ([f64; 2], f64) = ([0.4, 1.1], 1.0);
        let exact = [x[0] - t * x[1].sin(), x[1]];
        // a time-dependent check: use the spectral history of the same shear
        let hist = shear_history(1.0);
        let mut errs = Vec::new();
        for &dtau in &[0.2, 0.1, 0.05] {
            let p = backtrack(&flow, x, t, dtau).unwrap();
            let q = backtrack(&hist, x, t, dtau).unwrap();
            assert!((p[0] - q[0]).abs() < 1e-13);
            errs.push(((p[0] - exact[0]).powi(2) + (p[1] - exact[1]).powi(2)).sqrt());
        }
        // steady shear along y = const is integrated exactly
        assert!(errs.iter().all(|&e| e < 1e-14), "{errs:?}");
    }

    #[test]
    fn backtrack_rotating_flow_order() {
        // a flow whose characteristics curve: v = (sin y, sin x)
        struct Cell;
        impl VelocityField for Cell {
            fn horizon(&self) -> f64 {
                f64::INFINITY
            }
            fn at_time(&self, t: f64) -> Box<dyn Fn([f64; 2]) -> [f64; 2] + '_> {
                Box::new(move |x| [x[1].sin() * (1.0 + t), x[0].sin()])
            }
        }
        let reference = backtrack(&Cell, [0.4, 1.1], 1.0, 1e-4).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&d| {
                let p = backtrack(&Cell, [0.4, 1.1], 1.0, d).unwrap();
                ((p[0] - reference[0]).powi(2) + (p[1] - reference[1]).powi(2)).sqrt()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 3.9, "{errs:?}");
        }
    }

    #[test]
    fn density_examples() {
        let src = DensitySource::new(DensityProfile::Wave);
        let c = ConstantFlow([1.0, 0.0]);
        let r0 = density_at(&src, &c, 8, 0.0, 0.01).unwrap();
        assert_eq!(r0, src.sample(8));
        let t = 0.37;
        let r = density_at(&src, &c, 8, t, 0.01).unwrap();
        for p in 0..64 {
            let x = grid_point(8, p % 8, p / 8);
            assert!((r.values()[p] - (2.0 + (x[0] - t).sin())).abs() < 1e-13);
        }
    }

    #[test]
    fn density_range_is_exact_and_mass_conserved() {
        let src = DensitySource::new(DensityProfile::Bump);
        let hist = shear_history(0.5);
        let m = 32;
        let r0 = density_at(&src, &hist, m, 0.0, 1e-3).unwrap();
        let r = density_at(&src, &hist, m, 0.5, 1e-3).unwrap();
        let (lo, hi) = src.bounds();
        assert!(r.values().iter().all(|&v| v >= lo && v <= hi));
        let (m0, m1) = (r0.integral()[0], r.integral()[0]);
        assert!(((m1 - m0) / m0).abs() < 1e-6, "{m0} {m1}");
    }

    #[test]
    fn grad_density_examples() {
        let c = GridField::scalar_from_fn(16, |_| 3.0);
        assert_eq!(grad_density_norm(&c, 2.0).unwrap(), 0.0);
        let exact = (2.0 * PI * PI).sqrt();
        let mut errs = Vec::new();
        for &m in &[32, 64, 128] {
            let s = GridField::scalar_from_fn(m, |x| x[0].sin());
            errs.push((grad_density_norm(&s, 2.0).unwrap() - exact).abs());
        }
        assert!(errs[2] < 1e-3 * exact);
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errs:?}");
        }
        assert!(grad_density_norm(&GridField::zeros(3, 1), 2.0).is_err());
        assert!(grad_density_norm(&c, 0.5).is_err());
    }

    #[test]
    fn time_derivative_examples() {
        let src = DensitySource::new(DensityProfile::Wave);
        let zero = ConstantFlow([0.0, 0.0]);
        assert_eq!(density_time_derivative_norm(&src, &zero, 16, 0.3, 2.0, 0.01).unwrap(), 0.0);
        let c = ConstantFlow([1.0, 0.0]);
        let m = 256;
        let got = density_time_derivative_norm(&src, &c, m, 0.4, 2.0, 0.01).unwrap();
        let exact = (2.0 * PI * PI).sqrt();
        assert!((got - exact).abs() < 2e-4 * exact);

        // pointwise Hölder bound ‖u·∇ρ‖_γ ≤ ‖u‖_∞ ‖∇ρ‖_γ
        let hist = shear_history(0.5);
        let rho = density_at(&DensitySource::new(DensityProfile::Bump), &hist, 32, 0.5, 0.01).unwrap();
        let v = hist.at_time(0.5);
        let u = GridField::vector_from_fn(32, |x| v(x));
        for gamma in [1.0, 2.0, 4.0] {
            let lhs = advective_derivative(&u, &rho).unwrap().lq_norm(gamma);
            let rhs = u.max_magnitude() * grad_density_norm(&rho, gamma).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn transport_check_examples() {
        let src = DensitySource::new(DensityProfile::Wave);
        let m = 64;
        let w0 = w1_norm(&src.sample(m), 2.0).unwrap();
        let frozen: Vec<_> = (0..5)
            .map(|i| TransportSample {
                t: i as f64 * 0.1,
                rho_w1: w0,
                grad_v_linf: 0.0,
            })
            .collect();
        let r = transport_growth_check(&frozen, 1e-3).unwrap();
        assert!(r.pass);
        assert_eq!(r.margin, 1.0);

        // shear with closed form ρ = 2 + sin(x − t sin y)
        let samples: Vec<_> = (0..=10)
            .map(|i| {
                let t = 0.05 * i as f64;
                let rho = GridField::scalar_from_fn(m, |x| 2.0 + (x[0] - t * x[1].sin()).sin());
                TransportSample {
                    t,
                    rho_w1: w1_norm(&rho, 2.0).unwrap(),
                    grad_v_linf: 1.0,
                }
            })
            .collect();
        assert!(samples.last().unwrap().rho_w1 > samples[0].rho_w1);
        assert!(transport_growth_check(&samples, 1e-3).unwrap().pass);

        let mut bad = samples.clone();
        bad[5].rho_w1 *= 2.0;
        let r = transport_growth_check(&bad, 1e-3).unwrap();
        assert!(!r.pass && r.margin < 1.0);

        let mut missing = samples;
        missing[2].grad_v_linf = f64::NAN;
        assert!(transport_growth_check(&missing, 1e-3).is_err());
        assert!(transport_growth_check(&[], 1e-3).is_err());
    }

    #[test]
    fn characteristics_depend_continuously_on_velocity() {
        let (a, b) = (1.0, 1.1);
        let (fa, fb) = (ShearFlow { amplitude: a }, ShearFlow { amplitude: b });
        let t = 0.8;
        let m = 16;
        let mut worst: f64 = 0.0;
        for p in 0..m * m {
            let x = grid_point(m, p % m, p / m);
            let (pa, pb) = (backtrack(&fa, x, t, 0.01).unwrap(), backtrack(&fb, x, t, 0.01).unwrap());
            worst = worst.max(((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt());
        }
        // |v̄ − v̂|_∞ = |a − b|, ‖∇v̄‖_∞ = a, and C = 1 from Gronwall
        let bound = t * (b - a) * (a * t).exp();
        assert!(worst <= bound, "{worst} > {bound}");
    }

    #[test]
    fn history_interpolation() {
        let b = enumerate_modes(2).unwrap();
        // f(t) = t³ − t: cubic, reproduced exactly by Hermite
        let times = vec![0.0, 0.5, 1.0];
        let f = |t: f64| t * t * t - t;
        let df = |t: f64| 3.0 * t * t - 1.0;
        let h = VelocityHistory::new(
            b,
            times.clone(),
            times.iter().map(|&t| vec![f(t), 2.0 * f(t)]).collect(),
            times.iter().map(|&t| vec![df(t), 2.0 * df(t)]).collect(),
        )
        .unwrap();
        for &t in &[0.0, 0.1, 0.5, 0.77, 1.0] {
            let c = h.coeffs_at(t);
            assert!((c[0] - f(t)).abs() < 1e-14 && (c[1] - 2.0 * f(t)).abs() < 1e-14);
            assert!((h.derivs_at(t)[0] - df(t)).abs() < 1e-13);
        }
        assert_eq!(h.coeffs_at(0.5), vec![f(0.5), 2.0 * f(0.5)]);
    }
}
