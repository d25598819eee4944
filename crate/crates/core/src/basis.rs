//! Divergence-free Stokes eigenmodes on the torus `[0, 2π)²`.
//!
//! On the periodic box the Stokes eigenproblem has explicit solutions
//!
//! ```text
//! w(x) = (k⊥ / |k|) · trig(k·x) / (√2 π),    k⊥ = (−k₂, k₁),
//! ```
//!
//! with eigenvalue `|k|²` and vanishing eigenpressure. Each wavevector from
//! the canonical half-space contributes a cosine and a sine mode, and the
//! normalization makes every mode a unit vector of `L²(torus)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::SpectralVelocity;
use crate::grid::{grid_point, quadrature_weight};

/// `1 / (√2 π)`, the L² normalization of a single trigonometric mode.
pub const MODE_NORM: f64 = 0.225_079_079_039_276_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    pub fn name(self) -> &'static str {
        match self {
            Parity::Cos => "cos",
            Parity::Sin => "sin",
        }
    }

    #[inline]
    pub fn eval(self, phase: f64) -> f64 {
        match self {
            Parity::Cos => phase.cos(),
            Parity::Sin => phase.sin(),
        }
    }

    /// Derivative of the trigonometric factor with respect to the phase.
    #[inline]
    pub fn eval_derivative(self, phase: f64) -> f64 {
        match self {
            Parity::Cos => -phase.sin(),
            Parity::Sin => phase.cos(),
        }
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cos" | "c" => Ok(Parity::Cos),
            "sin" | "s" => Ok(Parity::Sin),
            other => Err(Error::invalid(format!("unknown parity `{other}`"))),
        }
    }
}

/// One solenoidal eigenfunction of the Stokes operator on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMode {
    pub k: [i32; 2],
    pub parity: Parity,
    pub eigenvalue: f64,
    /// `k⊥ / |k|`, orthogonal to `k`.
    pub direction: [f64; 2],
}

impl BasisMode {
    /// Builds the mode for a canonical wavevector (`k₁ > 0`, or `k₁ = 0` and `k₂ > 0`).
    pub fn new(k: [i32; 2], parity: Parity) -> Result<Self> {
        if !is_canonical(k) {
            return Err(Error::invalid(format!(
                "wavevector ({}, {}) is not in the canonical half-space",
                k[0], k[1]
            )));
        }
        let norm2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        let len = norm2.sqrt();
        Ok(Self {
            k,
            parity,
            eigenvalue: norm2,
            direction: [-(k[1] as f64) / len, k[0] as f64 / len],
        })
    }

    #[inline]
    pub fn phase(&self, x: [f64; 2]) -> f64 {
        self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1]
    }

    /// Velocity of the mode at `x`.
    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let s = self.parity.eval(self.phase(x)) * MODE_NORM;
        [self.direction[0] * s, self.direction[1] * s]
    }

    /// Jacobian `J[c][j] = ∂_j w_c` at `x`.
    #[inline]
    pub fn eval_gradient(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let s = self.parity.eval_derivative(self.phase(x)) * MODE_NORM;
        let k = [self.k[0] as f64, self.k[1] as f64];
        [
            [self.direction[0] * k[0] * s, self.direction[0] * k[1] * s],
            [self.direction[1] * k[0] * s, self.direction[1] * k[1] * s],
        ]
    }

    /// Samples the mode at each point.
    pub fn evaluate(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points.iter().map(|&x| self.eval(x)).collect()
    }

    /// Analytic divergence at `x`; zero up to rounding since `direction·k = 0`.
    pub fn divergence(&self, x: [f64; 2]) -> f64 {
        let g = self.eval_gradient(x);
        g[0][0] + g[1][1]
    }
}

pub fn is_canonical(k: [i32; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

/// The first `N` modes in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet {
    modes: Vec<BasisMode>,
    k_max: usize,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[BasisMode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &BasisMode {
        &self.modes[i]
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// Largest wavevector component magnitude, `max |k_j|`.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Smallest grid that integrates products of two modes exactly.
    pub fn min_grid(&self) -> usize {
        2 * self.k_max + 1
    }

    /// Smallest grid that also integrates triple products exactly.
    pub fn recommended_grid(&self) -> usize {
        3 * self.k_max + 1
    }

    pub fn check_grid(&self, m: usize) -> Result<()> {
        if m < self.min_grid() {
            return Err(Error::Aliasing {
                m,
                required: self.min_grid(),
            });
        }
        Ok(())
    }

    /// Index of the mode with the given wavevector and parity, if present.
    pub fn index_of(&self, k: [i32; 2], parity: Parity) -> Option<usize> {
        self.modes
            .iter()
            .position(|m| m.k == k && m.parity == parity)
    }
}

/// Enumerates the first `n` modes, ordered by eigenvalue with ties broken by
/// descending `k₁`, then ascending `k₂`, cosine before sine.
pub fn enumerate_modes(n: usize) -> Result<Arc<BasisSet>> {
    if n == 0 {
        return Err(Error::invalid("basis size N must be at least 1"));
    }
    // Every canonical wavevector contributes two modes; grow the search box
    // until the disk of radius `reach` holds at least `n` of them.
    let mut reach: i32 = 1;
    loop {
        let r2 = reach * reach;
        let mut ks = Vec::new();
        for k1 in 0..=reach {
            for k2 in -reach..=reach {
                let k = [k1, k2];
                if is_canonical(k) && k1 * k1 + k2 * k2 <= r2 {
                    ks.push(k);
                }
            }
        }
        if 2 * ks.len() >= n {
            ks.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1], -k[0], k[1]));
            let modes: Vec<BasisMode> = ks
                .iter()
                .flat_map(|&k| [Parity::Cos, Parity::Sin].map(|p| BasisMode::new(k, p)))
                .take(n)
                .collect::<Result<_>>()?;
            let k_max = modes
                .iter()
                .map(|m| m.k[0].unsigned_abs().max(m.k[1].unsigned_abs()) as usize)
                .max()
                .unwrap_or(0);
            return Ok(Arc::new(BasisSet { modes, k_max }));
        }
        reach += 1;
    }
}

/// L² projection of an analytic periodic field onto the basis, by
/// trapezoidal quadrature on the uniform `m × m` grid.
pub fn project_velocity<F>(field: F, basis: &Arc<BasisSet>, m: usize) -> Result<SpectralVelocity>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    basis.check_grid(m)?;
    let samples: Vec<[f64; 2]> = (0..m * m)
        .map(|p| field(grid_point(m, p % m, p / m)))
        .collect();
    project_samples(&samples, basis, m)
}

/// Same as [`project_velocity`] for samples already laid out on the grid
/// (index `a + b·m`).
pub fn project_samples(
    samples: &[[f64; 2]],
    basis: &Arc<BasisSet>,
    m: usize,
) -> Result<SpectralVelocity> {
    basis.check_grid(m)?;
    if samples.len() != m * m {
        return Err(Error::invalid(format!(
            "expected {} samples for M={m}, got {}",
            m * m,
            samples.len()
        )));
    }
    let w = quadrature_weight(m);
    let coeffs = basis
        .modes()
        .iter()
        .map(|mode| {
            let mut acc = 0.0;
            for (p, u) in samples.iter().enumerate() {
                let v = mode.eval(grid_point(m, p % m, p / m));
                acc += u[0] * v[0] + u[1] * v[1];
            }
            acc * w
        })
        .collect();
    SpectralVelocity::new(basis.clone(), coeffs)
}

/// Domain side length.
pub const PERIOD: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn norm_constant() {
        assert!((MODE_NORM - 1.0 / (SQRT_2 * PI)).abs() < 1e-16);
    }

    #[test]
    fn four_lowest_modes() {
        let b = enumerate_modes(4).unwrap();
        let got: Vec<_> = b.modes().iter().map(|m| (m.k, m.parity)).collect();
        assert_eq!(
            got,
            vec![
                ([1, 0], Parity::Cos),
                ([1, 0], Parity::Sin),
                ([0, 1], Parity::Cos),
                ([0, 1], Parity::Sin)
            ]
        );
        assert_eq!(b.eigenvalues(), vec![1.0; 4]);
    }

    #[test]
    fn single_mode() {
        let b = enumerate_modes(1).unwrap();
        assert_eq!(b.mode(0).k, [1, 0]);
        assert_eq!(b.mode(0).parity, Parity::Cos);
        assert_eq!(b.mode(0).eigenvalue, 1.0);
    }

    #[test]
    fn nine_modes_match_brute_force() {
        // brute force: all nonzero k in a box, each |k|² counted once per
        // ±k pair and twice for the two parities
        let mut lambdas = Vec::new();
        for k1 in -5i32..=5 {
            for k2 in -5i32..=5 {
                if (k1, k2) != (0, 0) {
                    lambdas.push(k1 * k1 + k2 * k2);
                }
            }
        }
        lambdas.sort();
        let expected: Vec<f64> = lambdas.into_iter().take(9).map(|l| l as f64).collect();
        let b = enumerate_modes(9).unwrap();
        assert_eq!(b.eigenvalues(), expected);
        assert_eq!(expected, vec![1., 1., 1., 1., 2., 2., 2., 2., 4.]);
    }

    #[test]
    fn enumeration_is_deterministic_and_sorted() {
        let a = enumerate_modes(60).unwrap();
        let b = enumerate_modes(60).unwrap();
        assert_eq!(a, b);
        let ev = a.eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        for m in a.modes() {
            assert_eq!(m.eigenvalue, (m.k[0] * m.k[0] + m.k[1] * m.k[1]) as f64);
            assert!(m.eigenvalue >= 1.0);
            let dot = m.direction[0] * m.k[0] as f64 + m.direction[1] * m.k[1] as f64;
            assert_eq!(dot, 0.0);
        }
    }

    #[test]
    fn zero_size_rejected() {
        assert!(enumerate_modes(0).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let c = BasisMode::new([1, 0], Parity::Cos).unwrap();
        let v = c.evaluate(&[[0.0, 0.0]])[0];
        assert_eq!(v[0], 0.0);
        assert!((v[1] - MODE_NORM).abs() < 1e-16);

        let s = BasisMode::new([1, 0], Parity::Sin).unwrap();
        let v = s.eval([0.0, 0.0]);
        assert_eq!(v[0].abs(), 0.0);
        assert_eq!(v[1].abs(), 0.0);

        // k=(1,1), cos at (π/2, π/2): direction (−1,1)/√2, cos(π) = −1
        let d = BasisMode::new([1, 1], Parity::Cos).unwrap();
        let v = d.eval([PI / 2.0, PI / 2.0]);
        let expected = [1.0 / SQRT_2 * MODE_NORM, -1.0 / SQRT_2 * MODE_NORM];
        assert!((v[0] - expected[0]).abs() < 1e-15);
        assert!((v[1] - expected[1]).abs() < 1e-15);
        assert!((v[0] - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gram_matrix_is_identity() {
        let b = enumerate_modes(40).unwrap();
        let m = b.min_grid();
        let w = quadrature_weight(m);
        for i in 0..b.len() {
            for j in 0..b.len() {
                let mut acc = 0.0;
                for p in 0..m * m {
                    let x = grid_point(m, p % m, p / m);
                    let (u, v) = (b.mode(i).eval(x), b.mode(j).eval(x));
                    acc += u[0] * v[0] + u[1] * v[1];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc * w - expect).abs() < 1e-12, "({i},{j}) = {}", acc * w);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let b = enumerate_modes(8).unwrap();
        let m = b.min_grid();
        let p = project_velocity(|x| b.mode(0).eval(x), &b, m).unwrap();
        assert!((p.coeffs()[0] - 1.0).abs() < 1e-13);
        assert!(p.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));

        let field = |x: [f64; 2]| {
            let (u, v) = (b.mode(1).eval(x), b.mode(4).eval(x));
            [3.0 * u[0] + 4.0 * v[0], 3.0 * u[1] + 4.0 * v[1]]
        };
        let p = project_velocity(field, &b, m).unwrap();
        assert!((p.coeffs()[1] - 3.0).abs() < 1e-12);
        assert!((p.coeffs()[4] - 4.0).abs() < 1e-12);
        assert!((p.x_norm() - 5.0).abs() < 1e-12);

        // gradient of cos(x+y) is orthogonal to every solenoidal mode
        let grad = |x: [f64; 2]| {
            let s = -(x[0] + x[1]).sin();
            [s, s]
        };
        let p = project_velocity(grad, &b, 9).unwrap();
        assert!(p.coeffs().iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn undersized_grid_rejected() {
        let b = enumerate_modes(9).unwrap(); // k_max = 2
        assert!(matches!(
            project_velocity(|_| [0.0, 0.0], &b, 4),
            Err(Error::Aliasing { m: 4, required: 5 })
        ));
    }
}
