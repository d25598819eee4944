//! Galerkin matrices, the linearized solution map and its Picard fixed point.
//!
//! With the density `ρ` transported by a given velocity `v`, the
//! coefficients of `u = Σ f_i w_i` obey `A f' + (B + Λ) f = 0` where
//! `a_ij = (ρ w_j, w_i)` and `b_ij = (ρ (v·∇) w_j, w_i)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::fields::{leray_pressure, ModeTable, SpectralVelocity};
use crate::grid::{quadrature_weight, GridField};
use crate::quadrature::cumulative_cubic;
use crate::transport::{density_at, DensitySource, VelocityHistory};

pub struct GalerkinMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub min_eigenvalue: f64,
    chol: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for GalerkinMatrices {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GalerkinMatrices")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("lambda", &self.lambda)
            .field("min_eigenvalue", &self.min_eigenvalue)
            .finish()
    }
}

impl GalerkinMatrices {
    /// Assembles `A`, `B`, `Λ` by trapezoid quadrature on the table grid.
    ///
    /// Fails with [`Error::VacuumDegenerate`] when the smallest eigenvalue
    /// of `A` is below `1e-10·tr(A)/N` or the sampled density touches zero.
    pub fn assemble(table: &ModeTable, rho: &GridField, v: &[f64]) -> Result<Self> {
        let basis = table.basis();
        let n = basis.len();
        let m = table.m();
        if rho.m() != m || rho.components() != 1 {
            return Err(Error::invalid("density grid does not match the quadrature grid"));
        }
        if v.len() != n {
            return Err(Error::invalid("advecting velocity has the wrong number of coefficients"));
        }
        let r = rho.values();
        if r.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("density must be nonnegative"));
        }
        let w = quadrature_weight(m);
        let modes = basis.modes();
        let dot = |i: usize, j: usize| {
            let (a, b) = (modes[i].direction, modes[j].direction);
            a[0] * b[0] + a[1] * b[1]
        };

        let mut a = DMatrix::zeros(n, n);
        let mut scratch = vec![0.0; m * m];
        for j in 0..n {
            for (s, (&rp, &pj)) in scratch.iter_mut().zip(r.iter().zip(table.phi(j))) {
                *s = rp * pj;
            }
            for i in 0..n {
                let d = dot(i, j);
                if d == 0.0 {
                    continue;
                }
                let s: f64 = scratch.iter().zip(table.phi(i)).map(|(x, y)| x * y).sum();
                a[(i, j)] = d * w * s;
            }
        }
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = avg;
                a[(j, i)] = avg;
            }
        }

        let mut b = DMatrix::zeros(n, n);
        if v.iter().any(|&c| c != 0.0) {
            let vg = table.synthesize(v);
            let vv = vg.values();
            for j in 0..n {
                let k = [modes[j].k[0] as f64, modes[j].k[1] as f64];
                for (p, s) in scratch.iter_mut().enumerate() {
                    let vk = vv[2 * p] * k[0] + vv[2 * p + 1] * k[1];
                    *s = r[p] * vk * table.psi(j)[p];
                }
                for i in 0..n {
                    let d = dot(i, j);
                    if d == 0.0 {
                        continue;
                    }
                    let s: f64 = scratch.iter().zip(table.phi(i)).map(|(x, y)| x * y).sum();
                    b[(i, j)] = d * w * s;
                }
            }
        }

        let threshold = 1e-10 * a.trace() / n as f64;
        let min_eigenvalue = SymmetricEigen::new(a.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let degenerate = |min_eigenvalue| Error::VacuumDegenerate {
            t: 0.0,
            min_eigenvalue,
            threshold,
        };
        if !(min_eigenvalue > threshold) || rho.min_value() <= 0.0 {
            return Err(degenerate(min_eigenvalue));
        }
        let chol = Cholesky::new(a.clone()).ok_or_else(|| degenerate(min_eigenvalue))?;
        Ok(Self {
            a,
            b,
            lambda: basis.eigenvalues(),
            min_eigenvalue,
            chol,
        })
    }

    /// `f' = −A⁻¹(B + Λ) f` via the Cholesky factor of `A`.
    pub fn ode_rhs(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.lambda.len() {
            return Err(Error::invalid("coefficient vector has the wrong length"));
        }
        let fv = DVector::from_column_slice(f);
        let mut rhs = &self.b * &fv;
        for (r, (&l, &x)) in rhs.iter_mut().zip(self.lambda.iter().zip(f)) {
            *r = -(*r + l * x);
        }
        let sol = self.chol.solve(&rhs);
        Ok(sol.iter().copied().collect())
    }
}

/// Discretization shared by the linearized and nonlinear solves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    pub dtau: f64,
}

impl SolverParams {
    /// Number of steps; the effective step is `t_end / steps`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.steps();
        (0..=n).map(|k| self.t_end * k as f64 / n as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("dt", self.dt), ("T", self.t_end), ("dtau", self.dtau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// Output of one linearized solve: `u` with `∂_t u` at every step time,
/// the transported density there and the coercivity of `A`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub history: VelocityHistory,
    pub densities: Vec<GridField>,
    pub min_eigenvalues: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        self.history.times()
    }

    /// `(‖√ρ u‖₂², ‖∇u‖₂²)` at every step time.
    pub fn energy_terms(&self, table: &ModeTable) -> (Vec<f64>, Vec<f64>) {
        let lam = self.history.basis().eigenvalues();
        let w = quadrature_weight(table.m());
        (0..self.history.len())
            .map(|k| {
                let f = self.history.coeffs(k);
                let u = table.synthesize(f);
                let e: f64 = u
                    .values()
                    .chunks_exact(2)
                    .zip(self.densities[k].values())
                    .map(|(v, r)| r * (v[0] * v[0] + v[1] * v[1]))
                    .sum::<f64>()
                    * w;
                let d: f64 = lam.iter().zip(f).map(|(l, c)| l * c * c).sum();
                (e, d)
            })
            .unzip()
    }

    /// `max_t [‖√ρu‖₂²(t) + 2∫₀ᵗ‖∇u‖₂²] / ‖√ρ₀u₀‖₂² − 1`; zero data gives 0.
    pub fn energy_excess(&self, table: &ModeTable) -> f64 {
        let (e, d) = self.energy_terms(table);
        let int = cumulative_cubic(self.times(), &d);
        let top = e
            .iter()
            .zip(&int)
            .map(|(e, i)| e + 2.0 * i)
            .fold(f64::NEG_INFINITY, f64::max);
        if e[0] == 0.0 {
            if top == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            top / e[0] - 1.0
        }
    }
}

/// The map `v ↦ u`: transports `ρ` along `v_hist` and integrates the
/// coefficient system by classical RK4, reassembling `A`, `B` at each stage.
pub fn solve_linearized(
    table: &ModeTable,
    v_hist: &VelocityHistory,
    source: &DensitySource,
    u0: &SpectralVelocity,
    params: &SolverParams,
) -> Result<Trajectory> {
    params.validate()?;
    let basis = table.basis();
    if u0.basis().len() != basis.len() || v_hist.basis().len() != basis.len() {
        return Err(Error::invalid("initial data, advecting velocity and table use different bases"));
    }
    if v_hist.times().last().copied().unwrap_or(0.0) < params.t_end * (1.0 - 1e-12) {
        return Err(Error::invalid("advecting velocity does not cover [0, T]"));
    }
    let m = table.m();
    let times = params.times();
    let stage = |t: f64| -> Result<(GridField, GalerkinMatrices)> {
        let rho = density_at(source, v_hist, m, t, params.dtau)?;
        let mats = GalerkinMatrices::assemble(table, &rho, &v_hist.coeffs_at(t))
            .map_err(|e| e.at_time(t))?;
        Ok((rho, mats))
    };
    let diverged = |t: f64, f: &[f64]| -> Result<()> {
        if f.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Divergence {
                t,
                message: "non-finite velocity coefficients".into(),
            })
        }
    };

    let n = times.len() - 1;
    let mut coeffs = Vec::with_capacity(n + 1);
    let mut derivs = Vec::with_capacity(n + 1);
    let mut densities = Vec::with_capacity(n + 1);
    let mut min_eigs = Vec::with_capacity(n + 1);

    let mut f = u0.coeffs().to_vec();
    let (mut rho, mut mats) = stage(0.0)?;
    for k in 0..n {
        let (t0, t1) = (times[k], times[k + 1]);
        let h = t1 - t0;
        let k1 = mats.ode_rhs(&f)?;
        diverged(t0, &k1)?;
        coeffs.push(f.clone());
        derivs.push(k1.clone());
        densities.push(rho);
        min_eigs.push(mats.min_eigenvalue);

        let (_, mid) = stage(t0 + 0.5 * h)?;
        let y2: Vec<f64> = f.iter().zip(&k1).map(|(x, d)| x + 0.5 * h * d).collect();
        let k2 = mid.ode_rhs(&y2)?;
        let y3: Vec<f64> = f.iter().zip(&k2).map(|(x, d)| x + 0.5 * h * d).collect();
        let k3 = mid.ode_rhs(&y3)?;
        let (rho_end, end) = stage(t1)?;
        let y4: Vec<f64> = f.iter().zip(&k3).map(|(x, d)| x + h * d).collect();
        let k4 = end.ode_rhs(&y4)?;
        for i in 0..f.len() {
            f[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        diverged(t1, &f)?;
        rho = rho_end;
        mats = end;
    }
    let last = mats.ode_rhs(&f)?;
    diverged(params.t_end, &last)?;
    coeffs.push(f);
    derivs.push(last);
    densities.push(rho);
    min_eigs.push(mats.min_eigenvalue);

    Ok(Trajectory {
        history: VelocityHistory::new(basis.clone(), times, coeffs, derivs)?,
        densities,
        min_eigenvalues: min_eigs,
    })
}

/// Initial Picard iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PicardSeed {
    /// `v⁰ ≡ u₀` for all times.
    Initial,
    Zero,
    /// `v⁰ ≡ s·u₀`.
    Scaled(f64),
}

impl std::str::FromStr for PicardSeed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "initial" => Ok(PicardSeed::Initial),
            "zero" => Ok(PicardSeed::Zero),
            other => match other.strip_prefix("scaled:").map(|v| v.trim().parse::<f64>()) {
                Some(Ok(v)) if v.is_finite() => Ok(PicardSeed::Scaled(v)),
                _ => Err(Error::invalid(format!(
                    "unknown Picard seed `{other}` (initial, zero, scaled:<s>)"
                ))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardParams {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: PicardSeed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardReport {
    pub iterations: usize,
    /// `sup_t ‖v^{m+1} − v^m‖_{X_N}` per iteration.
    pub differences: Vec<f64>,
    /// Ratios of successive differences.
    pub contraction: Vec<f64>,
    /// [`Trajectory::energy_excess`] of every iterate.
    pub energy_excess: Vec<f64>,
}

fn contraction(diffs: &[f64]) -> Vec<f64> {
    diffs
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect()
}

/// Iterates `v^{m+1} = Q[v^m]` until `sup_t ‖v^{m+1} − v^m‖ ≤ tol`.
pub fn picard_solve(
    table: &ModeTable,
    source: &DensitySource,
    u0: &SpectralVelocity,
    params: &SolverParams,
    picard: &PicardParams,
) -> Result<(Trajectory, PicardReport)> {
    if !(picard.tol > 0.0) || picard.max_iter == 0 {
        return Err(Error::invalid("picard_tol and picard_max must be positive"));
    }
    let seed = match picard.seed {
        PicardSeed::Initial => u0.clone(),
        PicardSeed::Zero => SpectralVelocity::zero(u0.basis().clone()),
        PicardSeed::Scaled(s) => SpectralVelocity::new(
            u0.basis().clone(),
            u0.coeffs().iter().map(|c| s * c).collect(),
        )?,
    };
    let mut v = VelocityHistory::constant(&seed, params.t_end);
    let mut diffs = Vec::new();
    let mut excess = Vec::new();
    for it in 1..=picard.max_iter {
        let traj = solve_linearized(table, &v, source, u0, params)?;
        excess.push(traj.energy_excess(table));
        let diff = sup_difference(&traj.history, &v);
        diffs.push(diff);
        if diff <= picard.tol {
            let report = PicardReport {
                iterations: it,
                contraction: contraction(&diffs),
                differences: diffs,
                energy_excess: excess,
            };
            return Ok((traj, report));
        }
        v = traj.history;
    }
    Err(Error::PicardNonConvergence {
        iterations: picard.max_iter,
        last_diff: *diffs.last().unwrap(),
        contraction: contraction(&diffs),
    })
}

/// `sup_k ‖u(t_k) − v(t_k)‖_{X_N}` over the step times of `u`.
pub fn sup_difference(u: &VelocityHistory, v: &VelocityHistory) -> f64 {
    u.times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let vb = v.coeffs_at(t);
            u.coeffs(k)
                .iter()
                .zip(&vb)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `∂_t u` as a field in `X_N`.
pub fn time_derivative(mats: &GalerkinMatrices, u: &SpectralVelocity) -> Result<SpectralVelocity> {
    SpectralVelocity::new(u.basis().clone(), mats.ode_rhs(u.coeffs())?)
}

/// `ρ(∂_t u + (u·∇)u)` on the grid.
pub fn material_momentum(table: &ModeTable, rho: &GridField, f: &[f64], fdot: &[f64]) -> GridField {
    let u = table.synthesize(f);
    let ut = table.synthesize(fdot);
    let j = table.gradient(f);
    let mut out = ut;
    for (p, node) in out.values_mut().chunks_exact_mut(2).enumerate() {
        let (ux, uy) = (u.values()[2 * p], u.values()[2 * p + 1]);
        let g = j.node(p);
        let r = rho.values()[p];
        node[0] = r * (node[0] + ux * g[0] + uy * g[1]);
        node[1] = r * (node[1] + ux * g[2] + uy * g[3]);
    }
    out
}

/// Per-mode residual `(ρ(∂_t u + (u·∇)u), w_i) + (∇u, ∇w_i)` by quadrature.
pub fn galerkin_residual(
    table: &ModeTable,
    rho: &GridField,
    f: &[f64],
    fdot: &[f64],
) -> Result<Vec<f64>> {
    let g = material_momentum(table, rho, f, fdot);
    let proj = table.project(&g)?;
    let lam = table.basis().eigenvalues();
    Ok(proj
        .iter()
        .zip(lam.iter().zip(f))
        .map(|(p, (l, c))| p + l * c)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionIdentity {
    /// `‖Δu − Σ_j (ρ u̇, w_j) w_j‖₂`
    pub residual: f64,
    /// `‖p‖₂` of the pressure recovered from `Δu − ρu̇` (mean removed).
    pub pressure_l2: f64,
}

/// Checks `Δu = Σ_j (ρ(∂_t u + (u·∇)u), w_j) w_j` (eigenpressures vanish on
/// the torus) and recovers the physical pressure.
pub fn projection_identity_residual(
    table: &ModeTable,
    rho: &GridField,
    f: &[f64],
    fdot: &[f64],
) -> Result<ProjectionIdentity> {
    let g = material_momentum(table, rho, f, fdot);
    let lap = table.laplacian(f);
    let proj = table.synthesize(&table.project(&g)?);
    let residual = lap.zip_map(&proj, |a, b| a - b)?.l2_norm();

    let mut r = lap.zip_map(&g, |a, b| a - b)?;
    let mean: Vec<f64> = r.integral().iter().map(|s| s / (4.0 * std::f64::consts::PI.powi(2))).collect();
    for node in r.values_mut().chunks_exact_mut(2) {
        node[0] -= mean[0];
        node[1] -= mean[1];
    }
    let pressure_l2 = leray_pressure(&r)?.l2_norm();
    Ok(ProjectionIdentity {
        residual,
        pressure_l2,
    })
}

/// Convenience for building a table once per run.
pub fn mode_table(basis: &Arc<BasisSet>, m: usize) -> Result<ModeTable> {
    ModeTable::new(basis, m)
}
