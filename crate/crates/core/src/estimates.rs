//! Ledger of norms along a run and the checks built on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ModeTable;
use crate::gronwall::{gronwall_verify, GronwallInput, GronwallVerdict};
use crate::grid::{quadrature_weight, GridField};
use crate::quadrature::{cumulative_cubic, cumulative_trapezoid};
use crate::solver::Trajectory;
use crate::transport::{
    advective_derivative, density_at, grad_density_norm, DensitySource, TransportSample,
};

/// One row per step time; field names are the NDJSON keys and CSV header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub sqrt_rho_u_l2: f64,
    pub grad_u_l2: f64,
    pub hess_u_l2: f64,
    pub sqrt_rho_dt_u_l2: f64,
    pub grad_dt_u_l2: f64,
    pub u_linf: f64,
    pub grad_u_linf: f64,
    pub rho_lgamma: f64,
    pub grad_rho_lgamma: f64,
    pub dt_rho_lgamma: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub mass: f64,
    pub momentum_l2: f64,
    pub t_weighted: f64,
}

impl LedgerRow {
    fn values(&self) -> [f64; 16] {
        [
            self.t,
            self.sqrt_rho_u_l2,
            self.grad_u_l2,
            self.hess_u_l2,
            self.sqrt_rho_dt_u_l2,
            self.grad_dt_u_l2,
            self.u_linf,
            self.grad_u_linf,
            self.rho_lgamma,
            self.grad_rho_lgamma,
            self.dt_rho_lgamma,
            self.min_rho,
            self.max_rho,
            self.mass,
            self.momentum_l2,
            self.t_weighted,
        ]
    }

    pub fn transport_sample(&self) -> TransportSample {
        TransportSample {
            t: self.t,
            rho_w1: self.rho_lgamma + self.grad_rho_lgamma,
            grad_v_linf: self.grad_u_linf,
        }
    }
}

fn sum_weighted(lam: &[f64], c: &[f64], power: i32) -> f64 {
    lam.iter().zip(c).map(|(l, x)| l.powi(power) * x * x).sum()
}

/// `h² Σ ρ |u|²` over the grid.
fn weighted_l2_sq(rho: &GridField, u: &GridField) -> f64 {
    let w = quadrature_weight(rho.m());
    u.values()
        .chunks_exact(2)
        .zip(rho.values())
        .map(|(v, r)| r * (v[0] * v[0] + v[1] * v[1]))
        .sum::<f64>()
        * w
}

/// Builds one ledger row from the state at time `t`.
pub fn record(
    table: &ModeTable,
    t: f64,
    rho: &GridField,
    f: &[f64],
    fdot: &[f64],
    gamma: f64,
) -> Result<LedgerRow> {
    let lam = table.basis().eigenvalues();
    let u = table.synthesize(f);
    let ut = table.synthesize(fdot);
    let grad = table.gradient(f);
    let momentum = {
        let mut m = u.clone();
        for (node, r) in m.values_mut().chunks_exact_mut(2).zip(rho.values()) {
            node[0] *= r;
            node[1] *= r;
        }
        m
    };
    let hess_sq = sum_weighted(&lam, f, 2);
    let rho_dt_sq = weighted_l2_sq(rho, &ut);
    let row = LedgerRow {
        t,
        sqrt_rho_u_l2: weighted_l2_sq(rho, &u).sqrt(),
        grad_u_l2: sum_weighted(&lam, f, 1).sqrt(),
        hess_u_l2: hess_sq.sqrt(),
        sqrt_rho_dt_u_l2: rho_dt_sq.sqrt(),
        grad_dt_u_l2: sum_weighted(&lam, fdot, 1).sqrt(),
        u_linf: u.max_magnitude(),
        grad_u_linf: grad.max_magnitude(),
        rho_lgamma: rho.lq_norm(gamma),
        grad_rho_lgamma: grad_density_norm(rho, gamma)?,
        dt_rho_lgamma: advective_derivative(&u, rho)?.lq_norm(gamma),
        min_rho: rho.min_value(),
        max_rho: rho.max_value(),
        mass: rho.integral()[0],
        momentum_l2: momentum.l2_norm(),
        t_weighted: t * (hess_sq + rho_dt_sq),
    };
    if row.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            t,
            message: "non-finite ledger entry".into(),
        });
    }
    Ok(row)
}

/// Ledger of a converged trajectory.
pub fn build_ledger(table: &ModeTable, traj: &Trajectory, gamma: f64) -> Result<Vec<LedgerRow>> {
    let h = &traj.history;
    (0..h.len())
        .map(|k| record(table, h.times()[k], &traj.densities[k], h.coeffs(k), h.derivs(k), gamma))
        .collect()
}

fn column(ledger: &[LedgerRow], f: impl Fn(&LedgerRow) -> f64) -> Vec<f64> {
    ledger.iter().map(f).collect()
}

fn times(ledger: &[LedgerRow]) -> Vec<f64> {
    column(ledger, |r| r.t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyIdentity {
    /// `|½‖√ρu‖₂²(T) − ½‖√ρ₀u₀‖₂² + ∫₀ᵀ‖∇u‖₂²|`
    pub residual: f64,
    /// Largest residual over all ledger times.
    pub worst: f64,
    /// `½‖√ρ₀u₀‖₂²`
    pub initial_energy: f64,
}

/// Time-integrated energy balance; the dissipation integral uses the
/// fourth-order cumulative rule.
pub fn energy_identity_check(ledger: &[LedgerRow]) -> Result<EnergyIdentity> {
    if ledger.is_empty() {
        return Err(Error::invalid("empty ledger"));
    }
    let t = times(ledger);
    let e: Vec<f64> = column(ledger, |r| 0.5 * r.sqrt_rho_u_l2 * r.sqrt_rho_u_l2);
    let d: Vec<f64> = column(ledger, |r| r.grad_u_l2 * r.grad_u_l2);
    let int = cumulative_cubic(&t, &d);
    let res: Vec<f64> = e.iter().zip(&int).map(|(ek, ik)| (ek - e[0] + ik).abs()).collect();
    Ok(EnergyIdentity {
        residual: *res.last().unwrap(),
        worst: res.iter().copied().fold(0.0, f64::max),
        initial_energy: e[0],
    })
}

/// `log₂` ratios of successive residuals (one entry per halving).
pub fn convergence_orders(residuals: &[f64]) -> Vec<f64> {
    residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// `F(t) = 2M₁‖∇u‖₂² + ∫₀ᵗ (M₁‖√ρ ∂_t u‖₂² + ½‖∇²u‖₂²)`.
pub fn h1_functional(ledger: &[LedgerRow], m1: f64) -> Result<Vec<f64>> {
    if !(m1 > 0.0) {
        return Err(Error::invalid("M1 must be positive"));
    }
    let t = times(ledger);
    let integrand = column(ledger, |r| {
        m1 * r.sqrt_rho_dt_u_l2.powi(2) + 0.5 * r.hess_u_l2.powi(2)
    });
    let int = cumulative_trapezoid(&t, &integrand);
    Ok(ledger
        .iter()
        .zip(&int)
        .map(|(r, i)| 2.0 * m1 * r.grad_u_l2.powi(2) + i)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiccatiFit {
    pub c1: f64,
    /// Interior samples with `F > 0` used in the fit.
    pub samples: usize,
    /// Fraction of those samples with `F' ≤ C₁F³`.
    pub satisfied: f64,
    pub max_ratio: f64,
}

/// Fits `C₁` in `F' ≤ C₁F³` from centered differences, with 1% slack.
pub fn riccati_fit(t: &[f64], f: &[f64]) -> Result<RiccatiFit> {
    if t.len() != f.len() || t.len() < 10 {
        return Err(Error::invalid("Riccati fit needs at least 10 aligned samples"));
    }
    let mut ratios = Vec::new();
    let mut derivs = Vec::new();
    for k in 1..t.len() - 1 {
        if f[k - 1] > 0.0 && f[k] > 0.0 && f[k + 1] > 0.0 {
            let d = (f[k + 1] - f[k - 1]) / (t[k + 1] - t[k - 1]);
            ratios.push(d / f[k].powi(3));
            derivs.push((d, f[k]));
        }
    }
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c1 = if ratios.is_empty() || max_ratio <= 0.0 {
        0.0
    } else {
        1.01 * max_ratio
    };
    let satisfied = if derivs.is_empty() {
        1.0
    } else {
        derivs.iter().filter(|(d, fk)| *d <= c1 * fk.powi(3)).count() as f64 / derivs.len() as f64
    };
    Ok(RiccatiFit {
        c1,
        samples: ratios.len(),
        satisfied,
        max_ratio: if ratios.is_empty() { 0.0 } else { max_ratio },
    })
}

/// `T₀ = (16 C₁ M₁² ‖∇u₀‖₂⁴)⁻¹`; infinite when any factor vanishes.
pub fn existence_time(c1: f64, m1: f64, grad_u0_l2: f64) -> Result<f64> {
    for (name, v) in [("C1", c1), ("M1", m1), ("grad_u0", grad_u0_l2)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("{name} must be finite and nonnegative")));
        }
    }
    let g2 = grad_u0_l2 * grad_u0_l2;
    let den = 16.0 * c1 * m1 * m1 * g2 * g2;
    Ok(if den == 0.0 { f64::INFINITY } else { 1.0 / den })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedH2 {
    /// `sup_t t(‖∇²u‖₂² + ‖√ρ∂_tu‖₂²)` per ledger.
    pub sup_weighted: Vec<f64>,
    /// `∫₀ᵀ t‖∇∂_tu‖₂²` per ledger.
    pub weighted_integral: Vec<f64>,
    /// Ratios of consecutive entries of `sup_weighted`.
    pub sup_ratios: Vec<f64>,
    pub integral_ratios: Vec<f64>,
}

/// t-weighted composites across a refinement sequence of ledgers.
pub fn weighted_h2_check(ledgers: &[&[LedgerRow]]) -> WeightedH2 {
    let sup_weighted: Vec<f64> = ledgers
        .iter()
        .map(|l| l.iter().map(|r| r.t_weighted).fold(0.0, f64::max))
        .collect();
    let weighted_integral: Vec<f64> = ledgers
        .iter()
        .map(|l| {
            let t = times(l);
            let y = column(l, |r| r.t * r.grad_dt_u_l2.powi(2));
            cumulative_trapezoid(&t, &y).last().copied().unwrap_or(0.0)
        })
        .collect();
    let ratio = |v: &[f64]| -> Vec<f64> {
        v.windows(2)
            .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 1.0 } else { w[1] / w[0] })
            .collect()
    };
    WeightedH2 {
        sup_ratios: ratio(&sup_weighted),
        integral_ratios: ratio(&weighted_integral),
        sup_weighted,
        weighted_integral,
    }
}

/// `∫₀ᵀ ‖∇u‖_∞` by trapezoid.
pub fn grad_linf_integral(ledger: &[LedgerRow]) -> f64 {
    let t = times(ledger);
    let y = column(ledger, |r| r.grad_u_linf);
    cumulative_trapezoid(&t, &y).last().copied().unwrap_or(0.0)
}

/// Exact containment of every sampled density in `[inf ρ₀ₙ, sup ρ₀ₙ]`,
/// and bitwise-constant extrema for a uniform source.
pub fn maximum_principle(ledger: &[LedgerRow], source: &DensitySource) -> (bool, f64) {
    let (lo, hi) = source.bounds();
    let mut ok = ledger.iter().all(|r| r.min_rho >= lo && r.max_rho <= hi);
    if source.is_uniform() {
        ok &= ledger
            .iter()
            .all(|r| r.min_rho == ledger[0].min_rho && r.max_rho == ledger[0].max_rho);
    }
    let margin = ledger
        .iter()
        .map(|r| (r.min_rho - lo).min(hi - r.max_rho))
        .fold(f64::INFINITY, f64::min);
    (ok, margin)
}

/// Largest `|mass(t) − mass(0)| / mass(0)`.
pub fn mass_drift(ledger: &[LedgerRow]) -> f64 {
    let m0 = ledger[0].mass;
    ledger
        .iter()
        .map(|r| if m0 == 0.0 { r.mass.abs() } else { ((r.mass - m0) / m0).abs() })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentumContinuity {
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
    /// Least-squares slope of `log norm` against `log t`; `None` when all
    /// norms vanish (exact continuity).
    pub slope: Option<f64>,
    pub decreasing: bool,
    /// `norm(t_min) / norm(T)`.
    pub decay_ratio: f64,
    pub pass: bool,
}

/// Slope floor for the decay exponent of `‖ρu(t) − ρ₀u₀‖₂`.
pub const MOMENTUM_SLOPE_FLOOR: f64 = 0.15;

/// Required `norm(t_min) / norm(T)`.
pub const MOMENTUM_DECAY_RATIO: f64 = 1e-3;

/// `‖(ρu)(t_j) − ρ₀u₀‖₂` at `t_j = T·2^{−j}`, `j = 0..probes`.
pub fn momentum_continuity(
    table: &ModeTable,
    traj: &Trajectory,
    source: &DensitySource,
    probes: usize,
    dtau: f64,
) -> Result<MomentumContinuity> {
    if probes < 4 {
        return Err(Error::invalid("momentum continuity needs at least 5 probe times"));
    }
    let hist = &traj.history;
    let t_end = *hist.times().last().unwrap();
    let m = table.m();
    let momentum = |rho: &GridField, c: &[f64]| {
        let mut u = table.synthesize(c);
        for (node, r) in u.values_mut().chunks_exact_mut(2).zip(rho.values()) {
            node[0] *= r;
            node[1] *= r;
        }
        u
    };
    let p0 = momentum(&traj.densities[0], hist.coeffs(0));
    let mut ts = Vec::with_capacity(probes + 1);
    let mut norms = Vec::with_capacity(probes + 1);
    for j in 0..=probes {
        let t = t_end * 0.5f64.powi(j as i32);
        let rho = density_at(source, hist, m, t, dtau)?;
        let p = momentum(&rho, &hist.coeffs_at(t));
        ts.push(t);
        norms.push(p.zip_map(&p0, |a, b| a - b)?.l2_norm());
    }
    Ok(continuity_summary(ts, norms))
}

/// Fits and classifies a probe table (times decreasing).
pub fn continuity_summary(ts: Vec<f64>, norms: Vec<f64>) -> MomentumContinuity {
    if norms.iter().all(|&x| x == 0.0) {
        return MomentumContinuity {
            t: ts,
            norm: norms,
            slope: None,
            decreasing: true,
            decay_ratio: 0.0,
            pass: true,
        };
    }
    let decreasing = norms.windows(2).all(|w| w[1] <= w[0]);
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(&norms)
        .filter(|(_, &n)| n > 0.0)
        .map(|(&t, &n)| (t.ln(), n.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let decay_ratio = norms.last().unwrap() / norms[0];
    let pass = decreasing
        && decay_ratio <= MOMENTUM_DECAY_RATIO
        && slope.is_some_and(|s| s >= MOMENTUM_SLOPE_FLOOR);
    MomentumContinuity {
        t: ts,
        norm: norms,
        slope,
        decreasing,
        decay_ratio,
        pass,
    }
}

/// Difference curves between a perturbed run (`~`) and a reference (`^`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessCurves {
    pub t: Vec<f64>,
    /// `‖ρ̃ − ρ̂‖_{3/2}`
    pub rho_diff_l32: Vec<f64>,
    /// `‖√ρ̃ (ũ − û)‖₂`
    pub weighted_u_diff_l2: Vec<f64>,
    /// `‖∇(ũ − û)‖₂`
    pub grad_u_diff_l2: Vec<f64>,
}

impl UniquenessCurves {
    pub fn max_difference(&self) -> f64 {
        self.rho_diff_l32
            .iter()
            .chain(&self.weighted_u_diff_l2)
            .chain(&self.grad_u_diff_l2)
            .copied()
            .fold(0.0, f64::max)
    }
}

/// Difference norms of two runs on the same grid and time steps.
pub fn uniqueness_diff(
    table: &ModeTable,
    perturbed: &Trajectory,
    reference: &Trajectory,
) -> Result<UniquenessCurves> {
    let (a, b) = (&perturbed.history, &reference.history);
    if a.times() != b.times() || a.basis().len() != b.basis().len() {
        return Err(Error::invalid("uniqueness runs use different time grids or bases"));
    }
    if perturbed.densities[0].m() != table.m() || reference.densities[0].m() != table.m() {
        return Err(Error::invalid("uniqueness runs use different spatial grids"));
    }
    let lam = table.basis().eigenvalues();
    let mut out = UniquenessCurves {
        t: a.times().to_vec(),
        rho_diff_l32: Vec::new(),
        weighted_u_diff_l2: Vec::new(),
        grad_u_diff_l2: Vec::new(),
    };
    for k in 0..a.len() {
        let (ra, rb) = (&perturbed.densities[k], &reference.densities[k]);
        out.rho_diff_l32.push(ra.zip_map(rb, |x, y| x - y)?.lq_norm(1.5));
        let du: Vec<f64> = a.coeffs(k).iter().zip(b.coeffs(k)).map(|(x, y)| x - y).collect();
        let u = table.synthesize(&du);
        out.weighted_u_diff_l2.push(weighted_l2_sq(ra, &u).sqrt());
        out.grad_u_diff_l2.push(sum_weighted(&lam, &du, 1).sqrt());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessFit {
    pub a: f64,
    pub c: f64,
    pub verdict: GronwallVerdict,
    pub input: GronwallInput,
}

/// Fits `A` and `C` from the runs and feeds `(f, g, G) = (‖ρ̄‖_{3/2},
/// ‖√ρ̃ū‖₂², ‖∇ū‖₂²)` into the Gronwall check with
/// `α = C(‖∇û‖₂² + ‖∇²û‖₂²)` and
/// `β = C(‖∇∂_tû‖₂² + ‖∇û‖₂(‖∇û‖₂² + ‖∇²û‖₂²)^{3/2})`.
pub fn uniqueness_gronwall(
    curves: &UniquenessCurves,
    reference: &[LedgerRow],
    tol: f64,
) -> Result<UniquenessFit> {
    let t = &curves.t;
    if reference.len() != t.len() || reference.iter().zip(t).any(|(r, s)| r.t != *s) {
        return Err(Error::invalid("reference ledger does not match the difference curves"));
    }
    let f = curves.rho_diff_l32.clone();
    let g: Vec<f64> = curves.weighted_u_diff_l2.iter().map(|x| x * x).collect();
    let gg: Vec<f64> = curves.grad_u_diff_l2.iter().map(|x| x * x).collect();
    let h1 = |r: &LedgerRow| r.grad_u_l2.powi(2) + r.hess_u_l2.powi(2);
    let alpha_hat: Vec<f64> = reference.iter().map(h1).collect();
    let beta_hat: Vec<f64> = reference
        .iter()
        .map(|r| r.grad_dt_u_l2.powi(2) + r.grad_u_l2 * h1(r).powf(1.5))
        .collect();

    let mut a_fit: f64 = 0.0;
    let mut c_fit: f64 = 0.0;
    for k in 0..t.len() - 1 {
        let h = t[k + 1] - t[k];
        let df = f[k + 1] - f[k];
        let sq = 0.5 * h * (gg[k].sqrt() + gg[k + 1].sqrt());
        if df > 0.0 && sq > 0.0 {
            a_fit = a_fit.max(df / sq);
        }
        let lhs = g[k + 1] - g[k] + 0.5 * h * (gg[k] + gg[k + 1]);
        let src = |j: usize| alpha_hat[j] * g[j] + beta_hat[j] * f[j] * f[j];
        let rhs = 0.5 * h * (src(k) + src(k + 1));
        if lhs > 0.0 && rhs > 0.0 {
            c_fit = c_fit.max(lhs / rhs);
        }
    }
    let (a_fit, c_fit) = (1.01 * a_fit, 1.01 * c_fit);
    let input = GronwallInput {
        a: a_fit,
        t: t.clone(),
        f,
        g,
        big_g: gg,
        alpha: alpha_hat.iter().map(|x| c_fit * x).collect(),
        beta: beta_hat.iter().map(|x| c_fit * x).collect(),
    };
    let verdict = gronwall_verify(&input, tol)?;
    Ok(UniquenessFit {
        a: a_fit,
        c: c_fit,
        verdict,
        input,
    })
}

/// `‖u_N − u_{N'}‖_{L²(0,T;L²)}` between runs on the same time grid whose
/// bases are nested (the smaller coefficient vector is zero-padded).
pub fn l2_time_difference(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let (ha, hb) = (&a.history, &b.history);
    if ha.times() != hb.times() {
        return Err(Error::invalid("runs use different time grids"));
    }
    let sq: Vec<f64> = (0..ha.len())
        .map(|k| {
            let (x, y) = (ha.coeffs(k), hb.coeffs(k));
            let n = x.len().max(y.len());
            (0..n)
                .map(|i| {
                    let d = x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0);
                    d * d
                })
                .sum()
        })
        .collect();
    Ok(cumulative_trapezoid(ha.times(), &sq).last().copied().unwrap_or(0.0).sqrt())
}
