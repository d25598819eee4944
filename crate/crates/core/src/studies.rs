//! Runs and parameter studies driven by a [`RunConfig`].

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimates::{
    build_ledger, energy_identity_check, existence_time, grad_linf_integral, h1_functional,
    l2_time_difference, mass_drift, maximum_principle, momentum_continuity, riccati_fit,
    uniqueness_diff, uniqueness_gronwall, weighted_h2_check, LedgerRow, MomentumContinuity,
    UniquenessCurves, UniquenessFit,
};
use crate::fields::ModeTable;
use crate::grid::GridField;
use crate::io::{write_csv, write_json, write_ndjson, Check};
use crate::solver::{
    galerkin_residual, picard_solve, projection_identity_residual, PicardReport, PicardSeed,
    Trajectory,
};
use crate::transport::{density_at, transport_growth_check, DensityProfile};

pub const ENERGY_INEQUALITY_TOL: f64 = 1e-6;
pub const ENERGY_IDENTITY_TOL: f64 = 1e-6;
pub const GALERKIN_TOL: f64 = 1e-8;
pub const PROJECTION_TOL: f64 = 1e-8;
pub const MASS_TOL: f64 = 1e-6;
pub const TRANSPORT_EPS: f64 = 1e-3;
pub const TAYLOR_TOL: f64 = 1e-6;
pub const UNIQUENESS_DELTA: f64 = 1e-3;
pub const MOMENTUM_PROBES: usize = 12;

pub struct RunOutput {
    pub config: RunConfig,
    pub table: ModeTable,
    pub trajectory: Trajectory,
    pub picard: PicardReport,
    pub ledger: Vec<LedgerRow>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.check == name)
    }

    /// `sup_t ‖∇u‖₂²`
    pub fn sup_grad_sq(&self) -> f64 {
        self.ledger.iter().map(|r| r.grad_u_l2 * r.grad_u_l2).fold(0.0, f64::max)
    }
}

/// Solves the nonlinear scheme, records the ledger and runs every check.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let basis = cfg.basis()?;
    let table = ModeTable::new(&basis, cfg.m)?;
    let u0 = cfg.initial_velocity(&basis)?;
    let (trajectory, picard) = picard_solve(
        &table,
        &cfg.density,
        &u0,
        &cfg.solver_params(),
        &cfg.picard_params(),
    )?;
    let ledger = build_ledger(&table, &trajectory, cfg.gamma)?;
    let mut out = RunOutput {
        config: cfg.clone(),
        table,
        trajectory,
        picard,
        ledger,
        checks: Vec::new(),
    };
    out.checks = run_checks(&out)?;
    Ok(out)
}

fn run_checks(out: &RunOutput) -> Result<Vec<Check>> {
    let cfg = &out.config;
    let (table, traj, ledger) = (&out.table, &out.trajectory, &out.ledger);
    let hist = &traj.history;
    let mut checks = Vec::new();

    let last = *out.picard.differences.last().unwrap();
    checks.push(Check::new(
        "picard_convergence",
        last <= cfg.picard_tol,
        cfg.picard_tol - last,
        json!({
            "iterations": out.picard.iterations,
            "differences": out.picard.differences,
            "contraction": out.picard.contraction,
        }),
    ));

    let excess = out.picard.energy_excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        "energy_inequality",
        excess <= ENERGY_INEQUALITY_TOL,
        ENERGY_INEQUALITY_TOL - excess,
        json!({ "relative_excess_per_iterate": out.picard.energy_excess }),
    ));

    let e = energy_identity_check(ledger)?;
    let tol = ENERGY_IDENTITY_TOL * e.initial_energy;
    checks.push(Check::new(
        "energy_identity",
        e.worst <= tol,
        tol - e.worst,
        serde_json::to_value(e)?,
    ));

    let mut galerkin: f64 = 0.0;
    let mut projection: f64 = 0.0;
    let mut pressure: f64 = 0.0;
    for k in 0..hist.len() {
        let (f, d) = (hist.coeffs(k), hist.derivs(k));
        let r = galerkin_residual(table, &traj.densities[k], f, d)?;
        galerkin = r.iter().fold(galerkin, |m, x| m.max(x.abs()));
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p = projection_identity_residual(table, &traj.densities[k], f, d)?;
        if norm > 0.0 {
            projection = projection.max(p.residual / norm);
        } else if p.residual > 0.0 {
            projection = f64::INFINITY;
        }
        pressure = pressure.max(p.pressure_l2);
    }
    checks.push(Check::new(
        "galerkin_orthogonality",
        galerkin <= GALERKIN_TOL,
        GALERKIN_TOL - galerkin,
        json!({ "max_mode_residual": galerkin }),
    ));
    checks.push(Check::new(
        "projection_identity",
        projection <= PROJECTION_TOL,
        PROJECTION_TOL - projection,
        json!({ "max_relative_residual": projection, "max_pressure_l2": pressure }),
    ));

    let (ok, margin) = maximum_principle(ledger, &cfg.density);
    let (lo, hi) = cfg.density.bounds();
    checks.push(Check::new(
        "maximum_principle",
        ok,
        margin,
        json!({ "inf_rho0": lo, "sup_rho0": hi }),
    ));

    let drift = mass_drift(ledger);
    checks.push(Check::new(
        "mass_conservation",
        drift <= MASS_TOL,
        MASS_TOL - drift,
        json!({ "max_relative_drift": drift }),
    ));

    let samples: Vec<_> = ledger.iter().map(|r| r.transport_sample()).collect();
    let tg = transport_growth_check(&samples, TRANSPORT_EPS)?;
    checks.push(Check::new(
        "transport_growth",
        tg.pass,
        tg.margin - 1.0,
        json!({ "min_bound_ratio": tg.margin, "worst_t": tg.worst_t }),
    ));

    let coercive = traj
        .min_eigenvalues
        .iter()
        .zip(&traj.densities)
        .map(|(&l, r)| l - r.min_value() * (1.0 - 1e-10))
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "mass_matrix_coercivity",
        coercive >= 0.0,
        coercive,
        json!({ "min_eigenvalues": traj.min_eigenvalues }),
    ));

    if ledger.len() >= 10 {
        let f = h1_functional(ledger, cfg.m1)?;
        let t: Vec<f64> = ledger.iter().map(|r| r.t).collect();
        let fit = riccati_fit(&t, &f)?;
        let t0 = existence_time(fit.c1, cfg.m1, ledger[0].grad_u_l2)?;
        checks.push(Check::new(
            "riccati_fit",
            fit.satisfied >= 0.99,
            fit.satisfied - 0.99,
            json!({
                "C1": fit.c1,
                "M1": cfg.m1,
                "samples": fit.samples,
                "existence_time": if t0.is_finite() { json!(t0) } else { json!("unbounded") },
                "horizon_within_existence_time": cfg.t_end <= t0,
            }),
        ));
    }
    Ok(checks)
}

/// Writes `ledger.ndjson`, `ledger.csv`, `checks.ndjson`, `picard.json`
/// and any requested snapshots into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_ndjson(&dir.join("ledger.ndjson"), &out.ledger)?;
    write_csv(&dir.join("ledger.csv"), &out.ledger)?;
    write_ndjson(&dir.join("checks.ndjson"), &out.checks)?;
    write_json(&dir.join("picard.json"), &out.picard_json())?;
    let cfg = &out.config;
    let hist = &out.trajectory.history;
    for &s in &cfg.snapshots {
        let u = out.table.synthesize(&hist.coeffs_at(s));
        let rho = density_at(&cfg.density, hist, cfg.m, s, cfg.dtau)?;
        write_snapshot(&dir.join(format!("snapshot_u_t{s:.6}.txt")), &u)?;
        write_snapshot(&dir.join(format!("snapshot_rho_t{s:.6}.txt")), &rho)?;
    }
    Ok(())
}

fn write_snapshot(path: &Path, g: &GridField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    g.write_snapshot(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

impl RunOutput {
    fn picard_json(&self) -> serde_json::Value {
        json!({
            "iterations": self.picard.iterations,
            "differences": self.picard.differences,
            "contraction": self.picard.contraction,
            "energy_excess": self.picard.energy_excess,
        })
    }
}

/// Single-mode benchmark on a constant density: `f_i(t) = a e^{−λ_i t / c}`.
pub fn taylor(cfg: &RunConfig) -> Result<RunOutput> {
    let c = match cfg.density.profile {
        DensityProfile::Constant(c) if cfg.density.perturbation == 0.0 => c + cfg.density.floor_value(),
        _ => return Err(Error::config("density.kind", "taylor needs a constant density")),
    };
    if c <= 0.0 {
        return Err(Error::config("density.kind", "taylor needs a positive density"));
    }
    if cfg.u0_modes.len() != 1 {
        return Err(Error::config("u0.modes", "taylor needs exactly one mode"));
    }
    let mut out = run(cfg)?;
    let basis = out.table.basis().clone();
    let mode = cfg.u0_modes[0];
    let i = basis.index_of(mode.k, mode.parity).unwrap();
    let lam = basis.mode(i).eigenvalue;
    let a = mode.amplitude;
    let hist = &out.trajectory.history;
    let mut worst: f64 = 0.0;
    for k in 0..hist.len() {
        let t = hist.times()[k];
        let exact = a * (-lam * t / c).exp();
        for (j, &x) in hist.coeffs(k).iter().enumerate() {
            let target = if j == i { exact } else { 0.0 };
            let scale = if a == 0.0 { 1.0 } else { a.abs() };
            worst = worst.max((x - target).abs() / scale);
        }
    }
    out.checks.push(Check::new(
        "taylor_exact",
        worst <= TAYLOR_TOL,
        TAYLOR_TOL - worst,
        json!({ "max_relative_error": worst, "eigenvalue": lam, "density": c }),
    ));
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergeReport {
    pub n_list: Vec<usize>,
    /// `‖u_{N_i} − u_{N_{i+1}}‖_{L²(0,T;L²)}`
    pub differences: Vec<f64>,
    /// `ln(d_i / d_{i+1})`
    pub rates: Vec<f64>,
    pub monotone: bool,
    pub sup_t_weighted: Vec<f64>,
    pub t_weighted_ratios: Vec<f64>,
    pub weighted_dt_integral: Vec<f64>,
    pub grad_linf_integral: Vec<f64>,
    pub t_weighted_within_factor_two: bool,
}

/// N-refinement study on nested bases.
pub fn converge(cfg: &RunConfig, n_list: &[usize], out_dir: Option<&Path>) -> Result<ConvergeReport> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::invalid("converge needs at least three distinct N values"));
    }
    for &n in &ns {
        let mut c = cfg.clone();
        c.n_modes = n;
        let b = c.basis()?;
        c.initial_velocity(&b)?;
    }
    let mut runs = Vec::with_capacity(ns.len());
    for &n in &ns {
        let mut c = cfg.clone();
        c.n_modes = n;
        let out = run(&c)?;
        if let Some(dir) = out_dir {
            write_run(&out, &dir.join(format!("N_{n}")))?;
        }
        runs.push(out);
    }
    let differences = runs
        .windows(2)
        .map(|w| l2_time_difference(&w[0].trajectory, &w[1].trajectory))
        .collect::<Result<Vec<f64>>>()?;
    let rates = differences.windows(2).map(|w| (w[0] / w[1]).ln()).collect();
    let monotone = differences.windows(2).all(|w| w[1] < w[0]);
    let ledgers: Vec<&[LedgerRow]> = runs.iter().map(|r| r.ledger.as_slice()).collect();
    let w = weighted_h2_check(&ledgers);
    let within = w.sup_ratios.iter().all(|&r| (0.5..=2.0).contains(&r));
    let report = ConvergeReport {
        n_list: ns,
        differences,
        rates,
        monotone,
        t_weighted_within_factor_two: within,
        sup_t_weighted: w.sup_weighted,
        t_weighted_ratios: w.sup_ratios,
        weighted_dt_integral: w.weighted_integral,
        grad_linf_integral: ledgers.iter().map(|l| grad_linf_integral(l)).collect(),
    };
    if let Some(dir) = out_dir {
        write_json(&dir.join("converge.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub n: u64,
    /// 0 on success, otherwise the failure's exit code.
    pub exit_code: i32,
    pub error: Option<String>,
    pub sup_grad_sq: Option<f64>,
    pub existence_time: Option<f64>,
    pub momentum: Option<MomentumContinuity>,
    pub all_checks_pass: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// `(max − min) / min` of `sup_t ‖∇u‖₂²` over the successful runs.
    pub sup_grad_variation: Option<f64>,
}

impl SweepReport {
    pub fn all_completed(&self) -> bool {
        self.entries.iter().all(|e| e.exit_code == 0)
    }
}

/// Floor sequence `ρ₀ + 1/n` for a density with vacuum. Failed members
/// are recorded with their exit code and the sweep continues.
pub fn vacuum_sweep(cfg: &RunConfig, n_list: &[u64], out_dir: Option<&Path>) -> Result<SweepReport> {
    let bare = crate::transport::DensitySource {
        floor: None,
        ..cfg.density
    };
    if !bare.has_vacuum() {
        return Err(Error::invalid("vacuum-sweep needs an initial density with vacuum (inf ρ₀ = 0)"));
    }
    let mut ns: Vec<u64> = Vec::new();
    for &n in n_list {
        if n == 0 {
            return Err(Error::invalid("floor index n must be at least 1"));
        }
        if !ns.contains(&n) {
            ns.push(n);
        }
    }
    if ns.is_empty() {
        return Err(Error::invalid("vacuum-sweep needs at least one n"));
    }
    let mut entries = Vec::with_capacity(ns.len());
    for &n in &ns {
        let mut c = cfg.clone();
        c.density.floor = Some(n);
        let res = run(&c).and_then(|out| {
            let mc = momentum_continuity(&out.table, &out.trajectory, &c.density, MOMENTUM_PROBES, c.dtau)?;
            if let Some(dir) = out_dir {
                write_run(&out, &dir.join(format!("n_{n}")))?;
            }
            Ok((out, mc))
        });
        entries.push(match res {
            Ok((out, mc)) => {
                let t0 = out
                    .check("riccati_fit")
                    .and_then(|c| c.details["existence_time"].as_f64())
                    .unwrap_or(f64::INFINITY);
                SweepEntry {
                    n,
                    exit_code: 0,
                    error: None,
                    sup_grad_sq: Some(out.sup_grad_sq()),
                    existence_time: t0.is_finite().then_some(t0),
                    momentum: Some(mc),
                    all_checks_pass: Some(out.all_pass()),
                }
            }
            Err(e) => SweepEntry {
                n,
                exit_code: e.exit_code(),
                error: Some(e.to_string()),
                sup_grad_sq: None,
                existence_time: None,
                momentum: None,
                all_checks_pass: None,
            },
        });
    }
    let sups: Vec<f64> = entries.iter().filter_map(|e| e.sup_grad_sq).collect();
    let sup_grad_variation = if sups.is_empty() {
        None
    } else {
        let lo = sups.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sups.iter().copied().fold(0.0, f64::max);
        Some(if lo == 0.0 { if hi == 0.0 { 0.0 } else { f64::INFINITY } } else { (hi - lo) / lo })
    };
    let report = SweepReport {
        entries,
        sup_grad_variation,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("sweep.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub picard_tol: f64,
    pub seed_curves: UniquenessCurves,
    pub seed_max_difference: f64,
    pub perturbation: f64,
    pub perturbation_curves: UniquenessCurves,
    pub perturbation_fit: UniquenessFit,
    pub checks: Vec<Check>,
}

/// Paired runs: a different Picard seed, and a `δ cos x cos y` density
/// perturbation checked against the Gronwall bound with fitted constants.
pub fn uniqueness(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<UniquenessReport> {
    let base = run(cfg)?;
    let mut seeded = cfg.clone();
    seeded.picard_seed = match cfg.picard_seed {
        PicardSeed::Zero => PicardSeed::Initial,
        _ => PicardSeed::Zero,
    };
    let other = run(&seeded)?;
    let mut perturbed = cfg.clone();
    perturbed.density.perturbation += UNIQUENESS_DELTA;
    let pert = run(&perturbed)?;

    let seed_curves = uniqueness_diff(&base.table, &other.trajectory, &base.trajectory)?;
    let seed_max = seed_curves.max_difference();
    let perturbation_curves = uniqueness_diff(&base.table, &pert.trajectory, &base.trajectory)?;
    let fit = uniqueness_gronwall(&perturbation_curves, &base.ledger, 1e-6)?;

    let limit = 10.0 * cfg.picard_tol;
    let checks = vec![
        Check::new(
            "seed_independence",
            seed_max <= limit,
            limit - seed_max,
            json!({ "max_difference": seed_max, "limit": limit }),
        ),
        Check::new(
            "perturbation_gronwall",
            fit.verdict.pass(),
            fit.verdict.margin(),
            json!({
                "status": fit.verdict.status,
                "A": fit.a,
                "C": fit.c,
                "f_margin": fit.verdict.f_margin,
                "eta_margin": fit.verdict.eta_margin,
                "hypothesis_margin": fit.verdict.hypothesis_margin,
            }),
        ),
    ];
    let report = UniquenessReport {
        picard_tol: cfg.picard_tol,
        seed_curves,
        seed_max_difference: seed_max,
        perturbation: UNIQUENESS_DELTA,
        perturbation_curves,
        perturbation_fit: fit,
        checks,
    };
    if let Some(dir) = out_dir {
        write_run(&base, &dir.join("reference"))?;
        write_run(&other, &dir.join("seed"))?;
        write_run(&pert, &dir.join("perturbed"))?;
        write_ndjson(&dir.join("checks.ndjson"), &report.checks)?;
        write_json(&dir.join("uniqueness.json"), &report)?;
    }
    Ok(report)
}
