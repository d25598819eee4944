//! Run configuration in the line-oriented `key = value` format.
//!
//! ```text
//! # two-mode run on a bump density
//! N = 8
//! M = 16
//! dt = 0.01
//! T = 0.2
//! picard_tol = 1e-10
//! picard_max = 50
//! dtau = 0.005
//! density.kind = bump
//! density.floor_n = inf
//! u0.modes = 1,0,cos:0.5, 1,1,sin:0.25
//! ```
//!
//! Optional keys: `snapshots` (comma-separated times), `gamma` (default 2),
//! `picard_seed` (`initial`, `zero`, `scaled:<s>`), `M1` (default 1) and
//! `density.perturbation` (amplitude of a `cos x cos y` perturbation).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::basis::{enumerate_modes, is_canonical, BasisSet, Parity};
use crate::error::{Error, Result};
use crate::fields::SpectralVelocity;
use crate::solver::{PicardParams, PicardSeed, SolverParams};
use crate::transport::{DensityProfile, DensitySource};

const REQUIRED: [&str; 9] = [
    "N",
    "M",
    "dt",
    "T",
    "picard_tol",
    "picard_max",
    "dtau",
    "density.kind",
    "u0.modes",
];

const OPTIONAL: [&str; 6] = [
    "density.floor_n",
    "density.perturbation",
    "snapshots",
    "gamma",
    "picard_seed",
    "M1",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeAmplitude {
    pub k: [i32; 2],
    pub parity: Parity,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_modes: usize,
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub dtau: f64,
    pub density: DensitySource,
    pub u0_modes: Vec<ModeAmplitude>,
    pub snapshots: Vec<f64>,
    pub gamma: f64,
    pub picard_seed: PicardSeed,
    pub m1: f64,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::config(key, "must be positive and finite"));
    }
    Ok(x)
}

fn positive_int(key: &str, v: &str) -> Result<usize> {
    let x: usize = parse_num(key, v)?;
    if x == 0 {
        return Err(Error::config(key, "must be a positive integer"));
    }
    Ok(x)
}

/// Parses `k1,k2,parity:amp` triples separated by commas.
pub fn parse_modes(v: &str) -> Result<Vec<ModeAmplitude>> {
    const KEY: &str = "u0.modes";
    let toks: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if toks.len() % 3 != 0 {
        return Err(Error::config(KEY, "entries must be `k1,k2,parity:amplitude` triples"));
    }
    let mut out: Vec<ModeAmplitude> = Vec::new();
    for tri in toks.chunks(3) {
        let k1: i32 = parse_num(KEY, tri[0])?;
        let k2: i32 = parse_num(KEY, tri[1])?;
        let (p, a) = tri[2]
            .split_once(':')
            .ok_or_else(|| Error::config(KEY, format!("expected parity:amplitude, got `{}`", tri[2])))?;
        let parity =
            Parity::from_str(p.trim()).map_err(|_| Error::config(KEY, format!("bad parity `{p}`")))?;
        let amplitude: f64 = parse_num(KEY, a.trim())?;
        if !amplitude.is_finite() {
            return Err(Error::config(KEY, "amplitudes must be finite"));
        }
        if !is_canonical([k1, k2]) {
            return Err(Error::config(
                KEY,
                format!("wavevector ({k1},{k2}) is not canonical (need k1 > 0, or k1 = 0 and k2 > 0)"),
            ));
        }
        if out.iter().any(|m| m.k == [k1, k2] && m.parity == parity) {
            return Err(Error::config(KEY, format!("mode ({k1},{k2},{}) listed twice", parity.name())));
        }
        out.push(ModeAmplitude {
            k: [k1, k2],
            parity,
            amplitude,
        });
    }
    Ok(out)
}

fn parse_floor(v: &str) -> Result<Option<u64>> {
    match v {
        "inf" | "none" | "" => Ok(None),
        _ => {
            let n: u64 = parse_num("density.floor_n", v)?;
            if n == 0 {
                return Err(Error::config("density.floor_n", "must be at least 1"));
            }
            Ok(Some(n))
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(&format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(k, "key given twice"));
            }
        }
        for key in REQUIRED {
            if !kv.contains_key(key) {
                return Err(Error::config(key, "missing required key"));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let req = |k: &str| get(k).unwrap();

        let kind = req("density.kind");
        let profile = DensityProfile::from_str(kind)
            .map_err(|e| Error::config("density.kind", e.to_string()))?;
        let floor = parse_floor(get("density.floor_n").unwrap_or(""))?;
        let perturbation = match get("density.perturbation") {
            Some(v) => {
                let x: f64 = parse_num("density.perturbation", v)?;
                if !x.is_finite() {
                    return Err(Error::config("density.perturbation", "must be finite"));
                }
                x
            }
            None => 0.0,
        };
        let snapshots = match get("snapshots") {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_num::<f64>("snapshots", s))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let gamma = match get("gamma") {
            Some(v) => {
                let g: f64 = parse_num("gamma", v)?;
                if !(g >= 1.0 && g.is_finite()) {
                    return Err(Error::config("gamma", "must lie in [1, ∞)"));
                }
                g
            }
            None => 2.0,
        };
        let picard_seed = match get("picard_seed") {
            Some(v) => PicardSeed::from_str(v).map_err(|e| Error::config("picard_seed", e.to_string()))?,
            None => PicardSeed::Initial,
        };
        let m1 = match get("M1") {
            Some(v) => positive("M1", v)?,
            None => 1.0,
        };

        let cfg = RunConfig {
            n_modes: positive_int("N", req("N"))?,
            m: positive_int("M", req("M"))?,
            dt: positive("dt", req("dt"))?,
            t_end: positive("T", req("T"))?,
            picard_tol: positive("picard_tol", req("picard_tol"))?,
            picard_max: positive_int("picard_max", req("picard_max"))?,
            dtau: positive("dtau", req("dtau"))?,
            density: DensitySource {
                profile,
                floor,
                perturbation,
            },
            u0_modes: parse_modes(req("u0.modes"))?,
            snapshots,
            gamma,
            picard_seed,
            m1,
        };
        if let Some(&s) = cfg.snapshots.iter().find(|&&s| !(s >= 0.0 && s <= cfg.t_end)) {
            return Err(Error::config("snapshots", format!("time {s} outside [0, T]")));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Basis of size `N`, checked against the grid.
    pub fn basis(&self) -> Result<Arc<BasisSet>> {
        let b = enumerate_modes(self.n_modes)?;
        b.check_grid(self.m)?;
        Ok(b)
    }

    pub fn initial_velocity(&self, basis: &Arc<BasisSet>) -> Result<SpectralVelocity> {
        let mut c = vec![0.0; basis.len()];
        for mode in &self.u0_modes {
            let i = basis.index_of(mode.k, mode.parity).ok_or_else(|| {
                Error::config(
                    "u0.modes",
                    format!(
                        "mode ({},{},{}) is not among the first {} basis modes",
                        mode.k[0],
                        mode.k[1],
                        mode.parity.name(),
                        basis.len()
                    ),
                )
            })?;
            c[i] = mode.amplitude;
        }
        SpectralVelocity::new(basis.clone(), c)
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            m: self.m,
            dt: self.dt,
            t_end: self.t_end,
            dtau: self.dtau,
        }
    }

    pub fn picard_params(&self) -> PicardParams {
        PicardParams {
            tol: self.picard_tol,
            max_iter: self.picard_max,
            seed: self.picard_seed,
        }
    }
}
