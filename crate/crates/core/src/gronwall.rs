//! The coupled Gronwall-type inequality used for uniqueness.
//!
//! Hypotheses: `f' ≤ A√G`, `g' + G ≤ αg + βf²`. When `f(0) = 0` the
//! conclusions are
//! `g + ∫G ≤ g(0) e^{∫(α + A²sβ)}` and `f ≤ A√(g(0)) √t e^{½∫(α + A²sβ)}`.
//! For `f(0) > 0` the splitting `f² ≤ 2A²t∫G + 2f(0)²` gives
//! `g + ∫G ≤ (g(0) + 2f(0)²∫β) e^{∫(α + 2A²sβ)}` and
//! `f ≤ f(0) + A√t √(g + ∫G)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::cumulative_trapezoid;

/// Sampled trajectories and coefficients; field names match the JSON
/// accepted by `gronwall-check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallInput {
    #[serde(rename = "A")]
    pub a: f64,
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    #[serde(rename = "G")]
    pub big_g: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl GronwallInput {
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n == 0 {
            return Err(Error::invalid("Gronwall input has no samples"));
        }
        for (name, v) in [
            ("f", &self.f),
            ("g", &self.g),
            ("G", &self.big_g),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
        ] {
            if v.len() != n {
                return Err(Error::invalid(format!(
                    "Gronwall series `{name}` has {} samples, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid(format!(
                    "Gronwall series `{name}` must be finite and nonnegative"
                )));
            }
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::invalid("Gronwall constant A must be finite and nonnegative"));
        }
        if self.t[0] != 0.0 || self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("Gronwall times must start at 0 and increase strictly"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GronwallBounds {
    pub f_bound: Vec<f64>,
    /// Bound on `g(t) + ∫₀ᵗ G`.
    pub eta_bound: Vec<f64>,
}

/// Bound curves on the input time grid (trapezoid integrals).
pub fn gronwall_bounds(input: &GronwallInput) -> Result<GronwallBounds> {
    input.validate()?;
    let f0 = input.f[0];
    let g0 = input.g[0];
    let a2 = input.a * input.a;
    // θ = 0 recovers the lemma exactly when f(0) = 0
    let theta = if f0 == 0.0 { 0.0 } else { 1.0 };
    let rate: Vec<f64> = input
        .t
        .iter()
        .zip(input.alpha.iter().zip(&input.beta))
        .map(|(&s, (&al, &be))| al + (1.0 + theta) * a2 * s * be)
        .collect();
    let exponent = cumulative_trapezoid(&input.t, &rate);
    let beta_int = cumulative_trapezoid(&input.t, &input.beta);
    let mut f_bound = Vec::with_capacity(input.t.len());
    let mut eta_bound = Vec::with_capacity(input.t.len());
    for k in 0..input.t.len() {
        let lead = if f0 == 0.0 {
            g0
        } else {
            g0 + (1.0 + 1.0 / theta) * f0 * f0 * beta_int[k]
        };
        let eta = if lead == 0.0 { 0.0 } else { lead * exponent[k].exp() };
        f_bound.push(f0 + input.a * input.t[k].sqrt() * eta.sqrt());
        eta_bound.push(eta);
    }
    Ok(GronwallBounds { f_bound, eta_bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GronwallStatus {
    Pass,
    HypothesesFail,
    ConclusionFail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GronwallVerdict {
    pub status: GronwallStatus,
    /// Smallest relative slack of the two hypotheses over all intervals.
    pub hypothesis_margin: f64,
    /// Smallest relative slack `(bound − f)/max(bound, f)`.
    pub f_margin: f64,
    /// Same for `g + ∫G` against its bound.
    pub eta_margin: f64,
    pub bounds: GronwallBounds,
}

impl GronwallVerdict {
    pub fn pass(&self) -> bool {
        self.status == GronwallStatus::Pass
    }

    pub fn margin(&self) -> f64 {
        self.hypothesis_margin.min(self.f_margin).min(self.eta_margin)
    }
}

fn rel_slack(bound: f64, observed: f64) -> f64 {
    let scale = bound.abs().max(observed.abs());
    if scale == 0.0 {
        0.0
    } else {
        (bound - observed) / scale
    }
}

/// Checks the hypotheses in interval-integrated form (trapezoid), then both
/// conclusions pointwise; `tol` is a relative quadrature tolerance.
pub fn gronwall_verify(input: &GronwallInput, tol: f64) -> Result<GronwallVerdict> {
    let bounds = gronwall_bounds(input)?;
    let (t, f, g, gg) = (&input.t, &input.f, &input.g, &input.big_g);
    let mut hyp_ok = true;
    let mut hypothesis_margin = f64::INFINITY;
    for k in 0..t.len() - 1 {
        let h = t[k + 1] - t[k];
        let sqrt_int = 0.5 * h * (gg[k].sqrt() + gg[k + 1].sqrt());
        let lhs1 = f[k + 1] - f[k];
        let rhs1 = input.a * sqrt_int;
        let g_int = 0.5 * h * (gg[k] + gg[k + 1]);
        let src = |j: usize| input.alpha[j] * g[j] + input.beta[j] * f[j] * f[j];
        let lhs2 = g[k + 1] - g[k] + g_int;
        let rhs2 = 0.5 * h * (src(k) + src(k + 1));
        for (lhs, rhs) in [(lhs1, rhs1), (lhs2, rhs2)] {
            let scale = lhs.abs() + rhs.abs();
            if lhs - rhs > tol * scale + 1e-15 {
                hyp_ok = false;
            }
            hypothesis_margin = hypothesis_margin.min(rel_slack(rhs, lhs));
        }
    }
    if !hypothesis_margin.is_finite() {
        hypothesis_margin = 0.0;
    }

    let g_int = cumulative_trapezoid(t, gg);
    let mut concl_ok = true;
    let (mut f_margin, mut eta_margin) = (f64::INFINITY, f64::INFINITY);
    for k in 0..t.len() {
        let eta = g[k] + g_int[k];
        let (fb, eb) = (bounds.f_bound[k], bounds.eta_bound[k]);
        if f[k] > fb * (1.0 + tol) + 1e-15 || eta > eb * (1.0 + tol) + 1e-15 {
            concl_ok = false;
        }
        f_margin = f_margin.min(rel_slack(fb, f[k]));
        eta_margin = eta_margin.min(rel_slack(eb, eta));
    }
    let status = if !hyp_ok {
        GronwallStatus::HypothesesFail
    } else if !concl_ok {
        GronwallStatus::ConclusionFail
    } else {
        GronwallStatus::Pass
    };
    Ok(GronwallVerdict {
        status,
        hypothesis_margin,
        f_margin,
        eta_margin,
        bounds,
    })
}
