//! Cumulative time integrals of sampled trajectories.

/// `∫₀^{t_k} y` by the trapezoid rule, one entry per sample.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// `∫₀^{t_k} y` integrating, on each interval, the cubic through the four
/// nearest samples. Fourth order on smooth data; falls back to the
/// trapezoid rule for fewer than four samples.
pub fn cumulative_cubic(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 4 {
        return cumulative_trapezoid(t, y);
    }
    // two-point Gauss–Legendre is exact for cubics
    let g = 0.5 / 3f64.sqrt();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..n - 1 {
        let s = k.saturating_sub(1).min(n - 4);
        let nodes = &t[s..s + 4];
        let vals = &y[s..s + 4];
        let (a, b) = (t[k], t[k + 1]);
        let mid = 0.5 * (a + b);
        let h = b - a;
        let mut part = 0.0;
        for x in [mid - g * h, mid + g * h] {
            part += lagrange(nodes, vals, x);
        }
        acc += 0.5 * h * part;
        out.push(acc);
    }
    out
}

fn lagrange(nodes: &[f64], vals: &[f64], x: f64) -> f64 {
    let mut sum = 0.0;
    for (i, (&xi, &yi)) in nodes.iter().zip(vals).enumerate() {
        let mut w = 1.0;
        for (j, &xj) in nodes.iter().enumerate() {
            if i != j {
                w *= (x - xj) / (xi - xj);
            }
        }
        sum += w * yi;
    }
    sum
}
