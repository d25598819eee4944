//! Uniform periodic grids and the sampled fields that live on them.
//!
//! Point `(a, b)` sits at `x_ab = (2πa/M, 2πb/M)` and is stored at flat
//! index `a + b·M`; neighbours are taken modulo `M`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[inline]
pub fn grid_point(m: usize, a: usize, b: usize) -> [f64; 2] {
    let h = 2.0 * PI / m as f64;
    [h * a as f64, h * b as f64]
}

/// Trapezoid weight `(2π/M)²` of each node.
#[inline]
pub fn quadrature_weight(m: usize) -> f64 {
    let h = 2.0 * PI / m as f64;
    h * h
}

/// Grid samples with `components` values per node (1 scalar, 2 vector,
/// 4 for a row-major 2×2 tensor).
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    m: usize,
    components: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(m: usize, components: usize) -> Self {
        Self {
            m,
            components,
            values: vec![0.0; m * m * components],
        }
    }

    pub fn from_values(m: usize, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m * components {
            return Err(Error::invalid(format!(
                "grid field of size {} does not match M={m}, components={components}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid field contains non-finite values"));
        }
        Ok(Self {
            m,
            components,
            values,
        })
    }

    pub fn scalar_from_fn(m: usize, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..m * m).map(|p| f(grid_point(m, p % m, p / m))).collect();
        Self {
            m,
            components: 1,
            values,
        }
    }

    pub fn vector_from_fn(m: usize, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let mut values = Vec::with_capacity(2 * m * m);
        for p in 0..m * m {
            values.extend_from_slice(&f(grid_point(m, p % m, p / m)));
        }
        Self {
            m,
            components: 2,
            values,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Values at node `p`.
    #[inline]
    pub fn node(&self, p: usize) -> &[f64] {
        &self.values[p * self.components..(p + 1) * self.components]
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize) -> &[f64] {
        self.node((a % self.m) + (b % self.m) * self.m)
    }

    /// Vector value at node `p` (requires two components).
    #[inline]
    pub fn vec2(&self, p: usize) -> [f64; 2] {
        [self.values[2 * p], self.values[2 * p + 1]]
    }

    /// Trapezoid integral of each component.
    pub fn integral(&self) -> Vec<f64> {
        let w = quadrature_weight(self.m);
        let mut acc = vec![0.0; self.components];
        for node in self.values.chunks_exact(self.components) {
            for (s, v) in acc.iter_mut().zip(node) {
                *s += v;
            }
        }
        acc.into_iter().map(|s| s * w).collect()
    }

    /// `‖·‖_{L^q}` of the pointwise Euclidean magnitude, `q ∈ [1, ∞)`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let w = quadrature_weight(self.m);
        let s: f64 = self
            .values
            .chunks_exact(self.components)
            .map(|node| magnitude(node).powf(q))
            .sum();
        (s * w).powf(1.0 / q)
    }

    pub fn l2_norm(&self) -> f64 {
        let w = quadrature_weight(self.m);
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * w).sqrt()
    }

    /// Max over nodes of the pointwise Euclidean magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.values
            .chunks_exact(self.components)
            .map(magnitude)
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Periodic central-difference gradient of a scalar field (two components).
    pub fn central_gradient(&self) -> Result<GridField> {
        if self.components != 1 {
            return Err(Error::invalid("central_gradient needs a scalar field"));
        }
        let m = self.m;
        let inv2h = m as f64 / (4.0 * PI);
        let mut out = Vec::with_capacity(2 * m * m);
        for b in 0..m {
            for a in 0..m {
                let (ap, am) = ((a + 1) % m, (a + m - 1) % m);
                let (bp, bm) = ((b + 1) % m, (b + m - 1) % m);
                let v = &self.values;
                out.push((v[ap + b * m] - v[am + b * m]) * inv2h);
                out.push((v[a + bp * m] - v[a + bm * m]) * inv2h);
            }
        }
        Ok(GridField {
            m,
            components: 2,
            values: out,
        })
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        if self.m != other.m || self.components != other.components {
            return Err(Error::invalid("grid fields have mismatched shapes"));
        }
        Ok(GridField {
            m: self.m,
            components: self.components,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Writes the snapshot text format: a `M=<m> components=<c>` header and
    /// one row per node, `a` fastest.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        if !(self.components == 1 || self.components == 2) {
            return Err(Error::invalid(
                "snapshots hold scalar or vector fields only",
            ));
        }
        writeln!(out, "M={} components={}", self.m, self.components)?;
        for node in self.values.chunks_exact(self.components) {
            let row: Vec<String> = node.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<GridField> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty snapshot"))??;
        let mut m = None;
        let mut c = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("M", v)) => m = v.parse::<usize>().ok(),
                Some(("components", v)) => c = v.parse::<usize>().ok(),
                _ => return Err(Error::invalid(format!("bad snapshot header `{header}`"))),
            }
        }
        let (m, c) = match (m, c) {
            (Some(m), Some(c)) if c == 1 || c == 2 => (m, c),
            _ => return Err(Error::invalid(format!("bad snapshot header `{header}`"))),
        };
        let mut values = Vec::with_capacity(m * m * c);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("bad snapshot value: {e}")))?;
            if row.len() != c {
                return Err(Error::invalid(format!(
                    "snapshot row has {} values, expected {c}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        GridField::from_values(m, c, values)
    }
}

#[inline]
fn magnitude(node: &[f64]) -> f64 {
    if node.len() == 1 {
        node[0].abs()
    } else {
        node.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
