//! Space-time grid and the field types living on it.
//!
//! Fields store the `n` interior sites `θ_i = i·h`, `i = 1..=n`, with
//! `h = 1/(n+1)`. The Dirichlet boundary values at `θ = 0` and `θ = 1` are
//! implicit zeros and are never stored.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    n: usize,
    dt: f64,
    horizon: f64,
}

impl SpaceTimeGrid {
    pub fn new(n: usize, dt: f64, horizon: f64) -> Result<Self> {
        if n == 0 {
            return invalid("grid needs at least one interior site");
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        if !(horizon >= dt) {
            return invalid(format!("horizon {horizon} shorter than time step {dt}"));
        }
        Ok(Self { n, dt, horizon })
    }

    /// A grid used only for spatial sampling (one unit time step).
    pub fn spatial(n: usize) -> Result<Self> {
        Self::new(n, 1.0, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time steps needed to reach the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }

    #[inline]
    pub fn theta(&self, i: usize) -> f64 {
        (i + 1) as f64 / (self.n + 1) as f64
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.theta(i)).collect()
    }

    /// Index of the interior site closest to `theta`.
    pub fn nearest_site(&self, theta: f64) -> usize {
        let k = (theta * (self.n + 1) as f64).round() as isize - 1;
        k.clamp(0, self.n as isize - 1) as usize
    }
}

/// Real values on the interior sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..grid.n()).map(|i| f(grid.theta(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `h`-weighted inner product, i.e. the grid quadrature of `∫ f g dθ`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        let h = 1.0 / (self.len() + 1) as f64;
        h * self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }
}

/// `ℝ³`-valued field on the interior sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField3 {
    pub values: Vec<[f64; 3]>,
}

impl VectorField3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|v| v[c]).collect(),
        }
    }

    pub fn from_components(c: [&ScalarField; 3]) -> Self {
        let n = c[0].len();
        Self {
            values: (0..n)
                .map(|i| [c[0].values[i], c[1].values[i], c[2].values[i]])
                .collect(),
        }
    }

    /// Sitewise Euclidean norm.
    pub fn modulus(&self) -> ScalarField {
        ScalarField {
            values: self
                .values
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
                .collect(),
        }
    }
}

/// Discrete sine basis on `n` interior sites.
///
/// `f_i = Σ_k c_k sin(kπθ_i)` for `k = 1..=n`, inverted exactly by
/// `c_k = 2h Σ_i f_i sin(kπθ_i)`.
#[derive(Debug, Clone)]
pub struct SineBasis {
    n: usize,
    table: Vec<f64>,
}

impl SineBasis {
    pub fn new(n: usize) -> Self {
        let mut table = vec![0.0; n * n];
        let np1 = (n + 1) as f64;
        for k in 0..n {
            for i in 0..n {
                let arg = std::f64::consts::PI * ((k + 1) * (i + 1)) as f64 / np1;
                table[k * n + i] = arg.sin();
            }
        }
        Self { n, table }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn sin(&self, k: usize, i: usize) -> f64 {
        self.table[k * self.n + i]
    }

    pub fn forward(&self, values: &[f64], coeffs: &mut [f64]) {
        let scale = 2.0 / (self.n + 1) as f64;
        for (k, c) in coeffs.iter_mut().enumerate() {
            let row = &self.table[k * self.n..(k + 1) * self.n];
            *c = scale * row.iter().zip(values).map(|(s, v)| s * v).sum::<f64>();
        }
    }

    pub fn inverse(&self, coeffs: &[f64], values: &mut [f64]) {
        values.iter_mut().for_each(|v| *v = 0.0);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.table[k * self.n..(k + 1) * self.n];
            for (v, s) in values.iter_mut().zip(row) {
                *v += c * s;
            }
        }
    }
}
