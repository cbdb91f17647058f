//! Reproducible generation of the Gaussian objects used by the lab.
//!
//! Brownian bridges are sampled by sequential conditioning, which is exact
//! for the grid marginals. The random string and the stochastic convolution
//! evolve mode-by-mode in the sine basis with exact Ornstein-Uhlenbeck
//! updates, so no time-discretization bias enters the Gaussian baselines.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::grid::{ScalarField, SineBasis, SpaceTimeGrid, VectorField3};
use crate::rng::RngStream;

/// One component of a standard Brownian bridge on the grid sites.
fn bridge_component(n: usize, rng: &mut RngStream, out: &mut [f64]) {
    let h = 1.0 / (n + 1) as f64;
    let mut prev = 0.0;
    let mut remaining = 1.0; // 1 - θ_{i-1}
    for v in out.iter_mut().take(n) {
        let next_remaining = remaining - h;
        let ratio = next_remaining / remaining;
        let mean = prev * ratio;
        let var = h * ratio;
        prev = mean + var.sqrt() * rng.normal();
        *v = prev;
        remaining = next_remaining;
    }
}

/// Scalar Brownian bridge pinned at 0 at both ends.
pub fn sample_brownian_bridge(grid: &SpaceTimeGrid, rng: &mut RngStream) -> ScalarField {
    let mut f = ScalarField::zeros(grid.n());
    bridge_component(grid.n(), rng, &mut f.values);
    f
}

/// `ℝ³`-valued standard Brownian bridge; covariance `θ∧θ' − θθ'` per component.
pub fn sample_brownian_bridge_3d(grid: &SpaceTimeGrid, rng: &mut RngStream) -> VectorField3 {
    let n = grid.n();
    let mut comps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for c in comps.iter_mut() {
        bridge_component(n, rng, c);
    }
    VectorField3 {
        values: (0..n).map(|i| [comps[0][i], comps[1][i], comps[2][i]]).collect(),
    }
}

/// 3-Bessel bridge: the sitewise modulus of a 3D Brownian bridge.
pub fn sample_bessel3_bridge(grid: &SpaceTimeGrid, rng: &mut RngStream) -> ScalarField {
    sample_brownian_bridge_3d(grid, rng).modulus()
}

/// Cell averages of space-time white noise over one `h × dt` cell:
/// i.i.d. `N(0, 1/(h·dt))`.
pub fn sample_white_noise_increment(
    grid: &SpaceTimeGrid,
    dt: f64,
    rng: &mut RngStream,
) -> Result<ScalarField> {
    if !(dt > 0.0) {
        return invalid(format!("noise cell needs dt > 0, got {dt}"));
    }
    let sd = 1.0 / (grid.h() * dt).sqrt();
    let mut f = ScalarField::zeros(grid.n());
    for v in f.values.iter_mut() {
        *v = sd * rng.normal();
    }
    Ok(f)
}

/// Vector-valued white-noise cell averages (three independent copies).
pub fn sample_white_noise_increment_3d(
    grid: &SpaceTimeGrid,
    dt: f64,
    rng: &mut RngStream,
) -> Result<VectorField3> {
    let a = sample_white_noise_increment(grid, dt, rng)?;
    let b = sample_white_noise_increment(grid, dt, rng)?;
    let c = sample_white_noise_increment(grid, dt, rng)?;
    Ok(VectorField3::from_components([&a, &b, &c]))
}

/// Continuum eigenvalue of `−A = −½ d²/dθ²` for the sine mode `k ≥ 1`.
#[inline]
pub fn mode_rate(k: usize) -> f64 {
    0.5 * (k as f64 * PI).powi(2)
}

/// Stationary variance of the sine coefficient `c_k` of a field sampled
/// on `n` sites, with all continuum modes that alias onto `k` folded in.
///
/// The folded sum equals `h²/(2 sin²(kπh/2))`, which makes the stationary law
/// of the grid values exactly the Brownian-bridge law `N(0, q_∞)`.
pub fn folded_stationary_variance(k: usize, n: usize) -> f64 {
    let h = 1.0 / (n + 1) as f64;
    let s = (k as f64 * PI * h / 2.0).sin();
    h * h / (2.0 * s * s)
}

/// Mode-wise exact Ornstein-Uhlenbeck evolution of scalar fields on the grid.
///
/// Mode `k` decays at the continuum rate `k²π²/2`; its stationary variance is
/// [`folded_stationary_variance`].
#[derive(Debug, Clone)]
pub struct SpectralOu {
    basis: SineBasis,
    rates: Vec<f64>,
    stationary: Vec<f64>,
}

impl SpectralOu {
    pub fn new(n: usize) -> Self {
        Self {
            basis: SineBasis::new(n),
            rates: (1..=n).map(mode_rate).collect(),
            stationary: (1..=n).map(|k| folded_stationary_variance(k, n)).collect(),
        }
    }

    pub fn basis(&self) -> &SineBasis {
        &self.basis
    }

    pub fn rate(&self, k: usize) -> f64 {
        self.rates[k]
    }

    /// Exact transition of the sine coefficients over time `t`.
    pub fn step_coefficients(&self, coeffs: &mut [f64], t: f64, rng: &mut RngStream) {
        for (k, c) in coeffs.iter_mut().enumerate() {
            let decay = (-self.rates[k] * t).exp();
            let var = self.stationary[k] * -(-2.0 * self.rates[k] * t).exp_m1();
            *c = decay * *c + var.sqrt() * rng.normal();
        }
    }

    pub fn step_field(&self, field: &mut ScalarField, t: f64, rng: &mut RngStream) {
        let n = field.len();
        let mut c = vec![0.0; n];
        self.basis.forward(&field.values, &mut c);
        self.step_coefficients(&mut c, t, rng);
        self.basis.inverse(&c, &mut field.values);
    }

    /// Shared-noise step: advance the coefficients using the Brownian
    /// increments `db` of the mode drivers (variance `2·dt` each, the
    /// projection of the cell noise), completing the exact transition with
    /// an independent conditional remainder from `aux`.
    ///
    /// Returns, per mode, the exact time integral of the coefficient over
    /// the step in `integral`.
    pub fn step_coefficients_driven(
        &self,
        coeffs: &mut [f64],
        db: &[f64],
        dt: f64,
        aux: &mut RngStream,
        integral: &mut [f64],
    ) {
        for k in 0..coeffs.len() {
            let lam = self.rates[k];
            let x = lam * dt;
            let one_minus_decay = -(-x).exp_m1();
            let decay = 1.0 - one_minus_decay;
            let gain = one_minus_decay / x;
            // Var(I) − Cov(I,ΔB)²/Var(ΔB), with Var(ΔB) = 2dt
            let var_i = -(-2.0 * x).exp_m1() / lam;
            let cond = (var_i - 2.0 * one_minus_decay * one_minus_decay / (lam * x)).max(0.0);
            let stoch = gain * db[k] + cond.sqrt() * aux.normal();
            let c0 = coeffs[k];
            coeffs[k] = decay * c0 + stoch;
            integral[k] = c0 * one_minus_decay / lam + (db[k] - stoch) / lam;
        }
    }
}

/// Exact draw of the random string `z₃(t)` started from `xbar`:
/// `N(e^{tA} x̄, Q_t)` realized mode-wise.
pub fn string_transition(
    xbar: &VectorField3,
    t: f64,
    rng: &mut RngStream,
) -> Result<VectorField3> {
    if !(t > 0.0) {
        return invalid(format!("string transition needs t > 0, got {t}"));
    }
    let ou = SpectralOu::new(xbar.len());
    let mut comps = [xbar.component(0), xbar.component(1), xbar.component(2)];
    for c in comps.iter_mut() {
        ou.step_field(c, t, rng);
    }
    Ok(VectorField3::from_components([&comps[0], &comps[1], &comps[2]]))
}

/// Stochastic convolution `w(t_n, ·)`, `n = 1..=n_steps`, started from zero.
pub fn stochastic_convolution_path(
    grid: &SpaceTimeGrid,
    dt: f64,
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<ScalarField>> {
    if !(dt > 0.0) || n_steps == 0 {
        return invalid("stochastic convolution needs dt > 0 and at least one step");
    }
    let n = grid.n();
    let ou = SpectralOu::new(n);
    let mut c = vec![0.0; n];
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        ou.step_coefficients(&mut c, dt, rng);
        let mut f = ScalarField::zeros(n);
        ou.basis().inverse(&c, &mut f.values);
        out.push(f);
    }
    Ok(out)
}
