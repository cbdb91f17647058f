//! Potentials and densities of the random string and the 3-Bessel bridge.
//!
//! With `q_t = q_t(θ,θ)` and `m_t = e^{tA}x̄(θ)`:
//!
//! ```text
//! U₃^{θ,a}(x̄) = ∫₀^∞ e^{−t} (2π q_t)^{−3/2} exp(−|m_t − a|²/(2q_t)) dt
//! Γ₃^θ(x̄)    = ∫₀^∞ e^{−t} √(q_t/θ) M(|m_t|/√q_t) dt,   M(μ) = E|Z + μe|
//! ρ_θ(a)     = √(2/π) a² (θ(1−θ))^{−3/2} exp(−a²/(2θ(1−θ)))
//! ```
//!
//! Time integrals run over `log t` panels so that the `t^{−3/4}` behaviour
//! at the origin is resolved.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{SineBasis, VectorField3};
use crate::heat_kernels::{q_complement, q_infinity, q_kernel, KernelParams, IMAGE_CROSSOVER};
use crate::quadrature::GaussLegendre;

/// Volume of the unit ball in ℝ³.
pub const OMEGA3: f64 = 4.0 * PI / 3.0;

/// `√(8/π)`, the mean norm of a standard 3D Gaussian.
pub fn sqrt_8_over_pi() -> f64 {
    (8.0 / PI).sqrt()
}

/// Graded time quadrature for `∫₀^{T_q} f(t) dt`: Gauss–Legendre panels of
/// equal width in `s = log t` between `t_min` and `T_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeQuadrature {
    pub t_min: f64,
    pub t_max: f64,
    /// Nodes in `t`.
    pub nodes: Vec<f64>,
    /// Weights including the Jacobian `dt = t ds`.
    pub weights: Vec<f64>,
    /// The same panels with a lower-order rule, for an error estimate.
    pub coarse_nodes: Vec<f64>,
    pub coarse_weights: Vec<f64>,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        Self::graded(1e-48, 30.0, 0.5, 10)
    }
}

impl TimeQuadrature {
    pub fn graded(t_min: f64, t_max: f64, panel_width: f64, order: usize) -> Self {
        let (lo, hi) = (t_min.ln(), t_max.ln());
        let panels = ((hi - lo) / panel_width).ceil().max(1.0) as usize;
        let build = |rule: &GaussLegendre| {
            let w = (hi - lo) / panels as f64;
            let mut nodes = Vec::with_capacity(panels * rule.nodes.len());
            let mut weights = Vec::with_capacity(panels * rule.nodes.len());
            for p in 0..panels {
                let mid = lo + (p as f64 + 0.5) * w;
                for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let t = (mid + 0.5 * w * x).exp();
                    nodes.push(t);
                    weights.push(0.5 * w * wt * t);
                }
            }
            (nodes, weights)
        };
        let (nodes, weights) = build(&GaussLegendre::new(order));
        let (coarse_nodes, coarse_weights) = build(&GaussLegendre::new((order / 2).max(2)));
        Self {
            t_min,
            t_max,
            nodes,
            weights,
            coarse_nodes,
            coarse_weights,
        }
    }

    /// Fine and coarse sums of `f` over the rule.
    fn apply(&self, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let fine = self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum();
        let coarse = self
            .coarse_nodes
            .iter()
            .zip(&self.coarse_weights)
            .map(|(t, w)| w * f(*t))
            .sum();
        (fine, coarse)
    }
}

/// `q_t(θ,θ)`: image sums for small `t`, `θ(1−θ) − q^t` otherwise.
pub fn q_diag(t: f64, theta: f64) -> f64 {
    let params = KernelParams::default();
    if t < IMAGE_CROSSOVER {
        q_kernel(t, theta, theta, &params).expect("θ validated by the caller").value
    } else {
        let qc = q_complement(t, theta, theta, &params).expect("θ validated by the caller");
        q_infinity(theta, theta) - qc.value
    }
}

/// Inputs of a potential evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialQuery {
    pub theta: f64,
    pub a: [f64; 3],
    /// Field on a grid; an empty field means `x̄ = 0`.
    pub xbar: VectorField3,
    pub quadrature: TimeQuadrature,
    /// Relative tolerance for the fine/coarse quadrature disagreement.
    pub rel_tol: f64,
}

impl PotentialQuery {
    pub fn new(theta: f64, a: [f64; 3], xbar: VectorField3) -> Self {
        Self {
            theta,
            a,
            xbar,
            quadrature: TimeQuadrature::default(),
            rel_tol: 1e-7,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta must lie in (0,1), got {}", self.theta));
        }
        if self.quadrature.weights.iter().any(|w| !(*w > 0.0)) {
            return invalid("quadrature weights must be positive");
        }
        Ok(())
    }
}

/// Evaluates `e^{tA} f(θ)` for a grid field `f` at an arbitrary `θ`.
#[derive(Debug, Clone)]
pub struct SemigroupPoint {
    coeffs: Vec<[f64; 3]>,
    sines: Vec<f64>,
    rates: Vec<f64>,
}

impl SemigroupPoint {
    pub fn new(field: &VectorField3, theta: f64) -> Self {
        let n = field.len();
        if n == 0 {
            return Self {
                coeffs: Vec::new(),
                sines: Vec::new(),
                rates: Vec::new(),
            };
        }
        let basis = SineBasis::new(n);
        let mut coeffs = vec![[0.0; 3]; n];
        let mut c = vec![0.0; n];
        for comp in 0..3 {
            basis.forward(&field.component(comp).values, &mut c);
            for k in 0..n {
                coeffs[k][comp] = c[k];
            }
        }
        Self {
            coeffs,
            sines: (1..=n).map(|k| (k as f64 * PI * theta).sin()).collect(),
            rates: (1..=n).map(|k| 0.5 * (k as f64 * PI).powi(2)).collect(),
        }
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for k in 0..self.coeffs.len() {
            let w = (-self.rates[k] * t).exp() * self.sines[k];
            if w == 0.0 && self.rates[k] * t > 745.0 {
                break;
            }
            for (o, c) in out.iter_mut().zip(&self.coeffs[k]) {
                *o += w * c;
            }
        }
        out
    }
}

fn norm2(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialValue {
    pub value: f64,
    pub err_estimate: f64,
}

fn finish(fine: f64, coarse: f64, tail: f64, rel_tol: f64) -> Result<PotentialValue> {
    let err = (fine - coarse).abs() + tail;
    if err > rel_tol * fine.abs().max(1e-300) {
        return Err(LabError::Quadrature {
            tol: rel_tol,
            estimate: err / fine.abs().max(1e-300),
        });
    }
    Ok(PotentialValue {
        value: fine,
        err_estimate: err,
    })
}

/// `U₃^{θ,a}(x̄)`.
pub fn u3_potential(q: &PotentialQuery) -> Result<PotentialValue> {
    q.validate()?;
    let sg = SemigroupPoint::new(&q.xbar, q.theta);
    let f = |t: f64| {
        let qt = q_diag(t, q.theta);
        let m = sg.at(t);
        let d = [m[0] - q.a[0], m[1] - q.a[1], m[2] - q.a[2]];
        (-t).exp() * (2.0 * PI * qt).powf(-1.5) * (-norm2(d) / (2.0 * qt)).exp()
    };
    let (fine, coarse) = q.quadrature.apply(f);
    let tq = q.quadrature.t_max;
    let tail = (-tq).exp() * (2.0 * PI * q_diag(tq, q.theta)).powf(-1.5);
    // ∫₀^{t_min} (2π q_t)^{−3/2} with q_t ≈ √(t/π)
    let head = 4.0 * q.quadrature.t_min.powf(0.25) * (2.0 * PI.sqrt()).powf(-1.5);
    finish(fine, coarse, tail + head, q.rel_tol)
}

/// Derivative of `U₃^{θ,a}` at `x̄` in the direction `h̄`:
/// `−∫₀^∞ e^{−t} e^{tA}h̄(θ)·(2π)^{−3/2} q_t^{−2} ψ((m_t − a)/√q_t) dt`,
/// with `ψ(y) = y e^{−|y|²/2}`.
pub fn u3_directional_derivative(q: &PotentialQuery, hbar: &VectorField3) -> Result<PotentialValue> {
    q.validate()?;
    if !q.xbar.is_empty() && hbar.len() != q.xbar.len() {
        return invalid("direction and base field live on different grids");
    }
    let sg = SemigroupPoint::new(&q.xbar, q.theta);
    let sh = SemigroupPoint::new(hbar, q.theta);
    let f = |t: f64| {
        let qt = q_diag(t, q.theta);
        let m = sg.at(t);
        let ph = sh.at(t);
        let s = qt.sqrt();
        let y = [(m[0] - q.a[0]) / s, (m[1] - q.a[1]) / s, (m[2] - q.a[2]) / s];
        let g = (-0.5 * norm2(y)).exp();
        let dot = ph[0] * y[0] + ph[1] * y[1] + ph[2] * y[2];
        -(-t).exp() * (2.0 * PI).powf(-1.5) * dot * g / (qt * qt)
    };
    let (fine, coarse) = q.quadrature.apply(f);
    let err = (fine - coarse).abs();
    Ok(PotentialValue {
        value: fine,
        err_estimate: err,
    })
}

/// Rule used by [`mean_noncentral_norm`].
fn radial_rule() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// `M(μ) = E|Z + μe|` for `Z` standard normal in ℝ³, by radial quadrature
/// of the noncentral chi density `(r/μ)(φ(r−μ) − φ(r+μ))`.
pub fn mean_noncentral_norm(mu: f64) -> f64 {
    let mu = mu.abs();
    let lo = (mu - 12.0).max(0.0);
    let hi = mu + 12.0;
    let c = 1.0 / (2.0 * PI).sqrt();
    let f = |r: f64| {
        // (φ(r−μ) − φ(r+μ))/μ = φ(r−μ)(1 − e^{−2rμ})/μ
        let ratio = if mu > 0.0 {
            -(-2.0 * r * mu).exp_m1() / mu
        } else {
            2.0 * r
        };
        r * r * c * (-0.5 * (r - mu).powi(2)).exp() * ratio
    };
    radial_rule().integrate(lo, hi, f)
}

/// Bound on `(θ(1−θ))^{3/2} U₃^{θ,a}(x̄)` implied by a kernel constant `Ĉ₀`
/// from [`crate::heat_kernels::check_estq`]:
/// `Ĉ₀ (2π)^{−3/2} ∫₀^∞ e^{−t}(t^{−3/4} ∨ 1) dt`.
pub fn uniform_potential_bound(c0: f64) -> f64 {
    // ∫₀¹ e^{−t} t^{−3/4} dt = 4∫₀¹ e^{−v⁴} dv
    let head = 4.0 * GaussLegendre::new(20).integrate(0.0, 1.0, |v| (-v.powi(4)).exp());
    c0 * (head + (-1.0f64).exp()) / (2.0 * PI).powf(1.5)
}

/// `Γ₃^θ(x̄) = ∫₀^∞ e^{−t} √(q_t/θ) M(|e^{tA}x̄(θ)|/√q_t) dt`.
pub fn gamma3(xbar: &VectorField3, theta: f64, quadrature: &TimeQuadrature) -> Result<PotentialValue> {
    if !(theta > 0.0 && theta < 1.0) {
        return invalid(format!("theta must lie in (0,1), got {theta}"));
    }
    let sg = SemigroupPoint::new(xbar, theta);
    let f = |t: f64| {
        let qt = q_diag(t, theta);
        let m = norm2(sg.at(t)).sqrt();
        (-t).exp() * (qt / theta).sqrt() * mean_noncentral_norm(m / qt.sqrt())
    };
    let (fine, coarse) = quadrature.apply(f);
    let tq = quadrature.t_max;
    let q_inf = theta * (1.0 - theta);
    let m_inf = norm2(sg.at(0.0)).sqrt();
    // M(μ) ≤ μ + √(8/π) and |m_t| ≤ sup norm of x̄ along the flow
    let tail = (-tq).exp() * ((q_inf / theta).sqrt() * sqrt_8_over_pi() + m_inf / theta.sqrt());
    finish(fine, coarse, tail, 1e-7)
}

/// Marginal density of `e(θ)` under the 3-Bessel bridge.
pub fn marginal_density(theta: f64, a: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return invalid(format!("theta must lie in (0,1), got {theta}"));
    }
    if !(a >= 0.0) {
        return invalid(format!("level must be ≥ 0, got {a}"));
    }
    let v = theta * (1.0 - theta);
    Ok((2.0 / PI).sqrt() * a * a * v.powf(-1.5) * (-a * a / (2.0 * v)).exp())
}

/// Distribution function of `e(θ)` (Maxwell law with scale `√(θ(1−θ))`).
pub fn marginal_cdf(theta: f64, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let s = (theta * (1.0 - theta)).sqrt();
    let x = a / s;
    libm::erf(x / 2f64.sqrt()) - (2.0 / PI).sqrt() * x * (-0.5 * x * x).exp()
}

/// `∫_lo^hi ρ_θ(α) dα`.
pub fn band_probability(theta: f64, lo: f64, hi: f64) -> f64 {
    marginal_cdf(theta, hi) - marginal_cdf(theta, lo.max(0.0))
}

/// Expected `(3/ε³)·∫₀¹ 1_{[0,ε]}(e(θ)) dt` under the stationary law.
pub fn renormalized_target(theta: f64, eps: f64) -> f64 {
    3.0 / eps.powi(3) * band_probability(theta, 0.0, eps)
}

/// Stationary mean of `a^{−2}·(1/ε)·occupation of [a, a+ε]` over unit time.
pub fn small_level_target(theta: f64, a: f64, eps: f64) -> f64 {
    band_probability(theta, a, a + eps) / (eps * a * a)
}

/// Revuz density of `a^{−2} l^a`: `√(2/(πθ³(1−θ)³)) e^{−a²/(2θ(1−θ))}`.
pub fn level_density_curve(theta: f64, a: f64) -> f64 {
    let v = theta * (1.0 - theta);
    (2.0 / (PI * v.powi(3))).sqrt() * (-a * a / (2.0 * v)).exp()
}

/// `(2√(2πθ³(1−θ)³))^{−1}`, the stationary rate of `η([0,t],θ)`.
pub fn eta_density(theta: f64) -> f64 {
    let v = theta * (1.0 - theta);
    1.0 / (2.0 * (2.0 * PI * v.powi(3)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevuzTargets {
    /// `E_ν[η([0,1],θ)]`.
    pub eta_density_mass: f64,
    /// `E_ν[l(1,θ)]`.
    pub l_mass: f64,
    /// Integrand of the boundary functional, `η`-density at `θ`.
    pub boundary_integrand: f64,
    /// `E_ν[η([0,1] × I)]` when an interval was given.
    pub interval_mass: Option<f64>,
}

/// Stationary targets of the reflection measure and the local times.
pub fn revuz_targets(theta: f64, interval: Option<(f64, f64)>) -> Result<RevuzTargets> {
    if !(theta > 0.0 && theta < 1.0) {
        return invalid(format!("theta must lie in (0,1), got {theta}"));
    }
    let interval_mass = match interval {
        None => None,
        Some((lo, hi)) => Some(interval_eta_mass(lo, hi)?),
    };
    let eta = eta_density(theta);
    Ok(RevuzTargets {
        eta_density_mass: eta,
        l_mass: 4.0 * eta,
        boundary_integrand: eta,
        interval_mass,
    })
}

/// `∫_I η-density`, by composite Gauss–Legendre quadrature.
pub fn interval_eta_mass(lo: f64, hi: f64) -> Result<f64> {
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return invalid(format!(
            "interval [{lo}, {hi}] must be a proper subinterval of (0,1)"
        ));
    }
    Ok(GaussLegendre::new(20).composite(lo, hi, 64, eta_density))
}

/// `√ε ∫₀^{a_cut} (1 ∧ θ/ε) η-density(θ) dθ`; tends to `√(2/π)` as `ε ↓ 0`.
pub fn boundary_surrogate(eps: f64, a_cut: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < a_cut && a_cut < 1.0) {
        return invalid(format!("need 0 < eps < a_cut < 1, got eps={eps}, a_cut={a_cut}"));
    }
    let gl = GaussLegendre::new(20);
    // θ = v² on [0, ε]; θ = e^s on [ε, a_cut]
    let near = gl.composite(0.0, eps.sqrt(), 32, |v| {
        let th = v * v;
        if th <= 0.0 {
            return 0.0;
        }
        th / eps * eta_density(th) * 2.0 * v
    });
    let far = gl.composite(eps.ln(), a_cut.ln(), 64, |s| {
        let th = s.exp();
        eta_density(th) * th
    });
    Ok(eps.sqrt() * (near + far))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noncentral_norm_at_zero() {
        assert!((mean_noncentral_norm(0.0) - sqrt_8_over_pi()).abs() < 1e-12);
    }

    #[test]
    fn q_diag_is_continuous_at_crossover() {
        let a = q_diag(IMAGE_CROSSOVER * (1.0 - 1e-12), 0.3);
        let b = q_diag(IMAGE_CROSSOVER, 0.3);
        assert!((a - b).abs() < 1e-10);
    }
}
