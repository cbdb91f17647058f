//! Dirichlet heat kernel on `(0,1)`, the absorbed half-line kernel, and the
//! covariance kernels of the random string.
//!
//! The generator is `A = ½ d²/dθ²` with Dirichlet conditions; its eigenpairs
//! are `(−k²π²/2, √2 sin(kπθ))`. Every series value carries a certified
//! bound on the truncation error. Small times switch to image sums.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{ScalarField, SineBasis, VectorField3};

/// Below this time kernels are evaluated by the method of images.
pub const IMAGE_CROSSOVER: f64 = 0.05;
const IMAGE_TERMS: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub truncation_k: usize,
    pub tail_tol: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            truncation_k: 10_000,
            tail_tol: 1e-10,
        }
    }
}

impl KernelParams {
    pub fn new(truncation_k: usize, tail_tol: f64) -> Result<Self> {
        let p = Self {
            truncation_k,
            tail_tol,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation_k == 0 {
            return invalid("truncation_K must be at least 1");
        }
        if !(self.tail_tol > 0.0) {
            return invalid(format!("tail_tol must be positive, got {}", self.tail_tol));
        }
        Ok(())
    }
}

/// A kernel value and a bound on its absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub err_bound: f64,
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return invalid(format!("{name} must lie in (0,1), got {x}"));
    }
    Ok(())
}

fn clamp_nonneg(value: f64, err: f64, tol: f64) -> f64 {
    if value < 0.0 && value >= -(tol.max(err)) {
        0.0
    } else {
        value
    }
}

/// `Σ_{k>K} e^{−c k²} ≤ e^{−c(K+1)²} / (1 − e^{−c(2K+3)})`.
pub fn gaussian_tail_bound(k: usize, c: f64) -> f64 {
    let k = k as f64;
    let first = (-c * (k + 1.0).powi(2)).exp();
    first / -(-c * (2.0 * k + 3.0)).exp_m1()
}

fn gaussian_density(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `Σ_{j≥J} e^{−2j²/t}`, bounded geometrically.
fn image_tail(j: i64, t: f64) -> f64 {
    let j = j as f64;
    (-2.0 * j * j / t).exp() / -(-2.0 * (2.0 * j + 1.0) / t).exp_m1()
}

fn g_images(t: f64, x: f64, y: f64) -> KernelValue {
    let mut s = 0.0;
    for m in -IMAGE_TERMS..=IMAGE_TERMS {
        let shift = 2.0 * m as f64;
        s += gaussian_density(x - y + shift, t) - gaussian_density(x + y + shift, t);
    }
    // every omitted image sits at distance ≥ 2(|m|−1) ≥ 2·IMAGE_TERMS
    let err = 4.0 * image_tail(IMAGE_TERMS, t) / (2.0 * PI * t).sqrt();
    KernelValue { value: s, err_bound: err }
}

/// Dirichlet heat kernel `g_t(θ,θ′) = 2 Σ_k e^{−k²π²t/2} sin(kπθ) sin(kπθ′)`.
pub fn heat_kernel_g(t: f64, theta: f64, theta_p: f64, params: &KernelParams) -> Result<KernelValue> {
    params.validate()?;
    if !(t > 0.0) {
        return invalid(format!("heat kernel needs t > 0, got {t}"));
    }
    check_unit("theta", theta)?;
    check_unit("theta_p", theta_p)?;
    let kv = if t < IMAGE_CROSSOVER {
        g_images(t, theta, theta_p)
    } else {
        let c = PI * PI * t / 2.0;
        let err = 2.0 * gaussian_tail_bound(params.truncation_k, c);
        if err > params.tail_tol {
            return Err(LabError::TailBound {
                bound: err,
                tol: params.tail_tol,
                modes: params.truncation_k,
                t,
            });
        }
        let mut s = 0.0;
        for k in 1..=params.truncation_k {
            let kf = k as f64;
            let w = (-c * kf * kf).exp();
            if w == 0.0 {
                break;
            }
            s += w * (kf * PI * theta).sin() * (kf * PI * theta_p).sin();
        }
        KernelValue {
            value: 2.0 * s,
            err_bound: err,
        }
    };
    Ok(KernelValue {
        value: clamp_nonneg(kv.value, kv.err_bound, params.tail_tol),
        ..kv
    })
}

/// Transition density of Brownian motion on `[0,∞)` killed at 0:
/// `(2πt)^{−1/2} e^{−(a−b)²/2t} (1 − e^{−2ab/t})`.
pub fn kernel_g_half_line(t: f64, a: f64, b: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid(format!("half-line kernel needs t > 0, got {t}"));
    }
    if !(a >= 0.0 && b >= 0.0) {
        return invalid("half-line kernel needs a, b ≥ 0");
    }
    let d = a - b;
    Ok((-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt() * -(-2.0 * a * b / t).exp_m1())
}

/// Tail `Σ_{k>K} cos(kx)/k²`: an estimate and a bound on the estimate's error.
///
/// At `x ≡ 0 (mod 2π)` the Euler–Maclaurin expansion is used; elsewhere one
/// step of summation by parts.
fn cosine_tail(k: usize, x: f64) -> (f64, f64) {
    let kf = k as f64;
    let half = (x / 2.0).sin().abs();
    let flat = 1.0 / kf - 0.5 / (kf * kf) + 1.0 / (6.0 * kf.powi(3));
    let flat_err = 1.0 / (30.0 * kf.powi(5));
    if half < 1e-15 {
        return (flat, flat_err);
    }
    // Σ_{k>K} a_k z^k = a_{K+1} z^{K+1}/(1−z) + (1/(1−z)) Σ_{k>K+1} (a_k − a_{k−1}) z^k
    let a1 = 1.0 / (kf + 1.0).powi(2);
    let b2 = a1 - 1.0 / (kf + 2.0).powi(2);
    let (zr, zi) = (((kf + 1.0) * x).cos(), ((kf + 1.0) * x).sin());
    let (wr, wi) = (1.0 - x.cos(), -x.sin());
    let den = wr * wr + wi * wi;
    let lead = a1 * (zr * wr + zi * wi) / den;
    let err = 2.0 * b2 / den;
    let crude = 1.0 / kf;
    if err < crude {
        (lead, err)
    } else {
        (0.0, crude)
    }
}

/// `Σ_{k≤K} 2 sin(kπθ) sin(kπθ′) e^{−k²π²t}/(k²π²)`.
fn q_series(t: f64, theta: f64, theta_p: f64, kmax: usize) -> f64 {
    let mut s = 0.0;
    for k in 1..=kmax {
        let kf = k as f64;
        let w = if t > 0.0 { (-kf * kf * PI * PI * t).exp() } else { 1.0 };
        if w == 0.0 {
            break;
        }
        s += w * (kf * PI * theta).sin() * (kf * PI * theta_p).sin() / (kf * kf);
    }
    2.0 * s / (PI * PI)
}

/// Truncation tail of `q_series` at `t = 0`, estimated and bounded.
fn q_zero_tail(theta: f64, theta_p: f64, kmax: usize) -> (f64, f64) {
    let (c1, e1) = cosine_tail(kmax, PI * (theta - theta_p));
    let (c2, e2) = cosine_tail(kmax, PI * (theta + theta_p));
    ((c1 - c2) / (PI * PI), (e1 + e2) / (PI * PI))
}

/// `∫₀ᵗ (4πs)^{−1/2} e^{−d²/4s} ds`.
fn image_integral(t: f64, d: f64) -> f64 {
    let d = d.abs();
    (t / PI).sqrt() * (-d * d / (4.0 * t)).exp() - 0.5 * d * libm::erfc(d / (2.0 * t.sqrt()))
}

fn q_images(t: f64, x: f64, y: f64) -> KernelValue {
    let mut s = 0.0;
    for m in -IMAGE_TERMS..=IMAGE_TERMS {
        let shift = 2.0 * m as f64;
        s += image_integral(t, x - y + shift) - image_integral(t, x + y + shift);
    }
    // image_integral(t, d) ≤ √(t/π) e^{−d²/4t}; omitted images have d ≥ 2·IMAGE_TERMS
    let j = IMAGE_TERMS as f64;
    let err = 4.0 * (t / PI).sqrt() * (-j * j / t).exp() / -(-(2.0 * j + 1.0) / t).exp_m1();
    KernelValue { value: s, err_bound: err }
}

fn series_checked(t: f64, theta: f64, theta_p: f64, params: &KernelParams) -> Result<KernelValue> {
    let kmax = params.truncation_k;
    let head = q_series(t, theta, theta_p, kmax);
    let (value, err) = if t > 0.0 {
        let c = PI * PI * t;
        let geo = 2.0 * gaussian_tail_bound(kmax, c) / (PI * PI * (kmax as f64 + 1.0).powi(2));
        (head, geo)
    } else {
        let (tail, err) = q_zero_tail(theta, theta_p, kmax);
        (head + tail, err)
    };
    if err > params.tail_tol {
        return Err(LabError::TailBound {
            bound: err,
            tol: params.tail_tol,
            modes: kmax,
            t,
        });
    }
    Ok(KernelValue { value, err_bound: err })
}

/// `q_∞(θ,θ′) = θ∧θ′ − θθ′`.
pub fn q_infinity(theta: f64, theta_p: f64) -> f64 {
    theta.min(theta_p) - theta * theta_p
}

/// `q_∞` from its sine series `Σ_k 2 sin(kπθ) sin(kπθ′)/(k²π²)` with an
/// accelerated tail.
pub fn q_infinity_series(theta: f64, theta_p: f64, params: &KernelParams) -> Result<KernelValue> {
    params.validate()?;
    check_unit("theta", theta)?;
    check_unit("theta_p", theta_p)?;
    series_checked(0.0, theta, theta_p, params)
}

/// `q_t(θ,θ′) = ∫₀ᵗ g_{2s}(θ,θ′) ds`; `t = ∞` gives `θ∧θ′ − θθ′`.
pub fn q_kernel(t: f64, theta: f64, theta_p: f64, params: &KernelParams) -> Result<KernelValue> {
    params.validate()?;
    if !(t > 0.0) {
        return invalid(format!("q_t needs t > 0, got {t}"));
    }
    check_unit("theta", theta)?;
    check_unit("theta_p", theta_p)?;
    if t.is_infinite() {
        return Ok(KernelValue {
            value: q_infinity(theta, theta_p),
            err_bound: 0.0,
        });
    }
    let kv = if t < IMAGE_CROSSOVER {
        q_images(t, theta, theta_p)
    } else {
        // Σ 2ss(1 − e^{−k²π²t})/(k²π²): the t = 0 series minus the decaying one
        let zero = series_checked(0.0, theta, theta_p, params)?;
        let decay = series_checked(t, theta, theta_p, params)?;
        let err = zero.err_bound + decay.err_bound;
        if err > params.tail_tol {
            return Err(LabError::TailBound {
                bound: err,
                tol: params.tail_tol,
                modes: params.truncation_k,
                t,
            });
        }
        KernelValue {
            value: zero.value - decay.value,
            err_bound: err,
        }
    };
    Ok(KernelValue {
        value: clamp_nonneg(kv.value, kv.err_bound, params.tail_tol),
        ..kv
    })
}

/// `q^t(θ,θ′) = ∫_t^∞ g_{2s}(θ,θ′) ds = q_∞ − q_t`; `t = 0` gives `q_∞`.
pub fn q_complement(t: f64, theta: f64, theta_p: f64, params: &KernelParams) -> Result<KernelValue> {
    params.validate()?;
    if !(t >= 0.0) {
        return invalid(format!("q^t needs t ≥ 0, got {t}"));
    }
    check_unit("theta", theta)?;
    check_unit("theta_p", theta_p)?;
    if t == 0.0 {
        return Ok(KernelValue {
            value: q_infinity(theta, theta_p),
            err_bound: 0.0,
        });
    }
    if t.is_infinite() {
        return Ok(KernelValue {
            value: 0.0,
            err_bound: 0.0,
        });
    }
    let kv = if t < IMAGE_CROSSOVER {
        let q = q_images(t, theta, theta_p);
        KernelValue {
            value: q_infinity(theta, theta_p) - q.value,
            err_bound: q.err_bound,
        }
    } else {
        series_checked(t, theta, theta_p, params)?
    };
    Ok(KernelValue {
        value: clamp_nonneg(kv.value, kv.err_bound, params.tail_tol),
        ..kv
    })
}

fn damp_modes(basis: &SineBasis, values: &[f64], t: f64, kmax: usize, out: &mut [f64]) {
    let n = values.len();
    let mut c = vec![0.0; n];
    basis.forward(values, &mut c);
    for (k, ck) in c.iter_mut().enumerate() {
        *ck = if k < kmax {
            *ck * (-0.5 * ((k + 1) as f64 * PI).powi(2) * t).exp()
        } else {
            0.0
        };
    }
    basis.inverse(&c, out);
}

/// `e^{tA}` on a grid field: sine coefficient `c_k ↦ c_k e^{−k²π²t/2}`,
/// keeping at most `truncation_k` modes.
pub fn semigroup_apply(t: f64, field: &ScalarField, params: &KernelParams) -> Result<ScalarField> {
    params.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("semigroup time must be finite and ≥ 0, got {t}"));
    }
    let basis = SineBasis::new(field.len());
    let mut out = ScalarField::zeros(field.len());
    damp_modes(&basis, &field.values, t, params.truncation_k, &mut out.values);
    Ok(out)
}

/// Componentwise [`semigroup_apply`].
pub fn semigroup_apply_3d(t: f64, field: &VectorField3, params: &KernelParams) -> Result<VectorField3> {
    params.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("semigroup time must be finite and ≥ 0, got {t}"));
    }
    let basis = SineBasis::new(field.len());
    let mut comps = [
        field.component(0),
        field.component(1),
        field.component(2),
    ];
    for c in comps.iter_mut() {
        let src = c.values.clone();
        damp_modes(&basis, &src, t, params.truncation_k, &mut c.values);
    }
    Ok(VectorField3::from_components([&comps[0], &comps[1], &comps[2]]))
}

/// Smallest `Ĉ₀` with `(θ(1−θ)/q_t(θ,θ))^{3/2} ≤ Ĉ₀ (t^{−3/4} ∨ 1)` on the
/// lattice.
pub fn check_estq(thetas: &[f64], times: &[f64], params: &KernelParams) -> Result<f64> {
    let mut c0: f64 = 0.0;
    for &th in thetas {
        for &t in times {
            let q = q_kernel(t, th, th, params)?.value;
            if !(q > 0.0) {
                return Err(LabError::InvalidArgument(format!(
                    "q_t(θ,θ) vanished at t = {t}, θ = {th}"
                )));
            }
            let ratio = (th * (1.0 - th) / q).powf(1.5);
            c0 = c0.max(ratio / t.powf(-0.75).max(1.0));
        }
    }
    Ok(c0)
}

/// One row of `kernel-table`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub kernel: String,
    pub t: f64,
    pub theta: f64,
    pub theta_p: f64,
    pub value: f64,
    pub err_bound: f64,
}

/// Evaluate `g`, `G`, `q_t`, `q^t` and `q_∞` over the product of the inputs.
pub fn kernel_table(times: &[f64], thetas: &[f64], params: &KernelParams) -> Result<Vec<KernelRow>> {
    let mut rows = Vec::new();
    let row = |kernel: &str, t: f64, a: f64, b: f64, kv: KernelValue| KernelRow {
        kernel: kernel.to_string(),
        t,
        theta: a,
        theta_p: b,
        value: kv.value,
        err_bound: kv.err_bound,
    };
    for &t in times {
        for &a in thetas {
            for &b in thetas {
                rows.push(row("g", t, a, b, heat_kernel_g(t, a, b, params)?));
                let big = KernelValue {
                    value: kernel_g_half_line(t, a, b)?,
                    err_bound: 0.0,
                };
                rows.push(row("G", t, a, b, big));
                rows.push(row("q", t, a, b, q_kernel(t, a, b, params)?));
                rows.push(row("q_complement", t, a, b, q_complement(t, a, b, params)?));
            }
        }
    }
    for &a in thetas {
        for &b in thetas {
            let kv = KernelValue {
                value: q_infinity(a, b),
                err_bound: 0.0,
            };
            rows.push(row("q_inf", f64::INFINITY, a, b, kv));
        }
    }
    Ok(rows)
}
