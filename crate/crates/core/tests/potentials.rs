use std::f64::consts::PI;

use proptest::prelude::*;
use reflab::grid::{SpaceTimeGrid, VectorField3};
use reflab::heat_kernels::{check_estq, KernelParams};
use reflab::potentials::*;
use reflab::rng::RngStream;
use reflab::samplers::sample_brownian_bridge_3d;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn zero_field() -> VectorField3 {
    VectorField3::zeros(0)
}

#[test]
fn density_normalization_and_mean() {
    let th = 0.3;
    let total = simpson(|a| marginal_density(th, a).unwrap(), 0.0, 6.0, 20_000);
    assert!((total - 1.0).abs() < 1e-8);
    let mean = simpson(|a| a * marginal_density(0.5, a).unwrap(), 0.0, 6.0, 20_000);
    assert!((mean - 0.5 * (8.0 / PI).sqrt()).abs() < 1e-8);
    assert_eq!(marginal_density(0.4, 0.0).unwrap(), 0.0);
    assert!(marginal_density(0.0, 0.1).is_err());
    // leading a² coefficient
    let a = 1e-4;
    let lead = marginal_density(th, a).unwrap() / (a * a);
    assert!((lead / ((2.0 / PI).sqrt() * (th * (1.0 - th)).powf(-1.5)) - 1.0).abs() < 1e-6);
}

#[test]
fn cdf_matches_quadrature() {
    for &x in &[0.05, 0.3, 0.7, 1.5] {
        let q = simpson(|a| marginal_density(0.5, a).unwrap(), 0.0, x, 4000);
        assert!((marginal_cdf(0.5, x) - q).abs() < 1e-11);
    }
}

#[test]
fn finite_band_targets() {
    // mpmath quadrature of ρ_{0.5}, 30 digits
    let cases = [
        (0.3, 5.736_026_781_077_031),
        (0.2, 6.085_264_116_746_133),
        (0.15, 6.213_471_201_414_065),
    ];
    for (eps, want) in cases {
        assert!((renormalized_target(0.5, eps) - want).abs() < 1e-10, "eps {eps}");
    }
    assert!((10.0 * band_probability(0.5, 0.5, 0.6) - 1.050_660_844_980_732).abs() < 1e-11);
    assert!((small_level_target(0.5, 0.1, 0.05) - 9.775_627_627_134_257).abs() < 1e-9);
    assert!((small_level_target(0.5, 0.3, 0.02) - 5.624_145_309_421_35).abs() < 1e-9);
}

#[test]
fn revuz_values() {
    let r = revuz_targets(0.5, Some((0.25, 0.75))).unwrap();
    assert!((r.eta_density_mass - 1.595_769_121_605_731).abs() < 1e-12);
    // antiderivative 2(2θ−1)/√(θ(1−θ)) / (2√(2π)); mpmath 0.92131773192356128
    assert!((r.interval_mass.unwrap() - 0.921_317_731_923_561).abs() < 1e-12);
    for i in 1..20 {
        let r = revuz_targets(i as f64 / 20.0, None).unwrap();
        assert!((r.l_mass - 4.0 * r.eta_density_mass).abs() <= 1e-12 * r.l_mass);
    }
    assert!(revuz_targets(0.5, Some((0.0, 0.5))).is_err());
    assert!(revuz_targets(0.5, Some((0.5, 1.0))).is_err());
}

#[test]
fn boundary_surrogate_converges() {
    // mpmath: ε=0.1 → 0.75693975660605, ε=0.05 → 0.77768167250438, ε=1e-3 → 0.79748551873699
    assert!((boundary_surrogate(0.1, 0.5).unwrap() - 0.756_939_756_606_048).abs() < 1e-10);
    assert!((boundary_surrogate(0.05, 0.5).unwrap() - 0.777_681_672_504_375).abs() < 1e-10);
    let v = boundary_surrogate(1e-3, 0.5).unwrap();
    assert!((v - 0.797_485_518_736_995).abs() < 1e-10);
    assert!((v / (2.0 / PI).sqrt() - 1.0).abs() < 0.02);
    assert!(boundary_surrogate(0.6, 0.5).is_err());
}

#[test]
fn noncentral_norm_closed_form() {
    for &mu in &[1e-6, 0.1, 0.5, 1.0, 3.0, 10.0, 40.0] {
        let exact = (2.0 / PI).sqrt() * (-mu * mu / 2.0f64).exp()
            + (mu + 1.0 / mu) * libm::erf(mu / 2f64.sqrt());
        assert!((mean_noncentral_norm(mu) - exact).abs() < 1e-10 * exact, "mu {mu}");
    }
}

#[test]
fn potential_at_origin() {
    let q = PotentialQuery::new(0.5, [0.0; 3], zero_field());
    let u = u3_potential(&q).unwrap();
    // mpmath with image-sum q_t: 0.81488091842698361
    assert!((u.value - 0.814_880_918_426_984).abs() < 1e-8, "{}", u.value);

    // independent oracle: t = v⁴ on [0,1], then e^{-t} on [1, 40]
    let qd = |t: f64| q_diag(t, 0.5);
    let head = simpson(
        |v| {
            if v == 0.0 {
                return 4.0 * (2.0 * PI.sqrt()).powf(-1.5);
            }
            let t = v.powi(4);
            (-t).exp() * (2.0 * PI * qd(t)).powf(-1.5) * 4.0 * v.powi(3)
        },
        0.0,
        1.0,
        4000,
    );
    let tail = simpson(|t| (-t).exp() * (2.0 * PI * qd(t)).powf(-1.5), 1.0, 40.0, 4000);
    assert!((u.value - head - tail).abs() < 1e-8);
}

#[test]
fn potential_matches_band_limit_monte_carlo() {
    // (1/ω₃ε³) ∫ e^{-t} P(|z₃(t,0.5)| ≤ ε) dt with exact ball probabilities,
    // sampled over t with t = v⁴ on [0,1] and an exponential tail.
    let eps = 0.005;
    let ball = |t: f64| maxwell(eps, q_diag(t, 0.5));
    let mut rng = RngStream::new(11, 0);
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let v = rng.uniform();
        let t = v.powi(4);
        acc += 4.0 * v.powi(3) * (-t).exp() * ball(t);
        let s = 1.0 - rng.uniform().ln();
        acc += (-1.0f64).exp() * ball(s);
    }
    let mc = acc / n as f64 / (OMEGA3 * eps.powi(3));
    let u = u3_potential(&PotentialQuery::new(0.5, [0.0; 3], zero_field())).unwrap().value;
    assert!((mc / u - 1.0).abs() < 0.02, "mc {mc} vs {u}");
}

/// `P(|N(0, q I₃)| ≤ r)`.
fn maxwell(r: f64, q: f64) -> f64 {
    let x = r / q.sqrt();
    libm::erf(x / 2f64.sqrt()) - (2.0 / PI).sqrt() * x * (-0.5 * x * x).exp()
}

#[test]
fn gamma3_at_zero_field() {
    let tq = TimeQuadrature::default();
    let g = gamma3(&zero_field(), 0.5, &tq).unwrap();
    assert!((g.value - 1.078_153_545_804_334).abs() < 1e-8, "{}", g.value);
    let g = gamma3(&zero_field(), 0.1, &tq).unwrap();
    assert!((g.value - 1.490_835_326_862_943).abs() < 1e-8, "{}", g.value);
}

fn random_tuple(rng: &mut RngStream, grid: &SpaceTimeGrid) -> (VectorField3, VectorField3, f64, [f64; 3]) {
    let x = sample_brownian_bridge_3d(grid, rng);
    let h = sample_brownian_bridge_3d(grid, rng);
    let th = grid.theta((rng.uniform() * grid.n() as f64) as usize);
    let a = [rng.normal() * 0.3, rng.normal() * 0.3, rng.normal() * 0.3];
    (x, h, th, a)
}

#[test]
fn directional_derivative_matches_finite_differences() {
    let grid = SpaceTimeGrid::spatial(15).unwrap();
    let mut rng = RngStream::new(5, 0);
    let delta = 1e-4;
    for _ in 0..20 {
        let (x, h, th, a) = random_tuple(&mut rng, &grid);
        let shifted = |s: f64| {
            let vals = x
                .values
                .iter()
                .zip(&h.values)
                .map(|(p, d)| [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]])
                .collect();
            u3_potential(&PotentialQuery::new(th, a, VectorField3 { values: vals }))
                .unwrap()
                .value
        };
        let fd = (shifted(delta) - shifted(-delta)) / (2.0 * delta);
        let d = u3_directional_derivative(&PotentialQuery::new(th, a, x.clone()), &h)
            .unwrap()
            .value;
        assert!((d - fd).abs() <= 1e-4 * d.abs().max(1e-3), "{d} vs {fd}");
    }
}

#[test]
fn derivative_vanishes_for_odd_direction_at_midpoint() {
    let grid = SpaceTimeGrid::spatial(15).unwrap();
    let mut rng = RngStream::new(6, 0);
    let x = sample_brownian_bridge_3d(&grid, &mut rng);
    // odd about θ = 1/2: sin(2πθ) in every component
    let h = VectorField3 {
        values: grid
            .thetas()
            .iter()
            .map(|t| {
                let s = (2.0 * PI * t).sin();
                [s, -s, 2.0 * s]
            })
            .collect(),
    };
    let d = u3_directional_derivative(&PotentialQuery::new(0.5, [0.1, 0.0, 0.2], x), &h).unwrap();
    assert!(d.value.abs() < 1e-10);
}

#[test]
fn derivative_is_linear() {
    let grid = SpaceTimeGrid::spatial(15).unwrap();
    let mut rng = RngStream::new(7, 0);
    let (x, h1, th, a) = random_tuple(&mut rng, &grid);
    let h2 = sample_brownian_bridge_3d(&grid, &mut rng);
    let sum = VectorField3 {
        values: h1
            .values
            .iter()
            .zip(&h2.values)
            .map(|(p, q)| [p[0] + q[0], p[1] + q[1], p[2] + q[2]])
            .collect(),
    };
    let q = PotentialQuery::new(th, a, x);
    let d1 = u3_directional_derivative(&q, &h1).unwrap().value;
    let d2 = u3_directional_derivative(&q, &h2).unwrap().value;
    let ds = u3_directional_derivative(&q, &sum).unwrap().value;
    assert!((ds - d1 - d2).abs() <= 1e-12 * (d1.abs() + d2.abs()).max(1.0));
}

#[test]
fn continuity_in_level() {
    let grid = SpaceTimeGrid::spatial(15).unwrap();
    let mut rng = RngStream::new(8, 0);
    let x = sample_brownian_bridge_3d(&grid, &mut rng);
    let a = [0.2, -0.1, 0.3];
    let base = u3_potential(&PotentialQuery::new(0.4, a, x.clone())).unwrap().value;
    let gap = |s: f64| {
        let v = u3_potential(&PotentialQuery::new(0.4, [a[0] + s, a[1], a[2] - s], x.clone()))
            .unwrap()
            .value;
        (v - base).abs()
    };
    let (g1, g2) = (gap(1e-2), gap(5e-3));
    assert!(g2 <= 0.5 * g1 * 1.05, "{g1} {g2}");
}

#[test]
fn uniform_bound() {
    let thetas = [0.05, 0.2, 0.5, 0.8];
    let times: Vec<f64> = (0..400).map(|i| 10f64.powf(-12.0 + 14.0 * i as f64 / 399.0)).collect();
    let c0 = check_estq(&thetas, &times, &KernelParams::default()).unwrap();
    // ∫ e^{-t}(t^{-3/4} ∨ 1) dt = 4∫₀¹ e^{-v⁴} dv + e^{-1}
    let i = 4.0 * simpson(|v| (-v.powi(4)).exp(), 0.0, 1.0, 2000) + (-1.0f64).exp();
    let bound = c0 * i / (2.0 * PI).powf(1.5);
    assert!((uniform_potential_bound(c0) - bound).abs() < 1e-10 * bound);
    let grid = SpaceTimeGrid::spatial(15).unwrap();
    let mut rng = RngStream::new(9, 0);
    for &th in &thetas {
        for _ in 0..3 {
            let x = sample_brownian_bridge_3d(&grid, &mut rng);
            for &a in &[[0.0; 3], [0.1, 0.0, 0.0], [0.3, -0.2, 0.1]] {
                let u = u3_potential(&PotentialQuery::new(th, a, x.clone())).unwrap().value;
                assert!((th * (1.0 - th)).powf(1.5) * u <= bound);
            }
        }
    }
}

fn rotate(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn potential_is_rotation_invariant(alpha in 0.0f64..std::f64::consts::TAU, beta in 0.0f64..std::f64::consts::PI, seed in 0u64..1000) {
        let (ca, sa, cb, sb) = (alpha.cos(), alpha.sin(), beta.cos(), beta.sin());
        // R = R_z(α) R_x(β)
        let r = [[ca, -sa * cb, sa * sb], [sa, ca * cb, -ca * sb], [0.0, sb, cb]];
        let grid = SpaceTimeGrid::spatial(15).unwrap();
        let mut rng = RngStream::new(seed, 3);
        let x = sample_brownian_bridge_3d(&grid, &mut rng);
        let a = [0.1, -0.2, 0.05];
        let xr = VectorField3 { values: x.values.iter().map(|v| rotate(&r, *v)).collect() };
        let u = u3_potential(&PotentialQuery::new(0.3, a, x)).unwrap().value;
        let ur = u3_potential(&PotentialQuery::new(0.3, rotate(&r, a), xr)).unwrap().value;
        prop_assert!((u - ur).abs() <= 1e-10 * u.max(1.0));
    }
}
