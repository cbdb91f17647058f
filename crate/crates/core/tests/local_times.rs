use std::f64::consts::PI;

use proptest::prelude::*;
use reflab::grid::{ScalarField, SpaceTimeGrid};
use reflab::local_times::*;
use reflab::potentials::band_probability;
use reflab::reflected_spde::*;
use reflab::rng::RngStream;
use reflab::samplers::{sample_bessel3_bridge, sample_brownian_bridge};
use reflab::stats::{loglog_slope, mean_stderr};

fn noisy(n: usize, dt: f64, t: f64, seed: u64, events: bool) -> Trajectory {
    let grid = SpaceTimeGrid::new(n, dt, t).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let x0 = sample_bessel3_bridge(&grid, &mut rng);
    solve_reflected(
        &x0,
        &grid,
        &mut rng,
        &SolveOptions {
            probes: (0..n).collect(),
            record_events: events,
            ..Default::default()
        },
    )
    .unwrap()
}

fn positive_deterministic() -> Trajectory {
    let grid = SpaceTimeGrid::new(31, 1e-3, 0.2).unwrap();
    let x0 = ScalarField::from_fn(&grid, |t| 5.0 * (PI * t).sin());
    solve_reflected(
        &x0,
        &grid,
        &mut RngStream::new(0, 0),
        &SolveOptions {
            noise_scale: 0.0,
            probes: vec![15],
            record_events: true,
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn band_above_path_is_empty() {
    let tr = noisy(31, 1e-3, 0.2, 1, false);
    let top = tr.probe(15).unwrap().values.iter().cloned().fold(0.0, f64::max);
    assert_eq!(occupation_band(&tr, 15, top + 0.01, 0.1).unwrap().value, 0.0);
    assert!(occupation_band(&tr, 15, -0.1, 0.1).is_err());
    assert!(occupation_band(&tr, 15, 0.1, 0.0).is_err());
    let bare = solve_reflected(
        &ScalarField::zeros(31),
        &tr.grid,
        &mut RngStream::new(0, 0),
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(occupation_band(&bare, 15, 0.1, 0.1).is_err());
}

#[test]
fn estimators_are_additive_in_time() {
    let tr = noisy(31, 1e-3, 0.4, 2, false);
    let end = tr.steps();
    let half = end / 2;
    let w = |start, end| Window { start, end };
    for site in [3, 15, 27] {
        let all = occupation_band(&tr, site, 0.2, 0.15).unwrap().value;
        let a = occupation_band_window(&tr, site, 0.2, 0.15, w(0, half)).unwrap().value;
        let b = occupation_band_window(&tr, site, 0.2, 0.15, w(half, end)).unwrap().value;
        assert!((all - a - b).abs() < 1e-12);
        let all = renormalized_local_time(&tr, site, 0.3).unwrap().value;
        let a = renormalized_local_time_window(&tr, site, 0.3, w(0, half)).unwrap().value;
        let b = renormalized_local_time_window(&tr, site, 0.3, w(half, end)).unwrap().value;
        assert!((all - a - b).abs() < 1e-12 * all.max(1.0));
    }
    assert!(occupation_band_window(&tr, 15, 0.2, 0.1, w(half, end + 1)).is_err());
}

#[test]
fn positive_run_gives_zero_local_times() {
    let tr = positive_deterministic();
    assert_eq!(renormalized_local_time(&tr, 15, 0.2).unwrap().value, 0.0);
    let r = eta_density_check(&tr, 15, 0.2).unwrap();
    assert!(r.inconclusive);
    assert_eq!(r.ratio, None);
    let s = small_level_rescale(&tr, 15, 0.0, 0.1).unwrap();
    assert!(s.level_zero);
    assert_eq!(s.value, 0.0);
    assert_eq!(small_level_rescale(&tr, 15, 0.2, 0.05).unwrap().value, 0.0);
    let d = check_decomposition(&tr, 1e-10).unwrap();
    assert_eq!(d.steps_with_mass, 0);
    let z = zero_set_stats(&tr, 1e-3).unwrap();
    assert_eq!(z.fraction_time_touching, 0.0);
}

#[test]
fn resolution_warning_follows_band_width() {
    let tr = noisy(15, 1e-3, 0.05, 3, false);
    assert!(!renormalized_local_time(&tr, 7, 0.2).unwrap().resolution_warning);
    assert!(renormalized_local_time(&tr, 7, 0.05).unwrap().resolution_warning);
}

#[test]
fn occupation_formula_identities() {
    let tr = noisy(31, 1e-3, 0.5, 4, false);
    let site = 15;
    let levels = uniform_levels(0.0, 3.0, 0.05).unwrap();
    let step = |a: f64| if a < 0.4 { 1.0 } else if a < 0.8 { -2.0 } else { 0.5 };
    assert!(occupation_formula_residual(&tr, site, &step, &levels).unwrap() <= 1e-12);
    assert!(occupation_formula_residual(&tr, site, &|_| 1.0, &levels).unwrap() <= 1e-12);
    let r1 = occupation_formula_residual(&tr, site, &|a| a, &uniform_levels(0.0, 3.0, 0.04).unwrap()).unwrap();
    let r2 = occupation_formula_residual(&tr, site, &|a| a, &uniform_levels(0.0, 3.0, 0.02).unwrap()).unwrap();
    assert!(r1 / r2 >= 1.9, "{r1} vs {r2}");
    assert!(occupation_formula_residual(&tr, site, &|a| a, &[0.0, 0.01]).is_err());
    assert!(occupation_formula_residual(&tr, site, &|_| 0.0, &levels).is_err());
}

#[test]
fn boundary_functional_domain_and_symmetry() {
    let tr = noisy(63, 1e-3, 0.1, 5, false);
    assert!(boundary_functional(&tr, 0.02, 0.5, Side::Left).is_err());
    assert!(boundary_functional(&tr, 0.6, 0.5, Side::Left).is_err());
    assert!(boundary_functional(&tr, 0.1, 1.0, Side::Left).is_err());
    assert!(boundary_functional(&tr, 0.1, 0.5, Side::Right).unwrap() >= 0.0);

    let (mut left, mut right) = (Vec::new(), Vec::new());
    for seed in 0..200 {
        let grid = SpaceTimeGrid::new(31, 1e-3, 0.2).unwrap();
        let tr = solve_reflected(
            &ScalarField::zeros(31),
            &grid,
            &mut RngStream::new(100 + seed, 0),
            &SolveOptions::default(),
        )
        .unwrap();
        left.push(boundary_functional(&tr, 0.1, 0.5, Side::Left).unwrap());
        right.push(boundary_functional(&tr, 0.1, 0.5, Side::Right).unwrap());
    }
    let (ml, sl) = mean_stderr(&left);
    let (mr, sr) = mean_stderr(&right);
    assert!((ml - mr).abs() < 4.0 * (sl * sl + sr * sr).sqrt(), "{ml} vs {mr}");
}

#[test]
fn decomposition_support_is_on_zero_set() {
    let tr = noisy(63, 1e-3, 0.2, 6, true);
    let d = check_decomposition(&tr, 1e-10).unwrap();
    assert!(d.steps_with_mass > 0);
    assert!(d.support_on_zero_set);
    assert!(d.max_u_on_support <= 1e-10);
    assert_eq!(d.cluster_counts.len(), d.steps_with_mass);
    assert!(d.single_cluster_fraction > 0.0 && d.single_cluster_fraction <= 1.0);
    let bare = noisy(15, 1e-3, 0.05, 6, false);
    assert!(check_decomposition(&bare, 1e-10).is_err());
}

#[test]
fn zero_set_fraction_is_monotone_in_tol() {
    let tr = noisy(63, 1e-3, 1.0, 7, false);
    let tols = [1e-4, 1e-3, 1e-2, 1e-1];
    let f: Vec<f64> = tols.iter().map(|&t| zero_set_stats(&tr, t).unwrap().fraction_time_touching).collect();
    assert!(f.windows(2).all(|w| w[1] >= w[0]), "{f:?}");
    let z = zero_set_stats(&tr, 1e-3).unwrap();
    assert_eq!(z.subinterval_hits.len(), 10);
    assert!(z.every_subinterval_hit());
    let gaps: usize = z.gap_histogram.counts.iter().sum();
    assert_eq!(gaps + 1, z.touching_steps);
    assert!(zero_set_stats(&tr, 0.0).is_err());
}

/// Mid-site values of the grid bridge conditioned positive at every site.
fn grid_law_band(grid: &SpaceTimeGrid, site: usize, lo: f64, hi: f64, draws: usize) -> (f64, f64) {
    let mut rng = RngStream::new(999, 0);
    let mut hits = Vec::with_capacity(draws);
    while hits.len() < draws {
        let b = sample_brownian_bridge(grid, &mut rng);
        if b.min() > 0.0 {
            let v = b.values[site];
            hits.push(if v >= lo && v < hi { 1.0 } else { 0.0 });
        }
    }
    mean_stderr(&hits)
}

#[test]
fn stationary_band_matches_grid_law() {
    // the scheme's own invariant law, not the continuum one; see the
    // stationary-start test in reflected_spde
    let grid = SpaceTimeGrid::new(15, 1e-5, 0.5).unwrap();
    let mid = grid.nearest_site(0.5);
    let mut occ = Vec::new();
    for r in 0..100 {
        let mut rng = RngStream::new(8, r);
        let mut x0;
        loop {
            x0 = sample_brownian_bridge(&grid, &mut rng);
            if x0.min() > 0.0 {
                break;
            }
        }
        let tr = solve_reflected(
            &x0,
            &grid,
            &mut rng,
            &SolveOptions {
                probes: vec![mid],
                ..Default::default()
            },
        )
        .unwrap();
        occ.push(occupation_band(&tr, mid, 0.5, 0.1).unwrap().value / 0.5);
    }
    let (m, se) = mean_stderr(&occ);
    let (p, pse) = grid_law_band(&grid, mid, 0.5, 0.6, 20_000);
    let target = p / 0.1;
    assert!((m - target).abs() < 3.0 * (se * se + (pse / 0.1).powi(2)).sqrt(), "{m} ± {se} vs {target}");
}

#[test]
#[ignore = "grid stationary law differs from the continuum marginal by O(sqrt h); see decisions ledger"]
fn stationary_band_matches_continuum_quadrature() {
    let grid = SpaceTimeGrid::new(63, 1e-4, 1.0).unwrap();
    let mid = grid.nearest_site(0.5);
    let occ: Vec<f64> = (0..200)
        .map(|r| {
            let mut rng = RngStream::new(9, r);
            let x0 = sample_bessel3_bridge(&grid, &mut rng);
            let tr = solve_reflected(
                &x0,
                &grid,
                &mut rng,
                &SolveOptions {
                    probes: vec![mid],
                    ..Default::default()
                },
            )
            .unwrap();
            occupation_band(&tr, mid, 0.5, 0.1).unwrap().value
        })
        .collect();
    let (m, se) = mean_stderr(&occ);
    let target = band_probability(0.5, 0.5, 0.6) / 0.1;
    assert!((m - target).abs() < 3.0 * se, "{m} ± {se} vs {target}");
}

#[test]
fn interior_band_scales_linearly() {
    let eps = [0.05, 0.1, 0.2];
    let mut sums = [0.0; 3];
    for r in 0..40 {
        let tr = noisy(31, 1e-4, 0.5, 200 + r, false);
        for (k, e) in eps.iter().enumerate() {
            sums[k] += occupation_band(&tr, 15, 0.5, *e).unwrap().value * e;
        }
    }
    let slope = loglog_slope(&eps, &sums).unwrap();
    assert!((slope - 1.0).abs() < 0.1, "{slope}");
}

#[test]
fn eta_ratio_stable_under_doubling_horizon() {
    let ratio = |t: f64, base: u64| {
        let (mut eta, mut l) = (0.0, 0.0);
        for r in 0..60 {
            let tr = noisy(31, 1e-4, t, base + r, false);
            let c = eta_density_check(&tr, 15, 0.3).unwrap();
            eta += c.eta;
            l += c.quarter_local_time;
        }
        eta / l
    };
    let a = ratio(0.5, 300);
    let b = ratio(1.0, 400);
    assert!((a / b - 1.0).abs() < 0.35, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimators_are_nonnegative(seed in 0u64..1000, a in 0.0f64..1.0, eps in 0.01f64..0.5) {
        let tr = noisy(15, 2e-3, 0.05, seed, false);
        prop_assert!(occupation_band(&tr, 7, a, eps).unwrap().value >= 0.0);
        prop_assert!(renormalized_local_time(&tr, 7, eps).unwrap().value >= 0.0);
    }
}
