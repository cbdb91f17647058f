//! The acceptance suite behind `verify`.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    batched_statistic, boundary_surrogate_results, reduce_rows, replica_row, run_ensemble, EnsembleSpec,
    EstimatorResult, ExperimentConfig, ExperimentId, Provenance, Tolerance,
};
use crate::error::{invalid, Result};
use crate::grid::{SpaceTimeGrid, VectorField3};
use crate::heat_kernels::{check_estq, q_infinity, q_infinity_series, KernelParams};
use crate::potentials::{
    gamma3, marginal_cdf, sqrt_8_over_pi, u3_directional_derivative, u3_potential, uniform_potential_bound,
    PotentialQuery, TimeQuadrature,
};
use crate::reflected_spde::{
    check_closed_formula, check_weak_form, skorohod_1d, skorohod_band_estimate, solve_reflected, SolveOptions,
};
use crate::rng::RngStream;
use crate::samplers::{sample_bessel3_bridge, sample_brownian_bridge_3d};
use crate::stats::{batch_means, default_batches, ks_one_sample, loglog_slope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Smoke,
    Full,
}

impl Level {
    fn pick<T>(&self, smoke: T, full: T) -> T {
        match self {
            Level::Smoke => smoke,
            Level::Full => full,
        }
    }
}

/// `(id, title, anchor)` of every criterion.
pub const CRITERIA: [(u8, &str, &str); 11] = [
    (1, "kernel identity", "series q_inf equals min(θ,θ′) − θθ′"),
    (2, "Bessel-bridge sampler", "marginal density of the 3-Bessel bridge"),
    (3, "1D Skorohod baseline", "2L is the local time of reflected Brownian motion"),
    (4, "Revuz mass of eta", "Revuz measure of the reflection measure"),
    (5, "renormalized local time", "3/ε³ times occupation of [0,ε] converges to l"),
    (6, "l^0 vanishes", "local time at level zero is identically zero"),
    (7, "small-level rescale", "a⁻² l^a converges to l as a ↓ 0"),
    (8, "occupation-time formula", "occupation times formula"),
    (9, "boundary scaling", "√ε-weighted boundary mass of eta tends to √(2/π) t"),
    (10, "potential machinery", "U₃ derivative, uniform bound and Γ₃ limit"),
    (11, "structural invariants", "complementarity, weak form, closed formula, zero set"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub anchor: String,
    pub pass: bool,
    pub results: Vec<EstimatorResult>,
    /// Wall time; excluded from the summary so outputs stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionOutcome {
    fn new(id: u8, results: Vec<EstimatorResult>, seconds: f64) -> Self {
        let (_, title, anchor) = CRITERIA[(id - 1) as usize];
        Self {
            id,
            title: title.to_string(),
            anchor: anchor.to_string(),
            pass: !results.is_empty() && results.iter().all(|r| r.pass),
            results,
            seconds,
        }
    }

    /// `criterion N [PASS|FAIL] title: first failing row and failure count, or row count`.
    pub fn line(&self) -> String {
        let failing = self.results.iter().filter(|r| !r.pass).count();
        let detail = match self.results.iter().find(|r| !r.pass) {
            Some(r) => format!(
                "{} {} = {:.6} (stderr {:.2e}, target {:.6}) [{failing}/{} rows failed]",
                r.experiment,
                r.param,
                r.estimate,
                r.stderr,
                r.target,
                self.results.len()
            ),
            None => format!("{} rows", self.results.len()),
        };
        format!(
            "criterion {:>2} [{}] {}: {} ({:.1}s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: Level,
    pub seed: u64,
    pub criteria: Vec<CriterionOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn summary(&self) -> serde_json::Value {
        let crit: Vec<serde_json::Value> = self
            .criteria
            .iter()
            .map(|c| {
                serde_json::json!({
                    "id": c.id,
                    "title": c.title,
                    "anchor": c.anchor,
                    "pass": c.pass,
                    "rows": c.results.len(),
                    "failed_rows": c.results.iter().filter(|r| !r.pass)
                        .map(|r| format!("{}:{}", r.experiment, r.param)).collect::<Vec<_>>(),
                    "provenance": c.results.iter().map(|r| r.provenance.as_str())
                        .collect::<std::collections::BTreeSet<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "level": self.level,
            "seed": self.seed,
            "passed": self.criteria.iter().filter(|c| c.pass).count(),
            "total": self.criteria.len(),
            "failed": self.criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect::<Vec<_>>(),
            "criteria": crit,
        })
    }
}

fn timed(id: u8, f: impl FnOnce() -> Result<Vec<EstimatorResult>>) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let rows = f()?;
    Ok(CriterionOutcome::new(id, rows, start.elapsed().as_secs_f64()))
}

/// Runs every criterion. The stationary ensemble behind criteria 4–7 and the
/// complementarity check of 11 is simulated once.
pub fn verify_all(level: Level, seed: u64) -> Result<VerifyReport> {
    verify_with(level, seed, |_| {})
}

/// As [`verify_all`], calling `progress` after each criterion.
pub fn verify_with(level: Level, seed: u64, mut progress: impl FnMut(&CriterionOutcome)) -> Result<VerifyReport> {
    let mut criteria = Vec::new();
    let mut push = |c: CriterionOutcome, list: &mut Vec<CriterionOutcome>| {
        progress(&c);
        list.push(c);
    };
    for id in 1..=3 {
        push(verify_criterion(id, level, seed)?, &mut criteria);
    }
    let start = Instant::now();
    let st = stationary(level, seed)?;
    let shared = start.elapsed().as_secs_f64();
    for (id, rows) in [(4, &st.abscon), (5, &st.intl1), (6, &st.l0), (7, &st.intl4)] {
        push(CriterionOutcome::new(id, rows.clone(), shared / 4.0), &mut criteria);
    }
    for id in 8..=10 {
        push(verify_criterion(id, level, seed)?, &mut criteria);
    }
    let c11 = timed(11, || structure(level, seed, Some(st.complementarity.clone())))?;
    push(c11, &mut criteria);
    Ok(VerifyReport { level, seed, criteria })
}

/// Runs a single criterion.
pub fn verify_criterion(id: u8, level: Level, seed: u64) -> Result<CriterionOutcome> {
    match id {
        1 => timed(1, kernel_identity),
        2 => timed(2, || bessel_sampler(level, seed)),
        3 => timed(3, || skorohod_baseline(level, seed)),
        4..=7 => {
            let start = Instant::now();
            let st = stationary(level, seed)?;
            let rows = match id {
                4 => st.abscon,
                5 => st.intl1,
                6 => st.l0,
                _ => st.intl4,
            };
            Ok(CriterionOutcome::new(id, rows, start.elapsed().as_secs_f64()))
        }
        8 => timed(8, || occupation_formula(level, seed)),
        9 => timed(9, || boundary_scaling(level, seed)),
        10 => timed(10, || potential_machinery(level, seed)),
        11 => timed(11, || structure(level, seed, None)),
        _ => invalid(format!("no criterion {id}")),
    }
}

fn kernel_identity() -> Result<Vec<EstimatorResult>> {
    let params = KernelParams {
        truncation_k: 10_000,
        tail_tol: 1e-8,
    };
    let pts: Vec<f64> = (0..20).map(|i| (i as f64 + 0.5) / 20.0).collect();
    let mut worst: f64 = 0.0;
    for &a in &pts {
        for &b in &pts {
            let s = q_infinity_series(a, b, &params)?;
            worst = worst.max((s.value - q_infinity(a, b)).abs());
        }
    }
    Ok(vec![EstimatorResult::exact(
        "kernel",
        "q_inf_lattice_max_error,K=10000",
        worst,
        400,
        0.0,
        Provenance::Paper,
        Tolerance::AtMost(1e-8),
    )])
}

fn bessel_sampler(level: Level, seed: u64) -> Result<Vec<EstimatorResult>> {
    let draws = level.pick(10_000, 100_000);
    let grid = SpaceTimeGrid::spatial(15)?;
    let mid = grid.nearest_site(0.5);
    let vals: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed ^ 0xB55E, r as u64);
            sample_bessel3_bridge(&grid, &mut rng).values[mid]
        })
        .collect();
    let bm = batch_means(&vals, default_batches(draws))?;
    let ks = ks_one_sample(&vals, |a| marginal_cdf(0.5, a));
    Ok(vec![
        EstimatorResult::from_batches(
            "bessel",
            "mean_e(0.5)",
            bm,
            0.5 * sqrt_8_over_pi(),
            Provenance::Paper,
            Tolerance::stat(3.0, 0.0),
        ),
        EstimatorResult::exact(
            "bessel",
            "ks_p_value_e(0.5)",
            ks.p_value,
            draws,
            0.01,
            Provenance::Paper,
            Tolerance::AtLeast(0.01),
        ),
    ])
}

/// Reflected path of a Brownian driver with step `dt` (`stride` = 1) or of
/// its subsample at every `stride`-th point.
fn skorohod_on(b: &[f64], stride: usize, dt: f64, eps: &[f64]) -> Result<Vec<f64>> {
    let sub: Vec<f64> = b.iter().step_by(stride).copied().collect();
    let p = skorohod_1d(0.0, &sub)?;
    let mut row = vec![*p.pusher.last().expect("path is non-empty")];
    row.extend(eps.iter().map(|&e| skorohod_band_estimate(&p, dt * stride as f64, e)));
    Ok(row)
}

fn brownian_path(seed: u64, r: usize, dt: f64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, r as u64);
    let steps = (1.0 / dt).round() as usize;
    let sd = dt.sqrt();
    let mut b = Vec::with_capacity(steps + 1);
    b.push(0.0);
    for k in 0..steps {
        b.push(b[k] + sd * rng.normal());
    }
    b
}

fn skorohod_baseline(level: Level, seed: u64) -> Result<Vec<EstimatorResult>> {
    let target = (2.0 / PI).sqrt();
    let paths = level.pick(20_000, 100_000);
    let l: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|r| skorohod_on(&brownian_path(seed ^ 0x5C0, r, 1e-4), 1, 1e-4, &[]).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let bm = batch_means(&l, default_batches(paths))?;
    let mut out = vec![EstimatorResult::from_batches(
        "skorohod",
        "mean_L(1),dt=1e-4",
        bm,
        target,
        Provenance::Paper,
        Tolerance::rel(0.02),
    )];

    // Monitoring at step dt shifts both L and the band estimate by O(√dt);
    // the same path read at dt and 4dt gives the extrapolation 2·x(dt) − x(4dt).
    let eps = [0.2, 0.1, 0.05];
    let dt = 1e-5;
    let paths = level.pick(2_000, 20_000);
    let rows: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|r| {
            let b = brownian_path(seed ^ 0x5C1, r, dt);
            let fine = skorohod_on(&b, 1, dt, &eps)?;
            let coarse = skorohod_on(&b, 4, dt, &eps)?;
            Ok(fine.iter().zip(&coarse).map(|(f, c)| 2.0 * f - c).collect())
        })
        .collect::<Result<_>>()?;
    for (j, &e) in eps.iter().enumerate() {
        let diff: Vec<f64> = rows.iter().map(|r| r[j + 1] - r[0]).collect();
        let bm = batch_means(&diff, default_batches(paths))?;
        // E[est_ε − L(1)] from the exact band-occupation law; ≈ −0.487ε
        let bias = [-0.0947, -0.0487, -0.0247][j];
        out.push(EstimatorResult::from_batches(
            "skorohod",
            format!("band_minus_L,eps={e}"),
            bm,
            bias,
            Provenance::DerivedQuadrature,
            Tolerance::stat(3.0, 0.1),
        ));
    }
    let (s, se, nb) = batched_statistic(&rows, |m| {
        let gaps: Vec<f64> = (0..eps.len()).map(|j| (m[0] - m[j + 1]).abs()).collect();
        loglog_slope(&eps, &gaps).ok()
    });
    out.push(EstimatorResult::new(
        "skorohod",
        "band_error_slope",
        s,
        se,
        nb,
        paths,
        1.0,
        Provenance::DerivedQuadrature,
        Tolerance::abs(0.15),
    ));
    Ok(out)
}

/// Results of the shared stationary ensemble.
struct Stationary {
    abscon: Vec<EstimatorResult>,
    intl1: Vec<EstimatorResult>,
    l0: Vec<EstimatorResult>,
    intl4: Vec<EstimatorResult>,
    complementarity: Vec<f64>,
}

fn stationary_configs(level: Level, seed: u64) -> [ExperimentConfig; 3] {
    let base = |id| ExperimentConfig {
        n_sites: level.pick(32, 128),
        dt: level.pick(5e-4, 1e-4),
        horizon: 1.0,
        replicas: level.pick(64, 1000),
        seed,
        ..ExperimentConfig::preset(id)
    };
    [
        base(ExperimentId::Abscon),
        base(ExperimentId::Intl1),
        base(ExperimentId::Intl4),
    ]
}

fn stationary(level: Level, seed: u64) -> Result<Stationary> {
    let cfgs = stationary_configs(level, seed);
    for c in &cfgs {
        c.validate()?;
    }
    let spec = EnsembleSpec::from_config(&cfgs[0])?;
    let rows = run_ensemble(&spec, |tr| {
        let r: Vec<Vec<f64>> = cfgs.iter().map(|c| replica_row(c, tr)).collect::<Result<_>>()?;
        Ok(r)
    })?;
    let split = |k: usize| -> Vec<Vec<f64>> { rows.iter().map(|r| r[k].clone()).collect() };
    let abscon_rows = split(0);
    let complementarity: Vec<f64> = abscon_rows.iter().map(|r| *r.last().expect("row")).collect();
    let all_abscon = reduce_rows(&cfgs[0], &abscon_rows)?;
    let abscon = all_abscon
        .into_iter()
        .filter(|r| r.param.starts_with("eta_density") || r.param.starts_with("interval_mass"))
        .collect();
    let intl4_all = reduce_rows(&cfgs[2], &split(2))?;
    let (l0, intl4): (Vec<_>, Vec<_>) = intl4_all.into_iter().partition(|r| r.param.starts_with("l0"));
    let l0 = l0
        .into_iter()
        .filter(|r| r.param == "l0_slope")
        .map(|mut r| {
            r.experiment = "l0".into();
            r
        })
        .collect();
    Ok(Stationary {
        abscon,
        intl1: reduce_rows(&cfgs[1], &split(1))?,
        l0,
        intl4,
        complementarity,
    })
}

fn occupation_formula(level: Level, seed: u64) -> Result<Vec<EstimatorResult>> {
    let cfg = ExperimentConfig {
        replicas: level.pick(8, 32),
        seed,
        ..ExperimentConfig::preset(ExperimentId::Otfr)
    };
    super::run_experiment(&cfg)
}

fn boundary_scaling(level: Level, seed: u64) -> Result<Vec<EstimatorResult>> {
    let sur = ExperimentConfig {
        analytic_surrogate: true,
        ..ExperimentConfig::preset(ExperimentId::Intl3)
    };
    let mut out = boundary_surrogate_results(&sur)?;
    let cfg = ExperimentConfig {
        n_sites: level.pick(127, 512),
        dt: level.pick(1e-4, 1e-6),
        horizon: level.pick(1.0, 0.25),
        replicas: level.pick(16, 64),
        seed,
        ..ExperimentConfig::preset(ExperimentId::Intl3)
    };
    out.extend(super::run_experiment(&cfg)?);
    Ok(out)
}

fn potential_machinery(level: Level, seed: u64) -> Result<Vec<EstimatorResult>> {
    let mut out = Vec::new();

    let grid = SpaceTimeGrid::spatial(15)?;
    let mut rng = RngStream::new(seed ^ 0x907, 0);
    let delta = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = sample_brownian_bridge_3d(&grid, &mut rng);
        let h = sample_brownian_bridge_3d(&grid, &mut rng);
        let th = grid.theta((rng.uniform() * grid.n() as f64) as usize);
        let a = [rng.normal() * 0.3, rng.normal() * 0.3, rng.normal() * 0.3];
        let shifted = |s: f64| -> Result<f64> {
            let vals = x
                .values
                .iter()
                .zip(&h.values)
                .map(|(p, d)| [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]])
                .collect();
            Ok(u3_potential(&PotentialQuery::new(th, a, VectorField3 { values: vals }))?.value)
        };
        let fd = (shifted(delta)? - shifted(-delta)?) / (2.0 * delta);
        let d = u3_directional_derivative(&PotentialQuery::new(th, a, x.clone()), &h)?.value;
        worst = worst.max((d - fd).abs() / d.abs().max(1e-3));
    }
    out.push(EstimatorResult::exact(
        "potentials",
        "derivative_fd_max_rel_error",
        worst,
        20,
        0.0,
        Provenance::Paper,
        Tolerance::AtMost(1e-4),
    ));

    let thetas = [0.02, 0.05, 0.2, 0.5, 0.8, 0.95];
    let times: Vec<f64> = (0..400).map(|i| 10f64.powf(-12.0 + 14.0 * i as f64 / 399.0)).collect();
    let bound = uniform_potential_bound(check_estq(&thetas, &times, &KernelParams::default())?);
    let mut ratio: f64 = 0.0;
    let mut count = 0;
    for &th in &thetas {
        for _ in 0..3 {
            let x = sample_brownian_bridge_3d(&grid, &mut rng);
            for a in [[0.0; 3], [0.1, 0.0, 0.0], [0.3, -0.2, 0.1]] {
                let u = u3_potential(&PotentialQuery::new(th, a, x.clone()))?.value;
                ratio = ratio.max((th * (1.0 - th)).powf(1.5) * u / bound);
                count += 1;
            }
        }
    }
    out.push(EstimatorResult::exact(
        "potentials",
        "uniform_bound_max_ratio",
        ratio,
        count,
        1.0,
        Provenance::Paper,
        Tolerance::AtMost(1.0),
    ));

    // grid with sites at multiples of 0.01
    let grid = SpaceTimeGrid::spatial(99)?;
    let quad = TimeQuadrature::default();
    let draws = level.pick(256, 2000);
    let mut vars = Vec::new();
    for (k, &th) in [0.5, 0.1, 0.01].iter().enumerate() {
        let vals: Vec<f64> = (0..draws)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(seed ^ 0x6A3, (k * draws + r) as u64);
                let x = sample_brownian_bridge_3d(&grid, &mut rng);
                gamma3(&x, th, &quad).map(|v| v.value)
            })
            .collect::<Result<_>>()?;
        let bm = batch_means(&vals, default_batches(draws))?;
        let m = bm.mean;
        vars.push(vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (draws - 1) as f64);
        out.push(EstimatorResult::from_batches(
            "potentials",
            format!("gamma3_mean,theta={th}"),
            bm,
            (1.0 - th).sqrt() * sqrt_8_over_pi(),
            Provenance::Paper,
            Tolerance::stat(3.0, 0.0),
        ));
    }
    let decreasing = vars.windows(2).all(|w| w[1] < w[0]);
    out.push(EstimatorResult::exact(
        "potentials",
        "gamma3_variance_decreasing",
        if decreasing { 1.0 } else { 0.0 },
        3 * draws,
        1.0,
        Provenance::Paper,
        Tolerance::AtLeast(1.0),
    ));
    Ok(out)
}

fn structure(level: Level, seed: u64, complementarity: Option<Vec<f64>>) -> Result<Vec<EstimatorResult>> {
    let mut out = Vec::new();
    let comp = match complementarity {
        Some(c) => c,
        None => {
            let cfg = ExperimentConfig {
                replicas: 16,
                dt: 1e-3,
                seed,
                ..ExperimentConfig::preset(ExperimentId::Abscon)
            };
            run_ensemble(&EnsembleSpec::from_config(&cfg)?, |tr| Ok(tr.diagnostics.complementarity))?
        }
    };
    out.push(EstimatorResult::exact(
        "structure",
        "max_complementarity",
        comp.iter().cloned().fold(0.0, f64::max),
        comp.len(),
        0.0,
        Provenance::Trivial,
        Tolerance::AtMost(1e-10),
    ));

    let reps = level.pick(8, 32) as u64;
    let run = |n: usize, dt: f64, r: u64, pair: bool| {
        let grid = SpaceTimeGrid::new(n, dt, 0.2)?;
        let mut rng = RngStream::new(seed ^ 0x57, r);
        let x0 = sample_bessel3_bridge(&grid, &mut rng);
        solve_reflected(
            &x0,
            &grid,
            &mut rng,
            &SolveOptions {
                pair_convolution: pair,
                snapshot_every: ((0.05 / dt).round() as usize).max(1),
                ..Default::default()
            },
        )
    };
    let phi = |t: f64| (PI * t).sin();
    let ladder = [(15usize, 4e-3), (31usize, 1e-3)];
    let mut weak = [0.0; 2];
    let mut eqfu = [0.0; 2];
    for (k, &(n, dt)) in ladder.iter().enumerate() {
        for r in 0..reps {
            let tr = run(n, dt, r + 1000 * k as u64, true)?;
            weak[k] += check_weak_form(&tr, &phi)?.max_residual / reps as f64;
            eqfu[k] += check_closed_formula(&tr, 4)?.max_eqfu_residual().powi(2) / reps as f64;
        }
    }
    out.push(EstimatorResult::exact(
        "structure",
        "weak_form_refinement_ratio",
        weak[0] / weak[1],
        2 * reps as usize,
        1.5,
        Provenance::DerivedQuadrature,
        Tolerance::AtLeast(1.5),
    ));
    out.push(EstimatorResult::exact(
        "structure",
        "closed_formula_refinement_ratio",
        (eqfu[0] / eqfu[1]).sqrt(),
        2 * reps as usize,
        1.5,
        Provenance::DerivedQuadrature,
        Tolerance::AtLeast(1.5),
    ));

    let zcfg = ExperimentConfig {
        replicas: level.pick(8, 16),
        seed,
        ..ExperimentConfig::preset(ExperimentId::Zeroset)
    };
    out.extend(super::run_experiment(&zcfg)?.into_iter().map(|mut r| {
        r.experiment = "structure".into();
        r.param = format!("zeroset_{}", r.param);
        r
    }));
    Ok(out)
}
