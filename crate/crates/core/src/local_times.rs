//! Occupation-density, local-time and zero-set estimators on a trajectory.
//!
//! Time integrals are right-endpoint Riemann sums: step `n` contributes
//! `dt·F(u(t_n, θ))` for the cell `(t_{n−1}, t_n]`. A window `(n0, n1)`
//! covers `[t_{n0}, t_{n1}]`, so estimators are exactly additive over
//! adjacent windows. Level bands are half-open, `[a, a+ε)`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::reflected_spde::Trajectory;

/// Default constant in the band resolution rule `dt ≤ c_dt·ε²`.
pub const DEFAULT_C_DT: f64 = 0.1;

/// Both sides of the η-density ratio below this are treated as zero.
pub const RATIO_FLOOR: f64 = 1e-14;

/// Step window `[t_{start}, t_{end}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn full(traj: &Trajectory) -> Self {
        Self {
            start: 0,
            end: traj.steps(),
        }
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        if self.start > self.end || self.end > traj.steps() {
            return invalid(format!(
                "window ({}, {}) outside 0..={}",
                self.start,
                self.end,
                traj.steps()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    pub site: usize,
    pub theta: f64,
    pub a: f64,
    pub eps: f64,
    pub window: Window,
    /// `(1/ε)·Σ_n 1_{[a,a+ε)}(u(t_n,θ))·dt`.
    pub value: f64,
    /// Set when `dt > c_dt·ε²`.
    pub resolution_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedEstimate {
    pub site: usize,
    pub theta: f64,
    pub eps: f64,
    pub window: Window,
    /// `(3/ε³)·Σ_n 1_{[0,ε)}(u(t_n,θ))·dt`.
    pub value: f64,
    pub resolution_warning: bool,
}

fn series(traj: &Trajectory, site: usize) -> Result<&[f64]> {
    if site >= traj.grid.n() {
        return invalid(format!("site {site} outside grid of {} sites", traj.grid.n()));
    }
    traj.probe(site)
        .map(|p| p.values.as_slice())
        .ok_or(LabError::MissingData("probe series at the requested site"))
}

fn resolution_flag(traj: &Trajectory, eps: f64, c_dt: f64) -> bool {
    let dt = traj.grid.dt();
    let coarse = dt > c_dt * eps * eps;
    if coarse {
        warn!("dt = {dt:e} exceeds {c_dt}·ε² for band width ε = {eps}; in-band sojourns are under-resolved");
    }
    coarse
}

/// Time spent by `u(·,θ_site)` in `[lo, hi)` over the window.
fn time_in(values: &[f64], dt: f64, w: Window, lo: f64, hi: f64) -> f64 {
    let hits = values[w.start + 1..=w.end]
        .iter()
        .filter(|&&v| v >= lo && v < hi)
        .count();
    hits as f64 * dt
}

/// Band occupation `(1/ε)∫ 1_{[a,a+ε)}(u(s,θ_i)) ds` over a window.
pub fn occupation_band_window(
    traj: &Trajectory,
    site: usize,
    a: f64,
    eps: f64,
    window: Window,
) -> Result<OccupationEstimate> {
    if !(a >= 0.0) || !(eps > 0.0) {
        return invalid(format!("band needs a ≥ 0 and ε > 0, got a = {a}, ε = {eps}"));
    }
    window.check(traj)?;
    let values = series(traj, site)?;
    let value = time_in(values, traj.grid.dt(), window, a, a + eps) / eps;
    Ok(OccupationEstimate {
        site,
        theta: traj.grid.theta(site),
        a,
        eps,
        window,
        value,
        resolution_warning: resolution_flag(traj, eps, DEFAULT_C_DT),
    })
}

/// Band occupation over the whole run.
pub fn occupation_band(traj: &Trajectory, site: usize, a: f64, eps: f64) -> Result<OccupationEstimate> {
    occupation_band_window(traj, site, a, eps, Window::full(traj))
}

/// `(3/ε³)·∫ 1_{[0,ε)}(u(s,θ_i)) ds` over a window.
pub fn renormalized_local_time_window(
    traj: &Trajectory,
    site: usize,
    eps: f64,
    window: Window,
) -> Result<RenormalizedEstimate> {
    if !(eps > 0.0) {
        return invalid(format!("band width must be positive, got {eps}"));
    }
    window.check(traj)?;
    let values = series(traj, site)?;
    let occ = time_in(values, traj.grid.dt(), window, 0.0, eps);
    Ok(RenormalizedEstimate {
        site,
        theta: traj.grid.theta(site),
        eps,
        window,
        value: 3.0 * occ / eps.powi(3),
        resolution_warning: resolution_flag(traj, eps, DEFAULT_C_DT),
    })
}

pub fn renormalized_local_time(traj: &Trajectory, site: usize, eps: f64) -> Result<RenormalizedEstimate> {
    renormalized_local_time_window(traj, site, eps, Window::full(traj))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaDensityRatio {
    /// Ledger density `η([0,T], θ_i)`.
    pub eta: f64,
    /// `¼·(3/ε³)·occupation of [0,ε)`.
    pub quarter_local_time: f64,
    /// `eta / quarter_local_time`; `None` when inconclusive.
    pub ratio: Option<f64>,
    /// Both sides below [`RATIO_FLOOR`].
    pub inconclusive: bool,
}

/// Compares the reflection density with a quarter of the renormalized local time.
pub fn eta_density_check(traj: &Trajectory, site: usize, eps: f64) -> Result<EtaDensityRatio> {
    let l = renormalized_local_time(traj, site, eps)?;
    let eta = traj.ledger.density[site];
    let quarter = 0.25 * l.value;
    let inconclusive = eta < RATIO_FLOOR && quarter < RATIO_FLOOR;
    let ratio = if inconclusive {
        None
    } else if quarter < RATIO_FLOOR {
        Some(f64::INFINITY)
    } else {
        Some(eta / quarter)
    };
    Ok(EtaDensityRatio {
        eta,
        quarter_local_time: quarter,
        ratio,
        inconclusive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallLevelValue {
    pub a: f64,
    pub band_eps: f64,
    /// `a⁻²·occupation_band(a, ε)`, or `(1/ε)·occupation of [0,ε)` when `a = 0`.
    pub value: f64,
    /// The `a = 0` route: the value estimates `l⁰`, which vanishes.
    pub level_zero: bool,
    pub resolution_warning: bool,
}

pub fn small_level_rescale(traj: &Trajectory, site: usize, a: f64, band_eps: f64) -> Result<SmallLevelValue> {
    let occ = occupation_band(traj, site, a, band_eps)?;
    let level_zero = a == 0.0;
    Ok(SmallLevelValue {
        a,
        band_eps,
        value: if level_zero { occ.value } else { occ.value / (a * a) },
        level_zero,
        resolution_warning: occ.resolution_warning,
    })
}

/// Bin edges `lo, lo+Δa, …` up to the first edge `≥ hi`.
pub fn uniform_levels(lo: f64, hi: f64, da: f64) -> Result<Vec<f64>> {
    if !(da > 0.0) || !(hi > lo) {
        return invalid(format!("level grid needs lo < hi and Δa > 0, got [{lo}, {hi}] Δa = {da}"));
    }
    let bins = ((hi - lo) / da).ceil() as usize;
    Ok((0..=bins.max(1)).map(|j| lo + j as f64 * da).collect())
}

/// Relative gap `|∫F(u) − Σ_j F(a_j)·l̂^{a_j}·Δa_j| / |∫F(u)|` for bins `[a_j, a_{j+1})`.
pub fn occupation_formula_residual(
    traj: &Trajectory,
    site: usize,
    f: &dyn Fn(f64) -> f64,
    levels: &[f64],
) -> Result<f64> {
    if levels.len() < 2 || levels.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("level grid needs two or more increasing edges");
    }
    let values = series(traj, site)?;
    let w = Window::full(traj);
    let run = &values[1..];
    if run.is_empty() {
        return invalid("empty range: trajectory has no steps");
    }
    let (lo, hi) = run
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo < levels[0] || hi >= levels[levels.len() - 1] {
        return invalid(format!(
            "level grid [{}, {}) does not span the range [{lo}, {hi}]",
            levels[0],
            levels[levels.len() - 1]
        ));
    }
    let dt = traj.grid.dt();
    let direct: f64 = run.iter().map(|&v| f(v)).sum::<f64>() * dt;
    if direct == 0.0 {
        return invalid("empty range: ∫F(u) vanishes");
    }
    let binned: f64 = levels
        .windows(2)
        .map(|e| {
            let da = e[1] - e[0];
            let l = time_in(values, dt, w, e[0], e[1]) / da;
            f(e[0]) * l * da
        })
        .sum();
    Ok((direct - binned).abs() / direct.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// `√ε·Σ_i (1 ∧ d_i/ε)·η_i(T)·h` over sites with `d_i < a_cut`, where `d_i`
/// is the distance to the chosen end.
pub fn boundary_functional(traj: &Trajectory, eps: f64, a_cut: f64, side: Side) -> Result<f64> {
    if !(eps > 0.0 && eps < a_cut && a_cut < 1.0) {
        return invalid(format!("need 0 < ε < a_cut < 1, got ε = {eps}, a_cut = {a_cut}"));
    }
    let h = traj.grid.h();
    if eps < 2.0 * h {
        return invalid(format!("ε = {eps} is below grid resolution 2h = {}", 2.0 * h));
    }
    let sum: f64 = traj
        .ledger
        .density
        .iter()
        .enumerate()
        .filter_map(|(i, &eta)| {
            let th = traj.grid.theta(i);
            let d = match side {
                Side::Left => th,
                Side::Right => 1.0 - th,
            };
            (d < a_cut).then(|| (d / eps).min(1.0) * eta)
        })
        .sum();
    Ok(eps.sqrt() * sum * h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionStats {
    pub steps_with_mass: usize,
    /// Largest `u` at a site receiving ledger mass.
    pub max_u_on_support: f64,
    /// Cluster count for each step with mass, in step order.
    pub cluster_counts: Vec<usize>,
    /// Steps whose supporting sites form more than one cluster.
    pub multi_cluster_steps: usize,
    /// Fraction of mass-carrying steps with a single cluster.
    pub single_cluster_fraction: f64,
    /// `max_u_on_support ≤ tol_zero`.
    pub support_on_zero_set: bool,
}

/// Support of each reflection increment: zero values and spatial clusters
/// (sites at distance ≤ 2h share a cluster).
pub fn check_decomposition(traj: &Trajectory, tol_zero: f64) -> Result<DecompositionStats> {
    if traj.events.is_empty() && traj.ledger.density.iter().any(|&v| v > 0.0) {
        return Err(LabError::MissingData("reflection events (record_events)"));
    }
    let mut counts = Vec::new();
    let mut max_u: f64 = 0.0;
    let mut i = 0;
    let ev = &traj.events;
    while i < ev.len() {
        let step = ev[i].step;
        let mut clusters = 1;
        let mut last = ev[i].site;
        max_u = max_u.max(ev[i].value);
        i += 1;
        while i < ev.len() && ev[i].step == step {
            if ev[i].site > last + 2 {
                clusters += 1;
            }
            last = ev[i].site;
            max_u = max_u.max(ev[i].value);
            i += 1;
        }
        counts.push(clusters);
    }
    let steps = counts.len();
    let single = counts.iter().filter(|&&c| c == 1).count();
    Ok(DecompositionStats {
        steps_with_mass: steps,
        max_u_on_support: max_u,
        multi_cluster_steps: steps - single,
        single_cluster_fraction: if steps == 0 { 0.0 } else { single as f64 / steps as f64 },
        cluster_counts: counts,
        support_on_zero_set: max_u <= tol_zero,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    /// Bin `k` counts gaps in `[edges[k], edges[k+1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetStats {
    pub tol: f64,
    /// Fraction of steps `n ≥ 1` with `min_i u(t_n, θ_i) ≤ tol`.
    pub fraction_time_touching: f64,
    pub touching_steps: usize,
    /// Gaps between consecutive touching times, in dyadic multiples of `dt`.
    pub gap_histogram: GapHistogram,
    /// Whether each consecutive subinterval of length 0.1 holds a touching time.
    pub subinterval_hits: Vec<bool>,
}

impl ZeroSetStats {
    pub fn every_subinterval_hit(&self) -> bool {
        !self.subinterval_hits.is_empty() && self.subinterval_hits.iter().all(|&b| b)
    }
}

/// Length of the subintervals in [`ZeroSetStats::subinterval_hits`].
pub const ZERO_SET_SUBINTERVAL: f64 = 0.1;

pub fn zero_set_stats(traj: &Trajectory, tol: f64) -> Result<ZeroSetStats> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let dt = traj.grid.dt();
    let steps = traj.steps();
    let touching: Vec<usize> = (1..=steps).filter(|&n| traj.step_min[n] <= tol).collect();

    let bins = (steps.max(1) as f64).log2().ceil() as usize + 1;
    let edges: Vec<f64> = (0..=bins).map(|k| dt * 2f64.powi(k as i32)).collect();
    let mut counts = vec![0; bins];
    for w in touching.windows(2) {
        let k = ((w[1] - w[0]) as f64).log2().floor() as usize;
        counts[k.min(bins - 1)] += 1;
    }

    let sub = ((traj.grid.horizon() / ZERO_SET_SUBINTERVAL) + 1e-9).floor() as usize;
    let mut hits = vec![false; sub];
    for &n in &touching {
        let k = ((n as f64 - 0.5) * dt / ZERO_SET_SUBINTERVAL) as usize;
        if k < sub {
            hits[k] = true;
        }
    }

    Ok(ZeroSetStats {
        tol,
        fraction_time_touching: if steps == 0 { 0.0 } else { touching.len() as f64 / steps as f64 },
        touching_steps: touching.len(),
        gap_histogram: GapHistogram { edges, counts },
        subinterval_hits: hits,
    })
}
