//! Fixed workloads shared by the benchmarks and their smoke tests.

use reflab::grid::{SpaceTimeGrid, VectorField3};
use reflab::heat_kernels::{heat_kernel_g, q_kernel, KernelParams};
use reflab::lcp::{LcpSolver, Tridiagonal};
use reflab::potentials::{gamma3, u3_potential, PotentialQuery, TimeQuadrature};
use reflab::reflected_spde::{solve_reflected, SolveOptions};
use reflab::rng::RngStream;
use reflab::samplers::{sample_bessel3_bridge, sample_brownian_bridge_3d};

pub const SEED: u64 = 11;

/// One implicit step's LCP: `(I − c·Δ)u = rhs + m`, `u, m ≥ 0`, `u·m = 0`.
pub struct LcpStep {
    pub matrix: Tridiagonal,
    pub rhs: Vec<f64>,
    u: Vec<f64>,
    m: Vec<f64>,
}

impl LcpStep {
    /// A right-hand side that dips below zero on a few clusters.
    pub fn new(n: usize, dt: f64) -> Self {
        let h = 1.0 / (n + 1) as f64;
        let mut rng = RngStream::new(SEED, 0);
        let rhs = (0..n)
            .map(|i| {
                let th = (i + 1) as f64 * h;
                0.05 * (6.0 * std::f64::consts::PI * th).sin() + 0.05 * rng.normal()
            })
            .collect();
        Self {
            matrix: Tridiagonal::identity_minus_laplacian(n, dt / (2.0 * h * h)),
            rhs,
            u: vec![0.0; n],
            m: vec![0.0; n],
        }
    }

    /// Cold solve; returns the complementarity gap `Σ u_i m_i`.
    pub fn solve(&mut self) -> f64 {
        let mut solver = LcpSolver::new(self.rhs.len());
        solver
            .solve(&self.matrix, &self.rhs, &mut self.u, &mut self.m)
            .expect("M-matrix LCP is solvable");
        self.u.iter().zip(&self.m).map(|(u, m)| u * m).sum()
    }

    pub fn multiplier_mass(&self) -> f64 {
        self.m.iter().sum()
    }
}

/// Full reflected trajectory from a stationary start; returns the ledger mass.
pub fn reflected_run(n: usize, dt: f64, horizon: f64) -> f64 {
    let grid = SpaceTimeGrid::new(n, dt, horizon).expect("valid grid");
    let mut rng = RngStream::new(SEED, 1);
    let x0 = sample_bessel3_bridge(&grid, &mut rng);
    let tr = solve_reflected(&x0, &grid, &mut rng, &SolveOptions::default()).expect("solver runs");
    tr.ledger.total_mass(&grid)
}

/// `g_t` and `q_t` over a small lattice; returns the sum of the values.
pub fn kernel_sweep(t: f64, k: usize) -> f64 {
    let params = KernelParams::new(k, 1e-8).expect("valid params");
    let thetas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut s = 0.0;
    for &a in &thetas {
        for &b in &thetas {
            s += heat_kernel_g(t, a, b, &params).expect("in domain").value;
            s += q_kernel(t, a, b, &params).expect("in domain").value;
        }
    }
    s
}

/// A stationary draw `x̄` on `n` sites.
pub fn string_draw(n: usize) -> VectorField3 {
    let grid = SpaceTimeGrid::spatial(n).expect("valid grid");
    sample_brownian_bridge_3d(&grid, &mut RngStream::new(SEED, 2))
}

pub fn u3_at(xbar: &VectorField3, theta: f64, a: [f64; 3]) -> f64 {
    u3_potential(&PotentialQuery::new(theta, a, xbar.clone()))
        .expect("quadrature converges")
        .value
}

pub fn gamma3_at(xbar: &VectorField3, theta: f64) -> f64 {
    gamma3(xbar, theta, &TimeQuadrature::default())
        .expect("quadrature converges")
        .value
}
