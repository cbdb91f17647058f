//! Tridiagonal linear complementarity problems.
//!
//! Solves: find `u ≥ 0`, `m ≥ 0` with `A u = b + m` and `u_i m_i = 0`, where
//! `A` is a tridiagonal M-matrix. The primary solver is a primal-dual active
//! set iteration in which every inner solve is a single Thomas sweep over
//! the inactive sites; for M-matrices it terminates after finitely many
//! sweeps with complementarity holding exactly (active sites are pinned to
//! zero, inactive multipliers are zero by construction). A projected
//! Gauss-Seidel iteration is kept as a fallback.

/// Tridiagonal matrix in band storage. `sub[i]` couples row `i` to `i-1`
/// (`sub[0]` unused), `sup[i]` couples row `i` to `i+1` (`sup[n-1]` unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    /// `I - c·L` with `L` the Dirichlet second difference (stencil 1,-2,1).
    pub fn identity_minus_laplacian(n: usize, c: f64) -> Self {
        Self {
            sub: vec![-c; n],
            diag: vec![1.0 + 2.0 * c; n],
            sup: vec![-c; n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.sup[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    #[inline]
    fn row_apply(&self, x: &[f64], i: usize) -> f64 {
        let mut s = self.diag[i] * x[i];
        if i > 0 {
            s += self.sub[i] * x[i - 1];
        }
        if i + 1 < self.n() {
            s += self.sup[i] * x[i + 1];
        }
        s
    }

    /// Thomas solve of `A x = rhs`.
    pub fn solve(&self, rhs: &[f64], x: &mut [f64]) {
        let mut scratch = vec![0.0; self.n()];
        thomas_masked(self, rhs, None, x, &mut scratch);
    }
}

/// Thomas algorithm on the rows not marked active; active rows get `x = 0`
/// and their couplings are dropped.
fn thomas_masked(
    a: &Tridiagonal,
    rhs: &[f64],
    active: Option<&[bool]>,
    x: &mut [f64],
    cprime: &mut [f64],
) {
    let n = a.n();
    let is_active = |i: usize| active.is_some_and(|m| m[i]);
    let mut prev_free = false;
    for i in 0..n {
        if is_active(i) {
            cprime[i] = 0.0;
            x[i] = 0.0;
            prev_free = false;
            continue;
        }
        let next_free = i + 1 < n && !is_active(i + 1);
        let sup = if next_free { a.sup[i] } else { 0.0 };
        if prev_free {
            let denom = a.diag[i] - a.sub[i] * cprime[i - 1];
            cprime[i] = sup / denom;
            x[i] = (rhs[i] - a.sub[i] * x[i - 1]) / denom;
        } else {
            cprime[i] = sup / a.diag[i];
            x[i] = rhs[i] / a.diag[i];
        }
        prev_free = true;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        if !is_active(i) && !is_active(i + 1) {
            x[i] -= cprime[i] * x[i + 1];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcpStats {
    pub sweeps: usize,
    pub used_fallback: bool,
    /// max of primal infeasibility, dual infeasibility, complementarity gap
    /// and equation residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcpFailure {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct LcpSolver {
    active: Vec<bool>,
    next: Vec<bool>,
    scratch: Vec<f64>,
    warm: bool,
    pub max_sweeps: usize,
    pub pgs_max_iter: usize,
    pub tol: f64,
}

impl LcpSolver {
    pub fn new(n: usize) -> Self {
        Self {
            active: vec![false; n],
            next: vec![false; n],
            scratch: vec![0.0; n],
            warm: false,
            max_sweeps: 200,
            pgs_max_iter: 10_000,
            tol: 1e-12,
        }
    }

    /// Solve into `u` and `m`. The active set of the previous call is reused
    /// as the starting guess.
    pub fn solve(
        &mut self,
        a: &Tridiagonal,
        rhs: &[f64],
        u: &mut [f64],
        m: &mut [f64],
    ) -> Result<LcpStats, LcpFailure> {
        let n = a.n();
        let scale = rhs.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        let tol = self.tol * scale;
        if !self.warm {
            thomas_masked(a, rhs, None, u, &mut self.scratch);
            for i in 0..n {
                self.active[i] = u[i] < 0.0;
            }
            self.warm = true;
        }
        for sweep in 1..=self.max_sweeps {
            thomas_masked(a, rhs, Some(&self.active), u, &mut self.scratch);
            let mut changed = false;
            for i in 0..n {
                if self.active[i] {
                    m[i] = a.row_apply(u, i) - rhs[i];
                    self.next[i] = m[i] > -tol;
                } else {
                    m[i] = 0.0;
                    self.next[i] = u[i] < -tol;
                }
                changed |= self.next[i] != self.active[i];
            }
            std::mem::swap(&mut self.active, &mut self.next);
            if !changed {
                for i in 0..n {
                    if self.active[i] {
                        m[i] = m[i].max(0.0);
                    } else {
                        u[i] = u[i].max(0.0);
                    }
                }
                return Ok(LcpStats {
                    sweeps: sweep,
                    used_fallback: false,
                    residual: residual(a, rhs, u, m),
                });
            }
        }
        self.warm = false;
        self.projected_gauss_seidel(a, rhs, u, m)
    }

    pub fn projected_gauss_seidel(
        &mut self,
        a: &Tridiagonal,
        rhs: &[f64],
        u: &mut [f64],
        m: &mut [f64],
    ) -> Result<LcpStats, LcpFailure> {
        let n = a.n();
        let scale = rhs.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        for v in u.iter_mut() {
            *v = v.max(0.0);
        }
        let mut last_change = f64::INFINITY;
        for it in 1..=self.pgs_max_iter {
            let mut change = 0.0_f64;
            for i in 0..n {
                let mut r = rhs[i];
                if i > 0 {
                    r -= a.sub[i] * u[i - 1];
                }
                if i + 1 < n {
                    r -= a.sup[i] * u[i + 1];
                }
                let new = (r / a.diag[i]).max(0.0);
                change = change.max((new - u[i]).abs());
                u[i] = new;
            }
            last_change = change;
            if change <= self.tol * scale {
                for i in 0..n {
                    m[i] = if u[i] > 0.0 {
                        0.0
                    } else {
                        (a.row_apply(u, i) - rhs[i]).max(0.0)
                    };
                }
                return Ok(LcpStats {
                    sweeps: it,
                    used_fallback: true,
                    residual: residual(a, rhs, u, m),
                });
            }
        }
        Err(LcpFailure {
            iterations: self.pgs_max_iter,
            residual: last_change,
        })
    }
}

fn residual(a: &Tridiagonal, rhs: &[f64], u: &[f64], m: &[f64]) -> f64 {
    let mut r = 0.0_f64;
    for i in 0..a.n() {
        let eq = a.row_apply(u, i) - rhs[i] - m[i];
        r = r
            .max(eq.abs())
            .max((-u[i]).max(0.0))
            .max((-m[i]).max(0.0))
            .max((u[i] * m[i]).abs());
    }
    r
}
