//! Dense convex quadratic programming.
//!
//! Solves
//!
//! ```text
//! minimize    ½ xᵀ P x + cᵀ x
//! subject to  lo ≤ A x ≤ up
//! ```
//!
//! with an operator-splitting (alternating direction) iteration on an
//! equilibrated copy of the data, followed by an active-set polish step
//! that recovers a high-accuracy solution when the active set is
//! identified. Every returned solution carries its unscaled KKT residuals.

mod admm;
mod polish;
mod scaling;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::QpSolver;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub up: DVector<f64>,
}

impl QpProblem {
    /// Checks dimensions, symmetry of `p` and `lo <= up`. Bounds may be
    /// infinite; every other entry must be finite.
    pub fn new(
        p: DMatrix<f64>,
        c: DVector<f64>,
        a: DMatrix<f64>,
        lo: DVector<f64>,
        up: DVector<f64>,
    ) -> Result<Self> {
        let n = c.len();
        let m = lo.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Dimension(format!(
                "P is {}x{}, expected {n}x{n}",
                p.nrows(),
                p.ncols()
            )));
        }
        if a.nrows() != m || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, expected {m}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        if up.len() != m {
            return Err(Error::Dimension(format!(
                "up has length {}, lo has length {m}",
                up.len()
            )));
        }
        if !(p
            .iter()
            .chain(a.iter())
            .chain(c.iter())
            .all(|v| v.is_finite()))
        {
            return Err(Error::Domain("P, A and c must be finite".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (p[(i, j)] - p[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Domain(format!(
                        "P is not symmetric at ({i}, {j}): {} vs {}",
                        p[(i, j)],
                        p[(j, i)]
                    )));
                }
            }
        }
        for i in 0..m {
            if lo[i].is_nan() || up[i].is_nan() || lo[i] > up[i] {
                return Err(Error::Domain(format!(
                    "bound {i} is inconsistent: lo = {}, up = {}",
                    lo[i], up[i]
                )));
            }
        }
        Ok(Self { p, c, a, lo, up })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.lo.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x)
    }

    /// JSON dump of the problem data for offline inspection. Infinite
    /// bounds are written as `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let bound = |v: &DVector<f64>| -> Vec<Option<f64>> {
            v.iter().map(|b| b.is_finite().then_some(*b)).collect()
        };
        serde_json::json!({
            "P": rows(&self.p),
            "c": self.c.iter().copied().collect::<Vec<_>>(),
            "A": rows(&self.a),
            "lo": bound(&self.lo),
            "up": bound(&self.up),
        })
    }
}

/// Solver parameters and stopping tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSet {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Threshold for the primal infeasibility certificate.
    pub eps_infeasible: f64,
    pub max_iter: usize,
    /// Initial penalty parameter of the splitting.
    pub rho: f64,
    /// Rebalance the penalty every this many iterations from the ratio of
    /// primal to dual residuals; 0 keeps it fixed.
    pub adaptive_rho_interval: usize,
    pub sigma: f64,
    /// Over-relaxation factor.
    pub alpha: f64,
    pub scaling_iters: usize,
    pub polish: bool,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_infeasible: 1e-5,
            max_iter: 4000,
            rho: 0.1,
            adaptive_rho_interval: 25,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 0,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    InfeasibleDetected,
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIterations => "max-iterations",
            QpStatus::InfeasibleDetected => "infeasible-detected",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `lo ≤ Ax ≤ up`; positive where the upper bound
    /// binds, negative where the lower bound binds.
    pub duals: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// True when the returned point came from the active-set polish.
    pub polished: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub y: Option<DVector<f64>>,
}

/// Infinity-norm KKT residuals `(primal, dual)` of the pair `(x, y)`:
/// primal is the distance of `Ax` from the box, dual is
/// `‖Px + c + Aᵀy‖∞`.
pub fn kkt_residuals(p: &QpProblem, x: &DVector<f64>, y: &DVector<f64>) -> Result<(f64, f64)> {
    if x.len() != p.n() || y.len() != p.m() {
        return Err(Error::Dimension(format!(
            "x has length {} (expected {}), y has length {} (expected {})",
            x.len(),
            p.n(),
            y.len(),
            p.m()
        )));
    }
    let ax = &p.a * x;
    let primal = (0..p.m())
        .map(|i| (ax[i].clamp(p.lo[i], p.up[i]) - ax[i]).abs())
        .fold(0.0, f64::max);
    let stat = &p.p * x + &p.c + p.a.transpose() * y;
    Ok((primal, stat.amax()))
}

/// Solves `problem` from an optional warm start. Pure function of its
/// inputs; see [`QpSolver`] for a reusable factorization.
pub fn solve(problem: &QpProblem, warm: Option<&WarmStart>, tol: &ToleranceSet) -> QpSolution {
    let solver = QpSolver::new(&problem.p, &problem.a, &problem.lo, &problem.up, tol);
    solver.solve(&problem.c, &problem.lo, &problem.up, warm)
}
