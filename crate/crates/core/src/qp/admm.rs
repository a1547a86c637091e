use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::polish::{polish, PolishInput};
use super::scaling::Scaling;
use super::{QpSolution, QpStatus, ToleranceSet, WarmStart};

/// Rows with `up - lo` below this are treated as equalities.
const EQ_GAP: f64 = 1e-10;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_FREE: f64 = 1e-6;
/// Iterations between attempts to finish early by polishing.
const POLISH_INTERVAL: usize = 10;
/// Extra iterations spent after the tolerances are first met, while the
/// polish has not yet succeeded.
const POLISH_RETRY_ITERS: usize = 200;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// A new penalty is only factorized when it differs by more than this
/// factor from the current one.
const RHO_REFACTOR_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Equality,
    Inequality,
    Free,
}

fn row_kinds(lo: &DVector<f64>, up: &DVector<f64>) -> Vec<RowKind> {
    lo.iter()
        .zip(up.iter())
        .map(|(&l, &u)| {
            if l.is_infinite() && u.is_infinite() {
                RowKind::Free
            } else if u - l <= EQ_GAP * (1.0 + l.abs().max(u.abs())) {
                RowKind::Equality
            } else {
                RowKind::Inequality
            }
        })
        .collect()
}

/// A factorized splitting for fixed `P`, `A` and row structure. The
/// linear cost and bounds may change between solves, which is what a
/// receding-horizon controller needs.
pub struct QpSolver {
    n: usize,
    m: usize,
    tol: ToleranceSet,
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    kinds: Vec<RowKind>,
    scaling: Scaling,
    rho: DVector<f64>,
    kkt: LU<f64, Dyn, Dyn>,
}

struct Residuals {
    primal: f64,
    dual: f64,
    eps_primal: f64,
    eps_dual: f64,
    /// Residuals relative to the magnitudes they are compared against.
    primal_rel: f64,
    dual_rel: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }

    fn badness(&self) -> f64 {
        (self.primal / self.eps_primal).max(self.dual / self.eps_dual)
    }
}

fn clip(v: &DVector<f64>, lo: &DVector<f64>, up: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter()
            .zip(lo.iter().zip(up.iter()))
            .map(|(&x, (&l, &u))| x.max(l).min(u)),
    )
}

fn rho_vector(kinds: &[RowKind], rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        kinds.len(),
        kinds.iter().map(|k| match k {
            RowKind::Equality => RHO_EQ_FACTOR * rho,
            RowKind::Inequality => rho,
            RowKind::Free => RHO_FREE,
        }),
    )
}

fn factor(s: &Scaling, sigma: f64, rho: &DVector<f64>) -> LU<f64, Dyn, Dyn> {
    let n = s.p.ncols();
    let m = s.a.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&s.p);
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    k.view_mut((n, 0), (m, n)).copy_from(&s.a);
    k.view_mut((0, n), (n, m)).copy_from(&s.a.transpose());
    for i in 0..m {
        k[(n + i, n + i)] = -1.0 / rho[i];
    }
    k.lu()
}

impl QpSolver {
    pub fn new(
        p: &DMatrix<f64>,
        a: &DMatrix<f64>,
        lo: &DVector<f64>,
        up: &DVector<f64>,
        tol: &ToleranceSet,
    ) -> Self {
        let n = p.ncols();
        let m = a.nrows();
        let kinds = row_kinds(lo, up);
        let scaling = Scaling::compute(p, a, tol.scaling_iters);
        let rho = rho_vector(&kinds, tol.rho);
        let kkt = factor(&scaling, tol.sigma, &rho);

        Self {
            n,
            m,
            tol: *tol,
            p: p.clone(),
            a: a.clone(),
            kinds,
            scaling,
            rho,
            kkt,
        }
    }

    /// True when this factorization can be reused for the given data.
    pub fn matches(
        &self,
        p: &DMatrix<f64>,
        a: &DMatrix<f64>,
        lo: &DVector<f64>,
        up: &DVector<f64>,
        tol: &ToleranceSet,
    ) -> bool {
        self.tol == *tol && self.p == *p && self.a == *a && self.kinds == row_kinds(lo, up)
    }

    fn residuals(
        &self,
        x: &DVector<f64>,
        z: &DVector<f64>,
        y: &DVector<f64>,
        q: &DVector<f64>,
    ) -> Residuals {
        let s = &self.scaling;
        let ax = &s.a * x;
        let px = &s.p * x;
        let aty = s.a.transpose() * y;

        let mut primal: f64 = 0.0;
        let mut ax_norm: f64 = 0.0;
        let mut z_norm: f64 = 0.0;
        for i in 0..self.m {
            let axu = ax[i] * s.e_inv[i];
            let zu = z[i] * s.e_inv[i];
            primal = primal.max((axu - zu).abs());
            ax_norm = ax_norm.max(axu.abs());
            z_norm = z_norm.max(zu.abs());
        }

        let mut dual: f64 = 0.0;
        let mut px_norm: f64 = 0.0;
        let mut aty_norm: f64 = 0.0;
        let mut q_norm: f64 = 0.0;
        for j in 0..self.n {
            let w = s.d_inv[j] / s.cost;
            dual = dual.max(((px[j] + q[j] + aty[j]) * w).abs());
            px_norm = px_norm.max((px[j] * w).abs());
            aty_norm = aty_norm.max((aty[j] * w).abs());
            q_norm = q_norm.max((q[j] * w).abs());
        }

        Residuals {
            primal_rel: primal / ax_norm.max(z_norm).max(1e-30),
            dual_rel: dual / px_norm.max(aty_norm).max(q_norm).max(1e-30),
            primal,
            dual,
            eps_primal: self.tol.eps_abs + self.tol.eps_rel * ax_norm.max(z_norm),
            eps_dual: self.tol.eps_abs + self.tol.eps_rel * px_norm.max(aty_norm).max(q_norm),
        }
    }

    /// Primal infeasibility certificate on the change of the dual iterate.
    fn primal_infeasible(&self, dy: &DVector<f64>, lo: &DVector<f64>, up: &DVector<f64>) -> bool {
        let s = &self.scaling;
        // unscaled direction, up to the positive factor 1/cost
        let dyu = dy.component_mul(&s.e);
        let norm = dyu.amax();
        if norm <= 1e-30 {
            return false;
        }
        let at = s.a.transpose() * dy;
        let at_norm = (0..self.n)
            .map(|j| (at[j] * s.d_inv[j]).abs())
            .fold(0.0, f64::max);
        if at_norm > self.tol.eps_infeasible * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let v = dyu[i];
            if v > 0.0 {
                if up[i].is_infinite() {
                    return false;
                }
                support += up[i] * v;
            } else if v < 0.0 {
                if lo[i].is_infinite() {
                    return false;
                }
                support += lo[i] * v;
            }
        }
        support < -self.tol.eps_infeasible * norm
    }

    fn unscale(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let s = &self.scaling;
        (x.component_mul(&s.d), y.component_mul(&s.e) / s.cost)
    }

    /// Runs the iteration for linear cost `c` and bounds `lo`, `up`.
    ///
    /// The bounds must have the same equality/inequality pattern as the
    /// ones the solver was built with.
    pub fn solve(
        &self,
        c: &DVector<f64>,
        lo: &DVector<f64>,
        up: &DVector<f64>,
        warm: Option<&WarmStart>,
    ) -> QpSolution {
        let (n, m) = (self.n, self.m);
        let s = &self.scaling;
        let q = c.component_mul(&s.d) * s.cost;
        let ls = lo.component_mul(&s.e);
        let us = up.component_mul(&s.e);
        let alpha = self.tol.alpha;
        let sigma = self.tol.sigma;

        let (mut x, mut y) = match warm {
            Some(w) if w.x.len() == n => {
                let x = w.x.component_mul(&s.d_inv);
                let y = match &w.y {
                    Some(y) if y.len() == m => y.component_mul(&s.e_inv) * s.cost,
                    _ => DVector::zeros(m),
                };
                (x, y)
            }
            _ => (DVector::zeros(n), DVector::zeros(m)),
        };
        let mut z = clip(&(&s.a * &x), &ls, &us);

        let mut best = (f64::INFINITY, x.clone(), z.clone(), y.clone());
        let mut status = QpStatus::MaxIterations;
        let mut iterations = self.tol.max_iter;
        let mut rhs = DVector::zeros(n + m);
        let mut rho_base = self.tol.rho;
        let mut rho = self.rho.clone();
        let mut refactored: Option<LU<f64, Dyn, Dyn>> = None;
        let mut first_converged: Option<usize> = None;
        let mut last_converged = None;

        for it in 1..=self.tol.max_iter {
            let kkt = refactored.as_ref().unwrap_or(&self.kkt);
            for j in 0..n {
                rhs[j] = sigma * x[j] - q[j];
            }
            for i in 0..m {
                rhs[n + i] = z[i] - y[i] / rho[i];
            }
            let sol = kkt
                .solve(&rhs)
                .expect("quasi-definite KKT matrix is nonsingular");
            let x_tilde = sol.rows(0, n);
            let nu = sol.rows(n, m);

            let x_next = x_tilde * alpha + &x * (1.0 - alpha);
            let mut z_next = DVector::zeros(m);
            let mut y_next = DVector::zeros(m);
            for i in 0..m {
                let z_tilde = z[i] + (nu[i] - y[i]) / rho[i];
                let zr = alpha * z_tilde + (1.0 - alpha) * z[i];
                let zn = (zr + y[i] / rho[i]).max(ls[i]).min(us[i]);
                y_next[i] = y[i] + rho[i] * (zr - zn);
                z_next[i] = zn;
            }
            let dy = &y_next - &y;
            x = x_next;
            z = z_next;
            y = y_next;

            let res = self.residuals(&x, &z, &y, &q);
            let badness = res.badness();
            if badness < best.0 {
                best = (badness, x.clone(), z.clone(), y.clone());
            }
            let converged = res.converged();
            if self.tol.polish && (converged || it % POLISH_INTERVAL == 0) {
                if let Some((xp, yp)) = self.try_polish(&q, &ls, &us, &x, &z, &y) {
                    let (xu, yu) = self.unscale(&xp, &yp);
                    return self.finish(xu, yu, c, lo, up, QpStatus::Optimal, it, true);
                }
            }
            if converged {
                let first = first_converged.get_or_insert(it);
                last_converged = Some((it, x.clone(), y.clone()));
                if !self.tol.polish || it >= *first + POLISH_RETRY_ITERS {
                    break;
                }
            }
            if self.primal_infeasible(&dy, lo, up) {
                status = QpStatus::InfeasibleDetected;
                iterations = it;
                break;
            }

            let interval = self.tol.adaptive_rho_interval;
            if interval > 0 && it % interval == 0 && res.dual_rel > 0.0 {
                let proposed =
                    (rho_base * (res.primal_rel / res.dual_rel).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if proposed > rho_base * RHO_REFACTOR_RATIO
                    || proposed < rho_base / RHO_REFACTOR_RATIO
                {
                    rho_base = proposed;
                    rho = rho_vector(&self.kinds, rho_base);
                    refactored = Some(factor(s, sigma, &rho));
                }
            }
        }

        if let Some((it, xc, yc)) = last_converged {
            // the tolerances were met but the polish never took
            status = QpStatus::Optimal;
            iterations = it;
            x = xc;
            y = yc;
        } else if status == QpStatus::MaxIterations {
            x = best.1;
            y = best.3;
        }

        let (xu, yu) = self.unscale(&x, &y);
        self.finish(xu, yu, c, lo, up, status, iterations, false)
    }

    /// Solves the KKT system of the active set guessed from an iterate and
    /// keeps the result only if it meets the termination criteria and the
    /// multiplier signs are consistent with the bounds.
    #[allow(clippy::too_many_arguments)]
    fn try_polish(
        &self,
        q: &DVector<f64>,
        ls: &DVector<f64>,
        us: &DVector<f64>,
        x: &DVector<f64>,
        z: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let s = &self.scaling;
        let (xp, yp) = polish(PolishInput {
            p: &s.p,
            a: &s.a,
            q,
            lo: ls,
            up: us,
            x,
            z,
            y,
        })?;
        let zp = clip(&(&s.a * &xp), ls, us);
        let res = self.residuals(&xp, &zp, &yp, q);
        (res.converged() && self.dual_signs_ok(&xp, &yp, ls, us)).then_some((xp, yp))
    }

    /// Complementarity check for a polished point: a multiplier may only
    /// be negative on a lower bound and positive on an upper bound.
    fn dual_signs_ok(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        lo: &DVector<f64>,
        up: &DVector<f64>,
    ) -> bool {
        let s = &self.scaling;
        let ax = &s.a * x;
        (0..self.m).all(|i| {
            if self.kinds[i] == RowKind::Equality {
                return true;
            }
            let yu = y[i] * s.e[i] / s.cost;
            let slack_tol = 1e-9 * (1.0 + ax[i].abs());
            let at_lo = ax[i] - lo[i] <= slack_tol;
            let at_up = up[i] - ax[i] <= slack_tol;
            let eps = self.tol.eps_abs;
            (yu >= -eps || at_lo) && (yu <= eps || at_up)
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        x: DVector<f64>,
        y: DVector<f64>,
        c: &DVector<f64>,
        lo: &DVector<f64>,
        up: &DVector<f64>,
        status: QpStatus,
        iterations: usize,
        polished: bool,
    ) -> QpSolution {
        let ax = &self.a * &x;
        let primal_residual = (0..self.m)
            .map(|i| (ax[i].clamp(lo[i], up[i]) - ax[i]).abs())
            .fold(0.0, f64::max);
        let dual_residual = (&self.p * &x + c + self.a.transpose() * &y).amax();
        let objective = 0.5 * x.dot(&(&self.p * &x)) + c.dot(&x);
        QpSolution {
            x,
            duals: y,
            status,
            iterations,
            primal_residual,
            dual_residual,
            polished,
            objective,
        }
    }
}
