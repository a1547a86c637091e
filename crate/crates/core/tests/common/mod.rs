//! Independent oracles shared by the integration suites. Nothing here
//! calls into the solver under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random orthogonal matrix from the QR factors of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    g.qr().q()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Symmetric positive-definite matrix with eigenvalues drawn from
/// `[lam_min, lam_max]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lam_min: f64, lam_max: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
        rng.gen_range(lam_min..=lam_max)
    }));
    let p = &q * d * q.transpose();
    (&p + p.transpose()) * 0.5
}

pub struct BoxQp {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lo: DVector<f64>,
    pub up: DVector<f64>,
}

pub fn random_box_qp(rng: &mut ChaCha8Rng) -> BoxQp {
    let n = rng.gen_range(1..=4);
    let p = random_spd(rng, n, 1.0, 2.0);
    let lo = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..0.0));
    let up = DVector::from_fn(n, |i, _| lo[i] + rng.gen_range(1.0..2.0));
    // unconstrained minimizer somewhere in a box twice as large, so some
    // instances are interior and some have active bounds
    let target = DVector::from_fn(n, |i, _| {
        let w = up[i] - lo[i];
        rng.gen_range(lo[i] - 0.5 * w..up[i] + 0.5 * w)
    });
    let c = -(&p * target);
    BoxQp { p, c, lo, up }
}

pub struct GridResult {
    pub x: DVector<f64>,
    /// Bound on the distance from `x` to the true minimizer.
    pub error_bound: f64,
    /// Final grid spacing relative to the box width, per coordinate.
    pub final_resolution: Vec<f64>,
}

fn objective(p: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(p * x)) + c.dot(x)
}

/// Best point of the grid `a + k h` (k = 0..=steps per coordinate). The
/// last coordinate is not enumerated: along it the objective is a
/// parabola, whose best grid point is the one nearest its vertex.
fn grid_min(
    p: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &[f64],
    h: &[f64],
    steps: usize,
) -> DVector<f64> {
    let n = a.len();
    let last = n - 1;
    let mut idx = vec![0usize; last];
    let mut x = DVector::from_column_slice(a);
    let mut best = (f64::INFINITY, x.clone());
    loop {
        for (i, &k) in idx.iter().enumerate() {
            x[i] = a[i] + k as f64 * h[i];
        }
        let mut b = c[last];
        for j in 0..last {
            b += p[(last, j)] * x[j];
        }
        let vertex = -b / p[(last, last)];
        let k = ((vertex - a[last]) / h[last])
            .round()
            .clamp(0.0, steps as f64);
        x[last] = a[last] + k * h[last];
        let f = objective(p, c, &x);
        if f < best.0 {
            best = (f, x.clone());
        }
        // odometer over the enumerated coordinates
        let mut d = 0;
        loop {
            if d == last {
                return best.1;
            }
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Three-stage grid refinement for `min ½xᵀPx + cᵀx` over a box.
///
/// With eigenvalues of P in `[l, L]` and grid spacings `h`, the best grid
/// point g satisfies `f(g) - f* ≤ L |h|² / 8`, and strong convexity gives
/// `|g - x*|² ≤ 2 (f(g) - f*) / l`. Each refinement window is that radius
/// around g, so it always contains the minimizer.
pub fn grid_oracle(qp: &BoxQp, steps: usize) -> GridResult {
    let n = qp.c.len();
    let eig = qp.p.clone().symmetric_eigen().eigenvalues;
    let kappa = eig.max() / eig.min();
    let width: Vec<f64> = (0..n).map(|i| qp.up[i] - qp.lo[i]).collect();
    let mut a: Vec<f64> = qp.lo.iter().copied().collect();
    let mut b: Vec<f64> = qp.up.iter().copied().collect();
    let mut x = DVector::zeros(n);
    let mut radius = f64::INFINITY;
    let mut h = vec![0.0; n];
    for _stage in 0..3 {
        for i in 0..n {
            h[i] = (b[i] - a[i]) / steps as f64;
            if h[i] == 0.0 {
                h[i] = f64::MIN_POSITIVE;
            }
        }
        x = grid_min(&qp.p, &qp.c, &a, &h, steps);
        let h2: f64 = h.iter().map(|v| v * v).sum();
        radius = (kappa * h2 / 4.0).sqrt() * 1.000_001;
        for i in 0..n {
            a[i] = (x[i] - radius).max(qp.lo[i]);
            b[i] = (x[i] + radius).min(qp.up[i]);
        }
    }
    GridResult {
        x,
        error_bound: radius,
        final_resolution: (0..n).map(|i| h[i] / width[i]).collect(),
    }
}

pub struct EqQp {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

pub fn random_eq_qp(rng: &mut ChaCha8Rng) -> EqQp {
    let n = rng.gen_range(2..=8);
    let m = rng.gen_range(1..n);
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let p = g.transpose() * &g + DMatrix::identity(n, n) * 0.5;
    let p = (&p + p.transpose()) * 0.5;
    let c = DVector::from_fn(n, |_, _| 3.0 * gaussian(rng));
    let a = DMatrix::from_fn(m, n, |_, _| gaussian(rng));
    let b = DVector::from_fn(m, |_, _| 2.0 * gaussian(rng));
    EqQp { p, c, a, b }
}

/// Solves `[P Aᵀ; A 0] [x; ν] = [-c; b]` directly.
pub fn kkt_direct(qp: &EqQp) -> DVector<f64> {
    let n = qp.c.len();
    let m = qp.b.len();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    k.view_mut((n, 0), (m, n)).copy_from(&qp.a);
    k.view_mut((0, n), (n, m)).copy_from(&qp.a.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&qp.c));
    rhs.rows_mut(n, m).copy_from(&qp.b);
    let sol = k.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    sol.rows(0, n).into_owned()
}

/// A two-step dispatch problem written out in plain physical terms.
#[derive(Debug, Clone, Copy)]
pub struct TwoStep {
    pub beta: f64,
    pub gamma_p: f64,
    pub gamma_q: f64,
    pub p_load: f64,
    pub prev_pg: f64,
    pub prev_pb: f64,
    pub soc_now: f64,
    pub p_g_ref: f64,
    pub q0_ref: f64,
    pub pg_min: f64,
    pub pg_max: f64,
    pub pb_min: f64,
    pub pb_max: f64,
    pub pg_ramp: f64,
    pub pb_ramp: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// SoC drop per watt over one step.
    pub soc_per_watt: f64,
}

impl TwoStep {
    /// Battery powers and SoCs implied by the generator powers.
    pub fn expand(&self, pg: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let pb = [self.p_load - pg[0], self.p_load - pg[1]];
        let q1 = self.soc_now - self.soc_per_watt * pb[0];
        let q2 = q1 - self.soc_per_watt * pb[1];
        (pb, [q1, q2])
    }

    pub fn feasible(&self, pg: [f64; 2], tol_w: f64, tol_q: f64) -> bool {
        let (pb, q) = self.expand(pg);
        let within = |v: f64, lo: f64, up: f64, tol: f64| v >= lo - tol && v <= up + tol;
        (0..2).all(|k| {
            within(pg[k], self.pg_min, self.pg_max, tol_w)
                && within(pb[k], self.pb_min, self.pb_max, tol_w)
                && within(q[k], self.soc_min, self.soc_max, tol_q)
        }) && (pg[0] - self.prev_pg).abs() <= self.pg_ramp + tol_w
            && (pg[1] - pg[0]).abs() <= self.pg_ramp + tol_w
            && (pb[0] - self.prev_pb).abs() <= self.pb_ramp + tol_w
            && (pb[1] - pb[0]).abs() <= self.pb_ramp + tol_w
    }

    /// Cost with powers in MW and SoC in percent.
    pub fn cost(&self, pg: [f64; 2], pb: [f64; 2], q: [f64; 2]) -> f64 {
        let mut j = 0.0;
        for k in 0..2 {
            let dg = (pg[k] - self.p_g_ref) / 1e6;
            let b = pb[k] / 1e6;
            let dq = 100.0 * (q[k] - self.q0_ref);
            j += 0.5 * (self.beta * dg * dg + self.gamma_p * b * b + self.gamma_q * dq * dq);
        }
        j
    }

    fn cost_of(&self, pg: [f64; 2]) -> f64 {
        let (pb, q) = self.expand(pg);
        self.cost(pg, pb, q)
    }
}

pub struct BruteForce {
    pub pg: [f64; 2],
    pub cost: f64,
    /// Final grid spacing as a fraction of the generator box.
    pub final_resolution: f64,
    /// Largest cost change across one final grid cell near the optimum,
    /// `λmax h²` with λmax bounding the cost Hessian in MW.
    pub cost_resolution: f64,
}

/// Exhaustive search over the generator powers on a grid restricted to
/// the feasible set, refined twice around the incumbent.
pub fn brute_force(inst: &TwoStep) -> Option<BruteForce> {
    const POINTS: usize = 400;
    const WINDOW_CELLS: f64 = 10.0;
    let width = inst.pg_max - inst.pg_min;
    let mut lo = [inst.pg_min, inst.pg_min];
    let mut hi = [inst.pg_max, inst.pg_max];
    let mut best: Option<([f64; 2], f64)> = None;
    let mut h = 0.0;
    for _stage in 0..3 {
        let hs = [
            (hi[0] - lo[0]) / POINTS as f64,
            (hi[1] - lo[1]) / POINTS as f64,
        ];
        h = hs[0].max(hs[1]);
        for i in 0..=POINTS {
            let g1 = lo[0] + i as f64 * hs[0];
            for j in 0..=POINTS {
                let g2 = lo[1] + j as f64 * hs[1];
                let pg = [g1, g2];
                if !inst.feasible(pg, 1e-9, 1e-12) {
                    continue;
                }
                let f = inst.cost_of(pg);
                if best.is_none_or(|(_, b)| f < b) {
                    best = Some((pg, f));
                }
            }
        }
        let (pg, _) = best?;
        for k in 0..2 {
            lo[k] = (pg[k] - WINDOW_CELLS * hs[k]).max(inst.pg_min);
            hi[k] = (pg[k] + WINDOW_CELLS * hs[k]).min(inst.pg_max);
        }
    }
    let (pg, cost) = best?;
    // q1 depends on p_b1, q2 on p_b1 + p_b2: the SoC part of the Hessian is
    // γq c² [[2, 1], [1, 1]], whose largest eigenvalue is below 2.62 γq c²
    let c = 100.0 * inst.soc_per_watt * 1e6;
    let lam_max = inst.beta + inst.gamma_p + 2.62 * inst.gamma_q * c * c;
    let h_mw = h / 1e6;
    Some(BruteForce {
        pg,
        cost,
        final_resolution: h / width,
        cost_resolution: lam_max * h_mw * h_mw,
    })
}

pub fn box_problem(qp: &BoxQp) -> sps_ems::qp::QpProblem {
    let n = qp.c.len();
    sps_ems::qp::QpProblem::new(
        qp.p.clone(),
        qp.c.clone(),
        DMatrix::identity(n, n),
        qp.lo.clone(),
        qp.up.clone(),
    )
    .expect("well-formed box QP")
}

pub fn eq_problem(qp: &EqQp) -> sps_ems::qp::QpProblem {
    sps_ems::qp::QpProblem::new(
        qp.p.clone(),
        qp.c.clone(),
        qp.a.clone(),
        qp.b.clone(),
        qp.b.clone(),
    )
    .expect("well-formed equality QP")
}

/// Worst-case outcome of a randomized suite.
#[derive(Debug, Default)]
pub struct SuiteReport {
    pub instances: usize,
    pub worst_error: f64,
    pub failures: Vec<String>,
    /// Instances judged against an absolute floor rather than relatively.
    pub floored: usize,
}

impl SuiteReport {
    pub fn record(&mut self, error: f64, tol: f64, what: impl FnOnce() -> String) {
        self.instances += 1;
        if error.is_nan() || error > tol {
            self.failures.push(what());
        }
        self.worst_error = self
            .worst_error
            .max(if error.is_nan() { f64::INFINITY } else { error });
    }
}

pub const GRID_STEPS: usize = 110;

pub fn box_suite(seed: u64, count: usize) -> SuiteReport {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = sps_ems::qp::ToleranceSet::default();
    let mut report = SuiteReport::default();
    for i in 0..count {
        let qp = random_box_qp(&mut rng);
        let oracle = grid_oracle(&qp, GRID_STEPS);
        assert!(
            oracle.error_bound < 5e-5 && oracle.final_resolution.iter().all(|r| *r <= 1e-5),
            "oracle too coarse on instance {i}: bound {}, resolution {:?}",
            oracle.error_bound,
            oracle.final_resolution
        );
        let sol = sps_ems::qp::solve(&box_problem(&qp), None, &tol);
        let err = (&sol.x - &oracle.x).amax();
        report.record(err, 1e-4, || {
            format!(
                "box instance {i}: |x - oracle| = {err:e}, status {}",
                sol.status
            )
        });
    }
    report
}

pub fn eq_suite(seed: u64, count: usize) -> SuiteReport {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = sps_ems::qp::ToleranceSet::default();
    let mut report = SuiteReport::default();
    for i in 0..count {
        let qp = random_eq_qp(&mut rng);
        let exact = kkt_direct(&qp);
        let sol = sps_ems::qp::solve(&eq_problem(&qp), None, &tol);
        let err = (&sol.x - &exact).amax();
        report.record(err, 1e-8, || {
            format!(
                "equality instance {i} (n = {}, m = {}): |x - kkt| = {err:e}, status {}",
                qp.c.len(),
                qp.b.len(),
                sol.status
            )
        });
    }
    report
}

/// A random two-step instance with default physical parameters, plus the
/// controller configuration that encodes it.
pub fn random_two_step(
    rng: &mut ChaCha8Rng,
) -> (TwoStep, sps_ems::MpcConfig, sps_ems::SystemParams) {
    let params = sps_ems::SystemParams::default();
    let mut cfg = sps_ems::MpcConfig {
        horizon: 2,
        ..Default::default()
    };
    let pick = |rng: &mut ChaCha8Rng, hi: f64| {
        if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(0.0..hi)
        }
    };
    cfg.beta = pick(rng, 2.0);
    cfg.gamma_p = pick(rng, 2000.0);
    cfg.gamma_q = pick(rng, 2000.0);
    if cfg.beta + cfg.gamma_p + cfg.gamma_q == 0.0 {
        cfg.beta = 1.0;
    }
    cfg.p_g_ref = rng.gen_range(5e6..25e6);
    let q0 = params.pcm.soc_init;
    let g = &params.pgm;
    let b = &params.pcm;
    let inst = TwoStep {
        beta: cfg.beta,
        gamma_p: cfg.gamma_p,
        gamma_q: cfg.gamma_q,
        p_load: rng.gen_range(5e6..35e6),
        prev_pg: rng.gen_range(g.p_min..g.p_max),
        prev_pb: rng.gen_range(b.p_min..b.p_max),
        soc_now: rng.gen_range(b.soc_min..b.soc_max),
        p_g_ref: cfg.p_g_ref,
        q0_ref: q0,
        pg_min: g.p_min,
        pg_max: g.p_max,
        pb_min: b.p_min,
        pb_max: b.p_max,
        pg_ramp: g.ramp_limit,
        pb_ramp: b.ramp_limit,
        soc_min: b.soc_min,
        soc_max: b.soc_max,
        soc_per_watt: cfg.ts / (3600.0 * b.capacity_ahr * params.v_nominal),
    };
    (inst, cfg, params)
}

/// Cost of the controller's horizon solution, measured by the oracle.
pub fn two_step_cost_of(inst: &TwoStep, sol: &sps_ems::mpc::HorizonSolution) -> f64 {
    inst.cost(
        [sol.p_g[0], sol.p_g[1]],
        [sol.p_b[0], sol.p_b[1]],
        [sol.q[0], sol.q[1]],
    )
}

pub fn mpc_suite(seed: u64, count: usize) -> SuiteReport {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::default();
    let mut i = 0;
    while report.instances < count {
        i += 1;
        let (inst, cfg, params) = random_two_step(&mut rng);
        let Some(bf) = brute_force(&inst) else {
            continue;
        };
        assert!(
            bf.final_resolution <= 1e-5,
            "grid too coarse: {}",
            bf.final_resolution
        );
        let step = sps_ems::mpc::mpc_step(
            &cfg,
            &params,
            inst.p_load,
            inst.prev_pg,
            inst.prev_pb,
            inst.soc_now,
        )
        .expect("valid instance");
        let sol = &step.solution;
        let pg = [sol.p_g[0], sol.p_g[1]];
        let feasible = step.event == sps_ems::mpc::SolveEvent::Optimal
            && inst.feasible(pg, 1e-3, 1e-9)
            && (0..2).all(|k| (sol.p_g[k] + sol.p_b[k] - inst.p_load).abs() <= 1e-3);
        let j = two_step_cost_of(&inst, sol);
        // a zero-cost optimum is not on the grid; below the grid's own cost
        // resolution the relative error is measured against that instead
        let floor = 1e3 * bf.cost_resolution;
        if bf.cost.abs() < floor {
            report.floored += 1;
        }
        let rel = (j - bf.cost).abs() / bf.cost.abs().max(floor);
        let err = if feasible { rel } else { f64::INFINITY };
        report.record(err, 1e-3, || {
            format!(
                "two-step instance {i}: event {:?}, cost {j:e} vs grid {:e}, {inst:?}",
                step.event, bf.cost
            )
        });
    }
    report
}
