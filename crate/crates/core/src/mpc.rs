//! Receding-horizon power split between the generator and the battery.
//!
//! The horizon problem over `k = 1..H` is
//!
//! ```text
//! minimize  β/2 ‖p_g − p_g_ref·1‖² + γp/2 ‖p_b‖² + γq/2 ‖q − q0·1‖²
//! s.t.      |p_g[k] − p_g[k−1]| ≤ r_g,   |p_b[k] − p_b[k−1]| ≤ r_b
//!           p_g ∈ [p_g_min, p_g_max],    p_b ∈ [p_b_min, p_b_max]
//!           q[k] ∈ [q_min, q_max]
//!           q[k] = q[k−1] − ts / (Q_b v_nom) · p_b[k]
//!           p_g[k] + p_b[k] = p_L
//! ```
//!
//! where index 0 refers to the previously applied commands and the SoC
//! measured at the solve instant. The load is held constant over the
//! horizon.
//!
//! The cost is evaluated with powers divided by `power_scale` and SoC
//! multiplied by `soc_scale`, so the weights are dimensionless numbers in
//! those units (MW and percent by default). The SoC decision variables are
//! deviations from `q0`, which keeps the linear cost term at zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::qp::{QpProblem, QpSolver, QpStatus, ToleranceSet, WarmStart};

/// The three degradation-heuristic presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// No battery term.
    #[serde(rename = "scenario-1")]
    NoHeuristic,
    /// Battery power penalized.
    #[serde(rename = "scenario-2")]
    PowerMinimization,
    /// SoC deviation penalized.
    #[serde(rename = "scenario-3")]
    SocMinimization,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::NoHeuristic,
        Scenario::PowerMinimization,
        Scenario::SocMinimization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoHeuristic => "scenario-1",
            Scenario::PowerMinimization => "scenario-2",
            Scenario::SocMinimization => "scenario-3",
        }
    }

    pub fn preset(self) -> ScenarioPreset {
        let (beta, gamma_p, gamma_q) = match self {
            Scenario::NoHeuristic => (1.0, 0.0, 0.0),
            Scenario::PowerMinimization => (1.0, 1000.0, 0.0),
            Scenario::SocMinimization => (1.0, 0.0, 1000.0),
        };
        ScenarioPreset {
            name: self,
            beta,
            gamma_p,
            gamma_q,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "scenario",
                    format!(
                        "unknown scenario `{s}` (expected scenario-1, scenario-2 or scenario-3)"
                    ),
                )
            })
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: Scenario,
    pub beta: f64,
    pub gamma_p: f64,
    pub gamma_q: f64,
}

pub fn scenario_weights(name: &str) -> Result<ScenarioPreset> {
    Ok(name.parse::<Scenario>()?.preset())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub ts: f64,
    pub beta: f64,
    pub gamma_p: f64,
    pub gamma_q: f64,
    /// Desired generator operating point (W).
    pub p_g_ref: f64,
    /// SoC anchor of the cost; the initial SoC when absent.
    pub q0_ref: Option<f64>,
    /// Watts per cost unit of power.
    pub power_scale: f64,
    /// Cost units per unit of SoC fraction.
    pub soc_scale: f64,
    /// Weight on the power-balance slack when the problem has to be
    /// relaxed, in the same scaled units.
    pub slack_penalty: f64,
    pub tolerances: ToleranceSet,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            ts: 1.0,
            beta: 1.0,
            gamma_p: 0.0,
            gamma_q: 0.0,
            p_g_ref: 15e6,
            q0_ref: None,
            power_scale: 1e6,
            soc_scale: 100.0,
            slack_penalty: 1e6,
            tolerances: ToleranceSet::default(),
        }
    }
}

impl MpcConfig {
    pub fn with_preset(mut self, preset: ScenarioPreset) -> Self {
        self.beta = preset.beta;
        self.gamma_p = preset.gamma_p;
        self.gamma_q = preset.gamma_q;
        self
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let f = |name: &str| format!("{prefix}.{name}");
        if self.horizon < 1 {
            return Err(Error::config(f("horizon"), "must be >= 1"));
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::config(f("ts"), "must be > 0"));
        }
        for (name, w) in [
            ("beta", self.beta),
            ("gamma_p", self.gamma_p),
            ("gamma_q", self.gamma_q),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(f(name), "must be >= 0"));
            }
        }
        if self.beta + self.gamma_p + self.gamma_q <= 0.0 {
            return Err(Error::config(
                f("beta"),
                "at least one cost weight must be > 0",
            ));
        }
        if !self.p_g_ref.is_finite() {
            return Err(Error::config(f("p_g_ref"), "must be finite"));
        }
        if let Some(q0) = self.q0_ref {
            if !(0.0..=1.0).contains(&q0) {
                return Err(Error::config(f("q0_ref"), "must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("power_scale", self.power_scale),
            ("soc_scale", self.soc_scale),
            ("slack_penalty", self.slack_penalty),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(f(name), "must be > 0"));
            }
        }
        let t = &self.tolerances;
        if !(t.eps_abs > 0.0 && t.eps_rel >= 0.0 && t.rho > 0.0 && t.sigma > 0.0) {
            return Err(Error::config(
                f("tolerances"),
                "eps_abs, rho and sigma must be > 0 and eps_rel >= 0",
            ));
        }
        if !(t.alpha > 0.0 && t.alpha < 2.0) {
            return Err(Error::config(f("tolerances.alpha"), "must lie in (0, 2)"));
        }
        if t.max_iter == 0 {
            return Err(Error::config(f("tolerances.max_iter"), "must be >= 1"));
        }
        Ok(())
    }
}

/// Index map of the stacked decision vector `(p_g, p_b, q[, slack])` and
/// of the constraint rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HorizonLayout {
    pub horizon: usize,
    pub relaxed: bool,
}

impl HorizonLayout {
    pub fn n(&self) -> usize {
        if self.relaxed {
            4 * self.horizon
        } else {
            3 * self.horizon
        }
    }
    pub fn m(&self) -> usize {
        7 * self.horizon
    }
    pub fn p_g(&self, k: usize) -> usize {
        k
    }
    pub fn p_b(&self, k: usize) -> usize {
        self.horizon + k
    }
    pub fn q(&self, k: usize) -> usize {
        2 * self.horizon + k
    }
    pub fn slack(&self, k: usize) -> usize {
        3 * self.horizon + k
    }
    pub fn row_box_pg(&self, k: usize) -> usize {
        k
    }
    pub fn row_box_pb(&self, k: usize) -> usize {
        self.horizon + k
    }
    pub fn row_box_q(&self, k: usize) -> usize {
        2 * self.horizon + k
    }
    pub fn row_ramp_pg(&self, k: usize) -> usize {
        3 * self.horizon + k
    }
    pub fn row_ramp_pb(&self, k: usize) -> usize {
        4 * self.horizon + k
    }
    pub fn row_soc(&self, k: usize) -> usize {
        5 * self.horizon + k
    }
    pub fn row_balance(&self, k: usize) -> usize {
        6 * self.horizon + k
    }
}

/// The horizon QP in scaled units plus what is needed to map back.
#[derive(Debug, Clone)]
pub struct HorizonQp {
    pub problem: QpProblem,
    pub layout: HorizonLayout,
    /// Cost terms independent of the decision vector.
    pub constant: f64,
    /// SoC the `q` variables are measured from.
    pub soc_anchor: f64,
}

/// Measured inputs of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcInputs {
    pub p_load: f64,
    pub prev_pg: f64,
    pub prev_pb: f64,
    pub soc_now: f64,
}

fn check_inputs(inp: &MpcInputs) -> Result<()> {
    if ![inp.p_load, inp.prev_pg, inp.prev_pb]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::Domain("MPC inputs must be finite".into()));
    }
    if !(0.0..=1.0).contains(&inp.soc_now) {
        return Err(Error::Domain(format!(
            "measured SoC {} is outside [0, 1]",
            inp.soc_now
        )));
    }
    Ok(())
}

/// SoC change per scaled power unit over one step, in scaled SoC units.
fn soc_gain(cfg: &MpcConfig, params: &SystemParams) -> f64 {
    cfg.ts * cfg.power_scale * cfg.soc_scale / (params.pcm.capacity_as() * params.v_nominal)
}

fn build(
    cfg: &MpcConfig,
    params: &SystemParams,
    q0_ref: f64,
    inp: &MpcInputs,
    relaxed: bool,
) -> Result<HorizonQp> {
    cfg.validate("mpc")?;
    check_inputs(inp)?;
    let h = cfg.horizon;
    let lay = HorizonLayout {
        horizon: h,
        relaxed,
    };
    let (n, m) = (lay.n(), lay.m());
    let ps = cfg.power_scale;
    let ss = cfg.soc_scale;
    let g = &params.pgm;
    let b = &params.pcm;

    let mut p = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    let pgr = cfg.p_g_ref / ps;
    let q0 = q0_ref * ss;
    for k in 0..h {
        p[(lay.p_g(k), lay.p_g(k))] = cfg.beta;
        c[lay.p_g(k)] = -cfg.beta * pgr;
        p[(lay.p_b(k), lay.p_b(k))] = cfg.gamma_p;
        p[(lay.q(k), lay.q(k))] = cfg.gamma_q;
        if relaxed {
            p[(lay.slack(k), lay.slack(k))] = cfg.slack_penalty;
        }
    }
    let constant = h as f64 * 0.5 * cfg.beta * pgr * pgr;

    let mut a = DMatrix::zeros(m, n);
    let mut lo = DVector::zeros(m);
    let mut up = DVector::zeros(m);
    let kappa = soc_gain(cfg, params);
    let (rg, rb) = (g.ramp_limit / ps, b.ramp_limit / ps);
    for k in 0..h {
        let r = lay.row_box_pg(k);
        a[(r, lay.p_g(k))] = 1.0;
        lo[r] = g.p_min / ps;
        up[r] = g.p_max / ps;

        let r = lay.row_box_pb(k);
        a[(r, lay.p_b(k))] = 1.0;
        lo[r] = b.p_min / ps;
        up[r] = b.p_max / ps;

        let r = lay.row_box_q(k);
        a[(r, lay.q(k))] = 1.0;
        lo[r] = b.soc_min * ss - q0;
        up[r] = b.soc_max * ss - q0;

        let r = lay.row_ramp_pg(k);
        a[(r, lay.p_g(k))] = 1.0;
        if k == 0 {
            let prev = inp.prev_pg / ps;
            lo[r] = prev - rg;
            up[r] = prev + rg;
        } else {
            a[(r, lay.p_g(k - 1))] = -1.0;
            lo[r] = -rg;
            up[r] = rg;
        }

        let r = lay.row_ramp_pb(k);
        a[(r, lay.p_b(k))] = 1.0;
        if k == 0 {
            let prev = inp.prev_pb / ps;
            lo[r] = prev - rb;
            up[r] = prev + rb;
        } else {
            a[(r, lay.p_b(k - 1))] = -1.0;
            lo[r] = -rb;
            up[r] = rb;
        }

        // q[k] - q[k-1] + kappa p_b[k] = 0, q[-1] being the measurement
        let r = lay.row_soc(k);
        a[(r, lay.q(k))] = 1.0;
        a[(r, lay.p_b(k))] = kappa;
        if k == 0 {
            lo[r] = inp.soc_now * ss - q0;
        } else {
            a[(r, lay.q(k - 1))] = -1.0;
            lo[r] = 0.0;
        }
        up[r] = lo[r];

        let r = lay.row_balance(k);
        a[(r, lay.p_g(k))] = 1.0;
        a[(r, lay.p_b(k))] = 1.0;
        if relaxed {
            a[(r, lay.slack(k))] = 1.0;
        }
        lo[r] = inp.p_load / ps;
        up[r] = lo[r];
    }

    Ok(HorizonQp {
        problem: QpProblem::new(p, c, a, lo, up)?,
        layout: lay,
        constant,
        soc_anchor: q0_ref,
    })
}

/// Builds the horizon QP in scaled units (see the module docs).
pub fn build_horizon_qp(
    cfg: &MpcConfig,
    params: &SystemParams,
    p_load: f64,
    prev_pg: f64,
    prev_pb: f64,
    soc_now: f64,
) -> Result<HorizonQp> {
    let inp = MpcInputs {
        p_load,
        prev_pg,
        prev_pb,
        soc_now,
    };
    build(
        cfg,
        params,
        cfg.q0_ref.unwrap_or(params.pcm.soc_init),
        &inp,
        false,
    )
}

/// Which constraints are tight at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActiveFlags {
    pub pg_box: bool,
    pub pb_box: bool,
    pub soc_box: bool,
    pub pg_ramp: bool,
    pub pb_ramp: bool,
}

impl ActiveFlags {
    /// Compact `|`-separated label, `-` when nothing binds.
    pub fn label(&self) -> String {
        let names = [
            (self.pg_box, "pg_box"),
            (self.pb_box, "pb_box"),
            (self.soc_box, "soc_box"),
            (self.pg_ramp, "pg_ramp"),
            (self.pb_ramp, "pb_ramp"),
        ];
        let s: Vec<&str> = names
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if s.is_empty() {
            "-".into()
        } else {
            s.join("|")
        }
    }
}

/// Outcome class of one controller step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveEvent {
    Optimal,
    /// The nominal problem was infeasible; the power balance was relaxed.
    Relaxed,
    /// The nominal solve hit its iteration cap; the relaxed problem was
    /// used instead.
    MaxIterationsRelaxed,
    /// No optimal solution; previous commands held.
    Failed,
}

impl SolveEvent {
    pub fn label(self) -> &'static str {
        match self {
            SolveEvent::Optimal => "optimal",
            SolveEvent::Relaxed => "relaxed",
            SolveEvent::MaxIterationsRelaxed => "max-iterations-relaxed",
            SolveEvent::Failed => "failed",
        }
    }

    pub fn is_success(self) -> bool {
        self != SolveEvent::Failed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    /// Generator power sequence (W).
    pub p_g: Vec<f64>,
    /// Battery power sequence (W).
    pub p_b: Vec<f64>,
    /// Predicted SoC after each step.
    pub q: Vec<f64>,
    /// Power-balance slack (W); all zero unless relaxed.
    pub slack: Vec<f64>,
    /// Optimal cost in scaled units, constant terms included.
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
    pub relaxed: bool,
    pub active: Vec<ActiveFlags>,
}

impl HorizonSolution {
    fn from_qp(qp: &HorizonQp, sol: &crate::qp::QpSolution, cfg: &MpcConfig) -> Self {
        let lay = qp.layout;
        let h = lay.horizon;
        let ps = cfg.power_scale;
        let ss = cfg.soc_scale;
        let x = &sol.x;
        let prob = &qp.problem;
        let ax = &prob.a * x;
        let tight = |row: usize| {
            let tol = 1e-7 * (1.0 + prob.up[row].abs().max(prob.lo[row].abs()));
            (ax[row] - prob.lo[row]).abs() <= tol || (prob.up[row] - ax[row]).abs() <= tol
        };
        HorizonSolution {
            p_g: (0..h).map(|k| x[lay.p_g(k)] * ps).collect(),
            p_b: (0..h).map(|k| x[lay.p_b(k)] * ps).collect(),
            q: (0..h).map(|k| qp.soc_anchor + x[lay.q(k)] / ss).collect(),
            slack: (0..h)
                .map(|k| {
                    if lay.relaxed {
                        x[lay.slack(k)] * ps
                    } else {
                        0.0
                    }
                })
                .collect(),
            objective: sol.objective + qp.constant,
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            polished: sol.polished,
            relaxed: lay.relaxed,
            active: (0..h)
                .map(|k| ActiveFlags {
                    pg_box: tight(lay.row_box_pg(k)),
                    pb_box: tight(lay.row_box_pb(k)),
                    soc_box: tight(lay.row_box_q(k)),
                    pg_ramp: tight(lay.row_ramp_pg(k)),
                    pb_ramp: tight(lay.row_ramp_pb(k)),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    pub cmd_pg: f64,
    pub cmd_pb: f64,
    pub solution: HorizonSolution,
    pub event: SolveEvent,
}

/// Shifts each length-`h` block one step forward, repeating the last
/// entry.
fn shift_blocks(v: &DVector<f64>, h: usize) -> DVector<f64> {
    let mut out = v.clone();
    for block in 0..v.len() / h {
        let base = block * h;
        for k in 0..h - 1 {
            out[base + k] = v[base + k + 1];
        }
    }
    out
}

/// Receding-horizon controller. Holds the cached factorizations and the
/// warm start of the previous solve, so one instance serves one
/// simulation.
pub struct MpcController {
    cfg: MpcConfig,
    params: SystemParams,
    q0_ref: f64,
    nominal: Option<QpSolver>,
    relaxed: Option<QpSolver>,
    warm: Option<WarmStart>,
    warm_relaxed: Option<WarmStart>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, params: SystemParams) -> Result<Self> {
        cfg.validate("mpc")?;
        params.validate("system")?;
        let q0_ref = cfg.q0_ref.unwrap_or(params.pcm.soc_init);
        Ok(Self {
            cfg,
            params,
            q0_ref,
            nominal: None,
            relaxed: None,
            warm: None,
            warm_relaxed: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn build(&self, inp: &MpcInputs, relaxed: bool) -> Result<HorizonQp> {
        build(&self.cfg, &self.params, self.q0_ref, inp, relaxed)
    }

    fn solve_cached(&mut self, qp: &HorizonQp) -> crate::qp::QpSolution {
        let tol = self.cfg.tolerances;
        let pr = &qp.problem;
        let (slot, warm) = if qp.layout.relaxed {
            (&mut self.relaxed, &self.warm_relaxed)
        } else {
            (&mut self.nominal, &self.warm)
        };
        let reuse = slot
            .as_ref()
            .is_some_and(|s| s.matches(&pr.p, &pr.a, &pr.lo, &pr.up, &tol));
        if !reuse {
            *slot = Some(QpSolver::new(&pr.p, &pr.a, &pr.lo, &pr.up, &tol));
        }
        let solver = slot.as_ref().expect("solver initialized above");
        solver.solve(&pr.c, &pr.lo, &pr.up, warm.as_ref())
    }

    fn remember(&mut self, qp: &HorizonQp, sol: &crate::qp::QpSolution) {
        let h = qp.layout.horizon;
        let w = WarmStart {
            x: shift_blocks(&sol.x, h),
            y: Some(shift_blocks(&sol.duals, h)),
        };
        if qp.layout.relaxed {
            self.warm_relaxed = Some(w);
        } else {
            self.warm = Some(w);
        }
    }

    /// Solves the horizon problem for the measured inputs and returns the
    /// first element of each optimal sequence as the command.
    pub fn step(&mut self, inp: &MpcInputs) -> Result<MpcStep> {
        let qp = self.build(inp, false)?;
        let sol = self.solve_cached(&qp);
        if sol.status == QpStatus::Optimal {
            self.remember(&qp, &sol);
            let solution = HorizonSolution::from_qp(&qp, &sol, &self.cfg);
            return Ok(MpcStep {
                cmd_pg: solution.p_g[0],
                cmd_pb: solution.p_b[0],
                solution,
                event: SolveEvent::Optimal,
            });
        }

        let first_status = sol.status;
        let rqp = self.build(inp, true)?;
        let rsol = self.solve_cached(&rqp);
        let solution = HorizonSolution::from_qp(&rqp, &rsol, &self.cfg);
        if rsol.status == QpStatus::Optimal {
            self.remember(&rqp, &rsol);
            let event = match first_status {
                QpStatus::MaxIterations => SolveEvent::MaxIterationsRelaxed,
                _ => SolveEvent::Relaxed,
            };
            log::debug!(
                "horizon problem relaxed ({first_status}); slack {:.3} W",
                solution.slack[0]
            );
            Ok(MpcStep {
                cmd_pg: solution.p_g[0],
                cmd_pb: solution.p_b[0],
                solution,
                event,
            })
        } else {
            log::warn!(
                "horizon problem failed ({first_status}, relaxed {})",
                rsol.status
            );
            Ok(MpcStep {
                cmd_pg: inp.prev_pg,
                cmd_pb: inp.prev_pb,
                solution,
                event: SolveEvent::Failed,
            })
        }
    }
}

/// One cold-started controller step.
pub fn mpc_step(
    cfg: &MpcConfig,
    params: &SystemParams,
    p_load: f64,
    prev_pg: f64,
    prev_pb: f64,
    soc_now: f64,
) -> Result<MpcStep> {
    let mut ctl = MpcController::new(cfg.clone(), *params)?;
    ctl.step(&MpcInputs {
        p_load,
        prev_pg,
        prev_pb,
        soc_now,
    })
}

/// Startup commands: the generator takes as much of the initial load as
/// its rating allows, the battery the rest.
pub fn initial_commands(p_load0: f64, params: &SystemParams) -> (f64, f64) {
    let pg = p_load0.min(params.pgm.p_max);
    (pg, p_load0 - pg)
}
