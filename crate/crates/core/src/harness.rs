//! Co-simulation: the plant runs at the fast step, the controller at its
//! own period, and commands are held between solves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::degradation::{DegradationParams, DegradationTracker, HIGH_C_RATE};
use crate::error::{Error, Result};
use crate::load::LoadProfile;
use crate::mpc::{
    initial_commands, HorizonSolution, MpcConfig, MpcController, MpcInputs, Scenario, SolveEvent,
};
use crate::params::SystemParams;
use crate::plant::{branch_flows, dispatch_step, plant_step, BranchFlows, Fidelity, PlantState};

/// Consecutive failed solves tolerated before a run is aborted.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// Label written to logs; the scenario name for preset runs.
    pub name: String,
    pub system: SystemParams,
    /// Controller settings with the weights already resolved.
    pub mpc: MpcConfig,
    pub degradation: DegradationParams,
    pub load: LoadProfile,
    pub mode: Fidelity,
    pub t_final: f64,
    pub plant_dt: f64,
    pub mpc_period: f64,
    pub log_period: f64,
    /// Only used by randomized studies; a run itself is deterministic.
    pub seed: u64,
}

impl RunSpec {
    pub fn for_scenario(scenario: Scenario, mode: Fidelity) -> Self {
        let load = LoadProfile::default();
        Self {
            name: scenario.name().to_string(),
            system: SystemParams::default(),
            mpc: MpcConfig::default().with_preset(scenario.preset()),
            degradation: DegradationParams::default(),
            t_final: load.t_final(),
            load,
            mode,
            plant_dt: 1e-3,
            mpc_period: 1.0,
            log_period: 0.1,
            seed: 0,
        }
    }

    fn ratio(num: f64, den: f64, field: &str) -> Result<usize> {
        let r = num / den;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > 1e-9 * k {
            return Err(Error::config(
                field,
                format!("{num} is not a positive integer multiple of {den}"),
            ));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate("system")?;
        self.mpc.validate("mpc")?;
        self.degradation.validate("degradation")?;
        self.load.validate("load_profile")?;
        if !(self.plant_dt.is_finite() && self.plant_dt > 0.0) {
            return Err(Error::config("run.plant_dt", "must be > 0"));
        }
        Self::ratio(self.mpc_period, self.plant_dt, "run.mpc_period")?;
        Self::ratio(self.log_period, self.plant_dt, "run.log_period")?;
        if (self.mpc.ts - self.mpc_period).abs() > 1e-12 * self.mpc_period {
            return Err(Error::config(
                "mpc.ts",
                format!(
                    "controller model step {} s must equal the controller period {} s",
                    self.mpc.ts, self.mpc_period
                ),
            ));
        }
        if !(self.t_final >= self.mpc_period) {
            return Err(Error::config("run.t_final", "must be >= mpc_period"));
        }
        if self.t_final > self.load.t_final() {
            return Err(Error::config(
                "run.t_final",
                format!("exceeds the load profile end {}", self.load.t_final()),
            ));
        }
        Ok(())
    }
}

/// One sampled row of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub p_load: f64,
    pub cmd_pg: f64,
    pub cmd_pb: f64,
    pub p_g: f64,
    pub p_b: f64,
    pub v_c: f64,
    pub soc: f64,
    pub ah_throughput: f64,
    pub q_loss: f64,
    pub loss_pct: f64,
    pub delta_q_pct: f64,
    pub status: SolveEvent,
    pub iterations: usize,
    pub active: String,
    pub slack: f64,
}

/// Diagnostic record of one controller solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub t: f64,
    pub p_load: f64,
    pub soc_measured: f64,
    pub prev_pg: f64,
    pub prev_pb: f64,
    pub cmd_pg: f64,
    pub cmd_pb: f64,
    pub event: SolveEvent,
    pub solution: HorizonSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub name: String,
    pub mode: Fidelity,
    pub load: LoadProfile,
    pub t_final: f64,
    pub pg_ramp_limit: f64,
    pub pb_ramp_limit: f64,
    pub q0_ref: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub capacity_ahr: f64,
    pub initial_pg: f64,
    pub initial_pb: f64,
    pub max_c_rate: f64,
    pub rows: Vec<LogRow>,
    pub solves: Vec<SolveRecord>,
}

/// Formats a float with the shortest digits that round-trip, switching to
/// exponent notation for very small and very large magnitudes.
pub(crate) struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

pub const CSV_HEADER: &str = "t,p_load,cmd_pg,cmd_pb,p_g,p_b,v_c,soc,ah_throughput,q_loss,loss_pct,delta_q_pct,status,iterations,active,slack";

impl SimLog {
    /// Writes the row log as CSV with a fixed header. Floats use the
    /// shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                Num(r.t),
                Num(r.p_load),
                Num(r.cmd_pg),
                Num(r.cmd_pb),
                Num(r.p_g),
                Num(r.p_b),
                Num(r.v_c),
                Num(r.soc),
                Num(r.ah_throughput),
                Num(r.q_loss),
                Num(r.loss_pct),
                Num(r.delta_q_pct),
                r.status.label(),
                r.iterations,
                r.active,
                Num(r.slack)
            )?;
        }
        Ok(())
    }

    /// Per-solve diagnostics with the full horizon sequences.
    pub fn write_solves_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let h = self.solves.first().map_or(0, |s| s.solution.p_g.len());
        let mut header = String::from(
            "t,p_load,soc_measured,cmd_pg,cmd_pb,event,qp_status,iterations,primal_residual,dual_residual,polished,objective",
        );
        for series in ["p_g", "p_b", "q", "slack", "active"] {
            for k in 1..=h {
                let _ = write!(header, ",{series}_{k}");
            }
        }
        writeln!(w, "{header}")?;
        for s in &self.solves {
            let sol = &s.solution;
            let mut line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                Num(s.t),
                Num(s.p_load),
                Num(s.soc_measured),
                Num(s.cmd_pg),
                Num(s.cmd_pb),
                s.event.label(),
                sol.status,
                sol.iterations,
                Num(sol.primal_residual),
                Num(sol.dual_residual),
                sol.polished,
                Num(sol.objective)
            );
            for v in sol
                .p_g
                .iter()
                .chain(&sol.p_b)
                .chain(&sol.q)
                .chain(&sol.slack)
            {
                let _ = write!(line, ",{}", Num(*v));
            }
            for a in &sol.active {
                let _ = write!(line, ",{}", a.label());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn abort(t: f64, reason: impl Into<String>, log: SimLog) -> Error {
    Error::RunAborted {
        t,
        reason: reason.into(),
        log: Box::new(log),
    }
}

/// Runs one simulation.
pub fn run(spec: &RunSpec) -> Result<SimLog> {
    spec.validate()?;
    let params = spec.system;
    let mut ctl = MpcController::new(spec.mpc.clone(), params)?;

    let (dt, per_mpc, per_log, total) = match spec.mode {
        Fidelity::Device => (
            spec.plant_dt,
            RunSpec::ratio(spec.mpc_period, spec.plant_dt, "run.mpc_period")?,
            RunSpec::ratio(spec.log_period, spec.plant_dt, "run.log_period")?,
            (spec.t_final / spec.plant_dt).round() as usize,
        ),
        Fidelity::Dispatch => (
            spec.mpc_period,
            1,
            ((spec.log_period / spec.mpc_period).round() as usize).max(1),
            (spec.t_final / spec.mpc_period).round() as usize,
        ),
    };

    let p_load0 = spec.load.load_power(0.0)?;
    let (pg0, pb0) = initial_commands(p_load0, &params);
    let mut state = PlantState::equilibrium(&params, pg0, p_load0, params.pcm.soc_init);
    let mut deg = DegradationTracker::new(spec.degradation, params.pcm.capacity_ahr);

    let mut log = SimLog {
        name: spec.name.clone(),
        mode: spec.mode,
        load: spec.load.clone(),
        t_final: spec.t_final,
        pg_ramp_limit: params.pgm.ramp_limit,
        pb_ramp_limit: params.pcm.ramp_limit,
        q0_ref: spec.mpc.q0_ref.unwrap_or(params.pcm.soc_init),
        soc_min: params.pcm.soc_min,
        soc_max: params.pcm.soc_max,
        capacity_ahr: params.pcm.capacity_ahr,
        initial_pg: pg0,
        initial_pb: pb0,
        max_c_rate: 0.0,
        rows: Vec::with_capacity(total / per_log + 2),
        solves: Vec::with_capacity(total / per_mpc + 1),
    };

    let (mut cmd_pg, mut cmd_pb) = (pg0, pb0);
    let mut failures = 0usize;

    let flows_at = |state: &PlantState, cmd_pg: f64, cmd_pb: f64, p_load: f64| match spec.mode {
        Fidelity::Device => branch_flows(state, cmd_pb, &params),
        Fidelity::Dispatch => BranchFlows {
            i_b: cmd_pb / params.v_nominal,
            p_g: cmd_pg,
            p_b: cmd_pb,
            p_l: p_load,
        },
    };

    for k in 0..=total {
        let t = k as f64 * dt;
        let p_load = spec.load.load_power(t.min(spec.load.t_final()))?;

        if k < total && k % per_mpc == 0 {
            let inp = MpcInputs {
                p_load,
                prev_pg: cmd_pg,
                prev_pb: cmd_pb,
                soc_now: state.soc,
            };
            let step = match ctl.step(&inp) {
                Ok(s) => s,
                Err(e) => return Err(abort(t, e.to_string(), log)),
            };
            if step.event.is_success() {
                failures = 0;
            } else {
                failures += 1;
            }
            cmd_pg = step.cmd_pg;
            cmd_pb = step.cmd_pb;
            log.solves.push(SolveRecord {
                t,
                p_load,
                soc_measured: state.soc,
                prev_pg: inp.prev_pg,
                prev_pb: inp.prev_pb,
                cmd_pg,
                cmd_pb,
                event: step.event,
                solution: step.solution,
            });
            if failures > MAX_CONSECUTIVE_FAILURES {
                return Err(abort(
                    t,
                    format!("{failures} consecutive controller failures"),
                    log,
                ));
            }
        }

        if k % per_log == 0 {
            let flows = flows_at(&state, cmd_pg, cmd_pb, p_load);
            let d = deg.state();
            let last = log.solves.last().expect("a solve precedes the first row");
            log.rows.push(LogRow {
                t,
                p_load,
                cmd_pg,
                cmd_pb,
                p_g: flows.p_g,
                p_b: flows.p_b,
                v_c: state.v_c,
                soc: state.soc,
                ah_throughput: d.ah_throughput,
                q_loss: d.q_loss,
                loss_pct: d.loss_pct,
                delta_q_pct: d.delta_q_pct,
                status: last.event,
                iterations: last.solution.iterations,
                active: last.solution.active[0].label(),
                slack: last.solution.slack[0],
            });
        }

        if k == total {
            break;
        }

        let stepped = match spec.mode {
            Fidelity::Device => {
                let flows = branch_flows(&state, cmd_pb, &params);
                deg.accumulate(flows.i_b, dt)
                    .and_then(|_| plant_step(&state, cmd_pg, cmd_pb, p_load, dt, &params))
            }
            Fidelity::Dispatch => dispatch_step(&state, cmd_pg, cmd_pb, p_load, dt, &params)
                .and_then(|(next, flows)| deg.accumulate(flows.i_b, dt).map(|_| next)),
        };
        match stepped {
            Ok(next) => state = next,
            Err(e) => return Err(abort(t, e.to_string(), log)),
        }
    }

    log.max_c_rate = deg.state().max_c_rate;
    if log.max_c_rate > HIGH_C_RATE {
        log::warn!(
            "{}: battery current peaked at {:.1} C; the capacity-loss model is far outside its characteristic rate",
            spec.name,
            log.max_c_rate
        );
    }
    Ok(log)
}

/// Runs several simulations on separate threads. Results come back in
/// input order.
pub fn run_many(specs: &[RunSpec]) -> Vec<Result<SimLog>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_q_loss: f64,
    pub final_loss_pct: f64,
    pub final_delta_q_pct: f64,
    pub ah_throughput: f64,
    pub max_soc_deviation: f64,
    pub max_pg_step: f64,
    pub ramp_saturated_pg_steps: usize,
    pub max_abs_pb: f64,
    pub relaxed_steps: usize,
    pub failed_steps: usize,
    pub max_iterations: usize,
    pub mean_iterations: f64,
}

/// Metrics per run plus, for each metric, the run names in ascending
/// order of that metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: BTreeMap<String, RunSummary>,
    pub orderings: BTreeMap<String, Vec<String>>,
}

/// A generator step counts as ramp-saturated when it uses the full ramp
/// to this relative precision.
const RAMP_SATURATION_REL: f64 = 1e-6;

pub fn summarize(log: &SimLog) -> Result<RunSummary> {
    let last = log
        .rows
        .last()
        .ok_or_else(|| Error::Comparison(format!("{}: log has no rows", log.name)))?;
    let mut prev = log.initial_pg;
    let mut max_pg_step: f64 = 0.0;
    let mut saturated = 0;
    for s in &log.solves {
        let d = (s.cmd_pg - prev).abs();
        max_pg_step = max_pg_step.max(d);
        if d >= log.pg_ramp_limit * (1.0 - RAMP_SATURATION_REL) {
            saturated += 1;
        }
        prev = s.cmd_pg;
    }
    let iters: Vec<usize> = log.solves.iter().map(|s| s.solution.iterations).collect();
    Ok(RunSummary {
        final_q_loss: last.q_loss,
        final_loss_pct: last.loss_pct,
        final_delta_q_pct: last.delta_q_pct,
        ah_throughput: last.ah_throughput,
        max_soc_deviation: log
            .rows
            .iter()
            .map(|r| (r.soc - log.q0_ref).abs())
            .fold(0.0, f64::max),
        max_pg_step,
        ramp_saturated_pg_steps: saturated,
        max_abs_pb: log.rows.iter().map(|r| r.p_b.abs()).fold(0.0, f64::max),
        relaxed_steps: log
            .solves
            .iter()
            .filter(|s| {
                matches!(
                    s.event,
                    SolveEvent::Relaxed | SolveEvent::MaxIterationsRelaxed
                )
            })
            .count(),
        failed_steps: log
            .solves
            .iter()
            .filter(|s| s.event == SolveEvent::Failed)
            .count(),
        max_iterations: iters.iter().copied().max().unwrap_or(0),
        mean_iterations: if iters.is_empty() {
            0.0
        } else {
            iters.iter().sum::<usize>() as f64 / iters.len() as f64
        },
    })
}

type SummaryFn = fn(&RunSummary) -> f64;

pub fn compare(runs: &[SimLog]) -> Result<ComparisonReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Comparison("no runs to compare".into()))?;
    let mut summaries = BTreeMap::new();
    for r in runs {
        if r.load != first.load || r.t_final != first.t_final {
            return Err(Error::Comparison(format!(
                "{} and {} do not share the load profile and horizon",
                first.name, r.name
            )));
        }
        if summaries.insert(r.name.clone(), summarize(r)?).is_some() {
            return Err(Error::Comparison(format!("duplicate run name {}", r.name)));
        }
    }

    let metrics: [(&str, SummaryFn); 7] = [
        ("final_q_loss", |s| s.final_q_loss),
        ("ah_throughput", |s| s.ah_throughput),
        ("max_soc_deviation", |s| s.max_soc_deviation),
        ("max_pg_step", |s| s.max_pg_step),
        ("ramp_saturated_pg_steps", |s| {
            s.ramp_saturated_pg_steps as f64
        }),
        ("max_abs_pb", |s| s.max_abs_pb),
        ("final_loss_pct", |s| s.final_loss_pct),
    ];
    let mut orderings = BTreeMap::new();
    for (name, f) in metrics {
        let mut names: Vec<(&String, f64)> = summaries.iter().map(|(n, s)| (n, f(s))).collect();
        names.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        orderings.insert(
            name.to_string(),
            names.into_iter().map(|(n, _)| n.clone()).collect(),
        );
    }
    Ok(ComparisonReport {
        runs: summaries,
        orderings,
    })
}

impl ComparisonReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>14} {:>10} {:>14} {:>12} {:>12} {:>9} {:>12} {:>8}",
            "run",
            "Q_L [Ah]",
            "loss [%]",
            "throughput",
            "max|soc-q0|",
            "max dPg [W]",
            "ramp-sat",
            "max|Pb| [W]",
            "relaxed"
        );
        for (name, s) in &self.runs {
            let _ = writeln!(
                out,
                "{:<12} {:>14.6e} {:>10.3e} {:>14.6e} {:>12.6} {:>12.1} {:>9} {:>12.1} {:>8}",
                name,
                s.final_q_loss,
                s.final_loss_pct,
                s.ah_throughput,
                s.max_soc_deviation,
                s.max_pg_step,
                s.ramp_saturated_pg_steps,
                s.max_abs_pb,
                s.relaxed_steps
            );
        }
        out.push('\n');
        for (metric, order) in &self.orderings {
            let _ = writeln!(out, "{metric:<24} {}", order.join(" < "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_integer_rate_transition() {
        let mut spec = RunSpec::for_scenario(Scenario::NoHeuristic, Fidelity::Device);
        spec.mpc_period = 1.0005;
        spec.mpc.ts = 1.0005;
        spec.plant_dt = 0.001;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rejects_model_step_mismatch() {
        let mut spec = RunSpec::for_scenario(Scenario::NoHeuristic, Fidelity::Device);
        spec.mpc.ts = 0.5;
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("mpc.ts"));
    }

    #[test]
    fn one_solve_per_period() {
        let mut spec = RunSpec::for_scenario(Scenario::PowerMinimization, Fidelity::Dispatch);
        spec.load = LoadProfile::constant(15e6, 12.0);
        spec.t_final = 12.0;
        let log = run(&spec).unwrap();
        assert_eq!(log.solves.len(), 12);
        assert_eq!(log.rows.len(), 13);
        assert!(log.rows.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn compare_rejects_mismatched_profiles() {
        let mut a = RunSpec::for_scenario(Scenario::NoHeuristic, Fidelity::Dispatch);
        a.load = LoadProfile::constant(15e6, 5.0);
        a.t_final = 5.0;
        let mut b = a.clone();
        b.name = "other".into();
        b.load = LoadProfile::constant(16e6, 5.0);
        let logs = [run(&a).unwrap(), run(&b).unwrap()];
        assert!(matches!(compare(&logs), Err(Error::Comparison(_))));
        assert!(compare(&[]).is_err());
    }

    #[test]
    fn repeated_failures_abort_with_partial_log() {
        let mut spec = RunSpec::for_scenario(Scenario::PowerMinimization, Fidelity::Dispatch);
        spec.mpc.tolerances.max_iter = 1;
        spec.mpc.tolerances.polish = false;
        spec.load = LoadProfile::constant(20e6, 10.0);
        spec.t_final = 10.0;
        match run(&spec) {
            Err(Error::RunAborted { log, .. }) => {
                assert_eq!(log.solves.len(), MAX_CONSECUTIVE_FAILURES + 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
