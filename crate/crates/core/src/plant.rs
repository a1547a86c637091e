//! Continuous-time plant: generator line and bus capacitor, battery
//! branch, and load branch, each with its device-level controller.
//! Integrated with explicit Euler.
//!
//! Sign conventions: `i_g` flows from the generator into the bus, `i_L`
//! from the bus into the load, and the battery current `i_b` is positive
//! while discharging into the bus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;

/// How the plant realizes the dispatch commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// Full line, bus and controller dynamics at the plant step.
    #[default]
    Device,
    /// Commands are realized instantly at nominal bus voltage.
    Dispatch,
}

impl std::str::FromStr for Fidelity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "device" => Ok(Fidelity::Device),
            "dispatch" => Ok(Fidelity::Dispatch),
            other => Err(Error::config(
                "mode",
                format!("unknown fidelity mode `{other}` (expected device or dispatch)"),
            )),
        }
    }
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fidelity::Device => "device",
            Fidelity::Dispatch => "dispatch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub i_g: f64,
    pub v_c: f64,
    pub i_l: f64,
    pub soc: f64,
    /// Integral part of the generator voltage command (V).
    pub pi_pgm_integ: f64,
    /// Integral part of the load branch voltage (V).
    pub pi_plm_integ: f64,
    pub t: f64,
}

/// Instantaneous branch quantities for a state and the held commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlows {
    pub i_b: f64,
    pub p_g: f64,
    pub p_b: f64,
    pub p_l: f64,
}

impl BranchFlows {
    /// Power left over at the bus, p_g + p_b - p_L.
    pub fn residual(&self) -> f64 {
        self.p_g + self.p_b - self.p_l
    }
}

impl PlantState {
    /// Steady state at nominal voltage where the generator delivers
    /// `p_g` and the load draws `p_load`, controllers settled.
    pub fn equilibrium(params: &SystemParams, p_g: f64, p_load: f64, soc: f64) -> Self {
        let v = params.v_nominal;
        let i_g = p_g / v;
        let i_l = p_load / v;
        Self {
            i_g,
            v_c: v,
            i_l,
            soc,
            pi_pgm_integ: params.pgm.resistance * i_g,
            pi_plm_integ: params.plm.resistance * i_l,
            t: 0.0,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let fields = [
            ("i_g", self.i_g),
            ("v_c", self.v_c),
            ("i_L", self.i_l),
            ("soc", self.soc),
            ("pi_pgm_integ", self.pi_pgm_integ),
            ("pi_plm_integ", self.pi_plm_integ),
        ];
        match fields.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::Divergence {
                variable: name,
                t: self.t,
            }),
            None => Ok(()),
        }
    }
}

/// Euler-discretized state-of-charge update,
/// `soc - ts / (capacity_as * v_c) * p_b`. No clamping.
pub fn soc_update(soc: f64, p_b: f64, v_c: f64, ts: f64, capacity_as: f64) -> Result<f64> {
    if ![soc, p_b, v_c, ts, capacity_as]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::Domain("soc_update: non-finite input".into()));
    }
    if capacity_as <= 0.0 || v_c <= 0.0 {
        return Err(Error::Domain(
            "soc_update: capacity and bus voltage must be positive".into(),
        ));
    }
    Ok(soc - ts / (capacity_as * v_c) * p_b)
}

/// Battery-branch current: the commanded power at the present bus voltage
/// plus a voltage feedback term that makes the battery absorb the bus
/// residual.
fn battery_current(state: &PlantState, cmd_pb: f64, params: &SystemParams) -> f64 {
    cmd_pb / state.v_c + params.pcm.droop_conductance * (params.v_nominal - state.v_c)
}

/// Branch quantities at `state` in device mode.
pub fn branch_flows(state: &PlantState, cmd_pb: f64, params: &SystemParams) -> BranchFlows {
    let i_b = battery_current(state, cmd_pb, params);
    BranchFlows {
        i_b,
        p_g: state.v_c * state.i_g,
        p_b: state.v_c * i_b,
        p_l: state.v_c * state.i_l,
    }
}

/// Advances the device-mode plant one explicit-Euler step of length `dt`.
///
/// The generator controller regulates the line current to
/// `cmd_pg / v_c`; its error is expressed as the voltage drop the current
/// deficit would produce across the line resistance. The load controller
/// regulates `i_L` to `p_load / v_c`.
pub fn plant_step(
    state: &PlantState,
    cmd_pg: f64,
    cmd_pb: f64,
    p_load: f64,
    dt: f64,
    params: &SystemParams,
) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "plant_step: dt must be > 0, got {dt}"
        )));
    }
    state.check_finite()?;
    if state.v_c <= 0.0 {
        return Err(Error::Domain(format!(
            "plant_step: bus voltage collapsed ({} V) at t = {} s",
            state.v_c, state.t
        )));
    }
    let g = &params.pgm;
    let l = &params.plm;

    let i_g_ref = cmd_pg / state.v_c;
    let e_g = g.resistance * (i_g_ref - state.i_g);
    let v_g = state.v_c + g.kp * e_g + state.pi_pgm_integ;

    let i_l_ref = p_load / state.v_c;
    let e_l = i_l_ref - state.i_l;
    let v_l = l.kp * e_l + state.pi_plm_integ;

    let i_b = battery_current(state, cmd_pb, params);

    let di_g = (-g.resistance * state.i_g + v_g - state.v_c) / g.inductance;
    let di_l = (-l.resistance * state.i_l + v_l) / l.inductance;
    let dv_c = (state.i_g + i_b - state.i_l) / g.capacitance;
    let dsoc = -i_b / params.pcm.capacity_as();

    let next = PlantState {
        i_g: state.i_g + dt * di_g,
        v_c: state.v_c + dt * dv_c,
        i_l: state.i_l + dt * di_l,
        soc: state.soc + dt * dsoc,
        pi_pgm_integ: state.pi_pgm_integ + dt * g.ki * e_g,
        pi_plm_integ: state.pi_plm_integ + dt * l.ki * e_l,
        t: state.t + dt,
    };
    next.check_finite()?;
    Ok(next)
}

/// Dispatch-mode step: commands are realized exactly at nominal voltage
/// and the SoC follows the discrete update. Returns the new state and the
/// realized branch flows over the step.
pub fn dispatch_step(
    state: &PlantState,
    cmd_pg: f64,
    cmd_pb: f64,
    p_load: f64,
    dt: f64,
    params: &SystemParams,
) -> Result<(PlantState, BranchFlows)> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "dispatch_step: dt must be > 0, got {dt}"
        )));
    }
    let v = params.v_nominal;
    let flows = BranchFlows {
        i_b: cmd_pb / v,
        p_g: cmd_pg,
        p_b: cmd_pb,
        p_l: p_load,
    };
    let soc = soc_update(state.soc, cmd_pb, v, dt, params.pcm.capacity_as())?;
    let next = PlantState {
        i_g: cmd_pg / v,
        v_c: v,
        i_l: p_load / v,
        soc,
        pi_pgm_integ: params.pgm.resistance * cmd_pg / v,
        pi_plm_integ: params.plm.resistance * p_load / v,
        t: state.t + dt,
    };
    next.check_finite()?;
    Ok((next, flows))
}
