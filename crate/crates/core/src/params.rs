//! Physical and rating constants of the lumped generator / battery / load
//! system. Everything is SI except `PcmParams::capacity_ahr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal DC bus voltage.
pub const V_NOMINAL: f64 = 12_000.0;

/// Power generation module: controllable voltage source behind an RL line,
/// with a shunt capacitance on the bus side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgmParams {
    /// Line inductance (H).
    pub inductance: f64,
    /// Line resistance (ohm). Not to be confused with `ramp_limit`.
    pub resistance: f64,
    /// Bus capacitance (F).
    pub capacitance: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Largest allowed change of the power command between two MPC
    /// steps (W per step).
    pub ramp_limit: f64,
    /// Proportional gain of the current loop (V/V).
    pub kp: f64,
    /// Integral gain of the current loop (V/(V s)).
    pub ki: f64,
}

impl Default for PgmParams {
    fn default() -> Self {
        Self {
            inductance: 1e-3,
            resistance: 0.1,
            capacitance: 10e-3,
            p_min: 0.2e6,
            p_max: 28e6,
            ramp_limit: 2.8e6,
            kp: 4.0,
            ki: 250.0,
        }
    }
}

/// Power conversion module (battery). Positive power is discharge into
/// the bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcmParams {
    pub capacity_ahr: f64,
    /// Most negative power, i.e. the charging limit (W).
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_limit: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    /// Bus-voltage feedback of the converter (A/V). The battery branch
    /// absorbs whatever power the other branches leave unbalanced.
    pub droop_conductance: f64,
}

impl Default for PcmParams {
    fn default() -> Self {
        Self {
            capacity_ahr: 20.0,
            p_min: -10e6,
            p_max: 10e6,
            ramp_limit: 10e6,
            soc_min: 0.7,
            soc_max: 0.8,
            soc_init: 0.75,
            droop_conductance: 5.0,
        }
    }
}

impl PcmParams {
    /// Capacity in ampere-seconds.
    pub fn capacity_as(&self) -> f64 {
        3600.0 * self.capacity_ahr
    }
}

/// Power load module: a current sink regulated through a controllable
/// voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlmParams {
    pub inductance: f64,
    pub resistance: f64,
    /// V/A
    pub kp: f64,
    /// V/(A s)
    pub ki: f64,
}

impl Default for PlmParams {
    fn default() -> Self {
        Self {
            inductance: 1e-3,
            resistance: 0.05,
            kp: 0.4,
            ki: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub v_nominal: f64,
    pub pgm: PgmParams,
    pub pcm: PcmParams,
    pub plm: PlmParams,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            v_nominal: V_NOMINAL,
            pgm: PgmParams::default(),
            pcm: PcmParams::default(),
            plm: PlmParams::default(),
        }
    }
}

fn check(cond: bool, field: &str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

fn finite(values: &[(&str, f64)], prefix: &str) -> Result<()> {
    for (name, v) in values {
        check(v.is_finite(), &format!("{prefix}.{name}"), "must be finite")?;
    }
    Ok(())
}

impl SystemParams {
    /// Checks every invariant, reporting the first violation by its path
    /// under `prefix` (e.g. `system.pcm.soc_min`).
    pub fn validate(&self, prefix: &str) -> Result<()> {
        check(
            self.v_nominal.is_finite() && self.v_nominal > 0.0,
            &format!("{prefix}.v_nominal"),
            "must be > 0",
        )?;

        let g = &self.pgm;
        let p = format!("{prefix}.pgm");
        finite(
            &[
                ("inductance", g.inductance),
                ("resistance", g.resistance),
                ("capacitance", g.capacitance),
                ("p_min", g.p_min),
                ("p_max", g.p_max),
                ("ramp_limit", g.ramp_limit),
                ("kp", g.kp),
                ("ki", g.ki),
            ],
            &p,
        )?;
        check(
            g.inductance > 0.0,
            &format!("{p}.inductance"),
            "must be > 0",
        )?;
        check(
            g.capacitance > 0.0,
            &format!("{p}.capacitance"),
            "must be > 0",
        )?;
        check(
            g.resistance >= 0.0,
            &format!("{p}.resistance"),
            "must be >= 0",
        )?;
        check(g.p_min < g.p_max, &format!("{p}.p_min"), "must be < p_max")?;
        check(
            g.ramp_limit > 0.0,
            &format!("{p}.ramp_limit"),
            "must be > 0",
        )?;

        let b = &self.pcm;
        let p = format!("{prefix}.pcm");
        finite(
            &[
                ("capacity_ahr", b.capacity_ahr),
                ("p_min", b.p_min),
                ("p_max", b.p_max),
                ("ramp_limit", b.ramp_limit),
                ("soc_min", b.soc_min),
                ("soc_max", b.soc_max),
                ("soc_init", b.soc_init),
                ("droop_conductance", b.droop_conductance),
            ],
            &p,
        )?;
        check(
            b.capacity_ahr > 0.0,
            &format!("{p}.capacity_ahr"),
            "must be > 0",
        )?;
        check(
            b.p_min < 0.0,
            &format!("{p}.p_min"),
            "must be < 0 (charging limit)",
        )?;
        check(b.p_max > 0.0, &format!("{p}.p_max"), "must be > 0")?;
        check(
            b.ramp_limit > 0.0,
            &format!("{p}.ramp_limit"),
            "must be > 0",
        )?;
        check(b.soc_min >= 0.0, &format!("{p}.soc_min"), "must be >= 0")?;
        check(b.soc_max <= 1.0, &format!("{p}.soc_max"), "must be <= 1")?;
        check(
            b.soc_min < b.soc_max,
            &format!("{p}.soc_min"),
            "must be < soc_max",
        )?;
        check(
            (b.soc_min..=b.soc_max).contains(&b.soc_init),
            &format!("{p}.soc_init"),
            "must lie in [soc_min, soc_max]",
        )?;
        check(
            b.droop_conductance > 0.0,
            &format!("{p}.droop_conductance"),
            "must be > 0",
        )?;

        let l = &self.plm;
        let p = format!("{prefix}.plm");
        finite(
            &[
                ("inductance", l.inductance),
                ("resistance", l.resistance),
                ("kp", l.kp),
                ("ki", l.ki),
            ],
            &p,
        )?;
        check(
            l.inductance > 0.0,
            &format!("{p}.inductance"),
            "must be > 0",
        )?;
        check(
            l.resistance >= 0.0,
            &format!("{p}.resistance"),
            "must be >= 0",
        )?;
        Ok(())
    }
}
