//! Arrhenius-weighted Ah-throughput capacity loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314;

/// C-rate above which a run is flagged as operating the battery far
/// outside its characteristic rate.
pub const HIGH_C_RATE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CRateMode {
    /// A single characteristic C-rate in the prefactor.
    #[default]
    Fixed,
    /// The instantaneous C-rate, so the prefactor moves inside the
    /// throughput integral.
    FromCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationParams {
    /// Activation-energy-like coefficient, J/mol.
    pub zeta1: f64,
    /// Battery temperature, K.
    pub temp_b: f64,
    pub c_rate_mode: CRateMode,
    /// Characteristic C-rate (1/h) used in fixed mode.
    pub c_rate_fixed: f64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            zeta1: 31_700.0,
            temp_b: 298.15,
            c_rate_mode: CRateMode::Fixed,
            c_rate_fixed: 0.5,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.zeta1.is_finite() && self.zeta1 > 0.0) {
            return Err(Error::config(format!("{prefix}.zeta1"), "must be > 0"));
        }
        if !(self.temp_b.is_finite() && self.temp_b > 0.0) {
            return Err(Error::config(format!("{prefix}.temp_b"), "must be > 0"));
        }
        if !(self.c_rate_fixed.is_finite() && self.c_rate_fixed >= 0.0) {
            return Err(Error::config(
                format!("{prefix}.c_rate_fixed"),
                "must be >= 0",
            ));
        }
        Ok(())
    }

    /// `exp((-zeta1 + T_b C_r) / (R T_b))`, taken literally.
    pub fn prefactor(&self, c_rate: f64) -> f64 {
        ((-self.zeta1 + self.temp_b * c_rate) / (GAS_CONSTANT * self.temp_b)).exp()
    }
}

/// Capacity loss in ampere-hours for a throughput given in ampere-seconds.
pub fn capacity_loss(params: &DegradationParams, ah_throughput: f64, c_rate: f64) -> f64 {
    params.prefactor(c_rate) * (ah_throughput / 3600.0)
}

/// |i_b| normalized by capacity, per hour.
pub fn c_rate(i_b: f64, capacity_ahr: f64) -> f64 {
    i_b.abs() / capacity_ahr
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationState {
    /// Running ∫|i_b| dt, ampere-seconds.
    pub ah_throughput: f64,
    /// Capacity loss Q_L, ampere-hours.
    pub q_loss: f64,
    /// `(Q_b - Q_L) / Q_b * 100`.
    pub delta_q_pct: f64,
    /// `Q_L / Q_b * 100`.
    pub loss_pct: f64,
    pub max_c_rate: f64,
}

/// Accumulator for one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationTracker {
    params: DegradationParams,
    capacity_ahr: f64,
    state: DegradationState,
}

impl DegradationTracker {
    pub fn new(params: DegradationParams, capacity_ahr: f64) -> Self {
        Self {
            params,
            capacity_ahr,
            state: DegradationState {
                delta_q_pct: 100.0,
                ..Default::default()
            },
        }
    }

    pub fn state(&self) -> &DegradationState {
        &self.state
    }

    pub fn accumulate(&mut self, i_b: f64, dt: f64) -> Result<()> {
        self.state = accumulate(&self.params, self.capacity_ahr, &self.state, i_b, dt)?;
        Ok(())
    }
}

/// Adds `|i_b|·dt` of throughput and recomputes the loss figures.
pub fn accumulate(
    params: &DegradationParams,
    capacity_ahr: f64,
    state: &DegradationState,
    i_b: f64,
    dt: f64,
) -> Result<DegradationState> {
    if !i_b.is_finite() {
        return Err(Error::Domain(format!(
            "battery current is not finite: {i_b}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "accumulation step must be > 0, got {dt}"
        )));
    }
    if i_b == 0.0 {
        return Ok(*state);
    }
    let increment = i_b.abs() * dt;
    let ah_throughput = state.ah_throughput + increment;
    let rate = c_rate(i_b, capacity_ahr);
    let q_loss = match params.c_rate_mode {
        CRateMode::Fixed => capacity_loss(params, ah_throughput, params.c_rate_fixed),
        CRateMode::FromCurrent => state.q_loss + capacity_loss(params, increment, rate),
    };
    Ok(DegradationState {
        ah_throughput,
        q_loss,
        delta_q_pct: (capacity_ahr - q_loss) / capacity_ahr * 100.0,
        loss_pct: q_loss / capacity_ahr * 100.0,
        max_c_rate: state.max_c_rate.max(rate),
    })
}
