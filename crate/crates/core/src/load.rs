use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    /// Demanded load power (W).
    pub power: f64,
}

/// Piecewise-constant load demand covering `[0, t_final]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    pub segments: Vec<Segment>,
}

impl Default for LoadProfile {
    /// 15 MW base with a 27 MW pulse on [20, 70) s, 120 s long.
    fn default() -> Self {
        Self::pulse(15e6, 27e6, 20.0, 70.0, 120.0)
    }
}

impl LoadProfile {
    pub fn constant(power: f64, t_final: f64) -> Self {
        Self {
            segments: vec![Segment {
                t_start: 0.0,
                t_end: t_final,
                power,
            }],
        }
    }

    pub fn pulse(base: f64, peak: f64, on: f64, off: f64, t_final: f64) -> Self {
        Self {
            segments: vec![
                Segment {
                    t_start: 0.0,
                    t_end: on,
                    power: base,
                },
                Segment {
                    t_start: on,
                    t_end: off,
                    power: peak,
                },
                Segment {
                    t_start: off,
                    t_end: t_final,
                    power: base,
                },
            ],
        }
    }

    pub fn t_final(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::config(format!("{field}.segments"), "must not be empty"))?;
        if first.t_start != 0.0 {
            return Err(Error::config(
                format!("{field}.segments[0].t_start"),
                "profile must start at t = 0",
            ));
        }
        for (i, s) in self.segments.iter().enumerate() {
            let at = format!("{field}.segments[{i}]");
            if !(s.t_start.is_finite() && s.t_end.is_finite() && s.power.is_finite()) {
                return Err(Error::config(at, "values must be finite"));
            }
            if s.t_end <= s.t_start {
                return Err(Error::config(format!("{at}.t_end"), "must be > t_start"));
            }
            if s.power < 0.0 {
                return Err(Error::config(format!("{at}.power"), "must be >= 0"));
            }
            if i > 0 && s.t_start != self.segments[i - 1].t_end {
                return Err(Error::config(
                    format!("{at}.t_start"),
                    "segments must be contiguous (t_start equal to the previous t_end)",
                ));
            }
        }
        Ok(())
    }

    /// Demanded power at time `t`. A time on a segment boundary belongs
    /// to the later segment; `t_final` itself belongs to the last one.
    pub fn load_power(&self, t: f64) -> Result<f64> {
        let t_final = self.t_final();
        if !t.is_finite() || t < 0.0 || t > t_final || self.segments.is_empty() {
            return Err(Error::Domain(format!(
                "t = {t} s is outside the load profile [0, {t_final}]"
            )));
        }
        // segments are sorted; the last one whose start is <= t wins
        let idx = self.segments.partition_point(|s| s.t_start <= t);
        Ok(self.segments[idx.saturating_sub(1)].power)
    }
}
