//! Uniform message quantizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantMode {
    /// Plain floating point, no saturation.
    Float,
    /// Grid `{-L, ..., -step, 0, step, ..., L}`.
    Uniform,
    /// Saturation at `±L` without rounding. This is the function the
    /// straight-through estimator differentiates, so gradient checks of
    /// quantized decoders run against it.
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub mode: QuantMode,
    #[serde(default)]
    pub step: f64,
    /// Infinite in float mode; omitted from serialized forms then.
    #[serde(default = "unbounded", skip_serializing_if = "is_unbounded")]
    pub max_magnitude: f64,
}

fn unbounded() -> f64 {
    f64::INFINITY
}

fn is_unbounded(x: &f64) -> bool {
    x.is_infinite()
}

impl Default for Quantizer {
    fn default() -> Self {
        Self::five_bit()
    }
}

impl Quantizer {
    pub fn float() -> Self {
        Self {
            mode: QuantMode::Float,
            step: 0.0,
            max_magnitude: f64::INFINITY,
        }
    }

    /// The 31-level 5-bit setting: step 0.5, saturation 7.5.
    pub fn five_bit() -> Self {
        Self {
            mode: QuantMode::Uniform,
            step: 0.5,
            max_magnitude: 7.5,
        }
    }

    pub fn uniform(step: f64, max_magnitude: f64) -> Result<Self> {
        let q = Self {
            mode: QuantMode::Uniform,
            step,
            max_magnitude,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn saturating(max_magnitude: f64) -> Self {
        Self {
            mode: QuantMode::Saturating,
            step: 0.0,
            max_magnitude,
        }
    }

    /// Rounding-free counterpart used to check straight-through gradients.
    pub fn smoothed(&self) -> Self {
        match self.mode {
            QuantMode::Uniform => Self::saturating(self.max_magnitude),
            _ => *self,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            QuantMode::Float => Ok(()),
            QuantMode::Saturating => {
                if self.max_magnitude > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config("saturation bound must be positive".into()))
                }
            }
            QuantMode::Uniform => {
                if !(self.step > 0.0 && self.max_magnitude > 0.0) {
                    return Err(Error::Config("quantizer step and range must be positive".into()));
                }
                let levels = self.max_magnitude / self.step;
                if (levels - levels.round()).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "max magnitude {} is not a multiple of step {}",
                        self.max_magnitude, self.step
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_float(&self) -> bool {
        self.mode == QuantMode::Float
    }

    /// `clamp(round(x / step) * step, -L, L)` in uniform mode.
    #[inline(always)]
    pub fn quantize(&self, x: f64) -> f64 {
        match self.mode {
            QuantMode::Float => x,
            QuantMode::Uniform => {
                let l = self.max_magnitude;
                let t = (x / self.step).clamp(-l / self.step - 1.0, l / self.step + 1.0);
                (round_half_away(t) * self.step).clamp(-l, l)
            }
            QuantMode::Saturating => x.clamp(-self.max_magnitude, self.max_magnitude),
        }
    }

    /// Straight-through mask: identity inside `[-L, L]`, zero outside.
    #[inline(always)]
    pub fn passes(&self, pre: f64) -> bool {
        match self.mode {
            QuantMode::Float => true,
            _ => pre.abs() <= self.max_magnitude,
        }
    }

    pub fn on_grid(&self, x: f64) -> bool {
        match self.mode {
            QuantMode::Float => x.is_finite(),
            QuantMode::Saturating => x.abs() <= self.max_magnitude,
            QuantMode::Uniform => {
                let k = x / self.step;
                x.abs() <= self.max_magnitude && (k - k.round()).abs() < 1e-9
            }
        }
    }

    /// Number of grid levels, `2 L / step + 1`, in uniform mode.
    pub fn levels(&self) -> Option<usize> {
        (self.mode == QuantMode::Uniform).then(|| (2.0 * self.max_magnitude / self.step).round() as usize + 1)
    }
}

/// `t.round()` for `|t| < 2^52`, without the libm call. `t - trunc(t)` is
/// exact, so the halfway comparison is too.
#[inline(always)]
pub(crate) fn round_half_away(t: f64) -> f64 {
    let i = t as i64 as f64;
    let f = t - i;
    i + f64::from(u8::from(f >= 0.5)) - f64::from(u8::from(f <= -0.5))
}
