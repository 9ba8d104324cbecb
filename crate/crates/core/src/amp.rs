//! Automatic mixed precision: op classification, binary32 master weights and
//! dynamic loss scaling.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Gradients;
use crate::numerics::{Dtype, Real};

/// Operation classes the precision policy can route to binary16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Conv2d,
    ConvTranspose2d,
    FinalConv,
    BatchNorm,
    MaxPool2,
    Relu,
    Concat,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrecisionMode {
    Fp32,
    Amp,
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecisionMode::Fp32 => "fp32",
            PrecisionMode::Amp => "amp",
        })
    }
}

impl PrecisionMode {
    /// Upper-case label used in run records and reports.
    pub fn label(self) -> &'static str {
        match self {
            PrecisionMode::Fp32 => "FP32",
            PrecisionMode::Amp => "AMP",
        }
    }
}

impl FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" => Ok(PrecisionMode::Fp32),
            "amp" | "fp16" => Ok(PrecisionMode::Amp),
            other => Err(Error::Parse(format!(
                "unknown precision {other:?} (expected fp32 or amp)"
            ))),
        }
    }
}

/// Which operations compute in binary16. Master weights, gradients and the
/// optimizer always stay in binary32.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecisionPolicy {
    mode: PrecisionMode,
    f16_ops: BTreeSet<OpKind>,
}

impl PrecisionPolicy {
    pub fn fp32() -> Self {
        PrecisionPolicy {
            mode: PrecisionMode::Fp32,
            f16_ops: BTreeSet::new(),
        }
    }

    /// Convolution-type layers in binary16; BatchNorm, pooling, ReLU, concat
    /// and the loss in binary32.
    pub fn amp() -> Self {
        PrecisionPolicy {
            mode: PrecisionMode::Amp,
            f16_ops: [OpKind::Conv2d, OpKind::ConvTranspose2d, OpKind::FinalConv]
                .into_iter()
                .collect(),
        }
    }

    pub fn for_mode(mode: PrecisionMode) -> Self {
        match mode {
            PrecisionMode::Fp32 => Self::fp32(),
            PrecisionMode::Amp => Self::amp(),
        }
    }

    /// AMP bookkeeping with a custom binary16 op set (possibly empty).
    pub fn amp_with_ops(ops: impl IntoIterator<Item = OpKind>) -> Self {
        PrecisionPolicy {
            mode: PrecisionMode::Amp,
            f16_ops: ops.into_iter().collect(),
        }
    }

    pub fn mode(&self) -> PrecisionMode {
        self.mode
    }

    pub fn master_dtype(&self) -> Dtype {
        Dtype::F32
    }

    pub fn compute_dtype(&self) -> Dtype {
        match self.mode {
            PrecisionMode::Fp32 => Dtype::F32,
            PrecisionMode::Amp => Dtype::F16,
        }
    }

    pub fn runs_in_f16(&self, op: OpKind) -> bool {
        self.f16_ops.contains(&op)
    }

    pub fn f16_ops(&self) -> impl Iterator<Item = OpKind> + '_ {
        self.f16_ops.iter().copied()
    }

    /// True when a binary16 weight shadow exists next to the master copy.
    pub fn has_f16_shadow(&self) -> bool {
        self.mode == PrecisionMode::Amp
    }
}

pub const DEFAULT_INIT_SCALE: f32 = 32768.0;
pub const DEFAULT_GROWTH_INTERVAL: u32 = 2000;
const MIN_SCALE: f32 = 1.0 / 1_048_576.0;

/// Dynamic loss scaler: halves on overflow, doubles after `growth_interval`
/// consecutive finite steps. The scale is always an exact power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct LossScaler {
    scale: f32,
    growth_factor: f32,
    backoff_factor: f32,
    growth_interval: u32,
    good_steps: u32,
}

impl Default for LossScaler {
    fn default() -> Self {
        Self::new(DEFAULT_INIT_SCALE)
    }
}

impl LossScaler {
    pub fn new(init_scale: f32) -> Self {
        Self::with_interval(init_scale, DEFAULT_GROWTH_INTERVAL)
    }

    /// Panics unless `init_scale` is a positive power of two and the interval is non-zero.
    pub fn with_interval(init_scale: f32, growth_interval: u32) -> Self {
        assert!(is_power_of_two(init_scale), "loss scale must be a power of two");
        assert!(growth_interval > 0);
        LossScaler {
            scale: init_scale,
            growth_factor: 2.0,
            backoff_factor: 0.5,
            growth_interval,
            good_steps: 0,
        }
    }

    /// A scaler fixed at 1 that never grows within any practical run.
    pub fn identity() -> Self {
        Self::with_interval(1.0, u32::MAX)
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn good_steps(&self) -> u32 {
        self.good_steps
    }

    pub fn growth_interval(&self) -> u32 {
        self.growth_interval
    }

    pub fn scale_loss<T: Real>(&self, loss: T) -> T {
        loss * T::from_f64(self.scale as f64)
    }

    /// Divides every gradient by the scale and reports whether all entries are finite.
    pub fn unscale_and_check<T: Real>(&self, grads: &mut Gradients<T>) -> bool {
        let inv = T::from_f64(1.0 / self.scale as f64);
        let mut finite = true;
        for (_, g) in grads.iter_mut() {
            for x in g.data_mut() {
                if !x.is_finite() {
                    finite = false;
                }
                *x *= inv;
            }
        }
        finite
    }

    /// Returns `true` when the optimizer step must be skipped.
    pub fn update(&mut self, finite: bool) -> Result<bool> {
        if !finite {
            self.scale *= self.backoff_factor;
            self.good_steps = 0;
            if self.scale < MIN_SCALE {
                return Err(Error::Diverged(format!(
                    "loss scale fell to {} (below 2^-20)",
                    self.scale
                )));
            }
            return Ok(true);
        }
        self.good_steps += 1;
        if self.good_steps >= self.growth_interval {
            self.scale *= self.growth_factor;
            self.good_steps = 0;
        }
        Ok(false)
    }
}

fn is_power_of_two(x: f32) -> bool {
    x > 0.0 && x.is_finite() && x.to_bits() & 0x007f_ffff == 0 && x.to_bits() >> 23 != 0
}
