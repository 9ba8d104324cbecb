//! Analytical parameter, FLOP and memory model. Nothing here allocates a
//! graph, so billion-parameter configurations are cheap to cost.

use crate::amp::PrecisionMode;
use crate::error::Result;

use super::UNetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub trainable: u64,
    /// BatchNorm running mean and variance.
    pub non_trainable: u64,
}

impl ParamCount {
    pub fn total(&self) -> u64 {
        self.trainable + self.non_trainable
    }
}

/// Closed-form parameter count of the built graph.
///
/// Conv k×k: `k²·c_in·c_out + c_out`; transposed 2×2: `4·c_in·c_out + c_out`;
/// BatchNorm: `2·c` trainable and `2·c` running statistics; final 1×1:
/// `c_in·c_out + c_out`.
pub fn count_params(config: &UNetConfig) -> ParamCount {
    let k2 = (config.kernel * config.kernel) as u64;
    let conv = |ci: u64, co: u64| k2 * ci * co + co;
    let mut trainable = 0u64;
    let mut bn = 0u64;
    let mut c = config.in_channels as u64;
    for i in 1..=config.depth {
        let f = config.filters(i) as u64;
        trainable += conv(c, f) + conv(f, f);
        bn += 2 * f;
        c = f;
    }
    for i in (1..=config.depth).rev() {
        let f = config.filters(i) as u64;
        trainable += 4 * c * f + f;
        trainable += conv(2 * f, f) + conv(f, f);
        bn += 2 * f;
        c = f;
    }
    let out = config.out_channels as u64;
    trainable += c * out + out;
    ParamCount {
        trainable: trainable + 2 * bn,
        non_trainable: 2 * bn,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlanKind {
    Conv { k: u64, c_in: u64 },
    ConvTranspose { c_in: u64 },
    Elementwise,
    Concat,
}

/// One layer output as the cost model sees it.
#[derive(Debug, Clone, Copy)]
struct PlannedLayer {
    kind: PlanKind,
    channels: u64,
    h: u64,
    w: u64,
}

impl PlannedLayer {
    fn elements(&self) -> u64 {
        self.channels * self.h * self.w
    }

    fn flops(&self) -> u64 {
        match self.kind {
            PlanKind::Conv { k, c_in } => conv_flops(k, c_in, self.channels, self.h, self.w),
            // k² taps per input pixel: 2·4·c_in·c_out·(H/2)·(W/2).
            PlanKind::ConvTranspose { c_in } => {
                conv_flops(2, c_in, self.channels, self.h / 2, self.w / 2)
            }
            PlanKind::Elementwise => self.elements(),
            PlanKind::Concat => 0,
        }
    }
}

/// `2·k²·c_in·c_out·H·W` multiply-adds of a convolution, bias excluded.
pub fn conv_flops(k: u64, c_in: u64, c_out: u64, h: u64, w: u64) -> u64 {
    2 * k * k * c_in * c_out * h * w
}

fn plan(config: &UNetConfig) -> Vec<PlannedLayer> {
    let k = config.kernel as u64;
    let (mut h, mut w) = (config.height as u64, config.width as u64);
    let mut c = config.in_channels as u64;
    let mut out = Vec::new();
    let push_double = |out: &mut Vec<PlannedLayer>, c_in: u64, f: u64, h: u64, w: u64| {
        let mut ci = c_in;
        for _ in 0..2 {
            out.push(PlannedLayer { kind: PlanKind::Conv { k, c_in: ci }, channels: f, h, w });
            out.push(PlannedLayer { kind: PlanKind::Elementwise, channels: f, h, w });
            out.push(PlannedLayer { kind: PlanKind::Elementwise, channels: f, h, w });
            ci = f;
        }
    };
    for i in 1..=config.depth {
        let f = config.filters(i) as u64;
        push_double(&mut out, c, f, h, w);
        h /= 2;
        w /= 2;
        out.push(PlannedLayer { kind: PlanKind::Elementwise, channels: f, h, w });
        c = f;
    }
    for i in (1..=config.depth).rev() {
        let f = config.filters(i) as u64;
        h *= 2;
        w *= 2;
        out.push(PlannedLayer { kind: PlanKind::ConvTranspose { c_in: c }, channels: f, h, w });
        out.push(PlannedLayer { kind: PlanKind::Concat, channels: 2 * f, h, w });
        push_double(&mut out, 2 * f, f, h, w);
        c = f;
    }
    out.push(PlannedLayer {
        kind: PlanKind::Conv { k: 1, c_in: c },
        channels: config.out_channels as u64,
        h,
        w,
    });
    out
}

/// Forward FLOPs per sample: convolution multiply-adds plus one op per output
/// element of BatchNorm, ReLU and pooling. Concatenation is free.
pub fn count_flops(config: &UNetConfig) -> u64 {
    plan(config).iter().map(PlannedLayer::flops).sum()
}

/// Activation elements per sample (sum over all layer outputs).
pub fn activation_elements(config: &UNetConfig) -> u64 {
    plan(config).iter().map(PlannedLayer::elements).sum()
}

/// Stored activations are counted twice to cover the buffers backward keeps.
pub const BACKWARD_BUFFER_FACTOR: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostReport {
    pub model: UNetConfig,
    pub precision: PrecisionMode,
    pub batch: u64,
    pub trainable_param_count: u64,
    pub total_param_count: u64,
    pub forward_flops_per_sample: u64,
    /// binary32 master weights and running statistics, plus the binary16
    /// shadow under AMP.
    pub weight_bytes: u64,
    pub gradient_bytes: u64,
    pub activation_bytes: u64,
    /// Adam first and second moments in binary32.
    pub optimizer_state_bytes: u64,
}

impl CostReport {
    pub fn total_bytes(&self) -> u64 {
        self.weight_bytes + self.activation_bytes + self.gradient_bytes + self.optimizer_state_bytes
    }
}

pub fn estimate_memory(config: &UNetConfig, batch: u64, precision: PrecisionMode) -> Result<CostReport> {
    config.validate()?;
    if batch == 0 {
        return Err(crate::Error::contract("memory estimate needs batch >= 1"));
    }
    let params = count_params(config);
    let act_size = match precision {
        PrecisionMode::Fp32 => 4,
        PrecisionMode::Amp => 2,
    };
    let shadow = match precision {
        PrecisionMode::Fp32 => 0,
        PrecisionMode::Amp => 2 * params.trainable,
    };
    Ok(CostReport {
        model: *config,
        precision,
        batch,
        trainable_param_count: params.trainable,
        total_param_count: params.total(),
        forward_flops_per_sample: count_flops(config),
        weight_bytes: 4 * params.total() + shadow,
        gradient_bytes: 4 * params.trainable,
        activation_bytes: activation_elements(config) * act_size * batch * BACKWARD_BUFFER_FACTOR,
        optimizer_state_bytes: 2 * 4 * params.trainable,
    })
}

pub fn fits(report: &CostReport, budget_bytes: u64) -> bool {
    report.total_bytes() <= budget_bytes
}
