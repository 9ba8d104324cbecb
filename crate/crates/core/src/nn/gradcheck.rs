//! Central finite-difference verification of analytic gradients in binary64.

use crate::amp::PrecisionPolicy;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::graph::{ActivationPattern, Graph};
use super::loss::mse_loss;
use super::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator. The effective floor is
    /// the larger of this and `roundoff_noise / tolerance`.
    pub floor: f64,
    pub mode: Mode,
    /// Check at most this many input elements (evenly strided); `None` checks all.
    pub max_input_probes: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-6,
            floor: 1e-12,
            mode: Mode::Train,
            max_input_probes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry (`input[i]` for the input tensor).
    pub worst: String,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub entries_checked: usize,
    /// Entries smaller than the effective floor, i.e. judged against the
    /// absolute roundoff bound rather than relatively.
    pub below_floor: usize,
    /// Effective relative-error denominator floor.
    pub floor: f64,
    /// Entries whose `±step` probes changed a ReLU sign or a max-pool
    /// selection. The difference quotient then straddles a kink and does not
    /// estimate the derivative, so these are counted but not scored.
    pub kink_skipped: usize,
    pub passed: bool,
}

/// Cancellation noise of a central difference: the loss is only known to a
/// few ulps of `|L|`, so the quotient carries about `c·ε·|L| / h` of error.
pub fn roundoff_noise(loss: f64, step: f64) -> f64 {
    const ULPS: f64 = 64.0;
    ULPS * f64::EPSILON * loss.abs() / step
}

impl GradCheckReport {
    fn new(floor: f64) -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            worst: String::new(),
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
            entries_checked: 0,
            below_floor: 0,
            floor,
            kink_skipped: 0,
            passed: false,
        }
    }

    fn record(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs());
        if scale < self.floor {
            self.below_floor += 1;
        }
        let err = (analytic - numeric).abs() / scale.max(self.floor);
        self.entries_checked += 1;
        if err > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = err;
            self.worst = format!("{name}[{idx}]");
            self.analytic_at_worst = analytic;
            self.numeric_at_worst = numeric;
        }
    }
}

fn loss_of(
    graph: &Graph<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    mode: Mode,
) -> Result<(f64, ActivationPattern)> {
    let (y, cache) = graph.forward(input, mode, &PrecisionPolicy::fp32())?;
    let (l, _) = mse_loss(&y, target, 1.0)?;
    if !l.is_finite() {
        return Err(Error::contract("gradient check: loss is not finite"));
    }
    Ok((l, cache.activation_pattern()))
}

/// Central difference, or `None` when either probe left the smooth region
/// around the base point.
fn central(
    h: f64,
    base: &ActivationPattern,
    mut loss_at: impl FnMut(f64) -> Result<(f64, ActivationPattern)>,
) -> Result<Option<f64>> {
    let (up, pu) = loss_at(h)?;
    let (down, pd) = loss_at(-h)?;
    if &pu != base || &pd != base {
        return Ok(None);
    }
    Ok(Some((up - down) / (2.0 * h)))
}

/// Compares analytic gradients of the MSE loss against central differences
/// for every trainable parameter and for the graph input, returning
/// `max |a - n| / max(|a|, |n|, floor)`.
///
/// Entries far below the loss scale (a conv bias feeding a training-mode
/// BatchNorm has an exactly zero gradient) are bounded absolutely by the
/// difference quotient's roundoff, see [`roundoff_noise`]. Probes that cross
/// a ReLU or max-pool kink are excluded and counted in `kink_skipped`.
pub fn grad_check(
    graph: &Graph<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let policy = PrecisionPolicy::fp32();
    let (y, cache) = graph.forward(input, opts.mode, &policy)?;
    let (loss, dy) = mse_loss(&y, target, 1.0)?;
    if !loss.is_finite() {
        return Err(Error::contract("gradient check: loss is not finite"));
    }
    let (dx, grads) = graph.backward(&cache, &dy, &policy)?;
    let base = cache.activation_pattern();

    let floor = opts.floor.max(roundoff_noise(loss, opts.step) / opts.tolerance);
    let mut report = GradCheckReport::new(floor);
    let h = opts.step;
    let mut probe = graph.clone();
    let names: Vec<String> = graph.parameters().into_iter().map(|(n, _)| n).collect();
    for name in &names {
        let analytic = grads
            .get(name)
            .ok_or_else(|| Error::contract(format!("missing analytic gradient for {name}")))?
            .clone();
        for i in 0..analytic.len() {
            let orig = probe.param_mut(name).expect("parameter exists").data()[i];
            let numeric = central(h, &base, |delta| {
                probe.param_mut(name).unwrap().data_mut()[i] = orig + delta;
                let l = loss_of(&probe, input, target, opts.mode);
                probe.param_mut(name).unwrap().data_mut()[i] = orig;
                l
            })?;
            match numeric {
                Some(n) => report.record(name, i, analytic.data()[i], n),
                None => report.kink_skipped += 1,
            }
        }
    }

    let stride = match opts.max_input_probes {
        Some(m) if m > 0 && m < input.len() => input.len().div_ceil(m),
        _ => 1,
    };
    let mut x = input.clone();
    for i in (0..input.len()).step_by(stride) {
        let orig = x.data()[i];
        let numeric = central(h, &base, |delta| {
            x.data_mut()[i] = orig + delta;
            let l = loss_of(graph, &x, target, opts.mode);
            x.data_mut()[i] = orig;
            l
        })?;
        match numeric {
            Some(n) => report.record("input", i, dx.data()[i], n),
            None => report.kink_skipped += 1,
        }
    }

    report.passed = report.max_rel_error <= opts.tolerance;
    Ok(report)
}
