use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::amp::{LossScaler, PrecisionMode, PrecisionPolicy};
use crate::data::seqz::{read_seqz, write_seqz};
use crate::data::{batch_iter, Batch, SampleWindow, INPUT_FRAMES, OUTPUT_FRAMES};
use crate::error::{Error, Result};
use crate::metrics::{persistence, MetricAccumulator, MetricReport, ThresholdSet};
use crate::model::{build, UNetConfig};
use crate::nn::{Adam, AdamConfig, Graph, Mode};
use crate::numerics::Tensor;

use super::init::init_params;
use super::step::{effective_workers, train_step, StepContext};

/// Network inputs and targets are pixels divided by this.
pub const PIXEL_SCALE: f32 = 255.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: UNetConfig,
    pub epochs: usize,
    /// Global batch, split evenly over `workers`.
    pub batch: usize,
    pub lr: f64,
    pub precision: PrecisionMode,
    pub workers: usize,
    pub seed: u64,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl TrainConfig {
    /// U2-8, batch 8, 5 epochs, one worker, FP32, lr 1e-3.
    pub fn desk_default() -> Self {
        TrainConfig {
            model: UNetConfig::new(2, 8),
            epochs: 5,
            batch: 8,
            lr: AdamConfig::default().lr,
            precision: PrecisionMode::Fp32,
            workers: 1,
            seed: 0,
            train_data: None,
            test_data: None,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 || self.workers == 0 {
            return Err(Error::contract("batch, epochs and workers must be at least 1"));
        }
        if !self.batch.is_multiple_of(self.workers) {
            return Err(Error::contract(format!(
                "batch {} is not divisible by {} workers",
                self.batch, self.workers
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!("learning rate {} is not a finite non-negative number", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sample-weighted mean of unscaled batch losses.
    pub mean_loss: f64,
    pub wall_s: f64,
    pub steps: usize,
    pub skipped: usize,
    /// Loss scale after the epoch.
    pub loss_scale: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    pub fn total_skipped(&self) -> usize {
        self.epochs.iter().map(|e| e.skipped).sum()
    }

    pub fn mean_epoch_s(&self) -> Option<f64> {
        (!self.epochs.is_empty())
            .then(|| self.epochs.iter().map(|e| e.wall_s).sum::<f64>() / self.epochs.len() as f64)
    }
}

pub fn normalize(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| v / PIXEL_SCALE)
}

pub fn to_pixels(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| (v * PIXEL_SCALE).clamp(0.0, PIXEL_SCALE))
}

/// Binary32 master weights, Adam state and loss scaler for one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub graph: Graph<f32>,
    pub adam: Adam<f32>,
    pub scaler: LossScaler,
    pub policy: PrecisionPolicy,
}

impl Trainer {
    /// Builds the model for `height×width` frames and initializes it from the seed.
    pub fn new(config: TrainConfig, height: usize, width: usize) -> Result<Self> {
        config.validate()?;
        let model = config.model.with_input(height, width);
        let mut graph = build::<f32>(&model)?;
        init_params(&mut graph, config.seed);
        let policy = PrecisionPolicy::for_mode(config.precision);
        let scaler = match config.precision {
            PrecisionMode::Fp32 => LossScaler::identity(),
            PrecisionMode::Amp => LossScaler::default(),
        };
        let adam = Adam::new(AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        });
        Ok(Trainer {
            config: TrainConfig { model, ..config },
            graph,
            adam,
            scaler,
            policy,
        })
    }

    /// One pass over `windows` in the run's fixed shuffled order. Timing
    /// covers batching, forward, backward and the update.
    pub fn train_epoch(&mut self, windows: &[SampleWindow], epoch: usize) -> Result<EpochStats> {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        let (mut steps, mut skipped) = (0, 0);
        for batch in batch_iter(windows, self.config.batch, self.config.seed)? {
            let n = batch.len();
            let k = effective_workers(n, self.config.workers);
            let mut ctx = StepContext {
                policy: &self.policy,
                scaler: &mut self.scaler,
                adam: &mut self.adam,
                mode: Mode::Train,
            };
            let out = train_step(
                &mut self.graph,
                &normalize(&batch.input),
                &normalize(&batch.target),
                k,
                &mut ctx,
            )?;
            steps += 1;
            if out.skipped {
                skipped += 1;
            }
            if out.loss.is_finite() {
                loss_sum += out.loss * n as f64;
                samples += n;
            }
        }
        Ok(EpochStats {
            epoch,
            mean_loss: if samples > 0 { loss_sum / samples as f64 } else { f64::NAN },
            wall_s: start.elapsed().as_secs_f64(),
            steps,
            skipped,
            loss_scale: self.scaler.scale(),
        })
    }

    pub fn fit(&mut self, windows: &[SampleWindow]) -> Result<TrainHistory> {
        let mut h = TrainHistory::default();
        for e in 1..=self.config.epochs {
            h.epochs.push(self.train_epoch(windows, e)?);
        }
        Ok(h)
    }

    /// Eval-mode forecast in pixel units, clipped to `[0, 255]`.
    pub fn predict(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(to_pixels(&self.graph.predict(&normalize(input), &self.policy)?))
    }

    pub fn evaluate(&self, windows: &[SampleWindow], thresholds: &ThresholdSet) -> Result<MetricReport> {
        let mut acc = MetricAccumulator::new(thresholds.clone(), OUTPUT_FRAMES);
        for batch in eval_batches(windows, self.config.batch)? {
            acc.add(&self.predict(&batch.input)?, &batch.target)?;
        }
        Ok(acc.report())
    }
}

/// Writes every parameter and running statistic as `<node>.<slot>.seqz`
/// under `dir`, returning the paths in graph order.
pub fn save_weights(graph: &Graph<f32>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (name, t) in graph.parameters().into_iter().chain(graph.buffers()) {
        let path = dir.join(format!("{name}.seqz"));
        write_seqz(&path, t)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Inverse of [`save_weights`]; every tensor must be present with its exact shape.
pub fn load_weights(graph: &mut Graph<f32>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for params in [true, false] {
        let targets = if params { graph.parameters_mut() } else { graph.buffers_mut() };
        for (name, t) in targets {
            let loaded = read_seqz(dir.join(format!("{name}.seqz")))?;
            if loaded.shape() != t.shape() {
                return Err(Error::contract(format!(
                    "{name}: stored shape {:?} does not match model shape {:?}",
                    loaded.shape(),
                    t.shape()
                )));
            }
            *t = loaded;
        }
    }
    Ok(())
}

fn eval_batches(windows: &[SampleWindow], batch: usize) -> Result<Vec<Batch>> {
    let idx: Vec<usize> = (0..windows.len()).collect();
    idx.chunks(batch.max(1))
        .map(|c| crate::data::stack(windows, c))
        .collect()
}

/// Verification of the repeat-last-frame forecast.
pub fn evaluate_persistence(windows: &[SampleWindow], thresholds: &ThresholdSet) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(thresholds.clone(), OUTPUT_FRAMES);
    for w in windows {
        if w.input.shape()[0] != INPUT_FRAMES {
            return Err(Error::contract("persistence expects 13-frame inputs"));
        }
        acc.add(&persistence(&w.input, OUTPUT_FRAMES)?, &w.target)?;
    }
    Ok(acc.report())
}
