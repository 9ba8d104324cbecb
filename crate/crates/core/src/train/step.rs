//! One synchronous data-parallel optimizer step.

use crate::amp::{LossScaler, PrecisionPolicy};
use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{mse_loss, Adam, BatchStats, Gradients, Graph, Mode};
use crate::numerics::{Real, Tensor};

/// Element-wise mean over workers, summed in worker-index order so the
/// result does not depend on thread scheduling.
pub fn allreduce_mean<T: Real>(per_worker: &[Gradients<T>]) -> Result<Gradients<T>> {
    let (first, rest) = per_worker
        .split_first()
        .ok_or_else(|| Error::contract("allreduce over zero workers"))?;
    let mut sum = first.clone();
    for (w, g) in rest.iter().enumerate() {
        if g.len() != sum.len() {
            return Err(Error::contract(format!(
                "worker {} sent {} gradients, worker 0 sent {}",
                w + 1,
                g.len(),
                sum.len()
            )));
        }
        for (name, acc) in sum.iter_mut() {
            let other = g.get(name).ok_or_else(|| {
                Error::contract(format!("worker {} has no gradient for {name}", w + 1))
            })?;
            if !other.same_shape(acc) {
                return Err(Error::contract(format!("gradient shape mismatch for {name}")));
            }
            for (a, &b) in acc.data_mut().iter_mut().zip(other.data()) {
                *a += b;
            }
        }
    }
    let k = T::from_f64(per_worker.len() as f64);
    for (_, g) in sum.iter_mut() {
        for v in g.data_mut() {
            *v = *v / k;
        }
    }
    Ok(sum)
}

/// Averages BatchNorm batch statistics across workers in worker order.
fn average_stats<T: Real>(per_worker: &[Vec<BatchStats<T>>]) -> Vec<BatchStats<T>> {
    let k = T::from_f64(per_worker.len() as f64);
    let mut out = per_worker[0].clone();
    for stats in &per_worker[1..] {
        for (acc, s) in out.iter_mut().zip(stats) {
            for (a, &b) in acc.mean.iter_mut().zip(&s.mean) {
                *a += b;
            }
            for (a, &b) in acc.var.iter_mut().zip(&s.var) {
                *a += b;
            }
        }
    }
    for s in &mut out {
        s.mean.iter_mut().chain(s.var.iter_mut()).for_each(|v| *v = *v / k);
    }
    out
}

/// Splits the leading axis into `k` equal contiguous shards.
pub fn shard<T: Real>(t: &Tensor<T>, k: usize) -> Result<Vec<Tensor<T>>> {
    let n = *t
        .shape()
        .first()
        .ok_or_else(|| Error::contract("cannot shard a scalar"))?;
    if k == 0 || n % k != 0 {
        return Err(Error::contract(format!(
            "batch of {n} does not split into {k} equal shards"
        )));
    }
    let per = n / k;
    let stride = t.len() / n;
    let mut shape = t.shape().to_vec();
    shape[0] = per;
    t.data()
        .chunks_exact(per * stride)
        .map(|c| Tensor::from_vec(&shape, c.to_vec()))
        .collect()
}

/// Largest worker count `≤ workers` dividing both; used for a short final batch.
pub fn effective_workers(n: usize, workers: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    gcd(n, workers.max(1)).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Mean unscaled loss over the batch.
    pub loss: f64,
    pub skipped: bool,
    pub workers: usize,
}

pub struct StepContext<'a, T> {
    pub policy: &'a PrecisionPolicy,
    pub scaler: &'a mut LossScaler,
    pub adam: &'a mut Adam<T>,
    /// `Train` uses per-worker batch statistics; `Eval` freezes BatchNorm.
    pub mode: Mode,
}

/// Each of `workers` replicas runs forward/backward on its own shard; the
/// gradients are averaged in worker order, unscaled and checked. A
/// non-finite step is skipped: weights, Adam state and BatchNorm statistics
/// stay untouched and the loss scale backs off.
///
/// All replicas hold identical weights, so workers share the graph read-only.
pub fn train_step<T: Real>(
    graph: &mut Graph<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    workers: usize,
    ctx: &mut StepContext<'_, T>,
) -> Result<StepOutcome> {
    let xs = shard(input, workers)?;
    let ts = shard(target, workers)?;
    let scale = T::from_f64(ctx.scaler.scale() as f64);
    let (mode, policy) = (ctx.mode, ctx.policy);
    let g: &Graph<T> = graph;
    let results = exec::map_indices(workers, |w| -> Result<_> {
        let (y, cache) = g.forward(&xs[w], mode, policy)?;
        let (loss, dy) = mse_loss(&y, &ts[w], scale)?;
        let (_, grads) = g.backward(&cache, &dy, policy)?;
        Ok((loss, grads, cache.batch_stats()))
    });
    let mut losses = Vec::with_capacity(workers);
    let mut grads = Vec::with_capacity(workers);
    let mut stats = Vec::with_capacity(workers);
    for r in results {
        let (l, g, s) = r?;
        losses.push(l.to_f64());
        grads.push(g);
        stats.push(s);
    }
    let loss = losses.iter().sum::<f64>() / workers as f64;
    let mut mean = allreduce_mean(&grads)?;
    let finite = ctx.scaler.unscale_and_check(&mut mean) && loss.is_finite();
    let skipped = ctx.scaler.update(finite)?;
    if !skipped {
        ctx.adam.step(graph, &mean)?;
        if mode == Mode::Train {
            graph.commit_batch_stats(&average_stats(&stats))?;
        }
    }
    Ok(StepOutcome {
        loss,
        skipped,
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, UNetConfig};
    use crate::nn::AdamConfig;
    use crate::train::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grads(v: f64) -> Gradients<f64> {
        let mut g = Gradients::new();
        g.insert("a", Tensor::from_vec(&[2], vec![v, -2.0 * v]).unwrap());
        g
    }

    #[test]
    fn allreduce_examples() {
        assert_eq!(allreduce_mean(&[grads(3.0)]).unwrap(), grads(3.0));
        let z = allreduce_mean(&[grads(1.5), grads(-1.5)]).unwrap();
        assert!(z.get("a").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(allreduce_mean::<f64>(&[]).is_err());
        let mut other = Gradients::new();
        other.insert("b", Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap());
        assert!(allreduce_mean(&[grads(1.0), other]).is_err());
    }

    #[test]
    fn shards_and_worker_counts() {
        let t = Tensor::from_vec(&[4, 2], (0..8).map(f64::from).collect()).unwrap();
        let s = shard(&t, 2).unwrap();
        assert_eq!(s[1].data(), &[4.0, 5.0, 6.0, 7.0]);
        assert!(shard(&t, 3).is_err());
        assert_eq!(effective_workers(8, 4), 4);
        assert_eq!(effective_workers(6, 4), 2);
        assert_eq!(effective_workers(5, 4), 1);
    }

    fn setup() -> (Graph<f64>, Tensor<f64>, Tensor<f64>) {
        let cfg = UNetConfig::new(1, 4).with_input(8, 8);
        let mut g = build::<f64>(&cfg).unwrap();
        init_params(&mut g, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::from_vec(&[4, 13, 8, 8], (0..4 * 13 * 64).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let t = Tensor::from_vec(&[4, 12, 8, 8], (0..4 * 12 * 64).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        (g, x, t)
    }

    fn one_step(k: usize, mode: Mode) -> Graph<f64> {
        let (mut g, x, t) = setup();
        let policy = PrecisionPolicy::fp32();
        let mut scaler = LossScaler::identity();
        let mut adam = Adam::new(AdamConfig::default());
        let mut ctx = StepContext {
            policy: &policy,
            scaler: &mut scaler,
            adam: &mut adam,
            mode,
        };
        train_step(&mut g, &x, &t, k, &mut ctx).unwrap();
        g
    }

    fn max_rel_diff(a: &Graph<f64>, b: &Graph<f64>) -> f64 {
        a.parameters()
            .iter()
            .zip(b.parameters())
            .flat_map(|((_, x), (_, y))| {
                x.data()
                    .iter()
                    .zip(y.data())
                    .map(|(&p, &q)| (p - q).abs() / p.abs().max(q.abs()).max(1e-300))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sharded_step_matches_full_batch_with_frozen_batchnorm() {
        let full = one_step(1, Mode::Eval);
        for k in [2, 4] {
            let d = max_rel_diff(&full, &one_step(k, Mode::Eval));
            assert!(d <= 1e-10, "K={k}: {d:e}");
        }
    }

    #[test]
    fn batch_statistics_couple_samples() {
        // With per-worker batch statistics the shards see different
        // normalizations, so the update is not the full-batch update.
        let d = max_rel_diff(&one_step(1, Mode::Train), &one_step(2, Mode::Train));
        assert!(d > 1e-6, "{d:e}");
    }

    #[test]
    fn skipped_step_changes_nothing() {
        let (mut g, mut x, t) = setup();
        x.data_mut()[0] = f64::INFINITY;
        let before = g.clone();
        let policy = PrecisionPolicy::fp32();
        let mut scaler = LossScaler::new(1024.0);
        let mut adam = Adam::new(AdamConfig::default());
        let mut ctx = StepContext {
            policy: &policy,
            scaler: &mut scaler,
            adam: &mut adam,
            mode: Mode::Train,
        };
        let out = train_step(&mut g, &x, &t, 2, &mut ctx).unwrap();
        assert!(out.skipped);
        assert_eq!(g, before);
        assert_eq!(adam.state.step, 0);
        assert_eq!(scaler.scale(), 512.0);
    }
}
