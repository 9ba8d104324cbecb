//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --release -p nowcast-amp --test acceptance`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nowcast_amp::amp::{LossScaler, PrecisionMode, PrecisionPolicy};
use nowcast_amp::data::{synth_dataset, window_all, window_default, EventSequence};
use nowcast_amp::metrics::{accumulate_thresholds, ContingencyTable, ThresholdSet, VIP_THRESHOLDS};
use nowcast_amp::model::{build, count_params, estimate_memory, fits, instantiated_param_count, UNetConfig};
use nowcast_amp::nn::conv::{Conv2d, ConvTranspose2d};
use nowcast_amp::nn::norm::BatchNorm;
use nowcast_amp::nn::{grad_check, Adam, AdamConfig, GradCheckOptions, Graph, Layer, Mode, Source};
use nowcast_amp::numerics::{cast_down, cast_up, Tensor, F16};
use nowcast_amp::telemetry::{
    integrate_energy, percent_reduction, read_records, reference, relative_increase_pct, render_report,
    speedup_ratio_pct, write_records, PowerSample,
};
use nowcast_amp::train::{evaluate_persistence, init_params, train_step, StepContext, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name} = {got:.4}, expected {want} ± {tol}"))
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn report_math() -> Check {
    let mut csv = Vec::new();
    write_records(&mut csv, &reference::reference_records()).map_err(e)?;
    let records = read_records(&csv[..], Path::new("reference.csv")).map_err(e)?;
    ensure(records == reference::reference_records(), || "CSV round trip changed records".into())?;
    let report = render_report(&records, "U4-32", &reference::reference_param_counts()).map_err(e)?;

    within("percent_reduction(179.093, 140.338)", percent_reduction(179.093, 140.338).map_err(e)?, 21.64, 0.02)?;
    within("speedup_ratio_pct(173.485, 137.725)", speedup_ratio_pct(173.485, 137.725).map_err(e)?, 25.96, 0.01)?;
    let pair = |m: &str| report.pairs.iter().find(|p| p.model == m).ok_or(format!("no {m} pair"));
    within("U3-32 reduction", pair("U3-32")?.percent_reduction().ok_or("undefined")?, 21.64, 0.02)?;
    within("U4-32 speedup", pair("U4-32")?.speedup_ratio_pct().ok_or("undefined")?, 25.96, 0.01)?;

    let rel = report.relative.iter().find(|r| r.model == "U4-256").ok_or("no U4-256 relative row")?;
    let params = rel.params_pct.ok_or("params undefined")?;
    let time = rel.epoch_time_pct.ok_or("time undefined")?;
    let energy = rel.energy_pct.ok_or("energy undefined")?;
    within("U4-256 params increase", params, 1549.71, 0.01)?;
    within("U4-256 epoch time increase", time, 714.2, 0.1)?;
    within("U4-256 energy increase", energy, 63.22, 0.01)?;
    let direct = relative_increase_pct(273_127_436.0, 16_556_044.0).map_err(e)?;
    within("direct params increase", direct, 1549.71, 0.01)?;

    let (lo, hi) = report.energy_reduction_range().ok_or("no energy pairs")?;
    within("min energy reduction", lo, 4.78, 0.05)?;
    within("max energy reduction", hi, 27.31, 0.05)?;
    Ok(format!(
        "params {params:.2}%, time {time:.2}%, energy {energy:.2}%, energy reduction {lo:.2}..{hi:.2}% ({} AMP relative rows)",
        report.relative.len()
    ))
}

fn brute_force(pred: &[f32], truth: &[f32], t: f32) -> ContingencyTable {
    let mut c = ContingencyTable::default();
    for (&p, &q) in pred.iter().zip(truth) {
        match (p >= t, q >= t) {
            (true, true) => c.hits += 1,
            (false, true) => c.misses += 1,
            (true, false) => c.false_alarms += 1,
            (false, false) => c.correct_rejections += 1,
        }
    }
    c
}

fn pixel(rng: &mut ChaCha8Rng) -> f32 {
    match rng.gen_range(0..4) {
        0 => VIP_THRESHOLDS[rng.gen_range(0..6)],
        1 => rng.gen_range(0..=255) as f32,
        _ => rng.gen_range(0.0..=255.0),
    }
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0C0FFEE);
    let th = ThresholdSet::default();
    for pair in 0..1000 {
        let pred: Vec<f32> = (0..32 * 32).map(|_| pixel(&mut rng)).collect();
        let truth: Vec<f32> = (0..32 * 32).map(|_| pixel(&mut rng)).collect();
        let fast = accumulate_thresholds(&pred, &truth, &th).map_err(e)?;
        for (j, &t) in VIP_THRESHOLDS.iter().enumerate() {
            let slow = brute_force(&pred, &truth, t);
            ensure(fast[j] == slow, || format!("pair {pair}, threshold {t}: {:?} vs {slow:?}", fast[j]))?;
        }
    }
    Ok("1000 pairs × 6 thresholds identical".into())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut worst_bias, mut worst_csi) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let scale = 10u64.pow(rng.gen_range(1..=6));
        let c = ContingencyTable::new(
            rng.gen_range(1..=scale),
            rng.gen_range(0..=scale),
            rng.gen_range(0..=scale),
            rng.gen_range(0..=scale),
        );
        let s = c.scores();
        let (pod, sucr, csi, bias) = (s.pod.unwrap(), s.sucr.unwrap(), s.csi.unwrap(), s.bias.unwrap());
        ensure(close(bias, pod / sucr), || format!("{c:?}: BIAS {bias} vs POD/SUCR {}", pod / sucr))?;
        let rhs = 1.0 / pod + 1.0 / sucr - 1.0;
        ensure(close(1.0 / csi, rhs), || format!("{c:?}: 1/CSI {} vs {rhs}", 1.0 / csi))?;
        worst_bias = worst_bias.max((bias - pod / sucr).abs() / bias.max(1.0));
        worst_csi = worst_csi.max((1.0 / csi - rhs).abs() / rhs.max(1.0));
    }
    Ok(format!("10000 tables; worst scaled error BIAS {worst_bias:.1e}, 1/CSI {worst_csi:.1e}"))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn check_graph(name: &str, mut g: Graph<f64>, in_shape: &[usize], mode: Mode, randomize: bool) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    if randomize {
        for (_, p) in g.parameters_mut() {
            for v in p.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    let x = random_tensor(in_shape, &mut rng, -1.0, 1.0);
    let out = g.shapes(in_shape).map_err(e)?.pop().unwrap();
    let t = random_tensor(&out, &mut rng, -1.0, 1.0);
    let opts = GradCheckOptions {
        mode,
        ..GradCheckOptions::default()
    };
    let r = grad_check(&g, &x, &t, &opts).map_err(e)?;
    ensure(r.passed && r.max_rel_error <= 1e-6, || {
        format!("{name}: max rel error {:.2e} at {}", r.max_rel_error, r.worst)
    })?;
    Ok(format!("{name} {:.1e}", r.max_rel_error))
}

fn single(layer: Layer<f64>) -> Graph<f64> {
    let mut g = Graph::new();
    g.push("layer", layer, &[Source::Input]).unwrap();
    g
}

fn gradient_checks() -> Check {
    let mut parts = Vec::new();
    parts.push(check_graph("conv3", single(Layer::Conv2d(Conv2d::new(3, 3, 4).unwrap())), &[2, 3, 6, 6], Mode::Train, true)?);
    parts.push(check_graph(
        "convT",
        single(Layer::ConvTranspose2d(ConvTranspose2d::new(3, 2).unwrap())),
        &[2, 3, 4, 4],
        Mode::Train,
        true,
    )?);
    parts.push(check_graph("bn-train", single(Layer::BatchNorm(BatchNorm::new(3).unwrap())), &[2, 3, 5, 5], Mode::Train, true)?);
    parts.push(check_graph("bn-eval", single(Layer::BatchNorm(BatchNorm::new(3).unwrap())), &[2, 3, 5, 5], Mode::Eval, true)?);
    parts.push(check_graph("relu", single(Layer::Relu), &[2, 3, 5, 5], Mode::Train, false)?);
    parts.push(check_graph("maxpool", single(Layer::MaxPool2), &[2, 3, 6, 6], Mode::Train, false)?);
    let mut cat = Graph::new();
    let c = cat.push("c", Layer::Conv2d(Conv2d::new(3, 2, 3).unwrap()), &[Source::Input]).unwrap();
    cat.push("cat", Layer::Concat, &[Source::Input, Source::Node(c)]).unwrap();
    parts.push(check_graph("concat", cat, &[2, 2, 5, 5], Mode::Train, true)?);
    parts.push(check_graph("final1x1", single(Layer::final_conv(4, 2).unwrap()), &[2, 4, 5, 5], Mode::Train, true)?);

    let mut u = build::<f64>(&UNetConfig::new(2, 4).with_input(16, 16)).map_err(e)?;
    init_params(&mut u, 5);
    parts.push(check_graph("U2-4", u, &[2, 13, 16, 16], Mode::Train, false)?);
    Ok(parts.join(", "))
}

fn param_oracle() -> Check {
    println!("    model    counted      printed   printed/counted");
    for (name, printed) in reference::PARAM_COUNTS {
        let cfg: UNetConfig = name.parse().map_err(e)?;
        ensure(cfg.kernel == 3, || format!("{name}: default kernel {}", cfg.kernel))?;
        let analytic = count_params(&cfg);
        let built = instantiated_param_count(&cfg).map_err(e)?;
        ensure(analytic == built, || format!("{name}: analytic {analytic:?} vs instantiated {built:?}"))?;
        println!(
            "    {name:<7} {:>12} {printed:>12}   {:>6.2}",
            analytic.total(),
            printed as f64 / analytic.total() as f64
        );
    }
    Ok("analytic == instantiated for all 14 at k=3; printed counts differ as tabulated".into())
}

fn desk_windows() -> Result<(Vec<nowcast_amp::data::SampleWindow>, Vec<nowcast_amp::data::SampleWindow>), String> {
    let train = window_all(&synth_dataset(64, 32, 0).map_err(e)?).map_err(e)?;
    let test = window_all(&synth_dataset(16, 32, 1000).map_err(e)?).map_err(e)?;
    Ok((train, test))
}

struct DeskRun {
    final_loss: f64,
    first_loss: f64,
    skipped: usize,
    scale: f32,
    test_mse: f64,
}

fn desk_run(precision: PrecisionMode, train: &[nowcast_amp::data::SampleWindow], test: &[nowcast_amp::data::SampleWindow]) -> Result<DeskRun, String> {
    let config = TrainConfig {
        precision,
        ..TrainConfig::desk_default()
    };
    let mut t = Trainer::new(config, 32, 32).map_err(e)?;
    let h = t.fit(train).map_err(e)?;
    let losses = h.losses();
    let test_mse = t
        .evaluate(test, &ThresholdSet::default())
        .map_err(e)?
        .overall_mse
        .ok_or("empty test set")?;
    Ok(DeskRun {
        final_loss: *losses.last().ok_or("no epochs")?,
        first_loss: losses[0],
        skipped: h.total_skipped(),
        scale: t.scaler.scale(),
        test_mse,
    })
}

fn amp_parity(fp32: &DeskRun, amp: &DeskRun) -> Check {
    let gap = (amp.final_loss - fp32.final_loss).abs() / fp32.final_loss;
    ensure(fp32.final_loss < fp32.first_loss && amp.final_loss < amp.first_loss, || {
        "loss did not decrease over 5 epochs".into()
    })?;
    ensure(gap <= 0.05, || format!("relative gap {:.2}% > 5%", 100.0 * gap))?;
    Ok(format!(
        "final loss FP32 {:.6}, AMP {:.6}, gap {:.2}%; AMP skipped steps {}, final scale {}",
        fp32.final_loss,
        amp.final_loss,
        100.0 * gap,
        amp.skipped,
        amp.scale
    ))
}

fn persistence_superiority(fp32: &DeskRun, amp: &DeskRun, test: &[nowcast_amp::data::SampleWindow]) -> Check {
    let base = evaluate_persistence(test, &ThresholdSet::default())
        .map_err(e)?
        .overall_mse
        .ok_or("empty test set")?;
    ensure(fp32.test_mse < base, || format!("model MSE {:.1} >= persistence {base:.1}", fp32.test_mse))?;
    Ok(format!(
        "pooled test MSE over {} windows: FP32 model {:.1}, AMP model {:.1}, persistence {base:.1}",
        test.len(),
        fp32.test_mse,
        amp.test_mse
    ))
}

fn one_step(k: usize) -> Result<Graph<f64>, String> {
    let mut g = build::<f64>(&UNetConfig::new(2, 4).with_input(8, 8)).map_err(e)?;
    init_params(&mut g, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_tensor(&[8, 13, 8, 8], &mut rng, 0.0, 1.0);
    let t = random_tensor(&[8, 12, 8, 8], &mut rng, 0.0, 1.0);
    let policy = PrecisionPolicy::fp32();
    let mut scaler = LossScaler::identity();
    let mut adam = Adam::new(AdamConfig::default());
    let mut ctx = StepContext {
        policy: &policy,
        scaler: &mut scaler,
        adam: &mut adam,
        mode: Mode::Eval,
    };
    let out = train_step(&mut g, &x, &t, k, &mut ctx).map_err(e)?;
    ensure(!out.skipped && out.workers == k, || format!("K={k}: step skipped or resharded"))?;
    Ok(g)
}

fn distributed_equivalence() -> Check {
    let full = one_step(1)?;
    let before = {
        let mut g = build::<f64>(&UNetConfig::new(2, 4).with_input(8, 8)).map_err(e)?;
        init_params(&mut g, 9);
        g
    };
    ensure(full.parameters() != before.parameters(), || "step did not move parameters".into())?;
    let mut parts = Vec::new();
    for k in [2, 4] {
        let g = one_step(k)?;
        let mut worst = 0.0f64;
        for ((name, a), (_, b)) in full.parameters().iter().zip(g.parameters()) {
            for (&p, &q) in a.data().iter().zip(b.data()) {
                let d = (p - q).abs() / p.abs().max(q.abs()).max(1e-300);
                ensure(d <= 1e-10, || format!("K={k} {name}: relative difference {d:.2e}"))?;
                worst = worst.max(d);
            }
        }
        parts.push(format!("K={k} max rel diff {worst:.1e}"));
    }
    Ok(format!("{} (U2-4, binary64, BatchNorm frozen)", parts.join(", ")))
}

fn event(frames: usize) -> EventSequence {
    EventSequence::new(Tensor::zeros(&[frames, 4, 4]).unwrap()).unwrap()
}

fn windowing() -> Check {
    let starts: Vec<usize> = window_default(&event(49)).map_err(e)?.iter().map(|w| w.start).collect();
    ensure(starts == [0, 12, 24], || format!("49 frames gave starts {starts:?}"))?;
    let w = window_default(&event(49)).map_err(e)?;
    ensure(w.iter().all(|w| w.input.shape() == [13, 4, 4] && w.target.shape() == [12, 4, 4]), || {
        "window shapes".into()
    })?;
    ensure(window_default(&event(25)).map_err(e)?.len() == 1, || "25 frames must give 1 window".into())?;
    ensure(window_default(&event(24)).is_err(), || "24 frames must be rejected".into())?;
    Ok("49 → starts {0,12,24}; 25 → 1 window; 24 → error".into())
}

fn samples(points: &[(f64, f64)]) -> Vec<PowerSample> {
    points
        .iter()
        .map(|&(t, p)| PowerSample {
            timestamp_ms: t,
            power_w: p,
            sm_util: 0.0,
            mem_util: 0.0,
        })
        .collect()
}

fn energy_integration() -> Check {
    let constant: Vec<(f64, f64)> = (0..=10).map(|i| (1000.0 * i as f64, 100.0)).collect();
    let ramp: Vec<(f64, f64)> = (0..=10).map(|i| (1000.0 * i as f64, 20.0 * i as f64)).collect();
    let c = integrate_energy(&samples(&constant));
    let r = integrate_energy(&samples(&ramp));
    let two = integrate_energy(&samples(&[(0.0, 0.0), (10_000.0, 200.0)]));
    let one = integrate_energy(&samples(&[(5.0, 300.0)]));
    ensure(c == 1000.0 && r == 1000.0 && two == 1000.0 && one == 0.0, || {
        format!("constant {c}, ramp {r}, two-point ramp {two}, single {one}")
    })?;
    Ok("constant 1000 J, ramp 1000 J, single sample 0 J (exact)".into())
}

fn memory_model() -> Check {
    let cfg: UNetConfig = "U3-32".parse().map_err(e)?;
    let fp32 = estimate_memory(&cfg, 4, PrecisionMode::Fp32).map_err(e)?.total_bytes();
    let amp = estimate_memory(&cfg, 4, PrecisionMode::Amp).map_err(e)?.total_bytes();
    let saving = 1.0 - amp as f64 / fp32 as f64;
    ensure(saving >= 0.25, || format!("AMP saves only {:.1}%", 100.0 * saving))?;
    for model in ["U2-8", "U3-32", "U4-64", "U5-256"] {
        let cfg: UNetConfig = model.parse().map_err(e)?;
        for p in [PrecisionMode::Fp32, PrecisionMode::Amp] {
            let totals: Vec<u64> = (1..=64)
                .map(|b| estimate_memory(&cfg, b, p).map(|r| r.total_bytes()))
                .collect::<Result<_, _>>()
                .map_err(e)?;
            for budget in [1u64 << 26, 1 << 30, 1 << 33, 1 << 36] {
                let feasible: Vec<bool> = (1..=64)
                    .map(|b| estimate_memory(&cfg, b, p).map(|r| fits(&r, budget)))
                    .collect::<Result<_, _>>()
                    .map_err(e)?;
                ensure(feasible.windows(2).all(|w| w[0] || !w[1]), || {
                    format!("{model} {p}: fits not monotone at budget {budget}")
                })?;
            }
            ensure(totals.windows(2).all(|w| w[0] < w[1]), || format!("{model} {p}: footprint not increasing"))?;
        }
    }
    Ok(format!("U3-32 batch 4: FP32 {fp32} B, AMP {amp} B, saving {:.1}%; fits monotone", 100.0 * saving))
}

/// Value of a non-negative finite binary16 pattern, from the format definition.
fn half_value(bits: u16) -> f64 {
    let e = (bits >> 10) as i32;
    let m = (bits & 0x3ff) as f64;
    if e == 0 {
        m * 2f64.powi(-24)
    } else {
        (1024.0 + m) * 2f64.powi(e - 25)
    }
}

/// Round-to-nearest-even by binary search over every non-negative finite
/// binary16 value; 65536 stands in for infinity with an even significand.
struct HalfOracle {
    values: Vec<f64>,
}

impl HalfOracle {
    fn new() -> Self {
        let mut values: Vec<f64> = (0..0x7c00u16).map(half_value).collect();
        values.push(65536.0);
        HalfOracle { values }
    }

    fn convert(&self, x: f32) -> Option<u16> {
        if x.is_nan() {
            return None;
        }
        let sign = if x.is_sign_negative() { 0x8000 } else { 0 };
        let a = (x as f64).abs();
        let i = self.values.partition_point(|&v| v <= a);
        let bits = if i == self.values.len() {
            0x7c00
        } else {
            let (lo, hi) = (i - 1, i);
            let mid = (self.values[lo] + self.values[hi]) / 2.0;
            if a < mid || (a == mid && lo % 2 == 0) {
                lo as u16
            } else {
                hi as u16
            }
        };
        Some(sign | bits)
    }
}

fn binary16_conformance() -> Check {
    let mut nan_patterns = 0;
    for bits in 0..=u16::MAX {
        let h = F16::from_bits(bits);
        let back = cast_down(cast_up(h));
        if h.is_nan() {
            nan_patterns += 1;
            ensure(back.is_nan(), || format!("NaN pattern {bits:#06x} lost its class"))?;
        } else {
            ensure(back.to_bits() == bits, || format!("{bits:#06x} round-tripped to {:#06x}", back.to_bits()))?;
        }
    }
    let oracle = HalfOracle::new();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut nans = 0;
    for i in 0..1_000_000u32 {
        let x = match i % 4 {
            0 => f32::from_bits(rng.gen()),
            1 => rng.gen_range(-65600.0f32..65600.0),
            2 => rng.gen_range(-1e-4f32..1e-4),
            // Exact midpoints between neighbouring binary16 values.
            _ => {
                let b: u16 = rng.gen_range(0..0x7bff);
                let m = ((half_value(b) + half_value(b + 1)) / 2.0) as f32;
                if rng.gen() {
                    -m
                } else {
                    m
                }
            }
        };
        let got = cast_down(x);
        match oracle.convert(x) {
            None => {
                nans += 1;
                ensure(got.is_nan(), || format!("NaN {:#010x} converted to {:#06x}", x.to_bits(), got.to_bits()))?
            }
            Some(want) => ensure(got.to_bits() == want, || {
                format!("{x:e} ({:#010x}): got {:#06x}, oracle {want:#06x}", x.to_bits(), got.to_bits())
            })?,
        }
    }
    Ok(format!("65536 patterns ({nan_patterns} NaN) round-trip; 10^6 values match oracle ({nans} NaN)"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut line = |c: Criterion, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let mut result = f();
        let took = start.elapsed();
        if let (Ok(_), Some(b)) = (&result, c.budget) {
            if took > b {
                result = Err(format!("took {:.1} s, budget {:.0} s", took.as_secs_f64(), b.as_secs_f64()));
            }
        }
        match result {
            Ok(detail) => println!("PASS [{:>2}] {}: {detail} ({:.2} s)", c.id, c.name, took.as_secs_f64()),
            Err(why) => {
                failures += 1;
                println!("FAIL [{:>2}] {}: {why} ({:.2} s)", c.id, c.name, took.as_secs_f64())
            }
        }
    };
    let secs = |s: u64| Some(Duration::from_secs(s));

    line(Criterion { id: 1, name: "report-math fixture", budget: secs(1) }, &mut report_math);
    line(Criterion { id: 2, name: "metric oracle", budget: secs(30) }, &mut metric_oracle);
    line(Criterion { id: 3, name: "metric identities", budget: None }, &mut metric_identities);
    line(Criterion { id: 4, name: "gradient checks", budget: secs(120) }, &mut gradient_checks);
    line(Criterion { id: 5, name: "parameter-count oracle", budget: None }, &mut param_oracle);

    let start = Instant::now();
    let desk = desk_windows().and_then(|(train, test)| {
        let fp32 = desk_run(PrecisionMode::Fp32, &train, &test)?;
        let amp = desk_run(PrecisionMode::Amp, &train, &test)?;
        Ok((fp32, amp, test))
    });
    let desk_s = start.elapsed().as_secs_f64();
    line(Criterion { id: 6, name: "AMP parity", budget: None }, &mut || {
        let (fp32, amp, _) = desk.as_ref().map_err(Clone::clone)?;
        ensure(desk_s <= 600.0, || format!("desk runs took {desk_s:.1} s, budget 600 s"))?;
        amp_parity(fp32, amp).map(|d| format!("{d}; both runs {desk_s:.1} s"))
    });
    line(Criterion { id: 7, name: "distributed equivalence", budget: None }, &mut distributed_equivalence);
    line(Criterion { id: 8, name: "windowing", budget: None }, &mut windowing);
    line(Criterion { id: 9, name: "energy integration", budget: None }, &mut energy_integration);
    line(Criterion { id: 10, name: "persistence superiority", budget: None }, &mut || {
        let (fp32, amp, test) = desk.as_ref().map_err(Clone::clone)?;
        persistence_superiority(fp32, amp, test)
    });
    line(Criterion { id: 11, name: "memory model", budget: None }, &mut memory_model);
    line(Criterion { id: 12, name: "binary16 conformance", budget: None }, &mut binary16_conformance);

    if failures == 0 {
        println!("acceptance: all 12 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 12 criteria failed");
        ExitCode::FAILURE
    }
}
