use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use nowcast_amp::amp::PrecisionMode;
use nowcast_amp::data::{
    list_seqz, read_events, read_seqz, stack, synth_dataset, window_all, window_default, write_events,
    write_seqz, EventSequence, SampleWindow, OUTPUT_FRAMES, WINDOW_FRAMES,
};
use nowcast_amp::metrics::{persistence, MetricAccumulator, MetricReport, ThresholdSet};
use nowcast_amp::model::{count_params, estimate_memory, fits, CostReport, UNetConfig};
use nowcast_amp::numerics::Tensor;
use nowcast_amp::telemetry::{
    combine_logs, parse_power_log, read_records_file, reference, render_report, write_records,
    write_records_file, RunRecord,
};
use nowcast_amp::train::{
    evaluate_persistence, run_sweep, save_weights, write_sweep_status, CellStatus, SweepSpec,
    TrainConfig, Trainer,
};
use nowcast_amp::{Error, Result};

use crate::table::Table;
use crate::{CostArgs, EvalArgs, Format, GenDataArgs, IngestArgs, ParamSource, ReportArgs, SweepArgs, TrainArgs};

fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

/// Prefixes I/O failures with the offending path.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// `(file name, event)` for every SEQZ file in `dir`.
fn read_named_events(dir: &Path) -> Result<Vec<(String, EventSequence)>> {
    at(dir, list_seqz(dir))?
        .iter()
        .map(|p| Ok((file_name(p), EventSequence::new(at(p, read_seqz(p))?)?)))
        .collect()
}

fn frame_size(windows: &[SampleWindow], what: &str) -> Result<(usize, usize)> {
    let first = windows
        .first()
        .ok_or_else(|| contract(format!("{what} holds no events of at least {WINDOW_FRAMES} frames")))?;
    let hw = (first.input.shape()[1], first.input.shape()[2]);
    if windows.iter().any(|w| (w.input.shape()[1], w.input.shape()[2]) != hw) {
        return Err(contract(format!("{what}: events differ in frame size")));
    }
    Ok(hw)
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    if a.events == 0 || a.hw == 0 {
        return Err(contract("gen-data needs --events >= 1 and --hw >= 1"));
    }
    let events = synth_dataset(a.events, a.hw, a.seed)?;
    let paths = write_events(&a.out, &events)?;
    println!(
        "wrote {} events of {}x{}x{} to {}",
        paths.len(),
        events[0].len(),
        a.hw,
        a.hw,
        a.out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let thresholds: ThresholdSet = a.thresholds.parse()?;
    let windows = window_all(&at(&a.data, read_events(&a.data))?)?;
    let (h, w) = frame_size(&windows, &a.data.display().to_string())?;
    let precision: PrecisionMode = a.precision.into();
    let model = a.model.with_input(h, w);
    model.validate()?;
    if let Some(budget) = a.budget_bytes {
        let cost = estimate_memory(&model, a.batch as u64, precision)?;
        if !fits(&cost, budget) {
            return Err(contract(format!(
                "{model} {} batch {} needs {} bytes, budget is {budget}",
                precision.label(),
                a.batch,
                cost.total_bytes()
            )));
        }
    }
    let config = TrainConfig {
        model,
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        precision,
        workers: a.workers,
        seed: a.seed,
        train_data: Some(a.data.clone()),
        test_data: a.test.clone(),
        out_dir: a.out.clone(),
    };
    let mut trainer = Trainer::new(config, h, w)?;
    println!(
        "training {model} ({}) on {} windows of {h}x{w}, batch {}, {} worker(s)",
        precision.label(),
        windows.len(),
        a.batch,
        a.workers
    );
    let mut history = String::from("epoch,mean_loss,wall_s,steps,skipped,loss_scale\n");
    let mut wall = Vec::new();
    for e in 1..=a.epochs {
        let s = trainer.train_epoch(&windows, e)?;
        println!(
            "epoch {e}: loss {:.6}  {:.2} s  {} steps  {} skipped  scale {}",
            s.mean_loss, s.wall_s, s.steps, s.skipped, s.loss_scale
        );
        writeln!(
            history,
            "{},{},{},{},{},{}",
            s.epoch, s.mean_loss, s.wall_s, s.steps, s.skipped, s.loss_scale
        )
        .expect("writing to a String");
        wall.push(s.wall_s);
    }
    let mut record = RunRecord::new(model.name(), precision, a.batch as u64);
    record.mean_epoch_s = (!wall.is_empty()).then(|| wall.iter().sum::<f64>() / wall.len() as f64);

    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        write_records_file(out.join("run_record.csv"), &[record])?;
        fs::write(out.join("history.csv"), history)?;
        let n = save_weights(&trainer.graph, out.join("weights"))?.len();
        println!("wrote run_record.csv, history.csv and {n} weight tensors to {}", out.display());
    }

    if let Some(test_dir) = &a.test {
        let named = read_named_events(test_dir)?;
        if let Some(out) = &a.out {
            fs::create_dir_all(out.join("forecast"))?;
        }
        let mut test_windows = Vec::new();
        for (name, event) in &named {
            let ws = window_default(event)?;
            if let Some(out) = &a.out {
                let idx: Vec<usize> = (0..ws.len()).collect();
                let forecast = trainer.predict(&stack(&ws, &idx)?.input)?;
                write_seqz(out.join("forecast").join(name), &forecast)?;
            }
            test_windows.extend(ws);
        }
        frame_size(&test_windows, &test_dir.display().to_string())?;
        let model_report = trainer.evaluate(&test_windows, &thresholds)?;
        let base = evaluate_persistence(&test_windows, &thresholds)?;
        println!(
            "test MSE over {} windows: model {}  persistence {}",
            test_windows.len(),
            opt(model_report.overall_mse),
            opt(base.overall_mse)
        );
        if let Some(out) = &a.out {
            model_report.write_csv(fs::File::create(out.join("metrics.csv"))?)?;
            base.write_csv(fs::File::create(out.join("persistence.csv"))?)?;
        }
    }
    Ok(())
}

/// Truth targets `[N, L, H, W]` plus the windows they came from when the file
/// holds a whole event.
fn load_truth(path: &Path) -> Result<(Tensor<f32>, Option<Vec<SampleWindow>>)> {
    let t = at(path, read_seqz(path))?;
    let shape = t.shape().to_vec();
    match shape.len() {
        3 if shape[0] >= WINDOW_FRAMES => {
            let ws = window_default(&EventSequence::new(t)?)?;
            let idx: Vec<usize> = (0..ws.len()).collect();
            Ok((stack(&ws, &idx)?.target, Some(ws)))
        }
        3 => Ok((t.reshape(&[1, shape[0], shape[1], shape[2]])?, None)),
        4 => Ok((t, None)),
        r => Err(contract(format!("{}: rank-{r} tensor is neither an event nor targets", path.display()))),
    }
}

fn score_files(a: &EvalArgs) -> Result<MetricReport> {
    let thresholds: ThresholdSet = a.thresholds.parse()?;
    let truth_files = at(&a.truth, list_seqz(&a.truth))?;
    if truth_files.is_empty() {
        return Err(contract(format!("{} holds no .seqz files", a.truth.display())));
    }
    if let Some(pred) = &a.pred {
        let truth_names: BTreeSet<String> = truth_files.iter().map(|p| file_name(p)).collect();
        for p in at(pred, list_seqz(pred))? {
            if !truth_names.contains(&file_name(&p)) {
                return Err(contract(format!("{} has no truth counterpart", p.display())));
            }
        }
    }
    let mut acc: Option<MetricAccumulator> = None;
    for path in &truth_files {
        let (target, windows) = load_truth(path)?;
        let acc = acc.get_or_insert_with(|| MetricAccumulator::new(thresholds.clone(), target.shape()[1]));
        if a.persistence {
            let ws = windows
                .ok_or_else(|| contract(format!("{}: persistence needs whole events", path.display())))?;
            for w in &ws {
                acc.add(&persistence(&w.input, OUTPUT_FRAMES)?, &w.target)?;
            }
            continue;
        }
        let pred_path = a.pred.as_ref().expect("clap requires --pred").join(file_name(path));
        let mut pred = at(&pred_path, read_seqz(&pred_path))?;
        if pred.rank() == 3 {
            let s = pred.shape().to_vec();
            pred = pred.reshape(&[1, s[0], s[1], s[2]])?;
        }
        if pred.shape() != target.shape() {
            return Err(contract(format!(
                "{}: forecast shape {:?} does not match truth {:?}",
                pred_path.display(),
                pred.shape(),
                target.shape()
            )));
        }
        acc.add(&pred, &target)?;
    }
    Ok(acc.expect("at least one truth file").report())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let report = score_files(&a)?;
    match &a.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            report.write_csv(fs::File::create(path)?)?;
            let mut t = Table::new(["threshold", "H", "M", "FA", "POD", "SUCR", "CSI", "BIAS"]);
            for (j, th) in report.thresholds.iter().enumerate() {
                let c = report.pooled(j);
                let s = c.scores();
                t.row(vec![
                    th.to_string(),
                    c.hits.to_string(),
                    c.misses.to_string(),
                    c.false_alarms.to_string(),
                    opt(s.pod),
                    opt(s.sucr),
                    opt(s.csi),
                    opt(s.bias),
                ]);
            }
            print!("{}", t.render());
            println!("overall MSE {}  (report: {})", opt(report.overall_mse), path.display());
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

/// Largest batch that fits `budget`, or 0 when even batch 1 does not.
fn max_batch(model: &UNetConfig, precision: PrecisionMode, budget: u64) -> Result<u64> {
    let ok = |b: u64| -> Result<bool> { Ok(fits(&estimate_memory(model, b, precision)?, budget)) };
    if !ok(1)? {
        return Ok(0);
    }
    const CAP: u64 = 1 << 24;
    let mut hi = 2;
    while hi < CAP && ok(hi)? {
        hi *= 2;
    }
    if hi >= CAP && ok(CAP)? {
        return Ok(CAP);
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn cost(a: CostArgs) -> Result<()> {
    let models: Vec<UNetConfig> = if a.model.is_empty() {
        reference::PARAM_COUNTS
            .iter()
            .map(|(name, _)| name.parse())
            .collect::<Result<_>>()?
    } else {
        a.model.clone()
    };
    let printed: BTreeMap<&str, u64> = reference::PARAM_COUNTS.iter().copied().collect();
    let mut header = vec![
        "model", "precision", "batch", "trainable", "total_params", "printed_params", "fwd_flops",
        "weight_bytes", "grad_bytes", "act_bytes", "opt_bytes", "total_bytes",
    ];
    if a.budget_bytes.is_some() {
        header.extend(["fits", "max_batch"]);
    }
    let mut table = Table::new(header.iter().copied());
    let mut csv = header.join(",") + "\n";
    for m in &models {
        let cfg = m.with_input(a.hw, a.hw).with_kernel(a.kernel);
        for &p in &a.precision {
            let precision: PrecisionMode = p.into();
            for &b in &a.batch {
                let r: CostReport = estimate_memory(&cfg, b, precision)?;
                let mut row = vec![
                    cfg.name(),
                    precision.label().to_string(),
                    b.to_string(),
                    r.trainable_param_count.to_string(),
                    r.total_param_count.to_string(),
                    printed.get(cfg.name().as_str()).map(|c| c.to_string()).unwrap_or_default(),
                    r.forward_flops_per_sample.to_string(),
                    r.weight_bytes.to_string(),
                    r.gradient_bytes.to_string(),
                    r.activation_bytes.to_string(),
                    r.optimizer_state_bytes.to_string(),
                    r.total_bytes().to_string(),
                ];
                if let Some(budget) = a.budget_bytes {
                    row.push(fits(&r, budget).to_string());
                    row.push(max_batch(&cfg, precision, budget)?.to_string());
                }
                csv.push_str(&row.join(","));
                csv.push('\n');
                table.row(row);
            }
        }
    }
    let text = table.render();
    match a.format {
        Format::Text => print!("{text}"),
        Format::Csv => print!("{csv}"),
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("cost.csv"), &csv)?;
        fs::write(out.join("cost.txt"), &text)?;
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let windows = window_all(&at(&a.data, read_events(&a.data))?)?;
    frame_size(&windows, &a.data.display().to_string())?;
    let precisions: Vec<PrecisionMode> = a.precision.iter().map(|&p| p.into()).collect();
    let spec = SweepSpec {
        cells: SweepSpec::grid(&a.model, &precisions, &a.batch),
        epochs: a.epochs,
        seed: a.seed,
        lr: a.lr,
        workers: a.workers,
        skip_infeasible: a.budget_bytes.is_some(),
        budget_bytes: a.budget_bytes,
    };
    let outcomes = run_sweep(&spec, &windows)?;
    let mut t = Table::new(["model", "precision", "batch", "status", "final_loss", "mean_epoch_s", "skipped"]);
    for o in &outcomes {
        t.row(vec![
            o.cell.model.clone(),
            o.cell.precision.label().to_string(),
            o.cell.batch.to_string(),
            o.status.label().to_string(),
            o.losses.last().map(|l| format!("{l:.6}")).unwrap_or_default(),
            opt(o.record.mean_epoch_s),
            o.skipped_steps.to_string(),
        ]);
    }
    print!("{}", t.render());
    for o in &outcomes {
        if let CellStatus::Failed(msg) = &o.status {
            eprintln!("{} {} batch {}: {msg}", o.cell.model, o.cell.precision.label(), o.cell.batch);
        }
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        let records: Vec<RunRecord> = outcomes
            .iter()
            .filter(|o| o.status == CellStatus::Completed)
            .map(|o| o.record.clone())
            .collect();
        write_records_file(out.join("run_records.csv"), &records)?;
        write_sweep_status(fs::File::create(out.join("sweep_status.csv"))?, &outcomes)?;
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    if a.reference {
        records.extend(reference::reference_records());
    }
    for path in &a.records {
        records.extend(at(path, read_records_file(path))?);
    }
    let printed = reference::reference_param_counts();
    let mut params = BTreeMap::new();
    for r in &records {
        if params.contains_key(&r.model) {
            continue;
        }
        let count = match (a.params, printed.get(&r.model)) {
            (ParamSource::Printed, Some(&c)) => c,
            _ => count_params(&r.model.parse::<UNetConfig>()?).total(),
        };
        params.insert(r.model.clone(), count);
    }
    let report = render_report(&records, &a.baseline, &params)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("usage.csv"), report.usage_csv())?;
        fs::write(out.join("speedup.csv"), report.speedup_csv())?;
        fs::write(out.join("relative.csv"), report.relative_csv())?;
        fs::write(out.join("report.txt"), &text)?;
    }
    Ok(())
}

pub fn ingest_telemetry(a: IngestArgs) -> Result<()> {
    let logs = a.log.iter().map(|p| at(p, parse_power_log(p))).collect::<Result<Vec<_>>>()?;
    let energy = combine_logs(&logs)?;
    println!(
        "{} log(s), {} samples over {:.3} s: {:.3} J, SM util avg {:.2} max {:.2}, mem util avg {:.2} max {:.2}",
        logs.len(),
        energy.sample_count,
        energy.duration_s,
        energy.energy_joules,
        energy.avg_sm_util,
        energy.max_sm_util,
        energy.avg_mem_util,
        energy.max_mem_util
    );
    let mut records = match &a.records {
        Some(p) => at(p, read_records_file(p))?,
        None => Vec::new(),
    };
    let idx = match &a.model {
        Some(model) => {
            let precision: PrecisionMode = a
                .precision
                .ok_or_else(|| contract("--model needs --precision"))?
                .into();
            let batch = a.batch.ok_or_else(|| contract("--model needs --batch"))?;
            match records.iter().position(|r| r.key() == (model.as_str(), precision, batch)) {
                Some(i) => i,
                None => {
                    records.push(RunRecord::new(model.clone(), precision, batch));
                    records.len() - 1
                }
            }
        }
        None if records.len() == 1 => 0,
        None => {
            return Err(contract(format!(
                "{} run records to choose from; pass --model, --precision and --batch",
                records.len()
            )))
        }
    };
    let r = &mut records[idx];
    r.energy_j = Some(energy.energy_joules);
    r.avg_sm = Some(energy.avg_sm_util);
    r.max_mem_util = Some(energy.max_mem_util);
    r.avg_mem = Some(energy.avg_mem_util);
    match a.out.as_ref().or(a.records.as_ref()) {
        Some(path) => write_out(path, &records),
        None => write_records(io::stdout().lock(), &records),
    }
}

fn write_out(path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_records_file(path, records)
}
