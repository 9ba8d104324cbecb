//! Sequence files, windowing, synthetic events and batching.

mod batch;
pub mod seqz;
mod synth;
mod window;

use std::path::{Path, PathBuf};

use crate::error::Result;

pub use batch::{batch_iter, stack, Batch, BatchIter};
pub use seqz::{read_seqz, write_seqz, SeqzError};
pub use synth::{random_spec, synth_advect, synth_dataset, synth_dataset_with, AdvectSpec, SynthRanges};
pub use window::{
    window_default, window_event, EventSequence, SampleWindow, DEFAULT_STRIDE, EVENT_FRAMES,
    INPUT_FRAMES, OUTPUT_FRAMES, WINDOW_FRAMES,
};

/// Windows every event in order; windows of one event stay contiguous.
pub fn window_all(events: &[EventSequence]) -> Result<Vec<SampleWindow>> {
    let mut out = Vec::new();
    for e in events {
        out.extend(window_default(e)?);
    }
    Ok(out)
}

/// Splits by whole events: the last `n_test` events form the test set.
pub fn split_events(mut events: Vec<EventSequence>, n_test: usize) -> Result<(Vec<EventSequence>, Vec<EventSequence>)> {
    if n_test >= events.len() {
        return Err(crate::Error::contract(format!(
            "cannot hold out {n_test} of {} events",
            events.len()
        )));
    }
    let test = events.split_off(events.len() - n_test);
    Ok((events, test))
}

pub fn event_file_name(index: usize) -> String {
    format!("event_{index:05}.seqz")
}

/// Writes `event_00000.seqz`, `event_00001.seqz`, … into `dir`.
pub fn write_events(dir: impl AsRef<Path>, events: &[EventSequence]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = dir.join(event_file_name(i));
            write_seqz(&p, e.frames())?;
            Ok(p)
        })
        .collect()
}

/// Every `*.seqz` file directly inside `dir`, sorted by name.
pub fn list_seqz(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "seqz"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads every `*.seqz` in `dir` in file-name order.
pub fn read_events(dir: impl AsRef<Path>) -> Result<Vec<EventSequence>> {
    list_seqz(dir)?
        .iter()
        .map(|p| EventSequence::new(read_seqz(p)?))
        .collect()
}
