use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const INPUT_FRAMES: usize = 13;
pub const OUTPUT_FRAMES: usize = 12;
pub const WINDOW_FRAMES: usize = INPUT_FRAMES + OUTPUT_FRAMES;
pub const DEFAULT_STRIDE: usize = 12;
/// 4 hours at 5-minute steps, inclusive of both ends.
pub const EVENT_FRAMES: usize = 49;

/// A `T×H×W` VIL-scaled frame sequence with pixels in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    frames: Tensor<f32>,
}

impl EventSequence {
    pub fn new(frames: Tensor<f32>) -> Result<Self> {
        if frames.rank() != 3 {
            return Err(Error::contract(format!(
                "event must be T×H×W, got shape {:?}",
                frames.shape()
            )));
        }
        if let Some(v) = frames
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0)
        {
            return Err(Error::contract(format!(
                "event pixel {v} outside [0, 255]"
            )));
        }
        Ok(EventSequence { frames })
    }

    pub fn frames(&self) -> &Tensor<f32> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[2]
    }

    fn frame_range(&self, start: usize, count: usize) -> Tensor<f32> {
        let plane = self.height() * self.width();
        let data = self.frames.data()[start * plane..(start + count) * plane].to_vec();
        Tensor::from_vec(&[count, self.height(), self.width()], data).expect("in range")
    }
}

/// One training sample: frames `[s, s+in)` as input, `[s+in, s+in+out)` as target.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub start: usize,
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
}

/// Windows start at `0, stride, 2·stride, …` while a full window fits.
pub fn window_event(
    event: &EventSequence,
    in_len: usize,
    out_len: usize,
    stride: usize,
) -> Result<Vec<SampleWindow>> {
    if stride == 0 || in_len == 0 || out_len == 0 {
        return Err(Error::contract("window lengths and stride must be positive"));
    }
    let total = in_len + out_len;
    let t = event.len();
    if t < total {
        return Err(Error::contract(format!(
            "event has {t} frames; windowing needs at least {total}"
        )));
    }
    Ok((0..=(t - total))
        .step_by(stride)
        .map(|s| SampleWindow {
            start: s,
            input: event.frame_range(s, in_len),
            target: event.frame_range(s + in_len, out_len),
        })
        .collect())
}

/// [`window_event`] with 13 input frames, 12 target frames and stride 12.
pub fn window_default(event: &EventSequence) -> Result<Vec<SampleWindow>> {
    window_event(event, INPUT_FRAMES, OUTPUT_FRAMES, DEFAULT_STRIDE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize) -> EventSequence {
        let data = (0..t * 4).map(|i| (i / 4) as f32).collect();
        EventSequence::new(Tensor::from_vec(&[t, 2, 2], data).unwrap()).unwrap()
    }

    #[test]
    fn four_hour_event_gives_three_windows() {
        let w = window_default(&ramp(49)).unwrap();
        assert_eq!(w.iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 12, 24]);
        for win in &w {
            let first_in = win.input.data()[0] as usize;
            assert_eq!(first_in, win.start);
            assert_eq!(win.input.shape(), &[13, 2, 2]);
            assert_eq!(win.target.shape(), &[12, 2, 2]);
            // Consecutive frames with nothing dropped or duplicated.
            let frames: Vec<usize> = win
                .input
                .data()
                .chunks(4)
                .chain(win.target.data().chunks(4))
                .map(|c| c[0] as usize)
                .collect();
            assert_eq!(frames, (win.start..win.start + 25).collect::<Vec<_>>());
        }
        // Stride 12 windows of 25 frames overlap by 13.
        assert_eq!(w[0].start + 25 - w[1].start, 13);
    }

    #[test]
    fn minimum_lengths() {
        assert_eq!(window_default(&ramp(25)).unwrap().len(), 1);
        assert_eq!(window_default(&ramp(36)).unwrap().len(), 1);
        assert_eq!(window_default(&ramp(37)).unwrap().len(), 2);
        let err = window_default(&ramp(24)).unwrap_err();
        assert!(err.to_string().contains("at least 25"));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let t = Tensor::from_vec(&[1, 1, 2], vec![0.0, 256.0]).unwrap();
        assert!(EventSequence::new(t).is_err());
        assert!(EventSequence::new(Tensor::zeros(&[2, 2]).unwrap()).is_err());
    }
}
