//! Waveform primitives shared by ingest, mixing and the baseline transforms.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::Range;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};

/// One appliance measurement: aligned voltage and current series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformRecord {
    pub voltage: Vec<f64>,
    pub current: Vec<f64>,
    /// Hz.
    pub sample_rate: f64,
    pub label: String,
}

impl WaveformRecord {
    pub fn new(
        voltage: Vec<f64>,
        current: Vec<f64>,
        sample_rate: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if voltage.len() != current.len() {
            return Err(NilmError::invalid(format!(
                "voltage has {} samples but current has {}",
                voltage.len(),
                current.len()
            )));
        }
        if voltage.len() < 2 {
            return Err(NilmError::invalid("a record needs at least 2 samples"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(NilmError::invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            voltage,
            current,
            sample_rate,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    fn slice(&self, span: Range<usize>) -> Self {
        Self {
            voltage: self.voltage[span.clone()].to_vec(),
            current: self.current[span].to_vec(),
            sample_rate: self.sample_rate,
            label: self.label.clone(),
        }
    }
}

/// Kernel half-width, in output sample periods.
const RESAMPLE_HALF_WIDTH: f64 = 32.0;
/// Low-pass cutoff as a fraction of the output sample rate.
const RESAMPLE_CUTOFF: f64 = 0.45;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(pos: f64) -> f64 {
    // pos in [-1, 1]
    let u = 0.5 * (pos + 1.0);
    0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos()
}

/// Filter taps around one output instant, for inputs `first..first+weights.len()`.
struct Taps {
    first: isize,
    weights: Vec<f64>,
}

/// Windowed-sinc low-pass filter evaluated at output instants, so arbitrary
/// (non-integer) downsampling ratios are supported. Taps depend only on the
/// fractional part of the output instant, so they are cached per phase.
fn lowpass_resample(channels: [&[f64]; 2], ratio: f64, out_len: usize) -> [Vec<f64>; 2] {
    let cutoff = RESAMPLE_CUTOFF / ratio;
    let half_width = RESAMPLE_HALF_WIDTH * ratio;
    let n = channels[0].len() as isize;
    let mut cache: HashMap<u64, Rc<Taps>> = HashMap::new();
    let mut out = [Vec::with_capacity(out_len), Vec::with_capacity(out_len)];
    for j in 0..out_len {
        let centre = j as f64 * ratio;
        let base = centre.floor();
        let phase = centre - base;
        let taps = match cache.get(&phase.to_bits()) {
            Some(t) => Rc::clone(t),
            None => {
                let lo = (phase - half_width).ceil() as isize;
                let hi = (phase + half_width).floor() as isize;
                let weights = (lo..=hi)
                    .map(|k| {
                        let dt = phase - k as f64;
                        2.0 * cutoff * sinc(2.0 * cutoff * dt) * blackman(dt / half_width)
                    })
                    .collect();
                let t = Rc::new(Taps { first: lo, weights });
                if cache.len() < 256 {
                    cache.insert(phase.to_bits(), Rc::clone(&t));
                }
                t
            }
        };
        let origin = base as isize + taps.first;
        let skip = (-origin).max(0) as usize;
        let take = (n - origin).clamp(0, taps.weights.len() as isize) as usize;
        let mut norm = 0.0;
        let mut acc = [0.0; 2];
        for (i, w) in taps.weights.iter().enumerate().take(take).skip(skip) {
            let k = (origin + i as isize) as usize;
            norm += w;
            acc[0] += w * channels[0][k];
            acc[1] += w * channels[1][k];
        }
        for (o, a) in out.iter_mut().zip(acc) {
            o.push(if norm.abs() > 1e-12 { a / norm } else { 0.0 });
        }
    }
    out
}

/// Downsamples both channels to `target_rate` with anti-alias filtering.
pub fn resample(record: &WaveformRecord, target_rate: f64) -> Result<WaveformRecord> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(NilmError::invalid(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    if target_rate > record.sample_rate {
        return Err(NilmError::Unsupported(format!(
            "upsampling from {} Hz to {} Hz",
            record.sample_rate, target_rate
        )));
    }
    if target_rate == record.sample_rate {
        return Ok(record.clone());
    }
    let ratio = record.sample_rate / target_rate;
    let out_len = (record.len() as f64 / ratio).round() as usize;
    let [voltage, current] = lowpass_resample([&record.voltage, &record.current], ratio, out_len);
    WaveformRecord::new(
        voltage,
        current,
        target_rate,
        record.label.clone(),
    )
}

/// Negative-to-positive zero crossings, as fractional sample positions found
/// by linear interpolation between the bracketing samples.
///
/// A sample that is exactly zero counts as a crossing at that sample when the
/// last non-zero value before it was negative (or there was none).
pub fn abscissa_crossings(voltage: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    // sign of the last non-zero sample: -1, 1, or 0 when none seen yet
    let mut last_sign = 0i8;
    for i in 0..voltage.len().saturating_sub(1) {
        let (a, b) = (voltage[i], voltage[i + 1]);
        if a < 0.0 && b > 0.0 {
            out.push(i as f64 + (-a) / (b - a));
        } else if a == 0.0 && b > 0.0 && last_sign <= 0 {
            out.push(i as f64);
        }
        if a != 0.0 {
            last_sign = if a > 0.0 { 1 } else { -1 };
        }
    }
    out
}

/// Samples per window for the given mains frequency.
pub fn window_len(sample_rate: f64, mains_hz: f64, periods_per_window: usize) -> usize {
    (periods_per_window as f64 * sample_rate / mains_hz).round() as usize
}

/// Source index ranges of the windows [`extract_windows`] would cut.
pub fn window_spans(
    voltage: &[f64],
    sample_rate: f64,
    mains_hz: f64,
    periods_per_window: usize,
) -> Vec<Range<usize>> {
    let len = window_len(sample_rate, mains_hz, periods_per_window);
    if len == 0 || voltage.len() < len {
        return Vec::new();
    }
    let mut spans = Vec::new();
    let mut next_free = 0usize;
    for c in abscissa_crossings(voltage) {
        let start = c.round() as usize;
        if start < next_free {
            continue;
        }
        let end = start + len;
        if end > voltage.len() {
            break;
        }
        spans.push(start..end);
        next_free = end;
    }
    spans
}

/// Cuts non-overlapping windows of `periods_per_window` mains periods, each
/// starting at a voltage abscissa crossing.
pub fn extract_windows(
    record: &WaveformRecord,
    periods_per_window: usize,
    mains_hz: f64,
) -> Result<Vec<WaveformRecord>> {
    if periods_per_window == 0 {
        return Err(NilmError::invalid("periods_per_window must be positive"));
    }
    if !(mains_hz > 0.0) {
        return Err(NilmError::invalid("mains frequency must be positive"));
    }
    Ok(
        window_spans(&record.voltage, record.sample_rate, mains_hz, periods_per_window)
            .into_iter()
            .map(|span| record.slice(span))
            .collect(),
    )
}

/// Root mean square.
pub fn rms(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(NilmError::invalid("rms of an empty series"));
    }
    Ok((series.iter().map(|x| x * x).sum::<f64>() / series.len() as f64).sqrt())
}
