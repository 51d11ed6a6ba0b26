//! Objective evaluation: SI-SDR, output-power traces, and change-point
//! detection scores.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Power floor for dB traces.
pub const DB_FLOOR: f64 = -120.0;

/// One evaluation row per method.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub si_sdr_db: f64,
    /// SI-SDR improvement over the unprocessed reference channel.
    pub si_sdr_gain_db: f64,
    pub mean_output_power_db: f64,
    pub cp_precision: f64,
    pub cp_recall: f64,
    /// Signed mean detection latency in frames; NaN when nothing matched.
    pub cp_mean_latency_frames: f64,
}

impl MetricsReport {
    /// Fixed CSV header the reports are appended under.
    pub const CSV_HEADER: &'static str =
        "method,si_sdr_db,si_sdr_gain_db,mean_output_power_db,cp_precision,cp_recall,cp_mean_latency_frames";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.si_sdr_db,
            self.si_sdr_gain_db,
            self.mean_output_power_db,
            self.cp_precision,
            self.cp_recall,
            self.cp_mean_latency_frames
        )
    }
}

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// Projects the estimate onto the reference; returns `+inf` when the
/// residual is below `1e-30` of the projected signal power (perfect
/// reconstruction sentinel) and `-inf` when the estimate carries no
/// reference component at all.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate length {} does not match reference length {}",
            estimate.len(),
            reference.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::Parameter("signals must have at least one sample".into()));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy <= 0.0 {
        return Err(Error::Parameter("reference signal is all-zero".into()));
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let signal_power = alpha * alpha * ref_energy;
    if signal_power <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let residual_power: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if residual_power <= 1e-30 * signal_power {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal_power / residual_power).log10())
}

/// Greedy one-to-one change-point matching within `± tolerance`.
///
/// Precision is over detections (vacuously 1 when none), recall over truths
/// (vacuously 1 when none); latency is the signed mean of `detected − truth`
/// over matches, NaN when nothing matched.
pub fn change_point_score(
    detected: &[usize],
    truth: &[usize],
    tolerance_frames: usize,
) -> (f64, f64, f64) {
    let mut used = vec![false; detected.len()];
    let mut latencies: Vec<f64> = Vec::new();
    for &t in truth {
        let mut best: Option<(usize, usize)> = None; // (abs distance, index)
        for (i, &d) in detected.iter().enumerate() {
            if used[i] {
                continue;
            }
            let dist = d.abs_diff(t);
            if dist <= tolerance_frames && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, i));
            }
        }
        if let Some((_, i)) = best {
            used[i] = true;
            latencies.push(detected[i] as f64 - t as f64);
        }
    }
    let matched = latencies.len();
    let precision = if detected.is_empty() {
        1.0
    } else {
        matched as f64 / detected.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        matched as f64 / truth.len() as f64
    };
    let latency = if matched == 0 {
        f64::NAN
    } else {
        latencies.iter().sum::<f64>() / matched as f64
    };
    (precision, recall, latency)
}

/// Moving-average `|y|²` trace in dB with a −120 dB floor; the window is
/// trailing and saturates at the sequence start.
pub fn output_power_trace(outputs: &[Complex64], smoothing_frames: usize) -> Result<Vec<f64>> {
    if smoothing_frames == 0 {
        return Err(Error::Parameter("smoothing window must be at least 1 frame".into()));
    }
    let powers: Vec<f64> = outputs.iter().map(Complex64::norm_sqr).collect();
    let mut out = Vec::with_capacity(powers.len());
    let mut acc = 0.0;
    for t in 0..powers.len() {
        acc += powers[t];
        if t >= smoothing_frames {
            acc -= powers[t - smoothing_frames];
        }
        let n = (t + 1).min(smoothing_frames);
        let mean = (acc / n as f64).max(0.0);
        out.push((10.0 * mean.log10()).max(DB_FLOOR));
    }
    Ok(out)
}
