//! Pooling of per-bin partitions into run-level change points.

/// Fraction of bins that must report a change (within the smoothing window)
/// before a run-level change point is declared.
pub const CONSENSUS_MIN_FRACTION: f64 = 0.15;

/// Pool per-bin detections into run-level change points.
///
/// Detections from all bins are histogrammed over frames, smoothed with a
/// `±halfwidth` box, and peaks above `min_fraction` of the bin count are
/// picked greedily (highest first, suppressing `±2·halfwidth` around each).
/// Each event is located at the median of the contributing detections.
pub fn consensus_change_points(
    per_bin: &[Vec<usize>],
    num_frames: usize,
    halfwidth: usize,
    min_fraction: f64,
) -> Vec<usize> {
    if num_frames == 0 || per_bin.is_empty() {
        return Vec::new();
    }
    let mut hist = vec![0usize; num_frames];
    for partition in per_bin {
        // partitions start with 0, which is not a change
        for &f in partition.iter().filter(|&&f| f > 0) {
            if f < num_frames {
                hist[f] += 1;
            }
        }
    }
    let mut density = vec![0usize; num_frames];
    for f in 0..num_frames {
        let lo = f.saturating_sub(halfwidth);
        let hi = (f + halfwidth).min(num_frames - 1);
        density[f] = hist[lo..=hi].iter().sum();
    }
    let threshold = (min_fraction * per_bin.len() as f64).max(1.0);

    let mut events = Vec::new();
    let mut suppressed = vec![false; num_frames];
    loop {
        let mut best: Option<(usize, usize)> = None; // (density, frame), ties → smaller frame
        for f in 0..num_frames {
            if suppressed[f] || (density[f] as f64) < threshold {
                continue;
            }
            if best.is_none_or(|(bd, _)| density[f] > bd) {
                best = Some((density[f], f));
            }
        }
        let Some((_, peak)) = best else { break };
        let lo = peak.saturating_sub(halfwidth);
        let hi = (peak + halfwidth).min(num_frames - 1);
        let mut contributing: Vec<usize> = Vec::new();
        for (f, &count) in hist.iter().enumerate().take(hi + 1).skip(lo) {
            contributing.extend(std::iter::repeat_n(f, count));
        }
        contributing.sort_unstable();
        let event = contributing[contributing.len() / 2];
        events.push(event);
        let slo = peak.saturating_sub(2 * halfwidth);
        let shi = (peak + 2 * halfwidth).min(num_frames - 1);
        for s in suppressed.iter_mut().take(shi + 1).skip(slo) {
            *s = true;
        }
    }
    events.sort_unstable();
    events
}

/// Per-true-change summary: how many bins detected it and where the median
/// detection landed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeSummary {
    pub truth_frame: usize,
    pub bins_detecting: usize,
    pub median_detected_frame: Option<usize>,
}

pub fn summarize_against_truth(
    per_bin: &[Vec<usize>],
    truth_frames: &[usize],
    tolerance: usize,
) -> Vec<ChangeSummary> {
    truth_frames
        .iter()
        .map(|&t| {
            let mut hits: Vec<usize> = Vec::new();
            for partition in per_bin {
                // nearest detection within tolerance, if any
                let nearest = partition
                    .iter()
                    .filter(|&&f| f > 0)
                    .min_by_key(|&&f| f.abs_diff(t))
                    .copied();
                if let Some(f) = nearest {
                    if f.abs_diff(t) <= tolerance {
                        hits.push(f);
                    }
                }
            }
            hits.sort_unstable();
            ChangeSummary {
                truth_frame: t,
                bins_detecting: hits.len(),
                median_detected_frame: if hits.is_empty() {
                    None
                } else {
                    Some(hits[hits.len() / 2])
                },
            }
        })
        .collect()
}
