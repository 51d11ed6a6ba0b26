//! Relative transfer function estimation by covariance whitening.
//!
//! Per bin: whiten the noisy covariance by the noise Cholesky factor, take
//! the principal eigenvector, de-whiten, and normalize at the reference
//! channel. Bins without a dominant eigenvalue are flagged as unreliable and
//! fall back to the unit constraint at the reference channel.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mvdr::SteeringVector;
use crate::stft::Spectrogram;

/// Bins whose relative eigengap `(λ1 − λ2)/λ1` falls below this are flagged.
pub const DEFAULT_EIGENGAP_THRESHOLD: f64 = 0.1;

/// Per-bin RTF estimates with quality flags (`true` = unreliable).
#[derive(Debug, Clone, PartialEq)]
pub struct RtfEstimate {
    pub nu_per_bin: Vec<DVector<Complex64>>,
    pub reference_index: usize,
    pub condition_flags: Vec<bool>,
}

impl RtfEstimate {
    pub fn bins(&self) -> usize {
        self.nu_per_bin.len()
    }

    pub fn channels(&self) -> usize {
        self.nu_per_bin.first().map_or(0, DVector::len)
    }

    /// The constraint vector for one bin.
    pub fn steering(&self, bin: usize) -> Result<SteeringVector> {
        let v = self
            .nu_per_bin
            .get(bin)
            .ok_or_else(|| Error::Parameter(format!("bin {bin} out of range")))?;
        SteeringVector::new(v.clone(), self.reference_index)
    }

    /// Write the sidecar text format:
    /// a `segbeam-rtf 1 <bins> <channels> <ref>` header, then one line per
    /// bin: `<flag> <re> <im> ...` with full round-trip float precision.
    pub fn to_sidecar(&self, path: &Path) -> Result<()> {
        let mut text = format!(
            "segbeam-rtf 1 {} {} {}\n",
            self.bins(),
            self.channels(),
            self.reference_index
        );
        for (bin, nu) in self.nu_per_bin.iter().enumerate() {
            let mut line = String::new();
            write!(line, "{}", u8::from(self.condition_flags[bin])).unwrap();
            for v in nu.iter() {
                write!(line, " {} {}", v.re, v.im).unwrap();
            }
            text.push_str(&line);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: empty RTF sidecar", path.display())))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "segbeam-rtf" || fields[1] != "1" {
            return Err(Error::Format(format!(
                "{}: expected 'segbeam-rtf 1 <bins> <channels> <ref>' header",
                path.display()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("{}: bad {what} '{s}'", path.display())))
        };
        let bins = parse(fields[2], "bin count")?;
        let channels = parse(fields[3], "channel count")?;
        let reference_index = parse(fields[4], "reference index")?;
        let mut nu_per_bin = Vec::with_capacity(bins);
        let mut condition_flags = Vec::with_capacity(bins);
        for bin in 0..bins {
            let line = lines.next().ok_or_else(|| {
                Error::Format(format!("{}: missing line for bin {bin}", path.display()))
            })?;
            let mut toks = line.split_whitespace();
            let flag = toks
                .next()
                .and_then(|t| t.parse::<u8>().ok())
                .ok_or_else(|| Error::Format(format!("{}: bad flag on bin {bin}", path.display())))?;
            let mut v = DVector::zeros(channels);
            for ch in 0..channels {
                let re: f64 = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Format(format!("{}: truncated bin {bin}", path.display())))?;
                let im: f64 = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Format(format!("{}: truncated bin {bin}", path.display())))?;
                v[ch] = Complex64::new(re, im);
            }
            nu_per_bin.push(v);
            condition_flags.push(flag != 0);
        }
        Ok(RtfEstimate {
            nu_per_bin,
            reference_index,
            condition_flags,
        })
    }
}

/// Covariance-whitening RTF estimation with the default eigengap threshold.
///
/// `noisy` holds frames with the target active; `noise` holds target-free
/// frames.
pub fn estimate_rtf_cw(
    noisy: &Spectrogram,
    noise: &Spectrogram,
    reference_index: usize,
) -> Result<RtfEstimate> {
    estimate_rtf_cw_with(noisy, noise, reference_index, DEFAULT_EIGENGAP_THRESHOLD)
}

/// [`estimate_rtf_cw`] with an explicit eigengap flagging threshold.
pub fn estimate_rtf_cw_with(
    noisy: &Spectrogram,
    noise: &Spectrogram,
    reference_index: usize,
    eigengap_threshold: f64,
) -> Result<RtfEstimate> {
    let p = noisy.channels();
    if noise.channels() != p {
        return Err(Error::Shape(format!(
            "noisy ({p}) and noise ({}) channel counts differ",
            noise.channels()
        )));
    }
    if noisy.bins() != noise.bins() {
        return Err(Error::Shape(format!(
            "noisy ({}) and noise ({}) bin counts differ",
            noisy.bins(),
            noise.bins()
        )));
    }
    if reference_index >= p {
        return Err(Error::Parameter(format!(
            "reference index {reference_index} out of range for {p} channels"
        )));
    }
    if noisy.frames() < p || noise.frames() < p {
        return Err(Error::Data(format!(
            "need at least {p} frames per segment, got {} noisy / {} noise",
            noisy.frames(),
            noise.frames()
        )));
    }

    let bins = noisy.bins();
    let mut nu_per_bin = Vec::with_capacity(bins);
    let mut condition_flags = Vec::with_capacity(bins);
    for bin in 0..bins {
        let rn = mean_scm(noise, bin);
        let rx = mean_scm(noisy, bin);
        match whiten_and_extract(&rn, &rx, reference_index, eigengap_threshold) {
            Some((nu, flagged)) => {
                nu_per_bin.push(nu);
                condition_flags.push(flagged);
            }
            None => {
                let mut unit = DVector::zeros(p);
                unit[reference_index] = Complex64::new(1.0, 0.0);
                nu_per_bin.push(unit);
                condition_flags.push(true);
            }
        }
    }
    Ok(RtfEstimate {
        nu_per_bin,
        reference_index,
        condition_flags,
    })
}

/// Mean covariance of one bin across frames, diagonally loaded by
/// `1e-6 · trace/p`.
fn mean_scm(spec: &Spectrogram, bin: usize) -> DMatrix<Complex64> {
    let p = spec.channels();
    let mut scm = DMatrix::<Complex64>::zeros(p, p);
    for frame in 0..spec.frames() {
        let x = spec.snapshot(bin, frame);
        scm.gerc(Complex64::ONE, &x.values, &x.values, Complex64::ONE);
    }
    scm /= Complex64::new(spec.frames() as f64, 0.0);
    let load = 1e-6 * scm.trace().re.max(0.0) / p as f64;
    for d in 0..p {
        scm[(d, d)] += Complex64::new(load.max(f64::MIN_POSITIVE), 0.0);
    }
    scm
}

/// Returns `(nu, flagged)` or `None` when the noise covariance cannot be
/// factored or the de-whitened vector cannot be normalized.
fn whiten_and_extract(
    rn: &DMatrix<Complex64>,
    rx: &DMatrix<Complex64>,
    reference_index: usize,
    eigengap_threshold: f64,
) -> Option<(DVector<Complex64>, bool)> {
    let p = rn.nrows();
    let chol = rn.clone().cholesky()?;
    let l = chol.l();
    // Q = L⁻¹ Rx L⁻ᴴ
    let y = l.solve_lower_triangular(rx)?;
    let z = l.solve_lower_triangular(&y.adjoint())?;
    let q = (z.adjoint() + &z) * Complex64::new(0.5, 0.0);

    let eig = q.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = if p > 1 { eig.eigenvalues[order[1]] } else { 0.0 };
    let mut flagged = !(l1 > 0.0) || (l1 - l2) / l1 < eigengap_threshold;

    let qvec = eig.eigenvectors.column(order[0]).into_owned();
    let g = l * qvec;
    let g_ref = g[reference_index];
    if g_ref.norm() < 1e-12 * g.norm().max(f64::MIN_POSITIVE) {
        flagged = true;
        return Some((unit_at(p, reference_index), flagged));
    }
    let mut nu = g / g_ref;
    nu[reference_index] = Complex64::new(1.0, 0.0);
    Some((nu, flagged))
}

fn unit_at(p: usize, index: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(p);
    v[index] = Complex64::new(1.0, 0.0);
    v
}
