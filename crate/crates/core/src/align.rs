//! Motion segmentation and fixed-size signature construction.
//!
//! A column of the spectrogram is flagged as "moving" through a weighted
//! standard deviation whose weights grow quadratically with distance from the
//! zero-Doppler bin, so the strong direct-signal line at DC barely registers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::caf::DopplerSpectrogram;
use crate::error::{Error, Result};
use crate::label::{Channel, MotionClass};

/// Doppler bins of an aligned signature.
pub const SIGNATURE_BINS: usize = 51;
/// Time bins of an aligned signature.
pub const SIGNATURE_COLS: usize = 50;
/// Length of a vectorized signature.
pub const SIGNATURE_LEN: usize = SIGNATURE_BINS * SIGNATURE_COLS;

/// Catmull-Rom family parameter of the cubic convolution kernel.
pub const BICUBIC_A: f64 = -0.5;

/// Per-bin weights of the detection statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Squared distance from `dc_bin`, with the DC bin itself weighted 1.
    pub fn centered(n_bins: usize, dc_bin: usize) -> Result<Self> {
        if dc_bin >= n_bins {
            return Err(Error::invalid(format!("DC bin {dc_bin} outside 0..{n_bins}")));
        }
        Ok(Self(
            (0..n_bins)
                .map(|i| {
                    let d = i.abs_diff(dc_bin) as f64;
                    if d == 0.0 {
                        1.0
                    } else {
                        d * d
                    }
                })
                .collect(),
        ))
    }

    /// Weights for a centre-shifted spectrogram axis.
    pub fn for_spectrogram(spec: &DopplerSpectrogram) -> Result<Self> {
        let dc = spec
            .freq_axis_hz
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::invalid("empty frequency axis"))?;
        Self::centered(spec.n_freq(), dc)
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights must be positive and finite"));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_len(x: &[f64], w: &WeightVector) -> Result<()> {
    if x.len() != w.len() {
        return Err(Error::invalid(format!(
            "vector has {} bins but weights have {}",
            x.len(),
            w.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("empty frequency vector"));
    }
    Ok(())
}

/// `Σ I[i]·X[i] / N`. The divisor is the bin count, not the weight total.
pub fn weighted_mean(x: &[f64], weights: &WeightVector) -> Result<f64> {
    check_len(x, weights)?;
    let s: f64 = x.iter().zip(weights.as_slice()).map(|(x, w)| w * x).sum();
    Ok(s / x.len() as f64)
}

/// `sqrt( Σ (I[i]·|X[i] − mean|)² / Σ I[i] )` with `mean` from [`weighted_mean`].
pub fn weighted_std(x: &[f64], weights: &WeightVector) -> Result<f64> {
    let mean = weighted_mean(x, weights)?;
    let w = weights.as_slice();
    let num: f64 = x
        .iter()
        .zip(w)
        .map(|(x, w)| (w * (x - mean).abs()).powi(2))
        .sum();
    let den: f64 = w.iter().sum();
    Ok((num / den).sqrt())
}

/// Weighted standard deviation of every spectrogram column.
pub fn std_trace(spec: &DopplerSpectrogram, weights: &WeightVector) -> Result<Vec<f64>> {
    (0..spec.n_time())
        .map(|t| weighted_std(spec.values.column(t).as_slice(), weights))
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `median + 3·MAD` of the trace, the per-recording default threshold.
pub fn default_threshold(trace: &[f64]) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let mut v = trace.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = trace.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&mut dev);
    med + 3.0 * mad
}

/// Start and end time bins of a motion, inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBounds {
    pub start_bin: usize,
    pub end_bin: usize,
    pub std_trace: Vec<f64>,
}

impl DetectionBounds {
    pub fn width(&self) -> usize {
        self.end_bin - self.start_bin + 1
    }
}

/// Applies the three-consecutive-bin rule to a precomputed trace.
///
/// The start is the first bin opening a run of three values above
/// `threshold`; the end is the bin before the first later run of three values
/// below it, or the last bin if the motion never settles.
pub fn bounds_from_trace(trace: &[f64], threshold: f64) -> Result<DetectionBounds> {
    if trace.len() < 6 {
        return Err(Error::invalid(format!(
            "detection needs at least 6 time bins, got {}",
            trace.len()
        )));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    let start_bin = trace
        .windows(3)
        .position(|w| w.iter().all(|v| *v > threshold))
        .ok_or(Error::NoMotionDetected { threshold })?;
    let end_bin = trace[start_bin + 1..]
        .windows(3)
        .position(|w| w.iter().all(|v| *v < threshold))
        .map(|p| start_bin + 1 + p - 1)
        .unwrap_or(trace.len() - 1);
    Ok(DetectionBounds {
        start_bin,
        end_bin,
        std_trace: trace.to_vec(),
    })
}

pub fn detect_bounds(
    spec: &DopplerSpectrogram,
    threshold: f64,
    weights: &WeightVector,
) -> Result<DetectionBounds> {
    bounds_from_trace(&std_trace(spec, weights)?, threshold)
}

/// Column sub-range `[start_bin, end_bin]` of the spectrogram.
pub fn crop(spec: &DopplerSpectrogram, bounds: &DetectionBounds) -> Result<DMatrix<f64>> {
    if bounds.start_bin > bounds.end_bin || bounds.end_bin >= spec.n_time() {
        return Err(Error::invalid(format!(
            "bounds [{}, {}] invalid for {} time bins",
            bounds.start_bin,
            bounds.end_bin,
            spec.n_time()
        )));
    }
    Ok(spec
        .values
        .columns(bounds.start_bin, bounds.width())
        .into_owned())
}

fn cubic_kernel(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Resamples the time axis to `target_cols` with cubic convolution.
///
/// Output column `j` samples the input at `(j + 0.5)·W/target − 0.5` (pixel
/// centres aligned); taps beyond the edges are clamped to the border column.
/// Rows are untouched, so the frequency axis survives unchanged.
pub fn bicubic_resize(mat: &DMatrix<f64>, target_cols: usize) -> Result<DMatrix<f64>> {
    let w = mat.ncols();
    if w < 2 {
        return Err(Error::invalid(format!("need at least 2 columns to resize, got {w}")));
    }
    if target_cols == 0 {
        return Err(Error::invalid("target width must be positive"));
    }
    let scale = w as f64 / target_cols as f64;
    let mut out = DMatrix::zeros(mat.nrows(), target_cols);
    for j in 0..target_cols {
        let x = (j as f64 + 0.5) * scale - 0.5;
        let base = x.floor();
        let taps: Vec<(usize, f64)> = (-1..=2)
            .map(|o| {
                let pos = base + o as f64;
                let idx = pos.clamp(0.0, (w - 1) as f64) as usize;
                (idx, cubic_kernel(x - pos))
            })
            .collect();
        for r in 0..mat.nrows() {
            out[(r, j)] = taps.iter().map(|&(i, k)| k * mat[(r, i)]).sum();
        }
    }
    Ok(out)
}

/// Min-max scaling to `[0, 1]`; a constant matrix maps to zeros.
pub fn normalize01(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let min = mat.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = mat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return DMatrix::zeros(mat.nrows(), mat.ncols());
    }
    mat.map(|v| ((v - min) / range).clamp(0.0, 1.0))
}

/// Column-major flattening of a 51 × 50 signature.
pub fn vectorize(mat: &DMatrix<f64>) -> Result<DVector<f64>> {
    if mat.shape() != (SIGNATURE_BINS, SIGNATURE_COLS) {
        return Err(Error::invalid(format!(
            "signature must be {SIGNATURE_BINS}x{SIGNATURE_COLS}, got {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(DVector::from_column_slice(mat.as_slice()))
}

pub fn unvectorize(d: &DVector<f64>) -> Result<DMatrix<f64>> {
    if d.len() != SIGNATURE_LEN {
        return Err(Error::invalid(format!(
            "signature vector must have {SIGNATURE_LEN} entries, got {}",
            d.len()
        )));
    }
    Ok(DMatrix::from_column_slice(
        SIGNATURE_BINS,
        SIGNATURE_COLS,
        d.as_slice(),
    ))
}

/// Fixed-size normalized signature and its vectorized form.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSignature {
    matrix: DMatrix<f64>,
    vector: DVector<f64>,
    pub label: Option<MotionClass>,
    pub channel: Option<Channel>,
}

impl AlignedSignature {
    pub fn from_matrix(
        matrix: DMatrix<f64>,
        label: Option<MotionClass>,
        channel: Option<Channel>,
    ) -> Result<Self> {
        let vector = vectorize(&matrix)?;
        Ok(Self {
            matrix,
            vector,
            label,
            channel,
        })
    }

    pub fn from_vector(
        vector: DVector<f64>,
        label: Option<MotionClass>,
        channel: Option<Channel>,
    ) -> Result<Self> {
        let matrix = unvectorize(&vector)?;
        Ok(Self {
            matrix,
            vector,
            label,
            channel,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.vector
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.vector
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Fixed detection threshold; `None` uses the per-recording `median + 3·MAD`.
    pub threshold: Option<f64>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self { threshold: None }
    }
}

/// Detect, crop, resize, normalize and vectorize one recording.
pub fn align(spec: &DopplerSpectrogram, cfg: &AlignConfig) -> Result<(AlignedSignature, DetectionBounds)> {
    if spec.n_freq() != SIGNATURE_BINS {
        return Err(Error::invalid(format!(
            "spectrogram has {} Doppler bins, signatures need {SIGNATURE_BINS}",
            spec.n_freq()
        )));
    }
    let weights = WeightVector::for_spectrogram(spec)?;
    let trace = std_trace(spec, &weights)?;
    let threshold = cfg.threshold.unwrap_or_else(|| default_threshold(&trace));
    if !(threshold > 0.0) {
        return Err(Error::NoMotionDetected { threshold });
    }
    let bounds = bounds_from_trace(&trace, threshold)?;
    let cropped = crop(spec, &bounds)?;
    let resized = bicubic_resize(&cropped, SIGNATURE_COLS)?;
    let sig = AlignedSignature::from_matrix(normalize01(&resized), None, spec.source_channel)?;
    Ok((sig, bounds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_from(values: DMatrix<f64>) -> DopplerSpectrogram {
        let n = values.nrows();
        let axis = (0..n).map(|k| k as f64 - (n / 2) as f64).collect();
        DopplerSpectrogram::new(values, axis, 0.04, None).unwrap()
    }

    #[test]
    fn centered_weights() {
        let w = WeightVector::centered(7, 3).unwrap();
        assert_eq!(w.as_slice(), &[9.0, 4.0, 1.0, 1.0, 1.0, 4.0, 9.0]);
        assert!(WeightVector::centered(3, 3).is_err());
        assert!(WeightVector::from_weights(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn hand_computed_mean_and_std() {
        let w = WeightVector::from_weights(vec![1.0, 4.0, 9.0]).unwrap();
        let x = [0.0, 0.0, 1.0];
        assert_eq!(weighted_mean(&x, &w).unwrap(), 3.0);
        let s = weighted_std(&x, &w).unwrap();
        assert!((s - (477.0f64 / 14.0).sqrt()).abs() < 1e-12);
        assert!((s - 5.8371).abs() < 1e-3);
    }

    #[test]
    fn zeros_and_scaling() {
        let w = WeightVector::from_weights(vec![1.0, 4.0, 9.0, 16.0]).unwrap();
        assert_eq!(weighted_mean(&[0.0; 4], &w).unwrap(), 0.0);
        assert_eq!(weighted_std(&[0.0; 4], &w).unwrap(), 0.0);
        let x = [0.3, 1.2, 0.1, 0.7];
        let x2: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let m = weighted_mean(&x, &w).unwrap();
        assert!((weighted_mean(&x2, &w).unwrap() - 2.5 * m).abs() < 1e-12);
        let x3: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let s = weighted_std(&x, &w).unwrap();
        assert!((weighted_std(&x3, &w).unwrap() - 2.0 * s).abs() < 1e-12);
        assert!(weighted_mean(&x[..3], &w).is_err());
        assert!(weighted_std(&x[..3], &w).is_err());
    }

    #[test]
    fn off_dc_peak_raises_std() {
        let w = WeightVector::centered(51, 25).unwrap();
        let mut at_dc = vec![0.01; 51];
        at_dc[25] = 1.0;
        let mut off_dc = vec![0.01; 51];
        off_dc[29] = 1.0;
        assert!(weighted_std(&off_dc, &w).unwrap() > weighted_std(&at_dc, &w).unwrap());
    }

    #[test]
    fn hand_traced_bounds() {
        let trace = [0.1, 0.1, 5.0, 6.0, 7.0, 6.0, 5.0, 0.1, 0.1, 0.1];
        let b = bounds_from_trace(&trace, 1.0).unwrap();
        assert_eq!((b.start_bin, b.end_bin), (2, 6));
    }

    #[test]
    fn bounds_conventions() {
        assert!(matches!(
            bounds_from_trace(&[0.1; 10], 1.0),
            Err(Error::NoMotionDetected { .. })
        ));
        let b = bounds_from_trace(&[5.0; 10], 1.0).unwrap();
        assert_eq!((b.start_bin, b.end_bin), (0, 9));
        assert!(bounds_from_trace(&[5.0; 5], 1.0).is_err());
        assert!(bounds_from_trace(&[5.0; 8], 0.0).is_err());
        // two isolated spikes never form a run of three
        let b = bounds_from_trace(&[0.0, 2.0, 2.0, 0.0, 2.0, 2.0, 2.0, 2.0], 1.0).unwrap();
        assert_eq!((b.start_bin, b.end_bin), (4, 7));
    }

    #[test]
    fn bounds_shift_with_prepended_quiet_columns() {
        let trace = [0.1, 0.2, 3.0, 4.0, 5.0, 4.0, 0.2, 0.1, 0.1];
        let b = bounds_from_trace(&trace, 1.0).unwrap();
        let mut padded = vec![0.3, 0.1, 0.2];
        padded.extend_from_slice(&trace);
        padded.extend_from_slice(&[0.1, 0.3]);
        let c = bounds_from_trace(&padded, 1.0).unwrap();
        assert_eq!((c.start_bin, c.end_bin), (b.start_bin + 3, b.end_bin + 3));
    }

    #[test]
    fn crop_ranges() {
        let m = DMatrix::from_fn(51, 10, |r, c| (r * 10 + c) as f64);
        let spec = spec_from(m.clone());
        let full = DetectionBounds {
            start_bin: 0,
            end_bin: 9,
            std_trace: vec![],
        };
        assert_eq!(crop(&spec, &full).unwrap(), m);
        let part = DetectionBounds {
            start_bin: 2,
            end_bin: 6,
            std_trace: vec![],
        };
        let c = crop(&spec, &part).unwrap();
        assert_eq!(c.ncols(), 5);
        assert_eq!(c[(0, 0)], 2.0);
        let bad = DetectionBounds {
            start_bin: 2,
            end_bin: 10,
            std_trace: vec![],
        };
        assert!(crop(&spec, &bad).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let m = DMatrix::from_fn(51, 50, |r, c| ((r * 7 + c * 13) % 17) as f64 / 17.0);
        let out = bicubic_resize(&m, 50).unwrap();
        assert!((out - &m).abs().max() < 1e-9);
        let c = DMatrix::from_element(51, 13, 0.37);
        let out = bicubic_resize(&c, 50).unwrap();
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-12));
        assert!(bicubic_resize(&DMatrix::zeros(51, 1), 50).is_err());
    }

    #[test]
    fn resize_reproduces_linear_ramps() {
        for w in [7usize, 23, 80, 120] {
            let m = DMatrix::from_fn(3, w, |r, c| (r as f64 + 1.0) * c as f64 + 0.5);
            let out = bicubic_resize(&m, 50).unwrap();
            let scale = w as f64 / 50.0;
            for j in 0..50 {
                let x = (j as f64 + 0.5) * scale - 0.5;
                if x < 1.0 || x > (w - 2) as f64 {
                    continue;
                }
                for r in 0..3 {
                    let expected = (r as f64 + 1.0) * x + 0.5;
                    assert!((out[(r, j)] - expected).abs() < 1e-6, "w={w} j={j}");
                }
            }
        }
    }

    #[test]
    fn normalization() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        let n = normalize01(&m);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 2.0 / 3.0, 1.0 / 3.0, 1.0]);
        assert!((n - expected).abs().max() < 1e-15);
        assert_eq!(normalize01(&DMatrix::from_element(3, 3, 5.0)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn vectorization_is_column_major() {
        let m = DMatrix::from_fn(51, 50, |i, j| (51 * j + i) as f64);
        let d = vectorize(&m).unwrap();
        assert!(d.iter().enumerate().all(|(k, v)| *v == k as f64));
        assert_eq!(unvectorize(&d).unwrap(), m);
        assert!((d.norm() - m.norm()).abs() < 1e-9);
        assert!(vectorize(&DMatrix::zeros(50, 51)).is_err());
    }
}
