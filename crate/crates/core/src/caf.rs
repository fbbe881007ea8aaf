//! Batched cross ambiguity function and time-Doppler history assembly.
//!
//! Each integration window is split into `batch_count` sub-batches. For every
//! delay the conjugated, delayed reference is correlated with the surveillance
//! signal inside each batch, giving one complex value per batch. The batch
//! sequence is zero padded to `zero_pad_to` points and transformed with a
//! unitary DFT (scaled by `1/sqrt(zero_pad_to)`), then centre shifted so the
//! zero-Doppler bin sits in the middle of the axis.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Channel;
use crate::sim::ChannelPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CafConfig {
    pub sample_rate_hz: f64,
    pub integration_s: f64,
    pub hop_s: f64,
    pub batch_count: usize,
    pub zero_pad_to: usize,
    pub delay_bins: usize,
}

impl Default for CafConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 2e6,
            integration_s: 0.4,
            hop_s: 0.04,
            batch_count: 20,
            zero_pad_to: 51,
            delay_bins: 16,
        }
    }
}

impl CafConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.integration_s > 0.0 && self.hop_s > 0.0) {
            return Err(Error::invalid("sample rate, integration and hop must be positive"));
        }
        if self.hop_s > self.integration_s {
            return Err(Error::invalid(format!(
                "hop {} s exceeds integration time {} s",
                self.hop_s, self.integration_s
            )));
        }
        if self.batch_count == 0 || self.delay_bins == 0 {
            return Err(Error::invalid("batch_count and delay_bins must be at least 1"));
        }
        let window = self.window_samples();
        if window == 0 || window % self.batch_count != 0 {
            return Err(Error::invalid(format!(
                "batch_count {} does not divide the {window}-sample integration window",
                self.batch_count
            )));
        }
        if self.zero_pad_to < self.batch_count {
            return Err(Error::invalid(format!(
                "zero_pad_to {} smaller than batch_count {}",
                self.zero_pad_to, self.batch_count
            )));
        }
        if self.hop_samples() == 0 {
            return Err(Error::invalid("hop shorter than one sample"));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.integration_s * self.sample_rate_hz).round() as usize
    }

    pub fn batch_len(&self) -> usize {
        self.window_samples() / self.batch_count
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_s * self.sample_rate_hz).round() as usize
    }

    /// Effective pulse repetition frequency: batches per second.
    pub fn prf_hz(&self) -> f64 {
        self.batch_count as f64 / self.integration_s
    }

    pub fn bin_spacing_hz(&self) -> f64 {
        self.prf_hz() / self.zero_pad_to as f64
    }

    /// Index of the zero-Doppler bin after centre shifting.
    pub fn dc_bin(&self) -> usize {
        self.zero_pad_to / 2
    }

    /// Ascending Doppler axis; the middle entry is exactly 0 Hz.
    pub fn freq_axis_hz(&self) -> Vec<f64> {
        let dc = self.dc_bin() as f64;
        let spacing = self.bin_spacing_hz();
        (0..self.zero_pad_to)
            .map(|k| (k as f64 - dc) * spacing)
            .collect()
    }

    /// Number of hop-spaced windows that fit in `len` samples.
    pub fn window_count(&self, len: usize) -> usize {
        let window = self.window_samples();
        if len < window {
            0
        } else {
            (len - window) / self.hop_samples() + 1
        }
    }
}

/// Complex CAF over the delay × Doppler grid of one integration window.
#[derive(Debug, Clone, PartialEq)]
pub struct CafSurface {
    /// `delay_bins × zero_pad_to`; columns follow [`CafSurface::freq_axis_hz`].
    pub values: DMatrix<Complex64>,
    pub delay_axis_samples: Vec<usize>,
    pub freq_axis_hz: Vec<f64>,
}

impl CafSurface {
    /// `(delay_bin, doppler_bin)` of the largest magnitude; ties go to the first in delay-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_mag = f64::NEG_INFINITY;
        for d in 0..self.values.nrows() {
            for f in 0..self.values.ncols() {
                let m = self.values[(d, f)].norm();
                if m > best_mag {
                    best_mag = m;
                    best = (d, f);
                }
            }
        }
        best
    }
}

/// Which delay row of the CAF becomes the spectrogram column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySelector {
    Fixed(usize),
    /// Delay with the largest total slice power, chosen per window.
    Argmax,
}

impl Default for DelaySelector {
    fn default() -> Self {
        DelaySelector::Argmax
    }
}

/// Time-Doppler magnitude history.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerSpectrogram {
    /// `F × T` linear magnitudes; rows follow `freq_axis_hz`, columns are windows.
    pub values: DMatrix<f64>,
    pub freq_axis_hz: Vec<f64>,
    pub hop_s: f64,
    pub source_channel: Option<Channel>,
    /// Delay bin read for each column.
    pub delays: Vec<usize>,
}

impl DopplerSpectrogram {
    pub fn new(
        values: DMatrix<f64>,
        freq_axis_hz: Vec<f64>,
        hop_s: f64,
        source_channel: Option<Channel>,
    ) -> Result<Self> {
        if values.nrows() != freq_axis_hz.len() {
            return Err(Error::invalid(format!(
                "{} frequency rows but {} axis entries",
                values.nrows(),
                freq_axis_hz.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("spectrogram values must be finite and non-negative"));
        }
        if freq_axis_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frequency axis must be strictly ascending"));
        }
        let delays = vec![0; values.ncols()];
        Ok(Self {
            values,
            freq_axis_hz,
            hop_s,
            source_channel,
            delays,
        })
    }

    pub fn n_freq(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_time(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        self.values.column(t).iter().copied().collect()
    }

    /// Doppler bin holding the largest magnitude of column `t`.
    pub fn peak_bin(&self, t: usize) -> usize {
        let col = self.values.column(t);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if *v > col[best] {
                best = i;
            }
        }
        best
    }
}

struct DopplerTransform {
    fft: Arc<dyn Fft<f64>>,
    size: usize,
    scale: f64,
}

impl DopplerTransform {
    fn new(size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(size);
        Self {
            fft,
            size,
            scale: 1.0 / (size as f64).sqrt(),
        }
    }

    /// Zero pads `batches`, applies the unitary DFT and centre shifts the result.
    fn apply(&self, batches: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        buf[..batches.len()].copy_from_slice(batches);
        self.fft.process(&mut buf);
        let dc = self.size / 2;
        (0..self.size)
            .map(|k| buf[(k + self.size - dc) % self.size] * self.scale)
            .collect()
    }
}

#[inline]
fn widen(c: Complex32) -> Complex64 {
    Complex64::new(c.re as f64, c.im as f64)
}

/// Correlations of one batch for every delay: `Σ_n conj(ref[p+n-τ]) · sur[p+n]`.
/// Reference samples before the start of the recording count as zero.
fn batch_correlation(
    reference: &[Complex32],
    surveillance: &[Complex32],
    start: usize,
    len: usize,
    delay_bins: usize,
) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); delay_bins];
    for n in start..start + len {
        let s = widen(surveillance[n]);
        let max_tau = delay_bins.min(n + 1);
        for (tau, a) in acc.iter_mut().enumerate().take(max_tau) {
            *a += widen(reference[n - tau]).conj() * s;
        }
    }
    acc
}

fn check_window(pair: &ChannelPair, window_start: usize, cfg: &CafConfig) -> Result<()> {
    let end = window_start
        .checked_add(cfg.window_samples())
        .ok_or_else(|| Error::invalid("window start overflows"))?;
    if end > pair.len() {
        return Err(Error::invalid(format!(
            "window [{window_start}, {end}) exceeds the {}-sample recording",
            pair.len()
        )));
    }
    Ok(())
}

/// Batch correlation matrix of one window: `delay_bins × batch_count`.
pub fn batch_correlations(
    pair: &ChannelPair,
    window_start: usize,
    cfg: &CafConfig,
) -> Result<DMatrix<Complex64>> {
    cfg.validate()?;
    check_window(pair, window_start, cfg)?;
    let len = cfg.batch_len();
    let r = pair.reference().samples();
    let s = pair.surveillance().samples();
    let mut out = DMatrix::zeros(cfg.delay_bins, cfg.batch_count);
    for b in 0..cfg.batch_count {
        let col = batch_correlation(r, s, window_start + b * len, len, cfg.delay_bins);
        for (tau, v) in col.into_iter().enumerate() {
            out[(tau, b)] = v;
        }
    }
    Ok(out)
}

fn surface_from_batches(batches: &DMatrix<Complex64>, cfg: &CafConfig, dft: &DopplerTransform) -> CafSurface {
    let mut values = DMatrix::zeros(cfg.delay_bins, cfg.zero_pad_to);
    for tau in 0..cfg.delay_bins {
        let row: Vec<Complex64> = batches.row(tau).iter().copied().collect();
        for (k, v) in dft.apply(&row).into_iter().enumerate() {
            values[(tau, k)] = v;
        }
    }
    CafSurface {
        values,
        delay_axis_samples: (0..cfg.delay_bins).collect(),
        freq_axis_hz: cfg.freq_axis_hz(),
    }
}

/// CAF of the integration window starting at `window_start`.
pub fn caf_batched(pair: &ChannelPair, window_start: usize, cfg: &CafConfig) -> Result<CafSurface> {
    let batches = batch_correlations(pair, window_start, cfg)?;
    Ok(surface_from_batches(
        &batches,
        cfg,
        &DopplerTransform::new(cfg.zero_pad_to),
    ))
}

/// Magnitude of one delay row of the CAF.
pub fn doppler_slice(surface: &CafSurface, delay_bin: usize) -> Result<Vec<f64>> {
    if delay_bin >= surface.values.nrows() {
        return Err(Error::invalid(format!(
            "delay bin {delay_bin} out of range 0..{}",
            surface.values.nrows()
        )));
    }
    Ok(surface.values.row(delay_bin).iter().map(|c| c.norm()).collect())
}

/// Slides the integration window across the recording and stacks one Doppler
/// slice per window.
///
/// Consecutive windows share batches whenever the hop is a multiple of the
/// batch length, so batch correlations are computed once per distinct batch.
pub fn spectrogram(
    pair: &ChannelPair,
    cfg: &CafConfig,
    delay_selector: DelaySelector,
) -> Result<DopplerSpectrogram> {
    cfg.validate()?;
    if (pair.sample_rate_hz() - cfg.sample_rate_hz).abs() > 1e-9 * cfg.sample_rate_hz {
        return Err(Error::invalid(format!(
            "recording sampled at {} Hz but CAF configured for {} Hz",
            pair.sample_rate_hz(),
            cfg.sample_rate_hz
        )));
    }
    if let DelaySelector::Fixed(d) = delay_selector {
        if d >= cfg.delay_bins {
            return Err(Error::invalid(format!(
                "fixed delay {d} outside 0..{}",
                cfg.delay_bins
            )));
        }
    }
    let windows = cfg.window_count(pair.len());
    if windows == 0 {
        return Err(Error::invalid(format!(
            "recording of {:.3} s shorter than one {:.3} s integration window",
            pair.duration_s(),
            cfg.integration_s
        )));
    }

    let len = cfg.batch_len();
    let hop = cfg.hop_samples();
    let starts: Vec<usize> = {
        let mut s: Vec<usize> = (0..windows)
            .flat_map(|w| (0..cfg.batch_count).map(move |b| w * hop + b * len))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let r = pair.reference().samples();
    let s = pair.surveillance().samples();
    let cache: BTreeMap<usize, Vec<Complex64>> = starts
        .par_iter()
        .map(|&p| (p, batch_correlation(r, s, p, len, cfg.delay_bins)))
        .collect();

    let dft = DopplerTransform::new(cfg.zero_pad_to);
    let mut values = DMatrix::zeros(cfg.zero_pad_to, windows);
    let mut delays = Vec::with_capacity(windows);
    for w in 0..windows {
        let mut batches = DMatrix::zeros(cfg.delay_bins, cfg.batch_count);
        for b in 0..cfg.batch_count {
            for (tau, v) in cache[&(w * hop + b * len)].iter().enumerate() {
                batches[(tau, b)] = *v;
            }
        }
        let delay = match delay_selector {
            DelaySelector::Fixed(d) => d,
            // Slice energy equals batch energy under the unitary transform.
            DelaySelector::Argmax => {
                let mut best = 0;
                let mut best_energy = f64::NEG_INFINITY;
                for tau in 0..cfg.delay_bins {
                    let e: f64 = batches.row(tau).iter().map(|c| c.norm_sqr()).sum();
                    if e > best_energy {
                        best_energy = e;
                        best = tau;
                    }
                }
                best
            }
        };
        let row: Vec<Complex64> = batches.row(delay).iter().copied().collect();
        for (k, v) in dft.apply(&row).into_iter().enumerate() {
            values[(k, w)] = v.norm();
        }
        delays.push(delay);
    }

    Ok(DopplerSpectrogram {
        values,
        freq_axis_hz: cfg.freq_axis_hz(),
        hop_s: cfg.hop_s,
        source_channel: None,
        delays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::IqWaveform;
    use std::f64::consts::PI;

    fn noise(n: usize, seed: u64) -> Vec<Complex32> {
        crate::sim::gen_wifi_baseband(n as f64, 1.0, seed)
            .unwrap()
            .into_samples()
    }

    fn pair_from(reference: Vec<Complex32>, surveillance: Vec<Complex32>, fs: f64) -> ChannelPair {
        ChannelPair::new(
            IqWaveform::new(reference, fs).unwrap(),
            IqWaveform::new(surveillance, fs).unwrap(),
        )
        .unwrap()
    }

    fn small_cfg() -> CafConfig {
        CafConfig {
            sample_rate_hz: 2000.0,
            integration_s: 0.4,
            hop_s: 0.04,
            batch_count: 20,
            zero_pad_to: 51,
            delay_bins: 8,
        }
    }

    #[test]
    fn default_axis() {
        let cfg = CafConfig::default();
        cfg.validate().unwrap();
        let axis = cfg.freq_axis_hz();
        assert_eq!(axis.len(), 51);
        assert_eq!(axis[25], 0.0);
        assert!((cfg.prf_hz() - 50.0).abs() < 1e-12);
        assert!((cfg.bin_spacing_hz() - 50.0 / 51.0).abs() < 1e-12);
        assert!((axis[0] + axis[50]).abs() < 1e-12);
        assert_eq!(cfg.batch_len(), 40_000);
        assert_eq!(cfg.hop_samples(), 80_000);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CafConfig::default();
        cfg.batch_count = 21;
        assert!(cfg.validate().is_err());
        let mut cfg = CafConfig::default();
        cfg.zero_pad_to = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = CafConfig::default();
        cfg.hop_s = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn window_count_matches_time_bins() {
        let cfg = CafConfig::default();
        assert_eq!(cfg.window_count((2.36 * 2e6) as usize), 50);
        assert_eq!(cfg.window_count(799_999), 0);
        assert_eq!(cfg.window_count(800_000), 1);
    }

    #[test]
    fn autocorrelation_peak_at_origin() {
        let cfg = small_cfg();
        let x = noise(800, 1);
        let pair = pair_from(x.clone(), x, cfg.sample_rate_hz);
        let surface = caf_batched(&pair, 0, &cfg).unwrap();
        assert_eq!(surface.argmax(), (0, cfg.dc_bin()));
        let slice = doppler_slice(&surface, 0).unwrap();
        let peak = slice[cfg.dc_bin()];
        assert!(slice
            .iter()
            .enumerate()
            .all(|(k, v)| k == cfg.dc_bin() || *v < peak));
    }

    #[test]
    fn delayed_shifted_copy_localizes() {
        let cfg = small_cfg();
        let fs = cfg.sample_rate_hz;
        let x = noise(1200, 2);
        let sur: Vec<Complex32> = (0..x.len())
            .map(|n| {
                if n < 2 {
                    Complex32::new(0.0, 0.0)
                } else {
                    let ph = 2.0 * PI * 10.0 * n as f64 / fs;
                    x[n - 2] * Complex32::new(ph.cos() as f32, ph.sin() as f32)
                }
            })
            .collect();
        let pair = pair_from(x, sur, fs);
        let surface = caf_batched(&pair, 100, &cfg).unwrap();
        let (d, f) = surface.argmax();
        assert_eq!(d, 2);
        assert!((surface.freq_axis_hz[f] - 10.0).abs() <= cfg.bin_spacing_hz());
        let right = doppler_slice(&surface, 2).unwrap();
        let wrong = doppler_slice(&surface, 5).unwrap();
        let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        assert!(max(&wrong) < max(&right) / 3.0);
    }

    #[test]
    fn zero_surveillance_gives_zero_slice() {
        let cfg = small_cfg();
        let x = noise(800, 3);
        let pair = pair_from(x, vec![Complex32::new(0.0, 0.0); 800], cfg.sample_rate_hz);
        let surface = caf_batched(&pair, 0, &cfg).unwrap();
        assert!(doppler_slice(&surface, 3).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn out_of_range_requests() {
        let cfg = small_cfg();
        let x = noise(800, 3);
        let pair = pair_from(x.clone(), x, cfg.sample_rate_hz);
        assert!(caf_batched(&pair, 1, &cfg).is_err());
        let surface = caf_batched(&pair, 0, &cfg).unwrap();
        assert!(doppler_slice(&surface, 8).is_err());
        let short = pair_from(noise(700, 1), noise(700, 2), cfg.sample_rate_hz);
        assert!(spectrogram(&short, &cfg, DelaySelector::Argmax).is_err());
        assert!(spectrogram(&pair, &cfg, DelaySelector::Fixed(8)).is_err());
    }

    #[test]
    fn parseval_column_energy() {
        let cfg = small_cfg();
        let x = noise(2000, 4);
        let y = noise(2000, 5);
        let pair = pair_from(x, y, cfg.sample_rate_hz);
        let spec = spectrogram(&pair, &cfg, DelaySelector::Fixed(3)).unwrap();
        for (w, col) in spec.values.column_iter().enumerate() {
            let batches = batch_correlations(&pair, w * cfg.hop_samples(), &cfg).unwrap();
            let e_batch: f64 = batches.row(3).iter().map(|c| c.norm_sqr()).sum();
            let e_col: f64 = col.iter().map(|v| v * v).sum();
            assert!((e_col - e_batch).abs() <= 1e-6 * e_batch);
        }
    }

    #[test]
    fn spectrogram_columns_match_single_windows() {
        let cfg = small_cfg();
        let x = noise(1500, 6);
        let pair = pair_from(x.clone(), x, cfg.sample_rate_hz);
        let spec = spectrogram(&pair, &cfg, DelaySelector::Argmax).unwrap();
        assert_eq!(spec.n_time(), cfg.window_count(1500));
        for w in 0..spec.n_time() {
            let surface = caf_batched(&pair, w * cfg.hop_samples(), &cfg).unwrap();
            let slice = doppler_slice(&surface, spec.delays[w]).unwrap();
            for (a, b) in slice.iter().zip(spec.values.column(w).iter()) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            assert_eq!(spec.delays[w], 0);
        }
    }
}
