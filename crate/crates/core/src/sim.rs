//! Wi-Fi-like baseband generation and two-channel passive radar scene simulation.
//!
//! The transmitted signal is modelled as a unit-modulus QPSK chip stream.
//! A single point scatterer carries the whole body motion; its radial velocity
//! history comes from one of six activity templates, performed in the personal
//! style of one of [`SUBJECT_COUNT`] simulated subjects.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Channel, MotionClass};

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;
/// Centre frequency of the illuminating access point (channel 11).
pub const DEFAULT_CARRIER_HZ: f64 = 2.462e9;
/// Upper bound on the speed of everyday indoor motions.
pub const MAX_HUMAN_SPEED_MPS: f64 = 2.0;
/// Observed range of per-activity peak Doppler at the default carrier.
pub const PEAK_DOPPLER_RANGE_HZ: (f64, f64) = (2.5, 4.5);
/// Sampling density of [`MotionProfile::velocity_samples`].
pub const VELOCITY_RATE_HZ: f64 = 200.0;

/// Number of simulated performers.
pub const SUBJECT_COUNT: u32 = 4;

const MIN_DURATION_S: f64 = 0.5;
const MAX_DURATION_S: f64 = 10.0;

/// Complex baseband sample stream.
#[derive(Debug, Clone, PartialEq)]
pub struct IqWaveform {
    samples: Vec<Complex32>,
    sample_rate_hz: f64,
}

impl IqWaveform {
    pub fn new(samples: Vec<Complex32>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform has no samples"));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean of |x|² over all samples.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr() as f64).sum::<f64>() / self.samples.len() as f64
    }

    pub fn into_samples(self) -> Vec<Complex32> {
        self.samples
    }
}

/// Synchronized reference and surveillance receive channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    reference: IqWaveform,
    surveillance: IqWaveform,
}

impl ChannelPair {
    pub fn new(reference: IqWaveform, surveillance: IqWaveform) -> Result<Self> {
        if reference.len() != surveillance.len() {
            return Err(Error::invalid(format!(
                "channel lengths differ: reference {} vs surveillance {}",
                reference.len(),
                surveillance.len()
            )));
        }
        if reference.sample_rate_hz != surveillance.sample_rate_hz {
            return Err(Error::invalid("channel sample rates differ"));
        }
        Ok(Self {
            reference,
            surveillance,
        })
    }

    pub fn reference(&self) -> &IqWaveform {
        &self.reference
    }

    pub fn surveillance(&self) -> &IqWaveform {
        &self.surveillance
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.reference.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.reference.duration_s()
    }
}

/// Radial velocity history of one activity as seen by one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub label: MotionClass,
    pub duration_s: f64,
    /// Uniform samples over `[0, duration_s]`, endpoints included.
    pub velocity_samples: Vec<f64>,
    /// False when the moving body shadows the direct path to this receiver.
    pub dsi_visible: bool,
    /// Amplitude scale applied to the target echo.
    pub channel_gain: f64,
    /// Projection factor applied to the velocity before it becomes Doppler.
    pub doppler_scale: f64,
}

impl MotionProfile {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&self.duration_s) {
            return Err(Error::invalid(format!(
                "motion duration {} s outside [{MIN_DURATION_S}, {MAX_DURATION_S}] s",
                self.duration_s
            )));
        }
        if self.velocity_samples.len() < 2 {
            return Err(Error::invalid("velocity profile needs at least two samples"));
        }
        if let Some(v) = self
            .velocity_samples
            .iter()
            .find(|v| !v.is_finite() || v.abs() > MAX_HUMAN_SPEED_MPS)
        {
            return Err(Error::invalid(format!(
                "velocity {v} m/s exceeds the {MAX_HUMAN_SPEED_MPS} m/s bound"
            )));
        }
        if !(self.channel_gain >= 0.0 && self.doppler_scale.is_finite()) {
            return Err(Error::invalid("channel gain and Doppler scale must be finite, gain >= 0"));
        }
        Ok(())
    }

    /// Linear interpolation of the velocity at `t` seconds after onset; zero outside the motion.
    pub fn velocity_at(&self, t: f64) -> f64 {
        if !(0.0..=self.duration_s).contains(&t) {
            return 0.0;
        }
        let last = self.velocity_samples.len() - 1;
        let pos = t / self.duration_s * last as f64;
        let i = (pos.floor() as usize).min(last - 1);
        let frac = pos - i as f64;
        self.velocity_samples[i] * (1.0 - frac) + self.velocity_samples[i + 1] * frac
    }

    pub fn peak_speed(&self) -> f64 {
        self.velocity_samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Number of sign changes between consecutive nonzero velocity samples.
    pub fn zero_crossings(&self) -> usize {
        self.sign_pattern().len().saturating_sub(1)
    }

    /// Run-length encoded signs of the nonzero velocity samples, e.g. `[-1, 1]`.
    pub fn sign_pattern(&self) -> Vec<i8> {
        let mut out: Vec<i8> = Vec::new();
        for &v in &self.velocity_samples {
            let s = if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                continue;
            };
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    /// Adapts a channel-1 profile to the given receiver geometry.
    pub fn for_channel(mut self, channel: Channel) -> Self {
        match channel {
            Channel::One => {
                self.channel_gain = 1.0;
                self.doppler_scale = 1.0;
                self.dsi_visible = self.label != MotionClass::M6;
            }
            Channel::Two => {
                self.channel_gain = CHANNEL2_GAIN;
                self.doppler_scale = CHANNEL2_DOPPLER_SCALE;
                self.dsi_visible = true;
            }
        }
        self
    }
}

/// Echo amplitude factor of the bistatic receiver relative to the quasi-monostatic one.
pub const CHANNEL2_GAIN: f64 = 0.7;
/// Doppler projection factor of the bistatic receiver.
pub const CHANNEL2_DOPPLER_SCALE: f64 = 0.8;

/// Scene parameters for [`simulate_channels`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub carrier_hz: f64,
    /// Direct-signal power in the surveillance channel (linear).
    pub dsi_power: f64,
    /// Target echo power (linear), before the per-channel gain.
    pub echo_power: f64,
    /// Receiver noise power per channel (linear).
    pub noise_power: f64,
    pub echo_delay_samples: usize,
    /// Time from the start of the recording to the start of the motion.
    pub motion_onset_s: f64,
    /// Keep the echo while the target stands still. When false the echo
    /// exists only during the motion and the stationary body return is
    /// treated as part of the zero-Doppler background.
    pub static_echo: bool,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            carrier_hz: DEFAULT_CARRIER_HZ,
            dsi_power: 1.0,
            // 20 dB below the direct signal.
            echo_power: 0.01,
            noise_power: 1.0,
            echo_delay_samples: 0,
            motion_onset_s: 0.0,
            static_echo: true,
            rng_seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        if !(self.dsi_power >= 0.0 && self.echo_power >= 0.0) {
            return Err(Error::invalid("signal powers must be non-negative"));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::invalid("noise power must be positive"));
        }
        if !(self.motion_onset_s >= 0.0) {
            return Err(Error::invalid("motion onset must be non-negative"));
        }
        Ok(())
    }
}

/// Two-way Doppler shift for a radial speed `v` (positive = approaching).
pub fn doppler_from_velocity(v: f64, carrier_hz: f64) -> f64 {
    2.0 * v * carrier_hz / SPEED_OF_LIGHT_MPS
}

/// Inverse of [`doppler_from_velocity`].
pub fn velocity_from_doppler(doppler_hz: f64, carrier_hz: f64) -> f64 {
    doppler_hz * SPEED_OF_LIGHT_MPS / (2.0 * carrier_hz)
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex32 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex32::new((re * FRAC_1_SQRT_2) as f32, (im * FRAC_1_SQRT_2) as f32)
}

fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unit-modulus QPSK chip stream, one chip per sample, standing in for the
/// constant-envelope DSSS transmissions of 2.4 GHz Wi-Fi.
pub fn gen_wifi_baseband(duration_s: f64, sample_rate_hz: f64, seed: u64) -> Result<IqWaveform> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::invalid(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::invalid("duration shorter than one sample"));
    }
    let mut rng = noise_rng(seed, 0);
    let samples = (0..n)
        .map(|_| {
            let quadrant = rng.random_range(0..4u8) as f64;
            Complex32::from_polar(1.0, (FRAC_PI_4 + quadrant * FRAC_PI_2) as f32)
        })
        .collect();
    IqWaveform::new(samples, sample_rate_hz)
}

/// A half-sine velocity lobe `amp * sin` spanning the normalized interval `[a, b]`.
#[derive(Clone, Copy)]
struct Lobe {
    a: f64,
    b: f64,
    amp: f64,
    /// Exponent warping the lobe in time; values below 1 push the peak earlier.
    skew: f64,
}

impl Lobe {
    fn eval(&self, u: f64) -> f64 {
        if u < self.a || u > self.b {
            return 0.0;
        }
        let x = ((u - self.a) / (self.b - self.a)).powf(self.skew);
        self.amp * (PI * x).sin()
    }
}

struct Template {
    duration_s: (f64, f64),
    peak_doppler_hz: (f64, f64),
    /// Lobes with signed relative amplitudes; the largest magnitude is 1.
    lobes: fn(split: f64) -> Vec<Lobe>,
    /// Nominal normalized time where the first lobe ends.
    split: f64,
}

fn template(label: MotionClass) -> Template {
    fn lobe(a: f64, b: f64, amp: f64) -> Lobe {
        Lobe { a, b, amp, skew: 1.0 }
    }
    match label {
        // bend down (approach), then rise while stepping back
        MotionClass::M1 => Template {
            duration_s: (2.6, 3.2),
            peak_doppler_hz: (3.2, 3.9),
            lobes: |s| vec![lobe(0.0, s, 0.8), lobe(s, 1.0, -1.0)],
            split: 0.45,
        },
        // long receding descent, short positive settle
        MotionClass::M2 => Template {
            duration_s: (1.4, 1.8),
            peak_doppler_hz: (2.9, 3.6),
            lobes: |s| vec![lobe(0.0, s, -1.0), lobe(s, 1.0, 0.55)],
            split: 0.7,
        },
        // short lean back, long positive rise
        MotionClass::M3 => Template {
            duration_s: (2.0, 2.4),
            peak_doppler_hz: (3.0, 3.7),
            lobes: |s| vec![lobe(0.0, s, -0.6), lobe(s, 1.0, 1.0)],
            split: 0.35,
        },
        // fast single-signed fall
        MotionClass::M4 => Template {
            duration_s: (0.8, 1.1),
            peak_doppler_hz: (3.9, 4.4),
            lobes: |_| {
                vec![Lobe {
                    a: 0.0,
                    b: 1.0,
                    amp: 1.0,
                    skew: 1.6,
                }]
            },
            split: 1.0,
        },
        // slow single-signed recovery
        MotionClass::M5 => Template {
            duration_s: (2.4, 2.8),
            peak_doppler_hz: (2.6, 3.2),
            lobes: |_| vec![lobe(0.0, 1.0, -1.0)],
            split: 1.0,
        },
        // roll over then get out of bed, both receding
        MotionClass::M6 => Template {
            duration_s: (3.2, 3.8),
            peak_doppler_hz: (2.8, 3.5),
            lobes: |s| vec![lobe(0.0, s, -0.5), lobe(s, 1.0, -1.0)],
            split: 0.3,
        },
    }
}

/// How one subject performs one activity.
struct Style {
    speed: f64,
    tempo: f64,
    skew: [f64; 2],
    split_shift: f64,
    secondary_gain: f64,
}

fn style(label: MotionClass, subject: u32) -> Style {
    let mut rng = noise_rng(0x5354_594c_4500 ^ ((label.index() as u64) << 8) ^ subject as u64, 9);
    Style {
        speed: rng.random_range(0.9..=1.1),
        tempo: rng.random_range(0.85..=1.2),
        skew: [rng.random_range(0.6..=1.6), rng.random_range(0.6..=1.6)],
        split_shift: rng.random_range(-0.08..=0.08),
        secondary_gain: rng.random_range(0.7..=1.3),
    }
}

/// Draws a velocity template for `label` as seen by channel 1, performed by
/// subject `seed % SUBJECT_COUNT`.
pub fn motion_profile(label: MotionClass, seed: u64) -> MotionProfile {
    motion_profile_for_subject(label, (seed % SUBJECT_COUNT as u64) as u32, seed)
}

/// Draws a velocity template for `label` as performed by `subject`.
///
/// Each subject has a fixed tempo, speed, lobe timing and lobe shape per
/// activity; `seed` adds a small per-repetition jitter on top.
pub fn motion_profile_for_subject(label: MotionClass, subject: u32, seed: u64) -> MotionProfile {
    let t = template(label);
    let st = style(label, subject);
    let mut rng = noise_rng(seed, 7);
    let duration_s = (rng.random_range(t.duration_s.0..=t.duration_s.1) * st.tempo)
        .clamp(MIN_DURATION_S, MAX_DURATION_S);
    let peak_hz = (rng.random_range(t.peak_doppler_hz.0..=t.peak_doppler_hz.1) * st.speed)
        .clamp(PEAK_DOPPLER_RANGE_HZ.0, PEAK_DOPPLER_RANGE_HZ.1);
    let split = if t.split < 1.0 {
        (t.split + st.split_shift + rng.random_range(-0.02..=0.02)).clamp(0.15, 0.85)
    } else {
        t.split
    };
    let peak_v = velocity_from_doppler(peak_hz, DEFAULT_CARRIER_HZ);
    let mut lobes = (t.lobes)(split);
    for (i, lobe) in lobes.iter_mut().enumerate() {
        lobe.skew *= st.skew[i.min(1)] * rng.random_range(0.9..=1.1);
        if lobe.amp.abs() < 1.0 {
            lobe.amp = (lobe.amp * st.secondary_gain).clamp(-1.0, 1.0);
        }
    }

    let n = (duration_s * VELOCITY_RATE_HZ).round() as usize + 1;
    let velocity_samples = (0..n)
        .map(|k| {
            let u = k as f64 / (n - 1) as f64;
            peak_v * lobes.iter().map(|l| l.eval(u)).sum::<f64>()
        })
        .collect();

    MotionProfile {
        label,
        duration_s,
        velocity_samples,
        dsi_visible: true,
        channel_gain: 1.0,
        doppler_scale: 1.0,
    }
    .for_channel(Channel::One)
}

/// Synthesizes the reference and surveillance channels for one moving scatterer.
///
/// `reference = w + n_r` and
/// `surveillance = [dsi] √P_dsi·w + g·√P_echo·w(t−τ)·exp(j2πΦ(t)) + n_s`,
/// where `Φ` integrates the Doppler of the (scaled) velocity history and the
/// noise terms are independent complex Gaussians of power `noise_power`.
pub fn simulate_channels(
    waveform: &IqWaveform,
    profile: &MotionProfile,
    cfg: &SceneConfig,
) -> Result<ChannelPair> {
    cfg.validate()?;
    profile.validate()?;
    let n = waveform.len();
    let fs = waveform.sample_rate_hz();
    if cfg.echo_delay_samples >= n {
        return Err(Error::invalid(format!(
            "echo delay {} samples not shorter than waveform ({n} samples)",
            cfg.echo_delay_samples
        )));
    }
    let motion_end = cfg.motion_onset_s + profile.duration_s;
    if motion_end > waveform.duration_s() + 1e-9 {
        return Err(Error::invalid(format!(
            "waveform of {:.3} s cannot hold motion ending at {motion_end:.3} s",
            waveform.duration_s()
        )));
    }

    let w = waveform.samples();
    let noise_amp = cfg.noise_power.sqrt();
    let dsi_amp = if profile.dsi_visible {
        cfg.dsi_power.sqrt()
    } else {
        0.0
    };
    let echo_amp = cfg.echo_power.sqrt() * profile.channel_gain;
    let delay = cfg.echo_delay_samples;

    let mut ref_rng = noise_rng(cfg.rng_seed, 1);
    let reference: Vec<Complex32> = w
        .iter()
        .map(|&x| {
            let nz = complex_normal(&mut ref_rng);
            x + nz * noise_amp as f32
        })
        .collect();

    let mut sur_rng = noise_rng(cfg.rng_seed, 2);
    let mut phase_cycles = 0.0f64;
    let dt = 1.0 / fs;
    let surveillance: Vec<Complex32> = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let v = profile.velocity_at(t - cfg.motion_onset_s) * profile.doppler_scale;
            let fd = doppler_from_velocity(v, cfg.carrier_hz);
            let mut acc = Complex64::new(0.0, 0.0);
            if dsi_amp > 0.0 {
                acc += widen(w[i]) * dsi_amp;
            }
            let present = cfg.static_echo || (t >= cfg.motion_onset_s && t <= motion_end);
            if echo_amp > 0.0 && i >= delay && present {
                let rot = Complex64::from_polar(1.0, 2.0 * PI * phase_cycles);
                acc += widen(w[i - delay]) * rot * echo_amp;
            }
            phase_cycles = (phase_cycles + fd * dt).rem_euclid(1.0);
            let nz = complex_normal(&mut sur_rng);
            Complex32::new(acc.re as f32, acc.im as f32) + nz * noise_amp as f32
        })
        .collect();

    ChannelPair::new(
        IqWaveform::new(reference, fs)?,
        IqWaveform::new(surveillance, fs)?,
    )
}

fn widen(c: Complex32) -> Complex64 {
    Complex64::new(c.re as f64, c.im as f64)
}
