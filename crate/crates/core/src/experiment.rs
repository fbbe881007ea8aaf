//! Dataset synthesis, stratified splitting and the SRC-versus-SVM evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align, AlignConfig};
use crate::caf::{spectrogram, CafConfig, DelaySelector, DopplerSpectrogram};
use crate::dataset::{LabeledSample, Partition, SignatureDataset};
use crate::error::{Error, Result};
use crate::label::{Channel, MotionClass};
use crate::pca::{self, PcaModel, DEFAULT_MAX_COMPONENTS, DEFAULT_VARIANCE_FRACTION};
use crate::report::{self, ClassificationReport, ClassifierKind};
use crate::sim::{
    gen_wifi_baseband, motion_profile_for_subject, simulate_channels, ChannelPair, MotionProfile, SceneConfig, SUBJECT_COUNT,
};
use crate::sparse::{src_classify, Dictionary, DEFAULT_SPARSITY};
use crate::svm::{svm_classify, train_linear_svm, SvmModel, SvmParams};
use crate::io;

/// Quiet time around each motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordingLayout {
    /// Fixed part of the quiet padding before and after the motion.
    pub pad_min_s: f64,
    /// Additional padding per second of motion.
    pub pad_ratio: f64,
    /// Upper bound of the uniform extra delay before the motion starts.
    pub onset_jitter_s: f64,
}

impl Default for RecordingLayout {
    fn default() -> Self {
        Self {
            pad_min_s: 1.0,
            pad_ratio: 1.0,
            onset_jitter_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Sparsity `K` of the subspace pursuit code.
    pub sparsity: usize,
    /// Fixed number of principal components; `None` applies the variance rule.
    pub components: Option<usize>,
    pub variance_fraction: f64,
    pub max_components: usize,
    pub svm: SvmParams,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            sparsity: DEFAULT_SPARSITY,
            components: None,
            variance_fraction: DEFAULT_VARIANCE_FRACTION,
            max_components: DEFAULT_MAX_COMPONENTS,
            svm: SvmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Recordings per activity.
    pub counts: BTreeMap<MotionClass, usize>,
    pub train_fraction: f64,
    pub channels: Vec<Channel>,
    /// Noise powers visited by [`noise_sweep`].
    pub noise_sweep: Vec<f64>,
    pub rng_seed: u64,
    pub caf: CafConfig,
    pub delay_selector: DelaySelector,
    /// Scene template; onset and noise seed are set per recording.
    pub scene: SceneConfig,
    pub recording: RecordingLayout,
    pub align: AlignConfig,
    pub classifier: ClassifierConfig,
    /// Largest tolerated share of recordings without a detectable motion.
    pub max_failure_rate: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let counts = [40, 40, 40, 10, 20, 20];
        Self {
            counts: MotionClass::ALL.into_iter().zip(counts).collect(),
            train_fraction: 0.4,
            channels: vec![Channel::One, Channel::Two],
            noise_sweep: vec![0.05, 0.08, 0.12, 0.18],
            rng_seed: 2016,
            caf: CafConfig {
                // Keeps a full two-channel run to about a minute on one core;
                // every Doppler parameter matches the 2 MHz default.
                sample_rate_hz: 1e5,
                ..CafConfig::default()
            },
            delay_selector: DelaySelector::Argmax,
            scene: SceneConfig {
                // The weighted-std detector only responds to motion when the
                // zero-Doppler line is weaker than the moving echo.
                dsi_power: 1e-3,
                echo_power: 1e-2,
                // Unit noise scaled by the sample-rate ratio to 2 MHz, so a
                // window keeps the post-integration SNR of the full-rate system.
                noise_power: 0.05,
                static_echo: false,
                ..SceneConfig::default()
            },
            recording: RecordingLayout::default(),
            align: AlignConfig::default(),
            classifier: ClassifierConfig::default(),
            max_failure_rate: 0.05,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.caf.validate()?;
        self.scene.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if let Some((c, n)) = self.counts.iter().find(|(_, n)| **n < 2) {
            return Err(Error::invalid(format!("class {c} needs at least 2 samples, has {n}")));
        }
        if self.counts.is_empty() {
            return Err(Error::invalid("no classes configured"));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("no channels configured"));
        }
        if self.classifier.sparsity == 0 {
            return Err(Error::invalid("sparsity must be at least 1"));
        }
        Ok(())
    }

    pub fn total_recordings(&self) -> usize {
        self.counts.values().sum()
    }

    /// Reads TOML or JSON, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of recording `index` of `class`, shared by both channels.
pub fn recording_seed(base: u64, class: MotionClass, index: usize) -> u64 {
    splitmix(splitmix(base ^ 0x5749_4d44) ^ ((class.index() as u64) << 32 | index as u64))
}

/// One simulated recording: the motion, the receiver pair and where the motion sits in time.
pub struct Recording {
    pub seed: u64,
    pub subject: u32,
    pub profile: MotionProfile,
    pub pair: ChannelPair,
    pub onset_s: f64,
}

/// Synthesizes recording `index` of `class` as received on `channel`.
/// Recordings cycle through the simulated subjects.
pub fn synthesize_recording(
    cfg: &ExperimentConfig,
    class: MotionClass,
    index: usize,
    channel: Channel,
    noise_power: f64,
) -> Result<Recording> {
    let seed = recording_seed(cfg.rng_seed, class, index);
    let subject = (index % SUBJECT_COUNT as usize) as u32;
    let profile = motion_profile_for_subject(class, subject, seed).for_channel(channel);
    let layout = &cfg.recording;
    let pad = layout.pad_min_s + layout.pad_ratio * profile.duration_s;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x0A5E7));
    let jitter = if layout.onset_jitter_s > 0.0 {
        rng.random_range(0.0..layout.onset_jitter_s)
    } else {
        0.0
    };
    let onset_s = pad + jitter;
    let total_s = onset_s + profile.duration_s + pad;
    let waveform = gen_wifi_baseband(total_s, cfg.caf.sample_rate_hz, splitmix(seed ^ 0x3A7E))?;
    let scene = SceneConfig {
        motion_onset_s: onset_s,
        noise_power,
        rng_seed: splitmix(seed ^ (0x0C4A_0000 | channel.number() as u64)),
        ..cfg.scene.clone()
    };
    let pair = simulate_channels(&waveform, &profile, &scene)?;
    Ok(Recording {
        seed,
        subject,
        profile,
        pair,
        onset_s,
    })
}

pub fn extract_spectrogram(cfg: &ExperimentConfig, pair: &ChannelPair, channel: Channel) -> Result<DopplerSpectrogram> {
    let mut spec = spectrogram(pair, &cfg.caf, cfg.delay_selector)?;
    spec.source_channel = Some(channel);
    Ok(spec)
}

fn process_one(
    cfg: &ExperimentConfig,
    class: MotionClass,
    index: usize,
    channel: Channel,
    noise_power: f64,
) -> Result<Option<LabeledSample>> {
    let rec = synthesize_recording(cfg, class, index, channel, noise_power)?;
    let seed = rec.seed;
    let spec = extract_spectrogram(cfg, &rec.pair, channel)?;
    match align(&spec, &cfg.align) {
        Ok((mut sig, bounds)) => {
            sig.label = Some(class);
            debug!(
                "{class} #{index} ch{channel}: motion bins {}..={}",
                bounds.start_bin, bounds.end_bin
            );
            Ok(Some(LabeledSample {
                vector: sig.into_vector(),
                label: class,
                channel,
                seed,
            }))
        }
        Err(Error::NoMotionDetected { threshold }) => {
            warn!("{class} #{index} ch{channel}: no motion above {threshold:.4}, skipped");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn build_with_noise(cfg: &ExperimentConfig, channel: Channel, noise_power: f64) -> Result<SignatureDataset> {
    cfg.validate()?;
    let jobs: Vec<(MotionClass, usize)> = cfg
        .counts
        .iter()
        .flat_map(|(&c, &n)| (0..n).map(move |i| (c, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(c, i)| process_one(cfg, c, i, channel, noise_power))
        .collect::<Result<Vec<_>>>()?;
    let total = results.len();
    let samples: Vec<LabeledSample> = results.into_iter().flatten().collect();
    let failed = total - samples.len();
    if failed as f64 >= cfg.max_failure_rate * total as f64 && failed > 0 {
        return Err(Error::DatasetBuild { failed, total });
    }
    info!("channel {channel}: {} signatures ({failed} skipped)", samples.len());
    SignatureDataset::new(samples, Partition::Full)
}

/// Simulates, extracts and aligns every configured recording for one channel.
pub fn build_dataset(cfg: &ExperimentConfig, channel: Channel) -> Result<SignatureDataset> {
    build_with_noise(cfg, channel, cfg.scene.noise_power)
}

/// Number of training samples drawn from a class of `count` samples.
pub fn train_count(count: usize, fraction: f64) -> usize {
    ((count as f64 * fraction).round() as usize).clamp(1, count.saturating_sub(1))
}

/// Stratified split: each class contributes `round(count · fraction)` training
/// samples (at least one, and at least one left for testing).
pub fn split_dataset(ds: &SignatureDataset, fraction: f64, seed: u64) -> Result<(SignatureDataset, SignatureDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let mut by_class: BTreeMap<MotionClass, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} sample(s); splitting needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let k = train_count(idx.len(), fraction);
        let (tr, te) = idx.split_at(k);
        let mut tr = tr.to_vec();
        let mut te = te.to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train_idx.extend(tr);
        test_idx.extend(te);
    }
    let pick = |idx: &[usize], p: Partition| {
        SignatureDataset::new(idx.iter().map(|&i| ds.samples()[i].clone()).collect(), p)
    };
    Ok((pick(&train_idx, Partition::Train)?, pick(&test_idx, Partition::Test)?))
}

/// Everything fitted on the training partition.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub pca: PcaModel,
    pub dictionary: Dictionary,
    pub svm: SvmModel,
    pub sparsity: usize,
}

pub fn fit_models(train: &SignatureDataset, cfg: &ClassifierConfig) -> Result<TrainedModels> {
    let pca = match cfg.components {
        Some(k) => pca::fit_pca(train, k)?,
        None => pca::fit_pca_by_variance(train, cfg.variance_fraction, cfg.max_components)?,
    };
    let reduced = pca.project_dataset(train)?;
    let dictionary = Dictionary::from_dataset(&reduced)?;
    let svm = train_linear_svm(&reduced, &cfg.svm)?;
    let sparsity = cfg.sparsity.min(dictionary.dim()).min(dictionary.n_atoms());
    info!(
        "fitted {} principal components, {} atoms, sparsity {sparsity}",
        pca.n_components(),
        dictionary.n_atoms()
    );
    Ok(TrainedModels {
        pca,
        dictionary,
        svm,
        sparsity,
    })
}

#[derive(Debug, Clone)]
pub struct Predictions {
    pub truth: Vec<MotionClass>,
    pub src: Vec<MotionClass>,
    pub svm: Vec<MotionClass>,
}

pub fn predict(models: &TrainedModels, test: &SignatureDataset) -> Result<Predictions> {
    let reduced: Vec<DVector<f64>> = test
        .samples()
        .iter()
        .map(|s| models.pca.project(&s.vector))
        .collect::<Result<_>>()?;
    let src = reduced
        .par_iter()
        .map(|y| src_classify(&models.dictionary, y, models.sparsity).map(|d| d.class))
        .collect::<Result<Vec<_>>>()?;
    let svm = reduced
        .iter()
        .map(|y| svm_classify(&models.svm, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(Predictions {
        truth: test.labels(),
        src,
        svm,
    })
}

pub fn evaluate(
    models: &TrainedModels,
    test: &SignatureDataset,
    channel: Channel,
    seed: u64,
) -> Result<Vec<ClassificationReport>> {
    let p = predict(models, test)?;
    Ok(vec![
        ClassificationReport::from_predictions(ClassifierKind::Src, channel, seed, &p.truth, &p.src)?,
        ClassificationReport::from_predictions(ClassifierKind::Svm, channel, seed, &p.truth, &p.svm)?,
    ])
}

/// Seed of the stratified train/test split.
pub fn split_seed(cfg: &ExperimentConfig) -> u64 {
    splitmix(cfg.rng_seed ^ 0x5911)
}

/// Split, fit on the training part only, then score the held-out part.
pub fn evaluate_dataset(cfg: &ExperimentConfig, ds: &SignatureDataset, channel: Channel) -> Result<Vec<ClassificationReport>> {
    let (train, test) = split_dataset(ds, cfg.train_fraction, split_seed(cfg))?;
    let models = fit_models(&train, &cfg.classifier)?;
    evaluate(&models, &test, channel, cfg.rng_seed)
}

fn run_at_noise(cfg: &ExperimentConfig, noise_power: f64) -> Result<Vec<ClassificationReport>> {
    let mut reports = Vec::new();
    for &channel in &cfg.channels {
        let ds = build_with_noise(cfg, channel, noise_power)?;
        reports.extend(evaluate_dataset(cfg, &ds, channel)?);
    }
    Ok(reports)
}

/// Files written by [`write_reports`].
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const REPORT_TXT: &str = "report.txt";

pub fn render_text(reports: &[ClassificationReport]) -> String {
    let mut text = report::accuracy_table(reports);
    for r in reports.iter().filter(|r| r.classifier == ClassifierKind::Src) {
        text.push('\n');
        text.push_str(&report::confusion_table(r));
    }
    text
}

pub fn write_reports(dir: &Path, reports: &[ClassificationReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write(ACCURACY_CSV, report::accuracy_csv(reports))?;
    write(CONFUSION_CSV, report::confusion_csv(reports))?;
    write(REPORT_TXT, render_text(reports))?;
    io::write_json(&dir.join("reports.json"), &reports)
}

/// Runs the full protocol on every configured channel and writes the reports
/// to `out_dir` when one is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ClassificationReport>> {
    cfg.validate()?;
    let reports = run_at_noise(cfg, cfg.scene.noise_power)?;
    if let Some(dir) = &cfg.out_dir {
        write_reports(dir, &reports)?;
    }
    Ok(reports)
}

/// Repeats the experiment at every level of `cfg.noise_sweep` with identical seeds.
pub fn noise_sweep(cfg: &ExperimentConfig) -> Result<Vec<(f64, Vec<ClassificationReport>)>> {
    cfg.validate()?;
    cfg.noise_sweep
        .iter()
        .map(|&n| {
            if !(n > 0.0) {
                return Err(Error::invalid(format!("noise level must be positive, got {n}")));
            }
            Ok((n, run_at_noise(cfg, n)?))
        })
        .collect()
}
