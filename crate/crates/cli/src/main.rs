use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use wimd_core::align::{align, AlignedSignature};
use wimd_core::experiment::{
    self, build_dataset, evaluate, extract_spectrogram, fit_models, noise_sweep, split_dataset, split_seed,
    synthesize_recording, write_reports, TrainedModels,
};
use wimd_core::io::{self, ManifestEntry, RecordingMeta};
use wimd_core::{Channel, ChannelPair, ExperimentConfig, IqWaveform, LabeledSample, MotionClass, Partition, SignatureDataset};

#[derive(Parser)]
#[command(name = "wimd", version, about = "Passive Wi-Fi micro-Doppler activity recognition")]
struct Cli {
    /// Experiment configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Restrict processing to one receiver channel.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    channel: Option<u8>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one recording as reference/surveillance IQ files.
    Simulate {
        #[arg(long)]
        class: MotionClass,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Receiver noise power; defaults to the configured scene.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Compute the time-Doppler spectrogram of a recording sidecar.
    Extract { recording: PathBuf },
    /// Detect, crop and resample a spectrogram CSV into a signature.
    Align { spectrogram: PathBuf },
    /// Build signatures for every configured recording and write a manifest.
    Dataset,
    /// Split a manifest and fit PCA, the SRC dictionary and the SVM baseline.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score trained models on their test split, or run the whole protocol.
    Evaluate {
        /// Directory written by `train`; without it the full protocol runs from scratch.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Also repeat the protocol at every configured noise level.
        #[arg(long)]
        sweep: bool,
    },
    /// Convert a signature blob or spectrogram CSV to PGM or CSV.
    Export {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Pgm)]
        format: ExportFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Pgm,
    Csv,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    if let Some(ch) = cli.channel {
        cfg.channels = vec![Channel::try_from(ch)?];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `dir/name` with `suffix` replacing everything after the first dot of the file name.
fn derived(path: &Path, dir: &Path, suffix: &str) -> PathBuf {
    let name = file_name(path);
    let stem = name.split('.').next().unwrap_or("out");
    dir.join(format!("{stem}{suffix}"))
}

fn simulate(cli: &Cli, cfg: &ExperimentConfig, class: MotionClass, index: usize, noise: Option<f64>) -> Result<()> {
    let noise = noise.unwrap_or(cfg.scene.noise_power);
    for &ch in &cfg.channels {
        let rec = synthesize_recording(cfg, class, index, ch, noise)?;
        let stem = format!("{class}_{index:03}_ch{ch}");
        let ref_file = format!("{stem}_ref.iq");
        let sur_file = format!("{stem}_sur.iq");
        io::write_iq(&cli.out_dir.join(&ref_file), rec.pair.reference().samples())?;
        io::write_iq(&cli.out_dir.join(&sur_file), rec.pair.surveillance().samples())?;
        let meta_path = cli.out_dir.join(format!("{stem}.json"));
        io::write_json(
            &meta_path,
            &RecordingMeta {
                sample_rate_hz: rec.pair.sample_rate_hz(),
                carrier_hz: cfg.scene.carrier_hz,
                label: class,
                seed: rec.seed,
                channel: Some(ch),
                n_samples: rec.pair.len(),
                reference_file: ref_file,
                surveillance_file: sur_file,
            },
        )?;
        println!(
            "{}: subject {}, motion {:.2} s from {:.2} s",
            meta_path.display(),
            rec.subject,
            rec.profile.duration_s,
            rec.onset_s
        );
    }
    Ok(())
}

fn extract(cli: &Cli, cfg: &ExperimentConfig, meta_path: &Path) -> Result<()> {
    let meta: RecordingMeta = io::read_json(meta_path)?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let load = |f: &str| -> Result<IqWaveform> {
        Ok(IqWaveform::new(io::read_iq(&dir.join(f))?, meta.sample_rate_hz)?)
    };
    let pair = ChannelPair::new(load(&meta.reference_file)?, load(&meta.surveillance_file)?)?;
    let mut cfg = cfg.clone();
    cfg.caf.sample_rate_hz = meta.sample_rate_hz;
    let channel = meta.channel.unwrap_or(Channel::One);
    let spec = extract_spectrogram(&cfg, &pair, channel)?;
    let csv = derived(meta_path, &cli.out_dir, ".spec.csv");
    io::write_spectrogram(&csv, &spec, Some(meta.label), Some(file_name(meta_path)))?;
    io::write_pgm(&derived(meta_path, &cli.out_dir, ".spec.pgm"), &spec.values)?;
    println!("{}: {} Doppler bins x {} windows", csv.display(), spec.n_freq(), spec.n_time());
    Ok(())
}

fn align_cmd(cli: &Cli, cfg: &ExperimentConfig, spec_path: &Path) -> Result<()> {
    let (spec, meta) = io::read_spectrogram(spec_path)?;
    let (mut sig, bounds) = align(&spec, &cfg.align)?;
    sig.label = meta.label;
    sig.channel = spec.source_channel;
    let out = derived(spec_path, &cli.out_dir, ".sig.f32");
    io::write_signature(&out, &sig, Some(file_name(spec_path)))?;
    io::write_pgm(&derived(spec_path, &cli.out_dir, ".sig.pgm"), sig.matrix())?;
    println!(
        "{}: motion in time bins {}..={}",
        out.display(),
        bounds.start_bin,
        bounds.end_bin
    );
    Ok(())
}

fn dataset(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let mut entries = Vec::new();
    for &ch in &cfg.channels {
        let ds = build_dataset(cfg, ch)?;
        for s in ds.samples() {
            let rel = format!("signatures/ch{ch}/{}_{:016x}.f32", s.label, s.seed);
            let sig = AlignedSignature::from_vector(s.vector.clone(), Some(s.label), Some(ch))?;
            io::write_signature(&cli.out_dir.join(&rel), &sig, None)?;
            entries.push(ManifestEntry {
                label: s.label,
                channel: ch,
                seed: s.seed,
                path: rel,
            });
        }
        info!("channel {ch}: {} signatures", ds.len());
    }
    let manifest = cli.out_dir.join("manifest.ndjson");
    io::write_manifest(&manifest, &entries)?;
    println!("{}: {} signatures", manifest.display(), entries.len());
    Ok(())
}

fn load_manifest(path: &Path, channel: Channel) -> Result<Vec<(ManifestEntry, LabeledSample)>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    io::read_manifest(path)?
        .into_iter()
        .filter(|e| e.channel == channel)
        .map(|e| {
            let sig = io::read_signature(&dir.join(&e.path))?;
            let sample = LabeledSample {
                vector: sig.into_vector(),
                label: e.label,
                channel: e.channel,
                seed: e.seed,
            };
            Ok((e, sample))
        })
        .collect()
}

/// `target` relative to `base`; both absolute.
fn relative_to(target: &Path, base: &Path) -> PathBuf {
    let t: Vec<_> = target.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c);
    }
    out
}

/// Rewrites manifest paths so they resolve from `to`.
fn rebase(entries: &[ManifestEntry], from: &Path, to: &Path) -> Result<Vec<ManifestEntry>> {
    let from = std::path::absolute(from)?;
    let to = std::path::absolute(to)?;
    Ok(entries
        .iter()
        .map(|e| ManifestEntry {
            path: relative_to(&from.join(&e.path), &to).to_string_lossy().into_owned(),
            ..e.clone()
        })
        .collect())
}

fn models_dir(root: &Path, ch: Channel) -> PathBuf {
    root.join(format!("ch{ch}"))
}

fn train(cli: &Cli, cfg: &ExperimentConfig, manifest: Option<&Path>) -> Result<()> {
    let manifest = manifest
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out_dir.join("manifest.ndjson"));
    let manifest_dir = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    for &ch in &cfg.channels {
        let rows = load_manifest(&manifest, ch)?;
        if rows.is_empty() {
            warn!("{}: no channel {ch} signatures, skipped", manifest.display());
            continue;
        }
        let (entries, samples): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let ds = SignatureDataset::new(samples, Partition::Full)?;
        let (train_ds, test_ds) = split_dataset(&ds, cfg.train_fraction, split_seed(cfg))?;
        let models = fit_models(&train_ds, &cfg.classifier)?;

        let dir = models_dir(&cli.out_dir.join("models"), ch);
        io::save_pca(&dir.join("pca.bin"), &models.pca)?;
        io::save_dictionary(&dir.join("dictionary.bin"), &models.dictionary)?;
        io::save_svm(&dir.join("svm.bin"), &models.svm)?;
        let pick = |part: &SignatureDataset| -> Vec<ManifestEntry> {
            part.samples()
                .iter()
                .filter_map(|s| entries.iter().find(|e| e.seed == s.seed && e.label == s.label).cloned())
                .collect()
        };
        io::write_manifest(&dir.join("train.ndjson"), &rebase(&pick(&train_ds), &manifest_dir, &dir)?)?;
        io::write_manifest(&dir.join("test.ndjson"), &rebase(&pick(&test_ds), &manifest_dir, &dir)?)?;
        println!(
            "{}: {} training / {} test signatures, {} principal components",
            dir.display(),
            train_ds.len(),
            test_ds.len(),
            models.pca.n_components()
        );
    }
    Ok(())
}

fn evaluate_models(cli: &Cli, cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut reports = Vec::new();
    for &ch in &cfg.channels {
        let dir = models_dir(root, ch);
        if !dir.exists() {
            warn!("{}: no models for channel {ch}", dir.display());
            continue;
        }
        let pca = io::load_pca(&dir.join("pca.bin"))?;
        let dictionary = io::load_dictionary(&dir.join("dictionary.bin"))?;
        let svm = io::load_svm(&dir.join("svm.bin"))?;
        let sparsity = cfg.classifier.sparsity.min(dictionary.dim()).min(dictionary.n_atoms());
        let models = TrainedModels {
            pca,
            dictionary,
            svm,
            sparsity,
        };
        let samples = load_manifest(&dir.join("test.ndjson"), ch)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let test = SignatureDataset::new(samples, Partition::Test)?;
        reports.extend(evaluate(&models, &test, ch, cfg.rng_seed)?);
    }
    if reports.is_empty() {
        bail!("no trained models found under {}", root.display());
    }
    write_reports(&cli.out_dir, &reports)?;
    print!("{}", experiment::render_text(&reports));
    Ok(())
}

fn evaluate_cmd(cli: &Cli, cfg: &ExperimentConfig, models: Option<&Path>, sweep: bool) -> Result<()> {
    if let Some(root) = models {
        evaluate_models(cli, cfg, root)?;
    } else {
        let cfg = ExperimentConfig {
            out_dir: Some(cli.out_dir.clone()),
            ..cfg.clone()
        };
        let reports = experiment::run_experiment(&cfg)?;
        print!("{}", experiment::render_text(&reports));
    }
    if sweep {
        let levels = noise_sweep(cfg)?;
        let path = cli.out_dir.join("noise_sweep.csv");
        std::fs::write(&path, wimd_core::report::sweep_csv(&levels))
            .with_context(|| format!("writing {}", path.display()))?;
        for (noise, reports) in &levels {
            for r in reports {
                println!("noise {noise}: {} ch{} {:.1}%", r.classifier, r.channel, 100.0 * r.average);
            }
        }
    }
    Ok(())
}

fn export(input: &Path, format: ExportFormat, output: Option<&Path>) -> Result<()> {
    let name = file_name(input);
    let matrix = if name.ends_with(".f32") {
        io::read_signature(input)?.matrix().clone()
    } else if name.ends_with(".csv") {
        io::read_matrix_csv(input)?
    } else {
        bail!("{}: expected a .f32 signature or a .csv matrix", input.display());
    };
    let ext = match format {
        ExportFormat::Pgm => "pgm",
        ExportFormat::Csv => "csv",
    };
    let out = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.with_extension(ext));
    if out == input {
        bail!("{}: refusing to overwrite the input", out.display());
    }
    match format {
        ExportFormat::Pgm => io::write_pgm(&out, &matrix)?,
        ExportFormat::Csv => io::write_matrix_csv(&out, &matrix)?,
    }
    println!("{}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate { class, index, noise } => simulate(cli, &cfg, *class, *index, *noise),
        Command::Extract { recording } => extract(cli, &cfg, recording),
        Command::Align { spectrogram } => align_cmd(cli, &cfg, spectrogram),
        Command::Dataset => dataset(cli, &cfg),
        Command::Train { manifest } => train(cli, &cfg, manifest.as_deref()),
        Command::Evaluate { models, sweep } => evaluate_cmd(cli, &cfg, models.as_deref(), *sweep),
        Command::Export {
            input,
            format,
            output,
        } => export(input, *format, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
