//! On-disk formats.
//!
//! | artifact            | layout                                                         |
//! |---------------------|----------------------------------------------------------------|
//! | IQ recording        | interleaved `re, im` float32 little-endian, no header          |
//! | spectrogram         | CSV, one row per Doppler bin (ascending), one column per window |
//! | image               | binary PGM `P5 <cols> <rows> 255\n`, top row = highest Doppler |
//! | signature           | 2550 float32 little-endian values, column-major                |
//! | manifest            | newline-delimited JSON, one object per signature               |
//! | models              | `WIMD` magic, version byte, kind byte, little-endian payload   |
//!
//! Every binary payload has a JSON sidecar with the same stem.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex32;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::align::{AlignedSignature, SIGNATURE_LEN};
use crate::caf::DopplerSpectrogram;
use crate::error::{Error, Result};
use crate::label::{Channel, MotionClass};
use crate::pca::PcaModel;
use crate::sparse::Dictionary;
use crate::svm::{SvmModel, SvmParams};

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// IQ recordings

/// Sidecar of a simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub label: MotionClass,
    pub seed: u64,
    #[serde(default)]
    pub channel: Option<Channel>,
    pub n_samples: usize,
    pub reference_file: String,
    pub surveillance_file: String,
}

pub fn write_iq(path: &Path, samples: &[Complex32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        bytes.extend_from_slice(&s.re.to_le_bytes());
        bytes.extend_from_slice(&s.im.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

pub fn read_iq(path: &Path) -> Result<Vec<Complex32>> {
    let bytes = read_bytes(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(
            path,
            format!("{} bytes is not a whole number of complex32 samples", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Matrices, spectrograms, images

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_bytes(path, matrix_to_csv(m).as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::format(path, "empty or ragged matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramMeta {
    pub freq_axis_hz: Vec<f64>,
    pub hop_s: f64,
    pub source_channel: Option<Channel>,
    pub delays: Vec<usize>,
    #[serde(default)]
    pub label: Option<MotionClass>,
    #[serde(default)]
    pub source: Option<String>,
}

/// Writes the CSV matrix plus its `.json` sidecar.
pub fn write_spectrogram(
    path: &Path,
    spec: &DopplerSpectrogram,
    label: Option<MotionClass>,
    source: Option<String>,
) -> Result<()> {
    write_matrix_csv(path, &spec.values)?;
    write_json(
        &sidecar_path(path),
        &SpectrogramMeta {
            freq_axis_hz: spec.freq_axis_hz.clone(),
            hop_s: spec.hop_s,
            source_channel: spec.source_channel,
            delays: spec.delays.clone(),
            label,
            source,
        },
    )
}

pub fn read_spectrogram(path: &Path) -> Result<(DopplerSpectrogram, SpectrogramMeta)> {
    let values = read_matrix_csv(path)?;
    let meta: SpectrogramMeta = read_json(&sidecar_path(path))?;
    let mut spec = DopplerSpectrogram::new(
        values,
        meta.freq_axis_hz.clone(),
        meta.hop_s,
        meta.source_channel,
    )
    .map_err(|e| Error::format(path, e.to_string()))?;
    if meta.delays.len() == spec.n_time() {
        spec.delays = meta.delays.clone();
    }
    Ok((spec, meta))
}

/// 8-bit grey levels `round(255·(v − min)/(max − min))`; a constant matrix encodes as zeros.
/// Rows are emitted from the last matrix row to the first so the highest
/// Doppler bin lands on top.
pub fn pgm_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let mut out = format!("P5 {} {} 255\n", m.ncols(), m.nrows()).into_bytes();
    for r in (0..m.nrows()).rev() {
        for c in 0..m.ncols() {
            let level = if range > 0.0 {
                (255.0 * (m[(r, c)] - min) / range).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            out.push(level);
        }
    }
    out
}

pub fn write_pgm(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_bytes(path, &pgm_bytes(m))
}

// ---------------------------------------------------------------------------
// Signatures and manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMeta {
    pub label: Option<MotionClass>,
    pub channel: Option<Channel>,
    pub source: Option<String>,
}

pub fn write_signature(path: &Path, sig: &AlignedSignature, source: Option<String>) -> Result<()> {
    let mut bytes = Vec::with_capacity(SIGNATURE_LEN * 4);
    for v in sig.vector().iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    write_bytes(path, &bytes)?;
    write_json(
        &sidecar_path(path),
        &SignatureMeta {
            label: sig.label,
            channel: sig.channel,
            source,
        },
    )
}

/// Reads the float32 blob; the sidecar is optional.
pub fn read_signature(path: &Path) -> Result<AlignedSignature> {
    let bytes = read_bytes(path)?;
    if bytes.len() != SIGNATURE_LEN * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", SIGNATURE_LEN * 4, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let meta_path = sidecar_path(path);
    let meta = if meta_path.exists() {
        Some(read_json::<SignatureMeta>(&meta_path)?)
    } else {
        None
    };
    AlignedSignature::from_vector(
        DVector::from_vec(values),
        meta.as_ref().and_then(|m| m.label),
        meta.as_ref().and_then(|m| m.channel),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: MotionClass,
    pub channel: Channel,
    pub seed: u64,
    /// Signature blob, relative to the manifest's directory.
    pub path: String,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = create(path)?;
    for e in entries {
        let line = serde_json::to_string(e).map_err(|err| Error::format(path, err.to_string()))?;
        writeln!(w, "{line}").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Model container

pub const MODEL_MAGIC: &[u8; 4] = b"WIMD";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Pca = 1,
    Dictionary = 2,
    Svm = 3,
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: ModelKind) -> Self {
        let mut v = MODEL_MAGIC.to_vec();
        v.push(MODEL_VERSION);
        v.push(kind as u8);
        Writer(v)
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], path: &'a Path, kind: ModelKind) -> Result<Self> {
        if buf.len() < 6 || &buf[..4] != MODEL_MAGIC {
            return Err(Error::format(path, "missing WIMD model header"));
        }
        if buf[4] != MODEL_VERSION {
            return Err(Error::format(path, format!("unsupported model version {}", buf[4])));
        }
        if buf[5] != kind as u8 {
            return Err(Error::format(
                path,
                format!("model kind {} where {} was expected", buf[5], kind as u8),
            ));
        }
        Ok(Self { buf, pos: 6, path })
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::format(self.path, "truncated model file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.path, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(self.path, "trailing bytes after model payload"));
        }
        Ok(())
    }
}

/// PCA payload: `u32 P, u32 Md, f64[P] mean, f64[Md] eigenvalues, f64[P·Md] basis (column-major)`.
pub fn pca_to_bytes(m: &PcaModel) -> Vec<u8> {
    let mut w = Writer::new(ModelKind::Pca);
    w.u32(m.input_dim());
    w.u32(m.n_components());
    w.f64s(m.mean().iter());
    w.f64s(m.eigenvalues());
    w.f64s(m.basis().as_slice());
    w.0
}

pub fn pca_from_bytes(buf: &[u8], path: &Path) -> Result<PcaModel> {
    let mut r = Reader::open(buf, path, ModelKind::Pca)?;
    let p = r.u32()?;
    let k = r.u32()?;
    let mean = DVector::from_vec(r.f64s(p)?);
    let eig = r.f64s(k)?;
    let basis = DMatrix::from_vec(p, k, r.f64s(p * k)?);
    r.finish()?;
    PcaModel::from_parts(mean, basis, eig).map_err(|e| Error::format(path, e.to_string()))
}

/// Dictionary payload: `u32 Md, u32 N, u8[N] class indices, f64[Md·N] atoms (column-major)`.
pub fn dictionary_to_bytes(d: &Dictionary) -> Vec<u8> {
    let mut w = Writer::new(ModelKind::Dictionary);
    w.u32(d.dim());
    w.u32(d.n_atoms());
    for l in d.labels() {
        w.u8(l.index() as u8);
    }
    w.f64s(d.atoms().as_slice());
    w.0
}

pub fn dictionary_from_bytes(buf: &[u8], path: &Path) -> Result<Dictionary> {
    let mut r = Reader::open(buf, path, ModelKind::Dictionary)?;
    let md = r.u32()?;
    let n = r.u32()?;
    let labels = (0..n)
        .map(|_| MotionClass::from_index(r.u8()? as usize))
        .collect::<Result<Vec<_>>>()?;
    let atoms = DMatrix::from_vec(md, n, r.f64s(md * n)?);
    r.finish()?;
    Dictionary::from_normalized(atoms, labels).map_err(|e| Error::format(path, e.to_string()))
}

/// SVM payload: `u32 C, u32 dim, f64 lambda, u32 epochs, u64 seed, u8[C] classes,
/// f64[C·dim] weights (row per class), f64[C] biases`.
pub fn svm_to_bytes(m: &SvmModel) -> Vec<u8> {
    let mut w = Writer::new(ModelKind::Svm);
    w.u32(m.classes.len());
    w.u32(m.dim());
    w.f64s([m.params.lambda].iter());
    w.u32(m.params.epochs);
    w.u64(m.params.seed);
    for c in &m.classes {
        w.u8(c.index() as u8);
    }
    for row in m.weights.row_iter() {
        w.f64s(row.iter());
    }
    w.f64s(m.biases.iter());
    w.0
}

pub fn svm_from_bytes(buf: &[u8], path: &Path) -> Result<SvmModel> {
    let mut r = Reader::open(buf, path, ModelKind::Svm)?;
    let c = r.u32()?;
    let dim = r.u32()?;
    let lambda = r.f64s(1)?[0];
    let epochs = r.u32()?;
    let seed = r.u64()?;
    let classes = (0..c)
        .map(|_| MotionClass::from_index(r.u8()? as usize))
        .collect::<Result<Vec<_>>>()?;
    let weights = DMatrix::from_row_slice(c, dim, &r.f64s(c * dim)?);
    let biases = r.f64s(c)?;
    r.finish()?;
    Ok(SvmModel {
        classes,
        weights,
        biases,
        params: SvmParams { lambda, epochs, seed },
    })
}

pub fn save_pca(path: &Path, m: &PcaModel) -> Result<()> {
    write_bytes(path, &pca_to_bytes(m))
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    pca_from_bytes(&read_bytes(path)?, path)
}

pub fn save_dictionary(path: &Path, d: &Dictionary) -> Result<()> {
    write_bytes(path, &dictionary_to_bytes(d))
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    dictionary_from_bytes(&read_bytes(path)?, path)
}

pub fn save_svm(path: &Path, m: &SvmModel) -> Result<()> {
    write_bytes(path, &svm_to_bytes(m))
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    svm_from_bytes(&read_bytes(path)?, path)
}
