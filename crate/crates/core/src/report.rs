//! Accuracy tables and confusion matrices.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Channel, MotionClass};

const N: usize = MotionClass::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Src,
    Svm,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Src => "SRC",
            ClassifierKind::Svm => "SVM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classifier: ClassifierKind,
    pub channel: Channel,
    pub seed: u64,
    /// Test samples per ground-truth class.
    pub support: [usize; N],
    /// Share of each class classified correctly; NaN for classes with no test samples.
    pub per_class_accuracy: [f64; N],
    /// Mean of the defined per-class accuracies.
    pub average: f64,
    /// Row = ground truth, column = prediction; each populated row sums to 1.
    pub confusion: [[f64; N]; N],
}

impl ClassificationReport {
    pub fn from_predictions(
        classifier: ClassifierKind,
        channel: Channel,
        seed: u64,
        truth: &[MotionClass],
        predicted: &[MotionClass],
    ) -> Result<Self> {
        if truth.len() != predicted.len() || truth.is_empty() {
            return Err(Error::invalid(format!(
                "{} ground-truth labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = [[0usize; N]; N];
        for (t, p) in truth.iter().zip(predicted) {
            counts[t.index()][p.index()] += 1;
        }
        let mut support = [0usize; N];
        let mut confusion = [[0.0; N]; N];
        let mut per_class_accuracy = [f64::NAN; N];
        for r in 0..N {
            support[r] = counts[r].iter().sum();
            if support[r] == 0 {
                continue;
            }
            for c in 0..N {
                confusion[r][c] = counts[r][c] as f64 / support[r] as f64;
            }
            per_class_accuracy[r] = confusion[r][r];
        }
        let defined: Vec<f64> = per_class_accuracy.iter().copied().filter(|a| !a.is_nan()).collect();
        let average = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(Self {
            classifier,
            channel,
            seed,
            support,
            per_class_accuracy,
            average,
            confusion,
        })
    }

    /// Fraction of all test samples classified correctly (sample-weighted).
    pub fn overall_accuracy(&self) -> f64 {
        let total: usize = self.support.iter().sum();
        let correct: f64 = (0..N)
            .map(|r| self.confusion[r][r] * self.support[r] as f64)
            .sum();
        correct / total as f64
    }
}

fn pct(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{:.1}%", 100.0 * v)
    }
}

/// Per-channel accuracy table, one block per channel with one row per classifier.
pub fn accuracy_table(reports: &[ClassificationReport]) -> String {
    let mut out = String::new();
    let mut channels: Vec<Channel> = reports.iter().map(|r| r.channel).collect();
    channels.dedup();
    for ch in channels {
        let _ = write!(out, "{:<6}", format!("Ch.{ch}"));
        for c in MotionClass::ALL {
            let _ = write!(out, "{:>8}", c.name());
        }
        let _ = writeln!(out, "{:>8}", "AVG");
        for r in reports.iter().filter(|r| r.channel == ch) {
            let _ = write!(out, "{:<6}", r.classifier.to_string());
            for a in r.per_class_accuracy {
                let _ = write!(out, "{:>8}", pct(a));
            }
            let _ = writeln!(out, "{:>8}", pct(r.average));
        }
    }
    out
}

pub fn confusion_table(report: &ClassificationReport) -> String {
    let mut out = format!(
        "{} confusion, channel {} (rows: ground truth, columns: classified)\n",
        report.classifier, report.channel
    );
    let _ = write!(out, "{:<6}", "");
    for c in MotionClass::ALL {
        let _ = write!(out, "{:>8}", c.name());
    }
    out.push('\n');
    for (r, row) in report.confusion.iter().enumerate() {
        let _ = write!(out, "{:<6}", MotionClass::ALL[r].name());
        for v in row {
            let v = if report.support[r] == 0 { f64::NAN } else { *v };
            let _ = write!(out, "{:>8}", pct(v));
        }
        out.push('\n');
    }
    out
}

/// `classifier,channel,seed,M1..M6,AVG` with six decimals.
pub fn accuracy_csv(reports: &[ClassificationReport]) -> String {
    let mut out = String::from("classifier,channel,seed,M1,M2,M3,M4,M5,M6,AVG\n");
    for r in reports {
        let _ = write!(out, "{},{},{}", r.classifier, r.channel, r.seed);
        for a in r.per_class_accuracy {
            let _ = write!(out, ",{a:.6}");
        }
        let _ = writeln!(out, ",{:.6}", r.average);
    }
    out
}

/// `classifier,channel,truth,support,M1..M6` with six decimals.
pub fn confusion_csv(reports: &[ClassificationReport]) -> String {
    let mut out = String::from("classifier,channel,truth,support,M1,M2,M3,M4,M5,M6\n");
    for r in reports {
        for (t, row) in r.confusion.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{}",
                r.classifier,
                r.channel,
                MotionClass::ALL[t],
                r.support[t]
            );
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
    }
    out
}

/// `noise_power,classifier,channel,AVG`, one row per report and level.
pub fn sweep_csv(levels: &[(f64, Vec<ClassificationReport>)]) -> String {
    let mut out = String::from("noise_power,classifier,channel,AVG\n");
    for (noise, reports) in levels {
        for r in reports {
            let _ = writeln!(out, "{noise},{},{},{:.6}", r.classifier, r.channel, r.average);
        }
    }
    out
}
