//! Labeled signature collections with train/test provenance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Channel, MotionClass};

/// Where a dataset came from. Model fitting refuses [`Partition::Test`] data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Full,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub vector: DVector<f64>,
    pub label: MotionClass,
    pub channel: Channel,
    /// Seed of the recording the sample was synthesized from.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureDataset {
    samples: Vec<LabeledSample>,
    partition: Partition,
}

impl SignatureDataset {
    pub fn new(samples: Vec<LabeledSample>, partition: Partition) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::invalid("dataset has no samples"));
        };
        let dim = first.vector.len();
        if dim == 0 {
            return Err(Error::invalid("dataset vectors are empty"));
        }
        if let Some(bad) = samples.iter().find(|s| s.vector.len() != dim) {
            return Err(Error::invalid(format!(
                "sample length {} differs from {dim}",
                bad.vector.len()
            )));
        }
        Ok(Self { samples, partition })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].vector.len()
    }

    pub fn labels(&self) -> Vec<MotionClass> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples as columns, `dim × len`.
    pub fn data_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.len(), |r, c| self.samples[c].vector[r])
    }

    pub fn class_counts(&self) -> BTreeMap<MotionClass, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    /// Replaces every vector, keeping labels and provenance.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(LabeledSample {
                    vector: f(&s.vector)?,
                    ..s.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, self.partition)
    }

    pub(crate) fn require_fit_data(&self, what: &str) -> Result<()> {
        if self.partition == Partition::Test {
            return Err(Error::invalid(format!("{what} cannot be fitted on test data")));
        }
        Ok(())
    }
}
