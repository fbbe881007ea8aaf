//! One-vs-rest linear SVM baseline trained with Pegasos-style stochastic
//! sub-gradient descent on the ℓ2-regularized hinge loss.
//!
//! The bias is folded in as a constant feature and regularized with the weights.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SignatureDataset;
use crate::error::{Error, Result};
use crate::label::MotionClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<MotionClass>,
    /// One row per class.
    pub weights: DMatrix<f64>,
    pub biases: Vec<f64>,
    pub params: SvmParams,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `wᵢᵀy + bᵢ` for every class.
    pub fn scores(&self, y: &DVector<f64>) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::invalid(format!(
                "vector has {} entries, model expects {}",
                y.len(),
                self.dim()
            )));
        }
        Ok((0..self.classes.len())
            .map(|c| self.weights.row(c).transpose().dot(y) + self.biases[c])
            .collect())
    }
}

fn train_binary(
    xs: &[&DVector<f64>],
    targets: &[f64],
    params: &SvmParams,
    order: &[Vec<usize>],
) -> (DVector<f64>, f64) {
    let dim = xs[0].len();
    let mut w = DVector::zeros(dim);
    let mut b = 0.0;
    let radius = 1.0 / params.lambda.sqrt();
    let mut t = 0usize;
    for epoch in order {
        for &i in epoch {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let margin = targets[i] * (w.dot(xs[i]) + b);
            let shrink = 1.0 - eta * params.lambda;
            w *= shrink;
            b *= shrink;
            if margin < 1.0 {
                w.axpy(eta * targets[i], xs[i], 1.0);
                b += eta * targets[i];
            }
            // projection onto the ball that contains the optimum
            let norm = (w.norm_squared() + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w *= s;
                b *= s;
            }
        }
    }
    (w, b)
}

/// Deterministic for a given `params.seed`: every class model sees the same
/// per-epoch visiting order.
pub fn train_linear_svm(train: &SignatureDataset, params: &SvmParams) -> Result<SvmModel> {
    train.require_fit_data("SVM")?;
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {}", params.lambda)));
    }
    if params.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    let classes: Vec<MotionClass> = train.class_counts().into_keys().collect();
    if classes.len() < 2 {
        return Err(Error::invalid("SVM training needs at least two classes"));
    }

    let xs: Vec<&DVector<f64>> = train.samples().iter().map(|s| &s.vector).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let order: Vec<Vec<usize>> = (0..params.epochs)
        .map(|_| {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.shuffle(&mut rng);
            idx
        })
        .collect();

    let mut weights = DMatrix::zeros(classes.len(), train.dim());
    let mut biases = Vec::with_capacity(classes.len());
    for (c, &class) in classes.iter().enumerate() {
        let targets: Vec<f64> = train
            .samples()
            .iter()
            .map(|s| if s.label == class { 1.0 } else { -1.0 })
            .collect();
        let (w, b) = train_binary(&xs, &targets, params, &order);
        weights.set_row(c, &w.transpose());
        biases.push(b);
    }
    Ok(SvmModel {
        classes,
        weights,
        biases,
        params: params.clone(),
    })
}

/// Class with the highest score; ties go to the lower class index.
pub fn svm_classify(model: &SvmModel, y: &DVector<f64>) -> Result<MotionClass> {
    let scores = model.scores(y)?;
    let mut best = 0;
    for (c, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = c;
        }
    }
    Ok(model.classes[best])
}
