//! Principal component projection fitted on training signatures only.

use nalgebra::{DMatrix, DVector};

use crate::dataset::SignatureDataset;
use crate::error::{Error, Result};

/// Default share of training variance the retained components must explain.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;
/// Default upper bound on the number of retained components.
pub const DEFAULT_MAX_COMPONENTS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// `P × Md`, orthonormal columns.
    basis: DMatrix<f64>,
    /// Per-component sample variances, descending.
    eigenvalues: Vec<f64>,
}

/// Full spectrum of a centered data matrix.
struct Spectrum {
    mean: DVector<f64>,
    /// Left singular vectors in descending singular-value order.
    vectors: DMatrix<f64>,
    variances: Vec<f64>,
}

fn spectrum(data: &DMatrix<f64>) -> Result<Spectrum> {
    let (p, n) = data.shape();
    if n < 2 || p == 0 {
        return Err(Error::invalid(format!(
            "PCA needs at least 2 samples of positive dimension, got {n} of dimension {p}"
        )));
    }
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    // Thin SVD of the P × N matrix costs O(P·N²); the P × P covariance is never formed.
    let svd = centered.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::invalid("singular value decomposition failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let denom = (n - 1) as f64;
    let mut vectors = DMatrix::zeros(p, order.len());
    let mut variances = Vec::with_capacity(order.len());
    for (k, &src) in order.iter().enumerate() {
        let mut col = u.column(src).into_owned();
        // Sign convention: the largest-magnitude entry is positive.
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
        variances.push(svd.singular_values[src].powi(2) / denom);
    }
    Ok(Spectrum {
        mean,
        vectors,
        variances,
    })
}

/// Smallest component count whose cumulative variance reaches `fraction`, capped at `max`.
pub fn components_for_variance(eigenvalues: &[f64], fraction: f64, max: usize) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    let limit = max.min(eigenvalues.len()).max(1);
    if !(total > 0.0) {
        return 1;
    }
    let mut acc = 0.0;
    for (k, v) in eigenvalues.iter().enumerate().take(limit) {
        acc += v;
        if acc >= fraction * total {
            return k + 1;
        }
    }
    limit
}

impl PcaModel {
    pub fn from_parts(mean: DVector<f64>, basis: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.nrows() != mean.len() || basis.ncols() != eigenvalues.len() || eigenvalues.is_empty() {
            return Err(Error::invalid("inconsistent PCA model dimensions"));
        }
        Ok(Self {
            mean,
            basis,
            eigenvalues,
        })
    }

    /// Fits `n_components` principal axes on the columns of `data` (`P × N`).
    pub fn fit_matrix(data: &DMatrix<f64>, n_components: usize) -> Result<Self> {
        let (p, n) = data.shape();
        if n_components == 0 || n_components > p.min(n) {
            return Err(Error::invalid(format!(
                "n_components {n_components} outside 1..={}",
                p.min(n)
            )));
        }
        let s = spectrum(data)?;
        Ok(Self {
            mean: s.mean,
            basis: s.vectors.columns(0, n_components).into_owned(),
            eigenvalues: s.variances[..n_components].iter().map(|v| v.max(0.0)).collect(),
        })
    }

    /// Fits with the component count chosen by [`components_for_variance`].
    pub fn fit_matrix_by_variance(data: &DMatrix<f64>, fraction: f64, max: usize) -> Result<Self> {
        let s = spectrum(data)?;
        let limit = max.min(data.nrows()).min(data.ncols());
        let k = components_for_variance(&s.variances, fraction, limit);
        Ok(Self {
            mean: s.mean,
            basis: s.vectors.columns(0, k).into_owned(),
            eigenvalues: s.variances[..k].iter().map(|v| v.max(0.0)).collect(),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    /// `basisᵀ · (d − mean)`.
    pub fn project(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        if d.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "vector of length {} does not match PCA input dimension {}",
                d.len(),
                self.mean.len()
            )));
        }
        Ok(self.basis.tr_mul(&(d - &self.mean)))
    }

    pub fn reconstruct(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.n_components() {
            return Err(Error::invalid("code length does not match component count"));
        }
        Ok(&self.basis * z + &self.mean)
    }

    /// Projects every sample, keeping labels and partition tags.
    pub fn project_dataset(&self, ds: &SignatureDataset) -> Result<SignatureDataset> {
        ds.map_vectors(|v| self.project(v))
    }
}

pub fn fit_pca(train: &SignatureDataset, n_components: usize) -> Result<PcaModel> {
    train.require_fit_data("PCA")?;
    PcaModel::fit_matrix(&train.data_matrix(), n_components)
}

pub fn fit_pca_by_variance(train: &SignatureDataset, fraction: f64, max: usize) -> Result<PcaModel> {
    train.require_fit_data("PCA")?;
    PcaModel::fit_matrix_by_variance(&train.data_matrix(), fraction, max)
}

pub fn project(model: &PcaModel, d: &DVector<f64>) -> Result<DVector<f64>> {
    model.project(d)
}
