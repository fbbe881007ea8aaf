//! Sparse-representation classification.
//!
//! A test vector is coded over the unit-normalized training atoms with
//! subspace pursuit, then assigned to the class whose atoms alone leave the
//! smallest reconstruction residual.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::dataset::SignatureDataset;
use crate::error::{Error, Result};
use crate::label::MotionClass;

pub const DEFAULT_SPARSITY: usize = 10;
pub const MAX_SP_ITERATIONS: usize = 50;

/// Training atoms as unit-norm columns plus their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    labels: Vec<MotionClass>,
}

impl Dictionary {
    /// Normalizes each column of `atoms` to unit ℓ2 norm.
    pub fn new(mut atoms: DMatrix<f64>, labels: Vec<MotionClass>) -> Result<Self> {
        if atoms.ncols() != labels.len() || labels.is_empty() {
            return Err(Error::invalid(format!(
                "{} atoms but {} labels",
                atoms.ncols(),
                labels.len()
            )));
        }
        if atoms.nrows() == 0 {
            return Err(Error::invalid("atoms have zero dimension"));
        }
        for (j, mut col) in atoms.column_iter_mut().enumerate() {
            let n = col.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::invalid(format!("atom {j} has zero or non-finite norm")));
            }
            col /= n;
        }
        Ok(Self { atoms, labels })
    }

    /// Takes atoms that are already unit norm (within 1e-9) as they are.
    pub fn from_normalized(atoms: DMatrix<f64>, labels: Vec<MotionClass>) -> Result<Self> {
        if atoms.ncols() != labels.len() || labels.is_empty() || atoms.nrows() == 0 {
            return Err(Error::invalid(format!(
                "{} atoms of dimension {} but {} labels",
                atoms.ncols(),
                atoms.nrows(),
                labels.len()
            )));
        }
        if let Some(j) = atoms.column_iter().position(|c| !((c.norm() - 1.0).abs() <= 1e-9)) {
            return Err(Error::invalid(format!("atom {j} is not unit norm")));
        }
        Ok(Self { atoms, labels })
    }

    pub fn from_dataset(train: &SignatureDataset) -> Result<Self> {
        train.require_fit_data("dictionary")?;
        Self::new(train.data_matrix(), train.labels())
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn labels(&self) -> &[MotionClass] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Classes with at least one atom, in index order.
    pub fn classes(&self) -> Vec<MotionClass> {
        self.labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// One coefficient per atom; zero outside `support`.
    pub coefficients: DVector<f64>,
    /// Sorted atom indices.
    pub support: Vec<usize>,
    pub residual_norm: f64,
    /// Residual norm after initialization and after every accepted iteration.
    pub residual_history: Vec<f64>,
}

/// Indices of the `k` largest `|values|`; ties resolved towards lower indices.
fn largest_k(values: impl Iterator<Item = (usize, f64)>, k: usize) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = values.map(|(i, x)| (i, x.abs())).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v.into_iter().map(|(i, _)| i).collect()
}

/// Minimum-norm least-squares fit of `y` on the atoms in `support`.
fn least_squares(atoms: &DMatrix<f64>, support: &[usize], y: &DVector<f64>) -> Result<DVector<f64>> {
    let sub = atoms.select_columns(support);
    let scale = sub.nrows().max(sub.ncols()) as f64;
    let svd = sub.svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * scale;
    svd.solve(y, tol)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))
}

struct Fit {
    support: Vec<usize>,
    coeffs: DVector<f64>,
    residual: DVector<f64>,
    norm: f64,
}

fn fit_on(atoms: &DMatrix<f64>, mut support: Vec<usize>, y: &DVector<f64>) -> Result<Fit> {
    support.sort_unstable();
    let coeffs = least_squares(atoms, &support, y)?;
    let residual = y - atoms.select_columns(&support) * &coeffs;
    let norm = residual.norm();
    Ok(Fit {
        support,
        coeffs,
        residual,
        norm,
    })
}

/// Greedy `k`-sparse coding of `y` by subspace pursuit.
///
/// Each iteration merges the current support with the `k` atoms most
/// correlated with the residual, fits on the merged set, keeps the `k` largest
/// coefficients and refits. Iteration stops once the residual no longer
/// shrinks, or after [`MAX_SP_ITERATIONS`].
pub fn subspace_pursuit(dict: &Dictionary, y: &DVector<f64>, k: usize) -> Result<SparseCode> {
    let atoms = &dict.atoms;
    if y.len() != dict.dim() {
        return Err(Error::invalid(format!(
            "test vector has {} entries, dictionary atoms have {}",
            y.len(),
            dict.dim()
        )));
    }
    let max_k = dict.dim().min(dict.n_atoms());
    if k == 0 || k > max_k {
        return Err(Error::invalid(format!("sparsity {k} outside 1..={max_k}")));
    }

    let corr = atoms.tr_mul(y);
    let mut best = fit_on(atoms, largest_k(corr.iter().copied().enumerate(), k), y)?;
    let mut history = vec![best.norm];

    for _ in 0..MAX_SP_ITERATIONS {
        let corr = atoms.tr_mul(&best.residual);
        let mut merged: BTreeSet<usize> = best.support.iter().copied().collect();
        merged.extend(largest_k(corr.iter().copied().enumerate(), k));
        let merged: Vec<usize> = merged.into_iter().collect();

        let wide = least_squares(atoms, &merged, y)?;
        let keep: Vec<usize> = largest_k(wide.iter().copied().enumerate(), k)
            .into_iter()
            .map(|i| merged[i])
            .collect();
        let next = fit_on(atoms, keep, y)?;
        if next.norm >= best.norm {
            break;
        }
        debug_assert!(next.norm <= *history.last().unwrap());
        history.push(next.norm);
        best = next;
    }

    let mut coefficients = DVector::zeros(dict.n_atoms());
    for (i, &j) in best.support.iter().enumerate() {
        coefficients[j] = best.coeffs[i];
    }
    Ok(SparseCode {
        coefficients,
        support: best.support,
        residual_norm: best.norm,
        residual_history: history,
    })
}

/// `‖y − atoms · δ_class(coefficients)‖₂`, keeping only coefficients of atoms labeled `class`.
pub fn class_residual(
    dict: &Dictionary,
    code: &SparseCode,
    y: &DVector<f64>,
    class: MotionClass,
) -> Result<f64> {
    if !dict.labels.contains(&class) {
        return Err(Error::invalid(format!("class {class} has no atoms in the dictionary")));
    }
    if code.coefficients.len() != dict.n_atoms() || y.len() != dict.dim() {
        return Err(Error::invalid("code or vector does not match the dictionary"));
    }
    let mut r = y.clone();
    for &j in &code.support {
        if dict.labels[j] == class {
            r.axpy(-code.coefficients[j], &dict.atoms.column(j), 1.0);
        }
    }
    Ok(r.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcDecision {
    pub class: MotionClass,
    /// Residual of every class present in the dictionary, in class order.
    pub residuals: Vec<(MotionClass, f64)>,
    pub code: SparseCode,
}

/// Picks the class with the smallest residual; ties go to the lower class index.
pub fn src_classify(dict: &Dictionary, y: &DVector<f64>, k: usize) -> Result<SrcDecision> {
    let code = subspace_pursuit(dict, y, k)?;
    let residuals = dict
        .classes()
        .into_iter()
        .map(|c| Ok((c, class_residual(dict, &code, y, c)?)))
        .collect::<Result<Vec<_>>>()?;
    let class = argmin_class(&residuals);
    Ok(SrcDecision {
        class,
        residuals,
        code,
    })
}

pub(crate) fn argmin_class(residuals: &[(MotionClass, f64)]) -> MotionClass {
    let mut best = residuals[0];
    for &(c, r) in &residuals[1..] {
        if r < best.1 {
            best = (c, r);
        }
    }
    best.0
}
