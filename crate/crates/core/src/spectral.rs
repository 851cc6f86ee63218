//! Symmetric eigendecomposition, adjacency spectral embedding, the
//! profile-likelihood dimension heuristic, and Procrustes alignment.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DenseSymMatrix, WeightedGraph};

/// Matrices up to this order always use the full dense decomposition.
const FULL_EIG_THRESHOLD: usize = 256;
/// Fixed seed for the deterministic subspace-iteration starting block.
const SUBSPACE_SEED: u64 = 0x57_52_44_50_47_u64;
const SUBSPACE_MAX_ITERS: usize = 500;
const SUBSPACE_RESIDUAL_TOL: f64 = 1e-10;

/// What to do when a retained eigenvalue is negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativePolicy {
    /// Fail with a diagnostic listing the offending eigenvalues.
    Error,
    /// Drop negative eigenpairs and refill with the next largest
    /// positive eigenvalues.
    Clamp,
}

/// Spectral embedding of a symmetric matrix: positions are the rows of
/// U_d D_d^{1/2} built from the top-d magnitude eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    positions: DMatrix<f64>,
    eigvals: Vec<f64>,
}

impl Embedding {
    pub fn n_nodes(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    /// Retained eigenvalues, descending magnitude.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    /// Dump: header `n d k`, then one row of d floats per node, then the
    /// retained eigenvalues on a trailing line. 17 significant digits.
    pub fn write_dump(&self, mut w: impl Write, k: usize) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.n_nodes(), self.dim(), k)?;
        for i in 0..self.n_nodes() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| format!("{:.16e}", self.positions[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        let vals: Vec<String> = self.eigvals.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", vals.join(" "))
    }
}

fn sort_keys(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap()
            .then(values[b].partial_cmp(&values[a]).unwrap())
            .then(a.cmp(&b))
    });
    idx
}

/// Fix the sign of each column so its largest-magnitude entry is
/// positive; ties broken by the first such entry.
fn fix_column_signs(vectors: &mut DMatrix<f64>) {
    for j in 0..vectors.ncols() {
        let col = vectors.column(j);
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..vectors.nrows() {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
}

/// Full spectrum sorted by descending magnitude (values only). Used for
/// scree output and the dimension heuristic.
pub fn full_spectrum(m: &DenseSymMatrix) -> Vec<f64> {
    let vals = m.entries().clone().symmetric_eigenvalues();
    let mut v: Vec<f64> = vals.iter().copied().collect();
    let order = sort_keys(&v);
    v = order.iter().map(|&i| v[i]).collect();
    v
}

fn full_eig_sorted(m: &DenseSymMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = nalgebra::SymmetricEigen::try_new(m.entries().clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenNonConvergence)?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = sort_keys(&values);
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let n = m.order();
    let mut vectors = DMatrix::<f64>::zeros(n, order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_signs(&mut vectors);
    Ok((sorted_values, vectors))
}

/// Deterministic block subspace iteration with Rayleigh-Ritz refinement
/// over a window of width p. Returns the leading `keep` magnitude
/// eigenpairs once they (not the whole window, whose trailing vectors
/// may sit in a never-converging bulk cluster) meet the residual
/// tolerance, or None when they stop improving.
fn subspace_topp(m: &DMatrix<f64>, p: usize, keep: usize) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let keep = keep.min(p);
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
    let mut block = DMatrix::<f64>::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));

    let mut prev_ritz: Vec<f64> = vec![f64::INFINITY; keep];
    let mut best_resid = f64::INFINITY;
    let mut stalled = 0usize;
    for iter in 0..SUBSPACE_MAX_ITERS {
        let y = m * &block;
        let qr = y.qr();
        block = qr.q();

        // Ritz refinement every few sweeps; cheap relative to the multiply.
        if iter % 4 == 3 || iter == SUBSPACE_MAX_ITERS - 1 {
            let small = block.transpose() * m * &block;
            let small = (&small + small.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::try_new(small, f64::EPSILON, 0)?;
            let ritz: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let order = sort_keys(&ritz);
            let sorted: Vec<f64> = order.iter().map(|&i| ritz[i]).collect();
            let mut rotated = DMatrix::<f64>::zeros(n, p);
            for (dst, &src) in order.iter().enumerate() {
                rotated.set_column(dst, &(&block * eig.eigenvectors.column(src)));
            }
            let scale = sorted[0].abs().max(f64::MIN_POSITIVE);
            let settled = sorted[..keep]
                .iter()
                .zip(prev_ritz.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * scale.max(1.0) || b.is_infinite());
            prev_ritz.clone_from_slice(&sorted[..keep]);
            // Residual test on the Ritz pairs we hand out.
            let mut worst = 0.0_f64;
            for j in 0..keep {
                let v = rotated.column(j);
                worst = worst.max((m * v - sorted[j] * v).norm());
            }
            if worst <= SUBSPACE_RESIDUAL_TOL * scale && settled {
                let mut out = DMatrix::<f64>::zeros(n, keep);
                for j in 0..keep {
                    out.set_column(j, &rotated.column(j));
                }
                fix_column_signs(&mut out);
                return Some((sorted[..keep].to_vec(), out));
            }
            // Degenerate clusters never converge; bail to the dense
            // path once residuals stop improving.
            if worst > best_resid * 0.5 {
                stalled += 1;
                if stalled >= 8 {
                    return None;
                }
            } else {
                stalled = 0;
            }
            best_resid = best_resid.min(worst);
            block = rotated;
        }
    }
    None
}

/// Top-d magnitude eigenpairs of a symmetric matrix.
///
/// Values are sorted by descending magnitude, ties broken by descending
/// signed value then ascending original index. Eigenvectors are unit
/// length with the sign convention of `fix_column_signs`.
pub fn eig_sym_topd(m: &DenseSymMatrix, d: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.order();
    if d == 0 || d > n {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension d = {d} out of range [1, {n}]"
        )));
    }
    let (values, vectors) = eig_internal(m, d)?;
    let mut out_vecs = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        out_vecs.set_column(j, &vectors.column(j));
    }
    Ok((values[..d].to_vec(), out_vecs))
}

/// Returns at least `want` leading eigenpairs, sorted by the magnitude
/// convention.
fn eig_internal(m: &DenseSymMatrix, want: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.order();
    let p = (want + 8).max(2 * want).min(n);
    if n <= FULL_EIG_THRESHOLD || p * 8 > n {
        return full_eig_sorted(m);
    }
    match subspace_topp(m.entries(), p, want.min(p)) {
        Some((vals, vecs)) => Ok((vals, vecs)),
        None => full_eig_sorted(m),
    }
}

/// Adjacency spectral embedding: positions = U_d D_d^{1/2}.
pub fn ase(m: &DenseSymMatrix, d: usize, policy: NegativePolicy) -> Result<Embedding> {
    let n = m.order();
    if d == 0 || d > n {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension d = {d} out of range [1, {n}]"
        )));
    }
    match policy {
        NegativePolicy::Error => {
            let (values, vectors) = eig_sym_topd(m, d)?;
            let negatives: Vec<f64> = values.iter().copied().filter(|&v| v < 0.0).collect();
            if !negatives.is_empty() {
                return Err(Error::NegativeEigenvalues { values: negatives });
            }
            Ok(build_embedding(&values, &vectors, &(0..d).collect::<Vec<_>>()))
        }
        NegativePolicy::Clamp => {
            // The d largest positive eigenvalues. Widen the window until
            // enough positives are inside it or the window is the whole
            // spectrum.
            let mut want = d;
            loop {
                let (values, vectors) = eig_internal(m, want)?;
                let positives: Vec<usize> = (0..values.len())
                    .filter(|&i| values[i] > 0.0)
                    .take(d)
                    .collect();
                if positives.len() == d {
                    let vals: Vec<f64> = positives.iter().map(|&i| values[i]).collect();
                    return Ok(build_embedding(&vals, &vectors, &positives));
                }
                if values.len() == n {
                    return Err(Error::InsufficientPositiveEigenvalues {
                        available: positives.len(),
                        requested: d,
                    });
                }
                want = (want * 2).min(n);
            }
        }
    }
}

fn build_embedding(values: &[f64], vectors: &DMatrix<f64>, cols: &[usize]) -> Embedding {
    let n = vectors.nrows();
    let d = values.len();
    let mut positions = DMatrix::<f64>::zeros(n, d);
    for (j, (&v, &c)) in values.iter().zip(cols.iter()).enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..n {
            positions[(i, j)] = vectors[(i, c)] * s;
        }
    }
    Embedding {
        positions,
        eigvals: values.to_vec(),
    }
}

/// Per-moment ASE of the entrywise powers W^(k) for k = 1..=kmax.
/// Element k-1 of the result is the embedding of W^(k). The k = 0 moment
/// is identically 1 and is never computed spectrally.
pub fn embed_moments(
    g: &WeightedGraph,
    d: usize,
    kmax: usize,
    policy: NegativePolicy,
) -> Result<Vec<Embedding>> {
    if kmax == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    (1..=kmax)
        .into_par_iter()
        .map(|k| {
            let m = g.hadamard_power(k as u32)?;
            ase(&m, d, policy)
        })
        .collect()
}

/// Orthogonal Procrustes alignment: Q minimizing |XQ - Y|_F over O(d),
/// via the polar factor of X^T Y. Returns (Q, residual).
pub fn procrustes_align(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if x.shape() != y.shape() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let c = x.transpose() * y;
    let svd = c.svd(true, true);
    let u = svd.u.as_ref().ok_or(Error::EigenNonConvergence)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::EigenNonConvergence)?;
    let q = u * v_t;
    let residual = (x * &q - y).norm();
    Ok((q, residual))
}

/// Maximum Euclidean row norm (the 2-to-infinity norm).
pub fn two_to_inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).norm())
        .fold(0.0, f64::max)
}

/// Zhu-Ghodsi profile-likelihood elbow on the magnitude scree.
///
/// Fits a two-segment Gaussian model with pooled variance at every split
/// and returns the split maximizing the profile log-likelihood, clamped
/// to [1, max_d]. A flat spectrum degenerates to 1.
pub fn select_dimension(eigvals: &[f64], max_d: usize) -> Result<usize> {
    if eigvals.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if max_d == 0 {
        return Err(Error::InvalidArgument("max_d must be >= 1".into()));
    }
    let mags: Vec<f64> = {
        let mut v: Vec<f64> = eigvals.iter().map(|e| e.abs()).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    };
    let n = mags.len();
    if n == 1 {
        return Ok(1);
    }
    let qmax = max_d.min(n - 1);
    let mut best_q = 1usize;
    let mut best_ll = f64::NEG_INFINITY;
    for q in 1..=qmax {
        let (head, tail) = mags.split_at(q);
        let mu1 = head.iter().sum::<f64>() / head.len() as f64;
        let mu2 = tail.iter().sum::<f64>() / tail.len() as f64;
        let ss: f64 = head.iter().map(|x| (x - mu1).powi(2)).sum::<f64>()
            + tail.iter().map(|x| (x - mu2).powi(2)).sum::<f64>();
        let var = ss / n as f64;
        if var <= 0.0 {
            // Degenerate split (piecewise-constant spectrum): only
            // informative when the two segments actually differ.
            if mu1 > mu2 {
                return Ok(q);
            }
            continue;
        }
        let ll = -0.5 * n as f64 * (var.ln() + 1.0 + (2.0 * std::f64::consts::PI).ln());
        if ll > best_ll {
            best_ll = ll;
            best_q = q;
        }
    }
    if best_ll.is_infinite() {
        // Constant spectrum: no elbow.
        return Ok(1);
    }
    Ok(best_q)
}
