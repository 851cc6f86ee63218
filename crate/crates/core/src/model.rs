//! Latent-position sequences, admissible moment sequences, closed-form
//! SBM latent positions, and moment functions for the standard weight
//! distributions.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::spectral::Embedding;

/// Default absolute tolerance on the minimum Hankel eigenvalue for exact
/// moment sequences.
pub const TOL_HANKEL: f64 = 1e-8;
/// Relative tolerance used when gating estimated (noisy) sequences.
pub const TOL_HANKEL_LOOSE: f64 = 1e-4;

/// Finite real sequence m[0..=K] with m[0] = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    values: Vec<f64>,
}

impl MomentSequence {
    /// A sequence starting at the exact unit mass m[0] = 1.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("moment sequence is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("moments must be finite".into()));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "m[0] must be 1, got {}",
                values[0]
            )));
        }
        Ok(Self { values })
    }

    /// Wrap externally supplied values without the m[0] check; the Hankel
    /// check reports the violation instead.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("moment sequence is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("moments must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Highest moment order K (length is K+1).
    pub fn max_order(&self) -> usize {
        self.values.len() - 1
    }

    /// Largest square Hankel matrix fitting in the sequence:
    /// order p = floor(K/2), entries H[i][j] = m[i+j].
    pub fn hankel_matrix(&self) -> DMatrix<f64> {
        let p = self.max_order() / 2;
        DMatrix::from_fn(p + 1, p + 1, |i, j| self.values[i + j])
    }

    /// Minimum eigenvalue of the Hankel matrix; the admissibility margin.
    pub fn hankel_min_eig(&self) -> f64 {
        let h = self.hankel_matrix();
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute Hankel entry; scale for relative tolerances.
    pub fn hankel_scale(&self) -> f64 {
        self.hankel_matrix()
            .iter()
            .fold(1.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Moments of the affine image alpha X + beta given raw moments of X,
/// by binomial re-expansion.
pub(crate) fn map_moments(m: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let kmax = m.len() - 1;
    let mut out = vec![0.0; kmax + 1];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut binom = 1.0_f64;
        let mut acc = 0.0;
        for j in 0..=k {
            acc += binom * alpha.powi(j as i32) * beta.powi((k - j) as i32) * m[j];
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        *slot = acc;
    }
    out
}

/// Admissibility check of the Hausdorff/Hamburger kind: m[0] = 1 and the
/// Hankel matrix is PSD up to the available order, with absolute
/// tolerance `tol` on the minimum eigenvalue.
pub fn hankel_psd_check(m: &MomentSequence, tol: f64) -> bool {
    if (m.values[0] - 1.0).abs() > 1e-12 {
        return false;
    }
    m.hankel_min_eig() >= -tol
}

/// Edge-weight distribution with exact raw moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MomentProvider {
    Normal { mean: f64, std_dev: f64 },
    Poisson { rate: f64 },
    Exponential { rate: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

/// Poisson moments use exact integer Stirling numbers; past this order
/// they would overflow and the computation refuses instead.
const MAX_POISSON_ORDER: usize = 30;

/// Stirling numbers of the second kind S(k, j) for j = 0..=k.
fn stirling2_row(k: usize) -> Result<Vec<u128>> {
    let mut row: Vec<u128> = vec![1]; // S(0,0)
    for n in 1..=k {
        let mut next = vec![0u128; n + 1];
        for j in 1..=n {
            let keep = row.get(j).copied().unwrap_or(0);
            let term = (j as u128)
                .checked_mul(keep)
                .and_then(|v| v.checked_add(row[j - 1]))
                .ok_or_else(|| Error::MomentOverflow {
                    k,
                    msg: "Stirling number overflow".into(),
                })?;
            next[j] = term;
        }
        row = next;
    }
    Ok(row)
}

impl MomentProvider {
    pub fn validate(&self) -> Result<()> {
        match self {
            MomentProvider::Normal { std_dev, .. } if *std_dev <= 0.0 => Err(
                Error::InvalidArgument("normal std_dev must be > 0".into()),
            ),
            MomentProvider::Poisson { rate } | MomentProvider::Exponential { rate }
                if *rate <= 0.0 =>
            {
                Err(Error::InvalidArgument("rate must be > 0".into()))
            }
            MomentProvider::Discrete { values, probs } => {
                if values.len() != probs.len() || values.is_empty() {
                    return Err(Error::InvalidArgument(
                        "discrete values/probs length mismatch".into(),
                    ));
                }
                if probs.iter().any(|p| *p < 0.0) {
                    return Err(Error::InvalidArgument(
                        "discrete probabilities must be nonnegative".into(),
                    ));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "discrete probabilities sum to {s}, expected 1"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Exact k-th raw moment.
    pub fn moment(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        let value = match self {
            MomentProvider::Normal { mean, std_dev } => {
                // m[k] = mu m[k-1] + (k-1) sigma^2 m[k-2]
                let var = std_dev * std_dev;
                let (mut prev2, mut prev1) = (1.0_f64, *mean);
                for order in 2..=k {
                    let next = mean * prev1 + (order as f64 - 1.0) * var * prev2;
                    prev2 = prev1;
                    prev1 = next;
                }
                prev1
            }
            MomentProvider::Poisson { rate } => {
                if k > MAX_POISSON_ORDER {
                    return Err(Error::MomentOverflow {
                        k,
                        msg: format!("Poisson moments supported up to order {MAX_POISSON_ORDER}"),
                    });
                }
                let row = stirling2_row(k)?;
                let mut acc = 0.0;
                let mut pow = 1.0;
                for s in row.iter().skip(1) {
                    pow *= rate;
                    acc += (*s as f64) * pow;
                }
                acc
            }
            MomentProvider::Exponential { rate } => {
                let mut acc = 1.0_f64;
                for order in 1..=k {
                    acc *= order as f64 / rate;
                }
                acc
            }
            MomentProvider::Discrete { values, probs } => values
                .iter()
                .zip(probs.iter())
                .map(|(v, p)| {
                    // 0^0 = 1 by the usual convention.
                    if *v == 0.0 && k == 0 {
                        *p
                    } else {
                        v.powi(k as i32) * p
                    }
                })
                .sum(),
        };
        if !value.is_finite() {
            return Err(Error::MomentOverflow {
                k,
                msg: "moment exceeds f64 range".into(),
            });
        }
        Ok(value)
    }

    /// Draw one weight.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            MomentProvider::Normal { mean, std_dev } => {
                Normal::new(*mean, *std_dev).unwrap().sample(rng)
            }
            MomentProvider::Poisson { rate } => Poisson::new(*rate).unwrap().sample(rng),
            MomentProvider::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            MomentProvider::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs.iter()) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }
}

/// Per-node latent position matrices X[k] for k = 1..=K; the k = 0 term
/// is implicit (all inner products are 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    mats: Vec<DMatrix<f64>>,
}

impl LatentSequence {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::InvalidArgument(
                "latent sequence needs at least one order".into(),
            ));
        }
        let (n, d) = mats[0].shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument("empty latent matrix".into()));
        }
        for m in &mats {
            if m.shape() != (n, d) {
                return Err(Error::InvalidArgument(
                    "latent matrices must share one shape".into(),
                ));
            }
        }
        Ok(Self { mats })
    }

    /// Stack the per-k ASE outputs of one graph.
    pub fn from_embeddings(embeddings: &[Embedding]) -> Result<Self> {
        Self::new(embeddings.iter().map(|e| e.positions().clone()).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.mats[0].ncols()
    }

    pub fn max_order(&self) -> usize {
        self.mats.len()
    }

    /// Position matrix X[k], 1-indexed in the moment order.
    pub fn positions(&self, k: usize) -> &DMatrix<f64> {
        &self.mats[k - 1]
    }

    /// Moment sequence of the edge (i, j): (1, x_i[1].x_j[1], ...).
    pub fn edge_moment_sequence(&self, i: usize, j: usize) -> Result<MomentSequence> {
        if i == j {
            return Err(Error::InvalidArgument(
                "self-loops are excluded; i must differ from j".into(),
            ));
        }
        let n = self.n_nodes();
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "node index out of range: ({i}, {j}) for n = {n}"
            )));
        }
        let mut vals = Vec::with_capacity(self.max_order() + 1);
        vals.push(1.0);
        for m in &self.mats {
            vals.push(m.row(i).dot(&m.row(j)));
        }
        MomentSequence::new(vals)
    }
}

/// Weighted stochastic block model: community proportions, edge
/// probabilities, and a per-block-pair weight distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub communities: usize,
    pub pi: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub dists: Vec<Vec<MomentProvider>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.communities;
        if c == 0 {
            return Err(Error::Config("communities must be >= 1".into()));
        }
        if self.pi.len() != c || self.b.len() != c || self.dists.len() != c {
            return Err(Error::Config("pi/B/dists size must match communities".into()));
        }
        if self.pi.iter().any(|p| *p <= 0.0) {
            return Err(Error::Config("pi entries must be positive".into()));
        }
        let s: f64 = self.pi.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("pi sums to {s}, expected 1")));
        }
        for (l, row) in self.b.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Config("B must be square".into()));
            }
            for (m, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("B[{l}][{m}] = {p} outside [0, 1]")));
                }
                if (p - self.b[m][l]).abs() > 0.0 {
                    return Err(Error::Config("B must be symmetric".into()));
                }
            }
        }
        for l in 0..c {
            if self.dists[l].len() != c {
                return Err(Error::Config("dists must be square".into()));
            }
            for m in 0..c {
                self.dists[l][m].validate()?;
                if self.dists[l][m] != self.dists[m][l] {
                    return Err(Error::Config("dists must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SbmSpec =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SbmSpec serializes")
    }

    /// Block moment matrix G_k with entries b_lm * m_lm[k].
    pub fn block_moment_matrix(&self, k: usize) -> Result<DMatrix<f64>> {
        let c = self.communities;
        let mut g = DMatrix::<f64>::zeros(c, c);
        for l in 0..c {
            for m in 0..c {
                g[(l, m)] = self.b[l][m] * self.dists[l][m].moment(k)?;
            }
        }
        Ok(g)
    }

    /// Deterministic node-to-community assignment matching pi as closely
    /// as integer counts allow: communities occupy contiguous index runs.
    pub fn assignments(&self, n: usize) -> Vec<usize> {
        let c = self.communities;
        let mut counts: Vec<usize> = self.pi.iter().map(|p| (p * n as f64).floor() as usize).collect();
        let mut total: usize = counts.iter().sum();
        // Distribute the remainder by largest fractional part, ties by index.
        let mut rema: Vec<(f64, usize)> = self
            .pi
            .iter()
            .enumerate()
            .map(|(i, p)| (p * n as f64 - counts[i] as f64, i))
            .collect();
        rema.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut r = 0;
        while total < n {
            counts[rema[r % c].1] += 1;
            total += 1;
            r += 1;
        }
        let mut out = Vec::with_capacity(n);
        for (community, &count) in counts.iter().enumerate() {
            out.extend(std::iter::repeat(community).take(count));
        }
        out
    }
}

/// Lower-triangular PSD square root: rows y_m satisfy y_l . y_m = G_lm.
/// Plain Cholesky with a zero-pivot fallback so PSD-singular inputs
/// still factor; reproduces the two-community closed form exactly.
fn psd_sqrt_rows(g: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let c = g.nrows();
    let mut l = DMatrix::<f64>::zeros(c, c);
    for j in 0..c {
        let mut s = g[(j, j)];
        for t in 0..j {
            s -= l[(j, t)] * l[(j, t)];
        }
        if s > tol {
            let piv = s.sqrt();
            l[(j, j)] = piv;
            for i in (j + 1)..c {
                let mut v = g[(i, j)];
                for t in 0..j {
                    v -= l[(i, t)] * l[(j, t)];
                }
                l[(i, j)] = v / piv;
            }
        } else if s >= -tol {
            // Semidefinite pivot: the whole column must vanish.
            l[(j, j)] = 0.0;
            for i in (j + 1)..c {
                let mut v = g[(i, j)];
                for t in 0..j {
                    v -= l[(i, t)] * l[(j, t)];
                }
                if v.abs() > tol.sqrt().max(tol) {
                    return None;
                }
                l[(i, j)] = 0.0;
            }
        } else {
            return None;
        }
    }
    Some(l)
}

/// Analytic community latent positions: for each k, rows of a triangular
/// PSD square-root factor of the block moment matrix G_k (d = C).
pub fn sbm_latent_positions(spec: &SbmSpec, kmax: usize) -> Result<Vec<DMatrix<f64>>> {
    if kmax == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    spec.validate()?;
    let mut out = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let g = spec.block_moment_matrix(k)?;
        let scale = g.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let tol = 1e-12 * scale;
        let min_eig = g
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -tol {
            return Err(Error::BlockMatrixNotPsd { k, min_eig });
        }
        let l = psd_sqrt_rows(&g, tol).ok_or(Error::BlockMatrixNotPsd { k, min_eig })?;
        out.push(l);
    }
    Ok(out)
}

/// Broadcast community positions to nodes: row i of X[k] is
/// y_{c(i)}[k].
pub fn expand_to_nodes(
    positions: &[DMatrix<f64>],
    assignments: &[usize],
) -> Result<LatentSequence> {
    if positions.is_empty() {
        return Err(Error::InvalidArgument("no position matrices".into()));
    }
    let c = positions[0].nrows();
    let d = positions[0].ncols();
    let n = assignments.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no nodes".into()));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= c) {
        return Err(Error::InvalidArgument(format!(
            "unknown community id {bad} (have {c})"
        )));
    }
    let mut mats = Vec::with_capacity(positions.len());
    for pos in positions {
        if pos.shape() != (c, d) {
            return Err(Error::InvalidArgument(
                "position matrices must share one shape".into(),
            ));
        }
        let mut x = DMatrix::<f64>::zeros(n, d);
        for (i, &a) in assignments.iter().enumerate() {
            x.set_row(i, &pos.row(a));
        }
        mats.push(x);
    }
    LatentSequence::new(mats)
}

/// Sample one weighted SBM graph from the base model: Bernoulli edges by
/// block probability, weights drawn from the block-pair distribution.
pub fn sample_sbm_graph(
    spec: &SbmSpec,
    assignments: &[usize],
    rng: &mut impl Rng,
) -> Result<WeightedGraph> {
    spec.validate()?;
    let n = assignments.len();
    if let Some(&bad) = assignments.iter().find(|&&a| a >= spec.communities) {
        return Err(Error::InvalidArgument(format!(
            "unknown community id {bad}"
        )));
    }
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (ci, cj) = (assignments[i], assignments[j]);
            let p = spec.b[ci][cj];
            if rng.random::<f64>() < p {
                let weight = spec.dists[ci][cj].sample(rng).max(0.0);
                w[(i, j)] = weight;
                w[(j, i)] = weight;
            }
        }
    }
    WeightedGraph::from_weights(w, None)
}
