//! End-to-end graph generation: derive per-edge moment sequences from
//! latent positions (or an observed graph), fit per-edge weight models,
//! and sample synthetic weighted graphs reproducibly.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::discrete::{chebyshev_vandermonde_solve_opts, ChebOptions, DiscretePmf};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::maxent::{
    fit_maxent, truncate_support, DensitySampler, GradMode, MaxEntDensity, MaxEntOptions,
    SAMPLER_PANELS,
};
use crate::model::{LatentSequence, MomentSequence};
use crate::spectral::{ase, embed_moments, NegativePolicy};

/// Probability clamp for estimated edge-presence.
pub const EPS_P0: f64 = 1e-6;
/// Classes with edge-presence probability below this are modeled as
/// always absent; the rescaled moment fit is meaningless there.
pub const ABSENT_THRESHOLD: f64 = 1e-3;
/// Fraction of the (auto-truncated) support whose tail mass is checked.
const TAIL_FRACTION: f64 = 0.02;
const TAIL_MASS_LIMIT: f64 = 1e-8;

/// Which family of edge-weight model to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Known (or inferred) discrete support.
    Discrete { values: Option<Vec<f64>> },
    /// Continuous weights on a bounded (or auto-truncated) support;
    /// every edge is present.
    Continuous { support: Option<(f64, f64)> },
    /// Zero-inflated mixture: point mass at zero plus a continuous
    /// component.
    Mixed { support: Option<(f64, f64)> },
}

/// Fitted distribution of one edge class.
#[derive(Debug, Clone)]
pub enum EdgeWeightModel {
    Discrete(DiscretePmf),
    Continuous {
        density: MaxEntDensity,
        sampler: DensitySampler,
    },
    Mixed {
        p0: f64,
        density: MaxEntDensity,
        sampler: DensitySampler,
    },
    AlwaysAbsent,
}

impl EdgeWeightModel {
    /// k-th raw moment of the modeled weight (absence contributes the
    /// zero atom).
    pub fn moment(&self, k: usize) -> Result<f64> {
        match self {
            EdgeWeightModel::Discrete(pmf) => Ok(pmf.moment(k)),
            EdgeWeightModel::Continuous { density, .. } => {
                Ok(density.moments(k)?[k])
            }
            EdgeWeightModel::Mixed { p0, density, .. } => {
                if k == 0 {
                    Ok(1.0)
                } else {
                    Ok((1.0 - p0) * density.moments(k)?[k])
                }
            }
            EdgeWeightModel::AlwaysAbsent => Ok(if k == 0 { 1.0 } else { 0.0 }),
        }
    }

    /// Draw a weight; zero means the edge is absent.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            EdgeWeightModel::Discrete(pmf) => pmf.sample(rng),
            EdgeWeightModel::Continuous { sampler, .. } => sampler.sample(rng).max(0.0),
            EdgeWeightModel::Mixed { p0, sampler, .. } => {
                let u: f64 = rng.random();
                if u < *p0 {
                    0.0
                } else {
                    sampler.sample(rng).max(0.0)
                }
            }
            EdgeWeightModel::AlwaysAbsent => 0.0,
        }
    }
}

/// Knobs for the per-class fits.
#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub maxent: MaxEntOptions,
    /// Solve the discrete system with the nonnegativity constraint
    /// (recommended for estimated moments).
    pub discrete_nonneg: bool,
    /// Residual bound for the constrained discrete solve.
    pub discrete_feas_tol: f64,
    /// Inverse-CDF table resolution for stored models.
    pub sampler_panels: usize,
    /// When a continuous/mixed fit fails on an estimated sequence
    /// (noise pushed it outside the moment cone), clip the highest
    /// orders away and refit on the admissible prefix.
    pub clip_noisy_orders: bool,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            maxent: MaxEntOptions {
                grad_mode: GradMode::Relative,
                grad_tol: 1e-8,
                max_iter: 600,
                ..MaxEntOptions::default()
            },
            discrete_nonneg: false,
            discrete_feas_tol: 2.0,
            sampler_panels: SAMPLER_PANELS,
            clip_noisy_orders: false,
        }
    }
}

impl GeneratorOptions {
    /// Defaults for the replicate pipeline, where moments are estimated:
    /// looser gradient target, constrained discrete solves, order
    /// clipping, and a leaner per-pair sampler table.
    pub fn for_estimated_moments() -> Self {
        Self {
            maxent: MaxEntOptions {
                grad_mode: GradMode::Relative,
                grad_tol: 1e-6,
                // Noisy per-pair sequences either fit quickly or carry
                // no usable high-order information; fail fast and let
                // order clipping take over.
                max_iter: 150,
                hankel_tol: 1e-2,
                ..MaxEntOptions::default()
            },
            discrete_nonneg: true,
            // Noise amplification through the basis change grows like
            // 2^K, so estimated high-order fits keep the least-squares
            // best approximation rather than gating on its residual.
            discrete_feas_tol: f64::INFINITY,
            sampler_panels: 512,
            clip_noisy_orders: true,
        }
    }
}

/// Per-edge no-edge probabilities from the ASE of the binary indicator
/// matrix: p0_ij = 1 - clamp(Phat_ij, eps, 1 - eps).
pub fn estimate_p0(g: &WeightedGraph, d: usize) -> Result<DMatrix<f64>> {
    let indicator = g.indicator_matrix();
    let embedding = ase(&indicator, d, NegativePolicy::Clamp)?;
    let x = embedding.positions();
    let phat = x * x.transpose();
    let n = g.n_nodes();
    let mut p0 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                p0[(i, j)] = 1.0;
            } else {
                p0[(i, j)] = 1.0 - phat[(i, j)].clamp(EPS_P0, 1.0 - EPS_P0);
            }
        }
    }
    Ok(p0)
}

fn fit_continuous(
    m: &MomentSequence,
    support: Option<(f64, f64)>,
    observed_max: Option<f64>,
    opts: &GeneratorOptions,
) -> Result<(MaxEntDensity, DensitySampler)> {
    let (support, auto) = match support {
        Some(s) => (s, false),
        None => (truncate_support(m, observed_max)?, true),
    };
    let fit = fit_maxent(m, support, &opts.maxent)?;
    if auto {
        let (a, b) = support;
        let tail = fit.density.mass_between(b - (b - a) * TAIL_FRACTION, b)?;
        if tail >= TAIL_MASS_LIMIT {
            return Err(Error::TruncationTail { a, b, tail });
        }
    }
    let sampler = DensitySampler::build(&fit.density, opts.sampler_panels)?;
    Ok((fit.density, sampler))
}

/// Fit one edge class. For the mixed kind the moment sequence is
/// rescaled by the edge-presence probability: the continuous component
/// must satisfy integral(x^k h) = m[k] / (1 - p0).
pub fn fit_edge_model(
    m: &MomentSequence,
    p0: f64,
    kind: &ModelKind,
    observed_max: Option<f64>,
    opts: &GeneratorOptions,
) -> Result<EdgeWeightModel> {
    match kind {
        ModelKind::Discrete { values } => {
            let values = values.as_ref().ok_or_else(|| {
                Error::InvalidArgument("discrete kind needs support values".into())
            })?;
            let cheb = ChebOptions {
                nonneg: opts.discrete_nonneg,
                feas_tol: opts.discrete_feas_tol,
            };
            let sol = chebyshev_vandermonde_solve_opts(values, m, &cheb)?;
            let pmf = if opts.discrete_nonneg {
                sol.pmf.cleanup()?
            } else {
                sol.pmf
            };
            Ok(EdgeWeightModel::Discrete(pmf))
        }
        ModelKind::Continuous { support } => {
            let (density, sampler) = fit_continuous(m, *support, observed_max, opts)?;
            Ok(EdgeWeightModel::Continuous { density, sampler })
        }
        ModelKind::Mixed { support } => {
            if !(0.0..1.0).contains(&p0) {
                return Err(Error::InvalidArgument(format!(
                    "p0 = {p0} outside [0, 1)"
                )));
            }
            if 1.0 - p0 < ABSENT_THRESHOLD {
                return Ok(EdgeWeightModel::AlwaysAbsent);
            }
            let keep = 1.0 - p0;
            let mut rescaled = vec![1.0];
            rescaled.extend(m.values().iter().skip(1).map(|v| v / keep));
            let rescaled = MomentSequence::new(rescaled)?;
            let (density, sampler) = fit_continuous(&rescaled, *support, observed_max, opts)?;
            Ok(EdgeWeightModel::Mixed { p0, density, sampler })
        }
    }
}

/// Whether a fit failure is the noise-infeasibility kind that clipping
/// the highest moment orders can repair.
fn is_noise_failure(err: &Error) -> bool {
    matches!(
        err,
        Error::InadmissibleMoments { .. }
            | Error::IterationCap { .. }
            | Error::NonFiniteObjective { .. }
            | Error::IntegrandOverflow { .. }
            | Error::TruncationTail { .. }
    )
}

/// Fit with order clipping: on a noise-infeasibility failure of a
/// continuous/mixed fit, retry on shorter and shorter moment prefixes.
/// The order-1 problem (mean matching on a bounded support) is always
/// feasible for a positive mean, so estimated pipelines degrade
/// gracefully instead of aborting.
fn fit_edge_model_clipped(
    m: &MomentSequence,
    p0: f64,
    kind: &ModelKind,
    observed_max: Option<f64>,
    opts: &GeneratorOptions,
) -> Result<EdgeWeightModel> {
    let clip_applies =
        opts.clip_noisy_orders && !matches!(kind, ModelKind::Discrete { .. });
    if !clip_applies {
        return fit_edge_model(m, p0, kind, observed_max, opts);
    }
    let mut kmax = m.max_order();
    loop {
        let prefix = MomentSequence::new(m.values()[..=kmax].to_vec())?;
        match fit_edge_model(&prefix, p0, kind, observed_max, opts) {
            Ok(model) => return Ok(model),
            Err(e) if kmax > 1 && is_noise_failure(&e) => kmax -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// Upper-triangle linearization of a node pair, i < j.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Deterministic per-pair random stream: ChaCha8 seeded by the run seed
/// with stream id pair_index + 1. Parallel generation reproduces the
/// sequential result exactly.
fn pair_rng(seed: u64, pair: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair + 1);
    rng
}

/// Edge classes over all unordered pairs: pairs with equal quantized
/// moment signatures share one fitted model.
#[derive(Debug, Clone)]
pub struct FittedGraphModel {
    n: usize,
    class_of_pair: Vec<u32>,
    models: Vec<EdgeWeightModel>,
}

fn signature(m: &MomentSequence, p0: Option<f64>) -> String {
    let mut s = String::with_capacity(18 * (m.values().len() + 1));
    for v in m.values() {
        // quantized to 10 significant digits
        s.push_str(&format!("{v:.9e};"));
    }
    if let Some(p0) = p0 {
        s.push_str(&format!("p{p0:.9e}"));
    }
    s
}

impl FittedGraphModel {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    pub fn model_of(&self, i: usize, j: usize) -> &EdgeWeightModel {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        &self.models[self.class_of_pair[pair_index(self.n, i, j)] as usize]
    }

    /// Fit every edge class of a latent-position model. The mixed kind
    /// needs an observed graph for its sparsity estimate and is not
    /// available on this path.
    pub fn from_latent(
        latent: &LatentSequence,
        kind: &ModelKind,
        opts: &GeneratorOptions,
    ) -> Result<Self> {
        if matches!(kind, ModelKind::Mixed { .. }) {
            return Err(Error::InvalidArgument(
                "mixed kind needs an observed graph for the sparsity estimate; \
                 use replicate"
                    .into(),
            ));
        }
        let n = latent.n_nodes();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two nodes".into()));
        }
        let mut class_of_pair = vec![0u32; n * (n - 1) / 2];
        let mut class_ids: HashMap<String, u32> = HashMap::new();
        let mut class_moments: Vec<MomentSequence> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let m = latent.edge_moment_sequence(i, j)?;
                let sig = signature(&m, None);
                let next = class_moments.len() as u32;
                let id = *class_ids.entry(sig).or_insert_with(|| {
                    class_moments.push(m);
                    next
                });
                class_of_pair[pair_index(n, i, j)] = id;
            }
        }
        let models: Result<Vec<EdgeWeightModel>> = class_moments
            .par_iter()
            .map(|m| fit_edge_model(m, 0.0, kind, None, opts))
            .collect();
        Ok(Self {
            n,
            class_of_pair,
            models: models?,
        })
    }

    /// Structured text serialization: class table then the pair mapping.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "wrdpg-model")?;
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "classes {}", self.models.len())?;
        for (id, model) in self.models.iter().enumerate() {
            match model {
                EdgeWeightModel::Discrete(pmf) => {
                    writeln!(w, "class {id} discrete")?;
                    let vals: Vec<String> =
                        pmf.values().iter().map(|v| format!("{v:.16e}")).collect();
                    let probs: Vec<String> =
                        pmf.probs().iter().map(|p| format!("{p:.16e}")).collect();
                    writeln!(w, "values {}", vals.join(" "))?;
                    writeln!(w, "probs {}", probs.join(" "))?;
                }
                EdgeWeightModel::Continuous { density, .. } => {
                    writeln!(w, "class {id} continuous")?;
                    density.write_record(&mut w)?;
                }
                EdgeWeightModel::Mixed { p0, density, .. } => {
                    writeln!(w, "class {id} mixed {p0:.16e}")?;
                    density.write_record(&mut w)?;
                }
                EdgeWeightModel::AlwaysAbsent => {
                    writeln!(w, "class {id} absent")?;
                }
            }
        }
        let ids: Vec<String> = self.class_of_pair.iter().map(|c| c.to_string()).collect();
        writeln!(w, "pairs {}", ids.join(" "))
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().peekable();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "wrdpg-model" {
            return Err(Error::Config("missing wrdpg-model header".into()));
        }
        let parse_kv = |line: &str, key: &str| -> Result<String> {
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::Config(format!("expected `{key}` line, got `{line}`")))?;
            Ok(rest.trim().to_string())
        };
        let n: usize = parse_kv(lines.next().unwrap_or_default(), "n")?
            .parse()
            .map_err(|e| Error::Config(format!("bad n: {e}")))?;
        let n_classes: usize = parse_kv(lines.next().unwrap_or_default(), "classes")?
            .parse()
            .map_err(|e| Error::Config(format!("bad classes: {e}")))?;
        let mut models = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let class_line = lines
                .next()
                .ok_or_else(|| Error::Config("truncated class table".into()))?;
            let mut parts = class_line.split_whitespace();
            if parts.next() != Some("class") {
                return Err(Error::Config(format!("expected class line: `{class_line}`")));
            }
            let _id = parts.next();
            match parts.next() {
                Some("discrete") => {
                    let vals_line = lines
                        .next()
                        .ok_or_else(|| Error::Config("missing values".into()))?;
                    let probs_line = lines
                        .next()
                        .ok_or_else(|| Error::Config("missing probs".into()))?;
                    let values: std::result::Result<Vec<f64>, _> = parse_kv(vals_line, "values")?
                        .split_whitespace()
                        .map(str::parse)
                        .collect();
                    let probs: std::result::Result<Vec<f64>, _> = parse_kv(probs_line, "probs")?
                        .split_whitespace()
                        .map(str::parse)
                        .collect();
                    let pmf = DiscretePmf::new(
                        values.map_err(|e| Error::Config(format!("bad values: {e}")))?,
                        probs.map_err(|e| Error::Config(format!("bad probs: {e}")))?,
                    )?;
                    models.push(EdgeWeightModel::Discrete(pmf));
                }
                Some(kind @ ("continuous" | "mixed")) => {
                    let p0 = if kind == "mixed" {
                        parts
                            .next()
                            .and_then(|s| s.parse::<f64>().ok())
                            .ok_or_else(|| Error::Config("mixed class missing p0".into()))?
                    } else {
                        0.0
                    };
                    let mut record = String::new();
                    for _ in 0..3 {
                        record.push_str(
                            lines
                                .next()
                                .ok_or_else(|| Error::Config("truncated density record".into()))?,
                        );
                        record.push('\n');
                    }
                    let density = MaxEntDensity::parse_record(&record)?;
                    let sampler = DensitySampler::build(&density, SAMPLER_PANELS)?;
                    if kind == "mixed" {
                        models.push(EdgeWeightModel::Mixed { p0, density, sampler });
                    } else {
                        models.push(EdgeWeightModel::Continuous { density, sampler });
                    }
                }
                Some("absent") => models.push(EdgeWeightModel::AlwaysAbsent),
                other => {
                    return Err(Error::Config(format!("unknown class kind {other:?}")));
                }
            }
        }
        let pairs_line = lines
            .next()
            .ok_or_else(|| Error::Config("missing pairs line".into()))?;
        let class_of_pair: std::result::Result<Vec<u32>, _> = parse_kv(pairs_line, "pairs")?
            .split_whitespace()
            .map(str::parse)
            .collect();
        let class_of_pair =
            class_of_pair.map_err(|e| Error::Config(format!("bad pair ids: {e}")))?;
        if class_of_pair.len() != n * (n - 1) / 2 {
            return Err(Error::Config("pair mapping length mismatch".into()));
        }
        if class_of_pair.iter().any(|&c| c as usize >= models.len()) {
            return Err(Error::Config("pair maps to unknown class".into()));
        }
        Ok(Self {
            n,
            class_of_pair,
            models,
        })
    }
}

/// Sample one graph from a fitted model. Pairs are visited in
/// lexicographic (i, j) order, each drawing from its own substream, so
/// the output is deterministic in the seed and independent of
/// parallel scheduling.
pub fn generate_graph(model: &FittedGraphModel, seed: u64) -> Result<WeightedGraph> {
    let n = model.n;
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            for j in (i + 1)..n {
                let pair = pair_index(n, i, j);
                let mut rng = pair_rng(seed, pair as u64);
                let w = model.models[model.class_of_pair[pair] as usize].sample(&mut rng);
                if w > 0.0 {
                    row.push((j, w));
                }
            }
            row
        })
        .collect();
    let mut weights = DMatrix::<f64>::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    WeightedGraph::from_weights(weights, None)
}

fn stage_err(stage: &'static str, i: usize, j: usize) -> impl FnOnce(Error) -> Error {
    move |source| Error::ReplicateStage {
        stage,
        i,
        j,
        source: Box::new(source),
    }
}

/// Cached per-class fit: the model parameters without the sampler table.
enum FitResult {
    Discrete(DiscretePmf),
    Continuous(MaxEntDensity),
    Mixed { p0: f64, density: MaxEntDensity },
    Absent,
}

/// Full replication pipeline: embed the observed graph, derive per-pair
/// moment sequences, fit per-pair weight models (cached by quantized
/// moment signature), and sample `n_reps` graphs.
///
/// Replicate r is drawn with seed `seed + r`, so the ensemble equals
/// `n_reps` independent `generate_graph` calls over the same fits.
pub fn replicate(
    g: &WeightedGraph,
    d: usize,
    kmax: usize,
    kind: &ModelKind,
    n_reps: usize,
    seed: u64,
    opts: &GeneratorOptions,
) -> Result<Vec<WeightedGraph>> {
    if kmax == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be >= 1".into()));
    }
    let n = g.n_nodes();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }

    let embeddings = embed_moments(g, d, kmax, NegativePolicy::Clamp)
        .map_err(stage_err("embed", 0, 0))?;
    let latent = LatentSequence::from_embeddings(&embeddings)?;

    let p0 = if matches!(kind, ModelKind::Mixed { .. }) {
        Some(estimate_p0(g, d).map_err(stage_err("estimate_p0", 0, 0))?)
    } else {
        None
    };

    let observed_max = g
        .weights()
        .iter()
        .fold(0.0_f64, |acc, &w| acc.max(w));

    // Resolve the discrete support once for the whole graph.
    let kind = match kind {
        ModelKind::Discrete { values: None } => {
            let mut vals: Vec<f64> = g.weights().iter().copied().filter(|&w| w > 0.0).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            vals.insert(0, 0.0);
            if vals.len() > 64 {
                return Err(Error::InvalidArgument(format!(
                    "{} distinct observed weights; supply --values for a discrete fit",
                    vals.len() - 1
                )));
            }
            ModelKind::Discrete { values: Some(vals) }
        }
        other => other.clone(),
    };

    // Per-pair signatures, then one fit per distinct signature.
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let moments: Vec<MomentSequence> = pairs
        .par_iter()
        .map(|&(i, j)| latent.edge_moment_sequence(i, j).map_err(stage_err("moments", i, j)))
        .collect::<Result<_>>()?;
    let mut class_ids: HashMap<String, u32> = HashMap::new();
    let mut class_of_pair = vec![0u32; pairs.len()];
    let mut class_repr: Vec<usize> = Vec::new();
    for (idx, m) in moments.iter().enumerate() {
        let p0_val = p0
            .as_ref()
            .map(|mat| mat[(pairs[idx].0, pairs[idx].1)]);
        let sig = signature(m, p0_val);
        let next = class_repr.len() as u32;
        let id = *class_ids.entry(sig).or_insert_with(|| {
            class_repr.push(idx);
            next
        });
        class_of_pair[idx] = id;
    }

    let fits: Vec<FitResult> = class_repr
        .par_iter()
        .map(|&idx| {
            let (i, j) = pairs[idx];
            let m = &moments[idx];
            let p0_val = p0.as_ref().map(|mat| mat[(i, j)]).unwrap_or(0.0);
            let model = fit_edge_model_clipped(m, p0_val, &kind, Some(observed_max), opts)
                .map_err(stage_err("fit", i, j))?;
            Ok(match model {
                EdgeWeightModel::Discrete(pmf) => FitResult::Discrete(pmf),
                EdgeWeightModel::Continuous { density, .. } => FitResult::Continuous(density),
                EdgeWeightModel::Mixed { p0, density, .. } => {
                    FitResult::Mixed { p0, density }
                }
                EdgeWeightModel::AlwaysAbsent => FitResult::Absent,
            })
        })
        .collect::<Result<_>>()?;

    // Draw every replicate weight in one pass over pairs; samplers are
    // rebuilt transiently so per-pair classes stay memory-lean.
    let draws: Vec<Vec<f64>> = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, &(i, j))| {
            let fit = &fits[class_of_pair[idx] as usize];
            let sampler = match fit {
                FitResult::Continuous(density) | FitResult::Mixed { density, .. } => Some(
                    DensitySampler::build(density, opts.sampler_panels)
                        .map_err(stage_err("sample", i, j))?,
                ),
                _ => None,
            };
            let mut out = Vec::with_capacity(n_reps);
            for rep in 0..n_reps {
                let mut rng = pair_rng(seed.wrapping_add(rep as u64), idx as u64);
                let w = match fit {
                    FitResult::Discrete(pmf) => pmf.sample(&mut rng),
                    FitResult::Continuous(_) => {
                        sampler.as_ref().unwrap().sample(&mut rng).max(0.0)
                    }
                    FitResult::Mixed { p0, .. } => {
                        let u: f64 = rng.random();
                        if u < *p0 {
                            0.0
                        } else {
                            sampler.as_ref().unwrap().sample(&mut rng).max(0.0)
                        }
                    }
                    FitResult::Absent => 0.0,
                };
                out.push(w);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut graphs = Vec::with_capacity(n_reps);
    for rep in 0..n_reps {
        let mut weights = DMatrix::<f64>::zeros(n, n);
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let w = draws[idx][rep];
            if w > 0.0 {
                weights[(i, j)] = w;
                weights[(j, i)] = w;
            }
        }
        graphs.push(WeightedGraph::from_weights(weights, None)?);
    }
    Ok(graphs)
}
