//! Command-line front end for the WRDPG pipeline: embedding, analytic
//! models, distribution fitting, graph generation, replication, and
//! replicate validation. All randomized commands require an explicit
//! seed and produce byte-deterministic outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use wrdpg_core::asymptotics::{confidence_ellipse, sbm_covariance};
use wrdpg_core::generator::{
    generate_graph, replicate, FittedGraphModel, GeneratorOptions, ModelKind,
};
use wrdpg_core::graph::{EdgeListFormat, WeightedGraph};
use wrdpg_core::maxent::{fit_maxent, maxent_discrete, MaxEntOptions};
use wrdpg_core::metrics::{
    betweenness, compare_ensemble, geodesic_distances, weighted_degree, CompareThresholds,
    GeodesicMode, MetricSummary,
};
use wrdpg_core::model::{expand_to_nodes, sbm_latent_positions, MomentSequence, SbmSpec};
use wrdpg_core::spectral::{embed_moments, full_spectrum, select_dimension, NegativePolicy};

#[derive(Parser)]
#[command(name = "wrdpg", version, about = "Weighted RDPG embedding, fitting and generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Error,
    Clamp,
}

impl From<PolicyArg> for NegativePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Error => NegativePolicy::Error,
            PolicyArg::Clamp => NegativePolicy::Clamp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Discrete,
    Continuous,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Whitespace,
    Csv,
}

impl From<FormatArg> for EdgeListFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Whitespace => EdgeListFormat::Whitespace,
            FormatArg::Csv => EdgeListFormat::Csv,
        }
    }
}

#[derive(Args)]
struct KindOpts {
    /// Edge-weight model family.
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Discrete support values (comma separated); inferred from the
    /// observed weights when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Bounded support `a b` for continuous/mixed fits; auto-truncated
    /// when omitted.
    #[arg(long, num_args = 2)]
    support: Option<Vec<f64>>,
}

impl KindOpts {
    fn to_model_kind(&self) -> ModelKind {
        let support = self.support.as_ref().map(|v| (v[0], v[1]));
        match self.kind {
            KindArg::Discrete => ModelKind::Discrete { values: self.values.clone() },
            KindArg::Continuous => ModelKind::Continuous { support },
            KindArg::Mixed => ModelKind::Mixed { support },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Embed the entrywise powers W^(k) for k = 1..K and emit per-k
    /// position dumps plus scree data.
    Embed {
        /// Edge-list input file.
        #[arg(long)]
        input: PathBuf,
        /// Edge-list format.
        #[arg(long, value_enum, default_value = "whitespace")]
        format: FormatArg,
        /// Embedding dimension.
        #[arg(long)]
        d: usize,
        /// Highest moment order.
        #[arg(long = "K")]
        k: usize,
        #[arg(long, value_enum, default_value = "error")]
        negative_policy: PolicyArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute analytic latent positions and asymptotic covariances for
    /// a block-model spec.
    Model {
        /// SBM spec file (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "K")]
        k: usize,
        /// Confidence level for the ellipse output.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a single edge-weight model from a moments file.
    Fit {
        /// Moments file: one real per line, starting at m[0] = 1.
        #[arg(long)]
        moments: PathBuf,
        #[command(flatten)]
        kind: KindOpts,
        /// Zero-inflation mass for the mixed kind.
        #[arg(long, default_value_t = 0.0)]
        p0: f64,
        /// Solve the discrete system with the nonnegativity constraint.
        #[arg(long)]
        nonneg: bool,
        /// Output file for the fitted record.
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-entropy density recovery from a moments file.
    Maxent {
        #[arg(long)]
        moments: PathBuf,
        /// Bounded support `a b`; auto-truncated when omitted.
        #[arg(long, num_args = 2)]
        support: Option<Vec<f64>>,
        /// Number of random restarts; a summary line reports their
        /// agreement.
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        /// Seed for the restart draws (required when restarts > 0).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-8)]
        grad_tol: f64,
        /// Emit a density table with this many rows next to the record.
        #[arg(long)]
        table: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic graphs from the analytic latent positions of
    /// a block-model spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "K")]
        k: usize,
        #[command(flatten)]
        kind: KindOpts,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed an observed graph, fit per-edge weight models, and sample
    /// statistically similar replicates with metrics and a comparison
    /// report.
    Replicate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "whitespace")]
        format: FormatArg,
        /// Embedding dimension; profile-likelihood elbow when omitted.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "K")]
        k: usize,
        #[command(flatten)]
        kind: KindOpts,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a reference graph against an ensemble of replicate edge
    /// lists.
    Validate {
        #[arg(long)]
        reference: PathBuf,
        /// Replicate edge-list files.
        #[arg(long, num_args = 1..)]
        replicates: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "whitespace")]
        format: FormatArg,
        /// |z| limit on the median quantile z-scores.
        #[arg(long, default_value_t = 3.0)]
        z_limit: f64,
        /// KS significance level.
        #[arg(long, default_value_t = 0.01)]
        ks_alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("WRDPG_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn load_graph(path: &Path, format: EdgeListFormat) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read graph file {}", path.display()))?;
    Ok(WeightedGraph::parse_edge_list(&text, format)?)
}

fn load_moments(path: &Path) -> Result<MomentSequence> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read moments file {}", path.display()))?;
    let values: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|e| anyhow!("bad moment `{l}`: {e}")))
        .collect::<Result<_>>()?;
    Ok(MomentSequence::from_raw(values)?)
}

fn load_spec(path: &Path) -> Result<SbmSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read spec file {}", path.display()))?;
    Ok(SbmSpec::from_json(&text)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn metric_summaries(g: &WeightedGraph) -> Vec<MetricSummary> {
    vec![
        weighted_degree(g),
        geodesic_distances(g, GeodesicMode::Weighted),
        betweenness(g, GeodesicMode::Weighted),
    ]
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Embed { input, format, d, k, negative_policy, out } => {
            if k == 0 {
                bail!("--K must be >= 1");
            }
            if d == 0 {
                bail!("--d must be >= 1");
            }
            let g = load_graph(&input, format.into())?;
            let embeddings = embed_moments(&g, d, k, negative_policy.into())?;
            fs::create_dir_all(&out)?;
            for (ki, e) in embeddings.iter().enumerate() {
                let mut buf = Vec::new();
                e.write_dump(&mut buf, ki + 1)?;
                write_file(&out.join(format!("embed_k{}.txt", ki + 1)), &buf)?;
            }
            // per-k scree data for dimension inspection
            let mut scree = String::from("k,index,eigenvalue\n");
            for ki in 1..=k {
                let spectrum = full_spectrum(&g.hadamard_power(ki as u32)?);
                for (i, v) in spectrum.iter().enumerate() {
                    scree.push_str(&format!("{ki},{i},{v:.16e}\n"));
                }
                if ki == 1 {
                    let max_d = (g.n_nodes() - 1).min(20);
                    let suggestion = select_dimension(&spectrum, max_d)?;
                    println!("suggested d (profile likelihood on k=1 scree): {suggestion}");
                }
            }
            write_file(&out.join("scree.csv"), scree.as_bytes())?;
            write_file(&out.join("labels.txt"), (g.labels().join("\n") + "\n").as_bytes())?;
            println!("wrote {} embeddings to {}", k, out.display());
            Ok(())
        }

        Command::Model { spec, k, level, out } => {
            if k == 0 {
                bail!("--K must be >= 1");
            }
            let spec = load_spec(&spec)?;
            let positions = sbm_latent_positions(&spec, k)?;
            fs::create_dir_all(&out)?;
            let mut latent = String::new();
            for (ki, pos) in positions.iter().enumerate() {
                latent.push_str(&format!("k {}\n", ki + 1));
                for l in 0..spec.communities {
                    let row: Vec<String> =
                        pos.row(l).iter().map(|v| format!("{v:.16e}")).collect();
                    latent.push_str(&format!("y{} {}\n", l, row.join(" ")));
                }
            }
            write_file(&out.join("latent.txt"), latent.as_bytes())?;
            for ki in 1..=k {
                for l in 0..spec.communities {
                    let cov = sbm_covariance(&spec, &positions, ki, l)?;
                    let mut text = String::new();
                    text.push_str(&format!("k {ki}\ncommunity {l}\nsigma\n"));
                    for r in 0..cov.sigma.nrows() {
                        let row: Vec<String> =
                            cov.sigma.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                        text.push_str(&row.join(" "));
                        text.push('\n');
                    }
                    if let Some(n) = spec.n {
                        let center = DVector::from_iterator(
                            positions[ki - 1].ncols(),
                            positions[ki - 1].row(l).iter().copied(),
                        );
                        let e = confidence_ellipse(&cov, &center, level, n)?;
                        text.push_str(&format!("chi2 {:.16e}\n", e.chi2));
                        let radii: Vec<String> =
                            e.radii.iter().map(|v| format!("{v:.16e}")).collect();
                        text.push_str(&format!("radii {}\n", radii.join(" ")));
                        for c in 0..e.axes.ncols() {
                            let col: Vec<String> =
                                e.axes.column(c).iter().map(|v| format!("{v:.16e}")).collect();
                            text.push_str(&format!("axis{} {}\n", c, col.join(" ")));
                        }
                        if e.degenerate {
                            text.push_str("degenerate true\n");
                        }
                    }
                    write_file(&out.join(format!("covariance_k{ki}_c{l}.txt")), text.as_bytes())?;
                }
            }
            println!("wrote latent positions and covariances to {}", out.display());
            Ok(())
        }

        Command::Fit { moments, kind, p0, nonneg, out } => {
            let m = load_moments(&moments)?;
            let mut buf = Vec::new();
            match kind.kind {
                KindArg::Discrete => {
                    let values = kind
                        .values
                        .clone()
                        .ok_or_else(|| anyhow!("--kind discrete needs --values"))?;
                    if m.max_order() + 1 < values.len() {
                        // Fewer constraints than atoms: discrete maxent.
                        let pmf = maxent_discrete(&m, &values, &MaxEntOptions::default())?;
                        write_pmf(&mut buf, &pmf)?;
                    } else {
                        let sol = wrdpg_core::discrete::chebyshev_vandermonde_solve(
                            &values, &m, nonneg,
                        )?;
                        writeln!(buf, "# condition {:.6e} valid {}", sol.condition, sol.valid)?;
                        write_pmf(&mut buf, &sol.pmf)?;
                    }
                }
                KindArg::Continuous | KindArg::Mixed => {
                    let model = wrdpg_core::generator::fit_edge_model(
                        &m,
                        p0,
                        &kind.to_model_kind(),
                        None,
                        &GeneratorOptions::default(),
                    )?;
                    match model {
                        wrdpg_core::generator::EdgeWeightModel::Continuous { density, .. } => {
                            density.write_record(&mut buf)?;
                        }
                        wrdpg_core::generator::EdgeWeightModel::Mixed { p0, density, .. } => {
                            writeln!(buf, "p0 {p0:.16e}")?;
                            density.write_record(&mut buf)?;
                        }
                        wrdpg_core::generator::EdgeWeightModel::AlwaysAbsent => {
                            writeln!(buf, "absent")?;
                        }
                        wrdpg_core::generator::EdgeWeightModel::Discrete(_) => unreachable!(),
                    }
                }
            }
            write_file(&out, &buf)?;
            println!("wrote fitted model to {}", out.display());
            Ok(())
        }

        Command::Maxent { moments, support, restarts, seed, grad_tol, table, out } => {
            let m = load_moments(&moments)?;
            let support = match support {
                Some(v) => (v[0], v[1]),
                None => wrdpg_core::maxent::truncate_support(&m, None)?,
            };
            let opts = MaxEntOptions { grad_tol, ..MaxEntOptions::default() };
            let fit = fit_maxent(&m, support, &opts)?;
            if restarts > 0 {
                use rand::{Rng, SeedableRng};
                let seed = seed.ok_or_else(|| anyhow!("--restarts needs an explicit --seed"))?;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut spread = 0.0_f64;
                for trial in 0..restarts {
                    let init: Vec<f64> = (0..=m.max_order())
                        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                        .collect();
                    let restart = fit_maxent(
                        &m,
                        support,
                        &MaxEntOptions { init: Some(init), grad_tol, ..MaxEntOptions::default() },
                    )
                    .map_err(|e| anyhow!("restart {trial} failed: {e}"))?;
                    let dev = restart
                        .density
                        .lambdas()
                        .iter()
                        .zip(fit.density.lambdas())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0_f64, f64::max);
                    spread = spread.max(dev);
                }
                println!("restarts {restarts}: all converged, max lambda spread {spread:.3e}");
            }
            let mut buf = Vec::new();
            fit.density.write_record(&mut buf)?;
            write_file(&out, &buf)?;
            if let Some(rows) = table {
                let (a, b) = fit.density.support();
                let mut t = String::from("x,g\n");
                for i in 0..rows {
                    let x = a + (b - a) * i as f64 / (rows - 1).max(1) as f64;
                    t.push_str(&format!("{x:.16e},{:.16e}\n", fit.density.density(x)));
                }
                write_file(&out.with_extension("table.csv"), t.as_bytes())?;
            }
            println!(
                "converged in {} iterations, gradient norm {:.3e}; wrote {}",
                fit.iterations,
                fit.grad_norm,
                out.display()
            );
            Ok(())
        }

        Command::Generate { spec, k, kind, reps, seed, out } => {
            if reps == 0 {
                bail!("--reps must be >= 1");
            }
            if k == 0 {
                bail!("--K must be >= 1");
            }
            let spec = load_spec(&spec)?;
            let n = spec
                .n
                .ok_or_else(|| anyhow!("spec file needs an `N` field for generation"))?;
            let assignments = spec.assignments(n);
            let positions = sbm_latent_positions(&spec, k)?;
            let latent = expand_to_nodes(&positions, &assignments)?;
            let model = FittedGraphModel::from_latent(
                &latent,
                &kind.to_model_kind(),
                &GeneratorOptions::default(),
            )?;
            fs::create_dir_all(&out)?;
            let mut model_buf = Vec::new();
            model.write_text(&mut model_buf)?;
            write_file(&out.join("model.txt"), &model_buf)?;
            for r in 0..reps {
                let g = generate_graph(&model, seed.wrapping_add(r as u64))?;
                let mut buf = Vec::new();
                g.write_edge_list(&mut buf, EdgeListFormat::Whitespace)?;
                write_file(&out.join(format!("rep_{r:04}.tsv")), &buf)?;
            }
            println!("wrote {reps} generated graphs to {}", out.display());
            Ok(())
        }

        Command::Replicate { input, format, d, k, kind, reps, seed, out } => {
            if reps == 0 {
                bail!("--reps must be >= 1");
            }
            if k == 0 {
                bail!("--K must be >= 1");
            }
            let g = load_graph(&input, format.into())?;
            let d = match d {
                Some(d) => d,
                None => {
                    let spectrum = full_spectrum(&g.hadamard_power(1)?);
                    let max_d = (g.n_nodes() - 1).min(20);
                    let chosen = select_dimension(&spectrum, max_d)?;
                    println!("selected d = {chosen} by profile likelihood");
                    chosen
                }
            };
            let graphs = replicate(
                &g,
                d,
                k,
                &kind.to_model_kind(),
                reps,
                seed,
                &GeneratorOptions::for_estimated_moments(),
            )?;
            fs::create_dir_all(&out)?;
            for (r, rep) in graphs.iter().enumerate() {
                let mut buf = Vec::new();
                rep.write_edge_list(&mut buf, EdgeListFormat::Whitespace)?;
                write_file(&out.join(format!("rep_{r:04}.tsv")), &buf)?;
            }
            let reference = metric_summaries(&g);
            let ensembles: Vec<Vec<MetricSummary>> = graphs.iter().map(metric_summaries).collect();
            let mut report = Vec::new();
            let mut all_pass = true;
            for (mi, reference_metric) in reference.iter().enumerate() {
                let ensemble: Vec<MetricSummary> =
                    ensembles.iter().map(|e| e[mi].clone()).collect();
                let cmp =
                    compare_ensemble(reference_metric, &ensemble, &CompareThresholds::default())?;
                cmp.write_text(&mut report)?;
                report.push(b'\n');
                all_pass &= cmp.pass;
                let mut csv = Vec::new();
                reference_metric.write_csv(&mut csv)?;
                write_file(
                    &out.join(format!("reference_{}.csv", reference_metric.metric)),
                    &csv,
                )?;
            }
            write_file(&out.join("report.txt"), &report)?;
            println!("wrote {reps} replicates and report to {}", out.display());
            if !all_pass {
                bail!("comparison thresholds failed; see report.txt");
            }
            Ok(())
        }

        Command::Validate { reference, replicates, format, z_limit, ks_alpha, out } => {
            if replicates.len() < 2 {
                bail!("need at least 2 replicate files");
            }
            let format: EdgeListFormat = format.into();
            let reference = load_graph(&reference, format)?;
            let reps: Vec<WeightedGraph> = replicates
                .iter()
                .map(|p| load_graph(p, format))
                .collect::<Result<_>>()?;
            let ref_metrics = metric_summaries(&reference);
            let rep_metrics: Vec<Vec<MetricSummary>> = reps.iter().map(metric_summaries).collect();
            let thresholds = CompareThresholds { z_limit, ks_alpha };
            let mut report = Vec::new();
            let mut all_pass = true;
            for (mi, reference_metric) in ref_metrics.iter().enumerate() {
                let ensemble: Vec<MetricSummary> =
                    rep_metrics.iter().map(|e| e[mi].clone()).collect();
                let cmp = compare_ensemble(reference_metric, &ensemble, &thresholds)?;
                cmp.write_text(&mut report)?;
                report.push(b'\n');
                all_pass &= cmp.pass;
            }
            write_file(&out, &report)?;
            println!("wrote comparison report to {}", out.display());
            if !all_pass {
                bail!("comparison thresholds failed; see {}", out.display());
            }
            Ok(())
        }
    }
}

fn write_pmf(buf: &mut Vec<u8>, pmf: &wrdpg_core::discrete::DiscretePmf) -> Result<()> {
    let vals: Vec<String> = pmf.values().iter().map(|v| format!("{v:.16e}")).collect();
    let probs: Vec<String> = pmf.probs().iter().map(|p| format!("{p:.16e}")).collect();
    writeln!(buf, "values {}", vals.join(" "))?;
    writeln!(buf, "probs {}", probs.join(" "))?;
    Ok(())
}
