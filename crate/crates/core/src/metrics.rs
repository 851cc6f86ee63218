//! Graph summary statistics for validating replicates against a
//! reference graph: weighted degree, geodesic distances, betweenness
//! centrality, and ensemble comparison statistics.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Which summary a MetricSummary holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Degree,
    Geodesic,
    Betweenness,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Degree => write!(f, "degree"),
            MetricKind::Geodesic => write!(f, "geodesic"),
            MetricKind::Betweenness => write!(f, "betweenness"),
        }
    }
}

/// Shortest-path length convention: hop count on the indicator graph, or
/// edge length 1/w (heavier edges are closer).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeodesicMode {
    Hop,
    Weighted,
}

/// Per-node or per-pair metric values with summary quantiles.
#[derive(Debug, Clone)]
pub struct MetricSummary {
    pub metric: MetricKind,
    pub values: Vec<f64>,
    /// Pairs of the geodesic computation that were unreachable.
    pub unreachable_pairs: usize,
}

impl MetricSummary {
    fn new(metric: MetricKind, values: Vec<f64>, unreachable_pairs: usize) -> Self {
        Self {
            metric,
            values,
            unreachable_pairs,
        }
    }

    /// (min, q25, median, q75, max, mean) of the values.
    pub fn quantiles(&self) -> [f64; 6] {
        if self.values.is_empty() {
            return [f64::NAN; 6];
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| -> f64 {
            let pos = p * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        };
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        [sorted[0], q(0.25), q(0.5), q(0.75), sorted[sorted.len() - 1], mean]
    }

    /// CSV dump: header then one row per value.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "index,{}", self.metric)?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }
}

/// Row sums of W.
pub fn weighted_degree(g: &WeightedGraph) -> MetricSummary {
    let n = g.n_nodes();
    let w = g.weights();
    let values: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    MetricSummary::new(MetricKind::Degree, values, 0)
}

fn adjacency_lists(g: &WeightedGraph, mode: GeodesicMode) -> Vec<Vec<(usize, f64)>> {
    let n = g.n_nodes();
    let w = g.weights();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| w[(i, j)] > 0.0)
                .map(|j| {
                    let len = match mode {
                        GeodesicMode::Hop => 1.0,
                        GeodesicMode::Weighted => 1.0 / w[(i, j)],
                    };
                    (j, len)
                })
                .collect()
        })
        .collect()
}

fn largest_component(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    best
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0
                .total_cmp(&other.0)
                .then_with(|| self.1.cmp(&other.1))
        }
    }

    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Entry(0.0, source)));
    while let Some(Reverse(Entry(d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, len) in &adj[u] {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse(Entry(nd, v)));
            }
        }
    }
    dist
}

fn bfs_hops(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adj[u] {
            if dist[v].is_infinite() {
                dist[v] = dist[u] + 1.0;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Pairwise geodesic distances over the largest connected component;
/// unreachable pairs (relative to the whole graph) are excluded and
/// counted.
pub fn geodesic_distances(g: &WeightedGraph, mode: GeodesicMode) -> MetricSummary {
    let n = g.n_nodes();
    let adj = adjacency_lists(g, mode);
    let comp = largest_component(&adj);
    let per_source: Vec<Vec<f64>> = comp
        .par_iter()
        .map(|&s| match mode {
            GeodesicMode::Hop => bfs_hops(&adj, s),
            GeodesicMode::Weighted => dijkstra(&adj, s),
        })
        .collect();
    let mut values = Vec::new();
    for (row, &s) in per_source.iter().zip(comp.iter()) {
        for &t in comp.iter().filter(|&&t| t > s) {
            if row[t].is_finite() {
                values.push(row[t]);
            }
        }
    }
    let total_pairs = n * (n - 1) / 2;
    let unreachable = total_pairs - values.len();
    MetricSummary::new(MetricKind::Geodesic, values, unreachable)
}

/// Brandes betweenness centrality under the chosen length convention,
/// normalized by (n-1)(n-2) so values are comparable across sizes.
pub fn betweenness(g: &WeightedGraph, mode: GeodesicMode) -> MetricSummary {
    let n = g.n_nodes();
    let adj = adjacency_lists(g, mode);
    if n < 3 {
        return MetricSummary::new(MetricKind::Betweenness, vec![0.0; n], 0);
    }
    let partials: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| brandes_from_source(&adj, s, mode))
        .collect();
    // Fixed reduction order for bit reproducibility.
    let mut centrality = vec![0.0; n];
    for partial in &partials {
        for (c, p) in centrality.iter_mut().zip(partial.iter()) {
            *c += p;
        }
    }
    let norm = ((n - 1) * (n - 2)) as f64;
    for c in &mut centrality {
        *c /= norm;
    }
    MetricSummary::new(MetricKind::Betweenness, centrality, 0)
}

/// One-source Brandes pass: shortest-path counts then dependency
/// accumulation in reverse settlement order.
fn brandes_from_source(adj: &[Vec<(usize, f64)>], s: usize, mode: GeodesicMode) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0_f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    dist[s] = 0.0;
    sigma[s] = 1.0;

    match mode {
        GeodesicMode::Hop => {
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &(v, _) in &adj[u] {
                    if dist[v].is_infinite() {
                        dist[v] = dist[u] + 1.0;
                        queue.push_back(v);
                    }
                    if dist[v] == dist[u] + 1.0 {
                        sigma[v] += sigma[u];
                        preds[v].push(u);
                    }
                }
            }
        }
        GeodesicMode::Weighted => {
            use std::cmp::Reverse;
            use std::collections::BinaryHeap;
            #[derive(PartialEq)]
            struct Entry(f64, usize);
            impl Eq for Entry {}
            impl PartialOrd for Entry {
                fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                    Some(self.cmp(other))
                }
            }
            impl Ord for Entry {
                fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                    self.0
                        .total_cmp(&other.0)
                        .then_with(|| self.1.cmp(&other.1))
                }
            }
            let mut settled = vec![false; n];
            let mut heap = BinaryHeap::new();
            heap.push(Reverse(Entry(0.0, s)));
            while let Some(Reverse(Entry(d, u))) = heap.pop() {
                if settled[u] {
                    continue;
                }
                settled[u] = true;
                order.push(u);
                for &(v, len) in &adj[u] {
                    let nd = d + len;
                    const REL_TIE: f64 = 1e-12;
                    if nd < dist[v] * (1.0 - REL_TIE) {
                        dist[v] = nd;
                        sigma[v] = sigma[u];
                        preds[v] = vec![u];
                        heap.push(Reverse(Entry(nd, v)));
                    } else if (nd - dist[v]).abs() <= REL_TIE * dist[v].max(nd) {
                        sigma[v] += sigma[u];
                        preds[v].push(u);
                    }
                }
            }
        }
    }

    let mut delta = vec![0.0_f64; n];
    let mut out = vec![0.0_f64; n];
    for &w in order.iter().rev() {
        for &v in &preds[w] {
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
        }
        if w != s {
            out[w] = delta[w];
        }
    }
    out
}

/// Two-sample Kolmogorov-Smirnov statistic between empirical
/// distributions.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        let fa = i as f64 / xa.len() as f64;
        let fb = j as f64 / xb.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance alpha.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Comparison of one reference summary against a replicate ensemble.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub metric: MetricKind,
    /// z-score of each reference quantile within the ensemble's
    /// distribution of that quantile (min, q25, median, q75, max, mean).
    pub quantile_z: [f64; 6],
    /// KS statistic between the reference values and the pooled ensemble
    /// values.
    pub ks: f64,
    pub ks_threshold: f64,
    pub z_threshold: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "metric {}", self.metric)?;
        let names = ["min", "q25", "median", "q75", "max", "mean"];
        for (name, z) in names.iter().zip(self.quantile_z.iter()) {
            writeln!(w, "z_{name} {z:.6}")?;
        }
        writeln!(w, "ks {:.6}", self.ks)?;
        writeln!(w, "ks_threshold {:.6}", self.ks_threshold)?;
        writeln!(w, "z_threshold {:.6}", self.z_threshold)?;
        writeln!(w, "pass {}", self.pass)
    }
}

/// Thresholds for `compare_ensemble`.
#[derive(Debug, Clone, Copy)]
pub struct CompareThresholds {
    /// |z| bound on the median quantile z-scores.
    pub z_limit: f64,
    /// KS significance level for the pooled comparison.
    pub ks_alpha: f64,
}

impl Default for CompareThresholds {
    fn default() -> Self {
        Self {
            z_limit: 3.0,
            ks_alpha: 0.01,
        }
    }
}

/// Per-quantile z-scores of the reference within the ensemble, plus the
/// pooled two-sample KS statistic, judged against the thresholds.
pub fn compare_ensemble(
    reference: &MetricSummary,
    ensemble: &[MetricSummary],
    thresholds: &CompareThresholds,
) -> Result<ComparisonReport> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidArgument(
            "ensemble must have at least 2 members".into(),
        ));
    }
    if ensemble.iter().any(|m| m.metric != reference.metric) {
        return Err(Error::InvalidArgument(
            "ensemble metric kind mismatch".into(),
        ));
    }
    let ref_q = reference.quantiles();
    let ens_q: Vec<[f64; 6]> = ensemble.iter().map(|m| m.quantiles()).collect();
    let mut quantile_z = [0.0_f64; 6];
    for qi in 0..6 {
        let vals: Vec<f64> = ens_q.iter().map(|q| q[qi]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (vals.len() - 1) as f64;
        let sd = var.sqrt();
        quantile_z[qi] = if sd > 0.0 {
            (ref_q[qi] - mean) / sd
        } else if (ref_q[qi] - mean).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let pooled: Vec<f64> = ensemble
        .iter()
        .flat_map(|m| m.values.iter().copied())
        .collect();
    let ks = if reference.values.is_empty() || pooled.is_empty() {
        0.0
    } else if reference.values.iter().chain(pooled.iter()).all(|v| {
        (v - reference.values.first().copied().unwrap_or(0.0)).abs() < 1e-300
    }) {
        // constant metric everywhere
        0.0
    } else {
        ks_statistic(&reference.values, &pooled)
    };
    let ks_threshold = ks_critical_value(thresholds.ks_alpha, reference.values.len().max(1), pooled.len().max(1));
    let median_z = quantile_z[2].abs();
    let pass = median_z <= thresholds.z_limit && ks <= ks_threshold;
    Ok(ComparisonReport {
        metric: reference.metric,
        quantile_z,
        ks,
        ks_threshold,
        z_threshold: thresholds.z_limit,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeListFormat;

    fn graph(text: &str) -> WeightedGraph {
        WeightedGraph::parse_edge_list(text, EdgeListFormat::Whitespace).unwrap()
    }

    #[test]
    fn degree_row_sums() {
        let g = graph("a b 2.0");
        assert_eq!(weighted_degree(&g).values, vec![2.0, 2.0]);
        let tri = graph("a b 1\nb c 1\na c 1");
        assert_eq!(weighted_degree(&tri).values, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn degree_isolated_nodes_are_zero() {
        let g = graph("# nodes: a b c\na b 1.5");
        assert_eq!(weighted_degree(&g).values, vec![1.5, 1.5, 0.0]);
    }

    #[test]
    fn geodesic_hop_path() {
        let g = graph("a b 1\nb c 1");
        let s = geodesic_distances(&g, GeodesicMode::Hop);
        let mut vals = s.values.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals, vec![1.0, 1.0, 2.0]);
        assert_eq!(s.unreachable_pairs, 0);
    }

    #[test]
    fn geodesic_weighted_inverse_convention() {
        let g = graph("a b 4");
        let s = geodesic_distances(&g, GeodesicMode::Weighted);
        assert_eq!(s.values, vec![0.25]);
    }

    #[test]
    fn geodesic_disconnected_pairs_counted() {
        let g = graph("a b 1\nc d 1");
        let s = geodesic_distances(&g, GeodesicMode::Hop);
        // largest component has 2 nodes -> 1 pair; 5 of 6 pairs excluded
        assert_eq!(s.values.len(), 1);
        assert_eq!(s.unreachable_pairs, 5);
    }

    #[test]
    fn weighted_geodesics_satisfy_triangle_inequality() {
        let g = graph("a b 2\nb c 5\na c 1\nc d 3\nb d 0.5");
        let adj = adjacency_lists(&g, GeodesicMode::Weighted);
        let n = g.n_nodes();
        let dist: Vec<Vec<f64>> = (0..n).map(|s| dijkstra(&adj, s)).collect();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert!(dist[i][j] <= dist[i][k] + dist[k][j] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn star_center_betweenness_is_one() {
        let g = graph("c a 1\nc b 1\nc d 1");
        let s = betweenness(&g, GeodesicMode::Hop);
        // node 0 is the center by first-appearance order
        assert!((s.values[0] - 1.0).abs() < 1e-12);
        for v in &s.values[1..] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn complete_graph_betweenness_is_zero() {
        let g = graph("a b 1\na c 1\na d 1\nb c 1\nb d 1\nc d 1");
        let s = betweenness(&g, GeodesicMode::Hop);
        for v in &s.values {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn path_midpoint_betweenness() {
        let g = graph("a b 1\nb c 1");
        let s = betweenness(&g, GeodesicMode::Hop);
        assert!((s.values[1] - 1.0).abs() < 1e-12);
    }

    /// Brute-force betweenness by enumerating all simple paths.
    fn brute_force_betweenness(g: &WeightedGraph, mode: GeodesicMode) -> Vec<f64> {
        let n = g.n_nodes();
        let adj = adjacency_lists(g, mode);
        let mut through = vec![0.0_f64; n];
        for s in 0..n {
            for t in 0..n {
                if s == t {
                    continue;
                }
                // enumerate all paths s -> t by DFS, track shortest length
                let mut paths: Vec<Vec<usize>> = Vec::new();
                let mut stack = vec![(vec![s], 0.0_f64)];
                let mut best = f64::INFINITY;
                while let Some((path, len)) = stack.pop() {
                    let u = *path.last().unwrap();
                    if u == t {
                        if len < best - 1e-12 {
                            best = len;
                            paths.retain(|_| false);
                        }
                        if (len - best).abs() <= 1e-12 {
                            paths.push(path);
                        }
                        continue;
                    }
                    if len > best + 1e-12 {
                        continue;
                    }
                    for &(v, w) in &adj[u] {
                        if !path.contains(&v) {
                            let mut next = path.clone();
                            next.push(v);
                            stack.push((next, len + w));
                        }
                    }
                }
                if paths.is_empty() {
                    continue;
                }
                let total = paths.len() as f64;
                for p in &paths {
                    for &v in &p[1..p.len() - 1] {
                        through[v] += 1.0 / total;
                    }
                }
            }
        }
        let norm = ((n - 1) * (n - 2)) as f64;
        through.iter().map(|v| v / norm).collect()
    }

    #[test]
    fn betweenness_matches_brute_force_on_small_graphs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = 4 + (trial % 4);
            let mut lines = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.6 {
                        let w = 0.5 + rng.random::<f64>() * 2.0;
                        lines.push(format!("n{i} n{j} {w}"));
                    }
                }
            }
            if lines.is_empty() {
                continue;
            }
            let header: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let text = format!("# nodes: {}\n{}", header.join(" "), lines.join("\n"));
            let g = graph(&text);
            for mode in [GeodesicMode::Hop, GeodesicMode::Weighted] {
                let fast = betweenness(&g, mode);
                let slow = brute_force_betweenness(&g, mode);
                for (a, b) in fast.values.iter().zip(slow.iter()) {
                    assert!(
                        (a - b).abs() < 1e-9,
                        "trial {trial} mode {mode:?}: {a} vs {b}\n{text}"
                    );
                }
            }
        }
    }

    #[test]
    fn metrics_invariant_under_relabeling() {
        let g1 = graph("a b 2\nb c 1\nc d 0.5\na d 3");
        // same graph, nodes listed in a different order
        let g2 = graph("d c 0.5\nc b 1\nb a 2\nd a 3");
        let perm = [3usize, 2, 1, 0]; // g2 index of g1's node i
        let b1 = betweenness(&g1, GeodesicMode::Weighted);
        let b2 = betweenness(&g2, GeodesicMode::Weighted);
        for i in 0..4 {
            assert!((b1.values[i] - b2.values[perm[i]]).abs() < 1e-12);
        }
        let d1 = weighted_degree(&g1);
        let d2 = weighted_degree(&g2);
        for i in 0..4 {
            assert!((d1.values[i] - d2.values[perm[i]]).abs() < 1e-12);
        }
    }

    #[test]
    fn ks_statistic_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b = [10.0, 11.0, 12.0];
        assert_eq!(ks_statistic(&a, &b), 1.0);
    }

    #[test]
    fn compare_ensemble_identical_member() {
        let mk = |vals: Vec<f64>| MetricSummary::new(MetricKind::Degree, vals, 0);
        let reference = mk(vec![1.0, 2.0, 3.0, 4.0]);
        let ensemble = vec![
            mk(vec![1.0, 2.0, 3.0, 4.0]),
            mk(vec![1.1, 2.1, 2.9, 4.2]),
            mk(vec![0.9, 1.8, 3.2, 3.9]),
        ];
        let report =
            compare_ensemble(&reference, &ensemble, &CompareThresholds::default()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn compare_ensemble_constant_metric_ks_zero() {
        let mk = |vals: Vec<f64>| MetricSummary::new(MetricKind::Degree, vals, 0);
        let reference = mk(vec![2.0, 2.0]);
        let ensemble = vec![mk(vec![2.0, 2.0]), mk(vec![2.0, 2.0])];
        let report =
            compare_ensemble(&reference, &ensemble, &CompareThresholds::default()).unwrap();
        assert_eq!(report.ks, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn compare_ensemble_needs_two_members() {
        let mk = |vals: Vec<f64>| MetricSummary::new(MetricKind::Degree, vals, 0);
        let err = compare_ensemble(
            &mk(vec![1.0]),
            &[mk(vec![1.0])],
            &CompareThresholds::default(),
        );
        assert!(err.is_err());
    }
}
