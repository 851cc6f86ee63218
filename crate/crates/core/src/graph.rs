//! Weighted graph representation, entrywise matrix powers, indicator
//! matrices, and edge-list I/O.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    entries: DMatrix<f64>,
}

impl DenseSymMatrix {
    /// Wrap a matrix, validating squareness, symmetry and finiteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::InvalidArgument(format!(
                "matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix entries must be finite".into(),
            ));
        }
        let mut max_dev = 0.0_f64;
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                max_dev = max_dev.max((entries[(i, j)] - entries[(j, i)]).abs());
            }
        }
        if max_dev > 0.0 {
            return Err(Error::NotSymmetric { max_dev });
        }
        Ok(Self { entries })
    }

    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    /// Dump as plain-text dense rows, space-separated, row per line.
    pub fn write_dense(&self, mut w: impl Write) -> std::io::Result<()> {
        for i in 0..self.order() {
            let row: Vec<String> = (0..self.order())
                .map(|j| format!("{:.16e}", self.entries[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Symmetric nonnegative weighted adjacency matrix with node labels.
///
/// The diagonal is zero (no self-loops) and a zero entry means the edge
/// is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    weights: DMatrix<f64>,
    labels: Vec<String>,
}

/// Text layout of an edge-list stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeListFormat {
    /// `src dst weight`, whitespace separated.
    Whitespace,
    /// `src,dst,weight`.
    Csv,
}

impl WeightedGraph {
    /// Build a graph from a weight matrix, validating the invariants:
    /// symmetric, zero diagonal, finite nonnegative entries.
    pub fn from_weights(weights: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "weight matrix must be square and non-empty, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry ({i}, {i}) must be zero"
                )));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidWeight {
                        src: i.to_string(),
                        dst: j.to_string(),
                        weight: w,
                        msg: "weights must be finite and nonnegative".into(),
                    });
                }
            }
        }
        let mut max_dev = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                max_dev = max_dev.max((weights[(i, j)] - weights[(j, i)]).abs());
            }
        }
        if max_dev > 0.0 {
            return Err(Error::NotSymmetric { max_dev });
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} labels for {} nodes",
                        l.len(),
                        n
                    )));
                }
                l
            }
            None => (0..n).map(|i| i.to_string()).collect(),
        };
        Ok(Self { weights, labels })
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Parse an edge-list stream. Node ids are mapped to contiguous
    /// indices in first-appearance order. `#` lines are comments except
    /// for an optional `# nodes:` header that pre-registers node ids so
    /// isolated nodes survive a round-trip.
    pub fn load_edge_list(reader: impl BufRead, format: EdgeListFormat) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();

        let intern = |name: &str, order: &mut Vec<String>, index: &mut HashMap<String, usize>| {
            if let Some(&i) = index.get(name) {
                i
            } else {
                let i = order.len();
                order.push(name.to_string());
                index.insert(name.to_string(), i);
                i
            }
        };

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("# nodes:") {
                for name in rest.split_whitespace() {
                    intern(name, &mut order, &mut index);
                }
                continue;
            }
            if trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = match format {
                EdgeListFormat::Whitespace => trimmed.split_whitespace().collect(),
                EdgeListFormat::Csv => trimmed.split(',').map(str::trim).collect(),
            };
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected `src dst weight`, got {} fields", fields.len()),
                });
            }
            let w: f64 = fields[2].parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad weight `{}`: {e}", fields[2]),
            })?;
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidWeight {
                    src: fields[0].to_string(),
                    dst: fields[1].to_string(),
                    weight: w,
                    msg: "edge weights must be finite and > 0 (zero means absence)".into(),
                });
            }
            if fields[0] == fields[1] {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("self-loop on `{}` not allowed", fields[0]),
                });
            }
            let i = intern(fields[0], &mut order, &mut index);
            let j = intern(fields[1], &mut order, &mut index);
            edges.push((i, j, w));
        }

        let n = order.len();
        if n == 0 {
            return Err(Error::Parse {
                line: 0,
                msg: "empty edge list".into(),
            });
        }
        let mut weights = DMatrix::<f64>::zeros(n, n);
        for (i, j, w) in edges {
            let existing = weights[(i, j)];
            if existing != 0.0 && existing != w {
                return Err(Error::ConflictingEdge {
                    src: order[i].clone(),
                    dst: order[j].clone(),
                    first: existing,
                    second: w,
                });
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        Self::from_weights(weights, Some(order))
    }

    /// Parse an edge list held in a string.
    pub fn parse_edge_list(text: &str, format: EdgeListFormat) -> Result<Self> {
        Self::load_edge_list(std::io::Cursor::new(text.as_bytes()), format)
    }

    /// Write the graph back out as an edge list. Emits the `# nodes:`
    /// header so the node index mapping and isolated nodes round-trip.
    pub fn write_edge_list(&self, mut w: impl Write, format: EdgeListFormat) -> std::io::Result<()> {
        writeln!(w, "# nodes: {}", self.labels.join(" "))?;
        let sep = match format {
            EdgeListFormat::Whitespace => " ",
            EdgeListFormat::Csv => ",",
        };
        for i in 0..self.n_nodes() {
            for j in (i + 1)..self.n_nodes() {
                let wt = self.weights[(i, j)];
                if wt > 0.0 {
                    writeln!(
                        w,
                        "{}{sep}{}{sep}{}",
                        self.labels[i], self.labels[j], wt
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Entrywise k-th power W^(k). Rejects k = 0: the zeroth moment is
    /// handled analytically downstream, never spectrally.
    pub fn hadamard_power(&self, k: u32) -> Result<DenseSymMatrix> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "hadamard power k = 0 rejected; the k = 0 moment is handled analytically".into(),
            ));
        }
        let entries = self.weights.map(|w| w.powi(k as i32));
        DenseSymMatrix::new(entries)
    }

    /// Binary indicator matrix A = 1{W > 0}.
    pub fn indicator_matrix(&self) -> DenseSymMatrix {
        let entries = self.weights.map(|w| if w > 0.0 { 1.0 } else { 0.0 });
        DenseSymMatrix::new(entries).expect("indicator of a valid graph is symmetric")
    }
}
