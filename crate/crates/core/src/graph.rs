//! Attributed graph storage: CSR adjacency, dense attributes, optional labels.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;

/// Undirected attributed graph with CSR adjacency.
///
/// Neighbor lists are sorted and free of self-loops and duplicates; every
/// edge is stored in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph<T> {
    row_offsets: Vec<usize>,
    col_indices: Vec<NodeId>,
    attributes: Array2<T>,
    labels: Option<Vec<u8>>,
}

impl<T: Scalar> AttributedGraph<T> {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
    /// deduplicated and stripped of self-loops.
    pub fn from_edges<I>(edges: I, attributes: Array2<T>, labels: Option<Vec<u8>>) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let n = attributes.nrows();
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::Bounds { index: w, len: n });
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            col_indices.extend(list);
            row_offsets.push(col_indices.len());
        }
        let g = Self {
            row_offsets,
            col_indices,
            attributes,
            labels: None,
        };
        g.validate_attributes()?;
        g.with_labels(labels)
    }

    /// Attaches (or clears) per-node 0/1 anomaly labels.
    pub fn with_labels(mut self, labels: Option<Vec<u8>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.num_nodes() {
                return Err(Error::Validation(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    self.num_nodes()
                )));
            }
            if let Some(bad) = l.iter().find(|&&x| x > 1) {
                return Err(Error::Validation(format!("label {bad} is not 0/1")));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Replaces the attribute matrix, keeping topology and labels.
    pub fn with_attributes(mut self, attributes: Array2<T>) -> Result<Self> {
        if attributes.nrows() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "attribute rows {} != nodes {}",
                attributes.nrows(),
                self.num_nodes()
            )));
        }
        self.attributes = attributes;
        self.validate_attributes()?;
        Ok(self)
    }

    fn validate_attributes(&self) -> Result<()> {
        for ((r, c), x) in self.attributes.indexed_iter() {
            if !x.is_finite() {
                return Err(Error::Validation(format!("non-finite attribute at row {r}, column {c}")));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn num_features(&self) -> usize {
        self.attributes.ncols()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[NodeId] {
        &self.col_indices
    }

    pub fn attributes(&self) -> &Array2<T> {
        &self.attributes
    }

    pub fn attribute_row(&self, v: NodeId) -> ArrayView1<'_, T> {
        self.attributes.row(v)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    fn check(&self, v: NodeId) -> Result<()> {
        if v >= self.num_nodes() {
            Err(Error::Bounds {
                index: v,
                len: self.num_nodes(),
            })
        } else {
            Ok(())
        }
    }

    pub fn degree(&self, v: NodeId) -> Result<usize> {
        self.check(v)?;
        Ok(self.row_offsets[v + 1] - self.row_offsets[v])
    }

    /// Sorted neighbors of `v`. Panics if `v` is out of range.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.num_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| u < v)
                .map(move |&v| (u, v))
        })
    }

    /// Dense 0/1 adjacency matrix.
    pub fn dense_adjacency(&self) -> Array2<u8> {
        let n = self.num_nodes();
        let mut a = Array2::zeros((n, n));
        for u in 0..n {
            for &v in self.neighbors(u) {
                a[[u, v]] = 1;
            }
        }
        a
    }

    /// Extracts the subgraph induced by `node_ids`, keeping their order.
    ///
    /// Repeated ids (padding) share attribute rows but have no edges between
    /// the copies.
    pub fn induced_subgraph(&self, node_ids: &[NodeId]) -> Result<SubgraphView<T>> {
        if node_ids.is_empty() {
            return Err(Error::Config("induced subgraph needs at least one node".into()));
        }
        for &v in node_ids {
            self.check(v)?;
        }
        let k = node_ids.len();
        let mut local_adjacency = Array2::zeros((k, k));
        for p in 0..k {
            for q in (p + 1)..k {
                if self.has_edge(node_ids[p], node_ids[q]) {
                    local_adjacency[[p, q]] = 1;
                    local_adjacency[[q, p]] = 1;
                }
            }
        }
        let mut local_attributes = Array2::zeros((k, self.num_features()));
        for (p, &v) in node_ids.iter().enumerate() {
            local_attributes.row_mut(p).assign(&self.attributes.row(v));
        }
        Ok(SubgraphView {
            node_ids: node_ids.to_vec(),
            local_adjacency,
            local_attributes,
        })
    }

    /// Writes `edges.tsv`, `features.csv` and (when present) `labels.csv`
    /// into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_edges(dir.join("edges.tsv"))?;
        self.write_features(dir.join("features.csv"))?;
        if let Some(labels) = &self.labels {
            write_labels(dir.join("labels.csv"), labels)?;
        }
        Ok(())
    }

    pub fn write_edges(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_with(path, |w| {
            for (u, v) in self.edges() {
                writeln!(w, "{u}\t{v}")?;
            }
            Ok(())
        })
    }

    /// Floats are written in shortest round-trip form.
    pub fn write_features(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_with(path, |w| {
            for row in self.attributes.rows() {
                let mut first = true;
                for x in row {
                    if !first {
                        w.write_all(b",")?;
                    }
                    first = false;
                    write!(w, "{x}")?;
                }
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }
}

/// A K-node view of the graph with the target at local index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphView<T> {
    pub node_ids: Vec<NodeId>,
    pub local_adjacency: Array2<u8>,
    pub local_attributes: Array2<T>,
}

impl<T: Scalar> SubgraphView<T> {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn target(&self) -> NodeId {
        self.node_ids[0]
    }

    /// Symmetrically normalized adjacency with self-loops,
    /// `D^-1/2 (A + I) D^-1/2`, as a dense K x K matrix.
    pub fn normalized_adjacency(&self) -> Array2<T> {
        let k = self.len();
        let deg: Vec<T> = (0..k)
            .map(|p| {
                let d = self.local_adjacency.row(p).iter().filter(|&&a| a != 0).count() + 1;
                T::lit(d as f64).sqrt().recip()
            })
            .collect();
        Array2::from_shape_fn((k, k), |(p, q)| {
            if p == q || self.local_adjacency[[p, q]] != 0 {
                deg[p] * deg[q]
            } else {
                T::zero()
            }
        })
    }
}

pub(crate) fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    write_with(path, |w| {
        for l in labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a comma-separated feature matrix, one row per node.
pub fn read_features<T: Scalar>(path: impl AsRef<Path>) -> Result<Array2<T>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let x: T = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad number {:?}", field.trim())))?;
            if !x.is_finite() {
                return Err(Error::Validation(format!(
                    "{}:{}: non-finite feature {:?}",
                    path.display(),
                    i + 1,
                    field.trim()
                )));
            }
            values.push(x);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(path, i + 1, format!("expected {c} columns, found {width}")))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Shape(e.to_string()))
}

/// Reads `u<TAB>v` edge lines; `#` lines and blank lines are skipped.
pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<(NodeId, NodeId)>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = || -> Result<NodeId> {
            let f = it
                .next()
                .ok_or_else(|| parse_err(path, i + 1, "expected two node ids"))?;
            f.parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad node id {f:?}")))
        };
        let u = next()?;
        let v = next()?;
        if it.next().is_some() {
            return Err(parse_err(path, i + 1, "trailing fields"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => return Err(parse_err(path, i + 1, format!("label must be 0 or 1, got {other:?}"))),
        }
    }
    Ok(labels)
}

/// Loads and validates a graph from the on-disk formats.
pub fn load_graph<T: Scalar>(
    edges_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
    labels_path: Option<&Path>,
) -> Result<AttributedGraph<T>> {
    let attributes = read_features(features_path)?;
    let edges = read_edges(edges_path)?;
    let labels = labels_path.map(read_labels).transpose()?;
    AttributedGraph::from_edges(edges, attributes, labels)
}
