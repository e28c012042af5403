//! Weighted trees: construction and validation, path-length metrics,
//! subdivision, rescaling, seeded random generation, and the tree file
//! format.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kahan::kahan_sum;
use crate::metric::FiniteMetric;

/// Version string of the tree file format; the file header is this text
/// prefixed by `# `.
pub const TREE_FORMAT_VERSION: &str = "magdiv-tree v1";

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("a tree must have at least one vertex")]
    Empty,

    #[error("invalid vertex label {0:?} (labels must be nonempty and contain no whitespace)")]
    BadLabel(String),

    #[error("duplicate vertex label {0:?}")]
    DuplicateVertex(String),

    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),

    #[error("edge ({u:?}, {v:?}) has nonpositive or nonfinite length {length}")]
    BadLength { u: String, v: String, length: f64 },

    #[error("self-loop at vertex {0:?}")]
    SelfLoop(String),

    #[error("duplicate edge ({0:?}, {1:?})")]
    DuplicateEdge(String, String),

    #[error("edge set does not form a tree: {0}")]
    NotATree(String),

    #[error("invalid scale factor {0}")]
    BadScale(f64),

    #[error("invalid length law: {0}")]
    BadLengthLaw(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An undirected edge between vertex indices `u` and `v` with a strictly
/// positive length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

/// Degree classification of a vertex: leaves have degree at most one,
/// branch points degree at least three.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VertexClass {
    pub degree: usize,
}

impl VertexClass {
    pub fn is_leaf(&self) -> bool {
        self.degree <= 1
    }

    pub fn is_branch(&self) -> bool {
        self.degree >= 3
    }
}

/// A finite tree with labeled vertices and strictly positive edge lengths.
/// The vertex set together with path-length distances forms a metric space
/// (see [`WeightedTree::metric`]).
#[derive(Clone, Debug)]
pub struct WeightedTree {
    labels: Vec<String>,
    edges: Vec<Edge>,
    /// Per vertex: `(neighbor index, edge index)` pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl WeightedTree {
    /// Builds a tree from labeled edges. The vertex order is the order given.
    pub fn new(labels: Vec<String>, edges: Vec<(String, String, f64)>) -> Result<Self, TreeError> {
        let index: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut indexed = Vec::with_capacity(edges.len());
        for (u, v, length) in &edges {
            let ui = *index
                .get(u.as_str())
                .ok_or_else(|| TreeError::UnknownVertex(u.clone()))?;
            let vi = *index
                .get(v.as_str())
                .ok_or_else(|| TreeError::UnknownVertex(v.clone()))?;
            indexed.push((ui, vi, *length));
        }
        Self::from_indexed(labels, indexed)
    }

    /// Builds a tree from edges given as vertex indices into `labels`.
    pub fn from_indexed(
        labels: Vec<String>,
        edges: Vec<(usize, usize, f64)>,
    ) -> Result<Self, TreeError> {
        let n = labels.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        let mut seen = HashSet::with_capacity(n);
        for label in &labels {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(TreeError::BadLabel(label.clone()));
            }
            if !seen.insert(label.as_str()) {
                return Err(TreeError::DuplicateVertex(label.clone()));
            }
        }
        if edges.len() != n - 1 {
            return Err(TreeError::NotATree(format!(
                "{} vertices require {} edges, found {}",
                n,
                n - 1,
                edges.len()
            )));
        }
        let mut edge_set = HashSet::with_capacity(edges.len());
        let mut built = Vec::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for (ei, &(u, v, length)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(TreeError::UnknownVertex(format!("#{}", u.max(v))));
            }
            if u == v {
                return Err(TreeError::SelfLoop(labels[u].clone()));
            }
            if !length.is_finite() || length <= 0.0 {
                return Err(TreeError::BadLength {
                    u: labels[u].clone(),
                    v: labels[v].clone(),
                    length,
                });
            }
            if !edge_set.insert((u.min(v), u.max(v))) {
                return Err(TreeError::DuplicateEdge(
                    labels[u].clone(),
                    labels[v].clone(),
                ));
            }
            adjacency[u].push((v, ei));
            adjacency[v].push((u, ei));
            built.push(Edge { u, v, length });
        }
        // Connectivity plus the edge count above rules out cycles.
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut reached = 1;
        while let Some(x) = stack.pop() {
            for &(y, _) in &adjacency[x] {
                if !visited[y] {
                    visited[y] = true;
                    reached += 1;
                    stack.push(y);
                }
            }
        }
        if reached != n {
            return Err(TreeError::NotATree(format!(
                "graph is disconnected ({reached} of {n} vertices reachable)"
            )));
        }
        Ok(Self {
            labels,
            edges: built,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.adjacency[vertex].len()
    }

    pub fn vertex_class(&self, vertex: usize) -> VertexClass {
        VertexClass {
            degree: self.degree(vertex),
        }
    }

    pub fn vertex_classes(&self) -> Vec<VertexClass> {
        (0..self.len()).map(|v| self.vertex_class(v)).collect()
    }

    /// `(neighbor, edge length)` pairs incident to a vertex.
    pub fn neighbors(&self, vertex: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[vertex]
            .iter()
            .map(|&(y, ei)| (y, self.edges[ei].length))
    }

    /// Sum of all edge lengths, accumulated with compensated summation.
    pub fn total_length(&self) -> f64 {
        kahan_sum(self.edges.iter().map(|e| e.length))
    }

    /// Path-length distances from `source` to every vertex.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let n = self.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        let mut stack = vec![source];
        while let Some(x) = stack.pop() {
            for &(y, ei) in &self.adjacency[x] {
                if dist[y].is_infinite() {
                    dist[y] = dist[x] + self.edges[ei].length;
                    stack.push(y);
                }
            }
        }
        dist
    }

    /// The metric space on the vertex set, with `d(x, y)` the sum of edge
    /// lengths along the unique path from `x` to `y`.
    pub fn metric(&self) -> FiniteMetric {
        let n = self.len();
        let mut dist = Array2::<f64>::zeros((n, n));
        for source in 0..n {
            let row = self.distances_from(source);
            for (target, &d) in row.iter().enumerate() {
                dist[[source, target]] = d;
            }
        }
        // Force exact symmetry: the two traversal orders can round
        // differently along long paths.
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist[[i, j]];
                dist[[j, i]] = d;
            }
        }
        // Path-length sums satisfy the triangle inequality by construction.
        FiniteMetric::new_skip_triangle(self.labels.clone(), dist)
            .expect("tree metric satisfies the metric invariants")
    }

    /// Replaces every edge of length `ℓ` by a path of `k` edges of length
    /// `ℓ/k`. Original labels are kept; a vertex inserted on edge `(u, v)`
    /// (endpoints in lexicographic order) is labeled `<u>|<v>|<i>` where `i`
    /// counts from `u`.
    ///
    /// Panics if `k == 0`, or if an original label collides with an
    /// inserted one (a vertex literally named like `a|b|1` on a subdivided
    /// edge `(a, b)`).
    pub fn subdivide(&self, k: usize) -> WeightedTree {
        assert!(k >= 1, "subdivision factor must be at least 1");
        if k == 1 {
            return self.clone();
        }
        let mut labels = self.labels.clone();
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(self.edges.len() * k);
        for edge in &self.edges {
            let (mut a, mut b) = (edge.u, edge.v);
            if self.labels[a] > self.labels[b] {
                std::mem::swap(&mut a, &mut b);
            }
            let segment = edge.length / k as f64;
            let mut prev = a;
            for i in 1..k {
                let label = format!("{}|{}|{}", self.labels[a], self.labels[b], i);
                labels.push(label);
                let inserted = labels.len() - 1;
                edges.push((prev, inserted, segment));
                prev = inserted;
            }
            edges.push((prev, b, segment));
        }
        WeightedTree::from_indexed(labels, edges).expect("subdivision preserves the tree shape")
    }

    /// Multiplies every edge length by `s` (s > 0), realizing the rescaled
    /// metric space.
    pub fn scale(&self, s: f64) -> Result<WeightedTree, TreeError> {
        if !s.is_finite() || s <= 0.0 {
            return Err(TreeError::BadScale(s));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| (e.u, e.v, e.length * s))
            .collect();
        WeightedTree::from_indexed(self.labels.clone(), edges)
    }

    /// Serializes to the tree file format: a `# magdiv-tree v1` header, then
    /// one `<u> <v> <length>` line per edge with 17 significant digits (a
    /// single-vertex tree writes its label alone on a line).
    pub fn to_tree_file_string(&self) -> String {
        let mut out = format!("# {TREE_FORMAT_VERSION}\n");
        if self.edges.is_empty() {
            out.push_str(&self.labels[0]);
            out.push('\n');
            return out;
        }
        for edge in &self.edges {
            out.push_str(&format!(
                "{} {} {:.16e}\n",
                self.labels[edge.u], self.labels[edge.v], edge.length
            ));
        }
        out
    }

    /// Parses the tree file format. The vertex set is inferred from the edge
    /// lines, ordered by first appearance.
    pub fn from_tree_file_str(text: &str) -> Result<Self, TreeError> {
        let mut lines = text.lines().map(str::trim_end).enumerate();
        let (_, header) = lines.next().ok_or_else(|| TreeError::Parse {
            line: 1,
            msg: "empty file".to_string(),
        })?;
        if header.trim() != format!("# {TREE_FORMAT_VERSION}") {
            return Err(TreeError::Parse {
                line: 1,
                msg: format!("expected header \"# {TREE_FORMAT_VERSION}\", found {header:?}"),
            });
        }

        let mut labels: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |label: &str, labels: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(label) {
                return i;
            }
            labels.push(label.to_string());
            index.insert(label.to_string(), labels.len() - 1);
            labels.len() - 1
        };

        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let mut saw_isolated = false;
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                [single] => {
                    intern(single, &mut labels);
                    saw_isolated = true;
                }
                [u, v, length] => {
                    let ui = intern(u, &mut labels);
                    let vi = intern(v, &mut labels);
                    let length: f64 = length.parse().map_err(|_| TreeError::Parse {
                        line: line_no + 1,
                        msg: format!("cannot parse edge length {length:?}"),
                    })?;
                    edges.push((ui, vi, length));
                }
                _ => return Err(TreeError::Parse {
                    line: line_no + 1,
                    msg: format!(
                        "expected \"<u> <v> <length>\" or a single vertex label, found {} tokens",
                        tokens.len()
                    ),
                }),
            }
        }
        if labels.is_empty() {
            return Err(TreeError::Parse {
                line: 0,
                msg: "file contains no vertices".to_string(),
            });
        }
        if saw_isolated && (labels.len() > 1 || !edges.is_empty()) {
            return Err(TreeError::NotATree(
                "an isolated vertex line is only valid for a single-vertex tree".to_string(),
            ));
        }
        WeightedTree::from_indexed(labels, edges)
    }
}

/// Distribution of edge lengths for [`random_tree`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LengthLaw {
    /// Every edge gets the same length.
    Fixed(f64),
    /// Lengths drawn uniformly from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

impl LengthLaw {
    fn validate(&self) -> Result<(), TreeError> {
        match *self {
            LengthLaw::Fixed(c) => {
                if !c.is_finite() || c <= 0.0 {
                    return Err(TreeError::BadLengthLaw(format!(
                        "fixed length {c} must be positive and finite"
                    )));
                }
            }
            LengthLaw::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || lo > hi {
                    return Err(TreeError::BadLengthLaw(format!(
                        "uniform bounds ({lo}, {hi}) must satisfy 0 < lo ≤ hi"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            LengthLaw::Fixed(c) => c,
            LengthLaw::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
        }
    }
}

/// Generates a uniformly random labeled tree on `n` vertices (`v0`, `v1`,
/// ...) via a random Prüfer sequence, with edge lengths drawn from
/// `length_law`. Deterministic for a fixed seed.
pub fn random_tree(n: usize, length_law: &LengthLaw, seed: u64) -> Result<WeightedTree, TreeError> {
    if n == 0 {
        return Err(TreeError::Empty);
    }
    length_law.validate()?;
    let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology: Vec<(usize, usize)> = match n {
        1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => {
            let prufer: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
            tree_from_prufer(&prufer)
        }
    };
    let edges = topology
        .into_iter()
        .map(|(u, v)| (u, v, length_law.sample(&mut rng)))
        .collect();
    WeightedTree::from_indexed(labels, edges)
}

/// Decodes a Prüfer sequence over `0..s.len()+2` into the edge list of the
/// corresponding labeled tree.
fn tree_from_prufer(sequence: &[usize]) -> Vec<(usize, usize)> {
    let n = sequence.len() + 2;
    let mut degree = vec![1u32; n];
    for &a in sequence {
        degree[a] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| degree[i] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &a in sequence {
        let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
        degree[leaf] -= 1;
        degree[a] -= 1;
        edges.push((leaf, a));
        if degree[a] == 1 {
            leaves.push(Reverse(a));
        }
    }
    let Reverse(u) = leaves.pop().expect("two leaves remain");
    let Reverse(v) = leaves.pop().expect("two leaves remain");
    edges.push((u, v));
    edges
}
