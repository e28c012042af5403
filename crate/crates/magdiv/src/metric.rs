//! Finite metric spaces, the similarity kernel `exp(-d)`, the similarity
//! bilinear form, and positive-definite linear solves.

use ndarray::Array2;
use thiserror::Error;

use crate::kahan::{kahan_sum, KahanSum};

/// Slack allowed when validating the triangle inequality.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// A vector of masses is a probability measure when it is nonnegative and
/// its total is within this distance of 1.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Relative residual bound enforced by [`SimilarityKernel::solve_spd`]:
/// `‖Zv − rhs‖_∞ ≤ SOLVE_RESIDUAL_TOL · (1 + ‖rhs‖_∞)`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric space must contain at least one point")]
    Empty,

    #[error("distance matrix is {rows}x{cols}, expected {n}x{n} to match {n} labels")]
    ShapeMismatch { rows: usize, cols: usize, n: usize },

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("dist[{i}][{j}] = {value} is not a valid distance")]
    BadDistance { i: usize, j: usize, value: f64 },

    #[error("distance matrix is not symmetric at ({i}, {j}): {forward} vs {backward}")]
    NotSymmetric {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },

    #[error(
        "triangle inequality violated: d({i},{k}) exceeds d({i},{j}) + d({j},{k}) by {excess:e}"
    )]
    TriangleViolation {
        i: usize,
        j: usize,
        k: usize,
        excess: f64,
    },

    #[error("kernel is not positive definite (nonpositive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("solve residual {residual:e} exceeds bound {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid scale factor {0}")]
    BadScale(f64),

    #[error("label {0:?} contains a comma or line break and cannot be written as CSV")]
    UnwritableLabel(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A finite metric space: distinct point labels plus a symmetric matrix of
/// pairwise distances with zero diagonal and positive off-diagonal entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetric {
    labels: Vec<String>,
    dist: Array2<f64>,
}

impl FiniteMetric {
    /// Builds a metric space, validating symmetry, the diagonal, positivity,
    /// and the triangle inequality (within [`TRIANGLE_TOL`]).
    pub fn new(labels: Vec<String>, dist: Array2<f64>) -> Result<Self, MetricError> {
        Self::build(labels, dist, true)
    }

    /// Like [`FiniteMetric::new`] but skips the O(n³) triangle-inequality
    /// check. Intended for large inputs and for matrices that satisfy the
    /// inequality by construction (path-length metrics, rescalings).
    pub fn new_skip_triangle(labels: Vec<String>, dist: Array2<f64>) -> Result<Self, MetricError> {
        Self::build(labels, dist, false)
    }

    fn build(
        labels: Vec<String>,
        dist: Array2<f64>,
        check_triangle: bool,
    ) -> Result<Self, MetricError> {
        let n = labels.len();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        if dist.nrows() != n || dist.ncols() != n {
            return Err(MetricError::ShapeMismatch {
                rows: dist.nrows(),
                cols: dist.ncols(),
                n,
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(MetricError::DuplicateLabel(label.clone()));
            }
        }
        for i in 0..n {
            let d = dist[[i, i]];
            if d != 0.0 {
                return Err(MetricError::BadDistance { i, j: i, value: d });
            }
            for j in (i + 1)..n {
                let forward = dist[[i, j]];
                let backward = dist[[j, i]];
                if !forward.is_finite() || forward <= 0.0 {
                    return Err(MetricError::BadDistance {
                        i,
                        j,
                        value: forward,
                    });
                }
                if forward != backward {
                    return Err(MetricError::NotSymmetric {
                        i,
                        j,
                        forward,
                        backward,
                    });
                }
            }
        }
        if check_triangle {
            for i in 0..n {
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    for k in 0..n {
                        let excess = dist[[i, k]] - dist[[i, j]] - dist[[j, k]];
                        if excess > TRIANGLE_TOL {
                            return Err(MetricError::TriangleViolation { i, j, k, excess });
                        }
                    }
                }
            }
        }
        Ok(Self { labels, dist })
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

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    /// Index of a label, if present.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// The rescaled space: every distance multiplied by `t` (t > 0).
    ///
    /// All invariants are preserved by a positive rescaling, so no
    /// revalidation takes place.
    pub fn scaled(&self, t: f64) -> Result<Self, MetricError> {
        if !t.is_finite() || t <= 0.0 {
            return Err(MetricError::BadScale(t));
        }
        Ok(Self {
            labels: self.labels.clone(),
            dist: self.dist.mapv(|d| d * t),
        })
    }

    /// The similarity kernel `Z(x, y) = exp(-d(x, y))`.
    pub fn kernel(&self) -> SimilarityKernel {
        SimilarityKernel {
            z: self.dist.mapv(|d| (-d).exp()),
        }
    }

    /// Parses the distance-matrix CSV format: a header row
    /// `label,<l1>,...,<ln>` followed by one row per point
    /// `<li>,d(i,1),...,d(i,n)`.
    pub fn from_csv_str(text: &str, check_triangle: bool) -> Result<Self, MetricError> {
        let parse = |line: usize, msg: String| MetricError::Parse { line, msg };
        let mut lines = text
            .lines()
            .map(str::trim_end)
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (header_no, header) = lines
            .next()
            .ok_or_else(|| parse(1, "empty file".to_string()))?;
        let mut cells = header.split(',');
        let first = cells.next().unwrap_or_default();
        if first != "label" {
            return Err(parse(
                header_no + 1,
                format!("header must start with \"label\", found {first:?}"),
            ));
        }
        let labels: Vec<String> = cells.map(str::to_string).collect();
        let n = labels.len();
        if n == 0 {
            return Err(parse(header_no + 1, "header lists no labels".to_string()));
        }

        let mut dist = Array2::<f64>::zeros((n, n));
        let mut row = 0usize;
        for (line_no, line) in lines {
            if row >= n {
                return Err(parse(
                    line_no + 1,
                    format!("expected {n} data rows, found more"),
                ));
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 1 {
                return Err(parse(
                    line_no + 1,
                    format!("expected {} cells, found {}", n + 1, cells.len()),
                ));
            }
            if cells[0] != labels[row] {
                return Err(parse(
                    line_no + 1,
                    format!(
                        "row label {:?} does not match header label {:?}",
                        cells[0], labels[row]
                    ),
                ));
            }
            for (col, cell) in cells[1..].iter().enumerate() {
                let value: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| parse(line_no + 1, format!("cannot parse distance {cell:?}")))?;
                dist[[row, col]] = value;
            }
            row += 1;
        }
        if row != n {
            return Err(MetricError::Parse {
                line: 0,
                msg: format!("expected {n} data rows, found {row}"),
            });
        }
        Self::build(labels, dist, check_triangle)
    }

    /// Serializes to the distance-matrix CSV format with 17 significant
    /// digits, so that parsing the output reproduces the same doubles.
    pub fn to_csv_string(&self) -> Result<String, MetricError> {
        for label in &self.labels {
            if label.contains(',') || label.contains('\n') || label.contains('\r') {
                return Err(MetricError::UnwritableLabel(label.clone()));
            }
        }
        let n = self.len();
        let mut out = String::from("label");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for i in 0..n {
            out.push_str(&self.labels[i]);
            for j in 0..n {
                out.push(',');
                out.push_str(&format!("{:.16e}", self.dist[[i, j]]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// The similarity kernel of a finite metric space: symmetric, unit diagonal,
/// entries in (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityKernel {
    z: Array2<f64>,
}

impl SimilarityKernel {
    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.z
    }

    /// The principal submatrix on `indices`, i.e. the kernel of the
    /// corresponding subspace.
    pub fn restrict(&self, indices: &[usize]) -> SimilarityKernel {
        let m = indices.len();
        let mut z = Array2::<f64>::zeros((m, m));
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                z[[a, b]] = self.z[[i, j]];
            }
        }
        SimilarityKernel { z }
    }

    /// The function `Zμ`, evaluated at every point:
    /// `(Zμ)(x) = Σ_y Z(x, y) μ(y)`.
    pub fn apply(&self, mu: &Measure) -> Result<Vec<f64>, MetricError> {
        let n = self.len();
        if mu.len() != n {
            return Err(MetricError::DimensionMismatch(n, mu.len()));
        }
        let mut out = vec![0.0; n];
        for (o, row) in out.iter_mut().zip(self.z.rows()) {
            let mut acc = KahanSum::new();
            for (&z, &mass) in row.iter().zip(&mu.values) {
                acc.add(z * mass);
            }
            *o = acc.value();
        }
        Ok(out)
    }

    /// The similarity bilinear form `⟨a, b⟩ = aᵀ Z b`, the average
    /// similarity between two independent samples when `a` and `b` are
    /// probability measures.
    pub fn bilinear_form(&self, a: &Measure, b: &Measure) -> Result<f64, MetricError> {
        let n = self.len();
        if a.len() != n || b.len() != n {
            return Err(MetricError::DimensionMismatch(a.len(), b.len()));
        }
        let zb = self.apply(b)?;
        Ok(kahan_sum(
            a.values.iter().zip(&zb).map(|(&ai, &zi)| ai * zi),
        ))
    }

    /// Solves `Z v = rhs` by an unpivoted symmetric triangular
    /// factorization, failing loudly rather than returning a wrong answer:
    /// a nonpositive pivot yields [`MetricError::NotPositiveDefinite`] and a
    /// residual above `SOLVE_RESIDUAL_TOL · (1 + ‖rhs‖_∞)` yields
    /// [`MetricError::ResidualTooLarge`].
    ///
    /// One step of iterative refinement reuses the factorization to push
    /// the residual down to roundoff level.
    pub fn solve_spd(&self, rhs: &[f64]) -> Result<Vec<f64>, MetricError> {
        let n = self.len();
        if rhs.len() != n {
            return Err(MetricError::DimensionMismatch(n, rhs.len()));
        }
        let lower = self.cholesky()?;
        let mut v = rhs.to_vec();
        substitute(&lower, &mut v);

        let mut correction = self.residual_vector(&v, rhs);
        substitute(&lower, &mut correction);
        for (vi, delta) in v.iter_mut().zip(&correction) {
            *vi -= delta;
        }

        let residual = self
            .residual_vector(&v, rhs)
            .iter()
            .fold(0.0_f64, |m, &r| m.max(r.abs()));
        let rhs_norm = rhs.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        let bound = SOLVE_RESIDUAL_TOL * (1.0 + rhs_norm);
        if residual.is_nan() || residual > bound {
            return Err(MetricError::ResidualTooLarge { residual, bound });
        }
        Ok(v)
    }

    /// Componentwise `Z v − rhs`, each entry compensated.
    fn residual_vector(&self, v: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for ((o, row), &b) in out.iter_mut().zip(self.z.rows()).zip(rhs) {
            let mut acc = KahanSum::new();
            for (&z, &x) in row.iter().zip(v) {
                acc.add(z * x);
            }
            acc.add(-b);
            *o = acc.value();
        }
        out
    }

    fn cholesky(&self) -> Result<Array2<f64>, MetricError> {
        let n = self.len();
        let mut lower = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut pivot = self.z[[j, j]];
            for k in 0..j {
                pivot -= lower[[j, k]] * lower[[j, k]];
            }
            if pivot.is_nan() || pivot <= 0.0 {
                return Err(MetricError::NotPositiveDefinite { pivot: j });
            }
            let root = pivot.sqrt();
            lower[[j, j]] = root;
            for i in (j + 1)..n {
                let mut s = self.z[[i, j]];
                for k in 0..j {
                    s -= lower[[i, k]] * lower[[j, k]];
                }
                lower[[i, j]] = s / root;
            }
        }
        Ok(lower)
    }
}

/// In-place solve of `L Lᵀ x = b` given the lower Cholesky factor.
fn substitute(lower: &Array2<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        for k in 0..i {
            b[i] -= lower[[i, k]] * b[k];
        }
        b[i] /= lower[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            b[i] -= lower[[k, i]] * b[k];
        }
        b[i] /= lower[[i, i]];
    }
}

/// A signed measure on the points of a space, stored as one mass per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    values: Vec<f64>,
}

impl Measure {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// The Dirac measure `δ_at` on `n` points.
    pub fn dirac(n: usize, at: usize) -> Self {
        let mut values = vec![0.0; n];
        values[at] = 1.0;
        Self { values }
    }

    /// The uniform probability measure on `n` points.
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass, accumulated with compensated summation.
    pub fn total(&self) -> f64 {
        kahan_sum(self.values.iter().copied())
    }

    /// True when all masses are nonnegative and the total is 1 within
    /// [`PROBABILITY_TOL`].
    pub fn is_probability(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0) && (self.total() - 1.0).abs() <= PROBABILITY_TOL
    }
}
