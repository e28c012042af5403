//! Closed-form magnitude and weightings of weighted trees, the sparse
//! inverse of their similarity kernel, wedge-sum composition, and the
//! continuum limit reached by repeated subdivision.

use ndarray::Array2;

use crate::kahan::{kahan_sum, KahanSum};
use crate::tree::WeightedTree;

/// The weighting of a tree: the signed vertex masses `w` solving `Zw = 1`,
/// together with their total, the magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    magnitude: f64,
}

impl WeightVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }
}

/// The inverse similarity kernel of a weighted tree. It is sparse: nonzero
/// entries sit only on the diagonal and on adjacent vertex pairs, so
/// `|V| + |E| = 2|V| − 1` stored values describe the whole matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseInverse {
    diag: Vec<f64>,
    offdiag: Vec<(usize, usize, f64)>,
}

impl SparseInverse {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// One `(u, v, value)` per edge; the value is shared by both
    /// orientations.
    pub fn offdiag(&self) -> &[(usize, usize, f64)] {
        &self.offdiag
    }

    /// Number of stored values: `|V|` diagonal plus one per edge.
    pub fn stored_values(&self) -> usize {
        self.diag.len() + self.offdiag.len()
    }

    /// Assembles the full dense matrix; non-adjacent pairs are exactly zero.
    pub fn dense(&self) -> Array2<f64> {
        let n = self.diag.len();
        let mut m = Array2::<f64>::zeros((n, n));
        for (i, &d) in self.diag.iter().enumerate() {
            m[[i, i]] = d;
        }
        for &(u, v, value) in &self.offdiag {
            m[[u, v]] = value;
            m[[v, u]] = value;
        }
        m
    }
}

/// The closed-form weighting of a weighted tree:
///
/// `w(x) = Σ_{e ∋ x} 1/(1 + e^{−ℓ(e)}) − (deg x − 1)`
///
/// The magnitude carried alongside is `1 + Σ_e tanh(ℓ(e)/2)`.
pub fn tree_weights(tree: &WeightedTree) -> WeightVector {
    let values = (0..tree.len())
        .map(|x| {
            let mut acc = KahanSum::new();
            let mut degree = 0usize;
            for (_, length) in tree.neighbors(x) {
                acc.add(1.0 / (1.0 + (-length).exp()));
                degree += 1;
            }
            acc.value() - (degree as f64 - 1.0)
        })
        .collect();
    WeightVector {
        values,
        magnitude: tree_magnitude(tree),
    }
}

/// The magnitude of a weighted tree: `1 + Σ_e tanh(ℓ(e)/2)`, accumulated
/// with compensated summation (subdivision sweeps make the edge list long
/// and the terms tiny).
pub fn tree_magnitude(tree: &WeightedTree) -> f64 {
    1.0 + kahan_sum(tree.edges().iter().map(|e| (e.length / 2.0).tanh()))
}

/// Magnitude of a wedge sum (two spaces glued at one point) from the
/// magnitudes of the parts: `|X ∨ Y| = |X| + |Y| − 1`.
pub fn wedge_magnitude(mx: f64, my: f64) -> f64 {
    mx + my - 1.0
}

/// The sparse inverse kernel of a weighted tree:
///
/// * diagonal: `Z⁻¹(x, x) = 1 + Σ_{e ∋ x} e^{−2ℓ(e)} / (1 − e^{−2ℓ(e)})`
/// * adjacent `x ~ y` via edge `e`: `Z⁻¹(x, y) = −e^{−ℓ(e)} / (1 − e^{−2ℓ(e)})`
/// * all other entries are zero.
///
/// `1 − e^{−2ℓ}` is evaluated as `−expm1(−2ℓ)` so short edges do not lose
/// precision to cancellation.
pub fn sparse_inverse(tree: &WeightedTree) -> SparseInverse {
    let diag = (0..tree.len())
        .map(|x| {
            let mut acc = KahanSum::new();
            acc.add(1.0);
            for (_, length) in tree.neighbors(x) {
                acc.add((-2.0 * length).exp() / -(-2.0 * length).exp_m1());
            }
            acc.value()
        })
        .collect();
    let offdiag = tree
        .edges()
        .iter()
        .map(|e| {
            let value = -(-e.length).exp() / -(-2.0 * e.length).exp_m1();
            (e.u, e.v, value)
        })
        .collect();
    SparseInverse { diag, offdiag }
}

/// Magnitude of a continuum tree (a simplicial or R-tree including its edge
/// interiors) of the given total length: `1 + L/2`.
pub fn continuum_magnitude(total_length: f64) -> f64 {
    debug_assert!(total_length >= 0.0 && total_length.is_finite());
    1.0 + total_length / 2.0
}
