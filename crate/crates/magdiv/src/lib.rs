//! Magnitude and maximum diversity of finite metric spaces, specialized for
//! weighted trees.
//!
//! The similarity kernel `Z(x, y) = e^{−d(x, y)}` of a finite metric space
//! turns counting into geometry: the solution of `Zw = 1` gives vertex
//! weights whose total, the *magnitude*, behaves like an effective number
//! of points. Restricting to probability measures gives *maximum
//! diversity*: the largest value of `1/⟨μ, μ⟩`, where `⟨μ, μ⟩ = μᵀZμ` is
//! the average similarity of two independent samples.
//!
//! For weighted trees everything is closed-form and fast:
//!
//! * [`magnitude::tree_weights`] and [`magnitude::tree_magnitude`] evaluate
//!   the weighting and magnitude edge by edge (`1 + Σ tanh(ℓ/2)`),
//! * [`magnitude::sparse_inverse`] writes down `Z⁻¹` directly — it is
//!   nonzero only on the diagonal and adjacent pairs,
//! * [`diversity::peel`] finds the diversity-maximizing measure by
//!   iteratively dropping nonpositive-weight points,
//! * [`diversity::brute_force`] is the exponential-time oracle over all
//!   subsets, for cross-checking,
//! * [`diversity::verify_certificate`] checks the optimality criterion
//!   `Zμ = C on supp μ, Zμ ≥ C everywhere`, so results on general spaces
//!   (where the peeling algorithm is not proven correct) are never reported
//!   as optimal without a passing certificate.
//!
//! ```
//! use magdiv::tree::{LengthLaw, WeightedTree};
//! use magdiv::{magnitude, diversity};
//!
//! let tree = WeightedTree::new(
//!     vec!["a".into(), "b".into(), "c".into()],
//!     vec![("a".into(), "b".into(), 0.3), ("b".into(), "c".into(), 0.9)],
//! )
//! .unwrap();
//!
//! let magnitude = magnitude::tree_magnitude(&tree);
//! let solution = diversity::peel(&tree.metric()).unwrap();
//! // This path is positively weighted, so diversity equals magnitude.
//! assert!((solution.diversity - magnitude).abs() < 1e-10);
//! assert!(solution.certificate.passed);
//! ```

pub mod diversity;
mod kahan;
pub mod magnitude;
pub mod metric;
pub mod tree;

pub use diversity::{
    brute_force, diversity_profile, exclusion_certificate, exclusion_inequality, peel,
    verify_certificate, CertificateReport, DiversityError, DiversitySolution, ProfilePoint,
};
pub use magnitude::{
    continuum_magnitude, sparse_inverse, tree_magnitude, tree_weights, wedge_magnitude,
    SparseInverse, WeightVector,
};
pub use metric::{FiniteMetric, Measure, MetricError, SimilarityKernel};
pub use tree::{random_tree, LengthLaw, TreeError, VertexClass, WeightedTree};
