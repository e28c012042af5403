//! Diversity-maximizing measures: the peeling algorithm, the exhaustive
//! subset oracle, optimality certificates, branch-point exclusion tests, and
//! the diversity profile across scales.

use rayon::prelude::*;
use thiserror::Error;

use crate::kahan::{kahan_sum, KahanSum};
use crate::metric::{FiniteMetric, Measure, MetricError, SimilarityKernel};
use crate::tree::WeightedTree;

/// A point carries mass iff its weight exceeds this fraction of the largest
/// absolute weight. Exact zeros (exclusion boundaries) must fall out of the
/// support, so the threshold is strict.
pub const SUPPORT_REL_TOL: f64 = 1e-12;

/// Certificate tolerance: `|Zμ − C|` on the support.
pub const CERT_SUPPORT_TOL: f64 = 1e-8;

/// Certificate tolerance: `Zμ ≥ C − CERT_SLACK_TOL` off the support.
pub const CERT_SLACK_TOL: f64 = 1e-8;

/// Hard cap on the point count accepted by [`brute_force`] (the subset
/// enumeration is exponential).
pub const BRUTE_FORCE_MAX_POINTS: usize = 20;

/// Entrywise tolerance for accepting a subset weighting as nonnegative.
pub const NONNEGATIVE_TOL: f64 = 1e-12;

/// Subset values within this distance of the maximum are tied and resolved
/// by the lexicographically smallest label set.
pub const TIE_TOL: f64 = 1e-12;

/// Slack allowed when evaluating the exclusion inequality and the exclusion
/// certificate at their boundary cases.
pub const EXCLUSION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DiversityError {
    #[error(transparent)]
    Metric(#[from] MetricError),

    #[error("point count {n} exceeds the brute-force guard of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("active set became empty after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("scale grid must be strictly positive, finite, and increasing")]
    InvalidGrid,

    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),

    #[error("internal error: {0}")]
    Internal(&'static str),
}

/// Result of checking the optimality criterion `Zμ = C on supp μ` and
/// `Zμ ≥ C on X`, where `C = ⟨μ, μ⟩` is the mean typicality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertificateReport {
    /// The candidate constant `C = ⟨μ, μ⟩`; equals `1/|X|₊` when μ is
    /// optimal.
    pub c_value: f64,
    /// `max |Zμ(x) − C|` over the support of μ.
    pub max_on_support_deviation: f64,
    /// `min (Zμ(x) − C)` over the complement of the support; `+∞` when the
    /// support is the whole space.
    pub min_off_support_slack: f64,
    /// True iff the deviation is within [`CERT_SUPPORT_TOL`] and the slack
    /// above `−CERT_SLACK_TOL`.
    pub passed: bool,
}

/// A computed diversity-maximizing measure together with its certificate.
#[derive(Clone, Debug)]
pub struct DiversitySolution {
    /// The probability measure attaining the maximum diversity.
    pub measure: Measure,
    /// Sorted indices of the points with strictly positive mass.
    pub support: Vec<usize>,
    /// The maximum diversity `|X|₊ = 1 / ⟨μ, μ⟩`.
    pub diversity: f64,
    /// Number of peeling rounds performed (0 for the exhaustive oracle and
    /// the single-point short-circuit).
    pub iterations: usize,
    /// Optimality certificate evaluated on the full space.
    pub certificate: CertificateReport,
}

/// One sample of the diversity profile `t ↦ |(X, td)|₊`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub t: f64,
    pub diversity: f64,
    pub support_size: usize,
    pub certified: bool,
}

/// Computes the diversity-maximizing measure by iterated peeling: solve
/// `Z_A w = 1` on the active set, drop the vertices with nonpositive weight,
/// and stop once every weight is nonnegative. The normalized weights are the
/// measure; the certificate is evaluated on the full space.
///
/// The active set shrinks strictly on every continued round, so at most
/// `|X|` iterations run. An empty active set cannot occur for a positive
/// definite kernel and is reported as [`DiversityError::NoConvergence`].
pub fn peel(metric: &FiniteMetric) -> Result<DiversitySolution, DiversityError> {
    let n = metric.len();
    let kernel = metric.kernel();
    if n == 1 {
        let measure = Measure::dirac(1, 0);
        let certificate = certificate_against(&kernel, &measure);
        return Ok(DiversitySolution {
            measure,
            support: vec![0],
            diversity: 1.0,
            iterations: 0,
            certificate,
        });
    }

    let mut active: Vec<usize> = (0..n).collect();
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        let sub = kernel.restrict(&active);
        let weights = sub.solve_spd(&vec![1.0; active.len()])?;
        let scale = weights.iter().fold(0.0_f64, |m, &w| m.max(w.abs()));
        let tol = SUPPORT_REL_TOL * scale;

        let next: Vec<usize> = active
            .iter()
            .zip(&weights)
            .filter(|&(_, &w)| w > tol)
            .map(|(&x, _)| x)
            .collect();
        let has_negative = weights.iter().any(|&w| w < -tol);

        if !has_negative {
            // w ≥ 0 within tolerance: normalize and report. Entries below
            // the support threshold are numerically zero and are dropped.
            let mut total = KahanSum::new();
            let mut values = vec![0.0; n];
            for (&x, &w) in active.iter().zip(&weights) {
                if w > tol {
                    values[x] = w;
                    total.add(w);
                }
            }
            let diversity = total.value();
            if next.is_empty() || diversity.is_nan() || diversity <= 0.0 {
                return Err(DiversityError::NoConvergence { iterations });
            }
            for v in &mut values {
                *v /= diversity;
            }
            let measure = Measure::new(values);
            let certificate = certificate_against(&kernel, &measure);
            return Ok(DiversitySolution {
                measure,
                support: next,
                diversity,
                iterations,
                certificate,
            });
        }
        if next.is_empty() {
            return Err(DiversityError::NoConvergence { iterations });
        }
        active = next;
    }
}

/// Exhaustive oracle over all nonempty subsets: maximum diversity is the
/// largest magnitude among positively weighted subsets, and the winning
/// subset is the support of the maximizing measure.
///
/// Candidates must be nonnegatively weighted (entrywise above
/// `−NONNEGATIVE_TOL`) and their normalized measure must pass the
/// full-space certificate. Ties within [`TIE_TOL`] resolve to the
/// lexicographically smallest label set, so the result does not depend on
/// evaluation order. Guarded to at most [`BRUTE_FORCE_MAX_POINTS`] points.
pub fn brute_force(metric: &FiniteMetric) -> Result<DiversitySolution, DiversityError> {
    let n = metric.len();
    if n > BRUTE_FORCE_MAX_POINTS {
        return Err(DiversityError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_POINTS,
        });
    }
    let kernel = metric.kernel();
    // A principal submatrix of a positive definite kernel is positive
    // definite, so probing the full space makes later failures impossible
    // and the error deterministic.
    kernel.solve_spd(&vec![1.0; n])?;

    let masks = 1u32..(1u32 << n);

    // Pass 1: the best value over admissible subsets. Each value is
    // computed independently, and the max reduction is order-insensitive.
    let best = masks
        .clone()
        .into_par_iter()
        .map(|mask| subset_value(&kernel, mask))
        .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(if b > a { b } else { a }))?;
    if best == f64::NEG_INFINITY {
        return Err(DiversityError::Internal(
            "no subset admitted a certified nonnegative weighting",
        ));
    }

    // Pass 2: among subsets tied with the best value, the lexicographically
    // smallest label set (a total order, hence order-insensitive).
    let winner = masks
        .into_par_iter()
        .map(|mask| -> Result<Option<u32>, DiversityError> {
            match subset_value(&kernel, mask)? {
                value if value >= best - TIE_TOL => Ok(Some(mask)),
                _ => Ok(None),
            }
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(x), Some(y)) => {
                        if label_set(metric, x) <= label_set(metric, y) {
                            Some(x)
                        } else {
                            Some(y)
                        }
                    }
                    (x, None) => x,
                    (None, y) => y,
                })
            },
        )?
        .ok_or(DiversityError::Internal("tied winner disappeared"))?;

    let indices = mask_indices(winner);
    let sub = kernel.restrict(&indices);
    let weights = sub.solve_spd(&vec![1.0; indices.len()])?;
    let (measure, support, diversity) = normalized_measure(n, &indices, &weights);
    let certificate = certificate_against(&kernel, &measure);
    Ok(DiversitySolution {
        measure,
        support,
        diversity,
        iterations: 0,
        certificate,
    })
}

/// The magnitude of the subset when it is admissible (nonnegatively
/// weighted and certified on the full space), `Ok(None)`-like via −∞
/// otherwise.
fn subset_value(kernel: &SimilarityKernel, mask: u32) -> Result<f64, DiversityError> {
    let indices = mask_indices(mask);
    let sub = kernel.restrict(&indices);
    let weights = sub.solve_spd(&vec![1.0; indices.len()])?;
    if weights.iter().any(|&w| w < -NONNEGATIVE_TOL) {
        return Ok(f64::NEG_INFINITY);
    }
    let (measure, _, value) = normalized_measure(kernel.len(), &indices, &weights);
    if !certificate_against(kernel, &measure).passed {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(value)
}

fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

fn label_set(metric: &FiniteMetric, mask: u32) -> Vec<&String> {
    let mut labels: Vec<&String> = mask_indices(mask)
        .into_iter()
        .map(|i| &metric.labels()[i])
        .collect();
    labels.sort();
    labels
}

/// Spreads subset weights over the full space, dropping entries below the
/// support threshold, and normalizes to a probability measure. Returns the
/// measure, its sorted support, and the pre-normalization total (the
/// subset's magnitude).
fn normalized_measure(n: usize, indices: &[usize], weights: &[f64]) -> (Measure, Vec<usize>, f64) {
    let scale = weights.iter().fold(0.0_f64, |m, &w| m.max(w.abs()));
    let tol = SUPPORT_REL_TOL * scale;
    let mut values = vec![0.0; n];
    let mut support = Vec::new();
    let mut total = KahanSum::new();
    for (&x, &w) in indices.iter().zip(weights) {
        if w > tol {
            values[x] = w;
            support.push(x);
            total.add(w);
        }
    }
    let total = total.value();
    for v in &mut values {
        *v /= total;
    }
    (Measure::new(values), support, total)
}

/// Checks the optimality criterion for a probability measure: `Zμ` must
/// equal `C = ⟨μ, μ⟩` on the support and stay above `C` elsewhere.
///
/// Panics if the measure is not indexed like the space.
pub fn verify_certificate(metric: &FiniteMetric, mu: &Measure) -> CertificateReport {
    assert_eq!(
        mu.len(),
        metric.len(),
        "measure must assign one mass per point"
    );
    certificate_against(&metric.kernel(), mu)
}

fn certificate_against(kernel: &SimilarityKernel, mu: &Measure) -> CertificateReport {
    let zmu = kernel
        .apply(mu)
        .expect("measure dimension checked by caller");
    let c_value = kahan_sum(mu.values().iter().zip(&zmu).map(|(&m, &z)| m * z));

    let scale = mu.values().iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let tol = SUPPORT_REL_TOL * scale;
    // f64::max ignores NaN, so the deviation stays NaN only for an empty
    // support (and then the certificate cannot pass).
    let mut max_on_support_deviation = f64::NAN;
    let mut min_off_support_slack = f64::INFINITY;
    for (&mass, &z) in mu.values().iter().zip(&zmu) {
        if mass > tol {
            max_on_support_deviation = max_on_support_deviation.max((z - c_value).abs());
        } else {
            min_off_support_slack = min_off_support_slack.min(z - c_value);
        }
    }
    let passed =
        max_on_support_deviation <= CERT_SUPPORT_TOL && min_off_support_slack >= -CERT_SLACK_TOL;
    CertificateReport {
        c_value,
        max_on_support_deviation,
        min_off_support_slack,
        passed,
    }
}

/// The vertex exclusion test `Σ_{e ∋ x} 1/(1 + e^{−ℓ(e)}) ≤ deg(x) − 1`:
/// when it holds, `x` is provably outside the support of the
/// diversity-maximizing measure. It can only hold at branch points.
pub fn exclusion_inequality(tree: &WeightedTree, vertex: &str) -> Result<bool, DiversityError> {
    let x = tree
        .label_index(vertex)
        .ok_or_else(|| DiversityError::UnknownVertex(vertex.to_string()))?;
    let mut acc = KahanSum::new();
    let mut degree = 0usize;
    for (_, length) in tree.neighbors(x) {
        acc.add(1.0 / (1.0 + (-length).exp()));
        degree += 1;
    }
    Ok(acc.value() <= (degree as f64 - 1.0) + EXCLUSION_TOL)
}

/// Attempts to build an explicit witness that `x` is outside the support: a
/// probability measure ν on the neighbors of `x`, with masses proportional
/// to `e^{−ℓ} / (1 − e^{−2ℓ})`, such that `Zν(y) ≤ e^{−d(x,y)}` for every
/// vertex `y`. The domination condition is checked exhaustively; `None`
/// means this construction does not certify exclusion.
pub fn exclusion_certificate(
    tree: &WeightedTree,
    vertex: &str,
) -> Result<Option<Measure>, DiversityError> {
    let x = tree
        .label_index(vertex)
        .ok_or_else(|| DiversityError::UnknownVertex(vertex.to_string()))?;
    let neighbors: Vec<(usize, f64)> = tree.neighbors(x).collect();
    if neighbors.is_empty() {
        return Ok(None);
    }

    let raw: Vec<f64> = neighbors
        .iter()
        .map(|&(_, l)| (-l).exp() / -(-2.0 * l).exp_m1())
        .collect();
    let total = kahan_sum(raw.iter().copied());
    let mut values = vec![0.0; tree.len()];
    for (&(y, _), &mass) in neighbors.iter().zip(&raw) {
        values[y] = mass / total;
    }
    let nu = Measure::new(values);

    // Zν(y) = Σ_j ν(y_j) e^{−d(y, y_j)}, needing distances from each
    // neighbor to everywhere.
    let from_neighbors: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|&(y, _)| tree.distances_from(y))
        .collect();
    let from_x = tree.distances_from(x);
    for y in 0..tree.len() {
        let znu = kahan_sum(
            neighbors
                .iter()
                .enumerate()
                .map(|(j, &(yj, _))| nu.values()[yj] * (-from_neighbors[j][y]).exp()),
        );
        if znu > (-from_x[y]).exp() + EXCLUSION_TOL {
            return Ok(None);
        }
    }
    Ok(Some(nu))
}

/// Evaluates the diversity profile `t ↦ |(X, td)|₊` over a strictly
/// increasing grid of positive scales. Grid points are independent and
/// evaluated in parallel.
pub fn diversity_profile(
    metric: &FiniteMetric,
    t_grid: &[f64],
) -> Result<Vec<ProfilePoint>, DiversityError> {
    let valid =
        t_grid.iter().all(|&t| t > 0.0 && t.is_finite()) && t_grid.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(DiversityError::InvalidGrid);
    }
    t_grid
        .par_iter()
        .map(|&t| {
            let solution = peel(&metric.scaled(t)?)?;
            Ok(ProfilePoint {
                t,
                diversity: solution.diversity,
                support_size: solution.support.len(),
                certified: solution.certificate.passed,
            })
        })
        .collect()
}
