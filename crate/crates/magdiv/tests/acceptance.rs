//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `--nocapture`). Tolerances are pinned here, independent of
//! the library's internal constants.

use magdiv::diversity::{brute_force, exclusion_inequality, peel, DiversitySolution};
use magdiv::magnitude::{continuum_magnitude, sparse_inverse, tree_magnitude, tree_weights};
use magdiv::metric::FiniteMetric;
use magdiv::tree::{random_tree, LengthLaw, WeightedTree};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("{status} {criterion}: {detail}");
    assert!(passed, "{criterion} failed: {detail}");
}

fn two_point_tree(length: f64) -> WeightedTree {
    WeightedTree::new(
        vec!["x".into(), "y".into()],
        vec![("x".into(), "y".into(), length)],
    )
    .unwrap()
}

fn star(lengths: &[f64]) -> WeightedTree {
    let mut labels = vec!["c".to_string()];
    let mut edges = Vec::new();
    for (i, &l) in lengths.iter().enumerate() {
        let leaf = format!("l{i}");
        labels.push(leaf.clone());
        edges.push(("c".to_string(), leaf, l));
    }
    WeightedTree::new(labels, edges).unwrap()
}

/// Criterion 2/3 instances: 100 random trees with n spread over [2, 200].
fn dense_check_trees() -> Vec<WeightedTree> {
    (0..100u64)
        .map(|i| {
            let n = 2 + 2 * i as usize;
            random_tree(n, &LengthLaw::Uniform { lo: 0.05, hi: 3.0 }, 1000 + i).unwrap()
        })
        .collect()
}

/// Criterion 4 instances: 200 random trees, n ∈ [3, 12], mixed length laws.
fn oracle_check_trees() -> Vec<WeightedTree> {
    (0..200u64)
        .map(|i| {
            let n = 3 + (i as usize % 10);
            let law = match i % 4 {
                0 => LengthLaw::Fixed(0.2 + 0.15 * (i % 7) as f64),
                1 => LengthLaw::Uniform { lo: 0.05, hi: 0.7 },
                2 => LengthLaw::Uniform { lo: 0.05, hi: 3.0 },
                _ => LengthLaw::Uniform { lo: 0.5, hi: 2.0 },
            };
            random_tree(n, &law, 2000 + i).unwrap()
        })
        .collect()
}

/// Criterion 5 instances: stars K_{1,m}, m ∈ [3, 8], all lengths ≤ log 2.
fn exclusion_check_stars() -> Vec<WeightedTree> {
    let log2 = 2.0_f64.ln();
    let mut stars = Vec::new();
    for m in 3..=8usize {
        stars.push(star(&vec![log2; m]));
        stars.push(star(&vec![0.3; m]));
        let varied: Vec<f64> = (0..m).map(|j| log2 * (j + 1) as f64 / m as f64).collect();
        stars.push(star(&varied));
    }
    stars
}

/// Criterion 9 instances: 100 planar point sets, n ∈ [4, 12], under the
/// Euclidean distance.
fn planar_point_sets() -> Vec<(Vec<(f64, f64)>, FiniteMetric)> {
    (0..100u64)
        .map(|i| {
            let n = 4 + (i as usize % 9);
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + i);
            let mut points: Vec<(f64, f64)> = Vec::with_capacity(n);
            while points.len() < n {
                let p = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
                let too_close = points
                    .iter()
                    .any(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() < 0.01);
                if !too_close {
                    points.push(p);
                }
            }
            let mut dist = Array2::<f64>::zeros((n, n));
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        let dx = points[a].0 - points[b].0;
                        let dy = points[a].1 - points[b].1;
                        dist[[a, b]] = (dx * dx + dy * dy).sqrt();
                    }
                }
            }
            let labels = (0..n).map(|p| format!("p{p}")).collect();
            let metric = FiniteMetric::new(labels, dist).unwrap();
            (points, metric)
        })
        .collect()
}

#[test]
fn criterion_1_two_point_formula() {
    let mut worst = 0.0_f64;
    for &length in &[0.1, 1.0, 5.0, 40.0] {
        let tree = two_point_tree(length);
        let expected = 1.0 + (length / 2.0).tanh();
        worst = worst.max((tree_magnitude(&tree) - expected).abs());
        let solution = peel(&tree.metric()).unwrap();
        worst = worst.max((solution.diversity - expected).abs());
        worst = worst.max((solution.measure.values()[0] - 0.5).abs());
        worst = worst.max((solution.measure.values()[1] - 0.5).abs());
    }
    report(
        "criterion 1",
        worst <= 1e-12,
        &format!("two-point magnitude and diversity equal 1 + tanh(L/2); worst deviation {worst:.2e} (tol 1e-12)"),
    );
}

#[test]
fn criterion_2_closed_form_vs_dense_solve() {
    let mut worst_weight = 0.0_f64;
    let mut worst_magnitude = 0.0_f64;
    for tree in dense_check_trees() {
        let closed = tree_weights(&tree);
        let solved = tree
            .metric()
            .kernel()
            .solve_spd(&vec![1.0; tree.len()])
            .unwrap();
        for (a, b) in closed.values().iter().zip(&solved) {
            worst_weight = worst_weight.max((a - b).abs());
        }
        let solved_total: f64 = {
            // Compensated total of the solved weights.
            let mut sum = 0.0_f64;
            let mut comp = 0.0_f64;
            for &w in &solved {
                let y = w - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            sum
        };
        worst_magnitude = worst_magnitude.max((closed.magnitude() - solved_total).abs());
    }
    report(
        "criterion 2",
        worst_weight <= 1e-8 && worst_magnitude <= 1e-10,
        &format!(
            "closed-form weights vs dense solve on 100 trees (n ≤ 200): weights {worst_weight:.2e} (tol 1e-8), magnitudes {worst_magnitude:.2e} (tol 1e-10)"
        ),
    );
}

#[test]
fn criterion_3_sparse_inverse() {
    let mut worst = 0.0_f64;
    let mut pattern_ok = true;
    for tree in dense_check_trees() {
        let n = tree.len();
        let inverse = sparse_inverse(&tree);
        pattern_ok &= inverse.stored_values() == 2 * n - 1;

        // Stored off-diagonal entries must be exactly the edge set.
        let mut edges: Vec<(usize, usize)> = tree
            .edges()
            .iter()
            .map(|e| (e.u.min(e.v), e.u.max(e.v)))
            .collect();
        let mut stored: Vec<(usize, usize)> = inverse
            .offdiag()
            .iter()
            .map(|&(u, v, _)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        stored.sort_unstable();
        pattern_ok &= edges == stored;

        let dense = inverse.dense();
        // Non-adjacent entries are exactly zero in the assembled matrix.
        let mut adjacent = vec![false; n * n];
        for e in tree.edges() {
            adjacent[e.u * n + e.v] = true;
            adjacent[e.v * n + e.u] = true;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !adjacent[i * n + j] {
                    pattern_ok &= dense[[i, j]] == 0.0;
                }
            }
        }

        let product = dense.dot(tree.metric().kernel().matrix());
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((product[[i, j]] - expected).abs());
            }
        }
    }
    report(
        "criterion 3",
        worst <= 1e-8 && pattern_ok,
        &format!(
            "sparse inverse on 100 trees: ‖Z⁻¹Z − I‖_max {worst:.2e} (tol 1e-8), pattern diag+adjacency {}",
            if pattern_ok { "exact" } else { "violated" }
        ),
    );
}

#[test]
fn criterion_4_peel_matches_oracle() {
    let trees = oracle_check_trees();
    let mut worst = 0.0_f64;
    let mut support_mismatches = 0usize;
    for tree in &trees {
        let metric = tree.metric();
        let fast = peel(&metric).unwrap();
        let exact = brute_force(&metric).unwrap();
        if fast.support != exact.support {
            support_mismatches += 1;
        }
        worst = worst.max((fast.diversity - exact.diversity).abs());
    }
    report(
        "criterion 4",
        support_mismatches == 0 && worst <= 1e-9,
        &format!(
            "peeling vs exhaustive oracle on {} trees (n ∈ [3, 12]): {support_mismatches} support mismatches, diversity gap {worst:.2e} (tol 1e-9)",
            trees.len()
        ),
    );
}

#[test]
fn criterion_5_branch_point_exclusion() {
    let mut centers_clear = true;
    for tree in exclusion_check_stars() {
        let solution = peel(&tree.metric()).unwrap();
        centers_clear &= solution.measure.values()[0] == 0.0;
        centers_clear &= !solution.support.contains(&0);
    }
    let boundary = star(&[2.0_f64.ln(); 3]);
    let boundary_flagged = exclusion_inequality(&boundary, "c").unwrap();
    report(
        "criterion 5",
        centers_clear && boundary_flagged,
        &format!(
            "star centers carry zero mass for edge lengths ≤ log 2 (centers clear: {centers_clear}); degree-3 log-2 boundary flagged: {boundary_flagged}"
        ),
    );
}

#[test]
fn criterion_6_certificate_soundness() {
    let mut solutions: Vec<DiversitySolution> = Vec::new();
    for &length in &[0.1, 1.0, 5.0, 40.0] {
        solutions.push(peel(&two_point_tree(length).metric()).unwrap());
    }
    for tree in oracle_check_trees() {
        solutions.push(peel(&tree.metric()).unwrap());
    }
    for tree in exclusion_check_stars() {
        solutions.push(peel(&tree.metric()).unwrap());
    }
    let mut worst_dev = 0.0_f64;
    let mut worst_slack = f64::INFINITY;
    let mut all_passed = true;
    for solution in &solutions {
        worst_dev = worst_dev.max(solution.certificate.max_on_support_deviation);
        worst_slack = worst_slack.min(solution.certificate.min_off_support_slack);
        all_passed &= solution.certificate.passed;
    }
    report(
        "criterion 6",
        all_passed && worst_dev <= 1e-8 && worst_slack >= -1e-8,
        &format!(
            "all {} peel outputs certified: max on-support deviation {worst_dev:.2e} (tol 1e-8), min off-support slack {worst_slack:.2e} (tol -1e-8)",
            solutions.len()
        ),
    );
}

#[test]
fn criterion_7_continuum_limit() {
    let tree = WeightedTree::new(
        vec!["a".into(), "b".into(), "c".into(), "d".into()],
        vec![
            ("a".into(), "b".into(), 0.7),
            ("b".into(), "c".into(), 1.1),
            ("b".into(), "d".into(), 0.5),
        ],
    )
    .unwrap();
    let target = continuum_magnitude(tree.total_length());

    let ks = [8usize, 16, 32, 64, 128];
    let gaps: Vec<f64> = ks
        .iter()
        .map(|&k| target - tree_magnitude(&tree.subdivide(k)))
        .collect();
    let monotone = gaps.iter().all(|&g| g > 0.0) && gaps.windows(2).all(|w| w[1] <= w[0]);
    let mut ratios_ok = true;
    let mut ratios = Vec::new();
    for pair in gaps.windows(2) {
        let ratio = pair[0] / pair[1];
        ratios.push(ratio);
        ratios_ok &= (3.5..=4.5).contains(&ratio);
    }
    report(
        "criterion 7",
        monotone && ratios_ok,
        &format!(
            "subdivided magnitude increases to 1 + L/2 with quadratic gaps; ratios {:?} (required within [3.5, 4.5])",
            ratios.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_8_profile_limits_and_monotonicity() {
    // 13 log-spaced scales covering [1e-3, 1e3].
    let grid: Vec<f64> = (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect();
    let mut monotone = true;
    let mut worst_start = 0.0_f64;
    let mut worst_end_rel = 0.0_f64;
    for i in 0..20u64 {
        let n = 5 + ((i as usize * 7) % 26);
        let tree = random_tree(n, &LengthLaw::Uniform { lo: 0.05, hi: 3.0 }, 8000 + i).unwrap();
        let profile = magdiv::diversity::diversity_profile(&tree.metric(), &grid).unwrap();
        for pair in profile.windows(2) {
            monotone &= pair[1].diversity >= pair[0].diversity - 1e-9;
        }
        worst_start = worst_start.max((profile[0].diversity - 1.0).abs());
        worst_end_rel =
            worst_end_rel.max((profile.last().unwrap().diversity - n as f64).abs() / n as f64);
    }
    report(
        "criterion 8",
        monotone && worst_start <= 0.05 && worst_end_rel <= 0.05,
        &format!(
            "profiles over t ∈ [1e-3, 1e3] on 20 trees: nondecreasing {monotone}, start gap {worst_start:.3} (tol 0.05), end gap {:.3}·n (tol 0.05·n)",
            worst_end_rel
        ),
    );
}

#[test]
fn criterion_9_euclidean_probe() {
    let sets = planar_point_sets();
    let mut failures: Vec<String> = Vec::new();
    for (index, (points, metric)) in sets.iter().enumerate() {
        let fast = peel(metric).unwrap();
        let exact = brute_force(metric).unwrap();
        let matches = fast.support == exact.support
            && (fast.diversity - exact.diversity).abs() <= 1e-9
            && fast.certificate.passed;
        if !matches {
            failures.push(format!(
                "{{\"instance\": {index}, \"points\": {points:?}, \"peel_support\": {:?}, \"peel_diversity\": {:.17e}, \"peel_certified\": {}, \"oracle_support\": {:?}, \"oracle_diversity\": {:.17e}}}",
                fast.support,
                fast.diversity,
                fast.certificate.passed,
                exact.support,
                exact.diversity,
            ));
        }
    }
    if !failures.is_empty() {
        let path = std::env::temp_dir().join("magdiv_euclidean_counterexamples.json");
        let body = format!("[\n{}\n]\n", failures.join(",\n"));
        std::fs::write(&path, body).expect("write counterexample artifact");
        println!(
            "counterexample artifact with {} entries written to {}",
            failures.len(),
            path.display()
        );
    }
    report(
        "criterion 9",
        failures.is_empty(),
        &format!(
            "Euclidean probe on {} planar sets (n ∈ [4, 12]): {} counterexamples (peeling matched the oracle with passing certificates)",
            sets.len(),
            failures.len()
        ),
    );
}
