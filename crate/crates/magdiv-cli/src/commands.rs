//! Implementations of the subcommands. Each returns the rendered report
//! JSON; sidecar files are written atomically before the report is printed,
//! so a failing run leaves no partial outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use magdiv::diversity::{
    brute_force, diversity_profile, peel, verify_certificate, CertificateReport, DiversityError,
    DiversitySolution,
};
use magdiv::magnitude::{continuum_magnitude, tree_magnitude, tree_weights};
use magdiv::metric::{FiniteMetric, Measure, MetricError};
use magdiv::tree::{random_tree, LengthLaw, TreeError, WeightedTree};

use crate::report::{format_f64, render_json, sha256_hex, RunReport, Versions};
use crate::{Kind, SpaceArgs};

#[derive(Debug)]
pub enum CliError {
    Io { path: PathBuf, message: String },
    Tree(TreeError),
    Metric(MetricError),
    Diversity(DiversityError),
    Usage(String),
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        CliError::Tree(e)
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Metric(e)
    }
}

impl From<DiversityError> for CliError {
    fn from(e: DiversityError) -> Self {
        CliError::Diversity(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Tree(TreeError::Parse { .. }) => "parse",
            CliError::Tree(_) => "validation",
            CliError::Metric(e) => metric_kind(e),
            CliError::Diversity(e) => match e {
                DiversityError::Metric(inner) => metric_kind(inner),
                DiversityError::TooLarge { .. } => "too_large",
                DiversityError::InvalidGrid => "usage",
                DiversityError::UnknownVertex(_) => "validation",
                DiversityError::NoConvergence { .. } | DiversityError::Internal(_) => "internal",
            },
            CliError::Usage(_) => "usage",
        }
    }

    pub fn message(&self) -> String {
        let base = match self {
            CliError::Io { path, message } => format!("{}: {message}", path.display()),
            CliError::Tree(e) => e.to_string(),
            CliError::Metric(e) => e.to_string(),
            CliError::Diversity(e) => e.to_string(),
            CliError::Usage(msg) => msg.clone(),
        };
        if self.kind() == "not_positive_definite" {
            format!("{base} (the input may not be of negative type at this scale)")
        } else {
            base
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: String,
        }
        #[derive(Serialize)]
        struct Envelope<'a> {
            error: Body<'a>,
        }
        render_json(&Envelope {
            error: Body {
                kind: self.kind(),
                message: self.message(),
            },
        })
    }
}

fn metric_kind(e: &MetricError) -> &'static str {
    match e {
        MetricError::Parse { .. } => "parse",
        MetricError::NotPositiveDefinite { .. } => "not_positive_definite",
        _ => "validation",
    }
}

fn read_input(path: &Path) -> Result<(String, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let digest = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| CliError::Io {
        path: path.to_path_buf(),
        message: "input is not valid UTF-8".to_string(),
    })?;
    Ok((text, digest))
}

/// Writes via a sibling temp file and rename, so the target either keeps its
/// previous content or receives the whole new content.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| io_err(std::io::Error::other("path has no file name")))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents).map_err(io_err)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(e));
    }
    Ok(())
}

/// Loads the metric space named by `--kind`, scaled by `t`.
fn load_space(args: &SpaceArgs, t: f64) -> Result<(FiniteMetric, String), CliError> {
    let (text, digest) = read_input(&args.input)?;
    let metric = match args.kind {
        Kind::Tree => WeightedTree::from_tree_file_str(&text)?.metric(),
        Kind::Matrix => FiniteMetric::from_csv_str(&text, !args.skip_triangle_check)?,
    };
    let metric = if t == 1.0 { metric } else { metric.scaled(t)? };
    Ok((metric, digest))
}

#[derive(Serialize)]
struct VertexWeight {
    vertex: String,
    weight: f64,
}

#[derive(Serialize)]
struct MagnitudeResults {
    magnitude: f64,
    weights: Vec<VertexWeight>,
    residual: f64,
}

pub fn magnitude(input: &Path) -> Result<String, CliError> {
    let (text, digest) = read_input(input)?;
    let tree = WeightedTree::from_tree_file_str(&text)?;
    let weights = tree_weights(&tree);

    let kernel = tree.metric().kernel();
    let zw = kernel
        .apply(&Measure::new(weights.values().to_vec()))
        .expect("weights are indexed by the tree vertices");
    let residual = zw.iter().fold(0.0_f64, |m, &z| m.max((z - 1.0).abs()));

    let results = MagnitudeResults {
        magnitude: weights.magnitude(),
        weights: tree
            .labels()
            .iter()
            .zip(weights.values())
            .map(|(vertex, &weight)| VertexWeight {
                vertex: vertex.clone(),
                weight,
            })
            .collect(),
        residual,
    };
    Ok(render_json(&RunReport {
        command: "magnitude",
        input_digest: digest,
        versions: Versions::current(),
        results,
    }))
}

#[derive(Serialize)]
struct CertificateJson {
    c_value: f64,
    max_on_support_deviation: f64,
    /// `null` when the support is the whole space.
    min_off_support_slack: f64,
    passed: bool,
}

impl From<&CertificateReport> for CertificateJson {
    fn from(report: &CertificateReport) -> Self {
        Self {
            c_value: report.c_value,
            max_on_support_deviation: report.max_on_support_deviation,
            min_off_support_slack: report.min_off_support_slack,
            passed: report.passed,
        }
    }
}

#[derive(Serialize)]
struct PointMass {
    point: String,
    mass: f64,
}

#[derive(Serialize)]
struct DiversityResults {
    diversity: f64,
    measure: Vec<PointMass>,
    support: Vec<String>,
    iterations: usize,
    certificate: CertificateJson,
    certified: bool,
}

fn diversity_payload(metric: &FiniteMetric, solution: &DiversitySolution) -> DiversityResults {
    DiversityResults {
        diversity: solution.diversity,
        measure: metric
            .labels()
            .iter()
            .zip(solution.measure.values())
            .map(|(point, &mass)| PointMass {
                point: point.clone(),
                mass,
            })
            .collect(),
        support: solution
            .support
            .iter()
            .map(|&i| metric.labels()[i].clone())
            .collect(),
        iterations: solution.iterations,
        certificate: CertificateJson::from(&solution.certificate),
        certified: solution.certificate.passed,
    }
}

pub fn diversity(space: &SpaceArgs, scale: f64) -> Result<String, CliError> {
    let (metric, digest) = load_space(space, scale)?;
    let solution = peel(&metric)?;
    Ok(render_json(&RunReport {
        command: "diversity",
        input_digest: digest,
        versions: Versions::current(),
        results: diversity_payload(&metric, &solution),
    }))
}

#[derive(Serialize)]
struct OracleResults {
    diversity: f64,
    winning_subset: Vec<String>,
    measure: Vec<PointMass>,
    support: Vec<String>,
    subsets_evaluated: u64,
    certificate: CertificateJson,
    certified: bool,
}

pub fn oracle(space: &SpaceArgs) -> Result<String, CliError> {
    let (metric, digest) = load_space(space, 1.0)?;
    let solution = brute_force(&metric)?;
    let payload = diversity_payload(&metric, &solution);
    let results = OracleResults {
        diversity: payload.diversity,
        winning_subset: payload.support.clone(),
        measure: payload.measure,
        support: payload.support,
        subsets_evaluated: (1u64 << metric.len()) - 1,
        certificate: payload.certificate,
        certified: payload.certified,
    };
    Ok(render_json(&RunReport {
        command: "oracle",
        input_digest: digest,
        versions: Versions::current(),
        results,
    }))
}

#[derive(Serialize)]
struct ProfileRow {
    t: f64,
    diversity: f64,
    support_size: usize,
    certified: bool,
}

#[derive(Serialize)]
struct ProfileResults {
    points: Vec<ProfileRow>,
}

pub fn profile(
    space: &SpaceArgs,
    tmin: f64,
    tmax: f64,
    steps: usize,
    log_spacing: bool,
    csv: Option<&Path>,
) -> Result<String, CliError> {
    if !tmin.is_finite() || tmin <= 0.0 || !tmax.is_finite() || tmax <= tmin || steps < 2 {
        return Err(CliError::Usage(format!(
            "profile grid requires 0 < tmin < tmax and steps ≥ 2, got tmin={tmin}, tmax={tmax}, steps={steps}"
        )));
    }
    let grid: Vec<f64> = (0..steps)
        .map(|i| {
            if i == 0 {
                return tmin;
            }
            if i == steps - 1 {
                return tmax;
            }
            let fraction = i as f64 / (steps - 1) as f64;
            if log_spacing {
                (tmin.ln() + (tmax.ln() - tmin.ln()) * fraction).exp()
            } else {
                tmin + (tmax - tmin) * fraction
            }
        })
        .collect();

    let (metric, digest) = load_space(space, 1.0)?;
    let points = diversity_profile(&metric, &grid)?;
    let rows: Vec<ProfileRow> = points
        .iter()
        .map(|p| ProfileRow {
            t: p.t,
            diversity: p.diversity,
            support_size: p.support_size,
            certified: p.certified,
        })
        .collect();

    if let Some(path) = csv {
        let mut body = String::from("t,diversity,support_size,certified\n");
        for row in &rows {
            body.push_str(&format!(
                "{},{},{},{}\n",
                format_f64(row.t),
                format_f64(row.diversity),
                row.support_size,
                row.certified
            ));
        }
        write_atomic(path, &body)?;
    }

    Ok(render_json(&RunReport {
        command: "profile",
        input_digest: digest,
        versions: Versions::current(),
        results: ProfileResults { points: rows },
    }))
}

#[derive(Serialize)]
struct ConvergeRow {
    k: usize,
    magnitude: f64,
    target: f64,
    gap: f64,
    /// Convergence order estimated from the previous gap; `null` on the
    /// first row.
    order: Option<f64>,
}

#[derive(Serialize)]
struct ConvergeResults {
    total_length: f64,
    continuum_magnitude: f64,
    rows: Vec<ConvergeRow>,
}

pub fn converge(input: &Path, k_list: &[usize], csv: Option<&Path>) -> Result<String, CliError> {
    if k_list.is_empty() || k_list.contains(&0) || k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "subdivision list --k must be positive and strictly increasing".to_string(),
        ));
    }
    let (text, digest) = read_input(input)?;
    let tree = WeightedTree::from_tree_file_str(&text)?;
    let total_length = tree.total_length();
    let target = continuum_magnitude(total_length);

    let mut rows: Vec<ConvergeRow> = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let magnitude = tree_magnitude(&tree.subdivide(k));
        let gap = target - magnitude;
        let order = rows.last().and_then(|prev: &ConvergeRow| {
            (prev.gap > 0.0 && gap > 0.0)
                .then(|| (prev.gap / gap).ln() / (k as f64 / prev.k as f64).ln())
        });
        rows.push(ConvergeRow {
            k,
            magnitude,
            target,
            gap,
            order,
        });
    }

    if let Some(path) = csv {
        let mut body = String::from("k,magnitude,target,gap,order\n");
        for row in &rows {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                row.k,
                format_f64(row.magnitude),
                format_f64(row.target),
                format_f64(row.gap),
                row.order.map(format_f64).unwrap_or_default()
            ));
        }
        write_atomic(path, &body)?;
    }

    Ok(render_json(&RunReport {
        command: "converge",
        input_digest: digest,
        versions: Versions::current(),
        results: ConvergeResults {
            total_length,
            continuum_magnitude: target,
            rows,
        },
    }))
}

/// Parses the `--law` syntax: `fixed:<c>` or `uniform:<lo>,<hi>`.
pub fn parse_length_law(text: &str) -> Result<LengthLaw, CliError> {
    let usage = || {
        CliError::Usage(format!(
            "cannot parse length law {text:?}; expected fixed:<c> or uniform:<lo>,<hi>"
        ))
    };
    let (name, params) = text.split_once(':').ok_or_else(usage)?;
    match name {
        "fixed" => {
            let c: f64 = params.trim().parse().map_err(|_| usage())?;
            Ok(LengthLaw::Fixed(c))
        }
        "uniform" => {
            let (lo, hi) = params.split_once(',').ok_or_else(usage)?;
            let lo: f64 = lo.trim().parse().map_err(|_| usage())?;
            let hi: f64 = hi.trim().parse().map_err(|_| usage())?;
            Ok(LengthLaw::Uniform { lo, hi })
        }
        _ => Err(usage()),
    }
}

#[derive(Serialize)]
struct GenResults {
    out: String,
    digest: String,
    vertices: usize,
    edges: usize,
}

pub fn gen(n: usize, law: &str, seed: u64, out: &Path) -> Result<String, CliError> {
    let law = parse_length_law(law)?;
    let tree = random_tree(n, &law, seed)?;
    let contents = tree.to_tree_file_string();
    write_atomic(out, &contents)?;
    let digest = sha256_hex(contents.as_bytes());
    Ok(render_json(&RunReport {
        command: "gen",
        input_digest: digest.clone(),
        versions: Versions::current(),
        results: GenResults {
            out: out.display().to_string(),
            digest,
            vertices: tree.len(),
            edges: tree.edges().len(),
        },
    }))
}

#[derive(Serialize)]
struct CheckResults {
    certificate: CertificateJson,
    measure_digest: String,
}

pub fn check(space: &SpaceArgs, scale: f64, measure_path: &Path) -> Result<String, CliError> {
    let (metric, digest) = load_space(space, scale)?;
    let (measure_text, measure_digest) = read_input(measure_path)?;
    let masses: BTreeMap<String, f64> = serde_json::from_str(&measure_text).map_err(|e| {
        CliError::Usage(format!(
            "measure file must be a JSON object mapping labels to masses: {e}"
        ))
    })?;

    let mut values = vec![0.0; metric.len()];
    for (label, mass) in &masses {
        let index = metric.label_index(label).ok_or_else(|| {
            CliError::Usage(format!("measure assigns mass to unknown point {label:?}"))
        })?;
        values[index] = *mass;
    }
    let measure = Measure::new(values);
    if !measure.is_probability() {
        return Err(CliError::Usage(
            "measure must be a probability distribution: nonnegative masses summing to 1"
                .to_string(),
        ));
    }
    let report = verify_certificate(&metric, &measure);
    Ok(render_json(&RunReport {
        command: "check",
        input_digest: digest,
        versions: Versions::current(),
        results: CheckResults {
            certificate: CertificateJson::from(&report),
            measure_digest,
        },
    }))
}
