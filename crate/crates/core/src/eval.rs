//! Edge metrics, repeated-run benchmarks and k-means++ subsampling.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{default_names, GroupedDataset};
use crate::error::{EnciError, Result};
use crate::graph::Adjacency;
use crate::kernels::KernelConfig;
use crate::lingam::{infer_graph_sweep, GraphConfig, ShapeVerdict};
use crate::pairwise::{infer_pair, Direction, PairConfig};
use crate::synth::{derive_seed, generate, SynthSpec, Topology};

/// Version of the serialized [`BenchReport`] layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

/// Directed-edge precision and recall; an edge only counts with the right
/// orientation.
pub fn edge_metrics(estimated: &Adjacency, truth: &Adjacency) -> Result<EdgeMetrics> {
    if estimated.n_nodes() != truth.n_nodes() {
        return Err(EnciError::DimensionMismatch {
            expected: truth.n_nodes(),
            got: estimated.n_nodes(),
        });
    }
    let p = truth.n_nodes();
    let (mut tp, mut fp, mut fnn) = (0, 0, 0);
    for a in 0..p {
        for b in 0..p {
            match (estimated.has_edge(a, b), truth.has_edge(a, b)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                (false, false) => {}
            }
        }
    }
    let ratio = |num: usize, den: usize| {
        if den > 0 {
            num as f64 / den as f64
        } else if tp + fp == 0 && tp + fnn == 0 {
            1.0
        } else {
            0.0
        }
    };
    Ok(EdgeMetrics {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fnn),
        true_positive: tp,
        false_positive: fp,
        false_negative: fnn,
    })
}

const KMEANS_TOL: f64 = 1e-6;
const KMEANS_MAX_ITER: usize = 300;

/// k-means++ seeding followed by Lloyd iterations. Returns the cluster label
/// of every row and the final centroids (`k × p`).
pub fn kmeans<R: Rng>(data: &DMatrix<f64>, k: usize, rng: &mut R) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (n, p) = data.shape();
    if k == 0 || n < 2 * k {
        return Err(EnciError::InvalidConfig(format!(
            "k-means needs at least 2k rows (k = {k}, rows = {n})"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EnciError::NonFinite);
    }
    let sq = |i: usize, c: &DMatrix<f64>, j: usize| -> f64 {
        (0..p).map(|d| (data[(i, d)] - c[(j, d)]).powi(2)).sum()
    };

    let mut centroids = DMatrix::<f64>::zeros(k, p);
    centroids.set_row(0, &data.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &data.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq(i, &centroids, c));
        }
    }

    let mut labels = vec![0; n];
    for _ in 0..KMEANS_MAX_ITER {
        for (i, label) in labels.iter_mut().enumerate() {
            *label = (0..k)
                .map(|j| (j, sq(i, &centroids, j)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
        }
        let mut sums = DMatrix::<f64>::zeros(k, p);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for d in 0..p {
                sums[(l, d)] += data[(i, d)];
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            // An emptied cluster keeps its previous centroid.
            if counts[j] == 0 {
                continue;
            }
            for d in 0..p {
                let v = sums[(j, d)] / counts[j] as f64;
                shift = shift.max((v - centroids[(j, d)]).abs());
                centroids[(j, d)] = v;
            }
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok((labels, centroids))
}

/// Builds artificial groups from one table: cluster with k-means++, then draw
/// each group as `group_size` rows (without replacement) from a cluster picked
/// uniformly among those with more than `group_size` members.
pub fn kmeanspp_groups<R: Rng>(
    data: &DMatrix<f64>,
    variables: Option<Vec<String>>,
    k: usize,
    group_size: usize,
    n_groups: usize,
    rng: &mut R,
) -> Result<GroupedDataset> {
    if group_size < 2 || n_groups < 2 {
        return Err(EnciError::InvalidConfig(
            "need at least 2 groups of at least 2 rows".into(),
        ));
    }
    let (labels, _) = kmeans(data, k, rng)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let eligible: Vec<&Vec<usize>> = members.iter().filter(|m| m.len() > group_size).collect();
    if eligible.is_empty() {
        return Err(EnciError::NoEligibleCluster(group_size));
    }
    let groups = (0..n_groups)
        .map(|_| {
            let cluster = eligible[rng.random_range(0..eligible.len())];
            let rows: Vec<usize> = index::sample(rng, cluster.len(), group_size)
                .into_iter()
                .map(|k| cluster[k])
                .collect();
            DMatrix::from_fn(group_size, data.ncols(), |r, c| data[(rows[r], c)])
        })
        .collect();
    let names = variables.unwrap_or_else(|| default_names(data.ncols()));
    GroupedDataset::new(names, groups)
}

/// One pair decision at one bandwidth multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRun {
    pub run: usize,
    pub seed: u64,
    pub multiplier: f64,
    pub direction: Direction,
    pub r_xy: f64,
    pub r_yx: f64,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub multiplier: f64,
    pub correct: usize,
    pub runs: usize,
    pub accuracy: f64,
}

/// One graph estimate at one pruning threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRun {
    pub run: usize,
    pub seed: u64,
    pub prune_threshold: f64,
    pub metrics: EdgeMetrics,
    pub shape_verdict: ShapeVerdict,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub prune_threshold: f64,
    pub runs: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "benchmark", rename_all = "snake_case")]
pub enum BenchResults {
    Pairs {
        runs: Vec<PairRun>,
        summary: Vec<PairSummary>,
        /// Highest accuracy over the sweep (first multiplier on ties).
        best: PairSummary,
    },
    Graph {
        runs: Vec<GraphRun>,
        summary: Vec<GraphSummary>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    /// Generator settings; `seed` is the master seed.
    pub synth: SynthSpec,
    pub runs: usize,
    pub multipliers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prune_thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ica_seed: Option<u64>,
    pub results: BenchResults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_seconds: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn summarize_pairs(runs: &[PairRun], multipliers: &[f64]) -> (Vec<PairSummary>, PairSummary) {
    let summary: Vec<PairSummary> = multipliers
        .iter()
        .map(|&m| {
            let rows: Vec<&PairRun> = runs.iter().filter(|r| r.multiplier == m).collect();
            let correct = rows.iter().filter(|r| r.correct).count();
            PairSummary {
                multiplier: m,
                correct,
                runs: rows.len(),
                accuracy: if rows.is_empty() { 0.0 } else { correct as f64 / rows.len() as f64 },
            }
        })
        .collect();
    let best = summary
        .iter()
        .fold(None::<&PairSummary>, |best, s| match best {
            Some(b) if b.accuracy >= s.accuracy => Some(b),
            _ => Some(s),
        })
        .cloned()
        .unwrap_or(PairSummary {
            multiplier: f64::NAN,
            correct: 0,
            runs: 0,
            accuracy: 0.0,
        });
    (summary, best)
}

fn summarize_graph(runs: &[GraphRun], thresholds: &[f64]) -> Vec<GraphSummary> {
    thresholds
        .iter()
        .map(|&t| {
            let rows: Vec<&GraphRun> = runs.iter().filter(|r| r.prune_threshold == t).collect();
            GraphSummary {
                prune_threshold: t,
                runs: rows.len(),
                mean_precision: mean(rows.iter().map(|r| r.metrics.precision)),
                mean_recall: mean(rows.iter().map(|r| r.metrics.recall)),
            }
        })
        .collect()
}

/// Repeats pair generation and inference `runs` times with seeds derived from
/// `spec.seed`, evaluating every multiplier of the τ kernel on the same data.
pub fn bench_pairs(
    spec: &SynthSpec,
    multipliers: &[f64],
    alpha: f64,
    runs: usize,
) -> Result<BenchReport> {
    if spec.topology != Topology::Pair {
        return Err(EnciError::InvalidConfig("bench_pairs needs a pair topology".into()));
    }
    if multipliers.is_empty() || runs == 0 {
        return Err(EnciError::InvalidConfig("need at least one multiplier and one run".into()));
    }
    for &m in multipliers {
        KernelConfig::median(m).validate()?;
    }
    let start = Instant::now();
    let per_run: Vec<Vec<PairRun>> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<PairRun>> {
            let seed = derive_seed(spec.seed, run as u64);
            let data = generate(&SynthSpec { seed, ..*spec })?;
            multipliers
                .iter()
                .map(|&m| {
                    let t0 = Instant::now();
                    let cfg = PairConfig {
                        alpha,
                        ..PairConfig::with_kernel(KernelConfig::median(m))
                    };
                    let d = infer_pair(&data.dataset, &cfg)?;
                    Ok(PairRun {
                        run,
                        seed,
                        multiplier: m,
                        direction: d.direction,
                        r_xy: d.r_xy,
                        r_yx: d.r_yx,
                        correct: d.direction == Direction::XtoY,
                        seconds: Some(t0.elapsed().as_secs_f64()),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<PairRun> = per_run.into_iter().flatten().collect();
    let (summary, best) = summarize_pairs(&rows, multipliers);
    Ok(BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        synth: *spec,
        runs,
        multipliers: multipliers.to_vec(),
        alpha: Some(alpha),
        prune_thresholds: Vec::new(),
        ica_seed: None,
        results: BenchResults::Pairs {
            runs: rows,
            summary,
            best,
        },
        total_seconds: Some(start.elapsed().as_secs_f64()),
    })
}

/// Repeats graph generation and inference `runs` times; one LiNGAM fit per
/// run is pruned at every threshold.
pub fn bench_graph(
    spec: &SynthSpec,
    cfg: &GraphConfig,
    runs: usize,
    prune_thresholds: &[f64],
) -> Result<BenchReport> {
    if spec.topology == Topology::Pair {
        return Err(EnciError::InvalidConfig("bench_graph needs a graph topology".into()));
    }
    if prune_thresholds.is_empty() || runs == 0 {
        return Err(EnciError::InvalidConfig("need at least one threshold and one run".into()));
    }
    cfg.kernel.validate()?;
    let start = Instant::now();
    let per_run: Vec<Vec<GraphRun>> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<GraphRun>> {
            let seed = derive_seed(spec.seed, run as u64);
            let t0 = Instant::now();
            let data = generate(&SynthSpec { seed, ..*spec })?;
            let run_cfg = GraphConfig {
                seed: derive_seed(cfg.seed, run as u64),
                ..*cfg
            };
            let estimates = infer_graph_sweep(&data.dataset, &run_cfg, prune_thresholds)?;
            let seconds = t0.elapsed().as_secs_f64();
            estimates
                .iter()
                .zip(prune_thresholds)
                .map(|(g, &t)| {
                    Ok(GraphRun {
                        run,
                        seed,
                        prune_threshold: t,
                        metrics: edge_metrics(&g.adjacency, &data.truth)?,
                        shape_verdict: g.shape_verdict,
                        edges: g.adjacency.edges(),
                        seconds: Some(seconds),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<GraphRun> = per_run.into_iter().flatten().collect();
    let summary = summarize_graph(&rows, prune_thresholds);
    Ok(BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        synth: *spec,
        runs,
        multipliers: vec![cfg.kernel.multiplier],
        alpha: None,
        prune_thresholds: prune_thresholds.to_vec(),
        ica_seed: Some(cfg.seed),
        results: BenchResults::Graph { runs: rows, summary },
        total_seconds: Some(start.elapsed().as_secs_f64()),
    })
}

impl BenchReport {
    /// Drops all wall-clock fields, leaving a report that depends only on the
    /// inputs.
    pub fn without_timing(mut self) -> Self {
        self.total_seconds = None;
        match &mut self.results {
            BenchResults::Pairs { runs, .. } => runs.iter_mut().for_each(|r| r.seconds = None),
            BenchResults::Graph { runs, .. } => runs.iter_mut().for_each(|r| r.seconds = None),
        }
        self
    }

    /// True if the stored aggregates match a recomputation from the rows.
    pub fn aggregates_consistent(&self, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol || (a.is_nan() && b.is_nan());
        match &self.results {
            BenchResults::Pairs { runs, summary, best } => {
                let (s2, b2) = summarize_pairs(runs, &self.multipliers);
                summary.len() == s2.len()
                    && summary.iter().zip(&s2).all(|(a, b)| {
                        a.correct == b.correct && a.runs == b.runs && close(a.accuracy, b.accuracy)
                    })
                    && close(best.accuracy, b2.accuracy)
            }
            BenchResults::Graph { runs, summary } => {
                let s2 = summarize_graph(runs, &self.prune_thresholds);
                summary.len() == s2.len()
                    && summary.iter().zip(&s2).all(|(a, b)| {
                        a.runs == b.runs
                            && close(a.mean_precision, b.mean_precision)
                            && close(a.mean_recall, b.mean_recall)
                    })
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| EnciError::InvalidConfig(format!("bad report: {e}")))
    }

    /// Whitespace-separated table, one row per line.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let s = &self.synth;
        let _ = writeln!(
            out,
            "# schema {} seed {} runs {} groups {} sizes {}-{} topology {} mechanism {:?}",
            self.schema_version,
            s.seed,
            self.runs,
            s.n_groups,
            s.group_size.0,
            s.group_size.1,
            topology_name(&s.topology),
            s.mechanism,
        );
        match &self.results {
            BenchResults::Pairs { runs, summary, best } => {
                let _ = writeln!(out, "run\tseed\tmultiplier\tdirection\tr_xy\tr_yx\tcorrect{}", timing_header(runs.first().and_then(|r| r.seconds)));
                for r in runs {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}{}",
                        r.run,
                        r.seed,
                        r.multiplier,
                        r.direction.as_str(),
                        r.r_xy,
                        r.r_yx,
                        r.correct,
                        timing_cell(r.seconds)
                    );
                }
                let _ = writeln!(out, "\nmultiplier\tcorrect\truns\taccuracy");
                for m in summary {
                    let _ = writeln!(out, "{}\t{}\t{}\t{:.4}", m.multiplier, m.correct, m.runs, m.accuracy);
                }
                let _ = writeln!(out, "\nbest multiplier {} accuracy {:.4}", best.multiplier, best.accuracy);
            }
            BenchResults::Graph { runs, summary } => {
                let _ = writeln!(out, "run\tseed\tthreshold\tprecision\trecall\ttp\tfp\tfn\tverdict{}", timing_header(runs.first().and_then(|r| r.seconds)));
                for r in runs {
                    let m = &r.metrics;
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}{}",
                        r.run,
                        r.seed,
                        r.prune_threshold,
                        m.precision,
                        m.recall,
                        m.true_positive,
                        m.false_positive,
                        m.false_negative,
                        r.shape_verdict.as_str(),
                        timing_cell(r.seconds)
                    );
                }
                let _ = writeln!(out, "\nthreshold\truns\tmean_precision\tmean_recall");
                for g in summary {
                    let _ = writeln!(out, "{}\t{}\t{:.4}\t{:.4}", g.prune_threshold, g.runs, g.mean_precision, g.mean_recall);
                }
            }
        }
        if let Some(t) = self.total_seconds {
            let _ = writeln!(out, "\ntotal_seconds {t:.3}");
        }
        out
    }
}

fn timing_header(seconds: Option<f64>) -> &'static str {
    if seconds.is_some() {
        "\tseconds"
    } else {
        ""
    }
}

fn timing_cell(seconds: Option<f64>) -> String {
    seconds.map(|s| format!("\t{s:.3}")).unwrap_or_default()
}

fn topology_name(t: &Topology) -> String {
    match t {
        Topology::Pair => "pair".into(),
        Topology::Tsg { p } => format!("tsg{p}"),
        Topology::MipgFixed6 => "mipg6".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{rng_from_seed, MechanismKind};

    #[test]
    fn metrics_hand_count() {
        let truth = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
        let est = Adjacency::from_edges(3, &[(0, 1), (2, 1)]);
        let m = edge_metrics(&est, &truth).unwrap();
        assert_eq!((m.true_positive, m.false_positive, m.false_negative), (1, 1, 1));
        assert_eq!((m.precision, m.recall), (0.5, 0.5));
    }

    #[test]
    fn metrics_conventions() {
        let truth = Adjacency::from_edges(3, &[(0, 1)]);
        let empty = Adjacency::empty(3);
        let m = edge_metrics(&empty, &truth).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        let m = edge_metrics(&empty, &empty).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
        let m = edge_metrics(&truth, &empty).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        assert!(edge_metrics(&Adjacency::empty(2), &truth).is_err());
    }

    #[test]
    fn kmeans_single_cluster() {
        let mut rng = rng_from_seed(3);
        let data = DMatrix::from_fn(40, 2, |i, j| (i * 7 + j * 3) as f64 % 11.0);
        let (labels, _) = kmeans(&data, 1, &mut rng).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        let g = kmeanspp_groups(&data, None, 1, 10, 5, &mut rng).unwrap();
        assert_eq!(g.n_groups(), 5);
        assert_eq!(g.groups()[0].nrows(), 10);
    }

    #[test]
    fn no_eligible_cluster() {
        let mut rng = rng_from_seed(3);
        let data = DMatrix::from_fn(20, 1, |i, _| i as f64);
        let err = kmeanspp_groups(&data, None, 2, 20, 3, &mut rng).unwrap_err();
        assert!(matches!(err, EnciError::NoEligibleCluster(20)));
        assert!(kmeans(&data, 11, &mut rng).is_err());
    }

    #[test]
    fn pair_report_deterministic_and_consistent() {
        let spec = SynthSpec {
            n_groups: 30,
            ..SynthSpec::pair(5, MechanismKind::Multiplicative)
        };
        let a = bench_pairs(&spec, &[0.5, 1.0], 0.05, 3).unwrap();
        let b = bench_pairs(&spec, &[0.5, 1.0], 0.05, 3).unwrap();
        assert_eq!(a.clone().without_timing(), b.without_timing());
        assert!(a.aggregates_consistent(1e-12));
        let back = BenchReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert!(a.to_table().contains("best multiplier"));
    }
}
