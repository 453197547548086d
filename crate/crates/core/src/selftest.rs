//! Brute-force reference computations and a quick self-check of the fast
//! paths against them. The `selftest` CLI command runs [`run`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::dataset::GroupedDataset;
use crate::graph::Adjacency;
use crate::hsic::hsic_trace;
use crate::kernels::{gaussian_gram, KernelConfig};
use crate::lingam::{IcaLingam, LingamBackend};
use crate::synth::{derive_seed, generate, rng_from_seed, MechanismKind, SynthSpec};
use crate::trace::{normalize_groups, tau_profile_at, tau_profiles};

/// Median of all distinct pairwise absolute differences.
pub fn median_distance_naive(x: &[f64]) -> f64 {
    let mut d = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d.push((x[i] - x[j]).abs());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

fn k(a: f64, b: f64, sigma: f64) -> f64 {
    (-(a - b) * (a - b) / (2.0 * sigma * sigma)).exp()
}

/// τ-profile of scalar groups by explicit summation of `K_ab·H_ba`.
pub fn tau_naive(groups: &[Vec<f64>], sigma: f64) -> Vec<f64> {
    let stats: Vec<f64> = groups
        .iter()
        .map(|x| {
            let n = x.len();
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let h = if a == b { 1.0 } else { 0.0 } - 1.0 / n as f64;
                    s += k(x[a], x[b], sigma) * h;
                }
            }
            s / (n * n) as f64
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    stats.iter().map(|s| s - mean).collect()
}

/// Biased HSIC V-statistic as the textbook sum over four indices.
pub fn hsic_v_naive(x: &[f64], y: &[f64], sx: f64, sy: f64) -> f64 {
    let m = x.len();
    let mf = m as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let kij = k(x[i], x[j], sx);
            a += kij * k(y[i], y[j], sy);
            for q in 0..m {
                c += kij * k(y[i], y[q], sy);
                for r in 0..m {
                    b += kij * k(y[q], y[r], sy);
                }
            }
        }
    }
    a / (mf * mf) + b / mf.powi(4) - 2.0 * c / mf.powi(3)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn tiny_dataset<R: Rng>(rng: &mut R) -> Vec<Vec<f64>> {
    let n_groups = rng.random_range(2..=4);
    (0..n_groups)
        .map(|_| {
            let n = rng.random_range(2..=6);
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
        })
        .collect()
}

fn check_tau<R: Rng>(rng: &mut R) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let groups = tiny_dataset(rng);
        let mats = groups
            .iter()
            .map(|g| DMatrix::from_column_slice(g.len(), 1, g))
            .collect();
        let data = GroupedDataset::with_default_names(mats).expect("valid tiny dataset");
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        let sigma = median_distance_naive(&pooled);
        let fast = tau_profile_at(&data, 0, &KernelConfig::default()).expect("tau");
        let slow = tau_naive(&groups, sigma);
        for (a, b) in fast.values.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    Check {
        name: "tau_oracle",
        passed: worst <= 1e-12,
        detail: format!("max |diff| {worst:.3e} over 50 datasets"),
    }
}

fn check_zero_sum() -> Check {
    let mut worst: f64 = 0.0;
    for s in 0..4 {
        let spec = SynthSpec {
            n_groups: 40,
            ..SynthSpec::pair(derive_seed(11, s), MechanismKind::Multiplicative)
        };
        let data = normalize_groups(&generate(&spec).expect("generator").dataset);
        for p in tau_profiles(&data, &KernelConfig::default()).expect("tau") {
            let scale = p.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sum: f64 = p.values.iter().sum();
            worst = worst.max(sum.abs() / scale);
        }
    }
    Check {
        name: "tau_zero_sum",
        passed: worst <= 1e-10,
        detail: format!("max relative |sum| {worst:.3e}"),
    }
}

fn check_hsic<R: Rng>(rng: &mut R) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(2..=10);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (sx, sy) = (rng.random_range(0.3..2.0), rng.random_range(0.3..2.0));
        let kx = gaussian_gram(&x, sx).expect("gram").into_inner();
        let ly = gaussian_gram(&y, sy).expect("gram").into_inner();
        let fast = hsic_trace(&kx, &ly) / (m * m) as f64;
        worst = worst.max((fast - hsic_v_naive(&x, &y, sx, sy)).abs());
    }
    Check {
        name: "hsic_oracle",
        passed: worst <= 1e-10,
        detail: format!("max |diff| {worst:.3e} over 20 samples"),
    }
}

fn check_gram_psd<R: Rng>(rng: &mut R) -> Check {
    let mut lowest = f64::INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(2..=30);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = gaussian_gram(&x, rng.random_range(0.2..3.0)).expect("gram").into_inner();
        lowest = lowest.min(g.symmetric_eigenvalues().min());
    }
    Check {
        name: "gram_psd",
        passed: lowest >= -1e-10,
        detail: format!("smallest eigenvalue {lowest:.3e}"),
    }
}

/// Random strictly lower-triangular system in a shuffled variable order.
pub fn random_lingam_system<R: Rng>(p: usize, n: usize, rng: &mut R) -> (DMatrix<f64>, Adjacency) {
    let mut perm: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut truth = Adjacency::empty(p);
    let mut b = DMatrix::zeros(p, p);
    for child in 1..p {
        for parent in 0..child {
            if rng.random_bool(0.6) {
                let c = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                b[(perm[child], perm[parent])] = c;
                truth.set(perm[parent], perm[child], true);
            }
        }
    }
    let exp = Exp::new(1.0).expect("rate 1");
    let mut x = DMatrix::zeros(n, p);
    for r in 0..n {
        for &v in &perm {
            let mut val = exp.sample(rng) - 1.0;
            for m in 0..p {
                val += b[(v, m)] * x[(r, m)];
            }
            x[(r, v)] = val;
        }
    }
    (x, truth)
}

/// Number of ancestor pairs of `truth` placed in reverse by `order`.
pub fn reversed_ancestor_pairs(truth: &Adjacency, order: &[usize]) -> usize {
    let p = truth.n_nodes();
    let mut pos = vec![0; p];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    (0..p)
        .flat_map(|a| (0..p).map(move |b| (a, b)))
        .filter(|&(a, b)| truth.is_ancestor(a, b) && pos[a] > pos[b])
        .count()
}

fn check_lingam_order<R: Rng>(rng: &mut R) -> Check {
    let runs = 20;
    let mut ok = 0;
    for s in 0..runs {
        let p = rng.random_range(2..=5);
        let (x, truth) = random_lingam_system(p, 1000, rng);
        if let Ok(fit) = IcaLingam::default().fit(&x, s) {
            if reversed_ancestor_pairs(&truth, &fit.order) == 0 {
                ok += 1;
            }
        }
    }
    Check {
        name: "lingam_order",
        passed: ok * 100 >= 95 * runs as usize,
        detail: format!("{ok}/{runs} orders without a reversed ancestor pair"),
    }
}

/// Runs every check with a fixed seed.
pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = rng_from_seed(seed);
    vec![
        check_tau(&mut rng),
        check_zero_sum(),
        check_hsic(&mut rng),
        check_gram_psd(&mut rng),
        check_lingam_order(&mut rng),
    ]
}
