//! Seeded generators for the synthetic pair and graph experiments.
//!
//! Causes are three-component Gaussian mixtures (means 1, 0, −1; sd 0.3) whose
//! weights are redrawn uniformly from the simplex for every group. Effects are
//! produced by a bank of seven functions, redrawn per group and per edge, with
//! an additive or multiplicative noise term.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{default_names, GroupedDataset};
use crate::error::{EnciError, Result};
use crate::graph::Adjacency;

pub const CAUSE_MEANS: [f64; 3] = [1.0, 0.0, -1.0];
pub const CAUSE_SD: f64 = 0.3;
pub const N_FUNCTIONS: u8 = 7;
pub const COEF_RANGE: (f64, f64) = (0.8, 1.2);

/// The concrete RNG used by every generator.
pub type SynthRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic per-run seed from a master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Additive,
    Multiplicative,
}

/// One member of the function bank with its random coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// 1..=7
    pub function_id: u8,
    pub c: f64,
}

impl MechanismSpec {
    /// Uniform function choice, `c ~ U[0.8, 1.2]`.
    pub fn random<R: Rng>(kind: MechanismKind, rng: &mut R) -> Self {
        Self {
            kind,
            function_id: rng.random_range(1..=N_FUNCTIONS),
            c: rng.random_range(COEF_RANGE.0..=COEF_RANGE.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=N_FUNCTIONS).contains(&self.function_id) {
            return Err(EnciError::InvalidConfig(format!(
                "unknown mechanism function f{}",
                self.function_id
            )));
        }
        Ok(())
    }

    /// The function value `f(x)`; `noise` is only read by f3.
    pub fn function(&self, x: f64, noise: f64) -> f64 {
        let c = self.c;
        match self.function_id {
            1 => 1.0 / (x * x + 1.0),
            2 => (c * x).signum() * (c * x) * (c * x),
            // The frequency factor is the per-sample noise value.
            3 => (c * x * noise).cos(),
            4 => x * x,
            5 => (c * x).sin(),
            6 => 2.0 * x.sin() + 2.0 * x.cos(),
            7 => 4.0 * x.abs().sqrt(),
            id => unreachable!("function id {id} not validated"),
        }
    }

    /// Applies `f` and combines it with the noise per the mechanism kind.
    pub fn combine(&self, x: f64, noise: f64) -> f64 {
        let f = self.function(x, noise);
        match self.kind {
            MechanismKind::Additive => f + noise,
            MechanismKind::Multiplicative => f * noise,
        }
    }
}

/// How a node with several parents combines its per-parent functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiParentRule {
    /// `y = Π_k f_k(x_k) × E`
    #[default]
    Product,
    /// `y = (Σ_k f_k(x_k)) × E`
    Sum,
}

/// When the per-edge mechanisms of a graph are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismRedraw {
    /// Fresh function and coefficient for every edge in every group.
    #[default]
    PerGroup,
    /// One function and coefficient per edge, shared by all groups.
    Once,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Topology {
    Pair,
    Tsg { p: usize },
    MipgFixed6,
}

/// Everything needed to regenerate a synthetic dataset bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_groups: usize,
    /// Inclusive group size range.
    pub group_size: (usize, usize),
    pub topology: Topology,
    pub mechanism: MechanismKind,
    pub multi_parent: MultiParentRule,
    /// Graphs only; pairs always redraw per group.
    #[serde(default)]
    pub redraw: MechanismRedraw,
}

impl SynthSpec {
    pub fn pair(seed: u64, mechanism: MechanismKind) -> Self {
        Self {
            seed,
            n_groups: 200,
            group_size: (40, 50),
            topology: Topology::Pair,
            mechanism,
            multi_parent: MultiParentRule::Product,
            redraw: MechanismRedraw::PerGroup,
        }
    }

    pub fn tsg(seed: u64, p: usize) -> Self {
        Self {
            seed,
            n_groups: 1000,
            group_size: (40, 50),
            topology: Topology::Tsg { p },
            mechanism: MechanismKind::Multiplicative,
            multi_parent: MultiParentRule::Product,
            redraw: MechanismRedraw::PerGroup,
        }
    }

    pub fn mipg(seed: u64) -> Self {
        Self {
            seed,
            n_groups: 2000,
            group_size: (40, 50),
            topology: Topology::MipgFixed6,
            mechanism: MechanismKind::Multiplicative,
            multi_parent: MultiParentRule::Product,
            redraw: MechanismRedraw::PerGroup,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.group_size;
        if lo > hi {
            return Err(EnciError::InvalidConfig(format!(
                "group size range {lo}..={hi} is empty"
            )));
        }
        if lo < 2 {
            return Err(EnciError::InvalidConfig("groups need at least 2 points".into()));
        }
        if self.n_groups < 2 {
            return Err(EnciError::InvalidConfig("need at least 2 groups".into()));
        }
        if let Topology::Tsg { p } = self.topology {
            if p < 2 {
                return Err(EnciError::InvalidConfig("tree needs at least 2 nodes".into()));
            }
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: GroupedDataset,
    pub truth: Adjacency,
    /// Mixture weights of the first root variable, per group.
    pub root_weights: Vec<[f64; 3]>,
}

/// Uniform draw from the 2-simplex via sorted uniform gaps.
pub fn sample_simplex3<R: Rng>(rng: &mut R) -> [f64; 3] {
    let a: f64 = rng.random();
    let b: f64 = rng.random();
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    [lo, hi - lo, 1.0 - hi]
}

/// Draws `n` samples from the three-Gaussian cause family.
pub fn sample_cause<R: Rng>(n: usize, weights: &[f64; 3], rng: &mut R) -> Vec<f64> {
    let components: Vec<Normal<f64>> = CAUSE_MEANS
        .iter()
        .map(|&m| Normal::new(m, CAUSE_SD).expect("valid normal"))
        .collect();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let k = if u < weights[0] {
                0
            } else if u < weights[0] + weights[1] {
                1
            } else {
                2
            };
            components[k].sample(rng)
        })
        .collect()
}

/// `Y = f(X) + E` or `Y = f(X) × E` with `E ~ N(0, 1)`.
pub fn apply_mechanism<R: Rng>(x: &[f64], spec: &MechanismSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(x
        .iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(rng);
            spec.combine(v, e)
        })
        .collect())
}

/// Deterministic variant with caller-supplied noise.
pub fn apply_mechanism_with_noise(x: &[f64], spec: &MechanismSpec, noise: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.len() != noise.len() {
        return Err(EnciError::DimensionMismatch {
            expected: x.len(),
            got: noise.len(),
        });
    }
    Ok(x.iter().zip(noise).map(|(&v, &e)| spec.combine(v, e)).collect())
}

fn group_size<R: Rng>(spec: &SynthSpec, rng: &mut R) -> usize {
    rng.random_range(spec.group_size.0..=spec.group_size.1)
}

fn columns_to_matrix(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns[0].len();
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

fn finish(
    spec: &SynthSpec,
    names: Vec<String>,
    groups: Vec<DMatrix<f64>>,
    truth: Adjacency,
    root_weights: Vec<[f64; 3]>,
) -> Result<SynthOutput> {
    let dataset = GroupedDataset::new(names, groups)?
        .with_provenance("generator", serde_json::to_string(spec).unwrap_or_default())
        .with_provenance("seed", spec.seed)
        .with_provenance("truth", serde_json::to_string(&truth.edges()).unwrap_or_default());
    Ok(SynthOutput {
        dataset,
        truth,
        root_weights,
    })
}

/// Cause-effect pair `x → y` with a fresh cause distribution and mechanism per group.
pub fn gen_pair(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut groups = Vec::with_capacity(spec.n_groups);
    let mut weights = Vec::with_capacity(spec.n_groups);
    for _ in 0..spec.n_groups {
        let w = sample_simplex3(&mut rng);
        let n = group_size(spec, &mut rng);
        let mech = MechanismSpec::random(spec.mechanism, &mut rng);
        let x = sample_cause(n, &w, &mut rng);
        let y = apply_mechanism(&x, &mech, &mut rng)?;
        groups.push(columns_to_matrix(&[x, y]));
        weights.push(w);
    }
    finish(
        spec,
        vec!["x".into(), "y".into()],
        groups,
        Adjacency::from_edges(2, &[(0, 1)]),
        weights,
    )
}

/// Child values from their parents' values with `E ~ U(0, 1)` multiplicative noise.
fn child_values<R: Rng>(
    parents: &[&[f64]],
    mechs: &[MechanismSpec],
    kind: MechanismKind,
    rule: MultiParentRule,
    rng: &mut R,
) -> Vec<f64> {
    let n = parents[0].len();
    (0..n)
        .map(|i| {
            let e: f64 = rng.random();
            let fs = parents.iter().zip(mechs).map(|(p, m)| m.function(p[i], e));
            let f = match rule {
                MultiParentRule::Product => fs.product::<f64>(),
                MultiParentRule::Sum => fs.sum::<f64>(),
            };
            match kind {
                MechanismKind::Additive => f + e,
                MechanismKind::Multiplicative => f * e,
            }
        })
        .collect()
}

/// Generates every group of a DAG whose nodes are listed in topological order.
fn gen_dag(spec: &SynthSpec, truth: Adjacency, rng: &mut SynthRng) -> Result<SynthOutput> {
    let p = truth.n_nodes();
    let order = truth
        .topological_order()
        .ok_or_else(|| EnciError::InvalidConfig("ground truth graph has a cycle".into()))?;
    let draw = |rng: &mut SynthRng| -> Vec<Vec<MechanismSpec>> {
        (0..p)
            .map(|node| {
                truth
                    .parents(node)
                    .iter()
                    .map(|_| MechanismSpec::random(spec.mechanism, rng))
                    .collect()
            })
            .collect()
    };
    let fixed = (spec.redraw == MechanismRedraw::Once).then(|| draw(rng));
    let mut groups = Vec::with_capacity(spec.n_groups);
    let mut root_weights = Vec::with_capacity(spec.n_groups);
    for _ in 0..spec.n_groups {
        let fresh;
        let mechs = match &fixed {
            Some(m) => m,
            None => {
                fresh = draw(rng);
                &fresh
            }
        };
        let n = group_size(spec, rng);
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); p];
        let mut first_root = true;
        for &node in &order {
            let parents = truth.parents(node);
            cols[node] = if parents.is_empty() {
                let w = sample_simplex3(rng);
                if first_root {
                    root_weights.push(w);
                    first_root = false;
                }
                sample_cause(n, &w, rng)
            } else {
                let refs: Vec<&[f64]> = parents.iter().map(|&q| cols[q].as_slice()).collect();
                child_values(&refs, &mechs[node], spec.mechanism, spec.multi_parent, rng)
            };
        }
        groups.push(columns_to_matrix(&cols));
    }
    finish(spec, default_names(p), groups, truth, root_weights)
}

/// Random tree: node 0 is the root, node `k` picks a parent uniformly from `0..k`.
pub fn random_tree<R: Rng>(p: usize, rng: &mut R) -> Adjacency {
    let mut a = Adjacency::empty(p);
    for k in 1..p {
        a.set(rng.random_range(0..k), k, true);
    }
    a
}

pub fn gen_tsg(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let Topology::Tsg { p } = spec.topology else {
        return Err(EnciError::InvalidConfig("gen_tsg needs a tsg topology".into()));
    };
    let mut rng = rng_from_seed(spec.seed);
    let truth = random_tree(p, &mut rng);
    gen_dag(spec, truth, &mut rng)
}

/// The fixed six-node graph x1→x4, x2→x5, x3→x5, x4→x6, x5→x6 (0-based here).
pub fn mipg_fixed6_truth() -> Adjacency {
    Adjacency::from_edges(6, &[(0, 3), (1, 4), (2, 4), (3, 5), (4, 5)])
}

pub fn gen_mipg_fixed6(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    gen_dag(spec, mipg_fixed6_truth(), &mut rng)
}

/// Dispatches on the topology.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    match spec.topology {
        Topology::Pair => gen_pair(spec),
        Topology::Tsg { .. } => gen_tsg(spec),
        Topology::MipgFixed6 => gen_mipg_fixed6(spec),
    }
}

/// A single ungrouped table drawn from `regimes` hidden instantiations of the
/// six-node graph, rows shuffled. Stands in for survey-style data whose
/// heterogeneity must be recovered by clustering before inference.
pub fn gen_regime_table(seed: u64, rows: usize, regimes: usize) -> Result<(DMatrix<f64>, Vec<String>)> {
    if regimes == 0 || rows < 2 * regimes {
        return Err(EnciError::InvalidConfig(format!(
            "cannot split {rows} rows into {regimes} regimes"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let truth = mipg_fixed6_truth();
    let order = truth.topological_order().expect("fixed graph is acyclic");
    let mut all: Vec<[f64; 6]> = Vec::with_capacity(rows);
    for r in 0..regimes {
        let n = rows / regimes + usize::from(r < rows % regimes);
        let offset: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 6];
        for &node in &order {
            let parents = truth.parents(node);
            cols[node] = if parents.is_empty() {
                let w = sample_simplex3(&mut rng);
                sample_cause(n, &w, &mut rng)
            } else {
                let refs: Vec<&[f64]> = parents.iter().map(|&q| cols[q].as_slice()).collect();
                let kind = MechanismKind::Multiplicative;
                let mechs: Vec<MechanismSpec> =
                    parents.iter().map(|_| MechanismSpec::random(kind, &mut rng)).collect();
                child_values(&refs, &mechs, kind, MultiParentRule::Product, &mut rng)
            };
        }
        for i in 0..n {
            let mut row = [0.0; 6];
            for (j, v) in row.iter_mut().enumerate() {
                *v = cols[j][i] + offset[j];
            }
            all.push(row);
        }
    }
    use rand::seq::SliceRandom;
    all.shuffle(&mut rng);
    let m = DMatrix::from_fn(rows, 6, |i, j| all[i][j]);
    Ok((m, default_names(6)))
}
