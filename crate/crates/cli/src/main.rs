use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use enci_core::eval::{bench_graph, bench_pairs, kmeanspp_groups, BenchReport};
use enci_core::io::{load_grouped_csv, load_table, save_grouped_csv, save_manifest_layout, save_table};
use enci_core::kernels::{KernelConfig, SWEEP_MULTIPLIERS};
use enci_core::lingam::{infer_graph, GraphConfig, DEFAULT_PRUNE_THRESHOLD};
use enci_core::pairwise::{infer_pair, PairConfig};
use enci_core::synth::{
    gen_regime_table, generate, rng_from_seed, MechanismKind, MechanismRedraw, MultiParentRule, SynthSpec,
};
use enci_core::{selftest, EnciError};

#[derive(Parser)]
#[command(name = "enci", version, about = "Causal inference from grouped nonstationary data")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grouped dataset.
    Gen(GenArgs),
    /// Orient a cause-effect pair.
    InferPair(InferPairArgs),
    /// Estimate a tree or multiple-independent-parent graph.
    InferGraph(InferGraphArgs),
    /// Repeated synthetic pair benchmark.
    BenchPairs(BenchPairsArgs),
    /// Repeated synthetic graph benchmark.
    BenchGraph(BenchGraphArgs),
    /// Cluster a single table with k-means++ and draw artificial groups.
    Subsample(SubsampleArgs),
    /// Check the fast numerical paths against brute-force references.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Pair,
    Tsg,
    Mipg,
    /// Ungrouped table from hidden regimes of the six-node graph (`gen` only).
    Regimes,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Additive,
    Multiplicative,
}

impl From<MechanismArg> for MechanismKind {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Additive => MechanismKind::Additive,
            MechanismArg::Multiplicative => MechanismKind::Multiplicative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MultiParentArg {
    Product,
    Sum,
}

#[derive(Clone, Copy, ValueEnum)]
enum RedrawArg {
    PerGroup,
    Once,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Single,
    Manifest,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of groups (default depends on the topology).
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, default_value_t = 40)]
    min_size: usize,
    #[arg(long, default_value_t = 50)]
    max_size: usize,
    /// How a node combines several parents.
    #[arg(long, value_enum, default_value = "product")]
    multi_parent: MultiParentArg,
    /// When graph mechanisms are drawn.
    #[arg(long, value_enum, default_value = "per-group")]
    redraw: RedrawArg,
}

impl SynthArgs {
    fn apply(&self, mut spec: SynthSpec) -> SynthSpec {
        if let Some(g) = self.groups {
            spec.n_groups = g;
        }
        spec.group_size = (self.min_size, self.max_size);
        spec.multi_parent = match self.multi_parent {
            MultiParentArg::Product => MultiParentRule::Product,
            MultiParentArg::Sum => MultiParentRule::Sum,
        };
        spec.redraw = match self.redraw {
            RedrawArg::PerGroup => MechanismRedraw::PerGroup,
            RedrawArg::Once => MechanismRedraw::Once,
        };
        spec
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "pair")]
    topology: TopologyArg,
    /// Tree size.
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// Pairs default to additive, graphs to multiplicative.
    #[arg(long, value_enum)]
    mechanism: Option<MechanismArg>,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, value_enum, default_value = "single")]
    layout: Layout,
    /// Rows of a `regimes` table.
    #[arg(long, default_value_t = 5000)]
    rows: usize,
    /// Hidden regimes of a `regimes` table.
    #[arg(long, default_value_t = 15)]
    regimes: usize,
    /// CSV file, or a directory for the manifest layout.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct InferPairArgs {
    /// Grouped CSV or manifest (.json).
    input: PathBuf,
    /// Candidate cause (default: first variable).
    #[arg(long)]
    x: Option<String>,
    /// Candidate effect (default: second variable).
    #[arg(long)]
    y: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    bandwidth_multiplier: f64,
    #[arg(long, default_value_t = enci_core::hsic::DEFAULT_ALPHA)]
    alpha: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct InferGraphArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    bandwidth_multiplier: f64,
    #[arg(long, default_value_t = DEFAULT_PRUNE_THRESHOLD)]
    prune_threshold: f64,
    /// ICA seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct BenchPairsArgs {
    #[arg(long, value_enum, default_value = "additive")]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Repeatable; `--sweep` uses the full default grid.
    #[arg(long)]
    bandwidth_multiplier: Vec<f64>,
    #[arg(long, conflicts_with = "bandwidth_multiplier")]
    sweep: bool,
    #[arg(long, default_value_t = enci_core::hsic::DEFAULT_ALPHA)]
    alpha: f64,
    #[command(flatten)]
    synth: SynthArgs,
    /// Include wall-clock times (makes output non-reproducible).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct BenchGraphArgs {
    #[arg(long, value_enum, default_value = "tsg")]
    topology: TopologyArg,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, value_enum, default_value = "multiplicative")]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 1.0)]
    bandwidth_multiplier: f64,
    /// Repeatable.
    #[arg(long)]
    prune_threshold: Vec<f64>,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SubsampleArgs {
    /// Plain CSV table with a header row.
    input: PathBuf,
    #[arg(long, default_value_t = 15)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    group_size: usize,
    #[arg(long, default_value_t = 1500)]
    groups: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &EnciError) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(e, EnciError::InvalidConfig(_) | EnciError::UnknownVariable(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<(), EnciError> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::InferPair(a) => cmd_infer_pair(a),
        Command::InferGraph(a) => cmd_infer_graph(a),
        Command::BenchPairs(a) => cmd_bench_pairs(a),
        Command::BenchGraph(a) => cmd_bench_graph(a),
        Command::Subsample(a) => cmd_subsample(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), EnciError> {
    match &out.output {
        Some(path) => std::fs::write(path, text).map_err(|e| EnciError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn graph_spec(topology: TopologyArg, p: usize, seed: u64, kind: MechanismKind) -> SynthSpec {
    match topology {
        TopologyArg::Pair | TopologyArg::Regimes => SynthSpec::pair(seed, kind),
        TopologyArg::Tsg => SynthSpec {
            mechanism: kind,
            ..SynthSpec::tsg(seed, p)
        },
        TopologyArg::Mipg => SynthSpec {
            mechanism: kind,
            ..SynthSpec::mipg(seed)
        },
    }
}

fn gen(a: GenArgs) -> Result<(), EnciError> {
    if let TopologyArg::Regimes = a.topology {
        let (table, names) = gen_regime_table(a.synth.seed, a.rows, a.regimes)?;
        let mut prov = std::collections::BTreeMap::new();
        prov.insert("generator".to_string(), format!("regimes rows={} regimes={}", a.rows, a.regimes));
        prov.insert("seed".to_string(), a.synth.seed.to_string());
        save_table(&table, &names, &prov, &a.output)?;
        eprintln!("wrote {} rows, {} columns to {}", table.nrows(), table.ncols(), a.output.display());
        return Ok(());
    }
    let kind = a.mechanism.map(MechanismKind::from).unwrap_or(match a.topology {
        TopologyArg::Pair => MechanismKind::Additive,
        _ => MechanismKind::Multiplicative,
    });
    let spec = a.synth.apply(graph_spec(a.topology, a.p, a.synth.seed, kind));
    let out = generate(&spec)?;
    match a.layout {
        Layout::Single => save_grouped_csv(&out.dataset, &a.output)?,
        Layout::Manifest => {
            save_manifest_layout(&out.dataset, &a.output)?;
        }
    }
    eprintln!(
        "wrote {} groups, {} variables to {}",
        out.dataset.n_groups(),
        out.dataset.n_vars(),
        a.output.display()
    );
    Ok(())
}

fn cmd_infer_pair(a: InferPairArgs) -> Result<(), EnciError> {
    let data = load_grouped_csv(&a.input)?;
    let vars = data.variables().to_vec();
    let pick = |name: &Option<String>, default: usize| -> Result<usize, EnciError> {
        match name {
            Some(n) => data.variable_index(n),
            None if default < vars.len() => Ok(default),
            None => Err(EnciError::InvalidDataset(
                "pair inference needs at least two variables".into(),
            )),
        }
    };
    let (ix, iy) = (pick(&a.x, 0)?, pick(&a.y, 1)?);
    if ix == iy {
        return Err(EnciError::InvalidConfig("--x and --y name the same variable".into()));
    }
    let pair = data.select_columns(&[ix, iy])?;
    let cfg = PairConfig {
        alpha: a.alpha,
        ..PairConfig::with_kernel(KernelConfig::median(a.bandwidth_multiplier))
    };
    cfg.kernel.validate()?;
    let d = infer_pair(&pair, &cfg)?;
    let (nx, ny) = (&vars[ix], &vars[iy]);
    let text = match a.out.format {
        Format::Json => to_json(&serde_json::json!({
            "x": nx,
            "y": ny,
            "direction": d.direction.as_str(),
            "decision": d,
        })),
        Format::Table => {
            let arrow = match d.direction {
                enci_core::pairwise::Direction::XtoY => format!("{nx} -> {ny}"),
                enci_core::pairwise::Direction::YtoX => format!("{ny} -> {nx}"),
                enci_core::pairwise::Direction::Undecided => "undecided".into(),
            };
            format!(
                "direction\t{arrow}\nr_xy\t{:.6}\nr_yx\t{:.6}\nslope_xy\t{:.6}\nslope_yx\t{:.6}\n",
                d.r_xy, d.r_yx, d.slope_xy, d.slope_yx
            )
        }
    };
    emit(&a.out, &text)
}

fn cmd_infer_graph(a: InferGraphArgs) -> Result<(), EnciError> {
    let data = load_grouped_csv(&a.input)?;
    let cfg = GraphConfig {
        kernel: KernelConfig::median(a.bandwidth_multiplier),
        prune_threshold: a.prune_threshold,
        seed: a.seed,
        ..GraphConfig::default()
    };
    cfg.kernel.validate()?;
    if !(a.prune_threshold >= 0.0 && a.prune_threshold.is_finite()) {
        return Err(EnciError::InvalidConfig("prune threshold must be finite and non-negative".into()));
    }
    let g = infer_graph(&data, &cfg)?;
    let vars = data.variables();
    let text = match a.out.format {
        Format::Json => to_json(&serde_json::json!({
            "variables": vars,
            "estimate": g,
        })),
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "verdict\t{}\tn_row {}\tn_col {}", g.shape_verdict.as_str(), g.n_row, g.n_col);
            let order: Vec<&str> = g.coefficients.variable_order.iter().map(|&i| vars[i].as_str()).collect();
            let _ = writeln!(s, "order\t{}", order.join(" "));
            let _ = writeln!(s, "from\tto\tcoefficient");
            for (m, n) in g.adjacency.edges() {
                let _ = writeln!(s, "{}\t{}\t{:.6}", vars[m], vars[n], g.coefficients.get(n, m));
            }
            s
        }
    };
    emit(&a.out, &text)
}

fn render_report(report: BenchReport, timings: bool, format: Format) -> String {
    let report = if timings { report } else { report.without_timing() };
    match format {
        Format::Json => report.to_json() + "\n",
        Format::Table => report.to_table(),
    }
}

fn cmd_bench_pairs(a: BenchPairsArgs) -> Result<(), EnciError> {
    let spec = a.synth.apply(SynthSpec::pair(a.synth.seed, a.mechanism.into()));
    let multipliers = if a.sweep {
        SWEEP_MULTIPLIERS.to_vec()
    } else if a.bandwidth_multiplier.is_empty() {
        vec![1.0]
    } else {
        a.bandwidth_multiplier.clone()
    };
    let report = bench_pairs(&spec, &multipliers, a.alpha, a.runs)?;
    emit(&a.out, &render_report(report, a.timings, a.out.format))
}

fn cmd_bench_graph(a: BenchGraphArgs) -> Result<(), EnciError> {
    if matches!(a.topology, TopologyArg::Pair | TopologyArg::Regimes) {
        return Err(EnciError::InvalidConfig("bench-graph needs --topology tsg or mipg".into()));
    }
    let spec = a.synth.apply(graph_spec(a.topology, a.p, a.synth.seed, a.mechanism.into()));
    let thresholds = if a.prune_threshold.is_empty() {
        vec![DEFAULT_PRUNE_THRESHOLD]
    } else {
        a.prune_threshold.clone()
    };
    let cfg = GraphConfig {
        kernel: KernelConfig::median(a.bandwidth_multiplier),
        seed: a.synth.seed,
        ..GraphConfig::default()
    };
    let report = bench_graph(&spec, &cfg, a.runs, &thresholds)?;
    emit(&a.out, &render_report(report, a.timings, a.out.format))
}

fn cmd_subsample(a: SubsampleArgs) -> Result<(), EnciError> {
    let (table, names) = load_table(&a.input)?;
    let mut rng = rng_from_seed(a.seed);
    let data = kmeanspp_groups(&table, Some(names), a.k, a.group_size, a.groups, &mut rng)?
        .with_provenance("source", display(&a.input))
        .with_provenance("subsample", format!("k={} group_size={} seed={}", a.k, a.group_size, a.seed));
    save_grouped_csv(&data, &a.output)?;
    eprintln!("wrote {} groups of {} rows to {}", data.n_groups(), a.group_size, a.output.display());
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_selftest(a: SelftestArgs) -> Result<(), EnciError> {
    let checks = selftest::run(a.seed);
    let text = match a.out.format {
        Format::Json => to_json(&checks),
        Format::Table => {
            let mut s = String::new();
            for c in &checks {
                let _ = writeln!(s, "{}\t{}\t{}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            s
        }
    };
    emit(&a.out, &text)?;
    if !checks.iter().all(|c| c.passed) {
        eprintln!("error: self-test failed");
        std::process::exit(EXIT_NUMERICAL.into());
    }
    Ok(())
}
