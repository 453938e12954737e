//! Command-line experiment runner.
//!
//! Every subcommand writes one JSON document carrying the tool version, the
//! full configuration (for replay) and the result. Exit codes: 0 success,
//! 1 a statistical test rejected, 2 invalid input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use exlab::cascade::{sample_cascade, TreeSpec};
use exlab::dovsud::{decompose_from_kernels, estimate_gram, gaussian_sampler, reconstruct, DsDecomposition};
use exlab::erm::{builtins, draw_replicas, quench, sample_slice, Kernel, TheoremADirecting};
use exlab::exchtest::{
    permutation_invariance_test, samplers, standard_cylinders, CylinderKey, Permutation, TestReport,
};
use exlab::parisi::{
    compare_to_finite_n, evaluate_p, minimize_p, Family, InnerMode, NamedSigma, PEvalConfig, SigmaFunction,
    SigmaGrid,
};
use exlab::rng::{SeedContext, SubsetKey};
use exlab::skewprod::ArraySlice;
use exlab::vianabray::{free_energy_mc, CouplingLaw};
use exlab::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "exlab", version, about = "Exchangeable random measures and dilute spin glasses")]
struct Cli {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Optional tabular dump.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an exchangeable array or replicas of a quenched random measure.
    ErmSample(ErmSampleArgs),
    /// Permutation-invariance test of a built-in sampler.
    ExchTest(ExchTestArgs),
    /// Gram matrix from kernels or a decomposition; optional Gaussian sampling.
    Ds(DsArgs),
    /// Finite-N free energy of the Viana-Bray model by exact enumeration.
    VbFn(VbFnArgs),
    /// Evaluate the limiting functional at one sigma.
    ParisiEval(ParisiEvalArgs),
    /// Minimize the functional over a parametric family.
    ParisiMin(ParisiMinArgs),
    /// Finite-N free energies against the family minimum.
    Compare(CompareArgs),
    /// Sample Ruelle cascade weights.
    Cascade(CascadeArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ArrayModel {
    Iid,
    Erpm,
    Bipartition,
    Constant,
}

#[derive(Args, Serialize)]
struct ErmSampleArgs {
    #[arg(long, value_enum, default_value = "erpm")]
    model: ArrayModel,
    /// Size of the ground set.
    #[arg(long, default_value_t = 6)]
    n: u32,
    /// Replicas from one quenched measure; 0 samples the array itself.
    #[arg(long, default_value_t = 0)]
    replicas: usize,
    /// Success probability for the i.i.d. model.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum TestSampler {
    Iid,
    Erpm,
    Bipartition,
    Vb,
    Biased,
}

#[derive(Args, Serialize)]
struct ExchTestArgs {
    #[arg(long, value_enum)]
    sampler: TestSampler,
    #[arg(long, default_value_t = 4)]
    n: u32,
    /// Samples per arm.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Transposition `a,b` to test.
    #[arg(long, default_value = "1,2")]
    swap: String,
    /// Bias of position 1 for the biased sampler.
    #[arg(long, default_value_t = 0.8)]
    p: f64,
}

#[derive(Args, Serialize)]
struct DsArgs {
    /// JSON array of kernels on a common grid.
    #[arg(long, conflicts_with = "decomposition")]
    kernels: Option<PathBuf>,
    /// JSON decomposition `{grid_depth, xi, a}`.
    #[arg(long)]
    decomposition: Option<PathBuf>,
    /// Gaussian samples to draw and re-estimate the Gram matrix from.
    #[arg(long, default_value_t = 0)]
    samples: usize,
}

#[derive(Args, Serialize)]
struct VbFnArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
}

#[derive(Args, Serialize)]
struct ModelArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    /// Outer Monte Carlo samples.
    #[arg(long, default_value_t = 10000)]
    outer: usize,
    /// Inner Monte Carlo samples instead of exact inner expectations.
    #[arg(long)]
    inner_mc: Option<usize>,
}

impl ModelArgs {
    fn config(&self) -> PEvalConfig {
        let mut cfg = PEvalConfig::new(self.alpha, self.beta, self.outer);
        if let Some(n) = self.inner_mc {
            cfg.inner = InnerMode::Mc { inner_samples: n };
        }
        cfg
    }
}

#[derive(Args, Serialize)]
struct ParisiEvalArgs {
    /// Family name with parameters (`rs_tilt:0.3`) or a sigma grid JSON file.
    #[arg(long)]
    sigma: String,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
}

#[derive(Args, Serialize)]
struct FamilyArgs {
    #[arg(long, default_value = "rs_field")]
    family: String,
    /// Box bounds `lo:hi,lo:hi,...` (default [-3, 3] per parameter).
    #[arg(long)]
    bounds: Option<String>,
    /// Functional evaluations.
    #[arg(long, default_value_t = 40)]
    budget: usize,
}

impl FamilyArgs {
    fn parse(&self) -> exlab::Result<(Family, Vec<(f64, f64)>)> {
        let family = Family::parse(&self.family)?;
        let bounds = match &self.bounds {
            None => family.default_bounds(),
            Some(s) => s
                .split(',')
                .map(|b| {
                    let (lo, hi) = b
                        .split_once(':')
                        .ok_or_else(|| Error::Validation(format!("bound '{b}' is not lo:hi")))?;
                    Ok((parse_f64(lo)?, parse_f64(hi)?))
                })
                .collect::<exlab::Result<_>>()?,
        };
        Ok((family, bounds))
    }
}

#[derive(Args, Serialize)]
struct ParisiMinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Comma-separated system sizes.
    #[arg(long, default_value = "12,16,20")]
    n: String,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
}

#[derive(Args, Serialize)]
struct CascadeArgs {
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Comma-separated, strictly increasing parameters in (0, 1).
    #[arg(long)]
    m: String,
    /// Poisson points kept per node (the branching factor).
    #[arg(long, default_value_t = 64)]
    trunc: usize,
}

fn parse_f64(s: &str) -> exlab::Result<f64> {
    s.trim().parse().map_err(|e| Error::Validation(format!("'{s}': {e}")))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> exlab::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| Error::Validation(format!("'{x}': {e}"))))
        .collect()
}

struct Outcome {
    result: Value,
    csv: Option<String>,
    pass: bool,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Self { result, csv: None, pass: true }
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn slice_json(s: &ArraySlice) -> Value {
    Value::Array(
        s.values
            .iter()
            .map(|(k, v)| json!({ "subset": k.elements(), "value": v }))
            .collect(),
    )
}

fn array_model(model: ArrayModel, p: f64) -> exlab::Result<TheoremADirecting> {
    Ok(match model {
        ArrayModel::Iid => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("p = {p} outside [0, 1]")));
            }
            builtins::iid_bernoulli(p)
        }
        ArrayModel::Erpm => builtins::erpm(erpm_kernel()?)?,
        ArrayModel::Bipartition => builtins::bipartition(),
        ArrayModel::Constant => builtins::constant(1, 1.0),
    })
}

/// Spin kernel with mean `2t - 1` on 16 cells.
fn erpm_kernel() -> exlab::Result<Kernel> {
    Kernel::spin_from_mean_fn(4, |t| 2.0 * t - 1.0)
}

fn erm_sample(a: &ErmSampleArgs, seed: u64) -> exlab::Result<Outcome> {
    if a.n == 0 {
        return Err(Error::Validation("n must be at least 1".into()));
    }
    let d = array_model(a.model, a.p)?;
    let slices = if a.replicas == 0 {
        vec![sample_slice(&d, a.n, &SeedContext::new(seed, "erm-sample"))?]
    } else {
        let q = quench(&d, a.n, seed);
        draw_replicas(&q, a.replicas, &SeedContext::new(seed, "erm-replicas"))?
    };
    let mut csv = format!("replica,{}\n", slices[0].csv_header());
    for (l, s) in slices.iter().enumerate() {
        csv.push_str(&format!("{l},{}\n", s.csv_row()));
    }
    let result = json!({
        "n": a.n,
        "k": slices[0].k,
        "replicas": slices.iter().map(slice_json).collect::<Vec<_>>(),
    });
    Ok(Outcome { result, csv: Some(csv), pass: true })
}

fn exch_test(a: &ExchTestArgs, seed: u64) -> exlab::Result<Outcome> {
    let swap: Vec<u32> = parse_list(&a.swap)?;
    if swap.len() != 2 {
        return Err(Error::Validation("swap takes two positions a,b".into()));
    }
    let pi = Permutation::transposition(swap[0], swap[1])?;
    if pi.support_max() > a.n {
        return Err(Error::Validation(format!("swap {:?} outside [1, {}]", swap, a.n)));
    }
    let ctx = SeedContext::new(seed, "exch-test");
    let cells = |r: usize| -> Vec<CylinderKey> {
        (0..r).flat_map(|l| (1..=a.n).map(move |i| CylinderKey::cell(l, i))).collect()
    };
    const LIMIT: usize = 64;
    let report: TestReport = match a.sampler {
        TestSampler::Iid => {
            let cyl = standard_cylinders(&cells(1), &[0.0, 1.0], LIMIT);
            permutation_invariance_test(samplers::iid_coins(a.n), &pi, &cyl, a.samples, &ctx)?
        }
        TestSampler::Biased => {
            if !(0.0..=1.0).contains(&a.p) {
                return Err(Error::Validation(format!("p = {} outside [0, 1]", a.p)));
            }
            let cyl = standard_cylinders(&cells(1), &[0.0, 1.0], LIMIT);
            permutation_invariance_test(samplers::biased_first(a.n, a.p), &pi, &cyl, a.samples, &ctx)?
        }
        TestSampler::Erpm => {
            let d = builtins::erpm(erpm_kernel()?)?;
            let cyl = standard_cylinders(&cells(2), &[-1.0, 1.0], LIMIT);
            permutation_invariance_test(samplers::erm_replicas(d, a.n, 2), &pi, &cyl, a.samples, &ctx)?
        }
        TestSampler::Bipartition => {
            let keys: Vec<CylinderKey> = SubsetKey::all_up_to(a.n, 2)
                .into_iter()
                .filter(|e| e.len() == 2)
                .map(CylinderKey::Subset)
                .collect();
            let cyl = standard_cylinders(&keys, &[0.0, 1.0], LIMIT);
            permutation_invariance_test(samplers::array(builtins::bipartition(), a.n), &pi, &cyl, a.samples, &ctx)?
        }
        TestSampler::Vb => {
            if a.n > 12 {
                return Err(Error::Validation("the vb sampler supports n <= 12".into()));
            }
            let cyl = standard_cylinders(&cells(2), &[-1.0, 1.0], LIMIT);
            let s = samplers::vb_replicas(a.n as usize, 1.0, 1.0, 2);
            permutation_invariance_test(s, &pi, &cyl, a.samples, &ctx)?
        }
    };
    let mut csv = String::from("cylinder,freq_a,freq_b,z,degenerate\n");
    for (i, c) in report.cylinders.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}\n", c.freq_a, c.freq_b, c.z, c.degenerate));
    }
    let pass = report.pass;
    let mut result = to_value(&report);
    result["max_abs_z"] = json!(report.max_abs_z());
    Ok(Outcome { result, csv: Some(csv), pass })
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> exlab::Result<T> {
    let text = std::fs::read_to_string(p)?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))
}

fn ds(a: &DsArgs, seed: u64) -> exlab::Result<Outcome> {
    let d: DsDecomposition = match (&a.kernels, &a.decomposition) {
        (Some(k), None) => {
            let ks: Vec<Kernel> = read_json(k)?;
            let ks = ks
                .into_iter()
                .map(|k| Kernel::new(k.alphabet, k.grid_depth, k.table))
                .collect::<exlab::Result<Vec<_>>>()?;
            decompose_from_kernels(&ks)?
        }
        (None, Some(p)) => {
            let d: DsDecomposition = read_json(p)?;
            DsDecomposition::new(d.grid_depth, d.xi, d.a)?
        }
        _ => return Err(Error::Validation("give exactly one of --kernels or --decomposition".into())),
    };
    let gram = reconstruct(&d);
    let mut result = json!({ "decomposition": d, "gram": gram });
    let mut csv = String::new();
    for i in 0..gram.n {
        let row: Vec<String> = (0..gram.n).map(|j| gram.get(i, j).to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    if a.samples > 0 {
        if a.samples < 2 {
            return Err(Error::Validation("at least two samples are required".into()));
        }
        let s = gaussian_sampler(&gram, &SeedContext::new(seed, "ds-gaussian"))?;
        let est = estimate_gram(&s.sample_many(a.samples))?;
        result["samples"] = json!(a.samples);
        result["max_abs_error"] = json!(est.max_abs_diff(&gram));
        result["estimate"] = to_value(&est);
    }
    Ok(Outcome { result, csv: Some(csv), pass: true })
}

fn vb_fn(a: &VbFnArgs, seed: u64) -> exlab::Result<Outcome> {
    let est = free_energy_mc(a.n, a.alpha, a.beta, a.instances, &CouplingLaw::Pm1, &SeedContext::new(seed, "vb-fn"))?;
    let mut csv = String::from("instance,log_z,specific\n");
    for (i, z) in est.per_instance_log_z.iter().enumerate() {
        csv.push_str(&format!("{i},{z},{}\n", z / a.n as f64));
    }
    Ok(Outcome { result: to_value(&est), csv: Some(csv), pass: true })
}

fn parse_sigma(s: &str) -> exlab::Result<SigmaFunction> {
    let p = Path::new(s);
    if s.ends_with(".json") || p.is_file() {
        let g: SigmaGrid = read_json(p)?;
        return Ok(SigmaFunction::Grid(g.validated()?));
    }
    Ok(SigmaFunction::Named(NamedSigma::parse(s)?))
}

fn parisi_eval(a: &ParisiEvalArgs, seed: u64) -> exlab::Result<Outcome> {
    let sigma = parse_sigma(&a.sigma)?;
    let est = evaluate_p(&sigma, &a.model.config(), &SeedContext::new(seed, "parisi-eval"))?;
    Ok(Outcome::ok(to_value(&est)))
}

fn parisi_min(a: &ParisiMinArgs, seed: u64) -> exlab::Result<Outcome> {
    let (family, bounds) = a.family.parse()?;
    let r = minimize_p(family, &bounds, &a.model.config(), a.family.budget, &SeedContext::new(seed, "parisi-min"))?;
    let mut csv = String::from("evaluation,incumbent\n");
    for (i, v) in r.incumbent_trace.iter().enumerate() {
        csv.push_str(&format!("{},{v}\n", i + 1));
    }
    Ok(Outcome { result: to_value(&r), csv: Some(csv), pass: true })
}

fn compare(a: &CompareArgs, seed: u64) -> exlab::Result<Outcome> {
    let ns: Vec<usize> = parse_list(&a.n)?;
    let (family, bounds) = a.family.parse()?;
    let r = compare_to_finite_n(
        &ns,
        a.instances,
        family,
        &bounds,
        &a.model.config(),
        a.family.budget,
        &SeedContext::new(seed, "compare"),
    )?;
    let mut csv = String::from("n,f_hat,f_se,gap,gap_se\n");
    for row in &r.rows {
        csv.push_str(&format!("{},{},{},{},{}\n", row.n, row.f_hat, row.f_se, row.gap, row.gap_se));
    }
    Ok(Outcome { result: to_value(&r), csv: Some(csv), pass: true })
}

fn cascade(a: &CascadeArgs, seed: u64) -> exlab::Result<Outcome> {
    let m: Vec<f64> = parse_list(&a.m)?;
    if a.depth == 0 || m.len() != a.depth {
        return Err(Error::Validation(format!("--m must list {} parameters", a.depth.max(1))));
    }
    if a.depth > 3 {
        return Err(Error::Validation("depth is limited to 3".into()));
    }
    let tree = TreeSpec::uniform(a.depth, a.trunc)?;
    let c = sample_cascade(&tree, &m, &SeedContext::new(seed, "cascade"))?;
    let mut sorted = c.leaf_weights.clone();
    sorted.sort_by(|x, y| y.total_cmp(x));
    sorted.truncate(16);
    let mut csv = String::from("leaf,weight\n");
    for (i, w) in c.leaf_weights.iter().enumerate() {
        csv.push_str(&format!("{i},{w}\n"));
    }
    let result = json!({
        "tree": c.tree,
        "m": c.m,
        "leaves": c.leaf_weights.len(),
        "sum": c.leaf_weights.iter().sum::<f64>(),
        "sum_of_squares": c.leaf_weights.iter().map(|w| w * w).sum::<f64>(),
        "largest": sorted,
    });
    Ok(Outcome { result, csv: Some(csv), pass: true })
}

fn run(cli: &Cli) -> exlab::Result<(String, Value, Outcome)> {
    let seed = cli.seed;
    let (name, args, outcome) = match &cli.command {
        Command::ErmSample(a) => ("erm-sample", to_value(a), erm_sample(a, seed)?),
        Command::ExchTest(a) => ("exch-test", to_value(a), exch_test(a, seed)?),
        Command::Ds(a) => ("ds", to_value(a), ds(a, seed)?),
        Command::VbFn(a) => ("vb-fn", to_value(a), vb_fn(a, seed)?),
        Command::ParisiEval(a) => ("parisi-eval", to_value(a), parisi_eval(a, seed)?),
        Command::ParisiMin(a) => ("parisi-min", to_value(a), parisi_min(a, seed)?),
        Command::Compare(a) => ("compare", to_value(a), compare(a, seed)?),
        Command::Cascade(a) => ("cascade", to_value(a), cascade(a, seed)?),
    };
    let mut config = match args {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    config.insert("seed".into(), json!(seed));
    Ok((name.to_string(), Value::Object(config), outcome))
}

fn write_out(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let (name, config, outcome) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let doc = json!({
        "tool": "exlab",
        "version": VERSION,
        "command": name,
        "config": config,
        "pass": outcome.pass,
        "result": outcome.result,
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    if let Err(e) = write_out(cli.out.as_deref(), &text) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if let (Some(p), Some(csv)) = (&cli.csv, &outcome.csv) {
        if let Err(e) = std::fs::write(p, csv) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
