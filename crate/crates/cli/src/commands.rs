use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use krondpp::learning::{
    fit_joint, fit_krk, fit_picard, random_factor, random_kron_kernel, FitConfig, FitHistory,
    FitMode,
};
use krondpp::linalg::SpdMatrix;
use krondpp::model::log_likelihood;
use krondpp::partition::{default_z, greedy_partition};
use krondpp::sampling::{KronSampler, RngStream};
use krondpp::{KronKernel, Subset, TrainingSet};

use crate::error::{CliError, CliResult};
use crate::io;

/// Attempts per sample before a size window is declared infeasible.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "krondpp", version, about = "Kronecker-structured DPP learning and sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random ground-truth kernel and exact samples from it.
    Synth(SynthArgs),
    /// Fit a kernel to a subsets file.
    Train(TrainArgs),
    /// Draw exact samples from a kernel.
    Sample(SampleArgs),
    /// Print the mean log-likelihood of data under a kernel.
    Eval(EvalArgs),
    /// Per-iteration timings of several learners on the same data.
    Bench(BenchArgs),
    /// Greedy training-set partition with bounded group unions.
    Partition(PartitionArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    #[arg(long)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub min_size: usize,
    /// Defaults to N1·N2.
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplier applied to each ground-truth factor.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub out_kernel: PathBuf,
    #[arg(long)]
    pub out_subsets: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Krk,
    Picard,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Batch,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Random,
    File,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    #[arg(long, value_enum, default_value_t = Algo::Krk)]
    pub algo: Algo,
    #[arg(long, value_enum, default_value_t = Mode::Batch)]
    pub mode: Mode,
    #[arg(long, default_value_t = 1)]
    pub minibatch: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Relative log-likelihood change below which batch fits stop; 0 runs
    /// all iterations.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Init::Random)]
    pub init: Init,
    #[arg(long)]
    pub kernel_in: Option<PathBuf>,
    #[arg(long)]
    pub out_kernel: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchAlgo {
    Picard,
    KrkBatch,
    KrkStochastic,
    Joint,
}

impl BenchAlgo {
    pub fn name(self) -> &'static str {
        match self {
            BenchAlgo::Picard => "picard",
            BenchAlgo::KrkBatch => "krk-batch",
            BenchAlgo::KrkStochastic => "krk-stochastic",
            BenchAlgo::Joint => "joint",
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "picard,krk-batch,krk-stochastic")]
    pub algos: Vec<BenchAlgo>,
    /// Timed iterations per learner, after one untimed warm-up iteration.
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub minibatch: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Ground-set size; inferred from the largest index when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Strict bound on group union size; defaults to max(2κ, κ+1).
    #[arg(long)]
    pub z: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a, stdout),
        Command::Sample(a) => cmd_sample(&a),
        Command::Eval(a) => cmd_eval(&a, stdout),
        Command::Bench(a) => cmd_bench(&a),
        Command::Partition(a) => cmd_partition(&a, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))
}

/// Ground truth `s·XᵀX` factors and `count` exact samples with size in
/// `[min_size, max_size]`, redrawing samples outside the window.
pub fn synthesize(
    n1: usize,
    n2: usize,
    count: usize,
    min_size: usize,
    max_size: usize,
    seed: u64,
    scale: f64,
) -> CliResult<(KronKernel, TrainingSet)> {
    if n1 == 0 || n2 == 0 {
        return Err(CliError::Usage("factor sizes must be positive".into()));
    }
    if min_size == 0 {
        return Err(CliError::Usage("empty subsets cannot be stored; use --min-size >= 1".into()));
    }
    if min_size > max_size || max_size > n1 * n2 {
        return Err(CliError::Usage(format!(
            "size window [{min_size}, {max_size}] is invalid for N = {}",
            n1 * n2
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CliError::Usage(format!("scale must be positive, got {scale}")));
    }
    let mut rng = RngStream::seed_from(seed);
    let mut factor = |n| SpdMatrix::new_unchecked(random_factor(n, &mut rng).as_matrix() * scale);
    let truth = KronKernel::pair(factor(n1), factor(n2));
    let sampler = KronSampler::new(&truth)?;
    let mut subsets = Vec::with_capacity(count);
    for i in 0..count {
        let mut accepted = None;
        for _ in 0..MAX_REJECTIONS {
            let y = sampler.sample(&mut rng)?.subset;
            if (min_size..=max_size).contains(&y.len()) {
                accepted = Some(y);
                break;
            }
        }
        subsets.push(accepted.ok_or_else(|| {
            CliError::Usage(format!(
                "sample {i}: no size in [{min_size}, {max_size}] after {MAX_REJECTIONS} draws"
            ))
        })?);
    }
    let t = TrainingSet::new(n1 * n2, subsets)?;
    Ok((truth, t))
}

fn format_subsets(t: &TrainingSet) -> String {
    let mut out = String::new();
    for y in t.subsets() {
        out.push_str(&io::format_subset(y));
        out.push('\n');
    }
    out
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let max = a.max_size.unwrap_or(a.n1 * a.n2);
    let (truth, t) = synthesize(a.n1, a.n2, a.n_samples, a.min_size, max, a.seed, a.scale)?;
    io::save_kron_kernel(&a.out_kernel, &truth)?;
    io::write_text(&a.out_subsets, &format_subsets(&t))
}

fn load_data(path: &Path, n1: usize, n2: usize) -> CliResult<TrainingSet> {
    let n = n1 * n2;
    if n == 0 {
        return Err(CliError::Usage("factor sizes must be positive".into()));
    }
    let t = io::load_subsets(path, n)?;
    if t.is_empty() {
        return Err(CliError::Usage(format!("{}: no subsets", path.display())));
    }
    Ok(t)
}

fn initial_kernel(a: &TrainArgs) -> CliResult<KronKernel> {
    match a.init {
        Init::Random => Ok(random_kron_kernel(&[a.n1, a.n2], &mut RngStream::seed_from(a.seed))?),
        Init::File => {
            let path = a
                .kernel_in
                .as_ref()
                .ok_or_else(|| CliError::Usage("--init file needs --kernel-in".into()))?;
            let k = io::load_kernel(path)?;
            if k.size() != a.n1 * a.n2 {
                return Err(CliError::Usage(format!(
                    "kernel has {} items, --n1 x --n2 gives {}",
                    k.size(),
                    a.n1 * a.n2
                )));
            }
            Ok(k)
        }
    }
}

fn trace_csv(h: &FitHistory) -> String {
    let mut out = String::from("iter,seconds,loglik\n");
    out.push_str(&format!("0,0,{}\n", h.initial_loglik));
    for r in &h.records {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.seconds, r.loglik));
    }
    out
}

fn cmd_train(a: &TrainArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let t = load_data(&a.data, a.n1, a.n2)?;
    let k0 = initial_kernel(a)?;
    let cfg = FitConfig {
        step_size: a.step,
        max_iter: a.iters,
        mode: match a.mode {
            Mode::Batch => FitMode::Batch,
            Mode::Stochastic => FitMode::Stochastic,
        },
        minibatch_size: a.minibatch,
        tol: a.tol,
        seed: a.seed,
        ..FitConfig::default()
    };
    let history = match a.algo {
        Algo::Krk | Algo::Joint => {
            let fit = if a.algo == Algo::Krk { fit_krk } else { fit_joint };
            let (k, h) = fit(&k0, &t, &cfg)?;
            io::save_kron_kernel(&a.out_kernel, &k)?;
            h
        }
        Algo::Picard => {
            let (l, h) = fit_picard(&k0.materialize(), &t, &cfg)?;
            io::save_kernel(&a.out_kernel, &[l.as_matrix()])?;
            h
        }
    };
    if let Some(trace) = &a.trace {
        io::write_text(trace, &trace_csv(&history))?;
    }
    emit(
        stdout,
        &format!(
            "iterations {}\nconverged {}\nloglik {:.12}\n",
            history.records.len(),
            history.converged,
            history.final_loglik()
        ),
    )
}

fn cmd_sample(a: &SampleArgs) -> CliResult<()> {
    let k = io::load_kernel(&a.kernel)?;
    let sampler = KronSampler::new(&k)?;
    let mut rng = RngStream::seed_from(a.seed);
    let mut out = String::new();
    let mut empty = 0usize;
    for _ in 0..a.count {
        let y: Subset = sampler.sample(&mut rng)?.subset;
        if y.is_empty() {
            empty += 1;
        } else {
            out.push_str(&io::format_subset(&y));
            out.push('\n');
        }
    }
    out.push_str(&format!("# empty_count={empty}\n"));
    io::write_text(&a.out, &out)
}

fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let k = io::load_kernel(&a.kernel)?;
    let t = io::load_subsets(&a.data, k.size())?;
    if t.is_empty() {
        return Err(CliError::Usage(format!("{}: no subsets", a.data.display())));
    }
    let phi = log_likelihood(&k, &t)?;
    emit(stdout, &format!("{phi:.12}\n"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub algo: &'static str,
    pub iter: usize,
    /// Wall-clock seconds of this iteration alone.
    pub seconds: f64,
    pub loglik: f64,
}

/// Runs each learner for `iters + 1` iterations from the same random
/// initialization and drops the first (warm-up) iteration.
pub fn bench_rows(
    t: &TrainingSet,
    n1: usize,
    n2: usize,
    algos: &[BenchAlgo],
    iters: usize,
    seed: u64,
    minibatch: usize,
) -> CliResult<Vec<BenchRow>> {
    let k0 = random_kron_kernel(&[n1, n2], &mut RngStream::seed_from(seed))?;
    let base = FitConfig {
        max_iter: iters + 1,
        tol: 0.0,
        seed,
        minibatch_size: minibatch,
        ..FitConfig::default()
    };
    let stochastic = FitConfig {
        mode: FitMode::Stochastic,
        ..base.clone()
    };
    let mut rows = Vec::new();
    for &algo in algos {
        let h = match algo {
            BenchAlgo::Picard => fit_picard(&k0.materialize(), t, &base)?.1,
            BenchAlgo::KrkBatch => fit_krk(&k0, t, &base)?.1,
            BenchAlgo::KrkStochastic => fit_krk(&k0, t, &stochastic)?.1,
            BenchAlgo::Joint => fit_joint(&k0, t, &base)?.1,
        };
        for w in h.records.windows(2) {
            rows.push(BenchRow {
                algo: algo.name(),
                iter: w[1].iteration - 1,
                seconds: w[1].seconds - w[0].seconds,
                loglik: w[1].loglik,
            });
        }
    }
    Ok(rows)
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    if a.iters == 0 {
        return Err(CliError::Usage("--iters must be positive".into()));
    }
    let t = load_data(&a.data, a.n1, a.n2)?;
    let rows = bench_rows(&t, a.n1, a.n2, &a.algos, a.iters, a.seed, a.minibatch)?;
    let mut out = String::from("algo,iter,seconds,loglik\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.algo, r.iter, r.seconds, r.loglik));
    }
    io::write_text(&a.out, &out)
}

fn cmd_partition(a: &PartitionArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let n = match a.n {
        Some(n) => n,
        None => io::infer_ground_size(&a.data)?,
    };
    let t = io::load_subsets(&a.data, n)?;
    let z = a.z.unwrap_or_else(|| default_z(&t));
    let plan = greedy_partition(&t, z)?;
    let mut text = format!("groups {}\n", plan.len());
    for (g, u) in plan.unions.iter().enumerate() {
        text.push_str(&format!("group {g} union_size {}\n", u.len()));
    }
    if let Some(out) = &a.out {
        io::save_plan(out, &plan)?;
    }
    emit(stdout, &text)
}
