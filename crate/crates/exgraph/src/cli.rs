//! The `exgraph` command line.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when a fit finished but some
//! clique optimizer did not converge.

use crate::exec::RayonExecutor;
use crate::io::{self, BatchDoc, PathDoc, ReportDoc, RunInfo, SpecDoc};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use exgraph_core::graphs::{block_decomposition, is_block_graph, UGraph};
use exgraph_core::hr::{
    ci_graph, complete_from_partial, complete_variogram, CliqueBlock, Variogram,
};
use exgraph_core::inference::{
    chi3_empirical, chi3_model, chi_empirical, chi_model_spec, extract_exceedances, fit_graph,
    standardize, ExceedanceSample, FitOptions, FitReport, LoglikMode,
};
use exgraph_core::learn::{forward_select, minimum_spanning_tree, pairwise_weights, select_model};
use exgraph_core::models::{validate_family, FamilyTag, GraphModelSpec};
use exgraph_core::numerics::RngStream;
use exgraph_core::simulate::{sample_pareto_sharded, ExtremalSampler};
use serde::Deserialize;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "exgraph",
    version,
    about = "Sparse graphical models for multivariate extremes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a graph model to data by censored clique likelihoods.
    Fit(FitArgs),
    /// Learn a block graph: spanning tree, forward selection and AIC.
    Learn(LearnArgs),
    /// Draw exact samples from a model.
    Simulate(SimulateArgs),
    /// Empirical and model tail correlations.
    Chi(ChiArgs),
    /// Complete a variogram from clique blocks on a block graph.
    Complete(CompleteArgs),
    /// Check a variogram or model spec.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Hr,
    Logistic,
}

impl From<FamilyArg> for FamilyTag {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Hr => FamilyTag::Hr,
            FamilyArg::Logistic => FamilyTag::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LoglikArg {
    Auto,
    Joint,
    Composite,
}

impl From<LoglikArg> for LoglikMode {
    fn from(m: LoglikArg) -> Self {
        match m {
            LoglikArg::Auto => LoglikMode::Auto,
            LoglikArg::Joint => LoglikMode::Joint,
            LoglikArg::Composite => LoglikMode::Composite,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Random seed; generated and recorded when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observations: CSV with a header row of variable names.
    #[arg(long)]
    pub data: PathBuf,
    /// Block graph as an edge list.
    #[arg(long)]
    pub graph: PathBuf,
    /// Threshold quantile.
    #[arg(long, default_value_t = 0.9)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = FamilyArg::Hr)]
    pub family: FamilyArg,
    #[arg(long, value_enum, default_value_t = LoglikArg::Auto)]
    pub loglik: LoglikArg,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Start forward selection from this tree instead of the minimum spanning tree.
    #[arg(long)]
    pub base_tree: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = FamilyArg::Hr)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 3)]
    pub max_clique: usize,
    #[arg(long, value_enum, default_value_t = LoglikArg::Auto)]
    pub loglik: LoglikArg,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model spec (JSON).
    #[arg(long, conflicts_with = "gamma")]
    pub spec: Option<PathBuf>,
    /// Hüsler–Reiss variogram (CSV) instead of a spec.
    #[arg(long)]
    pub gamma: Option<PathBuf>,
    /// Graph the variogram must factorize on (with `--gamma`).
    #[arg(long, requires = "gamma")]
    pub graph: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ChiArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub q: f64,
    /// Fitted or reference model spec for the model column.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Also tabulate all triples.
    #[arg(long)]
    pub triples: bool,
    /// Monte Carlo draws for model χ of pairs outside a clique in non-HR models.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Clique blocks: JSON list of `{"nodes": [...], "gamma": [[...]]}`.
    #[arg(long, conflicts_with = "gamma")]
    pub blocks: Option<PathBuf>,
    /// Partial variogram CSV with `NA` for unknown entries.
    #[arg(long)]
    pub gamma: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, conflicts_with = "spec")]
    pub gamma: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: at least one clique fit did not converge");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Learn(a) => cmd_learn(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Chi(a) => cmd_chi(&a),
        Command::Complete(a) => cmd_complete(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        let seed = RngStream::new(nanos ^ u64::from(std::process::id()), 0).next_u64();
        eprintln!("generated seed {seed}");
        seed
    })
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        bail!("--q must lie in (0, 1), got {q}");
    }
    Ok(())
}

fn load_sample(data: &Path, q: f64) -> Result<(io::Dataset, ExceedanceSample)> {
    check_q(q)?;
    let dataset = io::read_data(data)?;
    let std = standardize(&dataset.values)
        .with_context(|| format!("standardizing {}", data.display()))?;
    let sample = extract_exceedances(&std, q)?;
    Ok((dataset, sample))
}

fn executor(jobs: Option<usize>) -> Result<RayonExecutor> {
    RayonExecutor::new(jobs).context("cannot start worker threads")
}

fn write_fit(
    out: &Path,
    report: &FitReport,
    run: RunInfo,
    sample: &ExceedanceSample,
) -> Result<()> {
    io::write_json(
        &out.join("report.json"),
        &ReportDoc::new(report, run, sample)?,
    )?;
    io::write_json(&out.join("spec.json"), &SpecDoc::from_spec(&report.spec)?)?;
    io::write_text(
        &out.join("graph.txt"),
        &io::format_edges(report.spec.graph()),
    )?;
    if let Some(g) = &report.gamma {
        io::write_text(&out.join("gamma.csv"), &io::format_matrix(g.matrix(), None))?;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<Outcome> {
    let seed = resolve_seed(a.run.seed);
    let (dataset, sample) = load_sample(&a.data, a.q)?;
    let graph = io::read_edges(&a.graph, Some(dataset.values.cols()))?;
    let opts = FitOptions {
        loglik: a.loglik.into(),
        seed,
        ..FitOptions::default()
    };
    let report = fit_graph(
        &sample,
        &graph,
        a.family.into(),
        &[],
        &executor(a.run.jobs)?,
        &opts,
    )?;
    prepare_out(&a.run.out)?;
    write_fit(
        &a.run.out,
        &report,
        RunInfo::new("fit", seed, Some(a.q)),
        &sample,
    )?;
    println!(
        "{} exceedances, {} parameters, log-likelihood {:.4}, AIC {:.4}",
        sample.len(),
        report.params,
        report.loglik,
        report.aic
    );
    Ok(if report.converged() {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn cmd_learn(a: &LearnArgs) -> Result<Outcome> {
    let seed = resolve_seed(a.run.seed);
    let (dataset, sample) = load_sample(&a.data, a.q)?;
    let d = dataset.values.cols();
    let exec = executor(a.run.jobs)?;
    let family = a.family.into();
    let opts = FitOptions {
        loglik: a.loglik.into(),
        seed,
        ..FitOptions::default()
    };
    let weights = pairwise_weights(&sample, family, &exec, &opts)?;
    let base = match &a.base_tree {
        Some(p) => io::read_edges(p, Some(d))?,
        None => minimum_spanning_tree(&weights),
    };
    let path = forward_select(&sample, &base, family, a.max_clique, &exec, &opts)?;
    let best = select_model(&path)?;
    let run = RunInfo::new("learn", seed, Some(a.q));
    let out = &a.run.out;
    prepare_out(out)?;
    io::write_text(
        &out.join("weights.csv"),
        &io::format_matrix(weights.matrix(), Some(&dataset.names)),
    )?;
    io::write_text(&out.join("base_tree.txt"), &io::format_edges(&base))?;
    io::write_json(&out.join("path.json"), &PathDoc::new(&path, run.clone()))?;
    io::write_text(&out.join("aic.csv"), &io::format_aic_table(&path))?;
    io::write_text(
        &out.join("chosen_edges.txt"),
        &io::format_edges(best.report.spec.graph()),
    )?;
    write_fit(out, &best.report, run, &sample)?;
    println!(
        "{} models from {} to {} edges; AIC minimum {:.4} at {} edges",
        path.steps.len(),
        path.steps[0].edges.len(),
        path.steps.last().map_or(0, |s| s.edges.len()),
        best.report.aic,
        best.edges.len()
    );
    let converged = path.steps.iter().all(|s| s.report.converged());
    Ok(if converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let seed = resolve_seed(a.run.seed);
    let sampler = match (&a.spec, &a.gamma) {
        (Some(p), _) => ExtremalSampler::from_spec(&io::read_spec(p)?)?,
        (None, Some(g)) => {
            let gamma = io::read_variogram(g)?;
            match &a.graph {
                Some(gp) => {
                    let graph = io::read_edges(gp, Some(gamma.dim()))?;
                    ExtremalSampler::from_spec(&factorizing_spec(graph, &gamma)?)?
                }
                None => ExtremalSampler::from_variogram(&gamma)?,
            }
        }
        (None, None) => bail!("simulate needs --spec or --gamma"),
    };
    let batch = sample_pareto_sharded(&sampler, a.n, seed, &executor(a.run.jobs)?);
    prepare_out(&a.run.out)?;
    io::write_text(&a.run.out.join("sample.csv"), &io::format_batch(&batch))?;
    io::write_json(
        &a.run.out.join("sample.json"),
        &BatchDoc::new(&batch, RunInfo::new("simulate", seed, None)),
    )?;
    println!(
        "{} samples, acceptance rate {:.4}",
        a.n,
        batch.acceptance_rate()
    );
    Ok(Outcome::Done)
}

/// HR spec on `graph` whose completion reproduces `gamma`.
fn factorizing_spec(graph: UGraph, gamma: &Variogram) -> Result<GraphModelSpec> {
    if graph.dim() != gamma.dim() {
        bail!(
            "graph has {} nodes but the variogram has dimension {}",
            graph.dim(),
            gamma.dim()
        );
    }
    let spec = GraphModelSpec::hr_from_variogram(graph, gamma)?;
    let completed = spec.completed_variogram()?;
    let scale = gamma.matrix().max_abs().max(1.0);
    if completed.matrix().max_abs_diff(gamma.matrix()) > 1e-9 * scale {
        bail!("the variogram does not factorize on the graph");
    }
    Ok(spec)
}

fn cmd_chi(a: &ChiArgs) -> Result<Outcome> {
    check_q(a.q)?;
    let seed = resolve_seed(a.run.seed);
    let dataset = io::read_data(&a.data)?;
    let d = dataset.values.cols();
    let std = standardize(&dataset.values)?;
    let spec = a.spec.as_deref().map(io::read_spec).transpose()?;
    if let Some(s) = &spec {
        if s.dim() != d {
            bail!("model has {} nodes but the data has {d} columns", s.dim());
        }
    }
    let mut rng = RngStream::new(seed, 0);
    let mut flagged = 0;
    let mut table = String::from("i,j,name_i,name_j,empirical,std_error,joint,flagged,model\n");
    for i in 1..=d {
        for j in (i + 1)..=d {
            let e = chi_empirical(&std, i, j, a.q)?;
            flagged += e.flagged as usize;
            let model = match &spec {
                Some(s) => chi_model_spec(s, i, j, &mut rng, a.draws)?.to_string(),
                None => String::new(),
            };
            writeln!(
                table,
                "{i},{j},{},{},{},{},{},{},{model}",
                dataset.names[i - 1],
                dataset.names[j - 1],
                e.value,
                e.std_error,
                e.joint,
                e.flagged
            )?;
        }
    }
    prepare_out(&a.run.out)?;
    io::write_text(&a.run.out.join("chi.csv"), &table)?;
    if a.triples {
        let gamma = spec
            .as_ref()
            .map(GraphModelSpec::completed_variogram)
            .transpose()?;
        let mut table = String::from("i,j,k,empirical,std_error,joint,flagged,model\n");
        for i in 1..=d {
            for j in (i + 1)..=d {
                for k in (j + 1)..=d {
                    let e = chi3_empirical(&std, i, j, k, a.q)?;
                    flagged += e.flagged as usize;
                    let model = match &gamma {
                        Some(g) => chi3_model(g, i, j, k, &mut rng)?.value.to_string(),
                        None => String::new(),
                    };
                    writeln!(
                        table,
                        "{i},{j},{k},{},{},{},{},{model}",
                        e.value, e.std_error, e.joint, e.flagged
                    )?;
                }
            }
        }
        io::write_text(&a.run.out.join("chi3.csv"), &table)?;
    }
    if flagged > 0 {
        eprintln!("{flagged} estimates rest on fewer than 5 joint exceedances (flagged)");
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Deserialize)]
struct BlockDoc {
    nodes: Vec<usize>,
    gamma: Vec<Vec<f64>>,
}

fn cmd_complete(a: &CompleteArgs) -> Result<Outcome> {
    let gamma = match (&a.blocks, &a.gamma) {
        (Some(p), _) => {
            let docs: Vec<BlockDoc> = io::read_json(p)?;
            let d = docs
                .iter()
                .flat_map(|b| b.nodes.iter().copied())
                .max()
                .unwrap_or(0);
            let graph = io::read_edges(&a.graph, None)?;
            if graph.dim() < d {
                bail!(
                    "blocks mention node {d} but the graph has {} nodes",
                    graph.dim()
                );
            }
            let blocks = docs
                .into_iter()
                .map(|b| {
                    Ok(CliqueBlock {
                        gamma: Variogram::from_rows(&b.gamma)?,
                        nodes: b.nodes,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            complete_variogram(&graph, &blocks)?
        }
        (None, Some(p)) => {
            let partial = io::read_matrix(p, true)?;
            let graph = io::read_edges(&a.graph, Some(partial.rows()))?;
            complete_from_partial(&graph, &partial)?
        }
        (None, None) => bail!("complete needs --blocks or --gamma"),
    };
    let graph = io::read_edges(&a.graph, Some(gamma.dim()))?;
    let params = block_decomposition(&graph, usize::MAX)?.pair_count();
    prepare_out(&a.out)?;
    io::write_text(
        &a.out.join("gamma.csv"),
        &io::format_matrix(gamma.matrix(), None),
    )?;
    println!("{} edges, {} parameters", graph.edge_count(), params);
    Ok(Outcome::Done)
}

fn cmd_validate(a: &ValidateArgs) -> Result<Outcome> {
    match (&a.gamma, &a.spec) {
        (Some(p), _) => {
            let gamma = io::read_variogram(p)?;
            let g = ci_graph(&gamma)?;
            println!("valid variogram of dimension {}", gamma.dim());
            println!("conditional independence graph: {} edges", g.edge_count());
            print!("{}", io::format_edges(&g));
            println!(
                "block graph: {}",
                if is_block_graph(&g, usize::MAX) {
                    "yes"
                } else {
                    "no"
                }
            );
        }
        (None, Some(p)) => {
            let spec = io::read_spec(p)?;
            let mut rng = RngStream::new(resolve_seed(a.seed), 0);
            println!(
                "valid spec: {} nodes, {} cliques, {} parameters",
                spec.dim(),
                spec.cliques().len(),
                spec.param_count()
            );
            for (c, f) in spec.cliques().iter().zip(spec.families()) {
                let diag = validate_family(f, c.len(), &mut rng)?;
                println!(
                    "clique {c:?} ({}): homogeneity error {:.2e}, normalization error {:.2e}",
                    f.tag_name(),
                    diag.homogeneity,
                    diag.normalization
                );
            }
        }
        (None, None) => bail!("validate needs --gamma or --spec"),
    }
    Ok(Outcome::Done)
}
