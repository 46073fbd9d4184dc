use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use codasep::bootstrap::{bootstrap_s, bootstrap_s_reimputed, BootstrapConfig, KPolicy};
use codasep::datamodel::{
    class_count_map, read_count_table, read_metadata, write_count_table, write_matrix, write_metadata, CountTable,
    CovariateMatrix, Dataset, Labels,
};
use codasep::enet::{cv_select_lambda, fit_enet_logistic, support_ids, EnetConfig};
use codasep::preprocess::{clr_transform, filter_rare, impute_zeros, ImputationWarning};
use codasep::screening::{screen, ScreeningConfig};
use codasep::simdata::{simulate, SimSpec};
use codasep::{par, Error, VarianceMethod};

/// Pairwise log-ratio screening of compositional count tables
#[derive(Debug, Parser)]
#[command(name = "codasep", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter rare features, replace zeros and write the composition and clr matrix
    Preprocess(PreprocessArgs),
    /// Score all feature pairs and report the separability index
    Screen(ScreenArgs),
    /// Bootstrap the separability index
    Bootstrap(BootstrapArgs),
    /// Fit an elastic-net log-contrast path on all pairwise log-ratios
    Enet(EnetArgs),
    /// Generate a synthetic count table with planted signal
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
struct PreprocessOpts {
    /// Features need at least this many non-zero samples
    #[arg(long, default_value_t = 3)]
    min_nonzero: usize,
    /// Per-feature Dirichlet prior strength for zero replacement
    #[arg(long, default_value_t = 0.5)]
    prior_strength: f64,
    /// Seed for every random stage
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct InputArgs {
    /// Samples x features count table (csv or tsv, sample ids in the first column)
    #[arg(long)]
    counts: PathBuf,
    /// Metadata table keyed by sample id
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long, default_value = "group")]
    label_column: String,
    /// Comma-separated covariate columns
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[command(flatten)]
    pre: PreprocessOpts,
    /// Worker threads (0 = all cores)
    #[arg(long, env = "CODASEP_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args, Serialize)]
struct PreprocessArgs {
    #[arg(long)]
    counts: PathBuf,
    #[command(flatten)]
    pre: PreprocessOpts,
    /// Directory for composition.csv, clr.csv and preprocess.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum VarianceArg {
    Hanley,
    Delong,
}

impl From<VarianceArg> for VarianceMethod {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::Hanley => VarianceMethod::Hanley,
            VarianceArg::Delong => VarianceMethod::Delong,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ScreeningOpts {
    #[arg(long, value_enum, default_value_t = VarianceArg::Hanley)]
    variance: VarianceArg,
    /// Correlation between AUCs of pairs sharing a feature
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
}

#[derive(Debug, Args, Serialize)]
struct ScreenArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    screening: ScreeningOpts,
    #[arg(long)]
    out: PathBuf,
    /// Also write the pairwise AUC matrix
    #[arg(long)]
    auc_matrix: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    screening: ScreeningOpts,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    /// Resample within each class
    #[arg(long, overrides_with = "no_stratified", default_value_t = true)]
    stratified: bool,
    #[arg(long)]
    no_stratified: bool,
    /// `auto` reads every replicate at the original k*, an integer fixes k
    #[arg(long, default_value = "auto")]
    k: String,
    /// Re-maximize S_k inside every replicate
    #[arg(long, conflicts_with = "k")]
    reselect_k: bool,
    /// Resample raw counts and redo zero replacement per replicate
    #[arg(long)]
    reimpute: bool,
    /// Estimate rho from the replicates
    #[arg(long)]
    estimate_rho: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EnetArgs {
    #[command(flatten)]
    input: InputArgs,
    /// L1 share of the penalty
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
    /// Cross-validation folds (0 disables)
    #[arg(long, default_value_t = 0)]
    cv_folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Samples per class, comma-separated
    #[arg(long, value_delimiter = ',', default_value = "100,100")]
    n_per_class: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    features: usize,
    /// 0-based indices of the planted features
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    signal: Vec<usize>,
    #[arg(long, default_value_t = 1.5)]
    effect_size: f64,
    /// Strength of a class-correlated confounder acting on the first signal feature
    #[arg(long)]
    confounding: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 5000)]
    depth: u64,
    #[arg(long, default_value_t = 0.05)]
    zero_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for counts.csv, metadata.csv and truth.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, F: Serialize> {
    command: &'static str,
    argv: Vec<String>,
    flags: &'a F,
    input_sha256: BTreeMap<String, String>,
    outputs: Vec<String>,
    version: &'static str,
    wall_time_seconds: f64,
    workers: usize,
    seed: u64,
}

struct Run {
    started: Instant,
    argv: Vec<String>,
}

/// What one subcommand read, wrote and ran with.
struct Record<'a> {
    command: &'static str,
    inputs: &'a [&'a Path],
    outputs: &'a [&'a Path],
    manifest: &'a Path,
    workers: usize,
    seed: u64,
}

impl Run {
    fn finish<F: Serialize>(&self, flags: &F, rec: Record<'_>) -> anyhow::Result<()> {
        let Record {
            command,
            inputs,
            outputs,
            manifest,
            workers,
            seed,
        } = rec;
        let input_sha256 = inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
            .collect::<anyhow::Result<_>>()?;
        let m = RunManifest {
            command,
            argv: self.argv.clone(),
            flags,
            input_sha256,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            workers: resolved(workers),
            seed,
        };
        write_json(manifest, &m)
    }
}

fn resolved(workers: usize) -> usize {
    if workers == 0 {
        par::default_workers()
    } else {
        workers
    }
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

#[derive(Debug, Serialize)]
struct PreprocessSummary {
    n_samples: usize,
    n_features_in: usize,
    n_features_kept: usize,
    removed_features: Vec<String>,
    imputation_warnings: Vec<ImputationWarning>,
}

struct Loaded {
    kept: CountTable,
    labels: Labels,
    covariates: CovariateMatrix,
    dataset: Dataset,
    summary: PreprocessSummary,
}

fn load(input: &InputArgs) -> anyhow::Result<Loaded> {
    let table = read_count_table(&input.counts, None)?;
    let (labels, covariates) = read_metadata(
        &input.metadata,
        table.sample_ids(),
        &input.label_column,
        &input.covariates,
        None,
    )?;
    let (kept, removed) = filter_rare(&table, input.pre.min_nonzero)?;
    let imputed = impute_zeros(&kept, input.pre.prior_strength, input.pre.seed)?;
    info!(
        "{} samples, {} of {} features kept, classes {:?}",
        table.n_samples(),
        kept.n_features(),
        table.n_features(),
        class_count_map(&labels)
    );
    let dataset = Dataset::new(imputed.composition, labels.clone(), covariates.clone())?;
    Ok(Loaded {
        summary: PreprocessSummary {
            n_samples: table.n_samples(),
            n_features_in: table.n_features(),
            n_features_kept: kept.n_features(),
            removed_features: removed,
            imputation_warnings: imputed.warnings,
        },
        kept,
        labels,
        covariates,
        dataset,
    })
}

fn screening_config(input: &InputArgs, opts: &ScreeningOpts) -> ScreeningConfig {
    ScreeningConfig {
        rho_otu: opts.rho,
        variance_method: opts.variance.into(),
        workers: input.workers,
        seed: input.pre.seed,
        covariates_included: !input.covariates.is_empty(),
        ..ScreeningConfig::default()
    }
}

fn run_preprocess(run: &Run, args: &PreprocessArgs) -> anyhow::Result<()> {
    let table = read_count_table(&args.counts, None)?;
    let (kept, removed) = filter_rare(&table, args.pre.min_nonzero)?;
    let imputed = impute_zeros(&kept, args.pre.prior_strength, args.pre.seed)?;
    let comp = &imputed.composition;
    let clr = clr_transform(comp);

    create_dir(&args.out_dir)?;
    let comp_path = args.out_dir.join("composition.csv");
    let clr_path = args.out_dir.join("clr.csv");
    let json_path = args.out_dir.join("preprocess.json");
    write_matrix(
        &comp_path,
        "sample_id",
        comp.sample_ids(),
        comp.feature_ids(),
        comp.values(),
        b',',
    )?;
    write_matrix(
        &clr_path,
        "sample_id",
        comp.sample_ids(),
        comp.feature_ids(),
        &clr.values,
        b',',
    )?;
    write_json(
        &json_path,
        &PreprocessSummary {
            n_samples: table.n_samples(),
            n_features_in: table.n_features(),
            n_features_kept: kept.n_features(),
            removed_features: removed,
            imputation_warnings: imputed.warnings,
        },
    )?;
    run.finish(
        args,
        Record {
            command: "preprocess",
            inputs: &[&args.counts],
            outputs: &[&comp_path, &clr_path, &json_path],
            manifest: &args.out_dir.join("manifest.json"),
            workers: 1,
            seed: args.pre.seed,
        },
    )
}

#[derive(Serialize)]
struct ScreenOutput<'a> {
    #[serde(flatten)]
    report: &'a codasep::SeparabilityReport,
    class_counts: BTreeMap<String, usize>,
    covariates: &'a [String],
    preprocessing: &'a PreprocessSummary,
}

fn run_screen(run: &Run, args: &ScreenArgs) -> anyhow::Result<()> {
    let loaded = load(&args.input)?;
    let cfg = screening_config(&args.input, &args.screening);
    let (matrix, report) = screen(&loaded.dataset, &cfg)?;
    info!("k* = {}, S = {:.4}", report.k_star, report.s);
    write_json(
        &args.out,
        &ScreenOutput {
            report: &report,
            class_counts: class_count_map(&loaded.labels),
            covariates: loaded.covariates.names(),
            preprocessing: &loaded.summary,
        },
    )?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(path) = &args.auc_matrix {
        write_matrix(
            path,
            "feature_id",
            &matrix.feature_ids,
            &matrix.feature_ids,
            &matrix.values,
            b',',
        )?;
        outputs.push(path);
    }
    run.finish(
        args,
        Record {
            command: "screen",
            inputs: &[&args.input.counts, &args.input.metadata],
            outputs: &outputs,
            manifest: &manifest_path(&args.out),
            workers: args.input.workers,
            seed: args.input.pre.seed,
        },
    )
}

fn k_policy(args: &BootstrapArgs) -> codasep::Result<KPolicy> {
    if args.reselect_k {
        return Ok(KPolicy::Reselect);
    }
    match args.k.as_str() {
        "auto" => Ok(KPolicy::Original),
        raw => match raw.parse::<usize>() {
            Ok(k) if k >= 2 => Ok(KPolicy::Fixed(k)),
            _ => Err(Error::Config(format!(
                "--k expects `auto` or an integer >= 2, got {raw:?}"
            ))),
        },
    }
}

fn run_bootstrap(run: &Run, args: &BootstrapArgs) -> anyhow::Result<()> {
    let bcfg = BootstrapConfig {
        replicates: args.replicates,
        stratified: args.stratified && !args.no_stratified,
        seed: args.input.pre.seed,
        workers: args.input.workers,
        k_policy: k_policy(args)?,
        estimate_rho: args.estimate_rho,
    };
    let loaded = load(&args.input)?;
    let scfg = screening_config(&args.input, &args.screening);
    let result = if args.reimpute {
        bootstrap_s_reimputed(
            &loaded.kept,
            &loaded.labels,
            &loaded.covariates,
            args.input.pre.prior_strength,
            &scfg,
            &bcfg,
        )?
    } else {
        bootstrap_s(&loaded.dataset, &scfg, &bcfg)?
    };
    info!(
        "S = {:.4}, bootstrap var {:.3e}, analytic var {:.3e}",
        result.original_s, result.var_s, result.analytic_var_s
    );
    write_json(&args.out, &result)?;
    run.finish(
        args,
        Record {
            command: "bootstrap",
            inputs: &[&args.input.counts, &args.input.metadata],
            outputs: &[&args.out],
            manifest: &manifest_path(&args.out),
            workers: args.input.workers,
            seed: args.input.pre.seed,
        },
    )
}

#[derive(Serialize)]
struct EnetOutput<'a> {
    #[serde(flatten)]
    path: &'a codasep::enet::EnetPath,
    supports: Vec<Vec<(String, String)>>,
    cv: Option<codasep::enet::CvResult>,
}

fn run_enet(run: &Run, args: &EnetArgs) -> anyhow::Result<()> {
    let cfg = EnetConfig {
        alpha: args.alpha,
        nlambda: args.nlambda,
        lambda_min_ratio: args.lambda_min_ratio,
        cv_folds: args.cv_folds,
        seed: args.input.pre.seed,
        workers: args.input.workers,
        ..EnetConfig::default()
    };
    cfg.validate()?;
    let loaded = load(&args.input)?;
    if !args.input.covariates.is_empty() {
        warn!("covariates are not part of the penalized model and are ignored");
    }
    let path = fit_enet_logistic(&loaded.dataset, &cfg)?;
    let cv = cv_select_lambda(&path, &loaded.dataset, &cfg)?;
    if let Some(cv) = &cv {
        info!("lambda_min = {:.4e}, lambda_1se = {:.4e}", cv.lambda_min, cv.lambda_1se);
    }
    let supports = path.fits.iter().map(|f| support_ids(&path, f)).collect();
    write_json(
        &args.out,
        &EnetOutput {
            path: &path,
            supports,
            cv,
        },
    )?;
    run.finish(
        args,
        Record {
            command: "enet",
            inputs: &[&args.input.counts, &args.input.metadata],
            outputs: &[&args.out],
            manifest: &manifest_path(&args.out),
            workers: args.input.workers,
            seed: args.input.pre.seed,
        },
    )
}

fn run_simulate(run: &Run, args: &SimulateArgs) -> anyhow::Result<()> {
    let spec = SimSpec {
        n_per_class: args.n_per_class.clone(),
        m: args.features,
        signal_features: args.signal.clone(),
        effect_size: args.effect_size,
        covariate_confounding: args.confounding,
        noise_sd: args.noise_sd,
        depth: args.depth,
        zero_rate: args.zero_rate,
        seed: args.seed,
        ..SimSpec::default()
    };
    let sim = simulate(&spec)?;
    create_dir(&args.out_dir)?;
    let counts = args.out_dir.join("counts.csv");
    let metadata = args.out_dir.join("metadata.csv");
    let truth = args.out_dir.join("truth.json");
    write_count_table(&sim.counts, &counts, b',')?;
    write_metadata(
        &metadata,
        sim.counts.sample_ids(),
        "group",
        &sim.labels,
        &sim.covariates,
    )?;
    let truth_ids: Vec<&String> = sim.truth.iter().map(|&j| &sim.counts.feature_ids()[j]).collect();
    write_json(
        &truth,
        &serde_json::json!({ "signal_features": truth_ids, "spec": spec }),
    )?;
    run.finish(
        args,
        Record {
            command: "simulate",
            inputs: &[],
            outputs: &[&counts, &metadata, &truth],
            manifest: &args.out_dir.join("manifest.json"),
            workers: 1,
            seed: args.seed,
        },
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let run = Run {
        started: Instant::now(),
        argv,
    };
    let outcome = match &cli.command {
        Command::Preprocess(a) => run_preprocess(&run, a),
        Command::Screen(a) => run_screen(&run, a),
        Command::Bootstrap(a) => run_bootstrap(&run, a),
        Command::Enet(a) => run_enet(&run, a),
        Command::Simulate(a) => run_simulate(&run, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<Error>() {
                Some(core) => eprintln!("error: {core}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
