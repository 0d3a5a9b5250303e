use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use randset::classify::{SmoothingKernel, WardOptions};
use randset::experiment::{self, run_method, stratified_split, ExperimentPlan, Method, MethodParams};
use randset::features::{extract_features_with, load_features, save_features, ExtractOptions};
use randset::ndistance::{pairwise_matrix, ComponentCount, DistanceMatrix, FeatureMode, SamplingPolicy};
use randset::raster::{parse_pbm, write_pbm, PbmVariant};
use randset::sim::{realise, ModelSpec};
use randset::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "randset", version, about = "Classify binary random-set realisations by component shape")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate realisations of a model spec and write them as PBM files.
    Simulate(SimulateArgs),
    /// Extract per-component features from PBM files.
    Features(FeaturesArgs),
    /// Compute the pairwise N-distance matrix of a feature file.
    Dist(DistArgs),
    /// Classify or cluster realisations from a distance matrix.
    Classify(ClassifyArgs),
    /// Run a full experiment grid from a plan file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, short)]
    n: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class name for file names; defaults to the spec's name or file stem.
    #[arg(long)]
    class: Option<String>,
    /// Write plain (P1) instead of raw (P4) PBM.
    #[arg(long)]
    plain: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Directory of .pbm files.
    #[arg(long, conflicts_with = "files")]
    in_dir: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    files: Vec<PathBuf>,
    #[arg(long)]
    r: u32,
    #[arg(long)]
    out: PathBuf,
    /// Class label for every input; otherwise taken from `<class>_<index>` file names.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    drop_border_components: bool,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long)]
    features: PathBuf,
    /// ratio, curvature, both or combined:<alpha>
    #[arg(long, default_value = "both")]
    mode: String,
    /// 10, 20, ... or all
    #[arg(long, default_value = "all")]
    count: String,
    #[arg(long, default_value_t = randset::ndistance::DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// CSV of `id,label` rows.
    #[arg(long, required_unless_present = "features")]
    labels: Option<PathBuf>,
    /// Take labels from a feature file instead.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value = "knn")]
    method: String,
    /// Cluster count; defaults to the number of distinct labels.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform")]
    kernel: String,
    #[arg(long, default_value_t = 0.75)]
    split_ratio: f64,
    #[arg(long)]
    paper_literal_first_merge: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the plan's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    paper_literal_first_merge: bool,
    #[arg(long)]
    drop_border_components: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("RANDSET_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Features(a) => features(a),
        Command::Dist(a) => dist(a),
        Command::Classify(a) => classify(a),
        Command::Experiment(a) => run_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = ModelSpec::load(&a.spec)?;
    let class = a
        .class
        .or_else(|| spec.name.clone())
        .or_else(|| a.spec.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "model".into());
    std::fs::create_dir_all(&a.out_dir)?;
    let variant = if a.plain { PbmVariant::Plain } else { PbmVariant::Raw };
    (0..a.n).into_par_iter().try_for_each(|i| {
        let raster = realise(&spec, seed::derive(a.seed, &[i as u64]))?;
        std::fs::write(a.out_dir.join(format!("{class}_{i}.pbm")), write_pbm(&raster, variant))?;
        Ok::<_, Error>(())
    })
}

/// `B_0012` → `B`.
fn label_from_stem(stem: &str) -> Option<String> {
    let (class, index) = stem.rsplit_once('_')?;
    (!class.is_empty() && index.chars().all(|c| c.is_ascii_digit())).then(|| class.to_owned())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let mut files = a.files.clone();
    if let Some(dir) = &a.in_dir {
        for entry in std::fs::read_dir(dir)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pbm")) {
                files.push(p);
            }
        }
        files.sort();
    }
    if files.is_empty() {
        return Err(Error::InvalidArgument("no input files".into()));
    }
    let opts = ExtractOptions { drop_border_components: a.drop_border_components };
    let fs = files
        .par_iter()
        .map(|f| {
            let stem = f.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let label = a.label.clone().or_else(|| label_from_stem(&stem));
            std::fs::read(f)
                .map_err(Error::from)
                .and_then(|bytes| parse_pbm(&bytes))
                .and_then(|raster| extract_features_with(&raster, a.r, &stem, label.as_deref(), opts))
                .map_err(|e| Error::Format(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    save_features(&a.out, &fs)
}

fn dist(a: DistArgs) -> Result<()> {
    let fs = load_features(&a.features)?;
    let mode = a.mode.parse::<FeatureMode>()?.with_depth(a.depth);
    let count: ComponentCount = a.count.parse()?;
    let m = pairwise_matrix(&fs, mode, SamplingPolicy { count, seed: a.seed })?;
    m.write(&a.out)
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in std::fs::read_to_string(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "id,label") {
            continue;
        }
        let (id, label) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Format(format!("{}:{}: expected id,label", path.display(), i + 1)))?;
        map.insert(id.to_owned(), label.to_owned());
    }
    Ok(map)
}

#[derive(Serialize)]
struct Item {
    id: String,
    truth: String,
    pred: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ClassifyReport {
    method: Method,
    params: serde_json::Value,
    seed: u64,
    classes: Vec<String>,
    per_item: Vec<Item>,
    misclassification_fixed: f64,
    misclassification_best_perm: f64,
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let matrix = DistanceMatrix::read(&a.matrix)?;
    let by_id: BTreeMap<String, String> = match (&a.labels, &a.features) {
        (Some(p), _) => read_labels(p)?,
        (None, Some(f)) => load_features(f)?
            .into_iter()
            .filter_map(|r| r.class_label.map(|l| (r.source_id, l)))
            .collect(),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let names: Vec<String> = matrix
        .ids()
        .iter()
        .map(|id| by_id.get(id).cloned().ok_or_else(|| Error::Format(format!("no label for '{id}'"))))
        .collect::<Result<_>>()?;
    let mut classes = names.clone();
    classes.sort();
    classes.dedup();
    let labels: Vec<usize> = names.iter().map(|n| classes.binary_search(n).expect("known")).collect();

    let method: Method = a.method.parse()?;
    let kernel: SmoothingKernel = a.kernel.parse()?;
    let k = a.k.unwrap_or(classes.len());
    let split = stratified_split(&labels, a.split_ratio, a.seed);
    let params = MethodParams {
        n_classes: k,
        seed: a.seed,
        kernel,
        ward: WardOptions { paper_literal_first_merge: a.paper_literal_first_merge },
    };
    let res = run_method(method, &matrix, &labels, &split, &params)?;
    let name_of = |c: usize| classes.get(c).cloned().unwrap_or_else(|| format!("cluster{c}"));
    let per_item = res
        .items
        .iter()
        .enumerate()
        .map(|(n, &i)| Item {
            id: matrix.ids()[i].clone(),
            truth: name_of(labels[i]),
            pred: name_of(res.pred[n]),
            posterior: res.posteriors.as_ref().map(|p| p[n].probs.clone()),
        })
        .collect();
    let report = ClassifyReport {
        method,
        params: serde_json::json!({
            "k": k,
            "kernel": kernel,
            "split_ratio": a.split_ratio,
            "knn_m": res.knn_m,
            "paper_literal_first_merge": a.paper_literal_first_merge,
            "matrix": matrix.meta(),
        }),
        seed: a.seed,
        classes,
        per_item,
        misclassification_fixed: res.misclassification_fixed,
        misclassification_best_perm: res.misclassification_best_perm,
    };
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}

fn run_experiment(a: ExperimentArgs) -> Result<()> {
    let mut plan = ExperimentPlan::load(&a.plan)?;
    if let Some(s) = a.seed {
        plan.master_seed = s;
    }
    if let Some(r) = a.r {
        plan.r = r;
    }
    if let Some(d) = a.depth {
        plan.depth = d;
    }
    if let Some(k) = &a.kernel {
        plan.kernel = k.parse()?;
    }
    plan.paper_literal_first_merge |= a.paper_literal_first_merge;
    plan.drop_border_components |= a.drop_border_components;
    plan.validate()?;

    let (report, failure) = experiment::run_experiment_partial(&plan)?;
    experiment::write_report(&report, &a.out_dir)?;
    match failure {
        Some(e) => Err(e),
        None => {
            eprintln!(
                "{} cells in {:.1}s; results in {}",
                report.cells.len(),
                report.timing.total_s,
                a.out_dir.display()
            );
            Ok(())
        }
    }
}
