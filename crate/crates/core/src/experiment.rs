//! Experiment grid: simulate or load realisations, extract features, build
//! distance matrices for every (mode, component count, repetition) and run
//! each classification method on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    self, confusion, k_medoids, knn_classify, misclassification, ward_cluster, Alignment, LabeledIndex,
    PosteriorVector, SmoothingKernel, WardOptions,
};
use crate::error::{invalid, Error, Result};
use crate::features::{extract_features_with, ExtractOptions, RealisationFeatures};
use crate::ndistance::{ComponentCount, DistanceMatrix, FeatureMode, PairwiseEngine, SamplingPolicy, DEFAULT_DEPTH};
use crate::raster::{parse_pbm, BinaryRaster};
use crate::seed::derive;
use crate::sim::{realise, ModelSpec};

const KMEDOIDS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Knn,
    Kmedoids,
    Ward,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Knn => "knn",
            Method::Kmedoids => "kmedoids",
            Method::Ward => "ward",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(Method::Knn),
            "kmedoids" => Ok(Method::Kmedoids),
            "ward" => Ok(Method::Ward),
            _ => Err(invalid(format!("unknown method '{s}'"))),
        }
    }
}

/// Where a class's realisations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSource {
    Model(ModelSpec),
    ModelFile(PathBuf),
    /// Directory of `.pbm` files, taken in file-name order.
    PbmDir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub label: String,
    pub source: ClassSource,
}

fn default_split() -> f64 {
    0.75
}
fn default_depth() -> usize {
    DEFAULT_DEPTH
}
fn default_methods() -> Vec<Method> {
    vec![Method::Knn, Method::Kmedoids, Method::Ward]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub classes: Vec<ClassPlan>,
    pub realisations_per_class: usize,
    pub r: u32,
    /// Mode names as accepted by `FeatureMode::from_str`.
    pub modes: Vec<String>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub component_counts: Vec<ComponentCount>,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    pub repetitions: usize,
    pub master_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub kernel: SmoothingKernel,
    #[serde(default)]
    pub paper_literal_first_merge: bool,
    #[serde(default)]
    pub drop_border_components: bool,
}

impl ExperimentPlan {
    /// Reads a plan; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut plan: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut plan.classes {
            match &mut c.source {
                ClassSource::ModelFile(p) | ClassSource::PbmDir(p) if p.is_relative() => *p = base.join(&*p),
                _ => {}
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn feature_modes(&self) -> Result<Vec<FeatureMode>> {
        self.modes.iter().map(|m| Ok(m.parse::<FeatureMode>()?.with_depth(self.depth))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(invalid("an experiment needs at least two classes"));
        }
        if self.classes.len() > 6 {
            return Err(invalid("at most six classes are supported"));
        }
        let mut labels: Vec<&str> = self.classes.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.classes.len() {
            return Err(invalid("class labels must be distinct"));
        }
        if self.modes.is_empty() || self.component_counts.is_empty() || self.methods.is_empty() {
            return Err(invalid("modes, component_counts and methods must be nonempty"));
        }
        self.feature_modes()?;
        if self.repetitions < 1 {
            return Err(invalid("repetitions must be at least 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(invalid(format!("split_ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.methods.contains(&Method::Knn) && self.realisations_per_class < 4 {
            return Err(invalid("the train/test split needs at least 4 realisations per class"));
        }
        if self.realisations_per_class < 1 {
            return Err(invalid("realisations_per_class must be positive"));
        }
        Ok(())
    }
}

/// Training count per class: rounded share, leaving at least one of each side.
pub fn train_size(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Stratified split of item positions; `labels[i]` is item `i`'s class.
pub fn stratified_split(labels: &[usize], ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..k {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let t = train_size(members.len(), ratio);
        train.extend_from_slice(&members[..t]);
        test.extend_from_slice(&members[t..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Prediction of one method on one matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    /// Items that were scored (test items for kNN, everything otherwise).
    pub items: Vec<usize>,
    pub truth: Vec<usize>,
    /// Predicted labels, relabelled by the best permutation for clustering.
    pub pred: Vec<usize>,
    pub misclassification_fixed: f64,
    pub misclassification_best_perm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_m: Option<usize>,
    /// kNN posteriors of the test items.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posteriors: Option<Vec<PosteriorVector>>,
}

/// Settings shared by the methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    /// Cluster count for k-medoids and Ward.
    pub n_classes: usize,
    /// k-medoids initialisation seed.
    pub seed: u64,
    pub kernel: SmoothingKernel,
    pub ward: WardOptions,
}

/// Runs one method on a full matrix. `labels[i]` is the class of row `i`.
pub fn run_method(
    method: Method,
    matrix: &DistanceMatrix,
    labels: &[usize],
    split: &(Vec<usize>, Vec<usize>),
    params: &MethodParams,
) -> Result<MethodResult> {
    let (items, raw_pred, knn_m, posteriors) = match method {
        Method::Knn => {
            let (train_idx, test_idx) = split;
            let train: Vec<LabeledIndex> =
                train_idx.iter().map(|&i| LabeledIndex { index: i, label: labels[i] }).collect();
            let rows: Vec<Vec<f64>> =
                test_idx.iter().map(|&t| train_idx.iter().map(|&i| matrix.get(t, i)).collect()).collect();
            let out = knn_classify(&train, matrix, &rows, params.kernel)?;
            (test_idx.clone(), out.labels, Some(out.m), Some(out.posteriors))
        }
        Method::Kmedoids => {
            let out = k_medoids(matrix, params.n_classes, params.seed, KMEDOIDS_MAX_ITER)?;
            ((0..matrix.n()).collect(), out.assignment, None, None)
        }
        Method::Ward => {
            let out = ward_cluster(matrix, params.n_classes, &params.ward)?;
            ((0..matrix.n()).collect(), out.assignment, None, None)
        }
    };
    let truth: Vec<usize> = items.iter().map(|&i| labels[i]).collect();
    let fixed = misclassification(&raw_pred, &truth, Alignment::Fixed)?;
    let best = misclassification(&raw_pred, &truth, Alignment::BestPermutation)?;
    let pred = match method {
        Method::Knn => raw_pred,
        _ => {
            let perm = classify::best_permutation(&raw_pred, &truth)?;
            raw_pred.iter().map(|&p| perm[p]).collect()
        }
    };
    Ok(MethodResult {
        items,
        truth,
        pred,
        misclassification_fixed: fixed,
        misclassification_best_perm: best,
        knn_m,
        posteriors,
    })
}

impl MethodResult {
    /// Rate reported for the method: fixed labels for kNN, best
    /// permutation for clustering.
    pub fn rate(&self, method: Method) -> f64 {
        match method {
            Method::Knn => self.misclassification_fixed,
            _ => self.misclassification_best_perm,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub method: Method,
    pub mode: String,
    pub count: ComponentCount,
    pub repetition: usize,
    pub misclassification: f64,
    pub confusion: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_m: Option<usize>,
    #[serde(skip)]
    order: (Method, usize, usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct SettingSummary {
    pub method: Method,
    pub mode: String,
    pub count: ComponentCount,
    pub mean_misclassification: f64,
    /// `[truth][pred]`, summed over repetitions.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: String,
    pub master_seed: u64,
    pub class_labels: Vec<String>,
    pub realisation_ids: Vec<String>,
    pub components_per_realisation: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub realise_s: f64,
    pub features_s: f64,
    pub grid_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellResult>,
    pub summary: Vec<SettingSummary>,
    pub timing: Timing,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn mean_rate(&self, method: Method, mode: &str, count: ComponentCount) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.mode == mode && s.count == count)
            .map(|s| s.mean_misclassification)
    }

    /// One row per (method, mode, count, repetition).
    pub fn box_csv(&self) -> String {
        let mut out = String::from("method,mode,count,repetition,misclassification\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{},{}", c.method, c.mode, c.count, c.repetition, c.misclassification);
        }
        out
    }

    /// Per-class correct/incorrect counts summed over repetitions.
    pub fn hist_csv(&self) -> String {
        let mut out = String::from("method,mode,count,class,correct,incorrect\n");
        for s in &self.summary {
            for (c, row) in s.confusion.iter().enumerate() {
                let correct = row[c];
                let incorrect: usize = row.iter().sum::<usize>() - correct;
                let label = &self.provenance.class_labels[c];
                let _ = writeln!(out, "{},{},{},{},{},{}", s.method, s.mode, s.count, label, correct, incorrect);
            }
        }
        out
    }
}

fn pbm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pbm")))
        .collect();
    files.sort();
    Ok(files)
}

struct Realisation {
    id: String,
    label: usize,
    raster: BinaryRaster,
}

fn realisations(plan: &ExperimentPlan) -> Result<Vec<Realisation>> {
    let n = plan.realisations_per_class;
    let mut jobs: Vec<(usize, String, Box<dyn Fn() -> Result<BinaryRaster> + Send + Sync>)> = Vec::new();
    for (ci, class) in plan.classes.iter().enumerate() {
        match &class.source {
            ClassSource::Model(_) | ClassSource::ModelFile(_) => {
                let spec = match &class.source {
                    ClassSource::Model(s) => s.clone(),
                    ClassSource::ModelFile(p) => ModelSpec::load(p)?,
                    ClassSource::PbmDir(_) => unreachable!(),
                };
                spec.validate()?;
                for i in 0..n {
                    let spec = spec.clone();
                    let seed = derive(plan.master_seed, &[1, ci as u64, i as u64]);
                    jobs.push((ci, format!("{}_{i:04}", class.label), Box::new(move || realise(&spec, seed))));
                }
            }
            ClassSource::PbmDir(dir) => {
                let files = pbm_files(dir)?;
                if files.len() < n {
                    return Err(invalid(format!("{} holds {} PBM files, plan needs {n}", dir.display(), files.len())));
                }
                for f in files.into_iter().take(n) {
                    let id = f.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                    jobs.push((ci, id, Box::new(move || parse_pbm(&std::fs::read(&f)?))));
                }
            }
        }
    }
    jobs.into_par_iter()
        .map(|(label, id, make)| Ok(Realisation { raster: make()?, id, label }))
        .collect()
}

/// Seed index for a component count.
fn count_code(c: ComponentCount) -> u64 {
    match c {
        ComponentCount::Fixed(n) => n as u64,
        ComponentCount::All => u64::MAX,
    }
}

/// Runs the whole grid.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<RunReport> {
    let (report, failure) = run_experiment_partial(plan)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Like [`run_experiment`] but returns completed cells alongside the first
/// cell failure, so callers can flush partial results.
pub fn run_experiment_partial(plan: &ExperimentPlan) -> Result<(RunReport, Option<Error>)> {
    plan.validate()?;
    let started = Instant::now();
    let modes = plan.feature_modes()?;
    let n_classes = plan.classes.len();

    let reals = realisations(plan)?;
    let realise_s = started.elapsed().as_secs_f64();

    let opts = ExtractOptions { drop_border_components: plan.drop_border_components };
    let feats: Vec<RealisationFeatures> = reals
        .par_iter()
        .map(|r| {
            let label = &plan.classes[r.label].label;
            extract_features_with(&r.raster, plan.r, &r.id, Some(label), opts)
                .map_err(|e| invalid(format!("realisation {}: {e}", r.id)))
        })
        .collect::<Result<_>>()?;
    let features_s = started.elapsed().as_secs_f64() - realise_s;
    let labels: Vec<usize> = reals.iter().map(|r| r.label).collect();

    let ward = WardOptions { paper_literal_first_merge: plan.paper_literal_first_merge };
    let splits: Vec<_> = (0..plan.repetitions)
        .map(|rep| stratified_split(&labels, plan.split_ratio, derive(plan.master_seed, &[3, rep as u64])))
        .collect();

    let policies: Vec<(ComponentCount, usize, SamplingPolicy)> = plan
        .component_counts
        .iter()
        .flat_map(|&count| {
            (0..plan.repetitions).map(move |rep| {
                let seed = derive(plan.master_seed, &[2, count_code(count), rep as u64]);
                (count, rep, SamplingPolicy { count, seed })
            })
        })
        .collect();

    let mut cells = Vec::new();
    let mut failure = None;
    'modes: for (mi, mode) in modes.iter().enumerate() {
        let engine = PairwiseEngine::new(&feats, *mode)?;
        let matrices = match engine.matrices(&policies.iter().map(|p| p.2).collect::<Vec<_>>()) {
            Ok(m) => m,
            Err(e) => {
                failure = Some(e);
                break 'modes;
            }
        };
        let jobs: Vec<(Method, usize)> = plan
            .methods
            .iter()
            .flat_map(|&m| (0..policies.len()).map(move |p| (m, p)))
            .collect();
        let results: Vec<Result<CellResult>> = jobs
            .par_iter()
            .map(|&(method, p)| {
                let (count, rep, _) = policies[p];
                let ci = plan.component_counts.iter().position(|&c| c == count).expect("planned count");
                let params = MethodParams {
                    n_classes,
                    seed: derive(plan.master_seed, &[4, rep as u64]),
                    kernel: plan.kernel,
                    ward,
                };
                let res = run_method(method, &matrices[p], &labels, &splits[rep], &params)?;
                Ok(CellResult {
                    method,
                    mode: mode.to_string(),
                    count,
                    repetition: rep,
                    misclassification: res.rate(method),
                    confusion: confusion(&res.pred, &res.truth, n_classes),
                    knn_m: res.knn_m,
                    order: (method, mi, ci, rep),
                })
            })
            .collect();
        for r in results {
            match r {
                Ok(c) => cells.push(c),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if failure.is_some() {
            break;
        }
    }

    cells.sort_by_key(|c| c.order);

    let mut groups: BTreeMap<(Method, usize, usize), Vec<&CellResult>> = BTreeMap::new();
    for c in &cells {
        groups.entry((c.order.0, c.order.1, c.order.2)).or_default().push(c);
    }
    let summary = groups
        .values()
        .map(|g| {
            let mut conf = vec![vec![0; n_classes]; n_classes];
            for c in g {
                for (t, row) in c.confusion.iter().enumerate() {
                    for (p, v) in row.iter().enumerate() {
                        conf[t][p] += v;
                    }
                }
            }
            SettingSummary {
                method: g[0].method,
                mode: g[0].mode.clone(),
                count: g[0].count,
                mean_misclassification: g.iter().map(|c| c.misclassification).sum::<f64>() / g.len() as f64,
                confusion: conf,
            }
        })
        .collect();

    let total_s = started.elapsed().as_secs_f64();
    let report = RunReport {
        plan: plan.clone(),
        cells,
        summary,
        timing: Timing { realise_s, features_s, grid_s: total_s - realise_s - features_s, total_s },
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            master_seed: plan.master_seed,
            class_labels: plan.classes.iter().map(|c| c.label.clone()).collect(),
            realisation_ids: feats.iter().map(|f| f.source_id.clone()).collect(),
            components_per_realisation: feats.iter().map(RealisationFeatures::len).collect(),
        },
    };
    Ok((report, failure))
}

/// Writes `report.json`, `miscls_box.csv` and `accuracy_hist.csv`.
pub fn write_report(report: &RunReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("miscls_box.csv"), report.box_csv())?;
    std::fs::write(out_dir.join("accuracy_hist.csv"), report.hist_csv())?;
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

const DESK_PLAN_V1: &str = include_str!("../configs/plans/desk_v1.json");

/// The shipped desk-scale plan over the default model classes.
/// Model files are replaced by the embedded default specs.
pub fn desk_plan() -> ExperimentPlan {
    let mut plan: ExperimentPlan = serde_json::from_str(DESK_PLAN_V1).expect("shipped plan parses");
    for (class, spec) in plan.classes.iter_mut().zip(crate::sim::default_specs()) {
        class.source = ClassSource::Model(spec);
    }
    plan
}
