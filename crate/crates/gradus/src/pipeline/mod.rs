//! Resumable end-to-end pipeline: nine sequential stages from repository
//! ingestion to MDS coordinates, each with content-hash manifests so
//! unchanged stages are skipped on rerun.

pub mod config;
pub mod manifest;
pub mod synthcorpus;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ast::{AstProvider, AstTree, NestingParser};
use crate::corpus::{
    extract_functions, generate_docstrings, resolve_call_graph, DocQuery, DocstringGenerator,
    FunctionUnit, Repository, TemplateDocGen,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, grid_search_delta_s, mds_coords, EvalCandidate, EvalDataset, EvalQuery,
    GridContext,
};
use crate::refine::{refine_pairs, OverlapJudge, PreferenceJudge, RefineParams};
use crate::synth::{
    annotate_pairs, build_unannotated_groups, HashedBagAnnotator, PairRecord,
    SimilarityAnnotator,
};
use crate::text::{derive_seed, unit_fraction};
use crate::train::{
    curve_to_csv, group_specs_from_pairs, train, EncoderModel, TrainConfig,
};

pub use config::{
    AnnotateBackend, ArtifactsSection, DocgenBackend, JudgeBackend, PipelineConfig,
};
pub use manifest::{
    atomic_write, sha256_bytes, sha256_file, sha256_tree, StageManifest, WorkLock,
};
pub use synthcorpus::{make_synthetic_corpus, SynthStats};

use crate::clients::{HttpAnnotator, HttpClientConfig, HttpDocGen, HttpJudge};
use manifest::{save_manifest, stage_is_current};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ingest,
    Docgen,
    Mine,
    Annotate,
    Refine,
    Train,
    Eval,
    Grid,
    Mds,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Docgen,
        Stage::Mine,
        Stage::Annotate,
        Stage::Refine,
        Stage::Train,
        Stage::Eval,
        Stage::Grid,
        Stage::Mds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Docgen => "docgen",
            Stage::Mine => "mine",
            Stage::Annotate => "annotate",
            Stage::Refine => "refine",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Grid => "grid",
            Stage::Mds => "mds",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|s| s.name() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Re-verify recorded output hashes before skipping a stage.
    pub strict: bool,
    /// Force built-in backends regardless of configured endpoints.
    pub offline: bool,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub manifest: StageManifest,
}

/// Run stages in order under the working-directory lock.
pub fn run_stages(
    cfg: &PipelineConfig,
    stages: &[Stage],
    opts: RunOptions,
) -> Result<Vec<StageOutcome>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.work_dir).map_err(|e| Error::io(&cfg.work_dir, e))?;
    let _lock = WorkLock::acquire(&cfg.work_dir)?;
    let mut out = Vec::with_capacity(stages.len());
    for &stage in stages {
        out.push(run_stage_locked(cfg, stage, opts)?);
    }
    Ok(out)
}

/// Run a single stage (acquiring the lock for its duration).
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, opts: RunOptions) -> Result<StageOutcome> {
    Ok(run_stages(cfg, &[stage], opts)?.pop().expect("one stage requested"))
}

enum InputSpec {
    /// Directory tree hashed as a whole.
    Tree(&'static str, PathBuf),
    /// Single artifact file, keyed by its configured relative name.
    File(String, PathBuf),
}

fn stage_inputs(cfg: &PipelineConfig, stage: Stage) -> Vec<InputSpec> {
    let file = |name: &String, path: PathBuf| InputSpec::File(name.clone(), path);
    let a = &cfg.artifacts;
    match stage {
        Stage::Ingest => vec![InputSpec::Tree("corpus", cfg.corpus_dir.clone())],
        Stage::Docgen => vec![file(&a.functions, cfg.functions_path())],
        Stage::Mine => vec![
            file(&a.functions, cfg.functions_path()),
            file(&a.queries, cfg.queries_path()),
        ],
        Stage::Annotate => vec![
            file(&a.pairs_mined, cfg.pairs_mined_path()),
            file(&a.functions, cfg.functions_path()),
            file(&a.queries, cfg.queries_path()),
        ],
        Stage::Refine => vec![
            file(&a.pairs, cfg.pairs_path()),
            file(&a.functions, cfg.functions_path()),
            file(&a.queries, cfg.queries_path()),
        ],
        Stage::Train => vec![
            file(&a.pairs_refined, cfg.pairs_refined_path()),
            file(&a.functions, cfg.functions_path()),
            file(&a.queries, cfg.queries_path()),
        ],
        Stage::Eval => vec![
            file(&a.checkpoint, cfg.checkpoint_path()),
            file(&a.functions, cfg.functions_path()),
            file(&a.queries, cfg.queries_path()),
        ],
        Stage::Grid => vec![
            file(&a.pairs, cfg.pairs_path()),
            file(&a.functions, cfg.functions_path()),
            file(&a.queries, cfg.queries_path()),
        ],
        Stage::Mds => vec![
            file(&a.checkpoint, cfg.checkpoint_path()),
            file(&a.functions, cfg.functions_path()),
        ],
    }
}

fn hash_inputs(specs: &[InputSpec]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for spec in specs {
        match spec {
            InputSpec::Tree(key, path) => {
                if !path.is_dir() {
                    return Err(Error::MissingInput(path.clone()));
                }
                out.insert((*key).to_string(), sha256_tree(path)?);
            }
            InputSpec::File(key, path) => {
                if !path.is_file() {
                    return Err(Error::MissingInput(path.clone()));
                }
                out.insert(key.clone(), sha256_file(path)?);
            }
        }
    }
    Ok(out)
}

fn run_stage_locked(
    cfg: &PipelineConfig,
    stage: Stage,
    opts: RunOptions,
) -> Result<StageOutcome> {
    let config_hash = cfg.stage_config_hash(stage, opts.offline);
    let inputs = hash_inputs(&stage_inputs(cfg, stage))?;
    if stage_is_current(&cfg.work_dir, stage.name(), &config_hash, &inputs, opts.strict) {
        let manifest = manifest::load_manifest(&cfg.work_dir, stage.name())
            .expect("stage_is_current loaded this manifest");
        log::info!("stage {stage}: up to date, skipped");
        return Ok(StageOutcome { stage, skipped: true, manifest });
    }

    log::info!("stage {stage}: running");
    let mut record = StageManifest::begin(stage.name(), config_hash, inputs);
    let output_names = execute_stage(cfg, stage, opts)?;
    let mut outputs = BTreeMap::new();
    for name in output_names {
        let path = cfg.work_dir.join(&name);
        outputs.insert(name, sha256_file(&path)?);
    }
    record.finish(outputs);
    save_manifest(&cfg.work_dir, &record)?;
    log::info!("stage {stage}: done");
    Ok(StageOutcome { stage, skipped: false, manifest: record })
}

fn execute_stage(cfg: &PipelineConfig, stage: Stage, opts: RunOptions) -> Result<Vec<String>> {
    match stage {
        Stage::Ingest => stage_ingest(cfg),
        Stage::Docgen => stage_docgen(cfg, opts),
        Stage::Mine => stage_mine(cfg),
        Stage::Annotate => stage_annotate(cfg, opts),
        Stage::Refine => stage_refine(cfg, opts),
        Stage::Train => stage_train(cfg),
        Stage::Eval => stage_eval(cfg),
        Stage::Grid => stage_grid(cfg, opts),
        Stage::Mds => stage_mds(cfg),
    }
}

fn write_jsonl<T: Serialize>(path: &std::path::Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| Error::json(path, e))?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

fn read_jsonl<T: DeserializeOwned>(path: &std::path::Path) -> Result<Vec<T>> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| {
            Error::InvalidArgument(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

fn write_json_pretty<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn load_units(cfg: &PipelineConfig) -> Result<Vec<FunctionUnit>> {
    read_jsonl(&cfg.functions_path())
}

fn load_queries(cfg: &PipelineConfig) -> Result<Vec<DocQuery>> {
    read_jsonl(&cfg.queries_path())
}

fn query_text_map(queries: &[DocQuery]) -> HashMap<String, String> {
    queries.iter().map(|q| (q.query_id.clone(), q.text.clone())).collect()
}

fn code_text_map(units: &[FunctionUnit]) -> HashMap<String, String> {
    units.iter().map(|u| (u.func_id.clone(), u.source.clone())).collect()
}

fn is_holdout(cfg: &PipelineConfig, query_id: &str) -> bool {
    unit_fraction(cfg.seed, "holdout", query_id) < cfg.eval.holdout_fraction
}

/// Held-out queries against the full candidate pool; falls back to every
/// query (with a warning) when the split leaves none.
fn build_eval_dataset(
    cfg: &PipelineConfig,
    units: &[FunctionUnit],
    queries: &[DocQuery],
) -> EvalDataset {
    let mut held: Vec<&DocQuery> =
        queries.iter().filter(|q| is_holdout(cfg, &q.query_id)).collect();
    if held.is_empty() {
        log::warn!(
            "holdout fraction {} selected no queries; evaluating on the full set",
            cfg.eval.holdout_fraction
        );
        held = queries.iter().collect();
    }
    EvalDataset {
        queries: held
            .iter()
            .map(|q| EvalQuery {
                query_id: q.query_id.clone(),
                text: q.text.clone(),
                target_ids: vec![q.func_id.clone()],
            })
            .collect(),
        candidates: units
            .iter()
            .map(|u| EvalCandidate { code_id: u.func_id.clone(), text: u.source.clone() })
            .collect(),
    }
}

fn parse_trees(units: &[FunctionUnit]) -> HashMap<String, AstTree> {
    let provider = NestingParser;
    units
        .iter()
        .filter_map(|u| match provider.parse(&u.source) {
            Ok(t) => Some((u.func_id.clone(), t)),
            Err(e) => {
                log::warn!("could not parse {}: {e}", u.func_id);
                None
            }
        })
        .collect()
}

fn refine_params(cfg: &PipelineConfig) -> RefineParams {
    RefineParams {
        s_star: cfg.refine.s_star,
        use_fitted_threshold: cfg.refine.use_fitted_threshold,
        weighted_intersection: cfg.refine.weighted_intersection,
        ast_ratio_max: cfg.refine.ast_ratio_max,
        delta_s: cfg.refine.delta_s,
        gmm_max_iter: cfg.refine.gmm_max_iter,
        gmm_tol: cfg.refine.gmm_tol,
        seed: cfg.seed,
    }
}

fn train_config(cfg: &PipelineConfig) -> TrainConfig {
    TrainConfig {
        tau: cfg.train.tau,
        w1: cfg.train.w1,
        w2: cfg.train.w2,
        lr: cfg.train.lr,
        batch_groups: cfg.train.batch_groups,
        k: cfg.mine.k,
        delta_s: cfg.refine.delta_s,
        epochs: cfg.train.epochs,
        seed: cfg.seed,
        optimizer: cfg.train.optimizer.to_kind(),
    }
}

fn initial_model(cfg: &PipelineConfig) -> EncoderModel {
    EncoderModel::new(
        cfg.train.hash_dim,
        cfg.train.embed_dim,
        cfg.train.pooling,
        derive_seed(cfg.seed, "model-init"),
    )
}

fn make_judge(cfg: &PipelineConfig, opts: RunOptions) -> Result<Box<dyn PreferenceJudge>> {
    match cfg.effective_judge(opts.offline) {
        JudgeBackend::Overlap => {
            Ok(Box::new(OverlapJudge { accept_fraction: cfg.refine.judge_accept_fraction }))
        }
        JudgeBackend::Http => {
            let endpoint = cfg.clients.judge_endpoint.clone().ok_or_else(|| {
                Error::InvalidConfig("refine.judge = \"http\" needs clients.judge_endpoint".into())
            })?;
            let mut http =
                HttpClientConfig::new(endpoint, &cfg.clients.judge_token_env, cfg.clients.retries);
            http.timeout_secs = cfg.clients.timeout_secs;
            Ok(Box::new(HttpJudge { cfg: http }))
        }
    }
}

fn stage_ingest(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let mut repo_dirs: Vec<PathBuf> = fs::read_dir(&cfg.corpus_dir)
        .map_err(|e| Error::io(&cfg.corpus_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.path())
        .collect();
    repo_dirs.sort();
    if repo_dirs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no repository subdirectories under {}",
            cfg.corpus_dir.display()
        )));
    }
    let provider = NestingParser;
    let mut units = Vec::new();
    for dir in repo_dirs {
        let repo = Repository {
            repo_id: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "repo".into()),
            root_path: dir,
            language_tag: "auto".into(),
        };
        units.extend(extract_functions(&repo, &provider)?);
    }
    let units = resolve_call_graph(units);
    log::info!("ingested {} functions", units.len());
    write_jsonl(&cfg.functions_path(), &units)?;
    Ok(vec![cfg.artifacts.functions.clone()])
}

fn stage_docgen(cfg: &PipelineConfig, opts: RunOptions) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let generator: Box<dyn DocstringGenerator> = match cfg.effective_docgen(opts.offline) {
        DocgenBackend::Template => Box::new(TemplateDocGen),
        DocgenBackend::Http => {
            let endpoint = cfg.clients.generator_endpoint.clone().ok_or_else(|| {
                Error::InvalidConfig(
                    "docgen.backend = \"http\" needs clients.generator_endpoint".into(),
                )
            })?;
            let mut http = HttpClientConfig::new(
                endpoint,
                &cfg.clients.generator_token_env,
                cfg.clients.retries,
            );
            http.timeout_secs = cfg.clients.timeout_secs;
            Box::new(HttpDocGen { cfg: http })
        }
    };
    let queries = generate_docstrings(
        &units,
        generator.as_ref(),
        cfg.docgen.prompt_budget,
        cfg.docgen.max_in_flight,
    );
    if queries.is_empty() {
        return Err(Error::NoQueries);
    }
    log::info!("generated {} queries for {} functions", queries.len(), units.len());
    write_jsonl(&cfg.queries_path(), &queries)?;
    Ok(vec![cfg.artifacts.queries.clone()])
}

fn stage_mine(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let queries = load_queries(cfg)?;
    let pairs = build_unannotated_groups(&queries, &units, cfg.mine.k, cfg.seed);
    if pairs.is_empty() {
        return Err(Error::NoGroups);
    }
    log::info!("mined {} pairs in {} groups", pairs.len(), queries.len());
    write_jsonl(&cfg.pairs_mined_path(), &pairs)?;
    Ok(vec![cfg.artifacts.pairs_mined.clone()])
}

fn stage_annotate(cfg: &PipelineConfig, opts: RunOptions) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let queries = load_queries(cfg)?;
    let pairs: Vec<PairRecord> = read_jsonl(&cfg.pairs_mined_path())?;
    let annotator: Box<dyn SimilarityAnnotator> = match cfg.effective_annotate(opts.offline) {
        AnnotateBackend::Hashed => {
            Box::new(HashedBagAnnotator { buckets: cfg.annotate.buckets })
        }
        AnnotateBackend::Http => {
            let endpoint = cfg.clients.annotator_endpoint.clone().ok_or_else(|| {
                Error::InvalidConfig(
                    "annotate.backend = \"http\" needs clients.annotator_endpoint".into(),
                )
            })?;
            let mut http = HttpClientConfig::new(
                endpoint,
                &cfg.clients.annotator_token_env,
                cfg.clients.retries,
            );
            http.timeout_secs = cfg.clients.timeout_secs;
            Box::new(HttpAnnotator { cfg: http, batch_size: cfg.annotate.batch_size })
        }
    };
    let annotated = annotate_pairs(
        pairs,
        annotator.as_ref(),
        &query_text_map(&queries),
        &code_text_map(&units),
    )?;
    log::info!("annotated {} pairs", annotated.len());
    write_jsonl(&cfg.pairs_path(), &annotated)?;
    Ok(vec![cfg.artifacts.pairs.clone()])
}

fn stage_refine(cfg: &PipelineConfig, opts: RunOptions) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let queries = load_queries(cfg)?;
    let pairs: Vec<PairRecord> = read_jsonl(&cfg.pairs_path())?;
    let judge = make_judge(cfg, opts)?;
    let trees = parse_trees(&units);
    let (refined, report) = refine_pairs(
        pairs,
        &trees,
        judge.as_ref(),
        &refine_params(cfg),
        &query_text_map(&queries),
        &code_text_map(&units),
    )?;
    log::info!(
        "refined: {} threshold, {} structural, {} adjusted of {} pairs",
        report.threshold_selected,
        report.ast_selected,
        report.adjusted,
        report.total_pairs
    );
    write_jsonl(&cfg.pairs_refined_path(), &refined)?;
    write_json_pretty(&cfg.refine_report_path(), &report)?;
    Ok(vec![cfg.artifacts.pairs_refined.clone(), cfg.artifacts.refine_report.clone()])
}

fn stage_train(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let queries = load_queries(cfg)?;
    let pairs: Vec<PairRecord> = read_jsonl(&cfg.pairs_refined_path())?;
    let train_pairs: Vec<PairRecord> =
        pairs.into_iter().filter(|p| !is_holdout(cfg, &p.query_id)).collect();
    let specs = group_specs_from_pairs(
        &train_pairs,
        &query_text_map(&queries),
        &code_text_map(&units),
    );
    if specs.is_empty() {
        return Err(Error::NoGroups);
    }
    log::info!("training on {} groups", specs.len());
    let outcome = train(&specs, initial_model(cfg), &train_config(cfg))?;
    atomic_write(&cfg.checkpoint_path(), &outcome.model.to_bytes())?;
    atomic_write(&cfg.loss_curve_path(), curve_to_csv(&outcome.curve).as_bytes())?;
    Ok(vec![cfg.artifacts.checkpoint.clone(), cfg.artifacts.loss_curve.clone()])
}

fn stage_eval(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let queries = load_queries(cfg)?;
    let model = EncoderModel::load_from(&cfg.checkpoint_path())?;
    let dataset = build_eval_dataset(cfg, &units, &queries);
    atomic_write(&cfg.eval_dataset_path(), dataset.to_jsonl().as_bytes())?;
    let report = evaluate(&model, &dataset, cfg.eval.k_cutoff)?;
    log::info!(
        "eval: mrr {:.4} map {:.4} over {} queries",
        report.mrr,
        report.map,
        report.query_count
    );
    write_json_pretty(&cfg.eval_report_path(), &report)?;
    Ok(vec![cfg.artifacts.eval_dataset.clone(), cfg.artifacts.eval_report.clone()])
}

fn stage_grid(cfg: &PipelineConfig, opts: RunOptions) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let queries = load_queries(cfg)?;
    let pairs: Vec<PairRecord> = read_jsonl(&cfg.pairs_path())?;
    let train_pairs: Vec<PairRecord> =
        pairs.into_iter().filter(|p| !is_holdout(cfg, &p.query_id)).collect();
    let judge = make_judge(cfg, opts)?;
    let trees = parse_trees(&units);
    let query_texts = query_text_map(&queries);
    let code_texts = code_text_map(&units);
    let dataset = build_eval_dataset(cfg, &units, &queries);
    let ctx = GridContext {
        pairs: &train_pairs,
        trees: &trees,
        judge: judge.as_ref(),
        refine: refine_params(cfg),
        query_texts: &query_texts,
        code_texts: &code_texts,
        train_cfg: train_config(cfg),
        model_init: initial_model(cfg),
        dataset: &dataset,
        k_cutoff: cfg.eval.k_cutoff,
    };
    let report = grid_search_delta_s(&cfg.grid.delta_s_values, &ctx)?;
    match (report.best_delta_s, report.best_mrr) {
        (Some(d), Some(m)) => log::info!("grid: best delta_s {d} with mrr {m:.4}"),
        _ => log::warn!("grid: every cell failed"),
    }
    write_json_pretty(&cfg.grid_report_path(), &report)?;
    Ok(vec![cfg.artifacts.grid_report.clone()])
}

fn stage_mds(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let units = load_units(cfg)?;
    let model = EncoderModel::load_from(&cfg.checkpoint_path())?;
    let mut chosen: Vec<&FunctionUnit> = units.iter().collect();
    chosen.sort_by(|a, b| a.func_id.cmp(&b.func_id));
    chosen.truncate(cfg.mds.max_points);
    if chosen.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "multidimensional scaling needs at least 3 functions, corpus has {}",
            chosen.len()
        )));
    }
    let vectors: Vec<Vec<f64>> =
        chosen.iter().map(|u| model.encode(&u.source)).collect::<Result<_>>()?;
    let coords = mds_coords(&vectors)?;
    let mut csv = String::from("id,x,y\n");
    for (u, c) in chosen.iter().zip(&coords) {
        csv.push_str(&format!("{},{},{}\n", u.func_id, c[0], c[1]));
    }
    atomic_write(&cfg.mds_path(), csv.as_bytes())?;
    Ok(vec![cfg.artifacts.mds.clone()])
}
