//! Pipeline configuration: one TOML file covering every tunable, with
//! defaults matching the reference hyper-parameters. Unknown keys are
//! rejected; credentials are never stored here, only the names of the
//! environment variables that hold them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::manifest::sha256_bytes;
use crate::pipeline::Stage;
use crate::train::{OptimizerKind, Pooling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocgenBackend {
    Template,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotateBackend {
    Hashed,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeBackend {
    Overlap,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub repos: usize,
    pub funcs_per_repo: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { repos: 20, funcs_per_repo: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DocgenSection {
    pub backend: DocgenBackend,
    /// Whitespace-token budget for code embedded in a generation prompt.
    pub prompt_budget: usize,
    pub max_in_flight: usize,
}

impl Default for DocgenSection {
    fn default() -> Self {
        DocgenSection { backend: DocgenBackend::Template, prompt_budget: 1024, max_in_flight: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MineSection {
    /// Negatives mined per query.
    pub k: usize,
}

impl Default for MineSection {
    fn default() -> Self {
        MineSection { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotateSection {
    pub backend: AnnotateBackend,
    /// Hash buckets for the built-in annotator.
    pub buckets: usize,
    /// Texts per request for the HTTP annotator.
    pub batch_size: usize,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        AnnotateSection { backend: AnnotateBackend::Hashed, buckets: 4096, batch_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    /// Similarity threshold for candidate selection.
    pub s_star: f64,
    /// Use the fitted mixture intersection instead of `s_star`.
    pub use_fitted_threshold: bool,
    /// Weight the density intersection by mixing proportions.
    pub weighted_intersection: bool,
    /// Normalized tree-edit-distance cutoff.
    pub ast_ratio_max: f64,
    /// Label adjustment factor for accepted candidates.
    pub delta_s: f64,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub judge: JudgeBackend,
    pub judge_accept_fraction: f64,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            s_star: 0.4,
            use_fitted_threshold: false,
            weighted_intersection: false,
            ast_ratio_max: 0.25,
            delta_s: 0.1,
            gmm_max_iter: 200,
            gmm_tol: 1e-6,
            judge: JudgeBackend::Overlap,
            judge_accept_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub tau: f64,
    pub w1: f64,
    pub w2: f64,
    pub lr: f64,
    pub batch_groups: usize,
    pub epochs: usize,
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub pooling: Pooling,
    pub optimizer: OptimizerChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl OptimizerChoice {
    pub fn to_kind(self) -> OptimizerKind {
        match self {
            OptimizerChoice::Adam => OptimizerKind::default(),
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            tau: 0.05,
            w1: 0.98,
            w2: 0.02,
            lr: 5e-4,
            batch_groups: 8,
            epochs: 1,
            hash_dim: 4096,
            embed_dim: 64,
            pooling: Pooling::Mean,
            optimizer: OptimizerChoice::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k_cutoff: usize,
    /// Fraction of queries held out of training and used for retrieval
    /// scoring.
    pub holdout_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { k_cutoff: 1000, holdout_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub delta_s_values: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { delta_s_values: vec![0.05, 0.1, 0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdsSection {
    /// Cap on the number of function embeddings projected.
    pub max_points: usize,
}

impl Default for MdsSection {
    fn default() -> Self {
        MdsSection { max_points: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientsSection {
    pub generator_endpoint: Option<String>,
    pub annotator_endpoint: Option<String>,
    pub judge_endpoint: Option<String>,
    /// Environment variable names holding bearer tokens; the tokens
    /// themselves never appear in configuration files.
    pub generator_token_env: String,
    pub annotator_token_env: String,
    pub judge_token_env: String,
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for ClientsSection {
    fn default() -> Self {
        ClientsSection {
            generator_endpoint: None,
            annotator_endpoint: None,
            judge_endpoint: None,
            generator_token_env: "GRADUS_GENERATOR_TOKEN".into(),
            annotator_token_env: "GRADUS_ANNOTATOR_TOKEN".into(),
            judge_token_env: "GRADUS_JUDGE_TOKEN".into(),
            retries: 2,
            timeout_secs: 30,
        }
    }
}

/// File names of every stage artifact, relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactsSection {
    pub functions: String,
    pub queries: String,
    pub pairs_mined: String,
    pub pairs: String,
    pub pairs_refined: String,
    pub refine_report: String,
    pub checkpoint: String,
    pub loss_curve: String,
    pub eval_dataset: String,
    pub eval_report: String,
    pub grid_report: String,
    pub mds: String,
}

impl Default for ArtifactsSection {
    fn default() -> Self {
        ArtifactsSection {
            functions: "functions.jsonl".into(),
            queries: "queries.jsonl".into(),
            pairs_mined: "pairs.mined.jsonl".into(),
            pairs: "pairs.jsonl".into(),
            pairs_refined: "pairs.refined.jsonl".into(),
            refine_report: "refine.report.json".into(),
            checkpoint: "model.ckpt".into(),
            loss_curve: "loss_curve.csv".into(),
            eval_dataset: "eval.jsonl".into(),
            eval_report: "report.json".into(),
            grid_report: "grid.report.json".into(),
            mds: "mds.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Root seed; all stage randomness derives from it.
    pub seed: u64,
    /// Directory holding repository subdirectories to ingest.
    pub corpus_dir: PathBuf,
    /// Directory for artifacts, manifests, and the lock file.
    pub work_dir: PathBuf,
    pub synth: SynthSection,
    pub docgen: DocgenSection,
    pub mine: MineSection,
    pub annotate: AnnotateSection,
    pub refine: RefineSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub grid: GridSection,
    pub mds: MdsSection,
    pub clients: ClientsSection,
    pub artifacts: ArtifactsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 3407,
            corpus_dir: PathBuf::from("corpus"),
            work_dir: PathBuf::from("work"),
            synth: SynthSection::default(),
            docgen: DocgenSection::default(),
            mine: MineSection::default(),
            annotate: AnnotateSection::default(),
            refine: RefineSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            grid: GridSection::default(),
            mds: MdsSection::default(),
            clients: ClientsSection::default(),
            artifacts: ArtifactsSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.train.tau <= 0.0 || !self.train.tau.is_finite() {
            return bad(format!("train.tau must be positive, got {}", self.train.tau));
        }
        if self.train.w1 < 0.0 || self.train.w2 < 0.0 {
            return bad("train.w1 and train.w2 must be nonnegative".into());
        }
        if self.train.batch_groups == 0 {
            return bad("train.batch_groups must be at least 1".into());
        }
        if self.train.hash_dim == 0 || self.train.embed_dim == 0 {
            return bad("train.hash_dim and train.embed_dim must be positive".into());
        }
        if self.train.epochs == 0 {
            return bad("train.epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.eval.holdout_fraction) {
            return bad(format!(
                "eval.holdout_fraction must lie in [0, 1), got {}",
                self.eval.holdout_fraction
            ));
        }
        if self.eval.k_cutoff == 0 {
            return bad("eval.k_cutoff must be at least 1".into());
        }
        if self.refine.delta_s <= 0.0 {
            return bad(format!("refine.delta_s must be positive, got {}", self.refine.delta_s));
        }
        if !(0.0..=1.0).contains(&self.refine.ast_ratio_max) {
            return bad(format!(
                "refine.ast_ratio_max must lie in [0, 1], got {}",
                self.refine.ast_ratio_max
            ));
        }
        if self.refine.gmm_max_iter == 0 || self.refine.gmm_tol <= 0.0 {
            return bad("refine.gmm_max_iter and gmm_tol must be positive".into());
        }
        if self.grid.delta_s_values.is_empty()
            || self.grid.delta_s_values.iter().any(|v| *v <= 0.0)
        {
            return bad("grid.delta_s_values must be a nonempty list of positive values".into());
        }
        if self.mine.k == 0 {
            return bad("mine.k must be at least 1".into());
        }
        if self.annotate.buckets == 0 || self.annotate.batch_size == 0 {
            return bad("annotate.buckets and batch_size must be positive".into());
        }
        if self.mds.max_points < 3 {
            return bad("mds.max_points must be at least 3".into());
        }
        if self.synth.repos == 0 || self.synth.funcs_per_repo == 0 {
            return bad("synth.repos and funcs_per_repo must be positive".into());
        }
        Ok(())
    }

    /// Backend actually used for a stage under `--offline`.
    pub fn effective_docgen(&self, offline: bool) -> DocgenBackend {
        if offline { DocgenBackend::Template } else { self.docgen.backend }
    }

    pub fn effective_annotate(&self, offline: bool) -> AnnotateBackend {
        if offline { AnnotateBackend::Hashed } else { self.annotate.backend }
    }

    pub fn effective_judge(&self, offline: bool) -> JudgeBackend {
        if offline { JudgeBackend::Overlap } else { self.refine.judge }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }

    pub fn functions_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.functions)
    }
    pub fn queries_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.queries)
    }
    pub fn pairs_mined_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.pairs_mined)
    }
    pub fn pairs_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.pairs)
    }
    pub fn pairs_refined_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.pairs_refined)
    }
    pub fn refine_report_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.refine_report)
    }
    pub fn checkpoint_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.checkpoint)
    }
    pub fn loss_curve_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.loss_curve)
    }
    pub fn eval_dataset_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.eval_dataset)
    }
    pub fn eval_report_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.eval_report)
    }
    pub fn grid_report_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.grid_report)
    }
    pub fn mds_path(&self) -> PathBuf {
        self.artifact(&self.artifacts.mds)
    }

    /// Hash of the configuration subset a stage's outputs depend on.
    ///
    /// Scoped so that a change to one section reruns only the stages it
    /// feeds: e.g. a `train.tau` change leaves ingest through refine
    /// skippable.
    pub fn stage_config_hash(&self, stage: Stage, offline: bool) -> String {
        // Endpoints only matter when the resolved backend actually calls
        // them; otherwise they must not perturb the hash.
        let gen_ep = (self.effective_docgen(offline) == DocgenBackend::Http)
            .then(|| self.clients.generator_endpoint.clone())
            .flatten();
        let ann_ep = (self.effective_annotate(offline) == AnnotateBackend::Http)
            .then(|| self.clients.annotator_endpoint.clone())
            .flatten();
        let judge_ep = (self.effective_judge(offline) == JudgeBackend::Http)
            .then(|| self.clients.judge_endpoint.clone())
            .flatten();
        let subset = match stage {
            Stage::Ingest => serde_json::json!({
                "corpus_dir": self.corpus_dir.to_string_lossy(),
            }),
            Stage::Docgen => serde_json::json!({
                "backend": self.effective_docgen(offline),
                "prompt_budget": self.docgen.prompt_budget,
                "endpoint": gen_ep,
            }),
            Stage::Mine => serde_json::json!({
                "seed": self.seed,
                "k": self.mine.k,
            }),
            Stage::Annotate => serde_json::json!({
                "backend": self.effective_annotate(offline),
                "buckets": self.annotate.buckets,
                "batch_size": self.annotate.batch_size,
                "endpoint": ann_ep,
            }),
            Stage::Refine => serde_json::json!({
                "seed": self.seed,
                "refine": self.refine,
                "judge": self.effective_judge(offline),
                "endpoint": judge_ep,
            }),
            Stage::Train => serde_json::json!({
                "seed": self.seed,
                "train": self.train,
                "holdout_fraction": self.eval.holdout_fraction,
                "k": self.mine.k,
                "delta_s": self.refine.delta_s,
            }),
            Stage::Eval => serde_json::json!({
                "seed": self.seed,
                "eval": self.eval,
            }),
            Stage::Grid => serde_json::json!({
                "seed": self.seed,
                "grid": self.grid,
                "refine": self.refine,
                "train": self.train,
                "eval": self.eval,
                "judge": self.effective_judge(offline),
            }),
            Stage::Mds => serde_json::json!({
                "mds": self.mds,
            }),
        };
        let body =
            serde_json::to_string(&subset).expect("config subsets always serialize");
        sha256_bytes(format!("{}\n{}", stage.name(), body).as_bytes())
    }

    /// Summary of resolved settings for logging.
    pub fn describe(&self, offline: bool) -> BTreeMap<&'static str, String> {
        let mut out = BTreeMap::new();
        out.insert("seed", self.seed.to_string());
        out.insert("work_dir", self.work_dir.display().to_string());
        out.insert("corpus_dir", self.corpus_dir.display().to_string());
        out.insert("docgen", format!("{:?}", self.effective_docgen(offline)));
        out.insert("annotate", format!("{:?}", self.effective_annotate(offline)));
        out.insert("judge", format!("{:?}", self.effective_judge(offline)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 3407);
        assert_eq!(cfg.train.tau, 0.05);
        assert_eq!(cfg.train.w1, 0.98);
        assert_eq!(cfg.train.w2, 0.02);
        assert_eq!(cfg.train.lr, 5e-4);
        assert_eq!(cfg.mine.k, 5);
        assert_eq!(cfg.refine.delta_s, 0.1);
        assert_eq!(cfg.refine.ast_ratio_max, 0.25);
        assert_eq!(cfg.grid.delta_s_values, vec![0.05, 0.1, 0.2]);

        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<PipelineConfig>("unknown_key = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown"), "{msg}");
        assert!(toml::from_str::<PipelineConfig>("[train]\nbogus = 2\n").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: PipelineConfig =
            toml::from_str("seed = 99\n[train]\ntau = 0.1\n").unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.train.tau, 0.1);
        assert_eq!(cfg.train.w1, 0.98);
        assert_eq!(cfg.mine.k, 5);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.train.tau = 0.0;
        assert_eq!(cfg.validate().unwrap_err().code(), "invalid_config");
        let mut cfg = PipelineConfig::default();
        cfg.eval.holdout_fraction = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.grid.delta_s_values.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.refine.delta_s = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stage_hash_scoping() {
        let base = PipelineConfig::default();
        let mut tau_changed = base.clone();
        tau_changed.train.tau = 0.07;
        // A tau-only change must leave earlier stages' hashes intact...
        for stage in [Stage::Ingest, Stage::Docgen, Stage::Mine, Stage::Annotate, Stage::Refine]
        {
            assert_eq!(
                base.stage_config_hash(stage, true),
                tau_changed.stage_config_hash(stage, true),
                "{stage:?} hash moved on a train-only change"
            );
        }
        // ...and change the training stage's.
        assert_ne!(
            base.stage_config_hash(Stage::Train, true),
            tau_changed.stage_config_hash(Stage::Train, true)
        );

        // Offline resolution feeds the hash: an http backend differs from
        // the forced offline one.
        let mut http = base.clone();
        http.docgen.backend = DocgenBackend::Http;
        http.clients.generator_endpoint = Some("http://localhost:1".into());
        assert_eq!(
            base.stage_config_hash(Stage::Docgen, true),
            http.stage_config_hash(Stage::Docgen, true)
        );
        assert_ne!(
            base.stage_config_hash(Stage::Docgen, false),
            http.stage_config_hash(Stage::Docgen, false)
        );
    }

    #[test]
    fn load_reports_missing_and_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.toml");
        assert_eq!(PipelineConfig::load(&missing).unwrap_err().code(), "io");
        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "seed = \"not a number\"").unwrap();
        assert_eq!(PipelineConfig::load(&bad).unwrap_err().code(), "invalid_config");
    }
}
