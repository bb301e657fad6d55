//! Reference text encoder and its training loop.
//!
//! The encoder is deliberately small: a feature-hashed token embedding
//! table, mean or last-token pooling, one linear projection, and L2
//! normalization. It exists to exercise the objectives end to end with
//! exact, analytically derived gradients — not to compete with a real
//! pretrained encoder, which would slot in behind the same interfaces.

pub mod gradcheck;
pub mod loss;
pub mod optimizer;

use std::collections::HashMap;
use std::path::Path;

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{PairRecord, Role};
use crate::text::{derive_seed, hash_bucket, tokenize};
use crate::vecmath::l2_norm;

pub use gradcheck::grad_check;
pub use loss::{loss_cosent, loss_hybrid, loss_infonce, BatchGrads, HybridLoss};
pub use optimizer::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Last,
}

/// Hashed bag-of-tokens encoder with a linear projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub pooling: Pooling,
    /// `hash_dim x embed_dim`, row-major: one row per hash bucket.
    pub table: Vec<f64>,
    /// `embed_dim x embed_dim`, row-major: output `p_r = sum_c P[r][c] u_c`.
    pub projection: Vec<f64>,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"GRADENC1";

impl EncoderModel {
    /// Fresh model: table entries uniform in `(-0.5, 0.5) / sqrt(embed_dim)`
    /// from a stream-cipher RNG, projection initialized to identity.
    pub fn new(hash_dim: usize, embed_dim: usize, pooling: Pooling, seed: u64) -> Self {
        assert!(hash_dim > 0 && embed_dim > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (embed_dim as f64).sqrt();
        let table: Vec<f64> =
            (0..hash_dim * embed_dim).map(|_| (rng.random::<f64>() - 0.5) * scale).collect();
        let mut projection = vec![0.0; embed_dim * embed_dim];
        for i in 0..embed_dim {
            projection[i * embed_dim + i] = 1.0;
        }
        EncoderModel { hash_dim, embed_dim, pooling, table, projection }
    }

    /// Identity model: `hash_dim == embed_dim`, table and projection both
    /// identity. Tokens map straight to basis vectors, which makes cosine
    /// behavior exactly predictable in tests and baselines.
    pub fn identity(dim: usize, pooling: Pooling) -> Self {
        let mut table = vec![0.0; dim * dim];
        for i in 0..dim {
            table[i * dim + i] = 1.0;
        }
        EncoderModel {
            hash_dim: dim,
            embed_dim: dim,
            pooling,
            table: table.clone(),
            projection: table,
        }
    }

    pub fn param_count(&self) -> usize {
        self.table.len() + self.projection.len()
    }

    /// Encode a text into a unit-norm embedding.
    pub fn encode(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.forward(text)?.unit)
    }

    /// Forward pass keeping the intermediates needed for the backward pass.
    pub(crate) fn forward(&self, text: &str) -> Result<EncodeTrace> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyTokenStream);
        }
        // Bucket weights after pooling.
        let mut weights: Vec<(usize, f64)> = Vec::new();
        match self.pooling {
            Pooling::Mean => {
                let w = 1.0 / tokens.len() as f64;
                let mut acc: HashMap<usize, f64> = HashMap::new();
                for t in &tokens {
                    *acc.entry(hash_bucket(t, self.hash_dim)).or_insert(0.0) += w;
                }
                weights = acc.into_iter().collect();
                weights.sort_unstable_by_key(|&(b, _)| b);
            }
            Pooling::Last => {
                weights.push((hash_bucket(tokens.last().unwrap(), self.hash_dim), 1.0));
            }
        }
        let d = self.embed_dim;
        let mut pooled = vec![0.0f64; d];
        for &(bucket, w) in &weights {
            let row = &self.table[bucket * d..(bucket + 1) * d];
            crate::vecmath::axpy(&mut pooled, w, row);
        }
        let mut projected = vec![0.0f64; d];
        for (r, out) in projected.iter_mut().enumerate() {
            let row = &self.projection[r * d..(r + 1) * d];
            *out = crate::vecmath::dot(row, &pooled);
        }
        let norm = l2_norm(&projected);
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::NonFinite(format!(
                "embedding norm {norm} for text starting {:?}",
                &text[..text.len().min(32)]
            )));
        }
        let unit: Vec<f64> = projected.iter().map(|x| x / norm).collect();
        Ok(EncodeTrace { weights, pooled, norm, unit })
    }

    /// Accumulate parameter gradients for one encoded text given the loss
    /// gradient w.r.t. its unit-norm embedding.
    pub(crate) fn backward(&self, trace: &EncodeTrace, d_unit: &[f64], grads: &mut ParamGrads) {
        let d = self.embed_dim;
        // Through normalization: d_p = (g - (v.g) v) / |p|.
        let vg = crate::vecmath::dot(&trace.unit, d_unit);
        let d_proj_out: Vec<f64> = trace
            .unit
            .iter()
            .zip(d_unit)
            .map(|(&v, &g)| (g - vg * v) / trace.norm)
            .collect();
        // Through the projection: dP[r][c] += d_p[r] * u[c]; d_u = P^T d_p.
        let mut d_pooled = vec![0.0f64; d];
        for (r, &dp) in d_proj_out.iter().enumerate() {
            let prow = &self.projection[r * d..(r + 1) * d];
            let gpr = &mut grads.projection[r * d..(r + 1) * d];
            for c in 0..d {
                gpr[c] += dp * trace.pooled[c];
                d_pooled[c] += prow[c] * dp;
            }
        }
        // Through pooling into the table rows.
        for &(bucket, w) in &trace.weights {
            let grow = &mut grads.table[bucket * d..(bucket + 1) * d];
            crate::vecmath::axpy(grow, w, &d_pooled);
        }
    }

    /// Hash buckets this model would touch for `text` (for sparse updates
    /// and gradient-check coordinate selection).
    pub(crate) fn buckets_for(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| hash_bucket(t, self.hash_dim)).collect()
    }

    /// Serialize to the checkpoint wire format (fixed-endian, header first).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.hash_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.embed_dim as u32).to_le_bytes());
        out.push(match self.pooling {
            Pooling::Mean => 0,
            Pooling::Last => 1,
        });
        for x in self.table.iter().chain(self.projection.iter()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 17 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fail("bad magic or truncated header"));
        }
        let hash_dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let embed_dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let pooling = match bytes[16] {
            0 => Pooling::Mean,
            1 => Pooling::Last,
            other => return Err(fail(&format!("unknown pooling tag {other}"))),
        };
        if hash_dim == 0 || embed_dim == 0 {
            return Err(fail("zero dimensions"));
        }
        let expect = 17 + 8 * (hash_dim * embed_dim + embed_dim * embed_dim);
        if bytes.len() != expect {
            return Err(fail(&format!("expected {expect} bytes, got {}", bytes.len())));
        }
        let mut vals = bytes[17..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let table: Vec<f64> = vals.by_ref().take(hash_dim * embed_dim).collect();
        let projection: Vec<f64> = vals.collect();
        if table.iter().chain(projection.iter()).any(|x| !x.is_finite()) {
            return Err(fail("non-finite parameter"));
        }
        Ok(EncoderModel { hash_dim, embed_dim, pooling, table, projection })
    }

    pub fn save_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_from(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Forward-pass intermediates for one text.
#[derive(Debug, Clone)]
pub(crate) struct EncodeTrace {
    pub weights: Vec<(usize, f64)>,
    pub pooled: Vec<f64>,
    pub norm: f64,
    pub unit: Vec<f64>,
}

/// Flat parameter gradients, same layout as the model.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub table: Vec<f64>,
    pub projection: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        ParamGrads {
            table: vec![0.0; model.table.len()],
            projection: vec![0.0; model.projection.len()],
        }
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Softmax temperature; divides cosines inside the exponents.
    pub tau: f64,
    /// Weight of the in-batch contrastive term.
    pub w1: f64,
    /// Weight of the rank-order term.
    pub w2: f64,
    pub lr: f64,
    /// Groups per training step.
    pub batch_groups: usize,
    /// Negatives mined per query (recorded for provenance; mining happens
    /// upstream).
    pub k: usize,
    /// Label-adjustment factor used during refinement (recorded for
    /// provenance).
    pub delta_s: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.05,
            w1: 0.98,
            w2: 0.02,
            lr: 5e-4,
            batch_groups: 8,
            k: 5,
            delta_s: 0.1,
            epochs: 1,
            seed: 3407,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 {
            return bad(format!("loss weights must be non-negative, got {} / {}", self.w1, self.w2));
        }
        if self.w1 == 0.0 && self.w2 == 0.0 {
            return bad("at least one loss weight must be positive".into());
        }
        if self.lr < 0.0 {
            return bad(format!("learning rate must be non-negative, got {}", self.lr));
        }
        if self.batch_groups == 0 {
            return bad("batch_groups must be at least 1".into());
        }
        Ok(())
    }
}

/// One training group before encoding: texts plus labels.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub group_id: String,
    pub query_text: String,
    pub records: Vec<RecordSpec>,
}

#[derive(Debug, Clone)]
pub struct RecordSpec {
    pub code_id: String,
    pub code_text: String,
    /// Training label (`sim_train`).
    pub label: f64,
    pub positive: bool,
}

/// An encoded batch: unit embeddings for every query and code in a slice of
/// groups. Invariant (checked): every group has exactly one positive.
#[derive(Debug, Clone)]
pub struct Batch {
    pub groups: Vec<BatchGroup>,
}

#[derive(Debug, Clone)]
pub struct BatchGroup {
    pub group_id: String,
    pub query_text: String,
    pub query: Vec<f64>,
    pub records: Vec<BatchRecord>,
}

#[derive(Debug, Clone)]
pub struct BatchRecord {
    pub code_id: String,
    pub code_text: String,
    pub code: Vec<f64>,
    pub label: f64,
    pub positive: bool,
}

impl Batch {
    /// Encode all texts of `specs` under `model`.
    pub fn encode(model: &EncoderModel, specs: &[GroupSpec]) -> Result<Batch> {
        let mut groups = Vec::with_capacity(specs.len());
        for s in specs {
            let positives = s.records.iter().filter(|r| r.positive).count();
            if positives != 1 {
                return Err(Error::InvalidArgument(format!(
                    "group {} has {positives} positives; exactly one required",
                    s.group_id
                )));
            }
            let query = model.encode(&s.query_text)?;
            let mut records = Vec::with_capacity(s.records.len());
            for r in &s.records {
                records.push(BatchRecord {
                    code_id: r.code_id.clone(),
                    code_text: r.code_text.clone(),
                    code: model.encode(&r.code_text)?,
                    label: r.label,
                    positive: r.positive,
                });
            }
            groups.push(BatchGroup {
                group_id: s.group_id.clone(),
                query_text: s.query_text.clone(),
                query,
                records,
            });
        }
        Ok(Batch { groups })
    }
}

/// Turn refined pair records into training group specs.
///
/// Groups keep first-appearance order. Groups with a missing text, no
/// positive, or several positives are skipped with a warning.
pub fn group_specs_from_pairs(
    records: &[PairRecord],
    query_texts: &HashMap<String, String>,
    code_texts: &HashMap<String, String>,
) -> Vec<GroupSpec> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_group: HashMap<&str, Vec<&PairRecord>> = HashMap::new();
    for r in records {
        if !by_group.contains_key(r.group_id.as_str()) {
            order.push(r.group_id.as_str());
        }
        by_group.entry(r.group_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    'groups: for gid in order {
        let members = &by_group[gid];
        if members.iter().filter(|r| r.role == Role::Positive).count() != 1 {
            log::warn!("group {gid} does not have exactly one positive; skipped");
            continue;
        }
        let Some(query_text) = query_texts.get(&members[0].query_id) else {
            log::warn!("group {gid} query text missing; skipped");
            continue;
        };
        let mut specs = Vec::with_capacity(members.len());
        for r in members.iter() {
            let Some(code_text) = code_texts.get(&r.code_id) else {
                log::warn!("group {gid} code text {} missing; group skipped", r.code_id);
                continue 'groups;
            };
            specs.push(RecordSpec {
                code_id: r.code_id.clone(),
                code_text: code_text.clone(),
                label: r.sim_train,
                positive: r.role == Role::Positive,
            });
        }
        out.push(GroupSpec { group_id: gid.to_string(), query_text: query_text.clone(), records: specs });
    }
    out
}

/// Loss values recorded at one optimization step.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub infonce: f64,
    pub cosent: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EncoderModel,
    pub curve: Vec<StepLoss>,
}

/// Accumulate parameter gradients for a whole batch by re-running the
/// forward pass per text and chaining the embedding gradients through it.
pub fn batch_param_grads(
    model: &EncoderModel,
    batch: &Batch,
    grads: &BatchGrads,
) -> Result<ParamGrads> {
    let mut out = ParamGrads::zeros_like(model);
    for (gi, g) in batch.groups.iter().enumerate() {
        let trace = model.forward(&g.query_text)?;
        model.backward(&trace, &grads.d_query[gi], &mut out);
        for (ri, r) in g.records.iter().enumerate() {
            let trace = model.forward(&r.code_text)?;
            model.backward(&trace, &grads.d_code[gi][ri], &mut out);
        }
    }
    Ok(out)
}

/// Train the encoder.
///
/// Groups are shuffled once per epoch with a seed derived from
/// `cfg.seed` and the epoch index, then consumed in fixed-size batches
/// (the last batch may be smaller). Bit-identical across runs for the same
/// inputs, config, and seed. A non-finite loss aborts with a diagnostic
/// listing the offending step and groups.
pub fn train(specs: &[GroupSpec], model: EncoderModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::NoGroups);
    }
    let mut model = model;
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &model);
    let mut curve = Vec::new();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..specs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("epoch-{epoch}")));
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_groups) {
            let batch_specs: Vec<GroupSpec> = chunk.iter().map(|&i| specs[i].clone()).collect();
            let batch = Batch::encode(&model, &batch_specs)?;
            let hybrid = loss_hybrid(&batch, cfg)?;
            if !hybrid.total.is_finite() {
                let ids: Vec<&str> = batch_specs.iter().map(|s| s.group_id.as_str()).collect();
                log::error!(
                    "non-finite loss at step {step} (epoch {epoch}): total={} contrastive={} order={} groups={ids:?}",
                    hybrid.total,
                    hybrid.infonce,
                    hybrid.cosent
                );
                return Err(Error::NonFinite(format!("loss at step {step}")));
            }
            let grads = batch_param_grads(&model, &batch, &hybrid.grads)?;
            opt.apply(&mut model, &grads, cfg.lr);
            step += 1;
            curve.push(StepLoss {
                step,
                infonce: hybrid.infonce,
                cosent: hybrid.cosent,
                total: hybrid.total,
            });
        }
    }
    Ok(TrainOutcome { model, curve })
}

/// Render the loss curve in the CSV layout used by the train stage.
pub fn curve_to_csv(curve: &[StepLoss]) -> String {
    let mut out = String::from("step,L_ibn,L_cos,L\n");
    for s in curve {
        out.push_str(&format!("{},{},{},{}\n", s.step, s.infonce, s.cosent, s.total));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(gid: &str, query: &str, codes: &[(&str, f64, bool)]) -> GroupSpec {
        GroupSpec {
            group_id: gid.to_string(),
            query_text: query.to_string(),
            records: codes
                .iter()
                .map(|(text, label, positive)| RecordSpec {
                    code_id: format!("c:{text}"),
                    code_text: text.to_string(),
                    label: *label,
                    positive: *positive,
                })
                .collect(),
        }
    }

    #[test]
    fn encode_is_unit_norm_and_deterministic() {
        let m = EncoderModel::new(128, 16, Pooling::Mean, 7);
        let a = m.encode("def load(x): return x").unwrap();
        let b = m.encode("def load(x): return x").unwrap();
        assert_eq!(a, b);
        assert!((l2_norm(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn identity_model_orthogonal_tokens() {
        let m = EncoderModel::identity(64, Pooling::Mean);
        let a = m.encode("alpha").unwrap();
        let b = m.encode("beta").unwrap();
        // Different buckets -> orthogonal unit vectors.
        assert!(crate::vecmath::dot(&a, &b).abs() < 1e-12);
        assert!((l2_norm(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn last_pooling_uses_final_token() {
        let m = EncoderModel::new(256, 8, Pooling::Last, 3);
        let a = m.encode("x y z").unwrap();
        let b = m.encode("entirely different prefix z").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_text_is_an_error() {
        let m = EncoderModel::new(16, 4, Pooling::Mean, 0);
        assert_eq!(m.encode("  \n").unwrap_err().code(), "empty_token_stream");
    }

    #[test]
    fn checkpoint_roundtrip_and_validation() {
        let m = EncoderModel::new(32, 8, Pooling::Last, 11);
        let bytes = m.to_bytes();
        let back = EncoderModel::from_bytes(&bytes).unwrap();
        assert_eq!(m, back);

        // Corrupt magic.
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(EncoderModel::from_bytes(&bad).unwrap_err().code(), "checkpoint");
        // Truncated payload.
        assert_eq!(
            EncoderModel::from_bytes(&bytes[..bytes.len() - 8]).unwrap_err().code(),
            "checkpoint"
        );
    }

    #[test]
    fn batch_requires_single_positive() {
        let m = EncoderModel::new(64, 8, Pooling::Mean, 1);
        let no_pos = spec("g", "query text", &[("code a", 0.4, false)]);
        assert!(Batch::encode(&m, &[no_pos]).is_err());
        let two_pos = spec("g", "query text", &[("a", 1.0, true), ("b", 1.0, true)]);
        assert!(Batch::encode(&m, &[two_pos]).is_err());
        let ok = spec("g", "query text", &[("a", 1.0, true), ("b", 0.2, false)]);
        assert!(Batch::encode(&m, &[ok]).is_ok());
    }

    #[test]
    fn group_specs_preserve_order_and_skip_broken_groups() {
        use crate::synth::Refinement;
        let mk = |gid: &str, cid: &str, role: Role| PairRecord {
            pair_id: format!("{gid}|{cid}"),
            group_id: gid.into(),
            query_id: format!("q:{gid}"),
            code_id: cid.into(),
            role,
            sim_annotated: Some(0.5),
            sim_train: if role == Role::Positive { 1.0 } else { 0.5 },
            refinement: Refinement::None,
        };
        let records = vec![
            mk("g1", "c1", Role::Positive),
            mk("g1", "c2", Role::Negative),
            mk("g2", "c3", Role::Negative), // no positive -> skipped
            mk("g3", "c4", Role::Positive),
        ];
        let mut q = HashMap::new();
        q.insert("q:g1".to_string(), "query one".to_string());
        q.insert("q:g2".to_string(), "query two".to_string());
        q.insert("q:g3".to_string(), "query three".to_string());
        let mut c = HashMap::new();
        for cid in ["c1", "c2", "c3", "c4"] {
            c.insert(cid.to_string(), format!("code {cid}"));
        }
        let specs = group_specs_from_pairs(&records, &q, &c);
        let ids: Vec<_> = specs.iter().map(|s| s.group_id.as_str()).collect();
        assert_eq!(ids, vec!["g1", "g3"]);
        assert_eq!(specs[0].records.len(), 2);
        assert!(specs[0].records[0].positive);
    }

    #[test]
    fn train_zero_lr_keeps_parameters() {
        let specs = vec![
            spec("g1", "find the parser", &[("def parse(s): return s", 1.0, true), ("def other(): pass", 0.3, false)]),
            spec("g2", "open a file", &[("def open_file(p): return p", 1.0, true), ("def parse(s): return s", 0.4, false)]),
        ];
        let model = EncoderModel::new(128, 8, Pooling::Mean, 5);
        let before = model.clone();
        let cfg = TrainConfig { lr: 0.0, epochs: 2, ..TrainConfig::default() };
        let out = train(&specs, model, &cfg).unwrap();
        assert_eq!(out.model, before);
        assert_eq!(out.curve.len(), 2); // 2 groups fit in one batch, 2 epochs
        assert!(out.curve.iter().all(|s| s.total.is_finite()));
    }

    #[test]
    fn train_is_bit_identical_across_runs() {
        let specs: Vec<GroupSpec> = (0..6)
            .map(|i| {
                spec(
                    &format!("g{i}"),
                    &format!("performs operation number {i}"),
                    &[
                        (&*format!("def op{i}(x): return x + {i}"), 1.0, true),
                        (&*format!("def other{i}(y): return y * {i}"), 0.3, false),
                        ("def unrelated(z): return z", 0.2, false),
                    ],
                )
            })
            .collect();
        let cfg = TrainConfig { batch_groups: 2, epochs: 2, ..TrainConfig::default() };
        let m1 = train(&specs, EncoderModel::new(256, 16, Pooling::Mean, 9), &cfg).unwrap();
        let m2 = train(&specs, EncoderModel::new(256, 16, Pooling::Mean, 9), &cfg).unwrap();
        assert_eq!(m1.model.to_bytes(), m2.model.to_bytes());
        assert_eq!(m1.curve, m2.curve);
        // Different seed, different shuffle -> different parameters.
        let cfg2 = TrainConfig { seed: 4, ..cfg };
        let m3 = train(&specs, EncoderModel::new(256, 16, Pooling::Mean, 9), &cfg2).unwrap();
        assert_ne!(m1.model.to_bytes(), m3.model.to_bytes());
    }

    #[test]
    fn curve_csv_layout() {
        let curve = vec![StepLoss { step: 1, infonce: 0.5, cosent: 0.25, total: 0.495 }];
        let csv = curve_to_csv(&curve);
        assert_eq!(csv, "step,L_ibn,L_cos,L\n1,0.5,0.25,0.495\n");
    }
}
