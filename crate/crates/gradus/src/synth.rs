//! Training-pair synthesis: negative mining, similarity annotation, and
//! group assembly.
//!
//! Every docstring query becomes one group: its origin function as the
//! single positive plus `K` same-repository negatives sampled without
//! replacement. A [`SimilarityAnnotator`] then scores each (query, code)
//! pair with a graded similarity in `[0, 1)`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocQuery, FunctionUnit};
use crate::error::{Error, Result};
use crate::text::{derive_seed, hash_bucket, tokenize, MAX_BELOW_ONE};
use crate::vecmath::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Positive,
    Negative,
}

/// How a pair's training label came to differ (or not) from its annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Untouched by refinement.
    None,
    /// Flagged by the similarity-threshold rule; not adjusted.
    ThresholdSelected,
    /// Flagged by the structural-distance rule; not adjusted.
    AstSelected,
    /// Flagged by both rules; not adjusted.
    BothSelected,
    /// Flagged, confirmed by the judge, and its training label scaled up.
    Adjusted,
}

/// One (query, code) training pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairRecord {
    pub pair_id: String,
    pub group_id: String,
    pub query_id: String,
    pub code_id: String,
    pub role: Role,
    /// Graded similarity from the annotator, in `[0, 1)`. `None` until the
    /// annotation stage has run.
    pub sim_annotated: Option<f64>,
    /// Label used by the training objective. Positives are pinned to 1.0;
    /// negatives start at their annotated similarity.
    pub sim_train: f64,
    pub refinement: Refinement,
}

impl PairRecord {
    pub fn is_positive(&self) -> bool {
        self.role == Role::Positive
    }
}

/// Embeds texts so pair similarity can be scored as a mapped cosine.
pub trait SimilarityAnnotator: Send + Sync {
    /// Embed a batch of texts. All vectors must share one dimension.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Map a cosine in `[-1, 1]` to a similarity label in `[0, 1)`.
///
/// `(1 + cos) / 2`, clamped so that even identical texts stay strictly
/// below 1.0 — the exact label 1.0 is reserved for training positives.
pub fn similarity_label(cos: f64) -> f64 {
    ((1.0 + cos) / 2.0).clamp(0.0, MAX_BELOW_ONE)
}

/// Offline annotator: feature-hashed bag-of-tokens embedding.
///
/// Tokens are hashed into `buckets` slots (FNV-1a modulo), counted, and the
/// count vector is L2-normalized. Deterministic and dependency-free; a
/// stand-in for a learned embedding service with the same interface.
#[derive(Debug, Clone, Copy)]
pub struct HashedBagAnnotator {
    pub buckets: usize,
}

impl Default for HashedBagAnnotator {
    fn default() -> Self {
        HashedBagAnnotator { buckets: 4096 }
    }
}

impl HashedBagAnnotator {
    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyTokenStream);
        }
        let mut v = vec![0.0f64; self.buckets];
        for t in &tokens {
            v[hash_bucket(t, self.buckets)] += 1.0;
        }
        let norm = crate::vecmath::l2_norm(&v);
        crate::vecmath::scale(&mut v, 1.0 / norm);
        Ok(v)
    }
}

impl SimilarityAnnotator for HashedBagAnnotator {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Sample up to `k` negative function ids for a query, without replacement,
/// from the query's own repository (origin excluded).
///
/// Candidates are considered in sorted-id order and shuffled with a stream
/// cipher RNG seeded by `seed`, so the draw depends only on the candidate
/// set and the seed, not on input order.
pub fn mine_negatives(
    query: &DocQuery,
    repo_units: &[FunctionUnit],
    k: usize,
    seed: u64,
) -> Vec<String> {
    let mut candidates: Vec<&str> = repo_units
        .iter()
        .filter(|u| u.func_id != query.func_id)
        .map(|u| u.func_id.as_str())
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() {
        log::warn!("query {} has no negative candidates in its repository", query.query_id);
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(k);
    candidates.into_iter().map(String::from).collect()
}

/// Assemble unannotated groups: one positive plus mined negatives per query.
///
/// Per-query sampling seeds derive from `global_seed` and the query id, so
/// any subset of queries reproduces identically. Queries whose origin
/// function is missing are skipped with a warning.
pub fn build_unannotated_groups(
    queries: &[DocQuery],
    units: &[FunctionUnit],
    k: usize,
    global_seed: u64,
) -> Vec<PairRecord> {
    let by_id: HashMap<&str, &FunctionUnit> =
        units.iter().map(|u| (u.func_id.as_str(), u)).collect();
    let mut by_repo: HashMap<&str, Vec<&FunctionUnit>> = HashMap::new();
    for u in units {
        by_repo.entry(u.repo_id.as_str()).or_default().push(u);
    }

    let mut out = Vec::new();
    for q in queries {
        let Some(origin) = by_id.get(q.func_id.as_str()) else {
            log::warn!("query {} references missing function {}; skipped", q.query_id, q.func_id);
            continue;
        };
        let repo_units: Vec<FunctionUnit> = by_repo
            .get(origin.repo_id.as_str())
            .map(|v| v.iter().map(|u| (*u).clone()).collect())
            .unwrap_or_default();
        let seed = derive_seed(global_seed, &q.query_id);
        let negatives = mine_negatives(q, &repo_units, k, seed);
        let group_id = q.query_id.clone();
        out.push(PairRecord {
            pair_id: format!("{group_id}|{}", q.func_id),
            group_id: group_id.clone(),
            query_id: q.query_id.clone(),
            code_id: q.func_id.clone(),
            role: Role::Positive,
            sim_annotated: None,
            sim_train: 1.0,
            refinement: Refinement::None,
        });
        for neg in negatives {
            out.push(PairRecord {
                pair_id: format!("{group_id}|{neg}"),
                group_id: group_id.clone(),
                query_id: q.query_id.clone(),
                code_id: neg,
                role: Role::Negative,
                sim_annotated: None,
                sim_train: 0.0,
                refinement: Refinement::None,
            });
        }
    }
    out
}

/// Score every pair with the annotator.
///
/// Each unique text is embedded once (in first-appearance order, so batch
/// boundaries are deterministic). Positives keep `sim_train = 1.0`;
/// negatives get their annotated similarity as the initial training label.
/// Pairs whose query or code text is missing, or whose text the annotator
/// rejects, are dropped with a warning.
pub fn annotate_pairs(
    pairs: Vec<PairRecord>,
    annotator: &dyn SimilarityAnnotator,
    query_texts: &HashMap<String, String>,
    code_texts: &HashMap<String, String>,
) -> Result<Vec<PairRecord>> {
    let mut unique: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for p in &pairs {
        for text in [
            query_texts.get(&p.query_id).map(String::as_str),
            code_texts.get(&p.code_id).map(String::as_str),
        ]
        .into_iter()
        .flatten()
        {
            if !index.contains_key(text) {
                index.insert(text, unique.len());
                unique.push(text);
            }
        }
    }
    let owned: Vec<String> = unique.iter().map(|s| s.to_string()).collect();
    let vectors = annotator.embed_batch(&owned)?;
    if vectors.len() != owned.len() {
        return Err(Error::Backend(format!(
            "annotator returned {} vectors for {} texts",
            vectors.len(),
            owned.len()
        )));
    }

    let mut out = Vec::with_capacity(pairs.len());
    for mut p in pairs {
        let (Some(qt), Some(ct)) = (query_texts.get(&p.query_id), code_texts.get(&p.code_id))
        else {
            log::warn!("pair {} references missing text; dropped", p.pair_id);
            continue;
        };
        let qv = &vectors[index[qt.as_str()]];
        let cv = &vectors[index[ct.as_str()]];
        let sim = similarity_label(cosine(qv, cv));
        if !sim.is_finite() {
            log::warn!("pair {} got a non-finite similarity; dropped", p.pair_id);
            continue;
        }
        p.sim_annotated = Some(sim);
        if p.role == Role::Negative {
            p.sim_train = sim;
        } else {
            p.sim_train = 1.0;
        }
        out.push(p);
    }
    Ok(out)
}

/// Mine and annotate in one step: the full group-construction operation.
pub fn build_groups(
    queries: &[DocQuery],
    units: &[FunctionUnit],
    k: usize,
    global_seed: u64,
    annotator: &dyn SimilarityAnnotator,
) -> Result<Vec<PairRecord>> {
    let pairs = build_unannotated_groups(queries, units, k, global_seed);
    let query_texts: HashMap<String, String> = queries
        .iter()
        .map(|q| (q.query_id.clone(), q.text.clone()))
        .collect();
    let code_texts: HashMap<String, String> =
        units.iter().map(|u| (u.func_id.clone(), u.source.clone())).collect();
    annotate_pairs(pairs, annotator, &query_texts, &code_texts)
}
