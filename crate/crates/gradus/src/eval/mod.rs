//! Retrieval evaluation: rank candidates per query and score with MRR@k and
//! MAP, plus utilities for hard-query analysis across models.

pub mod grid;
pub mod mds;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::HashedBagAnnotator;
use crate::train::EncoderModel;
use crate::vecmath::cosine;

pub use grid::{grid_search_delta_s, GridContext, GridReport, GridRow};
pub use mds::mds_coords;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalQuery {
    pub query_id: String,
    pub text: String,
    /// Candidate ids counted as relevant for this query.
    pub target_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalCandidate {
    pub code_id: String,
    pub text: String,
}

/// One line of an evaluation dataset file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalLine {
    Query(EvalQuery),
    Candidate(EvalCandidate),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalDataset {
    pub queries: Vec<EvalQuery>,
    pub candidates: Vec<EvalCandidate>,
}

impl EvalDataset {
    /// Check invariants: unique ids, non-empty target sets, and every
    /// target present among the candidates.
    pub fn validate(&self) -> Result<()> {
        let mut cand_ids = HashSet::new();
        for c in &self.candidates {
            if !cand_ids.insert(c.code_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate candidate id {}",
                    c.code_id
                )));
            }
        }
        let mut qids = HashSet::new();
        for q in &self.queries {
            if !qids.insert(q.query_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate query id {}", q.query_id)));
            }
            if q.target_ids.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "query {} has no target ids",
                    q.query_id
                )));
            }
            for t in &q.target_ids {
                if !cand_ids.contains(t.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "query {} targets unknown candidate {t}",
                        q.query_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.queries {
            out.push_str(&serde_json::to_string(&EvalLine::Query(q.clone())).expect("serialize"));
            out.push('\n');
        }
        for c in &self.candidates {
            out.push_str(
                &serde_json::to_string(&EvalLine::Candidate(c.clone())).expect("serialize"),
            );
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut ds = EvalDataset::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: EvalLine = serde_json::from_str(line).map_err(|e| {
                Error::InvalidArgument(format!("evaluation dataset line {}: {e}", i + 1))
            })?;
            match parsed {
                EvalLine::Query(q) => ds.queries.push(q),
                EvalLine::Candidate(c) => ds.candidates.push(c),
            }
        }
        ds.validate()?;
        Ok(ds)
    }
}

/// Anything that can embed a text for ranking.
pub trait TextEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

impl TextEmbedder for EncoderModel {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.encode(text)
    }
}

impl TextEmbedder for HashedBagAnnotator {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.embed_one(text)
    }
}

/// The full candidate ordering for one query (indices into the dataset's
/// candidate list, best first).
#[derive(Debug, Clone)]
pub struct RankedList {
    pub query_id: String,
    pub ordering: Vec<usize>,
}

/// Embed everything and rank every candidate for every query by cosine,
/// descending; ties broken by candidate id ascending.
pub fn rank_candidates(
    embedder: &dyn TextEmbedder,
    ds: &EvalDataset,
) -> Result<Vec<RankedList>> {
    if ds.candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if ds.queries.is_empty() {
        return Err(Error::NoQueries);
    }
    let cand_vecs: Vec<Vec<f64>> = ds
        .candidates
        .iter()
        .map(|c| embedder.embed_text(&c.text))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(ds.queries.len());
    for q in &ds.queries {
        let qv = embedder.embed_text(&q.text)?;
        let scores: Vec<f64> = cand_vecs.iter().map(|cv| cosine(&qv, cv)).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score for query {}", q.query_id)));
        }
        let mut ordering: Vec<usize> = (0..ds.candidates.len()).collect();
        ordering.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| ds.candidates[a].code_id.cmp(&ds.candidates[b].code_id))
        });
        out.push(RankedList { query_id: q.query_id.clone(), ordering });
    }
    Ok(out)
}

/// 1-based rank of the best-ranked relevant candidate, if any.
pub fn first_target_rank(ordering: &[usize], relevant: &HashSet<usize>) -> Option<usize> {
    ordering.iter().position(|i| relevant.contains(i)).map(|p| p + 1)
}

/// Mean reciprocal rank at cutoff `k`: a first-relevant rank beyond `k`
/// contributes exactly 0.
pub fn mrr_at_k(first_ranks: &[usize], k: usize) -> Result<f64> {
    if first_ranks.is_empty() {
        return Err(Error::NoQueries);
    }
    let sum: f64 =
        first_ranks.iter().map(|&r| if r <= k { 1.0 / r as f64 } else { 0.0 }).sum();
    Ok(sum / first_ranks.len() as f64)
}

/// Average precision of one ranking against a relevant set, divided by the
/// size of the relevant set.
pub fn average_precision(ordering: &[usize], relevant: &HashSet<usize>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (pos, idx) in ordering.iter().enumerate() {
        if relevant.contains(idx) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// Mean average precision over queries.
pub fn map_metric(orderings: &[Vec<usize>], relevant: &[HashSet<usize>]) -> Result<f64> {
    if orderings.len() != relevant.len() {
        return Err(Error::MismatchedQuerySets);
    }
    if orderings.is_empty() {
        return Err(Error::NoQueries);
    }
    let sum: f64 =
        orderings.iter().zip(relevant).map(|(o, r)| average_precision(o, r)).sum();
    Ok(sum / orderings.len() as f64)
}

/// Evaluation results for one model on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    /// MRR at `k_cutoff`, in [0, 1].
    pub mrr: f64,
    /// Same value scaled to percent, for table display.
    pub mrr_percent: f64,
    pub map: f64,
    pub k_cutoff: usize,
    pub query_count: usize,
    pub candidate_count: usize,
    /// First-relevant rank per query; `None` when it falls beyond the
    /// cutoff.
    pub per_query_rank: BTreeMap<String, Option<usize>>,
    /// Query ids every compared model ranked imperfectly; filled by
    /// [`hard_subset`], empty for a single report.
    pub hard_subset: Vec<String>,
}

/// Rank and score one embedder over a dataset.
pub fn evaluate(
    embedder: &dyn TextEmbedder,
    ds: &EvalDataset,
    k_cutoff: usize,
) -> Result<EvalReport> {
    ds.validate()?;
    let ranked = rank_candidates(embedder, ds)?;
    let index_of: HashMap<&str, usize> = ds
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.code_id.as_str(), i))
        .collect();
    let mut first_ranks = Vec::with_capacity(ds.queries.len());
    let mut per_query = BTreeMap::new();
    let mut orderings = Vec::with_capacity(ds.queries.len());
    let mut relevant_sets = Vec::with_capacity(ds.queries.len());
    for (q, r) in ds.queries.iter().zip(&ranked) {
        let relevant: HashSet<usize> =
            q.target_ids.iter().map(|t| index_of[t.as_str()]).collect();
        let rank = first_target_rank(&r.ordering, &relevant)
            .expect("validated targets are always retrieved");
        first_ranks.push(rank);
        per_query.insert(q.query_id.clone(), (rank <= k_cutoff).then_some(rank));
        orderings.push(r.ordering.clone());
        relevant_sets.push(relevant);
    }
    let mrr = mrr_at_k(&first_ranks, k_cutoff)?;
    let map = map_metric(&orderings, &relevant_sets)?;
    Ok(EvalReport {
        mrr,
        mrr_percent: mrr * 100.0,
        map,
        k_cutoff,
        query_count: ds.queries.len(),
        candidate_count: ds.candidates.len(),
        per_query_rank: per_query,
        hard_subset: Vec::new(),
    })
}

/// Queries that no compared model ranked perfectly: every report's
/// first-relevant rank is greater than 1. Reports must cover the same
/// query set. Returns sorted query ids.
pub fn hard_subset(reports: &[&EvalReport]) -> Result<Vec<String>> {
    let (first, rest) = match reports {
        [first, rest @ ..] if !rest.is_empty() => (first, rest),
        _ => {
            return Err(Error::InvalidArgument(
                "hard subset needs at least two reports".into(),
            ))
        }
    };
    for r in rest {
        if r.per_query_rank.len() != first.per_query_rank.len()
            || !r.per_query_rank.keys().eq(first.per_query_rank.keys())
        {
            return Err(Error::MismatchedQuerySets);
        }
    }
    Ok(first
        .per_query_rank
        .keys()
        .filter(|q| {
            reports
                .iter()
                .all(|r| r.per_query_rank[*q].is_none_or(|rank| rank > 1))
        })
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedEmbedder(HashMap<String, Vec<f64>>);
    impl TextEmbedder for FixedEmbedder {
        fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
            self.0
                .get(text)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("no vector for {text:?}")))
        }
    }

    fn ds_and_embedder() -> (EvalDataset, FixedEmbedder) {
        let ds = EvalDataset {
            queries: vec![EvalQuery {
                query_id: "q1".into(),
                text: "Q".into(),
                target_ids: vec!["b".into()],
            }],
            candidates: vec![
                EvalCandidate { code_id: "a".into(), text: "A".into() },
                EvalCandidate { code_id: "b".into(), text: "B".into() },
                EvalCandidate { code_id: "c".into(), text: "C".into() },
            ],
        };
        let mut vecs = HashMap::new();
        vecs.insert("Q".to_string(), vec![1.0, 0.0]);
        vecs.insert("A".to_string(), vec![0.9, 0.1]);
        vecs.insert("B".to_string(), vec![1.0, 0.05]);
        vecs.insert("C".to_string(), vec![0.0, 1.0]);
        (ds, FixedEmbedder(vecs))
    }

    #[test]
    fn ranking_orders_by_cosine_with_id_tiebreak() {
        let (ds, emb) = ds_and_embedder();
        let ranked = rank_candidates(&emb, &ds).unwrap();
        let ids: Vec<&str> =
            ranked[0].ordering.iter().map(|&i| ds.candidates[i].code_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a", "c"]);

        // Exact ties fall back to id order.
        let ds2 = EvalDataset {
            queries: vec![EvalQuery {
                query_id: "q".into(),
                text: "Q".into(),
                target_ids: vec!["z".into()],
            }],
            candidates: vec![
                EvalCandidate { code_id: "z".into(), text: "T".into() },
                EvalCandidate { code_id: "y".into(), text: "T".into() },
                EvalCandidate { code_id: "x".into(), text: "T".into() },
            ],
        };
        let mut vecs = HashMap::new();
        vecs.insert("Q".to_string(), vec![1.0, 0.0]);
        vecs.insert("T".to_string(), vec![0.5, 0.5]);
        let ranked = rank_candidates(&FixedEmbedder(vecs), &ds2).unwrap();
        let ids: Vec<&str> =
            ranked[0].ordering.iter().map(|&i| ds2.candidates[i].code_id.as_str()).collect();
        assert_eq!(ids, vec!["x", "y", "z"]);
    }

    #[test]
    fn mrr_exact_values() {
        // Ranks 1, 2, 4 -> (1 + 1/2 + 1/4)/3 = 0.5833...
        let got = mrr_at_k(&[1, 2, 4], 10).unwrap();
        assert!((got - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        // Rank beyond the cutoff contributes exactly zero.
        let got = mrr_at_k(&[1, 1001], 1000).unwrap();
        assert_eq!(got, 0.5);
        // Cutoff boundary inclusive.
        let got = mrr_at_k(&[1000], 1000).unwrap();
        assert_eq!(got, 1.0 / 1000.0);
        assert_eq!(mrr_at_k(&[], 10).unwrap_err().code(), "no_queries");
    }

    #[test]
    fn average_precision_examples() {
        // Relevant items at ranks 1 and 3 of the ordering.
        let ordering = vec![7, 5, 9, 4];
        let relevant: HashSet<usize> = [7, 9].into_iter().collect();
        let ap = average_precision(&ordering, &relevant);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);

        // Single relevant item at rank 2.
        let relevant: HashSet<usize> = [5].into_iter().collect();
        assert_eq!(average_precision(&ordering, &relevant), 0.5);
    }

    #[test]
    fn evaluate_end_to_end() {
        let (ds, emb) = ds_and_embedder();
        let report = evaluate(&emb, &ds, 1000).unwrap();
        assert_eq!(report.per_query_rank["q1"], Some(1));
        assert_eq!(report.mrr, 1.0);
        assert_eq!(report.mrr_percent, 100.0);
        assert_eq!(report.map, 1.0);
        assert_eq!(report.query_count, 1);
        assert_eq!(report.candidate_count, 3);
    }

    #[test]
    fn hard_subset_requires_all_models_imperfect() {
        let mk = |ranks: &[(&str, Option<usize>)]| EvalReport {
            mrr: 0.0,
            mrr_percent: 0.0,
            map: 0.0,
            k_cutoff: 10,
            query_count: ranks.len(),
            candidate_count: 5,
            per_query_rank: ranks.iter().map(|(q, r)| (q.to_string(), *r)).collect(),
            hard_subset: Vec::new(),
        };
        let a = mk(&[("q1", Some(1)), ("q2", Some(3)), ("q3", Some(2))]);
        let b = mk(&[("q1", Some(2)), ("q2", None), ("q3", Some(1))]);
        // q1: a perfect. q3: b perfect. q2: both imperfect (one beyond the
        // cutoff entirely).
        assert_eq!(hard_subset(&[&a, &b]).unwrap(), vec!["q2".to_string()]);

        let c = mk(&[("q1", Some(2)), ("qX", Some(5)), ("q3", Some(1))]);
        assert_eq!(hard_subset(&[&a, &c]).unwrap_err().code(), "mismatched_query_sets");
        assert_eq!(hard_subset(&[&a]).unwrap_err().code(), "invalid_argument");
    }

    #[test]
    fn dataset_validation_and_roundtrip() {
        let (ds, _) = ds_and_embedder();
        assert!(ds.validate().is_ok());
        let text = ds.to_jsonl();
        let back = EvalDataset::from_jsonl(&text).unwrap();
        assert_eq!(ds, back);

        let mut bad = ds.clone();
        bad.queries[0].target_ids = vec!["nope".into()];
        assert!(bad.validate().is_err());
        let mut dup = ds.clone();
        dup.candidates.push(dup.candidates[0].clone());
        assert!(dup.validate().is_err());
        let mut empty_targets = ds;
        empty_targets.queries[0].target_ids.clear();
        assert!(empty_targets.validate().is_err());
    }

    #[test]
    fn empty_dataset_errors() {
        let emb = FixedEmbedder(HashMap::new());
        let ds = EvalDataset::default();
        assert_eq!(rank_candidates(&emb, &ds).unwrap_err().code(), "empty_candidates");
        let ds = EvalDataset {
            queries: vec![],
            candidates: vec![EvalCandidate { code_id: "a".into(), text: "A".into() }],
        };
        assert_eq!(rank_candidates(&emb, &ds).unwrap_err().code(), "no_queries");
    }
}
