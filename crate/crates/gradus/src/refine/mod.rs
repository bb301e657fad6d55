//! Label refinement: find negatives whose annotated similarity is suspect,
//! confirm them with a preference judge, and scale up the training labels
//! of the confirmed ones.
//!
//! Two selection strategies feed one adjudication step:
//! - threshold: annotated similarity above the mixture boundary `s*` or
//!   above the group positive's own similarity;
//! - structure: normalized tree edit distance to the group positive below a
//!   ratio cap.
//!
//! Confirmed pairs get `sim_train = min(sim_annotated * (1 + delta_s),
//! 0.999)`; roles never change.

pub mod gmm;
pub mod ted;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use gmm::{
    fit_gmm_1d, intersection_threshold, intersection_threshold_weighted, MixtureFit,
};
pub use ted::{normalized_tree_edit_distance, tree_edit_distance};

use crate::ast::AstTree;
use crate::error::{Error, Result};
use crate::synth::{PairRecord, Refinement, Role};

/// Cap applied to adjusted training labels.
pub const ADJUST_CAP: f64 = 0.999;

/// Decides whether a candidate code snippet also satisfies a docstring that
/// the group's positive snippet satisfies.
pub trait PreferenceJudge: Send + Sync {
    fn candidate_satisfies(
        &self,
        docstring: &str,
        positive_code: &str,
        candidate_code: &str,
    ) -> Result<bool>;
}

/// Offline judge: token-set overlap relative to the positive's overlap.
///
/// The candidate passes when `J(doc, candidate) > accept_fraction * J(doc,
/// positive)` where `J` is Jaccard similarity over lowercased token sets.
#[derive(Debug, Clone, Copy)]
pub struct OverlapJudge {
    pub accept_fraction: f64,
}

impl Default for OverlapJudge {
    fn default() -> Self {
        OverlapJudge { accept_fraction: 0.8 }
    }
}

fn jaccard(a: &str, b: &str) -> f64 {
    let sa: HashSet<String> = crate::text::tokenize(a).into_iter().collect();
    let sb: HashSet<String> = crate::text::tokenize(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

impl PreferenceJudge for OverlapJudge {
    fn candidate_satisfies(
        &self,
        docstring: &str,
        positive_code: &str,
        candidate_code: &str,
    ) -> Result<bool> {
        let jc = jaccard(docstring, candidate_code);
        let jp = jaccard(docstring, positive_code);
        Ok(jc > self.accept_fraction * jp)
    }
}

/// Select negatives whose annotated similarity exceeds `s_star` or exceeds
/// their group positive's annotated similarity. Marks them
/// `threshold_selected` and returns their pair ids in input order.
///
/// Groups lacking an annotated positive are skipped with a warning.
pub fn select_threshold_candidates(pairs: &mut [PairRecord], s_star: f64) -> Vec<String> {
    let mut pos_sim: HashMap<String, f64> = HashMap::new();
    for p in pairs.iter() {
        if p.role == Role::Positive {
            if let Some(s) = p.sim_annotated {
                pos_sim.insert(p.group_id.clone(), s);
            }
        }
    }
    let mut selected = Vec::new();
    for p in pairs.iter_mut() {
        if p.role != Role::Negative {
            continue;
        }
        let Some(sim) = p.sim_annotated else { continue };
        let Some(&ps) = pos_sim.get(p.group_id.as_str()) else {
            log::warn!("group {} has no annotated positive; skipped by threshold rule", p.group_id);
            continue;
        };
        if sim > s_star || sim > ps {
            p.refinement = Refinement::ThresholdSelected;
            selected.push(p.pair_id.clone());
        }
    }
    selected
}

/// Select negatives structurally close to their group's positive: normalized
/// tree edit distance below `ratio_max`. Marks them `ast_selected`, or
/// upgrades an existing `threshold_selected` mark to `both_selected`.
/// Returns selected pair ids in input order.
///
/// Pairs whose positive or candidate code has no parse tree are skipped.
pub fn select_ast_candidates(
    pairs: &mut [PairRecord],
    trees: &HashMap<String, AstTree>,
    ratio_max: f64,
) -> Vec<String> {
    let mut pos_code: HashMap<String, String> = HashMap::new();
    for p in pairs.iter() {
        if p.role == Role::Positive {
            pos_code.insert(p.group_id.clone(), p.code_id.clone());
        }
    }
    // Distances are pure functions of the two trees; compute the distinct
    // (positive, candidate) combinations once.
    let mut jobs: Vec<(String, String)> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for p in pairs.iter() {
        if p.role != Role::Negative {
            continue;
        }
        let Some(pc) = pos_code.get(p.group_id.as_str()) else { continue };
        if trees.contains_key(pc) && trees.contains_key(&p.code_id) {
            let key = (pc.clone(), p.code_id.clone());
            if seen.insert(key.clone()) {
                jobs.push(key);
            }
        }
    }
    use rayon::prelude::*;
    let ratios: HashMap<(String, String), f64> = jobs
        .par_iter()
        .map(|(a, b)| {
            let r = normalized_tree_edit_distance(&trees[a], &trees[b]);
            ((a.clone(), b.clone()), r)
        })
        .collect();

    let mut selected = Vec::new();
    for p in pairs.iter_mut() {
        if p.role != Role::Negative {
            continue;
        }
        let Some(pc) = pos_code.get(p.group_id.as_str()) else {
            log::warn!("group {} has no positive; skipped by structure rule", p.group_id);
            continue;
        };
        if !trees.contains_key(pc) || !trees.contains_key(&p.code_id) {
            log::warn!("pair {} lacks a parse tree; skipped by structure rule", p.pair_id);
            continue;
        }
        let ratio = ratios[&(pc.clone(), p.code_id.clone())];
        if ratio < ratio_max {
            p.refinement = match p.refinement {
                Refinement::ThresholdSelected | Refinement::BothSelected => {
                    Refinement::BothSelected
                }
                _ => Refinement::AstSelected,
            };
            selected.push(p.pair_id.clone());
        }
    }
    selected
}

/// Put the selected pairs in front of the judge and scale up the labels of
/// the confirmed ones.
///
/// For each candidate pair (processed in sorted pair-id order) the judge
/// compares the group's positive code against the candidate code under the
/// group's docstring. Confirmed: `sim_train = min(sim_annotated * (1 +
/// delta_s), 0.999)` and the pair is marked `adjusted`. Rejected or failed
/// judgments leave the pair untouched. Roles never change. Returns the ids
/// of adjusted pairs.
pub fn adjudicate_and_adjust(
    candidates: &[String],
    pairs: &mut [PairRecord],
    judge: &dyn PreferenceJudge,
    delta_s: f64,
    query_texts: &HashMap<String, String>,
    code_texts: &HashMap<String, String>,
) -> Result<Vec<String>> {
    if delta_s <= 0.0 {
        return Err(Error::InvalidArgument(format!("delta_s must be positive, got {delta_s}")));
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pos_of_group: HashMap<String, usize> = HashMap::new();
    for (i, p) in pairs.iter().enumerate() {
        index.insert(p.pair_id.clone(), i);
        if p.role == Role::Positive {
            pos_of_group.insert(p.group_id.clone(), i);
        }
    }
    let mut ordered: Vec<&String> = candidates.iter().collect();
    ordered.sort_unstable();
    ordered.dedup();

    let mut adjusted = Vec::new();
    for pair_id in ordered {
        let Some(&i) = index.get(pair_id.as_str()) else {
            log::warn!("candidate {pair_id} not found among pairs; skipped");
            continue;
        };
        if pairs[i].role != Role::Negative {
            continue;
        }
        let Some(&pi) = pos_of_group.get(pairs[i].group_id.as_str()) else {
            log::warn!("group {} has no positive; candidate {pair_id} skipped", pairs[i].group_id);
            continue;
        };
        let (Some(doc), Some(pos_code), Some(cand_code)) = (
            query_texts.get(&pairs[i].query_id),
            code_texts.get(&pairs[pi].code_id),
            code_texts.get(&pairs[i].code_id),
        ) else {
            log::warn!("candidate {pair_id} references missing text; skipped");
            continue;
        };
        match judge.candidate_satisfies(doc, pos_code, cand_code) {
            Ok(true) => {
                let Some(sim) = pairs[i].sim_annotated else {
                    log::warn!("candidate {pair_id} is unannotated; skipped");
                    continue;
                };
                pairs[i].sim_train = (sim * (1.0 + delta_s)).min(ADJUST_CAP);
                pairs[i].refinement = Refinement::Adjusted;
                adjusted.push(pairs[i].pair_id.clone());
            }
            Ok(false) => {}
            Err(err) => {
                log::warn!("judge failed on {pair_id}: {err}; pair left unchanged");
            }
        }
    }
    Ok(adjusted)
}

/// Mean nDCG of one annotator's scores against another's rankings, averaged
/// over groups with at least two items. Gains are exponential in the score
/// (`2^s`), positions discounted by `log2(rank + 1)`.
///
/// `by_a[g][i]` and `by_b[g][i]` score the same item `i` of group `g`.
/// Identical score vectors give exactly 1.0.
pub fn annotator_consistency_ndcg(by_a: &[Vec<f64>], by_b: &[Vec<f64>]) -> Result<f64> {
    if by_a.len() != by_b.len() {
        return Err(Error::MismatchedAnnotations);
    }
    let mut total = 0.0f64;
    let mut groups = 0usize;
    for (ga, gb) in by_a.iter().zip(by_b) {
        if ga.len() != gb.len() {
            return Err(Error::MismatchedAnnotations);
        }
        if ga.len() < 2 {
            continue;
        }
        let dcg_of = |scores: &[f64], order_by: &[f64]| -> f64 {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&i, &j| order_by[j].total_cmp(&order_by[i]).then(i.cmp(&j)));
            idx.iter()
                .enumerate()
                .map(|(rank, &i)| scores[i].exp2() / ((rank + 2) as f64).log2())
                .sum()
        };
        let dcg = dcg_of(ga, gb);
        let idcg = dcg_of(ga, ga);
        if idcg > 0.0 {
            total += dcg / idcg;
            groups += 1;
        }
    }
    if groups == 0 {
        return Err(Error::NoGroups);
    }
    Ok(total / groups as f64)
}

/// Summary of one refinement run, written as `refine.report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    /// Threshold actually applied.
    pub s_star_used: f64,
    /// Intersection threshold of the fitted mixture (logged even when a
    /// configured threshold was applied instead).
    pub s_star_fitted: f64,
    pub mixture: MixtureFit,
    pub total_pairs: usize,
    pub negative_pairs: usize,
    pub threshold_selected: usize,
    pub ast_selected: usize,
    pub selected_both: usize,
    pub adjudicated: usize,
    pub adjusted: usize,
    /// Fractions of negatives, for quick sanity reading.
    pub threshold_fraction: f64,
    pub ast_fraction: f64,
    pub adjusted_fraction: f64,
}

/// Settings for a full refinement pass.
#[derive(Debug, Clone)]
pub struct RefineParams {
    /// Configured threshold; ignored when `use_fitted_threshold`.
    pub s_star: f64,
    pub use_fitted_threshold: bool,
    /// Use mixing-weighted densities for the fitted intersection.
    pub weighted_intersection: bool,
    pub ast_ratio_max: f64,
    pub delta_s: f64,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub seed: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            s_star: 0.4,
            use_fitted_threshold: false,
            weighted_intersection: false,
            ast_ratio_max: 0.25,
            delta_s: 0.1,
            gmm_max_iter: 200,
            gmm_tol: 1e-6,
            seed: 3407,
        }
    }
}

/// Run the full refinement pass over annotated pairs.
///
/// Fits the mixture on all annotated similarities (positives and negatives),
/// applies both selection rules, adjudicates the union of their candidates,
/// and returns the updated pairs plus a report.
pub fn refine_pairs(
    mut pairs: Vec<PairRecord>,
    trees: &HashMap<String, AstTree>,
    judge: &dyn PreferenceJudge,
    params: &RefineParams,
    query_texts: &HashMap<String, String>,
    code_texts: &HashMap<String, String>,
) -> Result<(Vec<PairRecord>, RefineReport)> {
    let sims: Vec<f64> = pairs.iter().filter_map(|p| p.sim_annotated).collect();
    let fit = fit_gmm_1d(&sims, params.gmm_max_iter, params.gmm_tol, params.seed)?;
    let s_star_fitted = if params.weighted_intersection {
        intersection_threshold_weighted(&fit)
    } else {
        fit.s_star
    };
    let s_star_used = if params.use_fitted_threshold { s_star_fitted } else { params.s_star };

    let by_threshold = select_threshold_candidates(&mut pairs, s_star_used);
    let by_ast = select_ast_candidates(&mut pairs, trees, params.ast_ratio_max);

    let mut candidates: Vec<String> = by_threshold.iter().chain(by_ast.iter()).cloned().collect();
    candidates.sort_unstable();
    candidates.dedup();

    let adjusted = adjudicate_and_adjust(
        &candidates,
        &mut pairs,
        judge,
        params.delta_s,
        query_texts,
        code_texts,
    )?;

    let negative_pairs = pairs.iter().filter(|p| p.role == Role::Negative).count();
    let tset: HashSet<&String> = by_threshold.iter().collect();
    let both = by_ast.iter().filter(|id| tset.contains(id)).count();
    let frac = |n: usize| if negative_pairs == 0 { 0.0 } else { n as f64 / negative_pairs as f64 };
    let report = RefineReport {
        s_star_used,
        s_star_fitted,
        mixture: fit,
        total_pairs: pairs.len(),
        negative_pairs,
        threshold_selected: by_threshold.len(),
        ast_selected: by_ast.len(),
        selected_both: both,
        adjudicated: candidates.len(),
        adjusted: adjusted.len(),
        threshold_fraction: frac(by_threshold.len()),
        ast_fraction: frac(by_ast.len()),
        adjusted_fraction: frac(adjusted.len()),
    };
    log::info!(
        "refinement: {}/{} negatives threshold-selected, {} structure-selected, {} adjusted",
        report.threshold_selected,
        report.negative_pairs,
        report.ast_selected,
        report.adjusted
    );
    Ok((pairs, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{PairRecord, Refinement, Role};

    fn pair(group: &str, code: &str, role: Role, sim: f64) -> PairRecord {
        PairRecord {
            pair_id: format!("{group}|{code}"),
            group_id: group.to_string(),
            query_id: format!("q:{group}"),
            code_id: code.to_string(),
            role,
            sim_annotated: Some(sim),
            sim_train: if role == Role::Positive { 1.0 } else { sim },
            refinement: Refinement::None,
        }
    }

    #[test]
    fn threshold_rule_selects_above_s_star_or_above_positive() {
        let mut pairs = vec![
            pair("g1", "p", Role::Positive, 0.62),
            pair("g1", "n1", Role::Negative, 0.55), // above s_star
            pair("g1", "n2", Role::Negative, 0.30), // below both
            pair("g1", "n3", Role::Negative, 0.70), // above positive too
        ];
        let sel = select_threshold_candidates(&mut pairs, 0.5);
        assert_eq!(sel, vec!["g1|n1", "g1|n3"]);
        assert_eq!(pairs[1].refinement, Refinement::ThresholdSelected);
        assert_eq!(pairs[2].refinement, Refinement::None);

        // A negative above its positive is selected even below s_star.
        let mut pairs = vec![
            pair("g2", "p", Role::Positive, 0.35),
            pair("g2", "n1", Role::Negative, 0.40),
        ];
        let sel = select_threshold_candidates(&mut pairs, 0.5);
        assert_eq!(sel, vec!["g2|n1"]);
    }

    #[test]
    fn ast_rule_selects_structurally_close() {
        let p = crate::ast::NestingParser;
        use crate::ast::AstProvider;
        let near_a = "def f(x):\n    total = x + 1\n    return total\n";
        let near_b = "def g(y):\n    out = y + 1\n    return out\n"; // same shape
        let far = "def h(z):\n    if z:\n        for i in z:\n            print(i)\n    return [z, z, z]\n";
        let mut trees = HashMap::new();
        trees.insert("pos".to_string(), p.parse(near_a).unwrap());
        trees.insert("close".to_string(), p.parse(near_b).unwrap());
        trees.insert("far".to_string(), p.parse(far).unwrap());

        let mut pairs = vec![
            pair("g1", "pos", Role::Positive, 0.8),
            pair("g1", "close", Role::Negative, 0.3),
            pair("g1", "far", Role::Negative, 0.3),
            pair("g1", "missing", Role::Negative, 0.3),
        ];
        let sel = select_ast_candidates(&mut pairs, &trees, 0.25);
        assert_eq!(sel, vec!["g1|close"]);
        assert_eq!(pairs[1].refinement, Refinement::AstSelected);
        assert_eq!(pairs[2].refinement, Refinement::None);
        assert_eq!(pairs[3].refinement, Refinement::None);
    }

    #[test]
    fn both_rules_upgrade_mark() {
        let p = crate::ast::NestingParser;
        use crate::ast::AstProvider;
        let src = "def f(x):\n    return x\n";
        let mut trees = HashMap::new();
        trees.insert("pos".to_string(), p.parse(src).unwrap());
        trees.insert("twin".to_string(), p.parse(src).unwrap());
        let mut pairs = vec![
            pair("g1", "pos", Role::Positive, 0.9),
            pair("g1", "twin", Role::Negative, 0.95),
        ];
        let t = select_threshold_candidates(&mut pairs, 0.5);
        let a = select_ast_candidates(&mut pairs, &trees, 0.25);
        assert_eq!(t, a);
        assert_eq!(pairs[1].refinement, Refinement::BothSelected);
    }

    struct AlwaysYes;
    impl PreferenceJudge for AlwaysYes {
        fn candidate_satisfies(&self, _: &str, _: &str, _: &str) -> Result<bool> {
            Ok(true)
        }
    }
    struct AlwaysNo;
    impl PreferenceJudge for AlwaysNo {
        fn candidate_satisfies(&self, _: &str, _: &str, _: &str) -> Result<bool> {
            Ok(false)
        }
    }

    fn texts_for(pairs: &[PairRecord]) -> (HashMap<String, String>, HashMap<String, String>) {
        let mut q = HashMap::new();
        let mut c = HashMap::new();
        for p in pairs {
            q.insert(p.query_id.clone(), "docstring text".to_string());
            c.insert(p.code_id.clone(), format!("code of {}", p.code_id));
        }
        (q, c)
    }

    #[test]
    fn adjustment_scales_and_caps() {
        let mut pairs = vec![
            pair("g1", "p", Role::Positive, 0.9),
            pair("g1", "a", Role::Negative, 0.6397),
            pair("g1", "b", Role::Negative, 0.2662),
            pair("g1", "c", Role::Negative, 0.4871),
            pair("g1", "d", Role::Negative, 0.95),
        ];
        let (q, c) = texts_for(&pairs);
        let ids: Vec<String> = pairs[1..].iter().map(|p| p.pair_id.clone()).collect();
        let adjusted = adjudicate_and_adjust(&ids, &mut pairs, &AlwaysYes, 0.1, &q, &c).unwrap();
        assert_eq!(adjusted.len(), 4);
        assert!((pairs[1].sim_train - 0.7037).abs() < 5e-4);
        assert!((pairs[2].sim_train - 0.2928).abs() < 5e-4);
        assert!((pairs[3].sim_train - 0.5358).abs() < 5e-4);
        // 0.95 * 1.1 = 1.045 capped.
        assert_eq!(pairs[4].sim_train, ADJUST_CAP);
        for p in &pairs[1..] {
            assert_eq!(p.refinement, Refinement::Adjusted);
            assert_eq!(p.role, Role::Negative); // roles never change
        }
        // Annotations themselves are never rewritten.
        assert_eq!(pairs[1].sim_annotated, Some(0.6397));
        assert_eq!(pairs[4].sim_annotated, Some(0.95));
        // Positive untouched.
        assert_eq!(pairs[0].sim_train, 1.0);
    }

    #[test]
    fn rejected_candidates_are_untouched() {
        let mut pairs = vec![
            pair("g1", "p", Role::Positive, 0.9),
            pair("g1", "a", Role::Negative, 0.6),
        ];
        pairs[1].refinement = Refinement::ThresholdSelected;
        let (q, c) = texts_for(&pairs);
        let ids = vec![pairs[1].pair_id.clone()];
        let adjusted = adjudicate_and_adjust(&ids, &mut pairs, &AlwaysNo, 0.1, &q, &c).unwrap();
        assert!(adjusted.is_empty());
        assert_eq!(pairs[1].sim_train, 0.6);
        assert_eq!(pairs[1].refinement, Refinement::ThresholdSelected);
    }

    #[test]
    fn adjustment_requires_positive_delta() {
        let mut pairs = vec![pair("g1", "p", Role::Positive, 0.9)];
        let (q, c) = texts_for(&pairs);
        let err = adjudicate_and_adjust(&[], &mut pairs, &AlwaysYes, 0.0, &q, &c).unwrap_err();
        assert_eq!(err.code(), "invalid_argument");
    }

    #[test]
    fn overlap_judge_compares_against_positive() {
        let judge = OverlapJudge::default();
        let doc = "sum the row values";
        let pos = "def sum_rows(rows): return sum(values(rows))";
        // Candidate sharing most of the docstring's vocabulary passes.
        assert!(judge.candidate_satisfies(doc, pos, "def total(rows): values = rows; return sum(values)").unwrap());
        // Unrelated candidate fails.
        assert!(!judge.candidate_satisfies(doc, pos, "def open_socket(port): return bind(port)").unwrap());
    }

    #[test]
    fn ndcg_identity_is_one() {
        let a = vec![vec![0.9, 0.2, 0.5], vec![0.1, 0.8]];
        let got = annotator_consistency_ndcg(&a, &a).unwrap();
        assert_eq!(got, 1.0);
    }

    #[test]
    fn ndcg_reversed_three_item_group() {
        // Scores 1, 2, 3 ranked in exactly reversed order.
        let a = vec![vec![1.0, 2.0, 3.0]];
        let b = vec![vec![3.0, 2.0, 1.0]];
        let got = annotator_consistency_ndcg(&a, &b).unwrap();
        let dcg = 2.0f64 + 4.0 / 3.0f64.log2() + 8.0 / 2.0;
        let idcg = 8.0f64 + 4.0 / 3.0f64.log2() + 2.0 / 2.0;
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!((got - 0.7397).abs() < 1e-4);
    }

    #[test]
    fn ndcg_shape_errors() {
        let a = vec![vec![1.0, 2.0]];
        let b = vec![vec![1.0, 2.0], vec![0.5]];
        assert_eq!(annotator_consistency_ndcg(&a, &b).unwrap_err().code(), "mismatched_annotations");
        let c = vec![vec![1.0]];
        assert_eq!(annotator_consistency_ndcg(&c, &c).unwrap_err().code(), "no_groups");
    }
}
