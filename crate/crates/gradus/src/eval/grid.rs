//! Grid search over the label adjustment factor: for each candidate value,
//! re-run refinement, retrain from the same initial weights, and score
//! retrieval on a fixed dataset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ast::AstTree;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalDataset};
use crate::refine::{refine_pairs, PreferenceJudge, RefineParams};
use crate::synth::PairRecord;
use crate::train::{group_specs_from_pairs, train, EncoderModel, TrainConfig};

/// Everything a single grid cell needs. Pairs are pre-refinement training
/// pairs; the dataset is the held-out split scored after training.
pub struct GridContext<'a> {
    pub pairs: &'a [PairRecord],
    pub trees: &'a HashMap<String, AstTree>,
    pub judge: &'a dyn PreferenceJudge,
    pub refine: RefineParams,
    pub query_texts: &'a HashMap<String, String>,
    pub code_texts: &'a HashMap<String, String>,
    pub train_cfg: TrainConfig,
    pub model_init: EncoderModel,
    pub dataset: &'a EvalDataset,
    pub k_cutoff: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub delta_s: f64,
    pub mrr: Option<f64>,
    pub map: Option<f64>,
    pub adjusted_pairs: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub best_delta_s: Option<f64>,
    pub best_mrr: Option<f64>,
}

fn run_cell(delta_s: f64, ctx: &GridContext<'_>) -> Result<(f64, f64, usize)> {
    let mut params = ctx.refine.clone();
    params.delta_s = delta_s;
    let (pairs, report) = refine_pairs(
        ctx.pairs.to_vec(),
        ctx.trees,
        ctx.judge,
        &params,
        ctx.query_texts,
        ctx.code_texts,
    )?;
    let specs = group_specs_from_pairs(&pairs, ctx.query_texts, ctx.code_texts);
    let mut cfg = ctx.train_cfg.clone();
    cfg.delta_s = delta_s;
    let outcome = train(&specs, ctx.model_init.clone(), &cfg)?;
    let eval = evaluate(&outcome.model, ctx.dataset, ctx.k_cutoff)?;
    Ok((eval.mrr, eval.map, report.adjusted))
}

/// Run every grid value; a failing cell records its error and the sweep
/// continues. The best row is the highest MRR, first value winning ties.
pub fn grid_search_delta_s(values: &[f64], ctx: &GridContext<'_>) -> Result<GridReport> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        match run_cell(v, ctx) {
            Ok((mrr, map, adjusted)) => rows.push(GridRow {
                delta_s: v,
                mrr: Some(mrr),
                map: Some(map),
                adjusted_pairs: Some(adjusted),
                error: None,
            }),
            Err(e) => {
                log::warn!("grid cell delta_s={v} failed: {e}");
                rows.push(GridRow {
                    delta_s: v,
                    mrr: None,
                    map: None,
                    adjusted_pairs: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for row in &rows {
        if let Some(mrr) = row.mrr {
            if best.is_none_or(|(_, b)| mrr > b) {
                best = Some((row.delta_s, mrr));
            }
        }
    }
    Ok(GridReport {
        rows,
        best_delta_s: best.map(|(d, _)| d),
        best_mrr: best.map(|(_, m)| m),
    })
}
