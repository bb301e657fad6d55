//! Training objectives over an encoded batch: an in-batch contrastive term,
//! a pairwise rank-order term, and their weighted hybrid. Every loss returns
//! exact analytic gradients w.r.t. the unit embeddings; the encoder chains
//! them back to its parameters.

use crate::error::{Error, Result};
use crate::vecmath::{axpy, cosine_with_grads};

use super::{Batch, TrainConfig};

/// Loss gradients w.r.t. every embedding in a batch, mirroring its shape.
#[derive(Debug, Clone)]
pub struct BatchGrads {
    /// Per group: gradient w.r.t. the query embedding.
    pub d_query: Vec<Vec<f64>>,
    /// Per group, per record: gradient w.r.t. the code embedding.
    pub d_code: Vec<Vec<Vec<f64>>>,
}

impl BatchGrads {
    pub fn zeros_like(batch: &Batch) -> Self {
        let dim = batch
            .groups
            .first()
            .map(|g| g.query.len())
            .unwrap_or(0);
        BatchGrads {
            d_query: batch.groups.iter().map(|_| vec![0.0; dim]).collect(),
            d_code: batch
                .groups
                .iter()
                .map(|g| g.records.iter().map(|_| vec![0.0; dim]).collect())
                .collect(),
        }
    }

    /// `self += s * other`
    pub fn accumulate(&mut self, s: f64, other: &BatchGrads) {
        for (a, b) in self.d_query.iter_mut().zip(&other.d_query) {
            axpy(a, s, b);
        }
        for (ag, bg) in self.d_code.iter_mut().zip(&other.d_code) {
            for (a, b) in ag.iter_mut().zip(bg) {
                axpy(a, s, b);
            }
        }
    }
}

/// In-batch contrastive loss.
///
/// Every group's query is an anchor; the candidate set is every code
/// embedding in the batch (all groups' positives and negatives). With
/// logits `cos(q_i, c_j) / tau`,
///
/// `L = -(1/m) sum_i log softmax(logits_i)[positive_i]`
///
/// Averaged over the `m` anchors. Errors if the batch has no groups.
pub fn loss_infonce(batch: &Batch, tau: f64) -> Result<(f64, BatchGrads)> {
    if batch.groups.is_empty() {
        return Err(Error::NoPositives);
    }
    let m = batch.groups.len();
    // Flatten candidates: (group, record) in batch order.
    let mut cands: Vec<(usize, usize)> = Vec::new();
    let mut positive_of_group: Vec<usize> = vec![usize::MAX; m];
    for (gi, g) in batch.groups.iter().enumerate() {
        for (ri, r) in g.records.iter().enumerate() {
            if r.positive {
                positive_of_group[gi] = cands.len();
            }
            cands.push((gi, ri));
        }
    }

    let mut grads = BatchGrads::zeros_like(batch);
    let mut total = 0.0f64;
    let inv_m = 1.0 / m as f64;
    for (gi, g) in batch.groups.iter().enumerate() {
        // Cosines and their gradients against every candidate.
        let mut cos = Vec::with_capacity(cands.len());
        let mut gq = Vec::with_capacity(cands.len());
        let mut gc = Vec::with_capacity(cands.len());
        for &(cg, cr) in &cands {
            let (c, dq, dc) = cosine_with_grads(&g.query, &batch.groups[cg].records[cr].code);
            cos.push(c / tau);
            gq.push(dq);
            gc.push(dc);
        }
        let max_logit = cos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = cos.iter().map(|&l| (l - max_logit).exp()).sum();
        let lse = max_logit + sum_exp.ln();
        let pos = positive_of_group[gi];
        total += (lse - cos[pos]) * inv_m;

        for (j, &(cg, cr)) in cands.iter().enumerate() {
            let p = (cos[j] - lse).exp();
            let coeff = (p - if j == pos { 1.0 } else { 0.0 }) * inv_m / tau;
            axpy(&mut grads.d_query[gi], coeff, &gq[j]);
            axpy(&mut grads.d_code[cg][cr], coeff, &gc[j]);
        }
    }
    Ok((total, grads))
}

/// Pairwise rank-order loss.
///
/// Over all record pairs `(i, j)` in the batch whose labels satisfy
/// `label_i > label_j` (each record scored by the cosine to its own query):
///
/// `L = log(1 + sum_(i,j) exp((cos_j - cos_i) / tau))`
///
/// A batch with no strictly ordered pair (all labels equal, or fewer than
/// two records) has loss exactly 0.
pub fn loss_cosent(batch: &Batch, tau: f64) -> Result<(f64, BatchGrads)> {
    let mut grads = BatchGrads::zeros_like(batch);
    // Flatten records with their own-query cosines.
    struct Rec {
        group: usize,
        record: usize,
        label: f64,
        cos: f64,
        d_q: Vec<f64>,
        d_c: Vec<f64>,
    }
    let mut recs: Vec<Rec> = Vec::new();
    for (gi, g) in batch.groups.iter().enumerate() {
        for (ri, r) in g.records.iter().enumerate() {
            let (c, dq, dc) = cosine_with_grads(&g.query, &r.code);
            recs.push(Rec { group: gi, record: ri, label: r.label, cos: c, d_q: dq, d_c: dc });
        }
    }

    // Collect ordered-pair exponents.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new(); // (winner, loser, exponent)
    let mut max_x = 0.0f64; // the implicit "+1" term is exp(0)
    for i in 0..recs.len() {
        for j in 0..recs.len() {
            if recs[i].label > recs[j].label {
                let x = (recs[j].cos - recs[i].cos) / tau;
                if x > max_x {
                    max_x = x;
                }
                pairs.push((i, j, x));
            }
        }
    }
    if pairs.is_empty() {
        return Ok((0.0, grads));
    }

    // log(1 + sum exp(x)) with max-shifted exponents for stability.
    let mut denom = (-max_x).exp();
    for &(_, _, x) in &pairs {
        denom += (x - max_x).exp();
    }
    let loss = max_x + denom.ln();

    // d L / d cos_k accumulated per record.
    let mut d_cos = vec![0.0f64; recs.len()];
    for &(i, j, x) in &pairs {
        let w = (x - max_x).exp() / denom;
        d_cos[j] += w / tau;
        d_cos[i] -= w / tau;
    }
    for (k, rec) in recs.iter().enumerate() {
        if d_cos[k] != 0.0 {
            axpy(&mut grads.d_query[rec.group], d_cos[k], &rec.d_q);
            axpy(&mut grads.d_code[rec.group][rec.record], d_cos[k], &rec.d_c);
        }
    }
    Ok((loss, grads))
}

/// Hybrid objective: `w1 * contrastive + w2 * rank-order`.
#[derive(Debug, Clone)]
pub struct HybridLoss {
    pub total: f64,
    pub infonce: f64,
    pub cosent: f64,
    pub grads: BatchGrads,
}

/// Compute the weighted hybrid loss. A term with weight exactly 0 is
/// skipped entirely, so `w2 = 0` reproduces the contrastive loss alone and
/// `w1 = 0` the rank-order loss alone, bit for bit.
pub fn loss_hybrid(batch: &Batch, cfg: &TrainConfig) -> Result<HybridLoss> {
    let mut grads = BatchGrads::zeros_like(batch);
    let mut infonce = 0.0f64;
    let mut cosent = 0.0f64;
    if cfg.w1 != 0.0 {
        let (l, g) = loss_infonce(batch, cfg.tau)?;
        infonce = l;
        grads.accumulate(cfg.w1, &g);
    }
    if cfg.w2 != 0.0 {
        let (l, g) = loss_cosent(batch, cfg.tau)?;
        cosent = l;
        grads.accumulate(cfg.w2, &g);
    }
    Ok(HybridLoss { total: cfg.w1 * infonce + cfg.w2 * cosent, infonce, cosent, grads })
}
