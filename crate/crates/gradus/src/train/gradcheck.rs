//! Central finite-difference validation of the analytic parameter
//! gradients, used both as a test harness and as a diagnostic entry point.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::derive_seed;

use super::{batch_param_grads, loss_hybrid, Batch, EncoderModel, GroupSpec, TrainConfig};

/// Above this parameter count the check samples a coordinate subset.
const FULL_SWEEP_MAX: usize = 5000;
/// Subset size for large models; must stay at or above 200 coordinates to
/// keep the sampled check meaningful.
const SUBSET_SIZE: usize = 256;

fn get_param(model: &EncoderModel, idx: usize) -> f64 {
    if idx < model.table.len() {
        model.table[idx]
    } else {
        model.projection[idx - model.table.len()]
    }
}

fn set_param(model: &mut EncoderModel, idx: usize, value: f64) {
    if idx < model.table.len() {
        model.table[idx] = value;
    } else {
        let off = model.table.len();
        model.projection[idx - off] = value;
    }
}

/// Compare analytic parameter gradients of the hybrid objective against
/// central finite differences and return the maximum relative error,
/// `|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`.
///
/// Small models are swept coordinate by coordinate; larger ones check a
/// seeded random subset of at least 200 coordinates drawn from the
/// parameters the batch actually touches. `h` must lie in `(0, 1e-3]`.
pub fn grad_check(
    model: &EncoderModel,
    specs: &[GroupSpec],
    cfg: &TrainConfig,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::InvalidArgument(format!("step h must be in (0, 1e-3], got {h}")));
    }
    cfg.validate()?;

    let batch = Batch::encode(model, specs)?;
    let hybrid = loss_hybrid(&batch, cfg)?;
    if !hybrid.total.is_finite() {
        return Err(Error::NonFinite("loss during gradient check".into()));
    }
    let analytic = batch_param_grads(model, &batch, &hybrid.grads)?;

    let total = model.param_count();
    let coords: Vec<usize> = if total <= FULL_SWEEP_MAX {
        (0..total).collect()
    } else {
        // Parameters the batch can influence: table rows of used buckets
        // plus the whole projection.
        let mut active: Vec<usize> = Vec::new();
        let d = model.embed_dim;
        let mut buckets: Vec<usize> = specs
            .iter()
            .flat_map(|s| {
                std::iter::once(model.buckets_for(&s.query_text)).chain(
                    s.records.iter().map(|r| model.buckets_for(&r.code_text)),
                )
            })
            .flatten()
            .collect();
        buckets.sort_unstable();
        buckets.dedup();
        for b in buckets {
            active.extend(b * d..(b + 1) * d);
        }
        active.extend(model.table.len()..total);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "grad-check"));
        active.shuffle(&mut rng);
        active.truncate(SUBSET_SIZE.max(200).min(active.len()));
        active
    };

    let mut probe = model.clone();
    let loss_at = |m: &EncoderModel| -> Result<f64> {
        let b = Batch::encode(m, specs)?;
        let l = loss_hybrid(&b, cfg)?.total;
        if !l.is_finite() {
            return Err(Error::NonFinite("perturbed loss during gradient check".into()));
        }
        Ok(l)
    };

    let mut worst = 0.0f64;
    for idx in coords {
        let orig = get_param(&probe, idx);
        set_param(&mut probe, idx, orig + h);
        let up = loss_at(&probe)?;
        set_param(&mut probe, idx, orig - h);
        let down = loss_at(&probe)?;
        set_param(&mut probe, idx, orig);

        let numeric = (up - down) / (2.0 * h);
        let ga = if idx < analytic.table.len() {
            analytic.table[idx]
        } else {
            analytic.projection[idx - analytic.table.len()]
        };
        let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{Pooling, RecordSpec};

    fn demo_specs() -> Vec<GroupSpec> {
        let mk = |gid: &str, q: &str, codes: &[(&str, f64, bool)]| GroupSpec {
            group_id: gid.to_string(),
            query_text: q.to_string(),
            records: codes
                .iter()
                .map(|(t, l, p)| RecordSpec {
                    code_id: t.to_string(),
                    code_text: t.to_string(),
                    label: *l,
                    positive: *p,
                })
                .collect(),
        };
        vec![
            mk(
                "g1",
                "parse tokens from the stream",
                &[
                    ("def parse(stream): return tokens(stream)", 1.0, true),
                    ("def write(path, data): save(path, data)", 0.3, false),
                    ("def scan(stream): return list(stream)", 0.62, false),
                ],
            ),
            mk(
                "g2",
                "write data to a path",
                &[
                    ("def write(path, data): save(path, data)", 1.0, true),
                    ("def parse(stream): return tokens(stream)", 0.28, false),
                ],
            ),
        ]
    }

    #[test]
    fn analytic_gradients_pass_for_all_objectives() {
        let model = EncoderModel::new(64, 8, Pooling::Mean, 10);
        let specs = demo_specs();
        for (w1, w2) in [(1.0, 0.0), (0.0, 1.0), (0.98, 0.02)] {
            let cfg = TrainConfig { w1, w2, ..TrainConfig::default() };
            let err = grad_check(&model, &specs, &cfg, 1e-5).unwrap();
            assert!(err <= 1e-4, "objective ({w1},{w2}) max rel err {err}");
        }
    }

    #[test]
    fn last_pooling_gradients_also_pass() {
        let model = EncoderModel::new(64, 8, Pooling::Last, 5);
        let cfg = TrainConfig::default();
        let err = grad_check(&model, &demo_specs(), &cfg, 1e-5).unwrap();
        assert!(err <= 1e-4, "max rel err {err}");
    }

    #[test]
    fn subset_path_used_for_large_models() {
        // 2048 * 4 + 16 > FULL_SWEEP_MAX: exercises the sampled branch.
        let model = EncoderModel::new(2048, 4, Pooling::Mean, 2);
        let cfg = TrainConfig::default();
        let err = grad_check(&model, &demo_specs(), &cfg, 1e-5).unwrap();
        assert!(err <= 1e-4, "max rel err {err}");
    }

    #[test]
    fn invalid_step_rejected() {
        let model = EncoderModel::new(16, 4, Pooling::Mean, 0);
        let cfg = TrainConfig::default();
        for h in [0.0, -1e-6, 2e-3] {
            assert_eq!(
                grad_check(&model, &demo_specs(), &cfg, h).unwrap_err().code(),
                "invalid_argument"
            );
        }
    }
}
