//! Two-component 1-D Gaussian mixture fitting and the density-intersection
//! threshold between its components.
//!
//! Used to locate the boundary between the "dissimilar" and "similar" modes
//! of the annotated similarity distribution. EM with a median-split
//! initialization keeps the fit fully deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations are floored here to keep densities finite.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Minimum number of samples accepted by [`fit_gmm_1d`].
pub const MIN_SAMPLES: usize = 10;

/// A fitted two-component mixture, components ordered so `mu1 <= mu2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureFit {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    /// Mixing weight of the low-mean component, in (0, 1).
    pub weight1: f64,
    /// Density-intersection threshold between the components.
    pub s_star: f64,
    /// Final log-likelihood of the data under the fit.
    pub log_likelihood: f64,
    /// EM iterations performed.
    pub iterations: usize,
    /// Log-likelihood at the start of each iteration; non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(SIGMA_FLOOR))
}

/// Fit a two-component 1-D Gaussian mixture by EM.
///
/// Initialization is a median split of the sorted samples (deterministic;
/// `seed` is reserved for alternative initializers and is unused here). EM
/// stops when the log-likelihood improves by less than `tol` or after
/// `max_iter` iterations. Errors on fewer than [`MIN_SAMPLES`] samples or
/// when the sample range is too narrow to separate two components.
pub fn fit_gmm_1d(sims: &[f64], max_iter: usize, tol: f64, _seed: u64) -> Result<MixtureFit> {
    if sims.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { need: MIN_SAMPLES, got: sims.len() });
    }
    if sims.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarity sample".into()));
    }
    let mut sorted = sims.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[sorted.len() - 1] - sorted[0];
    if range < 1e-12 {
        return Err(Error::DegenerateDistribution);
    }

    let half = sorted.len() / 2;
    let (mut mu1, mut sigma1) = mean_std(&sorted[..half]);
    let (mut mu2, mut sigma2) = mean_std(&sorted[half..]);
    let mut w1 = 0.5f64;

    let n = sims.len() as f64;
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut resp = vec![0.0f64; sims.len()];

    for _ in 0..max_iter {
        // E step, in log space so extreme tails cannot underflow to 0/0.
        let mut ll = 0.0f64;
        for (i, &x) in sims.iter().enumerate() {
            let l1 = w1.ln() + log_normal_pdf(x, mu1, sigma1);
            let l2 = (1.0 - w1).ln() + log_normal_pdf(x, mu2, sigma2);
            let m = l1.max(l2);
            let e1 = (l1 - m).exp();
            let e2 = (l2 - m).exp();
            resp[i] = e1 / (e1 + e2);
            ll += m + (e1 + e2).ln();
        }
        let converged = trace.last().is_some_and(|&prev: &f64| (ll - prev).abs() < tol);
        trace.push(ll);
        iterations += 1;
        if converged {
            break;
        }

        // M step.
        let r1: f64 = resp.iter().sum();
        let r2 = n - r1;
        if r1 < 1e-9 || r2 < 1e-9 {
            log::warn!("mixture component collapsed after {iterations} iterations");
            break;
        }
        mu1 = sims.iter().zip(&resp).map(|(x, r)| r * x).sum::<f64>() / r1;
        mu2 = sims.iter().zip(&resp).map(|(x, r)| (1.0 - r) * x).sum::<f64>() / r2;
        sigma1 = (sims.iter().zip(&resp).map(|(x, r)| r * (x - mu1) * (x - mu1)).sum::<f64>() / r1)
            .sqrt()
            .max(SIGMA_FLOOR);
        sigma2 = (sims
            .iter()
            .zip(&resp)
            .map(|(x, r)| (1.0 - r) * (x - mu2) * (x - mu2))
            .sum::<f64>()
            / r2)
            .sqrt()
            .max(SIGMA_FLOOR);
        w1 = (r1 / n).clamp(1e-9, 1.0 - 1e-9);
    }

    if mu1 > mu2 {
        std::mem::swap(&mut mu1, &mut mu2);
        std::mem::swap(&mut sigma1, &mut sigma2);
        w1 = 1.0 - w1;
    }

    let mut fit = MixtureFit {
        mu1,
        sigma1,
        mu2,
        sigma2,
        weight1: w1,
        s_star: 0.0,
        log_likelihood: *trace.last().expect("at least one iteration"),
        iterations,
        log_likelihood_trace: trace,
    };
    fit.s_star = intersection_threshold(&fit);
    Ok(fit)
}

fn log_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// Threshold where the two component densities are equal, ignoring the
/// mixing weights.
///
/// Solves `N(x; mu1, sigma1) = N(x; mu2, sigma2)` and returns the root that
/// lies strictly between the component means. Equal variances give exactly
/// the midpoint `(mu1 + mu2) / 2`. If no root lies between the means
/// (possible with very unequal variances), falls back to the midpoint with
/// a warning.
pub fn intersection_threshold(fit: &MixtureFit) -> f64 {
    intersection(fit.mu1, fit.sigma1, fit.mu2, fit.sigma2, None)
}

/// Same as [`intersection_threshold`] but weighting each density by its
/// mixing proportion.
pub fn intersection_threshold_weighted(fit: &MixtureFit) -> f64 {
    intersection(fit.mu1, fit.sigma1, fit.mu2, fit.sigma2, Some((fit.weight1, 1.0 - fit.weight1)))
}

fn intersection(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64, weights: Option<(f64, f64)>) -> f64 {
    let midpoint = 0.5 * (mu1 + mu2);
    // log of the constant the squared-deviation terms must account for:
    // equal-density condition rearranges to
    //   (x-mu2)^2 / (2 s2^2) - (x-mu1)^2 / (2 s1^2) = ln(C)
    // with C = s1/s2 unweighted, or (w2 s1)/(w1 s2) weighted.
    let ln_c = match weights {
        None => (sigma1 / sigma2).ln(),
        Some((w1, w2)) => ((w2 * sigma1) / (w1 * sigma2)).ln(),
    };
    let s1sq = sigma1 * sigma1;
    let s2sq = sigma2 * sigma2;

    let a = s1sq - s2sq;
    let b = -2.0 * (s1sq * mu2 - s2sq * mu1);
    let c = s1sq * mu2 * mu2 - s2sq * mu1 * mu1 - 2.0 * s1sq * s2sq * ln_c;

    if a.abs() < 1e-18 {
        // Equal variances: the quadratic degenerates to a line.
        if weights.is_none() {
            return midpoint;
        }
        if b.abs() < 1e-300 {
            return midpoint;
        }
        let x = -c / b;
        return if in_open_interval(x, mu1, mu2) {
            x
        } else {
            log::warn!("weighted intersection fell outside (mu1, mu2); using midpoint");
            midpoint
        };
    }

    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        log::warn!("component densities do not intersect between the means; using midpoint");
        return midpoint;
    }
    // Numerically stable quadratic roots.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(c / q);
    }
    if a != 0.0 {
        roots.push(q / a);
    }
    for r in roots {
        if in_open_interval(r, mu1, mu2) {
            return r;
        }
    }
    log::warn!("no density intersection between the component means; using midpoint");
    midpoint
}

fn in_open_interval(x: f64, lo: f64, hi: f64) -> bool {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    x.is_finite() && x > lo && x < hi
}
