//! Classical multidimensional scaling of embedding vectors into the plane,
//! for plotting corpus structure. Dissimilarity is `1 - cosine`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecmath::cosine;

/// Fixed seed for the power-iteration start vectors; coordinates must be
/// reproducible across runs.
const MDS_SEED: u64 = 0x6d64_7332;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Largest-eigenvalue pair of symmetric `m` (size `n`), found by power
/// iteration on `m + sigma*I` so that negative eigenvalues of larger
/// magnitude cannot win.
fn top_eigenpair(m: &[f64], n: usize, start_label: u64) -> (f64, Vec<f64>) {
    // Infinity norm bounds the spectrum: all eigenvalues of m + sigma*I
    // are nonnegative and keep their algebraic order.
    let sigma: f64 = (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(MDS_SEED.wrapping_add(start_label));
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    let mut w = vec![0.0; n];
    for _ in 0..POWER_MAX_ITER {
        for i in 0..n {
            let mut acc = sigma * v[i];
            for j in 0..n {
                acc += m[i * n + j] * v[j];
            }
            w[i] = acc;
        }
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw < 1e-30 {
            // m + sigma*I annihilated the start vector; the spectrum is
            // effectively zero in this subspace.
            return (0.0, v);
        }
        for x in &mut w {
            *x /= nw;
        }
        let diff_plus: f64 = v.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
        let diff_minus: f64 = v.iter().zip(&w).map(|(a, b)| (a + b) * (a + b)).sum();
        let converged = diff_plus.min(diff_minus) < POWER_TOL * POWER_TOL;
        v.copy_from_slice(&w);
        if converged {
            break;
        }
    }
    // Rayleigh quotient on the original matrix gives the unshifted value.
    let mut lambda = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[i * n + j] * v[j];
        }
        lambda += v[i] * acc;
    }
    (lambda, v)
}

/// Project embedding vectors to 2-D with classical MDS.
///
/// Builds squared dissimilarities `(1 - cos)^2`, double-centers them into a
/// Gram matrix, and scales the two leading eigenvectors by the square roots
/// of their eigenvalues. A nonpositive eigenvalue yields a zeroed axis with
/// a warning rather than an error.
pub fn mds_coords(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = vectors.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "multidimensional scaling needs at least 3 vectors, got {n}"
        )));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidArgument("vectors must share a nonzero dimension".into()));
    }
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = cosine(&vectors[i], &vectors[j]);
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("cosine between vectors {i} and {j}")));
            }
            let d = 1.0 - c;
            d2[i * n + j] = d * d;
            d2[j * n + i] = d * d;
        }
    }
    // Double centering: b_ij = -1/2 (d2_ij - row_i - col_j + grand).
    let mut row_mean = vec![0.0; n];
    for i in 0..n {
        row_mean[i] = (0..n).map(|j| d2[i * n + j]).sum::<f64>() / n as f64;
    }
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = -0.5 * (d2[i * n + j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    let mut coords = vec![[0.0; 2]; n];
    let mut lambda_ref = 0.0f64;
    for axis in 0..2 {
        let (lambda, v) = top_eigenpair(&b, n, axis as u64);
        if axis == 0 {
            lambda_ref = lambda.abs();
        }
        // Eigenvalues within numerical noise of zero (relative to the
        // leading one) carry no geometry; deflation residue must not leak
        // into a coordinate.
        let floor = f64::EPSILON.max(1e-9 * lambda_ref);
        if lambda <= floor || !lambda.is_finite() {
            log::warn!(
                "axis {axis}: eigenvalue {lambda:.3e} is not positive; zero-filling the coordinate"
            );
            continue;
        }
        let scale = lambda.sqrt();
        for (point, &vi) in coords.iter_mut().zip(&v) {
            point[axis] = scale * vi;
        }
        // Deflate so the next pass finds the following eigenvalue.
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] -= lambda * v[i] * v[j];
            }
        }
    }
    Ok(coords)
}
