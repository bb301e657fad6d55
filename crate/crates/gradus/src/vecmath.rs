//! Small dense-vector helpers used by the annotator, the encoder, and the
//! loss functions. All plain `f64` slices; nothing clever.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity. Callers must ensure neither vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2_norm(a) * l2_norm(b))
}

/// Cosine similarity together with its gradients w.r.t. both inputs:
///
/// d cos / d a = b / (|a||b|) - (a.b) a / (|a|^3 |b|)
///
/// and symmetrically for `b`.
pub fn cosine_with_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    let d = dot(a, b);
    let c = d / (na * nb);
    let inv = 1.0 / (na * nb);
    let ga: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| bi * inv - d * ai / (na * na * na * nb))
        .collect();
    let gb: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| ai * inv - d * bi / (nb * nb * nb * na))
        .collect();
    (c, ga, gb)
}

/// Scale `v` in place.
pub fn scale(v: &mut [f64], s: f64) {
    for x in v.iter_mut() {
        *x *= s;
    }
}

/// `acc += s * v`
pub fn axpy(acc: &mut [f64], s: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, &x) in acc.iter_mut().zip(v) {
        *a += s * x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(cosine(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-15);
        assert!((cosine(&[1.0, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_grads_match_finite_difference() {
        let a = [0.3, -0.7, 0.2, 0.9];
        let b = [-0.1, 0.4, 0.8, 0.05];
        let (_, ga, gb) = cosine_with_grads(&a, &b);
        let h = 1e-6;
        for i in 0..a.len() {
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let num = (cosine(&ap, &b) - cosine(&am, &b)) / (2.0 * h);
            assert!((num - ga[i]).abs() < 1e-8, "d cos/d a[{i}]: {num} vs {}", ga[i]);

            let mut bp = b;
            let mut bm = b;
            bp[i] += h;
            bm[i] -= h;
            let num = (cosine(&a, &bp) - cosine(&a, &bm)) / (2.0 * h);
            assert!((num - gb[i]).abs() < 1e-8, "d cos/d b[{i}]: {num} vs {}", gb[i]);
        }
    }
}
