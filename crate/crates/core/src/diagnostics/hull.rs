//! Minimum-norm point of a finite convex hull (Wolfe's algorithm).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HullPoint {
    pub point: DVector<f64>,
    /// Convex weights over the input vectors.
    pub weights: Vec<f64>,
}

impl HullPoint {
    pub fn norm(&self) -> f64 {
        self.point.norm()
    }
}

const MAX_MAJOR: usize = 10_000;

/// Minimum-norm element of `conv(vectors)`.
pub fn min_norm_hull_point(vectors: &[DVector<f64>]) -> Result<HullPoint> {
    let m = vectors.len();
    let first = vectors.first().ok_or_else(|| Error::invalid("empty vector list"))?;
    let n = first.len();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("vectors of different lengths"));
    }
    if vectors.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite("hull vectors"));
    }
    let scale = vectors.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);
    if scale == 0.0 {
        let mut weights = vec![0.0; m];
        weights[0] = 1.0;
        return Ok(HullPoint {
            point: DVector::zeros(n),
            weights,
        });
    }
    let tol = 1e-14 * scale;

    let mut start = 0;
    for k in 1..m {
        if vectors[k].norm_squared() < vectors[start].norm_squared() {
            start = k;
        }
    }
    // Active set and the corresponding positive weights.
    let mut set = vec![start];
    let mut w = vec![1.0];
    let mut x = vectors[start].clone();

    for _ in 0..MAX_MAJOR {
        let xx = x.norm_squared();
        let mut j = 0;
        let mut best = f64::INFINITY;
        for (k, v) in vectors.iter().enumerate() {
            let d = x.dot(v);
            if d < best {
                best = d;
                j = k;
            }
        }
        if xx - best <= tol || set.contains(&j) {
            break;
        }
        set.push(j);
        w.push(0.0);

        loop {
            let v = affine_minimizer(vectors, &set);
            if v.iter().all(|&vi| vi > 1e-15) {
                w = v;
                break;
            }
            let mut theta: f64 = 1.0;
            for (wi, vi) in w.iter().zip(&v) {
                if *vi <= 1e-15 && wi - vi > 0.0 {
                    theta = theta.min(wi / (wi - vi));
                }
            }
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = (1.0 - theta) * *wi + theta * vi;
            }
            let mut k = 0;
            while k < set.len() {
                if w[k] <= 1e-15 {
                    set.remove(k);
                    w.remove(k);
                } else {
                    k += 1;
                }
            }
            if set.is_empty() {
                return Err(Error::Internal("min-norm active set emptied".into()));
            }
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        x = combine(vectors, &set, &w);
    }

    let mut weights = vec![0.0; m];
    for (k, wi) in set.iter().zip(&w) {
        weights[*k] += wi;
    }
    Ok(HullPoint { point: x, weights })
}

fn combine(vectors: &[DVector<f64>], set: &[usize], w: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(vectors[0].len());
    for (k, wi) in set.iter().zip(w) {
        x.axpy(*wi, &vectors[*k], 1.0);
    }
    x
}

/// Weights `v` (summing to one) minimizing `||sum v_i p_i||` over the affine
/// hull of the points in `set`.
fn affine_minimizer(vectors: &[DVector<f64>], set: &[usize]) -> Vec<f64> {
    let s = set.len();
    let mut a = DMatrix::zeros(s + 1, s + 1);
    for (r, &i) in set.iter().enumerate() {
        for (c, &j) in set.iter().enumerate() {
            a[(r, c)] = vectors[i].dot(&vectors[j]);
        }
        a[(r, s)] = 1.0;
        a[(s, r)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .unwrap_or_else(|| {
            let svd = a.svd(true, true);
            svd.solve(&rhs, 1e-14).unwrap_or_else(|_| {
                let mut v = DVector::zeros(s + 1);
                v[0] = 1.0;
                v
            })
        });
    sol.rows(0, s).iter().copied().collect()
}
