//! Brute-force minimization of `f` over a trust region, and `Λ^p`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::types::{rng_from_seed, Point, TrustRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    Grid1D,
    Grid2D,
    Grid3D,
    /// Heuristic for dimensions above three.
    MultiStartPolish,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZStar {
    pub z: Point,
    pub value: f64,
    pub method: SearchMethod,
}

/// Lattice points per axis for the grid search in dimension `n`.
pub fn grid_points_per_axis(n: usize) -> Option<usize> {
    match n {
        1 | 2 => Some(201),
        3 => Some(61),
        _ => None,
    }
}

/// Approximate global minimizer of `f` over `region`.
///
/// For `n <= 3` a lattice over the bounding box (restricted to the region)
/// is scanned and the best few lattice minima are polished by a shrinking
/// compass search. Ties on the lattice go to the lexicographically smallest
/// index. Larger dimensions are rejected; see [`z_star_multistart`].
pub fn z_star_oracle(oracle: &dyn Oracle, region: &TrustRegion) -> Result<ZStar> {
    let n = region.dim();
    let per_axis = grid_points_per_axis(n)
        .ok_or_else(|| Error::invalid(format!("grid search supports n <= 3, got {n}")))?;
    let method = match n {
        1 => SearchMethod::Grid1D,
        2 => SearchMethod::Grid2D,
        _ => SearchMethod::Grid3D,
    };
    let c = region.center().as_vector();
    let r = region.radius();
    let h = 2.0 * r / (per_axis - 1) as f64;
    let half = (per_axis - 1) / 2;

    let total = per_axis.pow(n as u32);
    let mut values = vec![f64::INFINITY; total];
    let mut idx = vec![0usize; n];
    for (flat, slot) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for d in (0..n).rev() {
            idx[d] = rem % per_axis;
            rem /= per_axis;
        }
        let z = lattice_point(c, &idx, half, h);
        let zp = Point::from_vector(z)?;
        if region.contains(&zp) {
            *slot = oracle.value(&zp)?;
        }
    }

    // Lattice local minima in increasing value; lexicographic order breaks ties.
    let mut minima: Vec<usize> = (0..total)
        .filter(|&k| values[k].is_finite() && is_lattice_min(&values, k, n, per_axis))
        .collect();
    minima.sort_by(|a, b| values[*a].total_cmp(&values[*b]).then(a.cmp(b)));
    let best_flat = minima[0];

    let mut best = ZStar {
        z: Point::from_vector(flat_point(c, best_flat, n, per_axis, half, h))?,
        value: values[best_flat],
        method,
    };
    for &k in minima.iter().take(4) {
        let start = Point::from_vector(flat_point(c, k, n, per_axis, half, h))?;
        let (z, v) = compass_polish(oracle, region, start, values[k], h)?;
        if v < best.value {
            best = ZStar { z, value: v, method };
        }
    }
    Ok(best)
}

/// Multi-start compass search for any dimension. No global guarantee.
pub fn z_star_multistart(
    oracle: &dyn Oracle,
    region: &TrustRegion,
    random_starts: usize,
    seed: u64,
) -> Result<ZStar> {
    let n = region.dim();
    let c = region.center().as_vector();
    let r = region.radius();
    let mut starts = vec![c.clone()];
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut z = c.clone();
            z[i] += s * r;
            starts.push(z);
        }
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..random_starts {
        let d = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        starts.push(region.project(&(c + d * r)));
    }
    let mut best: Option<ZStar> = None;
    for s in starts {
        let s = Point::from_vector(region.project(&s))?;
        let v = oracle.value(&s)?;
        let (z, v) = compass_polish(oracle, region, s, v, r / 10.0)?;
        if best.as_ref().is_none_or(|b| v < b.value) {
            best = Some(ZStar {
                z,
                value: v,
                method: SearchMethod::MultiStartPolish,
            });
        }
    }
    Ok(best.expect("at least the center start"))
}

fn lattice_point(c: &DVector<f64>, idx: &[usize], half: usize, h: f64) -> DVector<f64> {
    DVector::from_fn(c.len(), |d, _| c[d] + (idx[d] as f64 - half as f64) * h)
}

fn flat_point(
    c: &DVector<f64>,
    flat: usize,
    n: usize,
    per_axis: usize,
    half: usize,
    h: f64,
) -> DVector<f64> {
    let mut idx = vec![0usize; n];
    let mut rem = flat;
    for d in (0..n).rev() {
        idx[d] = rem % per_axis;
        rem /= per_axis;
    }
    lattice_point(c, &idx, half, h)
}

fn is_lattice_min(values: &[f64], k: usize, n: usize, per_axis: usize) -> bool {
    let mut stride = 1;
    for _ in 0..n {
        let coord = (k / stride) % per_axis;
        if coord > 0 && values[k - stride] < values[k] {
            return false;
        }
        if coord + 1 < per_axis && values[k + stride] < values[k] {
            return false;
        }
        stride *= per_axis;
    }
    true
}

/// Compass search with the full `3^n - 1` stencil for `n <= 3` and the
/// `2n` axis stencil otherwise; points are projected onto the region.
fn compass_polish(
    oracle: &dyn Oracle,
    region: &TrustRegion,
    start: Point,
    start_value: f64,
    step: f64,
) -> Result<(Point, f64)> {
    let n = region.dim();
    let dirs = stencil(n);
    let mut z = start;
    let mut v = start_value;
    let mut h = step;
    let min_step = 1e-13 * region.radius().max(z.as_vector().amax());
    while h > min_step {
        let mut moved = false;
        for d in &dirs {
            let cand = region.project(&(z.as_vector() + d * h));
            let cand = Point::from_vector(cand)?;
            let cv = oracle.value(&cand)?;
            if cv < v {
                z = cand;
                v = cv;
                moved = true;
                break;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok((z, v))
}

fn stencil(n: usize) -> Vec<DVector<f64>> {
    if n <= 3 {
        let total = 3usize.pow(n as u32);
        (0..total)
            .filter(|&k| k != (total - 1) / 2)
            .map(|k| {
                let mut rem = k;
                DVector::from_fn(n, |_, _| {
                    let v = (rem % 3) as f64 - 1.0;
                    rem /= 3;
                    v
                })
            })
            .collect()
    } else {
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut d = DVector::zeros(n);
                d[i] = s;
                out.push(d);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    pub x: Point,
    pub delta: f64,
    pub p: u32,
    pub z_star: Point,
    pub f_x: f64,
    pub f_z_star: f64,
    /// `(f(x) - f(z*)) / Δ^p`, never negative.
    pub lambda_value: f64,
    pub method: SearchMethod,
}

/// `Λ^p(x, Δ)` over `region` with the grid minimizer.
pub fn lambda_p(oracle: &dyn Oracle, region: &TrustRegion, p: u32) -> Result<LambdaEstimate> {
    let zs = z_star_oracle(oracle, region)?;
    lambda_from(oracle, region, p, zs)
}

/// `Λ^p(x, Δ)` with the multi-start minimizer, for any dimension.
pub fn lambda_p_multistart(
    oracle: &dyn Oracle,
    region: &TrustRegion,
    p: u32,
    seed: u64,
) -> Result<LambdaEstimate> {
    let zs = z_star_multistart(oracle, region, 8, seed)?;
    lambda_from(oracle, region, p, zs)
}

fn lambda_from(oracle: &dyn Oracle, region: &TrustRegion, p: u32, zs: ZStar) -> Result<LambdaEstimate> {
    let x = region.center().clone();
    let f_x = oracle.value(&x)?;
    let (z_star, f_z_star) = if zs.value <= f_x {
        (zs.z, zs.value)
    } else {
        (x.clone(), f_x)
    };
    let delta = region.radius();
    Ok(LambdaEstimate {
        lambda_value: ((f_x - f_z_star) / delta.powi(p as i32)).max(0.0),
        x,
        delta,
        p,
        z_star,
        f_x,
        f_z_star,
        method: zs.method,
    })
}
