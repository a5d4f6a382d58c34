//! Quadratic subproblem `min θ s.t. φ_k(u) <= θ, ||u||_2 <= 1` with
//! `φ_k(u) = a_k + b_k'u + u'C_k u/2`.
//!
//! A primal-dual interior-point method on the epigraph form. The Newton
//! system is reduced to an `n x n` solve by eliminating the slacks and
//! multipliers. Indefinite cut Hessians are handled by diagonal
//! regularization of the reduced matrix and by extra random starts; the
//! returned point is the best (under the true max model) of all interior
//! point outputs, their projections onto the sphere, the center and the
//! bundle points.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    finish, relevant_cuts, scaled_cuts, ScaledCut, SolveStatus, SolverOptions, SubproblemSolution,
};
use crate::error::{Error, Result};
use crate::model::Bundle;
use crate::oracle::ModelOrder;
use crate::types::{rng_from_seed, seed_from_floats, NormKind};

const CENTERING: f64 = 0.1;
const BOUNDARY_FRACTION: f64 = 0.995;
const RESIDUAL_TOL: f64 = 1e-10;

/// Approximate minimizer of a second-order model over a Euclidean ball.
pub fn solve_quadratic(bundle: &Bundle, opts: &SolverOptions) -> Result<SubproblemSolution> {
    let region = bundle.region();
    if region.norm() != NormKind::Euclidean {
        return Err(Error::invalid("quadratic subproblem needs a Euclidean region"));
    }
    if bundle.samples().iter().any(|s| s.order() != ModelOrder::Quadratic) {
        return Err(Error::invalid("quadratic subproblem needs second-order samples"));
    }
    let n = region.dim();
    let (cuts, _, scale) = scaled_cuts(bundle);
    if scale == 0.0 {
        let (_, k) = bundle.model_eval(region.center())?;
        return finish(bundle, &DVector::zeros(n), SolveStatus::Optimal, 0.0, vec![k]);
    }

    let spread = |c: &ScaledCut| c.b.norm() + 0.5 * c.c.as_ref().map_or(0.0, |m| m.norm());
    let lower: Vec<f64> = cuts.iter().map(|c| c.a - spread(c)).collect();
    let upper: Vec<f64> = cuts.iter().map(|c| c.a + spread(c)).collect();
    let keep = relevant_cuts(&lower, &upper);
    let kept: Vec<ScaledCut> = keep.iter().map(|&k| cuts[k].clone()).collect();
    let nonconvex = kept.iter().any(|c| c.c.as_ref().is_some_and(|m| !is_psd(m)));

    let tol = (opts.abs_tol / scale).clamp(1e-13, 1e-8);
    let mut starts = vec![DVector::zeros(n)];
    if nonconvex {
        let center = region.center().as_vector();
        let mut key: Vec<f64> = center.iter().copied().collect();
        key.push(region.radius());
        let mut rng = rng_from_seed(seed_from_floats(opts.seed, &key));
        for _ in 0..opts.restarts {
            starts.push(random_in_ball(n, 0.9, &mut rng));
        }
    }

    struct Candidate {
        u: DVector<f64>,
        value: f64,
        run: Option<usize>,
    }
    let model = |u: &DVector<f64>| kept.iter().map(|c| c.eval(u)).fold(f64::NEG_INFINITY, f64::max);
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut runs = Vec::with_capacity(starts.len());
    for (r, u0) in starts.iter().enumerate() {
        let run = interior_point(&kept, u0, tol, opts.max_iter);
        let nrm = run.u.norm();
        candidates.push(Candidate {
            value: model(&run.u),
            u: run.u.clone(),
            run: Some(r),
        });
        if let Some(u) = polish(&kept, &run) {
            candidates.push(Candidate {
                value: model(&u),
                u,
                run: Some(r),
            });
        }
        if nrm > 1.0 - 1e-6 {
            let on_sphere = &run.u / nrm;
            candidates.push(Candidate {
                value: model(&on_sphere),
                u: on_sphere,
                run: Some(r),
            });
        }
        runs.push(run);
    }
    let x = region.center().as_vector();
    let zero = DVector::zeros(n);
    candidates.push(Candidate {
        value: model(&zero),
        u: zero,
        run: None,
    });
    for s in bundle.samples() {
        let u = (s.base().as_vector() - x) / region.radius();
        candidates.push(Candidate {
            value: model(&u),
            u,
            run: None,
        });
    }

    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.value < candidates[best].value {
            best = i;
        }
    }
    let chosen = &candidates[best];
    let (status, residual, active) = match chosen.run {
        Some(r) => {
            let run = &runs[r];
            let active = run
                .lambda
                .iter()
                .enumerate()
                .filter(|(_, l)| **l > 1e-8)
                .map(|(k, _)| keep[k])
                .collect();
            let status = if run.converged {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIterFallback
            };
            (status, run.residual * scale, active)
        }
        None => {
            let first = runs.first().expect("at least one run");
            let status = if runs.iter().any(|r| r.converged) {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIterFallback
            };
            let mut top = 0;
            let vals: Vec<f64> = kept.iter().map(|c| c.eval(&chosen.u)).collect();
            for (k, v) in vals.iter().enumerate() {
                if *v > vals[top] {
                    top = k;
                }
            }
            (status, first.residual * scale, vec![keep[top]])
        }
    };
    finish(bundle, &chosen.u.clone(), status, residual, active)
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let shift = 1e-10 * (m.amax() + f64::MIN_POSITIVE);
    Cholesky::new(m + DMatrix::identity(n, n) * shift).is_some()
}

fn random_in_ball(n: usize, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    let d = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let nrm = d.norm().max(f64::MIN_POSITIVE);
    let r: f64 = rng.random::<f64>().powf(1.0 / n as f64);
    d * (radius * r / nrm)
}

struct IpmRun {
    u: DVector<f64>,
    lambda: Vec<f64>,
    nu: f64,
    residual: f64,
    converged: bool,
}

fn interior_point(cuts: &[ScaledCut], u0: &DVector<f64>, tol: f64, max_iter: usize) -> IpmRun {
    let n = u0.len();
    let k = cuts.len();
    let mut u = u0.clone();
    let mut theta = cuts.iter().map(|c| c.eval(&u)).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut lambda = vec![1.0 / k as f64; k];
    let mut nu = 1.0;
    let mut residual = f64::INFINITY;
    let mut converged = false;

    for _ in 0..max_iter {
        let phi: Vec<f64> = cuts.iter().map(|c| c.eval(&u)).collect();
        let grads: Vec<DVector<f64>> = cuts.iter().map(|c| c.grad(&u)).collect();
        let s: Vec<f64> = phi.iter().map(|p| theta - p).collect();
        let sb = 1.0 - u.norm_squared();

        let mut r_u = &u * (2.0 * nu);
        for (g, l) in grads.iter().zip(&lambda) {
            r_u += g * *l;
        }
        let r_theta = 1.0 - lambda.iter().sum::<f64>();
        let comp_total = lambda.iter().zip(&s).map(|(l, s)| l * s).sum::<f64>() + nu * sb;
        residual = r_u.amax().max(r_theta.abs()).max(comp_total);
        if r_u.amax() <= RESIDUAL_TOL && r_theta.abs() <= RESIDUAL_TOL && comp_total <= tol {
            converged = true;
            break;
        }
        let mu = CENTERING * comp_total / (k + 1) as f64;

        let mut m = DMatrix::identity(n, n) * (2.0 * nu);
        let mut a = DVector::zeros(n);
        let mut dsum = 0.0;
        let mut b1 = -&r_u;
        let mut rho_sum = 0.0;
        let mut dk = Vec::with_capacity(k);
        let mut rho = Vec::with_capacity(k);
        for j in 0..k {
            if let Some(c) = &cuts[j].c {
                m += c * lambda[j];
            }
            let d = lambda[j] / s[j];
            let rj = mu / s[j] - lambda[j];
            m.ger(d, &grads[j], &grads[j], 1.0);
            a.axpy(d, &grads[j], 1.0);
            b1.axpy(-rj, &grads[j], 1.0);
            dsum += d;
            rho_sum += rj;
            dk.push(d);
            rho.push(rj);
        }
        let rho_b = mu / sb - nu;
        m.ger(4.0 * nu / sb, &u, &u, 1.0);
        b1.axpy(-2.0 * rho_b, &u, 1.0);
        let b2 = r_theta - rho_sum;

        let Some(chol) = regularized_cholesky(m) else {
            break;
        };
        let y1 = chol.solve(&b1);
        let y2 = chol.solve(&a);
        let den = a.dot(&y2) - dsum;
        if !(den.abs() > 1e-300) {
            break;
        }
        let dtheta = (b2 - a.dot(&y1)) / den;
        let du = &y1 + &y2 * dtheta;
        let dlambda: Vec<f64> = (0..k)
            .map(|j| rho[j] - dk[j] * dtheta + dk[j] * grads[j].dot(&du))
            .collect();
        let dnu = rho_b + 2.0 * (nu / sb) * u.dot(&du);
        if !(du.iter().all(|v| v.is_finite()) && dtheta.is_finite() && dnu.is_finite()) {
            break;
        }

        let mut alpha: f64 = 1.0;
        for j in 0..k {
            if dlambda[j] < 0.0 {
                alpha = alpha.min(-BOUNDARY_FRACTION * lambda[j] / dlambda[j]);
            }
        }
        if dnu < 0.0 {
            alpha = alpha.min(-BOUNDARY_FRACTION * nu / dnu);
        }
        let mut accepted = false;
        for _ in 0..60 {
            let un = &u + &du * alpha;
            let tn = theta + alpha * dtheta;
            let ok_b = 1.0 - un.norm_squared() >= (1.0 - BOUNDARY_FRACTION) * sb;
            let ok_k = cuts
                .iter()
                .zip(&s)
                .all(|(c, sj)| tn - c.eval(&un) >= (1.0 - BOUNDARY_FRACTION) * sj);
            if ok_b && ok_k {
                u = un;
                theta = tn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        for j in 0..k {
            lambda[j] += alpha * dlambda[j];
        }
        nu += alpha * dnu;
    }

    IpmRun {
        u,
        lambda,
        nu,
        residual,
        converged,
    }
}

/// Newton's method on the equality KKT system of the active set identified by
/// an interior-point run. Returns the refined point when Newton converges to
/// a feasible point with nonnegative multipliers.
fn polish(cuts: &[ScaledCut], run: &IpmRun) -> Option<DVector<f64>> {
    let n = run.u.len();
    let lmax = run.lambda.iter().copied().fold(0.0, f64::max);
    let act: Vec<usize> = (0..cuts.len()).filter(|&j| run.lambda[j] > 1e-6 * lmax).collect();
    let ball = run.nu > 1e-6 * lmax && run.u.norm() > 1.0 - 1e-4;
    if act.is_empty() || act.len() > n + 1 {
        return None;
    }
    let k = act.len();
    let dim = n + 1 + k + usize::from(ball);
    let mut u = run.u.clone();
    let mut theta = act.iter().map(|&j| cuts[j].eval(&u)).fold(f64::NEG_INFINITY, f64::max);
    let mut lambda = DVector::from_iterator(k, act.iter().map(|&j| run.lambda[j]));
    let mut nu = if ball { run.nu } else { 0.0 };
    let mut converged = false;
    for _ in 0..20 {
        let mut f = DVector::zeros(dim);
        let mut jac = DMatrix::zeros(dim, dim);
        let mut hl = DMatrix::zeros(n, n);
        for (a, &j) in act.iter().enumerate() {
            let g = cuts[j].grad(&u);
            f.rows_mut(0, n).axpy(lambda[a], &g, 1.0);
            jac.view_mut((0, n + 1 + a), (n, 1)).copy_from(&g);
            jac.view_mut((n + 1 + a, 0), (1, n)).copy_from(&g.transpose());
            if let Some(c) = &cuts[j].c {
                hl += c * lambda[a];
            }
            f[n + 1 + a] = cuts[j].eval(&u) - theta;
            jac[(n + 1 + a, n)] = -1.0;
            jac[(n, n + 1 + a)] = 1.0;
        }
        f[n] = lambda.sum() - 1.0;
        if ball {
            f.rows_mut(0, n).axpy(2.0 * nu, &u, 1.0);
            hl += DMatrix::identity(n, n) * (2.0 * nu);
            jac.view_mut((0, dim - 1), (n, 1)).copy_from(&(&u * 2.0));
            jac.view_mut((dim - 1, 0), (1, n)).copy_from(&(u.transpose() * 2.0));
            f[dim - 1] = u.norm_squared() - 1.0;
        }
        jac.view_mut((0, 0), (n, n)).copy_from(&hl);
        if f.amax() <= 1e-15 {
            converged = true;
            break;
        }
        let step = jac.lu().solve(&(-f))?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        u += step.rows(0, n);
        theta += step[n];
        lambda += step.rows(n + 1, k);
        if ball {
            nu += step[dim - 1];
        }
    }
    let feasible = u.norm() <= 1.0 + 1e-12;
    (converged && feasible && lambda.min() >= 0.0 && nu >= 0.0).then_some(u)
}

fn regularized_cholesky(m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let n = m.nrows();
    let m = (&m + m.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let mut delta = 1e-8 * (1.0 + m.amax());
    for _ in 0..40 {
        if let Some(c) = Cholesky::new(&m + DMatrix::identity(n, n) * delta) {
            return Some(c);
        }
        delta *= 10.0;
    }
    None
}
