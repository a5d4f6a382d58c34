//! Linear subproblem `min θ s.t. a_k + b_k'u <= θ, ||u||_inf <= 1`.
//!
//! Solved through its dual
//!
//! ```text
//! max  sum_k λ_k a_k - sum_i (μ+_i + μ-_i)
//! s.t. sum_k λ_k b_k + μ+ - μ- = 0,  sum_k λ_k = 1,  λ, μ+, μ- >= 0
//! ```
//!
//! which has only `n + 1` equality rows and an obvious starting basis (one
//! cut plus one bound multiplier per coordinate). The primal `(u, θ)` is read
//! off the simplex multipliers of the optimal basis.

use nalgebra::{DMatrix, DVector};

use super::{finish, relevant_cuts, scaled_cuts, ScaledCut, SolveStatus, SubproblemSolution};
use crate::error::{Error, Result};
use crate::model::Bundle;
use crate::oracle::ModelOrder;
use crate::types::NormKind;

const OPT_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 32;
const DEGENERATE_BEFORE_BLAND: usize = 16;

/// Exact minimizer of a first-order model over a max-norm region.
pub fn solve_linear(bundle: &Bundle) -> Result<SubproblemSolution> {
    let region = bundle.region();
    if region.norm() != NormKind::Max {
        return Err(Error::invalid("linear subproblem needs a max-norm region"));
    }
    if bundle.samples().iter().any(|s| s.order() != ModelOrder::Linear) {
        return Err(Error::invalid("linear subproblem needs first-order samples"));
    }
    let n = region.dim();
    let (cuts, _, scale) = scaled_cuts(bundle);
    if scale == 0.0 {
        let k = first_max(&cuts);
        return finish(bundle, &DVector::zeros(n), SolveStatus::Optimal, 0.0, vec![k]);
    }

    let lower: Vec<f64> = cuts.iter().map(|c| c.a - c.b.lp_norm(1)).collect();
    let upper: Vec<f64> = cuts.iter().map(|c| c.a + c.b.lp_norm(1)).collect();
    let keep = relevant_cuts(&lower, &upper);
    let kept: Vec<&ScaledCut> = keep.iter().map(|&k| &cuts[k]).collect();

    let lp = DualLp::new(&kept, n);
    let out = lp.run();
    let u = DVector::from_iterator(n, (0..n).map(|i| (-out.pi[i]).clamp(-1.0, 1.0)));
    let active: Vec<usize> = out.active.iter().map(|&k| keep[k]).collect();
    let status = if out.converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterFallback
    };
    let sol = finish(bundle, &u, status, out.residual * scale, active)?;

    // The LP is exact, but guard against roundoff pushing θ above the center value.
    let (center_val, k0) = bundle.model_eval(region.center())?;
    if center_val < sol.theta {
        return finish(bundle, &DVector::zeros(n), status, out.residual * scale, vec![k0]);
    }
    Ok(sol)
}

fn first_max(cuts: &[ScaledCut]) -> usize {
    let mut best = 0;
    for (k, c) in cuts.iter().enumerate() {
        if c.a > cuts[best].a {
            best = k;
        }
    }
    best
}

struct DualLp<'c> {
    cuts: &'c [&'c ScaledCut],
    n: usize,
}

struct LpOutcome {
    pi: DVector<f64>,
    active: Vec<usize>,
    residual: f64,
    converged: bool,
}

impl<'c> DualLp<'c> {
    fn new(cuts: &'c [&'c ScaledCut], n: usize) -> Self {
        DualLp { cuts, n }
    }

    fn ncols(&self) -> usize {
        self.cuts.len() + 2 * self.n
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.cuts.len() {
            self.cuts[j].a
        } else {
            -1.0
        }
    }

    fn column(&self, j: usize) -> DVector<f64> {
        let n = self.n;
        let k = self.cuts.len();
        let mut col = DVector::zeros(n + 1);
        if j < k {
            col.rows_mut(0, n).copy_from(&self.cuts[j].b);
            col[n] = 1.0;
        } else if j < k + n {
            col[j - k] = 1.0;
        } else {
            col[j - k - n] = -1.0;
        }
        col
    }

    /// `π'E_j` without materializing the column.
    fn price(&self, pi: &DVector<f64>, j: usize) -> f64 {
        let n = self.n;
        let k = self.cuts.len();
        if j < k {
            self.cuts[j].b.dot(&pi.rows(0, n)) + pi[n]
        } else if j < k + n {
            pi[j - k]
        } else {
            -pi[j - k - n]
        }
    }

    fn basis_matrix(&self, basis: &[usize]) -> DMatrix<f64> {
        let m = self.n + 1;
        let mut b = DMatrix::zeros(m, m);
        for (r, &j) in basis.iter().enumerate() {
            b.set_column(r, &self.column(j));
        }
        b
    }

    fn run(&self) -> LpOutcome {
        let n = self.n;
        let m = n + 1;
        let k = self.cuts.len();
        let ncols = self.ncols();

        let k0 = {
            let mut best = 0;
            for j in 0..k {
                if self.cuts[j].a > self.cuts[best].a {
                    best = j;
                }
            }
            best
        };
        let mut basis: Vec<usize> = (0..n)
            .map(|i| if self.cuts[k0].b[i] <= 0.0 { k + i } else { k + n + i })
            .collect();
        basis.push(k0);
        let mut in_basis = vec![false; ncols];
        for &j in &basis {
            in_basis[j] = true;
        }

        let mut rhs = DVector::zeros(m);
        rhs[n] = 1.0;
        let mut binv = self
            .basis_matrix(&basis)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(m, m));
        let mut xb = &binv * &rhs;

        let max_iter = 50 * (m + ncols);
        let mut since_refactor = 0;
        let mut degenerate_run = 0;
        let mut converged = false;
        for _ in 0..max_iter {
            if since_refactor >= REFACTOR_EVERY {
                if let Some(inv) = self.basis_matrix(&basis).try_inverse() {
                    binv = inv;
                    xb = &binv * &rhs;
                }
                since_refactor = 0;
            }
            let cb = DVector::from_iterator(m, basis.iter().map(|&j| self.cost(j)));
            let pi = binv.transpose() * cb;

            let bland = degenerate_run >= DEGENERATE_BEFORE_BLAND;
            let mut entering: Option<(usize, f64)> = None;
            for j in (0..ncols).filter(|&j| !in_basis[j]) {
                let r = self.cost(j) - self.price(&pi, j);
                if r > OPT_TOL {
                    if bland {
                        entering = Some((j, r));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| r > best) {
                        entering = Some((j, r));
                    }
                }
            }
            let Some((q, _)) = entering else {
                converged = true;
                break;
            };

            let w = &binv * self.column(q);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if w[r] > PIVOT_TOL {
                    let ratio = xb[r].max(0.0) / w[r];
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && basis[r] < basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, step)) = leave else {
                // Unbounded dual means an infeasible primal, which cannot happen.
                break;
            };

            if step <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            for i in 0..m {
                if i != r {
                    xb[i] -= step * w[i];
                }
            }
            xb[r] = step;
            let piv = w[r];
            let row_r = binv.row(r) / piv;
            for i in 0..m {
                if i != r {
                    let f = w[i];
                    if f != 0.0 {
                        let upd = &row_r * f;
                        let mut row_i = binv.row_mut(i);
                        row_i -= upd;
                    }
                }
            }
            binv.set_row(r, &row_r);
            in_basis[basis[r]] = false;
            in_basis[q] = true;
            basis[r] = q;
            since_refactor += 1;
        }

        if let Some(inv) = self.basis_matrix(&basis).try_inverse() {
            binv = inv;
            xb = &binv * &rhs;
        }
        let cb = DVector::from_iterator(m, basis.iter().map(|&j| self.cost(j)));
        let pi = binv.transpose() * cb;
        let mut residual: f64 = 0.0;
        for j in 0..ncols {
            residual = residual.max(self.cost(j) - self.price(&pi, j));
        }
        residual = residual.max(-xb.min()).max(0.0);
        let mut active: Vec<usize> = basis
            .iter()
            .zip(xb.iter())
            .filter(|(&j, &v)| j < k && v > 1e-12)
            .map(|(&j, _)| j)
            .collect();
        active.sort_unstable();
        LpOutcome {
            pi,
            active,
            residual,
            converged,
        }
    }
}
