use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{ProblemData, ProblemInstance};
use crate::error::{Error, Result};
use crate::oracle::{ModelOrder, Oracle, OracleSample};
use crate::types::Point;

/// Oracle over a borrowed [`ProblemInstance`].
///
/// Branch selection is deterministic: the first maximizing term for
/// max-quartic, the sign pattern with zeros mapped to `+1` for
/// sum-abs-quartic, and the top eigenvector with its first nonzero entry made
/// positive for max-eig.
#[derive(Debug, Clone, Copy)]
pub struct InstanceOracle<'a> {
    inst: &'a ProblemInstance,
}

impl<'a> InstanceOracle<'a> {
    pub fn new(inst: &'a ProblemInstance) -> Self {
        InstanceOracle { inst }
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.inst
    }

    pub fn value_at(&self, x: &Point) -> Result<f64> {
        self.value(x)
    }
}

struct QuarticTerms {
    values: Vec<f64>,
    hx: Vec<DVector<f64>>,
    sq_norm: f64,
}

fn quartic_terms(
    g: &[DVector<f64>],
    h: &[DMatrix<f64>],
    c: &[f64],
    x: &DVector<f64>,
) -> QuarticTerms {
    let sq_norm = x.norm_squared();
    let mut values = Vec::with_capacity(g.len());
    let mut hx = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let hxi = &h[i] * x;
        values.push(g[i].dot(x) + 0.5 * x.dot(&hxi) + c[i] / 24.0 * sq_norm * sq_norm);
        hx.push(hxi);
    }
    QuarticTerms { values, hx, sq_norm }
}

/// Gradient and Hessian of `sum_i w_i t_i` at `x` given `H_i x`.
fn weighted_term_derivatives(
    g: &[DVector<f64>],
    h: &[DMatrix<f64>],
    c: &[f64],
    x: &DVector<f64>,
    terms: &QuarticTerms,
    weights: &[(usize, f64)],
    order: ModelOrder,
) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let n = x.len();
    let mut grad = DVector::zeros(n);
    let mut csum = 0.0;
    for &(i, w) in weights {
        grad += (&g[i] + &terms.hx[i]) * w;
        csum += w * c[i];
    }
    grad += x * (csum / 6.0 * terms.sq_norm);
    let hess = (order == ModelOrder::Quadratic).then(|| {
        let mut hm = DMatrix::zeros(n, n);
        for &(i, w) in weights {
            hm += &h[i] * w;
        }
        let k = csum / 6.0;
        hm += DMatrix::identity(n, n) * (k * terms.sq_norm);
        hm += (x * x.transpose()) * (2.0 * k);
        (&hm + hm.transpose()) * 0.5
    });
    (grad, hess)
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn sign_pattern(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect()
}

fn sign_tag(signs: &[f64]) -> u64 {
    if signs.len() <= 64 {
        signs
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, s)| if *s < 0.0 { acc | (1 << i) } else { acc })
    } else {
        // FNV-1a over the sign bits.
        signs.iter().fold(0xcbf2_9ce4_8422_2325u64, |acc, s| {
            (acc ^ u64::from(*s < 0.0)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

fn assemble(a: &[DMatrix<f64>], x: &DVector<f64>) -> DMatrix<f64> {
    let mut mat = a[0].clone();
    for (i, ai) in a.iter().enumerate().skip(1) {
        mat += ai * x[i - 1];
    }
    mat
}

/// Largest eigenvalue and its unit eigenvector with a deterministic sign.
pub(crate) fn top_eigenpair(mat: DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let m = mat.nrows();
    if !mat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("eigenvalue oracle matrix"));
    }
    let eig = SymmetricEigen::try_new(mat, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let k = first_argmax(eig.eigenvalues.as_slice());
    let mut u: DVector<f64> = eig.eigenvectors.column(k).into_owned();
    let nrm = u.norm();
    if !(nrm > 0.0) {
        return Err(Error::Eigen("zero eigenvector".into()));
    }
    u /= nrm;
    let tol = 1e-12;
    if let Some(first) = u.iter().find(|v| v.abs() > tol) {
        if *first < 0.0 {
            u = -u;
        }
    }
    debug_assert_eq!(u.len(), m);
    Ok((eig.eigenvalues[k], u))
}

fn eig_tag(u: &DVector<f64>) -> u64 {
    u.iamax() as u64
}

fn eig_sample(
    a: &[DMatrix<f64>],
    u: &DVector<f64>,
    base: &Point,
    value: f64,
    order: ModelOrder,
) -> Result<OracleSample> {
    let n = a.len() - 1;
    let grad = DVector::from_fn(n, |i, _| u.dot(&(&a[i + 1] * u)));
    let hess = (order == ModelOrder::Quadratic).then(|| DMatrix::zeros(n, n));
    OracleSample::new(base.clone(), value, grad, hess, order, eig_tag(u))
}

/// Value, first and second derivative of `x^(p+1) sin(1/x) + (sx)^p / p`,
/// the branch of the sine-growth function with sign `s`.
fn sine_branch(p: u32, s: f64, x: f64) -> (f64, f64, f64) {
    let pf = f64::from(p);
    let (w, dw, d2w) = if x == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let (si, co) = (1.0 / x).sin_cos();
        (
            x.powi(p as i32 + 1) * si,
            (pf + 1.0) * x.powi(p as i32) * si - x.powi(p as i32 - 1) * co,
            pf * (pf + 1.0) * x.powi(p as i32 - 1) * si
                - 2.0 * pf * x.powi(p as i32 - 2) * co
                - x.powi(p as i32 - 3) * si,
        )
    };
    let sx = s * x;
    let v = sx.powi(p as i32) / pf;
    let dv = s * sx.powi(p as i32 - 1);
    let d2v = match p {
        1 => 0.0,
        2 => 1.0,
        _ => (pf - 1.0) * sx.powi(p as i32 - 2),
    };
    (w + v, dw + dv, d2w + d2v)
}

fn scalar_sample(
    base: &Point,
    (v, d, d2): (f64, f64, f64),
    order: ModelOrder,
    tag: u64,
) -> Result<OracleSample> {
    let hess = (order == ModelOrder::Quadratic).then(|| DMatrix::from_element(1, 1, d2));
    OracleSample::new(base.clone(), v, DVector::from_element(1, d), hess, order, tag)
}

impl Oracle for InstanceOracle<'_> {
    fn dim(&self) -> usize {
        self.inst.n
    }

    fn query(&self, x: &Point, order: ModelOrder) -> Result<OracleSample> {
        x.check_dim(self.inst.n)?;
        let xv = x.as_vector();
        match (&self.inst.data, self.inst.family) {
            (ProblemData::Quartic { g, h, c }, super::Family::MaxQuartic) => {
                let terms = quartic_terms(g, h, c, xv);
                let k = first_argmax(&terms.values);
                let (grad, hess) =
                    weighted_term_derivatives(g, h, c, xv, &terms, &[(k, 1.0)], order);
                OracleSample::new(x.clone(), terms.values[k], grad, hess, order, k as u64)
            }
            (ProblemData::Quartic { g, h, c }, _) => {
                let terms = quartic_terms(g, h, c, xv);
                let signs = sign_pattern(&terms.values);
                let value = terms.values.iter().map(|v| v.abs()).sum();
                let weights: Vec<(usize, f64)> = signs.iter().copied().enumerate().collect();
                let (grad, hess) = weighted_term_derivatives(g, h, c, xv, &terms, &weights, order);
                OracleSample::new(x.clone(), value, grad, hess, order, sign_tag(&signs))
            }
            (ProblemData::Eigen { a }, _) => {
                let (lambda, u) = top_eigenpair(assemble(a, xv))?;
                eig_sample(a, &u, x, lambda, order)
            }
            (ProblemData::Sine { p }, _) => {
                let s = if x[0] >= 0.0 { 1.0 } else { -1.0 };
                scalar_sample(x, sine_branch(*p, s, x[0]), order, u64::from(s < 0.0))
            }
            (ProblemData::Toy, _) => {
                let hess = (order == ModelOrder::Quadratic)
                    .then(|| DMatrix::identity(self.inst.n, self.inst.n) * 2.0);
                OracleSample::new(x.clone(), xv.norm_squared(), xv * 2.0, hess, order, 0)
            }
        }
    }

    fn value(&self, x: &Point) -> Result<f64> {
        x.check_dim(self.inst.n)?;
        let xv = x.as_vector();
        let v = match (&self.inst.data, self.inst.family) {
            (ProblemData::Quartic { g, h, c }, super::Family::MaxQuartic) => {
                let terms = quartic_terms(g, h, c, xv);
                terms.values[first_argmax(&terms.values)]
            }
            (ProblemData::Quartic { g, h, c }, _) => {
                quartic_terms(g, h, c, xv).values.iter().map(|v| v.abs()).sum()
            }
            (ProblemData::Eigen { a }, _) => top_eigenpair(assemble(a, xv))?.0,
            (ProblemData::Sine { p }, _) => {
                let s = if x[0] >= 0.0 { 1.0 } else { -1.0 };
                sine_branch(*p, s, x[0]).0
            }
            (ProblemData::Toy, _) => xv.norm_squared(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("oracle value"))
        }
    }

    fn branch_sample(
        &self,
        sample: &OracleSample,
        z: &Point,
        order: ModelOrder,
    ) -> Option<Result<OracleSample>> {
        if let Err(e) = z.check_dim(self.inst.n) {
            return Some(Err(e));
        }
        let zv = z.as_vector();
        let tag = sample.selector_tag();
        Some(match (&self.inst.data, self.inst.family) {
            (ProblemData::Quartic { g, h, c }, super::Family::MaxQuartic) => {
                let k = tag as usize;
                let terms = quartic_terms(g, h, c, zv);
                let (grad, hess) =
                    weighted_term_derivatives(g, h, c, zv, &terms, &[(k, 1.0)], order);
                OracleSample::new(z.clone(), terms.values[k], grad, hess, order, tag)
            }
            (ProblemData::Quartic { g, h, c }, _) => {
                let base_terms = quartic_terms(g, h, c, sample.base().as_vector());
                let signs = sign_pattern(&base_terms.values);
                let terms = quartic_terms(g, h, c, zv);
                let value = terms.values.iter().zip(&signs).map(|(v, s)| v * s).sum();
                let weights: Vec<(usize, f64)> = signs.iter().copied().enumerate().collect();
                let (grad, hess) = weighted_term_derivatives(g, h, c, zv, &terms, &weights, order);
                OracleSample::new(z.clone(), value, grad, hess, order, tag)
            }
            (ProblemData::Eigen { a }, _) => {
                top_eigenpair(assemble(a, sample.base().as_vector())).and_then(|(_, u)| {
                    let value = u.dot(&(assemble(a, zv) * &u));
                    eig_sample(a, &u, z, value, order)
                })
            }
            (ProblemData::Sine { p }, _) => {
                let s = if tag == 0 { 1.0 } else { -1.0 };
                scalar_sample(z, sine_branch(*p, s, z[0]), order, tag)
            }
            (ProblemData::Toy, _) => self.query(z, order),
        })
    }
}
