//! First- and second-order oracle for max-type functions.
//!
//! An oracle returns `f(x)` together with the derivatives of *one* active
//! selection function at `x`. The identity of that selection function is kept
//! behind [`OracleSample::selector_tag`] and [`Oracle::branch_sample`], which
//! exist for tests and diagnostics only; the model, builder and driver never
//! read them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Point;

/// Order `q` of the Taylor expansions used in the cutting-plane model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum ModelOrder {
    Linear,
    Quadratic,
}

impl ModelOrder {
    pub fn degree(self) -> u32 {
        match self {
            ModelOrder::Linear => 1,
            ModelOrder::Quadratic => 2,
        }
    }
}

impl TryFrom<u32> for ModelOrder {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        match q {
            1 => Ok(ModelOrder::Linear),
            2 => Ok(ModelOrder::Quadratic),
            _ => Err(Error::invalid(format!("model order must be 1 or 2, got {q}"))),
        }
    }
}

impl From<ModelOrder> for u32 {
    fn from(q: ModelOrder) -> u32 {
        q.degree()
    }
}

/// Value and derivative tensors of the selection function chosen at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    base: Point,
    value: f64,
    grad: DVector<f64>,
    hess: Option<DMatrix<f64>>,
    order: ModelOrder,
    selector_tag: u64,
}

impl OracleSample {
    pub fn new(
        base: Point,
        value: f64,
        grad: DVector<f64>,
        hess: Option<DMatrix<f64>>,
        order: ModelOrder,
        selector_tag: u64,
    ) -> Result<Self> {
        let n = base.dim();
        if !value.is_finite() {
            return Err(Error::NonFinite("oracle value"));
        }
        if grad.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: grad.len(),
            });
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("oracle gradient"));
        }
        match (&hess, order) {
            (None, ModelOrder::Linear) => {}
            (Some(h), ModelOrder::Quadratic) => {
                if h.nrows() != n || h.ncols() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: h.nrows(),
                    });
                }
                if !h.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("oracle Hessian"));
                }
                let scale = h.amax().max(1.0);
                for i in 0..n {
                    for j in 0..i {
                        if (h[(i, j)] - h[(j, i)]).abs() > 1e-12 * scale {
                            return Err(Error::invalid("oracle Hessian is not symmetric"));
                        }
                    }
                }
            }
            _ => {
                return Err(Error::invalid(
                    "Hessian must be present exactly when the order is quadratic",
                ))
            }
        }
        Ok(OracleSample {
            base,
            value,
            grad,
            hess,
            order,
            selector_tag,
        })
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &DVector<f64> {
        &self.grad
    }

    pub fn hess(&self) -> Option<&DMatrix<f64>> {
        self.hess.as_ref()
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Opaque label of the selection function. Diagnostic use only.
    pub fn selector_tag(&self) -> u64 {
        self.selector_tag
    }
}

/// Access to `f` and the derivatives of an active selection function.
///
/// Implementations must be pure: identical inputs give bit-identical outputs,
/// and concurrent queries must not interfere.
pub trait Oracle: Send + Sync {
    fn dim(&self) -> usize;

    fn query(&self, x: &Point, order: ModelOrder) -> Result<OracleSample>;

    fn value(&self, x: &Point) -> Result<f64> {
        Ok(self.query(x, ModelOrder::Linear)?.value)
    }

    /// Value and derivatives at `z` of the selection function that was chosen
    /// at `sample.base()`. `None` if the oracle cannot evaluate branches away
    /// from their base point. Diagnostic use only.
    fn branch_sample(
        &self,
        _sample: &OracleSample,
        _z: &Point,
        _order: ModelOrder,
    ) -> Option<Result<OracleSample>> {
        None
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn query(&self, x: &Point, order: ModelOrder) -> Result<OracleSample> {
        (**self).query(x, order)
    }

    fn value(&self, x: &Point) -> Result<f64> {
        (**self).value(x)
    }

    fn branch_sample(
        &self,
        sample: &OracleSample,
        z: &Point,
        order: ModelOrder,
    ) -> Option<Result<OracleSample>> {
        (**self).branch_sample(sample, z, order)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn query(&self, x: &Point, order: ModelOrder) -> Result<OracleSample> {
        (**self).query(x, order)
    }

    fn value(&self, x: &Point) -> Result<f64> {
        (**self).value(x)
    }

    fn branch_sample(
        &self,
        sample: &OracleSample,
        z: &Point,
        order: ModelOrder,
    ) -> Option<Result<OracleSample>> {
        (**self).branch_sample(sample, z, order)
    }
}

/// Taylor expansion of the sampled selection function, evaluated at `z`.
pub fn taylor_eval(sample: &OracleSample, z: &Point) -> Result<f64> {
    z.check_dim(sample.dim())?;
    Ok(taylor_eval_slice(sample, z))
}

/// [`taylor_eval`] without the dimension check.
pub(crate) fn taylor_eval_slice(sample: &OracleSample, z: &[f64]) -> f64 {
    let y = sample.base.as_vector();
    let d = DVector::from_iterator(z.len(), z.iter().zip(y.iter()).map(|(a, b)| a - b));
    let mut v = sample.value + sample.grad.dot(&d);
    if let Some(h) = &sample.hess {
        v += 0.5 * d.dot(&(h * &d));
    }
    v
}

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// Max over gradient and Hessian entries of `|fd - exact| / max(||exact||_inf, 1)`.
    pub max_rel_error: f64,
    pub grad_error: f64,
    pub hess_error: f64,
    /// Coordinate probes (a `±h` pair each) that changed branch.
    pub rejected_probes: usize,
    pub total_probes: usize,
    /// More than half of the probes landed on a different selection function.
    pub kink_adjacent: bool,
}

/// Central-difference check of the oracle's gradient and Hessian at `x`.
///
/// The probe pair `x ± h e_i` is rejected when the oracle selects a different
/// branch at either end. Accepted coordinates are differenced along the selected branch
/// (through [`Oracle::branch_sample`] when available, otherwise through the
/// probe values and probe gradients).
pub fn finite_difference_check(oracle: &dyn Oracle, x: &Point, h: f64) -> Result<FdReport> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let n = oracle.dim();
    x.check_dim(n)?;
    let center = oracle.query(x, ModelOrder::Quadratic)?;
    let exact_hess = center
        .hess()
        .cloned()
        .ok_or_else(|| Error::Internal("quadratic query returned no Hessian".into()))?;

    let mut rejected = 0usize;
    let mut accepted = vec![false; n];
    let mut fd_grad = DVector::zeros(n);
    let mut fd_hess = DMatrix::zeros(n, n);

    for i in 0..n {
        let mut plus = x.as_vector().clone();
        plus[i] += h;
        let mut minus = x.as_vector().clone();
        minus[i] -= h;
        let plus = Point::from_vector(plus)?;
        let minus = Point::from_vector(minus)?;
        let qp = oracle.query(&plus, ModelOrder::Linear)?;
        let qm = oracle.query(&minus, ModelOrder::Linear)?;
        let same_p = qp.selector_tag() == center.selector_tag();
        let same_m = qm.selector_tag() == center.selector_tag();
        if !(same_p && same_m) {
            rejected += 1;
            continue;
        }
        accepted[i] = true;
        let (bp, bm) = match (
            oracle.branch_sample(&center, &plus, ModelOrder::Linear),
            oracle.branch_sample(&center, &minus, ModelOrder::Linear),
        ) {
            (Some(bp), Some(bm)) => (bp?, bm?),
            _ => (qp, qm),
        };
        fd_grad[i] = (bp.value() - bm.value()) / (2.0 * h);
        let col = (bp.grad() - bm.grad()) / (2.0 * h);
        fd_hess.set_column(i, &col);
    }

    let total = n;
    let kink_adjacent = 2 * rejected > total;

    let grad_scale = center.grad().amax().max(1.0);
    let hess_scale = exact_hess.amax().max(1.0);
    let mut grad_error: f64 = 0.0;
    let mut hess_error: f64 = 0.0;
    for i in (0..n).filter(|&i| accepted[i]) {
        grad_error = grad_error.max((fd_grad[i] - center.grad()[i]).abs() / grad_scale);
        for r in 0..n {
            hess_error = hess_error.max((fd_hess[(r, i)] - exact_hess[(r, i)]).abs() / hess_scale);
        }
    }
    Ok(FdReport {
        max_rel_error: grad_error.max(hess_error),
        grad_error,
        hess_error,
        rejected_probes: rejected,
        total_probes: total,
        kink_adjacent,
    })
}

#[cfg(test)]
pub(crate) mod testing {
    //! Small closed-form oracles shared by unit tests.

    use super::*;

    /// `f(x) = sum_i x_i^2`.
    pub struct Square(pub usize);

    impl Oracle for Square {
        fn dim(&self) -> usize {
            self.0
        }

        fn query(&self, x: &Point, order: ModelOrder) -> Result<OracleSample> {
            let v = x.as_vector();
            let hess = (order == ModelOrder::Quadratic)
                .then(|| DMatrix::identity(self.0, self.0) * 2.0);
            OracleSample::new(x.clone(), v.norm_squared(), v * 2.0, hess, order, 0)
        }

        fn branch_sample(
            &self,
            _sample: &OracleSample,
            z: &Point,
            order: ModelOrder,
        ) -> Option<Result<OracleSample>> {
            Some(self.query(z, order))
        }
    }

    /// `f(x) = |x|` in one dimension; branch `+x` at `x >= 0`, `-x` otherwise.
    pub struct Abs;

    impl Oracle for Abs {
        fn dim(&self) -> usize {
            1
        }

        fn query(&self, x: &Point, order: ModelOrder) -> Result<OracleSample> {
            let s = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            let hess = (order == ModelOrder::Quadratic).then(|| DMatrix::zeros(1, 1));
            OracleSample::new(
                x.clone(),
                x[0].abs(),
                DVector::from_element(1, s),
                hess,
                order,
                u64::from(s < 0.0),
            )
        }

        fn branch_sample(
            &self,
            sample: &OracleSample,
            z: &Point,
            order: ModelOrder,
        ) -> Option<Result<OracleSample>> {
            let s = sample.grad()[0];
            let hess = (order == ModelOrder::Quadratic).then(|| DMatrix::zeros(1, 1));
            Some(OracleSample::new(
                z.clone(),
                s * z[0],
                DVector::from_element(1, s),
                hess,
                order,
                sample.selector_tag(),
            ))
        }
    }

    pub fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }
}
