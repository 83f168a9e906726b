//! Central finite-difference gradient checking in double precision.

use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};

/// Gradient entries smaller than this are compared in absolute rather than
/// relative terms, so rounding noise on near-zero gradients does not dominate.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// A scalar function with an analytic gradient to be checked.
pub trait Differentiable {
    fn value(&self, x: &Tensor<f64>) -> Result<f64>;
    fn gradient(&self, x: &Tensor<f64>) -> Result<Vec<f64>>;
}

/// Adapts a closure that records a scalar-valued computation on a tape.
pub struct TapeFn<F>(pub F);

impl<F> TapeFn<F>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    fn run(&self, x: &Tensor<f64>, with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let mut tape = Tape::new();
        let input = if with_grad {
            tape.param(x.clone())
        } else {
            tape.constant(x.clone())
        };
        let out = (self.0)(&mut tape, input)?;
        if tape.value(out).numel() != 1 {
            return Err(Error::Usage("gradcheck target must be scalar-valued".into()));
        }
        let value = tape.value(out).data()[0];
        if !with_grad {
            return Ok((value, None));
        }
        tape.backward(out)?;
        let grad = tape
            .grad(input)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; x.numel()]);
        Ok((value, Some(grad)))
    }
}

impl<F> Differentiable for TapeFn<F>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    fn value(&self, x: &Tensor<f64>) -> Result<f64> {
        Ok(self.run(x, false)?.0)
    }

    fn gradient(&self, x: &Tensor<f64>) -> Result<Vec<f64>> {
        Ok(self.run(x, true)?.1.unwrap_or_default())
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the analytic gradient of `f` at `x` against central differences
/// with step `h`; passes iff the maximum relative error is at most `tol`.
pub fn gradcheck<D: Differentiable + ?Sized>(f: &D, x: &Tensor<f64>, h: f64, tol: f64) -> Result<GradcheckReport> {
    let analytic = f.gradient(x)?;
    if analytic.len() != x.numel() {
        return Err(Error::dim("gradcheck", x.shape(), &[analytic.len()]));
    }
    let mut numeric = Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f.value(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f.value(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("non-finite value perturbing coordinate {i}")));
        }
        numeric.push((plus - minus) / (2.0 * h));
    }
    let (worst_index, max_rel_err) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .enumerate()
        .fold((0, 0.0f64), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradcheckReport {
        max_rel_err,
        worst_index,
        analytic,
        numeric,
        tol,
        passed: max_rel_err <= tol,
    })
}
