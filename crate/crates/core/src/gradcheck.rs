//! Central finite-difference check of tape gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Largest relative disagreement between the tape gradient of the scalar
/// `f(params)` and central differences with step `h`, over every coordinate
/// of every parameter. The relative error of one coordinate is
/// `|g_a - g_n| / max(1, |g_a|, |g_n|)`.
///
/// `params` are perturbed in place and restored before returning.
pub fn grad_check<F>(params: &mut [Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::invalid("finite-difference step must lie in [1e-6, 1e-4]"));
    }
    let analytic = analytic_gradients(params, &f)?;
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        for c in 0..params[p].len() {
            let orig = params[p].data()[c];
            params[p].data_mut()[c] = orig + h;
            let plus = evaluate(params, &f);
            params[p].data_mut()[c] = orig - h;
            let minus = evaluate(params, &f);
            params[p].data_mut()[c] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(Error::NonFinite { op: "grad_check" });
            }
            let a = analytic[p].data()[c];
            let rel = abs(a - numeric) / 1.0f64.max(abs(a)).max(abs(numeric));
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Value of `f(params)` without recording gradients.
pub fn evaluate<F>(params: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Tape gradients of `f` with respect to each parameter.
pub fn analytic_gradients<F>(params: &[Tensor], f: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars.iter().map(|&v| grads.wrt(&tape, v)).collect())
}
