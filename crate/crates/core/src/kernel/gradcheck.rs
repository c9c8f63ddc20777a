//! Central finite-difference check of tape gradients.

use super::{ParamStore, Tape, Var};
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is numerically zero are compared absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub per_param: Vec<ParamCheck>,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `loss_fn` against central differences for
/// every scalar of every parameter in `store`.
pub fn check_gradients<F>(store: &ParamStore, loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    check_gradients_against(store, &loss_fn, &loss_fn, opts)
}

/// Tape gradient of `analytic_fn` against central differences of
/// `numeric_fn`. The two differ when some quantity is meant to be held
/// constant: `numeric_fn` freezes it explicitly while `analytic_fn` relies on
/// a stop-gradient.
pub fn check_gradients_against<A, N>(
    store: &ParamStore,
    analytic_fn: A,
    numeric_fn: N,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    A: Fn(&mut Tape, &ParamStore) -> Result<Var>,
    N: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grads();
    let mut tape = Tape::new();
    let loss = analytic_fn(&mut tape, &analytic_store)?;
    tape.backward_into(loss, &mut analytic_store)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = numeric_fn(&mut t, s)?;
        Ok(t.scalar(l))
    };

    let mut probe = store.clone();
    let mut per_param = Vec::with_capacity(store.len());
    let mut max_rel_error = 0.0f64;
    let mut worst_param = String::new();
    for id in store.ids() {
        let n = store.value(id).data().len();
        let mut check = ParamCheck {
            name: store.name(id).to_owned(),
            entries: n,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for j in 0..n {
            let orig = store.value(id).data()[j];
            probe.value_mut(id).data_mut()[j] = orig + opts.step;
            let plus = eval(&probe)?;
            probe.value_mut(id).data_mut()[j] = orig - opts.step;
            let minus = eval(&probe)?;
            probe.value_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let analytic = analytic_store.grad(id).data()[j];
            let rel = relative_error(analytic, numeric, opts.abs_floor);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_error = check.max_abs_error.max((analytic - numeric).abs());
        }
        if check.max_rel_error > max_rel_error || worst_param.is_empty() {
            max_rel_error = max_rel_error.max(check.max_rel_error);
            worst_param = check.name.clone();
        }
        per_param.push(check);
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_param,
        per_param,
    })
}
