//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

pub const GRAD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so entries whose true
/// gradient is ~0 are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    Ok(g.value(loss).item())
}

/// Compares backward-pass gradients of the scalar built by `f` with
/// central differences, for every scalar in every parameter of `store`.
/// Existing gradients in `store` are cleared.
pub fn grad_check<F>(store: &mut ParamStore, step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    {
        let mut g = Graph::new();
        let loss = f(&mut g, store)?;
        g.backward(loss, store)?;
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).value.numel() {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + step;
            let plus = eval(store, &f)?;
            store.get_mut(id).value.data_mut()[k] = orig - step;
            let minus = eval(store, &f)?;
            store.get_mut(id).value.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = store.get(id).grad.data()[k];
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic, numeric));
            report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn detects_wrong_gradient() {
        assert!(relative_error(1.0, 1.1) > 0.09);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn quadratic_passes() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![0.3, -1.2, 2.0])).unwrap();
        let report = grad_check(&mut store, GRAD_STEP, |g, s| {
            let v = g.param(s, x);
            let sq = g.mul(v, v)?;
            let t = g.tanh(sq);
            Ok(g.sum(t))
        })
        .unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }
}
