//! Central finite-difference verification of analytic gradients.

use crate::error::{DlnError, Result};
use crate::store::ParamStore;
use crate::tensor::Scalar;

/// Per-parameter and global maxima of the relative error between analytic
/// and numeric gradients. Frozen parameters do not appear.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares the gradients already stored on every trainable entry against
/// central differences `(f(θ+h) − f(θ−h)) / 2h` of `loss_fn`.
///
/// Relative error uses denominator `max(|analytic|, |numeric|, 1e-8)`.
/// `loss_fn` must be a pure function of the store values; this is verified
/// by evaluating it twice up front.
pub fn finite_difference_check<T, F>(
    store: &mut ParamStore<T>,
    mut loss_fn: F,
    h: f64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> Result<T>,
{
    if h <= 0.0 {
        return Err(DlnError::Argument(format!("step h must be positive, got {h}")));
    }
    let l0 = loss_fn(store)?.as_f64();
    let l1 = loss_fn(store)?.as_f64();
    if l0 != l1 {
        return Err(DlnError::Consistency(format!(
            "loss_fn is not deterministic: {l0} vs {l1}"
        )));
    }

    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.to_string())
        .collect();
    // analytic grads are read before any perturbation
    let mut analytic: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    for name in &names {
        let grad = store
            .tensor(name)?
            .grad()
            .ok_or_else(|| DlnError::State(format!("trainable parameter `{name}` has no gradient")))?
            .iter()
            .map(|g| g.as_f64())
            .collect();
        analytic.push(grad);
    }

    let step = T::from_f64(h);
    let mut per_param = Vec::with_capacity(names.len());
    let mut global_max = 0.0f64;
    for (name, grads) in names.iter().zip(analytic.iter()) {
        let numel = store.tensor(name)?.numel();
        let mut param_max = 0.0f64;
        for i in 0..numel {
            let original = store.tensor(name)?.values()[i];
            store.tensor_mut(name)?.values_mut()[i] = original + step;
            let plus = loss_fn(store)?.as_f64();
            store.tensor_mut(name)?.values_mut()[i] = original - step;
            let minus = loss_fn(store)?.as_f64();
            store.tensor_mut(name)?.values_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grads[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            param_max = param_max.max(rel);
        }
        global_max = global_max.max(param_max);
        per_param.push((name.clone(), param_max));
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_error: global_max,
    })
}
