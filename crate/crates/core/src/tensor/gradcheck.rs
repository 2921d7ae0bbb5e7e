//! Central-difference gradient verification.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Gradients, ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

const STEP: f64 = 1e-5;
/// Denominator floor so that gradients that are zero on both routes compare as equal.
const FLOOR: f64 = 1e-6;

/// Compares tape gradients with central differences (h = 1e-5) for every
/// parameter. At most `max_per_param` evenly spaced elements of each tensor
/// are perturbed (`None` checks all of them).
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamStore,
    tol: f64,
    max_per_param: Option<usize>,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, TensorError>,
{
    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut tape = Tape::new(store);
        let l = loss_fn(&mut tape)?;
        let v = tape.value(l).item().ok_or_else(|| TensorError::Contract("loss is not scalar".into()))?;
        if !v.is_finite() {
            return Err(TensorError::Numeric("non-finite loss in gradient check".to_string()));
        }
        Ok(v)
    };
    let mut grads = Gradients::new();
    {
        let mut tape = Tape::new(params);
        let l = loss_fn(&mut tape)?;
        tape.backward(l, &mut grads, 1.0)?;
    }
    if !grads.is_finite() {
        return Err(TensorError::Numeric("non-finite analytic gradient".to_string()));
    }
    let mut work = params.clone();
    let mut groups = Vec::new();
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let analytic = grads.dense(id, params);
        let n = analytic.len();
        let picks: Vec<usize> = match max_per_param {
            Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
            _ => (0..n).collect(),
        };
        let mut worst: f64 = 0.0;
        let mut worst_abs: f64 = 0.0;
        for &k in &picks {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + STEP;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - STEP;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
            worst_abs = worst_abs.max((a - numeric).abs());
        }
        groups.push(GroupReport { name: params.name(id).to_string(), checked: picks.len(), max_rel_error: worst, max_abs_error: worst_abs });
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { groups, max_rel_error, tol })
}
