use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over all coordinates of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// The same maximum restricted to each parameter block.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn worst_param(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Compares analytic gradients with central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps`, one coordinate at a time.
///
/// `f` returns the loss and the analytic gradient of every parameter.
pub fn grad_check<F>(mut f: F, params: &ParamSet, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<(f64, ParamSet)>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NumericInstability("loss at the base point".into()));
    }

    let mut probe = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel_error = 0.0f64;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let grad = analytic
            .get(&name)
            .ok_or_else(|| Error::Contract(format!("no analytic gradient for `{name}`")))?
            .clone();
        let mut block_err = 0.0f64;
        for k in 0..grad.len() {
            let orig = probe.get(&name).expect("present").data()[k];
            probe.get_mut(&name).expect("present").data_mut()[k] = orig + eps;
            let (plus, _) = f(&probe)?;
            probe.get_mut(&name).expect("present").data_mut()[k] = orig - eps;
            let (minus, _) = f(&probe)?;
            probe.get_mut(&name).expect("present").data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[k];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NumericInstability(format!("{name}[{k}]")));
            }
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            block_err = block_err.max(err);
        }
        max_rel_error = max_rel_error.max(block_err);
        per_param.push((name, block_err));
    }
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn quadratic(p: &ParamSet) -> Result<(f64, ParamSet)> {
        let mut tape = Tape::new();
        let v = tape.param("p", p.get("p").unwrap().clone());
        let sq = tape.mul(v, v)?;
        let loss = tape.sum(sq);
        tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], tape.param_grads()))
    }

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::filled(2, 3, 1.0));
        let r = grad_check(quadratic, &p, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn constant_function() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::filled(1, 2, 3.0));
        let r = grad_check(|p| Ok((4.2, p.zeros_like())), &p, 1e-6).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::filled(1, 2, 3.0));
        let corrupted = |p: &ParamSet| {
            let (v, mut g) = quadratic(p)?;
            g.get_mut("p").unwrap().data_mut()[1] *= 1.5;
            Ok((v, g))
        };
        let r = grad_check(corrupted, &p, 1e-6).unwrap();
        assert!(r.max_rel_error > 0.1);
        assert_eq!(r.worst_param().unwrap().0, "p");
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::filled(1, 1, 1.0));
        let r = grad_check(|p| Ok((f64::NAN, p.zeros_like())), &p, 1e-6);
        assert!(matches!(r, Err(Error::NumericInstability(_))));
        assert!(grad_check(quadratic, &p, 0.0).is_err());
    }
}
