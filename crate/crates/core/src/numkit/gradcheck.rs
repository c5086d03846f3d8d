use crate::error::{Error, Result};
use crate::numkit::ParamMap;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares analytic gradients against central differences.
///
/// `f` returns the scalar value and its analytic gradient with respect to
/// every tensor in `point`. The error at each coordinate is
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, point: &ParamMap, eps: f64) -> Result<GradCheck>
where
    F: Fn(&ParamMap) -> Result<(f64, ParamMap)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::contract(format!("eps must lie in [1e-7, 1e-3], got {eps}")));
    }
    let (_, analytic) = f(point)?;
    let mut probe = point.clone();
    let mut out = GradCheck {
        max_rel_err: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (name, tensor) in point {
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::structural(format!("no analytic gradient for {name}")))?;
        if !grad.same_shape(tensor) {
            return Err(Error::structural(format!(
                "analytic gradient for {name} has dims {:?}, expected {:?}",
                grad.dims(),
                tensor.dims()
            )));
        }
        for i in 0..tensor.len() {
            let x0 = tensor.data()[i];
            probe.get_mut(name).expect("cloned").data_mut()[i] = x0 + eps;
            let (fp, _) = f(&probe)?;
            probe.get_mut(name).expect("cloned").data_mut()[i] = x0 - eps;
            let (fm, _) = f(&probe)?;
            probe.get_mut(name).expect("cloned").data_mut()[i] = x0;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::numeric(format!(
                    "objective is non-finite when perturbing {name}[{i}]"
                )));
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let a = grad.data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            out.coordinates += 1;
            if err > out.max_rel_err || out.worst.is_none() {
                out.max_rel_err = err;
                out.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(out)
}
