//! Central finite-difference gradient checking.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Worst per-entry relative error between analytic and numerical gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compare the analytic gradient of the scalar built by `build` with central
/// differences of step `h`, for every entry of every input in `inputs`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(Error::Shape("check_gradients: output must be scalar".into()));
    }
    g.backward(out)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(&inputs[i].shape));
        for j in 0..inputs[i].len() {
            let x0 = xs[i].data[j];
            xs[i].data[j] = x0 + h;
            let fp = eval(&xs)?;
            xs[i].data[j] = x0 - h;
            let fm = eval(&xs)?;
            xs[i].data[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked,
    })
}
