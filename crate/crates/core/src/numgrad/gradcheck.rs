use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared absolutely rather than
/// relatively, so finite-difference round-off on near-zero partials does
/// not read as a failure.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (parameter index, flat coordinate) of the worst relative error.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences `(f(x+eps) - f(x-eps)) / 2eps`, one coordinate at a time.
///
/// `f` receives a fresh graph and one trainable [`Var`] per entry of
/// `params`, and must return a one-element output.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::Config(format!(
            "finite-difference step {eps} outside [1e-6, 1e-4]"
        )));
    }

    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| g.param(p)).collect();
        let out = f(&mut g, &vars)?;
        let grads = g.backward(out)?;
        vars.iter()
            .zip(params)
            .map(|(&v, p)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.shape()))
            })
            .collect()
    };

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.input(p)).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    for pi in 0..work.len() {
        for ci in 0..work[pi].len() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[ci] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ci];
            let rel = relative_error(a, numeric);
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ci);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}
