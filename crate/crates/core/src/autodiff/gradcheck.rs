use rayon::prelude::*;

use super::{Array, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn evaluate<F>(f: &F, params: &[Array]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

/// Checks every coordinate of `params` with `(f(w+ε) − f(w−ε)) / 2ε`.
///
/// The relative error of a coordinate is `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Array], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }

    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Array> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, a)| (0..a.len()).map(move |c| (p, c)))
        .collect();

    let errors = coords
        .par_iter()
        .map(|&(p, c)| {
            let mut shifted = params.to_vec();
            let base = params[p].data()[c];
            shifted[p].data_mut()[c] = base + eps;
            let plus = evaluate(&f, &shifted)?;
            shifted[p].data_mut()[c] = base - eps;
            let minus = evaluate(&f, &shifted)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let an = analytic[p].data()[c];
            let rel = (an - numeric).abs() / 1f64.max(an.abs()).max(numeric.abs());
            Ok((rel, an, numeric))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: coords.len(),
    };
    for (&(p, c), &(rel, an, num)) in coords.iter().zip(&errors) {
        if report.worst.is_none() || rel > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: rel,
                worst: Some((p, c)),
                analytic: an,
                numeric: num,
                coordinates: coords.len(),
            };
        }
    }
    Ok(report)
}
