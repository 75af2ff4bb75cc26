//! Central-difference gradient checking in double precision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of `|analytic - numeric| / max(1, |analytic|)`
    pub max_rel_error: f64,
    pub checked: usize,
    /// coordinates skipped because a kink lies within `10 * eps`
    pub skipped: usize,
}

const KINK_TOL: f64 = 1e-4;
const WEIGHT_SEED: u64 = 0x6772_6164;

/// Compares backprop gradients of `f` against central differences.
///
/// `f` builds a graph from input vars; a non-scalar output is reduced with a
/// fixed pseudo-random weighting so every output coordinate contributes.
pub fn grad_check<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut weights: Option<Tensor<f64>> = None;
    let mut eval = |xs: &[Tensor<f64>], want_grads: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let mut out = f(&mut g, &vars)?;
        if g.value(out).len() != 1 {
            let w = weights.get_or_insert_with(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(WEIGHT_SEED);
                Tensor::uniform(g.value(out).shape(), -1.0, 1.0, &mut rng)
            });
            out = g.weighted_sum(out, w.clone())?;
        }
        let loss = g.value(out).data()[0];
        if !want_grads {
            return Ok((loss, vec![]));
        }
        let grads = g.backward(out)?;
        let gs = vars
            .iter()
            .zip(xs)
            .map(|(v, x)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
            .collect();
        Ok((loss, gs))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut report = GradCheckReport::default();
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let orig = xs[i].data()[j];
            let mut at = |delta: f64| -> Result<f64> {
                xs[i].data_mut()[j] = orig + delta;
                let r = eval(&xs, false).map(|(l, _)| l);
                xs[i].data_mut()[j] = orig;
                r
            };
            let f0 = at(0.0)?;
            let (fp, fm) = (at(eps)?, at(-eps)?);
            let (fp10, fm10) = (at(10.0 * eps)?, at(-10.0 * eps)?);
            let central = (fp - fm) / (2.0 * eps);
            let central10 = (fp10 - fm10) / (20.0 * eps);
            let one_sided_gap = ((fp - f0) - (f0 - fm)).abs() / eps;
            let scale = central.abs().max(1.0);
            if (central - central10).abs() > KINK_TOL * scale || one_sided_gap > KINK_TOL * scale {
                report.skipped += 1;
                continue;
            }
            let a = analytic[i].data()[j];
            let err = (a - central).abs() / a.abs().max(1.0);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
    }
    Ok(report)
}
