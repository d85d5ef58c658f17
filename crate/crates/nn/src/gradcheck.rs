//! Finite-difference check of `Graph::backward` with the fourth-order
//! central stencil.

use crate::graph::{Graph, NodeId};
use crate::params::{Gradients, ParamSet};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a ReLU kink,
    /// where the derivative is undefined.
    pub skipped_kinks: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero gradients
/// from amplifying rounding noise.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of the scalar built by `loss` against
/// fourth-order central differences with step `h` for every coordinate.
pub fn check<F>(params: &mut ParamSet<f64>, h: f64, loss: F) -> GradCheckReport
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> NodeId,
{
    let (analytic, base_sig) = {
        let mut g = Graph::new(params);
        let l = loss(&mut g);
        (g.backward(l, 1.0), g.kink_signature())
    };
    compare(params, &analytic, base_sig, h, &loss)
}

fn eval<F>(params: &ParamSet<f64>, loss: &F) -> (f64, u64)
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> NodeId,
{
    let mut g = Graph::new(params);
    let l = loss(&mut g);
    (g.value(l).data()[0], g.kink_signature())
}

fn compare<F>(params: &mut ParamSet<f64>, analytic: &Gradients<f64>, base_sig: u64, h: f64, loss: &F) -> GradCheckReport
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> NodeId,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            let mut at = |offset: f64| {
                params.get_mut(id).data_mut()[k] = orig + offset;
                eval(params, loss)
            };
            let probes = [at(2.0 * h), at(h), at(-h), at(-2.0 * h)];
            params.get_mut(id).data_mut()[k] = orig;
            if probes.iter().any(|p| p.1 != base_sig) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (8.0 * (probes[1].0 - probes[2].0) - (probes[0].0 - probes[3].0)) / (12.0 * h);
            let e = rel_error(analytic.get(id).data()[k], numeric, REL_FLOOR);
            report.checked += 1;
            if e > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = e;
                report.worst = Some((params.name(id).to_string(), k));
            }
        }
    }
    report
}
