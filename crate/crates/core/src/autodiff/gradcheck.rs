use super::params::ParameterStore;
use super::tape::{NodeId, Tape};
use crate::error::{KgcError, Result};

/// Outcome of a central-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: Option<(String, usize)>,
    pub components: usize,
}

/// Compares reverse-mode gradients of `f` against central differences over every
/// component of every parameter in `store`.
///
/// The error per component is `|a - n| / max(|a|, |n|, 1e-8)`. `f` builds the scalar
/// loss on a fresh tape each call and must be deterministic.
pub fn check_gradients<F>(store: &ParameterStore<f64>, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Result<NodeId>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(KgcError::config(format!(
            "gradcheck: eps {eps} outside [1e-7, 1e-4]"
        )));
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss, store)?;
    drop(tape);

    let eval = |s: &ParameterStore<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        Ok(t.value(l).data()[0])
    };

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        components: 0,
    };
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for name in names {
        let analytic = grads.param(&name).expect("every parameter has a gradient");
        for i in 0..analytic.len() {
            let orig = work.get(&name).expect("present").data()[i];
            let mut at = |offset: f64| -> Result<f64> {
                work.get_mut(&name).expect("present").data_mut()[i] = orig + offset;
                eval(&work)
            };
            let (p1, m1, p2, m2) = (at(eps)?, at(-eps)?, at(2.0 * eps)?, at(-2.0 * eps)?);
            work.get_mut(&name).expect("present").data_mut()[i] = orig;

            // Fourth-order central stencil.
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.components += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
