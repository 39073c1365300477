//! Central-difference gradient verification.
//!
//! The checker rebuilds the computation from scratch for every probe, always
//! with the same tape seed, so stochastic ops like dropout replay the same
//! masks and the loss stays a deterministic function of the parameters.

use indexmap::IndexMap;
use std::sync::Arc;

use super::{NodeId, SharedTensor, Tape, Tensor};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Parameter name and flat element index of the worst relative error.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst element.
    pub worst_pair: (f64, f64),
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }

    /// One-line summary naming the worst element, for assertion messages.
    pub fn describe(&self) -> String {
        match &self.worst {
            Some((name, idx)) => format!(
                "max rel err {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}) over {} elements",
                self.max_rel_err, name, idx, self.worst_pair.0, self.worst_pair.1, self.elements_checked
            ),
            None => format!("no elements checked ({} total)", self.elements_checked),
        }
    }
}

/// Compares analytic gradients against central finite differences for every
/// element of every parameter. `build` must construct the loss (a scalar
/// node) on the given tape from the given parameter bindings; it is invoked
/// many times and must be deterministic apart from the parameter values.
pub fn grad_check<F>(
    params: &IndexMap<String, Tensor>,
    seed: u64,
    eps: f64,
    build: F,
) -> GradCheckReport
where
    F: Fn(&mut Tape, &IndexMap<String, SharedTensor>) -> NodeId,
{
    let share = |p: &IndexMap<String, Tensor>| -> IndexMap<String, SharedTensor> {
        p.iter().map(|(k, v)| (k.clone(), Arc::new(v.clone()))).collect()
    };
    let eval = |p: &IndexMap<String, Tensor>| -> f64 {
        let mut tape = Tape::new(seed);
        let loss = build(&mut tape, &share(p));
        let value = tape.value(loss);
        assert_eq!(
            value.numel(),
            1,
            "grad_check: loss must be scalar, got shape {:?}",
            value.shape()
        );
        value.data()[0]
    };

    // One analytic pass.
    let mut tape = Tape::new(seed);
    let shared = share(params);
    let loss = build(&mut tape, &shared);
    tape.backward(loss);
    let analytic: IndexMap<String, Tensor> = params
        .iter()
        .map(|(name, value)| {
            let node = tape.param_node(name).unwrap_or_else(|| {
                panic!("grad_check: builder never bound parameter {:?}", name)
            });
            let g = tape
                .grad(node)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(value.shape()));
            (name.clone(), g)
        })
        .collect();

    let mut report = GradCheckReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst: None,
        worst_pair: (0.0, 0.0),
        elements_checked: 0,
    };
    let mut probe = params.clone();
    for (name, value) in params {
        for idx in 0..value.numel() {
            let orig = value.data()[idx];
            probe[name].data_mut()[idx] = orig + eps;
            let up = eval(&probe);
            probe[name].data_mut()[idx] = orig - eps;
            let down = eval(&probe);
            probe[name].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[name].data()[idx];
            let abs = (a - numeric).abs();
            let rel = abs / f64::max(1.0, f64::max(a.abs(), numeric.abs()));
            if abs > report.max_abs_err {
                report.max_abs_err = abs;
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), idx));
                report.worst_pair = (a, numeric);
            }
            report.elements_checked += 1;
        }
    }
    report
}
