//! Central finite-difference checks of the analytic gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use super::NnError;

/// Worst relative error found, and where.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked_values: usize,
}

/// Below this combined norm a gradient counts as identically zero and the
/// error is measured against the floor instead; otherwise round-off in the
/// finite differences of an exactly-zero gradient reads as a 100% error.
pub const NORM_FLOOR: f64 = 1e-4;

/// `‖a − n‖ / max(‖a‖ + ‖n‖, NORM_FLOOR)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / (norm(analytic) + norm(numeric)).max(NORM_FLOOR)
}

/// Fixed, non-degenerate weights used to contract a tensor output to a
/// scalar so every output element is probed.
fn probe(shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|i| ((i as f64) * 1.618_033_988 + 0.5).sin() + 0.1).collect();
    Tensor::new(shape, data).expect("probe shape")
}

/// Compares reverse-mode gradients of `⟨probe, f(inputs)⟩` with central
/// differences of step `h`, for every input tensor and every trainable
/// parameter in `store`.
///
/// `f` must be deterministic.
pub fn check<F>(store: &mut ParamStore, inputs: &[Tensor], h: f64, f: F) -> Result<GradReport, NnError>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var, NnError>,
{
    let run = |store: &ParamStore, inputs: &[Tensor]| -> Result<(Graph, Vec<Var>, Var), NnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, store, &vars)?;
        Ok((g, vars, out))
    };
    let (g, vars, out) = run(store, inputs)?;
    let w = probe(g.shape(out));
    let objective = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64, NnError> {
        let (g, _, out) = run(store, inputs)?;
        Ok(g.value(out).data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
    };
    let grads = g.backward_with(out, w.clone());

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked_values: 0,
    };
    let mut record = |name: String, analytic: Vec<f64>, numeric: Vec<f64>| {
        let e = relative_error(&analytic, &numeric);
        report.checked_values += analytic.len();
        if e >= report.max_rel_error {
            report.max_rel_error = e;
            report.worst = name;
        }
    };

    for (i, (var, t)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get(*var).map_or_else(|| vec![0.0; t.len()], |g| g.data().to_vec());
        let mut numeric = Vec::with_capacity(t.len());
        let mut perturbed = inputs.to_vec();
        for j in 0..t.len() {
            let orig = t.data()[j];
            perturbed[i].data_mut()[j] = orig + h;
            let plus = objective(store, &perturbed)?;
            perturbed[i].data_mut()[j] = orig - h;
            let minus = objective(store, &perturbed)?;
            perturbed[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * h));
        }
        record(format!("input {i}"), analytic, numeric);
    }

    let param_grads: Vec<_> = grads.params().map(|(id, g)| (id, g.data().to_vec())).collect();
    let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    for id in ids {
        let len = store.value(id).len();
        let analytic = param_grads
            .iter()
            .find(|(p, _)| *p == id)
            .map_or_else(|| vec![0.0; len], |(_, g)| g.clone());
        let mut numeric = Vec::with_capacity(len);
        for j in 0..len {
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + h;
            let plus = objective(store, inputs)?;
            store.value_mut(id).data_mut()[j] = orig - h;
            let minus = objective(store, inputs)?;
            store.value_mut(id).data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * h));
        }
        record(store.name(id).to_string(), analytic, numeric);
    }
    Ok(report)
}
