use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{IndexedExample, Mode, Model, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every analytic gradient entry with a central difference of the
/// training loss. Dropout masks are replayed from `seed` for each
/// evaluation, so the loss is a fixed smooth function of the parameters.
pub fn gradient_check(
    model: &Model,
    ex: &IndexedExample,
    selection: &[usize],
    seed: u64,
    eps: f64,
) -> Result<GradCheck, ModelError> {
    let loss_at = |m: &Model| -> Result<f64, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.forward_loss(ex, selection, &mut Mode::Train(&mut rng))
    };
    let mut analytic = model.clone();
    analytic.params.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rec = analytic.forward(ex, selection, &mut Mode::Train(&mut rng))?;
    analytic.backward(ex, rec, 1.0);
    let grads: Vec<(String, Vec<f64>)> = analytic
        .params
        .iter()
        .into_iter()
        .map(|p| (p.name().to_string(), p.grad().data().to_vec()))
        .collect();

    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (pi, (name, grad)) in grads.iter().enumerate() {
        for (i, &g) in grad.iter().enumerate() {
            let orig = probe.params.iter()[pi].value().data()[i];
            probe.params.iter_mut()[pi].value_mut()[i] = orig + eps;
            let plus = loss_at(&probe)?;
            probe.params.iter_mut()[pi].value_mut()[i] = orig - eps;
            let minus = loss_at(&probe)?;
            probe.params.iter_mut()[pi].value_mut()[i] = orig;
            let err = relative_error(g, (plus - minus) / (2.0 * eps), 1e-5);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = format!("{name}[{i}]");
            }
        }
    }
    Ok(report)
}
