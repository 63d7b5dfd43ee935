use super::TrainConfig;
use crate::error::{Error, Result};
use crate::linalg::{log_softmax, Matrix};
use crate::nn::cross_entropy;

/// Combined loss `λ_CE·CE(s, y) + λ_KD·τ²·KL(p_t ‖ p_s)` with `p = softmax(·/τ)`,
/// batch-averaged, and its gradient wrt the student logits.
///
/// The KL gradient is `λ_KD·τ·(p_s − p_t)/B`. With `λ_KD = 0` the KD term is
/// skipped entirely, so the result is exactly the weighted CE.
pub fn kd_loss(student: &Matrix, teacher: &Matrix, labels: &[usize], config: &TrainConfig) -> Result<(f64, Matrix)> {
    if student.shape() != teacher.shape() {
        return Err(Error::shape(
            "kd_loss teacher logits",
            format!("{}x{}", student.rows(), student.cols()),
            format!("{}x{}", teacher.rows(), teacher.cols()),
        ));
    }
    let (ce, ce_grad) = cross_entropy(student, labels)?;
    let mut loss = config.lambda_ce * ce;
    let mut grad = ce_grad.scale(config.lambda_ce);
    if config.lambda_kd == 0.0 {
        return Ok((loss, grad));
    }
    let tau = config.temperature;
    let b = student.rows().max(1) as f64;
    let mut kl = 0.0;
    for i in 0..student.rows() {
        let ls = log_softmax(&student.row(i).iter().map(|v| v / tau).collect::<Vec<_>>());
        let lt = log_softmax(&teacher.row(i).iter().map(|v| v / tau).collect::<Vec<_>>());
        let g = grad.row_mut(i);
        for k in 0..ls.len() {
            let pt = lt[k].exp();
            if pt > 0.0 {
                kl += pt * (lt[k] - ls[k]);
            }
            g[k] += config.lambda_kd * tau * (ls[k].exp() - pt) / b;
        }
    }
    loss += config.lambda_kd * tau * tau * kl / b;
    Ok((loss, grad))
}
