use crate::error::{Error, Result};
use crate::linalg::{log_softmax, Matrix};

/// Mean squared error over all entries, with gradient wrt `pred`.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse",
            format!("{}x{}", target.rows(), target.cols()),
            format!("{}x{}", pred.rows(), pred.cols()),
        ));
    }
    let n = (pred.rows() * pred.cols()).max(1) as f64;
    let diff = pred.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.scale(2.0 / n)))
}

/// Mean negative log-likelihood of the true class; gradient is
/// `(softmax − one_hot) / batch`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("cross_entropy labels", logits.rows(), labels.len()));
    }
    let k = logits.cols();
    let b = logits.rows().max(1) as f64;
    let mut grad = Matrix::zeros(logits.rows(), k);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::range("label", y, format!("0..{k}")));
        }
        let lp = log_softmax(logits.row(i));
        total -= lp[y];
        let g = grad.row_mut(i);
        for (j, v) in lp.iter().enumerate() {
            g[j] = v.exp() / b;
        }
        g[y] -= 1.0 / b;
    }
    Ok((total / b, grad))
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(logits.row(*i)) == y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// A loss with its targets bound, for gradient checks and small harnesses.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Mse(&'a Matrix),
    CrossEntropy(&'a [usize]),
}

impl Objective<'_> {
    pub fn evaluate(&self, pred: &Matrix) -> Result<(f64, Matrix)> {
        match self {
            Objective::Mse(t) => mse(pred, t),
            Objective::CrossEntropy(l) => cross_entropy(pred, l),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Matrix::zeros(3, 5);
        let (l, _) = cross_entropy(&logits, &[0, 2, 4]).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_tend_to_zero() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 50.0, 700.0] {
            let logits = Matrix::from_rows(&[vec![margin, 0.0, 0.0]]).unwrap();
            let (l, _) = cross_entropy(&logits, &[0]).unwrap();
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-300);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(cross_entropy(&logits, &[3]), Err(Error::Range { .. })));
    }

    #[test]
    fn random_batch_matches_extended_precision() {
        // Reference: mpmath at 50 digits, mean of -log softmax(row)[label].
        let logits = Matrix::from_rows(&[
            vec![0.3, -1.2, 2.5, 0.7],
            vec![-0.4, 0.9, 0.1, -2.2],
            vec![1.5, 1.4, -0.6, 0.05],
        ])
        .unwrap();
        let (l, g) = cross_entropy(&logits, &[2, 0, 1]).unwrap();
        assert!((l - CE_REFERENCE).abs() < 1e-12, "{l}");
        let row_sums: Vec<f64> = (0..3).map(|i| g.row(i).iter().sum()).collect();
        for s in row_sums {
            assert!(s.abs() < 1e-15);
        }
    }

    const CE_REFERENCE: f64 = 1.016_140_221_991_018_989_4;
}
