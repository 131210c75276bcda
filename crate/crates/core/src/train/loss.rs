use crate::Real;

/// Cross-entropy of one logit vector and its gradient
/// `softmax(logits) − onehot(label)`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    let loss = z.ln() + max - logits[label];
    let mut grad: Vec<T> = exps.into_iter().map(|e| e / z).collect();
    grad[label] -= T::one();
    (loss, grad)
}

/// Mean cross-entropy over a `[B × d_y]` batch; the gradient is already
/// divided by `B`.
pub fn batch_cross_entropy<T: Real>(logits: &[T], labels: &[usize]) -> (T, Vec<T>) {
    let b = labels.len();
    let y = logits.len() / b;
    let scale = T::one() / T::c(b as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks(y).zip(labels) {
        let (l, g) = softmax_cross_entropy(row, label);
        total += l;
        grad.extend(g.into_iter().map(|v| v * scale));
    }
    (total * scale, grad)
}
