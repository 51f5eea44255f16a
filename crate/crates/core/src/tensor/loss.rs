use serde::{Deserialize, Serialize};

use super::{ClassMap, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Binary cross-entropy on a single logit channel.
    SigmoidBce,
    /// Cross-entropy over `K` logit channels.
    SoftmaxCe,
}

impl LossKind {
    /// Binary head for one output channel, softmax otherwise.
    pub fn for_classes(num_classes: usize) -> Self {
        if num_classes == 1 {
            LossKind::SigmoidBce
        } else {
            LossKind::SoftmaxCe
        }
    }
}

/// Mean logit-space binary cross-entropy and its gradient w.r.t. the logits.
pub fn sigmoid_bce<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    logits.expect_same_shape(targets, "sigmoid_bce")?;
    let count = T::lit(logits.len() as f64);
    let mut total = T::zero();
    let grad: Vec<T> = logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &y)| {
            // max(z,0) − z·y + ln(1 + e^{−|z|})
            total += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
            (super::sigmoid(z) - y) / count
        })
        .collect();
    Ok((total / count, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Mean softmax cross-entropy of `N×K×H×W` logits against an `N×H×W` class map.
pub fn softmax_ce<T: Real>(logits: &Tensor<T>, targets: &ClassMap) -> Result<(T, Tensor<T>)> {
    let [n, k, h, w] = logits.dims4("softmax_ce")?;
    if targets.shape() != [n, h, w] {
        return Err(Error::shape("softmax_ce", logits.shape(), &targets.shape()));
    }
    targets.check_range(k)?;
    let plane = h * w;
    let count = T::lit((n * plane) as f64);
    let mut grad = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    let z = logits.data();
    for b in 0..n {
        for p in 0..plane {
            let at = |c: usize| (b * k + c) * plane + p;
            let m = (0..k).map(|c| z[at(c)]).fold(T::neg_infinity(), T::max);
            let denom: T = (0..k).map(|c| (z[at(c)] - m).exp()).sum();
            let log_denom = denom.ln();
            let target = targets.classes[b * plane + p] as usize;
            total += -(z[at(target)] - m - log_denom);
            for c in 0..k {
                let prob = (z[at(c)] - m - log_denom).exp();
                let indicator = if c == target { T::one() } else { T::zero() };
                grad[at(c)] = (prob - indicator) / count;
            }
        }
    }
    Ok((total / count, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Loss dispatch used by training: for the binary head the class map must
/// hold only 0/1 and is compared against logits of shape `N×1×H×W`.
pub fn loss<T: Real>(kind: LossKind, logits: &Tensor<T>, labels: &ClassMap) -> Result<(T, Tensor<T>)> {
    match kind {
        LossKind::SigmoidBce => {
            labels.check_range(2)?;
            let target = Tensor::new(
                [labels.n, 1, labels.height, labels.width],
                labels.classes.iter().map(|&c| T::lit(c as f64)).collect(),
            )?;
            sigmoid_bce(logits, &target)
        }
        LossKind::SoftmaxCe => softmax_ce(logits, labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_zero_logit() {
        let (l, g) = sigmoid_bce(&Tensor::<f64>::zeros([1, 1, 2, 2]), &Tensor::full([1, 1, 2, 2], 1.0)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(g.data().iter().all(|&v| (v - (-0.5 / 4.0)).abs() < 1e-15));
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let z = Tensor::<f64>::new([1, 1, 1, 2], vec![1000.0, -1000.0]).unwrap();
        let y = Tensor::new([1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let (l, g) = sigmoid_bce(&z, &y).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
        assert!(g.all_finite());
    }

    #[test]
    fn ce_uniform_logits() {
        let targets = ClassMap::new(1, 2, 2, vec![0, 3, 7, 5]).unwrap();
        let (l, g) = softmax_ce(&Tensor::<f64>::zeros([1, 8, 2, 2]), &targets).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-14);
        // gradient sums to zero over classes at every pixel
        for p in 0..4 {
            let s: f64 = (0..8).map(|c| g.data()[c * 4 + p]).sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn ce_rejects_out_of_range_target() {
        let targets = ClassMap::new(1, 1, 1, vec![8]).unwrap();
        assert!(matches!(
            softmax_ce(&Tensor::<f64>::zeros([1, 8, 1, 1]), &targets),
            Err(Error::ClassOutOfRange { class: 8, classes: 8 })
        ));
    }
}
