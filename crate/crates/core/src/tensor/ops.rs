use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

pub fn pointwise<T: Real>(f: Activation, x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| f.apply(v))
}

/// Backward of [`pointwise`] given the forward output.
pub fn pointwise_backward<T: Real>(f: Activation, output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad, "pointwise_backward", |y, g| g * f.derivative_from_output(y))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v < T::zero() { T::zero() } else { v })
}

/// ReLU backward; the subgradient at exactly zero is taken as 0.
pub fn relu_backward<T: Real>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad, "relu_backward", |y, g| if y > T::zero() { g } else { T::zero() })
}

pub fn hadamard<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, "hadamard", |x, y| x * y)
}

pub fn hadamard_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((grad.zip_map(b, "hadamard_backward", |g, y| g * y)?, grad.zip_map(a, "hadamard_backward", |g, x| g * x)?))
}

/// Stacks `a` then `b` along the channel axis of `N×C×H×W` tensors.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, ca, h, w] = a.dims4("concat_channels")?;
    let [nb, cb, hb, wb] = b.dims4("concat_channels")?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape("concat_channels", a.shape(), b.shape()));
    }
    let (sa, sb) = (ca * h * w, cb * h * w);
    let mut out = Vec::with_capacity(n * (sa + sb));
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * sa..(i + 1) * sa]);
        out.extend_from_slice(&b.data()[i * sb..(i + 1) * sb]);
    }
    Tensor::new([n, ca + cb, h, w], out)
}

/// Splits a gradient of the concatenation back into its two operands, the
/// first of which had `channels_a` channels.
pub fn concat_channels_backward<T: Real>(grad: &Tensor<T>, channels_a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = grad.dims4("concat_channels_backward")?;
    if channels_a == 0 || channels_a >= c {
        return Err(Error::invalid_shape(
            "concat_channels_backward",
            format!("split point {channels_a} invalid for {c} channels"),
        ));
    }
    let cb = c - channels_a;
    let (sa, sb) = (channels_a * h * w, cb * h * w);
    let mut ga = Vec::with_capacity(n * sa);
    let mut gb = Vec::with_capacity(n * sb);
    for chunk in grad.data().chunks(sa + sb) {
        ga.extend_from_slice(&chunk[..sa]);
        gb.extend_from_slice(&chunk[sa..]);
    }
    Ok((Tensor::new([n, channels_a, h, w], ga)?, Tensor::new([n, cb, h, w], gb)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(0.0f64.tanh(), 0.0);
        assert!((sigmoid(1.0f64) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) == 1.0);
    }

    #[test]
    fn concat_keeps_operand_order() {
        let a = Tensor::<f64>::from_fn([2, 4, 2, 2], |i| i as f64);
        let b = Tensor::<f64>::from_fn([2, 8, 2, 2], |i| -(i as f64));
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 12, 2, 2]);
        assert_eq!(&c.data()[..16], &a.data()[..16]);
        let (ga, gb) = concat_channels_backward(&c, 4).unwrap();
        assert_eq!(ga, a);
        assert_eq!(gb, b);
    }

    #[test]
    fn hadamard_rejects_mismatch() {
        let a = Tensor::<f64>::zeros([1, 2, 2, 2]);
        let b = Tensor::<f64>::zeros([1, 2, 2, 3]);
        assert!(hadamard(&a, &b).is_err());
        assert!(concat_channels(&a, &b).is_err());
    }
}
