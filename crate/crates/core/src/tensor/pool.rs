use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Argmax record of a 2×2 max pool: for every output cell, the winning
/// offset `dy*2 + dx` inside its window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    winners: Vec<u8>,
}

impl PoolIndices {
    /// Winning position (0..4, row-major in the 2×2 window) per output value.
    pub fn winners(&self) -> &[u8] {
        &self.winners
    }

    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    /// Window-relative `(row, col)` of the maximum for flat output index `i`.
    pub fn position(&self, i: usize) -> (usize, usize) {
        let w = self.winners[i] as usize;
        (w / 2, w % 2)
    }
}

/// Non-overlapping 2×2 max pool. Ties go to the first position in row-major
/// order.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let [n, c, h, w] = input.dims4("maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid_shape(
            "maxpool2",
            format!("spatial dims must be even, got {h}×{w}"),
        ));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut winners = Vec::with_capacity(n * c * ho * wo);
    let x = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            let r0 = base + 2 * oy * w;
            let r1 = r0 + w;
            for ox in 0..wo {
                let cands = [x[r0 + 2 * ox], x[r0 + 2 * ox + 1], x[r1 + 2 * ox], x[r1 + 2 * ox + 1]];
                let mut best = 0;
                for k in 1..4 {
                    // a NaN wins so divergence stays visible
                    if cands[k] > cands[best] || (cands[k].is_nan() && !cands[best].is_nan()) {
                        best = k;
                    }
                }
                out.push(cands[best]);
                winners.push(best as u8);
            }
        }
    }
    Ok((
        Tensor::new([n, c, ho, wo], out)?,
        PoolIndices {
            input_shape: [n, c, h, w],
            winners,
        },
    ))
}

/// Routes each upstream gradient to its recorded argmax; zero elsewhere.
pub fn maxpool2_backward<T: Real>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = indices.input_shape;
    let expected = [n, c, h / 2, w / 2];
    if grad_out.shape() != expected {
        return Err(Error::shape("maxpool2_backward", grad_out.shape(), &expected));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut gx = Tensor::zeros([n, c, h, w]);
    let gxd = gx.data_mut();
    for (i, (&g, &win)) in grad_out.data().iter().zip(&indices.winners).enumerate() {
        let plane = i / (ho * wo);
        let rem = i % (ho * wo);
        let (oy, ox) = (rem / wo, rem % wo);
        let (dy, dx) = (win as usize / 2, win as usize % 2);
        gxd[plane * h * w + (2 * oy + dy) * w + 2 * ox + dx] += g;
    }
    Ok(gx)
}

/// Nearest-neighbour 2× upsampling: every pixel becomes a 2×2 block.
pub fn upsample_nearest2<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims4("upsample_nearest2")?;
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); n * c * h2 * w2];
    for (plane, src) in input.data().chunks(h * w).enumerate() {
        let dst = &mut out[plane * h2 * w2..(plane + 1) * h2 * w2];
        for y in 0..h {
            for x in 0..w {
                let v = src[y * w + x];
                let r0 = 2 * y * w2 + 2 * x;
                dst[r0] = v;
                dst[r0 + 1] = v;
                dst[r0 + w2] = v;
                dst[r0 + w2 + 1] = v;
            }
        }
    }
    Tensor::new([n, c, h2, w2], out)
}

/// Sums the upstream gradient over each 2×2 block.
pub fn upsample_nearest2_backward<T: Real>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h2, w2] = grad_out.dims4("upsample_nearest2_backward")?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::invalid_shape(
            "upsample_nearest2_backward",
            format!("gradient spatial dims must be even, got {h2}×{w2}"),
        ));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = vec![T::zero(); n * c * h * w];
    for (plane, src) in grad_out.data().chunks(h2 * w2).enumerate() {
        let dst = &mut out[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let r0 = 2 * y * w2 + 2 * x;
                dst[y * w + x] = src[r0] + src[r0 + 1] + src[r0 + w2] + src[r0 + w2 + 1];
            }
        }
    }
    Tensor::new([n, c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window_max_and_routing() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx.position(0), (1, 1));
        let g = maxpool2_backward(&idx, &Tensor::full([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_input_and_tie_rule() {
        let x = Tensor::<f64>::full([2, 3, 4, 6], 1.5);
        let (y, idx) = maxpool2(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 1.5));
        assert!((0..y.len()).all(|i| idx.position(i) == (0, 0)));
        // ties never duplicate mass
        let g = maxpool2_backward(&idx, &Tensor::full([2, 3, 2, 3], 1.0)).unwrap();
        assert_eq!(g.sum(), y.len() as f64);
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(maxpool2(&Tensor::<f64>::zeros([1, 1, 3, 4])).is_err());
    }

    #[test]
    fn upsample_replicates_and_backward_sums() {
        let x = Tensor::<f64>::new([1, 1, 1, 1], vec![2.5]).unwrap();
        let y = upsample_nearest2(&x).unwrap();
        assert_eq!(y.data(), &[2.5; 4]);
        let g = upsample_nearest2_backward(&Tensor::<f64>::full([1, 2, 4, 4], 1.0)).unwrap();
        assert_eq!(g.shape(), &[1, 2, 2, 2]);
        assert!(g.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn pool_inverts_upsample() {
        let x = Tensor::<f64>::from_fn([2, 2, 3, 5], |i| ((i * 37) % 11) as f64 - 4.0);
        let (y, _) = maxpool2(&upsample_nearest2(&x).unwrap()).unwrap();
        assert_eq!(y, x);
    }
}
