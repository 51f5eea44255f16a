use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Stride, symmetric zero padding and dilation of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

impl ConvSpec {
    pub fn new(stride: usize, padding: usize, dilation: usize) -> Result<Self> {
        if stride == 0 || dilation == 0 {
            return Err(Error::InvalidArgument(format!(
                "stride and dilation must be positive (stride {stride}, dilation {dilation})"
            )));
        }
        Ok(ConvSpec {
            stride,
            padding,
            dilation,
        })
    }

    /// Stride-1 spec whose padding preserves spatial size for an odd kernel.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        ConvSpec {
            stride: 1,
            padding: dilation * (kernel.saturating_sub(1)) / 2,
            dilation,
        }
    }

    /// Receptive extent of a `kernel`-tap axis: `d·(k−1)+1`.
    pub fn footprint(&self, kernel: usize) -> usize {
        self.dilation * (kernel - 1) + 1
    }

    pub fn output_size(&self, input: usize, kernel: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        let foot = self.footprint(kernel);
        if kernel == 0 || self.stride == 0 || padded < foot {
            return None;
        }
        Some((padded - foot) / self.stride + 1)
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn geometry<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, spec: &ConvSpec) -> Result<Geometry> {
    let [n, c, h, w] = input.dims4("conv2d input")?;
    let [o, kc, kh, kw] = kernel.dims4("conv2d kernel")?;
    if kc != c {
        return Err(Error::shape("conv2d (input vs kernel channels)", input.shape(), kernel.shape()));
    }
    if spec.stride == 0 || spec.dilation == 0 {
        return Err(Error::InvalidArgument("conv2d: stride and dilation must be positive".into()));
    }
    let (ho, wo) = match (spec.output_size(h, kh), spec.output_size(w, kw)) {
        (Some(ho), Some(wo)) => (ho, wo),
        _ => {
            return Err(Error::invalid_shape(
                "conv2d",
                format!(
                    "non-positive output size for input {:?}, kernel {:?}, {spec:?}",
                    input.shape(),
                    kernel.shape()
                ),
            ))
        }
    };
    Ok(Geometry {
        n,
        c,
        h,
        w,
        o,
        kh,
        kw,
        ho,
        wo,
    })
}

/// Range of output coordinates whose tap `offset` lands inside `[0, len)`.
fn valid_range(out_len: usize, stride: usize, offset: isize, len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi_excl = if offset >= len as isize {
        0
    } else {
        (len as isize - 1 - offset) / s + 1
    };
    let lo = lo.clamp(0, out_len as isize) as usize;
    let hi = hi_excl.clamp(0, out_len as isize) as usize;
    (lo, hi.max(lo))
}

fn im2col<T: Real>(x: &[T], g: &Geometry, spec: &ConvSpec, cols: &mut [T]) {
    let p = g.cols();
    let (s, d, pad) = (spec.stride, spec.dilation as isize, spec.padding as isize);
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let off_y = ki as isize * d - pad;
            let (y0, y1) = valid_range(g.ho, s, off_y, g.h);
            for kj in 0..g.kw {
                let off_x = kj as isize * d - pad;
                let (x0, x1) = valid_range(g.wo, s, off_x, g.w);
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if oy < y0 || oy >= y1 || x0 >= x1 {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = (oy * s) as isize + off_y;
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    line[..x0].fill(T::zero());
                    line[x1..].fill(T::zero());
                    if s == 1 {
                        let start = (x0 as isize + off_x) as usize;
                        line[x0..x1].copy_from_slice(&src[start..start + (x1 - x0)]);
                    } else {
                        for (ox, v) in line.iter_mut().enumerate().take(x1).skip(x0) {
                            *v = src[((ox * s) as isize + off_x) as usize];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, spec: &ConvSpec, x: &mut [T]) {
    let p = g.cols();
    let (s, d, pad) = (spec.stride, spec.dilation as isize, spec.padding as isize);
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let off_y = ki as isize * d - pad;
            let (y0, y1) = valid_range(g.ho, s, off_y, g.h);
            for kj in 0..g.kw {
                let off_x = kj as isize * d - pad;
                let (x0, x1) = valid_range(g.wo, s, off_x, g.w);
                if x0 >= x1 {
                    continue;
                }
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in y0..y1 {
                    let iy = ((oy * s) as isize + off_y) as usize;
                    let line = &src[oy * g.wo..(oy + 1) * g.wo];
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in x0..x1 {
                        dst[((ox * s) as isize + off_x) as usize] += line[ox];
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation (no kernel flip) with zero padding.
///
/// `input` is `N×C×H×W`, `kernel` is `O×C×kh×kw`, `bias` (if any) has `O`
/// entries. Returns `N×O×H'×W'`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = geometry(input, kernel, spec)?;
    let mut out = Tensor::zeros([g.n, g.o, g.ho, g.wo]);
    if let Some(b) = bias {
        if b.len() != g.o {
            return Err(Error::shape("conv2d (bias vs out channels)", b.shape(), &[g.o]));
        }
        let plane = g.ho * g.wo;
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            chunk.fill(b.data()[i % g.o]);
        }
    }
    conv2d_accumulate(input, kernel, spec, &g, out.data_mut(), bias.is_some());
    Ok(out)
}

/// Convolves into an existing `N×O×H'×W'` buffer, adding to its contents
/// when `accumulate` is set and overwriting otherwise.
pub fn conv2d_into<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: &ConvSpec,
    out: &mut Tensor<T>,
    accumulate: bool,
) -> Result<()> {
    let g = geometry(input, kernel, spec)?;
    let expected = [g.n, g.o, g.ho, g.wo];
    if out.shape() != expected {
        return Err(Error::shape("conv2d_into (output buffer)", out.shape(), &expected));
    }
    conv2d_accumulate(input, kernel, spec, &g, out.data_mut(), accumulate);
    Ok(())
}

fn conv2d_accumulate<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: &ConvSpec,
    g: &Geometry,
    out: &mut [T],
    accumulate: bool,
) {
    let (rows, p) = (g.rows(), g.cols());
    let mut cols = vec![T::zero(); rows * p];
    let in_stride = g.c * g.h * g.w;
    let out_stride = g.o * p;
    let beta = if accumulate { T::one() } else { T::zero() };
    for n in 0..g.n {
        im2col(&input.data()[n * in_stride..(n + 1) * in_stride], g, spec, &mut cols);
        T::gemm(
            g.o,
            rows,
            p,
            T::one(),
            kernel.data(),
            rows as isize,
            1,
            &cols,
            p as isize,
            1,
            beta,
            &mut out[n * out_stride..(n + 1) * out_stride],
            p as isize,
            1,
        );
    }
}

/// Gradients of a convolution with respect to its three operands.
#[derive(Clone, Debug)]
pub struct ConvGrads<T: Real> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = geometry(input, kernel, spec)?;
    let expected = [g.n, g.o, g.ho, g.wo];
    if grad_out.shape() != expected {
        return Err(Error::shape("conv2d_backward (upstream gradient)", grad_out.shape(), &expected));
    }
    let (rows, p) = (g.rows(), g.cols());
    let mut cols = vec![T::zero(); rows * p];
    let mut gcols = vec![T::zero(); rows * p];
    let mut gx = Tensor::zeros(input.shape().to_vec());
    let mut gk = Tensor::zeros(kernel.shape().to_vec());
    let mut gb = Tensor::zeros([g.o]);
    let in_stride = g.c * g.h * g.w;
    let out_stride = g.o * p;
    for n in 0..g.n {
        let go = &grad_out.data()[n * out_stride..(n + 1) * out_stride];
        im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &g, spec, &mut cols);
        // dK += dY · colsᵀ
        T::gemm(
            g.o,
            p,
            rows,
            T::one(),
            go,
            p as isize,
            1,
            &cols,
            1,
            p as isize,
            T::one(),
            gk.data_mut(),
            rows as isize,
            1,
        );
        // dcols = Kᵀ · dY
        T::gemm(
            rows,
            g.o,
            p,
            T::one(),
            kernel.data(),
            1,
            rows as isize,
            go,
            p as isize,
            1,
            T::zero(),
            &mut gcols,
            p as isize,
            1,
        );
        col2im(&gcols, &g, spec, &mut gx.data_mut()[n * in_stride..(n + 1) * in_stride]);
        for (o, b) in gb.data_mut().iter_mut().enumerate() {
            *b += go[o * p..(o + 1) * p].iter().copied().sum();
        }
    }
    Ok(ConvGrads {
        input: gx,
        kernel: gk,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::<f64>::from_fn([1, 1, 3, 4], |i| i as f64 * 0.5 - 1.0);
        let k = Tensor::full([1, 1, 1, 1], 1.0);
        let y = conv2d(&x, &k, Some(&Tensor::zeros([1])), &ConvSpec::default()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_same_padding() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let k = Tensor::full([1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, None, &ConvSpec::new(1, 1, 1).unwrap()).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn dilation_widens_footprint() {
        let spec = ConvSpec::new(1, 0, 2).unwrap();
        assert_eq!(spec.footprint(3), 5);
        // 5×5 input collapses to a single output under a dilated 3×3 kernel.
        assert_eq!(spec.output_size(5, 3), Some(1));
        assert_eq!(spec.output_size(4, 3), None);
        assert_eq!(ConvSpec::same(3, 5).padding, 5);
    }

    #[test]
    fn rejects_channel_mismatch_naming_shapes() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let k = Tensor::zeros([1, 3, 3, 3]);
        let err = conv2d(&x, &k, None, &ConvSpec::default()).unwrap_err().to_string();
        assert!(err.contains("[1, 2, 4, 4]") && err.contains("[1, 3, 3, 3]"), "{err}");
    }

    #[test]
    fn rejects_empty_output() {
        let x = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let k = Tensor::zeros([1, 1, 3, 3]);
        assert!(conv2d(&x, &k, None, &ConvSpec::default()).is_err());
    }

    #[test]
    fn strided_output_size() {
        let x = Tensor::<f64>::from_fn([1, 1, 5, 5], |i| i as f64);
        let k = Tensor::full([1, 1, 1, 1], 1.0);
        let y = conv2d(&x, &k, None, &ConvSpec::new(2, 0, 1).unwrap()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data(), &[0.0, 2.0, 4.0, 10.0, 12.0, 14.0, 20.0, 22.0, 24.0]);
    }
}
