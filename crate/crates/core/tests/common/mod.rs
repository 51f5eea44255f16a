#![allow(dead_code)]

use lunet::tensor::{gradcheck, ConvSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

pub fn randn(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(rng, shape, -1.0, 1.0)
}

/// Direct nested-loop cross-correlation with zero padding.
pub fn naive_conv2d(x: &Tensor<f64>, k: &Tensor<f64>, bias: Option<&Tensor<f64>>, spec: &ConvSpec) -> Tensor<f64> {
    let (xs, ks) = (x.shape(), k.shape());
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, kh, kw) = (ks[0], ks[2], ks[3]);
    let (s, p, d) = (spec.stride as isize, spec.padding as isize, spec.dilation as isize);
    let ho = (h as isize + 2 * p - d * (kh as isize - 1) - 1) / s + 1;
    let wo = (w as isize + 2 * p - d * (kw as isize - 1) - 1) / s + 1;
    let (ho, wo) = (ho as usize, wo as usize);
    let mut out = vec![0.0; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.map_or(0.0, |t| t.data()[oc]);
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy as isize * s - p + ky as isize * d;
                                let ix = ox as isize * s - p + kx as isize * d;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                let kv = k.data()[((oc * c + ic) * kh + ky) * kw + kx];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((b * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Tensor::new([n, o, ho, wo], out).unwrap()
}

/// Coordinate-wise gradcheck of `f` with respect to the tensor `at`.
pub fn check_tensor(
    at: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    let shape = at.shape().to_vec();
    gradcheck(
        |p| f(&Tensor::new(shape.clone(), p.to_vec()).unwrap()),
        at.data(),
        analytic.data(),
        1e-5,
    )
    .unwrap()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One peephole LSTM step on scalars/vectors written out by hand, gate order
/// i, f, o, c. `w[g]` is `hidden×in`, `u[g]` is `hidden×hidden`. The output
/// gate peeks at the previous cell when `output_prev` is set.
#[allow(clippy::too_many_arguments)]
pub fn scalar_lstm(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &[Vec<f64>; 4],
    u: &[Vec<f64>; 4],
    b: &[Vec<f64>; 4],
    peep: &[Vec<f64>; 3],
    output_prev: bool,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = h_prev.len();
    let n = x.len();
    let pre = |g: usize, j: usize| -> f64 {
        let mut s = b[g][j];
        for k in 0..n {
            s += w[g][j * n + k] * x[k];
        }
        for k in 0..hidden {
            s += u[g][j * hidden + k] * h_prev[k];
        }
        s
    };
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(pre(0, j) + peep[0][j] * c_prev[j]);
        let f = sigmoid(pre(1, j) + peep[1][j] * c_prev[j]);
        let g = pre(3, j).tanh();
        c[j] = f * c_prev[j] + i * g;
        let peek = if output_prev { c_prev[j] } else { c[j] };
        let o = sigmoid(pre(2, j) + peep[2][j] * peek);
        h[j] = o * c[j].tanh();
    }
    (h, c)
}
