//! Dense row-major tensors and the differentiable operators the networks are
//! built from. Every operator comes as a forward function plus an explicit
//! backward function; there is no tape.

mod conv;
mod gradcheck;
mod io;
mod loss;
mod ops;
mod pool;

pub use conv::{conv2d, conv2d_backward, conv2d_into, ConvGrads, ConvSpec};
pub use gradcheck::{gradcheck, relative_error};
pub use io::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, TENSOR_MAGIC};
pub use loss::{loss, sigmoid_bce, softmax_ce, LossKind};
pub use ops::{
    concat_channels, concat_channels_backward, hadamard, hadamard_backward, pointwise,
    pointwise_backward, relu, relu_backward, sigmoid, Activation,
};
pub use pool::{maxpool2, maxpool2_backward, upsample_nearest2, upsample_nearest2_backward, PoolIndices};

use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating point element type. Implemented for `f32` (training) and `f64`
/// (verification).
pub trait Real:
    Float
    + Default
    + Debug
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const NAME: &'static str;

    /// `C = alpha * A·B + beta * C` on strided row/column layouts.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        // SAFETY: extents checked above; `c` does not alias `a` or `b`.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn lit(v: f64) -> f32 {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        // SAFETY: extents checked above; `c` does not alias `a` or `b`.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn lit(v: f64) -> f64 {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    alen: usize,
    rsa: isize,
    csa: isize,
    blen: usize,
    rsb: isize,
    csb: isize,
    clen: usize,
    rsc: isize,
    csc: isize,
) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        if rows == 0 || cols == 0 {
            return 0;
        }
        assert!(rs >= 0 && cs >= 0, "negative strides are not used");
        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
    };
    assert!(extent(m, k, rsa, csa) <= alen, "gemm: A out of bounds");
    assert!(extent(k, n, rsb, csb) <= blen, "gemm: B out of bounds");
    assert!(extent(m, n, rsc, csc) <= clen, "gemm: C out of bounds");
}

/// Dense N-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid_shape(
                "tensor",
                format!("shape {shape:?} needs {len} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        validate_shape(&shape).expect("tensor shape");
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        validate_shape(&shape).expect("tensor shape");
        let len = shape.iter().product();
        Tensor {
            shape,
            data: (0..len).map(f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        validate_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// Shape as `[N, C, H, W]`, or an error naming `op` when the rank is not 4.
    pub fn dims4(&self, op: &'static str) -> Result<[usize; 4]> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::invalid_shape(
                op,
                format!("expected rank-4 N×C×H×W tensor, got {:?}", self.shape),
            )),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Dot product of the flattened data.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.expect_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(())
    }

    /// Contiguous sub-tensor `index` along the leading axis.
    pub fn outer(&self, index: usize) -> Result<Self> {
        let (&lead, rest) = self
            .shape
            .split_first()
            .ok_or_else(|| Error::invalid_shape("outer", "rank 0"))?;
        if index >= lead {
            return Err(Error::invalid_shape(
                "outer",
                format!("index {index} out of range for leading dim {lead}"),
            ));
        }
        let inner: usize = rest.iter().product();
        let shape = if rest.is_empty() { vec![1] } else { rest.to_vec() };
        Tensor::new(shape, self.data[index * inner..(index + 1) * inner].to_vec())
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            first.expect_same_shape(p, "stack")?;
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Tensor::new(shape, data)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::invalid_shape(
            "tensor",
            format!("dimensions must be positive, got {shape:?}"),
        ));
    }
    Ok(())
}

/// Integer class map of shape `N×H×W` (labels, predictions).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub classes: Vec<u32>,
}

impl ClassMap {
    pub fn new(n: usize, height: usize, width: usize, classes: Vec<u32>) -> Result<Self> {
        if n * height * width != classes.len() || n == 0 || height == 0 || width == 0 {
            return Err(Error::invalid_shape(
                "class map",
                format!(
                    "{n}×{height}×{width} needs {} entries, got {}",
                    n * height * width,
                    classes.len()
                ),
            ));
        }
        Ok(ClassMap {
            n,
            height,
            width,
            classes,
        })
    }

    pub fn filled(n: usize, height: usize, width: usize, class: u32) -> Self {
        ClassMap {
            n,
            height,
            width,
            classes: vec![class; n * height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n, self.height, self.width]
    }

    pub fn max_class(&self) -> u32 {
        self.classes.iter().copied().max().unwrap_or(0)
    }

    /// Rejects any entry `>= classes`.
    pub fn check_range(&self, classes: usize) -> Result<()> {
        match self.classes.iter().find(|&&c| c as usize >= classes) {
            Some(&c) => Err(Error::ClassOutOfRange {
                class: c as usize,
                classes,
            }),
            None => Ok(()),
        }
    }

    /// The `index`-th map of the batch as a `1×H×W` class map.
    pub fn item(&self, index: usize) -> ClassMap {
        let plane = self.height * self.width;
        ClassMap {
            n: 1,
            height: self.height,
            width: self.width,
            classes: self.classes[index * plane..(index + 1) * plane].to_vec(),
        }
    }

    /// Concatenates maps with equal spatial size along the batch axis.
    pub fn concat(maps: &[ClassMap]) -> Result<ClassMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero class maps".into()))?;
        let mut classes = Vec::new();
        let mut n = 0;
        for m in maps {
            if (m.height, m.width) != (first.height, first.width) {
                return Err(Error::shape(
                    "class map concat",
                    &first.shape(),
                    &m.shape(),
                ));
            }
            n += m.n;
            classes.extend_from_slice(&m.classes);
        }
        ClassMap::new(n, first.height, first.width, classes)
    }
}
