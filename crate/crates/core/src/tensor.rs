//! Dense 4-D tensors in NHWC layout.
//!
//! Every feature map in the engine is a [`Tensor`]: a contiguous row-major
//! `[batch, height, width, channels]` array. Convolution kernels reuse the
//! same storage with the dimensions read as `[k, k, in_channels,
//! out_channels]`. NHWC keeps the channel axis contiguous, which makes
//! channel concatenation a memcpy and lets the convolution inner loops run
//! over contiguous output channels.

use std::fmt;

use crate::error::TensorError;

/// Element type of a tensor: `f32` for the model, `f64` for gradient checking.
pub trait Element:
    num_traits::Float + Send + Sync + fmt::Debug + fmt::Display + Default + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Four dimensions, `[N, H, W, C]` for feature maps and
/// `[k, k, Cin, Cout]` for convolution kernels.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub fn nhwc(n: usize, h: usize, w: usize, c: usize) -> Self {
        Shape([n, h, w, c])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0[0]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.0[1]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.0[2]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.0[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}x{}x{}x{}]",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Execution context threaded through stochastic and mode-dependent
/// operators. Dropout masks are a pure function of `(rng_seed,
/// rng_stream_id, element index)`, so identical contexts reproduce
/// identical masks no matter how the kernel iterates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpContext {
    pub mode: Mode,
    pub rng_seed: u64,
    pub rng_stream_id: u64,
}

impl OpContext {
    pub fn inference() -> Self {
        OpContext {
            mode: Mode::Inference,
            rng_seed: 0,
            rng_stream_id: 0,
        }
    }

    pub fn train(seed: u64, stream_id: u64) -> Self {
        OpContext {
            mode: Mode::Train,
            rng_seed: seed,
            rng_stream_id: stream_id,
        }
    }
}

/// Train vs inference: decides batch vs running statistics in batch norm
/// and whether dropout is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Dense 4-D array. Immutable shape; all operators return new tensors.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    /// Wraps an existing buffer, checking the element count.
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self, TensorError> {
        if data.len() != shape.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
                expected: shape.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index of `[n, h, w, c]` in row-major NHWC order.
    #[inline]
    pub fn index(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        debug_assert!(
            n < self.shape.n() && h < self.shape.h() && w < self.shape.w() && c < self.shape.c()
        );
        ((n * self.shape.h() + h) * self.shape.w() + w) * self.shape.c() + c
    }

    #[inline]
    pub fn at(&self, n: usize, h: usize, w: usize, c: usize) -> T {
        self.data[self.index(n, h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, h: usize, w: usize, c: usize, v: T) {
        let i = self.index(n, h, w, c);
        self.data[i] = v;
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Adds `other` elementwise in place. Shapes must match.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + b;
        }
    }

    /// Sum of all elements, accumulated in f64.
    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64()).sum()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Converts the element type, rounding through f64.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}, {} elements)", self.shape, self.data.len())
    }
}
