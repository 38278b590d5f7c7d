use std::fmt;

use crate::{Element, Result, TensorError};

/// Shape of a 4-D tensor in (batch, channel, height, width) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Dims::new(1, 1, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one (h, w) plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn with_c(self, c: usize) -> Self {
        Dims { c, ..self }
    }

    pub const fn with_hw(self, h: usize, w: usize) -> Self {
        Dims { h, w, ..self }
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Dims::new(d[0], d[1], d[2], d[3])
    }
}

/// Dense NCHW tensor, row-major with `w` fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: impl Into<Dims>) -> Self {
        Self::full(dims, T::one())
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Self {
        let dims = dims.into();
        Tensor {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.len() {
            return Err(TensorError::DataLength {
                len: data.len(),
                dims,
            });
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Tensor { dims, data }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            dims: Dims::scalar(),
            data: vec![v],
        }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(n < self.dims.n && c < self.dims.c && y < self.dims.h && x < self.dims.w);
        ((n * self.dims.c + c) * self.dims.h + y) * self.dims.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// The (h, w) plane for sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Reinterprets the buffer under new dims with the same element count.
    pub fn reshape(self, dims: impl Into<Dims>) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.data.len() as f64)
    }

    pub fn max_value(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a })
    }

    pub fn min_value(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::infinity(), |a, b| if b < a { b } else { a })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        assert_eq!(self.dims, other.dims, "max_abs_diff: dims differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Selects samples `[start, start + len)` along the batch axis.
    pub fn batch_slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.dims.n {
            return Err(TensorError::InvalidArgument {
                op: "batch_slice",
                what: format!("range {start}..{} exceeds batch {}", start + len, self.dims.n),
            });
        }
        let per = self.dims.c * self.dims.plane();
        let dims = Dims { n: len, ..self.dims };
        Ok(Tensor {
            dims,
            data: self.data[start * per..(start + len) * per].to_vec(),
        })
    }

    /// Stacks same-shaped tensors along the batch axis.
    pub fn stack_batch(items: &[Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| TensorError::InvalidArgument {
            op: "stack_batch",
            what: "no tensors to stack".into(),
        })?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        let mut n = 0;
        for t in items {
            let d = t.dims;
            if d.c != first.dims.c || d.h != first.dims.h || d.w != first.dims.w {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_batch",
                    expected: first.dims,
                    got: d,
                });
            }
            n += d.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            dims: Dims { n, ..first.dims },
            data,
        })
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor({}, [", self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:?}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "])")
    }
}
