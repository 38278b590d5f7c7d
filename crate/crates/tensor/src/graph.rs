use crate::conv::{self, ConvSpec};
use crate::ops::{self, Activation};
use crate::{Element, Result, Tensor, TensorError};

/// The op set a network is written against.
///
/// [`Eval`] runs ops eagerly on owned tensors and keeps nothing alive, which
/// is what inference wants. [`Tape`](crate::Tape) records every op so that
/// [`Tape::backward`](crate::Tape::backward) can run afterwards.
pub trait Ops<T: Element> {
    type Value: Clone;

    /// A tensor that never receives a gradient.
    fn constant(&mut self, t: Tensor<T>) -> Self::Value;
    /// A trainable leaf.
    fn param(&mut self, t: &Tensor<T>) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<T>;

    fn conv2d(
        &mut self,
        x: &Self::Value,
        spec: &ConvSpec,
        weight: &Self::Value,
        bias: Option<&Self::Value>,
    ) -> Result<Self::Value>;
    fn activation(&mut self, x: &Self::Value, kind: Activation) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, k: f64) -> Self::Value;
    fn down2(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn up2(&mut self, x: &Self::Value) -> Self::Value;
    fn concat_channels(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn slice_channels(&mut self, x: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn global_avg_pool(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn channel_affine(
        &mut self,
        x: &Self::Value,
        alpha: &Self::Value,
        beta: &Self::Value,
    ) -> Result<Self::Value>;
    fn bias_add(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value>;
    /// Multiplies by a constant single-channel map.
    fn mask_mul(&mut self, x: &Self::Value, mask: &Tensor<T>) -> Result<Self::Value>;
    fn crop(&mut self, x: &Self::Value, h: usize, w: usize) -> Result<Self::Value>;
    fn grad_map(&mut self, x: &Self::Value) -> Self::Value;
    fn mean_abs(&mut self, x: &Self::Value) -> Self::Value;
    fn sum(&mut self, x: &Self::Value) -> Self::Value;

    fn leaky_relu(&mut self, x: &Self::Value, slope: f64) -> Self::Value {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    fn relu(&mut self, x: &Self::Value) -> Self::Value {
        self.activation(x, Activation::Relu)
    }

    /// Spatial feature transform: `alpha ⊙ x + beta`, all three the same shape.
    fn sft(&mut self, x: &Self::Value, alpha: &Self::Value, beta: &Self::Value) -> Result<Self::Value> {
        let scaled = self.mul(x, alpha)?;
        self.add(&scaled, beta)
    }

    /// Partial convolution over `x ⊙ mask`, renormalized per window.
    ///
    /// Returns the output and the updated mask (1 where the window saw any
    /// valid input, else 0). Windows without valid input produce the bias.
    fn partial_conv2d(
        &mut self,
        x: &Self::Value,
        mask: &Tensor<T>,
        spec: &ConvSpec,
        weight: &Self::Value,
        bias: &Self::Value,
    ) -> Result<(Self::Value, Tensor<T>)> {
        let (ratio, updated) = partial_conv_mask(mask, spec)?;
        let masked = self.mask_mul(x, mask)?;
        let y = self.conv2d(&masked, spec, weight, None)?;
        let y = self.mask_mul(&y, &ratio)?;
        let y = self.bias_add(&y, bias)?;
        Ok((y, updated))
    }
}

/// Renormalization factor `k² / sum(mask in window)` (0 where the sum is 0)
/// and the updated binary mask, both at the convolution's output size.
pub fn partial_conv_mask<T: Element>(mask: &Tensor<T>, spec: &ConvSpec) -> Result<(Tensor<T>, Tensor<T>)> {
    if mask.dims().c != 1 {
        return Err(TensorError::InvalidArgument {
            op: "partial_conv",
            what: format!("mask must have one channel, got {}", mask.dims()),
        });
    }
    let box_spec = ConvSpec {
        in_channels: 1,
        out_channels: 1,
        groups: 1,
        ..*spec
    };
    let ones = Tensor::ones(box_spec.weight_dims());
    let sums = conv::conv2d(mask, &box_spec, &ones, None)?;
    let area = T::of((spec.kernel * spec.kernel) as f64);
    let ratio = sums.map(|s| if s > T::zero() { area / s } else { T::zero() });
    let updated = sums.map(|s| if s > T::zero() { T::one() } else { T::zero() });
    Ok((ratio, updated))
}

/// Eager evaluation without recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl<T: Element> Ops<T> for Eval {
    type Value = Tensor<T>;

    fn constant(&mut self, t: Tensor<T>) -> Tensor<T> {
        t
    }

    fn param(&mut self, t: &Tensor<T>) -> Tensor<T> {
        t.clone()
    }

    fn value<'a>(&'a self, v: &'a Tensor<T>) -> &'a Tensor<T> {
        v
    }

    fn conv2d(
        &mut self,
        x: &Tensor<T>,
        spec: &ConvSpec,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        conv::conv2d(x, spec, weight, bias)
    }

    fn activation(&mut self, x: &Tensor<T>, kind: Activation) -> Tensor<T> {
        ops::activation(x, kind)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::add(a, b)
    }

    fn sub(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::sub(a, b)
    }

    fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::mul(a, b)
    }

    fn scale(&mut self, x: &Tensor<T>, k: f64) -> Tensor<T> {
        ops::scale(x, T::of(k))
    }

    fn down2(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::down2(x)
    }

    fn up2(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::up2(x)
    }

    fn concat_channels(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::concat_channels(a, b)
    }

    fn slice_channels(&mut self, x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
        ops::slice_channels(x, start, len)
    }

    fn global_avg_pool(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::global_avg_pool(x)
    }

    fn channel_affine(&mut self, x: &Tensor<T>, alpha: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
        ops::channel_affine(x, alpha, beta)
    }

    fn bias_add(&mut self, x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        ops::bias_add(x, bias)
    }

    fn mask_mul(&mut self, x: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
        ops::mask_mul(x, mask)
    }

    fn crop(&mut self, x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        ops::crop(x, h, w)
    }

    fn grad_map(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::grad_map(x)
    }

    fn mean_abs(&mut self, x: &Tensor<T>) -> Tensor<T> {
        ops::mean_abs(x)
    }

    fn sum(&mut self, x: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(x.sum())
    }
}
