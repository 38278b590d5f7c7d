//! Forward kernels and their vector-Jacobian products.
//!
//! Every op here is pure: identical inputs give bit-identical outputs.

use crate::{Dims, Element, Result, Tensor, TensorError};

fn same_dims(op: &'static str, a: Dims, b: Dims) -> Result<()> {
    if a != b {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: a,
            got: b,
        });
    }
    Ok(())
}

fn zip_with<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.dims(), data).expect("same dims")
}

/// Activation kinds used by the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    fn slope<T: Element>(self) -> T {
        match self {
            Activation::Relu => T::zero(),
            Activation::LeakyRelu(s) => T::of(s),
        }
    }
}

/// `max(x, slope * x)` for leaky, `max(x, 0)` for plain ReLU.
pub fn activation<T: Element>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let s = kind.slope::<T>();
    x.map(|v| if v > T::zero() { v } else { v * s })
}

pub fn activation_backward<T: Element>(x: &Tensor<T>, dy: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let s = kind.slope::<T>();
    zip_with(x, dy, |v, g| if v > T::zero() { g } else { g * s })
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_dims("add", a.dims(), b.dims())?;
    Ok(zip_with(a, b, |x, y| x + y))
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_dims("sub", a.dims(), b.dims())?;
    Ok(zip_with(a, b, |x, y| x - y))
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_dims("mul", a.dims(), b.dims())?;
    Ok(zip_with(a, b, |x, y| x * y))
}

pub fn scale<T: Element>(x: &Tensor<T>, k: T) -> Tensor<T> {
    x.map(|v| v * k)
}

/// 2x2 average pooling.
pub fn down2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.dims();
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(TensorError::OddSpatial { h: d.h, w: d.w });
    }
    let (oh, ow) = (d.h / 2, d.w / 2);
    let quarter = T::of(0.25);
    let mut y = Tensor::zeros(d.with_hw(oh, ow));
    for n in 0..d.n {
        for c in 0..d.c {
            let src = x.plane(n, c);
            let dst = y.plane_mut(n, c);
            for oy in 0..oh {
                let r0 = &src[2 * oy * d.w..(2 * oy + 1) * d.w];
                let r1 = &src[(2 * oy + 1) * d.w..(2 * oy + 2) * d.w];
                for ox in 0..ow {
                    dst[oy * ow + ox] =
                        (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
                }
            }
        }
    }
    Ok(y)
}

pub fn down2_backward<T: Element>(dy: &Tensor<T>) -> Tensor<T> {
    up2(dy).map(|v| v * T::of(0.25))
}

/// Nearest-neighbour 2x upsampling.
pub fn up2<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let (oh, ow) = (d.h * 2, d.w * 2);
    let mut y = Tensor::zeros(d.with_hw(oh, ow));
    for n in 0..d.n {
        for c in 0..d.c {
            let src = x.plane(n, c);
            let dst = y.plane_mut(n, c);
            for oy in 0..oh {
                let row = &src[(oy / 2) * d.w..(oy / 2 + 1) * d.w];
                for (ox, v) in dst[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                    *v = row[ox / 2];
                }
            }
        }
    }
    y
}

pub fn up2_backward<T: Element>(dy: &Tensor<T>) -> Result<Tensor<T>> {
    // The adjoint of nearest upsampling sums each 2x2 block.
    Ok(scale(&down2(dy)?, T::of(4.0)))
}

pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (da, db) = (a.dims(), b.dims());
    if da.n != db.n || da.h != db.h || da.w != db.w {
        return Err(TensorError::ShapeMismatch {
            op: "concat_channels",
            expected: db.with_c(da.c).with_hw(da.h, da.w),
            got: db,
        });
    }
    let out = da.with_c(da.c + db.c);
    let mut data = Vec::with_capacity(out.len());
    let (pa, pb) = (da.c * da.plane(), db.c * db.plane());
    for n in 0..da.n {
        data.extend_from_slice(&a.data()[n * pa..(n + 1) * pa]);
        data.extend_from_slice(&b.data()[n * pb..(n + 1) * pb]);
    }
    Tensor::from_vec(out, data)
}

/// Channels `[start, start + len)`.
pub fn slice_channels<T: Element>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let d = x.dims();
    if start + len > d.c || len == 0 {
        return Err(TensorError::InvalidArgument {
            op: "slice_channels",
            what: format!("channels {start}..{} out of 0..{}", start + len, d.c),
        });
    }
    let p = d.plane();
    let mut data = Vec::with_capacity(d.n * len * p);
    for n in 0..d.n {
        let base = (n * d.c + start) * p;
        data.extend_from_slice(&x.data()[base..base + len * p]);
    }
    Tensor::from_vec(d.with_c(len), data)
}

/// Writes `src` into channels `[start, ..)` of a zero tensor with `dims`.
pub fn embed_channels<T: Element>(src: &Tensor<T>, dims: Dims, start: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(dims);
    let s = src.dims();
    for n in 0..s.n {
        for c in 0..s.c {
            out.plane_mut(n, start + c).copy_from_slice(src.plane(n, c));
        }
    }
    out
}

/// Spatial mean per channel, shape `(n, c, 1, 1)`.
pub fn global_avg_pool<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.dims();
    if d.h == 0 || d.w == 0 {
        return Err(TensorError::InvalidArgument {
            op: "global_avg_pool",
            what: "empty spatial extent".into(),
        });
    }
    let inv = T::of(1.0 / d.plane() as f64);
    Tensor::from_fn([d.n, d.c, 1, 1], |[n, c, _, _]| {
        x.plane(n, c).iter().copied().sum::<T>() * inv
    })
    .reshape(d.with_hw(1, 1))
}

pub fn global_avg_pool_backward<T: Element>(dy: &Tensor<T>, input: Dims) -> Tensor<T> {
    let inv = T::of(1.0 / input.plane() as f64);
    let mut dx = Tensor::zeros(input);
    for n in 0..input.n {
        for c in 0..input.c {
            let g = dy.at(n, c, 0, 0) * inv;
            dx.plane_mut(n, c).fill(g);
        }
    }
    dx
}

fn check_channel_vec(op: &'static str, x: Dims, v: Dims) -> Result<()> {
    if v.c != x.c || v.h != 1 || v.w != 1 || (v.n != x.n && v.n != 1) {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: Dims::new(x.n, x.c, 1, 1),
            got: v,
        });
    }
    Ok(())
}

/// Per-channel `alpha * x + beta` with `alpha`, `beta` of shape `(n|1, c, 1, 1)`.
pub fn channel_affine<T: Element>(x: &Tensor<T>, alpha: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.dims();
    check_channel_vec("channel_affine alpha", d, alpha.dims())?;
    check_channel_vec("channel_affine beta", d, beta.dims())?;
    let mut y = x.clone();
    for n in 0..d.n {
        for c in 0..d.c {
            let a = alpha.at(n.min(alpha.dims().n - 1), c, 0, 0);
            let b = beta.at(n.min(beta.dims().n - 1), c, 0, 0);
            y.plane_mut(n, c).iter_mut().for_each(|v| *v = a * *v + b);
        }
    }
    Ok(y)
}

/// Returns `(dx, dalpha, dbeta)`.
pub fn channel_affine_backward<T: Element>(
    x: &Tensor<T>,
    alpha: &Tensor<T>,
    beta_dims: Dims,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = x.dims();
    let mut dx = dy.clone();
    let mut da = Tensor::zeros(alpha.dims());
    let mut db = Tensor::zeros(beta_dims);
    for n in 0..d.n {
        for c in 0..d.c {
            let na = n.min(alpha.dims().n - 1);
            let nb = n.min(beta_dims.n - 1);
            let a = alpha.at(na, c, 0, 0);
            let (gx, xv) = (dy.plane(n, c), x.plane(n, c));
            let sa: T = gx.iter().zip(xv).map(|(&g, &v)| g * v).sum();
            let sb: T = gx.iter().copied().sum();
            let ia = da.index(na, c, 0, 0);
            da.data_mut()[ia] += sa;
            let ib = db.index(nb, c, 0, 0);
            db.data_mut()[ib] += sb;
            dx.plane_mut(n, c).iter_mut().for_each(|v| *v *= a);
        }
    }
    (dx, da, db)
}

/// Adds a `(1, c, 1, 1)` bias to every pixel.
pub fn bias_add<T: Element>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.dims();
    if bias.dims() != Dims::new(1, d.c, 1, 1) {
        return Err(TensorError::ShapeMismatch {
            op: "bias_add",
            expected: Dims::new(1, d.c, 1, 1),
            got: bias.dims(),
        });
    }
    let mut y = x.clone();
    for n in 0..d.n {
        for c in 0..d.c {
            let b = bias.data()[c];
            y.plane_mut(n, c).iter_mut().for_each(|v| *v += b);
        }
    }
    Ok(y)
}

pub fn bias_add_backward<T: Element>(dy: &Tensor<T>) -> Tensor<T> {
    let d = dy.dims();
    let mut db = Tensor::zeros([1, d.c, 1, 1]);
    for n in 0..d.n {
        for c in 0..d.c {
            db.data_mut()[c] += dy.plane(n, c).iter().copied().sum::<T>();
        }
    }
    db
}

/// Multiplies every channel by a single-channel map of shape `(n, 1, h, w)`.
pub fn mask_mul<T: Element>(x: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.dims();
    if mask.dims() != d.with_c(1) {
        return Err(TensorError::ShapeMismatch {
            op: "mask_mul",
            expected: d.with_c(1),
            got: mask.dims(),
        });
    }
    let mut y = x.clone();
    for n in 0..d.n {
        let m = mask.plane(n, 0);
        for c in 0..d.c {
            y.plane_mut(n, c).iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
    }
    Ok(y)
}

/// Top-left `h x w` window.
pub fn crop<T: Element>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let d = x.dims();
    if h > d.h || w > d.w || h == 0 || w == 0 {
        return Err(TensorError::InvalidArgument {
            op: "crop",
            what: format!("cannot crop {}x{} to {h}x{w}", d.h, d.w),
        });
    }
    let mut y = Tensor::zeros(d.with_hw(h, w));
    for n in 0..d.n {
        for c in 0..d.c {
            let src = x.plane(n, c);
            let dst = y.plane_mut(n, c);
            for r in 0..h {
                dst[r * w..(r + 1) * w].copy_from_slice(&src[r * d.w..r * d.w + w]);
            }
        }
    }
    Ok(y)
}

pub fn crop_backward<T: Element>(dy: &Tensor<T>, input: Dims) -> Tensor<T> {
    let d = dy.dims();
    let mut dx = Tensor::zeros(input);
    for n in 0..d.n {
        for c in 0..d.c {
            let src = dy.plane(n, c);
            let dst = dx.plane_mut(n, c);
            for r in 0..d.h {
                dst[r * input.w..r * input.w + d.w].copy_from_slice(&src[r * d.w..(r + 1) * d.w]);
            }
        }
    }
    dx
}

/// Forward differences: channels `[0, c)` hold `x[.., x+1] - x[.., x]`,
/// channels `[c, 2c)` hold `x[y+1, ..] - x[y, ..]`. The last column and
/// last row of the respective maps are zero.
pub fn grad_map<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let mut y = Tensor::zeros(d.with_c(2 * d.c));
    for n in 0..d.n {
        for c in 0..d.c {
            let src = x.plane(n, c).to_vec();
            {
                let gx = y.plane_mut(n, c);
                for r in 0..d.h {
                    for col in 0..d.w.saturating_sub(1) {
                        gx[r * d.w + col] = src[r * d.w + col + 1] - src[r * d.w + col];
                    }
                }
            }
            let gy = y.plane_mut(n, d.c + c);
            for r in 0..d.h.saturating_sub(1) {
                for col in 0..d.w {
                    gy[r * d.w + col] = src[(r + 1) * d.w + col] - src[r * d.w + col];
                }
            }
        }
    }
    y
}

pub fn grad_map_backward<T: Element>(dy: &Tensor<T>, input: Dims) -> Tensor<T> {
    let d = input;
    let mut dx = Tensor::zeros(d);
    for n in 0..d.n {
        for c in 0..d.c {
            let gx = dy.plane(n, c).to_vec();
            let gy = dy.plane(n, d.c + c).to_vec();
            let dst = dx.plane_mut(n, c);
            for r in 0..d.h {
                for col in 0..d.w.saturating_sub(1) {
                    let g = gx[r * d.w + col];
                    dst[r * d.w + col + 1] += g;
                    dst[r * d.w + col] -= g;
                }
            }
            for r in 0..d.h.saturating_sub(1) {
                for col in 0..d.w {
                    let g = gy[r * d.w + col];
                    dst[(r + 1) * d.w + col] += g;
                    dst[r * d.w + col] -= g;
                }
            }
        }
    }
    dx
}

pub fn mean_abs<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let s: T = x.data().iter().map(|v| v.abs()).sum();
    Tensor::scalar(s / T::of(x.len() as f64))
}

pub fn mean_abs_backward<T: Element>(x: &Tensor<T>, dy: T) -> Tensor<T> {
    let k = dy / T::of(x.len() as f64);
    x.map(|v| {
        if v > T::zero() {
            k
        } else if v < T::zero() {
            -k
        } else {
            T::zero()
        }
    })
}
