//! Grouped 2-D convolution.
//!
//! Output rows are processed in bands so the im2col scratch stays small at
//! 1080p. Bands run in parallel; their partial results are reduced in band
//! order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::{Dims, Element, Result, Tensor, TensorError};

/// Target number of output pixels per band.
const BAND_PIXELS: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Stride-1 convolution with "same" padding for odd kernels.
    pub const fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            groups: 1,
        }
    }

    pub const fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::same(in_channels, out_channels, 1)
    }

    pub const fn with_groups(self, groups: usize) -> Self {
        ConvSpec { groups, ..self }
    }

    pub const fn with_stride(self, stride: usize) -> Self {
        ConvSpec { stride, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            groups,
            ..
        } = *self;
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || groups == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                what: format!("all of channels/kernel/stride/groups must be positive: {self:?}"),
            });
        }
        if in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(TensorError::GroupsNotDividing {
                groups,
                in_channels,
                out_channels,
            });
        }
        Ok(())
    }

    pub const fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub const fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// `(out_channels, in_channels / groups, k, k)`.
    pub const fn weight_dims(&self) -> Dims {
        Dims::new(self.out_channels, self.in_per_group(), self.kernel, self.kernel)
    }

    pub const fn bias_dims(&self) -> Dims {
        Dims::new(1, self.out_channels, 1, 1)
    }

    pub const fn weight_len(&self) -> usize {
        self.weight_dims().len()
    }

    /// Weights plus biases.
    pub const fn param_count(&self) -> usize {
        self.weight_len() + self.out_channels
    }

    /// Output spatial size, or `None` if the kernel does not fit.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }

    /// Multiply-accumulates for one sample at input size `h x w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_hw(h, w).unwrap_or((0, 0));
        (oh * ow) as u64
            * self.out_channels as u64
            * self.in_per_group() as u64
            * (self.kernel * self.kernel) as u64
    }

    fn is_direct(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn col_rows(&self) -> usize {
        self.in_per_group() * self.kernel * self.kernel
    }
}

/// Shape check shared by forward and backward; returns the output dims.
pub fn conv_output_dims(x: Dims, spec: &ConvSpec, weight: Dims, bias: Option<Dims>) -> Result<Dims> {
    spec.validate()?;
    if x.c != spec.in_channels {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d input",
            expected: x.with_c(spec.in_channels),
            got: x,
        });
    }
    if weight != spec.weight_dims() {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d weight",
            expected: spec.weight_dims(),
            got: weight,
        });
    }
    if let Some(b) = bias {
        if b != spec.bias_dims() {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                expected: spec.bias_dims(),
                got: b,
            });
        }
    }
    let (oh, ow) = spec.output_hw(x.h, x.w).ok_or_else(|| TensorError::InvalidArgument {
        op: "conv2d",
        what: format!("kernel {} larger than padded input {}x{}", spec.kernel, x.h, x.w),
    })?;
    Ok(Dims::new(x.n, spec.out_channels, oh, ow))
}

#[derive(Clone, Copy)]
struct Band {
    n: usize,
    y0: usize,
    y1: usize,
}

fn bands(n: usize, oh: usize, ow: usize) -> Vec<Band> {
    let rows = BAND_PIXELS.div_ceil(ow.max(1)).max(1);
    let mut out = Vec::new();
    for n in 0..n {
        let mut y0 = 0;
        while y0 < oh {
            let y1 = (y0 + rows).min(oh);
            out.push(Band { n, y0, y1 });
            y0 = y1;
        }
    }
    out
}

/// Safe wrapper over the strided GEMM: `c = a * b + beta * c`.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Element>(
    (m, k, n): (usize, usize, usize),
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: a out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: b out of bounds");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: c out of bounds");
    // SAFETY: bounds checked above; `c` is uniquely borrowed.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        )
    }
}

/// Fills `col` (col_rows x band pixels) for group `g` of sample `band.n`.
fn im2col<T: Element>(x: &Tensor<T>, spec: &ConvSpec, g: usize, band: Band, ow: usize, col: &mut [T]) {
    let d = x.dims();
    let k = spec.kernel;
    let px = (band.y1 - band.y0) * ow;
    let cin_g = spec.in_per_group();
    for ci in 0..cin_g {
        let plane = x.plane(band.n, g * cin_g + ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * px..(row + 1) * px];
                let mut i = 0;
                for oy in band.y0..band.y1 {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < 0 || iy >= d.h as isize {
                        dst[i..i + ow].fill(T::zero());
                        i += ow;
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        dst[i] = if ix >= 0 && ix < d.w as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                        i += 1;
                    }
                }
            }
        }
    }
}

/// Input rows touched by output rows `[y0, y1)`, clipped to the image.
fn input_rows(spec: &ConvSpec, band: Band, h: usize) -> (usize, usize) {
    let lo = (band.y0 * spec.stride) as isize - spec.padding as isize;
    let hi = ((band.y1 - 1) * spec.stride + spec.kernel) as isize - spec.padding as isize;
    (lo.max(0) as usize, (hi.max(0) as usize).min(h))
}

/// Scatter-adds `col` back into `dx`, a buffer holding input rows `[r0, r1)`
/// of all `in_channels` channels for one sample.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Element>(
    col: &[T],
    spec: &ConvSpec,
    g: usize,
    band: Band,
    (r0, r1): (usize, usize),
    w: usize,
    ow: usize,
    dx: &mut [T],
) {
    let k = spec.kernel;
    let px = (band.y1 - band.y0) * ow;
    let cin_g = spec.in_per_group();
    let rows = r1 - r0;
    for ci in 0..cin_g {
        let plane = &mut dx[(g * cin_g + ci) * rows * w..(g * cin_g + ci + 1) * rows * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * px..(row + 1) * px];
                let mut i = 0;
                for oy in band.y0..band.y1 {
                    let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                    if iy < r0 as isize || iy >= r1 as isize {
                        i += ow;
                        continue;
                    }
                    let line = &mut plane[(iy as usize - r0) * w..(iy as usize - r0 + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] += src[i];
                        }
                        i += 1;
                    }
                }
            }
        }
    }
}

/// Grouped 2-D convolution with optional per-channel bias.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let od = conv_output_dims(x.dims(), spec, weight.dims(), bias.map(|b| b.dims()))?;
    let d = x.dims();
    let (oh, ow) = (od.h, od.w);
    let cout_g = spec.out_per_group();
    let kk = spec.col_rows();
    let w = weight.data();

    let results: Vec<(Band, Vec<T>)> = bands(d.n, oh, ow)
        .into_par_iter()
        .map(|band| {
            let px = (band.y1 - band.y0) * ow;
            let mut out = vec![T::zero(); spec.out_channels * px];
            let mut col = if spec.is_direct() {
                Vec::new()
            } else {
                vec![T::zero(); kk * px]
            };
            for g in 0..spec.groups {
                let wg = &w[g * cout_g * kk..(g + 1) * cout_g * kk];
                let og = &mut out[g * cout_g * px..(g + 1) * cout_g * px];
                if spec.is_direct() {
                    // Rows are input channels (stride h*w), columns the band's pixels.
                    let offset = (band.n * d.c + g * kk) * d.plane() + band.y0 * d.w;
                    gemm(
                        (cout_g, kk, px),
                        wg,
                        (kk, 1),
                        &x.data()[offset..],
                        (d.plane(), 1),
                        T::zero(),
                        og,
                        (px, 1),
                    );
                } else {
                    im2col(x, spec, g, band, ow, &mut col);
                    gemm((cout_g, kk, px), wg, (kk, 1), &col, (px, 1), T::zero(), og, (px, 1));
                }
            }
            if let Some(b) = bias {
                for (o, chunk) in out.chunks_mut(px).enumerate() {
                    let bv = b.data()[o];
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
            }
            (band, out)
        })
        .collect();

    let mut y = Tensor::zeros(od);
    for (band, out) in results {
        let px = (band.y1 - band.y0) * ow;
        for o in 0..spec.out_channels {
            let plane = y.plane_mut(band.n, o);
            plane[band.y0 * ow..band.y1 * ow].copy_from_slice(&out[o * px..(o + 1) * px]);
        }
    }
    Ok(y)
}

/// Gradients of [`conv2d`] with respect to its input, weight and bias.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Which gradients [`conv2d_backward`] should produce.
#[derive(Clone, Copy, Debug)]
pub struct ConvNeeds {
    pub input: bool,
    pub weight: bool,
    pub bias: bool,
}

pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    needs: ConvNeeds,
) -> Result<ConvGrads<T>> {
    let od = conv_output_dims(x.dims(), spec, weight.dims(), None)?;
    if dy.dims() != od {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d backward",
            expected: od,
            got: dy.dims(),
        });
    }
    let d = x.dims();
    let (oh, ow) = (od.h, od.w);
    let cout_g = spec.out_per_group();
    let kk = spec.col_rows();
    let w = weight.data();

    let bias = needs.bias.then(|| {
        let mut b = Tensor::zeros(spec.bias_dims());
        for n in 0..od.n {
            for o in 0..od.c {
                b.data_mut()[o] += dy.plane(n, o).iter().copied().sum::<T>();
            }
        }
        b
    });
    if !needs.input && !needs.weight {
        return Ok(ConvGrads {
            input: None,
            weight: None,
            bias,
        });
    }

    struct Partial<T> {
        band: Band,
        rows: (usize, usize),
        dw: Vec<T>,
        dx: Vec<T>,
    }

    let partials: Vec<Partial<T>> = bands(d.n, oh, ow)
        .into_par_iter()
        .map(|band| {
            let px = (band.y1 - band.y0) * ow;
            let rows = input_rows(spec, band, d.h);
            let mut dw = if needs.weight {
                vec![T::zero(); weight.len()]
            } else {
                Vec::new()
            };
            let mut dx = if needs.input {
                vec![T::zero(); d.c * (rows.1 - rows.0) * d.w]
            } else {
                Vec::new()
            };
            let mut col = vec![T::zero(); kk * px];
            let dy_off = |g: usize| (band.n * od.c + g * cout_g) * od.plane() + band.y0 * ow;
            for g in 0..spec.groups {
                let dyg = &dy.data()[dy_off(g)..];
                if needs.weight {
                    // dW_g = dY_g (cout_g x px) * col^T (px x kk)
                    if spec.is_direct() {
                        let offset = (band.n * d.c + g * kk) * d.plane() + band.y0 * d.w;
                        gemm(
                            (cout_g, px, kk),
                            dyg,
                            (od.plane(), 1),
                            &x.data()[offset..],
                            (1, d.plane()),
                            T::zero(),
                            &mut dw[g * cout_g * kk..(g + 1) * cout_g * kk],
                            (kk, 1),
                        );
                    } else {
                        im2col(x, spec, g, band, ow, &mut col);
                        gemm(
                            (cout_g, px, kk),
                            dyg,
                            (od.plane(), 1),
                            &col,
                            (1, px),
                            T::zero(),
                            &mut dw[g * cout_g * kk..(g + 1) * cout_g * kk],
                            (kk, 1),
                        );
                    }
                }
                if needs.input {
                    // dcol = W_g^T (kk x cout_g) * dY_g (cout_g x px)
                    let wg = &w[g * cout_g * kk..(g + 1) * cout_g * kk];
                    gemm(
                        (kk, cout_g, px),
                        wg,
                        (1, kk),
                        dyg,
                        (od.plane(), 1),
                        T::zero(),
                        &mut col,
                        (px, 1),
                    );
                    col2im(&col, spec, g, band, rows, d.w, ow, &mut dx);
                }
            }
            Partial { band, rows, dw, dx }
        })
        .collect();

    let mut dweight = needs.weight.then(|| Tensor::zeros(weight.dims()));
    let mut dinput = needs.input.then(|| Tensor::zeros(d));
    for p in partials {
        if let Some(dw) = dweight.as_mut() {
            dw.data_mut().iter_mut().zip(&p.dw).for_each(|(a, b)| *a += *b);
        }
        if let Some(dx) = dinput.as_mut() {
            let (r0, r1) = p.rows;
            let rows = r1 - r0;
            for c in 0..d.c {
                let plane = dx.plane_mut(p.band.n, c);
                let src = &p.dx[c * rows * d.w..(c + 1) * rows * d.w];
                plane[r0 * d.w..r1 * d.w]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, b)| *a += *b);
            }
        }
    }
    Ok(ConvGrads {
        input: dinput,
        weight: dweight,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nested-loop reference used as the oracle for the banded kernel.
    fn naive(x: &Tensor<f64>, spec: &ConvSpec, w: &Tensor<f64>, b: Option<&Tensor<f64>>) -> Tensor<f64> {
        let d = x.dims();
        let (oh, ow) = spec.output_hw(d.h, d.w).unwrap();
        let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
        Tensor::from_fn([d.n, spec.out_channels, oh, ow], |[n, o, oy, ox]| {
            let g = o / cout_g;
            let mut acc = b.map_or(0.0, |b| b.data()[o]);
            for ci in 0..cin_g {
                for ky in 0..spec.kernel {
                    for kx in 0..spec.kernel {
                        let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < d.h && (ix as usize) < d.w {
                            acc += w.at(o, ci, ky, kx) * x.at(n, g * cin_g + ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    fn pseudo(dims: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor::from_fn(dims, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        })
    }

    #[test]
    fn all_ones_3x3_center_and_corner() {
        let x = Tensor::<f32>::ones([1, 2, 3, 3]);
        let spec = ConvSpec::same(2, 1, 3);
        let w = Tensor::ones(spec.weight_dims());
        let y = conv2d(&x, &spec, &w, None).unwrap();
        assert_eq!(y.at(0, 0, 1, 1), 18.0);
        assert_eq!(y.at(0, 0, 0, 0), 8.0);
        assert_eq!(y.at(0, 0, 0, 1), 12.0);
    }

    #[test]
    fn pointwise_identity() {
        let x = Tensor::from_fn([2, 3, 4, 5], |[n, c, y, xx]| (n + 2 * c + 3 * y + 5 * xx) as f32);
        let spec = ConvSpec::pointwise(3, 3);
        let w = Tensor::from_fn(spec.weight_dims(), |[o, i, _, _]| if o == i { 1.0 } else { 0.0 });
        let b = Tensor::zeros(spec.bias_dims());
        assert_eq!(conv2d(&x, &spec, &w, Some(&b)).unwrap(), x);
    }

    #[test]
    fn grouped_weight_count() {
        let spec = ConvSpec::same(8, 8, 3).with_groups(4);
        assert_eq!(spec.weight_len(), 144);
        assert_eq!(spec.param_count(), 152);
        assert_eq!(ConvSpec::same(8, 8, 3).param_count(), 584);
    }

    #[test]
    fn rejects_bad_specs() {
        let x = Tensor::<f32>::ones([1, 6, 4, 4]);
        let spec = ConvSpec::same(6, 8, 3).with_groups(4);
        let w = Tensor::ones(Dims::new(8, 1, 3, 3));
        assert!(matches!(
            conv2d(&x, &spec, &w, None),
            Err(TensorError::GroupsNotDividing { .. })
        ));
        let spec = ConvSpec::same(4, 4, 3);
        let w = Tensor::ones(spec.weight_dims());
        assert!(matches!(
            conv2d(&x, &spec, &w, None),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matches_naive_across_shapes() {
        let cases = [
            (ConvSpec::same(4, 8, 3), [2, 4, 9, 7]),
            (ConvSpec::same(8, 8, 3).with_groups(4), [1, 8, 6, 6]),
            (ConvSpec::same(3, 5, 3).with_stride(2), [1, 3, 9, 8]),
            (ConvSpec::pointwise(6, 4).with_groups(2), [2, 6, 5, 5]),
            (ConvSpec::same(2, 2, 5), [1, 2, 70, 40]),
        ];
        for (i, (spec, xd)) in cases.into_iter().enumerate() {
            let x = pseudo(xd, i as u64);
            let w = pseudo(spec.weight_dims().as_array(), 100 + i as u64);
            let b = pseudo(spec.bias_dims().as_array(), 200 + i as u64);
            let got = conv2d(&x, &spec, &w, Some(&b)).unwrap();
            let want = naive(&x, &spec, &w, Some(&b));
            assert!(got.max_abs_diff(&want) < 1e-12, "case {i}");
        }
    }

    #[test]
    fn grouped_blocks_read_only_their_inputs() {
        let spec = ConvSpec::same(8, 8, 3).with_groups(4);
        let w = pseudo(spec.weight_dims().as_array(), 1);
        let mut x = pseudo([1, 8, 5, 5], 2);
        let before = conv2d(&x, &spec, &w, None).unwrap();
        // Perturb input block 3 (channels 6, 7): only output block 3 may change.
        for v in x.plane_mut(0, 6) {
            *v += 1.0;
        }
        let after = conv2d(&x, &spec, &w, None).unwrap();
        for o in 0..8 {
            let changed = before.plane(0, o) != after.plane(0, o);
            assert_eq!(changed, o >= 6, "output channel {o}");
        }
    }

    #[test]
    fn groups_one_matches_single_group_path() {
        // Groups=2 with block-diagonal dense weights equals groups=1 with zeros off-block.
        let dense = ConvSpec::same(4, 4, 3);
        let grouped = dense.with_groups(2);
        let wg = pseudo(grouped.weight_dims().as_array(), 5);
        let wd = Tensor::from_fn(dense.weight_dims(), |[o, i, ky, kx]| {
            if o / 2 == i / 2 {
                wg.at(o, i % 2, ky, kx)
            } else {
                0.0
            }
        });
        let x = pseudo([1, 4, 6, 6], 9);
        let a = conv2d(&x, &dense, &wd, None).unwrap();
        let b = conv2d(&x, &grouped, &wg, None).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}
