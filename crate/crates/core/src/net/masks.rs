//! Soft masks over the saturation prior.
//!
//! The prior is reduced to one value per pixel, `p = max(r, g, b)`, clamped
//! to `[0, 1]`.

use lhdr_tensor::{Element, Tensor};

/// Weight of pixels in the saturated band: 0 up to `t`, rising linearly to 1 at `p = 1`.
pub fn bright_valid(p: f64, t: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    ((p - t) / (1.0 - t)).max(0.0)
}

/// Complement used to gate the encoder: 1 up to `t`, falling to 0 at `p = 1`.
pub fn bright_invalid(p: f64, t: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    ((p - 1.0) / (t - 1.0)).min(1.0)
}

/// Per-pixel channel maximum, `(n, 1, h, w)`.
pub fn prior_reduce<T: Element>(prior: &Tensor<T>) -> Tensor<T> {
    let d = prior.dims();
    Tensor::from_fn(d.with_c(1), |[n, _, y, x]| {
        (0..d.c)
            .map(|c| prior.at(n, c, y, x))
            .fold(T::neg_infinity(), T::max)
    })
}

pub fn bright_valid_mask<T: Element>(prior: &Tensor<T>, t: f64) -> Tensor<T> {
    prior_reduce(prior).map(|p| T::of(bright_valid(p.as_f64(), t)))
}

pub fn bright_invalid_mask<T: Element>(prior: &Tensor<T>, t: f64) -> Tensor<T> {
    prior_reduce(prior).map(|p| T::of(bright_invalid(p.as_f64(), t)))
}
