use rand::Rng;
use rand_distr::StandardNormal;

use crate::image::Image;

/// Signal-dependent Gaussian noise with variance `sigma² · x + sigma²`,
/// clamped to `[0, 1]`.
pub fn add_camera_noise<R: Rng + ?Sized>(linear: &Image, sigma: f64, rng: &mut R) -> Image {
    if sigma == 0.0 {
        return linear.clone();
    }
    let s2 = sigma * sigma;
    let mut out = linear.clone();
    for v in out.data_mut() {
        let x = (*v as f64).clamp(0.0, 1.0);
        let z: f64 = rng.sample(StandardNormal);
        *v = (x + z * (s2 * x + s2).sqrt()).clamp(0.0, 1.0) as f32;
    }
    out
}
