//! Fixed convolution kernels.

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};

/// Laplacian-of-Gaussian kernel sampled on an odd `size` x `size` grid,
/// then mean-corrected so the taps sum to exactly zero (a flat input maps
/// to zero response).
///
/// The continuous profile is
///   -(1 / (pi * sigma^4)) * (1 - r^2 / (2 sigma^2)) * exp(-r^2 / (2 sigma^2)),
/// negative at the centre with a positive ring.
pub fn log_kernel<E: Elem>(size: usize, sigma: f64) -> Result<Array<E>> {
    if size < 3 || size % 2 == 0 {
        return Err(NumericsError::InvalidArg {
            op: "log_kernel",
            detail: format!("size must be odd and >= 3, got {}", size),
        });
    }
    if !(sigma > 0.0) {
        return Err(NumericsError::InvalidArg {
            op: "log_kernel",
            detail: format!("sigma must be positive, got {}", sigma),
        });
    }
    let c = (size as f64 - 1.0) / 2.0;
    let s2 = 2.0 * sigma * sigma;
    let norm = -1.0 / (std::f64::consts::PI * sigma.powi(4));
    let mut taps = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = (y as f64 - c, x as f64 - c);
            let r2 = dx * dx + dy * dy;
            taps[y * size + x] = norm * (1.0 - r2 / s2) * (-r2 / s2).exp();
        }
    }
    let mean = taps.iter().sum::<f64>() / (size * size) as f64;
    for t in &mut taps {
        *t -= mean;
    }
    Array::new(
        vec![size, size],
        taps.into_iter().map(E::from_f64).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_sum_to_zero_and_centre_is_the_minimum() {
        for &size in &[3usize, 5, 7, 9] {
            for &sigma in &[0.5f64, 1.0, 2.0] {
                let k: Array<f64> = log_kernel(size, sigma).unwrap();
                let sum: f64 = k.data().iter().sum();
                assert!(sum.abs() < 1e-12, "size {} sigma {} sum {}", size, sigma, sum);
                let centre = k.at2(size / 2, size / 2);
                for &v in k.data() {
                    assert!(centre <= v + 1e-15);
                }
                assert!(centre < 0.0);
            }
        }
    }

    #[test]
    fn kernel_has_four_fold_symmetry() {
        let k: Array<f64> = log_kernel(7, 1.3).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let v = k.at2(y, x);
                assert_eq!(v, k.at2(6 - y, x));
                assert_eq!(v, k.at2(y, 6 - x));
                assert_eq!(v, k.at2(x, y));
            }
        }
    }

    #[test]
    fn bad_arguments_are_rejected() {
        assert!(log_kernel::<f64>(4, 1.0).is_err());
        assert!(log_kernel::<f64>(1, 1.0).is_err());
        assert!(log_kernel::<f64>(5, 0.0).is_err());
        assert!(log_kernel::<f64>(5, -1.0).is_err());
    }
}
