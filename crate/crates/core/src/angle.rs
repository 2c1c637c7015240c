//! Angle helpers.

use std::f64::consts::{PI, TAU};

use crate::Vec2;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    // rem_euclid can return TAU itself for tiny negative inputs
    if w <= -PI {
        w += TAU;
    }
    w
}

/// Absolute angular distance in `[0, π]`.
pub fn abs_diff(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

/// Counter-clockwise rotation of `v` by `theta`.
pub fn rotate(v: Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Interpolates on the circle along the shortest arc; `frac` in `[0, 1]`.
pub fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    wrap_pi(a + wrap_pi(b - a) * frac)
}

/// Circular mean of a set of angles, `None` when empty or when the
/// resultant vector vanishes.
pub fn circular_mean(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += a.sin();
        c += a.cos();
        n += 1;
    }
    if n == 0 || s.hypot(c) < 1e-12 * n as f64 {
        return None;
    }
    Some(wrap_pi(s.atan2(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap_pi(PI), PI);
        assert_eq!(wrap_pi(-PI), PI);
        assert!((wrap_pi(3.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_pi(0.0), 0.0);
    }

    #[test]
    fn lerp_crosses_seam() {
        let a = 179f64.to_radians();
        let b = (-179f64).to_radians();
        assert!((lerp(a, b, 0.5).abs() - PI).abs() < 1e-12);
        let m = lerp(10f64.to_radians(), 20f64.to_radians(), 0.5);
        assert!((m.to_degrees() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn circular_mean_across_seam() {
        let m = circular_mean([PI - 0.1, -PI + 0.1]).unwrap();
        assert!((m.abs() - PI).abs() < 1e-12);
        assert!(circular_mean([0.0, PI]).is_none());
    }

    proptest! {
        #[test]
        fn wrap_range(a in -1e4f64..1e4) {
            let w = wrap_pi(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / TAU - ((a - w) / TAU).round()).abs() < 1e-9);
        }
    }
}
