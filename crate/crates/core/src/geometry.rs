//! Points and 2x2 matrices shared by the map families.

use std::f64::consts::PI;

use serde::Serialize;

/// A point in polar form. `theta` is in radians; families normalize it as needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    pub fn from_cartesian(x: f64, y: f64) -> Self {
        Self {
            r: x.hypot(y),
            theta: y.atan2(x),
        }
    }

    pub fn to_cartesian(self) -> [f64; 2] {
        [self.r * self.theta.cos(), self.r * self.theta.sin()]
    }

    /// The point `-z`.
    pub fn antipode(self) -> Self {
        Self {
            r: self.r,
            theta: normalize_angle(self.theta + PI),
        }
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut a = theta.rem_euclid(two_pi);
    if a > PI {
        a -= two_pi;
    }
    if a <= -PI {
        a += two_pi;
    }
    a
}

/// Row-major 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum()
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        let s = (a + d).hypot(c - b);
        let t = (a - d).hypot(b + c);
        0.5 * (s + t)
    }

    pub fn op_norm_sq(&self) -> f64 {
        let n = self.op_norm();
        n * n
    }

    pub fn scale(&self, k: f64) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a * k, b * k], [c * k, d * k]])
    }

    pub fn sub(&self, other: &Mat2) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = other.0;
        Mat2([[a - e, b - f], [c - g, d - h]])
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = other.0;
        Mat2([
            [a * e + b * g, a * f + b * h],
            [c * e + d * g, c * f + d * h],
        ])
    }

    /// Relative Frobenius distance `|self - reference| / |reference|`.
    pub fn rel_error(&self, reference: &Mat2) -> f64 {
        let denom = reference.frobenius_sq().sqrt();
        let num = self.sub(reference).frobenius_sq().sqrt();
        if denom == 0.0 {
            num
        } else {
            num / denom
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

/// Rotation taking the polar frame `(e_r, e_theta)` at angle `theta` to Cartesian axes.
pub fn polar_frame(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_norm_matches_eigen_formula() {
        let m = Mat2::new(3.0, 1.0, -2.0, 0.5);
        let f = m.frobenius_sq();
        let d = m.det();
        let closed = 0.5 * (f + (f * f - 4.0 * d * d).sqrt());
        assert!((m.op_norm_sq() - closed).abs() < 1e-13 * closed);
        assert_eq!(Mat2::IDENTITY.op_norm(), 1.0);
        assert_eq!(Mat2::new(0.0, 0.0, 0.0, -7.0).op_norm(), 7.0);
    }

    #[test]
    fn angles_normalize_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(normalize_angle(0.25), 0.25);
    }
}
