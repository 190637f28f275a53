//! Planar points and angle helpers shared by the kinematics and dynamics code.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point (or free vector) in the mechanism plane, in millimetres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from the +x axis.
    pub fn from_angle(angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        Self { x: cos, y: sin }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point {
        Point {
            x: -self.y,
            y: self.x,
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Tip of a crank of `length` pivoting at `ground`, rotated to `angle`.
pub fn crank_tip(ground: Point, length: f64, angle: f64) -> Point {
    ground + Point::from_angle(angle) * length
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Representative of `angle` (mod 2 pi) closest to `reference`.
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    reference + wrap_angle(angle - reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn crank_tip_axis_aligned() {
        let tip = crank_tip(Point::ORIGIN, 150.0, 0.0);
        assert_eq!(tip, Point::new(150.0, 0.0));

        let tip = crank_tip(Point::ORIGIN, 150.0, FRAC_PI_2);
        assert_abs_diff_eq!(tip.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tip.y, 150.0, epsilon = 1e-12);

        let tip = crank_tip(Point::new(250.0, 0.0), 150.0, PI);
        assert_abs_diff_eq!(tip.x, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tip.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(7.0 * TAU + 0.25), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn unwrap_picks_nearest_turn() {
        assert_abs_diff_eq!(unwrap_near(-3.1, 3.1), TAU - 3.1, epsilon = 1e-12);
        assert_abs_diff_eq!(unwrap_near(0.1, 4.0 * PI), 4.0 * PI + 0.1, epsilon = 1e-12);
    }
}
