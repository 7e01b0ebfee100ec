//! Planar geometry primitives (km coordinates, pre-projected).

use crate::scalar::Scalar;

/// A point in planar km coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Linear interpolation: `self + s * (other - self)`.
    pub fn lerp(&self, other: &Self, s: T) -> Self {
        Self {
            x: self.x + (other.x - self.x) * s,
            y: self.y + (other.y - self.y) * s,
        }
    }
}

/// Total length of a polyline given as consecutive vertices.
pub fn polyline_length<T: Scalar>(points: &[Point2<T>]) -> T {
    points
        .windows(2)
        .map(|w| w[0].distance(&w[1]))
        .fold(T::zero(), |a, b| a + b)
}
