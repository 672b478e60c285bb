//! Points on the circle, identified with `[0, 2π)`.

use std::f64::consts::TAU;

/// An angle in radians, reduced to `[0, 2π)` after every operation.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Angle(f64);

impl Angle {
    /// Reduce an arbitrary real to `[0, 2π)`.
    pub fn new(theta: f64) -> Self {
        let mut r = theta.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative inputs.
        if r >= TAU {
            r = 0.0;
        }
        Angle(r)
    }

    pub const fn zero() -> Self {
        Angle(0.0)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn cos(self) -> f64 {
        self.0.cos()
    }

    pub fn sin(self) -> f64 {
        self.0.sin()
    }

    /// Raw signed difference `self − other`, in `(−2π, 2π)`.
    pub fn minus(self, other: Angle) -> f64 {
        self.0 - other.0
    }

    /// The reflection `θ ↦ 2π − θ`.
    pub fn reflected(self) -> Angle {
        Angle::new(TAU - self.0)
    }

    /// `self + delta`, reduced.
    pub fn shifted(self, delta: f64) -> Angle {
        Angle::new(self.0 + delta)
    }
}

impl std::fmt::Display for Angle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_lands_in_range() {
        for &x in &[0.0, -1.0, 7.0, 100.0, -100.0, TAU, -TAU, 1e-300, -1e-300] {
            let a = Angle::new(x);
            assert!(a.radians() >= 0.0 && a.radians() < TAU, "{x} -> {}", a.radians());
        }
    }

    #[test]
    fn reflection_is_involutive() {
        let a = Angle::new(1.2345);
        let b = a.reflected().reflected();
        assert!((a.radians() - b.radians()).abs() < 1e-15);
    }
}
