//! Group law, dilations and the Korányi gauge on the Heisenberg group H^n.
//!
//! Points are `(z, t)` with `z ∈ C^n`, `t ∈ R` and the law
//! `(z, t)·(w, s) = (z + w, t + s + 2 Im(z·w̄))`.

use num_complex::Complex64;
use smallvec::{smallvec, SmallVec};
use std::fmt;

use crate::error::{HeisError, Result};

/// Coordinates of `z`; inline storage for the H^1 case used everywhere downstream.
pub type ZCoords = SmallVec<[Complex64; 1]>;

#[derive(Clone, PartialEq)]
pub struct HeisPoint {
    z: ZCoords,
    t: f64,
}

impl HeisPoint {
    pub fn new(z: impl Into<ZCoords>, t: f64) -> Result<Self> {
        let z = z.into();
        if z.is_empty() {
            return Err(HeisError::Dimension { expected: 1, found: 0 });
        }
        if !t.is_finite() || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(HeisError::NonFinite);
        }
        Ok(Self { z, t })
    }

    /// A point of H^1 from real coordinates `z = x + iy`.
    ///
    /// Panics on non-finite input; use [`HeisPoint::new`] for a checked constructor.
    pub fn h1(x: f64, y: f64, t: f64) -> Self {
        Self::new(smallvec![Complex64::new(x, y)], t).expect("finite coordinates")
    }

    pub fn identity(n: usize) -> Self {
        Self {
            z: smallvec![Complex64::new(0.0, 0.0); n],
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Real part of the first complex coordinate.
    pub fn x(&self) -> f64 {
        self.z[0].re
    }

    /// Imaginary part of the first complex coordinate.
    pub fn y(&self) -> f64 {
        self.z[0].im
    }

    /// `(x, y, t)` of an H^1 point.
    pub fn xyt(&self) -> [f64; 3] {
        [self.x(), self.y(), self.t]
    }

    pub fn z_norm_sq(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.t == 0.0 && self.z.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Largest coordinate difference, used by tests and tolerance checks.
    pub fn max_abs_diff(&self, other: &HeisPoint) -> f64 {
        let dz = self
            .z
            .iter()
            .zip(other.z.iter())
            .map(|(a, b)| (a.re - b.re).abs().max((a.im - b.im).abs()))
            .fold(0.0, f64::max);
        dz.max((self.t - other.t).abs())
    }
}

impl fmt::Debug for HeisPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.z.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, "; {})", self.t)
    }
}

/// Heisenberg dilation `δ_λ(z, t) = (λz, λ²t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dilation(f64);

impl Dilation {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self(lambda))
        } else {
            Err(HeisError::InvalidParameter(format!(
                "dilation factor must be positive and finite, got {lambda}"
            )))
        }
    }

    pub fn lambda(self) -> f64 {
        self.0
    }

    pub fn compose(self, other: Dilation) -> Dilation {
        Dilation(self.0 * other.0)
    }

    pub fn inverse(self) -> Dilation {
        Dilation(1.0 / self.0)
    }
}

/// `Q = 2n + 2`, the scaling exponent of the volume under dilations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HomogeneousDimension(u32);

impl HomogeneousDimension {
    pub fn for_dim(n: usize) -> Self {
        Self(2 * n as u32 + 2)
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

/// Homogeneous dimension of H^1.
pub const Q: f64 = 4.0;

fn check_same_dim(a: &HeisPoint, b: &HeisPoint) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(HeisError::Dimension {
            expected: a.dim(),
            found: b.dim(),
        })
    }
}

pub fn group_mul(a: &HeisPoint, b: &HeisPoint) -> Result<HeisPoint> {
    check_same_dim(a, b)?;
    let mut symplectic = 0.0;
    let z: ZCoords = a
        .z
        .iter()
        .zip(b.z.iter())
        .map(|(za, zb)| {
            symplectic += (za * zb.conj()).im;
            za + zb
        })
        .collect();
    Ok(HeisPoint {
        z,
        t: a.t + b.t + 2.0 * symplectic,
    })
}

pub fn group_inv(a: &HeisPoint) -> HeisPoint {
    HeisPoint {
        z: a.z.iter().map(|c| -c).collect(),
        t: -a.t,
    }
}

pub fn dilate(d: Dilation, x: &HeisPoint) -> HeisPoint {
    let l = d.lambda();
    HeisPoint {
        z: x.z.iter().map(|c| c * l).collect(),
        t: l * l * x.t,
    }
}

/// `L_{x0}(x) = x0⁻¹·x`; sends `x0` to the identity.
pub fn left_translate(x0: &HeisPoint, x: &HeisPoint) -> Result<HeisPoint> {
    group_mul(&group_inv(x0), x)
}

pub fn koranyi_norm(x: &HeisPoint) -> f64 {
    let r2 = x.z_norm_sq();
    (r2 * r2 + x.t * x.t).sqrt().sqrt()
}

/// Gauge distance `|a⁻¹·b|`. Left-invariant.
pub fn koranyi_dist(a: &HeisPoint, b: &HeisPoint) -> Result<f64> {
    Ok(koranyi_norm(&left_translate(a, b)?))
}
