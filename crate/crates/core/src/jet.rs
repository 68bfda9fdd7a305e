//! Second-order forward-mode jets in the coordinates `(x, y, t)`.
//!
//! A [`Jet`] carries a value, its gradient and its Hessian. Analytic fields
//! are written once as functions of jets and get exact first and second
//! derivatives; [`FrameJet`] re-expresses them along the left-invariant frame.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        }
    }

    /// The coordinate function number `index` (0 = x, 1 = y, 2 = t) at `v`.
    pub fn var(v: f64, index: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[index] = 1.0;
        j
    }

    /// Seeds `(x, y, t)` at a point.
    pub fn seed(p: [f64; 3]) -> [Jet; 3] {
        [Jet::var(p[0], 0), Jet::var(p[1], 1), Jet::var(p[2], 2)]
    }

    /// Applies a scalar function with derivatives `d0 = φ(v)`, `d1 = φ'(v)`, `d2 = φ''(v)`.
    pub fn chain(self, d0: f64, d1: f64, d2: f64) -> Self {
        let mut out = Self::constant(d0);
        for i in 0..3 {
            out.g[i] = d1 * self.g[i];
            for j in 0..3 {
                out.h[i][j] = d1 * self.h[i][j] + d2 * self.g[i] * self.g[j];
            }
        }
        out
    }

    pub fn powf(self, a: f64) -> Self {
        let v = self.v;
        self.chain(v.powf(a), a * v.powf(a - 1.0), a * (a - 1.0) * v.powf(a - 2.0))
    }

    pub fn powi(self, n: i32) -> Self {
        let v = self.v;
        let nf = n as f64;
        let d1 = if n == 0 { 0.0 } else { nf * v.powi(n - 1) };
        let d2 = if n == 0 || n == 1 {
            0.0
        } else {
            nf * (nf - 1.0) * v.powi(n - 2)
        };
        self.chain(v.powi(n), d1, d2)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let v = self.v;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn recip(self) -> Self {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..3 {
            self.g[i] += o.g[i];
            for j in 0..3 {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..3 {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for j in 0..3 {
                out.h[i][j] = self.h[i][j] * o.v
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j]
                    + self.v * o.h[i][j];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, c: f64) -> Jet {
        self.v *= c;
        for i in 0..3 {
            self.g[i] *= c;
            for j in 0..3 {
                self.h[i][j] *= c;
            }
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self * (1.0 / c)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    fn div(self, j: Jet) -> Jet {
        j.recip() * self
    }
}

/// Value and derivatives of a function along `X = ∂x + 2y∂t`, `Y = ∂y − 2x∂t`, `T = ∂t`.
///
/// Second derivatives are stored as operator products: `xy` is `X(Y f)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameJet {
    pub value: f64,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
    pub yx: f64,
    pub tt: f64,
    pub xt: f64,
    pub yt: f64,
}

impl FrameJet {
    /// Converts a Cartesian jet taken at `(x, y, t)` to frame derivatives.
    pub fn from_cartesian(j: &Jet, x: f64, y: f64) -> Self {
        let [fx, fy, ft] = j.g;
        let h = &j.h;
        let (fxx, fyy, ftt) = (h[0][0], h[1][1], h[2][2]);
        let (fxy, fxt, fyt) = (h[0][1], h[0][2], h[1][2]);
        let mixed = fxy - 2.0 * x * fxt + 2.0 * y * fyt - 4.0 * x * y * ftt;
        Self {
            value: j.v,
            x: fx + 2.0 * y * ft,
            y: fy - 2.0 * x * ft,
            t: ft,
            xx: fxx + 4.0 * y * fxt + 4.0 * y * y * ftt,
            yy: fyy - 4.0 * x * fyt + 4.0 * x * x * ftt,
            xy: mixed - 2.0 * ft,
            yx: mixed + 2.0 * ft,
            tt: ftt,
            xt: fxt + 2.0 * y * ftt,
            yt: fyt - 2.0 * x * ftt,
        }
    }

    /// Jet of `f∘δ_λ` at `p`, given the jet of `f` at `δ_λ(p)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let l2 = lambda * lambda;
        Self {
            value: self.value,
            x: lambda * self.x,
            y: lambda * self.y,
            t: l2 * self.t,
            xx: l2 * self.xx,
            yy: l2 * self.yy,
            xy: l2 * self.xy,
            yx: l2 * self.yx,
            tt: l2 * l2 * self.tt,
            xt: l2 * lambda * self.xt,
            yt: l2 * lambda * self.yt,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn plus(&self, o: &FrameJet) -> Self {
        Self {
            value: self.value + o.value,
            x: self.x + o.x,
            y: self.y + o.y,
            t: self.t + o.t,
            xx: self.xx + o.xx,
            yy: self.yy + o.yy,
            xy: self.xy + o.xy,
            yx: self.yx + o.yx,
            tt: self.tt + o.tt,
            xt: self.xt + o.xt,
            yt: self.yt + o.yt,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            value: f(self.value),
            x: f(self.x),
            y: f(self.y),
            t: f(self.t),
            xx: f(self.xx),
            yy: f(self.yy),
            xy: f(self.xy),
            yx: f(self.yx),
            tt: f(self.tt),
            xt: f(self.xt),
            yt: f(self.yt),
        }
    }

    /// Entries in a fixed order, for comparisons.
    pub fn as_array(&self) -> [f64; 11] {
        [
            self.value, self.x, self.y, self.t, self.xx, self.yy, self.xy, self.yx, self.tt,
            self.xt, self.yt,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(v: [Jet; 3]) -> Jet {
        let [x, y, t] = v;
        x * x * y + t * t * 3.0 - x * t
    }

    #[test]
    fn polynomial_derivatives() {
        let j = poly(Jet::seed([1.0, 2.0, 3.0]));
        assert_eq!(j.v, 2.0 + 27.0 - 3.0);
        assert_eq!(j.g, [2.0 * 2.0 - 3.0, 1.0, 18.0 - 1.0]);
        assert_eq!(j.h[0][0], 4.0);
        assert_eq!(j.h[0][1], 2.0);
        assert_eq!(j.h[0][2], -1.0);
        assert_eq!(j.h[2][2], 6.0);
        assert_eq!(j.h[1][1], 0.0);
    }

    #[test]
    fn unary_functions_match_closed_forms() {
        let x = Jet::var(0.7, 0);
        let s = x.sin();
        assert!((s.g[0] - 0.7f64.cos()).abs() < 1e-15);
        assert!((s.h[0][0] + 0.7f64.sin()).abs() < 1e-15);
        let p = x.powf(-0.5);
        assert!((p.h[0][0] - 0.75 * 0.7f64.powf(-2.5)).abs() < 1e-13);
        let q = x.sqrt();
        assert!((q.h[0][0] + 0.25 * 0.7f64.powf(-1.5)).abs() < 1e-13);
        let r = (x * x).ln();
        assert!((r.g[0] - 2.0 / 0.7).abs() < 1e-14);
        let d = 1.0 / x;
        assert!((d.h[0][0] - 2.0 / 0.343).abs() < 1e-12);
    }

    #[test]
    fn frame_commutator_is_minus_four_t() {
        let p = [0.3, -0.4, 0.8];
        let j = (Jet::seed(p)[0] * Jet::seed(p)[2] + Jet::seed(p)[1].powi(3)).exp();
        let fj = FrameJet::from_cartesian(&j, p[0], p[1]);
        assert!((fj.xy - fj.yx + 4.0 * fj.t).abs() < 1e-13);
    }

    #[test]
    fn frame_of_coordinate_functions() {
        let p = [0.5, 1.5, -2.0];
        let [x, y, t] = Jet::seed(p);
        let fx = FrameJet::from_cartesian(&x, p[0], p[1]);
        assert_eq!((fx.x, fx.y, fx.t), (1.0, 0.0, 0.0));
        let ft = FrameJet::from_cartesian(&t, p[0], p[1]);
        assert_eq!((ft.x, ft.y, ft.t), (2.0 * p[1], -2.0 * p[0], 1.0));
        let fy2 = FrameJet::from_cartesian(&(y * y), p[0], p[1]);
        assert_eq!(fy2.yy, 2.0);
    }
}
