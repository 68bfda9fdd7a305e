//! Horizontal calculus on H^1: the frame `X, Y, T`, the dilation generator
//! `Ξ = xX + yY + 2tT`, horizontal gradient and sublaplacian.
//!
//! Metric convention: `{X/2, Y/2, T}` is orthonormal, so
//! `g = 4dx² + 4dy² + θ²` with `θ = dt − 2y dx + 2x dy`, `dV = 4 dx dy dt`,
//! `∇^H f = ¼(Xf·X + Yf·Y)` and `Δ_b = ¼(X² + Y²) = div ∇^H`.
//!
//! Every operation first asks the field for an analytic jet and falls back to
//! central differences along the one-parameter subgroups `exp(sX)`, `exp(sY)`,
//! `exp(sT)`, refined by Richardson extrapolation.

use crate::error::{HeisError, Result};
use crate::field::ScalarField;
use crate::group::{dilate, koranyi_norm, left_translate, Dilation, HeisPoint};
use crate::jet::FrameJet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameDir {
    X,
    Y,
    T,
    Xi,
}

/// Finite-difference settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    h: f64,
    depth: u8,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { h: 1e-3, depth: 2 }
    }
}

impl FdConfig {
    pub fn new(h: f64, depth: u8) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(HeisError::InvalidParameter(format!("fd step must be positive, got {h}")));
        }
        if !(1..=4).contains(&depth) {
            return Err(HeisError::InvalidParameter(format!(
                "richardson depth must be in 1..=4, got {depth}"
            )));
        }
        Ok(Self { h, depth })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }
}

/// Horizontal vector `a·X + b·Y` at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct HVector {
    pub base: HeisPoint,
    pub a: f64,
    pub b: f64,
}

impl HVector {
    pub fn frame(&self) -> FrameVector {
        FrameVector {
            a: self.a,
            b: self.b,
            c: 0.0,
        }
    }
}

/// Tangent vector `a·X + b·Y + c·T` in frame components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameVector {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FrameVector {
    /// Frame components of `vx∂x + vy∂y + vt∂t` at `p`.
    pub fn from_coords(v: [f64; 3], p: &HeisPoint) -> Self {
        let (x, y) = (p.x(), p.y());
        Self {
            a: v[0],
            b: v[1],
            c: v[2] - 2.0 * y * v[0] + 2.0 * x * v[1],
        }
    }

    pub fn to_coords(&self, p: &HeisPoint) -> [f64; 3] {
        let (x, y) = (p.x(), p.y());
        [self.a, self.b, self.c + 2.0 * y * self.a - 2.0 * x * self.b]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a: s * self.a,
            b: s * self.b,
            c: s * self.c,
        }
    }
}

/// Webster metric `g(u, v)` in frame components.
pub fn webster_inner(u: &FrameVector, v: &FrameVector) -> f64 {
    4.0 * (u.a * v.a + u.b * v.b) + u.c * v.c
}

pub fn webster_norm(u: &FrameVector) -> f64 {
    webster_inner(u, u).sqrt()
}

/// Metric gradient `∇_g f` from the frame derivatives `(Xf, Yf, Tf)`.
pub fn webster_gradient(d: [f64; 3]) -> FrameVector {
    FrameVector {
        a: d[0] / 4.0,
        b: d[1] / 4.0,
        c: d[2],
    }
}

/// `Ξ` at `p` in frame components.
pub fn xi_vector(p: &HeisPoint) -> FrameVector {
    FrameVector {
        a: p.x(),
        b: p.y(),
        c: 2.0 * p.t(),
    }
}

/// Right multiplication by `exp(s·dir)`, the flow of a left-invariant field.
fn flow(p: &HeisPoint, dir: FrameDir, s: f64) -> HeisPoint {
    let [x, y, t] = p.xyt();
    match dir {
        FrameDir::X => HeisPoint::h1(x + s, y, t + 2.0 * y * s),
        FrameDir::Y => HeisPoint::h1(x, y + s, t - 2.0 * x * s),
        FrameDir::T => HeisPoint::h1(x, y, t + s),
        FrameDir::Xi => unreachable!("Ξ is not left-invariant"),
    }
}

/// Derivative operators reachable by finite differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stencil {
    First(FrameDir),
    Second(FrameDir, FrameDir),
}

fn step_for(dir: FrameDir, second_order: bool, scale: f64, h: f64) -> f64 {
    let hs = h * scale;
    match dir {
        FrameDir::T if second_order => hs * scale,
        FrameDir::T => hs * hs,
        _ => hs,
    }
}

fn central(f: &ScalarField, p: &HeisPoint, st: Stencil, steps: (f64, f64)) -> Result<f64> {
    match st {
        Stencil::First(d) => {
            let h = steps.0;
            Ok((f.eval(&flow(p, d, h))? - f.eval(&flow(p, d, -h))?) / (2.0 * h))
        }
        Stencil::Second(a, b) if a == b => {
            let h = steps.0;
            let c = f.eval(p)?;
            Ok((f.eval(&flow(p, a, h))? - 2.0 * c + f.eval(&flow(p, a, -h))?) / (h * h))
        }
        Stencil::Second(a, b) => {
            let (ha, hb) = steps;
            let g = |sa: f64, sb: f64| f.eval(&flow(&flow(p, a, sa), b, sb));
            Ok((g(ha, hb)? - g(ha, -hb)? - g(-ha, hb)? + g(-ha, -hb)?) / (4.0 * ha * hb))
        }
    }
}

fn fd(f: &ScalarField, p: &HeisPoint, st: Stencil, cfg: &FdConfig) -> Result<f64> {
    let scale = koranyi_norm(p).max(1.0);
    let second = matches!(st, Stencil::Second(..));
    let (da, db) = match st {
        Stencil::First(d) => (d, d),
        Stencil::Second(a, b) => (a, b),
    };
    let base = (
        step_for(da, second, scale, cfg.h),
        step_for(db, second, scale, cfg.h),
    );
    let depth = cfg.depth as usize;
    let coord_scale = p.xyt().iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let finest = base.0.min(base.1) / (1u64 << (depth - 1)) as f64;
    if finest < 64.0 * f64::EPSILON * coord_scale {
        return Err(HeisError::StepUnderflow { step: finest });
    }
    let mut table: Vec<f64> = Vec::with_capacity(depth);
    for level in 0..depth {
        let div = (1u64 << level) as f64;
        let mut cur = central(f, p, st, (base.0 / div, base.1 / div))?;
        // central stencils have error expansions in even powers of the step
        let mut factor = 4.0;
        for prev in table.iter_mut() {
            let next = (factor * cur - *prev) / (factor - 1.0);
            *prev = cur;
            cur = next;
            factor *= 4.0;
        }
        table.push(cur);
    }
    Ok(*table.last().expect("depth >= 1"))
}

/// Frame jet by finite differences only.
pub fn fd_frame_jet(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<FrameJet> {
    use FrameDir::{T, X, Y};
    let d = |st| fd(f, p, st, cfg);
    Ok(FrameJet {
        value: f.eval(p)?,
        x: d(Stencil::First(X))?,
        y: d(Stencil::First(Y))?,
        t: d(Stencil::First(T))?,
        xx: d(Stencil::Second(X, X))?,
        yy: d(Stencil::Second(Y, Y))?,
        xy: d(Stencil::Second(X, Y))?,
        yx: d(Stencil::Second(Y, X))?,
        tt: d(Stencil::Second(T, T))?,
        xt: d(Stencil::Second(X, T))?,
        yt: d(Stencil::Second(Y, T))?,
    })
}

/// Analytic jet when the field has one, finite differences otherwise.
pub fn frame_jet(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<FrameJet> {
    match f.jet2(p) {
        Some(j) => j,
        None => fd_frame_jet(f, p, cfg),
    }
}

/// `(Xf, Yf, Tf)`, analytic when available.
pub fn frame_gradient(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<[f64; 3]> {
    match f.jet1(p) {
        Some(j) => j,
        None => {
            use FrameDir::{T, X, Y};
            Ok([
                fd(f, p, Stencil::First(X), cfg)?,
                fd(f, p, Stencil::First(Y), cfg)?,
                fd(f, p, Stencil::First(T), cfg)?,
            ])
        }
    }
}

pub fn frame_apply(which: FrameDir, f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<f64> {
    if let Some(j) = f.jet1(p) {
        let [dx, dy, dt] = j?;
        return Ok(match which {
            FrameDir::X => dx,
            FrameDir::Y => dy,
            FrameDir::T => dt,
            FrameDir::Xi => p.x() * dx + p.y() * dy + 2.0 * p.t() * dt,
        });
    }
    match which {
        FrameDir::Xi => {
            let [dx, dy, dt] = frame_gradient(f, p, cfg)?;
            Ok(p.x() * dx + p.y() * dy + 2.0 * p.t() * dt)
        }
        d => fd(f, p, Stencil::First(d), cfg),
    }
}

pub fn hgrad(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<HVector> {
    let [dx, dy, _] = frame_gradient(f, p, cfg)?;
    Ok(HVector {
        base: p.clone(),
        a: dx / 4.0,
        b: dy / 4.0,
    })
}

/// `|∇^H f|² = ¼((Xf)² + (Yf)²)`.
pub fn hgrad_norm_sq(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<f64> {
    let [dx, dy, _] = frame_gradient(f, p, cfg)?;
    Ok(0.25 * (dx * dx + dy * dy))
}

/// `Δ_b f = ¼(X²f + Y²f)`.
pub fn sublaplacian(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<f64> {
    if let Some(j) = f.jet2(p) {
        let j = j?;
        return Ok(0.25 * (j.xx + j.yy));
    }
    use FrameDir::{X, Y};
    Ok(0.25 * (fd(f, p, Stencil::Second(X, X), cfg)? + fd(f, p, Stencil::Second(Y, Y), cfg)?))
}

pub fn xi_apply(f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<f64> {
    frame_apply(FrameDir::Xi, f, p, cfg)
}

/// Evaluation-only field `p ↦ (W f)(p)`, so that derivatives can be nested.
pub fn derivative_field(f: &ScalarField, which: FrameDir, cfg: FdConfig) -> ScalarField {
    let inner = f.clone();
    let label = format!("{which:?}({})", f.label());
    ScalarField::from_fn(label, move |p| frame_apply(which, &inner, p, &cfg))
}

/// `[W, Ξ]f = W(Ξf) − Ξ(Wf)` with both terms taken by nested differences.
pub fn commutator_with_xi(which: FrameDir, f: &ScalarField, p: &HeisPoint, cfg: &FdConfig) -> Result<f64> {
    let xi_f = derivative_field(f, FrameDir::Xi, *cfg);
    let w_f = derivative_field(f, which, *cfg);
    Ok(frame_apply(which, &xi_f, p, cfg)? - xi_apply(&w_f, p, cfg)?)
}

/// Divergence of a vector field given by coordinate components.
///
/// `dV = 4 dx dy dt` has constant density, so `div V = ∂x Vˣ + ∂y Vʸ + ∂t Vᵗ`.
pub fn divergence<V>(v: V, p: &HeisPoint, cfg: &FdConfig) -> Result<f64>
where
    V: Fn(&HeisPoint) -> Result<[f64; 3]>,
{
    let [x, y, t] = p.xyt();
    let scale = koranyi_norm(p).max(1.0);
    let mut total = 0.0;
    for axis in 0..3 {
        let comp = |s: f64| -> Result<f64> {
            let mut c = [x, y, t];
            c[axis] += s;
            Ok(v(&HeisPoint::h1(c[0], c[1], c[2]))?[axis])
        };
        let h0 = cfg.h * scale;
        let mut table: Vec<f64> = Vec::new();
        for level in 0..cfg.depth as usize {
            let h = h0 / (1u64 << level) as f64;
            let mut cur = (comp(h)? - comp(-h)?) / (2.0 * h);
            let mut factor = 4.0;
            for prev in table.iter_mut() {
                let next = (factor * cur - *prev) / (factor - 1.0);
                *prev = cur;
                cur = next;
                factor *= 4.0;
            }
            table.push(cur);
        }
        total += table.last().copied().unwrap_or(0.0);
    }
    Ok(total)
}

/// `|Δ_b(f∘δ_λ∘L_{x0})(s) − λ²·(Δ_b f)(δ_λ(L_{x0}(s)))|`.
///
/// The left side is differenced from values of the composed field; the right
/// side uses whatever route `f` offers. A small residual certifies the chain rule.
pub fn covariance_check(
    f: &ScalarField,
    lambda: f64,
    x0: &HeisPoint,
    sample: &HeisPoint,
    cfg: &FdConfig,
) -> Result<f64> {
    let d = Dilation::new(lambda)?;
    let composed = f.compose_dilation(d).compose_left_translation(x0).without_jets();
    let lhs = sublaplacian(&composed, sample, cfg)?;
    let mapped = dilate(d, &left_translate(x0, sample)?);
    let rhs = lambda * lambda * sublaplacian(f, &mapped, cfg)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{coord_t, coord_x, gauge_power, ScalarField};
    use crate::jet::Jet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FdConfig {
        FdConfig::default()
    }

    fn random_points(n: usize, seed: u64, span: f64) -> Vec<HeisPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                HeisPoint::h1(
                    rng.random_range(-span..span),
                    rng.random_range(-span..span),
                    rng.random_range(-span..span),
                )
            })
            .collect()
    }

    #[test]
    fn frame_on_coordinates() {
        let p = HeisPoint::h1(0.4, -1.3, 2.0);
        for f in [coord_t(), coord_t().without_jets()] {
            assert!((frame_apply(FrameDir::T, &f, &p, &cfg()).unwrap() - 1.0).abs() < 1e-9);
            assert!((frame_apply(FrameDir::X, &f, &p, &cfg()).unwrap() - 2.0 * p.y()).abs() < 1e-9);
        }
        for f in [coord_x(), coord_x().without_jets()] {
            assert!((frame_apply(FrameDir::X, &f, &p, &cfg()).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_examples() {
        let p = HeisPoint::h1(0.4, -1.3, 2.0);
        let g = hgrad(&ScalarField::constant(3.0), &p, &cfg()).unwrap();
        assert_eq!((g.a, g.b), (0.0, 0.0));
        let g = hgrad(&coord_x(), &p, &cfg()).unwrap();
        assert_eq!((g.a, g.b), (0.25, 0.0));
        assert_eq!(hgrad_norm_sq(&coord_x(), &p, &cfg()).unwrap(), 0.25);
        assert_eq!(hgrad_norm_sq(&ScalarField::constant(1.0), &p, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn gradient_is_metric_dual_of_frame_derivative() {
        let f = gauge_power(2.0, 0.0);
        for p in random_points(50, 3, 2.0) {
            let g = hgrad(&f, &p, &cfg()).unwrap().frame();
            let x = FrameVector { a: 1.0, b: 0.0, c: 0.0 };
            let y = FrameVector { a: 0.0, b: 1.0, c: 0.0 };
            let fx = frame_apply(FrameDir::X, &f, &p, &cfg()).unwrap();
            let fy = frame_apply(FrameDir::Y, &f, &p, &cfg()).unwrap();
            assert!((webster_inner(&g, &x) - fx).abs() < 1e-12 * (1.0 + fx.abs()));
            assert!((webster_inner(&g, &y) - fy).abs() < 1e-12 * (1.0 + fy.abs()));
        }
    }

    #[test]
    fn sublaplacian_examples() {
        let p = HeisPoint::h1(0.3, 0.8, -0.6);
        let affine = ScalarField::analytic("affine", |x, y, t| x * 2.0 - y + t * 0.5 + 1.0);
        assert!(sublaplacian(&affine, &p, &cfg()).unwrap().abs() < 1e-14);
        assert!(sublaplacian(&affine.without_jets(), &p, &cfg()).unwrap().abs() < 1e-7);
        let x2 = ScalarField::analytic("x^2", |x, _, _| x * x);
        assert!((sublaplacian(&x2, &p, &cfg()).unwrap() - 0.5).abs() < 1e-14);
        assert!((sublaplacian(&x2.without_jets(), &p, &cfg()).unwrap() - 0.5).abs() < 1e-7);
        let fs = gauge_power(-2.0, 1e-6).scale(std::f64::consts::FRAC_1_PI);
        assert!(sublaplacian(&fs, &HeisPoint::h1(1.0, 0.0, 0.0), &cfg()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn euler_identity_for_gauge_powers() {
        for alpha in [1.0, -2.0, 2.0] {
            let f = gauge_power(alpha, 1e-6);
            for p in random_points(40, 11, 2.0) {
                let v = f.eval(&p).unwrap();
                let xi = xi_apply(&f, &p, &cfg()).unwrap();
                assert!((xi - alpha * v).abs() < 1e-10 * (1.0 + v.abs()), "alpha {alpha}");
                let xi_fd = xi_apply(&f.without_jets(), &p, &cfg()).unwrap();
                assert!((xi_fd - alpha * v).abs() < 1e-7 * (1.0 + v.abs()), "alpha {alpha} fd");
            }
        }
        assert_eq!(xi_apply(&ScalarField::constant(2.0), &HeisPoint::h1(1.0, 1.0, 1.0), &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn gradient_norm_of_fundamental_solution_is_homogeneous() {
        let f = gauge_power(-2.0, 1e-6).scale(std::f64::consts::FRAC_1_PI);
        let g = {
            let f = f.clone();
            ScalarField::from_fn("|∇^H f|²", move |p| hgrad_norm_sq(&f, p, &FdConfig::default()))
        };
        for p in random_points(20, 5, 1.5) {
            let v = g.eval(&p).unwrap();
            let xi = xi_apply(&g, &p, &cfg()).unwrap();
            assert!((xi + 6.0 * v).abs() < 1e-6 * v.abs().max(1.0), "{xi} vs {}", -6.0 * v);
        }
    }

    #[test]
    fn commutators_with_xi() {
        let battery = [
            ScalarField::analytic("exp", |x, y, t| (x * 0.3 - y * 0.2 + t * 0.1).exp()),
            ScalarField::analytic("poly", |x, y, t| x * x * y + t * t - x * t),
            ScalarField::analytic("trig", |x, y, t| (x + t * 0.5).sin() * y.cos()),
        ];
        for f in &battery {
            for p in random_points(10, 17, 1.0) {
                for w in [FrameDir::X, FrameDir::Y] {
                    let c = commutator_with_xi(w, f, &p, &cfg()).unwrap();
                    let d = frame_apply(w, f, &p, &cfg()).unwrap();
                    assert!((c - d).abs() < 1e-6, "{} {w:?}: {c} vs {d}", f.label());
                }
            }
        }
    }

    #[test]
    fn divergence_of_xi_is_four() {
        for p in random_points(50, 23, 3.0) {
            let d = divergence(|q| Ok(xi_vector(q).to_coords(q)), &p, &cfg()).unwrap();
            assert!((d - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_jets_agree_with_differences() {
        let battery = [
            gauge_power(-2.0, 1e-6),
            gauge_power(1.0, 1e-6),
            ScalarField::analytic("bubble", |x, y, t| {
                let r = x * x + y * y + 1.0;
                (t * t + r * r).powf(-0.5)
            }),
            ScalarField::analytic("mix", |x, y, t| (x * y - t).cos() * (1.0 + x * x).ln()),
        ];
        for f in &battery {
            for p in random_points(25, 29, 1.5) {
                let a = f.jet2(&p).unwrap().unwrap().as_array();
                let b = fd_frame_jet(&f.without_jets(), &p, &cfg()).unwrap().as_array();
                for (k, (u, v)) in a.iter().zip(b.iter()).enumerate() {
                    assert!((u - v).abs() <= 1e-6 * (1.0 + u.abs()), "{} entry {k}: {u} vs {v}", f.label());
                }
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let x2 = ScalarField::analytic("x^2", |x, _, _| x * x);
        let s = HeisPoint::h1(0.2, 0.1, 0.3);
        let id = HeisPoint::identity(1);
        assert!(covariance_check(&x2, 1.0, &id, &s, &cfg()).unwrap() < 1e-7);
        let composed = x2.compose_dilation(Dilation::new(2.0).unwrap());
        assert!((sublaplacian(&composed, &s, &cfg()).unwrap() - 2.0).abs() < 1e-12);
        let bubble = ScalarField::analytic("bubble", |x, y, t| {
            let r = x * x + y * y + 1.0;
            (t * t + r * r).powf(-0.5)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let lambda = rng.random_range(0.5..2.0);
            let x0 = HeisPoint::h1(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = HeisPoint::h1(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            assert!(covariance_check(&bubble, lambda, &x0, &s, &cfg()).unwrap() < 1e-6);
        }
    }

    #[test]
    fn left_invariance_of_sublaplacian() {
        let f = ScalarField::analytic("g", |x, y, t| (x * 0.5 + y * y * 0.3 - t * 0.2).exp());
        for (a, p) in random_points(10, 41, 1.0).iter().zip(random_points(10, 43, 1.0)) {
            let g = f.compose_left_translation(a).without_jets();
            let lhs = sublaplacian(&g, &p, &cfg()).unwrap();
            let rhs = sublaplacian(&f, &left_translate(a, &p).unwrap(), &cfg()).unwrap();
            assert!((lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn config_validation_and_underflow() {
        assert!(FdConfig::new(0.0, 2).is_err());
        assert!(FdConfig::new(1e-3, 0).is_err());
        assert!(FdConfig::new(1e-3, 5).is_err());
        let tiny = FdConfig::new(1e-20, 4).unwrap();
        let f = coord_x().without_jets();
        let r = frame_apply(FrameDir::X, &f, &HeisPoint::h1(1.0, 1.0, 1.0), &tiny);
        assert!(matches!(r, Err(HeisError::StepUnderflow { .. })));
    }

    #[test]
    fn exclusion_propagates_as_error() {
        let f = gauge_power(-2.0, 0.1).without_jets();
        let r = sublaplacian(&f, &HeisPoint::h1(0.01, 0.0, 0.0), &cfg());
        assert!(matches!(r, Err(HeisError::InsideExclusion { .. })));
        let _ = Jet::constant(0.0);
    }
}
