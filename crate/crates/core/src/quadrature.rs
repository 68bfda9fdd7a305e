//! Quadrature on Korányi spheres and balls.
//!
//! Sphere chart: `(θ, φ) ↦ (r√(cos θ)·e^{iφ}, r² sin θ)` for `θ ∈ (−π/2, π/2)`.
//! Gauss–Legendre in `θ` (poles are never nodes), periodic trapezoid in `φ`.
//! Ball rules use the Korányi-polar map `(ρ, θ, φ) ↦ δ_ρ(ω(θ, φ))`, whose
//! coordinate Jacobian is exactly `ρ³`, so `dV = 4ρ³ dρ dθ dφ`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rayon::prelude::*;

use crate::calculus::{webster_gradient, webster_inner, webster_norm, FrameVector};
use crate::error::{HeisError, Result};
use crate::field::ScalarField;
use crate::group::HeisPoint;

pub const DEFAULT_N_THETA: usize = 64;
pub const DEFAULT_N_PHI: usize = 128;
pub const DEFAULT_N_RHO: usize = 32;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Point of the unit-sphere chart, scaled by `δ_r`.
pub fn sphere_point(r: f64, theta: f64, phi: f64) -> HeisPoint {
    let (s, c) = theta.sin_cos();
    let rho = r * c.max(0.0).sqrt();
    HeisPoint::h1(rho * phi.cos(), rho * phi.sin(), r * r * s)
}

/// Outward unit normal `∇_g N / |∇_g N|` of the gauge `N`, in frame components.
pub fn gauge_normal(p: &HeisPoint) -> Option<FrameVector> {
    let [x, y, t] = p.xyt();
    let z2 = x * x + y * y;
    // frame derivatives of N⁴; the positive factor 4N³ cancels on normalizing
    let grad = webster_gradient([4.0 * (z2 * x + y * t), 4.0 * (z2 * y - x * t), 2.0 * t]);
    let n = webster_norm(&grad);
    (n > 0.0 && n.is_finite()).then(|| grad.scaled(1.0 / n))
}

/// Webster area density of the chart, `√det Gram`, together with the tangents.
fn chart_density(r: f64, theta: f64, phi: f64) -> Result<(f64, [FrameVector; 2])> {
    let (s, c) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let p = sphere_point(r, theta, phi);
    let sq = c.sqrt();
    let d_theta = [-r * s / (2.0 * sq) * cp, -r * s / (2.0 * sq) * sp, r * r * c];
    let d_phi = [-r * sq * sp, r * sq * cp, 0.0];
    let a = FrameVector::from_coords(d_theta, &p);
    let b = FrameVector::from_coords(d_phi, &p);
    let g11 = webster_inner(&a, &a);
    let g22 = webster_inner(&b, &b);
    let g12 = webster_inner(&a, &b);
    let det = g11 * g22 - g12 * g12;
    if !(det > 0.0 && det.is_finite()) {
        return Err(HeisError::DegenerateGram { theta, phi });
    }
    Ok((det.sqrt(), [a, b]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Sphere,
    Ball,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleMeta {
    pub kind: RuleKind,
    pub radius: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_rho: usize,
    pub core: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub point: HeisPoint,
    pub weight: f64,
    pub normal: Option<FrameVector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Node>,
    pub meta: RuleMeta,
}

fn check_counts(pairs: &[(&str, usize)]) -> Result<()> {
    for (name, n) in pairs {
        if *n < 4 {
            return Err(HeisError::InvalidParameter(format!("{name} must be at least 4, got {n}")));
        }
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(HeisError::InvalidParameter(format!("radius must be positive, got {r}")))
    }
}

fn angular_nodes(n_theta: usize, n_phi: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let (gx, gw) = gauss_legendre(n_theta);
    let thetas = gx.iter().zip(&gw).map(|(x, w)| (FRAC_PI_2 * x, FRAC_PI_2 * w)).collect();
    let dphi = 2.0 * PI / n_phi as f64;
    let phis = (0..n_phi).map(|k| (k as f64 * dphi, dphi)).collect();
    (thetas, phis)
}

/// Tensor rule on `∂B_r` with Webster surface weights and outward normals.
pub fn sphere_rule(r: f64, n_theta: usize, n_phi: usize) -> Result<QuadratureRule> {
    check_radius(r)?;
    check_counts(&[("n_theta", n_theta), ("n_phi", n_phi)])?;
    let (thetas, phis) = angular_nodes(n_theta, n_phi);
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    for &(theta, wt) in &thetas {
        for &(phi, wp) in &phis {
            let (density, _) = chart_density(r, theta, phi)?;
            let point = sphere_point(r, theta, phi);
            let normal = gauge_normal(&point).ok_or(HeisError::DegenerateGram { theta, phi })?;
            nodes.push(Node {
                point,
                weight: wt * wp * density,
                normal: Some(normal),
            });
        }
    }
    Ok(QuadratureRule {
        nodes,
        meta: RuleMeta {
            kind: RuleKind::Sphere,
            radius: r,
            n_theta,
            n_phi,
            n_rho: 0,
            core: 0.0,
        },
    })
}

pub fn default_sphere_rule(r: f64) -> Result<QuadratureRule> {
    sphere_rule(r, DEFAULT_N_THETA, DEFAULT_N_PHI)
}

/// Korányi-polar rule on `B_r`; with `core > 0` the shell `ρ < core` is left out.
pub fn ball_rule_with_core(r: f64, n_rho: usize, n_theta: usize, n_phi: usize, core: f64) -> Result<QuadratureRule> {
    check_radius(r)?;
    check_counts(&[("n_rho", n_rho), ("n_theta", n_theta), ("n_phi", n_phi)])?;
    if !(0.0..r).contains(&core) {
        return Err(HeisError::InvalidParameter(format!("core radius {core} must lie in [0, {r})")));
    }
    let (thetas, phis) = angular_nodes(n_theta, n_phi);
    let (rx, rw) = gauss_legendre(n_rho);
    let half = 0.5 * (r - core);
    let mut nodes = Vec::with_capacity(n_rho * n_theta * n_phi);
    for (x, w) in rx.iter().zip(&rw) {
        let rho = core + half * (x + 1.0);
        let radial = half * w * 4.0 * rho.powi(3);
        for &(theta, wt) in &thetas {
            for &(phi, wp) in &phis {
                nodes.push(Node {
                    point: sphere_point(rho, theta, phi),
                    weight: radial * wt * wp,
                    normal: None,
                });
            }
        }
    }
    Ok(QuadratureRule {
        nodes,
        meta: RuleMeta {
            kind: RuleKind::Ball,
            radius: r,
            n_theta,
            n_phi,
            n_rho,
            core,
        },
    })
}

pub fn ball_rule(r: f64, n_rho: usize, n_theta: usize, n_phi: usize) -> Result<QuadratureRule> {
    ball_rule_with_core(r, n_rho, n_theta, n_phi, 0.0)
}

pub fn default_ball_rule(r: f64) -> Result<QuadratureRule> {
    ball_rule(r, DEFAULT_N_RHO, DEFAULT_N_THETA, DEFAULT_N_PHI)
}

/// Neumaier-compensated sum, in slice order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ wᵢ·g(nodeᵢ)`. Nodes are evaluated in parallel and summed in node
    /// order, so the result does not depend on the thread count.
    pub fn integrate_nodes<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(&Node) -> Result<f64> + Sync,
    {
        let terms: Vec<f64> = self
            .nodes
            .par_iter()
            .map(|n| g(n).map(|v| v * n.weight))
            .collect::<Result<_>>()?;
        let total = compensated_sum(&terms);
        if total.is_finite() {
            Ok(total)
        } else {
            Err(HeisError::Evaluation("non-finite quadrature sum".into()))
        }
    }

    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        self.integrate_nodes(|n| f.eval(&n.point))
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(&self.nodes.iter().map(|n| n.weight).collect::<Vec<_>>())
    }

    /// Writes `x,y,t,weight,nu_a,nu_b,nu_c` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "t", "weight", "nu_a", "nu_b", "nu_c"])?;
        for n in &self.nodes {
            let [x, y, t] = n.point.xyt();
            let nu = n.normal.unwrap_or_default();
            let row = [x, y, t, n.weight, nu.a, nu.b, nu.c].map(|v| format!("{v:.16e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn integrate_sphere(f: &ScalarField, rule: &QuadratureRule) -> Result<f64> {
    expect_kind(rule, RuleKind::Sphere)?;
    rule.integrate(f)
}

pub fn integrate_ball(f: &ScalarField, rule: &QuadratureRule) -> Result<f64> {
    expect_kind(rule, RuleKind::Ball)?;
    rule.integrate(f)
}

fn expect_kind(rule: &QuadratureRule, kind: RuleKind) -> Result<()> {
    if rule.meta.kind == kind {
        Ok(())
    } else {
        Err(HeisError::InvalidParameter(format!("expected a {kind:?} rule, got {:?}", rule.meta.kind)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{frame_apply, xi_vector, FdConfig, FrameDir};
    use crate::group::koranyi_norm;

    /// Composite Simpson, used as an oracle independent of the Gauss rules.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        for n in [4, 7, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n {n} deg {deg}");
            }
        }
    }

    #[test]
    fn chart_lies_on_sphere_and_density_matches_closed_form() {
        for r in [0.5, 1.0, 2.0] {
            let rule = sphere_rule(r, 8, 8).unwrap();
            for n in &rule.nodes {
                assert!((koranyi_norm(&n.point) - r).abs() < 1e-12 * r.max(1.0));
            }
            for theta in [-1.5, -0.3, 0.0, 0.9, 1.55] {
                let (d, _) = chart_density(r, theta, 0.7).unwrap();
                let closed = 2.0 * r * r * (theta.sin().powi(2) + r * r * theta.cos()).sqrt();
                assert!((d - closed).abs() < 1e-12 * closed);
            }
        }
    }

    #[test]
    fn normals_are_unit_and_orthogonal_to_the_sphere() {
        let rule = sphere_rule(1.3, 12, 16).unwrap();
        let (thetas, phis) = angular_nodes(12, 16);
        let mut k = 0;
        for &(theta, _) in &thetas {
            for &(phi, _) in &phis {
                let nu = rule.nodes[k].normal.unwrap();
                assert!((webster_norm(&nu) - 1.0).abs() < 1e-12);
                let (_, [a, b]) = chart_density(1.3, theta, phi).unwrap();
                assert!(webster_inner(&nu, &a).abs() < 1e-10 * webster_norm(&a));
                assert!(webster_inner(&nu, &b).abs() < 1e-10 * webster_norm(&b));
                // outward: moving along ν increases the gauge
                let p = &rule.nodes[k].point;
                let dn = frame_apply(FrameDir::X, &crate::field::gauge_power(1.0, 0.0), p, &FdConfig::default()).unwrap()
                    * nu.a
                    + frame_apply(FrameDir::Y, &crate::field::gauge_power(1.0, 0.0), p, &FdConfig::default()).unwrap() * nu.b
                    + frame_apply(FrameDir::T, &crate::field::gauge_power(1.0, 0.0), p, &FdConfig::default()).unwrap() * nu.c;
                assert!(dn > 0.0);
                k += 1;
            }
        }
    }

    #[test]
    fn area_matches_one_dimensional_oracle() {
        for r in [0.5, 1.0, 2.0] {
            let a = default_sphere_rule(r).unwrap().total_weight();
            let oracle = 4.0 * PI * r * r
                * simpson(|th| (th.sin().powi(2) + r * r * th.cos()).sqrt(), -FRAC_PI_2, FRAC_PI_2, 200_000);
            assert!((a - oracle).abs() < 1e-6 * oracle, "r {r}: {a} vs {oracle}");
        }
    }

    #[test]
    fn area_self_convergence() {
        let area = |n: usize| sphere_rule(1.0, n, 2 * n).unwrap().total_weight();
        let e1 = (area(8) - area(16)).abs();
        let e2 = (area(16) - area(32)).abs();
        assert!(e2 < e1 / 4.0, "{e1} {e2}");
    }

    #[test]
    fn unit_normal_integrates_to_area() {
        let rule = default_sphere_rule(1.0).unwrap();
        let s = rule.integrate_nodes(|n| Ok(webster_inner(&n.normal.unwrap(), &n.normal.unwrap()))).unwrap();
        assert!((s - rule.total_weight()).abs() < 1e-10 * s);
    }

    #[test]
    fn ball_volume() {
        let oracle = {
            // Cartesian: x = sin α, y = √(1−x²)·sin β removes the boundary root
            let inner = |a: f64| {
                simpson(
                    |b: f64| {
                        let (x, y) = (a.sin(), a.cos() * b.sin());
                        let r2 = x * x + y * y;
                        8.0 * a.cos() * b.cos() * (1.0 + r2).sqrt() * a.cos() * a.cos() * b.cos()
                    },
                    -FRAC_PI_2,
                    FRAC_PI_2,
                    400,
                )
            };
            simpson(inner, -FRAC_PI_2, FRAC_PI_2, 400)
        };
        let v1 = default_ball_rule(1.0).unwrap().total_weight();
        assert!((v1 - oracle).abs() < 1e-6, "{v1} vs {oracle}");
        assert!((v1 - 2.0 * PI * PI).abs() < 1e-10);
        let v2 = ball_rule(1.7, 16, 32, 64).unwrap().total_weight();
        assert!((v2 - v1 * 1.7f64.powi(4)).abs() < 1e-9 * v2);
    }

    #[test]
    fn odd_integrands_vanish() {
        let ball = ball_rule(1.0, 8, 16, 32).unwrap();
        assert!(integrate_ball(&crate::field::coord_t(), &ball).unwrap().abs() < 1e-12);
        let sphere = sphere_rule(1.0, 16, 32).unwrap();
        let odd = ScalarField::analytic("t·e^x", |x, _, t| t * x.exp());
        assert!(integrate_sphere(&odd, &sphere).unwrap().abs() < 1e-12);
        assert!(integrate_ball(&odd, &sphere).is_err());
    }

    #[test]
    fn divergence_theorem_for_xi() {
        let sphere = default_sphere_rule(1.0).unwrap();
        let flux = sphere
            .integrate_nodes(|n| Ok(webster_inner(&xi_vector(&n.point), &n.normal.unwrap())))
            .unwrap();
        let expected = 4.0 * 2.0 * PI * PI;
        assert!((flux - expected).abs() < 1e-5 * expected, "{flux}");
    }

    #[test]
    fn divergence_theorem_for_sublaplacian() {
        let f = ScalarField::analytic("f", |x, y, t| (x * 0.7 + y * y * 0.4 - t * 0.3).exp() + x * t);
        let cfg = FdConfig::default();
        let ball = default_ball_rule(1.0).unwrap();
        let lhs = ball.integrate_nodes(|n| crate::calculus::sublaplacian(&f, &n.point, &cfg)).unwrap();
        let sphere = default_sphere_rule(1.0).unwrap();
        let rhs = sphere
            .integrate_nodes(|n| {
                let nu = n.normal.unwrap();
                let j = f.jet1(&n.point).unwrap()?;
                Ok(j[0] * nu.a + j[1] * nu.b)
            })
            .unwrap();
        assert!((lhs - rhs).abs() < 1e-5 * rhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn dilation_scaling_of_ball_integrals() {
        let f = ScalarField::analytic("f", |x, y, t| (x - y * 0.5 + t * 0.2).cos() + x * x);
        let lambda = 1.6;
        let b1 = ball_rule(1.0, 16, 32, 64).unwrap();
        let bl = ball_rule(lambda, 16, 32, 64).unwrap();
        let lhs = b1.integrate(&f.compose_dilation(crate::group::Dilation::new(lambda).unwrap())).unwrap();
        let rhs = bl.integrate(&f).unwrap() / lambda.powi(4);
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let rule = sphere_rule(1.0, 4, 4).unwrap();
        let mut buf = Vec::new();
        rule.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,t,weight,nu_a,nu_b,nu_c\n"));
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sphere_rule(0.0, 8, 8).is_err());
        assert!(sphere_rule(1.0, 3, 8).is_err());
        assert!(ball_rule_with_core(1.0, 8, 8, 8, 1.0).is_err());
    }
}
