//! Rescalings `λ^{2/(p−1)}·u∘δ_λ∘L_{x0}` and the radial diagnostics
//! `ū(r) = ∫_{∂B_1} u∘δ_r dσ`, `w̄(r) = r^{2/(p−1)}·ū(r)`.

use std::io::Write;

use serde::Serialize;

use crate::error::{HeisError, Result};
use crate::field::ScalarField;
use crate::group::{Dilation, HeisPoint};
use crate::quadrature::{sphere_rule, QuadratureRule};

#[derive(Clone, Debug, PartialEq)]
pub struct RescaleParams {
    p: f64,
    lambda: f64,
    center: HeisPoint,
}

impl RescaleParams {
    pub fn new(p: f64, lambda: f64, center: HeisPoint) -> Result<Self> {
        if !(p > 1.0 && p <= 3.0) {
            return Err(HeisError::InvalidParameter(format!("exponent must lie in (1, 3], got {p}")));
        }
        Dilation::new(lambda)?;
        Ok(Self { p, lambda, center })
    }

    /// Pure dilation about the origin.
    pub fn dilation(p: f64, lambda: f64) -> Result<Self> {
        Self::new(p, lambda, HeisPoint::identity(1))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn center(&self) -> &HeisPoint {
        &self.center
    }

    /// `τ = 3 − p`, the distance from the critical exponent.
    pub fn tau(&self) -> f64 {
        3.0 - self.p
    }

    /// `2/(p−1)`, the weight carried by `u` under rescaling.
    pub fn weight(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }
}

/// `λ^{2/(p−1)}·u∘δ_λ∘L_{x0}`; jets follow by the chain rule.
pub fn rescale(u: &ScalarField, params: &RescaleParams) -> ScalarField {
    let d = Dilation::new(params.lambda).expect("validated");
    u.compose_dilation(d)
        .compose_left_translation(&params.center)
        .scale(params.lambda.powf(params.weight()))
}

/// `∫_{∂B_1} (u∘δ_r) dσ`, not normalized by the area.
pub fn spherical_average(u: &ScalarField, r: f64, rule: &QuadratureRule) -> Result<f64> {
    let ur = u.compose_dilation(Dilation::new(r)?);
    rule.integrate(&ur)
}

/// `n` log-spaced radii from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b > a && n >= 2) {
        return Err(HeisError::InvalidParameter(format!("bad log grid ({a}, {b}, {n})")));
    }
    let (la, lb) = (a.ln(), b.ln());
    Ok((0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialProfile {
    pub p: f64,
    pub r: Vec<f64>,
    pub ubar: Vec<f64>,
    pub wbar: Vec<f64>,
}

/// Samples `ū` and `w̄` on `r_grid` using a unit-sphere rule with the given node counts.
pub fn wbar_profile(u: &ScalarField, p: f64, r_grid: &[f64], n_theta: usize, n_phi: usize) -> Result<RadialProfile> {
    if r_grid.windows(2).any(|w| w[1] <= w[0]) || r_grid.first().is_some_and(|&r| r <= 0.0) {
        return Err(HeisError::InvalidParameter("radial grid must be positive and strictly increasing".into()));
    }
    let rule = sphere_rule(1.0, n_theta, n_phi)?;
    let weight = 2.0 / (p - 1.0);
    let mut ubar = Vec::with_capacity(r_grid.len());
    let mut wbar = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let v = spherical_average(u, r, &rule)?;
        ubar.push(v);
        wbar.push(r.powf(weight) * v);
    }
    Ok(RadialProfile {
        p,
        r: r_grid.to_vec(),
        ubar,
        wbar,
    })
}

pub const PLATEAU_TOL: f64 = 1e-12;

impl RadialProfile {
    /// Abscissae where the discrete derivative of `w̄` changes sign.
    ///
    /// Differences below `1e−12·|w̄|` count as flat. A flat run between opposite
    /// slopes reports its (geometric) midpoint; between equal slopes it reports
    /// nothing. A profile that is flat everywhere reports its midpoint.
    pub fn critical_points(&self) -> Result<Vec<f64>> {
        let n = self.r.len();
        if n < 3 {
            return Err(HeisError::TooFewPoints { needed: 3, found: n });
        }
        let (r, w) = (&self.r, &self.wbar);
        let slopes: Vec<f64> = (0..n - 1).map(|i| (w[i + 1] - w[i]) / (r[i + 1] - r[i])).collect();
        let mids: Vec<f64> = (0..n - 1).map(|i| 0.5 * (r[i] + r[i + 1])).collect();
        let signs: Vec<i8> = (0..n - 1)
            .map(|i| {
                let d = w[i + 1] - w[i];
                if d.abs() < PLATEAU_TOL * w[i].abs().max(w[i + 1].abs()) {
                    0
                } else if d > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        if signs.iter().all(|&s| s == 0) {
            return Ok(vec![(r[0] * r[n - 1]).sqrt()]);
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < signs.len() {
            if signs[i] == 0 {
                let start = i;
                while i < signs.len() && signs[i] == 0 {
                    i += 1;
                }
                let end = i; // first nonzero after the run, or len
                if start > 0 && end < signs.len() && signs[start - 1] != signs[end] {
                    out.push((r[start] * r[end]).sqrt());
                }
                continue;
            }
            if i + 1 < signs.len() && signs[i + 1] != 0 && signs[i + 1] != signs[i] {
                let (s0, s1) = (slopes[i], slopes[i + 1]);
                let frac = s0 / (s0 - s1);
                out.push(mids[i] + frac * (mids[i + 1] - mids[i]));
            }
            i += 1;
        }
        Ok(out)
    }

    /// Grid radius of the largest `w̄`.
    pub fn argmax(&self) -> f64 {
        let k = self
            .wbar
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        self.r[k]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "ubar", "wbar"])?;
        for k in 0..self.r.len() {
            w.write_record([self.r[k], self.ubar[k], self.wbar[k]].map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn critical_points(profile: &RadialProfile) -> Result<Vec<f64>> {
    profile.critical_points()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gauge_power;
    use crate::identities::Bubble;
    use crate::group::left_translate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rule() -> QuadratureRule {
        sphere_rule(1.0, 32, 64).unwrap()
    }

    #[test]
    fn params_validation_and_tau() {
        assert!(RescaleParams::dilation(1.0, 1.0).is_err());
        assert!(RescaleParams::dilation(3.5, 1.0).is_err());
        assert!(RescaleParams::dilation(2.0, 0.0).is_err());
        let p = RescaleParams::dilation(2.5, 2.0).unwrap();
        assert_eq!(p.tau(), 0.5);
        assert_eq!(p.weight(), 2.0 / 1.5);
    }

    #[test]
    fn identity_rescale() {
        let u = Bubble::standard(1.0).field();
        let v = rescale(&u, &RescaleParams::dilation(3.0, 1.0).unwrap());
        for p in [HeisPoint::h1(0.3, 0.1, -0.2), HeisPoint::h1(2.0, 1.0, 4.0)] {
            assert_eq!(u.eval(&p).unwrap(), v.eval(&p).unwrap());
        }
    }

    #[test]
    fn rescaled_bubble_is_bubble() {
        let u = Bubble::standard(1.0).field();
        let x0 = HeisPoint::h1(0.2, -0.4, 0.6);
        let v = rescale(&u, &RescaleParams::new(3.0, 4.0, x0.clone()).unwrap());
        let w = Bubble::new(1.0, 4.0, x0).unwrap().field();
        for p in [HeisPoint::h1(0.3, 0.1, -0.2), HeisPoint::h1(2.0, 1.0, 4.0)] {
            assert_eq!(v.eval(&p).unwrap(), w.eval(&p).unwrap());
            // closed form: 4·U(δ_4(x0⁻¹p))
            let q = crate::group::dilate(Dilation::new(4.0).unwrap(), &left_translate(&HeisPoint::h1(0.2, -0.4, 0.6), &p).unwrap());
            let [x, y, t] = q.xyt();
            let closed = 4.0 / (t * t + (1.0 + x * x + y * y).powi(2)).sqrt();
            assert!((v.eval(&p).unwrap() - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn rescaling_preserves_the_equation() {
        let u = Bubble::standard(1.0).field();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let params = RescaleParams::new(
                3.0,
                rng.random_range(0.2..5.0),
                HeisPoint::h1(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
            .unwrap();
            let v = rescale(&u, &params);
            for _ in 0..20 {
                let p = HeisPoint::h1(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let j = v.jet2(&p).unwrap().unwrap();
                let res = (-0.25 * (j.xx + j.yy) - j.value.powi(3)).abs();
                assert!(res < 1e-6 * j.value.powi(3).max(1e-300) || res < 1e-10, "{res}");
            }
        }
    }

    #[test]
    fn semigroup() {
        let u = ScalarField::analytic("g", |x, y, t| (x * 0.3 + y * y - t * 0.2).exp());
        for p in [2.0, 2.5, 3.0] {
            let a = rescale(&rescale(&u, &RescaleParams::dilation(p, 1.7).unwrap()), &RescaleParams::dilation(p, 0.6).unwrap());
            let b = rescale(&u, &RescaleParams::dilation(p, 1.7 * 0.6).unwrap());
            for q in [HeisPoint::h1(0.3, 0.1, -0.2), HeisPoint::h1(1.0, -1.0, 2.0)] {
                let (va, vb) = (a.eval(&q).unwrap(), b.eval(&q).unwrap());
                assert!((va - vb).abs() <= 1e-12 * vb.abs());
            }
        }
    }

    #[test]
    fn averages_of_simple_fields() {
        let rule = rule();
        let area = rule.total_weight();
        let one = ScalarField::constant(1.0);
        assert!((spherical_average(&one, 3.0, &rule).unwrap() - area).abs() < 1e-12 * area);
        let g2 = gauge_power(2.0, 0.0);
        let u1 = spherical_average(&g2, 1.0, &rule).unwrap();
        for r in [0.5, 2.0, 7.0] {
            assert!((spherical_average(&g2, r, &rule).unwrap() - r * r * u1).abs() < 1e-12 * r * r * u1);
        }
        // linearity
        let f = ScalarField::analytic("f", |x, _, t| x * x + t);
        let lhs = spherical_average(&f.scale(2.0).add(&g2), 1.3, &rule).unwrap();
        let rhs = 2.0 * spherical_average(&f, 1.3, &rule).unwrap() + spherical_average(&g2, 1.3, &rule).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }

    #[test]
    fn bubble_average_decays_like_inverse_square() {
        let rule = rule();
        let u = Bubble::standard(1.0).field();
        let a10 = spherical_average(&u, 10.0, &rule).unwrap();
        let a20 = spherical_average(&u, 20.0, &rule).unwrap();
        assert!(a10 > 0.0);
        assert!((a10 / a20 - 4.0).abs() < 0.05, "{}", a10 / a20);
    }

    #[test]
    fn single_bubble_has_one_critical_point() {
        let grid = log_grid(1e-2, 1e2, 200).unwrap();
        let u = Bubble::standard(1.0).field();
        let prof = wbar_profile(&u, 3.0, &grid, 32, 64).unwrap();
        let cps = prof.critical_points().unwrap();
        assert_eq!(cps.len(), 1, "{cps:?}");
        let u5 = Bubble::new(1.0, 5.0, HeisPoint::identity(1)).unwrap().field();
        let cps5 = wbar_profile(&u5, 3.0, &grid, 32, 64).unwrap().critical_points().unwrap();
        assert_eq!(cps5.len(), 1);
        let ratio = cps[0] / cps5[0];
        assert!((ratio / 5.0 - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn homogeneous_profiles() {
        let grid = log_grid(0.1, 10.0, 30).unwrap();
        let one = wbar_profile(&ScalarField::constant(1.0), 2.0, &grid, 16, 32).unwrap();
        assert!(one.wbar.windows(2).all(|w| w[1] > w[0]));
        assert!(one.critical_points().unwrap().is_empty());
        let p = 2.0;
        let u = gauge_power(-2.0 / (p - 1.0), 1e-6);
        let h = wbar_profile(&u, p, &grid, 16, 32).unwrap();
        let w0 = h.wbar[0];
        assert!(h.wbar.iter().all(|w| (w - w0).abs() < 1e-10 * w0));
        assert_eq!(h.critical_points().unwrap().len(), 1);
    }

    #[test]
    fn critical_point_rules() {
        let prof = |w: Vec<f64>| RadialProfile {
            p: 3.0,
            r: (1..=w.len()).map(|k| k as f64).collect(),
            ubar: w.clone(),
            wbar: w,
        };
        assert!(prof(vec![1.0, 2.0, 3.0, 4.0]).critical_points().unwrap().is_empty());
        assert_eq!(prof(vec![1.0, 3.0, 3.0, 1.0]).critical_points().unwrap(), vec![(2.0f64 * 3.0).sqrt()]);
        assert!(prof(vec![1.0, 2.0, 2.0, 3.0]).critical_points().unwrap().is_empty());
        let peak = prof(vec![0.0, 2.0, 2.0, 0.0]).critical_points().unwrap();
        assert_eq!(peak.len(), 1);
        let tri = prof(vec![0.0, 1.0, 0.0]).critical_points().unwrap();
        assert_eq!(tri, vec![2.0]);
        assert!(prof(vec![1.0, 2.0]).critical_points().is_err());
    }

    #[test]
    fn profile_csv() {
        let grid = log_grid(0.5, 2.0, 3).unwrap();
        let prof = wbar_profile(&ScalarField::constant(1.0), 3.0, &grid, 4, 4).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("r,ubar,wbar\n"));
        assert_eq!(s.lines().count(), 4);
    }
}
