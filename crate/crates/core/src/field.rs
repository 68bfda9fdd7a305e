//! Scalar fields on H^1 with optional analytic frame jets.

use std::fmt;
use std::sync::Arc;

use crate::error::{HeisError, Result};
use crate::group::{dilate, group_inv, group_mul, koranyi_dist, left_translate, Dilation, HeisPoint};
use crate::jet::{FrameJet, Jet};

type EvalFn = dyn Fn(&HeisPoint) -> Result<f64> + Send + Sync;
type JetFn = dyn Fn(&HeisPoint) -> Result<FrameJet> + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// A gauge ball around an isolated singularity where the field refuses to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub center: HeisPoint,
    pub radius: f64,
}

#[derive(Clone)]
pub struct ScalarField {
    label: Arc<str>,
    eval: Arc<EvalFn>,
    jet: Option<Arc<JetFn>>,
    exclusion: Option<Exclusion>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("provenance", &self.provenance())
            .field("exclusion", &self.exclusion)
            .finish()
    }
}

impl ScalarField {
    /// Evaluation-only field; derivatives come from finite differences.
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&HeisPoint) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            label: Arc::from(label.into()),
            eval: Arc::new(f),
            jet: None,
            exclusion: None,
        }
    }

    /// Field given by a formula in `(x, y, t)`, differentiated exactly through [`Jet`].
    pub fn analytic<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(Jet, Jet, Jet) -> Jet + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        let fe = Arc::clone(&f);
        let eval = move |p: &HeisPoint| {
            let [x, y, t] = p.xyt();
            let v = fe(Jet::constant(x), Jet::constant(y), Jet::constant(t)).v;
            finite(v)
        };
        let jet = move |p: &HeisPoint| {
            let c = p.xyt();
            let [x, y, t] = Jet::seed(c);
            let j = f(x, y, t);
            let fj = FrameJet::from_cartesian(&j, c[0], c[1]);
            if fj.as_array().iter().all(|v| v.is_finite()) {
                Ok(fj)
            } else {
                Err(HeisError::Evaluation("non-finite jet".into()))
            }
        };
        Self {
            label: Arc::from(label.into()),
            eval: Arc::new(eval),
            jet: Some(Arc::new(jet)),
            exclusion: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(format!("const({c})"), move |_, _, _| Jet::constant(c))
    }

    pub fn with_exclusion(mut self, center: HeisPoint, radius: f64) -> Self {
        self.exclusion = Some(Exclusion { center, radius });
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Arc::from(label.into());
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn exclusion(&self) -> Option<&Exclusion> {
        self.exclusion.as_ref()
    }

    pub fn provenance(&self) -> Provenance {
        if self.jet.is_some() {
            Provenance::Analytic
        } else {
            Provenance::FiniteDifference
        }
    }

    pub fn has_jets(&self) -> bool {
        self.jet.is_some()
    }

    fn guard(&self, p: &HeisPoint) -> Result<()> {
        if let Some(ex) = &self.exclusion {
            let d = koranyi_dist(&ex.center, p)?;
            if d < ex.radius {
                return Err(HeisError::InsideExclusion {
                    field: self.label.to_string(),
                    distance: d,
                    radius: ex.radius,
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: &HeisPoint) -> Result<f64> {
        self.guard(p)?;
        (self.eval)(p)
    }

    /// First-order analytic jet `(Xf, Yf, Tf)`, if the field carries one.
    pub fn jet1(&self, p: &HeisPoint) -> Option<Result<[f64; 3]>> {
        self.jet2(p).map(|r| r.map(|j| [j.x, j.y, j.t]))
    }

    /// Full analytic frame jet, if the field carries one.
    pub fn jet2(&self, p: &HeisPoint) -> Option<Result<FrameJet>> {
        let jet = self.jet.as_ref()?;
        Some(self.guard(p).and_then(|_| jet(p)))
    }

    /// Same values, analytic jets dropped.
    pub fn without_jets(&self) -> Self {
        Self {
            jet: None,
            ..self.clone()
        }
    }

    /// `f∘δ_λ`.
    pub fn compose_dilation(&self, d: Dilation) -> Self {
        let lambda = d.lambda();
        let inner = self.clone();
        let eval = {
            let inner = inner.clone();
            move |p: &HeisPoint| inner.eval(&dilate(d, p))
        };
        let jet = inner.jet.clone().map(|_| {
            let inner = inner.clone();
            Arc::new(move |p: &HeisPoint| {
                let q = dilate(d, p);
                let j = inner.jet2(&q).expect("jet present")?;
                Ok(j.dilated(lambda))
            }) as Arc<JetFn>
        });
        let exclusion = self.exclusion.as_ref().map(|ex| Exclusion {
            center: dilate(d.inverse(), &ex.center),
            radius: ex.radius / lambda,
        });
        Self {
            label: Arc::from(format!("{}∘δ[{lambda}]", self.label)),
            eval: Arc::new(eval),
            jet,
            exclusion,
        }
    }

    /// `f∘L_{x0}`, i.e. `p ↦ f(x0⁻¹·p)`. Frame jets are unchanged by left invariance.
    pub fn compose_left_translation(&self, x0: &HeisPoint) -> Self {
        let inner = self.clone();
        let x0c = x0.clone();
        let eval = {
            let inner = inner.clone();
            let x0 = x0c.clone();
            move |p: &HeisPoint| inner.eval(&left_translate(&x0, p)?)
        };
        let jet = inner.jet.clone().map(|_| {
            let inner = inner.clone();
            let x0 = x0c.clone();
            Arc::new(move |p: &HeisPoint| inner.jet2(&left_translate(&x0, p)?).expect("jet present"))
                as Arc<JetFn>
        });
        let exclusion = self.exclusion.as_ref().map(|ex| Exclusion {
            center: group_mul(x0, &ex.center).expect("same dimension"),
            radius: ex.radius,
        });
        Self {
            label: Arc::from(format!("{}∘L[{:?}]", self.label, x0)),
            eval: Arc::new(eval),
            jet,
            exclusion,
        }
    }

    /// `p ↦ f(x0·p)`: the field seen from coordinates centred at `x0`.
    pub fn recentred(&self, x0: &HeisPoint) -> Self {
        self.compose_left_translation(&group_inv(x0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let inner = self.clone();
        let eval = {
            let inner = inner.clone();
            move |p: &HeisPoint| Ok(c * inner.eval(p)?)
        };
        let jet = inner.jet.clone().map(|_| {
            let inner = inner.clone();
            Arc::new(move |p: &HeisPoint| Ok(inner.jet2(p).expect("jet present")?.scaled(c)))
                as Arc<JetFn>
        });
        Self {
            label: Arc::from(format!("{c}·{}", self.label)),
            eval: Arc::new(eval),
            jet,
            exclusion: self.exclusion.clone(),
        }
    }

    /// Pointwise sum. Jets survive only if both summands carry them.
    pub fn add(&self, other: &ScalarField) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let eval = {
            let (a, b) = (a.clone(), b.clone());
            move |p: &HeisPoint| Ok(a.eval(p)? + b.eval(p)?)
        };
        let jet = if a.has_jets() && b.has_jets() {
            Some(Arc::new(move |p: &HeisPoint| {
                let ja = a.jet2(p).expect("jet present")?;
                let jb = b.jet2(p).expect("jet present")?;
                Ok(ja.plus(&jb))
            }) as Arc<JetFn>)
        } else {
            None
        };
        let exclusion = match (&self.exclusion, &other.exclusion) {
            (Some(e), None) | (None, Some(e)) => Some(e.clone()),
            (Some(e1), Some(e2)) if e1.center == e2.center => Some(Exclusion {
                center: e1.center.clone(),
                radius: e1.radius.max(e2.radius),
            }),
            // distinct singularities: each summand still guards its own
            _ => None,
        };
        Self {
            label: Arc::from(format!("({} + {})", self.label, other.label)),
            eval: Arc::new(eval),
            jet,
            exclusion,
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.add(&ScalarField::constant(c))
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HeisError::Evaluation(format!("non-finite value {v}")))
    }
}

/// Squared gauge norm `|x|² = (|z|⁴ + t²)^{1/2}` as a jet expression.
pub fn gauge_sq(x: Jet, y: Jet, t: Jet) -> Jet {
    let r2 = x * x + y * y;
    (r2 * r2 + t * t).sqrt()
}

/// `|x|^α`; singular at the origin for `α < 2`, so evaluation inside `exclusion` errors.
pub fn gauge_power(alpha: f64, exclusion: f64) -> ScalarField {
    ScalarField::analytic(format!("|x|^{alpha}"), move |x, y, t| {
        let r2 = x * x + y * y;
        (r2 * r2 + t * t).powf(alpha / 4.0)
    })
    .with_exclusion(HeisPoint::identity(1), exclusion)
}

/// The coordinate function `x`.
pub fn coord_x() -> ScalarField {
    ScalarField::analytic("x", |x, _, _| x)
}

pub fn coord_y() -> ScalarField {
    ScalarField::analytic("y", |_, y, _| y)
}

pub fn coord_t() -> ScalarField {
    ScalarField::analytic("t", |_, _, t| t)
}
