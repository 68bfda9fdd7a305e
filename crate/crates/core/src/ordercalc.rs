//! Order bookkeeping for frame changes near a point.
//!
//! A coefficient is tracked only by its class: an optional exact leading 1
//! and the order `k` of the remainder `O(|x|^k)`, where `|x|` is the
//! Heisenberg gauge. Signs and constants are dropped. Frames are indexed
//! `(Z₁, Z₁̄, T)` throughout.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{HeisError, Result};

pub const Z: usize = 0;
pub const ZBAR: usize = 1;
pub const T: usize = 2;

const INF: u32 = u32::MAX;

/// `1·[unit] + O(|x|^order)`; `(false, ∞)` is the exact zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OrderScalar {
    unit: bool,
    order: u32,
}

impl OrderScalar {
    pub const ZERO: OrderScalar = OrderScalar { unit: false, order: INF };
    pub const ONE: OrderScalar = OrderScalar { unit: true, order: INF };

    /// `(1, 0)` is folded into `(0, 0)`: a bare `O(1)` already covers the 1.
    pub fn new(unit: bool, order: Option<u32>) -> Self {
        let order = order.unwrap_or(INF);
        OrderScalar {
            unit: unit && order > 0,
            order,
        }
    }

    /// `O(|x|^k)`.
    pub fn big_o(k: u32) -> Self {
        Self::new(false, Some(k))
    }

    /// `1 + O(|x|^k)`.
    pub fn unit_plus(k: u32) -> Self {
        Self::new(true, Some(k))
    }

    pub fn unit(&self) -> bool {
        self.unit
    }

    /// `None` for an exact remainder.
    pub fn order(&self) -> Option<u32> {
        (self.order != INF).then_some(self.order)
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// Drops the unit, keeping only the remainder.
    pub fn remainder(&self) -> Self {
        OrderScalar {
            unit: false,
            order: self.order,
        }
    }

    /// Effective order: a unit counts as order 0.
    pub fn leading(&self) -> Option<u32> {
        if self.unit {
            Some(0)
        } else {
            self.order()
        }
    }
}

impl Default for OrderScalar {
    fn default() -> Self {
        Self::ZERO
    }
}

fn add_orders(a: u32, b: u32) -> u32 {
    if a == INF || b == INF {
        INF
    } else {
        a + b
    }
}

pub fn o_add(a: OrderScalar, b: OrderScalar) -> OrderScalar {
    let order = a.order.min(b.order);
    OrderScalar::new(a.unit || b.unit, (order != INF).then_some(order))
}

pub fn o_mul(a: OrderScalar, b: OrderScalar) -> OrderScalar {
    let mut order = add_orders(a.order, b.order);
    if a.unit {
        order = order.min(b.order);
    }
    if b.unit {
        order = order.min(a.order);
    }
    OrderScalar::new(a.unit && b.unit, (order != INF).then_some(order))
}

impl std::ops::Add for OrderScalar {
    type Output = OrderScalar;
    fn add(self, rhs: OrderScalar) -> OrderScalar {
        o_add(self, rhs)
    }
}

impl std::ops::Mul for OrderScalar {
    type Output = OrderScalar;
    fn mul(self, rhs: OrderScalar) -> OrderScalar {
        o_mul(self, rhs)
    }
}

impl std::iter::Sum for OrderScalar {
    fn sum<I: Iterator<Item = OrderScalar>>(iter: I) -> OrderScalar {
        iter.fold(OrderScalar::ZERO, o_add)
    }
}

impl fmt::Display for OrderScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rem = match self.order() {
            None => None,
            Some(0) => Some("O(1)".to_string()),
            Some(1) => Some("O(|x|)".to_string()),
            Some(k) => Some(format!("O(|x|^{k})")),
        };
        match (self.unit, rem) {
            (true, Some(r)) => write!(f, "1+{r}"),
            (true, None) => write!(f, "1"),
            (false, Some(r)) => write!(f, "{r}"),
            (false, None) => write!(f, "0"),
        }
    }
}

impl Serialize for OrderScalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("OrderScalar", 2)?;
        st.serialize_field("unit", &self.unit)?;
        st.serialize_field("order", &self.order())?;
        st.end()
    }
}

/// How a coefficient's order changes under a frame derivative.
///
/// With `floor = Some(f)` the result is `max(k − drop, f)`; with `None` a
/// negative result means the derivative vanishes (homogeneous reading).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DerivativeRule {
    pub z_drop: u32,
    pub t_drop: u32,
    pub floor: Option<u32>,
}

impl DerivativeRule {
    pub fn new(z_drop: u32, t_drop: u32, floor: Option<u32>) -> Result<Self> {
        if z_drop == 0 || t_drop == 0 {
            return Err(HeisError::InvalidParameter("derivative drops must be positive".into()));
        }
        Ok(DerivativeRule { z_drop, t_drop, floor })
    }

    /// Smooth coefficients: orders never go below 0.
    pub fn anisotropic() -> Self {
        DerivativeRule {
            z_drop: 1,
            t_drop: 2,
            floor: Some(0),
        }
    }

    pub fn strict() -> Self {
        DerivativeRule {
            z_drop: 1,
            t_drop: 2,
            floor: None,
        }
    }

    pub fn name(&self) -> &'static str {
        if self.floor.is_some() {
            "anisotropic"
        } else {
            "strict"
        }
    }

    /// Order class of `V c` for `V` the frame field `dir`.
    pub fn apply(&self, dir: usize, c: OrderScalar) -> OrderScalar {
        let Some(k) = c.order() else {
            return OrderScalar::ZERO;
        };
        let drop = if dir == T { self.t_drop } else { self.z_drop };
        match (k.checked_sub(drop), self.floor) {
            (Some(r), Some(f)) => OrderScalar::big_o(r.max(f)),
            (Some(r), None) => OrderScalar::big_o(r),
            (None, Some(f)) => OrderScalar::big_o(f),
            (None, None) => OrderScalar::ZERO,
        }
    }
}

impl Default for DerivativeRule {
    fn default() -> Self {
        Self::anisotropic()
    }
}

/// Row `i` expresses the `i`-th field of one frame in the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FrameExpansion(pub [[OrderScalar; 3]; 3]);

impl FrameExpansion {
    pub fn identity() -> Self {
        let mut m = [[OrderScalar::ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = OrderScalar::ONE;
        }
        FrameExpansion(m)
    }

    pub fn zero() -> Self {
        FrameExpansion([[OrderScalar::ZERO; 3]; 3])
    }

    /// Builds a matrix from an order pattern; `None` is an exact zero.
    pub fn from_orders(orders: [[Option<u32>; 3]; 3], unit_diagonal: bool) -> Self {
        let mut m = [[OrderScalar::ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = OrderScalar::new(unit_diagonal && i == j, orders[i][j]);
            }
        }
        FrameExpansion(m)
    }

    pub fn get(&self, i: usize, j: usize) -> OrderScalar {
        self.0[i][j]
    }

    pub fn row(&self, i: usize) -> [OrderScalar; 3] {
        self.0[i]
    }

    pub fn transpose(&self) -> Self {
        let mut m = self.0;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[j][i];
            }
        }
        FrameExpansion(m)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = self.0;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v + other.0[i][j];
            }
        }
        FrameExpansion(m)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut m = [[OrderScalar::ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|j| self.0[i][j] * other.0[j][k]).sum();
            }
        }
        FrameExpansion(m)
    }

    /// Adds `O(|x|^k)` to every entry.
    pub fn with_floor(&self, k: Option<u32>) -> Self {
        let f = OrderScalar::new(false, k);
        let mut m = self.0;
        m.iter_mut().flatten().for_each(|v| *v = *v + f);
        FrameExpansion(m)
    }

    /// `A` in `E = I + A`.
    pub fn perturbation(&self) -> Result<Self> {
        let mut a = self.0;
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i == j {
                    if !v.unit() {
                        return Err(HeisError::NotIdentityPlus(format!("diagonal entry ({i},{j}) is {v}")));
                    }
                    *v = v.remainder();
                } else if v.unit() {
                    return Err(HeisError::NotIdentityPlus(format!("entry ({i},{j}) is {v}")));
                }
            }
        }
        Ok(FrameExpansion(a))
    }

    /// Smallest remainder order over all entries.
    pub fn min_order(&self) -> Option<u32> {
        self.0.iter().flatten().filter_map(|v| v.order()).min()
    }

    pub fn orders(&self) -> [[Option<u32>; 3]; 3] {
        self.0.map(|row| row.map(|v| v.order()))
    }
}

/// `(I + A)⁻¹ = Σ_{j ≤ n} (−A)^j + O(‖A‖^{n+1})`, orders only, with `n = truncation`.
pub fn neumann_inverse(e: &FrameExpansion, truncation: u32) -> Result<FrameExpansion> {
    let a = e.perturbation()?;
    let mut sum = FrameExpansion::identity();
    let mut power = FrameExpansion::identity();
    for _ in 0..truncation {
        power = power.mul(&a);
        sum = sum.add(&power);
    }
    let floor = a.min_order().map(|k| k * (truncation + 1));
    Ok(sum.with_floor(floor))
}

/// `[V_i, V_j]` expanded in the same frame; entry `[i][j][k]` is the `V_k` coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commutators(pub [[[OrderScalar; 3]; 3]; 3]);

impl Commutators {
    /// No structure assumed: every bracket may have `O(1)` components.
    pub fn generic() -> Self {
        let mut c = [[[OrderScalar::big_o(0); 3]; 3]; 3];
        for (i, block) in c.iter_mut().enumerate() {
            block[i] = [OrderScalar::ZERO; 3];
        }
        Commutators(c)
    }

    /// The flat model: `[Z₁, Z₁̄]` is a constant multiple of `T`, `T` is central.
    pub fn heisenberg() -> Self {
        let mut c = [[[OrderScalar::ZERO; 3]; 3]; 3];
        c[Z][ZBAR][T] = OrderScalar::big_o(0);
        c[ZBAR][Z][T] = OrderScalar::big_o(0);
        Commutators(c)
    }
}

/// Unordered second-order monomials, each with a fixed factor order.
pub const MONOMIALS: [(usize, usize); 6] = [(Z, Z), (ZBAR, Z), (ZBAR, ZBAR), (Z, T), (ZBAR, T), (T, T)];

fn monomial_index(i: usize, j: usize) -> usize {
    MONOMIALS
        .iter()
        .position(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
        .expect("every pair has a monomial")
}

/// A second-order operator `Σ c_k V_k + Σ c_ij V_i V_j` with ordered products.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OperatorExpansion {
    pub first: [OrderScalar; 3],
    pub second: [[OrderScalar; 3]; 3],
}

impl OperatorExpansion {
    pub fn zero() -> Self {
        OperatorExpansion {
            first: [OrderScalar::ZERO; 3],
            second: [[OrderScalar::ZERO; 3]; 3],
        }
    }

    /// `V_i V_j` with a unit coefficient.
    pub fn product(i: usize, j: usize) -> Self {
        let mut e = Self::zero();
        e.second[i][j] = OrderScalar::ONE;
        e
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut e = *self;
        for k in 0..3 {
            e.first[k] = e.first[k] + other.first[k];
            for j in 0..3 {
                e.second[k][j] = e.second[k][j] + other.second[k][j];
            }
        }
        e
    }

    /// Removes the exact leading 1 of each entry, i.e. subtracts the model
    /// operator carried by the units.
    pub fn strip_units(&self) -> Self {
        OperatorExpansion {
            first: self.first.map(|c| c.remainder()),
            second: self.second.map(|row| row.map(|c| c.remainder())),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.first.iter().chain(self.second.iter().flatten()).all(|c| c.is_zero())
    }

    /// Reorders products onto [`MONOMIALS`], paying one bracket per swap.
    pub fn merged(&self, brackets: &Commutators) -> MergedExpansion {
        let mut first = self.first;
        let mut second = [OrderScalar::ZERO; 6];
        for i in 0..3 {
            for j in 0..3 {
                let c = self.second[i][j];
                let m = monomial_index(i, j);
                second[m] = second[m] + c;
                if MONOMIALS[m] != (i, j) {
                    for (k, f) in first.iter_mut().enumerate() {
                        *f = *f + c * brackets.0[i][j][k];
                    }
                }
            }
        }
        MergedExpansion { first, second }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MergedExpansion {
    pub first: [OrderScalar; 3],
    pub second: [OrderScalar; 6],
}

impl MergedExpansion {
    /// Entries in reporting order: first-order fields, then [`MONOMIALS`].
    pub fn entries(&self) -> [OrderScalar; 9] {
        let mut out = [OrderScalar::ZERO; 9];
        out[..3].copy_from_slice(&self.first);
        out[3..].copy_from_slice(&self.second);
        out
    }
}

/// `E_a E_b` where row `i` of `e` writes `E_i` in a target frame `V`:
/// `Σ a_i (V_i b_j) V_j + Σ a_i b_j V_i V_j`.
pub fn compose(e: &FrameExpansion, a: usize, b: usize, rule: &DerivativeRule) -> OperatorExpansion {
    let (ra, rb) = (e.row(a), e.row(b));
    let mut out = OperatorExpansion::zero();
    for i in 0..3 {
        for j in 0..3 {
            out.first[j] = out.first[j] + ra[i] * rule.apply(i, rb[j]);
            out.second[i][j] = ra[i] * rb[j];
        }
    }
    out
}

/// Second-order rows `Ê₁Ê₁, Ê₁̄Ê₁, Ê₁T̂, T̂T̂` in the target frame, merged with `brackets`.
pub const SECOND_ORDER_ROWS: [(usize, usize); 4] = [(Z, Z), (ZBAR, Z), (Z, T), (T, T)];

pub fn compose_second_order(e: &FrameExpansion, rule: &DerivativeRule, brackets: &Commutators) -> [MergedExpansion; 4] {
    SECOND_ORDER_ROWS.map(|(a, b)| compose(e, a, b, rule).merged(brackets))
}

/// Connection form `ω₁¹ = Σ_j ω_j θ̂^j`, coefficient classes only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConnectionOrders(pub [OrderScalar; 3]);

impl ConnectionOrders {
    pub fn flat() -> Self {
        ConnectionOrders([OrderScalar::ZERO; 3])
    }

    /// `ω(E_i)` where `E_i = Σ_j e[i][j] Ê_j` and `θ̂^j(Ê_k) = δ_jk`.
    pub fn evaluate(&self, e: &FrameExpansion, i: usize) -> OrderScalar {
        (0..3).map(|j| self.0[j] * e.get(i, j)).sum()
    }
}

/// `Δ_b − Δ̂_b` in the hatted frame, with `Δ_b = Z₁Z₁̄ + Z₁̄Z₁ − ω₁¹(Z₁̄)Z₁ − ω₁̄¹̄(Z₁)Z₁̄`
/// and `e` writing `(Z₁, Z₁̄, T)` in `(Ẑ₁, Ẑ₁̄, T̂)`.
pub fn sublaplacian_expansion(e: &FrameExpansion, omega: &ConnectionOrders, rule: &DerivativeRule) -> MergedExpansion {
    let mut op = compose(e, Z, ZBAR, rule).add(&compose(e, ZBAR, Z, rule));
    // ω terms; the conjugate form has the same classes
    for (evaluated_on, field) in [(ZBAR, Z), (Z, ZBAR)] {
        let c = omega.evaluate(e, evaluated_on);
        for j in 0..3 {
            op.first[j] = op.first[j] + c * e.get(field, j);
        }
    }
    // the model operator Ẑ₁Ẑ₁̄ + Ẑ₁̄Ẑ₁ is carried by the two units
    let mut diff = op;
    for (i, j) in [(Z, ZBAR), (ZBAR, Z)] {
        diff.second[i][j] = op.second[i][j].remainder();
    }
    diff.merged(&Commutators::heisenberg())
}

/// Order of the coefficient of each plain derivative in `|Δ_b f − Δ̂_b f|`,
/// given the difference operator in the hatted frame and the expansion of
/// hatted operators in the plain one.
pub fn bound_pattern(difference: &MergedExpansion, first: &FrameExpansion, second: &[MergedExpansion; 4]) -> [OrderScalar; 9] {
    let mut out = [OrderScalar::ZERO; 9];
    let mut absorb = |weight: OrderScalar, entries: [OrderScalar; 9]| {
        let w = weight.remainder();
        for (o, e) in out.iter_mut().zip(entries) {
            *o = *o + w * e;
        }
    };
    for k in 0..3 {
        let mut entries = [OrderScalar::ZERO; 9];
        entries[..3].copy_from_slice(&first.row(k));
        absorb(difference.first[k], entries);
    }
    for (m, &(i, j)) in MONOMIALS.iter().enumerate() {
        let expansion = hatted_monomial(second, i, j);
        absorb(difference.second[m], expansion.entries());
    }
    out
}

/// Ẑ-products of the model frame commute up to `T̂`, so each monomial is
/// covered by one computed row or its conjugate.
fn hatted_monomial(second: &[MergedExpansion; 4], i: usize, j: usize) -> MergedExpansion {
    let conj = |m: &MergedExpansion| MergedExpansion {
        first: [m.first[ZBAR], m.first[Z], m.first[T]],
        second: [m.second[2], m.second[1], m.second[0], m.second[4], m.second[3], m.second[5]],
    };
    match (i, j) {
        (Z, Z) => second[0],
        (ZBAR, ZBAR) => conj(&second[0]),
        (ZBAR, Z) | (Z, ZBAR) => second[1],
        (Z, T) | (T, Z) => second[2],
        (ZBAR, T) | (T, ZBAR) => conj(&second[2]),
        _ => second[3],
    }
}

// Coframe and connection classes at the centre of normal coordinates.

/// `θ¹, θ¹̄` in the hatted coframe; `θ` mixes `θ̂` with the plain `θ¹, θ¹̄`.
pub fn normal_coframe() -> (FrameExpansion, [OrderScalar; 3]) {
    let o = OrderScalar::big_o;
    let u = OrderScalar::unit_plus;
    let hatted = FrameExpansion([
        [u(2), o(2), o(1)],
        [o(2), u(2), o(1)],
        [OrderScalar::ZERO, OrderScalar::ZERO, u(2)],
    ]);
    // θ = (1 + O(|x|²))θ̂ + O(|x|³)θ¹ + O(|x|³)θ¹̄
    (hatted, [o(3), o(3), OrderScalar::ZERO])
}

pub fn normal_connection() -> ConnectionOrders {
    ConnectionOrders([OrderScalar::big_o(1); 3])
}

/// Rewrites the coframe fully in hatted forms.
pub fn resolve_coframe(hatted: &FrameExpansion, mixed: [OrderScalar; 3]) -> FrameExpansion {
    let mut m = hatted.0;
    for k in 0..3 {
        m[T][k] = hatted.0[T][k] + mixed[Z] * hatted.0[Z][k] + mixed[ZBAR] * hatted.0[ZBAR][k];
    }
    FrameExpansion(m)
}

/// Dual frame: `E_k = Σ_j ((C⁻¹)_{jk}) Ê_j` when `θ = C θ̂`.
pub fn dual_frame(coframe: &FrameExpansion, truncation: u32) -> Result<FrameExpansion> {
    Ok(neumann_inverse(coframe, truncation)?.transpose())
}

/// Plain frame in hatted fields.
pub fn forward_table() -> Result<FrameExpansion> {
    let (hatted, mixed) = normal_coframe();
    dual_frame(&resolve_coframe(&hatted, mixed), 2)
}

/// Hatted frame in plain fields.
pub fn inverse_table() -> Result<FrameExpansion> {
    neumann_inverse(&forward_table()?, 2)
}

// Stated tables.

fn pattern(rows: [[(bool, u32); 3]; 3]) -> FrameExpansion {
    FrameExpansion(rows.map(|r| r.map(|(u, k)| OrderScalar::new(u, Some(k)))))
}

pub fn claimed_forward() -> FrameExpansion {
    pattern([
        [(true, 2), (false, 2), (false, 3)],
        [(false, 2), (true, 2), (false, 3)],
        [(false, 1), (false, 1), (true, 2)],
    ])
}

pub fn claimed_inverse() -> FrameExpansion {
    claimed_forward()
}

/// `A²` for the perturbation of the forward table, as displayed in the inversion.
pub fn claimed_square() -> FrameExpansion {
    pattern([
        [(false, 4), (false, 4), (false, 5)],
        [(false, 4), (false, 4), (false, 5)],
        [(false, 3), (false, 3), (false, 4)],
    ])
}

fn merged_claim(first: [(bool, u32); 3], second: [(bool, u32); 6]) -> MergedExpansion {
    let s = |(u, k): (bool, u32)| OrderScalar::new(u, Some(k));
    MergedExpansion {
        first: first.map(s),
        second: second.map(s),
    }
}

/// Rows in [`SECOND_ORDER_ROWS`] order; second-order entries in [`MONOMIALS`] order.
pub fn claimed_second_order() -> [MergedExpansion; 4] {
    let o = |k| (false, k);
    let u = |k| (true, k);
    [
        merged_claim([o(1), o(1), o(2)], [u(2), o(2), o(4), o(3), o(5), o(6)]),
        merged_claim([o(1), o(1), o(2)], [o(2), u(2), o(2), o(3), o(3), o(6)]),
        merged_claim([o(0), o(0), o(1)], [o(1), o(1), o(3), u(2), o(2), o(3)]),
        merged_claim([o(0), o(0), o(1)], [o(2), o(2), o(2), o(1), o(1), u(2)]),
    ]
}

pub fn claimed_sublaplacian() -> MergedExpansion {
    let o = |k| (false, k);
    merged_claim([o(1), o(1), o(2)], [o(2), o(2), o(2), o(3), o(3), o(6)])
}

/// Orders of `f_{,1}, f_{,1̄}, f_{,0}` then `f_{,11}, f_{,1̄1}, f_{,1̄1̄}, f_{,01}, f_{,01̄}, f_{,00}`.
pub fn claimed_bound() -> [OrderScalar; 9] {
    [1, 1, 2, 2, 2, 2, 3, 3, 6].map(OrderScalar::big_o)
}

// Comparison report.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Match,
    Weaker,
    Stronger,
}

impl fmt::Display for EntryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryStatus::Match => "match",
            EntryStatus::Weaker => "weaker",
            EntryStatus::Stronger => "stronger",
        })
    }
}

/// Weaker means the computed class does not imply the claimed one.
pub fn compare(claimed: OrderScalar, computed: OrderScalar) -> EntryStatus {
    if claimed == computed {
        return EntryStatus::Match;
    }
    let key = |c: OrderScalar| c.order().map_or(u64::MAX, u64::from);
    match key(computed).cmp(&key(claimed)) {
        Ordering::Less => EntryStatus::Weaker,
        Ordering::Greater => EntryStatus::Stronger,
        // same order, units differ
        Ordering::Equal if claimed.unit() => EntryStatus::Stronger,
        Ordering::Equal => EntryStatus::Weaker,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryComparison {
    pub table: String,
    pub row: String,
    pub column: String,
    pub claimed: OrderScalar,
    pub computed: OrderScalar,
    pub status: EntryStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderReport {
    pub rule: DerivativeRule,
    pub entries: Vec<EntryComparison>,
}

pub const TABLE_FORWARD: &str = "frame relations";
pub const TABLE_INVERSE: &str = "inverse frame relations";
pub const TABLE_SQUARE: &str = "neumann square";
pub const TABLE_SECOND: &str = "second-order relations";
pub const TABLE_SUBLAPLACIAN: &str = "sublaplacian difference";
pub const TABLE_BOUND: &str = "sublaplacian bound";

/// Entries the generic rule cannot settle: the `T` coefficient of `T̂²`
/// needs the coefficient `1 + O(|x|²)` of `T` in `T̂` to have a `T`-derivative
/// of order 1, which smoothness alone does not give.
pub const OPEN_QUESTION_ENTRIES: &[(&str, &str, &str)] = &[(TABLE_SECOND, "^T^T", "T")];

const PLAIN: [&str; 3] = ["Z1", "Z1b", "T"];
const HATTED: [&str; 3] = ["^Z1", "^Z1b", "^T"];
const DERIVATIVES: [&str; 9] = ["f_1", "f_1b", "f_0", "f_11", "f_1b1", "f_1b1b", "f_01", "f_01b", "f_00"];

fn monomial_labels(names: [&str; 3]) -> [String; 9] {
    let mut out: [String; 9] = Default::default();
    for (k, n) in names.iter().enumerate() {
        out[k] = n.to_string();
    }
    for (m, &(i, j)) in MONOMIALS.iter().enumerate() {
        out[3 + m] = format!("{}{}", names[i], names[j]);
    }
    out
}

impl OrderReport {
    fn push(&mut self, table: &str, row: &str, column: &str, claimed: OrderScalar, computed: OrderScalar) {
        self.entries.push(EntryComparison {
            table: table.into(),
            row: row.into(),
            column: column.into(),
            claimed,
            computed,
            status: compare(claimed, computed),
        });
    }

    fn push_matrix(&mut self, table: &str, rows: [&str; 3], cols: [&str; 3], claimed: &FrameExpansion, computed: &FrameExpansion) {
        for i in 0..3 {
            for j in 0..3 {
                self.push(table, rows[i], cols[j], claimed.get(i, j), computed.get(i, j));
            }
        }
    }

    fn push_merged(&mut self, table: &str, row: &str, cols: &[String; 9], claimed: &MergedExpansion, computed: &MergedExpansion) {
        for ((c, a), b) in cols.iter().zip(claimed.entries()).zip(computed.entries()) {
            self.push(table, row, c, a, b);
        }
    }

    pub fn table(&self, name: &str) -> impl Iterator<Item = &EntryComparison> {
        let name = name.to_string();
        self.entries.iter().filter(move |e| e.table == name)
    }

    pub fn mismatches(&self) -> Vec<&EntryComparison> {
        self.entries.iter().filter(|e| e.status != EntryStatus::Match).collect()
    }

    pub fn is_open_question(e: &EntryComparison) -> bool {
        OPEN_QUESTION_ENTRIES
            .iter()
            .any(|&(t, r, c)| e.table == t && e.row == r && e.column == c)
    }

    /// Every mismatch is a documented open entry.
    pub fn mismatches_documented(&self) -> bool {
        self.mismatches().iter().all(|e| Self::is_open_question(e))
    }

    /// Writes `table,row,column,claimed,computed,status` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["table", "row", "column", "claimed", "computed", "status"])?;
        for e in &self.entries {
            w.write_record([
                e.table.clone(),
                e.row.clone(),
                e.column.clone(),
                e.claimed.to_string(),
                e.computed.to_string(),
                e.status.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Re-derives every table under `rule` and compares it with the stated one.
pub fn verify_tables(rule: &DerivativeRule) -> Result<OrderReport> {
    let mut report = OrderReport {
        rule: *rule,
        entries: Vec::new(),
    };
    let forward = forward_table()?;
    let inverse = neumann_inverse(&forward, 2)?;
    let square = {
        let a = forward.perturbation()?;
        a.mul(&a)
    };
    report.push_matrix(TABLE_FORWARD, PLAIN, HATTED, &claimed_forward(), &forward);
    report.push_matrix(TABLE_INVERSE, HATTED, PLAIN, &claimed_inverse(), &inverse);
    report.push_matrix(TABLE_SQUARE, PLAIN, HATTED, &claimed_square(), &square);

    let second = compose_second_order(&inverse, rule, &Commutators::generic());
    let plain_cols = monomial_labels(PLAIN);
    for ((&(a, b), claimed), computed) in SECOND_ORDER_ROWS.iter().zip(claimed_second_order()).zip(&second) {
        let row = format!("{}{}", HATTED[a], HATTED[b]);
        report.push_merged(TABLE_SECOND, &row, &plain_cols, &claimed, computed);
    }

    let diff = sublaplacian_expansion(&forward, &normal_connection(), rule);
    report.push_merged(TABLE_SUBLAPLACIAN, "Db-^Db", &monomial_labels(HATTED), &claimed_sublaplacian(), &diff);

    let bound = bound_pattern(&diff, &inverse, &second);
    for ((name, c), b) in DERIVATIVES.iter().zip(claimed_bound()).zip(bound) {
        report.push(TABLE_BOUND, "|Db f-^Db f|", name, c, b);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(k: u32) -> OrderScalar {
        OrderScalar::big_o(k)
    }

    fn u(k: u32) -> OrderScalar {
        OrderScalar::unit_plus(k)
    }

    #[test]
    fn addition_examples() {
        assert_eq!(o(2) + o(3), o(2));
        assert_eq!(u(2) + o(1), u(1));
        assert_eq!(u(2) + OrderScalar::ZERO, u(2));
        assert_eq!(u(2) + u(3), u(2));
        assert_eq!(u(2) + o(0), o(0));
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(o(1) * o(2), o(3));
        assert_eq!(u(2) * u(2), u(2));
        assert_eq!(u(2) * o(1), o(1));
        assert_eq!(OrderScalar::ONE * o(4), o(4));
        assert_eq!(OrderScalar::ZERO * u(1), OrderScalar::ZERO);
    }

    #[test]
    fn unit_with_order_zero_is_absorbed() {
        assert_eq!(OrderScalar::new(true, Some(0)), o(0));
        assert!(!OrderScalar::new(true, Some(0)).unit());
    }

    #[test]
    fn display() {
        assert_eq!(u(2).to_string(), "1+O(|x|^2)");
        assert_eq!(o(1).to_string(), "O(|x|)");
        assert_eq!(o(0).to_string(), "O(1)");
        assert_eq!(OrderScalar::ZERO.to_string(), "0");
        assert_eq!(OrderScalar::ONE.to_string(), "1");
    }

    #[test]
    fn derivative_rules() {
        let a = DerivativeRule::anisotropic();
        let s = DerivativeRule::strict();
        assert_eq!(a.apply(Z, u(2)), o(1));
        assert_eq!(a.apply(T, u(2)), o(0));
        assert_eq!(a.apply(T, o(1)), o(0));
        assert_eq!(s.apply(T, o(1)), OrderScalar::ZERO);
        assert_eq!(s.apply(ZBAR, o(3)), o(2));
        assert_eq!(a.apply(T, OrderScalar::ONE), OrderScalar::ZERO);
        assert!(DerivativeRule::new(0, 2, Some(0)).is_err());
    }

    fn model_perturbation() -> FrameExpansion {
        FrameExpansion::from_orders(
            [[Some(2), Some(2), Some(3)], [Some(2), Some(2), Some(3)], [Some(1), Some(1), Some(2)]],
            false,
        )
    }

    #[test]
    fn neumann_inverse_keeps_the_pattern() {
        let e = FrameExpansion::identity().add(&model_perturbation());
        let inv = neumann_inverse(&e, 2).unwrap();
        assert_eq!(inv, claimed_inverse());
    }

    #[test]
    fn neumann_square_entries() {
        let a = model_perturbation();
        let sq = a.mul(&a);
        assert_eq!(sq.get(T, T), o(4));
        assert_eq!(sq.row(T), [o(3), o(3), o(4)]);
        assert_eq!(sq, claimed_square());
    }

    #[test]
    fn neumann_inverse_of_identity() {
        let inv = neumann_inverse(&FrameExpansion::identity(), 2).unwrap();
        assert_eq!(inv, FrameExpansion::identity());
    }

    #[test]
    fn neumann_inverse_rejects_non_identity_forms() {
        assert!(neumann_inverse(&model_perturbation(), 2).is_err());
        let mut e = FrameExpansion::identity();
        e.0[Z][T] = OrderScalar::ONE;
        assert!(matches!(neumann_inverse(&e, 2), Err(HeisError::NotIdentityPlus(_))));
    }

    #[test]
    fn first_order_tables_reproduced() {
        assert_eq!(forward_table().unwrap(), claimed_forward());
        assert_eq!(inverse_table().unwrap(), claimed_inverse());
    }

    #[test]
    fn identity_composition_is_the_plain_operator() {
        let id = FrameExpansion::identity();
        for rule in [DerivativeRule::anisotropic(), DerivativeRule::strict()] {
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(compose(&id, a, b, &rule), OperatorExpansion::product(a, b));
                }
            }
        }
    }

    #[test]
    fn mixed_row_first_order_coefficient() {
        let rows = compose_second_order(&inverse_table().unwrap(), &DerivativeRule::anisotropic(), &Commutators::generic());
        assert_eq!(rows[1].first[Z], o(1));
        assert_eq!(rows[1].second[1], u(2));
    }

    #[test]
    fn flat_sublaplacian_difference_is_empty() {
        let id = FrameExpansion::identity();
        let diff = sublaplacian_expansion(&id, &ConnectionOrders::flat(), &DerivativeRule::anisotropic());
        assert!(diff.entries().iter().all(|c| c.is_zero()), "{diff:?}");
    }

    #[test]
    fn sublaplacian_and_bound_match_under_anisotropic_rule() {
        let report = verify_tables(&DerivativeRule::anisotropic()).unwrap();
        for table in [TABLE_FORWARD, TABLE_INVERSE, TABLE_SQUARE, TABLE_SUBLAPLACIAN, TABLE_BOUND] {
            for e in report.table(table) {
                assert_eq!(e.status, EntryStatus::Match, "{e:?}");
            }
        }
    }

    #[test]
    fn second_order_mismatches_are_the_documented_ones() {
        let report = verify_tables(&DerivativeRule::anisotropic()).unwrap();
        let bad = report.mismatches();
        assert_eq!(bad.len(), 1, "{bad:?}");
        assert_eq!((bad[0].row.as_str(), bad[0].column.as_str()), ("^T^T", "T"));
        assert_eq!(bad[0].status, EntryStatus::Weaker);
        assert!(report.mismatches_documented());
        assert_eq!(report.table(TABLE_SECOND).count(), 36);
    }

    #[test]
    fn strict_rule_is_reported_too() {
        let report = verify_tables(&DerivativeRule::strict()).unwrap();
        assert_eq!(report.entries.len(), 27 + 36 + 9 + 9);
        // without the floor the O(1) Z-terms of T̂² vanish
        let bad: Vec<_> = report
            .mismatches()
            .iter()
            .map(|e| (e.row.as_str(), e.column.as_str(), e.status))
            .collect();
        assert_eq!(
            bad,
            [
                ("^T^T", "Z1", EntryStatus::Stronger),
                ("^T^T", "Z1b", EntryStatus::Stronger),
                ("^T^T", "T", EntryStatus::Weaker)
            ]
        );
    }

    #[test]
    fn comparison_statuses() {
        assert_eq!(compare(o(2), o(2)), EntryStatus::Match);
        assert_eq!(compare(o(2), o(1)), EntryStatus::Weaker);
        assert_eq!(compare(o(2), o(3)), EntryStatus::Stronger);
        assert_eq!(compare(u(2), o(2)), EntryStatus::Stronger);
        assert_eq!(compare(o(2), OrderScalar::ZERO), EntryStatus::Stronger);
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let report = verify_tables(&DerivativeRule::anisotropic()).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), report.entries.len() + 1);
        assert!(text.starts_with("table,row,column,claimed,computed,status\n"));
    }
}
