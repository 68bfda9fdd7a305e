//! Finite differences for `L u = −4Δ_b u + R·u = u^p` on Dirichlet boxes.
//!
//! `−4Δ_b = −(X² + Y²) = −[∂xx + ∂yy + 4y∂xt − 4x∂yt + 4(x²+y²)∂tt]`, discretized
//! with centered second differences and 4-point mixed stencils (15 points).

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::blowup::{log_grid, wbar_profile, RadialProfile};
use crate::error::{HeisError, Result};
use crate::field::ScalarField;
use crate::group::{koranyi_norm, HeisPoint};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n: [usize; 3],
    pub h: [f64; 3],
}

impl Grid {
    pub fn new(lo: [f64; 3], hi: [f64; 3], n: [usize; 3]) -> Result<Self> {
        let mut h = [0.0; 3];
        for a in 0..3 {
            if n[a] < 8 {
                return Err(HeisError::InvalidParameter(format!("grid needs at least 8 nodes per axis, got {}", n[a])));
            }
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(HeisError::InvalidParameter(format!("empty box along axis {a}")));
            }
            h[a] = (hi[a] - lo[a]) / (n[a] - 1) as f64;
        }
        Ok(Self { lo, hi, n, h })
    }

    /// `[−a, a]² × [−b, b]` with `n` nodes per axis.
    pub fn centered(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::new([-a, -a, -b], [a, a, b], [n, n, n])
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n[1] + j) * self.n[0] + i
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(idx);
        [
            self.lo[0] + i as f64 * self.h[0],
            self.lo[1] + j as f64 * self.h[1],
            self.lo[2] + k as f64 * self.h[2],
        ]
    }

    pub fn point(&self, idx: usize) -> HeisPoint {
        let [x, y, t] = self.coords(idx);
        HeisPoint::h1(x, y, t)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let c = self.ijk(idx);
        (0..3).any(|a| c[a] == 0 || c[a] == self.n[a] - 1)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    /// `dV = 4 dx dy dt` of one cell.
    pub fn cell_volume(&self) -> f64 {
        4.0 * self.h[0] * self.h[1] * self.h[2]
    }

    pub fn contains(&self, c: [f64; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] <= self.hi[a])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn sample(grid: &Grid, f: &ScalarField) -> Result<Self> {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f.eval(&grid.point(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Copy with interior values replaced by zero.
    pub fn boundary_only(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.values.len() {
            if !self.grid.is_boundary(i) {
                out.values[i] = 0.0;
            }
        }
        out
    }

    pub fn max(&self) -> (f64, usize) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((f64::NEG_INFINITY, 0), |(m, k), (i, v)| if v > m { (v, i) } else { (m, k) })
    }

    pub fn min_interior(&self) -> f64 {
        (0..self.values.len())
            .filter(|&i| !self.grid.is_boundary(i))
            .map(|i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &DiscreteField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Trilinear interpolation; `outside` is returned beyond the box, or an error if `None`.
    pub fn interpolate(&self, c: [f64; 3], outside: Option<f64>) -> Result<f64> {
        let g = &self.grid;
        if !g.contains(c) {
            return outside.ok_or_else(|| HeisError::Evaluation(format!("point {c:?} outside the grid box")));
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = ((c[a] - g.lo[a]) / g.h[a]).clamp(0.0, (g.n[a] - 1) as f64);
            let i = (s.floor() as usize).min(g.n[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut v = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
            if w != 0.0 {
                v += w * self.values[g.index(base[0] + o[0], base[1] + o[1], base[2] + o[2])];
            }
        }
        Ok(v)
    }

    /// Evaluation-only field by trilinear interpolation.
    pub fn to_field(&self, outside: Option<f64>) -> ScalarField {
        let me = self.clone();
        ScalarField::from_fn("grid field", move |p| me.interpolate(p.xyt(), outside))
    }

    /// Writes `x,y,t,u` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "t", "u"])?;
        for (i, v) in self.values.iter().enumerate() {
            let [x, y, t] = self.grid.coords(i);
            w.write_record([x, y, t, *v].map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compressed sparse rows with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
    diag: Vec<usize>,
}

impl CsrMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut r) in rows.into_iter().enumerate() {
            r.sort_by_key(|e| e.0);
            let mut d = usize::MAX;
            for (c, v) in r {
                if col.len() > row_ptr[i] && *col.last().expect("nonempty") == c {
                    *val.last_mut().expect("nonempty") += v;
                    continue;
                }
                if c == i {
                    d = col.len();
                }
                col.push(c);
                val.push(v);
            }
            assert!(d != usize::MAX, "row {i} has no diagonal entry");
            diag.push(d);
            row_ptr.push(col.len());
        }
        Self {
            n,
            row_ptr,
            col,
            val,
            diag,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        });
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.val[self.diag[i]]
    }

    fn add_to_diagonal(&mut self, i: usize, v: f64) {
        let d = self.diag[i];
        self.val[d] += v;
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }
}

/// Incomplete LU with the sparsity of the matrix (unit lower factor stored implicitly).
pub struct Ilu0 {
    lu: CsrMatrix,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        for i in 0..lu.n {
            let end = lu.row_ptr[i + 1];
            for kk in lu.row_ptr[i]..lu.diag[i] {
                let k = lu.col[kk];
                let pivot = lu.val[lu.diag[k]];
                if pivot == 0.0 {
                    return Err(HeisError::LinearSolve { iterations: 0, residual: f64::INFINITY });
                }
                let lik = lu.val[kk] / pivot;
                lu.val[kk] = lik;
                let (ks, ke) = (lu.diag[k] + 1, lu.row_ptr[k + 1]);
                for jj in kk + 1..end {
                    let j = lu.col[jj];
                    if let Ok(pos) = lu.col[ks..ke].binary_search(&j) {
                        lu.val[jj] -= lik * lu.val[ks + pos];
                    }
                }
            }
            if lu.val[lu.diag[i]] == 0.0 {
                return Err(HeisError::LinearSolve { iterations: 0, residual: f64::INFINITY });
            }
        }
        Ok(Self { lu })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..lu.diag[i] {
                s -= lu.val[k] * z[lu.col[k]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for k in lu.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.val[k] * z[lu.col[k]];
            }
            z[i] = s / lu.val[lu.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearSolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub const LINEAR_TOL: f64 = 1e-10;

/// Right-preconditioned BiCGSTAB; `x` holds the initial guess on entry.
pub fn bicgstab(a: &CsrMatrix, m: &Ilu0, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<LinearSolveStats> {
    let n = a.n;
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    if res <= tol {
        return Ok(LinearSolveStats { iterations: 0, relative_residual: res });
    }
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut phat);
        a.matvec(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= tol {
            x.iter_mut().zip(&phat).for_each(|(xi, pi)| *xi += alpha * pi);
            return Ok(LinearSolveStats { iterations: it, relative_residual: norm(&s) / bnorm });
        }
        m.apply(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(LinearSolveStats { iterations: it, relative_residual: res });
        }
    }
    // recompute the true residual for the diagnostic
    a.matvec(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    Err(HeisError::LinearSolve { iterations: max_iter, residual: norm(&r) / bnorm })
}

/// Right-preconditioned restarted GMRES(m).
pub fn gmres(a: &CsrMatrix, m: &Ilu0, b: &[f64], x: &mut [f64], tol: f64, restart: usize, max_iter: usize) -> Result<LinearSolveStats> {
    let n = a.n;
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut total = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    loop {
        a.matvec(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        if beta / bnorm <= tol {
            return Ok(LinearSolveStats { iterations: total, relative_residual: beta / bnorm });
        }
        if total >= max_iter {
            return Err(HeisError::LinearSolve { iterations: total, residual: beta / bnorm });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            m.apply(&basis[k], &mut z);
            a.matvec(&z, &mut w);
            for (j, bj) in basis.iter().enumerate() {
                h[j][k] = dot(&w, bj);
                w.iter_mut().zip(bj).for_each(|(wi, bi)| *wi -= h[j][k] * bi);
            }
            h[k + 1][k] = norm(&w);
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let next_norm = norm(&w);
            if g[k + 1].abs() / bnorm <= tol || next_norm == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / next_norm).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            update.iter_mut().zip(&basis[j]).for_each(|(u, bj)| *u += yj * bj);
        }
        m.apply(&update, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
    }
}

/// BiCGSTAB first, restarted GMRES if it breaks down or stalls.
pub fn solve_linear(a: &CsrMatrix, m: &Ilu0, b: &[f64], x: &mut [f64], tol: f64) -> Result<LinearSolveStats> {
    let start = x.to_vec();
    match bicgstab(a, m, b, x, tol, 2000) {
        Ok(s) => Ok(s),
        Err(_) => {
            x.copy_from_slice(&start);
            gmres(a, m, b, x, tol, 80, 4000)
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub r: f64,
    pub matrix: CsrMatrix,
    pub boundary: Vec<bool>,
}

/// Number of stencil points of an interior row.
pub const STENCIL_POINTS: usize = 15;

/// `−4Δ_b + R` on interior rows, identity on boundary rows.
pub fn assemble_operator(grid: &Grid, r: f64) -> DiscreteOperator {
    let [hx, hy, ht] = grid.h;
    let boundary = grid.boundary_mask();
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if boundary[idx] {
                return vec![(idx, 1.0)];
            }
            let [i, j, k] = grid.ijk(idx);
            let [x, y, _] = grid.coords(idx);
            let at = |di: isize, dj: isize, dk: isize| {
                grid.index(
                    (i as isize + di) as usize,
                    (j as isize + dj) as usize,
                    (k as isize + dk) as usize,
                )
            };
            let ctt = 4.0 * (x * x + y * y) / (ht * ht);
            let cxx = 1.0 / (hx * hx);
            let cyy = 1.0 / (hy * hy);
            let cxt = 4.0 * y / (4.0 * hx * ht);
            let cyt = -4.0 * x / (4.0 * hy * ht);
            // rows hold −(X² + Y²) + R
            let mut row = vec![
                (idx, 2.0 * (cxx + cyy + ctt) + r),
                (at(-1, 0, 0), -cxx),
                (at(1, 0, 0), -cxx),
                (at(0, -1, 0), -cyy),
                (at(0, 1, 0), -cyy),
                (at(0, 0, -1), -ctt),
                (at(0, 0, 1), -ctt),
            ];
            for (si, sk, sign) in [(1, 1, 1.0), (-1, -1, 1.0), (1, -1, -1.0), (-1, 1, -1.0)] {
                row.push((at(si, 0, sk), -sign * cxt));
                row.push((at(0, si, sk), -sign * cyt));
            }
            row
        })
        .collect();
    DiscreteOperator {
        grid: grid.clone(),
        r,
        matrix: CsrMatrix::from_rows(rows),
        boundary,
    }
}

impl DiscreteOperator {
    pub fn apply(&self, u: &DiscreteField) -> DiscreteField {
        let mut out = vec![0.0; u.values.len()];
        self.matrix.matvec(&u.values, &mut out);
        DiscreteField {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Largest interior `|A·c − R·c|` for a constant `c`.
    pub fn constant_consistency(&self) -> f64 {
        let one = DiscreteField {
            grid: self.grid.clone(),
            values: vec![1.0; self.grid.len()],
        };
        let a = self.apply(&one);
        (0..a.values.len())
            .filter(|&i| !self.boundary[i])
            .map(|i| (a.values[i] - self.r).abs())
            .fold(0.0, f64::max)
    }

    fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(|&i| !self.boundary[i])
    }
}

/// `|u|^{p−1}·u`, the odd extension of `u^p`.
fn spow(u: f64, p: f64) -> f64 {
    u.abs().powf(p - 1.0) * u
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bump {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Self { amplitude: 0.0, width: 1.0 }
    }
}

impl Bump {
    /// `A·exp(−(N/w)⁴)·Π(1 − s_a²)`, with `N` the gauge about the box center and
    /// `s_a` the normalized coordinates; zero on the box boundary.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let center = [0, 1, 2].map(|a| 0.5 * (grid.lo[a] + grid.hi[a]));
        let half = [0, 1, 2].map(|a| 0.5 * (grid.hi[a] - grid.lo[a]));
        (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                let p = HeisPoint::h1(c[0] - center[0], c[1] - center[1], c[2] - center[2]);
                let g = koranyi_norm(&p) / self.width;
                let cut: f64 = (0..3).map(|a| 1.0 - ((c[a] - center[a]) / half[a]).powi(2)).product();
                self.amplitude * (-g.powi(4)).exp() * cut.max(0.0)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub bump: Bump,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            bump: Bump::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub field: DiscreteField,
    pub iterations: usize,
    /// `‖A·u − u^p‖_∞ / ‖u^p‖_∞` over interior nodes, recomputed after the loop.
    pub residual: f64,
    pub history: Vec<f64>,
}

pub const POSITIVITY_FLOOR: f64 = 1e-12;

fn newton_residual(op: &DiscreteOperator, u: &[f64], p: f64, g: &[f64], out: &mut [f64]) -> f64 {
    op.matrix.matvec(u, out);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..u.len() {
        if op.boundary[i] {
            out[i] = u[i] - g[i];
        } else {
            let up = spow(u[i], p);
            out[i] -= up;
            num = num.max(out[i].abs());
            den = den.max(up.abs());
        }
    }
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Damped Newton for `A·u = u^p` with `u = boundary` on boundary nodes.
///
/// Starts from the discrete harmonic extension of the boundary data plus `cfg.bump`.
pub fn solve_dirichlet(op: &DiscreteOperator, p: f64, boundary: &DiscreteField, cfg: &NewtonConfig) -> Result<NewtonReport> {
    if !(p > 1.0 && p <= 3.0) {
        return Err(HeisError::InvalidParameter(format!("exponent must lie in (1, 3], got {p}")));
    }
    let n = op.grid.len();
    let g = &boundary.values;
    if (0..n).any(|i| op.boundary[i] && !(g[i] > 0.0)) {
        return Err(HeisError::InvalidParameter("boundary data must be positive".into()));
    }
    // harmonic extension
    let ilu = Ilu0::new(&op.matrix)?;
    let rhs: Vec<f64> = (0..n).map(|i| if op.boundary[i] { g[i] } else { 0.0 }).collect();
    let mut u = rhs.clone();
    solve_linear(&op.matrix, &ilu, &rhs, &mut u, LINEAR_TOL)?;
    for (ui, bi) in u.iter_mut().zip(cfg.bump.sample(&op.grid)) {
        *ui = (*ui + bi).max(POSITIVITY_FLOOR);
    }

    let mut res_vec = vec![0.0; n];
    let mut res = newton_residual(op, &u, p, g, &mut res_vec);
    let mut history = vec![res];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    for it in 1..=cfg.max_iter {
        if res <= cfg.tol {
            return finish(op, u, p, g, it - 1, history, cfg.tol);
        }
        let mut jac = op.matrix.clone();
        for i in op.interior() {
            jac.add_to_diagonal(i, -p * u[i].abs().powf(p - 1.0));
        }
        let jilu = Ilu0::new(&jac)?;
        let b: Vec<f64> = res_vec.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; n];
        solve_linear(&jac, &jilu, &b, &mut delta, LINEAR_TOL)?;
        let norm_now = res_vec.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            for i in 0..n {
                trial[i] = (u[i] + step * delta[i]).max(POSITIVITY_FLOOR);
            }
            let r = newton_residual(op, &trial, p, g, &mut trial_res);
            let norm_trial = trial_res.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm_trial < norm_now || r <= cfg.tol {
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut res_vec, &mut trial_res);
                res = r;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(res);
        if !accepted {
            return Err(HeisError::LineSearch(format!(
                "no decrease after 20 halvings at Newton iteration {it} (residual {res:e})"
            )));
        }
    }
    if res <= cfg.tol {
        return finish(op, u, p, g, cfg.max_iter, history, cfg.tol);
    }
    Err(HeisError::NonConvergence {
        iterations: cfg.max_iter,
        residual: res,
    })
}

fn finish(op: &DiscreteOperator, u: Vec<f64>, p: f64, g: &[f64], iterations: usize, history: Vec<f64>, tol: f64) -> Result<NewtonReport> {
    let mut scratch = vec![0.0; u.len()];
    let residual = newton_residual(op, &u, p, g, &mut scratch);
    let field = DiscreteField {
        grid: op.grid.clone(),
        values: u,
    };
    let min = field.min_interior();
    if min <= 10.0 * POSITIVITY_FLOOR {
        return Err(HeisError::LossOfPositivity { iteration: iterations, min });
    }
    if residual > tol {
        return Err(HeisError::NonConvergence { iterations, residual });
    }
    Ok(NewtonReport {
        field,
        iterations,
        residual,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuotientConfig {
    pub max_iter: usize,
    /// Stop when the relative decrease of the quotient falls below this.
    pub tol: f64,
}

impl Default for QuotientConfig {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-11 }
    }
}

#[derive(Clone, Debug)]
pub struct QuotientReport {
    /// Minimizer rescaled to solve `A·v = v^p`.
    pub solution: DiscreteField,
    /// Minimizer normalized by `Σ dV·u^{p+1} = 1`.
    pub normalized: DiscreteField,
    pub value: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// `⟨u, A u⟩ / (Σ dV·|u|^{p+1})^{2/(p+1)}` on zero-Dirichlet data, and its parts.
pub fn quotient(op: &DiscreteOperator, u: &[f64], p: f64) -> (f64, f64, f64) {
    let dv = op.grid.cell_volume();
    let mut au = vec![0.0; u.len()];
    op.matrix.matvec(u, &mut au);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in op.interior() {
        num += dv * u[i] * au[i];
        den += dv * u[i].abs().powf(p + 1.0);
    }
    (num / den.powf(2.0 / (p + 1.0)), num, den)
}

/// Descent on the quotient with the `A`-preconditioned direction
/// `d = u − (N/D)·A⁻¹u^p` and Armijo backtracking.
pub fn minimize_quotient(op: &DiscreteOperator, p: f64, init: &DiscreteField, cfg: &QuotientConfig) -> Result<QuotientReport> {
    if !(2.0..3.0).contains(&p) {
        return Err(HeisError::InvalidParameter(format!("exponent must lie in [2, 3), got {p}")));
    }
    let n = op.grid.len();
    let dv = op.grid.cell_volume();
    let mut u: Vec<f64> = (0..n).map(|i| if op.boundary[i] { 0.0 } else { init.values[i].abs() }).collect();
    if u.iter().all(|&v| v == 0.0) {
        return Err(HeisError::InvalidParameter("initial guess vanishes in the interior".into()));
    }
    let normalize = |u: &mut Vec<f64>| {
        let (_, _, d) = quotient(op, u, p);
        let s = d.powf(-1.0 / (p + 1.0));
        u.iter_mut().for_each(|v| *v *= s);
    };
    normalize(&mut u);
    let ilu = Ilu0::new(&op.matrix)?;
    let (mut q, mut num, mut den) = quotient(op, &u, p);
    let mut history = vec![q];
    let mut z = vec![0.0; n];
    let mut ad = vec![0.0; n];
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let rhs: Vec<f64> = (0..n).map(|i| if op.boundary[i] { 0.0 } else { spow(u[i], p) }).collect();
        solve_linear(&op.matrix, &ilu, &rhs, &mut z, LINEAR_TOL)?;
        let ratio = num / den;
        let d: Vec<f64> = (0..n).map(|i| u[i] - ratio * z[i]).collect();
        op.matrix.matvec(&d, &mut ad);
        let slope = 2.0 * dv * (0..n).filter(|&i| !op.boundary[i]).map(|i| d[i] * ad[i]).sum::<f64>() / den.powf(2.0 / (p + 1.0));
        if slope <= 1e-14 * q.abs() {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..n).map(|i| u[i] - alpha * d[i]).collect();
            let (qt, _, _) = quotient(op, &trial, p);
            if qt.is_finite() && qt <= q - 1e-4 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(mut next) = accepted else {
            return Err(HeisError::LineSearch(format!("Armijo backtracking failed at iteration {it}")));
        };
        normalize(&mut next);
        u = next;
        let prev = q;
        (q, num, den) = quotient(op, &u, p);
        history.push(q);
        if (prev - q).abs() <= cfg.tol * q.abs() {
            break;
        }
    }
    let normalized = DiscreteField {
        grid: op.grid.clone(),
        values: u.iter().map(|v| v.abs()).collect(),
    };
    let c = (num / den).powf(1.0 / (p - 1.0));
    let solution = DiscreteField {
        grid: op.grid.clone(),
        values: normalized.values.iter().map(|v| c * v).collect(),
    };
    Ok(QuotientReport {
        solution,
        normalized,
        value: q,
        history,
        iterations,
    })
}

/// `(Vol{v ≥ max/2} / Vol(B_1))^{1/4}`, the gauge radius of the half-height set.
pub fn half_height_radius(v: &DiscreteField) -> f64 {
    let (m, _) = v.max();
    let count = v.values.iter().filter(|&&x| x >= 0.5 * m).count();
    let vol = count as f64 * v.grid.cell_volume();
    (vol / (2.0 * std::f64::consts::PI * std::f64::consts::PI)).powf(0.25)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub max: f64,
    pub location: [f64; 3],
    pub radius: f64,
    pub quotient: f64,
    pub iterations: usize,
    pub profile: RadialProfile,
    pub interior: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub quotient: QuotientConfig,
    pub bump: Bump,
    pub profile_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            quotient: QuotientConfig::default(),
            bump: Bump { amplitude: 1.0, width: 1.0 },
            profile_points: 24,
        }
    }
}

/// Quotient minimizers for each `p`, with their peak, half-height radius and the
/// `w̄` profile about the peak.
pub fn concentration_sweep(p_list: &[f64], grid: &Grid, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if let Some(p) = p_list.iter().find(|&&p| !(p > 2.0 && p < 3.0)) {
        return Err(HeisError::InvalidParameter(format!("sweep exponents must lie in (2, 3), got {p}")));
    }
    let op = assemble_operator(grid, 0.0);
    let init = DiscreteField {
        grid: grid.clone(),
        values: cfg.bump.sample(grid),
    };
    p_list
        .par_iter()
        .map(|&p| {
            let rep = minimize_quotient(&op, p, &init, &cfg.quotient)?;
            let v = &rep.solution;
            let (max, at) = v.max();
            let location = grid.coords(at);
            let interior = !grid.is_boundary(at);
            let radius = half_height_radius(v);
            // largest gauge sphere about the peak that stays in the box
            let reach_xy = (0..2).map(|a| (location[a] - grid.lo[a]).min(grid.hi[a] - location[a])).fold(f64::INFINITY, f64::min);
            let reach_t = (location[2] - grid.lo[2]).min(grid.hi[2] - location[2]).sqrt();
            let r_max = 0.999 * reach_xy.min(reach_t);
            let r_min = (grid.h[0].min(grid.h[1])).min(r_max / 2.0);
            let radii = log_grid(r_min, r_max, cfg.profile_points.max(3))?;
            let center = HeisPoint::h1(location[0], location[1], location[2]);
            let recentred = v.to_field(Some(0.0)).recentred(&center);
            let profile = wbar_profile(&recentred, p, &radii, 16, 32)?;
            Ok(SweepRow {
                p,
                max,
                location,
                radius,
                quotient: rep.value,
                iterations: rep.iterations,
                profile,
                interior,
            })
        })
        .collect()
}

/// Writes `p,max,x,y,t,radius` rows.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "max", "x", "y", "t", "radius"])?;
    for r in rows {
        let vals = [r.p, r.max, r.location[0], r.location[1], r.location[2], r.radius];
        w.write_record(vals.map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Sup over interior nodes of `|A·f − (−4Δ_b f + R f)|` for sampled `f`.
pub fn consistency_error(grid: &Grid, f: &ScalarField, r: f64) -> Result<f64> {
    let op = assemble_operator(grid, r);
    let u = DiscreteField::sample(grid, f)?;
    let au = op.apply(&u);
    let cfg = crate::calculus::FdConfig::default();
    let mut worst = 0.0f64;
    for i in op.interior() {
        let exact = -4.0 * crate::calculus::sublaplacian(f, &grid.point(i), &cfg)? + r * u.values[i];
        worst = worst.max((au.values[i] - exact).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub n: usize,
    /// `max|u − 2U| / max 2U` over the grid.
    pub error: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A·u = u³` on `[−a, a]² × [−b, b]` with `n³` nodes and boundary data
/// `2U`, the bubble of `−4Δ_b`, and compares the solution with `2U`.
pub fn bubble_recovery(n: usize, a: f64, b: f64, bump: Bump) -> Result<RecoveryReport> {
    let grid = Grid::centered(a, b, n)?;
    let op = assemble_operator(&grid, 0.0);
    let exact = DiscreteField::sample(&grid, &crate::identities::Bubble::standard(2.0).field())?;
    let cfg = NewtonConfig {
        bump,
        ..NewtonConfig::default()
    };
    let rep = solve_dirichlet(&op, 3.0, &exact.boundary_only(), &cfg)?;
    Ok(RecoveryReport {
        n,
        error: rep.field.max_abs_diff(&exact) / exact.max().0,
        iterations: rep.iterations,
        residual: rep.residual,
    })
}

/// Observed order of [`consistency_error`] between two node counts on the same box.
pub fn consistency_order(f: &ScalarField, a: f64, b: f64, coarse: usize, fine: usize) -> Result<(f64, f64, f64)> {
    let (gc, gf) = (Grid::centered(a, b, coarse)?, Grid::centered(a, b, fine)?);
    let e1 = consistency_error(&gc, f, 0.0)?;
    let e2 = consistency_error(&gf, f, 0.0)?;
    Ok(((e1 / e2).ln() / (gc.h[0] / gf.h[0]).ln(), e1, e2))
}
