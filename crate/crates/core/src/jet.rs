//! Truncated bivariate Taylor arithmetic ("jets").
//!
//! A jet of order `n` stores the Taylor coefficients `c[i,j] = ∂^{i+j}f/∂x^i∂y^j / (i! j!)`
//! for all `i + j <= n`, laid out in graded order:
//! `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), (3,0), ...`.
//! Because the layout is graded, a lower-order jet is a prefix of a higher-order one.
//!
//! Coefficients stay normalized by the factorials internally; raw partial
//! derivatives are only produced by [`Jet2::partial`].

use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::LazyLock;

use crate::activation::{ActivationKind, MAX_TAYLOR};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;
pub const MAX_COEFFS: usize = 15;

const FACTORIAL: [f64; MAX_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Number of coefficients carried by a jet of the given order.
pub const fn coeff_count(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Position of multi-index `(i, j)` in the graded layout.
pub const fn jet_index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Inverse of [`jet_index`].
pub fn multi_index(k: usize) -> (usize, usize) {
    let mut d = 0;
    while coeff_count(d) <= k {
        d += 1;
    }
    let j = k - jet_index(d, 0);
    (d - j, j)
}

/// Product index triples `(a, b, out)` of a full truncated product, per order.
static TABLES: LazyLock<Vec<Vec<[u8; 3]>>> = LazyLock::new(|| {
    (0..=MAX_ORDER)
        .map(|order| {
            let k = coeff_count(order);
            let mut full = Vec::new();
            for a in 0..k {
                for b in 0..k {
                    let (ai, aj) = multi_index(a);
                    let (bi, bj) = multi_index(b);
                    if ai + aj + bi + bj <= order {
                        full.push([a as u8, b as u8, jet_index(ai + bi, aj + bj) as u8]);
                    }
                }
            }
            full
        })
        .collect()
});

fn check_order(order: usize) -> Result<()> {
    if matches!(order, 1 | 2 | 4) {
        Ok(())
    } else {
        Err(Error::invalid(format!("jet order {order} not in {{1, 2, 4}}")))
    }
}

/// Truncated bivariate Taylor expansion of a scalar quantity at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    order: u8,
    c: [f64; MAX_COEFFS],
}

impl Jet2 {
    /// Identity seed for coordinate `which` (0 = x, 1 = y) at `point`.
    pub fn seed(point: [f64; 2], which: usize, order: usize) -> Result<Jet2> {
        check_order(order)?;
        if which > 1 {
            return Err(Error::invalid(format!("coordinate index {which} not in {{0, 1}}")));
        }
        Ok(Self::seed_unchecked(point[which], which, order))
    }

    pub fn constant(value: f64, order: usize) -> Result<Jet2> {
        check_order(order)?;
        Ok(Self::constant_unchecked(value, order))
    }

    /// Seed allowing any order in `0..=4`; order 0 carries just the value.
    pub(crate) fn seed_unchecked(value: f64, which: usize, order: usize) -> Jet2 {
        let mut jet = Self::constant_unchecked(value, order);
        if order >= 1 {
            jet.c[1 + which] = 1.0;
        }
        jet
    }

    pub(crate) fn constant_unchecked(value: f64, order: usize) -> Jet2 {
        debug_assert!(order <= MAX_ORDER);
        let mut c = [0.0; MAX_COEFFS];
        c[0] = value;
        Jet2 { order: order as u8, c }
    }

    pub(crate) fn from_coeffs(order: usize, coeffs: &[f64]) -> Jet2 {
        let mut jet = Self::constant_unchecked(0.0, order);
        let k = coeff_count(order);
        jet.c[..k].copy_from_slice(&coeffs[..k]);
        jet
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    /// Taylor coefficients in graded order.
    pub fn coeffs(&self) -> &[f64] {
        &self.c[..coeff_count(self.order())]
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Taylor coefficient for `(i, j)`; zero beyond the truncation order.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.order() {
            0.0
        } else {
            self.c[jet_index(i, j)]
        }
    }

    /// Raw partial derivative `∂^{i+j} f / ∂x^i ∂y^j`.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        self.coeff(i, j) * FACTORIAL[i.min(MAX_ORDER)] * FACTORIAL[j.min(MAX_ORDER)]
    }

    pub fn laplacian(&self) -> f64 {
        self.partial(2, 0) + self.partial(0, 2)
    }

    pub fn biharmonic(&self) -> f64 {
        self.partial(4, 0) + 2.0 * self.partial(2, 2) + self.partial(0, 4)
    }

    pub fn try_mul(&self, other: &Jet2) -> Result<Jet2> {
        if self.order != other.order {
            return Err(Error::invalid(format!("jet orders differ ({} vs {})", self.order, other.order)));
        }
        let mut out = Self::constant_unchecked(0.0, self.order());
        for e in &TABLES[self.order()] {
            out.c[e[2] as usize] += self.c[e[0] as usize] * other.c[e[1] as usize];
        }
        Ok(out)
    }

    /// Composes a univariate function given by its Taylor coefficients at the value.
    pub(crate) fn compose(&self, taylor: &[f64]) -> Jet2 {
        let mut out = Self::constant_unchecked(0.0, self.order());
        compose(self.order(), taylor, &self.c, &mut out.c);
        out
    }

    pub fn activate(&self, kind: ActivationKind) -> Jet2 {
        let mut a = [0.0; MAX_TAYLOR + 1];
        kind.taylor(self.c[0], &mut a[..=self.order()]);
        self.compose(&a[..=self.order()])
    }

    pub fn sin(&self) -> Jet2 {
        self.compose(&trig_taylor(self.c[0], 0, self.order()))
    }

    pub fn cos(&self) -> Jet2 {
        self.compose(&trig_taylor(self.c[0], 1, self.order()))
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        let mut out = *self;
        out.c.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Taylor coefficients of sin (phase 0) or cos (phase 1) at `z`.
fn trig_taylor(z: f64, phase: usize, order: usize) -> [f64; MAX_ORDER + 1] {
    let (s, c) = z.sin_cos();
    let cycle = [s, c, -s, -c];
    let mut a = [0.0; MAX_ORDER + 1];
    for (m, slot) in a.iter_mut().enumerate().take(order + 1) {
        *slot = cycle[(m + phase) % 4] / FACTORIAL[m];
    }
    a
}

/// Identity seed for a coordinate.
pub fn jet_seed(point: [f64; 2], which: usize, order: usize) -> Result<Jet2> {
    Jet2::seed(point, which, order)
}

/// Truncated Taylor product.
pub fn jet_mul(a: &Jet2, b: &Jet2) -> Result<Jet2> {
    a.try_mul(b)
}

/// Composes an activation through a jet.
pub fn jet_activation(a: &Jet2, kind: ActivationKind) -> Jet2 {
    a.activate(kind)
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        assert_eq!(self.order, rhs.order, "jet orders differ");
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
        self
    }
}

impl AddAssign for Jet2 {
    fn add_assign(&mut self, rhs: Jet2) {
        *self = *self + rhs;
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        self.try_mul(&rhs).expect("jet orders differ")
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.scale(rhs)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: f64) -> Jet2 {
        self.c[0] += rhs;
        self
    }
}

// ---------------------------------------------------------------------------
// Slice kernels shared by the single-point type and the batched tape.

const fn degree_const(k: usize) -> usize {
    let mut d = 0;
    while coeff_count(d) <= k {
        d += 1;
    }
    d
}

const fn index_const(k: usize) -> (usize, usize) {
    let d = degree_const(k);
    let j = k - jet_index(d, 0);
    (d - j, j)
}

/// Entries `(a, b, out)` of `δ^m = δ^(m-1) · δ` at truncation `order`, in `(a, b)` row-major order.
const fn power_entries<const N: usize>(order: usize, m: usize) -> [[u8; 3]; N] {
    let k = coeff_count(order);
    let mut out = [[0u8; 3]; N];
    let mut n = 0;
    let mut a = 0;
    while a < k {
        let mut b = 0;
        while b < k {
            let (ai, aj) = index_const(a);
            let (bi, bj) = index_const(b);
            if ai + aj + bi + bj <= order && ai + aj + 1 >= m && bi + bj >= 1 {
                out[n] = [a as u8, b as u8, jet_index(ai + bi, aj + bj) as u8];
                n += 1;
            }
            b += 1;
        }
        a += 1;
    }
    assert!(n == N, "power table length");
    out
}

const P2_2: [[u8; 3]; 4] = power_entries(2, 2);
const P3_2: [[u8; 3]; 16] = power_entries(3, 2);
const P3_3: [[u8; 3]; 6] = power_entries(3, 3);
const P4_2: [[u8; 3]; 41] = power_entries(4, 2);
const P4_3: [[u8; 3]; 23] = power_entries(4, 3);
const P4_4: [[u8; 3]; 8] = power_entries(4, 4);

/// `out = Σ_m a[m] δ^m` where `δ = x - x[0]`; `a` holds at least `order + 1` entries.
pub(crate) fn compose(order: usize, a: &[f64], x: &[f64], out: &mut [f64]) {
    match order {
        0 => out[0] = a[0],
        1 => {
            out[0] = a[0];
            out[1] = a[1] * x[1];
            out[2] = a[1] * x[2];
        }
        2 => compose_fixed::<6>(&[&P2_2], a, x, out),
        3 => compose_fixed::<10>(&[&P3_2, &P3_3], a, x, out),
        _ => compose_fixed::<15>(&[&P4_2, &P4_3, &P4_4], a, x, out),
    }
}

#[inline(always)]
fn compose_fixed<const K: usize>(tables: &[&[[u8; 3]]], a: &[f64], x: &[f64], out: &mut [f64]) {
    let x: &[f64; K] = x[..K].try_into().expect("jet width");
    let out: &mut [f64; K] = (&mut out[..K]).try_into().expect("jet width");
    let mut power = *x;
    power[0] = 0.0;
    out[0] = a[0];
    for i in 1..K {
        out[i] = a[1] * power[i];
    }
    for (j, table) in tables.iter().enumerate() {
        let mut next = [0.0; K];
        for e in table.iter() {
            next[e[2] as usize] += power[e[0] as usize] * x[e[1] as usize];
        }
        for i in 1..K {
            out[i] += a[j + 2] * next[i];
        }
        power = next;
    }
}

/// Adjoint of [`compose`] with respect to the input jet `x`.
///
/// `a` must hold `order + 2` Taylor coefficients so the value channel can be
/// differentiated through `a'(x0)`. The result is written (not accumulated) into `xbar`.
pub(crate) fn compose_adjoint(order: usize, a: &[f64], x: &[f64], g: &[f64], xbar: &mut [f64]) {
    match order {
        0 => xbar[0] = a[1] * g[0],
        1 => {
            xbar[0] = a[1] * g[0] + 2.0 * a[2] * (g[1] * x[1] + g[2] * x[2]);
            xbar[1] = a[1] * g[1];
            xbar[2] = a[1] * g[2];
        }
        2 => adjoint_fixed::<6, 3>(&[&P2_2], a, x, g, xbar),
        3 => adjoint_fixed::<10, 4>(&[&P3_2, &P3_3], a, x, g, xbar),
        _ => adjoint_fixed::<15, 5>(&[&P4_2, &P4_3, &P4_4], a, x, g, xbar),
    }
}

/// `K` coefficients, `M = order + 1` powers of `δ` (index 0 unused).
#[inline(always)]
fn adjoint_fixed<const K: usize, const M: usize>(
    tables: &[&[[u8; 3]]],
    a: &[f64],
    x: &[f64],
    g: &[f64],
    xbar: &mut [f64],
) {
    let x: &[f64; K] = x[..K].try_into().expect("jet width");
    let g: &[f64; K] = g[..K].try_into().expect("jet width");
    let order = M - 1;
    // Powers δ^1..δ^order.
    let mut powers = [[0.0; K]; M];
    powers[1] = *x;
    powers[1][0] = 0.0;
    for (j, table) in tables.iter().enumerate() {
        let m = j + 2;
        let (lo, hi) = powers.split_at_mut(m);
        for e in table.iter() {
            hi[0][e[2] as usize] += lo[m - 1][e[0] as usize] * x[e[1] as usize];
        }
    }
    // Value channel: d/dx0 Σ a_m(x0) <g, δ^m> with a_m' = (m+1) a_{m+1}.
    let mut d0 = a[1] * g[0];
    for m in 1..=order {
        let mut dot = 0.0;
        for i in 1..K {
            dot += g[i] * powers[m][i];
        }
        d0 += (m as f64 + 1.0) * a[m + 1] * dot;
    }
    // Reverse through δ^m = δ^(m-1) · δ.
    let mut gp = [[0.0; K]; M];
    for m in 1..=order {
        for i in 1..K {
            gp[m][i] = a[m] * g[i];
        }
    }
    let mut gdelta = [0.0; K];
    for m in (2..=order).rev() {
        let (lo, hi) = gp.split_at_mut(m);
        for e in tables[m - 2].iter() {
            let gm = hi[0][e[2] as usize];
            lo[m - 1][e[0] as usize] += gm * x[e[1] as usize];
            gdelta[e[1] as usize] += gm * powers[m - 1][e[0] as usize];
        }
    }
    xbar[0] = d0;
    for i in 1..K {
        xbar[i] = gdelta[i] + gp[1][i];
    }
}

// ---------------------------------------------------------------------------
// Lane-batched kernels: the same arithmetic as above on `LANES` jets at once.

const LANES: usize = 8;
type Lanes = [f64; LANES];

#[inline(always)]
fn mul_add(acc: &mut Lanes, a: &Lanes, b: &Lanes) {
    for l in 0..LANES {
        acc[l] += a[l] * b[l];
    }
}

#[inline(always)]
fn compose_lanes<const K: usize>(tables: &[&[[u8; 3]]], a: &[Lanes], x: &[Lanes; K], out: &mut [Lanes; K]) {
    let mut power = *x;
    power[0] = [0.0; LANES];
    out[0] = a[0];
    for i in 1..K {
        for l in 0..LANES {
            out[i][l] = a[1][l] * power[i][l];
        }
    }
    for (j, table) in tables.iter().enumerate() {
        let mut next = [[0.0; LANES]; K];
        for e in table.iter() {
            let (pi, xj) = (power[e[0] as usize], x[e[1] as usize]);
            mul_add(&mut next[e[2] as usize], &pi, &xj);
        }
        for i in 1..K {
            mul_add(&mut out[i], &a[j + 2], &next[i]);
        }
        power = next;
    }
}

#[inline(always)]
fn adjoint_lanes<const K: usize, const M: usize>(
    tables: &[&[[u8; 3]]],
    a: &[Lanes],
    x: &[Lanes; K],
    g: &[Lanes; K],
    xbar: &mut [Lanes; K],
) {
    let order = M - 1;
    let mut powers = [[[0.0; LANES]; K]; M];
    powers[1] = *x;
    powers[1][0] = [0.0; LANES];
    for (j, table) in tables.iter().enumerate() {
        let m = j + 2;
        let (lo, hi) = powers.split_at_mut(m);
        for e in table.iter() {
            let (pi, xj) = (lo[m - 1][e[0] as usize], x[e[1] as usize]);
            mul_add(&mut hi[0][e[2] as usize], &pi, &xj);
        }
    }
    let mut d0 = [0.0; LANES];
    for l in 0..LANES {
        d0[l] = a[1][l] * g[0][l];
    }
    for m in 1..=order {
        let mut dot = [0.0; LANES];
        for i in 1..K {
            mul_add(&mut dot, &g[i], &powers[m][i]);
        }
        for l in 0..LANES {
            d0[l] += (m as f64 + 1.0) * a[m + 1][l] * dot[l];
        }
    }
    let mut gp = [[[0.0; LANES]; K]; M];
    for m in 1..=order {
        for i in 1..K {
            for l in 0..LANES {
                gp[m][i][l] = a[m][l] * g[i][l];
            }
        }
    }
    let mut gdelta = [[0.0; LANES]; K];
    for m in (2..=order).rev() {
        let (lo, hi) = gp.split_at_mut(m);
        for e in tables[m - 2].iter() {
            let gm = hi[0][e[2] as usize];
            let (xj, pi) = (x[e[1] as usize], powers[m - 1][e[0] as usize]);
            mul_add(&mut lo[m - 1][e[0] as usize], &gm, &xj);
            mul_add(&mut gdelta[e[1] as usize], &gm, &pi);
        }
    }
    xbar[0] = d0;
    for i in 1..K {
        for l in 0..LANES {
            xbar[i][l] = gdelta[i][l] + gp[1][i][l];
        }
    }
}

/// Gathers up to `LANES` consecutive jets of width `K` into lane-major form.
#[inline(always)]
fn gather<const K: usize>(src: &[f64], n: usize) -> [Lanes; K] {
    let mut v = [[0.0; LANES]; K];
    for l in 0..n {
        for i in 0..K {
            v[i][l] = src[l * K + i];
        }
    }
    v
}

fn taylor_lanes(
    kind: ActivationKind,
    x: &[Lanes],
    y: Option<&[f64]>,
    n: usize,
    count: usize,
) -> [Lanes; MAX_TAYLOR + 1] {
    let mut a = [[0.0; LANES]; MAX_TAYLOR + 1];
    let mut t = [0.0; MAX_TAYLOR + 1];
    let k = x.len();
    for l in 0..n {
        let z = x[0][l];
        let v = y.map_or_else(|| kind.apply(z), |y| y[l * k]);
        kind.taylor_at(z, v, &mut t[..count]);
        for m in 0..count {
            a[m][l] = t[m];
        }
    }
    a
}

fn activate_many<const K: usize>(tables: &[&[[u8; 3]]], kind: ActivationKind, x: &[f64], out: &mut [f64]) {
    let order = tables.len() + 1;
    for (xs, os) in x.chunks(K * LANES).zip(out.chunks_mut(K * LANES)) {
        let n = xs.len() / K;
        let xl = gather::<K>(xs, n);
        let a = taylor_lanes(kind, &xl, None, n, order + 1);
        let mut ol = [[0.0; LANES]; K];
        compose_lanes::<K>(tables, &a, &xl, &mut ol);
        for l in 0..n {
            for i in 0..K {
                os[l * K + i] = ol[i][l];
            }
        }
    }
}

fn activate_many_adjoint<const K: usize, const M: usize>(
    tables: &[&[[u8; 3]]],
    kind: ActivationKind,
    x: &[f64],
    y: &[f64],
    g: &[f64],
    dx: &mut [f64],
) {
    let w = K * LANES;
    for (((xs, ys), gs), ds) in x.chunks(w).zip(y.chunks(w)).zip(g.chunks(w)).zip(dx.chunks_mut(w)) {
        let n = xs.len() / K;
        let xl = gather::<K>(xs, n);
        let gl = gather::<K>(gs, n);
        let a = taylor_lanes(kind, &xl, Some(ys), n, M + 1);
        let mut bl = [[0.0; LANES]; K];
        adjoint_lanes::<K, M>(tables, &a, &xl, &gl, &mut bl);
        for l in 0..n {
            for i in 0..K {
                ds[l * K + i] += bl[i][l];
            }
        }
    }
}

/// Applies activation `kind` to every jet of the given order stored contiguously in `x`.
pub(crate) fn activate_jets(kind: ActivationKind, order: usize, x: &[f64], out: &mut [f64]) {
    match order {
        0 => out.iter_mut().zip(x).for_each(|(o, v)| *o = kind.apply(*v)),
        1 => {
            let mut a = [0.0; 2];
            for (xb, ob) in x.chunks_exact(3).zip(out.chunks_exact_mut(3)) {
                kind.taylor(xb[0], &mut a);
                compose(1, &a, xb, ob);
            }
        }
        2 => activate_many::<6>(&[&P2_2], kind, x, out),
        3 => activate_many::<10>(&[&P3_2, &P3_3], kind, x, out),
        _ => activate_many::<15>(&[&P4_2, &P4_3, &P4_4], kind, x, out),
    }
}

/// Accumulates the adjoint of [`activate_jets`] into `dx`; `y` holds the forward output.
pub(crate) fn activate_jets_adjoint(
    kind: ActivationKind,
    order: usize,
    x: &[f64],
    y: &[f64],
    g: &[f64],
    dx: &mut [f64],
) {
    match order {
        0 | 1 => {
            let k = coeff_count(order);
            let mut a = [0.0; 3];
            let mut xbar = [0.0; 3];
            for (((xb, yb), gb), db) in
                x.chunks_exact(k).zip(y.chunks_exact(k)).zip(g.chunks_exact(k)).zip(dx.chunks_exact_mut(k))
            {
                kind.taylor_at(xb[0], yb[0], &mut a[..order + 2]);
                compose_adjoint(order, &a, xb, gb, &mut xbar);
                db.iter_mut().zip(&xbar).for_each(|(d, v)| *d += v);
            }
        }
        2 => activate_many_adjoint::<6, 3>(&[&P2_2], kind, x, y, g, dx),
        3 => activate_many_adjoint::<10, 4>(&[&P3_2, &P3_3], kind, x, y, g, dx),
        _ => activate_many_adjoint::<15, 5>(&[&P4_2, &P4_3, &P4_4], kind, x, y, g, dx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn x_jet(p: [f64; 2], order: usize) -> Jet2 {
        Jet2::seed(p, 0, order).unwrap()
    }
    fn y_jet(p: [f64; 2], order: usize) -> Jet2 {
        Jet2::seed(p, 1, order).unwrap()
    }

    #[test]
    fn index_layout_is_graded() {
        assert_eq!(jet_index(0, 0), 0);
        assert_eq!(jet_index(1, 0), 1);
        assert_eq!(jet_index(0, 1), 2);
        assert_eq!(jet_index(2, 2), 12);
        for k in 0..MAX_COEFFS {
            let (i, j) = multi_index(k);
            assert_eq!(jet_index(i, j), k);
        }
        assert_eq!(coeff_count(4), 15);
    }

    #[test]
    fn seeds() {
        let s = Jet2::seed([0.5, 1.0], 0, 2).unwrap();
        assert_eq!(s.coeffs(), &[0.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let s = Jet2::seed([0.0, 0.0], 1, 4).unwrap();
        assert_eq!(s.coeffs().len(), 15);
        assert_eq!(s.coeff(0, 1), 1.0);
        assert_eq!(s.coeffs().iter().filter(|&&c| c != 0.0).count(), 1);
        let s = Jet2::seed([2.0, 3.0], 0, 1).unwrap();
        assert_eq!(s.coeffs(), &[2.0, 1.0, 0.0]);
    }

    #[test]
    fn unsupported_orders_rejected() {
        assert!(Jet2::seed([0.0, 0.0], 0, 3).is_err());
        assert!(Jet2::seed([0.0, 0.0], 0, 0).is_err());
        assert!(Jet2::seed([0.0, 0.0], 2, 1).is_err());
        assert!(Jet2::constant(1.0, 5).is_err());
    }

    #[test]
    fn products() {
        let p = [1.0, 2.0];
        let xy = jet_mul(&x_jet(p, 2), &y_jet(p, 2)).unwrap();
        assert_eq!(xy.value(), 2.0);
        assert_eq!(xy.partial(1, 0), 2.0);
        assert_eq!(xy.partial(0, 1), 1.0);
        assert_eq!(xy.partial(1, 1), 1.0);

        let x2 = x_jet([3.0, 0.0], 2) * x_jet([3.0, 0.0], 2);
        assert_eq!(x2.value(), 9.0);
        assert_eq!(x2.partial(1, 0), 6.0);
        assert_eq!(x2.coeff(2, 0), 1.0);
        assert_eq!(x2.partial(2, 0), 2.0);

        let x2y = x_jet(p, 2) * x_jet(p, 2) * y_jet(p, 2);
        assert_eq!(x2y.partial(1, 1), 2.0);
    }

    #[test]
    fn mismatched_orders_rejected() {
        let a = x_jet([0.0, 0.0], 1);
        let b = x_jet([0.0, 0.0], 2);
        assert!(matches!(jet_mul(&a, &b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn activations_at_known_points() {
        let t = jet_activation(&x_jet([0.0, 0.0], 2), ActivationKind::Tanh);
        assert_eq!(t.value(), 0.0);
        assert_eq!(t.partial(1, 0), 1.0);
        assert_eq!(t.partial(2, 0), 0.0);
        let s = jet_activation(&x_jet([0.0, 0.0], 2), ActivationKind::Sigmoid);
        assert_eq!(s.value(), 0.5);
        assert_eq!(s.partial(1, 0), 0.25);
        let r = jet_activation(&x_jet([-1.0, 0.0], 4), ActivationKind::Relu);
        assert!(r.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn biharmonic_of_monomials() {
        let p = [0.7, -1.3];
        let x = x_jet(p, 4);
        let y = y_jet(p, 4);
        assert_eq!((x * y * y * y).biharmonic(), 0.0);
        assert_relative_eq!((x * x * x * x).biharmonic(), 24.0, epsilon = 1e-12);
        let r2 = x * x + y * y;
        assert_relative_eq!((r2 * r2).biharmonic(), 64.0, epsilon = 1e-11);
    }

    #[test]
    fn trig_jets_match_closed_form() {
        let z = x_jet([0.3, 0.0], 4).scale(2.0);
        let s = z.sin();
        assert_relative_eq!(s.partial(1, 0), 2.0 * (0.6f64).cos(), epsilon = 1e-14);
        assert_relative_eq!(s.partial(4, 0), 16.0 * (0.6f64).sin(), epsilon = 1e-12);
        let c = z.cos();
        assert_relative_eq!(c.partial(3, 0), 8.0 * (0.6f64).sin(), epsilon = 1e-12);
    }

    #[test]
    fn compose_adjoint_matches_finite_differences() {
        for order in [0usize, 1, 2, 4] {
            let k = coeff_count(order);
            let x: Vec<f64> = (0..k).map(|i| 0.3 - 0.17 * i as f64 + 0.05 * (i * i) as f64).collect();
            let g: Vec<f64> = (0..k).map(|i| 0.7 + 0.11 * i as f64).collect();
            let objective = |x: &[f64]| -> f64 {
                let mut a = [0.0; MAX_TAYLOR + 1];
                ActivationKind::Tanh.taylor(x[0], &mut a[..=order]);
                let mut out = [0.0; MAX_COEFFS];
                compose(order, &a, x, &mut out);
                (0..k).map(|i| g[i] * out[i]).sum()
            };
            let mut a = [0.0; MAX_TAYLOR + 1];
            ActivationKind::Tanh.taylor(x[0], &mut a[..=order + 1]);
            let mut xbar = vec![0.0; k];
            compose_adjoint(order, &a, &x, &g, &mut xbar);
            for i in 0..k {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (objective(&xp) - objective(&xm)) / (2.0 * h);
                assert!(
                    (fd - xbar[i]).abs() < 1e-8 * (1.0 + fd.abs()),
                    "order {order} coeff {i}: fd {fd} vs {}",
                    xbar[i]
                );
            }
        }
    }

    fn poly(order: usize, coeffs: &[f64], p: [f64; 2]) -> Jet2 {
        // Σ c_k x^i y^j over the graded monomials of total degree <= 4.
        let x = Jet2::seed_unchecked(p[0], 0, order);
        let y = Jet2::seed_unchecked(p[1], 1, order);
        let mut acc = Jet2::constant_unchecked(0.0, order);
        for (k, &c) in coeffs.iter().enumerate() {
            let (i, j) = multi_index(k);
            let mut term = Jet2::constant_unchecked(c, order);
            for _ in 0..i {
                term = term * x;
            }
            for _ in 0..j {
                term = term * y;
            }
            acc += term;
        }
        acc
    }

    proptest! {
        #[test]
        fn jets_are_linear(a in prop::array::uniform15(-2.0f64..2.0),
                           b in prop::array::uniform15(-2.0f64..2.0),
                           px in -1.0f64..1.0, py in -1.0f64..1.0) {
            let p = [px, py];
            let sum = poly(4, &a, p) + poly(4, &b, p);
            let ab: Vec<f64> = a.iter().zip(b.iter()).map(|(u, v)| u + v).collect();
            let direct = poly(4, &ab, p);
            for k in 0..MAX_COEFFS {
                prop_assert!((sum.coeffs()[k] - direct.coeffs()[k]).abs() <= 1e-12 * (1.0 + direct.coeffs()[k].abs()));
            }
        }

        #[test]
        fn quartic_polynomials_are_exact(c in prop::array::uniform15(-2.0f64..2.0),
                                         px in -1.5f64..1.5, py in -1.5f64..1.5) {
            // Expanding about p must reproduce the polynomial exactly at p + (dx, dy).
            let jet = poly(4, &c, [px, py]);
            let (dx, dy): (f64, f64) = (0.37, -0.21);
            let mut via_taylor = 0.0;
            for k in 0..MAX_COEFFS {
                let (i, j) = multi_index(k);
                via_taylor += jet.coeffs()[k] * dx.powi(i as i32) * dy.powi(j as i32);
            }
            let direct = poly(4, &c, [px + dx, py + dy]).value();
            prop_assert!((via_taylor - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn lane_kernels_match_single_jet_kernels() {
        for kind in [ActivationKind::Tanh, ActivationKind::Sigmoid] {
            for order in 0..=MAX_ORDER {
                let k = coeff_count(order);
                let n = 13;
                let x: Vec<f64> = (0..n * k).map(|i| ((i * 37 % 17) as f64 - 8.0) / 9.0).collect();
                let g: Vec<f64> = (0..n * k).map(|i| ((i * 11 % 7) as f64 - 3.0) / 5.0).collect();
                let mut out = vec![0.0; n * k];
                activate_jets(kind, order, &x, &mut out);
                let mut dx = vec![0.0; n * k];
                activate_jets_adjoint(kind, order, &x, &out, &g, &mut dx);
                for p in 0..n {
                    let xs = &x[p * k..(p + 1) * k];
                    let mut a = [0.0; MAX_TAYLOR + 1];
                    kind.taylor(xs[0], &mut a[..order + 2]);
                    let mut o = [0.0; MAX_COEFFS];
                    compose(order, &a, xs, &mut o);
                    let mut xb = [0.0; MAX_COEFFS];
                    compose_adjoint(order, &a, xs, &g[p * k..(p + 1) * k], &mut xb);
                    assert_eq!(&out[p * k..(p + 1) * k], &o[..k], "{kind} order {order} forward");
                    assert_eq!(&dx[p * k..(p + 1) * k], &xb[..k], "{kind} order {order} adjoint");
                }
            }
        }
    }
}
