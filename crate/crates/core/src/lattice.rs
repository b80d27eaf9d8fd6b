//! Lattice indices, period lattices, periodic configurations and shifts.
//!
//! A [`PeriodLattice`] fixes integer periods `(p_j, q_j)` and thereby the space
//! of configurations with `x_{i + p_j} = x_i - q_j`. Such a configuration is
//! stored by its values on the fundamental domain `B_p = p([0,1)^d) ∩ Z^d`;
//! every other value is recovered through the periodic extension.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational number used for periods, rotation vectors and shift levels.
pub type Rational = Ratio<i64>;

/// A point of `Z^d`.
pub type Index = Vec<i64>;

/// Default tolerance separating `=` from `<` on floating configuration data.
pub const DEFAULT_ORDER_TOL: f64 = 1e-12;

/// `||i|| = Σ |i_k|`.
pub fn norm1(i: &[i64]) -> i64 {
    i.iter().map(|v| v.abs()).sum()
}

fn add(a: &[i64], b: &[i64]) -> Index {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// All `k ∈ Z^d` with `||k|| <= r`, ordered by norm and, within a shell, by
/// descending lexicographic order (so `+e_1` precedes `-e_1`). The origin is
/// always first.
pub fn ball(d: usize, r: usize) -> Vec<Index> {
    let r = r as i64;
    let mut out = Vec::new();
    let mut cur = vec![-r; d];
    loop {
        if norm1(&cur) <= r {
            out.push(cur.clone());
        }
        let mut axis = 0;
        loop {
            if axis == d {
                out.sort_by(|a, b| norm1(a).cmp(&norm1(b)).then_with(|| b.cmp(a)));
                return out;
            }
            cur[axis] += 1;
            if cur[axis] > r {
                cur[axis] = -r;
                axis += 1;
            } else {
                break;
            }
        }
    }
}

/// Rational inverse of a row-major integer matrix by Gauss-Jordan elimination.
fn rational_inverse(m: &[i64], d: usize) -> Option<Vec<Rational>> {
    let mut a: Vec<Rational> = m.iter().map(|&v| Rational::from_integer(v)).collect();
    let mut inv: Vec<Rational> = (0..d * d)
        .map(|k| Rational::from_integer(if k / d == k % d { 1 } else { 0 }))
        .collect();
    for col in 0..d {
        let pivot = (col..d).find(|&r| !a[r * d + col].is_zero())?;
        if pivot != col {
            for c in 0..d {
                a.swap(pivot * d + c, col * d + c);
                inv.swap(pivot * d + c, col * d + c);
            }
        }
        let pv = a[col * d + col];
        for c in 0..d {
            a[col * d + c] /= pv;
            inv[col * d + c] /= pv;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = a[r * d + col];
            if f.is_zero() {
                continue;
            }
            for c in 0..d {
                let ac = a[col * d + c];
                let ic = inv[col * d + c];
                a[r * d + c] -= f * ac;
                inv[r * d + c] -= f * ic;
            }
        }
    }
    Some(inv)
}

fn determinant(m: &[i64], d: usize) -> i64 {
    // Bareiss fraction-free elimination.
    let mut a: Vec<i128> = m.iter().map(|&v| v as i128).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..d {
        if a[k * d + k] == 0 {
            match (k + 1..d).find(|&r| a[r * d + k] != 0) {
                Some(r) => {
                    for c in 0..d {
                        a.swap(k * d + c, r * d + c);
                    }
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..d {
            for j in k + 1..d {
                a[i * d + j] = (a[i * d + j] * a[k * d + k] - a[i * d + k] * a[k * d + j]) / prev;
            }
        }
        prev = a[k * d + k];
    }
    (sign * a[(d - 1) * d + (d - 1)]) as i64
}

struct LatticeData {
    d: usize,
    /// Row-major `d×d`; column `j` is the period vector `p_j`.
    p: Vec<i64>,
    q: Vec<i64>,
    det: i64,
    p_inv: Vec<Rational>,
    omega: Vec<Rational>,
    omega_f64: Vec<f64>,
    domain: Vec<Index>,
    lookup: HashMap<Index, usize>,
    origin: usize,
}

/// Period data `(p, q)` of the configuration space `X_{p,q}`.
#[derive(Clone)]
pub struct PeriodLattice {
    inner: Arc<LatticeData>,
}

impl fmt::Debug for PeriodLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodLattice")
            .field("d", &self.inner.d)
            .field("p", &self.inner.p)
            .field("q", &self.inner.q)
            .finish()
    }
}

impl PartialEq for PeriodLattice {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.d == other.inner.d
                && self.inner.p == other.inner.p
                && self.inner.q == other.inner.q)
    }
}

impl PeriodLattice {
    /// Builds the lattice from a row-major `d×d` period matrix (columns are
    /// the periods `p_j`) and the vertical offsets `q`.
    pub fn new(d: usize, p_row_major: Vec<i64>, q: Vec<i64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("d must be positive".into()));
        }
        if p_row_major.len() != d * d || q.len() != d {
            return Err(Error::Dimension(format!(
                "expected {} period entries and {} offsets, got {} and {}",
                d * d,
                d,
                p_row_major.len(),
                q.len()
            )));
        }
        let det = determinant(&p_row_major, d);
        if det == 0 {
            return Err(Error::SingularPeriods);
        }
        let p_inv = rational_inverse(&p_row_major, d).ok_or(Error::SingularPeriods)?;
        // omega = -p^{-T} q
        let omega: Vec<Rational> = (0..d)
            .map(|r| {
                let mut acc = Rational::zero();
                for c in 0..d {
                    acc -= p_inv[c * d + r] * q[c];
                }
                acc
            })
            .collect();
        let omega_f64 = omega.iter().map(|w| w.to_f64().unwrap()).collect();

        // Bounding box of the half-open parallelepiped.
        let mut lo = vec![0i64; d];
        let mut hi = vec![0i64; d];
        for r in 0..d {
            for c in 0..d {
                let v = p_row_major[r * d + c];
                if v < 0 {
                    lo[r] += v;
                } else {
                    hi[r] += v;
                }
            }
        }
        let mut domain = Vec::new();
        let mut cur = lo.clone();
        'scan: loop {
            let inside = (0..d).all(|r| {
                let mut acc = Rational::zero();
                for c in 0..d {
                    acc += p_inv[r * d + c] * cur[c];
                }
                acc >= Rational::zero() && acc < Rational::from_integer(1)
            });
            if inside {
                domain.push(cur.clone());
            }
            let mut axis = 0;
            loop {
                if axis == d {
                    break 'scan;
                }
                cur[axis] += 1;
                if cur[axis] > hi[axis] {
                    cur[axis] = lo[axis];
                    axis += 1;
                } else {
                    break;
                }
            }
        }
        domain.sort();
        debug_assert_eq!(domain.len() as i64, det.abs());
        let lookup: HashMap<Index, usize> =
            domain.iter().enumerate().map(|(k, i)| (i.clone(), k)).collect();
        let origin = lookup[&vec![0i64; d]];
        Ok(PeriodLattice {
            inner: Arc::new(LatticeData {
                d,
                p: p_row_major,
                q,
                det,
                p_inv,
                omega,
                omega_f64,
                domain,
                lookup,
                origin,
            }),
        })
    }

    /// One-dimensional lattice `x_{i+p} = x_i - q`.
    pub fn one_dim(p: i64, q: i64) -> Result<Self> {
        Self::new(1, vec![p], vec![q])
    }

    /// Lattice whose rotation number is the reduced fraction `num/den` (d = 1).
    pub fn from_fraction(num: i64, den: i64) -> Result<Self> {
        if den <= 0 {
            return Err(Error::InvalidArgument("denominator must be positive".into()));
        }
        let g = num_integer_gcd(num.abs(), den);
        Self::one_dim(den / g, -num / g)
    }

    /// Diagonal periods `p = diag(p_1..p_d)`.
    pub fn diagonal(p: &[i64], q: &[i64]) -> Result<Self> {
        let d = p.len();
        let mut m = vec![0; d * d];
        for (k, &v) in p.iter().enumerate() {
            m[k * d + k] = v;
        }
        Self::new(d, m, q.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.inner.d
    }

    /// Row-major period matrix.
    pub fn p(&self) -> &[i64] {
        &self.inner.p
    }

    pub fn q(&self) -> &[i64] {
        &self.inner.q
    }

    pub fn det(&self) -> i64 {
        self.inner.det
    }

    /// Number of degrees of freedom `|B_p| = |det p|`.
    pub fn size(&self) -> usize {
        self.inner.domain.len()
    }

    /// The fundamental domain `B_p`, sorted lexicographically. Configuration
    /// values are stored in this order.
    pub fn fundamental_domain(&self) -> &[Index] {
        &self.inner.domain
    }

    /// Position of the origin inside the fundamental domain.
    pub fn origin(&self) -> usize {
        self.inner.origin
    }

    /// Exact rotation vector `ω = -p^{-T} q`.
    pub fn rotation_vector(&self) -> &[Rational] {
        &self.inner.omega
    }

    pub fn rotation_vector_f64(&self) -> &[f64] {
        &self.inner.omega_f64
    }

    /// Exact `⟨ω, k⟩ + l`.
    pub fn level(&self, k: &[i64], l: i64) -> Rational {
        let mut acc = Rational::from_integer(l);
        for (w, &kk) in self.inner.omega.iter().zip(k) {
            acc += *w * kk;
        }
        acc
    }

    /// Column `j` of the period matrix.
    pub fn period(&self, j: usize) -> Index {
        let d = self.inner.d;
        (0..d).map(|r| self.inner.p[r * d + j]).collect()
    }

    /// Canonical decomposition `i = k + p·m` with `k ∈ B_p`; returns the
    /// domain position of `k` and the integer vector `m`.
    pub fn decompose(&self, i: &[i64]) -> (usize, Index) {
        let d = self.inner.d;
        let m: Index = (0..d)
            .map(|r| {
                let mut acc = Rational::zero();
                for c in 0..d {
                    acc += self.inner.p_inv[r * d + c] * i[c];
                }
                acc.floor().to_integer()
            })
            .collect();
        let k: Index = (0..d)
            .map(|r| i[r] - (0..d).map(|c| self.inner.p[r * d + c] * m[c]).sum::<i64>())
            .collect();
        let pos = *self
            .inner
            .lookup
            .get(&k)
            .expect("canonical representative lies in the fundamental domain");
        (pos, m)
    }

    /// Decomposition as `(domain position, additive offset)` so that
    /// `x_i = values[pos] + offset`.
    pub fn fold(&self, i: &[i64]) -> (usize, f64) {
        let (pos, m) = self.decompose(i);
        let shift: i64 = self.inner.q.iter().zip(&m).map(|(q, m)| q * m).sum();
        (pos, -(shift as f64))
    }

    /// Whether `(k, l)` lies in the period group `J_{p,q}` generated by the
    /// `(p_j, q_j)`.
    pub fn in_period_group(&self, k: &[i64], l: i64) -> bool {
        let d = self.inner.d;
        let mut m = Vec::with_capacity(d);
        for r in 0..d {
            let mut acc = Rational::zero();
            for c in 0..d {
                acc += self.inner.p_inv[r * d + c] * k[c];
            }
            if !acc.is_integer() {
                return false;
            }
            m.push(acc.to_integer());
        }
        let lq: i64 = self.inner.q.iter().zip(&m).map(|(q, m)| q * m).sum();
        lq == l
    }

    /// Representatives of `(Z^d × Z)/J_{p,q}` with level in `[0, 1)`, sorted by
    /// level. The level-0 identity class comes first.
    pub fn shift_classes(&self) -> Vec<ShiftClass> {
        let mut out: Vec<ShiftClass> = self
            .inner
            .domain
            .iter()
            .map(|k| {
                let base = self.level(k, 0);
                let l = -base.floor().to_integer();
                ShiftClass { k: k.clone(), l, level: base + Rational::from_integer(l) }
            })
            .collect();
        out.sort_by(|a, b| a.level.cmp(&b.level).then_with(|| norm1(&a.k).cmp(&norm1(&b.k))));
        out
    }

    /// True when the periods are principal, i.e. they generate every `(k,l)`
    /// with `⟨ω,k⟩ + l = 0`; equivalently all shift-class levels are distinct.
    pub fn is_principal(&self) -> bool {
        let classes = self.shift_classes();
        classes.windows(2).all(|w| w[0].level != w[1].level)
    }

    /// The lattice `(n p, n q)`; configurations of `self` embed into it.
    pub fn refine(&self, n: i64) -> Result<Self> {
        Self::new(
            self.inner.d,
            self.inner.p.iter().map(|v| v * n).collect(),
            self.inner.q.iter().map(|v| v * n).collect(),
        )
    }

    /// Diameter `max_{k ∈ B_p} ||k||`.
    pub fn domain_radius(&self) -> usize {
        self.inner.domain.iter().map(|k| norm1(k)).max().unwrap_or(0) as usize
    }

    /// Representatives of `Z^d / H_ω` inside `B_p`, where
    /// `H_ω = {i : ⟨ω,i⟩ ∈ Z}`: the first domain point of each level class.
    pub fn quotient_representatives(&self) -> Vec<usize> {
        let mut seen: Vec<Rational> = Vec::new();
        let mut reps = Vec::new();
        for (pos, k) in self.inner.domain.iter().enumerate() {
            let lv = self.level(k, 0);
            let frac = lv - lv.floor();
            if !seen.contains(&frac) {
                seen.push(frac);
                reps.push(pos);
            }
        }
        reps
    }
}

fn num_integer_gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Representative `(k, l)` of a class of `(Z^d × Z)/J_{p,q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftClass {
    pub k: Index,
    pub l: i64,
    /// Exact `⟨ω,k⟩ + l ∈ [0, 1)`.
    pub level: Rational,
}

impl ShiftClass {
    pub fn level_f64(&self) -> f64 {
        self.level.to_f64().unwrap()
    }
}

/// Values of a configuration on the ball `B_j^r`, in [`Stencil`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub center: Index,
    pub radius: usize,
    pub values: Vec<f64>,
}

/// Ordered offsets `{o : ||o|| <= r}` of a window; the centre is entry 0.
#[derive(Clone, Debug)]
pub struct Stencil {
    d: usize,
    radius: usize,
    offsets: Vec<Index>,
    lookup: HashMap<Index, usize>,
    neighbors: Vec<usize>,
}

impl Stencil {
    pub fn new(d: usize, radius: usize) -> Self {
        let offsets = ball(d, radius);
        let lookup = offsets.iter().enumerate().map(|(k, o)| (o.clone(), k)).collect();
        let neighbors = offsets
            .iter()
            .enumerate()
            .filter(|(_, o)| norm1(o) == 1)
            .map(|(k, _)| k)
            .collect();
        Stencil { d, radius, offsets, lookup, neighbors }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[Index] {
        &self.offsets
    }

    pub fn position(&self, offset: &[i64]) -> Option<usize> {
        self.lookup.get(offset).copied()
    }

    /// Stencil entries at distance one from the centre.
    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }
}

/// Result of comparing two configurations, read as "x REL y".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderRelation {
    /// `x ≪ y`: strictly below at every site.
    StrictlyBelow,
    /// `x < y`: `x ≤ y` and `x ≠ y`.
    Below,
    Equal,
    Above,
    StrictlyAbove,
    Crossing,
}

impl OrderRelation {
    pub fn is_le(self) -> bool {
        matches!(self, Self::StrictlyBelow | Self::Below | Self::Equal)
    }

    pub fn is_ge(self) -> bool {
        matches!(self, Self::StrictlyAbove | Self::Above | Self::Equal)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::StrictlyBelow => "<<",
            Self::Below => "<",
            Self::Equal => "=",
            Self::Above => ">",
            Self::StrictlyAbove => ">>",
            Self::Crossing => "crossing",
        }
    }
}

/// Classifies the sign pattern of `y - x` given as differences.
pub fn classify_differences(diff: impl Iterator<Item = f64>, tol: f64) -> OrderRelation {
    let (mut pos, mut neg, mut zero) = (false, false, false);
    for v in diff {
        if v > tol {
            pos = true;
        } else if v < -tol {
            neg = true;
        } else {
            zero = true;
        }
    }
    match (pos, neg, zero) {
        (true, true, _) => OrderRelation::Crossing,
        (true, false, false) => OrderRelation::StrictlyBelow,
        (true, false, true) => OrderRelation::Below,
        (false, true, false) => OrderRelation::StrictlyAbove,
        (false, true, true) => OrderRelation::Above,
        (false, false, _) => OrderRelation::Equal,
    }
}

/// A periodic configuration: values on `B_p` plus the period data.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    lattice: PeriodLattice,
    values: Vec<f64>,
}

impl Configuration {
    pub fn new(lattice: PeriodLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.size() {
            return Err(Error::Dimension(format!(
                "expected {} values on the fundamental domain, got {}",
                lattice.size(),
                values.len()
            )));
        }
        Ok(Configuration { lattice, values })
    }

    /// The linear configuration `x^{ω,ξ}_i = ξ + ⟨ω, i⟩`.
    pub fn linear(lattice: &PeriodLattice, xi: f64) -> Self {
        let omega = lattice.rotation_vector_f64();
        let values = lattice
            .fundamental_domain()
            .iter()
            .map(|i| xi + i.iter().zip(omega).map(|(&a, w)| a as f64 * w).sum::<f64>())
            .collect();
        Configuration { lattice: lattice.clone(), values }
    }

    pub fn lattice(&self) -> &PeriodLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `x_0`, the coordinate used to parametrize ordered families.
    pub fn x0(&self) -> f64 {
        self.values[self.lattice.origin()]
    }

    /// `x_i` through the periodic extension.
    pub fn value_at(&self, i: &[i64]) -> f64 {
        let (pos, off) = self.lattice.fold(i);
        self.values[pos] + off
    }

    /// `(τ_{k,l} x)_i = x_{i+k} + l`, re-expressed on `B_p`.
    pub fn shift(&self, k: &[i64], l: i64) -> Self {
        let values = self
            .lattice
            .fundamental_domain()
            .iter()
            .map(|i| self.value_at(&add(i, k)) + l as f64)
            .collect();
        Configuration { lattice: self.lattice.clone(), values }
    }

    /// `x + c` at every site.
    pub fn offset(&self, c: f64) -> Self {
        Configuration {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    pub fn window(&self, center: &[i64], stencil: &Stencil) -> Window {
        Window {
            center: center.to_vec(),
            radius: stencil.radius(),
            values: stencil.offsets().iter().map(|o| self.value_at(&add(center, o))).collect(),
        }
    }

    /// The same configuration seen as an element of `X_{np,nq}`.
    pub fn refine(&self, n: i64) -> Result<Self> {
        let fine = self.lattice.refine(n)?;
        let values = fine.fundamental_domain().iter().map(|i| self.value_at(i)).collect();
        Configuration::new(fine, values)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }

    /// Pointwise minimum and maximum.
    pub fn min_max(&self, other: &Self) -> Result<(Self, Self)> {
        self.check_same(other)?;
        let lo = self.values.iter().zip(&other.values).map(|(a, b)| a.min(*b)).collect();
        let hi = self.values.iter().zip(&other.values).map(|(a, b)| a.max(*b)).collect();
        Ok((
            Configuration { lattice: self.lattice.clone(), values: lo },
            Configuration { lattice: self.lattice.clone(), values: hi },
        ))
    }

    /// `(1-s) x + s y`.
    pub fn lerp(&self, other: &Self, s: f64) -> Result<Self> {
        self.check_same(other)?;
        Ok(Configuration {
            lattice: self.lattice.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * (b - a)).collect(),
        })
    }

    /// `max_{B_p} |x - y|`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Order relation of `x` relative to `y` (exhaustive over `B_p`).
pub fn compare(x: &Configuration, y: &Configuration) -> Result<OrderRelation> {
    compare_with_tol(x, y, DEFAULT_ORDER_TOL)
}

pub fn compare_with_tol(x: &Configuration, y: &Configuration, tol: f64) -> Result<OrderRelation> {
    x.check_same(y)?;
    Ok(classify_differences(x.values.iter().zip(&y.values).map(|(a, b)| b - a), tol))
}

/// Outcome of [`is_birkhoff`].
#[derive(Clone, Debug)]
pub struct BirkhoffReport {
    pub birkhoff: bool,
    /// First `(k, l)` with `τ_{k,l} x` crossing `x`.
    pub witness: Option<(Index, i64)>,
    /// Whether every tested nonzero level had the sign predicted by the level.
    pub sign_consistent: bool,
    pub sign_witness: Option<(Index, i64)>,
    /// `max |x_i - x_0 - ⟨ω,i⟩|` over the box `[-2,2]^d`.
    pub max_deviation: f64,
}

/// Checks that no translate `τ_{k,l} x` with `||k|| <= shift_radius` crosses `x`.
///
/// The `l` range covers `|l| <= R(1 + max|ω_j|) + 1` and is widened to every
/// `l` for which a crossing is arithmetically possible, so the verdict is
/// conclusive for each tested `k`.
pub fn is_birkhoff(x: &Configuration, shift_radius: usize) -> Result<BirkhoffReport> {
    is_birkhoff_with_tol(x, shift_radius, DEFAULT_ORDER_TOL)
}

pub fn is_birkhoff_with_tol(x: &Configuration, shift_radius: usize, tol: f64) -> Result<BirkhoffReport> {
    if shift_radius == 0 {
        return Err(Error::InvalidArgument("shift_radius must be at least 1".into()));
    }
    let lat = x.lattice();
    let d = lat.dim();
    let omega = lat.rotation_vector_f64();
    let wmax = omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let base_l = (shift_radius as f64 * (1.0 + wmax)).floor() as i64 + 1;

    let origin_val = x.x0();
    let mut max_deviation = 0.0f64;
    for i in ball(d, 2 * d).into_iter().filter(|i| i.iter().all(|v| v.abs() <= 2)) {
        let lin: f64 = i.iter().zip(omega).map(|(&a, w)| a as f64 * w).sum();
        max_deviation = max_deviation.max((x.value_at(&i) - origin_val - lin).abs());
    }

    let mut report = BirkhoffReport {
        birkhoff: true,
        witness: None,
        sign_consistent: true,
        sign_witness: None,
        max_deviation,
    };
    for k in ball(d, shift_radius) {
        let diffs: Vec<f64> = lat
            .fundamental_domain()
            .iter()
            .enumerate()
            .map(|(a, i)| x.value_at(&add(i, &k)) - x.values[a])
            .collect();
        let dmin = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let dmax = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lim = base_l.max((-dmin).ceil() as i64 + 1).max(dmax.ceil() as i64 + 1);
        let ls = std::iter::once(0).chain((1..=lim).flat_map(|v| [v, -v]));
        for l in ls {
            let lf = l as f64;
            let crossing = dmin + lf < -tol && dmax + lf > tol;
            if crossing && report.witness.is_none() {
                report.birkhoff = false;
                report.witness = Some((k.clone(), l));
            }
            let level = lat.level(&k, l);
            let wrong_sign = (level > Rational::zero() && dmin + lf < -tol)
                || (level < Rational::zero() && dmax + lf > tol);
            if wrong_sign && report.sign_witness.is_none() {
                report.sign_consistent = false;
                report.sign_witness = Some((k.clone(), l));
            }
        }
    }
    Ok(report)
}

/// Truncated exponentially weighted distance with an analytic tail bound.
#[derive(Clone, Copy, Debug)]
pub struct WeightedNorm {
    pub truncated: f64,
    pub tail_bound: f64,
}

/// Number of points of `Z^d` with `||i|| = s`.
fn shell_count(d: usize, s: usize) -> f64 {
    if s == 0 {
        return 1.0;
    }
    let binom = |n: usize, k: usize| -> f64 {
        if k > n {
            return 0.0;
        }
        (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
    };
    (1..=d.min(s)).map(|k| 2f64.powi(k as i32) * binom(d, k) * binom(s - 1, k - 1)).sum()
}

/// `Σ_{||i||<=R} |x_i - y_i| / 2^{||i||}` plus a bound on the omitted tail.
///
/// Both configurations share the periods, so `x - y` is periodic and bounded
/// by its maximum over `B_p`.
pub fn weighted_norm_difference(x: &Configuration, y: &Configuration, radius: usize) -> Result<WeightedNorm> {
    x.check_same(y)?;
    let d = x.lattice().dim();
    let truncated = ball(d, radius)
        .iter()
        .map(|i| (x.value_at(i) - y.value_at(i)).abs() / 2f64.powi(norm1(i) as i32))
        .sum();
    let sup = x.sup_distance(y);
    let mut tail = 0.0;
    let mut s = radius + 1;
    loop {
        let term = shell_count(d, s) / 2f64.powi(s as i32);
        tail += term;
        if term < 1e-18 * tail.max(1e-300) || s > radius + 4000 {
            break;
        }
        s += 1;
    }
    Ok(WeightedNorm { truncated, tail_bound: sup * tail })
}

/// JSON form `{d, p, q, values}` with `p` row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigurationRecord {
    pub d: usize,
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    pub values: Vec<f64>,
}

impl From<&Configuration> for ConfigurationRecord {
    fn from(c: &Configuration) -> Self {
        ConfigurationRecord {
            d: c.lattice.dim(),
            p: c.lattice.p().to_vec(),
            q: c.lattice.q().to_vec(),
            values: c.values.clone(),
        }
    }
}

impl TryFrom<ConfigurationRecord> for Configuration {
    type Error = Error;

    fn try_from(r: ConfigurationRecord) -> Result<Self> {
        let lat = PeriodLattice::new(r.d, r.p, r.q)?;
        Configuration::new(lat, r.values)
    }
}

/// Continued-fraction convergents `num/den` of a positive real, in order.
pub fn convergents(x: f64, count: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity(count);
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..count {
        let a = r.floor();
        let ai = a as i64;
        let h = ai * h1 + h0;
        let k = ai * k1 + k0;
        out.push((h, k));
        h0 = h1;
        h1 = h;
        k0 = k1;
        k1 = k;
        let frac = r - a;
        if frac.abs() < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    out
}

/// Signed fraction helper used by report code: `|a|` as f64.
pub fn rational_abs_f64(r: &Rational) -> f64 {
    r.abs().to_f64().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn fundamental_domain_small_cases() {
        let l = PeriodLattice::one_dim(2, -1).unwrap();
        assert_eq!(l.fundamental_domain(), &[vec![0], vec![1]]);
        let l = PeriodLattice::diagonal(&[1, 1], &[0, 0]).unwrap();
        assert_eq!(l.fundamental_domain(), &[vec![0, 0]]);
    }

    #[test]
    fn fundamental_domain_diag_2_3_matches_bruteforce() {
        let l = PeriodLattice::diagonal(&[2, 3], &[-1, -2]).unwrap();
        // brute force: points of a box with p^{-1} i in [0,1)^2
        let mut expect = Vec::new();
        for a in -5..=5i64 {
            for b in -5..=5i64 {
                let (u, v) = (a as f64 / 2.0, b as f64 / 3.0);
                if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                    expect.push(vec![a, b]);
                }
            }
        }
        assert_eq!(l.fundamental_domain(), expect.as_slice());
        assert_eq!(l.size(), 6);
    }

    #[test]
    fn skewed_lattice_has_det_many_points() {
        let l = PeriodLattice::new(2, vec![2, 1, -1, 3], vec![0, 1]).unwrap();
        assert_eq!(l.size(), 7);
        // every index has exactly one representative
        for a in -6..6 {
            for b in -6..6 {
                let (pos, m) = l.decompose(&[a, b]);
                let k = &l.fundamental_domain()[pos];
                let back: Vec<i64> = (0..2).map(|rr| k[rr] + l.p()[rr * 2] * m[0] + l.p()[rr * 2 + 1] * m[1]).collect();
                assert_eq!(back, vec![a, b]);
            }
        }
    }

    #[test]
    fn singular_periods_rejected() {
        assert!(matches!(PeriodLattice::new(2, vec![1, 2, 2, 4], vec![0, 0]), Err(Error::SingularPeriods)));
    }

    #[test]
    fn rotation_vectors() {
        assert_eq!(PeriodLattice::one_dim(2, -1).unwrap().rotation_vector(), &[r(1, 2)]);
        assert_eq!(PeriodLattice::diagonal(&[1, 1], &[0, 0]).unwrap().rotation_vector(), &[r(0, 1), r(0, 1)]);
        let l = PeriodLattice::diagonal(&[2, 3], &[-1, -2]).unwrap();
        assert_eq!(l.rotation_vector(), &[r(1, 2), r(2, 3)]);
        for j in 0..2 {
            assert_eq!(l.level(&l.period(j), l.q()[j]), Rational::zero());
        }
    }

    #[test]
    fn value_at_periodic_extension() {
        let l = PeriodLattice::one_dim(2, -1).unwrap();
        let x = Configuration::new(l, vec![0.1, 0.6]).unwrap();
        assert!((x.value_at(&[2]) - 1.1).abs() < 1e-15);
        assert!((x.value_at(&[-1]) - (-0.4)).abs() < 1e-15);
    }

    #[test]
    fn linear_configuration_closed_form() {
        let l = PeriodLattice::new(2, vec![2, 1, 0, 3], vec![-1, -2]).unwrap();
        let w = l.rotation_vector_f64().to_vec();
        let x = Configuration::linear(&l, 0.3);
        for a in -2..=2 {
            for b in -2..=2 {
                let expect = 0.3 + w[0] * a as f64 + w[1] * b as f64;
                assert!((x.value_at(&[a, b]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shifts() {
        let l = PeriodLattice::one_dim(3, -1).unwrap();
        let x = Configuration::new(l.clone(), vec![0.0, 0.2, 0.9]).unwrap();
        assert_eq!(x.shift(&[0], 0), x);
        let up = x.shift(&[0], 1);
        for (a, b) in up.values().iter().zip(x.values()) {
            assert!((a - b - 1.0).abs() < 1e-15);
        }
        let lin = Configuration::linear(&l, 0.25);
        let moved = lin.shift(&[1], 0);
        let expect = Configuration::linear(&l, 0.25 + 1.0 / 3.0);
        assert!(moved.sup_distance(&expect) < 1e-14);
    }

    #[test]
    fn comparisons() {
        let l = PeriodLattice::one_dim(2, 0).unwrap();
        let x = Configuration::new(l.clone(), vec![0.0, 10.0]).unwrap();
        assert_eq!(compare(&x, &x.offset(1.0)).unwrap(), OrderRelation::StrictlyBelow);
        assert_eq!(compare(&x, &x).unwrap(), OrderRelation::Equal);
        let y = Configuration::new(l, vec![1.0, 1.0]).unwrap();
        assert_eq!(compare(&x, &y).unwrap(), OrderRelation::Crossing);
        let other = Configuration::linear(&PeriodLattice::one_dim(1, 0).unwrap(), 0.0);
        assert!(matches!(compare(&x, &other), Err(Error::LatticeMismatch)));
    }

    #[test]
    fn birkhoff_checks() {
        let l = PeriodLattice::one_dim(2, -1).unwrap();
        let lin = Configuration::linear(&l, 0.37);
        let rep = is_birkhoff(&lin, 3).unwrap();
        assert!(rep.birkhoff && rep.sign_consistent);
        assert!(rep.max_deviation < 1e-12);

        let bad = Configuration::new(l, vec![0.0, 10.0]).unwrap();
        let rep = is_birkhoff(&bad, 1).unwrap();
        assert!(!rep.birkhoff);
        assert_eq!(rep.witness, Some((vec![1], 0)));
    }

    #[test]
    fn shift_class_enumeration() {
        let c = PeriodLattice::one_dim(1, 0).unwrap().shift_classes();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].level, Rational::zero());

        let c = PeriodLattice::one_dim(2, -1).unwrap().shift_classes();
        assert_eq!(c.iter().map(|s| (s.k.clone(), s.l)).collect::<Vec<_>>(), vec![(vec![0], 0), (vec![1], 0)]);
        assert_eq!(c.iter().map(|s| s.level).collect::<Vec<_>>(), vec![r(0, 1), r(1, 2)]);

        let c = PeriodLattice::one_dim(3, -1).unwrap().shift_classes();
        assert_eq!(c.iter().map(|s| s.level).collect::<Vec<_>>(), vec![r(0, 1), r(1, 3), r(2, 3)]);
    }

    #[test]
    fn shift_classes_reduce_a_box_of_pairs() {
        // brute force: every (k,l) in a box is J-equivalent to exactly one class
        for (p, q) in [(2, -1), (3, -1), (5, -2), (4, 0)] {
            let lat = PeriodLattice::one_dim(p, q).unwrap();
            let classes = lat.shift_classes();
            for k in -7..=7i64 {
                for l in -4..=4i64 {
                    let hits = classes
                        .iter()
                        .filter(|c| {
                            let lv = lat.level(&[k], l) - c.level;
                            lv.is_integer() && lat.in_period_group(&[k - c.k[0]], l - c.l - lv.to_integer())
                        })
                        .count();
                    assert_eq!(hits, 1, "p={p} q={q} k={k} l={l}");
                }
            }
        }
    }

    #[test]
    fn principal_periods() {
        assert!(PeriodLattice::one_dim(2, -1).unwrap().is_principal());
        assert!(!PeriodLattice::one_dim(2, 0).unwrap().is_principal());
        assert!(!PeriodLattice::one_dim(4, -2).unwrap().is_principal());
    }

    #[test]
    fn weighted_norm() {
        let l = PeriodLattice::one_dim(2, -1).unwrap();
        let x = Configuration::linear(&l, 0.0);
        let w = weighted_norm_difference(&x, &x, 10).unwrap();
        assert_eq!(w.truncated, 0.0);
        assert_eq!(w.tail_bound, 0.0);
        let y = x.offset(1.0);
        let w = weighted_norm_difference(&x, &y, 40).unwrap();
        assert!((w.truncated - 3.0).abs() < 1e-10);
        let w5 = weighted_norm_difference(&x, &y, 5).unwrap();
        assert!(w5.truncated + w5.tail_bound >= 3.0 - 1e-12);
        assert!((w5.truncated + w5.tail_bound - 3.0).abs() < 1e-12);
    }

    #[test]
    fn continued_fraction_convergents_of_golden_mean() {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let c = convergents(g, 7);
        assert_eq!(c, vec![(0, 1), (1, 1), (1, 2), (2, 3), (3, 5), (5, 8), (8, 13)]);
    }

    #[test]
    fn ball_ordering() {
        assert_eq!(ball(1, 1), vec![vec![0], vec![1], vec![-1]]);
        assert_eq!(ball(2, 1).len(), 5);
        assert_eq!(ball(2, 2).len(), 13);
        assert_eq!(shell_count(2, 3), 12.0);
        assert_eq!(shell_count(3, 1), 6.0);
    }
}
