//! Sparse multivariate polynomials over two variable blocks.
//!
//! Every polynomial lives in a [`Space`]: `nx` variables of the X block
//! followed by `ny` variables of the Y block. Exponent vectors are laid out
//! in that order. A polynomial "over Y" is one whose space has `nx == 0`
//! (and symmetrically for X).
//!
//! Monomials are ordered graded-lexicographically: total degree first, and
//! within a degree the monomial with the larger exponent in the earliest
//! variable comes first, so the degree-one monomials are listed
//! `y1, y2, ...`. This order is used for every basis in the crate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with magnitude below this are dropped after arithmetic.
pub const DROP_TOL: f64 = 1e-14;

/// Exponent vector of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    /// The monomial `v_i` in `n` variables.
    pub fn var(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Degree restricted to the variables `range`.
    pub fn partial_degree(&self, range: std::ops::Range<usize>) -> u32 {
        self.0[range].iter().sum()
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .map(|(&e, &v)| if e == 0 { 1.0 } else { v.powi(e as i32) })
            .product()
    }

    /// `|a|! / (a_1! ... a_n!)`.
    pub fn multinomial(&self) -> f64 {
        // Build it as a product of binomials to stay exact for the small
        // degrees seen here.
        let mut total = 0u32;
        let mut acc = 1.0;
        for &e in &self.0 {
            for k in 1..=e {
                total += 1;
                acc *= total as f64 / k as f64;
            }
        }
        acc
    }

    /// Sub-vector for a contiguous range of variables.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Monomial {
        Monomial(self.0[range].to_vec())
    }

    /// Concatenate two exponent vectors.
    pub fn concat(&self, other: &Monomial) -> Monomial {
        let mut e = self.0.clone();
        e.extend_from_slice(&other.0);
        Monomial(e)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Variable block selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    X,
    Y,
}

/// Variable layout: `nx` X-variables followed by `ny` Y-variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Space {
    pub nx: usize,
    pub ny: usize,
}

impl Space {
    pub fn new(nx: usize, ny: usize) -> Self {
        Space { nx, ny }
    }

    pub fn x_only(nx: usize) -> Self {
        Space { nx, ny: 0 }
    }

    pub fn y_only(ny: usize) -> Self {
        Space { nx: 0, ny }
    }

    pub fn nvars(&self) -> usize {
        self.nx + self.ny
    }

    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        match block {
            Block::X => 0..self.nx,
            Block::Y => self.nx..self.nx + self.ny,
        }
    }

    pub fn block_len(&self, block: Block) -> usize {
        match block {
            Block::X => self.nx,
            Block::Y => self.ny,
        }
    }
}

/// Sparse polynomial with real coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolynomialRepr", into = "PolynomialRepr")]
pub struct Polynomial {
    space: Space,
    terms: BTreeMap<Monomial, f64>,
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    nx: usize,
    ny: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl From<Polynomial> for PolynomialRepr {
    fn from(p: Polynomial) -> Self {
        PolynomialRepr {
            nx: p.space.nx,
            ny: p.space.ny,
            terms: p.terms.into_iter().map(|(m, c)| (m.0, c)).collect(),
        }
    }
}

impl TryFrom<PolynomialRepr> for Polynomial {
    type Error = Error;

    fn try_from(r: PolynomialRepr) -> Result<Self> {
        Polynomial::from_terms(Space::new(r.nx, r.ny), r.terms)
    }
}

impl Polynomial {
    pub fn zero(space: Space) -> Self {
        Polynomial {
            space,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: Space, c: f64) -> Self {
        let mut p = Polynomial::zero(space);
        p.add_term(Monomial::one(space.nvars()), c);
        p
    }

    /// The variable with global index `i` (X block first).
    pub fn var(space: Space, i: usize) -> Self {
        let mut p = Polynomial::zero(space);
        p.add_term(Monomial::var(space.nvars(), i), 1.0);
        p
    }

    pub fn x(space: Space, i: usize) -> Self {
        Polynomial::var(space, i)
    }

    pub fn y(space: Space, i: usize) -> Self {
        Polynomial::var(space, space.nx + i)
    }

    /// Build from `(exponents, coefficient)` pairs; repeated monomials are
    /// summed.
    pub fn from_terms<I>(space: Space, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(space);
        for (e, c) in terms {
            if e.len() != space.nvars() {
                return Err(Error::DimensionMismatch {
                    expected: space.nvars(),
                    got: e.len(),
                });
            }
            p.add_term(Monomial(e), c);
        }
        Ok(p)
    }

    pub fn from_monomials<I>(space: Space, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(space);
        for (m, c) in terms {
            assert_eq!(m.nvars(), space.nvars(), "monomial length");
            p.add_term(m, c);
        }
        p
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                if c.abs() >= DROP_TOL {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().abs() < DROP_TOL {
                    o.remove();
                }
            }
        }
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    /// Maximal degree in one block; `None` for the zero polynomial.
    pub fn block_degree(&self, block: Block) -> Option<u32> {
        let range = self.space.range(block);
        self.terms
            .keys()
            .map(|m| m.partial_degree(range.clone()))
            .max()
    }

    pub fn deg_x(&self) -> u32 {
        self.block_degree(Block::X).unwrap_or(0)
    }

    pub fn deg_y(&self) -> u32 {
        self.block_degree(Block::Y).unwrap_or(0)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                got: point.len(),
            });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(point)).sum())
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::from_monomials(
            self.space,
            self.terms.iter().map(|(m, c)| (m.clone(), c * s)),
        )
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.space, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// `max_a |c_a| / multinomial(|a|, a)`.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c.abs() / m.multinomial())
            .fold(0.0, f64::max)
    }

    /// Sum of the terms whose degree in `block` is maximal.
    pub fn highest_degree_form(&self, block: Block) -> Polynomial {
        let Some(d) = self.block_degree(block) else {
            return self.clone();
        };
        let range = self.space.range(block);
        Polynomial::from_monomials(
            self.space,
            self.terms
                .iter()
                .filter(|(m, _)| m.partial_degree(range.clone()) == d)
                .map(|(m, &c)| (m.clone(), c)),
        )
    }

    /// Homogenize in the Y block with a new variable `y0` inserted as the
    /// first Y variable. The result is homogeneous of degree `deg_y` in
    /// `(y0, y)` and equals `self` at `y0 = 1`.
    pub fn homogenize_y(&self) -> Result<Polynomial> {
        if self.space.ny == 0 {
            return Err(Error::InvalidArgument(
                "cannot homogenize an empty Y block".into(),
            ));
        }
        let d = self.deg_y();
        let space = Space::new(self.space.nx, self.space.ny + 1);
        let nx = self.space.nx;
        Ok(Polynomial::from_monomials(
            space,
            self.terms.iter().map(|(m, &c)| {
                let e = m.exponents();
                let dy = m.partial_degree(nx..nx + self.space.ny);
                let mut ext = Vec::with_capacity(space.nvars());
                ext.extend_from_slice(&e[..nx]);
                ext.push(d - dy);
                ext.extend_from_slice(&e[nx..]);
                (Monomial(ext), c)
            }),
        ))
    }

    /// Substitute `value` for the variable with global index `idx` and drop
    /// it from the space. `idx` must be in the Y block when `block == Y`.
    pub fn fix_variable(&self, block: Block, idx_in_block: usize, value: f64) -> Polynomial {
        let global = self.space.range(block).start + idx_in_block;
        let space = match block {
            Block::X => Space::new(self.space.nx - 1, self.space.ny),
            Block::Y => Space::new(self.space.nx, self.space.ny - 1),
        };
        Polynomial::from_monomials(
            space,
            self.terms.iter().map(|(m, &c)| {
                let mut e = m.exponents().to_vec();
                let k = e.remove(global);
                (Monomial(e), c * value.powi(k as i32))
            }),
        )
    }

    /// Substitute values for one whole block; the result lives in the space
    /// of the remaining block only.
    pub fn eval_block(&self, block: Block, values: &[f64]) -> Result<Polynomial> {
        let range = self.space.range(block);
        if values.len() != range.len() {
            return Err(Error::DimensionMismatch {
                expected: range.len(),
                got: values.len(),
            });
        }
        let (space, keep) = match block {
            Block::X => (Space::y_only(self.space.ny), self.space.range(Block::Y)),
            Block::Y => (Space::x_only(self.space.nx), self.space.range(Block::X)),
        };
        Ok(Polynomial::from_monomials(
            space,
            self.terms.iter().map(|(m, &c)| {
                let v = m.slice(range.clone()).eval(values);
                (m.slice(keep.clone()), c * v)
            }),
        ))
    }

    /// Group terms by their monomial in `block`: `self = sum_b b * coeff_b`
    /// where each `coeff_b` lives in the other block's own space.
    pub fn split_by_block(&self, block: Block) -> BTreeMap<Monomial, Polynomial> {
        let range = self.space.range(block);
        let (other_space, other) = match block {
            Block::X => (Space::y_only(self.space.ny), self.space.range(Block::Y)),
            Block::Y => (Space::x_only(self.space.nx), self.space.range(Block::X)),
        };
        let mut out: BTreeMap<Monomial, Polynomial> = BTreeMap::new();
        for (m, &c) in &self.terms {
            out.entry(m.slice(range.clone()))
                .or_insert_with(|| Polynomial::zero(other_space))
                .add_term(m.slice(other.clone()), c);
        }
        out
    }

    /// Re-express a polynomial in a larger space by placing its variables at
    /// the start of the X block (`Block::X`) or of the Y block (`Block::Y`).
    pub fn embed(&self, target: Space, block: Block) -> Polynomial {
        let n = self.nvars();
        let offset = target.range(block).start;
        assert!(offset + n <= target.nvars());
        Polynomial::from_monomials(
            target,
            self.terms.iter().map(|(m, &c)| {
                let mut e = vec![0; target.nvars()];
                e[offset..offset + n].copy_from_slice(m.exponents());
                (Monomial(e), c)
            }),
        )
    }

    /// Substitute polynomials for every variable: `self(subs[0], subs[1], ...)`.
    /// All substitutes must share one space, which becomes the result's space.
    pub fn compose(&self, subs: &[Polynomial]) -> Result<Polynomial> {
        if subs.len() != self.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                got: subs.len(),
            });
        }
        let Some(first) = subs.first() else {
            return Ok(self.clone());
        };
        let target = first.space;
        if subs.iter().any(|s| s.space != target) {
            return Err(Error::InvalidArgument(
                "substitutes must share one variable space".into(),
            ));
        }
        // Cache powers of each substitute.
        let mut powers: Vec<Vec<Polynomial>> = subs
            .iter()
            .map(|s| vec![Polynomial::constant(target, 1.0), s.clone()])
            .collect();
        let mut out = Polynomial::zero(target);
        for (m, &c) in &self.terms {
            let mut term = Polynomial::constant(target, c);
            for (i, &e) in m.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap() * &subs[i];
                    powers[i].push(next);
                }
                term = &term * &powers[i][e as usize];
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Partial derivative with respect to the variable with global index `i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        Polynomial::from_monomials(
            self.space,
            self.terms.iter().filter_map(|(m, &c)| {
                let k = m.exponents()[i];
                (k > 0).then(|| {
                    let mut e = m.exponents().to_vec();
                    e[i] -= 1;
                    (Monomial(e), c * k as f64)
                })
            }),
        )
    }

    /// Substitute `x_i -> s * x_i` for every X variable.
    pub fn scale_block(&self, block: Block, s: f64) -> Polynomial {
        let range = self.space.range(block);
        Polynomial::from_monomials(
            self.space,
            self.terms.iter().map(|(m, &c)| {
                (
                    m.clone(),
                    c * s.powi(m.partial_degree(range.clone()) as i32),
                )
            }),
        )
    }

    /// Largest coefficient difference between two polynomials in one space.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        (self - other).max_abs_coeff()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names: Vec<String> = (0..self.space.nx)
            .map(|i| format!("x{}", i + 1))
            .chain((0..self.space.ny).map(|i| format!("y{}", i + 1)))
            .collect();
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " {} ", if *c < 0.0 { "-" } else { "+" })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            let mut factors: Vec<String> = Vec::new();
            for (i, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(names[i].clone()),
                    _ => factors.push(format!("{}^{}", names[i], e)),
                }
            }
            let a = c.abs();
            if factors.is_empty() {
                write!(f, "{a}")?;
            } else if a == 1.0 {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{a}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.space, rhs.space, "polynomial spaces differ");
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.space, rhs.space, "polynomial spaces differ");
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.space, rhs.space, "polynomial spaces differ");
        let mut acc: HashMap<Monomial, f64> = HashMap::new();
        for (a, &ca) in &self.terms {
            for (b, &cb) in &rhs.terms {
                *acc.entry(a.mul(b)).or_insert(0.0) += ca * cb;
            }
        }
        Polynomial::from_monomials(self.space, acc)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Add for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}

impl Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

/// All monomials in `n` variables of degree at most `k`, in graded lex order.
pub fn monomial_basis(n: usize, k: u32) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(basis_len(n, k));
    for d in 0..=k {
        let mut cur = vec![0u32; n];
        fill_degree(&mut cur, 0, d, &mut out);
    }
    out
}

fn fill_degree(cur: &mut Vec<u32>, pos: usize, rem: u32, out: &mut Vec<Monomial>) {
    let n = cur.len();
    if n == 0 {
        if rem == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = rem;
        out.push(Monomial(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for e in (0..=rem).rev() {
        cur[pos] = e;
        fill_degree(cur, pos + 1, rem - e, out);
    }
    cur[pos] = 0;
}

/// `binom(n + k, k)`, the number of monomials of degree at most `k`.
pub fn basis_len(n: usize, k: u32) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (n as u128 + i) / i;
    }
    acc as usize
}

/// Lookup table from monomial to its position in a basis.
#[derive(Clone, Debug)]
pub struct MonomialIndex {
    basis: Vec<Monomial>,
    position: HashMap<Monomial, usize>,
}

impl MonomialIndex {
    pub fn new(basis: Vec<Monomial>) -> Self {
        let position = basis
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialIndex { basis, position }
    }

    pub fn up_to(n: usize, k: u32) -> Self {
        MonomialIndex::new(monomial_basis(n, k))
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn get(&self, m: &Monomial) -> Option<usize> {
        self.position.get(m).copied()
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }
}

/// `sum_i (x_i / tau)^(2r)` over `m` X-variables.
pub fn perturbation_polynomial(m: usize, r: u32, tau: f64) -> Result<Polynomial> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bound tau must be positive, got {tau}"
        )));
    }
    let space = Space::x_only(m);
    let c = tau.powi(-2 * r as i32);
    Ok(Polynomial::from_monomials(
        space,
        (0..m).map(|i| {
            let mut e = vec![0; m];
            e[i] = 2 * r;
            (Monomial(e), c)
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example2_p() -> Polynomial {
        // -x1^2 - 2 y2 x1 x2 - y1 x2^2 - x1 - x2
        Polynomial::from_terms(
            Space::new(2, 2),
            vec![
                (vec![2, 0, 0, 0], -1.0),
                (vec![1, 1, 0, 1], -2.0),
                (vec![0, 2, 1, 0], -1.0),
                (vec![1, 0, 0, 0], -1.0),
                (vec![0, 1, 0, 0], -1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluate_example2() {
        let p = example2_p();
        let v = p.evaluate(&[-0.5, 0.0, 1.0, 0.0]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let one = Polynomial::constant(Space::new(1, 1), 1.0);
        assert_eq!(one.evaluate(&[3.0, -2.0]).unwrap(), 1.0);
        let s = Space::new(1, 1);
        let xy = &Polynomial::x(s, 0) * &Polynomial::y(s, 0);
        assert_eq!(xy.evaluate(&[2.0, 3.0]).unwrap(), 6.0);
        assert!(matches!(
            p.evaluate(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 4,
                got: 1
            })
        ));
    }

    #[test]
    fn block_degrees() {
        let p = example2_p();
        assert_eq!(p.block_degree(Block::X), Some(2));
        assert_eq!(p.block_degree(Block::Y), Some(1));
        let c = Polynomial::constant(Space::new(2, 2), 5.0);
        assert_eq!(c.block_degree(Block::X), Some(0));
        assert_eq!(c.block_degree(Block::Y), Some(0));
        assert_eq!(
            Polynomial::zero(Space::new(1, 1)).block_degree(Block::X),
            None
        );
    }

    #[test]
    fn homogenize_interval_generator() {
        let s = Space::y_only(1);
        let g = Polynomial::from_terms(s, vec![(vec![0], 1.0), (vec![2], -1.0)]).unwrap();
        let h = g.homogenize_y().unwrap();
        let want = Polynomial::from_terms(
            Space::y_only(2),
            vec![(vec![2, 0], 1.0), (vec![0, 2], -1.0)],
        )
        .unwrap();
        assert_eq!(h, want);
    }

    #[test]
    fn homogenize_example2() {
        let h = example2_p().homogenize_y().unwrap();
        // -x1^2 y0 - 2 y2 x1 x2 - y1 x2^2 - x1 y0 - x2 y0
        let want = Polynomial::from_terms(
            Space::new(2, 3),
            vec![
                (vec![2, 0, 1, 0, 0], -1.0),
                (vec![1, 1, 0, 0, 1], -2.0),
                (vec![0, 2, 0, 1, 0], -1.0),
                (vec![1, 0, 1, 0, 0], -1.0),
                (vec![0, 1, 1, 0, 0], -1.0),
            ],
        )
        .unwrap();
        assert_eq!(h, want);
    }

    #[test]
    fn homogenize_homogeneous_is_identity_up_to_y0() {
        let s = Space::y_only(2);
        let g = Polynomial::from_terms(s, vec![(vec![2, 0], 1.0), (vec![1, 1], -3.0)]).unwrap();
        let h = g.homogenize_y().unwrap();
        assert!(h.terms().all(|(m, _)| m.exponents()[0] == 0));
        assert_eq!(h.fix_variable(Block::Y, 0, 1.0), g);
        assert!(Polynomial::constant(Space::x_only(1), 1.0)
            .homogenize_y()
            .is_err());
    }

    #[test]
    fn highest_degree_forms() {
        let s = Space::y_only(2);
        let g = Polynomial::from_terms(s, vec![(vec![1, 0], 1.0), (vec![0, 2], -1.0)]).unwrap();
        let want = Polynomial::from_terms(s, vec![(vec![0, 2], -1.0)]).unwrap();
        assert_eq!(g.highest_degree_form(Block::Y), want);
        let s1 = Space::y_only(1);
        let g1 = Polynomial::from_terms(s1, vec![(vec![0], 1.0), (vec![2], -1.0)]).unwrap();
        assert_eq!(
            g1.highest_degree_form(Block::Y),
            Polynomial::from_terms(s1, vec![(vec![2], -1.0)]).unwrap()
        );
        assert_eq!(want.highest_degree_form(Block::Y), want);
    }

    #[test]
    fn coefficient_norms() {
        let s = Space::y_only(2);
        let a = Polynomial::from_terms(s, vec![(vec![2, 1], 3.0)]).unwrap();
        assert!((a.coefficient_norm() - 1.0).abs() < 1e-15);
        assert_eq!(Polynomial::constant(s, -2.5).coefficient_norm(), 2.5);
        let b = &Polynomial::y(s, 0) + &Polynomial::y(s, 1);
        assert_eq!(b.coefficient_norm(), 1.0);
    }

    #[test]
    fn basis_sizes_and_order() {
        let b = monomial_basis(2, 1);
        assert_eq!(
            b,
            vec![
                Monomial::new(vec![0, 0]),
                Monomial::new(vec![1, 0]),
                Monomial::new(vec![0, 1])
            ]
        );
        assert_eq!(monomial_basis(2, 2).len(), 6);
        assert_eq!(monomial_basis(3, 2).len(), 10);
        assert_eq!(basis_len(3, 2), 10);
    }

    #[test]
    fn perturbation_polynomials() {
        let t = perturbation_polynomial(1, 1, 1.0).unwrap();
        assert_eq!(
            t,
            Polynomial::from_terms(Space::x_only(1), vec![(vec![2], 1.0)]).unwrap()
        );
        let t = perturbation_polynomial(2, 2, 2.0).unwrap();
        assert_eq!(
            t,
            Polynomial::from_terms(
                Space::x_only(2),
                vec![(vec![4, 0], 1.0 / 16.0), (vec![0, 4], 1.0 / 16.0)]
            )
            .unwrap()
        );
        assert!((t.evaluate(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(perturbation_polynomial(2, 1, 0.0).is_err());
        assert!(perturbation_polynomial(2, 1, -1.0).is_err());
    }

    #[test]
    fn compose_rotation() {
        // x^2 + y^2 composed with a rotation by a fixed unit vector stays put
        let s = Space::x_only(2);
        let r = Polynomial::from_terms(s, vec![(vec![2, 0], 1.0), (vec![0, 2], 1.0)]).unwrap();
        let (c, d) = (0.6, 0.8);
        let u = &Polynomial::x(s, 0).scale(c) - &Polynomial::x(s, 1).scale(d);
        let v = &Polynomial::x(s, 0).scale(d) + &Polynomial::x(s, 1).scale(c);
        let comp = r.compose(&[u, v]).unwrap();
        assert!(comp.max_coeff_diff(&r) < 1e-14);
    }

    #[test]
    fn drop_threshold() {
        let s = Space::x_only(1);
        let a = Polynomial::x(s, 0);
        let b = a.scale(1.0 + 1e-16);
        assert!((&a - &b).is_zero());
    }

    fn arb_poly(n: usize) -> impl Strategy<Value = Polynomial> {
        proptest::collection::vec((proptest::collection::vec(0u32..4, n), -5.0f64..5.0), 0..8)
            .prop_map(move |t| Polynomial::from_terms(Space::new(1, n - 1), t).unwrap())
    }

    proptest! {
        #[test]
        fn homogenize_roundtrip(p in arb_poly(3)) {
            let h = p.homogenize_y().unwrap();
            let d = p.deg_y();
            let nx = h.space().nx;
            for (m, _) in h.terms() {
                prop_assert_eq!(m.partial_degree(nx..h.nvars()), d);
            }
            let back = h.fix_variable(Block::Y, 0, 1.0);
            prop_assert!(back.max_coeff_diff(&p) <= 1e-12);
        }

        #[test]
        fn basis_strictly_increasing(n in 1usize..4, k in 0u32..5) {
            let b = monomial_basis(n, k);
            prop_assert_eq!(b.len(), basis_len(n, k));
            for w in b.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn norm_absolutely_homogeneous(p in arb_poly(2), c in -4.0f64..4.0) {
            let lhs = p.scale(c).coefficient_norm();
            let rhs = c.abs() * p.coefficient_norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }
    }
}
