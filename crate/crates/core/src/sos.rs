//! Sum-of-squares certificates posed as SDP feasibility problems.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{monomial_basis, Monomial, Polynomial, Space, DROP_TOL};
use crate::sdp::{self, LinearTerms, SdpProblem, Sense, Settings, SolveReport, Status, VarRef};

/// Largest tolerated reconstruction error of a returned certificate,
/// relative to `max(1, max |coefficient|)` of the target.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Smallest tolerated Gram eigenvalue.
pub const GRAM_PSD_TOL: f64 = 1e-8;

/// `h = b(x)' G b(x)` with `b` the monomial basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "CertRepr", try_from = "CertRepr")]
pub struct SosCertificate {
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
    pub residual: f64,
}

#[derive(Serialize, Deserialize)]
struct CertRepr {
    basis: Vec<Monomial>,
    /// Row `i` holds `gram[i][0..=i]`.
    gram_lower: Vec<Vec<f64>>,
    residual: f64,
}

impl From<SosCertificate> for CertRepr {
    fn from(c: SosCertificate) -> Self {
        let gram_lower = (0..c.basis.len())
            .map(|i| (0..=i).map(|j| c.gram[(i, j)]).collect())
            .collect();
        CertRepr {
            basis: c.basis,
            gram_lower,
            residual: c.residual,
        }
    }
}

impl TryFrom<CertRepr> for SosCertificate {
    type Error = Error;

    fn try_from(r: CertRepr) -> Result<Self> {
        let n = r.basis.len();
        if r.gram_lower.len() != n
            || r.gram_lower
                .iter()
                .enumerate()
                .any(|(i, row)| row.len() != i + 1)
        {
            return Err(Error::InvalidArgument(
                "gram_lower must be lower-triangular rows matching the basis".into(),
            ));
        }
        let gram = DMatrix::from_fn(n, n, |i, j| {
            if j <= i {
                r.gram_lower[i][j]
            } else {
                r.gram_lower[j][i]
            }
        });
        Ok(SosCertificate {
            basis: r.basis,
            gram,
            residual: r.residual,
        })
    }
}

impl SosCertificate {
    /// `b' G b` as a polynomial in `space`.
    pub fn reconstruct(&self, space: Space) -> Polynomial {
        let mut terms = Vec::new();
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                terms.push((a.mul(b), self.gram[(i, j)]));
            }
        }
        Polynomial::from_monomials(space, terms)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.gram)
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        let b: Vec<f64> = self.basis.iter().map(|m| m.eval(point)).collect();
        let mut acc = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                acc += b[i] * self.gram[(i, j)] * b[j];
            }
        }
        acc
    }
}

/// `psi = sum_j g_j sigma_j` with `g_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModuleCertificate {
    pub generators: Vec<Polynomial>,
    pub multipliers: Vec<SosCertificate>,
    pub order: u32,
    pub residual: f64,
}

impl QuadraticModuleCertificate {
    pub fn reconstruct(&self) -> Polynomial {
        let space = self.generators[0].space();
        self.generators
            .iter()
            .zip(&self.multipliers)
            .fold(Polynomial::zero(space), |acc, (g, s)| {
                &acc + &(g * &s.reconstruct(space))
            })
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (g, s) in self.generators.iter().zip(&self.multipliers) {
            acc += g.evaluate(point)? * s.evaluate(point);
        }
        Ok(acc)
    }
}

/// Outcome of a certificate search at a fixed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum Certified<C> {
    Feasible {
        certificate: C,
    },
    /// The backend certified the SDP infeasible at this order. This says
    /// nothing about higher orders.
    Infeasible,
}

impl<C> Certified<C> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Certified::Feasible { .. })
    }

    pub fn certificate(&self) -> Option<&C> {
        match self {
            Certified::Feasible { certificate } => Some(certificate),
            Certified::Infeasible => None,
        }
    }
}

/// Accumulates coefficient-matching equalities `lhs_m = rhs_m`, one per
/// monomial.
#[derive(Default)]
pub(crate) struct Matcher {
    rows: BTreeMap<Monomial, (LinearTerms, f64)>,
}

impl Matcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, m: &Monomial, v: VarRef, c: f64) {
        self.rows.entry(m.clone()).or_default().0.push((v, c));
    }

    pub fn add_rhs(&mut self, m: &Monomial, c: f64) {
        self.rows.entry(m.clone()).or_default().1 += c;
    }

    pub fn add_poly_rhs(&mut self, p: &Polynomial, scale: f64) {
        for (m, c) in p.terms() {
            self.add_rhs(m, scale * c);
        }
    }

    /// Add `g * b' Q b` to the left-hand side for a fresh PSD block `Q`
    /// indexed by `basis`. Returns the block index.
    pub fn add_gram(
        &mut self,
        prob: &mut SdpProblem,
        name: impl Into<String>,
        basis: &[Monomial],
        g: &Polynomial,
    ) -> usize {
        let block = prob.add_psd_block(name, basis.len());
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate().skip(i) {
                let ab = a.mul(b);
                let mult = if i == j { 1.0 } else { 2.0 };
                for (gm, gc) in g.terms() {
                    self.add_var(&gm.mul(&ab), VarRef::entry(block, i, j), mult * gc);
                }
            }
        }
        block
    }

    /// Emit one equality per monomial. Rows with no variables and a
    /// negligible right-hand side are dropped.
    pub fn finish(self, prob: &mut SdpProblem) {
        for (_, (terms, rhs)) in self.rows {
            if terms.is_empty() && rhs.abs() <= DROP_TOL {
                continue;
            }
            prob.add_equality(terms, rhs);
        }
    }
}

pub(crate) fn gram_of(report: &SolveReport, block: usize) -> DMatrix<f64> {
    let mut g = report.block_values[block].clone();
    linalg::symmetrize(&mut g);
    g
}

/// Solve, mapping statuses the way every certificate search needs: usable
/// solution, certified infeasibility, or an error.
pub(crate) fn solve_checked(prob: &SdpProblem, settings: &Settings) -> Result<Option<SolveReport>> {
    let rep = sdp::solve(prob, settings)?;
    match rep.status {
        Status::Optimal | Status::Inaccurate => Ok(Some(rep)),
        Status::Infeasible => Ok(None),
        s => Err(Error::Solver(format!(
            "backend returned {s:?}{}",
            rep.message.map(|m| format!(": {m}")).unwrap_or_default()
        ))),
    }
}

fn residual_bound(target: &Polynomial) -> f64 {
    RESIDUAL_TOL * target.max_abs_coeff().max(1.0)
}

fn check_certificate(residual: f64, grams: &[&DMatrix<f64>], target: &Polynomial) -> Result<()> {
    if residual > residual_bound(target) {
        return Err(Error::Solver(format!(
            "certificate reconstruction error {residual:e} exceeds tolerance"
        )));
    }
    for g in grams {
        let e = linalg::min_eigenvalue(g);
        if e < -GRAM_PSD_TOL * g.amax().max(1.0) {
            return Err(Error::Solver(format!("Gram matrix has eigenvalue {e:e}")));
        }
    }
    Ok(())
}

fn ceil_half(d: u32) -> u32 {
    d.div_ceil(2)
}

/// Search for a Gram representation of `h` over all monomials of degree at
/// most `half_degree`.
pub fn sos_decompose(h: &Polynomial, half_degree: u32) -> Result<Certified<SosCertificate>> {
    sos_decompose_with(h, half_degree, &Settings::default())
}

pub fn sos_decompose_with(
    h: &Polynomial,
    half_degree: u32,
    settings: &Settings,
) -> Result<Certified<SosCertificate>> {
    let d = h.degree().unwrap_or(0);
    if d > 2 * half_degree {
        return Err(Error::OrderTooSmall {
            need: ceil_half(d),
            have: half_degree,
        });
    }
    let space = h.space();
    let basis = monomial_basis(space.nvars(), half_degree);
    let mut prob = SdpProblem::new(Sense::Min);
    let mut matcher = Matcher::new();
    let one = Polynomial::constant(space, 1.0);
    let block = matcher.add_gram(&mut prob, "Q", &basis, &one);
    matcher.add_poly_rhs(h, 1.0);
    matcher.finish(&mut prob);
    let Some(rep) = solve_checked(&prob, settings)? else {
        return Ok(Certified::Infeasible);
    };
    let gram = gram_of(&rep, block);
    let mut cert = SosCertificate {
        basis,
        gram,
        residual: 0.0,
    };
    cert.residual = cert.reconstruct(space).max_coeff_diff(h);
    check_certificate(cert.residual, &[&cert.gram], h)?;
    Ok(Certified::Feasible { certificate: cert })
}

/// Search for `psi = sigma_0 + sum_j g_j sigma_j` with
/// `deg(g_j sigma_j) <= 2t`.
pub fn qmodule_membership(
    psi: &Polynomial,
    generators: &[Polynomial],
    t: u32,
) -> Result<Certified<QuadraticModuleCertificate>> {
    qmodule_membership_with(psi, generators, t, &Settings::default())
}

pub fn qmodule_membership_with(
    psi: &Polynomial,
    generators: &[Polynomial],
    t: u32,
    settings: &Settings,
) -> Result<Certified<QuadraticModuleCertificate>> {
    let space = psi.space();
    let dpsi = psi.degree().unwrap_or(0);
    if dpsi > 2 * t {
        return Err(Error::OrderTooSmall {
            need: ceil_half(dpsi),
            have: t,
        });
    }
    let mut gens = vec![Polynomial::constant(space, 1.0)];
    for g in generators {
        if g.space() != space {
            return Err(Error::DimensionMismatch {
                expected: space.nvars(),
                got: g.nvars(),
            });
        }
        let dg = g.degree().unwrap_or(0);
        if dg > 2 * t {
            return Err(Error::OrderTooSmall {
                need: ceil_half(dg),
                have: t,
            });
        }
        gens.push(g.clone());
    }
    let mut prob = SdpProblem::new(Sense::Min);
    let mut matcher = Matcher::new();
    let mut blocks = Vec::new();
    for (j, g) in gens.iter().enumerate() {
        let k = t - ceil_half(g.degree().unwrap_or(0));
        let basis = monomial_basis(space.nvars(), k);
        let b = matcher.add_gram(&mut prob, format!("sigma{j}"), &basis, g);
        blocks.push((b, basis));
    }
    matcher.add_poly_rhs(psi, 1.0);
    matcher.finish(&mut prob);
    let Some(rep) = solve_checked(&prob, settings)? else {
        return Ok(Certified::Infeasible);
    };
    let multipliers: Vec<SosCertificate> = blocks
        .into_iter()
        .map(|(b, basis)| {
            // Per-multiplier residuals are not meaningful; the module
            // certificate carries the reconstruction error.
            SosCertificate {
                basis,
                gram: gram_of(&rep, b),
                residual: 0.0,
            }
        })
        .collect();
    let mut cert = QuadraticModuleCertificate {
        generators: gens,
        multipliers,
        order: t,
        residual: 0.0,
    };
    cert.residual = cert.reconstruct().max_coeff_diff(psi);
    let grams: Vec<&DMatrix<f64>> = cert.multipliers.iter().map(|m| &m.gram).collect();
    check_certificate(cert.residual, &grams, psi)?;
    Ok(Certified::Feasible { certificate: cert })
}

/// Exact representation `psi = sigma_0 + (1 - y^2) sigma_1` for a
/// univariate polynomial on `[-1, 1]`.
pub fn interval_certificate(
    psi: &Polynomial,
    t: u32,
) -> Result<Certified<QuadraticModuleCertificate>> {
    if psi.nvars() != 1 {
        return Err(Error::InvalidArgument(format!(
            "interval certificates need a univariate polynomial, got {} variables",
            psi.nvars()
        )));
    }
    let space = psi.space();
    let y = Polynomial::var(space, 0);
    let g = &Polynomial::constant(space, 1.0) - &(&y * &y);
    qmodule_membership(psi, &[g], t)
}

/// Smallest `eps >= 0` making `h + eps (1 + sum_j x_j^(2r))` a sum of
/// squares over the basis of degree at most `r`.
pub fn eps_star(h: &Polynomial, r: u32) -> Result<f64> {
    eps_star_with(h, r, &Settings::default())
}

pub fn eps_star_with(h: &Polynomial, r: u32, settings: &Settings) -> Result<f64> {
    let d = h.degree().unwrap_or(0);
    if d > 2 * r {
        return Err(Error::OrderTooSmall {
            need: ceil_half(d),
            have: r,
        });
    }
    let m = h.nvars();
    let space = h.space();
    let mut prob = SdpProblem::new(Sense::Min);
    let eps = prob.add_nonneg("eps");
    let mut matcher = Matcher::new();
    let basis = monomial_basis(m, r);
    matcher.add_gram(&mut prob, "Q", &basis, &Polynomial::constant(space, 1.0));
    // Q-part - eps * theta = h
    matcher.add_var(&Monomial::one(m), eps, -1.0);
    for j in 0..m {
        let mut e = vec![0; m];
        e[j] = 2 * r;
        matcher.add_var(&Monomial::new(e), eps, -1.0);
    }
    matcher.add_poly_rhs(h, 1.0);
    matcher.finish(&mut prob);
    prob.set_objective(Sense::Min, vec![(eps, 1.0)]);
    match solve_checked(&prob, settings)? {
        Some(rep) => Ok(rep.value(eps).max(0.0)),
        None => Err(Error::Solver(
            "perturbation SDP reported infeasible for every eps".into(),
        )),
    }
}

/// Whether `z' Hess(h)(x) z` is a sum of squares of forms linear in `z`.
pub fn is_sos_convex(h: &Polynomial) -> Result<bool> {
    is_sos_convex_with(h, &Settings::default())
}

pub fn is_sos_convex_with(h: &Polynomial, settings: &Settings) -> Result<bool> {
    let d = h.degree().unwrap_or(0);
    if d <= 1 {
        return Ok(true);
    }
    let m = h.nvars();
    let scale = h.max_abs_coeff();
    let h = h.scale(1.0 / scale);
    let xz = Space::x_only(2 * m);
    let lift = |p: &Polynomial| {
        Polynomial::from_monomials(
            xz,
            p.terms().map(|(mono, c)| {
                let mut e = mono.exponents().to_vec();
                e.resize(2 * m, 0);
                (Monomial::new(e), c)
            }),
        )
    };
    let mut form = Polynomial::zero(xz);
    for i in 0..m {
        let di = h.derivative(i);
        for j in 0..m {
            let hij = lift(&di.derivative(j));
            let zz = &Polynomial::var(xz, m + i) * &Polynomial::var(xz, m + j);
            form = &form + &(&hij * &zz);
        }
    }
    let half = (d - 2) / 2;
    let mut basis = Vec::new();
    for b in monomial_basis(m, half) {
        for i in 0..m {
            let mut e = b.exponents().to_vec();
            e.resize(2 * m, 0);
            e[m + i] = 1;
            basis.push(Monomial::new(e));
        }
    }
    let mut prob = SdpProblem::new(Sense::Min);
    let mut matcher = Matcher::new();
    matcher.add_gram(&mut prob, "Q", &basis, &Polynomial::constant(xz, 1.0));
    matcher.add_poly_rhs(&form, 1.0);
    matcher.finish(&mut prob);
    Ok(solve_checked(&prob, settings)?.is_some())
}
