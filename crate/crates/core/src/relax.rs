//! Moment/SOS relaxations of convex semi-infinite polynomial programs
//!
//! ```text
//!   min f(x)  s.t.  p(x, y) >= 0  for all y in S = { y : g_j(y) >= 0 }
//! ```
//!
//! and the lifted sets `Lambda_{r,t}` approximating the feasible set `K`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{
    extract_atoms, flat_extension_check, Atom, FlatExtension, MomentVector, DEFAULT_RANK_TOL,
};
use crate::poly::{monomial_basis, Block, Monomial, Polynomial, Space};
use crate::preprocess;
use crate::sdp::{self, SdpProblem, Sense, Settings, SolveReport, Status, VarRef};
use crate::sos::{self, Matcher};

/// How the relaxation family is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Detect s.o.s-convexity on a sample of index points.
    #[default]
    Auto,
    General,
    SosConvex,
}

/// Form of the `L(Theta) <= 1` condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaForm {
    /// `L(Theta_r) <= 1` only.
    #[default]
    Single,
    /// `L(Theta_k) <= 1` for `k = ceil(d_x/2), ..., r`.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degrees {
    pub d_x: u32,
    pub d_y: u32,
    pub d_s: u32,
    pub d_k: u32,
    pub d_p: u32,
}

/// A convex semi-infinite polynomial program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SipProblem {
    /// Objective over the X block only.
    pub f: Polynomial,
    /// Constraint in both blocks.
    pub p: Polynomial,
    /// Generators of `S`, over the Y block only.
    pub g: Vec<Polynomial>,
    /// Bound `||x||_2 <= tau_K` on `K`.
    pub tau_k: Option<f64>,
    pub mode: Mode,
    /// Bounding box of `S` used for grids; `[-1, 1]^n` when absent.
    pub y_box: Option<Vec<(f64, f64)>>,
}

fn ceil_half(d: u32) -> u32 {
    d.div_ceil(2)
}

impl SipProblem {
    pub fn new(f: Polynomial, p: Polynomial, g: Vec<Polynomial>) -> Result<Self> {
        let space = p.space();
        if f.space() != Space::x_only(space.nx) {
            return Err(Error::InvalidArgument(format!(
                "objective must live in the {} X-variables only",
                space.nx
            )));
        }
        for (j, gj) in g.iter().enumerate() {
            if gj.space() != Space::y_only(space.ny) {
                return Err(Error::InvalidArgument(format!(
                    "generator {j} must live in the {} Y-variables only",
                    space.ny
                )));
            }
        }
        Ok(SipProblem {
            f,
            p,
            g,
            tau_k: None,
            mode: Mode::Auto,
            y_box: None,
        })
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau_k = Some(tau);
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn m(&self) -> usize {
        self.p.space().nx
    }

    pub fn n(&self) -> usize {
        self.p.space().ny
    }

    pub fn degrees(&self) -> Degrees {
        let d_x = self.p.deg_x();
        let d_y = self.p.deg_y();
        let d_s = self
            .g
            .iter()
            .map(|g| ceil_half(g.degree().unwrap_or(0)))
            .max()
            .unwrap_or(0);
        Degrees {
            d_x,
            d_y,
            d_s,
            d_k: ceil_half(d_y).max(d_s),
            d_p: self.f.degree().unwrap_or(0).max(d_x),
        }
    }

    /// `S = [-1, 1]` written as the single generator `1 - y^2`.
    pub fn univariate_interval_mode(&self) -> bool {
        if self.n() != 1 || self.g.len() != 1 {
            return false;
        }
        let s = Space::y_only(1);
        let target = Polynomial::from_terms(s, vec![(vec![0], 1.0), (vec![2], -1.0)])
            .expect("univariate interval generator");
        self.g[0].max_coeff_diff(&target) == 0.0
    }

    pub fn tau(&self) -> Result<f64> {
        match self.tau_k {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(Error::Precondition(format!(
                "tau_K must be positive, got {t}"
            ))),
            None => Err(Error::Precondition(
                "tau_K is required for the general relaxations and Lambda_{r,t}".into(),
            )),
        }
    }

    pub fn y_box(&self) -> Vec<(f64, f64)> {
        self.y_box
            .clone()
            .unwrap_or_else(|| vec![(-1.0, 1.0); self.n()])
    }

    /// `p(x, .)` as a polynomial over Y.
    pub fn p_at_x(&self, x: &[f64]) -> Result<Polynomial> {
        self.p.eval_block(Block::X, x)
    }

    /// `p(., y)` as a polynomial over X.
    pub fn p_at_y(&self, y: &[f64]) -> Result<Polynomial> {
        self.p.eval_block(Block::Y, y)
    }
}

/// Outcome of the s.o.s-convexity mode decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeDecision {
    pub sosconvex: bool,
    /// `"override"` or `"detected"`.
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_sos_convex: Option<bool>,
    /// Index points at which `-p(., y)` was tested.
    pub samples: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_sample: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Number of index points checked by s.o.s-convexity detection.
pub const MODE_SAMPLES: usize = 10;

/// Decide whether the s.o.s-convex hierarchy applies. Detection tests `f`
/// and `-p(., y)` at a spread of grid points of `S`; it is a heuristic.
pub fn resolve_mode(prob: &SipProblem, density: usize) -> Result<ModeDecision> {
    match prob.mode {
        Mode::General => {
            return Ok(ModeDecision {
                sosconvex: false,
                source: "override".into(),
                f_sos_convex: None,
                samples: Vec::new(),
                failed_sample: None,
                note: None,
            })
        }
        Mode::SosConvex => {
            return Ok(ModeDecision {
                sosconvex: true,
                source: "override".into(),
                f_sos_convex: None,
                samples: Vec::new(),
                failed_sample: None,
                note: None,
            })
        }
        Mode::Auto => {}
    }
    let f_ok = sos::is_sos_convex(&prob.f)?;
    let grid = preprocess::index_grid(prob, density)?;
    let stride = (grid.len() / MODE_SAMPLES).max(1);
    let samples: Vec<Vec<f64>> = grid
        .iter()
        .step_by(stride)
        .take(MODE_SAMPLES)
        .cloned()
        .collect();
    let mut failed = None;
    if f_ok {
        for y in &samples {
            let q = -&prob.p_at_y(y)?;
            if !sos::is_sos_convex(&q)? {
                failed = Some(y.clone());
                break;
            }
        }
    }
    Ok(ModeDecision {
        sosconvex: f_ok && failed.is_none(),
        source: "detected".into(),
        f_sos_convex: Some(f_ok),
        samples,
        failed_sample: failed,
        note: Some("s.o.s-convexity of -p(., y) checked on sampled index points only".into()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationKind {
    Dsdp,
    Psdp,
    SosconvexDsdp,
    SosconvexPsdp,
    Membership,
    Support,
}

/// Free scalars holding a truncated moment vector, in graded order.
#[derive(Clone, Debug)]
struct MomentVars {
    n: usize,
    degree: u32,
    vars: Vec<VarRef>,
    basis: Vec<Monomial>,
}

impl MomentVars {
    fn new(sdp: &mut SdpProblem, prefix: &str, n: usize, degree: u32) -> Self {
        let basis = monomial_basis(n, degree);
        let vars = basis
            .iter()
            .map(|m| sdp.add_free(format!("{prefix}{:?}", m.exponents())))
            .collect();
        MomentVars {
            n,
            degree,
            vars,
            basis,
        }
    }

    fn var(&self, m: &Monomial) -> Result<VarRef> {
        // Bases are small; a linear scan keeps this allocation-free.
        self.basis
            .iter()
            .position(|b| b == m)
            .map(|i| self.vars[i])
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "monomial of degree {} exceeds moment degree {}",
                    m.degree(),
                    self.degree
                ))
            })
    }

    fn read(&self, rep: &SolveReport) -> Result<MomentVector> {
        MomentVector::new(
            self.n,
            self.degree,
            self.vars.iter().map(|&v| rep.value(v)).collect(),
        )
    }

    /// PSD block for `M_k(g L)`, linked entrywise to the moments.
    fn add_localizing(
        &self,
        sdp: &mut SdpProblem,
        name: &str,
        g: &Polynomial,
        k: u32,
    ) -> Result<usize> {
        let rows = monomial_basis(self.n, k);
        let block = sdp.add_psd_block(name, rows.len());
        for i in 0..rows.len() {
            for j in i..rows.len() {
                let ab = rows[i].mul(&rows[j]);
                let mut terms = vec![(VarRef::entry(block, i, j), 1.0)];
                for (c, gc) in g.terms() {
                    terms.push((self.var(&ab.mul(c))?, -gc));
                }
                sdp.add_equality(terms, 0.0);
            }
        }
        Ok(block)
    }
}

/// A built relaxation together with what is needed to read its solution.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub kind: RelaxationKind,
    pub r: Option<u32>,
    pub t: u32,
    pub sdp: SdpProblem,
    moments: MomentVars,
    rho: Option<VarRef>,
    eta: Option<VarRef>,
}

fn check_t(prob: &SipProblem, t: u32) -> Result<()> {
    let deg = prob.degrees();
    if t < deg.d_k {
        return Err(Error::Precondition(format!(
            "t < d_K: t = {t}, d_K = {} (d_y = {}, d_S = {})",
            deg.d_k, deg.d_y, deg.d_s
        )));
    }
    Ok(())
}

fn theta_terms(l: &MomentVars, k: u32, tau: f64) -> Result<Vec<(VarRef, f64)>> {
    let c = tau.powi(-2 * k as i32);
    (0..l.n)
        .map(|i| {
            let mut e = vec![0; l.n];
            e[i] = 2 * k;
            Ok((l.var(&Monomial::new(e))?, c))
        })
        .collect()
}

/// `L` over X with `L(1) = 1`, `M_order(L) >= 0`, optional Theta bounds and
/// `L(p) in qmodule_t(G)`.
fn dual_core(
    prob: &SipProblem,
    sdp: &mut SdpProblem,
    degree: u32,
    order: u32,
    theta: Option<(ThetaForm, u32, f64)>,
    t: u32,
) -> Result<MomentVars> {
    let m = prob.m();
    let l = MomentVars::new(sdp, "L", m, degree);
    sdp.add_equality(vec![(l.vars[0], 1.0)], 1.0);
    l.add_localizing(
        sdp,
        "M(L)",
        &Polynomial::constant(Space::x_only(m), 1.0),
        order,
    )?;
    if let Some((form, r, tau)) = theta {
        let lo = match form {
            ThetaForm::Single => r,
            ThetaForm::Full => ceil_half(prob.degrees().d_x).max(1),
        };
        for k in lo..=r {
            let s = sdp.add_nonneg(format!("theta_slack{k}"));
            let mut terms = theta_terms(&l, k, tau)?;
            terms.push((s, 1.0));
            sdp.add_equality(terms, 1.0);
        }
    }
    add_qmodule_link(prob, sdp, &l, t)?;
    Ok(l)
}

/// `sum_j g_j sigma_j - L(p) = 0` coefficientwise over Y.
fn add_qmodule_link(prob: &SipProblem, sdp: &mut SdpProblem, l: &MomentVars, t: u32) -> Result<()> {
    let space = prob.p.space();
    let n = prob.n();
    if prob.p.deg_y() > 2 * t {
        return Err(Error::Precondition(format!(
            "t < d_K: L(p) has Y-degree {} above 2t = {}",
            prob.p.deg_y(),
            2 * t
        )));
    }
    let mut matcher = Matcher::new();
    let one = Polynomial::constant(Space::y_only(n), 1.0);
    matcher.add_gram(sdp, "sigma0", &monomial_basis(n, t), &one);
    for (j, g) in prob.g.iter().enumerate() {
        let dg = ceil_half(g.degree().unwrap_or(0));
        if dg > t {
            return Err(Error::Precondition(format!(
                "t < d_S: generator {j} has degree {}",
                g.degree().unwrap_or(0)
            )));
        }
        matcher.add_gram(
            sdp,
            format!("sigma{}", j + 1),
            &monomial_basis(n, t - dg),
            g,
        );
    }
    let xr = space.range(Block::X);
    let yr = space.range(Block::Y);
    for (mono, c) in prob.p.terms() {
        matcher.add_var(&mono.slice(yr.clone()), l.var(&mono.slice(xr.clone()))?, -c);
    }
    matcher.finish(sdp);
    Ok(())
}

fn linear_functional(l: &MomentVars, q: &Polynomial) -> Result<Vec<(VarRef, f64)>> {
    q.terms().map(|(m, c)| Ok((l.var(m)?, c))).collect()
}

/// The dual relaxation `f^dsdp_{r,t}`: minimize `L(f)` over `Lambda`-type
/// functionals of degree `2r`.
pub fn build_dsdp(prob: &SipProblem, r: u32, t: u32) -> Result<Relaxation> {
    let deg = prob.degrees();
    if r < ceil_half(deg.d_p) || r == 0 {
        return Err(Error::OrderTooSmall {
            need: ceil_half(deg.d_p).max(1),
            have: r,
        });
    }
    check_t(prob, t)?;
    let tau = prob.tau()?;
    let mut sdp = SdpProblem::new(Sense::Min);
    let l = dual_core(
        prob,
        &mut sdp,
        2 * r,
        r,
        Some((ThetaForm::Single, r, tau)),
        t,
    )?;
    let obj = linear_functional(&l, &prob.f)?;
    sdp.set_objective(Sense::Min, obj);
    Ok(Relaxation {
        kind: RelaxationKind::Dsdp,
        r: Some(r),
        t,
        sdp,
        moments: l,
        rho: None,
        eta: None,
    })
}

/// `H` over Y of degree `2t` with `M_t(H)` and all localizing matrices PSD.
fn primal_core(prob: &SipProblem, sdp: &mut SdpProblem, t: u32) -> Result<MomentVars> {
    let n = prob.n();
    let h = MomentVars::new(sdp, "H", n, 2 * t);
    h.add_localizing(sdp, "M(H)", &Polynomial::constant(Space::y_only(n), 1.0), t)?;
    for (j, g) in prob.g.iter().enumerate() {
        let dg = ceil_half(g.degree().unwrap_or(0));
        h.add_localizing(sdp, &format!("M(g{} H)", j + 1), g, t - dg)?;
    }
    Ok(h)
}

/// Add `H(p)(x) + q(x)' Q q(x) + lhs_extra = f` coefficientwise over X.
fn add_x_matching(
    prob: &SipProblem,
    sdp: &mut SdpProblem,
    h: &MomentVars,
    gram_order: u32,
    extra: &[(Monomial, VarRef, f64)],
) -> Result<()> {
    let m = prob.m();
    let space = prob.p.space();
    let xr = space.range(Block::X);
    let yr = space.range(Block::Y);
    let mut matcher = Matcher::new();
    matcher.add_gram(
        sdp,
        "Q",
        &monomial_basis(m, gram_order),
        &Polynomial::constant(Space::x_only(m), 1.0),
    );
    for (mono, c) in prob.p.terms() {
        matcher.add_var(&mono.slice(xr.clone()), h.var(&mono.slice(yr.clone()))?, c);
    }
    for (mono, v, c) in extra {
        matcher.add_var(mono, *v, *c);
    }
    matcher.add_poly_rhs(&prob.f, 1.0);
    matcher.finish(sdp);
    Ok(())
}

/// The primal relaxation `f^psdp_{r,t}`: maximize `rho - 2 eta` subject to
/// `f - rho + eta (1 + Theta_r) = H(p) + q^2`.
pub fn build_psdp(prob: &SipProblem, r: u32, t: u32) -> Result<Relaxation> {
    let deg = prob.degrees();
    if r < ceil_half(deg.d_p) || r == 0 {
        return Err(Error::OrderTooSmall {
            need: ceil_half(deg.d_p).max(1),
            have: r,
        });
    }
    check_t(prob, t)?;
    let tau = prob.tau()?;
    let m = prob.m();
    let mut sdp = SdpProblem::new(Sense::Max);
    let rho = sdp.add_free("rho");
    let eta = sdp.add_nonneg("eta");
    let h = primal_core(prob, &mut sdp, t)?;
    let one = Monomial::one(m);
    let mut extra = vec![(one.clone(), rho, 1.0), (one, eta, -1.0)];
    let c = tau.powi(-2 * r as i32);
    for i in 0..m {
        let mut e = vec![0; m];
        e[i] = 2 * r;
        extra.push((Monomial::new(e), eta, -c));
    }
    add_x_matching(prob, &mut sdp, &h, r, &extra)?;
    sdp.set_objective(Sense::Max, vec![(rho, 1.0), (eta, -2.0)]);
    Ok(Relaxation {
        kind: RelaxationKind::Psdp,
        r: Some(r),
        t,
        sdp,
        moments: h,
        rho: Some(rho),
        eta: Some(eta),
    })
}

fn require_sosconvex(prob: &SipProblem) -> Result<()> {
    match prob.mode {
        Mode::SosConvex => Ok(()),
        Mode::General => Err(Error::Precondition(
            "s.o.s-convex relaxation requested in general mode".into(),
        )),
        Mode::Auto => {
            let d = resolve_mode(prob, preprocess::DEFAULT_GRID_DENSITY)?;
            if d.sosconvex {
                Ok(())
            } else {
                Err(Error::Precondition(
                    "s.o.s-convex mode not established for this instance".into(),
                ))
            }
        }
    }
}

/// The s.o.s-convex dual relaxation `f^dsdp_t`: functionals of degree `d_P`,
/// no Theta bound.
pub fn build_sosconvex_dsdp(prob: &SipProblem, t: u32) -> Result<Relaxation> {
    require_sosconvex(prob)?;
    build_sosconvex_dsdp_unchecked(prob, t)
}

fn build_sosconvex_dsdp_unchecked(prob: &SipProblem, t: u32) -> Result<Relaxation> {
    check_t(prob, t)?;
    let d_p = prob.degrees().d_p;
    let mut sdp = SdpProblem::new(Sense::Min);
    let l = dual_core(prob, &mut sdp, d_p, d_p / 2, None, t)?;
    let obj = linear_functional(&l, &prob.f)?;
    sdp.set_objective(Sense::Min, obj);
    Ok(Relaxation {
        kind: RelaxationKind::SosconvexDsdp,
        r: None,
        t,
        sdp,
        moments: l,
        rho: None,
        eta: None,
    })
}

/// The s.o.s-convex primal relaxation `f^psdp_t`: maximize `rho` subject to
/// `f - rho = H(p) + q^2`.
pub fn build_sosconvex_psdp(prob: &SipProblem, t: u32) -> Result<Relaxation> {
    require_sosconvex(prob)?;
    build_sosconvex_psdp_unchecked(prob, t)
}

fn build_sosconvex_psdp_unchecked(prob: &SipProblem, t: u32) -> Result<Relaxation> {
    check_t(prob, t)?;
    let d_p = prob.degrees().d_p;
    let mut sdp = SdpProblem::new(Sense::Max);
    let rho = sdp.add_free("rho");
    let h = primal_core(prob, &mut sdp, t)?;
    let extra = vec![(Monomial::one(prob.m()), rho, 1.0)];
    add_x_matching(prob, &mut sdp, &h, d_p / 2, &extra)?;
    sdp.set_objective(Sense::Max, vec![(rho, 1.0)]);
    Ok(Relaxation {
        kind: RelaxationKind::SosconvexPsdp,
        r: None,
        t,
        sdp,
        moments: h,
        rho: Some(rho),
        eta: None,
    })
}

/// The constraint set of `Lambda_{r,t}` with `L(x)` left free.
fn lambda_sdp(
    prob: &SipProblem,
    r: u32,
    t: u32,
    form: ThetaForm,
    kind: RelaxationKind,
) -> Result<Relaxation> {
    let deg = prob.degrees();
    if r < ceil_half(deg.d_x) || r == 0 {
        return Err(Error::OrderTooSmall {
            need: ceil_half(deg.d_x).max(1),
            have: r,
        });
    }
    check_t(prob, t)?;
    let tau = prob.tau()?;
    let mut sdp = SdpProblem::new(Sense::Max);
    let l = dual_core(prob, &mut sdp, 2 * r, r, Some((form, r, tau)), t)?;
    Ok(Relaxation {
        kind,
        r: Some(r),
        t,
        sdp,
        moments: l,
        rho: None,
        eta: None,
    })
}

fn first_moment_vars(l: &MomentVars) -> Result<Vec<VarRef>> {
    (0..l.n).map(|i| l.var(&Monomial::var(l.n, i))).collect()
}

/// Is `x_hat` in `Lambda_{r,t}`, i.e. is there a functional meeting the
/// conditions with `L(x) = x_hat`?
pub fn membership_sdp(
    prob: &SipProblem,
    x_hat: &[f64],
    r: u32,
    t: u32,
    form: ThetaForm,
) -> Result<bool> {
    membership_sdp_with(prob, x_hat, r, t, form, &Settings::default())
}

pub fn membership_sdp_with(
    prob: &SipProblem,
    x_hat: &[f64],
    r: u32,
    t: u32,
    form: ThetaForm,
    settings: &Settings,
) -> Result<bool> {
    if x_hat.len() != prob.m() {
        return Err(Error::DimensionMismatch {
            expected: prob.m(),
            got: x_hat.len(),
        });
    }
    let mut rel = lambda_sdp(prob, r, t, form, RelaxationKind::Membership)?;
    for (v, &x) in first_moment_vars(&rel.moments)?.into_iter().zip(x_hat) {
        rel.sdp.add_equality(vec![(v, 1.0)], x);
    }
    Ok(sos::solve_checked(&rel.sdp, settings)?.is_some())
}

/// A support-function sample of `Lambda_{r,t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub value: f64,
    /// The maximizing `L(x)`, a boundary point of `Lambda_{r,t}`.
    pub point: Vec<f64>,
    pub status: Status,
}

/// `max a' L(x)` over `Lambda_{r,t}`.
pub fn support_value(
    prob: &SipProblem,
    a: &[f64],
    r: u32,
    t: u32,
    form: ThetaForm,
) -> Result<SupportPoint> {
    support_value_with(prob, a, r, t, form, &Settings::default())
}

pub fn support_value_with(
    prob: &SipProblem,
    a: &[f64],
    r: u32,
    t: u32,
    form: ThetaForm,
    settings: &Settings,
) -> Result<SupportPoint> {
    if a.len() != prob.m() {
        return Err(Error::DimensionMismatch {
            expected: prob.m(),
            got: a.len(),
        });
    }
    let mut rel = lambda_sdp(prob, r, t, form, RelaxationKind::Support)?;
    let xs = first_moment_vars(&rel.moments)?;
    let obj = xs
        .iter()
        .zip(a)
        .filter(|(_, &c)| c != 0.0)
        .map(|(&v, &c)| (v, c))
        .collect();
    rel.sdp.set_objective(Sense::Max, obj);
    let rep = sdp::solve(&rel.sdp, settings)?;
    match rep.status {
        Status::Optimal | Status::Inaccurate => Ok(SupportPoint {
            value: rep.primal_value,
            point: xs.iter().map(|&v| rep.value(v)).collect(),
            status: rep.status,
        }),
        Status::Unbounded => Err(Error::Solver(
            "support SDP unbounded: missing Theta bound or invalid tau_K".into(),
        )),
        Status::Infeasible => Err(Error::Solver("Lambda_{r,t} is empty".into())),
        Status::Failed => Err(Error::Solver(format!(
            "support SDP failed{}",
            rep.message.map(|m| format!(": {m}")).unwrap_or_default()
        ))),
    }
}

/// Solution of one relaxation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelaxationSolution {
    pub kind: RelaxationKind,
    pub r: Option<u32>,
    pub t: u32,
    pub status: Status,
    /// Objective of the relaxation at the returned point.
    pub value: f64,
    /// `L` for dual relaxations, `H` for primal ones.
    pub moments: Option<MomentVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

pub fn solve_relaxation(rel: &Relaxation, settings: &Settings) -> Result<RelaxationSolution> {
    let rep = sdp::solve(&rel.sdp, settings)?;
    let usable = rep.status.has_solution();
    Ok(RelaxationSolution {
        kind: rel.kind,
        r: rel.r,
        t: rel.t,
        status: rep.status,
        value: rep.primal_value,
        moments: if usable {
            Some(rel.moments.read(&rep)?)
        } else {
            None
        },
        rho: rel.rho.filter(|_| usable).map(|v| rep.value(v)),
        eta: rel.eta.filter(|_| usable).map(|v| rep.value(v)),
        iterations: rep.iterations,
        primal_residual: rep.primal_residual,
        dual_residual: rep.dual_residual,
        gap: rep.gap,
        message: rep.message.clone(),
    })
}

/// Candidate minimizer `L(x)` with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub point: Vec<f64>,
    /// `min over the S-grid of p(L(x), y)`.
    pub feasibility_margin: Option<f64>,
    /// `L(f) - f(L(x))`; nonnegative for s.o.s-convex `f`.
    pub jensen_gap: f64,
}

pub fn extract_minimizer(
    prob: &SipProblem,
    l: &MomentVector,
    grid: Option<&[Vec<f64>]>,
) -> Result<Minimizer> {
    let point = l.first_moments();
    let margin = match grid {
        Some(g) if !g.is_empty() => Some(preprocess::grid_min(prob, &point, g)?),
        _ => None,
    };
    let jensen_gap = l.apply(&prob.f)? - prob.f.evaluate(&point)?;
    Ok(Minimizer {
        point,
        feasibility_margin: margin,
        jensen_gap,
    })
}

/// Verdict of flat-extension based active-index extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum ActiveIndices {
    /// Flat: the relaxation value is exact at this order and `H` is the
    /// atomic measure `sum_i lambda_i delta_{y_i}`.
    Certified {
        atoms: Vec<Atom>,
        flat: FlatExtension,
        rank_tol: f64,
    },
    Unverified {
        flat: FlatExtension,
        rank_tol: f64,
    },
}

impl ActiveIndices {
    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            ActiveIndices::Certified { atoms, .. } => Some(atoms),
            ActiveIndices::Unverified { .. } => None,
        }
    }
}

/// Scale below which `H` counts as the zero functional.
const ZERO_MEASURE_TOL: f64 = 1e-7;

pub fn extract_active_indices(h: &MomentVector, t: u32, d_s: u32) -> Result<ActiveIndices> {
    let rank_tol = DEFAULT_RANK_TOL;
    let scale = h.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale <= ZERO_MEASURE_TOL {
        return Ok(ActiveIndices::Certified {
            atoms: Vec::new(),
            flat: FlatExtension {
                flat: true,
                rank_low: 0,
                rank_high: 0,
            },
            rank_tol,
        });
    }
    let flat = flat_extension_check(h, t, d_s.max(1), rank_tol)?;
    if !flat.flat {
        return Ok(ActiveIndices::Unverified { flat, rank_tol });
    }
    let atoms = extract_atoms(h, t)?;
    Ok(ActiveIndices::Certified {
        atoms,
        flat,
        rank_tol,
    })
}

/// Slack on the optimal value when re-solving for a low-rank `H`.
pub const REFINE_SLACK: f64 = 1e-7;

/// Re-solve a primal relaxation over its near-optimal face, minimizing the
/// trace of `M_t(H)`. Interior-point solutions sit at the analytic center of
/// the optimal face, which hides flat extensions; a minimum-trace `H` tends
/// to be of minimal rank. `None` when the re-solve has no usable answer.
pub fn refine_primal_moments(
    rel: &Relaxation,
    value: f64,
    settings: &Settings,
) -> Result<Option<MomentVector>> {
    if !matches!(
        rel.kind,
        RelaxationKind::Psdp | RelaxationKind::SosconvexPsdp
    ) {
        return Err(Error::InvalidArgument(
            "only primal relaxations carry H".into(),
        ));
    }
    let mut sdp = rel.sdp.clone();
    let s = sdp.add_nonneg("refine_slack");
    let mut terms = sdp.objective.clone();
    terms.push((s, -1.0));
    sdp.add_equality(terms, value - REFINE_SLACK * (1.0 + value.abs()));
    let h = &rel.moments;
    let trace = h
        .basis
        .iter()
        .zip(&h.vars)
        .filter(|(m, _)| m.degree() <= rel.t * 2 && m.exponents().iter().all(|e| e % 2 == 0))
        .map(|(_, &v)| (v, 1.0))
        .collect();
    sdp.set_objective(Sense::Min, trace);
    let rep = sdp::solve(&sdp, settings)?;
    if !rep.status.has_solution() {
        return Ok(None);
    }
    h.read(&rep).map(Some)
}

/// `x -> tau x` substitution making `tau_K = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    pub tau: f64,
}

impl ScaleMap {
    /// Map a point of the scaled problem back to the original coordinates.
    pub fn unscale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * self.tau).collect()
    }
}

pub fn scale_to_unit_ball(prob: &SipProblem) -> Result<(SipProblem, ScaleMap)> {
    let tau = prob.tau()?;
    let mut out = prob.clone();
    out.f = prob.f.scale_block(Block::X, tau);
    out.p = prob.p.scale_block(Block::X, tau);
    out.tau_k = Some(1.0);
    Ok((out, ScaleMap { tau }))
}

/// One `(r, t)` request; `r` is ignored by the s.o.s-convex hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderPair {
    pub r: u32,
    pub t: u32,
}

#[derive(Clone, Debug)]
pub struct HierarchyOptions {
    pub settings: Settings,
    pub timing: bool,
    pub grid_density: usize,
    /// Re-solve primal relaxations for a low-rank `H` before extraction.
    pub refine_active: bool,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            settings: Settings::default(),
            timing: true,
            grid_density: preprocess::DEFAULT_GRID_DENSITY,
            refine_active: true,
        }
    }
}

/// Either side of one hierarchy point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SideReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<RelaxationSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SideReport {
    fn from(res: Result<RelaxationSolution>) -> Self {
        match res {
            Ok(s) => SideReport {
                solution: Some(s),
                error: None,
            },
            Err(e) => SideReport {
                solution: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.solution
            .as_ref()
            .filter(|s| s.status.has_solution())
            .map(|s| s.value)
    }

    pub fn ok(&self) -> bool {
        self.solution
            .as_ref()
            .is_some_and(|s| s.status == Status::Optimal)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierarchyPoint {
    pub r: Option<u32>,
    pub t: u32,
    pub dual: SideReport,
    pub primal: SideReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<Minimizer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_indices: Option<ActiveIndices>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_indices_error: Option<String>,
    /// `f^psdp <= f^dsdp` within tolerance.
    pub weak_duality: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Dual values nonincreasing in `t` at fixed `r`.
    pub dual_monotone_in_t: bool,
    pub weak_duality: bool,
    pub violations: Vec<String>,
    /// First `(r, t)` at which the dual value stagnated (within 1e-5 of the
    /// next `t`); the paper's "nearly optimal" solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearly_optimal: Option<OrderPair>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub r: Option<u32>,
    pub t: u32,
    pub value: f64,
    pub minimizer: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub degrees: Degrees,
    pub mode: ModeDecision,
    pub univariate_interval_mode: bool,
    pub tau_k: Option<f64>,
    pub points: Vec<HierarchyPoint>,
    pub diagnostics: Diagnostics,
    /// Dual value and minimizer at the last point with a usable solution.
    pub result: Option<Summary>,
}

impl HierarchyReport {
    /// Whether every solve finished with status optimal.
    pub fn all_optimal(&self) -> bool {
        self.points.iter().all(|p| p.dual.ok() && p.primal.ok())
    }
}

/// Tolerance of the monotonicity and weak-duality diagnostics.
pub const DIAGNOSTIC_TOL: f64 = 1e-6;
/// Dual-value change under which the hierarchy counts as stagnated.
pub const STAGNATION_TOL: f64 = 1e-5;

/// Default schedule: the diagonal `r = t` from the smallest admissible order,
/// two levels.
pub fn default_schedule(prob: &SipProblem, sosconvex: bool) -> Vec<OrderPair> {
    let d = prob.degrees();
    if sosconvex {
        let t0 = d.d_k.max(1);
        return vec![OrderPair { r: 0, t: t0 }, OrderPair { r: 0, t: t0 + 1 }];
    }
    let r0 = ceil_half(d.d_p).max(d.d_k).max(1);
    vec![
        OrderPair { r: r0, t: r0 },
        OrderPair {
            r: r0 + 1,
            t: r0 + 1,
        },
    ]
}

/// Solve both relaxations at every scheduled point.
pub fn run_hierarchy(
    prob: &SipProblem,
    schedule: &[OrderPair],
    opts: &HierarchyOptions,
) -> Result<HierarchyReport> {
    let mode = resolve_mode(prob, opts.grid_density)?;
    run_hierarchy_with_mode(prob, schedule, mode, opts)
}

pub fn run_hierarchy_with_mode(
    prob: &SipProblem,
    schedule: &[OrderPair],
    mode: ModeDecision,
    opts: &HierarchyOptions,
) -> Result<HierarchyReport> {
    let degrees = prob.degrees();
    let univariate = prob.univariate_interval_mode();
    let sosconvex = mode.sosconvex;
    if !sosconvex {
        prob.tau()?;
    }
    let mut pairs: Vec<OrderPair> = schedule
        .iter()
        .map(|&p| {
            if sosconvex {
                OrderPair { r: 0, t: p.t }
            } else if univariate {
                OrderPair {
                    r: p.r,
                    t: degrees.d_k.max(1),
                }
            } else {
                p
            }
        })
        .collect();
    pairs.dedup();
    for p in &pairs {
        check_t(prob, p.t)?;
        if !sosconvex && p.r < ceil_half(degrees.d_p).max(1) {
            return Err(Error::OrderTooSmall {
                need: ceil_half(degrees.d_p).max(1),
                have: p.r,
            });
        }
    }
    let grid = preprocess::index_grid(prob, opts.grid_density).ok();
    let grid = grid.as_deref();

    let points: Vec<HierarchyPoint> = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&pair| scope.spawn(move || solve_point(prob, pair, sosconvex, grid, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("hierarchy worker panicked"))
            .collect()
    });

    let diagnostics = diagnose(&points);
    let result = points.iter().rev().find_map(|p| {
        let sol = p
            .dual
            .solution
            .as_ref()
            .filter(|s| s.status.has_solution())?;
        Some(Summary {
            r: p.r,
            t: p.t,
            value: sol.value,
            minimizer: sol.moments.as_ref()?.first_moments(),
        })
    });
    Ok(HierarchyReport {
        degrees,
        mode,
        univariate_interval_mode: univariate,
        tau_k: prob.tau_k,
        points,
        diagnostics,
        result,
    })
}

fn solve_point(
    prob: &SipProblem,
    pair: OrderPair,
    sosconvex: bool,
    grid: Option<&[Vec<f64>]>,
    opts: &HierarchyOptions,
) -> HierarchyPoint {
    let start = Instant::now();
    let (dual_rel, primal_rel) = if sosconvex {
        (
            build_sosconvex_dsdp_unchecked(prob, pair.t),
            build_sosconvex_psdp_unchecked(prob, pair.t),
        )
    } else {
        (
            build_dsdp(prob, pair.r, pair.t),
            build_psdp(prob, pair.r, pair.t),
        )
    };
    let dual = SideReport::from(dual_rel.and_then(|r| solve_relaxation(&r, &opts.settings)));
    let primal = match &primal_rel {
        Ok(r) => SideReport::from(solve_relaxation(r, &opts.settings)),
        Err(e) => SideReport {
            solution: None,
            error: Some(e.to_string()),
        },
    };

    let minimizer = dual
        .solution
        .as_ref()
        .and_then(|s| s.moments.as_ref())
        .and_then(|l| extract_minimizer(prob, l, grid).ok());
    let refined = match (&primal_rel, primal.value()) {
        (Ok(rel), Some(v)) if opts.refine_active => {
            refine_primal_moments(rel, v, &opts.settings).ok().flatten()
        }
        _ => None,
    };
    let h = refined
        .as_ref()
        .or_else(|| primal.solution.as_ref().and_then(|s| s.moments.as_ref()));
    let (active_indices, active_indices_error) = match h {
        Some(h) => match extract_active_indices(h, pair.t, prob.degrees().d_s) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, None),
    };
    let weak_duality = match (primal.value(), dual.value()) {
        (Some(p), Some(d)) => Some(p <= d + DIAGNOSTIC_TOL * (1.0 + d.abs())),
        _ => None,
    };
    HierarchyPoint {
        r: (!sosconvex).then_some(pair.r),
        t: pair.t,
        dual,
        primal,
        minimizer,
        active_indices,
        active_indices_error,
        weak_duality,
        timing_ms: opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    }
}

fn diagnose(points: &[HierarchyPoint]) -> Diagnostics {
    let mut d = Diagnostics {
        dual_monotone_in_t: true,
        weak_duality: true,
        ..Default::default()
    };
    for p in points {
        if p.weak_duality == Some(false) {
            d.weak_duality = false;
            d.violations.push(format!(
                "weak duality violated at r={:?}, t={}: psdp {:?} > dsdp {:?}",
                p.r,
                p.t,
                p.primal.value(),
                p.dual.value()
            ));
        }
    }
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            if a.r != b.r || b.t <= a.t {
                continue;
            }
            if let (Some(va), Some(vb)) = (a.dual.value(), b.dual.value()) {
                if vb > va + DIAGNOSTIC_TOL * (1.0 + va.abs()) {
                    d.dual_monotone_in_t = false;
                    d.violations.push(format!(
                        "dual value increased from t={} ({va}) to t={} ({vb}) at r={:?}",
                        a.t, b.t, a.r
                    ));
                }
                if b.t == a.t + 1 && d.nearly_optimal.is_none() && (va - vb).abs() <= STAGNATION_TOL
                {
                    d.nearly_optimal = Some(OrderPair {
                        r: a.r.unwrap_or(0),
                        t: a.t,
                    });
                }
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `K = {x1 >= 1}` written as `p = x1 - y` over `S = [-1, 1]`.
    fn half_line(f: Polynomial) -> SipProblem {
        let s = Space::new(1, 1);
        let p = Polynomial::from_terms(s, vec![(vec![1, 0], 1.0), (vec![0, 1], -1.0)]).unwrap();
        let g = Polynomial::from_terms(Space::y_only(1), vec![(vec![0], 1.0), (vec![2], -1.0)])
            .unwrap();
        SipProblem::new(f, p, vec![g]).unwrap().with_tau(3.0)
    }

    fn x1() -> Polynomial {
        Polynomial::var(Space::x_only(1), 0)
    }

    #[test]
    fn degrees_and_modes() {
        let p = half_line(x1());
        let d = p.degrees();
        assert_eq!((d.d_x, d.d_y, d.d_s, d.d_k, d.d_p), (1, 1, 1, 1, 1));
        assert!(p.univariate_interval_mode());
    }

    #[test]
    fn linear_objective_on_half_line() {
        let p = half_line(x1());
        let rel = build_dsdp(&p, 1, 1).unwrap();
        let s = solve_relaxation(&rel, &Settings::default()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-4, "{s:?}");
        let rel = build_psdp(&p, 1, 1).unwrap();
        let s2 = solve_relaxation(&rel, &Settings::default()).unwrap();
        assert!(s2.value <= s.value + 1e-6);
    }

    #[test]
    fn active_index_of_half_line() {
        let p = half_line(x1()).with_mode(Mode::SosConvex);
        let rel = build_sosconvex_psdp(&p, 1).unwrap();
        let s = solve_relaxation(&rel, &Settings::default()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-5);
        let a = extract_active_indices(s.moments.as_ref().unwrap(), 1, 1).unwrap();
        let atoms = a.atoms().expect("flat");
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].point[0] - 1.0).abs() < 1e-4);
        assert!((atoms[0].weight - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sosconvex_quadratic_on_half_line() {
        let f = x1().pow(2);
        let p = half_line(f).with_mode(Mode::SosConvex);
        let s =
            solve_relaxation(&build_sosconvex_dsdp(&p, 1).unwrap(), &Settings::default()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-5);
        assert!((s.moments.unwrap().first_moments()[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn vacuous_constraint() {
        let s = Space::new(1, 1);
        let p = Polynomial::constant(s, 1.0);
        let g = Polynomial::from_terms(Space::y_only(1), vec![(vec![0], 1.0), (vec![2], -1.0)])
            .unwrap();
        let prob = SipProblem::new(x1().pow(2), p, vec![g])
            .unwrap()
            .with_tau(1.0);
        let sol =
            solve_relaxation(&build_psdp(&prob, 1, 1).unwrap(), &Settings::default()).unwrap();
        assert!(sol.value.abs() < 1e-6, "{sol:?}");
        assert!(sol.rho.unwrap().abs() < 1e-5);
        assert!(sol.eta.unwrap().abs() < 1e-5);
        let a = extract_active_indices(sol.moments.as_ref().unwrap(), 1, 1).unwrap();
        assert_eq!(a.atoms().map(|a| a.len()), Some(0));
    }

    #[test]
    fn support_on_half_line() {
        let p = half_line(x1());
        let s = support_value(&p, &[-1.0], 1, 1, ThetaForm::Single).unwrap();
        assert!((s.value + 1.0).abs() < 1e-5, "{s:?}");
        let z = support_value(&p, &[0.0], 1, 1, ThetaForm::Single).unwrap();
        assert!(z.value.abs() < 1e-8);
    }

    #[test]
    fn preconditions_are_named() {
        let p = half_line(x1());
        match build_dsdp(&p, 1, 0) {
            Err(Error::Precondition(m)) => assert!(m.contains("t < d_K")),
            other => panic!("{other:?}"),
        }
        let mut q = p.clone();
        q.tau_k = None;
        assert!(matches!(build_dsdp(&q, 1, 1), Err(Error::Precondition(_))));
        assert!(build_sosconvex_dsdp(&p.clone().with_mode(Mode::General), 1).is_err());
    }

    #[test]
    fn scaling_is_a_substitution() {
        let p = half_line(x1().pow(2)).with_tau(2.0);
        let (s, map) = scale_to_unit_ball(&p).unwrap();
        assert_eq!(s.tau_k, Some(1.0));
        assert_eq!(s.f.coeff(&Monomial::new(vec![2])), 4.0);
        assert_eq!(map.unscale(&[0.5]), vec![1.0]);
    }
}
