//! Index-set grids, homogenization for noncompact index sets, Slater checks
//! and the grid-discretization oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::MomentVector;
use crate::poly::{monomial_basis, Block, Monomial, Polynomial, Space};
use crate::relax::SipProblem;
use crate::sdp::{self, SdpProblem, Sense, Settings, Status, VarRef};
use crate::sos;

pub const DEFAULT_GRID_DENSITY: usize = 50;
pub const MAX_GRID_POINTS: usize = 100_000;
/// Grid points with `g_j(y) >= -FEAS_TOL` for all `j` count as in `S`.
pub const FEAS_TOL: f64 = 1e-9;

/// `density` points per dimension, reduced so the total stays within
/// [`MAX_GRID_POINTS`].
pub fn effective_density(density: usize, dims: usize) -> usize {
    if dims == 0 {
        return 1;
    }
    let mut d = density.max(1);
    while d > 1 && (d as f64).powi(dims as i32) > MAX_GRID_POINTS as f64 {
        d -= 1;
    }
    d
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Uniform tensor grid on a box.
pub fn box_grid(bounds: &[(f64, f64)], density: usize) -> Vec<Vec<f64>> {
    let k = effective_density(density, bounds.len());
    let axes: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| linspace(lo, hi, k)).collect();
    let mut out = vec![Vec::with_capacity(bounds.len())];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Pairs `(a, b)` with `g_a = -g_b` encode the equality `g_a = 0`.
fn equalities(g: &[Polynomial]) -> Vec<usize> {
    let mut out = Vec::new();
    for a in 0..g.len() {
        for b in a + 1..g.len() {
            let scale = g[a].max_abs_coeff().max(1.0);
            if (&g[a] + &g[b]).max_abs_coeff() <= 1e-12 * scale && !out.contains(&a) {
                out.push(a);
            }
        }
    }
    out
}

/// Gauss-Newton with minimum-norm steps onto `{h = 0}`.
fn project(y: &mut [f64], h: &[&Polynomial], grads: &[Vec<Polynomial>]) -> bool {
    let n = y.len();
    for _ in 0..50 {
        let r: Vec<f64> = h
            .iter()
            .map(|q| q.evaluate(y).unwrap_or(f64::NAN))
            .collect();
        if r.iter().all(|v| v.abs() <= 1e-13) {
            return true;
        }
        let jac = DMatrix::from_fn(h.len(), n, |i, j| grads[i][j].evaluate(y).unwrap_or(0.0));
        let Some(step) = linalg::lstsq(&jac, &DVector::from_vec(r)) else {
            return false;
        };
        if step.iter().any(|v| !v.is_finite()) {
            return false;
        }
        for (yi, s) in y.iter_mut().zip(step.iter()) {
            *yi -= s;
        }
    }
    h.iter()
        .all(|q| q.evaluate(y).map(|v| v.abs() <= 1e-10).unwrap_or(false))
}

/// Grid sample of `S = {y in box : g_j(y) >= 0}`. Equalities written as
/// opposing generator pairs are enforced by projecting grid points onto them.
pub fn sample_index_set(
    g: &[Polynomial],
    bounds: &[(f64, f64)],
    density: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = bounds.len();
    for gj in g {
        if gj.nvars() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: gj.nvars(),
            });
        }
    }
    let eq_idx = equalities(g);
    let eqs: Vec<&Polynomial> = eq_idx.iter().map(|&i| &g[i]).collect();
    let grads: Vec<Vec<Polynomial>> = eqs
        .iter()
        .map(|q| (0..n).map(|i| q.derivative(i)).collect())
        .collect();
    let mut out = Vec::new();
    for mut y in box_grid(bounds, density) {
        if !eqs.is_empty() && !project(&mut y, &eqs, &grads) {
            continue;
        }
        if g.iter()
            .all(|gj| gj.evaluate(&y).map(|v| v >= -FEAS_TOL).unwrap_or(false))
        {
            out.push(y);
        }
    }
    Ok(out)
}

/// Grid sample of the problem's index set; errors when empty.
pub fn index_grid(prob: &SipProblem, density: usize) -> Result<Vec<Vec<f64>>> {
    let grid = sample_index_set(&prob.g, &prob.y_box(), density)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(grid)
}

/// `min over grid of p(x, y)`.
pub fn grid_min(prob: &SipProblem, x: &[f64], grid: &[Vec<f64>]) -> Result<f64> {
    let q = prob.p_at_x(x)?;
    poly_grid_min(&q, grid)
}

fn poly_grid_min(q: &Polynomial, grid: &[Vec<f64>]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best = f64::INFINITY;
    for y in grid {
        best = best.min(q.evaluate(y)?);
    }
    Ok(best)
}

/// Compactified instance over the sphere in `(y0, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedInstance {
    /// `p` homogenized in Y, with `y0` the first Y variable.
    pub p_hom: Polynomial,
    /// `g_j^hom >= 0`, `y0 >= 0` and the sphere pair, over `(y0, y)`.
    pub s_tilde: Vec<Polynomial>,
    /// Highest-degree forms of `g_j` and the sphere pair, over `y`.
    pub s_hat: Vec<Polynomial>,
    /// `p_hat`, the highest-degree form of `p` in Y.
    pub p_hat: Polynomial,
    /// Instance with index set `S_tilde`.
    pub problem: SipProblem,
    pub caveat: String,
}

pub const GENERIC_EQUALITY: &str = "K = K_tilde for generic S";

fn sphere_pair(n: usize) -> [Polynomial; 2] {
    let s = Space::y_only(n);
    let norm = (0..n).fold(Polynomial::zero(s), |acc, i| {
        let v = Polynomial::var(s, i);
        &acc + &(&v * &v)
    });
    let one = Polynomial::constant(s, 1.0);
    [&one - &norm, &norm - &one]
}

pub fn homogenize_instance(prob: &SipProblem) -> Result<HomogenizedInstance> {
    let n = prob.n();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "homogenization needs at least one index variable".into(),
        ));
    }
    let p_hom = prob.p.homogenize_y()?;
    let mut s_tilde = prob
        .g
        .iter()
        .map(|g| g.homogenize_y())
        .collect::<Result<Vec<_>>>()?;
    s_tilde.push(Polynomial::var(Space::y_only(n + 1), 0));
    s_tilde.extend(sphere_pair(n + 1));
    let mut s_hat: Vec<Polynomial> = prob
        .g
        .iter()
        .map(|g| g.highest_degree_form(Block::Y))
        .collect();
    s_hat.extend(sphere_pair(n));
    let mut y_box = vec![(0.0, 1.0)];
    y_box.extend(std::iter::repeat_n((-1.0, 1.0), n));
    let problem = SipProblem {
        f: prob.f.clone(),
        p: p_hom.clone(),
        g: s_tilde.clone(),
        tau_k: prob.tau_k,
        mode: prob.mode,
        y_box: Some(y_box),
    };
    Ok(HomogenizedInstance {
        p_hom,
        s_tilde,
        s_hat,
        p_hat: prob.p.highest_degree_form(Block::Y),
        problem,
        caveat: GENERIC_EQUALITY.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlaterMargin {
    /// `min over the S-grid of p(u, y)`.
    pub margin: f64,
    pub grid_points: usize,
    /// Positive margin; a grid statement, not a proof.
    pub verified_at_grid: bool,
}

pub fn slater_margin(prob: &SipProblem, u: &[f64], density: usize) -> Result<SlaterMargin> {
    if u.len() != prob.m() {
        return Err(Error::DimensionMismatch {
            expected: prob.m(),
            got: u.len(),
        });
    }
    let grid = index_grid(prob, density)?;
    let margin = grid_min(prob, u, &grid)?;
    Ok(SlaterMargin {
        margin,
        grid_points: grid.len(),
        verified_at_grid: margin > 0.0,
    })
}

/// Largest `delta` in `[0, upper]` (found by bisection) with
/// `p(u, .) - delta` certified in `qmodule_t(G)`. `None` when even
/// `delta = 0` has no certificate.
pub fn certified_slater_bound(
    prob: &SipProblem,
    u: &[f64],
    t: u32,
    upper: f64,
    steps: usize,
) -> Result<Option<f64>> {
    let q = prob.p_at_x(u)?;
    let one = Polynomial::constant(q.space(), 1.0);
    let ok = |delta: f64| -> Result<bool> {
        let psi = &q - &one.scale(delta);
        Ok(sos::qmodule_membership(&psi, &prob.g, t)?.is_feasible())
    };
    if !ok(0.0)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, upper.max(0.0));
    if ok(hi)? {
        return Ok(Some(hi));
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSlater {
    pub margin_s: f64,
    pub margin_hat: f64,
}

impl ExtendedSlater {
    pub fn verified_at_grid(&self) -> bool {
        self.margin_s > 0.0 && self.margin_hat > 0.0
    }
}

pub fn extended_slater_check(
    prob: &SipProblem,
    u: &[f64],
    density: usize,
) -> Result<ExtendedSlater> {
    let margin_s = slater_margin(prob, u, density)?.margin;
    let h = homogenize_instance(prob)?;
    let grid = sample_index_set(&h.s_hat, &vec![(-1.0, 1.0); prob.n()], density)?;
    let q = h.p_hat.eval_block(Block::X, u)?;
    Ok(ExtendedSlater {
        margin_s,
        margin_hat: poly_grid_min(&q, &grid)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `L(f)` of the discretized moment program.
    pub value: f64,
    /// `L(x)`.
    pub minimizer: Vec<f64>,
    /// `f(L(x))`; equals `value` for s.o.s-convex `f` up to the Jensen gap.
    pub objective_at_minimizer: f64,
    pub grid_points: usize,
    pub constraints_used: usize,
    pub rounds: usize,
}

const ORACLE_START: usize = 200;
const ORACLE_ADD: usize = 50;
const ORACLE_VIOLATION: f64 = 1e-7;
const ORACLE_MAX_ROUNDS: usize = 200;

/// Solve `min f(x)` s.t. `p(x, y_i) >= 0` over the grid points `y_i` of `S`
/// as a moment SDP with pointwise linear constraints, adding violated points
/// until none remain.
pub fn discretization_oracle(prob: &SipProblem, density: usize) -> Result<OracleResult> {
    discretization_oracle_with(prob, density, &Settings::default())
}

pub fn discretization_oracle_with(
    prob: &SipProblem,
    density: usize,
    settings: &Settings,
) -> Result<OracleResult> {
    let grid = index_grid(prob, density)?;
    let m = prob.m();
    let k = prob.degrees().d_p.div_ceil(2).max(1);
    let y_polys: Vec<(Polynomial, Monomial)> = prob
        .p
        .split_by_block(Block::X)
        .into_iter()
        .map(|(xm, ypoly)| (ypoly, xm))
        .collect();

    let stride = (grid.len() / ORACLE_START).max(1);
    let mut active: Vec<usize> = (0..grid.len()).step_by(stride).collect();
    let mut rounds = 0;
    loop {
        rounds += 1;
        if rounds > ORACLE_MAX_ROUNDS {
            return Err(Error::Solver(
                "discretization oracle did not converge".into(),
            ));
        }
        let basis = monomial_basis(m, 2 * k);
        let mut sdp = SdpProblem::new(Sense::Min);
        let vars: Vec<VarRef> = basis
            .iter()
            .map(|b| sdp.add_free(format!("L{:?}", b.exponents())))
            .collect();
        let pos = |mono: &Monomial| basis.iter().position(|b| b == mono).map(|i| vars[i]);
        sdp.add_equality(vec![(vars[0], 1.0)], 1.0);
        let rows = monomial_basis(m, k);
        let blk = sdp.add_psd_block("M(L)", rows.len());
        for i in 0..rows.len() {
            for j in i..rows.len() {
                let v = pos(&rows[i].mul(&rows[j])).expect("moment in range");
                sdp.add_equality(vec![(VarRef::entry(blk, i, j), 1.0), (v, -1.0)], 0.0);
            }
        }
        for &i in &active {
            let s = sdp.add_nonneg(format!("s{i}"));
            let mut terms = vec![(s, -1.0)];
            for (ypoly, xm) in &y_polys {
                let c = ypoly.evaluate(&grid[i])?;
                if c != 0.0 {
                    terms.push((
                        pos(xm).ok_or_else(|| {
                            Error::Precondition("p has X-degree above d_P".into())
                        })?,
                        c,
                    ));
                }
            }
            sdp.add_equality(terms, 0.0);
        }
        let obj = prob
            .f
            .terms()
            .map(|(mono, c)| {
                Ok((
                    pos(mono).ok_or_else(|| Error::Precondition("f degree above d_P".into()))?,
                    c,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        sdp.set_objective(Sense::Min, obj);
        let rep = sdp::solve(&sdp, settings)?;
        match rep.status {
            Status::Optimal | Status::Inaccurate => {}
            Status::Infeasible => {
                return Err(Error::Solver("discretized program is infeasible".into()))
            }
            Status::Unbounded => {
                if active.len() == grid.len() {
                    return Err(Error::Solver("discretized program is unbounded".into()));
                }
                let step = (stride / (1 << rounds)).max(1);
                let mut more: Vec<usize> = (0..grid.len()).step_by(step).collect();
                more.retain(|i| !active.contains(i));
                active.extend(more);
                active.sort_unstable();
                continue;
            }
            Status::Failed => {
                return Err(Error::Solver(format!(
                    "discretization oracle solve failed{}",
                    rep.message.map(|m| format!(": {m}")).unwrap_or_default()
                )))
            }
        }
        let l = MomentVector::new(m, 2 * k, vars.iter().map(|&v| rep.value(v)).collect())?;
        let lp = l.apply_to_bipoly(&prob.p, Block::X)?;
        let mut violated: Vec<(f64, usize)> = Vec::new();
        for (i, y) in grid.iter().enumerate() {
            let v = lp.evaluate(y)?;
            if v < -ORACLE_VIOLATION && !active.contains(&i) {
                violated.push((v, i));
            }
        }
        if violated.is_empty() {
            let minimizer = l.first_moments();
            return Ok(OracleResult {
                value: rep.primal_value,
                objective_at_minimizer: prob.f.evaluate(&minimizer)?,
                minimizer,
                grid_points: grid.len(),
                constraints_used: active.len(),
                rounds,
            });
        }
        violated.sort_by(|a, b| a.0.total_cmp(&b.0));
        active.extend(violated.iter().take(ORACLE_ADD).map(|&(_, i)| i));
        active.sort_unstable();
    }
}

/// Estimate of `tau_K = max ||x||_2` over grid-feasible `x` in a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    /// Largest norm over feasible grid points plus one grid diagonal.
    pub tau: f64,
    pub max_norm: f64,
    pub feasible_points: usize,
    /// Some feasible point lies on the box boundary; enlarge the box.
    pub touches_boundary: bool,
}

pub fn estimate_tau(
    prob: &SipProblem,
    x_box: &[(f64, f64)],
    x_density: usize,
    y_density: usize,
) -> Result<TauEstimate> {
    if x_box.len() != prob.m() {
        return Err(Error::DimensionMismatch {
            expected: prob.m(),
            got: x_box.len(),
        });
    }
    let ys = index_grid(prob, y_density)?;
    let xs = box_grid(x_box, x_density);
    let k = effective_density(x_density, x_box.len()).max(2);
    let diag = x_box
        .iter()
        .map(|&(lo, hi)| ((hi - lo) / (k - 1) as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut feasible = vec![true; xs.len()];
    for y in &ys {
        let q = prob.p_at_y(y)?;
        for (x, ok) in xs.iter().zip(feasible.iter_mut()) {
            if *ok && q.evaluate(x)? < 0.0 {
                *ok = false;
            }
        }
    }
    let mut max_norm: f64 = 0.0;
    let mut count = 0;
    let mut touches = false;
    for (x, _) in xs.iter().zip(&feasible).filter(|(_, &ok)| ok) {
        count += 1;
        max_norm = max_norm.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        touches |= x
            .iter()
            .zip(x_box)
            .any(|(&v, &(lo, hi))| (v - lo).abs() < 1e-12 || (v - hi).abs() < 1e-12);
    }
    if count == 0 {
        return Err(Error::Precondition(
            "no grid-feasible point in the x box".into(),
        ));
    }
    Ok(TauEstimate {
        tau: max_norm + diag,
        max_norm,
        feasible_points: count,
        touches_boundary: touches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(s: Space, t: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(s, t.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    fn interval() -> Polynomial {
        poly(Space::y_only(1), &[(&[0], 1.0), (&[2], -1.0)])
    }

    fn half_line(f: Polynomial) -> SipProblem {
        let p = poly(Space::new(1, 1), &[(&[1, 0], 1.0), (&[0, 1], -1.0)]);
        SipProblem::new(f, p, vec![interval()]).unwrap()
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(box_grid(&[(-1.0, 1.0)], 5).len(), 5);
        assert_eq!(box_grid(&[], 5), vec![Vec::<f64>::new()]);
        assert_eq!(effective_density(50, 3), 46);
        assert!(box_grid(&[(-1.0, 1.0); 3], 50).len() <= MAX_GRID_POINTS);
    }

    #[test]
    fn circle_grid_is_projected() {
        let s = Space::y_only(2);
        let c = poly(s, &[(&[2, 0], 1.0), (&[0, 2], 1.0), (&[0, 0], -1.0)]);
        let g = vec![c.clone(), -&c, poly(s, &[(&[1, 0], 1.0)])];
        let pts = sample_index_set(&g, &[(-1.0, 1.0); 2], 20).unwrap();
        assert!(!pts.is_empty());
        for y in pts {
            assert!((y[0] * y[0] + y[1] * y[1] - 1.0).abs() < 1e-9);
            assert!(y[0] >= -FEAS_TOL);
        }
    }

    #[test]
    fn homogenized_interval() {
        let x = Polynomial::var(Space::x_only(1), 0);
        let prob = half_line(x);
        let h = homogenize_instance(&prob).unwrap();
        let s2 = Space::y_only(2);
        assert_eq!(h.s_tilde[0], poly(s2, &[(&[2, 0], 1.0), (&[0, 2], -1.0)]));
        assert_eq!(h.s_tilde[1], poly(s2, &[(&[1, 0], 1.0)]));
        assert_eq!(h.s_tilde.len(), 4);
        assert_eq!(h.p_hom.fix_variable(Block::Y, 0, 1.0), prob.p);
        assert_eq!(h.caveat, GENERIC_EQUALITY);
    }

    #[test]
    fn margins() {
        let x = Polynomial::var(Space::x_only(1), 0);
        let prob = half_line(x);
        let m = slater_margin(&prob, &[0.0], 21).unwrap();
        assert!((m.margin + 1.0).abs() < 1e-12);
        assert!(!m.verified_at_grid);
        let m = slater_margin(&prob, &[2.0], 21).unwrap();
        assert!((m.margin - 1.0).abs() < 1e-12);
        let b = certified_slater_bound(&prob, &[2.0], 1, 1.0, 20)
            .unwrap()
            .unwrap();
        assert!(b > 0.99, "{b}");
    }

    #[test]
    fn extended_slater_without_generators() {
        let p = poly(Space::new(1, 1), &[(&[0, 0], 1.0), (&[1, 1], 1.0)]);
        let prob = SipProblem::new(Polynomial::var(Space::x_only(1), 0), p, vec![]).unwrap();
        let e = extended_slater_check(&prob, &[1.0], 11).unwrap();
        assert!((e.margin_hat + 1.0).abs() < 1e-9);
        assert!(!e.verified_at_grid());
    }

    #[test]
    fn oracle_values() {
        let x = Polynomial::var(Space::x_only(1), 0);
        let r = discretization_oracle(&half_line(x.clone()), 51).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{r:?}");
        let vac = SipProblem::new(
            &(&x * &x) - &x,
            Polynomial::constant(Space::new(1, 1), 1.0),
            vec![interval()],
        )
        .unwrap();
        let r = discretization_oracle(&vac, 51).unwrap();
        assert!((r.value + 0.25).abs() < 1e-6, "{r:?}");
        assert!((r.minimizer[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn tau_of_interval() {
        // p = 2 - x - y^2 gives K = (-inf, 1], cut by the box at -3.
        let p = poly(
            Space::new(1, 1),
            &[(&[1, 0], -1.0), (&[0, 0], 2.0), (&[0, 2], -1.0)],
        );
        let prob =
            SipProblem::new(Polynomial::var(Space::x_only(1), 0), p, vec![interval()]).unwrap();
        let t = estimate_tau(&prob, &[(-3.0, 3.0)], 601, 21).unwrap();
        assert!((t.max_norm - 3.0).abs() < 1e-9);
        assert!(t.touches_boundary);
    }
}
