//! Homogeneous self-dual primal-dual interior-point method.
//!
//! Standard form after conversion (`K` = PSD blocks x nonnegative orthant):
//!
//! ```text
//!   min <C, X> + d'u   s.t.  A(X) + B u = b,  X in K,  u free
//!   max b'y            s.t.  A*(y) + S = C,  B'y = d,  S in K
//! ```
//!
//! The embedding adds `tau, kappa >= 0`; an optimal pair is read off at
//! `tau > 0`, an improving ray (infeasibility certificate) at `tau -> 0`.
//! Search directions use Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector. The Newton system is reduced to the Schur
//! complement `M = A W A*` bordered by the free-variable columns `B`, then
//! solved densely; the homogenizing variable is eliminated with a second
//! right-hand side.

use nalgebra::{DMatrix, DVector};

use super::{merge_terms, SdpBackend, SdpProblem, Sense, Settings, SolveReport, Status, VarRef};
use crate::error::Result;
use crate::linalg;

/// The reference dense backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn solve(&self, prob: &SdpProblem, settings: &Settings) -> Result<SolveReport> {
        prob.validate()?;
        let data = match StdForm::build(prob) {
            Ok(d) => d,
            Err(TrivialRow(k)) => {
                return Ok(SolveReport::failed(
                    prob,
                    Status::Infeasible,
                    format!("equality {k} has no variables but a nonzero right-hand side"),
                ))
            }
        };
        Ok(data.run(prob, settings))
    }
}

/// Upper-triangular entries `(i, j, a_ij)` of a symmetric coefficient
/// matrix; `<A, X> = sum a_ii X_ii + 2 sum_{i<j} a_ij X_ij`.
type SymEntries = Vec<(usize, usize, f64)>;

struct Row {
    blocks: Vec<(usize, SymEntries)>,
    lp: Vec<(usize, f64)>,
    free: Vec<(usize, f64)>,
}

struct StdForm {
    dims: Vec<usize>,
    nlp: usize,
    nfree: usize,
    rows: Vec<Row>,
    /// Original equality index of each kept row.
    row_origin: Vec<usize>,
    row_scale: Vec<f64>,
    /// Per block: rows touching it, with their entries.
    block_rows: Vec<Vec<(usize, SymEntries)>>,
    b: DVector<f64>,
    c_blocks: Vec<DMatrix<f64>>,
    c_lp: DVector<f64>,
    c_free: DVector<f64>,
    /// Internal objective = sign * obj_scale^-1 * user objective.
    sign: f64,
    obj_scale: f64,
}

struct TrivialRow(usize);

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    sl: DVector<f64>,
    u: DVector<f64>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dsl: DVector<f64>,
    du: DVector<f64>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

/// Nesterov-Todd scaling of one PSD block.
struct NtScaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: Vec<f64>,
}

fn entry_value(entries: &SymEntries, x: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(i, j, a)| {
            if i == j {
                a * x[(i, i)]
            } else {
                2.0 * a * x[(i, j)]
            }
        })
        .sum()
}

fn add_entries(out: &mut DMatrix<f64>, entries: &SymEntries, scale: f64) {
    for &(i, j, a) in entries {
        out[(i, j)] += scale * a;
        if i != j {
            out[(j, i)] += scale * a;
        }
    }
}

fn dense_of(entries: &SymEntries, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    add_entries(&mut m, entries, 1.0);
    m
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::linalg::Cholesky::new(a.clone()).map(|c| c.l())
}

/// Largest step `alpha` keeping `x + alpha dx` positive definite, given the
/// Cholesky factor of `x`.
fn max_step_psd(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let e = &linv * dx * linv.transpose();
    let lmin = linalg::min_eigenvalue(&e);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

impl StdForm {
    fn build(prob: &SdpProblem) -> std::result::Result<Self, TrivialRow> {
        let nb = prob.psd_blocks.len();
        let dims: Vec<usize> = prob.psd_blocks.iter().map(|b| b.dim).collect();
        let nlp = prob.nonneg_vars.len();
        let nfree = prob.free_vars.len();

        let split = |terms: &[(VarRef, f64)]| {
            let mut blocks: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nb];
            let mut lp = Vec::new();
            let mut free = Vec::new();
            for (v, c) in merge_terms(terms) {
                match v {
                    VarRef::Entry { block, i, j } => {
                        let a = if i == j { c } else { 0.5 * c };
                        blocks[block].push((i, j, a));
                    }
                    VarRef::Nonneg(k) => lp.push((k, c)),
                    VarRef::Free(k) => free.push((k, c)),
                }
            }
            let blocks: Vec<(usize, SymEntries)> = blocks
                .into_iter()
                .enumerate()
                .filter(|(_, e)| !e.is_empty())
                .collect();
            Row { blocks, lp, free }
        };

        let mut rows = Vec::new();
        let mut row_origin = Vec::new();
        let mut row_scale = Vec::new();
        let mut bvals = Vec::new();
        for (k, eq) in prob.equalities.iter().enumerate() {
            let mut row = split(&eq.terms);
            let norm = row
                .blocks
                .iter()
                .flat_map(|(_, e)| {
                    e.iter()
                        .map(|&(i, j, a)| if i == j { a.abs() } else { 2.0 * a.abs() })
                })
                .chain(row.lp.iter().map(|(_, c)| c.abs()))
                .chain(row.free.iter().map(|(_, c)| c.abs()))
                .fold(0.0, f64::max);
            if norm == 0.0 {
                if eq.rhs != 0.0 {
                    return Err(TrivialRow(k));
                }
                continue;
            }
            let sc = 1.0 / norm;
            for (_, e) in row.blocks.iter_mut() {
                e.iter_mut().for_each(|t| t.2 *= sc);
            }
            row.lp.iter_mut().for_each(|t| t.1 *= sc);
            row.free.iter_mut().for_each(|t| t.1 *= sc);
            rows.push(row);
            row_origin.push(k);
            row_scale.push(sc);
            bvals.push(eq.rhs * sc);
        }

        let obj = split(&prob.objective);
        let sign = match prob.sense {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        };
        let omax = obj
            .blocks
            .iter()
            .flat_map(|(_, e)| e.iter().map(|t| t.2.abs()))
            .chain(obj.lp.iter().map(|t| t.1.abs()))
            .chain(obj.free.iter().map(|t| t.1.abs()))
            .fold(0.0, f64::max);
        let obj_scale = omax.max(1.0);
        let f = sign / obj_scale;
        let mut c_blocks: Vec<DMatrix<f64>> = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (bi, e) in &obj.blocks {
            add_entries(&mut c_blocks[*bi], e, f);
        }
        let mut c_lp = DVector::zeros(nlp);
        for &(k, c) in &obj.lp {
            c_lp[k] += f * c;
        }
        let mut c_free = DVector::zeros(nfree);
        for &(k, c) in &obj.free {
            c_free[k] += f * c;
        }

        let mut block_rows: Vec<Vec<(usize, SymEntries)>> = vec![Vec::new(); nb];
        for (r, row) in rows.iter().enumerate() {
            for (bi, e) in &row.blocks {
                block_rows[*bi].push((r, e.clone()));
            }
        }

        Ok(StdForm {
            dims,
            nlp,
            nfree,
            rows,
            row_origin,
            row_scale,
            block_rows,
            b: DVector::from_vec(bvals),
            c_blocks,
            c_lp,
            c_free,
            sign,
            obj_scale,
        })
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn nu(&self) -> f64 {
        (self.dims.iter().sum::<usize>() + self.nlp) as f64
    }

    /// `A(X)` including the orthant part.
    fn apply_a(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (r, row) in self.rows.iter().enumerate() {
            let mut v = 0.0;
            for (bi, e) in &row.blocks {
                v += entry_value(e, &x[*bi]);
            }
            for &(k, c) in &row.lp {
                v += c * xl[k];
            }
            out[r] = v;
        }
        out
    }

    fn apply_b(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (r, row) in self.rows.iter().enumerate() {
            out[r] = row.free.iter().map(|&(k, c)| c * u[k]).sum();
        }
        out
    }

    fn apply_bt(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nfree);
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, c) in &row.free {
                out[k] += c * y[r];
            }
        }
        out
    }

    /// `A*(y)`: block matrices and orthant vector.
    fn apply_at(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut blocks: Vec<DMatrix<f64>> =
            self.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        let mut lp = DVector::zeros(self.nlp);
        for (r, row) in self.rows.iter().enumerate() {
            for (bi, e) in &row.blocks {
                add_entries(&mut blocks[*bi], e, y[r]);
            }
            for &(k, c) in &row.lp {
                lp[k] += c * y[r];
            }
        }
        (blocks, lp)
    }

    fn inner_c(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> f64 {
        self.c_blocks
            .iter()
            .zip(x)
            .map(|(c, x)| frob(c, x))
            .sum::<f64>()
            + self.c_lp.dot(xl)
    }

    fn c_norm(&self) -> f64 {
        (self.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>()
            + self.c_lp.norm_squared()
            + self.c_free.norm_squared())
        .sqrt()
    }

    fn initial(&self) -> Iterate {
        Iterate {
            x: self.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            s: self.dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            xl: DVector::from_element(self.nlp, 1.0),
            sl: DVector::from_element(self.nlp, 1.0),
            u: DVector::zeros(self.nfree),
            y: DVector::zeros(self.m()),
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<NtScaling> {
        let lx = cholesky(x)?;
        let ls = cholesky(s)?;
        let prod = ls.transpose() * &lx;
        let svd = prod.svd(false, true);
        let vt = svd.v_t?;
        let d = svd.singular_values;
        if d.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let n = x.nrows();
        let v = vt.transpose();
        let dinv_sqrt = DMatrix::from_diagonal(&d.map(|v| 1.0 / v.sqrt()));
        let d_sqrt = DMatrix::from_diagonal(&d.map(f64::sqrt));
        let g = &lx * &v * &dinv_sqrt;
        let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
        let g_inv = &d_sqrt * &vt * lx_inv;
        let w = &g * g.transpose();
        Some(NtScaling {
            g,
            g_inv,
            w,
            lambda: d.iter().copied().collect(),
        })
    }

    /// Schur complement `M_ij = <A_i, W A_j W>` plus the orthant part.
    fn schur(&self, nt: &[NtScaling], wl: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut mat = DMatrix::zeros(m, m);
        for (bi, rows) in self.block_rows.iter().enumerate() {
            let w = &nt[bi].w;
            let d = self.dims[bi];
            for (idx, (ri, ei)) in rows.iter().enumerate() {
                let t = if ei.len() * 2 > d {
                    let a = dense_of(ei, d);
                    w * a * w
                } else {
                    let mut t = DMatrix::zeros(d, d);
                    for &(k, l, a) in ei {
                        if k == l {
                            t += (w.column(k) * w.row(k)) * a;
                        } else {
                            t += (w.column(k) * w.row(l) + w.column(l) * w.row(k)) * a;
                        }
                    }
                    t
                };
                for (rj, ej) in rows[idx..].iter() {
                    let v = entry_value(ej, &t);
                    mat[(*ri, *rj)] += v;
                    if ri != rj {
                        mat[(*rj, *ri)] += v;
                    }
                }
            }
        }
        if self.nlp > 0 {
            for (ri, row_i) in self.rows.iter().enumerate() {
                if row_i.lp.is_empty() {
                    continue;
                }
                for (rj, row_j) in self.rows.iter().enumerate().skip(ri) {
                    if row_j.lp.is_empty() {
                        continue;
                    }
                    let mut v = 0.0;
                    for &(k, a) in &row_i.lp {
                        for &(l, c) in &row_j.lp {
                            if k == l {
                                v += a * c * wl[k];
                            }
                        }
                    }
                    if v != 0.0 {
                        mat[(ri, rj)] += v;
                        if ri != rj {
                            mat[(rj, ri)] += v;
                        }
                    }
                }
            }
        }
        mat
    }

    fn run(&self, prob: &SdpProblem, settings: &Settings) -> SolveReport {
        let m = self.m();
        let nf = self.nfree;
        let bnorm = self.b.norm();
        let cnorm = self.c_norm();
        let mut it = self.initial();
        let mut best: Option<(f64, Iterate, Metrics)> = None;
        let mut status = Status::Failed;
        let mut message = None;
        let mut iterations = 0;
        let mut final_iter: Option<Iterate> = None;
        let mut small_steps = 0;

        for iter in 0..=settings.max_iter {
            iterations = iter;
            let met = self.metrics(&it, bnorm, cnorm);
            let merit = met.pres.max(met.dres).max(met.gap);
            if best.as_ref().is_none_or(|(b, _, _)| merit < *b) && it.tau > 0.0 {
                best = Some((merit, it.clone(), met.clone()));
            }
            if met.pres <= settings.feas_tol
                && met.dres <= settings.feas_tol
                && met.gap <= settings.gap_tol
            {
                status = Status::Optimal;
                final_iter = Some(it.clone());
                break;
            }
            if let Some(st) = self.certificate(&it, settings.infeas_tol) {
                status = st;
                final_iter = Some(it.clone());
                break;
            }
            if iter == settings.max_iter {
                message = Some("iteration limit reached".to_string());
                break;
            }

            let mu = met.mu;
            let Some(nt) =
                it.x.iter()
                    .zip(&it.s)
                    .map(|(x, s)| Self::nt_scaling(x, s))
                    .collect::<Option<Vec<_>>>()
            else {
                message = Some("lost positive definiteness".to_string());
                break;
            };
            let wl = it.xl.component_div(&it.sl);

            // Reduced system.
            let schur = self.schur(&nt, &wl);
            let kdim = m + nf;
            let mut k0 = DMatrix::zeros(kdim, kdim);
            k0.view_mut((0, 0), (m, m)).copy_from(&schur);
            let diag_max = (0..m).map(|i| schur[(i, i)].abs()).fold(1e-300, f64::max);
            for (r, row) in self.rows.iter().enumerate() {
                for &(k, c) in &row.free {
                    k0[(r, m + k)] += c;
                    k0[(m + k, r)] += c;
                }
            }
            let mut k0_reg = k0.clone();
            for i in 0..m {
                k0_reg[(i, i)] += 1e-14 * diag_max;
            }
            for i in m..kdim {
                k0_reg[(i, i)] -= 1e-14 * diag_max;
            }
            let lu = k0_reg.lu();
            let solve_k = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
                let mut x = lu.solve(rhs)?;
                for _ in 0..2 {
                    let res = rhs - &k0 * &x;
                    let corr = lu.solve(&res)?;
                    x += corr;
                }
                Some(x)
            };

            // W(C) and its images.
            let wc: Vec<DMatrix<f64>> = nt
                .iter()
                .zip(&self.c_blocks)
                .map(|(n, c)| &n.w * c * &n.w)
                .collect();
            let wcl = wl.component_mul(&self.c_lp);
            let a_wc = self.apply_a(&wc, &wcl);
            let gamma0 = self.inner_c(&wc, &wcl);
            let mut rhs_v = DVector::zeros(kdim);
            rhs_v.rows_mut(0, m).copy_from(&(&a_wc + &self.b));
            rhs_v.rows_mut(m, nf).copy_from(&self.c_free);
            let Some(vw) = solve_k(&rhs_v) else {
                message = Some("singular Newton system".to_string());
                break;
            };

            let res = self.residuals(&it);

            let solve_dir = |eta: f64,
                             rx: &[DMatrix<f64>],
                             rxl: &DVector<f64>,
                             rc_tau: f64|
             -> Option<Direction> {
                // W(eta r_d)
                let w_rd: Vec<DMatrix<f64>> = nt
                    .iter()
                    .zip(&res.rd)
                    .map(|(n, r)| (&n.w * r * &n.w) * eta)
                    .collect();
                let w_rdl = wl.component_mul(&res.rdl) * eta;
                let h1 = &res.rp * eta - self.apply_a(rx, rxl) + self.apply_a(&w_rd, &w_rdl);
                let h2 = &res.rf * eta;
                let h3 = eta * res.rg + self.inner_c(rx, rxl) - self.inner_c(&w_rd, &w_rdl)
                    + rc_tau / it.tau;
                let mut rhs = DVector::zeros(kdim);
                rhs.rows_mut(0, m).copy_from(&h1);
                rhs.rows_mut(m, nf).copy_from(&h2);
                let pq = solve_k(&rhs)?;
                let p = pq.rows(0, m);
                let q = pq.rows(m, nf);
                let v = vw.rows(0, m);
                let w = vw.rows(m, nf);
                let bma = &self.b - &a_wc;
                let gamma = gamma0 + it.kappa / it.tau;
                let denom = bma.dot(&v) - self.c_free.dot(&w) + gamma;
                let dtau = (h3 - bma.dot(&p) + self.c_free.dot(&q)) / denom;
                let dy = p + v * dtau;
                let du = q + w * dtau;
                let (aty, atyl) = self.apply_at(&dy);
                let ds: Vec<DMatrix<f64>> = res
                    .rd
                    .iter()
                    .zip(&aty)
                    .zip(&self.c_blocks)
                    .map(|((r, a), c)| r * eta - a + c * dtau)
                    .collect();
                let dsl = &res.rdl * eta - atyl + &self.c_lp * dtau;
                let dx: Vec<DMatrix<f64>> = rx
                    .iter()
                    .zip(&nt)
                    .zip(&ds)
                    .map(|((r, n), d)| r - &n.w * d * &n.w)
                    .collect();
                let dxl = rxl - wl.component_mul(&dsl);
                let dkappa = (rc_tau - it.kappa * dtau) / it.tau;
                if !dtau.is_finite() {
                    return None;
                }
                Some(Direction {
                    dx,
                    ds,
                    dxl,
                    dsl,
                    du,
                    dy,
                    dtau,
                    dkappa,
                })
            };

            // Predictor.
            let rx_aff: Vec<DMatrix<f64>> = it.x.iter().map(|x| -x).collect();
            let rxl_aff = -&it.xl;
            let Some(aff) = solve_dir(1.0, &rx_aff, &rxl_aff, -it.tau * it.kappa) else {
                message = Some("singular Newton system".to_string());
                break;
            };
            let alpha_aff = self.step_length(&it, &aff).min(1.0);
            let mu_aff = self.mu_after(&it, &aff, alpha_aff);
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector.
            let mut rx = Vec::with_capacity(nt.len());
            for (bi, n) in nt.iter().enumerate() {
                let dxt = &n.g_inv * &aff.dx[bi] * n.g_inv.transpose();
                let dst = n.g.transpose() * &aff.ds[bi] * &n.g;
                let jordan = (&dxt * &dst + &dst * &dxt) * 0.5;
                let d = n.lambda.len();
                let mut z = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let mut t = -jordan[(i, j)];
                        if i == j {
                            t += sigma * mu - n.lambda[i] * n.lambda[i];
                        }
                        z[(i, j)] = 2.0 * t / (n.lambda[i] + n.lambda[j]);
                    }
                }
                let mut r = &n.g * z * n.g.transpose();
                linalg::symmetrize(&mut r);
                rx.push(r);
            }
            let rxl = DVector::from_fn(self.nlp, |k, _| {
                (sigma * mu - it.xl[k] * it.sl[k] - aff.dxl[k] * aff.dsl[k]) / it.sl[k]
            });
            let rc_tau = sigma * mu - it.tau * it.kappa - aff.dtau * aff.dkappa;
            let Some(dir) = solve_dir(1.0 - sigma, &rx, &rxl, rc_tau) else {
                message = Some("singular Newton system".to_string());
                break;
            };
            let alpha = (settings.step_fraction * self.step_length(&it, &dir)).min(1.0);
            if alpha < 1e-10 {
                small_steps += 1;
                if small_steps >= 3 {
                    message = Some("step length collapsed".to_string());
                    break;
                }
            } else {
                small_steps = 0;
            }
            self.take_step(&mut it, &dir, alpha);
        }

        let (it, met) = match (final_iter, best) {
            (Some(f), _) => {
                let met = self.metrics(&f, bnorm, cnorm);
                (f, met)
            }
            (None, Some((merit, b, met))) => {
                if merit <= settings.inaccurate_tol {
                    status = Status::Inaccurate;
                }
                (b, met)
            }
            (None, None) => {
                return SolveReport::failed(prob, Status::Failed, message.unwrap_or_default())
            }
        };
        self.report(prob, status, &it, &met, iterations, message)
    }

    fn step_length(&self, it: &Iterate, d: &Direction) -> f64 {
        let mut a = f64::INFINITY;
        for (x, dx) in it.x.iter().zip(&d.dx) {
            match cholesky(x) {
                Some(l) => a = a.min(max_step_psd(&l, dx)),
                None => return 0.0,
            }
        }
        for (s, ds) in it.s.iter().zip(&d.ds) {
            match cholesky(s) {
                Some(l) => a = a.min(max_step_psd(&l, ds)),
                None => return 0.0,
            }
        }
        a = a
            .min(max_step_lp(&it.xl, &d.dxl))
            .min(max_step_lp(&it.sl, &d.dsl));
        if d.dtau < 0.0 {
            a = a.min(-it.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            a = a.min(-it.kappa / d.dkappa);
        }
        a
    }

    fn mu_after(&self, it: &Iterate, d: &Direction, alpha: f64) -> f64 {
        let mut gap = 0.0;
        for bi in 0..self.dims.len() {
            let x = &it.x[bi] + &d.dx[bi] * alpha;
            let s = &it.s[bi] + &d.ds[bi] * alpha;
            gap += frob(&x, &s);
        }
        let xl = &it.xl + &d.dxl * alpha;
        let sl = &it.sl + &d.dsl * alpha;
        gap += xl.dot(&sl);
        gap += (it.tau + alpha * d.dtau) * (it.kappa + alpha * d.dkappa);
        gap / (self.nu() + 1.0)
    }

    fn take_step(&self, it: &mut Iterate, d: &Direction, alpha: f64) {
        for bi in 0..self.dims.len() {
            it.x[bi] += &d.dx[bi] * alpha;
            it.s[bi] += &d.ds[bi] * alpha;
            linalg::symmetrize(&mut it.x[bi]);
            linalg::symmetrize(&mut it.s[bi]);
        }
        it.xl += &d.dxl * alpha;
        it.sl += &d.dsl * alpha;
        it.u += &d.du * alpha;
        it.y += &d.dy * alpha;
        it.tau += alpha * d.dtau;
        it.kappa += alpha * d.dkappa;
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let rp = &self.b * it.tau - self.apply_a(&it.x, &it.xl) - self.apply_b(&it.u);
        let (aty, atyl) = self.apply_at(&it.y);
        let rd: Vec<DMatrix<f64>> = self
            .c_blocks
            .iter()
            .zip(&aty)
            .zip(&it.s)
            .map(|((c, a), s)| c * it.tau - a - s)
            .collect();
        let rdl = &self.c_lp * it.tau - atyl - &it.sl;
        let rf = &self.c_free * it.tau - self.apply_bt(&it.y);
        let rg =
            it.kappa + self.inner_c(&it.x, &it.xl) + self.c_free.dot(&it.u) - self.b.dot(&it.y);
        Residuals {
            rp,
            rd,
            rdl,
            rf,
            rg,
        }
    }

    fn metrics(&self, it: &Iterate, bnorm: f64, cnorm: f64) -> Metrics {
        let res = self.residuals(it);
        let tau = it.tau;
        let pres = res.rp.norm() / tau / (1.0 + bnorm);
        let dres = (res.rd.iter().map(|r| r.norm_squared()).sum::<f64>()
            + res.rdl.norm_squared()
            + res.rf.norm_squared())
        .sqrt()
            / tau
            / (1.0 + cnorm);
        let pobj = (self.inner_c(&it.x, &it.xl) + self.c_free.dot(&it.u)) / tau;
        let dobj = self.b.dot(&it.y) / tau;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let mut xs = 0.0;
        for (x, s) in it.x.iter().zip(&it.s) {
            xs += frob(x, s);
        }
        xs += it.xl.dot(&it.sl);
        let mu = (xs + it.tau * it.kappa) / (self.nu() + 1.0);
        Metrics {
            pres,
            dres,
            gap,
            mu,
        }
    }

    /// Detect an improving ray of the primal or dual.
    fn certificate(&self, it: &Iterate, tol: f64) -> Option<Status> {
        let by = self.b.dot(&it.y);
        if by > 0.0 {
            let (aty, atyl) = self.apply_at(&it.y);
            let r = (aty
                .iter()
                .zip(&it.s)
                .map(|(a, s)| (a + s).norm_squared())
                .sum::<f64>()
                + (atyl + &it.sl).norm_squared()
                + self.apply_bt(&it.y).norm_squared())
            .sqrt();
            if r / by <= tol {
                return Some(Status::Infeasible);
            }
        }
        let cx = self.inner_c(&it.x, &it.xl) + self.c_free.dot(&it.u);
        if cx < 0.0 {
            let r = (self.apply_a(&it.x, &it.xl) + self.apply_b(&it.u)).norm();
            if r / -cx <= tol {
                return Some(Status::Unbounded);
            }
        }
        None
    }

    fn report(
        &self,
        prob: &SdpProblem,
        status: Status,
        it: &Iterate,
        met: &Metrics,
        iterations: usize,
        message: Option<String>,
    ) -> SolveReport {
        // For certificates the ray itself is returned unnormalized.
        let scale = if status.has_solution() || status == Status::Failed {
            1.0 / it.tau
        } else {
            1.0
        };
        let block_values: Vec<DMatrix<f64>> = it.x.iter().map(|x| x * scale).collect();
        let nonneg_values: Vec<f64> = it.xl.iter().map(|v| v * scale).collect();
        let free_values: Vec<f64> = it.u.iter().map(|v| v * scale).collect();
        let mut multipliers = vec![0.0; prob.equalities.len()];
        for (r, &orig) in self.row_origin.iter().enumerate() {
            multipliers[orig] = it.y[r] * scale * self.row_scale[r] * self.obj_scale * self.sign;
        }
        let mut rep = SolveReport {
            status,
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            block_values,
            free_values,
            nonneg_values,
            multipliers,
            iterations,
            primal_residual: met.pres,
            dual_residual: met.dres,
            gap: met.gap,
            message,
        };
        rep.primal_value = rep.eval(&prob.objective);
        rep.dual_value = prob
            .equalities
            .iter()
            .zip(&rep.multipliers)
            .map(|(e, y)| e.rhs * y)
            .sum();
        if !status.has_solution() {
            rep.primal_value = match status {
                Status::Infeasible => match prob.sense {
                    Sense::Min => f64::INFINITY,
                    Sense::Max => f64::NEG_INFINITY,
                },
                Status::Unbounded => match prob.sense {
                    Sense::Min => f64::NEG_INFINITY,
                    Sense::Max => f64::INFINITY,
                },
                _ => rep.primal_value,
            };
        }
        rep
    }
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdl: DVector<f64>,
    rf: DVector<f64>,
    rg: f64,
}

#[derive(Clone, Debug)]
struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    mu: f64,
}
