//! Truncated moment vectors, moment and localizing matrices, flat extension
//! and atom extraction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{basis_len, Block, Monomial, MonomialIndex, Polynomial, Space};

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// A linear functional on polynomials of degree at most `degree` in `n`
/// variables, stored by its values on the graded-lex monomial basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "MomentVectorRepr", into = "MomentVectorRepr")]
pub struct MomentVector {
    n: usize,
    degree: u32,
    values: Vec<f64>,
    index: Arc<MonomialIndex>,
}

#[derive(Serialize, Deserialize)]
struct MomentVectorRepr {
    n: usize,
    order: u32,
    degree: u32,
    values: Vec<f64>,
}

impl From<MomentVectorRepr> for MomentVector {
    fn from(r: MomentVectorRepr) -> Self {
        let index = Arc::new(MonomialIndex::up_to(r.n, r.degree));
        let mut values = r.values;
        values.resize(index.len(), 0.0);
        MomentVector {
            n: r.n,
            degree: r.degree,
            values,
            index,
        }
    }
}

impl From<MomentVector> for MomentVectorRepr {
    fn from(m: MomentVector) -> Self {
        MomentVectorRepr {
            n: m.n,
            order: m.degree / 2,
            degree: m.degree,
            values: m.values,
        }
    }
}

impl MomentVector {
    /// Moment vector indexed by all monomials of degree at most `degree`.
    pub fn new(n: usize, degree: u32, values: Vec<f64>) -> Result<Self> {
        let index = Arc::new(MonomialIndex::up_to(n, degree));
        if values.len() != index.len() {
            return Err(Error::DimensionMismatch {
                expected: index.len(),
                got: values.len(),
            });
        }
        Ok(MomentVector {
            n,
            degree,
            values,
            index,
        })
    }

    pub fn zeros(n: usize, degree: u32) -> Self {
        let index = Arc::new(MonomialIndex::up_to(n, degree));
        MomentVector {
            n,
            degree,
            values: vec![0.0; index.len()],
            index,
        }
    }

    /// `sum_i w_i * delta_{u_i}` truncated at degree `2k`.
    pub fn from_atoms(atoms: &[Atom], n: usize, k: u32) -> Result<Self> {
        let mut mv = MomentVector::zeros(n, 2 * k);
        for a in atoms {
            if a.point.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.point.len(),
                });
            }
            for (v, m) in mv.values.iter_mut().zip(mv.index.basis()) {
                *v += a.weight * m.eval(&a.point);
            }
        }
        Ok(mv)
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    /// Largest monomial degree covered.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Largest `k` with `2k <= degree`.
    pub fn order(&self) -> u32 {
        self.degree / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn basis(&self) -> &[Monomial] {
        self.index.basis()
    }

    /// Value at the constant monomial.
    pub fn mass(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    pub fn get(&self, m: &Monomial) -> Option<f64> {
        self.index.get(m).map(|i| self.values[i])
    }

    fn at(&self, m: &Monomial) -> Result<f64> {
        self.get(m).ok_or(Error::OrderTooSmall {
            need: m.degree(),
            have: self.degree,
        })
    }

    /// First-order moments `(L(v_1), ..., L(v_n))`.
    pub fn first_moments(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.get(&Monomial::var(self.n, i)).unwrap_or(0.0))
            .collect()
    }

    /// Apply the functional to a polynomial in the same `n` variables.
    pub fn apply(&self, q: &Polynomial) -> Result<f64> {
        if q.nvars() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.nvars(),
            });
        }
        q.terms().map(|(m, c)| Ok(c * self.at(m)?)).sum()
    }

    pub fn linear_combination(&self, a: f64, other: &MomentVector, b: f64) -> Result<Self> {
        if self.n != other.n || self.degree != other.degree {
            return Err(Error::InvalidArgument(
                "moment vectors live in different spaces".into(),
            ));
        }
        Ok(MomentVector {
            n: self.n,
            degree: self.degree,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            index: self.index.clone(),
        })
    }

    /// `M_k`: rows and columns indexed by monomials of degree at most `k`,
    /// entry `(a, b)` equal to `L(v^(a+b))`.
    pub fn moment_matrix(&self, k: u32) -> Result<DMatrix<f64>> {
        if 2 * k > self.degree {
            return Err(Error::OrderTooSmall {
                need: 2 * k,
                have: self.degree,
            });
        }
        let rows = crate::poly::monomial_basis(self.n, k);
        let s = rows.len();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let v = self.at(&rows[i].mul(&rows[j]))?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// `M_{k - d_g}(g L)` with `d_g = ceil(deg g / 2)`: entry `(a, b)` equal
    /// to `sum_c g_c L(v^(a+b+c))`.
    pub fn localizing_matrix(&self, g: &Polynomial, k: u32) -> Result<DMatrix<f64>> {
        if g.nvars() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: g.nvars(),
            });
        }
        let dg = g.degree().unwrap_or(0).div_ceil(2);
        if k < dg {
            return Err(Error::OrderTooSmall {
                need: 2 * dg,
                have: 2 * k,
            });
        }
        let kk = k - dg;
        let need = g.degree().unwrap_or(0) + 2 * kk;
        if need > self.degree {
            return Err(Error::OrderTooSmall {
                need,
                have: self.degree,
            });
        }
        let rows = crate::poly::monomial_basis(self.n, kk);
        let s = rows.len();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let ab = rows[i].mul(&rows[j]);
                let mut v = 0.0;
                for (c, gc) in g.terms() {
                    v += gc * self.at(&ab.mul(c))?;
                }
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Contract a two-block polynomial against this functional over
    /// `block`; the result is a polynomial in the other block.
    pub fn apply_to_bipoly(&self, p: &Polynomial, block: Block) -> Result<Polynomial> {
        let space = p.space();
        if space.block_len(block) != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: space.block_len(block),
            });
        }
        let out_space = match block {
            Block::X => Space::y_only(space.ny),
            Block::Y => Space::x_only(space.nx),
        };
        let mut out = Polynomial::zero(out_space);
        for (m, coeff) in p.split_by_block(block) {
            let v = self.at(&m)?;
            out = &out + &coeff.scale(v);
        }
        Ok(out)
    }
}

/// Weighted point mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

impl Atom {
    pub fn new(point: Vec<f64>, weight: f64) -> Self {
        Atom { point, weight }
    }
}

/// Outcome of the rank comparison `rank M_{k-d} == rank M_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatExtension {
    pub flat: bool,
    pub rank_low: usize,
    pub rank_high: usize,
}

/// Compare numerical ranks of `M_{k-d_s}` and `M_k`. Both ranks are taken
/// against the largest singular value of `M_k`.
pub fn flat_extension_check(
    mv: &MomentVector,
    k: u32,
    d_s: u32,
    rank_tol: f64,
) -> Result<FlatExtension> {
    let high = mv.moment_matrix(k)?;
    let low_k = k.saturating_sub(d_s);
    let s_high = linalg::singular_values(&high);
    let smax = s_high.first().copied().unwrap_or(0.0);
    let cut = rank_tol * smax * high.nrows() as f64;
    let count = |s: &[f64]| {
        if smax <= f64::MIN_POSITIVE {
            0
        } else {
            s.iter().filter(|&&v| v > cut).count()
        }
    };
    let rank_high = count(&s_high);
    let low = mv.moment_matrix(low_k)?;
    let rank_low = count(&linalg::singular_values(&low));
    Ok(FlatExtension {
        flat: rank_low == rank_high,
        rank_low,
        rank_high,
    })
}

/// Tolerances for [`extract_atoms_with`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub rank_tol: f64,
    /// Relative tolerance on the reconstructed moments of degree <= 2k.
    pub recon_tol: f64,
    pub seed: u64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            rank_tol: DEFAULT_RANK_TOL,
            recon_tol: 1e-6,
            seed: 0x5eed,
        }
    }
}

/// Recover the atoms of a flat moment vector from `M_k`.
pub fn extract_atoms(mv: &MomentVector, k: u32) -> Result<Vec<Atom>> {
    extract_atoms_with(mv, k, &ExtractOptions::default())
}

/// Column-echelon extraction: factor `M_k = V V^T`, reduce `V^T` to row
/// echelon form to pick a monomial basis, build one multiplication matrix
/// per variable and diagonalize them jointly through the Schur form of a
/// random combination. Weights come from a Vandermonde least-squares solve.
pub fn extract_atoms_with(mv: &MomentVector, k: u32, opts: &ExtractOptions) -> Result<Vec<Atom>> {
    let n = mv.nvars();
    let m = mv.moment_matrix(k)?;
    let rows = crate::poly::monomial_basis(n, k);
    let index = MonomialIndex::new(rows.clone());
    let (vals, vecs) = linalg::sym_eigen(&m);
    let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
    if lmax <= f64::MIN_POSITIVE {
        return Ok(Vec::new());
    }
    let cut = opts.rank_tol * lmax * m.nrows() as f64;
    let keep: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > cut).collect();
    let r = keep.len();
    let s = rows.len();
    // V^T, r x s
    let mut vt = DMatrix::zeros(r, s);
    for (row, &i) in keep.iter().enumerate() {
        let sq = vals[i].sqrt();
        for c in 0..s {
            vt[(row, c)] = vecs[(c, i)] * sq;
        }
    }
    let (echelon, pivots) = row_echelon(vt, r)?;
    let basis: Vec<Monomial> = pivots.iter().map(|&c| rows[c].clone()).collect();
    if let Some(b) = basis.iter().find(|b| b.degree() >= k) {
        return Err(Error::Extraction(format!(
            "basis monomial of degree {} leaves no room for multiplication at order {k}",
            b.degree()
        )));
    }
    // Multiplication matrices: row j holds the coordinates of v_i * w_j.
    let mut mult = Vec::with_capacity(n);
    for i in 0..n {
        let vi = Monomial::var(n, i);
        let mut nm = DMatrix::zeros(r, r);
        for (j, w) in basis.iter().enumerate() {
            let target = w.mul(&vi);
            let col = index.get(&target).ok_or_else(|| {
                Error::Extraction(format!(
                    "monomial of degree {} outside M_k",
                    target.degree()
                ))
            })?;
            for l in 0..r {
                nm[(j, l)] = echelon[(l, col)];
            }
        }
        mult.push(nm);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut comb = DMatrix::zeros(r, r);
    for (w, nm) in weights.iter().zip(&mult) {
        comb += nm * *w;
    }
    let schur = nalgebra::linalg::Schur::try_new(comb, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Extraction("Schur decomposition did not converge".into()))?;
    let (q, _t) = schur.unpack();
    let points: Vec<Vec<f64>> = (0..r)
        .map(|j| {
            let qj = q.column(j);
            mult.iter()
                .map(|nm| (qj.transpose() * nm * qj)[(0, 0)])
                .collect()
        })
        .collect();
    // Vandermonde system over the monomials of degree <= k.
    let mut vander = DMatrix::zeros(s, r);
    for (a, mon) in rows.iter().enumerate() {
        for (j, p) in points.iter().enumerate() {
            vander[(a, j)] = mon.eval(p);
        }
    }
    let rhs = DVector::from_iterator(s, rows.iter().map(|mon| mv.get(mon).unwrap_or(0.0)));
    let w = linalg::lstsq(&vander, &rhs)
        .ok_or_else(|| Error::Extraction("Vandermonde solve failed".into()))?;
    let scale = mv
        .values()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-300);
    if let Some(bad) = w.iter().find(|&&x| x <= -opts.recon_tol * scale) {
        return Err(Error::Extraction(format!("negative weight {bad:.3e}")));
    }
    let atoms: Vec<Atom> = points
        .into_iter()
        .zip(w.iter())
        .map(|(p, &wt)| Atom::new(p, wt.max(0.0)))
        .collect();
    let recon = MomentVector::from_atoms(&atoms, n, k)?;
    let err = recon
        .basis()
        .iter()
        .zip(recon.values())
        .map(|(mon, v)| (v - mv.get(mon).unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    if err > opts.recon_tol * scale.max(1.0) {
        return Err(Error::Extraction(format!(
            "reconstructed moments differ by {err:.3e}"
        )));
    }
    Ok(atoms)
}

/// Row-reduce `a` (r x s) to reduced echelon form, choosing pivot columns
/// greedily left to right.
fn row_echelon(mut a: DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let (r, s) = a.shape();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut pivots = Vec::with_capacity(rank);
    let mut row = 0;
    for col in 0..s {
        if row == r {
            break;
        }
        let (best, val) = (row..r)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        a.swap_rows(row, best);
        let p = a[(row, col)];
        for c in 0..s {
            a[(row, c)] /= p;
        }
        for i in 0..r {
            if i != row {
                let f = a[(i, col)];
                if f != 0.0 {
                    for c in 0..s {
                        a[(i, c)] -= f * a[(row, c)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() != rank {
        return Err(Error::Extraction(format!(
            "echelon form found {} pivots for rank {rank}",
            pivots.len()
        )));
    }
    Ok((a, pivots))
}

/// Number of entries of a moment vector of degree `2k` in `n` variables.
pub fn moment_len(n: usize, k: u32) -> usize {
    basis_len(n, 2 * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue, numerical_rank};
    use proptest::prelude::*;
    use rand::Rng;

    fn interval_g() -> Polynomial {
        Polynomial::from_terms(Space::y_only(1), vec![(vec![0], 1.0), (vec![2], -1.0)]).unwrap()
    }

    #[test]
    fn from_atoms_values() {
        let mv = MomentVector::from_atoms(
            &[Atom::new(vec![0.0], 1.0), Atom::new(vec![1.0], 1.0)],
            1,
            1,
        )
        .unwrap();
        assert_eq!(mv.values(), &[2.0, 1.0, 1.0]);
        let e = MomentVector::from_atoms(&[], 2, 1).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
        let single = MomentVector::from_atoms(&[Atom::new(vec![2.0, -1.0], 1.0)], 2, 1).unwrap();
        for (m, v) in single.basis().iter().zip(single.values()) {
            assert_eq!(*v, m.eval(&[2.0, -1.0]));
        }
        assert!(MomentVector::from_atoms(&[Atom::new(vec![1.0], 1.0)], 2, 1).is_err());
    }

    #[test]
    fn moment_matrix_of_dirac() {
        let mv = MomentVector::from_atoms(&[Atom::new(vec![1.0, 2.0], 1.0)], 2, 1).unwrap();
        let m = mv.moment_matrix(1).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1., 1., 2., 1., 1., 2., 2., 2., 4.]);
        assert_eq!(m, want);
        assert_eq!(numerical_rank(&m, 1e-6), 1);
        assert_eq!(
            MomentVector::zeros(2, 2).moment_matrix(1).unwrap(),
            DMatrix::zeros(3, 3)
        );
        assert!(mv.moment_matrix(2).is_err());
        let two = MomentVector::from_atoms(
            &[
                Atom::new(vec![1.0, 2.0], 0.3),
                Atom::new(vec![-1.0, 0.5], 0.7),
            ],
            2,
            1,
        )
        .unwrap();
        assert_eq!(numerical_rank(&two.moment_matrix(1).unwrap(), 1e-6), 2);
    }

    #[test]
    fn localizing_examples() {
        let g = interval_g();
        let inside = MomentVector::from_atoms(&[Atom::new(vec![0.5], 1.0)], 1, 1).unwrap();
        let lm = inside.localizing_matrix(&g, 1).unwrap();
        assert_eq!(lm.shape(), (1, 1));
        assert!((lm[(0, 0)] - 0.75).abs() < 1e-15);
        let outside = MomentVector::from_atoms(&[Atom::new(vec![2.0], 1.0)], 1, 1).unwrap();
        let lm = outside.localizing_matrix(&g, 1).unwrap();
        assert!((lm[(0, 0)] + 3.0).abs() < 1e-15);
        let one = Polynomial::constant(Space::y_only(1), 1.0);
        assert_eq!(
            inside.localizing_matrix(&one, 1).unwrap(),
            inside.moment_matrix(1).unwrap()
        );
        assert!(inside.localizing_matrix(&g, 0).is_err());
    }

    #[test]
    fn flat_extension_examples() {
        let dirac = MomentVector::from_atoms(&[Atom::new(vec![0.3, -0.2], 1.0)], 2, 3).unwrap();
        let fe = flat_extension_check(&dirac, 3, 1, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(
            fe,
            FlatExtension {
                flat: true,
                rank_low: 1,
                rank_high: 1
            }
        );
        let atoms = vec![
            Atom::new(vec![0.5, 0.1], 0.2),
            Atom::new(vec![-0.4, 0.7], 0.3),
            Atom::new(vec![0.0, -0.8], 0.5),
        ];
        let mv = MomentVector::from_atoms(&atoms, 2, 3).unwrap();
        let fe = flat_extension_check(&mv, 3, 1, DEFAULT_RANK_TOL).unwrap();
        assert!(fe.flat);
        assert_eq!(fe.rank_high, 3);
        // Perturb the top-degree moments of a Dirac vector: M_3 gains rank,
        // M_2 does not see the change.
        let mut vals = dirac.values().to_vec();
        for (v, m) in vals.iter_mut().zip(dirac.basis()) {
            if m.degree() == 6 {
                *v += 0.5;
            }
        }
        let bumped = MomentVector::new(2, 6, vals).unwrap();
        let fe = flat_extension_check(&bumped, 3, 1, DEFAULT_RANK_TOL).unwrap();
        assert!(!fe.flat);
        assert!(fe.rank_low < fe.rank_high);
    }

    #[test]
    fn extract_dirac_and_pair() {
        let dirac = MomentVector::from_atoms(&[Atom::new(vec![0.25, -0.5], 1.0)], 2, 2).unwrap();
        let atoms = extract_atoms(&dirac, 2).unwrap();
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].weight - 1.0).abs() < 1e-9);
        assert!((atoms[0].point[0] - 0.25).abs() < 1e-9);
        assert!((atoms[0].point[1] + 0.5).abs() < 1e-9);

        let pair = MomentVector::from_atoms(
            &[Atom::new(vec![-1.0], 0.5), Atom::new(vec![1.0], 0.5)],
            1,
            2,
        )
        .unwrap();
        let mut atoms = extract_atoms(&pair, 2).unwrap();
        atoms.sort_by(|a, b| a.point[0].total_cmp(&b.point[0]));
        assert_eq!(atoms.len(), 2);
        assert!((atoms[0].point[0] + 1.0).abs() < 1e-6);
        assert!((atoms[1].point[0] - 1.0).abs() < 1e-6);
        assert!((atoms[0].weight - 0.5).abs() < 1e-6);
    }

    #[test]
    fn extract_three_random_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let atoms: Vec<Atom> = (0..3)
            .map(|_| {
                Atom::new(
                    vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    rng.random_range(0.2..1.0),
                )
            })
            .collect();
        let mv = MomentVector::from_atoms(&atoms, 2, 3).unwrap();
        let got = extract_atoms(&mv, 3).unwrap();
        assert_eq!(got.len(), 3);
        assert!(atoms_match(&atoms, &got, 1e-6));
    }

    #[test]
    fn apply_to_bipoly_examples() {
        // Example (2) polynomial against a Dirac in x
        let p = Polynomial::from_terms(
            Space::new(2, 2),
            vec![
                (vec![2, 0, 0, 0], -1.0),
                (vec![1, 1, 0, 1], -2.0),
                (vec![0, 2, 1, 0], -1.0),
                (vec![1, 0, 0, 0], -1.0),
                (vec![0, 1, 0, 0], -1.0),
            ],
        )
        .unwrap();
        let l = MomentVector::from_atoms(&[Atom::new(vec![-0.5, 0.0], 1.0)], 2, 1).unwrap();
        let q = l.apply_to_bipoly(&p, Block::X).unwrap();
        assert_eq!(q.space(), Space::y_only(2));
        assert!(q.max_coeff_diff(&Polynomial::constant(Space::y_only(2), 0.25)) < 1e-15);
        assert_eq!(q, p.eval_block(Block::X, &[-0.5, 0.0]).unwrap());
        let h = MomentVector::from_atoms(&[Atom::new(vec![0.3, -0.1], 1.0)], 2, 1).unwrap();
        let q = h.apply_to_bipoly(&p, Block::Y).unwrap();
        assert!(q.max_coeff_diff(&p.eval_block(Block::Y, &[0.3, -0.1]).unwrap()) < 1e-15);
        let low = MomentVector::from_atoms(&[Atom::new(vec![-0.5, 0.0], 1.0)], 2, 0).unwrap();
        assert!(low.apply_to_bipoly(&p, Block::X).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mv = MomentVector::from_atoms(&[Atom::new(vec![0.5], 2.0)], 1, 2).unwrap();
        let s = serde_json::to_string(&mv).unwrap();
        assert!(s.contains("\"order\":2"));
        let back: MomentVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back.values(), mv.values());
        assert_eq!(back.get(&Monomial::new(vec![3])), Some(0.25));
    }

    pub(crate) fn atoms_match(want: &[Atom], got: &[Atom], tol: f64) -> bool {
        if want.len() != got.len() {
            return false;
        }
        let mut used = vec![false; got.len()];
        for w in want {
            let hit = got.iter().enumerate().position(|(i, g)| {
                !used[i]
                    && (g.weight - w.weight).abs() <= tol
                    && g.point
                        .iter()
                        .zip(&w.point)
                        .all(|(a, b)| (a - b).abs() <= tol)
            });
            match hit {
                Some(i) => used[i] = true,
                None => return false,
            }
        }
        true
    }

    fn arb_atoms() -> impl Strategy<Value = (usize, Vec<Atom>)> {
        (1usize..=3).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(
                    (proptest::collection::vec(-1.0f64..1.0, n), 0.1f64..1.0)
                        .prop_map(|(p, w)| Atom::new(p, w)),
                    0..=5,
                ),
            )
        })
    }

    fn well_separated(atoms: &[Atom]) -> bool {
        atoms.iter().enumerate().all(|(i, a)| {
            atoms[i + 1..].iter().all(|b| {
                a.point
                    .iter()
                    .zip(&b.point)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
                    > 0.3
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn atoms_give_psd_moment_and_localizing((n, atoms) in arb_atoms()) {
            let mv = MomentVector::from_atoms(&atoms, n, 2).unwrap();
            for k in 0..=2 {
                let m = mv.moment_matrix(k).unwrap();
                let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                prop_assert!(min_eigenvalue(&m) >= -1e-12 * scale);
            }
            // the unit-box generators are nonnegative at every atom
            let space = Space::y_only(n);
            for i in 0..n {
                let g = &Polynomial::constant(space, 1.0) - &Polynomial::y(space, i).pow(2);
                let lm = mv.localizing_matrix(&g, 2).unwrap();
                prop_assert!(min_eigenvalue(&lm) >= -1e-12);
            }
        }

        #[test]
        fn moment_matrix_is_hankel((n, atoms) in arb_atoms()) {
            let mv = MomentVector::from_atoms(&atoms, n, 2).unwrap();
            let m = mv.moment_matrix(2).unwrap();
            let rows = crate::poly::monomial_basis(n, 2);
            for a in 0..rows.len() {
                for b in 0..rows.len() {
                    for c in 0..rows.len() {
                        for d in 0..rows.len() {
                            if rows[a].mul(&rows[b]) == rows[c].mul(&rows[d]) {
                                prop_assert_eq!(m[(a, b)], m[(c, d)]);
                            }
                        }
                    }
                }
            }
        }

        #[test]
        fn extraction_roundtrip((n, atoms) in arb_atoms()) {
            prop_assume!(well_separated(&atoms));
            let k = (1u32..).find(|&k| basis_len(n, k - 1) >= atoms.len()).unwrap();
            let mv = MomentVector::from_atoms(&atoms, n, k).unwrap();
            let fe = flat_extension_check(&mv, k, 1, DEFAULT_RANK_TOL).unwrap();
            prop_assume!(fe.flat);
            let got = extract_atoms(&mv, k).unwrap();
            prop_assert!(atoms_match(&atoms, &got, 1e-6), "{:?} vs {:?}", atoms, got);
        }

        #[test]
        fn bipoly_contraction_is_linear(
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            u in proptest::collection::vec(-1.0f64..1.0, 2),
            v in proptest::collection::vec(-1.0f64..1.0, 2),
        ) {
            let p = Polynomial::from_terms(
                Space::new(2, 1),
                vec![(vec![2, 0, 1], 1.5), (vec![1, 1, 0], -2.0), (vec![0, 0, 2], 0.5), (vec![0, 1, 1], 3.0)],
            ).unwrap();
            let m1 = MomentVector::from_atoms(&[Atom::new(u, 1.0)], 2, 1).unwrap();
            let m2 = MomentVector::from_atoms(&[Atom::new(v, 0.5)], 2, 1).unwrap();
            let lhs = m1.linear_combination(a, &m2, b).unwrap().apply_to_bipoly(&p, Block::X).unwrap();
            let rhs = &m1.apply_to_bipoly(&p, Block::X).unwrap().scale(a)
                + &m2.apply_to_bipoly(&p, Block::X).unwrap().scale(b);
            prop_assert!(lhs.max_coeff_diff(&rhs) <= 1e-12);
        }
    }
}
