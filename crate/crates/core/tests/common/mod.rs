#![allow(dead_code)]

use std::path::PathBuf;

use sipsdp::linalg::min_eigenvalue;
use sipsdp::poly::{Polynomial, Space};
use sipsdp::problem::ProblemFile;
use sipsdp::relax::{HierarchyPoint, SipProblem};

pub fn problems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

pub fn problem_path(name: &str) -> PathBuf {
    problems_dir().join(name)
}

pub fn load(name: &str) -> SipProblem {
    ProblemFile::load(problem_path(name))
        .unwrap()
        .problem()
        .unwrap()
}

pub fn poly(space: Space, terms: &[(&[u32], f64)]) -> Polynomial {
    Polynomial::from_terms(space, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
}

pub fn interval_gen() -> Polynomial {
    poly(Space::y_only(1), &[(&[0], 1.0), (&[2], -1.0)])
}

/// `K = [-1, 1]` from `4 - (x - y)^2 >= 0` on `[-1, 1]`; `f = (x - 2)^2`,
/// `f* = 1` at `x = 1`.
pub fn interval_instance() -> SipProblem {
    let s = Space::new(1, 1);
    let p = poly(
        s,
        &[
            (&[0, 0], 4.0),
            (&[2, 0], -1.0),
            (&[1, 1], 2.0),
            (&[0, 2], -1.0),
        ],
    );
    let f = poly(Space::x_only(1), &[(&[2], 1.0), (&[1], -4.0), (&[0], 4.0)]);
    SipProblem::new(f, p, vec![interval_gen()])
        .unwrap()
        .with_tau(1.5)
}

/// Unit disk from `1 - x.y >= 0` on the unit circle; `f = (x1 - 2)^2 + x2^2`,
/// `f* = 1` at `(1, 0)`.
pub fn disk_instance() -> SipProblem {
    let s = Space::new(2, 2);
    let p = poly(
        s,
        &[
            (&[0, 0, 0, 0], 1.0),
            (&[1, 0, 1, 0], -1.0),
            (&[0, 1, 0, 1], -1.0),
        ],
    );
    let ys = Space::y_only(2);
    let c = poly(ys, &[(&[0, 0], 1.0), (&[2, 0], -1.0), (&[0, 2], -1.0)]);
    let f = poly(
        Space::x_only(2),
        &[
            (&[2, 0], 1.0),
            (&[1, 0], -4.0),
            (&[0, 0], 4.0),
            (&[0, 2], 1.0),
        ],
    );
    SipProblem::new(f, p, vec![c.clone(), -&c])
        .unwrap()
        .with_tau(1.2)
}

/// Cross-polytope `|x1| + |x2| <= 1` from `1 - x.y >= 0` on `[-1, 1]^2`;
/// `f = (x1 - 1)^2 + (x2 - 1)^2`, `f* = 0.5` at `(0.5, 0.5)`.
pub fn cross_instance() -> SipProblem {
    let s = Space::new(2, 2);
    let p = poly(
        s,
        &[
            (&[0, 0, 0, 0], 1.0),
            (&[1, 0, 1, 0], -1.0),
            (&[0, 1, 0, 1], -1.0),
        ],
    );
    let ys = Space::y_only(2);
    let g1 = poly(ys, &[(&[0, 0], 1.0), (&[2, 0], -1.0)]);
    let g2 = poly(ys, &[(&[0, 0], 1.0), (&[0, 2], -1.0)]);
    let f = poly(
        Space::x_only(2),
        &[
            (&[2, 0], 1.0),
            (&[1, 0], -2.0),
            (&[0, 2], 1.0),
            (&[0, 1], -2.0),
            (&[0, 0], 2.0),
        ],
    );
    SipProblem::new(f, p, vec![g1, g2]).unwrap().with_tau(1.2)
}

pub fn synthetic() -> Vec<(&'static str, SipProblem)> {
    vec![
        ("interval", interval_instance()),
        ("disk", disk_instance()),
        ("cross", cross_instance()),
    ]
}

/// Every point maximizes its own direction over the sample: the sample lies
/// on its convex hull.
pub fn on_own_hull(points: &[Vec<f64>], dirs: &[Vec<f64>], tol: f64) -> Result<(), String> {
    for (k, (x, a)) in points.iter().zip(dirs).enumerate() {
        let own: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
        for (j, z) in points.iter().enumerate() {
            let other: f64 = a.iter().zip(z).map(|(u, v)| u * v).sum();
            if other > own + tol {
                return Err(format!(
                    "point {k} beaten by point {j} in its direction by {}",
                    other - own
                ));
            }
        }
    }
    Ok(())
}

pub fn directions(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vec![a.cos(), a.sin()]
        })
        .collect()
}

/// Smallest eigenvalue over the moment matrix of `L`, the moment matrix of
/// `H` and every localizing matrix of `H`.
pub fn min_functional_eigenvalue(prob: &SipProblem, pt: &HierarchyPoint) -> Option<f64> {
    let mut worst = f64::INFINITY;
    let l = pt.dual.solution.as_ref()?.moments.as_ref()?;
    worst = worst.min(min_eigenvalue(&l.moment_matrix(l.order()).ok()?));
    let h = pt.primal.solution.as_ref()?.moments.as_ref()?;
    worst = worst.min(min_eigenvalue(&h.moment_matrix(pt.t).ok()?));
    for g in &prob.g {
        let loc = h.localizing_matrix(g, pt.t).ok()?;
        if loc.nrows() > 0 {
            worst = worst.min(min_eigenvalue(&loc));
        }
    }
    Some(worst)
}

/// `min over samples of f(x) - rho + eta (1 + Theta_r(x)) - sum_i lambda_i p(x, y_i)`
/// using the certified atoms of `pt`; `None` without certified atoms.
pub fn lagrangian_min(prob: &SipProblem, pt: &HierarchyPoint, samples: &[Vec<f64>]) -> Option<f64> {
    let atoms = pt.active_indices.as_ref()?.atoms()?;
    let sol = pt.primal.solution.as_ref()?;
    let rho = sol.rho?;
    let eta = sol.eta.unwrap_or(0.0);
    let (r, tau) = (pt.r.unwrap_or(1), prob.tau_k.unwrap_or(1.0));
    let mut worst = f64::INFINITY;
    for x in samples {
        let theta: f64 = x.iter().map(|v| (v / tau).powi(2 * r as i32)).sum();
        let mut v = prob.f.evaluate(x).ok()? - rho + eta * (1.0 + theta);
        for a in atoms {
            let mut z = x.clone();
            z.extend_from_slice(&a.point);
            v -= a.weight * prob.p.evaluate(&z).ok()?;
        }
        worst = worst.min(v);
    }
    Some(worst)
}

pub fn random_points(m: usize, count: usize, half_width: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..m)
                .map(|_| rng.random_range(-half_width..=half_width))
                .collect()
        })
        .collect()
}
