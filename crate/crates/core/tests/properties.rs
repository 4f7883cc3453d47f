mod common;

use common::*;
use proptest::prelude::*;
use sipsdp::moments::{extract_atoms, Atom, MomentVector};
use sipsdp::poly::{monomial_basis, Block, Polynomial, Space};
use sipsdp::problem::ProblemFile;
use sipsdp::relax::{
    build_dsdp, build_psdp, solve_relaxation, support_value, SipProblem, ThetaForm,
};
use sipsdp::sdp::Settings;

fn value(prob: &SipProblem, r: u32, t: u32, dual: bool) -> f64 {
    let rel = if dual {
        build_dsdp(prob, r, t)
    } else {
        build_psdp(prob, r, t)
    }
    .unwrap();
    solve_relaxation(&rel, &Settings::default()).unwrap().value
}

#[test]
fn weak_duality_on_synthetic_instances() {
    for (name, prob) in synthetic() {
        for t in 1..=2 {
            let d = value(&prob, 1, t, true);
            let p = value(&prob, 1, t, false);
            assert!(p <= d + 1e-6, "{name} t={t}: primal {p} above dual {d}");
        }
    }
}

#[test]
fn dual_is_nonincreasing_in_t() {
    for (name, prob) in synthetic() {
        let v: Vec<f64> = (1..=3).map(|t| value(&prob, 1, t, true)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{name}: {v:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lambda_nests_in_both_orders(angle in 0.0..std::f64::consts::TAU) {
        let prob = cross_instance();
        let a = [angle.cos(), angle.sin()];
        let h = |r, t| support_value(&prob, &a, r, t, ThetaForm::Full).unwrap().value;
        let base = h(1, 1);
        prop_assert!(h(2, 1) <= base + 1e-6);
        prop_assert!(h(1, 2) >= base - 1e-6);
    }

    #[test]
    fn homogenization_is_undone_by_fixing_y0(
        coefs in prop::collection::vec(-3.0..3.0f64, 10),
        lead in 0.5..2.0f64,
    ) {
        let basis = monomial_basis(2, 3);
        let terms = basis
            .iter()
            .zip(&coefs)
            .map(|(m, c)| (m.exponents().to_vec(), *c))
            .chain(std::iter::once((vec![0, 3], lead)));
        let g = Polynomial::from_terms(Space::y_only(2), terms).unwrap();
        let gh = g.homogenize_y().unwrap();
        prop_assert!(gh.terms().all(|(m, _)| m.degree() == 3));
        prop_assert!(gh.fix_variable(Block::Y, 0, 1.0).max_coeff_diff(&g) < 1e-14);
    }

    #[test]
    fn atoms_round_trip(
        pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.2..1.0f64), 1..=5),
    ) {
        let atoms: Vec<Atom> = pts.iter().map(|&(a, b, w)| Atom::new(vec![a, b], w)).collect();
        let separated = atoms.iter().enumerate().all(|(i, a)| {
            atoms[..i].iter().all(|b| a.point.iter().zip(&b.point).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) > 0.05)
        });
        prop_assume!(separated);
        let mv = MomentVector::from_atoms(&atoms, 2, 3).unwrap();
        let got = extract_atoms(&mv, 3).unwrap();
        prop_assert_eq!(got.len(), atoms.len());
        for a in &atoms {
            let err = got
                .iter()
                .map(|b| {
                    let d = a.point.iter().zip(&b.point).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                    d.max((a.weight - b.weight).abs())
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(err < 1e-6, "error {}", err);
        }
    }
}

#[test]
fn problem_files_round_trip() {
    for name in [
        "example1_general.json",
        "example2_sosconvex.json",
        "final_example.json",
        "lambda_set1.json",
        "lambda_set2.json",
    ] {
        let file = ProblemFile::load(problem_path(name)).unwrap();
        let again = ProblemFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(file, again, "{name}");
        let p1 = file.problem().unwrap();
        let p2 = ProblemFile::from_problem(&p1).problem().unwrap();
        assert!(p1.p.max_coeff_diff(&p2.p) < 1e-15, "{name}");
        assert!(p1.f.max_coeff_diff(&p2.f) < 1e-15, "{name}");
        assert_eq!(p1.tau_k, p2.tau_k);
    }
}
