use std::f64::consts::PI;

use confluence_kit::closed_form::{conjugation_route, monodromies, stokes_confluent, stokes_limit};
use confluence_kit::cplx::{det, diag_power, eig, inverse, lu_solve, multiset_distance, Branch, CMat, CNum};
use confluence_kit::model::{build_companion, ensure_valid, frame, BlockStructure, HGParams, Rho, Sign};
use confluence_kit::series::shift_identity_residual;
use confluence_kit::special::{gamma, pochhammer, pole_distance};
use confluence_kit::verify::{entry_deviation, regression_case, run_check, CheckConfig};
use proptest::prelude::*;

fn cnum(re: std::ops::Range<f64>, im: std::ops::Range<f64>) -> impl Strategy<Value = CNum> {
    (re, im).prop_map(|(a, b)| CNum::new(a, b))
}

fn matrix(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(cnum(-1.0..1.0, -1.0..1.0), n * n).prop_map(move |v| {
        let rows: Vec<Vec<CNum>> = v.chunks(n).map(|c| c.to_vec()).collect();
        CMat::from_rows(&rows).unwrap()
    })
}

// Diagonal shift keeps the condition number modest.
fn well_conditioned(n: usize) -> impl Strategy<Value = CMat> {
    matrix(n).prop_map(move |m| &m + &CMat::identity(n).scale(CNum::new(2.5 * n as f64, 0.0)))
}

fn params(n: usize) -> impl Strategy<Value = HGParams> {
    (
        prop::collection::vec(cnum(-1.2..1.2, -0.3..0.3), n),
        prop::collection::vec(cnum(-0.8..2.2, -0.3..0.3), n - 1),
        cnum(0.5..4.0, -1.0..1.0),
    )
        .prop_filter_map("resonant", |(a, b, rho)| {
            let p = HGParams::new(a, b, Rho::Finite(rho)).ok()?;
            ensure_valid(&p, None).ok()?;
            Some(p)
        })
}

fn any_params() -> impl Strategy<Value = HGParams> {
    prop_oneof![params(2), params(3), params(4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lu_solve_reproduces_rhs(a in well_conditioned(4), b in matrix(4)) {
        let x = lu_solve(&a, &b).unwrap();
        let back = &a * &x;
        prop_assert!(back.max_abs_diff(&b) <= 1e-12 * b.max_abs().max(1.0));
    }

    #[test]
    fn det_is_multiplicative(a in matrix(4), b in matrix(4)) {
        let lhs = det(&(&a * &b)).unwrap();
        let rhs = det(&a).unwrap() * det(&b).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1e-3));
    }

    #[test]
    fn eig_is_similarity_invariant(a in matrix(4), p in well_conditioned(4)) {
        let conj = &(&inverse(&p).unwrap() * &a) * &p;
        let d = multiset_distance(&eig(&a).unwrap(), &eig(&conj).unwrap());
        prop_assert!(d < 1e-8, "{}", d);
    }

    #[test]
    fn diag_power_inverts(d in prop::collection::vec(cnum(-3.0..3.0, -3.0..3.0), 1..6), base in cnum(-2.0..2.0, -2.0..2.0)) {
        prop_assume!(base.norm() > 1e-3);
        let neg: Vec<CNum> = d.iter().map(|x| -x).collect();
        let br = Branch::PRINCIPAL;
        let prod = &diag_power(&d, base, br).unwrap() * &diag_power(&neg, base, br).unwrap();
        prop_assert!(prod.max_abs_diff(&CMat::identity(d.len())) < 1e-13);
    }

    #[test]
    fn gamma_recurrence(z in cnum(-14.0..14.0, -14.0..14.0)) {
        prop_assume!(pole_distance(z).1 > 1e-3 && pole_distance(z + 1.0).1 > 1e-3);
        let g0 = gamma(z).unwrap().value;
        let g1 = gamma(z + 1.0).unwrap().value;
        prop_assert!((g1 - z * g0).norm() <= 1e-11 * g1.norm());
    }

    #[test]
    fn pochhammer_is_gamma_quotient(a in cnum(0.1..6.0, -4.0..4.0), k in 0usize..12) {
        let want = gamma(a + k as f64).unwrap().value / gamma(a).unwrap().value;
        prop_assert!((pochhammer(a, k) - want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn companion_spectrum(p in any_params()) {
        let spec = eig(&build_companion(&p).unwrap()).unwrap();
        let want: Vec<CNum> = p.alpha().iter().map(|a| -a).collect();
        prop_assert!(multiset_distance(&spec, &want) < 1e-10);
    }

    #[test]
    fn frame_diagonalizes_and_commutes(p in any_params()) {
        prop_assume!(p.beta_head().windows(2).all(|w| (w[0] - w[1]).norm() > 0.05));
        let fr = frame(&p).unwrap();
        let at_d = CMat::from_diag(&fr.at_d);
        let conj = &(&fr.r_inv * &fr.a_d) * &fr.r;
        prop_assert!(conj.max_abs_diff(&at_d) < 1e-12 * fr.r.max_abs().max(1.0).powi(2));
        let b = BlockStructure::gen_hg(p.n()).matrix();
        prop_assert_eq!(&fr.r * &b, &b * &fr.r);
    }

    #[test]
    fn shift_identity(p in any_params(), c in cnum(-1.5..1.5, -1.0..1.0)) {
        let plus_c = |v: &[CNum]| v.iter().all(|x| pole_distance(x + c).1 > 0.05);
        prop_assume!(plus_c(p.alpha()) && plus_c(p.beta_head()));
        let res = shift_identity_residual(p.alpha(), p.beta_head(), c, CNum::new(0.3, 0.0)).unwrap();
        prop_assert!(res < 1e-8, "{}", res);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // |Im ρ| ≤ 1 keeps e^{2πiρ} and the conditioning of C moderate enough for 1e-10
    #[test]
    fn minus_monodromies_are_conjugates(name in prop::sample::select(vec!["n2-a", "n2-b", "n3-a", "n3-b", "n4-a"]),
                                        rho in cnum(1.0..8.0, -1.0..1.0)) {
        let p = regression_case(name).unwrap().with_rho(Rho::Finite(rho));
        prop_assume!(ensure_valid(&p, None).is_ok());
        let m = monodromies(&p).unwrap();
        let Some(c) = m.c else { return Ok(()) };
        let ci = inverse(&c).unwrap();
        prop_assert!(entry_deviation(&(&(&ci * &m.m0_plus) * &c), &m.m0_minus) < 1e-10);
        prop_assert!(entry_deviation(&(&(&ci * &m.m1_plus) * &c), &m.m1_minus) < 1e-10);
    }

    #[test]
    fn routes_agree(name in prop::sample::select(vec!["n2-a", "n2-b", "n3-a", "n3-b", "n4-a"]),
                    abs in 5.0f64..300.0, arg in -1.2f64..1.2, minus in any::<bool>()) {
        let (sign, arg) = if minus { (Sign::Minus, arg + PI) } else { (Sign::Plus, arg) };
        let p = regression_case(name).unwrap().with_rho(Rho::Finite(CNum::from_polar(abs, arg)));
        prop_assume!(ensure_valid(&p, None).is_ok());
        let lim = stokes_limit(&p.with_rho(Rho::Infinity)).unwrap();
        let direct = stokes_confluent(&p, sign).unwrap();
        let conj = conjugation_route(&p, sign, &lim).unwrap();
        prop_assert!(entry_deviation(&conj.s_upper, &direct.s_upper) < 1e-10);
        prop_assert!(entry_deviation(&conj.s_lower, &direct.s_lower) < 1e-10);
    }
}

#[test]
fn check_reports_are_reproducible() {
    let p = regression_case("n3-b").unwrap();
    let strip = |mut v: Vec<confluence_kit::verify::CheckReport>| {
        for r in &mut v {
            r.runtime_ms = 0.0;
        }
        v
    };
    let a = strip(run_check("all", &p, CheckConfig::default()).unwrap());
    let b = strip(run_check("all", &p, CheckConfig::default()).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.deviation.to_bits(), y.deviation.to_bits(), "{}", x.name);
        assert_eq!(x, y);
    }
}
