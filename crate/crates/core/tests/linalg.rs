mod common;

use common::{max_diff, RandomQp};
use evr::linalg::{least_squares, nnls, solve_qp, DenseMatrix, QpProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn six_variable_qp_matches_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let qp = RandomQp::draw(&mut rng, 6, 2);
    let x = solve_qp(&qp.problem()).unwrap().x;
    let oracle = qp.projected_gradient(1e-10);
    assert!(max_diff(&x, &oracle) < 1e-6, "{x:?} vs {oracle:?}");
}

#[test]
fn random_qps_match_both_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(0..=n.min(3));
        let qp = RandomQp::draw(&mut rng, n, m);
        let sol = solve_qp(&qp.problem()).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let exhaustive = qp.exhaustive();
        assert!(max_diff(&sol.x, &exhaustive) < 1e-6, "case {case} exhaustive: {:?} vs {exhaustive:?}", sol.x);
        let pg = qp.projected_gradient(1e-10);
        assert!(max_diff(&sol.x, &pg) < 1e-6, "case {case} projected gradient: {:?} vs {pg:?}", sol.x);
        assert!(sol.feasibility_violation(&qp.problem()) < 1e-8);
    }
}

#[test]
fn nnls_special_case_agrees_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(1..=8);
        let rows = n + 5;
        let a: Vec<Vec<f64>> = (0..rows).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let am = DenseMatrix::from_rows(&a).unwrap();
        let h = am.gram();
        let f: Vec<f64> = am.tr_matvec(&y).iter().map(|v| -v).collect();
        let qp = RandomQp { h: (0..n).map(|i| h.row(i).to_vec()).collect(), f: f.clone(), a: vec![], b: vec![] };
        let oracle = qp.exhaustive();
        let via_qp = solve_qp(&QpProblem::new(h, f).with_nonnegative(0..n)).unwrap().x;
        let direct = nnls(&am, &y, 0..n).unwrap().x;
        assert!(max_diff(&via_qp, &oracle) < 1e-6);
        assert!(max_diff(&direct, &oracle) < 1e-6);
    }
}

#[test]
fn nnls_satisfies_optimality_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rows, n) = (40, 12);
    let a = DenseMatrix::from_row_major(rows, n, (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = nnls(&a, &y, 2..n).unwrap();
    let r: Vec<f64> = a.matvec(&s.x).iter().zip(&y).map(|(p, v)| v - p).collect();
    let w = a.tr_matvec(&r);
    for (j, (&wj, &xj)) in w.iter().zip(&s.x).enumerate() {
        if j < 2 || xj > 0.0 {
            assert!(wj.abs() < 1e-9, "gradient {j} = {wj}");
        } else {
            assert!(wj <= 1e-9 && xj == 0.0);
        }
    }
}

#[test]
fn least_squares_matches_householder_qr() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (rows, n) = (50, 4);
    let data: Vec<f64> = (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (x, _) = least_squares(&DenseMatrix::from_row_major(rows, n, data.clone()).unwrap(), &y).unwrap();
    let qr = DMatrix::from_row_slice(rows, n, &data).qr();
    let qty = qr.q().transpose() * DVector::from_vec(y);
    let oracle = qr.r().solve_upper_triangular(&qty).unwrap();
    assert!(max_diff(&x, oracle.as_slice()) < 1e-9);
}
