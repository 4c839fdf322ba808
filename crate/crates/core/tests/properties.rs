use beamfd::discretize::{assemble_a, build_grid, eigenvalues_a};
use beamfd::linalg::{jacobi_eigenvalues, BandedSpd};
use beamfd::output::{read_columns, write_columns};
use beamfd::solvers::{
    ave_solve, contraction_constant, dist2, general_solve, norm_inf, ContactMap,
};
use beamfd::{BvpSpec, PiecewiseLinearContact, RightHandSide};
use proptest::prelude::*;

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, p);
        b.swap(col, p);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot[col];
            for (r, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *r -= f * p;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn spec_strategy() -> impl Strategy<Value = BvpSpec> {
    (
        -2.0..2.0f64,
        0.2..3.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        -30.0..30.0f64,
        -30.0..30.0f64,
    )
        .prop_map(|(a, l, a1, a2, b1, b2)| BvpSpec::new(a, a + l, a1, a2, b1, b2).unwrap())
}

fn plane(k: f64, slope: f64, offset: f64) -> PiecewiseLinearContact {
    PiecewiseLinearContact::new(k, move |x| offset + slope * x, move |_| slope).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn map_contracts_with_certified_constant(
        spec in spec_strategy(),
        k in 0.0..1e5f64,
        n in 5usize..40,
        seed in proptest::collection::vec(-5.0..5.0f64, 80),
    ) {
        let contact = plane(k, 0.3, 0.1);
        let grid = build_grid(&spec, n).unwrap();
        let map = ContactMap::new(&spec, &contact, &grid).unwrap();
        let c = contraction_constant(&spec, k).unwrap();
        let x = &seed[..n];
        let y = &seed[40..40 + n];
        let lhs = dist2(&map.apply(x).unwrap(), &map.apply(y).unwrap());
        prop_assert!(lhs <= c * dist2(x, y) + 1e-12);
        prop_assert!(map.spectral_contraction() <= c + 1e-15);
    }

    #[test]
    fn banded_solve_matches_dense_elimination(
        n in 5usize..30,
        shift in 0.0..2.0f64,
        rhs in proptest::collection::vec(-10.0..10.0f64, 30),
    ) {
        let a = assemble_a(n).unwrap().shifted(shift);
        let b = rhs[..n].to_vec();
        let banded = a.solve(&b).unwrap();
        let dense = dense_solve(a.to_dense(), b.clone());
        let scale = 1.0 + norm_inf(&dense);
        for (u, v) in banded.iter().zip(&dense) {
            prop_assert!((u - v).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn random_spd_band_round_trip(
        diag in proptest::collection::vec(6.0..10.0f64, 12),
        off1 in proptest::collection::vec(-2.0..2.0f64, 11),
        off2 in proptest::collection::vec(-1.0..1.0f64, 10),
        x in proptest::collection::vec(-3.0..3.0f64, 12),
    ) {
        // diagonally dominant, hence SPD
        let a = BandedSpd::from_bands(diag, off1, off2).unwrap();
        let y = a.mul_vec(&x).unwrap();
        let back = a.solve(&y).unwrap();
        let dense = dense_solve(a.to_dense(), y);
        for ((u, v), w) in back.iter().zip(&x).zip(&dense) {
            prop_assert!((u - v).abs() < 1e-10);
            prop_assert!((u - w).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let idx: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        write_columns(&path, &["i", "v"], &[&idx, &values]).unwrap();
        let (_, cols) = read_columns(&path).unwrap();
        prop_assert_eq!(
            cols[1].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fixed_point_independent_of_start(
        spec in spec_strategy(),
        k in 1.0..1e3f64,
        start in -100.0..100.0f64,
    ) {
        let contact = plane(k, 0.2, 0.0);
        let grid = build_grid(&spec, 20).unwrap();
        let tol = 1e-11;
        let (a, ra) = ave_solve(&spec, &contact, &grid, tol, 200_000, None).unwrap();
        let (b, rb) = ave_solve(&spec, &contact, &grid, tol, 200_000, Some(&[start; 20])).unwrap();
        prop_assert!(ra.converged && rb.converged);
        prop_assert!(dist2(&a, &b) < 1e-8);
    }

    #[test]
    fn general_and_contact_solvers_agree(spec in spec_strategy(), k in 0.0..1e3f64) {
        let contact = plane(k, -0.1, 0.05);
        let grid = build_grid(&spec, 15).unwrap();
        let (w, _) = ave_solve(&spec, &contact, &grid, 1e-12, 200_000, None).unwrap();
        let rhs = RightHandSide::General(contact.as_general());
        let (v, report) = general_solve(&spec, &rhs, &grid, 1e-12, 200_000, 0.5).unwrap();
        prop_assert!(report.converged);
        let gap = w.iter().zip(&v).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(gap < 1e-6, "gap {}", gap);
    }
}

#[test]
fn jacobi_reproduces_closed_form_spectrum() {
    for n in [5, 6, 10, 25, 50] {
        let dense = jacobi_eigenvalues(&assemble_a(n).unwrap().to_dense()).unwrap();
        let formula = eigenvalues_a(n).unwrap();
        for (u, v) in dense.iter().zip(&formula) {
            assert!((u - v).abs() < 1e-10, "N = {n}: {u} vs {v}");
        }
    }
}
