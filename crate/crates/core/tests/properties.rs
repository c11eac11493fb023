use kkl_core::design::build_filter;
use kkl_core::linalg::{c64, kron, mat_mul, real_embed, solve_sylvester, Matrix, C64};
use kkl_core::system::{lift_matrix, monomial_basis};
use proptest::prelude::*;

fn entry() -> impl Strategy<Value = f64> {
    -1.0f64..1.0
}

fn complex() -> impl Strategy<Value = C64> {
    (entry(), entry()).prop_map(|(re, im)| c64(re, im))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(complex(), rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #[test]
    fn kron_entries((a, b) in (1usize..4, 1usize..4, 1usize..4, 1usize..4)
        .prop_flat_map(|(ar, ac, br, bc)| (matrix(ar, ac), matrix(br, bc))))
    {
        let k = kron(&a, &b);
        let (br, bc) = b.shape();
        prop_assert_eq!(k.shape(), (a.rows() * br, a.cols() * bc));
        for i in 0..k.rows() {
            for j in 0..k.cols() {
                prop_assert_eq!(k[(i, j)], a[(i / br, j / bc)] * b[(i % br, j % bc)]);
            }
        }
    }

    #[test]
    fn real_embedding_is_complex_multiplication(l in complex(), z in complex()) {
        let v = real_embed(l).real_mul_vec(&[z.re, z.im]).unwrap();
        let w = l * z;
        prop_assert!((v[0] - w.re).abs() < 1e-15 && (v[1] - w.im).abs() < 1e-15);
    }

    #[test]
    fn sylvester_residual_is_small(
        (d, diag, c) in (1usize..5, 1usize..7).prop_flat_map(|(m, k)| (
            matrix(k, k),
            prop::collection::vec(complex(), m),
            matrix(m, k),
        ))
    ) {
        // |A| ≤ 0.5 on the diagonal and D = 3I + E with |E| < k keeps the
        // spectra apart.
        let a = Matrix::from_diag(&diag.iter().map(|z| z * 0.35).collect::<Vec<_>>());
        let d = d.scale(c64(0.25, 0.0)).add(&Matrix::identity(d.rows()).scale(c64(3.0, 0.0))).unwrap();
        let m = solve_sylvester(&d, &a, &c).unwrap();
        let res = mat_mul(&m, &d).unwrap().sub(&mat_mul(&a, &m).unwrap()).unwrap().sub(&c).unwrap();
        prop_assert!(res.max_abs() <= 1e-12 * (1.0 + m.max_abs()));
    }

    #[test]
    fn lift_commutes_with_dynamics(
        n in 1usize..4,
        d in 1usize..4,
        seed in prop::collection::vec(entry(), 9),
        x in prop::collection::vec(entry(), 3),
    ) {
        let f = Matrix::new(n, n, seed[..n * n].iter().map(|&v| c64(v, 0.0)).collect()).unwrap();
        let basis = monomial_basis(n, d).unwrap();
        prop_assert_eq!(basis.len(), binomial(n + d, d));
        let lift = lift_matrix(&f, &basis).unwrap();
        let x = &x[..n];
        let fx = f.real_mul_vec(x).unwrap();
        let lhs = basis.eval(&fx);
        let rhs = lift.real_mul_vec(&basis.eval(x)).unwrap();
        let scale = 1.0 + basis.eval(x).iter().map(|v| v * v).sum::<f64>().sqrt();
        for (u, v) in lhs.iter().zip(&rhs) {
            prop_assert!((u - v).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn filter_realizations_agree(
        eigs in prop::collection::vec((0.05f64..0.95, 0.0f64..std::f64::consts::TAU), 1..5),
        ys in prop::collection::vec(-2.0f64..2.0, 1..40),
    ) {
        let eigs: Vec<C64> = eigs.iter().map(|&(r, th)| C64::from_polar(r, th)).collect();
        let separated = eigs.iter().enumerate().all(|(i, a)| eigs[..i].iter().all(|b| (a - b).norm() > 1e-3));
        prop_assume!(separated);
        let filter = build_filter(&eigs, 1).unwrap();
        let mut xc = vec![C64::default(); filter.dim()];
        let mut xr = vec![0.0; 2 * filter.dim()];
        for y in ys {
            xc = filter.step_complex(&xc, &[y]).unwrap();
            xr = filter.step_real(&xr, &[y]).unwrap();
        }
        for (i, z) in xc.iter().enumerate() {
            prop_assert!((xr[2 * i] - z.re).abs() <= 1e-12 && (xr[2 * i + 1] - z.im).abs() <= 1e-12);
        }
    }

    #[test]
    fn matrix_json_round_trip_is_exact(m in (1usize..4, 1usize..4).prop_flat_map(|(r, c)| matrix(r, c))) {
        let back: Matrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}
