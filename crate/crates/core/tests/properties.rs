use morspai::chain::{update_build, Direction, PrecondChain, UpdateFactor};
use morspai::kron::{dense_kron, KroneckerOperator};
use morspai::mm::{matrix_market_string, parse_matrix_market};
use morspai::spai::{spai_build, PatternKind, SpaiConfig};
use morspai::sparse::SparseMatrix;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dense(n: usize, m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * m).prop_map(move |v| DMatrix::from_vec(n, m, v))
}

/// Entries are zeroed with probability about one half.
fn sparse(n: usize, m: usize) -> impl Strategy<Value = SparseMatrix> {
    (dense(n, m), prop::collection::vec(any::<bool>(), n * m)).prop_map(move |(d, keep)| {
        let d = DMatrix::from_fn(n, m, |i, j| if keep[i + j * n] { d[(i, j)] } else { 0.0 });
        SparseMatrix::from_dense(&d, 0.0)
    })
}

fn square_sized(max: usize) -> impl Strategy<Value = (usize, DMatrix<f64>)> {
    (1..=max).prop_flat_map(|n| (Just(n), dense(n, n)))
}

fn full(n: usize) -> SpaiConfig {
    SpaiConfig {
        pattern: PatternKind::PatternOfAPowK(n),
        ..Default::default()
    }
    .static_pattern()
}

fn factor(q: SparseMatrix) -> UpdateFactor {
    UpdateFactor {
        q,
        direction: Direction::Horizontal,
        from_index: (0, 0),
        to_index: (0, 0),
        min_residual: 0.0,
        identity_residual: 0.0,
        build_seconds: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_pattern_spai_inverts((n, a) in square_sized(10)) {
        let a = a + DMatrix::identity(n, n) * n as f64;
        let p = spai_build(&SparseMatrix::from_dense(&a, 0.0), &full(n)).unwrap();
        let inv = a.try_inverse().unwrap();
        prop_assert!((p.matrix.to_dense() - &inv).norm() <= 1e-10 * inv.norm());
    }

    #[test]
    fn updates_never_lose_to_identity(
        (n, a, b) in (2..=12usize).prop_flat_map(|n| (Just(n), sparse(n, n), sparse(n, n)))
    ) {
        let shift = SparseMatrix::identity(n).scale(3.0);
        let a = a.add_scaled(1.0, &shift, 1.0).unwrap();
        let b = b.add_scaled(1.0, &shift, 1.0).unwrap();
        for cfg in [SpaiConfig::default(), SpaiConfig::default().static_pattern()] {
            let q = update_build(&a, &b, &cfg).unwrap();
            prop_assert!(q.min_residual <= q.identity_residual * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn chain_is_the_product(
        (n, base, qs, x) in (1..=12usize).prop_flat_map(|n| (
            Just(n),
            sparse(n, n),
            prop::collection::vec(sparse(n, n), 0..=5),
            dense(n, 1),
        ))
    ) {
        let mut chain = PrecondChain::new(base.clone(), 0.0).unwrap();
        let mut want = &base.to_dense() * &x;
        for q in qs {
            want = q.to_dense() * want;
            chain = chain.chain_extend(factor(q)).unwrap();
        }
        let got = chain.chain_apply(x.as_slice()).unwrap();
        let err = (DMatrix::from_column_slice(n, 1, &got) - &want).norm();
        prop_assert!(err <= 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn kron_matches_dense(
        (n, r, lam, k, cs, v) in (1..=6usize, 1..=4usize).prop_flat_map(|(n, r)| (
            Just(n),
            Just(r),
            dense(r, r),
            sparse(n, n),
            prop::collection::vec((dense(r, r), sparse(n, n)), 0..=2),
            dense(n * r, 1),
        ))
    ) {
        let mut oracle = -dense_kron(&lam, &DMatrix::identity(n, n)) - dense_kron(&DMatrix::identity(r, r), &k.to_dense());
        for (s, b) in &cs {
            oracle -= dense_kron(&s.transpose(), &b.to_dense());
        }
        let op = KroneckerOperator::new(lam, k, cs).unwrap();
        let got = DMatrix::from_column_slice(n * r, 1, &op.kron_matvec(v.as_slice()).unwrap());
        let want = &oracle * &v;
        prop_assert!((got - &want).norm() <= 1e-12 * want.norm().max(1.0));
        let explicit = op.assemble_explicit(usize::MAX).unwrap().to_dense();
        prop_assert!((explicit - &oracle).norm() <= 1e-12 * oracle.norm().max(1.0));
    }

    #[test]
    fn matrix_market_round_trip((n, m) in (1..=8usize, 1..=8usize), seed in any::<u64>()) {
        let d = DMatrix::from_fn(n, m, |i, j| {
            let h = seed.wrapping_mul(31).wrapping_add((i * 17 + j * 5) as u64) % 7;
            if h < 3 { 0.0 } else { (h as f64 - 3.5) / 3.0 * 1e-3f64.powi((h % 3) as i32) }
        });
        let a = SparseMatrix::from_dense(&d, 0.0);
        let back = parse_matrix_market(matrix_market_string(&a).as_bytes(), std::path::Path::new("p.mtx")).unwrap();
        prop_assert_eq!(a, back);
    }
}

#[test]
fn assembly_cap_is_enforced() {
    let op = KroneckerOperator::with_diagonal_shifts(&[1.0, 2.0, 3.0], SparseMatrix::identity(10), vec![]).unwrap();
    assert!(op.assemble_explicit(5).is_err());
    assert_eq!(op.assemble_explicit(1000).unwrap().nnz(), 30);
}
