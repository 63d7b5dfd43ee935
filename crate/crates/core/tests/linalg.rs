mod common;

use common::{random, singular_values_oracle, to_rows, transpose, triple_loop};
use inhernet::linalg::{condition_number, matmul, matmul_nt, matmul_tn, matmul_with, singular_values, svd, truncated_svd, Matrix};
use inhernet::parallel::Exec;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn truncation_error_matches_oracle_tail() {
    let w = random(8, 5, 1);
    let s = singular_values_oracle(&w);
    let tail = (s[3] * s[3] + s[4] * s[4]).sqrt();
    let err = w.sub(&truncated_svd(&w, 3).unwrap().reconstruct()).unwrap().frobenius_norm();
    assert!((err - tail).abs() < 1e-7, "{err} vs {tail}");
}

#[test]
fn frobenius_norm_equals_spectrum_energy() {
    let w = random(6, 6, 2);
    let energy: f64 = singular_values(&w).unwrap().iter().map(|s| s * s).sum();
    assert!(rel(w.frobenius_norm().powi(2), energy) < 1e-9);
}

#[test]
fn condition_number_matches_oracle() {
    let w = random(5, 5, 3);
    let s = singular_values_oracle(&w);
    assert!(rel(condition_number(&w).unwrap(), s[0] / s[4]) < 1e-8);
}

#[test]
fn transposed_products_match_explicit_transpose() {
    let a = random(7, 4, 4);
    let b = random(7, 5, 5);
    let c = random(6, 4, 6);
    assert!(matmul_tn(&a, &b).unwrap().max_abs_diff(&matmul(&a.transpose(), &b).unwrap()).unwrap() < 1e-13);
    assert!(matmul_nt(&a, &c).unwrap().max_abs_diff(&matmul(&a, &c.transpose()).unwrap()).unwrap() < 1e-13);
}

fn dims() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..24, 1usize..24, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs((m, n, seed) in dims()) {
        let w = random(m, n, seed);
        let f = svd(&w).unwrap();
        prop_assert!(w.max_abs_diff(&f.reconstruct()).unwrap() < 1e-10 * w.frobenius_norm().max(1.0));
    }

    #[test]
    fn singular_vectors_are_orthonormal((m, n, seed) in dims()) {
        let f = svd(&random(m, n, seed)).unwrap();
        for q in [&f.u, &f.v] {
            let g = matmul_tn(q, q).unwrap();
            prop_assert!(g.max_abs_diff(&Matrix::identity(g.rows())).unwrap() < 1e-9);
        }
    }

    #[test]
    fn spectrum_is_sorted_and_matches_oracle((m, n, seed) in dims()) {
        let w = random(m, n, seed);
        let s = svd(&w).unwrap().full_spectrum;
        prop_assert!(s.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        for (a, b) in s.iter().zip(singular_values_oracle(&w)) {
            prop_assert!((a - b).abs() < 1e-8 * s[0].max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn largest_left_entry_is_nonnegative((m, n, seed) in dims()) {
        let f = svd(&random(m, n, seed)).unwrap();
        for k in 0..f.u.cols() {
            let col = f.u.column(k);
            let top = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            prop_assert!(top >= 0.0);
        }
    }

    #[test]
    fn matmul_matches_triple_loop(n in 1usize..20, k in 1usize..20, m in 1usize..20, seed in any::<u64>()) {
        let a = random(n, k, seed);
        let b = random(k, m, seed ^ 1);
        let want = triple_loop(&to_rows(&a), &to_rows(&b));
        let got = to_rows(&matmul(&a, &b).unwrap());
        for (gr, wr) in got.iter().zip(&want) {
            for (g, w) in gr.iter().zip(wr) {
                prop_assert!((g - w).abs() < 1e-12 * (k as f64));
            }
        }
        let tn = to_rows(&matmul_tn(&random(k, n, seed), &b).unwrap());
        let tn_want = triple_loop(&transpose(&to_rows(&random(k, n, seed))), &to_rows(&b));
        for (gr, wr) in tn.iter().zip(&tn_want) {
            for (g, w) in gr.iter().zip(wr) {
                prop_assert!((g - w).abs() < 1e-12 * (k as f64));
            }
        }
    }

    #[test]
    fn parallel_and_sequential_matmul_are_bitwise_equal(n in 1usize..80, k in 1usize..40, m in 1usize..40, seed in any::<u64>()) {
        let a = random(n, k, seed);
        let b = random(k, m, seed ^ 7);
        let p = matmul_with(&a, &b, Exec::Parallel).unwrap();
        let s = matmul_with(&a, &b, Exec::Sequential).unwrap();
        prop_assert_eq!(p.data(), s.data());
    }
}
