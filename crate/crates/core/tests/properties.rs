use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qsylv::block_encoding::{block_encode_lcu, extract_block, prepare_state};
use qsylv::discretization::ManualParams;
use qsylv::generate::{gen_random, random_cmatrix, random_unitary};
use qsylv::lcu::{apply_lcu, synthesize, SignConvention, DEFAULT_TERM_BUDGET};
use qsylv::linalg::{self, CMatrix};
use qsylv::problem::SylvesterInstance;
use qsylv::verify::{oracle_solve, residual};
use qsylv::CaseTag;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn close(a: &CMatrix<f64>, b: &CMatrix<f64>, tol: f64) -> bool {
    linalg::spectral_norm(&(a - b)) <= tol * (1.0 + linalg::spectral_norm(b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_is_bilinear(seed in any::<u64>(), n in 1usize..4, m in 1usize..4, s in -3.0f64..3.0) {
        let mut g = rng(seed);
        let a1 = random_cmatrix(&mut g, n, n);
        let a2 = random_cmatrix(&mut g, n, n);
        let b = random_cmatrix(&mut g, m, m);
        let z = Complex::new(s, 0.5);
        let lhs = linalg::kron(&(&a1 + a2.map(|v| v * z)), &b).unwrap();
        let rhs = linalg::kron(&a1, &b).unwrap() + linalg::kron(&a2, &b).unwrap().map(|v| v * z);
        prop_assert!(close(&lhs, &rhs, 1e-12));
        let lhs = linalg::kron(&b, &(&a1 + &a2)).unwrap();
        let rhs = linalg::kron(&b, &a1).unwrap() + linalg::kron(&b, &a2).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn vec_round_trip(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let m = random_cmatrix(&mut rng(seed), r, c);
        let back = linalg::unvec(&linalg::vec(&m), r, c).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn prepare_state_is_normalized(weights in prop::collection::vec(0.0f64..5.0, 1..12)) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-6);
        let v = prepare_state::<f64>(&weights, None).unwrap();
        prop_assert!(v.len().is_power_of_two());
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lcu_block_identity(seed in any::<u64>(), terms in 1usize..6, dim in 1usize..5) {
        let mut g = rng(seed);
        let weights: Vec<f64> = (0..terms).map(|i| 0.1 + (seed.rotate_left(i as u32 * 7) % 97) as f64 / 10.0).collect();
        let us: Vec<CMatrix<f64>> = (0..terms).map(|_| random_unitary(&mut g, dim)).collect();
        let be = block_encode_lcu(&weights, &us).unwrap();
        let total: f64 = weights.iter().sum();
        let mut target = linalg::zeros::<f64>(dim, dim);
        for (w, u) in weights.iter().zip(&us) {
            target += u.map(|z| z * (w / total));
        }
        prop_assert!(close(&extract_block(&be), &target, 1e-10));
        prop_assert!(be.unitarity_defect() < 1e-10);
    }

    #[test]
    fn apply_lcu_is_linear(seed in any::<u64>(), s in -2.0f64..2.0) {
        let mut g = rng(seed);
        let inst = gen_random(CaseTag::BZero, 2, 3.0, &mut g).unwrap();
        let params = ManualParams::new(5, 3).build(CaseTag::BZero).unwrap();
        let prog = synthesize(&inst, CaseTag::BZero, &params, None, SignConvention::Standard, DEFAULT_TERM_BUDGET).unwrap();
        let c1 = random_cmatrix(&mut g, 2, 2);
        let c2 = random_cmatrix(&mut g, 2, 2);
        let z = Complex::new(s, -0.25);
        let lhs = apply_lcu(&prog, &(&c1 + c2.map(|v| v * z))).unwrap();
        let rhs = apply_lcu(&prog, &c1).unwrap() + apply_lcu(&prog, &c2).unwrap().map(|v| v * z);
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }
}

#[test]
fn single_precision_oracle() {
    let mut g = rng(4);
    let inst = gen_random(CaseTag::Normal, 3, 4.0, &mut g).unwrap();
    let to32 = |m: &CMatrix<f64>| m.map(|z| Complex::new(z.re as f32, z.im as f32));
    let inst32 = SylvesterInstance::<f32>::new(to32(&inst.a), to32(&inst.b), to32(&inst.c), inst.alpha as f32, None).unwrap();
    let x = oracle_solve(&inst32).unwrap();
    assert!(residual(&inst32, &x).unwrap() < 1e-4);
}
