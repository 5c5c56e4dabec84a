use hyqme::generators::{decoherence_apply, lindblad_apply, LindbladModel};
use hyqme::hybrid_me::{big_lindblad_apply, embed_model, embed_state, extract_blocks, hybrid_apply};
use hyqme::hybrid_state::{
    expectation, make_product, reduce_classical, reduce_quantum, validate, ClassicalDensity, HybridObservable,
};
use hyqme::linalg::{self, max_abs_diff, CMatrix, C64};
use hyqme::measurement::{completeness_defect, kraus_channel, KrausFamily};
use hyqme::monitoring::{fokker_planck_rhs, monitoring_apply, naive_apply, MonitoringModel};
use hyqme::random;
use hyqme::space::{Boundary, ClassicalSpace};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn sum_weighted(blocks: &[CMatrix], w: f64, d: usize) -> CMatrix {
    blocks.iter().fold(linalg::zeros(d), |a, b| a + b) * C64::from(w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn product_states_are_valid_and_factorize(seed in any::<u64>(), n in 2usize..9, d in 1usize..5) {
        let mut r = rng(seed);
        let space = ClassicalSpace::grid_span(-1.0, 1.0, n, Boundary::Truncated).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let total = raw.iter().sum::<f64>() * space.weight();
        let rc = ClassicalDensity::new(space, raw.iter().map(|v| v / total).collect()).unwrap();
        let rq = random::density_matrix(d, &mut r);
        let hd = make_product(&rc, &rq, d).unwrap();
        let rep = validate(&hd);
        prop_assert!(rep.ok, "{rep:?}");
        prop_assert!((hd.total_trace() - 1.0).abs() <= 1e-12);
        prop_assert!(max_abs_diff(reduce_quantum(&hd).matrix(), rq.matrix()) <= 1e-12);
        let back = reduce_classical(&hd);
        for (a, b) in back.values.iter().zip(&rc.values) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn lindblad_output_is_hermitian_and_traceless(seed in any::<u64>(), d in 1usize..6, k in 0usize..4) {
        let mut r = rng(seed);
        let h = random::hermitian(d, 1.0, &mut r);
        let ops = (0..k).map(|_| random::ginibre(d, 0.7, &mut r)).collect();
        let lm = LindbladModel::new(h, ops).unwrap();
        let out = lindblad_apply(&lm, &random::density_matrix(d, &mut r)).unwrap();
        prop_assert!(linalg::hermiticity_defect(&out) <= 1e-13);
        prop_assert!(out.trace().norm() <= 1e-13);
    }

    #[test]
    fn hybrid_generator_conserves_total_trace(seed in any::<u64>(), n in 1usize..6, d in 1usize..4, ch in 1usize..3) {
        let mut r = rng(seed);
        let space = ClassicalSpace::indexed(n).unwrap();
        let model = random::hybrid_model(&space, d, ch, 1.0, 0.5, &mut r);
        let hd = random::hybrid_density(&space, d, &mut r);
        let out = hybrid_apply(&model, &hd).unwrap();
        let tr: f64 = out.iter().map(|b| b.trace().re).sum();
        prop_assert!(tr.abs() <= 1e-12);
        for b in &out {
            prop_assert!(linalg::hermiticity_defect(b) <= 1e-13);
        }
    }

    #[test]
    fn enlarged_generator_projects_onto_hybrid(seed in any::<u64>(), n in 1usize..5, d in 1usize..4) {
        let mut r = rng(seed);
        let space = ClassicalSpace::indexed(n).unwrap();
        let model = random::hybrid_model(&space, d, 2, 1.0, 0.5, &mut r);
        let hd = random::hybrid_density(&space, d, &mut r);
        let big = big_lindblad_apply(&embed_model(&model), &embed_state(&hd)).unwrap();
        let ext = extract_blocks(&big, &space, d).unwrap();
        let small = hybrid_apply(&model, &hd).unwrap();
        prop_assert!(hyqme::hybrid_state::max_block_diff(&ext.blocks, &small) <= 1e-13);
        prop_assert!(ext.residual <= 1e-13);
    }

    #[test]
    fn isometry_kraus_families_are_complete(seed in any::<u64>(), m in 1usize..6, d in 1usize..4) {
        let mut r = rng(seed);
        let v = random::ginibre(m * d, 1.0, &mut r).columns(0, d).into_owned().qr().q();
        let ops = (0..m).map(|k| v.rows(k * d, d).into_owned()).collect();
        let fam = KrausFamily::new(ClassicalSpace::indexed(m).unwrap(), ops).unwrap();
        prop_assert!(completeness_defect(&fam) <= 1e-12);
        let out = kraus_channel(&random::density_matrix(d, &mut r), &fam).unwrap();
        prop_assert!((out.total_trace() - 1.0).abs() <= 1e-12);
        prop_assert!(out.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn expectation_is_linear(seed in any::<u64>(), n in 1usize..6, d in 1usize..4, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let space = ClassicalSpace::indexed(n).unwrap();
        let hd = random::hybrid_density(&space, d, &mut r);
        let fa: Vec<CMatrix> = (0..n).map(|_| random::hermitian(d, 1.0, &mut r)).collect();
        let fb: Vec<CMatrix> = (0..n).map(|_| random::hermitian(d, 1.0, &mut r)).collect();
        let mix = fa.iter().zip(&fb).map(|(x, y)| x * C64::from(a) + y * C64::from(b)).collect();
        let e = |blocks| expectation(&hd, &HybridObservable::new(space.clone(), blocks).unwrap()).unwrap();
        let lhs = e(mix);
        let rhs = a * e(fa) + b * e(fb);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn monitoring_identities_hold_on_random_states(
        seed in any::<u64>(),
        d in 1usize..4,
        n in 8usize..40,
        diffusion in 0.01f64..1.0,
    ) {
        let mut r = rng(seed);
        let space = ClassicalSpace::grid_span(-2.0, 2.0, n, Boundary::Periodic).unwrap();
        let h = random::hermitian(d, 1.0, &mut r);
        let q = random::hermitian(d, 1.0, &mut r);
        let mm = MonitoringModel::new(h.clone(), q.clone(), diffusion, space.clone()).unwrap();
        let hd = random::hybrid_density(&space, d, &mut r);
        let w = space.weight();
        let out = monitoring_apply(&mm, &hd).unwrap();
        let expect = decoherence_apply(&h, mm.decoherence(), &q, &reduce_quantum(&hd)).unwrap();
        let scale = 1.0 + linalg::max_abs(&expect);
        prop_assert!(max_abs_diff(&sum_weighted(&out, w, d), &expect) <= 1e-12 * scale);
        for (b, f) in out.iter().zip(fokker_planck_rhs(&mm, &hd).unwrap()) {
            prop_assert!((b.trace().re - f).abs() <= 1e-12 * (1.0 + f.abs()));
        }
        for gen in [naive_apply, monitoring_apply] {
            let tr: f64 = gen(&mm, &hd).unwrap().iter().map(|b| w * b.trace().re).sum();
            prop_assert!(tr.abs() <= 1e-11);
        }
    }
}
