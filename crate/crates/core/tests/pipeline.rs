use std::fs;
use std::path::PathBuf;

use hyqme::hybrid_me::{big_lindblad_apply, embed_model_summed, embed_state, equivalence_check, extract_blocks, EnlargedState};
use hyqme::hybrid_state::{max_block_diff, HybridDensity};
use hyqme::random;
use hyqme::runtime::integrator::{evolve, IntegratorConfig};
use hyqme::runtime::scenario::{run_scenario, ScenarioConfig};
use hyqme::space::ClassicalSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn bundled_scenarios_run_clean() {
    let out = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        let Ok((sc, base)) = ScenarioConfig::load(&path) else {
            continue; // model and state files
        };
        let dir = out.path().join(path.file_stem().unwrap());
        let report = run_scenario(&sc, &base, &dir).unwrap();
        assert!(report.ok, "{}: {}", path.display(), report.to_json());
        assert!(dir.join("report.json").exists());
    }
}

#[test]
fn summed_embedding_is_detected_by_the_block_comparison() {
    // one operator per channel couples blocks, so its evolution must disagree
    let mut r = ChaCha20Rng::seed_from_u64(3);
    let space = ClassicalSpace::indexed(3).unwrap();
    let model = random::hybrid_model(&space, 2, 2, 1.0, 0.5, &mut r);
    let hd = random::hybrid_density(&space, 2, &mut r);
    let unraveled = equivalence_check(&model, &hd, 0.2, 1e-3).unwrap();
    assert!(unraveled.residual <= 1e-12);
    assert!(unraveled.max_off_block <= 1e-12);

    let em = embed_model_summed(&model);
    let cfg = IntegratorConfig::new(1e-3, 0.2);
    let ts = evolve(
        |p: &EnlargedState| Ok(p.with_matrix(big_lindblad_apply(&em, p)?)),
        embed_state(&hd),
        &cfg,
        &mut [],
    )
    .unwrap();
    let ext = extract_blocks(&ts.final_state.matrix, &space, 2).unwrap();
    assert!(ext.residual > 1e-3);
    assert!(max_block_diff(unraveled.hybrid_final.blocks(), &ext.blocks) > 1e-6);
}

#[test]
fn hybrid_state_file_round_trips_through_json() {
    let text = fs::read_to_string(scenarios().join("hybrid_state.json")).unwrap();
    let hd = HybridDensity::from_json(&text).unwrap();
    let again = HybridDensity::from_json(&hd.to_json().unwrap()).unwrap();
    assert_eq!(hd, again);
}
