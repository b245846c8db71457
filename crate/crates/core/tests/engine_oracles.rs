use std::path::PathBuf;

use qcm_core::engine::{direct_cyclic_probability, EngineOptions};
use qcm_core::io::{ModelDocument, ProtocolDocument};
use qcm_core::model::ModelBuilder;
use qcm_core::random::{random_channel, random_povm, random_state};
use qcm_core::tensor::{c, KrausChannel, Matrix};
use qcm_core::{
    acyclic_probability, cyclic_probability, CausalGraph, CausalModel, EdgeKind, ProtocolChoice, TeleGraphChoice,
    VertexKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> CausalModel {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    ModelDocument::parse(&std::fs::read_to_string(path).unwrap()).unwrap().to_model().unwrap()
}

fn opts() -> EngineOptions {
    EngineOptions::default().with_dim_cap(4096)
}

fn hadamard() -> Matrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Matrix::from_real_rows(&[&[h, h], &[h, -h]]).unwrap()
}

fn pauli_x() -> Matrix {
    Matrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
}

#[test]
fn two_cycle_weights_follow_the_trace_of_the_loop_unitary() {
    let m = fixture("two_cycle_inputs.json");
    let us = [Matrix::identity(2), pauli_x()];
    let vs = [Matrix::identity(2), hadamard()];
    // uniform settings; M and N always read 0
    let mut oracle = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            oracle[x][y] = 0.25 * (&vs[y] * &us[x]).trace().norm_sqr();
        }
    }
    let total: f64 = oracle.iter().flatten().sum();
    assert!((total - 1.5).abs() < 1e-12);

    for tg in [TeleGraphChoice::Maximal, TeleGraphChoice::Kept(vec![m.graph().edge_index("L1->L2").unwrap()])] {
        let r = cyclic_probability(&m, &tg, &ProtocolChoice::bell(), &opts()).unwrap();
        assert!((r.cycle_sum - total).abs() < 1e-12);
        assert!((r.success_prob - r.q_product * total).abs() < 1e-15);
        assert!(!r.markov);
        let d = r.distribution.unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let p = d.prob(&[x, y, 0, 0]);
                assert!((p - oracle[x][y] / total).abs() < 1e-12, "P({x},{y}) = {p}");
            }
        }
    }
}

#[test]
fn two_cycle_success_with_only_the_feedback_edge_split() {
    let m = fixture("two_cycle_inputs.json");
    let kept: Vec<usize> = (0..m.graph().edge_count()).filter(|&e| m.graph().edge_label(e) != "L2->L1").collect();
    let r = cyclic_probability(&m, &TeleGraphChoice::Kept(kept), &ProtocolChoice::bell(), &opts()).unwrap();
    assert_eq!(r.q_product, 0.25);
    assert!((r.success_prob - 0.375).abs() < 1e-12);
}

fn loop_model(a: &KrausChannel, b: &KrausChannel) -> CausalModel {
    let g = CausalGraph::new(
        [("P", VertexKind::Unobserved), ("Q", VertexKind::Unobserved)],
        [("P", "Q", EdgeKind::Quantum), ("Q", "P", EdgeKind::Quantum)],
    )
    .unwrap();
    ModelBuilder::new(g)
        .edge_dim("P->Q", a.out_dim())
        .and_then(|b| b.edge_dim("Q->P", a.in_dim()))
        .and_then(|m| m.channel("P", a.clone()))
        .and_then(|m| m.channel("Q", b.clone()))
        .and_then(|m| m.build())
        .unwrap()
}

#[test]
fn two_vertex_loop_matches_the_kraus_trace_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d1, d2) in [(1, 2), (2, 2), (2, 3), (3, 2)] {
        let a = random_channel(&mut rng, d1, d2, 2);
        let b = random_channel(&mut rng, d2, d1, 3);
        let oracle: f64 = a
            .kraus()
            .iter()
            .flat_map(|ka| b.kraus().iter().map(move |kb| (kb * ka).trace().norm_sqr()))
            .sum();
        let r = cyclic_probability(&loop_model(&a, &b), &TeleGraphChoice::Maximal, &ProtocolChoice::bell(), &opts())
            .unwrap();
        assert!((r.cycle_sum - oracle).abs() < 1e-12, "{d1}x{d2}: {} vs {oracle}", r.cycle_sum);
        let direct = direct_cyclic_probability(
            &loop_model(&a, &b),
            &TeleGraphChoice::Kept(vec![0]),
            &ProtocolChoice::bell(),
            &opts(),
        )
        .unwrap();
        assert!((direct.success_prob - oracle / (d1 * d1) as f64).abs() < 1e-12);
    }
}

#[test]
fn prepare_and_measure_is_the_born_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for d in 1..=4 {
        let rho = random_state(&mut rng, d);
        let povm = random_povm(&mut rng, d, 3);
        let g = CausalGraph::new(
            [("S", VertexKind::Unobserved), ("M", VertexKind::Observed)],
            [("S", "M", EdgeKind::Quantum)],
        )
        .unwrap();
        let m = ModelBuilder::new(g)
            .edge_dim("S->M", d)
            .and_then(|m| m.state("S", rho.clone()))
            .and_then(|m| m.vertex_outcomes("M", &["a", "b", "c"]))
            .and_then(|m| m.povm("M", povm.clone()))
            .and_then(|m| m.build())
            .unwrap();
        let acyc = acyclic_probability(&m).unwrap();
        let cyc = cyclic_probability(&m, &TeleGraphChoice::Maximal, &ProtocolChoice::bell(), &opts()).unwrap();
        for (k, e) in povm.elements().iter().enumerate() {
            let born = (e * &rho).trace();
            assert!(born.im.abs() < 1e-12);
            assert!((acyc.probs()[k] - born.re).abs() < 1e-12);
            assert!((cyc.distribution.as_ref().unwrap().probs()[k] - born.re).abs() < 1e-12);
        }
        assert!((cyc.success_prob - 1.0 / (d * d) as f64).abs() < 1e-12);
    }
}

#[test]
fn bell_correlators_follow_the_measurement_angles() {
    let d = acyclic_probability(&fixture("bell.json")).unwrap();
    let alice = [0.0, std::f64::consts::FRAC_PI_4];
    let bob = [std::f64::consts::FRAC_PI_8, 3.0 * std::f64::consts::FRAC_PI_8];
    for (x, a) in alice.iter().enumerate() {
        for (y, b) in bob.iter().enumerate() {
            let cond = d.conditional(&["A", "B"], &[("X", &x.to_string()), ("Y", &y.to_string())]).unwrap();
            let p = cond.probs();
            let e = p[0] - p[1] - p[2] + p[3];
            assert!((e - (2.0 * (a - b)).cos()).abs() < 1e-12, "E({x},{y}) = {e}");
        }
    }
}

#[test]
fn schmidt_protocol_file_keeps_the_distribution() {
    let m = fixture("identity_self_loop.json");
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", "schmidt_protocol.json"].iter().collect();
    let choice = ProtocolDocument::parse(&std::fs::read_to_string(path).unwrap()).unwrap().to_choice(m.graph()).unwrap();
    let tg = TeleGraphChoice::Kept(vec![m.graph().edge_index("L->M").unwrap()]);
    let bell = cyclic_probability(&m, &tg, &ProtocolChoice::bell(), &opts()).unwrap();
    let custom = cyclic_probability(&m, &tg, &choice, &opts()).unwrap();
    let direct = direct_cyclic_probability(&m, &tg, &choice, &opts()).unwrap();
    assert_eq!(bell.cycle_weights, custom.cycle_weights);
    assert!((custom.success_prob - 0.64).abs() < 1e-12);
    assert!((direct.success_prob - 0.64).abs() < 1e-12);
    assert!(direct.distribution.unwrap().max_abs_diff(&bell.distribution.unwrap()) < 1e-12);
}

#[test]
fn identity_loop_success_is_one_and_not_markov() {
    let m = fixture("identity_self_loop.json");
    let tg = TeleGraphChoice::Kept(vec![m.graph().edge_index("L->M").unwrap()]);
    let r = cyclic_probability(&m, &tg, &ProtocolChoice::bell(), &opts()).unwrap();
    assert_eq!(r.cycle_sum, 4.0);
    assert!((r.success_prob - 1.0).abs() < 1e-12);
    assert!(!r.markov);
    let maximal = cyclic_probability(&m, &TeleGraphChoice::Maximal, &ProtocolChoice::bell(), &opts()).unwrap();
    assert!((maximal.success_prob - 0.25).abs() < 1e-12);
    assert_eq!(maximal.distribution.unwrap().probs(), &[1.0, 0.0]);
}

#[test]
fn scalar_trace_identity_for_diagonal_kraus() {
    // one Kraus operator diag(1, i): cycle = |1 + i|^2 = 2
    let k = Matrix::diagonal(&[c(1.0, 0.0), c(0.0, 1.0)]);
    let ch = KrausChannel::new(2, 2, vec![k]).unwrap();
    assert!((qcm_core::self_cycle(&ch).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
}
