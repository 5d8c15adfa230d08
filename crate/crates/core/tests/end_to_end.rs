use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symabs::abstraction::{
    build_abstraction, build_internal_input_sets, quantize, AbstractionOptions, FiniteAbstraction, DEFAULT_DEDUP_TOL,
    DEFAULT_SET_CAP,
};
use symabs::certificate::SimulationCertificate;
use symabs::certificate::{
    check_storage_pointwise, passivity_for_linear, verify_passivity, AffineFeedback, PassivityCertificate,
    StorageCertificate,
};
use symabs::composition::{assemble, check_conditions, compose_certificate, ComposeOptions, CompositionProblem};
use symabs::kfn::SynthesisParams;
use symabs::linalg::inf_norm;
use symabs::refinement::{compute_bound, grid_samples, verify_alternating_simulation, PairContext, RefinementBound};
use symabs::system::{
    build_laplacian_network, interconnect, BoxSet, InterconnectedSystem, InterconnectionMatrix, LaplacianSpec,
};

struct Setup {
    network: InterconnectedSystem,
    m_hat: nalgebra::DMatrix<f64>,
    pcerts: Vec<PassivityCertificate>,
    abstractions: Vec<FiniteAbstraction>,
    feedbacks: Vec<AffineFeedback>,
    certificate: SimulationCertificate,
    bound: RefinementBound,
}

fn setup(nodes: usize, eta: f64) -> Setup {
    let net = build_laplacian_network(&LaplacianSpec {
        nodes,
        edges: (1..nodes).map(|i| (i - 1, i)).collect(),
        tau: std::f64::consts::LN_2,
        feedback_gain: 0.5,
        state_box: BoxSet::new(vec![0.0], vec![1.0]).unwrap(),
        input_box: BoxSet::new(vec![0.0], vec![0.1]).unwrap(),
    })
    .unwrap();
    let pcerts: Vec<_> = net
        .subsystems
        .iter()
        .map(|s| passivity_for_linear(s, 0.5).unwrap())
        .collect();
    let outputs: Vec<Vec<Vec<f64>>> = net
        .subsystems
        .iter()
        .map(|s| quantize(s.state_box().unwrap(), eta).unwrap().points())
        .collect();
    let sets = build_internal_input_sets(
        &net.coupling,
        &outputs,
        &vec![1; nodes],
        DEFAULT_DEDUP_TOL,
        DEFAULT_SET_CAP,
    )
    .unwrap();
    let abstractions: Vec<_> = net
        .subsystems
        .iter()
        .zip(&pcerts)
        .zip(sets)
        .map(|((s, p), w)| build_abstraction(s, p, eta, 0.1, w, &AbstractionOptions::default()).unwrap())
        .collect();
    let certs: Vec<_> = pcerts
        .iter()
        .map(|p| StorageCertificate::from_passivity(p, eta).unwrap())
        .collect();
    let network = interconnect(net.subsystems.clone(), InterconnectionMatrix(net.coupling.clone())).unwrap();
    let problem = CompositionProblem {
        certs,
        weights: vec![1.0; nodes],
        coupling: net.coupling.clone(),
        abstract_coupling: net.coupling.clone(),
        abstractions: &abstractions,
    };
    let assembly = assemble(&problem.certs, &problem.weights).unwrap();
    let reports = check_conditions(&problem, &assembly).unwrap();
    assert!(reports.passed());
    let certificate = compose_certificate(&problem, &reports, &ComposeOptions::default())
        .unwrap()
        .certificate;
    let bound = compute_bound(&certificate, 0.1, &SynthesisParams::default()).unwrap();
    Setup {
        network,
        m_hat: net.coupling.clone(),
        feedbacks: pcerts.iter().map(|p| p.feedback.clone()).collect(),
        pcerts,
        abstractions,
        certificate,
        bound,
    }
}

impl Setup {
    fn ctx(&self) -> PairContext<'_> {
        PairContext {
            network: &self.network,
            abstractions: &self.abstractions,
            abstract_coupling: &self.m_hat,
            feedbacks: &self.feedbacks,
            certificate: &self.certificate,
            bound: &self.bound,
        }
    }
}

#[test]
fn one_step_decrease_holds_on_random_pairs() {
    let s = setup(3, 0.1);
    let ctx = s.ctx();
    let states = ctx.original_states();
    let inputs = ctx.admissible_inputs();
    let state_box = s.network.state_box().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let x = state_box.sample(&mut rng);
        let xs = &states[rng.gen_range(0..states.len())];
        let us = &inputs[rng.gen_range(0..inputs.len())];
        let v = ctx.storage(&x, xs);
        let step = ctx.step(&x, xs, us).unwrap();
        let next = ctx.storage(&step.x_next, &step.abstract_next);
        let bound = s.bound.step_bound(v, inf_norm(&step.u_hat));
        assert!(next <= bound + 1e-9, "V {v} → {next} exceeds {bound}");
        assert_eq!(step.off_set_snaps, 0);
    }
}

fn fingerprint(s: &Setup) -> String {
    let ctx = s.ctx();
    let mut out = String::new();
    for (i, (sub, p)) in s.network.subsystems().iter().zip(&s.pcerts).enumerate() {
        let pr = verify_passivity(sub, p, None, 3000, 5).unwrap();
        let cert = StorageCertificate::from_passivity(p, 0.1).unwrap();
        let sr = check_storage_pointwise(sub, &s.abstractions[i], p, &cert, 700, 9).unwrap();
        let abs = build_abstraction(
            sub,
            p,
            0.1,
            0.1,
            s.abstractions[i].internal_inputs().to_vec(),
            &AbstractionOptions::default(),
        )
        .unwrap();
        out.push_str(&format!("{pr:?}\n{sr:?}\n{:?}\n", abs.successor_lists()));
    }
    let rel = verify_alternating_simulation(&ctx, &grid_samples(&s.abstractions, 1)).unwrap();
    out.push_str(&format!("{rel:?}"));
    out
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = setup(2, 0.1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fingerprint(&s))
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}
