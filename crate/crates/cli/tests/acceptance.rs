//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines come out in order and a
//! panic inside one criterion is reported as a failure of that criterion only.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symabs::abstraction::{check_nonblocking, FiniteAbstraction};
use symabs::certificate::{passivity_for_linear, AffineFeedback, StorageCertificate};
use symabs::composition::{
    assemble, check_conditions, check_dissipativity_lmi, compose_certificate, simplex_min, ComposeOptions,
    CompositionProblem,
};
use symabs::kfn::{clamp_slopes, ClassKFn, Resample};
use symabs::refinement::{grid_samples, verify_alternating_simulation, PairContext};
use symabs::system::SubsystemModel;
use symabs_cli::pipeline::{build_model, Run};
use symabs_cli::{parse_spec_str, run_pipeline, NetworkSpec};

const LN2: f64 = std::f64::consts::LN_2;

/// The desk instance with `γ` derived on the state box, so that `γ(r) = 2r`
/// and `ε_i = γ(η_i/2) = η_i`; criterion 2 checks that this `ε` holds.
fn desk(n: usize, eta: f64, run: &str) -> NetworkSpec {
    let run = match run.trim() {
        "{}" => r#"{"gamma_domain": "state_box"}"#.to_string(),
        r => r.replacen('{', r#"{"gamma_domain": "state_box", "#, 1),
    };
    let text = format!(
        r#"{{
        "subsystems": [{{
            "dynamics": "integrator",
            "state_box": {{"lower": [0.0], "upper": [1.0]}},
            "input_box": {{"lower": [0.0], "upper": [0.1]}},
            "eta": {eta}, "mu1": 0.1, "lambda_fb": 0.5, "repeat": {n}
        }}],
        "coupling": {{"laplacian": {{"edges": "path", "tau": {LN2}}}}},
        "run": {run}
    }}"#
    );
    parse_spec_str(&text).expect("desk spec parses")
}

fn run_ok(spec: &NetworkSpec) -> Run {
    let outcome = run_pipeline(spec);
    if let Some(e) = &outcome.error {
        panic!("pipeline failed in stage {}: {}", e.stage, e.error);
    }
    outcome.run.expect("run present without error")
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn scale_free_feasibility() -> Result<String, String> {
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    for n in [2, 5, 20] {
        let spec = desk(n, 0.1, "{}");
        let model = build_model(&spec).map_err(|e| e.to_string())?;
        let certs = model
            .network
            .subsystems()
            .iter()
            .map(|sub| StorageCertificate::from_passivity(&passivity_for_linear(sub, 0.5)?, 0.1))
            .collect::<symabs::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        let assembly = assemble(&certs, &model.weights).map_err(|e| e.to_string())?;
        let lmi = check_dissipativity_lmi(&assembly, model.network.coupling(), 1e-9).map_err(|e| e.to_string())?;
        if !lmi.passed || lmi.max_eigenvalue > 1e-9 {
            return Err(format!("N={n}: max eigenvalue {:e}", lmi.max_eigenvalue));
        }
        worst = worst.max(lmi.max_eigenvalue);
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!(
        "N in {{2,5,20}}, largest max eigenvalue {worst:e}, {:?}",
        start.elapsed()
    ))
}

fn storage_soundness() -> Result<String, String> {
    let start = Instant::now();
    let spec = desk(
        2,
        0.1,
        r#"{"storage_samples": 1000, "traces": 0, "relation_check": false}"#,
    );
    let run = run_ok(&spec);
    let mut checks = 0;
    for (i, s) in run.subsystems.iter().enumerate() {
        let r = &s.storage_report;
        let expected = s.abstraction.num_triples() * 1000;
        if r.checks != expected {
            return Err(format!("subsystem {i}: {} checks, expected {expected}", r.checks));
        }
        let eps = s.passivity.gamma.gamma.eval(0.05);
        if s.storage.epsilon != eps {
            return Err(format!("subsystem {i}: ε {} is not γ(η/2) = {eps}", s.storage.epsilon));
        }
        if r.violation_count > 0 || r.blocking_count > 0 {
            return Err(format!(
                "subsystem {i}: {} violations, {} blocking",
                r.violation_count, r.blocking_count
            ));
        }
        checks += r.checks;
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{checks} pointwise checks, 0 violations, {:?}",
        start.elapsed()
    ))
}

fn trace_bound() -> Result<String, String> {
    let start = Instant::now();
    let spec = desk(
        2,
        0.1,
        r#"{"seed": 11, "traces": 100, "horizon": 100, "relation_check": false}"#,
    );
    let run = run_ok(&spec);
    let bound = run.bound.as_ref().expect("bound computed");
    if run.traces.len() != 100 {
        return Err(format!("{} traces", run.traces.len()));
    }
    let mut steps = 0;
    for (t, log) in run.traces.iter().enumerate() {
        if log.records.len() != 100 {
            return Err(format!("trace {t} has {} steps", log.records.len()));
        }
        if !log.started_in_relation || log.records[0].v > bound.level + 1e-9 {
            return Err(format!("trace {t} starts outside the relation"));
        }
        if let Some(v) = log.violations.first() {
            return Err(format!("trace {t} step {}: {:?} margin {:e}", v.step, v.kind, v.margin));
        }
        if log.max_output_error > bound.eps_hat + 1e-9 {
            return Err(format!(
                "trace {t}: output error {} > ε̂ {}",
                log.max_output_error, bound.eps_hat
            ));
        }
        steps += log.records.len();
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{steps} steps, 0 violations, max output error {:.4} ≤ ε̂ {:.4}, {:?}",
        run.traces.iter().map(|t| t.max_output_error).fold(0.0, f64::max),
        bound.eps_hat,
        start.elapsed()
    ))
}

fn scaling_law() -> Result<String, String> {
    let opts = r#"{"traces": 0, "relation_check": false, "storage_samples": 10}"#;
    let coarse = run_ok(&desk(2, 0.1, opts));
    let fine = run_ok(&desk(2, 0.05, opts));
    let eps = |r: &Run| r.composed.as_ref().expect("composed").certificate.epsilon;
    let eps_hat = |r: &Run| r.bound.as_ref().expect("bound").eps_hat;
    let eps_ratio = eps(&coarse) / eps(&fine);
    let hat_ratio = eps_hat(&coarse) / eps_hat(&fine);
    let sqrt2 = std::f64::consts::SQRT_2;
    let detail = format!(
        "ε {:.4} → {:.4} (ratio {eps_ratio:.4}), ε̂ {:.4} → {:.4} (ratio {hat_ratio:.4}, √2 = {sqrt2:.4})",
        eps(&coarse),
        eps(&fine),
        eps_hat(&coarse),
        eps_hat(&fine)
    );
    if (eps_ratio / 2.0 - 1.0).abs() > 0.05 || (hat_ratio / sqrt2 - 1.0).abs() > 0.05 {
        return Err(detail);
    }
    Ok(detail)
}

/// Successors by scanning the whole state grid. The image is evaluated with
/// the subsystem's own step so that ties at exactly `η/2` round the same way.
fn brute_force_successors(abs: &FiniteAbstraction, sub: &SubsystemModel, feedback: &AffineFeedback) -> Vec<Vec<u32>> {
    let grid = abs.state_grid();
    let eta = grid.eta()[0];
    let points: Vec<f64> = (0..grid.len()).map(|s| grid.point(s)[0]).collect();
    let mut out = Vec::new();
    for &x in &points {
        for u in 0..abs.num_inputs() {
            let u = feedback.refine(&[x], &abs.input_point(u));
            for w in abs.internal_inputs() {
                let y = sub.step_unchecked(&[x], &u, w)[0];
                let slack = 4.0 * f64::EPSILON * y.abs().max(eta);
                let succ: Vec<u32> = points
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| (p - y).abs() <= eta / 2.0 + slack)
                    .map(|(i, _)| i as u32)
                    .collect();
                out.push(succ);
            }
        }
    }
    out
}

fn abstraction_oracle() -> Result<String, String> {
    let opts = r#"{"traces": 0, "relation_check": false, "storage_samples": 1, "passivity_samples": 10}"#;
    let mut instances = 0;
    let mut triples = 0;
    for (n, eta) in [(2, 0.1), (2, 0.05), (2, 0.2), (3, 0.1), (4, 0.25)] {
        let run = run_ok(&desk(n, eta, opts));
        for (i, s) in run.subsystems.iter().enumerate() {
            let abs = &s.abstraction;
            if abs.num_triples() > 10_000 {
                continue;
            }
            let expected = brute_force_successors(abs, &run.model.network.subsystems()[i], &s.passivity.feedback);
            let table = abs.successor_lists();
            if let Some(t) = (0..table.len()).find(|&t| table[t] != expected[t]) {
                let per_state = abs.num_inputs() * abs.num_internal();
                let (state, rest) = (t / per_state, t % per_state);
                return Err(format!(
                    "N={n} η={eta} subsystem {i}: state {:?} input {:?} internal {:?} gives {:?}, brute force {:?}",
                    abs.state_point(state),
                    abs.input_point(rest / abs.num_internal()),
                    abs.internal_inputs()[rest % abs.num_internal()],
                    table[t],
                    expected[t]
                ));
            }
            let nb = check_nonblocking(abs).map_err(|e| e.to_string())?;
            if !nb.blocking.is_empty() {
                return Err(format!("N={n} η={eta} subsystem {i}: {} blocking", nb.blocking.len()));
            }
            instances += 1;
            triples += abs.num_triples();
        }
    }
    if instances == 0 {
        return Err("no instance under the triple limit".into());
    }
    Ok(format!(
        "{instances} abstractions, {triples} triples identical, 0 blocking"
    ))
}

fn composition_algebra() -> Result<String, String> {
    let opts = r#"{"traces": 0, "relation_check": false, "storage_samples": 1, "passivity_samples": 10}"#;
    let run = run_ok(&desk(3, 0.1, opts));
    let mut certs: Vec<StorageCertificate> = run.subsystems.iter().map(|s| s.storage.clone()).collect();
    let assembly = assemble(&certs, &run.model.weights).map_err(|e| e.to_string())?;
    let perm = &assembly.permutation;
    let size = assembly.x_interleaved.nrows();
    let mut seen = vec![false; size];
    for &p in perm {
        if p >= size || seen[p] {
            return Err(format!("{perm:?} is not a permutation"));
        }
        seen[p] = true;
    }
    for r in 0..size {
        for c in 0..size {
            if assembly.x_interleaved[(r, c)] != assembly.x_block_diag[(perm[r], perm[c])] {
                return Err(format!("entry ({r}, {c}) differs from the permuted block diagonal"));
            }
        }
    }

    let rates = [0.3, 0.4, 0.5];
    for (c, rate) in certs.iter_mut().zip(rates) {
        c.sigma = ClassKFn::Linear(rate);
    }
    let abstractions = run.abstractions();
    let problem = CompositionProblem {
        certs,
        weights: vec![1.0; 3],
        coupling: run.model.network.coupling().clone(),
        abstract_coupling: run.model.m_hat.clone(),
        abstractions: &abstractions,
    };
    let assembly = assemble(&problem.certs, &problem.weights).map_err(|e| e.to_string())?;
    let reports = check_conditions(&problem, &assembly).map_err(|e| e.to_string())?;
    let composed = compose_certificate(&problem, &reports, &ComposeOptions::default()).map_err(|e| e.to_string())?;
    let sigma = &composed.certificate.sigma;
    if *sigma != ClassKFn::Linear(0.3) {
        return Err(format!("composed σ is {sigma}"));
    }
    let sigmas: Vec<ClassKFn> = rates.iter().map(|&r| ClassKFn::Linear(r)).collect();
    let mut worst = 0.0_f64;
    for k in 1..=100 {
        let s = k as f64 * 0.05;
        let brute = simplex_min(&sigmas, &problem.weights, s, 1000);
        worst = worst.max((sigma.eval(s) - brute).abs());
    }
    if worst > 1e-6 {
        return Err(format!("σ deviates from the simplex brute force by {worst:e}"));
    }
    Ok(format!(
        "interleaving exact ({size}x{size}), σ = linear(0.3), brute-force gap {worst:e}"
    ))
}

fn relation_check() -> Result<String, String> {
    let opts = r#"{"traces": 0, "relation_check": false, "storage_samples": 1, "passivity_samples": 10}"#;
    let run = run_ok(&desk(2, 0.1, opts));
    let abstractions = run.abstractions();
    let feedbacks = run.feedbacks();
    let cert = &run.composed.as_ref().expect("composed").certificate;
    let bound = run.bound.as_ref().expect("bound");
    let ctx = PairContext {
        network: &run.model.network,
        abstractions: &abstractions,
        abstract_coupling: &run.model.m_hat,
        feedbacks: &feedbacks,
        certificate: cert,
        bound,
    };
    let shrunk = bound.with_phi(bound.phi() / 100.0).map_err(|e| e.to_string())?;
    let perturbed_ctx = PairContext { bound: &shrunk, ..ctx };
    let count = |r: &symabs::refinement::RelationReport| r.output_violations + r.invariance_violations;

    let grid_mid = grid_samples(&abstractions, 1);
    let sound = verify_alternating_simulation(&ctx, &grid_mid).map_err(|e| e.to_string())?;
    if !sound.passed() {
        return Err(format!("grid + midpoint: {} violations", count(&sound)));
    }
    let perturbed_grid = verify_alternating_simulation(&perturbed_ctx, &grid_mid).map_err(|e| e.to_string())?;

    // seeded random augmentation on top of grid + midpoint
    let state_box = run.model.network.state_box().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut augmented = grid_mid.clone();
    augmented.extend((0..1000).map(|_| state_box.sample(&mut rng)));
    let sound_aug = verify_alternating_simulation(&ctx, &augmented).map_err(|e| e.to_string())?;
    if !sound_aug.passed() {
        return Err(format!("augmented samples: {} violations", count(&sound_aug)));
    }
    let perturbed = verify_alternating_simulation(&perturbed_ctx, &augmented).map_err(|e| e.to_string())?;
    if count(&perturbed) == 0 {
        return Err(format!(
            "φ/100 produced no violations over {} pairs in relation",
            perturbed.pairs_in_relation
        ));
    }
    Ok(format!(
        "grid + midpoint: {} samples, {} transitions, 0 violations; with 1000 seeded extra samples: 0 violations; \
         φ/100: {} violations (grid + midpoint alone: {})",
        grid_mid.len(),
        sound.transitions_checked,
        count(&perturbed),
        count(&perturbed_grid)
    ))
}

fn random_pwl(rng: &mut ChaCha8Rng) -> ClassKFn {
    let knots = rng.gen_range(2..8);
    let mut points = vec![(0.0, 0.0)];
    let (mut s, mut f) = (0.0, 0.0);
    for _ in 0..knots {
        let ds = rng.gen_range(0.05..2.0);
        let slope = rng.gen_range(0.01..3.0);
        s += ds;
        f += slope * ds;
        points.push((s, f));
    }
    ClassKFn::pwl(points, rng.gen_range(0.01..3.0)).expect("increasing knots")
}

fn kfn_algebra() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grid: Vec<f64> = (1..=1000).map(|k| k as f64 * 0.01).collect();
    let resample = Resample::over(1e3);
    let mut functions = vec![
        ClassKFn::Linear(0.7),
        ClassKFn::Power {
            coeff: 2.0,
            exponent: 2.0,
        },
        ClassKFn::Power {
            coeff: 0.5,
            exponent: 0.5,
        },
    ];
    functions.extend((0..5).map(|_| random_pwl(&mut rng)));
    let mut worst = 0.0_f64;
    for f in &functions {
        let inv = f.invert().map_err(|e| e.to_string())?;
        let there_and_back = f.compose(&inv, &resample).map_err(|e| e.to_string())?.function;
        for &s in &grid {
            let errs = [
                (f.eval(inv.eval(s)) - s).abs(),
                (inv.eval(f.eval(s)) - s).abs(),
                (there_and_back.eval(s) - s).abs(),
            ];
            let e = errs.iter().fold(0.0_f64, |a, b| a.max(*b)) / s.max(1.0);
            if e > 1e-6 {
                return Err(format!("{f}: round trip at {s} off by {e:e}"));
            }
            worst = worst.max(e);
        }
    }
    for k in 0..20 {
        let sigma = random_pwl(&mut rng);
        let hat = clamp_slopes(&sigma, 0.05).map_err(|e| e.to_string())?;
        let mut prev = 0.0;
        for &s in &grid {
            if hat.eval(s) > sigma.eval(s) + 1e-12 {
                return Err(format!("input {k}: σ̂({s}) > σ({s})"));
            }
            let rest = s - hat.eval(s);
            if rest <= prev {
                return Err(format!("input {k}: Id − σ̂ not increasing at {s}"));
            }
            prev = rest;
        }
    }
    Ok(format!(
        "{} functions round-trip within {worst:e}; 20 random σ̂ checks hold",
        functions.len()
    ))
}

type Criterion = (&'static str, fn() -> Result<String, String>);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 scale-free LMI feasibility", scale_free_feasibility),
        ("2 storage-certificate soundness", storage_soundness),
        ("3 trace bound", trace_bound),
        ("4 error-bound scaling", scaling_law),
        ("5 abstraction oracle equivalence", abstraction_oracle),
        ("6 composition algebra", composition_algebra),
        ("7 alternating-simulation check", relation_check),
        ("8 comparison-function algebra", kfn_algebra),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    println!("acceptance: {} of 8 passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
