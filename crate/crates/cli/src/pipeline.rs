//! End-to-end run: passivity → abstraction → composition → bound →
//! verification.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use symabs::abstraction::{
    build_abstraction, build_internal_input_sets, certified_domain, check_nonblocking, quantize, write_dump,
    AbstractionOptions, FiniteAbstraction, DEFAULT_DEDUP_TOL, DEFAULT_SET_CAP,
};
use symabs::certificate::{
    check_storage_pointwise, passivity_for_linear, verify_passivity, AffineFeedback, PassivityCertificate,
    PassivityReport, QuadraticForm, StorageCertificate, StorageReport, SupplyRate, GAMMA_SAMPLES,
};
use symabs::composition::{
    assemble, check_conditions, check_dissipativity_lmi, compose_certificate, ComposeOptions, ComposedCertificate,
    CompositionProblem, ConditionReports,
};
use symabs::kfn::{Resample, SynthesisParams};
use symabs::linalg::{expm, inf_norm};
use symabs::refinement::{
    compute_bound, grid_sample_count, grid_samples, random_inputs, simulate_pair, verify_alternating_simulation,
    PairContext, RefinementBound, RelationReport, TraceLog,
};
use symabs::sampling::chunk_rng;
use symabs::system::{
    interconnect, laplacian, linear_image, path_edges, BoxSet, Dynamics, InterconnectedSystem, InterconnectionMatrix,
    OutputMap, SubsystemModel,
};
use symabs::{Error, Result};

use crate::report::{fmt_f64, Report, Value};
use crate::spec::{matrix, CouplingSpec, DynamicsSpec, EdgesSpec, GammaDomain, NetworkSpec, SubsystemSpec};

/// Stream offsets so that each sampling stage draws independent numbers.
const TRACE_SEED: u64 = 0x7472_6163;
const RELATION_SEED: u64 = 0x7265_6c61;

/// A pipeline failure tagged with the stage it happened in.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

fn at<T>(stage: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

/// Exit code for a hard error: 1 check failure, 2 input error, 3 capacity.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::ConditionFailed(_) | Error::Numerical(_) | Error::InvalidCertificate(_) | Error::Blocking { .. } => 1,
        Error::Capacity(_) => 3,
        _ => 2,
    }
}

/// The concrete network and everything derived from it.
pub struct Model {
    pub specs: Vec<SubsystemSpec>,
    pub network: InterconnectedSystem,
    pub m_hat: DMatrix<f64>,
    pub weights: Vec<f64>,
}

fn subsystem_dims(s: &SubsystemSpec) -> Result<(usize, usize)> {
    let n = s.state_box.lower.len();
    Ok(match &s.dynamics {
        DynamicsSpec::Integrator => (n, n),
        DynamicsSpec::Linear(l) => (n, matrix(&l.d, "d")?.ncols()),
    })
}

/// Builds the subsystems and both coupling matrices.
pub fn build_model(spec: &NetworkSpec) -> Result<Model> {
    let specs = spec.expanded();
    let n = specs.len();
    let dims = specs.iter().map(subsystem_dims).collect::<Result<Vec<_>>>()?;
    let (m, m_hat) = match &spec.coupling {
        CouplingSpec::Laplacian(l) => {
            if dims.iter().any(|&(sn, p)| sn != 1 || p != 1) {
                return Err(Error::Configuration(
                    "laplacian coupling needs one-dimensional subsystems".into(),
                ));
            }
            let edges = match &l.edges {
                EdgesSpec::Named(name) if name == "path" => path_edges(n),
                EdgesSpec::Named(other) => return Err(Error::Configuration(format!("unknown edge preset `{other}`"))),
                EdgesSpec::List(list) => list.clone(),
            };
            if !(l.tau.is_finite() && l.tau > 0.0) {
                return Err(Error::Configuration(format!("tau must be > 0, got {}", l.tau)));
            }
            let lap = laplacian(n, &edges)?;
            let a = expm(&(lap * -l.tau))?;
            let m = a - DMatrix::identity(n, n);
            (m.clone(), m)
        }
        CouplingSpec::Matrix(c) => {
            let m = matrix(&c.m, "coupling.matrix.m")?;
            let m_hat = match &c.m_hat {
                Some(rows) => matrix(rows, "coupling.matrix.m_hat")?,
                None => m.clone(),
            };
            (m, m_hat)
        }
    };
    let p_total: usize = dims.iter().map(|d| d.1).sum();
    let n_total: usize = dims.iter().map(|d| d.0).sum();
    if m.shape() != (p_total, n_total) {
        return Err(Error::Dimension(format!(
            "coupling is {}x{}, subsystems need {p_total}x{n_total}",
            m.nrows(),
            m.ncols()
        )));
    }

    // default internal boxes: exact image of the coupling over the state boxes
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for s in &specs {
        let b = s.state_box.to_box()?;
        lo.extend_from_slice(b.lower());
        hi.extend_from_slice(b.upper());
    }
    let image = linear_image(&m, &BoxSet::new(lo, hi)?)?;

    let mut subs = Vec::with_capacity(n);
    let mut row = 0;
    for (i, s) in specs.iter().enumerate() {
        let p = dims[i].1;
        let internal = match &s.internal_box {
            Some(b) => b.to_box()?,
            None => BoxSet::new(
                image.lower()[row..row + p].to_vec(),
                image.upper()[row..row + p].to_vec(),
            )?,
        };
        row += p;
        let name = s.name.clone().unwrap_or_else(|| format!("s{i}"));
        let state = s.state_box.to_box()?;
        let input = s.input_box.to_box()?;
        let sub = match &s.dynamics {
            DynamicsSpec::Integrator => SubsystemModel::integrator(name, state, input, internal)?,
            DynamicsSpec::Linear(l) => SubsystemModel::new(
                name,
                state,
                input,
                internal,
                Dynamics::Linear {
                    a: matrix(&l.a, "a")?,
                    b: matrix(&l.b, "b")?,
                    d: matrix(&l.d, "d")?,
                },
                OutputMap::Identity,
                OutputMap::Identity,
            )?,
        };
        subs.push(sub);
    }
    let network = interconnect(subs, InterconnectionMatrix(m))?;
    Ok(Model {
        specs,
        network,
        m_hat,
        weights: spec.weights(),
    })
}

fn passivity_certificate(sub: &SubsystemModel, s: &SubsystemSpec) -> Result<PassivityCertificate> {
    match &s.passivity {
        None => passivity_for_linear(sub, s.lambda_fb),
        Some(p) => {
            let gain = matrix(&p.gain, "passivity.gain")?;
            let offset = p.offset.clone().unwrap_or_else(|| vec![0.0; gain.nrows()]);
            PassivityCertificate::new(
                QuadraticForm::new(matrix(&p.storage, "passivity.storage")?)?,
                AffineFeedback::new(gain, offset)?,
                p.kappa_hat.to_kfn()?,
                p.alpha_lower.to_kfn()?,
                SupplyRate::new(matrix(&p.supply, "passivity.supply")?, sub.internal_dim())?,
                sub.state_box()?.clone(),
            )
        }
    }
}

/// Per-subsystem results of the abstraction stage.
pub struct SubsystemResult {
    pub passivity: PassivityCertificate,
    pub passivity_report: PassivityReport,
    pub abstraction: FiniteAbstraction,
    pub blocking: usize,
    pub storage: StorageCertificate,
    pub storage_report: StorageReport,
    pub domain: BoxSet,
}

/// Everything a successful run produced.
pub struct Run {
    pub model: Model,
    pub subsystems: Vec<SubsystemResult>,
    pub conditions: ConditionReports,
    pub composed: Option<ComposedCertificate>,
    pub bound: Option<RefinementBound>,
    pub traces: Vec<TraceLog>,
    pub relation: Option<RelationReport>,
    pub relation_skipped: Option<usize>,
}

impl Run {
    pub fn abstractions(&self) -> Vec<FiniteAbstraction> {
        self.subsystems.iter().map(|s| s.abstraction.clone()).collect()
    }

    pub fn feedbacks(&self) -> Vec<AffineFeedback> {
        self.subsystems.iter().map(|s| s.passivity.feedback.clone()).collect()
    }
}

/// Text artifacts of a run, keyed by file name.
pub struct Outcome {
    pub passed: bool,
    pub report: String,
    pub summary: BTreeMap<String, String>,
    pub files: Vec<(String, String)>,
    pub run: Option<Run>,
    pub error: Option<StageError>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match &self.error {
            Some(e) => exit_code(&e.error),
            None if self.passed => 0,
            None => 1,
        }
    }
}

fn echo_options(report: &mut Report, spec: &NetworkSpec, model: Option<&Model>) {
    let r = &spec.run;
    report.section("options");
    report.kv("seed", r.seed);
    report.kv("passivity_samples", r.passivity_samples);
    report.kv("storage_samples", r.storage_samples);
    report.kv("traces", r.traces);
    report.kv("horizon", r.horizon);
    match r.input_bound {
        Some(v) => report.kv("input_bound", v),
        None => report.kv("input_bound", "auto"),
    }
    report.kv("psi", format!("{:?}", r.psi));
    report.kv("delta", r.delta);
    report.kv("gamma_domain", format!("{:?}", r.gamma_domain));
    report.kv("resample_range", r.resample_range);
    report.kv("lmi_tolerance", r.lmi_tolerance);
    report.kv("coupling_tolerance", symabs::composition::COUPLING_TOL);
    report.kv("inclusion_tolerance", symabs::composition::INCLUSION_TOL);
    report.kv("check_slack", symabs::certificate::CHECK_SLACK);
    report.kv("snap_tolerance", symabs::refinement::SNAP_TOL);
    report.kv("gamma_samples", GAMMA_SAMPLES);
    report.kv("export_traces", r.export_traces);
    report.kv("relation_check", r.relation_check);
    report.kv("relation_interior_points", r.relation_interior_points);
    report.kv("relation_random_samples", r.relation_random_samples);
    report.kv("relation_max_checks", r.relation_max_checks);
    report.kv("max_triples", r.max_triples);
    if let Some(m) = model {
        report.kv("subsystems", m.network.len());
        report.kv("weights", &m.weights);
    }
}

/// Runs every stage, collecting a report. Hard errors stop the run and are
/// recorded in the outcome together with the stage name.
pub fn run_pipeline(spec: &NetworkSpec) -> Outcome {
    let mut report = Report::new();
    let mut summary = BTreeMap::new();
    let mut files = Vec::new();
    let result = run_stages(spec, &mut report, &mut summary, &mut files);
    let (passed, run, error) = match result {
        Ok((passed, run)) => (passed, Some(run), None),
        Err(e) => {
            summary.insert("error".into(), e.error.to_string());
            summary.insert("failed_stage".into(), e.stage.to_string());
            (false, None, Some(e))
        }
    };
    summary.insert("status".into(), if passed { "pass" } else { "fail" }.into());
    report.summary(&summary);
    let text = report.finish();
    files.insert(0, ("report.txt".to_string(), text.clone()));
    Outcome {
        passed,
        report: text,
        summary,
        files,
        run,
        error,
    }
}

fn run_stages(
    spec: &NetworkSpec,
    report: &mut Report,
    summary: &mut BTreeMap<String, String>,
    files: &mut Vec<(String, String)>,
) -> std::result::Result<(bool, Run), StageError> {
    let opts = &spec.run;
    let model = at("model", build_model(spec));
    echo_options(report, spec, model.as_ref().ok());
    let model = model?;
    let net = &model.network;
    let mut passed = true;
    let mut fail = |summary: &mut BTreeMap<String, String>, stage: &str| {
        passed = false;
        summary
            .entry("failed_stage".into())
            .or_insert_with(|| stage.to_string());
    };

    report.section("model");
    report.kv("state_dim", net.state_dim());
    report.kv("coupling", net.coupling().as_slice());
    report.kv("wellposed_exact", net.wellposed_exact);

    // passivity and abstraction, one subsystem at a time
    let pcerts = model
        .specs
        .iter()
        .zip(net.subsystems())
        .map(|(s, sub)| passivity_certificate(sub, s))
        .collect::<Result<Vec<_>>>();
    let pcerts = at("passivity", pcerts)?;

    let mut outputs = Vec::with_capacity(net.len());
    for (s, sub) in model.specs.iter().zip(net.subsystems()) {
        let grid = at("abstraction", quantize(at("abstraction", sub.state_box())?, s.eta))?;
        let mut ys: Vec<Vec<f64>> = grid.points().iter().map(|x| sub.h2().eval(x)).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).expect("finite outputs"));
        ys.dedup();
        outputs.push(ys);
    }
    let block_dims: Vec<usize> = net.subsystems().iter().map(SubsystemModel::internal_dim).collect();
    let internal_sets = at(
        "abstraction",
        build_internal_input_sets(&model.m_hat, &outputs, &block_dims, DEFAULT_DEDUP_TOL, DEFAULT_SET_CAP),
    )?;

    let abs_opts = AbstractionOptions {
        max_triples: opts.max_triples,
        ..AbstractionOptions::default()
    };
    let mut results = Vec::with_capacity(net.len());
    let mut eps_total = 0.0;
    for (i, ((s, sub), w_set)) in model.specs.iter().zip(net.subsystems()).zip(internal_sets).enumerate() {
        let seed = opts.seed.wrapping_add(i as u64);
        let mut abs = at(
            "abstraction",
            build_abstraction(sub, &pcerts[i], s.eta, s.mu1, w_set, &abs_opts),
        )?;
        abs.set_param("eta", s.eta.to_string());
        abs.set_param("mu1", s.mu1.to_string());
        abs.set_param("lambda_fb", s.lambda_fb.to_string());
        let nb = at("abstraction", check_nonblocking(&abs))?;
        let domain = at("passivity", certified_domain(sub, &pcerts[i], &abs))?;
        let gamma_box = match opts.gamma_domain {
            GammaDomain::StateBox => at("passivity", sub.state_box())?.clone(),
            GammaDomain::Certified => domain.clone(),
        };
        let pcert = at("passivity", pcerts[i].with_gamma_box(gamma_box, GAMMA_SAMPLES, seed))?;
        let prep = at(
            "passivity",
            verify_passivity(sub, &pcert, Some(&domain), opts.passivity_samples, seed),
        )?;
        let scert = at("storage", StorageCertificate::from_passivity(&pcert, s.eta))?;
        let srep = at(
            "storage",
            check_storage_pointwise(sub, &abs, &pcert, &scert, opts.storage_samples, seed),
        )?;

        report.section(&format!("subsystem {i}"));
        report.kv("name", sub.name());
        report.kv("eta", s.eta);
        report.kv("mu1", s.mu1);
        report.kv("lambda_fb", s.lambda_fb);
        report.kv("certified_box_lower", domain.lower());
        report.kv("certified_box_upper", domain.upper());
        report.kv("gamma_box_lower", pcert.gamma_box.lower());
        report.kv("gamma_box_upper", pcert.gamma_box.upper());
        report.kv("gamma", &pcert.gamma.gamma);
        report.kv("gamma_formula_slope", pcert.gamma.formula_slope);
        report.kv("gamma_vertex_slope", pcert.gamma.vertex_slope);
        report.kv("gamma_worst_sampled_ratio", pcert.gamma.worst_sampled_ratio);
        report.kv("passivity_samples", prep.samples);
        report.kv("passivity_worst_lower_margin", prep.worst_lower_margin);
        report.kv("passivity_worst_decrease_margin", prep.worst_decrease_margin);
        report.kv("passivity_violations", prep.violation_count);
        report.kv("states", abs.num_states());
        report.kv("original_states", abs.original_grid().len());
        report.kv("inputs", abs.num_inputs());
        report.kv("internal_inputs", abs.num_internal());
        report.kv("triples", abs.num_triples());
        report.kv("transitions", abs.num_transitions());
        report.kv("extension_rounds", abs.extension_rounds());
        report.kv("blocking_triples", nb.blocking.len());
        report.kv("epsilon", scert.epsilon);
        report.kv("storage_checks", srep.checks);
        report.kv("storage_worst_output_margin", srep.worst_output_margin);
        report.kv("storage_worst_decrease_margin", srep.worst_decrease_margin);
        report.kv("storage_violations", srep.violation_count);
        report.kv("storage_blocking", srep.blocking_count);

        summary.insert(format!("subsystem_{i}_epsilon"), fmt_f64(scert.epsilon));
        summary.insert(
            format!("subsystem_{i}_storage_violations"),
            srep.violation_count.to_string(),
        );
        eps_total += scert.epsilon;
        if !prep.passed() {
            fail(summary, "passivity");
        }
        if !nb.blocking.is_empty() {
            fail(summary, "abstraction");
        }
        if !srep.passed() {
            if opts.gamma_domain == GammaDomain::StateBox {
                report.kv(
                    "hint",
                    "γ on the state box misses abstract states outside it; try gamma_domain = certified",
                );
            }
            fail(summary, "storage");
        }
        files.push((format!("abstraction_{i}.txt"), write_dump(&abs)));
        results.push(SubsystemResult {
            passivity: pcert,
            passivity_report: prep,
            abstraction: abs,
            blocking: nb.blocking.len(),
            storage: scert,
            storage_report: srep,
            domain,
        });
    }
    let storage_violations: usize = results.iter().map(|r| r.storage_report.violation_count).sum();
    summary.insert("storage_violations".into(), storage_violations.to_string());
    summary.insert("epsilon_sum".into(), fmt_f64(eps_total));

    // composition
    let abstractions: Vec<FiniteAbstraction> = results.iter().map(|r| r.abstraction.clone()).collect();
    let problem = CompositionProblem {
        certs: results.iter().map(|r| r.storage.clone()).collect(),
        weights: model.weights.clone(),
        coupling: net.coupling().clone(),
        abstract_coupling: model.m_hat.clone(),
        abstractions: &abstractions,
    };
    let assembly = at("composition", assemble(&problem.certs, &problem.weights))?;
    let mut conditions = at("composition", check_conditions(&problem, &assembly))?;
    conditions.lmi = at(
        "composition",
        check_dissipativity_lmi(&assembly, net.coupling(), opts.lmi_tolerance),
    )?;
    report.section("composition");
    report.kv("lmi_max_eigenvalue", conditions.lmi.max_eigenvalue);
    report.kv("lmi_eigenvalues", &conditions.lmi.eigenvalues);
    report.kv("lmi_passed", conditions.lmi.passed);
    report.kv("coupling_deviation", conditions.coupling.deviation);
    report.kv("coupling_passed", conditions.coupling.passed);
    report.kv("inclusion_points", conditions.inclusion.points_checked);
    report.kv("inclusion_uncovered", conditions.inclusion.uncovered);
    if let Some((i, y, d)) = &conditions.inclusion.worst {
        report.kv(
            "inclusion_worst",
            format!("subsystem {i} point {} distance {}", y.render(), fmt_f64(*d)),
        );
    }
    report.kv("inclusion_passed", conditions.inclusion.passed);
    summary.insert("lmi_max_eigenvalue".into(), fmt_f64(conditions.lmi.max_eigenvalue));
    summary.insert("coupling_deviation".into(), fmt_f64(conditions.coupling.deviation));
    summary.insert(
        "inclusion".into(),
        if conditions.inclusion.passed { "pass" } else { "fail" }.into(),
    );

    let mut run = Run {
        model: Model {
            specs: model.specs.clone(),
            network: model.network.clone(),
            m_hat: model.m_hat.clone(),
            weights: model.weights.clone(),
        },
        subsystems: Vec::new(),
        conditions: conditions.clone(),
        composed: None,
        bound: None,
        traces: Vec::new(),
        relation: None,
        relation_skipped: None,
    };
    let compose_opts = ComposeOptions {
        resample: Resample {
            range: opts.resample_range,
            points: ComposeOptions::default().resample.points,
        },
        ..ComposeOptions::default()
    };
    let composed = match compose_certificate(&problem, &conditions, &compose_opts) {
        Ok(c) => c,
        Err(Error::ConditionFailed(name)) => {
            report.kv("refused", name);
            fail(summary, "composition");
            run.subsystems = results;
            return Ok((false, run));
        }
        Err(e) => {
            return Err(StageError {
                stage: "composition",
                error: e,
            })
        }
    };
    let cert = &composed.certificate;
    report.kv("sigma", &cert.sigma);
    report.kv("sigma_exact", composed.sigma_exact);
    report.kv("rho_ext", &cert.rho_ext);
    report.kv("rho_ext_exact", composed.rho_exact);
    report.kv("alpha", &cert.alpha);
    report.kv("alpha_exact", composed.alpha_exact);
    report.kv("epsilon", cert.epsilon);
    summary.insert("epsilon".into(), fmt_f64(cert.epsilon));
    summary.insert("sigma".into(), cert.sigma.to_string());

    // bound
    let abstract_input_norm = abstractions
        .iter()
        .flat_map(|a| (0..a.num_inputs()).map(|u| inf_norm(&a.input_point(u))))
        .fold(0.0_f64, f64::max);
    let v = opts.input_bound.unwrap_or(abstract_input_norm);
    let params = SynthesisParams {
        psi: at("bound", opts.psi.to_kfn())?,
        delta: opts.delta,
        resample: Resample::over(opts.resample_range),
    };
    let bound = at("bound", compute_bound(cert, v, &params))?;
    report.section("bound");
    report.kv("input_bound", v);
    report.kv("sigma_hat", &bound.functions.sigma_hat);
    report.kv("lambda", bound.lambda());
    report.kv("gamma_ext", bound.gamma_ext());
    report.kv("phi", bound.phi());
    report.kv("level", bound.level);
    report.kv("eps_hat", bound.eps_hat);
    report.kv("interp_error", bound.functions.interp_error);
    summary.insert("phi".into(), fmt_f64(bound.phi()));
    summary.insert("eps_hat".into(), fmt_f64(bound.eps_hat));

    // traces
    let feedbacks: Vec<AffineFeedback> = results.iter().map(|r| r.passivity.feedback.clone()).collect();
    let ctx = PairContext {
        network: net,
        abstractions: &abstractions,
        abstract_coupling: &model.m_hat,
        feedbacks: &feedbacks,
        certificate: cert,
        bound: &bound,
    };
    let admissible = ctx.admissible_inputs();
    if admissible.is_empty() {
        return Err(StageError {
            stage: "traces",
            error: Error::Configuration(format!("no abstract input satisfies the input bound {v}")),
        });
    }
    let state_box = at("traces", net.state_box())?;
    let traces = (0..opts.traces)
        .into_par_iter()
        .map(|t| {
            let mut rng = chunk_rng(opts.seed ^ TRACE_SEED, t);
            let mut x0 = state_box.sample(&mut rng);
            let s0 = ctx.nearest_state(&x0);
            if ctx.storage(&x0, &s0) > bound.level {
                x0 = ctx.abstract_point(&s0);
            }
            let inputs = random_inputs(&admissible, opts.horizon, &mut rng);
            simulate_pair(&ctx, &x0, &s0, &inputs)
        })
        .collect::<Result<Vec<_>>>();
    let traces = at("traces", traces)?;
    let trace_violations: usize = traces.iter().map(|t| t.violations.len()).sum();
    let max_err = traces.iter().map(|t| t.max_output_error).fold(0.0, f64::max);
    report.section("traces");
    report.kv("count", traces.len());
    report.kv("horizon", opts.horizon);
    report.kv("violations", trace_violations);
    report.kv("max_output_error", max_err);
    report.kv("max_storage", traces.iter().map(|t| t.max_v).fold(0.0, f64::max));
    report.kv("off_set_snaps", traces.iter().map(|t| t.off_set_snaps).sum::<usize>());
    report.kv(
        "outside_box_steps",
        traces.iter().map(|t| t.outside_box_steps).sum::<usize>(),
    );
    if let Some((t, log)) = traces.iter().enumerate().find(|(_, l)| !l.passed()) {
        report.kv("first_failing_trace", t);
        report.kv("first_violation_step", log.first_violation().unwrap_or(0));
    }
    summary.insert("trace_violations".into(), trace_violations.to_string());
    summary.insert("max_output_error".into(), fmt_f64(max_err));
    if trace_violations > 0 {
        fail(summary, "traces");
    }
    for (t, log) in traces.iter().take(opts.export_traces).enumerate() {
        files.push((format!("trace_{t}.csv"), log.to_csv()));
    }

    // relation
    report.section("relation");
    let mut relation = None;
    let mut relation_skipped = None;
    if opts.relation_check {
        let sample_count = grid_sample_count(&abstractions, opts.relation_interior_points)
            .saturating_add(opts.relation_random_samples);
        let checks = sample_count
            .saturating_mul(
                abstractions
                    .iter()
                    .map(|a| a.original_grid().len())
                    .fold(1usize, usize::saturating_mul),
            )
            .saturating_mul(admissible.len());
        if checks > opts.relation_max_checks {
            report.kv("skipped_checks", checks);
            relation_skipped = Some(checks);
            summary.insert("relation".into(), "skipped".into());
        } else {
            let mut samples = grid_samples(&abstractions, opts.relation_interior_points);
            let mut rng = chunk_rng(opts.seed ^ RELATION_SEED, 0);
            samples.extend((0..opts.relation_random_samples).map(|_| state_box.sample(&mut rng)));
            let r = at("relation", verify_alternating_simulation(&ctx, &samples))?;
            report.kv("samples", samples.len());
            report.kv("pairs", r.pairs_considered);
            report.kv("pairs_in_relation", r.pairs_in_relation);
            report.kv("transitions", r.transitions_checked);
            report.kv("output_violations", r.output_violations);
            report.kv("invariance_violations", r.invariance_violations);
            report.kv("worst_output_margin", r.worst_output_margin);
            report.kv("worst_invariance_margin", r.worst_invariance_margin);
            report.kv("off_set_snaps", r.off_set_snaps);
            summary.insert(
                "relation_violations".into(),
                (r.output_violations + r.invariance_violations).to_string(),
            );
            summary.insert("relation".into(), if r.passed() { "pass" } else { "fail" }.into());
            if !r.passed() {
                fail(summary, "relation");
            }
            relation = Some(r);
        }
    } else {
        report.kv("skipped", "disabled");
        summary.insert("relation".into(), "disabled".into());
    }

    run.subsystems = results;
    run.composed = Some(composed.clone());
    run.bound = Some(bound);
    run.traces = traces;
    run.relation = relation;
    run.relation_skipped = relation_skipped;
    Ok((passed, run))
}
