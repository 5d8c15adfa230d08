//! Output-error bounds for composed abstractions and the interface that
//! drives a concrete network from abstract inputs.
//!
//! The relation `R = {(x, x̂) | V(x, x̂) ≤ γ_ext(v) + φ}` is checked along
//! paired traces and exhaustively on small instances.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::abstraction::FiniteAbstraction;
use crate::certificate::{AffineFeedback, QuadraticForm, SimulationCertificate, CHECK_SLACK, REPORT_CAP};
use crate::error::{Error, Result};
use crate::kfn::{synthesize_bound, BoundFunctions, ClassKFn, SynthesisParams};
use crate::linalg::{inf_dist, inf_norm, mat_vec};
use crate::sampling::WorstList;
use crate::system::InterconnectedSystem;

/// Default tolerance for snapping abstract internal inputs onto their set.
pub const SNAP_TOL: f64 = 1e-9;

/// Output-error bound of a composed certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementBound {
    pub functions: BoundFunctions,
    pub alpha: ClassKFn,
    /// Bound `v` on `‖û‖∞`.
    pub input_bound: f64,
    /// Relation level `γ_ext(v) + φ`.
    pub level: f64,
    /// `ε̂ = α⁻¹(level)`.
    pub eps_hat: f64,
}

impl RefinementBound {
    pub fn phi(&self) -> f64 {
        self.functions.phi
    }

    pub fn lambda(&self) -> &ClassKFn {
        &self.functions.lambda
    }

    pub fn gamma_ext(&self) -> &ClassKFn {
        &self.functions.gamma_ext
    }

    /// Same functions with `φ` replaced; level and `ε̂` follow.
    pub fn with_phi(&self, phi: f64) -> Result<RefinementBound> {
        let mut functions = self.functions.clone();
        functions.phi = phi;
        finish_bound(functions, self.alpha.clone(), self.input_bound)
    }

    /// Right-hand side of the one-step inequality.
    pub fn step_bound(&self, v: f64, u_hat_norm: f64) -> f64 {
        self.lambda()
            .eval(v)
            .max(self.gamma_ext().eval(u_hat_norm) + self.phi())
    }
}

fn finish_bound(functions: BoundFunctions, alpha: ClassKFn, input_bound: f64) -> Result<RefinementBound> {
    let level = functions.gamma_ext.eval(input_bound) + functions.phi;
    let eps_hat = alpha.invert()?.eval(level);
    Ok(RefinementBound {
        functions,
        alpha,
        input_bound,
        level,
        eps_hat,
    })
}

/// Synthesizes `λ, γ_ext, φ` from the certificate and sets
/// `ε̂ = α⁻¹(γ_ext(v) + φ)`.
pub fn compute_bound(
    cert: &SimulationCertificate,
    input_bound: f64,
    params: &SynthesisParams,
) -> Result<RefinementBound> {
    if !(input_bound >= 0.0 && input_bound.is_finite()) {
        return Err(Error::Domain(format!(
            "input bound must be finite and ≥ 0, got {input_bound}"
        )));
    }
    let functions = synthesize_bound(&cert.sigma, &cert.rho_ext, cert.epsilon, params)?;
    finish_bound(functions, cert.alpha.clone(), input_bound)
}

/// Concrete input `u = H(x) + û`.
pub fn refine_input(feedback: &AffineFeedback, x: &[f64], u_hat: &[f64]) -> Vec<f64> {
    feedback.refine(x, u_hat)
}

/// Successor of `(state, input, internal)` minimizing `S(x_d, ·)`; ties go
/// to the lowest grid index.
pub fn choose_abstract_successor(
    abs: &FiniteAbstraction,
    state: usize,
    input: usize,
    internal: usize,
    x_d: &[f64],
    storage: &QuadraticForm,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &t in abs.successors(state, input, internal) {
        let v = storage.value(x_d, &abs.state_point(t as usize));
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((t as usize, v));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::Blocking { state, input, internal })
}

/// A concrete network, its abstractions and the certificate relating them.
#[derive(Debug, Clone, Copy)]
pub struct PairContext<'a> {
    pub network: &'a InterconnectedSystem,
    pub abstractions: &'a [FiniteAbstraction],
    pub abstract_coupling: &'a DMatrix<f64>,
    pub feedbacks: &'a [AffineFeedback],
    pub certificate: &'a SimulationCertificate,
    pub bound: &'a RefinementBound,
}

/// One joint transition of the concrete network and its abstraction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStep {
    pub u_hat: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub x_next: Vec<f64>,
    pub abstract_next: Vec<usize>,
    /// Subsystems whose abstract internal input was farther than
    /// [`SNAP_TOL`] from its finite set.
    pub off_set_snaps: usize,
}

impl<'a> PairContext<'a> {
    pub fn len(&self) -> usize {
        self.abstractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abstractions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.network.len();
        if self.abstractions.len() != n || self.feedbacks.len() != n || self.certificate.blocks.len() != n {
            return Err(Error::Dimension(format!(
                "{n} subsystems, {} abstractions, {} feedbacks, {} storage blocks",
                self.abstractions.len(),
                self.feedbacks.len(),
                self.certificate.blocks.len()
            )));
        }
        for i in 0..n {
            let r = self.network.state_range(i);
            let b = &self.certificate.blocks[i];
            if b.offset != r.start || b.form.dim() != r.len() || self.abstractions[i].state_grid().dim() != r.len() {
                return Err(Error::Dimension(format!(
                    "subsystem {i}: storage block or abstraction misaligned"
                )));
            }
        }
        Ok(())
    }

    /// Stacked abstract state.
    pub fn abstract_point(&self, states: &[usize]) -> Vec<f64> {
        states
            .iter()
            .zip(self.abstractions)
            .flat_map(|(&s, a)| a.state_point(s))
            .collect()
    }

    /// Stacked abstract input.
    pub fn abstract_input(&self, inputs: &[usize]) -> Vec<f64> {
        inputs
            .iter()
            .zip(self.abstractions)
            .flat_map(|(&u, a)| a.input_point(u))
            .collect()
    }

    /// `V(x, x̂)`.
    pub fn storage(&self, x: &[f64], states: &[usize]) -> f64 {
        self.certificate.value(x, &self.abstract_point(states))
    }

    /// `‖h(x) − ĥ(x̂)‖∞`.
    pub fn output_error(&self, x: &[f64], states: &[usize]) -> f64 {
        let xh = self.abstract_point(states);
        inf_dist(&self.network.output(x), &self.network.output(&xh))
    }

    /// Steps both systems under the abstract input `inputs`.
    pub fn step(&self, x: &[f64], states: &[usize], inputs: &[usize]) -> Result<PairStep> {
        let net = self.network;
        let u_hat = self.abstract_input(inputs);
        let mut u = Vec::with_capacity(u_hat.len());
        for (i, fb) in self.feedbacks.iter().enumerate() {
            u.extend(refine_input(fb, &x[net.state_range(i)], &u_hat[net.input_range(i)]));
        }
        let w = net.internal_inputs(x);
        let x_next = net.step_unchecked(x, &u);

        let y2_hat: Vec<f64> = states
            .iter()
            .zip(self.abstractions)
            .flat_map(|(&s, a)| a.h2_value(s))
            .collect();
        let w_hat = mat_vec(self.abstract_coupling, &y2_hat);
        let mut abstract_next = Vec::with_capacity(states.len());
        let mut off_set_snaps = 0;
        for (i, a) in self.abstractions.iter().enumerate() {
            let (wi, d) = a.nearest_internal(&w_hat[net.internal_range(i)]);
            if d > SNAP_TOL {
                off_set_snaps += 1;
            }
            abstract_next.push(choose_abstract_successor(
                a,
                states[i],
                inputs[i],
                wi,
                &x_next[net.state_range(i)],
                &self.certificate.blocks[i].form,
            )?);
        }
        Ok(PairStep {
            u_hat,
            u,
            w,
            w_hat,
            x_next,
            abstract_next,
            off_set_snaps,
        })
    }

    /// Joint abstract inputs with `‖û‖∞ ≤ v`, in lexicographic order.
    pub fn admissible_inputs(&self) -> Vec<Vec<usize>> {
        let counts: Vec<usize> = self.abstractions.iter().map(FiniteAbstraction::num_inputs).collect();
        product(&counts)
            .into_iter()
            .filter(|idx| inf_norm(&self.abstract_input(idx)) <= self.bound.input_bound * (1.0 + CHECK_SLACK))
            .collect()
    }

    /// Joint abstract states over the original grids, in lexicographic order.
    pub fn original_states(&self) -> Vec<Vec<usize>> {
        let counts: Vec<usize> = self.abstractions.iter().map(|a| a.original_grid().len()).collect();
        product(&counts)
            .into_iter()
            .map(|idx| {
                idx.iter()
                    .zip(self.abstractions)
                    .map(|(&k, a)| a.original_state_index(k))
                    .collect()
            })
            .collect()
    }

    /// Abstract state whose points are nearest to `x` on the original grids.
    pub fn nearest_state(&self, x: &[f64]) -> Vec<usize> {
        self.abstractions
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let xi = &x[self.network.state_range(i)];
                let g = a.original_grid();
                let k: Vec<i64> = xi
                    .iter()
                    .enumerate()
                    .map(|(ax, v)| ((v / g.eta()[ax]).round() as i64).clamp(g.lo()[ax], g.hi()[ax]))
                    .collect();
                a.state_grid().index_of(&k).expect("original grid is contained")
            })
            .collect()
    }
}

fn product(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in counts {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..c).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    out
}

fn slack(scale: f64) -> f64 {
    CHECK_SLACK * scale.abs().max(1.0)
}

/// What a trace step violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceViolationKind {
    /// `V(x⁺, x̂⁺) > max{λ(V), γ_ext(‖û‖) + φ}`.
    StepBound,
    /// `α(‖h(x) − ĥ(x̂)‖) > V(x, x̂)`.
    LowerBound,
    /// `‖h(x) − ĥ(x̂)‖ > ε̂` although the trace started in the relation.
    OutputBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceViolation {
    pub step: usize,
    pub kind: TraceViolationKind,
    pub margin: f64,
}

/// One transition of a paired trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
    /// `V` at step `k`.
    pub v: f64,
    /// Bound the value at step `k + 1` must respect.
    pub bound: f64,
    pub output_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
    pub final_x: Vec<f64>,
    pub final_x_hat: Vec<f64>,
    pub final_v: f64,
    pub final_output_error: f64,
    pub started_in_relation: bool,
    pub max_output_error: f64,
    pub max_v: f64,
    pub violations: Vec<TraceViolation>,
    pub off_set_snaps: usize,
    /// Steps whose concrete state lay outside the network state box.
    pub outside_box_steps: usize,
}

impl TraceLog {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.violations.first().map(|v| v.step)
    }

    /// CSV with header `k,x…,xhat…,V,bound,out_err`; the final state is
    /// the last row with an empty bound.
    pub fn to_csv(&self) -> String {
        let n = self.final_x.len();
        let mut s = String::from("k");
        for i in 1..=n {
            let _ = write!(s, ",x{i}");
        }
        for i in 1..=n {
            let _ = write!(s, ",xhat{i}");
        }
        s.push_str(",V,bound,out_err\n");
        let row = |s: &mut String, k: usize, x: &[f64], xh: &[f64], v: f64, bound: Option<f64>, e: f64| {
            let _ = write!(s, "{k}");
            for c in x.iter().chain(xh) {
                let _ = write!(s, ",{c:.16e}");
            }
            let _ = write!(s, ",{v:.16e},");
            if let Some(b) = bound {
                let _ = write!(s, "{b:.16e}");
            }
            let _ = writeln!(s, ",{e:.16e}");
        };
        for r in &self.records {
            row(&mut s, r.k, &r.x, &r.x_hat, r.v, Some(r.bound), r.output_error);
        }
        row(
            &mut s,
            self.records.len(),
            &self.final_x,
            &self.final_x_hat,
            self.final_v,
            None,
            self.final_output_error,
        );
        s
    }
}

/// Runs both systems for `inputs.len()` steps from `(x0, states0)` and
/// checks the one-step inequality, the storage lower bound and, when the
/// pair starts in the relation, the standing output bound.
pub fn simulate_pair(ctx: &PairContext<'_>, x0: &[f64], states0: &[usize], inputs: &[Vec<usize>]) -> Result<TraceLog> {
    ctx.validate()?;
    let bound = ctx.bound;
    let state_box = ctx.network.state_box()?;
    let mut x = x0.to_vec();
    let mut states = states0.to_vec();
    let mut v = ctx.storage(&x, &states);
    let started_in_relation = v <= bound.level + slack(bound.level);
    let mut log = TraceLog {
        records: Vec::with_capacity(inputs.len()),
        final_x: Vec::new(),
        final_x_hat: Vec::new(),
        final_v: 0.0,
        final_output_error: 0.0,
        started_in_relation,
        max_output_error: 0.0,
        max_v: 0.0,
        violations: Vec::new(),
        off_set_snaps: 0,
        outside_box_steps: 0,
    };
    let check_state = |log: &mut TraceLog, k: usize, x: &[f64], states: &[usize], v: f64| -> f64 {
        let e = ctx.output_error(x, states);
        log.max_output_error = log.max_output_error.max(e);
        log.max_v = log.max_v.max(v);
        if !state_box.contains(x, 0.0) {
            log.outside_box_steps += 1;
        }
        let a = ctx.certificate.alpha.eval(e);
        if a > v + slack(v) {
            log.violations.push(TraceViolation {
                step: k,
                kind: TraceViolationKind::LowerBound,
                margin: v - a,
            });
        }
        if started_in_relation && e > bound.eps_hat + slack(bound.eps_hat) {
            log.violations.push(TraceViolation {
                step: k,
                kind: TraceViolationKind::OutputBound,
                margin: bound.eps_hat - e,
            });
        }
        e
    };
    for (k, input) in inputs.iter().enumerate() {
        let e = check_state(&mut log, k, &x, &states, v);
        let step = ctx.step(&x, &states, input)?;
        log.off_set_snaps += step.off_set_snaps;
        let rhs = bound.step_bound(v, inf_norm(&step.u_hat));
        let v_next = ctx.storage(&step.x_next, &step.abstract_next);
        if v_next > rhs + slack(rhs) {
            log.violations.push(TraceViolation {
                step: k + 1,
                kind: TraceViolationKind::StepBound,
                margin: rhs - v_next,
            });
        }
        log.records.push(TraceRecord {
            k,
            x_hat: ctx.abstract_point(&states),
            x: std::mem::replace(&mut x, step.x_next),
            u_hat: step.u_hat,
            u: step.u,
            w: step.w,
            w_hat: step.w_hat,
            v,
            bound: rhs,
            output_error: e,
        });
        states = step.abstract_next;
        v = v_next;
    }
    log.final_output_error = check_state(&mut log, inputs.len(), &x, &states, v);
    log.final_x_hat = ctx.abstract_point(&states);
    log.final_x = x;
    log.final_v = v;
    Ok(log)
}

/// Draws `steps` admissible joint abstract inputs uniformly.
pub fn random_inputs<R: Rng + ?Sized>(admissible: &[Vec<usize>], steps: usize, rng: &mut R) -> Vec<Vec<usize>> {
    (0..steps)
        .map(|_| admissible[rng.gen_range(0..admissible.len())].clone())
        .collect()
}

/// What a relation check violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationViolationKind {
    /// Output error above `ε̂` for a pair in the relation.
    OutputError,
    /// The refined successor pair left the relation.
    Invariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationViolation {
    pub kind: RelationViolationKind,
    pub margin: f64,
    pub sample: usize,
    pub abstract_state: Vec<usize>,
    pub input: Vec<usize>,
}

/// Outcome of [`verify_alternating_simulation`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    pub pairs_considered: usize,
    pub pairs_in_relation: usize,
    pub transitions_checked: usize,
    pub output_violations: usize,
    pub invariance_violations: usize,
    pub worst_output_margin: f64,
    pub worst_invariance_margin: f64,
    pub off_set_snaps: usize,
    pub violations: Vec<RelationViolation>,
}

impl RelationReport {
    pub fn passed(&self) -> bool {
        self.output_violations == 0 && self.invariance_violations == 0
    }
}

/// For every concrete sample and abstract state (original grids) in the
/// relation: checks the output error against `ε̂` and, for every admissible
/// abstract input, that the refined successor pair stays in the relation.
pub fn verify_alternating_simulation(ctx: &PairContext<'_>, samples: &[Vec<f64>]) -> Result<RelationReport> {
    ctx.validate()?;
    let states = ctx.original_states();
    let inputs = ctx.admissible_inputs();
    let bound = ctx.bound;
    let level_tol = bound.level + slack(bound.level);
    let parts: Vec<Result<(RelationReport, WorstList<RelationViolation>)>> = samples
        .par_iter()
        .enumerate()
        .map(|(si, x)| {
            let mut r = RelationReport {
                pairs_considered: 0,
                pairs_in_relation: 0,
                transitions_checked: 0,
                output_violations: 0,
                invariance_violations: 0,
                worst_output_margin: f64::INFINITY,
                worst_invariance_margin: f64::INFINITY,
                off_set_snaps: 0,
                violations: Vec::new(),
            };
            let mut list = WorstList::new(REPORT_CAP);
            for st in &states {
                r.pairs_considered += 1;
                if ctx.storage(x, st) > level_tol {
                    continue;
                }
                r.pairs_in_relation += 1;
                let e = ctx.output_error(x, st);
                let m = bound.eps_hat - e;
                r.worst_output_margin = r.worst_output_margin.min(m);
                if m < -slack(bound.eps_hat) {
                    r.output_violations += 1;
                    list.push(
                        m,
                        RelationViolation {
                            kind: RelationViolationKind::OutputError,
                            margin: m,
                            sample: si,
                            abstract_state: st.clone(),
                            input: Vec::new(),
                        },
                    );
                }
                for u in &inputs {
                    r.transitions_checked += 1;
                    let step = ctx.step(x, st, u)?;
                    r.off_set_snaps += step.off_set_snaps;
                    let m = bound.level - ctx.storage(&step.x_next, &step.abstract_next);
                    r.worst_invariance_margin = r.worst_invariance_margin.min(m);
                    if m < -slack(bound.level) {
                        r.invariance_violations += 1;
                        list.push(
                            m,
                            RelationViolation {
                                kind: RelationViolationKind::Invariance,
                                margin: m,
                                sample: si,
                                abstract_state: st.clone(),
                                input: u.clone(),
                            },
                        );
                    }
                }
            }
            Ok((r, list))
        })
        .collect();
    let mut total = RelationReport {
        pairs_considered: 0,
        pairs_in_relation: 0,
        transitions_checked: 0,
        output_violations: 0,
        invariance_violations: 0,
        worst_output_margin: f64::INFINITY,
        worst_invariance_margin: f64::INFINITY,
        off_set_snaps: 0,
        violations: Vec::new(),
    };
    let mut list = WorstList::new(REPORT_CAP);
    for part in parts {
        let (r, l) = part?;
        total.pairs_considered += r.pairs_considered;
        total.pairs_in_relation += r.pairs_in_relation;
        total.transitions_checked += r.transitions_checked;
        total.output_violations += r.output_violations;
        total.invariance_violations += r.invariance_violations;
        total.worst_output_margin = total.worst_output_margin.min(r.worst_output_margin);
        total.worst_invariance_margin = total.worst_invariance_margin.min(r.worst_invariance_margin);
        total.off_set_snaps += r.off_set_snaps;
        list.merge(l);
    }
    total.violations = list.into_sorted().into_iter().map(|(_, v)| v).collect();
    Ok(total)
}

/// Grid points of every original grid axis plus `extra` evenly spaced points
/// inside each grid interval, combined into network states.
/// Number of points [`grid_samples`] would return, saturating.
pub fn grid_sample_count(abstractions: &[FiniteAbstraction], extra: usize) -> usize {
    abstractions
        .iter()
        .flat_map(|a| {
            let g = a.original_grid();
            (0..g.dim()).map(move |ax| (g.count(ax) - 1).saturating_mul(extra + 1) + 1)
        })
        .fold(1usize, usize::saturating_mul)
}

pub fn grid_samples(abstractions: &[FiniteAbstraction], extra: usize) -> Vec<Vec<f64>> {
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for a in abstractions {
        let g = a.original_grid();
        for ax in 0..g.dim() {
            let mut pts = Vec::new();
            for k in g.lo()[ax]..=g.hi()[ax] {
                let p = g.coordinate(ax, k);
                pts.push(p);
                if k < g.hi()[ax] {
                    let e = g.eta()[ax];
                    pts.extend((1..=extra).map(|j| p + e * j as f64 / (extra + 1) as f64));
                }
            }
            axes.push(pts);
        }
    }
    let counts: Vec<usize> = axes.iter().map(Vec::len).collect();
    product(&counts)
        .into_iter()
        .map(|idx| idx.iter().enumerate().map(|(ax, &k)| axes[ax][k]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{quantize, AbstractOutput, FiniteAbstraction};
    use crate::certificate::StorageBlock;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn square_cert(sigma: f64, epsilon: f64) -> SimulationCertificate {
        SimulationCertificate {
            blocks: vec![StorageBlock {
                offset: 0,
                weight: 1.0,
                form: QuadraticForm::identity(1),
            }],
            alpha: ClassKFn::Power {
                coeff: 1.0,
                exponent: 2.0,
            },
            sigma: ClassKFn::Linear(sigma),
            rho_ext: ClassKFn::Zero,
            epsilon,
        }
    }

    #[test]
    fn refine_examples() {
        let fb = AffineFeedback::proportional(1, 0.5);
        assert_abs_diff_eq!(refine_input(&fb, &[1.0], &[0.2])[0], -0.3);
        assert_eq!(refine_input(&fb, &[0.0], &[0.0]), vec![0.0]);
        let affine = AffineFeedback::new(DMatrix::from_element(1, 1, -0.5), vec![0.1]).unwrap();
        assert_abs_diff_eq!(refine_input(&affine, &[0.0], &[0.0])[0], 0.1);
    }

    #[test]
    fn bound_examples() {
        let b = compute_bound(&square_cert(0.5, 0.3), 0.0, &SynthesisParams::default()).unwrap();
        assert_abs_diff_eq!(b.phi(), 2.4, epsilon = 1e-12);
        assert_abs_diff_eq!(b.eps_hat, 2.4_f64.sqrt(), epsilon = 1e-12);
        let d = compute_bound(&square_cert(0.5, 0.6), 0.0, &SynthesisParams::default()).unwrap();
        assert_abs_diff_eq!(d.eps_hat / b.eps_hat, 2.0_f64.sqrt(), epsilon = 1e-12);
        let z = compute_bound(&square_cert(0.5, 0.0), 0.0, &SynthesisParams::default()).unwrap();
        assert_eq!(z.eps_hat, 0.0);
    }

    #[test]
    fn eps_hat_is_monotone_in_epsilon() {
        let params = SynthesisParams::default();
        let mut last = 0.0;
        for k in 0..20 {
            let b = compute_bound(&square_cert(0.5, k as f64 * 0.05), 0.1, &params).unwrap();
            assert!(b.eps_hat >= last);
            last = b.eps_hat;
        }
    }

    fn two_point_abstraction(targets: Vec<u32>) -> FiniteAbstraction {
        let g = quantize(&crate::system::BoxSet::cube(1, 0.0, 0.5).unwrap(), 0.5).unwrap();
        let ig = quantize(&crate::system::BoxSet::cube(1, 0.0, 1.0).unwrap(), 1.0).unwrap();
        let mut lists = vec![vec![0u32]; g.len() * ig.len()];
        lists[0] = targets;
        FiniteAbstraction::from_parts(
            g.clone(),
            g,
            ig,
            vec![vec![0.0]],
            lists,
            AbstractOutput::Identity,
            0,
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn successor_choice() {
        let q = QuadraticForm::identity(1);
        let a = two_point_abstraction(vec![0, 1]);
        assert_eq!(choose_abstract_successor(&a, 0, 0, 0, &[0.35], &q).unwrap(), 1);
        assert_eq!(choose_abstract_successor(&a, 0, 0, 0, &[0.25], &q).unwrap(), 0);
        let single = two_point_abstraction(vec![1]);
        assert_eq!(choose_abstract_successor(&single, 0, 0, 0, &[0.0], &q).unwrap(), 1);
        let empty = two_point_abstraction(vec![]);
        assert!(matches!(
            choose_abstract_successor(&empty, 0, 0, 0, &[0.0], &q),
            Err(Error::Blocking { .. })
        ));
    }

    #[test]
    fn product_enumerates_lexicographically() {
        assert_eq!(product(&[2, 2]), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(product(&[]), vec![Vec::<usize>::new()]);
    }
}
