//! Incremental-passivity certificates, storage certificates for
//! subsystem/abstraction pairs, and network simulation certificates.

use nalgebra::DMatrix;
use rand::Rng;

use crate::abstraction::FiniteAbstraction;
use crate::error::{Error, Result};
use crate::kfn::ClassKFn;
use crate::linalg::{asymmetry, inf_dist, inf_norm, mat_vec, max_abs, quad_form};
use crate::sampling::{par_chunks, WorstList};
use crate::system::{check_feedback_gain, integrator_supply_rate, BoxSet, SubsystemModel};

/// Relative slack for all sampled inequality checks.
pub const CHECK_SLACK: f64 = 1e-9;

/// Smallest slope handed out for a γ on a degenerate box.
pub const GAMMA_FLOOR_SLOPE: f64 = 1e-12;

/// Default number of sampled triples used to cross-check γ.
pub const GAMMA_SAMPLES: usize = 10_000;

/// Number of worst violations kept in reports.
pub const REPORT_CAP: usize = 16;

/// `G(x, x') = (x − x')ᵀ Q (x − x')` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    q: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::Dimension("quadratic form needs a square matrix".into()));
        }
        if asymmetry(&q) > 1e-12 * max_abs(&q).max(1.0) {
            return Err(Error::InvalidCertificate(
                "quadratic form matrix is not symmetric".into(),
            ));
        }
        if q.clone().cholesky().is_none() {
            return Err(Error::InvalidCertificate(
                "quadratic form matrix is not positive definite".into(),
            ));
        }
        Ok(QuadraticForm { q })
    }

    pub fn identity(n: usize) -> Self {
        QuadraticForm {
            q: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn value(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        quad_form(&self.q, &d)
    }
}

/// State feedback `H(x) = K x + k₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFeedback {
    pub gain: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl AffineFeedback {
    pub fn new(gain: DMatrix<f64>, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != gain.nrows() {
            return Err(Error::Dimension(format!(
                "feedback gain has {} rows, offset has {} entries",
                gain.nrows(),
                offset.len()
            )));
        }
        Ok(AffineFeedback { gain, offset })
    }

    /// `H(x) = −λ x`.
    pub fn proportional(n: usize, gain: f64) -> Self {
        AffineFeedback {
            gain: DMatrix::identity(n, n) * -gain,
            offset: vec![0.0; n],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.gain, x)
            .iter()
            .zip(&self.offset)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Refined input `u = H(x) + û`.
    pub fn refine(&self, x: &[f64], u_hat: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(u_hat).map(|(a, b)| a + b).collect()
    }
}

/// Symmetric supply-rate matrix partitioned as `[[X11, X12], [X21, X22]]`,
/// acting on `[internal-input mismatch; internal-output mismatch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyRate {
    matrix: DMatrix<f64>,
    internal_dim: usize,
}

impl SupplyRate {
    pub fn new(matrix: DMatrix<f64>, internal_dim: usize) -> Result<Self> {
        if !matrix.is_square() || internal_dim > matrix.nrows() {
            return Err(Error::Dimension(format!(
                "supply rate is {}x{} with a {internal_dim}-dim internal block",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let asym = asymmetry(&matrix);
        if asym > 1e-12 * max_abs(&matrix).max(1.0) {
            return Err(Error::InvalidCertificate(format!(
                "supply-rate matrix is not symmetric (deviation {asym:e})"
            )));
        }
        Ok(SupplyRate { matrix, internal_dim })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Size of the internal-input block `X11`.
    pub fn internal_dim(&self) -> usize {
        self.internal_dim
    }

    /// Size of the internal-output block `X22`.
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows() - self.internal_dim
    }

    pub fn block(&self, row: usize, col: usize) -> DMatrix<f64> {
        let p = self.internal_dim;
        let q = self.output_dim();
        let (r0, nr) = if row == 0 { (0, p) } else { (p, q) };
        let (c0, nc) = if col == 0 { (0, p) } else { (p, q) };
        self.matrix.view((r0, c0), (nr, nc)).into_owned()
    }

    /// `[dw; dy]ᵀ X [dw; dy]`.
    pub fn value(&self, dw: &[f64], dy: &[f64]) -> f64 {
        let z: Vec<f64> = dw.iter().chain(dy).copied().collect();
        quad_form(&self.matrix, &z)
    }
}

/// How the slope of a linear γ was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaDerivation {
    pub gamma: ClassKFn,
    pub slope: f64,
    /// `2 · max row-abs-sum(Q) · n · D`.
    pub formula_slope: f64,
    /// `max ‖Q v‖₁` over `v = 2x − x' − x''` in the box.
    pub vertex_slope: f64,
    /// Largest `(G(x,x') − G(x,x'')) / ‖x' − x''‖∞` seen in the samples.
    pub worst_sampled_ratio: f64,
    pub samples: usize,
}

/// Linear `γ` with `G(x,x') − G(x,x'') ≤ γ(‖x' − x''‖∞)` on a bounded box.
///
/// `G(x,x') − G(x,x'') = (x'' − x')ᵀ Q (2x − x' − x'')`, so any bound on
/// `‖Q v‖₁` over the difference box is a valid slope. The smaller of the
/// closed-form bound and the exact vertex maximum is used; sampling only
/// cross-checks it.
pub fn derive_gamma(q: &QuadraticForm, domain: &BoxSet, samples: usize, seed: u64) -> Result<GammaDerivation> {
    let n = q.dim();
    if domain.dim() != n {
        return Err(Error::Dimension(format!(
            "γ box has {} dims, quadratic form has {n}",
            domain.dim()
        )));
    }
    let d = domain.diameter();
    if !d.is_finite() {
        return Err(Error::Domain("γ needs a bounded state box".into()));
    }
    let m = q.matrix();
    let row_sum = (0..n)
        .map(|r| (0..n).map(|c| m[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let formula_slope = 2.0 * row_sum * n as f64 * d;

    let half: Vec<f64> = (0..n).map(|a| 2.0 * domain.width(a)).collect();
    let vertex_slope = if n <= 16 {
        (0..1usize << n)
            .map(|mask| {
                let v: Vec<f64> = (0..n)
                    .map(|a| if mask >> a & 1 == 1 { half[a] } else { -half[a] })
                    .collect();
                mat_vec(m, &v).iter().map(|x| x.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    } else {
        (0..n)
            .map(|c| half[c] * (0..n).map(|r| m[(r, c)].abs()).sum::<f64>())
            .sum()
    };

    let worst_sampled_ratio = par_chunks(samples, seed, |rng, range| {
        let mut worst = 0.0_f64;
        for _ in range {
            let x = domain.sample(rng);
            let x1 = domain.sample(rng);
            let x2 = domain.sample(rng);
            let r = inf_dist(&x1, &x2);
            if r > 0.0 {
                worst = worst.max((q.value(&x, &x1) - q.value(&x, &x2)) / r);
            }
        }
        worst
    })
    .into_iter()
    .fold(0.0, f64::max);

    let slope = formula_slope.min(vertex_slope);
    if slope < worst_sampled_ratio * (1.0 - 1e-12) {
        return Err(Error::Numerical(format!(
            "γ slope {slope} below sampled ratio {worst_sampled_ratio}"
        )));
    }
    let slope = slope.max(GAMMA_FLOOR_SLOPE);
    Ok(GammaDerivation {
        gamma: ClassKFn::Linear(slope),
        slope,
        formula_slope,
        vertex_slope,
        worst_sampled_ratio,
        samples,
    })
}

/// Incremental-passivity data for one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivityCertificate {
    pub storage: QuadraticForm,
    pub feedback: AffineFeedback,
    pub kappa_hat: ClassKFn,
    pub alpha_lower: ClassKFn,
    pub supply: SupplyRate,
    pub gamma: GammaDerivation,
    /// Box on which `gamma` is valid.
    pub gamma_box: BoxSet,
}

impl PassivityCertificate {
    /// Assembles a hand-built certificate and derives γ on `gamma_box`.
    pub fn new(
        storage: QuadraticForm,
        feedback: AffineFeedback,
        kappa_hat: ClassKFn,
        alpha_lower: ClassKFn,
        supply: SupplyRate,
        gamma_box: BoxSet,
    ) -> Result<Self> {
        for (label, f) in [("κ̂", &kappa_hat), ("α", &alpha_lower)] {
            f.validate()?;
            if !f.is_k_infinity() {
                return Err(Error::InvalidCertificate(format!("{label} must be K∞, got {f}")));
            }
        }
        if feedback.gain.ncols() != storage.dim() {
            return Err(Error::Dimension("feedback and storage dimensions differ".into()));
        }
        let gamma = derive_gamma(&storage, &gamma_box, GAMMA_SAMPLES, 0)?;
        Ok(PassivityCertificate {
            storage,
            feedback,
            kappa_hat,
            alpha_lower,
            supply,
            gamma,
            gamma_box,
        })
    }

    /// Same certificate with γ re-derived on a different box.
    pub fn with_gamma_box(&self, gamma_box: BoxSet, samples: usize, seed: u64) -> Result<Self> {
        Ok(PassivityCertificate {
            gamma: derive_gamma(&self.storage, &gamma_box, samples, seed)?,
            gamma_box,
            ..self.clone()
        })
    }

    pub fn state_dim(&self) -> usize {
        self.storage.dim()
    }
}

/// Closed-form certificate for `x⁺ = x + w + u` with identity internal
/// output: `G = ‖x − x'‖²₂`, `H(x) = −λx`, `κ̂(r) = λr`, `α(r) = r²` and
/// supply rate `[[I, (1−λ)I], [(1−λ)I, 0]]`.
pub fn passivity_for_linear(sub: &SubsystemModel, feedback_gain: f64) -> Result<PassivityCertificate> {
    if !sub.is_integrator() {
        return Err(Error::UnsupportedDynamics(format!(
            "subsystem {}: closed-form passivity covers x⁺ = x + w + u with identity internal output only",
            sub.name()
        )));
    }
    check_feedback_gain(feedback_gain)?;
    let n = sub.state_dim();
    PassivityCertificate::new(
        QuadraticForm::identity(n),
        AffineFeedback::proportional(n, feedback_gain),
        ClassKFn::Linear(feedback_gain),
        ClassKFn::Power {
            coeff: 1.0,
            exponent: 2.0,
        },
        SupplyRate::new(integrator_supply_rate(n, feedback_gain), n)?,
        sub.state_box()?.clone(),
    )
}

/// Which inequality a sampled tuple violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassivityInequality {
    LowerBound,
    Decrease,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassivityViolation {
    pub inequality: PassivityInequality,
    pub margin: f64,
    pub x: Vec<f64>,
    pub x_other: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub w_other: Vec<f64>,
}

/// Outcome of [`verify_passivity`]. Margins are `rhs − lhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivityReport {
    pub samples: usize,
    pub worst_lower_margin: f64,
    pub worst_decrease_margin: f64,
    pub violation_count: usize,
    pub violations: Vec<PassivityViolation>,
}

impl PassivityReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

fn tolerance(terms: &[f64]) -> f64 {
    CHECK_SLACK * terms.iter().fold(1.0_f64, |m, t| m.max(t.abs()))
}

/// Samples `(x, x', u, w, w')` with `x, x'` in `domain` (defaults to the
/// state box) and checks both passivity inequalities.
pub fn verify_passivity(
    sub: &SubsystemModel,
    cert: &PassivityCertificate,
    domain: Option<&BoxSet>,
    samples: usize,
    seed: u64,
) -> Result<PassivityReport> {
    let n = sub.state_dim();
    if cert.state_dim() != n
        || cert.feedback.gain.nrows() != sub.input_dim()
        || cert.supply.internal_dim() != sub.internal_dim()
        || cert.supply.output_dim() != sub.internal_output_dim()
    {
        return Err(Error::Dimension(format!(
            "certificate dimensions do not match subsystem {}",
            sub.name()
        )));
    }
    let domain = match domain {
        Some(b) => b,
        None => sub.state_box()?,
    };
    let parts = par_chunks(samples, seed, |rng, range| {
        let mut worst_lower = f64::INFINITY;
        let mut worst_decrease = f64::INFINITY;
        let mut count = 0usize;
        let mut list = WorstList::new(REPORT_CAP);
        for _ in range {
            let x = domain.sample(rng);
            // every eighth tuple reuses x so matched arguments are exercised
            let x2 = if rng.gen_ratio(1, 8) {
                x.clone()
            } else {
                domain.sample(rng)
            };
            let u = sub.input_box().sample(rng);
            let w = sub.internal_box().sample(rng);
            let w2 = if rng.gen_ratio(1, 8) {
                w.clone()
            } else {
                sub.internal_box().sample(rng)
            };

            let g = cert.storage.value(&x, &x2);
            let lower = cert.alpha_lower.eval(inf_dist(&x, &x2));
            let m1 = g - lower;
            worst_lower = worst_lower.min(m1);

            let xn = sub.step_unchecked(&x, &cert.feedback.refine(&x, &u), &w);
            let xn2 = sub.step_unchecked(&x2, &cert.feedback.refine(&x2, &u), &w2);
            let lhs = cert.storage.value(&xn, &xn2) - g;
            let dw: Vec<f64> = w.iter().zip(&w2).map(|(a, b)| a - b).collect();
            let y = sub.h2().eval(&x);
            let y2 = sub.h2().eval(&x2);
            let dy: Vec<f64> = y.iter().zip(&y2).map(|(a, b)| a - b).collect();
            let kappa = cert.kappa_hat.eval(g);
            let supply = cert.supply.value(&dw, &dy);
            let rhs = -kappa + supply;
            let m2 = rhs - lhs;
            worst_decrease = worst_decrease.min(m2);

            for (ineq, margin, tol) in [
                (PassivityInequality::LowerBound, m1, tolerance(&[g, lower])),
                (PassivityInequality::Decrease, m2, tolerance(&[lhs, g, kappa, supply])),
            ] {
                if margin < -tol {
                    count += 1;
                    list.push(
                        margin,
                        PassivityViolation {
                            inequality: ineq,
                            margin,
                            x: x.clone(),
                            x_other: x2.clone(),
                            u: u.clone(),
                            w: w.clone(),
                            w_other: w2.clone(),
                        },
                    );
                }
            }
        }
        (worst_lower, worst_decrease, count, list)
    });
    let mut report = PassivityReport {
        samples,
        worst_lower_margin: f64::INFINITY,
        worst_decrease_margin: f64::INFINITY,
        violation_count: 0,
        violations: Vec::new(),
    };
    let mut list = WorstList::new(REPORT_CAP);
    for (l, d, c, part) in parts {
        report.worst_lower_margin = report.worst_lower_margin.min(l);
        report.worst_decrease_margin = report.worst_decrease_margin.min(d);
        report.violation_count += c;
        list.merge(part);
    }
    report.violations = list.into_sorted().into_iter().map(|(_, v)| v).collect();
    Ok(report)
}

/// Storage certificate relating an abstraction to its concrete subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageCertificate {
    pub storage: QuadraticForm,
    pub alpha: ClassKFn,
    pub sigma: ClassKFn,
    pub rho_ext: ClassKFn,
    pub supply: SupplyRate,
    pub w: DMatrix<f64>,
    pub w_hat: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub epsilon: f64,
}

impl StorageCertificate {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        storage: QuadraticForm,
        alpha: ClassKFn,
        sigma: ClassKFn,
        rho_ext: ClassKFn,
        supply: SupplyRate,
        w: DMatrix<f64>,
        w_hat: DMatrix<f64>,
        h: DMatrix<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidCertificate(format!("ε must be ≥ 0, got {epsilon}")));
        }
        for (label, f) in [("α", &alpha), ("σ", &sigma)] {
            f.validate()?;
            if !f.is_k_infinity() {
                return Err(Error::InvalidCertificate(format!("{label} must be K∞, got {f}")));
            }
        }
        rho_ext.validate()?;
        if !rho_ext.is_zero() && !rho_ext.is_k_infinity() {
            return Err(Error::InvalidCertificate(format!(
                "ρ_ext must be K∞ or zero, got {rho_ext}"
            )));
        }
        let (p, q) = (supply.internal_dim(), supply.output_dim());
        if w.nrows() != p || w_hat.nrows() != p || h.nrows() != q {
            return Err(Error::Dimension(format!(
                "W ({}), Ŵ ({}) must have {p} rows and H ({}) {q} rows",
                w.nrows(),
                w_hat.nrows(),
                h.nrows()
            )));
        }
        Ok(StorageCertificate {
            storage,
            alpha,
            sigma,
            rho_ext,
            supply,
            w,
            w_hat,
            h,
            epsilon,
        })
    }

    /// The certificate induced by a passivity certificate and quantization
    /// pitch `η`: `α = α_`, `σ = κ̂`, `ρ_ext = 0`, `W = Ŵ = H = I`,
    /// `ε = γ(η/2)`.
    pub fn from_passivity(pcert: &PassivityCertificate, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::Quantization(format!("η must be > 0, got {eta}")));
        }
        let (p, q) = (pcert.supply.internal_dim(), pcert.supply.output_dim());
        StorageCertificate::new(
            pcert.storage.clone(),
            pcert.alpha_lower.clone(),
            pcert.kappa_hat.clone(),
            ClassKFn::Zero,
            pcert.supply.clone(),
            DMatrix::identity(p, p),
            DMatrix::identity(p, p),
            DMatrix::identity(q, q),
            pcert.gamma.gamma.eval(eta / 2.0),
        )
    }

    /// Right-hand side of the decrease inequality without the `S(x,x̂)` term.
    pub fn decrease_allowance(
        &self,
        s: f64,
        u_hat_norm: f64,
        w: &[f64],
        w_hat: &[f64],
        y2: &[f64],
        y2_hat: &[f64],
    ) -> f64 {
        let ww = mat_vec(&self.w, w);
        let wh = mat_vec(&self.w_hat, w_hat);
        let hy = mat_vec(&self.h, y2_hat);
        let dw: Vec<f64> = ww.iter().zip(&wh).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y2.iter().zip(&hy).map(|(a, b)| a - b).collect();
        -self.sigma.eval(s) + self.rho_ext.eval(u_hat_norm) + self.supply.value(&dw, &dy) + self.epsilon
    }
}

/// One weighted quadratic term of a network storage value.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageBlock {
    pub offset: usize,
    pub weight: f64,
    pub form: QuadraticForm,
}

/// Network-level simulation certificate `V = Σ μ_i S_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationCertificate {
    pub blocks: Vec<StorageBlock>,
    pub alpha: ClassKFn,
    pub sigma: ClassKFn,
    pub rho_ext: ClassKFn,
    pub epsilon: f64,
}

impl SimulationCertificate {
    pub fn value(&self, x: &[f64], x_hat: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let r = b.offset..b.offset + b.form.dim();
                b.weight * b.form.value(&x[r.clone()], &x_hat[r])
            })
            .sum()
    }

    /// `‖y − ŷ‖∞` compared against `α⁻¹(V)`: returns `V − α(‖y − ŷ‖∞)`.
    pub fn lower_bound_margin(&self, x: &[f64], x_hat: &[f64], y: &[f64], y_hat: &[f64]) -> f64 {
        self.value(x, x_hat) - self.alpha.eval(inf_dist(y, y_hat))
    }
}

/// Which storage inequality a sampled pair violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageInequality {
    OutputBound,
    Decrease,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageViolation {
    pub inequality: StorageInequality,
    pub margin: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub state: usize,
    pub input: usize,
    pub internal: usize,
}

/// Outcome of [`check_storage_pointwise`]. Margins are `rhs − lhs`; the
/// decrease margin of a triple is that of its best successor.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageReport {
    pub concrete_samples: usize,
    pub abstract_states: usize,
    pub checks: usize,
    pub worst_output_margin: f64,
    pub worst_decrease_margin: f64,
    pub violation_count: usize,
    pub blocking_count: usize,
    pub violations: Vec<StorageViolation>,
}

impl StorageReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0 && self.blocking_count == 0
    }
}

/// Samples concrete states `x` (one internal input `w` each) and checks both
/// storage inequalities against every abstract state, abstract input and
/// abstract internal input.
pub fn check_storage_pointwise(
    sub: &SubsystemModel,
    abs: &FiniteAbstraction,
    pcert: &PassivityCertificate,
    scert: &StorageCertificate,
    samples: usize,
    seed: u64,
) -> Result<StorageReport> {
    if abs.state_grid().dim() != sub.state_dim() || scert.storage.dim() != sub.state_dim() {
        return Err(Error::Dimension(format!(
            "abstraction or certificate does not match subsystem {}",
            sub.name()
        )));
    }
    let state_box = sub.state_box()?;
    let states: Vec<Vec<f64>> = (0..abs.num_states()).map(|s| abs.state_point(s)).collect();
    let y2_hat: Vec<Vec<f64>> = (0..abs.num_states()).map(|s| abs.h2_value(s)).collect();
    let y1_hat: Vec<Vec<f64>> = states.iter().map(|x| sub.h1().eval(x)).collect();
    let inputs: Vec<Vec<f64>> = (0..abs.num_inputs()).map(|u| abs.input_point(u)).collect();
    let parts = par_chunks(samples, seed, |rng, range| {
        let mut worst_out = f64::INFINITY;
        let mut worst_dec = f64::INFINITY;
        let (mut count, mut blocking, mut checks) = (0usize, 0usize, 0usize);
        let mut list = WorstList::new(REPORT_CAP);
        for _ in range {
            let x = state_box.sample(rng);
            let w = sub.internal_box().sample(rng);
            let y1 = sub.h1().eval(&x);
            let y2 = sub.h2().eval(&x);
            let steps: Vec<Vec<f64>> = inputs
                .iter()
                .map(|u| sub.step_unchecked(&x, &pcert.feedback.refine(&x, u), &w))
                .collect();
            for (s, xh) in states.iter().enumerate() {
                let v = scert.storage.value(&x, xh);
                let a = scert.alpha.eval(inf_dist(&y1, &y1_hat[s]));
                let m = v - a;
                worst_out = worst_out.min(m);
                let mut report = |ineq, margin: f64, tol: f64, input, internal, list: &mut WorstList<_>| {
                    if margin < -tol {
                        count += 1;
                        list.push(
                            margin,
                            StorageViolation {
                                inequality: ineq,
                                margin,
                                x: x.clone(),
                                w: w.clone(),
                                state: s,
                                input,
                                internal,
                            },
                        );
                    }
                };
                report(StorageInequality::OutputBound, m, tolerance(&[v, a]), 0, 0, &mut list);
                for (ui, u) in inputs.iter().enumerate() {
                    let un = inf_norm(u);
                    for (wi, wh) in abs.internal_inputs().iter().enumerate() {
                        checks += 1;
                        let succ = abs.successors(s, ui, wi);
                        if succ.is_empty() {
                            blocking += 1;
                            continue;
                        }
                        let allowance = scert.decrease_allowance(v, un, &w, wh, &y2, &y2_hat[s]);
                        let mut best = f64::NEG_INFINITY;
                        let mut scale = allowance.abs().max(v);
                        for &t in succ {
                            let next = scert.storage.value(&steps[ui], &states[t as usize]);
                            scale = scale.max(next);
                            best = best.max(allowance - (next - v));
                        }
                        worst_dec = worst_dec.min(best);
                        report(
                            StorageInequality::Decrease,
                            best,
                            tolerance(&[scale]),
                            ui,
                            wi,
                            &mut list,
                        );
                    }
                }
            }
        }
        (worst_out, worst_dec, count, blocking, checks, list)
    });
    let mut report = StorageReport {
        concrete_samples: samples,
        abstract_states: abs.num_states(),
        checks: 0,
        worst_output_margin: f64::INFINITY,
        worst_decrease_margin: f64::INFINITY,
        violation_count: 0,
        blocking_count: 0,
        violations: Vec::new(),
    };
    let mut list = WorstList::new(REPORT_CAP);
    for (o, d, c, b, k, part) in parts {
        report.worst_output_margin = report.worst_output_margin.min(o);
        report.worst_decrease_margin = report.worst_decrease_margin.min(d);
        report.violation_count += c;
        report.blocking_count += b;
        report.checks += k;
        list.merge(part);
    }
    report.violations = list.into_sorted().into_iter().map(|(_, v)| v).collect();
    Ok(report)
}
