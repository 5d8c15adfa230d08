//! Network-level certificates from subsystem storage certificates.
//!
//! Three conditions are checked before composing:
//! the dissipativity LMI `[WM; I]ᵀ X [WM; I] ⪯ 0`, the coupling match
//! `W M H = Ŵ M̂`, and inclusion of the abstract coupling image
//! `M̂ ∏ Ŷ2_i` in `∏ Ŵ_i`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::abstraction::{block_image, FiniteAbstraction, DEFAULT_DEDUP_TOL, DEFAULT_SET_CAP};
use crate::certificate::{SimulationCertificate, StorageBlock, StorageCertificate};
use crate::error::{Error, Result};
use crate::kfn::{resample_pwl, ClassKFn, Resample};
use crate::linalg::{asymmetry, block_diag, inf_dist, max_abs, symmetric_eigen, symmetrize};

/// Default tolerance on the largest eigenvalue of the LMI test matrix.
pub const LMI_TOL: f64 = 1e-9;

/// Relative tolerance of the coupling match.
pub const COUPLING_TOL: f64 = 1e-12;

/// Membership tolerance of the inclusion check.
pub const INCLUSION_TOL: f64 = 1e-9;

/// Test matrices whose asymmetry exceeds this are rejected outright.
const ASYMMETRY_LIMIT: f64 = 1e-12;

/// Everything needed to compose a network certificate.
#[derive(Debug, Clone)]
pub struct CompositionProblem<'a> {
    pub certs: Vec<StorageCertificate>,
    pub weights: Vec<f64>,
    pub coupling: DMatrix<f64>,
    pub abstract_coupling: DMatrix<f64>,
    pub abstractions: &'a [FiniteAbstraction],
}

/// Block matrices of the composed system.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAssembly {
    pub w: DMatrix<f64>,
    pub w_hat: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Weighted supply rates with all internal-input bands first and all
    /// internal-output bands second.
    pub x_interleaved: DMatrix<f64>,
    /// `blockdiag(μ_1 X_1, …, μ_N X_N)` in subsystem order.
    pub x_block_diag: DMatrix<f64>,
    /// `x_interleaved[r][c] = x_block_diag[perm[r]][perm[c]]`.
    pub permutation: Vec<usize>,
    /// Total internal-input dimension.
    pub p: usize,
    /// Total internal-output dimension.
    pub q: usize,
}

/// Builds the block matrices from per-subsystem certificates and weights.
pub fn assemble(certs: &[StorageCertificate], weights: &[f64]) -> Result<BlockAssembly> {
    if certs.is_empty() {
        return Err(Error::Configuration("no subsystem certificates to compose".into()));
    }
    if weights.len() != certs.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} subsystems",
            weights.len(),
            certs.len()
        )));
    }
    if let Some(i) = weights.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::Configuration(format!(
            "weight of subsystem {i} must be finite and ≥ 0, got {}",
            weights[i]
        )));
    }
    let dims: Vec<(usize, usize)> = certs
        .iter()
        .map(|c| (c.supply.internal_dim(), c.supply.output_dim()))
        .collect();
    for (i, c) in certs.iter().enumerate() {
        let (pi, qi) = dims[i];
        if c.w.ncols() != pi || c.w_hat.ncols() != pi || c.h.ncols() != qi || c.h.nrows() != qi {
            return Err(Error::Dimension(format!(
                "subsystem {i}: W, Ŵ, H do not match its supply rate"
            )));
        }
    }
    let p: usize = dims.iter().map(|d| d.0).sum();
    let q: usize = dims.iter().map(|d| d.1).sum();

    let weighted: Vec<DMatrix<f64>> = certs.iter().zip(weights).map(|(c, m)| c.supply.matrix() * *m).collect();
    let x_block_diag = block_diag(&weighted);

    let mut permutation = Vec::with_capacity(p + q);
    let mut start = 0;
    let mut y_part = Vec::with_capacity(q);
    for &(pi, qi) in &dims {
        permutation.extend(start..start + pi);
        y_part.extend(start + pi..start + pi + qi);
        start += pi + qi;
    }
    permutation.extend(y_part);
    let x_interleaved = DMatrix::from_fn(p + q, p + q, |r, c| x_block_diag[(permutation[r], permutation[c])]);

    Ok(BlockAssembly {
        w: block_diag(&certs.iter().map(|c| c.w.clone()).collect::<Vec<_>>()),
        w_hat: block_diag(&certs.iter().map(|c| c.w_hat.clone()).collect::<Vec<_>>()),
        h: block_diag(&certs.iter().map(|c| c.h.clone()).collect::<Vec<_>>()),
        x_interleaved,
        x_block_diag,
        permutation,
        p,
        q,
    })
}

/// Outcome of [`check_dissipativity_lmi`].
#[derive(Debug, Clone, PartialEq)]
pub struct LmiReport {
    pub max_eigenvalue: f64,
    pub eigenvalues: Vec<f64>,
    pub asymmetry: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `[WM; I_q]ᵀ X [WM; I_q] ⪯ 0` up to `tol` on the largest eigenvalue.
pub fn check_dissipativity_lmi(assembly: &BlockAssembly, m: &DMatrix<f64>, tol: f64) -> Result<LmiReport> {
    if m.shape() != (assembly.p, assembly.q) {
        return Err(Error::Dimension(format!(
            "coupling is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            assembly.p,
            assembly.q
        )));
    }
    let wm = &assembly.w * m;
    let mut z = DMatrix::zeros(assembly.p + assembly.q, assembly.q);
    z.view_mut((0, 0), (assembly.p, assembly.q)).copy_from(&wm);
    z.view_mut((assembly.p, 0), (assembly.q, assembly.q))
        .copy_from(&DMatrix::identity(assembly.q, assembly.q));
    let t = z.transpose() * &assembly.x_interleaved * &z;
    let asym = asymmetry(&t);
    if asym > ASYMMETRY_LIMIT * max_abs(&t).max(1.0) {
        return Err(Error::Numerical(format!(
            "dissipativity test matrix is asymmetric by {asym:e}; supply rates must be symmetric"
        )));
    }
    let eig = symmetric_eigen(&symmetrize(&t))?;
    let max_eigenvalue = eig.max();
    Ok(LmiReport {
        max_eigenvalue,
        eigenvalues: eig.values,
        asymmetry: asym,
        tolerance: tol,
        passed: max_eigenvalue <= tol,
    })
}

/// Outcome of [`check_coupling_match`].
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub deviation: f64,
    pub scale: f64,
    pub passed: bool,
}

/// Entrywise comparison of `W M H` and `Ŵ M̂`.
pub fn check_coupling_match(
    assembly: &BlockAssembly,
    m: &DMatrix<f64>,
    m_hat: &DMatrix<f64>,
) -> Result<CouplingReport> {
    let want = (assembly.p, assembly.q);
    if m.shape() != want || m_hat.shape() != want {
        return Err(Error::Dimension(format!(
            "coupling matrices are {:?} and {:?}, expected {want:?}",
            m.shape(),
            m_hat.shape()
        )));
    }
    let lhs = &assembly.w * m * &assembly.h;
    let rhs = &assembly.w_hat * m_hat;
    let deviation = max_abs(&(&lhs - &rhs));
    let scale = max_abs(&lhs).max(max_abs(&rhs)).max(1.0);
    Ok(CouplingReport {
        deviation,
        scale,
        passed: deviation <= COUPLING_TOL * scale,
    })
}

/// Outcome of [`check_internal_inclusion`].
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionReport {
    pub points_checked: usize,
    pub uncovered: usize,
    /// Subsystem, image point and its distance to the internal-input set.
    pub worst: Option<(usize, Vec<f64>, f64)>,
    pub passed: bool,
}

fn lex_sorted(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts
}

/// Distance from `y` to the nearest member of `set` (sorted by first
/// coordinate), looking only at members within `tol` in that coordinate.
fn near_member(set: &[Vec<f64>], y: &[f64], tol: f64) -> Option<f64> {
    if y.is_empty() {
        return set.first().map(|_| 0.0);
    }
    let start = set.partition_point(|p| p[0] < y[0] - tol);
    set[start..]
        .iter()
        .take_while(|p| p[0] <= y[0] + tol)
        .map(|p| inf_dist(p, y))
        .filter(|d| *d <= tol)
        .reduce(f64::min)
}

fn nearest_distance(set: &[Vec<f64>], y: &[f64]) -> f64 {
    set.iter().map(|p| inf_dist(p, y)).fold(f64::INFINITY, f64::min)
}

/// Checks that every point of the abstract coupling image lies in the
/// corresponding abstract internal-input set. Outputs range over the
/// original (unextended) grids.
pub fn check_internal_inclusion(
    m_hat: &DMatrix<f64>,
    abstractions: &[FiniteAbstraction],
    tol: f64,
) -> Result<InclusionReport> {
    let outputs: Vec<Vec<Vec<f64>>> = abstractions.iter().map(|a| a.h2_original_image()).collect();
    let cols: usize = outputs.iter().map(|o| o[0].len()).sum();
    let rows: usize = abstractions.iter().map(|a| a.internal_inputs()[0].len()).sum();
    if m_hat.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "abstract coupling is {}x{}, expected {rows}x{cols}",
            m_hat.nrows(),
            m_hat.ncols()
        )));
    }
    let mut offsets = Vec::with_capacity(abstractions.len());
    let mut start = 0;
    for a in abstractions {
        let d = a.internal_inputs()[0].len();
        offsets.push(start..start + d);
        start += d;
    }
    let per_block: Vec<Result<InclusionReport>> = abstractions
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let image = block_image(m_hat, offsets[i].clone(), &outputs, DEFAULT_DEDUP_TOL, DEFAULT_SET_CAP)?;
            let members = lex_sorted(a.internal_inputs().to_vec());
            let mut report = InclusionReport {
                points_checked: image.len(),
                uncovered: 0,
                worst: None,
                passed: true,
            };
            for y in image {
                if near_member(&members, &y, tol).is_none() {
                    report.uncovered += 1;
                    let d = nearest_distance(&members, &y);
                    if report.worst.as_ref().is_none_or(|w| d > w.2) {
                        report.worst = Some((i, y, d));
                    }
                }
            }
            report.passed = report.uncovered == 0;
            Ok(report)
        })
        .collect();
    let mut total = InclusionReport {
        points_checked: 0,
        uncovered: 0,
        worst: None,
        passed: true,
    };
    for r in per_block {
        let r = r?;
        total.points_checked += r.points_checked;
        total.uncovered += r.uncovered;
        if let Some(w) = r.worst {
            if total.worst.as_ref().is_none_or(|t| w.2 > t.2) {
                total.worst = Some(w);
            }
        }
    }
    total.passed = total.uncovered == 0;
    Ok(total)
}

/// All three condition reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReports {
    pub lmi: LmiReport,
    pub coupling: CouplingReport,
    pub inclusion: InclusionReport,
}

impl ConditionReports {
    pub fn passed(&self) -> bool {
        self.lmi.passed && self.coupling.passed && self.inclusion.passed
    }
}

pub fn check_conditions(problem: &CompositionProblem<'_>, assembly: &BlockAssembly) -> Result<ConditionReports> {
    if problem.abstractions.len() != problem.certs.len() {
        return Err(Error::Dimension(format!(
            "{} abstractions for {} certificates",
            problem.abstractions.len(),
            problem.certs.len()
        )));
    }
    Ok(ConditionReports {
        lmi: check_dissipativity_lmi(assembly, &problem.coupling, LMI_TOL)?,
        coupling: check_coupling_match(assembly, &problem.coupling, &problem.abstract_coupling)?,
        inclusion: check_internal_inclusion(&problem.abstract_coupling, problem.abstractions, INCLUSION_TOL)?,
    })
}

/// Knobs for the numeric fallbacks of [`compose_certificate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComposeOptions {
    /// Steps per simplex axis for the decay-rate fallback.
    pub simplex_resolution: usize,
    /// Largest number of weighted subsystems the simplex fallback accepts.
    pub max_simplex_dim: usize,
    pub resample: Resample,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            simplex_resolution: 1000,
            max_simplex_dim: 4,
            resample: Resample { range: 1e3, points: 64 },
        }
    }
}

/// Composed certificate and which of its functions are approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedCertificate {
    pub certificate: SimulationCertificate,
    pub sigma_exact: bool,
    pub rho_exact: bool,
    pub alpha_exact: bool,
}

/// `min { Σ μ_i σ_i(s_i) | Σ μ_i s_i = s, s_i ≥ 0 }` evaluated over a grid
/// of the simplex with `resolution` steps per axis. Zero-weight terms are
/// dropped.
pub fn simplex_min(sigmas: &[ClassKFn], weights: &[f64], s: f64, resolution: usize) -> f64 {
    let active: Vec<(&ClassKFn, f64)> = sigmas
        .iter()
        .zip(weights)
        .filter(|(_, m)| **m > 0.0)
        .map(|(f, m)| (f, *m))
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    let r = resolution.max(1);
    let mut best = f64::INFINITY;
    let mut parts = vec![0usize; active.len()];
    fn walk(k: usize, left: usize, parts: &mut [usize], active: &[(&ClassKFn, f64)], s: f64, r: usize, best: &mut f64) {
        if k + 1 == parts.len() {
            parts[k] = left;
            let v: f64 = active
                .iter()
                .zip(parts.iter())
                .map(|((f, m), &j)| m * f.eval(j as f64 / r as f64 * s / m))
                .sum();
            *best = best.min(v);
            return;
        }
        for j in 0..=left {
            parts[k] = j;
            walk(k + 1, left - j, parts, active, s, r, best);
        }
    }
    walk(0, r, &mut parts, &active, s, r, &mut best);
    best
}

fn compose_sigma(sigmas: &[ClassKFn], weights: &[f64], options: &ComposeOptions) -> Result<(ClassKFn, bool)> {
    let active: Vec<&ClassKFn> = sigmas
        .iter()
        .zip(weights)
        .filter(|(_, m)| **m > 0.0)
        .map(|(f, _)| f)
        .collect();
    if active.is_empty() {
        return Err(Error::Configuration("all weights are zero".into()));
    }
    if active.iter().all(|f| matches!(f, ClassKFn::Linear(_))) {
        let slope = active
            .iter()
            .map(|f| match f {
                ClassKFn::Linear(a) => *a,
                _ => unreachable!(),
            })
            .fold(f64::INFINITY, f64::min);
        return Ok((ClassKFn::Linear(slope), true));
    }
    if active.len() > options.max_simplex_dim {
        return Err(Error::Configuration(format!(
            "decay rates of {} weighted subsystems are not all linear; the simplex fallback handles at most {}",
            active.len(),
            options.max_simplex_dim
        )));
    }
    let f = resample_pwl(
        |s| simplex_min(sigmas, weights, s, options.simplex_resolution),
        &options.resample,
    )?;
    Ok((f.function, false))
}

fn weighted_sum(fns: &[ClassKFn], weights: &[f64], resample: &Resample) -> Result<(ClassKFn, bool)> {
    let active: Vec<(&ClassKFn, f64)> = fns
        .iter()
        .zip(weights)
        .filter(|(f, m)| **m > 0.0 && !f.is_zero())
        .map(|(f, m)| (f, *m))
        .collect();
    if active.is_empty() {
        return Ok((ClassKFn::Zero, true));
    }
    if active.iter().all(|(f, _)| matches!(f, ClassKFn::Linear(_))) {
        let slope = active
            .iter()
            .map(|(f, m)| match f {
                ClassKFn::Linear(a) => a * m,
                _ => unreachable!(),
            })
            .sum();
        return Ok((ClassKFn::Linear(slope), true));
    }
    let f = resample_pwl(|s| active.iter().map(|(f, m)| m * f.eval(s)).sum(), resample)?;
    Ok((f.function, false))
}

/// `α = ᾱ⁻¹` with `ᾱ(s) = max { Σ α_i⁻¹(s_i) | Σ μ_i s_i = s }`.
fn compose_alpha(alphas: &[ClassKFn], weights: &[f64], resample: &Resample) -> Result<(ClassKFn, bool)> {
    if let Some(i) = weights.iter().position(|m| *m == 0.0) {
        return Err(Error::Configuration(format!(
            "subsystem {i} has weight 0, so its output error is not bounded by the composed storage"
        )));
    }
    let powers: Option<Vec<(f64, f64)>> = alphas
        .iter()
        .map(|a| match a {
            ClassKFn::Power { coeff, exponent } => Some((*coeff, *exponent)),
            ClassKFn::Linear(c) => Some((*c, 1.0)),
            _ => None,
        })
        .collect();
    if let Some(powers) = powers {
        let p = powers[0].1;
        if powers.iter().all(|(_, e)| *e == p) {
            let q = 1.0 / p;
            // α_i⁻¹(s) = b_i s^q
            let b: Vec<f64> = powers.iter().map(|(a, _)| a.powf(-q)).collect();
            let alpha = if p == 1.0 {
                let c = powers
                    .iter()
                    .zip(weights)
                    .map(|((a, _), m)| a * m)
                    .fold(f64::INFINITY, f64::min);
                ClassKFn::Linear(c)
            } else {
                let k = if p > 1.0 {
                    // concave objective: interior optimum
                    b.iter()
                        .zip(weights)
                        .map(|(bi, m)| bi.powf(1.0 / (1.0 - q)) * m.powf(-q / (1.0 - q)))
                        .sum::<f64>()
                        .powf(1.0 - q)
                } else {
                    // convex objective: optimum at a vertex
                    b.iter().zip(weights).map(|(bi, m)| bi * m.powf(-q)).fold(0.0, f64::max)
                };
                ClassKFn::Power {
                    coeff: k.powf(-p),
                    exponent: p,
                }
            };
            return Ok((alpha, true));
        }
    }
    // mixed families: ᾱ(s) ≤ Σ α_i⁻¹(s/μ_i)
    let inverses = alphas.iter().map(ClassKFn::invert).collect::<Result<Vec<_>>>()?;
    let upper = resample_pwl(
        |s| inverses.iter().zip(weights).map(|(f, m)| f.eval(s / m)).sum(),
        resample,
    )?;
    Ok((upper.function.invert()?, false))
}

/// Composes the network certificate `V = Σ μ_i S_i`. Refuses unless every
/// condition in `reports` passed.
pub fn compose_certificate(
    problem: &CompositionProblem<'_>,
    reports: &ConditionReports,
    options: &ComposeOptions,
) -> Result<ComposedCertificate> {
    if !reports.lmi.passed {
        return Err(Error::ConditionFailed("dissipativity LMI"));
    }
    if !reports.coupling.passed {
        return Err(Error::ConditionFailed("coupling match"));
    }
    if !reports.inclusion.passed {
        return Err(Error::ConditionFailed("internal-input inclusion"));
    }
    let certs = &problem.certs;
    let weights = &problem.weights;
    if weights.len() != certs.len() {
        return Err(Error::Dimension("weights and certificates differ in length".into()));
    }
    let sigmas: Vec<ClassKFn> = certs.iter().map(|c| c.sigma.clone()).collect();
    let rhos: Vec<ClassKFn> = certs.iter().map(|c| c.rho_ext.clone()).collect();
    let alphas: Vec<ClassKFn> = certs.iter().map(|c| c.alpha.clone()).collect();
    let (sigma, sigma_exact) = compose_sigma(&sigmas, weights, options)?;
    let (rho_ext, rho_exact) = weighted_sum(&rhos, weights, &options.resample)?;
    let (alpha, alpha_exact) = compose_alpha(&alphas, weights, &options.resample)?;
    let epsilon = certs.iter().zip(weights).map(|(c, m)| m * c.epsilon).sum();

    let mut offset = 0;
    let blocks = certs
        .iter()
        .zip(weights)
        .map(|(c, m)| {
            let b = StorageBlock {
                offset,
                weight: *m,
                form: c.storage.clone(),
            };
            offset += c.storage.dim();
            b
        })
        .collect();
    Ok(ComposedCertificate {
        certificate: SimulationCertificate {
            blocks,
            alpha,
            sigma,
            rho_ext,
            epsilon,
        },
        sigma_exact,
        rho_exact,
        alpha_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{QuadraticForm, SupplyRate};
    use crate::linalg::from_rows;
    use approx::assert_abs_diff_eq;

    fn scalar_cert(lambda: f64, x12: f64) -> StorageCertificate {
        StorageCertificate::new(
            QuadraticForm::identity(1),
            ClassKFn::Power {
                coeff: 1.0,
                exponent: 2.0,
            },
            ClassKFn::Linear(lambda),
            ClassKFn::Zero,
            SupplyRate::new(from_rows(&[vec![1.0, x12], vec![x12, 0.0]]).unwrap(), 1).unwrap(),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            0.1,
        )
        .unwrap()
    }

    fn two_node_m() -> DMatrix<f64> {
        from_rows(&[vec![-0.375, 0.375], vec![0.375, -0.375]]).unwrap()
    }

    #[test]
    fn single_block_is_unchanged() {
        let c = scalar_cert(0.5, 0.5);
        let a = assemble(std::slice::from_ref(&c), &[1.0]).unwrap();
        assert_eq!(&a.x_interleaved, c.supply.matrix());
    }

    #[test]
    fn interleaving_orders_bands() {
        let c = scalar_cert(0.5, 0.5);
        let a = assemble(&[c.clone(), c], &[1.0, 1.0]).unwrap();
        assert_eq!(a.permutation, vec![0, 2, 1, 3]);
        let want = from_rows(&[
            vec![1.0, 0.0, 0.5, 0.0],
            vec![0.0, 1.0, 0.0, 0.5],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(a.x_interleaved, want);
    }

    #[test]
    fn zero_weight_blocks_vanish() {
        let c = scalar_cert(0.5, 0.5);
        let a = assemble(&[c.clone(), c], &[0.0, 1.0]).unwrap();
        assert_eq!(a.x_interleaved[(0, 0)], 0.0);
        assert_eq!(a.x_interleaved[(0, 2)], 0.0);
        assert_eq!(a.x_interleaved[(1, 1)], 1.0);
    }

    #[test]
    fn lmi_two_nodes() {
        let c = scalar_cert(0.5, 0.5);
        let a = assemble(&[c.clone(), c], &[1.0, 1.0]).unwrap();
        let r = check_dissipativity_lmi(&a, &two_node_m(), LMI_TOL).unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.eigenvalues[0], -0.1875, epsilon = 1e-12);
        assert_abs_diff_eq!(r.eigenvalues[1], 0.0, epsilon = 1e-12);

        let zero = check_dissipativity_lmi(&a, &DMatrix::zeros(2, 2), LMI_TOL).unwrap();
        assert!(zero.passed);
        assert_eq!(zero.max_eigenvalue, 0.0);
    }

    #[test]
    fn lmi_sign_flip_fails() {
        let c = scalar_cert(0.5, -0.5);
        let a = assemble(&[c.clone(), c], &[1.0, 1.0]).unwrap();
        let r = check_dissipativity_lmi(&a, &two_node_m(), LMI_TOL).unwrap();
        assert!(!r.passed);
        // (a−1)(a−1−1) at a = 0.25
        assert_abs_diff_eq!(r.max_eigenvalue, 0.75 * 1.75, epsilon = 1e-12);
    }

    #[test]
    fn coupling_match_and_perturbation() {
        let c = scalar_cert(0.5, 0.5);
        let a = assemble(&[c.clone(), c], &[1.0, 1.0]).unwrap();
        let m = two_node_m();
        assert!(check_coupling_match(&a, &m, &m).unwrap().passed);
        let mut bad = m.clone();
        bad[(0, 1)] += 1e-3;
        let r = check_coupling_match(&a, &m, &bad).unwrap();
        assert!(!r.passed);
        assert_abs_diff_eq!(r.deviation, 1e-3, epsilon = 1e-15);

        let mut z = a.clone();
        z.w = DMatrix::zeros(2, 2);
        z.w_hat = DMatrix::zeros(2, 2);
        assert!(check_coupling_match(&z, &m, &bad).unwrap().passed);
    }

    #[test]
    fn sigma_composition() {
        let sig: Vec<ClassKFn> = [0.3, 0.4, 0.5].iter().map(|l| ClassKFn::Linear(*l)).collect();
        let (s, exact) = compose_sigma(&sig, &[1.0; 3], &ComposeOptions::default()).unwrap();
        assert!(exact);
        assert_eq!(s, ClassKFn::Linear(0.3));
        for x in [0.01, 0.5, 2.0, 7.0] {
            assert_abs_diff_eq!(s.eval(x), simplex_min(&sig, &[1.0; 3], x, 200), epsilon = 1e-6);
        }
        // zero weight removes a term from the minimum
        let (s, _) = compose_sigma(&sig, &[0.0, 1.0, 1.0], &ComposeOptions::default()).unwrap();
        assert_eq!(s, ClassKFn::Linear(0.4));
    }

    #[test]
    fn sigma_fallback_tracks_brute_force() {
        let sig = vec![
            ClassKFn::Linear(0.5),
            ClassKFn::Power {
                coeff: 0.5,
                exponent: 2.0,
            },
        ];
        let opts = ComposeOptions {
            simplex_resolution: 200,
            resample: Resample { range: 4.0, points: 33 },
            ..ComposeOptions::default()
        };
        let (s, exact) = compose_sigma(&sig, &[1.0, 1.0], &opts).unwrap();
        assert!(!exact);
        for k in 0..33 {
            let x = 4.0 * k as f64 / 32.0;
            assert_abs_diff_eq!(s.eval(x), simplex_min(&sig, &[1.0, 1.0], x, 200), epsilon = 1e-9);
        }
    }

    #[test]
    fn alpha_composition_closed_forms() {
        let sq = ClassKFn::Power {
            coeff: 1.0,
            exponent: 2.0,
        };
        let r = Resample::over(10.0);
        let (a, exact) = compose_alpha(&[sq.clone(), sq.clone(), sq.clone()], &[1.0; 3], &r).unwrap();
        assert!(exact);
        match a {
            ClassKFn::Power { coeff, exponent } => {
                assert_abs_diff_eq!(coeff, 1.0 / 3.0, epsilon = 1e-12);
                assert_eq!(exponent, 2.0);
            }
            other => panic!("{other}"),
        }
        let (a, _) = compose_alpha(&[ClassKFn::Linear(2.0), ClassKFn::Linear(3.0)], &[1.0, 0.5], &r).unwrap();
        assert_eq!(a, ClassKFn::Linear(1.5));
        assert!(compose_alpha(&[sq.clone(), sq], &[1.0, 0.0], &r).is_err());
    }

    #[test]
    fn alpha_closed_form_matches_maximization() {
        // ᾱ(s) = max over the weighted simplex of Σ √(s_i/a_i)
        let alphas = [
            ClassKFn::Power {
                coeff: 1.0,
                exponent: 2.0,
            },
            ClassKFn::Power {
                coeff: 2.0,
                exponent: 2.0,
            },
        ];
        let w = [1.0, 0.5];
        let (a, _) = compose_alpha(&alphas, &w, &Resample::over(10.0)).unwrap();
        let s = 3.0;
        let mut best = 0.0_f64;
        for j in 0..=100_000 {
            let t = j as f64 / 100_000.0;
            let v = (t * s / w[0]).sqrt() + ((1.0 - t) * s / w[1] / 2.0).sqrt();
            best = best.max(v);
        }
        assert_abs_diff_eq!(a.eval(best), s, epsilon = 1e-6);
    }

    #[test]
    fn alpha_mixed_inverts_the_channel_sum() {
        let alphas = [
            ClassKFn::Power {
                coeff: 1.0,
                exponent: 2.0,
            },
            ClassKFn::Linear(1.0),
        ];
        let r = Resample {
            range: 10.0,
            points: 11,
        };
        let (a, exact) = compose_alpha(&alphas, &[1.0, 1.0], &r).unwrap();
        assert!(!exact);
        for k in 0..=10 {
            let s = k as f64;
            assert_abs_diff_eq!(a.eval(s.sqrt() + s), s, epsilon = 1e-9);
        }
    }

    #[test]
    fn rho_composition() {
        let (z, exact) = weighted_sum(&[ClassKFn::Zero, ClassKFn::Zero], &[1.0, 1.0], &Resample::over(1.0)).unwrap();
        assert!(exact);
        assert_eq!(z, ClassKFn::Zero);
        let (l, _) = weighted_sum(
            &[ClassKFn::Linear(1.0), ClassKFn::Linear(2.0)],
            &[1.0, 0.5],
            &Resample::over(1.0),
        )
        .unwrap();
        assert_eq!(l, ClassKFn::Linear(2.0));
    }
}
