//! Network specification files.
//!
//! A spec is a JSON object with the keys `subsystems`, `coupling`, optional
//! `weights` and optional `run`. Unknown keys are rejected.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;
use symabs::kfn::{ClassKFn, DEFAULT_DELTA};
use symabs::linalg::from_rows;
use symabs::system::BoxSet;
use symabs::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSpec {
    pub fn to_box(&self) -> Result<BoxSet> {
        BoxSet::new(self.lower.clone(), self.upper.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDynamicsSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsSpec {
    /// `x⁺ = x + w + u`.
    Integrator,
    Linear(LinearDynamicsSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PwlSpec {
    pub points: Vec<(f64, f64)>,
    pub tail_slope: f64,
}

/// Comparison function: `{"linear": a}`, `{"power": [a, p]}`,
/// `{"pwl": {"points": [[s, f], …], "tail_slope": t}}` or `"zero"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KFnSpec {
    Linear(f64),
    Power(f64, f64),
    Pwl(PwlSpec),
    Zero,
}

impl KFnSpec {
    pub fn to_kfn(&self) -> Result<ClassKFn> {
        match self {
            KFnSpec::Linear(a) => ClassKFn::linear(*a),
            KFnSpec::Power(a, p) => ClassKFn::power(*a, *p),
            KFnSpec::Pwl(p) => ClassKFn::pwl(p.points.clone(), p.tail_slope),
            KFnSpec::Zero => Ok(ClassKFn::Zero),
        }
    }
}

/// Hand-built incremental-passivity data for subsystems outside the
/// closed-form class.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassivitySpec {
    pub storage: Vec<Vec<f64>>,
    pub gain: Vec<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    pub kappa_hat: KFnSpec,
    pub alpha_lower: KFnSpec,
    pub supply: Vec<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dynamics: DynamicsSpec,
    pub state_box: BoxSpec,
    pub input_box: BoxSpec,
    #[serde(default)]
    pub internal_box: Option<BoxSpec>,
    pub eta: f64,
    pub mu1: f64,
    pub lambda_fb: f64,
    #[serde(default)]
    pub passivity: Option<PassivitySpec>,
    /// Number of identical copies of this entry.
    #[serde(default = "one")]
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EdgesSpec {
    /// `"path"` connects consecutive subsystems.
    Named(String),
    List(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplacianCouplingSpec {
    pub edges: EdgesSpec,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixCouplingSpec {
    pub m: Vec<Vec<f64>>,
    /// Defaults to `m`.
    #[serde(default)]
    pub m_hat: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSpec {
    /// `M = M̂ = e^{−Lτ} − I` for the graph Laplacian `L`.
    Laplacian(LaplacianCouplingSpec),
    Matrix(MatrixCouplingSpec),
}

/// Box on which the quantization gain `γ` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaDomain {
    /// The subsystem's state box. Smaller `γ`, but abstract states outside
    /// the box are not covered; the pointwise storage check decides whether
    /// the resulting `ε` still holds.
    StateBox,
    /// Hull of the state box, the extended abstract grid padded by `η/2` and
    /// the closed-loop reach; covers every state the storage check visits.
    Certified,
}

fn default_psi() -> KFnSpec {
    KFnSpec::Linear(0.5)
}

/// Run options; every field has a default that is echoed in the report.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub seed: u64,
    pub passivity_samples: usize,
    pub storage_samples: usize,
    pub traces: usize,
    pub horizon: usize,
    /// Bound `v` on `‖û‖∞`; defaults to the largest abstract input norm.
    pub input_bound: Option<f64>,
    #[serde(default = "default_psi")]
    pub psi: KFnSpec,
    pub delta: f64,
    pub gamma_domain: GammaDomain,
    pub resample_range: f64,
    pub lmi_tolerance: f64,
    /// Trace CSVs written to the output directory.
    pub export_traces: usize,
    pub relation_check: bool,
    /// Extra concrete samples inside every grid interval per axis.
    pub relation_interior_points: usize,
    /// Additional uniformly drawn concrete samples.
    pub relation_random_samples: usize,
    /// The relation check is skipped above this many (sample, state, input)
    /// combinations.
    pub relation_max_checks: usize,
    pub max_triples: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            passivity_samples: 10_000,
            storage_samples: 1_000,
            traces: 100,
            horizon: 100,
            input_bound: None,
            psi: default_psi(),
            delta: DEFAULT_DELTA,
            gamma_domain: GammaDomain::Certified,
            resample_range: 1e3,
            lmi_tolerance: 1e-9,
            export_traces: 5,
            relation_check: true,
            relation_interior_points: 1,
            relation_random_samples: 0,
            relation_max_checks: 20_000_000,
            max_triples: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub subsystems: Vec<SubsystemSpec>,
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub run: RunOptions,
}

impl NetworkSpec {
    /// Subsystem entries with `repeat` expanded.
    pub fn expanded(&self) -> Vec<SubsystemSpec> {
        let mut out = Vec::new();
        for s in &self.subsystems {
            for _ in 0..s.repeat {
                let mut c = s.clone();
                c.repeat = 1;
                out.push(c);
            }
        }
        out
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.expanded().len()])
    }

    fn validate(&self) -> Result<()> {
        let subs = self.expanded();
        if subs.is_empty() {
            return Err(Error::Configuration("`subsystems` is empty".into()));
        }
        for (i, s) in subs.iter().enumerate() {
            let ctx = |e: Error| Error::Configuration(format!("subsystem {i}: {e}"));
            let sb = s.state_box.to_box().map_err(ctx)?;
            let ib = s.input_box.to_box().map_err(ctx)?;
            for (label, pitch, b) in [("eta", s.eta, &sb), ("mu1", s.mu1, &ib)] {
                if !(pitch.is_finite() && pitch > 0.0) {
                    return Err(Error::Quantization(format!(
                        "subsystem {i}: {label} must be > 0, got {pitch}"
                    )));
                }
                if pitch > b.span() * (1.0 + 1e-9) {
                    return Err(Error::Quantization(format!(
                        "subsystem {i}: {label} = {pitch} exceeds the box span {}",
                        b.span()
                    )));
                }
            }
            if let DynamicsSpec::Linear(l) = &s.dynamics {
                for (label, m) in [("a", &l.a), ("b", &l.b), ("d", &l.d)] {
                    from_rows(m).map_err(|e| Error::Configuration(format!("subsystem {i}: {label}: {e}")))?;
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != subs.len() {
                return Err(Error::Configuration(format!(
                    "`weights` has {} entries for {} subsystems",
                    w.len(),
                    subs.len()
                )));
            }
        }
        let r = &self.run;
        if r.traces > 0 && r.horizon == 0 {
            return Err(Error::Configuration(
                "`run.horizon` must be > 0 when traces are requested".into(),
            ));
        }
        if !(r.delta > 0.0 && r.delta < 1.0) {
            return Err(Error::Configuration(format!(
                "`run.delta` must lie in (0, 1), got {}",
                r.delta
            )));
        }
        if let Some(v) = r.input_bound {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Configuration(format!("`run.input_bound` must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    from_rows(rows).map_err(|e| Error::Configuration(format!("{what}: {e}")))
}

/// Parses and validates a spec from text.
pub fn parse_spec_str(text: &str) -> Result<NetworkSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: NetworkSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let path = e.path().to_string();
        Error::Parse {
            line: inner.line(),
            message: if path == "." {
                inner.to_string()
            } else {
                format!("at `{path}`: {inner}")
            },
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_spec(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
    parse_spec_str(&text)
}
