//! Comparison functions of class K / K∞ and the algebra needed to turn a
//! simulation-function certificate into an explicit error bound.
//!
//! Functions are immutable values. Closed forms are kept whenever the
//! operation stays inside the linear/power families; everything else falls
//! back to a piecewise-linear resampling over a declared working range.

use crate::error::{Error, Result};

/// Default number of samples used when a composition leaves the closed-form
/// families.
pub const DEFAULT_RESAMPLE_POINTS: usize = 256;

/// Sub-intervals per segment probed when estimating interpolation error.
const INTERP_PROBES: usize = 8;

/// Default margin `δ` used when clamping slopes to build σ̂.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Working grid for piecewise-linear resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resample {
    /// Upper end of the sampled interval `[0, range]`.
    pub range: f64,
    pub points: usize,
}

impl Resample {
    pub fn over(range: f64) -> Self {
        Resample {
            range,
            points: DEFAULT_RESAMPLE_POINTS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) || self.points < 2 {
            return Err(Error::Configuration(format!(
                "resample grid needs range > 0 and at least 2 points, got range {} with {} points",
                self.range, self.points
            )));
        }
        Ok(())
    }

    fn abscissae(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points;
        (0..n).map(move |k| self.range * k as f64 / (n - 1) as f64)
    }
}

/// Piecewise-linear comparison function anchored at the origin.
///
/// Between breakpoints the function interpolates linearly; beyond the last
/// breakpoint it continues with `tail_slope`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    points: Vec<(f64, f64)>,
    tail_slope: f64,
}

impl Pwl {
    /// Builds a PWL function. A missing `(0, 0)` anchor is prepended.
    pub fn new(mut points: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        if points.first().is_none_or(|&p| p != (0.0, 0.0)) {
            points.insert(0, (0.0, 0.0));
        }
        for w in points.windows(2) {
            let ((s0, f0), (s1, f1)) = (w[0], w[1]);
            if !(s1 > s0 && f1 > f0) || !s1.is_finite() || !f1.is_finite() {
                return Err(Error::InvalidCertificate(format!(
                    "PWL breakpoints must be strictly increasing in both coordinates: ({s0}, {f0}) -> ({s1}, {f1})"
                )));
            }
        }
        if !(tail_slope.is_finite() && tail_slope >= 0.0) {
            return Err(Error::InvalidCertificate(format!(
                "PWL tail slope {tail_slope} must be finite and nonnegative"
            )));
        }
        Ok(Pwl { points, tail_slope })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// Slopes of the finite segments, in order.
    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
    }

    fn last(&self) -> (f64, f64) {
        *self.points.last().expect("anchored PWL is never empty")
    }

    fn eval(&self, s: f64) -> f64 {
        let (ls, lf) = self.last();
        if s >= ls {
            return lf + self.tail_slope * (s - ls);
        }
        // first index with abscissa > s; >= 1 because points[0].0 == 0 <= s
        let i = self.points.partition_point(|&(x, _)| x <= s);
        let (s0, f0) = self.points[i - 1];
        let (s1, f1) = self.points[i];
        f0 + (f1 - f0) * (s - s0) / (s1 - s0)
    }

    fn sup_slope_on(&self, lo: f64, hi: f64) -> f64 {
        let mut sup = 0.0_f64;
        for w in self.points.windows(2) {
            let ((s0, f0), (s1, f1)) = (w[0], w[1]);
            if s1 > lo && s0 < hi {
                sup = sup.max((f1 - f0) / (s1 - s0));
            }
        }
        if hi > self.last().0 {
            sup = sup.max(self.tail_slope);
        }
        sup
    }
}

/// Two comparison functions glued at `knee`:
/// `f(s) = head(s)` for `s <= knee`, `tail(s - shift) + offset` beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct Splice {
    pub head: ClassKFn,
    pub knee: f64,
    pub tail: ClassKFn,
    pub shift: f64,
    pub offset: f64,
}

impl Splice {
    fn eval(&self, s: f64) -> f64 {
        if s <= self.knee {
            self.head.eval(s)
        } else {
            self.tail.eval((s - self.shift).max(0.0)) + self.offset
        }
    }
}

/// A represented comparison function.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKFn {
    /// `s ↦ slope·s`
    Linear(f64),
    /// `s ↦ coeff·s^exponent`
    Power {
        coeff: f64,
        exponent: f64,
    },
    PiecewiseLinear(Pwl),
    Spliced(Box<Splice>),
    /// `s ↦ scale·(s − inner(s))`; only built where `inner` has slopes
    /// below 1 on the part of the axis it is evaluated on.
    Complement {
        inner: Box<ClassKFn>,
        scale: f64,
    },
    /// The zero function; admissible only where `K∞ ∪ {0}` is allowed.
    Zero,
}

/// Outcome of [`ClassKFn::compose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub function: ClassKFn,
    /// Largest deviation observed at interior probe points when the result
    /// had to be resampled; `0` for closed forms.
    pub interp_error: f64,
}

impl ClassKFn {
    pub fn linear(slope: f64) -> Result<Self> {
        let f = ClassKFn::Linear(slope);
        f.validate()?;
        Ok(f)
    }

    pub fn power(coeff: f64, exponent: f64) -> Result<Self> {
        let f = ClassKFn::Power { coeff, exponent };
        f.validate()?;
        Ok(f)
    }

    pub fn pwl(points: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        Ok(ClassKFn::PiecewiseLinear(Pwl::new(points, tail_slope)?))
    }

    /// Checks the representation invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassKFn::Linear(a) => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidCertificate(format!("linear slope {a} must be > 0")));
                }
            }
            ClassKFn::Power { coeff, exponent } => {
                if !(coeff.is_finite() && *coeff > 0.0 && exponent.is_finite() && *exponent > 0.0) {
                    return Err(Error::InvalidCertificate(format!(
                        "power function needs coeff > 0 and exponent > 0, got {coeff}·s^{exponent}"
                    )));
                }
            }
            ClassKFn::PiecewiseLinear(p) => {
                Pwl::new(p.points.clone(), p.tail_slope)?;
            }
            ClassKFn::Spliced(sp) => {
                sp.head.validate()?;
                sp.tail.validate()?;
                if sp.head.is_zero() || sp.tail.is_zero() || !(sp.knee > 0.0 && sp.knee.is_finite()) {
                    return Err(Error::InvalidCertificate("degenerate splice".into()));
                }
                let left = sp.head.eval(sp.knee);
                let right = sp.tail.eval((sp.knee - sp.shift).max(0.0)) + sp.offset;
                if (left - right).abs() > 1e-9 * left.abs().max(1.0) {
                    return Err(Error::InvalidCertificate(format!(
                        "splice is discontinuous at {}: {left} vs {right}",
                        sp.knee
                    )));
                }
            }
            ClassKFn::Complement { inner, scale } => {
                inner.validate()?;
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::InvalidCertificate(format!(
                        "complement scale {scale} must be > 0"
                    )));
                }
            }
            ClassKFn::Zero => {}
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ClassKFn::Zero)
    }

    /// Whether the function is unbounded (K∞). Zero is not.
    pub fn is_k_infinity(&self) -> bool {
        match self {
            ClassKFn::Linear(_) | ClassKFn::Power { .. } => true,
            ClassKFn::PiecewiseLinear(p) => p.tail_slope > 0.0,
            ClassKFn::Spliced(sp) => sp.tail.is_k_infinity(),
            ClassKFn::Complement { .. } => true,
            ClassKFn::Zero => false,
        }
    }

    /// Evaluates at `s >= 0`.
    pub fn evaluate(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!(
                "comparison functions are defined on [0, ∞), got {s}"
            )));
        }
        Ok(self.eval(s))
    }

    /// Unchecked evaluation; negative arguments are treated as 0.
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self {
            ClassKFn::Linear(a) => a * s,
            ClassKFn::Power { coeff, exponent } => {
                if s == 0.0 {
                    0.0
                } else {
                    coeff * s.powf(*exponent)
                }
            }
            ClassKFn::PiecewiseLinear(p) => p.eval(s),
            ClassKFn::Spliced(sp) => sp.eval(s),
            ClassKFn::Complement { inner, scale } => scale * (s - inner.eval(s)),
            ClassKFn::Zero => 0.0,
        }
    }

    /// Supremum of the derivative on `[lo, hi]` (may be infinite).
    pub fn sup_slope_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            ClassKFn::Linear(a) => *a,
            ClassKFn::Power { coeff, exponent } => {
                let p = *exponent;
                if p == 1.0 {
                    *coeff
                } else {
                    let at = if p > 1.0 { hi } else { lo };
                    if (p > 1.0 && at.is_infinite()) || (p < 1.0 && at <= 0.0) {
                        f64::INFINITY
                    } else {
                        coeff * p * at.powf(p - 1.0)
                    }
                }
            }
            ClassKFn::PiecewiseLinear(pw) => pw.sup_slope_on(lo, hi),
            ClassKFn::Spliced(sp) => {
                let mut sup = 0.0_f64;
                if lo < sp.knee {
                    sup = sup.max(sp.head.sup_slope_on(lo, hi.min(sp.knee)));
                }
                if hi > sp.knee {
                    sup = sup.max(
                        sp.tail
                            .sup_slope_on((lo.max(sp.knee) - sp.shift).max(0.0), hi - sp.shift),
                    );
                }
                sup
            }
            ClassKFn::Complement { scale, .. } => *scale,
            ClassKFn::Zero => 0.0,
        }
    }

    /// Supremum of the derivative over `[0, ∞)`.
    pub fn sup_slope(&self) -> f64 {
        self.sup_slope_on(0.0, f64::INFINITY)
    }

    /// `c · f` for `c > 0`.
    pub fn scale(&self, c: f64) -> ClassKFn {
        match self {
            ClassKFn::Linear(a) => ClassKFn::Linear(a * c),
            ClassKFn::Power { coeff, exponent } => ClassKFn::Power {
                coeff: coeff * c,
                exponent: *exponent,
            },
            ClassKFn::PiecewiseLinear(p) => ClassKFn::PiecewiseLinear(Pwl {
                points: p.points.iter().map(|&(s, f)| (s, f * c)).collect(),
                tail_slope: p.tail_slope * c,
            }),
            ClassKFn::Spliced(sp) => ClassKFn::Spliced(Box::new(Splice {
                head: sp.head.scale(c),
                knee: sp.knee,
                tail: sp.tail.scale(c),
                shift: sp.shift,
                offset: sp.offset * c,
            })),
            ClassKFn::Complement { inner, scale } => ClassKFn::Complement {
                inner: inner.clone(),
                scale: scale * c,
            },
            ClassKFn::Zero => ClassKFn::Zero,
        }
    }

    /// `s ↦ f(b·s)` for `b > 0`.
    fn precompose_linear(&self, b: f64) -> ClassKFn {
        match self {
            ClassKFn::Linear(a) => ClassKFn::Linear(a * b),
            ClassKFn::Power { coeff, exponent } => ClassKFn::Power {
                coeff: coeff * b.powf(*exponent),
                exponent: *exponent,
            },
            ClassKFn::PiecewiseLinear(p) => ClassKFn::PiecewiseLinear(Pwl {
                points: p.points.iter().map(|&(s, f)| (s / b, f)).collect(),
                tail_slope: p.tail_slope * b,
            }),
            ClassKFn::Spliced(sp) => ClassKFn::Spliced(Box::new(Splice {
                head: sp.head.precompose_linear(b),
                knee: sp.knee / b,
                tail: sp.tail.precompose_linear(b),
                shift: sp.shift / b,
                offset: sp.offset,
            })),
            // c·(b·s − f(b·s)) = (c·b)·(s − f(b·s)/b)
            ClassKFn::Complement { inner, scale } => ClassKFn::Complement {
                inner: Box::new(inner.precompose_linear(b).scale(1.0 / b)),
                scale: scale * b,
            },
            ClassKFn::Zero => ClassKFn::Zero,
        }
    }

    /// Inverse of a K∞ function.
    pub fn invert(&self) -> Result<ClassKFn> {
        if !self.is_k_infinity() {
            return Err(Error::InvalidCertificate(format!(
                "only K∞ functions are invertible, got {self}"
            )));
        }
        self.validate()?;
        Ok(match self {
            ClassKFn::Linear(a) => ClassKFn::Linear(1.0 / a),
            ClassKFn::Power { coeff, exponent } => ClassKFn::Power {
                coeff: coeff.powf(-1.0 / exponent),
                exponent: 1.0 / exponent,
            },
            ClassKFn::PiecewiseLinear(p) => ClassKFn::PiecewiseLinear(Pwl {
                points: p.points.iter().map(|&(s, f)| (f, s)).collect(),
                tail_slope: 1.0 / p.tail_slope,
            }),
            ClassKFn::Spliced(sp) => ClassKFn::Spliced(Box::new(Splice {
                head: sp.head.invert()?,
                knee: sp.head.eval(sp.knee),
                tail: sp.tail.invert()?,
                shift: sp.offset,
                offset: sp.shift,
            })),
            ClassKFn::Complement { .. } => {
                return Err(Error::Configuration(
                    "inverting Id − f is not supported; resample it first".into(),
                ))
            }
            ClassKFn::Zero => unreachable!("rejected above"),
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &ClassKFn, resample: &Resample) -> Result<Composition> {
        let exact = |function| {
            Ok(Composition {
                function,
                interp_error: 0.0,
            })
        };
        match (self, inner) {
            (ClassKFn::Zero, _) | (_, ClassKFn::Zero) => exact(ClassKFn::Zero),
            (ClassKFn::Linear(a), g) => exact(g.scale(*a)),
            (f, ClassKFn::Linear(b)) => exact(f.precompose_linear(*b)),
            (ClassKFn::Power { coeff: a, exponent: p }, ClassKFn::Power { coeff: b, exponent: q }) => {
                exact(ClassKFn::Power {
                    coeff: a * b.powf(*p),
                    exponent: p * q,
                })
            }
            (f, g) => resample_pwl(|s| f.eval(g.eval(s)), resample),
        }
    }

    /// `Id − f`, which must itself be a K∞ function (all slopes of `f` below 1).
    pub fn identity_minus(&self) -> Result<ClassKFn> {
        let sup = self.sup_slope();
        if !(sup < 1.0) {
            return Err(Error::Configuration(format!(
                "Id − f is not strictly increasing: sup slope of {self} is {sup}"
            )));
        }
        Ok(match self {
            ClassKFn::Zero => ClassKFn::Linear(1.0),
            ClassKFn::Linear(a) => ClassKFn::Linear(1.0 - a),
            ClassKFn::Power { coeff, .. } => ClassKFn::Linear(1.0 - coeff),
            ClassKFn::PiecewiseLinear(p) => ClassKFn::PiecewiseLinear(Pwl {
                points: p.points.iter().map(|&(s, f)| (s, s - f)).collect(),
                tail_slope: 1.0 - p.tail_slope,
            }),
            // the slope check above covers each piece on its own interval,
            // where a global closed form may not exist
            ClassKFn::Spliced(sp) => ClassKFn::Spliced(Box::new(Splice {
                head: sp.head.identity_minus().unwrap_or_else(|_| sp.head.complement()),
                knee: sp.knee,
                tail: sp.tail.identity_minus().unwrap_or_else(|_| sp.tail.complement()),
                shift: sp.shift,
                offset: sp.shift - sp.offset,
            })),
            ClassKFn::Complement { .. } => {
                return Err(Error::Configuration(
                    "Id − (Id − f) is not supported; resample first".into(),
                ))
            }
        })
    }

    fn complement(&self) -> ClassKFn {
        ClassKFn::Complement {
            inner: Box::new(self.clone()),
            scale: 1.0,
        }
    }

    /// Piecewise-linear interpolation on `resample`'s grid.
    pub fn to_pwl(&self, resample: &Resample) -> Result<Composition> {
        resample_pwl(|s| self.eval(s), resample)
    }
}

/// Piecewise-linear interpolation of an arbitrary increasing `f` on `resample`'s grid.
pub fn resample_pwl(f: impl Fn(f64) -> f64, resample: &Resample) -> Result<Composition> {
    resample.validate()?;
    let xs: Vec<f64> = resample.abscissae().collect();
    let mut points = Vec::with_capacity(xs.len());
    for &s in &xs {
        points.push((s, f(s)));
    }
    let n = points.len();
    let (s0, f0) = points[n - 2];
    let (s1, f1) = points[n - 1];
    let tail = (f1 - f0) / (s1 - s0);
    let pwl = Pwl::new(points, tail)
        .map_err(|e| Error::Numerical(format!("resampled function lost strict monotonicity: {e}")))?;
    let interp_error = xs
        .windows(2)
        .flat_map(|w| (1..INTERP_PROBES).map(move |j| w[0] + (w[1] - w[0]) * j as f64 / INTERP_PROBES as f64))
        .map(|s| (f(s) - pwl.eval(s)).abs())
        .fold(0.0_f64, f64::max);
    Ok(Composition {
        function: ClassKFn::PiecewiseLinear(pwl),
        interp_error,
    })
}

impl std::fmt::Display for ClassKFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassKFn::Linear(a) => write!(f, "linear({a})"),
            ClassKFn::Power { coeff, exponent } => write!(f, "power({coeff}, {exponent})"),
            ClassKFn::PiecewiseLinear(p) => {
                write!(f, "pwl[{} breakpoints, tail {}]", p.points.len(), p.tail_slope)
            }
            ClassKFn::Spliced(sp) => write!(f, "splice({} | {} @ {})", sp.head, sp.tail, sp.knee),
            ClassKFn::Complement { inner, scale } => write!(f, "{scale}·(id − {inner})"),
            ClassKFn::Zero => write!(f, "zero"),
        }
    }
}

/// `n` log-spaced sample points in `[lo, hi]`, `0 < lo < hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}

/// Builds σ̂ ≤ σ with `Id − σ̂` strictly increasing: every slope of σ̂ is at
/// most `1 − δ`.
pub fn clamp_slopes(sigma: &ClassKFn, delta: f64) -> Result<ClassKFn> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Configuration(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !sigma.is_k_infinity() {
        return Err(Error::InvalidCertificate(format!(
            "σ must be K∞ to build σ̂, got {sigma}"
        )));
    }
    sigma.validate()?;
    let cap = 1.0 - delta;
    match sigma {
        ClassKFn::Linear(a) => Ok(ClassKFn::Linear(a.min(cap))),
        ClassKFn::Power { coeff, exponent } if *exponent == 1.0 => Ok(ClassKFn::Linear(coeff.min(cap))),
        ClassKFn::Power { coeff: a, exponent: p } if *p > 1.0 => {
            // slope a·p·s^(p-1) reaches the cap at the knee; continue tangentially
            let knee = (cap / (a * p)).powf(1.0 / (p - 1.0));
            Ok(ClassKFn::Spliced(Box::new(Splice {
                head: sigma.clone(),
                knee,
                tail: ClassKFn::Linear(cap),
                shift: 0.0,
                offset: a * knee.powf(*p) - cap * knee,
            })))
        }
        ClassKFn::Power { coeff: a, exponent: p } => {
            // concave: follow cap·s until it meets σ, then σ itself
            let knee = (a / cap).powf(1.0 / (1.0 - p));
            Ok(ClassKFn::Spliced(Box::new(Splice {
                head: ClassKFn::Linear(cap),
                knee,
                tail: sigma.clone(),
                shift: 0.0,
                offset: 0.0,
            })))
        }
        ClassKFn::PiecewiseLinear(p) => {
            let mut points = Vec::with_capacity(p.points.len());
            let mut acc = 0.0;
            points.push((0.0, 0.0));
            for (w, slope) in p.points.windows(2).zip(p.slopes()) {
                acc += slope.min(cap) * (w[1].0 - w[0].0);
                points.push((w[1].0, acc));
            }
            ClassKFn::pwl(points, p.tail_slope.min(cap))
        }
        ClassKFn::Spliced(_) | ClassKFn::Complement { .. } if sigma.sup_slope() <= cap => Ok(sigma.clone()),
        ClassKFn::Spliced(_) | ClassKFn::Complement { .. } => Err(Error::Configuration(
            "slope clamping of composite functions is not supported; pass a PWL approximation".into(),
        )),
        ClassKFn::Zero => unreachable!("rejected above"),
    }
}

/// Parameters of the bound synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisParams {
    /// Splitting function ψ with `Id − ψ ∈ K∞`.
    pub psi: ClassKFn,
    pub delta: f64,
    pub resample: Resample,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        SynthesisParams {
            psi: ClassKFn::Linear(0.5),
            delta: DEFAULT_DELTA,
            resample: Resample::over(1e3),
        }
    }
}

/// Output of [`synthesize_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFunctions {
    pub sigma_hat: ClassKFn,
    /// Contraction `λ = Id − (Id − ψ)∘σ̂`, with `λ(s) < s` for `s > 0`.
    pub lambda: ClassKFn,
    /// `γ_ext = σ̂⁻¹ ∘ ψ⁻¹ ∘ (2·ρ_ext)`.
    pub gamma_ext: ClassKFn,
    /// `φ = σ̂⁻¹(ψ⁻¹(2ε))`.
    pub phi: f64,
    /// Largest interpolation error of any resampled intermediate.
    pub interp_error: f64,
}

/// Turns the decay/gain data `(σ, ρ_ext, ε)` of a simulation function into
/// the contraction `λ`, the input gain `γ_ext` and the offset `φ`.
pub fn synthesize_bound(
    sigma: &ClassKFn,
    rho_ext: &ClassKFn,
    epsilon: f64,
    params: &SynthesisParams,
) -> Result<BoundFunctions> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("ε must be finite and ≥ 0, got {epsilon}")));
    }
    let psi = &params.psi;
    if !psi.is_k_infinity() {
        return Err(Error::Configuration(format!("ψ must be K∞, got {psi}")));
    }
    let id_minus_psi = psi.identity_minus()?;
    if !rho_ext.is_zero() && !rho_ext.is_k_infinity() {
        return Err(Error::InvalidCertificate(format!(
            "ρ_ext must be K∞ or zero, got {rho_ext}"
        )));
    }
    let sigma_hat = clamp_slopes(sigma, params.delta)?;
    let sigma_hat_inv = sigma_hat.invert()?;
    let psi_inv = psi.invert()?;
    let mut interp_error = 0.0_f64;

    let gamma_ext = if rho_ext.is_zero() {
        ClassKFn::Zero
    } else {
        let inner = psi_inv.compose(&rho_ext.scale(2.0), &params.resample)?;
        let outer = sigma_hat_inv.compose(&inner.function, &params.resample)?;
        interp_error = interp_error.max(inner.interp_error).max(outer.interp_error);
        outer.function
    };
    let phi = sigma_hat_inv.eval(psi_inv.eval(2.0 * epsilon));

    let psi_tilde = id_minus_psi.compose(&sigma_hat, &params.resample)?;
    interp_error = interp_error.max(psi_tilde.interp_error);
    let lambda = psi_tilde.function.identity_minus()?;

    Ok(BoundFunctions {
        sigma_hat,
        lambda,
        gamma_ext,
        phi,
        interp_error,
    })
}
