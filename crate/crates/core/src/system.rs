//! Concrete discrete-time subsystems and their static interconnection.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, mat_vec};

/// Slack used for box membership of step arguments.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Closed axis-aligned box `[lower, upper]`. Degenerate axes are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (axis, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(Error::Domain(format!("box axis {axis} has invalid bounds [{l}, {u}]")));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxSet::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Smallest edge length.
    pub fn span(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).fold(f64::INFINITY, f64::min)
    }

    /// Largest edge length, i.e. the ∞-norm diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack)
    }

    /// Membership check naming the first violated axis.
    pub fn check(&self, x: &[f64], what: &'static str) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "{what} has {} components, box has {}",
                x.len(),
                self.dim()
            )));
        }
        for (axis, v) in x.iter().enumerate() {
            let (l, u) = (self.lower[axis], self.upper[axis]);
            if !(*v >= l - MEMBERSHIP_SLACK && *v <= u + MEMBERSHIP_SLACK) {
                return Err(Error::OutOfBox {
                    what,
                    axis,
                    value: *v,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(())
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxSet) -> BoxSet {
        debug_assert_eq!(self.dim(), other.dim());
        BoxSet {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Box grown by `pad` on every side.
    pub fn padded(&self, pad: f64) -> BoxSet {
        BoxSet {
            lower: self.lower.iter().map(|l| l - pad).collect(),
            upper: self.upper.iter().map(|u| u + pad).collect(),
        }
    }

    /// Smallest box containing all points; `None` if there are none.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Option<BoxSet> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut lower = first.to_vec();
        let mut upper = first.to_vec();
        for p in it {
            for (a, v) in p.iter().enumerate() {
                lower[a] = lower[a].min(*v);
                upper[a] = upper[a].max(*v);
            }
        }
        Some(BoxSet { lower, upper })
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Uniform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if u > l { rng.gen_range(*l..=*u) } else { *l })
            .collect()
    }

    /// All `2^dim` corner points.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|a| {
                        if mask >> a & 1 == 1 {
                            self.upper[a]
                        } else {
                            self.lower[a]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Exact interval image `{m·x | x ∈ b}` of a box under a matrix.
pub fn linear_image(m: &DMatrix<f64>, b: &BoxSet) -> Result<BoxSet> {
    if m.ncols() != b.dim() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix applied to a {}-dim box",
            m.nrows(),
            m.ncols(),
            b.dim()
        )));
    }
    let mut lower = vec![0.0; m.nrows()];
    let mut upper = vec![0.0; m.nrows()];
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let (p, q) = (m[(r, c)] * b.lower[c], m[(r, c)] * b.upper[c]);
            lower[r] += p.min(q);
            upper[r] += p.max(q);
        }
    }
    Ok(BoxSet { lower, upper })
}

/// Finite union of boxes of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    boxes: Vec<BoxSet>,
}

impl Region {
    pub fn new(boxes: Vec<BoxSet>) -> Result<Self> {
        let dim = boxes
            .first()
            .ok_or_else(|| Error::Structure("region without boxes".into()))?
            .dim();
        if boxes.iter().any(|b| b.dim() != dim) {
            return Err(Error::Dimension("region boxes differ in dimension".into()));
        }
        Ok(Region { boxes })
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn boxes(&self) -> &[BoxSet] {
        &self.boxes
    }

    /// The region as a single box, if it is one.
    pub fn as_box(&self) -> Option<&BoxSet> {
        match self.boxes.as_slice() {
            [b] => Some(b),
            _ => None,
        }
    }

    pub fn bounding_box(&self) -> BoxSet {
        self.boxes[1..].iter().fold(self.boxes[0].clone(), |acc, b| acc.hull(b))
    }

    pub fn span(&self) -> f64 {
        self.boxes.iter().map(BoxSet::span).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        self.boxes.iter().any(|b| b.contains(x, slack))
    }
}

impl From<BoxSet> for Region {
    fn from(b: BoxSet) -> Self {
        Region { boxes: vec![b] }
    }
}

pub type TransitionFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Deterministic transition map `x⁺ = f(x, u, w)`.
#[derive(Clone)]
pub enum Dynamics {
    /// `x⁺ = A x + B u + D w`
    Linear {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
    },
    General(TransitionFn),
}

impl Dynamics {
    /// `x⁺ = x + w + u` in `n` dimensions.
    pub fn integrator(n: usize) -> Self {
        let i = DMatrix::identity(n, n);
        Dynamics::Linear {
            a: i.clone(),
            b: i.clone(),
            d: i,
        }
    }

    fn eval(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        match self {
            Dynamics::Linear { a, b, d } => {
                let (ax, bu, dw) = (mat_vec(a, x), mat_vec(b, u), mat_vec(d, w));
                ax.iter().zip(&bu).zip(&dw).map(|((p, q), r)| p + q + r).collect()
            }
            Dynamics::General(f) => f(x, u, w),
        }
    }
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Linear { a, b, d } => f
                .debug_struct("Linear")
                .field("a", a)
                .field("b", b)
                .field("d", d)
                .finish(),
            Dynamics::General(_) => f.write_str("General(<fn>)"),
        }
    }
}

/// Output map `y = h(x)`.
#[derive(Clone)]
pub enum OutputMap {
    Identity,
    Linear(DMatrix<f64>),
    General { dim: usize, map: MapFn },
}

impl OutputMap {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            OutputMap::Identity => x.to_vec(),
            OutputMap::Linear(c) => mat_vec(c, x),
            OutputMap::General { map, .. } => map(x),
        }
    }

    pub fn output_dim(&self, state_dim: usize) -> usize {
        match self {
            OutputMap::Identity => state_dim,
            OutputMap::Linear(c) => c.nrows(),
            OutputMap::General { dim, .. } => *dim,
        }
    }

    /// Matrix form for linear maps (identity included).
    pub fn matrix(&self, state_dim: usize) -> Option<DMatrix<f64>> {
        match self {
            OutputMap::Identity => Some(DMatrix::identity(state_dim, state_dim)),
            OutputMap::Linear(c) => Some(c.clone()),
            OutputMap::General { .. } => None,
        }
    }

    /// Box enclosing `h(b)`: exact for linear maps, vertex-sampled otherwise.
    pub fn image_box(&self, b: &BoxSet) -> Result<(BoxSet, bool)> {
        match self.matrix(b.dim()) {
            Some(m) => Ok((linear_image(&m, b)?, true)),
            None => {
                let imgs: Vec<Vec<f64>> = b.vertices().iter().map(|v| self.eval(v)).collect();
                let bb = BoxSet::bounding(imgs.iter().map(Vec::as_slice))
                    .ok_or_else(|| Error::Structure("empty vertex set".into()))?;
                Ok((bb, false))
            }
        }
    }
}

impl fmt::Debug for OutputMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputMap::Identity => f.write_str("Identity"),
            OutputMap::Linear(c) => f.debug_tuple("Linear").field(c).finish(),
            OutputMap::General { dim, .. } => write!(f, "General(dim {dim})"),
        }
    }
}

/// A concrete subsystem `x⁺ = f(x, u, w)` with external output `h1(x)` and
/// internal output `h2(x)`.
#[derive(Debug, Clone)]
pub struct SubsystemModel {
    name: String,
    state_set: Region,
    input_box: BoxSet,
    internal_box: BoxSet,
    dynamics: Dynamics,
    h1: OutputMap,
    h2: OutputMap,
}

impl SubsystemModel {
    pub fn new(
        name: impl Into<String>,
        state_set: impl Into<Region>,
        input_box: BoxSet,
        internal_box: BoxSet,
        dynamics: Dynamics,
        h1: OutputMap,
        h2: OutputMap,
    ) -> Result<Self> {
        let sub = SubsystemModel {
            name: name.into(),
            state_set: state_set.into(),
            input_box,
            internal_box,
            dynamics,
            h1,
            h2,
        };
        sub.validate()?;
        Ok(sub)
    }

    /// The scalar-block integrator `x⁺ = x + w + u` with identity outputs.
    pub fn integrator(
        name: impl Into<String>,
        state_box: BoxSet,
        input_box: BoxSet,
        internal_box: BoxSet,
    ) -> Result<Self> {
        let n = state_box.dim();
        SubsystemModel::new(
            name,
            state_box,
            input_box,
            internal_box,
            Dynamics::integrator(n),
            OutputMap::Identity,
            OutputMap::Identity,
        )
    }

    fn validate(&self) -> Result<()> {
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.internal_dim());
        if let Dynamics::Linear { a, b, d } = &self.dynamics {
            let ok = a.shape() == (n, n) && b.shape() == (n, m) && d.shape() == (n, p);
            if !ok {
                return Err(Error::Dimension(format!(
                    "subsystem {}: A {:?}, B {:?}, D {:?} inconsistent with n={n}, m={m}, p={p}",
                    self.name,
                    a.shape(),
                    b.shape(),
                    d.shape()
                )));
            }
        }
        for (label, h) in [("h1", &self.h1), ("h2", &self.h2)] {
            if let OutputMap::Linear(c) = h {
                if c.ncols() != n {
                    return Err(Error::Dimension(format!(
                        "subsystem {}: {label} has {} columns, state has {n} dims",
                        self.name,
                        c.ncols()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_set(&self) -> &Region {
        &self.state_set
    }

    /// The state set as a single box; multi-box regions are rejected.
    pub fn state_box(&self) -> Result<&BoxSet> {
        self.state_set.as_box().ok_or_else(|| {
            Error::Configuration(format!(
                "subsystem {}: operation needs a single-box state set",
                self.name
            ))
        })
    }

    pub fn input_box(&self) -> &BoxSet {
        &self.input_box
    }

    pub fn internal_box(&self) -> &BoxSet {
        &self.internal_box
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn h1(&self) -> &OutputMap {
        &self.h1
    }

    pub fn h2(&self) -> &OutputMap {
        &self.h2
    }

    pub fn state_dim(&self) -> usize {
        self.state_set.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn internal_dim(&self) -> usize {
        self.internal_box.dim()
    }

    pub fn internal_output_dim(&self) -> usize {
        self.h2.output_dim(self.state_dim())
    }

    /// Whether this is `x⁺ = x + w + u` with identity internal output.
    pub fn is_integrator(&self) -> bool {
        let n = self.state_dim();
        let id = DMatrix::<f64>::identity(n, n);
        matches!(&self.dynamics, Dynamics::Linear { a, b, d } if *a == id && *b == id && *d == id)
            && matches!(self.h2, OutputMap::Identity)
    }

    /// Successor with membership checks on all arguments.
    pub fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        if !self.state_set.contains(x, MEMBERSHIP_SLACK) {
            match self.state_set.as_box() {
                Some(b) => b.check(x, "state")?,
                None => return Err(Error::Domain(format!("state {x:?} outside the state set"))),
            }
        }
        self.input_box.check(u, "input")?;
        self.internal_box.check(w, "internal input")?;
        Ok(self.dynamics.eval(x, u, w))
    }

    /// Successor without membership checks. Closed-loop inputs `H(x) + û`
    /// and abstraction states on extended grids are evaluated this way.
    pub fn step_unchecked(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        self.dynamics.eval(x, u, w)
    }
}

/// Static coupling from stacked internal outputs to stacked internal inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionMatrix(pub DMatrix<f64>);

/// Closed network of subsystems with `w = M · [h2_1(x_1); …; h2_N(x_N)]`.
#[derive(Debug, Clone)]
pub struct InterconnectedSystem {
    subsystems: Vec<SubsystemModel>,
    coupling: DMatrix<f64>,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    internal_offsets: Vec<usize>,
    output2_offsets: Vec<usize>,
    /// Whether the well-posedness check was exact (all h2 linear).
    pub wellposed_exact: bool,
}

fn offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for d in dims {
        out.push(out.last().unwrap() + d);
    }
    out
}

/// Stacks subsystems and checks `M · ∏ h2_i(X_i) ⊆ ∏ W_i`.
pub fn interconnect(subsystems: Vec<SubsystemModel>, coupling: InterconnectionMatrix) -> Result<InterconnectedSystem> {
    if subsystems.is_empty() {
        return Err(Error::Structure("network without subsystems".into()));
    }
    let m = coupling.0;
    let state_offsets = offsets(subsystems.iter().map(SubsystemModel::state_dim));
    let input_offsets = offsets(subsystems.iter().map(SubsystemModel::input_dim));
    let internal_offsets = offsets(subsystems.iter().map(SubsystemModel::internal_dim));
    let output2_offsets = offsets(subsystems.iter().map(SubsystemModel::internal_output_dim));
    let (rows, cols) = (*internal_offsets.last().unwrap(), *output2_offsets.last().unwrap());
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "coupling is {}x{}, expected {rows}x{cols} (internal inputs x internal outputs)",
            m.nrows(),
            m.ncols()
        )));
    }

    let mut lower = Vec::with_capacity(cols);
    let mut upper = Vec::with_capacity(cols);
    let mut exact = true;
    for sub in &subsystems {
        let bb = sub.state_set.bounding_box();
        let (img, is_exact) = sub.h2.image_box(&bb)?;
        exact &= is_exact && sub.state_set.as_box().is_some();
        lower.extend_from_slice(img.lower());
        upper.extend_from_slice(img.upper());
    }
    let outputs = BoxSet::new(lower, upper)?;
    let image = linear_image(&m, &outputs)?;

    let mut worst: Option<(usize, f64)> = None;
    for (i, sub) in subsystems.iter().enumerate() {
        let wb = sub.internal_box();
        for a in 0..sub.internal_dim() {
            let r = internal_offsets[i] + a;
            let over = (wb.lower()[a] - image.lower()[r]).max(image.upper()[r] - wb.upper()[a]);
            let scale = wb.lower()[a].abs().max(wb.upper()[a].abs()).max(1.0);
            if over > MEMBERSHIP_SLACK * scale && worst.is_none_or(|(_, o)| over > o) {
                worst = Some((r, over));
            }
        }
    }
    if let Some((coordinate, overshoot)) = worst {
        return Err(Error::Interconnection { coordinate, overshoot });
    }
    Ok(InterconnectedSystem {
        subsystems,
        coupling: m,
        state_offsets,
        input_offsets,
        internal_offsets,
        output2_offsets,
        wellposed_exact: exact,
    })
}

impl InterconnectedSystem {
    pub fn subsystems(&self) -> &[SubsystemModel] {
        &self.subsystems
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        *self.input_offsets.last().unwrap()
    }

    pub fn state_range(&self, i: usize) -> std::ops::Range<usize> {
        self.state_offsets[i]..self.state_offsets[i + 1]
    }

    pub fn input_range(&self, i: usize) -> std::ops::Range<usize> {
        self.input_offsets[i]..self.input_offsets[i + 1]
    }

    pub fn internal_range(&self, i: usize) -> std::ops::Range<usize> {
        self.internal_offsets[i]..self.internal_offsets[i + 1]
    }

    pub fn output2_range(&self, i: usize) -> std::ops::Range<usize> {
        self.output2_offsets[i]..self.output2_offsets[i + 1]
    }

    /// Stacked internal inputs `M · h2-stack(x)`.
    pub fn internal_inputs(&self, x: &[f64]) -> Vec<f64> {
        let mut y2 = Vec::with_capacity(*self.output2_offsets.last().unwrap());
        for (i, sub) in self.subsystems.iter().enumerate() {
            y2.extend(sub.h2.eval(&x[self.state_range(i)]));
        }
        mat_vec(&self.coupling, &y2)
    }

    /// Network successor with per-subsystem membership checks.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let w = self.internal_inputs(x);
        let mut out = Vec::with_capacity(x.len());
        for (i, sub) in self.subsystems.iter().enumerate() {
            out.extend(sub.step(
                &x[self.state_range(i)],
                &u[self.input_range(i)],
                &w[self.internal_range(i)],
            )?);
        }
        Ok(out)
    }

    /// Network successor without membership checks.
    pub fn step_unchecked(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let w = self.internal_inputs(x);
        let mut out = Vec::with_capacity(x.len());
        for (i, sub) in self.subsystems.iter().enumerate() {
            out.extend(sub.step_unchecked(
                &x[self.state_range(i)],
                &u[self.input_range(i)],
                &w[self.internal_range(i)],
            ));
        }
        out
    }

    /// External output `[h1_1(x_1); …; h1_N(x_N)]`.
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        let mut y = Vec::new();
        for (i, sub) in self.subsystems.iter().enumerate() {
            y.extend(sub.h1.eval(&x[self.state_range(i)]));
        }
        y
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() || u.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects state {} / input {}, got {} / {}",
                self.state_dim(),
                self.input_dim(),
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// Product of the subsystem state boxes.
    pub fn state_box(&self) -> Result<BoxSet> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for sub in &self.subsystems {
            let b = sub.state_box()?;
            lo.extend_from_slice(b.lower());
            hi.extend_from_slice(b.upper());
        }
        BoxSet::new(lo, hi)
    }
}

/// Graph Laplacian of an undirected graph on `n` nodes.
pub fn laplacian(n: usize, edges: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::Structure(format!("edge ({i}, {j}) outside {n} nodes")));
        }
        if i == j {
            continue;
        }
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
    }
    Ok(l)
}

/// Path graph `0 - 1 - … - (n-1)`.
pub fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

/// Parameters of a Laplacian consensus network of scalar integrators.
#[derive(Debug, Clone)]
pub struct LaplacianSpec {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub tau: f64,
    pub feedback_gain: f64,
    pub state_box: BoxSet,
    pub input_box: BoxSet,
}

/// Subsystems, coupling and metadata of a Laplacian network.
#[derive(Debug, Clone)]
pub struct LaplacianNetwork {
    pub subsystems: Vec<SubsystemModel>,
    pub laplacian: DMatrix<f64>,
    /// `A = e^{−Lτ}`; the monolithic network is `x⁺ = A x + u`.
    pub a: DMatrix<f64>,
    /// `M = A − I`, which also serves as the abstract coupling.
    pub coupling: DMatrix<f64>,
    pub feedback_gain: f64,
    /// Per-subsystem supply-rate matrices `[[I, (1−λ)I], [(1−λ)I, 0]]`.
    pub supply_rates: Vec<DMatrix<f64>>,
}

/// Supply-rate matrix `[[I, (1−λ)I], [(1−λ)I, 0]]` of an `n`-dim integrator
/// under feedback `−λ x`.
pub fn integrator_supply_rate(n: usize, feedback_gain: f64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        x[(i, i)] = 1.0;
        x[(i, n + i)] = 1.0 - feedback_gain;
        x[(n + i, i)] = 1.0 - feedback_gain;
    }
    x
}

pub fn check_feedback_gain(feedback_gain: f64) -> Result<()> {
    if !(feedback_gain > 0.0 && feedback_gain <= 0.5) {
        return Err(Error::Configuration(format!(
            "feedback gain must lie in (0, 0.5], got {feedback_gain}"
        )));
    }
    Ok(())
}

/// Builds `N` scalar integrators coupled through `M = e^{−Lτ} − I`.
///
/// Internal input boxes are the exact interval images of the coupling rows.
pub fn build_laplacian_network(spec: &LaplacianSpec) -> Result<LaplacianNetwork> {
    if !(spec.tau > 0.0 && spec.tau.is_finite()) {
        return Err(Error::Configuration(format!("τ must be > 0, got {}", spec.tau)));
    }
    check_feedback_gain(spec.feedback_gain)?;
    if spec.nodes == 0 {
        return Err(Error::Structure("network needs at least one node".into()));
    }
    if spec.state_box.dim() != 1 || spec.input_box.dim() != 1 {
        return Err(Error::Dimension("Laplacian network nodes are scalar".into()));
    }
    let n = spec.nodes;
    let l = laplacian(n, &spec.edges)?;
    let a = linalg::expm(&(-&l * spec.tau))?;
    let m = &a - DMatrix::<f64>::identity(n, n);

    let states = BoxSet::new(vec![spec.state_box.lower()[0]; n], vec![spec.state_box.upper()[0]; n])?;
    let w_image = linear_image(&m, &states)?;
    let mut subsystems = Vec::with_capacity(n);
    for i in 0..n {
        subsystems.push(SubsystemModel::integrator(
            format!("node{i}"),
            spec.state_box.clone(),
            spec.input_box.clone(),
            BoxSet::new(vec![w_image.lower()[i]], vec![w_image.upper()[i]])?,
        )?);
    }
    Ok(LaplacianNetwork {
        subsystems,
        laplacian: l,
        a,
        coupling: m,
        feedback_gain: spec.feedback_gain,
        supply_rates: vec![integrator_supply_rate(1, spec.feedback_gain); n],
    })
}
