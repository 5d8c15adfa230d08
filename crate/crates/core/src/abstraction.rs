//! Finite abstractions obtained by quantizing states and inputs onto
//! integer-multiple grids.
//!
//! A successor `x̂_d` of `(x̂, û, ŵ)` is listed iff
//! `‖x̂_d − f(x̂, H(x̂) + û, ŵ)‖∞ ≤ η/2`. The state grid is extended in whole
//! pitch steps until it covers every image, so no triple is blocking.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::certificate::PassivityCertificate;
use crate::error::{Error, Result};
use crate::linalg::{inf_dist, mat_vec};
use crate::system::{linear_image, BoxSet, Dynamics, OutputMap, SubsystemModel};

/// Relative tolerance when deciding whether `η` fits into a box.
const PITCH_SLACK: f64 = 1e-9;

/// Default cap on the number of points of one internal-input set.
pub const DEFAULT_SET_CAP: usize = 1_000_000;

/// Default deduplication tolerance for internal-input sets.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-12;

/// Integer-multiple grid `{k·η | k_lo ≤ k ≤ k_hi}` per axis, indexed
/// lexicographically with the first axis most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    eta: Vec<f64>,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl Grid {
    /// Grid from explicit integer ranges.
    pub fn from_ranges(eta: Vec<f64>, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if eta.len() != lo.len() || lo.len() != hi.len() {
            return Err(Error::Dimension("grid pitch and ranges differ in length".into()));
        }
        if eta.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Quantization(format!(
                "grid pitch must be finite and > 0, got {eta:?}"
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Quantization("empty grid range".into()));
        }
        let g = Grid { eta, lo, hi };
        g.checked_len()
            .ok_or_else(|| Error::Capacity("grid size overflows".into()))?;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn count(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    fn checked_len(&self) -> Option<usize> {
        (0..self.dim()).try_fold(1usize, |acc, a| {
            let c = self.hi[a].checked_sub(self.lo[a])?.checked_add(1)?;
            acc.checked_mul(usize::try_from(c).ok()?)
        })
    }

    pub fn len(&self) -> usize {
        self.checked_len().expect("validated at construction")
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coordinate(&self, axis: usize, k: i64) -> f64 {
        k as f64 * self.eta[axis]
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<i64> {
        let mut k = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            let c = self.count(a);
            k[a] = self.lo[a] + (idx % c) as i64;
            idx /= c;
        }
        k
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &ka) in k.iter().enumerate() {
            if ka < self.lo[a] || ka > self.hi[a] {
                return None;
            }
            idx = idx * self.count(a) + (ka - self.lo[a]) as usize;
        }
        Some(idx)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &k)| self.coordinate(a, k))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Box spanned by the grid points.
    pub fn covered_box(&self) -> BoxSet {
        BoxSet::new(
            (0..self.dim()).map(|a| self.coordinate(a, self.lo[a])).collect(),
            (0..self.dim()).map(|a| self.coordinate(a, self.hi[a])).collect(),
        )
        .expect("grid ranges are ordered")
    }

    /// Smallest grid with the same pitch containing this one and whose
    /// points come within `η/2` of every point of `target`.
    pub fn extended_to(&self, target: &BoxSet) -> Result<Grid> {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for a in 0..self.dim() {
            let kl = (target.lower()[a] / self.eta[a]).floor();
            let kh = (target.upper()[a] / self.eta[a]).ceil();
            if !(kl.is_finite() && kh.is_finite()) || kl.abs() > 1e15 || kh.abs() > 1e15 {
                return Err(Error::Capacity(format!(
                    "reachable box [{}, {}] is too large to grid",
                    target.lower()[a],
                    target.upper()[a]
                )));
            }
            lo[a] = lo[a].min(kl as i64);
            hi[a] = hi[a].max(kh as i64);
        }
        Grid::from_ranges(self.eta.clone(), lo, hi)
    }

    /// Whether every point of `other` is a point of `self`.
    pub fn contains_grid(&self, other: &Grid) -> bool {
        self.eta == other.eta && (0..self.dim()).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    /// Indices of all grid points within `η/2` of `y`, ascending.
    pub fn ball(&self, y: &[f64]) -> Vec<usize> {
        let mut per_axis: Vec<Vec<i64>> = Vec::with_capacity(self.dim());
        for (a, &v) in y.iter().enumerate() {
            let e = self.eta[a];
            let centre = (v / e).round();
            if !centre.is_finite() || centre.abs() > 1e15 {
                return Vec::new();
            }
            let c = centre as i64;
            // a few ulps of slack so that round-off never empties a ball
            let radius = e / 2.0 + 4.0 * f64::EPSILON * v.abs().max(e);
            let ks: Vec<i64> = (c - 1..=c + 1)
                .filter(|&k| k >= self.lo[a] && k <= self.hi[a])
                .filter(|&k| (self.coordinate(a, k) - v).abs() <= radius)
                .collect();
            if ks.is_empty() {
                return Vec::new();
            }
            per_axis.push(ks);
        }
        let mut out = Vec::new();
        let mut cursor = vec![0usize; self.dim()];
        loop {
            let k: Vec<i64> = cursor.iter().enumerate().map(|(a, &c)| per_axis[a][c]).collect();
            out.push(self.index_of(&k).expect("filtered to range"));
            let mut a = self.dim();
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                cursor[a] += 1;
                if cursor[a] < per_axis[a].len() {
                    break;
                }
                cursor[a] = 0;
            }
        }
    }
}

/// All points `k·η` inside `b`.
pub fn quantize(b: &BoxSet, eta: f64) -> Result<Grid> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Quantization(format!("pitch must be finite and > 0, got {eta}")));
    }
    let span = b.span();
    if eta > span * (1.0 + PITCH_SLACK) {
        return Err(Error::Quantization(format!("pitch {eta} exceeds the box span {span}")));
    }
    let mut lo = Vec::with_capacity(b.dim());
    let mut hi = Vec::with_capacity(b.dim());
    for a in 0..b.dim() {
        let kl = (b.lower()[a] / eta - PITCH_SLACK).ceil();
        let kh = (b.upper()[a] / eta + PITCH_SLACK).floor();
        if kl.abs() > 1e15 || kh.abs() > 1e15 {
            return Err(Error::Capacity(format!(
                "box axis {a} is too large to grid at pitch {eta}"
            )));
        }
        lo.push(kl as i64);
        hi.push(kh as i64);
    }
    Grid::from_ranges(vec![eta; b.dim()], lo, hi)
}

/// Internal output map of an abstraction.
#[derive(Debug, Clone, PartialEq)]
pub enum AbstractOutput {
    Identity,
    Linear(DMatrix<f64>),
    /// Values per abstract state.
    Table(Vec<Vec<f64>>),
}

/// Finite abstraction with a dense transition table.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteAbstraction {
    state_grid: Grid,
    original_grid: Grid,
    input_grid: Grid,
    internal_inputs: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    h2: AbstractOutput,
    extension_rounds: usize,
    params: BTreeMap<String, String>,
}

impl FiniteAbstraction {
    /// Assembles an abstraction from explicit successor lists, one per
    /// `(state, input, internal)` triple in lexicographic order. Empty lists
    /// are allowed so blocking tables can be represented.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        state_grid: Grid,
        original_grid: Grid,
        input_grid: Grid,
        internal_inputs: Vec<Vec<f64>>,
        successors: Vec<Vec<u32>>,
        h2: AbstractOutput,
        extension_rounds: usize,
        params: BTreeMap<String, String>,
    ) -> Result<Self> {
        if !state_grid.contains_grid(&original_grid) {
            return Err(Error::Structure("state grid does not contain the original grid".into()));
        }
        let p = internal_inputs.first().map_or(0, Vec::len);
        if internal_inputs.is_empty() || internal_inputs.iter().any(|w| w.len() != p) {
            return Err(Error::Structure("internal input set is empty or ragged".into()));
        }
        let triples = state_grid.len() * input_grid.len() * internal_inputs.len();
        if successors.len() != triples {
            return Err(Error::Structure(format!(
                "{} successor lists for {triples} triples",
                successors.len()
            )));
        }
        let n = state_grid.len();
        let mut offsets = Vec::with_capacity(triples + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in successors {
            if list.iter().any(|&t| t as usize >= n) {
                return Err(Error::Structure("successor index out of range".into()));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Structure("successor lists must be strictly ascending".into()));
            }
            targets.extend(list);
            offsets.push(targets.len());
        }
        match &h2 {
            AbstractOutput::Table(t) if t.len() != n => {
                return Err(Error::Structure("output table size differs from state count".into()))
            }
            AbstractOutput::Linear(c) if c.ncols() != state_grid.dim() => {
                return Err(Error::Dimension("output matrix columns differ from state dims".into()))
            }
            _ => {}
        }
        Ok(FiniteAbstraction {
            state_grid,
            original_grid,
            input_grid,
            internal_inputs,
            offsets,
            targets,
            h2,
            extension_rounds,
            params,
        })
    }

    pub fn state_grid(&self) -> &Grid {
        &self.state_grid
    }

    /// Grid of the declared state box before extension.
    pub fn original_grid(&self) -> &Grid {
        &self.original_grid
    }

    pub fn input_grid(&self) -> &Grid {
        &self.input_grid
    }

    pub fn internal_inputs(&self) -> &[Vec<f64>] {
        &self.internal_inputs
    }

    pub fn h2(&self) -> &AbstractOutput {
        &self.h2
    }

    pub fn extension_rounds(&self) -> usize {
        self.extension_rounds
    }

    pub fn params(&self) -> &BTreeMap<String, String> {
        &self.params
    }

    pub fn set_param(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.params.insert(key.into(), value.into());
    }

    pub fn num_states(&self) -> usize {
        self.state_grid.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.input_grid.len()
    }

    pub fn num_internal(&self) -> usize {
        self.internal_inputs.len()
    }

    pub fn num_triples(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    pub fn triple_index(&self, state: usize, input: usize, internal: usize) -> usize {
        (state * self.num_inputs() + input) * self.num_internal() + internal
    }

    pub fn successors(&self, state: usize, input: usize, internal: usize) -> &[u32] {
        let t = self.triple_index(state, input, internal);
        &self.targets[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn state_point(&self, state: usize) -> Vec<f64> {
        self.state_grid.point(state)
    }

    pub fn input_point(&self, input: usize) -> Vec<f64> {
        self.input_grid.point(input)
    }

    /// Abstract state index of a point of the original grid.
    pub fn original_state_index(&self, original_idx: usize) -> usize {
        let k = self.original_grid.multi_index(original_idx);
        self.state_grid.index_of(&k).expect("original grid is contained")
    }

    /// `ĥ2(x̂)` for an abstract state index.
    pub fn h2_value(&self, state: usize) -> Vec<f64> {
        match &self.h2 {
            AbstractOutput::Identity => self.state_point(state),
            AbstractOutput::Linear(c) => mat_vec(c, &self.state_point(state)),
            AbstractOutput::Table(t) => t[state].clone(),
        }
    }

    /// `ĥ2` over the original grid, deduplicated exactly.
    pub fn h2_original_image(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = (0..self.original_grid.len())
            .map(|i| self.h2_value(self.original_state_index(i)))
            .collect();
        out.sort_by(|a, b| lex_cmp(a, b));
        out.dedup();
        out
    }

    /// Index of the internal-input point nearest to `w` and its ∞-distance.
    pub fn nearest_internal(&self, w: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.internal_inputs.iter().enumerate() {
            let d = inf_dist(p, w);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Successor lists in triple order.
    pub fn successor_lists(&self) -> Vec<Vec<u32>> {
        self.offsets
            .windows(2)
            .map(|w| self.targets[w[0]..w[1]].to_vec())
            .collect()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Knobs for [`build_abstraction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbstractionOptions {
    pub max_extension_rounds: usize,
    pub max_triples: usize,
}

impl Default for AbstractionOptions {
    fn default() -> Self {
        AbstractionOptions {
            max_extension_rounds: 64,
            max_triples: 50_000_000,
        }
    }
}

fn closed_loop_image(
    sub: &SubsystemModel,
    pcert: &PassivityCertificate,
    x: &[f64],
    u_hat: &[f64],
    w_hat: &[f64],
) -> Vec<f64> {
    sub.step_unchecked(x, &pcert.feedback.refine(x, u_hat), w_hat)
}

fn image_box(
    sub: &SubsystemModel,
    pcert: &PassivityCertificate,
    grid: &Grid,
    inputs: &[Vec<f64>],
    internal: &[Vec<f64>],
) -> BoxSet {
    let n = grid.dim();
    let (lo, hi) = (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let x = grid.point(s);
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![f64::NEG_INFINITY; n];
            for u in inputs {
                for w in internal {
                    let y = closed_loop_image(sub, pcert, &x, u, w);
                    for a in 0..n {
                        lo[a] = lo[a].min(y[a]);
                        hi[a] = hi[a].max(y[a]);
                    }
                }
            }
            (lo, hi)
        })
        .reduce(
            || (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]),
            |(mut l1, mut h1), (l2, h2)| {
                for a in 0..n {
                    l1[a] = l1[a].min(l2[a]);
                    h1[a] = h1[a].max(h2[a]);
                }
                (l1, h1)
            },
        );
    BoxSet::new(lo, hi).unwrap_or_else(|_| grid.covered_box())
}

/// Abstraction of `sub` under the feedback of `pcert` with state pitch `eta`,
/// input pitch `mu1` and the given internal-input points.
pub fn build_abstraction(
    sub: &SubsystemModel,
    pcert: &PassivityCertificate,
    eta: f64,
    mu1: f64,
    internal_inputs: Vec<Vec<f64>>,
    options: &AbstractionOptions,
) -> Result<FiniteAbstraction> {
    let state_box = sub.state_box()?;
    if internal_inputs.is_empty() {
        return Err(Error::Configuration("internal input set is empty".into()));
    }
    if internal_inputs.iter().any(|w| w.len() != sub.internal_dim()) {
        return Err(Error::Dimension(format!(
            "internal inputs must have {} components",
            sub.internal_dim()
        )));
    }
    if pcert.state_dim() != sub.state_dim() || pcert.feedback.gain.nrows() != sub.input_dim() {
        return Err(Error::Dimension(
            "passivity certificate does not match subsystem".into(),
        ));
    }
    let original = quantize(state_box, eta)?;
    let input_grid = quantize(sub.input_box(), mu1)?;
    let inputs = input_grid.points();

    let mut grid = original.clone();
    let mut rounds = 0;
    loop {
        let images = image_box(sub, pcert, &grid, &inputs, &internal_inputs);
        let extended = grid.extended_to(&images)?;
        if extended == grid {
            break;
        }
        rounds += 1;
        if rounds > options.max_extension_rounds {
            return Err(Error::Capacity(format!(
                "state grid still growing after {} extension rounds; closed-loop images are unbounded",
                options.max_extension_rounds
            )));
        }
        grid = extended;
        let triples = grid
            .len()
            .saturating_mul(inputs.len())
            .saturating_mul(internal_inputs.len());
        if triples > options.max_triples {
            return Err(Error::Capacity(format!(
                "{triples} transition triples exceed the cap of {}; use a coarser pitch",
                options.max_triples
            )));
        }
    }

    let per_state: Vec<Result<Vec<Vec<u32>>>> = (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let x = grid.point(s);
            let mut lists = Vec::with_capacity(inputs.len() * internal_inputs.len());
            for (ui, u) in inputs.iter().enumerate() {
                for (wi, w) in internal_inputs.iter().enumerate() {
                    let y = closed_loop_image(sub, pcert, &x, u, w);
                    let succ: Vec<u32> = grid.ball(&y).into_iter().map(|i| i as u32).collect();
                    if succ.is_empty() {
                        return Err(Error::Blocking {
                            state: s,
                            input: ui,
                            internal: wi,
                        });
                    }
                    lists.push(succ);
                }
            }
            Ok(lists)
        })
        .collect();
    let mut successors = Vec::with_capacity(grid.len() * inputs.len() * internal_inputs.len());
    for part in per_state {
        successors.extend(part?);
    }

    let h2 = match sub.h2() {
        OutputMap::Identity => AbstractOutput::Identity,
        OutputMap::Linear(c) => AbstractOutput::Linear(c.clone()),
        OutputMap::General { .. } => {
            AbstractOutput::Table((0..grid.len()).map(|s| sub.h2().eval(&grid.point(s))).collect())
        }
    };
    let mut params = BTreeMap::new();
    params.insert("subsystem".to_string(), sub.name().to_string());
    FiniteAbstraction::from_parts(
        grid,
        original,
        input_grid,
        internal_inputs,
        successors,
        h2,
        rounds,
        params,
    )
}

/// Box holding every argument of the storage function met when checking the
/// abstraction: the state box, the abstract states and their images padded by
/// `η/2`, and the closed-loop reach of the state box under abstract inputs.
pub fn certified_domain(sub: &SubsystemModel, pcert: &PassivityCertificate, abs: &FiniteAbstraction) -> Result<BoxSet> {
    let Dynamics::Linear { a, b, d } = sub.dynamics() else {
        return Err(Error::UnsupportedDynamics(format!(
            "subsystem {}: reach boxes need linear dynamics",
            sub.name()
        )));
    };
    let closed = a + b * &pcert.feedback.gain;
    let parts = [
        linear_image(&closed, sub.state_box()?)?,
        linear_image(b, &abs.input_grid().covered_box())?,
        linear_image(d, sub.internal_box())?,
    ];
    let k0 = mat_vec(b, &pcert.feedback.offset);
    let n = sub.state_dim();
    let lower = (0..n)
        .map(|i| k0[i] + parts.iter().map(|p| p.lower()[i]).sum::<f64>())
        .collect();
    let upper = (0..n)
        .map(|i| k0[i] + parts.iter().map(|p| p.upper()[i]).sum::<f64>())
        .collect();
    let reach = BoxSet::new(lower, upper)?;
    let pad = abs.state_grid().eta().iter().fold(0.0_f64, |m, e| m.max(*e)) / 2.0;
    Ok(sub
        .state_box()?
        .hull(&abs.state_grid().covered_box().padded(pad))
        .hull(&reach))
}

fn dedup_points(mut pts: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| lex_cmp(a, b));
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(q) if inf_dist(q, &p) <= tol => {}
            _ => out.push(p),
        }
    }
    out
}

/// Exact image `{Σ_j M̂_{ij} y_j | y_j ∈ Y_j}` of one internal-input block,
/// accumulated as a Minkowski sum over subsystems.
pub fn block_image(
    m_hat: &DMatrix<f64>,
    rows: std::ops::Range<usize>,
    output_sets: &[Vec<Vec<f64>>],
    dedup_tol: f64,
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let width = rows.len();
    let mut acc: Vec<Vec<f64>> = vec![vec![0.0; width]];
    let mut col = 0;
    for set in output_sets {
        let dim = set.first().map_or(0, Vec::len);
        let block = m_hat.view((rows.start, col), (width, dim)).into_owned();
        col += dim;
        if block.iter().all(|v| *v == 0.0) {
            continue;
        }
        let contrib = dedup_points(set.iter().map(|y| mat_vec(&block, y)).collect(), dedup_tol);
        if acc.len().saturating_mul(contrib.len()) > cap.saturating_mul(16) {
            return Err(Error::Capacity(format!(
                "internal input set for rows {rows:?} would exceed {cap} points; use a coarser pitch"
            )));
        }
        let mut next = Vec::with_capacity(acc.len() * contrib.len());
        for a in &acc {
            for c in &contrib {
                next.push(a.iter().zip(c).map(|(x, y)| x + y).collect());
            }
        }
        acc = dedup_points(next, dedup_tol);
        if acc.len() > cap {
            return Err(Error::Capacity(format!(
                "internal input set for rows {rows:?} has {} points, cap is {cap}; use a coarser pitch",
                acc.len()
            )));
        }
    }
    Ok(acc)
}

/// Internal-input sets `Ŵ_i = proj_i(M̂ · ∏ Ŷ2_j)` so that the abstract
/// coupling maps every abstract output combination into `∏ Ŵ_i`.
pub fn build_internal_input_sets(
    m_hat: &DMatrix<f64>,
    output_sets: &[Vec<Vec<f64>>],
    block_dims: &[usize],
    dedup_tol: f64,
    cap: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let cols: usize = output_sets.iter().map(|s| s.first().map_or(0, Vec::len)).sum();
    let rows: usize = block_dims.iter().sum();
    if output_sets.iter().any(Vec::is_empty) {
        return Err(Error::Structure("empty abstract output set".into()));
    }
    if m_hat.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "abstract coupling is {}x{}, expected {rows}x{cols}",
            m_hat.nrows(),
            m_hat.ncols()
        )));
    }
    let mut start = 0;
    let mut out = Vec::with_capacity(block_dims.len());
    for &d in block_dims {
        out.push(block_image(m_hat, start..start + d, output_sets, dedup_tol, cap)?);
        start += d;
    }
    Ok(out)
}

/// Result of [`check_nonblocking`].
#[derive(Debug, Clone, PartialEq)]
pub struct NonblockingReport {
    pub triples: usize,
    pub blocking: Vec<(usize, usize, usize)>,
}

/// Lists every `(state, input, internal)` triple without successors.
pub fn check_nonblocking(abs: &FiniteAbstraction) -> Result<NonblockingReport> {
    if abs.num_states() == 0 || abs.num_inputs() == 0 || abs.num_internal() == 0 {
        return Err(Error::Structure(
            "abstraction has no states, inputs or internal inputs".into(),
        ));
    }
    let mut blocking = Vec::new();
    for s in 0..abs.num_states() {
        for u in 0..abs.num_inputs() {
            for w in 0..abs.num_internal() {
                if abs.successors(s, u, w).is_empty() {
                    blocking.push((s, u, w));
                }
            }
        }
    }
    Ok(NonblockingReport {
        triples: abs.num_triples(),
        blocking,
    })
}

const DUMP_MAGIC: &str = "symabs-abstraction 1";

/// Upper bound on triples accepted from a dump.
pub const DUMP_MAX_TRIPLES: usize = 10_000_000;

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Text dump; floats use the shortest round-trip representation.
pub fn write_dump(abs: &FiniteAbstraction) -> String {
    let mut s = String::new();
    let sg = &abs.state_grid;
    let _ = writeln!(s, "{DUMP_MAGIC}");
    let _ = writeln!(
        s,
        "dims {} {} {}",
        sg.dim(),
        abs.input_grid.dim(),
        abs.internal_inputs.first().map_or(0, Vec::len)
    );
    let _ = writeln!(
        s,
        "state_grid eta {} lo {} hi {}",
        join(&sg.eta),
        join(&sg.lo),
        join(&sg.hi)
    );
    let _ = writeln!(
        s,
        "original_grid lo {} hi {}",
        join(&abs.original_grid.lo),
        join(&abs.original_grid.hi)
    );
    let ig = &abs.input_grid;
    let _ = writeln!(
        s,
        "input_grid eta {} lo {} hi {}",
        join(&ig.eta),
        join(&ig.lo),
        join(&ig.hi)
    );
    let _ = writeln!(s, "internal {}", abs.internal_inputs.len());
    for w in &abs.internal_inputs {
        let _ = writeln!(s, "w {}", join(w));
    }
    match &abs.h2 {
        AbstractOutput::Identity => {
            let _ = writeln!(s, "h2 identity");
        }
        AbstractOutput::Linear(c) => {
            let entries: Vec<f64> = (0..c.nrows())
                .flat_map(|r| (0..c.ncols()).map(move |k| c[(r, k)]))
                .collect();
            let _ = writeln!(s, "h2 linear {} {} {}", c.nrows(), c.ncols(), join(&entries));
        }
        AbstractOutput::Table(t) => {
            let _ = writeln!(s, "h2 table {}", t.len());
            for row in t {
                let _ = writeln!(s, "y {}", join(row));
            }
        }
    }
    let _ = writeln!(s, "extension_rounds {}", abs.extension_rounds);
    for (k, v) in &abs.params {
        let _ = writeln!(s, "param {k} {v}");
    }
    let _ = writeln!(s, "transitions {}", abs.num_triples());
    for st in 0..abs.num_states() {
        for u in 0..abs.num_inputs() {
            for w in 0..abs.num_internal() {
                let _ = writeln!(s, "{st} {u} {w} -> {}", join(abs.successors(st, u, w)));
            }
        }
    }
    let _ = writeln!(s, "end");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("invalid number `{tok}`")))
    }

    fn float(&self, tok: &str) -> Result<f64> {
        let v: f64 = self.num(tok)?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite value `{tok}`")));
        }
        Ok(v)
    }

    fn floats(&self, toks: &[&str]) -> Result<Vec<f64>> {
        toks.iter().map(|t| self.float(t)).collect()
    }
}

fn split_sections<'a>(lines: &Lines<'_>, toks: &[&'a str], keys: &[&str], dim: usize) -> Result<Vec<Vec<&'a str>>> {
    let mut out = Vec::new();
    let mut rest = toks;
    for key in keys {
        if rest.first() != Some(key) || rest.len() < 1 + dim {
            return Err(lines.err(format!("expected `{key}` followed by {dim} values")));
        }
        out.push(rest[1..1 + dim].to_vec());
        rest = &rest[1 + dim..];
    }
    if !rest.is_empty() {
        return Err(lines.err("trailing tokens"));
    }
    Ok(out)
}

fn parse_grid(lines: &mut Lines<'_>, key: &str, dim: usize) -> Result<Grid> {
    let toks = lines.keyed(key)?;
    let parts = split_sections(lines, &toks, &["eta", "lo", "hi"], dim)?;
    let eta = lines.floats(&parts[0])?;
    let lo = parts[1].iter().map(|t| lines.num(t)).collect::<Result<Vec<i64>>>()?;
    let hi = parts[2].iter().map(|t| lines.num(t)).collect::<Result<Vec<i64>>>()?;
    Grid::from_ranges(eta, lo, hi).map_err(|e| lines.err(e.to_string()))
}

/// Inverse of [`write_dump`].
pub fn parse_dump(text: &str) -> Result<FiniteAbstraction> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next()? != DUMP_MAGIC {
        return Err(lines.err(format!("expected header `{DUMP_MAGIC}`")));
    }
    let dims = lines.keyed("dims")?;
    if dims.len() != 3 {
        return Err(lines.err("`dims` needs three values"));
    }
    let (n, m, p): (usize, usize, usize) = (lines.num(dims[0])?, lines.num(dims[1])?, lines.num(dims[2])?);
    if n == 0 || n > 64 || m > 64 || p > 64 {
        return Err(lines.err("dimensions must lie in 1..=64 (state) and 0..=64"));
    }
    let state_grid = parse_grid(&mut lines, "state_grid", n)?;
    let toks = lines.keyed("original_grid")?;
    let parts = split_sections(&lines, &toks, &["lo", "hi"], n)?;
    let olo = parts[0].iter().map(|t| lines.num(t)).collect::<Result<Vec<i64>>>()?;
    let ohi = parts[1].iter().map(|t| lines.num(t)).collect::<Result<Vec<i64>>>()?;
    let original_grid = Grid::from_ranges(state_grid.eta.clone(), olo, ohi).map_err(|e| lines.err(e.to_string()))?;
    let input_grid = parse_grid(&mut lines, "input_grid", m)?;

    let count = lines.keyed("internal")?;
    let count: usize = match count.as_slice() {
        [c] => lines.num(c)?,
        _ => return Err(lines.err("`internal` needs one count")),
    };
    let mut internal = Vec::new();
    for _ in 0..count {
        let w = lines.keyed("w")?;
        if w.len() != p {
            return Err(lines.err(format!("internal input needs {p} values")));
        }
        internal.push(lines.floats(&w)?);
    }

    let h2_toks = lines.keyed("h2")?;
    let h2 = match h2_toks.as_slice() {
        ["identity"] => AbstractOutput::Identity,
        ["linear", r, c, rest @ ..] => {
            let (r, c): (usize, usize) = (lines.num(r)?, lines.num(c)?);
            if r.checked_mul(c) != Some(rest.len()) {
                return Err(lines.err("linear output matrix has the wrong number of entries"));
            }
            AbstractOutput::Linear(DMatrix::from_row_slice(r, c, &lines.floats(rest)?))
        }
        ["table", rows] => {
            let rows: usize = lines.num(rows)?;
            if rows != state_grid.len() {
                return Err(lines.err("output table size differs from state count"));
            }
            let mut t = Vec::new();
            for _ in 0..rows {
                let y = lines.keyed("y")?;
                t.push(lines.floats(&y)?);
            }
            AbstractOutput::Table(t)
        }
        _ => return Err(lines.err("unknown `h2` form")),
    };

    let rounds = match lines.keyed("extension_rounds")?.as_slice() {
        [r] => lines.num(r)?,
        _ => return Err(lines.err("`extension_rounds` needs one value")),
    };
    let mut params = BTreeMap::new();
    let triples = loop {
        let l = lines.next()?;
        if let Some(rest) = l.strip_prefix("param ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            params.insert(k.to_string(), v.to_string());
        } else if let Some(rest) = l.strip_prefix("transitions ") {
            break lines.num::<usize>(rest.trim())?;
        } else {
            return Err(lines.err("expected `param` or `transitions`"));
        }
    };
    let expected = state_grid
        .len()
        .checked_mul(input_grid.len())
        .and_then(|v| v.checked_mul(internal.len()))
        .ok_or_else(|| lines.err("triple count overflows"))?;
    if triples != expected || triples > DUMP_MAX_TRIPLES {
        return Err(lines.err(format!(
            "transition count {triples} differs from {expected} triples or exceeds {DUMP_MAX_TRIPLES}"
        )));
    }
    let (nu, nw) = (input_grid.len(), internal.len());
    let mut successors = Vec::new();
    for t in 0..triples {
        let l = lines.next()?;
        let (lhs, rhs) = l.split_once("->").ok_or_else(|| lines.err("missing `->`"))?;
        let idx: Vec<&str> = lhs.split_whitespace().collect();
        let want = [t / (nu * nw), (t / nw) % nu, t % nw];
        if idx.len() != 3 || (0..3).any(|i| idx[i].parse::<usize>().ok() != Some(want[i])) {
            return Err(lines.err(format!("expected triple {} {} {}", want[0], want[1], want[2])));
        }
        let succ = rhs
            .split_whitespace()
            .map(|t| lines.num::<u32>(t))
            .collect::<Result<Vec<u32>>>()?;
        successors.push(succ);
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    FiniteAbstraction::from_parts(
        state_grid,
        original_grid,
        input_grid,
        internal,
        successors,
        h2,
        rounds,
        params,
    )
    .map_err(|e| lines.err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::passivity_for_linear;

    fn sub(input_hi: f64) -> SubsystemModel {
        SubsystemModel::integrator(
            "s",
            BoxSet::cube(1, 0.0, 1.0).unwrap(),
            BoxSet::cube(1, 0.0, input_hi).unwrap(),
            BoxSet::cube(1, -0.5, 0.5).unwrap(),
        )
        .unwrap()
    }

    fn pts(g: &Grid) -> Vec<f64> {
        g.points().into_iter().map(|p| p[0]).collect()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(
            pts(&quantize(&BoxSet::cube(1, 0.0, 1.0).unwrap(), 0.5).unwrap()),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            pts(&quantize(&BoxSet::cube(1, -1.0, 1.0).unwrap(), 1.0).unwrap()),
            vec![-1.0, 0.0, 1.0]
        );
        let r = quantize(&BoxSet::cube(1, 0.2, 0.3).unwrap(), 0.5);
        assert!(matches!(r, Err(Error::Quantization(_))));
        assert_eq!(quantize(&BoxSet::cube(1, 0.0, 1.0).unwrap(), 0.1).unwrap().len(), 11);
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::from_ranges(vec![0.5, 0.25], vec![-1, 2], vec![1, 5]).unwrap();
        assert_eq!(g.len(), 12);
        for i in 0..g.len() {
            assert_eq!(g.index_of(&g.multi_index(i)), Some(i));
        }
        assert_eq!(g.multi_index(1), vec![-1, 3]);
    }

    #[test]
    fn successor_example() {
        let s = sub(0.1);
        let c = passivity_for_linear(&s, 0.5).unwrap();
        let a = build_abstraction(&s, &c, 0.5, 0.1, vec![vec![0.0]], &AbstractionOptions::default()).unwrap();
        let x = a.state_grid().index_of(&[1]).unwrap();
        let u = a.input_grid().index_of(&[1]).unwrap();
        // image 0.5 − 0.25 + 0.1 = 0.35
        let succ: Vec<Vec<f64>> = a
            .successors(x, u, 0)
            .iter()
            .map(|&t| a.state_point(t as usize))
            .collect();
        assert_eq!(succ, vec![vec![0.5]]);
    }

    #[test]
    fn ties_are_included() {
        let g = quantize(&BoxSet::cube(1, 0.0, 1.0).unwrap(), 0.5).unwrap();
        let b: Vec<f64> = g.ball(&[0.25]).iter().map(|&i| g.point(i)[0]).collect();
        assert_eq!(b, vec![0.0, 0.5]);
    }

    #[test]
    fn grid_extends_to_cover_images() {
        let s = sub(0.8);
        let c = passivity_for_linear(&s, 0.5).unwrap();
        let a = build_abstraction(&s, &c, 0.5, 0.8, vec![vec![0.0]], &AbstractionOptions::default()).unwrap();
        assert!(a.state_grid().contains_grid(a.original_grid()));
        let x = a.state_grid().index_of(&[2]).unwrap();
        let u = a.input_grid().index_of(&[1]).unwrap();
        // image 1 − 0.5 + 0.8 = 1.3
        let succ: Vec<Vec<f64>> = a
            .successors(x, u, 0)
            .iter()
            .map(|&t| a.state_point(t as usize))
            .collect();
        assert_eq!(succ, vec![vec![1.5]]);
        assert!(check_nonblocking(&a).unwrap().blocking.is_empty());
    }

    #[test]
    fn internal_sets_examples() {
        let zero = build_internal_input_sets(
            &DMatrix::zeros(2, 2),
            &[vec![vec![0.0], vec![1.0]], vec![vec![0.5]]],
            &[1, 1],
            DEFAULT_DEDUP_TOL,
            DEFAULT_SET_CAP,
        )
        .unwrap();
        assert_eq!(zero, vec![vec![vec![0.0]], vec![vec![0.0]]]);

        let scaled = build_internal_input_sets(
            &DMatrix::from_element(1, 1, -0.5),
            &[vec![vec![0.0], vec![0.5], vec![1.0]]],
            &[1],
            DEFAULT_DEDUP_TOL,
            DEFAULT_SET_CAP,
        )
        .unwrap();
        assert_eq!(scaled[0], vec![vec![-0.5], vec![-0.25], vec![0.0]]);
    }

    #[test]
    fn internal_set_cap_enforced() {
        let big: Vec<Vec<f64>> = (0..200).map(|k| vec![k as f64 * 0.013]).collect();
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 0.001]);
        let r = build_internal_input_sets(&m, &[big.clone(), big], &[1], 0.0, 1000);
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn blocking_scan() {
        let g = quantize(&BoxSet::cube(1, 0.0, 1.0).unwrap(), 0.5).unwrap();
        let ig = quantize(&BoxSet::cube(1, 0.0, 1.0).unwrap(), 1.0).unwrap();
        let mut lists = vec![vec![0u32]; g.len() * ig.len()];
        lists[3].clear();
        let a = FiniteAbstraction::from_parts(
            g.clone(),
            g,
            ig,
            vec![vec![0.0]],
            lists,
            AbstractOutput::Identity,
            0,
            BTreeMap::new(),
        )
        .unwrap();
        let r = check_nonblocking(&a).unwrap();
        assert_eq!(r.blocking, vec![(1, 1, 0)]);
    }

    #[test]
    fn dump_round_trip() {
        let s = sub(0.1);
        let c = passivity_for_linear(&s, 0.5).unwrap();
        let mut a = build_abstraction(
            &s,
            &c,
            0.1,
            0.1,
            vec![vec![-0.375], vec![0.1], vec![1.0 / 3.0]],
            &AbstractionOptions::default(),
        )
        .unwrap();
        a.set_param("feedback_gain", "0.5");
        let text = write_dump(&a);
        let b = parse_dump(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(write_dump(&b), text);
    }

    #[test]
    fn dump_errors_carry_line_numbers() {
        let s = sub(0.1);
        let c = passivity_for_linear(&s, 0.5).unwrap();
        let a = build_abstraction(&s, &c, 0.5, 0.1, vec![vec![0.0]], &AbstractionOptions::default()).unwrap();
        let text = write_dump(&a).replace("h2 identity", "h2 bogus");
        match parse_dump(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_dump("").is_err());
    }
}
