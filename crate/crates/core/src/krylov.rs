//! Lanczos approximation of `exp(-i H dt) v` for real symmetric `H`.
//!
//! Each step builds an orthonormal Krylov basis (with full
//! reorthogonalization), diagonalizes the projected tridiagonal matrix once,
//! and accepts the longest step whose a-posteriori estimate
//! `beta_m |[exp(-i T dt) e_1]_m|` stays below the tolerance. Too long a step
//! is halved until it passes. The basis does not depend on `dt`, so every
//! sample time inside an accepted step is read off the same basis.

use std::sync::Mutex;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tridiag::{self, SpectralDecomposition};

/// Real symmetric operator acting on complex vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovSettings {
    /// Largest Krylov subspace dimension.
    pub max_dim: usize,
    /// Bound on the local error estimate per step.
    pub tolerance: f64,
    /// Give up after this many successive halvings of a step.
    pub max_halvings: u32,
    /// Orthogonalize every new vector against the whole basis. Plain
    /// three-term recurrence otherwise.
    pub full_reorthogonalization: bool,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self { max_dim: 30, tolerance: 1e-10, max_halvings: 60, full_reorthogonalization: true }
    }
}

impl KrylovSettings {
    /// For large sparse operators: a wider subspace means fewer steps, and
    /// the plain recurrence matched full reorthogonalization to 1e-12 on
    /// disordered sectors at a third of the cost.
    pub fn sparse() -> Self {
        Self { max_dim: 60, full_reorthogonalization: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_dim < 2 {
            return Err(invalid("krylov.max_dim", "must be at least 2"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(invalid("krylov.tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Bookkeeping from one [`evolve`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub steps: usize,
    pub matvecs: usize,
    pub max_error_estimate: f64,
}

struct Basis {
    vectors: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Invariant subspace found; the projection is exact.
    exhausted: bool,
    /// Norm of the vector the basis was started from.
    beta0: f64,
}

/// The projected matrix `T = tridiag(beta, alpha, beta)`, diagonalized.
struct Projection {
    dec: SpectralDecomposition,
    /// `beta_m`, or zero when the subspace is invariant.
    residual: f64,
}

impl Projection {
    fn new(basis: &Basis) -> Result<Self> {
        let m = basis.alpha.len();
        let dec = tridiag::eigendecompose(&basis.alpha, &basis.beta[..m - 1])?;
        let residual = if basis.exhausted { 0.0 } else { basis.beta[m - 1] };
        Ok(Self { dec, residual })
    }

    /// `exp(-i T dt) e_1`.
    fn coeffs(&self, dt: f64) -> Vec<C64> {
        let m = self.dec.dim();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for j in 0..m {
            let ev = self.dec.eigenvector(j);
            let phase = C64::from_polar(ev[0], -self.dec.eigenvalues()[j] * dt);
            for (o, &u) in out.iter_mut().zip(ev) {
                *o += phase * u;
            }
        }
        out
    }

    fn error(&self, dt: f64) -> f64 {
        if self.residual == 0.0 {
            return 0.0;
        }
        // The overlaps u_0j u_mj sum to zero, so subtracting 1 from each
        // phase removes the cancellation that would otherwise leave an
        // eps * beta_m floor. Shifting by the mean eigenvalue keeps the
        // phases small.
        let m = self.dec.dim();
        let ev = self.dec.eigenvalues();
        let shift = ev.iter().sum::<f64>() / m as f64;
        let last: C64 = (0..m)
            .map(|j| {
                let u = self.dec.eigenvector(j);
                let x = (ev[j] - shift) * dt;
                let half = (0.5 * x).sin();
                C64::new(-2.0 * half * half, -x.sin()) * (u[0] * u[m - 1])
            })
            .sum();
        self.residual * last.norm()
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Lanczos driver reused across steps of one propagation.
pub struct KrylovStepper<'a> {
    op: &'a dyn LinearOperator,
    settings: KrylovSettings,
    work: Vec<C64>,
    /// Length of the last accepted step when it needed the whole subspace.
    full_step: Option<f64>,
    /// Basis vectors handed back after use.
    pool: Vec<Vec<C64>>,
    pub stats: StepStats,
}

impl<'a> KrylovStepper<'a> {
    pub fn new(op: &'a dyn LinearOperator, settings: KrylovSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            op,
            settings,
            work: vec![C64::new(0.0, 0.0); op.dim()],
            full_step: None,
            pool: Vec::new(),
            stats: StepStats::default(),
        })
    }

    /// Extends the basis by one vector.
    fn grow(&mut self, basis: &mut Basis) {
        let j = basis.vectors.len() - 1;
        self.op.apply(&basis.vectors[j], &mut self.work);
        self.stats.matvecs += 1;
        let w = &mut self.work;
        let a = dot(&basis.vectors[j], w).re;
        basis.alpha.push(a);
        let vj = &basis.vectors[j];
        let mut b = if j > 0 {
            let bp = basis.beta[j - 1];
            let vp = &basis.vectors[j - 1];
            let mut acc = 0.0;
            for ((wi, x), y) in w.iter_mut().zip(vj).zip(vp) {
                *wi -= x * a + y * bp;
                acc += wi.norm_sqr();
            }
            acc.sqrt()
        } else {
            let mut acc = 0.0;
            for (wi, x) in w.iter_mut().zip(vj) {
                *wi -= x * a;
                acc += wi.norm_sqr();
            }
            acc.sqrt()
        };
        if self.settings.full_reorthogonalization {
            // Classical Gram-Schmidt against the whole basis, repeated once
            // if the pass cancelled most of the vector.
            for _ in 0..2 {
                let before = b;
                for v in &basis.vectors {
                    let h = dot(v, w);
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= vi * h;
                    }
                }
                b = norm(w);
                if b > 0.5 * before {
                    break;
                }
            }
        }
        basis.beta.push(b);
        let scale = basis.alpha.iter().chain(basis.beta.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        if b <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            basis.exhausted = true;
            return;
        }
        let inv = 1.0 / b;
        let mut next = self.pool.pop().unwrap_or_default();
        next.clear();
        next.extend(w.iter().map(|x| x * inv));
        basis.vectors.push(next);
    }

    fn recycle(&mut self, basis: Basis) {
        self.pool.extend(basis.vectors);
    }

    /// Basis at `v`, grown until a step of `horizon` meets the tolerance or
    /// the subspace limit is reached.
    fn build(&mut self, v: &[C64], horizon: f64) -> Result<Option<(Basis, Projection)>> {
        let beta0 = norm(v);
        if beta0 == 0.0 {
            return Ok(None);
        }
        let inv = 1.0 / beta0;
        let mut first = self.pool.pop().unwrap_or_default();
        first.clear();
        first.extend(v.iter().map(|x| x * inv));
        let mut basis = Basis { vectors: vec![first], alpha: Vec::new(), beta: Vec::new(), exhausted: false, beta0 };
        let max_dim = self.settings.max_dim.min(self.op.dim());
        // Far beyond what the last full subspace managed, the early
        // convergence checks would only cost time.
        let hopeless = self.full_step.is_some_and(|s| horizon.abs() > 2.0 * s.abs());
        loop {
            self.grow(&mut basis);
            let m = basis.alpha.len();
            if !(basis.exhausted || m == max_dim || (!hopeless && m >= 4 && m.is_multiple_of(4))) {
                continue;
            }
            let proj = Projection::new(&basis)?;
            if basis.exhausted || m == max_dim || proj.error(horizon) * beta0 <= self.settings.tolerance {
                return Ok(Some((basis, proj)));
            }
        }
    }

    /// Longest step toward `horizon` (either sign) that meets the tolerance:
    /// halve until it passes, then bisect back toward the failing length.
    fn reach(&self, basis: &Basis, proj: &Projection, horizon: f64) -> Result<f64> {
        let tol = self.settings.tolerance / basis.beta0;
        if proj.error(horizon) <= tol {
            return Ok(horizon);
        }
        let mut bad = horizon;
        let mut good = horizon;
        let mut halvings = 0;
        loop {
            good *= 0.5;
            halvings += 1;
            if halvings > self.settings.max_halvings {
                return Err(Error::KrylovTolerance { time: 0.0, step: good, residual: proj.error(good) * basis.beta0 });
            }
            if proj.error(good) <= tol {
                break;
            }
            bad = good;
        }
        for _ in 0..4 {
            let mid = 0.5 * (good + bad);
            if proj.error(mid) <= tol {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    }

    fn combine(basis: &Basis, coeffs: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for (c, bv) in coeffs.iter().zip(&basis.vectors) {
            let c = c * basis.beta0;
            for (x, b) in out.iter_mut().zip(bv) {
                *x += c * b;
            }
        }
    }

    fn record(&mut self, basis: &Basis, proj: &Projection, dt: f64) {
        let full = basis.alpha.len() == self.settings.max_dim.min(self.op.dim()) && !basis.exhausted;
        self.full_step = full.then_some(dt);
        self.stats.steps += 1;
        self.stats.max_error_estimate = self.stats.max_error_estimate.max(proj.error(dt) * basis.beta0);
    }

    /// Advances `v` in place by at most `dt`; returns the time actually taken.
    pub fn step(&mut self, v: &mut [C64], dt: f64) -> Result<f64> {
        if dt == 0.0 {
            return Ok(dt);
        }
        let Some((basis, proj)) = self.build(v, dt)? else {
            return Ok(dt);
        };
        let taken = self.reach(&basis, &proj, dt)?;
        self.record(&basis, &proj, taken);
        Self::combine(&basis, &proj.coeffs(taken), v);
        self.recycle(basis);
        Ok(taken)
    }

    /// Advances `v` by exactly `dt` (either sign) through adaptive substeps.
    pub fn advance(&mut self, v: &mut [C64], dt: f64) -> Result<()> {
        let mut remaining = dt;
        let mut elapsed = 0.0;
        while remaining.abs() > 4.0 * f64::EPSILON * dt.abs() {
            // report the failing substep's start time
            let taken = self.step(v, remaining).map_err(|e| match e {
                Error::KrylovTolerance { step, residual, .. } => {
                    Error::KrylovTolerance { time: elapsed, step, residual }
                }
                other => other,
            })?;
            elapsed += taken;
            remaining = dt - elapsed;
        }
        Ok(())
    }
}

/// Propagates `v0` through the ascending `times` (relative to `v0` at time
/// zero), calling `visit(i, state)` at every sample.
pub fn evolve(
    op: &dyn LinearOperator,
    settings: KrylovSettings,
    v0: &[C64],
    times: &[f64],
    visit: impl FnMut(usize, &[C64]) -> Result<()>,
) -> Result<StepStats> {
    evolve_from(op, settings, 0.0, v0, times, visit)
}

/// Like [`evolve`] with `v0` taken at time `t0 <= times[0]`.
pub fn evolve_from(
    op: &dyn LinearOperator,
    settings: KrylovSettings,
    t0: f64,
    v0: &[C64],
    times: &[f64],
    mut visit: impl FnMut(usize, &[C64]) -> Result<()>,
) -> Result<StepStats> {
    if v0.len() != op.dim() {
        return Err(Error::Dimension { expected: op.dim(), got: v0.len() });
    }
    let Some(&last) = times.last() else {
        return Ok(StepStats::default());
    };
    if times[0] < t0 {
        return Err(invalid("times", "samples must not precede the starting time"));
    }
    let mut stepper = KrylovStepper::new(op, settings)?;
    let mut v = v0.to_vec();
    let mut sample = vec![C64::new(0.0, 0.0); v.len()];
    let mut now = t0;
    let mut i = 0;
    while i < times.len() {
        if times[i] == now {
            visit(i, &v)?;
            i += 1;
            continue;
        }
        let Some((basis, proj)) = stepper.build(&v, last - now)? else {
            // The zero vector stays zero.
            visit(i, &v)?;
            i += 1;
            continue;
        };
        let taken = stepper.reach(&basis, &proj, last - now).map_err(|e| match e {
            Error::KrylovTolerance { step, residual, .. } => Error::KrylovTolerance { time: now, step, residual },
            other => other,
        })?;
        stepper.record(&basis, &proj, taken);
        let end = if taken == last - now { last } else { now + taken };
        while i < times.len() && times[i] < end {
            KrylovStepper::combine(&basis, &proj.coeffs(times[i] - now), &mut sample);
            visit(i, &sample)?;
            i += 1;
        }
        KrylovStepper::combine(&basis, &proj.coeffs(end - now), &mut v);
        stepper.recycle(basis);
        now = end;
    }
    Ok(stepper.stats)
}

/// Calls with at least this many samples leave checkpoints behind.
const CHECKPOINT_MIN_SAMPLES: usize = 64;

/// States saved along earlier propagations so that later evaluations (such
/// as refinement windows around a maximum) need not start again from zero.
///
/// Memory is capped; the cache is cleared whenever the starting vector
/// changes.
#[derive(Debug)]
pub struct Checkpoints {
    budget_bytes: usize,
    inner: Mutex<CheckpointStore>,
}

#[derive(Debug, Default)]
struct CheckpointStore {
    origin: Vec<C64>,
    /// Sorted by time.
    states: Vec<(f64, Vec<C64>)>,
}

pub const DEFAULT_CHECKPOINT_BYTES: usize = 256 << 20;

impl Default for Checkpoints {
    fn default() -> Self {
        Self::new(DEFAULT_CHECKPOINT_BYTES)
    }
}

impl Checkpoints {
    pub fn new(budget_bytes: usize) -> Self {
        Self { budget_bytes, inner: Mutex::new(CheckpointStore::default()) }
    }

    pub fn len(&self) -> usize {
        self.lock().states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, CheckpointStore> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn capacity(&self, dim: usize) -> usize {
        self.budget_bytes / (dim.max(1) * std::mem::size_of::<C64>())
    }

    /// Latest saved state not after `first`, or `(0, v0)`.
    fn resume(&self, v0: &[C64], first: f64) -> (f64, Vec<C64>) {
        let mut store = self.lock();
        if store.origin != v0 {
            store.origin = v0.to_vec();
            store.states.clear();
        }
        let k = store.states.partition_point(|(t, _)| *t <= first);
        if k > 0 {
            store.states[k - 1].clone()
        } else {
            (0.0, v0.to_vec())
        }
    }

    fn save(&self, fresh: Vec<(f64, Vec<C64>)>, capacity: usize) {
        if fresh.is_empty() {
            return;
        }
        let mut store = self.lock();
        for (t, v) in fresh {
            if store.states.len() >= capacity {
                // Full: keep every other checkpoint.
                let mut k = 0;
                store.states.retain(|_| {
                    k += 1;
                    k % 2 == 0
                });
            }
            let k = store.states.partition_point(|(s, _)| *s < t);
            if store.states.get(k).is_none_or(|(s, _)| *s != t) {
                store.states.insert(k, (t, v));
            }
        }
    }

    /// [`evolve`] resuming from the latest saved state not after `times[0]`.
    pub fn evolve(
        &self,
        op: &dyn LinearOperator,
        settings: KrylovSettings,
        v0: &[C64],
        times: &[f64],
        mut visit: impl FnMut(usize, &[C64]) -> Result<()>,
    ) -> Result<StepStats> {
        let Some(&first) = times.first() else {
            return Ok(StepStats::default());
        };
        let capacity = self.capacity(v0.len());
        let (t0, state0) = self.resume(v0, first);
        let stride = if times.len() >= CHECKPOINT_MIN_SAMPLES && capacity > 0 {
            times.len().div_ceil(capacity).max(1)
        } else {
            0
        };
        let mut fresh = Vec::new();
        let stats = evolve_from(op, settings, t0, &state0, times, |i, v| {
            if stride > 0 && i % stride == 0 && times[i] > 0.0 {
                fresh.push((times[i], v.to_vec()));
            }
            visit(i, v)
        })?;
        self.save(fresh, capacity);
        Ok(stats)
    }

    /// [`evolve_diagonal`] resuming from the latest saved state; samples
    /// spread evenly over the span become checkpoints.
    pub fn evolve_diagonal(
        &self,
        op: &dyn LinearOperator,
        settings: KrylovSettings,
        v0: &[C64],
        times: &[f64],
        weights: &[&[f64]],
        visit: impl FnMut(usize, &[f64]) -> Result<()>,
    ) -> Result<StepStats> {
        let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
            return Ok(StepStats::default());
        };
        let capacity = self.capacity(v0.len());
        if capacity == 0 {
            return evolve_diagonal(op, settings, 0.0, v0, times, weights, &[], visit, |_, _| ());
        }
        let (t0, state0) = self.resume(v0, first);
        let start = times.partition_point(|&t| t <= t0);
        let marks: Vec<usize> = if times.len() >= CHECKPOINT_MIN_SAMPLES {
            // Each checkpoint here costs a full combine, so fewer are kept.
            let spacing = (last - t0) / capacity.min(32) as f64;
            let mut kept = t0;
            (start..times.len())
                .filter(|&i| {
                    let due = times[i] - kept >= spacing;
                    if due {
                        kept = times[i];
                    }
                    due
                })
                .collect()
        } else {
            // Short calls are zooms; the next one starts inside this one.
            (start..times.len()).take(1).collect()
        };
        let mut fresh: Vec<(f64, Vec<C64>)> = Vec::new();
        let stats = evolve_diagonal(op, settings, t0, &state0, times, weights, &marks, visit, |t, v| {
            fresh.push((t, v.to_vec()));
        })?;
        self.save(fresh, capacity);
        Ok(stats)
    }
}

/// `[norm^2, sum_x w_1(x) |psi_x|^2, ...]` of a state.
fn diagonal_forms(v: &[C64], weights: &[&[f64]], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (x, c) in v.iter().enumerate() {
        let p = c.norm_sqr();
        out[0] += p;
        for (o, w) in out[1..].iter_mut().zip(weights) {
            *o += w[x] * p;
        }
    }
}

/// `V^H diag(w) V` for each weight on the first `m` basis vectors, as packed
/// upper triangles. Real and imaginary parts go through real block products.
fn project_weights(basis: &Basis, m: usize, weights: &[&[f64]]) -> Vec<Vec<C64>> {
    const BLOCK: usize = 2048;
    let dim = basis.vectors[0].len();
    let mut gram = vec![DMatrix::<f64>::zeros(2 * m, 2 * m); weights.len()];
    // `xt` holds the block transposed so that the product runs through the
    // blocked `gemm` kernel.
    let mut xt = DMatrix::<f64>::zeros(2 * m, BLOCK);
    let mut y = DMatrix::<f64>::zeros(BLOCK, 2 * m);
    for r0 in (0..dim).step_by(BLOCK) {
        let rows = BLOCK.min(dim - r0);
        if rows < BLOCK {
            xt = DMatrix::zeros(2 * m, rows);
            y = DMatrix::zeros(rows, 2 * m);
        }
        for (j, v) in basis.vectors[..m].iter().enumerate() {
            for (r, a) in v[r0..r0 + rows].iter().enumerate() {
                xt[(j, r)] = a.re;
                xt[(m + j, r)] = a.im;
            }
        }
        for (g, w) in gram.iter_mut().zip(weights) {
            let w = &w[r0..r0 + rows];
            for (j, mut col) in y.column_iter_mut().enumerate() {
                for ((d, wx), r) in col.iter_mut().zip(w).zip(0..) {
                    *d = xt[(j, r)] * wx;
                }
            }
            g.gemm(1.0, &xt, &y, 1.0);
        }
    }
    gram.iter()
        .map(|g| {
            let mut packed = Vec::with_capacity(m * (m + 1) / 2);
            for i in 0..m {
                for j in i..m {
                    let re = g[(i, j)] + g[(m + i, m + j)];
                    let im = g[(i, m + j)] - g[(m + i, j)];
                    packed.push(C64::new(re, im));
                }
            }
            packed
        })
        .collect()
}

/// `c^H M c` for a packed upper-triangular Hermitian `M`.
fn packed_form(m: usize, packed: &[C64], c: &[C64]) -> f64 {
    let mut k = 0;
    let mut acc = 0.0;
    for i in 0..m {
        acc += packed[k].re * c[i].norm_sqr();
        k += 1;
        for j in i + 1..m {
            acc += 2.0 * (c[i].conj() * packed[k] * c[j]).re;
            k += 1;
        }
    }
    acc
}

/// Like [`evolve_from`] but reports only diagonal quadratic forms:
/// `visit(i, [norm^2, q_1, ..])` with `q_k = sum_x w_k(x) |psi_x(t_i)|^2`.
/// Steps that hold many samples project the weights onto the Krylov basis
/// once and evaluate each sample in the subspace. `keep(t, v)` receives
/// the states at the ascending sample indices `marks`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_diagonal(
    op: &dyn LinearOperator,
    settings: KrylovSettings,
    t0: f64,
    v0: &[C64],
    times: &[f64],
    weights: &[&[f64]],
    marks: &[usize],
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
    mut keep: impl FnMut(f64, &[C64]),
) -> Result<StepStats> {
    if v0.len() != op.dim() {
        return Err(Error::Dimension { expected: op.dim(), got: v0.len() });
    }
    if let Some(w) = weights.iter().find(|w| w.len() != op.dim()) {
        return Err(Error::Dimension { expected: op.dim(), got: w.len() });
    }
    let Some(&last) = times.last() else {
        return Ok(StepStats::default());
    };
    if times[0] < t0 {
        return Err(invalid("times", "samples must not precede the starting time"));
    }
    let mut stepper = KrylovStepper::new(op, settings)?;
    let mut v = v0.to_vec();
    let mut sample = vec![C64::new(0.0, 0.0); v.len()];
    let mut forms = vec![0.0; weights.len() + 1];
    let mut now = t0;
    let mut marks = marks.iter().copied().peekable();
    let mut i = 0;
    while i < times.len() {
        let Some((basis, proj)) = (times[i] != now).then(|| stepper.build(&v, last - now)).transpose()?.flatten()
        else {
            if marks.next_if_eq(&i).is_some() {
                keep(times[i], &v);
            }
            diagonal_forms(&v, weights, &mut forms);
            visit(i, &forms)?;
            i += 1;
            continue;
        };
        let taken = stepper.reach(&basis, &proj, last - now).map_err(|e| match e {
            Error::KrylovTolerance { step, residual, .. } => Error::KrylovTolerance { time: now, step, residual },
            other => other,
        })?;
        stepper.record(&basis, &proj, taken);
        let end = if taken == last - now { last } else { now + taken };
        let inside = times[i..].partition_point(|&t| t < end);
        let m = proj.dec.dim();
        let k = weights.len();
        // Per-element cost of rebuilding every sample against projecting
        // the weights once.
        let direct = inside * (m + k + 1);
        let projected = m * (m + 1) / 2 * (k + 1);
        if projected < direct {
            let mats = project_weights(&basis, m, weights);
            let b2 = basis.beta0 * basis.beta0;
            for _ in 0..inside {
                let c = proj.coeffs(times[i] - now);
                if marks.next_if_eq(&i).is_some() {
                    KrylovStepper::combine(&basis, &c, &mut sample);
                    keep(times[i], &sample);
                }
                forms[0] = b2 * c.iter().map(|x| x.norm_sqr()).sum::<f64>();
                for (f, mat) in forms[1..].iter_mut().zip(&mats) {
                    *f = b2 * packed_form(m, mat, &c);
                }
                visit(i, &forms)?;
                i += 1;
            }
        } else {
            for _ in 0..inside {
                KrylovStepper::combine(&basis, &proj.coeffs(times[i] - now), &mut sample);
                if marks.next_if_eq(&i).is_some() {
                    keep(times[i], &sample);
                }
                diagonal_forms(&sample, weights, &mut forms);
                visit(i, &forms)?;
                i += 1;
            }
        }
        KrylovStepper::combine(&basis, &proj.coeffs(end - now), &mut v);
        stepper.recycle(basis);
        now = end;
    }
    Ok(stepper.stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        a: Vec<f64>,
    }

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[C64], y: &mut [C64]) {
            for (yr, row) in y.iter_mut().zip(self.a.chunks_exact(self.n)) {
                *yr = x.iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
    }

    #[test]
    fn two_level_rabi() {
        let j = 0.9;
        let op = Dense { n: 2, a: vec![0.0, j, j, 0.0] };
        let v0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let times = [0.0, 0.3, 1.7, 5.0];
        evolve(&op, KrylovSettings::default(), &v0, &times, |i, v| {
            let t = times[i];
            assert!((v[0] - C64::new((j * t).cos(), 0.0)).norm() < 1e-12);
            assert!((v[1] - C64::new(0.0, -(j * t).sin())).norm() < 1e-12);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn matches_dense_spectral_on_chain() {
        let n = 120;
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            a[k * n + k] = (k as f64 * 0.37).sin() * 3.0;
            if k + 1 < n {
                a[k * n + k + 1] = 1.0;
                a[(k + 1) * n + k] = 1.0;
            }
        }
        let d: Vec<f64> = (0..n).map(|k| a[k * n + k]).collect();
        let o = vec![1.0; n - 1];
        let dec = tridiag::eigendecompose(&d, &o).unwrap();
        let op = Dense { n, a };
        let mut v0 = vec![C64::new(0.0, 0.0); n];
        v0[n / 2] = C64::new(1.0, 0.0);
        let times = [0.0, 1.0, 4.0, 10.0];
        evolve(&op, KrylovSettings::default(), &v0, &times, |i, v| {
            let t = times[i];
            for (k, vk) in v.iter().enumerate() {
                let exact: C64 = (0..n)
                    .map(|j| {
                        C64::from_polar(1.0, -dec.eigenvalues()[j] * t) * dec.component(k, j) * dec.component(n / 2, j)
                    })
                    .sum();
                assert!((vk - exact).norm() < 1e-9, "t={t} k={k}");
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn backwards_returns_home() {
        let n = 40;
        let mut a = vec![0.0; n * n];
        for k in 0..n - 1 {
            a[k * n + k + 1] = 1.0 + 0.1 * k as f64;
            a[(k + 1) * n + k] = 1.0 + 0.1 * k as f64;
        }
        let op = Dense { n, a };
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[0] = C64::new(1.0, 0.0);
        let start = v.clone();
        let mut s = KrylovStepper::new(&op, KrylovSettings::default()).unwrap();
        s.advance(&mut v, 7.5).unwrap();
        s.advance(&mut v, -7.5).unwrap();
        let dev: f64 = v.iter().zip(&start).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "{dev}");
    }

    #[test]
    fn impossible_tolerance_fails() {
        let n = 64;
        let mut a = vec![0.0; n * n];
        for k in 0..n - 1 {
            a[k * n + k + 1] = 1e3;
            a[(k + 1) * n + k] = 1e3;
        }
        let op = Dense { n, a };
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[0] = C64::new(1.0, 0.0);
        let settings = KrylovSettings { max_dim: 2, tolerance: 1e-300, max_halvings: 5, ..Default::default() };
        let mut s = KrylovStepper::new(&op, settings).unwrap();
        assert!(matches!(s.advance(&mut v, 1.0), Err(Error::KrylovTolerance { .. })));
    }

    #[test]
    fn checkpoints_resume_consistently() {
        let n = 60;
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            a[k * n + k] = 0.2 * k as f64;
            if k + 1 < n {
                a[k * n + k + 1] = 1.0;
                a[(k + 1) * n + k] = 1.0;
            }
        }
        let op = Dense { n, a };
        let mut v0 = vec![C64::new(0.0, 0.0); n];
        v0[0] = C64::new(1.0, 0.0);
        let coarse: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let cache = Checkpoints::default();
        cache.evolve(&op, KrylovSettings::default(), &v0, &coarse, |_, _| Ok(())).unwrap();
        assert!(cache.len() > 100);
        let window = [7.01, 7.02, 7.5];
        let mut direct = Vec::new();
        evolve(&op, KrylovSettings::default(), &v0, &window, |_, v| {
            direct.push(v.to_vec());
            Ok(())
        })
        .unwrap();
        let mut resumed = Vec::new();
        let stats = cache
            .evolve(&op, KrylovSettings::default(), &v0, &window, |_, v| {
                resumed.push(v.to_vec());
                Ok(())
            })
            .unwrap();
        assert!(stats.steps <= 2);
        for (x, y) in direct.iter().zip(&resumed) {
            let d = x.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(d < 1e-9, "{d}");
        }
        // A different start invalidates the cache.
        v0.swap(0, 1);
        cache.evolve(&op, KrylovSettings::default(), &v0, &window, |_, _| Ok(())).unwrap();
        assert_eq!(cache.len(), 0);
    }

    #[test]
    fn diagonal_forms_match_full_states() {
        let n = 80;
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            a[k * n + k] = (0.37 * k as f64).sin();
            if k + 1 < n {
                a[k * n + k + 1] = 0.8;
                a[(k + 1) * n + k] = 0.8;
            }
        }
        let op = Dense { n, a };
        let v0: Vec<C64> = (0..n).map(|k| C64::new((k as f64).cos(), 0.1 * k as f64).unscale(20.0)).collect();
        let w1: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let w2: Vec<f64> = (0..n).map(|k| (k % 3) as f64 - 1.0).collect();
        // Dense and sparse sampling exercise both branches.
        for times in [(0..400).map(|i| i as f64 * 0.01).collect::<Vec<_>>(), vec![0.0, 1.5, 9.0]] {
            let mut direct = Vec::new();
            evolve(&op, KrylovSettings::default(), &v0, &times, |_, v| {
                let mut f = [0.0; 3];
                diagonal_forms(v, &[&w1, &w2], &mut f);
                direct.push(f);
                Ok(())
            })
            .unwrap();
            let mut fast = Vec::new();
            let mut ends = 0;
            evolve_diagonal(
                &op,
                KrylovSettings::default(),
                0.0,
                &v0,
                &times,
                &[&w1, &w2],
                &[1, 2],
                |_, f| {
                    fast.push([f[0], f[1], f[2]]);
                    Ok(())
                },
                |_, _| ends += 1,
            )
            .unwrap();
            assert_eq!(ends, 2);
            assert_eq!(direct.len(), fast.len());
            for (x, y) in direct.iter().zip(&fast) {
                for (a, b) in x.iter().zip(y) {
                    assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} {b}");
                }
            }
        }
    }
}
