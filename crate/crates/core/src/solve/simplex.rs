//! Bounded-variable primal and dual simplex.
//!
//! The engine works on a scaled computational form `A x + s = b` with one
//! slack per row. The basis inverse is held as a dense matrix updated in
//! product form each pivot; basic values are recomputed periodically and
//! the claimed optimum is certified against the scaled rows before being
//! returned. Geometric equilibration (rounded to powers of two, so scaling
//! is exact in floating point) conditions the big-M rows.
//!
//! The dual simplex exists for warm restarts: after bound changes the
//! current basis stays dual feasible, so re-optimization is usually a
//! handful of pivots. It starts from whatever basis the engine currently
//! holds; callers fall back to a primal solve from scratch when alignment
//! fails.

use crate::model::{MipModel, Sense};
use crate::scalar::Scalar;

use super::{BasisDescriptor, LpSolution, LpStatus, SolveError};

/// Scaled computational form of a model.
#[derive(Debug, Clone)]
pub(crate) struct CompForm<T> {
    pub n: usize,
    pub m: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
    /// Scaled objective over structural columns.
    pub obj: Vec<T>,
    pub rhs: Vec<T>,
    /// Scaled bounds over structural columns then slacks.
    pub base_lower: Vec<T>,
    pub base_upper: Vec<T>,
    pub col_scale: Vec<T>,
    pub obj_offset: T,
}

fn pow2_round(v: f64) -> f64 {
    if v.is_finite() && v > 0.0 {
        v.log2().round().exp2()
    } else {
        1.0
    }
}

impl<T: Scalar> CompForm<T> {
    pub fn build(model: &MipModel<T>) -> Result<Self, SolveError> {
        let n = model.cols.len();
        let m = model.rows.len();
        for (j, c) in model.cols.iter().enumerate() {
            if c.lower > c.upper {
                return Err(SolveError::BadModel(format!(
                    "column {} ({}) has crossed bounds",
                    j, c.name
                )));
            }
        }

        // Geometric equilibration in f64, rounded to powers of two.
        let mut row_scale = vec![1.0f64; m];
        let mut col_scale = vec![1.0f64; n];
        for _ in 0..2 {
            for (i, row) in model.rows.iter().enumerate() {
                let mut lo = f64::INFINITY;
                let mut hi = 0.0f64;
                for &(j, v) in &row.terms {
                    let a = (v.f64() * row_scale[i] * col_scale[j]).abs();
                    if a > 0.0 {
                        lo = lo.min(a);
                        hi = hi.max(a);
                    }
                }
                if hi > 0.0 {
                    row_scale[i] *= pow2_round(1.0 / (lo * hi).sqrt());
                }
            }
            let mut col_lo = vec![f64::INFINITY; n];
            let mut col_hi = vec![0.0f64; n];
            for (i, row) in model.rows.iter().enumerate() {
                for &(j, v) in &row.terms {
                    let a = (v.f64() * row_scale[i] * col_scale[j]).abs();
                    if a > 0.0 {
                        col_lo[j] = col_lo[j].min(a);
                        col_hi[j] = col_hi[j].max(a);
                    }
                }
            }
            for j in 0..n {
                if col_hi[j] > 0.0 {
                    col_scale[j] *= pow2_round(1.0 / (col_lo[j] * col_hi[j]).sqrt());
                }
            }
        }

        // Column-major structural matrix with scaling applied.
        let mut col_entries: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, row) in model.rows.iter().enumerate() {
            for &(j, v) in &row.terms {
                let scaled = v * T::c(row_scale[i]) * T::c(col_scale[j]);
                col_entries[j].push((i, scaled));
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for entries in &col_entries {
            for &(i, v) in entries {
                row_idx.push(i);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }

        let mut base_lower = Vec::with_capacity(n + m);
        let mut base_upper = Vec::with_capacity(n + m);
        for (j, c) in model.cols.iter().enumerate() {
            let s = T::c(col_scale[j]);
            base_lower.push(if c.lower.is_finite() { c.lower / s } else { c.lower });
            base_upper.push(if c.upper.is_finite() { c.upper / s } else { c.upper });
        }
        for row in &model.rows {
            match row.sense {
                Sense::Le => {
                    base_lower.push(T::zero());
                    base_upper.push(T::infinity());
                }
                Sense::Eq => {
                    base_lower.push(T::zero());
                    base_upper.push(T::zero());
                }
                Sense::Ge => {
                    base_lower.push(T::neg_infinity());
                    base_upper.push(T::zero());
                }
            }
        }

        Ok(Self {
            n,
            m,
            col_ptr,
            row_idx,
            values,
            obj: model
                .cols
                .iter()
                .enumerate()
                .map(|(j, c)| c.objective * T::c(col_scale[j]))
                .collect(),
            rhs: model
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| r.rhs * T::c(row_scale[i]))
                .collect(),
            base_lower,
            base_upper,
            col_scale: col_scale.iter().map(|&s| T::c(s)).collect(),
            obj_offset: model.objective_offset,
        })
    }

    /// Iterate the sparse entries of column `j` (slack columns included).
    #[inline]
    fn col_entries(&self, j: usize) -> ColIter<'_, T>
    where
        T: Scalar,
    {
        if j < self.n {
            ColIter::Struct {
                rows: &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]],
                vals: &self.values[self.col_ptr[j]..self.col_ptr[j + 1]],
                pos: 0,
            }
        } else {
            ColIter::Slack {
                row: j - self.n,
                one: T::one(),
                done: false,
            }
        }
    }

    #[inline]
    fn obj_of(&self, j: usize) -> T {
        if j < self.n {
            self.obj[j]
        } else {
            T::zero()
        }
    }
}

enum ColIter<'a, T> {
    Struct {
        rows: &'a [usize],
        vals: &'a [T],
        pos: usize,
    },
    Slack {
        row: usize,
        one: T,
        done: bool,
    },
}

impl<T: Copy> Iterator for ColIter<'_, T> {
    type Item = (usize, T);

    #[inline]
    fn next(&mut self) -> Option<(usize, T)> {
        match self {
            ColIter::Struct { rows, vals, pos } => {
                if *pos < rows.len() {
                    let out = (rows[*pos], vals[*pos]);
                    *pos += 1;
                    Some(out)
                } else {
                    None
                }
            }
            ColIter::Slack { row, one, done } => {
                if *done {
                    None
                } else {
                    *done = true;
                    Some((*row, *one))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable pinned at zero.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DualOutcome {
    Optimal,
    Infeasible,
    /// Alignment failed or the iteration cap was hit; re-solve from scratch.
    GiveUp,
}

/// Persistent simplex engine over one model.
#[derive(Debug, Clone)]
pub(crate) struct LpEngine<T> {
    f: CompForm<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    state: Vec<VState>,
    basis: Vec<usize>,
    binv: Vec<T>,
    x: Vec<T>,
    w: Vec<T>,
    y: Vec<T>,
    rowbuf: Vec<T>,
    pub iterations: u64,
    bland_count: u32,
    feas_tol: T,
    dual_tol: T,
    piv_tol: T,
}

const BLAND_TRIGGER: u32 = 200;
const RECOMPUTE_EVERY: u64 = 128;

impl<T: Scalar> LpEngine<T> {
    pub fn new(model: &MipModel<T>) -> Result<Self, SolveError> {
        let f = CompForm::build(model)?;
        let total = f.n + f.m;
        let feas_tol = T::c(1e-7).max(T::epsilon() * T::c(100.0));
        let dual_tol = T::c(1e-9).max(T::epsilon() * T::c(10.0));
        let piv_tol = T::c(1e-8).max(T::epsilon() * T::c(10.0));
        let m = f.m;
        let mut engine = Self {
            lower: f.base_lower.clone(),
            upper: f.base_upper.clone(),
            state: vec![VState::AtLower; total],
            basis: (0..m).map(|i| f.n + i).collect(),
            binv: vec![T::zero(); m * m],
            x: vec![T::zero(); total],
            w: vec![T::zero(); m],
            y: vec![T::zero(); total.max(m)],
            rowbuf: vec![T::zero(); m],
            iterations: 0,
            bland_count: 0,
            feas_tol,
            dual_tol,
            piv_tol,
            f,
        };
        engine.reset_to_slack_basis();
        Ok(engine)
    }

    fn m(&self) -> usize {
        self.f.m
    }

    /// Restore the model's own bounds.
    pub fn reset_bounds(&mut self) {
        self.lower.copy_from_slice(&self.f.base_lower);
        self.upper.copy_from_slice(&self.f.base_upper);
    }

    /// Override the bounds of a structural column (original units).
    pub fn override_bounds(&mut self, col: usize, lo: T, hi: T) {
        let s = self.f.col_scale[col];
        self.lower[col] = if lo.is_finite() { lo / s } else { lo };
        self.upper[col] = if hi.is_finite() { hi / s } else { hi };
    }

    pub fn reset_to_slack_basis(&mut self) {
        let m = self.m();
        let n = self.f.n;
        for v in &mut self.binv {
            *v = T::zero();
        }
        for i in 0..m {
            self.binv[i * m + i] = T::one();
            self.basis[i] = n + i;
        }
        for j in 0..n + m {
            self.state[j] = if j >= n {
                VState::Basic(j - n)
            } else {
                self.start_state(j)
            };
        }
        self.snap_nonbasic();
        self.recompute_basics();
    }

    fn start_state(&self, j: usize) -> VState {
        let lo = self.lower[j];
        let hi = self.upper[j];
        if lo.is_finite() {
            if hi.is_finite() && hi.abs() < lo.abs() {
                VState::AtUpper
            } else {
                VState::AtLower
            }
        } else if hi.is_finite() {
            VState::AtUpper
        } else {
            VState::Free
        }
    }

    /// Set every nonbasic variable exactly onto its bound.
    fn snap_nonbasic(&mut self) {
        for j in 0..self.x.len() {
            match self.state[j] {
                VState::AtLower => self.x[j] = self.lower[j],
                VState::AtUpper => self.x[j] = self.upper[j],
                VState::Free => self.x[j] = T::zero(),
                VState::Basic(_) => {}
            }
        }
    }

    /// Recompute basic values from the inverse: `x_B = Binv (b - N x_N)`.
    fn recompute_basics(&mut self) {
        let m = self.m();
        self.rowbuf.copy_from_slice(&self.f.rhs);
        for j in 0..self.x.len() {
            if matches!(self.state[j], VState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj == T::zero() {
                continue;
            }
            for (i, a) in self.f.col_entries(j) {
                self.rowbuf[i] -= a * xj;
            }
        }
        for i in 0..m {
            let mut acc = T::zero();
            let row = &self.binv[i * m..(i + 1) * m];
            for (k, &b) in row.iter().enumerate() {
                acc += b * self.rowbuf[k];
            }
            self.w[i] = acc;
        }
        for i in 0..m {
            self.x[self.basis[i]] = self.w[i];
        }
    }

    /// `w = Binv * A_q`.
    fn ftran(&mut self, q: usize) {
        let m = self.m();
        for v in &mut self.w {
            *v = T::zero();
        }
        for (r, a) in self.f.col_entries(q) {
            if a == T::zero() {
                continue;
            }
            for i in 0..m {
                self.w[i] += a * self.binv[i * m + r];
            }
        }
    }

    /// `y = Binv' * g` for a sparse-ish `g` over rows.
    fn btran_into_y(&mut self, g: &[T]) {
        let m = self.m();
        for v in self.y[..m].iter_mut() {
            *v = T::zero();
        }
        for (i, &gi) in g.iter().enumerate() {
            if gi == T::zero() {
                continue;
            }
            let row = &self.binv[i * m..(i + 1) * m];
            for (k, &b) in row.iter().enumerate() {
                self.y[k] += gi * b;
            }
        }
    }

    #[inline]
    fn dot_col_y(&self, j: usize) -> T {
        let mut acc = T::zero();
        for (i, a) in self.f.col_entries(j) {
            acc += a * self.y[i];
        }
        acc
    }

    #[inline]
    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn update_binv(&mut self, r: usize, pivot: T) {
        let m = self.m();
        let inv = T::one() / pivot;
        let start = r * m;
        for v in &mut self.binv[start..start + m] {
            *v *= inv;
        }
        self.rowbuf.copy_from_slice(&self.binv[start..start + m]);
        for i in 0..m {
            if i == r {
                continue;
            }
            let wi = self.w[i];
            if wi == T::zero() {
                continue;
            }
            let base = i * m;
            for (k, &rv) in self.rowbuf.iter().enumerate() {
                self.binv[base + k] -= wi * rv;
            }
        }
    }

    /// Rebuild the inverse from the basis columns by LU factorization.
    fn refactor(&mut self) -> Result<(), SolveError> {
        let m = self.m();
        if m == 0 {
            return Ok(());
        }
        let mut mat = vec![T::zero(); m * m];
        for (pos, &col) in self.basis.iter().enumerate() {
            for (i, a) in self.f.col_entries(col) {
                mat[i * m + pos] = a;
            }
        }
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let mut best = k;
            let mut best_val = mat[k * m + k].abs();
            for i in k + 1..m {
                let v = mat[i * m + k].abs();
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            if best_val < T::c(1e-12) {
                return Err(SolveError::Numerical("singular basis in refactor".into()));
            }
            if best != k {
                for c in 0..m {
                    mat.swap(k * m + c, best * m + c);
                }
                perm.swap(k, best);
            }
            let pivot = mat[k * m + k];
            let inv = T::one() / pivot;
            for i in k + 1..m {
                let factor = mat[i * m + k] * inv;
                if factor == T::zero() {
                    continue;
                }
                mat[i * m + k] = factor;
                for c in k + 1..m {
                    let v = mat[k * m + c];
                    mat[i * m + c] -= factor * v;
                }
            }
        }
        // Solve LU X = P for each unit vector to rebuild the inverse.
        let mut col = vec![T::zero(); m];
        for e in 0..m {
            for v in col.iter_mut() {
                *v = T::zero();
            }
            // apply permutation: position of e after pivoting
            for (i, &p) in perm.iter().enumerate() {
                if p == e {
                    col[i] = T::one();
                    break;
                }
            }
            for i in 0..m {
                let mut acc = col[i];
                for k in 0..i {
                    acc -= mat[i * m + k] * col[k];
                }
                col[i] = acc;
            }
            for i in (0..m).rev() {
                let mut acc = col[i];
                for k in i + 1..m {
                    acc -= mat[i * m + k] * col[k];
                }
                col[i] = acc / mat[i * m + i];
            }
            for i in 0..m {
                self.binv[i * m + e] = col[i];
            }
        }
        self.recompute_basics();
        Ok(())
    }

    fn primal_infeasibility(&self) -> T {
        let mut total = T::zero();
        for i in 0..self.m() {
            let j = self.basis[i];
            let xj = self.x[j];
            if xj < self.lower[j] {
                total += self.lower[j] - xj;
            } else if xj > self.upper[j] {
                total += xj - self.upper[j];
            }
        }
        total
    }

    /// Primal simplex from the current basis: phase 1 drives out bound
    /// violations, phase 2 optimizes.
    pub fn primal(&mut self) -> Result<LpStatus, SolveError> {
        let cap = 200_000 + 100 * (self.f.n as u64 + self.f.m as u64);
        let mut local_iters = 0u64;
        let mut refactored = false;
        loop {
            local_iters += 1;
            if local_iters > cap {
                return Err(SolveError::IterationLimit(local_iters));
            }
            if self.iterations % RECOMPUTE_EVERY == 0 {
                self.recompute_basics();
            }
            let infeasible = self.primal_infeasibility() > self.feas_tol;
            let entering = if infeasible {
                self.price_phase1()
            } else {
                self.price_phase2()
            };
            let Some((q, dir)) = entering else {
                if infeasible {
                    // No improving column: certified infeasible (phase 1
                    // at a local optimum of the infeasibility sum).
                    if !refactored {
                        refactored = true;
                        self.refactor()?;
                        if self.primal_infeasibility() <= self.feas_tol {
                            continue;
                        }
                    }
                    return Ok(LpStatus::Infeasible);
                }
                if !self.certify_primal()? {
                    if refactored {
                        return Err(SolveError::Numerical(
                            "residual check failed after refactor".into(),
                        ));
                    }
                    refactored = true;
                    continue;
                }
                return Ok(LpStatus::Optimal);
            };
            self.ftran(q);
            let step = if infeasible {
                self.ratio_phase1(q, dir)
            } else {
                self.ratio_phase2(q, dir)
            };
            match step {
                Step::Unbounded => {
                    if infeasible {
                        return Err(SolveError::Numerical(
                            "phase-1 descent without blocking bound".into(),
                        ));
                    }
                    return Ok(LpStatus::Unbounded);
                }
                Step::Flip(theta) => self.apply_flip(q, dir, theta),
                Step::Pivot(theta, pos, to_upper) => {
                    self.apply_pivot(q, dir, theta, pos, to_upper)?
                }
            }
            self.iterations += 1;
        }
    }

    /// Entering column for phase 1: steepest decrease of the infeasibility
    /// sum (Bland's rule after a degeneracy streak).
    fn price_phase1(&mut self) -> Option<(usize, T)> {
        let m = self.m();
        for v in self.rowbuf.iter_mut() {
            *v = T::zero();
        }
        for i in 0..m {
            let j = self.basis[i];
            let xj = self.x[j];
            if xj < self.lower[j] - self.feas_tol {
                self.rowbuf[i] = -T::one();
            } else if xj > self.upper[j] + self.feas_tol {
                self.rowbuf[i] = T::one();
            }
        }
        let g = std::mem::take(&mut self.rowbuf);
        self.btran_into_y(&g);
        self.rowbuf = g;
        self.select_entering()
    }

    /// Entering column for phase 2: most negative reduced cost.
    fn price_phase2(&mut self) -> Option<(usize, T)> {
        let m = self.m();
        for v in self.rowbuf.iter_mut() {
            *v = T::zero();
        }
        for i in 0..m {
            self.rowbuf[i] = self.f.obj_of(self.basis[i]);
        }
        let g = std::mem::take(&mut self.rowbuf);
        self.btran_into_y(&g);
        self.rowbuf = g;
        self.select_entering_with_cost()
    }

    /// Pick the entering column given `y`; phase-1 variant where the
    /// direction score is `-y'A_j` (no objective contribution).
    fn select_entering(&self) -> Option<(usize, T)> {
        let bland = self.bland_count >= BLAND_TRIGGER;
        let mut best: Option<(T, usize, T)> = None;
        for j in 0..self.x.len() {
            if matches!(self.state[j], VState::Basic(_)) || self.is_fixed(j) {
                continue;
            }
            let d = -self.dot_col_y(j);
            let (score, dir) = match self.state[j] {
                VState::AtLower => (-d, T::one()),
                VState::AtUpper => (d, -T::one()),
                VState::Free => {
                    if d < T::zero() {
                        (-d, T::one())
                    } else {
                        (d, -T::one())
                    }
                }
                VState::Basic(_) => unreachable!(),
            };
            if score > self.dual_tol {
                if bland {
                    return Some((j, dir));
                }
                if best.map(|(s, _, _)| score > s).unwrap_or(true) {
                    best = Some((score, j, dir));
                }
            }
        }
        best.map(|(_, j, dir)| (j, dir))
    }

    /// Phase-2 entering: reduced cost `d_j = c_j - y'A_j`.
    fn select_entering_with_cost(&self) -> Option<(usize, T)> {
        let bland = self.bland_count >= BLAND_TRIGGER;
        let mut best: Option<(T, usize, T)> = None;
        for j in 0..self.x.len() {
            if matches!(self.state[j], VState::Basic(_)) || self.is_fixed(j) {
                continue;
            }
            let d = self.f.obj_of(j) - self.dot_col_y(j);
            let (score, dir) = match self.state[j] {
                VState::AtLower => (-d, T::one()),
                VState::AtUpper => (d, -T::one()),
                VState::Free => {
                    if d < T::zero() {
                        (-d, T::one())
                    } else {
                        (d, -T::one())
                    }
                }
                VState::Basic(_) => unreachable!(),
            };
            if score > self.dual_tol {
                if bland {
                    return Some((j, dir));
                }
                if best.map(|(s, _, _)| score > s).unwrap_or(true) {
                    best = Some((score, j, dir));
                }
            }
        }
        best.map(|(_, j, dir)| (j, dir))
    }

    fn ratio_phase1(&self, q: usize, dir: T) -> Step<T> {
        let mut best: Option<(T, T, usize, bool)> = None; // theta, |pivot|, pos, to_upper
        for i in 0..self.m() {
            let wi = self.w[i];
            if wi.abs() <= self.piv_tol {
                continue;
            }
            let rate = -dir * wi; // d x_Bi / d theta
            let j = self.basis[i];
            let xj = self.x[j];
            let lo = self.lower[j];
            let hi = self.upper[j];
            let candidate = if xj < lo - self.feas_tol {
                // infeasible below: blocks when rising to its lower bound
                (rate > T::zero()).then(|| ((lo - xj) / rate, false))
            } else if xj > hi + self.feas_tol {
                (rate < T::zero()).then(|| ((xj - hi) / -rate, true))
            } else if rate < T::zero() && lo.is_finite() {
                Some(((xj - lo) / -rate, false))
            } else if rate > T::zero() && hi.is_finite() {
                Some(((hi - xj) / rate, true))
            } else {
                None
            };
            if let Some((theta, to_upper)) = candidate {
                let theta = theta.max(T::zero());
                let better = match best {
                    None => true,
                    Some((bt, bw, _, _)) => {
                        theta < bt - T::c(1e-12) || (theta <= bt + T::c(1e-12) && wi.abs() > bw)
                    }
                };
                if better {
                    best = Some((theta, wi.abs(), i, to_upper));
                }
            }
        }
        let flip = self.flip_span(q);
        match (best, flip) {
            (Some((theta, _, _, _)), Some(span)) if span < theta => Step::Flip(span),
            (Some((theta, _, pos, up)), _) => Step::Pivot(theta, pos, up),
            (None, Some(span)) => Step::Flip(span),
            (None, None) => Step::Unbounded,
        }
    }

    fn ratio_phase2(&self, q: usize, dir: T) -> Step<T> {
        let mut best: Option<(T, T, usize, bool)> = None;
        for i in 0..self.m() {
            let wi = self.w[i];
            if wi.abs() <= self.piv_tol {
                continue;
            }
            let rate = -dir * wi;
            let j = self.basis[i];
            let xj = self.x[j];
            let lo = self.lower[j];
            let hi = self.upper[j];
            let candidate = if rate < T::zero() && lo.is_finite() {
                Some(((xj - lo) / -rate, false))
            } else if rate > T::zero() && hi.is_finite() {
                Some(((hi - xj) / rate, true))
            } else {
                None
            };
            if let Some((theta, to_upper)) = candidate {
                let theta = theta.max(T::zero());
                let better = match best {
                    None => true,
                    Some((bt, bw, _, _)) => {
                        theta < bt - T::c(1e-12) || (theta <= bt + T::c(1e-12) && wi.abs() > bw)
                    }
                };
                if better {
                    best = Some((theta, wi.abs(), i, to_upper));
                }
            }
        }
        let flip = self.flip_span(q);
        match (best, flip) {
            (Some((theta, _, _, _)), Some(span)) if span < theta => Step::Flip(span),
            (Some((theta, _, pos, up)), _) => Step::Pivot(theta, pos, up),
            (None, Some(span)) => Step::Flip(span),
            (None, None) => Step::Unbounded,
        }
    }

    fn flip_span(&self, q: usize) -> Option<T> {
        let lo = self.lower[q];
        let hi = self.upper[q];
        (lo.is_finite() && hi.is_finite()).then(|| hi - lo)
    }

    fn apply_flip(&mut self, q: usize, dir: T, theta: T) {
        for i in 0..self.m() {
            let j = self.basis[i];
            self.x[j] -= dir * theta * self.w[i];
        }
        match self.state[q] {
            VState::AtLower => {
                self.state[q] = VState::AtUpper;
                self.x[q] = self.upper[q];
            }
            VState::AtUpper => {
                self.state[q] = VState::AtLower;
                self.x[q] = self.lower[q];
            }
            _ => unreachable!("flip applies to bounded nonbasic columns"),
        }
        self.track_degeneracy(theta);
    }

    fn apply_pivot(
        &mut self,
        q: usize,
        dir: T,
        theta: T,
        pos: usize,
        to_upper: bool,
    ) -> Result<(), SolveError> {
        let pivot = self.w[pos];
        if pivot.abs() <= self.piv_tol {
            self.refactor()?;
            return Ok(());
        }
        for i in 0..self.m() {
            let j = self.basis[i];
            self.x[j] -= dir * theta * self.w[i];
        }
        let leaving = self.basis[pos];
        self.x[q] += dir * theta;
        self.x[leaving] = if to_upper {
            self.upper[leaving]
        } else {
            self.lower[leaving]
        };
        self.state[leaving] = if to_upper {
            VState::AtUpper
        } else {
            VState::AtLower
        };
        self.state[q] = VState::Basic(pos);
        self.basis[pos] = q;
        self.update_binv(pos, pivot);
        self.track_degeneracy(theta);
        Ok(())
    }

    fn track_degeneracy(&mut self, theta: T) {
        if theta.abs() <= T::c(1e-10) {
            self.bland_count += 1;
        } else {
            self.bland_count = 0;
        }
    }

    /// Check the scaled row residuals of the current point.
    fn certify_primal(&mut self) -> Result<bool, SolveError> {
        self.recompute_basics();
        let mut residual = T::zero();
        for i in 0..self.m() {
            self.rowbuf[i] = -self.f.rhs[i];
        }
        for j in 0..self.x.len() {
            let xj = self.x[j];
            if xj == T::zero() {
                continue;
            }
            for (i, a) in self.f.col_entries(j) {
                self.rowbuf[i] += a * xj;
            }
        }
        for i in 0..self.m() {
            residual = residual.max(self.rowbuf[i].abs());
        }
        let mut bound_violation = T::zero();
        for i in 0..self.m() {
            let j = self.basis[i];
            let xj = self.x[j];
            if xj < self.lower[j] {
                bound_violation = bound_violation.max(self.lower[j] - xj);
            }
            if xj > self.upper[j] {
                bound_violation = bound_violation.max(xj - self.upper[j]);
            }
        }
        if residual > self.feas_tol || bound_violation > self.feas_tol {
            self.refactor()?;
            return Ok(false);
        }
        Ok(true)
    }

    /// Re-point every nonbasic variable at the bound matching its reduced
    /// cost so the current basis is dual feasible under the current
    /// bounds. Fails if a free nonbasic column carries a significant
    /// reduced cost.
    fn align_nonbasic(&mut self) -> bool {
        let m = self.m();
        for v in self.rowbuf.iter_mut() {
            *v = T::zero();
        }
        for i in 0..m {
            self.rowbuf[i] = self.f.obj_of(self.basis[i]);
        }
        let g = std::mem::take(&mut self.rowbuf);
        self.btran_into_y(&g);
        self.rowbuf = g;
        for j in 0..self.x.len() {
            if matches!(self.state[j], VState::Basic(_)) {
                continue;
            }
            if self.is_fixed(j) {
                self.state[j] = VState::AtLower;
                continue;
            }
            let d = self.f.obj_of(j) - self.dot_col_y(j);
            if d > self.dual_tol {
                if self.lower[j].is_finite() {
                    self.state[j] = VState::AtLower;
                } else {
                    return false;
                }
            } else if d < -self.dual_tol {
                if self.upper[j].is_finite() {
                    self.state[j] = VState::AtUpper;
                } else {
                    return false;
                }
            } else if !matches!(self.state[j], VState::AtLower | VState::AtUpper)
                || (matches!(self.state[j], VState::AtLower) && !self.lower[j].is_finite())
                || (matches!(self.state[j], VState::AtUpper) && !self.upper[j].is_finite())
            {
                // zero reduced cost: keep any valid placement
                if self.lower[j].is_finite() {
                    self.state[j] = VState::AtLower;
                } else if self.upper[j].is_finite() {
                    self.state[j] = VState::AtUpper;
                } else {
                    self.state[j] = VState::Free;
                }
            }
        }
        true
    }

    /// Warm-start entry point: apply the current bounds, keep the current
    /// basis, restore dual feasibility and re-optimize with the dual
    /// simplex.
    pub fn dual_reoptimize(&mut self, iteration_cap: u64) -> Result<DualOutcome, SolveError> {
        if !self.align_nonbasic() {
            return Ok(DualOutcome::GiveUp);
        }
        self.snap_nonbasic();
        self.recompute_basics();
        let m = self.m();
        let mut iters = 0u64;
        loop {
            iters += 1;
            if iters > iteration_cap {
                return Ok(DualOutcome::GiveUp);
            }
            if self.iterations % RECOMPUTE_EVERY == 0 {
                self.recompute_basics();
            }
            // leaving: worst bound violation among basics
            let mut leave: Option<(T, usize, bool)> = None; // viol, pos, below
            for i in 0..m {
                let j = self.basis[i];
                let xj = self.x[j];
                if xj < self.lower[j] - self.feas_tol {
                    let v = self.lower[j] - xj;
                    if leave.map(|(bv, _, _)| v > bv).unwrap_or(true) {
                        leave = Some((v, i, true));
                    }
                } else if xj > self.upper[j] + self.feas_tol {
                    let v = xj - self.upper[j];
                    if leave.map(|(bv, _, _)| v > bv).unwrap_or(true) {
                        leave = Some((v, i, false));
                    }
                }
            }
            let Some((_, pos, below)) = leave else {
                if !self.certify_primal()? {
                    continue;
                }
                return Ok(DualOutcome::Optimal);
            };

            // duals for the ratio test
            for v in self.rowbuf.iter_mut() {
                *v = T::zero();
            }
            for i in 0..m {
                self.rowbuf[i] = self.f.obj_of(self.basis[i]);
            }
            let g = std::mem::take(&mut self.rowbuf);
            self.btran_into_y(&g);
            self.rowbuf = g;

            // row `pos` of Binv gives the pivot-row coefficients
            let row = self.binv[pos * m..(pos + 1) * m].to_vec();
            let mut best: Option<(T, T, usize)> = None; // |ratio|, |alpha|, j
            for j in 0..self.x.len() {
                if matches!(self.state[j], VState::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let mut alpha = T::zero();
                for (i, a) in self.f.col_entries(j) {
                    alpha += a * row[i];
                }
                if alpha.abs() <= self.piv_tol {
                    continue;
                }
                let ok = match (self.state[j], below) {
                    (VState::AtLower, true) => alpha < T::zero(),
                    (VState::AtUpper, true) => alpha > T::zero(),
                    (VState::AtLower, false) => alpha > T::zero(),
                    (VState::AtUpper, false) => alpha < T::zero(),
                    (VState::Free, _) => true,
                    (VState::Basic(_), _) => false,
                };
                if !ok {
                    continue;
                }
                let d = self.f.obj_of(j) - self.dot_col_y(j);
                let ratio = (d / alpha).abs();
                let better = match best {
                    None => true,
                    Some((br, ba, _)) => {
                        ratio < br - T::c(1e-12) || (ratio <= br + T::c(1e-12) && alpha.abs() > ba)
                    }
                };
                if better {
                    best = Some((ratio, alpha.abs(), j));
                }
            }
            let Some((_, _, q)) = best else {
                return Ok(DualOutcome::Infeasible);
            };

            self.ftran(q);
            let pivot = self.w[pos];
            if pivot.abs() <= self.piv_tol {
                self.refactor()?;
                continue;
            }
            let leaving = self.basis[pos];
            let bound = if below {
                self.lower[leaving]
            } else {
                self.upper[leaving]
            };
            let delta = self.x[leaving] - bound;
            let dx = delta / pivot;
            for i in 0..m {
                let j = self.basis[i];
                self.x[j] -= dx * self.w[i];
            }
            self.x[q] += dx;
            self.x[leaving] = bound;
            self.state[leaving] = if below {
                VState::AtLower
            } else {
                VState::AtUpper
            };
            self.state[q] = VState::Basic(pos);
            self.basis[pos] = q;
            self.update_binv(pos, pivot);
            self.iterations += 1;
        }
    }

    /// Objective of the current point (offset included, original units).
    pub fn objective(&self) -> T {
        let mut acc = self.f.obj_offset;
        for j in 0..self.f.n {
            acc += self.f.obj[j] * self.x[j];
        }
        acc
    }

    /// Structural column values in original units.
    pub fn extract_x(&self) -> Vec<T> {
        (0..self.f.n)
            .map(|j| self.x[j] * self.f.col_scale[j])
            .collect()
    }

    pub fn basis_descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            basic: self.basis.clone(),
            at_upper: (0..self.x.len())
                .filter(|&j| matches!(self.state[j], VState::AtUpper))
                .collect(),
        }
    }
}

enum Step<T> {
    Pivot(T, usize, bool),
    Flip(T),
    Unbounded,
}

/// Solve the LP relaxation of a model with the primal simplex.
pub fn solve_lp<T: Scalar>(model: &MipModel<T>) -> Result<LpSolution<T>, SolveError> {
    let mut engine = LpEngine::new(model)?;
    let status = engine.primal()?;
    Ok(LpSolution {
        status,
        objective: match status {
            LpStatus::Optimal => engine.objective(),
            _ => T::zero(),
        },
        x: match status {
            LpStatus::Optimal => engine.extract_x(),
            _ => Vec::new(),
        },
        basis: engine.basis_descriptor(),
        iterations: engine.iterations,
    })
}
