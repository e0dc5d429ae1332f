//! Compiled form of a problem: weighted cells of feature rows.
//!
//! Joint mode is a single cell of weight 1 holding every state. Conditional
//! mode holds one cell per assignment of the non-target variables, weighted by
//! its marginal probability, with one row per target value. In both cases the
//! model inside a cell is `exp(lambda . g(row) - logZ_cell)`.

use nalgebra::DMatrix;

use crate::domain::{ConstraintKind, ConstraintSet, ResolvedFeature, TabularDistribution, VariableSet};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// How a linearized residual converts back to the units of the constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Scale {
    Unit,
    /// Divide by a known condition probability.
    Fixed(f64),
    /// Divide by the model probability of the condition, tracked as an auxiliary moment.
    Aux(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub weight: f64,
    pub rows: usize,
    /// `rows x k`, row-major.
    pub g: Vec<f64>,
    /// `rows x n_aux`, row-major.
    pub aux: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub k: usize,
    pub n_aux: usize,
    pub cells: Vec<Cell>,
    pub targets: Vec<f64>,
    pub slacks: Vec<f64>,
    pub scales: Vec<Scale>,
}

#[derive(Debug, Clone)]
pub(crate) struct Eval {
    /// `-lambda . T + sum_c w_c logZ_c`, without the L1 term.
    pub smooth: f64,
    pub moments: Vec<f64>,
    pub aux: Vec<f64>,
    pub log_z: Vec<f64>,
    pub cov: Option<DMatrix<f64>>,
}

/// Per-constraint feature evaluator in linearized form.
pub(crate) struct Linearized {
    feature: ResolvedFeature,
    condition: Vec<(usize, usize)>,
    /// Joint mode conditional means become `(f - target) * 1[cond]` with target 0.
    center: Option<f64>,
}

impl Linearized {
    pub fn eval(&self, state: &[usize]) -> f64 {
        if !self.condition.iter().all(|&(i, v)| state[i] == v) {
            return 0.0;
        }
        let f = self.feature.eval(state);
        match self.center {
            Some(t) => f - t,
            None => f,
        }
    }

    fn in_condition(&self, state: &[usize]) -> bool {
        self.condition.iter().all(|&(i, v)| state[i] == v)
    }
}

/// Build the evaluators for every constraint over the full universe.
pub(crate) fn linearize(vars: &VariableSet, set: &ConstraintSet, joint: bool) -> Result<Vec<Linearized>> {
    set.constraints
        .iter()
        .map(|c| {
            let spec = set.feature(&c.feature_id).ok_or_else(|| Error::InvalidConstraint {
                feature_id: c.feature_id.clone(),
                reason: "unknown feature".into(),
            })?;
            let feature = spec.resolve(vars)?;
            let (condition, center) = match &c.kind {
                ConstraintKind::Mean => (Vec::new(), None),
                ConstraintKind::CondMean { condition } => {
                    (condition.resolve(vars)?, joint.then_some(c.target))
                }
            };
            Ok(Linearized {
                feature,
                condition,
                center,
            })
        })
        .collect()
}

impl Design {
    /// One cell holding every state of `vars`.
    pub fn joint(vars: &VariableSet, set: &ConstraintSet, cap: usize) -> Result<Design> {
        let lin = linearize(vars, set, true)?;
        let k = lin.len();
        let aux_of: Vec<Option<usize>> = {
            let mut next = 0;
            lin.iter()
                .map(|l| {
                    l.center.map(|_| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let n_aux = aux_of.iter().flatten().count();
        let n = vars.state_count(cap)?;
        let mut g = Vec::with_capacity(n * k);
        let mut aux = vec![0.0; n * n_aux];
        for (r, state) in vars.states(cap)?.enumerate() {
            for (j, l) in lin.iter().enumerate() {
                g.push(l.eval(&state));
                if let Some(a) = aux_of[j] {
                    if l.in_condition(&state) {
                        aux[r * n_aux + a] = 1.0;
                    }
                }
            }
        }
        let mut targets = Vec::with_capacity(k);
        let mut slacks = Vec::with_capacity(k);
        let mut scales = Vec::with_capacity(k);
        for (j, c) in set.constraints.iter().enumerate() {
            match aux_of[j] {
                // linearized conditional mean: target 0; the slack stays in
                // linearized units so the dual keeps a fixed L1 weight
                Some(a) => {
                    targets.push(0.0);
                    scales.push(Scale::Aux(a));
                }
                None => {
                    targets.push(c.target);
                    scales.push(Scale::Unit);
                }
            }
            slacks.push(c.slack);
        }
        Ok(Design {
            k,
            n_aux,
            cells: vec![Cell {
                weight: 1.0,
                rows: n,
                g,
                aux,
            }],
            targets,
            slacks,
            scales,
        })
    }

    /// One cell per state of the non-target variables, weighted by `cause`.
    ///
    /// `cause` must be over `vars` without the target, in the same order.
    pub fn conditional(
        vars: &VariableSet,
        set: &ConstraintSet,
        target: usize,
        cause: &TabularDistribution,
        cap: usize,
    ) -> Result<Design> {
        let lin = linearize(vars, set, false)?;
        let k = lin.len();
        vars.state_count(cap)?;
        let cvars = cause.variables();
        let dj = vars.domain_size(target);
        let mut cells = Vec::with_capacity(cause.probs().len());
        let mut state = vec![0; vars.len()];
        for (cstate, w) in cause.iter() {
            let mut g = Vec::with_capacity(dj * k);
            for xj in 0..dj {
                let mut it = cstate.iter();
                for (i, slot) in state.iter_mut().enumerate() {
                    *slot = if i == target { xj } else { *it.next().expect("cause state length") };
                }
                g.extend(lin.iter().map(|l| l.eval(&state)));
            }
            cells.push(Cell {
                weight: w,
                rows: dj,
                g,
                aux: Vec::new(),
            });
        }
        let mut targets = Vec::with_capacity(k);
        let mut slacks = Vec::with_capacity(k);
        let mut scales = Vec::with_capacity(k);
        for c in &set.constraints {
            match c.condition() {
                None => {
                    targets.push(c.target);
                    slacks.push(c.slack);
                    scales.push(Scale::Unit);
                }
                Some(cond) => {
                    let pc = cause.prob_event(cond)?;
                    if pc <= 0.0 {
                        return Err(Error::ZeroSupportCondition {
                            condition: cond.to_string(),
                        });
                    }
                    targets.push(pc * c.target);
                    slacks.push(pc * c.slack);
                    scales.push(Scale::Fixed(pc));
                }
            }
        }
        debug_assert_eq!(cvars.len() + 1, vars.len());
        Ok(Design {
            k,
            n_aux: 0,
            cells,
            targets,
            slacks,
            scales,
        })
    }

    /// Divisor taking a linearized residual back to constraint units.
    pub fn unit(&self, j: usize, aux: &[f64]) -> f64 {
        match self.scales[j] {
            Scale::Unit => 1.0,
            Scale::Fixed(p) => p,
            Scale::Aux(a) => aux[a],
        }
    }

    pub fn evaluate(&self, lambda: &[f64], with_cov: bool) -> Result<Eval> {
        let k = self.k;
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("multipliers".into()));
        }
        let mut smooth = -lambda.iter().zip(&self.targets).map(|(l, t)| l * t).sum::<f64>();
        let mut moments = vec![0.0; k];
        let mut aux = vec![0.0; self.n_aux];
        let mut log_z = Vec::with_capacity(self.cells.len());
        let mut cov = with_cov.then(|| DMatrix::zeros(k, k));
        let mut scores = Vec::new();
        let mut cm = vec![0.0; k];
        for cell in &self.cells {
            scores.clear();
            scores.extend(cell.g.chunks_exact(k.max(1)).take(cell.rows).map(|row| dot(lambda, row)));
            if k == 0 {
                scores.resize(cell.rows, 0.0);
            }
            let lz = log_sum_exp(&scores);
            if !lz.is_finite() {
                return Err(Error::NonFinite("log partition".into()));
            }
            log_z.push(lz);
            if cell.weight == 0.0 {
                continue;
            }
            smooth += cell.weight * lz;
            cm.iter_mut().for_each(|m| *m = 0.0);
            for (r, &s) in scores.iter().enumerate() {
                let p = (s - lz).exp();
                if p == 0.0 {
                    continue;
                }
                let row = &cell.g[r * k..(r + 1) * k];
                for (m, &x) in cm.iter_mut().zip(row) {
                    *m += p * x;
                }
                if self.n_aux > 0 {
                    let arow = &cell.aux[r * self.n_aux..(r + 1) * self.n_aux];
                    for (a, &x) in aux.iter_mut().zip(arow) {
                        *a += cell.weight * p * x;
                    }
                }
                if let Some(cov) = cov.as_mut() {
                    let wp = cell.weight * p;
                    for a in 0..k {
                        if row[a] == 0.0 {
                            continue;
                        }
                        for b in 0..k {
                            cov[(a, b)] += wp * row[a] * row[b];
                        }
                    }
                }
            }
            for (m, &c) in moments.iter_mut().zip(&cm) {
                *m += cell.weight * c;
            }
            if let Some(cov) = cov.as_mut() {
                for a in 0..k {
                    for b in 0..k {
                        cov[(a, b)] -= cell.weight * cm[a] * cm[b];
                    }
                }
            }
        }
        if !smooth.is_finite() {
            return Err(Error::NonFinite("dual objective".into()));
        }
        Ok(Eval {
            smooth,
            moments,
            aux,
            log_z,
            cov,
        })
    }

    /// Attainable range of each linearized moment, in linearized units.
    pub fn moment_ranges(&self) -> Vec<(f64, f64)> {
        let k = self.k;
        let mut out = vec![(0.0, 0.0); k];
        for cell in &self.cells {
            for (j, range) in out.iter_mut().enumerate() {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for r in 0..cell.rows {
                    let x = cell.g[r * k + j];
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                range.0 += cell.weight * lo;
                range.1 += cell.weight * hi;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
