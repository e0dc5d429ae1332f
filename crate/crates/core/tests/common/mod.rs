//! Reference computations that do not go through the solver.
#![allow(dead_code)]

use maxent_merge::{Assignment, Constraint, ConstraintSet, FeatureSpec, TabularDistribution, VariableSet};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

/// Bits of state `s` over `n` binary variables, first variable most significant.
pub fn bits(s: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| (s >> (n - 1 - i)) & 1).collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Strictly positive random weights, normalized.
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Uniform draw from the probability simplex (flat Dirichlet).
pub fn random_joint<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, Exp1};
    let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn binary_vars(names: &[&str]) -> VariableSet {
    VariableSet::binary(names).unwrap()
}

pub fn dist(names: &[&str], probs: Vec<f64>) -> TabularDistribution {
    TabularDistribution::new(binary_vars(names), probs).unwrap()
}

/// Entropy maximizer over the probability simplex subject to `rows . p = 0`.
///
/// Damped Newton ascent restricted to the affine set `{p : rows p = 0, sum p = 1}`,
/// started from the strictly positive feasible point `start`.
pub fn primal_maxent(rows: &[Vec<f64>], start: &[f64]) -> Vec<f64> {
    let n = start.len();
    let mut m = DMatrix::<f64>::zeros(rows.len() + 1, n);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m.row_mut(rows.len()).fill(1.0);
    let eig = SymmetricEigen::new(m.transpose() * &m);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let null: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] < 1e-10 * top.max(1.0))
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let mut p = DVector::from_column_slice(start);
    if null.is_empty() {
        return start.to_vec();
    }
    let basis = DMatrix::from_columns(&null);
    for _ in 0..500 {
        let logp = p.map(f64::ln);
        let g = -(basis.transpose() * &logp);
        if g.amax() < 1e-14 {
            break;
        }
        let inv = p.map(|x| 1.0 / x);
        let h = basis.transpose() * DMatrix::from_diagonal(&inv) * &basis;
        let d = h.cholesky().expect("positive definite").solve(&g);
        let dir = &basis * &d;
        let h0 = entropy(p.as_slice());
        let slope = g.dot(&d);
        let mut s = 1.0;
        loop {
            let cand = &p + &dir * s;
            if cand.iter().all(|&x| x > 0.0) && entropy(cand.as_slice()) >= h0 + 1e-4 * s * slope {
                p = cand;
                break;
            }
            s *= 0.5;
            if s < 1e-20 {
                return p.as_slice().to_vec();
            }
        }
    }
    p.as_slice().to_vec()
}

/// A feature on binary variables, with its own evaluator.
#[derive(Debug, Clone)]
pub struct RandomFeature {
    pub spec: FeatureSpec,
    /// `(variable index, required value)`; the feature is their conjunction.
    pub cells: Vec<(usize, usize)>,
    pub condition: Option<(usize, usize)>,
}

impl RandomFeature {
    pub fn value(&self, state: &[usize]) -> f64 {
        if self.cells.iter().all(|&(i, v)| state[i] == v) {
            1.0
        } else {
            0.0
        }
    }

    pub fn in_condition(&self, state: &[usize]) -> bool {
        self.condition.is_none_or(|(i, v)| state[i] == v)
    }
}

/// Random indicator features on `names` (all binary), some of them conditional,
/// with targets that are exact moments of `q`. Returns the constraint set and the
/// oracle's linear rows (`E[(f - t) 1{cond}] = 0`).
pub fn random_constraints<R: Rng>(
    rng: &mut R,
    names: &[&str],
    q: &[f64],
    max_features: usize,
    allow_conditions: bool,
) -> (ConstraintSet, Vec<Vec<f64>>, Vec<RandomFeature>) {
    let n = names.len();
    let states = 1usize << n;
    let k = rng.random_range(1..=max_features);
    let mut used = std::collections::BTreeSet::new();
    let mut feats = Vec::new();
    while feats.len() < k {
        let mask = rng.random_range(1..states);
        let cells: Vec<(usize, usize)> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| (i, rng.random_range(0..2)))
            .collect();
        let free: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let condition = if allow_conditions && !free.is_empty() && rng.random_bool(0.3) {
            Some((free[rng.random_range(0..free.len())], rng.random_range(0..2)))
        } else {
            None
        };
        if !used.insert((cells.clone(), condition)) {
            continue;
        }
        let values: Vec<(&str, String)> = cells.iter().map(|&(i, v)| (names[i], v.to_string())).collect();
        let id = format!("f{}", feats.len());
        feats.push(RandomFeature {
            spec: FeatureSpec::indicator(id, &values),
            cells,
            condition,
        });
    }
    let mut set = ConstraintSet::new();
    let mut rows = Vec::new();
    for f in &feats {
        set.add_feature(f.spec.clone()).unwrap();
        let st: Vec<Vec<usize>> = (0..states).map(|s| bits(s, n)).collect();
        let mass: f64 = (0..states).filter(|&s| f.in_condition(&st[s])).map(|s| q[s]).sum();
        let t = (0..states)
            .filter(|&s| f.in_condition(&st[s]))
            .map(|s| q[s] * f.value(&st[s]))
            .sum::<f64>()
            / mass;
        rows.push(
            (0..states)
                .map(|s| if f.in_condition(&st[s]) { f.value(&st[s]) - t } else { 0.0 })
                .collect(),
        );
        set.push(match f.condition {
            None => Constraint::mean(f.spec.id.clone(), t),
            Some((i, v)) => Constraint::cond_mean(f.spec.id.clone(), Assignment::single(names[i], v.to_string()), t),
        });
    }
    (set, rows, feats)
}

/// Joint of a binary Bayesian network by the chain rule.
///
/// `parents[v]` lists parents of `v`; `cpt[v][c]` is `P(v = 1 | parent config c)`,
/// where the first parent is the most significant bit of `c`.
pub fn bayes_net_joint(parents: &[Vec<usize>], cpt: &[Vec<f64>]) -> Vec<f64> {
    let n = parents.len();
    (0..1usize << n)
        .map(|s| {
            let x = bits(s, n);
            (0..n)
                .map(|v| {
                    let c = parents[v].iter().fold(0, |acc, &u| acc * 2 + x[u]);
                    let p1 = cpt[v][c];
                    if x[v] == 1 {
                        p1
                    } else {
                        1.0 - p1
                    }
                })
                .product()
        })
        .collect()
}

/// Random DAG on `n` nodes: a random order, each forward pair joined with probability 1/2.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut parents = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.5) {
                parents[order[b]].push(order[a]);
            }
        }
    }
    for p in &mut parents {
        p.sort_unstable();
    }
    parents
}

/// Edges of the moral graph as sorted pairs.
pub fn moral_edges(parents: &[Vec<usize>]) -> std::collections::BTreeSet<(usize, usize)> {
    let mut out = std::collections::BTreeSet::new();
    for (v, ps) in parents.iter().enumerate() {
        for &u in ps {
            out.insert((u.min(v), u.max(v)));
        }
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                out.insert((a.min(b), a.max(b)));
            }
        }
    }
    out
}

pub fn random_cpts<R: Rng>(rng: &mut R, parents: &[Vec<usize>], lo: f64, hi: f64) -> Vec<Vec<f64>> {
    parents
        .iter()
        .map(|ps| (0..1usize << ps.len()).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

pub mod models;
pub use models::*;
