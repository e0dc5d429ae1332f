//! Model generators shared by the property suites and the acceptance run.

use super::*;
use maxent_merge::causal::{bivariate_basis, exact_constraints, Dag};
use maxent_merge::{fit, CauseMarginal, MaxEntProblem, MaxEntSolution, Result, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const NAMES: [&str; 4] = ["A", "B", "C", "D"];

pub fn basis_fit(p: &TabularDistribution) -> MaxEntSolution {
    let set = exact_constraints(p, &bivariate_basis(p.variables())).unwrap();
    fit(&MaxEntProblem::joint(p.variables().clone(), set).with_config(SolverConfig::strict())).unwrap()
}

pub fn pair_multiplier(sol: &MaxEntSolution, a: &str, b: &str) -> f64 {
    sol.multiplier(&format!("{a}=1&{b}=1"), None)
        .or_else(|| sol.multiplier(&format!("{b}=1&{a}=1"), None))
        .expect("pair feature")
}

pub fn to_dag(parents: &[Vec<usize>]) -> Dag {
    let mut dag = Dag::new(&NAMES[..parents.len()]);
    for (v, ps) in parents.iter().enumerate() {
        for &u in ps {
            dag.add_edge(u, v).unwrap();
        }
    }
    dag
}

/// Three binaries where the outer pair is independent given the middle one,
/// either as a chain through it or as a fork out of it.
pub fn separated_triple(seed: u64) -> (TabularDistribution, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let middle = rng.random_range(0..3);
    let outer: Vec<usize> = (0..3).filter(|&v| v != middle).collect();
    let mut parents = vec![Vec::new(); 3];
    if rng.random_bool(0.5) {
        parents[middle].push(outer[0]);
        parents[outer[1]].push(middle);
    } else {
        parents[outer[0]].push(middle);
        parents[outer[1]].push(middle);
    }
    let cpt = random_cpts(&mut rng, &parents, 0.05, 0.95);
    (dist(&NAMES[..3], bayes_net_joint(&parents, &cpt)), outer[0], outer[1])
}

/// Collider `A -> C <- B` with `P(c | a, b) ∝ exp(u·a·c + v·b·c)`.
///
/// Returns the joint over `(A, B, C)` and the `A=1&B=1` multiplier of its
/// bivariate max-entropy form, `-log[z(1,1) z(0,0) / (z(1,0) z(0,1))]` with
/// `z(a, b) = 1 + exp(u·a + v·b)`.
pub fn indicator_collider(seed: u64) -> (TabularDistribution, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let u = sign(&mut rng) * rng.random_range(0.5..3.0);
    let v = sign(&mut rng) * rng.random_range(0.5..3.0);
    let (pa, pb) = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
    let z = |a: f64, b: f64| 1.0 + (u * a + v * b).exp();
    let probs = (0..8)
        .map(|s| {
            let x = bits(s, 3);
            let (a, b, c) = (x[0] as f64, x[1] as f64, x[2] as f64);
            let ma = if x[0] == 1 { pa } else { 1.0 - pa };
            let mb = if x[1] == 1 { pb } else { 1.0 - pb };
            ma * mb * (u * a * c + v * b * c).exp() / z(a, b)
        })
        .collect();
    let lambda = -(z(1.0, 1.0) * z(0.0, 0.0) / (z(1.0, 0.0) * z(0.0, 1.0))).ln();
    (dist(&NAMES[..3], probs), lambda)
}

/// Random problems on three binaries, each with a strictly positive feasible point.
pub fn random_problem(seed: u64, conditions: bool) -> (MaxEntProblem, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["X1", "X2", "X3"];
    let q = random_simplex(&mut rng, 8, 0.05);
    let (set, rows, _) = random_constraints(&mut rng, &names, &q, 7, conditions);
    let problem = MaxEntProblem::joint(binary_vars(&names), set).with_config(SolverConfig::strict());
    (problem, rows, q)
}

/// A random problem with slacks, plus a multiplier vector whose entries all
/// have magnitude in `[0.2, 2)`.
pub fn gradient_problem(seed: u64, conditional: bool) -> (MaxEntProblem, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let problem = if conditional {
        let q = random_simplex(&mut rng, 8, 0.05);
        let joint = dist(&["T", "A", "B"], q);
        let mut set = ConstraintSet::new();
        let t = FeatureSpec::mean("t", "T");
        set.add_feature(t.clone()).unwrap();
        set.add_feature(FeatureSpec::product("ta", &["T", "A"])).unwrap();
        for c in ["A=0", "A=1", "B=0", "B=1"] {
            let a: Assignment = c.parse().unwrap();
            set.push(Constraint::cond_mean("t", a.clone(), joint.conditional_expectation(&t, &a).unwrap()).with_slack(0.01));
        }
        set.push(Constraint::mean("ta", 0.2));
        let cause = joint.marginalize(&["A", "B"]).unwrap();
        MaxEntProblem::conditional(joint.variables().clone(), set, "T", CauseMarginal::Known(cause))
    } else {
        let (mut problem, _, _) = random_problem(seed, true);
        for c in problem.constraints.constraints.iter_mut() {
            c.slack = rng.random_range(0.0..0.1);
        }
        problem
    };
    let lambda = (0..problem.constraints.len())
        .map(|_| rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    (problem, lambda)
}

/// Largest gap between the analytic dual gradient and central differences with step `h`.
pub fn gradient_error(problem: &MaxEntProblem, lambda: &[f64], h: f64) -> f64 {
    let g = maxent_merge::dual_gradient(problem, lambda).unwrap();
    let d = |l: &[f64]| maxent_merge::dual_objective(problem, l).unwrap();
    (0..lambda.len())
        .map(|j| {
            let (mut up, mut dn) = (lambda.to_vec(), lambda.to_vec());
            up[j] += h;
            dn[j] -= h;
            ((d(&up) - d(&dn)) / (2.0 * h) - g[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Binary model `Z -> T`, `Z -> Y`, `T -> Y` with `confounders` independent
/// binary `Z`s. Variables are ordered `Z1.., T, Y`.
pub struct Confounded {
    pub confounders: usize,
    pub pz: Vec<f64>,
    /// `P(T = 1 | z)` per confounder state.
    pub pt: Vec<f64>,
    /// `P(Y = 1 | t, z)` indexed `[t][z]`.
    pub py: [Vec<f64>; 2],
}

impl Confounded {
    pub fn draw<R: Rng>(rng: &mut R, confounders: usize) -> Self {
        let nz = 1 << confounders;
        let marg: Vec<f64> = (0..confounders).map(|_| rng.random_range(0.1..0.9)).collect();
        let pz = (0..nz)
            .map(|z| {
                bits(z, confounders)
                    .iter()
                    .zip(&marg)
                    .map(|(&b, &m)| if b == 1 { m } else { 1.0 - m })
                    .product()
            })
            .collect();
        Confounded {
            confounders,
            pz,
            pt: (0..nz).map(|_| rng.random_range(0.02..0.98)).collect(),
            py: [
                (0..nz).map(|_| rng.random::<f64>()).collect(),
                (0..nz).map(|_| rng.random::<f64>()).collect(),
            ],
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut n = self.zs();
        n.push("T".into());
        n.push("Y".into());
        n
    }

    pub fn zs(&self) -> Vec<String> {
        (1..=self.confounders).map(|i| format!("Z{i}")).collect()
    }

    pub fn joint(&self) -> TabularDistribution {
        let nz = self.pz.len();
        let mut probs = vec![0.0; nz * 4];
        for z in 0..nz {
            for t in 0..2 {
                for y in 0..2 {
                    let pt = if t == 1 { self.pt[z] } else { 1.0 - self.pt[z] };
                    let py = if y == 1 { self.py[t][z] } else { 1.0 - self.py[t][z] };
                    probs[z * 4 + t * 2 + y] = self.pz[z] * pt * py;
                }
            }
        }
        TabularDistribution::new(VariableSet::binary(&self.names()).unwrap(), probs).unwrap()
    }

    /// `P(Y = 1 | do(T = t))` by truncated factorization.
    pub fn truth(&self, t: usize) -> f64 {
        self.pz.iter().zip(&self.py[t]).map(|(pz, py)| pz * py).sum()
    }

    /// `(P(T, Y), P(T, Z..))`.
    pub fn marginals(&self) -> (TabularDistribution, TabularDistribution) {
        let p = self.joint();
        let mut tz = vec!["T".to_string()];
        tz.extend(self.zs());
        (p.marginalize(&["T", "Y"]).unwrap(), p.marginalize(&tz).unwrap())
    }
}

/// Names `J, I, Z1..Zk` for predicting `J` from `I` and `Z`.
pub fn predictor_names(k: usize) -> Vec<String> {
    let mut n = vec!["J".to_string(), "I".to_string()];
    n.extend((1..=k).map(|i| format!("Z{i}")));
    n
}

/// Conditional max-entropy model of `J` given `(I, Z)` from the pairwise
/// distributions of `p`: `P(J, I)`, `P(J, Z)` as conditional means and
/// `P(I, Z)` as the known cause marginal.
pub fn pairwise_predictor(p: &TabularDistribution, k: usize) -> Result<MaxEntSolution> {
    let names = predictor_names(k);
    let j = FeatureSpec::mean("j", "J");
    let mut set = ConstraintSet::new();
    set.add_feature(j.clone())?;
    let mut conditions: Vec<Assignment> = (0..2).map(|v| Assignment::single("I", v.to_string())).collect();
    for z in 0..1usize << k {
        let text: Vec<String> = bits(z, k).iter().enumerate().map(|(i, b)| format!("Z{}={b}", i + 1)).collect();
        conditions.push(text.join(";").parse()?);
    }
    for c in conditions {
        let t = p.conditional_expectation(&j, &c)?;
        set.push(Constraint::cond_mean("j", c, t));
    }
    let cause = p.marginalize(&names[1..])?;
    let problem = MaxEntProblem::conditional(p.variables().clone(), set, "J", CauseMarginal::Known(cause))
        .with_config(SolverConfig::strict());
    fit(&problem)
}

/// Average log-likelihood of `J` under the max-entropy predictor and under the
/// two bivariate predictors `P(J | I)`, `P(J | Z)` read off `train`, weighted by
/// the state probabilities (or counts) in `eval`.
pub fn predictor_log_likelihoods(sol: &MaxEntSolution, train: &[f64], eval: &[f64], k: usize) -> (f64, f64, f64) {
    let n = k + 2;
    let names = predictor_names(k);
    let states: Vec<Vec<usize>> = (0..1usize << n).map(|s| bits(s, n)).collect();
    // P(J = x[0] | the variables in `keep`) from the training table
    let conditional = |x: &[usize], keep: &dyn Fn(usize) -> bool| {
        let same = |y: &[usize]| (1..n).filter(|&i| keep(i)).all(|i| x[i] == y[i]);
        let den: f64 = states.iter().zip(train).filter(|(y, _)| same(y)).map(|(_, w)| w).sum();
        let num: f64 = states.iter().zip(train).filter(|(y, _)| same(y) && y[0] == x[0]).map(|(_, w)| w).sum();
        num / den
    };
    let total: f64 = eval.iter().sum();
    let (mut maxent, mut by_i, mut by_z) = (0.0, 0.0, 0.0);
    for (x, &w) in states.iter().zip(eval) {
        if w == 0.0 {
            continue;
        }
        let text: Vec<String> = names.iter().zip(x).map(|(v, b)| format!("{v}={b}")).collect();
        let a: Assignment = text.join(";").parse().unwrap();
        maxent += w * sol.conditional_prob(&a).unwrap().ln();
        by_i += w * conditional(x, &|i| i == 1).ln();
        by_z += w * conditional(x, &|i| i >= 2).ln();
    }
    (maxent / total, by_i / total, by_z / total)
}

/// Category counts of `n` draws from `p`.
pub fn sample_counts<R: Rng>(rng: &mut R, p: &[f64], n: usize) -> Vec<f64> {
    use rand::distr::{weighted::WeightedIndex, Distribution};
    let d = WeightedIndex::new(p).unwrap();
    let mut counts = vec![0.0; p.len()];
    for _ in 0..n {
        counts[d.sample(rng)] += 1.0;
    }
    counts
}
