//! The three synthetic structural causal models: five binary causes
//! `X1..X5` sharing Gaussian latents, and an effect `X0` driven by a
//! thresholded quadratic form of the causes combined with a Bernoulli draw.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{empirical_moments, Conditioning, ConstraintSet, FeatureSpec, SampleTable, TabularDistribution, VariableSet};
use crate::error::{Error, Result};

pub const N_CAUSES: usize = 5;
pub const EFFECT: &str = "X0";

/// `X0..X5`, the effect first.
pub fn variable_names() -> Vec<String> {
    (0..=N_CAUSES).map(|i| format!("X{i}")).collect()
}

pub fn variables() -> VariableSet {
    VariableSet::binary(&variable_names()).expect("fixed names")
}

pub fn cause_names() -> Vec<String> {
    (1..=N_CAUSES).map(|i| format!("X{i}")).collect()
}

/// Independent seed for one `(stream, index)` pair, by SplitMix64 finalization.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Two latents, each shared by a pair of causes; `X5` unconfounded.
    A,
    /// Five latents, each cause an OR of three latent thresholds.
    B,
    /// One latent with interval thresholds; `X2, X3, X4` also depend on `X1, X5`.
    C,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::A, Family::B, Family::C];

    /// Thresholds at which each latent's events change, ascending.
    fn cuts(self) -> [&'static [f64]; N_CAUSES] {
        match self {
            Family::A => [&[0.0, 0.25], &[0.0, 0.25], &[], &[], &[]],
            Family::B => [
                &[0.0, 0.25],
                &[0.25, 0.5],
                &[0.0, 0.25, 0.5],
                &[0.0, 0.25, 0.5],
                &[0.0, 0.25, 0.5],
            ],
            Family::C => [&[-0.25, 0.0, 0.25], &[], &[], &[], &[]],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::A => "a",
            Family::B => "b",
            Family::C => "c",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Family::A),
            "b" => Ok(Family::B),
            "c" => Ok(Family::C),
            _ => Err(Error::InvalidConfig(format!("unknown family `{s}` (expected a, b or c)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicOp {
    And,
    Or,
    Xor,
}

impl LogicOp {
    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            LogicOp::And => a && b,
            LogicOp::Or => a || b,
            LogicOp::Xor => a ^ b,
        }
    }

    /// `P(indicator op Ber(p0) = 1)` for a fixed indicator.
    fn prob_one(self, indicator: bool, p0: f64) -> f64 {
        match (self, indicator) {
            (LogicOp::And, true) => p0,
            (LogicOp::And, false) => 0.0,
            (LogicOp::Or, true) => 1.0,
            (LogicOp::Or, false) => p0,
            (LogicOp::Xor, true) => 1.0 - p0,
            (LogicOp::Xor, false) => p0,
        }
    }
}

/// Per-cause override of the random edge mask: `Some(true)` forces `Xi -> X0`.
pub type ForcedEdges = [Option<bool>; N_CAUSES];

pub const NO_FORCING: ForcedEdges = [None; N_CAUSES];

/// One drawn model. Coefficients of absent edges are already zeroed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmInstance {
    pub family: Family,
    pub seed: u64,
    /// `edges[i]` is whether `X{i+1} -> X0` exists.
    pub edges: [bool; N_CAUSES],
    /// `p[0]` drives the effect's Bernoulli, `p[i]` cause `Xi`.
    pub p: [f64; N_CAUSES + 1],
    pub a: [f64; N_CAUSES],
    pub b: [[f64; N_CAUSES]; N_CAUSES],
    pub op: LogicOp,
}

/// Draw a model; every draw happens whatever the forcing, so forcing one
/// edge leaves the other parameters of a seed unchanged.
pub fn draw_instance(family: Family, seed: u64, forced: &ForcedEdges) -> ScmInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = Uniform::new(0.1, 0.9).expect("valid range");
    let mut p = [0.0; N_CAUSES + 1];
    for pk in &mut p {
        *pk = unif.sample(&mut rng);
    }
    let mut a = [0.0; N_CAUSES];
    for ai in &mut a {
        *ai = StandardNormal.sample(&mut rng);
    }
    let mut b = [[0.0; N_CAUSES]; N_CAUSES];
    for row in &mut b {
        for bij in row.iter_mut() {
            *bij = StandardNormal.sample(&mut rng);
        }
    }
    let op = [LogicOp::And, LogicOp::Or, LogicOp::Xor][rng.random_range(0..3)];
    let mut edges = [false; N_CAUSES];
    for (e, f) in edges.iter_mut().zip(forced) {
        let coin = rng.random_bool(0.5);
        *e = f.unwrap_or(coin);
    }
    for i in 0..N_CAUSES {
        if !edges[i] {
            a[i] = 0.0;
        }
        for j in 0..N_CAUSES {
            if !(edges[i] && edges[j]) {
                b[i][j] = 0.0;
            }
        }
    }
    ScmInstance {
        family,
        seed,
        edges,
        p,
        a,
        b,
        op,
    }
}

/// Causes from latents `u` and the causes' own Bernoulli draws, optionally
/// with one cause set by intervention (its descendants see the set value).
fn causes(family: Family, u: &[f64; N_CAUSES], ber: &[bool; N_CAUSES], set: Option<(usize, bool)>) -> [bool; N_CAUSES] {
    let flip = |k: usize, latent: bool| ber[k] != latent;
    let mut x = [false; N_CAUSES];
    let fix = |x: &mut [bool; N_CAUSES], k: usize, v: bool| {
        x[k] = match set {
            Some((i, sv)) if i == k => sv,
            _ => v,
        };
    };
    match family {
        Family::A => {
            fix(&mut x, 0, flip(0, u[0] > 0.0));
            fix(&mut x, 1, flip(1, u[0] < 0.25));
            fix(&mut x, 2, flip(2, u[1] > 0.0));
            fix(&mut x, 3, flip(3, u[1] > 0.25));
            fix(&mut x, 4, ber[4]);
        }
        Family::B => {
            fix(&mut x, 0, flip(0, u[0] > 0.0 || u[1] > 0.25 || u[2] > 0.5));
            fix(&mut x, 1, flip(1, u[1] < 0.5 || u[2] < 0.25 || u[3] < 0.0));
            fix(&mut x, 2, flip(2, u[2] > 0.0 || u[3] < 0.25 || u[4] > 0.5));
            fix(&mut x, 3, flip(3, u[3] < 0.5 || u[4] > 0.25 || u[0] < 0.0));
            fix(&mut x, 4, flip(4, u[4] > 0.0 || u[0] < 0.25 || u[1] > 0.5));
        }
        Family::C => {
            let u1 = u[0];
            fix(&mut x, 0, flip(0, u1 > 0.0));
            fix(&mut x, 4, flip(4, -0.25 < u1 && u1 < 0.25));
            let (x1, x5) = (x[0], x[4]);
            fix(&mut x, 1, flip(1, u1 < 0.0) || x1);
            fix(&mut x, 3, flip(3, u1 < -0.25) || x5);
            fix(&mut x, 2, flip(2, u1 > 0.25) || (x1 ^ x5));
        }
    }
    x
}

impl ScmInstance {
    /// The thresholded quadratic form `1[sum a_i x_i + sum b_ij x_i x_j > 0]`.
    pub fn indicator(&self, x: &[bool; N_CAUSES]) -> bool {
        let mut s = 0.0;
        for i in 0..N_CAUSES {
            if !x[i] {
                continue;
            }
            s += self.a[i];
            for j in 0..N_CAUSES {
                if x[j] {
                    s += self.b[i][j];
                }
            }
        }
        s > 0.0
    }

    /// `P(X0 = 1 | causes)`.
    pub fn effect_prob(&self, x: &[bool; N_CAUSES]) -> f64 {
        self.op.prob_one(self.indicator(x), self.p[0])
    }

    fn row(&self, rng: &mut ChaCha8Rng) -> ([f64; N_CAUSES], [bool; N_CAUSES + 1], [bool; N_CAUSES + 1]) {
        let mut u = [0.0; N_CAUSES];
        for ul in &mut u {
            *ul = StandardNormal.sample(rng);
        }
        let mut ber = [false; N_CAUSES + 1];
        for (k, bk) in ber.iter_mut().enumerate() {
            *bk = rng.random_bool(self.p[k]);
        }
        let own: [bool; N_CAUSES] = ber[1..].try_into().expect("five causes");
        let x = causes(self.family, &u, &own, None);
        let x0 = self.op.apply(self.indicator(&x), ber[0]);
        let mut full = [false; N_CAUSES + 1];
        full[0] = x0;
        full[1..].copy_from_slice(&x);
        (u, ber, full)
    }

    /// `n` observations of `X0..X5`, reproducible from the instance seed.
    pub fn sample(&self, n: usize) -> SampleTable {
        self.sample_with_latents(n).0
    }

    /// Observations together with each row's latents and Bernoulli draws
    /// (`draws[0]` is the effect's, `draws[i]` cause `Xi`'s).
    pub fn sample_with_latents(&self, n: usize) -> (SampleTable, Vec<[f64; N_CAUSES]>, Vec<[bool; N_CAUSES + 1]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 1, 0));
        let mut rows = Vec::with_capacity(n);
        let mut lat = Vec::with_capacity(n);
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let (u, ber, x) = self.row(&mut rng);
            rows.push(x.iter().map(|&b| usize::from(b)).collect());
            lat.push(u);
            draws.push(ber);
        }
        let table = SampleTable::new(variables(), rows)
            .expect("binary rows")
            .with_provenance(format!("family={} seed={}", self.family, self.seed));
        (table, lat, draws)
    }

    /// Enumerate latent cells and Bernoulli draws: calls `visit(prob, causes)`
    /// for every combination with positive probability.
    fn enumerate(&self, set: Option<(usize, bool)>, mut visit: impl FnMut(f64, &[bool; N_CAUSES])) {
        let normal = Normal::standard();
        let cuts = self.family.cuts();
        // per latent: (representative value, probability) of each interval
        let cells: Vec<Vec<(f64, f64)>> = cuts
            .iter()
            .map(|c| {
                let mut edges = vec![f64::NEG_INFINITY];
                edges.extend_from_slice(c);
                edges.push(f64::INFINITY);
                edges
                    .windows(2)
                    .map(|w| {
                        let rep = match (w[0].is_finite(), w[1].is_finite()) {
                            (true, true) => 0.5 * (w[0] + w[1]),
                            (false, true) => w[1] - 1.0,
                            (true, false) => w[0] + 1.0,
                            (false, false) => 0.0,
                        };
                        (rep, normal.cdf(w[1]) - normal.cdf(w[0]))
                    })
                    .collect()
            })
            .collect();
        let sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        for idx in 0..total {
            let mut rem = idx;
            let mut u = [0.0; N_CAUSES];
            let mut pu = 1.0;
            for l in (0..N_CAUSES).rev() {
                let (rep, p) = cells[l][rem % sizes[l]];
                rem /= sizes[l];
                u[l] = rep;
                pu *= p;
            }
            for bits in 0..(1u32 << N_CAUSES) {
                let mut ber = [false; N_CAUSES];
                let mut pb = pu;
                for (k, bk) in ber.iter_mut().enumerate() {
                    *bk = bits >> k & 1 == 1;
                    pb *= if *bk { self.p[k + 1] } else { 1.0 - self.p[k + 1] };
                }
                if pb > 0.0 {
                    visit(pb, &causes(self.family, &u, &ber, set));
                }
            }
        }
    }

    /// Exact joint over `X0..X5` (row-major, `X0` slowest).
    pub fn exact_joint(&self) -> TabularDistribution {
        let vars = variables();
        let mut probs = vec![0.0; 1 << (N_CAUSES + 1)];
        self.enumerate(None, |p, x| {
            let p1 = self.effect_prob(x);
            let mut state = vec![0; N_CAUSES + 1];
            for (s, &b) in state[1..].iter_mut().zip(x) {
                *s = usize::from(b);
            }
            probs[vars.state_index(&state)] += p * (1.0 - p1);
            state[0] = 1;
            probs[vars.state_index(&state)] += p * p1;
        });
        TabularDistribution::from_weights(vars, probs).expect("positive mass")
    }

    /// `P(X0 = 1 | do(X_cause = value))` in the structural model, so effects
    /// through other causes are included.
    pub fn interventional(&self, cause: usize, value: bool) -> Result<f64> {
        if !(1..=N_CAUSES).contains(&cause) {
            return Err(Error::UnknownVariable(format!("X{cause}")));
        }
        let mut acc = 0.0;
        self.enumerate(Some((cause - 1, value)), |p, x| acc += p * self.effect_prob(x));
        Ok(acc)
    }

    /// True average causal effect of `X_cause` on `X0`.
    pub fn ace(&self, cause: usize) -> Result<f64> {
        Ok(self.interventional(cause, true)? - self.interventional(cause, false)?)
    }
}

/// Exact joint of the instance; see [`ScmInstance::exact_joint`].
pub fn exact_moments(instance: &ScmInstance) -> TabularDistribution {
    instance.exact_joint()
}

/// One conditional-mean constraint set per cause, as if each pair
/// `(target, cause)` came from a separate dataset: `E[target | cause = v]`
/// for every value `v`, with the cell sizes recorded.
pub fn split_pairwise(table: &SampleTable, target: &str) -> Result<Vec<ConstraintSet>> {
    let vars = table.variables();
    vars.index_of(target)?;
    let feature = FeatureSpec::mean(target, target);
    vars.names()
        .filter(|n| *n != target)
        .map(|cause| {
            let pair = table.select(&[target, cause])?;
            empirical_moments(&pair, std::slice::from_ref(&feature), Some(&Conditioning::on(&[cause])))
        })
        .collect()
}

/// The population counterpart of [`split_pairwise`], from an exact joint.
pub fn split_pairwise_exact(p: &TabularDistribution, target: &str) -> Result<Vec<ConstraintSet>> {
    let vars = p.variables();
    let feature = FeatureSpec::mean(target, target);
    vars.names()
        .filter(|n| *n != target)
        .map(|cause| {
            let ci = vars.index_of(cause)?;
            let mut set = ConstraintSet::new();
            set.add_feature(feature.clone())?;
            for v in &vars.get(ci).domain {
                let cond = crate::domain::Assignment::single(cause, v.as_str());
                let t = p.conditional_expectation(&feature, &cond)?;
                set.push(crate::domain::Constraint::cond_mean(target, cond, t));
            }
            Ok(set)
        })
        .collect()
}
