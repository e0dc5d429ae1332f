//! Experiment harness: threshold sweeps over the synthetic families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::decide_edge_known_order;
use crate::domain::{Assignment, Constraint, ConstraintSet, FeatureSpec, SampleTable, TabularDistribution, VariableSet};
use crate::effects::{ace_bounds, ace_from_solution, AceBounds};
use crate::error::{Error, Result};
use crate::numeric::trapezoid;
use crate::simulate::{
    cause_names, derive_seed, draw_instance, split_pairwise, split_pairwise_exact, Family, ForcedEdges, ScmInstance,
    EFFECT, NO_FORCING, N_CAUSES,
};
use crate::solver::{fit, CauseMarginal, MaxEntProblem, MaxEntSolution, SolverConfig};

/// Seed streams; each repetition derives its instance seed from `(master, stream, rep)`.
const STREAM_ROC: u64 = 1;
const STREAM_TPR: u64 = 2;
const STREAM_ACE_FIG: u64 = 3;
const STREAM_IDENTIFICATION: u64 = 4;

/// Slack floor for exact moments sitting on the edge of their feature's range,
/// where the exact multiplier would be infinite.
pub const BOUNDARY_SLACK: f64 = 1e-6;

/// Give every constraint whose target is at an end of its feature's range at least [`BOUNDARY_SLACK`].
pub fn floor_boundary_slack(set: &mut ConstraintSet, vars: &VariableSet) -> Result<()> {
    let ranges = set
        .constraints
        .iter()
        .map(|c| {
            let f = set.feature(&c.feature_id).ok_or_else(|| Error::InvalidConstraint {
                feature_id: c.feature_id.clone(),
                reason: "unknown feature".into(),
            })?;
            Ok(f.resolve(vars)?.range(vars))
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, (lo, hi)) in set.constraints.iter_mut().zip(ranges) {
        if c.target - lo < 1e-12 || hi - c.target < 1e-12 {
            c.slack = c.slack.max(BOUNDARY_SLACK);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PxMode {
    /// The true distribution of the causes is handed to the fit.
    Known,
    /// The cause distribution is itself a maximum-entropy fit to cause-only moments.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MomentSource {
    /// Empirical moments of `n` sampled rows.
    Sampled { n: usize },
    /// Population moments of the exact joint.
    Exact,
}

/// Which cause-only moments feed the estimated cause marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CauseMoments {
    #[default]
    Univariate,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub px: PxMode,
    pub moments: MomentSource,
    pub cause_moments: CauseMoments,
    /// Slack is `slack_scale / sqrt(M)` for a moment estimated from `M` rows.
    pub slack_scale: f64,
    pub solver: SolverConfig,
}

impl PipelineConfig {
    /// Defaults: slack scale 1 for sampled moments, strict tolerance and no slack for exact ones.
    pub fn new(px: PxMode, moments: MomentSource) -> Self {
        let (slack_scale, solver) = match moments {
            MomentSource::Sampled { .. } => (1.0, SolverConfig::default()),
            MomentSource::Exact => (0.0, SolverConfig::strict()),
        };
        PipelineConfig {
            px,
            moments,
            cause_moments: CauseMoments::Univariate,
            slack_scale,
            solver,
        }
    }
}

/// Constraints of one instance: pairwise effect-cause conditional means and,
/// for the estimated mode, cause-only moments.
fn instance_constraints(inst: &ScmInstance, exact: &TabularDistribution, cfg: &PipelineConfig) -> Result<ConstraintSet> {
    let (pairs, table) = match cfg.moments {
        MomentSource::Sampled { n } => {
            let table = inst.sample(n);
            (split_pairwise(&table, EFFECT)?, Some(table))
        }
        MomentSource::Exact => (split_pairwise_exact(exact, EFFECT)?, None),
    };
    let mut set = ConstraintSet::new();
    for s in pairs {
        set = set.merge(s)?;
    }
    if cfg.px == PxMode::Estimated {
        let causes = cause_names();
        let mut feats: Vec<FeatureSpec> = causes.iter().map(|c| FeatureSpec::mean(c.as_str(), c)).collect();
        if cfg.cause_moments == CauseMoments::Pairwise {
            for i in 0..causes.len() {
                for j in i + 1..causes.len() {
                    feats.push(FeatureSpec::product(format!("{}*{}", causes[i], causes[j]), &[&causes[i], &causes[j]]));
                }
            }
        }
        for f in feats {
            let target = match &table {
                Some(t) => {
                    let r = f.resolve(t.variables())?;
                    t.rows().iter().map(|row| r.eval(row)).sum::<f64>() / t.len() as f64
                }
                None => exact.expectation(&f)?,
            };
            let mut c = Constraint::mean(&f.id, target);
            if let Some(t) = &table {
                c = c.with_sample_size(t.len());
            }
            set.add_feature(f)?;
            set.push(c);
        }
    }
    set.apply_slack_scale(cfg.slack_scale);
    if cfg.moments == MomentSource::Exact {
        floor_boundary_slack(&mut set, exact.variables())?;
    }
    Ok(set)
}

/// Fit the causal-order model of `X0` for one instance.
pub fn fit_instance(inst: &ScmInstance, cfg: &PipelineConfig) -> Result<MaxEntSolution> {
    let exact = inst.exact_joint();
    fit_instance_with(inst, &exact, cfg)
}

fn fit_instance_with(inst: &ScmInstance, exact: &TabularDistribution, cfg: &PipelineConfig) -> Result<MaxEntSolution> {
    let set = instance_constraints(inst, exact, cfg)?;
    let marginal = match cfg.px {
        PxMode::Known => CauseMarginal::Known(exact.marginalize(&cause_names())?),
        PxMode::Estimated => CauseMarginal::Estimated,
    };
    let problem = MaxEntProblem::conditional(exact.variables().clone(), set, EFFECT, marginal)
        .with_config(cfg.solver.clone())
        .with_seed(inst.seed);
    fit(&problem)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RepStatus {
    Ok,
    /// The optimizer stopped short of the tolerance.
    NotConverged,
    /// The repetition could not be set up (for example an empty conditioning cell).
    Failed { reason: String },
}

/// One repetition of an edge-detection experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub rep: usize,
    pub seed: u64,
    pub edges: [bool; N_CAUSES],
    pub theta: Option<[f64; N_CAUSES]>,
    /// True ACE of each cause on the effect.
    pub ace: [f64; N_CAUSES],
    pub iterations: usize,
    #[serde(flatten)]
    pub status: RepStatus,
}

fn run_rep(family: Family, seed: u64, rep: usize, forced: &ForcedEdges, cfg: &PipelineConfig) -> Result<Repetition> {
    let inst = draw_instance(family, seed, forced);
    let exact = inst.exact_joint();
    let mut ace = [0.0; N_CAUSES];
    for (i, a) in ace.iter_mut().enumerate() {
        *a = inst.ace(i + 1)?;
    }
    let mut out = Repetition {
        rep,
        seed,
        edges: inst.edges,
        theta: None,
        ace,
        iterations: 0,
        status: RepStatus::Ok,
    };
    match fit_instance_with(&inst, &exact, cfg) {
        Ok(sol) => {
            let mut theta = [0.0; N_CAUSES];
            for (i, c) in cause_names().iter().enumerate() {
                theta[i] = decide_edge_known_order(&sol, c, EFFECT, 0.0)?.statistic;
            }
            out.theta = Some(theta);
            out.iterations = sol.iterations;
        }
        Err(Error::NotConverged(sol)) => {
            out.iterations = sol.iterations;
            out.status = RepStatus::NotConverged;
        }
        Err(e @ (Error::EmptyCell { .. } | Error::InfeasibleTarget { .. } | Error::ZeroSupportCondition { .. })) => {
            out.status = RepStatus::Failed { reason: e.to_string() };
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn run_reps(family: Family, master: u64, stream: u64, reps: usize, forced: &ForcedEdges, cfg: &PipelineConfig) -> Result<Vec<Repetition>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if let MomentSource::Sampled { n: 0 } = cfg.moments {
        return Err(Error::InvalidConfig("sample size must be at least 1".into()));
    }
    let out: Vec<Repetition> = (0..reps)
        .into_par_iter()
        .map(|rep| run_rep(family, derive_seed(master, stream, rep as u64), rep, forced, cfg))
        .collect::<Result<_>>()?;
    if out.iter().all(|r| r.theta.is_none()) {
        return Err(Error::AllRepetitionsDropped(reps));
    }
    Ok(out)
}

/// Fit of `X0` given all causes whose constraints pin down `P(X0, Z)` (the
/// mean of `X0` in every cell of the other causes `Z`) and `P(X0, X_cause)`
/// (the mean of `X0 * X_cause`), from the exact joint. Causes are 1-based.
///
/// Cells of `Z` where `X0` is deterministic force the model there and carry
/// no information about the cause; they are removed and the product target
/// adjusted by their contribution. `None` when every cell is deterministic.
pub fn identification_fit(exact: &TabularDistribution, cause: usize, solver: &SolverConfig) -> Result<Option<MaxEntSolution>> {
    let names = cause_names();
    let xi = names
        .get(cause.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidConfig(format!("cause index {cause} out of range")))?
        .clone();
    let vars = exact.variables().clone();
    let zs: Vec<String> = names.iter().filter(|c| **c != xi).cloned().collect();
    let zvars = vars.subset(&zs)?;
    let cvars = vars.subset(&names)?;
    let y = FeatureSpec::mean(EFFECT, EFFECT);
    let yx = FeatureSpec::product(format!("{EFFECT}*{xi}"), &[EFFECT, xi.as_str()]);

    let mut set = ConstraintSet::new();
    set.add_feature(y.clone())?;
    set.add_feature(yx.clone())?;
    let pz = exact.marginalize(&zs)?;
    let mut deterministic = vec![false; pz.probs().len()];
    let (mut removed_mass, mut removed_moment) = (0.0, 0.0);
    for (k, state) in zvars.states(usize::MAX)?.enumerate() {
        let cond = Assignment::from_state(&zvars, &state);
        let mass = pz.probs()[k];
        if mass <= 0.0 {
            continue;
        }
        let m = exact.conditional_expectation(&y, &cond)?;
        if !(1e-12..=1.0 - 1e-12).contains(&m) {
            deterministic[k] = true;
            removed_mass += mass;
            let mut with_cause = cond.entries().to_vec();
            with_cause.push((xi.clone(), "1".into()));
            removed_moment += m * exact.prob_event(&Assignment::new(with_cause))?;
        } else {
            set.push(Constraint::cond_mean(EFFECT, cond, m));
        }
    }
    let kept = 1.0 - removed_mass;
    if kept < 1e-12 {
        return Ok(None);
    }
    let target = (exact.expectation(&yx)? - removed_moment) / kept;
    set.push(Constraint::mean(yx.id.clone(), target));
    floor_boundary_slack(&mut set, &vars)?;

    let full = exact.marginalize(&names)?;
    let weights = cvars
        .states(usize::MAX)?
        .zip(full.probs())
        .map(|(state, &p)| {
            let z: Vec<usize> = zs.iter().map(|n| state[cvars.index_of(n).expect("cause")]).collect();
            if deterministic[zvars.state_index(&z)] {
                0.0
            } else {
                p
            }
        })
        .collect();
    let cause_marginal = TabularDistribution::from_weights(cvars, weights)?;
    let problem = MaxEntProblem::conditional(vars, set, EFFECT, CauseMarginal::Known(cause_marginal)).with_config(solver.clone());
    fit(&problem).map(Some)
}

/// Per-cause theta from [`identification_fit`] on `reps` instances of `family`.
pub fn run_identification(family: Family, reps: usize, master: u64, solver: &SolverConfig) -> Result<Vec<Repetition>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(master, STREAM_IDENTIFICATION, rep as u64);
            let inst = draw_instance(family, seed, &NO_FORCING);
            let exact = inst.exact_joint();
            let mut out = Repetition {
                rep,
                seed,
                edges: inst.edges,
                theta: None,
                ace: [0.0; N_CAUSES],
                iterations: 0,
                status: RepStatus::Ok,
            };
            let mut theta = [0.0; N_CAUSES];
            for i in 0..N_CAUSES {
                out.ace[i] = inst.ace(i + 1)?;
                match identification_fit(&exact, i + 1, solver) {
                    Ok(None) => {}
                    Ok(Some(sol)) => {
                        out.iterations = out.iterations.max(sol.iterations);
                        theta[i] = decide_edge_known_order(&sol, &format!("X{}", i + 1), EFFECT, 0.0)?.statistic;
                    }
                    Err(Error::NotConverged(sol)) => {
                        out.iterations = out.iterations.max(sol.iterations);
                        out.status = RepStatus::NotConverged;
                        return Ok(out);
                    }
                    Err(e) => return Err(e),
                }
            }
            out.theta = Some(theta);
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocConfig {
    pub family: Family,
    pub reps: usize,
    pub seed: u64,
    /// Number of evenly spaced thresholds on `[0, 1]`.
    pub thresholds: usize,
    pub forced: ForcedEdges,
    pub pipeline: PipelineConfig,
}

impl RocConfig {
    pub fn new(family: Family, pipeline: PipelineConfig) -> Self {
        RocConfig {
            family,
            reps: 100,
            seed: 0,
            thresholds: 101,
            forced: NO_FORCING,
            pipeline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub config: RocConfig,
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub retained: usize,
    pub dropped: usize,
    pub repetitions: Vec<Repetition>,
}

/// Linear grid of `k >= 2` thresholds from 0 to 1.
pub fn threshold_grid(k: usize) -> Vec<f64> {
    let k = k.max(2);
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

/// Sweep thresholds over per-repetition theta values; an edge is declared when `theta >= t`.
pub fn roc_points(reps: &[Repetition], thresholds: &[f64]) -> Vec<RocPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for r in reps {
                let Some(theta) = r.theta else { continue };
                for (e, th) in r.edges.iter().zip(theta) {
                    match (*e, th >= t) {
                        (true, true) => tp += 1,
                        (true, false) => fn_ += 1,
                        (false, true) => fp += 1,
                        (false, false) => tn += 1,
                    }
                }
            }
            let rate = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
            RocPoint {
                threshold: t,
                tpr: rate(tp, fn_),
                fpr: rate(fp, tn),
                tp,
                fp,
                tn,
                fn_,
            }
        })
        .collect()
}

/// Trapezoid area under the (FPR, TPR) points, anchored at (0, 0) and (1, 1).
pub fn auc(points: &[RocPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    trapezoid(&xy)
}

pub fn run_roc(cfg: &RocConfig) -> Result<RocCurve> {
    let reps = run_reps(cfg.family, cfg.seed, STREAM_ROC, cfg.reps, &cfg.forced, &cfg.pipeline)?;
    let points = roc_points(&reps, &threshold_grid(cfg.thresholds));
    let retained = reps.iter().filter(|r| r.theta.is_some()).count();
    Ok(RocCurve {
        config: cfg.clone(),
        auc: auc(&points),
        points,
        retained,
        dropped: reps.len() - retained,
        repetitions: reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprConfig {
    pub family: Family,
    pub reps: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Number of equal-count bins of |ACE|.
    pub bins: usize,
    pub pipeline: PipelineConfig,
}

impl TprConfig {
    pub fn new(family: Family, pipeline: PipelineConfig) -> Self {
        TprConfig {
            family,
            reps: 500,
            seed: 0,
            threshold: 0.15,
            bins: 5,
            pipeline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprBin {
    pub ace_low: f64,
    pub ace_high: f64,
    pub count: usize,
    pub detected: usize,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprCurve {
    pub config: TprConfig,
    pub bins: Vec<TprBin>,
    pub retained: usize,
    pub dropped: usize,
    pub repetitions: Vec<Repetition>,
}

impl TprCurve {
    /// Number of adjacent bin pairs where the rate goes down.
    pub fn inversions(&self) -> usize {
        self.bins.windows(2).filter(|w| w[1].tpr < w[0].tpr).count()
    }
}

/// Detection rate of the always-present `X1 -> X0` edge, binned by its true |ACE|.
pub fn run_tpr_vs_ace(cfg: &TprConfig) -> Result<TprCurve> {
    if cfg.bins == 0 {
        return Err(Error::InvalidConfig("bins must be at least 1".into()));
    }
    let mut forced = NO_FORCING;
    forced[0] = Some(true);
    let reps = run_reps(cfg.family, cfg.seed, STREAM_TPR, cfg.reps, &forced, &cfg.pipeline)?;
    let mut kept: Vec<(f64, bool)> = reps
        .iter()
        .filter_map(|r| r.theta.map(|th| (r.ace[0].abs(), th[0] >= cfg.threshold)))
        .collect();
    kept.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite ACE"));
    let n = kept.len();
    let bins = (0..cfg.bins)
        .filter_map(|b| {
            let (lo, hi) = (b * n / cfg.bins, (b + 1) * n / cfg.bins);
            let slice = &kept[lo..hi];
            let first = slice.first()?;
            let detected = slice.iter().filter(|x| x.1).count();
            Some(TprBin {
                ace_low: first.0,
                ace_high: slice.last().expect("non-empty").0,
                count: slice.len(),
                detected,
                tpr: detected as f64 / slice.len() as f64,
            })
        })
        .collect();
    Ok(TprCurve {
        config: cfg.clone(),
        bins,
        retained: n,
        dropped: reps.len() - n,
        repetitions: reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceFigConfig {
    pub family: Family,
    pub variants: usize,
    pub seed: u64,
    /// Cause whose effect on `X0` is estimated; its edge is forced present.
    pub treatment: usize,
    pub moments: MomentSource,
    pub solver: SolverConfig,
}

impl AceFigConfig {
    pub fn new() -> Self {
        AceFigConfig {
            family: Family::C,
            variants: 10,
            seed: 0,
            treatment: 3,
            moments: MomentSource::Exact,
            solver: SolverConfig::strict(),
        }
    }
}

impl Default for AceFigConfig {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceFigRow {
    pub variant: usize,
    pub seed: u64,
    pub true_ace: f64,
    pub point_known: Option<f64>,
    pub point_estimated: Option<f64>,
    pub bounds: AceBounds,
    pub true_within: bool,
    pub known_within: Option<bool>,
    pub estimated_within: Option<bool>,
    /// Why a point estimate is missing, if one is.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceFigTable {
    pub config: AceFigConfig,
    pub rows: Vec<AceFigRow>,
}

fn marginals_for_bounds(
    inst: &ScmInstance,
    exact: &TabularDistribution,
    moments: MomentSource,
    treatment: &str,
    zs: &[String],
) -> Result<(TabularDistribution, TabularDistribution)> {
    let source = match moments {
        MomentSource::Exact => exact.clone(),
        MomentSource::Sampled { n } => inst.sample(n).empirical_distribution()?,
    };
    let mut scope = vec![treatment.to_string()];
    scope.extend(zs.iter().cloned());
    Ok((source.marginalize(&[treatment, EFFECT])?, source.marginalize(&scope)?))
}

fn ace_row(cfg: &AceFigConfig, variant: usize) -> Result<AceFigRow> {
    let seed = derive_seed(cfg.seed, STREAM_ACE_FIG, variant as u64);
    let mut forced = NO_FORCING;
    forced[cfg.treatment - 1] = Some(true);
    let inst = draw_instance(cfg.family, seed, &forced);
    let exact = inst.exact_joint();
    let treatment = format!("X{}", cfg.treatment);
    let zs: Vec<String> = cause_names().into_iter().filter(|c| *c != treatment).collect();
    let true_ace = inst.ace(cfg.treatment)?;
    let (pij, piz) = marginals_for_bounds(&inst, &exact, cfg.moments, &treatment, &zs)?;
    let bounds = ace_bounds(&pij, &piz, &treatment, EFFECT)?;
    let mut notes = Vec::new();
    let mut point = |px: PxMode| -> Result<Option<f64>> {
        let mut pipeline = PipelineConfig::new(px, cfg.moments);
        pipeline.solver = cfg.solver.clone();
        match fit_instance_with(&inst, &exact, &pipeline) {
            Ok(sol) => Ok(Some(ace_from_solution(&sol, &treatment, EFFECT, &zs)?)),
            Err(e @ (Error::NotConverged(_) | Error::EmptyCell { .. } | Error::InfeasibleTarget { .. })) => {
                notes.push(format!("{px:?}: {e}"));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let point_known = point(PxMode::Known)?;
    let point_estimated = point(PxMode::Estimated)?;
    Ok(AceFigRow {
        variant,
        seed,
        true_ace,
        point_known,
        point_estimated,
        true_within: bounds.contains(true_ace),
        known_within: point_known.map(|p| bounds.contains(p)),
        estimated_within: point_estimated.map(|p| bounds.contains(p)),
        bounds: match point_known {
            Some(p) => bounds.with_point(p),
            None => bounds,
        },
        notes,
    })
}

/// True ACE, model-based point ACE under both cause-marginal modes, and the
/// marginal-only bounds, for `variants` instances with the treatment edge present.
pub fn run_ace_fig(cfg: &AceFigConfig) -> Result<AceFigTable> {
    if cfg.variants == 0 {
        return Err(Error::InvalidConfig("variants must be at least 1".into()));
    }
    if !(1..=N_CAUSES).contains(&cfg.treatment) {
        return Err(Error::InvalidConfig(format!("treatment must be a cause index 1..={N_CAUSES}")));
    }
    let rows = (0..cfg.variants)
        .into_par_iter()
        .map(|v| ace_row(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(AceFigTable {
        config: cfg.clone(),
        rows,
    })
}

/// Held-out average log-likelihood of `p(target | rest)` for each slack
/// scale, by `folds`-fold cross-validation on a joint sample.
///
/// Training folds are split pairwise as in the experiments; the cause
/// marginal is the empirical distribution of the training causes.
pub fn cross_validate_slack(table: &SampleTable, target: &str, scales: &[f64], folds: usize, solver: &SolverConfig) -> Result<Vec<(f64, f64)>> {
    if folds < 2 || table.len() < folds {
        return Err(Error::InvalidConfig("need at least two folds and one row per fold".into()));
    }
    let vars = table.variables().clone();
    let j = vars.index_of(target)?;
    let causes: Vec<String> = vars.names().filter(|n| *n != target).map(str::to_string).collect();
    scales
        .iter()
        .map(|&c| {
            let mut total = 0.0;
            let mut count = 0usize;
            for k in 0..folds {
                let (train, test): (Vec<_>, Vec<_>) = table.rows().iter().enumerate().partition(|(i, _)| i % folds != k);
                let train = SampleTable::new(vars.clone(), train.into_iter().map(|(_, r)| r.clone()).collect())?;
                let mut set = ConstraintSet::new();
                for s in split_pairwise(&train, target)? {
                    set = set.merge(s)?;
                }
                set.apply_slack_scale(c);
                let cause = train.select(&causes)?.empirical_distribution()?;
                let problem = MaxEntProblem::conditional(vars.clone(), set, target, CauseMarginal::Known(cause))
                    .with_config(solver.clone());
                let sol = fit(&problem)?;
                let cond = sol.conditional_table()?;
                let cvars = vars.without(target)?;
                for (_, row) in test {
                    let mut cstate = row.clone();
                    let xj = cstate.remove(j);
                    total += cond[cvars.state_index(&cstate)][xj].ln();
                    count += 1;
                }
            }
            Ok((c, total / count as f64))
        })
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn status_label(s: &RepStatus) -> (&'static str, String) {
    match s {
        RepStatus::Ok => ("ok", String::new()),
        RepStatus::NotConverged => ("not_converged", String::new()),
        RepStatus::Failed { reason } => ("failed", reason.clone()),
    }
}

/// One row per repetition: seed, status, edge mask, theta and true ACE per cause.
pub fn write_repetitions_csv<W: std::io::Write>(reps: &[Repetition], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rep".to_string(), "seed".into(), "status".into(), "reason".into(), "iterations".into()];
    for c in cause_names() {
        header.push(format!("edge_{c}"));
    }
    for c in cause_names() {
        header.push(format!("theta_{c}"));
    }
    for c in cause_names() {
        header.push(format!("ace_{c}"));
    }
    w.write_record(&header)?;
    for r in reps {
        let (status, reason) = status_label(&r.status);
        let mut rec = vec![r.rep.to_string(), r.seed.to_string(), status.into(), reason, r.iterations.to_string()];
        rec.extend(r.edges.iter().map(|e| u8::from(*e).to_string()));
        rec.extend((0..N_CAUSES).map(|i| fmt_opt(r.theta.map(|t| t[i]))));
        rec.extend(r.ace.iter().map(|a| a.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

impl RocCurve {
    /// Columns `threshold,tpr,fpr,tp,fp,tn,fn`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold", "tpr", "fpr", "tp", "fp", "tn", "fn"])?;
        for p in &self.points {
            w.write_record([
                p.threshold.to_string(),
                p.tpr.to_string(),
                p.fpr.to_string(),
                p.tp.to_string(),
                p.fp.to_string(),
                p.tn.to_string(),
                p.fn_.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl TprCurve {
    /// Columns `bin,ace_low,ace_high,count,detected,tpr`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "ace_low", "ace_high", "count", "detected", "tpr"])?;
        for (i, b) in self.bins.iter().enumerate() {
            w.write_record([
                i.to_string(),
                b.ace_low.to_string(),
                b.ace_high.to_string(),
                b.count.to_string(),
                b.detected.to_string(),
                b.tpr.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl AceFigTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "variant",
            "seed",
            "true_ace",
            "point_known",
            "point_estimated",
            "lower",
            "upper",
            "true_within",
            "known_within",
            "estimated_within",
        ])?;
        let b = |x: Option<bool>| x.map(|v| u8::from(v).to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.variant.to_string(),
                r.seed.to_string(),
                r.true_ace.to_string(),
                fmt_opt(r.point_known),
                fmt_opt(r.point_estimated),
                r.bounds.lower.to_string(),
                r.bounds.upper.to_string(),
                b(Some(r.true_within)),
                b(r.known_within),
                b(r.estimated_within),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
