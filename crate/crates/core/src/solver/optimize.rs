use nalgebra::{DMatrix, DVector};

use super::design::{dot, Design, Eval};
use super::problem::{Objective, SolverConfig};
use crate::error::{Error, Result};
use crate::numeric::soft_threshold;

pub(crate) struct Outcome {
    pub lambda: Vec<f64>,
    pub eval: Eval,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn optimize(design: &Design, config: &SolverConfig) -> Result<Outcome> {
    match config.objective {
        Objective::Dual => proximal_gradient(design, config),
        Objective::SquaredResidual => levenberg_marquardt(design, config),
    }
}

/// Largest violation of the optimality conditions of the dual, in constraint units.
///
/// For a zero multiplier the residual may sit anywhere inside the slack band;
/// for a nonzero one it must sit on the band edge matching the sign.
pub(crate) fn kkt_violation(design: &Design, lambda: &[f64], eval: &Eval) -> f64 {
    (0..design.k)
        .map(|j| {
            let r = eval.moments[j] - design.targets[j];
            let e = design.slacks[j];
            let v = if lambda[j] > 0.0 {
                (r + e).abs()
            } else if lambda[j] < 0.0 {
                (r - e).abs()
            } else {
                (r.abs() - e).max(0.0)
            };
            v / design.unit(j, &eval.aux).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Largest residual beyond the slack band, in constraint units.
pub(crate) fn band_violation(design: &Design, eval: &Eval) -> f64 {
    (0..design.k)
        .map(|j| {
            let r = eval.moments[j] - design.targets[j];
            (r.abs() - design.slacks[j]).max(0.0) / design.unit(j, &eval.aux).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Accelerated proximal gradient (FISTA) with backtracking and gradient restart.
///
/// Starts from zero, so redundant features share weight through the
/// minimum-norm representative and inactive constraints land on exact zeros.
fn proximal_gradient(design: &Design, config: &SolverConfig) -> Result<Outcome> {
    let k = design.k;
    let mut x = vec![0.0; k];
    let ex = design.evaluate(&x, false)?;
    if kkt_violation(design, &x, &ex) < config.tolerance {
        return Ok(Outcome {
            lambda: x,
            eval: ex,
            iterations: 0,
            converged: true,
        });
    }
    let mut ex = ex;
    let mut y = x.clone();
    let mut ey = ex.clone();
    let mut t = 1.0_f64;
    let mut lip = 1.0_f64;
    for it in 1..=config.max_iterations {
        let grad: Vec<f64> = ey.moments.iter().zip(&design.targets).map(|(m, t)| m - t).collect();
        let (xn, en) = loop {
            let xn: Vec<f64> = (0..k)
                .map(|j| soft_threshold(y[j] - grad[j] / lip, design.slacks[j] / lip))
                .collect();
            // an overflowing trial point is a failed decrease test, not an error
            let en = match design.evaluate(&xn, false) {
                Err(Error::NonFinite(_)) if lip <= 1e30 => {
                    lip *= 2.0;
                    continue;
                }
                r => r?,
            };
            let diff: Vec<f64> = xn.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bound = ey.smooth + dot(&grad, &diff) + 0.5 * lip * dot(&diff, &diff);
            if en.smooth <= bound + 1e-12 * (1.0 + ey.smooth.abs()) || lip > 1e30 {
                break (xn, en);
            }
            lip *= 2.0;
        };
        if kkt_violation(design, &xn, &en) < config.tolerance {
            return Ok(Outcome {
                lambda: xn,
                eval: en,
                iterations: it,
                converged: true,
            });
        }
        let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let back: Vec<f64> = y.iter().zip(&xn).map(|(a, b)| a - b).collect();
        if dot(&back, &step) > 0.0 {
            t = 1.0;
            y = xn.clone();
            ey = en.clone();
        } else {
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / tn;
            let yn: Vec<f64> = xn.iter().zip(&step).map(|(a, s)| a + beta * s).collect();
            match design.evaluate(&yn, false) {
                Ok(e) => {
                    y = yn;
                    ey = e;
                    t = tn;
                }
                Err(Error::NonFinite(_)) => {
                    t = 1.0;
                    y = xn.clone();
                    ey = en.clone();
                }
                Err(e) => return Err(e),
            }
        }
        x = xn;
        ex = en;
        lip *= 0.9;
    }
    Ok(Outcome {
        lambda: x,
        eval: ex,
        iterations: config.max_iterations,
        converged: false,
    })
}

fn hinge(design: &Design, eval: &Eval) -> Vec<f64> {
    (0..design.k)
        .map(|j| {
            let r = eval.moments[j] - design.targets[j];
            r.signum() * (r.abs() - design.slacks[j]).max(0.0)
        })
        .collect()
}

/// Levenberg-Marquardt on the squared residuals beyond the slack band.
fn levenberg_marquardt(design: &Design, config: &SolverConfig) -> Result<Outcome> {
    let k = design.k;
    let mut lambda = vec![0.0; k];
    let mut eval = design.evaluate(&lambda, true)?;
    let mut mu = 1e-3;
    let mut iterations = 0;
    for it in 0..=config.max_iterations {
        iterations = it;
        if band_violation(design, &eval) < config.tolerance {
            return Ok(Outcome {
                lambda,
                eval,
                iterations: it,
                converged: true,
            });
        }
        if it == config.max_iterations {
            break;
        }
        let h = hinge(design, &eval);
        let phi = dot(&h, &h);
        let cov = eval.cov.as_ref().expect("covariance requested");
        // rows of inactive residuals drop out of the Jacobian
        let mut jac = cov.clone();
        for (j, hj) in h.iter().enumerate() {
            if *hj == 0.0 {
                jac.row_mut(j).fill(0.0);
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let rhs = -(&jt * DVector::from_column_slice(&h));
        let mut accepted = false;
        for _ in 0..60 {
            let sys = &jtj + DMatrix::identity(k, k) * mu;
            let Some(chol) = sys.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let delta = chol.solve(&rhs);
            let cand: Vec<f64> = lambda.iter().zip(delta.iter()).map(|(l, d)| l + d).collect();
            let ce = match design.evaluate(&cand, true) {
                Ok(e) => e,
                Err(_) => {
                    mu *= 4.0;
                    continue;
                }
            };
            let hc = hinge(design, &ce);
            if dot(&hc, &hc) < phi {
                lambda = cand;
                eval = ce;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                break;
            }
            mu *= 2.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(Outcome {
        lambda,
        eval,
        iterations,
        converged: false,
    })
}
