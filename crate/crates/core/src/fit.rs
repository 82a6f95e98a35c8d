//! Damped Gauss-Newton least squares for the small curve fits in this crate.
//!
//! Minimizes `Σ ((y_i − f(x_i; p)) / σ_i)²` over a handful of parameters with
//! a Levenberg-style damping term on the normal equations. Step control:
//! accepted steps divide the damping by 10, rejected steps multiply it by 10.
//! Iteration stops when the largest relative parameter change drops below
//! `rel_tol` or after `max_iterations`.

use crate::error::{Error, Result};

/// One observation: abscissa, value and its standard deviation.
///
/// Use `sigma = 1` for unweighted fits.
#[derive(Debug, Clone, Copy)]
pub struct FitPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged when the largest relative parameter change falls below this.
    pub rel_tol: f64,
    /// Converged when an accepted step improves chi² by less than this
    /// relative amount; catches flat directions the parameter criterion
    /// cannot see.
    pub chi2_rel_tol: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_tol: 1e-8,
            chi2_rel_tol: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

/// Fit outcome: parameters, their covariance, and goodness of fit.
///
/// With meaningful absolute `sigma` on the points the covariance is
/// `(JᵀWJ)⁻¹`; for unweighted fits scale it by `chi2/dof` (see
/// [`FitOutcome::scale_covariance_by_residual`]).
#[derive(Debug, Clone)]
pub struct FitOutcome<const P: usize> {
    pub params: [f64; P],
    pub covariance: [[f64; P]; P],
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl<const P: usize> FitOutcome<P> {
    pub fn std_errors(&self) -> [f64; P] {
        let mut out = [0.0; P];
        for (i, item) in out.iter_mut().enumerate() {
            *item = self.covariance[i][i].max(0.0).sqrt();
        }
        out
    }

    pub fn chi2_reduced(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Rescale the covariance by the residual variance, the usual estimate
    /// when the points carry no absolute uncertainties.
    pub fn scale_covariance_by_residual(&mut self) {
        let scale = self.chi2_reduced();
        if !scale.is_finite() {
            return;
        }
        for row in self.covariance.iter_mut() {
            for value in row.iter_mut() {
                *value *= scale;
            }
        }
    }
}

/// Weighted least squares with model `f(x, params)` and analytic gradient
/// `grad(x, params)` (derivatives of the model with respect to each
/// parameter).
pub fn least_squares<const P: usize>(
    points: &[FitPoint],
    init: [f64; P],
    options: FitOptions,
    f: impl Fn(f64, &[f64; P]) -> f64,
    grad: impl Fn(f64, &[f64; P]) -> [f64; P],
) -> Result<FitOutcome<P>> {
    if points.len() < P {
        return Err(Error::InsufficientPoints {
            needed: P,
            got: points.len(),
        });
    }
    if points.iter().any(|p| p.sigma <= 0.0 || !p.sigma.is_finite()) {
        return Err(Error::DegenerateFit("non-positive sigma".into()));
    }

    let chi2_of = |params: &[f64; P]| -> f64 {
        points
            .iter()
            .map(|p| {
                let r = (p.y - f(p.x, params)) / p.sigma;
                r * r
            })
            .sum()
    };

    let mut params = init;
    let mut chi2 = chi2_of(&params);
    if !chi2.is_finite() {
        return Err(Error::DegenerateFit("initial parameters out of range".into()));
    }
    let mut damping = options.initial_damping;
    let mut iterations = 0;

    for iter in 0..options.max_iterations {
        iterations = iter + 1;

        // Normal equations JᵀWJ and JᵀW r for the current parameters.
        let mut jtj = [[0.0; P]; P];
        let mut jtr = [0.0; P];
        for p in points {
            let g = grad(p.x, &params);
            let w = 1.0 / (p.sigma * p.sigma);
            let r = p.y - f(p.x, &params);
            for i in 0..P {
                jtr[i] += w * g[i] * r;
                for j in 0..P {
                    jtj[i][j] += w * g[i] * g[j];
                }
            }
        }

        let mut step = None;
        while damping <= 1e12 {
            let mut damped = jtj;
            for i in 0..P {
                damped[i][i] += damping * jtj[i][i].max(1e-300);
            }
            if let Some(delta) = solve(damped, jtr) {
                let mut trial = params;
                for i in 0..P {
                    trial[i] += delta[i];
                }
                let trial_chi2 = chi2_of(&trial);
                if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                    step = Some((trial, trial_chi2, delta));
                    break;
                }
            }
            damping *= 10.0;
        }

        let Some((trial, trial_chi2, delta)) = step else {
            // No damping level produced a downhill step; report where we are.
            return Err(Error::NonConvergence {
                iterations,
                residual_norm: chi2.sqrt(),
            });
        };

        let max_rel_change = delta
            .iter()
            .zip(trial.iter())
            .map(|(d, p)| (d / p.abs().max(1e-300)).abs())
            .fold(0.0, f64::max);
        let chi2_improvement = chi2 - trial_chi2;

        params = trial;
        let stalled = chi2_improvement <= options.chi2_rel_tol * chi2;
        chi2 = trial_chi2;
        damping = (damping / 10.0).max(1e-12);

        // Hitting the iteration cap is the documented fallback stop; only a
        // failed step search (above) is an error.
        if max_rel_change < options.rel_tol || stalled {
            break;
        }
    }

    // Covariance from the undamped normal matrix at the optimum.
    let mut jtj = [[0.0; P]; P];
    for p in points {
        let g = grad(p.x, &params);
        let w = 1.0 / (p.sigma * p.sigma);
        for i in 0..P {
            for j in 0..P {
                jtj[i][j] += w * g[i] * g[j];
            }
        }
    }
    let covariance = invert(jtj)
        .ok_or_else(|| Error::DegenerateFit("singular normal matrix at optimum".into()))?;

    Ok(FitOutcome {
        params,
        covariance,
        chi2,
        dof: points.len().saturating_sub(P),
        iterations,
    })
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot_row = (col..P)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col];
        for row in (col + 1)..P {
            let factor = a[row][col] / pivot[col];
            for (value, p) in a[row].iter_mut().zip(pivot.iter()).skip(col) {
                *value -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; P];
    for col in (0..P).rev() {
        let mut sum = b[col];
        for k in (col + 1)..P {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn invert<const P: usize>(a: [[f64; P]; P]) -> Option<[[f64; P]; P]> {
    let mut out = [[0.0; P]; P];
    for col in 0..P {
        let mut e = [0.0; P];
        e[col] = 1.0;
        let x = solve(a, e)?;
        for row in 0..P {
            out[row][col] = x[row];
        }
    }
    Some(out)
}
