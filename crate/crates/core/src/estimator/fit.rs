use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::null_space_basis;
use crate::error::{Error, Result};
use crate::likelihood::{full_loglik_raw, loglik_value};
use crate::model::{build_design, MatchRecord, ModelSpec, ParameterVector, SegmentedDesign};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the infinity norm of the reduced gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Newton steps are replaced by gradient steps above this condition
    /// number of the reduced Hessian.
    pub max_condition: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 200,
            max_condition: 1e12,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: ParameterVector,
    pub loglik: f64,
    pub n_params: usize,
    pub n_effective: usize,
    pub n_matches: usize,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub constraint_residuals: Vec<f64>,
    /// Log-likelihood after each accepted iteration, starting point first.
    pub trace: Vec<f64>,
}

/// Relative threshold for a flat direction of the reduced Hessian at the
/// start point.
const FLAT_RELATIVE: f64 = 1e-9;
/// Curvature left at a stationary point below which the maximum is taken to
/// lie at infinity.
const DIVERGENCE_CURVATURE: f64 = 1e-6;
const MAX_HALVINGS: usize = 60;

pub fn fit(records: &[MatchRecord], spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    spec.validate()?;
    let designs = records
        .iter()
        .map(|r| build_design(r, spec))
        .collect::<Result<Vec<_>>>()?;
    fit_designs(&designs, spec, options)
}

pub fn fit_designs(
    designs: &[SegmentedDesign],
    spec: &ModelSpec,
    options: &FitOptions,
) -> Result<FitResult> {
    if designs.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty dataset".into()));
    }
    let layout = spec.layout_fingerprint();
    if designs.iter().any(|d| d.layout != layout) {
        return Err(Error::Spec("designs were not built from this model".into()));
    }
    let n = spec.n_params();
    let (rows, rhs) = spec.constraint_system();
    let ns = null_space_basis(&rows, &rhs, n)?;
    let z = &ns.z;
    let mut x = ns.x0.clone();

    let mut trace = Vec::new();
    let mut iterations = 0;
    let (loglik, gradient_norm, curvature) = loop {
        let r = full_loglik_raw(designs, x.as_slice(), true)?;
        trace.push(r.value);
        let g = z.transpose() * DVector::from_column_slice(&r.gradient);
        let neg_h: DMatrix<f64> = -(z.transpose() * r.hessian.expect("requested") * z);
        let gnorm = g.amax();
        let eig = SymmetricEigen::new(neg_h);
        let (min_mu, max_mu) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &m| (lo.min(m), hi.max(m)));

        if iterations == 0 && z.ncols() > 0 {
            let flat = eig
                .eigenvalues
                .iter()
                .filter(|m| **m <= FLAT_RELATIVE * max_mu)
                .count();
            if flat > 0 {
                return Err(Error::NonIdentifiable { flat_directions: flat });
            }
        }
        if gnorm < options.tolerance {
            break (r.value, gnorm, min_mu);
        }
        if iterations >= options.max_iterations {
            return Err(Error::IterationLimit { iterations, gradient_norm: gnorm });
        }

        let newton = min_mu > 0.0 && max_mu / min_mu <= options.max_condition;
        let d: DVector<f64> = if newton {
            let proj = eig.eigenvectors.transpose() * &g;
            let scaled = DVector::from_fn(proj.len(), |i, _| proj[i] / eig.eigenvalues[i]);
            &eig.eigenvectors * scaled
        } else {
            log::debug!("iteration {iterations}: ill-conditioned Newton system, gradient step");
            &g / max_mu.max(1.0)
        };
        let slope = g.dot(&d);
        let dx = z * &d;

        // roundoff level of ℓ, below which Armijo cannot discriminate
        let noise = 64.0 * f64::EPSILON * r.value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &x + &dx * t;
            let f = loglik_value(designs, candidate.as_slice())?;
            if f.is_finite() {
                let sufficient = f >= r.value + options.armijo * t * slope;
                let at_noise_floor = t == 1.0 && slope <= noise && f >= r.value - noise;
                if sufficient || at_noise_floor {
                    accepted = Some(candidate);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(c) => x = c,
            None => {
                return Err(Error::LineSearch {
                    iteration: iterations,
                    gradient_norm: gnorm,
                })
            }
        }
        iterations += 1;
    };

    if z.ncols() > 0 && curvature < DIVERGENCE_CURVATURE {
        return Err(Error::Divergence(format!(
            "reduced Hessian has curvature {curvature:e} at the stationary point; \
             some coefficient is drifting to infinity (an event type never observed?)"
        )));
    }

    let residuals = rows
        .iter()
        .zip(&rhs)
        .map(|(row, d)| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() - d)
        .collect();
    Ok(FitResult {
        model: spec.name.clone(),
        params: ParameterVector {
            ids: spec.parameter_ids(),
            values: x.as_slice().to_vec(),
        },
        loglik,
        n_params: n,
        n_effective: n - ns.rank,
        n_matches: designs.len(),
        gradient_norm,
        iterations,
        converged: true,
        constraint_residuals: residuals,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventType, RecordedEvent, RegressorKind};
    use chrono::NaiveDate;

    fn record(id: usize, home: &str, away: &str, events: &[(EventType, u32)]) -> MatchRecord {
        let events: Vec<_> = events
            .iter()
            .map(|&(e, m)| {
                let (half, minute) = if m > 45 { (2, m - 45) } else { (1, m) };
                RecordedEvent::new(e, half, minute, 0)
            })
            .collect();
        MatchRecord::new(
            format!("m{id}"),
            "2020",
            NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            crate::model::Fixture::new(home, away),
            0,
            0,
            &events,
        )
        .unwrap()
    }

    #[test]
    fn constant_rate_mle() {
        let mut spec = ModelSpec::empty("c");
        spec.add_process_regressor(EventType::HomeGoal, RegressorKind::Constant, "c");
        let counts = [0usize, 1, 3, 2];
        let records: Vec<_> = counts
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let ev: Vec<_> = (0..k).map(|j| (EventType::HomeGoal, 10 + 20 * j as u32)).collect();
                record(i, "a", "b", &ev)
            })
            .collect();
        let f = fit(&records, &spec, &FitOptions::default()).unwrap();
        let expected = (6.0f64 / 360.0).ln();
        assert!((f.params.values[0] - expected).abs() < 1e-8, "{f:?}");
        assert_eq!(f.n_effective, 1);
        assert!(f.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn unobserved_event_diverges() {
        let mut spec = ModelSpec::empty("c");
        spec.add_process_regressor(EventType::HomeRed, RegressorKind::Constant, "c");
        let records = vec![record(0, "a", "b", &[]), record(1, "a", "b", &[])];
        let err = fit(&records, &spec, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err}");
    }

    #[test]
    fn two_team_g0_is_not_identifiable() {
        let teams = vec!["a".to_string(), "b".to_string()];
        let spec = crate::model::make_named_model("G0", &teams).unwrap();
        let records = vec![
            record(0, "a", "b", &[(EventType::HomeGoal, 20)]),
            record(1, "b", "a", &[(EventType::AwayGoal, 70)]),
            record(2, "a", "b", &[(EventType::AwayGoal, 5), (EventType::HomeGoal, 60)]),
        ];
        let err = fit(&records, &spec, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonIdentifiable { .. }), "{err}");
    }

    #[test]
    fn unconstrained_maher_model_is_not_identifiable() {
        let teams: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut spec = crate::model::make_named_model("G0", &teams).unwrap();
        spec.constraints.clear();
        let mut records = Vec::new();
        for (i, (h, a)) in [("a", "b"), ("b", "c"), ("c", "a"), ("b", "a"), ("c", "b"), ("a", "c")]
            .iter()
            .enumerate()
        {
            records.push(record(i, h, a, &[(EventType::HomeGoal, 30), (EventType::AwayGoal, 60)]));
        }
        let err = fit(&records, &spec, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonIdentifiable { flat_directions: 1 }), "{err}");
        let spec = crate::model::make_named_model("G0", &teams).unwrap();
        let f = fit(&records, &spec, &FitOptions::default()).unwrap();
        assert_eq!((f.n_params, f.n_effective), (7, 6));
        assert!(f.constraint_residuals.iter().all(|r| r.abs() < 1e-10));
    }
}
