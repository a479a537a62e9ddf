use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::OptimError;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Coordinates sampled when the parameter vector is larger than this.
    pub max_coordinates: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            max_coordinates: 64,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub coordinates_checked: usize,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` at `params`.
///
/// The relative error per coordinate is
/// `|g_a − g_n| / max(1e-8, |g_a| + |g_n|)`.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    config: GradCheckConfig,
) -> Result<GradCheckReport, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != params.len() {
        return Err(OptimError::ShapeMismatch {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let coords: Vec<usize> = if params.len() <= config.max_coordinates {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut idx = sample(&mut rng, params.len(), config.max_coordinates).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut x = params.to_vec();
    let mut worst = (0.0_f64, coords.first().copied().unwrap_or(0));
    for &k in &coords {
        let orig = x[k];
        x[k] = orig + config.step;
        let plus = loss(&x);
        x[k] = orig - config.step;
        let minus = loss(&x);
        x[k] = orig;
        for value in [plus, minus] {
            if !value.is_finite() {
                return Err(OptimError::NonFiniteLoss { index: k, value });
            }
        }
        let numeric = (plus - minus) / (2.0 * config.step);
        let a = analytic[k];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel > worst.0 {
            worst = (rel, k);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        coordinates_checked: coords.len(),
        passed: worst.0 < config.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn exact_quadratic_passes() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.3).collect();
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let report = finite_diff_check(quadratic, &x, &g, GradCheckConfig::default()).unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
        assert!(report.passed);
        assert_eq!(report.coordinates_checked, 10);
    }

    #[test]
    fn scaled_gradient_fails_loudly() {
        let x: Vec<f64> = (0..10).map(|i| 0.1 + i as f64).collect();
        let g: Vec<f64> = x.iter().map(|v| 4.0 * v).collect();
        let report = finite_diff_check(quadratic, &x, &g, GradCheckConfig::default()).unwrap();
        assert!(report.max_relative_error > 0.3);
        assert!(!report.passed);
    }

    #[test]
    fn subsamples_large_vectors() {
        let x: Vec<f64> = (0..500).map(|i| i as f64 * 1e-2).collect();
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let report = finite_diff_check(quadratic, &x, &g, GradCheckConfig::default()).unwrap();
        assert_eq!(report.coordinates_checked, 64);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let err = finite_diff_check(|_| f64::INFINITY, &[1.0], &[0.0], GradCheckConfig::default()).unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteLoss { index: 0, .. }));
    }
}
