//! Comparison forecasters that ignore the patient-flow structure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dist::sample_std_normal;
use crate::error::{AcedError, Result};

/// Coefficient prior precision on standardised features.
pub const LR_PRIOR_PRECISION: f64 = 1e-6;
/// Shape and rate of the inverse-gamma noise prior.
pub const LR_NOISE_PRIOR: f64 = 1e-6;
pub const ADMISSION_LAGS: usize = 21;

/// Lower median of the training counts, repeated `horizon` times.
pub fn median_forecast(train: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(AcedError::Input("median forecast needs training data".into()));
    }
    let mut sorted = train.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(vec![sorted[(sorted.len() - 1) / 2]; horizon])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrFeatureMode {
    DayOnly,
    DayPlusAdmissions21,
}

/// Feature rows for days `first..=last`. `admissions[t]` is the count on day
/// `t`, starting at day 0; earlier days count as zero.
pub fn lr_features(mode: LrFeatureMode, admissions: &[i64], first: usize, last: usize) -> Vec<Vec<f64>> {
    (first..=last)
        .map(|t| {
            let mut row = vec![t as f64];
            if mode == LrFeatureMode::DayPlusAdmissions21 {
                for lag in 1..=ADMISSION_LAGS {
                    let a = t.checked_sub(lag).and_then(|d| admissions.get(d)).copied().unwrap_or(0);
                    row.push(a as f64);
                }
            }
            row
        })
        .collect()
}

/// Conjugate normal / inverse-gamma linear regression with a flat intercept
/// and features standardised on the training rows.
#[derive(Debug, Clone)]
pub struct BayesLr {
    kept: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    n: usize,
    coef_mean: DVector<f64>,
    /// Cholesky factor of the posterior precision (up to the noise variance).
    precision_chol: DMatrix<f64>,
    shape: f64,
    rate: f64,
}

impl BayesLr {
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return Err(AcedError::Input(format!("{} feature rows for {n} targets", x.len())));
        }
        let p_all = x[0].len();
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for j in 0..p_all {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                kept.push(j);
                means.push(m);
                sds.push(var.sqrt());
            } else {
                log::warn!("dropping regression feature {j}: no variation in the training data");
            }
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let p = kept.len();
        let xs = DMatrix::from_fn(n, p, |i, k| (x[i][kept[k]] - means[k]) / sds[k]);
        let precision = xs.transpose() * &xs + DMatrix::identity(p, p) * LR_PRIOR_PRECISION;
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| AcedError::Input("regression precision is not positive definite".into()))?;
        let coef_mean = chol.solve(&(xs.transpose() * &yc));
        let quad = yc.dot(&yc) - coef_mean.dot(&(&precision * &coef_mean));
        Ok(Self {
            kept,
            means,
            sds,
            y_mean,
            n,
            coef_mean,
            precision_chol: chol.l(),
            shape: LR_NOISE_PRIOR + n as f64 / 2.0,
            rate: LR_NOISE_PRIOR + 0.5 * quad.max(0.0),
        })
    }

    fn standardise(&self, row: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.kept.len(),
            self.kept.iter().enumerate().map(|(k, &j)| (row[j] - self.means[k]) / self.sds[k]),
        )
    }

    /// Coefficients on the standardised features.
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef_mean
    }

    pub fn predictive_mean(&self, row: &[f64]) -> f64 {
        self.y_mean + self.standardise(row).dot(&self.coef_mean)
    }

    /// One posterior predictive draw per row, sharing a single parameter draw.
    pub fn sample_predictive<R: Rng + ?Sized>(&self, rows: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
        let precision = Gamma::new(self.shape, 1.0 / self.rate).expect("positive shape and rate").sample(rng);
        let sigma = (1.0 / precision).sqrt();
        let p = self.kept.len();
        let z = DVector::from_fn(p, |_, _| sample_std_normal(rng));
        // L^T u = z gives u ~ N(0, (L L^T)^-1).
        let u = self
            .precision_chol
            .transpose()
            .solve_upper_triangular(&z)
            .unwrap_or_else(|| DVector::zeros(p));
        let coef = &self.coef_mean + u * sigma;
        let intercept = self.y_mean + sigma / (self.n as f64).sqrt() * sample_std_normal(rng);
        rows.iter()
            .map(|r| intercept + self.standardise(r).dot(&coef) + sigma * sample_std_normal(rng))
            .collect()
    }
}

/// Posterior predictive samples for days `T+1..=T+horizon`, where `train`
/// holds days `1..=T` and `admissions` days `0..=T+horizon`.
pub fn bayes_lr_forecast<R: Rng + ?Sized>(
    train: &[f64],
    admissions: &[i64],
    mode: LrFeatureMode,
    horizon: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let t_end = train.len();
    if t_end == 0 {
        return Err(AcedError::Input("regression needs training data".into()));
    }
    if mode == LrFeatureMode::DayPlusAdmissions21 && admissions.len() < t_end + horizon + 1 {
        return Err(AcedError::Input(format!(
            "admissions cover days 0..{} but the forecast needs day {}",
            admissions.len(),
            t_end + horizon
        )));
    }
    let model = BayesLr::fit(&lr_features(mode, admissions, 1, t_end), train)?;
    if horizon == 0 {
        return Ok(vec![Vec::new(); n_samples]);
    }
    let rows = lr_features(mode, admissions, t_end + 1, t_end + horizon);
    Ok((0..n_samples).map(|_| model.sample_predictive(&rows, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_examples() {
        assert_eq!(median_forecast(&[1.0, 2.0, 3.0], 3).unwrap(), vec![2.0; 3]);
        assert_eq!(median_forecast(&[4.0; 5], 2).unwrap(), vec![4.0; 2]);
        assert_eq!(median_forecast(&[4.0, 1.0, 3.0, 2.0], 1).unwrap(), vec![2.0]);
        assert!(median_forecast(&[], 1).is_err());
    }

    #[test]
    fn feature_rows() {
        let adm: Vec<i64> = (0..30).collect();
        let rows = lr_features(LrFeatureMode::DayPlusAdmissions21, &adm, 3, 3);
        assert_eq!(rows[0].len(), 22);
        assert_eq!(rows[0][..5], [3.0, 2.0, 1.0, 0.0, 0.0]);
        assert_eq!(lr_features(LrFeatureMode::DayOnly, &adm, 1, 2), vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn exact_line_is_extrapolated() {
        let train: Vec<f64> = (1..=20).map(|t| 3.0 + 2.0 * t as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = bayes_lr_forecast(&train, &[], LrFeatureMode::DayOnly, 5, 200, &mut rng).unwrap();
        for d in &draws {
            for (h, v) in d.iter().enumerate() {
                let truth = 3.0 + 2.0 * (21 + h) as f64;
                assert!((v - truth).abs() < 0.05, "{v} vs {truth}");
            }
        }
    }

    #[test]
    fn zero_admissions_match_day_only() {
        let train: Vec<f64> = [5.0, 7.0, 6.0, 9.0, 12.0, 11.0, 14.0].to_vec();
        let adm = vec![0i64; 12];
        let a = BayesLr::fit(&lr_features(LrFeatureMode::DayOnly, &adm, 1, 7), &train).unwrap();
        let b = BayesLr::fit(&lr_features(LrFeatureMode::DayPlusAdmissions21, &adm, 1, 7), &train).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let rows_a = lr_features(LrFeatureMode::DayOnly, &adm, 8, 11);
        let rows_b = lr_features(LrFeatureMode::DayPlusAdmissions21, &adm, 8, 11);
        assert_eq!(a.sample_predictive(&rows_a, &mut r1), b.sample_predictive(&rows_b, &mut r2));
    }

    #[test]
    fn posterior_mean_matches_ridge_normal_equations() {
        // Two standardised features, solved with Cramer's rule.
        let x = vec![
            vec![1.0, 4.0],
            vec![2.0, 1.0],
            vec![3.0, 5.0],
            vec![4.0, 2.0],
            vec![5.0, 8.0],
        ];
        let y = [2.0, 1.5, 4.0, 3.0, 7.5];
        let n = 5.0;
        let col = |j: usize| -> Vec<f64> {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
            x.iter().map(|r| (r[j] - m) / sd).collect()
        };
        let (a, b) = (col(0), col(1));
        let ym = y.iter().sum::<f64>() / n;
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
        let (s11, s12, s22) = (dot(&a, &a) + 1e-6, dot(&a, &b), dot(&b, &b) + 1e-6);
        let (r1, r2) = (dot(&a, &yc), dot(&b, &yc));
        let det = s11 * s22 - s12 * s12;
        let beta = [(r1 * s22 - s12 * r2) / det, (s11 * r2 - s12 * r1) / det];

        let m = BayesLr::fit(&x, &y).unwrap();
        assert!((m.coefficients()[0] - beta[0]).abs() < 1e-8);
        assert!((m.coefficients()[1] - beta[1]).abs() < 1e-8);
        let row = [6.0, 3.0];
        let za = (6.0 - 3.0) / (2.0f64).sqrt();
        let mb = 4.0;
        let sdb = ((0.0 + 9.0 + 1.0 + 4.0 + 16.0) / 5.0f64).sqrt();
        let expected = ym + beta[0] * za + beta[1] * (3.0 - mb) / sdb;
        assert!((m.predictive_mean(&row) - expected).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn median_minimises_training_mae(values in proptest::collection::vec(0u32..50, 1..25)) {
            let train: Vec<f64> = values.iter().map(|v| *v as f64).collect();
            let m = median_forecast(&train, 1).unwrap()[0];
            let loss = |c: f64| train.iter().map(|y| (y - c).abs()).sum::<f64>();
            for c in 0..50 {
                prop_assert!(loss(m) <= loss(c as f64) + 1e-9);
            }
        }
    }
}
