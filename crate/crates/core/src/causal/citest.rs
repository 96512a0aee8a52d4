//! Fisher-z conditional-independence test on partial correlations over
//! the featurized (binary rules + continuous performance) matrix.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::rules::FeaturizedSet;

use super::CausalError;

/// Configuration for the conditional-independence tests driving FCI.
#[derive(Debug, Clone)]
pub struct CiTestConfig {
    /// Significance level; p-values above it mean independence.
    pub alpha: f64,
    /// Largest conditioning set the skeleton search will try.
    pub max_conditioning_size: usize,
}

impl Default for CiTestConfig {
    fn default() -> Self {
        Self { alpha: 0.05, max_conditioning_size: 3 }
    }
}

impl CiTestConfig {
    pub fn new(alpha: f64, max_conditioning_size: usize) -> Result<Self, CausalError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CausalError::InvalidAlpha(alpha));
        }
        Ok(Self { alpha, max_conditioning_size })
    }
}

/// Outcome of one conditional-independence test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CiOutcome {
    Decided { independent: bool, p_value: f64 },
    /// Too few samples (or a singular conditioning set); treated as
    /// dependent, the conservative choice.
    Inconclusive,
}

impl CiOutcome {
    pub fn is_independent(&self) -> bool {
        matches!(self, CiOutcome::Decided { independent: true, .. })
    }
}

/// Caches the correlation matrix of a featurized set; nodes are the
/// rule columns followed by the performance column.
pub(crate) struct GaussianCiTester {
    corr: Vec<Vec<f64>>,
    degenerate: Vec<bool>,
    n: usize,
    alpha: f64,
}

impl GaussianCiTester {
    pub fn new(data: &FeaturizedSet, alpha: f64) -> Self {
        let nodes = data.n_rules() + 1;
        let n = data.n_samples();
        let columns: Vec<Vec<f64>> = (0..nodes).map(|c| data.column(c)).collect();
        let means: Vec<f64> =
            columns.iter().map(|col| col.iter().sum::<f64>() / n as f64).collect();
        let sds: Vec<f64> = columns
            .iter()
            .zip(&means)
            .map(|(col, m)| (col.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt())
            .collect();
        let degenerate: Vec<bool> = sds.iter().map(|&s| s <= 0.0).collect();
        let mut corr = vec![vec![0.0; nodes]; nodes];
        for i in 0..nodes {
            corr[i][i] = 1.0;
            for j in (i + 1)..nodes {
                // zero-variance columns correlate with nothing
                let r = if degenerate[i] || degenerate[j] {
                    0.0
                } else {
                    let cov: f64 = columns[i]
                        .iter()
                        .zip(&columns[j])
                        .map(|(a, b)| (a - means[i]) * (b - means[j]))
                        .sum();
                    (cov / (sds[i] * sds[j])).clamp(-1.0, 1.0)
                };
                corr[i][j] = r;
                corr[j][i] = r;
            }
        }
        Self { corr, degenerate, n, alpha }
    }

    pub fn node_count(&self) -> usize {
        self.corr.len()
    }

    /// Fisher-z test of `i` independent of `j` given `cond`.
    pub fn test(&self, i: usize, j: usize, cond: &[usize]) -> CiOutcome {
        if self.degenerate[i] || self.degenerate[j] {
            return CiOutcome::Decided { independent: true, p_value: 1.0 };
        }
        if self.n < cond.len() + 4 {
            return CiOutcome::Inconclusive;
        }
        let Some(r) = self.partial_correlation(i, j, cond) else {
            return CiOutcome::Inconclusive;
        };
        let r = r.clamp(-0.999_999, 0.999_999);
        let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
        let stat = ((self.n - cond.len()) as f64 - 3.0).sqrt() * z.abs();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let p_value = 2.0 * (1.0 - std_normal.cdf(stat));
        CiOutcome::Decided { independent: p_value > self.alpha, p_value }
    }

    /// Partial correlation of i and j given cond, via the precision
    /// matrix of the restricted correlation matrix. `None` when the
    /// submatrix is singular.
    fn partial_correlation(&self, i: usize, j: usize, cond: &[usize]) -> Option<f64> {
        if cond.is_empty() {
            return Some(self.corr[i][j]);
        }
        let mut idx = Vec::with_capacity(cond.len() + 2);
        idx.push(i);
        idx.push(j);
        idx.extend_from_slice(cond);
        let m = idx.len();
        let mut a = vec![vec![0.0f64; m]; m];
        for (r, &ri) in idx.iter().enumerate() {
            for (c, &ci) in idx.iter().enumerate() {
                a[r][c] = self.corr[ri][ci];
            }
        }
        let p = invert(a)?;
        let denom = p[0][0] * p[1][1];
        if denom <= 0.0 {
            return None;
        }
        Some(-p[0][1] / denom.sqrt())
    }
}

/// Gauss-Jordan inverse with partial pivoting for the small (<= 5x5)
/// matrices used in partial correlations. `None` when singular.
fn invert(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let m = a.len();
    let mut inv: Vec<Vec<f64>> =
        (0..m).map(|r| (0..m).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..m {
        let pivot = (col..m).max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for c in 0..m {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..m {
            if r != col {
                let factor = a[r][col];
                if factor != 0.0 {
                    for c in 0..m {
                        a[r][c] -= factor * a[col][c];
                        inv[r][c] -= factor * inv[col][c];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Test whether nodes `i` and `j` of the featurized set are
/// conditionally independent given `cond`. Node indices follow
/// [`FeaturizedSet::column`]: rules first, performance last.
pub fn ci_test(
    data: &FeaturizedSet,
    i: usize,
    j: usize,
    cond: &[usize],
    cfg: &CiTestConfig,
) -> CiOutcome {
    debug_assert!(cond.len() <= cfg.max_conditioning_size);
    GaussianCiTester::new(data, cfg.alpha).test(i, j, cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::rng_from_seed;

    fn featurized(cols: Vec<Vec<bool>>, perf: Vec<f64>) -> FeaturizedSet {
        let n = perf.len();
        let rows: Vec<Vec<bool>> =
            (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        FeaturizedSet::from_parts(rows, perf)
    }

    #[test]
    fn constant_column_is_independent_of_everything() {
        let perf: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let data = featurized(vec![vec![true; 40]], perf);
        let out = ci_test(&data, 0, 1, &[], &CiTestConfig::default());
        assert!(out.is_independent());
    }

    #[test]
    fn median_binarized_copy_of_p_is_dependent() {
        // column = 1[p > median(p)] with n = 50: strongly correlated
        let perf: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let col: Vec<bool> = perf.iter().map(|&p| p > 24.5).collect();
        let data = featurized(vec![col], perf);
        match ci_test(&data, 0, 1, &[], &CiTestConfig::default()) {
            CiOutcome::Decided { independent, p_value } => {
                assert!(!independent);
                assert!(p_value < 1e-6);
            }
            CiOutcome::Inconclusive => panic!("test should decide"),
        }
    }

    #[test]
    fn independent_bernoulli_columns_test_independent() {
        // Monte Carlo: two fresh Bernoulli(0.5) columns, n = 200,
        // independent in at least 90 of 100 seeded trials
        let mut independent_count = 0;
        for seed in 0..100u64 {
            let mut rng = rng_from_seed(seed);
            let a: Vec<bool> = (0..200).map(|_| rng.random::<bool>()).collect();
            let b: Vec<f64> =
                (0..200).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
            let data = featurized(vec![a], b);
            if ci_test(&data, 0, 1, &[], &CiTestConfig::default()).is_independent() {
                independent_count += 1;
            }
        }
        assert!(independent_count >= 90, "only {independent_count}/100 independent");
    }

    #[test]
    fn too_few_samples_is_inconclusive() {
        let data = featurized(
            vec![vec![true, false, true, false], vec![true, true, false, false]],
            vec![1.0, 2.0, 3.0, 4.0],
        );
        // n = 4 < |cond| + 4 = 5
        let out = ci_test(&data, 0, 2, &[1], &CiTestConfig::default());
        assert_eq!(out, CiOutcome::Inconclusive);
        assert!(!out.is_independent());
    }

    #[test]
    fn conditioning_on_the_mediator_removes_dependence() {
        // x drives m, m drives p; x and p are dependent but
        // conditionally independent given m
        let mut rng = rng_from_seed(5);
        let n = 400;
        let x: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let m: Vec<bool> = x
            .iter()
            .map(|&v| if rng.random::<f64>() < 0.9 { v } else { !v })
            .collect();
        let p: Vec<f64> = m
            .iter()
            .map(|&v| if v { 2.0 } else { 0.0 } + rng.random::<f64>())
            .collect();
        let data = featurized(vec![x, m], p);
        let cfg = CiTestConfig::default();
        assert!(!ci_test(&data, 0, 2, &[], &cfg).is_independent());
        assert!(ci_test(&data, 0, 2, &[1], &cfg).is_independent());
    }

    #[test]
    fn invert_matches_hand_inverse() {
        let a = vec![vec![2.0, 0.0], vec![0.0, 4.0]];
        let inv = invert(a).unwrap();
        assert!((inv[0][0] - 0.5).abs() < 1e-12);
        assert!((inv[1][1] - 0.25).abs() < 1e-12);
        assert!(invert(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        assert!(CiTestConfig::new(0.0, 3).is_err());
        assert!(CiTestConfig::new(1.0, 3).is_err());
        assert!(CiTestConfig::new(0.05, 3).is_ok());
    }
}
