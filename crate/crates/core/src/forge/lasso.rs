//! L1-regularized least squares by cyclic coordinate descent.
//!
//! Objective: `(1/2n)||P - Dc||^2 + lambda*||c||_1` over standardized columns
//! of `D` and a centered target `P`.

use super::ForgeError;

pub const UPDATE_TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 10_000;
pub const STANDARDIZATION_TOLERANCE: f64 = 1e-8;

/// Column-major design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Design, ForgeError> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if n_rows == 0 {
            return Err(ForgeError::Lasso("design has no rows".into()));
        }
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(ForgeError::Lasso("columns differ in length".into()));
        }
        Ok(Design { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn predict(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for (col, c) in self.columns.iter().zip(coefficients) {
            if *c != 0.0 {
                out.iter_mut().zip(col).for_each(|(o, x)| *o += c * x);
            }
        }
        out
    }
}

/// Affine map from raw columns to standardized ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Standardizes each column to zero mean and unit population variance.
/// Constant columns are rejected.
pub fn standardize(columns: &[Vec<f64>]) -> Result<(Design, Standardization), ForgeError> {
    let mut means = Vec::with_capacity(columns.len());
    let mut scales = Vec::with_capacity(columns.len());
    let mut out = Vec::with_capacity(columns.len());
    for (j, col) in columns.iter().enumerate() {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) || !var.is_finite() {
            return Err(ForgeError::Lasso(format!("column {j} is constant")));
        }
        let sd = var.sqrt();
        let mut z: Vec<f64> = col.iter().map(|x| (x - mean) / sd).collect();
        // One correction pass removes residual rounding in mean and scale.
        let m2 = z.iter().sum::<f64>() / n;
        z.iter_mut().for_each(|x| *x -= m2);
        let s2 = (z.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        z.iter_mut().for_each(|x| *x /= s2);
        means.push(mean);
        scales.push(sd);
        out.push(z);
    }
    Ok((Design::from_columns(out)?, Standardization { means, scales }))
}

/// Subtracts the mean; returns the centered values and the mean.
pub fn center(values: &[f64]) -> (Vec<f64>, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| v - mean).collect(), mean)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoResult {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    /// Zero for a centered target; set by callers that undo centering.
    pub intercept: f64,
    pub objective: f64,
    pub active: Vec<usize>,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective_history: Vec<f64>,
}

fn check_inputs(d: &Design, p: &[f64], lambda: f64) -> Result<(), ForgeError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ForgeError::Lasso(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if p.len() != d.n_rows {
        return Err(ForgeError::Lasso("target length differs from design".into()));
    }
    let n = d.n_rows as f64;
    for (j, col) in d.columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| x * x).sum::<f64>() / n - mean * mean;
        if mean.abs() > STANDARDIZATION_TOLERANCE || (var - 1.0).abs() > STANDARDIZATION_TOLERANCE {
            return Err(ForgeError::NotStandardized(format!(
                "column {j}: mean {mean:e}, variance {var}"
            )));
        }
    }
    let scale = p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mean = p.iter().sum::<f64>() / n;
    if mean.abs() > STANDARDIZATION_TOLERANCE * scale {
        return Err(ForgeError::NotStandardized(format!("target mean {mean:e}")));
    }
    Ok(())
}

pub fn objective(d: &Design, p: &[f64], c: &[f64], lambda: f64) -> f64 {
    let fit = d.predict(c);
    let rss: f64 = p.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    rss / (2.0 * d.n_rows as f64) + lambda * c.iter().map(|x| x.abs()).sum::<f64>()
}

/// Smallest lambda at which the all-zero solution is optimal.
pub fn lambda_max(d: &Design, p: &[f64]) -> f64 {
    let n = d.n_rows as f64;
    d.columns
        .iter()
        .map(|col| (dot(col, p) / n).abs())
        .fold(0.0, f64::max)
}

/// `n` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lambda_max],
        _ => (0..n)
            .map(|i| lambda_max * ratio.powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}

pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn descend(d: &Design, p: &[f64], lambda: f64, start: &[f64]) -> LassoResult {
    let n = d.n_rows as f64;
    let mut c = start.to_vec();
    let fit = d.predict(&c);
    let mut resid: Vec<f64> = p.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let norms: Vec<f64> = d.columns.iter().map(|col| dot(col, col) / n).collect();
    let mut history = Vec::new();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for (j, col) in d.columns.iter().enumerate() {
            let rho = dot(col, &resid) / n + norms[j] * c[j];
            let next = soft_threshold(rho, lambda) / norms[j];
            let delta = next - c[j];
            if delta != 0.0 {
                resid.iter_mut().zip(col).for_each(|(r, x)| *r -= delta * x);
                c[j] = next;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        history.push(rss / (2.0 * n) + lambda * c.iter().map(|x| x.abs()).sum::<f64>());
        if max_delta < UPDATE_TOLERANCE {
            break;
        }
    }
    let active = (0..c.len()).filter(|j| c[*j] != 0.0).collect();
    LassoResult {
        lambda,
        objective: objective(d, p, &c, lambda),
        coefficients: c,
        intercept: 0.0,
        active,
        sweeps,
        objective_history: history,
    }
}

/// Cold-started fit at a single lambda.
pub fn lasso_fit(d: &Design, p: &[f64], lambda: f64) -> Result<LassoResult, ForgeError> {
    check_inputs(d, p, lambda)?;
    Ok(descend(d, p, lambda, &vec![0.0; d.n_cols()]))
}

/// Fits along a strictly descending grid, warm-starting each fit from the
/// previous solution.
pub fn lasso_path(d: &Design, p: &[f64], lambdas: &[f64]) -> Result<Vec<LassoResult>, ForgeError> {
    if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(ForgeError::Lasso("lambda grid must be strictly descending".into()));
    }
    let mut out: Vec<LassoResult> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        check_inputs(d, p, lambda)?;
        let start = out
            .last()
            .map_or_else(|| vec![0.0; d.n_cols()], |r| r.coefficients.clone());
        out.push(descend(d, p, lambda, &start));
    }
    Ok(out)
}

/// Largest violation of the optimality conditions.
pub fn kkt_violation(d: &Design, p: &[f64], r: &LassoResult) -> f64 {
    let n = d.n_rows as f64;
    let fit = d.predict(&r.coefficients);
    let resid: Vec<f64> = p.iter().zip(&fit).map(|(a, b)| a - b).collect();
    d.columns
        .iter()
        .zip(&r.coefficients)
        .map(|(col, c)| {
            let g = dot(col, &resid) / n;
            if *c != 0.0 {
                (g - r.lambda * c.signum()).abs()
            } else {
                (g.abs() - r.lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Active indices by |c| descending, ties by index.
pub fn rank_descriptors(result: &LassoResult) -> Vec<usize> {
    let mut order = result.active.clone();
    order.sort_by(|a, b| {
        result.coefficients[*b]
            .abs()
            .total_cmp(&result.coefficients[*a].abs())
            .then(a.cmp(b))
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, p: usize, seed: u64) -> (Design, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let (d, _) = standardize(&cols).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 * d.column(0)[i] - 0.7 * d.column(1 % p)[i] + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        (d, center(&y).0)
    }

    #[test]
    fn zero_penalty_matches_least_squares() {
        let (d, y) = random_problem(40, 4, 1);
        let r = lasso_fit(&d, &y, 0.0).unwrap();
        let x = DMatrix::from_fn(d.n_rows(), d.n_cols(), |i, j| d.column(j)[i]);
        let ols = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * DVector::from_vec(y.clone())));
        for j in 0..d.n_cols() {
            assert!((r.coefficients[j] - ols[j]).abs() < 1e-8, "{j}");
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (d, y) = random_problem(30, 5, 2);
        let lmax = (0..d.n_cols())
            .map(|j| (d.column(j).iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / 30.0).abs())
            .fold(0.0, f64::max);
        assert_eq!(lmax, lambda_max(&d, &y));
        let r = lasso_fit(&d, &y, lmax).unwrap();
        assert!(r.active.is_empty());
        assert!(lasso_fit(&d, &y, lmax * 0.99).unwrap().active.len() == 1);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // Columns of a scaled 4x4 Hadamard matrix (minus the constant one) are
        // centered, orthogonal and unit-variance.
        let h = [
            [1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0],
        ];
        let d = Design::from_columns(h.iter().map(|c| c.to_vec()).collect()).unwrap();
        let y = center(&[3.0, -1.0, 0.5, 2.0]).0;
        for lambda in [0.0, 0.1, 0.5, 1.0, 5.0] {
            let r = lasso_fit(&d, &y, lambda).unwrap();
            for j in 0..3 {
                let z: f64 = h[j].iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / 4.0;
                let expected = soft_threshold(z, lambda);
                assert!((r.coefficients[j] - expected).abs() < 1e-12, "lambda {lambda} col {j}");
            }
        }
    }

    #[test]
    fn rejects_raw_columns() {
        let d = Design::from_columns(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            lasso_fit(&d, &[0.0, 0.0, 0.0], 0.1),
            Err(ForgeError::NotStandardized(_))
        ));
        let (d, _) = standardize(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(lasso_fit(&d, &[1.0, 1.0, 1.0], 0.1).is_err());
        assert!(lasso_fit(&d, &[-1.0, 0.0, 1.0], -0.1).is_err());
        assert!(standardize(&[vec![2.0, 2.0]]).is_err());
    }

    #[test]
    fn path_matches_cold_starts() {
        let (d, y) = random_problem(50, 8, 3);
        let grid = lambda_grid(lambda_max(&d, &y), 16, 1e-4);
        let path = lasso_path(&d, &y, &grid).unwrap();
        assert!(path[0].active.is_empty());
        for (warm, lambda) in path.iter().zip(&grid) {
            let cold = lasso_fit(&d, &y, *lambda).unwrap();
            for (a, b) in warm.coefficients.iter().zip(&cold.coefficients) {
                assert!((a - b).abs() < 1e-7);
            }
            assert!(kkt_violation(&d, &y, warm) < 1e-6);
        }
        let single = lasso_path(&d, &y, &grid[3..4]).unwrap();
        assert_eq!(single[0], lasso_fit(&d, &y, grid[3]).unwrap());
        let three = lasso_path(&d, &y, &[grid[0], grid[0] / 2.0, 0.0]).unwrap();
        assert!(three[0].coefficients.iter().all(|c| *c == 0.0));
        assert!(lasso_path(&d, &y, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(2.0, 16, 1e-4);
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], 2.0);
        assert!((g[15] - 2e-4).abs() < 1e-15);
        for w in g.windows(3) {
            assert!((w[0] / w[1] - w[1] / w[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn ranking() {
        let r = LassoResult {
            lambda: 0.0,
            coefficients: vec![0.5, -2.0, 0.0],
            intercept: 0.0,
            objective: 0.0,
            active: vec![0, 1],
            sweeps: 0,
            objective_history: vec![],
        };
        assert_eq!(rank_descriptors(&r), vec![1, 0]);
        let empty = LassoResult {
            coefficients: vec![0.0; 3],
            active: vec![],
            ..r
        };
        assert!(rank_descriptors(&empty).is_empty());
    }
}
