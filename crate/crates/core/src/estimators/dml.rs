use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimatorError, CONTRAST, TAU_12, TAU_12C};
use crate::panel::{balanced_pairs, Outcome, PanelError, PanelRow, CATEGORICAL_COLUMNS};
use crate::sim::{substream, Stream};
use crate::stats::{dense_index, forest_fit, forest_predict, EstimateResult, ForestParams, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NuisanceLearner {
    Forest(ForestParams),
    /// Least squares on `[1, X]`.
    Linear,
    /// Training-fold mean.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmlSpec {
    pub k_folds: usize,
    pub learner: NuisanceLearner,
    pub seed: u64,
}

impl Default for DmlSpec {
    fn default() -> Self {
        DmlSpec { k_folds: 10, learner: NuisanceLearner::Forest(ForestParams::default()), seed: 20240601 }
    }
}

/// Outcome, treatments and controls for the partially linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct DmlData {
    pub y: Vec<f64>,
    /// `n x d` treatment intensities.
    pub s: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub treatment_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmlFit {
    pub estimate: EstimateResult,
    pub y_residual: Vec<f64>,
    pub s_residual: DMatrix<f64>,
    /// Fold index per row.
    pub folds: Vec<usize>,
}

/// Change in the first coefficient when the cross-fitted nuisances move
/// along a direction `h(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub epsilon: f64,
    pub delta_full: f64,
    pub delta_half: f64,
    /// `|delta_full / delta_half|`; 4 for second-order sensitivity.
    pub ratio: f64,
    /// Same ratio for the non-orthogonal score `(S'S)^-1 S'(Y - l)`.
    pub naive_ratio: f64,
}

/// First-differenced HCP data: `Δy` on the period-1 shares, with controls
/// `Δln_speed`, `ln_speed_0`, `Δln_requests`, `ln_requests_0` and integer
/// codes of the categorical columns. Margins without switchers are left out.
pub fn first_difference_data(panel: &[PanelRow], outcome: Outcome) -> Result<DmlData, EstimatorError> {
    let pairs = balanced_pairs(panel).map_err(|e| match e {
        PanelError::Unbalanced(id) => EstimatorError::UnbalancedPanelForFD(id),
        other => other.into(),
    })?;
    let n = pairs.len();
    let y: Vec<f64> = pairs.iter().map(|(a, b)| b.outcome(outcome) - a.outcome(outcome)).collect();

    let mut treatments = Vec::new();
    for (name, get) in [(TAU_12, (|r: &PanelRow| r.s2) as fn(&PanelRow) -> f64), (TAU_12C, |r: &PanelRow| r.s2c)] {
        let col: Vec<f64> = pairs.iter().map(|(a, b)| get(b) - get(a)).collect();
        if col.iter().any(|v| *v != 0.0) {
            treatments.push((name.to_string(), col));
        }
    }
    if treatments.is_empty() {
        return Err(EstimatorError::NoSwitchers);
    }
    let s = DMatrix::from_fn(n, treatments.len(), |i, j| treatments[j].1[i]);

    let num = |r: &PanelRow, c: &str| r.numeric(c).unwrap_or(f64::NAN);
    let mut controls: Vec<Vec<f64>> = vec![
        pairs.iter().map(|(a, b)| num(b, "ln_speed") - num(a, "ln_speed")).collect(),
        pairs.iter().map(|(a, _)| num(a, "ln_speed")).collect(),
        pairs.iter().map(|(a, b)| num(b, "ln_requests") - num(a, "ln_requests")).collect(),
        pairs.iter().map(|(a, _)| num(a, "ln_requests")).collect(),
    ];
    for cat in CATEGORICAL_COLUMNS {
        let labels: Vec<&str> = pairs.iter().map(|(a, _)| a.category(cat).unwrap_or("")).collect();
        controls.push(dense_index(&labels).into_iter().map(|v| v as f64).collect());
    }
    let x = DMatrix::from_fn(n, controls.len(), |i, j| controls[j][i]);
    Ok(DmlData { y, s, x, treatment_names: treatments.into_iter().map(|t| t.0).collect() })
}

/// Cross-fitted DML on first-differenced panel data.
pub fn dml_plr_fit(panel: &[PanelRow], outcome: Outcome, spec: &DmlSpec) -> Result<DmlFit, EstimatorError> {
    dml_plr(&first_difference_data(panel, outcome)?, spec)
}

fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, 0, Stream::Fold, 0));
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

fn fit_predict(
    learner: NuisanceLearner,
    x_train: &DMatrix<f64>,
    y_train: &[f64],
    x_test: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<f64>, StatsError> {
    match learner {
        NuisanceLearner::Forest(params) => {
            let model = forest_fit(x_train, y_train, params, seed)?;
            forest_predict(&model, x_test)
        }
        NuisanceLearner::Mean => {
            let m = y_train.iter().sum::<f64>() / y_train.len() as f64;
            Ok(vec![m; x_test.nrows()])
        }
        NuisanceLearner::Linear => {
            let a = x_train.clone().insert_column(0, 1.0);
            let b = DVector::from_column_slice(y_train);
            let beta = a
                .svd(true, true)
                .solve(&b, 1e-12)
                .map_err(|e| StatsError::InvalidArgument { name: "linear learner", reason: e.to_string() })?;
            Ok((x_test.clone().insert_column(0, 1.0) * beta).iter().copied().collect())
        }
    }
}

/// Seed for one nuisance fit, keyed by fold membership (its smallest row)
/// rather than the fold's label.
fn nuisance_seed(seed: u64, first_row: usize, target: usize) -> u64 {
    let mut z = seed ^ ((first_row as u64) << 8 | target as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Partially linear model `Y = S'θ + g(X) + U` by K-fold cross-fitting:
/// off-fold fits of `E[Y|X]` and each `E[S_j|X]`, residual-on-residual
/// least squares and the sandwich variance of the orthogonal score.
pub fn dml_plr(data: &DmlData, spec: &DmlSpec) -> Result<DmlFit, EstimatorError> {
    let n = data.y.len();
    let k = spec.k_folds;
    if k < 2 {
        return Err(EstimatorError::InvalidSpec("at least two folds are required".into()));
    }
    if n < 2 * k {
        return Err(EstimatorError::FoldTooSmall { n, k, needed: 2 * k });
    }
    dml_plr_with_folds(data, spec, &fold_assignment(n, k, spec.seed))
}

/// `dml_plr` with caller-supplied fold labels `0..K`; `spec.k_folds` is
/// ignored. Estimates depend only on fold membership, not on the labels.
pub fn dml_plr_with_folds(data: &DmlData, spec: &DmlSpec, folds: &[usize]) -> Result<DmlFit, EstimatorError> {
    let n = data.y.len();
    let d = data.s.ncols();
    if data.s.nrows() != n || data.x.nrows() != n {
        return Err(StatsError::DimensionMismatch { expected: n, got: data.s.nrows().min(data.x.nrows()) }.into());
    }
    if folds.len() != n {
        return Err(StatsError::DimensionMismatch { expected: n, got: folds.len() }.into());
    }
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(EstimatorError::InvalidSpec("at least two folds are required".into()));
    }
    if n < 2 * k {
        return Err(EstimatorError::FoldTooSmall { n, k, needed: 2 * k });
    }
    if (0..k).any(|f| !folds.contains(&f)) {
        return Err(EstimatorError::InvalidSpec("fold labels must cover 0..K".into()));
    }
    let folds = folds.to_vec();

    // (rows, predictions for [y, s_1..s_d]) per fold.
    let per_fold: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let x_train = data.x.select_rows(&train);
            let x_test = data.x.select_rows(&test);
            let mut preds = Vec::with_capacity(d + 1);
            for target in 0..=d {
                let y_train: Vec<f64> = if target == 0 {
                    train.iter().map(|&i| data.y[i]).collect()
                } else {
                    train.iter().map(|&i| data.s[(i, target - 1)]).collect()
                };
                let seed = nuisance_seed(spec.seed, test[0], target);
                let p = fit_predict(spec.learner, &x_train, &y_train, &x_test, seed)
                    .map_err(|source| EstimatorError::NuisanceFitFailure { fold: f, source })?;
                preds.push(p);
            }
            Ok((test, preds))
        })
        .collect::<Result<_, EstimatorError>>()?;

    let mut y_res = vec![0.0; n];
    let mut s_res = DMatrix::zeros(n, d);
    for (rows, preds) in &per_fold {
        for (pos, &i) in rows.iter().enumerate() {
            y_res[i] = data.y[i] - preds[0][pos];
            for j in 0..d {
                s_res[(i, j)] = data.s[(i, j)] - preds[j + 1][pos];
            }
        }
    }
    let estimate = solve_score(&s_res, &y_res, &data.treatment_names)?;
    Ok(DmlFit { estimate, y_residual: y_res, s_residual: s_res, folds })
}

fn theta(s_res: &DMatrix<f64>, y_res: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>), StatsError> {
    let yv = DVector::from_column_slice(y_res);
    let j_inv = (s_res.transpose() * s_res)
        .try_inverse()
        .ok_or_else(|| StatsError::RankDeficient { dropped: vec!["residualized treatment".into()] })?;
    Ok((&j_inv * s_res.transpose() * yv, j_inv))
}

fn solve_score(s_res: &DMatrix<f64>, y_res: &[f64], names: &[String]) -> Result<EstimateResult, StatsError> {
    let (n, d) = s_res.shape();
    let (th, j_inv) = theta(s_res, y_res)?;
    // Σ ψψ' with ψ_i = S̃_i (Ỹ_i − S̃_i'θ); J⁻¹ here is (Σ S̃S̃')⁻¹, so
    // J⁻¹ (Σψψ') J⁻¹ is already the covariance of θ̂.
    let mut meat = DMatrix::zeros(d, d);
    for i in 0..n {
        let row = s_res.row(i).transpose();
        let e = y_res[i] - row.dot(&th);
        meat += &row * row.transpose() * (e * e);
    }
    let cov = &j_inv * meat * &j_inv;
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut est = EstimateResult::from_parts(names.to_vec(), &th, &cov, n, n - d);
    if est.index(TAU_12).is_some() && est.index(TAU_12C).is_some() {
        est.push_difference(CONTRAST, TAU_12C, TAU_12)?;
    }
    Ok(est)
}

/// Numerical check of Neyman orthogonality on a fitted draw.
///
/// The direction `h(X)` is a polynomial in the first standardized control
/// whose coefficients make the sample moments `Σ h S̃_j` and `Σ h (Ỹ − S̃'θ̂)`
/// vanish, the in-sample counterpart of the population conditions every
/// function of `X` satisfies. Both nuisances move by `ε·sd(Y)·h`. The
/// orthogonal score then responds at order `ε²`; the naive score, which
/// does not residualize `S`, responds at order `ε`.
pub fn orthogonality_probe(data: &DmlData, fit: &DmlFit, epsilon: f64) -> Result<ProbeResult, EstimatorError> {
    let (n, d) = fit.s_residual.shape();
    if data.x.ncols() == 0 {
        return Err(EstimatorError::InvalidSpec("probe needs at least one control".into()));
    }
    let (th, _) = theta(&fit.s_residual, &fit.y_residual)?;
    let x0: Vec<f64> = data.x.column(0).iter().copied().collect();
    let mean = x0.iter().sum::<f64>() / n as f64;
    let sd = (x0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(f64::MIN_POSITIVE);
    let z: Vec<f64> = x0.iter().map(|v| (v - mean) / sd).collect();

    let m = 2 * d + 1;
    let basis = DMatrix::from_fn(n, m, |i, p| z[i].powi(p as i32 + 1));
    let eps_hat: Vec<f64> = (0..n).map(|i| fit.y_residual[i] - fit.s_residual.row(i).transpose().dot(&th)).collect();
    let mut constraints = DMatrix::zeros(2 * d, m);
    for p in 0..m {
        for j in 0..d {
            constraints[(j, p)] = (0..n).map(|i| basis[(i, p)] * fit.s_residual[(i, j)]).sum::<f64>();
            constraints[(d + j, p)] = (0..n).map(|i| basis[(i, p)] * eps_hat[i]).sum::<f64>();
        }
    }
    let gram = constraints.transpose() * &constraints;
    let eig = gram.symmetric_eigen();
    let (imin, _) = eig.eigenvalues.iter().enumerate().fold(
        (0, f64::INFINITY),
        |acc, (i, &v)| {
            if v < acc.1 {
                (i, v)
            } else {
                acc
            }
        },
    );
    let coef = eig.eigenvectors.column(imin).into_owned();
    let mut h: Vec<f64> = (0..n).map(|i| basis.row(i).transpose().dot(&coef)).collect();
    let rms = (h.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let y_mean = data.y.iter().sum::<f64>() / n as f64;
    let y_sd = (data.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    h.iter_mut().for_each(|v| *v *= y_sd / rms);

    let orth = |e: f64| -> Result<f64, StatsError> {
        let y: Vec<f64> = (0..n).map(|i| fit.y_residual[i] - e * h[i]).collect();
        let s = DMatrix::from_fn(n, d, |i, j| fit.s_residual[(i, j)] - e * h[i]);
        Ok(theta(&s, &y)?.0[0])
    };
    let l_hat: Vec<f64> = (0..n).map(|i| data.y[i] - fit.y_residual[i]).collect();
    let naive = |e: f64| -> Result<f64, StatsError> {
        let y: Vec<f64> = (0..n).map(|i| data.y[i] - l_hat[i] - e * h[i]).collect();
        Ok(theta(&data.s, &y)?.0[0])
    };
    let base = orth(0.0)?;
    let delta_full = orth(epsilon)? - base;
    let delta_half = orth(epsilon / 2.0)? - base;
    let naive_base = naive(0.0)?;
    let naive_ratio = ((naive(epsilon)? - naive_base) / (naive(epsilon / 2.0)? - naive_base)).abs();
    Ok(ProbeResult { epsilon, delta_full, delta_half, ratio: (delta_full / delta_half).abs(), naive_ratio })
}
