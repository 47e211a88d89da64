//! Ridge encoding models from representations to voxels, scored by explained
//! variance under leave-one-block-out cross-validation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::Matrix;
use crate::sum;

/// Log-spaced lambda grid `10^-3 … 10^3`.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingModel {
    /// D×V.
    pub weights: Matrix,
    pub intercept: Vec<f64>,
    pub ridge_lambda: f64,
    /// Set when `lambda = 0` met a rank-deficient design and the
    /// minimum-norm solution was used.
    pub rank_deficient: bool,
    pub rank: usize,
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    match m.first_non_finite() {
        Some((r, c)) => Err(Error::Validation(format!("{what} has a non-finite value at ({r}, {c})"))),
        None => Ok(()),
    }
}

fn centered(m: &Matrix) -> (Matrix, Vec<f64>) {
    let means = m.column_means();
    let c = Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) - means[j]);
    (c, means)
}

/// Minimizes `‖Y − XW − 1bᵀ‖² + λ‖W‖²`. The intercept is unpenalized.
pub fn ridge_fit(x: &Matrix, y: &Matrix, lambda: f64) -> Result<EncodingModel> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!("X has {} rows, Y has {}", x.rows(), y.rows())));
    }
    if x.rows() < 2 {
        return Err(Error::Data(format!("ridge fit needs at least 2 samples, got {}", x.rows())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    check_finite(x, "X")?;
    check_finite(y, "Y")?;
    let d = x.cols();
    let (xc, xm) = centered(x);
    let (yc, ym) = centered(y);
    let mut g = xc.gram();
    for i in 0..d {
        let v = g.get(i, i) + lambda;
        g.set(i, i, v);
    }
    let xty = xc.transpose().matmul(&yc)?;
    let (weights, rank_deficient, rank) = match linalg::cholesky(&g, PIVOT_TOL) {
        Some(l) => (linalg::cholesky_solve(&l, &xty), false, d),
        None => {
            let (w, rank) = linalg::psd_pinv_solve(&g, &xty, 1e-10);
            (w, rank < d, rank)
        }
    };
    let intercept = (0..y.cols())
        .map(|v| ym[v] - sum::sum_by(d, &|k| xm[k] * weights.get(k, v)))
        .collect();
    Ok(EncodingModel { weights, intercept, ridge_lambda: lambda, rank_deficient, rank })
}

/// `XW + b`.
pub fn predict(model: &EncodingModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.weights.rows() {
        return Err(Error::Shape(format!("X has {} columns, model expects {}", x.cols(), model.weights.rows())));
    }
    let mut out = x.matmul(&model.weights)?;
    for i in 0..out.rows() {
        out.row_mut(i).iter_mut().zip(&model.intercept).for_each(|(v, b)| *v += b);
    }
    Ok(out)
}

/// Norm of the intercept-adjusted normal-equation residual
/// `XcᵀYc − (XcᵀXc + λI)W`, relative to `‖XcᵀYc‖`.
pub fn gradient_residual(model: &EncodingModel, x: &Matrix, y: &Matrix) -> Result<f64> {
    let (xc, _) = centered(x);
    let (yc, _) = centered(y);
    let xty = xc.transpose().matmul(&yc)?;
    let mut g = xc.gram();
    for i in 0..g.rows() {
        let v = g.get(i, i) + model.ridge_lambda;
        g.set(i, i, v);
    }
    let gw = g.matmul(&model.weights)?;
    let diff = Matrix::from_fn(xty.rows(), xty.cols(), |i, j| xty.get(i, j) - gw.get(i, j));
    let scale = xty.frobenius_norm();
    Ok(if scale == 0.0 { diff.frobenius_norm() } else { diff.frobenius_norm() / scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScore {
    pub per_voxel_ev: Vec<f64>,
    pub mean_ev: f64,
    pub per_region_ev: BTreeMap<String, f64>,
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = sum::sum(xs) / n;
    sum::sum_by(xs.len(), &|i| (xs[i] - m) * (xs[i] - m)) / n
}

/// Per voxel `1 − Var(y_true − y_pred) / Var(y_true)`, plus the mean and
/// per-region means when an atlas is supplied.
pub fn explained_variance(y_true: &Matrix, y_pred: &Matrix, regions: Option<&[String]>) -> Result<EncodingScore> {
    if y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() {
        return Err(Error::Shape(format!(
            "{}x{} targets vs {}x{} predictions",
            y_true.rows(),
            y_true.cols(),
            y_pred.rows(),
            y_pred.cols()
        )));
    }
    if let Some(r) = regions {
        if r.len() != y_true.cols() {
            return Err(Error::Shape(format!("{} region labels for {} voxels", r.len(), y_true.cols())));
        }
    }
    let mut per_voxel_ev = Vec::with_capacity(y_true.cols());
    let mut bad = Vec::new();
    for j in 0..y_true.cols() {
        let t = y_true.column(j);
        let resid: Vec<f64> = t.iter().zip(y_pred.column(j)).map(|(a, b)| a - b).collect();
        let vt = variance(&t);
        if vt == 0.0 {
            bad.push(j);
            per_voxel_ev.push(0.0);
            continue;
        }
        per_voxel_ev.push(1.0 - variance(&resid) / vt);
    }
    if !bad.is_empty() {
        return Err(Error::ZeroVariance(bad));
    }
    let mean_ev = sum::sum(&per_voxel_ev) / per_voxel_ev.len() as f64;
    let mut per_region_ev = BTreeMap::new();
    if let Some(regions) = regions {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (r, ev) in regions.iter().zip(&per_voxel_ev) {
            groups.entry(r.as_str()).or_default().push(*ev);
        }
        for (r, evs) in groups {
            per_region_ev.insert(r.into(), sum::sum(&evs) / evs.len() as f64);
        }
    }
    Ok(EncodingScore { per_voxel_ev, mean_ev, per_region_ev })
}

/// Regularization strength for [`block_cv`].
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// Picked per fold by inner leave-one-block-out EV on the training blocks.
    Grid(Vec<f64>),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Grid(DEFAULT_LAMBDA_GRID.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub held_out: usize,
    pub lambda: f64,
    pub score: EncodingScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldScore>,
    /// Mean over folds of each fold's `mean_ev`.
    pub mean_ev: f64,
}

fn fit_score(train_x: &[&Matrix], train_y: &[&Matrix], test_x: &Matrix, test_y: &Matrix, lambda: f64, regions: Option<&[String]>) -> Result<EncodingScore> {
    let model = ridge_fit(&Matrix::vstack(train_x)?, &Matrix::vstack(train_y)?, lambda)?;
    explained_variance(test_y, &predict(&model, test_x)?, regions)
}

fn choose_lambda(xs: &[&Matrix], ys: &[&Matrix], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    // with a single training block, split it into two contiguous halves
    let split;
    let (xs, ys): (Vec<&Matrix>, Vec<&Matrix>) = if xs.len() >= 2 {
        (xs.to_vec(), ys.to_vec())
    } else {
        let (x, y) = (xs[0], ys[0]);
        let h = x.rows() / 2;
        let lo: Vec<usize> = (0..h).collect();
        let hi: Vec<usize> = (h..x.rows()).collect();
        split = [x.select_rows(&lo), x.select_rows(&hi), y.select_rows(&lo), y.select_rows(&hi)];
        (vec![&split[0], &split[1]], vec![&split[2], &split[3]])
    };
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &lambda in grid {
        let mut total = 0.0;
        for k in 0..xs.len() {
            let tx: Vec<&Matrix> = (0..xs.len()).filter(|&i| i != k).map(|i| xs[i]).collect();
            let ty: Vec<&Matrix> = (0..ys.len()).filter(|&i| i != k).map(|i| ys[i]).collect();
            total += fit_score(&tx, &ty, xs[k], ys[k], lambda, None)?.mean_ev;
        }
        let ev = total / xs.len() as f64;
        if ev > best.0 {
            best = (ev, lambda);
        }
    }
    Ok(best.1)
}

/// Leave-one-block-out cross-validation.
pub fn block_cv(x_blocks: &[Matrix], y_blocks: &[Matrix], lambda: &LambdaChoice, regions: Option<&[String]>) -> Result<CvReport> {
    if x_blocks.len() < 2 || x_blocks.len() != y_blocks.len() {
        return Err(Error::Config(format!(
            "block cross-validation needs >= 2 paired blocks, got {} X and {} Y",
            x_blocks.len(),
            y_blocks.len()
        )));
    }
    let (d, v) = (x_blocks[0].cols(), y_blocks[0].cols());
    for (i, (x, y)) in x_blocks.iter().zip(y_blocks).enumerate() {
        if x.cols() != d || y.cols() != v || x.rows() != y.rows() {
            return Err(Error::Shape(format!("block {i} has inconsistent dimensions")));
        }
    }
    let mut folds = Vec::with_capacity(x_blocks.len());
    for held in 0..x_blocks.len() {
        let tx: Vec<&Matrix> = (0..x_blocks.len()).filter(|&i| i != held).map(|i| &x_blocks[i]).collect();
        let ty: Vec<&Matrix> = (0..y_blocks.len()).filter(|&i| i != held).map(|i| &y_blocks[i]).collect();
        let lam = match lambda {
            LambdaChoice::Fixed(l) => *l,
            LambdaChoice::Grid(g) => choose_lambda(&tx, &ty, g)?,
        };
        let score = fit_score(&tx, &ty, &x_blocks[held], &y_blocks[held], lam, regions)?;
        folds.push(FoldScore { held_out: held, lambda: lam, score });
    }
    let mean_ev = sum::sum_by(folds.len(), &|i| folds[i].score.mean_ev) / folds.len() as f64;
    Ok(CvReport { folds, mean_ev })
}

/// Splits rows into `k` contiguous blocks of near-equal size.
pub fn split_blocks(m: &Matrix, k: usize) -> Result<Vec<Matrix>> {
    if k == 0 || k > m.rows() {
        return Err(Error::Config(format!("cannot split {} rows into {k} blocks", m.rows())));
    }
    let n = m.rows();
    Ok((0..k)
        .map(|b| {
            let idx: Vec<usize> = (b * n / k..(b + 1) * n / k).collect();
            m.select_rows(&idx)
        })
        .collect())
}
