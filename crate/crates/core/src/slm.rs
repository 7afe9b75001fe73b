//! Maximum-likelihood spatial lag regression y = ρWy + Xβ + ε.
//!
//! Estimation concentrates the likelihood in ρ: two OLS passes (y on X and
//! Wy on X) reduce the problem to a one-dimensional search, with the
//! log-determinant term evaluated from the precomputed eigenvalues of the
//! row-standardized weights. A dense scan brackets the optimum, golden
//! section plus a parabolic polish refines it, and standard errors come from
//! a finite-difference Hessian of the full log-likelihood.

use crate::weights::{ContiguityWeights, Standardization, WeightsError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const RHO_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SlmError {
    #[error("design matrix is rank deficient (column {0})")]
    RankDeficient(usize),
    #[error("need more observations than regressors: n = {n}, k = {k}")]
    TooFewObservations { n: usize, k: usize },
    #[error("rho {rho} outside the admissible interval ({lo}, {hi})")]
    RhoOutOfDomain { rho: f64, lo: f64, hi: f64 },
    #[error("response is constant; model degenerate")]
    DegenerateResponse,
    #[error("profile log-likelihood has {count} interior maxima near rho = {maxima:?}; not unimodal")]
    NonConcaveProfile { count: usize, maxima: Vec<f64> },
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

/// Response and regressors for one model, complete cases only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub response: String,
    pub y: Vec<f64>,
    /// Row-major regressor matrix, one inner vector per unit.
    pub x: Vec<Vec<f64>>,
    pub col_names: Vec<String>,
    pub unit_ids: Vec<String>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.col_names.len()
    }

    fn x_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.p();
        DMatrix::from_fn(n, p, |r, c| self.x[r][c])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// ML variance: ‖e‖²/n (not the unbiased /(n−p)).
    pub sigma2: f64,
}

/// Least squares via QR; rank deficiency is an error, never silently pinned.
pub fn ols_fit(y: &[f64], x: &DMatrix<f64>) -> Result<OlsFit, SlmError> {
    let n = x.nrows();
    let p = x.ncols();
    if n <= p {
        return Err(SlmError::TooFewObservations { n, k: p });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    for i in 0..p {
        if r[(i, i)].abs() <= 1e-10 * max_diag.max(1.0) {
            return Err(SlmError::RankDeficient(i));
        }
    }
    let yv = DVector::from_column_slice(y);
    // R beta = Q' y
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or(SlmError::RankDeficient(0))?;
    let fitted = x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| yv[i] - fitted[i]).collect();
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / n as f64;
    Ok(OlsFit { beta: beta.iter().copied().collect(), residuals, sigma2 })
}

/// Precomputed pieces of the concentrated log-likelihood.
#[derive(Debug, Clone)]
pub struct Concentration {
    pub n: usize,
    /// Residuals of y on X.
    pub e0: Vec<f64>,
    /// Residuals of Wy on X.
    pub el: Vec<f64>,
    /// OLS coefficients of y on X.
    pub beta0: Vec<f64>,
    /// OLS coefficients of Wy on X.
    pub beta_l: Vec<f64>,
    /// Eigenvalues of the row-standardized weights, ascending.
    pub eigenvalues: Vec<f64>,
}

impl Concentration {
    pub fn rho_bounds(&self) -> (f64, f64) {
        let lambda_min = self.eigenvalues[0];
        (1.0 / lambda_min + RHO_MARGIN, 1.0 - RHO_MARGIN)
    }

    pub fn sigma2(&self, rho: f64) -> f64 {
        self.e0
            .iter()
            .zip(&self.el)
            .map(|(a, b)| {
                let e = a - rho * b;
                e * e
            })
            .sum::<f64>()
            / self.n as f64
    }
}

/// Concentrated log-likelihood
/// ℓ(ρ) = −(n/2)(ln 2π + 1) − (n/2)·ln σ²(ρ) + Σ ln(1 − ρλᵢ).
pub fn concentrated_loglik(conc: &Concentration, rho: f64) -> Result<f64, SlmError> {
    let (lo, hi) = conc.rho_bounds();
    if !(rho > lo && rho < hi) {
        return Err(SlmError::RhoOutOfDomain { rho, lo, hi });
    }
    let n = conc.n as f64;
    let logdet: f64 = conc.eigenvalues.iter().map(|l| (1.0 - rho * l).ln()).sum();
    Ok(-(n / 2.0) * ((2.0 * std::f64::consts::PI).ln() + 1.0) - (n / 2.0) * conc.sigma2(rho).ln()
        + logdet)
}

/// Full log-likelihood at (ρ, β, σ²); used by the Hessian for standard errors.
fn full_loglik(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    wy: &DVector<f64>,
    eigenvalues: &[f64],
    rho: f64,
    beta: &DVector<f64>,
    sigma2: f64,
) -> f64 {
    let n = y.len() as f64;
    let logdet: f64 = eigenvalues.iter().map(|l| (1.0 - rho * l).ln()).sum();
    let resid = y - wy * rho - x * beta;
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    -(n / 2.0) * (2.0 * std::f64::consts::PI * sigma2).ln() + logdet - rss / (2.0 * sigma2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagModelFit {
    pub response: String,
    pub rho: f64,
    pub beta: Vec<f64>,
    pub term_names: Vec<String>,
    /// [rho, beta...] standard errors; None when the Hessian is singular.
    pub se: Option<Vec<f64>>,
    /// Two-sided normal p-values aligned with `se`.
    pub p: Option<Vec<f64>>,
    pub sigma2: f64,
    pub loglik: f64,
    pub pseudo_r2: f64,
    pub aic: f64,
    pub n: usize,
    /// AIC parameter count: #β + 1 (ρ counted, σ² not).
    pub k: usize,
}

fn two_sided_normal_p(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    2.0 * n.cdf(-z.abs())
}

/// Scan the profile on a dense grid; returns (best rho, interior local maxima).
fn scan_profile(conc: &Concentration) -> (f64, Vec<f64>) {
    let (lo, hi) = conc.rho_bounds();
    const POINTS: usize = 1000;
    let step = (hi - lo) / (POINTS - 1) as f64;
    let vals: Vec<f64> = (0..POINTS)
        .map(|i| {
            // nudge the end grid points strictly inside the open interval
            let rho = (lo + i as f64 * step).clamp(lo + step * 1e-3, hi - step * 1e-3);
            concentrated_loglik(conc, rho).expect("grid point inside domain")
        })
        .collect();
    let mut best = 0;
    let mut maxima = Vec::new();
    for i in 0..POINTS {
        if vals[i] > vals[best] {
            best = i;
        }
        let left_ok = i == 0 || vals[i] > vals[i - 1];
        let right_ok = i == POINTS - 1 || vals[i] >= vals[i + 1];
        if i > 0 && i < POINTS - 1 && left_ok && right_ok {
            maxima.push(lo + i as f64 * step);
        }
    }
    (lo + best as f64 * step, maxima)
}

/// Golden-section refinement of the profile maximum within [a, b], followed
/// by a parabolic polish at a step where curvature dominates rounding noise.
/// The bracket is driven well below the 1e-8 reporting tolerance so refits
/// of permuted-but-identical problems agree.
fn golden_section(conc: &Concentration, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let f = |rho: f64| concentrated_loglik(conc, rho).unwrap_or(f64::NEG_INFINITY);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let m = (a + b) / 2.0;
    let h = 1e-5 * m.abs().max(1.0);
    let (f0, f1, f2) = (f(m - h), f(m), f(m + h));
    let denom = f0 - 2.0 * f1 + f2;
    if denom < 0.0 {
        let shift = 0.5 * h * (f0 - f2) / denom;
        let cand = m + shift;
        if shift.abs() < h && f(cand) > f1 {
            return cand;
        }
    }
    m
}

/// Central-difference Hessian of the full log-likelihood in (ρ, β..., σ²).
fn numerical_hessian(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    wy: &DVector<f64>,
    eigenvalues: &[f64],
    theta: &[f64],
) -> DMatrix<f64> {
    let dim = theta.len();
    let p = dim - 2;
    let eval = |t: &[f64]| {
        let beta = DVector::from_column_slice(&t[1..1 + p]);
        full_loglik(y, x, wy, eigenvalues, t[0], &beta, t[1 + p])
    };
    let h: Vec<f64> = theta.iter().map(|&t| 1e-5 * t.abs().max(1.0)).collect();
    let mut hess = DMatrix::zeros(dim, dim);
    let f0 = eval(theta);
    for i in 0..dim {
        for j in 0..=i {
            let mut tpp = theta.to_vec();
            let mut tpm = theta.to_vec();
            let mut tmp = theta.to_vec();
            let mut tmm = theta.to_vec();
            if i == j {
                tpp[i] += h[i];
                tmm[i] -= h[i];
                let v = (eval(&tpp) - 2.0 * f0 + eval(&tmm)) / (h[i] * h[i]);
                hess[(i, i)] = v;
            } else {
                tpp[i] += h[i];
                tpp[j] += h[j];
                tpm[i] += h[i];
                tpm[j] -= h[j];
                tmp[i] -= h[i];
                tmp[j] += h[j];
                tmm[i] -= h[i];
                tmm[j] -= h[j];
                let v = (eval(&tpp) - eval(&tpm) - eval(&tmp) + eval(&tmm)) / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
    }
    hess
}

/// Fit the spatial lag model by concentrated maximum likelihood.
///
/// `w` must be row-standardized with no islands (an entirely edgeless
/// structure degrades to OLS; mixed islands are an error).
pub fn fit_spatial_lag(dm: &DesignMatrix, w: &ContiguityWeights) -> Result<LagModelFit, SlmError> {
    fit_spatial_lag_with_eigs(dm, w, None)
}

/// As [`fit_spatial_lag`], reusing caller-precomputed eigenvalues of the
/// row-standardized structure (they depend only on `w`, so batch drivers
/// compute them once).
pub fn fit_spatial_lag_with_eigs(
    dm: &DesignMatrix,
    w: &ContiguityWeights,
    eigs: Option<&[f64]>,
) -> Result<LagModelFit, SlmError> {
    let n = dm.n();
    let p = dm.p();
    assert_eq!(w.n(), n, "weights and design must cover the same units");
    assert_eq!(
        w.standardization(),
        Standardization::RowStandardized,
        "spatial lag estimation expects row-standardized weights"
    );
    if n <= p + 2 {
        return Err(SlmError::TooFewObservations { n, k: p + 2 });
    }
    let ymin = dm.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let ymax = dm.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if ymin == ymax {
        return Err(SlmError::DegenerateResponse);
    }
    // An entirely edgeless structure is the zero matrix: the lag term
    // vanishes identically and the model collapses to OLS with rho = 0.
    // A structure with some edges and some islands is a data problem.
    if w.s0() == 0.0 {
        return ols_as_lag_fit(dm);
    }
    w.island_error()?;
    let x = dm.x_matrix();
    let wy_vec = w.lag(&dm.y);
    let fit0 = ols_fit(&dm.y, &x)?;
    let fit_l = ols_fit(&wy_vec, &x)?;
    let eigenvalues = match eigs {
        Some(e) => e.to_vec(),
        None => w.eigenvalues()?,
    };
    let conc = Concentration {
        n,
        e0: fit0.residuals,
        el: fit_l.residuals,
        beta0: fit0.beta,
        beta_l: fit_l.beta,
        eigenvalues,
    };

    let (rho_scan, maxima) = scan_profile(&conc);
    if maxima.len() > 1 {
        return Err(SlmError::NonConcaveProfile { count: maxima.len(), maxima });
    }
    let (lo, hi) = conc.rho_bounds();
    let span = (hi - lo) / 999.0;
    let rho = golden_section(&conc, (rho_scan - 2.0 * span).max(lo), (rho_scan + 2.0 * span).min(hi));

    let beta: Vec<f64> =
        conc.beta0.iter().zip(&conc.beta_l).map(|(b0, bl)| b0 - rho * bl).collect();
    let sigma2 = conc.sigma2(rho);
    let loglik = concentrated_loglik(&conc, rho)?;

    // fitted values: solve (I − ρW) ŷ = Xβ̂
    let beta_v = DVector::from_column_slice(&beta);
    let xb = &x * &beta_v;
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for &j in w.neighbors(i) {
            a[(i, j)] -= rho * w.weight(i, j);
        }
    }
    let yhat = a.lu().solve(&xb).expect("I - rho W nonsingular inside the rho domain");
    let pseudo_r2 = {
        let y = DVector::from_column_slice(&dm.y);
        let my = y.mean();
        let mh = yhat.mean();
        let mut num = 0.0;
        let mut dy = 0.0;
        let mut dh = 0.0;
        for i in 0..n {
            num += (y[i] - my) * (yhat[i] - mh);
            dy += (y[i] - my) * (y[i] - my);
            dh += (yhat[i] - mh) * (yhat[i] - mh);
        }
        let c = num / (dy * dh).sqrt();
        c * c
    };

    let k = p + 1;
    let aic = 2.0 * k as f64 - 2.0 * loglik;

    // standard errors from the full-likelihood information matrix
    let y_v = DVector::from_column_slice(&dm.y);
    let wy_v = DVector::from_column_slice(&wy_vec);
    let mut theta = Vec::with_capacity(p + 2);
    theta.push(rho);
    theta.extend_from_slice(&beta);
    theta.push(sigma2);
    let hess = numerical_hessian(&y_v, &x, &wy_v, &conc.eigenvalues, &theta);
    let info = -hess;
    let (se, pvals) = match info.try_inverse() {
        Some(cov) if (0..p + 1).all(|i| cov[(i, i)] > 0.0) => {
            let se: Vec<f64> = (0..p + 1).map(|i| cov[(i, i)].sqrt()).collect();
            let mut est = vec![rho];
            est.extend_from_slice(&beta);
            let p: Vec<f64> =
                est.iter().zip(&se).map(|(e, s)| two_sided_normal_p(e / s)).collect();
            (Some(se), Some(p))
        }
        _ => (None, None),
    };

    Ok(LagModelFit {
        response: dm.response.clone(),
        rho,
        beta,
        term_names: dm.col_names.clone(),
        se,
        p: pvals,
        sigma2,
        loglik,
        pseudo_r2,
        aic,
        n,
        k,
    })
}

/// OLS presented in the lag-fit shape, for weight structures with no edges
/// at all (ρ pinned to 0, no spatial term).
pub fn ols_as_lag_fit(dm: &DesignMatrix) -> Result<LagModelFit, SlmError> {
    let n = dm.n();
    let p = dm.p();
    if n <= p + 2 {
        return Err(SlmError::TooFewObservations { n, k: p + 2 });
    }
    let x = dm.x_matrix();
    let fit = ols_fit(&dm.y, &x)?;
    let n_f = n as f64;
    let loglik = -(n_f / 2.0) * ((2.0 * std::f64::consts::PI * fit.sigma2).ln() + 1.0);
    let yhat: Vec<f64> = {
        let xb = &x * DVector::from_column_slice(&fit.beta);
        xb.iter().copied().collect()
    };
    let pseudo_r2 = {
        let my = dm.y.iter().sum::<f64>() / n_f;
        let mh = yhat.iter().sum::<f64>() / n_f;
        let mut num = 0.0;
        let mut dy = 0.0;
        let mut dh = 0.0;
        for i in 0..n {
            num += (dm.y[i] - my) * (yhat[i] - mh);
            dy += (dm.y[i] - my) * (dm.y[i] - my);
            dh += (yhat[i] - mh) * (yhat[i] - mh);
        }
        if dh == 0.0 {
            0.0
        } else {
            let c = num / (dy * dh).sqrt();
            c * c
        }
    };
    let k = p + 1;
    // classical OLS covariance with the ML variance estimate
    let xtx_inv = (x.transpose() * &x).try_inverse();
    let (se, pvals) = match xtx_inv {
        Some(inv) => {
            let mut se = vec![0.0]; // rho pinned, no sampling variation
            se.extend((0..p).map(|i| (fit.sigma2 * inv[(i, i)]).sqrt()));
            let mut est = vec![0.0];
            est.extend_from_slice(&fit.beta);
            let pv: Vec<f64> = est
                .iter()
                .zip(&se)
                .map(|(e, s)| if *s == 0.0 { 1.0 } else { two_sided_normal_p(e / s) })
                .collect();
            (Some(se), Some(pv))
        }
        None => (None, None),
    };
    Ok(LagModelFit {
        response: dm.response.clone(),
        rho: 0.0,
        beta: fit.beta,
        term_names: dm.col_names.clone(),
        se,
        p: pvals,
        sigma2: fit.sigma2,
        loglik,
        pseudo_r2,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        n,
        k,
    })
}

/// One named response series with possible gaps.
pub type NamedSeries = (String, Vec<Option<f64>>);

#[derive(Debug)]
pub struct FitAllResult {
    /// One entry per response, in input order; per-cell failures are carried
    /// as errors without aborting the batch.
    pub fits: Vec<(String, Result<LagModelFit, SlmError>)>,
    /// Unit ids surviving the complete-case and island filters, ascending.
    pub kept_units: Vec<String>,
    /// Unit ids dropped for a missing response or covariate value.
    pub dropped_missing: Vec<String>,
    /// Unit ids dropped as islands of the subset structure (only populated
    /// when `drop_islands` is set).
    pub dropped_islands: Vec<String>,
}

/// Fit one spatial lag model per response over a shared complete-case unit
/// subset. The weights are subset to the kept units and re-standardized;
/// eigenvalues are computed once and shared across fits. Islands created by
/// the subsetting are an error unless `drop_islands` iteratively removes
/// them.
pub fn fit_all(
    unit_ids: &[String],
    responses: &[NamedSeries],
    covariates: &[NamedSeries],
    w: &ContiguityWeights,
    drop_islands: bool,
) -> Result<FitAllResult, SlmError> {
    let n = unit_ids.len();
    assert_eq!(w.n(), n, "weights and units must agree");
    for (name, v) in responses.iter().chain(covariates) {
        assert_eq!(v.len(), n, "series {name} length mismatch");
    }
    let mut keep: Vec<usize> = (0..n)
        .filter(|&i| {
            responses.iter().chain(covariates).all(|(_, v)| v[i].is_some())
        })
        .collect();
    let dropped_missing: Vec<String> =
        (0..n).filter(|i| !keep.contains(i)).map(|i| unit_ids[i].clone()).collect();

    let mut dropped_islands = Vec::new();
    let mut sub = w.subset(&keep);
    if drop_islands {
        // removing an island can orphan its former neighbors: iterate
        loop {
            let islands = sub.islands();
            if islands.is_empty() {
                break;
            }
            let island_set: Vec<usize> = islands.iter().map(|&j| keep[j]).collect();
            dropped_islands.extend(island_set.iter().map(|&i| unit_ids[i].clone()));
            keep.retain(|i| !island_set.contains(i));
            sub = w.subset(&keep);
        }
    } else {
        sub.island_error()?;
    }
    let w_std = sub.row_standardized()?;
    let eigs = if w_std.s0() == 0.0 { Vec::new() } else { w_std.eigenvalues()? };

    let x_rows: Vec<Vec<f64>> = keep
        .iter()
        .map(|&i| {
            std::iter::once(1.0).chain(covariates.iter().map(|(_, v)| v[i].unwrap())).collect()
        })
        .collect();
    let col_names: Vec<String> = std::iter::once("constant".to_string())
        .chain(covariates.iter().map(|(name, _)| name.clone()))
        .collect();
    let kept_units: Vec<String> = keep.iter().map(|&i| unit_ids[i].clone()).collect();

    let fits = responses
        .iter()
        .map(|(name, series)| {
            let dm = DesignMatrix {
                response: name.clone(),
                y: keep.iter().map(|&i| series[i].unwrap()).collect(),
                x: x_rows.clone(),
                col_names: col_names.clone(),
                unit_ids: kept_units.clone(),
            };
            let fit = if w_std.s0() == 0.0 {
                ols_as_lag_fit(&dm)
            } else {
                fit_spatial_lag_with_eigs(&dm, &w_std, Some(&eigs))
            };
            (name.clone(), fit)
        })
        .collect();

    Ok(FitAllResult { fits, kept_units, dropped_missing, dropped_islands })
}
