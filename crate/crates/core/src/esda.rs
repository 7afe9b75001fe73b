//! Exploratory spatial statistics: Moran's I with permutation inference,
//! Getis-Ord G* hot/cold spot classification and profiling, Spearman
//! correlation tables, and the PCA deprivation index.
//!
//! All inference here is deterministic given a seed; permutation replicates
//! draw from per-replicate RNG streams so results do not depend on
//! evaluation order.

use crate::weights::ContiguityWeights;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EsdaError {
    #[error("input is constant; statistic undefined")]
    ConstantInput,
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("need at least 99 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("no usable indicators remain after dropping constants")]
    NoUsableIndicators,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n−1 denominator); None when n < 2.
pub fn sample_sd(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (x.len() - 1) as f64).sqrt())
}

/// Descriptive statistics of the non-missing values of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample (n−1) standard deviation; None for a single observation.
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample SD, min, and max over the present values; None when empty.
pub fn summary_stats(values: &[Option<f64>]) -> Option<SummaryStats> {
    let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if present.is_empty() {
        return None;
    }
    let (mut min, mut max) = (present[0], present[0]);
    for &v in &present[1..] {
        min = min.min(v);
        max = max.max(v);
    }
    Some(SummaryStats { n: present.len(), mean: mean(&present), sd: sample_sd(&present), min, max })
}

// ---------------------------------------------------------------------------
// Moran's I
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub i: f64,
    /// −1/(n−1), the expectation under no autocorrelation.
    pub expected: f64,
    pub p_perm: f64,
    pub permutations: usize,
    pub seed: u64,
}

/// Global Moran's I: the cross-product of deviations over neighboring pairs,
/// scaled by n over the total weight and the squared deviations.
pub fn morans_i(x: &[f64], w: &ContiguityWeights) -> Result<f64, EsdaError> {
    if x.len() != w.n() {
        return Err(EsdaError::LengthMismatch(x.len(), w.n()));
    }
    let n = x.len();
    let xbar = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - xbar).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    if ss == 0.0 {
        return Err(EsdaError::ConstantInput);
    }
    let lag = w.lag(&dev);
    let cross: f64 = dev.iter().zip(&lag).map(|(d, l)| d * l).sum();
    Ok((n as f64 / w.s0()) * (cross / ss))
}

/// Permutation test for Moran's I. Values are shuffled across units;
/// the pseudo p-value is (1 + #{|I_perm − E| ≥ |I_obs − E|}) / (permutations + 1).
/// Each replicate draws from its own RNG stream derived from (seed, replicate),
/// so the result is independent of evaluation order.
pub fn morans_permutation(
    x: &[f64],
    w: &ContiguityWeights,
    permutations: usize,
    seed: u64,
) -> Result<MoranResult, EsdaError> {
    if permutations < 99 {
        return Err(EsdaError::TooFewPermutations(permutations));
    }
    let observed = morans_i(x, w)?;
    let n = x.len();
    let expected = -1.0 / (n as f64 - 1.0);
    let obs_dev = (observed - expected).abs();
    let mut extreme = 0usize;
    let mut perm = x.to_vec();
    for rep in 0..permutations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64 + 1);
        perm.copy_from_slice(x);
        perm.shuffle(&mut rng);
        let i_perm = morans_i(&perm, w)?;
        if (i_perm - expected).abs() >= obs_dev {
            extreme += 1;
        }
    }
    Ok(MoranResult {
        i: observed,
        expected,
        p_perm: (1 + extreme) as f64 / (permutations + 1) as f64,
        permutations,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Getis-Ord G*
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HotClass {
    Hot,
    Cold,
    NotSignificant,
}

impl HotClass {
    pub fn label(&self) -> &'static str {
        match self {
            HotClass::Hot => "Hot",
            HotClass::Cold => "Cold",
            HotClass::NotSignificant => "NotSignificant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GStarResult {
    /// Standardized score per unit; None when the variance term degenerates
    /// (neighborhood covers every unit).
    pub z: Vec<Option<f64>>,
    pub class: Vec<HotClass>,
    pub threshold: f64,
    pub warnings: Vec<String>,
}

/// Getis-Ord G* score per unit. Pass binary weights with the diagonal
/// included (`w.with_self()`) for the standard G* convention; the statistic
/// is computed from whatever weights are supplied. The mean and deviation
/// are taken over all n units, with the population (1/n) standard deviation.
pub fn getis_ord_gstar(
    x: &[f64],
    w: &ContiguityWeights,
    threshold: f64,
) -> Result<GStarResult, EsdaError> {
    if x.len() != w.n() {
        return Err(EsdaError::LengthMismatch(x.len(), w.n()));
    }
    let n = x.len();
    if n < 2 {
        return Err(EsdaError::TooFewObservations { need: 2, got: n });
    }
    let xbar = mean(x);
    let ss: f64 = x.iter().map(|v| (v - xbar) * (v - xbar)).sum();
    if ss == 0.0 {
        return Err(EsdaError::ConstantInput);
    }
    let s_pop = (ss / n as f64).sqrt();
    let lag = w.lag(x);
    let mut z = Vec::with_capacity(n);
    let mut class = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for i in 0..n {
        // per-row weights are uniform, so the sums reduce to degree * value
        let deg = w.degree(i) as f64;
        let w_val = if deg > 0.0 { w.weight(i, *w.neighbors(i).first().unwrap_or(&i)) } else { 0.0 };
        let sum_w = deg * w_val;
        let sum_w2 = deg * w_val * w_val;
        let radicand = (n as f64 * sum_w2 - sum_w * sum_w) / (n as f64 - 1.0);
        if radicand <= 0.0 {
            warnings.push(format!(
                "unit {i}: G* variance term non-positive (neighborhood spans all units); marked not significant"
            ));
            z.push(None);
            class.push(HotClass::NotSignificant);
            continue;
        }
        let g = (lag[i] - xbar * sum_w) / (s_pop * radicand.sqrt());
        z.push(Some(g));
        class.push(if g >= threshold {
            HotClass::Hot
        } else if g <= -threshold {
            HotClass::Cold
        } else {
            HotClass::NotSignificant
        });
    }
    Ok(GStarResult { z, class, threshold, warnings })
}

// ---------------------------------------------------------------------------
// Hot spot profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRow {
    pub var: String,
    /// Units in the class with this variable present.
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HotspotProfile {
    pub class: HotClass,
    /// Units classified into `class`; 0 flags an empty profile.
    pub unit_count: usize,
    pub rows: Vec<ProfileRow>,
}

/// Mean and sample SD of each variable over the units in `target` class.
pub fn hotspot_profile(
    classes: &[HotClass],
    vars: &[(String, Vec<Option<f64>>)],
    target: HotClass,
) -> HotspotProfile {
    let members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == target).collect();
    let rows = vars
        .iter()
        .map(|(name, values)| {
            assert_eq!(values.len(), classes.len(), "variable {name} length mismatch");
            let present: Vec<f64> = members.iter().filter_map(|&i| values[i]).collect();
            ProfileRow {
                var: name.clone(),
                n: present.len(),
                mean: (!present.is_empty()).then(|| mean(&present)),
                sd: sample_sd(&present),
            }
        })
        .collect();
    HotspotProfile { class: target, unit_count: members.len(), rows }
}

// ---------------------------------------------------------------------------
// Spearman correlation
// ---------------------------------------------------------------------------

/// Average ranks (1-based); tied values share the mean of their rank span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share mean rank of (i+1)..=(j+1)
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EsdaError> {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EsdaError::ConstantInput);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EsdaError> {
    if x.len() != y.len() {
        return Err(EsdaError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EsdaError::TooFewObservations { need: 3, got: x.len() });
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Lower-triangular correlation table (diagonal included). `cells[i]` has
/// i + 1 entries; a None cell means the pair was degenerate (constant values
/// or fewer than 3 complete cases).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub names: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl CorrelationTable {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i >= j {
            self.cells[i][j]
        } else {
            self.cells[j][i]
        }
    }
}

/// Pairwise-complete Spearman correlations over named series.
pub fn spearman_matrix(series: &[(String, Vec<Option<f64>>)]) -> CorrelationTable {
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    let cells = (0..series.len())
        .map(|i| {
            (0..=i)
                .map(|j| {
                    if i == j {
                        return Some(1.0);
                    }
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for (a, b) in series[i].1.iter().zip(&series[j].1) {
                        if let (Some(a), Some(b)) = (a, b) {
                            xs.push(*a);
                            ys.push(*b);
                        }
                    }
                    spearman(&xs, &ys).ok()
                })
                .collect()
        })
        .collect();
    CorrelationTable { names, cells }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationTables {
    /// All-hours crime rates against covariates.
    pub full: CorrelationTable,
    /// Night-window crime rates against the same covariates.
    pub night: CorrelationTable,
    /// Cellwise night − full; None where either side is missing.
    pub difference: CorrelationTable,
}

/// The three published correlation views: full-sample, night, and their
/// difference. `crime_all` and `crime_night` must pair up one-to-one.
pub fn correlation_tables(
    crime_all: &[(String, Vec<Option<f64>>)],
    crime_night: &[(String, Vec<Option<f64>>)],
    covariates: &[(String, Vec<Option<f64>>)],
) -> CorrelationTables {
    assert_eq!(crime_all.len(), crime_night.len(), "one night series per all-hours series");
    let with = |crimes: &[(String, Vec<Option<f64>>)]| {
        let mut all = crimes.to_vec();
        all.extend_from_slice(covariates);
        spearman_matrix(&all)
    };
    let full = with(crime_all);
    let night = with(crime_night);
    let cells = night
        .cells
        .iter()
        .zip(&full.cells)
        .map(|(nrow, frow)| {
            nrow.iter()
                .zip(frow)
                .map(|(n, f)| match (n, f) {
                    (Some(n), Some(f)) => Some(n - f),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let difference = CorrelationTable { names: night.names.clone(), cells };
    CorrelationTables { full, night, difference }
}

// ---------------------------------------------------------------------------
// Deprivation index (correlation-matrix PCA)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeprivationIndex {
    /// First-principal-component score per unit; None when any used
    /// indicator is missing for that unit.
    pub score: Vec<Option<f64>>,
    /// Loading per used indicator, unit-norm overall.
    pub loadings: Vec<(String, f64)>,
    /// λ₁ / (number of used indicators).
    pub explained_share: f64,
    /// Leading eigenvalue of the correlation matrix; equals the sample
    /// variance of the fitted scores.
    pub lambda1: f64,
    /// Indicators dropped for being constant over the fitted units.
    pub dropped: Vec<String>,
    /// Units with every used indicator present (the PCA fitting set).
    pub fitted_units: usize,
}

/// First principal component of the indicator correlation matrix.
///
/// Indicators are standardized to mean 0, sample SD 1 over the units where
/// every used indicator is present. Constant indicators are dropped (with a
/// warning entry) and the fit repeats on the remainder. The eigenvector sign
/// is chosen so the poverty loading (first indicator when no name contains
/// "poverty") is positive.
pub fn deprivation_pca(
    indicators: &[(String, Vec<Option<f64>>)],
) -> Result<DeprivationIndex, EsdaError> {
    let n = indicators.first().map(|(_, v)| v.len()).unwrap_or(0);
    for (name, v) in indicators {
        assert_eq!(v.len(), n, "indicator {name} length mismatch");
    }
    let mut used: Vec<usize> = (0..indicators.len()).collect();
    let mut dropped = Vec::new();
    // Dropping an indicator can enlarge the complete-case set, so re-check
    // constancy until the used set is stable.
    let fitted: Vec<usize> = loop {
        if used.is_empty() {
            return Err(EsdaError::NoUsableIndicators);
        }
        let fitted: Vec<usize> = (0..n)
            .filter(|&u| used.iter().all(|&k| indicators[k].1[u].is_some()))
            .collect();
        if fitted.len() < 5 {
            return Err(EsdaError::TooFewObservations { need: 5, got: fitted.len() });
        }
        let constant = used.iter().position(|&k| {
            let first = indicators[k].1[fitted[0]];
            fitted.iter().all(|&u| indicators[k].1[u] == first)
        });
        match constant {
            Some(pos) => {
                dropped.push(indicators[used[pos]].0.clone());
                used.remove(pos);
            }
            None => break fitted,
        }
    };
    let k = used.len();
    let nf = fitted.len();
    // standardized columns over the fitted set
    let mut z = vec![vec![0.0; nf]; k];
    for (col, &ki) in used.iter().enumerate() {
        let vals: Vec<f64> = fitted.iter().map(|&u| indicators[ki].1[u].unwrap()).collect();
        let m = mean(&vals);
        let sd = sample_sd(&vals).expect("fitted set has >= 5 units");
        for (row, v) in vals.iter().enumerate() {
            z[col][row] = (v - m) / sd;
        }
    }
    let mut corr = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let r = z[a].iter().zip(&z[b]).map(|(x, y)| x * y).sum::<f64>() / (nf - 1) as f64;
            corr[(a, b)] = r;
            corr[(b, a)] = r;
        }
    }
    let eig = corr.clone().symmetric_eigen();
    let lead = (0..k)
        .max_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap())
        .unwrap();
    let lambda1 = eig.eigenvalues[lead];
    let mut vec1: Vec<f64> = (0..k).map(|r| eig.eigenvectors[(r, lead)]).collect();
    let anchor = used
        .iter()
        .position(|&ki| indicators[ki].0.to_ascii_lowercase().contains("poverty"))
        .unwrap_or(0);
    if vec1[anchor] < 0.0 {
        for v in &mut vec1 {
            *v = -*v;
        }
    }
    let mut score = vec![None; n];
    for (row, &u) in fitted.iter().enumerate() {
        score[u] = Some((0..k).map(|col| z[col][row] * vec1[col]).sum());
    }
    Ok(DeprivationIndex {
        score,
        loadings: used.iter().zip(&vec1).map(|(&ki, &v)| (indicators[ki].0.clone(), v)).collect(),
        explained_share: lambda1 / k as f64,
        lambda1,
        dropped,
        fitted_units: nf,
    })
}
