//! CLT-based comparison of two models evaluated over `N_e` independent runs.
//!
//! With per-run errors `e_A`, `e_B` the interval is
//! `d̄ ± z_{α/2} · sqrt((σ̂_A² + σ̂_B²) / N_e)` with unbiased variances.
//! Lower error is better: a CI entirely below zero means A is better.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Runs needed before the normal approximation is trusted.
pub const CLT_MIN_RUNS: usize = 30;
/// Below this the comparison is refused outright.
pub const HARD_MIN_RUNS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ABetter,
    BBetter,
    NotSignificant,
}

impl Verdict {
    pub fn mirrored(self) -> Verdict {
        match self {
            Verdict::ABetter => Verdict::BBetter,
            Verdict::BBetter => Verdict::ABetter,
            Verdict::NotSignificant => Verdict::NotSignificant,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub mean_diff: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub verdict: Verdict,
    pub n_runs: usize,
    pub alpha: f64,
    /// Set when `n_runs` is below the CLT threshold of 30.
    pub low_sample_warning: bool,
}

/// Two-sided standard-normal quantile `z_{alpha/2}`.
pub fn z_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(std_normal.inverse_cdf(1.0 - alpha / 2.0))
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn pairwise_compare(
    errors_a: &[f64],
    errors_b: &[f64],
    alpha: f64,
) -> Result<PairwiseComparison> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::LengthMismatch {
            left: errors_a.len(),
            right: errors_b.len(),
        });
    }
    let n = errors_a.len();
    if n < HARD_MIN_RUNS {
        return Err(Error::InsufficientData(format!(
            "pairwise comparison needs at least {HARD_MIN_RUNS} runs, got {n}"
        )));
    }
    if errors_a.iter().chain(errors_b).any(|e| !e.is_finite()) {
        return Err(Error::invalid("non-finite error value"));
    }
    let z = z_critical(alpha)?;
    let (mean_a, var_a) = mean_and_var(errors_a);
    let (mean_b, var_b) = mean_and_var(errors_b);
    let mean_diff = mean_a - mean_b;
    let std_err = ((var_a + var_b) / n as f64).sqrt();
    let ci_low = mean_diff - z * std_err;
    let ci_high = mean_diff + z * std_err;
    let verdict = if ci_high < 0.0 {
        Verdict::ABetter
    } else if ci_low > 0.0 {
        Verdict::BBetter
    } else {
        Verdict::NotSignificant
    };
    Ok(PairwiseComparison {
        mean_diff,
        std_err,
        ci_low,
        ci_high,
        verdict,
        n_runs: n,
        alpha,
        low_sample_warning: n < CLT_MIN_RUNS,
    })
}

/// Mean and normal-approximation confidence interval of one set of runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

pub fn mean_ci(xs: &[f64], alpha: f64) -> Result<MeanCi> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("no values".into()));
    }
    if xs.len() == 1 {
        return Ok(MeanCi {
            mean: xs[0],
            half_width: 0.0,
            n: 1,
        });
    }
    let (mean, var) = mean_and_var(xs);
    Ok(MeanCi {
        mean,
        half_width: z_critical(alpha)? * (var / xs.len() as f64).sqrt(),
        n: xs.len(),
    })
}

/// Pairwise verdicts across augmentation levels. `cells[i][j]` compares row
/// level `i` (as A) against column level `j` (as B); the diagonal is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub levels: Vec<u32>,
    pub alpha: f64,
    pub cells: Vec<Vec<Option<Verdict>>>,
    pub mean_diffs: Vec<Vec<Option<f64>>>,
}

impl SignificanceMatrix {
    pub fn verdict(&self, row_level: u32, col_level: u32) -> Option<Verdict> {
        let i = self.levels.iter().position(|&l| l == row_level)?;
        let j = self.levels.iter().position(|&l| l == col_level)?;
        self.cells[i][j]
    }

    pub fn is_antisymmetric(&self) -> bool {
        let n = self.levels.len();
        (0..n).all(|i| {
            self.cells[i][i].is_none()
                && (0..n)
                    .filter(|&j| j != i)
                    .all(|j| self.cells[i][j].map(Verdict::mirrored) == self.cells[j][i])
        })
    }

    /// Text grid: `+` row level better, `-` worse, `~` not significant.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>6}", "A");
        for l in &self.levels {
            let _ = write!(out, "{:>6}", format!("x{l}"));
        }
        out.push('\n');
        for (i, l) in self.levels.iter().enumerate() {
            let _ = write!(out, "{:>6}", format!("x{l}"));
            for cell in &self.cells[i] {
                let sym = match cell {
                    None => ".",
                    Some(Verdict::ABetter) => "+",
                    Some(Verdict::BBetter) => "-",
                    Some(Verdict::NotSignificant) => "~",
                };
                let _ = write!(out, "{sym:>6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn significance_matrix(
    error_sets: &BTreeMap<u32, Vec<f64>>,
    alpha: f64,
) -> Result<SignificanceMatrix> {
    if error_sets.len() < 2 {
        return Err(Error::InsufficientData(
            "significance matrix needs at least two levels".into(),
        ));
    }
    let levels: Vec<u32> = error_sets.keys().copied().collect();
    let sets: Vec<&Vec<f64>> = error_sets.values().collect();
    let n = levels.len();
    let mut cells = vec![vec![None; n]; n];
    let mut mean_diffs = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let cmp = pairwise_compare(sets[i], sets[j], alpha)?;
            cells[i][j] = Some(cmp.verdict);
            mean_diffs[i][j] = Some(cmp.mean_diff);
        }
    }
    let matrix = SignificanceMatrix {
        levels,
        alpha,
        cells,
        mean_diffs,
    };
    assert!(matrix.is_antisymmetric(), "pairwise verdicts must mirror");
    Ok(matrix)
}
