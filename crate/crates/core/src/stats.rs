//! Two-sample tests used to compare outcomes inside a cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    ChiSquare,
    ChiSquareYates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Mann-Whitney U of the first sample for the exact path, z for the
    /// normal approximation, chi-square for the proportion test.
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Largest smaller group for which the exact null distribution is used.
pub const EXACT_MAX_GROUP: usize = 10;

const MAX_EXACT_DEGREE: usize = 1 << 21;

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi_square_1df_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}

/// Two-sided upper tail of the standard normal beyond `|z|`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Midranks (1-based) of `values`, plus the tie groups' sizes.
pub(crate) fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Frequencies of U for groups of size `k` and `other`: the coefficients of
/// the Gaussian binomial `[k + other choose k]_q`, built by multiplying by
/// `(1 - q^(other + i))` and dividing by `(1 - q^i)` for `i = 1..=k`.
/// `None` if the counts overflow.
fn rank_sum_counts(k: usize, other: usize) -> Option<Vec<i128>> {
    let degree = k.checked_mul(other)?;
    let log2_total: f64 = (1..=k)
        .map(|i| ((other + i) as f64 / i as f64).log2())
        .sum();
    if degree > MAX_EXACT_DEGREE || log2_total > 120.0 {
        return None;
    }
    let mut poly = vec![0i128; degree + 1];
    poly[0] = 1;
    let mut deg = 0;
    for i in 1..=k {
        let shift = other + i;
        let new_deg = deg + shift;
        let mut prod = vec![0i128; new_deg + 1];
        for (j, &c) in poly[..=deg].iter().enumerate() {
            prod[j] = prod[j].checked_add(c)?;
            prod[j + shift] = prod[j + shift].checked_sub(c)?;
        }
        // exact division by (1 - q^i)
        let mut quot = vec![0i128; new_deg + 1 - i];
        for j in 0..quot.len() {
            let carry = if j >= i { quot[j - i] } else { 0 };
            quot[j] = prod[j].checked_add(carry)?;
        }
        deg = new_deg - i;
        poly[..=deg].copy_from_slice(&quot[..=deg]);
    }
    Some(poly)
}

fn exact_p(u: u64, n: usize, m: usize) -> Option<f64> {
    let counts = rank_sum_counts(n.min(m), n.max(m))?;
    let u = u as usize;
    let mut le: i128 = 0;
    let mut total: i128 = 0;
    for (j, &c) in counts.iter().enumerate() {
        total = total.checked_add(c)?;
        if j <= u {
            le += c;
        }
    }
    let ge = total - le + counts[u];
    Some((2.0 * le.min(ge) as f64 / total as f64).min(1.0))
}

fn check_rank_sum_input(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Invalid(
            "rank-sum test needs two non-empty groups".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::Invalid("rank-sum test input contains NaN".into()));
    }
    Ok(())
}

/// U of `xs` from midranks of the pooled sample, and the tie group sizes.
fn mann_whitney_u(xs: &[f64], ys: &[f64]) -> (f64, Vec<usize>) {
    let n = xs.len();
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_x: f64 = ranks[..n].iter().sum();
    (rank_sum_x - (n * (n + 1)) as f64 / 2.0, ties)
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test of `xs` against `ys`.
///
/// Without ties and with the smaller group at most [`EXACT_MAX_GROUP`], the
/// p-value comes from the exact null distribution of U. Otherwise a normal
/// approximation with tie-corrected variance and a 0.5 continuity
/// correction is used.
pub fn wilcoxon_rank_sum(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    check_rank_sum_input(xs, ys)?;
    let (n, m) = (xs.len(), ys.len());
    let (u, ties) = mann_whitney_u(xs, ys);

    if ties.is_empty() && n.min(m) <= EXACT_MAX_GROUP {
        if let Some(p) = exact_p(u.round() as u64, n, m) {
            return Ok(TestResult {
                statistic: u,
                p_value: p,
                method: TestMethod::Exact,
            });
        }
    }

    Ok(normal_approximation(u, n, m, &ties))
}

/// The normal approximation of the rank-sum test regardless of group sizes
/// and ties: tie-corrected variance and a 0.5 continuity correction.
pub fn wilcoxon_normal_approx(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    check_rank_sum_input(xs, ys)?;
    let (u, ties) = mann_whitney_u(xs, ys);
    Ok(normal_approximation(u, xs.len(), ys.len(), &ties))
}

fn normal_approximation(u: f64, n: usize, m: usize, ties: &[usize]) -> TestResult {
    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let diff = u - nf * mf / 2.0;
    let corrected = (diff.abs() - 0.5).max(0.0);
    let z = if variance > 0.0 {
        diff.signum() * corrected / variance.sqrt()
    } else {
        0.0
    };
    TestResult {
        statistic: z,
        p_value: normal_two_sided_p(z),
        method: TestMethod::NormalApprox,
    }
}

/// Chi-square test of equal proportions `k1/n1` vs `k2/n2` on the 2x2
/// table, optionally with Yates' continuity correction (clamped at zero).
/// A table with an empty margin carries no evidence of a difference and
/// yields chi-square 0, p 1.
pub fn two_proportion_test(
    k1: u64,
    n1: u64,
    k2: u64,
    n2: u64,
    continuity: bool,
) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Invalid(
            "proportion test needs non-empty groups".into(),
        ));
    }
    if k1 > n1 || k2 > n2 {
        return Err(Error::Invalid(format!(
            "successes exceed group size: {k1}/{n1}, {k2}/{n2}"
        )));
    }
    let method = if continuity {
        TestMethod::ChiSquareYates
    } else {
        TestMethod::ChiSquare
    };
    let (a, b, c, d) = (k1 as f64, (n1 - k1) as f64, k2 as f64, (n2 - k2) as f64);
    let total = (n1 + n2) as f64;
    let denominator = (a + b) * (c + d) * (a + c) * (b + d);
    if denominator == 0.0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            method,
        });
    }
    let cross = (i128::from(k1) * i128::from(n2 - k2) - i128::from(n1 - k1) * i128::from(k2))
        .unsigned_abs() as f64;
    let deviation = if continuity {
        (cross - total / 2.0).max(0.0)
    } else {
        cross
    };
    let statistic = total * deviation * deviation / denominator;
    Ok(TestResult {
        statistic,
        p_value: chi_square_1df_sf(statistic),
        method,
    })
}
