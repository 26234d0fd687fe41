//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// Every substring occurring at least twice whose occurrences have both a
/// non-constant left context and a non-constant right context. Sequence
/// boundaries count as unique contexts.
pub fn brute_force_maximal_repeats<T: Ord + Clone>(seq: &[T]) -> BTreeMap<Vec<T>, usize> {
    let n = seq.len();
    let mut out = BTreeMap::new();
    for len in 1..=n {
        let mut seen: BTreeMap<&[T], Vec<usize>> = BTreeMap::new();
        for start in 0..=n - len {
            seen.entry(&seq[start..start + len])
                .or_default()
                .push(start);
        }
        for (pattern, starts) in seen {
            if starts.len() < 2 {
                continue;
            }
            // None stands for a boundary; each boundary is distinct from
            // everything else, including other boundaries.
            let left: Vec<Option<&T>> = starts
                .iter()
                .map(|&s| if s == 0 { None } else { Some(&seq[s - 1]) })
                .collect();
            let right: Vec<Option<&T>> = starts.iter().map(|&s| seq.get(s + len)).collect();
            if varies(&left) && varies(&right) {
                out.insert(pattern.to_vec(), starts.len());
            }
        }
    }
    out
}

fn varies<T: PartialEq>(contexts: &[Option<&T>]) -> bool {
    contexts.iter().any(Option::is_none) || contexts.windows(2).any(|w| w[0] != w[1])
}

/// Counts subsets of ranks `1..=n+m` of size `n` by their Mann-Whitney U and
/// returns the two-sided exact p-value for the observed `u`.
pub fn enumerate_rank_sum_p(n: usize, m: usize, u_obs: u64) -> f64 {
    let total = n + m;
    let mut le = 0u64;
    let mut ge = 0u64;
    let mut count = 0u64;
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    fn rec(
        next: usize,
        total: usize,
        n: usize,
        chosen: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == n {
            visit(chosen);
            return;
        }
        for r in next..=total {
            if total - r + 1 < n - chosen.len() {
                break;
            }
            chosen.push(r);
            rec(r + 1, total, n, chosen, visit);
            chosen.pop();
        }
    }
    let offset = (n * (n + 1) / 2) as u64;
    rec(1, total, n, &mut chosen, &mut |ranks| {
        let u = ranks.iter().map(|&r| r as u64).sum::<u64>() - offset;
        count += 1;
        if u <= u_obs {
            le += 1;
        }
        if u >= u_obs {
            ge += 1;
        }
    });
    (2.0 * le.min(ge) as f64 / count as f64).min(1.0)
}

/// Mann-Whitney U of `xs` against `ys` for tie-free data by direct pair
/// counting.
pub fn pair_count_u(xs: &[f64], ys: &[f64]) -> u64 {
    xs.iter()
        .map(|x| ys.iter().filter(|y| x > y).count() as u64)
        .sum()
}

/// Upper tail of the chi-square distribution with one degree of freedom,
/// computed as twice the standard normal upper tail beyond sqrt(x) by
/// composite Simpson quadrature of the normal density.
pub fn chi2_1df_sf_quadrature(x: f64) -> f64 {
    let a = x.sqrt();
    let b = a + 40.0;
    let steps = 400_000usize;
    let h = (b - a) / steps as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = phi(a) + phi(b);
    for i in 1..steps {
        let t = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(t);
    }
    2.0 * acc * h / 3.0
}

/// Weighted replay fitness of `members` against the given start set, end
/// set and edge set: one check per start, transition and end.
pub fn weighted_replay(
    members: &[overdx_core::eventlog::TraceVariant],
    model: &overdx_core::procmodel::ProcessModel,
) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0;
    for v in members {
        let a = &v.activities;
        let mut passed = 0;
        passed += usize::from(model.starts.contains(&a[0]));
        passed += usize::from(model.ends.contains(&a[a.len() - 1]));
        passed += a
            .windows(2)
            .filter(|w| model.edges.contains(&(w[0].clone(), w[1].clone())))
            .count();
        weighted += v.frequency as f64 * passed as f64 / (a.len() + 1) as f64;
        total += v.frequency;
    }
    weighted / total as f64
}

/// A random log of distinct variants over the 13 sepsis activities: up to
/// `max_variants` sequences of length 1..=8 with frequencies 1..=12.
pub fn random_variants(seed: u64, max_variants: usize) -> Vec<overdx_core::eventlog::TraceVariant> {
    use overdx_core::eventlog::{TraceVariant, SEPSIS_ACTIVITIES};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_variants);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    // a small working alphabet per log makes overlapping variants likely
    let alphabet = rng.gen_range(2..=13);
    for k in 0..n {
        let len = rng.gen_range(1..=8);
        let seq: Vec<String> = (0..len)
            .map(|_| SEPSIS_ACTIVITIES[rng.gen_range(0..alphabet)].to_owned())
            .collect();
        let freq = rng.gen_range(1..=12);
        if seen.insert(seq.clone()) {
            out.push(TraceVariant::new(
                seq,
                (0..freq).map(|i| format!("v{k}-{i}")).collect(),
            ));
        }
    }
    out
}

/// AUROC by counting positive/negative pairs; ties count one half.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
