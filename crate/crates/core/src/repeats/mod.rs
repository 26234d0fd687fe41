//! Maximal repeats and the repeat-alphabet feature space.
//!
//! A maximal repeat is a contiguous pattern occurring at least twice whose
//! occurrences cannot all be extended by the same symbol on the left, nor all
//! by the same symbol on the right. Repeats are grouped into feature classes
//! by their alphabet (the set of symbols they contain); a variant's feature
//! vector counts, per class, the occurrences of that class's repeats inside
//! the variant. Variants are compared by Euclidean distance over these
//! vectors.

mod suffix;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::TraceVariant;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MaximalRepeat<T = String> {
    pub pattern: Vec<T>,
    /// Occurrences (overlapping allowed) across the whole input sequence.
    pub occurrences: usize,
}

/// All maximal repeats of `seq`, sorted by pattern.
pub fn maximal_repeats<T: Ord + Clone>(seq: &[T]) -> Vec<MaximalRepeat<T>> {
    let mut alphabet: Vec<&T> = seq.iter().collect();
    alphabet.sort();
    alphabet.dedup();
    let ranked: Vec<u32> = seq
        .iter()
        .map(|s| alphabet.binary_search(&s).expect("symbol in alphabet") as u32)
        .collect();
    let mut out: Vec<MaximalRepeat<T>> = suffix::maximal_repeat_intervals(&ranked)
        .into_iter()
        .map(|r| MaximalRepeat {
            pattern: seq[r.start..r.start + r.len].to_vec(),
            occurrences: r.count,
        })
        .collect();
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum LogSymbol {
    Activity(u32),
    Delimiter(u32),
}

/// Maximal repeats of the whole log: every trace (each variant repeated
/// `frequency` times) concatenated with a unique delimiter between traces, so
/// no repeat spans two traces.
pub fn log_repeats(variants: &[TraceVariant]) -> Vec<MaximalRepeat> {
    let names: Vec<&String> = variants
        .iter()
        .flat_map(|v| v.activities.iter())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id = |a: &String| names.binary_search(&a).expect("known activity") as u32;

    let mut seq = Vec::new();
    let mut delimiter = 0u32;
    for v in variants {
        for _ in 0..v.frequency {
            if !seq.is_empty() {
                seq.push(LogSymbol::Delimiter(delimiter));
                delimiter += 1;
            }
            seq.extend(v.activities.iter().map(|a| LogSymbol::Activity(id(a))));
        }
    }
    let mut out: Vec<MaximalRepeat> = maximal_repeats(&seq)
        .into_iter()
        .map(|r| MaximalRepeat {
            pattern: r
                .pattern
                .iter()
                .map(|s| match s {
                    LogSymbol::Activity(i) => names[*i as usize].clone(),
                    LogSymbol::Delimiter(_) => unreachable!("delimiters are unique"),
                })
                .collect(),
            occurrences: r.occurrences,
        })
        .collect();
    out.sort();
    out
}

/// One feature class: the repeats sharing an alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureClass {
    pub alphabet: BTreeSet<String>,
    pub members: Vec<MaximalRepeat>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBasis {
    pub classes: Vec<FeatureClass>,
}

impl FeatureBasis {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Groups repeats by alphabet. Classes are ordered by alphabet size, then
/// lexicographically by their sorted symbols.
pub fn build_basis(repeats: &[MaximalRepeat]) -> FeatureBasis {
    let mut groups: BTreeMap<(usize, BTreeSet<String>), Vec<MaximalRepeat>> = BTreeMap::new();
    for r in repeats {
        let alphabet: BTreeSet<String> = r.pattern.iter().cloned().collect();
        groups
            .entry((alphabet.len(), alphabet))
            .or_default()
            .push(r.clone());
    }
    FeatureBasis {
        classes: groups
            .into_iter()
            .map(|((_, alphabet), mut members)| {
                members.sort();
                FeatureClass { alphabet, members }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pattern lookup table for vectorizing many variants against one basis.
#[derive(Debug, Clone)]
pub struct Vectorizer {
    class_of: HashMap<Vec<String>, usize>,
    max_len: usize,
    dims: usize,
    normalize: bool,
}

impl Vectorizer {
    /// With `normalize`, counts are divided by the variant length.
    pub fn new(basis: &FeatureBasis, normalize: bool) -> Self {
        let mut class_of = HashMap::new();
        let mut max_len = 0;
        for (k, class) in basis.classes.iter().enumerate() {
            for m in &class.members {
                max_len = max_len.max(m.pattern.len());
                class_of.insert(m.pattern.clone(), k);
            }
        }
        Vectorizer {
            class_of,
            max_len,
            dims: basis.len(),
            normalize,
        }
    }

    pub fn vectorize(&self, activities: &[String]) -> FeatureVector {
        let mut values = vec![0.0; self.dims];
        let n = activities.len();
        for start in 0..n {
            for len in 1..=self.max_len.min(n - start) {
                if let Some(&k) = self.class_of.get(&activities[start..start + len]) {
                    values[k] += 1.0;
                }
            }
        }
        if self.normalize && n > 0 {
            for v in &mut values {
                *v /= n as f64;
            }
        }
        FeatureVector(values)
    }
}

/// Count, per class, of the occurrences of the class's repeats in `variant`.
pub fn vectorize(variant: &TraceVariant, basis: &FeatureBasis) -> FeatureVector {
    Vectorizer::new(basis, false).vectorize(&variant.activities)
}

pub fn euclidean(u: &FeatureVector, v: &FeatureVector) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(u.0
        .iter()
        .zip(&v.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Log-level repeats, basis and one vector per variant, in variant order.
pub fn feature_space(
    variants: &[TraceVariant],
    normalize: bool,
) -> (FeatureBasis, Vec<FeatureVector>) {
    let basis = build_basis(&log_repeats(variants));
    let vectorizer = Vectorizer::new(&basis, normalize);
    let vectors = variants
        .iter()
        .map(|v| vectorizer.vectorize(&v.activities))
        .collect();
    (basis, vectors)
}

/// Debug dump: `class,alphabet,pattern,occurrences`, one row per repeat.
pub fn write_basis_csv<W: Write>(basis: &FeatureBasis, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["class", "alphabet", "pattern", "occurrences"])?;
    for (k, class) in basis.classes.iter().enumerate() {
        let alphabet = class.alphabet.iter().cloned().collect::<Vec<_>>().join("|");
        for m in &class.members {
            wtr.write_record([
                k.to_string(),
                alphabet.clone(),
                m.pattern.join(">"),
                m.occurrences.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Debug dump: one row per variant, one column per feature class.
pub fn write_vectors_csv<W: Write>(
    variants: &[TraceVariant],
    vectors: &[FeatureVector],
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dims = vectors.first().map_or(0, FeatureVector::len);
    let mut header = vec!["variant".to_owned()];
    header.extend((0..dims).map(|k| format!("c{k}")));
    wtr.write_record(&header)?;
    for (v, x) in variants.iter().zip(vectors) {
        let mut row = vec![v.activities.join(">")];
        row.extend(x.0.iter().map(|c| c.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn rep(s: &str, occurrences: usize) -> MaximalRepeat<char> {
        MaximalRepeat {
            pattern: chars(s),
            occurrences,
        }
    }

    fn strs(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn variant(seq: &[&str], freq: usize) -> TraceVariant {
        TraceVariant::new(
            strs(seq),
            (0..freq).map(|i| format!("{seq:?}{i}")).collect(),
        )
    }

    #[test]
    fn string_examples() {
        assert_eq!(maximal_repeats(&chars("abcabc")), [rep("abc", 2)]);
        assert_eq!(maximal_repeats(&chars("aa")), [rep("a", 2)]);
        assert!(maximal_repeats(&chars("abcd")).is_empty());
        assert!(maximal_repeats::<char>(&[]).is_empty());
    }

    #[test]
    fn log_level_repeats() {
        let r = log_repeats(&[variant(&["a", "b", "c"], 1), variant(&["a", "b", "c"], 1)]);
        assert_eq!(
            r,
            [MaximalRepeat {
                pattern: strs(&["a", "b", "c"]),
                occurrences: 2
            }]
        );
        assert_eq!(log_repeats(&[variant(&["a", "b", "c"], 2)]), r);
        assert!(log_repeats(&[variant(&["a", "b", "c"], 1)]).is_empty());
        assert!(log_repeats(&[variant(&["a", "b"], 1), variant(&["x", "y"], 1)]).is_empty());
    }

    #[test]
    fn basis_grouping_and_order() {
        let r = |s: &[&str]| MaximalRepeat {
            pattern: strs(s),
            occurrences: 2,
        };
        let b = build_basis(&[r(&["a", "b"]), r(&["b", "a"])]);
        assert_eq!(b.len(), 1);
        assert_eq!(b.classes[0].members.len(), 2);

        let b = build_basis(&[r(&["a", "b", "c"]), r(&["a"])]);
        let alphabets: Vec<Vec<&str>> = b
            .classes
            .iter()
            .map(|c| c.alphabet.iter().map(String::as_str).collect())
            .collect();
        assert_eq!(alphabets, vec![vec!["a"], vec!["a", "b", "c"]]);
        assert!(build_basis(&[]).is_empty());
    }

    #[test]
    fn vectorize_examples() {
        let basis = FeatureBasis {
            classes: vec![FeatureClass {
                alphabet: ["a", "b", "c"].iter().map(|s| s.to_string()).collect(),
                members: vec![MaximalRepeat {
                    pattern: strs(&["a", "b", "c"]),
                    occurrences: 2,
                }],
            }],
        };
        let v = variant(&["a", "b", "c", "a", "b", "c"], 1);
        assert_eq!(vectorize(&v, &basis).0, [2.0]);
        assert_eq!(vectorize(&variant(&["x", "y"], 1), &basis).0, [0.0]);
        assert!(vectorize(&v, &FeatureBasis::default()).is_empty());

        let normalized = Vectorizer::new(&basis, true).vectorize(&v.activities);
        assert_eq!(normalized.0, [2.0 / 6.0]);
    }

    #[test]
    fn euclidean_examples() {
        let u = FeatureVector(vec![0.0, 0.0]);
        let v = FeatureVector(vec![3.0, 4.0]);
        assert_eq!(euclidean(&u, &v).unwrap(), 5.0);
        assert_eq!(euclidean(&v, &u).unwrap(), 5.0);
        assert_eq!(euclidean(&v, &v).unwrap(), 0.0);
        assert!(matches!(
            euclidean(&u, &FeatureVector(vec![1.0])),
            Err(Error::Dimension { left: 2, right: 1 })
        ));
    }
}
