//! Seeded synthetic cohorts with planted process families and a planted
//! overdiagnosis subgroup, plus a tabular cohort for the classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::classifier::TabularDataset;
use crate::error::{Error, Result};
use crate::eventlog::{AttributeTable, CaseAttributes, Event, EventLog, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateStep {
    pub activity: String,
    /// Chance that the step is present; 1 for mandatory steps.
    #[serde(default = "one")]
    pub probability: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyTemplate {
    pub name: String,
    pub steps: Vec<TemplateStep>,
    /// Number of cases with `y_true = 1` among the family's traces.
    pub positive_cases: usize,
}

impl FamilyTemplate {
    fn alphabet(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.steps.iter().map(|s| s.activity.as_str()).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedOutcome {
    /// Planted positives draw outcomes like the negatives (overdiagnosed).
    NegativeDistribution,
    /// Planted positives draw outcomes like other positives (a control).
    PositiveDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedConfig {
    /// Index into `families`.
    pub family: usize,
    pub n_tp_cases: usize,
    pub outcome: PlantedOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeDistribution {
    pub sofa_mean: f64,
    pub sofa_sd: f64,
    pub mortality: f64,
    /// Discharge location weights for survivors; the dead are discharged to
    /// `DIED`.
    pub discharge: Vec<(String, f64)>,
}

pub const DIED_LOCATION: &str = "DIED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub traces_per_family: usize,
    pub families: Vec<FamilyTemplate>,
    pub planted: PlantedConfig,
    /// Per-trace chance of one random insertion (from the family's own
    /// activities) or adjacent swap.
    pub noise_rate: f64,
    pub negative_outcome: OutcomeDistribution,
    pub positive_outcome: OutcomeDistribution,
}

fn steps(spec: &[(&str, f64)]) -> Vec<TemplateStep> {
    spec.iter()
        .map(|&(a, p)| TemplateStep {
            activity: a.to_owned(),
            probability: p,
        })
        .collect()
}

fn discharge(weights: &[(&str, f64)]) -> Vec<(String, f64)> {
    weights.iter().map(|&(l, w)| (l.to_owned(), w)).collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        let family = |name: &str, spec: &[(&str, f64)], positive_cases| FamilyTemplate {
            name: name.to_owned(),
            steps: steps(spec),
            positive_cases,
        };
        SynthConfig {
            seed: 0,
            traces_per_family: 300,
            families: vec![
                family(
                    "resuscitation",
                    &[
                        ("lactate", 1.0),
                        ("fluids crystalloids", 1.0),
                        ("norepinephrine", 1.0),
                        ("vasopressin", 0.4),
                        ("lactate", 0.3),
                    ],
                    180,
                ),
                family(
                    "broad spectrum",
                    &[
                        ("vancomycin", 1.0),
                        ("piperacillin-tazobactam", 1.0),
                        ("epinephrine", 1.0),
                        ("vancomycin", 0.3),
                    ],
                    120,
                ),
                family(
                    "community acquired",
                    &[
                        ("ceftriaxone", 1.0),
                        ("other antibiotics", 1.0),
                        ("dopamine", 1.0),
                        ("ceftriaxone", 0.3),
                    ],
                    25,
                ),
                family(
                    "cardiogenic",
                    &[
                        ("cefazolin", 1.0),
                        ("dobutamine", 1.0),
                        ("cefepime", 1.0),
                        ("dobutamine", 0.3),
                    ],
                    75,
                ),
            ],
            planted: PlantedConfig {
                family: 2,
                n_tp_cases: 25,
                outcome: PlantedOutcome::NegativeDistribution,
            },
            noise_rate: 0.05,
            negative_outcome: OutcomeDistribution {
                sofa_mean: 4.0,
                sofa_sd: 2.0,
                mortality: 0.08,
                discharge: discharge(&[
                    ("HOME", 0.5),
                    ("HOME HEALTH CARE", 0.25),
                    ("SKILLED NURSING FACILITY", 0.15),
                    ("REHAB", 0.1),
                ]),
            },
            positive_outcome: OutcomeDistribution {
                sofa_mean: 9.0,
                sofa_sd: 3.0,
                mortality: 0.30,
                discharge: discharge(&[
                    ("HOME", 0.25),
                    ("HOME HEALTH CARE", 0.25),
                    ("SKILLED NURSING FACILITY", 0.3),
                    ("REHAB", 0.2),
                ]),
            },
        }
    }
}

impl SynthConfig {
    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!(
                "noise_rate must be in [0, 1], got {}",
                self.noise_rate
            ));
        }
        if self.families.is_empty() {
            return bad("at least one family is required".into());
        }
        for (i, f) in self.families.iter().enumerate() {
            if f.steps.is_empty() {
                return bad(format!("family {i} has no steps"));
            }
            if let Some(s) = f
                .steps
                .iter()
                .find(|s| !(0.0..=1.0).contains(&s.probability))
            {
                return bad(format!(
                    "family {i}: step {:?} probability {} outside [0, 1]",
                    s.activity, s.probability
                ));
            }
            if f.positive_cases > self.traces_per_family {
                return bad(format!("family {i} has more positive cases than traces"));
            }
        }
        let p = &self.planted;
        let Some(family) = self.families.get(p.family) else {
            return bad(format!("planted family {} does not exist", p.family));
        };
        if p.n_tp_cases > family.positive_cases {
            return bad(format!(
                "cannot plant {} cases in a family with {} positives",
                p.n_tp_cases, family.positive_cases
            ));
        }
        if 2 * family.positive_cases >= self.traces_per_family {
            return bad("planted family must be negative-dominated".into());
        }
        for o in [&self.negative_outcome, &self.positive_outcome] {
            if !(0.0..=1.0).contains(&o.mortality) {
                return bad(format!("mortality {} outside [0, 1]", o.mortality));
            }
            if !(o.sofa_sd >= 0.0 && o.sofa_mean.is_finite() && o.sofa_sd.is_finite()) {
                return bad("SOFA mean must be finite and sd non-negative".into());
            }
            if o.discharge.is_empty()
                || o.discharge
                    .iter()
                    .any(|(_, w)| !(*w >= 0.0 && w.is_finite()))
                || o.discharge.iter().all(|(_, w)| *w == 0.0)
            {
                return bad("discharge weights must be non-negative with a positive sum".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub case_family: BTreeMap<String, usize>,
    pub overdiagnosed_case_ids: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub log: EventLog,
    pub attrs: AttributeTable,
    pub truth: PlantedTruth,
}

struct OutcomeSampler {
    sofa: Normal<f64>,
    mortality: f64,
    locations: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl OutcomeSampler {
    fn new(d: &OutcomeDistribution) -> Result<Self> {
        Ok(OutcomeSampler {
            sofa: Normal::new(d.sofa_mean, d.sofa_sd)
                .map_err(|e| Error::Config(format!("SOFA distribution: {e}")))?,
            mortality: d.mortality,
            locations: d.discharge.iter().map(|(l, _)| l.clone()).collect(),
            weights: WeightedIndex::new(d.discharge.iter().map(|(_, w)| *w))
                .map_err(|e| Error::Config(format!("discharge weights: {e}")))?,
        })
    }

    /// SOFA, death and discharge location, in that draw order.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (u8, bool, String) {
        let sofa = self
            .sofa
            .sample(rng)
            .round()
            .clamp(0.0, f64::from(CaseAttributes::MAX_SOFA)) as u8;
        let died = rng.gen_bool(self.mortality);
        let location = self.locations[self.weights.sample(rng)].clone();
        (
            sofa,
            died,
            if died {
                DIED_LOCATION.to_owned()
            } else {
                location
            },
        )
    }
}

fn trace_from_template(
    template: &FamilyTemplate,
    alphabet: &[&str],
    noise_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut trace: Vec<String> = template
        .steps
        .iter()
        .filter(|s| s.probability >= 1.0 || rng.gen_bool(s.probability))
        .map(|s| s.activity.clone())
        .collect();
    if noise_rate > 0.0 && rng.gen_bool(noise_rate) {
        if trace.len() >= 2 && rng.gen_bool(0.5) {
            let i = rng.gen_range(0..trace.len() - 1);
            trace.swap(i, i + 1);
        } else {
            let at = rng.gen_range(0..=trace.len());
            let activity = alphabet[rng.gen_range(0..alphabet.len())];
            trace.insert(at, activity.to_owned());
        }
    }
    trace
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2150, 1, 1, 0, 0, 0)
        .single()
        .expect("valid date")
}

/// Generates the cohort. Every draw comes from one seeded stream, so the
/// output is a pure function of the configuration.
pub fn generate(config: &SynthConfig) -> Result<SynthCohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let negative = OutcomeSampler::new(&config.negative_outcome)?;
    let positive = OutcomeSampler::new(&config.positive_outcome)?;
    let n = config.traces_per_family;

    struct Draft {
        family: usize,
        y_true: bool,
        planted: bool,
        activities: Vec<String>,
    }
    let mut drafts = Vec::with_capacity(n * config.n_families());
    for (f, template) in config.families.iter().enumerate() {
        let alphabet = template.alphabet();
        let mut is_positive = vec![false; n];
        for i in index::sample(&mut rng, n, template.positive_cases) {
            is_positive[i] = true;
        }
        let mut planted = vec![false; n];
        if f == config.planted.family {
            let positives: Vec<usize> = (0..n).filter(|&i| is_positive[i]).collect();
            for i in index::sample(&mut rng, positives.len(), config.planted.n_tp_cases) {
                planted[positives[i]] = true;
            }
        }
        for i in 0..n {
            drafts.push(Draft {
                family: f,
                y_true: is_positive[i],
                planted: planted[i],
                activities: trace_from_template(template, &alphabet, config.noise_rate, &mut rng),
            });
        }
    }
    drafts.shuffle(&mut rng);

    let width = drafts.len().to_string().len().max(4);
    let mut vocabulary = Vocabulary::sepsis();
    let mut events = Vec::new();
    let mut attrs = AttributeTable::new();
    let mut truth = PlantedTruth::default();
    for (k, d) in drafts.into_iter().enumerate() {
        let case_id = format!("case-{:0width$}", k + 1);
        let sampler = match (d.y_true, d.planted, config.planted.outcome) {
            (false, _, _) | (true, true, PlantedOutcome::NegativeDistribution) => &negative,
            _ => &positive,
        };
        let (sofa_24h, died, discharge_location) = sampler.draw(&mut rng);
        let mut t = epoch() + Duration::hours(6 * k as i64);
        for activity in d.activities {
            t += Duration::minutes(rng.gen_range(5..=180));
            vocabulary.insert(&activity);
            events.push(Event {
                case_id: case_id.clone(),
                activity,
                timestamp: t,
            });
        }
        attrs.insert(
            case_id.clone(),
            CaseAttributes {
                case_id: case_id.clone(),
                y_true: d.y_true,
                y_pred: d.y_true,
                sofa_24h,
                died,
                discharge_location,
            },
        );
        if d.planted {
            truth.overdiagnosed_case_ids.insert(case_id.clone());
        }
        truth.case_family.insert(case_id, d.family);
    }
    Ok(SynthCohort {
        log: EventLog::from_events(events, vocabulary)?,
        attrs,
        truth,
    })
}

/// `case_id,family,overdiagnosed`, in case id order.
pub fn write_truth_csv<W: Write>(truth: &PlantedTruth, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["case_id", "family", "overdiagnosed"])?;
    for (id, family) in &truth.case_family {
        let planted = truth.overdiagnosed_case_ids.contains(id);
        wtr.write_record([
            id.as_str(),
            &family.to_string(),
            if planted { "1" } else { "0" },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularConfig {
    pub seed: u64,
    pub n_cases: usize,
    pub positive_rate: f64,
    pub n_features: usize,
    pub n_informative: usize,
    /// Mean shift of informative features for positives, in noise sd units.
    pub shift: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            seed: 0,
            n_cases: 2000,
            positive_rate: 0.05,
            n_features: 20,
            n_informative: 3,
            shift: 2.0,
        }
    }
}

/// Standard normal features; the informative ones (at seeded random
/// columns, returned sorted) are shifted by `shift` for positives.
pub fn tabular_cohort(config: &TabularConfig) -> Result<(TabularDataset, Vec<usize>)> {
    if config.n_informative > config.n_features {
        return Err(Error::Config(
            "more informative features than features".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.positive_rate) {
        return Err(Error::Config("positive_rate must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut informative: Vec<usize> =
        index::sample(&mut rng, config.n_features, config.n_informative).into_vec();
    informative.sort_unstable();
    let n_pos = (config.positive_rate * config.n_cases as f64).round() as usize;
    let mut labels = vec![false; config.n_cases];
    for i in index::sample(&mut rng, config.n_cases, n_pos) {
        labels[i] = true;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let rows = labels
        .iter()
        .map(|&l| {
            (0..config.n_features)
                .map(|f| {
                    let x = normal.sample(&mut rng);
                    if l && informative.binary_search(&f).is_ok() {
                        x + config.shift
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let width = config.n_cases.to_string().len().max(4);
    let dataset = TabularDataset::new(
        (1..=config.n_cases)
            .map(|i| format!("case-{i:0width$}"))
            .collect(),
        (1..=config.n_features).map(|f| format!("f{f}")).collect(),
        rows,
        labels,
    )?;
    Ok((dataset, informative))
}
