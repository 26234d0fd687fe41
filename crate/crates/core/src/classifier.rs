//! Baseline label-producing pipeline: undersampling, greedy forward feature
//! selection and gradient-boosted decision stumps, plus import of
//! predictions made by any external model.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::midranks;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub case_ids: Vec<String>,
    pub feature_names: Vec<String>,
    /// Row-major feature matrix.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl TabularDataset {
    pub fn new(
        case_ids: Vec<String>,
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        if case_ids.len() != rows.len() || labels.len() != rows.len() {
            return Err(Error::Invalid(format!(
                "dataset has {} ids, {} rows and {} labels",
                case_ids.len(),
                rows.len(),
                labels.len()
            )));
        }
        if let Some((i, row)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != feature_names.len())
        {
            return Err(Error::Invalid(format!(
                "row {i} ({}) has {} features, expected {}",
                case_ids[i],
                row.len(),
                feature_names.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("feature values must be finite".into()));
        }
        Ok(TabularDataset {
            case_ids,
            feature_names,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TabularDataset {
        TabularDataset {
            case_ids: indices.iter().map(|&i| self.case_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Only the feature columns at `features`, in that order.
    pub fn project(&self, features: &[usize]) -> Result<TabularDataset> {
        if let Some(&f) = features.iter().find(|&&f| f >= self.n_features()) {
            return Err(Error::Invalid(format!(
                "feature index {f} out of range for {} features",
                self.n_features()
            )));
        }
        Ok(TabularDataset {
            case_ids: self.case_ids.clone(),
            feature_names: features
                .iter()
                .map(|&f| self.feature_names[f].clone())
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| features.iter().map(|&f| r[f]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads a feature CSV with header `case_id,label,<feature>...`.
pub fn parse_feature_csv<R: Read>(reader: R) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "case_id" || &headers[1] != "label" {
        return Err(Error::Schema(
            "feature CSV header must start with case_id,label".into(),
        ));
    }
    let feature_names: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();
    let (mut ids, mut rows, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { line, message };
        let id = record[0].to_owned();
        if id.is_empty() {
            return Err(row_err("empty case_id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateCase(id));
        }
        let label = parse_label(&record[1])
            .ok_or_else(|| row_err(format!("invalid label {:?}", &record[1])))?;
        let values = record
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| row_err(format!("invalid feature value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        ids.push(id);
        rows.push(values);
        labels.push(label);
    }
    TabularDataset::new(ids, feature_names, rows, labels)
}

pub fn write_feature_csv<W: Write>(dataset: &TabularDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["case_id".to_owned(), "label".to_owned()];
    header.extend(dataset.feature_names.iter().cloned());
    wtr.write_record(&header)?;
    for ((id, row), label) in dataset
        .case_ids
        .iter()
        .zip(&dataset.rows)
        .zip(&dataset.labels)
    {
        let mut rec = vec![id.clone(), u8::from(*label).to_string()];
        rec.extend(row.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn class_indices(labels: &[bool]) -> (Vec<usize>, Vec<usize>) {
    (0..labels.len()).partition(|&i| labels[i])
}

/// Randomly downsamples the majority class to the minority size. Kept rows
/// stay in their original order.
pub fn undersample(dataset: &TabularDataset, seed: u64) -> Result<TabularDataset> {
    let (pos, neg) = class_indices(&dataset.labels);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Invalid(
            "undersampling needs both classes present".into(),
        ));
    }
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|i| majority[i])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    Ok(dataset.subset(&keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostParams {
    pub learning_rate: f64,
    pub n_rounds: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Row fraction drawn (without replacement) for each round.
    pub subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            learning_rate: 0.1,
            n_rounds: 200,
            lambda: 1.0,
            subsample: 1.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("subsample must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    /// In standardized units.
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumps {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub base_score: f64,
    pub stumps: Vec<Stump>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

impl BoostedStumps {
    /// Logistic-loss boosting of depth-1 trees over standardized features.
    pub fn fit(dataset: &TabularDataset, params: &BoostParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = dataset.len();
        let n_pos = dataset.n_positive();
        if n_pos == 0 || n_pos == n {
            return Err(Error::Invalid("training needs both classes present".into()));
        }
        let d = dataset.n_features();
        let mut means = vec![0.0; d];
        let mut scales = vec![1.0; d];
        let mut cols = vec![vec![0.0; n]; d];
        for f in 0..d {
            let mean = dataset.rows.iter().map(|r| r[f]).sum::<f64>() / n as f64;
            let var = dataset
                .rows
                .iter()
                .map(|r| (r[f] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            means[f] = mean;
            if var > 0.0 {
                scales[f] = var.sqrt();
            }
            for (i, r) in dataset.rows.iter().enumerate() {
                cols[f][i] = (r[f] - mean) / scales[f];
            }
        }
        let order: Vec<Vec<usize>> = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
                idx
            })
            .collect();

        let prior = n_pos as f64 / n as f64;
        let base_score = (prior / (1.0 - prior)).ln();
        let y: Vec<f64> = dataset
            .labels
            .iter()
            .map(|&l| f64::from(u8::from(l)))
            .collect();
        let mut raw = vec![base_score; n];
        let mut stumps = Vec::with_capacity(params.n_rounds);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
        let mut in_sample = vec![true; n];
        let (mut grad, mut hess) = (vec![0.0; n], vec![0.0; n]);

        for _ in 0..params.n_rounds {
            if sample_size < n {
                in_sample.fill(false);
                for i in index::sample(&mut rng, n, sample_size) {
                    in_sample[i] = true;
                }
            }
            let (mut g_total, mut h_total) = (0.0, 0.0);
            for i in 0..n {
                let p = sigmoid(raw[i]);
                grad[i] = p - y[i];
                hess[i] = p * (1.0 - p);
                if in_sample[i] {
                    g_total += grad[i];
                    h_total += hess[i];
                }
            }
            let score = |g: f64, h: f64| g * g / (h + params.lambda);
            let parent = score(g_total, h_total);
            let mut best: Option<Split> = None;
            for f in 0..d {
                let col = &cols[f];
                let sampled: Vec<usize> =
                    order[f].iter().copied().filter(|&i| in_sample[i]).collect();
                let (mut gl, mut hl) = (0.0, 0.0);
                for w in sampled.windows(2) {
                    gl += grad[w[0]];
                    hl += hess[w[0]];
                    if col[w[1]] <= col[w[0]] {
                        continue;
                    }
                    let (gr, hr) = (g_total - gl, h_total - hl);
                    let gain = score(gl, hl) + score(gr, hr) - parent;
                    if gain > best.as_ref().map_or(1e-12, |b| b.gain) {
                        best = Some(Split {
                            gain,
                            feature: f,
                            threshold: (col[w[0]] + col[w[1]]) / 2.0,
                            left: -gl / (hl + params.lambda),
                            right: -gr / (hr + params.lambda),
                        });
                    }
                }
            }
            let Some(split) = best else { break };
            let stump = Stump {
                feature: split.feature,
                threshold: split.threshold,
                left: params.learning_rate * split.left,
                right: params.learning_rate * split.right,
            };
            for i in 0..n {
                raw[i] += if cols[stump.feature][i] <= stump.threshold {
                    stump.left
                } else {
                    stump.right
                };
            }
            stumps.push(stump);
        }
        Ok(BoostedStumps {
            means,
            scales,
            base_score,
            stumps,
        })
    }

    /// Probability of the positive class.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let raw = self.stumps.iter().fold(self.base_score, |acc, s| {
            let x = (row[s.feature] - self.means[s.feature]) / self.scales[s.feature];
            acc + if x <= s.threshold { s.left } else { s.right }
        });
        sigmoid(raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub case_id: String,
    pub score: f64,
    pub y_pred: bool,
}

pub const DECISION_THRESHOLD: f64 = 0.5;

fn predictions(model: &BoostedStumps, dataset: &TabularDataset) -> Vec<Prediction> {
    dataset
        .case_ids
        .iter()
        .zip(&dataset.rows)
        .map(|(id, row)| {
            let score = model.predict_proba(row);
            Prediction {
                case_id: id.clone(),
                score,
                y_pred: score >= DECISION_THRESHOLD,
            }
        })
        .collect()
}

/// Trains on `dataset` and scores its own rows.
pub fn train_predict(
    dataset: &TabularDataset,
    params: &BoostParams,
    seed: u64,
) -> Result<Vec<Prediction>> {
    let n_pos = dataset.n_positive();
    if n_pos < 2 || dataset.len() - n_pos < 2 {
        return Err(Error::Invalid(
            "training needs at least 2 cases per class".into(),
        ));
    }
    let model = BoostedStumps::fit(dataset, params, seed)?;
    Ok(predictions(&model, dataset))
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let (mut pos, mut neg) = class_indices(labels);
    if folds < 2 || pos.len() < folds || neg.len() < folds {
        return Err(Error::Invalid(format!(
            "{folds} folds need at least {folds} cases per class (have {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0; labels.len()];
    for (k, &i) in pos.iter().chain(&neg).enumerate() {
        assignment[i] = k % folds;
    }
    Ok(assignment)
}

/// Out-of-fold scores: each fold is scored by a model trained on the rest.
pub fn cross_val_scores(
    dataset: &TabularDataset,
    fold_of: &[usize],
    folds: usize,
    params: &BoostParams,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; dataset.len()];
    for k in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..dataset.len()).partition(|&i| fold_of[i] == k);
        let model = BoostedStumps::fit(&dataset.subset(&train), params, seed)?;
        for i in test {
            scores[i] = model.predict_proba(&dataset.rows[i]);
        }
    }
    Ok(scores)
}

/// Adds, one at a time, the feature whose inclusion maximizes the pooled
/// out-of-fold AUROC of the boosted-stump learner. Ties go to the lower
/// feature index. Returns feature indices in selection order.
pub fn greedy_forward_select(
    dataset: &TabularDataset,
    k: usize,
    folds: usize,
    params: &BoostParams,
    seed: u64,
) -> Result<Vec<usize>> {
    if k > dataset.n_features() {
        return Err(Error::Invalid(format!(
            "cannot select {k} of {} features",
            dataset.n_features()
        )));
    }
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    if k == 0 {
        return Ok(selected);
    }
    let fold_of = stratified_folds(&dataset.labels, folds, seed)?;
    while selected.len() < k {
        let candidates: Vec<usize> = (0..dataset.n_features())
            .filter(|f| !selected.contains(f))
            .collect();
        let scored = candidates
            .par_iter()
            .map(|&f| {
                let mut features = selected.clone();
                features.push(f);
                let projected = dataset.project(&features)?;
                let scores = cross_val_scores(&projected, &fold_of, folds, params, seed)?;
                Ok((f, auroc(&scores, &dataset.labels)?))
            })
            .collect::<Result<Vec<(usize, f64)>>>()?;
        let (best, auc) = scored
            .into_iter()
            .fold(None, |acc: Option<(usize, f64)>, (f, a)| match acc {
                Some((_, b)) if b >= a => acc,
                _ => Some((f, a)),
            })
            .expect("at least one candidate");
        log::debug!(
            "selected feature {} ({}) with cross-validated AUROC {auc:.4}",
            best,
            dataset.feature_names[best]
        );
        selected.push(best);
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// Matthews correlation coefficient; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denominator = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denominator == 0.0 {
            return 0.0;
        }
        ((tp * tn - fp * fn_) / denominator.sqrt()).clamp(-1.0, 1.0)
    }
}

/// Area under the ROC curve from midranks: ties count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Invalid("AUROC needs both classes present".into()));
    }
    let (ranks, _) = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub auroc: f64,
    pub mcc: f64,
    pub confusion: Confusion,
}

/// AUROC of `scores`, and MCC of the predictions at [`DECISION_THRESHOLD`].
pub fn metrics(scores: &[f64], labels: &[bool]) -> Result<ModelMetrics> {
    let auroc = auroc(scores, labels)?;
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= DECISION_THRESHOLD).collect();
    let confusion = Confusion::from_predictions(&predicted, labels);
    Ok(ModelMetrics {
        auroc,
        mcc: confusion.mcc(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    pub n_features: usize,
    pub folds: usize,
    pub boost: BoostParams,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            n_features: 13,
            folds: 5,
            boost: BoostParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub selected_features: Vec<String>,
    /// Out-of-fold predictions for every input case.
    pub predictions: Vec<Prediction>,
    pub metrics: ModelMetrics,
}

/// Undersample, select features on the balanced data, then score every
/// case out-of-fold: each fold is predicted by a model trained on the
/// undersampled remainder. `n_features` is capped at the available count.
pub fn run_pipeline(
    dataset: &TabularDataset,
    params: &ClassifierParams,
    seed: u64,
) -> Result<PipelineOutput> {
    let balanced = undersample(dataset, seed)?;
    let k = params.n_features.min(dataset.n_features());
    let selected = greedy_forward_select(&balanced, k, params.folds, &params.boost, seed)?;
    let projected = dataset.project(&selected)?;
    let fold_of = stratified_folds(&projected.labels, params.folds, seed)?;
    let mut scores = vec![0.0; projected.len()];
    for fold in 0..params.folds {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..projected.len()).partition(|&i| fold_of[i] == fold);
        let train = undersample(&projected.subset(&train), seed.wrapping_add(fold as u64))?;
        let model = BoostedStumps::fit(&train, &params.boost, seed)?;
        for i in test {
            scores[i] = model.predict_proba(&projected.rows[i]);
        }
    }
    let metrics = metrics(&scores, &projected.labels)?;
    Ok(PipelineOutput {
        selected_features: selected
            .iter()
            .map(|&f| dataset.feature_names[f].clone())
            .collect(),
        predictions: projected
            .case_ids
            .iter()
            .zip(&scores)
            .map(|(id, &score)| Prediction {
                case_id: id.clone(),
                score,
                y_pred: score >= DECISION_THRESHOLD,
            })
            .collect(),
        metrics,
    })
}

pub fn write_predictions_csv<W: Write>(predictions: &[Prediction], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["case_id", "score", "y_pred"])?;
    for p in predictions {
        wtr.write_record([
            p.case_id.as_str(),
            &p.score.to_string(),
            if p.y_pred { "1" } else { "0" },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportedPrediction {
    pub score: Option<f64>,
    pub y_pred: bool,
}

/// Reads `case_id` plus `score` and/or `y_pred`. Without a `y_pred` column
/// the label is `score >= 0.5`; with both, `y_pred` is taken as given.
pub fn import_predictions<R: Read>(reader: R) -> Result<BTreeMap<String, ImportedPrediction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("case_id")
        .ok_or_else(|| Error::Schema("predictions CSV needs a case_id column".into()))?;
    let (score_col, pred_col) = (col("score"), col("y_pred"));
    if score_col.is_none() && pred_col.is_none() {
        return Err(Error::Schema(
            "predictions CSV needs a score or y_pred column".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| {
            record.get(c).ok_or_else(|| Error::Row {
                line,
                message: "missing field".into(),
            })
        };
        let id = field(id_col)?.to_owned();
        let score = score_col
            .map(|c| {
                let raw = field(c)?;
                let s: f64 = raw.parse().map_err(|_| Error::Row {
                    line,
                    message: format!("invalid score {raw:?}"),
                })?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::Row {
                        line,
                        message: format!("score {s} outside [0, 1] for case {id:?}"),
                    });
                }
                Ok(s)
            })
            .transpose()?;
        let y_pred = match pred_col {
            Some(c) => {
                let raw = field(c)?;
                parse_label(raw).ok_or_else(|| Error::Row {
                    line,
                    message: format!("invalid y_pred {raw:?}"),
                })?
            }
            None => score.is_some_and(|s| s >= DECISION_THRESHOLD),
        };
        if out.contains_key(&id) {
            return Err(Error::DuplicateCase(id));
        }
        out.insert(id, ImportedPrediction { score, y_pred });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> TabularDataset {
        let d = rows.first().map_or(0, Vec::len);
        TabularDataset::new(
            (0..rows.len()).map(|i| format!("c{i}")).collect(),
            (0..d).map(|f| format!("f{f}")).collect(),
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn undersample_counts_and_determinism() {
        let labels: Vec<bool> = (0..110).map(|i| i < 10).collect();
        let ds = dataset((0..110).map(|i| vec![f64::from(i)]).collect(), labels);
        let a = undersample(&ds, 3).unwrap();
        assert_eq!((a.len(), a.n_positive()), (20, 10));
        assert_eq!(a, undersample(&ds, 3).unwrap());
        assert_ne!(a, undersample(&ds, 4).unwrap());

        let all_pos = dataset(vec![vec![0.0]; 5], vec![true; 5]);
        assert!(undersample(&all_pos, 1).is_err());
    }

    #[test]
    fn mcc_hand_values() {
        let perfect = Confusion {
            tp: 5,
            tn: 5,
            fp: 0,
            fn_: 0,
        };
        assert_eq!(perfect.mcc(), 1.0);
        let coin = Confusion {
            tp: 1,
            tn: 1,
            fp: 1,
            fn_: 1,
        };
        assert_eq!(coin.mcc(), 0.0);
        let degenerate = Confusion {
            tp: 4,
            tn: 0,
            fp: 3,
            fn_: 0,
        };
        assert_eq!(degenerate.mcc(), 0.0);
        // (6*3 - 1*2) / sqrt(7*8*4*5) = 16 / sqrt(1120)
        let c = Confusion {
            tp: 6,
            tn: 3,
            fp: 1,
            fn_: 2,
        };
        assert!((c.mcc() - 16.0 / 1120f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn auroc_examples() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert!(auroc(&[0.5, 0.5], &[true, true]).is_err());
    }

    #[test]
    fn separable_fixture_is_fit_exactly() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (f64::from(i), f64::from(j));
                if (x + y - 9.0).abs() < 0.5 {
                    continue;
                }
                rows.push(vec![x, y]);
                labels.push(x + y > 9.0);
            }
        }
        let ds = dataset(rows, labels.clone());
        let preds = train_predict(&ds, &BoostParams::default(), 1).unwrap();
        let correct = preds
            .iter()
            .zip(&labels)
            .filter(|(p, &l)| p.y_pred == l)
            .count();
        assert_eq!(correct, labels.len());
        assert!(preds.iter().all(|p| (0.0..=1.0).contains(&p.score)));
        assert_eq!(
            preds,
            train_predict(&ds, &BoostParams::default(), 1).unwrap()
        );
    }

    #[test]
    fn constant_features_predict_the_prior() {
        let labels: Vec<bool> = (0..20).map(|i| i % 4 == 0).collect();
        let ds = dataset(vec![vec![1.0, -2.0]; 20], labels);
        let preds = train_predict(&ds, &BoostParams::default(), 0).unwrap();
        for p in preds {
            assert!((p.score - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn training_needs_two_per_class() {
        let ds = dataset(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![true, false, false],
        );
        assert!(train_predict(&ds, &BoostParams::default(), 0).is_err());
    }

    #[test]
    fn label_copy_feature_is_selected_first() {
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                use rand::Rng;
                vec![rng.gen(), rng.gen(), f64::from(u8::from(l)), rng.gen()]
            })
            .collect();
        let ds = dataset(rows, labels);
        let params = BoostParams {
            n_rounds: 20,
            ..BoostParams::default()
        };
        let picked = greedy_forward_select(&ds, 1, 3, &params, 5).unwrap();
        assert_eq!(picked, [2]);
        assert!(greedy_forward_select(&ds, 0, 3, &params, 5)
            .unwrap()
            .is_empty());
        let all = greedy_forward_select(&ds, 4, 3, &params, 5).unwrap();
        assert_eq!(all[0], 2);
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, [0, 1, 2, 3]);
        assert!(greedy_forward_select(&ds, 5, 3, &params, 5).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let ds = dataset(vec![vec![1.5, -2.0], vec![0.25, 3.0]], vec![true, false]);
        let mut buf = Vec::new();
        write_feature_csv(&ds, &mut buf).unwrap();
        assert_eq!(parse_feature_csv(buf.as_slice()).unwrap(), ds);
        assert!(parse_feature_csv("id,label,x\na,1,2\n".as_bytes()).is_err());
        assert!(parse_feature_csv("case_id,label,x\na,2,2\n".as_bytes()).is_err());
        assert!(parse_feature_csv("case_id,label,x\na,1,nan\n".as_bytes()).is_err());
    }

    #[test]
    fn import_predictions_examples() {
        let m = import_predictions("case_id,score\na,0.1\nb,0.5\nc,0.9\n".as_bytes()).unwrap();
        assert_eq!(m.len(), 3);
        assert!(!m["a"].y_pred && m["b"].y_pred);

        let m = import_predictions("case_id,y_pred\na,1\nb,0\n".as_bytes()).unwrap();
        assert_eq!(
            m["a"],
            ImportedPrediction {
                score: None,
                y_pred: true
            }
        );

        match import_predictions("case_id,score\na,0.1\na,0.2\n".as_bytes()) {
            Err(Error::DuplicateCase(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
        let err = import_predictions("case_id,score\na,1.5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("outside [0, 1]"), "{err}");
        assert!(import_predictions("case_id,other\na,1\n".as_bytes()).is_err());
    }
}
