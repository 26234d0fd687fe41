//! The individual pipeline steps. Each reads its inputs from files, writes
//! its artifacts into an output directory and returns the paths it wrote.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::actitrac::{cluster, ClusteringResult};
use crate::classifier::{
    import_predictions, parse_feature_csv, run_pipeline, write_predictions_csv, ModelMetrics,
};
use crate::error::{Error, Result};
use crate::eventlog::{
    apply_predictions, filter_cohort, parse_attributes_csv, parse_event_csv, parse_xes, variants,
    write_attributes_csv, write_event_csv, AttributeTable, CohortStats, EventLog,
};
use crate::overdx::{
    overdiagnosis_report, render_text, write_summaries_csv, ClusterMembership, OverdiagnosisReport,
    Provenance,
};
use crate::procmodel::{to_dot, DirectlyFollows, ProcessModel};
use crate::repeats::{feature_space, write_basis_csv, write_vectors_csv};
use crate::synth::{generate, write_truth_csv};

pub const COHORT_EVENTS: &str = "cohort_events.csv";
pub const COHORT_ATTRS: &str = "cohort_attrs.csv";
pub const INGEST_JSON: &str = "ingest.json";
pub const CLUSTERING_JSON: &str = "clustering.json";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const FLAGGED_CSV: &str = "flagged_cases.csv";
pub const MODELS_DIR: &str = "models";

/// Settings shared by every step of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub emit_csv: bool,
    /// Written into provenance as the generation time, if set.
    pub generated_at: Option<String>,
}

impl Context {
    fn provenance(
        &self,
        inputs: &[(&str, &Input)],
        upstream: Option<Provenance>,
    ) -> Result<Provenance> {
        Ok(Provenance {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: serde_json::to_value(&self.config)?,
            inputs: inputs
                .iter()
                .map(|(role, input)| ((*role).to_owned(), input.digest()))
                .collect(),
            upstream: upstream.map(Box::new),
            generated_at: self.generated_at.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Error::Invalid(format!("cannot create {}: {e}", self.out.display())))
    }
}

/// A whole input file held in memory, so its digest matches what was parsed.
pub struct Input {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Ok(Input {
            path: path.to_owned(),
            bytes,
        })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    fn is_xes(&self) -> bool {
        self.path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("xes"))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path)
        .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

/// A file with no content at all reads as an empty log.
pub fn read_events(input: &Input, config: &RunConfig) -> Result<EventLog> {
    let vocabulary = config.cohort.vocabulary();
    let policy = config.cohort.vocabulary_policy();
    if input.bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(EventLog::empty(vocabulary));
    }
    if input.is_xes() {
        parse_xes(BufReader::new(input.bytes.as_slice()), &vocabulary, policy)
    } else {
        parse_event_csv(
            input.bytes.as_slice(),
            &config.cohort.columns,
            &vocabulary,
            policy,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestDocument {
    pub provenance: Provenance,
    pub cohort: CohortStats,
    /// Cases whose `y_pred` was replaced from the predictions file.
    pub predictions_applied: Option<usize>,
    /// Digests of the written cohort files.
    pub outputs: BTreeMap<String, String>,
}

/// The provenance of the `ingest` run that wrote `events`, if its
/// `ingest.json` sits next to it and records the same content.
fn ingest_upstream(events: &Input) -> Option<Provenance> {
    let sidecar = events.path.parent()?.join(INGEST_JSON);
    let doc: IngestDocument = serde_json::from_slice(&fs::read(sidecar).ok()?).ok()?;
    (doc.outputs.get("cohort_events") == Some(&events.digest())).then_some(doc.provenance)
}

/// Parses events and attributes, optionally overrides `y_pred` from a
/// predictions file, and keeps the TP/TN cohort.
pub fn ingest(
    ctx: &Context,
    events: &Input,
    attrs: &Input,
    predictions: Option<&Input>,
) -> Result<Vec<PathBuf>> {
    let log = read_events(events, &ctx.config)?;
    let mut table = parse_attributes_csv(attrs.bytes.as_slice())?;
    let predictions_applied = match predictions {
        Some(p) => {
            let imported = import_predictions(p.bytes.as_slice())?;
            let labels: HashMap<String, bool> =
                imported.into_iter().map(|(id, p)| (id, p.y_pred)).collect();
            Some(apply_predictions(&mut table, &labels))
        }
        None => None,
    };
    let (cohort, stats) = filter_cohort(&log, &table, &ctx.config.cohort.policy())?;
    log::info!(
        "cohort: kept {} of {} cases ({} positive)",
        stats.kept(),
        stats.input_cases,
        stats.kept_positive
    );

    ctx.prepare_out()?;
    let mut inputs = vec![("events", events), ("attrs", attrs)];
    if let Some(p) = predictions {
        inputs.push(("predictions", p));
    }
    let kept: Vec<_> = cohort.case_ids().filter_map(|id| table.get(id)).collect();
    let (mut events_csv, mut attrs_csv) = (Vec::new(), Vec::new());
    write_event_csv(&cohort, &mut events_csv)?;
    write_attributes_csv(kept, &mut attrs_csv)?;
    let digest = |bytes: &[u8]| hex::encode(Sha256::digest(bytes));
    let doc = IngestDocument {
        provenance: ctx.provenance(&inputs, None)?,
        cohort: stats,
        predictions_applied,
        outputs: BTreeMap::from([
            ("cohort_events".to_owned(), digest(&events_csv)),
            ("cohort_attrs".to_owned(), digest(&attrs_csv)),
        ]),
    };
    let paths = [
        ctx.path(COHORT_EVENTS),
        ctx.path(COHORT_ATTRS),
        ctx.path(INGEST_JSON),
    ];
    fs::write(&paths[0], events_csv)?;
    fs::write(&paths[1], attrs_csv)?;
    write_json(&paths[2], &doc)?;
    Ok(paths.to_vec())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantsDocument {
    pub provenance: Provenance,
    pub n_traces: usize,
    pub n_variants: usize,
    pub n_feature_classes: usize,
}

/// Writes the variant table, and with `emit_csv` the repeat feature basis
/// and per-variant feature vectors.
pub fn variants_step(ctx: &Context, events: &Input) -> Result<Vec<PathBuf>> {
    let log = read_events(events, &ctx.config)?;
    let vs = variants(&log);
    let (basis, vectors) = feature_space(&vs, ctx.config.clustering.normalize_features);
    ctx.prepare_out()?;

    let table = ctx.path("variants.csv");
    let mut wtr = csv::Writer::from_writer(create(&table)?);
    wtr.write_record(["variant", "frequency", "length", "activities"])?;
    for (i, v) in vs.iter().enumerate() {
        wtr.write_record([
            (i + 1).to_string(),
            v.frequency.to_string(),
            v.activities.len().to_string(),
            v.activities.join(";"),
        ])?;
    }
    wtr.flush()?;
    let mut paths = vec![table];
    if ctx.emit_csv {
        let (b, f) = (
            ctx.path("feature_basis.csv"),
            ctx.path("feature_vectors.csv"),
        );
        write_basis_csv(&basis, create(&b)?)?;
        write_vectors_csv(&vs, &vectors, create(&f)?)?;
        paths.extend([b, f]);
    }
    let doc = VariantsDocument {
        provenance: ctx.provenance(&[("events", events)], None)?,
        n_traces: log.len(),
        n_variants: vs.len(),
        n_feature_classes: basis.len(),
    };
    let json = ctx.path("variants.json");
    write_json(&json, &doc)?;
    paths.push(json);
    Ok(paths)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringDocument {
    pub provenance: Provenance,
    pub n_traces: usize,
    pub n_variants: usize,
    pub result: ClusteringResult<ProcessModel>,
}

impl ClusteringDocument {
    pub fn parse(input: &Input) -> Result<Self> {
        serde_json::from_slice(&input.bytes).map_err(|e| {
            Error::Invalid(format!(
                "{} is not a clustering document: {e}",
                input.path.display()
            ))
        })
    }
}

/// Clusters the traces of an event log and writes the clustering document,
/// case assignments and one DOT model per cluster.
/// When `events` was written by `ingest`, its provenance is carried along.
pub fn cluster_step(ctx: &Context, events: &Input) -> Result<Vec<PathBuf>> {
    let log = read_events(events, &ctx.config)?;
    if log.is_empty() {
        return Err(Error::Empty("empty event log"));
    }
    let vs = variants(&log);
    let config = &ctx.config.clustering;
    let (_, vectors) = feature_space(&vs, config.normalize_features);
    let result = cluster(
        &vs,
        config,
        &DirectlyFollows {
            params: config.mining,
        },
        &vectors,
    )?;
    log::info!(
        "{} clusters, {} residual traces",
        result.clusters.len(),
        result.residual_trace_count()
    );

    ctx.prepare_out()?;
    let models = ctx.path(MODELS_DIR);
    fs::create_dir_all(&models)?;
    let mut paths = Vec::new();
    for c in &result.clusters {
        let path = models.join(format!("cluster_{}.dot", c.id));
        fs::write(&path, to_dot(&c.model, &format!("cluster {}", c.id)))?;
        paths.push(path);
    }

    let mut rows: Vec<(&str, String)> = result
        .clusters
        .iter()
        .flat_map(|c| c.case_ids().map(move |id| (id, c.id.to_string())))
        .chain(result.residual.iter().flat_map(|v| {
            v.member_case_ids
                .iter()
                .map(|id| (id.as_str(), "residual".to_owned()))
        }))
        .collect();
    rows.sort();
    let assignments = ctx.path(ASSIGNMENTS_CSV);
    let mut wtr = csv::Writer::from_writer(create(&assignments)?);
    wtr.write_record(["case_id", "cluster_id"])?;
    for (id, cluster_id) in rows {
        wtr.write_record([id, cluster_id.as_str()])?;
    }
    wtr.flush()?;
    paths.push(assignments);

    let doc = ClusteringDocument {
        provenance: ctx.provenance(&[("events", events)], ingest_upstream(events))?,
        n_traces: log.len(),
        n_variants: vs.len(),
        result,
    };
    let json = ctx.path(CLUSTERING_JSON);
    write_json(&json, &doc)?;
    paths.push(json);
    Ok(paths)
}

/// Tests every cluster's outcomes, applies the flag rule and writes the
/// report as JSON and text, plus per-cluster and flagged-case tables with
/// `emit_csv`.
pub fn analyze_step(ctx: &Context, clustering: &Input, attrs: &Input) -> Result<Vec<PathBuf>> {
    let doc = ClusteringDocument::parse(clustering)?;
    let table: AttributeTable = parse_attributes_csv(attrs.bytes.as_slice())?;
    let membership = ClusterMembership::from(&doc.result);
    let mut report: OverdiagnosisReport = overdiagnosis_report(
        &membership,
        &table,
        &ctx.config.flag,
        ctx.config.stats.continuity_correction,
    )?;
    report.provenance = ctx.provenance(
        &[("clustering", clustering), ("attrs", attrs)],
        Some(doc.provenance),
    )?;
    log::info!(
        "flagged clusters {:?}: {} of {} positive cases",
        report.flagged_cluster_ids,
        report.count,
        report.total_positive
    );

    ctx.prepare_out()?;
    let (json, text) = (ctx.path(REPORT_JSON), ctx.path(REPORT_TXT));
    write_json(&json, &report)?;
    fs::write(&text, render_text(&report))?;
    let mut paths = vec![json, text];
    if ctx.emit_csv {
        let clusters = ctx.path(CLUSTERS_CSV);
        write_summaries_csv(&report, create(&clusters)?)?;
        let flagged = ctx.path(FLAGGED_CSV);
        let cluster_of: BTreeMap<&str, usize> = membership
            .clusters
            .iter()
            .flat_map(|(id, cases)| cases.iter().map(move |c| (c.as_str(), *id)))
            .collect();
        let mut wtr = csv::Writer::from_writer(create(&flagged)?);
        wtr.write_record(["case_id", "cluster_id"])?;
        for id in &report.flagged_case_ids {
            wtr.write_record([id.as_str(), &cluster_of[id.as_str()].to_string()])?;
        }
        wtr.flush()?;
        paths.extend([clusters, flagged]);
    }
    Ok(paths)
}

/// `ingest`, then `cluster` on the cohort events, then `analyze` on the
/// clustering and cohort attributes, all through the files each step
/// writes.
pub fn report_step(
    ctx: &Context,
    events: &Input,
    attrs: &Input,
    predictions: Option<&Input>,
) -> Result<Vec<PathBuf>> {
    let mut paths = ingest(ctx, events, attrs, predictions)?;
    let cohort_events = Input::read(&ctx.path(COHORT_EVENTS))?;
    paths.extend(cluster_step(ctx, &cohort_events)?);
    let clustering = Input::read(&ctx.path(CLUSTERING_JSON))?;
    let cohort_attrs = Input::read(&ctx.path(COHORT_ATTRS))?;
    paths.extend(analyze_step(ctx, &clustering, &cohort_attrs)?);
    Ok(paths)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyDocument {
    pub provenance: Provenance,
    pub selected_features: Vec<String>,
    pub metrics: ModelMetrics,
}

/// Runs the baseline classifier on a feature table and writes out-of-fold
/// predictions for every case.
pub fn classify_step(ctx: &Context, features: &Input) -> Result<Vec<PathBuf>> {
    let dataset = parse_feature_csv(features.bytes.as_slice())?;
    let output = run_pipeline(&dataset, &ctx.config.classifier, ctx.config.seed)?;
    log::info!(
        "selected {:?}; AUROC {:.3}, MCC {:.3}",
        output.selected_features,
        output.metrics.auroc,
        output.metrics.mcc
    );
    ctx.prepare_out()?;
    let (csv_path, json) = (ctx.path("predictions.csv"), ctx.path("classify.json"));
    write_predictions_csv(&output.predictions, create(&csv_path)?)?;
    let doc = ClassifyDocument {
        provenance: ctx.provenance(&[("features", features)], None)?,
        selected_features: output.selected_features,
        metrics: output.metrics,
    };
    write_json(&json, &doc)?;
    Ok(vec![csv_path, json])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthDocument {
    pub provenance: Provenance,
    pub n_cases: usize,
    pub n_events: usize,
    pub n_overdiagnosed: usize,
}

/// Writes a synthetic cohort: events, attributes and the planted truth.
pub fn synth_step(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cohort = generate(&ctx.config.synth)?;
    ctx.prepare_out()?;
    let paths = [
        ctx.path("events.csv"),
        ctx.path("attrs.csv"),
        ctx.path("truth.csv"),
        ctx.path("synth.json"),
    ];
    write_event_csv(&cohort.log, create(&paths[0])?)?;
    write_attributes_csv(cohort.attrs.values(), create(&paths[1])?)?;
    write_truth_csv(&cohort.truth, create(&paths[2])?)?;
    let doc = SynthDocument {
        provenance: ctx.provenance(&[], None)?,
        n_cases: cohort.log.len(),
        n_events: cohort.log.event_count(),
        n_overdiagnosed: cohort.truth.overdiagnosed_case_ids.len(),
    };
    write_json(&paths[3], &doc)?;
    Ok(paths.to_vec())
}

/// The DOT graph of one cluster's model.
pub fn export_dot(clustering: &Input, cluster_id: usize) -> Result<String> {
    let doc = ClusteringDocument::parse(clustering)?;
    let c = doc
        .result
        .clusters
        .iter()
        .find(|c| c.id == cluster_id)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "no cluster {cluster_id} (clusters are 1..={})",
                doc.result.clusters.len()
            ))
        })?;
    Ok(to_dot(&c.model, &format!("cluster {cluster_id}")))
}
