//! File formats: model files, harvest traces, datasets, simulation configs
//! and reports. Loading validates everything and never repairs input.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy_model::{EnergyError, HarvestTrace, PowerSample, ProfileExport};
use crate::inference::{AgileModel, KMeansClassifier, Layer};
use crate::sim::{SimConfig, SimReport};

pub const FORMAT_VERSION: &str = "1";

/// Upper bound on selected features per layer.
pub const MAX_FEATURES: usize = 150;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported format_version {found:?} (expected {FORMAT_VERSION:?})")]
    Version { path: PathBuf, found: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{path}: line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: no samples")]
    NoSamples { path: PathBuf },
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: EnergyError,
    },
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub trainer: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub seed: u64,
}

/// On-disk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: String,
    #[serde(default)]
    pub provenance: Provenance,
    pub layers: Vec<Layer>,
    pub classifiers: Vec<KMeansClassifier>,
    pub coefficients: Vec<f64>,
    pub psi_max: Vec<f64>,
}

impl ModelFile {
    pub fn new(model: &AgileModel, provenance: Provenance) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            provenance,
            layers: model.layers.clone(),
            classifiers: model.classifiers.clone(),
            coefficients: model.coefficients.clone(),
            psi_max: model.psi_max.clone(),
        }
    }

    pub fn into_model(self) -> AgileModel {
        AgileModel {
            layers: self.layers,
            classifiers: self.classifiers,
            coefficients: self.coefficients,
            psi_max: self.psi_max,
        }
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> IoError {
    IoError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_finite(field: &str, values: &[f64]) -> Result<(), IoError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invalid(format!("{field}[{i}]"), "not a finite number")),
        None => Ok(()),
    }
}

/// Checks every structural invariant of a model.
pub fn validate_model(model: &AgileModel) -> Result<(), IoError> {
    let n = model.layers.len();
    if n == 0 {
        return Err(invalid("layers", "model has no layers"));
    }
    for (i, layer) in model.layers.iter().enumerate() {
        layer
            .validate(i)
            .map_err(|e| invalid(format!("layers[{i}]"), e.to_string()))?;
        check_finite(&format!("layers[{i}].weights"), &layer.weights)?;
        check_finite(&format!("layers[{i}].bias"), &layer.bias)?;
        if i > 0 {
            let prev = model.layers[i - 1].output_len();
            if layer.input_len() != prev {
                return Err(invalid(
                    format!("layers[{i}]"),
                    format!("takes {} inputs but layer {} yields {prev}", layer.input_len(), i - 1),
                ));
            }
        }
    }
    for (name, len) in [
        ("classifiers", model.classifiers.len()),
        ("coefficients", model.coefficients.len()),
        ("psi_max", model.psi_max.len()),
    ] {
        if len != n {
            return Err(invalid(name, format!("has {len} entries for {n} layers")));
        }
    }
    check_finite("coefficients", &model.coefficients)?;
    if let Some(i) = model.coefficients.iter().position(|&a| a < 0.0) {
        return Err(invalid(format!("coefficients[{i}]"), "negative"));
    }
    let sum: f64 = model.coefficients.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(invalid("coefficients", format!("sum to {sum}, expected 1")));
    }
    check_finite("psi_max", &model.psi_max)?;
    if let Some(i) = model.psi_max.iter().position(|&p| p < 0.0) {
        return Err(invalid(format!("psi_max[{i}]"), "negative"));
    }
    for (i, clf) in model.classifiers.iter().enumerate() {
        validate_classifier(clf, model.layers[i].output_len(), &format!("classifiers[{i}]"))?;
    }
    Ok(())
}

fn validate_classifier(clf: &KMeansClassifier, out_len: usize, at: &str) -> Result<(), IoError> {
    let k = clf.centroids.len();
    if k < 2 {
        return Err(invalid(format!("{at}.centroids"), format!("needs k >= 2, has {k}")));
    }
    for (name, len) in [
        ("labels", clf.labels.len()),
        ("sizes", clf.sizes.len()),
        ("centroids_full", clf.centroids_full.len()),
    ] {
        if len != k {
            return Err(invalid(
                format!("{at}.{name}"),
                format!("has {len} entries for k = {k}"),
            ));
        }
    }
    if let Some(i) = clf.sizes.iter().position(|&r| r == 0) {
        return Err(invalid(format!("{at}.sizes[{i}]"), "must be at least 1"));
    }
    let f = clf.feature_indices.len();
    if f == 0 || f > MAX_FEATURES {
        return Err(invalid(
            format!("{at}.feature_indices"),
            format!("has {f} entries, expected 1..={MAX_FEATURES}"),
        ));
    }
    if let Some(&bad) = clf.feature_indices.iter().find(|&&j| j >= out_len) {
        return Err(invalid(
            format!("{at}.feature_indices"),
            format!("index {bad} exceeds layer output size {out_len}"),
        ));
    }
    for (j, c) in clf.centroids.iter().enumerate() {
        if c.len() != f {
            return Err(invalid(
                format!("{at}.centroids[{j}]"),
                format!("dimension {} does not match {f} selected features", c.len()),
            ));
        }
        check_finite(&format!("{at}.centroids[{j}]"), c)?;
    }
    for (j, c) in clf.centroids_full.iter().enumerate() {
        if c.len() != out_len {
            return Err(invalid(
                format!("{at}.centroids_full[{j}]"),
                format!("dimension {} does not match layer output size {out_len}", c.len()),
            ));
        }
        check_finite(&format!("{at}.centroids_full[{j}]"), c)?;
    }
    if !(clf.threshold.is_finite() && clf.threshold >= 0.0) {
        return Err(invalid(format!("{at}.threshold"), "must be finite and nonnegative"));
    }
    Ok(())
}

pub fn parse_model(path: &Path, text: &str) -> Result<ModelFile, IoError> {
    let file: ModelFile = parse_json(path, text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(IoError::Version {
            path: path.to_path_buf(),
            found: file.format_version,
        });
    }
    let model = file.clone().into_model();
    validate_model(&model)?;
    Ok(file)
}

pub fn load_model_file(path: &Path) -> Result<ModelFile, IoError> {
    parse_model(path, &read(path)?)
}

pub fn load_model(path: &Path) -> Result<AgileModel, IoError> {
    load_model_file(path).map(ModelFile::into_model)
}

/// Canonical JSON text of a model: fixed key order, shortest round-trip
/// float formatting.
pub fn model_to_string(model: &AgileModel, provenance: &Provenance) -> Result<String, IoError> {
    validate_model(model)?;
    Ok(to_json(&ModelFile::new(model, provenance.clone())))
}

pub fn save_model(model: &AgileModel, provenance: &Provenance, path: &Path) -> Result<(), IoError> {
    write(path, &model_to_string(model, provenance)?)
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    t_us: u64,
    power_uw: u64,
}

/// Reads a `t_us,power_uw` CSV. The last sample holds for as long as the
/// interval before it, so uniformly sampled traces cover whole periods.
pub fn load_trace(path: &Path) -> Result<HarvestTrace, IoError> {
    let text = read(path)?;
    parse_trace(path, &text)
}

pub fn parse_trace(path: &Path, text: &str) -> Result<HarvestTrace, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["t_us", "power_uw"] {
        return Err(IoError::Row {
            path: path.to_path_buf(),
            line: 1,
            message: "header must be t_us,power_uw".into(),
        });
    }
    let mut samples: Vec<PowerSample> = Vec::new();
    for row in reader.deserialize::<TraceRow>() {
        let row = row.map_err(|e| IoError::Row {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if let Some(prev) = samples.last() {
            if row.t_us <= prev.t_us {
                return Err(IoError::Row {
                    path: path.to_path_buf(),
                    line: samples.len() as u64 + 2,
                    message: format!("timestamp {} does not increase", row.t_us),
                });
            }
        }
        samples.push(PowerSample {
            t_us: row.t_us,
            power_uw: row.power_uw,
        });
    }
    let end = match samples.as_slice() {
        [] => {
            return Err(IoError::NoSamples {
                path: path.to_path_buf(),
            })
        }
        [_] => {
            return Err(IoError::Row {
                path: path.to_path_buf(),
                line: 2,
                message: "a trace needs at least two samples".into(),
            })
        }
        [.., a, b] => b.t_us + (b.t_us - a.t_us),
    };
    HarvestTrace::new(samples, end).map_err(|source| IoError::Trace {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a trace so that [`load_trace`] reads back the same power signal.
pub fn save_trace(trace: &HarvestTrace, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("t_us,power_uw\n");
    let s = trace.samples();
    for p in s {
        out.push_str(&format!("{},{}\n", p.t_us, p.power_uw));
    }
    let implied = match s {
        [.., a, b] => Some(b.t_us + (b.t_us - a.t_us)),
        _ => None,
    };
    if implied != Some(trace.end_us()) {
        // Close the trace explicitly with a zero-power sample.
        let last = s[s.len() - 1].t_us;
        if trace.end_us() > last {
            out.push_str(&format!("{},0\n", trace.end_us()));
        }
    }
    write(path, &out)
}

/// Labeled feature vectors from a `label,f0,f1,...` CSV with a header row.
pub fn load_dataset(path: &Path) -> Result<Vec<(u32, Vec<f64>)>, IoError> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut width = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| IoError::Row {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |message: String| IoError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let label: u32 = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| row_err("label must be a nonnegative integer".into()))?;
        let feats = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| row_err("features must be finite numbers".into()))?;
        if feats.is_empty() {
            return Err(row_err("row has no features".into()));
        }
        if *width.get_or_insert(feats.len()) != feats.len() {
            return Err(row_err("rows have different widths".into()));
        }
        rows.push((label, feats));
    }
    if rows.is_empty() {
        return Err(IoError::NoSamples {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

/// Reads a simulation config. Relative paths inside it resolve against the
/// config's directory.
pub fn load_config(path: &Path) -> Result<SimConfig, IoError> {
    let text = read(path)?;
    let mut cfg: SimConfig = parse_json(path, &text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate()
        .map_err(|e| invalid(path.display().to_string(), e.to_string()))?;
    Ok(cfg)
}

pub fn save_report(report: &SimReport, path: &Path) -> Result<(), IoError> {
    write(path, &to_json(report))
}

pub fn load_report(path: &Path) -> Result<SimReport, IoError> {
    parse_json(path, &read(path)?)
}

pub fn jobs_csv(report: &SimReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task",
        "release_us",
        "deadline_us",
        "units",
        "mandatory_done",
        "correct",
        "completion_us",
        "discard_reason",
        "optional_units",
    ])
    .expect("in-memory write");
    for j in &report.jobs {
        w.write_record([
            j.task.to_string(),
            j.release_us.to_string(),
            j.deadline_us.to_string(),
            j.units_executed.to_string(),
            j.mandatory_done.to_string(),
            j.correct.to_string(),
            j.completion_us.map(|t| t.to_string()).unwrap_or_default(),
            j.discard_reason.map(|r| r.as_str().to_string()).unwrap_or_default(),
            j.optional_units.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn save_jobs_csv(report: &SimReport, path: &Path) -> Result<(), IoError> {
    write(path, &jobs_csv(report))
}

pub fn profile_to_string(export: &ProfileExport) -> String {
    to_json(export)
}

pub fn load_profile(path: &Path) -> Result<ProfileExport, IoError> {
    parse_json(path, &read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Layer;

    fn tiny_model() -> AgileModel {
        AgileModel {
            layers: vec![Layer::dense(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], true)],
            classifiers: vec![KMeansClassifier {
                centroids: vec![vec![0.0], vec![1.0]],
                centroids_full: vec![vec![0.0, 0.0], vec![1.0, 0.5]],
                labels: vec![0, 1],
                sizes: vec![3, 4],
                feature_indices: vec![0],
                threshold: 0.1,
            }],
            coefficients: vec![1.0],
            psi_max: vec![1.0],
        }
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = tiny_model();
        save_model(&m, &Provenance::default(), &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let first = fs::read_to_string(&path).unwrap();
        save_model(&back, &Provenance::default(), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), first);
    }

    #[test]
    fn centroid_dimension_mismatch_names_the_layer() {
        let mut m = tiny_model();
        m.classifiers[0].centroids[1] = vec![1.0, 2.0];
        let err = validate_model(&m).unwrap_err().to_string();
        assert!(err.contains("classifiers[0].centroids[1]"), "{err}");
    }

    #[test]
    fn rejects_version_and_non_convex_coefficients() {
        let m = tiny_model();
        let text = model_to_string(&m, &Provenance::default()).unwrap();
        let bumped = text.replace("\"format_version\": \"1\"", "\"format_version\": \"2\"");
        assert!(matches!(
            parse_model(Path::new("x"), &bumped),
            Err(IoError::Version { .. })
        ));
        let mut bad = m;
        bad.coefficients = vec![0.5];
        assert!(validate_model(&bad).is_err());
    }

    #[test]
    fn trace_errors() {
        let p = Path::new("t.csv");
        assert!(matches!(
            parse_trace(p, "t_us,power_uw\n"),
            Err(IoError::NoSamples { .. })
        ));
        let err = parse_trace(p, "t_us,power_uw\n0,1\n10,2\n5,3\n").unwrap_err();
        assert!(matches!(err, IoError::Row { line: 4, .. }), "{err}");
        let err = parse_trace(p, "t_us,power_uw\n0,1\nx,2\n").unwrap_err();
        assert!(matches!(err, IoError::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = HarvestTrace::new(
            vec![
                PowerSample { t_us: 0, power_uw: 5 },
                PowerSample { t_us: 10, power_uw: 0 },
                PowerSample { t_us: 20, power_uw: 7 },
            ],
            30,
        )
        .unwrap();
        save_trace(&t, &path).unwrap();
        assert_eq!(load_trace(&path).unwrap(), t);
        let odd = HarvestTrace::new(t.samples().to_vec(), 45).unwrap();
        save_trace(&odd, &path).unwrap();
        let back = load_trace(&path).unwrap();
        assert_eq!(back.energy_pj(0, 1000), odd.energy_pj(0, 1000));
    }

    #[test]
    fn dataset_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "label,f0,f1\n1,0.5,2\n0,-1,3e2\n").unwrap();
        let rows = load_dataset(&path).unwrap();
        assert_eq!(rows, vec![(1, vec![0.5, 2.0]), (0, vec![-1.0, 300.0])]);
        fs::write(&path, "label,f0,f1\n1,0.5\n").unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
