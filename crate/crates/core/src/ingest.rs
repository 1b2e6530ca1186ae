//! Dataset parsing and per-timestep normalization.
//!
//! Two input layouts are accepted. Long CSV (`instance,time,x,y`, one sample
//! per row) is the canonical one. Wide JSON holds one object per instance with
//! a value array aligned to the timestep list.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::Point;

/// Minimum number of present samples for a plot to carry geometry.
pub const MIN_PLOT_SAMPLES: usize = 3;

const CSV_HEADER: [&str; 4] = ["instance", "time", "x", "y"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),
    #[error("expected CSV header `instance,time,x,y`, found `{found}`")]
    Header { found: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate sample for instance `{instance}` at time `{time}`")]
    DuplicateSample { instance: String, time: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateInstance(String),
    #[error("duplicate timestep label `{0}`")]
    DuplicateTimestep(String),
    #[error("instance `{id}` has {found} values but there are {expected} timesteps")]
    ValueCount {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("no usable rows in input")]
    NoUsableRows,
    #[error("no timestep has at least {MIN_PLOT_SAMPLES} samples")]
    TooFewSamples,
    #[error("timestep {0} has no samples")]
    EmptyPlot(usize),
    #[error("timestep index {index} out of range ({count} timesteps)")]
    TimestepOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    LongCsv,
    WideJson,
}

impl InputFormat {
    /// Guess the format from a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => InputFormat::WideJson,
            _ => InputFormat::LongCsv,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" | "long_csv" => Ok(InputFormat::LongCsv),
            "json" | "wide_json" => Ok(InputFormat::WideJson),
            other => Err(format!("unknown input format `{other}` (expected csv or json)")),
        }
    }
}

/// Row accounting for one parse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub records: usize,
    pub samples: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub label: String,
}

/// Instances observed over an ordered list of timesteps, with at most one
/// `(x, y)` sample per instance and timestep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalBivariateDataset {
    axes: (String, String),
    instances: Vec<Instance>,
    timesteps: Vec<String>,
    /// `samples[instance][timestep]`
    samples: Vec<Vec<Option<Point>>>,
}

impl TemporalBivariateDataset {
    /// Build a dataset, checking every structural invariant.
    pub fn new(
        axes: (String, String),
        instances: Vec<Instance>,
        timesteps: Vec<String>,
        samples: Vec<Vec<Option<Point>>>,
    ) -> Result<Self, IngestError> {
        let mut seen = HashMap::new();
        for inst in &instances {
            if seen.insert(inst.id.as_str(), ()).is_some() {
                return Err(IngestError::DuplicateInstance(inst.id.clone()));
            }
        }
        let mut seen = HashMap::new();
        for label in &timesteps {
            if seen.insert(label.as_str(), ()).is_some() {
                return Err(IngestError::DuplicateTimestep(label.clone()));
            }
        }
        assert_eq!(instances.len(), samples.len(), "one sample row per instance");
        for (inst, row) in instances.iter().zip(&samples) {
            if row.len() != timesteps.len() {
                return Err(IngestError::ValueCount {
                    id: inst.id.clone(),
                    expected: timesteps.len(),
                    found: row.len(),
                });
            }
        }
        let samples: Vec<Vec<Option<Point>>> = samples
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|s| s.filter(|p| p[0].is_finite() && p[1].is_finite()))
                    .collect()
            })
            .collect();
        let dataset = TemporalBivariateDataset {
            axes,
            instances,
            timesteps,
            samples,
        };
        if dataset.sample_count() == 0 {
            return Err(IngestError::NoUsableRows);
        }
        if !(0..dataset.timestep_count()).any(|t| dataset.present_count(t) >= MIN_PLOT_SAMPLES) {
            return Err(IngestError::TooFewSamples);
        }
        Ok(dataset)
    }

    pub fn axes(&self) -> (&str, &str) {
        (&self.axes.0, &self.axes.1)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance_id(&self, index: usize) -> &str {
        &self.instances[index].id
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.id == id)
    }

    pub fn timesteps(&self) -> &[String] {
        &self.timesteps
    }

    pub fn timestep_count(&self) -> usize {
        self.timesteps.len()
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn sample(&self, instance: usize, timestep: usize) -> Option<Point> {
        self.samples[instance][timestep]
    }

    pub fn present_count(&self, timestep: usize) -> usize {
        self.samples.iter().filter(|row| row[timestep].is_some()).count()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.iter().flatten().filter(|s| s.is_some()).count()
    }

    /// The same data with instances sorted by id.
    pub fn canonicalized(&self) -> Self {
        let mut order: Vec<usize> = (0..self.instances.len()).collect();
        order.sort_by(|&a, &b| self.instances[a].id.cmp(&self.instances[b].id));
        TemporalBivariateDataset {
            axes: self.axes.clone(),
            instances: order.iter().map(|&i| self.instances[i].clone()).collect(),
            timesteps: self.timesteps.clone(),
            samples: order.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Reorder instances by the given permutation of indices.
    pub fn with_instance_order(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.instances.len());
        TemporalBivariateDataset {
            axes: self.axes.clone(),
            instances: order.iter().map(|&i| self.instances[i].clone()).collect(),
            timesteps: self.timesteps.clone(),
            samples: order.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// SHA-256 of the parsed content. Independent of the source format.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Parse a dataset from a byte stream.
pub fn parse_dataset(
    mut source: impl Read,
    format: InputFormat,
) -> Result<(TemporalBivariateDataset, ParseReport), IngestError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes)?;
    match format {
        InputFormat::LongCsv => parse_long_csv(text),
        InputFormat::WideJson => parse_wide_json(text),
    }
}

fn parse_coordinate(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_long_csv(text: &str) -> Result<(TemporalBivariateDataset, ParseReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .clone();
    if header.len() != CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(h, e)| h != e) {
        return Err(IngestError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut report = ParseReport::default();
    let mut instance_ids: Vec<String> = Vec::new();
    let mut instance_index: HashMap<String, usize> = HashMap::new();
    let mut timesteps: Vec<String> = Vec::new();
    let mut timestep_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), Point> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv(e.to_string()))?;
        report.records += 1;
        if record.len() != CSV_HEADER.len() || record[0].is_empty() || record[1].is_empty() {
            report.dropped += 1;
            continue;
        }
        let inst = *instance_index.entry(record[0].to_string()).or_insert_with(|| {
            instance_ids.push(record[0].to_string());
            instance_ids.len() - 1
        });
        let t = *timestep_index.entry(record[1].to_string()).or_insert_with(|| {
            timesteps.push(record[1].to_string());
            timesteps.len() - 1
        });
        let (Some(x), Some(y)) = (parse_coordinate(&record[2]), parse_coordinate(&record[3])) else {
            report.dropped += 1;
            continue;
        };
        if cells.insert((inst, t), [x, y]).is_some() {
            return Err(IngestError::DuplicateSample {
                instance: record[0].to_string(),
                time: record[1].to_string(),
            });
        }
        report.samples += 1;
    }

    if report.samples == 0 {
        return Err(IngestError::NoUsableRows);
    }
    let mut samples = vec![vec![None; timesteps.len()]; instance_ids.len()];
    for ((inst, t), p) in cells {
        samples[inst][t] = Some(p);
    }
    let instances = instance_ids
        .into_iter()
        .map(|id| Instance {
            label: id.clone(),
            id,
        })
        .collect();
    let dataset = TemporalBivariateDataset::new(
        ("x".to_string(), "y".to_string()),
        instances,
        timesteps,
        samples,
    )?;
    Ok((dataset, report))
}

#[derive(Deserialize)]
struct WideJson {
    axes: (String, String),
    timesteps: Vec<serde_json::Value>,
    instances: Vec<WideInstance>,
}

#[derive(Deserialize)]
struct WideInstance {
    id: serde_json::Value,
    #[serde(default)]
    label: Option<String>,
    values: Vec<serde_json::Value>,
}

fn value_label(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn value_point(v: &serde_json::Value) -> Option<Point> {
    let pair = v.as_array()?;
    if pair.len() != 2 {
        return None;
    }
    let x = pair[0].as_f64().filter(|v| v.is_finite())?;
    let y = pair[1].as_f64().filter(|v| v.is_finite())?;
    Some([x, y])
}

fn parse_wide_json(text: &str) -> Result<(TemporalBivariateDataset, ParseReport), IngestError> {
    let doc: WideJson = serde_json::from_str(text)?;
    let timesteps: Vec<String> = doc.timesteps.iter().map(value_label).collect();
    let mut report = ParseReport::default();
    let mut instances = Vec::with_capacity(doc.instances.len());
    let mut samples = Vec::with_capacity(doc.instances.len());
    for inst in doc.instances {
        let id = value_label(&inst.id);
        if inst.values.len() != timesteps.len() {
            return Err(IngestError::ValueCount {
                id,
                expected: timesteps.len(),
                found: inst.values.len(),
            });
        }
        let row: Vec<Option<Point>> = inst
            .values
            .iter()
            .map(|v| {
                if v.is_null() {
                    return None;
                }
                report.records += 1;
                let p = value_point(v);
                match p {
                    Some(_) => report.samples += 1,
                    None => report.dropped += 1,
                }
                p
            })
            .collect();
        instances.push(Instance {
            label: inst.label.unwrap_or_else(|| id.clone()),
            id,
        });
        samples.push(row);
    }
    if report.samples == 0 {
        return Err(IngestError::NoUsableRows);
    }
    let dataset = TemporalBivariateDataset::new(doc.axes, instances, timesteps, samples)?;
    Ok((dataset, report))
}

/// Per-axis min-max frame of one plot, in raw data units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

fn unit(value: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((value - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

impl Scale {
    fn from_points(points: impl Iterator<Item = Point>) -> Option<Self> {
        points.fold(None, |acc: Option<Scale>, [x, y]| {
            Some(match acc {
                None => Scale {
                    x_min: x,
                    x_max: x,
                    y_min: y,
                    y_max: y,
                },
                Some(s) => Scale {
                    x_min: s.x_min.min(x),
                    x_max: s.x_max.max(x),
                    y_min: s.y_min.min(y),
                    y_max: s.y_max.max(y),
                },
            })
        })
    }

    /// Map a raw sample into the unit square. A zero-width axis maps to 0.5.
    pub fn normalize(&self, raw: Point) -> Point {
        [
            unit(raw[0], self.x_min, self.x_max),
            unit(raw[1], self.y_min, self.y_max),
        ]
    }

    /// Inverse of [`Scale::normalize`] on non-degenerate axes.
    pub fn denormalize(&self, p: Point) -> Point {
        let back = |u: f64, min: f64, max: f64| if max > min { min + u * (max - min) } else { min };
        [
            back(p[0], self.x_min, self.x_max),
            back(p[1], self.y_min, self.y_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlotPoint {
    /// Index into the dataset's instance list.
    pub instance: usize,
    pub position: Point,
}

/// One timestep's samples mapped into `[0, 1]²`.
///
/// The scale is fixed from all present samples and is never re-derived when
/// observations are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPlot {
    pub timestep: usize,
    pub points: Vec<PlotPoint>,
    pub scale: Scale,
}

impl NormalizedPlot {
    pub fn positions(&self) -> Vec<Point> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Normalize timestep `t`. Points follow the dataset's instance order.
pub fn normalize_plot(
    dataset: &TemporalBivariateDataset,
    t: usize,
) -> Result<NormalizedPlot, IngestError> {
    if t >= dataset.timestep_count() {
        return Err(IngestError::TimestepOutOfRange {
            index: t,
            count: dataset.timestep_count(),
        });
    }
    let raw: Vec<(usize, Point)> = (0..dataset.instance_count())
        .filter_map(|i| dataset.sample(i, t).map(|p| (i, p)))
        .collect();
    let scale = Scale::from_points(raw.iter().map(|&(_, p)| p)).ok_or(IngestError::EmptyPlot(t))?;
    let points = raw
        .into_iter()
        .map(|(instance, p)| PlotPoint {
            instance,
            position: scale.normalize(p),
        })
        .collect();
    Ok(NormalizedPlot {
        timestep: t,
        points,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv(text: &str) -> Result<(TemporalBivariateDataset, ParseReport), IngestError> {
        parse_dataset(text.as_bytes(), InputFormat::LongCsv)
    }

    const THREE_AT_2000: &str = "c,2000,0,0\nd,2000,1,0\ne,2000,0,1\n";

    #[test]
    fn parses_long_csv() {
        let text = format!("instance,time,x,y\na,2000,1,2\nb,2000,3,4\na,2001,5,6\n{THREE_AT_2000}");
        let (ds, report) = csv(&text).unwrap();
        assert_eq!(ds.instance_count(), 5);
        assert_eq!(ds.timesteps(), ["2000", "2001"]);
        assert_eq!(report.samples, 6);
        assert_eq!(ds.sample(0, 1), Some([5.0, 6.0]));
        assert_eq!(ds.sample(1, 1), None);
    }

    #[test]
    fn small_example_counts() {
        // Three rows alone fail the geometry invariant, the counts still hold.
        let text = "instance,time,x,y\na,2000,1,2\nb,2000,3,4\na,2001,5,6\n";
        assert!(matches!(csv(text), Err(IngestError::TooFewSamples)));
        let text = "instance,time,x,y\na,2000,1,2\nb,2000,3,4\na,2001,5,6\nz,2000,0,0\n";
        let (ds, report) = csv(text).unwrap();
        assert_eq!((ds.instance_count(), ds.timestep_count(), report.samples), (3, 2, 4));
    }

    #[test]
    fn drops_non_numeric_rows() {
        let text = format!("instance,time,x,y\na,2000,NaN,2\nb,2000,abc,1\n{THREE_AT_2000}");
        let (ds, report) = csv(&text).unwrap();
        assert_eq!(report.dropped, 2);
        assert_eq!(ds.sample(0, 0), None);
        let text = format!("instance,time,x,y\na,2000,NaN,2\n{THREE_AT_2000}");
        assert_eq!(csv(&text).unwrap().1.dropped, 1);
    }

    #[test]
    fn duplicate_pair_is_named() {
        let text = "instance,time,x,y\na,2000,1,2\na,2000,9,9\n";
        let err = csv(text).unwrap_err();
        match &err {
            IngestError::DuplicateSample { instance, time } => {
                assert_eq!((instance.as_str(), time.as_str()), ("a", "2000"))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("`a`") && err.to_string().contains("`2000`"));
    }

    #[test]
    fn rejects_empty_and_bad_header() {
        assert!(matches!(csv("instance,time,x,y\n"), Err(IngestError::NoUsableRows)));
        assert!(matches!(
            csv("instance,time,x,y\na,1,nan,nan\n"),
            Err(IngestError::NoUsableRows)
        ));
        assert!(matches!(csv("id,t,x,y\na,1,2,3\n"), Err(IngestError::Header { .. })));
        let bad = [0xffu8, 0xfe, 0x00];
        assert!(matches!(
            parse_dataset(&bad[..], InputFormat::LongCsv),
            Err(IngestError::Encoding(_))
        ));
    }

    #[test]
    fn parses_wide_json() {
        let text = r#"{
            "axes": ["female", "male"],
            "timesteps": [1990, 1991],
            "instances": [
                {"id": "zw", "label": "Zimbabwe", "values": [[1, 2], [3, 4]]},
                {"id": "ls", "values": [null, [5, 6]]},
                {"id": "bw", "values": [[0, 0], [1, 1]]},
                {"id": "sz", "values": [["x", 1], [2, 2]]}
            ]
        }"#;
        let (ds, report) = parse_dataset(text.as_bytes(), InputFormat::WideJson).unwrap();
        assert_eq!(ds.axes(), ("female", "male"));
        assert_eq!(ds.timesteps(), ["1990", "1991"]);
        assert_eq!(ds.instances()[0].label, "Zimbabwe");
        assert_eq!(ds.instances()[1].label, "ls");
        assert_eq!(ds.sample(1, 0), None);
        assert_eq!(report.dropped, 1);
        assert_eq!(ds.present_count(1), 4);
    }

    #[test]
    fn wide_json_value_count_and_duplicates() {
        let text = r#"{"axes":["a","b"],"timesteps":[1,2],"instances":[{"id":"p","values":[[1,1]]}]}"#;
        assert!(matches!(
            parse_dataset(text.as_bytes(), InputFormat::WideJson),
            Err(IngestError::ValueCount { expected: 2, found: 1, .. })
        ));
        let text = r#"{"axes":["a","b"],"timesteps":[1],"instances":[
            {"id":"p","values":[[1,1]]},{"id":"p","values":[[2,1]]},{"id":"q","values":[[3,1]]}]}"#;
        assert!(matches!(
            parse_dataset(text.as_bytes(), InputFormat::WideJson),
            Err(IngestError::DuplicateInstance(_))
        ));
    }

    fn dataset_from(points: &[Point]) -> TemporalBivariateDataset {
        let n = points.len();
        TemporalBivariateDataset::new(
            ("x".into(), "y".into()),
            (0..n)
                .map(|i| Instance {
                    id: format!("i{i:03}"),
                    label: format!("i{i:03}"),
                })
                .collect(),
            vec!["t0".into()],
            points.iter().map(|&p| vec![Some(p)]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn min_max_endpoints() {
        let ds = dataset_from(&[[0.0, 0.0], [10.0, 10.0], [5.0, 5.0]]);
        let plot = normalize_plot(&ds, 0).unwrap();
        assert_eq!(plot.points[0].position, [0.0, 0.0]);
        assert_eq!(plot.points[1].position, [1.0, 1.0]);
    }

    #[test]
    fn degenerate_axis_maps_to_half() {
        let ds = dataset_from(&[[7.0, 0.0], [7.0, 3.0], [7.0, 9.0]]);
        let plot = normalize_plot(&ds, 0).unwrap();
        assert!(plot.points.iter().all(|p| p.position[0] == 0.5));
    }

    #[test]
    fn affine_map_midpoint() {
        let ds = dataset_from(&[[2.0, 1.0], [4.0, 2.0], [6.0, 3.0]]);
        let plot = normalize_plot(&ds, 0).unwrap();
        let us: Vec<f64> = plot.points.iter().map(|p| p.position[0]).collect();
        assert_eq!(us, [0.0, 0.5, 1.0]);
    }

    #[test]
    fn empty_plot_is_an_error() {
        let ds = TemporalBivariateDataset::new(
            ("x".into(), "y".into()),
            (0..3)
                .map(|i| Instance {
                    id: i.to_string(),
                    label: i.to_string(),
                })
                .collect(),
            vec!["a".into(), "b".into()],
            (0..3).map(|i| vec![Some([i as f64, 0.0]), None]).collect(),
        )
        .unwrap();
        assert!(matches!(normalize_plot(&ds, 1), Err(IngestError::EmptyPlot(1))));
        assert!(matches!(
            normalize_plot(&ds, 5),
            Err(IngestError::TimestepOutOfRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn scale_round_trips(raw in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40)) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| [x, y]).collect();
            let ds = dataset_from(&pts);
            let plot = normalize_plot(&ds, 0).unwrap();
            for (pp, raw) in plot.points.iter().zip(&pts) {
                prop_assert!((0.0..=1.0).contains(&pp.position[0]));
                prop_assert!((0.0..=1.0).contains(&pp.position[1]));
                prop_assert_eq!(plot.scale.normalize(*raw), pp.position);
                let again = plot.scale.normalize(plot.scale.denormalize(pp.position));
                prop_assert!((again[0] - pp.position[0]).abs() <= 1e-12);
                prop_assert!((again[1] - pp.position[1]).abs() <= 1e-12);
            }
        }

        #[test]
        fn row_order_does_not_change_point_set(
            raw in prop::collection::vec((-50i32..50, -50i32..50), 3..30),
            seed in any::<u64>(),
        ) {
            let mut rows: Vec<String> = raw
                .iter()
                .enumerate()
                .map(|(i, (x, y))| format!("p{i},t,{x},{y}"))
                .collect();
            let header = "instance,time,x,y\n";
            let a = csv(&format!("{header}{}\n", rows.join("\n"))).unwrap().0;
            let mut state = seed;
            for i in (1..rows.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                rows.swap(i, (state >> 33) as usize % (i + 1));
            }
            let b = csv(&format!("{header}{}\n", rows.join("\n"))).unwrap().0;
            let set = |ds: &TemporalBivariateDataset| {
                let plot = normalize_plot(ds, 0).unwrap();
                let mut v: Vec<(String, [u64; 2])> = plot
                    .points
                    .iter()
                    .map(|p| (ds.instance_id(p.instance).to_string(),
                              [p.position[0].to_bits(), p.position[1].to_bits()]))
                    .collect();
                v.sort();
                v
            };
            prop_assert_eq!(set(&a), set(&b));
        }
    }
}
