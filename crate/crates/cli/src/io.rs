//! File formats: `.dyct` tensor blobs, checkpoints with a JSON manifest,
//! JSON-lines run logs, and the metrics CSV.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use dyce_core::metrics::{ClassScores, ConfusionMatrix};
use dyce_core::model::ModelParams;
use dyce_core::synthdata::{DomainSpec, SsdaDataset};
use dyce_core::tensor::Tensor;
use dyce_core::trainer::StepReport;

pub fn write_dyct(path: &Path, tensor: &Tensor) -> io::Result<()> {
    fs::write(path, tensor.to_dyct_bytes())
}

pub fn read_dyct(path: &Path) -> io::Result<Tensor> {
    let bytes = fs::read(path)?;
    Tensor::from_dyct_bytes(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

#[derive(Serialize)]
struct TensorEntry {
    file: String,
    shape: Vec<usize>,
}

#[derive(Serialize)]
struct CheckpointManifest {
    seed: u64,
    step: u64,
    tensors: Vec<(String, TensorEntry)>,
}

/// Write student and teacher parameters as one `.dyct` blob per tensor
/// plus a `manifest.json` listing shapes, the run seed, and the step
/// count.
pub fn save_checkpoint(
    dir: &Path,
    student: &ModelParams,
    teacher: &ModelParams,
    seed: u64,
    step: u64,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (branch, params) in [("student", student), ("teacher", teacher)] {
        for (name, tensor) in params.tensors() {
            let file = format!("{branch}_{name}.dyct");
            write_dyct(&dir.join(&file), tensor)?;
            entries.push((
                format!("{branch}/{name}"),
                TensorEntry {
                    file,
                    shape: tensor.shape().to_vec(),
                },
            ));
        }
    }
    let manifest = CheckpointManifest {
        seed,
        step,
        tensors: entries,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )
}

/// Buffered JSON-lines step log; one record per step plus wall time.
pub struct RunLog {
    out: BufWriter<fs::File>,
}

#[derive(Serialize)]
struct RunLogRecord<'a> {
    #[serde(flatten)]
    report: &'a StepReport,
    wall_ms: u128,
}

impl RunLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(fs::File::create(path)?),
        })
    }

    pub fn record(&mut self, report: &StepReport, wall_ms: u128) -> io::Result<()> {
        let record = RunLogRecord { report, wall_ms };
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

fn format_score(score: Option<f64>) -> String {
    match score {
        Some(v) => format!("{v:.6}"),
        None => "-".to_string(),
    }
}

/// Metrics CSV: one row per class (index, IoU, Dice, ground-truth pixel
/// count), then a `mean` summary row. Absent classes print `-` and stay
/// out of the means. The output is a pure function of the scores, so
/// identical runs produce byte-identical files.
pub fn write_metrics_csv(
    path: &Path,
    cm: &ConfusionMatrix,
    iou: &ClassScores,
    dice: &ClassScores,
) -> io::Result<()> {
    let mut out = String::from("class,iou,dice,pixels\n");
    for c in 0..cm.n_classes() {
        out.push_str(&format!(
            "{c},{},{},{}\n",
            format_score(iou.per_class[c]),
            format_score(dice.per_class[c]),
            cm.gt_pixels(c)
        ));
    }
    out.push_str(&format!(
        "mean,{:.6},{:.6},{}\n",
        iou.mean,
        dice.mean,
        cm.total()
    ));
    fs::write(path, out)
}

#[derive(Serialize)]
struct DatasetIndex<'a> {
    source_spec: &'a DomainSpec,
    target_spec: &'a DomainSpec,
    class_frequencies: &'a [f64],
    splits: Vec<SplitIndex>,
}

#[derive(Serialize)]
struct SplitIndex {
    name: &'static str,
    images: Vec<DatasetImage>,
}

#[derive(Serialize)]
struct DatasetImage {
    image: String,
    labels: Option<String>,
    caption: Vec<usize>,
}

/// Export a dataset as a directory of `.dyct` tensors plus a JSON index
/// describing splits, seeds, and class frequencies. Unlabeled images
/// omit their label file.
pub fn export_dataset(
    dir: &Path,
    dataset: &SsdaDataset,
    source_spec: &DomainSpec,
    target_spec: &DomainSpec,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut splits = Vec::new();
    for (name, images, labeled) in [
        ("source", &dataset.source, true),
        ("target_labeled", &dataset.target_labeled, true),
        ("target_unlabeled", &dataset.target_unlabeled, false),
    ] {
        let mut entries = Vec::new();
        for (i, img) in images.iter().enumerate() {
            let image_file = format!("{name}_{i:05}_image.dyct");
            write_dyct(&dir.join(&image_file), &img.image)?;
            let labels = if labeled {
                let label_file = format!("{name}_{i:05}_labels.dyct");
                let flat: Vec<f64> = img.labels.labels().iter().map(|&l| l as f64).collect();
                let tensor =
                    Tensor::from_vec(vec![img.labels.height(), img.labels.width()], flat)
                        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                write_dyct(&dir.join(&label_file), &tensor)?;
                Some(label_file)
            } else {
                None
            };
            entries.push(DatasetImage {
                image: image_file,
                labels,
                caption: img.caption.clone(),
            });
        }
        splits.push(SplitIndex {
            name,
            images: entries,
        });
    }
    let index = DatasetIndex {
        source_spec,
        target_spec,
        class_frequencies: &dataset.class_frequencies,
        splits,
    };
    fs::write(
        dir.join("index.json"),
        serde_json::to_string_pretty(&index)?,
    )
}

/// One parsed per-class metrics row: class, IoU, Dice, pixel count.
pub type MetricsRow = (String, String, String, String);

/// Parsed metrics CSV: per-class rows plus the mean (IoU, Dice) row.
pub type ParsedMetrics = (Vec<MetricsRow>, Option<(f64, f64)>);

/// The per-run summary consumed by `report`.
pub fn read_metrics_csv(path: &Path) -> io::Result<ParsedMetrics> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut mean = None;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            continue;
        }
        if fields[0] == "mean" {
            mean = Some((
                fields[1].parse().unwrap_or(f64::NAN),
                fields[2].parse().unwrap_or(f64::NAN),
            ));
        } else {
            rows.push((
                fields[0].to_string(),
                fields[1].to_string(),
                fields[2].to_string(),
                fields[3].to_string(),
            ));
        }
    }
    Ok((rows, mean))
}

/// Run directories under `runs_dir` that contain a metrics CSV.
pub fn discover_runs(runs_dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(runs_dir)? {
        let path = entry?.path();
        if path.is_dir() && path.join("metrics.csv").is_file() {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}
