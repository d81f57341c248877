//! Command implementations: generation → training → scoring → evaluation
//! → reporting, plus the gradient-check entry point.
//!
//! Outputs are deterministic for a fixed `(config, seed)`; score files are
//! byte-identical across reruns on the same platform.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{DataSource, RunConfig};
use crate::data::{self, Split, SplitData};
use crate::error::{Error, Result};
use crate::gradcheck::{self, NamedCheck, GRAD_TOLERANCE};
use crate::metrics::{
    compute_metrics, DetectionErrorMode, MetricsReport, PositiveClass, ScoreEntry, ScoreSet,
};
use crate::models::{self, forward, init_model, TrainConfig, TrainReport};
use crate::scoring::score_model;
use crate::Real;

/// One row of a scores file.
#[derive(Clone, Debug)]
pub struct ScoreRow {
    pub id: String,
    pub split: Split,
    pub z: Real,
    pub anomaly: Real,
}

pub const SCORES_HEADER: &str = "id,split,z,as";

/// Fraction of zero geometric scores beyond which the degenerate-regime
/// warning fires.
pub const DEGENERATE_WARN_FRACTION: f64 = 0.99;

/// Generates the synthetic dataset and writes the three split files.
pub fn cmd_gen_data(config: &RunConfig, out_dir: &Path) -> Result<()> {
    if config.data_source != DataSource::Synthetic {
        return Err(Error::Config(
            "gen-data requires data_source = synthetic".into(),
        ));
    }
    let data = data::gen_hierarchical(&config.hierarchy_spec(), config.seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    data::write_embeddings(&out_dir.join("train.csv"), &data.train)?;
    data::write_embeddings(&out_dir.join("test_id.csv"), &data.test_id)?;
    data::write_embeddings(&out_dir.join("test_ood.csv"), &data.test_ood)?;
    Ok(())
}

/// Resolves the feature source: an explicit `--data` path wins, then the
/// config's `embeddings_path`. Either may be a single embedding CSV or a
/// directory in the `gen-data` layout.
pub fn resolve_data(config: &RunConfig, data: Option<&Path>) -> Result<SplitData> {
    let path = match data {
        Some(p) => p.to_path_buf(),
        None if !config.embeddings_path.is_empty() => {
            std::path::PathBuf::from(&config.embeddings_path)
        }
        None => {
            return Err(Error::Config(
                "no data source: pass --data or set embeddings_path".into(),
            ))
        }
    };
    if path.is_dir() {
        data::load_dir(&path)
    } else {
        data::load_embeddings(&path)
    }
}

/// Trains the configured architecture and writes the model file.
pub fn cmd_train(config: &RunConfig, data: Option<&Path>, model_out: &Path) -> Result<TrainReport> {
    let data = resolve_data(config, data)?;
    if data.train.is_empty() {
        return Err(Error::EmptyDataset {
            context: "train split",
        });
    }
    let classes = data.train.n_classes();
    let shape = config.model_shape(data.train.dim(), classes);
    let model = init_model(&shape, config.seed)?;
    let train_config = TrainConfig {
        epochs: config.epochs,
        lr: config.lr,
        batch_size: config.batch_size,
        seed: config.seed,
    };
    let (model, report) = models::train(model, &data.train, &train_config)?;
    save_parent_dir(model_out)?;
    models::io::save_model(model_out, &model, &config.to_text())?;
    Ok(report)
}

fn save_parent_dir(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    Ok(())
}

/// Renders a training report as stable `key = value` text.
pub fn render_train_report(report: &TrainReport) -> String {
    let mut out = String::new();
    writeln!(out, "seed = {}", report.seed).unwrap();
    writeln!(out, "epochs = {}", report.epoch_losses.len()).unwrap();
    writeln!(
        out,
        "final_train_accuracy = {}",
        report.final_train_accuracy
    )
    .unwrap();
    writeln!(out, "wall_clock_secs = {:.3}", report.wall_clock_secs).unwrap();
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        write!(out, "epoch {i} total = {loss}").unwrap();
        for (name, series) in &report.branch_losses {
            write!(out, " {name} = {}", series[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Scores the test splits of a data source with a trained model.
pub fn cmd_score(model_path: &Path, data: Option<&Path>, scores_out: &Path) -> Result<()> {
    let (model, config_text) = models::io::load_model(model_path)?;
    let config = RunConfig::parse(&config_text)?;
    let data = resolve_data(&config, data)?;
    if data.test_id.is_empty() && data.test_ood.is_empty() {
        return Err(Error::EmptyDataset {
            context: "test splits",
        });
    }
    let mut rows = Vec::new();
    for ds in [&data.test_id, &data.test_ood] {
        if !ds.is_empty() && ds.dim() != model.feature_dim() {
            return Err(Error::ModelDataDimMismatch {
                model: model.feature_dim(),
                data: ds.dim(),
            });
        }
        for (i, row) in ds.features.iter().enumerate() {
            let out = forward(&model, row)?;
            let (z, anomaly) = score_model(&model, &out)?;
            rows.push(ScoreRow {
                id: ds.ids[i].clone(),
                split: ds.split,
                z: z.value,
                anomaly: anomaly.value,
            });
        }
    }

    let zeros = rows.iter().filter(|r| r.z == 0.0).count();
    if (zeros as f64) > DEGENERATE_WARN_FRACTION * rows.len() as f64 {
        eprintln!(
            "warning: {zeros}/{} geometric scores are exactly 0; the curved branch adds no \
             evidence in this regime (clip radius never reached)",
            rows.len()
        );
    }

    save_parent_dir(scores_out)?;
    std::fs::write(scores_out, format_scores(&rows))
        .map_err(|e| Error::io(scores_out.display().to_string(), e))
}

pub fn format_scores(rows: &[ScoreRow]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{}", r.id, r.split.as_str(), r.z, r.anomaly).unwrap();
    }
    out
}

/// Parses a scores file written by [`cmd_score`].
pub fn parse_scores(text: &str, path: &str) -> Result<Vec<ScoreRow>> {
    let perr = |line: usize, message: String| Error::ParseError {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SCORES_HEADER => {}
        Some((_, h)) => return Err(perr(1, format!("bad header `{h}`"))),
        None => return Err(perr(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(perr(
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let split = Split::parse(fields[1])
            .filter(|s| *s != Split::Train)
            .ok_or_else(|| perr(lineno, format!("bad split `{}`", fields[1])))?;
        let z: Real = fields[2]
            .parse()
            .map_err(|_| perr(lineno, format!("bad z `{}`", fields[2])))?;
        let anomaly: Real = fields[3]
            .parse()
            .map_err(|_| perr(lineno, format!("bad as `{}`", fields[3])))?;
        rows.push(ScoreRow {
            id: fields[0].to_string(),
            split,
            z,
            anomaly,
        });
    }
    Ok(rows)
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_scores(&text, &path.display().to_string())
}

fn score_set(rows: &[ScoreRow]) -> Result<ScoreSet<Real>> {
    ScoreSet::new(
        rows.iter()
            .map(|r| ScoreEntry {
                id: r.id.clone(),
                is_anomalous: r.split == Split::TestOod,
                score: r.anomaly,
            })
            .collect(),
    )
}

/// Evaluates a scores file; writes and returns the metrics report.
pub fn cmd_eval(
    scores_path: &Path,
    metrics_out: &Path,
    config: &RunConfig,
) -> Result<MetricsReport<Real>> {
    let rows = load_scores(scores_path)?;
    let set = score_set(&rows)?;
    let report = compute_metrics(&set, &config.metrics_options())?;
    save_parent_dir(metrics_out)?;
    std::fs::write(metrics_out, render_metrics(&report))
        .map_err(|e| Error::io(metrics_out.display().to_string(), e))?;
    Ok(report)
}

pub fn render_metrics(report: &MetricsReport<Real>) -> String {
    let mode = match report.detection_error_mode {
        DetectionErrorMode::MinOverThresholds => "min",
        DetectionErrorMode::AtNinetyFiveTpr => "at95",
    };
    let positive = match report.positive_class {
        PositiveClass::Ood => "ood",
        PositiveClass::Id => "id",
    };
    format!(
        "auroc = {}\nfpr_at_95_tpr = {}\ndetection_error = {}\naupr = {}\n\
         aupr_positive = {positive}\ndetection_error_mode = {mode}\nn_id = {}\nn_ood = {}\n",
        report.auroc,
        report.fpr_at_95_tpr,
        report.detection_error,
        report.aupr,
        report.n_id,
        report.n_ood,
    )
}

/// Histogram of anomaly scores per split.
#[derive(Clone, Debug)]
pub struct DensityReport {
    /// 51 strictly increasing bin edges.
    pub edges: Vec<Real>,
    pub count_id: Vec<usize>,
    pub count_ood: Vec<usize>,
}

pub const DENSITY_BINS: usize = 50;

impl DensityReport {
    /// Equal-width bins over the observed anomaly-score range.
    pub fn build(rows: &[ScoreRow]) -> Result<DensityReport> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset {
                context: "density report",
            });
        }
        let lo = rows.iter().map(|r| r.anomaly).fold(f64::INFINITY, f64::min);
        let hi = rows
            .iter()
            .map(|r| r.anomaly)
            .fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo).max(1e-9)) / DENSITY_BINS as Real;
        let edges: Vec<Real> = (0..=DENSITY_BINS).map(|i| lo + width * i as Real).collect();
        let mut count_id = vec![0usize; DENSITY_BINS];
        let mut count_ood = vec![0usize; DENSITY_BINS];
        for r in rows {
            let idx = (((r.anomaly - lo) / width) as usize).min(DENSITY_BINS - 1);
            match r.split {
                Split::TestOod => count_ood[idx] += 1,
                _ => count_id[idx] += 1,
            }
        }
        Ok(DensityReport {
            edges,
            count_id,
            count_ood,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count_id,count_ood\n");
        for i in 0..self.count_id.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.edges[i],
                self.edges[i + 1],
                self.count_id[i],
                self.count_ood[i]
            )
            .unwrap();
        }
        out
    }
}

/// Writes the score-density histogram for a scores file.
pub fn cmd_report(scores_path: &Path, density_out: &Path) -> Result<DensityReport> {
    let rows = load_scores(scores_path)?;
    let report = DensityReport::build(&rows)?;
    save_parent_dir(density_out)?;
    std::fs::write(density_out, report.to_csv())
        .map_err(|e| Error::io(density_out.display().to_string(), e))?;
    Ok(report)
}

/// Runs every named gradient check, printing one line per check.
pub fn cmd_gradcheck(seed: u64) -> Result<Vec<NamedCheck>> {
    let checks = gradcheck::run_all(seed);
    for c in &checks {
        println!(
            "{}: max_rel_err = {:.3e} over {} points x {} coords [{}]",
            c.name,
            c.max_rel_err,
            c.points,
            c.coords_per_point,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
    if let Some(worst) = checks
        .iter()
        .filter(|c| !c.passed())
        .max_by(|a, b| a.max_rel_err.partial_cmp(&b.max_rel_err).unwrap())
    {
        return Err(Error::GradCheckFailed {
            max_err: worst.max_rel_err,
            threshold: GRAD_TOLERANCE,
        });
    }
    Ok(checks)
}
