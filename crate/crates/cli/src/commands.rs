//! Subcommands. Each reads its inputs from the run directory (or the
//! configured input file) and writes its artifacts plus a manifest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use wafer_core::autoencoder::{loss_curve_csv, Autoencoder};
use wafer_core::baselines::Baselines;
use wafer_core::cnn::{Cnn, CnnVariant};
use wafer_core::io::{dataset_to_records, read_records, WaferRecord};
use wafer_core::metrics::{pr_csv, roc_csv, MetricsReport};
use wafer_core::nn::{parse_params, write_params};
use wafer_core::occlusion::{occlusion_heatmap, HeatmapMeta};
use wafer_core::{DefectClass, EncodedTensor, LabeledDataset, SplitRole, CHANNELS, GRID, N_CLASSES};

use crate::artifacts::{pgm, Manifest, RunDir};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::experiment as ex;

pub const WAFERS: &str = "data/wafers.jsonl";
pub const TRAIN: &str = "data/train.jsonl";
pub const TEST: &str = "data/test.jsonl";
pub const AE_CHECKPOINT: &str = "checkpoints/autoencoder.params";
pub const BASELINES: &str = "checkpoints/baselines.json";
pub const METRICS: &str = "reports/metrics.json";
pub const ABLATION: &str = "reports/ablation.json";

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Synth,
    Ingest,
    TrainAe,
    Augment,
    TrainCnn { variant: CnnVariant, no_augment: bool },
    TrainBaselines,
    Evaluate,
    Occlusion { class: Option<DefectClass> },
    Ablate,
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::TrainAe => "train-ae",
            Command::Augment => "augment",
            Command::TrainCnn { .. } => "train-cnn",
            Command::TrainBaselines => "train-baselines",
            Command::Evaluate => "evaluate",
            Command::Occlusion { .. } => "occlusion",
            Command::Ablate => "ablate",
            Command::Pipeline => "pipeline",
        }
    }
}

/// `reports/metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub seed: u64,
    pub config_sha256: String,
    pub test_size: usize,
    pub models: Vec<MetricsReport>,
}

impl MetricsFile {
    pub fn model(&self, name: &str) -> Option<&MetricsReport> {
        self.models.iter().find(|m| m.model == name)
    }
}

/// One row of `reports/ablation.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: CnnVariant,
    pub total_params: usize,
    pub metrics: MetricsReport,
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> CliResult<Manifest> {
    cfg.validate()?;
    let mut s = Session::new(cfg)?;
    match cmd {
        Command::Synth => s.synth()?,
        Command::Ingest => s.ingest()?,
        Command::TrainAe => s.train_ae()?,
        Command::Augment => s.augment()?,
        Command::TrainCnn {
            variant,
            no_augment,
        } => s.train_cnn(*variant, !no_augment && cfg.augment.enabled)?,
        Command::TrainBaselines => s.train_baselines()?,
        Command::Evaluate => s.evaluate()?,
        Command::Occlusion { class } => s.occlusion(*class)?,
        Command::Ablate => s.ablate()?,
        Command::Pipeline => s.pipeline()?,
    }
    s.out.finish(cmd.name(), cfg)
}

/// A run directory plus whatever earlier stages of this process produced.
struct Session<'a> {
    cfg: &'a RunConfig,
    out: RunDir,
    train: Option<LabeledDataset>,
    test: Option<LabeledDataset>,
    ae: Option<Autoencoder>,
    augmented: Option<LabeledDataset>,
}

fn progress(msg: &str) {
    eprintln!("[wafer] {msg}");
}

impl<'a> Session<'a> {
    fn new(cfg: &'a RunConfig) -> CliResult<Self> {
        Ok(Self {
            cfg,
            out: RunDir::open(cfg)?,
            train: None,
            test: None,
            ae: None,
            augmented: None,
        })
    }

    fn write_dataset(&mut self, rel: &str, ds: &LabeledDataset) -> CliResult<()> {
        let mut text = String::new();
        for r in dataset_to_records(ds)? {
            text.push_str(&r.to_json_line());
            text.push('\n');
        }
        self.out.write_text(rel, &text)?;
        Ok(())
    }

    fn read_dataset(&self, rel: &str, role: SplitRole, hint: &str) -> CliResult<LabeledDataset> {
        let path = self.out.path(rel);
        if !path.exists() {
            return Err(CliError::data(format!("{} not found; run `{hint}` first", path.display())));
        }
        let records = read_records(&path).map_err(|e| CliError::from(e).in_file(&path))?;
        Ok(ex::with_role(ex::records_dataset(&records)?, role))
    }

    fn synth(&mut self) -> CliResult<()> {
        progress("generating synthetic wafers");
        let ds = ex::synth_dataset(self.cfg)?;
        self.write_dataset(WAFERS, &ds)?;
        self.out.write_text("reports/synth_counts.csv", &counts_csv(&[("count", ds.class_counts())]))?;
        Ok(())
    }

    fn ingest(&mut self) -> CliResult<()> {
        let records: Vec<WaferRecord> = match &self.cfg.paths.input {
            Some(p) => read_records(p).map_err(|e| CliError::from(e).in_file(p))?,
            None => {
                let p = self.out.path(WAFERS);
                if !p.exists() {
                    return Err(CliError::config(format!(
                        "paths.input is not set and {} does not exist; run `synth` or set paths.input",
                        p.display()
                    )));
                }
                read_records(&p).map_err(|e| CliError::from(e).in_file(&p))?
            }
        };
        let ds = ex::records_dataset(&records)?;
        if ds.is_empty() {
            return Err(CliError::data("input holds no labelled wafer maps"));
        }
        progress(&format!("splitting {} labelled wafers", ds.len()));
        let (train, test) = ex::split(&ds, self.cfg)?;
        self.write_dataset(TRAIN, &train)?;
        self.write_dataset(TEST, &test)?;
        self.out.write_text(
            "reports/split_counts.csv",
            &counts_csv(&[("train", train.class_counts()), ("test", test.class_counts())]),
        )?;
        self.train = Some(train);
        self.test = Some(test);
        Ok(())
    }

    fn ensure_split(&mut self) -> CliResult<()> {
        if self.train.is_none() {
            self.train = Some(self.read_dataset(TRAIN, SplitRole::Train, "ingest")?);
        }
        if self.test.is_none() {
            self.test = Some(self.read_dataset(TEST, SplitRole::Test, "ingest")?);
        }
        Ok(())
    }

    fn train_ae(&mut self) -> CliResult<()> {
        self.ensure_split()?;
        let train = self.train.as_ref().expect("split loaded");
        progress(&format!("training autoencoder on {} wafers", train.len()));
        let (ae, curve) = ex::fit_autoencoder(train, self.cfg)?;
        write_params(ae.params(), self.out.path(AE_CHECKPOINT))?;
        self.out.record(AE_CHECKPOINT)?;
        self.out.write_text("reports/ae_loss.csv", &loss_curve_csv(&curve))?;

        let mut panels = Vec::new();
        for class in DefectClass::ALL {
            if let Some(item) = train.of_class(class).next() {
                let x = item.sample.to_tensor()?;
                let y = ae.reconstruct(&x)?;
                panels.push(vec![die_level(&x), die_level(&y)]);
            }
        }
        self.write_image("reports/reconstructions", &panels)?;
        self.ae = Some(ae);
        Ok(())
    }

    fn ensure_ae(&mut self) -> CliResult<()> {
        if self.ae.is_none() {
            let text = self.out.read_text(AE_CHECKPOINT, "run `train-ae` first")?;
            self.ae = Some(Autoencoder::from_params(&parse_params(&text)?)?);
        }
        Ok(())
    }

    fn ensure_augmented(&mut self) -> CliResult<()> {
        if self.augmented.is_none() {
            self.ensure_split()?;
            self.ensure_ae()?;
            progress("augmenting training split");
            let aug = ex::augmented(
                self.ae.as_ref().expect("ae loaded"),
                self.train.as_ref().expect("split loaded"),
                self.cfg,
            )?;
            self.augmented = Some(aug);
        }
        Ok(())
    }

    fn augment(&mut self) -> CliResult<()> {
        self.ensure_augmented()?;
        let before = self.train.as_ref().expect("split loaded").class_counts();
        let aug = self.augmented.as_ref().expect("augmented");
        let after = aug.class_counts();
        let mut s = String::from("class,original,generated,total\n");
        for c in DefectClass::ALL {
            let i = c.label();
            let _ = writeln!(s, "{},{},{},{}", c.name(), before[i], after[i] - before[i], after[i]);
        }
        let mut panels = Vec::new();
        for class in DefectClass::ALL {
            let row: Vec<Vec<f64>> = aug
                .of_class(class)
                .filter(|it| it.provenance == wafer_core::Provenance::Augmented)
                .take(4)
                .map(|it| it.sample.to_tensor().map(|t| die_level(&t)))
                .collect::<wafer_core::Result<_>>()?;
            if !row.is_empty() {
                panels.push(row);
            }
        }
        self.out.write_text("reports/augment_counts.csv", &s)?;
        self.write_image("reports/augment_preview", &panels)?;
        Ok(())
    }

    fn fit_and_save_cnn(&mut self, variant: CnnVariant, augmented: bool) -> CliResult<Cnn> {
        self.ensure_split()?;
        if augmented {
            self.ensure_augmented()?;
        }
        let data = if augmented {
            self.augmented.as_ref()
        } else {
            self.train.as_ref()
        }
        .expect("training data loaded");
        let name = ex::cnn_name(variant, augmented);
        progress(&format!("training {name} on {} wafers", data.len()));
        let (model, history) = ex::fit_cnn(data, self.cfg, variant)?;
        let ckpt = format!("checkpoints/{name}.params");
        write_params(model.params(), self.out.path(&ckpt))?;
        self.out.record(&ckpt)?;
        self.out.write_text(&format!("reports/train_{name}.csv"), &history.to_csv())?;
        Ok(model)
    }

    fn train_cnn(&mut self, variant: CnnVariant, augmented: bool) -> CliResult<()> {
        self.fit_and_save_cnn(variant, augmented)?;
        Ok(())
    }

    fn load_cnn(&self, variant: CnnVariant, augmented: bool) -> CliResult<Option<Cnn>> {
        let rel = format!("checkpoints/{}.params", ex::cnn_name(variant, augmented));
        if !self.out.exists(&rel) {
            return Ok(None);
        }
        let params = parse_params(&self.out.read_text(&rel, "checkpoint")?)?;
        Ok(Some(Cnn::from_params(self.cfg.cnn.arch(variant), &params)?))
    }

    /// The full-variant classifier: augmented if available, otherwise plain.
    fn primary_cnn(&self) -> CliResult<(String, Cnn)> {
        for augmented in [true, false] {
            if let Some(m) = self.load_cnn(CnnVariant::Full, augmented)? {
                return Ok((ex::cnn_name(CnnVariant::Full, augmented), m));
            }
        }
        Err(CliError::data(format!(
            "no classifier checkpoint in {}; run `train-cnn` first",
            self.out.path("checkpoints").display()
        )))
    }

    fn train_baselines(&mut self) -> CliResult<()> {
        self.ensure_split()?;
        progress("extracting handcrafted features");
        let train = ex::features(self.train.as_ref().expect("split loaded"))?;
        let test = ex::features(self.test.as_ref().expect("split loaded"))?;
        self.out.write_text("data/features_train.csv", &train.to_csv())?;
        self.out.write_text("data/features_test.csv", &test.to_csv())?;
        progress("fitting baselines");
        let models = ex::fit_baselines(&train, self.cfg)?;
        self.out.write_text(BASELINES, &models.to_json())?;
        Ok(())
    }

    fn evaluate(&mut self) -> CliResult<()> {
        self.ensure_split()?;
        let test = self.test.as_ref().expect("split loaded");
        let labels = test.labels();
        let (primary_name, primary) = self.primary_cnn()?;
        let primary_proba = ex::cnn_proba(&primary, test, self.cfg)?;
        let mut models = vec![wafer_core::metrics::evaluate(&primary_name, &primary_proba, &labels)?];
        if primary_name == ex::cnn_name(CnnVariant::Full, true) {
            if let Some(plain) = self.load_cnn(CnnVariant::Full, false)? {
                let name = ex::cnn_name(CnnVariant::Full, false);
                models.push(ex::evaluate_cnn(&name, &plain, test, self.cfg)?);
            }
        }
        if self.out.exists(BASELINES) {
            let baselines = Baselines::from_json(&self.out.read_text(BASELINES, "baselines")?)?;
            let features = ex::features(test)?;
            models.extend(ex::evaluate_baselines(&baselines, &features)?);
        }
        let cm = models[0].confusion.to_csv();
        let file = MetricsFile {
            seed: self.cfg.seed,
            config_sha256: self.cfg.hash(),
            test_size: test.len(),
            models,
        };
        for m in &file.models {
            progress(&format!(
                "{}: accuracy {:.4}, macro-F1 {:.4}",
                m.model, m.accuracy, m.macro_f1
            ));
        }
        self.out.write_text(METRICS, &to_json(&file))?;
        self.out.write_text("reports/confusion.csv", &cm)?;
        self.out.write_text("reports/roc_points.csv", &roc_csv(&primary_proba, &labels)?)?;
        self.out.write_text("reports/pr_points.csv", &pr_csv(&primary_proba, &labels)?)?;
        Ok(())
    }

    fn occlusion(&mut self, class: Option<DefectClass>) -> CliResult<()> {
        self.ensure_split()?;
        let test = self.test.as_ref().expect("split loaded");
        let subset = match class {
            Some(c) => test.filter_class(c),
            None => test.clone(),
        };
        if subset.is_empty() {
            return Err(CliError::data("occlusion subset of the test split is empty"));
        }
        let (_, model) = self.primary_cnn()?;
        progress(&format!("occlusion sweep over {} test wafers", subset.len()));
        let heat = occlusion_heatmap(&model, &subset, &self.cfg.occlusion)?;
        let meta = HeatmapMeta {
            baseline_f1: heat.baseline_f1,
            anchors: heat.anchors.clone(),
            config: self.cfg.occlusion.clone(),
            n_items: subset.len(),
        };
        self.out.write_text("reports/heatmap.csv", &heat.to_csv())?;
        let doc = serde_json::json!({ "meta": meta, "delta": heat.delta });
        self.out.write_text("reports/heatmap.json", &to_json(&doc))?;
        let n = heat.delta.len();
        let flat: Vec<f64> = heat.delta.iter().flatten().copied().collect();
        let lo = flat.iter().copied().fold(0.0, f64::min);
        let hi = flat.iter().copied().fold(0.0, f64::max);
        self.out.write_text("reports/heatmap.pgm", &pgm(&flat, n, n, lo, hi, 16))?;
        Ok(())
    }

    fn ablate(&mut self) -> CliResult<()> {
        let augmented = self.cfg.augment.enabled;
        let mut rows = Vec::new();
        for variant in CnnVariant::ALL {
            let model = self.fit_and_save_cnn(variant, augmented)?;
            let test = self.test.as_ref().expect("split loaded");
            rows.push(AblationRow {
                variant,
                total_params: model.arch.total_params(),
                metrics: ex::evaluate_cnn(variant.name(), &model, test, self.cfg)?,
            });
        }
        let mut csv = String::from("variant,total_params,accuracy,macro_precision,macro_recall,macro_f1,mean_auc,mean_ap\n");
        for r in &rows {
            let m = &r.metrics;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                r.variant.name(),
                r.total_params,
                m.accuracy,
                m.macro_precision,
                m.macro_recall,
                m.macro_f1,
                m.mean_auc,
                m.mean_ap
            );
        }
        self.out.write_text(ABLATION, &to_json(&rows))?;
        self.out.write_text("reports/ablation.csv", &csv)?;
        Ok(())
    }

    fn pipeline(&mut self) -> CliResult<()> {
        if self.cfg.paths.input.is_none() {
            self.synth()?;
        }
        self.ingest()?;
        if self.cfg.augment.enabled {
            self.train_ae()?;
            self.augment()?;
            self.train_cnn(CnnVariant::Full, true)?;
        }
        self.train_cnn(CnnVariant::Full, false)?;
        self.train_baselines()?;
        self.evaluate()?;
        self.occlusion(None)?;
        Ok(())
    }

    /// Tiles 26x26 panels (one row of panels per entry) into CSV and PGM files.
    fn write_image(&mut self, stem: &str, panels: &[Vec<Vec<f64>>]) -> CliResult<()> {
        let rows = panels.len() * GRID;
        let cols = panels.iter().map(Vec::len).max().unwrap_or(0) * GRID;
        let mut grid = vec![0.0; rows * cols];
        for (pr, row) in panels.iter().enumerate() {
            for (pc, panel) in row.iter().enumerate() {
                for i in 0..GRID {
                    for j in 0..GRID {
                        grid[(pr * GRID + i) * cols + pc * GRID + j] = panel[i * GRID + j];
                    }
                }
            }
        }
        let mut csv = String::new();
        for r in grid.chunks(cols.max(1)) {
            let cells: Vec<String> = r.iter().map(f64::to_string).collect();
            let _ = writeln!(csv, "{}", cells.join(","));
        }
        self.out.write_text(&format!("{stem}.csv"), &csv)?;
        self.out.write_text(&format!("{stem}.pgm"), &pgm(&grid, rows, cols, 0.0, 1.0, 4))?;
        Ok(())
    }
}

/// Expected die state scaled to `[0, 1]`: off-wafer 0, good 0.5, defect 1.
fn die_level(x: &EncodedTensor) -> Vec<f64> {
    x.as_slice()
        .chunks_exact(CHANNELS)
        .map(|p| (0.5 * p[1] + p[2]) as f64)
        .collect()
}

fn counts_csv(columns: &[(&str, [usize; N_CLASSES])]) -> String {
    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    let mut s = format!("class,{}\n", names.join(","));
    for c in DefectClass::ALL {
        let vals: Vec<String> = columns.iter().map(|col| col.1[c.label()].to_string()).collect();
        let _ = writeln!(s, "{},{}", c.name(), vals.join(","));
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialises");
    s.push('\n');
    s
}
