//! The three comparison experiments: ECS on clean vs noisy input, the β sweep,
//! and the system comparison (ACE, ECS, ASE-ECS, AVSE-ECS).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use avse_ci::avse::{EnhancerNetwork, FusionConfig, FusionMode};
use avse_ci::data::{Manifest, Split};
use avse_ci::ecs::EcsNetwork;
use avse_ci::eval::{evaluate_set, InputCondition, MetricReport, Scores, System, SystemKind};
use avse_ci::nn::Checkpoint;
use avse_ci::training::{joint_train, log_csv, train_spec_only, JointConfig, LossWeights};
use avse_ci::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Enhancer training template; fusion mode and β are set per run.
    pub joint: JointConfig,
    pub betas: Vec<f64>,
    /// β of the jointly trained AVSE-ECS row of table 3.
    pub joint_beta: f64,
    /// Load an existing enhancer checkpoint under `checkpoints/` when its
    /// training config matches instead of retraining.
    pub reuse_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            joint: JointConfig {
                lr: 1e-3,
                epochs: 10,
                ..JointConfig::default()
            },
            betas: vec![0.25, 0.5, 1.0],
            joint_beta: 0.5,
            reuse_checkpoints: false,
        }
    }
}

/// One enhancer training run inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhancerRun {
    pub fusion: FusionMode,
    pub beta: f64,
}

impl EnhancerRun {
    pub fn name(&self) -> String {
        format!("{}-beta{}", self.fusion, self.beta)
    }

    fn config(&self, template: &JointConfig) -> Result<JointConfig> {
        Ok(JointConfig {
            fusion: self.fusion,
            weights: LossWeights::new(template.weights.alpha, self.beta)?,
            ..template.clone()
        })
    }
}

pub struct TrainedEnhancer {
    pub name: String,
    pub network: EnhancerNetwork,
    pub checkpoint_hash: String,
    /// Paths relative to the experiment output directory.
    pub checkpoint_dir: String,
    pub loss_log: String,
    /// Wall-clock training time; `None` when the checkpoint was reused.
    pub train_seconds: Option<f64>,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Train (or reload) one enhancer. β = 0 uses the spectrogram-only trainer,
/// which is the same computation as joint training without the coder term.
pub fn train_enhancer(manifest: &Manifest, ecs: &EcsNetwork, cfg: &ExperimentConfig, run: EnhancerRun, out: &Path) -> Result<TrainedEnhancer> {
    let name = run.name();
    let jc = run.config(&cfg.joint)?;
    let ck_rel = format!("checkpoints/{name}");
    let log_rel = format!("logs/{name}.csv");
    let ck_dir = out.join(&ck_rel);
    let log_path = out.join(&log_rel);
    if cfg.reuse_checkpoints && ck_dir.join("manifest.json").is_file() && log_path.is_file() {
        let ck = Checkpoint::load(&ck_dir)?;
        // the checkpoint stores the network's full fusion config in place of the mode
        let mut want = serde_json::to_value(&jc)?;
        want["fusion"] = serde_json::to_value(FusionConfig::new(jc.fusion))?;
        if ck.config == want && ck.seed == jc.seed && ck.corpus_peak == ecs.corpus_peak {
            log::info!("reusing enhancer checkpoint {}", ck_dir.display());
            return Ok(TrainedEnhancer {
                name,
                network: EnhancerNetwork::from_checkpoint(&ck)?,
                checkpoint_hash: ck.content_hash(),
                checkpoint_dir: ck_rel,
                loss_log: log_rel,
                train_seconds: None,
            });
        }
    }
    log::info!("training enhancer {name}");
    let started = std::time::Instant::now();
    let outcome = if run.beta == 0.0 {
        train_spec_only(manifest, ecs.corpus_peak, &jc)?
    } else {
        joint_train(manifest, ecs, &jc)?
    };
    outcome.checkpoint.save(&ck_dir)?;
    write(&log_path, log_csv(&outcome.log).as_bytes())?;
    Ok(TrainedEnhancer {
        name,
        network: outcome.network,
        checkpoint_hash: outcome.checkpoint.content_hash(),
        checkpoint_dir: ck_rel,
        loss_log: log_rel,
        train_seconds: Some(started.elapsed().as_secs_f64()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub scores: Scores,
    pub n: usize,
    /// Mean STOI per test SNR, in the order of [`ExperimentTable::snrs`].
    pub stoi_by_snr: Vec<Option<f64>>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub name: String,
    pub title: String,
    pub note_header: Option<String>,
    pub snrs: Vec<f64>,
    pub rows: Vec<TableRow>,
    /// Per-utterance scores, labelled by row.
    pub report: MetricReport,
    /// `(name, content hash)` of every enhancer checkpoint used.
    pub checkpoints: Vec<(String, String)>,
    /// `(name, seconds)` of every enhancer trained here. Not part of the written report.
    pub train_seconds: Vec<(String, f64)>,
}

impl ExperimentTable {
    fn new(name: &str, title: &str, manifest: &Manifest) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            note_header: None,
            snrs: manifest.test_snrs_db.clone(),
            rows: Vec::new(),
            report: MetricReport::default(),
            checkpoints: Vec::new(),
            train_seconds: Vec::new(),
        }
    }

    fn add(&mut self, label: &str, report: MetricReport, note: String) -> Result<()> {
        let scores = report
            .mean(label)
            .ok_or_else(|| Error::Data(format!("{label}: no utterance could be scored")))?;
        let n = report.rows.len();
        let stoi_by_snr = self
            .snrs
            .iter()
            .map(|s| report.mean_where(|r| r.snr_db == Some(*s)).map(|m| m.stoi))
            .collect();
        self.rows.push(TableRow {
            label: label.into(),
            scores,
            n,
            stoi_by_snr,
            note,
        });
        self.report.extend(report);
        Ok(())
    }

    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn markdown(&self) -> String {
        let mut s = format!("### {}\n\n| System | STOI | ESTOI | NCM | N |", self.title);
        let mut sep = String::from("|---|---|---|---|---|");
        if let Some(h) = &self.note_header {
            let _ = write!(s, " {h} |");
            sep.push_str("---|");
        }
        let _ = writeln!(s, "\n{sep}");
        for r in &self.rows {
            let _ = write!(s, "| {} | {:.4} | {:.4} | {:.4} | {} |", r.label, r.scores.stoi, r.scores.estoi, r.scores.ncm, r.n);
            if self.note_header.is_some() {
                let _ = write!(s, " {} |", r.note);
            }
            s.push('\n');
        }
        if self.rows.iter().any(|r| r.stoi_by_snr.iter().any(Option::is_some)) {
            let _ = write!(s, "\nMean STOI by SNR:\n\n| System |");
            for snr in &self.snrs {
                let _ = write!(s, " {snr} dB |");
            }
            let _ = write!(s, "\n|---|{}\n", "---|".repeat(self.snrs.len()));
            for r in &self.rows {
                let _ = write!(s, "| {} |", r.label);
                for v in &r.stoi_by_snr {
                    match v {
                        Some(v) => {
                            let _ = write!(s, " {v:.4} |");
                        }
                        None => s.push_str(" - |"),
                    }
                }
                s.push('\n');
            }
        }
        if !self.report.failures.is_empty() {
            let _ = writeln!(s, "\n{} utterance evaluation(s) failed and were excluded:", self.report.failures.len());
            for f in &self.report.failures {
                let _ = writeln!(s, "- {} ({}): {}", f.id, f.condition, f.error);
            }
        }
        if !self.checkpoints.is_empty() {
            let _ = writeln!(s, "\nEnhancer checkpoints:\n");
            for (name, hash) in &self.checkpoints {
                let _ = writeln!(s, "- {name}: {hash}");
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("system,stoi,estoi,ncm,n");
        for snr in &self.snrs {
            let _ = write!(s, ",stoi_snr{snr}");
        }
        if self.note_header.is_some() {
            s.push_str(",note");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{:.6},{:.6},{:.6},{}", r.label, r.scores.stoi, r.scores.estoi, r.scores.ncm, r.n);
            for v in &r.stoi_by_snr {
                let _ = write!(s, ",{}", v.map(|v| format!("{v:.6}")).unwrap_or_default());
            }
            if self.note_header.is_some() {
                let _ = write!(s, ",{}", r.note);
            }
            s.push('\n');
        }
        s
    }

    /// Writes `<name>.md`, `<name>.csv` and `<name>_utterances.csv`.
    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>> {
        let files = [
            (format!("{}.md", self.name), self.markdown()),
            (format!("{}.csv", self.name), self.summary_csv()),
            (format!("{}_utterances.csv", self.name), self.report.to_csv()),
        ];
        let mut paths = Vec::new();
        for (f, body) in files {
            let p = out.join(f);
            write(&p, body.as_bytes())?;
            paths.push(p);
        }
        Ok(paths)
    }
}

fn run_system(
    table: &mut ExperimentTable,
    manifest: &Manifest,
    label: &str,
    system: System,
    input: InputCondition,
    note: String,
) -> Result<()> {
    log::info!("evaluating {label}");
    let report = evaluate_set(manifest, Split::Test, &system, input, label);
    table.add(label, report, note)
}

/// ECS on clean and on noisy test speech.
pub fn table1(manifest: &Manifest, ecs: &EcsNetwork) -> Result<ExperimentTable> {
    let mut t = ExperimentTable::new("table1", "ECS with clean and noisy speech", manifest);
    let sys = System::new(SystemKind::Ecs, ecs, None)?;
    run_system(&mut t, manifest, "ECS (clean)", sys, InputCondition::Clean, String::new())?;
    run_system(&mut t, manifest, "ECS (noisy)", sys, InputCondition::Noisy, String::new())?;
    Ok(t)
}

/// Joint AVSE-ECS training at each β of `cfg.betas` against the unenhanced ECS.
pub fn table2(manifest: &Manifest, ecs: &EcsNetwork, cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentTable> {
    let mut t = ExperimentTable::new("table2", "AVSE-ECS with different β values", manifest);
    t.note_header = Some("Loss log".into());
    let sys = System::new(SystemKind::Ecs, ecs, None)?;
    run_system(&mut t, manifest, "ECS", sys, InputCondition::Noisy, String::new())?;
    for &beta in &cfg.betas {
        let trained = train_enhancer(manifest, ecs, cfg, EnhancerRun { fusion: FusionMode::Cross, beta }, out)?;
        let sys = System::new(SystemKind::AvseEcs, ecs, Some(&trained.network))?;
        let label = format!("AVSE-ECS (β = {beta})");
        run_system(&mut t, manifest, &label, sys, InputCondition::Noisy, trained.loss_log.clone())?;
        if let Some(secs) = trained.train_seconds {
            t.train_seconds.push((trained.name.clone(), secs));
        }
        t.checkpoints.push((trained.name, trained.checkpoint_hash));
    }
    Ok(t)
}

pub const TABLE3_ROWS: [&str; 5] = [
    "ACE",
    "ECS",
    "ASE-ECS (pre-trained)",
    "AVSE-ECS (pre-trained)",
    "AVSE-ECS (joint)",
];

/// ACE, ECS, and the enhanced systems on noisy test speech.
pub fn table3(manifest: &Manifest, ecs: &EcsNetwork, cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentTable> {
    let mut t = ExperimentTable::new("table3", "Comparison of ACE, ECS, ASE-ECS and AVSE-ECS", manifest);
    t.note_header = Some("Loss log".into());
    let ace = System::new(SystemKind::Ace, ecs, None)?;
    run_system(&mut t, manifest, TABLE3_ROWS[0], ace, InputCondition::Noisy, String::new())?;
    let plain = System::new(SystemKind::Ecs, ecs, None)?;
    run_system(&mut t, manifest, TABLE3_ROWS[1], plain, InputCondition::Noisy, String::new())?;
    let runs = [
        (TABLE3_ROWS[2], SystemKind::AseEcs, EnhancerRun { fusion: FusionMode::SelfAttn, beta: 0.0 }),
        (TABLE3_ROWS[3], SystemKind::AvseEcs, EnhancerRun { fusion: FusionMode::Cross, beta: 0.0 }),
        (TABLE3_ROWS[4], SystemKind::AvseEcs, EnhancerRun { fusion: FusionMode::Cross, beta: cfg.joint_beta }),
    ];
    for (label, kind, run) in runs {
        let trained = train_enhancer(manifest, ecs, cfg, run, out)?;
        let sys = System::new(kind, ecs, Some(&trained.network))?;
        run_system(&mut t, manifest, label, sys, InputCondition::Noisy, trained.loss_log.clone())?;
        if let Some(secs) = trained.train_seconds {
            t.train_seconds.push((trained.name.clone(), secs));
        }
        t.checkpoints.push((trained.name, trained.checkpoint_hash));
    }
    Ok(t)
}
