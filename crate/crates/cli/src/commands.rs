use std::path::{Path, PathBuf};

use avse_ci::ace::elec_file::{read_any, write_binary, write_text};
use avse_ci::ace::{ace_encode, Electrodogram, DEFAULT_REFERENCE_PEAK};
use avse_ci::avse::{enhance, read_visf, EnhancerNetwork};
use avse_ci::data::{build_corpus, CorpusConfig, Manifest, Split};
use avse_ci::ecs::{pretrain, EcsNetwork, EcsTrainConfig, FrameSet};
use avse_ci::eval::{evaluate_set, tone_vocode, InputCondition, System, VocoderConfig};
use avse_ci::nn::Checkpoint;
use avse_ci::signal::{read_wav, resample, write_wav, Waveform, SAMPLE_RATE};
use avse_ci::training::{joint_train, log_csv, JointConfig, LossWeights};
use avse_ci::{Error, Result};

use crate::cli::*;
use crate::config::{load_config_file, out_path, resolve};
use crate::experiments::{self, ExperimentConfig};
use crate::plot::{electrodogram_csv, electrodogram_pgm};
use crate::run::RunRecord;

/// Command name and the directory its `run.json` goes to.
fn describe(cmd: &Command) -> (&'static str, PathBuf) {
    let parent = |p: &Path| {
        let p = out_path(p);
        p.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    match cmd {
        Command::Corpus(CorpusCmd::Build(a)) => ("corpus build", out_path(&a.out)),
        Command::Ace(AceCmd::Encode(a)) => ("ace encode", parent(&a.out)),
        Command::Ecs(EcsCmd::Train(a)) => ("ecs train", out_path(&a.out)),
        Command::Ecs(EcsCmd::Encode(a)) => ("ecs encode", parent(&a.out)),
        Command::Avse(AvseCmd::Train(a)) => ("avse train", out_path(&a.out)),
        Command::Enhance(a) => ("enhance", parent(&a.out)),
        Command::Vocode(a) => ("vocode", parent(&a.out)),
        Command::Eval(a) => ("eval", out_path(&a.out)),
        Command::Experiment(ExperimentCmd::Table1(a)) => ("experiment table1", out_path(&a.out)),
        Command::Experiment(ExperimentCmd::Table2(a)) => ("experiment table2", out_path(&a.out)),
        Command::Experiment(ExperimentCmd::Table3(a)) => ("experiment table3", out_path(&a.out)),
        Command::Plot(PlotCmd::Electrodogram(a)) => ("plot electrodogram", parent(&a.out)),
    }
}

/// Run a parsed command, write `run.json`, and return the process exit code.
pub fn execute(cli: &Cli, argv: Vec<String>) -> i32 {
    let (name, run_dir) = describe(&cli.command);
    let mut rec = RunRecord::new(name, argv, cli.seed.unwrap_or(0));
    let result = dispatch(cli, &mut rec);
    rec.finish(&result);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    match rec.write(&run_dir) {
        Ok(p) => log::info!("wrote {}", p.display()),
        Err(e) => eprintln!("warning: could not write run.json: {e}"),
    }
    rec.exit_code
}

fn load_manifest(dir: &Path, rec: &mut RunRecord) -> Result<Manifest> {
    rec.input(dir);
    let p = if dir.is_dir() { dir.join("manifest.json") } else { dir.to_path_buf() };
    Manifest::load(p)
}

fn load_ecs(dir: &Path, rec: &mut RunRecord) -> Result<EcsNetwork> {
    rec.input(dir);
    EcsNetwork::from_checkpoint(&Checkpoint::load(dir)?)
}

fn load_enhancer(dir: &Path, rec: &mut RunRecord) -> Result<EnhancerNetwork> {
    rec.input(dir);
    EnhancerNetwork::from_checkpoint(&Checkpoint::load(dir)?)
}

fn load_wav(p: &Path, rec: &mut RunRecord) -> Result<Waveform> {
    rec.input(p);
    let w = read_wav(p)?;
    Ok(if w.sample_rate_hz == SAMPLE_RATE { w } else { resample(&w, SAMPLE_RATE) })
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn save_elec(p: &Path, e: &Electrodogram, format: ElecFormat, rec: &mut RunRecord) -> Result<()> {
    ensure_parent(p)?;
    match format {
        ElecFormat::Text => write_text(p, e)?,
        ElecFormat::Binary => write_binary(p, e)?,
    }
    rec.output(p);
    Ok(())
}

fn write_file(p: &Path, bytes: &[u8], rec: &mut RunRecord) -> Result<()> {
    ensure_parent(p)?;
    std::fs::write(p, bytes).map_err(|e| Error::io(p, e))?;
    rec.output(p);
    Ok(())
}

fn dispatch(cli: &Cli, rec: &mut RunRecord) -> Result<()> {
    let file = match &cli.config {
        Some(p) => {
            rec.input(p);
            Some(load_config_file(p)?)
        }
        None => None,
    };
    let file = file.as_ref();
    match &cli.command {
        Command::Corpus(CorpusCmd::Build(a)) => {
            let mut cfg: CorpusConfig = resolve(file)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.n_train = a.n_train.unwrap_or(cfg.n_train);
            cfg.n_val = a.n_val.unwrap_or(cfg.n_val);
            cfg.n_test = a.n_test.unwrap_or(cfg.n_test);
            rec.seed = cfg.seed;
            rec.config = serde_json::to_value(&cfg)?;
            let out = out_path(&a.out);
            let m = build_corpus(&out, &cfg)?;
            log::info!("built {} utterances in {}", m.entries.len(), out.display());
            rec.output(&out.join("manifest.json"));
            Ok(())
        }
        Command::Ace(AceCmd::Encode(a)) => {
            let peak = match (a.peak, &a.ecs) {
                (Some(p), _) => p,
                (None, Some(dir)) => load_ecs(dir, rec)?.corpus_peak,
                (None, None) => DEFAULT_REFERENCE_PEAK,
            };
            if !(peak.is_finite() && peak > 0.0) {
                return Err(Error::Config(format!("--peak must be positive, got {peak}")));
            }
            rec.config = serde_json::json!({ "peak": peak });
            let w = load_wav(&a.input, rec)?;
            save_elec(&out_path(&a.out), &ace_encode(&w, peak)?, a.format, rec)
        }
        Command::Ecs(EcsCmd::Train(a)) => {
            let mut cfg: EcsTrainConfig = resolve(file)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.lr = a.lr.unwrap_or(cfg.lr);
            rec.seed = cfg.seed;
            rec.config = serde_json::to_value(&cfg)?;
            let m = load_manifest(&a.corpus, rec)?;
            let clean = m
                .split(Split::Train)
                .chain(m.split(Split::Val))
                .map(|e| m.load_utterance(e).map(|u| u.clean))
                .collect::<Result<Vec<_>>>()?;
            let (net, history, adam) = pretrain(&clean, &cfg)?;
            let test: Vec<Waveform> = m.split(Split::Test).map(|e| m.load_utterance(e).map(|u| u.clean)).collect::<Result<_>>()?;
            if !test.is_empty() {
                let fs = FrameSet::from_corpus(&test, net.corpus_peak)?;
                let idx: Vec<usize> = (0..fs.frames()).collect();
                log::info!("held-out L1 gap to ACE envelopes: {:.5}", fs.l1_gap(&net, &idx)?);
            }
            let out = out_path(&a.out);
            net.to_checkpoint(cfg.seed, serde_json::to_value(&cfg)?, Some(adam), serde_json::to_value(&history)?)
                .save(&out)?;
            rec.output(&out.join("manifest.json"));
            Ok(())
        }
        Command::Ecs(EcsCmd::Encode(a)) => {
            let net = load_ecs(&a.ecs, rec)?;
            let w = load_wav(&a.input, rec)?;
            save_elec(&out_path(&a.out), &net.encode(&w)?, a.format, rec)
        }
        Command::Avse(AvseCmd::Train(a)) => {
            let mut cfg: JointConfig = resolve(file)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(f) = a.fusion {
                cfg.fusion = f.into();
            }
            cfg.weights = LossWeights::new(a.alpha.unwrap_or(cfg.weights.alpha), a.beta.unwrap_or(cfg.weights.beta))?;
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.lr = a.lr.unwrap_or(cfg.lr);
            cfg.crop_frames = a.crop_frames.unwrap_or(cfg.crop_frames);
            if a.max_utterances.is_some() {
                cfg.max_utterances = a.max_utterances;
            }
            cfg.validate()?;
            rec.seed = cfg.seed;
            rec.config = serde_json::to_value(&cfg)?;
            let m = load_manifest(&a.corpus, rec)?;
            let ecs = load_ecs(&a.ecs, rec)?;
            let outcome = joint_train(&m, &ecs, &cfg)?;
            let out = out_path(&a.out);
            outcome.checkpoint.save(&out)?;
            rec.output(&out.join("manifest.json"));
            write_file(&out.join("loss.csv"), log_csv(&outcome.log).as_bytes(), rec)
        }
        Command::Enhance(a) => {
            let net = load_enhancer(&a.enhancer, rec)?;
            let visual = match (&a.visual, net.mode().needs_visual()) {
                (Some(p), true) => {
                    rec.input(p);
                    Some(read_visf(p)?)
                }
                (None, true) => {
                    return Err(Error::Config(format!("a `{}` enhancer needs --visual", net.mode())));
                }
                (_, false) => None,
            };
            let w = load_wav(&a.input, rec)?;
            let out = out_path(&a.out);
            ensure_parent(&out)?;
            write_wav(&out, &enhance(&w, visual.as_ref(), &net)?.waveform)?;
            rec.output(&out);
            Ok(())
        }
        Command::Vocode(a) => {
            rec.input(&a.input);
            let e = read_any(&a.input)?;
            let out = out_path(&a.out);
            ensure_parent(&out)?;
            write_wav(&out, &tone_vocode(&e, &VocoderConfig::default(), a.length)?)?;
            rec.output(&out);
            Ok(())
        }
        Command::Eval(a) => {
            let m = load_manifest(&a.corpus, rec)?;
            let ecs = load_ecs(&a.ecs, rec)?;
            let enh = match &a.enhancer {
                Some(p) => Some(load_enhancer(p, rec)?),
                None => None,
            };
            let system = System::new(a.system, &ecs, enh.as_ref())?;
            let (split, input) = (
                match a.split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Val => Split::Val,
                    SplitArg::Test => Split::Test,
                },
                match a.input {
                    InputArg::Clean => InputCondition::Clean,
                    InputArg::Noisy => InputCondition::Noisy,
                },
            );
            rec.config = serde_json::json!({ "system": a.system, "split": split, "input": input });
            let label = a.system.name();
            let report = evaluate_set(&m, split, &system, input, label);
            if report.rows.is_empty() {
                return Err(Error::Data(format!("no utterance of the {split:?} split could be scored")));
            }
            let out = out_path(&a.out);
            write_file(&out.join("metrics.csv"), report.to_csv().as_bytes(), rec)?;
            write_file(&out.join("metrics.md"), report.to_markdown(label).as_bytes(), rec)
        }
        Command::Experiment(which) => {
            let (a, name) = match which {
                ExperimentCmd::Table1(a) => (a, 1),
                ExperimentCmd::Table2(a) => (a, 2),
                ExperimentCmd::Table3(a) => (a, 3),
            };
            let mut cfg: ExperimentConfig = resolve(file)?;
            if let Some(s) = cli.seed {
                cfg.joint.seed = s;
            }
            cfg.joint.epochs = a.epochs.unwrap_or(cfg.joint.epochs);
            cfg.joint.lr = a.lr.unwrap_or(cfg.joint.lr);
            if let Some(b) = &a.betas {
                cfg.betas = b.clone();
            }
            if a.max_utterances.is_some() {
                cfg.joint.max_utterances = a.max_utterances;
            }
            cfg.reuse_checkpoints |= a.reuse;
            cfg.joint.validate()?;
            rec.seed = cfg.joint.seed;
            rec.config = serde_json::to_value(&cfg)?;
            let m = load_manifest(&a.corpus, rec)?;
            let ecs = load_ecs(&a.ecs, rec)?;
            let out = out_path(&a.out);
            let table = match name {
                1 => experiments::table1(&m, &ecs)?,
                2 => experiments::table2(&m, &ecs, &cfg, &out)?,
                _ => experiments::table3(&m, &ecs, &cfg, &out)?,
            };
            for p in table.write(&out)? {
                rec.output(&p);
            }
            print!("{}", table.markdown());
            Ok(())
        }
        Command::Plot(PlotCmd::Electrodogram(a)) => {
            rec.input(&a.input);
            let e = read_any(&a.input)?;
            let out = out_path(&a.out);
            let with_ext = |ext: &str| {
                let mut s = out.as_os_str().to_owned();
                s.push(ext);
                PathBuf::from(s)
            };
            write_file(&with_ext(".pgm"), &electrodogram_pgm(&e), rec)?;
            write_file(&with_ext(".csv"), electrodogram_csv(&e).as_bytes(), rec)
        }
    }
}

