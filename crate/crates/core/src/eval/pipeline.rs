use serde::{Deserialize, Serialize};

use super::report::{Failure, MetricReport, MetricRow};
use super::{score, tone_vocode, VocoderConfig};
use crate::ace::{ace_encode, Electrodogram};
use crate::avse::{enhance, EnhancerNetwork, FusionMode, VisualFeatureTrack};
use crate::data::{Manifest, ManifestEntry, Split};
use crate::ecs::EcsNetwork;
use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "ace")]
    Ace,
    #[serde(rename = "ecs")]
    Ecs,
    #[serde(rename = "ase-ecs")]
    AseEcs,
    #[serde(rename = "avse-ecs")]
    AvseEcs,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Ace => "ace",
            SystemKind::Ecs => "ecs",
            SystemKind::AseEcs => "ase-ecs",
            SystemKind::AvseEcs => "avse-ecs",
        }
    }

    fn enhancer_mode(self) -> Option<FusionMode> {
        match self {
            SystemKind::AseEcs => Some(FusionMode::SelfAttn),
            SystemKind::AvseEcs => Some(FusionMode::Cross),
            _ => None,
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [SystemKind::Ace, SystemKind::Ecs, SystemKind::AseEcs, SystemKind::AvseEcs]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown system `{s}` (expected ace, ecs, ase-ecs or avse-ecs)")))
    }
}

/// Which signal is fed to the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputCondition {
    Clean,
    Noisy,
}

/// A system together with the networks it needs.
#[derive(Debug, Clone, Copy)]
pub struct System<'a> {
    pub kind: SystemKind,
    pub ecs: &'a EcsNetwork,
    pub enhancer: Option<&'a EnhancerNetwork>,
}

impl<'a> System<'a> {
    pub fn new(kind: SystemKind, ecs: &'a EcsNetwork, enhancer: Option<&'a EnhancerNetwork>) -> Result<Self> {
        match (kind.enhancer_mode(), enhancer) {
            (None, _) => Ok(Self { kind, ecs, enhancer: None }),
            (Some(mode), Some(net)) if net.mode() == mode => Ok(Self { kind, ecs, enhancer }),
            (Some(mode), Some(net)) => Err(Error::Config(format!(
                "{} needs a `{mode}` enhancer, got a `{}` one",
                kind.name(),
                net.mode()
            ))),
            (Some(_), None) => Err(Error::Config(format!("{} needs an enhancer checkpoint", kind.name()))),
        }
    }

    pub fn electrodogram(&self, input: &Waveform, visual: Option<&VisualFeatureTrack>) -> Result<Electrodogram> {
        match (self.kind, self.enhancer) {
            (SystemKind::Ace, _) => ace_encode(input, self.ecs.corpus_peak),
            (SystemKind::Ecs, _) => self.ecs.encode(input),
            (_, Some(net)) => self.ecs.encode(&enhance(input, visual, net)?.waveform),
            (_, None) => unreachable!("checked in System::new"),
        }
    }

    /// Electrodogram, then tone vocoder at the input length.
    pub fn vocoded(&self, input: &Waveform, visual: Option<&VisualFeatureTrack>) -> Result<Waveform> {
        let e = self.electrodogram(input, visual)?;
        tone_vocode(&e, &VocoderConfig::default(), Some(input.len()))
    }

    fn needs_visual(&self) -> bool {
        self.enhancer.is_some_and(|n| n.mode().needs_visual())
    }
}

fn evaluate_one(manifest: &Manifest, e: &ManifestEntry, system: &System, input: InputCondition) -> Result<MetricRow> {
    let utt = manifest.load_utterance(e)?;
    let visual = if system.needs_visual() { Some(manifest.load_visual(e)?) } else { None };
    let signal = match input {
        InputCondition::Clean => &utt.clean,
        InputCondition::Noisy => &utt.noisy,
    };
    let proc = system.vocoded(signal, visual.as_ref())?;
    Ok(MetricRow {
        id: e.id.clone(),
        condition: String::new(),
        snr_db: match input {
            InputCondition::Clean => None,
            InputCondition::Noisy => Some(e.snr_db),
        },
        scores: score(&utt.clean, &proc)?,
    })
}

/// Run `system` on every utterance of `split` and score the vocoded output
/// against the clean speech. Rows are labelled `condition`; utterances that
/// fail are recorded in `failures` and left out of the means.
pub fn evaluate_set(
    manifest: &Manifest,
    split: Split,
    system: &System,
    input: InputCondition,
    condition: &str,
) -> MetricReport {
    let mut report = MetricReport::default();
    for e in manifest.split(split) {
        match evaluate_one(manifest, e, system, input) {
            Ok(mut row) => {
                row.condition = condition.to_string();
                report.push(row);
            }
            Err(err) => report.failures.push(Failure {
                id: e.id.clone(),
                condition: condition.to_string(),
                error: err.to_string(),
            }),
        }
    }
    if !report.failures.is_empty() {
        log::warn!("{condition}: {} utterance(s) failed and were excluded", report.failures.len());
    }
    report
}
