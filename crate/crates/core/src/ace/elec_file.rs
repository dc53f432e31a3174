//! Electrodogram files.
//!
//! Text form: a header line `ELEC v1 channels=22 frame_rate=500 frames=<T>`
//! followed by one CSV row of channel values per frame. Binary form: row-major
//! little-endian f32 payload plus a JSON sidecar carrying the same header fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Electrodogram;
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElecHeader {
    pub format: ElecTag,
    pub version: u32,
    pub channels: usize,
    pub frame_rate: f64,
    pub frames: usize,
    #[serde(default)]
    pub n_active: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ElecTag {
    #[serde(rename = "ELEC")]
    Elec,
}

/// Upper bound on decoded cells, so hostile headers cannot force huge allocations.
const MAX_CELLS: usize = 1 << 28;

impl ElecHeader {
    fn of(e: &Electrodogram) -> Self {
        Self {
            format: ElecTag::Elec,
            version: 1,
            channels: e.channels(),
            frame_rate: e.frame_rate,
            frames: e.frames(),
            n_active: Some(e.n_active),
        }
    }

    fn line(&self) -> String {
        format!(
            "ELEC v{} channels={} frame_rate={} frames={}",
            self.version, self.channels, self.frame_rate, self.frames
        )
    }

    fn parse_line(line: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("ELEC header: {m}"));
        let mut it = line.split_whitespace();
        if it.next() != Some("ELEC") {
            return Err(bad("missing ELEC tag"));
        }
        if it.next() != Some("v1") {
            return Err(bad("unsupported version"));
        }
        let (mut channels, mut rate, mut frames) = (None, None, None);
        for kv in it {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            match k {
                "channels" => channels = Some(v.parse::<usize>().map_err(|_| bad("channels"))?),
                "frame_rate" => rate = Some(v.parse::<f64>().map_err(|_| bad("frame_rate"))?),
                "frames" => frames = Some(v.parse::<usize>().map_err(|_| bad("frames"))?),
                _ => return Err(bad(&format!("unknown key `{k}`"))),
            }
        }
        let h = Self {
            format: ElecTag::Elec,
            version: 1,
            channels: channels.ok_or_else(|| bad("missing channels"))?,
            frame_rate: rate.ok_or_else(|| bad("missing frame_rate"))?,
            frames: frames.ok_or_else(|| bad("missing frames"))?,
            n_active: None,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Format(format!("ELEC version {}", self.version)));
        }
        if self.channels == 0 {
            return Err(Error::Format("ELEC header: zero channels".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::Format("ELEC header: frame_rate must be positive".into()));
        }
        if self.channels.checked_mul(self.frames).map_or(true, |c| c > MAX_CELLS) {
            return Err(Error::Format("ELEC header: too many cells".into()));
        }
        Ok(())
    }
}

fn check_value(v: f64) -> Result<f64> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Format(format!("electrodogram value {v} outside [0, 1]")))
    }
}

fn assemble(h: &ElecHeader, data: Vec<f64>) -> Electrodogram {
    let values = FrameMatrix::from_vec(h.frames, h.channels, data);
    let n_active = h.n_active.unwrap_or_else(|| {
        values
            .rows()
            .map(|r| r.iter().filter(|&&v| v != 0.0).count())
            .max()
            .unwrap_or(0)
    });
    Electrodogram {
        values,
        n_active,
        frame_rate: h.frame_rate,
    }
}

pub fn encode_text(e: &Electrodogram) -> String {
    let mut s = ElecHeader::of(e).line();
    s.push('\n');
    for row in e.values.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_text(text: &str) -> Result<Electrodogram> {
    let mut lines = text.lines();
    let h = ElecHeader::parse_line(lines.next().ok_or_else(|| Error::Format("empty ELEC file".into()))?)?;
    let mut data = Vec::with_capacity(h.channels * h.frames);
    let mut rows = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == h.frames {
            return Err(Error::Format("more rows than declared frames".into()));
        }
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad number `{cell}`", rows + 1)))?;
            data.push(check_value(v)?);
        }
        if data.len() - before != h.channels {
            return Err(Error::Format(format!(
                "row {}: expected {} values, got {}",
                rows + 1,
                h.channels,
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != h.frames {
        return Err(Error::Format(format!("declared {} frames, found {rows}", h.frames)));
    }
    Ok(assemble(&h, data))
}

pub fn encode_binary(e: &Electrodogram) -> (Vec<u8>, String) {
    let payload = e.values.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    let sidecar = serde_json::to_string_pretty(&ElecHeader::of(e)).expect("header serializes");
    (payload, sidecar)
}

pub fn decode_binary(payload: &[u8], sidecar: &str) -> Result<Electrodogram> {
    let h: ElecHeader = serde_json::from_str(sidecar).map_err(|e| Error::Format(format!("ELEC sidecar: {e}")))?;
    h.validate()?;
    let cells = h.channels * h.frames;
    if payload.len() != cells * 4 {
        return Err(Error::Format(format!(
            "ELEC payload holds {} bytes, header implies {}",
            payload.len(),
            cells * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| check_value(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&h, data))
}

pub fn write_text(path: impl AsRef<Path>, e: &Electrodogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_text(e)).map_err(|err| Error::io(path, err))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<Electrodogram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format("ELEC file is not UTF-8".into()))?;
    decode_text(text)
}

/// Writes `<path>` (payload) and `<path>.json` (sidecar).
pub fn write_binary(path: impl AsRef<Path>, e: &Electrodogram) -> Result<()> {
    let path = path.as_ref();
    let (payload, sidecar) = encode_binary(e);
    std::fs::write(path, payload).map_err(|err| Error::io(path, err))?;
    let side = sidecar_path(path);
    std::fs::write(&side, sidecar).map_err(|err| Error::io(side, err))
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<Electrodogram> {
    let path = path.as_ref();
    let payload = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let sidecar = std::fs::read_to_string(&side).map_err(|e| Error::io(side, e))?;
    decode_binary(&payload, &sidecar)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Read either form: text if the file starts with the `ELEC` tag, binary otherwise.
pub fn read_any(path: impl AsRef<Path>) -> Result<Electrodogram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"ELEC ") {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format("ELEC file is not UTF-8".into()))?;
        decode_text(text)
    } else {
        read_binary(path)
    }
}
