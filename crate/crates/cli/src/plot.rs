use std::fmt::Write as _;

use avse_ci::ace::{lgf_default, Electrodogram};

/// Pixel value of one stimulation magnitude.
pub fn pixel(v: f64) -> u8 {
    (255.0 * lgf_default(v)).round().clamp(0.0, 255.0) as u8
}

/// Binary greyscale PGM: one row per channel (channel 0 on top), one column per frame.
pub fn electrodogram_pgm(e: &Electrodogram) -> Vec<u8> {
    let (w, h) = (e.frames(), e.channels());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for c in 0..h {
        out.extend((0..w).map(|t| pixel(e.values.get(t, c))));
    }
    out
}

/// Raw values, one row per frame.
pub fn electrodogram_csv(e: &Electrodogram) -> String {
    let mut s = String::from("frame");
    for c in 0..e.channels() {
        let _ = write!(s, ",ch{}", c + 1);
    }
    s.push('\n');
    for t in 0..e.frames() {
        let _ = write!(s, "{t}");
        for v in e.values.row(t) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
