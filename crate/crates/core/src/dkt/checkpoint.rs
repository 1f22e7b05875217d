//! Plain-text model checkpoints.
//!
//! ```text
//! kt-career-dkt
//! format_version 1
//! n_skills <M>
//! hidden <H>
//! config <TrainConfig as single-line JSON>
//! array w_in <2M> <4H>
//! <one line per row, space-separated>
//! array w_rec <H> <4H>
//! array b_gates 1 <4H>
//! array w_out <H> <M>
//! array b_out 1 <M>
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load is exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::params::{DktParams, ARRAY_NAMES};
use super::train::{DktModel, TrainConfig};
use crate::error::{Error, Result};

const MAGIC: &str = "kt-career-dkt";
pub const FORMAT_VERSION: u32 = 1;

fn shapes(m: usize, h: usize) -> [(usize, usize); 5] {
    [(2 * m, 4 * h), (h, 4 * h), (1, 4 * h), (h, m), (1, m)]
}

pub fn save<W: Write>(model: &DktModel, mut writer: W) -> Result<()> {
    let p = &model.params;
    let (m, h) = (p.n_skills(), p.hidden());
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "format_version {FORMAT_VERSION}").unwrap();
    writeln!(out, "n_skills {m}").unwrap();
    writeln!(out, "hidden {h}").unwrap();
    writeln!(out, "config {}", serde_json::to_string(&model.config)?).unwrap();
    for ((name, values), (rows, cols)) in ARRAY_NAMES.iter().zip(p.arrays()).zip(shapes(m, h)) {
        writeln!(out, "array {name} {rows} {cols}").unwrap();
        for row in values.chunks(cols) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    writer.write_all(out.as_bytes())?;
    Ok(())
}

fn bad(message: impl Into<String>) -> Error {
    Error::format("checkpoint", message)
}

fn keyed<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected `{key}` line")))
}

pub fn load<R: BufRead>(reader: R) -> Result<DktModel> {
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().map(|l| l.trim_end());
    if it.next() != Some(MAGIC) {
        return Err(bad("not a knowledge-tracing checkpoint"));
    }
    let version: u32 = keyed(it.next(), "format_version")?
        .parse()
        .map_err(|_| bad("format_version"))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let m: usize = keyed(it.next(), "n_skills")?.parse().map_err(|_| bad("n_skills"))?;
    let h: usize = keyed(it.next(), "hidden")?.parse().map_err(|_| bad("hidden"))?;
    let config: TrainConfig = serde_json::from_str(keyed(it.next(), "config")?)?;

    let mut arrays: [Vec<f64>; 5] = Default::default();
    for ((name, slot), (rows, cols)) in ARRAY_NAMES.iter().zip(arrays.iter_mut()).zip(shapes(m, h)) {
        let header = format!("{name} {rows} {cols}");
        if keyed(it.next(), "array")? != header {
            return Err(bad(format!("expected array header `{header}`")));
        }
        for _ in 0..rows {
            let line = it.next().ok_or_else(|| bad(format!("{name}: truncated")))?;
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("{name}: bad value `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != cols {
                return Err(bad(format!("{name}: row has {} values, expected {cols}", row.len())));
            }
            slot.extend(row);
        }
    }
    if it.next() != Some("end") {
        return Err(bad("missing `end` marker"));
    }
    Ok(DktModel {
        params: DktParams::from_arrays(m, h, arrays)?,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let model = DktModel {
            params: DktParams::init(3, 4, 0.3, 5).unwrap(),
            config: TrainConfig::default(),
        };
        let mut buf = Vec::new();
        save(&model, &mut buf).unwrap();
        let back = load(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_other_versions() {
        let text = "kt-career-dkt\nformat_version 9\n";
        assert!(matches!(load(text.as_bytes()), Err(Error::Format { .. })));
    }
}
