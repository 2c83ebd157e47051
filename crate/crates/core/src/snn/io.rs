//! Plain-text model files.
//!
//! Line 1 is a JSON header with the architecture. The remaining lines hold one
//! decimal number each: `n_hidden` input weights, `n_hidden` output weights,
//! then the output bias. Numbers are written in shortest round-trip form, so
//! reading a written model restores it bit for bit.

use serde::{Deserialize, Serialize};

use super::{Architecture, SnnModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "transporter-snn";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    arch: Architecture,
}

pub fn write_model(model: &SnnModel) -> Result<String> {
    model.validate()?;
    let header = Header {
        format: MODEL_FORMAT.into(),
        version: MODEL_FORMAT_VERSION,
        arch: model.arch,
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    out.push('\n');
    for w in model.w_in.iter().chain(&model.w_out).chain(std::iter::once(&model.b_out)) {
        out.push_str(&format!("{w}\n"));
    }
    Ok(out)
}

pub fn read_model(text: &str) -> Result<SnnModel> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty model file".into()))?;
    let header: Header =
        serde_json::from_str(head).map_err(|e| Error::Format(format!("model header: {e}")))?;
    if header.format != MODEL_FORMAT || header.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format {} v{}",
            header.format, header.version
        )));
    }
    header.arch.validate()?;
    let h = header.arch.n_hidden;
    let values = lines
        .enumerate()
        .map(|(i, line)| {
            line.trim().parse::<f64>().map_err(|e| Error::Parse {
                record: i,
                message: format!("weight line {}: {e}", i + 2),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != 2 * h + 1 {
        return Err(Error::Shape {
            what: "weight lines in model file",
            expected: 2 * h + 1,
            got: values.len(),
        });
    }
    let model = SnnModel {
        arch: header.arch,
        w_in: values[..h].to_vec(),
        w_out: values[h..2 * h].to_vec(),
        b_out: values[2 * h],
    };
    model.validate()?;
    Ok(model)
}
