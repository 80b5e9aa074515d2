//! Plain-text parameter checkpoints.
//!
//! ```text
//! wafer-params 1
//! <parameter count>
//! <name> <rank> <dim0> <dim1> ...
//! <values, space separated, shortest round-trip exponent form>
//! ...
//! ```
//!
//! Values are written with `{:e}`, which round-trips `f32` exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::network::ParamSet;
use super::tensor::Tensor;

const MAGIC: &str = "wafer-params 1";

pub fn write_params(params: &ParamSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
    writeln!(out, "{MAGIC}").map_err(io)?;
    writeln!(out, "{}", params.len()).map_err(io)?;
    for p in params.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "{} {} {}", p.name, dims.len(), dims.join(" ")).map_err(io)?;
        let mut first = true;
        for v in p.value.data() {
            if !first {
                out.write_all(b" ").map_err(io)?;
            }
            first = false;
            write!(out, "{v:e}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamSet<f32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params(&text)
}

pub fn parse_params(text: &str) -> Result<ParamSet<f32>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            detail: format!("unexpected end of checkpoint, expected {what}"),
        })
    };
    let (line, magic) = next("header")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            line,
            detail: format!("expected `{MAGIC}`"),
        });
    }
    let (line, count) = next("parameter count")?;
    let count: usize = count.trim().parse().map_err(|_| Error::Parse {
        line,
        detail: "bad parameter count".into(),
    })?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let (line, header) = next("parameter header")?;
        let parse_err = |detail: &str| Error::Parse {
            line,
            detail: detail.to_string(),
        };
        let mut fields = header.split_whitespace();
        let name = fields.next().ok_or_else(|| parse_err("missing name"))?;
        let rank: usize = fields
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| parse_err("bad rank"))?;
        let shape: Vec<usize> = fields
            .map(|d| d.parse().map_err(|_| parse_err("bad dimension")))
            .collect::<Result<_>>()?;
        if shape.len() != rank {
            return Err(parse_err("rank does not match dimension count"));
        }
        let (vline, values) = next("parameter values")?;
        let data: Vec<f32> = values
            .split_whitespace()
            .map(|v| {
                v.parse().map_err(|_| Error::Parse {
                    line: vline,
                    detail: format!("bad value `{v}`"),
                })
            })
            .collect::<Result<_>>()?;
        let value = Tensor::new(shape, data).map_err(|e| Error::Parse {
            line: vline,
            detail: e.to_string(),
        })?;
        params.add(name, value);
    }
    Ok(params)
}
