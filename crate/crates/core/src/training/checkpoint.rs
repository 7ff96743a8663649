//! Plain-text checkpoint format.
//!
//! ```text
//! CNNSA v1 L=<L> s=<s> heights=<h1,h2,...> per_height=<m> nonlin=<relu|tanh>
//! <array name> <length> <v1> <v2> ...
//! ```
//!
//! Arrays follow [`ModelParams::arrays`] order. Fine-tuned embedding rows, if
//! any, follow as `embedding.<token>` arrays. Floats use the shortest
//! representation that parses back to the same bits.

use std::fs;
use std::path::Path;

use crate::embeddings::EmbeddingTable;
use crate::nn::{ModelConfig, ModelParams, Nonlinearity};
use crate::{Error, Result};

const MAGIC: &str = "CNNSA";
const VERSION: &str = "v1";
const EMBEDDING_PREFIX: &str = "embedding.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    /// Fine-tuned embedding rows; they take precedence over the vector file.
    pub embeddings: Option<EmbeddingTable>,
}

fn push_array(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(name);
    out.push(' ');
    out.push_str(&values.len().to_string());
    for v in values {
        out.push(' ');
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

pub fn header(model: &ModelParams) -> String {
    let heights: Vec<String> = model.heights().iter().map(|h| h.to_string()).collect();
    format!(
        "{MAGIC} {VERSION} L={} s={} heights={} per_height={} nonlin={}",
        model.classes(),
        model.dim(),
        heights.join(","),
        model.per_height(),
        model.nonlinearity
    )
}

impl Checkpoint {
    pub fn new(model: ModelParams, embeddings: Option<EmbeddingTable>) -> Self {
        Checkpoint { model, embeddings }
    }

    pub fn to_text(&self) -> Result<String> {
        let model = &self.model;
        let per = model.per_height();
        for h in model.heights() {
            let count = model.filters.iter().filter(|f| f.height() == h).count();
            if count != per {
                return Err(Error::Shape(format!(
                    "height {h} has {count} filters, checkpoint format needs {per} per height"
                )));
            }
        }
        let mut out = header(model);
        out.push('\n');
        for (name, values) in model.arrays() {
            push_array(&mut out, &name, values);
        }
        if let Some(table) = &self.embeddings {
            for w in table.words() {
                push_array(&mut out, &format!("{EMBEDDING_PREFIX}{w}"), table.get(w).expect("stored word"));
            }
        }
        Ok(out)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{origin}: empty checkpoint")))?;
        let hdr = parse_header(head).map_err(|m| Error::parse(origin, 1, m))?;

        let mut arrays: Vec<(usize, String, Vec<f64>)> = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let mut fields = line.split(' ');
            let name = fields.next().unwrap_or_default().to_owned();
            let len: usize = fields
                .next()
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| Error::parse(origin, lineno, "missing array length"))?;
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(origin, lineno, format!("malformed float `{f}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != len {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("`{name}` declares {len} values but has {}", values.len()),
                ));
            }
            arrays.push((lineno, name, values));
        }

        let config = ModelConfig {
            heights: hdr.heights.clone(),
            per_height: hdr.per_height,
            nonlinearity: hdr.nonlinearity,
            dropout: ModelConfig::default().dropout,
        };
        let mut model = ModelParams::zeros(&config, hdr.dim, hdr.classes)?;
        let expected: Vec<String> = model.arrays().into_iter().map(|(n, _)| n).collect();
        if arrays.len() < expected.len() {
            return Err(Error::Format(format!(
                "{origin}: expected {} parameter arrays, found {}",
                expected.len(),
                arrays.len()
            )));
        }
        let mut rest = arrays.split_off(expected.len());
        for ((slot, want), (lineno, name, values)) in model.arrays_mut().into_iter().zip(&expected).zip(&arrays) {
            if name != want {
                return Err(Error::parse(origin, *lineno, format!("expected array `{want}`, found `{name}`")));
            }
            if values.len() != slot.len() {
                return Err(Error::parse(
                    origin,
                    *lineno,
                    format!("`{name}` has {} values, model needs {}", values.len(), slot.len()),
                ));
            }
            slot.copy_from_slice(values);
        }

        let embeddings = if rest.is_empty() {
            None
        } else {
            let mut table = EmbeddingTable::new(hdr.dim, 0)?;
            for (lineno, name, values) in rest.drain(..) {
                let token = name
                    .strip_prefix(EMBEDDING_PREFIX)
                    .filter(|t| !t.is_empty())
                    .ok_or_else(|| Error::parse(origin, lineno, format!("unexpected array `{name}`")))?;
                table
                    .insert(token, &values)
                    .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
            }
            Some(table)
        };
        Ok(Checkpoint { model, embeddings })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Vector table for inference: `base` with fine-tuned rows applied.
    pub fn embedding_table(&self, base: &EmbeddingTable) -> Result<EmbeddingTable> {
        let mut table = base.clone();
        if let Some(tuned) = &self.embeddings {
            for w in tuned.words() {
                table.insert(w, tuned.get(w).expect("stored word"))?;
            }
        }
        Ok(table)
    }
}

#[derive(Debug)]
struct Header {
    classes: usize,
    dim: usize,
    heights: Vec<usize>,
    per_height: usize,
    nonlinearity: Nonlinearity,
}

fn parse_header(line: &str) -> std::result::Result<Header, String> {
    let fields: Vec<&str> = line.split(' ').collect();
    let [magic, version, l, s, heights, per, nonlin] = fields[..] else {
        return Err(format!("malformed header `{line}`"));
    };
    if magic != MAGIC {
        return Err(format!("not a checkpoint (starts with `{magic}`)"));
    }
    if version != VERSION {
        return Err(format!("unsupported checkpoint version `{version}`"));
    }
    fn value<'a>(field: &'a str, key: &str) -> std::result::Result<&'a str, String> {
        field
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| format!("expected `{key}=...`, found `{field}`"))
    }
    fn number(field: &str, key: &str) -> std::result::Result<usize, String> {
        value(field, key)?
            .parse()
            .map_err(|_| format!("`{key}` must be a non-negative integer"))
    }
    let heights = value(heights, "heights")?
        .split(',')
        .map(|h| h.parse::<usize>().map_err(|_| format!("bad filter height `{h}`")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Header {
        classes: number(l, "L")?,
        dim: number(s, "s")?,
        heights,
        per_height: number(per, "per_height")?,
        nonlinearity: value(nonlin, "nonlin")?.parse().map_err(|e: Error| e.to_string())?,
    })
}
