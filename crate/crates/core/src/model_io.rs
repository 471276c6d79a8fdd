//! Versioned plain-text model files.
//!
//! ```text
//! stgru 1
//! embeddings random:32:7
//! dims 32 16
//! gru trainable
//! [gru.w_xz 16 32]
//! <16 rows of 32 values>
//! ...
//! lateral_column 16            (optional, followed by six lateral.* blocks)
//! head target 3 trainable lateral=none positive,neutral,negative
//! [head.target.w_yh 3 16]
//! [head.target.b_y 1 3]
//! [head.target.u_lat 3 16]     (only when the head has a lateral matrix)
//! ```
//!
//! Values are written with 17 significant digits so that every `f64`
//! survives a round trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::embedding::{load_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::gru::{GruModel, GruParams, Head, OutputHead, GRU_BLOCK_NAMES};
use crate::numerics::{Matrix, Vector};

pub const MODEL_HEADER: &str = "stgru 1";

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_block(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    let _ = writeln!(out, "[{name} {rows} {cols}]");
    for r in 0..rows {
        let row: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    write_block(out, name, m.rows(), m.cols(), m.as_slice());
}

fn flag(frozen: bool) -> &'static str {
    if frozen {
        "frozen"
    } else {
        "trainable"
    }
}

pub fn model_to_string(model: &GruModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let _ = writeln!(out, "embeddings {}", model.embeddings.id());
    let _ = writeln!(out, "dims {} {}", model.input_size(), model.hidden_size());
    let _ = writeln!(out, "gru {}", flag(model.gru_frozen));
    for (name, m) in GRU_BLOCK_NAMES.iter().zip(model.params.blocks()) {
        write_matrix(&mut out, &format!("gru.{name}"), m);
    }
    if let Some(col) = &model.lateral_column {
        let _ = writeln!(out, "lateral_column {}", col.hidden_size);
        for (name, m) in GRU_BLOCK_NAMES.iter().zip(col.blocks()) {
            write_matrix(&mut out, &format!("lateral.{name}"), m);
        }
    }
    for h in &model.heads {
        let lateral = match (&h.lateral, h.lateral_frozen) {
            (None, _) => "none",
            (Some(_), false) => "trainable",
            (Some(_), true) => "frozen",
        };
        let _ = writeln!(
            out,
            "head {} {} {} lateral={} {}",
            h.name,
            h.classes(),
            flag(h.frozen),
            lateral,
            h.class_names.join(",")
        );
        write_matrix(&mut out, &format!("head.{}.w_yh", h.name), &h.output.w_yh);
        write_block(&mut out, &format!("head.{}.b_y", h.name), 1, h.classes(), h.output.b_y.as_slice());
        if let Some(l) = &h.lateral {
            write_matrix(&mut out, &format!("head.{}.u_lat", h.name), l);
        }
    }
    out
}

pub fn save_model(model: &GruModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

/// Loads a model, resolving its embedding identifier with [`load_embeddings`].
pub fn load_model(path: impl AsRef<Path>) -> Result<GruModel> {
    load_model_with(path, |id| load_embeddings(id).map(Arc::new))
}

pub fn load_model_with<F>(path: impl AsRef<Path>, resolve: F) -> Result<GruModel>
where
    F: FnOnce(&str) -> Result<Arc<EmbeddingTable>>,
{
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(path, &text, resolve)
}

pub(crate) struct Lines<'a> {
    path: &'a Path,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(path: &'a Path, text: &'a str) -> Self {
        Lines {
            path,
            lines: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    pub(crate) fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.last, message)
    }

    pub(crate) fn next(&mut self) -> Option<&'a str> {
        let (i, line) = self.lines.next()?;
        self.last = i + 1;
        Some(line)
    }

    pub(crate) fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| Error::parse(self.path, self.last + 1, format!("unexpected end of file, expected {what}")))
    }

    pub(crate) fn peek(&mut self) -> Option<&'a str> {
        self.lines.peek().map(|(_, l)| *l)
    }

    /// `key rest…` line; returns `rest`.
    pub(crate) fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.expect(key)?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ => Err(self.err(format!("expected `{key} …`, found {line:?}"))),
        }
    }

    pub(crate) fn parse_f64(&self, s: &str) -> Result<f64> {
        s.parse::<f64>().map_err(|_| self.err(format!("invalid number {s:?}")))
    }

    pub(crate) fn parse_usize(&self, s: &str) -> Result<usize> {
        s.parse::<usize>().map_err(|_| self.err(format!("invalid integer {s:?}")))
    }

    /// `[name rows cols]` followed by `rows` lines of `cols` values.
    pub(crate) fn block(&mut self, name: &str) -> Result<(usize, usize, Vec<f64>)> {
        let line = self.expect(name)?;
        let inner = line
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .ok_or_else(|| self.err(format!("expected block [{name} …], found {line:?}")))?;
        let parts: Vec<&str> = inner.split(' ').collect();
        if parts.len() != 3 || parts[0] != name {
            return Err(self.err(format!("expected block [{name} rows cols], found {line:?}")));
        }
        let rows = self.parse_usize(parts[1])?;
        let cols = self.parse_usize(parts[2])?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = self.expect("matrix row")?;
            let before = values.len();
            for v in row.split(' ').filter(|v| !v.is_empty()) {
                values.push(self.parse_f64(v)?);
            }
            if values.len() - before != cols {
                return Err(self.err(format!("block {name}: expected {cols} values, found {}", values.len() - before)));
            }
        }
        Ok((rows, cols, values))
    }

    pub(crate) fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let (r, c, values) = self.block(name)?;
        if r != rows || c != cols {
            return Err(self.err(format!("block {name} is {r}×{c}, expected {rows}×{cols}")));
        }
        Matrix::from_vec(r, c, values)
    }
}

fn parse_flag(lines: &Lines, s: &str) -> Result<bool> {
    match s {
        "frozen" => Ok(true),
        "trainable" => Ok(false),
        other => Err(lines.err(format!("expected frozen|trainable, found {other:?}"))),
    }
}

fn parse_gru(lines: &mut Lines, prefix: &str, hidden: usize, input: usize) -> Result<GruParams> {
    let mut p = GruParams::zeros(hidden, input);
    for (name, m) in GRU_BLOCK_NAMES.iter().zip(p.blocks_mut()) {
        let cols = if name.starts_with("w_x") { input } else { hidden };
        *m = lines.matrix(&format!("{prefix}.{name}"), hidden, cols)?;
    }
    Ok(p)
}

pub fn model_from_str<F>(path: &Path, text: &str, resolve: F) -> Result<GruModel>
where
    F: FnOnce(&str) -> Result<Arc<EmbeddingTable>>,
{
    let mut lines = Lines::new(path, text);
    let header = lines.expect("header")?;
    if header != MODEL_HEADER {
        return Err(lines.err(format!("unsupported model header {header:?}")));
    }
    let embedding_id = lines.keyed("embeddings")?;
    let dims: Vec<&str> = lines.keyed("dims")?.split(' ').collect();
    if dims.len() != 2 {
        return Err(lines.err("dims line needs <input> <hidden>"));
    }
    let input = lines.parse_usize(dims[0])?;
    let hidden = lines.parse_usize(dims[1])?;
    let flag_text = lines.keyed("gru")?;
    let gru_frozen = parse_flag(&lines, flag_text)?;
    let params = parse_gru(&mut lines, "gru", hidden, input)?;

    let mut lateral_column = None;
    if lines.peek().is_some_and(|l| l.starts_with("lateral_column ")) {
        let h_text = lines.keyed("lateral_column")?;
        let h = lines.parse_usize(h_text)?;
        lateral_column = Some(parse_gru(&mut lines, "lateral", h, input)?);
    }

    let mut heads = Vec::new();
    while let Some(line) = lines.peek() {
        if line.is_empty() {
            lines.next();
            continue;
        }
        let rest = lines.keyed("head")?;
        let parts: Vec<&str> = rest.split(' ').collect();
        if parts.len() != 5 {
            return Err(lines.err("head line needs <name> <classes> <flag> lateral=<mode> <class,names>"));
        }
        let name = parts[0].to_string();
        let classes = lines.parse_usize(parts[1])?;
        let frozen = parse_flag(&lines, parts[2])?;
        let (has_lateral, lateral_frozen) = match parts[3] {
            "lateral=none" => (false, false),
            "lateral=trainable" => (true, false),
            "lateral=frozen" => (true, true),
            other => return Err(lines.err(format!("bad lateral mode {other:?}"))),
        };
        let class_names: Vec<String> = parts[4].split(',').map(str::to_string).collect();
        if class_names.len() != classes {
            return Err(lines.err(format!("head {name} lists {} class names for {classes} classes", class_names.len())));
        }
        let w_yh = lines.matrix(&format!("head.{name}.w_yh"), classes, hidden)?;
        let b_y = lines.matrix(&format!("head.{name}.b_y"), 1, classes)?;
        let lateral = if has_lateral {
            let col = lateral_column
                .as_ref()
                .ok_or_else(|| lines.err(format!("head {name} has a lateral matrix but the model has no lateral column")))?;
            Some(lines.matrix(&format!("head.{name}.u_lat"), classes, col.hidden_size)?)
        } else {
            None
        };
        heads.push(Head {
            name,
            class_names,
            output: OutputHead {
                w_yh,
                b_y: Vector::new(b_y.as_slice().to_vec()),
            },
            lateral,
            frozen,
            lateral_frozen,
        });
    }

    let model = GruModel {
        params,
        gru_frozen,
        lateral_column,
        heads,
        embeddings: resolve(embedding_id)?,
    };
    model.validate()?;
    Ok(model)
}
