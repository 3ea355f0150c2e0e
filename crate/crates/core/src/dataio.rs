//! File formats: prediction CSV, hierarchy text, JSON reports.
//!
//! Prediction files (optionally gzip-compressed, detected by magic bytes):
//!
//! ```text
//! #hier-risk-predictions v1
//! truth,<class1>,...,<classK>
//! <label>,<p1>,...,<pK>
//! ```
//!
//! UTF-8, LF line endings, `.` as decimal separator. Probabilities are
//! written in shortest round-trip form. JSON reports print floats with 17
//! significant digits (`%.17g`), so output is byte-stable.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::predictions::PredictionSet;
use crate::taxonomy::{parse_taxonomy, Taxonomy};

pub const PREDICTION_MAGIC: &str = "#hier-risk-predictions v1";

fn read_maybe_gzip(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut text = String::new();
    if bytes.starts_with(&[0x1f, 0x8b]) {
        GzDecoder::new(bytes.as_slice()).read_to_string(&mut text)?;
    } else {
        text = String::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    }
    Ok(text)
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    parse_taxonomy(&read_maybe_gzip(path.as_ref())?)
}

pub fn save_taxonomy(tax: &Taxonomy, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tax.to_hierarchy_text())?;
    Ok(())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionSet> {
    parse_predictions(&read_maybe_gzip(path.as_ref())?)
}

/// Parse prediction-file contents. Errors carry 1-based line and column.
pub fn parse_predictions(text: &str) -> Result<PredictionSet> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == PREDICTION_MAGIC => {}
        _ => return Err(Error::malformed(1, 1, format!("expected `{PREDICTION_MAGIC}`"))),
    }
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::malformed(2, 1, "missing header line"))?;
    let mut fields = header.split(',');
    if fields.next() != Some("truth") {
        return Err(Error::malformed(2, 1, "header must start with `truth`"));
    }
    let class_names: Vec<String> = fields.map(str::to_owned).collect();
    let k = class_names.len();
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(k);
    let mut col = "truth,".len() + 1;
    for (j, name) in class_names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::malformed(2, col, "empty class name"));
        }
        if index.insert(name.as_str(), j).is_some() {
            return Err(Error::malformed(2, col, format!("duplicate class `{name}`")));
        }
        col += name.len() + 1;
    }
    if k < 2 {
        return Err(Error::malformed(2, 1, "need at least 2 classes"));
    }

    let mut probs = Vec::new();
    let mut truth = Vec::new();
    let mut row_lines = Vec::new();
    for (line, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        let mut fields = raw.split(',');
        let label = fields.next().unwrap_or_default();
        let t = *index
            .get(label)
            .ok_or_else(|| Error::malformed(line, 1, format!("unknown truth label `{label}`")))?;
        let mut col = label.len() + 2;
        let mut count = 0;
        for field in fields {
            count += 1;
            if count > k {
                return Err(Error::malformed(line, col, format!("more than {k} probabilities")));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::malformed(line, col, format!("not a number: `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::malformed(line, col, format!("non-finite value `{field}`")));
            }
            probs.push(v);
            col += field.len() + 1;
        }
        if count != k {
            return Err(Error::malformed(line, col, format!("expected {k} probabilities, found {count}")));
        }
        truth.push(t);
        row_lines.push(line);
    }
    PredictionSet::from_flat(class_names, probs, truth).map_err(|e| match e {
        Error::Row { row, source } => {
            let column = match *source {
                Error::InvalidProbability { index, .. } => index + 2,
                _ => 1,
            };
            Error::malformed(row_lines[row], column, source.to_string())
        }
        other => other,
    })
}

/// Serialize a prediction set in the v1 CSV format.
pub fn format_predictions(preds: &PredictionSet) -> Result<String> {
    for name in preds.class_names() {
        if name.contains([',', '\n', '\r']) {
            return Err(Error::InvalidConfig(format!(
                "class name `{name}` cannot be written to CSV"
            )));
        }
    }
    let mut out = String::with_capacity(preds.probs().len() * 20);
    out.push_str(PREDICTION_MAGIC);
    out.push('\n');
    out.push_str("truth");
    for name in preds.class_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (row, &t) in preds.rows().zip(preds.truth()) {
        out.push_str(&preds.class_names()[t]);
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_predictions(preds: &PredictionSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_predictions(preds)?)?;
    Ok(())
}

/// Pretty JSON with floats as `%.17g`.
struct ReportFormatter {
    pretty: PrettyFormatter<'static>,
}

impl ReportFormatter {
    fn new() -> Self {
        Self {
            pretty: PrettyFormatter::with_indent(b"  "),
        }
    }
}

/// C-style `%.17g`: 17 significant digits, trailing zeros removed,
/// exponent form outside `1e-4 <= |v| < 1e17`.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        trim_fraction(&fixed).to_string()
    } else {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(format_g17(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

/// Stable JSON text for any report type, newline-terminated.
pub fn report_to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ReportFormatter::new());
    report.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn report_from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn save_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn load_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    report_from_json(&fs::read_to_string(path)?)
}
