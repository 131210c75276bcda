//! Reader and writer for the UEA / sktime `.ts` text format.

use std::fmt::Write as _;
use std::path::Path;

use super::{DatasetMeta, SeriesSample, Split, TimeSeriesDataset};
use crate::{Error, Result};

#[derive(Default)]
struct Header {
    name: Option<String>,
    univariate: Option<bool>,
    dimensions: Option<usize>,
    equal_length: Option<bool>,
    series_length: Option<usize>,
    labels: Option<Vec<String>>,
}

fn parse_bool(tok: Option<&str>, line: usize, directive: &str) -> Result<bool> {
    match tok.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        other => Err(Error::parse(
            line,
            format!("@{directive} expects true/false, got {other:?}"),
        )),
    }
}

fn parse_usize(tok: Option<&str>, line: usize, directive: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(line, format!("@{directive} expects a positive integer")))
}

/// Reads a `.ts` file; the split is taken from a `_TRAIN` / `_TEST` suffix
/// in the file name (train when neither is present).
pub fn load_ts(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_ascii_uppercase())
        .unwrap_or_default();
    let split = if stem.ends_with("_TEST") {
        Split::Test
    } else {
        Split::Train
    };
    parse_ts(&bytes, split)
}

pub fn parse_ts(bytes: &[u8], split: Split) -> Result<TimeSeriesDataset> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(0, format!("file is not valid UTF-8: {e}")))?;
    parse_ts_str(text, split)
}

pub fn parse_ts_str(text: &str, split: Split) -> Result<TimeSeriesDataset> {
    let mut header = Header::default();
    let mut in_data = false;
    let mut samples = Vec::new();
    let mut d_x: Option<usize> = None;
    let mut labels: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            let Some(rest) = line.strip_prefix('@') else {
                return Err(Error::parse(
                    lineno,
                    "expected a @directive before @data",
                ));
            };
            let mut toks = rest.split_whitespace();
            let directive = toks.next().unwrap_or("").to_ascii_lowercase();
            match directive.as_str() {
                "problemname" => {
                    header.name = Some(toks.collect::<Vec<_>>().join(" "));
                }
                "timestamps" => {
                    if parse_bool(toks.next(), lineno, "timeStamps")? {
                        return Err(Error::parse(lineno, "time-stamped series are unsupported"));
                    }
                }
                "missing" => {
                    parse_bool(toks.next(), lineno, "missing")?;
                }
                "univariate" => {
                    header.univariate = Some(parse_bool(toks.next(), lineno, "univariate")?);
                }
                "dimensions" => {
                    header.dimensions = Some(parse_usize(toks.next(), lineno, "dimensions")?);
                }
                "equallength" => {
                    header.equal_length = Some(parse_bool(toks.next(), lineno, "equalLength")?);
                }
                "serieslength" => {
                    header.series_length =
                        Some(parse_usize(toks.next(), lineno, "seriesLength")?);
                }
                "classlabel" => {
                    if !parse_bool(toks.next(), lineno, "classLabel")? {
                        return Err(Error::parse(
                            lineno,
                            "files without class labels are unsupported",
                        ));
                    }
                    let names: Vec<String> = toks.map(str::to_owned).collect();
                    if names.is_empty() {
                        return Err(Error::parse(lineno, "@classLabel true lists no classes"));
                    }
                    header.labels = Some(names);
                }
                "targetlabel" => {
                    return Err(Error::parse(lineno, "regression targets are unsupported"));
                }
                "data" => {
                    labels = header
                        .labels
                        .clone()
                        .ok_or_else(|| Error::parse(lineno, "@data before @classLabel"))?;
                    d_x = match (header.dimensions, header.univariate) {
                        (Some(d), _) => Some(d),
                        (None, Some(true)) => Some(1),
                        _ => None,
                    };
                    in_data = true;
                }
                // Other directives carry nothing the classifier needs.
                _ => {}
            }
            continue;
        }

        let fields: Vec<&str> = line.split(':').collect();
        if fields.len() < 2 {
            return Err(Error::parse(lineno, "expected `dim:...:label`"));
        }
        let label_tok = fields[fields.len() - 1].trim();
        let dims = &fields[..fields.len() - 1];
        let expected = *d_x.get_or_insert(dims.len());
        if dims.len() != expected {
            return Err(Error::parse(
                lineno,
                format!("{} dimensions, expected {expected}", dims.len()),
            ));
        }
        let label = labels
            .iter()
            .position(|l| l == label_tok)
            .ok_or_else(|| Error::parse(lineno, format!("unknown class label {label_tok:?}")))?;

        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims.len());
        for (j, dim) in dims.iter().enumerate() {
            let mut col = Vec::new();
            for tok in dim.split(',') {
                let tok = tok.trim();
                if tok == "?" {
                    return Err(Error::parse(lineno, "missing values unsupported"));
                }
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(lineno, format!("dimension {j}: non-numeric token {tok:?}"))
                })?;
                if v.is_nan() {
                    return Err(Error::parse(lineno, "missing values unsupported"));
                }
                if !v.is_finite() {
                    return Err(Error::parse(lineno, format!("non-finite value {tok:?}")));
                }
                col.push(v);
            }
            columns.push(col);
        }
        let length = columns[0].len();
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != length) {
            return Err(Error::parse(
                lineno,
                format!(
                    "dimension length mismatch: dimension 0 has {length} values, dimension {j} has {}",
                    c.len()
                ),
            ));
        }
        if header.equal_length == Some(true) {
            if let Some(l) = header.series_length {
                if l != length {
                    return Err(Error::parse(
                        lineno,
                        format!("series length {length}, header declares {l}"),
                    ));
                }
            }
        }
        let mut values = Vec::with_capacity(length * expected);
        for t in 0..length {
            for col in &columns {
                values.push(col[t]);
            }
        }
        samples.push(SeriesSample {
            values,
            length,
            label,
        });
    }

    if !in_data {
        return Err(Error::parse(0, "missing @data section"));
    }
    if samples.is_empty() {
        return Err(Error::parse(0, "empty data section"));
    }
    let equal_length = header.equal_length.unwrap_or_else(|| {
        samples.iter().all(|s| s.length == samples[0].length)
    });
    let series_length = if equal_length {
        Some(header.series_length.unwrap_or(samples[0].length))
    } else {
        None
    };
    let meta = DatasetMeta {
        name: header.name.unwrap_or_default(),
        d_x: d_x.unwrap_or(1),
        d_y: labels.len(),
        equal_length,
        series_length,
        label_names: labels,
        split,
    };
    TimeSeriesDataset::new(meta, samples).map_err(|e| Error::parse(0, e.to_string()))
}

/// Serializes a dataset back to `.ts` text. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_ts(ds: &TimeSeriesDataset) -> String {
    let m = &ds.meta;
    let mut out = String::new();
    let _ = writeln!(out, "@problemName {}", m.name);
    let _ = writeln!(out, "@timeStamps false");
    let _ = writeln!(out, "@missing false");
    let _ = writeln!(out, "@univariate {}", m.d_x == 1);
    let _ = writeln!(out, "@dimensions {}", m.d_x);
    let _ = writeln!(out, "@equalLength {}", m.equal_length);
    if let Some(l) = m.series_length {
        let _ = writeln!(out, "@seriesLength {l}");
    }
    let _ = writeln!(out, "@classLabel true {}", m.label_names.join(" "));
    let _ = writeln!(out, "@data");
    for s in &ds.samples {
        for j in 0..m.d_x {
            for t in 0..s.length {
                if t > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:?}", s.values[t * m.d_x + j]);
            }
            out.push(':');
        }
        out.push_str(&m.label_names[s.label]);
        out.push('\n');
    }
    out
}
