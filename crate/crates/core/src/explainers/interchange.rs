//! Plain-text explanation interchange, used to score explainers that run
//! outside this crate.
//!
//! ```text
//! format=explanation/v1
//! d=4
//! instance=0<TAB>explainer=maple<TAB>base=1.5e0<TAB>{1}=2.5e-1<TAB>{2,3}=-1e0
//! instance=1<TAB>explainer=maple<TAB>base=1.5e0<TAB>{1}=3.0e-1<TAB>{2,3}=4e-1
//! ```
//!
//! The header declares the format version and the feature count. Every
//! following non-blank line is one explained instance: its index, the
//! explainer tag, the base value and one `signature=contribution` field per
//! effect. All records carry the same tag and the same signature set, in any
//! order. Numbers are written with 17 significant digits. Lines starting
//! with `#` are comments.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use ndarray::Array2;
use thiserror::Error;

use super::ExplanationSet;
use crate::EffectSignature;

pub const FORMAT_VERSION: &str = "explanation/v1";

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error("explanation file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_explanations(set: &ExplanationSet, d: usize, mut w: impl Write) -> Result<(), InterchangeError> {
    writeln!(w, "format={FORMAT_VERSION}")?;
    writeln!(w, "d={d}")?;
    for (k, &instance) in set.instance_indices.iter().enumerate() {
        write!(w, "instance={instance}\texplainer={}\tbase={:.16e}", set.explainer, set.base_values[k])?;
        for (sig, v) in set.signatures.iter().zip(set.contributions.row(k)) {
            write!(w, "\t{sig}={v:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_explanations`] (or by an external
/// tool); returns the declared feature count with the explanations.
pub fn read_explanations(r: impl Read) -> Result<(usize, ExplanationSet), InterchangeError> {
    let mut lines = BufReader::new(r)
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.starts_with('#')));

    let mut header = |key: &str| -> Result<(usize, String), InterchangeError> {
        let (line, text) = lines.next().ok_or_else(|| InterchangeError::Parse {
            line: 0,
            message: format!("missing `{key}=` header"),
        })?;
        let text = text?;
        let value = text
            .trim()
            .strip_prefix(&format!("{key}="))
            .ok_or_else(|| InterchangeError::Parse {
                line,
                message: format!("expected `{key}=` header, found `{text}`"),
            })?;
        Ok((line, value.to_string()))
    };
    let (line, version) = header("format")?;
    if version != FORMAT_VERSION {
        return Err(InterchangeError::Parse {
            line,
            message: format!("unsupported format `{version}`, expected `{FORMAT_VERSION}`"),
        });
    }
    let (line, d_text) = header("d")?;
    let d: usize = d_text
        .parse()
        .ok()
        .filter(|d| *d > 0)
        .ok_or_else(|| InterchangeError::Parse {
            line,
            message: format!("bad feature count `{d_text}`"),
        })?;

    let mut explainer: Option<String> = None;
    let mut signatures: Vec<EffectSignature> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut base_values = Vec::new();
    let mut instance_indices = Vec::new();

    for (line, text) in lines {
        let text = text?;
        let bad = |message: String| InterchangeError::Parse { line, message };
        let mut instance = None;
        let mut tag = None;
        let mut base = None;
        let mut values: BTreeMap<EffectSignature, f64> = BTreeMap::new();
        let mut order: Vec<EffectSignature> = Vec::new();
        for field in text.trim_end().split('\t') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("field `{field}` is not key=value")))?;
            let number = || value.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{value}`")));
            match key.trim() {
                "instance" => {
                    instance = Some(value.trim().parse::<usize>().map_err(|_| bad(format!("bad index `{value}`")))?)
                }
                "explainer" => tag = Some(value.trim().to_string()),
                "base" => base = Some(number()?),
                sig => {
                    let sig: EffectSignature = sig.parse().map_err(|e| bad(format!("{e}")))?;
                    if let Some(m) = sig.max_feature().filter(|m| *m > d) {
                        return Err(InterchangeError::SignatureMismatch(format!(
                            "line {line}: signature {sig} references feature {m} but d = {d}"
                        )));
                    }
                    let v = number()?;
                    if !v.is_finite() {
                        return Err(bad(format!("non-finite contribution for {sig}")));
                    }
                    if values.insert(sig.clone(), v).is_some() {
                        return Err(bad(format!("duplicate signature {sig}")));
                    }
                    order.push(sig);
                }
            }
        }
        let instance = instance.ok_or_else(|| bad("missing `instance=`".into()))?;
        let tag = tag.ok_or_else(|| bad("missing `explainer=`".into()))?;
        let base = base.ok_or_else(|| bad("missing `base=`".into()))?;
        match &explainer {
            None => explainer = Some(tag),
            Some(t) if *t != tag => return Err(bad(format!("explainer `{tag}` differs from `{t}`"))),
            Some(_) => {}
        }
        if rows.is_empty() {
            signatures = order;
        } else if values.len() != signatures.len() || signatures.iter().any(|s| !values.contains_key(s)) {
            return Err(InterchangeError::SignatureMismatch(format!(
                "line {line}: record signatures differ from the first record"
            )));
        }
        rows.push(signatures.iter().map(|s| values[s]).collect());
        base_values.push(base);
        instance_indices.push(instance);
    }

    let Some(explainer) = explainer else {
        return Err(InterchangeError::Parse {
            line: 0,
            message: "no explanation records".into(),
        });
    };
    let m = signatures.len();
    let contributions = Array2::from_shape_vec((rows.len(), m), rows.concat()).expect("rectangular rows");
    Ok((
        d,
        ExplanationSet {
            explainer,
            signatures,
            contributions,
            base_values,
            instance_indices,
        },
    ))
}
