//! Structural validation of every JSONL artifact the pipeline emits.
//! Objects are closed: every declared key must be present (unless optional)
//! and no undeclared key may appear.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug)]
pub enum Ty {
    Str,
    /// Non-negative integer.
    Index,
    Float,
    Bool,
    Enum(&'static [&'static str]),
    List(&'static Ty),
    Nullable(&'static Ty),
    Obj(&'static [Field]),
}

#[derive(Debug)]
pub struct Field {
    pub name: &'static str,
    pub ty: Ty,
    pub optional: bool,
}

const fn req(name: &'static str, ty: Ty) -> Field {
    Field {
        name,
        ty,
        optional: false,
    }
}

const fn opt(name: &'static str, ty: Ty) -> Field {
    Field {
        name,
        ty,
        optional: true,
    }
}

const LABEL: Ty = Ty::Enum(&["true", "false"]);

const TABLE_FIELDS: &[Field] = &[
    req("doc_id", Ty::Str),
    req("sentences", Ty::List(&Ty::Str)),
    req("facts", Ty::List(&Ty::Str)),
    req("matrix", Ty::List(&Ty::List(&Ty::Bool))),
    req("scorer_id", Ty::Str),
];

const INGEST_FIELDS: &[Field] = &[
    req("id", Ty::Str),
    req("doc_id", Ty::Str),
    req("source", Ty::Enum(&["pubhealth", "scifact", "generic"])),
    req("text", Ty::Str),
    req("sentences", Ty::List(&Ty::Str)),
    req("claim", Ty::Nullable(&Ty::Str)),
    req("label", Ty::Nullable(&LABEL)),
];

const SUMMARY_FIELDS: &[Field] = &[
    req("doc_id", Ty::Str),
    req("text", Ty::Str),
    req("sentences", Ty::List(&Ty::Str)),
    req("warnings", Ty::List(&Ty::Str)),
];

const FACT_FIELDS: &[Field] = &[
    req("id", Ty::Index),
    req("text", Ty::Str),
    req("source_summary_sentence", Ty::Index),
];
const FACT: Ty = Ty::Obj(FACT_FIELDS);

const DECOMPOSE_FIELDS: &[Field] = &[req("doc_id", Ty::Str), req("facts", Ty::List(&FACT))];

const SYNTH_FIELDS: &[Field] = &[
    req("id", Ty::Str),
    req("doc_id", Ty::Str),
    req("text", Ty::Str),
    req("claim", Ty::Str),
    req("label", LABEL),
    req("selected_sentence_indices", Ty::List(&Ty::Index)),
    req("fact_index", Ty::Index),
    req("proportion_pct", Ty::Index),
    req("seed", Ty::Index),
];

const AUGMENT_FIELDS: &[Field] = &[
    req("text", Ty::Str),
    req("claim", Ty::Str),
    req("label", LABEL),
    req("origin", Ty::Enum(&["original", "synthetic"])),
];

const FLAGGED_FIELDS: &[Field] = &[req("fact_index", Ty::Index), req("fact", Ty::Str)];
const FLAGGED: Ty = Ty::Obj(FLAGGED_FIELDS);

const SCAN_FIELDS: &[Field] = &[
    req("doc_id", Ty::Str),
    req("summary", Ty::Str),
    req("verdict", Ty::Enum(&["clean", "abnormal"])),
    req("flagged", Ty::List(&FLAGGED)),
    req("table", Ty::Obj(TABLE_FIELDS)),
];

const PREDICTION_FIELDS: &[Field] = &[req("id", Ty::Str), req("predicted", LABEL), opt("p_true", Ty::Float)];

const CELL_PAIR_FIELDS: &[Field] = &[req("id", Ty::Str), req("claim", Ty::Str), req("text", Ty::Str)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Ingest,
    Summarize,
    Decompose,
    Table,
    Synth,
    Augment,
    Scan,
    Predictions,
    CellPairs,
}

impl Artifact {
    pub fn schema(self) -> Ty {
        Ty::Obj(match self {
            Artifact::Ingest => INGEST_FIELDS,
            Artifact::Summarize => SUMMARY_FIELDS,
            Artifact::Decompose => DECOMPOSE_FIELDS,
            Artifact::Table => TABLE_FIELDS,
            Artifact::Synth => SYNTH_FIELDS,
            Artifact::Augment => AUGMENT_FIELDS,
            Artifact::Scan => SCAN_FIELDS,
            Artifact::Predictions => PREDICTION_FIELDS,
            Artifact::CellPairs => CELL_PAIR_FIELDS,
        })
    }
}

pub fn check(value: &Value, ty: &Ty, path: &str) -> std::result::Result<(), String> {
    let fail = |what: &str| Err(format!("{path}: expected {what}, got {value}"));
    match ty {
        Ty::Str if value.is_string() => Ok(()),
        Ty::Str => fail("string"),
        Ty::Index if value.is_u64() => Ok(()),
        Ty::Index => fail("non-negative integer"),
        Ty::Float if value.is_number() => Ok(()),
        Ty::Float => fail("number"),
        Ty::Bool if value.is_boolean() => Ok(()),
        Ty::Bool => fail("boolean"),
        Ty::Enum(options) => match value.as_str() {
            Some(s) if options.contains(&s) => Ok(()),
            _ => fail(&format!("one of {options:?}")),
        },
        Ty::List(inner) => {
            let Some(items) = value.as_array() else {
                return fail("list");
            };
            items
                .iter()
                .enumerate()
                .try_for_each(|(i, v)| check(v, inner, &format!("{path}[{i}]")))
        }
        Ty::Nullable(inner) => {
            if value.is_null() {
                Ok(())
            } else {
                check(value, inner, path)
            }
        }
        Ty::Obj(fields) => {
            let Some(map) = value.as_object() else {
                return fail("object");
            };
            for key in map.keys() {
                if !fields.iter().any(|f| f.name == key) {
                    return Err(format!("{path}: unexpected key {key:?}"));
                }
            }
            for f in fields.iter() {
                match map.get(f.name) {
                    Some(v) => check(v, &f.ty, &format!("{path}.{}", f.name))?,
                    None if f.optional => {}
                    None => return Err(format!("{path}: missing key {:?}", f.name)),
                }
            }
            Ok(())
        }
    }
}

pub fn validate_line(artifact: Artifact, line: &str) -> Result<()> {
    let value: Value = serde_json::from_str(line)?;
    check(&value, &artifact.schema(), "$").map_err(Error::Schema)
}

/// Validates every non-blank line; returns the number of records.
pub fn validate_file(artifact: Artifact, path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut n = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        validate_line(artifact, line).map_err(|e| Error::Schema(format!("{}:{}: {e}", path.display(), i + 1)))?;
        n += 1;
    }
    Ok(n)
}
