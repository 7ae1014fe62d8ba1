//! Extraction and validation of the JSON payload in a model reply.

use serde_json::Value;

use super::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Summary(String),
    Facts(Vec<String>),
    Verdict(bool),
}

impl Payload {
    pub fn task(&self) -> Task {
        match self {
            Payload::Summary(_) => Task::Summarize,
            Payload::Facts(_) => Task::Decompose,
            Payload::Verdict(_) => Task::Entail,
        }
    }
}

/// Finds the first balanced `{...}` span that parses as a JSON object.
/// Code fences and surrounding prose are skipped naturally.
pub fn first_json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(offset) = raw[start..].find('{') {
        let open = start + offset;
        if let Some(close) = matching_brace(bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&raw[open..=close]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

pub fn parse_json_payload(raw: &str, task: Task) -> Result<Payload> {
    if raw.trim().is_empty() {
        return Err(Error::Parse("empty response".into()));
    }
    let obj = first_json_object(raw).ok_or_else(|| Error::Parse(truncate(raw)))?;
    match task {
        Task::Summarize => match obj.get("summary") {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(Payload::Summary(s.clone())),
            _ => Err(Error::Schema("expected non-empty string field \"summary\"".into())),
        },
        Task::Decompose => {
            let Some(Value::Array(items)) = obj.get("facts") else {
                return Err(Error::Schema("expected list field \"facts\"".into()));
            };
            if items.is_empty() {
                return Err(Error::Schema("\"facts\" is empty".into()));
            }
            items
                .iter()
                .map(|v| match v {
                    Value::String(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
                    _ => Err(Error::Schema("\"facts\" must hold non-empty strings".into())),
                })
                .collect::<Result<Vec<_>>>()
                .map(Payload::Facts)
        }
        Task::Entail => match obj.get("entails") {
            Some(Value::Bool(b)) => Ok(Payload::Verdict(*b)),
            _ => Err(Error::Schema("expected boolean field \"entails\"".into())),
        },
    }
}

fn truncate(raw: &str) -> String {
    let mut s: String = raw.chars().take(120).collect();
    if s.len() < raw.len() {
        s.push('…');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_summary() {
        assert_eq!(
            parse_json_payload(r#"{"summary": "S."}"#, Task::Summarize).unwrap(),
            Payload::Summary("S.".into())
        );
    }

    #[test]
    fn fenced_facts() {
        let raw = "```json\n{\"facts\": [\"F1\", \"F2\"]}\n```";
        assert_eq!(
            parse_json_payload(raw, Task::Decompose).unwrap(),
            Payload::Facts(vec!["F1".into(), "F2".into()])
        );
    }

    #[test]
    fn prose_around_object_and_braces_in_strings() {
        let raw = "Sure! {not json} Here: {\"entails\": true, \"why\": \"a } brace\"} thanks";
        assert_eq!(parse_json_payload(raw, Task::Entail).unwrap(), Payload::Verdict(true));
    }

    #[test]
    fn empty_fact_list_is_schema_error() {
        assert!(matches!(
            parse_json_payload(r#"{"facts": []}"#, Task::Decompose),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn wrong_types_and_missing_objects() {
        assert!(matches!(
            parse_json_payload(r#"{"entails": "yes"}"#, Task::Entail),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_json_payload(r#"{"summary": 3}"#, Task::Summarize),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_json_payload("no json here", Task::Summarize),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_json_payload("{\"summary\": \"open", Task::Summarize),
            Err(Error::Parse(_))
        ));
        assert!(matches!(parse_json_payload("  ", Task::Entail), Err(Error::Parse(_))));
    }

    proptest! {
        #[test]
        fn parsed_payload_always_satisfies_schema(raw in ".{0,80}", task in prop_oneof![
            Just(Task::Summarize), Just(Task::Decompose), Just(Task::Entail)
        ]) {
            if let Ok(p) = parse_json_payload(&raw, task) {
                prop_assert_eq!(p.task(), task);
                match p {
                    Payload::Summary(s) => prop_assert!(!s.trim().is_empty()),
                    Payload::Facts(f) => prop_assert!(!f.is_empty() && f.iter().all(|x| !x.is_empty())),
                    Payload::Verdict(_) => {}
                }
            }
        }

        #[test]
        fn embedded_valid_objects_are_found(prefix in "[a-z ]{0,20}", facts in proptest::collection::vec("[A-Za-z ]{1,12}", 1..4)) {
            let facts: Vec<String> = facts.into_iter().filter(|f| !f.trim().is_empty()).collect();
            prop_assume!(!facts.is_empty());
            let raw = format!("{prefix}```json\n{}\n```", serde_json::json!({"facts": facts}));
            let expected: Vec<String> = facts.iter().map(|f| f.trim().to_string()).collect();
            prop_assert_eq!(parse_json_payload(&raw, Task::Decompose).unwrap(), Payload::Facts(expected));
        }
    }
}
