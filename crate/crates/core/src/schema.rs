//! Minimal input-schema language for action contracts.
//!
//! A deliberately closed subset: flat fields, enums, dates, and one level of
//! array-of-object nesting. No unions, no conditional schemas. The same
//! schema value is published in the manifest and enforced at validation
//! time (shared via `Arc`, see contracts module).

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    String,
    Number,
    Boolean,
    Date,
    EnumOf { values: Vec<String> },
    ArrayOf { children: Vec<FieldSchema> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl FieldSchema {
    pub fn string(name: &str, required: bool) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::String,
            required,
            default: None,
        }
    }

    pub fn number(name: &str, required: bool) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Number,
            required,
            default: None,
        }
    }

    pub fn boolean(name: &str, required: bool) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Boolean,
            required,
            default: None,
        }
    }

    pub fn date(name: &str, required: bool) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Date,
            required,
            default: None,
        }
    }

    pub fn enum_of(name: &str, values: &[&str], required: bool) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::EnumOf {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
            required,
            default: None,
        }
    }

    pub fn array_of(name: &str, children: Vec<FieldSchema>, required: bool) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::ArrayOf { children },
            required,
            default: None,
        }
    }

    pub fn with_default(mut self, default: Value) -> Self {
        self.default = Some(default);
        self
    }
}

/// Every required field path, depth-first, `phones[].number` style for
/// array element fields.
pub fn required_fields(schema: &[FieldSchema]) -> Vec<String> {
    let mut out = Vec::new();
    collect_required(schema, "", &mut out);
    out
}

fn collect_required(schema: &[FieldSchema], prefix: &str, out: &mut Vec<String>) {
    for field in schema {
        let path = if prefix.is_empty() {
            field.name.clone()
        } else {
            format!("{prefix}.{}", field.name)
        };
        if field.required {
            out.push(path.clone());
        }
        if let FieldKind::ArrayOf { children } = &field.kind {
            collect_required(children, &format!("{path}[]"), out);
        }
    }
}

/// Required paths that are absent from the payload. Top-level required
/// fields must be present and non-null; required fields of array elements
/// are checked per provided element.
pub fn missing_required(schema: &[FieldSchema], payload: &Value) -> Vec<String> {
    let mut missing = Vec::new();
    check_missing(schema, payload, "", &mut missing);
    missing
}

fn check_missing(schema: &[FieldSchema], payload: &Value, prefix: &str, out: &mut Vec<String>) {
    let obj = payload.as_object();
    for field in schema {
        let path = if prefix.is_empty() {
            field.name.clone()
        } else {
            format!("{prefix}.{}", field.name)
        };
        let value = obj.and_then(|m| m.get(&field.name));
        let present = matches!(value, Some(v) if !v.is_null());
        if field.required && !present {
            out.push(path.clone());
            continue;
        }
        if let (FieldKind::ArrayOf { children }, Some(Value::Array(items))) = (&field.kind, value)
        {
            for item in items {
                check_missing(children, item, &format!("{path}[]"), out);
            }
        }
    }
}

/// Fills every absent optional field that declares a default, including
/// inside array elements. Required fields are never synthesized. Unknown
/// payload keys pass through untouched.
pub fn apply_defaults(schema: &[FieldSchema], payload: &Value) -> Value {
    let mut out = match payload {
        Value::Object(map) => Value::Object(map.clone()),
        other => return other.clone(),
    };
    fill_defaults(schema, &mut out);
    out
}

fn fill_defaults(schema: &[FieldSchema], payload: &mut Value) {
    let Some(map) = payload.as_object_mut() else {
        return;
    };
    for field in schema {
        let present = matches!(map.get(&field.name), Some(v) if !v.is_null());
        if !present {
            if let Some(default) = &field.default {
                if !field.required {
                    map.insert(field.name.clone(), default.clone());
                }
            }
            continue;
        }
        if let FieldKind::ArrayOf { children } = &field.kind {
            if let Some(Value::Array(items)) = map.get_mut(&field.name) {
                for item in items {
                    fill_defaults(children, item);
                }
            }
        }
    }
}

/// Structural type check of present fields against the schema. Returns the
/// first violation as `(path, message)`.
pub fn check_types(schema: &[FieldSchema], payload: &Value) -> Result<(), (String, String)> {
    check_types_at(schema, payload, "")
}

fn check_types_at(
    schema: &[FieldSchema],
    payload: &Value,
    prefix: &str,
) -> Result<(), (String, String)> {
    let Some(map) = payload.as_object() else {
        return Err((prefix.to_string(), "object expected".to_string()));
    };
    for field in schema {
        let path = if prefix.is_empty() {
            field.name.clone()
        } else {
            format!("{prefix}.{}", field.name)
        };
        let Some(value) = map.get(&field.name) else {
            continue;
        };
        if value.is_null() {
            continue;
        }
        match &field.kind {
            FieldKind::String => {
                if !value.is_string() {
                    return Err((path, "string expected".into()));
                }
            }
            FieldKind::Number => {
                if !value.is_number() {
                    return Err((path, "number expected".into()));
                }
            }
            FieldKind::Boolean => {
                if !value.is_boolean() {
                    return Err((path, "boolean expected".into()));
                }
            }
            FieldKind::Date => {
                let ok = value
                    .as_str()
                    .map(|s| chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok())
                    .unwrap_or(false);
                if !ok {
                    return Err((path, "date (YYYY-MM-DD) expected".into()));
                }
            }
            FieldKind::EnumOf { values } => {
                let ok = value.as_str().map(|s| values.iter().any(|v| v == s));
                if ok != Some(true) {
                    return Err((path, format!("one of {values:?} expected")));
                }
            }
            FieldKind::ArrayOf { children } => {
                let Some(items) = value.as_array() else {
                    return Err((path, "array expected".into()));
                };
                for item in items {
                    check_types_at(children, item, &format!("{path}[]"))?;
                }
            }
        }
    }
    Ok(())
}
