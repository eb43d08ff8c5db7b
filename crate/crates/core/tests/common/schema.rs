//! Checks values against the subset of JSON Schema used by the files in
//! `schemas/`: type, enum, const, required, properties, items, allOf,
//! if/then and local `$ref`.

use std::path::PathBuf;

use serde_json::Value;

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

pub fn load(name: &str) -> Value {
    let text = std::fs::read_to_string(schema_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn type_ok(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        _ => panic!("unknown schema type {t}"),
    }
}

fn resolve<'a>(root: &'a Value, r: &str) -> &'a Value {
    let path = r.strip_prefix("#/").expect("local refs only");
    path.split('/').fold(root, |node, key| &node[key])
}

/// Returns every violation as `path: message`.
pub fn validate(root: &Value, schema: &Value, v: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    check(root, schema, v, "$", &mut errs);
    errs
}

fn check(root: &Value, s: &Value, v: &Value, at: &str, errs: &mut Vec<String>) {
    if let Some(r) = s.get("$ref").and_then(Value::as_str) {
        check(root, resolve(root, r), v, at, errs);
    }
    match s.get("type") {
        Some(Value::String(t)) if !type_ok(v, t) => errs.push(format!("{at}: expected {t}")),
        Some(Value::Array(ts)) if !ts.iter().any(|t| type_ok(v, t.as_str().unwrap())) => {
            errs.push(format!("{at}: expected one of {ts:?}"))
        }
        _ => {}
    }
    if let Some(Value::Array(opts)) = s.get("enum") {
        if !opts.contains(v) {
            errs.push(format!("{at}: {v} not in enum"));
        }
    }
    if let Some(c) = s.get("const") {
        if c != v {
            errs.push(format!("{at}: expected {c}"));
        }
    }
    if let (Some(Value::Array(req)), Some(obj)) = (s.get("required"), v.as_object()) {
        for k in req {
            if !obj.contains_key(k.as_str().unwrap()) {
                errs.push(format!("{at}: missing {k}"));
            }
        }
    }
    if let (Some(Value::Object(props)), Some(obj)) = (s.get("properties"), v.as_object()) {
        for (k, sub) in props {
            if let Some(child) = obj.get(k) {
                check(root, sub, child, &format!("{at}.{k}"), errs);
            }
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check(root, items, child, &format!("{at}[{i}]"), errs);
        }
    }
    if let Some(Value::Array(all)) = s.get("allOf") {
        for sub in all {
            check(root, sub, v, at, errs);
        }
    }
    if let Some(cond) = s.get("if") {
        let mut probe = Vec::new();
        check(root, cond, v, at, &mut probe);
        if probe.is_empty() {
            if let Some(then) = s.get("then") {
                check(root, then, v, at, errs);
            }
        }
    }
}
