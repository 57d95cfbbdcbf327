//! Deterministic JSON (17 significant digits) and plain-text rendering.

use serde_json::Value;

pub fn number(x: f64) -> String {
    if !x.is_finite() {
        // JSON has no infinities; keep the field and make the gap visible
        return "null".into();
    }
    if x == 0.0 {
        return "0.0000000000000000e0".into();
    }
    format!("{x:.16e}")
}

pub fn to_json_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = num.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&number(num.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                // flat arrays stay on one line
                out.push('[');
                for (k, x) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (k, x) in items.iter().enumerate() {
                    pad(indent + 1, out);
                    write_value(x, indent + 1, out);
                    out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(indent, out);
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, x)) in map.iter().enumerate() {
                pad(indent + 1, out);
                out.push_str(&serde_json::to_string(key).expect("keys serialize"));
                out.push_str(": ");
                write_value(x, indent + 1, out);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

fn pad(indent: usize, out: &mut String) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn is_matrix(v: &Value) -> bool {
    v.as_object().is_some_and(|m| m.len() == 4 && ["rows", "cols", "re", "im"].iter().all(|k| m.contains_key(*k)))
}

fn short(x: &Value) -> String {
    match x {
        Value::Number(num) if num.is_f64() => format!("{:.6e}", num.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn matrix_text(v: &Value, indent: &str, out: &mut String) {
    let get = |k: &str| v.get(k).and_then(Value::as_array).cloned().unwrap_or_default();
    let rows = v.get("rows").and_then(Value::as_u64).unwrap_or(0) as usize;
    let cols = v.get("cols").and_then(Value::as_u64).unwrap_or(0) as usize;
    let (re, im) = (get("re"), get("im"));
    if cols > 8 || rows > 16 {
        out.push_str(&format!("{indent}[{rows}x{cols} matrix; use --output json for entries]\n"));
        return;
    }
    for i in 0..rows {
        out.push_str(indent);
        for j in 0..cols {
            let a = re.get(i * cols + j).and_then(Value::as_f64).unwrap_or(f64::NAN);
            let b = im.get(i * cols + j).and_then(Value::as_f64).unwrap_or(f64::NAN);
            out.push_str(&format!(" {a:>11.4e}{}{:>10.4e}i", if b < 0.0 { '-' } else { '+' }, b.abs()));
        }
        out.push('\n');
    }
}

/// Indented `key: value` listing; matrices print as small grids.
pub fn to_text(v: &Value) -> String {
    let mut out = String::new();
    if let Some(checks) = v.get("checks").and_then(Value::as_array) {
        suite_table(v, checks, &mut out);
    } else {
        text_value(v, 0, &mut out);
    }
    out
}

fn suite_table(v: &Value, checks: &[Value], out: &mut String) {
    let width = checks.iter().filter_map(|c| c.get("name").and_then(Value::as_str)).map(str::len).max().unwrap_or(5).max(5);
    out.push_str(&format!("suite: {}\n", v.get("suiteName").and_then(Value::as_str).unwrap_or("?")));
    out.push_str(&format!("{:<width$}  {:>13}  {:>13}  result\n", "check", "max residual", "threshold"));
    for c in checks {
        let name = c.get("name").and_then(Value::as_str).unwrap_or("?");
        let res = c.get("maxResidual").map(short).unwrap_or_default();
        let thr = c.get("threshold").map(short).unwrap_or_default();
        let pass = c.get("pass").and_then(Value::as_bool).unwrap_or(false);
        out.push_str(&format!("{name:<width$}  {res:>13}  {thr:>13}  {}\n", if pass { "PASS" } else { "FAIL" }));
    }
    let ok = v.get("overallPass").and_then(Value::as_bool).unwrap_or(false);
    let secs = v.get("wallTime").and_then(Value::as_f64).unwrap_or(0.0);
    out.push_str(&format!("overall: {} ({} checks, {secs:.2}s)\n", if ok { "PASS" } else { "FAIL" }, checks.len()));
}

fn text_value(v: &Value, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (key, x) in map {
                if is_matrix(x) {
                    out.push_str(&format!("{indent}{key}:\n"));
                    matrix_text(x, &format!("{indent}  "), out);
                } else if x.is_object() || x.as_array().is_some_and(|a| a.iter().any(|y| y.is_object())) {
                    out.push_str(&format!("{indent}{key}:\n"));
                    text_value(x, depth + 1, out);
                } else if let Some(items) = x.as_array() {
                    let parts: Vec<String> = items.iter().map(short).collect();
                    out.push_str(&format!("{indent}{key}: [{}]\n", parts.join(", ")));
                } else {
                    out.push_str(&format!("{indent}{key}: {}\n", short(x)));
                }
            }
        }
        Value::Array(items) => {
            for (k, x) in items.iter().enumerate() {
                out.push_str(&format!("{indent}[{k}]\n"));
                if is_matrix(x) {
                    matrix_text(x, &format!("{indent}  "), out);
                } else {
                    text_value(x, depth + 1, out);
                }
            }
        }
        other => out.push_str(&format!("{indent}{}\n", short(other))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn seventeen_digits() {
        assert_eq!(number(0.1), "1.0000000000000001e-1");
        assert_eq!(number(1.0), "1.0000000000000000e0");
        assert_eq!(number(f64::INFINITY), "null");
        let s = to_json_string(&json!({"a": [1, 2.5], "b": {"c": true}}));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][1].as_f64(), Some(2.5));
        assert_eq!(back["a"][0].as_u64(), Some(1));
    }

    #[test]
    fn round_trips_exactly() {
        for x in [std::f64::consts::PI, -1e-300, 123456.789, 5e-324] {
            let back: f64 = number(x).parse().unwrap();
            assert_eq!(back, x);
        }
    }
}
