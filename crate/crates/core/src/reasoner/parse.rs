//! Response parsing.
//!
//! Small local models like to wrap their JSON in prose, so both parsers take
//! the first well-formed JSON object anywhere in the text and then apply a
//! strict schema to that object only.

use serde_json::{Map, Value};

use crate::error::ParseFailure;
use crate::geometry::TaskRelation;

/// First complete JSON object in `raw`, scanning each `{` in order.
fn first_object(raw: &str) -> Option<Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

/// Accepts `{"relation": <0-3>}` or `{"relation": "<name>"}`.
pub fn parse_symbolic_response(raw: &str) -> Result<TaskRelation, ParseFailure> {
    let obj = first_object(raw).ok_or_else(|| ParseFailure::new("no JSON object found"))?;
    let value = obj
        .get("relation")
        .ok_or_else(|| ParseFailure::new("missing `relation` field"))?;
    match value {
        Value::Number(n) => {
            let idx = n
                .as_u64()
                .ok_or_else(|| ParseFailure::new(format!("relation {n} is not an index")))?;
            usize::try_from(idx)
                .ok()
                .and_then(TaskRelation::from_index)
                .ok_or_else(|| ParseFailure::new(format!("relation {idx} out of range 0-3")))
        }
        Value::String(s) => s
            .trim()
            .to_ascii_lowercase()
            .parse::<TaskRelation>()
            .map_err(|_| ParseFailure::new(format!("unknown relation name `{s}`"))),
        other => Err(ParseFailure::new(format!("relation has unexpected type: {other}"))),
    }
}

/// Accepts `{"x": <number>, "y": <number>}` and clips both to `[0, side_length]`.
pub fn parse_coordinate_response(raw: &str, side_length: f64) -> Result<(f64, f64), ParseFailure> {
    let obj = first_object(raw).ok_or_else(|| ParseFailure::new("no JSON object found"))?;
    let coord = |key: &str| -> Result<f64, ParseFailure> {
        let v = obj
            .get(key)
            .ok_or_else(|| ParseFailure::new(format!("missing `{key}` field")))?;
        let f = v
            .as_f64()
            .ok_or_else(|| ParseFailure::new(format!("`{key}` is not a number")))?;
        if !f.is_finite() {
            return Err(ParseFailure::new(format!("`{key}` is not finite")));
        }
        Ok(f.clamp(0.0, side_length))
    };
    Ok((coord("x")?, coord("y")?))
}
