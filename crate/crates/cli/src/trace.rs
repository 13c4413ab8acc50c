//! Trace files: a fixed-header comma-separated text format (diff-able,
//! plot-ready) and a lossless structured JSON form.
//!
//! Columns, in order: `t, phase, stance_index, com_x, com_y, com_z,
//! com_vx, com_vy, com_vz, swing_x, swing_y, swing_z, p, L, E, T_s,
//! u_des, V, clf_margin, reward, event`. Floats use Rust's shortest
//! round-trip formatting, so parsing and re-writing a canonical file is
//! byte-identical.

use planc_core::sim::RolloutTrace;
use serde_json::{json, Map, Value};

pub const TRACE_COLUMNS: [&str; 21] = [
    "t",
    "phase",
    "stance_index",
    "com_x",
    "com_y",
    "com_z",
    "com_vx",
    "com_vy",
    "com_vz",
    "swing_x",
    "swing_y",
    "swing_z",
    "p",
    "L",
    "E",
    "T_s",
    "u_des",
    "V",
    "clf_margin",
    "reward",
    "event",
];

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace header mismatch: unknown or misplaced column `{0}`")]
    UnknownColumn(String),
    #[error("trace row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("malformed JSON trace: {0}")]
    Json(String),
}

/// One parsed trace row; numeric columns in header order plus the event.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub values: [f64; 20],
    pub event: String,
}

/// Render a finished rollout in the columnar text format.
pub fn write_csv(trace: &RolloutTrace) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for record in &trace.records {
        let s = &record.state;
        let a = &record.actual;
        let events: Vec<&str> = record.events.iter().map(|e| e.label()).collect();
        let row = [
            s.t,
            s.phase,
            s.stance_index as f64,
            a.com_pos.x,
            a.com_pos.y,
            a.com_pos.z,
            a.com_vel.x,
            a.com_vel.y,
            a.com_vel.z,
            a.swing_pos.x,
            a.swing_pos.y,
            a.swing_pos.z,
            s.sagittal.p,
            s.sagittal.l,
            record.energy,
            record.t_s,
            record.u_des,
            record.v,
            record.clf_margin,
            record.reward,
        ];
        let mut line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        line.push(',');
        line.push_str(&events.join(";"));
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Parse the columnar text format, verifying the header exactly.
pub fn parse_csv(text: &str) -> Result<Vec<TraceRow>, TraceError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let names: Vec<&str> = header.split(',').collect();
    for (i, name) in names.iter().enumerate() {
        if TRACE_COLUMNS.get(i) != Some(&name.trim()) {
            return Err(TraceError::UnknownColumn(name.trim().to_string()));
        }
    }
    if names.len() != TRACE_COLUMNS.len() {
        return Err(TraceError::UnknownColumn(format!(
            "expected {} columns, found {}",
            TRACE_COLUMNS.len(),
            names.len()
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TRACE_COLUMNS.len() {
            return Err(TraceError::Row {
                row: idx + 1,
                reason: format!(
                    "expected {} fields, found {}",
                    TRACE_COLUMNS.len(),
                    fields.len()
                ),
            });
        }
        let mut values = [0.0; 20];
        for (i, v) in values.iter_mut().enumerate() {
            *v = fields[i].parse::<f64>().map_err(|e| TraceError::Row {
                row: idx + 1,
                reason: format!("column `{}`: {e}", TRACE_COLUMNS[i]),
            })?;
        }
        rows.push(TraceRow {
            values,
            event: fields[20].to_string(),
        });
    }
    Ok(rows)
}

/// Render parsed rows back to the canonical text format.
pub fn rows_to_csv(rows: &[TraceRow]) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        let mut line = row
            .values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        line.push(',');
        line.push_str(&row.event);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Structured-object form: `{"rows": [{column: value, ...}, ...]}`.
pub fn rows_to_json(rows: &[TraceRow]) -> String {
    let rows_json: Vec<Value> = rows
        .iter()
        .map(|row| {
            let mut obj = Map::new();
            for (i, v) in row.values.iter().enumerate() {
                obj.insert(TRACE_COLUMNS[i].to_string(), json!(v));
            }
            obj.insert("event".to_string(), json!(row.event));
            Value::Object(obj)
        })
        .collect();
    serde_json::to_string_pretty(&json!({ "rows": rows_json })).expect("json") + "\n"
}

/// Parse the structured-object form back into rows.
pub fn rows_from_json(text: &str) -> Result<Vec<TraceRow>, TraceError> {
    let value: Value = serde_json::from_str(text).map_err(|e| TraceError::Json(e.to_string()))?;
    let rows = value
        .get("rows")
        .and_then(Value::as_array)
        .ok_or_else(|| TraceError::Json("missing `rows` array".into()))?;
    let mut out = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let obj = row
            .as_object()
            .ok_or_else(|| TraceError::Json(format!("row {idx} is not an object")))?;
        for key in obj.keys() {
            if !TRACE_COLUMNS.contains(&key.as_str()) {
                return Err(TraceError::UnknownColumn(key.clone()));
            }
        }
        let mut values = [0.0; 20];
        for (i, v) in values.iter_mut().enumerate() {
            *v = obj
                .get(TRACE_COLUMNS[i])
                .and_then(Value::as_f64)
                .ok_or_else(|| TraceError::Row {
                    row: idx,
                    reason: format!("missing numeric column `{}`", TRACE_COLUMNS[i]),
                })?;
        }
        let event = obj
            .get("event")
            .and_then(Value::as_str)
            .ok_or_else(|| TraceError::Row {
                row: idx,
                reason: "missing `event`".into(),
            })?
            .to_string();
        out.push(TraceRow { values, event });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use planc_core::sim::{rollout, SimConfig};
    use planc_core::terrain::{generate_terrain, TerrainKind};

    fn sample_trace() -> RolloutTrace {
        let seq = generate_terrain(TerrainKind::FlatStones, 0.3, 7, 6).unwrap();
        rollout(&seq, &SimConfig::default(), 7).unwrap()
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let csv = write_csv(&sample_trace());
        let rows = parse_csv(&csv).unwrap();
        assert_eq!(rows_to_csv(&rows), csv);
    }

    #[test]
    fn csv_json_csv_is_byte_identical() {
        let csv = write_csv(&sample_trace());
        let rows = parse_csv(&csv).unwrap();
        let json = rows_to_json(&rows);
        let rows2 = rows_from_json(&json).unwrap();
        assert_eq!(rows_to_csv(&rows2), csv);
    }

    #[test]
    fn header_is_pinned() {
        let csv = write_csv(&sample_trace());
        assert!(csv.starts_with(
            "t,phase,stance_index,com_x,com_y,com_z,com_vx,com_vy,com_vz,\
             swing_x,swing_y,swing_z,p,L,E,T_s,u_des,V,clf_margin,reward,event\n"
        ));
    }

    #[test]
    fn unknown_column_is_named() {
        let err = parse_csv("t,phase,bogus\n").unwrap_err();
        match err {
            TraceError::UnknownColumn(name) => assert_eq!(name, "bogus"),
            other => panic!("unexpected {other:?}"),
        }
        let err = rows_from_json("{\"rows\": [{\"mystery\": 1.0}]}").unwrap_err();
        match err {
            TraceError::UnknownColumn(name) => assert_eq!(name, "mystery"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_trace_round_trips() {
        let header_only = TRACE_COLUMNS.join(",") + "\n";
        let rows = parse_csv(&header_only).unwrap();
        assert!(rows.is_empty());
        assert_eq!(rows_to_csv(&rows), header_only);
        let json = rows_to_json(&rows);
        assert!(rows_from_json(&json).unwrap().is_empty());
    }
}
