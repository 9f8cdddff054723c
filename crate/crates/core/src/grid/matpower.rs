//! Reader for the MATPOWER plain-text case format (`.m` files).
//!
//! Only the numeric `bus`, `gen`, `branch` tables and `baseMVA` are used.
//! Other assignments (`gencost`, `bus_name`, ...) are skipped.

use std::collections::BTreeMap;

use super::{Bus, BranchRecord, GridModel};
use crate::error::{Error, Result};

const BUS_COLS: usize = 6;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 5;

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct RawCase {
    base_mva: Option<f64>,
    tables: BTreeMap<String, Vec<Row>>,
}

/// Parses case-file text into a validated [`GridModel`].
///
/// Branches with status 0 are dropped. Generator output is summed per bus for
/// in-service units.
pub fn parse_case(text: &str) -> Result<GridModel> {
    let raw = scan(text)?;
    let last_line = text.lines().count().max(1);
    let base_mva = raw
        .base_mva
        .ok_or_else(|| Error::parse(last_line, "missing baseMVA assignment"))?;

    let bus_rows = raw
        .tables
        .get("bus")
        .ok_or_else(|| Error::parse(last_line, "missing bus table"))?;
    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in bus_rows {
        require_cols(row, BUS_COLS, "bus")?;
        let v = &row.values;
        let mut bus = Bus::new(bus_id(v[0], row.line)?);
        bus.p_load_mw = v[2];
        bus.gs = v[4];
        bus.bs = v[5];
        buses.push(bus);
    }

    if let Some(gen_rows) = raw.tables.get("gen") {
        for row in gen_rows {
            require_cols(row, GEN_COLS, "gen")?;
            let v = &row.values;
            if v[7] <= 0.0 {
                continue;
            }
            let id = bus_id(v[0], row.line)?;
            let bus = buses.iter_mut().find(|b| b.id == id).ok_or_else(|| {
                Error::parse(row.line, format!("generator at unknown bus {id}"))
            })?;
            bus.p_gen_mw += v[1];
        }
    }

    let branch_rows = raw
        .tables
        .get("branch")
        .ok_or_else(|| Error::parse(last_line, "missing branch table"))?;
    let mut records = Vec::with_capacity(branch_rows.len());
    for row in branch_rows {
        require_cols(row, BRANCH_COLS, "branch")?;
        let v = &row.values;
        let in_service = v.get(10).is_none_or(|&s| s != 0.0);
        if !in_service {
            continue;
        }
        records.push(BranchRecord {
            from_bus: bus_id(v[0], row.line)?,
            to_bus: bus_id(v[1], row.line)?,
            resistance: v[2],
            reactance: v[3],
            charging: v[4],
        });
    }

    GridModel::new(base_mva, buses, records)
}

fn require_cols(row: &Row, n: usize, table: &str) -> Result<()> {
    if row.values.len() < n {
        return Err(Error::parse(
            row.line,
            format!(
                "{table} row has {} columns, expected at least {n}",
                row.values.len()
            ),
        ));
    }
    Ok(())
}

fn bus_id(v: f64, line: usize) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::parse(line, format!("invalid bus number {v}")));
    }
    Ok(v as u32)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Name of the field assigned on this line, e.g. `mpc.bus = [` gives `bus`.
fn assignment(line: &str) -> Option<(&str, &str)> {
    let (lhs, rhs) = line.split_once('=')?;
    let lhs = lhs.trim();
    let name = lhs.strip_prefix("mpc.").unwrap_or(lhs);
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    Some((name, rhs.trim()))
}

enum State {
    Top,
    Numeric(String),
    Skip(char),
}

fn scan(text: &str) -> Result<RawCase> {
    let mut raw = RawCase::default();
    let mut state = State::Top;
    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full).trim();
        if line.is_empty() {
            continue;
        }
        match &mut state {
            State::Top => {
                if line.starts_with("function") {
                    continue;
                }
                let Some((name, rhs)) = assignment(line) else {
                    continue;
                };
                if let Some(body) = rhs.strip_prefix('[') {
                    if matches!(name, "bus" | "gen" | "branch") {
                        if raw.tables.contains_key(name) {
                            return Err(Error::parse(line_no, format!("duplicate {name} table")));
                        }
                        raw.tables.insert(name.to_string(), Vec::new());
                        let table = name.to_string();
                        if consume_rows(body, line_no, raw.tables.get_mut(&table).unwrap())? {
                            continue;
                        }
                        state = State::Numeric(table);
                    } else if !body.contains(']') {
                        state = State::Skip(']');
                    }
                } else if let Some(body) = rhs.strip_prefix('{') {
                    if !body.contains('}') {
                        state = State::Skip('}');
                    }
                } else if name == "baseMVA" {
                    let value = rhs.trim_end_matches(';').trim();
                    let v: f64 = value
                        .parse()
                        .map_err(|_| Error::parse(line_no, format!("invalid baseMVA '{value}'")))?;
                    raw.base_mva = Some(v);
                }
            }
            State::Numeric(table) => {
                let rows = raw.tables.get_mut(table.as_str()).unwrap();
                if consume_rows(line, line_no, rows)? {
                    state = State::Top;
                }
            }
            State::Skip(close) => {
                if line.contains(*close) {
                    state = State::Top;
                }
            }
        }
    }
    if let State::Numeric(table) = state {
        return Err(Error::parse(
            text.lines().count(),
            format!("unterminated {table} table"),
        ));
    }
    Ok(raw)
}

/// Appends the rows found in `body`; returns true once the closing `]` is seen.
fn consume_rows(body: &str, line_no: usize, rows: &mut Vec<Row>) -> Result<bool> {
    let (content, closed) = match body.find(']') {
        Some(i) => {
            let rest = body[i + 1..].trim().trim_end_matches(';').trim();
            if !rest.is_empty() {
                return Err(Error::parse(line_no, format!("unexpected '{rest}' after table")));
            }
            (&body[..i], true)
        }
        None => (body, false),
    };
    for segment in content.split(';') {
        let mut values = Vec::new();
        for tok in segment
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid number '{tok}'")))?;
            values.push(v);
        }
        if !values.is_empty() {
            rows.push(Row {
                line: line_no,
                values,
            });
        }
    }
    Ok(closed)
}
