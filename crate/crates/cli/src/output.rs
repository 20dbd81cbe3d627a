//! Serialisers and their readers. Floats are written in shortest
//! round-trip exponent form, so a file parses back to the exact values.

use std::collections::BTreeMap;

use ioncav::optimizer::{Axis, Param, Quantity, SweepGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value as Json};

use crate::CliError;

fn float(x: f64) -> String {
    format!("{x:e}")
}

fn parse_error(message: impl Into<String>) -> CliError {
    CliError::validation("input", message)
}

/// Flat records as CSV: one header row of field names (which carry the
/// unit), one row per record. Columns follow the field order of `T`.
pub fn records_to_csv<T: Serialize>(records: &[T]) -> Result<String, CliError> {
    let mut header: Option<Vec<String>> = None;
    let mut out = String::new();
    for r in records {
        let Json::Object(fields) = serde_json::to_value(r).map_err(|e| CliError::io(e.to_string()))? else {
            return Err(CliError::io("record is not a flat object"));
        };
        if header.is_none() {
            let names: Vec<String> = fields.keys().cloned().collect();
            out.push_str(&names.join(","));
            out.push('\n');
            header = Some(names);
        }
        let cells: Vec<String> = fields
            .values()
            .map(|v| match v {
                Json::Number(n) if n.is_f64() => float(n.as_f64().unwrap_or(f64::NAN)),
                Json::Number(n) => n.to_string(),
                Json::Bool(b) => b.to_string(),
                Json::String(s) => s.clone(),
                Json::Null => String::new(),
                other => other.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Reads records written by [`records_to_csv`].
pub fn records_from_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, CliError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| parse_error("empty CSV"))?.split(',').collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(parse_error(format!("row has {} cells, header has {}", cells.len(), header.len())));
            }
            let object: Map<String, Json> = header
                .iter()
                .zip(cells)
                .map(|(name, cell)| (name.to_string(), cell_value(cell)))
                .collect();
            serde_json::from_value(Json::Object(object)).map_err(|e| parse_error(e.to_string()))
        })
        .collect()
}

fn cell_value(cell: &str) -> Json {
    if cell.is_empty() {
        return Json::Null;
    }
    if let Ok(n) = cell.parse::<u64>() {
        return Json::Number(n.into());
    }
    if let Some(n) = cell.parse::<f64>().ok().and_then(Number::from_f64) {
        return Json::Number(n);
    }
    match cell {
        "true" => Json::Bool(true),
        "false" => Json::Bool(false),
        _ => Json::String(cell.to_string()),
    }
}

/// Grid metadata written beside a grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSidecar {
    pub axes: [Axis; 2],
    pub fixed: BTreeMap<Param, f64>,
    pub quantity: Quantity,
    /// SI unit of the `value` column, empty when dimensionless.
    pub unit: String,
    pub seed: u64,
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub reference: Option<f64>,
}

/// Grid CSV with header `<axis0>_<unit>,<axis1>_<unit>,value,feasible`,
/// rows ordered by axis 0 then axis 1. Infeasible cells have an empty value
/// and `feasible = 0`.
pub fn grid_to_csv(grid: &SweepGrid) -> String {
    let [xs, ys] = grid.axis_values();
    let mut out = format!("{},{},value,feasible\n", grid.axes[0].param.column(), grid.axes[1].param.column());
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let (value, feasible) = match grid.values[i][j] {
                Some(v) => (float(v), 1),
                None => (String::new(), 0),
            };
            out.push_str(&format!("{},{},{value},{feasible}\n", float(*x), float(*y)));
        }
    }
    out
}

pub fn grid_sidecar(grid: &SweepGrid) -> GridSidecar {
    GridSidecar {
        axes: grid.axes,
        fixed: grid.fixed.clone(),
        quantity: grid.quantity,
        unit: grid.quantity.unit().to_string(),
        seed: grid.seed,
        levels: grid.levels.clone(),
        reference: grid.reference,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::io(e.to_string()))
}

/// Rebuilds a grid from its CSV and sidecar, checking that the rows match
/// the axes the sidecar describes.
pub fn grid_from_csv(csv: &str, sidecar: &str) -> Result<SweepGrid, CliError> {
    let meta: GridSidecar = serde_json::from_str(sidecar).map_err(|e| parse_error(e.to_string()))?;
    let [xs, ys] = [meta.axes[0].values(), meta.axes[1].values()];
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| parse_error("empty CSV"))?;
    let expected = format!("{},{},value,feasible", meta.axes[0].param.column(), meta.axes[1].param.column());
    if header != expected {
        return Err(parse_error(format!("header `{header}` does not match the sidecar (`{expected}`)")));
    }
    let mut values = vec![vec![None; ys.len()]; xs.len()];
    let mut rows = 0;
    for (k, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let (i, j) = (k / ys.len().max(1), k % ys.len().max(1));
        let cells: Vec<&str> = line.split(',').collect();
        let [x, y, value, feasible] = cells[..] else {
            return Err(parse_error(format!("row {k} does not have four cells")));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_error(format!("row {k}: `{s}` is not a number")));
        if i >= xs.len() || num(x)? != xs[i] || num(y)? != ys[j] {
            return Err(parse_error(format!("row {k} is off the sidecar axes")));
        }
        values[i][j] = match (feasible, value) {
            ("1", v) => Some(num(v)?),
            ("0", "") => None,
            _ => return Err(parse_error(format!("row {k}: inconsistent value/feasible cells"))),
        };
        rows += 1;
    }
    if rows != xs.len() * ys.len() {
        return Err(parse_error(format!("expected {} rows, found {rows}", xs.len() * ys.len())));
    }
    Ok(SweepGrid {
        axes: meta.axes,
        fixed: meta.fixed,
        quantity: meta.quantity,
        seed: meta.seed,
        values,
        levels: meta.levels,
        reference: meta.reference,
    })
}
