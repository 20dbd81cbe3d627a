//! Unit-suffixed quantity parsing. Every value is converted to SI at the
//! boundary; a bare number is taken to be SI already.

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Physical dimension of an input, which fixes the suffixes it accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Volume,
    Angle,
    /// Losses, transmissions, ratios.
    Fraction,
    /// Plain numbers (cooperativity, `kappa tau`, counts).
    Pure,
}

impl Dimension {
    /// Suffixes with their power-of-ten scale, longest match first.
    fn suffixes(self) -> &'static [(&'static str, i32)] {
        match self {
            Dimension::Length => &[("mm", -3), ("um", -6), ("µm", -6), ("nm", -9), ("pm", -12), ("m", 0)],
            Dimension::Volume => &[
                ("um3", -18),
                ("µm3", -18),
                ("mm3", -9),
                ("pL", -15),
                ("nL", -12),
                ("m3", 0),
            ],
            Dimension::Angle => &[("mrad", -3), ("urad", -6), ("µrad", -6), ("rad", 0)],
            Dimension::Fraction => &[("ppm", -6), ("%", -2)],
            Dimension::Pure => &[],
        }
    }
}

/// A config value: either an SI number or a string with a unit suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn si(&self, field: &str, dim: Dimension) -> Result<f64, CliError> {
        match self {
            Value::Number(x) if x.is_finite() => Ok(*x),
            Value::Number(_) => Err(CliError::validation(field, "value must be finite")),
            Value::Text(s) => parse_quantity(field, s, dim),
        }
    }
}

/// Parses `"300um"`, `"100ppm"`, `"1e-6 m"` or a bare number into SI.
pub fn parse_quantity(field: &str, text: &str, dim: Dimension) -> Result<f64, CliError> {
    let s = text.trim();
    let bad = || {
        let allowed: Vec<&str> = dim.suffixes().iter().map(|(u, _)| *u).collect();
        CliError::validation(
            field,
            if allowed.is_empty() {
                format!("cannot parse `{text}` as a number")
            } else {
                format!("cannot parse `{text}`; expected a number with one of the units {}", allowed.join(", "))
            },
        )
    };
    let (number, factor) = dim
        .suffixes()
        .iter()
        .find_map(|&(unit, e)| s.strip_suffix(unit).map(|rest| (rest.trim_end(), e)))
        .unwrap_or((s, 0));
    let x: f64 = number.parse().map_err(|_| bad())?;
    // dividing by an exact power of ten keeps "5um" at the nearest double to 5e-6
    let v = if factor < 0 { x / 10f64.powi(-factor) } else { x * 10f64.powi(factor) };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}
