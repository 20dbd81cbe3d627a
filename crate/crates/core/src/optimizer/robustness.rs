use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{sweep, Axis, GridSpec, Param, Quantity, SweepGrid};
use super::{evaluate_at_transmission, EvaluationOptions, OptimalDesign};
use crate::error::{CavityError, Result};
use crate::performance::p_ext_operating;

/// Relative degradation levels drawn around the design value.
pub const DEGRADATION_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Which pair of inputs is perturbed about a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustnessScenario {
    /// Manufactured length and outcoupler transmission.
    LengthTransmission,
    /// Manufactured radius of curvature and mirror diameter.
    RadiusDiameter,
    /// True misalignment and scattering loss, differing from the assumed values.
    MisalignmentScatter,
}

impl RobustnessScenario {
    pub fn params(self) -> [Param; 2] {
        match self {
            RobustnessScenario::LengthTransmission => [Param::Length, Param::Transmission],
            RobustnessScenario::RadiusDiameter => [Param::Radius, Param::Diameter],
            RobustnessScenario::MisalignmentScatter => [Param::Misalignment, Param::ScatterLoss],
        }
    }

    /// Default relative half-widths of the two axes.
    pub fn default_spans(self) -> [f64; 2] {
        match self {
            RobustnessScenario::LengthTransmission => [0.05, 0.5],
            RobustnessScenario::RadiusDiameter => [0.05, 0.05],
            RobustnessScenario::MisalignmentScatter => [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSpec {
    pub scenario: RobustnessScenario,
    /// Relative half-width of each axis about the design value.
    pub spans: [f64; 2],
    /// Nodes per axis; made odd so the design point is a node.
    pub steps: usize,
}

impl RobustnessSpec {
    pub fn new(scenario: RobustnessScenario) -> Self {
        Self {
            scenario,
            spans: scenario.default_spans(),
            steps: 41,
        }
    }
}

/// Parameters of a design, with the transmission fixed at its optimum.
fn design_params(design: &OptimalDesign<f64>) -> BTreeMap<Param, f64> {
    let c = &design.constraints;
    BTreeMap::from([
        (Param::Length, design.l),
        (Param::Radius, design.r),
        (Param::Diameter, design.d),
        (Param::Misalignment, c.misalignment),
        (Param::ScatterLoss, c.l_scat),
        (Param::Transmission, design.t),
        (Param::Alpha, c.alpha),
        (Param::Wavelength, c.wavelength),
    ])
}

/// P_ext grid with the named pair perturbed about `design`, every other
/// input held at its design value (the transmission included). Levels are
/// `P* (1 +- x)` for each `x` in [`DEGRADATION_LEVELS`], ascending.
pub fn robustness(design: &OptimalDesign<f64>, spec: &RobustnessSpec, eval: &EvaluationOptions<f64>) -> Result<SweepGrid> {
    if spec.spans.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(CavityError::invalid("spans", "must be positive"));
    }
    let steps = spec.steps.max(1) | 1;
    let mut fixed = design_params(design);
    let params = spec.scenario.params();
    let axes = [0, 1].map(|k| {
        let centre = fixed.remove(&params[k]).expect("design carries every scenario parameter");
        let half = centre * spec.spans[k];
        Axis::centred(params[k], centre, half, steps)
    });
    if axes.iter().any(|a| a.start < 0.0) {
        return Err(CavityError::invalid("spans", "perturbation would make an input negative"));
    }
    let reference = evaluate_at_transmission(&super::grid::inputs_from(&design_params(design))?, design.t, eval)?.point.p_ext;
    let mut grid = sweep(
        &GridSpec {
            axes,
            fixed,
            quantity: Quantity::PExt,
        },
        0,
        eval,
    )?;
    let mut levels: Vec<f64> = DEGRADATION_LEVELS
        .iter()
        .flat_map(|x| [reference * (1.0 - x), reference * (1.0 + x)])
        .collect();
    levels.sort_by(f64::total_cmp);
    grid.levels = levels;
    grid.reference = Some(reference);
    Ok(grid)
}

/// Interval of outcoupler transmission over which P_ext at the design
/// geometry stays at or above `(1 - degradation)` of its value at the design
/// transmission. Edges are located by bisection to `1e-12` absolute.
pub fn transmission_span(design: &OptimalDesign<f64>, degradation: f64, eval: &EvaluationOptions<f64>) -> Result<(f64, f64)> {
    let e = evaluate_at_transmission(&super::grid::inputs_from(&design_params(design))?, design.t, eval)?;
    let (c_in, l_in) = (e.point.c_in, e.budget.l_in);
    let target = e.point.p_ext * (1.0 - degradation);
    let ok = |t: f64| p_ext_operating(c_in, t, l_in).map(|p| p >= target);
    let edge = |mut good: f64, mut bad: f64| -> Result<f64> {
        while (bad - good).abs() > 1e-12 {
            let mid = 0.5 * (good + bad);
            if ok(mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    };
    let lo = if ok(0.0)? { 0.0 } else { edge(design.t, 0.0)? };
    let mut far = design.t * 2.0;
    while ok(far)? {
        far *= 2.0;
        if far > 1.0 {
            break;
        }
    }
    let hi = edge(design.t, far.min(1.0))?;
    Ok((lo, hi))
}
