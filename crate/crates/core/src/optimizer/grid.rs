use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_at_transmission, evaluate_design, optimize, DesignConstraints, DesignInputs, EvaluationOptions, OptimizeOptions};
use crate::error::{CavityError, Result};
use crate::geometry::{diameter_for_volume, effective_mode, stability_margin, Misalignment};
use crate::losses::clipping_loss_for_mode;
use crate::performance::{geometric_cooperativity, optimal_transmission, PerformancePoint};

/// A named model input that can be held fixed or swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Length,
    Radius,
    Diameter,
    /// Sets both misalignment components.
    Misalignment,
    MisalignmentPerp,
    MisalignmentPar,
    ScatterLoss,
    Transmission,
    /// Effective divergence; bypasses the geometry when present.
    Theta,
    Alpha,
    Wavelength,
    /// Milled volume per mirror; fixes `D` from `R` when no diameter is given.
    Volume,
    MinLength,
    ClipThreshold,
}

impl Param {
    pub const ALL: [Param; 14] = [
        Param::Length,
        Param::Radius,
        Param::Diameter,
        Param::Misalignment,
        Param::MisalignmentPerp,
        Param::MisalignmentPar,
        Param::ScatterLoss,
        Param::Transmission,
        Param::Theta,
        Param::Alpha,
        Param::Wavelength,
        Param::Volume,
        Param::MinLength,
        Param::ClipThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Length => "length",
            Param::Radius => "radius",
            Param::Diameter => "diameter",
            Param::Misalignment => "misalignment",
            Param::MisalignmentPerp => "misalignment_perp",
            Param::MisalignmentPar => "misalignment_par",
            Param::ScatterLoss => "scatter_loss",
            Param::Transmission => "transmission",
            Param::Theta => "theta",
            Param::Alpha => "alpha",
            Param::Wavelength => "wavelength",
            Param::Volume => "volume",
            Param::MinLength => "min_length",
            Param::ClipThreshold => "clip_threshold",
        }
    }

    /// SI unit, empty for dimensionless inputs.
    pub fn unit(self) -> &'static str {
        match self {
            Param::ScatterLoss | Param::Transmission | Param::Alpha | Param::ClipThreshold => "",
            Param::Theta => "rad",
            Param::Volume => "m3",
            _ => "m",
        }
    }

    /// Column header: name plus unit suffix.
    pub fn column(self) -> String {
        match self.unit() {
            "" => self.name().to_string(),
            u => format!("{}_{u}", self.name()),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = CavityError;
    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CavityError::invalid("param", format!("unknown parameter `{s}`")))
    }
}

/// Quantity recorded in each grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    ClippingLoss,
    ThetaEff,
    StabilityMargin,
    CIn,
    PExt,
    TOpt,
    KappaOut,
    OptimalPExt,
    OptimalL,
    OptimalR,
    OptimalD,
    OptimalT,
}

impl Quantity {
    pub const ALL: [Quantity; 12] = [
        Quantity::ClippingLoss,
        Quantity::ThetaEff,
        Quantity::StabilityMargin,
        Quantity::CIn,
        Quantity::PExt,
        Quantity::TOpt,
        Quantity::KappaOut,
        Quantity::OptimalPExt,
        Quantity::OptimalL,
        Quantity::OptimalR,
        Quantity::OptimalD,
        Quantity::OptimalT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::ClippingLoss => "clipping_loss",
            Quantity::ThetaEff => "theta_eff",
            Quantity::StabilityMargin => "stability_margin",
            Quantity::CIn => "c_in",
            Quantity::PExt => "p_ext",
            Quantity::TOpt => "t_opt",
            Quantity::KappaOut => "kappa_out",
            Quantity::OptimalPExt => "optimal_p_ext",
            Quantity::OptimalL => "optimal_l",
            Quantity::OptimalR => "optimal_r",
            Quantity::OptimalD => "optimal_d",
            Quantity::OptimalT => "optimal_t",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Quantity::ThetaEff => "rad",
            Quantity::KappaOut => "rad/s",
            Quantity::OptimalL | Quantity::OptimalR | Quantity::OptimalD => "m",
            _ => "",
        }
    }

    fn is_optimal(self) -> bool {
        matches!(
            self,
            Quantity::OptimalPExt | Quantity::OptimalL | Quantity::OptimalR | Quantity::OptimalD | Quantity::OptimalT
        )
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = CavityError;
    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| CavityError::UnknownQuantity(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisScale {
    #[default]
    Linear,
    Log,
}

/// One grid axis. A linear axis with an odd step count and a `centre` places
/// that exact value on the middle node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    #[serde(default)]
    pub scale: AxisScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centre: Option<f64>,
}

impl Axis {
    pub fn linear(param: Param, start: f64, stop: f64, steps: usize) -> Self {
        Self {
            param,
            start,
            stop,
            steps,
            scale: AxisScale::Linear,
            centre: None,
        }
    }

    pub fn log(param: Param, start: f64, stop: f64, steps: usize) -> Self {
        Self {
            scale: AxisScale::Log,
            ..Self::linear(param, start, stop, steps)
        }
    }

    /// Odd linear grid of `steps` nodes spanning `centre +- half_width`.
    pub fn centred(param: Param, centre: f64, half_width: f64, steps: usize) -> Self {
        Self {
            centre: Some(centre),
            ..Self::linear(param, centre - half_width, centre + half_width, steps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(CavityError::invalid("axis", format!("`{}` needs at least one step", self.param)));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CavityError::invalid("axis", format!("`{}` range must be finite", self.param)));
        }
        if self.scale == AxisScale::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(CavityError::invalid("axis", format!("log axis `{}` must be positive", self.param)));
        }
        if self.centre.is_some() && (self.steps % 2 == 0 || self.scale == AxisScale::Log) {
            return Err(CavityError::invalid("axis", format!("centred axis `{}` must be linear with odd steps", self.param)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.steps;
        if n == 1 {
            return vec![self.centre.unwrap_or(self.start)];
        }
        let last = (n - 1) as f64;
        (0..n)
            .map(|k| {
                let f = k as f64 / last;
                match (self.scale, self.centre) {
                    (AxisScale::Linear, Some(c)) => {
                        let mid = (n / 2) as f64;
                        c + (k as f64 - mid) * (self.stop - self.start) / last
                    }
                    (AxisScale::Linear, None) if k == n - 1 => self.stop,
                    (AxisScale::Linear, None) => self.start + (self.stop - self.start) * f,
                    (AxisScale::Log, _) if k == n - 1 => self.stop,
                    (AxisScale::Log, _) => self.start * (self.stop / self.start).powf(f),
                }
            })
            .collect()
    }
}

/// A two-axis grid request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: [Axis; 2],
    #[serde(default)]
    pub fixed: BTreeMap<Param, f64>,
    pub quantity: Quantity,
}

/// Evaluated grid. `values[i][j]` belongs to `axes[0]` node `i` and `axes[1]`
/// node `j`; `None` marks an infeasible cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: [Axis; 2],
    pub fixed: BTreeMap<Param, f64>,
    pub quantity: Quantity,
    pub seed: u64,
    pub values: Vec<Vec<Option<f64>>>,
    /// Contour levels of interest, if any.
    #[serde(default)]
    pub levels: Vec<f64>,
    /// Value at the reference point the levels derive from.
    #[serde(default)]
    pub reference: Option<f64>,
}

impl SweepGrid {
    pub fn axis_values(&self) -> [Vec<f64>; 2] {
        [self.axes[0].values(), self.axes[1].values()]
    }

    /// Contiguous interval of `axes[axis]` values around node `(i, j)` over
    /// which the value stays at or above `level`, walking along that axis only.
    pub fn superlevel_span(&self, i: usize, j: usize, axis: usize, level: f64) -> Option<(f64, f64)> {
        let at = |k: usize| if axis == 0 { self.values[k][j] } else { self.values[i][k] };
        let above = |k: usize| at(k).is_some_and(|v| v >= level);
        let start = if axis == 0 { i } else { j };
        if !above(start) {
            return None;
        }
        let n = self.axes[axis].steps;
        let (mut lo, mut hi) = (start, start);
        while lo > 0 && above(lo - 1) {
            lo -= 1;
        }
        while hi + 1 < n && above(hi + 1) {
            hi += 1;
        }
        let nodes = self.axes[axis].values();
        Some((nodes[lo], nodes[hi]))
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for axis in &self.axes {
            axis.validate()?;
            if self.fixed.contains_key(&axis.param) {
                return Err(CavityError::invalid("fixed", format!("`{}` is both swept and fixed", axis.param)));
            }
        }
        if self.axes[0].param == self.axes[1].param {
            return Err(CavityError::invalid("axes", "the two axes must differ"));
        }
        Ok(())
    }
}

/// Evaluates `spec.quantity` on every grid node. Cells run in parallel and
/// are collected in index order, so the result depends only on the grid request and
/// seed. Infeasible cells become `None`; invalid inputs and numerical
/// failures abort the sweep.
pub fn sweep(spec: &GridSpec, seed: u64, eval: &EvaluationOptions<f64>) -> Result<SweepGrid> {
    spec.validate()?;
    let [xs, ys] = [spec.axes[0].values(), spec.axes[1].values()];
    let cells: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
    let results: Vec<Result<Option<f64>>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut params = spec.fixed.clone();
            params.insert(spec.axes[0].param, xs[i]);
            params.insert(spec.axes[1].param, ys[j]);
            evaluate_cell(&params, spec.quantity, seed, eval)
        })
        .collect();
    let mut values = vec![vec![None; ys.len()]; xs.len()];
    for ((i, j), r) in cells.into_iter().zip(results) {
        values[i][j] = r?;
    }
    Ok(SweepGrid {
        axes: spec.axes,
        fixed: spec.fixed.clone(),
        quantity: spec.quantity,
        seed,
        values,
        levels: Vec::new(),
        reference: None,
    })
}

fn required(params: &BTreeMap<Param, f64>, p: Param) -> Result<f64> {
    params
        .get(&p)
        .copied()
        .ok_or_else(|| CavityError::invalid(p.name(), "required for this quantity"))
}

fn or_default(params: &BTreeMap<Param, f64>, p: Param, default: f64) -> f64 {
    params.get(&p).copied().unwrap_or(default)
}

fn misalignment_of(params: &BTreeMap<Param, f64>) -> Result<Misalignment<f64>> {
    let both = or_default(params, Param::Misalignment, 0.0);
    Misalignment::new(
        or_default(params, Param::MisalignmentPerp, both),
        or_default(params, Param::MisalignmentPar, both),
    )
}

/// Assembles design inputs from a parameter map. Defaults: no misalignment,
/// wavelength 854 nm, branching ratio 1/20; `D` may come from `volume`.
pub fn inputs_from(params: &BTreeMap<Param, f64>) -> Result<DesignInputs<f64>> {
    let radius = required(params, Param::Radius)?;
    let diameter = match (params.get(&Param::Diameter), params.get(&Param::Volume)) {
        (Some(&d), _) => d,
        (None, Some(&v)) => diameter_for_volume(radius, v)?,
        (None, None) => return Err(CavityError::invalid("diameter", "give a diameter or a volume")),
    };
    Ok(DesignInputs {
        length: required(params, Param::Length)?,
        radius,
        diameter,
        misalignment: misalignment_of(params)?,
        l_scat: or_default(params, Param::ScatterLoss, f64::NAN),
        alpha: or_default(params, Param::Alpha, 0.05),
        wavelength: or_default(params, Param::Wavelength, 854e-9),
    })
}

fn infeasible_as_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_infeasible() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Evaluates one quantity for one parameter set.
pub fn evaluate_cell(params: &BTreeMap<Param, f64>, quantity: Quantity, seed: u64, eval: &EvaluationOptions<f64>) -> Result<Option<f64>> {
    if quantity.is_optimal() {
        return infeasible_as_none(optimal_cell(params, quantity, seed, eval));
    }
    if let Some(&theta) = params.get(&Param::Theta) {
        return infeasible_as_none(theta_cell(params, theta, quantity));
    }
    let inputs = inputs_from(params)?;
    let geom = inputs.geometry();
    match quantity {
        Quantity::StabilityMargin => return Ok(Some(stability_margin(&geom, &inputs.misalignment))),
        Quantity::ClippingLoss | Quantity::ThetaEff => {
            return infeasible_as_none((|| {
                if !(stability_margin(&geom, &inputs.misalignment) > 0.0) {
                    return Err(CavityError::UnstableGeometry("no stable mode".into()));
                }
                let mode = effective_mode(&geom, &inputs.misalignment)?;
                if quantity == Quantity::ThetaEff {
                    return Ok(mode.theta_eff);
                }
                clipping_loss_for_mode(&mode, inputs.radius, inputs.diameter, &eval.clipping)
            })());
        }
        _ => {}
    }
    if !(inputs.l_scat >= 0.0) {
        return Err(CavityError::invalid("scatter_loss", "required for this quantity"));
    }
    let evaluation = match params.get(&Param::Transmission) {
        Some(&t) => evaluate_at_transmission(&inputs, t, eval),
        None => evaluate_design(&inputs, eval),
    };
    infeasible_as_none(evaluation.map(|e| match quantity {
        Quantity::CIn => e.point.c_in,
        Quantity::PExt => e.point.p_ext,
        Quantity::TOpt => e.point.t_opt,
        Quantity::KappaOut => e.rates.kappa_out,
        _ => unreachable!("handled above"),
    }))
}

fn theta_cell(params: &BTreeMap<Param, f64>, theta: f64, quantity: Quantity) -> Result<f64> {
    let l_in = required(params, Param::ScatterLoss)?;
    let alpha = or_default(params, Param::Alpha, 0.05);
    let c_in = geometric_cooperativity(alpha, theta, l_in)?;
    let t_opt = optimal_transmission(c_in, l_in)?;
    let t = or_default(params, Param::Transmission, t_opt);
    let point = PerformancePoint::at_transmission(c_in, l_in, t, t_opt)?;
    match quantity {
        Quantity::CIn => Ok(c_in),
        Quantity::PExt => Ok(point.p_ext),
        Quantity::TOpt => Ok(t_opt),
        Quantity::ThetaEff => Ok(theta),
        _ => Err(CavityError::invalid("quantity", format!("`{quantity}` needs a geometry, not a divergence"))),
    }
}

fn optimal_cell(params: &BTreeMap<Param, f64>, quantity: Quantity, seed: u64, eval: &EvaluationOptions<f64>) -> Result<f64> {
    let mut c = DesignConstraints::new(
        required(params, Param::MinLength)?,
        required(params, Param::Volume)?,
        or_default(params, Param::Misalignment, 0.0),
        required(params, Param::ScatterLoss)?,
    );
    c.alpha = or_default(params, Param::Alpha, c.alpha);
    c.wavelength = or_default(params, Param::Wavelength, c.wavelength);
    c.clip_threshold = or_default(params, Param::ClipThreshold, c.clip_threshold);
    let opts = OptimizeOptions {
        seed,
        evaluation: *eval,
        ..Default::default()
    };
    let design = optimize(&c, &opts)?;
    Ok(match quantity {
        Quantity::OptimalPExt => design.p_ext,
        Quantity::OptimalL => design.l,
        Quantity::OptimalR => design.r,
        Quantity::OptimalD => design.d,
        Quantity::OptimalT => design.t,
        _ => unreachable!("only optimal quantities reach here"),
    })
}
