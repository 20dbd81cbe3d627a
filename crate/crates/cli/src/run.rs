use std::collections::BTreeMap;

use ioncav::losses::{ClipModel, ClipQuadrature};
use ioncav::optimizer::{
    evaluate_at_transmission, evaluate_design, inputs_from, optimize, robustness, sweep, Axis, AxisScale, DesignConstraints,
    EvaluationOptions, GridSpec, OptimalDesign, OptimizeOptions, Param, Quantity, RobustnessScenario, RobustnessSpec,
    SearchMode, SweepGrid,
};
use ioncav::vstirap::{emission_family, optimize_pulse, EmissionFamily, LambdaCavitySystem, PulseSearchOptions};
use serde::{Deserialize, Serialize};

use crate::config::{Fields, Format, Mode, RunConfig};
use crate::output::{grid_sidecar, grid_to_csv, records_to_csv, to_json};
use crate::units::Dimension;
use crate::CliError;

/// Serialised result: the main document, plus the grid sidecar for CSV grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub main: String,
    pub sidecar: Option<String>,
}

pub fn run(config: &RunConfig) -> Result<Rendered, CliError> {
    let mut fields = Fields::new("", config.parameters.clone());
    let format = config.output.format;
    let rendered = match config.mode {
        Mode::Evaluate => render_records(&[evaluate_mode(&mut fields)?], format)?,
        Mode::Optimize => {
            let (c, opts) = constraints(&mut fields, config.seed)?;
            fields.finish()?;
            let design = optimize(&c, &opts)?;
            if !design.feasible {
                return Err(infeasible("the best design found violates a constraint"));
            }
            render_records(&[OptimizeRecord::from(&design)], format)?
        }
        Mode::Sweep => {
            let eval = evaluation(&mut fields)?;
            let spec = grid_spec(&mut fields)?;
            fields.finish()?;
            render_grid(&sweep(&spec, config.seed, &eval)?, format)?
        }
        Mode::Robustness => {
            let scenario: RobustnessScenario = fields
                .typed("scenario")?
                .ok_or_else(|| CliError::validation("scenario", "is required"))?;
            let mut spec = RobustnessSpec::new(scenario);
            if let Some(spans) = fields.list("spans", Dimension::Fraction)? {
                spec.spans = spans
                    .try_into()
                    .map_err(|_| CliError::validation("spans", "expected two relative half-widths"))?;
            }
            if let Some(steps) = fields.count("steps")? {
                spec.steps = steps;
            }
            let (c, opts) = constraints(&mut fields, config.seed)?;
            fields.finish()?;
            let design = optimize(&c, &opts)?;
            if !design.feasible {
                return Err(infeasible("the best design found violates a constraint"));
            }
            render_grid(&robustness(&design, &spec, &opts.evaluation)?, format)?
        }
        Mode::Vstirap => vstirap_mode(&mut fields, format)?,
    };
    Ok(rendered)
}

fn infeasible(message: &str) -> CliError {
    CliError {
        kind: crate::ErrorKind::Infeasible,
        field: None,
        message: message.to_string(),
    }
}

fn render_records<T: Serialize>(records: &[T], format: Format) -> Result<Rendered, CliError> {
    let main = match format {
        Format::Csv => records_to_csv(records)?,
        Format::Json if records.len() == 1 => to_json(&records[0])?,
        Format::Json => to_json(&records)?,
    };
    Ok(Rendered { main, sidecar: None })
}

fn render_grid(grid: &SweepGrid, format: Format) -> Result<Rendered, CliError> {
    Ok(match format {
        Format::Csv => Rendered {
            main: grid_to_csv(grid),
            sidecar: Some(to_json(&grid_sidecar(grid))?),
        },
        Format::Json => Rendered {
            main: to_json(grid)?,
            sidecar: None,
        },
    })
}

pub fn param_dimension(p: Param) -> Dimension {
    match p.unit() {
        "m" => Dimension::Length,
        "m3" => Dimension::Volume,
        "rad" => Dimension::Angle,
        _ => Dimension::Fraction,
    }
}

fn evaluation(fields: &mut Fields) -> Result<EvaluationOptions<f64>, CliError> {
    let mut eval = EvaluationOptions::default();
    if let Some(model) = fields.typed::<ClipModel>("clip_model")? {
        eval.clipping.model = model;
    }
    if let Some(scheme) = fields.typed::<ClipQuadrature>("clip_quadrature")? {
        eval.clipping.scheme = scheme;
    }
    if let Some(f) = fields.quantity("coupling_factor", Dimension::Pure)? {
        eval.coupling_factor = f;
    }
    Ok(eval)
}

fn param_map(fields: &mut Fields, allowed: &[Param]) -> Result<BTreeMap<Param, f64>, CliError> {
    let mut map = BTreeMap::new();
    for &p in allowed {
        if let Some(v) = fields.quantity(p.name(), param_dimension(p))? {
            map.insert(p, v);
        }
    }
    Ok(map)
}

/// Everything a single design evaluation reports. Field names carry units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRecord {
    pub length_m: f64,
    pub radius_m: f64,
    pub diameter_m: f64,
    pub misalignment_perp_m: f64,
    pub misalignment_par_m: f64,
    pub wavelength_m: f64,
    pub alpha: f64,
    pub scatter_loss: f64,
    pub clipping_loss: f64,
    pub intrinsic_loss: f64,
    pub transmission: f64,
    pub t_opt: f64,
    pub c_in: f64,
    pub cooperativity: f64,
    pub p_gen: f64,
    pub p_ext: f64,
    pub kappa_in_rad_per_s: f64,
    pub kappa_out_rad_per_s: f64,
    pub finesse: f64,
    pub theta_eff_rad: f64,
    pub l_eff_m: f64,
    pub waist_m: f64,
    pub mirror_spot_m: f64,
    pub mirror_offset_m: f64,
    pub sagitta_m: f64,
    pub volume_m3: f64,
    pub stability_margin: f64,
}

fn evaluate_mode(fields: &mut Fields) -> Result<EvaluateRecord, CliError> {
    use Param::*;
    let eval = evaluation(fields)?;
    let params = param_map(
        fields,
        &[Length, Radius, Diameter, Volume, Misalignment, MisalignmentPerp, MisalignmentPar, ScatterLoss, Transmission, Alpha, Wavelength],
    )?;
    fields_done(fields)?;
    if !params.contains_key(&ScatterLoss) {
        return Err(CliError::validation("scatter_loss", "is required"));
    }
    let inputs = inputs_from(&params)?;
    let e = match params.get(&Transmission) {
        Some(&t) => evaluate_at_transmission(&inputs, t, &eval)?,
        None => evaluate_design(&inputs, &eval)?,
    };
    Ok(EvaluateRecord {
        length_m: inputs.length,
        radius_m: inputs.radius,
        diameter_m: inputs.diameter,
        misalignment_perp_m: inputs.misalignment.perpendicular,
        misalignment_par_m: inputs.misalignment.parallel,
        wavelength_m: inputs.wavelength,
        alpha: inputs.alpha,
        scatter_loss: e.budget.l_scat,
        clipping_loss: e.budget.l_clip,
        intrinsic_loss: e.budget.l_in,
        transmission: e.transmission,
        t_opt: e.point.t_opt,
        c_in: e.point.c_in,
        cooperativity: e.point.c,
        p_gen: e.point.p_gen,
        p_ext: e.point.p_ext,
        kappa_in_rad_per_s: e.rates.kappa_in,
        kappa_out_rad_per_s: e.rates.kappa_out,
        finesse: e.rates.finesse,
        theta_eff_rad: e.mode.theta_eff,
        l_eff_m: e.mode.l_eff,
        waist_m: e.mode.w0,
        mirror_spot_m: e.mode.w_mirror,
        mirror_offset_m: e.mode.dx_mirror,
        sagitta_m: e.solid.sagitta,
        volume_m3: e.solid.volume,
        stability_margin: e.stability_margin,
    })
}

fn constraints(fields: &mut Fields, seed: u64) -> Result<(DesignConstraints<f64>, OptimizeOptions<f64>), CliError> {
    let evaluation = evaluation(fields)?;
    let mut c = DesignConstraints::new(
        fields.required("min_length", Dimension::Length)?,
        fields.required("volume", Dimension::Volume)?,
        fields.quantity("misalignment", Dimension::Length)?.unwrap_or(0.0),
        fields.required("scatter_loss", Dimension::Fraction)?,
    );
    if let Some(v) = fields.quantity("clip_threshold", Dimension::Fraction)? {
        c.clip_threshold = v;
    }
    if let Some(v) = fields.quantity("box_max", Dimension::Length)? {
        c.box_max = v;
    }
    if let Some(v) = fields.quantity("wavelength", Dimension::Length)? {
        c.wavelength = v;
    }
    if let Some(v) = fields.quantity("alpha", Dimension::Fraction)? {
        c.alpha = v;
    }
    c.validate()?;
    let mut opts = OptimizeOptions {
        seed,
        evaluation,
        ..Default::default()
    };
    if let Some(mode) = fields.typed::<SearchMode>("search")? {
        opts.mode = mode;
    }
    if let Some(n) = fields.count("max_restarts")? {
        opts.max_restarts = n.max(opts.min_restarts);
    }
    Ok((c, opts))
}

/// Optimal design with its envelope, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRecord {
    pub length_m: f64,
    pub radius_m: f64,
    pub diameter_m: f64,
    pub transmission: f64,
    pub p_ext: f64,
    pub c_in: f64,
    pub kappa_out_rad_per_s: f64,
    pub theta_eff_rad: f64,
    pub clipping_loss: f64,
    pub volume_m3: f64,
    pub restarts_used: usize,
    pub runner_up_p_ext: f64,
    pub feasible: bool,
    pub margin_length_m: f64,
    pub margin_volume_m3: f64,
    pub margin_clipping: f64,
    pub margin_stability: f64,
    pub margin_box_length_m: f64,
    pub margin_box_radius_m: f64,
    pub min_length_m: f64,
    pub max_volume_m3: f64,
    pub misalignment_m: f64,
    pub scatter_loss: f64,
    pub clip_threshold: f64,
    pub box_max_m: f64,
    pub wavelength_m: f64,
    pub alpha: f64,
}

impl From<&OptimalDesign<f64>> for OptimizeRecord {
    fn from(d: &OptimalDesign<f64>) -> Self {
        let c = &d.constraints;
        Self {
            length_m: d.l,
            radius_m: d.r,
            diameter_m: d.d,
            transmission: d.t,
            p_ext: d.p_ext,
            c_in: d.c_in,
            kappa_out_rad_per_s: d.kappa_out,
            theta_eff_rad: d.theta_eff,
            clipping_loss: d.l_clip,
            volume_m3: d.volume,
            restarts_used: d.restarts_used,
            runner_up_p_ext: d.runner_up_p_ext,
            feasible: d.feasible,
            margin_length_m: d.margins.length,
            margin_volume_m3: d.margins.volume,
            margin_clipping: d.margins.clipping,
            margin_stability: d.margins.stability,
            margin_box_length_m: d.margins.box_length,
            margin_box_radius_m: d.margins.box_radius,
            min_length_m: c.l_min,
            max_volume_m3: c.v_max,
            misalignment_m: c.misalignment,
            scatter_loss: c.l_scat,
            clip_threshold: c.clip_threshold,
            box_max_m: c.box_max,
            wavelength_m: c.wavelength,
            alpha: c.alpha,
        }
    }
}

fn grid_spec(fields: &mut Fields) -> Result<GridSpec, CliError> {
    let axes = fields.array("axes")?.ok_or_else(|| CliError::validation("axes", "is required"))?;
    let axes: Vec<Axis> = axes
        .into_iter()
        .map(|mut a| {
            let param: Param = a.typed("param")?.ok_or_else(|| CliError::validation("axes.param", "is required"))?;
            let dim = param_dimension(param);
            let axis = Axis {
                param,
                start: a.required("start", dim)?,
                stop: a.required("stop", dim)?,
                steps: a.count("steps")?.ok_or_else(|| CliError::validation("axes.steps", "is required"))?,
                scale: a.typed::<AxisScale>("scale")?.unwrap_or_default(),
                centre: a.quantity("centre", dim)?,
            };
            a.finish()?;
            Ok(axis)
        })
        .collect::<Result<_, CliError>>()?;
    let axes: [Axis; 2] = axes.try_into().map_err(|_| CliError::validation("axes", "expected exactly two axes"))?;
    let mut fixed = BTreeMap::new();
    if let Some(mut f) = fields.object("fixed")? {
        for key in f.keys() {
            let p: Param = key.parse().map_err(|_| CliError::validation(&format!("fixed.{key}"), "unknown parameter"))?;
            fixed.insert(p, f.required(&key, param_dimension(p))?);
        }
        f.finish()?;
    }
    let quantity: Quantity = fields
        .typed("quantity")?
        .ok_or_else(|| CliError::validation("quantity", "is required"))?;
    let spec = GridSpec { axes, fixed, quantity };
    spec.validate()?;
    Ok(spec)
}

/// One point of an emission curve. Times are in units of `1/kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRow {
    pub cooperativity: f64,
    pub kappa_over_gamma: f64,
    pub kappa_tau: f64,
    pub p_out: f64,
    pub limit: f64,
    pub peak_rabi_over_kappa: f64,
    pub kappa_width: f64,
    pub conservation_error: f64,
}

pub fn emission_rows(family: &EmissionFamily<f64>) -> Vec<EmissionRow> {
    family
        .curves
        .iter()
        .flat_map(|c| {
            family.kappa_tau.iter().enumerate().map(move |(k, &tau)| EmissionRow {
                cooperativity: c.c,
                kappa_over_gamma: c.kappa_over_gamma,
                kappa_tau: tau,
                p_out: c.p_out[k],
                limit: c.limit,
                peak_rabi_over_kappa: c.pulses[k].peak,
                kappa_width: c.pulses[k].width,
                conservation_error: c.conservation_error,
            })
        })
        .collect()
}

/// Emission-rate sample of an optimised pulse, `2 kappa |c_1|^2` in units of `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformRow {
    pub kappa_t: f64,
    pub emission_rate_over_kappa: f64,
}

fn vstirap_mode(fields: &mut Fields, format: Format) -> Result<Rendered, CliError> {
    let cs = fields.list("cooperativity", Dimension::Pure)?.unwrap_or_else(|| vec![0.1, 1.0, 10.0]);
    let ratios = fields.list("kappa_over_gamma", Dimension::Pure)?.unwrap_or_else(|| vec![0.1, 1.0, 10.0]);
    let taus = match fields.object("kappa_tau_range")? {
        Some(mut r) => {
            let (start, stop) = (r.required("start", Dimension::Pure)?, r.required("stop", Dimension::Pure)?);
            let points = r.count("points")?.unwrap_or(25);
            r.finish()?;
            if !(start > 0.0 && stop > start && points >= 2) {
                return Err(CliError::validation("kappa_tau_range", "need 0 < start < stop and at least two points"));
            }
            (0..points).map(|k| start * (stop / start).powf(k as f64 / (points - 1) as f64)).collect()
        }
        None => fields
            .list("kappa_tau", Dimension::Pure)?
            .unwrap_or_else(|| (0..25).map(|k| 0.3 * (100.0f64 / 0.3).powf(k as f64 / 24.0)).collect()),
    };
    let mut opts = PulseSearchOptions::default();
    if let Some(n) = fields.count("peak_points")? {
        opts.peak_points = n;
    }
    if let Some(n) = fields.count("width_points")? {
        opts.width_points = n;
    }
    if let Some(n) = fields.count("refine_rounds")? {
        opts.refine_rounds = n;
    }
    if let Some(tol) = fields.quantity("tol", Dimension::Pure)? {
        opts.sim.tol = tol;
    }
    if let Some(n) = fields.count("waveform_samples")? {
        opts.waveform_samples = n;
    }
    let waveform = fields.flag("waveform")?.unwrap_or(false);
    if opts.peak_points == 0 || opts.width_points == 0 || !(opts.sim.tol > 0.0) {
        return Err(CliError::validation("parameters", "point counts and tol must be positive"));
    }
    if waveform {
        let (&[c], &[ratio], &[tau]) = (&cs[..], &ratios[..], &taus[..]) else {
            return Err(CliError::validation(
                "waveform",
                "needs exactly one cooperativity, one kappa_over_gamma and one kappa_tau",
            ));
        };
        fields_done(fields)?;
        let sys = LambdaCavitySystem::from_cooperativity(c, 1.0, 1.0 / ratio)?;
        let best = optimize_pulse(&sys, tau, &[], &opts)?;
        return match format {
            Format::Json => Ok(Rendered {
                main: to_json(&best)?,
                sidecar: None,
            }),
            Format::Csv => {
                let rows: Vec<WaveformRow> = best
                    .result
                    .waveform
                    .iter()
                    .map(|&(t, r)| WaveformRow {
                        kappa_t: t,
                        emission_rate_over_kappa: r,
                    })
                    .collect();
                render_records(&rows, format)
            }
        };
    }
    fields_done(fields)?;
    let family = emission_family(&cs, &ratios, &taus, &opts)?;
    match format {
        Format::Json => Ok(Rendered {
            main: to_json(&family)?,
            sidecar: None,
        }),
        Format::Csv => render_records(&emission_rows(&family), format),
    }
}

fn fields_done(fields: &mut Fields) -> Result<(), CliError> {
    std::mem::replace(fields, Fields::new("", Default::default())).finish()
}
