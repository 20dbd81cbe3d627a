//! Constrained cavity design.
//!
//! [`evaluate_design`] chains the geometry, loss and performance models for a
//! single `(L, R, D)`; [`optimize`] maximises the extraction probability over
//! the geometry with Nelder-Mead from repeated random starts; [`sweep`] and
//! [`robustness`] produce two-axis grids of any derived quantity.

mod grid;
mod nelder_mead;
mod robustness;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CavityError, Result};
use crate::geometry::{
    diameter_for_volume, effective_mode, mirror_solid, stability_margin, CavityGeometry, EffectiveMode, Misalignment,
    MirrorSolid,
};
use crate::losses::{cavity_rates, clipping_loss_for_mode, CavityRates, ClippingOptions, LossBudget};
use crate::performance::{geometric_cooperativity, optimal_transmission, PerformancePoint};
use crate::scalar::Scalar;

pub use grid::{evaluate_cell, inputs_from, sweep, Axis, AxisScale, GridSpec, Param, Quantity, SweepGrid};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use robustness::{robustness, transmission_span, RobustnessScenario, RobustnessSpec, DEGRADATION_LEVELS};

/// Fixed design inputs besides the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs<T> {
    pub length: T,
    pub radius: T,
    pub diameter: T,
    pub misalignment: Misalignment<T>,
    pub l_scat: T,
    pub alpha: T,
    pub wavelength: T,
}

impl<T: Scalar> DesignInputs<T> {
    pub fn geometry(&self) -> CavityGeometry<T> {
        CavityGeometry {
            length: self.length,
            radius: self.radius,
            diameter: self.diameter,
            wavelength: self.wavelength,
        }
    }
}

/// Model switches for the evaluation pipeline.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationOptions<T> {
    pub clipping: ClippingOptions<T>,
    /// Multiplies g0 for transitions that couple sub-optimally to the cavity field.
    pub coupling_factor: T,
}

impl<T: Scalar> Default for EvaluationOptions<T> {
    fn default() -> Self {
        Self {
            clipping: ClippingOptions::default(),
            coupling_factor: T::one(),
        }
    }
}

/// Everything computed along the evaluation chain for one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation<T> {
    pub mode: EffectiveMode<T>,
    pub solid: MirrorSolid<T>,
    pub budget: LossBudget<T>,
    pub point: PerformancePoint<T>,
    /// Rates at the transmission used for `point`.
    pub transmission: T,
    pub rates: CavityRates<T>,
    pub stability_margin: T,
}

fn design_chain<T: Scalar>(inputs: &DesignInputs<T>, opts: &EvaluationOptions<T>) -> Result<(EffectiveMode<T>, MirrorSolid<T>, LossBudget<T>, T, T)> {
    let geom = inputs.geometry();
    let margin = stability_margin(&geom, &inputs.misalignment);
    if !(margin > T::zero()) {
        return Err(CavityError::UnstableGeometry(format!(
            "stability margin {margin} for L = {}, R = {}, D = {}",
            inputs.length, inputs.radius, inputs.diameter
        )));
    }
    if !(inputs.l_scat >= T::zero()) {
        return Err(CavityError::invalid("scatter_loss", "must be non-negative"));
    }
    let mode = effective_mode(&geom, &inputs.misalignment)?;
    let solid = mirror_solid(inputs.radius, inputs.diameter)?;
    let l_clip = clipping_loss_for_mode(&mode, inputs.radius, inputs.diameter, &opts.clipping)?;
    let budget = LossBudget::new(inputs.l_scat, l_clip)?;
    let factor = opts.coupling_factor * opts.coupling_factor;
    let c_in = factor * geometric_cooperativity(inputs.alpha, mode.theta_eff, budget.l_in)?;
    Ok((mode, solid, budget, c_in, margin))
}

/// Evaluates a design at its analytically optimal outcoupler transmission.
pub fn evaluate_design<T: Scalar>(inputs: &DesignInputs<T>, opts: &EvaluationOptions<T>) -> Result<DesignEvaluation<T>> {
    let (mode, solid, budget, c_in, margin) = design_chain(inputs, opts)?;
    let t_opt = optimal_transmission(c_in, budget.l_in)?;
    finish(mode, solid, budget, c_in, t_opt, t_opt, margin)
}

/// Evaluates a design at a fixed transmission `t`.
pub fn evaluate_at_transmission<T: Scalar>(
    inputs: &DesignInputs<T>,
    t: T,
    opts: &EvaluationOptions<T>,
) -> Result<DesignEvaluation<T>> {
    let (mode, solid, budget, c_in, margin) = design_chain(inputs, opts)?;
    let t_opt = optimal_transmission(c_in, budget.l_in)?;
    finish(mode, solid, budget, c_in, t, t_opt, margin)
}

fn finish<T: Scalar>(
    mode: EffectiveMode<T>,
    solid: MirrorSolid<T>,
    budget: LossBudget<T>,
    c_in: T,
    t: T,
    t_opt: T,
    stability_margin: T,
) -> Result<DesignEvaluation<T>> {
    let point = PerformancePoint::at_transmission(c_in, budget.l_in, t, t_opt)?;
    let rates = cavity_rates(mode.l_eff, t, &budget)?;
    Ok(DesignEvaluation {
        mode,
        solid,
        budget,
        point,
        transmission: t,
        rates,
        stability_margin,
    })
}

/// Optimisation envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConstraints<T> {
    pub l_min: T,
    /// Milled volume budget per mirror (m^3).
    pub v_max: T,
    pub misalignment: T,
    pub l_scat: T,
    pub clip_threshold: T,
    /// Upper bound on L and R.
    pub box_max: T,
    pub wavelength: T,
    pub alpha: T,
}

impl<T: Scalar> DesignConstraints<T> {
    /// Constraints with the default clip threshold (1 ppm), box (3 mm),
    /// wavelength (854 nm) and branching ratio (1/20).
    pub fn new(l_min: T, v_max: T, misalignment: T, l_scat: T) -> Self {
        Self {
            l_min,
            v_max,
            misalignment,
            l_scat,
            clip_threshold: T::lit(1e-6),
            box_max: T::lit(3e-3),
            wavelength: T::lit(854e-9),
            alpha: T::lit(0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_min", self.l_min),
            ("v_max", self.v_max),
            ("clip_threshold", self.clip_threshold),
            ("box_max", self.box_max),
            ("wavelength", self.wavelength),
            ("scatter_loss", self.l_scat),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(CavityError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.misalignment >= T::zero()) {
            return Err(CavityError::invalid("misalignment", "must be non-negative"));
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(CavityError::invalid("alpha", "must lie in (0, 1]"));
        }
        if self.l_min >= self.box_max {
            return Err(CavityError::invalid("l_min", "must be below box_max"));
        }
        Ok(())
    }

    fn inputs(&self, length: T, radius: T, diameter: T) -> DesignInputs<T> {
        DesignInputs {
            length,
            radius,
            diameter,
            misalignment: Misalignment {
                perpendicular: self.misalignment,
                parallel: self.misalignment,
            },
            l_scat: self.l_scat,
            alpha: self.alpha,
            wavelength: self.wavelength,
        }
    }
}

/// Which variables the optimiser searches over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Search `(L, R)`; `D` is the largest diameter the volume budget allows.
    #[default]
    Reduced,
    /// Search `(L, R, D)` with the volume budget as a penalised constraint.
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions<T> {
    pub mode: SearchMode,
    pub seed: u64,
    pub min_restarts: usize,
    pub max_restarts: usize,
    /// Relative agreement in P_ext required between the two best optima.
    pub agreement: T,
    pub nelder_mead: NelderMeadOptions<T>,
    /// Stopping rule for the restarts from each converged point.
    pub polish: NelderMeadOptions<T>,
    pub evaluation: EvaluationOptions<T>,
}

impl<T: Scalar> Default for OptimizeOptions<T> {
    fn default() -> Self {
        Self {
            mode: SearchMode::Reduced,
            seed: 0,
            min_restarts: 4,
            max_restarts: 64,
            agreement: T::lit(1e-3),
            nelder_mead: NelderMeadOptions::default(),
            polish: NelderMeadOptions {
                f_spread: T::lit(1e-13),
                x_spread: T::lit(1e-9),
                ..Default::default()
            },
            evaluation: EvaluationOptions::default(),
        }
    }
}

/// Signed slack of every constraint at a design; all are non-negative for a
/// feasible design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargins<T> {
    /// `L - l_min` (m).
    pub length: T,
    /// `v_max - V` (m^3).
    pub volume: T,
    /// `clip_threshold - L_clip`.
    pub clipping: T,
    pub stability: T,
    /// `box_max - L` (m).
    pub box_length: T,
    /// `box_max - R` (m).
    pub box_radius: T,
}

impl<T: Scalar> ConstraintMargins<T> {
    pub fn all_satisfied(&self) -> bool {
        self.length >= T::zero()
            && self.volume >= T::zero()
            && self.clipping >= T::zero()
            && self.stability > T::zero()
            && self.box_length >= T::zero()
            && self.box_radius >= T::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalDesign<T> {
    pub l: T,
    pub r: T,
    pub d: T,
    pub t: T,
    pub p_ext: T,
    pub c_in: T,
    /// Outcoupling rate `T c / (4 L')` (rad/s).
    pub kappa_out: T,
    pub theta_eff: T,
    pub l_clip: T,
    pub volume: T,
    pub restarts_used: usize,
    /// Best P_ext reached by any other start.
    pub runner_up_p_ext: T,
    pub feasible: bool,
    pub margins: ConstraintMargins<T>,
    pub constraints: DesignConstraints<T>,
}

impl<T: Scalar> OptimalDesign<T> {
    pub fn inputs(&self) -> DesignInputs<T> {
        self.constraints.inputs(self.l, self.r, self.d)
    }
}

struct Problem<'a, T> {
    constraints: &'a DesignConstraints<T>,
    opts: &'a OptimizeOptions<T>,
    scale: T,
}

enum Outcome<T> {
    Feasible(DesignEvaluation<T>, T),
    Infeasible(T),
}

impl<T: Scalar> Problem<'_, T> {
    fn unpack(&self, x: &[T]) -> Result<(T, T, T)> {
        let length = x[0] * self.scale;
        let radius = x[1] * self.scale;
        if !(radius > T::zero()) {
            return Err(CavityError::invalid("radius", "must be positive"));
        }
        let diameter = match self.opts.mode {
            SearchMode::Reduced => diameter_for_volume(radius, self.constraints.v_max)?,
            SearchMode::Full => x[2] * self.scale,
        };
        Ok((length, radius, diameter))
    }

    fn assess(&self, x: &[T]) -> Outcome<T> {
        let c = self.constraints;
        let big = T::lit(1e3);
        let (length, radius, diameter) = match self.unpack(x) {
            Ok(v) => v,
            Err(_) => return Outcome::Infeasible(big),
        };
        let mut violation = (c.l_min - length).max(T::zero()) / c.l_min
            + (length - c.box_max).max(T::zero()) / c.box_max
            + (radius - c.box_max).max(T::zero()) / c.box_max;
        let volume = match mirror_solid(radius, diameter) {
            Ok(s) => s.volume,
            Err(_) => return Outcome::Infeasible(big + violation),
        };
        violation = violation + (volume - c.v_max).max(T::zero()) / c.v_max;
        let inputs = c.inputs(length, radius, diameter);
        let margin = stability_margin(&inputs.geometry(), &inputs.misalignment);
        if !(margin > T::zero()) {
            return Outcome::Infeasible(T::one() + violation - margin);
        }
        match evaluate_design(&inputs, &self.opts.evaluation) {
            Ok(eval) => {
                let clip = eval.budget.l_clip;
                if clip > c.clip_threshold {
                    violation = violation + (clip / c.clip_threshold).log10();
                }
                if violation > T::zero() {
                    Outcome::Infeasible(violation)
                } else {
                    Outcome::Feasible(eval, volume)
                }
            }
            Err(_) => Outcome::Infeasible(big + violation),
        }
    }

    /// Minimisation objective: `-P_ext` when feasible, `1 + violation` otherwise.
    fn objective(&self, x: &[T]) -> T {
        match self.assess(x) {
            Outcome::Feasible(eval, _) => -eval.point.p_ext,
            Outcome::Infeasible(v) => T::one() + v,
        }
    }

    fn sample_start(&self, rng: &mut ChaCha8Rng) -> Option<Vec<T>> {
        let c = self.constraints;
        let l_min = c.l_min.as_f64();
        let top = c.box_max.as_f64();
        let scale = self.scale.as_f64();
        let mut stable_only = None;
        for _ in 0..20_000 {
            let length = rng.random_range(l_min..=top);
            let r_lo = (length / 2.0).max(f64::MIN_POSITIVE);
            if r_lo >= top {
                continue;
            }
            let radius = rng.random_range(r_lo..=top);
            let mut x = vec![T::lit(length / scale), T::lit(radius / scale)];
            if self.opts.mode == SearchMode::Full {
                let cap = diameter_for_volume(T::lit(radius), c.v_max).ok()?.as_f64();
                let diameter = rng.random_range(0.0..=cap);
                x.push(T::lit(diameter / scale));
            }
            match self.assess(&x) {
                Outcome::Feasible(..) => return Some(x),
                Outcome::Infeasible(_) if stable_only.is_none() => {
                    let (l, r, d) = self.unpack(&x).ok()?;
                    let inputs = c.inputs(l, r, d);
                    if stability_margin(&inputs.geometry(), &inputs.misalignment) > T::zero() {
                        stable_only = Some(x);
                    }
                }
                Outcome::Infeasible(_) => {}
            }
        }
        stable_only
    }

    fn run_start(&self, index: usize) -> Option<(Vec<T>, T)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(index as u64);
        let x0 = self.sample_start(&mut rng)?;
        let step: Vec<T> = x0.iter().map(|v| *v * T::lit(0.05)).collect();
        let objective = |x: &[T]| self.objective(x);
        let mut best = nelder_mead(objective, &x0, &step, &self.opts.nelder_mead);
        // restart from the converged point with fresh simplices until the
        // objective stops moving; a simplex pinned on a constraint collapses
        for k in 0..POLISH_ROUNDS {
            let scale = T::lit(1e-2 * 0.5f64.powi(k as i32));
            let step: Vec<T> = best.x.iter().map(|v| *v * scale).collect();
            let next = nelder_mead(objective, &best.x, &step, &self.opts.polish);
            let gain = best.f - next.f;
            if next.f < best.f {
                best = next;
            }
            if !(gain > T::lit(POLISH_GAIN)) && k > 0 {
                break;
            }
        }
        match self.assess(&best.x) {
            Outcome::Feasible(eval, _) => Some((best.x, eval.point.p_ext)),
            Outcome::Infeasible(_) => None,
        }
    }
}

const BATCH: usize = 4;
const POLISH_ROUNDS: usize = 12;
const POLISH_GAIN: f64 = 1e-12;

/// Maximises P_ext over the cavity geometry subject to `constraints`.
///
/// Starts are drawn uniformly from `l_min <= L <= box_max`, `L/2 < R <= box_max`
/// and rejected until feasible. Batches of starts run until the two best
/// optima agree in P_ext to the requested relative tolerance (and at least
/// `min_restarts` starts have run). Results depend only on the seed, never on
/// thread scheduling.
pub fn optimize<T: Scalar>(constraints: &DesignConstraints<T>, opts: &OptimizeOptions<T>) -> Result<OptimalDesign<T>> {
    constraints.validate()?;
    let problem = Problem {
        constraints,
        opts,
        scale: constraints.l_min,
    };
    let mut optima: Vec<(Vec<T>, T)> = Vec::new();
    let mut used = 0usize;
    while used < opts.max_restarts {
        let batch = BATCH.min(opts.max_restarts - used);
        let found: Vec<Option<(Vec<T>, T)>> = (used..used + batch).into_par_iter().map(|i| problem.run_start(i)).collect();
        used += batch;
        optima.extend(found.into_iter().flatten());
        optima.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        if used >= opts.min_restarts && optima.len() >= 2 {
            let (best, second) = (optima[0].1, optima[1].1);
            if (best - second).abs() <= opts.agreement * best.abs() {
                break;
            }
        }
    }
    let (x, _) = optima.first().cloned().ok_or(CavityError::NoFeasibleDesign { starts: used })?;
    let runner_up = optima.get(1).map(|o| o.1).unwrap_or(T::zero());
    let (eval, volume) = match problem.assess(&x) {
        Outcome::Feasible(e, v) => (e, v),
        Outcome::Infeasible(_) => return Err(CavityError::NoFeasibleDesign { starts: used }),
    };
    let (l, r, d) = problem.unpack(&x)?;
    let c = constraints;
    let margins = ConstraintMargins {
        length: l - c.l_min,
        volume: c.v_max - volume,
        clipping: c.clip_threshold - eval.budget.l_clip,
        stability: eval.stability_margin,
        box_length: c.box_max - l,
        box_radius: c.box_max - r,
    };
    Ok(OptimalDesign {
        l,
        r,
        d,
        t: eval.transmission,
        p_ext: eval.point.p_ext,
        c_in: eval.point.c_in,
        kappa_out: eval.rates.kappa_out,
        theta_eff: eval.mode.theta_eff,
        l_clip: eval.budget.l_clip,
        volume,
        restarts_used: used,
        runner_up_p_ext: runner_up,
        feasible: margins.all_satisfied(),
        margins,
        constraints: *constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::performance::p_ext_bound;

    fn base() -> DesignInputs<f64> {
        DesignInputs {
            length: 300e-6,
            radius: 300e-6,
            diameter: 200e-6,
            misalignment: Misalignment::none(),
            l_scat: 100e-6,
            alpha: 0.05,
            wavelength: 854e-9,
        }
    }

    #[test]
    fn unclipped_design_reaches_geometric_bound() {
        let inputs = base();
        let e = evaluate_design(&inputs, &EvaluationOptions::default()).unwrap();
        assert_eq!(e.budget.l_clip, 0.0);
        let theta = crate::geometry::divergence(&inputs.geometry()).unwrap();
        let c_in = 6.0 * 0.05 * theta * theta / 100e-6;
        assert!((e.point.p_ext - p_ext_bound(c_in)).abs() < 1e-14);
        assert!((e.point.c_in - c_in).abs() / c_in < 1e-12);
    }

    #[test]
    fn reference_theta_point() {
        // theta' = 0.3 rad, L_scat = 100 ppm, alpha = 1/20 -> C_in = 270
        let p = PerformancePoint::optimal(geometric_cooperativity(0.05f64, 0.3, 100e-6).unwrap(), 100e-6).unwrap();
        assert!((p.p_ext - 0.917_557_752_965_829).abs() < 1e-12 && (p.p_ext - 0.918).abs() < 5e-4, "{}", p.p_ext);
    }

    #[test]
    fn unstable_design_is_an_error() {
        let inputs = DesignInputs {
            length: 700e-6,
            ..base()
        };
        assert!(matches!(
            evaluate_design(&inputs, &EvaluationOptions::default()),
            Err(CavityError::UnstableGeometry(_))
        ));
    }

    #[test]
    fn coupling_factor_scales_cooperativity() {
        let opts = EvaluationOptions {
            coupling_factor: 0.5,
            ..Default::default()
        };
        let a = evaluate_design(&base(), &EvaluationOptions::default()).unwrap();
        let b = evaluate_design(&base(), &opts).unwrap();
        assert!((b.point.c_in - 0.25 * a.point.c_in).abs() < 1e-12 * a.point.c_in);
    }

    #[test]
    fn optimum_is_feasible_and_deterministic() {
        let c = DesignConstraints::<f64>::new(125e-6, 10e-15, 5e-6, 100e-6);
        let opts = OptimizeOptions {
            seed: 11,
            ..Default::default()
        };
        let a = optimize(&c, &opts).unwrap();
        let b = optimize(&c, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.feasible && a.margins.all_satisfied());
        assert!(a.restarts_used >= 4);
        assert!((a.p_ext - a.runner_up_p_ext).abs() <= 1e-3 * a.p_ext);
        assert!(a.l_clip <= 1e-6);
        let t = optimal_transmission(a.c_in, a.constraints.l_scat + a.l_clip).unwrap();
        assert!((a.t - t).abs() < 1e-15);
    }

    #[test]
    fn invalid_constraints_are_rejected() {
        let mut c = DesignConstraints::new(125e-6, 10e-15, 5e-6, 100e-6);
        c.clip_threshold = 0.0;
        assert!(matches!(optimize(&c, &OptimizeOptions::default()), Err(CavityError::InvalidParameter { .. })));
    }
}
