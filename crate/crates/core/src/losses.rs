//! Intrinsic round-trip losses (surface scattering and aperture clipping),
//! cavity decay rates and the clipping-limited critical length.

use serde::{Deserialize, Serialize};

use crate::error::{CavityError, Result};
use crate::geometry::{effective_mode, mirror_solid, CavityGeometry, EffectiveMode, Misalignment};
use crate::quadrature::{beam_centred_loss, disk_polar_capture, QuadratureTolerance};
use crate::scalar::{speed_of_light, Scalar};

/// Losses below this are reported as exactly zero.
pub const LOSS_FLOOR: f64 = 1e-13;

/// Resolution of [`clipping_boundary`] (m).
pub const BOUNDARY_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget<T> {
    pub l_scat: T,
    pub l_clip: T,
    pub l_in: T,
}

impl<T: Scalar> LossBudget<T> {
    pub fn new(l_scat: T, l_clip: T) -> Result<Self> {
        if !(l_scat >= T::zero()) {
            return Err(CavityError::invalid("l_scat", "must be non-negative"));
        }
        if !(l_clip >= T::zero()) {
            return Err(CavityError::invalid("l_clip", "must be non-negative"));
        }
        Ok(Self {
            l_scat,
            l_clip,
            l_in: l_scat + l_clip,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityRates<T> {
    /// Total field decay rate (rad/s).
    pub kappa: T,
    pub kappa_in: T,
    pub kappa_out: T,
    pub finesse: T,
}

/// How the round-trip clipping loss is attributed to the mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipModel {
    /// One overlap integral with displacement `phi L' / 2`, taken as the round-trip value.
    #[default]
    SingleSurface,
    /// Sum of one overlap integral per mirror, each displaced by `R sin(phi)`
    /// from its own axis (the tilted axis passes through both centres of curvature).
    TwoMirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipQuadrature {
    #[default]
    BeamCentred,
    DiskPolar,
}

#[derive(Debug, Clone, Copy)]
pub struct ClippingOptions<T> {
    pub model: ClipModel,
    pub scheme: ClipQuadrature,
    pub tolerance: QuadratureTolerance<T>,
}

impl<T: Scalar> Default for ClippingOptions<T> {
    fn default() -> Self {
        Self {
            model: ClipModel::default(),
            scheme: ClipQuadrature::default(),
            tolerance: QuadratureTolerance::default(),
        }
    }
}

/// Round-trip scattering loss `2 [1 - exp(-(4 pi sigma / lambda)^2)]` of a
/// surface with RMS roughness `sigma`.
pub fn scattering_loss<T: Scalar>(sigma: T, wavelength: T) -> Result<T> {
    if !(sigma >= T::zero()) {
        return Err(CavityError::invalid("roughness", "must be non-negative"));
    }
    if !(wavelength > T::zero()) {
        return Err(CavityError::invalid("wavelength", "must be positive"));
    }
    let x = T::lit(4.0) * T::PI() * sigma / wavelength;
    Ok(-T::lit(2.0) * (-(x * x)).exp_m1())
}

fn aperture_loss<T: Scalar>(aperture: T, w: T, offset: T, opts: &ClippingOptions<T>) -> Result<T> {
    let loss = match opts.scheme {
        ClipQuadrature::BeamCentred => beam_centred_loss(aperture, w, offset, &opts.tolerance)?,
        ClipQuadrature::DiskPolar => T::one() - disk_polar_capture(aperture, w, offset, &opts.tolerance)?,
    };
    let loss = loss.max(T::zero()).min(T::one());
    Ok(if loss < T::lit(LOSS_FLOOR) { T::zero() } else { loss })
}

/// Clipping loss of an already-computed effective mode on mirrors of
/// diameter `diameter` and radius of curvature `radius`.
pub fn clipping_loss_for_mode<T: Scalar>(
    mode: &EffectiveMode<T>,
    radius: T,
    diameter: T,
    opts: &ClippingOptions<T>,
) -> Result<T> {
    let aperture = diameter / T::lit(2.0);
    match opts.model {
        ClipModel::SingleSurface => aperture_loss(aperture, mode.w_mirror, mode.dx_mirror, opts),
        ClipModel::TwoMirror => {
            let offset = radius * mode.phi.sin();
            let per_mirror = aperture_loss(aperture, mode.w_mirror, offset, opts)?;
            Ok((per_mirror + per_mirror).min(T::one()))
        }
    }
}

/// Round-trip clipping loss `1 - overlap` of the displaced mode with the mirror disk.
pub fn clipping_loss<T: Scalar>(geom: &CavityGeometry<T>, mis: &Misalignment<T>) -> Result<T> {
    clipping_loss_with(geom, mis, &ClippingOptions::default())
}

pub fn clipping_loss_with<T: Scalar>(
    geom: &CavityGeometry<T>,
    mis: &Misalignment<T>,
    opts: &ClippingOptions<T>,
) -> Result<T> {
    let mode = effective_mode(geom, mis)?;
    clipping_loss_for_mode(&mode, geom.radius, geom.diameter, opts)
}

/// Decay rates and finesse for an outcoupler of transmission `t`.
pub fn cavity_rates<T: Scalar>(l_eff: T, t: T, budget: &LossBudget<T>) -> Result<CavityRates<T>> {
    if !(t >= T::zero()) {
        return Err(CavityError::invalid("transmission", "must be non-negative"));
    }
    if !(l_eff > T::zero()) {
        return Err(CavityError::invalid("length", "must be positive"));
    }
    let total = t + budget.l_in;
    if total == T::zero() {
        return Err(CavityError::DegenerateCavity);
    }
    let per_loss = speed_of_light::<T>() / (T::lit(4.0) * l_eff);
    let kappa_in = per_loss * budget.l_in;
    let kappa_out = per_loss * t;
    Ok(CavityRates {
        kappa: kappa_in + kappa_out,
        kappa_in,
        kappa_out,
        finesse: (T::PI() + T::PI()) / total,
    })
}

/// Largest length `L*` such that the clipping loss stays at or below
/// `threshold` for every length in `(2h, L*]`.
///
/// A coarse scan locates the first violating length, then bisection narrows
/// it to [`BOUNDARY_RESOLUTION`]. Lengths beyond the stability edge count as
/// violations, so a threshold of one returns the stability edge itself.
pub fn clipping_boundary<T: Scalar>(
    radius: T,
    diameter: T,
    mis: &Misalignment<T>,
    threshold: T,
    wavelength: T,
) -> Result<T> {
    clipping_boundary_with(radius, diameter, mis, threshold, wavelength, &ClippingOptions::default())
}

pub fn clipping_boundary_with<T: Scalar>(
    radius: T,
    diameter: T,
    mis: &Misalignment<T>,
    threshold: T,
    wavelength: T,
    opts: &ClippingOptions<T>,
) -> Result<T> {
    if !(threshold > T::zero()) {
        return Err(CavityError::invalid("clip_threshold", "must be positive"));
    }
    let resolution = T::lit(BOUNDARY_RESOLUTION);
    let sagitta = mirror_solid(radius, diameter)?.sagitta;
    let lower = (sagitta + sagitta).max(T::zero()) + resolution;
    let edge = radius + radius - mis.parallel;
    if !(lower < edge) {
        return Err(CavityError::NoFeasibleLength);
    }
    let ok = |length: T| {
        let geom = CavityGeometry {
            length,
            radius,
            diameter,
            wavelength,
        };
        match clipping_loss_with(&geom, mis, opts) {
            Ok(loss) => Ok(loss <= threshold),
            Err(e) if e.is_numerical() => Err(e),
            Err(_) => Ok(false),
        }
    };
    if !ok(lower)? {
        return Err(CavityError::NoFeasibleLength);
    }

    const SCAN: usize = 512;
    let step = (edge - lower) / T::from_usize(SCAN).unwrap();
    let mut good = lower;
    let mut bad = edge;
    for k in 1..=SCAN {
        let length = lower + step * T::from_usize(k).unwrap();
        if length >= edge || !ok(length)? {
            bad = length.min(edge);
            break;
        }
        good = length;
    }
    while bad - good > resolution {
        let mid = (good + bad) / T::lit(2.0);
        if mid <= good || mid >= bad {
            break;
        }
        if ok(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: f64 = 854e-9;

    fn g(l: f64, r: f64, d: f64) -> CavityGeometry<f64> {
        CavityGeometry {
            length: l,
            radius: r,
            diameter: d,
            wavelength: LAMBDA,
        }
    }

    #[test]
    fn scattering_reference_and_limits() {
        assert_eq!(scattering_loss(0.0, LAMBDA).unwrap(), 0.0);
        // mpmath: 1.7321763030636713e-5
        let l = scattering_loss(0.2e-9, LAMBDA).unwrap();
        assert!(((l - 1.732_176_303_063_671e-5) / l).abs() < 1e-12);
        let sigma = 0.09 * LAMBDA / (4.0 * std::f64::consts::PI);
        let first_order = 2.0 * 0.09f64.powi(2);
        let exact = scattering_loss(sigma, LAMBDA).unwrap();
        assert!(((exact - first_order) / exact).abs() < 0.01);
        assert!(scattering_loss(1.0, LAMBDA).unwrap() <= 2.0);
        assert!(scattering_loss(-1e-9, LAMBDA).is_err());
    }

    #[test]
    fn aligned_clipping_matches_closed_form() {
        let geom = g(400e-6, 250e-6, 60e-6);
        let mode = effective_mode(&geom, &Misalignment::none()).unwrap();
        let exact = (-geom.diameter.powi(2) / (2.0 * mode.w_mirror.powi(2))).exp();
        let loss = clipping_loss(&geom, &Misalignment::none()).unwrap();
        assert!((loss - exact).abs() < 1e-12, "{loss} {exact}");
    }

    #[test]
    fn huge_mirror_clips_nothing() {
        let loss = clipping_loss(&g(400e-6, 250e-6, 499e-6), &Misalignment::uniform(1e-6).unwrap()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn quadrature_schemes_agree() {
        let geom = g(400e-6, 250e-6, 150e-6);
        let mis = Misalignment::uniform(5e-6).unwrap();
        let a = clipping_loss(&geom, &mis).unwrap();
        let opts = ClippingOptions {
            scheme: ClipQuadrature::DiskPolar,
            ..Default::default()
        };
        let b = clipping_loss_with(&geom, &mis, &opts).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn two_mirror_model_doubles_symmetric_loss() {
        let geom = g(400e-6, 250e-6, 120e-6);
        let opts = ClippingOptions {
            model: ClipModel::TwoMirror,
            ..Default::default()
        };
        let single = clipping_loss(&geom, &Misalignment::none()).unwrap();
        let double = clipping_loss_with(&geom, &Misalignment::none(), &opts).unwrap();
        assert!((double - 2.0 * single).abs() < 1e-15);
    }

    #[test]
    fn rates_reference() {
        let budget = LossBudget::<f64>::new(100e-6, 0.0).unwrap();
        let r = cavity_rates(300e-6, 500e-6, &budget).unwrap();
        assert!((r.kappa - 1.498_962_29e8).abs() / r.kappa < 1e-12);
        assert!((r.finesse - 10_471.975_511_965_977).abs() < 1e-8);
        assert_eq!(r.kappa_in + r.kappa_out, r.kappa);

        let lossless = LossBudget::new(0.0, 0.0).unwrap();
        let r = cavity_rates(300e-6, 500e-6, &lossless).unwrap();
        assert_eq!(r.kappa, r.kappa_out);
        let r = cavity_rates(300e-6, 0.0, &budget).unwrap();
        assert_eq!(r.kappa, r.kappa_in);
        assert_eq!(cavity_rates(300e-6, 0.0, &lossless), Err(CavityError::DegenerateCavity));
    }

    #[test]
    fn budget_is_additive() {
        let b = LossBudget::new(100e-6, 3e-6).unwrap();
        assert_eq!(b.l_in, b.l_scat + b.l_clip);
        assert!(LossBudget::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn unit_threshold_reaches_stability_edge() {
        let mis = Misalignment::uniform(5e-6).unwrap();
        let l = clipping_boundary(250e-6, 150e-6, &mis, 1.0, LAMBDA).unwrap();
        let edge = 500e-6 - 5e-6;
        assert!(edge - l <= 2.0 * BOUNDARY_RESOLUTION, "{l}");
    }

    #[test]
    fn aligned_large_mirror_boundary_hugs_concentric() {
        let l = clipping_boundary(250e-6, 400e-6, &Misalignment::none(), 1e-6, LAMBDA).unwrap();
        assert!(l > 0.99 * 500e-6, "{l}");
    }

    #[test]
    fn boundary_brackets_threshold() {
        let mis = Misalignment::uniform(5e-6).unwrap();
        let (r, d) = (250e-6, 150e-6);
        let l = clipping_boundary(r, d, &mis, 1e-6, LAMBDA).unwrap();
        assert!(clipping_loss(&g(l, r, d), &mis).unwrap() <= 1e-6);
        assert!(clipping_loss(&g(l + 1e-6, r, d), &mis).unwrap() > 1e-6);
    }

    #[test]
    fn tiny_mirror_has_no_feasible_length() {
        let mis = Misalignment::uniform(5e-6).unwrap();
        assert_eq!(
            clipping_boundary(250e-6, 4e-6, &mis, 1e-6, LAMBDA),
            Err(CavityError::NoFeasibleLength)
        );
    }
}
