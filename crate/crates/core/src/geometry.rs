//! Gaussian mode geometry of a symmetric two-mirror cavity, the effect of
//! translational mirror misalignment, milled mirror volume and the
//! ion-cavity coupling rate.
//!
//! Everything is in SI units: metres, radians, seconds.

use serde::{Deserialize, Serialize};

use crate::error::{CavityError, Result};
use crate::scalar::{speed_of_light, Scalar};

/// Nominal cavity: two concave spherical mirrors of equal radius of curvature
/// and diameter, separated by `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry<T> {
    pub length: T,
    pub radius: T,
    pub diameter: T,
    pub wavelength: T,
}

impl<T: Scalar> CavityGeometry<T> {
    /// Builds a validated geometry. Use struct-literal construction when an
    /// unvalidated candidate is needed (see [`stability_margin`]).
    pub fn new(length: T, radius: T, diameter: T, wavelength: T) -> Result<Self> {
        let geom = Self {
            length,
            radius,
            diameter,
            wavelength,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("radius", self.radius),
            ("diameter", self.diameter),
            ("wavelength", self.wavelength),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(CavityError::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        let solid = mirror_solid(self.radius, self.diameter)?;
        if self.length < solid.sagitta + solid.sagitta {
            return Err(CavityError::invalid(
                "length",
                format!("mirrors interpenetrate: length {} < 2h = {}", self.length, solid.sagitta + solid.sagitta),
            ));
        }
        Ok(())
    }

    pub fn sagitta(&self) -> Result<T> {
        mirror_solid(self.radius, self.diameter).map(|s| s.sagitta)
    }
}

/// Translational displacement of one mirror relative to the ideal coaxial position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Misalignment<T> {
    pub perpendicular: T,
    pub parallel: T,
}

impl<T: Scalar> Misalignment<T> {
    pub fn new(perpendicular: T, parallel: T) -> Result<Self> {
        if !(perpendicular >= T::zero()) {
            return Err(CavityError::invalid("misalignment_perp", "must be non-negative"));
        }
        if !(parallel >= T::zero()) {
            return Err(CavityError::invalid("misalignment_par", "must be non-negative"));
        }
        Ok(Self {
            perpendicular,
            parallel,
        })
    }

    /// Single-parameter worst case: equal transverse and axial offsets.
    pub fn uniform(m: T) -> Result<Self> {
        Self::new(m, m)
    }

    pub fn none() -> Self {
        Self {
            perpendicular: T::zero(),
            parallel: T::zero(),
        }
    }
}

/// Mode of the misaligned cavity, with the ion repositioned onto the tilted axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMode<T> {
    /// Tilt of the mode axis relative to the nominal axis (rad).
    pub phi: T,
    /// Effective length L' (m).
    pub l_eff: T,
    /// Divergence half-angle of the effective mode (rad).
    pub theta_eff: T,
    /// Waist of the effective mode (m).
    pub w0: T,
    /// 1/e² intensity radius at the mirror (m).
    pub w_mirror: T,
    /// Lateral mode displacement at the mirror (m).
    pub dx_mirror: T,
}

impl<T: Scalar> EffectiveMode<T> {
    /// Mode volume pi w0^2 L / 4 of the effective mode.
    pub fn mode_volume(&self) -> T {
        T::PI() * self.w0 * self.w0 * self.l_eff / T::lit(4.0)
    }

    /// Ion-cavity coupling using the effective length and waist.
    pub fn coupling_g0(&self, wavelength: T, atom: &AtomicSystem<T>) -> T {
        g0_from_waist(self.l_eff, self.w0, wavelength, atom.gamma_1)
    }
}

/// Spherical cap milled into the substrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorSolid<T> {
    pub sagitta: T,
    pub volume: T,
}

/// Decay rates of the Lambda system. All rates are angular half-linewidths (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicSystem<T> {
    /// gamma = Gamma / 2 of the excited state.
    pub gamma_total: T,
    /// Partial half-linewidth of the cavity arm, `alpha * gamma_total`.
    pub gamma_1: T,
    /// Partial half-linewidth of the drive arm. Carried, not used by the cavity models.
    pub gamma_0: T,
    /// Cavity-arm branching ratio Gamma_1 / Gamma.
    pub alpha: T,
}

impl<T: Scalar> AtomicSystem<T> {
    pub fn new(gamma_total: T, alpha: T) -> Result<Self> {
        Self::with_drive_arm(gamma_total, alpha, T::zero())
    }

    pub fn with_drive_arm(gamma_total: T, alpha: T, gamma_0: T) -> Result<Self> {
        if !(gamma_total > T::zero()) {
            return Err(CavityError::invalid("gamma", "must be positive"));
        }
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(CavityError::invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        if !(gamma_0 >= T::zero()) {
            return Err(CavityError::invalid("gamma_0", "must be non-negative"));
        }
        Ok(Self {
            gamma_total,
            gamma_1: alpha * gamma_total,
            gamma_0,
            alpha,
        })
    }
}

fn check_stable<T: Scalar>(length: T, radius: T) -> Result<()> {
    if !(length > T::zero()) || !(length < radius + radius) {
        return Err(CavityError::UnstableGeometry(format!(
            "need 0 < L < 2R, got L = {length}, R = {radius}"
        )));
    }
    Ok(())
}

fn waist_unchecked<T: Scalar>(length: T, radius: T, wavelength: T) -> T {
    let two_pi = T::PI() + T::PI();
    (wavelength / two_pi).sqrt() * (length * (radius + radius - length)).sqrt().sqrt()
}

fn g0_from_waist<T: Scalar>(length: T, w0: T, wavelength: T, gamma_1: T) -> T {
    let num = T::lit(3.0) * wavelength * wavelength * speed_of_light::<T>() * gamma_1;
    (num / (T::PI() * T::PI() * length * w0 * w0)).sqrt()
}

/// Waist w0 = sqrt(lambda / 2 pi) [L (2R - L)]^(1/4).
pub fn mode_waist<T: Scalar>(geom: &CavityGeometry<T>) -> Result<T> {
    check_stable(geom.length, geom.radius)?;
    Ok(waist_unchecked(geom.length, geom.radius, geom.wavelength))
}

/// Far-field divergence half-angle theta = lambda / (pi w0).
pub fn divergence<T: Scalar>(geom: &CavityGeometry<T>) -> Result<T> {
    let w0 = mode_waist(geom)?;
    Ok(geom.wavelength / (T::PI() * w0))
}

/// Peak ion-cavity coupling g0 of the aligned cavity (rad/s).
pub fn coupling_g0<T: Scalar>(geom: &CavityGeometry<T>, atom: &AtomicSystem<T>) -> Result<T> {
    let w0 = mode_waist(geom)?;
    Ok(g0_from_waist(geom.length, w0, geom.wavelength, atom.gamma_1))
}

/// Same quantity through the mode-volume form sqrt(3 lambda^2 c gamma_1 / (4 pi V)).
pub fn coupling_g0_from_volume<T: Scalar>(mode_volume: T, wavelength: T, atom: &AtomicSystem<T>) -> T {
    let num = T::lit(3.0) * wavelength * wavelength * speed_of_light::<T>() * atom.gamma_1;
    (num / (T::lit(4.0) * T::PI() * mode_volume)).sqrt()
}

/// Mode of the misaligned cavity.
///
/// The displaced mirror tilts the axis joining the two centres of curvature by
/// `phi = atan(M_perp / (2R - L - M_par))`, which shortens the optic axis to
/// `L' = 2R - (2R - L - M_par) / cos(phi)`. The divergence and waist follow
/// from `L'` through the aligned-cavity formulas.
pub fn effective_mode<T: Scalar>(geom: &CavityGeometry<T>, mis: &Misalignment<T>) -> Result<EffectiveMode<T>> {
    let two_r = geom.radius + geom.radius;
    let gap = two_r - geom.length - mis.parallel;
    if !(gap > T::zero()) {
        return Err(CavityError::UnstableGeometry(format!(
            "centres of curvature cross: 2R - L - M_par = {gap}"
        )));
    }
    let (phi, l_eff) = if mis.perpendicular == T::zero() {
        (T::zero(), geom.length + mis.parallel)
    } else {
        let phi = (mis.perpendicular / gap).atan();
        (phi, two_r - gap / phi.cos())
    };
    check_stable(l_eff, geom.radius)?;

    let w0 = waist_unchecked(l_eff, geom.radius, geom.wavelength);
    let theta_eff = geom.wavelength / (T::PI() * w0);
    let half = l_eff / T::lit(2.0);
    let w_mirror = (w0 * w0 + (half * theta_eff) * (half * theta_eff)).sqrt();
    Ok(EffectiveMode {
        phi,
        l_eff,
        theta_eff,
        w0,
        w_mirror,
        dx_mirror: phi * half,
    })
}

/// Sagitta and milled volume of a spherical cap of radius `radius` and chord `diameter`.
pub fn mirror_solid<T: Scalar>(radius: T, diameter: T) -> Result<MirrorSolid<T>> {
    if !(radius > T::zero()) {
        return Err(CavityError::invalid("radius", "must be positive"));
    }
    if !(diameter >= T::zero()) {
        return Err(CavityError::invalid("diameter", "must be non-negative"));
    }
    if diameter > radius + radius {
        return Err(CavityError::InvalidCap {
            radius: radius.as_f64(),
            diameter: diameter.as_f64(),
        });
    }
    let half_chord_sq = diameter * diameter / T::lit(4.0);
    // R - sqrt(R^2 - a^2) without cancellation for shallow caps
    let root = (radius * radius - half_chord_sq).max(T::zero()).sqrt();
    let sagitta = half_chord_sq / (radius + root);
    let volume = T::PI() * sagitta / T::lit(6.0) * (T::lit(3.0) * half_chord_sq + sagitta * sagitta);
    Ok(MirrorSolid { sagitta, volume })
}

/// Largest cap diameter whose milled volume does not exceed `volume`.
///
/// Inverts `V = pi h^2 (R - h/3)` for the sagitta by bisection; when even a
/// hemisphere fits in the budget the hemisphere diameter `2R` is returned.
pub fn diameter_for_volume<T: Scalar>(radius: T, volume: T) -> Result<T> {
    if !(radius > T::zero()) {
        return Err(CavityError::invalid("radius", "must be positive"));
    }
    if !(volume >= T::zero()) {
        return Err(CavityError::invalid("v_max", "must be non-negative"));
    }
    let cap_volume = |h: T| T::PI() * h * h * (radius - h / T::lit(3.0));
    if cap_volume(radius) <= volume {
        return Ok(radius + radius);
    }
    let (mut lo, mut hi) = (T::zero(), radius);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if cap_volume(mid) <= volume {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = lo;
    let mut diameter = T::lit(2.0) * (h * (radius + radius - h)).max(T::zero()).sqrt();
    // recomputing the cap from D can round the volume past the budget
    for _ in 0..64 {
        if mirror_solid(radius, diameter)?.volume <= volume {
            break;
        }
        diameter = diameter * (T::one() - T::epsilon() * T::lit(4.0));
    }
    Ok(diameter)
}

/// Signed feasibility margin `min(L', 2R - L', L - 2h) / L`.
///
/// Positive iff the misaligned cavity can be assembled and supports a stable
/// mode. Never fails: invalid inputs map to a non-positive margin.
pub fn stability_margin<T: Scalar>(geom: &CavityGeometry<T>, mis: &Misalignment<T>) -> T {
    let l = geom.length;
    if !(l > T::zero()) || !(geom.radius > T::zero()) {
        return -T::one();
    }
    let sagitta = match mirror_solid(geom.radius, geom.diameter) {
        Ok(s) => s.sagitta,
        Err(_) => return (geom.radius + geom.radius - geom.diameter).min(-T::epsilon()) / l,
    };
    let assembly = l - sagitta - sagitta;
    let gap = geom.radius + geom.radius - l - mis.parallel;
    if !(gap > T::zero()) {
        return gap.min(assembly) / l;
    }
    let l_eff = if mis.perpendicular == T::zero() {
        l + mis.parallel
    } else {
        geom.radius + geom.radius - gap / (mis.perpendicular / gap).atan().cos()
    };
    let concentric = geom.radius + geom.radius - l_eff;
    l_eff.min(concentric).min(assembly) / l
}
