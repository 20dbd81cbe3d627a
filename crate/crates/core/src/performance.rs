//! Cooperativity, photon generation and extraction probabilities, the
//! analytic optimum outcoupler transmission and the remote-entanglement rate.

use serde::{Deserialize, Serialize};

use crate::error::{CavityError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformancePoint<T> {
    /// Intrinsic cooperativity (transmission excluded).
    pub c_in: T,
    /// Operating cooperativity at the chosen transmission.
    pub c: T,
    pub p_gen: T,
    pub p_ext: T,
    pub t_opt: T,
}

impl<T: Scalar> PerformancePoint<T> {
    /// Performance at the optimal outcoupler transmission.
    pub fn optimal(c_in: T, l_in: T) -> Result<Self> {
        let t_opt = optimal_transmission(c_in, l_in)?;
        Self::at_transmission(c_in, l_in, t_opt, t_opt)
    }

    /// Performance at an arbitrary transmission `t`; `t_opt` is carried along.
    pub fn at_transmission(c_in: T, l_in: T, t: T, t_opt: T) -> Result<Self> {
        let c = operating_cooperativity(c_in, t, l_in)?;
        let p_gen = p_gen_bound(c);
        Ok(Self {
            c_in,
            c,
            p_gen,
            p_ext: p_gen * t / (t + l_in),
            t_opt,
        })
    }
}

/// Network-side efficiencies and attempt-cycle contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkBudget<T> {
    pub eps_net: T,
    pub eps_det: T,
    pub tau_prep: T,
    pub tau_lat: T,
    pub tau_gamma: T,
    /// Signal propagation time between the nodes (s).
    pub dx_net_over_c: T,
}

impl<T: Scalar> NetworkBudget<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, eps) in [("eps_net", self.eps_net), ("eps_det", self.eps_det)] {
            if !(eps >= T::zero() && eps <= T::one()) {
                return Err(CavityError::invalid(name, "must lie in [0, 1]"));
            }
        }
        for (name, tau) in [
            ("tau_prep", self.tau_prep),
            ("tau_lat", self.tau_lat),
            ("tau_gamma", self.tau_gamma),
            ("dx_net_over_c", self.dx_net_over_c),
        ] {
            if !(tau >= T::zero()) {
                return Err(CavityError::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn attempt_period(&self) -> T {
        self.tau_prep + self.tau_lat + self.tau_gamma + self.dx_net_over_c
    }
}

/// `C_in = g0^2 / (2 gamma kappa_in)`.
pub fn intrinsic_cooperativity<T: Scalar>(g0: T, gamma: T, kappa_in: T) -> Result<T> {
    if !(gamma > T::zero()) {
        return Err(CavityError::invalid("gamma", "must be positive"));
    }
    if kappa_in == T::zero() {
        return Err(CavityError::LosslessCavity);
    }
    if !(kappa_in > T::zero()) {
        return Err(CavityError::invalid("kappa_in", "must be positive"));
    }
    Ok(g0 * g0 / (T::lit(2.0) * gamma * kappa_in))
}

/// `C_in = 6 alpha theta^2 / L_in`: the same cooperativity written as an
/// atomic factor, a geometric factor and the intrinsic loss.
pub fn geometric_cooperativity<T: Scalar>(alpha: T, theta_eff: T, l_in: T) -> Result<T> {
    if l_in == T::zero() {
        return Err(CavityError::LosslessCavity);
    }
    if !(l_in > T::zero()) {
        return Err(CavityError::invalid("l_in", "must be positive"));
    }
    Ok(T::lit(6.0) * alpha * theta_eff * theta_eff / l_in)
}

/// Adiabatic generation bound `2C / (2C + 1)`.
pub fn p_gen_bound<T: Scalar>(c: T) -> T {
    let two_c = c + c;
    two_c / (two_c + T::one())
}

/// Cooperativity with the outcoupler included: `C = C_in L_in / (T + L_in)`.
pub fn operating_cooperativity<T: Scalar>(c_in: T, t: T, l_in: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(CavityError::invalid("transmission", "must be non-negative"));
    }
    if !(l_in >= T::zero()) {
        return Err(CavityError::invalid("l_in", "must be non-negative"));
    }
    let total = t + l_in;
    if total == T::zero() {
        return Err(CavityError::DegenerateCavity);
    }
    Ok(c_in * l_in / total)
}

/// Extraction probability `[2C/(2C+1)] [T/(T+L_in)]` at transmission `t`.
pub fn p_ext_operating<T: Scalar>(c_in: T, t: T, l_in: T) -> Result<T> {
    let c = operating_cooperativity(c_in, t, l_in)?;
    Ok(p_gen_bound(c) * t / (t + l_in))
}

/// Upper bound `1 - 2 / (1 + sqrt(1 + 2 C_in))` on the extraction probability.
pub fn p_ext_bound<T: Scalar>(c_in: T) -> T {
    // (s - 1)/(s + 1) = 2 C_in / (s + 1)^2, free of cancellation at small C_in
    let s = (T::one() + c_in + c_in).sqrt();
    (c_in + c_in) / ((s + T::one()) * (s + T::one()))
}

/// Transmission `L_in sqrt(1 + 2 C_in)` that attains [`p_ext_bound`].
pub fn optimal_transmission<T: Scalar>(c_in: T, l_in: T) -> Result<T> {
    if !(c_in >= T::zero()) {
        return Err(CavityError::invalid("c_in", "must be non-negative"));
    }
    if !(l_in >= T::zero()) {
        return Err(CavityError::invalid("l_in", "must be non-negative"));
    }
    Ok(l_in * (T::one() + c_in + c_in).sqrt())
}

/// Heralded remote Bell-pair rate `(1/2) (P_ext eps_net eps_det)^2 / tau_att` (1/s).
pub fn bell_rate<T: Scalar>(p_ext: T, net: &NetworkBudget<T>) -> Result<T> {
    if !(p_ext >= T::zero() && p_ext <= T::one()) {
        return Err(CavityError::invalid("p_ext", "must lie in [0, 1]"));
    }
    net.validate()?;
    let period = net.attempt_period();
    if period == T::zero() {
        return Err(CavityError::ZeroAttemptPeriod);
    }
    let herald = p_ext * net.eps_net * net.eps_det;
    Ok(T::lit(0.5) * herald * herald / period)
}
