//! Single-photon generation by a driven Lambda system in a decaying cavity.
//!
//! The single-excitation amplitudes of `|0, 0>`, `|e, 0>` and `|1, 1>` obey
//!
//! ```text
//! i c0' = (W/2) ce
//! i ce' = (W/2) c0 + g c1 + (D - i gamma) ce
//! i c1' = g ce - i kappa c1
//! ```
//!
//! with a sine-squared drive `W(t) = W_peak sin^2(pi t / T_p)` on `[0, T_p]`.
//! Photons leave through the cavity at rate `2 kappa |c1|^2`; population lost
//! at `2 gamma |ce|^2` does not return. Time is measured internally in units
//! of `1 / kappa`, so only the ratios of the rates matter.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CavityError, Result};
use crate::performance::p_gen_bound;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaCavitySystem<T> {
    /// Ion-cavity coupling (rad/s).
    pub g: T,
    /// Cavity field decay (rad/s).
    pub kappa: T,
    /// Atomic half-linewidth (rad/s).
    pub gamma: T,
}

impl<T: Scalar> LambdaCavitySystem<T> {
    pub fn new(g: T, kappa: T, gamma: T) -> Result<Self> {
        let sys = Self { g, kappa, gamma };
        sys.validate()?;
        Ok(sys)
    }

    /// System with `g` chosen to give cooperativity `c`.
    pub fn from_cooperativity(c: T, kappa: T, gamma: T) -> Result<Self> {
        if !(c >= T::zero()) {
            return Err(CavityError::invalid("cooperativity", "must be non-negative"));
        }
        Self::new((T::lit(2.0) * gamma * kappa * c).sqrt(), kappa, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(CavityError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.g >= T::zero()) || !self.g.is_finite() {
            return Err(CavityError::invalid("g", "must be non-negative"));
        }
        Ok(())
    }

    /// `g^2 / (2 gamma kappa)`.
    pub fn cooperativity(&self) -> T {
        self.g * self.g / (T::lit(2.0) * self.gamma * self.kappa)
    }

    /// Largest of the three rates.
    pub fn fastest_rate(&self) -> T {
        self.g.max(self.kappa).max(self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct PulseSpec<T> {
    /// Peak Rabi frequency (rad/s).
    pub peak: T,
    /// Pulse duration (s).
    pub width: T,
    /// Drive detuning from the `|0> -> |e>` transition (rad/s).
    #[serde(default)]
    pub detuning: T,
}

impl<T: Scalar> PulseSpec<T> {
    pub fn resonant(peak: T, width: T) -> Self {
        Self {
            peak,
            width,
            detuning: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak >= T::zero()) || !self.peak.is_finite() {
            return Err(CavityError::invalid("peak", "must be non-negative"));
        }
        if !(self.width > T::zero()) || !self.width.is_finite() {
            return Err(CavityError::invalid("width", "must be positive"));
        }
        if !self.detuning.is_finite() {
            return Err(CavityError::invalid("detuning", "must be finite"));
        }
        Ok(())
    }

    /// Rabi frequency at time `t`.
    pub fn rabi(&self, t: T) -> T {
        if t <= T::zero() || t >= self.width {
            return T::zero();
        }
        let s = (T::PI() * t / self.width).sin();
        self.peak * s * s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions<T> {
    /// Mixed absolute/relative local error bound per step.
    pub tol: T,
    /// Number of evenly spaced waveform samples on `[0, tau]`, ends included.
    pub samples: usize,
    pub max_steps: usize,
}

impl<T: Scalar> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            samples: 201,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult<T> {
    /// Emitted photon probability over `[0, tau]`.
    pub p_out: T,
    /// `(t, 2 kappa |c1(t)|^2)` at the sample times (s, 1/s).
    pub waveform: Vec<(T, T)>,
    /// Population lost through spontaneous emission.
    pub norm_leak: T,
    /// Remaining amplitude norm at `tau`.
    pub residual: T,
    /// Largest `|norm + p_out + leak - 1|` over all sample times.
    pub conservation_error: T,
    pub steps: usize,
}

const N: usize = 8;

/// Fraction of the tolerance each step may spend, so that drift accumulated
/// over many steps stays within a small multiple of it.
const LOCAL_SAFETY: f64 = 0.02;

struct Rates<T> {
    g: T,
    gamma: T,
    detuning: T,
    peak: T,
    width: T,
}

impl<T: Scalar> Rates<T> {
    fn rabi(&self, t: T) -> T {
        if t <= T::zero() || t >= self.width {
            return T::zero();
        }
        let s = (T::PI() * t / self.width).sin();
        self.peak * s * s
    }

    /// State: re/im of `c0`, `ce`, `c1`, then emitted and leaked probability.
    fn derivative(&self, t: T, y: &[T; N]) -> [T; N] {
        let half = self.rabi(t) * T::lit(0.5);
        let two = T::lit(2.0);
        let (x0, y0, xe, ye, x1, y1) = (y[0], y[1], y[2], y[3], y[4], y[5]);
        // i c' = a + i b  =>  c' = b - i a
        let (a0, b0) = (half * xe, half * ye);
        let ae = half * x0 + self.g * x1 + self.detuning * xe + self.gamma * ye;
        let be = half * y0 + self.g * y1 + self.detuning * ye - self.gamma * xe;
        let (a1, b1) = (self.g * xe + y1, self.g * ye - x1);
        [
            b0,
            -a0,
            be,
            -ae,
            b1,
            -a1,
            two * (x1 * x1 + y1 * y1),
            two * self.gamma * (xe * xe + ye * ye),
        ]
    }
}

fn norm<T: Scalar>(y: &[T; N]) -> T {
    y[..6].iter().fold(T::zero(), |acc, v| acc + *v * *v)
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<T> {
    c: [T; 7],
    a: [[T; 6]; 7],
    b5: [T; 7],
    err: [T; 7],
}

impl<T: Scalar> Stepper<T> {
    fn new() -> Self {
        Self {
            c: C.map(T::lit),
            a: A.map(|row| row.map(T::lit)),
            b5: B5.map(T::lit),
            err: std::array::from_fn(|i| T::lit(B5[i] - B4[i])),
        }
    }

    /// One trial step; returns the fifth-order solution and the scaled error norm.
    fn step(&self, f: &Rates<T>, t: T, y: &[T; N], k0: &[T; N], h: T, tol: T) -> ([T; N], [T; N], T) {
        let mut k = [[T::zero(); N]; 7];
        k[0] = *k0;
        for s in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = self.a[s][j];
                if a != T::zero() {
                    for i in 0..N {
                        ys[i] = ys[i] + h * a * kj[i];
                    }
                }
            }
            k[s] = f.derivative(t + self.c[s] * h, &ys);
        }
        let mut next = *y;
        let mut err = T::zero();
        for i in 0..N {
            let mut inc = T::zero();
            let mut e = T::zero();
            for s in 0..7 {
                inc = inc + self.b5[s] * k[s][i];
                e = e + self.err[s] * k[s][i];
            }
            next[i] = y[i] + h * inc;
            let scale = tol * T::lit(LOCAL_SAFETY);
            err = err.max((h * e).abs() / scale);
        }
        // first-same-as-last: stage 7 is the derivative at the new point
        (next, k[6], err)
    }
}

/// Integrates the amplitude equations from `c0 = 1` over `[0, tau]`.
///
/// The step size is adapted so every step's local error stays below
/// `opts.tol`; steps always land on the pulse end and on every sample time.
pub fn simulate<T: Scalar>(sys: &LambdaCavitySystem<T>, pulse: &PulseSpec<T>, tau: T, opts: &SimOptions<T>) -> Result<SimResult<T>> {
    sys.validate()?;
    pulse.validate()?;
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(CavityError::invalid("tau", "must be positive"));
    }
    if !(opts.tol > T::zero()) {
        return Err(CavityError::invalid("tol", "must be positive"));
    }
    let k = sys.kappa;
    let rates = Rates {
        g: sys.g / k,
        gamma: sys.gamma / k,
        detuning: pulse.detuning / k,
        peak: pulse.peak / k,
        width: pulse.width * k,
    };
    let end = tau * k;
    let samples = opts.samples.max(2);
    let sample_at = |n: usize| {
        if n + 1 == samples {
            end
        } else {
            end * T::from_usize(n).unwrap() / T::from_usize(samples - 1).unwrap()
        }
    };

    let stepper = Stepper::new();
    let mut y = [T::zero(); N];
    y[0] = T::one();
    let mut t = T::zero();
    let mut deriv = rates.derivative(t, &y);
    let mut h = (end.min(rates.width) * T::lit(1e-3)).max(T::epsilon());
    let two = T::lit(2.0);

    let mut waveform = Vec::with_capacity(samples);
    let mut conservation = T::zero();
    let mut record = |t: T, y: &[T; N], waveform: &mut Vec<(T, T)>| {
        let drift = (norm(y) + y[6] + y[7] - T::one()).abs();
        conservation = conservation.max(drift);
        waveform.push((t / k, two * k * (y[4] * y[4] + y[5] * y[5])));
    };
    record(t, &y, &mut waveform);

    let mut next_sample = 1usize;
    let mut steps = 0usize;
    let floor = end * T::epsilon() * T::lit(16.0);
    while next_sample < samples {
        let mut target = sample_at(next_sample);
        if t < rates.width && rates.width < target {
            target = rates.width;
        }
        let lands = t + h >= target;
        let trial = if lands { target - t } else { h };
        let (y_new, d_new, err) = stepper.step(&rates, t, &y, &deriv, trial, opts.tol);
        if err <= T::one() {
            t = if lands { target } else { t + trial };
            y = y_new;
            // the drive has a kink at the pulse end, so restart the derivative there
            deriv = if lands { rates.derivative(t, &y) } else { d_new };
            steps += 1;
            if steps > opts.max_steps {
                return Err(CavityError::StepSizeUnderflow { time: (t / k).as_f64() });
            }
            if t == sample_at(next_sample) {
                record(t, &y, &mut waveform);
                next_sample += 1;
            }
        }
        let factor = if err == T::zero() {
            T::lit(5.0)
        } else {
            (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2)).min(T::lit(5.0))
        };
        // keep the un-clipped step length when a short landing step was accepted
        h = if lands && err <= T::one() { h.max(trial * factor) } else { trial * factor };
        if h < floor {
            return Err(CavityError::StepSizeUnderflow { time: (t / k).as_f64() });
        }
    }
    let p_out = y[6];
    Ok(SimResult {
        p_out,
        waveform,
        norm_leak: y[7],
        residual: norm(&y),
        conservation_error: conservation,
        steps,
    })
}

/// Fixed-step classical fourth-order integration of the same model, used as
/// an independent reference. Returns the emitted probability at `tau`.
pub fn reference_rk4<T: Scalar>(sys: &LambdaCavitySystem<T>, pulse: &PulseSpec<T>, tau: T, dt: T) -> T {
    let k = sys.kappa;
    let rates = Rates {
        g: sys.g / k,
        gamma: sys.gamma / k,
        detuning: pulse.detuning / k,
        peak: pulse.peak / k,
        width: pulse.width * k,
    };
    let end = tau * k;
    let h = dt * k;
    let mut y = [T::zero(); N];
    y[0] = T::one();
    let mut t = T::zero();
    let half = T::lit(0.5);
    let axpy = |y: &[T; N], d: &[T; N], s: T| -> [T; N] { std::array::from_fn(|i| y[i] + s * d[i]) };
    // integrate each side of the pulse end separately
    for stop in [rates.width.min(end), end] {
        let span = stop - t;
        if span <= T::zero() {
            continue;
        }
        let n = (span / h).ceil().to_usize().unwrap_or(1).max(1);
        let hh = span / T::from_usize(n).unwrap();
        for i in 0..n {
            let t0 = t + hh * T::from_usize(i).unwrap();
            let k1 = rates.derivative(t0, &y);
            let k2 = rates.derivative(t0 + half * hh, &axpy(&y, &k1, half * hh));
            let k3 = rates.derivative(t0 + half * hh, &axpy(&y, &k2, half * hh));
            let k4 = rates.derivative(t0 + hh, &axpy(&y, &k3, hh));
            for j in 0..N {
                y[j] = y[j] + hh / T::lit(6.0) * (k1[j] + T::lit(2.0) * (k2[j] + k3[j]) + k4[j]);
            }
        }
        t = stop;
    }
    y[6]
}

/// `2C / (2C + 1)`.
pub fn adiabatic_limit<T: Scalar>(c: T) -> T {
    p_gen_bound(c)
}

#[derive(Debug, Clone, Copy)]
pub struct PulseSearchOptions<T> {
    /// Peak Rabi frequency range, in units of the fastest system rate.
    pub peak_range: (T, T),
    pub peak_points: usize,
    /// Pulse width range, in units of `tau`.
    pub width_range: (T, T),
    pub width_points: usize,
    /// Alternating golden-section passes over the two axes.
    pub refine_rounds: usize,
    /// Integration settings during the search.
    pub sim: SimOptions<T>,
    /// Waveform samples recorded for the winning pulse.
    pub waveform_samples: usize,
}

impl<T: Scalar> Default for PulseSearchOptions<T> {
    fn default() -> Self {
        Self {
            peak_range: (T::lit(0.01), T::lit(100.0)),
            peak_points: 25,
            width_range: (T::lit(0.05), T::one()),
            width_points: 20,
            refine_rounds: 2,
            sim: SimOptions {
                samples: 2,
                ..SimOptions::default()
            },
            waveform_samples: 201,
        }
    }
}

/// Outcome of a pulse search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct PulseOptimum<T> {
    pub pulse: PulseSpec<T>,
    /// Re-simulation of the best pulse with the full waveform.
    pub result: SimResult<T>,
    pub simulations: usize,
    /// Largest conservation drift over every simulation in the search.
    pub conservation_error: T,
}

/// Maximises the emitted probability within `tau` over the peak Rabi
/// frequency (log grid) and pulse width `T_p <= tau` (linear grid), then
/// refines the best node by golden-section search along each axis. Extra
/// `seeds` join the candidate set; the best of all evaluated pulses wins.
pub fn optimize_pulse<T: Scalar>(
    sys: &LambdaCavitySystem<T>,
    tau: T,
    seeds: &[PulseSpec<T>],
    opts: &PulseSearchOptions<T>,
) -> Result<PulseOptimum<T>> {
    sys.validate()?;
    if !(tau > T::zero()) {
        return Err(CavityError::invalid("tau", "must be positive"));
    }
    let scale = sys.fastest_rate();
    let (lo, hi) = (opts.peak_range.0.ln(), opts.peak_range.1.ln());
    let np = opts.peak_points.max(2);
    let nw = opts.width_points.max(2);
    let log_peaks: Vec<T> = (0..np)
        .map(|i| lo + (hi - lo) * T::from_usize(i).unwrap() / T::from_usize(np - 1).unwrap())
        .collect();
    let widths: Vec<T> = (0..nw)
        .map(|j| {
            let f = T::from_usize(j).unwrap() / T::from_usize(nw - 1).unwrap();
            (opts.width_range.0 + (opts.width_range.1 - opts.width_range.0) * f) * tau
        })
        .collect();
    let drift = Cell::new(T::zero());
    let count = Cell::new(0usize);
    let tally = |r: &SimResult<T>| {
        drift.set(drift.get().max(r.conservation_error));
        count.set(count.get() + 1);
        r.p_out
    };
    let sim = |pulse: &PulseSpec<T>| simulate(sys, pulse, tau, &opts.sim);
    let at = |log_peak: T, width: T| PulseSpec::resonant(scale * log_peak.exp(), width.min(tau));

    let nodes: Vec<(usize, usize)> = (0..np).flat_map(|i| (0..nw).map(move |j| (i, j))).collect();
    let grid: Vec<Result<SimResult<T>>> = nodes.par_iter().map(|&(i, j)| sim(&at(log_peaks[i], widths[j]))).collect();
    let mut best = (T::neg_infinity(), 0usize, 0usize);
    for (&(i, j), r) in nodes.iter().zip(grid) {
        let v = tally(&r?);
        if v > best.0 {
            best = (v, i, j);
        }
    }
    let (mut value, bi, bj) = best;
    let mut lp = log_peaks[bi];
    let mut w = widths[bj];
    let lp_bracket = (log_peaks[bi.saturating_sub(1)], log_peaks[(bi + 1).min(np - 1)]);
    let w_bracket = (widths[bj.saturating_sub(1)], widths[(bj + 1).min(nw - 1)].min(tau));
    for _ in 0..opts.refine_rounds {
        (lp, value) = golden_max(|x| sim(&at(x, w)).map(|r| tally(&r)), lp_bracket, lp, value)?;
        (w, value) = golden_max(|x| sim(&at(lp, x)).map(|r| tally(&r)), w_bracket, w, value)?;
    }
    let mut pulse = at(lp, w);
    for seed in seeds {
        let candidate = PulseSpec {
            width: seed.width.min(tau),
            ..*seed
        };
        let v = tally(&sim(&candidate)?);
        if v > value {
            value = v;
            pulse = candidate;
        }
    }
    let result = simulate(
        sys,
        &pulse,
        tau,
        &SimOptions {
            samples: opts.waveform_samples,
            ..opts.sim
        },
    )?;
    tally(&result);
    Ok(PulseOptimum {
        pulse,
        result,
        simulations: count.get(),
        conservation_error: drift.get(),
    })
}

/// Golden-section maximisation on `[a, b]`, never returning worse than the
/// incumbent `(x0, f0)`.
fn golden_max<T: Scalar, F: Fn(T) -> Result<T>>(f: F, (mut a, mut b): (T, T), x0: T, f0: T) -> Result<(T, T)> {
    let ratio = T::lit(0.618_033_988_749_894_8);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..40 {
        if (b - a).abs() <= T::lit(1e-9) * (a.abs() + b.abs()).max(T::one()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    let (x, v) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(if v > f0 { (x, v) } else { (x0, f0) })
}

/// One `(C, kappa/gamma)` curve of best emitted probability against `kappa tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct EmissionCurve<T> {
    pub c: T,
    pub kappa_over_gamma: T,
    pub limit: T,
    pub p_out: Vec<T>,
    pub pulses: Vec<PulseSpec<T>>,
    /// Largest conservation drift over every simulation behind the curve.
    pub conservation_error: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct EmissionFamily<T> {
    pub kappa_tau: Vec<T>,
    pub curves: Vec<EmissionCurve<T>>,
}

/// Best emitted probability against `kappa tau` for every `(C, kappa/gamma)`
/// pair, at `kappa = 1` rad/s. Each `tau` reuses the previous best pulse as a
/// candidate, so a curve can only fall by integrator noise.
pub fn emission_family<T: Scalar>(c_values: &[T], ratio_values: &[T], kappa_tau: &[T], opts: &PulseSearchOptions<T>) -> Result<EmissionFamily<T>> {
    if kappa_tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CavityError::invalid("kappa_tau", "must be strictly increasing"));
    }
    let pairs: Vec<(T, T)> = c_values.iter().flat_map(|&c| ratio_values.iter().map(move |&r| (c, r))).collect();
    let curves: Vec<Result<EmissionCurve<T>>> = pairs
        .par_iter()
        .map(|&(c, ratio)| {
            let sys = LambdaCavitySystem::from_cooperativity(c, T::one(), T::one() / ratio)?;
            let mut p_out = Vec::with_capacity(kappa_tau.len());
            let mut pulses: Vec<PulseSpec<T>> = Vec::with_capacity(kappa_tau.len());
            let mut conservation = T::zero();
            for &tau in kappa_tau {
                let seeds: Vec<PulseSpec<T>> = pulses.last().copied().into_iter().collect();
                let best = optimize_pulse(&sys, tau, &seeds, opts)?;
                conservation = conservation.max(best.conservation_error);
                p_out.push(best.result.p_out);
                pulses.push(best.pulse);
            }
            Ok(EmissionCurve {
                c,
                kappa_over_gamma: ratio,
                limit: adiabatic_limit(c),
                p_out,
                pulses,
                conservation_error: conservation,
            })
        })
        .collect();
    Ok(EmissionFamily {
        kappa_tau: kappa_tau.to_vec(),
        curves: curves.into_iter().collect::<Result<_>>()?,
    })
}
