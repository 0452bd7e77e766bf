//! The stochastic RF measurement model.
//!
//! Each beacon transmits a fixed-amplitude sinusoid on one of `C` channels.
//! Received power falls off with distance and per-wall attenuation; the
//! receiver measures, per channel, the squared amplitude of the phase
//! superposition of all same-channel beacons plus Gaussian sensor noise,
//! clipped at a saturation threshold.
//!
//! The hard and relaxed (differentiable) paths share the same amplitude
//! construction and the same matrix kernels, so hardened relaxed
//! measurements are bit-identical to hard ones.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::allocation::HardAllocation;
use crate::geometry::{EnvironmentMap, Point};
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

/// Parameters of the propagation and measurement model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationParams {
    /// Transmit power shared by all beacons.
    pub p0: f64,
    /// Path-loss exponent.
    pub zeta: f64,
    /// Per-wall attenuation factor in (0, 1].
    pub beta: f64,
    /// Variance of each additive noise component.
    pub noise_var: f64,
    /// Saturation threshold clipping each channel reading.
    pub tau: f64,
    /// Number of channels.
    pub channels: usize,
    /// Minimum effective distance; receiver-beacon ranges below this are
    /// clamped so power (and its gradient) stays bounded.
    pub r_min: f64,
}

impl PropagationParams {
    /// Standard parameter set (4 channels unless overridden).
    pub fn defaults(channels: usize) -> Self {
        PropagationParams {
            p0: 6.25e-4,
            zeta: 2.0,
            beta: (-1.0f64).exp(),
            noise_var: 1e-4,
            tau: 1.0,
            channels,
            r_min: 0.02,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.p0 > 0.0) {
            return Err(format!("p0 must be positive, got {}", self.p0));
        }
        if !(self.zeta >= 0.0) {
            return Err(format!("zeta must be nonnegative, got {}", self.zeta));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(format!("beta must be in (0, 1], got {}", self.beta));
        }
        if !(self.noise_var >= 0.0) {
            return Err(format!("noise_var must be nonnegative, got {}", self.noise_var));
        }
        if !(self.tau > 0.0) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        if self.channels == 0 {
            return Err("channels must be at least 1".to_string());
        }
        if !(self.r_min > 0.0) {
            return Err(format!("r_min must be positive, got {}", self.r_min));
        }
        Ok(())
    }
}

/// Per-channel received power at one location.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    s: Vec<f64>,
}

impl Measurement {
    pub fn channels(&self) -> usize {
        self.s.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.s
    }
}

/// One draw of every random quantity entering a measurement: a phase per
/// candidate site and two noise components per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub phases: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
}

impl NoiseDraw {
    /// Draw order is fixed: all phases (uniform `[0, 2pi)`) for candidates
    /// `0..L`, then `eps1[0..C]`, then `eps2[0..C]` (Gaussian, variance
    /// `noise_var`).
    pub fn sample(
        params: &PropagationParams,
        n_candidates: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let phases = (0..n_candidates)
            .map(|_| rng.gen_range(0.0..two_pi))
            .collect();
        let sigma = params.noise_var.sqrt();
        let gauss = |rng: &mut dyn rand::RngCore| -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        };
        let eps1 = (0..params.channels).map(|_| gauss(rng)).collect();
        let eps2 = (0..params.channels).map(|_| gauss(rng)).collect();
        NoiseDraw { phases, eps1, eps2 }
    }

    /// All phases and noise components zero; handy in tests.
    pub fn silent(n_candidates: usize, channels: usize) -> Self {
        NoiseDraw {
            phases: vec![0.0; n_candidates],
            eps1: vec![0.0; channels],
            eps2: vec![0.0; channels],
        }
    }
}

/// Power received from a beacon at `beacon` by a receiver at `v`:
/// `p0 * max(r, r_min)^-zeta * beta^obstructions`.
pub fn received_power(
    params: &PropagationParams,
    map: &EnvironmentMap,
    beacon: Point,
    v: Point,
) -> f64 {
    let r = beacon.dist(&v).max(params.r_min);
    let falloff = if params.zeta == 2.0 {
        1.0 / (r * r)
    } else {
        r.powf(-params.zeta)
    };
    let o = map.obstruction_count(beacon, v);
    params.p0 * falloff * params.beta.powi(o as i32)
}

/// Quadrature amplitude coefficients of every candidate site as seen from
/// `v`: `k1[l] = sqrt(P_l(v)) cos(phase_l)`, `k2[l]` the sine counterpart.
/// Shared by the hard and relaxed measurement paths.
fn amplitude_rows(
    params: &PropagationParams,
    map: &EnvironmentMap,
    v: Point,
    phases: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let candidates = map.candidates();
    assert_eq!(
        phases.len(),
        candidates.len(),
        "noise draw has {} phases for {} candidates",
        phases.len(),
        candidates.len()
    );
    let mut k1 = Vec::with_capacity(candidates.len());
    let mut k2 = Vec::with_capacity(candidates.len());
    for (site, &phase) in candidates.iter().zip(phases) {
        let amp = received_power(params, map, *site, v).sqrt();
        k1.push(amp * phase.cos());
        k2.push(amp * phase.sin());
    }
    (k1, k2)
}

/// Stacks amplitude rows for a batch of locations into `B x L` matrices.
fn amplitude_matrices(
    params: &PropagationParams,
    map: &EnvironmentMap,
    locations: &[Point],
    noises: &[NoiseDraw],
) -> (Tensor, Tensor) {
    let l = map.candidates().len();
    let b = locations.len();
    let mut k1 = Tensor::zeros(b, l);
    let mut k2 = Tensor::zeros(b, l);
    for (i, (v, noise)) in locations.iter().zip(noises).enumerate() {
        let (r1, r2) = amplitude_rows(params, map, *v, &noise.phases);
        k1.row_mut(i).copy_from_slice(&r1);
        k2.row_mut(i).copy_from_slice(&r2);
    }
    (k1, k2)
}

fn noise_matrices(params: &PropagationParams, noises: &[NoiseDraw]) -> (Tensor, Tensor) {
    let b = noises.len();
    let c = params.channels;
    let mut e1 = Tensor::zeros(b, c);
    let mut e2 = Tensor::zeros(b, c);
    for (i, n) in noises.iter().enumerate() {
        assert_eq!(n.eps1.len(), c, "noise draw channel count mismatch");
        e1.row_mut(i).copy_from_slice(&n.eps1);
        e2.row_mut(i).copy_from_slice(&n.eps2);
    }
    (e1, e2)
}

/// Per-channel weights of a hard allocation as an `L x C` 0/1 matrix
/// (column `c` selects candidates assigned to channel `c`).
fn hard_channel_matrix(alloc: &HardAllocation) -> Tensor {
    let l = alloc.len();
    let c = alloc.channels();
    let mut m = Tensor::zeros(l, c);
    for (row, &a) in alloc.assignment().iter().enumerate() {
        if a > 0 {
            m.set(row, a - 1, 1.0);
        }
    }
    m
}

/// The measurement kernel shared by every path: given per-channel weight
/// columns `a` (`L x C`), compute `min(tau, (K1 a + E1)^2 + (K2 a + E2)^2)`.
fn measure_kernel(
    k1: &Tensor,
    k2: &Tensor,
    a: &Tensor,
    e1: &Tensor,
    e2: &Tensor,
    tau: f64,
) -> Tensor {
    let u = k1.matmul(a);
    let v = k2.matmul(a);
    let ue = u.zip_map(e1, |x, e| x + e);
    let ve = v.zip_map(e2, |x, e| x + e);
    let power = ue
        .zip_map(&ue, |x, y| x * y)
        .zip_map(&ve.zip_map(&ve, |x, y| x * y), |x, y| x + y);
    power.map(|x| x.min(tau))
}

/// Measures a batch of locations under a hard allocation. Row `i` of the
/// result is the `C`-channel reading at `locations[i]` under `noises[i]`.
pub fn measure_batch(
    params: &PropagationParams,
    map: &EnvironmentMap,
    alloc: &HardAllocation,
    locations: &[Point],
    noises: &[NoiseDraw],
) -> Tensor {
    assert_eq!(locations.len(), noises.len());
    assert_eq!(alloc.len(), map.candidates().len(), "allocation/map size mismatch");
    assert_eq!(alloc.channels(), params.channels, "allocation/params channel mismatch");
    let (k1, k2) = amplitude_matrices(params, map, locations, noises);
    let (e1, e2) = noise_matrices(params, noises);
    let a = hard_channel_matrix(alloc);
    measure_kernel(&k1, &k2, &a, &e1, &e2, params.tau)
}

/// Single-location hard measurement.
pub fn measure(
    params: &PropagationParams,
    map: &EnvironmentMap,
    alloc: &HardAllocation,
    v: Point,
    noise: &NoiseDraw,
) -> Measurement {
    let t = measure_batch(params, map, alloc, &[v], std::slice::from_ref(noise));
    Measurement { s: t.into_vec() }
}

/// Relaxed (differentiable) measurement of a batch of locations.
///
/// `rows` is an `L x (C+1)` matrix on the tape whose row `l` is the
/// relaxation of candidate `l`'s assignment: entry 0 is the no-beacon mass
/// and entry `c+1` weights channel `c`. Every arithmetic step is recorded, so
/// gradients flow from the returned `B x C` measurement back into `rows`.
/// With exact one-hot rows the output is bit-identical to [`measure_batch`].
pub fn measure_relaxed_batch(
    tape: &mut Tape,
    params: &PropagationParams,
    map: &EnvironmentMap,
    rows: VarId,
    locations: &[Point],
    noises: &[NoiseDraw],
) -> VarId {
    assert_eq!(locations.len(), noises.len());
    let l = map.candidates().len();
    let c = params.channels;
    assert_eq!(
        tape.value(rows).shape(),
        (l, c + 1),
        "relaxation rows must be L x (C+1)"
    );
    let (k1, k2) = amplitude_matrices(params, map, locations, noises);
    let (e1, e2) = noise_matrices(params, noises);

    let k1 = tape.constant(k1);
    let k2 = tape.constant(k2);
    let e1 = tape.constant(e1);
    let e2 = tape.constant(e2);
    let a = tape.slice_cols(rows, 1, c + 1);
    let u = tape.matmul(k1, a);
    let v = tape.matmul(k2, a);
    let ue = tape.add(u, e1);
    let ve = tape.add(v, e2);
    let u2 = tape.square(ue);
    let v2 = tape.square(ve);
    let power = tape.add(u2, v2);
    tape.clip_max(power, params.tau)
}

/// Single-location relaxed measurement (a `1 x C` value on the tape).
pub fn measure_relaxed(
    tape: &mut Tape,
    params: &PropagationParams,
    map: &EnvironmentMap,
    rows: VarId,
    v: Point,
    noise: &NoiseDraw,
) -> VarId {
    measure_relaxed_batch(tape, params, map, rows, &[v], std::slice::from_ref(noise))
}
