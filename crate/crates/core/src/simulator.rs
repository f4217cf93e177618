//! Time-domain replay of the linear swing model.
//!
//! Trajectories are propagated with the exact discretization
//! `x_{k+1} = e^{A·dt} x_k`, so the only numerical error in energy
//! integrals comes from the quadrature rule.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{psd_sqrt, StateSpace};
use crate::report::sig;

/// Tail criterion: energy in the second half of the horizon, relative to
/// the total.
pub const TAIL_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    Impulse { node: usize, strength: f64 },
    WhiteNoise { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time: Vec<f64>,
    /// `n × T` angle deviations.
    pub theta: DMatrix<f64>,
    /// `n × T` frequency deviations.
    pub omega: DMatrix<f64>,
    pub input: Input,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Stacked state `[θ; ω]` at sample `k`.
    pub fn state(&self, k: usize) -> DVector<f64> {
        let n = self.theta.nrows();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.theta[(i, k)]
            } else {
                self.omega[(i - n, k)]
            }
        })
    }
}

/// Largest eigenvalue modulus of `A`.
pub fn spectral_radius(ss: &StateSpace) -> f64 {
    ss.a.complex_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, z| acc.max(z.norm()))
}

/// Largest step resolving the fastest mode, `0.1 / |λ_max(A)|`.
pub fn max_step(ss: &StateSpace) -> f64 {
    0.1 / spectral_radius(ss)
}

fn check_step(ss: &StateSpace, horizon: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", "must be finite and > 0"));
    }
    let suggested = max_step(ss);
    if dt > suggested {
        return Err(Error::StepTooCoarse { dt, suggested });
    }
    Ok(())
}

fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
}

fn propagate(
    phi: &DMatrix<f64>,
    x0: DVector<f64>,
    steps: usize,
    n: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut theta = DMatrix::zeros(n, steps + 1);
    let mut omega = DMatrix::zeros(n, steps + 1);
    let mut x = x0;
    for k in 0..=steps {
        theta.set_column(k, &x.rows(0, n));
        omega.set_column(k, &x.rows(n, n));
        if k < steps {
            x = phi * &x;
        }
    }
    (theta, omega)
}

/// Free response to `x(0) = B e_node · strength`, the state right after an
/// impulse of that strength at `node`.
pub fn impulse_response(
    ss: &StateSpace,
    node: usize,
    strength: f64,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    if node >= ss.n {
        return Err(Error::invalid(
            "node",
            format!("index {node} out of range for {} buses", ss.n),
        ));
    }
    check_step(ss, horizon, dt)?;
    let steps = step_count(horizon, dt);
    let phi = (&ss.a * dt).exp();
    let x0 = ss.b.column(node) * strength;
    let (theta, omega) = propagate(&phi, x0, steps, ss.n);
    Ok(Trajectory {
        time: (0..=steps).map(|k| k as f64 * dt).collect(),
        theta,
        omega,
        input: Input::Impulse { node, strength },
    })
}

/// Composite Simpson rule on uniform samples; an odd trailing interval is
/// closed with the trapezoid rule.
pub fn simpson(samples: &[f64], dt: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = 0.0;
    for k in (0..even).step_by(2) {
        acc += samples[k] + 4.0 * samples[k + 1] + samples[k + 2];
    }
    let mut total = acc * dt / 3.0;
    if even < intervals {
        total += 0.5 * dt * (samples[n - 2] + samples[n - 1]);
    }
    total
}

#[derive(Debug, Clone, Serialize)]
pub struct ImpulseEnergy {
    /// `Σ_i ∫₀ᵀ ‖y_i(t)‖² dt` over unit impulses at every node.
    pub value: f64,
    pub horizon: f64,
    /// Second-half energy divided by the total.
    pub tail_ratio: f64,
    /// `tail_ratio < TAIL_TOL`.
    pub horizon_ok: bool,
}

/// Per-sample `Σ_i ‖C x_i(t)‖²`, all impulse responses propagated at once.
fn output_energy_density(ss: &StateSpace, phi: &DMatrix<f64>, steps: usize) -> Vec<f64> {
    let q = ss.output_weight();
    let mut x = ss.b.clone();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        out.push((x.transpose() * &q * &x).trace());
        if k < steps {
            x = phi * &x;
        }
    }
    out
}

/// Time-domain estimate of `‖G‖₂²` from impulse responses at every node.
pub fn h2_via_impulse(ss: &StateSpace, horizon: f64, dt: f64) -> Result<ImpulseEnergy> {
    check_step(ss, horizon, dt)?;
    let mut steps = step_count(horizon, dt);
    steps += steps % 2;
    let phi = (&ss.a * dt).exp();
    let density = output_energy_density(ss, &phi, steps);
    let half = steps / 2;
    let first = simpson(&density[..=half], dt);
    let second = simpson(&density[half..], dt);
    let value = first + second;
    let tail_ratio = if value > 0.0 { second / value } else { 0.0 };
    Ok(ImpulseEnergy {
        value,
        horizon: steps as f64 * dt,
        tail_ratio,
        horizon_ok: tail_ratio < TAIL_TOL,
    })
}

/// Slowest decay rate among the non-structural modes.
fn slowest_rate(ss: &StateSpace) -> f64 {
    let spectrum = eigen_spectrum(ss);
    spectrum
        .iter()
        .filter(|m| !m.structural_zero)
        .map(|m| -m.re)
        .fold(f64::INFINITY, f64::min)
}

/// `h2_via_impulse` with the horizon doubled until the tail criterion holds.
pub fn h2_via_impulse_auto(ss: &StateSpace, dt: f64) -> Result<ImpulseEnergy> {
    let rate = slowest_rate(ss);
    let mut horizon = if rate.is_finite() && rate > 0.0 {
        10.0 / rate
    } else {
        1.0
    };
    let mut estimate = h2_via_impulse(ss, horizon, dt)?;
    for _ in 0..MAX_DOUBLINGS {
        if estimate.horizon_ok {
            break;
        }
        horizon *= 2.0;
        estimate = h2_via_impulse(ss, horizon, dt)?;
    }
    Ok(estimate)
}

#[derive(Debug, Clone, Serialize)]
pub struct Mode {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    /// `-Re(λ)/|λ|`; absent for the structural zero.
    pub damping_ratio: Option<f64>,
    /// The eigenvalue belonging to the rigid rotation `v₀ = [1; 0]`.
    pub structural_zero: bool,
}

/// All `2n` eigenvalues of `A`, ordered by modulus then imaginary part. The
/// one of smallest modulus is tagged as the structural zero.
pub fn eigen_spectrum(ss: &StateSpace) -> Vec<Mode> {
    let mut eig: Vec<Complex<f64>> = ss.a.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    eig.iter()
        .enumerate()
        .map(|(k, z)| {
            let modulus = z.norm();
            let structural_zero = k == 0;
            Mode {
                re: z.re,
                im: z.im,
                modulus,
                damping_ratio: (!structural_zero && modulus > 0.0).then(|| -z.re / modulus),
                structural_zero,
            }
        })
        .collect()
}

/// Virtual-inertia effort `m_i ω̇_i(t)`, `n × T`, with `ω̇` read off the
/// lower block rows of `A x(t)`.
pub fn control_effort(ss: &StateSpace, traj: &Trajectory) -> DMatrix<f64> {
    let n = ss.n;
    let lower = ss.a.rows(n, n);
    let mut effort = DMatrix::zeros(n, traj.len());
    for k in 0..traj.len() {
        let rate = lower * traj.state(k);
        effort.set_column(k, &rate.component_mul(&ss.m));
    }
    effort
}

/// Response to unit-intensity white noise on every input.
///
/// The input enters as `B dW` with `W` a standard Wiener process. Each step
/// adds a Gaussian increment with the exact covariance
/// `∫₀^dt e^{As} B Bᵀ e^{Aᵀs} ds`, obtained from the block exponential
/// `exp([[-A, BBᵀ], [0, Aᵀ]]·dt)`.
pub fn noise_response(ss: &StateSpace, horizon: f64, dt: f64, seed: u64) -> Result<Trajectory> {
    check_step(ss, horizon, dt)?;
    let steps = step_count(horizon, dt);
    let dim = 2 * ss.n;
    let mut block = DMatrix::zeros(2 * dim, 2 * dim);
    block.view_mut((0, 0), (dim, dim)).copy_from(&(-&ss.a));
    block
        .view_mut((0, dim), (dim, dim))
        .copy_from(&(&ss.b * ss.b.transpose()));
    block
        .view_mut((dim, dim), (dim, dim))
        .copy_from(&ss.a.transpose());
    let e = (block * dt).exp();
    let phi = e.view((dim, dim), (dim, dim)).transpose();
    let mut cov = &phi * e.view((0, dim), (dim, dim));
    crate::grid::symmetrize(&mut cov);
    let root = psd_sqrt(&cov);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ss.n;
    let mut theta = DMatrix::zeros(n, steps + 1);
    let mut omega = DMatrix::zeros(n, steps + 1);
    let mut x = DVector::zeros(dim);
    for k in 0..=steps {
        theta.set_column(k, &x.rows(0, n));
        omega.set_column(k, &x.rows(n, n));
        if k < steps {
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            x = &phi * &x + &root * z;
        }
    }
    Ok(Trajectory {
        time: (0..=steps).map(|k| k as f64 * dt).collect(),
        theta,
        omega,
        input: Input::WhiteNoise { seed },
    })
}

/// Output power `y(t)ᵀy(t)` at every sample.
pub fn output_power(ss: &StateSpace, traj: &Trajectory) -> Vec<f64> {
    let q = ss.output_weight();
    (0..traj.len())
        .map(|k| {
            let x = traj.state(k);
            x.dot(&(&q * &x))
        })
        .collect()
}

/// CSV with columns `t, theta_1..theta_n, omega_1..omega_n` and, when
/// given, `effort_1..effort_n`. Values carry 12 significant digits.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    traj: &Trajectory,
    effort: Option<&DMatrix<f64>>,
) -> Result<()> {
    let n = traj.theta.nrows();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    header.extend((1..=n).map(|i| format!("omega_{i}")));
    if effort.is_some() {
        header.extend((1..=n).map(|i| format!("effort_{i}")));
    }
    w.write_record(&header).map_err(std::io::Error::from)?;
    for k in 0..traj.len() {
        let mut row = vec![sig(traj.time[k])];
        row.extend(traj.theta.column(k).iter().map(|v| sig(*v)));
        row.extend(traj.omega.column(k).iter().map(|v| sig(*v)));
        if let Some(e) = effort {
            row.extend(e.column(k).iter().map(|v| sig(*v)));
        }
        w.write_record(&row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let dt = 0.1;
        let f: Vec<f64> = (0..=10).map(|k| (k as f64 * dt).powi(3)).collect();
        assert!((simpson(&f, dt) - 0.25).abs() < 1e-14);
        // odd interval count falls back to a trapezoid on the last one
        let g = vec![1.0; 4];
        assert!((simpson(&g, 0.5) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn step_count_tolerates_roundoff() {
        assert_eq!(step_count(1.0, 0.1), 10);
        assert_eq!(step_count(1.05, 0.1), 11);
    }
}
