//! Classical vortex motion: `m a + B z x v + eta v + K x = F(t)`, massless by default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SpectralFunction;

/// Least-squares slope of `J(omega) = eta omega` through the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OhmicFit {
    pub eta: f64,
    /// Relative rms deviation of `J` from the fitted line in the window.
    pub residual: f64,
    pub omega_fit: f64,
    pub non_ohmic: bool,
}

/// Fits `J = eta omega` on `(0, omega_fit]`. The fit is flagged non-Ohmic when
/// the residual exceeds `threshold`, or when the window holds a negligible
/// share of the spectral weight (a gapped spectrum).
pub fn ohmic_reduction(j: &SpectralFunction, omega_fit: f64, threshold: f64) -> Result<OhmicFit> {
    if !(omega_fit > 0.0) {
        return Err(Error::Domain(format!("omega_fit must be > 0, got {omega_fit}")));
    }
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let mut points = 0;
    for (&w, &v) in j.omega.iter().zip(&j.j) {
        if w > 0.0 && w <= omega_fit {
            sxy += w * v;
            sxx += w * w;
            syy += v * v;
            points += 1;
        }
    }
    if points == 0 {
        return Err(Error::Domain(format!("no omega samples in (0, {omega_fit}]")));
    }
    let eta = sxy / sxx;
    let residual = if syy > 0.0 {
        let ss: f64 = j
            .omega
            .iter()
            .zip(&j.j)
            .filter(|(w, _)| **w > 0.0 && **w <= omega_fit)
            .map(|(w, v)| (v - eta * w).powi(2))
            .sum();
        (ss / syy).sqrt()
    } else {
        0.0
    };
    let window: f64 = j
        .omega
        .windows(2)
        .zip(j.j.windows(2))
        .filter(|(w, _)| w[1] <= omega_fit)
        .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1]))
        .sum();
    let total = j.integral();
    let gapped = total > 0.0 && window < 1e-6 * total;
    Ok(OhmicFit {
        eta,
        residual,
        omega_fit,
        non_ohmic: residual > threshold || gapped,
    })
}

/// Real-time friction kernel `gamma(t) = (2/pi) int J(w)/w cos(w t) dw`
/// sampled at `t_n = n dt`; its time integral is the Ohmic `eta`.
pub fn memory_kernel(j: &SpectralFunction, dt: f64, steps: usize) -> Vec<f64> {
    let (w, jv) = (&j.omega, &j.j);
    let ratio: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(i, &wi)| {
            if wi > 0.0 {
                jv[i] / wi
            } else if w.len() > 1 {
                jv[1] / w[1]
            } else {
                0.0
            }
        })
        .collect();
    (0..=steps)
        .map(|n| {
            let t = n as f64 * dt;
            let f: Vec<f64> = ratio.iter().zip(w).map(|(r, wi)| r * (wi * t).cos()).collect();
            std::f64::consts::FRAC_2_PI * crate::kernels::trapezoid(w, &f)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Drive {
    None,
    Constant { force: [f64; 2] },
    Sinusoidal { amplitude: [f64; 2], omega: f64 },
}

impl Drive {
    pub fn at(&self, t: f64) -> [f64; 2] {
        match self {
            Drive::None => [0.0, 0.0],
            Drive::Constant { force } => *force,
            Drive::Sinusoidal { amplitude, omega } => {
                let s = (omega * t).sin();
                [amplitude[0] * s, amplitude[1] * s]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Friction {
    /// Instantaneous `eta v`.
    Ohmic(f64),
    /// `int_0^t gamma(t - s) v(s) ds` with `gamma` sampled on the integrator step.
    Memory { dt: f64, gamma: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationOfMotion {
    pub b: f64,
    pub k_spring: f64,
    pub friction: Friction,
    pub drive: Drive,
    /// Regularizing mass; `None` is the massless equation.
    pub mass: Option<f64>,
}

impl EquationOfMotion {
    pub fn ohmic(b: f64, eta: f64, k_spring: f64) -> Self {
        Self {
            b,
            k_spring,
            friction: Friction::Ohmic(eta),
            drive: Drive::None,
            mass: None,
        }
    }

    /// Ohmic coefficient, or the time integral of the memory kernel.
    pub fn effective_eta(&self) -> f64 {
        match &self.friction {
            Friction::Ohmic(eta) => *eta,
            Friction::Memory { dt, gamma } => dt * (gamma.iter().sum::<f64>() - 0.5 * gamma.first().unwrap_or(&0.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub dt: f64,
    pub scheme: String,
    pub seed: Option<u64>,
}

impl TrajectoryRecord {
    pub fn pinning_energy(&self, k_spring: f64) -> Vec<f64> {
        self.positions
            .iter()
            .map(|x| 0.5 * k_spring * (x[0] * x[0] + x[1] * x[1]))
            .collect()
    }
}

type M2 = [[f64; 2]; 2];

fn solve2(a: M2, r: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    Some([
        (r[0] * a[1][1] - a[0][1] * r[1]) / det,
        (a[0][0] * r[1] - a[1][0] * r[0]) / det,
    ])
}

/// Small dense solve by Gaussian elimination with partial pivoting.
fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut r: [f64; N]) -> Option<[f64; N]> {
    for c in 0..N {
        let p = (c..N).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        r.swap(c, p);
        for i in c + 1..N {
            let f = a[i][c] / a[c][c];
            for k in c..N {
                a[i][k] -= f * a[c][k];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let s: f64 = (i + 1..N).map(|k| a[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / a[i][i];
    }
    Some(x)
}

/// Response matrix `A` with `A v = B z x v + eta v`.
fn response(b: f64, eta: f64) -> M2 {
    [[eta, -b], [b, eta]]
}

fn no_dynamics() -> Error {
    Error::Domain("no dynamics defined without transverse or dissipative response (B = eta = 0)".into())
}

/// Integrates from `x_init` at rest-consistent velocity to `t_final`.
///
/// The Ohmic equation is linear, `y' = L y + c(t)`, and is advanced with the
/// trapezoidal rule (second order, A-stable; at `eta = 0` it is a Cayley
/// map, so the orbit radius is conserved to rounding). The memory variant
/// discretizes the friction integral by the trapezoid rule on the same step.
pub fn integrate(eom: &EquationOfMotion, x_init: [f64; 2], t_final: f64, dt: f64) -> Result<TrajectoryRecord> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::Domain(format!("t_final must be >= 0, got {t_final}")));
    }
    if !(eom.k_spring >= 0.0) {
        return Err(Error::Domain(format!("spring constant must be >= 0, got {}", eom.k_spring)));
    }
    let eta = eom.effective_eta();
    if eta < 0.0 {
        return Err(Error::Domain(format!("friction must be >= 0, got eta = {eta}")));
    }
    if eom.b == 0.0 && eta == 0.0 && eom.mass.is_none() {
        return Err(no_dynamics());
    }
    let response_scale = eom.b.hypot(eta);
    if eom.k_spring > 0.0 && response_scale > 0.0 && dt > 0.1 * response_scale / eom.k_spring {
        return Err(Error::Domain(format!(
            "dt = {dt} does not resolve the relaxation/orbit time {:.4e}; use dt < {:.4e}",
            response_scale / eom.k_spring,
            0.1 * response_scale / eom.k_spring
        )));
    }
    let steps = (t_final / dt).round() as usize;
    match (&eom.friction, eom.mass) {
        (Friction::Ohmic(eta), None) => integrate_massless(eom, *eta, x_init, steps, dt),
        (Friction::Ohmic(eta), Some(m)) => integrate_massive(eom, *eta, m, x_init, steps, dt),
        (Friction::Memory { dt: kdt, gamma }, None) => {
            if (kdt - dt).abs() > 1e-12 * dt || gamma.len() < steps + 1 {
                return Err(Error::Domain(
                    "memory kernel must be sampled on the integrator step and cover t_final".into(),
                ));
            }
            integrate_memory(eom, gamma, x_init, steps, dt)
        }
        (Friction::Memory { .. }, Some(_)) => Err(Error::Domain(
            "the memory-friction integrator is massless only".into(),
        )),
    }
}

fn integrate_massless(eom: &EquationOfMotion, eta: f64, x0: [f64; 2], steps: usize, dt: f64) -> Result<TrajectoryRecord> {
    let a = response(eom.b, eta);
    let k = eom.k_spring;
    let vel = |x: [f64; 2], t: f64| -> Result<[f64; 2]> {
        let f = eom.drive.at(t);
        solve2(a, [f[0] - k * x[0], f[1] - k * x[1]]).ok_or_else(no_dynamics)
    };
    // x' = A^-1 (F - K x): L = -K A^-1, c = A^-1 F.
    let inv = {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
    };
    let h = 0.5 * dt;
    let lhs = [
        [1.0 + h * k * inv[0][0], h * k * inv[0][1]],
        [h * k * inv[1][0], 1.0 + h * k * inv[1][1]],
    ];
    let mut rec = record(steps, dt, "trapezoidal");
    let mut x = x0;
    rec.times.push(0.0);
    rec.positions.push(x);
    rec.velocities.push(vel(x, 0.0)?);
    for n in 0..steps {
        let t = n as f64 * dt;
        let t1 = (n + 1) as f64 * dt;
        let v = rec.velocities[n];
        let f1 = eom.drive.at(t1);
        let c1 = [inv[0][0] * f1[0] + inv[0][1] * f1[1], inv[1][0] * f1[0] + inv[1][1] * f1[1]];
        let rhs = [x[0] + h * (v[0] + c1[0]), x[1] + h * (v[1] + c1[1])];
        x = solve2(lhs, rhs).ok_or_else(|| Error::Numeric(format!("singular step matrix at t = {t}")))?;
        rec.times.push(t1);
        rec.positions.push(x);
        rec.velocities.push(vel(x, t1)?);
    }
    finish(rec)
}

fn integrate_massive(
    eom: &EquationOfMotion,
    eta: f64,
    m: f64,
    x0: [f64; 2],
    steps: usize,
    dt: f64,
) -> Result<TrajectoryRecord> {
    if !(m > 0.0) {
        return Err(Error::Domain(format!("mass must be > 0, got {m}")));
    }
    let a = response(eom.b, eta);
    let k = eom.k_spring;
    // y = (x, v): x' = v, v' = (F - K x - A v) / m.
    let mut l = [[0.0; 4]; 4];
    l[0][2] = 1.0;
    l[1][3] = 1.0;
    for i in 0..2 {
        l[2 + i][i] = -k / m;
        for j in 0..2 {
            l[2 + i][2 + j] = -a[i][j] / m;
        }
    }
    let h = 0.5 * dt;
    let mut lhs = [[0.0; 4]; 4];
    let mut rhs_m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let id = if i == j { 1.0 } else { 0.0 };
            lhs[i][j] = id - h * l[i][j];
            rhs_m[i][j] = id + h * l[i][j];
        }
    }
    let mut rec = record(steps, dt, "trapezoidal-massive");
    let mut y = [x0[0], x0[1], 0.0, 0.0];
    rec.times.push(0.0);
    rec.positions.push(x0);
    rec.velocities.push([0.0, 0.0]);
    for n in 0..steps {
        let f0 = eom.drive.at(n as f64 * dt);
        let f1 = eom.drive.at((n + 1) as f64 * dt);
        let mut r = [0.0; 4];
        for i in 0..4 {
            r[i] = (0..4).map(|j| rhs_m[i][j] * y[j]).sum();
        }
        r[2] += h * (f0[0] + f1[0]) / m;
        r[3] += h * (f0[1] + f1[1]) / m;
        y = solve_dense(lhs, r).ok_or_else(|| Error::Numeric("singular step matrix".into()))?;
        rec.times.push((n + 1) as f64 * dt);
        rec.positions.push([y[0], y[1]]);
        rec.velocities.push([y[2], y[3]]);
    }
    finish(rec)
}

fn integrate_memory(eom: &EquationOfMotion, gamma: &[f64], x0: [f64; 2], steps: usize, dt: f64) -> Result<TrajectoryRecord> {
    let k = eom.k_spring;
    let h = 0.5 * dt;
    // Instantaneous part of the discretized friction: (dt/2) gamma(0) v_n.
    let am = response(eom.b, h * gamma[0]);
    let eta_eff = eom.effective_eta();
    let mut rec = record(steps, dt, "trapezoidal-memory");
    let f0 = eom.drive.at(0.0);
    let v0 = solve2(response(eom.b, eta_eff), [f0[0] - k * x0[0], f0[1] - k * x0[1]]).ok_or_else(no_dynamics)?;
    rec.times.push(0.0);
    rec.positions.push(x0);
    rec.velocities.push(v0);
    let inv = {
        let det = am[0][0] * am[1][1] - am[0][1] * am[1][0];
        if det == 0.0 {
            return Err(no_dynamics());
        }
        [[am[1][1] / det, -am[0][1] / det], [-am[1][0] / det, am[0][0] / det]]
    };
    let lhs = [
        [1.0 + h * k * inv[0][0], h * k * inv[0][1]],
        [h * k * inv[1][0], 1.0 + h * k * inv[1][1]],
    ];
    let mut x = x0;
    for n in 0..steps {
        let m = n + 1;
        // History at t_m excluding the instantaneous term.
        let mut hist = [0.0; 2];
        for (i, v) in rec.velocities.iter().enumerate() {
            let w = if i == 0 { h } else { dt };
            let g = gamma[m - i];
            hist[0] += w * g * v[0];
            hist[1] += w * g * v[1];
        }
        let f1 = eom.drive.at(m as f64 * dt);
        let s = [f1[0] - hist[0], f1[1] - hist[1]];
        let c = [inv[0][0] * s[0] + inv[0][1] * s[1], inv[1][0] * s[0] + inv[1][1] * s[1]];
        let v = rec.velocities[n];
        let rhs = [x[0] + h * (v[0] + c[0]), x[1] + h * (v[1] + c[1])];
        x = solve2(lhs, rhs).ok_or_else(|| Error::Numeric("singular step matrix".into()))?;
        let r = [s[0] - k * x[0], s[1] - k * x[1]];
        let v1 = [inv[0][0] * r[0] + inv[0][1] * r[1], inv[1][0] * r[0] + inv[1][1] * r[1]];
        rec.times.push(m as f64 * dt);
        rec.positions.push(x);
        rec.velocities.push(v1);
    }
    finish(rec)
}

fn record(steps: usize, dt: f64, scheme: &str) -> TrajectoryRecord {
    TrajectoryRecord {
        times: Vec::with_capacity(steps + 1),
        positions: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        dt,
        scheme: scheme.to_string(),
        seed: None,
    }
}

fn finish(rec: TrajectoryRecord) -> Result<TrajectoryRecord> {
    let finite = rec
        .positions
        .iter()
        .chain(&rec.velocities)
        .all(|p| p[0].is_finite() && p[1].is_finite());
    if !finite {
        return Err(Error::Numeric("trajectory left the finite range".into()));
    }
    Ok(rec)
}

/// Angle `atan2(B, eta)` between a constant drive and the steady-state
/// velocity (`K = 0`); `pi/2` is pure Magnus motion. The velocity is rotated
/// from the drive by this angle, clockwise for `B > 0` with the force
/// convention `B z x v + eta v = F`.
pub fn hall_angle(b: f64, eta: f64) -> Result<f64> {
    if !(b.is_finite() && eta.is_finite()) {
        return Err(Error::Domain("B and eta must be finite".into()));
    }
    if b == 0.0 && eta == 0.0 {
        return Err(no_dynamics());
    }
    Ok(b.atan2(eta))
}

/// Steady-state velocity under a constant drive with `K = 0`.
pub fn steady_velocity(b: f64, eta: f64, force: [f64; 2]) -> Result<[f64; 2]> {
    solve2(response(b, eta), force).ok_or_else(no_dynamics)
}
