//! Run configuration: one JSON document with a section per pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Drive;
use crate::error::{Error, Result};
use crate::model::{Boundary, DisorderKind, DisorderSpec};
use crate::spectrum::GapParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub nx: usize,
    pub ny: usize,
    pub a: f64,
    pub t_hop: f64,
    pub mu: f64,
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingSection {
    pub g: f64,
    /// Amplitude of the seed profile.
    pub delta_seed: f64,
    /// Core length of the seed profile.
    pub xi: f64,
    /// Gap-equation energy cutoff `omega_c`.
    pub cutoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSection {
    #[serde(with = "crate::report::extended_float")]
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSection {
    pub q: i32,
    /// Core position; the lattice midpoint when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSection {
    pub strength: f64,
    pub density: f64,
    pub seed: u64,
    pub kind: DisorderKind,
    pub ensemble_size: usize,
}

impl DisorderSection {
    pub fn spec(&self, seed: u64) -> DisorderSpec {
        DisorderSpec {
            strength: self.strength,
            density: self.density,
            seed,
            kind: self.kind,
        }
    }

    /// Seeds of the ensemble members, consecutive from `seed`.
    pub fn ensemble_seeds(&self) -> Vec<u64> {
        (0..self.ensemble_size as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Displacement {
    /// Rigid translation of the converged field.
    Rigid,
    /// Re-converged gap at each displaced center.
    Adiabatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub scf_tol: f64,
    pub max_iter: usize,
    pub mixing: f64,
    pub anderson_depth: usize,
    /// Hold the vortex at its seed center by fixing the pair-field phase.
    pub phase_lock: bool,
    /// Step for the center derivative of the pair field.
    pub fd_step: f64,
    /// Step for the state-sum transverse coefficient re-solves.
    pub transverse_step: f64,
    pub displacement: Displacement,
    /// Evaluate the state-sum transverse coefficient alongside the virtual sum.
    pub state_transverse: bool,
    /// Factor the vortex-free gap out of the field before displacing it.
    pub background: bool,
    /// Broadening of `J`; three mean level spacings when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_b: Option<f64>,
    /// Spacing of the omega grid; `eta_b / 5` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_step: Option<f64>,
    pub tau_points: usize,
    /// Extent of the tau grid at `beta = inf`.
    pub tau_max: f64,
    /// Window of the Ohmic fit; `10 eta_b` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_fit: Option<f64>,
    pub ohmic_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrictionMode {
    Ohmic,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub drive: Drive,
    pub t_final: f64,
    pub dt: f64,
    pub x_init: [f64; 2],
    pub friction: FrictionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Overrides for the coefficients read from the kernels stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_spring: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub pairing: PairingSection,
    pub temperature: TemperatureSection,
    pub vortex: VortexSection,
    pub disorder: DisorderSection,
    pub numerics: NumericsSection,
    pub dynamics: DynamicsSection,
    pub outputs: OutputSection,
}

impl Default for RunConfig {
    /// Clean pinned vortex on a 24 x 24 open lattice at zero temperature.
    fn default() -> Self {
        Self {
            lattice: LatticeSection {
                nx: 24,
                ny: 24,
                a: 1.0,
                t_hop: 1.0,
                mu: -3.0,
                boundary: Boundary::Open,
            },
            pairing: PairingSection {
                g: 5.0,
                delta_seed: 0.8,
                xi: 2.0,
                cutoff: 20.0,
            },
            temperature: TemperatureSection { beta: f64::INFINITY },
            vortex: VortexSection { q: 1, center: None },
            disorder: DisorderSection {
                strength: 0.0,
                density: 1.0,
                seed: 1,
                kind: DisorderKind::Box,
                ensemble_size: 1,
            },
            numerics: NumericsSection {
                scf_tol: 1e-7,
                max_iter: 300,
                mixing: 0.5,
                anderson_depth: 6,
                phase_lock: false,
                fd_step: 1e-3,
                transverse_step: 1e-3,
                displacement: Displacement::Rigid,
                state_transverse: true,
                background: true,
                eta_b: None,
                omega_step: None,
                tau_points: 201,
                tau_max: 20.0,
                omega_fit: None,
                ohmic_threshold: 0.5,
            },
            dynamics: DynamicsSection {
                drive: Drive::None,
                t_final: 200.0,
                dt: 0.05,
                x_init: [1.0, 0.0],
                friction: FrictionMode::Ohmic,
                mass: None,
                b: None,
                eta: None,
                k_spring: None,
            },
            outputs: OutputSection {
                directory: "out".into(),
            },
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config is always serializable");
        serde_json::to_string_pretty(&value).expect("config is always serializable") + "\n"
    }

    /// SHA-256 of the compact JSON form with keys sorted at every level.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config is always serializable");
        let canonical = serde_json::to_string(&value).expect("config is always serializable");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn gap_params(&self) -> GapParams {
        GapParams {
            g: self.pairing.g,
            beta: self.temperature.beta,
            cutoff: self.pairing.cutoff,
            tol: self.numerics.scf_tol,
            max_iter: self.numerics.max_iter,
            mixing: self.numerics.mixing,
            anderson_depth: self.numerics.anderson_depth,
            phase_lock: self.numerics.phase_lock,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        self.vortex.center.unwrap_or_else(|| {
            let l = &self.lattice;
            [0.5 * (l.nx - 1) as f64 * l.a, 0.5 * (l.ny - 1) as f64 * l.a]
        })
    }

    /// Checks every value against its domain; the error names the field.
    pub fn validate(&self) -> Result<()> {
        let l = &self.lattice;
        for (name, n) in [("lattice.nx", l.nx), ("lattice.ny", l.ny)] {
            if n < 4 {
                return Err(Error::config(name, format!("must be >= 4, got {n}")));
            }
        }
        positive("lattice.a", l.a)?;
        positive("lattice.t_hop", l.t_hop)?;
        finite("lattice.mu", l.mu)?;

        let p = &self.pairing;
        if !(p.g.is_finite() && p.g >= 0.0) {
            return Err(Error::config("pairing.g", format!("must be finite and >= 0, got {}", p.g)));
        }
        if !(p.delta_seed.is_finite() && p.delta_seed >= 0.0) {
            return Err(Error::config(
                "pairing.delta_seed",
                format!("must be finite and >= 0, got {}", p.delta_seed),
            ));
        }
        positive("pairing.xi", p.xi)?;
        positive("pairing.cutoff", p.cutoff)?;

        let beta = self.temperature.beta;
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::config("temperature.beta", format!("must be > 0 or \"inf\", got {beta}")));
        }

        let v = &self.vortex;
        if !(-1..=1).contains(&v.q) {
            return Err(Error::config("vortex.q", format!("must be -1, 0 or 1, got {}", v.q)));
        }
        if v.q != 0 && l.boundary == Boundary::Periodic {
            return Err(Error::config("vortex.q", "a single vortex needs open boundaries"));
        }
        let c = self.center();
        let extent = [(l.nx - 1) as f64 * l.a, (l.ny - 1) as f64 * l.a];
        if !(c[0] > 0.0 && c[0] < extent[0] && c[1] > 0.0 && c[1] < extent[1]) {
            return Err(Error::config(
                "vortex.center",
                format!("({}, {}) is not strictly inside the lattice", c[0], c[1]),
            ));
        }

        let d = &self.disorder;
        self.disorder.spec(d.seed).validate()?;
        if d.ensemble_size < 1 {
            return Err(Error::config("disorder.ensemble_size", "must be >= 1"));
        }

        let n = &self.numerics;
        positive("numerics.scf_tol", n.scf_tol)?;
        if n.max_iter == 0 {
            return Err(Error::config("numerics.max_iter", "must be >= 1"));
        }
        if !(n.mixing > 0.0 && n.mixing <= 1.0) {
            return Err(Error::config("numerics.mixing", format!("must lie in (0, 1], got {}", n.mixing)));
        }
        if n.anderson_depth > 20 {
            return Err(Error::config("numerics.anderson_depth", format!("must be <= 20, got {}", n.anderson_depth)));
        }
        positive("numerics.fd_step", n.fd_step)?;
        if n.fd_step > 0.1 * l.a {
            return Err(Error::config("numerics.fd_step", format!("must be <= 0.1 a, got {}", n.fd_step)));
        }
        positive("numerics.transverse_step", n.transverse_step)?;
        if n.transverse_step > 0.1 * l.a {
            return Err(Error::config(
                "numerics.transverse_step",
                format!("must be <= 0.1 a, got {}", n.transverse_step),
            ));
        }
        if let Some(eta) = n.eta_b {
            positive("numerics.eta_b", eta)?;
        }
        if let Some(step) = n.omega_step {
            positive("numerics.omega_step", step)?;
        }
        if n.tau_points < 2 {
            return Err(Error::config("numerics.tau_points", format!("must be >= 2, got {}", n.tau_points)));
        }
        positive("numerics.tau_max", n.tau_max)?;
        if let Some(w) = n.omega_fit {
            positive("numerics.omega_fit", w)?;
        }
        positive("numerics.ohmic_threshold", n.ohmic_threshold)?;

        let dy = &self.dynamics;
        match &dy.drive {
            Drive::None => {}
            Drive::Constant { force } => {
                if !force.iter().all(|f| f.is_finite()) {
                    return Err(Error::config("dynamics.drive.force", "must be finite"));
                }
            }
            Drive::Sinusoidal { amplitude, omega } => {
                if !amplitude.iter().all(|f| f.is_finite()) {
                    return Err(Error::config("dynamics.drive.amplitude", "must be finite"));
                }
                positive("dynamics.drive.omega", *omega)?;
            }
        }
        if !(dy.t_final.is_finite() && dy.t_final >= 0.0) {
            return Err(Error::config("dynamics.t_final", format!("must be finite and >= 0, got {}", dy.t_final)));
        }
        positive("dynamics.dt", dy.dt)?;
        if !dy.x_init.iter().all(|x| x.is_finite()) {
            return Err(Error::config("dynamics.x_init", "must be finite"));
        }
        if let Some(m) = dy.mass {
            positive("dynamics.mass", m)?;
        }
        if let Some(b) = dy.b {
            finite("dynamics.b", b)?;
        }
        if let Some(eta) = dy.eta {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(Error::config("dynamics.eta", format!("must be finite and >= 0, got {eta}")));
            }
        }
        if let Some(k) = dy.k_spring {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::config("dynamics.k_spring", format!("must be finite and >= 0, got {k}")));
            }
        }
        if dy.friction == FrictionMode::Memory && dy.mass.is_some() {
            return Err(Error::config("dynamics.friction", "memory friction is massless only"));
        }

        if self.outputs.directory.trim().is_empty() {
            return Err(Error::config("outputs.directory", "must not be empty"));
        }
        Ok(())
    }
}

/// Best-effort field path for a serde error, e.g. "lattice.nx".
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for key in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(key).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "config".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert!(cfg.to_json().contains("\"inf\""));
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let cfg = RunConfig::default();
        let compact = serde_json::to_string(&serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(RunConfig::from_json(&compact).unwrap().hash(), cfg.hash());
        let mut other = cfg.clone();
        other.lattice.mu = -2.5;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = RunConfig::default().to_json().replace("\"nx\"", "\"nxx\"");
        match RunConfig::from_json(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "nxx"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn periodic_vortex_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.lattice.boundary = Boundary::Periodic;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "vortex.q"));
        cfg.vortex.q = 0;
        cfg.validate().unwrap();
    }
}
