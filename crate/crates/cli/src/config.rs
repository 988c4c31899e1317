//! JSON experiment configuration.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use turnpike_core::families::{fixed_endpoint_system, stable_system};
use turnpike_core::system::{build, PdeSpec, SystemSpec};

/// Number or list, for fields that are scalar on PDE presets and vectors
/// on raw systems.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Values {
    Scalar(f64),
    List(Vec<f64>),
}

impl Values {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::Scalar(v) => vec![*v],
            Values::List(v) => v.clone(),
        }
    }

    fn scalar(&self, field: &str) -> Result<f64> {
        match self {
            Values::Scalar(v) => Ok(*v),
            Values::List(v) if v.len() == 1 => Ok(v[0]),
            Values::List(_) => bail!("field `{field}` must be a number for PDE presets"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Free,
    Fixed,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: Option<String>,
    #[serde(rename = "N")]
    pub modes: Option<usize>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub c: Option<f64>,
    pub x_con: Option<f64>,
    pub x_obs: Option<f64>,
    pub z: Option<Values>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub x0: Option<Vec<f64>>,
    pub x1: Option<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c_matrix: Option<Vec<Vec<f64>>>,
    pub horizons: Option<Vec<f64>>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    /// `[n, m, p]` for random systems.
    pub dims: Option<[usize; 3]>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub label: String,
    pub system: SystemSpec<f64>,
    pub pde: Option<PdeSpec<f64>>,
    pub horizon: f64,
    pub steps: usize,
    /// `steps` as given in the config or on the command line.
    pub explicit_steps: Option<usize>,
    pub horizons: Vec<f64>,
}

impl Experiment {
    /// Grid size shared by all horizons of a sweep.
    pub fn sweep_steps(&self) -> usize {
        let longest = self.horizons.iter().copied().fold(0.0, f64::max);
        self.explicit_steps.unwrap_or_else(|| default_steps(longest))
    }
}

pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_HORIZONS: [f64; 3] = [10.0, 20.0, 40.0];
/// Grid nodes per unit time when `steps` is not given.
pub const STEPS_PER_UNIT: f64 = 100.0;
const MIN_STEPS: usize = 200;

pub fn default_steps(horizon: f64) -> usize {
    ((STEPS_PER_UNIT * horizon).ceil() as usize).max(MIN_STEPS)
}

pub fn load(path: &Path, ov: &Overrides) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let raw: RawConfig =
        serde_json::from_str(&text).map_err(|e| anyhow!("config {}: {e}", path.display()))?;
    resolve(raw, ov)
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        bail!("matrix `{name}` has rows of unequal length");
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn resolve(raw: RawConfig, ov: &Overrides) -> Result<Experiment> {
    let horizon = ov.horizon.or(raw.horizon).unwrap_or(DEFAULT_HORIZON);
    if !(horizon > 0.0 && horizon.is_finite()) {
        bail!("horizon T must be positive, got {horizon}");
    }
    let explicit_steps = ov.steps.or(raw.steps);
    let steps = explicit_steps.unwrap_or_else(|| default_steps(horizon));
    let horizons = raw.horizons.clone().unwrap_or_else(|| DEFAULT_HORIZONS.to_vec());
    let seed = ov.seed.or(raw.seed).unwrap_or(0);
    let kind = raw.kind.clone().unwrap_or_else(|| "system".into());
    let mut pde = None;

    let mut system = match kind.as_str() {
        "heat" | "wave" => {
            let length = raw.length.unwrap_or(10.0);
            let modes = raw.modes.unwrap_or(16);
            let mid = length / 2.0;
            let x_con = raw.x_con.unwrap_or(mid);
            let x_obs = raw.x_obs.unwrap_or(mid);
            let mut spec = if kind == "heat" {
                PdeSpec::heat(modes, length, raw.c.unwrap_or(0.0), x_con, x_obs)
            } else {
                if raw.c.is_some() {
                    bail!("field `c` only applies to heat configurations");
                }
                PdeSpec::wave(modes, length, x_con, x_obs)
            };
            if let Some(z) = &raw.z {
                spec = spec.with_target(z.scalar("z")?);
            } else {
                spec = spec.with_target(1.0);
            }
            spec.x0 = raw.x0.clone();
            let sys = build(&spec)?.with_x1(raw.x1.as_deref().map(vector))?;
            pde = Some(spec);
            sys
        }
        "double-integrator" => {
            let x0 = raw.x0.clone().unwrap_or_else(|| vec![1.0, 0.0]);
            let x1 = match raw.mode {
                Some(Mode::Free) => None,
                _ => Some(raw.x1.clone().unwrap_or_else(|| vec![0.0, 1.0])),
            };
            SystemSpec::new(
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
                vector(&raw.z.as_ref().map_or(vec![0.0], Values::to_vec)),
                vector(&x0),
                x1.as_deref().map(vector),
            )?
        }
        "random" => {
            let [n, m, p] = raw.dims.unwrap_or([4, 2, 2]);
            let sys = match raw.mode {
                Some(Mode::Fixed) => fixed_endpoint_system(seed, n, m, p, 0.5),
                _ => stable_system(seed, n, m, p),
            };
            let sys = match &raw.x0 {
                Some(x0) => sys.with_x0(vector(x0))?,
                None => sys,
            };
            match (&raw.x1, raw.mode) {
                (Some(x1), _) => sys.with_x1(Some(vector(x1)))?,
                (None, Some(Mode::Free)) => sys.with_x1(None)?,
                _ => sys,
            }
        }
        "system" => {
            let (a, b, c) = match (&raw.a, &raw.b, &raw.c_matrix) {
                (Some(a), Some(b), Some(c)) => (matrix(a, "A")?, matrix(b, "B")?, matrix(c, "C")?),
                _ => bail!("a raw system needs fields `A`, `B` and `C` (or set `kind`)"),
            };
            let n = a.nrows();
            let z = raw.z.as_ref().map_or_else(|| vec![0.0; c.nrows()], Values::to_vec);
            let x0 = raw.x0.clone().unwrap_or_else(|| vec![0.0; n]);
            SystemSpec::new(a, b, c, vector(&z), vector(&x0), raw.x1.as_deref().map(vector))?
        }
        other => bail!("unknown kind `{other}` (expected heat, wave, double-integrator, random, or raw A/B/C)"),
    };

    if kind != "system" && (raw.a.is_some() || raw.b.is_some() || raw.c_matrix.is_some()) {
        bail!("fields `A`, `B`, `C` cannot be combined with kind `{kind}`");
    }
    if kind != "random" && kind != "double-integrator" && raw.x1.is_none() && raw.mode == Some(Mode::Fixed) {
        let n = system.n();
        system = system.with_x1(Some(DVector::zeros(n)))?;
    }
    if raw.mode == Some(Mode::Free) && raw.x1.is_some() {
        bail!("mode `free` conflicts with a terminal state `x1`");
    }
    if kind != "heat" && kind != "wave" {
        for (name, present) in [
            ("N", raw.modes.is_some()),
            ("L", raw.length.is_some()),
            ("c", raw.c.is_some()),
            ("x_con", raw.x_con.is_some()),
            ("x_obs", raw.x_obs.is_some()),
        ] {
            if present {
                bail!("field `{name}` only applies to heat and wave configurations");
            }
        }
    }

    Ok(Experiment {
        label: kind,
        system,
        pde,
        horizon,
        steps,
        explicit_steps,
        horizons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<Experiment> {
        resolve(serde_json::from_str(json)?, &Overrides::default())
    }

    #[test]
    fn heat_preset_builds_modal_system() {
        let e = parse(r#"{"kind": "heat", "N": 16, "L": 10, "c": 0, "x_con": 3.3, "x_obs": 2, "z": 1, "T": 30}"#).unwrap();
        assert_eq!(e.system.n(), 16);
        assert_eq!(e.horizon, 30.0);
        assert_eq!(e.steps, 3000);
        assert!(e.pde.is_some());
        assert!(!e.system.is_fixed_endpoint());
    }

    #[test]
    fn raw_system_with_overrides() {
        let raw = serde_json::from_str(r#"{"A": [[0, 1], [0, 0]], "B": [[0], [1]], "C": [[1, 0]], "x1": [0, 0], "T": 5}"#).unwrap();
        let e = resolve(raw, &Overrides { horizon: Some(7.0), steps: Some(70), seed: None }).unwrap();
        assert_eq!(e.horizon, 7.0);
        assert_eq!(e.steps, 70);
        assert!(e.system.is_fixed_endpoint());
        assert_eq!(e.system.z.len(), 1);
    }

    #[test]
    fn unknown_fields_are_reported_with_position() {
        let err = serde_json::from_str::<RawConfig>("{\n  \"kind\": \"heat\",\n  \"Nmodes\": 3\n}").unwrap_err();
        assert_eq!(err.line(), 3);
        assert!(err.to_string().contains("Nmodes"));
    }

    #[test]
    fn conflicting_fields_are_rejected() {
        assert!(parse(r#"{"kind": "wave", "c": 1}"#).is_err());
        assert!(parse(r#"{"A": [[1]], "B": [[1]], "C": [[1]], "N": 3}"#).is_err());
        assert!(parse(r#"{"A": [[1, 0], [1]], "B": [[1]], "C": [[1]]}"#).is_err());
        assert!(parse(r#"{"kind": "double-integrator", "mode": "free", "x1": [0, 0]}"#).is_err());
        assert!(parse(r#"{"kind": "nope"}"#).is_err());
    }

    #[test]
    fn random_systems_follow_the_seed() {
        let a = resolve(serde_json::from_str(r#"{"kind": "random"}"#).unwrap(), &Overrides { seed: Some(4), ..Default::default() }).unwrap();
        let b = parse(r#"{"kind": "random", "seed": 4}"#).unwrap();
        let c = parse(r#"{"kind": "random", "seed": 5}"#).unwrap();
        assert_eq!(a.system, b.system);
        assert_ne!(a.system, c.system);
    }
}
