//! Run configuration: everything needed to reproduce a reduction run.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use daemor::adaptive::SparkOptions;
use daemor::linalg::C64;
use daemor::model::{
    build_transmission_line, load_matrix_market, random_stable_dae, OutputTap, RandomDaeOptions, SemiExplicitDae, Side,
    TransmissionLineParams,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    OrthogonalV,
    OrthogonalW,
    TwoSidedCorrected,
    Pork,
    CureSpark,
    CurePork,
}

impl MethodName {
    pub fn needs_shifts(self) -> bool {
        !matches!(self, MethodName::CureSpark)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Tap {
    End,
    Inductor,
}

impl From<Tap> for OutputTap {
    fn from(t: Tap) -> Self {
        match t {
            Tap::End => OutputTap::EndCapacitorVoltage,
            Tap::Inductor => OutputTap::FirstInductorVoltage,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Tline {
        q: usize,
        #[serde(default = "default_tap")]
        tap: Tap,
    },
    Random {
        n_dyn: usize,
        n_alg: usize,
        #[serde(default = "one")]
        inputs: usize,
        #[serde(default = "one")]
        outputs: usize,
        #[serde(default)]
        strictly_proper: bool,
    },
    /// Sidecar JSON naming Matrix Market files.
    Files { sidecar: PathBuf },
}

fn default_tap() -> Tap {
    Tap::End
}

fn one() -> usize {
    1
}

impl ModelSource {
    /// `seed` drives the random generator; other sources ignore it.
    pub fn load(&self, seed: u64) -> Result<SemiExplicitDae> {
        Ok(match self {
            ModelSource::Tline { q, tap } => {
                build_transmission_line(&TransmissionLineParams::telephone_cable(*q).with_tap((*tap).into()))?
            }
            ModelSource::Random {
                n_dyn,
                n_alg,
                inputs,
                outputs,
                strictly_proper,
            } => {
                let mut opts = RandomDaeOptions::new(*n_dyn, *n_alg).io(*inputs, *outputs);
                if *strictly_proper {
                    opts = opts.strictly_proper();
                }
                random_stable_dae(&opts, seed)?
            }
            ModelSource::Files { sidecar } => {
                load_matrix_market(sidecar)
                    .with_context(|| format!("loading {}", sidecar.display()))?
                    .0
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl FrequencyGrid {
    pub fn omegas(&self) -> Result<Vec<f64>> {
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min && self.points >= 2) {
            bail!("frequency grid needs 0 < omega_min < omega_max and at least 2 points");
        }
        Ok(daemor::model::logspace(
            self.omega_min.log10(),
            self.omega_max.log10(),
            self.points,
        ))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSource>,
    pub method: Option<MethodName>,
    /// Krylov side for pork and the CURE methods.
    pub side: Option<Side>,
    /// Shifts as strings such as "2", "1e8+3e8i"; complex shifts get their
    /// conjugate added unless it is listed.
    pub shifts: Option<Vec<String>>,
    pub order: Option<usize>,
    pub unsafe_orthogonal: bool,
    /// Make the system strictly dissipative before reducing.
    pub sd_transform: bool,
    /// Defaults to three decades below the slowest pole up to the fastest one.
    pub grid: Option<FrequencyGrid>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub spark: Option<SparkOptions>,
}

impl RunConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parsed_shifts(&self) -> Result<Option<Vec<C64>>> {
        self.shifts
            .as_ref()
            .map(|v| v.iter().map(|s| parse_complex(s)).collect())
            .transpose()
    }
}

/// Parses "3", "-1.5e2", "2i", "1+2i", "1e8-3.5e8i".
pub fn parse_complex(text: &str) -> Result<C64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || anyhow!("cannot parse shift {text:?}");
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return Ok(C64::new(t.parse().map_err(|_| bad())?, 0.0));
    };
    // split at the last sign that is not an exponent sign or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |s: &str| -> Result<f64> {
        match s {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => s.parse().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => Ok(C64::new(body[..k].parse().map_err(|_| bad())?, imag(&body[k..])?)),
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}
