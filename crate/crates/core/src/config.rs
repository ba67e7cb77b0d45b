//! Run configuration shared by the simulator, the studies and the CLI.

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::{FlowParams, Preset, RhsKind};
use crate::geometry::{InitialCurve, Target};
use crate::grid::MIN_NODES;
use crate::integrate::StepperConfig;

/// Explicit flow constants; overrides the preset when present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: Target,
    #[serde(deserialize_with = "initial_shorthand")]
    pub initial: InitialCurve,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub params: Option<ParamsSpec>,
    #[serde(default)]
    pub epsilon: f64,
    pub n: usize,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default)]
    pub rhs: RhsKind,
    pub t_end: f64,
    #[serde(default = "default_every")]
    pub snap_every: u64,
    #[serde(default = "default_every")]
    pub diag_every: u64,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default)]
    pub compensated_sum: bool,
}

fn default_every() -> u64 {
    1000
}

fn default_k() -> u32 {
    4
}

fn default_out_dir() -> String {
    "out".to_string()
}

/// Accepts either the full tagged object or a bare kind name for kinds
/// without parameters.
fn initial_shorthand<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<InitialCurve, D::Error> {
    let value = serde_json::Value::deserialize(d)?;
    match value {
        serde_json::Value::String(name) => match name.as_str() {
            "great-circle" => Ok(InitialCurve::GreatCircle),
            "latitude" | "perturbed-great-circle" | "band-limited-random" => {
                Err(de::Error::custom(format!(
                    "initial kind `{name}` needs parameters; use an object with a `kind` key"
                )))
            }
            other => Err(de::Error::custom(format!("unknown initial kind `{other}`"))),
        },
        other => InitialCurve::deserialize(other).map_err(de::Error::custom),
    }
}

impl RunConfig {
    /// A config with every optional field at its default.
    pub fn new(
        target: Target,
        initial: InitialCurve,
        preset: Preset,
        n: usize,
        t_end: f64,
    ) -> Self {
        RunConfig {
            target,
            initial,
            seed: 0,
            preset: Some(preset),
            params: None,
            epsilon: 0.0,
            n,
            stepper: StepperConfig::default(),
            rhs: RhsKind::Auto,
            t_end,
            snap_every: default_every(),
            diag_every: default_every(),
            k: default_k(),
            out_dir: default_out_dir(),
            dealias: false,
            compensated_sum: false,
        }
    }

    pub fn flow_params(&self) -> Result<FlowParams> {
        let base = match (self.params, self.preset) {
            (Some(p), _) => FlowParams::new(p.a, p.b, p.c, p.lambda),
            (None, Some(preset)) => preset.params(),
            (None, None) => return Err(Error::invalid("config needs `preset` or `params`")),
        };
        let params = base.with_epsilon(self.epsilon);
        let second_order =
            self.params.is_none() && self.preset.is_some_and(|p| p.is_second_order());
        params.validate(second_order)?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.initial.validate()?;
        if self.n < MIN_NODES || !self.n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "n must be even and at least {MIN_NODES}, got {}",
                self.n
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid(format!(
                "t_end must be finite and non-negative, got {}",
                self.t_end
            )));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.snap_every == 0 || self.diag_every == 0 {
            return Err(Error::invalid(
                "snap_every and diag_every must be at least 1",
            ));
        }
        if self.rhs == RhsKind::Extrinsic && self.target != Target::UnitSphere {
            return Err(Error::invalid("rhs `extrinsic` needs the sphere target"));
        }
        self.stepper.validate()?;
        self.flow_params()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}
