//! On-disk experiment configuration.
//!
//! One JSON file describes a full run: the model, the integrator, the
//! experiment to perform on it, and where the artifacts go. The schema is
//! strict (unknown fields are rejected) so typos surface as parse errors
//! naming the offending field instead of silently falling back to defaults.
//! A free-form `notes` string at the top level is the only place for
//! commentary.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use sdde_core::integrator::{IntegratorConfig, Scheme};
use sdde_core::model::{
    BirthFunction, DelayFunctional, DelayedMap, ModelSpec, Nonlinearity, Smoothing,
};
use sdde_core::{SpectralState, Spectrum};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub model: ModelBlock,
    pub integrator: IntegratorBlock,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks that serde cannot express. Every message names
    /// the config path of the offending field.
    pub fn validate(&self) -> Result<()> {
        let m = self.model.spectrum.m;
        if self.model.h.len() > m {
            bail!(
                "model.h lists {} coefficients but model.spectrum.m = {m}",
                self.model.h.len()
            );
        }
        if let EtaBlock::TanhOfInner { weights, .. } = &self.model.eta {
            if weights.len() > m {
                bail!(
                    "model.eta.weights lists {} entries but model.spectrum.m = {m}",
                    weights.len()
                );
            }
        }
        if let SmoothingBlock::Diag { sigma } = &self.model.fmap.smoothing {
            if sigma.len() != m {
                bail!(
                    "model.fmap.B.sigma must list one multiplier per mode \
                     ({m}), got {}",
                    sigma.len()
                );
            }
        }
        let r = self.model.eta.r();
        let dt = self.integrator.dt;
        let ratio = r / dt;
        if !(dt > 0.0 && dt.is_finite()) {
            bail!("integrator.dt must be positive and finite, got {dt}");
        }
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            bail!(
                "integrator.dt = {dt} does not divide the delay horizon \
                 r = {r}: r/dt = {ratio} is not a whole number"
            );
        }
        self.experiment.validate(m)?;
        self.output.validate()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        self.model.build()
    }

    pub fn build_integrator(&self) -> Result<IntegratorConfig> {
        self.integrator.build()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub spectrum: SpectrumBlock,
    pub eta: EtaBlock,
    pub fmap: FmapBlock,
    /// Local reaction `g(s) = s^3 + a1 s^2 + a2 s`; omit for none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<GBlock>,
    /// Forcing coefficients, zero-padded to `spectrum.m`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<f64>,
}

impl ModelBlock {
    fn build(&self) -> Result<ModelSpec> {
        let spectrum = Spectrum::dirichlet(self.spectrum.m, self.spectrum.length)
            .context("model.spectrum")?;
        let eta = self.eta.build().context("model.eta")?;
        let fmap = DelayedMap::new(self.fmap.b.build(), self.fmap.smoothing.build())
            .context("model.fmap")?;
        let gterm = match &self.g {
            None => Nonlinearity::Zero,
            Some(g) => Nonlinearity::Cubic { a1: g.a1, a2: g.a2 },
        };
        let mut coeffs = self.h.clone();
        coeffs.resize(self.spectrum.m, 0.0);
        let forcing = SpectralState::new(coeffs, 0.0);
        ModelSpec::new(spectrum, eta, fmap, gterm, forcing, self.eta.r()).context("model")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumBlock {
    pub m: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaBlock {
    Constant { value: f64, r: f64 },
    NormSigmoid { rate: f64, r: f64 },
    TanhOfInner { weights: Vec<f64>, rate: f64, r: f64 },
}

impl EtaBlock {
    pub fn r(&self) -> f64 {
        match self {
            EtaBlock::Constant { r, .. }
            | EtaBlock::NormSigmoid { r, .. }
            | EtaBlock::TanhOfInner { r, .. } => *r,
        }
    }

    fn build(&self) -> sdde_core::Result<DelayFunctional> {
        match self {
            EtaBlock::Constant { value, r } => DelayFunctional::constant(*value, *r),
            EtaBlock::NormSigmoid { rate, r } => DelayFunctional::norm_sigmoid(*rate, *r),
            EtaBlock::TanhOfInner { weights, rate, r } => {
                DelayFunctional::tanh_of_inner(weights.clone(), *rate, *r)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmapBlock {
    pub b: BirthBlock,
    #[serde(rename = "B")]
    pub smoothing: SmoothingBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BirthBlock {
    Nicholson { c1: f64, c2: f64 },
    Linear { slope: f64 },
    BoundedSaturating { c: f64 },
}

impl BirthBlock {
    fn build(&self) -> BirthFunction {
        match *self {
            BirthBlock::Nicholson { c1, c2 } => BirthFunction::Nicholson { c1, c2 },
            BirthBlock::Linear { slope } => BirthFunction::Linear { slope },
            BirthBlock::BoundedSaturating { c } => BirthFunction::BoundedSaturating { c },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothingBlock {
    Identity,
    Lowpass { cutoff: usize },
    Diag { sigma: Vec<f64> },
}

impl SmoothingBlock {
    fn build(&self) -> Smoothing {
        match self {
            SmoothingBlock::Identity => Smoothing::Identity,
            SmoothingBlock::Lowpass { cutoff } => Smoothing::Lowpass { cutoff: *cutoff },
            SmoothingBlock::Diag { sigma } => Smoothing::Diag {
                sigma: sigma.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GBlock {
    pub a1: f64,
    pub a2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorBlock {
    pub dt: f64,
    pub scheme: SchemeBlock,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    pub record_every: usize,
    #[serde(default)]
    pub store_states: bool,
}

impl IntegratorBlock {
    fn build(&self) -> Result<IntegratorConfig> {
        let mut cfg = IntegratorConfig::new(
            self.dt,
            self.scheme.build(),
            self.t_final,
            self.record_every,
        );
        cfg.store_states = self.store_states;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeBlock {
    Etd1,
    EtdRk2,
}

impl SchemeBlock {
    fn build(self) -> Scheme {
        match self {
            SchemeBlock::Etd1 => Scheme::Etd1,
            SchemeBlock::EtdRk2 => Scheme::EtdRk2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentBlock {
    /// One trajectory; diagnostics table plus a restart checkpoint.
    Simulate {
        initial: InitialBlock,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Two trajectories from nearby initial data; separation report.
    Pair {
        initial: InitialBlock,
        /// Perturbation direction in mode coefficients, normalized
        /// internally; zero-padded to `m`.
        direction: Vec<f64>,
        delta: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A family of runs; absorbing radius per run, optional decay fit.
    Dissipativity {
        initials: Vec<InitialBlock>,
        quantity: String,
        #[serde(default = "default_tail_fraction")]
        tail_fraction: f64,
        #[serde(default = "default_entry_tol")]
        tol: f64,
        /// `[t_a, t_b]` window for the exponential fit; omit to skip it.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit_window: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Attractor cloud plus a box-counting estimate. Either sample from
    /// the model (n_traj/transient/sample_dt/embed_modes) or load a cloud
    /// from CSV and only estimate.
    Dimension {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cloud_csv: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_traj: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transient: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_dt: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embed_modes: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps_ladder: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// The built-in numerical check suite; model/integrator blocks are
    /// validated but otherwise unused.
    Validate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_beta() -> f64 {
    0.25
}

fn default_tail_fraction() -> f64 {
    0.25
}

fn default_entry_tol() -> f64 {
    sdde_core::diagnostics::DEFAULT_ENTRY_TOL
}

impl ExperimentBlock {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentBlock::Simulate { .. } => "simulate",
            ExperimentBlock::Pair { .. } => "pair",
            ExperimentBlock::Dissipativity { .. } => "dissipativity",
            ExperimentBlock::Dimension { .. } => "dimension",
            ExperimentBlock::Validate { .. } => "validate",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentBlock::Simulate { seed, .. }
            | ExperimentBlock::Pair { seed, .. }
            | ExperimentBlock::Dissipativity { seed, .. }
            | ExperimentBlock::Dimension { seed, .. }
            | ExperimentBlock::Validate { seed } => *seed,
        }
    }

    pub fn set_seed(&mut self, value: u64) {
        match self {
            ExperimentBlock::Simulate { seed, .. }
            | ExperimentBlock::Pair { seed, .. }
            | ExperimentBlock::Dissipativity { seed, .. }
            | ExperimentBlock::Dimension { seed, .. }
            | ExperimentBlock::Validate { seed } => *seed = Some(value),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let needs_seed = |initial: &InitialBlock| matches!(initial, InitialBlock::Random { .. });
        match self {
            ExperimentBlock::Simulate { initial, seed } => {
                initial.validate(m, "experiment.initial")?;
                if needs_seed(initial) && seed.is_none() {
                    bail!("experiment.seed is required for random initial data");
                }
            }
            ExperimentBlock::Pair {
                initial,
                direction,
                delta,
                beta,
                seed,
            } => {
                initial.validate(m, "experiment.initial")?;
                if needs_seed(initial) && seed.is_none() {
                    bail!("experiment.seed is required for random initial data");
                }
                if direction.len() > m {
                    bail!(
                        "experiment.direction lists {} coefficients but \
                         model.spectrum.m = {m}",
                        direction.len()
                    );
                }
                if !direction.iter().any(|c| *c != 0.0) {
                    bail!("experiment.direction must be a nonzero vector");
                }
                if !(delta.is_finite() && *delta > 0.0) {
                    bail!("experiment.delta must be positive, got {delta}");
                }
                if !(0.0..=0.5).contains(beta) {
                    bail!("experiment.beta must lie in [0, 1/2], got {beta}");
                }
            }
            ExperimentBlock::Dissipativity {
                initials,
                quantity,
                tail_fraction,
                tol,
                fit_window,
                seed,
            } => {
                if initials.is_empty() {
                    bail!("experiment.initials must list at least one initial condition");
                }
                for (i, initial) in initials.iter().enumerate() {
                    initial.validate(m, &format!("experiment.initials[{i}]"))?;
                    if needs_seed(initial) && seed.is_none() {
                        bail!("experiment.seed is required for random initial data");
                    }
                }
                sdde_core::diagnostics::Quantity::parse(quantity)
                    .map_err(|e| anyhow!("experiment.quantity: {e}"))?;
                if !(*tail_fraction > 0.0 && *tail_fraction <= 1.0) {
                    bail!(
                        "experiment.tail_fraction must lie in (0, 1], got {tail_fraction}"
                    );
                }
                if !(tol.is_finite() && *tol >= 0.0) {
                    bail!("experiment.tol must be nonnegative, got {tol}");
                }
                if let Some([a, b]) = fit_window {
                    if !(a.is_finite() && b.is_finite() && a < b) {
                        bail!("experiment.fit_window must satisfy t_a < t_b, got [{a}, {b}]");
                    }
                }
            }
            ExperimentBlock::Dimension {
                cloud_csv,
                n_traj,
                transient,
                sample_dt,
                embed_modes,
                eps_ladder,
                seed,
            } => {
                if cloud_csv.is_none() {
                    let missing = [
                        ("experiment.n_traj", n_traj.is_none()),
                        ("experiment.transient", transient.is_none()),
                        ("experiment.sample_dt", sample_dt.is_none()),
                        ("experiment.embed_modes", embed_modes.is_none()),
                        ("experiment.seed", seed.is_none()),
                    ];
                    for (field, absent) in missing {
                        if absent {
                            bail!("{field} is required when no cloud_csv is given");
                        }
                    }
                    if let Some(k) = embed_modes {
                        if *k == 0 || *k > m {
                            bail!(
                                "experiment.embed_modes must lie in 1..={m}, got {k}"
                            );
                        }
                    }
                }
                if let Some(ladder) = eps_ladder {
                    if ladder.len() < 2 {
                        bail!("experiment.eps_ladder needs at least two rungs");
                    }
                    if ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                        bail!("experiment.eps_ladder entries must be positive");
                    }
                }
            }
            ExperimentBlock::Validate { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialBlock {
    Zero,
    /// Affine history `phi(theta) = coeffs + slope * theta`.
    Modes {
        coeffs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        slope: Vec<f64>,
    },
    /// Constant-in-theta coefficients drawn uniformly from
    /// `[-amplitude, amplitude]` with the experiment seed.
    Random { amplitude: f64 },
}

impl InitialBlock {
    fn validate(&self, m: usize, path: &str) -> Result<()> {
        match self {
            InitialBlock::Zero => Ok(()),
            InitialBlock::Modes { coeffs, slope } => {
                if coeffs.len() > m {
                    bail!(
                        "{path}.coeffs lists {} coefficients but model.spectrum.m = {m}",
                        coeffs.len()
                    );
                }
                if slope.len() > m {
                    bail!(
                        "{path}.slope lists {} coefficients but model.spectrum.m = {m}",
                        slope.len()
                    );
                }
                Ok(())
            }
            InitialBlock::Random { amplitude } => {
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    bail!("{path}.amplitude must be positive, got {amplitude}");
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl OutputBlock {
    fn validate(&self) -> Result<()> {
        for f in &self.formats {
            if f != "csv" && f != "json" {
                bail!("output.formats: unknown format {f:?}; expected \"csv\" or \"json\"");
            }
        }
        if self.formats.is_empty() {
            bail!("output.formats must not be empty");
        }
        Ok(())
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind_fields: &str) -> String {
        format!(
            r#"{{
              "model": {{
                "spectrum": {{"m": 8, "L": 3.141592653589793}},
                "eta": {{"kind": "constant", "value": 0.25, "r": 0.5}},
                "fmap": {{
                  "b": {{"kind": "linear", "slope": 0.0}},
                  "B": {{"kind": "identity"}}
                }}
              }},
              "integrator": {{
                "dt": 0.05, "scheme": "etd1", "T_final": 1.0, "record_every": 1
              }},
              "experiment": {kind_fields}
            }}"#
        )
    }

    #[test]
    fn minimal_simulate_config_parses_and_builds() {
        let cfg = ExperimentConfig::from_json(&minimal(
            r#"{"kind": "simulate", "initial": {"kind": "zero"}}"#,
        ))
        .unwrap();
        assert_eq!(cfg.experiment.kind(), "simulate");
        cfg.build_model().unwrap();
        cfg.build_integrator().unwrap();
        assert!(cfg.output.wants("csv") && cfg.output.wants("json"));
    }

    #[test]
    fn non_divisible_dt_is_rejected_naming_dt() {
        let text = minimal(r#"{"kind": "simulate", "initial": {"kind": "zero"}}"#)
            .replace("\"dt\": 0.05", "\"dt\": 0.15");
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("integrator.dt"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = minimal(r#"{"kind": "simulate", "initial": {"kind": "zero"}}"#)
            .replace("\"dt\"", "\"dtt\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("dtt"), "{err}");
    }

    #[test]
    fn random_initial_data_demand_a_seed() {
        let err = ExperimentConfig::from_json(&minimal(
            r#"{"kind": "simulate", "initial": {"kind": "random", "amplitude": 1.0}}"#,
        ))
        .unwrap_err()
        .to_string();
        assert!(err.contains("experiment.seed"), "{err}");
    }

    #[test]
    fn dimension_without_cloud_requires_sampling_fields() {
        let err = ExperimentConfig::from_json(&minimal(r#"{"kind": "dimension"}"#))
            .unwrap_err()
            .to_string();
        assert!(err.contains("experiment.n_traj"), "{err}");
    }
}
