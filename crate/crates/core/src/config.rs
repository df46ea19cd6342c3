//! Refinement parameters and the TOML run configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Rule combining the depth and curvature weights into one constraint weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    #[default]
    Product,
    WeightedSum,
    Max,
    Min,
    Adaptive,
    ConfidenceBased,
    RegionAdaptive,
    KappaOnly,
    DepthOnly,
}

impl FusionStrategy {
    /// Ablation table order.
    pub const ALL: [FusionStrategy; 9] = [
        FusionStrategy::KappaOnly,
        FusionStrategy::DepthOnly,
        FusionStrategy::WeightedSum,
        FusionStrategy::ConfidenceBased,
        FusionStrategy::Max,
        FusionStrategy::Min,
        FusionStrategy::Adaptive,
        FusionStrategy::RegionAdaptive,
        FusionStrategy::Product,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionStrategy::Product => "product",
            FusionStrategy::WeightedSum => "weighted_sum",
            FusionStrategy::Max => "max",
            FusionStrategy::Min => "min",
            FusionStrategy::Adaptive => "adaptive",
            FusionStrategy::ConfidenceBased => "confidence_based",
            FusionStrategy::RegionAdaptive => "region_adaptive",
            FusionStrategy::KappaOnly => "kappa_only",
            FusionStrategy::DepthOnly => "depth_only",
        }
    }
}

/// Direction of the curvature ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureOrientation {
    /// Strong planar constraint at low curvature (`w_max` below `kappa_low`).
    #[default]
    Inverted,
    /// `w_min` below `kappa_low`, `w_max` above `kappa_high`.
    AsWritten,
}

/// How the k nearest depth distances collapse to one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnAggregate {
    #[default]
    Min,
    Mean,
}

/// What the entropy ratio blends toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendTarget {
    /// `r * G_new + (1 - r) * G` with `G_new` the fully refined Gaussian.
    #[default]
    Refined,
    /// `G` plus the residual scaled by `r`.
    ScaledResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Entropy-gated blend with plane-constrained positions.
    #[default]
    Sus,
    /// Fixed retention-weight blend, no gating.
    Fixed,
    /// Entropy-gated blend with the plane constraint disabled.
    Unconstrained,
}

impl UpdateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateMode::Sus => "sus",
            UpdateMode::Fixed => "fixed",
            UpdateMode::Unconstrained => "unconstrained",
        }
    }
}

macro_rules! impl_str_enum {
    ($ty:ty) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let quoted = serde_json::Value::String(s.replace('-', "_"));
                serde_json::from_value(quoted).map_err(|_| {
                    Error::InvalidConfig(format!(
                        "unknown {} value '{s}'",
                        stringify!($ty)
                    ))
                })
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match serde_json::to_value(self) {
                    Ok(serde_json::Value::String(s)) => f.write_str(&s),
                    _ => write!(f, "{self:?}"),
                }
            }
        }
    };
}

impl_str_enum!(FusionStrategy);
impl_str_enum!(CurvatureOrientation);
impl_str_enum!(KnnAggregate);
impl_str_enum!(BlendTarget);
impl_str_enum!(UpdateMode);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub kappa_low: f64,
    pub kappa_high: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub d_near: f64,
    pub d_far: f64,
    pub knn_k: usize,
    pub knn_aggregate: KnnAggregate,
    pub mc_samples: usize,
    pub tau_unc: f64,
    pub num_classes: usize,
    pub fusion: FusionStrategy,
    pub curvature_orientation: CurvatureOrientation,
    pub init_interval: f64,
    pub voxel_size: f64,
    pub fixed_weight: f64,
    pub blend_target: BlendTarget,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            kappa_low: 5.0,
            kappa_high: 20.0,
            w_min: 0.0,
            w_max: 1.0,
            d_near: 0.1,
            d_far: 0.25,
            knn_k: 10,
            knn_aggregate: KnnAggregate::Min,
            mc_samples: 3,
            tau_unc: 0.3,
            num_classes: crate::NUM_CLASSES,
            fusion: FusionStrategy::Product,
            curvature_orientation: CurvatureOrientation::Inverted,
            init_interval: 0.16,
            voxel_size: 0.08,
            fixed_weight: 0.5,
            blend_target: BlendTarget::Refined,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.kappa_low < self.kappa_high) {
            return fail(format!(
                "kappa_low ({}) must be < kappa_high ({})",
                self.kappa_low, self.kappa_high
            ));
        }
        if !(self.d_near < self.d_far) || self.d_near < 0.0 {
            return fail(format!(
                "need 0 <= d_near ({}) < d_far ({})",
                self.d_near, self.d_far
            ));
        }
        if !(0.0 <= self.w_min && self.w_min <= self.w_max && self.w_max <= 1.0) {
            return fail(format!(
                "need 0 <= w_min ({}) <= w_max ({}) <= 1",
                self.w_min, self.w_max
            ));
        }
        if self.mc_samples < 1 {
            return fail("mc_samples must be >= 1".into());
        }
        if self.knn_k < 1 {
            return fail("knn_k must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.tau_unc) {
            return fail(format!("tau_unc ({}) must lie in [0,1]", self.tau_unc));
        }
        if self.num_classes != crate::NUM_CLASSES {
            return fail(format!(
                "num_classes must be {} (logit vectors are fixed-width), got {}",
                crate::NUM_CLASSES,
                self.num_classes
            ));
        }
        if !(self.init_interval > 0.0) || !(self.voxel_size > 0.0) {
            return fail("init_interval and voxel_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.fixed_weight) {
            return fail(format!("fixed_weight ({}) must lie in [0,1]", self.fixed_weight));
        }
        Ok(())
    }
}

/// Parameters of the synthetic proposal source that stands in for the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    /// Std-dev of per-sample position noise, meters.
    pub sigma_pos: f64,
    /// Std-dev of per-sample logit noise.
    pub sigma_sem: f64,
    /// Fraction of the gap to the target covered by one proposal.
    pub step: f64,
    /// Logit magnitude of a confident one-hot target.
    pub logit_scale: f64,
    /// Gaussians farther than this from every surface are proposed as free space.
    pub surface_band: f64,
    pub sigma_scale: f64,
    pub sigma_opacity: f64,
    /// Std-dev of the rotation jitter angle, radians.
    pub sigma_rot: f64,
    pub target_opacity: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            sigma_pos: 0.05,
            sigma_sem: 1.0,
            step: 0.5,
            logit_scale: 8.0,
            surface_band: 0.3,
            sigma_scale: 0.005,
            sigma_opacity: 0.02,
            sigma_rot: 0.02,
            target_opacity: 0.8,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_pos,
            self.sigma_sem,
            self.sigma_scale,
            self.sigma_opacity,
            self.sigma_rot,
        ];
        if all.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("noise scales must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.step) {
            return Err(Error::InvalidConfig(format!("step ({}) must lie in [0,1]", self.step)));
        }
        if !(self.surface_band >= 0.0) || !(self.logit_scale >= 0.0) {
            return Err(Error::InvalidConfig(
                "surface_band and logit_scale must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.target_opacity) {
            return Err(Error::InvalidConfig("target_opacity must lie in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplatConfig {
    pub occ_threshold: f64,
    pub cutoff_sigma: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            occ_threshold: 0.1,
            cutoff_sigma: 4.0,
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.occ_threshold > 0.0) {
            return Err(Error::InvalidConfig("occ_threshold must be > 0".into()));
        }
        if !(self.cutoff_sigma >= 3.0) {
            return Err(Error::InvalidConfig("cutoff_sigma must be >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: UpdateMode,
    pub seed: u64,
    /// Refinement rounds for single-frame local prediction.
    pub local_iterations: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: UpdateMode::Sus,
            seed: 0,
            local_iterations: 3,
        }
    }
}

/// Complete configuration of one experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub refinement: RefinementConfig,
    pub proposals: ProposalConfig,
    pub splat: SplatConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.refinement.validate()?;
        self.proposals.validate()?;
        self.splat.validate()
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
