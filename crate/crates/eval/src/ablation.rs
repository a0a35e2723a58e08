//! Cumulative component toggles: each variant adds one component to the
//! one before it.

use smite_core::{GuidanceConfig, LabelVideo, TrackTable, VideoClip};
use smite_diffusion::{inflate, AttentionScope, DiffusionBackend, MiniLdm, SegModelState};
use smite_guidance::run_inference;

use crate::error::{EvalError, Result};
use crate::report::{evaluate, EvalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Frame-independent attention, base cross-attention, no guidance.
    PerFrame,
    /// Joint self-attention over all frames.
    Inflation,
    /// Tuned cross-attention keys and values.
    CaTuning,
    /// Tracking energy.
    Tracking,
    /// Low-pass regularizer on top: the full method.
    LpReg,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::PerFrame,
        Variant::Inflation,
        Variant::CaTuning,
        Variant::Tracking,
        Variant::LpReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PerFrame => "per-frame",
            Variant::Inflation => "+inflation",
            Variant::CaTuning => "+ca-tuning",
            Variant::Tracking => "+tracking",
            Variant::LpReg => "+lp-reg",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| EvalError::UnknownVariant(name.to_string()))
    }

    pub fn inflation(self) -> bool {
        self >= Variant::Inflation
    }

    pub fn ca_tuning(self) -> bool {
        self >= Variant::CaTuning
    }

    pub fn tracking(self) -> bool {
        self >= Variant::Tracking
    }

    pub fn lp_reg(self) -> bool {
        self >= Variant::LpReg
    }
}

impl std::str::FromStr for Variant {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Zeroes the energy weights of components the variant leaves out.
pub fn variant_config(cfg: &GuidanceConfig, variant: Variant) -> GuidanceConfig {
    GuidanceConfig {
        lambda_tracking: if variant.tracking() { cfg.lambda_tracking } else { 0.0 },
        lambda_reg: if variant.lp_reg() { cfg.lambda_reg } else { 0.0 },
        ..cfg.clone()
    }
}

/// The frame-independent model, or its inflated form.
pub fn variant_model(base: &MiniLdm, variant: Variant) -> Result<MiniLdm> {
    match (variant.inflation(), base.scope()) {
        (true, AttentionScope::PerFrame) => Ok(inflate(base)?),
        (false, AttentionScope::Joint) => Err(EvalError::ShapeMismatch(
            "a frame-independent variant needs the uninflated model".into(),
        )),
        _ => Ok(base.clone()),
    }
}

/// Drops tuned cross-attention weights when the variant does not use them.
pub fn variant_state(state: &SegModelState, base: &MiniLdm, variant: Variant) -> Result<SegModelState> {
    let mut out = state.clone();
    if !variant.ca_tuning() {
        out.cross_attention = base.base_cross_attention()?;
    }
    Ok(out)
}

/// What one ablation run segments and scores against.
#[derive(Debug, Clone, Copy)]
pub struct AblationInputs<'a> {
    pub name: &'a str,
    pub category: &'a str,
    pub video: &'a VideoClip,
    pub gt: &'a LabelVideo,
    pub annotated: &'a [usize],
    pub tracks: Option<&'a TrackTable>,
    pub tolerance: f64,
}

/// Segments with the variant's energies and scores the result. The caller
/// supplies the backend and state already configured for the variant (see
/// [`variant_model`] and [`variant_state`]).
pub fn run_ablation(
    backend: &dyn DiffusionBackend,
    state: &SegModelState,
    cfg: &GuidanceConfig,
    variant: Variant,
    inputs: AblationInputs<'_>,
) -> Result<EvalRecord> {
    let out = run_inference(
        backend,
        inputs.video,
        state,
        &variant_config(cfg, variant),
        inputs.tracks,
    )?;
    evaluate(
        inputs.name,
        inputs.category,
        &out.labels,
        inputs.gt,
        inputs.annotated,
        inputs.tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(matches!(Variant::parse("+magic"), Err(EvalError::UnknownVariant(_))));
    }

    #[test]
    fn toggles_are_cumulative() {
        let flags = |v: Variant| (v.inflation(), v.ca_tuning(), v.tracking(), v.lp_reg());
        assert_eq!(flags(Variant::PerFrame), (false, false, false, false));
        assert_eq!(flags(Variant::Tracking), (true, true, true, false));
        assert_eq!(flags(Variant::LpReg), (true, true, true, true));
        let cfg = GuidanceConfig::default();
        let c = variant_config(&cfg, Variant::PerFrame);
        assert!(!c.guidance_enabled());
        let c = variant_config(&cfg, Variant::Tracking);
        assert_eq!((c.lambda_tracking, c.lambda_reg), (cfg.lambda_tracking, 0.0));
    }
}
