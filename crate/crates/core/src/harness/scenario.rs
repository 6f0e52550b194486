use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::calibration::{calibrate_material, MaterialModel, SensitivityPreset};
use crate::decoder::ClassifierThresholds;
use crate::physics::{
    AppliedForces, CrosstalkModel, DeformationState, NoiseModel, ParasiticModel, ProximityParams, ProximityStimulus,
    TaxelGeometry, TaxelModel,
};
use crate::readout::{CdcConfig, WorldSample};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalInput {
    ForceN(f64),
    PressureKpa(f64),
    EtaMm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShearInput {
    ForceN(f64),
    LambdaMm(f64),
}

macro_rules! input_kind {
    ($t:ty { $($variant:ident),+ }) => {
        impl $t {
            fn value(self) -> f64 {
                match self {
                    $(Self::$variant(v) => v,)+
                }
            }
            fn with_value(self, v: f64) -> Self {
                match self {
                    $(Self::$variant(_) => Self::$variant(v),)+
                }
            }
            fn same_kind(self, other: Self) -> bool {
                std::mem::discriminant(&self) == std::mem::discriminant(&other)
            }
        }
    };
}

input_kind!(NormalInput {
    ForceN,
    PressureKpa,
    EtaMm
});
input_kind!(ShearInput { ForceN, LambdaMm });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProximityInput {
    pub distance_mm: f64,
    #[serde(default = "default_grounded")]
    pub grounded: bool,
}

fn default_grounded() -> bool {
    true
}

/// One point on the stimulus timeline. Each field is its own track: a track
/// interpolates between the keyframes that set it, sits at rest before its
/// first keyframe and holds its last value afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear_x: Option<ShearInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear_y: Option<ShearInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proximity: Option<ProximityInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_plane: Option<bool>,
}

impl Keyframe {
    pub fn at(t: f64) -> Self {
        Self {
            t,
            normal: None,
            shear_x: None,
            shear_y: None,
            proximity: None,
            ground_plane: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedParasitics {
    None,
    Unshielded,
    Shielded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedProximity {
    Average,
    LightContact,
    None,
}

/// A named preset or an inline parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Preset<N, T> {
    Named(N),
    Inline(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    #[serde(default)]
    pub cdc: CdcConfig,
    #[serde(default = "default_self_every")]
    pub self_every: u32,
    #[serde(default)]
    pub shield_leakage: f64,
}

fn default_self_every() -> u32 {
    1
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            cdc: CdcConfig::default(),
            self_every: 1,
            shield_leakage: 0.0,
        }
    }
}

/// Configuration block of a scenario file. Absent entries take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<TaxelGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<Preset<SensitivityPreset, MaterialModel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parasitics: Option<Preset<NamedParasitics, ParasiticModel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosstalk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proximity: Option<Preset<NamedProximity, ProximityParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ClassifierThresholds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_area_mm2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub config: ScenarioConfig,
    pub keyframes: Vec<Keyframe>,
}

/// Fully resolved configuration used by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub model: TaxelModel,
    pub noise: NoiseModel,
    pub readout: ReadoutConfig,
    pub thresholds: ClassifierThresholds,
    pub contact_area_mm2: f64,
}

impl ScenarioConfig {
    pub fn resolve(&self) -> Result<ResolvedConfig, HarnessError> {
        let geometry = self.geometry.unwrap_or_default();
        geometry.validate()?;
        let c0 = geometry.c0_pf();
        // the elastomer does not depend on the interconnect, so presets are
        // calibrated on a parasitic-free taxel
        let material = match &self.material {
            None => MaterialModel::calibrated_for(&geometry),
            Some(Preset::Named(p)) => calibrate_material(*p, &geometry, &ParasiticModel::none())?,
            Some(Preset::Inline(m)) => *m,
        };
        let parasitics = match &self.parasitics {
            None | Some(Preset::Named(NamedParasitics::None)) => ParasiticModel::none(),
            Some(Preset::Named(NamedParasitics::Unshielded)) => ParasiticModel::unshielded(c0)?,
            Some(Preset::Named(NamedParasitics::Shielded)) => ParasiticModel::shielded(c0)?,
            Some(Preset::Inline(p)) => *p,
        };
        let proximity = match &self.proximity {
            None | Some(Preset::Named(NamedProximity::Average)) => ProximityParams::average(),
            Some(Preset::Named(NamedProximity::LightContact)) => ProximityParams::light_contact(),
            Some(Preset::Named(NamedProximity::None)) => ProximityParams::none(),
            Some(Preset::Inline(p)) => *p,
        };
        let mut model = TaxelModel::ideal(geometry);
        model.material = material;
        model.parasitics = parasitics;
        model.crosstalk = CrosstalkModel {
            xy_coupling: self.crosstalk.unwrap_or(0.0),
        };
        model.proximity = proximity;
        model.validate()?;
        let noise = self
            .noise
            .unwrap_or(NoiseModel::new(super::DEFAULT_NOISE_SIGMA_PF, super::DEFAULT_SEED));
        noise.stream()?;
        let readout = self.readout.unwrap_or_default();
        readout.cdc.validate()?;
        let thresholds = self.thresholds.unwrap_or_default();
        thresholds.validate()?;
        let contact_area_mm2 = self.contact_area_mm2.unwrap_or(AppliedForces::INDENTER_AREA_MM2);
        if !(contact_area_mm2.is_finite() && contact_area_mm2 > 0.0) {
            return Err(HarnessError::Invalid(format!(
                "contact area must be positive, got {contact_area_mm2}"
            )));
        }
        Ok(ResolvedConfig {
            model,
            noise,
            readout,
            thresholds,
            contact_area_mm2,
        })
    }
}

/// Stimulus state at one instant, before it is mapped to displacements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub normal: Option<NormalInput>,
    pub shear_x: Option<ShearInput>,
    pub shear_y: Option<ShearInput>,
    pub proximity: Option<ProximityStimulus>,
    pub ground_plane: bool,
}

fn track<T: Copy>(
    keyframes: &[Keyframe],
    get: impl Fn(&Keyframe) -> Option<T>,
    t: f64,
    interp: Interpolation,
    lerp: impl Fn(T, T, f64) -> T,
) -> Option<T> {
    let mut prev: Option<(f64, T)> = None;
    for k in keyframes {
        let Some(v) = get(k) else { continue };
        if k.t > t {
            return match (prev, interp) {
                (None, _) => None,
                (Some((_, p)), Interpolation::Step) => Some(p),
                (Some((t0, p)), Interpolation::Linear) => Some(lerp(p, v, (t - t0) / (k.t - t0))),
            };
        }
        prev = Some((k.t, v));
    }
    prev.map(|(_, v)| v)
}

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a + (b - a) * u
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::Schema {
                pointer: json_pointer(&path),
                msg: e.into_inner().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Number of distinct stimulus tracks the timeline drives.
    pub fn stimulus_channels(&self) -> usize {
        let any = |f: fn(&Keyframe) -> bool| self.keyframes.iter().any(f);
        [
            any(|k| k.normal.is_some()),
            any(|k| k.shear_x.is_some()),
            any(|k| k.shear_y.is_some()),
            any(|k| k.proximity.is_some()),
            any(|k| k.ground_plane.is_some()),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    pub fn duration_s(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.t)
    }

    /// Whether the top ground plane is switched on anywhere in the timeline.
    pub fn uses_ground_plane(&self) -> bool {
        self.keyframes.iter().any(|k| k.ground_plane == Some(true))
    }

    pub fn stimulus_at(&self, t: f64) -> Stimulus {
        let kf = &self.keyframes;
        let interp = self.interpolation;
        Stimulus {
            normal: track(
                kf,
                |k| k.normal,
                t,
                interp,
                |a, b, u| a.with_value(lerp(a.value(), b.value(), u)),
            ),
            shear_x: track(
                kf,
                |k| k.shear_x,
                t,
                interp,
                |a, b, u| a.with_value(lerp(a.value(), b.value(), u)),
            ),
            shear_y: track(
                kf,
                |k| k.shear_y,
                t,
                interp,
                |a, b, u| a.with_value(lerp(a.value(), b.value(), u)),
            ),
            proximity: track(
                kf,
                |k| k.proximity,
                t,
                interp,
                |a, b, u| ProximityInput {
                    distance_mm: lerp(a.distance_mm, b.distance_mm, u),
                    grounded: a.grounded,
                },
            )
            .map(|p| ProximityStimulus {
                distance_mm: p.distance_mm,
                grounded: p.grounded,
            }),
            ground_plane: track(kf, |k| k.ground_plane, t, Interpolation::Step, |a, _, _| a).unwrap_or(false),
        }
    }

    /// Maps the stimulus at `t` onto the taxel.
    pub fn world_at(&self, t: f64, cfg: &ResolvedConfig) -> Result<WorldSample, HarnessError> {
        let s = self.stimulus_at(t);
        let model = &cfg.model;
        let geom = &model.geometry;
        let eta_mm = match s.normal {
            None => 0.0,
            Some(NormalInput::EtaMm(v)) => v,
            Some(n) => {
                let pressure = match n {
                    NormalInput::ForceN(f) => f / cfg.contact_area_mm2 * 1000.0,
                    NormalInput::PressureKpa(p) => p,
                    NormalInput::EtaMm(_) => unreachable!(),
                };
                let forces = AppliedForces {
                    normal_n: pressure * cfg.contact_area_mm2 / 1000.0,
                    shear_x_n: 0.0,
                    shear_y_n: 0.0,
                    contact_area_mm2: cfg.contact_area_mm2,
                };
                crate::physics::displacement_from_forces(&model.material, geom, &forces)?.eta_mm
            }
        };
        let shear = |input: Option<ShearInput>| -> Result<f64, HarnessError> {
            Ok(match input {
                None => 0.0,
                Some(ShearInput::LambdaMm(v)) => v,
                Some(ShearInput::ForceN(f)) => model
                    .material
                    .shear
                    .displacement_from_force(f)
                    .map_err(|e| crate::physics::PhysicsError::OutOfEnvelope(e.to_string()))?,
            })
        };
        let deformation = DeformationState::new(eta_mm, shear(s.shear_x)?, shear(s.shear_y)?);
        deformation.validate(geom)?;
        if let Some(p) = &s.proximity {
            crate::physics::proximity_factor(p, &model.proximity)?;
        }
        Ok(WorldSample {
            deformation,
            proximity: s.proximity,
        })
    }

    /// Structural checks plus the physics preconditions of every keyframe.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.trim().is_empty() {
            return Err(HarnessError::Schema {
                pointer: "/name".into(),
                msg: "name must not be empty".into(),
            });
        }
        if self.keyframes.is_empty() {
            return Err(HarnessError::Schema {
                pointer: "/keyframes".into(),
                msg: "timeline needs at least one keyframe".into(),
            });
        }
        for (i, k) in self.keyframes.iter().enumerate() {
            if !(k.t.is_finite() && k.t >= 0.0) {
                return Err(HarnessError::Schema {
                    pointer: format!("/keyframes/{i}/t"),
                    msg: format!("time must be finite and >= 0, got {}", k.t),
                });
            }
            if i > 0 && k.t <= self.keyframes[i - 1].t {
                return Err(HarnessError::Schema {
                    pointer: format!("/keyframes/{i}/t"),
                    msg: "keyframe times must be strictly increasing".into(),
                });
            }
        }
        self.check_track_kinds(|k| k.normal, "normal", NormalInput::same_kind)?;
        self.check_track_kinds(|k| k.shear_x, "shear_x", ShearInput::same_kind)?;
        self.check_track_kinds(|k| k.shear_y, "shear_y", ShearInput::same_kind)?;

        let cfg = self.config.resolve()?;
        for (i, k) in self.keyframes.iter().enumerate() {
            self.world_at(k.t, &cfg).map_err(|e| HarnessError::Precondition {
                keyframe: i,
                t: k.t,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    fn check_track_kinds<T: Copy>(
        &self,
        get: impl Fn(&Keyframe) -> Option<T>,
        name: &str,
        same: fn(T, T) -> bool,
    ) -> Result<(), HarnessError> {
        let mut first: Option<T> = None;
        for (i, k) in self.keyframes.iter().enumerate() {
            if let Some(v) = get(k) {
                match first {
                    None => first = Some(v),
                    Some(f) if !same(f, v) => {
                        return Err(HarnessError::Schema {
                            pointer: format!("/keyframes/{i}/{name}"),
                            msg: format!("{name} track mixes input kinds"),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// serde_path_to_error renders `keyframes[1].normal`; convert to `/keyframes/1/normal`.
fn json_pointer(path: &str) -> String {
    if path == "." {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let mut rest = seg;
        if let Some(idx) = rest.find('[') {
            let (name, tail) = rest.split_at(idx);
            if !name.is_empty() {
                out.push('/');
                out.push_str(name);
            }
            rest = tail;
            while let Some(end) = rest.find(']') {
                out.push('/');
                out.push_str(&rest[1..end]);
                rest = &rest[end + 1..];
            }
        } else if !rest.is_empty() {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}

const BUILTINS: &[(&str, &str)] = &[
    ("idle", include_str!("../../scenarios/idle.json")),
    ("approach_touch", include_str!("../../scenarios/approach_touch.json")),
    ("light_touch", include_str!("../../scenarios/light_touch.json")),
    ("press_5kPa", include_str!("../../scenarios/press_5kPa.json")),
    ("shear_px", include_str!("../../scenarios/shear_px.json")),
    ("shear_nx", include_str!("../../scenarios/shear_nx.json")),
    ("shear_py", include_str!("../../scenarios/shear_py.json")),
    ("shear_ny", include_str!("../../scenarios/shear_ny.json")),
    ("strawberry", include_str!("../../scenarios/strawberry.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<Scenario, HarnessError> {
    let (_, text) = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::UnknownScenario(name.to_string()))?;
    Scenario::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointer_rendering() {
        assert_eq!(json_pointer("keyframes[1].normal"), "/keyframes/1/normal");
        assert_eq!(json_pointer("config.noise.sigma_pf"), "/config/noise/sigma_pf");
        assert_eq!(json_pointer("."), "");
    }

    #[test]
    fn tracks_hold_and_interpolate() {
        let mut s = Scenario {
            name: "t".into(),
            interpolation: Interpolation::Linear,
            config: ScenarioConfig::default(),
            keyframes: vec![Keyframe::at(0.0), Keyframe::at(1.0), Keyframe::at(2.0)],
        };
        s.keyframes[1].normal = Some(NormalInput::PressureKpa(0.0));
        s.keyframes[2].normal = Some(NormalInput::PressureKpa(4.0));
        assert_eq!(s.stimulus_at(0.5).normal, None);
        assert_eq!(s.stimulus_at(1.5).normal, Some(NormalInput::PressureKpa(2.0)));
        assert_eq!(s.stimulus_at(9.0).normal, Some(NormalInput::PressureKpa(4.0)));
        s.interpolation = Interpolation::Step;
        assert_eq!(s.stimulus_at(1.5).normal, Some(NormalInput::PressureKpa(0.0)));
    }

    #[test]
    fn every_builtin_loads() {
        for name in builtin_names() {
            let s = builtin(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(matches!(builtin("nope"), Err(HarnessError::UnknownScenario(_))));
    }
}
