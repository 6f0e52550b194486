use serde::{Deserialize, Serialize};

use super::run::{run, RunOptions, RunReport};
use super::scenario::{Interpolation, Keyframe, NormalInput, ProximityInput, Scenario, ScenarioConfig, ShearInput};
use super::HarnessError;
use crate::decoder::StimulusClass;
use crate::physics::{proximity_factor, ProximityParams, ProximityStimulus, TaxelGeometry};

pub const GRAVITY_M_S2: f64 = 9.80665;

/// Cup-lifting demo: a two-finger grip holds a cup while water is poured in.
/// The weight is shared 50/50 by the two opposing taxels and acts along −y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    pub mass_rate_g_per_s: f64,
    pub final_mass_g: f64,
    pub friction_coefficient: f64,
    /// Normal grip force per taxel (N).
    pub grip_normal_n: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            mass_rate_g_per_s: 40.0,
            final_mass_g: 80.0,
            friction_coefficient: 0.5,
            grip_normal_n: 2.0,
        }
    }
}

impl GripperParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = [
            self.mass_rate_g_per_s,
            self.final_mass_g,
            self.friction_coefficient,
            self.grip_normal_n,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(HarnessError::Invalid(format!(
                "gripper parameters must be positive: {self:?}"
            )))
        }
    }

    /// Tangential load carried by one taxel at `mass_g` (N).
    pub fn shear_per_taxel_n(&self, mass_g: f64) -> f64 {
        0.5 * mass_g / 1000.0 * GRAVITY_M_S2
    }

    pub fn scenario(&self) -> Scenario {
        let t_end = self.final_mass_g / self.mass_rate_g_per_s;
        let frame = |t: f64, mass_g: f64| Keyframe {
            normal: Some(NormalInput::ForceN(self.grip_normal_n)),
            shear_y: Some(ShearInput::ForceN(-self.shear_per_taxel_n(mass_g))),
            ..Keyframe::at(t)
        };
        Scenario {
            name: "gripper".into(),
            interpolation: Interpolation::Linear,
            config: ScenarioConfig::default(),
            keyframes: vec![frame(0.0, 0.0), frame(t_end, self.final_mass_g)],
        }
    }
}

pub fn gripper_demo(params: &GripperParams, options: &RunOptions) -> Result<RunReport, HarnessError> {
    params.validate()?;
    let mut report = run(&params.scenario(), options)?;
    let capacity = params.friction_coefficient * params.grip_normal_n;
    let required = params.shear_per_taxel_n(params.final_mass_g);
    if required > capacity {
        let mass_at_slip = capacity / (0.5 * GRAVITY_M_S2) * 1000.0;
        report.warnings.push(format!(
            "slip: tangential load {required:.3} N per contact exceeds friction limit {capacity:.3} N (from about {mass_at_slip:.1} g)"
        ));
    }
    Ok(report)
}

/// One timeline pair of the ambiguity demo under one readout configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRun {
    pub case_a: RunReport,
    pub case_b: RunReport,
    /// Class at the end of each marked segment.
    pub class_a: StimulusClass,
    pub class_b: StimulusClass,
    /// Largest channel difference between the two segment frames (pF).
    pub signature_gap_pf: f64,
}

impl AmbiguityRun {
    pub fn collides(&self) -> bool {
        self.class_a == self.class_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub mutual_only: AmbiguityRun,
    pub augmented: AmbiguityRun,
    /// Self channel reading with the ground plane on and nothing nearby (pF).
    pub idle_self_pf: f64,
    pub self_baseline_pf: f64,
}

impl AmbiguityReport {
    /// Collision without the self channel and Proximity/Pressure with it.
    pub fn resolved(&self) -> bool {
        self.mutual_only.collides()
            && self.augmented.class_a == StimulusClass::Proximity
            && self.augmented.class_b == StimulusClass::Pressure
    }
}

/// Hover distance of case A's marked segment (mm).
pub const HOVER_MM: f64 = 3.0;

/// Builds the two timelines. Case A: a finger approaches to `HOVER_MM` and
/// hovers. Case B: the finger touches, then presses until the compression
/// cancels the proximity drop back to case A's hover level.
pub fn ambiguity_scenarios(ground_plane: bool) -> Result<(Scenario, Scenario), HarnessError> {
    let geometry = TaxelGeometry::default();
    let prox = ProximityParams::average();
    let f_contact = proximity_factor(&ProximityStimulus::finger(0.0), &prox)?;
    let f_hover = proximity_factor(&ProximityStimulus::finger(HOVER_MM), &prox)?;
    // factor · d/(d − η) = f_hover  ⇒  η = d (1 − f_contact / f_hover)
    let eta_press = geometry.d_mm * (1.0 - f_contact / f_hover);
    let finger = |z: f64| {
        Some(ProximityInput {
            distance_mm: z,
            grounded: true,
        })
    };
    let gp = Some(ground_plane);
    let case_a = Scenario {
        name: "ambiguity_case_a".into(),
        interpolation: Interpolation::Linear,
        config: ScenarioConfig::default(),
        keyframes: vec![
            Keyframe {
                proximity: finger(15.0),
                ground_plane: gp,
                ..Keyframe::at(0.0)
            },
            Keyframe {
                proximity: finger(HOVER_MM),
                ..Keyframe::at(1.0)
            },
            Keyframe {
                proximity: finger(HOVER_MM),
                ..Keyframe::at(1.5)
            },
        ],
    };
    let case_b = Scenario {
        name: "ambiguity_case_b".into(),
        interpolation: Interpolation::Linear,
        config: ScenarioConfig::default(),
        keyframes: vec![
            Keyframe {
                proximity: finger(15.0),
                normal: Some(NormalInput::EtaMm(0.0)),
                ground_plane: gp,
                ..Keyframe::at(0.0)
            },
            Keyframe {
                proximity: finger(0.0),
                normal: Some(NormalInput::EtaMm(0.0)),
                ..Keyframe::at(1.0)
            },
            Keyframe {
                normal: Some(NormalInput::EtaMm(eta_press)),
                ..Keyframe::at(1.5)
            },
        ],
    };
    Ok((case_a, case_b))
}

fn run_pair(ground_plane: bool, options: &RunOptions) -> Result<AmbiguityRun, HarnessError> {
    let (a, b) = ambiguity_scenarios(ground_plane)?;
    let case_a = run(&a, options)?;
    let case_b = run(&b, options)?;
    let last = |r: &RunReport| {
        r.steps
            .last()
            .cloned()
            .ok_or_else(|| HarnessError::Invalid("empty run".into()))
    };
    let (sa, sb) = (last(&case_a)?, last(&case_b)?);
    let (fa, fb) = (sa.frame.mutual_values().unwrap(), sb.frame.mutual_values().unwrap());
    let signature_gap_pf = fa.iter().zip(fb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(AmbiguityRun {
        class_a: sa.decoded.stimulus,
        class_b: sb.decoded.stimulus,
        signature_gap_pf,
        case_a,
        case_b,
    })
}

pub fn ambiguity_demo(options: &RunOptions) -> Result<AmbiguityReport, HarnessError> {
    let mutual_only = run_pair(false, options)?;
    let augmented = run_pair(true, options)?;
    // ground plane on with nothing nearby
    let idle = Scenario {
        name: "ambiguity_idle".into(),
        interpolation: Interpolation::Step,
        config: ScenarioConfig::default(),
        keyframes: vec![
            Keyframe {
                ground_plane: Some(true),
                ..Keyframe::at(0.0)
            },
            Keyframe::at(0.5),
        ],
    };
    let idle_report = run(&idle, options)?;
    let idle_self_pf = idle_report
        .steps
        .last()
        .and_then(|s| s.self_cap_pf)
        .ok_or_else(|| HarnessError::Invalid("no self-capacitance reading".into()))?;
    let cfg = ScenarioConfig::default().resolve()?;
    Ok(AmbiguityReport {
        mutual_only,
        augmented,
        idle_self_pf,
        self_baseline_pf: cfg.model.self_cap.baseline_pf,
    })
}
