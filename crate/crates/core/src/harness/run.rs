use serde::{Deserialize, Serialize};

use super::scenario::{ResolvedConfig, Scenario};
use super::HarnessError;
use crate::decoder::{DecodedState, Decoder, SelfCapSample, StimulusClass};
use crate::physics::{CapacitanceFrame, Channel, NoiseModel, PhysicsError};
use crate::readout::{run_cycle, CycleOutput, MuxSchedule, WorldSample};

/// Default time between decoded steps (s).
pub const DEFAULT_STEP_DT_S: f64 = 0.1;
/// Rest cycles averaged into the baseline before the timeline starts.
pub const BASELINE_CYCLES: u64 = 8;

/// Run-time overrides; set fields win over the scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub step_dt_s: Option<f64>,
    pub seed: Option<u64>,
    pub noise_sigma_pf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    /// Conversion time of each channel in the cycle.
    pub sample_times: Vec<(Channel, f64)>,
    pub frame: CapacitanceFrame,
    /// Latest self-capacitance reading while the ground plane is active.
    pub self_cap_pf: Option<f64>,
    pub decoded: DecodedState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub max_pressure_kpa: f64,
    pub max_shear_mm: f64,
    pub max_shear_force_n: f64,
    /// Class sequence with consecutive repeats collapsed.
    pub classes: Vec<StimulusClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub step_dt_s: f64,
    pub baseline_pf: [f64; 4],
    pub self_baseline_pf: Option<f64>,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn final_class(&self) -> Option<StimulusClass> {
        self.steps.last().map(|s| s.decoded.stimulus)
    }
}

fn schedule_for(ground_plane: bool, cfg: &ResolvedConfig) -> MuxSchedule {
    if ground_plane {
        let mut s = MuxSchedule::with_self_cap(cfg.readout.self_every);
        s.shield_leakage = cfg.readout.shield_leakage;
        s
    } else {
        MuxSchedule::mutual_only()
    }
}

/// Applies run options over the scenario's own configuration.
pub fn resolve_config(scenario: &Scenario, options: &RunOptions) -> Result<ResolvedConfig, HarnessError> {
    let mut cfg = scenario.config.resolve()?;
    cfg.noise = NoiseModel::new(
        options.noise_sigma_pf.unwrap_or(cfg.noise.sigma_pf),
        options.seed.unwrap_or(cfg.noise.seed),
    );
    cfg.noise.stream()?;
    Ok(cfg)
}

/// Runs a scenario, calling `on_cycle` after every converted cycle (baseline
/// cycles included) so callers can stream the protocol records.
pub fn run_streaming(
    scenario: &Scenario,
    options: &RunOptions,
    on_cycle: &mut dyn FnMut(&CycleOutput) -> Result<(), HarnessError>,
) -> Result<RunReport, HarnessError> {
    scenario.validate()?;
    let cfg = resolve_config(scenario, options)?;
    let cdc = cfg.readout.cdc;
    let step_dt = options.step_dt_s.unwrap_or(DEFAULT_STEP_DT_S);
    let longest = schedule_for(true, &cfg).cycle_duration_s(&cdc);
    if !(step_dt.is_finite() && step_dt >= longest) {
        return Err(HarnessError::Invalid(format!(
            "step dt {step_dt} s is shorter than one conversion cycle ({longest} s)"
        )));
    }
    let mut noise = cfg.noise.stream()?;
    let model = &cfg.model;
    let mut warnings = Vec::new();

    // rest baseline; the self channel is only read if the timeline uses it
    let rest_schedule = schedule_for(scenario.uses_ground_plane(), &cfg);
    let mut sum = [0.0; 4];
    let mut self_sum = 0.0;
    let mut self_n = 0u32;
    for k in 0..BASELINE_CYCLES {
        let t0 = -((BASELINE_CYCLES - k) as f64) * step_dt;
        let out = run_cycle(&rest_schedule, &cdc, model, k, t0, &mut noise, |_| {
            Ok(WorldSample::REST)
        })?;
        on_cycle(&out)?;
        for (s, v) in sum.iter_mut().zip(out.frame.mutual_values().unwrap()) {
            *s += v;
        }
        if let Some(v) = out.self_frame.and_then(|f| f.self_value()) {
            self_sum += v;
            self_n += 1;
        }
    }
    let baseline_pf = sum.map(|s| s / BASELINE_CYCLES as f64);
    let self_baseline = (self_n > 0).then(|| self_sum / f64::from(self_n));
    let baseline = CapacitanceFrame::mutual(0.0, baseline_pf);

    let decoder = Decoder {
        geometry: model.geometry,
        material: model.material,
        parasitics: model.parasitics,
        thresholds: cfg.thresholds,
    };

    let n_steps = (scenario.duration_s() / step_dt + 1e-9).floor() as u64;
    let mut steps = Vec::with_capacity(n_steps as usize + 1);
    let mut latest_self: Option<f64> = None;
    for k in 0..=n_steps {
        let t = k as f64 * step_dt;
        let ground_plane = scenario.stimulus_at(t).ground_plane;
        let schedule = schedule_for(ground_plane, &cfg);
        let world = |tt: f64| -> Result<WorldSample, PhysicsError> {
            scenario
                .world_at(tt, &cfg)
                .map_err(|e| PhysicsError::OutOfEnvelope(e.to_string()))
        };
        let out = run_cycle(&schedule, &cdc, model, k, t, &mut noise, world)?;
        on_cycle(&out)?;
        for ch in &out.saturated {
            warnings.push(format!("t = {t:.6} s: {ch} saturated the converter"));
        }
        if !ground_plane {
            latest_self = None;
        } else if let Some(v) = out.self_frame.and_then(|f| f.self_value()) {
            latest_self = Some(v);
        }
        let self_sample = match (latest_self, self_baseline) {
            (Some(current_pf), Some(baseline_pf)) => Some(SelfCapSample {
                baseline_pf,
                current_pf,
            }),
            _ => None,
        };
        let decoded = decoder.decode(&baseline, &out.frame, self_sample.as_ref())?;
        steps.push(StepRecord {
            t,
            sample_times: out.sample_times,
            frame: out.frame,
            self_cap_pf: latest_self,
            decoded,
        });
    }

    let summary = RunSummary::from_steps(&steps);
    Ok(RunReport {
        scenario: scenario.name.clone(),
        step_dt_s: step_dt,
        baseline_pf,
        self_baseline_pf: self_baseline,
        steps,
        summary,
        warnings,
    })
}

pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunReport, HarnessError> {
    run_streaming(scenario, options, &mut |_| Ok(()))
}

/// Runs independent scenarios on worker threads; results keep input order.
pub fn run_many(scenarios: &[Scenario], options: &RunOptions) -> Vec<Result<RunReport, HarnessError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run(s, options))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(HarnessError::Invalid("worker panicked".into())))
            })
            .collect()
    })
}

impl RunSummary {
    pub fn from_steps(steps: &[StepRecord]) -> Self {
        let mut classes: Vec<StimulusClass> = Vec::new();
        for s in steps {
            if classes.last() != Some(&s.decoded.stimulus) {
                classes.push(s.decoded.stimulus);
            }
        }
        let max = |f: fn(&DecodedState) -> f64| steps.iter().map(|s| f(&s.decoded)).fold(0.0, f64::max);
        RunSummary {
            max_pressure_kpa: max(|d| d.pressure_kpa),
            max_shear_mm: max(|d| d.shear_magnitude_mm),
            max_shear_force_n: max(|d| d.shear_force_n),
            classes,
        }
    }
}
