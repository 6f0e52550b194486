//! Acquisition chain: multiplexed capacitance-to-digital conversion,
//! quantization, the ground-plane/self-capacitance switch and the text frame
//! protocol.
//!
//! Protocol lines are `t,tag,code,value`: time in seconds and value in pF,
//! both with exactly six decimals, e.g. `1.000000,C3,12222,12.222000`. Lines
//! starting with `#` are comments, except [`ERROR_MARKER`] which marks a
//! stream that was cut short by an error.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{
    CapacitanceFrame, Channel, DeformationState, NoiseStream, PhysicsError, ProximityStimulus, TaxelModel,
};

/// First token of the line written when a stream ends because of an error.
pub const ERROR_MARKER: &str = "#ERROR";

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("invalid converter configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("negative capacitance {0} pF cannot be converted")]
    Negative(f64),
    #[error("{value_pf} pF saturates the converter (full scale {full_scale_pf} pF)")]
    Saturated { value_pf: f64, full_scale_pf: f64 },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, field {field}: {msg}")]
pub struct ProtocolError {
    pub line: usize,
    pub field: &'static str,
    pub msg: String,
}

/// Converter settings. The defaults are configuration, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdcConfig {
    /// Quantization step (fF).
    pub lsb_ff: f64,
    /// Time per channel conversion (s).
    pub sample_period_s: f64,
    pub full_scale_pf: f64,
}

impl Default for CdcConfig {
    fn default() -> Self {
        Self {
            lsb_ff: 1.0,
            sample_period_s: 0.011,
            full_scale_pf: 100.0,
        }
    }
}

impl CdcConfig {
    pub fn validate(&self) -> Result<(), ReadoutError> {
        let ok = self.lsb_ff.is_finite()
            && self.lsb_ff > 0.0
            && self.sample_period_s.is_finite()
            && self.sample_period_s > 0.0
            && self.full_scale_pf.is_finite()
            && self.full_scale_pf * 1000.0 / self.lsb_ff <= u32::MAX as f64;
        if ok && self.full_scale_pf > 0.0 {
            Ok(())
        } else {
            Err(ReadoutError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Largest code the converter emits.
    pub fn max_code(&self) -> u32 {
        (self.full_scale_pf * 1000.0 / self.lsb_ff).round() as u32
    }
}

/// `round(value / lsb)`. Fails on negative input or at/above full scale.
pub fn quantize(value_pf: f64, cdc: &CdcConfig) -> Result<u32, ReadoutError> {
    if !(value_pf >= 0.0) {
        return Err(ReadoutError::Negative(value_pf));
    }
    if value_pf >= cdc.full_scale_pf {
        return Err(ReadoutError::Saturated {
            value_pf,
            full_scale_pf: cdc.full_scale_pf,
        });
    }
    Ok((value_pf * 1000.0 / cdc.lsb_ff).round() as u32)
}

pub fn dequantize(code: u32, cdc: &CdcConfig) -> f64 {
    code as f64 * cdc.lsb_ff / 1000.0
}

/// Channel order within one conversion cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuxSchedule {
    pub channels: Vec<Channel>,
    /// The top plane is switched to the self-capacitance reader on every
    /// `self_every`-th cycle; SELF entries are skipped on the others.
    pub self_every: u32,
    /// Top layer driven as a ground plane while the mutual channels convert.
    pub ground_plane: bool,
    /// Fraction of the proximity effect that leaks through the ground plane.
    pub shield_leakage: f64,
}

impl MuxSchedule {
    pub fn mutual_only() -> Self {
        Self {
            channels: Channel::MUTUAL.to_vec(),
            self_every: 1,
            ground_plane: false,
            shield_leakage: 0.0,
        }
    }

    /// Ground plane on, with a self-capacitance conversion every `self_every` cycles.
    pub fn with_self_cap(self_every: u32) -> Self {
        let mut channels = Channel::MUTUAL.to_vec();
        channels.push(Channel::SelfCap);
        Self {
            channels,
            self_every,
            ground_plane: true,
            shield_leakage: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ReadoutError> {
        for ch in Channel::MUTUAL {
            if !self.channels.contains(&ch) {
                return Err(ReadoutError::InvalidSchedule(format!("{ch} missing from the cycle")));
            }
        }
        if self.channels.contains(&Channel::SelfCap) && !self.ground_plane {
            return Err(ReadoutError::InvalidSchedule(
                "SELF requires the ground-plane configuration".into(),
            ));
        }
        if self.self_every == 0 {
            return Err(ReadoutError::InvalidSchedule("self_every must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.shield_leakage) {
            return Err(ReadoutError::InvalidSchedule(format!(
                "shield leakage must lie in [0, 1], got {}",
                self.shield_leakage
            )));
        }
        Ok(())
    }

    /// Channels converted in cycle number `cycle`.
    pub fn channels_for_cycle(&self, cycle: u64) -> Vec<Channel> {
        let with_self = cycle.is_multiple_of(u64::from(self.self_every));
        self.channels
            .iter()
            .copied()
            .filter(|c| c.is_mutual() || with_self)
            .collect()
    }

    /// Proximity coupling seen by the mutual channels.
    pub fn proximity_coupling(&self) -> f64 {
        if self.ground_plane {
            self.shield_leakage
        } else {
            1.0
        }
    }

    /// Duration of a full cycle (s).
    pub fn cycle_duration_s(&self, cdc: &CdcConfig) -> f64 {
        self.channels.len() as f64 * cdc.sample_period_s
    }
}

/// One converted sample. Time and value are held on the protocol's
/// fixed-point grid (µs and 1e-6 pF) so text round trips are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t_us: u64,
    pub channel: Channel,
    pub code: u32,
    /// Engineering value in units of 1e-6 pF.
    pub value_upf: u64,
}

const MICRO: f64 = 1e6;

impl FrameRecord {
    pub fn new(t_s: f64, channel: Channel, code: u32, value_pf: f64) -> Self {
        Self {
            t_us: (t_s.max(0.0) * MICRO).round() as u64,
            channel,
            code,
            value_upf: (value_pf.max(0.0) * MICRO).round() as u64,
        }
    }

    pub fn t_s(&self) -> f64 {
        self.t_us as f64 / MICRO
    }

    pub fn value_pf(&self) -> f64 {
        self.value_upf as f64 / MICRO
    }

    pub fn serialize(&self) -> String {
        format!(
            "{},{},{},{}",
            fixed6(self.t_us),
            self.channel,
            self.code,
            fixed6(self.value_upf)
        )
    }

    /// Parses one protocol line; `line` is only used in error messages.
    pub fn parse(text: &str, line: usize) -> Result<Self, ProtocolError> {
        let err = |field: &'static str, msg: String| ProtocolError { line, field, msg };
        let fields: Vec<&str> = text.trim_end_matches(['\r', '\n']).split(',').collect();
        if fields.len() != 4 {
            return Err(err("record", format!("expected 4 fields, found {}", fields.len())));
        }
        let t_us = parse_fixed6(fields[0]).map_err(|m| err("t", m))?;
        let channel = fields[1].parse::<Channel>().map_err(|e| err("tag", e.to_string()))?;
        let code = fields[2]
            .parse::<u32>()
            .map_err(|_| err("code", format!("invalid code {:?}", fields[2])))?;
        let value_upf = parse_fixed6(fields[3]).map_err(|m| err("value", m))?;
        Ok(Self {
            t_us,
            channel,
            code,
            value_upf,
        })
    }
}

fn fixed6(v: u64) -> String {
    format!("{}.{:06}", v / 1_000_000, v % 1_000_000)
}

fn parse_fixed6(s: &str) -> Result<u64, String> {
    let bad = || format!("invalid decimal {s:?}");
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    if frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = int.parse().map_err(|_| bad())?;
    let mut frac_val: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| bad())?
    };
    for _ in frac.len()..6 {
        frac_val *= 10;
    }
    int.checked_mul(1_000_000)
        .and_then(|v| v.checked_add(frac_val))
        .ok_or_else(bad)
}

/// Reads protocol records, skipping blank and comment lines.
pub fn read_records(reader: impl BufRead) -> Result<Vec<FrameRecord>, ReadoutError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with(ERROR_MARKER) {
            return Err(ProtocolError {
                line: line_no,
                field: "record",
                msg: format!("stream ends with an error marker: {trimmed}"),
            }
            .into());
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(FrameRecord::parse(trimmed, line_no)?);
    }
    Ok(out)
}

pub fn write_records(mut writer: impl Write, records: &[FrameRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(writer, "{}", r.serialize())?;
    }
    Ok(())
}

/// What the taxel is subjected to at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSample {
    pub deformation: DeformationState,
    pub proximity: Option<ProximityStimulus>,
}

impl WorldSample {
    pub const REST: Self = Self {
        deformation: DeformationState::REST,
        proximity: None,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutput {
    pub records: Vec<FrameRecord>,
    /// Mutual frame assembled from the cycle, stamped with the cycle start.
    pub frame: CapacitanceFrame,
    /// Conversion time of each channel in this cycle.
    pub sample_times: Vec<(Channel, f64)>,
    pub self_frame: Option<CapacitanceFrame>,
    pub saturated: Vec<Channel>,
}

/// Runs one multiplexer cycle starting at `t0_s`. Channel `k` of the cycle is
/// converted at `t0 + k·sample_period` against `world` evaluated at that
/// instant, so a moving stimulus is seen at different states by different
/// channels. Readings at or above full scale are clipped to the top code and
/// reported in `saturated`.
pub fn run_cycle<W>(
    schedule: &MuxSchedule,
    cdc: &CdcConfig,
    model: &TaxelModel,
    cycle: u64,
    t0_s: f64,
    noise: &mut NoiseStream,
    mut world: W,
) -> Result<CycleOutput, ReadoutError>
where
    W: FnMut(f64) -> Result<WorldSample, PhysicsError>,
{
    schedule.validate()?;
    cdc.validate()?;
    let coupling = schedule.proximity_coupling();
    let channels = schedule.channels_for_cycle(cycle);
    let mut records = Vec::with_capacity(channels.len());
    let mut sample_times = Vec::with_capacity(channels.len());
    let mut mutual = [0.0; 4];
    let mut self_value = None;
    let mut saturated = Vec::new();
    for (k, ch) in channels.into_iter().enumerate() {
        let t = t0_s + k as f64 * cdc.sample_period_s;
        let w = world(t)?;
        let raw = model.measure_channel(ch, &w.deformation, w.proximity.as_ref(), coupling, noise)?;
        let code = match quantize(raw, cdc) {
            Ok(code) => code,
            Err(ReadoutError::Saturated { .. }) => {
                saturated.push(ch);
                cdc.max_code()
            }
            Err(e) => return Err(e),
        };
        let value = dequantize(code, cdc);
        records.push(FrameRecord::new(t, ch, code, value));
        sample_times.push((ch, t));
        match ch.mutual_index() {
            Some(i) => mutual[i] = value,
            None => self_value = Some(value),
        }
    }
    Ok(CycleOutput {
        records,
        frame: CapacitanceFrame::mutual(t0_s, mutual),
        sample_times,
        self_frame: self_value.map(|v| CapacitanceFrame::self_cap(t0_s, v)),
        saturated,
    })
}

/// A cycle rebuilt from protocol records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledCycle {
    pub frame: CapacitanceFrame,
    pub self_pf: Option<f64>,
}

/// Groups a record stream into cycles. A cycle closes when a mutual channel
/// repeats; every cycle must contain all four mutual channels.
pub fn assemble_cycles(records: &[FrameRecord]) -> Result<Vec<AssembledCycle>, ReadoutError> {
    let mut out = Vec::new();
    let mut current: [Option<f64>; 4] = [None; 4];
    let mut self_pf = None;
    let mut t0 = None;
    let mut flush = |current: &mut [Option<f64>; 4], self_pf: &mut Option<f64>, t0: &mut Option<f64>, idx: usize| {
        if t0.is_none() {
            return Ok(());
        }
        let mut c = [0.0; 4];
        for (i, v) in current.iter().enumerate() {
            c[i] = v.ok_or_else(|| ProtocolError {
                line: idx,
                field: "tag",
                msg: format!("cycle ending before record {idx} lacks {}", Channel::MUTUAL[i]),
            })?;
        }
        out.push(AssembledCycle {
            frame: CapacitanceFrame::mutual(t0.unwrap(), c),
            self_pf: *self_pf,
        });
        *current = [None; 4];
        *self_pf = None;
        *t0 = None;
        Ok::<(), ProtocolError>(())
    };
    for (idx, r) in records.iter().enumerate() {
        let repeats = match r.channel.mutual_index() {
            Some(i) => current[i].is_some(),
            None => self_pf.is_some(),
        };
        if repeats {
            flush(&mut current, &mut self_pf, &mut t0, idx + 1)?;
        }
        t0.get_or_insert(r.t_s());
        match r.channel.mutual_index() {
            Some(i) => current[i] = Some(r.value_pf()),
            None => self_pf = Some(r.value_pf()),
        }
    }
    flush(&mut current, &mut self_pf, &mut t0, records.len() + 1)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        let cdc = CdcConfig::default();
        assert_eq!(quantize(10.0, &cdc).unwrap(), 10000);
        assert_eq!(quantize(0.0, &cdc).unwrap(), 0);
        assert!(matches!(quantize(100.0, &cdc), Err(ReadoutError::Saturated { .. })));
        assert!(matches!(quantize(-0.1, &cdc), Err(ReadoutError::Negative(_))));
        assert_eq!(dequantize(12222, &cdc), 12.222);
    }

    #[test]
    fn record_line_example() {
        let r = FrameRecord::new(1.0, Channel::C3, 12222, 12.222);
        let line = r.serialize();
        assert_eq!(line, "1.000000,C3,12222,12.222000");
        assert_eq!(FrameRecord::parse(&line, 1).unwrap(), r);
    }

    #[test]
    fn malformed_lines_name_the_field() {
        let e = FrameRecord::parse("1.000000,C5,12222,12.222000", 7).unwrap_err();
        assert_eq!((e.line, e.field), (7, "tag"));
        assert_eq!(FrameRecord::parse("1.0,C1,x,1.0", 1).unwrap_err().field, "code");
        assert_eq!(FrameRecord::parse("-1.0,C1,1,1.0", 1).unwrap_err().field, "t");
        assert_eq!(FrameRecord::parse("1.0,C1,1,1.0000001", 1).unwrap_err().field, "value");
        assert_eq!(FrameRecord::parse("1.0,C1,1", 1).unwrap_err().field, "record");
        // short fractions are accepted and normalized
        assert_eq!(FrameRecord::parse("2.5,SELF,5000,5", 1).unwrap().t_us, 2_500_000);
    }

    #[test]
    fn schedule_rules() {
        assert!(MuxSchedule::mutual_only().validate().is_ok());
        assert!(MuxSchedule::with_self_cap(2).validate().is_ok());
        let mut bad = MuxSchedule::mutual_only();
        bad.channels.push(Channel::SelfCap);
        assert!(bad.validate().is_err());
        let mut missing = MuxSchedule::mutual_only();
        missing.channels.pop();
        assert!(missing.validate().is_err());
        let s = MuxSchedule::with_self_cap(3);
        assert_eq!(s.channels_for_cycle(0).len(), 5);
        assert_eq!(s.channels_for_cycle(1).len(), 4);
        assert_eq!(s.channels_for_cycle(3).len(), 5);
    }

    fn static_world(prox: Option<ProximityStimulus>) -> impl FnMut(f64) -> Result<WorldSample, PhysicsError> {
        move |_| {
            Ok(WorldSample {
                deformation: DeformationState::REST,
                proximity: prox,
            })
        }
    }

    #[test]
    fn static_cycle_has_increasing_timestamps() {
        let model = TaxelModel::default();
        let out = run_cycle(
            &MuxSchedule::mutual_only(),
            &CdcConfig::default(),
            &model,
            0,
            0.5,
            &mut NoiseStream::silent(),
            static_world(None),
        )
        .unwrap();
        assert_eq!(out.records.len(), 4);
        assert!(out.records.windows(2).all(|w| w[0].t_us < w[1].t_us));
        assert_eq!(out.frame.mutual_values().unwrap(), &[10.0; 4]);
        assert!(out.self_frame.is_none());
    }

    #[test]
    fn ground_plane_blocks_mutual_proximity() {
        let model = TaxelModel::default();
        let finger = Some(ProximityStimulus::finger(0.0));
        let run = |schedule: &MuxSchedule, prox| {
            run_cycle(
                schedule,
                &CdcConfig::default(),
                &model,
                0,
                0.0,
                &mut NoiseStream::silent(),
                static_world(prox),
            )
            .unwrap()
        };
        let shielded = run(&MuxSchedule::with_self_cap(1), finger);
        assert_eq!(shielded.frame.mutual_values().unwrap(), &[10.0; 4]);
        let self_pf = shielded.self_frame.unwrap().self_value().unwrap();
        assert!(self_pf > model.self_cap.baseline_pf);
        let idle = run(&MuxSchedule::with_self_cap(1), None);
        assert_eq!(
            idle.self_frame.unwrap().self_value().unwrap(),
            model.self_cap.baseline_pf
        );

        let open = run(&MuxSchedule::mutual_only(), finger);
        let mean: f64 = open.frame.mutual_values().unwrap().iter().sum::<f64>() / 4.0;
        assert!(((10.0 - mean) / 10.0 - 0.147).abs() < 1e-3);
    }

    #[test]
    fn saturation_is_flagged() {
        let mut model = TaxelModel::default();
        model.parasitics.offsets_pf = [95.0, 0.0, 0.0, 0.0];
        let out = run_cycle(
            &MuxSchedule::mutual_only(),
            &CdcConfig::default(),
            &model,
            0,
            0.0,
            &mut NoiseStream::silent(),
            static_world(None),
        )
        .unwrap();
        assert_eq!(out.saturated, vec![Channel::C1]);
        assert_eq!(out.records[0].code, CdcConfig::default().max_code());
    }

    #[test]
    fn stream_round_trip_and_assembly() {
        let model = TaxelModel::default();
        let schedule = MuxSchedule::with_self_cap(2);
        let cdc = CdcConfig::default();
        let mut records = Vec::new();
        for k in 0..4u64 {
            let out = run_cycle(
                &schedule,
                &cdc,
                &model,
                k,
                k as f64 * 0.1,
                &mut NoiseStream::silent(),
                static_world(None),
            )
            .unwrap();
            records.extend(out.records);
        }
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        let cycles = assemble_cycles(&back).unwrap();
        assert_eq!(cycles.len(), 4);
        assert!(cycles[0].self_pf.is_some());
        assert!(cycles[1].self_pf.is_none());
        assert!((cycles[3].frame.t_s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn error_marker_and_incomplete_cycles_are_rejected() {
        let text = "0.000000,C1,10000,10.000000\n#ERROR something broke\n";
        assert!(read_records(text.as_bytes()).is_err());
        let partial = [FrameRecord::new(0.0, Channel::C1, 10000, 10.0)];
        assert!(assemble_cycles(&partial).is_err());
    }
}
