use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use taxel::calibration::{
    self, calibrate_material, fit_material, fit_proximity, read_params, render_params, sensitivity_curve,
    CalibrationError, SensitivityPreset,
};
use taxel::decoder::{classify, ClassifierThresholds, DecodeError, Decoder, SelfCapSample, StimulusClass};
use taxel::harness::{
    self, ambiguity_demo, builtin, builtin_names, gripper_demo, run_many, run_streaming, GripperParams, HarnessError,
    RunOptions, RunReport, RunSummary, Scenario, StepRecord,
};
use taxel::physics::{CapacitanceFrame, ParasiticModel, TaxelModel};
use taxel::readout::{assemble_cycles, read_records, ReadoutError, ERROR_MARKER};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "taxel",
    version,
    about = "Simulate, decode and calibrate a 4-electrode capacitive taxel"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and stream the raw frame protocol (t,tag,code,value).
    Simulate {
        /// Built-in scenario name or path to a scenario JSON file.
        scenario: String,
        #[command(flatten)]
        run: RunFlags,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a frame-protocol stream; the first cycles are taken as the rest baseline.
    Decode {
        /// Protocol file, or `-` for stdin.
        input: PathBuf,
        /// Parameter file (defaults to the built-in calibration).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Number of leading cycles averaged into the baseline.
        #[arg(long, default_value_t = 8)]
        baseline_cycles: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate a parameter file from presets and optional measured data.
    Calibrate {
        #[arg(long, value_enum, default_value_t = PresetArg::LowPressure)]
        preset: PresetArg,
        #[arg(long, value_enum, default_value_t = ParasiticsArg::None)]
        parasitics: ParasiticsArg,
        /// Stress-strain CSV (strain,stress_kpa[,branch,t_s,record]); overrides the preset's normal law.
        #[arg(long)]
        stress_strain: Option<PathBuf>,
        /// Proximity profile CSV (z_mm,dc_over_c0).
        #[arg(long)]
        proximity: Option<PathBuf>,
        /// Also write the 0-80 kPa sensitivity sweep as CSV.
        #[arg(long)]
        sensitivity_out: Option<PathBuf>,
        /// Parameter file to write (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one frame against a baseline (values in pF, parasitics included).
    Classify {
        #[arg(long, value_parser = parse_four, allow_hyphen_values = true)]
        baseline: [f64; 4],
        #[arg(long, value_parser = parse_four, allow_hyphen_values = true)]
        current: [f64; 4],
        #[arg(long, requires = "self_current")]
        self_baseline: Option<f64>,
        #[arg(long, requires = "self_baseline")]
        self_current: Option<f64>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Dead-band on |ΔC/C0|.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Built-in and file scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Reproduce the demonstrations.
    #[command(subcommand)]
    Demo(DemoCommand),
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// List built-in scenarios.
    List,
    /// Run scenarios (in parallel when several are given) and export the decoded timeline.
    Run {
        /// Built-in names or scenario JSON paths.
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file (single scenario) or directory (several); stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Cup lifted by a two-finger grip while its mass ramps up.
    Gripper {
        #[arg(long, default_value_t = 40.0)]
        rate_g_per_s: f64,
        #[arg(long, default_value_t = 80.0)]
        final_mass_g: f64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 2.0)]
        grip_n: f64,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Proximity vs. light press, with and without the self-capacitance channel.
    Ambiguity {
        #[command(flatten)]
        run: RunFlags,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct RunFlags {
    /// Noise seed (overrides the scenario file).
    #[arg(long)]
    seed: Option<u64>,
    /// Noise standard deviation in pF (overrides the scenario file).
    #[arg(long)]
    sigma: Option<f64>,
    /// Time between decoded steps in seconds.
    #[arg(long)]
    step_dt: Option<f64>,
}

impl From<RunFlags> for RunOptions {
    fn from(f: RunFlags) -> Self {
        RunOptions {
            step_dt_s: f.step_dt,
            seed: f.seed,
            noise_sigma_pf: f.sigma,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy)]
enum PresetArg {
    LowPressure,
    LinearRegion,
}

#[derive(ValueEnum, Clone, Copy)]
enum ParasiticsArg {
    None,
    Unshielded,
    Shielded,
}

fn parse_four(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("invalid number {p:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 comma-separated values, got {}", v.len()))
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ReadoutError> for CliError {
    fn from(e: ReadoutError) -> Self {
        match e {
            ReadoutError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::InvalidThresholds(_) | DecodeError::NotMutual => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, HarnessError> {
    let path = Path::new(arg);
    if path.is_file() {
        Scenario::load(path)
    } else {
        builtin(arg)
    }
}

fn load_model(params: Option<&Path>) -> Result<TaxelModel, CliError> {
    Ok(match params {
        Some(p) => read_params(p)?,
        None => TaxelModel::default(),
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn render(report: &RunReport, format: Format) -> Result<String, HarnessError> {
    Ok(match format {
        Format::Csv => harness::to_csv(report)?,
        Format::Json => harness::to_json(report) + "\n",
    })
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { scenario, run, out } => simulate(&scenario, run.into(), out.as_deref()),
        Command::Decode {
            input,
            params,
            baseline_cycles,
            format,
            out,
        } => decode(&input, params.as_deref(), baseline_cycles, format, out.as_deref()),
        Command::Calibrate {
            preset,
            parasitics,
            stress_strain,
            proximity,
            sensitivity_out,
            out,
        } => calibrate(
            preset,
            parasitics,
            stress_strain.as_deref(),
            proximity.as_deref(),
            sensitivity_out.as_deref(),
            out.as_deref(),
        ),
        Command::Classify {
            baseline,
            current,
            self_baseline,
            self_current,
            params,
            epsilon,
        } => {
            let model = load_model(params.as_deref())?;
            let mut thresholds = ClassifierThresholds::default();
            if let Some(e) = epsilon {
                thresholds.epsilon_rel = e;
            }
            let sub = |v: [f64; 4]| {
                taxel::decoder::subtract_parasitics(&CapacitanceFrame::mutual(0.0, v), &model.parasitics)
                    .map(|f| *f.mutual_values().unwrap())
            };
            let self_cap = self_baseline.zip(self_current).map(|(b, c)| SelfCapSample {
                baseline_pf: b,
                current_pf: c,
            });
            let class = match classify(
                &sub(baseline)?,
                &sub(current)?,
                &model.geometry,
                &thresholds,
                self_cap.as_ref(),
            ) {
                Err(DecodeError::InconclusiveWithinDeadband) => StimulusClass::Idle,
                other => other?,
            };
            println!("{class}");
            Ok(())
        }
        Command::Scenario(ScenarioCommand::List) => {
            for name in builtin_names() {
                let s = builtin(name)?;
                println!(
                    "{name}\t{:.3} s\t{} stimulus channels",
                    s.duration_s(),
                    s.stimulus_channels()
                );
            }
            Ok(())
        }
        Command::Scenario(ScenarioCommand::Run {
            scenarios,
            run,
            format,
            out,
        }) => scenario_run(&scenarios, run.into(), format, out.as_deref()),
        Command::Demo(DemoCommand::Gripper {
            rate_g_per_s,
            final_mass_g,
            mu,
            grip_n,
            run,
            format,
            out,
        }) => {
            let params = GripperParams {
                mass_rate_g_per_s: rate_g_per_s,
                final_mass_g,
                friction_coefficient: mu,
                grip_normal_n: grip_n,
            };
            let report = gripper_demo(&params, &run.into())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_output(out.as_deref(), &render(&report, format)?)
        }
        Command::Demo(DemoCommand::Ambiguity { run, out }) => {
            let report = ambiguity_demo(&run.into())?;
            let m = &report.mutual_only;
            let a = &report.augmented;
            println!(
                "mutual-only: case A -> {}, case B -> {} (signature gap {:.4} pF)",
                m.class_a, m.class_b, m.signature_gap_pf
            );
            println!(
                "ground plane + self-cap: case A -> {}, case B -> {}",
                a.class_a, a.class_b
            );
            println!(
                "idle self channel: {:.3} pF (baseline {:.3} pF)",
                report.idle_self_pf, report.self_baseline_pf
            );
            println!("resolved: {}", report.resolved());
            if let Some(p) = out {
                std::fs::write(
                    p,
                    serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
                )?;
            }
            Ok(())
        }
    }
}

/// Streams protocol records; if the run fails part-way the stream ends with
/// an error marker line so it cannot be mistaken for a complete capture.
fn simulate(name: &str, options: RunOptions, out: Option<&Path>) -> Result<(), CliError> {
    let scenario = load_scenario(name)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    let result = run_streaming(&scenario, &options, &mut |cycle| {
        for r in &cycle.records {
            writeln!(sink, "{}", r.serialize())?;
        }
        Ok(())
    });
    if let Err(e) = &result {
        writeln!(sink, "{ERROR_MARKER} {e}")?;
    }
    sink.flush()?;
    result.map(|_| ()).map_err(CliError::from)
}

fn decode(
    input: &Path,
    params: Option<&Path>,
    baseline_cycles: usize,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(params)?;
    let records = if input == Path::new("-") {
        read_records(io::stdin().lock())?
    } else {
        read_records(BufReader::new(File::open(input)?))?
    };
    let cycles = assemble_cycles(&records)?;
    if baseline_cycles == 0 || cycles.len() < baseline_cycles {
        return Err(CliError::Validation(format!(
            "need at least {} baseline cycles, stream has {}",
            baseline_cycles.max(1),
            cycles.len()
        )));
    }
    let (rest, timeline) = cycles.split_at(baseline_cycles);
    let mut sum = [0.0; 4];
    for c in rest {
        for (s, v) in sum.iter_mut().zip(c.frame.mutual_values().unwrap()) {
            *s += v;
        }
    }
    let baseline_pf = sum.map(|s| s / baseline_cycles as f64);
    let self_rest: Vec<f64> = rest.iter().filter_map(|c| c.self_pf).collect();
    let self_baseline = (!self_rest.is_empty()).then(|| self_rest.iter().sum::<f64>() / self_rest.len() as f64);
    let decoder = Decoder::new(model.geometry, model.material, model.parasitics);
    let baseline = CapacitanceFrame::mutual(0.0, baseline_pf);
    let mut steps = Vec::with_capacity(timeline.len());
    for c in timeline {
        let self_cap = self_baseline.zip(c.self_pf).map(|(b, v)| SelfCapSample {
            baseline_pf: b,
            current_pf: v,
        });
        let decoded = decoder.decode(&baseline, &c.frame, self_cap.as_ref())?;
        steps.push(StepRecord {
            t: c.frame.t_s,
            sample_times: Vec::new(),
            frame: c.frame,
            self_cap_pf: c.self_pf,
            decoded,
        });
    }
    let report = RunReport {
        scenario: input.display().to_string(),
        step_dt_s: 0.0,
        baseline_pf,
        self_baseline_pf: self_baseline,
        summary: RunSummary::from_steps(&steps),
        steps,
        warnings: Vec::new(),
    };
    write_output(out, &render(&report, format)?)
}

fn calibrate(
    preset: PresetArg,
    parasitics: ParasiticsArg,
    stress_strain: Option<&Path>,
    proximity: Option<&Path>,
    sensitivity_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let preset = match preset {
        PresetArg::LowPressure => SensitivityPreset::LowPressure,
        PresetArg::LinearRegion => SensitivityPreset::LinearRegion,
    };
    let mut model = TaxelModel::default();
    let c0 = model.geometry.c0_pf();
    let physics = |e| CliError::Validation(format!("{e}"));
    model.parasitics = match parasitics {
        ParasiticsArg::None => ParasiticModel::none(),
        ParasiticsArg::Unshielded => ParasiticModel::unshielded(c0).map_err(physics)?,
        ParasiticsArg::Shielded => ParasiticModel::shielded(c0).map_err(physics)?,
    };
    model.material = calibrate_material(preset, &model.geometry, &ParasiticModel::none())?;
    if let Some(p) = stress_strain {
        let records = calibration::read_stress_strain_csv(File::open(p)?)?;
        let fit = fit_material(&records)?;
        eprintln!(
            "material fit: E1 = {:.3} kPa, E2 = {:.3} kPa, break = {:.4}, damping = {:.4} kPa*s, rms = {:.4} kPa",
            fit.law.e1_kpa, fit.law.e2_kpa, fit.law.strain_break, fit.damping_kpa_s, fit.rms_residual_kpa
        );
        model.material.normal = fit.law;
        model.material.damping_kpa_s = fit.damping_kpa_s;
    }
    if let Some(p) = proximity {
        let profile = calibration::read_proximity_csv(File::open(p)?)?;
        let fit = fit_proximity(&profile)?;
        for w in &fit.warnings {
            eprintln!("warning: {w}");
        }
        eprintln!(
            "proximity fit: delta = {:.4}, shape = {:.4}, rms = {:.5}",
            fit.params.delta_contact, fit.params.shape, fit.rms_residual
        );
        model.proximity = fit.params;
    }
    model.validate().map_err(physics)?;
    if let Some(p) = sensitivity_out {
        let table = sensitivity_curve(&model)?;
        let mut text = String::from("pressure_kPa,dC1_pF,dC2_pF,dC3_pF,dC4_pF,rel1_pct,rel2_pct,rel3_pct,rel4_pct,rel_mean_pct,slope_mean_pct_per_kPa\n");
        for r in &table.rows {
            let mut fields = vec![r.pressure_kpa.to_string()];
            fields.extend(r.delta_pf.iter().map(f64::to_string));
            fields.extend(r.relative_pct.iter().map(f64::to_string));
            fields.push(r.mean_relative_pct.to_string());
            fields.push(r.mean_slope_pct_per_kpa.to_string());
            text.push_str(&fields.join(","));
            text.push('\n');
        }
        std::fs::write(p, text)?;
    }
    write_output(out, &render_params(&model))
}

fn scenario_run(names: &[String], options: RunOptions, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let scenarios = names.iter().map(|n| load_scenario(n)).collect::<Result<Vec<_>, _>>()?;
    if scenarios.len() > 1 && out.is_some_and(|p| !p.is_dir()) {
        return Err(CliError::Validation(
            "--out must be an existing directory when running several scenarios".into(),
        ));
    }
    if scenarios.len() > 1 && out.is_none() {
        return Err(CliError::Validation(
            "running several scenarios needs --out <dir>".into(),
        ));
    }
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut first_err = None;
    for (s, result) in scenarios.iter().zip(run_many(&scenarios, &options)) {
        match result {
            Ok(report) => {
                for w in &report.warnings {
                    eprintln!("warning: {}: {w}", s.name);
                }
                let text = render(&report, format)?;
                match out {
                    Some(dir) if scenarios.len() > 1 => std::fs::write(dir.join(format!("{}.{ext}", s.name)), text)?,
                    _ => write_output(out, &text)?,
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", s.name);
                first_err.get_or_insert(CliError::from(e));
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}
