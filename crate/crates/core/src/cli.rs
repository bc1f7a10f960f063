//! Command-line surface. `run` parses arguments, executes one subcommand and returns
//! the process exit code: 0 on success, 2 for bad input, 3 for numerical failure.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::calibration::{fit_accel_calibration, segment_static_clips, AccelCalib, CalibrationSet, RESIDUAL_DEFINITION};
use crate::datamodel::{circular_diff, Angle, DeviceTrace};
use crate::error::{Error, Result};
use crate::eval::{drift, heading_error, mean_and_sd, paired_t_test, write_report, HeadingErrorReport};
use crate::fusion::read_gps_fixes;
use crate::heading::{mag_heading_series, tilt_series, HeadingMethod, HeadingSeries};
use crate::pipeline::{
    phone_mag_offsets, process_device, process_pair, run_mixed_rate, DisplacementMethod, PipelineOptions,
};
use crate::synth::{calibration_session, generate, SynthScenario};
use crate::trace_io::{load_trace, read_table, resample, write_table, write_trace, Columns, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "earnav", version, about = "Earable inertial navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (key=value); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReferenceSource {
    Phone,
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioKind {
    Loop,
    Corridor,
    Straight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NoiseLevel {
    Ideal,
    Realistic,
}

#[derive(Args, Debug)]
struct ReferenceArgs {
    /// Reference heading for the error report.
    #[arg(long, value_enum)]
    reference: Option<ReferenceSource>,
    /// Ground-truth file, required with `--reference truth`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "loop")]
    scenario: ScenarioKind,
    /// Side of the loop or length of the corridor or straight walk, m.
    #[arg(long, default_value_t = 20.0)]
    size: f64,
    /// Laps of the loop or legs of the corridor.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Direction of the first leg, degrees clockwise from north.
    #[arg(long, default_value_t = 30.0)]
    heading_deg: f64,
    /// Time for a 90 degree turn, s.
    #[arg(long, default_value_t = 1.0)]
    turn_s: f64,
    #[arg(long, value_enum, default_value = "realistic")]
    noise: NoiseLevel,
    /// Add sudden head glances while walking.
    #[arg(long)]
    glances: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic walk: device, phone and truth files plus a calibration session per device.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Device sampling rate, Hz (defaults to the configured rate).
        #[arg(long)]
        rate: Option<f64>,
        /// Emit GPS fixes at the configured period and sigma.
        #[arg(long)]
        gps: bool,
        /// Give every device a known accelerometer miscalibration.
        #[arg(long)]
        miscalibrate: bool,
    },
    /// Fit accelerometer calibration from a static session, optionally with a magnetometer window from a walk.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Recording of successive static poses.
        #[arg(long)]
        trace: PathBuf,
        /// Walk used for magnetometer reference points (needs --phone).
        #[arg(long, requires = "phone")]
        walk: Option<PathBuf>,
        #[arg(long)]
        phone: Option<PathBuf>,
    },
    /// Track one device.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, conflicts_with = "no_calibration")]
        calibration: Option<PathBuf>,
        /// Run without accelerometer and magnetometer calibration.
        #[arg(long)]
        no_calibration: bool,
        /// Phone trace supplying reference headings for magnetometer calibration.
        #[arg(long)]
        phone: Option<PathBuf>,
        #[arg(long, default_value = "complementary")]
        method: String,
        #[arg(long, default_value = "pdr")]
        displacement: String,
        /// Processing rate, Hz (defaults to the configured rate).
        #[arg(long)]
        rate: Option<f64>,
        #[command(flatten)]
        reference: ReferenceArgs,
    },
    /// Fuse two devices, optionally with GPS.
    Fuse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Calibration for both devices, or for the left when --calibration-right is given.
        #[arg(long, conflicts_with = "no_calibration")]
        calibration: Option<PathBuf>,
        #[arg(long, requires = "calibration")]
        calibration_right: Option<PathBuf>,
        #[arg(long)]
        no_calibration: bool,
        #[arg(long)]
        phone: Option<PathBuf>,
        /// GPS fix file (t, x_m, y_m, sigma_m).
        #[arg(long)]
        gps: Option<PathBuf>,
        #[arg(long, default_value = "complementary")]
        method: String,
        /// Run the right device at this lower rate, Hz (20, 10, 5 or 2.5).
        #[arg(long)]
        rate: Option<f64>,
        #[command(flatten)]
        reference: ReferenceArgs,
    },
    /// Monte-Carlo comparison of methods over seeded synthetic walks.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Right-device rate for the fused run, Hz.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, value_enum, default_value = "truth")]
        reference: ReferenceSource,
    },
    /// Audio-feedback frequency for a heading difference or a heading series.
    Tone {
        #[command(flatten)]
        common: Common,
        /// Single heading difference, degrees.
        #[arg(long, conflicts_with = "heading", required_unless_present = "heading")]
        diff_deg: Option<f64>,
        /// Heading series (t, heading_deg, method).
        #[arg(long, requires = "target_deg")]
        heading: Option<PathBuf>,
        /// Target heading, degrees.
        #[arg(long)]
        target_deg: Option<f64>,
        /// Also render the series as a 16-bit 44.1 kHz mono WAV file.
        #[arg(long, requires = "heading")]
        wav: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { common, scenario, rate, gps, miscalibrate } => cmd_synth(&common, &scenario, rate, gps, miscalibrate),
        Command::Calibrate { common, trace, walk, phone } => cmd_calibrate(&common, &trace, walk.as_deref(), phone.as_deref()),
        Command::Track {
            common,
            trace,
            calibration,
            no_calibration,
            phone,
            method,
            displacement,
            rate,
            reference,
        } => cmd_track(
            &common,
            &trace,
            calibration.as_deref(),
            no_calibration,
            phone.as_deref(),
            &method,
            &displacement,
            rate,
            &reference,
        ),
        Command::Fuse {
            common,
            left,
            right,
            calibration,
            calibration_right,
            no_calibration,
            phone,
            gps,
            method,
            rate,
            reference,
        } => cmd_fuse(
            &common,
            (&left, &right),
            (calibration.as_deref(), calibration_right.as_deref()),
            no_calibration,
            phone.as_deref(),
            gps.as_deref(),
            &method,
            rate,
            &reference,
        ),
        Command::Eval { common, scenario, seeds, rate, reference } => cmd_eval(&common, &scenario, seeds, rate, reference),
        Command::Tone { common, diff_deg, heading, target_deg, wav } => {
            cmd_tone(&common, diff_deg, heading.as_deref(), target_deg, wav.as_deref())
        }
    }
}

/// Loads the configuration, applies the seed override, prints the resolved settings and
/// writes them to `config.txt` in the output directory.
fn resolve(common: &Common, extra: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&common.out_dir).map_err(|source| Error::Io {
        path: common.out_dir.clone(),
        source,
    })?;
    let mut pairs = cfg.to_pairs();
    pairs.extend_from_slice(extra);
    for (k, v) in &pairs {
        println!("{k}={v}");
    }
    write_report(common.out_dir.join("config.txt"), &pairs)?;
    Ok(cfg)
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

/// Miscalibration given to devices by `synth --miscalibrate`.
pub const EXAMPLE_MISCALIBRATION: AccelCalib = AccelCalib {
    alpha_yx: 0.01,
    alpha_zx: 0.0,
    alpha_zy: 0.0,
    scale: nalgebra::Vector3::new(1.02, 0.98, 1.01),
    bias: nalgebra::Vector3::new(0.05, -0.03, 0.02),
};

fn build_scenario(args: &ScenarioArgs, seed: u64, cfg: &RunConfig) -> Result<SynthScenario> {
    check_positive("--size", args.size)?;
    check_positive("--turn-s", args.turn_s)?;
    if args.repeats == 0 {
        return Err(Error::InvalidInput("--repeats must be at least 1".into()));
    }
    let mut sc = match args.scenario {
        ScenarioKind::Loop => SynthScenario::square_loop(args.size, args.repeats, args.heading_deg),
        ScenarioKind::Corridor => SynthScenario::corridor(args.size, args.repeats, args.heading_deg),
        ScenarioKind::Straight => SynthScenario::straight(args.size, args.heading_deg),
    };
    sc.user_height = cfg.user_height;
    sc.speed = crate::synth::consistent_speed(cfg.user_height, sc.step_hz);
    sc.rate_hz = cfg.rate_hz;
    sc.turn_s_per_90 = args.turn_s;
    sc.seed = seed;
    if args.noise == NoiseLevel::Realistic {
        sc = sc.with_realistic_noise(seed);
    }
    if args.glances {
        sc = sc.with_glances();
    }
    Ok(sc)
}

fn scenario_pairs(args: &ScenarioArgs) -> Vec<(String, String)> {
    vec![
        kv("scenario", format!("{:?}", args.scenario).to_lowercase()),
        kv("size_m", args.size),
        kv("repeats", args.repeats),
        kv("heading_deg", args.heading_deg),
        kv("turn_s_per_90", args.turn_s),
        kv("noise", format!("{:?}", args.noise).to_lowercase()),
        kv("glances", args.glances),
    ]
}

fn cmd_synth(common: &Common, args: &ScenarioArgs, rate: Option<f64>, gps: bool, miscalibrate: bool) -> Result<()> {
    let mut extra = scenario_pairs(args);
    extra.push(kv("gps", gps));
    extra.push(kv("miscalibrate", miscalibrate));
    let cfg = resolve(common, &extra)?;
    let mut sc = build_scenario(args, cfg.seed, &cfg)?;
    if let Some(r) = rate {
        check_positive("--rate", r)?;
        sc.rate_hz = r;
    }
    if gps {
        sc.gps = Some((cfg.gps_period_s, cfg.gps_sigma_m));
    }
    if miscalibrate {
        for d in &mut sc.devices {
            d.accel = EXAMPLE_MISCALIBRATION;
        }
    }
    let out = generate(&sc)?;
    out.write(&common.out_dir)?;
    for (k, d) in sc.devices.iter().enumerate() {
        let mut session = calibration_session(&d.accel, 12, 2.0, sc.rate_hz, sc.noise.acc * 0.1, cfg.seed ^ (k as u64 + 1))?;
        session.device_id = d.id.clone();
        write_trace(common.out_dir.join(format!("session_{}.csv", d.id)), &session)?;
    }
    println!("wrote {} samples per device over {:.1} s", out.left().len(), out.truth.duration());
    Ok(())
}

/// Jump separating two static poses, m/s².
const POSE_JUMP: f64 = 1.0;

fn cmd_calibrate(common: &Common, trace: &Path, walk: Option<&Path>, phone: Option<&Path>) -> Result<()> {
    let cfg = resolve(common, &[kv("trace", trace.display())])?;
    let session = load_trace(trace, Columns::Imu)?;
    let min_len = ((0.5 * session.rate_hz).round() as usize).max(1);
    let clips = segment_static_clips(&session.samples, POSE_JUMP, min_len);
    let fit = fit_accel_calibration(&clips)?;
    let mut set = CalibrationSet {
        accel: fit.calib,
        ..CalibrationSet::default()
    };
    let mut report = vec![
        kv("residual_definition", RESIDUAL_DEFINITION),
        kv("rms_residual", format!("{:.9e}", fit.rms_residual)),
        kv("iterations", fit.iterations),
        kv("orientations", fit.orientations),
        kv("clips", clips.len()),
    ];
    if let (Some(walk), Some(phone)) = (walk, phone) {
        let walk = prepare(load_trace(walk, Columns::Imu)?, cfg.rate_hz)?;
        let mut walk_cal = walk.clone();
        for s in &mut walk_cal.samples {
            s.acc = crate::calibration::apply_accel_calibration(&s.acc, &set.accel);
        }
        let phone = load_trace(phone, Columns::ImuWithReference)?;
        let times = walk_cal.times();
        let aligned = crate::trace_io::resample_to_times(&phone, &times, walk_cal.rate_hz)?;
        let reference = aligned
            .reference
            .ok_or_else(|| Error::InvalidInput("phone trace has no reference heading column".into()))?;
        let tilts = tilt_series(&walk_cal, cfg.stationary_threshold, cfg.stationary_window_s)?;
        let raw = mag_heading_series(&walk_cal, &tilts)?;
        let (_, state, _) = phone_mag_offsets(&times, &raw.psi, &reference, &cfg);
        report.push(kv("mag_reference_points", state.window.len()));
        report.push(kv("mag_offset_deg", format!("{:.6}", state.current_offset.degrees())));
        set.mag = state;
    }
    for (k, v) in &report {
        println!("{k}={v}");
    }
    set.save(common.out_dir.join("calibration.txt"))?;
    write_report(common.out_dir.join("calibration_report.txt"), &report)
}

/// Brings a trace to the processing rate when it is sampled faster; slower traces are
/// processed at their own rate.
fn prepare(trace: DeviceTrace, rate_hz: f64) -> Result<DeviceTrace> {
    if trace.rate_hz > rate_hz * (1.0 + 1e-9) {
        resample(&trace, rate_hz)
    } else {
        Ok(trace)
    }
}

fn load_calibration(path: Option<&Path>, no_calibration: bool) -> Result<CalibrationSet> {
    match (path, no_calibration) {
        (Some(p), _) => CalibrationSet::load(p),
        (None, true) => Ok(CalibrationSet::default()),
        (None, false) => Err(Error::InvalidInput(
            "missing calibration: pass --calibration FILE or --no-calibration".into(),
        )),
    }
}

/// Reads the body heading column of a ground-truth file.
pub fn load_truth_heading(path: &Path) -> Result<HeadingSeries> {
    let table = read_table(path, &["t", "x", "y", "heading_deg", "stride_flag"])?;
    let mut t = Vec::with_capacity(table.rows.len());
    let mut psi = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        t.push(table.f64_at(r, 0)?);
        psi.push(Angle::from_degrees(table.f64_at(r, 3)?));
    }
    HeadingSeries::new(HeadingMethod::Mag, t, psi)
}

fn reference_series(args: &ReferenceArgs, phone: Option<&DeviceTrace>) -> Result<Option<HeadingSeries>> {
    match args.reference {
        None => Ok(None),
        Some(ReferenceSource::Truth) => {
            let path = args
                .truth
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("--reference truth needs --truth FILE".into()))?;
            load_truth_heading(path).map(Some)
        }
        Some(ReferenceSource::Phone) => {
            let phone = phone.ok_or_else(|| Error::InvalidInput("--reference phone needs --phone FILE".into()))?;
            let reference = phone
                .reference
                .clone()
                .ok_or_else(|| Error::InvalidInput("phone trace has no reference heading column".into()))?;
            HeadingSeries::new(HeadingMethod::Mag, phone.times(), reference).map(Some)
        }
    }
}

fn heading_report(
    estimate: &HeadingSeries,
    reference: Option<&HeadingSeries>,
    out_dir: &Path,
    pairs: &mut Vec<(String, String)>,
) -> Result<Option<HeadingErrorReport>> {
    let Some(reference) = reference else {
        return Ok(None);
    };
    let report = heading_error(estimate, reference)?;
    pairs.extend(report.to_pairs());
    let t: Vec<f64> = estimate
        .t
        .iter()
        .copied()
        .filter(|&t| t >= reference.t[0] && t <= reference.t[reference.t.len() - 1])
        .collect();
    report.write_errors(out_dir.join("heading_errors.csv"), &t)?;
    Ok(Some(report))
}

fn parse_method(name: &str) -> Result<HeadingMethod> {
    name.parse()
}

#[allow(clippy::too_many_arguments)]
fn cmd_track(
    common: &Common,
    trace: &Path,
    calibration: Option<&Path>,
    no_calibration: bool,
    phone: Option<&Path>,
    method: &str,
    displacement: &str,
    rate: Option<f64>,
    reference: &ReferenceArgs,
) -> Result<()> {
    let method = parse_method(method)?;
    let displacement: DisplacementMethod = displacement.parse()?;
    let mut cfg = resolve(
        common,
        &[
            kv("method", method),
            kv("displacement", displacement),
            kv("calibrated", !no_calibration),
        ],
    )?;
    if let Some(r) = rate {
        check_positive("--rate", r)?;
        cfg.rate_hz = r;
    }
    let calib = load_calibration(calibration, no_calibration)?;
    let trace = prepare(load_trace(trace, Columns::Any)?, cfg.rate_hz)?;
    let phone = phone.map(|p| load_trace(p, Columns::ImuWithReference)).transpose()?;
    let opts = PipelineOptions {
        method,
        calibrated: !no_calibration,
        displacement,
    };
    let result = process_device(&trace, phone.as_ref(), &calib, &cfg, &opts)?;
    let dir = &common.out_dir;
    result.track.write(dir.join("track.csv"))?;
    result.track.write_strides(dir.join("strides.csv"))?;
    result.heading.write(dir.join("heading.csv"))?;
    let mut pairs = drift(&result.track)?.to_pairs();
    pairs.push(kv("strides", result.strides.len()));
    pairs.push(kv("path_length_m", format!("{:.6}", result.track.path_length())));
    let reference = reference_series(reference, phone.as_ref())?;
    heading_report(&result.heading, reference.as_ref(), dir, &mut pairs)?;
    for (k, v) in &pairs {
        println!("{k}={v}");
    }
    write_report(dir.join("report.txt"), &pairs)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuse(
    common: &Common,
    traces: (&Path, &Path),
    calibration: (Option<&Path>, Option<&Path>),
    no_calibration: bool,
    phone: Option<&Path>,
    gps: Option<&Path>,
    method: &str,
    rate: Option<f64>,
    reference: &ReferenceArgs,
) -> Result<()> {
    let method = parse_method(method)?;
    let mut extra = vec![kv("method", method), kv("calibrated", !no_calibration)];
    if let Some(r) = rate {
        extra.push(kv("right_rate_hz", r));
    }
    let cfg = resolve(common, &extra)?;
    let calib_left = load_calibration(calibration.0, no_calibration)?;
    let calib_right = match calibration.1 {
        Some(p) => CalibrationSet::load(p)?,
        None => calib_left.clone(),
    };
    let left = prepare(load_trace(traces.0, Columns::Any)?, cfg.rate_hz)?;
    let right = load_trace(traces.1, Columns::Any)?;
    let phone = phone.map(|p| load_trace(p, Columns::ImuWithReference)).transpose()?;
    let fixes = gps.map(read_gps_fixes).transpose()?.unwrap_or_default();
    let opts = PipelineOptions {
        method,
        calibrated: !no_calibration,
        displacement: DisplacementMethod::Pdr,
    };
    let calibs = (&calib_left, &calib_right);
    let result = match rate {
        Some(r) => run_mixed_rate(&left, &right, r, phone.as_ref(), calibs, &fixes, &cfg, &opts)?,
        None => process_pair(&left, &right, phone.as_ref(), calibs, &fixes, &cfg, &opts)?,
    };
    let dir = &common.out_dir;
    result.track.write(dir.join("track.csv"))?;
    result.dead_reckoned.write_strides(dir.join("strides.csv"))?;
    result.heading.write(dir.join("heading.csv"))?;
    let mut pairs = drift(&result.track)?.to_pairs();
    pairs.push(kv("strides", result.stride_times.len()));
    pairs.push(kv("gps_fixes", fixes.len()));
    if !fixes.is_empty() {
        result.dead_reckoned.write(dir.join("track_dead_reckoned.csv"))?;
        pairs.push(kv("dead_reckoned_drift_m_per_s", format!("{:.9}", drift(&result.dead_reckoned)?.drift)));
    }
    let reference = reference_series(reference, phone.as_ref())?;
    heading_report(&result.heading, reference.as_ref(), dir, &mut pairs)?;
    for (k, v) in &pairs {
        println!("{k}={v}");
    }
    write_report(dir.join("report.txt"), &pairs)
}

/// Per-seed outcome of `eval`.
#[derive(Clone, Debug, PartialEq)]
struct EvalRun {
    seed: u64,
    duration: f64,
    /// fused, complementary, gyro, mag, madgwick
    drift: [f64; 5],
    heading_mean: [f64; 5],
    heading_sd: [f64; 5],
}

const EVAL_LABELS: [&str; 5] = ["fused", "complementary", "gyro", "mag", "madgwick"];

fn eval_one(args: &ScenarioArgs, seed: u64, rate: Option<f64>, reference: ReferenceSource, cfg: &RunConfig) -> Result<EvalRun> {
    let sc = build_scenario(args, seed, cfg)?;
    let out = generate(&sc)?;
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let calib = CalibrationSet::default();
    let (left, right) = (out.left(), out.right().expect("scenarios carry two devices"));
    let reference = match reference {
        ReferenceSource::Truth => HeadingSeries::new(HeadingMethod::Mag, out.truth.t.clone(), out.truth.heading.clone())?,
        ReferenceSource::Phone => HeadingSeries::new(
            HeadingMethod::Mag,
            out.phone.times(),
            out.phone.reference.clone().expect("synthetic phone carries a reference"),
        )?,
    };
    let base = PipelineOptions::default();
    let fused = match rate {
        Some(r) => run_mixed_rate(left, right, r, Some(&out.phone), (&calib, &calib), &[], &cfg, &base)?,
        None => process_pair(left, right, Some(&out.phone), (&calib, &calib), &[], &cfg, &base)?,
    };
    let mut run = EvalRun {
        seed,
        duration: out.truth.duration(),
        drift: [0.0; 5],
        heading_mean: [0.0; 5],
        heading_sd: [0.0; 5],
    };
    let mut record = |k: usize, track: &crate::displacement::Track, heading: &HeadingSeries| -> Result<()> {
        run.drift[k] = drift(track)?.drift;
        let h = heading_error(heading, &reference)?;
        run.heading_mean[k] = h.mean_abs_error;
        run.heading_sd[k] = h.std_dev;
        Ok(())
    };
    record(0, &fused.track, &fused.heading)?;
    for (k, method) in [HeadingMethod::Complementary, HeadingMethod::Gyro, HeadingMethod::Mag, HeadingMethod::Madgwick]
        .into_iter()
        .enumerate()
    {
        let opts = PipelineOptions { method, ..base };
        let single = process_device(left, Some(&out.phone), &calib, &cfg, &opts)?;
        record(k + 1, &single.track, &single.heading)?;
    }
    Ok(run)
}

fn cmd_eval(common: &Common, args: &ScenarioArgs, seeds: u64, rate: Option<f64>, reference: ReferenceSource) -> Result<()> {
    if seeds < 2 {
        return Err(Error::InvalidInput("--seeds must be at least 2 for the paired tests".into()));
    }
    let mut extra = scenario_pairs(args);
    extra.push(kv("seeds", seeds));
    extra.push(kv("reference", format!("{reference:?}").to_lowercase()));
    if let Some(r) = rate {
        extra.push(kv("right_rate_hz", r));
    }
    let cfg = resolve(common, &extra)?;
    let base = cfg.seed;
    let runs: Vec<EvalRun> = (0..seeds)
        .into_par_iter()
        .map(|k| eval_one(args, base.wrapping_add(k), rate, reference, &cfg))
        .collect::<Result<_>>()?;

    let dir = &common.out_dir;
    let mut columns = vec!["seed".to_string(), "duration_s".to_string()];
    for l in EVAL_LABELS {
        columns.push(format!("drift_{l}"));
    }
    for l in EVAL_LABELS {
        columns.push(format!("heading_mean_{l}"));
    }
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = runs.iter().map(|r| {
        let mut row = vec![r.seed.to_string(), format!("{:.6}", r.duration)];
        row.extend(r.drift.iter().map(|d| format!("{d:.9}")));
        row.extend(r.heading_mean.iter().map(|d| format!("{d:.6}")));
        row
    });
    write_table(dir.join("eval_runs.csv"), &cols, rows)?;

    let column = |f: &dyn Fn(&EvalRun) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let mut pairs = Vec::new();
    for (k, l) in EVAL_LABELS.iter().enumerate() {
        let d = column(&|r| r.drift[k]);
        let (mean, sd) = mean_and_sd(&d);
        pairs.push(kv(&format!("drift_{l}_mean"), format!("{mean:.9}")));
        pairs.push(kv(&format!("drift_{l}_sd"), format!("{sd:.9}")));
        let (hm, h_across) = mean_and_sd(&column(&|r| r.heading_mean[k]));
        let (h_within, _) = mean_and_sd(&column(&|r| r.heading_sd[k]));
        pairs.push(kv(&format!("heading_{l}_mean_deg"), format!("{hm:.6}")));
        pairs.push(kv(&format!("heading_{l}_sd_per_timestamp_deg"), format!("{h_within:.6}")));
        pairs.push(kv(&format!("heading_{l}_sd_across_runs_deg"), format!("{h_across:.6}")));
    }
    let fused = column(&|r| r.drift[0]);
    let comp = column(&|r| r.drift[1]);
    let gyro = column(&|r| r.drift[2]);
    pairs.extend(paired_t_test(&fused, &comp, 0.05)?.to_pairs("ttest_fused_vs_complementary_"));
    pairs.extend(paired_t_test(&comp, &gyro, 0.05)?.to_pairs("ttest_complementary_vs_gyro_"));
    for (k, v) in &pairs {
        println!("{k}={v}");
    }
    write_report(dir.join("eval_report.txt"), &pairs)
}

/// Feedback tone for a heading difference: `2750 (180 - d) / 180 + 250` Hz with the
/// difference folded into [0, 180] degrees. 3000 Hz when on target, 250 Hz when opposite.
pub fn tone_frequency(heading_diff_deg: f64) -> f64 {
    let d = circular_diff(Angle::from_degrees(heading_diff_deg), Angle::ZERO)
        .abs()
        .to_degrees()
        .clamp(0.0, 180.0);
    2750.0 * (180.0 - d) / 180.0 + 250.0
}

pub const WAV_SAMPLE_RATE: u32 = 44_100;

/// Renders piecewise-constant frequencies as a phase-continuous sine, 16-bit mono PCM.
/// `segments` holds (duration s, frequency Hz).
pub fn render_wav(segments: &[(f64, f64)]) -> Vec<u8> {
    let mut pcm: Vec<i16> = Vec::new();
    let mut phase = 0.0f64;
    let mut carry = 0.0f64;
    for &(duration, freq) in segments {
        let exact = duration * WAV_SAMPLE_RATE as f64 + carry;
        let n = exact.floor().max(0.0) as usize;
        carry = exact - n as f64;
        let step = 2.0 * PI * freq / WAV_SAMPLE_RATE as f64;
        for _ in 0..n {
            pcm.push((0.5 * phase.sin() * i16::MAX as f64).round() as i16);
            phase = (phase + step) % (2.0 * PI);
        }
    }
    let data_len = (pcm.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + pcm.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&WAV_SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(WAV_SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in pcm {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

fn load_heading_series(path: &Path) -> Result<HeadingSeries> {
    let table = read_table(path, &["t", "heading_deg", "method"])?;
    let mut t = Vec::with_capacity(table.rows.len());
    let mut psi = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        t.push(table.f64_at(r, 0)?);
        psi.push(Angle::from_degrees(table.f64_at(r, 1)?));
    }
    let method = match table.rows.first() {
        Some(row) => row[2].trim().parse()?,
        None => HeadingMethod::Complementary,
    };
    HeadingSeries::new(method, t, psi)
}

fn cmd_tone(
    common: &Common,
    diff_deg: Option<f64>,
    heading: Option<&Path>,
    target_deg: Option<f64>,
    wav: Option<&Path>,
) -> Result<()> {
    resolve(common, &[])?;
    if let Some(d) = diff_deg {
        if !d.is_finite() {
            return Err(Error::InvalidInput("--diff-deg must be finite".into()));
        }
        let f = tone_frequency(d);
        println!("frequency_hz={f:.6}");
        return write_report(common.out_dir.join("tone.txt"), &[kv("diff_deg", d), kv("frequency_hz", format!("{f:.6}"))]);
    }
    let (Some(path), Some(target)) = (heading, target_deg) else {
        return Err(Error::InvalidInput("tone needs --diff-deg or --heading with --target-deg".into()));
    };
    let series = load_heading_series(path)?;
    let target = Angle::from_degrees(target);
    let freqs: Vec<f64> = series
        .psi
        .iter()
        .map(|p| tone_frequency(circular_diff(*p, target).to_degrees()))
        .collect();
    let rows = series
        .t
        .iter()
        .zip(&freqs)
        .map(|(t, f)| vec![format!("{t:.6}"), format!("{f:.6}")]);
    write_table(common.out_dir.join("tone.csv"), &["t", "frequency_hz"], rows)?;
    if let Some(wav) = wav {
        let segments: Vec<(f64, f64)> = (0..freqs.len())
            .map(|i| {
                let dur = if i + 1 < series.t.len() {
                    series.t[i + 1] - series.t[i]
                } else if i > 0 {
                    series.t[i] - series.t[i - 1]
                } else {
                    0.1
                };
                (dur, freqs[i])
            })
            .collect();
        fs::write(wav, render_wav(&segments)).map_err(|source| Error::Io {
            path: wav.to_path_buf(),
            source,
        })?;
    }
    println!("samples={}", freqs.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_examples() {
        assert_eq!(tone_frequency(0.0), 3000.0);
        assert_eq!(tone_frequency(180.0), 250.0);
        assert_eq!(tone_frequency(90.0), 1625.0);
        assert_eq!(tone_frequency(-90.0), 1625.0);
        assert!((tone_frequency(270.0) - 1625.0).abs() < 1e-9);
    }

    #[test]
    fn tone_strictly_decreasing() {
        for d in 0..180 {
            assert!(tone_frequency(d as f64) > tone_frequency(d as f64 + 1.0));
        }
    }

    #[test]
    fn wav_header_and_length() {
        let bytes = render_wav(&[(0.5, 1000.0), (0.5, 2000.0)]);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        let data_len = u32::from_le_bytes(bytes[40..44].try_into().unwrap()) as usize;
        assert_eq!(data_len, 44_100 * 2);
        assert_eq!(bytes.len(), 44 + data_len);
    }

    #[test]
    fn wav_is_phase_continuous() {
        let bytes = render_wav(&[(0.01, 440.0), (0.01, 880.0)]);
        let pcm: Vec<i16> = bytes[44..].chunks(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        let max_step = pcm.windows(2).map(|w| (w[1] as i32 - w[0] as i32).abs()).max().unwrap();
        // an 880 Hz sine at half scale moves at most 2π·880/44100·16384 ≈ 2054 per sample
        assert!(max_step < 2100, "{max_step}");
    }

    #[test]
    fn unknown_method_lists_supported() {
        let err = parse_method("fourati").unwrap_err();
        let msg = err.to_string();
        for m in ["mag", "gyro", "complementary", "madgwick"] {
            assert!(msg.contains(m));
        }
        assert_eq!(err.exit_code(), 2);
    }
}
