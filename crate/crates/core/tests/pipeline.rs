use earnav::calibration::CalibrationSet;
use earnav::eval::{drift, heading_error};
use earnav::heading::{HeadingMethod, HeadingSeries};
use earnav::pipeline::{process_device, process_pair, run_mixed_rate, DisplacementMethod, PipelineOptions};
use earnav::synth::{generate, SynthScenario};
use earnav::trace_io::RunConfig;

fn truth_heading(out: &earnav::synth::SynthOutput) -> HeadingSeries {
    HeadingSeries::new(HeadingMethod::Mag, out.truth.t.clone(), out.truth.heading.clone()).unwrap()
}

#[test]
fn noiseless_loop_closes_for_every_method() {
    // 20 m legs end in the trough of a step, so no truncated half-step adds a peak
    let out = generate(&SynthScenario::square_loop(20.0, 1, 30.0)).unwrap();
    let calib = CalibrationSet::default();
    let cfg = RunConfig::default();
    for method in HeadingMethod::ALL {
        let opts = PipelineOptions { method, ..PipelineOptions::default() };
        let r = process_device(out.left(), Some(&out.phone), &calib, &cfg, &opts).unwrap();
        let d = drift(&r.track).unwrap().drift;
        assert!(d < 0.01, "{method}: {d}");
        assert_eq!(r.strides.len(), out.truth.stride_times.len(), "{method}");
    }
}

#[test]
fn gyro_bias_hurts_gyro_more_than_complementary() {
    let calib = CalibrationSet::default();
    let (mut gyro_total, mut comp_total) = (0.0, 0.0);
    for seed in 0..20 {
        let mut sc = SynthScenario::square_loop(20.0, 1, 30.0).with_realistic_noise(seed);
        for d in &mut sc.devices {
            d.gyro_bias.z += 0.5f64.to_radians();
        }
        let out = generate(&sc).unwrap();
        let cfg = RunConfig { seed, ..RunConfig::default() };
        let run = |method| {
            let opts = PipelineOptions { method, ..PipelineOptions::default() };
            drift(&process_device(out.left(), Some(&out.phone), &calib, &cfg, &opts).unwrap().track).unwrap().drift
        };
        gyro_total += run(HeadingMethod::Gyro);
        comp_total += run(HeadingMethod::Complementary);
    }
    assert!(gyro_total > comp_total, "gyro {gyro_total} vs complementary {comp_total}");
}

#[test]
fn identical_devices_fuse_to_the_single_track() {
    let out = generate(&SynthScenario::square_loop(15.0, 1, 30.0).with_realistic_noise(3)).unwrap();
    let calib = CalibrationSet::default();
    let cfg = RunConfig { seed: 3, ..RunConfig::default() };
    let opts = PipelineOptions::default();
    let single = process_device(out.left(), Some(&out.phone), &calib, &cfg, &opts).unwrap();
    let fused = process_pair(out.left(), out.left(), Some(&out.phone), (&calib, &calib), &[], &cfg, &opts).unwrap();
    assert_eq!(fused.stride_times.len(), single.strides.len());
    let worst = single
        .track
        .positions
        .iter()
        .zip(&fused.track.positions)
        .map(|(a, b)| a.distance(b))
        .fold(0.0, f64::max);
    // particle-filter smoothing of the same heading: well under a stride
    assert!(worst < 0.5, "{worst}");
}

#[test]
fn fused_heading_beats_single_in_expectation() {
    let calib = CalibrationSet::default();
    let (mut fused, mut single) = (0.0, 0.0);
    for seed in 0..10 {
        let out = generate(&SynthScenario::square_loop(20.0, 1, 30.0).with_realistic_noise(seed)).unwrap();
        let cfg = RunConfig { seed, ..RunConfig::default() };
        let opts = PipelineOptions::default();
        let f = process_pair(out.left(), out.right().unwrap(), Some(&out.phone), (&calib, &calib), &[], &cfg, &opts).unwrap();
        let truth = truth_heading(&out);
        fused += heading_error(&f.heading, &truth).unwrap().mean_abs_error;
        single += heading_error(&f.left.heading, &truth).unwrap().mean_abs_error;
    }
    assert!(fused < single, "fused {fused} vs single {single}");
}

#[test]
fn gps_fixes_bound_a_drifting_track() {
    let mut sc = SynthScenario::straight(500.0, 60.0).with_realistic_noise(4);
    sc.gps = Some((30.0, 3.9));
    let out = generate(&sc).unwrap();
    let calib = CalibrationSet::default();
    // a wrong user height scales every stride, so dead reckoning drifts linearly
    let cfg = RunConfig { seed: 4, user_height: 1.5, ..RunConfig::default() };
    let opts = PipelineOptions::default();
    let f = process_pair(out.left(), out.right().unwrap(), Some(&out.phone), (&calib, &calib), &out.gps, &cfg, &opts).unwrap();
    let err = |track: &earnav::displacement::Track| {
        track.positions.iter().zip(&out.truth.position).map(|(a, b)| a.distance(b)).sum::<f64>() / track.len() as f64
    };
    let (corrected, dead_reckoned) = (err(&f.track), err(&f.dead_reckoned));
    assert!(dead_reckoned > 30.0, "{dead_reckoned}");
    assert!(corrected <= 15.0, "{corrected}");
}

#[test]
fn mixed_rate_runs_at_every_supported_rate() {
    let out = generate(&SynthScenario::corridor(10.0, 2, 75.0)).unwrap();
    let calib = CalibrationSet::default();
    let cfg = RunConfig::default();
    let opts = PipelineOptions::default();
    for rate in [20.0, 10.0, 5.0, 2.5] {
        let f = run_mixed_rate(out.left(), out.right().unwrap(), rate, Some(&out.phone), (&calib, &calib), &[], &cfg, &opts).unwrap();
        assert_eq!(f.track.len(), out.left().len());
        assert!(drift(&f.track).unwrap().drift < 0.05, "{rate}");
    }
    assert!(run_mixed_rate(out.left(), out.right().unwrap(), 7.0, None, (&calib, &calib), &[], &cfg, &opts).is_err());
}

#[test]
fn kinematics_displacement_is_available() {
    let out = generate(&SynthScenario::straight(10.0, 60.0)).unwrap();
    let opts = PipelineOptions { displacement: DisplacementMethod::Kinematics, ..PipelineOptions::default() };
    let r = process_device(out.left(), Some(&out.phone), &CalibrationSet::default(), &RunConfig::default(), &opts).unwrap();
    assert_eq!(r.track.len(), out.left().len());
    assert!(r.track.positions.iter().all(|p| p.x.is_finite() && p.y.is_finite()));
}

#[test]
fn calibration_reduces_heading_error_under_hard_iron() {
    let mut sc = SynthScenario::square_loop(20.0, 1, 30.0).with_realistic_noise(9);
    sc.devices[0].hard_iron_deg = 15.0;
    let out = generate(&sc).unwrap();
    let cfg = RunConfig { seed: 9, ..RunConfig::default() };
    let truth = truth_heading(&out);
    let err = |calibrated| {
        let opts = PipelineOptions { calibrated, ..PipelineOptions::default() };
        let r = process_device(out.left(), Some(&out.phone), &CalibrationSet::default(), &cfg, &opts).unwrap();
        heading_error(&r.heading, &truth).unwrap().mean_abs_error
    };
    assert!(err(true) < 0.8 * err(false));
}
