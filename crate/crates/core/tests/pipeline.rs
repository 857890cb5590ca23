use echomap::imaging::{estimate_radius, sync_measurements, PeakBand, SyncConfig};
use echomap::posegraph::io::read_trajectory;
use echomap::signal::wav::read_wav;
use echomap::signal::{detect_soi, low_pass_filter, SoiConfig};
use echomap::synth::io::{read_ground_truth, write_scenario, AUDIO_FILE, POSES_FILE};
use echomap::synth::{generate_scenario, ScenarioConfig};

#[test]
fn scenario_files_round_trip_through_detection_and_grouping() {
    let dir = tempfile::tempdir().unwrap();
    let config = ScenarioConfig::five_tap();
    let scenario = generate_scenario(&config).unwrap();
    write_scenario(dir.path(), &scenario).unwrap();

    let truth = read_ground_truth(dir.path()).unwrap();
    assert_eq!(truth.taps.len(), 5);
    assert_eq!(truth.impact_count(), scenario.truth.impact_count());

    let audio = read_wav(dir.path().join(AUDIO_FILE), 0.0).unwrap();
    let trajectory = read_trajectory(&dir.path().join(POSES_FILE)).unwrap();
    let filtered = low_pass_filter(&audio, 2000.0).unwrap();
    let sois = detect_soi(&filtered, &SoiConfig::default());
    assert_eq!(sois.len(), truth.impact_count());
    for soi in &sois {
        assert!(truth.tap_for_time(soi.t_start, 1e-3).is_some(), "no impact near {} s", soi.t_start);
    }

    let sync = sync_measurements(sois, &trajectory, &SyncConfig::default()).unwrap();
    assert!(sync.unmatched.is_empty());
    assert_eq!(sync.groups.len(), 5);
    for (g, tap) in sync.groups.iter().zip(&truth.taps) {
        let d = ((g.centroid.x - tap.position[0]).powi(2) + (g.centroid.y - tap.position[1]).powi(2)).sqrt();
        assert!(d < 1e-3, "group centroid {d} m from its tap");
        let spectra: Vec<_> = g.members.iter().map(|&i| &sync.measurements[i].spectrum).collect();
        let r = estimate_radius(&spectra[0], config.wave.wave_speed, PeakBand::default()).unwrap();
        assert!((r - tap.nearest_pipe_distance).abs() < 0.02, "radius {r} vs {}", tap.nearest_pipe_distance);
    }
}
