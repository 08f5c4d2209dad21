use parklot_core::analytics::{overstays, slot_durations, slot_stats, slot_vehicle_counts};
use parklot_core::ingest::{
    generate_scenario, parse_stream, NoiseModel, RandomVehicles, Scenario, ScenarioOutput,
    StreamOptions, VehicleScript,
};
use parklot_core::pipeline::Pipeline;
use parklot_core::{OccupancyFrame, TrackerParams};

fn run_pipeline(out: &ScenarioOutput, n_init: u32) -> Vec<OccupancyFrame> {
    let params = TrackerParams {
        n_init,
        ..TrackerParams::default()
    };
    let mut p = Pipeline::new(out.slot_map.clone(), params, 0).unwrap();
    // Go through the text format so parsing is part of the loop.
    let stream = out.detection_stream();
    parse_stream(&stream[..], StreamOptions::default())
        .map(|f| p.step(&f.unwrap()).unwrap().frame)
        .collect()
}

#[test]
fn scripted_scenario_matches_ground_truth() {
    let s = Scenario {
        frames: 1200,
        vehicles: vec![
            VehicleScript::Parked {
                slot_id: 3,
                from_frame: 0,
                until_frame: Some(400),
                drive_out: true,
            },
            VehicleScript::Park {
                entry_frame: 10,
                slot_id: 17,
                dwell_frames: 300,
            },
            VehicleScript::Pass { entry_frame: 200 },
        ],
        ..Scenario::default()
    };
    let out = generate_scenario(&s).unwrap();
    let got = run_pipeline(&out, s.n_init);
    assert_eq!(got, out.ground_truth.frames());
    assert!(got.iter().any(|f| f.entries[17].occupied));
}

#[test]
fn random_scenarios_with_appearance_match() {
    for seed in 0..3 {
        let s = Scenario {
            seed,
            frames: 1500,
            appearance_dim: 16,
            random_vehicles: Some(RandomVehicles {
                count: 10,
                ..RandomVehicles::default()
            }),
            ..Scenario::default()
        };
        let out = generate_scenario(&s).unwrap();
        assert_eq!(run_pipeline(&out, s.n_init), out.ground_truth.frames(), "seed {seed}");
    }
}

#[test]
fn n_init_one_has_no_latency() {
    let s = Scenario {
        seed: 4,
        n_init: 1,
        frames: 800,
        random_vehicles: Some(RandomVehicles {
            count: 6,
            ..RandomVehicles::default()
        }),
        ..Scenario::default()
    };
    let out = generate_scenario(&s).unwrap();
    assert_eq!(run_pipeline(&out, 1), out.ground_truth.frames());
}

#[test]
fn dropouts_preserve_counts_and_seconds() {
    let base = Scenario {
        seed: 21,
        frames: 2000,
        random_vehicles: Some(RandomVehicles {
            count: 15,
            ..RandomVehicles::default()
        }),
        noise: NoiseModel {
            dropout_probability: 0.03,
            max_gap: 30,
            ..NoiseModel::default()
        },
        ..Scenario::default()
    };
    let out = generate_scenario(&base).unwrap();
    let clean = generate_scenario(&Scenario {
        noise: NoiseModel::default(),
        ..base.clone()
    })
    .unwrap();
    let dets = |o: &ScenarioOutput| o.frames.iter().map(|f| f.detections.len()).sum::<usize>();
    assert!(dets(&out) < dets(&clean), "no dropouts were generated");

    let got = run_pipeline(&out, base.n_init);
    let mut log = parklot_core::analytics::OccupancyLog::new(out.ground_truth.header().clone()).unwrap();
    for f in got {
        log.append(f).unwrap();
    }
    assert_eq!(slot_vehicle_counts(&log), slot_vehicle_counts(&out.ground_truth));
    assert_eq!(slot_durations(&log), slot_durations(&out.ground_truth));
}

#[test]
fn overstay_found_in_scenario() {
    // 90 s and 20 s at 30 fps, both parked until the stream ends.
    let s = Scenario {
        frames: 2800,
        n_init: 1,
        vehicles: vec![
            VehicleScript::Parked {
                slot_id: 5,
                from_frame: 100,
                until_frame: None,
                drive_out: false,
            },
            VehicleScript::Parked {
                slot_id: 8,
                from_frame: 2200,
                until_frame: None,
                drive_out: false,
            },
        ],
        ..Scenario::default()
    };
    let out = generate_scenario(&s).unwrap();
    let log = &out.ground_truth;
    let o = overstays(&slot_stats(log), log.fps(), 60.0);
    assert_eq!(o.len(), 1);
    assert_eq!((o[0].slot_id, o[0].duration_seconds), (5, 90.0));
    assert_eq!(o[0].vehicle_id, out.vehicles[0].expected_id);
}

#[test]
fn ten_thousand_frame_stream_counts() {
    let s = Scenario {
        seed: 8,
        frames: 10_000,
        random_vehicles: Some(RandomVehicles {
            count: 30,
            ..RandomVehicles::default()
        }),
        ..Scenario::default()
    };
    let out = generate_scenario(&s).unwrap();
    let text = String::from_utf8(out.detection_stream()).unwrap();
    // Independent count: one "b" key per detection.
    let expected_dets = text.matches("\"b\":").count();
    let expected_frames = text.lines().filter(|l| !l.trim().is_empty()).count();
    let frames: Vec<_> = parse_stream(text.as_bytes(), StreamOptions::default())
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(frames.len(), 10_000);
    assert_eq!(frames.len(), expected_frames);
    assert_eq!(frames.iter().map(|f| f.detections.len()).sum::<usize>(), expected_dets);
}
