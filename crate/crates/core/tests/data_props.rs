use std::collections::BTreeMap;
use std::f64::consts::TAU;

use parklot_core::analytics::{
    occupancy_timeseries, read_log, slot_durations, slot_stats, slot_vehicle_counts, LogHeader,
    LogWriter, OccupancyLog,
};
use parklot_core::geometry::{Point, Polygon};
use parklot_core::occupancy::{assign_frame, diff_frames, VehicleId};
use parklot_core::slots::{load_slot_map, save_slot_map, Slot, SlotId};
use parklot_core::{OccupancyFrame, SlotEntry, SlotMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_star(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Polygon {
    loop {
        let n = rng.random_range(3..=12);
        let c = Point::new(rng.random_range(100.0..w - 100.0), rng.random_range(100.0..h - 100.0));
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let mut v: Vec<Point> = angles
            .iter()
            .map(|t| {
                let r = rng.random_range(10.0..90.0);
                Point::new(c.x + r * t.cos(), c.y + r * t.sin())
            })
            .collect();
        v.push(v[0]);
        if let Ok(p) = Polygon::new(v) {
            return p;
        }
    }
}

fn random_map(rng: &mut ChaCha8Rng) -> SlotMap {
    let (w, h) = (rng.random_range(400..2000u32), rng.random_range(400..2000u32));
    let n = rng.random_range(0..20);
    let mut ids: Vec<SlotId> = (0..200).collect();
    let slots = (0..n)
        .map(|_| {
            let k = rng.random_range(0..ids.len());
            let slot_id = ids.swap_remove(k);
            Slot {
                slot_id,
                polygon: random_star(rng, f64::from(w), f64::from(h)),
                label: rng.random_bool(0.5).then(|| format!("L{slot_id}")),
            }
        })
        .collect();
    let reference = rng.random_bool(0.5).then(|| "frame.png".to_string());
    SlotMap::new(slots, w, h, reference).unwrap()
}

#[test]
fn slot_map_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let map = random_map(&mut rng);
        let bytes = save_slot_map(&map);
        let back = load_slot_map(&bytes).unwrap().map;
        assert_eq!(back, map);
        assert_eq!(save_slot_map(&back), bytes);
        assert_eq!(back.sha256(), map.sha256());
    }
}

/// Each vehicle's first containing slot, lowest vehicle id wins.
fn assign_oracle(vehicles: &[(VehicleId, Point)], map: &SlotMap) -> (Vec<SlotEntry>, Vec<VehicleId>) {
    let mut claims: BTreeMap<usize, Vec<VehicleId>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for &(id, c) in vehicles {
        let first = map
            .slots()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.polygon.contains(c))
            .min_by_key(|(_, s)| s.slot_id)
            .map(|(k, _)| k);
        match first {
            Some(k) => claims.entry(k).or_default().push(id),
            None => unassigned.push(id),
        }
    }
    let mut entries = vec![SlotEntry::FREE; map.len()];
    for (k, ids) in claims {
        let min = *ids.iter().min().unwrap();
        entries[k] = SlotEntry::occupied_by(min);
        unassigned.extend(ids.into_iter().filter(|&i| i != min));
    }
    unassigned.sort_unstable();
    (entries, unassigned)
}

#[test]
fn assign_frame_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let map = random_map(&mut rng);
        let (w, h) = (f64::from(map.frame_width), f64::from(map.frame_height));
        let n = rng.random_range(0..40);
        let mut ids: Vec<VehicleId> = (1..500).collect();
        let vehicles: Vec<(VehicleId, Point)> = (0..n)
            .map(|_| {
                let k = rng.random_range(0..ids.len());
                (ids.swap_remove(k), Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
            })
            .collect();
        let got = assign_frame(&vehicles, &map, 0, None).unwrap();
        let (entries, unassigned) = assign_oracle(&vehicles, &map);
        assert_eq!(got.frame.entries, entries);
        assert_eq!(got.frame.unassigned_vehicles, unassigned);
        // A vehicle id appears at most once across entries and the unassigned list.
        let mut seen: Vec<VehicleId> = got
            .frame
            .entries
            .iter()
            .filter(|e| e.occupied)
            .map(|e| e.vehicle_id)
            .chain(got.frame.unassigned_vehicles.iter().copied())
            .collect();
        let total = seen.len();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), total);
        assert_eq!(total, vehicles.len());
    }
}

fn random_frames(rng: &mut ChaCha8Rng, slots: usize, n: usize) -> Vec<OccupancyFrame> {
    let mut cur: Vec<u64> = vec![0; slots];
    let mut frame_index = 0;
    (0..n)
        .map(|_| {
            for v in cur.iter_mut() {
                if rng.random_bool(0.1) {
                    *v = if *v == 0 || rng.random_bool(0.3) { rng.random_range(0..6) } else { 0 };
                }
            }
            frame_index += if rng.random_bool(0.05) { rng.random_range(2..5) } else { 1 };
            OccupancyFrame {
                frame_index,
                timestamp_ms: rng.random_bool(0.5).then_some(frame_index as i64 * 33),
                entries: cur
                    .iter()
                    .map(|&v| if v == 0 { SlotEntry::FREE } else { SlotEntry::occupied_by(v) })
                    .collect(),
                unassigned_vehicles: vec![],
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folding_events_reproduces_frames(seed in any::<u64>(), slots in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = random_frames(&mut rng, slots, 200);
        let ids: Vec<SlotId> = (0..slots as SlotId).map(|k| k * 3 + 1).collect();
        let mut state = frames[0].clone();
        for w in frames.windows(2) {
            for e in diff_frames(&w[0], &w[1], &ids).unwrap() {
                prop_assert!(state.apply(&e, &ids));
            }
            prop_assert_eq!(&state.entries, &w[1].entries);
        }
    }

    #[test]
    fn analytics_identities(seed in any::<u64>(), slots in 1usize..10, fps in 1.0..60.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = random_frames(&mut rng, slots, 300);
        let header = LogHeader {
            version: 1,
            fps,
            slot_count: slots,
            slot_map_sha256: String::new(),
            start_timestamp_ms: None,
        };
        let mut log = OccupancyLog::new(header).unwrap();
        for f in frames {
            log.append(f).unwrap();
        }
        let total_slot_frames: u64 = log.frames().iter().map(|f| f.occupied_count() as u64).sum();
        let stats = slot_stats(&log);
        let durations = slot_durations(&log);
        prop_assert_eq!(stats.values().map(|s| s.occupied_frames).sum::<u64>(), total_slot_frames);
        let secs: f64 = durations.values().sum();
        prop_assert!((secs * fps - total_slot_frames as f64).abs() < 1e-6);
        for (id, s) in &stats {
            prop_assert_eq!(s.occupied_seconds, durations[id]);
            let from_intervals: u64 = s.intervals.iter().map(|iv| iv.len()).sum();
            prop_assert_eq!(from_intervals, s.occupied_frames);
            for w in s.intervals.windows(2) {
                prop_assert!(w[0].end_frame <= w[1].start_frame);
            }
        }
        // Series rebuilt from interval decompositions.
        for p in occupancy_timeseries(&log) {
            let covered = stats
                .values()
                .flat_map(|s| &s.intervals)
                .filter(|iv| iv.start_frame <= p.frame_index && p.frame_index < iv.end_frame)
                .count();
            prop_assert_eq!(covered, p.occupied_count);
        }
        // Distinct ids per slot against a raw-log set oracle.
        let counts = slot_vehicle_counts(&log);
        for (k, id) in log.slot_ids().iter().enumerate() {
            let mut set: Vec<u64> = log
                .frames()
                .iter()
                .filter(|f| f.entries[k].occupied)
                .map(|f| f.entries[k].vehicle_id)
                .collect();
            set.sort_unstable();
            set.dedup();
            prop_assert_eq!(counts[id].distinct_vehicles, set.len());
        }
    }
}

#[test]
fn ten_thousand_frames_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frames = random_frames(&mut rng, 8, 10_000);
    let header = LogHeader {
        version: 1,
        fps: 25.0,
        slot_count: 8,
        slot_map_sha256: "abc".into(),
        start_timestamp_ms: Some(1_700_000_000_000),
    };
    let mut w = LogWriter::new(Vec::new(), header).unwrap();
    for f in &frames {
        w.append(f).unwrap();
    }
    let bytes = w.into_inner();
    let back = read_log(&bytes[..]).unwrap();
    assert_eq!(back.log.frames(), &frames[..]);
    assert_eq!(back.log.to_bytes(), bytes);
}

#[test]
fn file_writer_creates_complete_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("occ.log");
    let header = LogHeader {
        version: 1,
        fps: 30.0,
        slot_count: 2,
        slot_map_sha256: "x".into(),
        start_timestamp_ms: None,
    };
    let mut w = LogWriter::create(&path, header).unwrap();
    w.append(&OccupancyFrame::all_free(0, None, 2)).unwrap();
    w.sync().unwrap();
    let read = parklot_core::analytics::read_log_file(&path).unwrap();
    assert_eq!(read.log.len(), 1);
    assert!(!dir.path().join("occ.log.tmp").exists());
}
