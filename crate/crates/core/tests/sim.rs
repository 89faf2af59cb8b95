use std::f64::consts::FRAC_PI_2;
use flipper_core::sim::*;
use flipper_core::terrain::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn flat() -> World {
    generate_world(&ObstacleSpec::new(Obstacle::Flat, 0.0, 4.0), 0).unwrap()
}

fn wall(height: f64) -> World {
    let mut w = flat();
    let edge = ((w.start_x + 0.8) / w.grid_step) as usize;
    for h in &mut w.heights[edge..] {
        *h = height;
    }
    w
}

#[test]
fn flat_pose_is_level() {
    let g = RobotGeometry::default();
    let w = flat();
    let pose = settle(&w, 3.0, &[0.0; 4], &g).unwrap();
    assert_eq!(pose.pitch, 0.0);
    assert!((pose.z - g.com_height).abs() < 1e-12);
    let raised = settle(&w, 3.0, &[FRAC_PI_2; 4], &g).unwrap();
    assert_eq!(raised.pitch, 0.0);
    assert!((raised.z - pose.z).abs() < 1e-12);
    assert!(!pose.contacts.is_empty());
}

#[test]
fn settle_rejects_bad_input() {
    let g = RobotGeometry::default();
    let w = flat();
    assert!(matches!(settle(&w, -1.0, &[0.0; 4], &g), Err(SimError::OutOfWorld(_))));
    assert!(matches!(settle(&w, 2.0, &[3.0, 0.0, 0.0, 0.0], &g), Err(SimError::FlipperRange(_))));
}

#[test]
fn flat_step_advances_without_events() {
    let cfg = SimConfig::default();
    let w = flat();
    let s = initial_state(&w, w.start_x, [0.0; 4], &cfg.geometry).unwrap();
    for dt in [1.0, 0.2] {
        let (n, e) = step(&w, &s, &Action::new(s.flippers), dt, &cfg);
        assert!((n.x - s.x - SPEED * dt).abs() < 1e-9);
        assert_eq!(n.pitch, 0.0);
        assert!(e.is_safe(), "{e:?}");
        assert_eq!(e.peak_accel, 0.0);
    }
}

#[test]
fn flipper_rate_saturates() {
    let cfg = SimConfig::default();
    let w = flat();
    let s = initial_state(&w, w.start_x, [0.0; 4], &cfg.geometry).unwrap();
    let a = Action::new([1.5, -2.0, 1.5, -2.0]);
    let (n, _) = step(&w, &s, &a, 0.2, &cfg);
    for k in 0..4 {
        let moved = (n.flippers[k] - s.flippers[k]).abs();
        assert!((moved - cfg.limits.max_flipper_rate * 0.2).abs() < 1e-12);
    }
}

#[test]
fn flat_flippers_stall_at_a_wall() {
    let cfg = SimConfig::default();
    let w = wall(0.4);
    let mut s = initial_state(&w, w.start_x, [0.0; 4], &cfg.geometry).unwrap();
    let mut stuck = false;
    for _ in 0..10 {
        let (n, e) = step(&w, &s, &Action::new([0.0; 4]), 1.0, &cfg);
        s = n;
        if e.stuck {
            stuck = true;
            break;
        }
    }
    assert!(stuck);
    assert!(s.x < w.start_x + 0.8);
}

#[test]
fn sim_dem_on_flat_ground_is_zero() {
    let g = RobotGeometry::default();
    let w = flat();
    let s = initial_state(&w, 3.0, [0.2, 0.2, 0.1, 0.1], &g).unwrap();
    let dem = extract_dem_sim(&w, &s, &g);
    assert!(dem.cells.iter().all(|&c| c == 0.0));
    assert_eq!(dem.nan_count(), 0);
    assert_eq!(dem.flippers, s.flippers);
}

#[test]
fn ideal_sensing_is_identity_and_full_dropout_blanks() {
    let g = RobotGeometry::default();
    let w = wall(0.15);
    let s = initial_state(&w, w.start_x, [0.0; 4], &g).unwrap();
    let dem = extract_dem_sim(&w, &s, &g);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(sense_dem(&dem, &SenseParams::IDEAL, &g, &mut rng).same_as(&dem));
    let all = SenseParams {
        dropout_base: 1.0,
        ..SenseParams::IDEAL
    };
    assert_eq!(sense_dem(&dem, &all, &g, &mut rng).nan_count(), DEM_CELLS);
}

#[test]
fn occlusion_hides_cells_below_a_drop() {
    let g = RobotGeometry::default();
    let mut w = flat();
    let edge = ((w.start_x + 0.6) / w.grid_step) as usize;
    for h in &mut w.heights[edge..] {
        *h = -0.3;
    }
    let s = initial_state(&w, w.start_x, [0.0; 4], &g).unwrap();
    let dem = extract_dem_sim(&w, &s, &g);
    let hidden = shadowed_rows(&dem, &g);
    // the row right after the edge is in the shadow, the rows on top are not
    let first_low = (0..DEM_ROWS).find(|&i| dem.at(i, 0) < -0.2).unwrap();
    assert!(hidden[first_low]);
    assert!(!hidden[first_low - 1]);
    assert!(!hidden[0]);
}

#[test]
fn verdict_levels() {
    let cfg = SimConfig::default();
    let w = flat();
    let mut s = initial_state(&w, w.start_x, [0.0; 4], &cfg.geometry).unwrap();
    let mut states = vec![s];
    let mut events = Vec::new();
    while s.x < w.goal_x() {
        let (n, e) = step(&w, &s, &Action::new([0.0; 4]), 1.0, &cfg);
        states.push(n);
        events.push(e);
        s = n;
    }
    let budget = 2.0 * w.required_length / SPEED;
    assert_eq!(check_safety(&states, &events, &cfg.limits, &w, budget), Verdict::Good);

    let mut bumpy = events.clone();
    bumpy[1].peak_pitch = 0.9 * cfg.limits.max_pitch;
    assert_eq!(check_safety(&states, &bumpy, &cfg.limits, &w, budget), Verdict::Unclear);

    let mut stuck = events.clone();
    stuck[0].stuck = true;
    assert_eq!(check_safety(&states, &stuck, &cfg.limits, &w, budget), Verdict::Fail);
    assert_eq!(check_safety(&states[..2], &events[..1], &cfg.limits, &w, budget), Verdict::Fail);
    assert_eq!(check_safety(&states, &events, &cfg.limits, &w, 1.0), Verdict::Fail);
    assert_eq!(Verdict::Good.value() + Verdict::Unclear.value() + Verdict::Fail.value(), 1.5);
}
