use flipper_core::policy::*;
use flipper_core::sim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dem(rng: &mut ChaCha8Rng, nan_p: f64) -> Dem {
    let mut d = Dem::filled(0.0);
    for c in &mut d.cells {
        *c = if rng.random::<f64>() < nan_p { f64::NAN } else { rng.random_range(-0.3..0.3) };
    }
    d.pitch = rng.random_range(-0.3..0.3);
    d.flippers = [rng.random_range(-1.0..1.0); 4];
    d
}

#[test]
fn preprocess_rules() {
    let (v, m) = preprocess(&Dem::filled(0.0));
    assert!(v.data.iter().all(|&x| x == 0.0));
    assert!(m.data.iter().all(|&x| x == 1.0));
    let (v, m) = preprocess(&Dem::filled(f64::NAN));
    assert!(v.data.iter().all(|&x| x == 0.0));
    assert!(m.data.iter().all(|&x| x == 0.0));
    let mut d = Dem::filled(0.0);
    d.cells[0] = 0.2;
    d.cells[1] = f64::NAN;
    let (v, m) = preprocess(&d);
    assert_eq!(&v.data[..2], &[0.2, 0.0]);
    assert_eq!(&m.data[..2], &[1.0, 0.0]);
}

#[test]
fn zero_weight_policy_returns_clamped_bias() {
    let g = RobotGeometry::default();
    let mut p = PolicyNet::new(PolicyArch::default(), 1).unwrap();
    let last = p.net.params.len() - 1;
    p.net.params[last][0].data.iter_mut().for_each(|w| *w = 0.0);
    p.net.params[last][1].data = vec![0.3, -5.0, 2.5, -0.1];
    let a = p.act(&Dem::filled(0.1), &g);
    assert_eq!(a.targets, [0.3, g.flipper_min, g.flipper_max, -0.1]);
}

#[test]
fn payload_under_nan_is_ignored() {
    let g = RobotGeometry::default();
    let p = PolicyNet::new(PolicyArch::default(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = random_dem(&mut rng, 0.3);
    let mut d2 = d;
    for c in &mut d2.cells {
        if c.is_nan() {
            *c = f64::from_bits(0x7ff8_dead_beef_0001);
        }
    }
    assert_eq!(p.raw(&d).map(f64::to_bits), p.raw(&d2).map(f64::to_bits));
    assert_eq!(p.act(&d, &g), p.act(&d2, &g));
}

#[test]
fn unit_offset_loss() {
    let mut p = PolicyNet::new(PolicyArch::default(), 3).unwrap();
    let last = p.net.params.len() - 1;
    p.net.params[last][0].data.iter_mut().for_each(|w| *w = 0.0);
    p.net.params[last][1].data = vec![1.25, 0.5, 0.0, -0.5];
    let pair = ImitationPair {
        obs: Dem::filled(0.0),
        action: Action::new([0.25, 0.5, 0.0, -0.5]),
    };
    assert_eq!(imitation_loss(&p, &[pair]), 1.0);
    let exact = ImitationPair {
        action: Action::new([1.25, 0.5, 0.0, -0.5]),
        ..pair
    };
    assert_eq!(imitation_loss(&p, &[exact]), 0.0);
}

#[test]
fn split_is_a_partition() {
    let pairs = vec![
        ImitationPair {
            obs: Dem::filled(0.0),
            action: Action::new([0.0; 4]),
        };
        37
    ];
    let data = ImitationDataset::new(pairs, 9);
    let (a, b) = data.split();
    assert_eq!(a.len(), 30);
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..37).collect::<Vec<_>>());
    assert_eq!(data.split(), (a, b));
}

#[test]
fn constant_target_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pair = ImitationPair {
        obs: random_dem(&mut rng, 0.1),
        action: Action::new([0.6, 0.6, -0.3, -0.3]),
    };
    let pairs = vec![pair; 20];
    let data = ImitationDataset::new(pairs, 1);
    let hyper = ImitationHyper {
        epochs: 200,
        batch: 8,
        lr: 3e-3,
        ..ImitationHyper::default()
    };
    let t = train_imitation(&data, &hyper).unwrap();
    assert!(t.test_error < 0.05, "{}", t.test_error);
    let again = train_imitation(&data, &hyper).unwrap();
    assert_eq!(t.test_error.to_bits(), again.test_error.to_bits());
}

#[test]
fn empty_dataset_is_rejected() {
    let data = ImitationDataset::new(Vec::new(), 0);
    assert_eq!(train_imitation(&data, &ImitationHyper::default()), Err(PolicyError::EmptyDataset));
}
