use flipper::checkpoint::{CganFile, PolicyFile};
use flipper::io::*;
use flipper_core::cgan::{CganHyper, CycleGan};
use flipper_core::pipeline::{rollout, test_worlds, training_worlds, Domain, RolloutSetup};
use flipper_core::planner::{extract_dataset, plan, NoClock, PlanConfig};
use flipper_core::policy::{ImitationDataset, PolicyArch, PolicyNet};
use flipper_core::sim::*;
use flipper_core::terrain::World;
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::Path;

fn json_roundtrip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(dir: &Path, name: &str, value: &T) -> T {
    let a = dir.join(format!("{name}.a.json"));
    let b = dir.join(format!("{name}.b.json"));
    write_json(&a, value).unwrap();
    let back: T = read_json(&a).unwrap();
    write_json(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{name}");
    back
}

fn jsonl_roundtrip<T: Serialize + DeserializeOwned>(dir: &Path, name: &str, items: &[T]) -> Vec<T> {
    let a = dir.join(format!("{name}.a.jsonl"));
    let b = dir.join(format!("{name}.b.jsonl"));
    write_jsonl(&a, items).unwrap();
    let back: Vec<T> = read_jsonl(&a).unwrap();
    write_jsonl(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{name}");
    back
}

fn sensed_trajectory() -> (World, Trajectory) {
    let w = test_worlds()[1].generate().unwrap();
    let sim = SimConfig::default();
    let sense = SenseParams { noise_sigma: 0.02, dropout_base: 0.1, occlusion: true, seed: 0 };
    let setup = RolloutSetup { domain: Domain::PseudoReal, generator: None, sense: &sense, control_dt: 0.2, time_factor: 1.5, sim: &sim };
    let policy = PolicyNet::new(PolicyArch::default(), 1).unwrap();
    let t = rollout(&w, "P", &policy, &setup, 3, "real/0").unwrap();
    (w, t)
}

#[test]
fn worlds_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    for e in test_worlds().iter().chain(&training_worlds()) {
        let w = e.generate().unwrap();
        assert_eq!(json_roundtrip(dir.path(), &e.id, &w), w);
    }
}

#[test]
fn checkpoints_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let policy = PolicyNet::new(PolicyArch::default(), 7).unwrap();
    let pf = json_roundtrip(dir.path(), "policy", &PolicyFile::capture(&policy, None, 7));
    let restored = pf.restore().unwrap();
    assert_eq!(restored, policy);
    let hyper = CganHyper::default();
    let gan = CycleGan::new(&hyper).unwrap();
    let cf = json_roundtrip(dir.path(), "cgan", &CganFile::capture(&gan, hyper.arch, 0));
    assert_eq!(cf.restore().unwrap(), gan);
}

#[test]
fn trajectory_logs_roundtrip_with_nan_as_null() {
    let dir = tempfile::tempdir().unwrap();
    let (w, t) = sensed_trajectory();
    assert!(t.steps.iter().any(|s| s.dem.nan_count() > 0));
    let back = jsonl_roundtrip(dir.path(), "traj", std::slice::from_ref(&t));
    let text = std::fs::read_to_string(dir.path().join("traj.a.jsonl")).unwrap();
    assert!(text.contains("null") && !text.contains("NaN"));
    let b = &back[0];
    assert_eq!(b.steps.len(), t.steps.len());
    assert!(b.steps.iter().zip(&t.steps).all(|(x, y)| x.dem.same_as(&y.dem) && x.state == y.state && x.action == y.action));
    assert!(b.replays(&w, &SimConfig::default()));

    let sim = SimConfig::default();
    let p = plan(&w, "P", &PlanConfig { guide_bias: 0.0, ..PlanConfig::default() }, &sim, None, &NoClock).unwrap();
    let planned = p.trajectory.unwrap();
    assert_eq!(jsonl_roundtrip(dir.path(), "plan", std::slice::from_ref(&planned))[0], planned);
}

#[test]
fn datasets_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, t) = sensed_trajectory();
    let data = ImitationDataset::new(extract_dataset(&[t], None), 4);
    let back = json_roundtrip(dir.path(), "data", &data);
    assert_eq!(back.pairs.len(), data.pairs.len());
    assert!(back.pairs.iter().zip(&data.pairs).all(|(a, b)| a.obs.same_as(&b.obs) && a.action == b.action));
    assert_eq!(back.split(), data.split());
}

#[test]
fn csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![flipper::cli::LossRow { epoch: 0, train_loss: Some(0.25) }, flipper::cli::LossRow { epoch: 1, train_loss: finite(f64::NAN) }];
    let p = dir.path().join("loss.csv");
    write_csv(&p, &rows).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "epoch,train_loss\n0,0.25\n1,\n");
    assert_eq!(read_csv::<flipper::cli::LossRow>(&p).unwrap(), rows);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"a\": 1,\n  \"b\": ,\n}\n").unwrap();
    match read_json::<serde_json::Value>(&p) {
        Err(flipper::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let p = dir.path().join("bad.jsonl");
    std::fs::write(&p, "1\n2\nx\n").unwrap();
    match read_jsonl::<u32>(&p) {
        Err(flipper::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_json::<u32>(&dir.path().join("absent.json")), Err(flipper::Error::Missing(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn dems_roundtrip(cells in proptest::collection::vec(proptest::option::of(-2.0f64..2.0), DEM_CELLS), pitch in -1.0f64..1.0) {
        let mut dem = Dem::filled(0.0);
        for (c, v) in dem.cells.iter_mut().zip(&cells) {
            *c = v.unwrap_or(f64::NAN);
        }
        dem.pitch = pitch;
        let text = serde_json::to_string(&dem).unwrap();
        let back: Dem = serde_json::from_str(&text).unwrap();
        prop_assert!(back.same_as(&dem));
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
