//! End-to-end acceptance checks. Prints one line per criterion; criteria that
//! are reported rather than asserted say so on their line.

use std::path::Path;
use std::time::Instant;

use flipper::checkpoint::{CganFile, PolicyFile};
use flipper::cli::write_pipeline;
use flipper::config::BenchConfig;
use flipper::exec::Threaded;
use flipper::io;
use flipper::manifest::RunDir;
use flipper_core::cgan::*;
use flipper_core::nnkit::*;
use flipper_core::pipeline::*;
use flipper_core::planner::*;
use flipper_core::policy::*;
use flipper_core::sim::*;
use flipper_core::terrain::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 20;
const GRAD_SECONDS: f64 = 120.0;
const IDENTITY_CASES: usize = 1000;
const NAN_CASES: usize = 1000;
const TREND_GAIN: f64 = 0.5;
const GUIDED_RATIO: f64 = 0.8;
const HARD_BUDGET_FACTOR: f64 = 7.5;
const BENCH_RUNS: usize = 10;
const ORACLE_DEPTH: usize = 6;
const PROBE_MIN_ACCURACY: f64 = 0.9;
const FOOLED_MIN: f64 = 0.6;
const RAW_FOOLED_MAX: f64 = 0.2;
const CGAN_SECONDS: f64 = 600.0;
/// Output of the final default-seed policy on the fixture observation, as bit
/// patterns, recorded from the first training run.
const GOLDEN_ACTION: [u64; 4] = [4600497296962512140, 4599457639477767953, 13797272699737433296, 4581465102480041607];

struct Report {
    failed_asserted: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, asserted: bool, text: &str) {
        let tag = match (ok, asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (reported, not asserted)",
        };
        println!("criterion {id:>2} [{tag}] {text}");
        if !ok && asserted {
            self.failed_asserted.push(id.to_string());
        }
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn half_sq(out: &Tensor) -> (f64, Tensor) {
    (0.5 * out.norm_sq(), out.clone())
}

fn layer_archs() -> Vec<(&'static str, Architecture)> {
    let conv = |i, o| LayerKind::Conv2d { in_channels: i, out_channels: o, kernel: 3 };
    let fc = |i, o| LayerKind::FullyConnected { inputs: i, outputs: o };
    let mut out = Vec::new();

    let mut a = Architecture::new(vec![vec![2, 6, 5]]);
    a.push(conv(2, 3), &[Source::Input(0)]);
    out.push(("conv2d", a));

    let mut a = Architecture::new(vec![vec![7]]);
    a.push(fc(7, 4), &[Source::Input(0)]);
    out.push(("dense", a));

    let mut a = Architecture::new(vec![vec![7]]);
    let h = a.push(fc(7, 6), &[Source::Input(0)]);
    a.push(LayerKind::LeakyRelu { slope: 0.01 }, &[h]);
    out.push(("leaky_relu", a));

    let mut a = Architecture::new(vec![vec![7]]);
    let h = a.push(fc(7, 6), &[Source::Input(0)]);
    a.push(LayerKind::Sigmoid, &[h]);
    out.push(("sigmoid", a));

    let mut a = Architecture::new(vec![vec![5]]);
    let x = a.push(fc(5, 4), &[Source::Input(0)]);
    let y = a.push(fc(5, 4), &[Source::Input(0)]);
    a.push(LayerKind::Multiply, &[x, y]);
    out.push(("multiply", a));

    let mut a = Architecture::new(vec![vec![3], vec![2, 2]]);
    let x = a.push(fc(3, 2), &[Source::Input(0)]);
    let c = a.push(LayerKind::Concat, &[x, Source::Input(1)]);
    a.push(fc(6, 3), &[c]);
    out.push(("concat", a));

    let mut a = Architecture::new(vec![vec![1, 4, 3]]);
    let c = a.push(conv(1, 2), &[Source::Input(0)]);
    let f = a.push(LayerKind::Flatten, &[c]);
    a.push(fc(24, 2), &[f]);
    out.push(("flatten", a));

    let mut a = Architecture::new(vec![vec![2, 5, 4]]);
    let c = a.push(conv(2, 2), &[Source::Input(0)]);
    a.push(LayerKind::SkipAdd, &[c, Source::Input(0)]);
    out.push(("skip_add", a));
    out
}

fn random_dem(rng: &mut ChaCha8Rng, nan_p: f64) -> Dem {
    let mut d = Dem::filled(0.0);
    for c in d.cells.iter_mut() {
        *c = if rng.random::<f64>() < nan_p { f64::NAN } else { rng.random_range(-0.5..0.5) };
    }
    d.pitch = rng.random_range(-0.6..0.6);
    d.flippers = [0; 4].map(|_| rng.random_range(-1.5..1.5));
    d
}

fn dem_inputs(t: &DemTensor) -> Vec<Tensor> {
    vec![t.grid.clone(), t.scalars.clone()]
}

fn criterion_1(r: &mut Report) {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..GRAD_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for (_, arch) in layer_archs() {
            let inputs: Vec<Tensor> = arch.input_shapes.iter().map(|s| random_tensor(s, &mut rng)).collect();
            let mut net = Net::new(arch, seed).unwrap();
            let g = grad_check(&mut net, &inputs, half_sq, 1e-5, 10_000, seed).unwrap();
            worst = worst.max(g.max_rel_error);
            checked += g.checked;
        }
        let dem = random_dem(&mut rng, 0.2);
        let policy = PolicyNet::new(PolicyArch::default(), seed).unwrap();
        let (values, mask) = preprocess(&dem);
        let mut net = policy.net;
        let g = grad_check(&mut net, &[values, mask, Tensor::vector(dem.scalars().to_vec())], half_sq, 1e-5, 200, seed).unwrap();
        worst = worst.max(g.max_rel_error);
        checked += g.checked;
        let arch = CganArch::default();
        let x = encode(&dem);
        let mut gen = Net::new(arch.generator(), seed).unwrap();
        let g = grad_check(&mut gen, &dem_inputs(&x), half_sq, 1e-5, 200, seed).unwrap();
        worst = worst.max(g.max_rel_error);
        checked += g.checked;
        let mut disc = Net::new(arch.discriminator(), seed).unwrap();
        let g = grad_check(&mut disc, &dem_inputs(&x), half_sq, 1e-5, 200, seed).unwrap();
        worst = worst.max(g.max_rel_error);
        checked += g.checked;
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = worst < GRAD_TOL && secs < GRAD_SECONDS && checked > 0;
    r.line(
        "1",
        ok,
        true,
        &format!("gradient check: max relative error {worst:.2e} over {checked} parameters, 8 layer kinds + policy/generator/discriminator x {GRAD_SEEDS} seeds (tol {GRAD_TOL:e}); {secs:.1} s (limit {GRAD_SECONDS} s)"),
    );
}

fn criterion_2(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..IDENTITY_CASES {
        let g = Generator::identity(&CganArch::default(), i as u64 % 7).unwrap();
        let mut grid = random_tensor(&[2, DEM_ROWS, DEM_COLS], &mut rng);
        for m in &mut grid.data[DEM_CELLS..] {
            *m = if *m < 0.0 { -1.0 } else { 1.0 };
        }
        let x = DemTensor { grid, scalars: random_tensor(&[5], &mut rng) };
        let y = g.forward(&x);
        for (a, b) in y.grid.data.iter().chain(&y.scalars.data).zip(x.grid.data.iter().chain(&x.scalars.data)) {
            worst = worst.max((a - b).abs());
        }
    }
    r.line("2", worst == 0.0, true, &format!("identity initialization: max |G(x) - x| = {worst:e} over {IDENTITY_CASES} random inputs (required 0)"));
}

fn criterion_3(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut differing = 0;
    for i in 0..NAN_CASES {
        let policy = PolicyNet::new(PolicyArch::default(), i as u64 % 5).unwrap();
        let base = random_dem(&mut rng, 0.3);
        let mut other = base;
        for c in other.cells.iter_mut().filter(|c| c.is_nan()) {
            let payload: u64 = rng.random::<u64>() & 0x000f_ffff_ffff_ffff | 1;
            let sign: u64 = if rng.random() { 1 << 63 } else { 0 };
            *c = f64::from_bits(sign | 0x7ff0_0000_0000_0000 | payload);
            assert!(c.is_nan());
        }
        let a = policy.raw(&base).map(f64::to_bits);
        let b = policy.raw(&other).map(f64::to_bits);
        if a != b {
            differing += 1;
        }
    }
    r.line("3", differing == 0, true, &format!("NaN invariance: {differing} of {NAN_CASES} randomized NaN-payload cases changed the policy output bits (required 0)"));
}

fn write_run(out: &PipelineOutput, cfg: &PipelineConfig, dir: &Path) -> RunDir {
    let mut run = RunDir::create(dir).unwrap();
    write_pipeline(&mut run, out, cfg).unwrap();
    run.json("reports.json", &out.reports()).unwrap();
    run
}

fn criterion_4(r: &mut Report, tmp: &Path) -> (PipelineConfig, PipelineOutput) {
    let cfg = PipelineConfig::default();
    let t0 = Instant::now();
    let a = run(&cfg, &Sequential, &NoClock).map_err(|f| f.error).unwrap();
    let first = t0.elapsed().as_secs_f64();
    let b = run(&cfg, &Threaded::new(2), &NoClock).map_err(|f| f.error).unwrap();
    let ra = write_run(&a, &cfg, &tmp.join("run_a"));
    let rb = write_run(&b, &cfg, &tmp.join("run_b"));
    let same = ra.artifacts() == rb.artifacts() && a.reports() == b.reports();
    let policy = &a.iterations.last().unwrap().policy;
    let g = RobotGeometry::default();
    let w = test_worlds()[2].generate().unwrap();
    let s = initial_state(&w, w.start_x + 0.9, [0.0; 4], &g).unwrap();
    let bits = policy.raw(&extract_dem_sim(&w, &s, &g)).map(f64::to_bits);
    let golden = bits == GOLDEN_ACTION;
    if !golden {
        println!("final policy output bits {bits:?}");
    }
    r.line(
        "4",
        same && golden && a.iterations.len() == 3,
        true,
        &format!(
            "determinism: K=3, {} training / {} test worlds run twice (sequential, 2 threads): {} artifacts byte-identical = {same}; final policy matches recorded output = {golden}; {first:.0} s per run",
            cfg.training_worlds.len(),
            cfg.test_worlds.len(),
            ra.artifacts().len()
        ),
    );
    (cfg, a)
}

fn criterion_5(r: &mut Report, out: &PipelineOutput) {
    let sums: Vec<f64> = out.reports().iter().map(|x| x.score_sum).collect();
    let monotone = sums.windows(2).all(|w| w[1] >= w[0]);
    let gain = sums.last().unwrap() - sums[0];
    r.line(
        "5",
        monotone && gain >= TREND_GAIN,
        false,
        &format!("score trend: iteration sums {sums:?}; non-decreasing = {monotone}, gain {gain:+.3} (required >= {TREND_GAIN})"),
    );
}

fn criterion_6_7(r: &mut Report, out: &PipelineOutput) {
    let sim = SimConfig::default();
    let bench = BenchConfig::default();
    let worlds: Vec<(String, World)> = test_worlds().iter().map(|e| (e.id.clone(), e.generate().unwrap())).collect();
    let its = &out.iterations;
    let guide = PolicyGuide {
        policy: &its[its.len() - 1].policy,
        generator: Some(&its[its.len() - 2].cgan.g),
    };
    let clock = || Box::new(NoClock) as Box<dyn Clock>;
    let rows = bench_planner(&Threaded::new(1), &bench.cases, &worlds, Some(&guide), &sim, BENCH_RUNS, 0, &clock).unwrap();
    let unguided = mean_expansions(&rows, 1);
    let guided = mean_expansions(&rows, 2);
    let guided_fine = mean_expansions(&rows, 4);
    let guided_coarse7 = mean_expansions(&rows, 3);
    let ratio = guided / unguided;
    let budget = (HARD_BUDGET_FACTOR * unguided).ceil() as usize;
    let hard_entry = hard_stair_world();
    let hard = vec![(hard_entry.id.clone(), hard_entry.generate().unwrap())];
    let hard_case = BenchCase {
        label: 0,
        guided: false,
        plan: PlanConfig { max_expansions: budget, ..bench.hard_case },
    };
    let hard_rows = bench_planner(&Threaded::new(1), &[hard_case], &hard, None, &sim, BENCH_RUNS, 0, &clock).unwrap();
    let hard_found: usize = hard_rows.iter().map(|r| r.found).sum();
    let monotone = guided <= unguided && guided_fine > guided_coarse7;
    r.line(
        "6",
        monotone,
        true,
        &format!("planner guidance: guided {guided:.2} <= unguided {unguided:.2} mean expansions, and dt 0.2 ({guided_fine:.2}) > dt 1.0 ({guided_coarse7:.2}) at 7 actions"),
    );
    r.line("6a", ratio <= GUIDED_RATIO, false, &format!("guided/unguided expansion ratio {ratio:.3} (target <= {GUIDED_RATIO})"));
    r.line(
        "6b",
        hard_found == 0,
        false,
        &format!("unguided 3 actions dt 0.2 on {}: found {hard_found}/{BENCH_RUNS} within budget {budget} = {HARD_BUDGET_FACTOR} x unguided mean (target 0)", hard_entry.id),
    );

    // soundness: bench_planner replays every plan it returns and errors otherwise
    let bench_plans: usize = rows.iter().chain(&hard_rows).map(|r| r.found).sum();
    let train: Vec<(String, World)> = training_worlds().iter().map(|e| (e.id.clone(), e.generate().unwrap())).collect();
    let mut replayed = 0;
    let mut unsound = 0;
    for t in out.initial_plans.iter().chain(its.iter().flat_map(|i| &i.plans)) {
        let w = &train.iter().find(|(id, _)| *id == t.world_id).unwrap().1;
        replayed += 1;
        if !(t.replays(w, &sim) && t.steps.iter().all(|s| s.event.is_safe()) && t.end.x >= w.goal_x() - 1e-9) {
            unsound += 1;
        }
    }
    let (agree, total, infeasible) = oracle_agreement(&sim);
    r.line(
        "7",
        unsound == 0 && agree == total && infeasible > 0,
        true,
        &format!(
            "planner soundness: {bench_plans} benchmark plans and {replayed} pipeline plans replayed, {unsound} unsound; brute-force oracle agrees on {agree}/{total} depth-{ORACLE_DEPTH} instances ({infeasible} infeasible)"
        ),
    );
}

fn oracle(w: &World, s: &RobotState, set: &ActionSet, sim: &SimConfig, depth: usize) -> bool {
    if s.x >= w.goal_x() - 1e-9 {
        return true;
    }
    depth > 0
        && set.actions.iter().any(|a| {
            let (n, e) = step(w, s, a, 1.0, sim);
            e.is_safe() && oracle(w, &n, set, sim, depth - 1)
        })
}

fn oracle_agreement(sim: &SimConfig) -> (usize, usize, usize) {
    let set = ActionSet::standard(3).unwrap();
    let mut specs = vec![ObstacleSpec::new(Obstacle::Flat, 0.5, 1.5)];
    for &(riser, tread) in &[(0.1, 0.3), (0.15, 0.3), (0.17, 0.28), (0.2, 0.25), (0.2, 0.3)] {
        for approach in [0.3, 0.6, 0.9] {
            specs.push(ObstacleSpec::new(Obstacle::StairsUp { riser, tread, steps: 3 }, approach, 1.8));
            specs.push(ObstacleSpec::new(Obstacle::StairsDown { riser, tread, steps: 3 }, approach, 1.8));
        }
    }
    specs.push(ObstacleSpec::new(Obstacle::Pallet { height: 0.2, length: 0.4 }, 0.3, 1.8));
    specs.push(ObstacleSpec::new(Obstacle::Pallet { height: 0.12, length: 0.6 }, 0.6, 1.8));
    let (mut agree, mut infeasible) = (0, 0);
    for (i, spec) in specs.iter().enumerate() {
        let w = generate_world(spec, i as u64).unwrap();
        let start = initial_state(&w, w.start_x, [0.0; 4], &sim.geometry).unwrap();
        let expected = oracle(&w, &start, &set, sim, ORACLE_DEPTH);
        let cfg = PlanConfig { max_expansions: 5000, guide_bias: 0.0, margin: 1.0, ..PlanConfig::default() };
        let found = plan(&w, "micro", &cfg, sim, None, &NoClock).unwrap().stats.found;
        agree += usize::from(found == expected);
        infeasible += usize::from(!expected);
    }
    (agree, specs.len(), infeasible)
}

fn dem_pool(n: usize, seed: u64) -> Vec<Dem> {
    let g = RobotGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = [
        ObstacleSpec::new(Obstacle::Pallet { height: 0.12, length: 0.8 }, 1.0, 3.0),
        ObstacleSpec::new(Obstacle::StairsUp { riser: 0.15, tread: 0.3, steps: 3 }, 1.0, 3.0),
        ObstacleSpec::new(Obstacle::StairsDown { riser: 0.15, tread: 0.3, steps: 3 }, 1.0, 3.0),
        ObstacleSpec::new(Obstacle::Random { amplitude: 0.1, corr_length: 0.5 }, 1.0, 3.0),
    ];
    (0..n)
        .map(|i| {
            let w = generate_world(&specs[i % 4], seed * 10_000 + i as u64).unwrap();
            let x = w.start_x + rng.random_range(0.0..w.required_length);
            let f = [rng.random_range(-0.5..0.8); 4];
            extract_dem_sim(&w, &initial_state(&w, x, f, &g).unwrap(), &g)
        })
        .collect()
}

fn sensed(pool: &[Dem], seed: u64) -> Vec<Dem> {
    let g = RobotGeometry::default();
    let sp = SenseParams { noise_sigma: 0.02, dropout_base: 0.1, occlusion: true, seed };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.iter().map(|d| sense_dem(d, &sp, &g, &mut rng)).collect()
}

fn train_probe(real: &[Dem], sim: &[Dem]) -> Discriminator {
    let arch = CganArch::default();
    let mut probe = Discriminator::new(&arch, 99).unwrap();
    let mut opt = AdamState::new(&probe.net, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(98);
    for _ in 0..400 {
        probe.net.zero_grads();
        for _ in 0..8 {
            for (set, label) in [(real, 1.0), (sim, 0.0)] {
                let t = encode(&set[rng.random_range(0..set.len())]);
                let y = probe.net.forward(&dem_inputs(&t)).unwrap().data[0];
                let grad = (y - label) / (y * (1.0 - y)).max(1e-9) / 16.0;
                probe.net.backward(&Tensor::vector(vec![grad])).unwrap();
            }
        }
        adam_step(&mut opt, &mut probe.net).unwrap();
    }
    probe
}

fn criterion_8(r: &mut Report) {
    // disjoint pools: probe training, GAN training, held out
    let probe_real = sensed(&dem_pool(200, 1), 11);
    let probe_sim = dem_pool(200, 2);
    let gan_real = sensed(&dem_pool(200, 3), 13);
    let gan_sim = dem_pool(200, 4);
    let held_sim = dem_pool(200, 5);
    let held_real = sensed(&dem_pool(200, 6), 16);

    let probe = train_probe(&probe_real, &probe_sim);
    let is_real = |d: &Dem| probe.score(&encode(d)) > 0.5;
    let correct = held_real.iter().filter(|d| is_real(d)).count() + held_sim.iter().filter(|d| !is_real(d)).count();
    let accuracy = correct as f64 / 400.0;

    let hyper = CganHyper::default();
    let t0 = Instant::now();
    let trained = train_cyclegan(&gan_real, &gan_sim, &hyper).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let fooled = held_sim.iter().filter(|d| is_real(&trained.model.g.apply(d))).count() as f64 / held_sim.len() as f64;
    let raw = held_sim.iter().filter(|d| is_real(d)).count() as f64 / held_sim.len() as f64;

    let real_t: Vec<DemTensor> = held_real[..32].iter().map(encode).collect();
    let sim_t: Vec<DemTensor> = held_sim[..32].iter().map(encode).collect();
    let start = CycleGan::new(&hyper).unwrap();
    let cyc = |m: &CycleGan| cycle_loss(&m.g, &m.g_s, &m.d, &m.d_s, &real_t, &sim_t, &hyper);
    let (c0, c1) = (cyc(&start), cyc(&trained.model));
    let ok = accuracy >= PROBE_MIN_ACCURACY && fooled > FOOLED_MIN && raw < RAW_FOOLED_MAX && c1 < c0 && secs <= CGAN_SECONDS;
    r.line(
        "8",
        ok,
        true,
        &format!(
            "CGAN transfer: probe accuracy {accuracy:.3} (>= {PROBE_MIN_ACCURACY}); G(sim) judged real {fooled:.3} (> {FOOLED_MIN}) vs raw sim {raw:.3} (< {RAW_FOOLED_MAX}); held-out cycle loss {c0:.4} -> {c1:.4}; training {secs:.1} s (limit {CGAN_SECONDS} s)"
        ),
    );
}

fn criterion_9(r: &mut Report, cfg: &PipelineConfig, out: &PipelineOutput) {
    use Verdict::*;
    let fixtures: Vec<(Vec<Vec<Verdict>>, f64)> = vec![
        (vec![vec![Good; 16]; 8], 8.0),
        (vec![vec![Fail; 16]; 8], 0.0),
        (
            {
                let mut v = vec![vec![Good; 16]; 8];
                v[4] = [vec![Good; 8], vec![Fail; 8]].concat();
                v
            },
            7.5,
        ),
        (vec![vec![Unclear; 16]; 8], 4.0),
        (
            {
                let mut v = vec![vec![Fail; 16]; 8];
                v[0] = [vec![Good; 4], vec![Unclear; 4], vec![Fail; 8]].concat();
                v
            },
            0.375,
        ),
    ];
    let mut ok = fixtures.iter().all(|(v, want)| score_verdicts(v).1 == *want);
    let worlds: Vec<(String, World)> = cfg.test_worlds.iter().map(|e| (e.id.clone(), e.generate().unwrap())).collect();
    let e = evaluate(&Sequential, &out.iterations[0].policy, &worlds, cfg, 4, 5).unwrap();
    let (scores, sum) = score_verdicts(&e.verdicts);
    ok &= scores == e.scores && sum == e.sum && e.scores.iter().all(|s| (0.0..=1.0).contains(s)) && e.sum <= 8.0;
    r.line("9", ok, true, &format!("scoring arithmetic: {} verdict fixtures exact (8.0, 0.0, 7.5, 4.0, 0.375); evaluate() consistent, sum {} <= 8", fixtures.len(), e.sum));
}

fn same_bytes_after<T: serde::Serialize + serde::de::DeserializeOwned>(path: &Path, out: &Path, lines: bool) -> bool {
    if lines {
        let v: Vec<T> = io::read_jsonl(path).unwrap();
        io::write_jsonl(out, &v).unwrap();
    } else {
        let v: T = io::read_json(path).unwrap();
        io::write_json(out, &v).unwrap();
    }
    std::fs::read(path).unwrap() == std::fs::read(out).unwrap()
}

fn criterion_10(r: &mut Report, out: &PipelineOutput, tmp: &Path) {
    let dir = tmp.join("roundtrip");
    let run_dir = tmp.join("run_a");
    let mut ok = true;
    let mut n = 0;
    for e in test_worlds().iter().chain(&training_worlds()) {
        let p = dir.join(format!("{}.json", e.id));
        io::write_json(&p, &e.generate().unwrap()).unwrap();
        ok &= same_bytes_after::<World>(&p, &dir.join("w.json"), false);
        n += 1;
    }
    let mut files = vec![(run_dir.join("initial/plans.jsonl"), "traj"), (run_dir.join("real.jsonl"), "traj")];
    for k in 1..=out.iterations.len() {
        files.push((run_dir.join(format!("iter_{k}/plans.jsonl")), "traj"));
        files.push((run_dir.join(format!("iter_{k}/sim.jsonl")), "traj"));
        files.push((run_dir.join(format!("iter_{k}/policy.json")), "policy"));
        files.push((run_dir.join(format!("iter_{k}/cgan.json")), "cgan"));
    }
    for (p, kind) in &files {
        let o = dir.join("copy");
        ok &= match *kind {
            "traj" => same_bytes_after::<Trajectory>(p, &o, true),
            "policy" => same_bytes_after::<PolicyFile>(p, &o, false),
            _ => same_bytes_after::<CganFile>(p, &o, false),
        };
        n += 1;
    }
    let data = ImitationDataset::new(extract_dataset(&out.real, None), 1);
    let p = dir.join("dataset.json");
    io::write_json(&p, &data).unwrap();
    ok &= same_bytes_after::<ImitationDataset>(&p, &dir.join("d.json"), false);
    n += 1;
    let nan_dems = out.real.iter().flat_map(|t| &t.steps).filter(|s| s.dem.nan_count() > 0).count();
    r.line("10", ok, true, &format!("serialization: {n} worlds, checkpoints, datasets and trajectory logs byte-identical after write-read-write ({nan_dems} logged DEMs carry NaN)"));
}

fn main() {
    let tmp = std::env::temp_dir().join(format!("flipper-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&tmp);
    let mut r = Report { failed_asserted: Vec::new() };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    let (cfg, out) = criterion_4(&mut r, &tmp);
    criterion_5(&mut r, &out);
    criterion_6_7(&mut r, &out);
    criterion_8(&mut r);
    criterion_9(&mut r, &cfg, &out);
    criterion_10(&mut r, &out, &tmp);
    let _ = std::fs::remove_dir_all(&tmp);
    if !r.failed_asserted.is_empty() {
        eprintln!("acceptance failures: {:?}", r.failed_asserted);
        std::process::exit(1);
    }
}
