//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. The end-to-end benchmark dominates the runtime.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use vahf::dsp::{butterworth, dtw_distance, mel_spectrogram, AudioSegment, Cost, FilterKind};
use vahf::features::{imu_window, pairwise_mfcc_similarity, FeatureConfig, SampleFeatures};
use vahf::fmcw::{estimate_delay, generate_echo, FmcwConfig};
use vahf::harness::eval::{evaluate_cells, grid, reduced_gesture_eval, users};
use vahf::harness::{
    best_selector, dataset_features, simulate_dataset, simulate_features, EvalPlan, EvalReport, HarnessConfig,
    REDUCED_SET,
};
use vahf::model::{lr_at, train_branch, BranchInputs, BranchKind, TrainConfig, CLASSES};
use vahf::preprocess::{align_channels_with_shift, preprocess_session, ImuFrame, ImuStream, PreprocessConfig};
use vahf::simulate::{default_plans, make_session, SimConfig};
use vahf::{ChannelName, Exec, GestureLabel, ModelSelector, SensorCombo};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// Every monotone path from (0,0) to (n-1,m-1) with unit steps, by recursion.
fn brute_dtw(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
    let c = (a[i] - b[j]).abs();
    if i == 0 && j == 0 {
        return c;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(brute_dtw(a, b, i - 1, j));
    }
    if j > 0 {
        best = best.min(brute_dtw(a, b, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(brute_dtw(a, b, i - 1, j - 1));
    }
    c + best
}

fn dtw_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        // Small integers keep every partial sum exact.
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-8..=8) as f64).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-8..=8) as f64).collect();
        let col = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap();
        let fast = dtw_distance(col(&a).view(), col(&b).view(), Cost::Absolute).unwrap();
        if fast != brute_dtw(&a, &b, n - 1, m - 1) {
            mismatches += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        mismatches == 0 && el < Duration::from_secs(5),
        format!("{mismatches}/200 mismatches, {}", secs(el)),
    )
}

fn filter_response() -> Outcome {
    let t = Instant::now();
    let rate = 48_000.0;
    let n = 48_000;
    let sos = butterworth(FilterKind::Highpass, 8, 17_500.0, rate).unwrap();
    let mut impulse = vec![0.0; n];
    impulse[0] = 1.0;
    let h = sos.filter(&impulse);
    let mut spec: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut spec);
    // One-hertz bins.
    let power = |k: usize| spec[k].norm_sqr();
    let cutoff_db = 10.0 * power(17_500).log10();
    let band: Vec<f64> = (1..=8_000).map(power).collect();
    let band_db = -10.0 * (band.iter().sum::<f64>() / band.len() as f64).log10();
    let worst_db = -10.0 * band.iter().cloned().fold(0.0, f64::max).log10();

    // The same band energy measured on filtered white noise.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let out = sos.filter(&noise);
    let energy = |x: &[f64]| {
        let mut s: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut s);
        (1..=8_000).map(|k| s[k].norm_sqr()).sum::<f64>()
    };
    let noise_db = 10.0 * (energy(&noise) / energy(&out)).log10();
    let el = t.elapsed();
    outcome(
        (cutoff_db + 3.0).abs() <= 0.1 && band_db >= 40.0 && noise_db >= 40.0 && el < Duration::from_secs(5),
        format!(
            "cutoff {cutoff_db:.3} dB, stop band {band_db:.1} dB (worst bin {worst_db:.1} dB, noise {noise_db:.1} dB), {}",
            secs(el)
        ),
    )
}

fn fmcw_delay() -> Outcome {
    let t = Instant::now();
    let cfg = FmcwConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t0 = rng.random_range(0.1e-3..=3e-3);
        let rx = generate_echo(&cfg.chirp, t0, 0.5, 0.5, cfg.sample_rate).unwrap();
        let err = (estimate_delay(&rx, &cfg).unwrap() - t0).abs();
        worst = worst.max(err);
        if err <= 0.15e-3 {
            hits += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        hits >= 48 && el < Duration::from_secs(30),
        format!("{hits}/50 within 0.15 ms, worst {:.3} ms, {}", worst * 1e3, secs(el)),
    )
}

fn preprocessing_recovery() -> Outcome {
    let t = Instant::now();
    let sim = SimConfig::default();
    let pre = PreprocessConfig::default();
    let plans: Vec<_> = default_plans(3, 4).into_iter().take(20).collect();
    let mut worst_align = 0.0f64;
    let mut short_sessions = 0;
    let (mut vad_ok, mut vad_total) = (0, 0);
    for plan in &plans {
        let (rec, truth) = make_session(plan, &sim).unwrap();
        let (_, shift) = align_channels_with_shift(&rec, &pre.sync).unwrap();
        worst_align = worst_align.max((shift + truth.imu_offset).abs());
        let samples = preprocess_session(&rec, plan.user_id, plan.label, plan.posture, &plan.commands, &pre).unwrap();
        if samples.len() != 10 {
            short_sessions += 1;
        }
        for (s, gt) in samples.iter().zip(&truth.samples) {
            vad_total += 1;
            if (s.start - gt.utterance[0]).abs() <= 0.1 && (s.end - gt.utterance[1]).abs() <= 0.1 {
                vad_ok += 1;
            }
        }
    }
    let el = t.elapsed();
    let vad_rate = vad_ok as f64 / 200.0;
    outcome(
        worst_align <= 0.025 && short_sessions == 0 && vad_rate >= 0.95 && el < Duration::from_secs(120),
        format!(
            "alignment residual {:.1} ms, {short_sessions} sessions short of 10 samples, VAD {vad_ok}/{vad_total}, {}",
            worst_align * 1e3,
            secs(el)
        ),
    )
}

fn feature_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fails = Vec::new();
    let cfg = FeatureConfig::default();
    let noise = |secs: f64, rng: &mut ChaCha8Rng| {
        let n = (secs * 16_000.0) as usize;
        AudioSegment::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 16_000.0).unwrap()
    };
    for n in [1usize, 2, 3, 5] {
        let channels: BTreeMap<ChannelName, AudioSegment> = ChannelName::ALL
            .into_iter()
            .take(n + 1)
            .map(|c| (c, noise(0.8, &mut rng)))
            .collect();
        let len = pairwise_mfcc_similarity(&channels, 1.0, &cfg).unwrap().len();
        if len != n * (n + 1) / 2 {
            fails.push(format!("f_mfcc n={n}: {len}"));
        }
    }
    for d in [0.5, 3.0, 6.0] {
        let shape = mel_spectrogram(&noise(d, &mut rng)).unwrap().shape();
        if shape != (128, 250) {
            fails.push(format!("mel {d}s: {shape:?}"));
        }
    }
    for n in [100usize, 400, 600] {
        let stream = ImuStream::new(
            (0..n)
                .map(|i| ImuFrame {
                    t: i as f64 / 200.0,
                    accel: [0.0, 0.0, 9.81],
                    gyro: [0.0; 3],
                    quat: [1.0, 0.0, 0.0, 0.0],
                })
                .collect(),
        )
        .unwrap();
        let len = imu_window(&stream, 400).unwrap().len();
        if len != 4000 {
            fails.push(format!("imu {n}: {len}"));
        }
    }
    let pass = fails.is_empty();
    outcome(
        pass,
        if pass {
            "all shapes exact".into()
        } else {
            fails.join("; ")
        },
    )
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let errs = common::gradcheck::all();
    let (name, worst) = errs.iter().fold(
        ("", 0.0f64),
        |acc, (n, e)| if *e > acc.1 { (n.as_str(), *e) } else { acc },
    );
    let el = t.elapsed();
    outcome(
        worst <= common::gradcheck::TOLERANCE && el < Duration::from_secs(60),
        format!(
            "{} tensors x {} probes, worst {worst:.2e} ({name}), {}",
            errs.len(),
            common::gradcheck::PROBES,
            secs(el)
        ),
    )
}

fn gaussian_clusters(
    n: usize,
    dim: usize,
    classes: usize,
    spread: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f32>, Vec<usize>) {
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for &m in &centres[c] {
            let e: f64 = StandardNormal.sample(rng);
            x.push((m + spread * e) as f32);
        }
        y.push(c);
    }
    (x, y)
}

fn argmax(row: ndarray::ArrayView1<f32>) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
        .0
}

fn accuracy(logits: &Array2<f32>, labels: &[usize]) -> f64 {
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &y)| argmax(*r) == y)
        .count();
    hits as f64 / labels.len() as f64
}

fn training_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = TrainConfig::default();

    // Two gestures, one direction apart: the IMU-style MLP and a map branch.
    let (stats, labels) = gaussian_clusters(200, 40, 2, 0.3, &mut rng);
    let mlp_in = BranchInputs {
        kind: BranchKind::Imu,
        n: 200,
        map_shape: None,
        maps: Vec::new(),
        stats_len: 40,
        stats: stats.clone(),
        labels: labels.clone(),
    };
    let mlp = train_branch(&mlp_in, &cfg, 1).unwrap();
    let mlp_acc = accuracy(&mlp.logits(&mlp_in).unwrap(), &labels);
    let mlp_epochs = mlp.log.iter().filter(|l| l.stage == "imu").count();

    let shape = [2usize, 16, 25];
    let plane = shape.iter().product::<usize>();
    let pattern: Vec<f64> = (0..plane).map(|_| StandardNormal.sample(&mut rng)).collect();
    let maps: Vec<f32> = labels
        .iter()
        .flat_map(|&y| {
            let sign = if y == 0 { -1.0 } else { 1.0 };
            let noise: Vec<f64> = (0..plane).map(|_| StandardNormal.sample(&mut rng)).collect();
            pattern
                .iter()
                .zip(noise)
                .map(move |(p, e)| (sign * p + 0.5 * e) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    let map_in = BranchInputs {
        kind: BranchKind::Vocal,
        n: 200,
        map_shape: Some(shape),
        maps,
        stats_len: 40,
        stats,
        labels: labels.clone(),
    };
    let cnn = train_branch(&map_in, &cfg, 2).unwrap();
    let cnn_acc = accuracy(&cnn.logits(&map_in).unwrap(), &labels);
    let cnn_epochs = cnn.log.iter().filter(|l| l.stage == "vocal").count();

    // Nine classes with labels shuffled, then scored on held-out samples.
    let (x, y) = gaussian_clusters(1350, 40, CLASSES, 0.5, &mut rng);
    let mut shuffled = y.clone();
    shuffled.shuffle(&mut rng);
    let split = |lo: usize, hi: usize| BranchInputs {
        kind: BranchKind::Imu,
        n: hi - lo,
        map_shape: None,
        maps: Vec::new(),
        stats_len: 40,
        stats: x[lo * 40..hi * 40].to_vec(),
        labels: shuffled[lo..hi].to_vec(),
    };
    let (train, test) = (split(0, 450), split(450, 1350));
    let noise_model = train_branch(&train, &cfg, 3).unwrap();
    let held_out = accuracy(&noise_model.logits(&test).unwrap(), &test.labels);
    let chance = 1.0 / 9.0;

    outcome(
        mlp_acc == 1.0 && cnn_acc == 1.0 && mlp_epochs <= 100 && cnn_epochs <= 100 && (held_out - chance).abs() <= 0.08,
        format!(
            "separable: mlp {:.0}% in {mlp_epochs} epochs, map branch {:.0}% in {cnn_epochs} epochs; shuffled held-out {:.3} (chance {chance:.3})",
            mlp_acc * 100.0,
            cnn_acc * 100.0,
            held_out
        ),
    )
}

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let cfg = HarnessConfig::default().with_seed(2024);
    let eval = cfg.eval();
    let plans = default_plans(10, cfg.seed);
    let mut notes = Vec::new();

    let feats = simulate_features(&plans, &cfg.sim, &cfg.preprocess, &cfg.features, cfg.exec).unwrap();
    let data_time = t.elapsed();
    let ok_size = feats.len() == 900 && users(&feats).len() == 10;
    notes.push(format!("{} samples in {}", feats.len(), secs(data_time)));

    let g = grid(&feats, &eval).unwrap();
    let mask_ok = SensorCombo::ALL.iter().all(|&c| {
        ModelSelector::ALL
            .iter()
            .all(|&s| s.valid_for(c) == g.iter().any(|r| r.combo == c && r.selector == s))
    }) && g.len() == 17
        && !ModelSelector::U.valid_for(SensorCombo::Re)
        && !ModelSelector::I.valid_for(SensorCombo::LeReW)
        && ModelSelector::AllF.valid_for(SensorCombo::All4);
    let cell = |c, s| g.iter().find(|r| r.combo == c && r.selector == s).unwrap();
    let allf = cell(SensorCombo::All4, ModelSelector::AllF);
    let grid_summary: Vec<String> = g
        .iter()
        .map(|r| format!("{}/{} {:.1}", r.combo.as_str(), r.selector.as_str(), r.mean))
        .collect();
    eprintln!("grid: {}", grid_summary.join(", "));
    notes.push(format!("mask {}", if mask_ok { "ok" } else { "wrong" }));
    notes.push(format!("ALL-4ch/ALL-F {:.1}±{:.1}", allf.mean, allf.sd));
    let separable_ok = allf.mean >= 90.0;

    let best = best_selector(&g, SensorCombo::All4).unwrap();
    let reduced = reduced_gesture_eval(&feats, SensorCombo::All4, &REDUCED_SET, best, &eval).unwrap();
    notes.push(format!(
        "reduced ({}) {:.1}±{:.1}",
        best.as_str(),
        reduced.mean,
        reduced.sd
    ));
    let reduced_ok = reduced.mean >= 95.0;
    drop(feats);

    let confusable_sim = SimConfig {
        confusable: true,
        ..cfg.sim.clone()
    };
    let cfeats = simulate_features(&plans, &confusable_sim, &cfg.preprocess, &cfg.features, cfg.exec).unwrap();
    let sels = vec![
        ModelSelector::V,
        ModelSelector::U,
        ModelSelector::I,
        ModelSelector::AllF,
    ];
    let all: Vec<GestureLabel> = GestureLabel::all().collect();
    let conf = evaluate_cells(&cfeats, &[(SensorCombo::All4, sels)], &all, &eval).unwrap();
    let single = conf[..3].iter().map(|r| r.mean).fold(f64::MIN, f64::max);
    let fused = conf[3].mean;
    notes.push(format!(
        "confusable V {:.1} U {:.1} I {:.1} ALL-F {:.1}",
        conf[0].mean, conf[1].mean, conf[2].mean, fused
    ));
    let confusable_ok = fused >= single - 2.0;

    let el = t.elapsed();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    // Folds and combinations are independent jobs; with fewer than four cores
    // the wall time is scaled to four.
    let projected = el.as_secs_f64() * cores.min(4) as f64 / 4.0;
    notes.push(format!(
        "{} on {cores} core(s), {:.1} min projected on 4",
        secs(el),
        projected / 60.0
    ));
    let time_ok = projected <= 30.0 * 60.0;
    outcome(
        ok_size && mask_ok && separable_ok && reduced_ok && confusable_ok && time_ok,
        notes.join(", "),
    )
}

fn schedule() -> Outcome {
    let cfg = TrainConfig {
        lr0: 0.01,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for n in [1usize, 5, 10, 11, 30] {
        let want = if n <= 10 {
            0.1 * n as f64 * cfg.lr0
        } else {
            0.97f64.powf((n - 10) as f64) * cfg.lr0
        };
        let got = lr_at(n, &cfg).unwrap();
        worst = worst.max((got - want).abs() / want);
    }
    outcome(worst <= 1e-12, format!("worst relative error {worst:.1e}"))
}

fn full_run(dir: &std::path::Path, exec: Exec) -> String {
    let mut cfg = HarnessConfig::default().with_seed(99);
    cfg.users = 2;
    cfg.exec = exec;
    simulate_dataset(dir, &default_plans(cfg.users, cfg.seed), &cfg.sim, exec).unwrap();
    let feats: Vec<SampleFeatures> = dataset_features(dir, &cfg.preprocess, &cfg.features, exec).unwrap();
    let plan = EvalPlan {
        grid: true,
        reduced: true,
        ablation: true,
        ..Default::default()
    };
    let report = EvalReport::run(&feats, &cfg, &plan).unwrap();
    report.write(&dir.join("report")).unwrap();
    std::fs::read_to_string(dir.join("report/report.json")).unwrap()
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = full_run(a.path(), Exec::Parallel);
    let rb = full_run(b.path(), Exec::Sequential);
    outcome(
        ra == rb && !ra.is_empty(),
        format!(
            "{} bytes, {}, {}",
            ra.len(),
            if ra == rb { "identical" } else { "different" },
            secs(t.elapsed())
        ),
    )
}

fn main() {
    // `cargo test -- --list` should not start a long run; numeric arguments
    // pick a subset of criteria.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let picked: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("dtw matches brute force", dtw_oracle),
        ("butterworth highpass response", filter_response),
        ("fmcw delay recovery", fmcw_delay),
        ("preprocessing recovery", preprocessing_recovery),
        ("feature shapes", feature_contracts),
        ("gradient checks", gradient_checks),
        ("training sanity", training_sanity),
        ("end-to-end synthetic benchmark", end_to_end),
        ("learning-rate schedule", schedule),
        ("report determinism", determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !picked.is_empty() && !picked.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let r = run();
        if !r.pass {
            failed += 1;
        }
        println!(
            "[{:>2}] {} {name}: {}",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
