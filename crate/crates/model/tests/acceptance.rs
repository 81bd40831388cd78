//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line
//! (run with `--nocapture` to see them) and then asserts the verdict.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slogan_core::eval::{frechet_distance, FeatureStats};
use slogan_core::render::normalize_width;
use slogan_core::toy::toy_samples;
use slogan_core::{Charset, Dataset, LabeledSample, WriterMap};
use slogan_model::config::LossSwitches;
use slogan_model::losses;
use slogan_model::{
    ArchConfig, Batch, Checkpoint, LossTerm, Mode, Networks, Part, StyleChoice, SynthesisRequest,
    Synthesizer, Trainer, TrainingConfig,
};
use tch::{Device, Kind, Tensor};

// Pinned tolerances.
const ATTENTION_TOL: f64 = 1e-5;
const LOSS_REL_TOL: f64 = 1e-6;
const FRECHET_TOL: f64 = 1e-8;
const GRAD_REL_TOL: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;
const SHAPE_BUDGET_S: f64 = 1.0;
const TOY_MAX_ITERS: u64 = 2000;
const TOY_BUDGET_S: f64 = 30.0 * 60.0;
const TOY_EVAL_EVERY: u64 = 100;
const TOY_CHAR_ACC: f64 = 0.95;
const TOY_WRITER_ACC: f64 = 0.90;
const TOY_DECODE_RATE: f64 = 0.90;
const TOY_IDT: f64 = 0.01;
const SAMPLE_MEAN_TOL: f64 = 0.05;

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n:>2} {title}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn toy_dataset(writers: usize) -> Dataset {
    let raw = toy_samples(40, 1).unwrap();
    let charset = Charset::from_transcripts(raw.iter().map(|s| s.0.as_str()));
    let ids: Vec<String> = (0..writers).map(|w| format!("w{w}")).collect();
    let samples = raw
        .into_iter()
        .enumerate()
        .map(|(i, (transcript, w, image))| {
            let w = if writers == 2 { w } else { i % writers };
            LabeledSample {
                image,
                transcript,
                writer_id: ids[w].clone(),
                writer_index: w,
            }
        })
        .collect();
    Dataset {
        samples,
        writers: WriterMap::from_ids(ids).unwrap(),
        charset,
    }
}

fn lowercase_nets(arch: ArchConfig, writers: usize, seed: u64) -> Networks {
    let ids: Vec<String> = (0..writers).map(|w| format!("writer{w}")).collect();
    Networks::new(
        arch,
        Charset::new("abcdefghijklmnopqrstuvwxyz".chars()).unwrap(),
        WriterMap::from_ids(ids).unwrap(),
        seed,
    )
    .unwrap()
}

fn bits(nets: &Networks, parts: &[Part]) -> Vec<(String, Vec<u64>)> {
    parts
        .iter()
        .flat_map(|&p| nets.named(p).into_iter().map(move |(n, t)| (format!("{}.{n}", p.name()), t)))
        .map(|(n, t)| {
            let v = Vec::<f64>::try_from(t.to_kind(Kind::Double).flatten(0, -1)).unwrap();
            (n, v.into_iter().map(f64::to_bits).collect())
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_architecture_shapes() {
    let nets = lowercase_nets(ArchConfig::default(), 5, 3);
    let x = Tensor::rand([1, 3, 64, 400], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
    let z = Tensor::zeros([1, 256], (Kind::Float, Device::Cpu));
    let start = Instant::now();
    let mut gen_trace = Vec::new();
    let out = tch::no_grad(|| {
        nets.generator
            .forward_traced(&x, &z, Mode::Eval, Some(&mut gen_trace))
            .unwrap()
    });
    let disc_trace = tch::no_grad(|| nets.discriminators.trace_shapes(&x).unwrap());
    let elapsed = start.elapsed().as_secs_f64();

    let res = [256, 4, 25];
    let expected_gen: Vec<(&str, [i64; 3])> = vec![
        ("enc0", [16, 64, 400]),
        ("enc1", [32, 32, 200]),
        ("enc2", [64, 16, 100]),
        ("enc3", [128, 8, 50]),
        ("enc4", [256, 4, 25]),
        ("res0", res),
        ("res1", res),
        ("res2", res),
        ("fuse", res),
        ("res3", res),
        ("res4", res),
        ("res5", res),
        ("dec0", [128, 8, 50]),
        ("dec1", [64, 16, 100]),
        ("dec2", [32, 32, 200]),
        ("dec3", [16, 64, 400]),
        ("dec4", [3, 64, 400]),
    ];
    let expected_disc: Vec<(&str, [i64; 3])> = vec![
        ("trunk0", [16, 32, 200]),
        ("trunk1", [64, 16, 100]),
        ("trunk2", [128, 8, 50]),
        ("trunk3", [128, 4, 25]),
        ("char0", [192, 2, 25]),
        ("char1", [256, 2, 25]),
        ("char2", [256, 2, 25]),
        ("join_adv0", [64, 2, 13]),
        ("join_adv1", [16, 2, 13]),
        ("join_adv2", [1, 2, 13]),
        ("join_id0", [192, 2, 13]),
        ("join_id1", [256, 1, 7]),
        ("join_id2", [5, 1, 1]),
    ];
    let mut mismatches = Vec::new();
    for (trace, expected) in [(&gen_trace, &expected_gen), (&disc_trace, &expected_disc)] {
        if trace.len() != expected.len() {
            mismatches.push(format!("{} rows traced, {} expected", trace.len(), expected.len()));
        }
        for ((name, shape), (ename, eshape)) in trace.iter().zip(expected.iter()) {
            let want = [1, eshape[0], eshape[1], eshape[2]];
            if name != ename || shape[..] != want[..] {
                mismatches.push(format!("{name} {shape:?} vs {ename} {want:?}"));
            }
        }
    }
    let logits = tch::no_grad(|| nets.discriminators.join_id(&x).unwrap());
    if logits.size() != [1, 5] {
        mismatches.push(format!("writer logits {:?}", logits.size()));
    }
    if out.size() != [1, 3, 64, 400] {
        mismatches.push(format!("generator output {:?}", out.size()));
    }
    let pass = mismatches.is_empty() && elapsed < SHAPE_BUDGET_S;
    verdict(
        1,
        "architecture shapes",
        pass,
        &format!(
            "{} rows checked, {} mismatches {:?}, {elapsed:.3}s",
            expected_gen.len() + expected_disc.len() + 2,
            mismatches.len(),
            mismatches
        ),
    );
}

#[test]
fn criterion_02_attention_normalization() {
    let nets = lowercase_nets(ArchConfig::default(), 2, 4);
    let d = &nets.discriminators;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut steps = 0usize;
    for _ in 0..10 {
        let x = Tensor::rand([10, 3, 64, 400], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
        let texts: Vec<String> = (0..10)
            .map(|_| {
                let len = rng.random_range(1..=12);
                (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
            })
            .collect();
        let (labels, _) = slogan_model::trainer::encode_labels(&nets.charset, &texts, Kind::Float).unwrap();
        let dec = tch::no_grad(|| d.char_decode(&x, &labels).unwrap());
        let sums = dec.attention.to_kind(Kind::Double).sum_dim_intlist([2, 3].as_slice(), false, Kind::Double);
        let dev = (sums - 1.0).abs().max().double_value(&[]);
        worst = worst.max(dev);
        steps += labels.size().iter().product::<i64>() as usize;
    }
    verdict(
        2,
        "attention normalization",
        worst <= ATTENTION_TOL,
        &format!("100 images, {steps} steps, max |sum-1| = {worst:.2e}"),
    );
}

#[test]
fn criterion_03_loss_oracles() {
    let d = (Kind::Double, Device::Cpu);
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        let ok = if want == 0.0 { got.abs() <= LOSS_REL_TOL } else { rel_err(got, want) <= LOSS_REL_TOL };
        if !ok {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };

    // char content
    let (b, t, c) = (2i64, 3i64, 5i64);
    let labels = Tensor::from_slice(&[0i64, 3, 4, 1, 2, 4]).view([b, t]);
    let mask = Tensor::ones([b, t], d);
    let onehot = labels.one_hot(c).to_kind(Kind::Double) * 60.0;
    let v = losses::value(&losses::char_content_loss(&onehot, &labels, &mask).unwrap());
    check("content one-hot <= 1e-6", if v <= 1e-6 { 0.0 } else { v }, 0.0);
    let v = losses::value(&losses::char_content_loss(&Tensor::zeros([b, t, c], d), &labels, &mask).unwrap());
    check("content uniform", v, t as f64 * (c as f64).ln());
    let v = losses::value(
        &losses::char_content_loss(
            &Tensor::zeros([1, 1, 2], d),
            &Tensor::from_slice(&[1i64]).view([1, 1]),
            &Tensor::ones([1, 1], d),
        )
        .unwrap(),
    );
    check("content p=0.5", v, std::f64::consts::LN_2);

    // char adversarial
    let ones = Tensor::ones([2, 4], d);
    let zeros = Tensor::zeros([2, 4], d);
    let (dl, _) = losses::char_adv_losses(&ones, &zeros, 0.1).unwrap();
    check("char adv perfect D", losses::value(&dl), 0.0);
    let (_, gl) = losses::char_adv_losses(&zeros, &ones, 0.1).unwrap();
    check("char adv fooled G", losses::value(&gl), 0.0);
    let (dl, _) = losses::char_adv_losses(&zeros, &ones, 0.1).unwrap();
    check("char adv real 0 fake 1", losses::value(&dl), 0.2);

    // join adversarial
    let g1 = Tensor::ones([3, 1, 2, 13], d);
    let g0 = Tensor::zeros([3, 1, 2, 13], d);
    check("join adv perfect D", losses::value(&losses::join_adv_d_loss(&g1, &g0)), 0.0);
    check("join adv fooled G", losses::value(&losses::join_adv_g_loss(&g1)), 0.0);
    check("join adv real 0 fake 1", losses::value(&losses::join_adv_d_loss(&g0, &g1)), 2.0);

    // writer id
    let onehot = Tensor::from_slice(&[1i64, 0, 2]).one_hot(3).to_kind(Kind::Double) * 60.0;
    let v = losses::value(&losses::join_id_loss(&onehot, &[1, 0, 2]).unwrap());
    check("join id one-hot <= 1e-6", if v <= 1e-6 { 0.0 } else { v }, 0.0);
    let v = losses::value(&losses::join_id_loss(&Tensor::zeros([2, 4], d), &[3, 1]).unwrap());
    check("join id uniform", v, 4f64.ln());

    // identity
    let x = Tensor::rand([2, 3, 64, 32], d) * 2.0 - 1.0;
    check("identity of identity map", losses::value(&losses::identity_loss(&x, &x).unwrap()), 0.0);
    let v = losses::value(
        &losses::identity_loss(&Tensor::ones([2, 3, 64, 32], d), &(Tensor::ones([2, 3, 64, 32], d) * -1.0)).unwrap(),
    );
    check("identity +1 vs -1", v, 4.0);

    // schedule
    let cfg = TrainingConfig::default();
    check("lr_at 0", cfg.lr_at(0), 1e-4);
    check("lr_at 450000", cfg.lr_at(450_000), 5.5e-5);
    check("lr_at 600000", cfg.lr_at(600_000), 1e-5);

    // Frechet distance
    let stats = |mu: &[f64], var: &[f64]| {
        FeatureStats::new(
            DVector::from_column_slice(mu),
            DMatrix::from_diagonal(&DVector::from_column_slice(var)),
            10,
        )
        .unwrap()
    };
    let mut fd = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > FRECHET_TOL {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };
    let a = stats(&[0.3, -1.2], &[2.0, 0.5]);
    fd("frechet identical", frechet_distance(&a, &a).unwrap(), 0.0);
    fd("frechet 1-d", frechet_distance(&stats(&[0.0], &[1.0]), &stats(&[1.0], &[1.0])).unwrap(), 1.0);
    // (0-2)^2 + 1 + 9 - 2*3  plus  (1-0)^2 + 4 + 1 - 2*2
    fd(
        "frechet diagonal",
        frechet_distance(&stats(&[0.0, 1.0], &[1.0, 4.0]), &stats(&[2.0, 0.0], &[9.0, 1.0])).unwrap(),
        10.0,
    );

    verdict(3, "loss oracles", failures.is_empty(), &format!("22 oracles, failures {failures:?}"));
}

fn bump(var: &Tensor, index: i64, delta: f64) {
    tch::no_grad(|| {
        let _ = var.view([-1]).narrow(0, index, 1).g_add_scalar_(delta);
    });
}

#[test]
fn criterion_04_gradient_flow() {
    let ds = toy_dataset(3);
    let config = TrainingConfig {
        batch_size: 3,
        image_width: 48,
        max_decode_len: 6,
        ..TrainingConfig::default()
    };
    let mut t = Trainer::with_arch(config.clone(), ArchConfig::micro(), &ds).unwrap();
    t.nets.to_double();
    let batch = t.batch_at(0).unwrap();
    let objective = |t: &Trainer| t.generator_objective(&batch, Mode::Train).unwrap().double_value(&[]);

    t.nets.zero_grad(Part::Gen);
    t.nets.zero_grad(Part::Bank);
    t.generator_objective(&batch, Mode::Train).unwrap().backward();

    // Largest-gradient element of the first batched writer's column, and of
    // a decoder weight.
    let table = t.nets.bank.table.shallow_clone();
    let n = table.size()[1];
    let col = batch.writers[0] as i64;
    let col_grad = table.grad().select(1, col);
    let k = col_grad.abs().argmax(None, false).int64_value(&[]);
    let bank_index = k * n + col;
    let bank_analytic = col_grad.double_value(&[k]);

    let (gen_name, gen_var) = t
        .nets
        .trainable(Part::Gen)
        .into_iter()
        .find(|(name, _)| name.starts_with("dec1") && name.ends_with("weight"))
        .expect("decoder weight");
    let g = gen_var.grad().view([-1]);
    let gen_index = g.abs().argmax(None, false).int64_value(&[]);
    let gen_analytic = g.double_value(&[gen_index]);

    let fd = |var: &Tensor, index: i64| {
        bump(var, index, FD_STEP);
        let plus = objective(&t);
        bump(var, index, -2.0 * FD_STEP);
        let minus = objective(&t);
        bump(var, index, FD_STEP);
        (plus - minus) / (2.0 * FD_STEP)
    };
    let bank_numeric = fd(&table, bank_index);
    let gen_numeric = fd(&gen_var, gen_index);
    let bank_err = rel_err(bank_numeric, bank_analytic);
    let gen_err = rel_err(gen_numeric, gen_analytic);

    // Absent writers: a column with live optimizer moments must not move
    // when its writer is missing from the batch.
    let mut t = Trainer::with_arch(config.clone(), ArchConfig::micro(), &ds).unwrap();
    let images: Vec<_> = ds.samples[..3]
        .iter()
        .map(|s| normalize_width(&s.image, config.image_width).unwrap())
        .collect();
    let texts: Vec<String> = ds.samples[..3].iter().map(|s| s.transcript.clone()).collect();
    let make = |t: &mut Trainer, writers: Vec<usize>| {
        let prints: Vec<_> = texts.iter().map(|s| t.print_image(s, config.print_interval_px).unwrap()).collect();
        Batch::new(&t.nets.charset, Kind::Float, &images, &texts, writers, &prints, texts.clone()).unwrap()
    };
    let all = make(&mut t, vec![0, 1, 2]);
    let partial = make(&mut t, vec![0, 1, 0]);
    t.g_step(&all).unwrap();
    let before = t.nets.bank.table.copy();
    t.g_step(&partial).unwrap();
    let after = t.nets.bank.table.copy();
    let absent_same = before.select(1, 2).equal(&after.select(1, 2));
    let present_moved = !before.select(1, 0).equal(&after.select(1, 0)) && !before.select(1, 1).equal(&after.select(1, 1));

    let pass = bank_err <= GRAD_REL_TOL && gen_err <= GRAD_REL_TOL && absent_same && present_moved;
    verdict(
        4,
        "gradient flow",
        pass,
        &format!(
            "bank[{k},{col}] analytic {bank_analytic:.6e} numeric {bank_numeric:.6e} rel {bank_err:.1e}; \
             gen {gen_name}[{gen_index}] analytic {gen_analytic:.6e} numeric {gen_numeric:.6e} rel {gen_err:.1e}; \
             absent column unchanged {absent_same}, present columns moved {present_moved}"
        ),
    );
}

#[test]
fn criterion_05_alternation_isolation() {
    let ds = toy_dataset(2);
    let config = TrainingConfig {
        batch_size: 4,
        image_width: 48,
        max_decode_len: 6,
        ..TrainingConfig::default()
    };
    let mut t = Trainer::with_arch(config, ArchConfig::micro(), &ds).unwrap();
    let mut problems = Vec::new();
    for it in 0..20u64 {
        let batch = t.batch_at(it).unwrap();
        let g0 = bits(&t.nets, &[Part::Gen, Part::Bank]);
        let d0 = bits(&t.nets, &[Part::Disc]);
        t.d_step(&batch).unwrap();
        let g1 = bits(&t.nets, &[Part::Gen, Part::Bank]);
        let d1 = bits(&t.nets, &[Part::Disc]);
        if g0 != g1 {
            problems.push(format!("iteration {it}: d_step changed G or bank"));
        }
        if d0 == d1 {
            problems.push(format!("iteration {it}: d_step left D unchanged"));
        }
        t.g_step(&batch).unwrap();
        let g2 = bits(&t.nets, &[Part::Gen, Part::Bank]);
        let d2 = bits(&t.nets, &[Part::Disc]);
        if d1 != d2 {
            problems.push(format!("iteration {it}: g_step changed D"));
        }
        if g1 == g2 {
            problems.push(format!("iteration {it}: g_step left G unchanged"));
        }
        t.set_iteration(it + 1);
    }
    verdict(5, "alternation isolation", problems.is_empty(), &format!("20 iterations, problems {problems:?}"));
}

#[test]
fn criterion_06_toy_overfit() {
    let ds = toy_dataset(2);
    let config = TrainingConfig {
        batch_size: 8,
        image_width: 96,
        max_decode_len: 6,
        arch_scale: 1,
        ..TrainingConfig::default()
    };
    let mut t = Trainer::new(config, &ds).unwrap();
    let probe_texts: Vec<String> = (0..50).map(|i| ds.samples[i % 40].transcript.clone()).collect();
    let probe_writers: Vec<usize> = (0..50).map(|i| i % 2).collect();
    let start = Instant::now();
    let mut log = String::new();
    let mut last = (0.0, 0.0, 0.0, f64::INFINITY);
    let mut met = false;
    while t.iteration() < TOY_MAX_ITERS {
        t.step().unwrap();
        if t.iteration() % TOY_EVAL_EVERY != 0 {
            continue;
        }
        let char_acc = t.char_accuracy(&ds.samples).unwrap();
        let writer_acc = t.writer_accuracy(&ds.samples).unwrap();
        let idt = t.identity_loss_on(&ds.samples).unwrap();
        let decoded = t.decode_generated(&probe_texts, &probe_writers).unwrap();
        let hits = decoded.iter().zip(&probe_texts).filter(|(a, b)| a == b).count();
        let rate = hits as f64 / probe_texts.len() as f64;
        let _ = writeln!(
            log,
            "  iter {:>4} {:>6.0}s char {char_acc:.3} writer {writer_acc:.3} decode {hits}/50 idt {idt:.4}",
            t.iteration(),
            start.elapsed().as_secs_f64()
        );
        last = (char_acc, writer_acc, rate, idt);
        if char_acc >= TOY_CHAR_ACC && writer_acc >= TOY_WRITER_ACC && rate >= TOY_DECODE_RATE && idt <= TOY_IDT {
            met = true;
            break;
        }
        if start.elapsed().as_secs_f64() > TOY_BUDGET_S {
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    print!("{log}");
    let (char_acc, writer_acc, rate, idt) = last;
    verdict(
        6,
        "toy overfit",
        met && elapsed <= TOY_BUDGET_S,
        &format!(
            "{} iterations in {elapsed:.0}s; char {char_acc:.3} (>= {TOY_CHAR_ACC}), writer {writer_acc:.3} \
             (>= {TOY_WRITER_ACC}), decode {rate:.2} (>= {TOY_DECODE_RATE}), idt {idt:.4} (<= {TOY_IDT})",
            t.iteration()
        ),
    );
}

fn expected_terms(s: &LossSwitches) -> Vec<&'static str> {
    let mut v = Vec::new();
    for (on, d, g) in [
        (s.char_content, Some(LossTerm::DCharContent), LossTerm::GCharContent),
        (s.char_adv, Some(LossTerm::DCharAdv), LossTerm::GCharAdv),
        (s.join_adv, Some(LossTerm::DJoinAdv), LossTerm::GJoinAdv),
        (s.join_id, Some(LossTerm::DJoinId), LossTerm::GJoinId),
        (s.idt, None, LossTerm::GIdt),
    ] {
        if on {
            v.extend(d.map(LossTerm::name));
            v.push(g.name());
        }
    }
    v.sort_unstable();
    v
}

#[test]
fn criterion_07_ablation_plumbing() {
    let ds = toy_dataset(2);
    let dir = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    for row in 1..=5 {
        let switches = LossSwitches::ablation_row(row).unwrap();
        let config = TrainingConfig {
            batch_size: 8,
            image_width: 96,
            max_decode_len: 6,
            switches,
            ..TrainingConfig::default()
        };
        let path = dir.path().join(format!("row{row}.log"));
        let mut file = std::fs::File::create(&path).unwrap();
        let mut t = Trainer::with_arch(config, ArchConfig::micro(), &ds).unwrap();
        for _ in 0..100 {
            match t.step() {
                Ok(r) => writeln!(file, "{r}").unwrap(),
                Err(e) => {
                    problems.push(format!("row {row}: {e}"));
                    break;
                }
            }
        }
        drop(file);
        let want = expected_terms(&switches);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != 100 {
            problems.push(format!("row {row}: {} log lines", lines.len()));
        }
        for line in lines {
            let mut names: Vec<&str> = line.split_whitespace().skip(1).map(|f| f.split('=').next().unwrap()).collect();
            names.sort_unstable();
            let finite = line
                .split_whitespace()
                .skip(1)
                .all(|f| f.split('=').nth(1).and_then(|v| v.parse::<f64>().ok()).is_some_and(f64::is_finite));
            if names != want || !finite {
                problems.push(format!("row {row}: logged {line:?}, expected terms {want:?}"));
                break;
            }
        }
    }
    verdict(7, "ablation plumbing", problems.is_empty(), &format!("5 rows x 100 iterations, problems {problems:?}"));
}

#[test]
fn criterion_08_oov_and_length() {
    let non_word = "qxzvkjwpfy";
    let sentence = "the quick brown fox jumps over the lazy dog and then it naps";
    assert_eq!((non_word.len(), sentence.len()), (10, 60));
    let synth = Synthesizer::new(lowercase_nets(ArchConfig::default(), 3, 8), TrainingConfig::default());
    let twin = Synthesizer::new(lowercase_nets(ArchConfig::default(), 3, 8), TrainingConfig::default());
    let mut problems = Vec::new();
    let mut widths = Vec::new();
    for text in [non_word, sentence] {
        for style in [StyleChoice::Writer(1), StyleChoice::Random { seed: 17 }] {
            let req = SynthesisRequest::new(text, style);
            let print = synth.conditioning(&req).unwrap();
            match synth.generate(&req) {
                Ok(out) => {
                    if out.width() != print.width() || out.height() != 64 {
                        problems.push(format!("{text:?}: output {:?} vs conditioning {:?}", out.shape(), print.shape()));
                    }
                    if out != synth.generate(&req).unwrap() || out != twin.generate(&req).unwrap() {
                        problems.push(format!("{text:?}: rerun differs"));
                    }
                    widths.push(out.width());
                }
                Err(e) => problems.push(format!("{text:?}: {e}")),
            }
        }
    }
    verdict(
        8,
        "OOV and arbitrary length",
        problems.is_empty(),
        &format!("widths {widths:?}, problems {problems:?}"),
    );
}

#[test]
fn criterion_09_bounded_sampling() {
    let nets = lowercase_nets(ArchConfig::default(), 3, 9);
    let bounds = nets.bank.bounds().unwrap();
    let mid = bounds.midpoint();
    let d = nets.bank.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sums = vec![0.0f64; d];
    let mut outside = 0usize;
    const N: usize = 10_000;
    for _ in 0..N {
        let z = nets.bank.sample_style(&mut rng).unwrap();
        for (k, &v) in z.values.iter().enumerate() {
            if v < bounds.lo[k] || v > bounds.hi[k] {
                outside += 1;
            }
            sums[k] += v as f64;
        }
    }
    let worst = (0..d)
        .map(|k| {
            let width = (bounds.hi[k] - bounds.lo[k]) as f64;
            let off = (sums[k] / N as f64 - mid[k] as f64).abs();
            if width == 0.0 { off } else { off / width }
        })
        .fold(0.0f64, f64::max);
    verdict(
        9,
        "bounded style sampling",
        outside == 0 && worst <= SAMPLE_MEAN_TOL,
        &format!("{N} samples x {d} dims, {outside} out of bounds, worst mean offset {:.3}% of box width", worst * 100.0),
    );
}

#[test]
fn criterion_10_checkpoint_round_trip() {
    let ds = toy_dataset(2);
    let config = TrainingConfig {
        batch_size: 4,
        image_width: 48,
        max_decode_len: 6,
        ..TrainingConfig::default()
    };
    let mut t = Trainer::with_arch(config, ArchConfig::micro(), &ds).unwrap();
    for _ in 0..3 {
        t.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let original = Checkpoint::from_trainer(&t);
    original.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let restored = loaded.into_trainer(&ds).unwrap();

    let probe = Tensor::rand([2, 3, 64, 96], (Kind::Float, Device::Cpu)) * 2.0 - 1.0;
    let z = t.nets.bank.select(&[0, 1]).unwrap();
    let forward = |nets: &Networks, mode| tch::no_grad(|| nets.generator.forward(&probe, &z, mode).unwrap());
    let mut problems = Vec::new();
    for mode in [Mode::Eval, Mode::TrainFrozenStats] {
        if !forward(&t.nets, mode).equal(&forward(&restored.nets, mode)) {
            problems.push(format!("{mode:?} forward differs"));
        }
    }
    if restored.iteration() != t.iteration() {
        problems.push("iteration differs".into());
    }
    if Checkpoint::from_trainer(&restored).to_bytes().unwrap() != original.to_bytes().unwrap() {
        problems.push("re-serialized state differs".into());
    }

    let bytes = std::fs::read(&path).unwrap();
    let mut corrupt: Vec<(&str, Vec<u8>, &str)> = Vec::new();
    let mut b = bytes.clone();
    b[..4].copy_from_slice(b"XXXX");
    corrupt.push(("wrong magic", b, "magic"));
    let mut b = bytes.clone();
    b[4..8].copy_from_slice(&2u32.to_le_bytes());
    corrupt.push(("next version", b, "version 2"));
    corrupt.push(("truncated", bytes[..bytes.len() / 2].to_vec(), "truncated"));
    let mut b = bytes.clone();
    let mid = b.len() / 2;
    b[mid] ^= 0x10;
    corrupt.push(("flipped bit", b, "checksum"));
    let mut rejected = 0;
    for (what, data, needle) in corrupt {
        let p = dir.path().join("bad.ckpt");
        std::fs::File::create(&p).unwrap().write_all(&data).unwrap();
        match Checkpoint::load(&p) {
            Ok(_) => problems.push(format!("{what}: accepted")),
            Err(e) if !e.to_string().contains(needle) => problems.push(format!("{what}: diagnostic {e:?}")),
            Err(_) => rejected += 1,
        }
    }
    let names: BTreeSet<_> = loaded.tensors.keys().map(|p| p.name()).collect();
    verdict(
        10,
        "checkpoint round trip",
        problems.is_empty(),
        &format!("parts {names:?}, {rejected}/4 corruptions rejected, problems {problems:?}"),
    );
}
