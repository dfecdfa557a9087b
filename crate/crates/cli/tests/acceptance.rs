//! Acceptance gate. Prints one verdict line per criterion followed by the
//! measurements behind it, and exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p geoblur --test acceptance`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use geoblur_core::blur::{BlurKind, BlurSpec, Label};
use geoblur_core::classify::{FeatureParams, Hyperparams};
use geoblur_core::features;
use geoblur_core::fft::{clear_estimate, fft2_shifted_magnitude};
use geoblur_core::gradient::{gradient_field, gradient_histograms, GradientOperator};
use geoblur_core::image::{encode_png, read_gray, to_float};
use geoblur_core::pipeline::{run_classify, run_extract, run_synth, run_train, Classifier, RunConfig};
use geoblur_core::svd::{blur_degree, singular_spectrum, singular_values_of};
use geoblur_core::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hyperparameters for the classifier criterion. The shipped default
/// `lambda = 1e-3` is too strong a regularizer for this corpus: the exact
/// optimum of that objective already misclassifies one clear image.
const C6_HYPERPARAMS: Hyperparams = Hyperparams { lambda: 1e-4, epochs: 2000, seed: 42 };

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>, details: Vec<String>) -> Self {
        Self { pass, summary: summary.into(), details }
    }
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/corpus")
}

fn corpus_paths() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    paths
}

fn corpus() -> Vec<(String, GrayImage)> {
    corpus_paths()
        .into_iter()
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), read_gray(&p).unwrap()))
        .collect()
}

fn blur(img: &GrayImage, kind: BlurKind, extent: u32) -> GrayImage {
    BlurSpec::new(kind, extent).apply(img).unwrap()
}

fn criterion_1(corpus: &[(String, GrayImage)]) -> Verdict {
    let params = FeatureParams::default();
    let mut details = Vec::new();
    let mut failing = 0;
    for (name, img) in corpus {
        for kind in [BlurKind::Spin, BlurKind::ShiftVertical] {
            let mut chain = vec![features::alpha(img, &params).unwrap()];
            for e in [1, 5, 10] {
                chain.push(features::alpha(&blur(img, kind, e), &params).unwrap());
            }
            let monotone = chain.windows(2).all(|w| w[0] >= w[1]);
            let strict = chain[0] > chain[3];
            if !(monotone && strict) {
                failing += 1;
            }
            details.push(format!(
                "{name:<10} {:<6} alpha I/1/5/10 = {:.3e} {:.3e} {:.3e} {:.3e}  nonincreasing={monotone} strict={strict}",
                kind.tag(),
                chain[0],
                chain[1],
                chain[2],
                chain[3]
            ));
        }
    }
    let chains = corpus.len() * 2;
    Verdict::new(
        failing == 0,
        format!("gradient ordering at sobel3/1000: {}/{chains} chains nonincreasing with a strict drop", chains - failing),
        details,
    )
}

fn criterion_2(corpus: &[(String, GrayImage)]) -> Verdict {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, img) in corpus {
        let base = singular_spectrum(img, Some(1024)).unwrap();
        let beta_i = blur_degree(&base, 50).unwrap().beta;
        for kind in [BlurKind::Spin, BlurKind::ShiftVertical] {
            let blurred = singular_spectrum(&blur(img, kind, 10), Some(1024)).unwrap();
            let beta_b = blur_degree(&blurred, 50).unwrap().beta;
            ok &= beta_b > beta_i;
            details.push(format!("{name:<10} {:<6} beta50 I={beta_i:.6} blur10={beta_b:.6}", kind.tag()));
        }
        let rank = base.values.len();
        let betas: Vec<f64> = [1, 10, 50, 300, rank].iter().map(|&k| blur_degree(&base, k).unwrap().beta).collect();
        let monotone = betas.windows(2).all(|w| w[0] <= w[1]);
        let full = (betas[4] - 1.0).abs() <= 1e-9;
        ok &= monotone && full;
        details.push(format!(
            "{name:<10} beta at k=1,10,50,300,{rank} = {:.6} {:.6} {:.6} {:.6} {:.12}",
            betas[0], betas[1], betas[2], betas[3], betas[4]
        ));
    }
    Verdict::new(ok, "blur raises beta50; beta nondecreasing in k; beta_rank = 1 within 1e-9", details)
}

fn criterion_3(corpus: &[(String, GrayImage)]) -> Verdict {
    let gamma = |img: &GrayImage| clear_estimate(&fft2_shifted_magnitude(img), 1000.0).unwrap().gamma;
    let mut details = Vec::new();
    let mut ordered = true;
    let mut wide_gap = 0;
    for (name, img) in corpus {
        let g = [gamma(img), gamma(&blur(img, BlurKind::Spin, 1)), gamma(&blur(img, BlurKind::Spin, 10))];
        let strict = g[0] > g[1] && g[1] > g[2];
        let ratio = g[0] / g[2];
        ordered &= strict;
        if ratio >= 10.0 {
            wide_gap += 1;
        }
        details.push(format!(
            "{name:<10} gamma I/spin1/spin10 = {:.6} {:.6} {:.6}  strict={strict} ratio={ratio:.2}",
            g[0], g[1], g[2]
        ));
    }
    Verdict::new(
        ordered && wide_gap >= 3,
        format!(
            "spectral ordering strict on all={ordered}; ratio >= 10 on {wide_gap}/{} (need >= 3)",
            corpus.len()
        ),
        details,
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut dft_worst = 0.0f64;
    for _ in 0..50 {
        let img = support::random_image(&mut rng, 16);
        let want = support::naive_shifted_magnitudes(to_float(&img).values(), img.height(), img.width());
        dft_worst = dft_worst.max(support::max_rel_err(fft2_shifted_magnitude(&img).magnitudes.values(), &want));
    }
    let mut sv_worst = 0.0f64;
    for _ in 0..50 {
        let (r, c) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let m = support::random_matrix(&mut rng, r, c);
        sv_worst = sv_worst.max(support::max_rel_err(&singular_values_of(&m).unwrap(), &support::gram_singular_values(&m)));
    }
    let mut ey_worst = 0.0f64;
    for _ in 0..20 {
        let m = support::random_matrix(&mut rng, 16, 16);
        let k = rng.gen_range(1..16);
        ey_worst = ey_worst.max(support::eckart_young_rel_err(&m, k));
    }
    Verdict::new(
        dft_worst <= 1e-9 && sv_worst <= 1e-8 && ey_worst <= 1e-6,
        "fast paths agree with reference computations",
        vec![
            format!("shifted DFT vs double sum, 50 images <= 16x16: max rel err {dft_worst:.2e} (limit 1e-9)"),
            format!("singular values vs Gram eigen, 50 matrices <= 64x64: max rel err {sv_worst:.2e} (limit 1e-8)"),
            format!("rank-k residual vs tail energy, 20 matrices 16x16: max rel err {ey_worst:.2e} (limit 1e-6)"),
        ],
    )
}

fn criterion_5(corpus: &[(String, GrayImage)]) -> Verdict {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, clear) in corpus {
        let variants = [
            ("clear", clear.clone()),
            ("spin10", blur(clear, BlurKind::Spin, 10)),
            ("vshift10", blur(clear, BlurKind::ShiftVertical, 10)),
        ];
        for (tag, img) in variants {
            let mn = img.len() as f64;
            let energy: f64 = img.pixels().iter().map(|&p| (p as f64).powi(2)).sum();
            let spectral: f64 = fft2_shifted_magnitude(&img).magnitudes.values().iter().map(|m| m * m).sum();
            let rel = (spectral - mn * energy).abs() / (mn * energy);
            let mut sums_ok = true;
            for op in [GradientOperator::Sobel3, GradientOperator::CentralDiff] {
                let h = gradient_histograms(&gradient_field(&img, op).unwrap());
                sums_ok &= h.magnitude.total() == img.len() as u64 && h.direction.total() == img.len() as u64;
            }
            ok &= rel <= 1e-6 && sums_ok;
            details.push(format!("{name:<10} {tag:<8} parseval rel err {rel:.2e}; histogram sums = MN: {sums_ok}"));
        }
    }
    Verdict::new(ok, "Parseval within 1e-6 and gradient histograms conserve pixel count", details)
}

fn accuracy_of(report: &geoblur_core::report::CorpusReport, expected: impl Fn(&str) -> Label) -> f64 {
    let hits = report.rows.iter().filter(|r| r.label == Some(expected(&r.path))).count();
    hits as f64 / report.rows.len() as f64
}

fn criterion_6() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = corpus_paths();
    let train_specs: Vec<BlurSpec> = [BlurKind::Spin, BlurKind::ShiftVertical]
        .into_iter()
        .flat_map(|k| [1, 10].map(|e| BlurSpec::new(k, e)))
        .collect();
    let held_specs = [BlurSpec::spin(5), BlurSpec::vshift(5)];
    let train_dir = tmp.path().join("train");
    let held_dir = tmp.path().join("held");
    let synth = run_synth(&inputs, &train_specs, &train_dir, 4).unwrap();
    run_synth(&inputs, &held_specs, &held_dir, 4).unwrap();

    let mut config = RunConfig::new(inputs.clone());
    config.inputs.push(train_dir.clone());
    let report = run_extract(&config).unwrap();
    let features_csv = tmp.path().join("features.csv");
    fs::write(&features_csv, report.to_csv_string().unwrap()).unwrap();

    let first = run_train(&features_csv, &synth.manifest_path, &C6_HYPERPARAMS).unwrap();
    let second = run_train(&features_csv, &synth.manifest_path, &C6_HYPERPARAMS).unwrap();
    let deterministic = first.model.to_json().unwrap() == second.model.to_json().unwrap();
    let default_run = run_train(&features_csv, &synth.manifest_path, &Hyperparams::default()).unwrap();

    let mut held = RunConfig::new(vec![held_dir]);
    held.globs = vec!["*__*.png".into()];
    let held_report = run_classify(&held, &Classifier::Model(Box::new(first.model.clone()))).unwrap();
    let held_acc = accuracy_of(&held_report, |_| Label::Blurry);

    Verdict::new(
        first.training_accuracy == 1.0 && held_acc >= 0.9 && deterministic,
        format!(
            "linear SVM: train {:.4} (need 1), held-out extent 5 {:.4} (need >= 0.9), repeatable={deterministic}",
            first.training_accuracy, held_acc
        ),
        vec![
            format!(
                "hyperparameters lambda={} epochs={} seed={}; {} training rows, {} held-out rows",
                C6_HYPERPARAMS.lambda,
                C6_HYPERPARAMS.epochs,
                C6_HYPERPARAMS.seed,
                first.samples,
                held_report.rows.len()
            ),
            format!("for reference, shipped defaults (lambda=1e-3, 200 epochs) reach train {:.4}", default_run.training_accuracy),
        ],
    )
}

fn geoblur(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_geoblur")).args(args).env_remove("GEOBLUR_THREADS").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn criterion_7() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("corpus");
    let inputs = corpus_paths();
    let specs = [BlurSpec::spin(1), BlurSpec::spin(10), BlurSpec::vshift(10)];
    run_synth(&inputs, &specs, &root, 4).unwrap();
    for p in &inputs {
        fs::copy(p, root.join(p.file_name().unwrap())).unwrap();
    }
    let root_s = root.to_str().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let csv = tmp.path().join(format!("t{threads}.csv"));
        let json = tmp.path().join(format!("t{threads}.json"));
        let (code, _) = geoblur(&[
            "extract", "--input", root_s, "--threads", threads, "--out", csv.to_str().unwrap(), "--json",
            json.to_str().unwrap(),
        ]);
        outputs.push((code, fs::read(&csv).unwrap(), fs::read(&json).unwrap()));
    }
    let identical = outputs[0].1 == outputs[1].1 && outputs[0].2 == outputs[1].2;
    let clean_exit = outputs.iter().all(|o| o.0 == 0);

    let png = fs::read(root.join("camera.png")).unwrap();
    fs::write(root.join("zz_truncated.png"), &png[..png.len() / 3]).unwrap();
    let csv = tmp.path().join("corrupt.csv");
    let (code, _) = geoblur(&["extract", "--input", root_s, "--out", csv.to_str().unwrap()]);
    let report = geoblur_core::report::CorpusReport::read_csv(fs::File::open(&csv).unwrap()).unwrap();
    let errors: Vec<_> = report.rows.iter().filter(|r| r.error.is_some()).collect();
    let isolated = code == 2 && errors.len() == 1 && errors[0].path.ends_with("zz_truncated.png");

    Verdict::new(
        identical && clean_exit && isolated,
        "extract is byte-identical across thread counts; one corrupt file gives exit 2 and one error row",
        vec![
            format!(
                "threads 1 vs 8 over {} files: csv {} bytes, json {} bytes, identical={identical}, exits={:?}",
                report.rows.len() - 1,
                outputs[0].1.len(),
                outputs[0].2.len(),
                outputs.iter().map(|o| o.0).collect::<Vec<_>>()
            ),
            format!(
                "with a truncated file: exit {code}, error rows {} ({})",
                errors.len(),
                errors.iter().map(|r| r.error.clone().unwrap_or_default()).collect::<Vec<_>>().join(",")
            ),
        ],
    )
}

fn criterion_8() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let (w, h) = (3000, 4000);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise: Vec<u8> = (0..w * h).map(|_| rng.gen_range(0..24)).collect();
    let img = GrayImage::from_fn(w, h, |x, y| {
        ((x / 7 + (y / 11) * 3 + ((x ^ y) & 31)) % 232) as u8 + noise[y * w + x]
    })
    .unwrap();
    let path = tmp.path().join("large.png");
    fs::write(&path, encode_png(&img).unwrap()).unwrap();
    let csv = tmp.path().join("large.csv");
    let start = Instant::now();
    let (code, err) = geoblur(&[
        "extract", "--input", path.to_str().unwrap(), "--svd-downscale", "1024", "--threads", "1", "--out",
        csv.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(30);
    Verdict::new(
        code == 0 && elapsed < limit,
        format!("3000x4000 extraction single-threaded in {:.2} s (limit 30 s)", elapsed.as_secs_f64()),
        vec![format!("exit {code}{}", if err.is_empty() { String::new() } else { format!(", stderr: {}", err.trim()) })],
    )
}

fn main() -> ExitCode {
    // Any cargo-test flags (filters, --nocapture) are ignored: the gate always
    // runs every criterion.
    let corpus = corpus();
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("C1", Box::new(|| criterion_1(&corpus))),
        ("C2", Box::new(|| criterion_2(&corpus))),
        ("C3", Box::new(|| criterion_3(&corpus))),
        ("C4", Box::new(criterion_4)),
        ("C5", Box::new(|| criterion_5(&corpus))),
        ("C6", Box::new(criterion_6)),
        ("C7", Box::new(criterion_7)),
        ("C8", Box::new(criterion_8)),
    ];
    println!("acceptance over {} corpus images", corpus.len());
    let mut failed = Vec::new();
    for (id, run) in &criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Verdict::new(false, "panicked while evaluating", Vec::new()));
        let word = if verdict.pass { "PASS" } else { "FAIL" };
        println!("{id} {word}: {} [{:.1} s]", verdict.summary, start.elapsed().as_secs_f64());
        for line in &verdict.details {
            println!("    {line}");
        }
        if !verdict.pass {
            failed.push(*id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing {}", failed.join(" "));
        ExitCode::FAILURE
    }
}
