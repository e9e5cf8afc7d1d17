use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use anet::manifest::{DatasetManifest, MaskRef};
use anet::metrics::{evaluate_dataset, ReportRow, SampleScores};
use anet::model::{checkpoint, AnetModel, BackboneRegistry};
use anet::{raster, CamoMap, ClassLabel, Split};

const BIN: &str = env!("CARGO_BIN_EXE_anet");
const SMALL: [&str; 14] = [
    "--set",
    "model.height=32",
    "--set",
    "model.width=32",
    "--set",
    "model.hidden_width=64",
    "--set",
    "train.epochs_seg=4",
    "--set",
    "train.lr_seg=0.003",
    "--set",
    "train.lr_cls=0.002",
    "--set",
    "train.epochs_joint=2",
];

fn anet(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "off").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = anet(args);
    assert!(out.status.success(), "anet {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns its single stderr line.
fn fails(args: &[&str]) -> (i32, String) {
    let out = anet(args);
    assert!(!out.status.success(), "anet {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr not one line: {stderr}");
    assert!(lines[0].starts_with("error: "), "{stderr}");
    (out.status.code().unwrap(), lines[0].to_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("anet-cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Echoed configs name their own output directory; everything else must
/// match byte for byte.
fn assert_same_outputs(a: &Path, b: &Path) {
    let strip = |files: BTreeMap<PathBuf, Vec<u8>>| -> BTreeMap<PathBuf, Vec<u8>> {
        files
            .into_iter()
            .map(|(k, v)| {
                if k.to_string_lossy().ends_with("config.toml") {
                    let text = String::from_utf8(v).unwrap();
                    let kept: String = text.lines().filter(|l| !l.starts_with("out = ")).map(|l| format!("{l}\n")).collect();
                    (k, kept.into_bytes())
                } else {
                    (k, v)
                }
            })
            .collect()
    };
    let (fa, fb) = (strip(files(a)), strip(files(b)));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
}

struct Pipeline {
    data: PathBuf,
    run: PathBuf,
    pred: PathBuf,
}

/// 40 synthetic samples taken through seg, cls and joint, then predicted.
fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let root = scratch("pipeline");
        let (data, run, pred) = (root.join("data"), root.join("run"), root.join("pred"));
        ok(&["gen-data", "synth", "--count", "40", "--height", "32", "--width", "32", "--seed", "3", "--out", s(&data)]);
        train_all(&data, &run);
        let ckpt = run.join("joint.ckpt");
        ok(&["predict", "--checkpoint", s(&ckpt), "--manifest", s(&data), "--out", s(&pred)]);
        Pipeline { data, run, pred }
    })
}

fn train_all(data: &Path, run: &Path) {
    let mut prev: Option<PathBuf> = None;
    for stage in ["seg", "cls", "joint"] {
        let mut args = vec!["train", "--stage", stage, "--manifest", s(data), "--out", s(run), "--seed", "1"];
        let ckpt;
        if let Some(p) = &prev {
            ckpt = p.clone();
            args.extend(["--checkpoint", s(&ckpt)]);
        }
        args.extend(SMALL);
        ok(&args);
        prev = Some(run.join(format!("{stage}.ckpt")));
    }
}

#[test]
fn gen_data_synth_is_deterministic() {
    let root = scratch("gen-synth");
    let (a, b) = (root.join("a"), root.join("b"));
    for dir in [&a, &b] {
        let out = ok(&[
            "gen-data",
            "synth",
            "--count",
            "100",
            "--alpha",
            "0.8",
            "--seed",
            "7",
            "--height",
            "24",
            "--width",
            "24",
            "--out",
            s(dir),
        ]);
        assert!(out.contains("samples\t100"), "{out}");
    }
    assert_eq!(DatasetManifest::read(&a).unwrap().len(), 100);
    assert_same_outputs(&a, &b);
    let echo = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echo.contains("data.alpha = 0.8\n") && echo.contains("data.seed = 7\n"), "{echo}");
}

#[test]
fn gen_data_assemble_merges_with_zero_masks() {
    let root = scratch("gen-assemble");
    let (camo, coco, merged) = (root.join("camo"), root.join("coco"), root.join("merged"));
    let common = ["--height", "16", "--width", "16", "--count", "10"];
    ok(&[&["gen-data", "synth", "--non-camouflaged-fraction", "0", "--out", s(&camo)][..], &common].concat());
    ok(&[&["gen-data", "synth", "--non-camouflaged-fraction", "1", "--seed", "5", "--out", s(&coco)][..], &common].concat());
    ok(&["gen-data", "assemble", "--camo", s(&camo), "--distractor", s(&coco), "--seed", "1", "--out", s(&merged)]);

    let m = DatasetManifest::read(&merged).unwrap();
    assert_eq!(m.len(), 20);
    let distractors: Vec<_> = m.records.iter().filter(|r| r.label == ClassLabel::NonCamouflaged).collect();
    assert_eq!(distractors.len(), 10);
    assert!(distractors.iter().all(|r| r.mask == MaskRef::Zero));
    assert_eq!(m.load_all().unwrap().len(), 20);
    assert_eq!(m.split(Split::Train).count(), 16);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let root = scratch("config");
    let cfg = root.join("run.toml");
    std::fs::write(&cfg, "data.count = 12\ndata.height = 16\ndata.width = 16\ndata.seed = 2\n").unwrap();
    let out = root.join("d");
    ok(&["gen-data", "synth", "--config", s(&cfg), "--count", "10", "--out", s(&out)]);
    assert_eq!(DatasetManifest::read(&out).unwrap().len(), 10);
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("data.count = 10\n") && echo.contains("data.seed = 2\n"), "{echo}");
}

#[test]
fn cls_without_seg_checkpoint_is_an_explicit_error() {
    let p = pipeline();
    let out = scratch("cls-first");
    let (code, line) = fails(&[&["train", "--stage", "cls", "--manifest", s(&p.data), "--out", s(&out)][..], &SMALL].concat());
    assert_eq!(code, 1);
    assert!(line.contains("'seg'"), "{line}");
    let (_, line) =
        fails(&["train", "--stage", "joint", "--manifest", s(&p.data), "--checkpoint", s(&p.run.join("seg.ckpt")), "--out", s(&out)]);
    assert!(line.contains("'cls'"), "{line}");
}

#[test]
fn pipeline_writes_stage_checkpoints_and_curves() {
    let p = pipeline();
    let ckpt = checkpoint::load(&p.run.join("joint.ckpt"), &BackboneRegistry::default()).unwrap();
    assert_eq!(ckpt.stages, ["seg", "cls", "joint"]);
    for stage in ["seg", "cls", "joint"] {
        let curve: serde_json::Value = serde_json::from_slice(&std::fs::read(p.run.join(format!("{stage}-loss.json"))).unwrap()).unwrap();
        assert_eq!(curve["stage"], stage);
        assert!(curve["loss_curve"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap().is_finite()));
        assert!(p.run.join(format!("{stage}-config.toml")).exists());
    }
}

#[test]
fn training_is_reproducible() {
    let p = pipeline();
    let again = scratch("retrain");
    train_all(&p.data, &again);
    for stage in ["seg", "cls", "joint"] {
        let name = format!("{stage}.ckpt");
        assert!(std::fs::read(p.run.join(&name)).unwrap() == std::fs::read(again.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn predictions_cover_exactly_the_test_split() {
    let p = pipeline();
    let manifest = DatasetManifest::read(&p.data).unwrap();
    let test: Vec<String> = manifest.split(Split::Test).map(|r| r.image.display().to_string()).collect();
    let table = std::fs::read_to_string(p.pred.join("predictions.tsv")).unwrap();
    let listed: Vec<String> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(listed, test);
    assert_eq!(std::fs::read_dir(p.pred.join("raw")).unwrap().count(), test.len());
    assert_eq!(std::fs::read_dir(p.pred.join("fused")).unwrap().count(), test.len());

    let again = scratch("repredict");
    ok(&["predict", "--checkpoint", s(&p.run.join("joint.ckpt")), "--manifest", s(&p.data), "--out", s(&again)]);
    assert_same_outputs(&p.pred, &again);
}

#[test]
fn gated_model_exports_all_zero_fused_maps() {
    let p = pipeline();
    let root = scratch("gated");
    let mut model = AnetModel::reference(0, (32, 32), 16).unwrap();
    model.head.set_output_bias([-1000.0, 1000.0]);
    let ckpt = root.join("gated.ckpt");
    checkpoint::save(&ckpt, &model, &["seg".into(), "cls".into()]).unwrap();
    let pred = root.join("pred");
    ok(&["predict", "--checkpoint", s(&ckpt), "--manifest", s(&p.data), "--out", s(&pred)]);
    for entry in std::fs::read_dir(pred.join("fused")).unwrap() {
        let img = raster::read_gray8(&entry.unwrap().path()).unwrap();
        assert!(img.pixels().all(|px| px.0[0] == 0));
    }
}

#[test]
fn resolution_mismatch_is_rejected() {
    let p = pipeline();
    let out = scratch("mismatch");
    let (_, line) = fails(&[
        "predict",
        "--checkpoint",
        s(&p.run.join("joint.ckpt")),
        "--manifest",
        s(&p.data),
        "--out",
        s(&out),
        "--set",
        "model.height=16",
    ]);
    assert!(line.contains("32x32"), "{line}");
}

fn report_rows(dir: &Path) -> Vec<ReportRow> {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn eval_matches_direct_metric_calls() {
    let p = pipeline();
    let out = scratch("eval");
    ok(&["eval", "--manifest", s(&p.data), "--predictions", s(&p.pred), "--out", s(&out)]);
    let rows = report_rows(&out);

    let manifest = DatasetManifest::read(&p.data).unwrap();
    let samples = manifest.load_split(Split::Test).unwrap();
    let table = std::fs::read_to_string(p.pred.join("predictions.tsv")).unwrap();
    let mut maps = Vec::new();
    let mut correct = 0;
    for (line, sample) in table.lines().skip(1).zip(&samples) {
        let f: Vec<&str> = line.split('\t').collect();
        maps.push(CamoMap::from_gray8(&raster::read_gray8(&p.pred.join(f[3])).unwrap()));
        let prob: f64 = f[1].parse().unwrap();
        correct += usize::from((prob > 0.5) == (sample.label == ClassLabel::Camouflaged));
    }
    let masks: Vec<_> = samples.iter().map(|s| s.mask.clone()).collect();
    let direct = evaluate_dataset(&maps, &masks).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].scores, direct.means);
    assert_eq!(rows[0].n, samples.len());
    assert_eq!(rows[0].accuracy, Some(correct as f64 / samples.len() as f64));
}

#[test]
fn from_float_scores_unquantized_maps() {
    let p = pipeline();
    let out = scratch("eval-float");
    let ckpt = p.run.join("joint.ckpt");
    ok(&["eval", "--manifest", s(&p.data), "--from-float", "--checkpoint", s(&ckpt), "--out", s(&out)]);
    let rows = report_rows(&out);

    let model = checkpoint::load(&ckpt, &BackboneRegistry::default()).unwrap().model;
    let samples = DatasetManifest::read(&p.data).unwrap().load_split(Split::Test).unwrap();
    let maps: Vec<CamoMap> = samples.iter().map(|s| model.forward(&s.image).unwrap().fused).collect();
    let masks: Vec<_> = samples.iter().map(|s| s.mask.clone()).collect();
    assert_eq!(rows[0].scores, evaluate_dataset(&maps, &masks).unwrap().means);
    assert_eq!(rows[0].method, "joint");
}

#[test]
fn perfect_predictions_score_perfectly() {
    let p = pipeline();
    let dir = scratch("perfect");
    let pred = dir.join("perfect");
    std::fs::create_dir_all(pred.join("maps")).unwrap();
    let manifest = DatasetManifest::read(&p.data).unwrap();
    let mut table = String::from("image\tprobability\traw\tfused\n");
    for (i, r) in manifest.split(Split::Test).enumerate() {
        let sample = anet::manifest::load_sample(r, &manifest.root).unwrap();
        let name = format!("maps/{i}.png");
        raster::write_gray8(&pred.join(&name), &CamoMap::from_mask(&sample.mask).to_gray8()).unwrap();
        let prob = if sample.label == ClassLabel::Camouflaged { 1.0 } else { 0.0 };
        table.push_str(&format!("{}\t{prob}\t{name}\t{name}\n", r.image.display()));
    }
    std::fs::write(pred.join("predictions.tsv"), table).unwrap();
    let stdout = ok(&["eval", "--manifest", s(&p.data), "--predictions", s(&pred), "--contexts", "fixed"]);
    assert_eq!(stdout, "Method\tMAE\tF_fixed\tIOU_fixed\tAccuracy\nperfect\t0.000\t1.000\t1.000\t1.000\n");
}

#[test]
fn comparing_identical_predictions_is_not_significant() {
    let p = pipeline();
    let out = scratch("compare");
    ok(&["eval", "--manifest", s(&p.data), "--compare", s(&p.pred), s(&p.pred), "--out", s(&out)]);
    let tests: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(out.join("significance.json")).unwrap()).unwrap();
    assert_eq!(tests.len(), SampleScores::COLUMNS.len());
    for t in &tests {
        assert_eq!(t["significant"], false, "{t}");
        assert_eq!(t["p_value"], 1.0);
    }
    assert_eq!(report_rows(&out).len(), 2);
}

#[test]
fn misaligned_manifest_is_rejected() {
    let p = pipeline();
    let other = scratch("misaligned");
    ok(&["gen-data", "synth", "--count", "30", "--height", "32", "--width", "32", "--seed", "9", "--out", s(&other)]);
    let (_, line) = fails(&["eval", "--manifest", s(&other), "--predictions", s(&p.pred)]);
    assert!(line.contains("misaligned"), "{line}");
}

#[test]
fn report_merges_eval_outputs() {
    let p = pipeline();
    let (a, b, merged) = (scratch("report-a"), scratch("report-b"), scratch("report-merged"));
    ok(&["eval", "--manifest", s(&p.data), "--predictions", s(&p.pred), "--method", "first", "--out", s(&a)]);
    ok(&["eval", "--manifest", s(&p.data), "--predictions", s(&p.pred), "--map", "raw", "--method", "second", "--out", s(&b)]);
    let stdout = ok(&["report", "--inputs", s(&a.join("report.json")), s(&b.join("report.json")), "--out", s(&merged)]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "Method\tMAE\tF_adaptive\tIOU_adaptive\tF_fixed\tIOU_fixed\tAccuracy");
    assert!(lines[1].starts_with("first\t") && lines[2].starts_with("second\t"));
    assert_eq!(report_rows(&merged).len(), 2);
}

#[test]
fn bench_reports_two_means_and_overhead() {
    let out = scratch("bench");
    let stdout = ok(&["bench", "--count", "20", "--warmup", "1", "--reps", "3", "--set", "model.hidden_width=256", "--out", s(&out)]);
    assert!(stdout.contains("backbone\tmean") && stdout.contains("anet\tmean") && stdout.contains("overhead"), "{stdout}");
    let b: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("bench.json")).unwrap()).unwrap();
    let (bb, an) = (b["backbone_mean_ms"].as_f64().unwrap(), b["anet_mean_ms"].as_f64().unwrap());
    assert_eq!(b["overhead"].as_f64().unwrap(), (an - bb) / bb);
    assert_eq!(b["images"], 20);
    assert!(b["median_overhead"].as_f64().unwrap() >= 0.0, "{b}");
}

#[test]
fn errors_are_one_line() {
    let (code, line) = fails(&["train", "--bogus-flag"]);
    assert_eq!(code, 2);
    assert!(line.contains("--bogus-flag"), "{line}");
    let (code, line) = fails(&["gen-data", "synth", "--set", "data.colour=1", "--out", "/tmp/never"]);
    assert_eq!(code, 1);
    assert!(line.contains("data.colour"), "{line}");
    let (_, line) = fails(&["gen-data", "synth", "--alpha", "1.5", "--out", s(&scratch("bad-alpha"))]);
    assert!(line.contains("alpha"), "{line}");
    let (_, line) = fails(&["predict", "--checkpoint", "/no/such.ckpt", "--manifest", "/no/such", "--out", "/tmp/never"]);
    assert!(line.contains("does not exist"), "{line}");
    assert!(anet(&["--help"]).status.success());
}
