use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use ulfsynth_core::synthgen::sample_seed;
use ulfsynth_core::volgrid::{read_labels, write_labels, Grid, LabelMap};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ulfsynth"));
    c.env_remove("ULFSYNTH_CONFIG_DIR").env("ULFSYNTH_LOG", "info");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// 12³ map: a block of 1s, a block of 2s and a slab of 3s on background.
fn phantom() -> LabelMap {
    let g = Grid::with_spacing([12; 3], [1.0; 3]).unwrap();
    let data = (0..g.len())
        .map(|idx| {
            let [i, j, k] = g.coords(idx);
            match (i, j, k) {
                (2..=5, 2..=9, 2..=9) => 1,
                (6..=9, 2..=9, 2..=9) => 2,
                (_, _, 10) => 3,
                _ => 0,
            }
        })
        .collect();
    LabelMap::from_data(g, data).unwrap()
}

fn manifest(dir: &Path, entries: &[(&str, &str, Option<&str>)]) -> PathBuf {
    let entries: Vec<Value> = entries
        .iter()
        .map(|(id, label, pred)| {
            let mut e = json!({
                "subject_id": id, "image_path": format!("{id}_img.nii.gz"), "label_path": label,
                "gt_variant": "GT_HF", "split": "train"
            });
            if let Some(p) = pred {
                e["prediction_path"] = json!(p);
            }
            e
        })
        .collect();
    let path = dir.join("manifest.json");
    std::fs::write(&path, json!({"schema_version": 1, "entries": entries}).to_string()).unwrap();
    path
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn sample_record(out: &Path, subject: &str, index: u64) -> Value {
    let p = out.join(subject).join(format!("{subject}_e0_s{index:04}_provenance.json"));
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&phantom(), dir.path().join("s1_lab.nii.gz")).unwrap();
    let m = manifest(dir.path(), &[("s1", "s1_lab.nii.gz", None)]);
    let gen = |out: &Path| {
        run(bin().args(["generate", "--samples", "2", "--seed", "11", "--manifest"]).arg(&m).arg("--out").arg(out))
    };
    let a = dir.path().join("a");
    let o = gen(&a);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = read_tree(&a);
    let names: Vec<String> = files.iter().map(|f| f.0.to_string_lossy().into_owned()).collect();
    for n in ["s1/s1_e0_s0000_image.nii.gz", "s1/s1_e0_s0001_labels.nii.gz", "resolved_config.toml", "run.json"] {
        assert!(names.iter().any(|x| x == n), "missing {n} in {names:?}");
    }
    assert_eq!(names.len(), 2 * 3 + 2);

    let b = dir.path().join("b");
    assert!(gen(&b).status.success());
    assert_eq!(files, read_tree(&b));

    // The snapshot alone reproduces the run.
    let c = dir.path().join("c");
    let o = run(bin()
        .args(["generate", "--samples", "2", "--config"])
        .arg(a.join("resolved_config.toml"))
        .arg("--manifest")
        .arg(&m)
        .arg("--out")
        .arg(&c));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files, read_tree(&c));

    // A sample sidecar replays to the same bytes.
    let r = dir.path().join("r");
    let o = run(bin().arg("generate").arg("--replay").arg(a.join("s1/s1_e0_s0001_provenance.json")).arg("--out").arg(&r));
    assert!(o.status.success(), "{}", stderr(&o));
    for suffix in ["image.nii.gz", "labels.nii.gz", "provenance.json"] {
        let name = format!("s1_e0_s0001_{suffix}");
        assert_eq!(std::fs::read(r.join(&name)).unwrap(), std::fs::read(a.join("s1").join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&phantom(), dir.path().join("s1_lab.nii.gz")).unwrap();
    let m = manifest(dir.path(), &[("s1", "s1_lab.nii.gz", None)]);
    let cfg_dir = dir.path().join("cfg");
    std::fs::create_dir(&cfg_dir).unwrap();
    let mut cfg = ulfsynth_core::synthgen::GeneratorConfig::default();
    cfg.seed.dataset_seed = 5;
    std::fs::write(cfg_dir.join("generate.toml"), cfg.to_toml()).unwrap();

    // Picked up from the config dir.
    let out = dir.path().join("env");
    let o = run(bin().env("ULFSYNTH_CONFIG_DIR", &cfg_dir).args(["generate", "--manifest"]).arg(&m).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(sample_record(&out, "s1", 0)["provenance"]["seed"], sample_seed(5, "s1", 0, 0));

    // Relative --config name found in the config dir, then overridden by --seed.
    let out = dir.path().join("flag");
    let o = run(bin()
        .env("ULFSYNTH_CONFIG_DIR", &cfg_dir)
        .args(["generate", "--config", "generate.toml", "--seed", "9", "--manifest"])
        .arg(&m)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(sample_record(&out, "s1", 0)["provenance"]["seed"], sample_seed(9, "s1", 0, 0));
    let snapshot = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(snapshot.contains("dataset_seed = 9"), "{snapshot}");
}

#[test]
fn no_resolution_flag_disables_acquisition() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&phantom(), dir.path().join("s1_lab.nii.gz")).unwrap();
    let m = manifest(dir.path(), &[("s1", "s1_lab.nii.gz", None)]);
    let out = dir.path().join("out");
    let o = run(bin().args(["generate", "--no-resolution", "--seed", "3", "--manifest"]).arg(&m).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = sample_record(&out, "s1", 0);
    assert_eq!(rec["provenance"]["acquisition"], Value::Null);
    assert!(!rec["provenance"]["stage_order"].as_array().unwrap().contains(&json!("acquisition")));
    let run_json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["resolution_enabled"], false);
}

#[test]
fn missing_label_file_is_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&phantom(), dir.path().join("ok_lab.nii.gz")).unwrap();
    let m = manifest(dir.path(), &[("ok", "ok_lab.nii.gz", None), ("lost", "lost_lab.nii.gz", None)]);
    let out = dir.path().join("out");
    let o = run(bin().args(["generate", "--manifest"]).arg(&m).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lost"), "{}", stderr(&o));
    assert!(out.join("ok/ok_e0_s0000_image.nii.gz").exists());
    let run_json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["failures"][0]["subject_id"], "lost");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&phantom(), dir.path().join("s1_lab.nii.gz")).unwrap();
    let m = manifest(dir.path(), &[("s1", "s1_lab.nii.gz", None)]);
    std::fs::write(dir.path().join("bad.toml"), "schema_version = 1\nwat = 3\n").unwrap();
    let o = run(bin().args(["generate", "--config"]).arg(dir.path().join("bad.toml")).arg("--manifest").arg(&m).arg("--out").arg(dir.path().join("o")));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(bin().args(["generate", "--config", "nowhere.toml", "--manifest"]).arg(&m).arg("--out").arg(dir.path().join("o")));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().args(["remap", "--scheme", "aseg", "--input", "x", "--output", "y"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().args(["generate", "--out", "x"]));
    assert_eq!(o.status.code(), Some(2), "missing --manifest is a usage error");
    let o = run(bin().args(["serve", "--manifest"]).arg(dir.path().join("none.json")).args(["--ratings", "r.csv"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&[&str], &[&str]); 9] = [
        (&["generate"], &["--config", "--manifest", "--out", "--samples", "--epoch", "--seed", "--no-resolution", "--subject", "--replay", "--labels"]),
        (&["remap"], &["--scheme", "--mapping", "--input", "--output", "--manifest", "--out"]),
        (&["evaluate"], &["--manifest", "--submission", "--scheme", "--gt-variant", "--aggregation", "--out"]),
        (&["ensemble"], &["--recipe", "--name", "--manifest", "--out"]),
        (&["qc", "flag"], &["--manifest", "--scores", "--sentinels", "--threshold", "--out"]),
        (&["qc", "apply"], &["--manifest", "--ratings", "--select", "--out"]),
        (&["qc", "export"], &["--ratings", "--out"]),
        (&["qc", "rate"], &["--ratings", "--subject", "--rating", "--structure", "--rater", "--note"]),
        (&["serve"], &["--manifest", "--ratings", "--port", "--host", "--flags", "--static-dir", "--log-level", "--threads"]),
    ];
    for (cmd, flags) in cases {
        let o = run(bin().args(cmd).arg("--help"));
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{cmd:?} help lacks {f}:\n{text}");
        }
    }
    let top = String::from_utf8(run(bin().arg("--help")).stdout).unwrap();
    for sub in ["generate", "remap", "evaluate", "ensemble", "qc", "serve"] {
        assert!(top.contains(sub));
    }
}

#[test]
fn evaluate_perfect_submission() {
    let dir = tempfile::tempdir().unwrap();
    // LISA ids 1, 2, 5: hippocampi and left caudate; ventricles are not scored.
    let g = Grid::with_spacing([10; 3], [1.0; 3]).unwrap();
    let gt_data: Vec<u32> = (0..g.len())
        .map(|idx| match g.coords(idx) {
            [1..=3, 1..=3, 1..=3] => 1,
            [5..=7, 1..=3, 1..=3] => 2,
            [1..=3, 5..=8, 5..=8] => 5,
            _ => 0,
        })
        .collect();
    let gt = LabelMap::from_data(g.clone(), gt_data.clone()).unwrap();
    for s in ["a", "b"] {
        write_labels(&gt, dir.path().join(format!("{s}_lab.nii.gz"))).unwrap();
        std::fs::create_dir_all(dir.path().join("shifted")).unwrap();
        let mut shifted = gt_data.clone();
        shifted.rotate_right(1);
        write_labels(&LabelMap::from_data(g.clone(), shifted).unwrap(), dir.path().join(format!("shifted/{s}.nii.gz"))).unwrap();
    }
    let m = manifest(dir.path(), &[("a", "a_lab.nii.gz", None), ("b", "b_lab.nii.gz", None)]);
    let out = dir.path().join("eval");
    let same = format!("same={}/{{subject_id}}_lab.nii.gz", dir.path().display());
    let off = format!("off={}/shifted/{{subject_id}}.nii.gz", dir.path().display());
    let o = run(bin().args(["evaluate", "--submission", &same, "--submission", &off, "--manifest"]).arg(&m).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("leaderboard.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let same_row = rows.iter().find(|r| &r[0] == "same").unwrap();
    assert_eq!(same_row[col("DSC")].parse::<f64>().unwrap(), 1.0);
    for m in ["HD", "HD95", "ASSD", "RVE"] {
        assert_eq!(same_row[col(m)].parse::<f64>().unwrap(), 0.0, "{m}");
    }
    assert_eq!(&same_row[col("rank")], "1");
    assert_eq!(same_row[col("norm_avg")].parse::<f64>().unwrap(), 0.0);
    assert!(out.join("same_report.csv").exists() && out.join("off_report.csv").exists());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), std::fs::read_to_string(out.join("leaderboard.csv")).unwrap());

    // A missing prediction is a partial failure.
    let gone = format!("gone={}/nowhere/{{subject_id}}.nii.gz", dir.path().display());
    let o = run(bin().args(["evaluate", "--submission", &same, "--submission", &gone, "--manifest"]).arg(&m).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ensemble_of_identical_members_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let labels = phantom();
    for model in ["A", "B", "C"] {
        std::fs::create_dir_all(dir.path().join(model)).unwrap();
        for s in ["s1", "s2"] {
            write_labels(&labels, dir.path().join(format!("{model}/{s}.nii.gz"))).unwrap();
        }
    }
    std::fs::remove_file(dir.path().join("C/s2.nii.gz")).unwrap();
    let book = dir.path().join("recipes.toml");
    std::fs::write(
        &book,
        r#"[[recipe]]
name = "M1"
members = [
  { model = "A", path = "A/{subject_id}.nii.gz" },
  { model = "B", path = "B/{subject_id}.nii.gz" },
  { model = "C", path = "C/{subject_id}.nii.gz" },
]
"#,
    )
    .unwrap();
    let m = manifest(dir.path(), &[("s1", "x", None), ("s2", "y", None)]);
    let out = dir.path().join("fused");
    let o = run(bin().args(["ensemble", "--name", "M1", "--recipe"]).arg(&book).arg("--manifest").arg(&m).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(1), "s2 lacks a member: {}", stderr(&o));
    assert_eq!(read_labels(out.join("s1.nii.gz")).unwrap().data(), labels.data());
    let prov: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ensemble_provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["errors"][0]["subject_id"], "s2");

    let o = run(bin().args(["ensemble", "--name", "M9", "--recipe"]).arg(&book).arg("--manifest").arg(&m).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn qc_flag_bimodal_scores() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("subject_id,score\n");
    for i in 0..40 {
        csv += &format!("good{i:02},0.9\n");
    }
    for i in 0..39 {
        csv += &format!("bad{i:02},0.5\n");
    }
    std::fs::write(dir.path().join("scores.csv"), csv).unwrap();
    let out = dir.path().join("flags.json");
    let o = run(bin().args(["qc", "flag", "--scores"]).arg(dir.path().join("scores.csv")).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let suspects: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(String::from).collect();
    let expected: Vec<String> = (0..39).map(|i| format!("bad{i:02}")).collect();
    assert_eq!(suspects, expected);
    let flags: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((flags["threshold"].as_f64().unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn qc_flag_from_manifest_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::with_spacing([8; 3], [1.0; 3]).unwrap();
    let gt: Vec<u32> = (0..g.len())
        .map(|idx| match g.coords(idx) {
            [1..=3, 1..=6, 1..=6] => 4,
            [4..=6, 1..=6, 1..=6] => 6,
            _ => 0,
        })
        .collect();
    let mut entries = Vec::new();
    for (i, shift) in [0usize, 0, 0, 24, 24].iter().enumerate() {
        let id = format!("s{i}");
        let mut pred = gt.clone();
        pred.rotate_right(*shift);
        write_labels(&LabelMap::from_data(g.clone(), gt.clone()).unwrap(), dir.path().join(format!("{id}_lab.nii.gz"))).unwrap();
        write_labels(&LabelMap::from_data(g.clone(), pred).unwrap(), dir.path().join(format!("{id}_pred.nii.gz"))).unwrap();
        entries.push(id);
    }
    let spec: Vec<(String, String, String)> = entries
        .iter()
        .map(|id| (id.clone(), format!("{id}_lab.nii.gz"), format!("{id}_pred.nii.gz")))
        .collect();
    let refs: Vec<(&str, &str, Option<&str>)> = spec.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), Some(c.as_str()))).collect();
    let m = manifest(dir.path(), &refs);
    let out = dir.path().join("flags.json");
    let o = run(bin().args(["qc", "flag", "--manifest"]).arg(&m).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "s3\ns4\n");
}

#[test]
fn qc_rate_export_apply() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..79).map(|i| format!("t{i:03}")).collect();
    let labels: Vec<String> = ids.iter().map(|id| format!("{id}.nii.gz")).collect();
    let refs: Vec<(&str, &str, Option<&str>)> = ids.iter().zip(&labels).map(|(a, b)| (a.as_str(), b.as_str(), None)).collect();
    let m = manifest(dir.path(), &refs);
    let ratings = dir.path().join("history.csv");
    for (i, id) in ids.iter().enumerate() {
        let rating = if i < 23 { "bad" } else { "good" };
        let mut cmd = bin();
        cmd.args(["qc", "rate", "--subject", id, "--rating", rating, "--rater", "r1", "--ratings"]).arg(&ratings);
        if i == 0 {
            cmd.args(["--structure", "right caudate", "--note", "shifted, badly"]);
        }
        assert!(run(&mut cmd).status.success());
    }
    // A second opinion on t000 by the same rater supersedes the first.
    assert!(run(bin().args(["qc", "rate", "--subject", "t000", "--rating", "bad", "--rater", "r1", "--structure", "left caudate", "--ratings"]).arg(&ratings)).status.success());
    let o = run(bin().args(["qc", "rate", "--subject", "t001", "--rating", "meh", "--ratings"]).arg(&ratings));
    assert_eq!(o.status.code(), Some(2));

    let latest = dir.path().join("latest.csv");
    assert!(run(bin().args(["qc", "export", "--ratings"]).arg(&ratings).arg("--out").arg(&latest)).status.success());
    let text = std::fs::read_to_string(&latest).unwrap();
    assert_eq!(text.lines().count(), 80);
    assert!(text.lines().any(|l| l.starts_with("t000,bad,left caudate,r1,")));

    let good = dir.path().join("good.json");
    let o = run(bin().args(["qc", "apply", "--select", "good", "--manifest"]).arg(&m).arg("--ratings").arg(&ratings).arg("--out").arg(&good));
    assert!(o.status.success(), "{}", stderr(&o));
    let kept = ulfsynth_core::labelharm::load_manifest(&good).unwrap();
    assert_eq!(kept.entries.len(), 56);
    assert!(Path::new(&kept.entries[0].label_path).is_absolute());
    let bad = dir.path().join("bad.json");
    assert!(run(bin().args(["qc", "apply", "--select", "bad", "--manifest"]).arg(&m).arg("--ratings").arg(&ratings).arg("--out").arg(&bad)).status.success());
    assert_eq!(ulfsynth_core::labelharm::load_manifest(&bad).unwrap().entries.len(), 23);
}

#[test]
fn remap_with_mapping_table() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::with_spacing([4, 1, 1], [1.0; 3]).unwrap();
    write_labels(&LabelMap::from_data(g, vec![17, 53, 999, 0]).unwrap(), dir.path().join("aseg.nii.gz")).unwrap();
    let table = concat!(env!("CARGO_MANIFEST_DIR"), "/../../mappings/freesurfer_aseg_to_lisa.csv");
    let out = dir.path().join("lisa.nii.gz");
    let o = run(bin().args(["remap", "--scheme", "lisa", "--mapping", table, "--input"]).arg(dir.path().join("aseg.nii.gz")).arg("--output").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_labels(&out).unwrap().data(), &[1, 2, 0, 0]);

    let m = manifest(dir.path(), &[("s1", "aseg.nii.gz", None)]);
    let dest = dir.path().join("remapped");
    let o = run(bin().args(["remap", "--scheme", "lisa", "--mapping", table, "--manifest"]).arg(&m).arg("--out").arg(&dest));
    assert!(o.status.success(), "{}", stderr(&o));
    let rm = ulfsynth_core::labelharm::load_manifest(dest.join("manifest.json")).unwrap();
    assert_eq!(read_labels(rm.resolve(&rm.entries[0].label_path)).unwrap().data(), &[1, 2, 0, 0]);
}
