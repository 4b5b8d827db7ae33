use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use insub_cli::files::{self, Manifest};
use insub_core::{Hyperrectangle, ReducedDomain};

fn insub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_insub"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const COS: &str = "model = cos_weighted\nk = 100\na = 1\nn_design = 40\neval_points = 300\nseed = 5\n\
                   schedule_start = 20\nschedule_step = 20\ngamma_sweep = 0.5, 1.0\n";

fn run_ok(args: &[&str]) {
    let out = insub(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn pipeline_is_deterministic_and_checksummed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cos.conf", COS);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        if name != files::MANIFEST {
            assert_eq!(bytes, &tb[name], "{name} differs");
        }
    }
    for name in [
        files::SAMPLES,
        files::EIGENVALUES,
        files::SUBSPACE,
        files::CONVERGENCE,
        files::SVT_ERROR,
        files::DESIGN,
        files::SAMPLER_STATS,
        files::SURROGATE_MODEL,
        files::ERROR_HIST,
        files::DENSITY_HIST,
        files::DENSITY_FULL,
        files::DENSITY_SAMPLES,
        files::SURROGATE_SUMMARY,
    ] {
        assert!(ta.contains_key(name), "{name} missing");
    }

    let manifest: Manifest = serde_json::from_slice(&ta[files::MANIFEST]).unwrap();
    assert_eq!(manifest.files.len(), ta.len() - 1);
    for entry in &manifest.files {
        assert_eq!(files::sha256_file(&a.join(&entry.path)).unwrap(), entry.sha256);
    }
    for stage in ["detect", "complete", "sample", "surrogate"] {
        assert!(manifest.timings.contains_key(stage));
    }
    let svt = manifest.svt_params.unwrap();
    assert_eq!(svt["tau"], 100.0);
    assert_eq!(svt["max_iter"], 1000);
    assert_eq!(manifest.truncation.unwrap()["used"], 1);

    for (name, bytes) in &ta {
        if name.ends_with(".csv") {
            let text = std::str::from_utf8(bytes).unwrap();
            assert!(text.ends_with('\n'), "{name}");
            assert!(!text.lines().nth(1).unwrap_or("").starts_with(|c: char| c.is_alphabetic()), "{name}");
        }
    }
}

#[test]
fn design_satisfies_lift_invariants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cos.conf", COS);
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();
    run_ok(&["detect", "--config", cfg.to_str().unwrap(), "--out", out_s]);
    run_ok(&["sample", "--config", cfg.to_str().unwrap(), "--out", out_s]);

    let subspace = files::read_subspace(&out.join(files::SUBSPACE)).unwrap();
    assert_eq!(subspace.seed, 5);
    let domain = Hyperrectangle::symmetric(2, std::f64::consts::PI).unwrap();
    let reduced = ReducedDomain::build(subspace.subspace, domain).unwrap();
    let (y, s, g) = files::read_design(&out.join(files::DESIGN)).unwrap();
    assert_eq!(y.len(), 140);
    for ((y, s), g) in y.iter().zip(&s).zip(&g) {
        reduced.check_lift(y, s).unwrap();
        let arg = 0.3 * s[0] + 0.7 * s[1];
        assert!((g - arg.cos()).abs() < 1e-14);
    }

    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(files::SAMPLER_STATS)).unwrap()).unwrap();
    let (draws, accepted, rejected, lp) = (
        stats["draws"].as_u64().unwrap(),
        stats["accepted"].as_u64().unwrap(),
        stats["rejected"].as_u64().unwrap(),
        stats["lp_calls"].as_u64().unwrap(),
    );
    assert_eq!(draws, accepted + rejected);
    assert_eq!(accepted, 40);
    assert!(lp <= draws);
}

#[test]
fn eigenvalues_and_convergence_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.conf",
        "model = cos_sum\nk = 100\nschedule_start = 10\nschedule_step = 10\nseed = 3\n",
    );
    let out = tmp.path().join("o");
    run_ok(&["detect", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let (header, rows) = files::read_csv(&out.join(files::EIGENVALUES), "detect").unwrap();
    assert_eq!(header, ["index", "eigenvalue"]);
    let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
    assert!((rows[0][1] - four_pi2).abs() < 0.25 * four_pi2);
    assert!(rows[1][1].abs() < 1e-20);
    let (header, rows) = files::read_csv(&out.join(files::CONVERGENCE), "detect").unwrap();
    assert_eq!(header, ["i", "m_i", "m_next", "e_rel", "e_abs"]);
    assert_eq!(rows.len(), 9);
    assert_eq!((rows[8][1], rows[8][2]), (90.0, 100.0));
}

#[test]
fn synthetic_full_reveal_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "svt.conf",
        "complete_source = synthetic\nsynthetic_rows = 30\nsynthetic_cols = 80\nsynthetic_rank = 5\ngamma_sweep = 1.0\n",
    );
    let out = tmp.path().join("o");
    run_ok(&["complete", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let (header, rows) = files::read_csv(&out.join(files::SVT_ERROR), "complete").unwrap();
    assert_eq!(header.last().unwrap(), "e_gamma");
    assert_eq!(rows.len(), 1);
    assert!(rows[0][5] < 1e-6, "{}", rows[0][5]);
    assert_eq!(rows[0][1], 2400.0);
}

#[test]
fn replicates_use_distinct_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.conf", "model = cos_sum\nk = 30\na = 1\nn_design = 10\neval_points = 50\n");
    let out = tmp.path().join("o");
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--replicates", "2"]);
    let r0 = fs::read(out.join("rep-0").join(files::SAMPLES)).unwrap();
    let r1 = fs::read(out.join("rep-1").join(files::SAMPLES)).unwrap();
    assert_ne!(r0, r1);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out.join(files::MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest.replicates.unwrap(), ["rep-0", "rep-1"]);
    assert!(manifest.files.iter().any(|f| f.path == "rep-1/design.csv"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out_s = out.to_str().unwrap();

    let bad = write_config(tmp.path(), "bad.conf", "k = zero\n");
    let r = insub(&["detect", "--config", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));

    let missing = insub(&["detect", "--config", tmp.path().join("nope.conf").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = write_config(tmp.path(), "ok.conf", "model = cos_sum\nk = 1\na = 1\nn_design = 1\n");
    let r = insub(&["surrogate", "--config", cfg.to_str().unwrap(), "--out", out_s]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("detect"));

    let too_big = write_config(tmp.path(), "a.conf", "model = cos_sum\na = 3\n");
    let r = insub(&["detect", "--config", too_big.to_str().unwrap(), "--out", out_s]);
    assert_eq!(r.status.code(), Some(2));

    // two design points cannot carry a linear tail in one dimension
    let r = insub(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out_s]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("[surrogate]"));
}
