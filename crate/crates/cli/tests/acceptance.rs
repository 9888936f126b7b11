use std::collections::HashSet;
use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use boltzmap::enumerate::{displacement_enum, enum_labelings, enum_trees, first_increment_closed_form};
use boltzmap::harness::{same_tree, type_homogeneity, validate_sampler, Family, RunConfig, ShapeMethod};
use boltzmap::mobile_map::{bfs_distances, build_map, check_correspondence, BuiltMap};
use boltzmap::sampler::ConditioningTarget;
use boltzmap::trees::{LabeledMobile, VertexType};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::Value;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn cli<S: AsRef<OsStr>>(args: &[S]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_boltzmap")).args(args).output().expect("cli runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).expect("utf-8 output"))
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&cli(args).1).expect("json output")
}

fn close(got: f64, want: f64, rel: f64, what: &str) -> Result<(), String> {
    if ((got - want) / want).abs() <= rel {
        Ok(())
    } else {
        Err(format!("{what} = {got}, expected {want}"))
    }
}

fn same(a: &Value, b: &str, what: &str) -> Result<(), String> {
    if a.as_str() == Some(b) {
        Ok(())
    } else {
        Err(format!("{what} = {a}, expected {b}"))
    }
}

fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn quadrangulation_fixture() -> Outcome {
    let quads = fixture("quadrangulations.json");
    let v = json(&["analyze", quads.to_str().unwrap()]);
    same(&v["report"]["status"], "RegularCritical", "status")?;
    same(&v["report"]["Z_exact"], "2", "Z")?;
    close(v["constants"]["rho"].as_f64().unwrap(), 2.0, 1e-10, "rho")?;
    close(v["constants"]["C_face"].as_f64().unwrap(), (8.0f64 / 9.0).powf(0.25), 1e-10, "C_face")?;
    let hex = fixture("hexangulations_unit.json");
    let t = json(&["analyze", hex.to_str().unwrap(), "--tune", "alpha"]);
    close(t["tuning"]["factor"].as_f64().unwrap(), 2.0 / 135.0, 1e-10, "alpha_c")?;
    same(&t["tuning"]["factor_exact"], "2/135", "alpha_c")?;
    close(t["tuning"]["z"].as_f64().unwrap(), 1.5, 1e-10, "z")?;
    Ok("Z = 2, rho = 2, C_face = (8/9)^(1/4), alpha_c = 2/135 with z = 3/2".into())
}

fn geometric_fixture() -> Outcome {
    let geo = fixture("geometric_eighth.json");
    let v = json(&["analyze", geo.to_str().unwrap()]);
    same(&v["report"]["status"], "RegularCritical", "status")?;
    close(v["report"]["Z"].as_f64().unwrap(), 1.5, 1e-10, "Z")?;
    close(v["constants"]["rho"].as_f64().unwrap(), 27.0 / 4.0, 1e-10, "rho")?;
    close(v["constants"]["C_vertex"].as_f64().unwrap(), 3f64.powf(0.25), 1e-10, "C_vertex")?;
    let constant = fixture("constant_eighth.json");
    let t = json(&["analyze", constant.to_str().unwrap(), "--tune", "beta"]);
    close(t["tuning"]["factor"].as_f64().unwrap(), 0.125, 1e-10, "beta_c")?;
    Ok("Z = 3/2, rho = 27/4, C_vertex = 3^(1/4), beta_c = 1/8".into())
}

fn displacement_law() -> Outcome {
    for k in 1..=6 {
        let law = displacement_enum(k).map_err(|e| e.to_string())?;
        for l in -1..=k as i64 {
            if law.first_marginal[(l + 1) as usize] != first_increment_closed_form(k, l) {
                return Err(format!("k = {k}: P(X_1 = {l}) differs from the closed form"));
            }
        }
        let want = ratio((k * (k + 1)) as i64, 3);
        if law.sigma_sq != want {
            return Err(format!("k = {k}: sum of Var(Y_l) = {}, expected {want}", law.sigma_sq));
        }
        let cov = law.cov_x1_x2.clone().ok_or(format!("k = {k}: no covariance"))?;
        if cov != -law.var_x1.clone() / BigInt::from(k) {
            return Err(format!("k = {k}: Cov(X_1, X_2) = {cov}, Var(X_1) = {}", law.var_x1));
        }
    }
    Ok("k = 1..6 exact".into())
}

fn check_quadrangulation(m: &LabeledMobile) -> Result<Vec<usize>, String> {
    let built = build_map(m).map_err(|e| e.to_string())?;
    check_correspondence(m, &built).map_err(|e| e.to_string())?;
    let map = match &built {
        BuiltMap::Map(map) => map,
        BuiltMap::Dagger => return Err("a quadrangulation mobile gave the vertex map".into()),
    };
    let faces = map.face_degrees();
    if faces.iter().any(|&d| d != 4) {
        return Err(format!("face degrees {faces:?}"));
    }
    if map.vertex_count() + faces.len() != map.edge_count() + 2 {
        return Err("Euler's formula fails".into());
    }
    let dist = bfs_distances(map, map.pointed_vertex());
    let min = m.min_label();
    for (id, v) in m.white_vertices().enumerate() {
        if dist[id] as i64 != m.labels()[v] - min + 1 {
            return Err(format!("vertex {v}: distance {} against label {}", dist[id], m.labels()[v]));
        }
    }
    let (from, to) = map.root_endpoints();
    if dist[to] != dist[from] + 1 {
        return Err("root edge is not oriented away from the pointed vertex".into());
    }
    Ok(map.canonical_code())
}

fn small_bijection() -> Outcome {
    let mut found = Vec::new();
    for (n, want) in [(1, 3), (2, 18), (3, 135)] {
        let trees = enum_trees(ConditioningTarget::faces(n), &[1], None).map_err(|e| e.to_string())?;
        let mut codes = HashSet::new();
        let mut mobiles = 0;
        for t in &trees.trees {
            for labels in enum_labelings(t).map_err(|e| e.to_string())? {
                let m = LabeledMobile::new(t.tree.clone(), labels).map_err(|e| e.to_string())?;
                if m.count(VertexType::Black) != n {
                    return Err("enumerated mobile has the wrong face count".into());
                }
                codes.insert(check_quadrangulation(&m)?);
                mobiles += 1;
            }
        }
        if mobiles != want || codes.len() != want {
            return Err(format!("n = {n}: {mobiles} mobiles, {} distinct maps, expected {want}", codes.len()));
        }
        found.push(codes.len().to_string());
    }
    Ok(format!("{} distinct maps", found.join(", ")))
}

fn sampler_validation() -> Outcome {
    let cfg = RunConfig::new(2024, 1);
    let mut parts = Vec::new();
    for family in [Family::quadrangulations(), Family::geometric_eighth()] {
        for n in 1..=3 {
            let r = validate_sampler(&family, ConditioningTarget::faces(n), 1_000_000, 200_000, &cfg)
                .map_err(|e| e.to_string())?;
            let p = r.chi_square.p_value;
            if p <= 1e-3 {
                return Err(format!("{} n = {n}: chi-square p = {p:.3e} ({:?})", family.name, r.chi_square));
            }
            parts.push(format!("{} n={n} p={p:.3}", family.name));
        }
    }
    Ok(parts.join(", "))
}

fn type_homogeneity_at_scale() -> Outcome {
    let gaps = type_homogeneity(
        &Family::quadrangulations(),
        ConditioningTarget::faces(2000),
        200,
        &RunConfig::new(7, 1),
        ShapeMethod::Rejection,
    )
    .map_err(|e| e.to_string())?;
    let good = gaps.iter().filter(|&&g| g < 0.1).count();
    let share = good as f64 / gaps.len() as f64;
    let detail = format!("{good}/200 runs below 0.1, worst {:.4}", gaps.iter().cloned().fold(0.0, f64::max));
    if share >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn universality(out: &Path) -> (Outcome, Outcome) {
    let (code, _) = cli(&["--seed", "42", "--out", out.to_str().unwrap(), "universality"]);
    let text = match std::fs::read_to_string(out.join("universality.json")) {
        Ok(t) => t,
        Err(e) => {
            let msg = format!("no result file (exit {code}): {e}");
            return (Err(msg.clone()), Err(msg));
        }
    };
    let v: Value = serde_json::from_str(&text).expect("result json");
    let list = |key: &str| -> Vec<(String, f64)> {
        v[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| {
                (format!("{} vs {}", c["a"].as_str().unwrap(), c["b"].as_str().unwrap()), c["p_value"].as_f64().unwrap())
            })
            .collect()
    };
    let describe = |xs: &[(String, f64)]| xs.iter().map(|(k, p)| format!("{k} p={p:.3}")).collect::<Vec<_>>().join(", ");
    let accept = [list("pairwise"), list("reference")].concat();
    let control = list("negative_control");
    let radius_ok = accept.len() == 3 && accept.iter().all(|c| c.1 > 0.01) && !control.is_empty() && control.iter().all(|c| c.1 < 0.001);
    let radius = format!("{}; control {}", describe(&accept), describe(&control));
    let two = list("two_point_reference");
    let two_ok = two.len() == 2 && two.iter().all(|c| c.1 > 0.01);
    (
        if radius_ok { Ok(radius.clone()) } else { Err(radius) },
        if two_ok { Ok(describe(&two)) } else { Err(describe(&two)) },
    )
}

fn determinism() -> Outcome {
    let quads = fixture("quadrangulations.json");
    let geo = fixture("geometric_eighth.json");
    let (q, g) = (quads.to_str().unwrap(), geo.to_str().unwrap());
    let runs: Vec<Vec<&str>> = vec![
        vec!["--seed", "3", "analyze", g, "--tune", "beta"],
        vec!["--seed", "3", "sample", q, "--n", "150", "--count", "4", "--emit-edgelist"],
        vec!["--seed", "3", "--format", "csv", "sample", g, "--n", "80", "--count", "6"],
        vec!["--seed", "3", "sample", g, "--target", "white-vertices", "--n", "40", "--count", "3"],
        vec!["--seed", "3", "enumerate", g, "--n", "2"],
        vec!["--seed", "3", "--workers", "2", "snake-ref", "--m", "300", "--samples", "120"],
        vec!["--seed", "3", "verify"],
        vec![
            "--seed", "3", "--workers", "2", "universality", "--n", "60", "--replicates", "120", "--reference-m", "300",
            "--reference-samples", "120",
        ],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (i, args) in runs.iter().enumerate() {
        let mut printed = Vec::new();
        for dir in &dirs {
            printed.push(cli(args));
            let mut with_out = vec!["--out".to_string(), dir.path().join(i.to_string()).display().to_string()];
            with_out.extend(args.iter().map(|s| s.to_string()));
            cli(&with_out);
        }
        if printed[0] != printed[1] {
            return Err(format!("stdout of `{}` differs between runs", args.join(" ")));
        }
    }
    match same_tree(dirs[0].path(), dirs[1].path()) {
        Ok(true) => Ok(format!("{} invocations byte-identical on stdout and in --out trees", runs.len())),
        Ok(false) => Err("output directories differ".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn report(id: usize, title: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = run();
    report_timed(id, title, budget, start.elapsed(), outcome)
}

fn report_timed(id: usize, title: &str, budget: Duration, took: Duration, outcome: Outcome) -> bool {
    let (ok, detail) = match outcome {
        Ok(d) if took <= budget => (true, d),
        Ok(d) => (false, format!("{d}; took {:.1} s over a {:.0} s budget", took.as_secs_f64(), budget.as_secs_f64())),
        Err(d) => (false, d),
    };
    println!(
        "{} criterion {id} ({title}): {detail} [{:.1} s]",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    ok
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let mut all = vec![
        report(1, "quadrangulation fixture", secs(1), quadrangulation_fixture),
        report(2, "geometric fixture", secs(1), geometric_fixture),
        report(3, "displacement law", secs(5), displacement_law),
        report(4, "bijection at small scale", secs(30), small_bijection),
        report(5, "exact sampler validation", secs(600), sampler_validation),
        report(6, "type homogeneity", secs(600), type_homogeneity_at_scale),
    ];
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (radius, two_point) = universality(dir.path());
    let took = start.elapsed();
    all.push(report_timed(7, "universality of the radius", secs(7200), took, radius));
    all.push(report_timed(8, "two-point distance", secs(7200), took, two_point));
    all.push(report(9, "determinism", secs(600), determinism));
    assert!(all.iter().all(|&ok| ok), "some acceptance criteria failed");
}
