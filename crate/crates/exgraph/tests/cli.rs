use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EQ29: &str = "0,1,2,2,3\n1,0,3,1,2\n2,3,0,4,5\n2,1,4,0,3\n3,2,5,3,0\n";
const TREE: &str = "1 2\n1 3\n2 4\n2 5\n";

fn exgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn put(dir: &Path, name: &str, content: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, content).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect();
    (
        header,
        lines
            .map(|l| l.split(',').map(str::to_owned).collect())
            .collect(),
    )
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulates `n` rows from the eq29 tree model into `dir/sim`.
fn simulate_eq29(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let gamma = put(dir, "gamma.csv", EQ29);
    let tree = put(dir, "tree.txt", TREE);
    let out = dir.join("sim");
    let o = exgraph(&[
        "simulate",
        "--gamma",
        &gamma,
        "--graph",
        &tree,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("sample.csv")
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(exgraph(&["--help"]).status.code(), Some(0));
    assert_eq!(exgraph(&["--version"]).status.code(), Some(0));
    assert_eq!(exgraph(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(exgraph(&["fit", "--data", "x.csv"]).status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible_and_matches_the_acceptance_rate() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = put(dir.path(), "g.csv", "0,1\n1,0\n");
    let run = |out: &str| {
        let o = exgraph(&[
            "simulate", "--gamma", &gamma, "--n", "1000", "--seed", "42", "--out", out,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(s(&a));
    run(s(&b));
    let csv = fs::read(a.join("sample.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("sample.csv")).unwrap());

    let doc = json(&a.join("sample.json"));
    assert_eq!(doc["run"]["seed"], 42);
    assert_eq!(doc["accepts"], 1000);
    let proposals = doc["proposals"].as_f64().unwrap();
    let rate = doc["acceptance_rate"].as_f64().unwrap();
    let expected = 0.691_462_461_274_013_1;
    let se = (expected * (1.0 - expected) / proposals).sqrt();
    assert!(
        (rate - expected).abs() < 3.0 * se,
        "{rate} vs {expected} ± {se}"
    );

    let (header, rows) = read_csv(&a.join("sample.csv"));
    assert_eq!(header, ["Y1", "Y2"]);
    assert_eq!(rows.len(), 1000);
    for r in &rows {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[0] > 1.0 || v[1] > 1.0);
    }
}

#[test]
fn simulate_without_seed_records_the_generated_one() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = put(dir.path(), "g.csv", "0,1\n1,0\n");
    let out = dir.path().join("o");
    let o = exgraph(&["simulate", "--gamma", &gamma, "--n", "10", "--out", s(&out)]);
    assert!(o.status.success());
    let seed = json(&out.join("sample.json"))["run"]["seed"]
        .as_u64()
        .unwrap();
    assert!(stderr(&o).contains(&seed.to_string()));
}

#[test]
fn simulate_rejects_a_variogram_that_does_not_factorize() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = put(dir.path(), "g.csv", EQ29);
    // Γ₃₄ = 4 = Γ₃₁ + Γ₁₂ + Γ₂₄ holds only along the true tree.
    let chain = put(dir.path(), "chain.txt", "1 2\n2 3\n3 4\n4 5\n");
    let o = exgraph(&[
        "simulate",
        "--gamma",
        &gamma,
        "--graph",
        &chain,
        "--n",
        "5",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not factorize"), "{}", stderr(&o));

    let small = put(dir.path(), "small.txt", "1 2\n");
    let o = exgraph(&[
        "simulate",
        "--gamma",
        &gamma,
        "--graph",
        &small,
        "--n",
        "5",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_reports_four_parameters_on_the_tree() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_eq29(dir.path(), 2000, 3);
    let tree = put(dir.path(), "tree.txt", TREE);
    let out = dir.path().join("fit");
    let o = exgraph(&[
        "fit",
        "--data",
        s(&data),
        "--graph",
        &tree,
        "--seed",
        "9",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let report = json(&out.join("report.json"));
    assert_eq!(report["params"], 4);
    assert_eq!(report["run"]["seed"], 9);
    assert_eq!(report["run"]["q"], 0.9);
    assert!(report["run"]["version"].is_string());
    let loglik = report["loglik"].as_f64().unwrap();
    assert!((report["aic"].as_f64().unwrap() - (8.0 - 2.0 * loglik)).abs() < 1e-9);
    assert_eq!(report["cliques"].as_array().unwrap().len(), 4);

    let gamma = fs::read_to_string(out.join("gamma.csv")).unwrap();
    let rows: Vec<Vec<f64>> = gamma
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    // Path sums through the tree.
    assert!((rows[2][3] - (rows[0][2] + rows[0][1] + rows[1][3])).abs() < 1e-12);
    assert!(json(&out.join("spec.json"))["cliques"].is_array());
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = put(dir.path(), "bad.csv", "a,b\n1,2\n3,4\n5,oops\n6,7\n");
    let tree = put(dir.path(), "t.txt", "1 2\n");
    let o = exgraph(&[
        "fit",
        "--data",
        &data,
        "--graph",
        &tree,
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error:") && err.contains("line 4"), "{err}");

    let ragged = put(dir.path(), "ragged.csv", "a,b\n1,2\n3\n");
    let o = exgraph(&[
        "fit",
        "--data",
        &ragged,
        "--graph",
        &tree,
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn non_block_graph_names_the_separator() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_eq29(dir.path(), 300, 5);
    // Two triangles glued along the edge 2–3.
    let g = put(dir.path(), "g.txt", "1 2\n1 3\n2 3\n2 4\n3 4\n4 5\n");
    let o = exgraph(&[
        "fit",
        "--data",
        s(&data),
        "--graph",
        &g,
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("separator [2, 3]"), "{}", stderr(&o));
}

#[test]
fn complete_reproduces_the_tree_variogram() {
    let dir = tempfile::tempdir().unwrap();
    let tree = put(dir.path(), "tree.txt", TREE);
    let blocks = put(
        dir.path(),
        "blocks.json",
        r#"[{"nodes":[1,2],"gamma":[[0,1],[1,0]]},{"nodes":[1,3],"gamma":[[0,2],[2,0]]},
           {"nodes":[2,4],"gamma":[[0,1],[1,0]]},{"nodes":[5,2],"gamma":[[0,2],[2,0]]}]"#,
    );
    let out = dir.path().join("c");
    let o = exgraph(&[
        "complete",
        "--graph",
        &tree,
        "--blocks",
        &blocks,
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("gamma.csv")).unwrap(), EQ29);
    assert!(
        stdout(&o).contains("4 edges, 4 parameters"),
        "{}",
        stdout(&o)
    );

    // Same thing from a partial matrix.
    let partial = put(
        dir.path(),
        "p.csv",
        "0,1,2,NA,NA\n1,0,NA,1,2\n2,NA,0,NA,NA\nNA,1,NA,0,NA\nNA,2,NA,NA,0\n",
    );
    let o = exgraph(&[
        "complete",
        "--graph",
        &tree,
        "--gamma",
        &partial,
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("gamma.csv")).unwrap(), EQ29);
}

#[test]
fn complete_rejects_inconsistent_blocks_and_passes_single_cliques_through() {
    let dir = tempfile::tempdir().unwrap();
    let tree = put(dir.path(), "tree.txt", "1 2\n2 3\n");
    let blocks = put(
        dir.path(),
        "blocks.json",
        r#"[{"nodes":[1,2],"gamma":[[0,1],[1,0]]},{"nodes":[2,1],"gamma":[[0,1.5],[1.5,0]]},
           {"nodes":[2,3],"gamma":[[0,1],[1,0]]}]"#,
    );
    let o = exgraph(&[
        "complete",
        "--graph",
        &tree,
        "--blocks",
        &blocks,
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at node 2"), "{}", stderr(&o));

    let triangle = put(dir.path(), "tri.txt", "1 2\n1 3\n2 3\n");
    let block = "[{\"nodes\":[1,2,3],\"gamma\":[[0,1,1.5],[1,0,0.75],[1.5,0.75,0]]}]";
    let blocks = put(dir.path(), "one.json", block);
    let out = dir.path().join("one");
    let o = exgraph(&[
        "complete",
        "--graph",
        &triangle,
        "--blocks",
        &blocks,
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out.join("gamma.csv")).unwrap(),
        "0,1,1.5\n1,0,0.75\n1.5,0.75,0\n"
    );
}

#[test]
fn chi_tables_flag_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    // Comonotone first two columns, independent-ish third.
    let mut text = String::from("x,y,z\n");
    for h in 0..500u64 {
        let z = (h * 7919) % 500;
        writeln_row(&mut text, h as f64, 2.0 * h as f64 + 1.0, z as f64);
    }
    let data = put(dir.path(), "d.csv", &text);
    let out = dir.path().join("chi");
    let o = exgraph(&["chi", "--data", &data, "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("chi.csv"));
    assert_eq!(header[..4], ["i", "j", "name_i", "name_j"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][..4], ["1", "2", "x", "y"]);
    let chi12: f64 = rows[0][4].parse().unwrap();
    assert!((chi12 - 1.0).abs() < 0.02, "{chi12}");

    // Triples need a Hüsler–Reiss model.
    let spec = put(
        dir.path(),
        "spec.json",
        r#"{"schema":1,"dim":3,"edges":[[1,2],[2,3]],"cliques":[
            {"nodes":[1,2],"family":"logistic","params":[0.5]},{"nodes":[2,3],"family":"logistic","params":[0.7]}]}"#,
    );
    let o = exgraph(&[
        "chi",
        "--data",
        &data,
        "--spec",
        &spec,
        "--triples",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).to_lowercase().contains("unsupported"),
        "{}",
        stderr(&o)
    );
}

fn writeln_row(text: &mut String, a: f64, b: f64, c: f64) {
    use std::fmt::Write;
    writeln!(text, "{a},{b},{c}").unwrap();
}

#[test]
fn learn_writes_the_path_and_honours_the_base_tree() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_eq29(dir.path(), 1000, 11);
    let out = dir.path().join("learn");
    let o = exgraph(&[
        "learn",
        "--data",
        s(&data),
        "--seed",
        "2",
        "--loglik",
        "composite",
        "--out",
        s(&out),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    for f in [
        "path.json",
        "aic.csv",
        "chosen_edges.txt",
        "base_tree.txt",
        "weights.csv",
        "report.json",
        "gamma.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_to_string(out.join("base_tree.txt")).unwrap(), TREE);
    let (header, rows) = read_csv(&out.join("aic.csv"));
    assert_eq!(header, ["step", "edges", "p", "loglik", "aic"]);
    let p: Vec<usize> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[0] < w[1]), "{p:?}");

    // A deliberately poor base tree is still where the path starts.
    let star = put(dir.path(), "star.txt", "3 1\n3 2\n3 4\n3 5\n");
    let out2 = dir.path().join("learn2");
    let o = exgraph(&[
        "learn",
        "--data",
        s(&data),
        "--base-tree",
        &star,
        "--seed",
        "2",
        "--loglik",
        "composite",
        "--out",
        s(&out2),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out2.join("base_tree.txt")).unwrap(),
        "1 3\n2 3\n3 4\n3 5\n"
    );
    let path = json(&out2.join("path.json"));
    let first = &path["steps"][0];
    assert_eq!(
        first["edges"],
        serde_json::json!([[1, 3], [2, 3], [3, 4], [3, 5]])
    );
    let aic_star = first["aic"].as_f64().unwrap();
    let aic_mst = json(&out.join("path.json"))["steps"][0]["aic"]
        .as_f64()
        .unwrap();
    assert!(aic_star > aic_mst, "{aic_star} vs {aic_mst}");
}

#[test]
fn fit_then_simulate_round_trips_chi() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_eq29(dir.path(), 4000, 21);
    let tree = put(dir.path(), "tree.txt", TREE);
    let fit = dir.path().join("fit");
    let o = exgraph(&[
        "fit",
        "--data",
        s(&data),
        "--graph",
        &tree,
        "--seed",
        "1",
        "--out",
        s(&fit),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let spec = fit.join("spec.json");
    let resim = dir.path().join("resim");
    let o = exgraph(&[
        "simulate",
        "--spec",
        s(&spec),
        "--n",
        "4000",
        "--seed",
        "22",
        "--out",
        s(&resim),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let chi_of = |d: &Path, name: &str| {
        let out = dir.path().join(name);
        let o = exgraph(&[
            "chi",
            "--data",
            s(d),
            "--spec",
            s(&spec),
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        read_csv(&out.join("chi.csv")).1
    };
    let original = chi_of(&data, "chi_a");
    let refit = chi_of(&resim.join("sample.csv"), "chi_b");
    let mut mean_gap = 0.0;
    for (a, b) in original.iter().zip(&refit) {
        let (ea, sa): (f64, f64) = (a[4].parse().unwrap(), a[5].parse().unwrap());
        let (eb, sb): (f64, f64) = (b[4].parse().unwrap(), b[5].parse().unwrap());
        let model: f64 = a[8].parse().unwrap();
        assert!(
            (ea - eb).abs() < 4.0 * (sa * sa + sb * sb).sqrt() + 0.02,
            "{a:?} vs {b:?}"
        );
        mean_gap += (ea - model).abs() / original.len() as f64;
    }
    assert!(mean_gap < 0.05, "{mean_gap}");
}

#[test]
fn validate_reports_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = put(dir.path(), "g.csv", EQ29);
    let o = exgraph(&["validate", "--gamma", &gamma]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.contains("4 edges") && text.contains("block graph: yes"),
        "{text}"
    );
    assert!(text.contains(TREE), "{text}");

    let bad = put(dir.path(), "bad.csv", "0,1,9\n1,0,1\n9,1,0\n");
    let o = exgraph(&["validate", "--gamma", &bad]);
    assert_eq!(o.status.code(), Some(1));
}
