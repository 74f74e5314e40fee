use std::path::Path;
use std::process::{Command, Output};

use biaseval_core::bws::Tuple;
use serde_json::Value;

fn biaseval(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biaseval"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn config_show_round_trips_and_bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let shown = ok(&biaseval(&["config", "show"], dir.path()));
    assert!(shown.contains("epsilon = 0.01"));
    write(dir.path(), "shown.toml", &shown);
    assert_eq!(ok(&biaseval(&["-c", "shown.toml", "config", "show"], dir.path())), shown);

    write(dir.path(), "bad.toml", "[ranking]\nepsilon = -1.0\n");
    let o = biaseval(&["-c", "bad.toml", "config", "show"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));

    write(dir.path(), "typo.toml", "[ranking]\nepsilonn = 1.0\n");
    assert_eq!(biaseval(&["-c", "typo.toml", "config", "show"], dir.path()).status.code(), Some(2));
}

#[test]
fn merge_then_anonymize() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "rounds.jsonl",
        concat!(
            r#"{"country_id":"france","prompt_id":"p1","temperature":0.0,"language":"en","alias":"French","round":1,"body":"French people love food."}"#,
            "\n",
            r#"{"country_id":"france","prompt_id":"p1","temperature":0.0,"language":"en","alias":"French","round":2,"body":"French people love food!"}"#,
            "\n",
            r#"{"country_id":"france","prompt_id":"p1","temperature":0.0,"language":"en","alias":"France","round":1,"body":"People from France are often called romantic by Germans."}"#,
            "\n",
        ),
    );
    ok(&biaseval(&["corpus", "merge", "--input", "rounds.jsonl", "--output", "merged.jsonl"], dir.path()));
    let merged: Value = serde_json::from_str(read(dir.path(), "merged.jsonl").trim()).unwrap();
    assert_eq!(merged["rounds_merged"], 3);
    assert_eq!(
        merged["body"],
        "French people love food.\nPeople from France are often called romantic by Germans."
    );

    ok(&biaseval(&["corpus", "anonymize", "--input", "merged.jsonl", "--output", "anon.jsonl"], dir.path()));
    let anon: Value = serde_json::from_str(read(dir.path(), "anon.jsonl").trim()).unwrap();
    let body = anon["body"].as_str().unwrap();
    assert!(!body.contains("France") && !body.contains("French") && !body.contains("German"), "{body}");
    assert_eq!(anon["anonymized"], true);
}

#[test]
fn schedule_expand_rank_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: String = ["chad", "mali", "peru", "fiji", "oman", "iran", "cuba", "togo"]
        .iter()
        .map(|c| {
            format!(
                r#"{{"country_id":"{c}","prompt_id":"p1","temperature":0.0,"language":"zh","body":"[MASK]人很好","rounds_merged":1,"anonymized":true}}"#
            ) + "\n"
        })
        .collect();
    write(dir.path(), "corpus.jsonl", &corpus);
    ok(&biaseval(
        &["bws", "schedule", "--corpus", "corpus.jsonl", "--output", "tuples.json", "--repetitions", "3"],
        dir.path(),
    ));
    let tuples: Vec<Tuple> = serde_json::from_str(&read(dir.path(), "tuples.json")).unwrap();
    assert_eq!(tuples.len(), 6);

    // The annotator always prefers the alphabetically first text.
    let judgments: String = tuples
        .iter()
        .map(|t| {
            let mut ids = t.text_ids.clone();
            ids.sort();
            format!(
                r#"{{"tuple_id":{},"annotator_id":"x","best_id":"{}","worst_id":"{}","timestamp":"2024-01-01T00:00:00Z"}}"#,
                t.tuple_id,
                ids[0],
                ids[3]
            ) + "\n"
        })
        .collect();
    write(dir.path(), "judgments.jsonl", &judgments);
    ok(&biaseval(
        &["bws", "expand", "--tuples", "tuples.json", "--judgments", "judgments.jsonl", "--output", "pairs.csv"],
        dir.path(),
    ));
    assert_eq!(read(dir.path(), "pairs.csv").lines().count(), 1 + 6 * 5);

    ok(&biaseval(&["rank", "--pairs", "pairs.csv", "--output", "scores.csv"], dir.path()));
    let scores = read(dir.path(), "scores.csv");
    let top = scores
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .max_by(|a, b| a[2].parse::<f64>().unwrap().total_cmp(&b[2].parse().unwrap()))
        .unwrap();
    assert_eq!(top[0], "zh-p1-t0-chad");

    ok(&biaseval(&["analyze", "map", "--scores", "scores.csv", "--output", "map.csv"], dir.path()));
    let map = read(dir.path(), "map.csv");
    assert!(map.starts_with("country_id,log_score,bucket\n"));
    assert!(map.lines().any(|l| l.starts_with("chad,") && l.ends_with(",9")), "{map}");

    // Without smoothing a one-directional graph has no estimate; the error
    // names the components.
    let o = biaseval(&["rank", "--pairs", "pairs.csv", "--output", "x.csv", "--epsilon", "0"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage `rank`") && err.contains("zh-p1-t0-chad"), "{err}");
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn kappa_and_compare_print_json() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.csv", "item_id,label\n1,x\n2,y\n3,x\n4,y\n");
    write(dir.path(), "b.csv", "item_id,label\n4,y\n3,x\n2,y\n1,x\n");
    let k: Value = serde_json::from_str(&ok(&biaseval(&["bws", "kappa", "a.csv", "b.csv"], dir.path()))).unwrap();
    assert_eq!(k["kappa"], 1.0);
    assert_eq!(k["n"], 4);

    write(dir.path(), "low.csv", "item_id,value\na,1\nb,2\nc,3\nd,\n");
    write(dir.path(), "high.csv", "item_id,value\ne,10\nf,11\ng,12\n");
    let c: Value =
        serde_json::from_str(&ok(&biaseval(&["analyze", "compare", "low.csv", "high.csv"], dir.path()))).unwrap();
    assert_eq!(c["n_a"], 3);
    assert_eq!(c["u"], 0.0);

    let o = biaseval(&["analyze", "compare", "low.csv", "high.csv", "--column", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

const RUN: &str = r#"
[corpus]
countries = ["chad", "peru", "mali"]
languages = ["zh"]
prompts = ["p1"]
temperatures = [0.0, 0.3]

[bws]
repetitions = 2
"#;

#[test]
fn run_resumes_and_force_reruns() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", RUN);
    let first = ok(&biaseval(&["-c", "run.toml", "run", "--mock", "--out", "out"], dir.path()));
    assert_eq!(first.matches(" ran").count(), 7, "{first}");
    assert!(!dir.path().join("out/correlations.csv").exists());
    let again = ok(&biaseval(&["-c", "run.toml", "run", "--mock", "--out", "out"], dir.path()));
    assert_eq!(again.matches("skipped").count(), 7, "{again}");

    // Deleting a middle artifact re-runs that stage and everything after it.
    std::fs::remove_file(dir.path().join("out/tuples.json")).unwrap();
    let partial = ok(&biaseval(&["-c", "run.toml", "run", "--mock", "--out", "out"], dir.path()));
    let ran: Vec<&str> = partial.lines().filter(|l| l.ends_with(" ran")).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ran, ["schedule", "annotate", "rank", "analyze"]);

    let forced = ok(&biaseval(&["-c", "run.toml", "run", "--mock", "--force", "--out", "out"], dir.path()));
    assert_eq!(forced.matches(" ran").count(), 7);
    assert!(!std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn human_annotation_needs_exported_pairs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", &format!("{RUN}annotator = \"human\"\n"));
    let o = biaseval(&["-c", "run.toml", "run", "--mock", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage `annotate`"));
    assert!(dir.path().join("out/tuples.json").exists());

    // Pairs as exported by the annotation service.
    let tuples: Vec<Tuple> = serde_json::from_str(&read(dir.path(), "out/tuples.json")).unwrap();
    let mut csv = String::from("winner_id,loser_id,source,order_tag,round\n");
    for t in &tuples {
        for w in 0..3 {
            csv += &format!("{},{},human,same,{}\n", t.text_ids[w], t.text_ids[w + 1], t.round);
        }
    }
    write(dir.path(), "out/pairs.csv", &csv);
    let out = ok(&biaseval(&["-c", "run.toml", "run", "--mock", "--out", "out"], dir.path()));
    assert!(out.contains("annotate   skipped") && out.contains("rank       ran"), "{out}");
    assert!(dir.path().join("out/country_scores.csv").exists());
}
