use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tweetcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tweetcnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = tweetcnn(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn preprocess_lines_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.txt");
    fs::write(&input, "Hello @bob :)\nsee http://t.co/x NOW\nok\n").unwrap();
    let out = ok(&["preprocess", p(&input)]);
    assert_eq!(out.lines().collect::<Vec<_>>(), ["hello <user> :)", "see <url> now", "ok"]);

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    assert_eq!(ok(&["preprocess", p(&empty)]), "");

    let missing = tweetcnn(&["preprocess", p(&dir.path().join("nope.txt"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stdout(&missing).is_empty());
}

#[test]
fn weak_label_routes_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pre.txt");
    fs::write(&input, "great day :)\nawful :(\nmixed :) :(\nplain\n").unwrap();
    let (pos, neg) = (dir.path().join("pos.txt"), dir.path().join("neg.txt"));
    let out = ok(&["weak-label", p(&input), p(&pos), p(&neg)]);
    assert_eq!(fs::read_to_string(&pos).unwrap(), "great day\n");
    assert_eq!(fs::read_to_string(&neg).unwrap(), "awful\n");
    assert_eq!(out, "positive\t1\nnegative\t1\ndiscarded\t2\n");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(tweetcnn(&[]).status.code(), Some(2));
    assert_eq!(tweetcnn(&["train", "--bogus"]).status.code(), Some(2));
    let o = tweetcnn(&["train", "--set", "arch=L9", "--output", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L9"));
}

#[test]
fn vocab_and_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, "a b c a\nb c a\n".repeat(50)).unwrap();
    let vocab = ok(&["build-vocab", p(&corpus), "--min-count", "1"]);
    assert!(vocab.lines().any(|l| l.starts_with("a\t")));

    let out = dir.path().join("emb");
    ok(&["train-embeddings", p(&corpus), "-o", p(&out), "--min-count", "1", "--dim", "8", "--epochs", "1"]);
    let tokens = dir.path().join("tokens.txt");
    fs::write(&tokens, "a\nb\nc\n").unwrap();
    let rows = ok(&["project-embeddings", p(&out), p(&tokens), "--pair", "a,a"]);
    assert_eq!(rows.lines().filter(|l| !l.starts_with("cosine")).count(), 3);
    assert!(rows.contains("cosine\ta\ta\t1.0000"));

    fs::write(&tokens, "a\nzebra\n").unwrap();
    let o = tweetcnn(&["project-embeddings", p(&out), p(&tokens)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("zebra"));
}

fn train_small(bundle: &Path, out: &Path) -> String {
    ok(&[
        "train",
        "--config",
        p(&bundle.join("bundle.conf")),
        "--set",
        "filters=8",
        "--set",
        "supervised.epochs=2",
        "--set",
        "skipgram.epochs=1",
        "--seed",
        "3",
        "--output",
        p(out),
    ])
}

#[test]
fn synth_train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    ok(&["synth", p(&bundle), "--distant-lines", "2000", "--gold-train", "90"]);

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let summary = train_small(&bundle, &a);
    assert!(summary.starts_with("validation_f1\t"));
    train_small(&bundle, &b);
    for name in ["manifest.txt", "vocab.tsv", "embedding.bin", "conv1_w.bin", "softmax_b.bin"] {
        assert_eq!(fs::read(a.join("model").join(name)).unwrap(), fs::read(b.join("model").join(name)).unwrap());
    }
    let manifest = fs::read_to_string(a.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("run.status=finished") && manifest.contains("seed=3"));
    let history = fs::read_to_string(a.join("history.tsv")).unwrap();
    assert!(history.starts_with("step\tphase\tval_f1\n"));

    let model = a.join("model");
    let report = ok(&["evaluate", p(&model), p(&bundle.join("en.train.tsv"))]);
    let score: f64 = report.lines().last().unwrap().trim_start_matches("f1_pn=").parse().unwrap();
    assert!((0.0..=1.0).contains(&score));

    let input = dir.path().join("in.txt");
    fs::write(&input, "good w1 w2\nbad w3\nw4 w5 w6\n").unwrap();
    let preds = ok(&["predict", p(&model), p(&input)]);
    assert_eq!(preds.lines().count(), 3);
    for line in preds.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        assert!(["negative", "neutral", "positive"].contains(&f[0]));
        let sum: f64 = f[1..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 2e-4, "{line}");
    }
    fs::write(&input, "").unwrap();
    assert_eq!(ok(&["predict", p(&model), p(&input)]), "");

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "1\tpositive\tfine\n2\tPOS\tnope\n").unwrap();
    let o = tweetcnn(&["evaluate", p(&model), p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}
