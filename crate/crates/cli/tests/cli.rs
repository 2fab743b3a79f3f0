use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn pao(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pao")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn phi_star_monotonic_discoverability_exits_one_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let o = pao(&["check", "--rule", "phi-star", "--property", "monotonic-discoverability", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(report["verdict"], "fails");
    let witness = json(&dir.path().join("witness-monotonic-discoverability.json"));
    assert_eq!(witness["kind"], "monotonic-discoverability");
    let manifest = json(&dir.path().join("run.json"));
    assert_eq!(manifest["exit"], 1);
    assert_eq!(manifest["tool"], "pao");
    assert!(manifest["outputs"]["reports.jsonl"].is_string());
}

#[test]
fn passing_checks_exit_zero() {
    let o = pao(&["check", "--rule", "example1", "--property", "md", "ir", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("property,rule,verdict"));
    assert_eq!(out.matches(",holds,").count(), 2);
    // Without --out the manifest goes to stderr.
    let err = String::from_utf8(o.stderr).unwrap();
    let rec: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(rec["manifest"]["command"], "check");
}

#[test]
fn usage_errors_exit_two_with_a_structured_record() {
    for args in [
        vec!["eval", "--rule", "ttc", "--frobnicate"],
        vec!["eval", "--rule", "ttc"],
        vec!["eval", "--rule", "nope", "--env", "sd"],
        vec!["simulate", "--seeds", "9..3"],
        vec!["replay", "/definitely/not/here"],
    ] {
        let o = pao(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        let rec: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
        assert_eq!(rec["exit"], 2);
        assert!(rec["error"]["kind"].is_string() && rec["error"]["message"].is_string());
    }
}

#[test]
fn emitted_markets_and_profiles_feed_back_into_eval() {
    let dir = tempfile::tempdir().unwrap();
    let first = pao(&["eval", "--rule", "ttc", "--env", "ttc-acyclic", "--seed", "3", "--out", p(dir.path())]);
    assert_eq!(first.status.code(), Some(0));
    let again = pao(&[
        "eval",
        "--rule",
        "ttc",
        "--market",
        p(&dir.path().join("market.json")),
        "--profile",
        p(&dir.path().join("profile.json")),
    ]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&again));
    let table = pao(&["eval", "--rule", "ttc", "--env", "ttc-acyclic", "--seed", "3", "--format", "table"]);
    assert!(stdout(&table).starts_with("agent"));
}

#[test]
fn pao_transcripts_replay_and_tampering_is_caught() {
    for (rule, env, engine) in [("sd", "sd", "genda"), ("ttc", "ttc-acyclic", "osp-adapter"), ("da", "ttc-cyclic", "genda")] {
        let dir = tempfile::tempdir().unwrap();
        let o = pao(&["run-pao", "--rule", rule, "--env", env, "--n", "5", "--m", "5", "--engine", engine, "--out", p(dir.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
        assert!(lines.last().unwrap().contains("\"allocation\""));
        let r = pao(&["replay", p(dir.path())]);
        assert_eq!(r.status.code(), Some(0), "{}", stdout(&r));

        // Rewrite the manifest hash too, so the replay itself must notice.
        let path = dir.path().join("transcript.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        let forged = text.replacen("\"t\":1", "\"t\":7", 1);
        std::fs::write(&path, &forged).unwrap();
        let mut manifest = json(&dir.path().join("run.json"));
        manifest["outputs"]["transcript.jsonl"] = serde_json::json!(sha256(forged.as_bytes()));
        std::fs::write(dir.path().join("run.json"), manifest.to_string()).unwrap();
        let r = pao(&["replay", p(dir.path())]);
        assert_eq!(r.status.code(), Some(1));
        assert!(stdout(&r).contains("\"ok\": false"));
    }
}

fn sha256(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

#[test]
fn phi_star_o1_first_gridlocks_under_the_canonical_engine() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("p.json");
    std::fs::write(&profile, r#"{"a1": ["o1", "o2", "o3", "∅"]}"#).unwrap();
    let o = pao(&["run-pao", "--rule", "phi-star", "--engine", "canonical", "--profile", p(&profile)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"reason\":\"gridlock\""), "{}", stdout(&o));
}

#[test]
fn osp_runs_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = pao(&["run-osp", "--rule", "ttc", "--env", "ttc-acyclic", "--seed", "2", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\"paths\""));
    assert_eq!(pao(&["replay", p(dir.path())]).status.code(), Some(0));
    let cyclic = pao(&["run-osp", "--rule", "ttc", "--env", "ttc-cyclic", "--seed", "2"]);
    assert_eq!(cyclic.status.code(), Some(2));
}

#[test]
fn strategy_scripts_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.json");
    std::fs::write(&script, r#"{"a1": {"type": "random", "seed": 4}}"#).unwrap();
    let o = pao(&["run-pao", "--rule", "sd", "--env", "sd", "--n", "4", "--m", "4", "--strategies", p(&script), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&dir.path().join("run.json"))["inputs"]["strategies"]["a1"]["type"], "random");
    assert_eq!(pao(&["replay", p(dir.path())]).status.code(), Some(0));
    std::fs::write(&script, r#"{"zz": {"type": "random", "seed": 4}}"#).unwrap();
    let bad = pao(&["run-pao", "--rule", "sd", "--env", "sd", "--n", "4", "--m", "4", "--strategies", p(&script)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_writes_a_battery_that_replays() {
    let dir = tempfile::tempdir().unwrap();
    let o = pao(&["simulate", "--seeds", "1..2", "--format", "csv", "--jobs", "2", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = stdout(&o);
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "truthful_rate").unwrap();
    for row in metrics.lines().skip(1) {
        assert_eq!(row.split(',').nth(col).unwrap().parse::<f64>().unwrap(), 1.0);
    }
    for f in ["transcripts.jsonl", "metrics.csv", "table2_truthful.csv", "table4_avg_rank.csv", "table5_equilibrium.csv", "manifest.json", "run.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let r = pao(&["replay", p(dir.path()), "--format", "table"]);
    assert_eq!(r.status.code(), Some(0), "{}", stdout(&r));

    let table = pao(&["simulate", "--seeds", "1", "--format", "table"]);
    let t = stdout(&table);
    assert!(t.contains("table2_truthful") && t.contains("table5_equilibrium"));
}

#[test]
fn session_logs_replay() {
    use pao::experiments::{market_for, Environment};
    use pao::model::MarketFile;
    use pao::session::{derive_tokens, log_jsonl, EngineChoice, Mechanism, Session, SessionConfig, Submission};

    let draw = market_for(1, 1, Environment::Sd, 4, 4);
    let market = draw.market();
    let cfg = SessionConfig {
        market: MarketFile::from_parts(&market, None, draw.scores.as_deref()),
        mechanism: Mechanism::Direct,
        rule: "sd".into(),
        engine: EngineChoice::Genda,
        tokens: None,
        deadline_ms: None,
        default_policy: None,
        idempotency_key: None,
        budget: None,
    };
    let id = cfg.session_id(0);
    let (tokens, admin) = derive_tokens(&id, 4, "k");
    let mut s = Session::create(id, cfg, tokens.clone(), admin).unwrap();
    for t in &tokens {
        s.join(t, None).unwrap();
    }
    for (i, t) in tokens.iter().enumerate() {
        s.submit(t, None, Submission::Report { ranking: draw.profile[i].clone() }).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("session.jsonl");
    std::fs::write(&log, log_jsonl(s.log())).unwrap();
    let o = pao(&["replay", p(&log)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("\"phase\": \"finished\""));
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(2, 3);
    std::fs::write(&log, lines.join("\n")).unwrap();
    assert_eq!(pao(&["replay", p(&log)]).status.code(), Some(1));
}

#[test]
fn serve_answers_http() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pao"))
        .args(["serve", "--addr", "127.0.0.1:0", "--secret", "t"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let hello: serde_json::Value = serde_json::from_str(&line).unwrap();
    let url = hello["listening"].as_str().unwrap().trim_start_matches("http://").to_string();
    let mut conn = std::net::TcpStream::connect(&url).unwrap();
    write!(conn, "GET /sessions/abc/result HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(resp.starts_with("HTTP/1.1 404"), "{resp}");
    assert!(resp.contains("\"kind\":\"not-found\""));
}
