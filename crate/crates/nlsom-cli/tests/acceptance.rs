//! CLI acceptance: determinism and replay (criterion 11), plus the
//! command-level contracts (validation exit codes, report shapes).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_nlsom")
}

fn repo_configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("command runs")
}

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("read artifacts") {
        let entry = entry.expect("entry");
        let name = entry.file_name().to_string_lossy().to_string();
        map.insert(name, std::fs::read(entry.path()).expect("read file"));
    }
    map
}

fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn criterion_11_determinism_and_replay() {
    let started = std::time::Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let configs = repo_configs();

    // identical seeds: byte-identical artifact sets, for several manifests
    let manifests: Vec<(&str, Vec<String>)> = vec![
        (
            "vqa",
            vec![
                "--config".into(),
                configs.join("vqa_monarchy.toml").display().to_string(),
                "--rounds".into(),
                "3".into(),
            ],
        ),
        (
            "retrieval-democracy",
            vec![
                "--config".into(),
                configs.join("retrieval.toml").display().to_string(),
                "--democracy".into(),
                "--w-exec".into(),
            ],
        ),
        (
            "camel",
            vec![
                "--config".into(),
                configs.join("camel.toml").display().to_string(),
            ],
        ),
    ];
    for (name, base_args) in &manifests {
        let out_a = tmp.path().join(format!("{name}-a"));
        let out_b = tmp.path().join(format!("{name}-b"));
        for out in [&out_a, &out_b] {
            let mut args: Vec<String> = vec!["run".into()];
            args.extend(base_args.clone());
            args.extend([
                "--seed".to_string(),
                "7".to_string(),
                "--out".to_string(),
                out.display().to_string(),
            ]);
            let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
            assert_success(&run(&arg_refs), name);
        }
        let bytes_a = artifact_bytes(&out_a);
        let bytes_b = artifact_bytes(&out_b);
        assert_eq!(
            bytes_a.keys().collect::<Vec<_>>(),
            vec!["report.txt", "summary.json", "transcript.log"],
            "{name}: artifact set"
        );
        assert_eq!(bytes_a, bytes_b, "{name}: reruns must be byte-identical");

        // replay verifies the produced log
        let replay = run(&["replay", out_a.to_str().unwrap()]);
        assert_success(&replay, &format!("{name} replay"));
        assert!(String::from_utf8_lossy(&replay.stdout).contains("verified"));
    }

    // the economy journal is equally deterministic and verifiable
    let eom_a = tmp.path().join("eom-a");
    let eom_b = tmp.path().join("eom-b");
    let econ = configs.join("economy.toml").display().to_string();
    for out in [&eom_a, &eom_b] {
        let out_s = out.display().to_string();
        assert_success(
            &run(&[
                "eom-sim", "--config", &econ, "--steps", "2000", "--seed", "11", "--out", &out_s,
            ]),
            "eom-sim",
        );
    }
    assert_eq!(artifact_bytes(&eom_a), artifact_bytes(&eom_b));
    assert_success(&run(&["replay", eom_a.to_str().unwrap()]), "journal replay");

    // a single flipped byte in a transcript is detected (exit code 3)
    let vqa_out = tmp.path().join("vqa-a");
    let transcript_path = vqa_out.join("transcript.log");
    let mut bytes = std::fs::read(&transcript_path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&transcript_path, &bytes).unwrap();
    let tampered = run(&["replay", vqa_out.to_str().unwrap()]);
    assert_eq!(tampered.status.code(), Some(3), "flipped byte must exit 3");

    // a single flipped byte in a journal is detected
    let journal_path = eom_a.join("journal.log");
    let mut bytes = std::fs::read(&journal_path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&journal_path, &bytes).unwrap();
    let tampered = run(&["replay", eom_a.to_str().unwrap()]);
    assert_eq!(tampered.status.code(), Some(3));

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "budget exceeded: {elapsed}");
    println!(
        "criterion 11 (determinism & replay): PASS — byte-identical reruns over 3 manifests + economy journal; replay verifies all logs; single flipped bytes exit 3"
    );
}

#[test]
fn run_rounds_override_satisfies_message_count_law() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("vqa5");
    let config = repo_configs().join("vqa_monarchy.toml");
    assert_success(
        &run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--rounds",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]),
        "vqa rounds 5",
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let counts = &summary["per_stage_counts"];
    // A = 3 answer agents: (1+3) + 5*(1+3) + 2 + 2
    assert_eq!(counts["init"], 4);
    assert_eq!(counts["mindstorm"], 20);
    assert_eq!(counts["gathering"], 2);
    assert_eq!(counts["execution"], 2);
}

#[test]
fn democracy_run_reports_the_nine_cell_recall_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("retr");
    let config = repo_configs().join("retrieval.toml");
    assert_success(
        &run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--democracy",
            "--w-exec",
            "--out",
            out.to_str().unwrap(),
        ]),
        "retrieval democracy",
    );
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("recall grid"));
    for row in ["R1", "R3", "R5"] {
        assert!(report.contains(row), "missing {row} in:\n{report}");
    }
    let cells: usize = report
        .lines()
        .filter(|l| l.starts_with('R'))
        .map(|l| l.split('\t').count() - 1)
        .sum();
    assert_eq!(cells, 9, "nine recall cells expected");
}

#[test]
fn invalid_config_exits_nonzero_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_config = tmp.path().join("bad.toml");
    // democracy with RTE but zero voting agents
    std::fs::write(
        &bad_config,
        r#"
rounds = 1

[structure]
kind = "democracy"
rights = ["rte"]

[task]
adapter = "mcq"

[task.mcq]
question = "q?"
options = [["a", "A"], ["b", "B"], ["c", "C"], ["d", "D"]]
context_provider = "ctx"

[[members]]
id = "organizer"
role = "Organizer"
system_prompt = "You organize."
backend = "be"

[backend.be]
kind = "scripted"
default = "x"

[backend.ctx]
kind = "scripted"
default = "a caption"
"#,
    )
    .unwrap();
    let out = tmp.path().join("should-not-exist");
    let output = run(&[
        "run",
        "--config",
        bad_config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "validation failures exit 1");
    assert!(!out.exists(), "no artifacts on validation failure");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("zero voting agents"), "stderr: {stderr}");
}

#[test]
fn exploration_run_reports_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("explore");
    let config = repo_configs().join("exploration.toml");
    assert_success(
        &run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]),
        "exploration",
    );
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("coverage:"), "report: {report}");
}

#[test]
fn artist_critic_run_reports_census() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("artists");
    let config = repo_configs().join("artist_critic.toml");
    assert_success(
        &run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]),
        "artist-critic",
    );
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("language_agents: 129"), "report: {report}");
}
