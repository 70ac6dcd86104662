use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ran-slicing"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn sweep_csv_schema_is_stable() {
    let o = run(&["sweep", "--param", "b1_fraction", "--values", "0.5,1", "--frames", "2000", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_value,scheme,b1_fraction,distance_m,reward_spec,success_prob,throughput_bps,\
         energy_efficiency,avg_reward_per_packet,reliability,mean_repetitions,error"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.5,fdma,0.5,400,\"20,40=10,3\","));
    assert!(rows[1].starts_with("1,fdma,1,400,\"20,40=10,3\",0,"));
    assert!(!text.contains('\r'));
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("sweep{i}.csv"));
        let o = run(&[
            "sweep",
            "--config",
            configs().join("reference_noma.cfg").to_str().unwrap(),
            "--param",
            "distance",
            "--values",
            "100,200,400",
            "--frames",
            "3000",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn solve_then_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("policy.txt");
    let o = run(&["solve", "--out", policy.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    let mut reports = Vec::new();
    for _ in 0..2 {
        let o = run(&["simulate", "--policy", policy.to_str().unwrap(), "--frames", "5000", "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0));
        reports.push(stdout(&o));
    }
    assert_eq!(reports[0], reports[1]);
    assert!(reports[0].contains("\nlatency_slots,count,cdf\n"));

    let o = run(&[
        "simulate",
        "--config",
        configs().join("shaped_targets.cfg").to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("targets"));
}

#[test]
fn fixed_degree_replaces_policy_file() {
    let o = run(&["simulate", "--fixed-degree", "2", "--frames", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("intermittent.mean_repetitions=2"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(run(&["simulate", "--fixed-degree", "1", "--frames", "0"]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--param", "distance", "--values", ""]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--param", "bandwidth", "--values", "1"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "slicing.scheme=fdma\nphy.p_max_w=lots\n").unwrap();
    let o = run(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("phy.p_max_w"), "{err}");
}

#[test]
fn convergence_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.cfg");
    std::fs::write(&cfg, "mdp.max_iterations=5\nmdp.success_prob=0.5\n").unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("residual"));
}

#[test]
fn estimate_p_reports_intervals() {
    let o = run(&[
        "estimate-p",
        "--config",
        configs().join("fdma_intermittent_full_band.cfg").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("broadband: sub-band 1 has no bandwidth, skipped"));
    let row = text.lines().find(|l| l.starts_with("intermittent,2,false")).unwrap();
    let f: Vec<f64> = row.split(',').skip(4).map(|x| x.parse().unwrap()).collect();
    let (lo, hi, analytic) = (f[1], f[2], f[3]);
    assert!(lo <= analytic && analytic <= hi, "{row}");
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = ran_slicing::scenario::ScenarioConfig::from_text(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ran_slicing::scenario::ScenarioConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
    }
}
