//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use featlearn::expctl::{cmd_figure1, cmd_verify, trace_path, VerifyOptions};
use featlearn::gradcheck::{check_instance, Instance, FD_TOLERANCE};
use featlearn::lemmas::ScaleSeparation;
use featlearn::trainer::{Mode, TrainConfig, TrainOutcome};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Tally {
    failed: Vec<u32>,
}

impl Tally {
    fn report(&mut self, id: u32, title: &str, passed: bool, detail: String) {
        let status = if passed { "PASS" } else { "FAIL" };
        println!("criterion {id} [{status}] {title}: {detail}");
        if !passed {
            self.failed.push(id);
        }
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn outcomes(report: &featlearn::expctl::RunReport) -> Vec<&TrainOutcome> {
    report
        .outcomes
        .iter()
        .map(|(_, r)| r.as_ref().expect("figure1 run failed"))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn accuracy(t: &mut Tally, single: &[&TrainOutcome], multi: &[&TrainOutcome]) {
    let s = mean(single.iter().map(|o| o.final_accuracy()));
    let m = mean(multi.iter().map(|o| o.final_accuracy()));
    t.report(
        1,
        "figure1 accuracy gap",
        m >= 0.90 && (0.35..=0.65).contains(&s),
        format!("multi mean {m:.4} (need >= 0.90), single mean {s:.4} (need in [0.35, 0.65])"),
    );
}

fn convergence(t: &mut Tally, single: &[&TrainOutcome], multi: &[&TrainOutcome]) {
    let mut ok = true;
    let mut ratios = Vec::new();
    let mut init_dev = Vec::new();
    for (runs, factor) in [(single, 1.0), (multi, 2.0)] {
        for o in runs {
            let ratio = o.final_loss() / o.initial_loss;
            let target = factor * o.uniform_loss;
            let dev = (o.initial_loss - target).abs() / target;
            ok &= ratio < 0.5 && dev <= 0.02;
            ratios.push(ratio);
            init_dev.push(dev);
        }
    }
    t.report(
        2,
        "loss convergence",
        ok,
        format!(
            "final/initial [{}] (need < 0.5); initial deviation from uniform [{}] (need <= 0.02)",
            fmt_list(&ratios),
            fmt_list(&init_dev)
        ),
    );
}

fn separation(t: &mut Tally, single: &[&TrainOutcome], multi: &[&TrainOutcome]) {
    let count = |runs: &[&TrainOutcome], mode| {
        runs.iter()
            .map(|o| ScaleSeparation::at(o.final_record(), mode))
            .collect::<Vec<_>>()
    };
    let s = count(single, Mode::Single);
    let m = count(multi, Mode::Multi);
    let s_ok = s.iter().filter(|x| x.passed()).count();
    let m_ok = m.iter().filter(|x| x.passed()).count();
    let ratios = |v: &[ScaleSeparation]| fmt_list(&v.iter().map(ScaleSeparation::ratio).collect::<Vec<_>>());
    t.report(
        3,
        "scale separation",
        s_ok >= 2 && m_ok >= 2,
        format!(
            "single psi/|gamma| [{}] {s_ok}/3, multi gamma/psi [{}] {m_ok}/3 (need ratio >= 3 on 2 of 3)",
            ratios(&s),
            ratios(&m)
        ),
    );
}

fn gradient_oracle(t: &mut Tally) {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for seed in 0..20 {
        for mode in [Mode::Single, Mode::Multi] {
            let c = check_instance(Instance::varied(seed), mode, None).expect("instance builds");
            worst = worst.max(c.max_error());
            failures += usize::from(!c.passed());
        }
    }
    t.report(
        4,
        "gradient oracle",
        failures == 0,
        format!("40 checks, {failures} failed, worst rel error {worst:.3e} (need <= {FD_TOLERANCE:e})"),
    );
}

fn decomposition(t: &mut Tally, runs: &[&TrainOutcome]) {
    let gap = runs.iter().filter_map(|o| o.max_ledger_gap()).fold(0.0, f64::max);
    let res = runs.iter().filter_map(|o| o.max_grad_residual()).fold(0.0, f64::max);
    let every_step = runs.iter().all(|o| {
        o.trace
            .iter()
            .all(|r| r.ledger_gap.is_some() && r.grad_residual.is_some())
    });
    t.report(
        5,
        "decomposition consistency",
        every_step && gap <= 1e-8 && res <= 1e-10,
        format!("max ledger gap {gap:.3e} (need <= 1e-8), max residual {res:.3e} (need <= 1e-10)"),
    );
}

fn softmax(t: &mut Tally, runs: &[&TrainOutcome]) {
    let worst = runs.iter().map(|o| o.max_softmax_error()).fold(0.0, f64::max);
    t.report(
        6,
        "softmax derivative identity",
        worst <= 1e-12,
        format!("max error {worst:.3e} over every step of {} runs", runs.len()),
    );
}

fn lemma_suite(t: &mut Tally) {
    let report = cmd_verify(&TrainConfig::theory(Mode::Single), &[0], &VerifyOptions::default()).expect("verify runs");
    let names = [
        "single sign invariance",
        "single zero rho",
        "multi both-negative zero rho",
        "single stage-1 growth",
        "multi stage-1 growth",
    ];
    let rows: Vec<_> = names.iter().map(|n| report.get(0, n).expect("check present")).collect();
    let detail = rows
        .iter()
        .map(|r| format!("{} {} ({})", r.name, if r.passed { "ok" } else { "failed" }, r.detail))
        .collect::<Vec<_>>()
        .join("; ");
    t.report(7, "lemma suite on theory preset", rows.iter().all(|r| r.passed), detail);
}

fn determinism(t: &mut Tally) {
    let exe = env!("CARGO_BIN_EXE_expctl");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        for mode in ["single", "multi"] {
            let status = Command::new(exe)
                .args(["run", "--preset", "figure1", "--mode", mode, "--seeds", "0", "--out"])
                .arg(dir.path())
                .output()
                .expect("expctl starts");
            assert!(
                status.status.success(),
                "expctl run failed: {}",
                String::from_utf8_lossy(&status.stderr)
            );
        }
    }
    let read = |d: &Path, mode| std::fs::read(trace_path(d, mode, 0)).expect("trace written");
    let same = [Mode::Single, Mode::Multi]
        .into_iter()
        .all(|m| read(dirs[0].path(), m) == read(dirs[1].path(), m));
    t.report(
        8,
        "determinism",
        same,
        format!(
            "trace CSVs of two invocations {}",
            if same { "byte-identical" } else { "differ" }
        ),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut t = Tally { failed: Vec::new() };

    let dir = tempfile::tempdir().unwrap();
    let fig = cmd_figure1(
        &TrainConfig::figure1(Mode::Single),
        "figure1",
        &SEEDS,
        dir.path(),
        SEEDS.len(),
    )
    .expect("figure1 runs");
    let single = outcomes(&fig.single);
    let multi = outcomes(&fig.multi);
    let all: Vec<&TrainOutcome> = single.iter().chain(&multi).copied().collect();

    accuracy(&mut t, &single, &multi);
    convergence(&mut t, &single, &multi);
    separation(&mut t, &single, &multi);
    gradient_oracle(&mut t);
    decomposition(&mut t, &all);
    softmax(&mut t, &all);
    lemma_suite(&mut t);
    determinism(&mut t);

    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if t.failed.is_empty() {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {:?}", t.failed);
        ExitCode::FAILURE
    }
}
