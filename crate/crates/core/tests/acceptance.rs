//! Acceptance criteria A1 to A10. Each test prints one `[Ax] PASS|FAIL` line
//! with the measured quantities, then asserts.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riarit_core::baseline::StageProgress;
use riarit_core::exercise::{
    build_wallet, generate_price, validate_answer, AnswerSubmission, Catalog, ExerciseInstance,
    Verdict, EURO_DENOMINATIONS,
};
use riarit_core::experiment::{Experiment, ExperimentSettings, MetricsFrame};
use riarit_core::model::Activity;
use riarit_core::session::{Session, SessionEvent};
use riarit_core::stats::{bootstrap_mean_ci, mean, paired_t_greater};
use riarit_core::students::PopulationSpec;
use riarit_core::{BanditFilter, RiaritParams, Scenario, StudentEstimate, TeacherKind, ValueMask};

/// Written to the raw stderr handle so the line shows up whether or not the
/// harness captures output.
fn report(id: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!("[{id}] {}: {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes());
}

// Q entries in tenths, typed from the reference table. `None` is "-".
// Rows: ExerciseType 1..6, PricePresentation WS W S, CentsNotation x€x x,x€,
// MoneyType Real Token.
type Row = [Option<u32>; 13];
const T: fn(u32) -> Option<u32> = Some;
fn reference_table() -> [(&'static str, Row); 6] {
    [
        ("KnowMoney", [T(7), T(7), T(7), T(10), T(10), T(10), T(8), T(10), T(9), T(9), T(8), T(10), T(1)]),
        ("SumInteger", [T(4), T(6), T(7), T(7), T(9), T(10), T(10), T(10), T(10), T(10), T(10), None, None]),
        ("DecomposeInteger", [T(0), T(3), T(6), T(6), T(7), T(10), T(10), T(10), T(10), T(10), T(10), None, None]),
        ("SumCents", [T(0), T(0), T(0), T(5), T(7), T(10), T(10), T(10), T(10), T(10), T(10), T(9), T(10)]),
        ("DecomposeCents", [T(0), T(0), T(0), T(3), T(5), T(10), T(10), T(10), T(10), T(10), T(10), T(9), T(10)]),
        ("Memory", [T(5), T(5), T(5), T(7), T(7), T(10), T(2), T(6), T(10), T(10), T(10), T(10), T(10)]),
    ]
}

#[test]
fn a1_q_table_exactness() {
    let scenario = Scenario::default_scenario();
    let offsets = [0usize, 6, 9, 11];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for activity in scenario.space.activities() {
        let got = scenario.required_competence(&activity);
        for (kc, row) in reference_table() {
            let i = scenario.kc_index(kc).expect("kc");
            let (mut num, mut den) = (1u64, 1u64);
            for (p, &v) in activity.values().iter().enumerate() {
                if let Some(tenths) = row[offsets[p] + v] {
                    num *= tenths as u64;
                    den *= 10;
                }
            }
            worst = worst.max((got.get(i) - num as f64 / den as f64).abs());
            checked += 1;
        }
    }
    let pass = checked == 72 * 6 && worst <= 1e-12;
    report("A1", pass, format!("{checked} (activity, KC) pairs, max abs deviation {worst:.3e}"));
    assert!(pass);
}

#[test]
fn a2_estimator_ceiling() {
    let scenario = Scenario::default_scenario();
    let mut worst_excess = f64::NEG_INFINITY;
    for activity in scenario.space.activities() {
        let q = scenario.required_competence(&activity);
        let mut est = StudentEstimate::new(scenario.kc_count(), scenario.riarit.alpha);
        for _ in 0..10_000 {
            est.apply(&q, true);
        }
        for i in 0..scenario.kc_count() {
            worst_excess = worst_excess.max(est.competences().get(i) - q.get(i));
        }
    }
    let pass = worst_excess <= 1e-12;
    report("A2", pass, format!("72 activities x 10000 successes, max c - q = {worst_excess:.3e}"));
    assert!(pass);
}

/// Brute-force reading of the advancement rule.
fn oracle_advances(stage: usize, history: &[bool]) -> bool {
    if stage >= 10 {
        return false;
    }
    let n = history.len();
    if stage <= 5 {
        n >= 2 && history[n - 1] && history[n - 2]
    } else {
        n >= 4 && history[n - 4..].iter().filter(|&&b| b).count() >= 3
    }
}

#[test]
fn a3_predefined_sequence_oracle() {
    let mut cases = 0;
    let mut mismatches = 0;
    for stage in 1..=10 {
        for len in 0..=6usize {
            for bits in 0..(1u32 << len) {
                let outcomes: Vec<bool> = (0..len).map(|k| bits >> k & 1 == 1).collect();
                // Replay the outcomes one by one against both implementations.
                let mut progress = StageProgress::at(stage, Vec::new());
                let mut oracle_stage = stage;
                let mut oracle_hist: Vec<bool> = Vec::new();
                for &o in &outcomes {
                    let moved = progress.record(o);
                    oracle_hist.push(o);
                    let expect = oracle_advances(oracle_stage, &oracle_hist);
                    if expect {
                        oracle_stage += 1;
                        oracle_hist.clear();
                    }
                    cases += 1;
                    if moved != expect
                        || progress.stage() != oracle_stage
                        || progress.history() != oracle_hist.as_slice()
                    {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let pass = mismatches == 0;
    report("A3", pass, format!("{cases} decisions over 10 stages, histories up to 6, {mismatches} mismatches"));
    assert!(pass);
}

fn bare_instance(price_cents: u32, wallet: Vec<u32>) -> ExerciseInstance {
    let scenario = Scenario::default_scenario();
    let catalog = Catalog::default_catalog();
    let mut session = Session::create("a4", Arc::new(scenario), Arc::new(catalog), TeacherKind::Predefined, 0)
        .expect("session");
    let mut inst = session.next_exercise().expect("exercise");
    inst.price_cents = price_cents;
    inst.wallet = wallet;
    inst
}

#[test]
fn a4_answer_validation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let template = bare_instance(0, Vec::new());
    let mut submissions = 0usize;
    let mut mismatches = 0usize;
    let mut unsolvable_generated = 0usize;
    for w in 0..1000 {
        // Half the wallets come from the generator, half are arbitrary.
        let (price, wallet) = if w % 2 == 0 {
            // Redraw until the wallet is small enough to enumerate.
            loop {
                let ty = rng.random_range(1..=6u8);
                let price = generate_price(ty, &mut rng).unwrap();
                let wallet = build_wallet(price, &EURO_DENOMINATIONS, &mut rng);
                if wallet.len() <= 12 {
                    break (price.cents(), wallet);
                }
            }
        } else {
            let n = rng.random_range(1..=12);
            let wallet: Vec<u32> = (0..n)
                .map(|_| EURO_DENOMINATIONS[rng.random_range(0..EURO_DENOMINATIONS.len())])
                .collect();
            (rng.random_range(1..=20_000u32), wallet)
        };
        let mut inst = template.clone();
        inst.price_cents = price;
        inst.wallet = wallet.clone();

        let mut solvable = false;
        for mask in 0..(1u32 << wallet.len()) {
            let items: Vec<u32> = (0..wallet.len()).filter(|k| mask >> k & 1 == 1).map(|k| wallet[k]).collect();
            let sum: i64 = items.iter().map(|&c| c as i64).sum();
            solvable |= sum == price as i64;
            let trial = rng.random_range(1..=3u8);
            let verdict = validate_answer(&AnswerSubmission { items, trial }, &inst, &EURO_DENOMINATIONS);
            let expected_ok = sum == price as i64;
            let agrees = match verdict {
                Ok(Verdict::Correct) => expected_ok,
                Ok(Verdict::Incorrect { difference_cents }) => {
                    !expected_ok && trial < 3 && difference_cents == sum - price as i64
                }
                Ok(Verdict::Solution { difference_cents, ref solution }) => {
                    !expected_ok
                        && trial == 3
                        && difference_cents == sum - price as i64
                        && solution.iter().sum::<u32>() == price
                }
                Err(_) => false,
            };
            submissions += 1;
            if !agrees {
                mismatches += 1;
            }
        }
        if w % 2 == 0 && !solvable {
            unsolvable_generated += 1;
        }
    }
    let pass = mismatches == 0 && unsolvable_generated == 0;
    report(
        "A4",
        pass,
        format!(
            "1000 wallets, {submissions} sub-multisets checked, {mismatches} mismatches, {unsolvable_generated} unsolvable generated wallets"
        ),
    );
    assert!(pass);
}

#[test]
fn a5_bandit_concentration() {
    let scenario = Scenario::default_scenario();
    let space = &scenario.space;
    let params = RiaritParams {
        beta: 0.9,
        eta: 0.5,
        gamma: 0.1,
        ..RiaritParams::default()
    };
    let ex = space.index_of("ExerciseType").unwrap();
    let good = space.value_index(ex, "6").unwrap();
    let mask = ValueMask::full(space);
    let start = Instant::now();
    let mut successes = 0;
    let mut steps_needed = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut filter = BanditFilter::new(space, &params);
        let mut reached = None;
        for step in 1..=200 {
            let a: Activity = filter.sample_activity(&mask, &mut rng);
            let r = if a.value(ex) == good { 1.0 } else { 0.0 };
            filter.update(&a, r);
            if filter.probabilities(ex, &mask)[good] > 0.85 {
                reached = Some(step);
                break;
            }
        }
        if let Some(s) = reached {
            successes += 1;
            steps_needed.push(s as f64);
        }
    }
    let elapsed = start.elapsed();
    let pass = successes >= 95 && elapsed.as_secs_f64() < 1.0;
    report(
        "A5",
        pass,
        format!(
            "{successes}/100 seeds exceed 0.85 within 200 updates (mean {:.1} updates), {:.3}s",
            mean(&steps_needed),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

const SEED: u64 = 2013;
const N_STUDENTS: usize = 1000;
const N_RUNS: usize = 20;

fn experiment(spec: PopulationSpec, learn: bool, steps: usize, stride: usize) -> Experiment {
    Experiment::new(
        Scenario::default_scenario(),
        spec,
        ExperimentSettings {
            teacher: TeacherKind::Riarit,
            students_learn: learn,
            learn_comprehension: false,
            n_steps: steps,
            n_runs: N_RUNS,
            seed: SEED,
            trace_stride: stride,
        },
    )
    .expect("experiment")
}

struct Pair {
    predefined: MetricsFrame,
    riarit: MetricsFrame,
}

fn run_pair(exp: &Experiment) -> Pair {
    Pair {
        predefined: exp.with_teacher(TeacherKind::Predefined).run(None),
        riarit: exp.run(None),
    }
}

struct NoLearning {
    q: Pair,
    p: Pair,
    seconds: f64,
}

fn no_learning() -> &'static NoLearning {
    static CELL: OnceLock<NoLearning> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let q = run_pair(&experiment(PopulationSpec::default_q(N_STUDENTS), false, 40, 40));
        let p = run_pair(&experiment(PopulationSpec::default_p(N_STUDENTS), false, 40, 40));
        NoLearning {
            q,
            p,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

/// Per-student `riarit - predefined` differences of `f`.
fn paired(pair: &Pair, f: impl Fn(&riarit_core::experiment::StudentOutcome) -> f64) -> Vec<f64> {
    pair.riarit
        .students
        .iter()
        .zip(&pair.predefined.students)
        .map(|(r, p)| {
            assert_eq!((r.run, r.student), (p.run, p.student));
            f(r) - f(p)
        })
        .collect()
}

#[test]
fn a6_no_learning_p_population() {
    let data = no_learning();
    let kcs = &data.p.riarit.kc_ids;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, kc) in kcs.iter().enumerate() {
        let diffs = paired(&data.p, |s| s.final_est[i]);
        let (_, p) = paired_t_greater(&diffs);
        let ok = mean(&diffs) > 0.0 && p < 0.05;
        pass &= ok;
        parts.push(format!("{kc} diff {:+.3} p {:.2e}{}", mean(&diffs), p, if ok { "" } else { " (x)" }));
    }
    let mut errs = Vec::new();
    for (name, pair) in [("Q", &data.q), ("P", &data.p)] {
        let diffs = paired(pair, |s| s.errors as f64);
        let (pre, ria) = (
            mean(&pair.predefined.students.iter().map(|s| s.errors as f64).collect::<Vec<_>>()),
            mean(&pair.riarit.students.iter().map(|s| s.errors as f64).collect::<Vec<_>>()),
        );
        let ok = mean(&diffs) < 0.0;
        pass &= ok;
        errs.push(format!("{name} errors@40 predefined {pre:.2} riarit {ria:.2}{}", if ok { "" } else { " (x)" }));
    }
    pass &= data.seconds < 60.0;
    report(
        "A6",
        pass,
        format!(
            "final estimate riarit-predefined: {}; {}; simulation {:.1}s",
            parts.join(", "),
            errs.join(", "),
            data.seconds
        ),
    );
    assert!(pass);
}

#[test]
fn a7_estimation_accuracy_q_population() {
    let data = no_learning();
    // Positive when RiARiT is closer to the true levels.
    let diffs: Vec<f64> = paired(&data.q, |s| s.mean_abs_error()).iter().map(|d| -d).collect();
    let (_, p) = paired_t_greater(&diffs);
    let err = |f: &MetricsFrame| mean(&f.students.iter().map(|s| s.mean_abs_error()).collect::<Vec<_>>());
    let (pre, ria) = (err(&data.q.predefined), err(&data.q.riarit));
    let pass = ria < pre && p < 0.05;
    report(
        "A7",
        pass,
        format!("mean |c_est - c_true| at step 40: predefined {pre:.4}, riarit {ria:.4}, one-sided p {p:.2e}"),
    );
    assert!(pass);
}

#[test]
fn a9_q_population_equivalence() {
    let data = no_learning();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, kc) in data.q.riarit.kc_ids.iter().enumerate() {
        let d = mean(&paired(&data.q, |s| s.final_est[i]));
        let ok = d.abs() < 0.05;
        pass &= ok;
        parts.push(format!("{kc} {d:+.3}{}", if ok { "" } else { " (x)" }));
    }
    report("A9", pass, format!("mean final-estimate difference riarit-predefined: {}", parts.join(", ")));
    assert!(pass);
}

/// Mean true competence (over KCs) per student at each recorded step.
fn true_by_step(frame: &MetricsFrame) -> BTreeMap<u32, Vec<f64>> {
    let mut out: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in &frame.rows {
        out.entry(r.step).or_default().push(mean(&r.c_true));
    }
    out
}

#[test]
fn a8_learning_replication() {
    let start = Instant::now();
    let q = run_pair(&experiment(PopulationSpec::default_q(N_STUDENTS), true, 1000, 100));
    let p = run_pair(&experiment(PopulationSpec::default_p(N_STUDENTS), true, 1000, 100));
    let seconds = start.elapsed().as_secs_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut describe = |pair: &Pair| {
        let pre = true_by_step(&pair.predefined);
        let ria = true_by_step(&pair.riarit);
        pre.iter()
            .map(|(&step, pv)| {
                let rv = &ria[&step];
                let diffs: Vec<f64> = rv.iter().zip(pv).map(|(r, p)| r - p).collect();
                let ci = bootstrap_mean_ci(&diffs, 1000, 0.95, &mut rng);
                (step, mean(pv), mean(rv), ci)
            })
            .collect::<Vec<_>>()
    };
    let q_rows = describe(&q);
    let p_rows = describe(&p);

    let p_ok = p_rows.iter().all(|&(_, pre, ria, _)| ria >= pre);
    let q_early = q_rows.iter().filter(|r| r.0 <= 200).all(|&(_, pre, ria, _)| pre >= ria);
    let q_late = q_rows.iter().find(|r| r.0 == 1000).map(|&(_, pre, ria, _)| ria > pre).unwrap_or(false);
    let pass = p_ok && q_early && q_late && seconds < 600.0;

    let fmt = |rows: &[(u32, f64, f64, (f64, f64))]| {
        rows.iter()
            .map(|(s, pre, ria, (lo, hi))| format!("{s}: {pre:.3}/{ria:.3} [{lo:+.3},{hi:+.3}]"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    report(
        "A8",
        pass,
        format!(
            "mean true competence predefined/riarit [95% CI of riarit-predefined]; P every checkpoint {}: {}; Q predefined ahead to 200 {}, riarit ahead at 1000 {}: {}; {:.1}s",
            if p_ok { "ok" } else { "violated" },
            fmt(&p_rows),
            if q_early { "ok" } else { "violated" },
            if q_late { "ok" } else { "violated" },
            fmt(&q_rows),
            seconds
        ),
    );
    assert!(pass);
}

fn scripted_log(seed: u64) -> Vec<SessionEvent> {
    let mut session = Session::create(
        "a10",
        Arc::new(Scenario::default_scenario()),
        Arc::new(Catalog::default_catalog()),
        TeacherKind::Riarit,
        seed,
    )
    .unwrap();
    for k in 0..25 {
        let inst = session.next_exercise().unwrap();
        let right = riarit_core::exercise::greedy_decomposition(inst.price_cents, &EURO_DENOMINATIONS);
        for trial in 1..=3u8 {
            let items = if (k + trial as usize).is_multiple_of(3) { right.clone() } else { vec![inst.wallet[0]] };
            let r = session.submit_answer(AnswerSubmission { items, trial }).unwrap();
            if r.round_closed || !r.status.is_active() {
                break;
            }
        }
        if !session.status().is_active() {
            break;
        }
    }
    session.events().to_vec()
}

fn jsonl(events: &[SessionEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in events {
        serde_json::to_writer(&mut out, e).unwrap();
        out.push(b'\n');
    }
    out
}

#[test]
fn a10_determinism() {
    let exp = experiment(PopulationSpec::default_p(50), true, 60, 1);
    let trace = |workers| {
        let mut buf = Vec::new();
        exp.run(Some(workers)).write_trace(&mut buf).unwrap();
        buf
    };
    let sim_same = trace(1) == trace(3);

    let log_a = jsonl(&scripted_log(99));
    let log_b = jsonl(&scripted_log(99));
    let parsed: Vec<SessionEvent> = log_a
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    let replayed = Session::replay(
        Arc::new(Scenario::default_scenario()),
        Arc::new(Catalog::default_catalog()),
        &parsed,
    )
    .unwrap();
    let replay_same = jsonl(replayed.events()) == log_a;

    let pass = sim_same && log_a == log_b && replay_same;
    report(
        "A10",
        pass,
        format!(
            "simulate traces identical across worker counts: {sim_same}; scripted session logs identical: {}; replayed log identical: {replay_same}",
            log_a == log_b
        ),
    );
    assert!(pass);
}
