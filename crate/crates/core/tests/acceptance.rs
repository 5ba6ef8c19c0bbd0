//! Acceptance suite. Each test prints one PASS/FAIL line per criterion.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use mshom::cell::{solve_parabolic_cell, MacroPoint, SolverSettings};
use mshom::config::Config;
use mshom::expr::{Expr, TrigSum};
use mshom::flux::{verify_structure, Coefficient, Condition, Flux, FluxModel, FnFlux, Sampler, StructureConstants};
use mshom::grid::PeriodicGrid;
use mshom::harness::{gradient_report, run_convergence_study, test_weak_mean_convergence, Setup, StudyOutcome};
use mshom::homogenize::{homogenized_flux, tabulate, verify_homogenized, Axis, HomogenizedFlux, MacroLattice};
use mshom::scales::{
    check_jointly, classify, classify_pair, LogPowerScale, Regime, Relation, ScaleError, ScalePair, SeparationMode,
};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, passed: bool, detail: impl std::fmt::Display) {
    println!("criterion {n}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
}

fn pw(num: i64, den: i64) -> LogPowerScale {
    LogPowerScale::frac(num, den, 0, 1)
}

fn trig(src: &str) -> TrigSum {
    TrigSum::from_expr(&Expr::parse(src).unwrap()).unwrap()
}

fn lin1d(m: usize) -> FluxModel {
    FluxModel::linear(1, m, Coefficient::Isotropic(trig("2 + sin(2*pi*y)"))).unwrap()
}

// ---- criterion 1

#[test]
fn criterion_1_classification_goldens() {
    let start = Instant::now();
    let spatial = vec![pw(1, 1), pw(3, 1)];
    let e1 = ScalePair::new(spatial.clone(), vec![pw(2, 1), pw(3, 1), pw(4, 1)]).unwrap();
    let e2 = ScalePair::new(spatial.clone(), vec![pw(2, 1), LogPowerScale::frac(2, 1, -1, 1), pw(3, 1)]).unwrap();
    let e3 = ScalePair::new(spatial, vec![pw(1, 1), pw(2, 1), LogPowerScale::frac(3, 1, -1, 1)]).unwrap();
    let c1 = check_jointly(&e1, SeparationMode::WellSeparated);
    let c2 = check_jointly(&e2, SeparationMode::WellSeparated);
    let c3 = check_jointly(&e3, SeparationMode::WellSeparated);
    let ok1 = c1.accepted && c1.matched_pairs == vec![(1, 1)] && c1.merged_list == vec![pw(1, 1), pw(2, 1), pw(4, 1)];
    let ok2 = !c2.accepted && c2.failure == Some(mshom::scales::JointFailure::TemporalList);
    let ok3 = !c3.accepted && c3.failure == Some(mshom::scales::JointFailure::MergedRemainder);
    let elapsed = start.elapsed();
    let passed = ok1 && ok2 && ok3 && elapsed < Duration::from_millis(100);
    report(1, passed, format!("e1 {ok1}, e2 {ok2}, e3 {ok3}, {elapsed:?}"));
    assert!(passed);
}

// ---- criterion 2

#[test]
fn criterion_2_r_sweep() {
    let start = Instant::now();
    let cases: [((i64, i64), Regime); 5] = [
        ((1, 2), Regime::SlowTemporal),
        ((3, 2), Regime::SlowTemporal),
        ((2, 1), Regime::SlowResonant),
        ((5, 2), Regime::RapidTemporal { lbar: 2 }),
        ((3, 1), Regime::RapidTemporal { lbar: 2 }),
    ];
    let mut passed = true;
    let mut lines = Vec::new();
    for ((n, d), expected) in cases {
        let r = pw(n, d);
        // the two orderings of {eps, eps^r}; only the increasing one is well-separated
        for temporal in [vec![pw(1, 1), r], vec![r, pw(1, 1)]] {
            let ordered = temporal[0].p() < temporal[1].p();
            let got = classify_pair(&pw(1, 1), &temporal);
            let ok = if ordered {
                got.as_ref().map(|c| c.regime) == Ok(expected)
            } else {
                matches!(got, Err(ScaleError::NotJointlyWellSeparated(_)))
            };
            if ordered {
                lines.push(format!("r={n}/{d}: {}", got.map(|c| c.regime.to_string()).unwrap_or_default()));
            }
            passed &= ok;
        }
    }
    let elapsed = start.elapsed();
    passed &= elapsed < Duration::from_millis(100);
    report(2, passed, format!("{}, {elapsed:?}", lines.join("; ")));
    assert!(passed);
}

// ---- criterion 3

type Exp = Ratio<i64>;

/// Order key: larger means faster decay.
fn key(s: &LogPowerScale) -> (Exp, Exp) {
    (s.p(), -s.q())
}

/// Regime predicates evaluated directly on exponents for the spatial scale `eps`.
fn oracle_regimes(temporal: &[LogPowerScale]) -> Vec<Regime> {
    let m = temporal.len();
    let one = (Exp::from_integer(1), Exp::from_integer(0));
    let two = (Exp::from_integer(2), Exp::from_integer(0));
    let k = temporal.iter().filter(|s| key(s) <= one).count();
    let slow2 = |j: usize| key(&temporal[j - 1]) < two;
    let eq2 = |j: usize| key(&temporal[j - 1]) == two;
    let fast2 = |j: usize| key(&temporal[j - 1]) > two;
    let mut out = Vec::new();
    if slow2(m) {
        out.push(Regime::SlowTemporal);
    }
    if eq2(m) {
        out.push(Regime::SlowResonant);
    }
    for l in k + 1..=m {
        if fast2(l) && (l == 1 || slow2(l - 1)) {
            out.push(Regime::RapidTemporal { lbar: l });
        }
    }
    for l in k + 2..=m {
        if eq2(l - 1) {
            out.push(Regime::RapidResonant { lring: l });
        }
    }
    out
}

#[test]
fn criterion_3_partition_property() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spatial = pw(1, 1);
    let mut accepted = 0;
    let mut failures = 0;
    let mut seen = BTreeSet::new();
    while accepted < 10_000 {
        let m = rng.gen_range(1..=4);
        let mut list: Vec<LogPowerScale> = (0..m)
            .map(|_| {
                let den = rng.gen_range(1..=4);
                let num = rng.gen_range(1..=4 * den);
                let q = [-1, 0, 0, 0, 1][rng.gen_range(0..5)];
                LogPowerScale::frac(num, den, q, 1)
            })
            .collect();
        list.sort_by_key(key);
        let pair = ScalePair::new(vec![spatial], list.clone()).unwrap();
        if !check_jointly(&pair, SeparationMode::WellSeparated).accepted {
            continue;
        }
        accepted += 1;
        let expected = oracle_regimes(&list);
        match (classify(&pair), expected.as_slice()) {
            (Ok(c), [only]) if c.regime == *only => {
                seen.insert(c.regime.name());
                let expected_k = list.iter().filter(|s| key(s) <= key(&spatial)).count();
                let matches = list.iter().any(|s| key(s) == key(&spatial));
                if c.k != expected_k || (c.relation == Relation::Matches) != matches {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    let passed = failures == 0 && seen.len() == 4 && elapsed < Duration::from_secs(1);
    report(3, passed, format!("{accepted} lists, {failures} failures, regimes seen {seen:?}, {elapsed:?}"));
    assert!(passed);
}

// ---- criterion 4

/// `(int_0^1 1/A)^(-1)` by composite Simpson with 2^14 panels.
fn harmonic_mean(a: impl Fn(f64) -> f64) -> f64 {
    let n = 1 << 14;
    let h = 1.0 / n as f64;
    let mut s = 1.0 / a(0.0) + 1.0 / a(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } / a(i as f64 * h);
    }
    1.0 / (s * h / 3.0)
}

#[test]
fn criterion_4_harmonic_mean() {
    let oracle = harmonic_mean(|y| 2.0 + (2.0 * std::f64::consts::PI * y).sin());
    assert!((oracle - 3f64.sqrt()).abs() < 1e-10);
    let start = Instant::now();
    let flux = lin1d(1);
    let grid = PeriodicGrid::new(1, 256, 8).unwrap();
    let b = homogenized_flux(&flux, &MacroPoint::origin(1), &[1.0], &Regime::SlowTemporal, grid, &SolverSettings::default_for(1))
        .unwrap()[0];
    let elapsed = start.elapsed();
    let passed = (b - oracle).abs() < 1e-3 && elapsed < Duration::from_secs(1);
    report(4, passed, format!("b = {b}, oracle = {oracle}, {elapsed:?}"));
    assert!(passed);
}

// ---- criteria 5, 8, 9

const SWEEP: &str = r#"{
    "problem": {"dim": 1, "T": 0.5, "f": "1", "u0": "0"},
    "flux": {"kind": "linear", "A": "2 + sin(2*pi*y)"},
    "scales": {"spatial": [{"p": "1"}], "temporal": [{"p": "3/2"}]},
    "eps_list": [0.25, 0.125, 0.0625, 0.03125]
}"#;

static STUDY: OnceLock<(StudyOutcome, Duration)> = OnceLock::new();

fn study() -> &'static (StudyOutcome, Duration) {
    STUDY.get_or_init(|| {
        let start = Instant::now();
        let out = run_convergence_study(&Config::from_json(SWEEP).unwrap()).expect("sweep runs");
        (out, start.elapsed())
    })
}

#[test]
fn criterion_5_convergence_sweep() {
    let (out, elapsed) = study();
    let r = &out.report;
    let l2 = r.column(|row| row.l2_error);
    let fw = r.column(|row| row.flux_weak_error);
    let strict = l2.windows(2).all(|w| w[1] < 1.05 * w[0]);
    let half = l2[3] < 0.5 * l2[0];
    let flux_dec = fw.windows(2).all(|w| w[1] < 1.05 * w[0]);
    let passed = r.valid
        && strict
        && half
        && flux_dec
        && r.verdict("l2_error_decreasing").unwrap().passed
        && r.verdict("flux_weak_error_decreasing").unwrap().passed
        && *elapsed < Duration::from_secs(120);
    report(5, passed, format!("l2 {l2:?}, flux {fw:?}, {elapsed:?}"));
    assert!(passed);
}

#[test]
fn criterion_8_a_priori_bound() {
    let (out, _) = study();
    let h1 = out.report.column(|row| row.l2_h01);
    let max = h1.iter().copied().fold(f64::MIN, f64::max);
    let min = h1.iter().copied().fold(f64::MAX, f64::min);
    let growth = h1.windows(2).all(|w| w[1] > 1.05 * w[0]);
    let passed = max / min < 10.0 && !growth && out.report.verdict("a_priori_h01_bound").unwrap().passed;
    report(8, passed, format!("l2_h01 {h1:?}, max/min {}", max / min));
    assert!(passed);
}

#[test]
fn criterion_9_multiscale_experiments() {
    let start = Instant::now();
    let cfg = Config::from_json(SWEEP).unwrap().resolve();
    let v = Expr::parse("sin(2*pi*y)*sin(2*pi*s1)").unwrap();
    let phi = Expr::parse("x*(1+t)").unwrap();
    let pair = ScalePair::new(vec![pw(1, 1)], vec![pw(2, 1)]).unwrap();
    let weak = test_weak_mean_convergence(&v, &pair, &cfg.eps(), &phi, 1, 0.5, &cfg.mesh, 1.05).unwrap();
    let weak_err: Vec<f64> = weak.rows.iter().map(|r| r.error).collect();
    let weak_ok = weak.decreasing && weak.rows.iter().all(|r| r.limit.abs() < 1e-12) && weak_err[3] < weak_err[0];

    let setup = Setup::new(cfg).unwrap();
    let (out, _) = study();
    let direct: Vec<_> = out
        .direct
        .iter()
        .map(|f| (setup.fine_mesh(f.eps.unwrap()).unwrap().0, f.clone()))
        .collect();
    let grad = gradient_report(&setup, &out.homogenized, &direct).unwrap();
    let grad_err: Vec<f64> = grad.rows.iter().map(|r| r.error).collect();
    // 1 + w' = b / A, so the cell factor is b int sin/(2 + sin) = b (1 - 2/b)
    let b = 3f64.sqrt();
    let theta_oracle = b * (1.0 - 2.0 / b);
    let grad_ok = grad.decreasing && (grad.cell_factor - theta_oracle).abs() < 1e-3 && grad_err[3] < grad_err[0];
    let elapsed = start.elapsed();
    let passed = weak_ok && grad_ok && elapsed < Duration::from_secs(60);
    report(
        9,
        passed,
        format!("weak-mean errors {weak_err:?}; gradient errors {grad_err:?}, cell factor {}, {elapsed:?}", grad.cell_factor),
    );
    assert!(passed);
}

// ---- criterion 6

#[test]
fn criterion_6_resonant_consistency() {
    let start = Instant::now();
    let settings = SolverSettings { tol: 1e-10, max_iter: 20_000 };
    let grid = PeriodicGrid::new(1, 64, 8).unwrap();
    let fluxes: Vec<FluxModel> = vec![
        lin1d(1),
        FluxModel::perturbed(1, 1, Coefficient::Isotropic(trig("2 + sin(2*pi*y)")), trig("1 + cos(2*pi*y)"), 0.5).unwrap(),
    ];
    let mut worst_b: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    for flux in &fluxes {
        for xi in [-2.0, 0.5, 1.0, 3.0] {
            let p = MacroPoint::origin(1);
            let slow = homogenized_flux(flux, &p, &[xi], &Regime::SlowTemporal, grid, &settings).unwrap()[0];
            let res = homogenized_flux(flux, &p, &[xi], &Regime::SlowResonant, grid, &settings).unwrap()[0];
            worst_b = worst_b.max((slow - res).abs());
            let sol = solve_parabolic_cell(flux, &p, &[xi], &[], grid, &settings).unwrap();
            worst_s = worst_s.max(sol.variation_in_s());
        }
    }
    let elapsed = start.elapsed();
    let passed = worst_b < 1e-6 && worst_s < 1e-8 && elapsed < Duration::from_secs(10);
    report(6, passed, format!("max |b diff| = {worst_b:e}, max s-variation = {worst_s:e}, {elapsed:?}"));
    assert!(passed);
}

// ---- criterion 7

#[test]
fn criterion_7_structure_conditions() {
    let start = Instant::now();
    let sampler = Sampler { count: 100_000, seed: 7, k_radius: 4.0, t_max: 1.0 };
    let builtin: Vec<FluxModel> = vec![
        lin1d(1),
        FluxModel::perturbed(1, 1, Coefficient::Isotropic(trig("2 + sin(2*pi*y)")), trig("1 + sin(2*pi*s1)"), 0.5).unwrap(),
        FluxModel::linear(
            2,
            1,
            Coefficient::Symmetric2([trig("2 + cos(2*pi*y1)"), trig("0.5*sin(2*pi*y2)"), trig("3 + sin(2*pi*(y1+y2))")]),
        )
        .unwrap(),
        FluxModel::perturbed(2, 1, Coefficient::Isotropic(trig("2 + sin(2*pi*y1)*cos(2*pi*y2)")), trig("1 + cos(2*pi*s1)"), 1.0)
            .unwrap(),
    ];
    let conditions = [Condition::ZeroAtZero, Condition::Periodicity, Condition::Monotonicity, Condition::Growth];
    let mut builtin_ok = true;
    for f in &builtin {
        let rep = verify_structure(f, &sampler, 1e-9);
        builtin_ok &= conditions.iter().all(|c| rep.check(*c).is_some_and(|k| k.passed));
    }
    let adversarial = FnFlux::new(1, 1, StructureConstants { c0: 1.0, c1: 1.0, alpha: 1.0 }, "minus k", |_, _, _, _, k, out| {
        out[0] = -k[0]
    });
    let rep = verify_structure(&adversarial, &sampler, 1e-9);
    let adversarial_fails = !rep.check(Condition::Monotonicity).unwrap().passed;

    let nonlinear: Arc<dyn Flux> = Arc::new(builtin[1].clone());
    let pair = ScalePair::new(vec![pw(1, 1)], vec![pw(3, 2)]).unwrap();
    let hom = HomogenizedFlux::new(nonlinear, classify(&pair).unwrap(), PeriodicGrid::new(1, 32, 8).unwrap(), SolverSettings::default_for(1))
        .unwrap();
    let hom = tabulate(&hom, &[Axis::new(-4.0, 4.0, 33)], &MacroLattice::single(1)).unwrap();
    let hsampler = Sampler { count: 100_000, seed: 8, k_radius: 4.0, t_max: 1.0 };
    let hrep = verify_homogenized(&hom, 1.0, &hsampler, 1e-9).unwrap();
    let elapsed = start.elapsed();
    let passed = builtin_ok && adversarial_fails && hrep.passed() && elapsed < Duration::from_secs(10);
    report(
        7,
        passed,
        format!("built-in {builtin_ok}, adversarial fails B4 {adversarial_fails}, homogenised {}, {elapsed:?}", hrep.passed()),
    );
    assert!(passed);
}
