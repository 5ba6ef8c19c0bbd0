use mshom::config::{Config, MeshPolicy};
use mshom::expr::Expr;
use mshom::harness::{run_convergence_study, test_gradient_twoscale, test_weak_mean_convergence, HarnessError};
use mshom::scales::{LogPowerScale, ScalePair};

fn config(f: &str, a: &str, eps: &str) -> Config {
    Config::from_json(&format!(
        r#"{{
            "problem": {{"dim": 1, "T": 0.5, "f": "{f}", "u0": "0"}},
            "flux": {{"kind": "linear", "A": "{a}"}},
            "scales": {{"spatial": [{{"p": "1"}}], "temporal": [{{"p": "3/2"}}]}},
            "eps_list": {eps}
        }}"#
    ))
    .unwrap()
}

fn pair(r: (i64, i64)) -> ScalePair {
    ScalePair::new(vec![LogPowerScale::frac(1, 1, 0, 1)], vec![LogPowerScale::frac(r.0, r.1, 0, 1)]).unwrap()
}

#[test]
fn zero_data_gives_zero_errors() {
    let out = run_convergence_study(&config("0", "2 + sin(2*pi*y)", "[0.25, 0.125]")).unwrap();
    for row in &out.report.rows {
        assert_eq!(row.l2_error, 0.0);
        assert_eq!(row.flux_weak_error, 0.0);
        assert_eq!(row.l2_h01, 0.0);
    }
}

#[test]
fn constant_coefficient_sits_at_the_discretisation_floor() {
    let out = run_convergence_study(&config("1", "2", "[0.25, 0.125, 0.0625]")).unwrap();
    let scale = out.report.rows[0].l2_space_time;
    for row in &out.report.rows {
        assert!(row.l2_error < 1e-3 * scale, "{row:?}");
    }
}

#[test]
fn rows_follow_the_eps_order_and_mesh_policy() {
    let out = run_convergence_study(&config("1", "2 + sin(2*pi*y)", "[0.25, 0.125]")).unwrap();
    let r = &out.report;
    assert_eq!(r.column(|row| row.eps), vec![0.25, 0.125]);
    assert!(r.rows.iter().all(|row| row.nx as f64 >= 8.0 / row.eps && row.nx >= 64));
    assert!(r.rows.iter().all(|row| row.l2_error.is_finite() && row.flux_weak_error.is_finite()));
}

#[test]
fn non_convergence_leaves_a_partial_report() {
    let mut c = config("1", "2 + sin(2*pi*y)", "[0.25, 0.125]");
    c.tolerances.max_iter = Some(1);
    let err = run_convergence_study(&c).unwrap_err();
    assert!(err.error.is_non_convergence(), "{err}");
    if let Some(p) = err.partial {
        assert!(!p.valid);
        assert!(p.error.is_some());
    }
}

#[test]
fn mesh_budget_is_enforced() {
    let mut c = config("1", "2 + sin(2*pi*y)", "[0.25, 0.0625]");
    c.mesh.nx_max = 70;
    let err = run_convergence_study(&c).err().expect("budget exceeded");
    assert!(matches!(err.error, HarnessError::Budget(_)));
}

#[test]
fn two_dimensional_sweep_runs() {
    let c = Config::from_json(
        r#"{
            "problem": {"dim": 2, "T": 0.1, "f": "1", "u0": "0"},
            "flux": {"kind": "linear", "A": "2 + sin(2*pi*y1)*cos(2*pi*y2)"},
            "scales": {"spatial": [{"p": "1"}], "temporal": [{"p": "3/2"}]},
            "eps_list": [0.25, 0.125],
            "mesh": {"rho": 8, "nx_min": 16, "nt_min": 16, "nx_max": 256, "nt_max": 4096},
            "cell": {"ny": 16}
        }"#,
    )
    .unwrap();
    let out = run_convergence_study(&c).unwrap();
    let l2 = out.report.column(|r| r.l2_error);
    assert!(l2.iter().all(|e| e.is_finite() && *e > 0.0));
    assert!(l2[1] < l2[0], "{l2:?}");
}

fn policy() -> MeshPolicy {
    MeshPolicy { nt_min: 64, ..MeshPolicy::default() }
}

#[test]
fn weak_mean_trivial_cases() {
    let eps = [0.25, 0.125, 0.0625];
    let zero_mean = Expr::parse("sin(2*pi*y)").unwrap();
    let one = Expr::parse("1").unwrap();
    let r = test_weak_mean_convergence(&zero_mean, &pair((2, 1)), &eps, &one, 1, 0.5, &policy(), 1.05).unwrap();
    assert!(r.rows.iter().all(|row| row.limit.abs() < 1e-12 && row.error < 1e-10), "{r:?}");

    let macro_only = Expr::parse("x*x + t").unwrap();
    let phi = Expr::parse("cos(pi*x)").unwrap();
    let r = test_weak_mean_convergence(&macro_only, &pair((2, 1)), &eps, &phi, 1, 0.5, &policy(), 1.05).unwrap();
    assert!(r.rows.iter().all(|row| row.error == 0.0));
}

#[test]
fn weak_mean_of_a_product_with_nonzero_mean() {
    // mean of (1 + sin(2 pi y))^2 over the cell is 3/2
    let v = Expr::parse("1 + 2*sin(2*pi*y) + 0.5 - 0.5*cos(4*pi*y)").unwrap();
    let phi = Expr::parse("1").unwrap();
    let r = test_weak_mean_convergence(&v, &pair((3, 2)), &[0.25, 0.125], &phi, 1, 0.5, &policy(), 1.05).unwrap();
    assert!((r.rows[0].limit - 0.75).abs() < 1e-12);
    assert!(r.rows.iter().all(|row| row.error < 1e-3));
}

#[test]
fn weak_mean_rejects_ill_separated_pairs() {
    let v = Expr::parse("sin(2*pi*y)").unwrap();
    let p = ScalePair::new(vec![LogPowerScale::frac(1, 1, 0, 1)], vec![LogPowerScale::frac(1, 1, 0, 1); 2]).unwrap();
    let err = test_weak_mean_convergence(&v, &p, &[0.25], &v, 1, 0.5, &policy(), 1.05).unwrap_err();
    assert!(err.is_out_of_scope());
}

#[test]
fn gradient_test_trivial_cases() {
    let mut c = config("1", "2 + sin(2*pi*y)", "[0.25, 0.125]");
    c.multiscale.theta = Some(Expr::parse("1").unwrap());
    let r = test_gradient_twoscale(&c).unwrap();
    // periodicity kills the cell integral of the corrector gradient
    assert!((r.cell_factor - 1.0).abs() < 1e-12);

    let mut z = config("0", "2 + sin(2*pi*y)", "[0.25, 0.125]");
    z.multiscale.theta = Some(Expr::parse("cos(2*pi*y)").unwrap());
    let r = test_gradient_twoscale(&z).unwrap();
    assert!(r.rows.iter().all(|row| row.j == 0.0 && row.j_star == 0.0));
}

#[test]
fn gradient_test_with_cosine_weight() {
    // the corrector factor b / A is orthogonal to cos(2 pi y) for this coefficient
    let mut c = config("1", "2 + sin(2*pi*y)", "[0.25, 0.125, 0.0625]");
    c.multiscale.theta = Some(Expr::parse("cos(2*pi*y)").unwrap());
    let r = test_gradient_twoscale(&c).unwrap();
    assert!(r.cell_factor.abs() < 1e-10, "{}", r.cell_factor);
    assert!(r.decreasing, "{:?}", r.rows);
}

#[test]
fn gradient_test_needs_the_one_dimensional_linear_case() {
    let mut c = config("1", "2 + sin(2*pi*y)", "[0.25]");
    c.flux.kind = mshom::flux::FluxKind::Perturbed;
    c.flux.beta = Some(Expr::parse("1").unwrap());
    c.flux.delta = Some(0.5);
    assert!(matches!(test_gradient_twoscale(&c), Err(HarnessError::Unsupported(_))));
}
