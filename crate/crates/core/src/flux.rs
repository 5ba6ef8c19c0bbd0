//! Microscopic flux models `a(x, t, y, s; k)` and sampled verification of their structure
//! conditions: zero at zero, periodicity in the cell variables, strong monotonicity with constant
//! `c0`, and Hölder continuity with constant `c1` and exponent `alpha`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError, TrigSum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluxError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("unsupported spatial dimension {0} (must be 1 or 2)")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid flux specification: {0}")]
    Invalid(String),
}

/// Claimed structure constants of a flux.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureConstants {
    pub c0: f64,
    pub c1: f64,
    pub alpha: f64,
}

/// A microscopic flux. Implementations must be deterministic and reentrant.
pub trait Flux: Send + Sync + fmt::Debug {
    /// Spatial dimension `N`.
    fn dim(&self) -> usize;
    /// Number `m` of temporal cell arguments.
    fn temporal_dim(&self) -> usize;
    fn constants(&self) -> StructureConstants;
    /// Writes `a(x, t, y, s; k)` into `out`. No argument checks and no periodic reduction.
    fn eval_into(&self, x: &[f64], t: f64, y: &[f64], s: &[f64], k: &[f64], out: &mut [f64]);
    /// Whether `a` is linear in `k`.
    fn is_linear(&self) -> bool {
        false
    }
    /// Whether `a` may depend on temporal cell coordinate `j` (zero-based).
    fn depends_on_s(&self, _j: usize) -> bool {
        true
    }
    /// Whether `a` may depend on the macroscopic variables `(x, t)`.
    fn depends_on_macro(&self) -> bool {
        true
    }
    fn describe(&self) -> String;
}

/// Checked evaluation with periodic extension in `y` and `s`.
pub fn evaluate(flux: &dyn Flux, x: &[f64], t: f64, y: &[f64], s: &[f64], k: &[f64]) -> Result<Vec<f64>, FluxError> {
    let n = flux.dim();
    let m = flux.temporal_dim();
    let check = |what, got: usize, expected| {
        if got == expected {
            Ok(())
        } else {
            Err(FluxError::Dimension { what, expected, got })
        }
    };
    check("x", x.len(), n)?;
    check("y", y.len(), n)?;
    check("k", k.len(), n)?;
    check("s", s.len(), m)?;
    let y: Vec<f64> = y.iter().map(|v| v.rem_euclid(1.0)).collect();
    let s: Vec<f64> = s.iter().map(|v| v.rem_euclid(1.0)).collect();
    let mut out = vec![0.0; n];
    flux.eval_into(x, t, &y, &s, k, &mut out);
    Ok(out)
}

/// Symmetric coefficient field `A(y, s)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    /// `A = c(y, s) I`.
    Isotropic(TrigSum),
    /// Full symmetric 2x2 matrix, row-major `[a11, a12, a22]`.
    Symmetric2([TrigSum; 3]),
}

impl Coefficient {
    fn apply(&self, y: &[f64], s: &[f64], k: &[f64], out: &mut [f64]) {
        match self {
            Coefficient::Isotropic(c) => {
                let v = c.eval(y, s);
                for (o, ki) in out.iter_mut().zip(k) {
                    *o = v * ki;
                }
            }
            Coefficient::Symmetric2([a11, a12, a22]) => {
                let (p, q, r) = (a11.eval(y, s), a12.eval(y, s), a22.eval(y, s));
                out[0] = p * k[0] + q * k[1];
                out[1] = q * k[0] + r * k[1];
            }
        }
    }

    /// Gershgorin bounds `(lower, upper)` on the eigenvalues over the whole cell.
    fn eigen_bounds(&self) -> (f64, f64) {
        match self {
            Coefficient::Isotropic(c) => (c.lower_bound(), c.upper_bound()),
            Coefficient::Symmetric2([a11, a12, a22]) => {
                let off = a12.constant_part().abs() + a12.oscillation_bound();
                let lo = (a11.lower_bound() - off).min(a22.lower_bound() - off);
                let hi = (a11.upper_bound() + off).max(a22.upper_bound() + off);
                (lo, hi)
            }
        }
    }

    fn parts(&self) -> Vec<&TrigSum> {
        match self {
            Coefficient::Isotropic(c) => vec![c],
            Coefficient::Symmetric2(m) => m.iter().collect(),
        }
    }
}

/// The built-in flux family
/// `a(y, s; k) = A(y, s) k + delta * beta(y, s) * k / (1 + |k|)`
/// (linear when there is no perturbation).
#[derive(Clone, Debug, PartialEq)]
pub struct FluxModel {
    dim: usize,
    temporal: usize,
    matrix: Coefficient,
    perturbation: Option<(TrigSum, f64)>,
    constants: StructureConstants,
    label: String,
}

impl FluxModel {
    pub fn linear(dim: usize, temporal: usize, matrix: Coefficient) -> Result<FluxModel, FluxError> {
        Self::build(dim, temporal, matrix, None)
    }

    pub fn perturbed(
        dim: usize,
        temporal: usize,
        matrix: Coefficient,
        beta: TrigSum,
        delta: f64,
    ) -> Result<FluxModel, FluxError> {
        Self::build(dim, temporal, matrix, Some((beta, delta)))
    }

    fn build(
        dim: usize,
        temporal: usize,
        matrix: Coefficient,
        perturbation: Option<(TrigSum, f64)>,
    ) -> Result<FluxModel, FluxError> {
        if !(1..=2).contains(&dim) {
            return Err(FluxError::UnsupportedDimension(dim));
        }
        if matches!(matrix, Coefficient::Symmetric2(_)) && dim != 2 {
            return Err(FluxError::Invalid("a matrix coefficient requires dimension 2".into()));
        }
        let mut sums: Vec<&TrigSum> = matrix.parts();
        if let Some((beta, _)) = &perturbation {
            sums.push(beta);
        }
        for ts in &sums {
            let (d, m) = ts.extent();
            if d > dim || m > temporal {
                return Err(FluxError::Invalid(format!(
                    "coefficient references y{d}/s{m} but the flux has N = {dim}, m = {temporal}"
                )));
            }
        }
        let (lo, hi) = matrix.eigen_bounds();
        if lo <= 0.0 {
            return Err(FluxError::Invalid(format!("coefficient is not uniformly positive (lower bound {lo})")));
        }
        let mut c1 = hi;
        if let Some((beta, delta)) = &perturbation {
            if *delta < 0.0 || !delta.is_finite() {
                return Err(FluxError::Invalid(format!("delta must be a nonnegative number, got {delta}")));
            }
            if beta.lower_bound() < 0.0 {
                return Err(FluxError::Invalid("beta must be nonnegative on the cell".into()));
            }
            // k / (1 + |k|) is monotone and 1-Lipschitz
            c1 += delta * beta.upper_bound();
        }
        let label = match &perturbation {
            None => "linear".to_string(),
            Some(_) => "perturbed".to_string(),
        };
        Ok(FluxModel {
            dim,
            temporal,
            matrix,
            perturbation,
            constants: StructureConstants { c0: lo, c1, alpha: 1.0 },
            label,
        })
    }

    /// Replaces the derived constants by user claims.
    pub fn with_claimed(mut self, c0: Option<f64>, c1: Option<f64>) -> FluxModel {
        if let Some(c0) = c0 {
            self.constants.c0 = c0;
        }
        if let Some(c1) = c1 {
            self.constants.c1 = c1;
        }
        self
    }
}

impl Flux for FluxModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn temporal_dim(&self) -> usize {
        self.temporal
    }

    fn constants(&self) -> StructureConstants {
        self.constants
    }

    fn eval_into(&self, _x: &[f64], _t: f64, y: &[f64], s: &[f64], k: &[f64], out: &mut [f64]) {
        self.matrix.apply(y, s, k, out);
        if let Some((beta, delta)) = &self.perturbation {
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = delta * beta.eval(y, s) / (1.0 + norm);
            for (o, ki) in out.iter_mut().zip(k) {
                *o += scale * ki;
            }
        }
    }

    fn is_linear(&self) -> bool {
        self.perturbation.is_none()
    }

    fn depends_on_macro(&self) -> bool {
        false
    }

    fn depends_on_s(&self, j: usize) -> bool {
        self.matrix.parts().iter().any(|c| c.depends_on_s(j))
            || self.perturbation.as_ref().is_some_and(|(b, _)| b.depends_on_s(j))
    }

    fn describe(&self) -> String {
        format!("{} flux (N = {}, m = {})", self.label, self.dim, self.temporal)
    }
}

type FluxFn = dyn Fn(&[f64], f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// A flux given by a closure, for tests and programmatic use.
#[derive(Clone)]
pub struct FnFlux {
    dim: usize,
    temporal: usize,
    constants: StructureConstants,
    linear: bool,
    f: Arc<FluxFn>,
    label: String,
}

impl FnFlux {
    pub fn new(
        dim: usize,
        temporal: usize,
        constants: StructureConstants,
        label: &str,
        f: impl Fn(&[f64], f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> FnFlux {
        FnFlux { dim, temporal, constants, linear: false, f: Arc::new(f), label: label.to_string() }
    }

    pub fn linear(mut self) -> FnFlux {
        self.linear = true;
        self
    }
}

impl fmt::Debug for FnFlux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFlux").field("label", &self.label).field("dim", &self.dim).finish()
    }
}

impl Flux for FnFlux {
    fn dim(&self) -> usize {
        self.dim
    }
    fn temporal_dim(&self) -> usize {
        self.temporal
    }
    fn constants(&self) -> StructureConstants {
        self.constants
    }
    fn eval_into(&self, x: &[f64], t: f64, y: &[f64], s: &[f64], k: &[f64], out: &mut [f64]) {
        (self.f)(x, t, y, s, k, out)
    }
    fn is_linear(&self) -> bool {
        self.linear
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Coefficient descriptor in configuration files: one expression (isotropic) or a symmetric
/// 2x2 matrix of expressions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Scalar(Expr),
    Matrix([[Expr; 2]; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxKind {
    Linear,
    Perturbed,
}

/// Flux section of a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxSpec {
    pub kind: FluxKind,
    #[serde(rename = "A")]
    pub a: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Optional claimed constants overriding the derived bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
}

impl FluxSpec {
    pub fn build(&self, dim: usize, temporal: usize) -> Result<FluxModel, FluxError> {
        let trig = |e: &Expr| -> Result<TrigSum, FluxError> { Ok(TrigSum::from_expr(e)?) };
        let matrix = match &self.a {
            CoefficientSpec::Scalar(e) => Coefficient::Isotropic(trig(e)?),
            CoefficientSpec::Matrix([[a11, a12], [a21, a22]]) => {
                let (t12, t21) = (trig(a12)?, trig(a21)?);
                if t12 != t21 {
                    return Err(FluxError::Invalid("coefficient matrix must be symmetric".into()));
                }
                Coefficient::Symmetric2([trig(a11)?, t12, trig(a22)?])
            }
        };
        let model = match self.kind {
            FluxKind::Linear => FluxModel::linear(dim, temporal, matrix)?,
            FluxKind::Perturbed => {
                let beta = self.beta.as_ref().ok_or_else(|| FluxError::Invalid("perturbed flux needs beta".into()))?;
                let delta = self.delta.ok_or_else(|| FluxError::Invalid("perturbed flux needs delta".into()))?;
                FluxModel::perturbed(dim, temporal, matrix, trig(beta)?, delta)?
            }
        };
        Ok(model.with_claimed(self.c0, self.c1))
    }
}

/// Random sampling parameters for structure verification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub count: usize,
    pub seed: u64,
    pub k_radius: f64,
    /// Times are drawn from `[0, t_max]`.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_t_max() -> f64 {
    1.0
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler { count: 10_000, seed: 0, k_radius: 4.0, t_max: 1.0 }
    }
}

/// One sampled argument tuple.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleTuple {
    pub x: Vec<f64>,
    pub t: f64,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub k: Vec<f64>,
    pub k_prime: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// `a(..; 0) = 0`.
    ZeroAtZero,
    /// Unit shifts in `y` and `s` leave `a` unchanged.
    Periodicity,
    /// `(a(k) - a(k')) . (k - k') >= c0 |k - k'|^2`.
    Monotonicity,
    /// `|a(k) - a(k')| <= c1 (1 + |k| + |k'|)^(1 - alpha) |k - k'|^alpha`.
    Continuity,
    /// `|a(k)| <= c1 (1 + |k|)`.
    Growth,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    /// Worst observed value of the checked quantity (see [`Condition`]).
    pub worst_value: f64,
    /// Threshold the worst value is compared with.
    pub threshold: f64,
    pub worst_sample: Option<SampleTuple>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub samples: usize,
    pub claimed: StructureConstants,
    pub checks: Vec<ConditionCheck>,
    /// Smallest observed monotonicity ratio (diagnostic).
    pub estimated_c0: f64,
    /// Largest observed continuity ratio (diagnostic).
    pub estimated_c1: f64,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, condition: Condition) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
        if norm(&v) <= radius {
            return v;
        }
    }
}

struct Worst {
    value: f64,
    sample: Option<SampleTuple>,
    maximise: bool,
}

impl Worst {
    fn new(maximise: bool) -> Worst {
        Worst { value: if maximise { f64::NEG_INFINITY } else { f64::INFINITY }, sample: None, maximise }
    }

    fn offer(&mut self, value: f64, sample: &SampleTuple) {
        let worse = if self.maximise { value > self.value } else { value < self.value };
        if worse || value.is_nan() {
            self.value = value;
            self.sample = Some(sample.clone());
        }
    }

    fn finish(self, condition: Condition, threshold: f64) -> ConditionCheck {
        let passed = if self.maximise { self.value <= threshold } else { self.value >= threshold };
        ConditionCheck { condition, passed: passed && !self.value.is_nan(), worst_value: self.value, threshold, worst_sample: self.sample }
    }
}

/// Samples `sampler.count` argument tuples and checks the structure conditions against the
/// flux's claimed constants, using relative slack `tol`. A pass is evidence, not proof.
pub fn verify_structure(flux: &dyn Flux, sampler: &Sampler, tol: f64) -> StructureReport {
    let n = flux.dim();
    let m = flux.temporal_dim();
    let claimed = flux.constants();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);

    let mut zero = Worst::new(true);
    let mut periodic = Worst::new(true);
    let mut mono = Worst::new(false);
    let mut cont = Worst::new(true);
    let mut growth = Worst::new(true);

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let zeros = vec![0.0; n];
    for _ in 0..sampler.count.max(1) {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let t = rng.gen_range(0.0..=sampler.t_max);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = sample_ball(&mut rng, n, sampler.k_radius);
        let kp = sample_ball(&mut rng, n, sampler.k_radius);
        let ys: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-3i32..=3) as f64).collect();
        let ss: Vec<f64> = s.iter().map(|v| v + rng.gen_range(-3i32..=3) as f64).collect();
        let tuple = SampleTuple { x, t, y, s, k, k_prime: kp };
        let (x, y, s, k, kp) = (&tuple.x, &tuple.y, &tuple.s, &tuple.k, &tuple.k_prime);

        flux.eval_into(x, t, y, s, &zeros, &mut a);
        zero.offer(norm(&a), &tuple);

        flux.eval_into(x, t, y, s, k, &mut a);
        flux.eval_into(x, t, &ys, &ss, k, &mut b);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        periodic.offer(norm(&diff) / (1.0 + norm(&a)), &tuple);

        growth.offer(norm(&a) / (1.0 + norm(k)), &tuple);

        flux.eval_into(x, t, y, s, kp, &mut b);
        let dk: Vec<f64> = k.iter().zip(kp).map(|(p, q)| p - q).collect();
        let da: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        let dk_norm = norm(&dk);
        if dk_norm > 0.0 {
            let inner: f64 = da.iter().zip(&dk).map(|(p, q)| p * q).sum();
            mono.offer(inner / (dk_norm * dk_norm), &tuple);
            let scale = (1.0 + norm(k) + norm(kp)).powf(1.0 - claimed.alpha) * dk_norm.powf(claimed.alpha);
            cont.offer(norm(&da) / scale, &tuple);
        }
    }

    let estimated_c0 = mono.value;
    let estimated_c1 = cont.value;
    let checks = vec![
        zero.finish(Condition::ZeroAtZero, tol * claimed.c1.max(1.0)),
        periodic.finish(Condition::Periodicity, tol),
        mono.finish(Condition::Monotonicity, claimed.c0 * (1.0 - tol)),
        cont.finish(Condition::Continuity, claimed.c1 * (1.0 + tol)),
        growth.finish(Condition::Growth, claimed.c1 * (1.0 + tol)),
    ];
    StructureReport { samples: sampler.count.max(1), claimed, checks, estimated_c0, estimated_c1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig(src: &str) -> TrigSum {
        TrigSum::from_expr(&Expr::parse(src).unwrap()).unwrap()
    }

    fn linear_1d() -> FluxModel {
        FluxModel::linear(1, 1, Coefficient::Isotropic(trig("2 + sin(2*pi*y)"))).unwrap()
    }

    #[test]
    fn linear_evaluation() {
        let f = linear_1d();
        for y in [0.0, 0.1, 0.37, 0.75] {
            let v = evaluate(&f, &[0.3], 0.2, &[y], &[0.9], &[1.0]).unwrap();
            assert!((v[0] - (2.0 + (2.0 * std::f64::consts::PI * y).sin())).abs() < 1e-14);
        }
        let c = f.constants();
        assert_eq!((c.c0, c.c1, c.alpha), (1.0, 3.0, 1.0));
        assert!(f.is_linear());
        assert!(!f.depends_on_s(0));
    }

    #[test]
    fn zero_gradient_gives_zero_flux() {
        let f = FluxModel::perturbed(2, 1, Coefficient::Isotropic(trig("1")), trig("1 + cos(2*pi*s)/2"), 0.5).unwrap();
        assert_eq!(evaluate(&f, &[0.1, 0.2], 0.0, &[0.3, 0.4], &[0.5], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn perturbed_evaluation() {
        let f = FluxModel::perturbed(2, 0, Coefficient::Isotropic(trig("1")), trig("1"), 1.0).unwrap();
        let v = evaluate(&f, &[0.0, 0.0], 0.0, &[0.2, 0.3], &[], &[1.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.5, 0.0]);
        assert_eq!(f.constants().c1, 2.0);
        assert!(!f.is_linear());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = linear_1d();
        assert!(matches!(evaluate(&f, &[0.0], 0.0, &[0.0], &[], &[1.0]), Err(FluxError::Dimension { what: "s", .. })));
        assert!(matches!(evaluate(&f, &[0.0], 0.0, &[0.0], &[0.0], &[1.0, 2.0]), Err(FluxError::Dimension { .. })));
    }

    #[test]
    fn evaluate_applies_periodic_extension() {
        let f = linear_1d();
        let a = evaluate(&f, &[0.0], 0.0, &[0.25], &[0.5], &[1.0]).unwrap();
        let b = evaluate(&f, &[0.0], 0.0, &[-1.75], &[2.5], &[1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let spec: FluxSpec = serde_json::from_str(r#"{"kind": "linear", "A": "sin(2*pi*y)"}"#).unwrap();
        assert!(spec.build(1, 1).is_err(), "not uniformly positive");
        let spec: FluxSpec = serde_json::from_str(r#"{"kind": "linear", "A": "2 + sin(2*pi*s2)"}"#).unwrap();
        assert!(spec.build(1, 1).is_err(), "s2 beyond m = 1");
        let spec: FluxSpec = serde_json::from_str(r#"{"kind": "perturbed", "A": "1"}"#).unwrap();
        assert!(spec.build(1, 1).is_err(), "missing beta");
        let spec: FluxSpec = serde_json::from_str(
            r#"{"kind": "linear", "A": [["2", "0.5*cos(2*pi*y1)"], ["0.5*cos(2*pi*y1)", "3 + sin(2*pi*y2)"]]}"#,
        )
        .unwrap();
        let f = spec.build(2, 0).unwrap();
        let c = f.constants();
        assert!((c.c0 - 1.5).abs() < 1e-15 && (c.c1 - 4.5).abs() < 1e-15);
        let spec: FluxSpec =
            serde_json::from_str(r#"{"kind": "linear", "A": [["2", "0.5"], ["0.4", "2"]]}"#).unwrap();
        assert!(spec.build(2, 0).is_err(), "asymmetric");
    }

    #[test]
    fn verification_is_deterministic() {
        let f = linear_1d();
        let sampler = Sampler { count: 500, seed: 7, k_radius: 3.0, t_max: 1.0 };
        let a = verify_structure(&f, &sampler, 1e-9);
        let b = verify_structure(&f, &sampler, 1e-9);
        assert_eq!(a, b);
        assert!(a.passed());
    }

    #[test]
    fn overclaimed_monotonicity_is_caught() {
        let f = linear_1d().with_claimed(Some(1.5), None);
        let r = verify_structure(&f, &Sampler { count: 2000, ..Sampler::default() }, 1e-9);
        assert!(!r.check(Condition::Monotonicity).unwrap().passed);
        assert!(r.check(Condition::Continuity).unwrap().passed);
    }
}
