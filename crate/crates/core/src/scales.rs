//! Log-power scale functions and the regime classification of spatial/temporal scale pairs.
//!
//! A scale function is represented symbolically as `eps^p * |log eps|^q` with exact rational
//! exponents, which gives a decidable total asymptotic order. On top of that order this module
//! implements (well-)separatedness of lists, the joint check for a pair of lists, and the
//! classification of a single spatial scale against a list of temporal scales into one of the
//! four local-problem regimes.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact exponent type.
pub type Exponent = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaleError {
    #[error("scale exponent p must be positive, got {0}")]
    NonPositivePower(Exponent),
    #[error("cannot parse rational number {0:?}")]
    BadRational(String),
    #[error("scale list must not be empty")]
    EmptyList,
    #[error("pair is not jointly well-separated: {0}")]
    NotJointlyWellSeparated(JointFailure),
    #[error("pair is outside the supported homogenisation scope ({0})")]
    OutsideScope(String),
    #[error("expected exactly one spatial scale, got {0}")]
    SpatialCount(usize),
}

/// Parses `"a/b"`, `"a"`, or a finite decimal such as `"1.25"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Exponent, ScaleError> {
    let bad = || ScaleError::BadRational(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(|_| bad())?;
        let d: i64 = den.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    if let Ok(n) = s.parse::<i64>() {
        return Ok(Ratio::from_integer(n));
    }
    // finite decimal, possibly with exponent part
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let negative = mantissa.starts_with('-');
    let digits = mantissa.trim_start_matches(['-', '+']);
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut num: i64 = all_digits.parse().map_err(|_| bad())?;
    let mut den: i64 = 1;
    let shift = exp10 - frac_part.len() as i32;
    for _ in 0..shift.unsigned_abs() {
        if shift > 0 {
            num = num.checked_mul(10).ok_or_else(bad)?;
        } else {
            den = den.checked_mul(10).ok_or_else(bad)?;
        }
    }
    if negative {
        num = -num;
    }
    Ok(Ratio::new(num, den))
}

fn format_rational(r: &Exponent) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A scale function `eps -> eps^p |log eps|^q` with `p > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LogPowerScale {
    p: Exponent,
    q: Exponent,
}

impl LogPowerScale {
    pub fn new(p: Exponent, q: Exponent) -> Result<Self, ScaleError> {
        if !p.is_positive() {
            return Err(ScaleError::NonPositivePower(p));
        }
        Ok(Self { p, q })
    }

    /// Pure power `eps^p`.
    pub fn power(p: Exponent) -> Result<Self, ScaleError> {
        Self::new(p, Exponent::zero())
    }

    /// Convenience constructor for integer-ratio exponents; panics if `p <= 0`.
    pub fn frac(p_num: i64, p_den: i64, q_num: i64, q_den: i64) -> Self {
        Self::new(Ratio::new(p_num, p_den), Ratio::new(q_num, q_den))
            .expect("scale exponent p must be positive")
    }

    pub fn p(&self) -> Exponent {
        self.p
    }

    pub fn q(&self) -> Exponent {
        self.q
    }

    /// Evaluates the scale function at a concrete `eps` in `(0, 1)`.
    pub fn eval(&self, eps: f64) -> f64 {
        let p = *self.p.numer() as f64 / *self.p.denom() as f64;
        let q = *self.q.numer() as f64 / *self.q.denom() as f64;
        let base = eps.powf(p);
        if self.q.is_zero() {
            base
        } else {
            base * eps.ln().abs().powf(q)
        }
    }

    /// The square of the scale function, `eps^{2p} |log eps|^{2q}`.
    pub fn squared(&self) -> Self {
        Self { p: self.p * 2, q: self.q * 2 }
    }

    /// Re-expresses `self` in terms of the parameter `delta = reference(eps)`.
    ///
    /// With `reference = eps^a |log eps|^b` one has `eps ~ C delta^{1/a} |log delta|^{-b/a}`, so
    /// `eps^p |log eps|^q ~ C' delta^{p/a} |log delta|^{q - p b / a}`. Asymptotic order and
    /// equivalence (up to constants) are preserved.
    pub fn normalised_by(&self, reference: &LogPowerScale) -> LogPowerScale {
        let a = reference.p;
        let b = reference.q;
        LogPowerScale { p: self.p / a, q: self.q - self.p * b / a }
    }

    /// Substitutes `eps -> eps^c`, i.e. `(p, q) -> (c p, q)` up to a constant factor.
    pub fn reparametrised(&self, c: Exponent) -> Result<LogPowerScale, ScaleError> {
        LogPowerScale::new(self.p * c, self.q)
    }
}

impl fmt::Display for LogPowerScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "eps^{}", format_rational(&self.p))?;
        if !self.q.is_zero() {
            write!(f, "|log eps|^{}", format_rational(&self.q))?;
        }
        Ok(())
    }
}

impl FromStr for LogPowerScale {
    type Err = ScaleError;

    /// Accepts `"p"` or `"p:q"`, e.g. `"3/2"` or `"2:-1"` for `eps^2/|log eps|`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((p, q)) => LogPowerScale::new(parse_rational(p)?, parse_rational(q)?),
            None => LogPowerScale::power(parse_rational(s)?),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RationalRepr {
    Text(String),
    Int(i64),
    Float(f64),
}

impl RationalRepr {
    fn into_rational(self) -> Result<Exponent, ScaleError> {
        match self {
            RationalRepr::Text(s) => parse_rational(&s),
            RationalRepr::Int(n) => Ok(Ratio::from_integer(n)),
            RationalRepr::Float(x) => parse_rational(&format!("{x}")),
        }
    }
}

#[derive(Serialize)]
struct ScaleOut {
    p: String,
    q: String,
}

#[derive(Deserialize)]
struct ScaleIn {
    p: RationalRepr,
    #[serde(default)]
    q: Option<RationalRepr>,
}

impl Serialize for LogPowerScale {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ScaleOut { p: format_rational(&self.p), q: format_rational(&self.q) }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LogPowerScale {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ScaleIn::deserialize(deserializer)?;
        let p = raw.p.into_rational().map_err(de::Error::custom)?;
        let q = match raw.q {
            Some(q) => q.into_rational().map_err(de::Error::custom)?,
            None => Exponent::zero(),
        };
        LogPowerScale::new(p, q).map_err(de::Error::custom)
    }
}

/// Asymptotic relation of `a` to `b` as `eps -> 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Asymptotic {
    /// `a / b -> 0`.
    Faster,
    /// `a / b` is constant.
    Equivalent,
    /// `a / b -> infinity`.
    Slower,
}

/// Compares two scales via the lexicographic order on `(p, -q)`.
pub fn compare(a: &LogPowerScale, b: &LogPowerScale) -> Asymptotic {
    match a.p.cmp(&b.p).then_with(|| b.q.cmp(&a.q)) {
        Ordering::Greater => Asymptotic::Faster,
        Ordering::Equal => Asymptotic::Equivalent,
        Ordering::Less => Asymptotic::Slower,
    }
}

/// Sort key ordering scales from slowest to fastest.
fn slow_to_fast(a: &LogPowerScale, b: &LogPowerScale) -> Ordering {
    a.p.cmp(&b.p).then_with(|| b.q.cmp(&a.q))
}

/// Every successive entry tends to zero relative to its predecessor.
pub fn is_separated(list: &[LogPowerScale]) -> bool {
    list.windows(2).all(|w| compare(&w[1], &w[0]) == Asymptotic::Faster)
}

/// For log-power scales, well-separatedness holds iff the powers strictly increase.
pub fn is_well_separated(list: &[LogPowerScale]) -> bool {
    list.windows(2).all(|w| w[1].p > w[0].p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparationMode {
    Separated,
    WellSeparated,
}

impl SeparationMode {
    fn test(self, list: &[LogPowerScale]) -> bool {
        match self {
            SeparationMode::Separated => is_separated(list),
            SeparationMode::WellSeparated => is_well_separated(list),
        }
    }
}

/// Which condition of the joint check failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointFailure {
    SpatialList,
    TemporalList,
    MergedRemainder,
}

impl fmt::Display for JointFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            JointFailure::SpatialList => "spatial list fails the separation test",
            JointFailure::TemporalList => "temporal list fails the separation test",
            JointFailure::MergedRemainder => "merged unmatched remainder fails the separation test",
        };
        f.write_str(text)
    }
}

/// A list of spatial scales together with a list of temporal scales.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalePair {
    pub spatial: Vec<LogPowerScale>,
    pub temporal: Vec<LogPowerScale>,
}

impl ScalePair {
    pub fn new(spatial: Vec<LogPowerScale>, temporal: Vec<LogPowerScale>) -> Result<Self, ScaleError> {
        if spatial.is_empty() || temporal.is_empty() {
            return Err(ScaleError::EmptyList);
        }
        Ok(Self { spatial, temporal })
    }

    /// The single spatial scale of an `n = 1` pair.
    pub fn single_spatial(&self) -> Result<&LogPowerScale, ScaleError> {
        match self.spatial.as_slice() {
            [one] => Ok(one),
            other => Err(ScaleError::SpatialCount(other.len())),
        }
    }
}

/// Outcome of the joint (well-)separatedness check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JointCheck {
    pub accepted: bool,
    /// Zero-based `(spatial index, temporal index)` pairs of equivalent scales.
    pub matched_pairs: Vec<(usize, usize)>,
    /// The unmatched scales of both lists, sorted from slowest to fastest.
    pub merged_list: Vec<LogPowerScale>,
    pub failure: Option<JointFailure>,
}

pub fn check_jointly(pair: &ScalePair, mode: SeparationMode) -> JointCheck {
    let rejected = |failure| JointCheck {
        accepted: false,
        matched_pairs: Vec::new(),
        merged_list: Vec::new(),
        failure: Some(failure),
    };
    if !mode.test(&pair.spatial) {
        return rejected(JointFailure::SpatialList);
    }
    if !mode.test(&pair.temporal) {
        return rejected(JointFailure::TemporalList);
    }

    let mut temporal_used = vec![false; pair.temporal.len()];
    let mut spatial_used = vec![false; pair.spatial.len()];
    let mut matched_pairs = Vec::new();
    for (i, s) in pair.spatial.iter().enumerate() {
        let hit = pair
            .temporal
            .iter()
            .enumerate()
            .find(|&(j, t)| !temporal_used[j] && compare(s, t) == Asymptotic::Equivalent);
        if let Some((j, _)) = hit {
            temporal_used[j] = true;
            spatial_used[i] = true;
            matched_pairs.push((i, j));
        }
    }

    let mut merged_list: Vec<LogPowerScale> = pair
        .spatial
        .iter()
        .zip(&spatial_used)
        .chain(pair.temporal.iter().zip(&temporal_used))
        .filter(|(_, used)| !**used)
        .map(|(s, _)| *s)
        .collect();
    merged_list.sort_by(slow_to_fast);

    let accepted = mode.test(&merged_list);
    JointCheck {
        accepted,
        matched_pairs,
        merged_list,
        failure: (!accepted).then_some(JointFailure::MergedRemainder),
    }
}

/// Whether the spatial scale coincides with temporal entry `k` or sits strictly between
/// temporal entries `k` and `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Matches,
    Between,
}

/// Local-problem regime. Indices are one-based, as in the temporal list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    SlowTemporal,
    SlowResonant,
    RapidTemporal { lbar: usize },
    RapidResonant { lring: usize },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::SlowTemporal => "SlowTemporal",
            Regime::SlowResonant => "SlowResonant",
            Regime::RapidTemporal { .. } => "RapidTemporal",
            Regime::RapidResonant { .. } => "RapidResonant",
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Regime::RapidTemporal { lbar } => Some(*lbar),
            Regime::RapidResonant { lring } => Some(*lring),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index() {
            Some(i) => write!(f, "{}({i})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RegimeClassification {
    /// Number of temporal scales slower than or equivalent to the spatial scale.
    pub k: usize,
    pub relation: Relation,
    pub regime: Regime,
}

#[derive(Serialize, Deserialize)]
struct ClassificationRepr {
    k: usize,
    relation: Relation,
    regime: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
}

impl Serialize for RegimeClassification {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ClassificationRepr {
            k: self.k,
            relation: self.relation,
            regime: self.regime.name().to_string(),
            index: self.regime.index(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RegimeClassification {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ClassificationRepr::deserialize(deserializer)?;
        let need_index = || raw.index.ok_or_else(|| de::Error::custom("regime index missing"));
        let regime = match raw.regime.as_str() {
            "SlowTemporal" => Regime::SlowTemporal,
            "SlowResonant" => Regime::SlowResonant,
            "RapidTemporal" => Regime::RapidTemporal { lbar: need_index()? },
            "RapidResonant" => Regime::RapidResonant { lring: need_index()? },
            other => return Err(de::Error::custom(format!("unknown regime {other:?}"))),
        };
        Ok(RegimeClassification { k: raw.k, relation: raw.relation, regime })
    }
}

/// Membership of a normalised temporal list in each of the regime subsets, in the order
/// `SlowTemporal, SlowResonant, RapidTemporal(k+1..=m), RapidResonant(k+2..=m)`.
fn regime_candidates(k: usize, normalised: &[LogPowerScale]) -> Vec<Regime> {
    let m = normalised.len();
    let eps_sq = LogPowerScale::frac(2, 1, 0, 1);
    // vs[j - 1] compares temporal entry j to eps^2
    let vs: Vec<Asymptotic> = normalised.iter().map(|s| compare(s, &eps_sq)).collect();
    let mut hits = Vec::new();
    if vs[m - 1] == Asymptotic::Slower {
        hits.push(Regime::SlowTemporal);
    }
    if vs[m - 1] == Asymptotic::Equivalent {
        hits.push(Regime::SlowResonant);
    }
    for lbar in (k + 1)..=m {
        let predecessor_slow = lbar == 1 || vs[lbar - 2] == Asymptotic::Slower;
        if vs[lbar - 1] == Asymptotic::Faster && predecessor_slow {
            hits.push(Regime::RapidTemporal { lbar });
        }
    }
    for lring in (k + 2)..=m {
        if vs[lring - 2] == Asymptotic::Equivalent {
            hits.push(Regime::RapidResonant { lring });
        }
    }
    hits
}

/// Classifies a spatial scale against a temporal list.
pub fn classify_pair(
    spatial: &LogPowerScale,
    temporal: &[LogPowerScale],
) -> Result<RegimeClassification, ScaleError> {
    if temporal.is_empty() {
        return Err(ScaleError::EmptyList);
    }
    let pair = ScalePair { spatial: vec![*spatial], temporal: temporal.to_vec() };
    let joint = check_jointly(&pair, SeparationMode::WellSeparated);
    if let Some(failure) = joint.failure {
        return Err(ScaleError::NotJointlyWellSeparated(failure));
    }

    let normalised: Vec<LogPowerScale> = temporal.iter().map(|s| s.normalised_by(spatial)).collect();
    let unit = LogPowerScale::frac(1, 1, 0, 1);
    let k = normalised.iter().take_while(|s| compare(s, &unit) != Asymptotic::Faster).count();
    let relation = if k > 0 && compare(&normalised[k - 1], &unit) == Asymptotic::Equivalent {
        Relation::Matches
    } else {
        Relation::Between
    };

    let hits = regime_candidates(k, &normalised);
    match hits.as_slice() {
        [regime] => Ok(RegimeClassification { k, relation, regime: *regime }),
        [] => Err(ScaleError::OutsideScope("no regime predicate holds".into())),
        many => Err(ScaleError::OutsideScope(format!("{} regime predicates hold", many.len()))),
    }
}

/// Classifies an `n = 1` pair.
pub fn classify(pair: &ScalePair) -> Result<RegimeClassification, ScaleError> {
    classify_pair(pair.single_spatial()?, &pair.temporal)
}
