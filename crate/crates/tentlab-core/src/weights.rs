//! Muckenhoupt A_p weights and reverse-Holder classes: exact constants over
//! the finite family of distinct balls, weight generators, and the standard
//! property suite (class monotonicity, duality, the measure-ratio bound).

use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::Serialize;

use crate::exec;
use crate::hash::FnvHasher;
use crate::space::MetricMeasureSpace;
use crate::{Error, Result};

/// A strictly positive weight on the points of a space, with a cache of
/// computed A_p / RH_r constants.
///
/// The cache is read-mostly; concurrent fills are idempotent (every fill
/// computes the identical value), so last-writer-wins is safe.
#[derive(Debug)]
pub struct WeightFunction {
    values: Vec<f64>,
    cache: RwLock<ConstantCache>,
}

#[derive(Debug, Default)]
struct ConstantCache {
    ap: BTreeMap<(u64, u64), f64>,
    rh: BTreeMap<(u64, u64), f64>,
}

impl Clone for WeightFunction {
    fn clone(&self) -> Self {
        Self::new(self.values.clone()).expect("clone of valid weight")
    }
}

impl PartialEq for WeightFunction {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl WeightFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidWeight("empty weight".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidWeight(format!(
                    "non-positive weight {v} at point {i}"
                )));
            }
        }
        Ok(Self {
            values,
            cache: RwLock::new(ConstantCache::default()),
        })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// w(E) for a point set E.
    pub fn set_mass(&self, space: &MetricMeasureSpace, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.values[i] * space.mass(i)).sum()
    }

    /// w(B(x,r)).
    pub fn ball_mass(&self, space: &MetricMeasureSpace, x: usize, r: f64) -> f64 {
        space.sorted_from(x)[..space.ball_len(x, r)]
            .iter()
            .map(|&(_, j)| self.values[j as usize] * space.mass(j as usize))
            .sum()
    }

    /// Total w(X).
    pub fn total_mass(&self, space: &MetricMeasureSpace) -> f64 {
        (0..self.values.len())
            .map(|i| self.values[i] * space.mass(i))
            .sum()
    }

    /// Pointwise power w^a as a new weight.
    pub fn pow(&self, a: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v.powf(a)).collect())
    }

    pub fn content_hash(&self) -> u64 {
        let mut h = FnvHasher::new();
        for &v in &self.values {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }

    fn cached_ap(&self, key: (u64, u64)) -> Option<f64> {
        self.cache.read().ok().and_then(|c| c.ap.get(&key).copied())
    }

    fn cached_rh(&self, key: (u64, u64)) -> Option<f64> {
        self.cache.read().ok().and_then(|c| c.rh.get(&key).copied())
    }
}

/// Exact [w]_{A_p} over all distinct balls: for p > 1 the sup of
/// avg(w) avg(w^{-1/(p-1)})^{p-1}; for p = 1 the sup of avg(w)/min_B w.
pub fn ap_constant(space: &MetricMeasureSpace, w: &WeightFunction, p: f64) -> f64 {
    assert!(p >= 1.0, "A_p requires p >= 1");
    assert_eq!(w.len(), space.len());
    let key = (space.content_hash(), p.to_bits());
    if let Some(v) = w.cached_ap(key) {
        return v;
    }
    let n = space.len();
    let vals = w.values();
    let result = if p > 1.0 {
        // The dual average is a power mean with exponent -1/(p-1), which
        // overflows f64 for p near 1; accumulate it in log space with a
        // streaming log-sum-exp.
        let dual_exp = -1.0 / (p - 1.0);
        exec::max_indexed(n, |c| {
            let row = space.sorted_from(c);
            let mut ws = 0.0;
            let mut ms = 0.0;
            let mut lse_max = f64::NEG_INFINITY;
            let mut lse_sum = 0.0;
            let mut best = f64::NEG_INFINITY;
            for l in 1..=n {
                let j = row[l - 1].1 as usize;
                let m = space.mass(j);
                ws += vals[j] * m;
                ms += m;
                let a = dual_exp * vals[j].ln() + m.ln();
                if a <= lse_max {
                    lse_sum += (a - lse_max).exp();
                } else {
                    lse_sum = lse_sum * (lse_max - a).exp() + 1.0;
                    lse_max = a;
                }
                if l == n || row[l].0 > row[l - 1].0 {
                    let ln_dual_avg = lse_max + lse_sum.ln() - ms.ln();
                    let value = (ws / ms) * ((p - 1.0) * ln_dual_avg).exp();
                    best = best.max(value);
                }
            }
            best
        })
    } else {
        exec::max_indexed(n, |c| {
            let row = space.sorted_from(c);
            let mut ws = 0.0;
            let mut ms = 0.0;
            let mut wmin = f64::INFINITY;
            let mut best = f64::NEG_INFINITY;
            for l in 1..=n {
                let j = row[l - 1].1 as usize;
                let m = space.mass(j);
                ws += vals[j] * m;
                ms += m;
                wmin = wmin.min(vals[j]);
                if l == n || row[l].0 > row[l - 1].0 {
                    best = best.max((ws / ms) / wmin);
                }
            }
            best
        })
    }
    .max(1.0);
    if let Ok(mut c) = w.cache.write() {
        c.ap.insert(key, result);
    }
    result
}

/// Exact RH_r constant over all distinct balls: sup of avg(w^r)^(1/r)/avg(w).
pub fn rh_constant(space: &MetricMeasureSpace, w: &WeightFunction, r: f64) -> f64 {
    assert!(r > 1.0, "RH_r requires r > 1");
    assert_eq!(w.len(), space.len());
    let key = (space.content_hash(), r.to_bits());
    if let Some(v) = w.cached_rh(key) {
        return v;
    }
    let n = space.len();
    let vals = w.values();
    let result = exec::max_indexed(n, |c| {
        let row = space.sorted_from(c);
        let mut ws = 0.0;
        let mut wrs = 0.0;
        let mut ms = 0.0;
        let mut best = f64::NEG_INFINITY;
        for l in 1..=n {
            let j = row[l - 1].1 as usize;
            let m = space.mass(j);
            ws += vals[j] * m;
            wrs += vals[j].powf(r) * m;
            ms += m;
            if l == n || row[l].0 > row[l - 1].0 {
                best = best.max((wrs / ms).powf(1.0 / r) / (ws / ms));
            }
        }
        best
    })
    .max(1.0);
    if let Ok(mut c) = w.cache.write() {
        c.rh.insert(key, result);
    }
    result
}

/// Weight generator recipes. All randomized kinds are deterministic in the
/// seed passed to [`generate_weight`].
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    Constant {
        value: f64,
    },
    /// w(x) = (1 + d(x, anchor))^exponent.
    Power {
        exponent: f64,
        #[serde(default)]
        anchor: usize,
    },
    /// Alternating low/high by point index parity.
    Checkerboard {
        low: f64,
        high: f64,
    },
    /// Log-uniform values resampled until [w]_{A_p} <= target.
    RandomApTargeted {
        p: f64,
        target: f64,
        low: f64,
        high: f64,
        #[serde(default = "default_attempts")]
        max_attempts: usize,
    },
}

fn default_attempts() -> usize {
    200
}

pub fn generate_weight(
    space: &MetricMeasureSpace,
    kind: &WeightKind,
    seed: u64,
) -> Result<WeightFunction> {
    use rand::{Rng, SeedableRng};
    let n = space.len();
    match kind {
        WeightKind::Constant { value } => WeightFunction::constant(n, *value),
        WeightKind::Power { exponent, anchor } => {
            if *anchor >= n {
                return Err(Error::InvalidParam(format!(
                    "power weight anchor {anchor} out of range"
                )));
            }
            WeightFunction::new(
                (0..n)
                    .map(|i| (1.0 + space.dist(i, *anchor)).powf(*exponent))
                    .collect(),
            )
        }
        WeightKind::Checkerboard { low, high } => WeightFunction::new(
            (0..n)
                .map(|i| if i % 2 == 0 { *low } else { *high })
                .collect(),
        ),
        WeightKind::RandomApTargeted {
            p,
            target,
            low,
            high,
            max_attempts,
        } => {
            if !(*low > 0.0 && high > low) {
                return Err(Error::InvalidParam(
                    "random weight range requires 0 < low < high".into(),
                ));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (ll, lh) = (low.ln(), high.ln());
            for _ in 0..*max_attempts {
                let w = WeightFunction::new(
                    (0..n).map(|_| rng.gen_range(ll..lh).exp()).collect(),
                )?;
                if ap_constant(space, &w, *p) <= *target {
                    return Ok(w);
                }
            }
            Err(Error::InvalidParam(format!(
                "could not reach [w]_A{p} <= {target} in {max_attempts} attempts"
            )))
        }
    }
}

/// Result of the weight property suite.
#[derive(Debug, Clone, Serialize)]
pub struct WeightLemmaReport {
    pub p: f64,
    pub q: f64,
    pub ap_p: f64,
    pub ap_q: f64,
    /// [w]_{A_q} <= [w]_{A_p} for p <= q.
    pub monotone_ok: bool,
    /// [w^{1-p'}]_{A_{p'}} for p > 1 (duality); None at the endpoint p = 1.
    pub dual_ap: Option<f64>,
    /// Measured map p -> [w]_{A_p} on a small grid (openness is reported,
    /// not asserted: on a finite space every weight is in every class).
    pub ap_profile: Vec<(f64, f64)>,
    /// (iv): pairs (B, E) with E = B intersected with a smaller ball.
    pub subset_pairs_checked: usize,
    pub subset_violations: usize,
    /// max over pairs of [w(B)/w(E)] / ([w]_{A_p} (mu(B)/mu(E))^p); <= 1.
    pub subset_max_ratio: f64,
}

/// Checks the standard A_p properties with exactly computed constants:
/// monotone class membership, duality, and the measure-ratio bound
/// w(B)/w(E) <= [w]_{A_p} (mu(B)/mu(E))^p for E = B n (smaller ball).
pub fn verify_weight_lemma(
    space: &MetricMeasureSpace,
    w: &WeightFunction,
    p: f64,
    q: f64,
) -> WeightLemmaReport {
    assert!((1.0..=q).contains(&p), "requires 1 <= p <= q");
    let ap_p = ap_constant(space, w, p);
    let ap_q = ap_constant(space, w, q);
    let monotone_ok = ap_q <= ap_p * (1.0 + 1e-12);
    let dual_ap = if p > 1.0 {
        let pp = p / (p - 1.0);
        let dual = w.pow(1.0 - pp).expect("positive power of positive weight");
        Some(ap_constant(space, &dual, pp))
    } else {
        None
    };
    let ap_profile: Vec<(f64, f64)> = [1.0, 1.5, 2.0, 3.0, 4.0]
        .iter()
        .map(|&pp| (pp, ap_constant(space, w, pp)))
        .collect();

    let n = space.len();
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut max_ratio = 0.0f64;
    for c in 0..n {
        let row = space.sorted_from(c);
        let prefixes = space.distinct_ball_prefixes(c);
        for (bi, &bl) in prefixes.iter().enumerate() {
            let b: Vec<usize> = row[..bl].iter().map(|&(_, j)| j as usize).collect();
            let mu_b: f64 = b.iter().map(|&i| space.mass(i)).sum();
            let w_b: f64 = b.iter().map(|&i| w.values()[i] * space.mass(i)).sum();
            // Nested subsets: E = the smaller distinct balls at the same
            // center (equal to B n B(c, r') exactly).
            for &el in &prefixes[..bi] {
                let e: Vec<usize> = row[..el].iter().map(|&(_, j)| j as usize).collect();
                check_subset_pair(
                    space, w, p, ap_p, &b, mu_b, w_b, &e, &mut checked, &mut violations,
                    &mut max_ratio,
                );
            }
            // A deterministic cross-center slice: E = B n B(c', r').
            let c2 = (c + n / 2 + 1) % n;
            if c2 != c {
                let r2 = space.dist(c, c2).max(space.min_positive_dist());
                let other = space.ball(c2, r2);
                let e: Vec<usize> = b.iter().copied().filter(|x| other.contains(x)).collect();
                if !e.is_empty() && e.len() < b.len() {
                    check_subset_pair(
                        space, w, p, ap_p, &b, mu_b, w_b, &e, &mut checked, &mut violations,
                        &mut max_ratio,
                    );
                }
            }
        }
    }
    WeightLemmaReport {
        p,
        q,
        ap_p,
        ap_q,
        monotone_ok,
        dual_ap,
        ap_profile,
        subset_pairs_checked: checked,
        subset_violations: violations,
        subset_max_ratio: max_ratio,
    }
}

#[allow(clippy::too_many_arguments)]
fn check_subset_pair(
    space: &MetricMeasureSpace,
    w: &WeightFunction,
    p: f64,
    ap_p: f64,
    _b: &[usize],
    mu_b: f64,
    w_b: f64,
    e: &[usize],
    checked: &mut usize,
    violations: &mut usize,
    max_ratio: &mut f64,
) {
    let mu_e: f64 = e.iter().map(|&i| space.mass(i)).sum();
    let w_e: f64 = e.iter().map(|&i| w.values()[i] * space.mass(i)).sum();
    let lhs = w_b / w_e;
    let rhs = ap_p * (mu_b / mu_e).powf(p);
    *checked += 1;
    if lhs > rhs * (1.0 + 1e-12) {
        *violations += 1;
    }
    let ratio = lhs / rhs;
    if ratio > *max_ratio {
        *max_ratio = ratio;
    }
}
