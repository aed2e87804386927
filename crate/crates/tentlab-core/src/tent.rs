//! The discretized upper half-space X x (0,inf): geometric t-grids, cones,
//! tents, the area functional, weighted tent norms, the duality pairing,
//! q-atom validation, density sets, and the cone/tent overlap estimates.
//!
//! The measure dt/t is represented exactly on the geometric grid as a weight
//! of ln(ratio) per sample; integrals against dt (without 1/t) carry the
//! weight t_m ln(ratio).

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::space::MetricMeasureSpace;
use crate::weights::WeightFunction;
use crate::{Error, Result};

/// Geometric grid t_m = t_min * ratio^m, m = 0..count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    pub t_min: f64,
    pub ratio: f64,
    pub count: usize,
    #[serde(skip)]
    samples: Vec<f64>,
}

impl TGrid {
    pub fn new(t_min: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::InvalidParam("t_min must be positive".into()));
        }
        if !(ratio > 1.0) {
            return Err(Error::InvalidParam("grid ratio must exceed 1".into()));
        }
        if count == 0 {
            return Err(Error::InvalidParam("grid needs at least one sample".into()));
        }
        let samples = (0..count).map(|m| t_min * ratio.powi(m as i32)).collect();
        Ok(Self {
            t_min,
            ratio,
            count,
            samples,
        })
    }

    /// Default grid for a space: quarter-octave steps from half the minimum
    /// distance up to at least twice the diameter, so tents over space-scale
    /// balls are representable.
    pub fn default_for_space(space: &MetricMeasureSpace) -> Result<Self> {
        let ratio = 2.0f64.powf(0.25);
        let dmin = space.min_positive_dist();
        let t_min = if dmin.is_finite() { dmin / 2.0 } else { 0.5 };
        let target = 2.0 * space.diameter().max(2.0 * t_min);
        let count = ((target / t_min).ln() / ratio.ln()).ceil() as usize + 1;
        Self::new(t_min, ratio, count)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn t(&self, m: usize) -> f64 {
        self.samples[m]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Weight representing dt/t per sample.
    pub fn log_weight(&self) -> f64 {
        self.ratio.ln()
    }

    /// Rebuilds the sample table (needed after deserialization).
    pub fn rebuild(&mut self) {
        self.samples = (0..self.count)
            .map(|m| self.t_min * self.ratio.powi(m as i32))
            .collect();
    }
}

/// A subset of the discretized upper half-space, as a membership mask over
/// (point, t-sample) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    n_points: usize,
    n_samples: usize,
    mask: Vec<bool>,
}

impl Region {
    pub fn empty(n_points: usize, n_samples: usize) -> Self {
        Self {
            n_points,
            n_samples,
            mask: vec![false; n_points * n_samples],
        }
    }

    pub fn full(n_points: usize, n_samples: usize) -> Self {
        Self {
            n_points,
            n_samples,
            mask: vec![true; n_points * n_samples],
        }
    }

    pub fn contains(&self, point: usize, sample: usize) -> bool {
        self.mask[point * self.n_samples + sample]
    }

    pub fn set(&mut self, point: usize, sample: usize, member: bool) {
        self.mask[point * self.n_samples + sample] = member;
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn complement(&self) -> Self {
        Self {
            n_points: self.n_points,
            n_samples: self.n_samples,
            mask: self.mask.iter().map(|b| !b).collect(),
        }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        assert_eq!(self.mask.len(), other.mask.len());
        Self {
            n_points: self.n_points,
            n_samples: self.n_samples,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        assert_eq!(self.mask.len(), other.mask.len());
        Self {
            n_points: self.n_points,
            n_samples: self.n_samples,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    /// Members of self not in other.
    pub fn minus(&self, other: &Self) -> Self {
        assert_eq!(self.mask.len(), other.mask.len());
        Self {
            n_points: self.n_points,
            n_samples: self.n_samples,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a && !*b)
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn iter_members(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ns = self.n_samples;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i / ns, i % ns))
    }
}

/// Samples F(y, t_m) on the grid, row-major by point.
#[derive(Debug, Clone, PartialEq)]
pub struct TentFunction {
    grid: TGrid,
    n_points: usize,
    values: Vec<f64>,
}

impl TentFunction {
    pub fn zeros(n_points: usize, grid: TGrid) -> Self {
        let values = vec![0.0; n_points * grid.len()];
        Self {
            grid,
            n_points,
            values,
        }
    }

    pub fn from_values(n_points: usize, grid: TGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_points * grid.len() {
            return Err(Error::InvalidDocument(format!(
                "tent values: got {}, expected {} x {}",
                values.len(),
                n_points,
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDocument("non-finite tent value".into()));
        }
        Ok(Self {
            grid,
            n_points,
            values,
        })
    }

    pub fn grid(&self) -> &TGrid {
        &self.grid
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn value(&self, point: usize, sample: usize) -> f64 {
        self.values[point * self.grid.len() + sample]
    }

    pub fn set(&mut self, point: usize, sample: usize, v: f64) {
        self.values[point * self.grid.len() + sample] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            n_points: self.n_points,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// F restricted to a region (zero outside).
    pub fn restricted(&self, region: &Region) -> Self {
        assert_eq!(region.n_points(), self.n_points);
        assert_eq!(region.n_samples(), self.grid.len());
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| if region.mask[i] { *v } else { 0.0 })
            .collect();
        Self {
            grid: self.grid.clone(),
            n_points: self.n_points,
            values,
        }
    }

    /// Mask of nonzero samples.
    pub fn support(&self) -> Region {
        Region {
            n_points: self.n_points,
            n_samples: self.grid.len(),
            mask: self.values.iter().map(|v| *v != 0.0).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Cone of aperture alpha at x: {(y,t) : d(x,y) < alpha t}.
pub fn cone(space: &MetricMeasureSpace, grid: &TGrid, x: usize, alpha: f64) -> Region {
    assert!(alpha > 0.0, "aperture must be positive");
    let mut region = Region::empty(space.len(), grid.len());
    for y in 0..space.len() {
        let d = space.dist(x, y);
        for (m, &t) in grid.samples().iter().enumerate() {
            if d < alpha * t {
                region.set(y, m, true);
            }
        }
    }
    region
}

/// Union of cones with vertices in `f_set`.
pub fn cone_union(space: &MetricMeasureSpace, grid: &TGrid, f_set: &[usize], alpha: f64) -> Region {
    assert!(alpha > 0.0);
    let mut region = Region::empty(space.len(), grid.len());
    for y in 0..space.len() {
        let d = space.dist_to_set(y, f_set);
        for (m, &t) in grid.samples().iter().enumerate() {
            if d < alpha * t {
                region.set(y, m, true);
            }
        }
    }
    region
}

/// Tent of aperture alpha over a point set O: {(y,t) : d(y, O^c) >= alpha t},
/// the exact complement of the cone union over O^c. The tent over the whole
/// space is the full half-space (distance to the empty set is infinite).
pub fn tent_over(space: &MetricMeasureSpace, grid: &TGrid, o_set: &[usize], alpha: f64) -> Region {
    assert!(alpha > 0.0);
    let mut in_o = vec![false; space.len()];
    for &p in o_set {
        in_o[p] = true;
    }
    let complement: Vec<usize> = (0..space.len()).filter(|&p| !in_o[p]).collect();
    let mut region = Region::empty(space.len(), grid.len());
    for y in 0..space.len() {
        let d = space.dist_to_set(y, &complement);
        for (m, &t) in grid.samples().iter().enumerate() {
            if d >= alpha * t {
                region.set(y, m, true);
            }
        }
    }
    region
}

/// A ball by center and radius, the support datum of a q-atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: usize,
    pub radius: f64,
}

impl BallSpec {
    pub fn points(&self, space: &MetricMeasureSpace) -> Vec<usize> {
        space.ball(self.center, self.radius)
    }

    pub fn weighted_mass(&self, space: &MetricMeasureSpace, w: &WeightFunction) -> f64 {
        w.ball_mass(space, self.center, self.radius)
    }
}

/// Tent T(B) over a metric ball (aperture 1).
pub fn tent_over_ball(space: &MetricMeasureSpace, grid: &TGrid, ball: BallSpec) -> Region {
    tent_over(space, grid, &ball.points(space), 1.0)
}

/// Area functional: A(F)(x) = (sum over the cone at x of
/// |F(y,t)|^2 mu_y ln(ratio) / V(x,t))^(1/2).
///
/// The normalizing volume sits at the cone vertex x. A common variant
/// normalizes at the sample point y instead; on a doubling space the two
/// differ by at most the cone-volume overlap factor.
pub fn area_functional(space: &MetricMeasureSpace, f: &TentFunction) -> Vec<f64> {
    let grid = f.grid().clone();
    let logw = grid.log_weight();
    let n = space.len();
    exec::map_indexed(n, move |x| {
        let mut acc = 0.0f64;
        for (m, &t) in grid.samples().iter().enumerate() {
            let len = space.ball_len(x, t);
            if len == 0 {
                continue;
            }
            let vol = space.prefix_masses(x)[len - 1];
            let mut inner = 0.0;
            for &(_, y) in &space.sorted_from(x)[..len] {
                let v = f.value(y as usize, m);
                inner += v * v * space.mass(y as usize);
            }
            acc += inner * logw / vol;
        }
        acc.sqrt()
    })
}

/// Weighted tent norm ||F||_{T^p_{2,w}} = || A(F) ||_{L^p_w}.
pub fn tent_norm(space: &MetricMeasureSpace, f: &TentFunction, p: f64, w: &WeightFunction) -> f64 {
    let a = area_functional(space, f);
    space.lp_norm_weighted(&a, w.values(), p)
}

/// Duality pairing <F,G> = sum F G mu_y ln(ratio)  (d mu dt/t).
pub fn pairing(space: &MetricMeasureSpace, f: &TentFunction, g: &TentFunction) -> f64 {
    assert_eq!(f.grid(), g.grid(), "pairing requires a shared grid");
    let logw = f.grid().log_weight();
    let mt = f.grid().len();
    let mut acc = 0.0;
    for y in 0..f.n_points() {
        let mu = space.mass(y);
        for m in 0..mt {
            acc += f.value(y, m) * g.value(y, m) * mu;
        }
    }
    acc * logw
}

/// Report of the q-atom conditions for a candidate tent function.
#[derive(Debug, Clone, Serialize)]
pub struct QAtomReport {
    /// (i) support contained in T(B), checked as exact mask containment.
    pub support_ok: bool,
    pub support_violations: usize,
    pub first_violation: Option<(usize, usize)>,
    /// (ii) size: ||a||_{T^q_{2,w}} against w(B)^{1/q - 1/p}.
    pub norm: f64,
    pub bound: f64,
    /// norm/bound; valid atoms have slack <= 1.
    pub slack: f64,
    pub ok: bool,
}

/// Validates the two q-atom conditions (support in the tent over B, size
/// bound by w(B)^{1/q-1/p}); report-only.
pub fn validate_q_atom(
    space: &MetricMeasureSpace,
    a: &TentFunction,
    ball: BallSpec,
    p: f64,
    q: f64,
    w: &WeightFunction,
) -> QAtomReport {
    assert!(0.0 < p && p <= 1.0 && q > 1.0, "requires 0 < p <= 1 < q");
    let tent = tent_over_ball(space, a.grid(), ball);
    let support = a.support();
    let escaped = support.minus(&tent);
    let support_violations = escaped.count();
    let first_violation = escaped.iter_members().next();
    let norm = tent_norm(space, a, q, w);
    let bound = ball.weighted_mass(space, w).powf(1.0 / q - 1.0 / p);
    let slack = if norm == 0.0 { 0.0 } else { norm / bound };
    QAtomReport {
        support_ok: support_violations == 0,
        support_violations,
        first_violation,
        norm,
        bound,
        slack,
        ok: support_violations == 0 && slack <= 1.0 + 1e-12,
    }
}

/// Global density sets: F* is the set of points all of whose containing
/// balls meet F in mass fraction at least gamma; O* is its complement.
#[derive(Debug, Clone)]
pub struct DensitySets {
    pub f_star: Vec<bool>,
    pub o_star: Vec<bool>,
    pub mu_o: f64,
    pub mu_o_star: f64,
    /// mu(O*)/mu(O); None when O is empty.
    pub ratio: Option<f64>,
}

/// Computes (F*, O*) via the maximal-function identity
/// O* = { M(chi_O) > 1 - gamma } with the uncentered maximal function.
pub fn density_sets(space: &MetricMeasureSpace, gamma: f64, f_closed: &[bool]) -> DensitySets {
    assert!(0.0 < gamma && gamma < 1.0, "gamma must lie in (0,1)");
    assert_eq!(f_closed.len(), space.len());
    let chi_o: Vec<f64> = f_closed.iter().map(|&in_f| f64::from(!in_f)).collect();
    let m = space.maximal_function(&chi_o);
    let o_star: Vec<bool> = m.iter().map(|&v| v > 1.0 - gamma).collect();
    let f_star: Vec<bool> = o_star.iter().map(|b| !b).collect();
    let mu_o: f64 = (0..space.len())
        .filter(|&i| !f_closed[i])
        .map(|i| space.mass(i))
        .sum();
    let mu_o_star: f64 = (0..space.len())
        .filter(|&i| o_star[i])
        .map(|i| space.mass(i))
        .sum();
    let ratio = (mu_o > 0.0).then(|| mu_o_star / mu_o);
    // O is always inside O*: the singleton ball at a point of O has pure
    // O-average 1 > 1 - gamma.
    debug_assert!((0..space.len()).all(|i| f_closed[i] || o_star[i]));
    DensitySets {
        f_star,
        o_star,
        mu_o,
        mu_o_star,
        ratio,
    }
}

/// Two-sided evaluation of the key cone/tent overlap estimate: the integral
/// of H V(y,t) over the truncated cone union of F* against the iterated cone
/// integral over F. Both sides use the dt measure (weight t ln ratio).
#[derive(Debug, Clone, Serialize)]
pub struct ConeOverlapReport {
    pub lhs: f64,
    pub rhs: f64,
    /// lhs/rhs; None when the RHS vanishes.
    pub ratio: Option<f64>,
    /// Both sides zero: degenerate pass.
    pub degenerate: bool,
    /// RHS zero with LHS positive.
    pub flagged_infinite: bool,
}

pub fn lemma24_ratio(
    space: &MetricMeasureSpace,
    h: &TentFunction,
    f_closed: &[bool],
    gamma: f64,
    eta: f64,
) -> ConeOverlapReport {
    assert!(0.0 < eta && eta < 1.0, "eta must lie in (0,1)");
    assert!(h.values().iter().all(|&v| v >= 0.0), "H must be nonnegative");
    let grid = h.grid();
    let logw = grid.log_weight();
    let ds = density_sets(space, gamma, f_closed);
    let f_star_set: Vec<usize> = (0..space.len()).filter(|&i| ds.f_star[i]).collect();
    let region = cone_union(space, grid, &f_star_set, 1.0 - eta);

    let mut lhs = 0.0;
    for y in 0..space.len() {
        for (m, &t) in grid.samples().iter().enumerate() {
            if region.contains(y, m) {
                lhs += h.value(y, m) * space.volume(y, t) * space.mass(y) * t * logw;
            }
        }
    }

    let rhs = exec::sum_indexed(space.len(), |x| {
        if !f_closed[x] {
            return 0.0;
        }
        let mut inner = 0.0;
        for (m, &t) in grid.samples().iter().enumerate() {
            let len = space.ball_len(x, t);
            for &(_, y) in &space.sorted_from(x)[..len] {
                inner += h.value(y as usize, m) * space.mass(y as usize) * t * logw;
            }
        }
        inner * space.mass(x)
    });

    let degenerate = lhs == 0.0 && rhs == 0.0;
    let flagged_infinite = rhs == 0.0 && lhs > 0.0;
    let ratio = (rhs > 0.0).then(|| lhs / rhs);
    ConeOverlapReport {
        lhs,
        rhs,
        ratio,
        degenerate,
        flagged_infinite,
    }
}

/// ||F||_{L^2(K, dmu dt/t)} for F supported in the region K, against the
/// weighted tent norm; the ratio is the measured compact-support constant.
#[derive(Debug, Clone, Serialize)]
pub struct CompactL2Report {
    pub l2_on_k: f64,
    pub tent_q_norm: f64,
    pub ratio: Option<f64>,
}

pub fn compact_l2_constant(
    space: &MetricMeasureSpace,
    f: &TentFunction,
    k_region: &Region,
    q: f64,
    w: &WeightFunction,
) -> CompactL2Report {
    assert!(
        f.support().is_subset_of(k_region),
        "F must be supported in K"
    );
    let logw = f.grid().log_weight();
    let mut l2 = 0.0;
    for (y, m) in k_region.iter_members() {
        let v = f.value(y, m);
        l2 += v * v * space.mass(y) * logw;
    }
    let l2_on_k = l2.sqrt();
    let tent_q_norm = tent_norm(space, f, q, w);
    let ratio = (tent_q_norm > 0.0).then(|| l2_on_k / tent_q_norm);
    CompactL2Report {
        l2_on_k,
        tent_q_norm,
        ratio,
    }
}

/// sup over pairs d(x,y) < t of V(x,t)/V(y,t): the exact cone-overlap factor
/// appearing in the duality chain; bounded by the doubling constant.
pub fn cone_volume_overlap(space: &MetricMeasureSpace, grid: &TGrid) -> f64 {
    let samples = grid.samples().to_vec();
    exec::max_indexed(space.len(), move |x| {
        let mut best = 1.0f64;
        for &t in &samples {
            let len = space.ball_len(x, t);
            if len == 0 {
                continue;
            }
            let vx = space.prefix_masses(x)[len - 1];
            for &(_, y) in &space.sorted_from(x)[..len] {
                best = best.max(vx / space.volume(y as usize, t));
            }
        }
        best
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::grid_1d;
    use crate::testutil::{random_space, random_tent, random_weight};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_samples_increase() {
        let g = TGrid::new(0.5, 2.0f64.powf(0.25), 16).unwrap();
        for m in 1..16 {
            assert!(g.t(m) > g.t(m - 1));
        }
        assert!((g.log_weight() - 0.25 * 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn default_grid_spans_space() {
        let s = grid_1d(10).unwrap();
        let g = TGrid::default_for_space(&s).unwrap();
        assert!(g.t(0) <= 0.5);
        assert!(*g.samples().last().unwrap() >= 2.0 * s.diameter());
    }

    #[test]
    fn cone_membership() {
        let s = grid_1d(10).unwrap();
        let g = TGrid::new(1.5, 2.0, 3).unwrap();
        let c = cone(&s, &g, 5, 1.0);
        // t = 1.5: y with d(5,y) < 1.5 -> {4,5,6}.
        assert!(c.contains(5, 0) && c.contains(4, 0) && c.contains(6, 0));
        assert!(!c.contains(3, 0) && !c.contains(7, 0));
        // The vertex is in its cone at every level.
        for m in 0..3 {
            assert!(c.contains(5, m));
        }
    }

    #[test]
    fn giant_aperture_covers_everything() {
        let s = grid_1d(6).unwrap();
        let g = TGrid::new(1.0, 2.0, 3).unwrap();
        let c = cone(&s, &g, 0, 100.0);
        assert_eq!(c.count(), 6 * 3);
    }

    #[test]
    fn tent_empty_set_is_empty() {
        let s = grid_1d(6).unwrap();
        let g = TGrid::new(1.0, 2.0, 3).unwrap();
        assert_eq!(tent_over(&s, &g, &[], 1.0).count(), 0);
    }

    #[test]
    fn tent_full_space_is_full() {
        let s = grid_1d(6).unwrap();
        let g = TGrid::new(1.0, 2.0, 3).unwrap();
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(tent_over(&s, &g, &all, 1.0).count(), 18);
    }

    /// Complement identity: T_a(O) = (union of cones over O^c)^c, both sides
    /// computed independently.
    #[test]
    fn tent_complement_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10u64 {
            let s = random_space(seed, 25, 2);
            let g = TGrid::default_for_space(&s).unwrap();
            let o: Vec<usize> = (0..25).filter(|_| rng.gen_bool(0.4)).collect();
            for &alpha in &[0.5, 1.0, 2.0] {
                let tent = tent_over(&s, &g, &o, alpha);
                let oc: Vec<usize> = (0..25).filter(|p| !o.contains(p)).collect();
                let cones = cone_union(&s, &g, &oc, alpha);
                assert_eq!(tent, cones.complement());
            }
        }
    }

    #[test]
    fn tent_monotonicity() {
        let s = random_space(5, 20, 2);
        let g = TGrid::default_for_space(&s).unwrap();
        let o1: Vec<usize> = (0..6).collect();
        let o2: Vec<usize> = (0..12).collect();
        assert!(tent_over(&s, &g, &o1, 1.0).is_subset_of(&tent_over(&s, &g, &o2, 1.0)));
        // Larger aperture shrinks the tent.
        assert!(tent_over(&s, &g, &o2, 2.0).is_subset_of(&tent_over(&s, &g, &o2, 1.0)));
    }

    #[test]
    fn area_functional_zero() {
        let s = grid_1d(8).unwrap();
        let g = TGrid::default_for_space(&s).unwrap();
        let f = TentFunction::zeros(8, g);
        assert!(area_functional(&s, &f).iter().all(|&v| v == 0.0));
    }

    /// Single-sample support: A(F)(x)^2 = |F|^2 mu_y ln(rho) / V(x,t0) on the
    /// ball d(x,y0) < t0, zero elsewhere (hand oracle).
    #[test]
    fn area_functional_single_support() {
        let s = random_space(7, 20, 2);
        let g = TGrid::default_for_space(&s).unwrap();
        let mut f = TentFunction::zeros(20, g.clone());
        let (y0, m0, c) = (7usize, 5usize, 2.75f64);
        f.set(y0, m0, c);
        let a = area_functional(&s, &f);
        let t0 = g.t(m0);
        for x in 0..20 {
            let expect = if s.dist(x, y0) < t0 {
                (c * c * s.mass(y0) * g.log_weight() / s.volume(x, t0)).sqrt()
            } else {
                0.0
            };
            assert!((a[x] - expect).abs() <= 1e-12 * expect.max(1.0), "x={x}");
        }
    }

    #[test]
    fn area_functional_homogeneous() {
        let s = random_space(11, 15, 2);
        let f = random_tent(&s, 13, 0.5);
        let a = area_functional(&s, &f);
        let af = area_functional(&s, &f.scaled(-3.5));
        for x in 0..15 {
            assert!((af[x] - 3.5 * a[x]).abs() <= 1e-12 * (3.5 * a[x]).max(1.0));
        }
    }

    /// Fubini consistency: the squared T^2_{2,w} norm computed through the
    /// area functional equals the swapped-order double sum.
    #[test]
    fn tent_norm_fubini() {
        let s = random_space(17, 18, 2);
        let w = random_weight(18, 19);
        let f = random_tent(&s, 23, 0.7);
        let g = f.grid();
        let via_area = tent_norm(&s, &f, 2.0, &w).powi(2);
        let mut swapped = 0.0;
        for y in 0..18 {
            for (m, &t) in g.samples().iter().enumerate() {
                let v = f.value(y, m);
                if v == 0.0 {
                    continue;
                }
                let mut overlap = 0.0;
                for x in 0..18 {
                    if s.dist(x, y) < t {
                        overlap += w.values()[x] * s.mass(x) / s.volume(x, t);
                    }
                }
                swapped += v * v * s.mass(y) * g.log_weight() * overlap;
            }
        }
        assert!((via_area - swapped).abs() <= 1e-10 * swapped.max(1e-300));
    }

    #[test]
    fn tent_norm_unweighted_reduction() {
        let s = random_space(29, 15, 2);
        let ones = WeightFunction::constant(15, 1.0).unwrap();
        let f = random_tent(&s, 31, 0.6);
        let a = area_functional(&s, &f);
        let direct = s.lp_norm_weighted(&a, &vec![1.0; 15], 1.5);
        assert!((tent_norm(&s, &f, 1.5, &ones) - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn pairing_trivials() {
        let s = grid_1d(8).unwrap();
        let g = TGrid::default_for_space(&s).unwrap();
        let z = TentFunction::zeros(8, g.clone());
        let f = random_tent(&s, 37, 0.5);
        assert_eq!(pairing(&s, &f, &z), 0.0);
        // Indicator of one sample pairs to mu_y ln(rho).
        let mut a = TentFunction::zeros(8, g.clone());
        a.set(3, 2, 1.0);
        assert!((pairing(&s, &a, &a) - s.mass(3) * g.log_weight()).abs() < 1e-15);
    }

    /// Holder step of the duality chain: integral of A(F) A(G) d mu against
    /// the product of dual-weighted Lebesgue norms; exact finite Holder.
    #[test]
    fn duality_holder_step() {
        let q = 2.5f64;
        let qp = q / (q - 1.0);
        for seed in 0..20u64 {
            let s = random_space(seed + 300, 16, 2);
            let w = random_weight(16, seed + 400);
            let f = random_tent(&s, seed + 500, 0.6);
            let g = random_tent(&s, seed + 600, 0.6);
            let af = area_functional(&s, &f);
            let ag = area_functional(&s, &g);
            let lhs: f64 = (0..16).map(|x| af[x] * ag[x] * s.mass(x)).sum();
            let dual = w.pow(-1.0 / (q - 1.0)).unwrap();
            let rhs = s.lp_norm_weighted(&af, w.values(), q)
                * s.lp_norm_weighted(&ag, dual.values(), qp);
            assert!(lhs <= rhs * (1.0 + 1e-9), "seed {seed}: {lhs} > {rhs}");
        }
    }

    /// The pairing against the cone-integral bound, with the measured factor
    /// never exceeding the exact cone-volume overlap.
    #[test]
    fn pairing_bounded_by_overlap_constant() {
        for seed in 0..10u64 {
            let s = random_space(seed + 700, 15, 2);
            let g = TGrid::default_for_space(&s).unwrap();
            let f = random_tent(&s, seed + 800, 0.8);
            let h = random_tent(&s, seed + 900, 0.8);
            let af = area_functional(&s, &f);
            let ah = area_functional(&s, &h);
            let cone_integral: f64 = (0..15).map(|x| af[x] * ah[x] * s.mass(x)).sum();
            let p = pairing(&s, &f, &h).abs();
            let overlap = cone_volume_overlap(&s, &g);
            let c_doubling = s.doubling_report().c_doubling;
            assert!(overlap <= c_doubling * (1.0 + 1e-12));
            if cone_integral > 0.0 {
                assert!(p / cone_integral <= overlap * (1.0 + 1e-9), "seed {seed}");
            }
        }
    }

    #[test]
    fn q_atom_zero_is_valid() {
        let s = grid_1d(12).unwrap();
        let g = TGrid::default_for_space(&s).unwrap();
        let w = random_weight(12, 41);
        let a = TentFunction::zeros(12, g);
        let rep = validate_q_atom(
            &s,
            &a,
            BallSpec {
                center: 4,
                radius: 3.0,
            },
            0.5,
            2.0,
            &w,
        );
        assert!(rep.ok && rep.slack == 0.0);
    }

    /// Saturated atom: c * chi_{T(B)} with c chosen from the measured norm of
    /// the indicator saturates the size bound with zero slack.
    #[test]
    fn q_atom_saturation() {
        let s = random_space(43, 18, 2);
        let g = TGrid::default_for_space(&s).unwrap();
        let w = random_weight(18, 47);
        let ball = BallSpec {
            center: 3,
            radius: 4.0,
        };
        let tent = tent_over_ball(&s, &g, ball);
        let mut ind = TentFunction::zeros(18, g.clone());
        for (y, m) in tent.iter_members() {
            ind.set(y, m, 1.0);
        }
        let (p, q) = (0.5, 2.0);
        let norm = tent_norm(&s, &ind, q, &w);
        assert!(norm > 0.0);
        let c = ball.weighted_mass(&s, &w).powf(1.0 / q - 1.0 / p) / norm;
        let atom = ind.scaled(c);
        let rep = validate_q_atom(&s, &atom, ball, p, q, &w);
        assert!(rep.support_ok);
        assert!((rep.slack - 1.0).abs() <= 1e-12, "slack = {}", rep.slack);
        assert!(rep.ok);
    }

    #[test]
    fn q_atom_support_violation_witnessed() {
        let s = grid_1d(12).unwrap();
        let g = TGrid::default_for_space(&s).unwrap();
        let w = random_weight(12, 53);
        let ball = BallSpec {
            center: 2,
            radius: 2.0,
        };
        let tent = tent_over_ball(&s, &g, ball);
        let mut a = TentFunction::zeros(12, g.clone());
        // One sample far outside the tent.
        let outside = (0..12)
            .flat_map(|y| (0..g.len()).map(move |m| (y, m)))
            .find(|&(y, m)| !tent.contains(y, m))
            .unwrap();
        a.set(outside.0, outside.1, 1.0);
        let rep = validate_q_atom(&s, &a, ball, 1.0, 2.0, &w);
        assert!(!rep.support_ok);
        assert_eq!(rep.support_violations, 1);
        assert_eq!(rep.first_violation, Some(outside));
    }

    #[test]
    fn tent_over_ball_holds_center_low_t() {
        let s = grid_1d(12).unwrap();
        let g = TGrid::new(0.5, 2.0, 4).unwrap();
        let ball = BallSpec {
            center: 6,
            radius: 2.5,
        };
        let tent = tent_over_ball(&s, &g, ball);
        // The center sits in the tent for every t up to its distance to the
        // ball complement.
        let pts = ball.points(&s);
        let outside: Vec<usize> = (0..12).filter(|p| !pts.contains(p)).collect();
        let reach = s.dist_to_set(6, &outside);
        for (m, &t) in g.samples().iter().enumerate() {
            assert_eq!(tent.contains(6, m), t <= reach);
        }
    }

    #[test]
    fn density_sets_full_f() {
        let s = grid_1d(10).unwrap();
        let ds = density_sets(&s, 0.5, &vec![true; 10]);
        assert!(ds.f_star.iter().all(|&b| b));
        assert!(ds.o_star.iter().all(|&b| !b));
        assert!(ds.ratio.is_none());
    }

    /// As gamma drops toward zero the threshold 1 - gamma admits only
    /// nearly-pure-O balls, so O* shrinks onto O and F* grows; F* never
    /// leaves F (singleton balls are pure).
    #[test]
    fn density_sets_monotone_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let s = random_space(93, 30, 2);
        let f_closed: Vec<bool> = (0..30).map(|_| rng.gen_bool(0.6)).collect();
        let mut prev: Option<Vec<bool>> = None;
        for &gamma in &[0.05, 0.3, 0.6, 0.9] {
            let ds = density_sets(&s, gamma, &f_closed);
            for i in 0..30 {
                assert!(!ds.f_star[i] || f_closed[i], "F* must stay inside F");
                if let Some(prev_star) = &prev {
                    assert!(
                        !prev_star[i] || ds.o_star[i],
                        "O* must grow with gamma"
                    );
                }
            }
            prev = Some(ds.o_star);
        }
    }

    /// All-balls density oracle: recompute O* by scanning the density of
    /// every distinct ball directly.
    #[test]
    fn density_sets_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let s = random_space(67, 60, 2);
        let f_closed: Vec<bool> = (0..60).map(|_| rng.gen_bool(0.6)).collect();
        let gamma = 0.5;
        let ds = density_sets(&s, gamma, &f_closed);
        for x in 0..60 {
            let mut in_f_star = true;
            for c in 0..60 {
                for &r in &s.candidate_radii() {
                    let b: Vec<usize> = (0..60).filter(|&y| s.dist(c, y) < r).collect();
                    if !b.contains(&x) {
                        continue;
                    }
                    let mu: f64 = b.iter().map(|&i| s.mass(i)).sum();
                    let muf: f64 = b
                        .iter()
                        .filter(|&&i| f_closed[i])
                        .map(|&i| s.mass(i))
                        .sum();
                    if muf / mu < gamma {
                        in_f_star = false;
                    }
                }
            }
            assert_eq!(ds.f_star[x], in_f_star, "density mismatch at {x}");
        }
        // O is always inside O*.
        for x in 0..60 {
            if !f_closed[x] {
                assert!(ds.o_star[x]);
            }
        }
    }

    #[test]
    fn lemma24_zero_h_degenerate() {
        let s = grid_1d(10).unwrap();
        let g = TGrid::default_for_space(&s).unwrap();
        let h = TentFunction::zeros(10, g);
        let f_closed = vec![true; 10];
        let rep = lemma24_ratio(&s, &h, &f_closed, 0.5, 0.5);
        assert!(rep.degenerate);
        assert!(rep.ratio.is_none());
        assert!(!rep.flagged_infinite);
    }

    /// Direct two-sided evaluation with F = X: both sides strictly positive
    /// and the ratio finite.
    #[test]
    fn lemma24_full_f_finite() {
        let s = random_space(71, 20, 2);
        let mut h = random_tent(&s, 73, 0.8);
        for v in h.values_mut() {
            *v = v.abs();
        }
        let rep = lemma24_ratio(&s, &h, &vec![true; 20], 0.5, 0.5);
        assert!(!rep.degenerate);
        let r = rep.ratio.unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn compact_l2_bound_reported() {
        let s = random_space(79, 16, 2);
        let g = TGrid::default_for_space(&s).unwrap();
        let w = random_weight(16, 83);
        // K: a band of middle t-levels over half the points.
        let mut k = Region::empty(16, g.len());
        for y in 0..8 {
            for m in 2..g.len().min(8) {
                k.set(y, m, true);
            }
        }
        let mut f = TentFunction::zeros(16, g.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for (y, m) in k.iter_members() {
            f.set(y, m, rng.gen_range(-1.0..1.0));
        }
        let rep = compact_l2_constant(&s, &f, &k, 2.0, &w);
        let c = rep.ratio.unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn region_set_algebra() {
        let mut a = Region::empty(3, 2);
        a.set(0, 0, true);
        a.set(1, 1, true);
        let mut b = Region::empty(3, 2);
        b.set(1, 1, true);
        assert!(b.is_subset_of(&a));
        assert_eq!(a.minus(&b).count(), 1);
        assert_eq!(a.union(&b).count(), 2);
        assert_eq!(a.intersect(&b).count(), 1);
        assert_eq!(a.complement().count(), 4);
    }
}
