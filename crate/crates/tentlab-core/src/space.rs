//! Finite metric measure spaces: balls, volumes, doubling diagnostics, the
//! Hardy-Littlewood maximal function, weighted Lebesgue norms, and greedy
//! nets. Everything else in the crate consumes this substrate.
//!
//! Balls are always taken with strict inequality, `B(x,r) = {y : d(x,y) < r}`,
//! so that cones, tents, and their complements compose exactly.

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::hash::FnvHasher;
use crate::{Error, Result};

/// A finite metric measure space: points `0..n`, a symmetric distance table,
/// and strictly positive point masses.
///
/// Immutable after construction; all operations are pure.
#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    n: usize,
    dist: Vec<f64>,
    mass: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
    /// Per center: (distance, point) pairs sorted by distance, index tiebreak.
    sorted: Vec<Vec<(f64, u32)>>,
    /// Per center: cumulative mass along `sorted`.
    prefix_mass: Vec<Vec<f64>>,
    diameter: f64,
    min_positive_dist: f64,
    total_mass: f64,
}

/// Measured doubling behaviour of a space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoublingReport {
    /// sup over centers and radii of V(x,2r)/V(x,r).
    pub c_doubling: f64,
    /// Fitted exponent n in V(x,lr) <= C l^n V(x,r).
    pub n_exp: f64,
    /// Fitted exponent D in V(y,r) <= C (1 + d(x,y)/r)^D V(x,r).
    pub d_exp: f64,
    pub diameter: f64,
    pub min_positive_dist: f64,
    pub points: usize,
}

const TRIANGLE_EXHAUSTIVE_LIMIT: usize = 500;
const TRIANGLE_SAMPLES: usize = 2_000_000;

fn triangle_tol(scale: f64) -> f64 {
    1e-9 * scale.max(1.0)
}

impl MetricMeasureSpace {
    /// Builds a space from coordinate vectors under the Euclidean metric.
    /// Masses default to 1 when `mass` is `None`.
    pub fn from_coords(coords: Vec<Vec<f64>>, mass: Option<Vec<f64>>) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::InvalidSpace("empty point set".into()));
        }
        let dim = coords[0].len();
        if coords.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidSpace(
                "coordinate vectors have mixed dimensions".into(),
            ));
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d2: f64 = coords[i]
                    .iter()
                    .zip(&coords[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let d = d2.sqrt();
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self::build(n, dist, mass, Some(coords))
    }

    /// Builds a space from an explicit row-major distance table.
    pub fn from_distances(n: usize, dist: Vec<f64>, mass: Option<Vec<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("empty point set".into()));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidSpace(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        Self::build(n, dist, mass, None)
    }

    fn build(
        n: usize,
        dist: Vec<f64>,
        mass: Option<Vec<f64>>,
        coords: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let mass = mass.unwrap_or_else(|| vec![1.0; n]);
        if mass.len() != n {
            return Err(Error::InvalidSpace(format!(
                "measure has {} entries, expected {}",
                mass.len(),
                n
            )));
        }
        for (i, &m) in mass.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidSpace(format!(
                    "non-positive mass {m} at point {i}"
                )));
            }
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::InvalidSpace(format!(
                    "nonzero diagonal entry at point {i}"
                )));
            }
            for j in (i + 1)..n {
                let dij = dist[i * n + j];
                let dji = dist[j * n + i];
                if !dij.is_finite() || dij < 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "invalid distance d({i},{j}) = {dij}"
                    )));
                }
                if dij != dji {
                    return Err(Error::InvalidSpace(format!(
                        "non-symmetric table: d({i},{j}) = {dij} but d({j},{i}) = {dji}"
                    )));
                }
                if dij == 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "distinct points {i},{j} at distance zero (not a metric)"
                    )));
                }
            }
        }
        let diameter = dist.iter().fold(0.0f64, |a, &b| a.max(b));
        check_triangle(n, &dist, triangle_tol(diameter))?;

        let sorted: Vec<Vec<(f64, u32)>> = exec::map_indexed(n, |i| {
            let mut row: Vec<(f64, u32)> = (0..n).map(|j| (dist[i * n + j], j as u32)).collect();
            row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            row
        });
        let prefix_mass: Vec<Vec<f64>> = sorted
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|&(_, j)| {
                        acc += mass[j as usize];
                        acc
                    })
                    .collect()
            })
            .collect();
        let min_positive_dist = dist
            .iter()
            .filter(|&&d| d > 0.0)
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let total_mass = mass.iter().sum();
        Ok(Self {
            n,
            dist,
            mass,
            coords,
            sorted,
            prefix_mass,
            diameter,
            min_positive_dist,
            total_mass,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest positive pairwise distance; infinite for a single point.
    pub fn min_positive_dist(&self) -> f64 {
        self.min_positive_dist
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Distance from `x` to a set, `+inf` when the set is empty.
    pub fn dist_to_set(&self, x: usize, set: &[usize]) -> f64 {
        set.iter()
            .map(|&j| self.dist(x, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Points of `B(x,r) = {y : d(x,y) < r}` in ascending index order.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        let mut pts: Vec<usize> = self.sorted[x][..self.ball_len(x, r)]
            .iter()
            .map(|&(_, j)| j as usize)
            .collect();
        pts.sort_unstable();
        pts
    }

    /// Number of points with d(x,.) < r (a prefix of `sorted_from(x)`).
    pub fn ball_len(&self, x: usize, r: f64) -> usize {
        self.sorted[x].partition_point(|&(d, _)| d < r)
    }

    /// mu(B(x,r)); at least mass(x) for every r > 0.
    pub fn volume(&self, x: usize, r: f64) -> f64 {
        let len = self.ball_len(x, r);
        if len == 0 {
            0.0
        } else {
            self.prefix_mass[x][len - 1]
        }
    }

    /// All points sorted by distance from `x` (index tiebreak).
    pub fn sorted_from(&self, x: usize) -> &[(f64, u32)] {
        &self.sorted[x]
    }

    /// Prefix lengths `l` such that `sorted_from(x)[..l]` is a distinct ball
    /// centered at `x` (each strict increase in distance opens a new ball).
    pub fn distinct_ball_prefixes(&self, x: usize) -> Vec<usize> {
        let row = &self.sorted[x];
        let mut out = Vec::new();
        for l in 1..=row.len() {
            if l == row.len() || row[l].0 > row[l - 1].0 {
                out.push(l);
            }
        }
        out
    }

    /// Cumulative masses along `sorted_from(x)`.
    pub fn prefix_masses(&self, x: usize) -> &[f64] {
        &self.prefix_mass[x]
    }

    /// Candidate radii that realize every distinct ball in the space:
    /// all positive pairwise distances, midpoints of consecutive distinct
    /// values, and one radius beyond the diameter.
    pub fn candidate_radii(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self.dist.iter().copied().filter(|&d| d > 0.0).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let mut out = Vec::with_capacity(vals.len() * 2 + 1);
        for (i, &d) in vals.iter().enumerate() {
            out.push(d);
            if i + 1 < vals.len() {
                out.push(0.5 * (d + vals[i + 1]));
            }
        }
        out.push(if self.diameter > 0.0 {
            1.25 * self.diameter
        } else {
            1.0
        });
        out
    }

    /// Candidate radii for doubling scans: distances, their halves, and
    /// midpoints of the combined set, so every transition of both V(x,r)
    /// and V(x,2r) is sampled.
    pub fn doubling_radii(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self
            .dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .flat_map(|d| [d, 0.5 * d])
            .collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let mut out = Vec::with_capacity(vals.len() * 2);
        for (i, &d) in vals.iter().enumerate() {
            out.push(d);
            if i + 1 < vals.len() {
                out.push(0.5 * (d + vals[i + 1]));
            }
        }
        out
    }

    /// Measures doubling constants and fits growth exponents.
    pub fn doubling_report(&self) -> DoublingReport {
        let radii: Vec<f64> = self
            .doubling_radii()
            .into_iter()
            .filter(|&r| r <= self.diameter)
            .collect();
        let c_doubling = if radii.is_empty() {
            1.0
        } else {
            exec::max_indexed(self.n, |x| {
                radii
                    .iter()
                    .map(|&r| self.volume(x, 2.0 * r) / self.volume(x, r))
                    .fold(1.0f64, f64::max)
            })
            .max(1.0)
        };

        let n_exp = self.fit_n_exp(&radii);
        let d_exp = self.fit_d_exp(&radii);
        DoublingReport {
            c_doubling,
            n_exp,
            d_exp,
            diameter: self.diameter,
            min_positive_dist: if self.min_positive_dist.is_finite() {
                self.min_positive_dist
            } else {
                0.0
            },
            points: self.n,
        }
    }

    /// One-parameter fit of the doubling inequality on the scaling regime:
    /// the smallest n with V(x,2r) <= 2^n V(x,r) over base radii above the
    /// lattice spacing (strict balls at the minimum distance are singletons)
    /// and doubled balls below half the total mass (saturation flattens
    /// growth). Falls back to the unguarded sup when the regime is empty.
    fn fit_n_exp(&self, radii: &[f64]) -> f64 {
        if self.diameter <= 0.0 || !self.min_positive_dist.is_finite() {
            return 0.0;
        }
        let half_mass = 0.5 * self.total_mass;
        let clean = exec::max_indexed(self.n, |x| {
            radii
                .iter()
                .filter_map(|&r| {
                    if r <= self.min_positive_dist {
                        return None;
                    }
                    let big = self.volume(x, 2.0 * r);
                    (big <= half_mass).then(|| big / self.volume(x, r))
                })
                .fold(f64::NEG_INFINITY, f64::max)
        });
        let m = if clean.is_finite() && clean >= 1.0 {
            clean
        } else {
            exec::max_indexed(self.n, |x| {
                radii
                    .iter()
                    .map(|&r| self.volume(x, 2.0 * r) / self.volume(x, r))
                    .fold(1.0f64, f64::max)
            })
        };
        m.max(1.0).log2()
    }

    /// Least-squares slope of log(V(y,r)/V(x,r)) against log(1 + d(x,y)/r)
    /// over all point pairs and a subsample of radii.
    fn fit_d_exp(&self, radii: &[f64]) -> f64 {
        if radii.is_empty() {
            return 0.0;
        }
        let step = (radii.len() / 16).max(1);
        let rs: Vec<f64> = radii.iter().copied().step_by(step).collect();
        let rows: Vec<Vec<(f64, f64)>> = exec::map_indexed(self.n, |x| {
            let mut row = Vec::new();
            for y in 0..self.n {
                if y == x {
                    continue;
                }
                let d = self.dist(x, y);
                for &r in &rs {
                    let ratio = self.volume(y, r) / self.volume(x, r);
                    row.push(((1.0 + d / r).ln(), ratio.ln()));
                }
            }
            row
        });
        let pts: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
        least_squares_slope(&pts)
    }

    /// Uncentered Hardy-Littlewood maximal function: for each point, the
    /// largest average of `f` over any distinct ball containing it.
    pub fn maximal_function(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        // Per-center averages over every distinct ball, then a sequential
        // max-scatter to the members so results do not depend on scheduling.
        let per_center: Vec<Vec<(usize, f64)>> = exec::map_indexed(self.n, |c| {
            let row = &self.sorted[c];
            let mut out = Vec::new();
            let mut fsum = 0.0;
            let mut msum = 0.0;
            for l in 1..=self.n {
                let (_, j) = row[l - 1];
                fsum += f[j as usize] * self.mass[j as usize];
                msum += self.mass[j as usize];
                if l == self.n || row[l].0 > row[l - 1].0 {
                    out.push((l, fsum / msum));
                }
            }
            out
        });
        let mut max_val = vec![f64::NEG_INFINITY; self.n];
        for (c, balls) in per_center.iter().enumerate() {
            for &(len, avg) in balls {
                for &(_, j) in &self.sorted[c][..len] {
                    let v = &mut max_val[j as usize];
                    if avg > *v {
                        *v = avg;
                    }
                }
            }
        }
        max_val
    }

    /// Centered variant: averages only over balls centered at the point.
    pub fn maximal_function_centered(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        exec::map_indexed(self.n, |c| {
            let row = &self.sorted[c];
            let mut best = f64::NEG_INFINITY;
            let mut fsum = 0.0;
            let mut msum = 0.0;
            for l in 1..=self.n {
                let (_, j) = row[l - 1];
                fsum += f[j as usize] * self.mass[j as usize];
                msum += self.mass[j as usize];
                if l == self.n || row[l].0 > row[l - 1].0 {
                    best = best.max(fsum / msum);
                }
            }
            best
        })
    }

    /// Weighted Lebesgue norm (sum |f|^p w mu)^(1/p), p > 0.
    pub fn lp_norm_weighted(&self, f: &[f64], w: &[f64], p: f64) -> f64 {
        assert!(p > 0.0, "p must be positive");
        assert_eq!(f.len(), self.n);
        assert_eq!(w.len(), self.n);
        let s: f64 = (0..self.n)
            .map(|i| f[i].abs().powf(p) * w[i] * self.mass[i])
            .sum();
        s.powf(1.0 / p)
    }

    /// Greedy r-net: centers pairwise >= r apart, every point strictly
    /// within r of some center. Deterministic (index order).
    pub fn greedy_net(&self, r: f64) -> Vec<usize> {
        self.greedy_net_seeded(&[], r)
    }

    /// Greedy r-net extending `seeds` (kept verbatim, assumed r-separated).
    pub fn greedy_net_seeded(&self, seeds: &[usize], r: f64) -> Vec<usize> {
        assert!(r > 0.0, "net radius must be positive");
        let mut centers: Vec<usize> = seeds.to_vec();
        for p in 0..self.n {
            if centers.iter().all(|&c| self.dist(p, c) >= r) {
                centers.push(p);
            }
        }
        centers
    }

    /// Stable content hash over the defining data (distances and masses).
    pub fn content_hash(&self) -> u64 {
        let mut h = FnvHasher::new();
        h.write_u64(self.n as u64);
        for &d in &self.dist {
            h.write_u64(d.to_bits());
        }
        for &m in &self.mass {
            h.write_u64(m.to_bits());
        }
        h.finish()
    }
}

fn check_triangle(n: usize, dist: &[f64], tol: f64) -> Result<()> {
    let check = |i: usize, j: usize, k: usize| -> Result<()> {
        let lhs = dist[i * n + k];
        let rhs = dist[i * n + j] + dist[j * n + k];
        if lhs > rhs + tol {
            return Err(Error::InvalidSpace(format!(
                "triangle violation: d({i},{k}) = {lhs} > d({i},{j}) + d({j},{k}) = {rhs}"
            )));
        }
        Ok(())
    };
    if n <= TRIANGLE_EXHAUSTIVE_LIMIT {
        let bad = exec::map_indexed(n, |i| {
            for j in 0..n {
                for k in 0..n {
                    if let Err(e) = check(i, j, k) {
                        return Some(e);
                    }
                }
            }
            None
        });
        if let Some(e) = bad.into_iter().flatten().next() {
            return Err(e);
        }
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7514_D1A6);
        for _ in 0..TRIANGLE_SAMPLES {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            let k = rng.gen_range(0..n);
            check(i, j, k)?;
        }
    }
    Ok(())
}

/// Slope of the least-squares line through (x, y) points; 0 when degenerate.
fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    }
}

/// 1-D integer grid `{0, 1, ..., n-1}` with unit masses.
pub fn grid_1d(n: usize) -> Result<MetricMeasureSpace> {
    MetricMeasureSpace::from_coords((0..n).map(|i| vec![i as f64]).collect(), None)
}

/// 2-D integer grid `w x h` with unit masses, row-major point order.
pub fn grid_2d(w: usize, h: usize) -> Result<MetricMeasureSpace> {
    let mut coords = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            coords.push(vec![x as f64, y as f64]);
        }
    }
    MetricMeasureSpace::from_coords(coords, None)
}
