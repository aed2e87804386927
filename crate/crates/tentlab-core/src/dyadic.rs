//! Systems of dyadic cubes on a finite metric measure space, and Whitney
//! covers of open sets drawn from them.
//!
//! Construction recipe (deterministic): greedy nets at scales delta^k, nested
//! by seeding each net with the coarser one; each finer center adopts the
//! nearest coarser center (ties by smallest point index); each point is
//! assigned to its finest-generation center and cubes are unions of
//! descendant assignments. With the finest scale below the minimum positive
//! distance the finest nets keep every point, which pins the assignment chain
//! and yields the inner-ball containment at every generation.

use serde::{Deserialize, Serialize};

use crate::space::MetricMeasureSpace;
use crate::{Error, Result};

/// One cube of a generation: its center point, members, and the index of its
/// parent cube in the previous (coarser) generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadicCube {
    pub center: usize,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generation {
    pub k: i32,
    pub scale: f64,
    pub cubes: Vec<DyadicCube>,
}

/// A nested family of partitions built from greedy nets.
#[derive(Debug, Clone)]
pub struct DyadicCubeSystem {
    delta: f64,
    k_min: i32,
    k_max: i32,
    generations: Vec<Generation>,
    /// Per generation: point -> cube index.
    point_cube: Vec<Vec<u32>>,
    max_children: usize,
}

/// Separation constant of the underlying nets (greedy nets give 1).
pub const NET_C0: f64 = 1.0;
/// Covering constant of the underlying nets (greedy nets give 1).
pub const NET_C_BIG: f64 = 1.0;

impl DyadicCubeSystem {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    /// Largest observed child count (the measured M bound).
    pub fn max_children(&self) -> usize {
        self.max_children
    }

    pub fn scale(&self, k: i32) -> f64 {
        self.delta.powi(k)
    }

    fn gen_index(&self, k: i32) -> usize {
        (k - self.k_min) as usize
    }

    pub fn generation(&self, k: i32) -> &Generation {
        &self.generations[self.gen_index(k)]
    }

    /// Index of the cube of generation `k` containing point `x`.
    pub fn cube_index_of(&self, k: i32, x: usize) -> usize {
        self.point_cube[self.gen_index(k)][x] as usize
    }

    pub fn cube_of(&self, k: i32, x: usize) -> &DyadicCube {
        &self.generation(k).cubes[self.cube_index_of(k, x)]
    }

    /// Ancestor cube index of `(k_from, cube)` at coarser generation `k_to`.
    pub fn ancestor(&self, k_from: i32, cube: usize, k_to: i32) -> usize {
        assert!(k_to <= k_from);
        let mut k = k_from;
        let mut idx = cube;
        while k > k_to {
            idx = self.generation(k).cubes[idx]
                .parent
                .expect("non-root generation has parent links");
            k -= 1;
        }
        idx
    }

    /// diam(Q) over the members of a cube.
    pub fn cube_diameter(&self, space: &MetricMeasureSpace, k: i32, cube: usize) -> f64 {
        let members = &self.generation(k).cubes[cube].members;
        let mut d = 0.0f64;
        for (a, &i) in members.iter().enumerate() {
            for &j in members.iter().skip(a + 1) {
                d = d.max(space.dist(i, j));
            }
        }
        d
    }
}

impl DyadicCubeSystem {
    /// Rebuilds a system from serialized generations, recomputing the
    /// point-to-cube index and the measured child bound. Validates the
    /// partition layout.
    pub fn from_generations(delta: f64, generations: Vec<Generation>) -> Result<Self> {
        if generations.is_empty() {
            return Err(Error::InvalidDocument("system has no generations".into()));
        }
        let k_min = generations[0].k;
        let k_max = generations.last().unwrap().k;
        if generations
            .iter()
            .enumerate()
            .any(|(g, gen)| gen.k != k_min + g as i32)
        {
            return Err(Error::InvalidDocument(
                "generations must be consecutive in k".into(),
            ));
        }
        let n = generations[0]
            .cubes
            .iter()
            .map(|c| c.members.len())
            .sum::<usize>();
        let mut point_cube = Vec::with_capacity(generations.len());
        for gen in &generations {
            let mut idx = vec![u32::MAX; n];
            for (ci, cube) in gen.cubes.iter().enumerate() {
                for &p in &cube.members {
                    if p >= n || idx[p] != u32::MAX {
                        return Err(Error::InvalidDocument(format!(
                            "generation {}: point {p} misassigned",
                            gen.k
                        )));
                    }
                    idx[p] = ci as u32;
                }
            }
            if idx.iter().any(|&v| v == u32::MAX) {
                return Err(Error::InvalidDocument(format!(
                    "generation {} does not cover all points",
                    gen.k
                )));
            }
            point_cube.push(idx);
        }
        let mut max_children = 0usize;
        for g in 1..generations.len() {
            let mut counts = vec![0usize; generations[g - 1].cubes.len()];
            for cube in &generations[g].cubes {
                let pi = cube.parent.ok_or_else(|| {
                    Error::InvalidDocument("missing parent link".into())
                })?;
                if pi >= counts.len() {
                    return Err(Error::InvalidDocument("parent index out of range".into()));
                }
                counts[pi] += 1;
            }
            max_children = max_children.max(counts.into_iter().max().unwrap_or(0));
        }
        Ok(Self {
            delta,
            k_min,
            k_max,
            generations,
            point_cube,
            max_children,
        })
    }
}

fn default_k_min(space: &MetricMeasureSpace, delta: f64) -> i32 {
    let diam = space.diameter();
    if diam <= 0.0 {
        return 0;
    }
    // Largest k with delta^k >= diam.
    (diam.ln() / delta.ln()).floor() as i32
}

fn default_k_max(space: &MetricMeasureSpace, delta: f64) -> i32 {
    let dmin = space.min_positive_dist();
    if !dmin.is_finite() {
        return 1;
    }
    // Smallest k with 8 delta^k <= dmin, so every Whitney shell index is
    // representable without capping to a non-singleton generation.
    ((dmin / 8.0).ln() / delta.ln()).ceil() as i32
}

/// Builds the system of dyadic cubes at scales `delta^k`.
///
/// `k_range` overrides the generation window; it must still satisfy
/// `delta^k_min >= diam` and `delta^k_max < min positive distance` so the
/// coarsest nets cover at space scale and the finest generation is the
/// singleton partition.
pub fn build_dyadic_system(
    space: &MetricMeasureSpace,
    delta: f64,
    k_range: Option<(i32, i32)>,
) -> Result<DyadicCubeSystem> {
    if space.is_empty() {
        return Err(Error::InvalidSpace("empty space".into()));
    }
    if !(delta > 0.0) || delta * 12.0 * NET_C_BIG > NET_C0 {
        return Err(Error::InvalidParam(format!(
            "delta = {delta} violates 12*C0*delta <= c0 (requires delta <= 1/12)"
        )));
    }
    let (k_min, k_max) = match k_range {
        None => (default_k_min(space, delta), default_k_max(space, delta)),
        Some((a, b)) => {
            if a > b {
                return Err(Error::InvalidParam("empty generation range".into()));
            }
            let diam = space.diameter();
            if diam > 0.0 && delta.powi(a) < diam {
                return Err(Error::InvalidParam(format!(
                    "coarsest scale delta^{a} < diameter {diam}"
                )));
            }
            let dmin = space.min_positive_dist();
            if dmin.is_finite() && delta.powi(b) >= dmin {
                return Err(Error::InvalidParam(format!(
                    "finest scale delta^{b} >= min distance {dmin}"
                )));
            }
            (a, b)
        }
    };

    // Nested nets, coarsest first.
    let mut nets: Vec<Vec<usize>> = Vec::new();
    for k in k_min..=k_max {
        let r = delta.powi(k);
        let net = match nets.last() {
            None => space.greedy_net(r),
            Some(prev) => space.greedy_net_seeded(prev, r),
        };
        nets.push(net);
    }

    // Parent of each net center: nearest coarser center, smallest index on
    // ties. Nested nets make self-adoption automatic for surviving centers.
    let n_gens = nets.len();
    let mut parent_center: Vec<Vec<usize>> = vec![Vec::new(); n_gens];
    for g in 1..n_gens {
        parent_center[g] = nets[g]
            .iter()
            .map(|&c| {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for (pi, &pc) in nets[g - 1].iter().enumerate() {
                    let d = space.dist(c, pc);
                    if d < best_d || (d == best_d && pc < nets[g - 1][best]) {
                        best = pi;
                        best_d = d;
                    }
                }
                best
            })
            .collect();
    }

    // Finest-generation assignment: nearest finest center, smallest index on
    // ties. (The finest net is the whole space for default ranges, so this
    // is the identity there.)
    let n = space.len();
    let finest = &nets[n_gens - 1];
    let assign_finest: Vec<usize> = (0..n)
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (ci, &c) in finest.iter().enumerate() {
                let d = space.dist(p, c);
                if d < best_d || (d == best_d && c < finest[best]) {
                    best = ci;
                    best_d = d;
                }
            }
            best
        })
        .collect();

    // Propagate assignments up the parent chain: point -> cube per
    // generation, then cubes as unions of assignments.
    let mut point_cube: Vec<Vec<u32>> = vec![vec![0; n]; n_gens];
    for p in 0..n {
        let mut idx = assign_finest[p];
        point_cube[n_gens - 1][p] = idx as u32;
        for g in (0..n_gens - 1).rev() {
            idx = parent_center[g + 1][idx];
            point_cube[g][p] = idx as u32;
        }
    }

    let mut generations = Vec::with_capacity(n_gens);
    for (g, net) in nets.iter().enumerate() {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); net.len()];
        for p in 0..n {
            members[point_cube[g][p] as usize].push(p);
        }
        let cubes: Vec<DyadicCube> = net
            .iter()
            .enumerate()
            .map(|(ci, &c)| DyadicCube {
                center: c,
                members: members[ci].clone(),
                parent: if g == 0 {
                    None
                } else {
                    Some(parent_center[g][ci])
                },
            })
            .collect();
        generations.push(Generation {
            k: k_min + g as i32,
            scale: delta.powi(k_min + g as i32),
            cubes,
        });
    }

    let mut max_children = 0usize;
    for g in 1..n_gens {
        let mut counts = vec![0usize; generations[g - 1].cubes.len()];
        for cube in &generations[g].cubes {
            counts[cube.parent.unwrap()] += 1;
        }
        max_children = max_children.max(counts.into_iter().max().unwrap_or(0));
    }

    Ok(DyadicCubeSystem {
        delta,
        k_min,
        k_max,
        generations,
        point_cube,
        max_children,
    })
}

/// Outcome of one verified property.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub ok: bool,
    pub witness: Option<String>,
}

impl PropertyCheck {
    fn pass() -> Self {
        Self {
            ok: true,
            witness: None,
        }
    }

    fn fail(witness: String) -> Self {
        Self {
            ok: false,
            witness: Some(witness),
        }
    }
}

/// Per-property report for the six dyadic cube axioms.
#[derive(Debug, Clone, Serialize)]
pub struct DyadicVerifyReport {
    /// (i) every generation partitions the space.
    pub partition: PropertyCheck,
    /// (ii) cubes across generations nest or are disjoint.
    pub nesting: PropertyCheck,
    /// (iii) unique coarser ancestor for every cube.
    pub unique_ancestor: PropertyCheck,
    /// (iv) child counts in [1, M] and children tile the parent.
    pub children: PropertyCheck,
    pub max_children: usize,
    /// (v) B(center, c0 d^k/3) subset Q subset B(center, 2 C0 d^k).
    pub ball_sandwich: PropertyCheck,
    /// (vi) B(Q_child) subset B(Q_parent) along every link.
    pub ball_links: PropertyCheck,
    pub all_ok: bool,
}

/// Verifies Theorem-style properties (i)-(vi) exhaustively; report-only.
pub fn verify_dyadic(space: &MetricMeasureSpace, sys: &DyadicCubeSystem) -> DyadicVerifyReport {
    let n = space.len();
    let gens = sys.generations();

    let mut partition = PropertyCheck::pass();
    'outer_i: for gen in gens {
        let mut seen = vec![0usize; n];
        for (ci, cube) in gen.cubes.iter().enumerate() {
            if !cube.members.contains(&cube.center) {
                partition = PropertyCheck::fail(format!(
                    "generation {}: cube {} does not contain its center {}",
                    gen.k, ci, cube.center
                ));
                break 'outer_i;
            }
            for &p in &cube.members {
                seen[p] += 1;
            }
        }
        if !partition.ok {
            break;
        }
        for (p, &c) in seen.iter().enumerate() {
            if c != 1 {
                partition = PropertyCheck::fail(format!(
                    "generation {}: point {} covered {} times",
                    gen.k, p, c
                ));
                break 'outer_i;
            }
        }
    }

    // (ii): exhaustive pairwise scan over cube pairs from all generations.
    let mut nesting = PropertyCheck::pass();
    'outer_ii: for (ga, gen_a) in gens.iter().enumerate() {
        for gen_b in gens.iter().skip(ga + 1) {
            for (ai, a) in gen_a.cubes.iter().enumerate() {
                for (bi, b) in gen_b.cubes.iter().enumerate() {
                    let inter = b.members.iter().filter(|p| a.members.contains(p)).count();
                    if inter != 0 && inter != b.members.len() {
                        nesting = PropertyCheck::fail(format!(
                            "cubes ({},{}) and ({},{}) partially overlap",
                            gen_a.k, ai, gen_b.k, bi
                        ));
                        break 'outer_ii;
                    }
                }
            }
        }
    }

    let mut unique_ancestor = PropertyCheck::pass();
    'outer_iii: for (g, gen) in gens.iter().enumerate().skip(1) {
        for coarser in gens.iter().take(g) {
            for (ci, cube) in gen.cubes.iter().enumerate() {
                let containing = coarser
                    .cubes
                    .iter()
                    .filter(|cc| cube.members.iter().all(|p| cc.members.contains(p)))
                    .count();
                if containing != 1 {
                    unique_ancestor = PropertyCheck::fail(format!(
                        "cube ({},{}) has {} containing cubes at generation {}",
                        gen.k, ci, containing, coarser.k
                    ));
                    break 'outer_iii;
                }
            }
        }
    }

    let mut children = PropertyCheck::pass();
    'outer_iv: for g in 1..gens.len() {
        let mut child_union: Vec<Vec<usize>> = vec![Vec::new(); gens[g - 1].cubes.len()];
        let mut counts = vec![0usize; gens[g - 1].cubes.len()];
        for cube in &gens[g].cubes {
            let pi = cube.parent.expect("parent link");
            counts[pi] += 1;
            child_union[pi].extend_from_slice(&cube.members);
        }
        for (pi, parent) in gens[g - 1].cubes.iter().enumerate() {
            if counts[pi] == 0 {
                children = PropertyCheck::fail(format!(
                    "cube ({},{}) has no children",
                    gens[g - 1].k,
                    pi
                ));
                break 'outer_iv;
            }
            let mut u = child_union[pi].clone();
            u.sort_unstable();
            if u != parent.members {
                children = PropertyCheck::fail(format!(
                    "children of cube ({},{}) do not tile it",
                    gens[g - 1].k,
                    pi
                ));
                break 'outer_iv;
            }
        }
    }

    let mut ball_sandwich = PropertyCheck::pass();
    'outer_v: for gen in gens {
        let r_in = NET_C0 * gen.scale / 3.0;
        let r_out = 2.0 * NET_C_BIG * gen.scale;
        for (ci, cube) in gen.cubes.iter().enumerate() {
            let inner = space.ball(cube.center, r_in);
            if inner.iter().any(|p| !cube.members.contains(p)) {
                ball_sandwich = PropertyCheck::fail(format!(
                    "inner ball of cube ({},{}) not contained",
                    gen.k, ci
                ));
                break 'outer_v;
            }
            if cube
                .members
                .iter()
                .any(|&p| space.dist(p, cube.center) >= r_out)
            {
                ball_sandwich = PropertyCheck::fail(format!(
                    "cube ({},{}) escapes its outer ball",
                    gen.k, ci
                ));
                break 'outer_v;
            }
        }
    }

    let mut ball_links = PropertyCheck::pass();
    'outer_vi: for g in 1..gens.len() {
        let r_parent = 2.0 * NET_C_BIG * gens[g - 1].scale;
        let r_child = 2.0 * NET_C_BIG * gens[g].scale;
        for (ci, cube) in gens[g].cubes.iter().enumerate() {
            let parent = &gens[g - 1].cubes[cube.parent.expect("parent link")];
            let child_ball = space.ball(cube.center, r_child);
            let parent_ball = space.ball(parent.center, r_parent);
            if child_ball.iter().any(|p| !parent_ball.contains(p)) {
                ball_links = PropertyCheck::fail(format!(
                    "B(Q) of cube ({},{}) escapes its parent's ball",
                    gens[g].k,
                    ci
                ));
                break 'outer_vi;
            }
        }
    }

    let all_ok = partition.ok
        && nesting.ok
        && unique_ancestor.ok
        && children.ok
        && ball_sandwich.ok
        && ball_links.ok;
    DyadicVerifyReport {
        partition,
        nesting,
        unique_ancestor,
        children,
        max_children: sys.max_children(),
        ball_sandwich,
        ball_links,
        all_ok,
    }
}

/// Boundary handling when a candidate cube straddles the boundary of the
/// open set (possible only on truncated generation windows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhitneyMode {
    /// Descend to finer generations until every cube is pure; error if the
    /// finest generation still straddles.
    Strict,
    /// Intersect straddling cubes with the open set and flag them.
    Repair,
}

#[derive(Debug, Clone, Serialize)]
pub struct WhitneyCube {
    pub k: i32,
    pub cube_index: usize,
    pub center: usize,
    pub members: Vec<usize>,
    pub repaired: bool,
}

/// A Whitney cover: disjoint dyadic cubes exactly filling an open set.
#[derive(Debug, Clone, Serialize)]
pub struct WhitneyCover {
    pub omega: Vec<usize>,
    pub mode: WhitneyMode,
    pub cubes: Vec<WhitneyCube>,
}

/// Whitney shell index: the k with `8 d^k <= dist < 8 d^(k-1)`, clamped to
/// the system's generation window.
fn shell_index(sys: &DyadicCubeSystem, dist: f64) -> i32 {
    let raw = (dist / 8.0).ln() / sys.delta().ln();
    let mut k = raw.ceil();
    // Pull exact-boundary values (up to float noise) onto the boundary.
    if (raw - raw.round()).abs() < 1e-9 {
        k = raw.round();
    }
    (k as i32).clamp(sys.k_min(), sys.k_max())
}

/// Covers a proper nonempty open subset by maximal dyadic cubes whose
/// candidate family is the shell construction: cubes of generation k that
/// meet the shell `8 d^k <= d(x, complement) < 8 d^(k-1)`.
pub fn whitney_cover(
    space: &MetricMeasureSpace,
    sys: &DyadicCubeSystem,
    omega: &[usize],
    mode: WhitneyMode,
) -> Result<WhitneyCover> {
    let n = space.len();
    let mut in_omega = vec![false; n];
    for &p in omega {
        if p >= n {
            return Err(Error::InvalidParam(format!("point {p} out of range")));
        }
        in_omega[p] = true;
    }
    let omega: Vec<usize> = (0..n).filter(|&p| in_omega[p]).collect();
    let complement: Vec<usize> = (0..n).filter(|&p| !in_omega[p]).collect();
    if omega.is_empty() {
        return Err(Error::InvalidParam("empty open set".into()));
    }
    if complement.is_empty() {
        return Err(Error::InvalidParam("open set must be proper".into()));
    }

    // Candidate cubes: for each point, its cube at the shell generation.
    let mut candidates: Vec<(i32, usize)> = omega
        .iter()
        .map(|&x| {
            let k = shell_index(sys, space.dist_to_set(x, &complement));
            (k, sys.cube_index_of(k, x))
        })
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let candidate_set: std::collections::BTreeSet<(i32, usize)> =
        candidates.iter().copied().collect();

    // Maximal members of the nested candidate family: drop any cube with a
    // strict-or-equal ancestor among the candidates.
    let mut selected: Vec<(i32, usize)> = Vec::new();
    for &(k, ci) in &candidates {
        let mut maximal = true;
        let mut idx = ci;
        let mut kk = k;
        while kk > sys.k_min() {
            idx = sys.generation(kk).cubes[idx].parent.expect("parent link");
            kk -= 1;
            if candidate_set.contains(&(kk, idx)) {
                maximal = false;
                break;
            }
        }
        if maximal {
            selected.push((k, ci));
        }
    }

    // Purity pass: on full generation windows selected cubes are always
    // inside the set; truncated windows may straddle the boundary.
    let mut out: Vec<WhitneyCube> = Vec::new();
    let mut stack: Vec<(i32, usize)> = selected;
    stack.reverse();
    while let Some((k, ci)) = stack.pop() {
        let cube = &sys.generation(k).cubes[ci];
        let inside: Vec<usize> = cube
            .members
            .iter()
            .copied()
            .filter(|&p| in_omega[p])
            .collect();
        if inside.len() == cube.members.len() {
            out.push(WhitneyCube {
                k,
                cube_index: ci,
                center: cube.center,
                members: cube.members.clone(),
                repaired: false,
            });
        } else if inside.is_empty() {
            continue;
        } else {
            match mode {
                WhitneyMode::Strict => {
                    if k == sys.k_max() {
                        return Err(Error::InvariantViolated(format!(
                            "finest-generation cube ({k},{ci}) straddles the boundary; \
                             strict mode cannot descend further"
                        )));
                    }
                    for (child_i, child) in sys.generation(k + 1).cubes.iter().enumerate() {
                        if child.parent == Some(ci) && child.members.iter().any(|&p| in_omega[p])
                        {
                            stack.push((k + 1, child_i));
                        }
                    }
                }
                WhitneyMode::Repair => {
                    out.push(WhitneyCube {
                        k,
                        cube_index: ci,
                        center: cube.center,
                        members: inside,
                        repaired: true,
                    });
                }
            }
        }
    }
    out.sort_by_key(|c| (c.k, c.cube_index));
    Ok(WhitneyCover {
        omega,
        mode,
        cubes: out,
    })
}

/// Whitney cover report: disjointness and union exactly, the two distance
/// inequalities with measured slack.
#[derive(Debug, Clone, Serialize)]
pub struct WhitneyVerifyReport {
    pub disjoint: PropertyCheck,
    pub union_exact: PropertyCheck,
    /// diam(Q) <= d(Q, complement) for every cube.
    pub lower: PropertyCheck,
    /// d(Q, complement) <= delta^-2 diam(Q) for cubes of positive diameter.
    pub upper_nondegenerate: PropertyCheck,
    /// Singleton cubes (diam 0): the upper inequality is unverifiable and
    /// recorded as a degenerate pass.
    pub degenerate_cubes: usize,
    /// max over nondegenerate cubes of d(Q, complement)/(delta^-2 diam(Q)).
    pub max_upper_slack: f64,
    pub repaired_cubes: usize,
    pub all_ok: bool,
}

pub fn verify_whitney(
    space: &MetricMeasureSpace,
    sys: &DyadicCubeSystem,
    cover: &WhitneyCover,
) -> WhitneyVerifyReport {
    let n = space.len();
    let mut in_omega = vec![false; n];
    for &p in &cover.omega {
        in_omega[p] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&p| !in_omega[p]).collect();

    let mut counts = vec![0usize; n];
    for cube in &cover.cubes {
        for &p in &cube.members {
            counts[p] += 1;
        }
    }
    let mut disjoint = PropertyCheck::pass();
    let mut union_exact = PropertyCheck::pass();
    for p in 0..n {
        if counts[p] > 1 {
            disjoint = PropertyCheck::fail(format!("point {p} covered {} times", counts[p]));
            break;
        }
    }
    for p in 0..n {
        let covered = counts[p] >= 1;
        if covered != in_omega[p] {
            union_exact = PropertyCheck::fail(format!(
                "point {p}: in_omega = {}, covered = {covered}",
                in_omega[p]
            ));
            break;
        }
    }

    let inv_sq = sys.delta().powi(-2);
    let mut lower = PropertyCheck::pass();
    let mut upper = PropertyCheck::pass();
    let mut degenerate = 0usize;
    let mut max_upper_slack = 0.0f64;
    for (ci, cube) in cover.cubes.iter().enumerate() {
        let mut diam = 0.0f64;
        for (a, &i) in cube.members.iter().enumerate() {
            for &j in cube.members.iter().skip(a + 1) {
                diam = diam.max(space.dist(i, j));
            }
        }
        let d: f64 = cube
            .members
            .iter()
            .map(|&p| space.dist_to_set(p, &complement))
            .fold(f64::INFINITY, f64::min);
        if diam > d * (1.0 + 1e-12) {
            lower = PropertyCheck::fail(format!(
                "cube {ci}: diam {diam} exceeds boundary distance {d}"
            ));
        }
        if diam == 0.0 {
            degenerate += 1;
        } else {
            let slack = d / (inv_sq * diam);
            max_upper_slack = max_upper_slack.max(slack);
            if slack > 1.0 + 1e-12 {
                upper = PropertyCheck::fail(format!(
                    "cube {ci}: d(Q, complement) = {d} exceeds delta^-2 diam = {}",
                    inv_sq * diam
                ));
            }
        }
    }

    let repaired_cubes = cover.cubes.iter().filter(|c| c.repaired).count();
    let all_ok = disjoint.ok && union_exact.ok && lower.ok && upper.ok;
    WhitneyVerifyReport {
        disjoint,
        union_exact,
        lower,
        upper_nondegenerate: upper,
        degenerate_cubes: degenerate,
        max_upper_slack,
        repaired_cubes,
        all_ok,
    }
}
