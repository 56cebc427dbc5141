//! Two-universal hashing (Toeplitz over GF(2)) and the exact classical
//! privacy analytics around it: conditional min-entropy (plain and
//! smoothed), statistical distance to an ideal private string, and the
//! leftover-hash bound check by full seed enumeration.
//!
//! All adversary side information here is classical: a joint table over
//! (value, e-symbol). Entropies and distances are computed exactly, not
//! sampled.

use crate::bits::BitString;
use num_rational::Ratio;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmplifyError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("epsilon {0} is outside [0, 1)")]
    BadEpsilon(f64),
}

/// Normalization slack for distribution tables.
const TABLE_TOL: f64 = 1e-12;

/// Seed bound for full-enumeration checks (2^20 seeds).
const MAX_ENUM_BITS: usize = 20;

/// Seed for the t x n Toeplitz family: n + t - 1 bits laid out as first
/// column then first row, with M[i][j] = bits[i - j + n - 1].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitString,
    n: usize,
    t: usize,
}

impl ToeplitzSeed {
    pub fn new(bits: BitString, n: usize, t: usize) -> Result<Self, AmplifyError> {
        if t > n {
            return Err(AmplifyError::LengthMismatch(format!(
                "output length {t} exceeds input length {n}"
            )));
        }
        if n == 0 {
            return Err(AmplifyError::LengthMismatch("input length is zero".into()));
        }
        let expected = n + t - 1;
        if bits.len() != expected {
            return Err(AmplifyError::LengthMismatch(format!(
                "seed needs {expected} bits for n={n}, t={t}; got {}",
                bits.len()
            )));
        }
        Ok(Self { bits, n, t })
    }

    /// Builds the seed by cycling a base string to the required length.
    /// Used by the protocol engine, which sizes R to the input length;
    /// two-universality is a property of the full uniformly-seeded
    /// family, not of this derived subfamily.
    pub fn cycled_from(base: &BitString, n: usize, t: usize) -> Result<Self, AmplifyError> {
        if base.is_empty() {
            return Err(AmplifyError::LengthMismatch("empty seed basis".into()));
        }
        if t > n || n == 0 {
            return Err(AmplifyError::LengthMismatch(format!(
                "cannot cycle a seed for n={n}, t={t}"
            )));
        }
        let needed = n + t - 1;
        let bits = (0..needed).map(|i| base.bit(i % base.len())).collect();
        Self::new(bits, n, t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn matrix_entry(&self, row: usize, col: usize) -> bool {
        self.bits.bit(row + self.n - 1 - col)
    }
}

/// s = M x over GF(2) with the t x n Toeplitz matrix M built from the seed.
pub fn toeplitz_hash(x: &BitString, seed: &ToeplitzSeed) -> Result<BitString, AmplifyError> {
    if x.len() != seed.n {
        return Err(AmplifyError::LengthMismatch(format!(
            "input has {} bits, seed expects {}",
            x.len(),
            seed.n
        )));
    }
    let mut out = BitString::new();
    for row in 0..seed.t {
        let mut acc = false;
        for col in 0..seed.n {
            acc ^= seed.matrix_entry(row, col) && x.bit(col);
        }
        out.push(acc);
    }
    Ok(out)
}

fn gf2_rank(mut rows: Vec<u64>) -> usize {
    let mut rank = 0;
    for bit in (0..64).rev() {
        let mask = 1u64 << bit;
        if let Some(pivot) = (rank..rows.len()).find(|&r| rows[r] & mask != 0) {
            rows.swap(rank, pivot);
            let pivot_row = rows[rank];
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && *row & mask != 0 {
                    *row ^= pivot_row;
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Result of the two-universality check for the (n, t) Toeplitz family.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionReport {
    /// Max over distinct input pairs of the fraction of seeds on which
    /// they collide.
    pub max_collision: Ratio<u64>,
    /// The two-universal bound 1/|S| = 2^-t.
    pub bound: Ratio<u64>,
    pub two_universal: bool,
}

/// Exact maximum pairwise collision probability over the full seed space.
///
/// Collisions are linear: x1 and x2 collide on seed r iff M_r (x1 xor x2)
/// = 0, so it suffices to scan the nonzero differences d. For each d the
/// seed-to-hash map is linear with coefficient rows (d << i), and the
/// colliding-seed count is the kernel size 2^(seed bits - rank). The
/// module tests cross-check this against literal pair-by-seed
/// enumeration through `toeplitz_hash`.
pub fn family_collision_check(n: usize, t: usize) -> Result<CollisionReport, AmplifyError> {
    if t > n || n == 0 || t == 0 {
        return Err(AmplifyError::LengthMismatch(format!(
            "need 1 <= t <= n; got n={n}, t={t}"
        )));
    }
    let seed_bits = n + t - 1;
    if seed_bits > MAX_ENUM_BITS {
        return Err(AmplifyError::TooLarge(format!(
            "{seed_bits} seed bits exceeds the enumeration bound {MAX_ENUM_BITS}"
        )));
    }
    let mut max_collision = Ratio::new(0, 1);
    for d in 1u64..(1 << n) {
        let rows: Vec<u64> = (0..t).map(|i| d << i).collect();
        let rank = gf2_rank(rows);
        let fraction = Ratio::new(1u64 << (seed_bits - rank), 1u64 << seed_bits);
        if fraction > max_collision {
            max_collision = fraction;
        }
    }
    let bound = Ratio::new(1, 1u64 << t);
    Ok(CollisionReport {
        max_collision,
        bound,
        two_universal: max_collision <= bound,
    })
}

/// Exact joint distribution over (value bit string, adversary symbol).
/// Entries absent from the table have probability zero.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    value_bits: usize,
    e_labels: Vec<String>,
    table: BTreeMap<(BitString, usize), f64>,
}

impl JointDistribution {
    pub fn new(
        value_bits: usize,
        e_labels: Vec<String>,
        entries: impl IntoIterator<Item = ((BitString, usize), f64)>,
    ) -> Result<Self, AmplifyError> {
        if e_labels.is_empty() {
            return Err(AmplifyError::InvalidDistribution(
                "adversary alphabet is empty".into(),
            ));
        }
        let mut table = BTreeMap::new();
        let mut total = 0.0;
        for ((value, e), p) in entries {
            if value.len() != value_bits {
                return Err(AmplifyError::InvalidDistribution(format!(
                    "value {value} has {} bits, expected {value_bits}",
                    value.len()
                )));
            }
            if e >= e_labels.len() {
                return Err(AmplifyError::InvalidDistribution(format!(
                    "symbol index {e} outside alphabet of {}",
                    e_labels.len()
                )));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(AmplifyError::InvalidDistribution(format!(
                    "probability {p} for ({value}, {e})"
                )));
            }
            if p > 0.0 {
                *table.entry((value, e)).or_insert(0.0) += p;
                total += p;
            }
        }
        if (total - 1.0).abs() > TABLE_TOL {
            return Err(AmplifyError::InvalidDistribution(format!(
                "table sums to {total}"
            )));
        }
        Ok(Self {
            value_bits,
            e_labels,
            table,
        })
    }

    /// Uniform values with a trivial (single-symbol) adversary.
    pub fn uniform_values(value_bits: usize) -> Self {
        let count = 1u64 << value_bits;
        let p = 1.0 / count as f64;
        let table = (0..count)
            .map(|v| ((BitString::from_index(v, value_bits), 0), p))
            .collect();
        Self {
            value_bits,
            e_labels: vec!["trivial".into()],
            table,
        }
    }

    pub fn value_bits(&self) -> usize {
        self.value_bits
    }

    pub fn e_labels(&self) -> &[String] {
        &self.e_labels
    }

    pub fn n_symbols(&self) -> usize {
        self.e_labels.len()
    }

    pub fn prob(&self, value: &BitString, e: usize) -> f64 {
        self.table.get(&(value.clone(), e)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BitString, usize, f64)> + '_ {
        self.table.iter().map(|((v, e), &p)| (v, *e, p))
    }

    /// Marginal probability of each adversary symbol.
    pub fn e_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.e_labels.len()];
        for (_, e, p) in self.iter() {
            out[e] += p;
        }
        out
    }

    /// Merges adversary symbols through `map: old index -> new index`,
    /// a classical processing of E.
    pub fn process_e(
        &self,
        new_labels: Vec<String>,
        map: impl Fn(usize) -> usize,
    ) -> Result<Self, AmplifyError> {
        let entries: Vec<_> = self
            .iter()
            .map(|(v, e, p)| ((v.clone(), map(e)), p))
            .collect();
        Self::new(self.value_bits, new_labels, entries)
    }

    /// Per-symbol atom values (the nonzero probabilities).
    fn columns(&self) -> Vec<Vec<f64>> {
        let mut cols = vec![Vec::new(); self.e_labels.len()];
        for (_, e, p) in self.iter() {
            cols[e].push(p);
        }
        cols
    }
}

/// Classical conditional min-entropy: -log2 sum_e max_x P(x, e).
///
/// This closed form is the classical case of the operator definition: the
/// optimal sigma_E weights each symbol by its largest atom. The module
/// tests validate it against a direct feasibility search over sigma_E on
/// small alphabets.
pub fn min_entropy(joint: &JointDistribution) -> f64 {
    let guess: f64 = joint
        .columns()
        .iter()
        .map(|col| col.iter().copied().fold(0.0, f64::max))
        .sum();
    -guess.log2()
}

/// Epsilon-smooth conditional min-entropy under total-variation smoothing
/// by mass removal.
///
/// Removing mass only helps by lowering per-symbol maxima, and the
/// optimal removal waterfills those maxima, always spending budget where
/// the fewest atoms are tied at the top. Validated against a brute-force
/// search over discretized sub-distributions in the module tests.
pub fn smooth_min_entropy(joint: &JointDistribution, epsilon: f64) -> Result<f64, AmplifyError> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(AmplifyError::BadEpsilon(epsilon));
    }
    if epsilon == 0.0 {
        return Ok(min_entropy(joint));
    }

    // Per column: distinct levels descending with multiplicities.
    struct Column {
        levels: Vec<(f64, usize)>,
        cursor: usize,
        max: f64,
        ties: usize,
    }
    let mut columns: Vec<Column> = joint
        .columns()
        .into_iter()
        .filter(|col| !col.is_empty())
        .map(|mut col| {
            col.sort_by(|a, b| b.total_cmp(a));
            let mut levels: Vec<(f64, usize)> = Vec::new();
            for v in col {
                match levels.last_mut() {
                    Some((level, count)) if *level == v => *count += 1,
                    _ => levels.push((v, 1)),
                }
            }
            let max = levels[0].0;
            let ties = levels[0].1;
            Column {
                levels,
                cursor: 0,
                max,
                ties,
            }
        })
        .collect();

    let mut budget = epsilon;
    loop {
        let Some(best) = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.max > 0.0)
            .min_by_key(|&(i, c)| (c.ties, i))
            .map(|(i, _)| i)
        else {
            break;
        };
        let col = &mut columns[best];
        let next_level = col
            .levels
            .get(col.cursor + 1)
            .map(|&(v, _)| v)
            .unwrap_or(0.0);
        let drop = col.max - next_level;
        let cost = drop * col.ties as f64;
        if cost >= budget {
            col.max -= budget / col.ties as f64;
            break;
        }
        budget -= cost;
        col.max = next_level;
        col.cursor += 1;
        if let Some(&(_, count)) = col.levels.get(col.cursor) {
            col.ties += count;
        }
    }

    let guess: f64 = columns.iter().map(|c| c.max).sum();
    Ok(-guess.log2())
}

/// Right side of the leftover-hash bound: epsilon + (1/2) 2^-((hmin - t)/2).
pub fn theorem1_bound(hmin_eps: f64, t: usize, epsilon: f64) -> f64 {
    epsilon + 0.5 * 2f64.powf(-0.5 * (hmin_eps - t as f64))
}

/// The bound in terms of the sacrifice ell = hmin - t.
pub fn theorem1_bound_from_ell(ell: f64, epsilon: f64) -> f64 {
    epsilon + 0.5 * 2f64.powf(-0.5 * ell)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrivacyVerdict {
    DeltaPrivate,
    NotDeltaPrivate,
}

/// Outcome of a distance-to-ideal computation.
#[derive(Clone, Debug)]
pub struct PrivacyAssessment {
    /// Best distance estimate (the exact minimum when `exact` is set).
    pub distance: f64,
    /// Certified upper bound on the true distance; equals `distance`
    /// when exact.
    pub bound: f64,
    pub exact: bool,
    pub delta_target: f64,
    pub verdict: PrivacyVerdict,
}

/// Exact minimum over distributions q(e) of
///   (1/2) sum_{s,e} | P(s,e) - q(e) / |S| |.
///
/// The objective separates over symbols into convex piecewise-linear
/// pieces, so an exact waterfill over breakpoints solves it: the unit of
/// q-mass flows into whichever column currently has the smallest slope.
fn exact_distance_to_uniform(value_bits: usize, columns: &[Vec<f64>]) -> f64 {
    let space = (1u64 << value_bits) as f64;

    struct Col {
        nonzero: Vec<f64>, // atom values ascending
        zeros: f64,        // implicit zero atoms
        q: f64,
        cursor: usize, // nonzero atoms at or below the water level
    }

    let mut cols: Vec<Col> = columns
        .iter()
        .map(|col| {
            let mut nonzero = col.clone();
            nonzero.sort_by(f64::total_cmp);
            Col {
                zeros: space - nonzero.len() as f64,
                nonzero,
                q: 0.0,
                cursor: 0,
            }
        })
        .collect();

    let slope = |c: &Col| -> f64 {
        let below = c.zeros + c.cursor as f64;
        let above = c.nonzero.len() as f64 - c.cursor as f64;
        (below - above) / (2.0 * space)
    };

    let mut remaining = 1.0f64;
    while remaining > 0.0 {
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in cols.iter().enumerate() {
            let s = slope(c);
            if best.map_or(true, |(bs, _)| s < bs) {
                best = Some((s, i));
            }
        }
        let (_, index) = best.expect("at least one column");
        let col = &mut cols[index];
        match col.nonzero.get(col.cursor).copied() {
            Some(v) => {
                let gap = (v * space - col.q).max(0.0);
                if remaining <= gap {
                    col.q += remaining;
                    remaining = 0.0;
                } else {
                    remaining -= gap;
                    col.q = v * space;
                    while col.cursor < col.nonzero.len() && col.nonzero[col.cursor] == v {
                        col.cursor += 1;
                    }
                }
            }
            None => {
                col.q += remaining;
                remaining = 0.0;
            }
        }
    }

    let mut distance = 0.0;
    for c in &cols {
        let level = c.q / space;
        distance += 0.5 * c.zeros * level;
        for &v in &c.nonzero {
            distance += 0.5 * (v - level).abs();
        }
    }
    distance
}

/// Distance of the joint over (s, e) from the closest ideal private
/// string, with a privacy verdict against `delta_target`.
///
/// Exact for alphabets up to 16 symbols; beyond that the marginal choice
/// q = P_E is reported as an upper bound and labeled non-exact.
pub fn distance_to_ideal(
    joint: &JointDistribution,
    delta_target: f64,
) -> Result<PrivacyAssessment, AmplifyError> {
    let columns = joint.columns();
    let space = (1u64 << joint.value_bits()) as f64;

    let (distance, exact) = if joint.n_symbols() <= 16 {
        (
            exact_distance_to_uniform(joint.value_bits(), &columns),
            true,
        )
    } else {
        let mut d = 0.0;
        for col in &columns {
            let q: f64 = col.iter().sum();
            let level = q / space;
            d += 0.5 * (space - col.len() as f64) * level;
            for &v in col {
                d += 0.5 * (v - level).abs();
            }
        }
        (d, false)
    };

    let verdict = if distance <= delta_target {
        PrivacyVerdict::DeltaPrivate
    } else {
        PrivacyVerdict::NotDeltaPrivate
    };
    Ok(PrivacyAssessment {
        distance,
        bound: distance,
        exact,
        delta_target,
        verdict,
    })
}

/// Outcome of the leftover-hash enumeration.
#[derive(Clone, Debug)]
pub struct LeftoverHashReport {
    /// Exact distance of the post-hash (s, e, seed) state from uniform-s
    /// times arbitrary (e, seed), minimized over the latter.
    pub distance: f64,
    pub hmin_eps: f64,
    pub t: usize,
    pub epsilon: f64,
    /// theorem1_bound(hmin_eps, t, epsilon).
    pub bound: f64,
    /// Seeds whose Toeplitz matrix has rank below t; these make the
    /// distance strictly positive even for uniform inputs.
    pub rank_deficient_seeds: usize,
    pub pass: bool,
}

/// Hashes out t bits with every seed of the family, builds the exact
/// post-hash joint over (s, e, seed) with the seed uniform, computes the
/// exact distance with the seed included in the conditioning, and checks
/// it against the leftover-hash bound.
pub fn verify_leftover_hash(
    joint_x_e: &JointDistribution,
    t: usize,
    epsilon: f64,
) -> Result<LeftoverHashReport, AmplifyError> {
    let n = joint_x_e.value_bits();
    if t > n || t == 0 {
        return Err(AmplifyError::LengthMismatch(format!(
            "need 1 <= t <= n = {n}; got t = {t}"
        )));
    }
    let seed_bits = n + t - 1;
    if seed_bits > MAX_ENUM_BITS {
        return Err(AmplifyError::TooLarge(format!(
            "{seed_bits} seed bits exceeds the enumeration bound {MAX_ENUM_BITS}"
        )));
    }

    let hmin_eps = smooth_min_entropy(joint_x_e, epsilon)?;
    let bound = theorem1_bound(hmin_eps, t, epsilon);

    let n_seeds = 1u64 << seed_bits;
    let p_seed = 1.0 / n_seeds as f64;
    let n_e = joint_x_e.n_symbols();

    let entries: Vec<(u64, usize, f64)> = joint_x_e
        .iter()
        .map(|(v, e, p)| (v.to_index(), e, p))
        .collect();

    // One column per (e, seed) pair.
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n_e * n_seeds as usize);
    let mut rank_deficient_seeds = 0usize;
    for seed_value in 0..n_seeds {
        let seed = ToeplitzSeed::new(BitString::from_index(seed_value, seed_bits), n, t)?;
        // Matrix rows as masks over the input bits (bit n-1-j = column j).
        let rows: Vec<u64> = (0..t)
            .map(|i| {
                (0..n).fold(0u64, |acc, j| {
                    acc | (u64::from(seed.matrix_entry(i, j)) << (n - 1 - j))
                })
            })
            .collect();
        if gf2_rank(rows.clone()) < t {
            rank_deficient_seeds += 1;
        }
        let mut per_e: Vec<Vec<f64>> = vec![vec![0.0; 1 << t]; n_e];
        for &(x, e, p) in &entries {
            let mut s = 0u64;
            for row in &rows {
                s = (s << 1) | u64::from((row & x).count_ones() & 1 == 1);
            }
            per_e[e][s as usize] += p * p_seed;
        }
        for col in per_e {
            columns.push(col.into_iter().filter(|&p| p > 0.0).collect());
        }
    }

    let distance = exact_distance_to_uniform(t, &columns);
    Ok(LeftoverHashReport {
        distance,
        hmin_eps,
        t,
        epsilon,
        bound,
        rank_deficient_seeds,
        pass: distance <= bound + 1e-12,
    })
}
