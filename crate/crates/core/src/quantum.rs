//! Dense statevector simulation of few-qubit systems, Born-rule outcome
//! distributions, and numerical verification of the characterization of
//! states and observables that pass the GHZ relations.
//!
//! Everything here is exact double-precision linear algebra on vectors of
//! dimension at most 2^14. Pass/fail residual checks use [`RESIDUAL_TOL`].

use crate::bits::SeededRng;
use num_complex::Complex64;
use std::fmt;

/// Numerical tolerance for pass/fail residuals. Double precision leaves
/// ample headroom at these dimensions.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Hard cap on qubit count for dense simulation.
pub const MAX_QUBITS: usize = 14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantumError {
    #[error("{n} qubits exceeds the dense-simulation bound of {MAX_QUBITS}")]
    TooManyQubits { n: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("bad specification: {0}")]
    BadSpec(String),
}

fn dim_mismatch(context: impl Into<String>) -> QuantumError {
    QuantumError::DimensionMismatch {
        context: context.into(),
    }
}

/// A measurement outcome value, +1 or -1.
///
/// The bit encoding used throughout is +1 -> 0, -1 -> 1; tuple indices are
/// big-endian with device 0 as the most significant position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn bit(self) -> bool {
        self == Sign::Minus
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn mul(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+1"),
            Sign::Minus => write!(f, "-1"),
        }
    }
}

/// Product of a sequence of signs.
pub fn sign_product(signs: &[Sign]) -> Sign {
    signs.iter().fold(Sign::Plus, |acc, &s| acc.mul(s))
}

pub fn signs_to_index(signs: &[Sign]) -> usize {
    signs
        .iter()
        .fold(0usize, |acc, &s| (acc << 1) | usize::from(s.bit()))
}

pub fn index_to_signs(index: usize, n: usize) -> Vec<Sign> {
    (0..n)
        .map(|i| Sign::from_bit((index >> (n - 1 - i)) & 1 == 1))
        .collect()
}

/// Small dense complex matrix, row-major. Sized for single-device
/// observables and unitaries (dimension at most a few dozen).
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Builds from rows; panics if the shape is ragged.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix rows must form a square");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = CMatrix::zero(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.at(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    let v = out.at(i, j) + a * other.at(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, other.dim);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        CMatrix {
            dim: self.dim,
            data,
        }
    }

    pub fn scale(&self, factor: Complex64) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn adjoint(&self) -> CMatrix {
        let d = self.dim;
        let mut out = CMatrix::zero(d);
        for i in 0..d {
            for j in 0..d {
                out.set(j, i, self.at(i, j).conj());
            }
        }
        out
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (da, db) = (self.dim, other.dim);
        let mut out = CMatrix::zero(da * db);
        for i1 in 0..da {
            for j1 in 0..da {
                let a = self.at(i1, j1);
                for i2 in 0..db {
                    for j2 in 0..db {
                        out.set(i1 * db + i2, j1 * db + j2, a * other.at(i2, j2));
                    }
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.adjoint()
            .mul(self)
            .max_abs_diff(&CMatrix::identity(self.dim))
            <= tol
    }

    /// Checks M^2 = I, i.e. eigenvalues are all +-1 for Hermitian M.
    pub fn squares_to_identity(&self, tol: f64) -> bool {
        self.mul(self).max_abs_diff(&CMatrix::identity(self.dim)) <= tol
    }

    /// Haar-style random unitary: complex Gaussian matrix orthonormalized
    /// by twice-iterated Gram-Schmidt on columns.
    pub fn random_unitary(dim: usize, rng: &mut SeededRng) -> CMatrix {
        let mut cols: Vec<Vec<Complex64>> = (0..dim)
            .map(|_| {
                (0..dim)
                    .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
                    .collect()
            })
            .collect();
        for _pass in 0..2 {
            for j in 0..dim {
                for k in 0..j {
                    let proj: Complex64 = cols[k]
                        .iter()
                        .zip(&cols[j])
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    for i in 0..dim {
                        let delta = proj * cols[k][i];
                        cols[j][i] -= delta;
                    }
                }
                let norm: f64 = cols[j].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                for v in &mut cols[j] {
                    *v /= norm;
                }
            }
        }
        let mut out = CMatrix::zero(dim);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                out.set(i, j, v);
            }
        }
        out
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix(dim={})", self.dim)?;
        for i in 0..self.dim {
            write!(f, "  [")?;
            for j in 0..self.dim {
                let v = self.at(i, j);
                write!(f, " {:+.3}{:+.3}i", v.re, v.im)?;
            }
            writeln!(f, " ]")?;
        }
        Ok(())
    }
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    // Box-Muller; u1 in (0, 1].
    let u1 = 1.0 - rng.unit_f64();
    let u2 = rng.unit_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Normalized amplitude vector over n two-level systems.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps an amplitude vector; the length must be a power of two and
    /// the squared norm must be 1 within [`RESIDUAL_TOL`].
    pub fn new(amps: Vec<Complex64>) -> Result<Self, QuantumError> {
        if amps.is_empty() || !amps.len().is_power_of_two() {
            return Err(QuantumError::BadSpec(format!(
                "state dimension {} is not a power of two",
                amps.len()
            )));
        }
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > RESIDUAL_TOL {
            return Err(QuantumError::BadSpec(format!(
                "state norm^2 = {norm_sqr}, not 1"
            )));
        }
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }
}

/// |0...0> - |1...1> over sqrt(2) on `n` systems.
pub fn ghz_state(n: usize) -> Result<StateVector, QuantumError> {
    assert!(n >= 1, "ghz_state needs at least one system");
    if n > MAX_QUBITS {
        return Err(QuantumError::TooManyQubits { n });
    }
    let dim = 1usize << n;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    amps[0] = Complex64::new(inv_sqrt2, 0.0);
    amps[dim - 1] = Complex64::new(-inv_sqrt2, 0.0);
    Ok(StateVector { amps })
}

/// A single-device two-outcome observable: Hermitian and squaring to the
/// identity (eigenvalues +-1) within [`RESIDUAL_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct LocalObservable {
    matrix: CMatrix,
}

impl LocalObservable {
    pub fn new(matrix: CMatrix) -> Result<Self, QuantumError> {
        if !matrix.is_hermitian(RESIDUAL_TOL) {
            return Err(QuantumError::BadSpec("observable is not Hermitian".into()));
        }
        if !matrix.squares_to_identity(RESIDUAL_TOL) {
            return Err(QuantumError::BadSpec(
                "observable does not square to the identity".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn sigma_x() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            matrix: CMatrix::from_rows(&[vec![zero, one], vec![one, zero]]),
        }
    }

    /// Convention: sigma_y |0> = i|1>, sigma_y |1> = -i|0>.
    pub fn sigma_y() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        Self {
            matrix: CMatrix::from_rows(&[vec![zero, -i], vec![i, zero]]),
        }
    }

    pub fn sigma_z() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            matrix: CMatrix::from_rows(&[vec![one, zero], vec![zero, -one]]),
        }
    }

    /// Diagonal observable with the given +-1 entries (a classical,
    /// commuting model).
    pub fn diagonal(entries: &[Sign]) -> Self {
        let mut m = CMatrix::zero(entries.len());
        for (i, s) in entries.iter().enumerate() {
            m.set(i, i, Complex64::new(s.value(), 0.0));
        }
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Projectors onto the +1 and -1 eigenspaces: (I +- O) / 2.
    pub fn projectors(&self) -> [CMatrix; 2] {
        let half = Complex64::new(0.5, 0.0);
        let id = CMatrix::identity(self.dim());
        [
            id.add(&self.matrix).scale(half),
            id.add(&self.matrix.scale(Complex64::new(-1.0, 0.0)))
                .scale(half),
        ]
    }

    /// U O U^dagger.
    pub fn conjugated_by(&self, u: &CMatrix) -> Result<Self, QuantumError> {
        if u.dim() != self.dim() {
            return Err(dim_mismatch(format!(
                "unitary dim {} vs observable dim {}",
                u.dim(),
                self.dim()
            )));
        }
        Self::new(u.mul(&self.matrix).mul(&u.adjoint()))
    }
}

/// The two settings of one device.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservablePair {
    p_obs: LocalObservable,
    q_obs: LocalObservable,
}

impl ObservablePair {
    pub fn new(p_obs: LocalObservable, q_obs: LocalObservable) -> Result<Self, QuantumError> {
        if p_obs.dim() != q_obs.dim() {
            return Err(dim_mismatch(format!(
                "P dim {} vs Q dim {}",
                p_obs.dim(),
                q_obs.dim()
            )));
        }
        Ok(Self { p_obs, q_obs })
    }

    pub fn xy() -> Self {
        Self {
            p_obs: LocalObservable::sigma_x(),
            q_obs: LocalObservable::sigma_y(),
        }
    }

    pub fn p(&self) -> &LocalObservable {
        &self.p_obs
    }

    pub fn q(&self) -> &LocalObservable {
        &self.q_obs
    }

    pub fn dim(&self) -> usize {
        self.p_obs.dim()
    }

    /// Rotates P by angle `theta` with Q as the generator:
    /// P' = cos(theta) P + i sin(theta) PQ. When {P, Q} = 0 this is again
    /// Hermitian and squares to the identity, and it does not commute with
    /// the original pair for theta away from multiples of pi.
    pub fn with_rotated_p(&self, theta: f64) -> Result<Self, QuantumError> {
        let p = self.p_obs.matrix();
        let q = self.q_obs.matrix();
        let rotated = p
            .scale(Complex64::new(theta.cos(), 0.0))
            .add(&p.mul(q).scale(Complex64::new(0.0, theta.sin())));
        Ok(Self {
            p_obs: LocalObservable::new(rotated)?,
            q_obs: self.q_obs.clone(),
        })
    }
}

fn device_dims(pairs: &[ObservablePair]) -> Vec<usize> {
    pairs.iter().map(ObservablePair::dim).collect()
}

fn check_partition(state: &StateVector, dims: &[usize]) -> Result<(), QuantumError> {
    let prod: usize = dims.iter().product();
    if prod != state.dim() {
        return Err(dim_mismatch(format!(
            "device dims {dims:?} span {prod}, state dim {}",
            state.dim()
        )));
    }
    Ok(())
}

/// Applies a matrix on the `device`-th block of a state laid out with
/// device 0 as the most significant index.
pub(crate) fn apply_local(
    amps: &[Complex64],
    dims: &[usize],
    device: usize,
    m: &CMatrix,
) -> Vec<Complex64> {
    let d = dims[device];
    assert_eq!(m.dim(), d);
    let stride: usize = dims[device + 1..].iter().product();
    let block = d * stride;
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    let mut base = 0;
    while base < amps.len() {
        for offset in 0..stride {
            for row in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for col in 0..d {
                    acc += m.at(row, col) * amps[base + col * stride + offset];
                }
                out[base + row * stride + offset] = acc;
            }
        }
        base += block;
    }
    out
}

pub(crate) fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Applies the tensor product of one observable per device.
fn apply_product(state: &StateVector, dims: &[usize], observables: &[&CMatrix]) -> Vec<Complex64> {
    let mut amps = state.amplitudes().to_vec();
    for (device, m) in observables.iter().enumerate() {
        amps = apply_local(&amps, dims, device, m);
    }
    amps
}

/// Residual of the eigen-relation O1 x O2 x ... |psi> = target |psi>.
fn relation_residual(
    state: &StateVector,
    dims: &[usize],
    observables: &[&CMatrix],
    target: Sign,
) -> f64 {
    let applied = apply_product(state, dims, observables);
    let diff: Vec<Complex64> = applied
        .iter()
        .zip(state.amplitudes())
        .map(|(a, psi)| a - psi * Complex64::new(target.value(), 0.0))
        .collect();
    vec_norm(&diff)
}

/// Exact joint outcome distribution over {+1, -1}^n for one observable
/// per device.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    n_devices: usize,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn prob(&self, outcomes: &[Sign]) -> f64 {
        assert_eq!(outcomes.len(), self.n_devices);
        self.probs[signs_to_index(outcomes)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<Sign>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (index_to_signs(i, self.n_devices), p))
    }

    /// Marginal (P(+1), P(-1)) of one device.
    pub fn marginal(&self, device: usize) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (signs, p) in self.iter() {
            match signs[device] {
                Sign::Plus => plus += p,
                Sign::Minus => minus += p,
            }
        }
        (plus, minus)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Born-rule distribution via projectors onto the +-1 eigenspaces of each
/// device observable. Projectors on distinct devices commute, so the
/// branch probabilities are exact.
pub fn joint_outcome_distribution(
    state: &StateVector,
    observables: &[LocalObservable],
) -> Result<OutcomeDistribution, QuantumError> {
    let dims: Vec<usize> = observables.iter().map(LocalObservable::dim).collect();
    check_partition(state, &dims)?;
    let n = observables.len();

    let projectors: Vec<[CMatrix; 2]> = observables
        .iter()
        .map(LocalObservable::projectors)
        .collect();

    let mut probs = vec![0.0; 1 << n];
    let mut stack: Vec<(usize, usize, Vec<Complex64>)> = vec![(0, 0, state.amplitudes().to_vec())];
    while let Some((device, prefix, amps)) = stack.pop() {
        if device == n {
            probs[prefix] = vec_norm(&amps).powi(2);
            continue;
        }
        for (branch, projector) in projectors[device].iter().enumerate() {
            let next = apply_local(&amps, &dims, device, projector);
            stack.push((device + 1, (prefix << 1) | branch, next));
        }
    }

    let total: f64 = probs.iter().sum();
    debug_assert!(
        (total - 1.0).abs() <= RESIDUAL_TOL,
        "distribution sums to {total}"
    );
    Ok(OutcomeDistribution {
        n_devices: n,
        probs,
    })
}

/// Canonical family of GHZ-passing instances: per device a block
/// dimension d_i, observables unitarily equivalent to 1_d x sigma_x and
/// 1_d x sigma_y, and a state that is a weighted stack of GHZ blocks.
#[derive(Clone, Debug)]
pub struct CanonicalInstance {
    /// One block dimension per device; each a power of two.
    pub block_dims: Vec<usize>,
    /// Complex weights, one per joint block; the |a|^2 must sum to 1.
    pub block_weights: Vec<Complex64>,
    /// One unitary per device, of dimension 2 * block_dims[i].
    pub local_unitaries: Vec<CMatrix>,
}

impl CanonicalInstance {
    /// All block dims 1, a single unit weight, identity unitaries.
    /// Realizes exactly (ghz_state(3), sigma_x/sigma_y pairs).
    pub fn trivial() -> Self {
        Self {
            block_dims: vec![1, 1, 1],
            block_weights: vec![Complex64::new(1.0, 0.0)],
            local_unitaries: vec![CMatrix::identity(2); 3],
        }
    }

    /// Random instance with block dims drawn from the powers of two up to
    /// `max_block_dim`, Gaussian weights (normalized), and random local
    /// unitaries.
    pub fn random(rng: &mut SeededRng, max_block_dim: usize) -> Self {
        let choices: Vec<usize> = (0..)
            .map(|e| 1usize << e)
            .take_while(|&d| d <= max_block_dim)
            .collect();
        let block_dims: Vec<usize> = (0..3)
            .map(|_| choices[rng.below(choices.len() as u64) as usize])
            .collect();
        let n_blocks: usize = block_dims.iter().product();
        let mut weights: Vec<Complex64> = (0..n_blocks)
            .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
            .collect();
        let norm: f64 = weights.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        for w in &mut weights {
            *w /= norm;
        }
        let local_unitaries = block_dims
            .iter()
            .map(|&d| CMatrix::random_unitary(2 * d, rng))
            .collect();
        Self {
            block_dims,
            block_weights: weights,
            local_unitaries,
        }
    }
}

/// Materializes a canonical instance into a state and observable pairs.
pub fn canonical_instance(
    spec: &CanonicalInstance,
) -> Result<(StateVector, Vec<ObservablePair>), QuantumError> {
    if spec.block_dims.len() != 3 || spec.local_unitaries.len() != 3 {
        return Err(QuantumError::BadSpec(
            "canonical instances are tripartite: need 3 block dims and 3 unitaries".into(),
        ));
    }
    for &d in &spec.block_dims {
        if d == 0 || !d.is_power_of_two() {
            return Err(QuantumError::BadSpec(format!(
                "block dim {d} is not a positive power of two"
            )));
        }
    }
    let n_blocks: usize = spec.block_dims.iter().product();
    if spec.block_weights.len() != n_blocks {
        return Err(QuantumError::BadSpec(format!(
            "expected {n_blocks} block weights, got {}",
            spec.block_weights.len()
        )));
    }
    let weight_norm: f64 = spec.block_weights.iter().map(|w| w.norm_sqr()).sum();
    if (weight_norm - 1.0).abs() > RESIDUAL_TOL {
        return Err(QuantumError::BadSpec(format!(
            "block weights have squared norm {weight_norm}, not 1"
        )));
    }
    for (i, u) in spec.local_unitaries.iter().enumerate() {
        if u.dim() != 2 * spec.block_dims[i] {
            return Err(QuantumError::BadSpec(format!(
                "unitary {i} has dim {}, expected {}",
                u.dim(),
                2 * spec.block_dims[i]
            )));
        }
        if !u.is_unitary(RESIDUAL_TOL) {
            return Err(QuantumError::BadSpec(format!("matrix {i} is not unitary")));
        }
    }

    let dims: Vec<usize> = spec.block_dims.iter().map(|&d| 2 * d).collect();
    let total: usize = dims.iter().product();
    let ghz = ghz_state(3)?;

    // Base state: sum_j a_j |j-blocks> x |GHZ>, laid out per device as
    // |m_i>|b_i> with local index 2 m_i + b_i.
    let mut amps = vec![Complex64::new(0.0, 0.0); total];
    let (d1, d2, d3) = (spec.block_dims[0], spec.block_dims[1], spec.block_dims[2]);
    for m1 in 0..d1 {
        for m2 in 0..d2 {
            for m3 in 0..d3 {
                let j = (m1 * d2 + m2) * d3 + m3;
                for b in 0..8usize {
                    let g = ghz.amplitude(b);
                    if g == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let (b1, b2, b3) = ((b >> 2) & 1, (b >> 1) & 1, b & 1);
                    let l1 = 2 * m1 + b1;
                    let l2 = 2 * m2 + b2;
                    let l3 = 2 * m3 + b3;
                    let index = (l1 * dims[1] + l2) * dims[2] + l3;
                    amps[index] = spec.block_weights[j] * g;
                }
            }
        }
    }
    for (device, u) in spec.local_unitaries.iter().enumerate() {
        amps = apply_local(&amps, &dims, device, u);
    }
    let state = StateVector::new(amps)?;

    let pairs = spec
        .block_dims
        .iter()
        .zip(&spec.local_unitaries)
        .map(|(&d, u)| {
            let id = CMatrix::identity(d);
            let p = LocalObservable::new(id.kron(LocalObservable::sigma_x().matrix()))?
                .conjugated_by(u)?;
            let q = LocalObservable::new(id.kron(LocalObservable::sigma_y().matrix()))?
                .conjugated_by(u)?;
            ObservablePair::new(p, q)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok((state, pairs))
}

/// Residuals of the four tripartite eigen-relations.
#[derive(Clone, Debug)]
pub struct RelationReport {
    /// (setting pattern, demanded sign, vector-norm residual).
    pub relations: [(&'static str, Sign, f64); 4],
    pub pass: bool,
}

impl RelationReport {
    pub fn max_residual(&self) -> f64 {
        self.relations
            .iter()
            .map(|&(_, _, r)| r)
            .fold(0.0, f64::max)
    }
}

/// Checks the four GHZ eigen-relations: PPP with sign -1; QQP, QPQ, PQQ
/// with sign +1. Pass means all residuals are within [`RESIDUAL_TOL`].
pub fn verify_ghz_relations(
    state: &StateVector,
    pairs: &[ObservablePair],
) -> Result<RelationReport, QuantumError> {
    if pairs.len() != 3 {
        return Err(dim_mismatch(format!(
            "relation check needs 3 devices, got {}",
            pairs.len()
        )));
    }
    let dims = device_dims(pairs);
    check_partition(state, &dims)?;

    let pat = |label: &'static str, target: Sign| {
        let obs: Vec<&CMatrix> = label
            .bytes()
            .zip(pairs)
            .map(|(c, pair)| {
                if c == b'P' {
                    pair.p().matrix()
                } else {
                    pair.q().matrix()
                }
            })
            .collect();
        (label, target, relation_residual(state, &dims, &obs, target))
    };

    let relations = [
        pat("PPP", Sign::Minus),
        pat("QQP", Sign::Plus),
        pat("QPQ", Sign::Plus),
        pat("PQQ", Sign::Plus),
    ];
    let pass = relations.iter().all(|&(_, _, r)| r <= RESIDUAL_TOL);
    Ok(RelationReport { relations, pass })
}

/// Structural residuals: the F-operator eigencheck and the per-device
/// anticommutators.
#[derive(Clone, Debug)]
pub struct StructureReport {
    /// || F |psi> - |psi> || with F = (PQQ + QPQ + QQP - PPP) / 4.
    pub f_residual: f64,
    /// || ({P_i, Q_i} x 1_rest) |psi> || per device.
    pub anticommutator_residuals: Vec<f64>,
    pub pass: bool,
}

pub fn verify_structure(
    state: &StateVector,
    pairs: &[ObservablePair],
) -> Result<StructureReport, QuantumError> {
    if pairs.len() != 3 {
        return Err(dim_mismatch(format!(
            "structure check needs 3 devices, got {}",
            pairs.len()
        )));
    }
    let dims = device_dims(pairs);
    check_partition(state, &dims)?;

    let term = |label: &str| -> Vec<Complex64> {
        let obs: Vec<&CMatrix> = label
            .bytes()
            .zip(pairs)
            .map(|(c, pair)| {
                if c == b'P' {
                    pair.p().matrix()
                } else {
                    pair.q().matrix()
                }
            })
            .collect();
        apply_product(state, &dims, &obs)
    };

    let pqq = term("PQQ");
    let qpq = term("QPQ");
    let qqp = term("QQP");
    let ppp = term("PPP");
    let f_minus_psi: Vec<Complex64> = (0..state.dim())
        .map(|i| 0.25 * (pqq[i] + qpq[i] + qqp[i] - ppp[i]) - state.amplitude(i))
        .collect();
    let f_residual = vec_norm(&f_minus_psi);

    let anticommutator_residuals: Vec<f64> = pairs
        .iter()
        .enumerate()
        .map(|(device, pair)| {
            let pq = pair.p().matrix().mul(pair.q().matrix());
            let qp = pair.q().matrix().mul(pair.p().matrix());
            let anti = pq.add(&qp);
            let applied = apply_local(state.amplitudes(), &dims, device, &anti);
            vec_norm(&applied)
        })
        .collect();

    let pass = f_residual <= RESIDUAL_TOL
        && anticommutator_residuals.iter().all(|&r| r <= RESIDUAL_TOL);
    Ok(StructureReport {
        f_residual,
        anticommutator_residuals,
        pass,
    })
}
