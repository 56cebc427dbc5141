//! Adversary-supplied device models that answer measurement settings
//! under a non-signalling contract, plus Eve's knowledge extraction per
//! strategy.
//!
//! The interface shape enforces device isolation: a device is queried
//! with its own local setting only, never with the full setting vector or
//! any other protocol data. Correlations flow solely through the shared
//! per-strategy resource (quantum state, tables, or box memory).

use crate::bits::{BitString, SeededRng};
use crate::nonlocal::{NonlocalTest, OutcomeTuple, Setting, SettingVector};
use crate::quantum::{self, apply_local, vec_norm, ObservablePair, QuantumError, Sign, StateVector};
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("strategy inconsistent with the test: {0}")]
    InconsistentSpec(String),
    #[error("bad setting or query: {0}")]
    BadSetting(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Deterministic per-device response table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeviceTable {
    pub on_p: Sign,
    pub on_q: Sign,
}

impl DeviceTable {
    pub fn constant(value: Sign) -> Self {
        Self {
            on_p: value,
            on_q: value,
        }
    }

    /// Decodes 2 bits: bit 0 set means P -> -1, bit 1 set means Q -> -1.
    /// Used to enumerate all 4^n deterministic ensembles.
    pub fn from_code(code: u8) -> Self {
        Self {
            on_p: Sign::from_bit(code & 1 == 1),
            on_q: Sign::from_bit(code & 2 == 2),
        }
    }

    pub fn respond(&self, setting: Setting) -> Sign {
        match setting {
            Setting::P => self.on_p,
            Setting::Q => self.on_q,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.on_p == self.on_q
    }
}

/// Which product the abort-leak devices pre-commit to on targeted rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortLeakMode {
    /// Fixed outputs with product -1: valid only for the all-P setting,
    /// so a no-abort reveals the targeted setting bits exactly.
    OnlyAllP,
    /// Fixed outputs with product +1: valid for every single-P setting,
    /// aborting only on all-P.
    ExceptAllP,
}

/// Eve's device-programming strategy.
#[derive(Clone, Debug)]
pub enum StrategySpec {
    /// Measure the shared state with the given per-device observables.
    HonestQuantum {
        state: StateVector,
        pairs: Vec<ObservablePair>,
    },
    /// Deterministic tables, optionally overridden on specific rounds.
    ClassicalTable {
        tables: Vec<DeviceTable>,
        round_overrides: BTreeMap<usize, Vec<DeviceTable>>,
    },
    /// Honest behavior except on targeted rounds, where the devices emit
    /// pre-specified outputs whose product is fixed by the mode.
    AbortLeak {
        targeted_rounds: BTreeSet<usize>,
        mode: AbortLeakMode,
    },
    /// Devices 0 and 1 share a PR box; remaining devices emit the given
    /// fixed outputs. Defined for the 3-device test unless the payload
    /// explicitly covers extra devices.
    NlBox { fixed_outputs: Vec<Sign> },
}

impl StrategySpec {
    /// The honest strategy for a test family: its GHZ state with
    /// sigma_x / sigma_y on every device.
    pub fn honest_default(test: &NonlocalTest) -> Result<Self, DeviceError> {
        let (state, pairs) = crate::nonlocal::honest_observables(test)
            .map_err(|e| DeviceError::InconsistentSpec(e.to_string()))?;
        Ok(Self::HonestQuantum { state, pairs })
    }

    pub fn classical(tables: Vec<DeviceTable>) -> Self {
        Self::ClassicalTable {
            tables,
            round_overrides: BTreeMap::new(),
        }
    }

    pub fn abort_leak(targeted_rounds: impl IntoIterator<Item = usize>, mode: AbortLeakMode) -> Self {
        Self::AbortLeak {
            targeted_rounds: targeted_rounds.into_iter().collect(),
            mode,
        }
    }

    /// PR-box pair on devices 0-1, +1 everywhere else.
    pub fn nlbox_default(n_devices: usize) -> Self {
        Self::NlBox {
            fixed_outputs: vec![Sign::Plus; n_devices.saturating_sub(2)],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StrategySpec::HonestQuantum { .. } => "honest",
            StrategySpec::ClassicalTable { .. } => "classical",
            StrategySpec::AbortLeak { .. } => "abort-leak",
            StrategySpec::NlBox { .. } => "nlbox",
        }
    }
}

/// Exact PR-box joint distribution for local inputs (x, y): uniform
/// marginals, output product -1 iff x = y = P.
pub fn nlbox_pair_distribution(x: Setting, y: Setting) -> Vec<((Sign, Sign), f64)> {
    let target = if x == Setting::P && y == Setting::P {
        Sign::Minus
    } else {
        Sign::Plus
    };
    [Sign::Plus, Sign::Minus]
        .into_iter()
        .map(|a| ((a, a.mul(target)), 0.5))
        .collect()
}

/// Minimal query surface for a bank of isolated devices. A device is
/// addressed by index and sees only its own setting.
pub trait DeviceBank {
    fn n_devices(&self) -> usize;
    /// Opens the next round; any unfinished round is abandoned.
    fn begin_round(&mut self);
    /// Answers device `device`'s local setting for the current round.
    /// Each device may be queried at most once per round.
    fn query(
        &mut self,
        device: usize,
        setting: Setting,
        rng: &mut SeededRng,
    ) -> Result<Sign, DeviceError>;
}

struct QuantumResource {
    base: Vec<Complex64>,
    dims: Vec<usize>,
    pairs: Vec<ObservablePair>,
}

enum RoundKind {
    Quantum { current: Vec<Complex64> },
    Classical { tables: Vec<DeviceTable> },
    Fixed { outputs: Vec<Sign> },
    NlBox { first: Option<(usize, Setting, Sign)> },
}

struct RoundState {
    index: usize,
    queried: Vec<bool>,
    kind: RoundKind,
}

/// n isolated devices plus their shared strategy resource. Single-owner
/// and stateful; a fresh ensemble must be built for every protocol run.
pub struct DeviceEnsemble {
    test: NonlocalTest,
    spec: StrategySpec,
    quantum: Option<QuantumResource>,
    rounds_started: usize,
    round: Option<RoundState>,
}

/// Validates the strategy against the test and prepares an ensemble for
/// round 0.
pub fn build_ensemble(spec: StrategySpec, test: &NonlocalTest) -> Result<DeviceEnsemble, DeviceError> {
    let n = test.n_devices();
    let quantum = match &spec {
        StrategySpec::HonestQuantum { state, pairs } => {
            if pairs.len() != n {
                return Err(DeviceError::InconsistentSpec(format!(
                    "{} observable pairs for {n} devices",
                    pairs.len()
                )));
            }
            let dims: Vec<usize> = pairs.iter().map(ObservablePair::dim).collect();
            if dims.iter().product::<usize>() != state.dim() {
                return Err(DeviceError::InconsistentSpec(format!(
                    "observable dims {dims:?} do not span the state dim {}",
                    state.dim()
                )));
            }
            Some(QuantumResource {
                base: state.amplitudes().to_vec(),
                dims,
                pairs: pairs.clone(),
            })
        }
        StrategySpec::ClassicalTable {
            tables,
            round_overrides,
        } => {
            if tables.len() != n {
                return Err(DeviceError::InconsistentSpec(format!(
                    "{} tables for {n} devices",
                    tables.len()
                )));
            }
            for (round, t) in round_overrides {
                if t.len() != n {
                    return Err(DeviceError::InconsistentSpec(format!(
                        "override for round {round} has {} tables",
                        t.len()
                    )));
                }
            }
            None
        }
        StrategySpec::AbortLeak { .. } => {
            // Untargeted rounds fall back to the honest realization.
            let (state, pairs) = crate::nonlocal::honest_observables(test)
                .map_err(|e| DeviceError::InconsistentSpec(e.to_string()))?;
            let dims = pairs.iter().map(ObservablePair::dim).collect();
            Some(QuantumResource {
                base: state.amplitudes().to_vec(),
                dims,
                pairs,
            })
        }
        StrategySpec::NlBox { fixed_outputs } => {
            if n < 2 {
                return Err(DeviceError::InconsistentSpec(
                    "the box needs at least two devices".into(),
                ));
            }
            if fixed_outputs.len() != n - 2 {
                return Err(DeviceError::InconsistentSpec(format!(
                    "box payload fixes {} outputs but {n} devices need {}",
                    fixed_outputs.len(),
                    n - 2
                )));
            }
            None
        }
    };
    Ok(DeviceEnsemble {
        test: test.clone(),
        spec,
        quantum,
        rounds_started: 0,
        round: None,
    })
}

impl DeviceEnsemble {
    pub fn test(&self) -> &NonlocalTest {
        &self.test
    }

    pub fn spec(&self) -> &StrategySpec {
        &self.spec
    }

    pub fn rounds_started(&self) -> usize {
        self.rounds_started
    }

    fn fixed_outputs_for_mode(&self, mode: AbortLeakMode) -> Vec<Sign> {
        let n = self.test.n_devices();
        match mode {
            AbortLeakMode::OnlyAllP => {
                let mut v = vec![Sign::Plus; n];
                v[n - 1] = Sign::Minus;
                v
            }
            AbortLeakMode::ExceptAllP => vec![Sign::Plus; n],
        }
    }
}

impl DeviceBank for DeviceEnsemble {
    fn n_devices(&self) -> usize {
        self.test.n_devices()
    }

    fn begin_round(&mut self) {
        let index = self.rounds_started;
        self.rounds_started += 1;
        let kind = match &self.spec {
            StrategySpec::HonestQuantum { .. } => RoundKind::Quantum {
                current: self.quantum.as_ref().expect("quantum resource").base.clone(),
            },
            StrategySpec::ClassicalTable {
                tables,
                round_overrides,
            } => RoundKind::Classical {
                tables: round_overrides.get(&index).cloned().unwrap_or_else(|| tables.clone()),
            },
            StrategySpec::AbortLeak {
                targeted_rounds,
                mode,
            } => {
                if targeted_rounds.contains(&index) {
                    RoundKind::Fixed {
                        outputs: self.fixed_outputs_for_mode(*mode),
                    }
                } else {
                    RoundKind::Quantum {
                        current: self.quantum.as_ref().expect("quantum resource").base.clone(),
                    }
                }
            }
            StrategySpec::NlBox { .. } => RoundKind::NlBox { first: None },
        };
        self.round = Some(RoundState {
            index,
            queried: vec![false; self.test.n_devices()],
            kind,
        });
    }

    fn query(
        &mut self,
        device: usize,
        setting: Setting,
        rng: &mut SeededRng,
    ) -> Result<Sign, DeviceError> {
        let n = self.test.n_devices();
        if device >= n {
            return Err(DeviceError::BadSetting(format!(
                "device index {device} out of range for {n} devices"
            )));
        }
        let round = self
            .round
            .as_mut()
            .ok_or_else(|| DeviceError::BadSetting("no active round".into()))?;
        if round.queried[device] {
            return Err(DeviceError::BadSetting(format!(
                "device {device} already queried in round {}",
                round.index
            )));
        }
        round.queried[device] = true;

        let outcome = match &mut round.kind {
            RoundKind::Quantum { current } => {
                let resource = self.quantum.as_ref().expect("quantum resource");
                let pair = &resource.pairs[device];
                let observable = match setting {
                    Setting::P => pair.p(),
                    Setting::Q => pair.q(),
                };
                let [proj_plus, proj_minus] = observable.projectors();
                let plus_branch = apply_local(current, &resource.dims, device, &proj_plus);
                let p_plus = vec_norm(&plus_branch).powi(2);
                // Born sample, then collapse and renormalize.
                let outcome = if rng.unit_f64() < p_plus {
                    *current = plus_branch;
                    Sign::Plus
                } else {
                    *current = apply_local(current, &resource.dims, device, &proj_minus);
                    Sign::Minus
                };
                let norm = vec_norm(current);
                for a in current.iter_mut() {
                    *a /= norm;
                }
                outcome
            }
            RoundKind::Classical { tables } => tables[device].respond(setting),
            RoundKind::Fixed { outputs } => outputs[device],
            RoundKind::NlBox { first } => {
                if device >= 2 {
                    match &self.spec {
                        StrategySpec::NlBox { fixed_outputs } => fixed_outputs[device - 2],
                        _ => unreachable!(),
                    }
                } else {
                    match *first {
                        None => {
                            let out = Sign::from_bit(rng.bit());
                            *first = Some((device, setting, out));
                            out
                        }
                        Some((other, other_setting, other_out)) => {
                            if other == device {
                                return Err(DeviceError::BadSetting(
                                    "box side queried twice".into(),
                                ));
                            }
                            let target = if setting == Setting::P && other_setting == Setting::P {
                                Sign::Minus
                            } else {
                                Sign::Plus
                            };
                            other_out.mul(target)
                        }
                    }
                }
            }
        };
        Ok(outcome)
    }
}

/// Queries each device with its own component of `setting`, in device
/// order, as one round.
pub fn round_outputs<D: DeviceBank>(
    bank: &mut D,
    setting: &SettingVector,
    rng: &mut SeededRng,
) -> Result<OutcomeTuple, DeviceError> {
    if setting.len() != bank.n_devices() {
        return Err(DeviceError::BadSetting(format!(
            "setting arity {} vs {} devices",
            setting.len(),
            bank.n_devices()
        )));
    }
    bank.begin_round();
    let mut outcomes = Vec::with_capacity(bank.n_devices());
    for device in 0..bank.n_devices() {
        outcomes.push(bank.query(device, setting.device(device), rng)?);
    }
    Ok(OutcomeTuple::new(outcomes))
}

/// Public transcript events Eve can condition on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranscriptEvents {
    pub aborted: bool,
    /// Round index at which the protocol aborted, if it did.
    pub abort_round: Option<usize>,
    /// Number of rounds actually run.
    pub rounds: usize,
}

impl TranscriptEvents {
    pub fn completed(rounds: usize) -> Self {
        Self {
            aborted: false,
            abort_round: None,
            rounds,
        }
    }
}

/// What Eve can say about the setting bits of one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SettingKnowledge {
    Unknown,
    /// The setting bits are exactly this value.
    Exact(BitString),
    /// The setting bits are anything but this value.
    Excluded(BitString),
}

/// Eve's per-round predictions, derived only from the strategy and the
/// public transcript events.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundPrediction {
    pub setting_bits: SettingKnowledge,
    /// Predicted device outcomes; None where Eve has no prediction.
    pub outcomes: Vec<Option<Sign>>,
}

impl RoundPrediction {
    fn blank(n_devices: usize) -> Self {
        Self {
            setting_bits: SettingKnowledge::Unknown,
            outcomes: vec![None; n_devices],
        }
    }
}

#[derive(Clone, Debug)]
pub struct EveView {
    /// True when Eve knows the devices' deterministic response function
    /// a priori (classical tables).
    pub knows_response_tables: bool,
    pub rounds: Vec<RoundPrediction>,
}

impl EveView {
    pub fn has_any_knowledge(&self) -> bool {
        self.knows_response_tables
            || self.rounds.iter().any(|r| {
                r.setting_bits != SettingKnowledge::Unknown
                    || r.outcomes.iter().any(Option::is_some)
            })
    }

    /// Fraction of predicted outcomes that match the actual per-round
    /// tuples; None when nothing was predicted.
    pub fn outcome_accuracy(&self, actual: &[OutcomeTuple]) -> Option<f64> {
        let mut predicted = 0usize;
        let mut correct = 0usize;
        for (prediction, tuple) in self.rounds.iter().zip(actual) {
            for (device, guess) in prediction.outcomes.iter().enumerate() {
                if let Some(g) = guess {
                    predicted += 1;
                    if *g == tuple.device(device) {
                        correct += 1;
                    }
                }
            }
        }
        (predicted > 0).then(|| correct as f64 / predicted as f64)
    }
}

/// Derives Eve's knowledge from the strategy and the public events.
///
/// Honest devices give her nothing. Classical tables are known a priori.
/// An abort-leak strategy that did not abort pins the targeted rounds'
/// setting bits (exactly for the only-all-P mode, as an exclusion for the
/// except-all-P mode) and the pre-specified outputs. A box strategy pins
/// the fixed outputs of the non-box devices.
pub fn eve_predictions(
    spec: &StrategySpec,
    test: &NonlocalTest,
    events: &TranscriptEvents,
) -> EveView {
    let n = test.n_devices();
    let mut rounds: Vec<RoundPrediction> =
        (0..events.rounds).map(|_| RoundPrediction::blank(n)).collect();
    let mut knows_response_tables = false;

    match spec {
        StrategySpec::HonestQuantum { .. } => {}
        StrategySpec::ClassicalTable {
            tables,
            round_overrides,
        } => {
            knows_response_tables = true;
            for (index, round) in rounds.iter_mut().enumerate() {
                let active = round_overrides.get(&index).unwrap_or(tables);
                for (device, table) in active.iter().enumerate() {
                    if table.is_constant() {
                        round.outcomes[device] = Some(table.on_p);
                    }
                }
            }
        }
        StrategySpec::AbortLeak {
            targeted_rounds,
            mode,
        } => {
            let all_p_bits =
                BitString::from_index(test.all_p_index() as u64, test.bits_per_setting());
            let fixed: Vec<Sign> = match mode {
                AbortLeakMode::OnlyAllP => {
                    let mut v = vec![Sign::Plus; n];
                    v[n - 1] = Sign::Minus;
                    v
                }
                AbortLeakMode::ExceptAllP => vec![Sign::Plus; n],
            };
            for &target in targeted_rounds {
                if target >= events.rounds {
                    continue;
                }
                let survived = !events.aborted || events.abort_round != Some(target);
                let round = &mut rounds[target];
                if survived {
                    // The round passed, so the setting was compatible with
                    // the fixed product.
                    round.setting_bits = match mode {
                        AbortLeakMode::OnlyAllP => SettingKnowledge::Exact(all_p_bits.clone()),
                        AbortLeakMode::ExceptAllP => {
                            SettingKnowledge::Excluded(all_p_bits.clone())
                        }
                    };
                    round.outcomes = fixed.iter().map(|&s| Some(s)).collect();
                } else {
                    round.setting_bits = match mode {
                        AbortLeakMode::OnlyAllP => SettingKnowledge::Excluded(all_p_bits.clone()),
                        AbortLeakMode::ExceptAllP => SettingKnowledge::Exact(all_p_bits.clone()),
                    };
                    round.outcomes = fixed.iter().map(|&s| Some(s)).collect();
                }
            }
        }
        StrategySpec::NlBox { fixed_outputs } => {
            for round in &mut rounds {
                for (offset, &value) in fixed_outputs.iter().enumerate() {
                    round.outcomes[2 + offset] = Some(value);
                }
            }
        }
    }

    EveView {
        knows_response_tables,
        rounds,
    }
}

/// Test double: wraps a bank and records every (round, device, setting)
/// that reaches it, proving that nothing beyond local settings crosses
/// the interface.
pub struct RecordingBank<D: DeviceBank> {
    pub inner: D,
    pub log: Vec<(usize, usize, Setting)>,
    current_round: usize,
}

impl<D: DeviceBank> RecordingBank<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            log: Vec::new(),
            current_round: 0,
        }
    }
}

impl<D: DeviceBank> DeviceBank for RecordingBank<D> {
    fn n_devices(&self) -> usize {
        self.inner.n_devices()
    }

    fn begin_round(&mut self) {
        self.current_round += 1;
        self.inner.begin_round();
    }

    fn query(
        &mut self,
        device: usize,
        setting: Setting,
        rng: &mut SeededRng,
    ) -> Result<Sign, DeviceError> {
        self.log.push((self.current_round - 1, device, setting));
        self.inner.query(device, setting, rng)
    }
}
