//! The GHZ test and its k-indexed generalizations to 4k-1 devices:
//! setting encodings, outcome validation and decoding, the brute-force
//! classical oracle, and the honest quantum realization.

use crate::bits::BitString;
use crate::quantum::{
    self, ghz_state, joint_outcome_distribution, sign_product, LocalObservable, ObservablePair,
    Sign, StateVector,
};
use num_rational::Ratio;
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TestError {
    #[error("unsupported k = {k}: 4k must be a power of two")]
    UnsupportedK { k: usize },
    #[error("setting selector needs {expected} bits, got {got}")]
    WrongWidth { expected: usize, got: usize },
    #[error("setting vector is not one of the test's settings")]
    UnknownSetting,
    #[error("{n_devices} devices is too large for exhaustive classical search")]
    TooLargeK { n_devices: usize },
    #[error(transparent)]
    Quantum(#[from] quantum::QuantumError),
}

/// A device's input choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Setting {
    P,
    Q,
}

/// One input per device.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SettingVector(Vec<Setting>);

impl SettingVector {
    pub fn new(settings: Vec<Setting>) -> Self {
        Self(settings)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn device(&self, i: usize) -> Setting {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[Setting] {
        &self.0
    }
}

impl fmt::Display for SettingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            match s {
                Setting::P => write!(f, "P")?,
                Setting::Q => write!(f, "Q")?,
            }
        }
        Ok(())
    }
}

/// One output per device.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OutcomeTuple(Vec<Sign>);

impl OutcomeTuple {
    pub fn new(outcomes: Vec<Sign>) -> Self {
        Self(outcomes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn device(&self, i: usize) -> Sign {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[Sign] {
        &self.0
    }

    pub fn product(&self) -> Sign {
        sign_product(&self.0)
    }
}

/// A family of measurement settings with demanded output-product signs.
///
/// For the k-th family there are 4k-1 devices and 4k settings: "P at
/// position j, Q elsewhere" for each j (demanded product +1), then all-P
/// (demanded product -1). k = 1 is the 3-device GHZ test.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlocalTest {
    k: usize,
    n_devices: usize,
    settings: Vec<SettingVector>,
    required_products: Vec<Sign>,
    bits_per_setting: usize,
    bits_per_outcome: usize,
}

impl NonlocalTest {
    /// Builds a test from explicit settings and product demands. Intended
    /// for degenerate or experimental families; `make_test` is the
    /// canonical constructor.
    pub fn custom(settings: Vec<SettingVector>, required_products: Vec<Sign>) -> Self {
        assert_eq!(settings.len(), required_products.len());
        assert!(!settings.is_empty());
        let n_devices = settings[0].len();
        assert!(settings.iter().all(|s| s.len() == n_devices));
        let bits_per_setting = if settings.len().is_power_of_two() {
            settings.len().trailing_zeros() as usize
        } else {
            0
        };
        Self {
            k: 0,
            n_devices,
            settings,
            required_products,
            bits_per_setting,
            bits_per_outcome: n_devices.saturating_sub(1),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn n_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn settings(&self) -> &[SettingVector] {
        &self.settings
    }

    pub fn required_product(&self, setting_index: usize) -> Sign {
        self.required_products[setting_index]
    }

    /// Random bits consumed to choose a setting: log2(4k).
    pub fn bits_per_setting(&self) -> usize {
        self.bits_per_setting
    }

    /// Raw bits produced by a passing round: 4k-2.
    pub fn bits_per_outcome(&self) -> usize {
        self.bits_per_outcome
    }

    /// Index of the all-P setting (the unique product -1 demand).
    pub fn all_p_index(&self) -> usize {
        self.settings.len() - 1
    }

    fn position_of(&self, setting: &SettingVector) -> Option<usize> {
        self.settings.iter().position(|s| s == setting)
    }
}

/// Constructs the k-th test family. `k` must make 4k a power of two
/// (k = 1, 2, 4, ...).
pub fn make_test(k: usize) -> Result<NonlocalTest, TestError> {
    if k == 0 || !(4 * k).is_power_of_two() {
        return Err(TestError::UnsupportedK { k });
    }
    let n_devices = 4 * k - 1;
    let mut settings = Vec::with_capacity(4 * k);
    let mut required_products = Vec::with_capacity(4 * k);
    for p_at in 0..n_devices {
        let v = (0..n_devices)
            .map(|i| if i == p_at { Setting::P } else { Setting::Q })
            .collect();
        settings.push(SettingVector::new(v));
        required_products.push(Sign::Plus);
    }
    settings.push(SettingVector::new(vec![Setting::P; n_devices]));
    required_products.push(Sign::Minus);

    let bits_per_setting = (4 * k).trailing_zeros() as usize;
    Ok(NonlocalTest {
        k,
        n_devices,
        settings,
        required_products,
        bits_per_setting,
        bits_per_outcome: 4 * k - 2,
    })
}

/// Selects a setting from `bits_per_setting` fresh bits (big-endian).
pub fn encode_setting(test: &NonlocalTest, bits: &BitString) -> Result<SettingVector, TestError> {
    if bits.len() != test.bits_per_setting {
        return Err(TestError::WrongWidth {
            expected: test.bits_per_setting,
            got: bits.len(),
        });
    }
    let index = bits.to_index() as usize;
    test.settings
        .get(index)
        .cloned()
        .ok_or(TestError::UnknownSetting)
}

/// Checks the product demand for this setting and, on a pass, decodes the
/// outcomes into `bits_per_outcome` bits.
///
/// The assignment drops the last device's outcome (it is determined by
/// the product demand) and maps +1 -> 0 for the rest.
pub fn validate_and_decode(
    test: &NonlocalTest,
    setting: &SettingVector,
    outcomes: &OutcomeTuple,
) -> Result<Option<BitString>, TestError> {
    let position = test.position_of(setting).ok_or(TestError::UnknownSetting)?;
    assert_eq!(outcomes.len(), test.n_devices, "outcome arity mismatch");
    if outcomes.product() != test.required_products[position] {
        return Ok(None);
    }
    let bits = outcomes.as_slice()[..test.n_devices - 1]
        .iter()
        .map(|s| s.bit())
        .collect();
    Ok(Some(bits))
}

/// Maximum fraction of settings (uniformly chosen) that any deterministic
/// classical assignment can satisfy, as an exact rational.
///
/// Enumerates all 4^n assignments {P_i -> +-1, Q_i -> +-1}; bounded to 7
/// devices (k <= 2) where the space is 16384 strategies.
pub fn classical_max_pass_probability(test: &NonlocalTest) -> Result<Ratio<u64>, TestError> {
    if test.n_devices > 7 {
        return Err(TestError::TooLargeK {
            n_devices: test.n_devices,
        });
    }
    let n = test.n_devices;
    let mut best = 0u64;
    for assignment in 0u64..(1 << (2 * n)) {
        // Two bits per device: bit 2i for P, bit 2i+1 for Q (set = -1).
        let mut satisfied = 0u64;
        for (si, setting) in test.settings.iter().enumerate() {
            let mut product = Sign::Plus;
            for device in 0..n {
                let bit = match setting.device(device) {
                    Setting::P => (assignment >> (2 * device)) & 1,
                    Setting::Q => (assignment >> (2 * device + 1)) & 1,
                };
                product = product.mul(Sign::from_bit(bit == 1));
            }
            if product == test.required_products[si] {
                satisfied += 1;
            }
        }
        best = best.max(satisfied);
    }
    Ok(Ratio::new(best, test.settings.len() as u64))
}

/// The honest quantum realization: P = sigma_x and Q = sigma_y on every
/// device, sharing the (4k-1)-party GHZ state. Validated against the
/// Born-rule oracle in this module's tests: every setting's outcome
/// distribution is supported exactly on the demanded-product tuples.
pub fn honest_observables(
    test: &NonlocalTest,
) -> Result<(StateVector, Vec<ObservablePair>), TestError> {
    let state = ghz_state(test.n_devices)?;
    let pairs = (0..test.n_devices).map(|_| ObservablePair::xy()).collect();
    Ok((state, pairs))
}

/// Observables selected by a setting vector from per-device pairs.
pub fn observables_for_setting(
    pairs: &[ObservablePair],
    setting: &SettingVector,
) -> Vec<LocalObservable> {
    pairs
        .iter()
        .zip(setting.as_slice())
        .map(|(pair, s)| match s {
            Setting::P => pair.p().clone(),
            Setting::Q => pair.q().clone(),
        })
        .collect()
}

/// Exact outcome distribution of the honest realization under `setting`.
pub fn honest_setting_distribution(
    test: &NonlocalTest,
    setting: &SettingVector,
) -> Result<quantum::OutcomeDistribution, TestError> {
    let (state, pairs) = honest_observables(test)?;
    let obs = observables_for_setting(&pairs, setting);
    Ok(joint_outcome_distribution(&state, &obs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings_of(test: &NonlocalTest) -> Vec<String> {
        test.settings().iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ghz_test_structure() {
        let t = make_test(1).unwrap();
        assert_eq!(t.n_devices(), 3);
        assert_eq!(settings_of(&t), vec!["PQQ", "QPQ", "QQP", "PPP"]);
        assert_eq!(
            (0..4).map(|i| t.required_product(i)).collect::<Vec<_>>(),
            vec![Sign::Plus, Sign::Plus, Sign::Plus, Sign::Minus]
        );
        assert_eq!(t.bits_per_setting(), 2);
        assert_eq!(t.bits_per_outcome(), 2);
    }

    #[test]
    fn k2_test_matches_the_listed_combinations() {
        let t = make_test(2).unwrap();
        assert_eq!(t.n_devices(), 7);
        assert_eq!(t.n_settings(), 8);
        assert_eq!(
            settings_of(&t),
            vec![
                "PQQQQQQ", "QPQQQQQ", "QQPQQQQ", "QQQPQQQ", "QQQQPQQ", "QQQQQPQ", "QQQQQQP",
                "PPPPPPP",
            ]
        );
        for i in 0..7 {
            assert_eq!(t.required_product(i), Sign::Plus);
        }
        assert_eq!(t.required_product(7), Sign::Minus);
        assert_eq!(t.bits_per_setting(), 3);
        assert_eq!(t.bits_per_outcome(), 6);
    }

    #[test]
    fn non_power_of_two_k_is_rejected() {
        assert_eq!(make_test(3), Err(TestError::UnsupportedK { k: 3 }));
        assert_eq!(make_test(0), Err(TestError::UnsupportedK { k: 0 }));
        assert!(make_test(4).is_ok());
    }

    #[test]
    fn setting_encoding() {
        let t = make_test(1).unwrap();
        let s = encode_setting(&t, &BitString::parse("11").unwrap()).unwrap();
        assert_eq!(s.to_string(), "PPP");
        let s = encode_setting(&t, &BitString::parse("00").unwrap()).unwrap();
        assert_eq!(s.to_string(), "PQQ");

        let t2 = make_test(2).unwrap();
        let s = encode_setting(&t2, &BitString::parse("111").unwrap()).unwrap();
        assert_eq!(s.to_string(), "PPPPPPP");

        assert_eq!(
            encode_setting(&t, &BitString::parse("1").unwrap()),
            Err(TestError::WrongWidth {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn validation_and_decoding() {
        let t = make_test(1).unwrap();
        let ppp = encode_setting(&t, &BitString::parse("11").unwrap()).unwrap();

        let out = OutcomeTuple::new(vec![Sign::Plus, Sign::Plus, Sign::Minus]);
        let bits = validate_and_decode(&t, &ppp, &out).unwrap();
        assert_eq!(bits, Some(BitString::parse("00").unwrap()));

        let out = OutcomeTuple::new(vec![Sign::Plus, Sign::Plus, Sign::Plus]);
        assert_eq!(validate_and_decode(&t, &ppp, &out).unwrap(), None);

        let t2 = make_test(2).unwrap();
        let all_p = encode_setting(&t2, &BitString::parse("111").unwrap()).unwrap();
        let mut signs = vec![Sign::Plus; 7];
        signs[6] = Sign::Minus;
        let out = OutcomeTuple::new(signs);
        let bits = validate_and_decode(&t2, &all_p, &out).unwrap().unwrap();
        assert_eq!(bits.len(), 6);
        assert_eq!(bits, BitString::parse("000000").unwrap());

        let bogus = SettingVector::new(vec![Setting::P, Setting::P, Setting::Q]);
        let out = OutcomeTuple::new(vec![Sign::Plus, Sign::Plus, Sign::Plus]);
        assert_eq!(
            validate_and_decode(&t, &bogus, &out),
            Err(TestError::UnknownSetting)
        );
    }

    // Every valid (setting, decoded bits) pair corresponds to exactly one
    // passing outcome tuple: the decode map restricted to passing tuples
    // is a bijection onto the full bit range.
    #[test]
    fn decode_is_a_bijection_on_passing_tuples() {
        for k in [1usize, 2] {
            let t = make_test(k).unwrap();
            let n = t.n_devices();
            for setting in t.settings() {
                let mut seen = vec![0u32; 1 << t.bits_per_outcome()];
                let mut passing = 0u32;
                for raw in 0u64..(1 << n) {
                    let outcomes = OutcomeTuple::new(
                        (0..n)
                            .map(|i| Sign::from_bit((raw >> (n - 1 - i)) & 1 == 1))
                            .collect(),
                    );
                    if let Some(bits) = validate_and_decode(&t, setting, &outcomes).unwrap() {
                        passing += 1;
                        seen[bits.to_index() as usize] += 1;
                    }
                }
                assert_eq!(passing as usize, 1 << t.bits_per_outcome());
                assert!(seen.iter().all(|&c| c == 1), "decode not bijective");
            }
        }
    }

    #[test]
    fn classical_oracle_values() {
        let t = make_test(1).unwrap();
        assert_eq!(
            classical_max_pass_probability(&t).unwrap(),
            Ratio::new(3, 4)
        );

        let t2 = make_test(2).unwrap();
        assert_eq!(
            classical_max_pass_probability(&t2).unwrap(),
            Ratio::new(7, 8)
        );
    }

    #[test]
    fn degenerate_single_setting_test_is_classically_winnable() {
        let t = NonlocalTest::custom(
            vec![SettingVector::new(vec![Setting::P, Setting::P])],
            vec![Sign::Minus],
        );
        assert_eq!(
            classical_max_pass_probability(&t).unwrap(),
            Ratio::new(1, 1)
        );
    }

    #[test]
    fn classical_oracle_bounds_device_count() {
        let t = make_test(4).unwrap();
        assert_eq!(
            classical_max_pass_probability(&t),
            Err(TestError::TooLargeK { n_devices: 15 })
        );
    }

    #[test]
    fn honest_realization_matches_canonical_solution_for_k1() {
        let t = make_test(1).unwrap();
        let (state, pairs) = honest_observables(&t).unwrap();
        let ghz = ghz_state(3).unwrap();
        assert_eq!(state, ghz);
        for pair in &pairs {
            assert_eq!(pair.p(), &LocalObservable::sigma_x());
            assert_eq!(pair.q(), &LocalObservable::sigma_y());
        }
    }

    // The Born-rule oracle validation of the honest choice P = sigma_x,
    // Q = sigma_y: for k in {1, 2}, every setting's distribution puts zero
    // mass on failing tuples and uniform mass on each passing tuple.
    #[test]
    fn honest_distributions_are_uniform_on_passing_tuples() {
        for k in [1usize, 2] {
            let t = make_test(k).unwrap();
            let uniform = 1.0 / (1u64 << t.bits_per_outcome()) as f64;
            for (si, setting) in t.settings().iter().enumerate() {
                let dist = honest_setting_distribution(&t, setting).unwrap();
                for (signs, p) in dist.iter() {
                    if sign_product(&signs) == t.required_product(si) {
                        assert!(
                            (p - uniform).abs() < 1e-10,
                            "k={k} setting {setting} tuple {signs:?}: {p}"
                        );
                    } else {
                        assert!(
                            p.abs() < 1e-10,
                            "k={k} setting {setting} failing tuple has mass {p}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn honest_realization_respects_simulator_bound() {
        let t = make_test(4).unwrap();
        assert!(matches!(
            honest_observables(&t),
            Err(TestError::Quantum(quantum::QuantumError::TooManyQubits {
                ..
            }))
        ));
    }
}
