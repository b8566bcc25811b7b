//! Control-setting scenarios and the tampering model.
//!
//! Each scenario setting fixes the legitimate operating mode of every PV
//! unit. An attacker who has compromised a subset of the units rewrites
//! their mode parameters and afterwards spoofs the plants' own telemetry so
//! the readings look legitimate; the only honest channel that still carries
//! the attack's footprint is the substation measurement.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::der_control::{PvMode, PvOutput, PvUnit, VoltVarCurve};
use crate::grid::PvPlacement;

/// Fraction of nameplate used as the legitimate active-power cap in the
/// curtailed settings. A cap below peak availability is what gives the
/// limit-tampering attack something to bite on: for part of the day the
/// legitimate unit would sit at the cap, so a rewritten cap changes the
/// feeder state.
pub const MAXP_SETPOINT_FRAC: f64 = 0.8;

/// Power factor the attacker forces on compromised constant-pf units; the
/// sign (lead/lag) is drawn per attack.
pub const ATTACK_PF: f64 = 0.8;

/// Upper end of the uniform range for the cap-scaling attack.
pub const ATTACK_LIMIT_FRAC_MAX: f64 = 0.8;

/// Voltage span the random replacement curve's anchors are drawn from.
pub const ATTACK_CURVE_V_RANGE: (f64, f64) = (0.90, 1.10);

/// Reactive-fraction magnitude bound for the random replacement curve.
pub const ATTACK_CURVE_Q_MAX: f64 = 0.6;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("target index {index} out of range for fleet of {fleet}")]
    TargetOutOfRange { index: usize, fleet: usize },
    #[error("duplicate target index {0}")]
    DuplicateTarget(usize),
    #[error("targets and tamperings differ in length: {targets} vs {tamperings}")]
    LengthMismatch { targets: usize, tamperings: usize },
    #[error("tampering {tampering:?} does not fit unit {index} in mode {mode:?}")]
    ModeMismatch {
        index: usize,
        mode: PvMode,
        tampering: Tampering,
    },
    #[error("attack spec must target at least one unit")]
    EmptyTargets,
}

/// The four control-setting scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SettingId {
    /// Every unit tracks available power at unity power factor.
    S1,
    /// Every unit is capped at `MAXP_SETPOINT_FRAC` of nameplate.
    S2,
    /// Every unit runs the default volt-var characteristic.
    S3,
    /// Mixed fleet: volt-var, unity pf, capped, volt-var in bus order.
    S4,
}

pub const ALL_SETTINGS: [SettingId; 4] = [SettingId::S1, SettingId::S2, SettingId::S3, SettingId::S4];

impl SettingId {
    /// Legitimate fleet for this setting, one unit per placement, in the
    /// placements' order.
    pub fn pv_units(&self, placements: &[PvPlacement]) -> Vec<PvUnit> {
        placements
            .iter()
            .enumerate()
            .map(|(i, pl)| {
                let mode = match self {
                    SettingId::S1 => PvMode::ConstantPf { pf: 1.0 },
                    SettingId::S2 => PvMode::MaxP {
                        p_limit_kw: MAXP_SETPOINT_FRAC * pl.p_rated_kw,
                    },
                    SettingId::S3 => PvMode::VoltVar {
                        curve: VoltVarCurve::default(),
                    },
                    SettingId::S4 => match i % 4 {
                        0 | 3 => PvMode::VoltVar {
                            curve: VoltVarCurve::default(),
                        },
                        1 => PvMode::ConstantPf { pf: 1.0 },
                        _ => PvMode::MaxP {
                            p_limit_kw: MAXP_SETPOINT_FRAC * pl.p_rated_kw,
                        },
                    },
                };
                PvUnit::new(pl.clone(), mode)
            })
            .collect()
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SettingId::S1 => "s1",
            SettingId::S2 => "s2",
            SettingId::S3 => "s3",
            SettingId::S4 => "s4",
        };
        f.write_str(s)
    }
}

impl FromStr for SettingId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(SettingId::S1),
            "s2" | "2" => Ok(SettingId::S2),
            "s3" | "3" => Ok(SettingId::S3),
            "s4" | "4" => Ok(SettingId::S4),
            other => Err(format!("unknown setting {other:?}; expected s1..s4")),
        }
    }
}

/// One unit's rewritten control parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tampering {
    /// Replace the power-factor setpoint.
    ForcePf { pf: f64 },
    /// Multiply the active-power cap by `frac`.
    ScaleLimit { frac: f64 },
    /// Replace the volt-var characteristic.
    ReplaceCurve { curve: VoltVarCurve },
}

/// A sampled attack: which fleet indices are compromised and what each one
/// is rewritten to. Targets are 0-based indices into the fleet vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub setting: SettingId,
    pub targets: Vec<usize>,
    pub tamperings: Vec<Tampering>,
}

/// Sizes of the compromised subset the sampler picks between, uniformly.
pub const ATTACK_CARDINALITIES: [usize; 3] = [1, 2, 4];

fn sample_tampering(mode: &PvMode, rng: &mut impl Rng) -> Tampering {
    match mode {
        PvMode::ConstantPf { .. } => Tampering::ForcePf {
            pf: if rng.random_bool(0.5) { ATTACK_PF } else { -ATTACK_PF },
        },
        PvMode::MaxP { .. } => Tampering::ScaleLimit {
            frac: rng.random_range(0.0..ATTACK_LIMIT_FRAC_MAX),
        },
        PvMode::VoltVar { .. } => {
            let curve = if rng.random_bool(0.5) {
                VoltVarCurve::default().inverted()
            } else {
                random_curve(rng)
            };
            Tampering::ReplaceCurve { curve }
        }
    }
}

/// Random replacement characteristic: anchor voltages drawn uniformly over
/// `ATTACK_CURVE_V_RANGE` and sorted, reactive fractions uniform in
/// [-ATTACK_CURVE_Q_MAX, ATTACK_CURVE_Q_MAX].
pub fn random_curve(rng: &mut impl Rng) -> VoltVarCurve {
    let (lo, hi) = ATTACK_CURVE_V_RANGE;
    loop {
        let mut vs = [0.0; 4];
        for v in &mut vs {
            *v = rng.random_range(lo..hi);
        }
        vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let anchors = [
            (vs[0], rng.random_range(-ATTACK_CURVE_Q_MAX..=ATTACK_CURVE_Q_MAX)),
            (vs[1], rng.random_range(-ATTACK_CURVE_Q_MAX..=ATTACK_CURVE_Q_MAX)),
            (vs[2], rng.random_range(-ATTACK_CURVE_Q_MAX..=ATTACK_CURVE_Q_MAX)),
            (vs[3], rng.random_range(-ATTACK_CURVE_Q_MAX..=ATTACK_CURVE_Q_MAX)),
        ];
        // Ties among sorted draws are measure-zero; re-draw if one occurs.
        if let Ok(curve) = VoltVarCurve::new(anchors) {
            return curve;
        }
    }
}

/// Draw an attack against `fleet`: pick a cardinality uniformly from
/// `ATTACK_CARDINALITIES` (capped at the fleet size), then a uniform subset
/// of that size, then per-target tampering that fits the unit's mode.
pub fn sample_attack(setting: SettingId, fleet: &[PvUnit], rng: &mut impl Rng) -> AttackSpec {
    assert!(!fleet.is_empty(), "cannot attack an empty fleet");
    let k = ATTACK_CARDINALITIES[rng.random_range(0..ATTACK_CARDINALITIES.len())].min(fleet.len());
    // Partial Fisher-Yates: uniform k-subset of 0..n.
    let mut idx: Vec<usize> = (0..fleet.len()).collect();
    for i in 0..k {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut targets: Vec<usize> = idx[..k].to_vec();
    targets.sort_unstable();
    let tamperings = targets
        .iter()
        .map(|&i| sample_tampering(&fleet[i].mode, rng))
        .collect();
    AttackSpec {
        setting,
        targets,
        tamperings,
    }
}

/// Rewrite the targeted units' modes; untargeted units pass through
/// unchanged. Fails on malformed specs or tampering that does not fit the
/// unit's mode.
pub fn apply_attack(fleet: &[PvUnit], spec: &AttackSpec) -> Result<Vec<PvUnit>, AttackError> {
    if spec.targets.is_empty() {
        return Err(AttackError::EmptyTargets);
    }
    if spec.targets.len() != spec.tamperings.len() {
        return Err(AttackError::LengthMismatch {
            targets: spec.targets.len(),
            tamperings: spec.tamperings.len(),
        });
    }
    let mut seen = vec![false; fleet.len()];
    let mut out = fleet.to_vec();
    for (&i, t) in spec.targets.iter().zip(&spec.tamperings) {
        if i >= fleet.len() {
            return Err(AttackError::TargetOutOfRange {
                index: i,
                fleet: fleet.len(),
            });
        }
        if seen[i] {
            return Err(AttackError::DuplicateTarget(i));
        }
        seen[i] = true;
        let mode = &fleet[i].mode;
        out[i].mode = match (mode, t) {
            (PvMode::ConstantPf { .. }, Tampering::ForcePf { pf }) => PvMode::ConstantPf { pf: *pf },
            (PvMode::MaxP { p_limit_kw }, Tampering::ScaleLimit { frac }) => PvMode::MaxP {
                p_limit_kw: p_limit_kw * frac,
            },
            (PvMode::VoltVar { .. }, Tampering::ReplaceCurve { curve }) => PvMode::VoltVar {
                curve: curve.clone(),
            },
            _ => {
                return Err(AttackError::ModeMismatch {
                    index: i,
                    mode: mode.clone(),
                    tampering: t.clone(),
                })
            }
        };
    }
    Ok(out)
}

/// The attacker's concealment step: the readings reported for the PV plants
/// are the outputs the legitimate fleet would have produced, i.e. the
/// counterfactual solve's outputs, regardless of which units are
/// compromised. Kept as an explicit function so the substitution site is
/// visible in the measurement pipeline.
pub fn spoofed_pv_readings(counterfactual_outputs: &[PvOutput]) -> Vec<PvOutput> {
    counterfactual_outputs.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::NetworkModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn placements() -> Vec<PvPlacement> {
        NetworkModel::default_case().1
    }

    #[test]
    fn setting_fleets_have_expected_modes() {
        let pl = placements();
        let s1 = SettingId::S1.pv_units(&pl);
        assert!(s1.iter().all(|u| u.mode == PvMode::ConstantPf { pf: 1.0 }));
        let s2 = SettingId::S2.pv_units(&pl);
        for (u, p) in s2.iter().zip(&pl) {
            assert_eq!(u.mode, PvMode::MaxP { p_limit_kw: 0.8 * p.p_rated_kw });
        }
        let s3 = SettingId::S3.pv_units(&pl);
        assert!(s3
            .iter()
            .all(|u| u.mode == PvMode::VoltVar { curve: VoltVarCurve::default() }));
        let s4 = SettingId::S4.pv_units(&pl);
        assert!(matches!(s4[0].mode, PvMode::VoltVar { .. }));
        assert_eq!(s4[1].mode, PvMode::ConstantPf { pf: 1.0 });
        assert!(matches!(s4[2].mode, PvMode::MaxP { .. }));
        assert!(matches!(s4[3].mode, PvMode::VoltVar { .. }));
        for units in [&s1, &s2, &s3, &s4] {
            assert_eq!(units.len(), 4);
            for u in units.iter() {
                u.validate().unwrap();
                assert_eq!(u.s_rated_kva, u.p_rated_kw);
            }
        }
    }

    #[test]
    fn setting_id_round_trips_through_strings() {
        for s in ALL_SETTINGS {
            assert_eq!(s.to_string().parse::<SettingId>().unwrap(), s);
        }
        assert!("s5".parse::<SettingId>().is_err());
    }

    #[test]
    fn sampled_cardinalities_and_targets_are_uniform() {
        let fleet = SettingId::S1.pv_units(&placements());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 30_000;
        let mut card = [0usize; 5];
        let mut hit = [0usize; 4];
        for _ in 0..n {
            let spec = sample_attack(SettingId::S1, &fleet, &mut rng);
            card[spec.targets.len()] += 1;
            for &t in &spec.targets {
                hit[t] += 1;
            }
        }
        for k in [1, 2, 4] {
            let f = card[k] as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "cardinality {k} freq {f}");
        }
        assert_eq!(card[0] + card[3], 0);
        // P(unit targeted) = (1/3)(1/4 + 1/2 + 1) = 7/12.
        for (i, &h) in hit.iter().enumerate() {
            let f = h as f64 / n as f64;
            assert!((f - 7.0 / 12.0).abs() < 0.02, "unit {i} freq {f}");
        }
    }

    #[test]
    fn tampering_fits_the_mixed_fleet() {
        let fleet = SettingId::S4.pv_units(&placements());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut saw_pos_pf = false;
        let mut saw_neg_pf = false;
        let mut saw_inverted = false;
        let mut saw_random = false;
        for _ in 0..2000 {
            let spec = sample_attack(SettingId::S4, &fleet, &mut rng);
            let attacked = apply_attack(&fleet, &spec).unwrap();
            for u in &attacked {
                u.validate().unwrap();
            }
            for (&i, t) in spec.targets.iter().zip(&spec.tamperings) {
                match (&fleet[i].mode, t) {
                    (PvMode::ConstantPf { .. }, Tampering::ForcePf { pf }) => {
                        assert_eq!(pf.abs(), ATTACK_PF);
                        saw_pos_pf |= *pf > 0.0;
                        saw_neg_pf |= *pf < 0.0;
                    }
                    (PvMode::MaxP { p_limit_kw }, Tampering::ScaleLimit { frac }) => {
                        assert!((0.0..ATTACK_LIMIT_FRAC_MAX).contains(frac));
                        let got = match attacked[i].mode {
                            PvMode::MaxP { p_limit_kw } => p_limit_kw,
                            _ => unreachable!(),
                        };
                        assert!((got - p_limit_kw * frac).abs() < 1e-12);
                    }
                    (PvMode::VoltVar { .. }, Tampering::ReplaceCurve { curve }) => {
                        curve.validate().unwrap();
                        if *curve == VoltVarCurve::default().inverted() {
                            saw_inverted = true;
                        } else {
                            saw_random = true;
                        }
                    }
                    other => panic!("mismatched tampering {other:?}"),
                }
            }
            // Untargeted units unchanged.
            for i in 0..fleet.len() {
                if !spec.targets.contains(&i) {
                    assert_eq!(attacked[i], fleet[i]);
                }
            }
        }
        assert!(saw_pos_pf && saw_neg_pf && saw_inverted && saw_random);
    }

    #[test]
    fn malformed_specs_rejected() {
        let fleet = SettingId::S1.pv_units(&placements());
        let tamper = Tampering::ForcePf { pf: 0.8 };
        let bad_index = AttackSpec {
            setting: SettingId::S1,
            targets: vec![4],
            tamperings: vec![tamper.clone()],
        };
        assert!(matches!(
            apply_attack(&fleet, &bad_index),
            Err(AttackError::TargetOutOfRange { .. })
        ));
        let dup = AttackSpec {
            setting: SettingId::S1,
            targets: vec![1, 1],
            tamperings: vec![tamper.clone(), tamper.clone()],
        };
        assert!(matches!(apply_attack(&fleet, &dup), Err(AttackError::DuplicateTarget(1))));
        let empty = AttackSpec {
            setting: SettingId::S1,
            targets: vec![],
            tamperings: vec![],
        };
        assert!(matches!(apply_attack(&fleet, &empty), Err(AttackError::EmptyTargets)));
        let mismatch = AttackSpec {
            setting: SettingId::S1,
            targets: vec![0],
            tamperings: vec![Tampering::ScaleLimit { frac: 0.5 }],
        };
        assert!(matches!(
            apply_attack(&fleet, &mismatch),
            Err(AttackError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let fleet = SettingId::S3.pv_units(&placements());
        let a = sample_attack(SettingId::S3, &fleet, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_attack(SettingId::S3, &fleet, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        let c = sample_attack(SettingId::S3, &fleet, &mut ChaCha8Rng::seed_from_u64(43));
        assert_ne!(a, c);
    }

    #[test]
    fn spoofed_readings_reproduce_counterfactual() {
        let cf = vec![
            PvOutput { p_kw: 100.0, q_kvar: 5.0 },
            PvOutput { p_kw: 50.0, q_kvar: -2.0 },
        ];
        assert_eq!(spoofed_pv_readings(&cf), cf);
    }
}
