//! Brute-force ground truth on small instances plus a seeded synthetic
//! profile generator, used to validate detector soundness and measure the
//! completeness gap.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detect::{
    compromise_classes, downward_classes, loser_subsets, run_all_detectors,
    upward_classes, CondorcetOutcome, FlawCertificate, FlawKind, Modification, Search,
    SearchBudget,
};
use crate::model::{Candidate, CandidateId, PreferenceProfile, Ranking};
use crate::tabulate::{EliminationPolicy, TabulationError};

pub const ORACLE_MAX_CANDIDATES: usize = 4;
pub const ORACLE_MAX_BALLOT_TYPES: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle requires ≤{max} candidates, profile has {actual}")]
    TooManyCandidates { max: usize, actual: usize },
    #[error("oracle requires ≤{max} ballot types, profile has {actual}")]
    TooManyBallotTypes { max: usize, actual: usize },
    #[error(transparent)]
    Tabulation(#[from] TabulationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Number of candidates, between 2 and 5.
    pub candidate_count: usize,
    /// Upper bound on distinct ballot types in the generated profile.
    pub max_ballot_types: usize,
    /// Counts are drawn uniformly from [1, max_count_per_type].
    pub max_count_per_type: u64,
    /// When false, every ranking has length n or n−1 (complete under the
    /// weak-order model); when true, any length ≥ 1.
    pub allow_partial: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            candidate_count: 3,
            max_ballot_types: 8,
            max_count_per_type: 20,
            allow_partial: true,
            seed: 0,
        }
    }
}

fn candidate_names(n: usize) -> Vec<CandidateId> {
    ["A", "B", "C", "D", "E"][..n]
        .iter()
        .map(|s| CandidateId::new(*s))
        .collect()
}

fn arrangements(ids: &[CandidateId], len: usize) -> Vec<Ranking> {
    fn go(
        ids: &[CandidateId],
        len: usize,
        prefix: &mut Vec<CandidateId>,
        out: &mut Vec<Ranking>,
    ) {
        if prefix.len() == len {
            out.push(Ranking::new(prefix.clone()).expect("no duplicates by construction"));
            return;
        }
        for id in ids {
            if !prefix.contains(id) {
                prefix.push(id.clone());
                go(ids, len, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(ids, len, &mut Vec::new(), &mut out);
    out
}

/// Deterministic seeded profile generation: ballot types drawn uniformly
/// without replacement from all (partial) permutations, counts uniform.
pub fn generate_profile(config: &GeneratorConfig) -> PreferenceProfile {
    let n = config.candidate_count.clamp(2, 5);
    let ids = candidate_names(n);
    let lengths: Vec<usize> = if config.allow_partial {
        (1..=n).collect()
    } else {
        vec![n - 1, n]
    };
    let mut pool: Vec<Ranking> = lengths
        .into_iter()
        .flat_map(|l| arrangements(&ids, l))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = rng.gen_range(1..=config.max_ballot_types.max(1).min(pool.len()));
    pool.shuffle(&mut rng);
    let ballots: BTreeMap<Ranking, u64> = pool
        .into_iter()
        .take(k)
        .map(|r| (r, rng.gen_range(1..=config.max_count_per_type.max(1))))
        .collect();

    PreferenceProfile::new(
        ids.iter().map(|id| Candidate::new(id.as_str())).collect(),
        ballots,
        None,
    )
    .expect("generated profiles are valid")
}

fn check_bounds(profile: &PreferenceProfile) -> Result<(), OracleError> {
    if profile.candidate_count() > ORACLE_MAX_CANDIDATES {
        return Err(OracleError::TooManyCandidates {
            max: ORACLE_MAX_CANDIDATES,
            actual: profile.candidate_count(),
        });
    }
    if profile.ballot_type_count() > ORACLE_MAX_BALLOT_TYPES {
        return Err(OracleError::TooManyBallotTypes {
            max: ORACLE_MAX_BALLOT_TYPES,
            actual: profile.ballot_type_count(),
        });
    }
    Ok(())
}

/// Exhaustive ground-truth detection of one flaw on a small profile. The
/// modification space is a strict superset of every detector's search space,
/// so a detector positive implies an oracle positive.
pub fn oracle_detect(
    profile: &PreferenceProfile,
    flaw_kind: FlawKind,
    policy: &EliminationPolicy,
) -> Result<Option<FlawCertificate>, OracleError> {
    check_bounds(profile)?;
    let search = Search::new(profile, policy, SearchBudget::default())?;
    let w = search.winner().clone();
    match flaw_kind {
        FlawKind::Condorcet => {
            let results = run_all_detectors(profile, policy, &SearchBudget::default(), false)?;
            Ok(match results.condorcet {
                CondorcetOutcome::Fail(cert) => Some(cert),
                _ => None,
            })
        }
        FlawKind::Majoritarian => {
            let results = run_all_detectors(profile, policy, &SearchBudget::default(), false)?;
            Ok(results.majoritarian)
        }
        FlawKind::Spoiler => {
            let mut losers: Vec<CandidateId> = profile
                .candidate_ids()
                .into_iter()
                .filter(|c| *c != w)
                .collect();
            losers.sort();
            for removed in loser_subsets(&losers, losers.len()) {
                let modification = Modification::CandidateRemoval { removed };
                if let Some(cert) =
                    search.try_certify_changed(FlawKind::Spoiler, modification, None)
                {
                    return Ok(Some(cert));
                }
            }
            Ok(None)
        }
        FlawKind::UpwardMono => {
            // Multi-type prefix shifts over the detector's own classes…
            for class in upward_classes(&search) {
                for s in 1..=class.total() {
                    let Some(shifts) = class.prefix_shifts(s, |r| r.with_first(&w)) else {
                        continue;
                    };
                    let modification = Modification::BallotShifts { shifts };
                    if let Some(cert) =
                        search.try_certify_changed(FlawKind::UpwardMono, modification, None)
                    {
                        return Ok(Some(cert));
                    }
                }
            }
            // …plus every single-type shift of the winner to first.
            for (ranking, count) in profile.ballot_types() {
                if ranking.first() == Some(&w) {
                    continue;
                }
                for s in 1..=count {
                    let modification = Modification::BallotShifts {
                        shifts: vec![crate::detect::ShiftSpec {
                            source: ranking.clone(),
                            target: ranking.with_first(&w),
                            count: s,
                        }],
                    };
                    if let Some(cert) =
                        search.try_certify_changed(FlawKind::UpwardMono, modification, None)
                    {
                        return Ok(Some(cert));
                    }
                }
            }
            Ok(None)
        }
        FlawKind::DownwardMono => {
            for class in downward_classes(&search) {
                for s in 1..=class.total() {
                    let Some(shifts) = class.prefix_shifts(s, |r| r.with_swapped(0)) else {
                        continue;
                    };
                    let modification = Modification::BallotShifts { shifts };
                    if let Some(cert) = search.try_certify_changed(
                        FlawKind::DownwardMono,
                        modification,
                        Some(&class.moved),
                    ) {
                        return Ok(Some(cert));
                    }
                }
            }
            let mut losers: Vec<CandidateId> = profile
                .candidate_ids()
                .into_iter()
                .filter(|c| *c != w)
                .collect();
            losers.sort();
            for l in &losers {
                for (ranking, count) in profile.ballot_types() {
                    if ranking.len() < 2 || ranking.first() != Some(l) {
                        continue;
                    }
                    for s in 1..=count {
                        let modification = Modification::BallotShifts {
                            shifts: vec![crate::detect::ShiftSpec {
                                source: ranking.clone(),
                                target: ranking.with_swapped(0),
                                count: s,
                            }],
                        };
                        if let Some(cert) = search.try_certify_changed(
                            FlawKind::DownwardMono,
                            modification,
                            Some(l),
                        ) {
                            return Ok(Some(cert));
                        }
                    }
                }
            }
            Ok(None)
        }
        FlawKind::NoShow => {
            for (ranking, count) in profile.ballot_types() {
                for s in 1..=count {
                    let modification = Modification::BallotRemoval {
                        ranking: ranking.clone(),
                        count: s,
                    };
                    if let Some(cert) =
                        search.try_certify_changed(FlawKind::NoShow, modification, None)
                    {
                        return Ok(Some(cert));
                    }
                }
            }
            Ok(None)
        }
        FlawKind::Truncation => {
            for (ranking, count) in profile.ballot_types() {
                if ranking.len() < 2 {
                    continue;
                }
                for keep in 1..ranking.len() {
                    for s in 1..=count {
                        let modification = Modification::BallotTruncation {
                            ranking: ranking.clone(),
                            count: s,
                            keep,
                        };
                        if let Some(cert) =
                            search.try_certify_changed(FlawKind::Truncation, modification, None)
                        {
                            return Ok(Some(cert));
                        }
                    }
                }
            }
            Ok(None)
        }
        FlawKind::Compromise => {
            for class in compromise_classes(&search) {
                for s in 1..=class.total() {
                    let Some(shifts) = class.prefix_shifts(s, |r| r.with_first(&class.moved))
                    else {
                        continue;
                    };
                    let modification = Modification::BallotShifts { shifts };
                    if let Some(cert) = search.try_certify_changed(
                        FlawKind::Compromise,
                        modification,
                        Some(&class.moved),
                    ) {
                        return Ok(Some(cert));
                    }
                }
            }
            Ok(None)
        }
    }
}

/// Per-flaw disagreement counts between the exhaustive oracle and the
/// heuristic detectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GapCounts {
    /// Oracle found a flaw the detector missed (measured completeness gap).
    pub oracle_positive_detector_negative: u64,
    /// Detector claimed a flaw the oracle refutes (must always be zero).
    pub detector_positive_oracle_negative: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CrossValidationReport {
    pub trials: u64,
    pub per_flaw: BTreeMap<FlawKind, GapCounts>,
}

impl CrossValidationReport {
    pub fn unsound_detections(&self) -> u64 {
        self.per_flaw
            .values()
            .map(|g| g.detector_positive_oracle_negative)
            .sum()
    }

    pub fn completeness_gap(&self, kind: FlawKind) -> u64 {
        self.per_flaw
            .get(&kind)
            .map(|g| g.oracle_positive_detector_negative)
            .unwrap_or(0)
    }

    fn merge(mut self, other: CrossValidationReport) -> CrossValidationReport {
        self.trials += other.trials;
        for (kind, gap) in other.per_flaw {
            let entry = self.per_flaw.entry(kind).or_default();
            entry.oracle_positive_detector_negative += gap.oracle_positive_detector_negative;
            entry.detector_positive_oracle_negative += gap.detector_positive_oracle_negative;
        }
        self
    }
}

fn validate_one(
    config: &GeneratorConfig,
    trial: u64,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> CrossValidationReport {
    let profile = generate_profile(&GeneratorConfig {
        seed: config.seed.wrapping_add(trial),
        ..*config
    });
    let detectors = run_all_detectors(&profile, policy, budget, false)
        .expect("generated profiles tabulate");
    let mut per_flaw = BTreeMap::new();
    for kind in FlawKind::ALL {
        let detector_positive = match kind {
            FlawKind::Condorcet => matches!(detectors.condorcet, CondorcetOutcome::Fail(_)),
            FlawKind::Spoiler => detectors.spoiler.is_some(),
            FlawKind::UpwardMono => detectors.upward_mono.is_some(),
            FlawKind::DownwardMono => detectors.downward_mono.is_some(),
            FlawKind::NoShow => detectors.no_show.is_some(),
            FlawKind::Truncation => detectors.truncation.is_some(),
            FlawKind::Compromise => detectors.compromise.is_some(),
            FlawKind::Majoritarian => detectors.majoritarian.is_some(),
        };
        let oracle_positive = oracle_detect(&profile, kind, policy)
            .expect("generated profiles are within oracle bounds")
            .is_some();
        let mut gap = GapCounts::default();
        if oracle_positive && !detector_positive {
            gap.oracle_positive_detector_negative = 1;
        }
        if detector_positive && !oracle_positive {
            gap.detector_positive_oracle_negative = 1;
        }
        per_flaw.insert(kind, gap);
    }
    CrossValidationReport { trials: 1, per_flaw }
}

/// Sequential cross-validation of detectors against the oracle over seeded
/// random profiles (trial i uses seed `config.seed + i`).
pub fn cross_validate_seq(
    config: &GeneratorConfig,
    trials: u64,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> CrossValidationReport {
    (0..trials)
        .map(|t| validate_one(config, t, policy, budget))
        .fold(CrossValidationReport::default(), CrossValidationReport::merge)
}

/// Cross-validation over independent trials; parallel when the `parallel`
/// feature is enabled, with a deterministic merged result either way.
#[cfg(feature = "parallel")]
pub fn cross_validate(
    config: &GeneratorConfig,
    trials: u64,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> CrossValidationReport {
    use rayon::prelude::*;
    (0..trials)
        .into_par_iter()
        .map(|t| validate_one(config, t, policy, budget))
        .reduce(CrossValidationReport::default, CrossValidationReport::merge)
}

#[cfg(not(feature = "parallel"))]
pub fn cross_validate(
    config: &GeneratorConfig,
    trials: u64,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> CrossValidationReport {
    cross_validate_seq(config, trials, policy, budget)
}
