//! Deterministic instant-runoff tabulation with a full per-round trace,
//! head-to-head analysis under the weak-order model, and the derived
//! Condorcet / vote-share / truncation computations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateId, ModelError, PreferenceProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EliminationMode {
    /// Eliminate exactly one candidate per round; ties resolved by the
    /// tie-break ordering.
    SingleLowest,
    /// Eliminate every candidate tied for the lowest tally. Falls back to
    /// retaining the tie-break-last candidate if that would empty the field.
    BatchAllTiedLowest,
}

/// Deterministic candidate ordering used whenever tallies tie. The
/// candidate that comes first in the ordering is eliminated first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TieBreak {
    LexicographicId,
    Explicit(Vec<CandidateId>),
}

impl TieBreak {
    fn rank(&self, id: &CandidateId) -> usize {
        match self {
            TieBreak::LexicographicId => 0,
            TieBreak::Explicit(order) => order.iter().position(|c| c == id).unwrap_or(usize::MAX),
        }
    }

    /// Total order: explicit position first (lexicographic id as the
    /// fallback comparator keeps the order total even for unlisted ids).
    pub fn cmp(&self, a: &CandidateId, b: &CandidateId) -> std::cmp::Ordering {
        self.rank(a).cmp(&self.rank(b)).then_with(|| a.cmp(b))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EliminationPolicy {
    pub mode: EliminationMode,
    pub tie_break: TieBreak,
}

impl Default for EliminationPolicy {
    fn default() -> Self {
        EliminationPolicy {
            mode: EliminationMode::SingleLowest,
            tie_break: TieBreak::LexicographicId,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// First-preference count per continuing candidate.
    pub tallies: BTreeMap<CandidateId, u64>,
    /// Candidates eliminated at the end of this round (empty in the final round).
    pub eliminated: BTreeSet<CandidateId>,
    /// Ballots newly exhausted entering this round.
    pub exhausted_this_round: u64,
    /// True when a tally tie was resolved by the tie-break ordering.
    pub tie_break_applied: bool,
}

impl RoundRecord {
    pub fn continuing(&self) -> BTreeSet<CandidateId> {
        self.tallies.keys().cloned().collect()
    }

    pub fn continuing_votes(&self) -> u64 {
        self.tallies.values().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabulationRecord {
    pub rounds: Vec<RoundRecord>,
    pub winner: CandidateId,
    /// True iff the winner held a strict majority of first-round votes.
    pub majority_candidate: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TabulationError {
    #[error("profile has no candidates")]
    EmptyProfile,
    #[error("need at least {needed} candidates, profile has {actual}")]
    TooFewCandidates { needed: usize, actual: usize },
    #[error("cannot reduce {actual} candidates to {target}")]
    BadReductionTarget { target: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn count_round(
    profile: &PreferenceProfile,
    continuing: &BTreeSet<CandidateId>,
) -> (BTreeMap<CandidateId, u64>, u64) {
    let mut tallies: BTreeMap<CandidateId, u64> =
        continuing.iter().map(|c| (c.clone(), 0)).collect();
    let mut exhausted = 0u64;
    for (ranking, count) in profile.ballot_types() {
        match ranking.top_choice(continuing) {
            Some(top) => *tallies.get_mut(top).expect("top is continuing") += count,
            None => exhausted += count,
        }
    }
    (tallies, exhausted)
}

/// Picks the candidates to eliminate this round. Returns (eliminated,
/// tie_break_applied). `max_eliminations` caps batch size so reductions
/// can stop at an exact candidate count.
fn select_eliminations(
    tallies: &BTreeMap<CandidateId, u64>,
    policy: &EliminationPolicy,
    max_eliminations: usize,
) -> (Vec<CandidateId>, bool) {
    let min = *tallies.values().min().expect("nonempty tallies");
    let mut tied: Vec<CandidateId> = tallies
        .iter()
        .filter(|(_, &t)| t == min)
        .map(|(c, _)| c.clone())
        .collect();
    tied.sort_by(|a, b| policy.tie_break.cmp(a, b));
    match policy.mode {
        EliminationMode::SingleLowest => {
            let tie = tied.len() > 1;
            (vec![tied[0].clone()], tie)
        }
        EliminationMode::BatchAllTiedLowest => {
            let mut keep_at_least = tallies.len().saturating_sub(max_eliminations);
            // Batch elimination must never empty the continuing set.
            if tied.len() == tallies.len() {
                keep_at_least = keep_at_least.max(1);
            }
            let take = tied.len().min(tallies.len() - keep_at_least);
            let fallback = take < tied.len();
            (tied[..take].to_vec(), fallback || tied.len() > 1)
        }
    }
}

enum StopRule {
    /// Stop at a strict majority of continuing votes (or a lone survivor).
    MajorityOrLast,
    /// Run eliminations, ignoring majorities, until this many candidates remain.
    CandidateCount(usize),
}

fn run_rounds(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    stop: StopRule,
) -> Result<(Vec<RoundRecord>, BTreeSet<CandidateId>, Option<CandidateId>), TabulationError> {
    let mut continuing = profile.candidate_ids();
    if continuing.is_empty() {
        return Err(TabulationError::EmptyProfile);
    }
    let mut rounds = Vec::new();
    let mut prev_exhausted = 0u64;
    loop {
        let (tallies, exhausted) = count_round(profile, &continuing);
        let exhausted_this_round = exhausted - prev_exhausted;
        let active: u64 = tallies.values().sum();

        match stop {
            StopRule::MajorityOrLast => {
                let majority_holder = tallies
                    .iter()
                    .find(|(_, &t)| 2 * t > active)
                    .map(|(c, _)| c.clone());
                let winner = majority_holder.or_else(|| {
                    (continuing.len() == 1).then(|| continuing.first().cloned().unwrap())
                });
                if let Some(w) = winner {
                    rounds.push(RoundRecord {
                        tallies,
                        eliminated: BTreeSet::new(),
                        exhausted_this_round,
                        tie_break_applied: false,
                    });
                    return Ok((rounds, continuing, Some(w)));
                }
            }
            StopRule::CandidateCount(n) => {
                if continuing.len() <= n {
                    rounds.push(RoundRecord {
                        tallies,
                        eliminated: BTreeSet::new(),
                        exhausted_this_round,
                        tie_break_applied: false,
                    });
                    return Ok((rounds, continuing, None));
                }
            }
        }

        let cap = match stop {
            StopRule::MajorityOrLast => continuing.len() - 1,
            StopRule::CandidateCount(n) => continuing.len() - n,
        };
        let (eliminated, tie) = select_eliminations(&tallies, policy, cap);
        for e in &eliminated {
            continuing.remove(e);
        }
        rounds.push(RoundRecord {
            tallies,
            eliminated: eliminated.into_iter().collect(),
            exhausted_this_round,
            tie_break_applied: tie,
        });
        prev_exhausted = exhausted;
    }
}

/// Instant-runoff tabulation: a first-round strict majority wins outright;
/// otherwise eliminate-and-transfer until some candidate holds a strict
/// majority of the non-exhausted votes (or only one remains).
pub fn tabulate(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
) -> Result<TabulationRecord, TabulationError> {
    let (rounds, _, winner) = run_rounds(profile, policy, StopRule::MajorityOrLast)?;
    let winner = winner.expect("majority stop always yields a winner");
    let first = &rounds[0];
    let majority_candidate =
        2 * first.tallies.get(&winner).copied().unwrap_or(0) > profile.ballots_cast();
    Ok(TabulationRecord {
        rounds,
        winner,
        majority_candidate,
    })
}

/// Runs eliminations (ignoring majorities) until exactly `n` candidates
/// continue and returns the profile restricted to them.
pub fn reduce_to_n(
    profile: &PreferenceProfile,
    n: usize,
    policy: &EliminationPolicy,
) -> Result<PreferenceProfile, TabulationError> {
    if n == 0 || n > profile.candidate_count() {
        return Err(TabulationError::BadReductionTarget {
            target: n,
            actual: profile.candidate_count(),
        });
    }
    let (_, continuing, _) = run_rounds(profile, policy, StopRule::CandidateCount(n))?;
    let removed: BTreeSet<CandidateId> = profile
        .candidate_ids()
        .difference(&continuing)
        .cloned()
        .collect();
    if removed.is_empty() {
        return Ok(profile.clone());
    }
    Ok(profile.restrict(&removed)?)
}

/// Exact rational vote share in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteShare {
    pub numerator: u64,
    pub denominator: u64,
}

impl VoteShare {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        VoteShare { numerator, denominator }
    }

    /// Percentage rounded half-up to one decimal place, e.g. "48.4%".
    pub fn display_percent(&self) -> String {
        if self.denominator == 0 {
            return "na".to_string();
        }
        // permille, rounded half-up
        let permille = (2 * 1000 * self.numerator + self.denominator) / (2 * self.denominator);
        format!("{}.{}%", permille / 10, permille % 10)
    }

    pub fn exact(&self) -> String {
        format!("{}/{}", self.numerator, self.denominator)
    }

    /// Strictly-below-or-equal-to-half test, exact integer comparison.
    pub fn at_most_half(&self) -> bool {
        2 * self.numerator <= self.denominator
    }
}

impl fmt::Display for VoteShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.exact(), self.display_percent())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WinnersVoteShare {
    pub winner: CandidateId,
    /// Winner's final-two-round count over total ballots cast.
    pub share: VoteShare,
    /// True when the winner fails a strict majority of all ballots cast.
    pub majoritarian_failure: bool,
}

/// Runs elimination until two candidates remain; the winner's final-round
/// count over `ballots_cast` is the winner's vote share. A share at or
/// below one half is a majoritarian failure.
pub fn winners_vote_share(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
) -> Result<WinnersVoteShare, TabulationError> {
    if profile.candidate_count() < 2 {
        return Err(TabulationError::TooFewCandidates {
            needed: 2,
            actual: profile.candidate_count(),
        });
    }
    let (rounds, _, _) = run_rounds(profile, policy, StopRule::CandidateCount(2))?;
    let last = rounds.last().expect("at least one round");
    // Winner of the final pair: higher tally; an exact tie goes to the
    // tie-break survivor (the later candidate in the ordering).
    let winner = last
        .tallies
        .iter()
        .max_by(|(ca, ta), (cb, tb)| ta.cmp(tb).then_with(|| policy.tie_break.cmp(ca, cb)))
        .map(|(c, _)| c.clone())
        .expect("two continuing candidates");
    let count = last.tallies[&winner];
    let share = VoteShare::new(count, profile.ballots_cast());
    Ok(WinnersVoteShare {
        winner,
        majoritarian_failure: share.at_most_half(),
        share,
    })
}

/// Head-to-head counts under the weak-order model: unranked candidates sit
/// tied at the bottom of a ballot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairwiseMatrix {
    over: BTreeSet<CandidateId>,
    prefers: BTreeMap<(CandidateId, CandidateId), u64>,
}

impl PairwiseMatrix {
    pub fn candidates(&self) -> &BTreeSet<CandidateId> {
        &self.over
    }

    /// Number of ballots ranking `a` strictly above `b`.
    pub fn prefers(&self, a: &CandidateId, b: &CandidateId) -> u64 {
        self.prefers.get(&(a.clone(), b.clone())).copied().unwrap_or(0)
    }

    pub fn beats(&self, a: &CandidateId, b: &CandidateId) -> bool {
        self.prefers(a, b) > self.prefers(b, a)
    }
}

pub fn pairwise(profile: &PreferenceProfile) -> PairwiseMatrix {
    let over = profile.candidate_ids();
    let mut prefers = BTreeMap::new();
    for (ranking, count) in profile.ballot_types() {
        for a in over.iter() {
            for b in over.iter() {
                if a != b && ranking.ranks_above(a, b) {
                    *prefers.entry((a.clone(), b.clone())).or_insert(0) += count;
                }
            }
        }
    }
    PairwiseMatrix { over, prefers }
}

/// The candidate who strictly wins every head-to-head matchup, if any.
/// At most one such candidate can exist.
pub fn condorcet_winner(matrix: &PairwiseMatrix) -> Option<CandidateId> {
    matrix
        .over
        .iter()
        .find(|a| matrix.over.iter().all(|b| *a == b || matrix.beats(a, b)))
        .cloned()
}

/// An election is truncated when the jurisdiction's ranking limit keeps
/// voters from expressing a complete ranking: candidates > level + 1.
pub fn classify_truncated(profile: &PreferenceProfile) -> bool {
    match profile.truncation_level() {
        Some(level) => profile.candidate_count() as u64 > level as u64 + 1,
        None => false,
    }
}
