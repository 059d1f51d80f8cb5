//! Flaw detectors: bounded heuristic searches over profile modifications,
//! each positive result carried as a [`FlawCertificate`] that is re-verified
//! by re-tabulation before it is returned.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateId, ModelError, PreferenceProfile, Ranking};
use crate::tabulate::{
    condorcet_winner, pairwise, reduce_to_n, tabulate, winners_vote_share, EliminationPolicy,
    TabulationError, TabulationRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlawKind {
    Condorcet,
    Spoiler,
    UpwardMono,
    DownwardMono,
    NoShow,
    Truncation,
    Compromise,
    Majoritarian,
}

impl FlawKind {
    pub const ALL: [FlawKind; 8] = [
        FlawKind::Condorcet,
        FlawKind::Spoiler,
        FlawKind::UpwardMono,
        FlawKind::DownwardMono,
        FlawKind::NoShow,
        FlawKind::Truncation,
        FlawKind::Compromise,
        FlawKind::Majoritarian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FlawKind::Condorcet => "condorcet",
            FlawKind::Spoiler => "spoiler",
            FlawKind::UpwardMono => "upward_mono",
            FlawKind::DownwardMono => "downward_mono",
            FlawKind::NoShow => "no_show",
            FlawKind::Truncation => "truncation",
            FlawKind::Compromise => "compromise",
            FlawKind::Majoritarian => "majoritarian",
        }
    }
}

/// Moves `count` ballots from the `source` ranking to the `target` ranking.
/// A legal shift repositions exactly one candidate, preserving the relative
/// order of all others.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub source: Ranking,
    pub target: Ranking,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modification {
    None,
    CandidateRemoval { removed: BTreeSet<CandidateId> },
    BallotShifts { shifts: Vec<ShiftSpec> },
    BallotRemoval { ranking: Ranking, count: u64 },
    BallotTruncation { ranking: Ranking, count: u64, keep: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlawCertificate {
    pub flaw_kind: FlawKind,
    pub modification: Modification,
    pub original_winner: CandidateId,
    pub resulting_winner: CandidateId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CondorcetOutcome {
    /// No Condorcet winner exists; reported separately, not as pass or fail.
    NoCondorcetWinner,
    /// The Condorcet winner is the RCV winner.
    Pass { winner: CandidateId },
    /// A Condorcet winner exists and RCV elected someone else.
    Fail(FlawCertificate),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBudget {
    /// Cap on re-tabulations per (round, target) search class.
    pub max_retabulations_per_target: usize,
    /// Up to this many candidates, spoiler search tries all loser subsets;
    /// above it, only singletons and pairs.
    pub spoiler_exhaustive_candidate_limit: usize,
    /// Field size the spoiler search reduces large elections to before a
    /// second subset pass.
    pub spoiler_reduce_to: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_retabulations_per_target: 64,
            spoiler_exhaustive_candidate_limit: 12,
            spoiler_reduce_to: 10,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("shift count {count} exceeds available {available} ballots of type {from}")]
    ShiftExceedsSource {
        from: String,
        count: u64,
        available: u64,
    },
    #[error("shift from {from} to {target} moves more than one candidate")]
    IllegalShift { from: String, target: String },
    #[error("modification kind does not match flaw kind")]
    KindMismatch,
    #[error("certificate original winner {claimed} but profile elects {actual}")]
    WrongOriginalWinner { claimed: String, actual: String },
    #[error("modified profile elects {actual}, certificate claims {claimed}")]
    WrongResultingWinner { claimed: String, actual: String },
    #[error("flaw predicate violated: {0}")]
    Predicate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tabulation(#[from] TabulationError),
}

/// The candidate whose position differs between `source` and `target`, when
/// the shift is legal (all other candidates keep their relative order).
pub fn shifted_candidate(source: &Ranking, target: &Ranking) -> Option<CandidateId> {
    if source == target {
        return None;
    }
    for c in target.ids() {
        let mut only_c = BTreeSet::new();
        only_c.insert(c.clone());
        if source.without(&only_c) == target.without(&only_c) {
            return Some(c.clone());
        }
    }
    None
}

/// Applies a certificate's modification to a profile, yielding the modified
/// profile. Counts are checked against the available ballot types.
pub fn apply_modification(
    profile: &PreferenceProfile,
    modification: &Modification,
) -> Result<PreferenceProfile, VerifyError> {
    match modification {
        Modification::None => Ok(profile.clone()),
        Modification::CandidateRemoval { removed } => Ok(profile.restrict(removed)?),
        Modification::BallotShifts { shifts } => {
            let mut ballots: BTreeMap<Ranking, u64> =
                profile.ballot_types().map(|(r, c)| (r.clone(), c)).collect();
            for shift in shifts {
                let available = ballots.get(&shift.source).copied().unwrap_or(0);
                if shift.count == 0 || shift.count > available {
                    return Err(VerifyError::ShiftExceedsSource {
                        from: shift.source.to_string(),
                        count: shift.count,
                        available,
                    });
                }
                if available == shift.count {
                    ballots.remove(&shift.source);
                } else {
                    *ballots.get_mut(&shift.source).unwrap() -= shift.count;
                }
                *ballots.entry(shift.target.clone()).or_insert(0) += shift.count;
            }
            Ok(PreferenceProfile::new(
                profile.candidates().cloned().collect(),
                ballots,
                profile.truncation_level(),
            )?)
        }
        Modification::BallotRemoval { ranking, count } => {
            let available = profile.count_of(ranking);
            if *count == 0 || *count > available {
                return Err(VerifyError::ShiftExceedsSource {
                    from: ranking.to_string(),
                    count: *count,
                    available,
                });
            }
            let ballots = profile.ballot_types().filter_map(|(r, c)| {
                let c = if r == ranking { c - count } else { c };
                (c > 0).then(|| (r.clone(), c))
            });
            let ballots: Vec<_> = ballots.collect();
            Ok(PreferenceProfile::new(
                profile.candidates().cloned().collect(),
                ballots,
                profile.truncation_level(),
            )?)
        }
        Modification::BallotTruncation { ranking, count, keep } => {
            let available = profile.count_of(ranking);
            if *count == 0 || *count > available || *keep == 0 || *keep >= ranking.len() {
                return Err(VerifyError::ShiftExceedsSource {
                    from: ranking.to_string(),
                    count: *count,
                    available,
                });
            }
            let mut ballots: BTreeMap<Ranking, u64> =
                profile.ballot_types().map(|(r, c)| (r.clone(), c)).collect();
            if available == *count {
                ballots.remove(ranking);
            } else {
                *ballots.get_mut(ranking).unwrap() -= count;
            }
            *ballots.entry(ranking.truncated(*keep)).or_insert(0) += count;
            Ok(PreferenceProfile::new(
                profile.candidates().cloned().collect(),
                ballots,
                profile.truncation_level(),
            )?)
        }
    }
}

fn check_shifts(
    shifts: &[ShiftSpec],
    expect_moved: &CandidateId,
    expect_to_first: bool,
) -> Result<(), VerifyError> {
    let mut only = BTreeSet::new();
    only.insert(expect_moved.clone());
    for shift in shifts {
        // The expected candidate must itself witness the shift: with it
        // deleted, source and target agree, so everyone else kept order.
        let legal = shift.source != shift.target
            && shift.target.contains(expect_moved)
            && shift.source.without(&only) == shift.target.without(&only);
        if !legal {
            return Err(VerifyError::IllegalShift {
                from: shift.source.to_string(),
                target: shift.target.to_string(),
            });
        }
        if expect_to_first && shift.target.first() != Some(expect_moved) {
            return Err(VerifyError::Predicate(format!(
                "{} is not first on the shifted ballot",
                expect_moved
            )));
        }
        if !expect_to_first {
            let from = shift.source.position(expect_moved);
            let to = shift.target.position(expect_moved);
            if !matches!((from, to), (Some(f), Some(t)) if t > f) {
                return Err(VerifyError::Predicate(format!(
                    "{} was not moved down the ballot",
                    expect_moved
                )));
            }
        }
    }
    Ok(())
}

/// Verifies a certificate against the original profile: the modification is
/// legal, re-tabulation reproduces `resulting_winner`, and the flaw-specific
/// predicate holds. Never trusts the certificate's claims.
pub fn verify_certificate(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    cert: &FlawCertificate,
) -> Result<(), VerifyError> {
    let base = tabulate(profile, policy)?;
    if base.winner != cert.original_winner {
        return Err(VerifyError::WrongOriginalWinner {
            claimed: cert.original_winner.to_string(),
            actual: base.winner.to_string(),
        });
    }

    match cert.flaw_kind {
        FlawKind::Condorcet => {
            if cert.modification != Modification::None {
                return Err(VerifyError::KindMismatch);
            }
            let cw = condorcet_winner(&pairwise(profile));
            if cw.as_ref() != Some(&cert.resulting_winner) {
                return Err(VerifyError::Predicate(
                    "claimed Condorcet winner is not the Condorcet winner".into(),
                ));
            }
            if cert.resulting_winner == cert.original_winner {
                return Err(VerifyError::Predicate(
                    "Condorcet winner equals the RCV winner".into(),
                ));
            }
            return Ok(());
        }
        FlawKind::Majoritarian => {
            if cert.modification != Modification::None {
                return Err(VerifyError::KindMismatch);
            }
            let share = winners_vote_share(profile, policy)?;
            if !share.majoritarian_failure {
                return Err(VerifyError::Predicate(
                    "winner holds a strict majority of ballots cast".into(),
                ));
            }
            return Ok(());
        }
        _ => {}
    }

    // Structural checks per flaw kind.
    match (&cert.flaw_kind, &cert.modification) {
        (FlawKind::Spoiler, Modification::CandidateRemoval { removed }) => {
            if removed.contains(&cert.original_winner) {
                return Err(VerifyError::Predicate(
                    "spoiler removal may only remove losers".into(),
                ));
            }
        }
        (FlawKind::UpwardMono, Modification::BallotShifts { shifts }) => {
            check_shifts(shifts, &cert.original_winner, true)?;
        }
        (FlawKind::DownwardMono, Modification::BallotShifts { shifts }) => {
            check_shifts(shifts, &cert.resulting_winner, false)?;
        }
        (FlawKind::Compromise, Modification::BallotShifts { shifts }) => {
            check_shifts(shifts, &cert.resulting_winner, true)?;
            for shift in shifts {
                if shift.source.first() == Some(&cert.resulting_winner) {
                    return Err(VerifyError::Predicate(
                        "compromise shift source already ranks the compromise first".into(),
                    ));
                }
                if !shift
                    .source
                    .ranks_above(&cert.resulting_winner, &cert.original_winner)
                {
                    return Err(VerifyError::Predicate(
                        "compromise shift source does not rank the compromise above the winner"
                            .into(),
                    ));
                }
            }
        }
        (FlawKind::NoShow, Modification::BallotRemoval { ranking, .. }) => {
            if !ranking.ranks_above(&cert.resulting_winner, &cert.original_winner) {
                return Err(VerifyError::Predicate(
                    "removed voters do not prefer the new winner".into(),
                ));
            }
        }
        (FlawKind::Truncation, Modification::BallotTruncation { ranking, .. }) => {
            if !ranking.ranks_above(&cert.resulting_winner, &cert.original_winner) {
                return Err(VerifyError::Predicate(
                    "truncating voters do not prefer the new winner".into(),
                ));
            }
        }
        _ => return Err(VerifyError::KindMismatch),
    }

    let modified = apply_modification(profile, &cert.modification)?;
    let rec = tabulate(&modified, policy)?;
    if rec.winner != cert.resulting_winner {
        return Err(VerifyError::WrongResultingWinner {
            claimed: cert.resulting_winner.to_string(),
            actual: rec.winner.to_string(),
        });
    }
    if cert.resulting_winner == cert.original_winner {
        return Err(VerifyError::Predicate("winner did not change".into()));
    }
    Ok(())
}

/// At most `n` values covering `[lo, hi]`, always including both endpoints,
/// evenly spaced, sorted ascending. Empty when `lo > hi`.
pub(crate) fn sample_points(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    if lo > hi {
        return Vec::new();
    }
    let n = n.max(2) as u64;
    let span = hi - lo;
    if span < n {
        return (lo..=hi).collect();
    }
    let mut out: Vec<u64> = (0..n).map(|i| lo + span * i / (n - 1)).collect();
    out.dedup();
    out
}

/// Search state shared by the detectors: the base tabulation plus knobs.
pub(crate) struct Search<'a> {
    pub profile: &'a PreferenceProfile,
    pub policy: &'a EliminationPolicy,
    pub budget: SearchBudget,
    pub base: TabulationRecord,
}

impl<'a> Search<'a> {
    pub fn new(
        profile: &'a PreferenceProfile,
        policy: &'a EliminationPolicy,
        budget: SearchBudget,
    ) -> Result<Self, TabulationError> {
        let base = tabulate(profile, policy)?;
        Ok(Search {
            profile,
            policy,
            budget,
            base,
        })
    }

    pub fn winner(&self) -> &CandidateId {
        &self.base.winner
    }

    fn winner_after(&self, modification: &Modification) -> Option<CandidateId> {
        let modified = apply_modification(self.profile, modification).ok()?;
        tabulate(&modified, self.policy).ok().map(|r| r.winner)
    }

    fn certify(
        &self,
        flaw_kind: FlawKind,
        modification: Modification,
        resulting_winner: CandidateId,
    ) -> Option<FlawCertificate> {
        let cert = FlawCertificate {
            flaw_kind,
            modification,
            original_winner: self.base.winner.clone(),
            resulting_winner,
        };
        verify_certificate(self.profile, self.policy, &cert)
            .is_ok()
            .then_some(cert)
    }

    /// Re-tabulates under the modification and certifies when the winner
    /// changes (to `required` if given) and the certificate verifies.
    pub(crate) fn try_certify_changed(
        &self,
        flaw_kind: FlawKind,
        modification: Modification,
        required: Option<&CandidateId>,
    ) -> Option<FlawCertificate> {
        let new_winner = self.winner_after(&modification)?;
        if new_winner == self.base.winner {
            return None;
        }
        if let Some(required) = required {
            if new_winner != *required {
                return None;
            }
        }
        self.certify(flaw_kind, modification, new_winner)
    }
}

/// A shift search class: the ordered eligible ballot types and the feasible
/// shift-count floor derived from a tally gap. Prefix shifts take ballots
/// greedily from `eligible` in order.
#[derive(Clone, Debug)]
pub(crate) struct ShiftClass {
    /// Candidate being repositioned on the eligible ballots.
    pub moved: CandidateId,
    /// Tally-gap-derived minimum shift count that can flip the elimination.
    pub s_min: u64,
    /// Eligible ballot types in deterministic selection order.
    pub eligible: Vec<(Ranking, u64)>,
}

impl ShiftClass {
    pub fn total(&self) -> u64 {
        self.eligible.iter().map(|(_, c)| c).sum()
    }

    /// The first `s` eligible ballots shifted through `make_target`.
    /// `None` when `s` is zero or exceeds the eligible pool.
    pub fn prefix_shifts(
        &self,
        s: u64,
        make_target: impl Fn(&Ranking) -> Ranking,
    ) -> Option<Vec<ShiftSpec>> {
        if s == 0 || s > self.total() {
            return None;
        }
        let mut left = s;
        let mut shifts = Vec::new();
        for (ranking, count) in &self.eligible {
            if left == 0 {
                break;
            }
            let take = left.min(*count);
            shifts.push(ShiftSpec {
                source: ranking.clone(),
                target: make_target(ranking),
                count: take,
            });
            left -= take;
        }
        Some(shifts)
    }
}

fn single_eliminated(record: &TabulationRecord, round: usize) -> Option<&CandidateId> {
    record.rounds[round].eliminated.iter().next()
}

/// Eligible types counting for `x` at the given continuing set on which
/// `moved` is not already first, ordered by `moved`'s position ascending
/// (unranked last), then lexicographically.
fn eligible_counting_for(
    profile: &PreferenceProfile,
    continuing: &BTreeSet<CandidateId>,
    x: &CandidateId,
    moved: &CandidateId,
) -> Vec<(Ranking, u64)> {
    let mut out: Vec<(Ranking, u64)> = profile
        .ballot_types()
        .filter(|(r, _)| r.top_choice(continuing) == Some(x) && r.first() != Some(moved))
        .map(|(r, c)| (r.clone(), c))
        .collect();
    out.sort_by_key(|(r, _)| (r.position(moved).unwrap_or(usize::MAX), r.clone()));
    out
}

/// Upward-monotonicity search classes: for each elimination round with at
/// least three continuing candidates and each continuing X other than the
/// winner and the eliminated candidate, the ballots counting for X on which
/// the winner can be promoted to first.
pub(crate) fn upward_classes(search: &Search<'_>) -> Vec<ShiftClass> {
    let w = search.winner();
    let mut classes = Vec::new();
    for (r, round) in search.base.rounds.iter().enumerate() {
        if round.eliminated.is_empty() || round.tallies.len() < 3 {
            continue;
        }
        let Some(elim) = single_eliminated(&search.base, r) else {
            continue;
        };
        let continuing = round.continuing();
        for x in continuing.iter() {
            if x == w || round.eliminated.contains(x) {
                continue;
            }
            let s_min = round.tallies[x] - round.tallies[elim] + 1;
            let eligible = eligible_counting_for(search.profile, &continuing, x, w);
            if !eligible.is_empty() {
                classes.push(ShiftClass {
                    moved: w.clone(),
                    s_min,
                    eligible,
                });
            }
        }
    }
    classes
}

/// Downward-monotonicity search classes: for each loser L continuing at an
/// elimination round, shifting L below its second choice Y (the round's
/// eliminated candidate) can keep Y alive past a rival Z.
pub(crate) fn downward_classes(search: &Search<'_>) -> Vec<ShiftClass> {
    let w = search.winner();
    let mut classes = Vec::new();
    let mut losers: Vec<CandidateId> = search
        .profile
        .candidate_ids()
        .into_iter()
        .filter(|c| c != w)
        .collect();
    losers.sort();
    for l in &losers {
        for (r, round) in search.base.rounds.iter().enumerate() {
            if round.eliminated.is_empty() || !round.tallies.contains_key(l) {
                continue;
            }
            let Some(y) = single_eliminated(&search.base, r).cloned() else {
                continue;
            };
            if y == *l {
                continue;
            }
            let mut eligible: Vec<(Ranking, u64)> = search
                .profile
                .ballot_types()
                .filter(|(rk, _)| {
                    rk.len() >= 2 && rk.first() == Some(l) && rk.ids()[1] == y
                })
                .map(|(rk, c)| (rk.clone(), c))
                .collect();
            eligible.sort_by_key(|(rk, _)| rk.clone());
            if eligible.is_empty() {
                continue;
            }
            for (z, tz) in round.tallies.iter() {
                if z == l || *z == y {
                    continue;
                }
                classes.push(ShiftClass {
                    moved: l.clone(),
                    s_min: tz - round.tallies[&y] + 1,
                    eligible: eligible.clone(),
                });
            }
        }
    }
    classes
}

/// Compromise search classes, one per losing candidate (lexicographic):
/// ballots ranking the loser above the winner without already placing it
/// first, ordered by the loser's position ascending then lexicographically.
pub(crate) fn compromise_classes(search: &Search<'_>) -> Vec<ShiftClass> {
    let w = search.winner();
    let mut losers: Vec<CandidateId> = search
        .profile
        .candidate_ids()
        .into_iter()
        .filter(|c| c != w)
        .collect();
    losers.sort();
    let mut classes = Vec::new();
    for a in losers {
        let mut eligible: Vec<(Ranking, u64)> = search
            .profile
            .ballot_types()
            .filter(|(r, _)| r.ranks_above(&a, w) && r.first() != Some(&a))
            .map(|(r, c)| (r.clone(), c))
            .collect();
        eligible.sort_by_key(|(r, _)| (r.position(&a).unwrap_or(usize::MAX), r.clone()));
        if !eligible.is_empty() {
            classes.push(ShiftClass {
                moved: a,
                s_min: 1,
                eligible,
            });
        }
    }
    classes
}

/// Removal/truncation targets: each ballot type counting for a continuing
/// candidate X at some round, with the tally-gap shift-count floor.
#[derive(Clone, Debug)]
pub(crate) struct RemovalTarget {
    pub ranking: Ranking,
    pub count: u64,
    pub s_min: u64,
}

pub(crate) fn no_show_targets(search: &Search<'_>) -> Vec<RemovalTarget> {
    let mut targets = Vec::new();
    for (r, round) in search.base.rounds.iter().enumerate() {
        let continuing = round.continuing();
        let elim_tally = single_eliminated(&search.base, r).map(|e| round.tallies[e]);
        for x in continuing.iter() {
            let s_min = match elim_tally {
                Some(t) if !round.eliminated.contains(x) => round.tallies[x] - t + 1,
                _ => 1,
            };
            let mut types: Vec<(Ranking, u64)> = search
                .profile
                .ballot_types()
                .filter(|(rk, _)| rk.top_choice(&continuing) == Some(x))
                .map(|(rk, c)| (rk.clone(), c))
                .collect();
            types.sort_by_key(|(rk, _)| rk.clone());
            for (ranking, count) in types {
                targets.push(RemovalTarget {
                    ranking,
                    count,
                    s_min,
                });
            }
        }
    }
    targets
}

pub fn detect_condorcet_failure(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
) -> Result<CondorcetOutcome, TabulationError> {
    let record = tabulate(profile, policy)?;
    match condorcet_winner(&pairwise(profile)) {
        None => Ok(CondorcetOutcome::NoCondorcetWinner),
        Some(cw) if cw == record.winner => Ok(CondorcetOutcome::Pass { winner: cw }),
        Some(cw) => Ok(CondorcetOutcome::Fail(FlawCertificate {
            flaw_kind: FlawKind::Condorcet,
            modification: Modification::None,
            original_winner: record.winner,
            resulting_winner: cw,
        })),
    }
}

/// Loser subsets in search order: by size, then lexicographically.
pub(crate) fn loser_subsets(losers: &[CandidateId], max_size: usize) -> Vec<BTreeSet<CandidateId>> {
    let n = losers.len();
    let mut subsets = Vec::new();
    for size in 1..=max_size.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            subsets.push(idx.iter().map(|&i| losers[i].clone()).collect());
            // advance to the next combination of `size` indices out of `n`
            let Some(i) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    subsets
}

fn spoiler_search(search: &Search<'_>) -> Option<FlawCertificate> {
    let w = search.winner().clone();
    let mut losers: Vec<CandidateId> = search
        .profile
        .candidate_ids()
        .into_iter()
        .filter(|c| *c != w)
        .collect();
    losers.sort();
    let exhaustive = search.profile.candidate_count()
        <= search.budget.spoiler_exhaustive_candidate_limit;
    let max_size = if exhaustive { losers.len() } else { 2 };
    for removed in loser_subsets(&losers, max_size) {
        if removed.len() == losers.len() {
            continue; // removing every loser leaves a trivial one-candidate race
        }
        let modification = Modification::CandidateRemoval {
            removed: removed.clone(),
        };
        if let Some(new_winner) = search.winner_after(&modification) {
            if new_winner != w {
                if let Some(cert) = search.certify(FlawKind::Spoiler, modification, new_winner) {
                    return Some(cert);
                }
            }
        }
    }
    // Large fields: retry all subsets on a reduced profile, but verify the
    // removal against the original profile.
    if search.profile.candidate_count() > 12 {
        if let Ok(reduced) =
            reduce_to_n(search.profile, search.budget.spoiler_reduce_to, search.policy)
        {
            let mut reduced_losers: Vec<CandidateId> = reduced
                .candidate_ids()
                .into_iter()
                .filter(|c| *c != w)
                .collect();
            reduced_losers.sort();
            for removed in loser_subsets(&reduced_losers, reduced_losers.len()) {
                if removed.len() == losers.len() {
                    continue;
                }
                let modification = Modification::CandidateRemoval {
                    removed: removed.clone(),
                };
                if let Some(new_winner) = search.winner_after(&modification) {
                    if new_winner != w {
                        if let Some(cert) =
                            search.certify(FlawKind::Spoiler, modification, new_winner)
                        {
                            return Some(cert);
                        }
                    }
                }
            }
        }
    }
    None
}

fn upward_search(search: &Search<'_>) -> Option<FlawCertificate> {
    let w = search.winner().clone();
    for class in upward_classes(search) {
        let total = class.total();
        for s in sample_points(
            class.s_min.max(1),
            total,
            search.budget.max_retabulations_per_target,
        ) {
            let Some(shifts) = class.prefix_shifts(s, |r| r.with_first(&w)) else {
                continue;
            };
            let modification = Modification::BallotShifts { shifts };
            if let Some(new_winner) = search.winner_after(&modification) {
                if new_winner != w {
                    if let Some(cert) =
                        search.certify(FlawKind::UpwardMono, modification, new_winner)
                    {
                        return Some(cert);
                    }
                }
            }
        }
    }
    None
}

fn downward_search(search: &Search<'_>) -> Option<FlawCertificate> {
    for class in downward_classes(search) {
        let total = class.total();
        for s in sample_points(
            class.s_min.max(1),
            total,
            search.budget.max_retabulations_per_target,
        ) {
            let Some(shifts) = class.prefix_shifts(s, |r| r.with_swapped(0)) else {
                continue;
            };
            let modification = Modification::BallotShifts { shifts };
            if let Some(new_winner) = search.winner_after(&modification) {
                if new_winner == class.moved {
                    if let Some(cert) =
                        search.certify(FlawKind::DownwardMono, modification, new_winner)
                    {
                        return Some(cert);
                    }
                }
            }
        }
    }
    None
}

fn no_show_search(search: &Search<'_>) -> Option<FlawCertificate> {
    let w = search.winner().clone();
    for target in no_show_targets(search) {
        for s in sample_points(
            target.s_min.max(1),
            target.count,
            search.budget.max_retabulations_per_target,
        ) {
            let modification = Modification::BallotRemoval {
                ranking: target.ranking.clone(),
                count: s,
            };
            if let Some(new_winner) = search.winner_after(&modification) {
                if new_winner != w && target.ranking.ranks_above(&new_winner, &w) {
                    if let Some(cert) = search.certify(FlawKind::NoShow, modification, new_winner)
                    {
                        return Some(cert);
                    }
                }
            }
        }
    }
    None
}

fn truncation_search(search: &Search<'_>) -> Option<FlawCertificate> {
    let w = search.winner().clone();
    let types: Vec<(Ranking, u64)> = search
        .profile
        .ballot_types()
        .filter(|(r, _)| r.len() >= 2)
        .map(|(r, c)| (r.clone(), c))
        .collect();
    for (ranking, count) in types {
        for keep in 1..ranking.len() {
            for s in sample_points(1, count, search.budget.max_retabulations_per_target) {
                let modification = Modification::BallotTruncation {
                    ranking: ranking.clone(),
                    count: s,
                    keep,
                };
                if let Some(new_winner) = search.winner_after(&modification) {
                    if new_winner != w && ranking.ranks_above(&new_winner, &w) {
                        if let Some(cert) =
                            search.certify(FlawKind::Truncation, modification, new_winner)
                        {
                            return Some(cert);
                        }
                    }
                }
            }
        }
    }
    None
}

/// Shift counts worth probing in expansive compromise mode: both pool
/// endpoints plus every round tally gap (clamped to the pool), covering the
/// counts that flip some elimination.
fn compromise_probes(search: &Search<'_>, total: u64) -> Vec<u64> {
    let mut probes: BTreeSet<u64> = BTreeSet::new();
    probes.insert(1);
    probes.insert(total);
    for round in &search.base.rounds {
        if round.tallies.len() < 3 {
            continue;
        }
        for ty in round.tallies.values() {
            for tz in round.tallies.values() {
                if ty > tz {
                    probes.insert((ty - tz + 1).min(total));
                }
            }
        }
    }
    probes.into_iter().collect()
}

fn compromise_search(search: &Search<'_>, strict: bool) -> Option<FlawCertificate> {
    for class in compromise_classes(search) {
        let total = class.total();
        let probes = if strict {
            vec![total]
        } else {
            compromise_probes(search, total)
        };
        for s in probes {
            let Some(shifts) = class.prefix_shifts(s, |r| r.with_first(&class.moved)) else {
                continue;
            };
            let modification = Modification::BallotShifts { shifts };
            if let Some(new_winner) = search.winner_after(&modification) {
                if new_winner == class.moved {
                    if let Some(cert) =
                        search.certify(FlawKind::Compromise, modification, new_winner)
                    {
                        return Some(cert);
                    }
                }
            }
        }
    }
    None
}

fn majoritarian_check(search: &Search<'_>) -> Result<Option<FlawCertificate>, TabulationError> {
    if search.profile.candidate_count() < 2 {
        return Ok(None);
    }
    let share = winners_vote_share(search.profile, search.policy)?;
    Ok(share.majoritarian_failure.then(|| FlawCertificate {
        flaw_kind: FlawKind::Majoritarian,
        modification: Modification::None,
        original_winner: search.base.winner.clone(),
        resulting_winner: search.base.winner.clone(),
    }))
}

pub fn detect_spoiler(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> Result<Option<FlawCertificate>, TabulationError> {
    Ok(spoiler_search(&Search::new(profile, policy, *budget)?))
}

pub fn detect_upward_mono(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> Result<Option<FlawCertificate>, TabulationError> {
    Ok(upward_search(&Search::new(profile, policy, *budget)?))
}

pub fn detect_downward_mono(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> Result<Option<FlawCertificate>, TabulationError> {
    Ok(downward_search(&Search::new(profile, policy, *budget)?))
}

pub fn detect_no_show(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> Result<Option<FlawCertificate>, TabulationError> {
    Ok(no_show_search(&Search::new(profile, policy, *budget)?))
}

pub fn detect_truncation(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
) -> Result<Option<FlawCertificate>, TabulationError> {
    Ok(truncation_search(&Search::new(profile, policy, *budget)?))
}

pub fn detect_compromise(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
    strict: bool,
) -> Result<Option<FlawCertificate>, TabulationError> {
    Ok(compromise_search(&Search::new(profile, policy, *budget)?, strict))
}

pub fn detect_majoritarian(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
) -> Result<Option<FlawCertificate>, TabulationError> {
    let search = Search::new(profile, policy, SearchBudget::default())?;
    majoritarian_check(&search)
}

/// The combined verdict of all detectors over one profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionResults {
    pub record: TabulationRecord,
    pub condorcet: CondorcetOutcome,
    pub spoiler: Option<FlawCertificate>,
    pub upward_mono: Option<FlawCertificate>,
    pub downward_mono: Option<FlawCertificate>,
    pub no_show: Option<FlawCertificate>,
    pub truncation: Option<FlawCertificate>,
    pub compromise: Option<FlawCertificate>,
    pub majoritarian: Option<FlawCertificate>,
}

impl DetectionResults {
    pub fn no_condorcet_winner(&self) -> bool {
        self.condorcet == CondorcetOutcome::NoCondorcetWinner
    }

    /// The flaws that failed, in fixed order.
    pub fn failed_flaws(&self) -> Vec<FlawKind> {
        let mut flaws = Vec::new();
        if matches!(self.condorcet, CondorcetOutcome::Fail(_)) {
            flaws.push(FlawKind::Condorcet);
        }
        for (kind, cert) in [
            (FlawKind::Spoiler, &self.spoiler),
            (FlawKind::UpwardMono, &self.upward_mono),
            (FlawKind::DownwardMono, &self.downward_mono),
            (FlawKind::NoShow, &self.no_show),
            (FlawKind::Truncation, &self.truncation),
            (FlawKind::Compromise, &self.compromise),
            (FlawKind::Majoritarian, &self.majoritarian),
        ] {
            if cert.is_some() {
                flaws.push(kind);
            }
        }
        flaws
    }

    pub fn certificates(&self) -> Vec<&FlawCertificate> {
        let mut certs = Vec::new();
        if let CondorcetOutcome::Fail(c) = &self.condorcet {
            certs.push(c);
        }
        certs.extend(
            [
                &self.spoiler,
                &self.upward_mono,
                &self.downward_mono,
                &self.no_show,
                &self.truncation,
                &self.compromise,
                &self.majoritarian,
            ]
            .into_iter()
            .flatten(),
        );
        certs
    }

    pub fn any_failure(&self) -> bool {
        !self.failed_flaws().is_empty()
    }
}

/// Runs every detector over one profile with a shared base tabulation.
pub fn run_all_detectors(
    profile: &PreferenceProfile,
    policy: &EliminationPolicy,
    budget: &SearchBudget,
    strict_compromise: bool,
) -> Result<DetectionResults, TabulationError> {
    let search = Search::new(profile, policy, *budget)?;
    let condorcet = match condorcet_winner(&pairwise(profile)) {
        None => CondorcetOutcome::NoCondorcetWinner,
        Some(cw) if cw == search.base.winner => CondorcetOutcome::Pass { winner: cw },
        Some(cw) => CondorcetOutcome::Fail(FlawCertificate {
            flaw_kind: FlawKind::Condorcet,
            modification: Modification::None,
            original_winner: search.base.winner.clone(),
            resulting_winner: cw,
        }),
    };
    let majoritarian = majoritarian_check(&search)?;
    Ok(DetectionResults {
        condorcet,
        spoiler: spoiler_search(&search),
        upward_mono: upward_search(&search),
        downward_mono: downward_search(&search),
        no_show: no_show_search(&search),
        truncation: truncation_search(&search),
        compromise: compromise_search(&search, strict_compromise),
        majoritarian,
        record: search.base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Candidate;

    fn profile(types: &[(&[&str], u64)]) -> PreferenceProfile {
        let mut ids = BTreeSet::new();
        for (r, _) in types {
            for id in *r {
                ids.insert(*id);
            }
        }
        PreferenceProfile::new(
            ids.into_iter().map(Candidate::new).collect(),
            types.iter().map(|(r, c)| (Ranking::of(r), *c)),
            None,
        )
        .unwrap()
    }

    fn id(s: &str) -> CandidateId {
        CandidateId::new(s)
    }

    #[test]
    fn sample_points_includes_endpoints() {
        assert_eq!(sample_points(5, 5, 64), vec![5]);
        assert_eq!(sample_points(6, 5, 64), Vec::<u64>::new());
        let pts = sample_points(10, 100_000, 8);
        assert_eq!(pts.first(), Some(&10));
        assert_eq!(pts.last(), Some(&100_000));
        assert!(pts.len() <= 8);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_points(3, 9, 64), (3..=9).collect::<Vec<u64>>());
    }

    #[test]
    fn loser_subsets_ordered_by_size_then_lex() {
        let losers = [id("A"), id("B"), id("C")];
        let subsets = loser_subsets(&losers, 3);
        let rendered: Vec<Vec<&str>> = subsets
            .iter()
            .map(|s| s.iter().map(|c| c.as_str()).collect())
            .collect();
        assert_eq!(
            rendered,
            vec![
                vec!["A"],
                vec!["B"],
                vec!["C"],
                vec!["A", "B"],
                vec!["A", "C"],
                vec!["B", "C"],
                vec!["A", "B", "C"],
            ]
        );
    }

    #[test]
    fn shifted_candidate_identifies_single_moves() {
        let src = Ranking::of(&["A", "B", "C"]);
        assert_eq!(
            shifted_candidate(&src, &Ranking::of(&["C", "A", "B"])),
            Some(id("C"))
        );
        // moving A down one == moving B up one; the first witness in target
        // order is reported
        assert_eq!(
            shifted_candidate(&src, &Ranking::of(&["B", "A", "C"])),
            Some(id("B"))
        );
        assert_eq!(shifted_candidate(&src, &src), None);
        assert_eq!(
            shifted_candidate(&src, &Ranking::of(&["C", "B", "A"])),
            None
        );
        // promoting an unranked candidate is a legal shift
        assert_eq!(
            shifted_candidate(&Ranking::of(&["A", "B"]), &Ranking::of(&["C", "A", "B"])),
            Some(id("C"))
        );
    }

    #[test]
    fn apply_shift_conserves_ballots() {
        let p = profile(&[(&["A", "B"], 5), (&["B", "A"], 4)]);
        let modified = apply_modification(
            &p,
            &Modification::BallotShifts {
                shifts: vec![ShiftSpec {
                    source: Ranking::of(&["A", "B"]),
                    target: Ranking::of(&["B", "A"]),
                    count: 2,
                }],
            },
        )
        .unwrap();
        assert_eq!(modified.ballots_cast(), 9);
        assert_eq!(modified.count_of(&Ranking::of(&["A", "B"])), 3);
        assert_eq!(modified.count_of(&Ranking::of(&["B", "A"])), 6);
    }

    #[test]
    fn apply_shift_rejects_overdraw() {
        let p = profile(&[(&["A", "B"], 5)]);
        let err = apply_modification(
            &p,
            &Modification::BallotShifts {
                shifts: vec![ShiftSpec {
                    source: Ranking::of(&["A", "B"]),
                    target: Ranking::of(&["B", "A"]),
                    count: 6,
                }],
            },
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::ShiftExceedsSource { .. }));
    }

    #[test]
    fn apply_truncation_merges_into_prefix_type() {
        let p = profile(&[(&["A", "B", "C"], 5), (&["A", "B"], 2)]);
        let modified = apply_modification(
            &p,
            &Modification::BallotTruncation {
                ranking: Ranking::of(&["A", "B", "C"]),
                count: 3,
                keep: 2,
            },
        )
        .unwrap();
        assert_eq!(modified.count_of(&Ranking::of(&["A", "B"])), 5);
        assert_eq!(modified.count_of(&Ranking::of(&["A", "B", "C"])), 2);
    }

    #[test]
    fn verifier_rejects_fabricated_certificates() {
        // A wins with a majority; no modification-free certificate can claim otherwise.
        let p = profile(&[(&["A", "B"], 6), (&["B", "A"], 3)]);
        let policy = EliminationPolicy::default();
        let cert = FlawCertificate {
            flaw_kind: FlawKind::Spoiler,
            modification: Modification::CandidateRemoval {
                removed: [id("B")].into(),
            },
            original_winner: id("A"),
            resulting_winner: id("B"),
        };
        assert!(verify_certificate(&p, &policy, &cert).is_err());
        let cert = FlawCertificate {
            flaw_kind: FlawKind::Majoritarian,
            modification: Modification::None,
            original_winner: id("A"),
            resulting_winner: id("A"),
        };
        assert!(matches!(
            verify_certificate(&p, &policy, &cert),
            Err(VerifyError::Predicate(_))
        ));
    }

    #[test]
    fn majority_winner_profile_is_clean_except_condorcet_pass() {
        let p = profile(&[(&["A", "B", "C"], 7), (&["B", "C", "A"], 3), (&["C", "B", "A"], 2)]);
        let results = run_all_detectors(
            &p,
            &EliminationPolicy::default(),
            &SearchBudget::default(),
            false,
        )
        .unwrap();
        assert_eq!(results.condorcet, CondorcetOutcome::Pass { winner: id("A") });
        assert!(results.failed_flaws().is_empty());
        assert!(!results.any_failure());
    }

    #[test]
    fn all_detector_positives_verify() {
        // Center squeeze: B is the Condorcet winner but is eliminated first.
        let p = profile(&[
            (&["A", "B", "C"], 8),
            (&["B", "A", "C"], 5),
            (&["C", "B", "A"], 6),
        ]);
        let policy = EliminationPolicy::default();
        let results =
            run_all_detectors(&p, &policy, &SearchBudget::default(), false).unwrap();
        for cert in results.certificates() {
            verify_certificate(&p, &policy, cert).unwrap();
        }
        assert!(matches!(results.condorcet, CondorcetOutcome::Fail(_)));
    }

    #[test]
    fn determinism_of_run_all() {
        let p = profile(&[
            (&["A", "B", "C"], 8),
            (&["B", "A", "C"], 5),
            (&["C", "B", "A"], 6),
        ]);
        let policy = EliminationPolicy::default();
        let a = run_all_detectors(&p, &policy, &SearchBudget::default(), false).unwrap();
        let b = run_all_detectors(&p, &policy, &SearchBudget::default(), false).unwrap();
        assert_eq!(a, b);
    }
}
