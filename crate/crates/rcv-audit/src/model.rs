//! Exact-integer data model for candidates, ballots and preference profiles.
//!
//! All counts are nonnegative integers; nothing in this module (or in
//! tabulation) touches floating point. Profiles are immutable after
//! construction and cheap to share between threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque, stable candidate identifier. Ordering on ids is total and
/// deterministic; it doubles as the default tie-break ordering.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(String);

impl CandidateId {
    pub fn new(id: impl Into<String>) -> Self {
        CandidateId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for CandidateId {
    fn from(s: &str) -> Self {
        CandidateId::new(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub display_name: String,
    pub is_write_in: bool,
}

impl Candidate {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        Candidate {
            display_name: id.clone(),
            id: CandidateId(id),
            is_write_in: false,
        }
    }

    pub fn write_in(id: impl Into<String>) -> Self {
        let mut c = Candidate::new(id);
        c.is_write_in = true;
        c
    }
}

/// An ordered sequence of distinct candidate ids. Unranked candidates are
/// interpreted as tied for the lowest ranking (the weak-order model).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<CandidateId>);

impl Ranking {
    pub fn new(ids: Vec<CandidateId>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.clone()) {
                return Err(ModelError::DuplicateInRanking(id.clone()));
            }
        }
        Ok(Ranking(ids))
    }

    pub fn of(ids: &[&str]) -> Self {
        Ranking::new(ids.iter().map(|s| CandidateId::new(*s)).collect()).expect("distinct ids")
    }

    pub fn ids(&self) -> &[CandidateId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, id: &CandidateId) -> Option<usize> {
        self.0.iter().position(|c| c == id)
    }

    pub fn contains(&self, id: &CandidateId) -> bool {
        self.position(id).is_some()
    }

    pub fn first(&self) -> Option<&CandidateId> {
        self.0.first()
    }

    /// Weak-order comparison: does this ballot rank `a` strictly above `b`?
    /// Ranked beats unranked; two unranked candidates are tied (false).
    pub fn ranks_above(&self, a: &CandidateId, b: &CandidateId) -> bool {
        match (self.position(a), self.position(b)) {
            (Some(pa), Some(pb)) => pa < pb,
            (Some(_), None) => true,
            _ => false,
        }
    }

    /// Highest-ranked candidate among `continuing`, if any.
    pub fn top_choice<'a>(&'a self, continuing: &BTreeSet<CandidateId>) -> Option<&'a CandidateId> {
        self.0.iter().find(|c| continuing.contains(*c))
    }

    /// New ranking with `id` moved to the first position. If `id` was
    /// unranked it is prepended; relative order of the rest is preserved.
    pub fn with_first(&self, id: &CandidateId) -> Ranking {
        let mut ids = vec![id.clone()];
        ids.extend(self.0.iter().filter(|c| *c != id).cloned());
        Ranking(ids)
    }

    /// New ranking with the candidates at positions `i` and `i + 1` swapped.
    pub fn with_swapped(&self, i: usize) -> Ranking {
        let mut ids = self.0.clone();
        ids.swap(i, i + 1);
        Ranking(ids)
    }

    /// Prefix of the first `keep` positions.
    pub fn truncated(&self, keep: usize) -> Ranking {
        Ranking(self.0[..keep.min(self.0.len())].to_vec())
    }

    /// Ranking with every id in `removed` deleted.
    pub fn without(&self, removed: &BTreeSet<CandidateId>) -> Ranking {
        Ranking(self.0.iter().filter(|c| !removed.contains(*c)).cloned().collect())
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in &self.0 {
            if !first {
                f.write_str(" > ")?;
            }
            first = false;
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

/// A ballot ranking together with its multiplicity in the profile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotType {
    pub ranking: Ranking,
    pub count: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("candidate {0} appears twice in a ranking")]
    DuplicateInRanking(CandidateId),
    #[error("duplicate candidate id {0}")]
    DuplicateCandidate(CandidateId),
    #[error("ranking references unknown candidate {0}")]
    UnknownCandidate(CandidateId),
    #[error("profiles may not store empty rankings")]
    EmptyRanking,
    #[error("ballot counts must be positive")]
    ZeroCount,
    #[error("cannot remove the whole candidate set")]
    RemovedAllCandidates,
    #[error("removal set contains unknown candidate {0}")]
    UnknownRemoval(CandidateId),
    #[error("profile has no candidates")]
    NoCandidates,
}

/// Aggregated multiset of ranked ballot types over a fixed candidate set.
///
/// Invariants enforced at construction: every ranked id belongs to the
/// candidate set, rankings are nonempty and distinct (identical rankings
/// are merged), counts are positive, and `ballots_cast` equals the sum of
/// counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    candidates: BTreeMap<CandidateId, Candidate>,
    ballots: BTreeMap<Ranking, u64>,
    ballots_cast: u64,
    truncation_level: Option<u32>,
}

impl PreferenceProfile {
    pub fn new(
        candidates: Vec<Candidate>,
        ballot_types: impl IntoIterator<Item = (Ranking, u64)>,
        truncation_level: Option<u32>,
    ) -> Result<Self, ModelError> {
        let mut cand_map = BTreeMap::new();
        for c in candidates {
            if cand_map.insert(c.id.clone(), c.clone()).is_some() {
                return Err(ModelError::DuplicateCandidate(c.id));
            }
        }
        if cand_map.is_empty() {
            return Err(ModelError::NoCandidates);
        }
        let mut ballots: BTreeMap<Ranking, u64> = BTreeMap::new();
        let mut ballots_cast = 0u64;
        for (ranking, count) in ballot_types {
            if ranking.is_empty() {
                return Err(ModelError::EmptyRanking);
            }
            if count == 0 {
                return Err(ModelError::ZeroCount);
            }
            for id in ranking.ids() {
                if !cand_map.contains_key(id) {
                    return Err(ModelError::UnknownCandidate(id.clone()));
                }
            }
            ballots_cast += count;
            *ballots.entry(ranking).or_insert(0) += count;
        }
        Ok(PreferenceProfile {
            candidates: cand_map,
            ballots,
            ballots_cast,
            truncation_level,
        })
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.values()
    }

    pub fn candidate_ids(&self) -> BTreeSet<CandidateId> {
        self.candidates.keys().cloned().collect()
    }

    pub fn candidate(&self, id: &CandidateId) -> Option<&Candidate> {
        self.candidates.get(id)
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn ballot_types(&self) -> impl Iterator<Item = (&Ranking, u64)> {
        self.ballots.iter().map(|(r, &c)| (r, c))
    }

    pub fn ballot_type_count(&self) -> usize {
        self.ballots.len()
    }

    pub fn count_of(&self, ranking: &Ranking) -> u64 {
        self.ballots.get(ranking).copied().unwrap_or(0)
    }

    pub fn ballots_cast(&self) -> u64 {
        self.ballots_cast
    }

    pub fn truncation_level(&self) -> Option<u32> {
        self.truncation_level
    }

    pub fn with_truncation_level(mut self, level: Option<u32>) -> Self {
        self.truncation_level = level;
        self
    }

    /// Rankings that omit exactly one candidate are extended with that
    /// candidate appended last, then identical rankings are merged. Under
    /// the weak-order model this is a pure aggregation step: it changes
    /// neither pairwise counts nor the tabulation winner.
    pub fn merge_ballot_types(&self) -> PreferenceProfile {
        let n = self.candidates.len();
        let ids = self.candidate_ids();
        let merged = self.ballots.iter().map(|(ranking, &count)| {
            if ranking.len() == n - 1 {
                let missing = ids
                    .iter()
                    .find(|id| !ranking.contains(id))
                    .expect("exactly one candidate omitted");
                let mut v = ranking.ids().to_vec();
                v.push(missing.clone());
                (Ranking(v), count)
            } else {
                (ranking.clone(), count)
            }
        });
        PreferenceProfile::new(self.candidates.values().cloned().collect(), merged, self.truncation_level)
            .expect("merge preserves profile validity")
    }

    /// Deletes `removed` from the candidate set and from every ranking.
    /// Rankings that become empty are dropped; `ballots_cast` is recomputed
    /// over the surviving ballots. Callers that need the original
    /// electorate size as a denominator keep it from the source profile.
    pub fn restrict(&self, removed: &BTreeSet<CandidateId>) -> Result<PreferenceProfile, ModelError> {
        for id in removed {
            if !self.candidates.contains_key(id) {
                return Err(ModelError::UnknownRemoval(id.clone()));
            }
        }
        if removed.len() >= self.candidates.len() {
            return Err(ModelError::RemovedAllCandidates);
        }
        let survivors: Vec<Candidate> = self
            .candidates
            .values()
            .filter(|c| !removed.contains(&c.id))
            .cloned()
            .collect();
        let ballots = self.ballots.iter().filter_map(|(ranking, &count)| {
            let r = ranking.without(removed);
            if r.is_empty() {
                None
            } else {
                Some((r, count))
            }
        });
        PreferenceProfile::new(survivors, ballots, self.truncation_level)
    }

    /// Renames every candidate according to `map`; used by relabeling
    /// invariance checks. Ids absent from the map are kept unchanged.
    pub fn relabeled(&self, map: &BTreeMap<CandidateId, CandidateId>) -> PreferenceProfile {
        let rename = |id: &CandidateId| map.get(id).cloned().unwrap_or_else(|| id.clone());
        let candidates = self
            .candidates
            .values()
            .map(|c| Candidate {
                id: rename(&c.id),
                display_name: c.display_name.clone(),
                is_write_in: c.is_write_in,
            })
            .collect();
        let ballots = self
            .ballots
            .iter()
            .map(|(r, &count)| (Ranking(r.ids().iter().map(&rename).collect()), count));
        PreferenceProfile::new(candidates, ballots, self.truncation_level)
            .expect("relabeling preserves profile validity")
    }
}
