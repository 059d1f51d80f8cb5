//! Forensic audit engine for single-winner ranked-choice (instant-runoff)
//! elections: exact tabulation from ranked ballots plus detection, with
//! re-verified certificates, of the classic social-choice failures.

pub mod model;
pub mod detect;
pub mod ingest;
pub mod oracle;
pub mod report;
pub mod tabulate;

pub use model::{BallotType, Candidate, CandidateId, ModelError, PreferenceProfile, Ranking};
pub use tabulate::{
    classify_truncated, condorcet_winner, pairwise, reduce_to_n, tabulate, winners_vote_share,
    EliminationMode, EliminationPolicy, PairwiseMatrix, RoundRecord, TabulationError,
    TabulationRecord, TieBreak, VoteShare, WinnersVoteShare,
};
