//! Cast-vote-record ingestion: a canonical aggregated CSV grammar parsed
//! into normalized [`PreferenceProfile`]s under explicit sanitation rules,
//! plus the inverse serializer.
//!
//! Grammar: optional `#`-prefixed comment lines (`# key=value`; recognized
//! keys: `truncation_level`, `candidates`, `write_ins`), then a header
//! `count,rank_1,...,rank_k`, then one row per aggregated ballot type.
//! Cell tokens: a candidate id, `$WRITEIN`, `$OVERVOTE`, `$SKIP`, or an
//! empty cell (treated as a skip). Empty trailing cells are allowed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Candidate, CandidateId, ModelError, PreferenceProfile, Ranking};

/// Pseudo-candidate id assigned to the `$WRITEIN` token.
pub const WRITE_IN_ID: &str = "$WRITEIN";

const OVERVOTE_TOKEN: &str = "$OVERVOTE";
const SKIP_TOKEN: &str = "$SKIP";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Candidate(CandidateId),
    WriteIn,
    Overvote,
    Skip,
}

/// One pre-sanitation row: an aggregated ballot with its rank-position cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawBallot {
    pub count: u64,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OvervoteRule {
    /// End the ballot at the overvoted position.
    TruncateAt,
    /// Drop the overvoted position and continue with later ranks.
    SkipPosition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipRule {
    /// Close up every skipped position.
    Compress,
    /// Close up lone skips, but end the ballot at two consecutive skips.
    TruncateAfterTwoConsecutive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicateRule {
    /// Keep a candidate's first occurrence, drop repeats.
    KeepFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteInRule {
    /// Keep the write-in pseudo-candidate in the profile.
    Keep,
    /// Remove write-in candidates (restricting the profile) before analysis.
    EliminateBeforeAnalysis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitationPolicy {
    pub overvote_rule: OvervoteRule,
    pub skip_rule: SkipRule,
    pub duplicate_rule: DuplicateRule,
    pub write_in_rule: WriteInRule,
}

impl Default for SanitationPolicy {
    fn default() -> Self {
        SanitationPolicy {
            overvote_rule: OvervoteRule::TruncateAt,
            skip_rule: SkipRule::Compress,
            duplicate_rule: DuplicateRule::KeepFirst,
            write_in_rule: WriteInRule::EliminateBeforeAnalysis,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed header: {detail}")]
    MalformedHeader { line: usize, detail: String },
    #[error("line {line}: count field `{value}` is not a positive integer")]
    BadCount { line: usize, value: String },
    #[error("line {line}: unknown token `{token}`")]
    UnknownToken { line: usize, token: String },
    #[error("line {line}: row has {actual} rank cells, header declares {declared}")]
    RowTooWide {
        line: usize,
        actual: usize,
        declared: usize,
    },
    #[error("line {line}: malformed comment: {detail}")]
    MalformedComment { line: usize, detail: String },
    #[error("line {line}: {source}")]
    Model {
        line: usize,
        #[source]
        source: ModelError,
    },
}

/// A parsed file: the normalized profile plus the number of input ballots
/// whose rankings were empty after sanitation (dropped from the profile).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseOutcome {
    pub profile: PreferenceProfile,
    pub discarded_ballots: u64,
}

fn parse_cell(raw: &str, line: usize) -> Result<Cell, ParseError> {
    let token = raw.trim();
    Ok(match token {
        "" | SKIP_TOKEN => Cell::Skip,
        OVERVOTE_TOKEN => Cell::Overvote,
        WRITE_IN_ID => Cell::WriteIn,
        _ if token.starts_with('$') => {
            return Err(ParseError::UnknownToken {
                line,
                token: token.to_string(),
            })
        }
        _ => Cell::Candidate(CandidateId::new(token)),
    })
}

/// Applies the sanitation pipeline (duplicates, then skips, then overvotes)
/// and returns the surviving candidate sequence.
pub fn sanitize(ballot: &RawBallot, policy: &SanitationPolicy) -> Vec<CandidateId> {
    // Duplicates: keep the first occurrence of each candidate.
    let mut seen: BTreeSet<CandidateId> = BTreeSet::new();
    let mut cells: Vec<Cell> = Vec::with_capacity(ballot.cells.len());
    for cell in &ballot.cells {
        let id = match cell {
            Cell::Candidate(id) => Some(id.clone()),
            Cell::WriteIn => Some(CandidateId::new(WRITE_IN_ID)),
            _ => None,
        };
        match id {
            Some(id) => {
                match policy.duplicate_rule {
                    DuplicateRule::KeepFirst => {
                        if seen.insert(id.clone()) {
                            cells.push(Cell::Candidate(id));
                        }
                    }
                }
            }
            None => cells.push(cell.clone()),
        }
    }

    // Skips: compress lone skips; optionally end the ballot at two in a row.
    let mut after_skips: Vec<Cell> = Vec::with_capacity(cells.len());
    let mut consecutive = 0usize;
    for cell in cells {
        if cell == Cell::Skip {
            consecutive += 1;
            if consecutive >= 2 && policy.skip_rule == SkipRule::TruncateAfterTwoConsecutive {
                break;
            }
        } else {
            consecutive = 0;
            after_skips.push(cell);
        }
    }

    // Overvotes: truncate the ballot or drop the position.
    let mut out = Vec::with_capacity(after_skips.len());
    for cell in after_skips {
        match cell {
            Cell::Overvote => match policy.overvote_rule {
                OvervoteRule::TruncateAt => break,
                OvervoteRule::SkipPosition => continue,
            },
            Cell::Candidate(id) => out.push(id),
            Cell::WriteIn | Cell::Skip => unreachable!("resolved by earlier passes"),
        }
    }
    out
}

struct Comments {
    truncation_level: Option<u32>,
    declared: Vec<CandidateId>,
    write_ins: BTreeSet<CandidateId>,
}

fn parse_comment(body: &str, line: usize, comments: &mut Comments) -> Result<(), ParseError> {
    let body = body.trim();
    if body.is_empty() {
        return Ok(());
    }
    let Some((key, value)) = body.split_once('=') else {
        // Free-text comments are allowed and ignored.
        return Ok(());
    };
    match key.trim() {
        "truncation_level" => {
            let n: u32 = value.trim().parse().map_err(|_| ParseError::MalformedComment {
                line,
                detail: format!("truncation_level `{}` is not a non-negative integer", value.trim()),
            })?;
            comments.truncation_level = Some(n);
        }
        "candidates" => {
            for id in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                comments.declared.push(CandidateId::new(id));
            }
        }
        "write_ins" => {
            for id in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                comments.write_ins.insert(CandidateId::new(id));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Parses a canonical CSV document into a normalized profile.
///
/// The policy's write-in rule is *not* applied here; write-ins are parsed
/// into flagged pseudo-candidates and [`eliminate_write_ins`] removes them.
pub fn parse_cvr(input: &str, policy: &SanitationPolicy) -> Result<ParseOutcome, ParseError> {
    let mut lines = input.lines().enumerate().peekable();
    let mut comments = Comments {
        truncation_level: None,
        declared: Vec::new(),
        write_ins: BTreeSet::new(),
    };

    // Leading comments, then the header row.
    let header_cols = loop {
        let Some((idx, raw)) = lines.next() else {
            return Err(ParseError::MalformedHeader {
                line: input.lines().count().max(1),
                detail: "missing header row".to_string(),
            });
        };
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            parse_comment(body, line, &mut comments)?;
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cols.first() != Some(&"count") {
            return Err(ParseError::MalformedHeader {
                line,
                detail: format!("first column must be `count`, found `{}`", cols.first().unwrap_or(&"")),
            });
        }
        if cols.len() < 2 {
            return Err(ParseError::MalformedHeader {
                line,
                detail: "expected at least one rank column".to_string(),
            });
        }
        for (i, col) in cols[1..].iter().enumerate() {
            let expected = format!("rank_{}", i + 1);
            if *col != expected {
                return Err(ParseError::MalformedHeader {
                    line,
                    detail: format!("column {} must be `{}`, found `{}`", i + 2, expected, col),
                });
            }
        }
        break cols.len() - 1;
    };

    let mut merged: BTreeMap<Vec<CandidateId>, u64> = BTreeMap::new();
    let mut seen_ids: BTreeSet<CandidateId> = BTreeSet::new();
    let mut discarded = 0u64;

    for (idx, raw) in lines {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            parse_comment(body, line, &mut comments)?;
            continue;
        }
        let mut fields = trimmed.split(',');
        let count_field = fields.next().unwrap_or("").trim();
        let count: u64 = match count_field.parse() {
            Ok(n) if n > 0 => n,
            _ => {
                return Err(ParseError::BadCount {
                    line,
                    value: count_field.to_string(),
                })
            }
        };
        let cell_fields: Vec<&str> = fields.collect();
        if cell_fields.len() > header_cols {
            return Err(ParseError::RowTooWide {
                line,
                actual: cell_fields.len(),
                declared: header_cols,
            });
        }
        let mut cells = Vec::with_capacity(cell_fields.len());
        for f in cell_fields {
            let cell = parse_cell(f, line)?;
            if let Cell::Candidate(id) = &cell {
                seen_ids.insert(id.clone());
            }
            if cell == Cell::WriteIn {
                seen_ids.insert(CandidateId::new(WRITE_IN_ID));
            }
            cells.push(cell);
        }
        let ranking = sanitize(&RawBallot { count, cells }, policy);
        if ranking.is_empty() {
            discarded += count;
        } else {
            *merged.entry(ranking).or_insert(0) += count;
        }
    }

    let mut ids: BTreeSet<CandidateId> = seen_ids;
    ids.extend(comments.declared.iter().cloned());
    ids.extend(comments.write_ins.iter().cloned());
    if comments.write_ins.is_empty() {
        // The bare token implies a single write-in pseudo-candidate.
        comments.write_ins.insert(CandidateId::new(WRITE_IN_ID));
    }
    let candidates: Vec<Candidate> = ids
        .into_iter()
        .map(|id| {
            if comments.write_ins.contains(&id) {
                Candidate::write_in(id.as_str())
            } else {
                Candidate::new(id.as_str())
            }
        })
        .collect();

    let ballots = merged
        .into_iter()
        .map(|(ranking, count)| (Ranking::new(ranking).expect("sanitized rankings have no duplicates"), count));
    let profile = PreferenceProfile::new(candidates, ballots, comments.truncation_level)
        .map_err(|source| ParseError::Model { line: 0, source })?;
    Ok(ParseOutcome {
        profile,
        discarded_ballots: discarded,
    })
}

/// Removes every candidate flagged as a write-in, restricting the profile.
/// Errors if every candidate is a write-in; a profile without write-ins is
/// returned unchanged.
pub fn eliminate_write_ins(profile: &PreferenceProfile) -> Result<PreferenceProfile, ModelError> {
    let write_ins: BTreeSet<CandidateId> = profile
        .candidates()
        .filter(|c| c.is_write_in)
        .map(|c| c.id.clone())
        .collect();
    if write_ins.is_empty() {
        return Ok(profile.clone());
    }
    if write_ins.len() == profile.candidate_count() {
        return Err(ModelError::RemovedAllCandidates);
    }
    profile.restrict(&write_ins)
}

/// Serializes a normalized profile into the canonical CSV form accepted by
/// [`parse_cvr`]; `parse_cvr(serialize_profile(p))` reproduces `p` exactly.
pub fn serialize_profile(profile: &PreferenceProfile) -> String {
    let mut out = String::new();
    if let Some(level) = profile.truncation_level() {
        out.push_str(&format!("# truncation_level={}\n", level));
    }
    let all: Vec<&str> = profile.candidates().map(|c| c.id.as_str()).collect();
    out.push_str(&format!("# candidates={}\n", all.join(",")));
    let write_ins: Vec<&str> = profile
        .candidates()
        .filter(|c| c.is_write_in)
        .map(|c| c.id.as_str())
        .collect();
    if write_ins.is_empty() {
        out.push_str("# write_ins=\n");
    } else {
        out.push_str(&format!("# write_ins={}\n", write_ins.join(",")));
    }

    let width = profile
        .ballot_types()
        .map(|(r, _)| r.len())
        .max()
        .unwrap_or(1)
        .max(1);
    out.push_str("count");
    for i in 1..=width {
        out.push_str(&format!(",rank_{}", i));
    }
    out.push('\n');
    for (ranking, count) in profile.ballot_types() {
        out.push_str(&count.to_string());
        for id in ranking.ids() {
            out.push(',');
            out.push_str(id.as_str());
        }
        for _ in ranking.len()..width {
            out.push(',');
        }
        out.push('\n');
    }
    out
}
