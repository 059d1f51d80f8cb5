//! Per-election audit reports (stable JSON) and corpus summaries (CSV),
//! shaped like the aggregate failure-rate and vote-share tables of election
//! audit studies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{run_all_detectors, CondorcetOutcome, FlawCertificate, FlawKind, SearchBudget};
use crate::ingest::{eliminate_write_ins, parse_cvr, ParseError, SanitationPolicy, WriteInRule};
use crate::model::{CandidateId, ModelError, PreferenceProfile};
use crate::tabulate::{
    classify_truncated, winners_vote_share, EliminationPolicy, RoundRecord, TabulationError,
    VoteShare,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagState {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for FlagState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlagState::Pass => "pass",
            FlagState::Fail => "fail",
            FlagState::NotApplicable => "na",
        })
    }
}

/// Everything the audit pipeline needs beyond the ballots themselves.
#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub sanitation: SanitationPolicy,
    pub policy: EliminationPolicy,
    pub budget: SearchBudget,
    pub strict_compromise: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            sanitation: SanitationPolicy::default(),
            policy: EliminationPolicy::default(),
            budget: SearchBudget::default(),
            strict_compromise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareReport {
    pub numerator: u64,
    pub denominator: u64,
    pub exact: String,
    pub percent: String,
}

impl From<VoteShare> for ShareReport {
    fn from(share: VoteShare) -> Self {
        ShareReport {
            numerator: share.numerator,
            denominator: share.denominator,
            exact: share.exact(),
            percent: share.display_percent(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub election_id: String,
    pub candidate_count: usize,
    pub ballots_cast: u64,
    pub discarded_ballots: u64,
    pub truncated: bool,
    pub majority_candidate: bool,
    pub winner: CandidateId,
    pub winners_vote_share: ShareReport,
    pub flags: BTreeMap<String, FlagState>,
    pub no_condorcet_winner: bool,
    pub certificates: Vec<FlawCertificate>,
    pub rounds: Vec<RoundRecord>,
}

impl AuditReport {
    pub fn flag(&self, kind: FlawKind) -> FlagState {
        self.flags[kind.name()]
    }

    pub fn any_failure(&self) -> bool {
        self.flags.values().any(|f| *f == FlagState::Fail)
    }

    /// Byte-stable pretty JSON: struct fields in declaration order, maps in
    /// key order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Profile {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{path}: {source}")]
    Tabulation {
        path: PathBuf,
        #[source]
        source: TabulationError,
    },
}

/// Audits an in-memory profile (already sanitized and write-in-resolved).
pub fn audit_profile(
    election_id: &str,
    profile: &PreferenceProfile,
    discarded_ballots: u64,
    options: &AuditOptions,
) -> Result<AuditReport, TabulationError> {
    let results = run_all_detectors(
        profile,
        &options.policy,
        &options.budget,
        options.strict_compromise,
    )?;
    let share = winners_vote_share(profile, &options.policy)?;

    let mut flags = BTreeMap::new();
    flags.insert(
        FlawKind::Condorcet.name().to_string(),
        match &results.condorcet {
            CondorcetOutcome::NoCondorcetWinner => FlagState::NotApplicable,
            CondorcetOutcome::Pass { .. } => FlagState::Pass,
            CondorcetOutcome::Fail(_) => FlagState::Fail,
        },
    );
    for (kind, cert) in [
        (FlawKind::Spoiler, &results.spoiler),
        (FlawKind::UpwardMono, &results.upward_mono),
        (FlawKind::DownwardMono, &results.downward_mono),
        (FlawKind::NoShow, &results.no_show),
        (FlawKind::Truncation, &results.truncation),
        (FlawKind::Compromise, &results.compromise),
        (FlawKind::Majoritarian, &results.majoritarian),
    ] {
        flags.insert(
            kind.name().to_string(),
            if cert.is_some() {
                FlagState::Fail
            } else {
                FlagState::Pass
            },
        );
    }

    Ok(AuditReport {
        election_id: election_id.to_string(),
        candidate_count: profile.candidate_count(),
        ballots_cast: profile.ballots_cast(),
        discarded_ballots,
        truncated: classify_truncated(profile),
        majority_candidate: results.record.majority_candidate,
        winner: results.record.winner.clone(),
        winners_vote_share: share.share.into(),
        flags,
        no_condorcet_winner: results.no_condorcet_winner(),
        certificates: results.certificates().into_iter().cloned().collect(),
        rounds: results.record.rounds,
    })
}

/// Parses, optionally eliminates write-ins per the sanitation policy, and
/// audits a single canonical CSV file.
pub fn audit_file(path: &Path, options: &AuditOptions) -> Result<AuditReport, AuditError> {
    let text = std::fs::read_to_string(path).map_err(|source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let outcome = parse_cvr(&text, &options.sanitation).map_err(|source| AuditError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let profile = match options.sanitation.write_in_rule {
        WriteInRule::Keep => outcome.profile,
        WriteInRule::EliminateBeforeAnalysis => {
            eliminate_write_ins(&outcome.profile).map_err(|source| AuditError::Profile {
                path: path.to_path_buf(),
                source,
            })?
        }
    };
    let election_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    audit_profile(&election_id, &profile, outcome.discarded_ballots, options).map_err(|source| {
        AuditError::Tabulation {
            path: path.to_path_buf(),
            source,
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlawRate {
    pub failures: u64,
    pub applicable: u64,
}

impl fmt::Display for FlawRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.failures, self.applicable)
    }
}

/// Exact mean of vote shares, kept as a wide rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeanShare {
    pub numerator: u128,
    pub denominator: u128,
}

impl MeanShare {
    pub fn display_percent(&self) -> String {
        if self.denominator == 0 {
            return "na".to_string();
        }
        let permille = (2 * 1000 * self.numerator + self.denominator) / (2 * self.denominator);
        format!("{}.{}%", permille / 10, permille % 10)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Exact mean of `num/den` shares: Σ shareᵢ / k, reduced.
pub fn mean_share(shares: &[VoteShare]) -> Option<MeanShare> {
    if shares.is_empty() {
        return None;
    }
    let (mut num, mut den) = (0u128, 1u128);
    for s in shares {
        let (sn, sd) = (s.numerator as u128, s.denominator.max(1) as u128);
        // num/den + sn/sd
        num = num.checked_mul(sd)?.checked_add(sn.checked_mul(den)?)?;
        den = den.checked_mul(sd)?;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    den = den.checked_mul(shares.len() as u128)?;
    let g = gcd(num, den);
    Some(MeanShare {
        numerator: num / g,
        denominator: den / g,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    /// Per-election reports, ordered by election_id.
    pub reports: Vec<AuditReport>,
    /// Unreadable or unparsable entries: (path, error message).
    pub errors: Vec<(PathBuf, String)>,
    /// Fail counts per flaw over the applicable elections (the Condorcet
    /// denominator excludes elections without a Condorcet winner).
    pub rates: BTreeMap<String, FlawRate>,
    /// Mean winner's vote share among majoritarian failures, split by the
    /// truncation classification.
    pub mean_failure_share_truncated: Option<MeanShare>,
    pub mean_failure_share_non_truncated: Option<MeanShare>,
    /// The five lowest winner's vote shares in each class: (election, share).
    pub bottom_truncated: Vec<(String, ShareReport)>,
    pub bottom_non_truncated: Vec<(String, ShareReport)>,
}

impl CorpusSummary {
    /// A one-election summary, for rendering a single report in CSV shape.
    pub fn from_single(report: AuditReport) -> CorpusSummary {
        CorpusSummary::from_reports(vec![report], Vec::new())
    }

    fn from_reports(reports: Vec<AuditReport>, errors: Vec<(PathBuf, String)>) -> CorpusSummary {
        let mut rates: BTreeMap<String, FlawRate> = FlawKind::ALL
            .iter()
            .map(|k| (k.name().to_string(), FlawRate::default()))
            .collect();
        for report in &reports {
            for kind in FlawKind::ALL {
                let rate = rates.get_mut(kind.name()).expect("all kinds present");
                match report.flag(kind) {
                    FlagState::Fail => {
                        rate.failures += 1;
                        rate.applicable += 1;
                    }
                    FlagState::Pass => rate.applicable += 1,
                    FlagState::NotApplicable => {}
                }
            }
        }

        let share_of = |r: &AuditReport| VoteShare {
            numerator: r.winners_vote_share.numerator,
            denominator: r.winners_vote_share.denominator,
        };
        let failures = |truncated: bool| -> Vec<VoteShare> {
            reports
                .iter()
                .filter(|r| {
                    r.truncated == truncated && r.flag(FlawKind::Majoritarian) == FlagState::Fail
                })
                .map(&share_of)
                .collect()
        };
        let bottom = |truncated: bool| -> Vec<(String, ShareReport)> {
            let mut class: Vec<&AuditReport> =
                reports.iter().filter(|r| r.truncated == truncated).collect();
            // exact fraction order: a/b < c/d ⇔ a·d < c·b
            class.sort_by(|x, y| {
                let (a, b) = (
                    x.winners_vote_share.numerator as u128,
                    x.winners_vote_share.denominator.max(1) as u128,
                );
                let (c, d) = (
                    y.winners_vote_share.numerator as u128,
                    y.winners_vote_share.denominator.max(1) as u128,
                );
                (a * d).cmp(&(c * b)).then_with(|| x.election_id.cmp(&y.election_id))
            });
            class
                .into_iter()
                .take(5)
                .map(|r| (r.election_id.clone(), r.winners_vote_share.clone()))
                .collect()
        };

        CorpusSummary {
            rates,
            mean_failure_share_truncated: mean_share(&failures(true)),
            mean_failure_share_non_truncated: mean_share(&failures(false)),
            bottom_truncated: bottom(true),
            bottom_non_truncated: bottom(false),
            reports,
            errors,
        }
    }

    /// Corpus summary as CSV: one row per election, then rate and
    /// statistics rows, then the bottom-five vote-share tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("election_id,candidate_count,ballots_cast,truncated,winner,winner_share,majority_candidate");
        for kind in FlawKind::ALL {
            out.push(',');
            out.push_str(kind.name());
        }
        out.push_str(",no_condorcet_winner\n");
        for r in &self.reports {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                r.election_id,
                r.candidate_count,
                r.ballots_cast,
                r.truncated,
                r.winner,
                r.winners_vote_share.percent,
                r.majority_candidate,
            ));
            for kind in FlawKind::ALL {
                out.push(',');
                out.push_str(&r.flag(kind).to_string());
            }
            out.push_str(&format!(",{}\n", r.no_condorcet_winner));
        }
        out.push_str("RATES,,,,,,");
        for kind in FlawKind::ALL {
            let rate = &self.rates[kind.name()];
            if rate.applicable == 0 {
                out.push_str(",na");
            } else {
                out.push_str(&format!(",{}/{}", rate.failures, rate.applicable));
            }
        }
        out.push_str(",\n");
        let mean = |m: &Option<MeanShare>| {
            m.map(|m| m.display_percent()).unwrap_or_else(|| "na".into())
        };
        out.push_str(&format!(
            "MEAN_FAILURE_SHARE_TRUNCATED,{}\n",
            mean(&self.mean_failure_share_truncated)
        ));
        out.push_str(&format!(
            "MEAN_FAILURE_SHARE_NON_TRUNCATED,{}\n",
            mean(&self.mean_failure_share_non_truncated)
        ));
        for (label, rows) in [
            ("BOTTOM_TRUNCATED", &self.bottom_truncated),
            ("BOTTOM_NON_TRUNCATED", &self.bottom_non_truncated),
        ] {
            for (election, share) in rows {
                out.push_str(&format!("{label},{election},{}\n", share.percent));
            }
        }
        out
    }
}

fn corpus_paths(dir: &Path) -> Result<Vec<PathBuf>, AuditError> {
    let entries = std::fs::read_dir(dir).map_err(|source| AuditError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    Ok(paths)
}

fn fold_audits(
    audits: Vec<(PathBuf, Result<AuditReport, AuditError>)>,
) -> CorpusSummary {
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for (path, result) in audits {
        match result {
            Ok(report) => reports.push(report),
            Err(e) => errors.push((path, e.to_string())),
        }
    }
    reports.sort_by(|a, b| a.election_id.cmp(&b.election_id));
    CorpusSummary::from_reports(reports, errors)
}

/// Audits every `*.csv` file in a directory sequentially.
pub fn audit_corpus_seq(dir: &Path, options: &AuditOptions) -> Result<CorpusSummary, AuditError> {
    let audits = corpus_paths(dir)?
        .into_iter()
        .map(|p| {
            let r = audit_file(&p, options);
            (p, r)
        })
        .collect();
    Ok(fold_audits(audits))
}

/// Audits every `*.csv` file in a directory; elections run in parallel when
/// the `parallel` feature is enabled. The summary is identical either way.
#[cfg(feature = "parallel")]
pub fn audit_corpus(dir: &Path, options: &AuditOptions) -> Result<CorpusSummary, AuditError> {
    use rayon::prelude::*;
    let audits = corpus_paths(dir)?
        .into_par_iter()
        .map(|p| {
            let r = audit_file(&p, options);
            (p, r)
        })
        .collect();
    Ok(fold_audits(audits))
}

#[cfg(not(feature = "parallel"))]
pub fn audit_corpus(dir: &Path, options: &AuditOptions) -> Result<CorpusSummary, AuditError> {
    audit_corpus_seq(dir, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_share_is_exact() {
        let shares = [VoteShare::new(1, 2), VoteShare::new(1, 4)];
        let m = mean_share(&shares).unwrap();
        assert_eq!((m.numerator, m.denominator), (3, 8));
        assert_eq!(m.display_percent(), "37.5%");
        assert!(mean_share(&[]).is_none());
    }

    #[test]
    fn flag_states_render() {
        assert_eq!(FlagState::Pass.to_string(), "pass");
        assert_eq!(FlagState::Fail.to_string(), "fail");
        assert_eq!(FlagState::NotApplicable.to_string(), "na");
    }
}
