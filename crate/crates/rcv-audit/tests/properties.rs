//! Randomized invariants over arbitrary small profiles (proptest-generated,
//! independent of the seeded generator used by the oracle).

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use rcv_audit::ingest::{parse_cvr, serialize_profile, SanitationPolicy};
use rcv_audit::{
    pairwise, reduce_to_n, tabulate, Candidate, CandidateId, EliminationPolicy,
    PreferenceProfile, Ranking, VoteShare,
};

const NAMES: [&str; 4] = ["A", "B", "C", "D"];

/// A profile over `n` candidates with 1..=8 ballot types: each type is a
/// distinct non-empty prefix of a permutation, with count 1..=50.
fn arb_profile(n: usize) -> impl Strategy<Value = PreferenceProfile> {
    let ranking = proptest::sample::subsequence(NAMES[..n].to_vec(), 1..=n)
        .prop_shuffle()
        .prop_map(|ids| Ranking::of(&ids));
    proptest::collection::btree_map(ranking, 1u64..=50, 1..=8).prop_map(move |ballots| {
        let candidates = NAMES[..n].iter().map(|s| Candidate::new(*s)).collect();
        PreferenceProfile::new(candidates, ballots, None).unwrap()
    })
}

fn any_profile() -> impl Strategy<Value = PreferenceProfile> {
    (2usize..=4).prop_flat_map(arb_profile)
}

fn policy() -> EliminationPolicy {
    EliminationPolicy::default()
}

proptest! {
    #[test]
    fn conservation_per_round(profile in any_profile()) {
        let rec = tabulate(&profile, &policy()).unwrap();
        let mut exhausted = 0;
        for round in &rec.rounds {
            exhausted += round.exhausted_this_round;
            let counted: u64 = round.tallies.values().sum();
            prop_assert_eq!(counted + exhausted, profile.ballots_cast());
        }
    }

    #[test]
    fn tallies_never_decrease_for_continuing_candidates(profile in any_profile()) {
        let rec = tabulate(&profile, &policy()).unwrap();
        for pair in rec.rounds.windows(2) {
            for (c, &t) in &pair[1].tallies {
                prop_assert!(t >= pair[0].tallies[c]);
            }
        }
    }

    #[test]
    fn relabeling_maps_winner_and_pairwise(profile in any_profile()) {
        let map: BTreeMap<CandidateId, CandidateId> = profile
            .candidate_ids()
            .iter()
            .map(|c| (c.clone(), CandidateId::new(format!("X{}", c))))
            .collect();
        let relabeled = profile.relabeled(&map);
        let rec = tabulate(&profile, &policy()).unwrap();
        prop_assert_eq!(
            tabulate(&relabeled, &policy()).unwrap().winner,
            map[&rec.winner].clone()
        );
        let (m, rm) = (pairwise(&profile), pairwise(&relabeled));
        for a in profile.candidate_ids().iter() {
            for b in profile.candidate_ids().iter() {
                prop_assert_eq!(m.prefers(a, b), rm.prefers(&map[a], &map[b]));
            }
        }
    }

    #[test]
    fn reduce_to_two_preserves_winner(profile in any_profile()) {
        let winner = tabulate(&profile, &policy()).unwrap().winner;
        let reduced = reduce_to_n(&profile, 2, &policy()).unwrap();
        prop_assert_eq!(tabulate(&reduced, &policy()).unwrap().winner, winner);
    }

    #[test]
    fn restrict_is_idempotent(profile in any_profile()) {
        let loser: CandidateId = {
            let winner = tabulate(&profile, &policy()).unwrap().winner;
            match profile.candidate_ids().iter().find(|c| **c != winner) {
                Some(c) => c.clone(),
                None => return Ok(()),
            }
        };
        let removed: BTreeSet<CandidateId> = [loser].into();
        // Ballots that ranked only the removed candidate disappear entirely,
        // so a second restriction with an empty set is the identity.
        if let Ok(once) = profile.restrict(&removed) {
            prop_assert_eq!(once.restrict(&BTreeSet::new()).unwrap(), once);
        }
    }

    #[test]
    fn serialize_parse_round_trip(profile in any_profile()) {
        let outcome = parse_cvr(&serialize_profile(&profile), &SanitationPolicy::default())
            .unwrap();
        prop_assert_eq!(outcome.profile, profile);
        prop_assert_eq!(outcome.discarded_ballots, 0);
    }

    #[test]
    fn percent_display_rounds_half_up(num in 0u64..=1_000_000, den in 1u64..=1_000_000) {
        prop_assume!(num <= den);
        let shown = VoteShare::new(num, den).display_percent();
        // Reference: permille via wide integer half-up rounding.
        let permille = (2u128 * 1000 * num as u128 + den as u128) / (2 * den as u128);
        prop_assert_eq!(shown, format!("{}.{}%", permille / 10, permille % 10));
    }
}
