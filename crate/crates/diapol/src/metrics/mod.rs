//! Goal-conditioned evaluation: per-episode scores, seeded multi-run
//! aggregation, and report rendering.
//!
//! Scoring works on the raw episode log and the goal alone, never on policy
//! internals:
//!
//! - `recall`  = requested slots the system informed / requested slots
//! - `precision` = informed-and-requested / all (domain, slot) informs emitted
//! - `f1` = harmonic mean (0 when both are 0)
//! - `match` = average over goal domains: for a domain with a booking
//!   requirement, the final booking must be grounded in an entity satisfying
//!   all its constraints; for a request-only domain, every requested slot
//!   must have been answered while offering a constraint-consistent entity.
//! - `success` = every requested slot consistently answered and every
//!   required booking consistent, within the turn budget. This is exactly
//!   the rule-user's completion condition, and every evaluation episode
//!   cross-validates the two.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::SeedRng;
use crate::dialogue::UserGoal;
use crate::env::{run_episode, sample_goal, Agent, Env, EpisodeLog, Termination};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub match_rate: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub success: bool,
    pub turns: usize,
    pub reward: f64,
}

fn split_atom(name: &str) -> Option<(&str, &str, &str)> {
    let mut it = name.splitn(3, '-');
    Some((it.next()?, it.next()?, it.next()?))
}

fn values_consistent(goal: &UserGoal, domain: &str, values: &BTreeMap<String, String>) -> bool {
    goal.constraints
        .get(domain)
        .map(|cs| cs.iter().all(|(s, v)| values.get(s) == Some(v)))
        .unwrap_or(true)
}

/// Score one finished episode against a goal.
pub fn score_episode(log: &EpisodeLog, goal: &UserGoal) -> Result<EpisodeScore> {
    if log.goal.domains() != goal.domains() {
        return Err(Error::Env(format!(
            "goal domains {:?} do not match the log's {:?}",
            goal.domains(),
            log.goal.domains()
        )));
    }

    let requested: BTreeSet<(String, String)> = goal
        .requests
        .iter()
        .flat_map(|(d, slots)| slots.iter().map(move |s| (d.clone(), s.clone())))
        .collect();

    // every (domain, slot) the system informed, and the consistently
    // grounded subset
    let mut informed: BTreeSet<(String, String)> = BTreeSet::new();
    let mut informed_consistent: BTreeSet<(String, String)> = BTreeSet::new();
    for turn in &log.turns {
        for name in &turn.system_action {
            let Some((d, act, s)) = split_atom(name) else { continue };
            if act != "inform" {
                continue;
            }
            informed.insert((d.to_string(), s.to_string()));
            let grounded_ok = turn
                .offers
                .iter()
                .find(|o| o.domain == d)
                .map(|o| values_consistent(goal, d, &o.values))
                .unwrap_or(false);
            if grounded_ok {
                informed_consistent.insert((d.to_string(), s.to_string()));
            }
        }
    }

    let hits = requested.intersection(&informed).count();
    let recall = if requested.is_empty() { 0.0 } else { hits as f64 / requested.len() as f64 };
    let precision = if informed.is_empty() { 0.0 } else { hits as f64 / informed.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    // final booking per domain
    let mut final_booking: BTreeMap<String, Option<BTreeMap<String, String>>> = BTreeMap::new();
    for turn in &log.turns {
        for b in &turn.bookings {
            final_booking.insert(b.domain.clone(), b.values.clone());
        }
    }
    let booking_ok = |d: &str| -> bool {
        matches!(final_booking.get(d), Some(Some(values)) if values_consistent(goal, d, values))
    };
    let requests_ok = |d: &str| -> bool {
        goal.requests
            .get(d)
            .map(|slots| {
                slots
                    .iter()
                    .all(|s| informed_consistent.contains(&(d.to_string(), s.clone())))
            })
            .unwrap_or(true)
    };

    let domains = goal.domains();
    let match_rate = if domains.is_empty() {
        1.0
    } else {
        let sum: f64 = domains
            .iter()
            .map(|d| {
                let ok = if goal.bookings.contains(d) { booking_ok(d) } else { requests_ok(d) };
                if ok {
                    1.0
                } else {
                    0.0
                }
            })
            .sum();
        sum / domains.len() as f64
    };

    let success = domains.iter().all(|d| requests_ok(d))
        && goal.bookings.iter().all(|d| booking_ok(d));

    Ok(EpisodeScore {
        match_rate,
        precision,
        recall,
        f1,
        success,
        turns: log.turn_count,
        reward: log.reward,
    })
}

/// Mean metrics over one seed's episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub episodes: usize,
    pub turn: f64,
    pub match_rate: f64,
    pub recall: f64,
    pub f1: f64,
    pub success_rate: f64,
    pub reward: f64,
}

fn mean_scores(seed: u64, scores: &[EpisodeScore]) -> SeedReport {
    let n = scores.len().max(1) as f64;
    SeedReport {
        seed,
        episodes: scores.len(),
        turn: scores.iter().map(|s| s.turns as f64).sum::<f64>() / n,
        match_rate: scores.iter().map(|s| s.match_rate).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        success_rate: scores.iter().map(|s| f64::from(u8::from(s.success))).sum::<f64>() / n,
        reward: scores.iter().map(|s| s.reward).sum::<f64>() / n,
    }
}

/// Aggregate over seeds, with pooled bootstrap confidence intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub per_seed: Vec<SeedReport>,
    pub mean: SeedReport,
    /// 95% bootstrap interval of the pooled per-episode success indicator.
    pub success_ci: (f64, f64),
    /// 95% bootstrap interval of the pooled episode turn count.
    pub turn_ci: (f64, f64),
}

/// Run `n_episodes` seeded episodes per seed and aggregate the scores.
/// Episode `i` of seed `s` draws its goal from RNG stream `i` of `s`, so
/// reports are reproducible and identical across execution modes.
pub fn evaluate_policy(
    agent: &(dyn Agent + Sync),
    env: &Env,
    n_episodes: usize,
    seeds: &[u64],
    mode: ExecMode,
) -> Result<AggregateReport> {
    if n_episodes == 0 || seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one episode and one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut pooled: Vec<EpisodeScore> = Vec::with_capacity(seeds.len() * n_episodes);
    for &seed in seeds {
        let scores: Vec<Result<EpisodeScore>> = map_indexed(mode, n_episodes, |i| {
            let mut rng = SeedRng::stream(seed, i as u64);
            let goal = sample_goal(&mut rng, &env.world)?;
            let log = run_episode(agent, env, goal.clone())?;
            let score = score_episode(&log, &goal)?;
            // the env's termination flag and the goal checker must agree
            if score.success != (log.termination == Termination::Success) {
                return Err(Error::Env(format!(
                    "success flag mismatch on seed {seed} episode {i}: checker {} vs env {:?}",
                    score.success, log.termination
                )));
            }
            Ok(score)
        });
        let scores: Vec<EpisodeScore> = scores.into_iter().collect::<Result<_>>()?;
        per_seed.push(mean_scores(seed, &scores));
        pooled.extend(scores);
    }
    let mean = {
        let mut m = mean_scores(0, &pooled);
        m.seed = 0;
        m
    };
    let ci_seed = seeds.iter().fold(0x5eed_c1a5u64, |acc, &s| acc.rotate_left(7) ^ s);
    let success_ci = bootstrap_ci(
        &pooled.iter().map(|s| f64::from(u8::from(s.success))).collect::<Vec<_>>(),
        ci_seed,
    );
    let turn_ci = bootstrap_ci(
        &pooled.iter().map(|s| s.turns as f64).collect::<Vec<_>>(),
        ci_seed.wrapping_add(1),
    );
    Ok(AggregateReport { per_seed, mean, success_ci, turn_ci })
}

/// Seeded percentile bootstrap (1000 resamples) of the mean.
fn bootstrap_ci(values: &[f64], seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mut rng = SeedRng::from_seed(seed);
    let mut means: Vec<f64> = (0..1000)
        .map(|_| {
            let total: f64 = (0..values.len()).map(|_| values[rng.index(values.len())]).sum();
            total / values.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    (means[25], means[974])
}

/// Render reports as CSV plus an aligned text table (Turn, Match, Rec, F1,
/// Success column order). The CSV has one row per seed and a `mean` row per
/// policy; floats print in shortest round-trip form.
pub fn render_report(reports: &[(String, AggregateReport)]) -> (String, String) {
    let mut csv = String::from("policy,seed,episodes,turn,match,recall,f1,success_rate,reward\n");
    for (name, report) in reports {
        for row in &report.per_seed {
            let _ = writeln!(
                csv,
                "{name},{},{},{},{},{},{},{},{}",
                row.seed, row.episodes, row.turn, row.match_rate, row.recall, row.f1,
                row.success_rate, row.reward
            );
        }
        let m = &report.mean;
        let _ = writeln!(
            csv,
            "{name},mean,{},{},{},{},{},{},{}",
            m.episodes, m.turn, m.match_rate, m.recall, m.f1, m.success_rate, m.reward
        );
    }

    let mut text = format!(
        "{:<16} {:>7} {:>7} {:>7} {:>7} {:>9}\n",
        "policy", "Turn", "Match", "Rec", "F1", "Success"
    );
    for (name, report) in reports {
        let m = &report.mean;
        let _ = writeln!(
            text,
            "{:<16} {:>7.2} {:>7.3} {:>7.3} {:>7.3} {:>8.1}%  (ci95 {:.1}%..{:.1}%)",
            name,
            m.turn,
            m.match_rate,
            m.recall,
            m.f1,
            100.0 * m.success_rate,
            100.0 * report.success_ci.0,
            100.0 * report.success_ci.1,
        );
    }
    (csv, text)
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::dialogue::{ActionSet, AtomId, DialogueState};
    use crate::env::{ExpertPolicy, TrackerState};

    struct EmptyAgent;
    impl Agent for EmptyAgent {
        fn act(&self, _s: &DialogueState, _t: &TrackerState, _e: &Env) -> Result<ActionSet> {
            Ok(ActionSet::empty())
        }
    }

    /// Emits 0-3 uniformly random atoms per turn; exercises spray informs,
    /// premature bookings and wrong-entity answers.
    struct RandomAgent {
        rng: RefCell<SeedRng>,
    }
    impl Agent for RandomAgent {
        fn act(&self, _s: &DialogueState, _t: &TrackerState, env: &Env) -> Result<ActionSet> {
            let mut rng = self.rng.borrow_mut();
            let k = rng.index(4);
            Ok(ActionSet::from_atoms(
                (0..k).map(|_| AtomId(rng.index(env.space.num_atoms()))),
            ))
        }
    }

    #[test]
    fn expert_scores_perfectly() {
        let env = Env::default_synthetic();
        let mut rng = SeedRng::from_seed(1);
        let goal = sample_goal(&mut rng, &env.world).unwrap();
        let log = run_episode(&ExpertPolicy, &env, goal.clone()).unwrap();
        let score = score_episode(&log, &goal).unwrap();
        assert!(score.success);
        assert_eq!(score.recall, 1.0);
        assert_eq!(score.match_rate, 1.0);
    }

    #[test]
    fn silent_system_scores_zero() {
        let env = Env::default_synthetic();
        let mut rng = SeedRng::from_seed(2);
        let goal = sample_goal(&mut rng, &env.world).unwrap();
        let log = run_episode(&EmptyAgent, &env, goal.clone()).unwrap();
        let score = score_episode(&log, &goal).unwrap();
        assert!(!score.success);
        assert_eq!(score.recall, 0.0);
        assert_eq!(score.precision, 0.0);
        assert_eq!(score.f1, 0.0);
        assert_eq!(score.turns, 40);
    }

    #[test]
    fn goal_mismatch_is_an_error() {
        let env = Env::default_synthetic();
        let mut rng = SeedRng::from_seed(3);
        let goal = sample_goal(&mut rng, &env.world).unwrap();
        let other = loop {
            let g = sample_goal(&mut rng, &env.world).unwrap();
            if g.domains() != goal.domains() {
                break g;
            }
        };
        let log = run_episode(&ExpertPolicy, &env, goal).unwrap();
        assert!(score_episode(&log, &other).is_err());
    }

    /// Brute-force re-derivation of every score field straight from the raw
    /// turn records, written without reusing `score_episode` internals.
    fn brute_force(log: &EpisodeLog, goal: &UserGoal) -> EpisodeScore {
        let mut requested: Vec<(String, String)> = Vec::new();
        for (d, slots) in &goal.requests {
            for s in slots {
                requested.push((d.clone(), s.clone()));
            }
        }
        let consistent = |d: &str, values: &BTreeMap<String, String>| -> bool {
            match goal.constraints.get(d) {
                None => true,
                Some(cs) => cs.iter().all(|(s, v)| values.get(s) == Some(v)),
            }
        };

        let mut informed: Vec<(String, String)> = Vec::new();
        let mut answered: Vec<(String, String)> = Vec::new();
        for t in &log.turns {
            for a in &t.system_action {
                let parts: Vec<&str> = a.splitn(3, '-').collect();
                if parts.len() == 3 && parts[1] == "inform" {
                    let key = (parts[0].to_string(), parts[2].to_string());
                    if !informed.contains(&key) {
                        informed.push(key.clone());
                    }
                    let ok = t
                        .offers
                        .iter()
                        .any(|o| o.domain == parts[0] && consistent(parts[0], &o.values));
                    if ok && !answered.contains(&key) {
                        answered.push(key);
                    }
                }
            }
        }

        let hits = requested.iter().filter(|r| informed.contains(r)).count();
        let recall = if requested.is_empty() { 0.0 } else { hits as f64 / requested.len() as f64 };
        let precision = if informed.is_empty() { 0.0 } else { hits as f64 / informed.len() as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };

        let mut last_booking: BTreeMap<String, Option<BTreeMap<String, String>>> = BTreeMap::new();
        for t in &log.turns {
            for b in &t.bookings {
                last_booking.insert(b.domain.clone(), b.values.clone());
            }
        }
        let domain_ok = |d: &String| -> bool {
            if goal.bookings.contains(d) {
                match last_booking.get(d) {
                    Some(Some(v)) => consistent(d, v),
                    _ => false,
                }
            } else {
                requested
                    .iter()
                    .filter(|(rd, _)| rd == d)
                    .all(|r| answered.contains(r))
            }
        };
        let domains = goal.domains();
        let match_rate = domains.iter().filter(|d| domain_ok(d)).count() as f64
            / domains.len().max(1) as f64;
        let success = domains.iter().all(domain_ok)
            && requested.iter().all(|r| answered.contains(r));

        EpisodeScore {
            match_rate,
            precision,
            recall,
            f1,
            success,
            turns: log.turn_count,
            reward: log.reward,
        }
    }

    #[test]
    fn scores_match_brute_force_checker_on_200_episodes() {
        let env = Env::default_synthetic();
        for i in 0..200u64 {
            let mut rng = SeedRng::stream(400, i);
            let goal = sample_goal(&mut rng, &env.world).unwrap();
            let log = match i % 3 {
                0 => run_episode(&ExpertPolicy, &env, goal.clone()).unwrap(),
                1 => run_episode(&EmptyAgent, &env, goal.clone()).unwrap(),
                _ => run_episode(
                    &RandomAgent { rng: RefCell::new(SeedRng::stream(401, i)) },
                    &env,
                    goal.clone(),
                )
                .unwrap(),
            };
            let got = score_episode(&log, &goal).unwrap();
            let want = brute_force(&log, &goal);
            assert_eq!(got, want, "episode {i}");
        }
    }

    #[test]
    fn success_implies_full_recall_and_match() {
        let env = Env::default_synthetic();
        for i in 0..200u64 {
            let mut rng = SeedRng::stream(402, i);
            let goal = sample_goal(&mut rng, &env.world).unwrap();
            let agent = RandomAgent { rng: RefCell::new(SeedRng::stream(403, i)) };
            let log = run_episode(&agent, &env, goal.clone()).unwrap();
            let s = score_episode(&log, &goal).unwrap();
            if s.success {
                assert_eq!(s.recall, 1.0);
                assert_eq!(s.match_rate, 1.0);
                assert!(s.turns <= env.max_turns);
            }
            // f1 extremes
            if s.f1 == 1.0 {
                assert_eq!((s.precision, s.recall), (1.0, 1.0));
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_expert_near_perfect() {
        let env = Env::default_synthetic();
        let a = evaluate_policy(&ExpertPolicy, &env, 50, &[1, 2], ExecMode::Parallel).unwrap();
        let b = evaluate_policy(&ExpertPolicy, &env, 50, &[1, 2], ExecMode::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.mean.success_rate >= 0.98);
        assert_eq!(a.per_seed.len(), 2);
    }

    #[test]
    fn empty_policy_times_out_everywhere() {
        let env = Env::default_synthetic();
        let r = evaluate_policy(&EmptyAgent, &env, 20, &[9], ExecMode::Sequential).unwrap();
        assert_eq!(r.mean.success_rate, 0.0);
        assert_eq!(r.mean.turn, 40.0);
    }

    #[test]
    fn report_rendering_and_csv_round_trip() {
        let env = Env::default_synthetic();
        let rep = evaluate_policy(&ExpertPolicy, &env, 10, &[5, 6], ExecMode::Sequential).unwrap();
        let (csv, text) = render_report(&[("expert".to_string(), rep.clone())]);

        let header = csv.lines().next().unwrap();
        assert_eq!(header, "policy,seed,episodes,turn,match,recall,f1,success_rate,reward");
        // one row per seed plus the mean row
        assert_eq!(csv.lines().count(), 1 + 2 + 1);
        assert!(text.contains("Turn") && text.contains("Success"));

        // values round-trip exactly through the CSV text
        let mean_line = csv.lines().last().unwrap();
        let fields: Vec<&str> = mean_line.split(',').collect();
        assert_eq!(fields[1], "mean");
        assert_eq!(fields[3].parse::<f64>().unwrap(), rep.mean.turn);
        assert_eq!(fields[7].parse::<f64>().unwrap(), rep.mean.success_rate);
    }
}
