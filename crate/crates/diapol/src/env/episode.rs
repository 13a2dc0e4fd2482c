//! The episode loop, goal sampling, and expert corpus generation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::SeedRng;
use crate::dialogue::{ActionSet, ActionSpace, Corpus, CorpusEntry, DialogueState, Split, StateLayout, UserGoal};
use crate::env::agenda::{SystemEffects, UserAct, UserAgenda};
use crate::env::expert::ExpertPolicy;
use crate::env::schema::{derive_action_space, ActKind, ParsedAtom, World};
use crate::env::tracker::{derive_layout, encode_state, TrackerState};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};

/// Default turn budget per dialogue.
pub const DEFAULT_MAX_TURNS: usize = 40;

/// A world wired up for running episodes: derived action space, parsed
/// atoms, state layout, and the episode parameters.
#[derive(Clone, Debug)]
pub struct Env {
    pub world: World,
    pub space: ActionSpace,
    pub parsed: Vec<ParsedAtom>,
    pub layout: StateLayout,
    pub max_turns: usize,
    pub informs_per_turn: usize,
}

impl Env {
    pub fn new(world: World) -> Result<Self> {
        world.validate()?;
        let (space, parsed) = derive_action_space(&world);
        let layout = derive_layout(&world, space.num_atoms());
        layout.validate()?;
        Ok(Env { world, space, parsed, layout, max_turns: DEFAULT_MAX_TURNS, informs_per_turn: 2 })
    }

    pub fn default_synthetic() -> Self {
        Env::new(World::default_synthetic()).expect("built-in world is valid")
    }

    pub fn state_dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn num_atoms(&self) -> usize {
        self.space.num_atoms()
    }
}

/// A system-side decision maker. Learned policies read the encoded state;
/// the scripted expert reads the tracker.
pub trait Agent {
    fn act(&self, state: &DialogueState, tracker: &TrackerState, env: &Env) -> Result<ActionSet>;
}

/// Sample a goal: 1-3 domains; per domain 1-3 constraints copied from a
/// concrete entity (so at least one entity always matches), 1-3 requested
/// slots, and a booking wish for bookable domains.
pub fn sample_goal(rng: &mut SeedRng, world: &World) -> Result<UserGoal> {
    if world.domains.is_empty() {
        return Err(Error::Env("cannot sample a goal from an empty schema".into()));
    }
    let mut goal = UserGoal::default();
    let n_domains = 1 + rng.index(world.domains.len().min(3));
    let mut order: Vec<usize> = (0..world.domains.len()).collect();
    rng.shuffle(&mut order);
    for &di in order.iter().take(n_domains) {
        let dom = &world.domains[di];
        let entities = &world.entities[&dom.name];
        let entity = &entities[rng.index(entities.len())];

        let n_constraints = 1 + rng.index(dom.informable.len().min(3));
        let mut slot_order: Vec<usize> = (0..dom.informable.len()).collect();
        rng.shuffle(&mut slot_order);
        let constraints: BTreeMap<String, String> = slot_order
            .iter()
            .take(n_constraints)
            .map(|&si| {
                let slot = &dom.informable[si].slot;
                (slot.clone(), entity.informable[slot].clone())
            })
            .collect();
        goal.constraints.insert(dom.name.clone(), constraints);

        let n_requests = 1 + rng.index(dom.requestable.len().min(3));
        let mut req_order: Vec<usize> = (0..dom.requestable.len()).collect();
        rng.shuffle(&mut req_order);
        goal.requests.insert(
            dom.name.clone(),
            req_order.iter().take(n_requests).map(|&ri| dom.requestable[ri].clone()).collect(),
        );

        if dom.bookable && rng.bernoulli(0.7) {
            goal.bookings.insert(dom.name.clone());
        }
    }
    goal.validate()?;
    Ok(goal)
}

/// An entity the system grounded its informs in for one domain this turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offer {
    pub domain: String,
    pub entity: usize,
    pub values: BTreeMap<String, String>,
}

/// A booking attempt; `entity`/`values` are None when no entity matched the
/// belief at booking time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Booking {
    pub domain: String,
    pub entity: Option<usize>,
    pub values: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// The state vector the policy saw.
    pub state: Vec<u8>,
    /// Atom names the system emitted.
    pub system_action: Vec<String>,
    /// The user's reply (empty when the goal completed this turn).
    pub user_response: Vec<UserAct>,
    pub offers: Vec<Offer>,
    pub bookings: Vec<Booking>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Success,
    FailureTimeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub goal: UserGoal,
    pub opening_user_acts: Vec<UserAct>,
    pub turns: Vec<TurnRecord>,
    pub termination: Termination,
    pub turn_count: usize,
    pub reward: f64,
}

impl EpisodeLog {
    pub fn success(&self) -> bool {
        self.termination == Termination::Success
    }

    /// The closed-form reward: -1 per elapsed turn, plus 2T on success and
    /// -T on timeout.
    pub fn closed_form_reward(turn_count: usize, success: bool, max_turns: usize) -> f64 {
        let bonus = if success { 2.0 * max_turns as f64 } else { -(max_turns as f64) };
        -(turn_count as f64) + bonus
    }
}

/// Ground a system action set against the database given the current belief:
/// informs speak about the first entity matching the domain belief; a book
/// atom books that entity (failing when nothing matches).
fn ground_action(env: &Env, tracker: &TrackerState, action: &ActionSet) -> (SystemEffects, Vec<Offer>, Vec<Booking>, Vec<String>) {
    let mut effects = SystemEffects::default();
    let mut offers: Vec<Offer> = Vec::new();
    let mut bookings = Vec::new();
    let mut booked_ok = Vec::new();

    for atom in action.iter() {
        let p = &env.parsed[atom.index()];
        let belief = tracker.domain_belief(&p.domain);
        let matches = env.world.filter(&p.domain, &belief);
        match p.kind {
            ActKind::Inform => {
                let Some(entity) = matches.first() else { continue };
                let value = entity.requestable.get(&p.slot).cloned().unwrap_or_default();
                effects.informed.push((p.domain.clone(), p.slot.clone(), value));
                if !offers.iter().any(|o: &Offer| o.domain == p.domain) {
                    offers.push(Offer {
                        domain: p.domain.clone(),
                        entity: entity.id,
                        values: entity.informable.clone(),
                    });
                    effects.offered.push((p.domain.clone(), entity.informable.clone()));
                }
            }
            ActKind::Book => match matches.first() {
                Some(entity) => {
                    effects.booked.push((p.domain.clone(), Some(entity.informable.clone())));
                    bookings.push(Booking {
                        domain: p.domain.clone(),
                        entity: Some(entity.id),
                        values: Some(entity.informable.clone()),
                    });
                    booked_ok.push(p.domain.clone());
                }
                None => {
                    effects.booked.push((p.domain.clone(), None));
                    bookings.push(Booking { domain: p.domain.clone(), entity: None, values: None });
                }
            },
            ActKind::Request => {} // requests to the user need no grounding
        }
    }
    (effects, offers, bookings, booked_ok)
}

/// Run one dialogue between `agent` and the rule user on a fixed goal.
/// Deterministic given (agent parameters, goal).
pub fn run_episode(agent: &dyn Agent, env: &Env, goal: UserGoal) -> Result<EpisodeLog> {
    let mut agenda = UserAgenda::new(goal.clone(), env.informs_per_turn);
    let mut tracker = TrackerState::fresh();
    let mut user_acts = agenda.emit();
    let opening = user_acts.clone();
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut termination = Termination::FailureTimeout;

    for _ in 0..env.max_turns {
        tracker.observe_user(&user_acts);
        let state = encode_state(&tracker, &env.world, &env.layout);
        let action = agent.act(&state, &tracker, env)?;
        for atom in action.iter() {
            if atom.index() >= env.space.num_atoms() {
                return Err(Error::UnknownAction(format!("policy emitted atom id {}", atom.index())));
            }
        }
        let (effects, offers, bookings, booked_ok) = ground_action(env, &tracker, &action);
        tracker.observe_system(&action, &effects.informed, &booked_ok);
        let (response, done) = agenda.step(&effects);
        turns.push(TurnRecord {
            state: state.bits().to_vec(),
            system_action: action.names(&env.space).map(str::to_string).collect(),
            user_response: response.clone(),
            offers,
            bookings,
        });
        if done {
            termination = Termination::Success;
            break;
        }
        user_acts = response;
    }

    let turn_count = turns.len();
    let reward = EpisodeLog::closed_form_reward(
        turn_count,
        termination == Termination::Success,
        env.max_turns,
    );
    Ok(EpisodeLog { goal, opening_user_acts: opening, turns, termination, turn_count, reward })
}

/// Sample a goal, then run.
pub fn run_sampled_episode(agent: &dyn Agent, env: &Env, rng: &mut SeedRng) -> Result<EpisodeLog> {
    let goal = sample_goal(rng, &env.world)?;
    run_episode(agent, env, goal)
}

/// Generate an expert self-play corpus of `n_dialogues` dialogues.
///
/// Dialogue `i` draws from RNG stream `i` of `seed`, so the corpus is
/// bit-identical across reruns and across sequential/parallel execution.
/// Splits are assigned by dialogue index: the first 80% train, the next 10%
/// val, the rest test (floor rounding at each boundary).
pub fn generate_corpus(env: &Env, n_dialogues: usize, seed: u64, mode: ExecMode) -> Result<Corpus> {
    if n_dialogues == 0 {
        return Err(Error::Env("need at least one dialogue".into()));
    }
    let train_end = n_dialogues * 8 / 10;
    let val_end = n_dialogues * 9 / 10;
    let per_dialogue: Vec<Result<Vec<CorpusEntry>>> = map_indexed(mode, n_dialogues, |i| {
        let mut rng = SeedRng::stream(seed, i as u64);
        let log = run_sampled_episode(&ExpertPolicy, env, &mut rng)?;
        let split = if i < train_end {
            Split::Train
        } else if i < val_end {
            Split::Val
        } else {
            Split::Test
        };
        log.turns
            .iter()
            .map(|t| {
                Ok(CorpusEntry {
                    split,
                    dialogue: Some(i as u64),
                    state: DialogueState::from_bits(t.state.clone())?,
                    actions: t.system_action.clone(),
                })
            })
            .collect()
    });
    let mut entries = Vec::new();
    for d in per_dialogue {
        entries.extend(d?);
    }
    Ok(Corpus { entries })
}

/// Append episode logs to a JSONL file, one episode per line.
pub fn write_episode_logs(path: &Path, logs: &[EpisodeLog]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for log in logs {
        serde_json::to_writer(&mut w, log)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_logs(path: &Path) -> Result<Vec<EpisodeLog>> {
    let r = BufReader::new(File::open(path)?);
    let mut logs = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        logs.push(serde_json::from_str(&line)?);
    }
    Ok(logs)
}
