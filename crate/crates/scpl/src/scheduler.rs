//! Scheduling policies: which enabled transition happens next.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::term::Sym;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    /// Consume the head of the queue from `sender`; `act` is its trace index.
    Input { sender: Sym, act: usize },
    /// Act: emit, consult the oracle, or reply from an intermediate state.
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub agent: Sym,
    pub mv: Move,
}

pub trait Scheduler {
    /// Picks one of `candidates` (never called with an empty slice).
    fn pick(&mut self, candidates: &[Candidate]) -> usize;
}

impl<S: Scheduler + ?Sized> Scheduler for Box<S> {
    fn pick(&mut self, candidates: &[Candidate]) -> usize {
        (**self).pick(candidates)
    }
}

/// Deterministic: lowest agent name first; for that agent inputs before
/// outputs, and among inputs the oldest act first.
#[derive(Clone, Copy, Debug, Default)]
pub struct Canonical;

impl Scheduler for Canonical {
    fn pick(&mut self, candidates: &[Candidate]) -> usize {
        let key = |c: &Candidate| {
            let (kind, age) = match &c.mv {
                Move::Input { act, .. } => (0, *act),
                Move::Output => (1, 0),
            };
            (c.agent.clone(), kind, age)
        };
        (0..candidates.len()).min_by_key(|&i| key(&candidates[i])).expect("nonempty")
    }
}

/// Uniform over enabled (agent, kind, sender) triples.
#[derive(Clone, Debug)]
pub struct RandomScheduler {
    rng: ChaCha8Rng,
}

impl RandomScheduler {
    pub fn new(seed: u64) -> Self {
        RandomScheduler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Scheduler for RandomScheduler {
    fn pick(&mut self, candidates: &[Candidate]) -> usize {
        self.rng.gen_range(0..candidates.len())
    }
}

/// Wraps a policy so that an agent that stays enabled is scheduled within
/// `bound` consecutive picks.
#[derive(Clone, Debug)]
pub struct Fair<S> {
    inner: S,
    bound: usize,
    waiting: HashMap<Sym, usize>,
}

impl<S: Scheduler> Fair<S> {
    pub fn new(inner: S, bound: usize) -> Self {
        Fair { inner, bound: bound.max(1), waiting: HashMap::new() }
    }
}

impl<S: Scheduler> Scheduler for Fair<S> {
    fn pick(&mut self, candidates: &[Candidate]) -> usize {
        // Agents that are no longer enabled stop accumulating waiting time.
        self.waiting.retain(|a, _| candidates.iter().any(|c| &c.agent == a));
        let overdue = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| self.waiting.get(&c.agent).copied().unwrap_or(0) + 1 >= self.bound)
            .max_by_key(|(i, c)| (self.waiting.get(&c.agent).copied().unwrap_or(0), std::cmp::Reverse(*i)))
            .map(|(i, _)| i);
        let chosen = overdue.unwrap_or_else(|| self.inner.pick(candidates));
        let agent = candidates[chosen].agent.clone();
        for c in candidates {
            *self.waiting.entry(c.agent.clone()).or_insert(0) += 1;
        }
        self.waiting.insert(agent, 0);
        chosen
    }
}

/// Follows an explicit list of agents, one per step (each agent's inputs
/// before its outputs); falls back to [`Canonical`] once the list is used up
/// or when the named agent has nothing to do.
#[derive(Clone, Debug, Default)]
pub struct Listed {
    agents: std::collections::VecDeque<Sym>,
}

impl Listed {
    pub fn new(agents: impl IntoIterator<Item = Sym>) -> Self {
        Listed { agents: agents.into_iter().collect() }
    }
}

impl Scheduler for Listed {
    fn pick(&mut self, candidates: &[Candidate]) -> usize {
        if let Some(next) = self.agents.pop_front() {
            let own: Vec<Candidate> = candidates.iter().filter(|c| c.agent == next).cloned().collect();
            if !own.is_empty() {
                let i = Canonical.pick(&own);
                return candidates.iter().position(|c| *c == own[i]).expect("present");
            }
        }
        Canonical.pick(candidates)
    }
}

/// Replays a recorded sequence of moves, falling back to [`Canonical`] when
/// the recorded move is not enabled or the record is used up.
#[derive(Clone, Debug, Default)]
pub struct Replay {
    moves: std::collections::VecDeque<Candidate>,
}

impl Replay {
    pub fn new(moves: impl IntoIterator<Item = Candidate>) -> Self {
        Replay { moves: moves.into_iter().collect() }
    }
}

impl Scheduler for Replay {
    fn pick(&mut self, candidates: &[Candidate]) -> usize {
        self.moves
            .pop_front()
            .and_then(|m| candidates.iter().position(|c| *c == m))
            .unwrap_or_else(|| Canonical.pick(candidates))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(agent: &str, mv: Move) -> Candidate {
        Candidate { agent: agent.into(), mv }
    }

    fn input(sender: &str, act: usize) -> Move {
        Move::Input { sender: sender.into(), act }
    }

    #[test]
    fn canonical_prefers_low_names_then_inputs() {
        let cs = [c("udi", Move::Output), c("nimrod", Move::Output), c("nimrod", input("udi", 4)), c("nimrod", input("gal", 2))];
        assert_eq!(Canonical.pick(&cs), 3);
    }

    #[test]
    fn random_is_reproducible() {
        let cs: Vec<Candidate> = ["a", "b", "c", "d"].iter().map(|a| c(a, Move::Output)).collect();
        let picks = |seed| {
            let mut s = RandomScheduler::new(seed);
            (0..32).map(|_| s.pick(&cs)).collect::<Vec<_>>()
        };
        assert_eq!(picks(3), picks(3));
        assert_ne!(picks(3), picks(4));
    }

    #[test]
    fn fairness_bounds_waiting() {
        // The inner policy always prefers "a"; "b" must still get a turn.
        let cs = [c("a", Move::Output), c("b", Move::Output)];
        let mut s = Fair::new(Canonical, 3);
        let picks: Vec<&str> = (0..9).map(|_| &*cs[s.pick(&cs)].agent).collect();
        for window in picks.windows(3) {
            assert!(window.contains(&"b"), "{picks:?}");
        }
    }

    #[test]
    fn listed_follows_the_list() {
        let cs = [c("a", Move::Output), c("b", Move::Output)];
        let mut s = Listed::new(["b".into(), "zed".into()]);
        assert_eq!(s.pick(&cs), 1);
        assert_eq!(s.pick(&cs), 0);
    }
}
