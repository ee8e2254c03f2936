//! The per-file Dec-MDP: local dynamics, the storage ledger with oldest-first
//! eviction, pairwise action conflicts, the two-phase conflict resolver and
//! pre-store hit accounting.

use std::fmt;

use rand::Rng as _;
use thiserror::Error;

use crate::graph::{ContactGraph, NodeRef};
use crate::requests::RequestMatrix;
use crate::seed::Rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("storage capacity must be at least 1")]
    ZeroCapacity,
    #[error("request matrix shape ({users} clusters, {horizon} slots) does not match the graph ({g_users} clusters, {g_horizon} slots)")]
    ShapeMismatch { users: usize, horizon: usize, g_users: usize, g_horizon: usize },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("action {action} is not legal for file {file} at {location}")]
    Illegal { file: usize, action: ActionToken, location: NodeRef },
    #[error("files {0} and {1} were admitted conflicting actions")]
    Conflict(usize, usize),
    #[error("episode is over (t = {0})")]
    EpisodeOver(usize),
    #[error("policy: {0}")]
    Policy(#[from] crate::nn::NetError),
}

/// When an arrival triggers an eviction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvictionRule {
    /// Evict only when occupancy would exceed the capacity, so a satellite
    /// can hold exactly `capacity` files.
    #[default]
    CapAtMax,
    /// Increment, then evict as soon as occupancy reaches the capacity.
    /// At most `capacity - 1` files stay stored.
    ReachMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    pub capacity: usize,
    pub eviction: EvictionRule,
}

/// σ^f(t): location plus request flag. The flag is defined only on satellites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocalState {
    pub location: NodeRef,
    pub flag: Option<bool>,
}

impl LocalState {
    pub const INITIAL: LocalState = LocalState { location: NodeRef::Initial, flag: None };
    pub const TERMINAL: LocalState = LocalState { location: NodeRef::Terminal, flag: None };

    pub fn is_terminal(&self) -> bool {
        self.location == NodeRef::Terminal
    }

    /// Whether this is a satellite state whose file is being requested.
    pub fn requested(&self) -> bool {
        matches!(self.location, NodeRef::Satellite(_)) && self.flag == Some(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionToken {
    /// Stay put (initial, gateway or satellite).
    Hold,
    /// Satellite to its current user cluster.
    Deliver,
    /// Initial to gateway.
    ToGateway(usize),
    /// Gateway or satellite to satellite.
    ToSatellite(usize),
}

impl ActionToken {
    /// Size of the fixed action vocabulary: HOLD, DELIVER, one per gateway,
    /// one per satellite.
    pub fn vocab_size(n_gateways: usize, n_satellites: usize) -> usize {
        2 + n_gateways + n_satellites
    }

    pub fn vocab_index(&self, n_gateways: usize) -> usize {
        match *self {
            ActionToken::Hold => 0,
            ActionToken::Deliver => 1,
            ActionToken::ToGateway(g) => 2 + g,
            ActionToken::ToSatellite(s) => 2 + n_gateways + s,
        }
    }

    pub fn from_vocab_index(i: usize, n_gateways: usize) -> Self {
        match i {
            0 => ActionToken::Hold,
            1 => ActionToken::Deliver,
            i if i < 2 + n_gateways => ActionToken::ToGateway(i - 2),
            i => ActionToken::ToSatellite(i - 2 - n_gateways),
        }
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionToken::Hold => f.write_str("HOLD"),
            ActionToken::Deliver => f.write_str("DELIVER"),
            ActionToken::ToGateway(g) => write!(f, "TO_GW({g})"),
            ActionToken::ToSatellite(s) => write!(f, "TO_SAT({s})"),
        }
    }
}

/// File ages `y_s^f` and occupancies `Γ_s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StorageLedger {
    n_files: usize,
    capacity: usize,
    ages: Vec<Option<usize>>,
    occupancy: Vec<usize>,
}

impl StorageLedger {
    pub fn new(n_satellites: usize, n_files: usize, capacity: usize) -> Self {
        Self {
            n_files,
            capacity,
            ages: vec![None; n_satellites * n_files],
            occupancy: vec![0; n_satellites],
        }
    }

    /// `y_s^f`, `None` standing for ∞.
    pub fn age(&self, s: usize, f: usize) -> Option<usize> {
        self.ages[s * self.n_files + f]
    }

    pub fn occupancy(&self, s: usize) -> usize {
        self.occupancy[s]
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_satellites(&self) -> usize {
        self.occupancy.len()
    }

    pub fn stored(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_files).filter(move |&f| self.age(s, f).is_some())
    }

    fn store(&mut self, s: usize, f: usize, slot: usize) {
        debug_assert!(self.age(s, f).is_none());
        self.ages[s * self.n_files + f] = Some(slot);
        self.occupancy[s] += 1;
    }

    fn remove(&mut self, s: usize, f: usize) {
        debug_assert!(self.age(s, f).is_some());
        self.ages[s * self.n_files + f] = None;
        self.occupancy[s] -= 1;
    }

    /// Oldest stored file on `s`; ties go to the lowest file index.
    fn oldest(&self, s: usize) -> Option<usize> {
        self.stored(s).min_by_key(|&f| (self.age(s, f), f))
    }

    /// Check occupancy bookkeeping and single-copy agreement with `locals`.
    pub fn check(&self, locals: &[LocalState]) -> Result<(), String> {
        for s in 0..self.n_satellites() {
            let n = self.stored(s).count();
            if n != self.occupancy[s] {
                return Err(format!("satellite {s}: occupancy {} but {n} finite ages", self.occupancy[s]));
            }
            if n > self.capacity {
                return Err(format!("satellite {s}: occupancy {n} exceeds capacity {}", self.capacity));
            }
        }
        for (f, l) in locals.iter().enumerate() {
            let homes: Vec<usize> = (0..self.n_satellites()).filter(|&s| self.age(s, f).is_some()).collect();
            let expected: Vec<usize> = match l.location {
                NodeRef::Satellite(s) => vec![s],
                _ => vec![],
            };
            if homes != expected {
                return Err(format!("file {f} at {} but stored on {homes:?}", l.location));
            }
        }
        Ok(())
    }
}

/// σ(t) plus the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointState {
    pub locals: Vec<LocalState>,
    pub ledger: StorageLedger,
    pub t: usize,
}

/// Output of [`Env::resolve`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub admitted: Vec<ActionToken>,
    /// `(file, proposed, admitted)` for every demoted proposal.
    pub demotions: Vec<(usize, ActionToken, ActionToken)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: JointState,
    /// `R^f(t)`, one entry per file.
    pub rewards: Vec<u32>,
    /// `h(t)` evaluated from the ledger and the request matrix.
    pub hits: usize,
    pub admitted: Vec<ActionToken>,
    pub demotions: Vec<(usize, ActionToken, ActionToken)>,
}

/// Gateway/satellite nodes an action transmits from or into. User clusters
/// are not shared resources and the initial state is not a node.
fn footprint(location: NodeRef, action: ActionToken) -> [Option<NodeRef>; 2] {
    match (location, action) {
        (NodeRef::Satellite(s), ActionToken::Deliver) => [Some(NodeRef::Satellite(s)), None],
        (NodeRef::Gateway(g), ActionToken::ToSatellite(s)) => {
            [Some(NodeRef::Gateway(g)), Some(NodeRef::Satellite(s))]
        }
        (NodeRef::Satellite(a), ActionToken::ToSatellite(b)) => {
            [Some(NodeRef::Satellite(a)), Some(NodeRef::Satellite(b))]
        }
        _ => [None, None],
    }
}

fn footprints_overlap(a: [Option<NodeRef>; 2], b: [Option<NodeRef>; 2]) -> bool {
    a.iter().flatten().any(|x| b.iter().flatten().any(|y| x == y))
}

/// One request realization on one contact graph.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    graph: &'a ContactGraph,
    requests: &'a RequestMatrix,
    config: EnvConfig,
}

impl<'a> Env<'a> {
    pub fn new(graph: &'a ContactGraph, requests: &'a RequestMatrix, config: EnvConfig) -> Result<Self, EnvError> {
        if config.capacity < 1 {
            return Err(EnvError::ZeroCapacity);
        }
        if requests.n_users() != graph.n_users() || requests.horizon() != graph.horizon() {
            return Err(EnvError::ShapeMismatch {
                users: requests.n_users(),
                horizon: requests.horizon(),
                g_users: graph.n_users(),
                g_horizon: graph.horizon(),
            });
        }
        Ok(Self { graph, requests, config })
    }

    pub fn graph(&self) -> &'a ContactGraph {
        self.graph
    }

    pub fn requests(&self) -> &'a RequestMatrix {
        self.requests
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn n_files(&self) -> usize {
        self.requests.n_files()
    }

    pub fn horizon(&self) -> usize {
        self.graph.horizon()
    }

    pub fn reset(&self) -> JointState {
        JointState {
            locals: vec![LocalState::INITIAL; self.n_files()],
            ledger: StorageLedger::new(self.graph.n_satellites(), self.n_files(), self.config.capacity),
            t: 0,
        }
    }

    /// `x_u^f(t)` for the cluster `u` served by `s` at slot `t`.
    pub fn flag_at(&self, s: usize, f: usize, t: usize) -> bool {
        if t >= self.horizon() {
            return false;
        }
        self.graph.downlink(t, s).is_some_and(|u| self.requests.get(u, f, t))
    }

    /// The local action menu of file `f`. Empty for terminal files.
    pub fn legal_actions(&self, state: &JointState, f: usize) -> Vec<ActionToken> {
        let t = state.t;
        let local = state.locals[f];
        match local.location {
            NodeRef::Initial => std::iter::once(ActionToken::Hold)
                .chain((0..self.graph.n_gateways()).map(ActionToken::ToGateway))
                .collect(),
            NodeRef::Gateway(g) if t < self.horizon() => std::iter::once(ActionToken::Hold)
                .chain(self.graph.gs_targets(t, g).iter().map(|&s| ActionToken::ToSatellite(s)))
                .collect(),
            NodeRef::Satellite(_) if local.flag == Some(true) => vec![ActionToken::Deliver],
            NodeRef::Satellite(s) if t < self.horizon() => std::iter::once(ActionToken::Hold)
                .chain(self.graph.ss_targets(t, s).iter().map(|&s2| ActionToken::ToSatellite(s2)))
                .collect(),
            NodeRef::Terminal => Vec::new(),
            _ => vec![ActionToken::Hold],
        }
    }

    /// Boolean mask over the action vocabulary.
    pub fn legal_mask(&self, state: &JointState, f: usize) -> Vec<bool> {
        let mut mask = vec![false; ActionToken::vocab_size(self.graph.n_gateways(), self.graph.n_satellites())];
        for a in self.legal_actions(state, f) {
            mask[a.vocab_index(self.graph.n_gateways())] = true;
        }
        mask
    }

    pub fn is_legal(&self, state: &JointState, f: usize, a: ActionToken) -> bool {
        let local = state.locals[f];
        let t = state.t;
        match (local.location, a) {
            (NodeRef::Initial, ActionToken::Hold) => true,
            (NodeRef::Initial, ActionToken::ToGateway(g)) => g < self.graph.n_gateways(),
            (NodeRef::Gateway(_), ActionToken::Hold) => true,
            (NodeRef::Gateway(g), ActionToken::ToSatellite(s)) => self.graph.has_gs(t, g, s),
            (NodeRef::Satellite(_), ActionToken::Deliver) => local.flag == Some(true),
            (NodeRef::Satellite(_), ActionToken::Hold) => local.flag == Some(false),
            (NodeRef::Satellite(s), ActionToken::ToSatellite(s2)) => {
                local.flag == Some(false) && self.graph.has_ss(t, s, s2)
            }
            _ => false,
        }
    }

    /// Whether the grounded edges of two files' actions share a gateway or
    /// satellite as transmitter or receiver. Symmetric; holds and gateway
    /// picks never conflict.
    pub fn in_conflict(&self, state: &JointState, f: usize, a: ActionToken, f2: usize, a2: ActionToken) -> bool {
        f != f2
            && footprints_overlap(
                footprint(state.locals[f].location, a),
                footprint(state.locals[f2].location, a2),
            )
    }

    /// Admitted actions may also be a HOLD produced by demotion.
    fn admissible(&self, state: &JointState, f: usize, a: ActionToken) -> bool {
        if state.locals[f].is_terminal() {
            return a == ActionToken::Hold;
        }
        a == ActionToken::Hold || self.is_legal(state, f, a)
    }

    /// Two-phase conflict resolution.
    ///
    /// Phase 1 admits every DELIVER; when several files on one satellite
    /// deliver, one is kept uniformly at random and the rest hold. Phase 2
    /// scans the remaining files in ascending index and admits an action iff
    /// it conflicts with nothing admitted so far, demoting it to HOLD
    /// otherwise. Terminal files must propose HOLD.
    pub fn resolve(&self, state: &JointState, proposed: &[ActionToken], rng: &mut Rng) -> Result<Resolution, EnvError> {
        let n = self.n_files();
        if proposed.len() != n {
            return Err(EnvError::ActionCount { expected: n, got: proposed.len() });
        }
        for (f, &a) in proposed.iter().enumerate() {
            let ok = if state.locals[f].is_terminal() {
                a == ActionToken::Hold
            } else {
                self.is_legal(state, f, a)
            };
            if !ok {
                return Err(EnvError::Illegal { file: f, action: a, location: state.locals[f].location });
            }
        }

        let mut admitted = vec![ActionToken::Hold; n];
        let mut taken = vec![false; n];
        let mut demotions = Vec::new();

        let n_s = self.graph.n_satellites();
        let mut delivering: Vec<Vec<usize>> = vec![Vec::new(); n_s];
        for (f, &a) in proposed.iter().enumerate() {
            if a == ActionToken::Deliver {
                if let NodeRef::Satellite(s) = state.locals[f].location {
                    delivering[s].push(f);
                }
            }
        }
        for files in delivering.iter().filter(|v| !v.is_empty()) {
            let keep = if files.len() > 1 { files[rng.gen_range(0..files.len())] } else { files[0] };
            for &f in files {
                if f == keep {
                    admitted[f] = ActionToken::Deliver;
                    taken[f] = true;
                } else {
                    demotions.push((f, ActionToken::Deliver, ActionToken::Hold));
                }
            }
        }

        let mut accepted: Vec<usize> = (0..n).filter(|&f| taken[f]).collect();
        for f in 0..n {
            let a = proposed[f];
            if a == ActionToken::Deliver {
                continue;
            }
            let clash = accepted.iter().any(|&g| self.in_conflict(state, f, a, g, admitted[g]));
            if clash {
                demotions.push((f, a, ActionToken::Hold));
            } else {
                admitted[f] = a;
                accepted.push(f);
            }
        }
        demotions.sort_by_key(|d| d.0);
        Ok(Resolution { admitted, demotions })
    }

    /// `R^f(t) = 1` iff file `f` sits on a satellite whose cluster requests it.
    pub fn rewards(&self, state: &JointState) -> Vec<u32> {
        state.locals.iter().map(|l| u32::from(l.requested())).collect()
    }

    /// Pre-store hits at slot `state.t`, counted from the ledger: requested
    /// files already stored on the serving satellite.
    pub fn hits(&self, state: &JointState) -> usize {
        let t = state.t;
        if t >= self.horizon() {
            return 0;
        }
        let mut h = 0;
        for s in 0..self.graph.n_satellites() {
            let Some(u) = self.graph.downlink(t, s) else { continue };
            h += state
                .ledger
                .stored(s)
                .filter(|&f| self.requests.get(u, f, t))
                .count();
        }
        h
    }

    /// Apply a conflict-free admitted action set.
    pub fn step(&self, state: &JointState, admitted: &[ActionToken]) -> Result<StepOutcome, EnvError> {
        let n = self.n_files();
        let t = state.t;
        if t >= self.horizon() {
            return Err(EnvError::EpisodeOver(t));
        }
        if admitted.len() != n {
            return Err(EnvError::ActionCount { expected: n, got: admitted.len() });
        }
        for (f, &a) in admitted.iter().enumerate() {
            if !self.admissible(state, f, a) {
                return Err(EnvError::Illegal { file: f, action: a, location: state.locals[f].location });
            }
        }
        for f in 0..n {
            for g in f + 1..n {
                if self.in_conflict(state, f, admitted[f], g, admitted[g]) {
                    return Err(EnvError::Conflict(f, g));
                }
            }
        }

        let rewards = self.rewards(state);
        let hits = self.hits(state);
        let mut locals = state.locals.clone();
        let mut ledger = state.ledger.clone();
        let mut arrivals = Vec::new();

        for (f, &a) in admitted.iter().enumerate() {
            match (state.locals[f].location, a) {
                (NodeRef::Initial, ActionToken::ToGateway(g)) => locals[f].location = NodeRef::Gateway(g),
                (NodeRef::Gateway(_), ActionToken::ToSatellite(s)) => arrivals.push((f, s)),
                (NodeRef::Satellite(s), ActionToken::ToSatellite(s2)) => {
                    ledger.remove(s, f);
                    arrivals.push((f, s2));
                }
                _ => {}
            }
        }
        for (f, s) in arrivals {
            ledger.store(s, f, t + 1);
            locals[f].location = NodeRef::Satellite(s);
            let over = match self.config.eviction {
                EvictionRule::CapAtMax => ledger.occupancy(s) > self.config.capacity,
                EvictionRule::ReachMax => ledger.occupancy(s) >= self.config.capacity,
            };
            if over {
                let victim = ledger.oldest(s).expect("occupied satellite");
                ledger.remove(s, victim);
                locals[victim] = LocalState::TERMINAL;
            }
        }
        for (f, l) in locals.iter_mut().enumerate() {
            l.flag = match l.location {
                NodeRef::Satellite(s) => Some(self.flag_at(s, f, t + 1)),
                _ => None,
            };
        }

        Ok(StepOutcome {
            next: JointState { locals, ledger, t: t + 1 },
            rewards,
            hits,
            admitted: admitted.to_vec(),
            demotions: Vec::new(),
        })
    }

    /// Resolve then step.
    pub fn advance(&self, state: &JointState, proposed: &[ActionToken], rng: &mut Rng) -> Result<StepOutcome, EnvError> {
        let res = self.resolve(state, proposed, rng)?;
        let mut out = self.step(state, &res.admitted)?;
        out.demotions = res.demotions;
        Ok(out)
    }
}

/// Σ_t h(t).
pub fn episode_hits<'o>(outcomes: impl IntoIterator<Item = &'o StepOutcome>) -> usize {
    outcomes.into_iter().map(|o| o.hits).sum()
}

/// One row of the episode trace CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub t: usize,
    pub file: usize,
    pub state: LocalState,
    pub proposed: Option<ActionToken>,
    pub admitted: Option<ActionToken>,
    pub reward: u32,
}

pub const TRACE_HEADER: &str = "t,file,loc_kind,loc_idx,flag,proposed,admitted,reward";

impl TraceRow {
    pub fn to_csv(&self) -> String {
        let (kind, idx) = match self.state.location {
            NodeRef::Initial => ("initial", String::new()),
            NodeRef::Terminal => ("terminal", String::new()),
            NodeRef::Gateway(g) => ("gateway", g.to_string()),
            NodeRef::Satellite(s) => ("satellite", s.to_string()),
            NodeRef::UserCluster(u) => ("user", u.to_string()),
        };
        let flag = match self.state.flag {
            Some(b) => u8::from(b).to_string(),
            None => String::new(),
        };
        let act = |a: Option<ActionToken>| a.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            self.file,
            kind,
            idx,
            flag,
            act(self.proposed),
            act(self.admitted),
            self.reward
        )
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}
