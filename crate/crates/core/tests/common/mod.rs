//! Independent reference model of the environment, written directly from the
//! transition rules without reusing any of the library's state types.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;

use orbit_prestore::env::{ActionToken, Env, EnvConfig, EvictionRule, JointState};
use orbit_prestore::graph::{ContactGraph, NodeRef};
use orbit_prestore::harness::{build_graph, build_requests, ExperimentConfig};
use orbit_prestore::requests::RequestMatrix;
use orbit_prestore::seed::{Rng, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Init,
    Gw(usize),
    Sat(usize),
    Gone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Act {
    Hold,
    Deliver,
    Gw(usize),
    Sat(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OState {
    pub loc: Vec<Loc>,
    /// (satellite, file) -> slot of arrival.
    pub ages: BTreeMap<(usize, usize), usize>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OStep {
    pub admitted: Vec<Act>,
    pub next: OState,
    pub rewards: Vec<u32>,
    pub hits: usize,
}

pub struct Oracle<'a> {
    pub graph: &'a ContactGraph,
    pub x: &'a RequestMatrix,
    pub capacity: usize,
    pub rule: EvictionRule,
}

impl Oracle<'_> {
    pub fn start(&self) -> OState {
        OState { loc: vec![Loc::Init; self.x.n_files()], ages: BTreeMap::new(), t: 0 }
    }

    fn wanted(&self, s: usize, f: usize, t: usize) -> bool {
        t < self.graph.horizon() && self.graph.downlink(t, s).is_some_and(|u| self.x.get(u, f, t))
    }

    pub fn menu(&self, st: &OState, f: usize) -> Vec<Act> {
        let t = st.t;
        match st.loc[f] {
            Loc::Init => {
                let mut v = vec![Act::Hold];
                v.extend((0..self.graph.n_gateways()).map(Act::Gw));
                v
            }
            Loc::Gw(g) => {
                let mut v = vec![Act::Hold];
                v.extend((0..self.graph.n_satellites()).filter(|&s| self.graph.has_gs(t, g, s)).map(Act::Sat));
                v
            }
            Loc::Sat(s) if self.wanted(s, f, t) => vec![Act::Deliver],
            Loc::Sat(s) => {
                let mut v = vec![Act::Hold];
                v.extend((0..self.graph.n_satellites()).filter(|&b| self.graph.has_ss(t, s, b)).map(Act::Sat));
                v
            }
            Loc::Gone => vec![Act::Hold],
        }
    }

    /// Every joint proposal: the cartesian product of the local menus.
    pub fn joint_menus(&self, st: &OState) -> Vec<Vec<Act>> {
        let mut out = vec![Vec::new()];
        for f in 0..st.loc.len() {
            let menu = self.menu(st, f);
            out = out
                .into_iter()
                .flat_map(|p| {
                    menu.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn nodes(loc: Loc, a: Act) -> Vec<(char, usize)> {
        match (loc, a) {
            (Loc::Sat(s), Act::Deliver) => vec![('s', s)],
            (Loc::Gw(g), Act::Sat(s)) => vec![('g', g), ('s', s)],
            (Loc::Sat(a), Act::Sat(b)) => vec![('s', a), ('s', b)],
            _ => vec![],
        }
    }

    /// All admitted sets the resolver may produce (one per choice of which
    /// co-located deliverer keeps its slot).
    pub fn resolutions(&self, st: &OState, proposed: &[Act]) -> Vec<Vec<Act>> {
        let n = proposed.len();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in 0..n {
            if let (Act::Deliver, Loc::Sat(s)) = (proposed[f], st.loc[f]) {
                groups.entry(s).or_default().push(f);
            }
        }
        let mut choices: Vec<Vec<usize>> = vec![Vec::new()];
        for files in groups.values() {
            choices = choices
                .into_iter()
                .flat_map(|c| {
                    files.iter().map(move |&f| {
                        let mut c = c.clone();
                        c.push(f);
                        c
                    })
                })
                .collect();
        }
        choices
            .into_iter()
            .map(|keepers| {
                let mut admitted = vec![Act::Hold; n];
                let mut busy: BTreeSet<(char, usize)> = BTreeSet::new();
                for &f in &keepers {
                    admitted[f] = Act::Deliver;
                    busy.extend(Self::nodes(st.loc[f], Act::Deliver));
                }
                for f in 0..n {
                    if proposed[f] == Act::Deliver {
                        continue;
                    }
                    let nodes = Self::nodes(st.loc[f], proposed[f]);
                    if nodes.iter().all(|x| !busy.contains(x)) {
                        admitted[f] = proposed[f];
                        busy.extend(nodes);
                    }
                }
                admitted
            })
            .collect()
    }

    pub fn apply(&self, st: &OState, admitted: &[Act]) -> OStep {
        let t = st.t;
        let n = st.loc.len();
        let mut rewards = vec![0; n];
        for f in 0..n {
            if let Loc::Sat(s) = st.loc[f] {
                rewards[f] = u32::from(self.wanted(s, f, t));
            }
        }
        let hits = st.ages.keys().filter(|&&(s, f)| self.wanted(s, f, t)).count();
        let mut next = st.clone();
        next.t = t + 1;
        let mut arrivals = Vec::new();
        for f in 0..n {
            match (st.loc[f], admitted[f]) {
                (Loc::Init, Act::Gw(g)) => next.loc[f] = Loc::Gw(g),
                (Loc::Gw(_), Act::Sat(s)) => arrivals.push((f, s)),
                (Loc::Sat(a), Act::Sat(b)) => {
                    next.ages.remove(&(a, f));
                    arrivals.push((f, b));
                }
                _ => {}
            }
        }
        for (f, s) in arrivals {
            next.ages.insert((s, f), t + 1);
            next.loc[f] = Loc::Sat(s);
            let count = next.ages.keys().filter(|k| k.0 == s).count();
            let evict = match self.rule {
                EvictionRule::CapAtMax => count > self.capacity,
                EvictionRule::ReachMax => count >= self.capacity,
            };
            if evict {
                let (&(_, victim), _) = next
                    .ages
                    .iter()
                    .filter(|(k, _)| k.0 == s)
                    .min_by_key(|(k, &age)| (age, k.1))
                    .unwrap();
                next.ages.remove(&(s, victim));
                next.loc[victim] = Loc::Gone;
            }
        }
        OStep { admitted: admitted.to_vec(), next, rewards, hits }
    }

    /// Maximum achievable total hits from `st` to the horizon.
    pub fn best_hits(&self, st: &OState, memo: &mut HashMap<OState, usize>) -> usize {
        if st.t >= self.graph.horizon() {
            return 0;
        }
        if let Some(&v) = memo.get(st) {
            return v;
        }
        let mut best = 0;
        for p in self.joint_menus(st) {
            for adm in self.resolutions(st, &p) {
                let step = self.apply(st, &adm);
                best = best.max(step.hits + self.best_hits(&step.next, memo));
            }
        }
        memo.insert(st.clone(), best);
        best
    }

    pub fn optimum(&self) -> usize {
        self.best_hits(&self.start(), &mut HashMap::new())
    }
}

pub fn to_token(a: Act) -> ActionToken {
    match a {
        Act::Hold => ActionToken::Hold,
        Act::Deliver => ActionToken::Deliver,
        Act::Gw(g) => ActionToken::ToGateway(g),
        Act::Sat(s) => ActionToken::ToSatellite(s),
    }
}

pub fn from_token(a: ActionToken) -> Act {
    match a {
        ActionToken::Hold => Act::Hold,
        ActionToken::Deliver => Act::Deliver,
        ActionToken::ToGateway(g) => Act::Gw(g),
        ActionToken::ToSatellite(s) => Act::Sat(s),
    }
}

/// Project the library's joint state onto the reference representation.
pub fn project(st: &JointState, n_satellites: usize) -> OState {
    let loc = st
        .locals
        .iter()
        .map(|l| match l.location {
            NodeRef::Initial => Loc::Init,
            NodeRef::Gateway(g) => Loc::Gw(g),
            NodeRef::Satellite(s) => Loc::Sat(s),
            NodeRef::Terminal => Loc::Gone,
            NodeRef::UserCluster(u) => panic!("file parked at user cluster {u}"),
        })
        .collect();
    let mut ages = BTreeMap::new();
    for s in 0..n_satellites {
        for f in 0..st.locals.len() {
            if let Some(a) = st.ledger.age(s, f) {
                ages.insert((s, f), a);
            }
        }
    }
    OState { loc, ages, t: st.t }
}

pub struct Walk<'a> {
    pub env: Env<'a>,
    pub oracle: Oracle<'a>,
    pub sequences: usize,
    pub transitions: usize,
}

impl Walk<'_> {
    fn check_flags(&self, st: &JointState) {
        for (f, l) in st.locals.iter().enumerate() {
            match l.location {
                NodeRef::Satellite(s) => {
                    let want = self.env.flag_at(s, f, st.t);
                    assert_eq!(l.flag, Some(want), "flag of file {f} at t={}", st.t);
                }
                _ => assert_eq!(l.flag, None),
            }
        }
    }

    pub fn visit(&mut self, st: &JointState) {
        let n_s = self.env.graph().n_satellites();
        let ost = project(st, n_s);
        self.check_flags(st);
        if st.t == self.env.horizon() {
            self.sequences += 1;
            return;
        }
        for (f, l) in ost.loc.iter().enumerate() {
            let mut lib: Vec<Act> = self.env.legal_actions(st, f).into_iter().map(from_token).collect();
            let mut reference = self.oracle.menu(&ost, f);
            if *l == Loc::Gone {
                assert!(lib.is_empty());
                lib.push(Act::Hold);
            }
            lib.sort();
            reference.sort();
            assert_eq!(lib, reference, "menu of file {f} at {ost:?}");
        }
        for proposal in self.oracle.joint_menus(&ost) {
            let tokens: Vec<ActionToken> = proposal.iter().map(|&a| to_token(a)).collect();
            let branches = self.oracle.resolutions(&ost, &proposal);
            for k in 0..4u64 {
                let mut rng = SeedStream::new(k).rng();
                let res = self.env.resolve(st, &tokens, &mut rng).unwrap();
                let got: Vec<Act> = res.admitted.iter().map(|&a| from_token(a)).collect();
                assert!(branches.contains(&got), "resolve gave {got:?}, allowed {branches:?}");
                for &(f, p, a) in &res.demotions {
                    assert_eq!(from_token(p), proposal[f]);
                    assert_eq!(a, ActionToken::Hold);
                    assert_ne!(got[f], proposal[f]);
                }
            }
            for adm in branches {
                let tokens: Vec<ActionToken> = adm.iter().map(|&a| to_token(a)).collect();
                let out = self.env.step(st, &tokens).unwrap();
                let expect = self.oracle.apply(&ost, &adm);
                assert_eq!(project(&out.next, n_s), expect.next, "from {ost:?} with {adm:?}");
                assert_eq!(out.rewards, expect.rewards);
                assert_eq!(out.hits, expect.hits);
                out.next.ledger.check(&out.next.locals).unwrap();
                self.transitions += 1;
                self.visit(&out.next);
            }
        }
    }
}

pub fn walk(cfg: &ExperimentConfig, rule: EvictionRule, capacity: usize) -> (usize, usize) {
    let graph = build_graph(cfg).unwrap();
    let x = build_requests(cfg, cfg.seed);
    let env = Env::new(&graph, &x, EnvConfig { capacity, eviction: rule }).unwrap();
    let oracle = Oracle { graph: &graph, x: &x, capacity, rule };
    let mut w = Walk { env, oracle, sequences: 0, transitions: 0 };
    w.visit(&env.reset());
    (w.sequences, w.transitions)
}

/// Transmitter and receiver nodes of an action, written out independently.
pub fn used_nodes(loc: NodeRef, a: ActionToken) -> BTreeSet<NodeRef> {
    match (loc, a) {
        (NodeRef::Satellite(s), ActionToken::Deliver) => [NodeRef::Satellite(s)].into(),
        (NodeRef::Gateway(g), ActionToken::ToSatellite(s)) => [NodeRef::Gateway(g), NodeRef::Satellite(s)].into(),
        (NodeRef::Satellite(a), ActionToken::ToSatellite(b)) => [NodeRef::Satellite(a), NodeRef::Satellite(b)].into(),
        _ => BTreeSet::new(),
    }
}

pub fn random_proposal(env: &Env, st: &JointState, rng: &mut Rng) -> Vec<ActionToken> {
    (0..env.n_files())
        .map(|f| *env.legal_actions(st, f).choose(rng).unwrap_or(&ActionToken::Hold))
        .collect()
}

/// Admitted actions are pairwise node-disjoint, each is the proposal or a
/// HOLD, and every demotion is forced by an admitted action (or by a
/// co-located deliverer).
pub fn check_resolution(st: &JointState, proposed: &[ActionToken], admitted: &[ActionToken]) {
    let n = proposed.len();
    let nodes: Vec<BTreeSet<NodeRef>> = (0..n).map(|f| used_nodes(st.locals[f].location, admitted[f])).collect();
    for f in 0..n {
        assert!(admitted[f] == proposed[f] || admitted[f] == ActionToken::Hold);
        for g in f + 1..n {
            assert!(nodes[f].is_disjoint(&nodes[g]), "files {f} and {g} collide: {:?} {:?}", admitted[f], admitted[g]);
        }
        if admitted[f] != proposed[f] {
            let want = used_nodes(st.locals[f].location, proposed[f]);
            let blocked = (0..n).any(|g| g != f && !want.is_disjoint(&nodes[g]));
            assert!(blocked, "file {f} demoted without cause");
        }
    }
}

