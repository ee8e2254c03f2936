//! Time-unrolled contact graph.
//!
//! Layer `t` holds the transmission opportunities of slot `t`. Hold edges
//! (a file staying on its gateway or satellite) exist for every gateway and
//! satellite at every slot and are therefore implicit: only GS, SS and SU
//! edges are stored.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::seed::{Rng, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Gateway(usize),
    Satellite(usize),
    UserCluster(usize),
    Initial,
    Terminal,
}

impl NodeRef {
    pub fn index(&self) -> Option<usize> {
        match *self {
            NodeRef::Gateway(i) | NodeRef::Satellite(i) | NodeRef::UserCluster(i) => Some(i),
            NodeRef::Initial | NodeRef::Terminal => None,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Gateway(i) => write!(f, "gateway {i}"),
            NodeRef::Satellite(i) => write!(f, "satellite {i}"),
            NodeRef::UserCluster(i) => write!(f, "user cluster {i}"),
            NodeRef::Initial => f.write_str("initial"),
            NodeRef::Terminal => f.write_str("terminal"),
        }
    }
}

/// Edge classes, ordered as they are listed by [`ContactGraph::out_edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    GatewayHold,
    SatelliteHold,
    GatewayToSatellite,
    SatelliteToSatellite,
    SatelliteToUser,
}

impl EdgeKind {
    /// Wire tag for the stored (non-hold) kinds.
    pub fn tag(&self) -> &'static str {
        match self {
            EdgeKind::GatewayHold => "G",
            EdgeKind::SatelliteHold => "S",
            EdgeKind::GatewayToSatellite => "GS",
            EdgeKind::SatelliteToSatellite => "SS",
            EdgeKind::SatelliteToUser => "SU",
        }
    }

    fn is_hold(&self) -> bool {
        matches!(self, EdgeKind::GatewayHold | EdgeKind::SatelliteHold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContactEdge {
    pub slot: usize,
    pub kind: EdgeKind,
    pub src: NodeRef,
    pub dst: NodeRef,
}

impl ContactEdge {
    pub fn gs(slot: usize, g: usize, s: usize) -> Self {
        Self { slot, kind: EdgeKind::GatewayToSatellite, src: NodeRef::Gateway(g), dst: NodeRef::Satellite(s) }
    }

    pub fn ss(slot: usize, s: usize, s2: usize) -> Self {
        Self { slot, kind: EdgeKind::SatelliteToSatellite, src: NodeRef::Satellite(s), dst: NodeRef::Satellite(s2) }
    }

    pub fn su(slot: usize, s: usize, u: usize) -> Self {
        Self { slot, kind: EdgeKind::SatelliteToUser, src: NodeRef::Satellite(s), dst: NodeRef::UserCluster(u) }
    }

    /// Whether `kind` agrees with the endpoint kinds.
    fn well_typed(&self) -> bool {
        use NodeRef::*;
        match (self.kind, self.src, self.dst) {
            (EdgeKind::GatewayHold, Gateway(a), Gateway(b)) => a == b,
            (EdgeKind::SatelliteHold, Satellite(a), Satellite(b)) => a == b,
            (EdgeKind::GatewayToSatellite, Gateway(_), Satellite(_)) => true,
            (EdgeKind::SatelliteToSatellite, Satellite(a), Satellite(b)) => a != b,
            (EdgeKind::SatelliteToUser, Satellite(_), UserCluster(_)) => true,
            _ => false,
        }
    }

    /// Links the model never allows, regardless of the declared kind.
    fn forbidden(&self) -> bool {
        use NodeRef::*;
        match (self.src, self.dst) {
            (Gateway(a), Gateway(b)) => a != b,
            (UserCluster(_), _) => true,
            (Gateway(_), UserCluster(_)) => true,
            (Initial | Terminal, _) | (_, Initial | Terminal) => true,
            _ => false,
        }
    }
}

/// Parameters of the synthetic rotating-ring constellation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstellationSpec {
    pub n_satellites: usize,
    pub n_gateways: usize,
    pub n_users: usize,
    pub horizon: usize,
    pub orbits: usize,
    pub slots_per_revolution: usize,
    /// Ring-position radius within which two satellites can exchange files.
    /// Zero disables inter-satellite links.
    pub ss_neighbor_span: usize,
    pub seed: u64,
}

impl ConstellationSpec {
    pub fn check(&self) -> Result<(), GraphError> {
        let counts = [
            ("n_satellites", self.n_satellites),
            ("n_gateways", self.n_gateways),
            ("n_users", self.n_users),
            ("horizon", self.horizon),
            ("orbits", self.orbits),
            ("slots_per_revolution", self.slots_per_revolution),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(GraphError::InvalidSpec(format!("{name} must be positive")));
            }
        }
        if !self.n_satellites.is_multiple_of(self.orbits) {
            return Err(GraphError::InvalidSpec(format!(
                "orbits ({}) must divide n_satellites ({})",
                self.orbits, self.n_satellites
            )));
        }
        Ok(())
    }
}

/// One invariant violation found by [`ContactGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingUplink { slot: usize, satellite: usize },
    ExtraUplinks { slot: usize, satellite: usize, count: usize },
    MissingDownlink { slot: usize, satellite: usize },
    ExtraDownlinks { slot: usize, satellite: usize, count: usize },
    ForbiddenLink { slot: usize, src: NodeRef, dst: NodeRef },
    KindMismatch { slot: usize, kind: EdgeKind, src: NodeRef, dst: NodeRef },
    IndexOutOfRange { slot: usize, node: NodeRef },
    SlotOutOfRange { slot: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingUplink { slot, satellite } => {
                write!(f, "seamless coverage: satellite {satellite} has no GS edge at slot {slot}")
            }
            Violation::ExtraUplinks { slot, satellite, count } => write!(
                f,
                "seamless coverage: satellite {satellite} has {count} GS edges at slot {slot} (expected 1)"
            ),
            Violation::MissingDownlink { slot, satellite } => {
                write!(f, "seamless coverage: satellite {satellite} has no SU edge at slot {slot}")
            }
            Violation::ExtraDownlinks { slot, satellite, count } => write!(
                f,
                "seamless coverage: satellite {satellite} has {count} SU edges at slot {slot} (expected 1)"
            ),
            Violation::ForbiddenLink { slot, src, dst } => {
                write!(f, "forbidden link {src} -> {dst} at slot {slot}")
            }
            Violation::KindMismatch { slot, kind, src, dst } => {
                write!(f, "edge kind {kind:?} inconsistent with {src} -> {dst} at slot {slot}")
            }
            Violation::IndexOutOfRange { slot, node } => {
                write!(f, "{node} out of range at slot {slot}")
            }
            Violation::SlotOutOfRange { slot } => write!(f, "slot {slot} beyond horizon"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid constellation spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph invariant violated: {violation} ({total} violation(s) in total)")]
    Invariant { violation: Violation, total: usize },
    #[error("slot {slot} out of range (horizon {horizon})")]
    SlotOutOfRange { slot: usize, horizon: usize },
}

/// Adjacency lookups for one slot, built from the well-typed in-range edges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct SlotIndex {
    uplinks: Vec<Vec<usize>>,
    downlinks: Vec<Vec<usize>>,
    gs_out: Vec<Vec<usize>>,
    ss_out: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactGraph {
    horizon: usize,
    n_gateways: usize,
    n_satellites: usize,
    n_users: usize,
    /// Non-hold edges per slot, sorted.
    edges: Vec<Vec<ContactEdge>>,
    /// Edges whose slot lies beyond the horizon; kept only so that
    /// `validate` can report them.
    stray: Vec<ContactEdge>,
    index: Vec<SlotIndex>,
}

impl ContactGraph {
    /// Assemble a graph from raw edges without validating it.
    ///
    /// Well-formed hold edges are dropped (holds are implicit); everything
    /// else is kept as given so that [`validate`](Self::validate) can report it.
    pub fn from_edges(
        horizon: usize,
        n_gateways: usize,
        n_satellites: usize,
        n_users: usize,
        edges: impl IntoIterator<Item = ContactEdge>,
    ) -> Self {
        let mut per_slot = vec![Vec::new(); horizon];
        let mut stray = Vec::new();
        for e in edges {
            if e.kind.is_hold() && e.well_typed() {
                continue;
            }
            match per_slot.get_mut(e.slot) {
                Some(v) => v.push(e),
                None => stray.push(e),
            }
        }
        for v in &mut per_slot {
            v.sort();
        }
        stray.sort();
        let mut g = ContactGraph {
            horizon,
            n_gateways,
            n_satellites,
            n_users,
            edges: per_slot,
            stray,
            index: Vec::new(),
        };
        g.index = (0..horizon).map(|t| g.build_index(t)).collect();
        g
    }

    fn in_range(&self, n: NodeRef) -> bool {
        match n {
            NodeRef::Gateway(i) => i < self.n_gateways,
            NodeRef::Satellite(i) => i < self.n_satellites,
            NodeRef::UserCluster(i) => i < self.n_users,
            NodeRef::Initial | NodeRef::Terminal => true,
        }
    }

    fn build_index(&self, t: usize) -> SlotIndex {
        let mut ix = SlotIndex {
            uplinks: vec![Vec::new(); self.n_satellites],
            downlinks: vec![Vec::new(); self.n_satellites],
            gs_out: vec![Vec::new(); self.n_gateways],
            ss_out: vec![Vec::new(); self.n_satellites],
        };
        for e in &self.edges[t] {
            if !e.well_typed() || !self.in_range(e.src) || !self.in_range(e.dst) {
                continue;
            }
            match (e.kind, e.src, e.dst) {
                (EdgeKind::GatewayToSatellite, NodeRef::Gateway(g), NodeRef::Satellite(s)) => {
                    ix.uplinks[s].push(g);
                    ix.gs_out[g].push(s);
                }
                (EdgeKind::SatelliteToSatellite, NodeRef::Satellite(a), NodeRef::Satellite(b)) => {
                    ix.ss_out[a].push(b);
                }
                (EdgeKind::SatelliteToUser, NodeRef::Satellite(s), NodeRef::UserCluster(u)) => {
                    ix.downlinks[s].push(u);
                }
                _ => {}
            }
        }
        ix
    }

    /// Generate a synthetic rotating-ring constellation.
    ///
    /// Satellite `s` sits in ring `s / (N_S / orbits)`. Its on-duty gateway
    /// and user cluster at slot `t` are `perm_g[(s + k) % N_G]` and
    /// `perm_u[(s + k) % N_U]`, where `k = t / max(1, slots_per_revolution / N_S)`
    /// and the permutations are drawn from the seed. Ring `r` is laid out on a
    /// circle of `N_S` positions at `orbits * p + r + offset_r`, drifting by
    /// `r * k`; two satellites share an SS opportunity (both directions) when
    /// their circular distance is at most `ss_neighbor_span`.
    pub fn generate(spec: &ConstellationSpec) -> Result<Self, GraphError> {
        spec.check()?;
        let n_s = spec.n_satellites;
        let per_ring = n_s / spec.orbits;
        let period = (spec.slots_per_revolution / n_s).max(1);

        let mut rng: Rng = SeedStream::new(spec.seed).derive("constellation").rng();
        let mut perm_g: Vec<usize> = (0..spec.n_gateways).collect();
        perm_g.shuffle(&mut rng);
        let mut perm_u: Vec<usize> = (0..spec.n_users).collect();
        perm_u.shuffle(&mut rng);
        let offsets: Vec<usize> = (0..spec.orbits).map(|_| rng.gen_range(0..n_s)).collect();

        let mut edges = Vec::new();
        for t in 0..spec.horizon {
            let k = t / period;
            let pos: Vec<usize> = (0..n_s)
                .map(|s| {
                    let (r, p) = (s / per_ring, s % per_ring);
                    (spec.orbits * p + r + offsets[r] + r * k) % n_s
                })
                .collect();
            for s in 0..n_s {
                edges.push(ContactEdge::gs(t, perm_g[(s + k) % spec.n_gateways], s));
                edges.push(ContactEdge::su(t, s, perm_u[(s + k) % spec.n_users]));
                if spec.ss_neighbor_span == 0 {
                    continue;
                }
                for s2 in 0..n_s {
                    if s2 == s {
                        continue;
                    }
                    let d = pos[s].abs_diff(pos[s2]);
                    let d = d.min(n_s - d);
                    if d <= spec.ss_neighbor_span {
                        edges.push(ContactEdge::ss(t, s, s2));
                    }
                }
            }
        }
        Ok(Self::from_edges(spec.horizon, spec.n_gateways, n_s, spec.n_users, edges))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_gateways(&self) -> usize {
        self.n_gateways
    }

    pub fn n_satellites(&self) -> usize {
        self.n_satellites
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Stored (non-hold) edges of slot `t`, sorted by kind then endpoints.
    pub fn slot_edges(&self, t: usize) -> &[ContactEdge] {
        &self.edges[t]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum::<usize>() + self.stray.len()
    }

    /// The gateway with an uplink opportunity into `s` at slot `t`.
    pub fn uplink(&self, t: usize, s: usize) -> Option<usize> {
        self.index.get(t)?.uplinks.get(s)?.first().copied()
    }

    /// The user cluster served by `s` at slot `t`.
    pub fn downlink(&self, t: usize, s: usize) -> Option<usize> {
        self.index.get(t)?.downlinks.get(s)?.first().copied()
    }

    /// Satellites reachable from gateway `g` at slot `t`, ascending.
    pub fn gs_targets(&self, t: usize, g: usize) -> &[usize] {
        &self.index[t].gs_out[g]
    }

    /// Satellites reachable from satellite `s` at slot `t`, ascending.
    pub fn ss_targets(&self, t: usize, s: usize) -> &[usize] {
        &self.index[t].ss_out[s]
    }

    pub fn has_gs(&self, t: usize, g: usize, s: usize) -> bool {
        t < self.horizon && g < self.n_gateways && self.index[t].gs_out[g].contains(&s)
    }

    pub fn has_ss(&self, t: usize, s: usize, s2: usize) -> bool {
        t < self.horizon && s < self.n_satellites && self.index[t].ss_out[s].contains(&s2)
    }

    /// All edges leaving `node` at slot `t`, holds included, in
    /// (kind, destination index) order.
    pub fn out_edges(&self, node: NodeRef, t: usize) -> Result<Vec<ContactEdge>, GraphError> {
        if t >= self.horizon {
            return Err(GraphError::SlotOutOfRange { slot: t, horizon: self.horizon });
        }
        let mut out = Vec::new();
        match node {
            NodeRef::Gateway(g) if g < self.n_gateways => {
                out.push(ContactEdge { slot: t, kind: EdgeKind::GatewayHold, src: node, dst: node });
            }
            NodeRef::Satellite(s) if s < self.n_satellites => {
                out.push(ContactEdge { slot: t, kind: EdgeKind::SatelliteHold, src: node, dst: node });
            }
            _ => return Ok(out),
        }
        out.extend(self.edges[t].iter().filter(|e| e.src == node).copied());
        out.sort_by_key(|e| (e.kind, e.dst));
        Ok(out)
    }

    /// Every invariant violation, in slot order. Empty iff the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for e in &self.stray {
            out.push(Violation::SlotOutOfRange { slot: e.slot });
        }
        for t in 0..self.horizon {
            for e in &self.edges[t] {
                for n in [e.src, e.dst] {
                    if !self.in_range(n) {
                        out.push(Violation::IndexOutOfRange { slot: t, node: n });
                    }
                }
                if e.forbidden() {
                    out.push(Violation::ForbiddenLink { slot: t, src: e.src, dst: e.dst });
                } else if !e.well_typed() {
                    out.push(Violation::KindMismatch { slot: t, kind: e.kind, src: e.src, dst: e.dst });
                }
            }
            let ix = &self.index[t];
            for s in 0..self.n_satellites {
                match ix.uplinks[s].len() {
                    0 => out.push(Violation::MissingUplink { slot: t, satellite: s }),
                    1 => {}
                    count => out.push(Violation::ExtraUplinks { slot: t, satellite: s, count }),
                }
                match ix.downlinks[s].len() {
                    0 => out.push(Violation::MissingDownlink { slot: t, satellite: s }),
                    1 => {}
                    count => out.push(Violation::ExtraDownlinks { slot: t, satellite: s, count }),
                }
            }
        }
        out
    }

    /// Serialize to the line-oriented `CSN v1` format.
    pub fn save(&self) -> String {
        let mut s = format!(
            "CSN v1 {} {} {} {}\n",
            self.horizon, self.n_gateways, self.n_satellites, self.n_users
        );
        for e in self.edges.iter().flatten().chain(&self.stray) {
            let (Some(a), Some(b)) = (e.src.index(), e.dst.index()) else {
                continue;
            };
            s.push_str(&format!("{} {} {} {}\n", e.slot, e.kind.tag(), a, b));
        }
        s
    }

    /// Parse a `CSN v1` document and validate it.
    pub fn load(text: &str) -> Result<Self, GraphError> {
        let mut header: Option<[usize; 4]> = None;
        let mut edges = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: String| GraphError::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some(h) = header else {
                if fields.len() != 6 || fields[0] != "CSN" || fields[1] != "v1" {
                    return Err(perr("expected header `CSN v1 T N_G N_S N_U`".into()));
                }
                let mut v = [0usize; 4];
                for (slot, f) in v.iter_mut().zip(&fields[2..]) {
                    *slot = f.parse().map_err(|_| perr(format!("bad count `{f}`")))?;
                }
                header = Some(v);
                continue;
            };
            let [horizon, n_g, n_s, n_u] = h;
            if fields.len() != 4 {
                return Err(perr(format!("expected `<t> <kind> <src> <dst>`, got `{line}`")));
            }
            let num = |f: &str| f.parse::<usize>().map_err(|_| perr(format!("bad integer `{f}`")));
            let t = num(fields[0])?;
            let (a, b) = (num(fields[2])?, num(fields[3])?);
            if t >= horizon {
                return Err(perr(format!("slot {t} out of range (T = {horizon})")));
            }
            let (edge, src_max, dst_max) = match fields[1] {
                "GS" => (ContactEdge::gs(t, a, b), n_g, n_s),
                "SS" => (ContactEdge::ss(t, a, b), n_s, n_s),
                "SU" => (ContactEdge::su(t, a, b), n_s, n_u),
                k => return Err(perr(format!("unknown edge kind `{k}`"))),
            };
            if a >= src_max || b >= dst_max {
                return Err(perr(format!("index out of range in `{line}`")));
            }
            if edge.kind == EdgeKind::SatelliteToSatellite && a == b {
                return Err(perr(format!("SS self-loop on satellite {a}")));
            }
            if !seen.insert(edge) {
                return Err(perr(format!("duplicate edge `{line}`")));
            }
            edges.push(edge);
        }
        let [horizon, n_g, n_s, n_u] = header.ok_or(GraphError::Parse {
            line: 0,
            message: "missing `CSN v1` header".into(),
        })?;
        let graph = ContactGraph::from_edges(horizon, n_g, n_s, n_u, edges);
        let violations = graph.validate();
        if let Some(v) = violations.first() {
            return Err(GraphError::Invariant { violation: v.clone(), total: violations.len() });
        }
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(n_s: usize, n_g: usize, n_u: usize, t: usize, orbits: usize, span: usize) -> ConstellationSpec {
        ConstellationSpec {
            n_satellites: n_s,
            n_gateways: n_g,
            n_users: n_u,
            horizon: t,
            orbits,
            slots_per_revolution: 2 * t.max(1),
            ss_neighbor_span: span,
            seed: 11,
        }
    }

    #[test]
    fn single_satellite_graph_has_one_gs_and_one_su_per_slot() {
        let g = ContactGraph::generate(&spec(1, 1, 1, 2, 1, 0)).unwrap();
        for t in 0..2 {
            let e = g.slot_edges(t);
            assert_eq!(e.len(), 2);
            assert_eq!(e.iter().filter(|e| e.kind == EdgeKind::GatewayToSatellite).count(), 1);
            assert_eq!(e.iter().filter(|e| e.kind == EdgeKind::SatelliteToUser).count(), 1);
        }
        assert!(g.validate().is_empty());
    }

    #[test]
    fn paper_sized_constellation_validates() {
        let g = ContactGraph::generate(&spec(12, 5, 20, 100, 4, 2)).unwrap();
        assert_eq!(g.validate(), vec![]);
    }

    #[test]
    fn zero_span_means_no_ss_edges() {
        let g = ContactGraph::generate(&spec(12, 5, 20, 30, 4, 0)).unwrap();
        for t in 0..30 {
            assert!(g.slot_edges(t).iter().all(|e| e.kind != EdgeKind::SatelliteToSatellite));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(
            ContactGraph::generate(&spec(12, 5, 20, 10, 5, 1)),
            Err(GraphError::InvalidSpec(m)) if m.contains("divide")
        ));
        assert!(ContactGraph::generate(&spec(0, 5, 20, 10, 1, 1)).is_err());
        assert!(ContactGraph::generate(&spec(4, 0, 20, 10, 1, 1)).is_err());
    }

    #[test]
    fn header_only_zero_horizon_loads_empty() {
        let g = ContactGraph::load("CSN v1 0 2 3 4\n").unwrap();
        assert_eq!(g.horizon(), 0);
        assert_eq!(g.edge_count(), 0);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn missing_su_edge_is_reported_with_slot() {
        let g = ContactGraph::generate(&spec(12, 5, 20, 10, 4, 1)).unwrap();
        let text: String = g
            .save()
            .lines()
            .filter(|l| !(l.starts_with("7 SU 3 ")))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = ContactGraph::load(&text).unwrap_err();
        match err {
            GraphError::Invariant { violation, .. } => {
                assert_eq!(violation, Violation::MissingDownlink { slot: 7, satellite: 3 });
                assert!(violation.to_string().contains("slot 7"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let cases = [
            ("CSN v1 1 1 1 1\n0 GS 0 0\n0 XX 0 0\n", 3),
            ("CSN v1 1 1 1 1\n# c\n0 GS 0 5\n", 3),
            ("CSN v1 1 1 1 1\n0 GS 0 0\n0 GS 0 0\n", 3),
            ("CSN v2 1 1 1 1\n", 1),
            ("CSN v1 1 1 1 1\n3 GS 0 0\n", 2),
        ];
        for (doc, line) in cases {
            match ContactGraph::load(doc) {
                Err(GraphError::Parse { line: l, .. }) => assert_eq!(l, line, "{doc}"),
                other => panic!("expected parse error for {doc:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn double_uplink_is_one_violation() {
        let mut edges = vec![ContactEdge::gs(0, 0, 0), ContactEdge::gs(0, 1, 0)];
        edges.push(ContactEdge::su(0, 0, 0));
        let g = ContactGraph::from_edges(1, 2, 1, 1, edges);
        assert_eq!(g.validate(), vec![Violation::ExtraUplinks { slot: 0, satellite: 0, count: 2 }]);
    }

    #[test]
    fn gateway_to_gateway_is_one_violation() {
        let edges = vec![
            ContactEdge::gs(0, 0, 0),
            ContactEdge::su(0, 0, 0),
            ContactEdge {
                slot: 0,
                kind: EdgeKind::GatewayToSatellite,
                src: NodeRef::Gateway(0),
                dst: NodeRef::Gateway(1),
            },
        ];
        let g = ContactGraph::from_edges(1, 2, 1, 1, edges);
        let v = g.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::ForbiddenLink { .. }));
    }

    #[test]
    fn out_edges_follow_kind_then_destination_order() {
        let g = ContactGraph::generate(&spec(6, 3, 6, 12, 2, 2)).unwrap();
        for t in 0..12 {
            for gw in 0..3 {
                let e = g.out_edges(NodeRef::Gateway(gw), t).unwrap();
                assert_eq!(e[0].kind, EdgeKind::GatewayHold);
            }
            for s in 0..6 {
                let e = g.out_edges(NodeRef::Satellite(s), t).unwrap();
                assert_eq!(e[0].kind, EdgeKind::SatelliteHold);
                assert_eq!(e.iter().filter(|e| e.kind == EdgeKind::SatelliteToUser).count(), 1);
                let keys: Vec<_> = e.iter().map(|e| (e.kind, e.dst)).collect();
                let mut sorted = keys.clone();
                sorted.sort();
                assert_eq!(keys, sorted);
            }
            assert!(g.out_edges(NodeRef::UserCluster(0), t).unwrap().is_empty());
        }
        assert!(matches!(
            g.out_edges(NodeRef::Gateway(0), 12),
            Err(GraphError::SlotOutOfRange { .. })
        ));
    }

    #[test]
    fn generated_ss_edges_are_symmetric() {
        let g = ContactGraph::generate(&spec(12, 5, 20, 40, 4, 2)).unwrap();
        for t in 0..40 {
            for s in 0..12 {
                for &s2 in g.ss_targets(t, s) {
                    assert!(g.has_ss(t, s2, s));
                }
            }
        }
    }

    #[test]
    fn identical_specs_save_identically() {
        let a = ContactGraph::generate(&spec(12, 5, 20, 50, 4, 2)).unwrap();
        let b = ContactGraph::generate(&spec(12, 5, 20, 50, 4, 2)).unwrap();
        assert_eq!(a.save(), b.save());
        assert_eq!(ContactGraph::load(&a.save()).unwrap(), a);
    }
}
