//! Graph model of the emulated IP network.
//!
//! Nodes are indexed by [`NodeId`]. Routing is destination-based with a
//! deterministic lowest-id tie-break, which makes every routed path the
//! lexicographically smallest shortest path between its endpoints. Subpaths
//! of routed paths are therefore routed paths themselves, a property the
//! on-path interception chain relies on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Index of a node within its [`Topology`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Router,
    Server,
}

/// An IP route from source to destination, both endpoints included.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IpPath {
    pub hops: Vec<NodeId>,
}

impl IpPath {
    /// Number of edges: the path length L used to group measurements.
    pub fn len_edges(&self) -> u32 {
        (self.hops.len() - 1) as u32
    }

    pub fn source(&self) -> NodeId {
        self.hops[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.hops.last().unwrap()
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph is disconnected: node {0:?} is not reachable from node {1:?}")]
    Disconnected(String, String),
    #[error("graph has no nodes")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(String),
    #[error("duplicate node name {0}")]
    DuplicateNode(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Undirected, hop-weighted graph with an OSP-membership subset.
///
/// Immutable after construction; all-pairs BFS distances are precomputed so
/// routing and the off-path-domain oracle are table lookups.
#[derive(Clone, Debug)]
pub struct Topology {
    names: Vec<String>,
    by_name: BTreeMap<String, NodeId>,
    adj: Vec<Vec<NodeId>>, // sorted, deduplicated
    roles: Vec<NodeRole>,
    member: Vec<bool>,
    dist: Vec<Vec<u16>>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn name(&self, n: NodeId) -> &str {
        &self.names[n.index()]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn role(&self, n: NodeId) -> NodeRole {
        self.roles[n.index()]
    }

    pub fn neighbors(&self, n: NodeId) -> &[NodeId] {
        &self.adj[n.index()]
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adj[n.index()].len()
    }

    pub fn is_member(&self, n: NodeId) -> bool {
        self.member[n.index()]
    }

    pub fn members(&self) -> Vec<NodeId> {
        self.nodes().filter(|&n| self.is_member(n)).collect()
    }

    pub fn member_count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// Restricts OSP membership to `members`; everything else becomes a pure
    /// IP forwarder.
    pub fn set_members(&mut self, members: &BTreeSet<NodeId>) {
        for (i, m) in self.member.iter_mut().enumerate() {
            *m = members.contains(&NodeId(i as u32));
        }
    }

    /// Hop distance between two nodes. Symmetric; zero iff `a == b`.
    pub fn ip_distance(&self, a: NodeId, b: NodeId) -> u32 {
        self.dist[a.index()][b.index()] as u32
    }

    /// Next hop from `from` toward `dest`: the lowest-id neighbor strictly
    /// closer to the destination. This is the single routing table shared by
    /// all traffic.
    pub fn next_hop(&self, from: NodeId, dest: NodeId) -> NodeId {
        debug_assert_ne!(from, dest);
        let d = self.dist[from.index()][dest.index()];
        *self.adj[from.index()]
            .iter()
            .find(|n| self.dist[n.index()][dest.index()] + 1 == d)
            .expect("connected graph always has a next hop")
    }

    /// Minimum-hop route from `src` to `dst`, deterministic under the
    /// lowest-id tie-break.
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> IpPath {
        let mut hops = vec![src];
        let mut cur = src;
        while cur != dst {
            cur = self.next_hop(cur, dst);
            hops.push(cur);
        }
        IpPath { hops }
    }

    /// Brute-force off-path domain: every OSP member within `r` hops of at
    /// least one node of `path`. Independent of the protocol engines; used
    /// as the ground truth for distribution coverage.
    pub fn off_path_domain_oracle(&self, path: &IpPath, r: u32) -> BTreeSet<NodeId> {
        self.nodes()
            .filter(|&v| self.is_member(v))
            .filter(|&v| path.hops.iter().any(|&p| self.ip_distance(v, p) <= r))
            .collect()
    }

    /// OSP adjacency of `u`: members whose routed path from `u` contains no
    /// other member in between. These are exactly the peers `u` can classify
    /// as neighbors, and the set its gossip discovery converges to.
    pub fn osp_adjacency(&self, u: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        for v in self.nodes() {
            if v == u || !self.is_member(v) {
                continue;
            }
            let path = self.shortest_path(u, v);
            if path.hops[1..path.hops.len() - 1]
                .iter()
                .all(|&w| !self.is_member(w))
            {
                out.insert(v);
            }
        }
        out
    }

    /// First OSP member strictly after the sender on the routed path, if any.
    pub fn first_member_after(&self, path: &IpPath) -> Option<NodeId> {
        path.hops[1..].iter().copied().find(|&n| self.is_member(n))
    }
}

/// Incrementally assembles a [`Topology`]; `build` validates connectivity.
pub struct TopologyBuilder {
    names: Vec<String>,
    by_name: BTreeMap<String, NodeId>,
    roles: Vec<NodeRole>,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        TopologyBuilder {
            names: Vec::new(),
            by_name: BTreeMap::new(),
            roles: Vec::new(),
            edges: BTreeSet::new(),
        }
    }

    pub fn add_node(&mut self, name: &str, role: NodeRole) -> Result<NodeId, TopologyError> {
        if self.by_name.contains_key(name) {
            return Err(TopologyError::DuplicateNode(name.to_string()));
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        self.roles.push(role);
        Ok(id)
    }

    /// Adds the node if it is not present yet; returns its id either way.
    pub fn intern_node(&mut self, name: &str, role: NodeRole) -> NodeId {
        match self.by_name.get(name) {
            Some(&id) => id,
            None => self.add_node(name, role).unwrap(),
        }
    }

    /// Undirected edge; parallel edges collapse, self-loops are rejected.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLoop(self.names[a.index()].clone()));
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.insert((lo, hi));
        Ok(())
    }

    pub fn build(self) -> Result<Topology, TopologyError> {
        if self.names.is_empty() {
            return Err(TopologyError::Empty);
        }
        let n = self.names.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a.index()].push(b);
            adj[b.index()].push(a);
        }
        for list in &mut adj {
            list.sort();
        }
        let dist = all_pairs_bfs(&adj);
        if let Some(unreachable) = dist[0].iter().position(|&d| d == u16::MAX) {
            return Err(TopologyError::Disconnected(
                self.names[unreachable].clone(),
                self.names[0].clone(),
            ));
        }
        Ok(Topology {
            member: vec![true; n],
            names: self.names,
            by_name: self.by_name,
            adj,
            roles: self.roles,
            dist,
        })
    }
}

impl Default for TopologyBuilder {
    fn default() -> Self {
        Self::new()
    }
}

fn all_pairs_bfs(adj: &[Vec<NodeId>]) -> Vec<Vec<u16>> {
    let n = adj.len();
    let mut dist = vec![vec![u16::MAX; n]; n];
    for src in 0..n {
        let row = &mut dist[src];
        row[src] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(NodeId(src as u32));
        while let Some(u) = queue.pop_front() {
            let du = row[u.index()];
            for &v in &adj[u.index()] {
                if row[v.index()] == u16::MAX {
                    row[v.index()] = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// Loads a topology file, dispatching on extension: `.gml` is parsed as
/// topology-zoo GML, anything else as a plain edge list.
pub fn load_topology(path: &Path) -> Result<Topology, TopologyError> {
    let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gml")) {
        parse_gml(&text)
    } else {
        parse_edge_list(&text)
    }
}

/// Parses the topology-zoo GML dialect:
/// `graph [ node [ id 0 label "A" ] edge [ source 0 target 1 ] ]`.
///
/// Unknown attributes are skipped. Node ids may be arbitrary integers; the
/// resulting [`NodeId`]s follow file order. An optional `role "server"`
/// attribute marks server nodes.
pub fn parse_gml(text: &str) -> Result<Topology, TopologyError> {
    let tokens = gml_tokenize(text)?;
    let mut parser = GmlParser {
        tokens: &tokens,
        pos: 0,
    };
    let doc = parser.parse_block_body(true)?;
    let graph = doc
        .iter()
        .find_map(|(k, v)| match (k.as_str(), v) {
            ("graph", GmlValue::Block(items)) => Some(items),
            _ => None,
        })
        .ok_or_else(|| TopologyError::Parse {
            line: 1,
            msg: "missing graph block".into(),
        })?;

    let mut builder = TopologyBuilder::new();
    let mut gml_ids: BTreeMap<i64, NodeId> = BTreeMap::new();
    for (key, value) in graph {
        if key != "node" {
            continue;
        }
        let GmlValue::Block(attrs) = value else {
            return Err(TopologyError::Parse {
                line: 0,
                msg: "node is not a block".into(),
            });
        };
        let mut id = None;
        let mut label = None;
        let mut role = NodeRole::Router;
        for (k, v) in attrs {
            match (k.as_str(), v) {
                ("id", GmlValue::Int(i)) => id = Some(*i),
                ("label", GmlValue::Str(s)) => label = Some(s.clone()),
                ("role", GmlValue::Str(s)) if s == "server" => role = NodeRole::Server,
                _ => {}
            }
        }
        let id = id.ok_or_else(|| TopologyError::Parse {
            line: 0,
            msg: "node without id".into(),
        })?;
        let name = label.unwrap_or_else(|| format!("n{id}"));
        if gml_ids.contains_key(&id) {
            return Err(TopologyError::Parse {
                line: 0,
                msg: format!("duplicate node id {id}"),
            });
        }
        let node = builder.add_node(&name, role)?;
        gml_ids.insert(id, node);
    }
    for (key, value) in graph {
        if key != "edge" {
            continue;
        }
        let GmlValue::Block(attrs) = value else {
            return Err(TopologyError::Parse {
                line: 0,
                msg: "edge is not a block".into(),
            });
        };
        let mut source = None;
        let mut target = None;
        for (k, v) in attrs {
            match (k.as_str(), v) {
                ("source", GmlValue::Int(i)) => source = Some(*i),
                ("target", GmlValue::Int(i)) => target = Some(*i),
                _ => {}
            }
        }
        let (Some(s), Some(t)) = (source, target) else {
            return Err(TopologyError::Parse {
                line: 0,
                msg: "edge without source/target".into(),
            });
        };
        let lookup = |i: i64| {
            gml_ids.get(&i).copied().ok_or_else(|| TopologyError::Parse {
                line: 0,
                msg: format!("edge references unknown node id {i}"),
            })
        };
        builder.add_edge(lookup(s)?, lookup(t)?)?;
    }
    builder.build()
}

#[derive(Debug)]
enum GmlValue {
    Int(i64),
    #[allow(dead_code)]
    Float(f64),
    Str(String),
    Block(Vec<(String, GmlValue)>),
}

#[derive(Debug, PartialEq)]
enum GmlToken {
    Open,
    Close,
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
}

fn gml_tokenize(text: &str) -> Result<Vec<(usize, GmlToken)>, TopologyError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut line = 1usize;
    while let Some(&(start, c)) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '[' => {
                tokens.push((line, GmlToken::Open));
                chars.next();
            }
            ']' => {
                tokens.push((line, GmlToken::Close));
                chars.next();
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, '\n')) => {
                            return Err(TopologyError::Parse {
                                line,
                                msg: "unterminated string".into(),
                            })
                        }
                        Some((_, c)) => s.push(c),
                        None => {
                            return Err(TopologyError::Parse {
                                line,
                                msg: "unterminated string".into(),
                            })
                        }
                    }
                }
                tokens.push((line, GmlToken::Str(s)));
            }
            c if c == '-' || c == '+' || c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_digit() || "+-.eE".contains(c) {
                        s.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                let tok = if let Ok(i) = s.parse::<i64>() {
                    GmlToken::Int(i)
                } else if let Ok(f) = s.parse::<f64>() {
                    GmlToken::Float(f)
                } else {
                    return Err(TopologyError::Parse {
                        line,
                        msg: format!("bad number {s:?}"),
                    });
                };
                tokens.push((line, tok));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push((line, GmlToken::Ident(s)));
            }
            _ => {
                return Err(TopologyError::Parse {
                    line,
                    msg: format!("unexpected character {c:?} at byte {start}"),
                })
            }
        }
    }
    Ok(tokens)
}

struct GmlParser<'a> {
    tokens: &'a [(usize, GmlToken)],
    pos: usize,
}

impl GmlParser<'_> {
    fn parse_block_body(&mut self, top: bool) -> Result<Vec<(String, GmlValue)>, TopologyError> {
        let mut items = Vec::new();
        loop {
            match self.tokens.get(self.pos) {
                None if top => return Ok(items),
                None => {
                    return Err(TopologyError::Parse {
                        line: self.tokens.last().map_or(1, |t| t.0),
                        msg: "unexpected end of input inside block".into(),
                    })
                }
                Some((_, GmlToken::Close)) if !top => {
                    self.pos += 1;
                    return Ok(items);
                }
                Some((line, GmlToken::Ident(key))) => {
                    let key = key.clone();
                    let line = *line;
                    self.pos += 1;
                    let value = match self.tokens.get(self.pos) {
                        Some((_, GmlToken::Open)) => {
                            self.pos += 1;
                            GmlValue::Block(self.parse_block_body(false)?)
                        }
                        Some((_, GmlToken::Int(i))) => {
                            self.pos += 1;
                            GmlValue::Int(*i)
                        }
                        Some((_, GmlToken::Float(f))) => {
                            self.pos += 1;
                            GmlValue::Float(*f)
                        }
                        Some((_, GmlToken::Str(s))) => {
                            self.pos += 1;
                            GmlValue::Str(s.clone())
                        }
                        _ => {
                            return Err(TopologyError::Parse {
                                line,
                                msg: format!("key {key:?} without value"),
                            })
                        }
                    };
                    items.push((key, value));
                }
                Some((line, tok)) => {
                    return Err(TopologyError::Parse {
                        line: *line,
                        msg: format!("unexpected token {tok:?}"),
                    })
                }
            }
        }
    }
}

/// Parses a plain edge list: one `idA idB` pair per line, `#` comments.
/// Semicolons separate pairs within a line. Nodes are interned in encounter
/// order and default to the router role.
pub fn parse_edge_list(text: &str) -> Result<Topology, TopologyError> {
    let mut builder = TopologyBuilder::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for stmt in line.split(';') {
            let mut it = stmt.split_whitespace();
            let Some(a) = it.next() else { continue };
            let Some(b) = it.next() else {
                return Err(TopologyError::Parse {
                    line: lineno + 1,
                    msg: format!("expected two node names, got {stmt:?}"),
                });
            };
            if it.next().is_some() {
                return Err(TopologyError::Parse {
                    line: lineno + 1,
                    msg: format!("trailing tokens after edge {stmt:?}"),
                });
            }
            let na = builder.intern_node(a, NodeRole::Router);
            let nb = builder.intern_node(b, NodeRole::Router);
            if na == nb {
                return Err(TopologyError::Parse {
                    line: lineno + 1,
                    msg: format!("self-loop on {a:?}"),
                });
            }
            builder.add_edge(na, nb)?;
        }
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize) -> Topology {
        let mut b = TopologyBuilder::new();
        let ids: Vec<_> = (0..n)
            .map(|i| b.add_node(&format!("v{i}"), NodeRole::Router).unwrap())
            .collect();
        for w in ids.windows(2) {
            b.add_edge(w[0], w[1]).unwrap();
        }
        b.build().unwrap()
    }

    fn star(leaves: usize) -> Topology {
        let mut b = TopologyBuilder::new();
        let c = b.add_node("c", NodeRole::Router).unwrap();
        for i in 0..leaves {
            let l = b.add_node(&format!("l{}", i + 1), NodeRole::Router).unwrap();
            b.add_edge(c, l).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn edge_list_semicolons() {
        let t = parse_edge_list("a b; b c").unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.ip_distance(NodeId(0), NodeId(2)), 2);
    }

    #[test]
    fn edge_list_comments_and_blank_lines() {
        let t = parse_edge_list("# heading\n\na b\nb c # tail comment\n").unwrap();
        assert_eq!(t.node_count(), 3);
    }

    #[test]
    fn edge_list_rejects_garbage() {
        assert!(parse_edge_list("a").is_err());
        assert!(parse_edge_list("a b c").is_err());
        assert!(parse_edge_list("a a").is_err());
    }

    #[test]
    fn disconnected_rejected() {
        assert!(matches!(
            parse_edge_list("a b\nc d"),
            Err(TopologyError::Disconnected(..))
        ));
    }

    #[test]
    fn shortest_path_line() {
        let t = parse_edge_list("a b; b c").unwrap();
        let p = t.shortest_path(NodeId(0), NodeId(2));
        assert_eq!(p.hops, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(p.len_edges(), 2);
    }

    #[test]
    fn shortest_path_identity() {
        let t = line(3);
        let p = t.shortest_path(NodeId(1), NodeId(1));
        assert_eq!(p.hops, vec![NodeId(1)]);
        assert_eq!(p.len_edges(), 0);
    }

    #[test]
    fn star_routes_through_center() {
        let t = star(4);
        let l1 = t.node_by_name("l1").unwrap();
        let l2 = t.node_by_name("l2").unwrap();
        let c = t.node_by_name("c").unwrap();
        assert_eq!(t.shortest_path(l1, l2).hops, vec![l1, c, l2]);
    }

    #[test]
    fn distance_trivia() {
        let t = line(3);
        assert_eq!(t.ip_distance(NodeId(0), NodeId(0)), 0);
        assert_eq!(t.ip_distance(NodeId(0), NodeId(2)), 2);
        assert_eq!(t.ip_distance(NodeId(2), NodeId(0)), 2);
    }

    #[test]
    fn oracle_r0_is_on_path_members() {
        let t = line(5);
        let p = t.shortest_path(NodeId(0), NodeId(4));
        let dom = t.off_path_domain_oracle(&p, 0);
        assert_eq!(dom, p.hops.iter().copied().collect());
    }

    #[test]
    fn oracle_line_r1_covers_all() {
        let t = line(5);
        let p = t.shortest_path(NodeId(0), NodeId(4));
        let dom = t.off_path_domain_oracle(&p, 1);
        assert_eq!(dom.len(), 5);
    }

    #[test]
    fn oracle_star_r1_covers_all_leaves() {
        let t = star(4);
        let l1 = t.node_by_name("l1").unwrap();
        let l2 = t.node_by_name("l2").unwrap();
        let p = t.shortest_path(l1, l2);
        let dom = t.off_path_domain_oracle(&p, 1);
        assert_eq!(dom.len(), 5);
    }

    #[test]
    fn oracle_respects_membership() {
        let mut t = line(5);
        t.set_members(&[NodeId(0), NodeId(4)].into_iter().collect());
        let p = t.shortest_path(NodeId(0), NodeId(4));
        let dom = t.off_path_domain_oracle(&p, 0);
        assert_eq!(dom, [NodeId(0), NodeId(4)].into_iter().collect());
    }

    #[test]
    fn osp_adjacency_partial_deployment() {
        let mut t = line(5);
        t.set_members(&[NodeId(0), NodeId(2), NodeId(4)].into_iter().collect());
        assert_eq!(t.osp_adjacency(NodeId(0)), [NodeId(2)].into_iter().collect());
        assert_eq!(
            t.osp_adjacency(NodeId(2)),
            [NodeId(0), NodeId(4)].into_iter().collect()
        );
    }

    #[test]
    fn gml_roundtrip_small() {
        let text = r#"
            graph [
              directed 0
              node [ id 10 label "A" ]
              node [ id 20 label "B" ]
              node [ id 30 label "C" role "server" ]
              edge [ source 10 target 20 ]
              edge [ source 20 target 30 ]
            ]
        "#;
        let t = parse_gml(text).unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.name(NodeId(0)), "A");
        assert_eq!(t.role(NodeId(2)), NodeRole::Server);
        assert_eq!(t.ip_distance(NodeId(0), NodeId(2)), 2);
    }

    #[test]
    fn gml_rejects_malformed() {
        assert!(parse_gml("graph [").is_err());
        assert!(parse_gml("graph [ node [ label \"A\" ] ]").is_err());
        assert!(parse_gml("graph [ node [ id 1 ] edge [ source 1 target 9 ] ]").is_err());
        assert!(parse_gml("graph [ node [ id 1 ] node [ id 1 ] edge [ source 1 target 1 ] ]").is_err());
        assert!(parse_gml("graph [ %% ]").is_err());
    }

    #[test]
    fn shipped_geant_file() {
        let t = load_topology(Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/geant.gml"
        )))
        .unwrap();
        assert_eq!(t.node_count(), 41);
        assert!(t.nodes().all(|n| t.role(n) == NodeRole::Router));
        let de = t.node_by_name("DE").unwrap();
        assert_eq!(t.degree(de), 9);
        let max_ecc = t
            .nodes()
            .map(|a| t.nodes().map(|b| t.ip_distance(a, b)).max().unwrap())
            .max()
            .unwrap();
        assert_eq!(max_ecc, 7);
    }

    #[test]
    fn shipped_abilene_file() {
        let t = load_topology(Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/abilene.gml"
        )))
        .unwrap();
        assert_eq!(t.node_count(), 34);
    }

    #[test]
    fn geant_distance_matches_independent_bfs() {
        // Independent BFS oracle over the adjacency lists, no routing tables.
        let t = load_topology(Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../scenarios/geant.gml"
        )))
        .unwrap();
        let il = t.node_by_name("IL").unwrap();
        let is = t.node_by_name("IS").unwrap();
        let mut dist = vec![u32::MAX; t.node_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[il.index()] = 0;
        queue.push_back(il);
        while let Some(u) = queue.pop_front() {
            for &v in t.neighbors(u) {
                if dist[v.index()] == u32::MAX {
                    dist[v.index()] = dist[u.index()] + 1;
                    queue.push_back(v);
                }
            }
        }
        assert_eq!(dist[is.index()], t.ip_distance(il, is));
        assert_eq!(t.ip_distance(il, is), 7);
    }

    fn arbitrary_connected_graph() -> impl Strategy<Value = Topology> {
        // Random tree plus random extra edges keeps the graph connected.
        (2usize..24, any::<u64>()).prop_map(|(n, seed)| {
            let mut b = TopologyBuilder::new();
            let ids: Vec<_> = (0..n)
                .map(|i| b.add_node(&format!("g{i}"), NodeRole::Router).unwrap())
                .collect();
            let mut state = seed | 1;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                state
            };
            for i in 1..n {
                let parent = (next() as usize) % i;
                b.add_edge(ids[i], ids[parent]).unwrap();
            }
            for _ in 0..n {
                let a = (next() as usize) % n;
                let c = (next() as usize) % n;
                if a != c {
                    b.add_edge(ids[a], ids[c]).unwrap();
                }
            }
            b.build().unwrap()
        })
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_triangle(t in arbitrary_connected_graph(), s in any::<u64>()) {
            let n = t.node_count() as u64;
            let a = NodeId((s % n) as u32);
            let b = NodeId(((s / n) % n) as u32);
            let c = NodeId(((s / n / n) % n) as u32);
            prop_assert_eq!(t.ip_distance(a, b), t.ip_distance(b, a));
            prop_assert!(t.ip_distance(a, c) <= t.ip_distance(a, b) + t.ip_distance(b, c));
        }

        #[test]
        fn oracle_monotone_in_r(t in arbitrary_connected_graph(), s in any::<u64>(), r in 0u32..4) {
            let n = t.node_count() as u64;
            let a = NodeId((s % n) as u32);
            let b = NodeId(((s / n) % n) as u32);
            let p = t.shortest_path(a, b);
            let d0 = t.off_path_domain_oracle(&p, r);
            let d1 = t.off_path_domain_oracle(&p, r + 1);
            prop_assert!(d0.is_subset(&d1));
            for h in &p.hops {
                prop_assert!(d0.contains(h));
            }
        }

        #[test]
        fn routed_paths_are_subpath_consistent(t in arbitrary_connected_graph(), s in any::<u64>()) {
            // Every suffix and prefix of a routed path must itself be the
            // routed path between its endpoints; interception chains and
            // PeT classification both rest on this.
            let n = t.node_count() as u64;
            let a = NodeId((s % n) as u32);
            let b = NodeId(((s / n) % n) as u32);
            let p = t.shortest_path(a, b);
            for i in 0..p.hops.len() {
                let suffix = t.shortest_path(p.hops[i], b);
                prop_assert_eq!(&suffix.hops[..], &p.hops[i..]);
                let prefix = t.shortest_path(a, p.hops[i]);
                prop_assert_eq!(&prefix.hops[..], &p.hops[..=i]);
            }
        }
    }
}
