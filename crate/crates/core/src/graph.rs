//! Directed graphs, strongly connected components and Menger connectivity.
//!
//! Every graph is stored as a set of directed links. Undirected inputs are
//! represented by inserting both arcs, so connectivity of an undirected
//! network is the connectivity of its symmetrized digraph. Self-loops are
//! kept in the data model (consensus neighbourhoods and system digraphs need
//! them) but never lie on an `i -> j` path, so connectivity ignores them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A directed graph on nodes `0..node_count` with optional link weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectedGraph {
    node_count: usize,
    links: BTreeMap<(usize, usize), Option<f64>>,
}

impl DirectedGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            links: BTreeMap::new(),
        }
    }

    pub fn from_links<I>(node_count: usize, links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(node_count);
        for (from, to) in links {
            g.add_link(from, to)?;
        }
        Ok(g)
    }

    /// Builds a graph from undirected edges by inserting both arcs of each.
    pub fn from_undirected<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(node_count);
        for (a, b) in edges {
            g.add_undirected_link(a, b)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_count == 0
    }

    /// Links in lexicographic `(from, to)` order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.keys().copied()
    }

    pub fn weighted_links(&self) -> impl Iterator<Item = ((usize, usize), Option<f64>)> + '_ {
        self.links.iter().map(|(&k, &w)| (k, w))
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.links.get(&(from, to)).copied().flatten()
    }

    pub fn has_link(&self, from: usize, to: usize) -> bool {
        self.links.contains_key(&(from, to))
    }

    fn check_node(&self, index: usize) -> Result<()> {
        if index < self.node_count {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                index,
                node_count: self.node_count,
            })
        }
    }

    pub fn add_link(&mut self, from: usize, to: usize) -> Result<()> {
        self.insert(from, to, None)
    }

    pub fn add_weighted_link(&mut self, from: usize, to: usize, weight: f64) -> Result<()> {
        self.insert(from, to, Some(weight))
    }

    fn insert(&mut self, from: usize, to: usize, weight: Option<f64>) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if self.links.insert((from, to), weight).is_some() {
            return Err(Error::DuplicateLink(from, to));
        }
        Ok(())
    }

    /// Inserts `a -> b` and `b -> a`. A self-loop is inserted once.
    pub fn add_undirected_link(&mut self, a: usize, b: usize) -> Result<()> {
        self.add_link(a, b)?;
        if a != b {
            self.add_link(b, a)?;
        }
        Ok(())
    }

    pub fn remove_link(&mut self, from: usize, to: usize) -> Result<()> {
        self.links
            .remove(&(from, to))
            .map(|_| ())
            .ok_or(Error::MissingLink(from, to))
    }

    /// Targets of links leaving `node`, ascending.
    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        self.links
            .range((node, 0)..(node + 1, 0))
            .map(|(&(_, to), _)| to)
            .collect()
    }

    /// Sources of links entering `node`, ascending. For a consensus network
    /// this is the neighbourhood `N_i` (nodes that send to `node`).
    pub fn in_neighbors(&self, node: usize) -> Vec<usize> {
        self.links
            .keys()
            .filter(|&&(_, to)| to == node)
            .map(|&(from, _)| from)
            .collect()
    }

    pub fn has_self_loop(&self, node: usize) -> bool {
        self.has_link(node, node)
    }

    /// Copy with a self-loop on every node.
    pub fn with_self_loops(&self) -> Self {
        let mut g = self.clone();
        for v in 0..self.node_count {
            g.links.entry((v, v)).or_insert(None);
        }
        g
    }

    pub fn without_self_loops(&self) -> Self {
        let mut g = self.clone();
        g.links.retain(|&(a, b), _| a != b);
        g
    }

    /// Adds the reverse of every link that lacks one.
    pub fn symmetrized(&self) -> Self {
        let mut g = self.clone();
        for (a, b) in self.links() {
            g.links.entry((b, a)).or_insert(None);
        }
        g
    }

    pub fn is_symmetric(&self) -> bool {
        self.links().all(|(a, b)| self.has_link(b, a))
    }

    /// Adjacency lists (out-links) without self-loops.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for (a, b) in self.links() {
            if a != b {
                adj[a].push(b);
            }
        }
        adj
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    g.links.insert((a, b), None);
                }
            }
        }
        g
    }

    /// Undirected cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn cycle(n: usize) -> Self {
        Self::ring(n, 1)
    }

    /// Undirected star with hub `0`.
    pub fn star(n: usize) -> Self {
        let mut g = Self::new(n);
        for leaf in 1..n {
            g.links.insert((0, leaf), None);
            g.links.insert((leaf, 0), None);
        }
        g
    }

    /// Undirected path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let mut g = Self::new(n);
        for a in 1..n {
            g.links.insert((a - 1, a), None);
            g.links.insert((a, a - 1), None);
        }
        g
    }

    /// Undirected ring where each node links to its `m` nearest neighbours
    /// on either side.
    pub fn ring(n: usize, m: usize) -> Self {
        let mut g = Self::new(n);
        for a in 0..n {
            for step in 1..=m {
                let b = (a + step) % n;
                if a != b {
                    g.links.insert((a, b), None);
                    g.links.insert((b, a), None);
                }
            }
        }
        g
    }

    /// Serializes to the line format read by [`parse_graph`].
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count);
        for ((a, b), w) in self.weighted_links() {
            match w {
                Some(w) => out.push_str(&format!("{a} {b} {w}\n")),
                None => out.push_str(&format!("{a} {b}\n")),
            }
        }
        out
    }
}

/// Parses the graph text format: a `nodes N` header followed by one
/// `i j [w]` line per link (0-based). Blank lines and `#` comments are
/// skipped.
pub fn parse_graph(text: &str) -> Result<DirectedGraph> {
    let mut graph: Option<DirectedGraph> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse { line, msg };
        match graph.as_mut() {
            None => {
                if fields.len() != 2 || fields[0] != "nodes" {
                    return Err(parse_err(format!("expected `nodes N` header, found `{content}`")));
                }
                let n = fields[1]
                    .parse::<usize>()
                    .map_err(|e| parse_err(format!("bad node count: {e}")))?;
                graph = Some(DirectedGraph::new(n));
            }
            Some(g) => {
                if fields.len() < 2 || fields.len() > 3 {
                    return Err(parse_err(format!("expected `i j [w]`, found `{content}`")));
                }
                let idx = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|e| parse_err(format!("bad node index `{s}`: {e}")))
                };
                let (a, b) = (idx(fields[0])?, idx(fields[1])?);
                let res = match fields.get(2) {
                    Some(w) => {
                        let w = w
                            .parse::<f64>()
                            .map_err(|e| parse_err(format!("bad weight `{w}`: {e}")))?;
                        g.add_weighted_link(a, b, w)
                    }
                    None => g.add_link(a, b),
                };
                res.map_err(|e| parse_err(e.to_string()))?;
            }
        }
    }
    graph.ok_or(Error::Parse {
        line: 0,
        msg: "missing `nodes N` header".into(),
    })
}

/// Named constructors accepted wherever a topology can be given inline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedTopology {
    Complete(usize),
    Cycle(usize),
    Star(usize),
    Path(usize),
    Ring { n: usize, m: usize },
}

impl NamedTopology {
    pub fn build(&self) -> DirectedGraph {
        match *self {
            NamedTopology::Complete(n) => DirectedGraph::complete(n),
            NamedTopology::Cycle(n) => DirectedGraph::cycle(n),
            NamedTopology::Star(n) => DirectedGraph::star(n),
            NamedTopology::Path(n) => DirectedGraph::path(n),
            NamedTopology::Ring { n, m } => DirectedGraph::ring(n, m),
        }
    }

    pub fn node_count(&self) -> usize {
        match *self {
            NamedTopology::Complete(n)
            | NamedTopology::Cycle(n)
            | NamedTopology::Star(n)
            | NamedTopology::Path(n)
            | NamedTopology::Ring { n, .. } => n,
        }
    }

    /// Node/link connectivity as tabulated in the usual survey of these
    /// families. The complete graph is listed as `n` there; the computed
    /// value is `n - 1` since no removal set disconnects `K_n`.
    pub fn tabulated_connectivity(&self) -> usize {
        match *self {
            NamedTopology::Complete(n) => n,
            NamedTopology::Cycle(_) => 2,
            NamedTopology::Star(_) | NamedTopology::Path(_) => 1,
            NamedTopology::Ring { m, .. } => 2 * m,
        }
    }
}

impl fmt::Display for NamedTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NamedTopology::Complete(n) => write!(f, "complete({n})"),
            NamedTopology::Cycle(n) => write!(f, "cycle({n})"),
            NamedTopology::Star(n) => write!(f, "star({n})"),
            NamedTopology::Path(n) => write!(f, "path({n})"),
            NamedTopology::Ring { n, m } => write!(f, "ring({n},{m})"),
        }
    }
}

impl FromStr for NamedTopology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| format!("`{s}` is not a named topology"))?;
        if !s.ends_with(')') {
            return Err(format!("`{s}` is missing a closing parenthesis"));
        }
        let name = s[..open].trim();
        let args: Vec<usize> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<usize>().map_err(|e| format!("bad argument `{a}`: {e}")))
            .collect::<Result<_, _>>()?;
        match (name, args.as_slice()) {
            ("complete", &[n]) => Ok(NamedTopology::Complete(n)),
            ("cycle", &[n]) => Ok(NamedTopology::Cycle(n)),
            ("star", &[n]) => Ok(NamedTopology::Star(n)),
            ("path", &[n]) => Ok(NamedTopology::Path(n)),
            ("ring", &[n, m]) => Ok(NamedTopology::Ring { n, m }),
            _ => Err(format!("unknown topology `{s}`")),
        }
    }
}

/// Strongly connected components with their condensation.
#[derive(Debug, Clone, PartialEq)]
pub struct SccDecomposition {
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
    condensation: DirectedGraph,
    parent: Vec<bool>,
}

impl SccDecomposition {
    /// Components sorted by their smallest node; nodes ascending within each.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_of(&self, node: usize) -> usize {
        self.component_of[node]
    }

    /// Acyclic graph over component indices.
    pub fn condensation(&self) -> &DirectedGraph {
        &self.condensation
    }

    /// A parent component has no outgoing link in the condensation.
    pub fn is_parent(&self, component: usize) -> bool {
        self.parent[component]
    }

    pub fn parent_flags(&self) -> &[bool] {
        &self.parent
    }

    pub fn parent_components(&self) -> Vec<&[usize]> {
        self.components
            .iter()
            .zip(&self.parent)
            .filter(|(_, &p)| p)
            .map(|(c, _)| c.as_slice())
            .collect()
    }

    /// `a ≺ b`: a condensation path leads from component `a` to `b`.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let mut seen = vec![false; self.components.len()];
        let mut stack = vec![a];
        seen[a] = true;
        while let Some(c) = stack.pop() {
            for next in self.condensation.out_neighbors(c) {
                if next == b {
                    return true;
                }
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        false
    }

    /// Kahn's algorithm over the condensation. Always `Some` for a valid
    /// decomposition.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let k = self.components.len();
        let mut indeg = vec![0usize; k];
        for (_, b) in self.condensation.links() {
            indeg[b] += 1;
        }
        let mut queue: VecDeque<usize> = (0..k).filter(|&c| indeg[c] == 0).collect();
        let mut order = Vec::with_capacity(k);
        while let Some(c) = queue.pop_front() {
            order.push(c);
            for next in self.condensation.out_neighbors(c) {
                indeg[next] -= 1;
                if indeg[next] == 0 {
                    queue.push_back(next);
                }
            }
        }
        (order.len() == k).then_some(order)
    }
}

/// Tarjan's algorithm, iterative so deep graphs do not exhaust the stack.
pub fn scc_decompose(g: &DirectedGraph) -> SccDecomposition {
    let n = g.node_count();
    let adj = g.adjacency();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut raw: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0usize;
    // (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&(v, pos)) = call.last() {
            if pos < adj[v].len() {
                let w = adj[v][pos];
                call.last_mut().expect("non-empty").1 += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    raw.push(comp);
                }
            }
        }
    }

    raw.sort_by_key(|c| c[0]);
    let mut component_of = vec![0usize; n];
    for (cid, comp) in raw.iter().enumerate() {
        for &v in comp {
            component_of[v] = cid;
        }
    }
    let mut condensation = DirectedGraph::new(raw.len());
    for (a, b) in g.links() {
        let (ca, cb) = (component_of[a], component_of[b]);
        if ca != cb {
            condensation.links.entry((ca, cb)).or_insert(None);
        }
    }
    let parent = (0..raw.len())
        .map(|c| condensation.out_neighbors(c).is_empty())
        .collect();
    SccDecomposition {
        components: raw,
        component_of,
        condensation,
        parent,
    }
}

pub fn is_strongly_connected(g: &DirectedGraph) -> bool {
    g.node_count() >= 1 && scc_decompose(g).len() == 1
}

/// Residual network for unit-ish capacity max-flow (Edmonds–Karp).
struct FlowNetwork {
    heads: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u64>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        Self {
            heads: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, cap: u64) {
        self.heads[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(cap);
        self.heads[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let n = self.heads.len();
        let mut flow = 0;
        loop {
            let mut via = vec![usize::MAX; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                if v == t {
                    break;
                }
                for &e in &self.heads[v] {
                    let w = self.to[e];
                    if self.cap[e] > 0 && !seen[w] {
                        seen[w] = true;
                        via[w] = e;
                        queue.push_back(w);
                    }
                }
            }
            if !seen[t] {
                return flow;
            }
            let mut bottleneck = u64::MAX;
            let mut v = t;
            while v != s {
                let e = via[v];
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.to[e ^ 1];
            }
            flow += bottleneck;
        }
    }
}

/// Maximum number of link-disjoint directed paths from `s` to `t`.
pub fn max_link_disjoint_paths(g: &DirectedGraph, s: usize, t: usize) -> usize {
    if s == t {
        return 0;
    }
    let mut net = FlowNetwork::new(g.node_count());
    for (a, b) in g.links() {
        if a != b {
            net.add_edge(a, b, 1);
        }
    }
    net.max_flow(s, t) as usize
}

/// Maximum number of internally node-disjoint paths from `s` to `t`, via the
/// node-split transform. `None` when `s -> t` is a link: no node removal can
/// separate adjacent nodes.
pub fn max_node_disjoint_paths(g: &DirectedGraph, s: usize, t: usize) -> Option<usize> {
    if s == t || g.has_link(s, t) {
        return None;
    }
    let n = g.node_count();
    let inf = n as u64 + 1;
    // v_in = v, v_out = v + n
    let mut net = FlowNetwork::new(2 * n);
    for v in 0..n {
        let cap = if v == s || v == t { inf } else { 1 };
        net.add_edge(v, v + n, cap);
    }
    for (a, b) in g.links() {
        if a != b {
            net.add_edge(a + n, b, inf);
        }
    }
    Some(net.max_flow(s + n, t) as usize)
}

/// Minimum number of link removals that destroys strong connectivity.
///
/// For a fixed node `r`, every minimum cut separates `r` from some `v` in one
/// direction, so `min_v min(λ(r,v), λ(v,r))` equals the minimum over all
/// ordered pairs.
pub fn link_connectivity(g: &DirectedGraph) -> Result<usize> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::ConnectivityUndefined(n));
    }
    let best = (1..n)
        .map(|v| max_link_disjoint_paths(g, 0, v).min(max_link_disjoint_paths(g, v, 0)))
        .min()
        .unwrap_or(0);
    Ok(best)
}

/// Minimum number of node removals that leaves some ordered pair without a
/// path. Graphs where every ordered pair is adjacent report `n - 1`.
pub fn node_connectivity(g: &DirectedGraph) -> usize {
    let n = g.node_count();
    let mut best: Option<usize> = None;
    for s in 0..n {
        for t in 0..n {
            if let Some(k) = max_node_disjoint_paths(g, s, t) {
                best = Some(best.map_or(k, |b| b.min(k)));
            }
        }
    }
    best.unwrap_or(n.saturating_sub(1))
}

/// A subgraph left after removals, with the original index of every
/// surviving node.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedSubgraph {
    pub graph: DirectedGraph,
    pub original: Vec<usize>,
}

impl InducedSubgraph {
    pub fn new_index_of(&self, original: usize) -> Option<usize> {
        self.original.iter().position(|&o| o == original)
    }
}

/// Removes nodes (with their incident links) and the given links, then
/// re-indexes the survivors in ascending original order.
pub fn survives_removal(
    g: &DirectedGraph,
    removed_nodes: &BTreeSet<usize>,
    removed_links: &BTreeSet<(usize, usize)>,
) -> Result<InducedSubgraph> {
    for &v in removed_nodes {
        g.check_node(v)?;
    }
    for &(a, b) in removed_links {
        if !g.has_link(a, b) {
            return Err(Error::MissingLink(a, b));
        }
    }
    let original: Vec<usize> = (0..g.node_count())
        .filter(|v| !removed_nodes.contains(v))
        .collect();
    let mut new_index = vec![usize::MAX; g.node_count()];
    for (i, &o) in original.iter().enumerate() {
        new_index[o] = i;
    }
    let mut graph = DirectedGraph::new(original.len());
    for ((a, b), w) in g.weighted_links() {
        if removed_links.contains(&(a, b)) || removed_nodes.contains(&a) || removed_nodes.contains(&b) {
            continue;
        }
        graph.links.insert((new_index[a], new_index[b]), w);
    }
    Ok(InducedSubgraph { graph, original })
}
