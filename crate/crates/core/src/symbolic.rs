//! Finite-word combinatorics of subshifts of finite type.
//!
//! A subshift is given by an alphabet `{1, …, p}` and a finite set `Q` of
//! forbidden words. Its admissible sequences are presented by a
//! [`FollowerGraph`] whose nodes are the allowed words of length `l(Q) − 1`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// A finite word over the alphabet `{1, …, p}` (symbols are 1-based).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(Vec<u32>);

impl Word {
    pub fn new(symbols: Vec<u32>) -> Self {
        Word(symbols)
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<u32> {
        self.0.first().copied()
    }

    /// The shifted word `σw` (drops the first symbol).
    pub fn tail(&self) -> Word {
        Word(self.0.get(1..).unwrap_or_default().to_vec())
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn push(&self, symbol: u32) -> Word {
        let mut v = self.0.clone();
        v.push(symbol);
        Word(v)
    }

    /// True if `other` occurs as a contiguous sub-word.
    pub fn contains(&self, other: &Word) -> bool {
        contains_subword(&self.0, &other.0)
    }

    /// Shortest `u` with `self = u^k`.
    pub fn primitive_root(&self) -> Word {
        let n = self.0.len();
        for d in 1..n {
            if n % d == 0 && (d..n).all(|i| self.0[i] == self.0[i - d]) {
                return Word(self.0[..d].to_vec());
            }
        }
        self.clone()
    }

    /// Parse `"1,2,1"`, `"1.2.1"` or `"121"` (the last only for single digits).
    pub fn parse(src: &str) -> Result<Word> {
        let src = src.trim().trim_start_matches('[').trim_end_matches(']');
        let parts: Vec<&str> = if src.contains(',') || src.contains('.') || src.contains(' ') {
            src.split([',', '.', ' ']).filter(|s| !s.is_empty()).collect()
        } else {
            src.split("").filter(|s| !s.is_empty()).collect()
        };
        if parts.is_empty() {
            return Err(Error::InvalidWord("empty word".into()));
        }
        parts
            .iter()
            .map(|s| {
                s.parse::<u32>()
                    .map_err(|_| Error::InvalidWord(format!("bad symbol `{s}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

impl From<Vec<u32>> for Word {
    fn from(v: Vec<u32>) -> Self {
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", s.join("."))
    }
}

fn contains_subword(hay: &[u32], needle: &[u32]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len().max(1)).any(|w| w == needle)
}

/// Alphabet size plus a finite forbidden-word set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubshiftSpec {
    p: usize,
    forbidden: Vec<Word>,
    lq: usize,
}

impl SubshiftSpec {
    /// Build a spec from user input. Duplicates and words containing another
    /// forbidden word are dropped; an empty subshift is rejected.
    pub fn new(p: usize, forbidden: Vec<Word>) -> Result<Self> {
        let raw = Self::from_raw(p, forbidden)?;
        let mut kept: Vec<Word> = Vec::new();
        for w in &raw.forbidden {
            if !raw.forbidden.iter().any(|q| q != w && w.contains(q)) {
                kept.push(w.clone());
            }
        }
        let spec = Self::from_words(p, kept);
        spec.follower_graph()?;
        Ok(spec)
    }

    /// The full shift on `p` symbols.
    pub fn full(p: usize) -> Self {
        Self::from_words(p, Vec::new())
    }

    /// Validated, deduplicated and sorted, but with redundant words kept.
    pub(crate) fn from_raw(p: usize, forbidden: Vec<Word>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("alphabet size must be at least 1".into()));
        }
        for w in &forbidden {
            if w.is_empty() {
                return Err(Error::InvalidWord("forbidden words must be nonempty".into()));
            }
            if let Some(s) = w.symbols().iter().find(|&&s| s == 0 || s as usize > p) {
                return Err(Error::InvalidWord(format!("symbol {s} outside 1..={p} in {w}")));
            }
        }
        Ok(Self::from_words(p, forbidden))
    }

    fn from_words(p: usize, forbidden: Vec<Word>) -> Self {
        let set: BTreeSet<Word> = forbidden.into_iter().collect();
        let forbidden: Vec<Word> = set.into_iter().collect();
        let lq = forbidden.iter().map(Word::len).max().unwrap_or(0);
        SubshiftSpec { p, forbidden, lq }
    }

    pub fn alphabet_size(&self) -> usize {
        self.p
    }

    pub fn forbidden(&self) -> &[Word] {
        &self.forbidden
    }

    /// `l(Q)`: the longest forbidden word of this representation.
    pub fn max_forbidden_len(&self) -> usize {
        self.lq
    }

    /// Length of the follower-graph node words.
    pub fn window(&self) -> usize {
        self.lq.saturating_sub(1)
    }

    /// True if no forbidden word occurs anywhere in `symbols`.
    pub fn avoids(&self, symbols: &[u32]) -> bool {
        !self.forbidden.iter().any(|q| contains_subword(symbols, q.symbols()))
    }

    fn ends_with_forbidden(&self, symbols: &[u32]) -> bool {
        self.forbidden.iter().any(|q| symbols.ends_with(q.symbols()))
    }

    pub fn follower_graph(&self) -> Result<FollowerGraph> {
        build_follower_graph(self)
    }
}

/// Node/edge presentation of `Σ_Q`, pruned to nodes that start an infinite path.
#[derive(Clone, Debug)]
pub struct FollowerGraph {
    spec: SubshiftSpec,
    nodes: Vec<Word>,
    /// `(symbol, target)` pairs sorted by symbol.
    succ: Vec<Vec<(u32, usize)>>,
}

impl FollowerGraph {
    pub fn spec(&self) -> &SubshiftSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Word] {
        &self.nodes
    }

    pub fn successors(&self, node: usize) -> &[(u32, usize)] {
        &self.succ[node]
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Edges as `(from, to)` node-word pairs; the sentinel node is the empty word.
    pub fn edges(&self) -> Vec<(Word, Word)> {
        let mut out = Vec::new();
        for (u, succ) in self.succ.iter().enumerate() {
            for &(_, v) in succ {
                out.push((self.nodes[u].clone(), self.nodes[v].clone()));
            }
        }
        out
    }

    fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for succ in &self.succ {
            for &(_, v) in succ {
                deg[v] += 1;
            }
        }
        deg
    }

    /// All admissible words of length `n` that extend to infinite sequences,
    /// in lexicographic order.
    pub fn enumerate_words(&self, n: usize, exec: Exec) -> Vec<Word> {
        let window = self.spec.window();
        if n == 0 {
            return vec![Word::default()];
        }
        if n <= window {
            let set: BTreeSet<Word> = self.nodes.iter().map(|w| w.prefix(n)).collect();
            return set.into_iter().collect();
        }
        let steps = n - window;
        let per_node = exec.map_range(self.nodes.len(), |start| {
            let mut out = Vec::new();
            let mut buf = self.nodes[start].symbols().to_vec();
            self.walk(start, steps, &mut buf, &mut out);
            out
        });
        per_node.into_iter().flatten().collect()
    }

    fn walk(&self, node: usize, steps: usize, buf: &mut Vec<u32>, out: &mut Vec<Word>) {
        if steps == 0 {
            out.push(Word(buf.clone()));
            return;
        }
        for &(s, v) in &self.succ[node] {
            buf.push(s);
            self.walk(v, steps - 1, buf, out);
            buf.pop();
        }
    }

    /// Number of admissible extendable words of length `n`, without listing them.
    pub fn count_words(&self, n: usize) -> u128 {
        let window = self.spec.window();
        if n <= window {
            return self.enumerate_words(n, Exec::Sequential).len() as u128;
        }
        let mut counts = vec![1u128; self.nodes.len()];
        for _ in 0..(n - window) {
            counts = self
                .succ
                .iter()
                .map(|succ| succ.iter().map(|&(_, v)| counts[v]).sum())
                .collect();
        }
        counts.iter().sum()
    }

    /// Tarjan strongly connected components, each as a node-index list.
    fn strongly_connected(&self) -> Vec<Vec<usize>> {
        struct State<'a> {
            g: &'a FollowerGraph,
            index: Vec<Option<usize>>,
            low: Vec<usize>,
            on_stack: Vec<bool>,
            stack: Vec<usize>,
            next: usize,
            out: Vec<Vec<usize>>,
        }
        fn visit(st: &mut State<'_>, v: usize) {
            st.index[v] = Some(st.next);
            st.low[v] = st.next;
            st.next += 1;
            st.stack.push(v);
            st.on_stack[v] = true;
            for &(_, w) in &st.g.succ[v] {
                match st.index[w] {
                    None => {
                        visit(st, w);
                        st.low[v] = st.low[v].min(st.low[w]);
                    }
                    Some(iw) if st.on_stack[w] => st.low[v] = st.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(st.low[v]) == st.index[v] {
                let mut comp = Vec::new();
                while let Some(w) = st.stack.pop() {
                    st.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                st.out.push(comp);
            }
        }
        let n = self.nodes.len();
        let mut st = State {
            g: self,
            index: vec![None; n],
            low: vec![0; n],
            on_stack: vec![false; n],
            stack: Vec::new(),
            next: 0,
            out: Vec::new(),
        };
        for v in 0..n {
            if st.index[v].is_none() {
                visit(&mut st, v);
            }
        }
        st.out
    }

    /// True if the graph is a single strongly connected component.
    pub fn is_transitive(&self) -> bool {
        let comps = self.strongly_connected();
        comps.len() == 1 && self.edge_count() > 0
    }
}

/// Build the follower graph of `spec` and prune it to nodes with an infinite
/// forward path.
pub fn build_follower_graph(spec: &SubshiftSpec) -> Result<FollowerGraph> {
    let window = spec.window();
    let p = spec.p as u32;

    // Allowed words of length `window`, generated in lexicographic order.
    let mut candidates: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..window {
        let mut next = Vec::with_capacity(candidates.len() * spec.p);
        for w in &candidates {
            for s in 1..=p {
                let mut v = w.clone();
                v.push(s);
                if !spec.ends_with_forbidden(&v) {
                    next.push(v);
                }
            }
        }
        candidates = next;
    }
    let index_of = |w: &[u32]| candidates.binary_search_by(|c| c.as_slice().cmp(w)).ok();

    let mut succ: Vec<Vec<(u32, usize)>> = Vec::with_capacity(candidates.len());
    for u in &candidates {
        let mut edges = Vec::new();
        for s in 1..=p {
            let mut ext = u.clone();
            ext.push(s);
            if !spec.avoids(&ext) {
                continue;
            }
            let target = if window == 0 { Some(0) } else { index_of(&ext[1..]) };
            if let Some(v) = target {
                edges.push((s, v));
            }
        }
        succ.push(edges);
    }

    // Drop nodes without out-edges until stable.
    let n = candidates.len();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for u in 0..n {
            if alive[u] && !succ[u].iter().any(|&(_, v)| alive[v]) {
                alive[u] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !alive.iter().any(|&a| a) {
        return Err(Error::EmptySubshift);
    }
    let mut remap = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for u in 0..n {
        if alive[u] {
            remap[u] = nodes.len();
            nodes.push(Word(candidates[u].clone()));
        }
    }
    let succ = (0..n)
        .filter(|&u| alive[u])
        .map(|u| {
            succ[u]
                .iter()
                .filter(|&&(_, v)| alive[v])
                .map(|&(s, v)| (s, remap[v]))
                .collect()
        })
        .collect();
    Ok(FollowerGraph {
        spec: spec.clone(),
        nodes,
        succ,
    })
}

/// Extend `Q` until every admissible sequence has an admissible left extension.
///
/// Nodes of the follower graph without in-edges are forbidden (their words
/// of length `l(Q) − 1` are appended to `Q`) until none remain. `l(Q)` is
/// unchanged; appended words may make longer entries redundant and are kept
/// as-is.
pub fn repair_complete_invariance(spec: &SubshiftSpec) -> Result<SubshiftSpec> {
    let mut current = spec.clone();
    loop {
        let graph = current.follower_graph()?;
        let indeg = graph.in_degrees();
        let orphans: Vec<Word> = graph
            .nodes
            .iter()
            .zip(&indeg)
            .filter(|(_, &d)| d == 0)
            .map(|(w, _)| w.clone())
            .collect();
        if orphans.is_empty() {
            return Ok(current);
        }
        let mut q = current.forbidden.clone();
        q.extend(orphans);
        current = SubshiftSpec::from_words(current.p, q);
    }
}

/// Split a pruned graph into its transitive pieces, each re-expressed as a
/// forbidden-word spec restricted to the component's node words.
pub fn transitive_components(graph: &FollowerGraph) -> Vec<SubshiftSpec> {
    let window = graph.spec.window();
    let mut comps: Vec<Vec<usize>> = graph
        .strongly_connected()
        .into_iter()
        .filter(|c| {
            c.iter()
                .any(|&u| graph.succ[u].iter().any(|(_, v)| c.binary_search(v).is_ok()))
        })
        .collect();
    comps.sort_by(|a, b| graph.nodes[a[0]].cmp(&graph.nodes[b[0]]));

    // Every allowed word of node length, so words outside a component can be forbidden.
    let all_allowed = match build_unpruned_nodes(&graph.spec, window) {
        Some(v) => v,
        None => return Vec::new(),
    };
    comps
        .into_iter()
        .map(|comp| {
            if window == 0 {
                return graph.spec.clone();
            }
            let members: BTreeSet<&Word> = comp.iter().map(|&u| &graph.nodes[u]).collect();
            let mut q = graph.spec.forbidden.clone();
            q.extend(
                all_allowed
                    .iter()
                    .filter(|w| !members.contains(w))
                    .cloned(),
            );
            SubshiftSpec::from_words(graph.spec.p, q)
        })
        .collect()
}

fn build_unpruned_nodes(spec: &SubshiftSpec, window: usize) -> Option<Vec<Word>> {
    let p = spec.p as u32;
    let mut words: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..window {
        words = words
            .iter()
            .flat_map(|w| {
                (1..=p).filter_map(move |s| {
                    let mut v = w.clone();
                    v.push(s);
                    (!spec.ends_with_forbidden(&v)).then_some(v)
                })
            })
            .collect();
    }
    Some(words.into_iter().map(Word).collect())
}

/// All admissible, infinitely extendable words of length `n` in lexicographic order.
pub fn enumerate_words(spec: &SubshiftSpec, n: usize) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(Error::InvalidArgument("word length must be at least 1".into()));
    }
    Ok(spec.follower_graph()?.enumerate_words(n, Exec::default()))
}

/// True iff the periodic sequence `w w w …` contains no forbidden word.
pub fn is_admissible_periodic(spec: &SubshiftSpec, w: &Word) -> bool {
    if w.is_empty() {
        return false;
    }
    let reps = (w.len() + spec.lq).div_ceil(w.len()) + 1;
    let stream: Vec<u32> = w.symbols().iter().copied().cycle().take(reps * w.len()).collect();
    spec.avoids(&stream)
}

/// Forbid `w` and repair the result; models one step of removing a cylinder
/// from the system.
pub fn cut_cylinder(spec: &SubshiftSpec, w: &Word) -> Result<SubshiftSpec> {
    if w.len() < spec.lq {
        return Err(Error::InvalidWord(format!(
            "cut word {w} is shorter than l(Q) = {}",
            spec.lq
        )));
    }
    if !spec.avoids(w.symbols()) {
        return Ok(spec.clone());
    }
    let mut q = spec.forbidden.clone();
    q.push(w.clone());
    let cut = SubshiftSpec::from_raw(spec.p, q)?;
    repair_complete_invariance(&cut)
}
