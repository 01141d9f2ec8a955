//! Finite undirected location graphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Loc = u32;

/// Simple undirected graph without self-loops. Vertex and neighbour
/// iteration is always in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocGraph {
    adj: BTreeMap<Loc, BTreeSet<Loc>>,
}

impl LocGraph {
    pub fn new() -> LocGraph {
        LocGraph::default()
    }

    pub fn from_edges(
        vertices: impl IntoIterator<Item = Loc>,
        edges: impl IntoIterator<Item = (Loc, Loc)>,
    ) -> Result<LocGraph> {
        let mut g = LocGraph::new();
        for v in vertices {
            g.add_vertex(v);
        }
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, v: Loc) {
        self.adj.entry(v).or_default();
    }

    pub fn add_edge(&mut self, a: Loc, b: Loc) -> Result<()> {
        if a == b {
            return Err(Error::Graph(format!("self-loop on {a}")));
        }
        if !self.contains(a) || !self.contains(b) {
            return Err(Error::Graph(format!("edge {a} -- {b} has an endpoint outside the graph")));
        }
        self.adj.get_mut(&a).unwrap().insert(b);
        self.adj.get_mut(&b).unwrap().insert(a);
        Ok(())
    }

    pub fn remove_vertex(&mut self, v: Loc) -> Option<BTreeSet<Loc>> {
        let nbrs = self.adj.remove(&v)?;
        for n in &nbrs {
            if let Some(s) = self.adj.get_mut(n) {
                s.remove(&v);
            }
        }
        Some(nbrs)
    }

    pub fn contains(&self, v: Loc) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn adjacent(&self, a: Loc, b: Loc) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn neighbors(&self, v: Loc) -> impl Iterator<Item = Loc> + '_ {
        self.adj.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, v: Loc) -> usize {
        self.adj.get(&v).map_or(0, BTreeSet::len)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Loc> + '_ {
        self.adj.keys().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Each edge once, as `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (Loc, Loc)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&a, s)| s.range(a + 1..).map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn max_vertex(&self) -> Option<Loc> {
        self.adj.keys().next_back().copied()
    }

    /// `G ⊕_D H` where both graphs already use disjoint locations.
    pub fn oplus(&self, other: &LocGraph, cross: &[(Loc, Loc)]) -> Result<LocGraph> {
        if let Some(v) = other.vertices().find(|v| self.contains(*v)) {
            return Err(Error::Graph(format!("location {v} occurs on both sides of a composition")));
        }
        let mut g = self.clone();
        for (v, s) in &other.adj {
            g.adj.insert(*v, s.clone());
        }
        for &(a, b) in cross {
            if !self.contains(a) || !other.contains(b) {
                return Err(Error::Graph(format!("cross edge {a} -- {b} does not join the two sides")));
            }
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    /// `G[H/v]`: replace `v` by `H`, joining every vertex of `H` to every
    /// former neighbour of `v`.
    pub fn substitute(&self, v: Loc, h: &LocGraph) -> Result<LocGraph> {
        if !self.contains(v) {
            return Err(Error::Graph(format!("location {v} not in graph")));
        }
        let mut g = self.clone();
        let nbrs = g.remove_vertex(v).unwrap_or_default();
        let g2 = g.oplus(h, &[])?;
        let mut out = g2;
        for hv in h.vertices() {
            for &n in &nbrs {
                out.add_edge(hv, n)?;
            }
        }
        Ok(out)
    }

    /// Renames every vertex through `map`, which must be injective on the
    /// vertex set.
    pub fn relabel(&self, map: &BTreeMap<Loc, Loc>) -> LocGraph {
        let m = |v: &Loc| *map.get(v).unwrap_or(v);
        LocGraph {
            adj: self
                .adj
                .iter()
                .map(|(v, s)| (m(v), s.iter().map(m).collect()))
                .collect(),
        }
    }

    pub fn induced(&self, keep: &BTreeSet<Loc>) -> LocGraph {
        LocGraph {
            adj: self
                .adj
                .iter()
                .filter(|(v, _)| keep.contains(v))
                .map(|(v, s)| (*v, s.intersection(keep).copied().collect()))
                .collect(),
        }
    }

    /// Connected components, each in ascending order, ordered by least vertex.
    pub fn components(&self) -> Vec<Vec<Loc>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.vertices() {
            if !seen.insert(v) {
                continue;
            }
            let mut comp = vec![v];
            let mut stack = vec![v];
            while let Some(u) = stack.pop() {
                for n in self.neighbors(u) {
                    if seen.insert(n) {
                        comp.push(n);
                        stack.push(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Total map from the locations of a successor state to the locations of
/// its predecessor.
pub type ResidualMap = BTreeMap<Loc, Loc>;

pub fn identity_residual(g: &LocGraph) -> ResidualMap {
    g.vertices().map(|v| (v, v)).collect()
}

/// `outer ∘ inner`: `inner` maps a later state to an intermediate one and
/// `outer` maps the intermediate state further back.
pub fn compose(outer: &ResidualMap, inner: &ResidualMap) -> Result<ResidualMap> {
    inner
        .iter()
        .map(|(&x, y)| {
            outer
                .get(y)
                .map(|&z| (x, z))
                .ok_or_else(|| Error::Graph(format!("residual maps do not compose at {y}")))
        })
        .collect()
}

/// Default cap on the number of search leaves explored by [`canonical_form`].
pub const DEFAULT_CANON_LEAVES: usize = 20_000;

/// A canonical labelling: `order[i]` is the location placed at index `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    pub key: String,
    pub order: Vec<Loc>,
}

impl Canonical {
    /// Location → canonical index.
    pub fn index_of(&self) -> BTreeMap<Loc, Loc> {
        self.order
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as Loc))
            .collect()
    }
}

/// Equal keys iff there is a colour-preserving isomorphism.
pub fn canonical_key(g: &LocGraph, colors: &BTreeMap<Loc, String>) -> Result<String> {
    Ok(canonical_form(g, colors, colors, DEFAULT_CANON_LEAVES, |order| {
        order.iter().map(|v| colors[v].as_str()).collect::<Vec<_>>().join("\u{1}")
    })?
    .key)
}

/// Exact canonical labelling by individualisation and refinement.
///
/// `colors` drive the partition and must be invariant under whatever
/// renaming the caller quotients by; `exact` must be finer and is used only
/// to prune interchangeable twins. `serialize` renders the vertex labels in
/// a candidate order; the key is the least rendering over all leaves.
pub fn canonical_form(
    g: &LocGraph,
    colors: &BTreeMap<Loc, String>,
    exact: &BTreeMap<Loc, String>,
    max_leaves: usize,
    serialize: impl Fn(&[Loc]) -> String,
) -> Result<Canonical> {
    let verts: Vec<Loc> = g.vertices().collect();
    for v in &verts {
        if !colors.contains_key(v) || !exact.contains_key(v) {
            return Err(Error::Graph(format!("no colour for location {v}")));
        }
    }
    let idx: BTreeMap<Loc, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let adj: Vec<Vec<usize>> = verts
        .iter()
        .map(|&v| g.neighbors(v).map(|n| idx[&n]).collect())
        .collect();
    let mut distinct: Vec<&String> = verts.iter().map(|v| &colors[v]).collect();
    distinct.sort();
    distinct.dedup();
    let cell: Vec<usize> = verts
        .iter()
        .map(|v| distinct.binary_search(&&colors[v]).unwrap())
        .collect();
    let search = Search {
        adj: &adj,
        verts: &verts,
        exact: verts.iter().map(|v| exact[v].as_str()).collect(),
        serialize: &serialize,
        max_leaves,
    };
    let mut best: Option<(String, Vec<usize>)> = None;
    let mut leaves = 0;
    search.descend(refine(&adj, cell), &mut best, &mut leaves)?;
    let (key, order) = best.unwrap_or_default();
    Ok(Canonical {
        key,
        order: order.into_iter().map(|i| verts[i]).collect(),
    })
}

struct Search<'a, F: Fn(&[Loc]) -> String> {
    adj: &'a [Vec<usize>],
    verts: &'a [Loc],
    exact: Vec<&'a str>,
    serialize: &'a F,
    max_leaves: usize,
}

impl<F: Fn(&[Loc]) -> String> Search<'_, F> {
    fn descend(
        &self,
        cell: Vec<usize>,
        best: &mut Option<(String, Vec<usize>)>,
        leaves: &mut usize,
    ) -> Result<()> {
        let n = cell.len();
        let mut sizes = vec![0usize; n];
        cell.iter().for_each(|&c| sizes[c] += 1);
        let target = (0..n).find(|&c| sizes[c] > 1);
        let Some(target) = target else {
            *leaves += 1;
            if *leaves > self.max_leaves {
                return Err(Error::CanonBudget(self.max_leaves));
            }
            let mut order = vec![0usize; n];
            for (v, &c) in cell.iter().enumerate() {
                order[c] = v;
            }
            let key = self.leaf_key(&order, &cell);
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                *best = Some((key, order));
            }
            return Ok(());
        };
        let members: Vec<usize> = (0..n).filter(|&v| cell[v] == target).collect();
        let mut tried: Vec<usize> = Vec::new();
        for &v in &members {
            if tried.iter().any(|&u| self.twins(u, v)) {
                continue;
            }
            tried.push(v);
            // v keeps index `target`; the rest of its cell moves up by one
            let split: Vec<usize> = cell
                .iter()
                .enumerate()
                .map(|(u, &c)| if c > target || (c == target && u != v) { c + 1 } else { c })
                .collect();
            self.descend(refine(self.adj, split), best, leaves)?;
        }
        Ok(())
    }

    fn twins(&self, u: usize, v: usize) -> bool {
        if self.exact[u] != self.exact[v] {
            return false;
        }
        let strip = |a: usize, b: usize| -> Vec<usize> {
            let mut s: Vec<usize> = self.adj[a].iter().copied().filter(|&x| x != b).collect();
            s.sort_unstable();
            s
        };
        strip(u, v) == strip(v, u)
    }

    fn leaf_key(&self, order: &[usize], cell: &[usize]) -> String {
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (u, ns) in self.adj.iter().enumerate() {
            for &w in ns {
                let (a, b) = (cell[u], cell[w]);
                if a < b {
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();
        let locs: Vec<Loc> = order.iter().map(|&i| self.verts[i]).collect();
        let mut key = format!("{};", order.len());
        for (a, b) in edges {
            key.push_str(&format!("{a}-{b},"));
        }
        key.push('|');
        key.push_str(&(self.serialize)(&locs));
        key
    }
}

/// Colour refinement to the coarsest equitable partition finer than `cell`.
/// Cell indices are dense and assigned from isomorphism-invariant data only.
fn refine(adj: &[Vec<usize>], mut cell: Vec<usize>) -> Vec<usize> {
    let n = cell.len();
    let mut count = {
        let mut c = cell.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    loop {
        let sigs: Vec<(usize, Vec<usize>)> = (0..n)
            .map(|v| {
                let mut ns: Vec<usize> = adj[v].iter().map(|&w| cell[w]).collect();
                ns.sort_unstable();
                (cell[v], ns)
            })
            .collect();
        let mut distinct: Vec<&(usize, Vec<usize>)> = sigs.iter().collect();
        distinct.sort();
        distinct.dedup();
        let next: Vec<usize> = sigs
            .iter()
            .map(|s| distinct.binary_search(&s).unwrap())
            .collect();
        let new_count = distinct.len();
        cell = next;
        if new_count == count {
            return cell;
        }
        count = new_count;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> LocGraph {
        LocGraph::from_edges([1, 2, 3], [(1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn basic_queries() {
        let g = path3();
        assert!(g.adjacent(1, 2) && g.adjacent(2, 1));
        assert!(!g.adjacent(1, 3));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 2), (2, 3)]);
        assert_eq!(g.degree(2), 2);
        assert!(LocGraph::from_edges([1], [(1, 1)]).is_err());
        assert!(LocGraph::from_edges([1], [(1, 2)]).is_err());
    }

    #[test]
    fn substitution_connects_to_old_neighbours() {
        let h = LocGraph::from_edges([10, 11], []).unwrap();
        let g = path3().substitute(2, &h).unwrap();
        assert!(!g.contains(2));
        assert_eq!(
            g.edges().collect::<Vec<_>>(),
            vec![(1, 10), (1, 11), (3, 10), (3, 11)]
        );
    }

    #[test]
    fn composition_and_components() {
        let a = LocGraph::from_edges([1, 2], [(1, 2)]).unwrap();
        let b = LocGraph::from_edges([3], []).unwrap();
        let g = a.oplus(&b, &[]).unwrap();
        assert_eq!(g.components(), vec![vec![1, 2], vec![3]]);
        let g = a.oplus(&b, &[(2, 3)]).unwrap();
        assert_eq!(g.components(), vec![vec![1, 2, 3]]);
        assert!(a.oplus(&a, &[]).is_err());
    }

    fn colors(pairs: &[(Loc, &str)]) -> BTreeMap<Loc, String> {
        pairs.iter().map(|(v, c)| (*v, c.to_string())).collect()
    }

    /// Brute-force isomorphism test over all bijections.
    fn isomorphic(g: &LocGraph, cg: &BTreeMap<Loc, String>, h: &LocGraph, ch: &BTreeMap<Loc, String>) -> bool {
        let gv: Vec<Loc> = g.vertices().collect();
        let hv: Vec<Loc> = h.vertices().collect();
        if gv.len() != hv.len() {
            return false;
        }
        fn permute(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
            if k == perm.len() {
                return f(perm);
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                if permute(k + 1, perm, f) {
                    return true;
                }
                perm.swap(k, i);
            }
            false
        }
        let mut perm: Vec<usize> = (0..gv.len()).collect();
        permute(0, &mut perm, &mut |p| {
            gv.iter().enumerate().all(|(i, &a)| cg[&a] == ch[&hv[p[i]]])
                && gv.iter().enumerate().all(|(i, &a)| {
                    gv.iter()
                        .enumerate()
                        .all(|(j, &b)| g.adjacent(a, b) == h.adjacent(hv[p[i]], hv[p[j]]))
                })
        })
    }

    #[test]
    fn canonical_key_examples() {
        let g = LocGraph::from_edges([1, 2], [(1, 2)]).unwrap();
        let h = LocGraph::from_edges([7, 3], [(3, 7)]).unwrap();
        let k1 = canonical_key(&g, &colors(&[(1, "a"), (2, "b")])).unwrap();
        let k2 = canonical_key(&h, &colors(&[(7, "a"), (3, "b")])).unwrap();
        assert_eq!(k1, k2);
        let k3 = canonical_key(&h, &colors(&[(7, "a"), (3, "a")])).unwrap();
        assert_ne!(k1, k3);
        let path = LocGraph::from_edges([1, 2, 3], [(1, 2), (2, 3)]).unwrap();
        let tri = LocGraph::from_edges([1, 2, 3], [(1, 2), (2, 3), (1, 3)]).unwrap();
        let same = colors(&[(1, "x"), (2, "x"), (3, "x")]);
        assert!(!isomorphic(&path, &same, &tri, &same));
        assert_ne!(canonical_key(&path, &same).unwrap(), canonical_key(&tri, &same).unwrap());
    }

    #[test]
    fn canonical_key_agrees_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(1..6u32);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut g = LocGraph::from_edges(0..n, []).unwrap();
                for a in 0..n {
                    for b in a + 1..n {
                        if rng.gen_bool(0.4) {
                            g.add_edge(a, b).unwrap();
                        }
                    }
                }
                let c: BTreeMap<Loc, String> =
                    (0..n).map(|v| (v, ["p", "q"][rng.gen_range(0..2)].to_string())).collect();
                (g, c)
            };
            let (g, cg) = mk(&mut rng);
            let (h, ch) = mk(&mut rng);
            let same_key = canonical_key(&g, &cg).unwrap() == canonical_key(&h, &ch).unwrap();
            assert_eq!(same_key, isomorphic(&g, &cg, &h, &ch));
        }
    }

    #[test]
    fn twins_keep_large_symmetric_graphs_cheap() {
        let n = 40;
        let g = LocGraph::from_edges(0..n, (1..n).map(|i| (0, i))).unwrap();
        let c: BTreeMap<Loc, String> = (0..n).map(|v| (v, "s".to_string())).collect();
        canonical_key(&g, &c).unwrap();
        let k = LocGraph::from_edges(0..12, (0..12).flat_map(|a| (a + 1..12).map(move |b| (a, b)))).unwrap();
        let c: BTreeMap<Loc, String> = (0..12).map(|v| (v, "s".to_string())).collect();
        canonical_key(&k, &c).unwrap();
    }
}
