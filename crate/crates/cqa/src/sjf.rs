//! Static analysis of self-join-free queries: key-covering derivations,
//! determinacy, stable sets, the attack graph and the complexity verdict.
//!
//! A derivation from a variable set `X` is a sequence of atoms whose key
//! variables are covered, step by step, by `X` and the variables of earlier
//! atoms. Atom `B` is determined by atom `A` when a derivation from
//! `vars(A)` reaches `B`; mutual determinacy is an equivalence relation and
//! its classes bound the stable sets.
//!
//! `A` attacks `B` when some chain of atoms connects them sharing, at every
//! step, a variable outside the closure of `key(A)` under the other atoms'
//! key dependencies. An attack is weak when `B` is determined by `A`. The
//! attack graph classifies certainty: acyclic means first-order expressible,
//! only weak cycles means polynomial time (but not FO), and any cycle
//! through a strong attack means coNP-complete.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::Error;
use crate::model::ConjunctiveQuery;

/// Index of an atom in the query's written order.
pub type AtomIdx = usize;

/// A derivation sequence reaching a target atom from a variable set. The
/// sequence lists atom indices; each atom's key is covered by the start set
/// plus the variables of the atoms before it.
pub fn gamma_derivable(q: &ConjunctiveQuery, start: &BTreeSet<String>, target: AtomIdx) -> Option<Vec<AtomIdx>> {
    let mut closed: BTreeSet<&str> = start.iter().map(|s| s.as_str()).collect();
    let mut order: Vec<AtomIdx> = Vec::new();
    let mut used = vec![false; q.len()];
    loop {
        if q.atoms[target].key_vars().iter().all(|v| closed.contains(v)) {
            order.push(target);
            return Some(order);
        }
        let next = (0..q.len()).find(|&i| {
            !used[i] && i != target && q.atoms[i].key_vars().iter().all(|v| closed.contains(v))
        });
        match next {
            Some(i) => {
                used[i] = true;
                order.push(i);
                closed.extend(q.atoms[i].vars_set());
            }
            None => return None,
        }
    }
}

/// Atom `b` is determined by atom `a`: some derivation from `vars(a)`
/// reaches `b`.
pub fn gamma_determined(q: &ConjunctiveQuery, a: AtomIdx, b: AtomIdx) -> bool {
    let start: BTreeSet<String> = q.atoms[a].vars_set().iter().map(|s| s.to_string()).collect();
    gamma_derivable(q, &start, b).is_some()
}

/// Maximal classes of the mutual-determinacy equivalence, each in atom
/// order, listed by smallest member.
pub fn stable_partition_candidates(q: &ConjunctiveQuery) -> Result<Vec<Vec<AtomIdx>>, Error> {
    if !q.is_self_join_free() {
        return Err(Error::NotSelfJoinFree);
    }
    let n = q.len();
    let mut class_of: Vec<Option<usize>> = vec![None; n];
    let mut classes: Vec<Vec<AtomIdx>> = Vec::new();
    for a in 0..n {
        if class_of[a].is_some() {
            continue;
        }
        let id = classes.len();
        let mut class = vec![a];
        class_of[a] = Some(id);
        for b in a + 1..n {
            if class_of[b].is_none() && gamma_determined(q, a, b) && gamma_determined(q, b, a) {
                class_of[b] = Some(id);
                class.push(b);
            }
        }
        classes.push(class);
    }
    Ok(classes)
}

/// The atoms reachable by a derivation that starts from `key(a)` and never
/// passes through `a` itself.
pub fn a_plus(q: &ConjunctiveQuery, a: AtomIdx) -> BTreeSet<AtomIdx> {
    let mut closed: BTreeSet<&str> = q.atoms[a].key_vars();
    let mut derived: BTreeSet<AtomIdx> = BTreeSet::new();
    loop {
        let next = (0..q.len()).find(|&i| {
            i != a && !derived.contains(&i) && q.atoms[i].key_vars().iter().all(|v| closed.contains(v))
        });
        match next {
            Some(i) => {
                derived.insert(i);
                closed.extend(q.atoms[i].vars_set());
            }
            None => return derived,
        }
    }
}

/// Variables protected against attacks from `a`: the closure of `key(a)`
/// under the key dependencies of the other atoms, i.e. `key(a)` together
/// with the variables of every atom in `a_plus`.
fn protected_vars(q: &ConjunctiveQuery, a: AtomIdx) -> BTreeSet<String> {
    let mut vars: BTreeSet<String> = q.atoms[a].key_vars().iter().map(|s| s.to_string()).collect();
    for b in a_plus(q, a) {
        vars.extend(q.atoms[b].vars_set().iter().map(|s| s.to_string()));
    }
    vars
}

/// Does `a` attack `b`: is there a chain of atoms from `a` to `b` whose
/// consecutive members share a variable outside the protected set of `a`?
pub fn attacks(q: &ConjunctiveQuery, a: AtomIdx, b: AtomIdx) -> bool {
    if a == b {
        return false;
    }
    let protected = protected_vars(q, a);
    let share_unprotected = |x: AtomIdx, y: AtomIdx| {
        q.atoms[x]
            .vars_set()
            .intersection(&q.atoms[y].vars_set())
            .any(|v| !protected.contains(*v))
    };
    let mut seen = vec![false; q.len()];
    let mut queue = VecDeque::from([a]);
    seen[a] = true;
    while let Some(x) = queue.pop_front() {
        for y in 0..q.len() {
            if !seen[y] && share_unprotected(x, y) {
                if y == b {
                    return true;
                }
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AttackEdge {
    pub from: AtomIdx,
    pub to: AtomIdx,
    /// Weak when `to` is determined by `from`.
    pub weak: bool,
}

/// Atoms as nodes, attacks as edges, each tagged weak or strong.
#[derive(Debug, Clone, Serialize)]
pub struct AttackGraph {
    pub n_atoms: usize,
    pub edges: Vec<AttackEdge>,
}

impl AttackGraph {
    pub fn edge(&self, from: AtomIdx, to: AtomIdx) -> Option<&AttackEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    fn successors(&self, from: AtomIdx) -> impl Iterator<Item = AtomIdx> + '_ {
        self.edges.iter().filter(move |e| e.from == from).map(|e| e.to)
    }

    /// BFS path from `from` to `to` along attack edges, if any.
    fn path(&self, from: AtomIdx, to: AtomIdx) -> Option<Vec<AtomIdx>> {
        let mut prev: Vec<Option<AtomIdx>> = vec![None; self.n_atoms];
        let mut seen = vec![false; self.n_atoms];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(x) = queue.pop_front() {
            if x == to {
                let mut path = vec![to];
                let mut at = to;
                while let Some(p) = prev[at] {
                    path.push(p);
                    at = p;
                }
                path.reverse();
                return Some(path);
            }
            for y in self.successors(x) {
                if !seen[y] {
                    seen[y] = true;
                    prev[y] = Some(x);
                    queue.push_back(y);
                }
            }
        }
        None
    }

    /// Topological order of the atoms when the graph is acyclic.
    pub fn topological_order(&self) -> Option<Vec<AtomIdx>> {
        let mut indegree = vec![0usize; self.n_atoms];
        for e in &self.edges {
            indegree[e.to] += 1;
        }
        let mut ready: Vec<AtomIdx> = (0..self.n_atoms).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.n_atoms);
        while let Some(next) = ready.iter().min().copied() {
            ready.retain(|&i| i != next);
            order.push(next);
            for to in self.successors(next) {
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    ready.push(to);
                }
            }
        }
        (order.len() == self.n_atoms).then_some(order)
    }

    /// A cycle through a strong edge, as the list of atoms visited, when one
    /// exists: a strong edge `(a,b)` closed by a path from `b` back to `a`.
    pub fn strong_cycle(&self) -> Option<Vec<AtomIdx>> {
        for e in &self.edges {
            if e.weak {
                continue;
            }
            if let Some(back) = self.path(e.to, e.from) {
                let mut cycle = vec![e.from];
                cycle.extend(back);
                return Some(cycle);
            }
        }
        None
    }

    /// Strongly connected components in topological order of the condensed
    /// graph, each component in atom order.
    pub fn sccs_in_order(&self) -> Vec<Vec<AtomIdx>> {
        let n = self.n_atoms;
        let reaches = |from: AtomIdx, to: AtomIdx| self.path(from, to).is_some();
        let mut component_of: Vec<Option<usize>> = vec![None; n];
        let mut components: Vec<Vec<AtomIdx>> = Vec::new();
        for a in 0..n {
            if component_of[a].is_some() {
                continue;
            }
            let id = components.len();
            let mut members = vec![a];
            component_of[a] = Some(id);
            for b in a + 1..n {
                if component_of[b].is_none() && reaches(a, b) && reaches(b, a) {
                    component_of[b] = Some(id);
                    members.push(b);
                }
            }
            components.push(members);
        }
        // Order components topologically; edges in the condensation cannot
        // form cycles.
        let mut order: Vec<usize> = (0..components.len()).collect();
        order.sort_by(|&x, &y| {
            let x_first = components[x][0];
            let y_first = components[y][0];
            if x != y && reaches(x_first, y_first) {
                std::cmp::Ordering::Less
            } else if x != y && reaches(y_first, x_first) {
                std::cmp::Ordering::Greater
            } else {
                components[x][0].cmp(&components[y][0])
            }
        });
        order.into_iter().map(|i| components[i].clone()).collect()
    }

    /// DOT rendering: weak attacks dashed, strong attacks solid.
    pub fn to_dot(&self, q: &ConjunctiveQuery) -> String {
        let mut out = String::from("digraph attack {\n");
        for (i, atom) in q.atoms.iter().enumerate() {
            out.push_str(&format!("  a{} [label=\"{}\"];\n", i, atom.relation));
        }
        for e in &self.edges {
            let style = if e.weak { "dashed" } else { "solid" };
            out.push_str(&format!("  a{} -> a{} [style={}];\n", e.from, e.to, style));
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the attack graph of a self-join-free query.
pub fn build_attack_graph(q: &ConjunctiveQuery) -> Result<AttackGraph, Error> {
    if !q.is_self_join_free() {
        return Err(Error::NotSelfJoinFree);
    }
    let mut edges = Vec::new();
    for a in 0..q.len() {
        for b in 0..q.len() {
            if a != b && attacks(q, a, b) {
                edges.push(AttackEdge { from: a, to: b, weak: gamma_determined(q, a, b) });
            }
        }
    }
    Ok(AttackGraph { n_atoms: q.len(), edges })
}

/// Complexity verdict for certainty of a self-join-free query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// Attack graph acyclic: certainty is first-order expressible.
    Fo,
    /// Cycles exist but all are weak: polynomial time, not FO.
    PtimeNotFo,
    /// Some cycle passes through a strong attack.
    ConpComplete,
}

/// Evidence backing a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassificationWitness {
    /// Topological order of the acyclic attack graph: a sequence of
    /// singleton stable sets.
    TopologicalOrder { atoms: Vec<AtomIdx> },
    /// Strongly connected components, each a stable set, in a valid order.
    StablePartition { classes: Vec<Vec<AtomIdx>> },
    /// A cycle through at least one strong attack.
    StrongCycle { atoms: Vec<AtomIdx> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub witness: ClassificationWitness,
}

/// Classifies a self-join-free query by its attack graph.
pub fn classify(q: &ConjunctiveQuery) -> Result<Classification, Error> {
    let graph = build_attack_graph(q)?;
    if let Some(order) = graph.topological_order() {
        return Ok(Classification {
            verdict: Verdict::Fo,
            witness: ClassificationWitness::TopologicalOrder { atoms: order },
        });
    }
    if let Some(cycle) = graph.strong_cycle() {
        return Ok(Classification {
            verdict: Verdict::ConpComplete,
            witness: ClassificationWitness::StrongCycle { atoms: cycle },
        });
    }
    Ok(Classification {
        verdict: Verdict::PtimeNotFo,
        witness: ClassificationWitness::StablePartition { classes: graph.sccs_in_order() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_query;

    fn q1() -> ConjunctiveQuery {
        parse_query("R1(x; y) & R2(y; z)").unwrap()
    }

    fn q2() -> ConjunctiveQuery {
        parse_query("R1(x; y) & R2(y; x)").unwrap()
    }

    fn q3() -> ConjunctiveQuery {
        parse_query("R1(x; y) & R2(z; y)").unwrap()
    }

    fn q5() -> ConjunctiveQuery {
        parse_query("R1(x; y) & S1(y, z; x)").unwrap()
    }

    fn vars(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn derivations_in_q1() {
        let q = q1();
        // vars(R1-atom) = {x,y} covers key(R2) = {y}.
        let seq = gamma_derivable(&q, &vars(&["x", "y"]), 1).unwrap();
        assert_eq!(*seq.last().unwrap(), 1);
        // The converse fails: {y,z} never covers key(R1) = {x}.
        assert!(gamma_derivable(&q, &vars(&["y", "z"]), 0).is_none());
        // A target whose key is already covered derives in one step.
        assert_eq!(gamma_derivable(&q, &vars(&["y"]), 1).unwrap(), vec![1]);
    }

    #[test]
    fn stable_sets_of_the_example_queries() {
        assert_eq!(stable_partition_candidates(&q2()).unwrap(), vec![vec![0, 1]]);
        assert_eq!(stable_partition_candidates(&q1()).unwrap(), vec![vec![0], vec![1]]);
        assert_eq!(stable_partition_candidates(&q3()).unwrap(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn a_plus_of_the_example_queries() {
        let q = q1();
        // key(R1) = {x} covers no other key; key(R2) = {y} covers none.
        assert!(a_plus(&q, 0).is_empty());
        assert!(a_plus(&q, 1).is_empty());
    }

    #[test]
    fn a_plus_with_empty_keys() {
        // Atoms with empty keys are always derivable.
        let q = ConjunctiveQuery::new(vec![
            crate::model::Atom::new("A", vec!["x"], vec![]),
            crate::model::Atom::new("B", vec!["y"], vec![]),
        ]);
        assert_eq!(a_plus(&q, 0), BTreeSet::from([1]));
        assert_eq!(a_plus(&q, 1), BTreeSet::from([0]));
    }

    #[test]
    fn attack_edges_of_the_example_queries() {
        // q1: only R1 attacks R2; the shared y is protected from R2's side.
        assert!(attacks(&q1(), 0, 1));
        assert!(!attacks(&q1(), 1, 0));

        // q2: mutual attacks, both weak by mutual determinacy.
        let g2 = build_attack_graph(&q2()).unwrap();
        assert!(g2.edge(0, 1).unwrap().weak);
        assert!(g2.edge(1, 0).unwrap().weak);

        // q3: mutual attacks, both strong.
        let g3 = build_attack_graph(&q3()).unwrap();
        assert!(!g3.edge(0, 1).unwrap().weak);
        assert!(!g3.edge(1, 0).unwrap().weak);
    }

    #[test]
    fn classification_of_the_example_queries() {
        assert_eq!(classify(&q1()).unwrap().verdict, Verdict::Fo);
        assert_eq!(classify(&q2()).unwrap().verdict, Verdict::PtimeNotFo);
        assert_eq!(classify(&q3()).unwrap().verdict, Verdict::ConpComplete);
        assert_eq!(classify(&q5()).unwrap().verdict, Verdict::ConpComplete);
    }

    #[test]
    fn witnesses_are_consistent_with_verdicts() {
        match classify(&q1()).unwrap().witness {
            ClassificationWitness::TopologicalOrder { atoms } => assert_eq!(atoms, vec![0, 1]),
            other => panic!("unexpected witness {other:?}"),
        }
        match classify(&q2()).unwrap().witness {
            ClassificationWitness::StablePartition { classes } => assert_eq!(classes, vec![vec![0, 1]]),
            other => panic!("unexpected witness {other:?}"),
        }
        match classify(&q3()).unwrap().witness {
            ClassificationWitness::StrongCycle { atoms } => {
                assert!(atoms.len() >= 2);
                let g = build_attack_graph(&q3()).unwrap();
                // Consecutive atoms in the cycle are attack edges.
                for pair in atoms.windows(2) {
                    assert!(g.edge(pair[0], pair[1]).is_some());
                }
                assert_eq!(atoms.first(), atoms.last());
            }
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn classify_rejects_self_joins() {
        let q4 = parse_query("R(x; y, z) & R(z; x, y)").unwrap();
        assert!(matches!(classify(&q4), Err(Error::NotSelfJoinFree)));
    }

    #[test]
    fn attacks_invariant_under_renaming() {
        let q = q5();
        let renamed = parse_query("R1(alpha; beta) & S1(beta, gamma; alpha)").unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(attacks(&q, a, b), attacks(&renamed, a, b));
            }
        }
    }

    #[test]
    fn dot_export_tags_styles() {
        let dot = build_attack_graph(&q3()).unwrap().to_dot(&q3());
        assert!(dot.contains("style=solid"));
        let dot2 = build_attack_graph(&q2()).unwrap().to_dot(&q2());
        assert!(dot2.contains("style=dashed"));
    }
}
