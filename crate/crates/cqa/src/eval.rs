//! Query evaluation and repair enumeration.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::model::{ConjunctiveQuery, Database, FactId, Repair};

/// One solution: a fact per atom, in atom order, possibly repeating.
pub type Solution = Vec<FactId>;

/// Exhaustively enumerates the solutions to `q` in `db`, i.e. every sequence
/// `(μ(A1),…,μ(Ak))` witnessed by a valuation `μ` of the query variables.
pub fn solutions(db: &Database, q: &ConjunctiveQuery) -> Vec<Solution> {
    let allowed = vec![true; db.len()];
    solutions_within(db, q, &allowed)
}

/// Solutions using only facts enabled in `allowed`.
pub fn solutions_within(db: &Database, q: &ConjunctiveQuery, allowed: &[bool]) -> Vec<Solution> {
    let atoms: Vec<&crate::model::Atom> = q.atoms.iter().collect();
    let mut out = Vec::new();
    search(db, &atoms, allowed, 0, &mut BTreeMap::new(), &mut Vec::new(), &mut |sol| {
        out.push(sol.to_vec());
        true
    });
    out.sort_unstable();
    out
}

/// True when `q` has at least one solution within the enabled facts.
pub fn satisfied_within(db: &Database, q: &ConjunctiveQuery, allowed: &[bool]) -> bool {
    let atoms: Vec<&crate::model::Atom> = q.atoms.iter().collect();
    let mut found = false;
    search(db, &atoms, allowed, 0, &mut BTreeMap::new(), &mut Vec::new(), &mut |_| {
        found = true;
        false
    });
    found
}

/// True when a solution exists whose atom at `position` is mapped to `fid`,
/// using only enabled facts.
pub fn satisfied_with_pinned(
    db: &Database,
    q: &ConjunctiveQuery,
    allowed: &[bool],
    position: usize,
    fid: FactId,
) -> bool {
    let atom = &q.atoms[position];
    let fact = db.fact(fid);
    if !allowed[fid] || fact.relation != atom.relation || fact.tuple.len() != atom.arity() {
        return false;
    }
    let mut valuation: BTreeMap<&str, &str> = BTreeMap::new();
    for (var, constant) in atom.vars.iter().zip(&fact.tuple) {
        match valuation.get(var.as_str()) {
            Some(&bound) if bound != constant.as_str() => return false,
            Some(_) => {}
            None => {
                valuation.insert(var, constant);
            }
        }
    }
    let rest: Vec<&crate::model::Atom> =
        q.atoms.iter().enumerate().filter(|(i, _)| *i != position).map(|(_, a)| a).collect();
    let mut found = false;
    search(db, &rest, allowed, 0, &mut valuation, &mut Vec::new(), &mut |_| {
        found = true;
        false
    });
    found
}

/// True when the specific atom-to-fact assignment is a solution.
pub fn assignment_is_solution(db: &Database, q: &ConjunctiveQuery, assignment: &[FactId]) -> bool {
    if assignment.len() != q.len() {
        return false;
    }
    let mut valuation: BTreeMap<&str, &str> = BTreeMap::new();
    for (atom, &fid) in q.atoms.iter().zip(assignment) {
        let fact = db.fact(fid);
        if fact.relation != atom.relation || fact.tuple.len() != atom.arity() {
            return false;
        }
        for (var, constant) in atom.vars.iter().zip(&fact.tuple) {
            match valuation.get(var.as_str()) {
                Some(&bound) if bound != constant => return false,
                Some(_) => {}
                None => {
                    valuation.insert(var, constant);
                }
            }
        }
    }
    true
}

/// Backtracking join over the given atoms in order. The visitor returns
/// `false` to stop the enumeration early.
fn search<'a>(
    db: &'a Database,
    atoms: &[&'a crate::model::Atom],
    allowed: &[bool],
    depth: usize,
    valuation: &mut BTreeMap<&'a str, &'a str>,
    partial: &mut Vec<FactId>,
    visit: &mut dyn FnMut(&[FactId]) -> bool,
) -> bool {
    if depth == atoms.len() {
        return visit(partial);
    }
    let atom = atoms[depth];
    for (fid, fact) in db.facts().iter().enumerate() {
        if !allowed[fid] || fact.relation != atom.relation || fact.tuple.len() != atom.arity() {
            continue;
        }
        let mut bound: Vec<&str> = Vec::new();
        let mut ok = true;
        for (var, constant) in atom.vars.iter().zip(&fact.tuple) {
            match valuation.get(var.as_str()) {
                Some(&existing) if existing != constant.as_str() => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    valuation.insert(var, constant);
                    bound.push(var);
                }
            }
        }
        if ok {
            partial.push(fid);
            let keep_going = search(db, atoms, allowed, depth + 1, valuation, partial, visit);
            partial.pop();
            if !keep_going {
                for var in bound {
                    valuation.remove(var);
                }
                return false;
            }
        }
        for var in bound {
            valuation.remove(var);
        }
    }
    true
}

/// Number of repairs, i.e. the product of all block sizes.
pub fn repair_count(db: &Database) -> u128 {
    db.blocks().iter().map(|b| b.len() as u128).product()
}

/// Enumerates repairs in lexicographic order over the canonical block order.
/// Errors upfront when the repair count exceeds `limit`.
pub fn repairs(db: &Database, limit: u64) -> Result<RepairIter<'_>, Error> {
    if repair_count(db) > limit as u128 {
        return Err(Error::LimitExceeded { what: "repair enumeration", limit });
    }
    Ok(RepairIter { db, indices: vec![0; db.blocks().len()], done: false })
}

pub struct RepairIter<'a> {
    db: &'a Database,
    indices: Vec<usize>,
    done: bool,
}

impl Iterator for RepairIter<'_> {
    type Item = Repair;

    fn next(&mut self) -> Option<Repair> {
        if self.done {
            return None;
        }
        let chosen: Vec<FactId> = self
            .indices
            .iter()
            .zip(self.db.blocks())
            .map(|(&i, block)| block.facts[i])
            .collect();
        // Advance the mixed-radix counter.
        let mut pos = self.indices.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.indices[pos] += 1;
            if self.indices[pos] < self.db.block(pos).len() {
                break;
            }
            self.indices[pos] = 0;
        }
        Some(Repair { chosen })
    }
}
