//! Ground-truth certainty by search over repairs.
//!
//! A query is certain for a database when every repair satisfies it, so the
//! oracle looks for a repair with no solution. The primary search walks the
//! blocks in canonical order, never picks a fact that would complete a
//! solution, and prunes a branch as soon as some unassigned block has no
//! viable fact left. Exhaustive enumeration over the full repair product is
//! kept as an independent route and cross-checked in tests.

use crate::error::Error;
use crate::eval::{repairs, satisfied_with_pinned, satisfied_within, solutions_within};
use crate::model::{ConjunctiveQuery, Database, FactId, Repair};

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Bound on full repair enumeration.
    pub repair_limit: u64,
    /// Bound on nodes visited by the pruned search.
    pub node_budget: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { repair_limit: 1_000_000, node_budget: 50_000_000 }
    }
}

/// True iff every repair of `db` satisfies `q`.
pub fn certain(db: &Database, q: &ConjunctiveQuery, cfg: &OracleConfig) -> Result<bool, Error> {
    Ok(counterexample_repair(db, q, cfg)?.is_none())
}

/// A repair with no solution, when one exists. Deterministic: the search
/// takes blocks in canonical order and facts in canonical order, so the
/// lexicographically least falsifying repair is returned.
pub fn counterexample_repair(
    db: &Database,
    q: &ConjunctiveQuery,
    cfg: &OracleConfig,
) -> Result<Option<Repair>, Error> {
    q.check_compatible(db.schema())?;
    let mut search = Search {
        db,
        q,
        chosen: Vec::with_capacity(db.blocks().len()),
        mask: vec![false; db.len()],
        budget: cfg.node_budget,
    };
    match search.descend(0) {
        Outcome::Found => Ok(Some(Repair { chosen: search.chosen })),
        Outcome::Exhausted => Ok(None),
        Outcome::OutOfBudget => Err(Error::LimitExceeded {
            what: "repair search nodes",
            limit: cfg.node_budget,
        }),
    }
}

enum Outcome {
    Found,
    Exhausted,
    OutOfBudget,
}

struct Search<'a> {
    db: &'a Database,
    q: &'a ConjunctiveQuery,
    chosen: Vec<FactId>,
    mask: Vec<bool>,
    budget: u64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) -> Outcome {
        if depth == self.db.blocks().len() {
            return Outcome::Found;
        }
        for fid in self.db.block(depth).facts.clone() {
            if self.budget == 0 {
                return Outcome::OutOfBudget;
            }
            self.budget -= 1;
            if self.completes_solution(fid) {
                continue;
            }
            self.mask[fid] = true;
            self.chosen.push(fid);
            let viable = self.remaining_blocks_viable(depth + 1);
            if viable {
                match self.descend(depth + 1) {
                    Outcome::Exhausted => {}
                    done => return done,
                }
            }
            self.chosen.pop();
            self.mask[fid] = false;
        }
        Outcome::Exhausted
    }

    /// Would adding `fid` to the chosen facts create a solution through it?
    fn completes_solution(&mut self, fid: FactId) -> bool {
        let already = self.mask[fid];
        self.mask[fid] = true;
        // A fresh solution must use the new fact at some atom position.
        let found = (0..self.q.len())
            .any(|position| satisfied_with_pinned(self.db, self.q, &self.mask, position, fid));
        self.mask[fid] = already;
        found
    }

    /// Forward check: every unassigned block still has some pickable fact.
    fn remaining_blocks_viable(&mut self, from: usize) -> bool {
        for bid in from..self.db.blocks().len() {
            let facts = self.db.block(bid).facts.clone();
            if facts.into_iter().all(|f| self.completes_solution(f)) {
                return false;
            }
        }
        true
    }
}

/// True iff every enumerated repair satisfies `q`; errors when the repair
/// count exceeds the limit. Independent of the pruned search.
pub fn certain_by_enumeration(
    db: &Database,
    q: &ConjunctiveQuery,
    cfg: &OracleConfig,
) -> Result<bool, Error> {
    q.check_compatible(db.schema())?;
    for repair in repairs(db, cfg.repair_limit)? {
        if !satisfied_within(db, q, &repair.mask(db)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Repairs with the fewest solutions.
pub fn minimal_repairs(
    db: &Database,
    q: &ConjunctiveQuery,
    cfg: &OracleConfig,
) -> Result<Vec<Repair>, Error> {
    q.check_compatible(db.schema())?;
    let mut best: Option<usize> = None;
    let mut out: Vec<Repair> = Vec::new();
    for repair in repairs(db, cfg.repair_limit)? {
        let count = solutions_within(db, q, &repair.mask(db)).len();
        match best {
            Some(b) if count > b => {}
            Some(b) if count == b => out.push(repair),
            _ => {
                best = Some(count);
                out = vec![repair];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fact;
    use crate::parse::{parse_database, parse_query};

    #[test]
    fn consistent_instance_is_certain() {
        let (db, _) = parse_database("R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR2(b; c)\n").unwrap();
        let q = parse_query("R1(x; y) & R2(y; z)").unwrap();
        let cfg = OracleConfig::default();
        assert!(certain(&db, &q, &cfg).unwrap());
        assert!(certain_by_enumeration(&db, &q, &cfg).unwrap());
        assert!(counterexample_repair(&db, &q, &cfg).unwrap().is_none());
    }

    #[test]
    fn falsifying_repair_found_and_deterministic() {
        let (db, _) = parse_database("R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR2(b; a)\nR2(b; c)\n").unwrap();
        let q = parse_query("R1(x; y) & R2(y; x)").unwrap();
        let cfg = OracleConfig::default();
        assert!(!certain(&db, &q, &cfg).unwrap());
        assert!(!certain_by_enumeration(&db, &q, &cfg).unwrap());
        let repair = counterexample_repair(&db, &q, &cfg).unwrap().unwrap();
        let bad = db.fact_id(&Fact::new("R2", vec!["b", "c"])).unwrap();
        assert!(repair.contains(bad));
    }

    #[test]
    fn minimal_repairs_pick_zero_solution_repairs() {
        let (db, _) = parse_database("R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR2(b; a)\nR2(b; c)\n").unwrap();
        let q = parse_query("R1(x; y) & R2(y; x)").unwrap();
        let minimal = minimal_repairs(&db, &q, &OracleConfig::default()).unwrap();
        assert_eq!(minimal.len(), 1);
        let bad = db.fact_id(&Fact::new("R2", vec!["b", "c"])).unwrap();
        assert!(minimal[0].contains(bad));
    }

    #[test]
    fn minimal_repairs_of_consistent_database() {
        let (db, _) = parse_database("R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR2(b; c)\n").unwrap();
        let q = parse_query("R1(x; y) & R2(y; z)").unwrap();
        let minimal = minimal_repairs(&db, &q, &OracleConfig::default()).unwrap();
        assert_eq!(minimal.len(), 1);
        assert_eq!(minimal[0].fact_set().len(), 2);
    }

    #[test]
    fn pruned_matches_enumeration_on_small_corpus() {
        let texts = [
            "R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR1(a; c)\nR2(b; a)\nR2(c; a)\n",
            "R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR1(a; c)\nR2(b; a)\nR2(c; d)\n",
            "R1/2 key 1\nR2/2 key 1\nR1(a; b)\nR1(d; c)\nR2(b; a)\nR2(c; d)\nR2(c; a)\n",
        ];
        let cfg = OracleConfig::default();
        for text in texts {
            let (db, _) = parse_database(text).unwrap();
            for q_text in ["R1(x; y) & R2(y; x)", "R1(x; y) & R2(y; z)", "R1(x; y) & R2(z; y)"] {
                let q = parse_query(q_text).unwrap();
                assert_eq!(
                    certain(&db, &q, &cfg).unwrap(),
                    certain_by_enumeration(&db, &q, &cfg).unwrap(),
                    "{q_text} on {text}"
                );
            }
        }
    }

    #[test]
    fn node_budget_enforced() {
        let (db, _) = parse_database("R1/2 key 1\nR1(a; b)\nR1(a; c)\nR1(b; a)\nR1(b; c)\n").unwrap();
        let q = parse_query("R1(x; y) & R1(y; x)").unwrap();
        let cfg = OracleConfig { node_budget: 1, ..Default::default() };
        assert!(matches!(certain(&db, &q, &cfg), Err(Error::LimitExceeded { .. })));
    }
}
