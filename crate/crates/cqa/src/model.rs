//! Data model: schemas, facts, blocks, repairs and conjunctive queries.
//!
//! Facts carry a canonical total order (relation name, then tuple
//! lexicographically), so sets of facts have a canonical representation.
//! Databases store facts in that order and index them by block, where a block
//! is a maximal set of facts of one relation agreeing on the relation's key
//! positions. All values are immutable after construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::Error;

/// Index of a fact in a database's canonical fact order.
pub type FactId = usize;
/// Index of a block in a database's canonical block order.
pub type BlockId = usize;

/// Arity and key positions (0-based, sorted) of one relation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationInfo {
    pub arity: usize,
    pub key_positions: Vec<usize>,
}

impl RelationInfo {
    pub fn new(arity: usize, mut key_positions: Vec<usize>) -> RelationInfo {
        key_positions.sort_unstable();
        key_positions.dedup();
        RelationInfo { arity, key_positions }
    }

    /// True when the key covers every position, which induces no constraint.
    pub fn key_is_full(&self) -> bool {
        self.key_positions.len() == self.arity
    }
}

/// Relation declarations; exactly one key per relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    relations: BTreeMap<String, RelationInfo>,
}

impl Schema {
    pub fn new() -> Schema {
        Schema::default()
    }

    /// Declares a relation. Key positions are 0-based and must lie below the
    /// arity; re-declaring a relation with a different shape is an error.
    pub fn declare(&mut self, name: &str, arity: usize, key_positions: &[usize]) -> Result<(), Error> {
        if arity == 0 {
            return Err(Error::BadRelation {
                relation: name.to_string(),
                message: "arity must be positive".into(),
            });
        }
        let info = RelationInfo::new(arity, key_positions.to_vec());
        if let Some(p) = info.key_positions.iter().find(|&&p| p >= arity) {
            return Err(Error::BadRelation {
                relation: name.to_string(),
                message: format!("key position {} exceeds arity {}", p + 1, arity),
            });
        }
        match self.relations.get(name) {
            None => {
                self.relations.insert(name.to_string(), info);
                Ok(())
            }
            Some(existing) if *existing == info => Ok(()),
            Some(_) => Err(Error::InconsistentKey {
                relation: name.to_string(),
                message: "relation declared twice with different arity or key".into(),
            }),
        }
    }

    pub fn relation(&self, name: &str) -> Option<&RelationInfo> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&String, &RelationInfo)> {
        self.relations.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

/// A ground atom: relation name plus a tuple of opaque constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub relation: String,
    pub tuple: Vec<String>,
}

impl Fact {
    pub fn new<S: Into<String>, T: Into<String>>(relation: S, tuple: Vec<T>) -> Fact {
        Fact {
            relation: relation.into(),
            tuple: tuple.into_iter().map(Into::into).collect(),
        }
    }

    /// The tuple restricted to the given key positions, in position order.
    pub fn key_projection(&self, info: &RelationInfo) -> Vec<String> {
        info.key_positions.iter().map(|&p| self.tuple[p].clone()).collect()
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.relation, self.tuple.join(","))
    }
}

/// A maximal set of facts of one relation sharing a key projection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub relation: String,
    pub key: Vec<String>,
    pub facts: Vec<FactId>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// An immutable database: deduplicated facts in canonical order plus the
/// block partition induced by the schema's keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    schema: Schema,
    facts: Vec<Fact>,
    blocks: Vec<Block>,
    fact_block: Vec<BlockId>,
}

impl Database {
    /// Builds a database, validating every fact against the schema and
    /// constructing the block index. Duplicate facts are merged.
    pub fn new(schema: Schema, facts: impl IntoIterator<Item = Fact>) -> Result<Database, Error> {
        let mut set: BTreeSet<Fact> = BTreeSet::new();
        for fact in facts {
            match schema.relation(&fact.relation) {
                None => {
                    return Err(Error::SchemaMismatch(format!(
                        "fact {} uses undeclared relation `{}`",
                        fact, fact.relation
                    )))
                }
                Some(info) if info.arity != fact.tuple.len() => {
                    return Err(Error::ArityMismatch {
                        line: 0,
                        message: format!(
                            "fact {} has {} positions, relation `{}` has arity {}",
                            fact,
                            fact.tuple.len(),
                            fact.relation,
                            info.arity
                        ),
                    })
                }
                Some(_) => {
                    set.insert(fact);
                }
            }
        }
        let facts: Vec<Fact> = set.into_iter().collect();

        // Group facts by (relation, key projection); BTreeMap keeps the
        // canonical block order.
        let mut groups: BTreeMap<(String, Vec<String>), Vec<FactId>> = BTreeMap::new();
        for (id, fact) in facts.iter().enumerate() {
            let info = schema.relation(&fact.relation).expect("validated above");
            let key = fact.key_projection(info);
            groups.entry((fact.relation.clone(), key)).or_default().push(id);
        }
        let mut blocks = Vec::with_capacity(groups.len());
        let mut fact_block = vec![0usize; facts.len()];
        for ((relation, key), members) in groups {
            let bid = blocks.len();
            for &fid in &members {
                fact_block[fid] = bid;
            }
            blocks.push(Block { relation, key, facts: members });
        }
        Ok(Database { schema, facts, blocks, fact_block })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, id: FactId) -> &Fact {
        &self.facts[id]
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id]
    }

    pub fn block_of_fact(&self, id: FactId) -> BlockId {
        self.fact_block[id]
    }

    /// Looks a fact up by value.
    pub fn fact_id(&self, fact: &Fact) -> Option<FactId> {
        self.facts.binary_search(fact).ok()
    }

    /// Active domain: every constant occurring in some fact.
    pub fn adom(&self) -> BTreeSet<String> {
        self.facts.iter().flat_map(|f| f.tuple.iter().cloned()).collect()
    }

    /// The sub-database keeping only the given facts (same schema).
    pub fn restrict(&self, keep: &BTreeSet<FactId>) -> Database {
        let facts = keep.iter().map(|&id| self.facts[id].clone());
        Database::new(self.schema.clone(), facts).expect("subset of a valid database")
    }

    /// Renders one fact in the text format, keys before `;`.
    pub fn render_fact(&self, id: FactId) -> String {
        let fact = &self.facts[id];
        let info = self.schema.relation(&fact.relation).expect("schema covers facts");
        render_fact(fact, info)
    }
}

/// Renders a fact under the given relation info, keys left of `;`.
pub fn render_fact(fact: &Fact, info: &RelationInfo) -> String {
    let keys: Vec<&str> = info.key_positions.iter().map(|&p| fact.tuple[p].as_str()).collect();
    if info.key_is_full() {
        return format!("{}({})", fact.relation, keys.join(","));
    }
    let values: Vec<&str> = (0..info.arity)
        .filter(|p| !info.key_positions.contains(p))
        .map(|p| fact.tuple[p].as_str())
        .collect();
    format!("{}({}; {})", fact.relation, keys.join(","), values.join(","))
}

/// One fact chosen per block of a source database.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Repair {
    /// Chosen fact per block, indexed by `BlockId`.
    pub chosen: Vec<FactId>,
}

impl Repair {
    pub fn contains(&self, fact: FactId) -> bool {
        self.chosen.contains(&fact)
    }

    /// Membership mask over the database's facts.
    pub fn mask(&self, db: &Database) -> Vec<bool> {
        let mut mask = vec![false; db.len()];
        for &f in &self.chosen {
            mask[f] = true;
        }
        mask
    }

    /// Chosen facts as a canonical sorted set.
    pub fn fact_set(&self) -> BTreeSet<FactId> {
        self.chosen.iter().copied().collect()
    }
}

/// A query atom: relation name, variable tuple, key positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub relation: String,
    pub vars: Vec<String>,
    pub key_positions: Vec<usize>,
}

impl Atom {
    pub fn new<S: Into<String>, T: Into<String>>(relation: S, vars: Vec<T>, key_positions: Vec<usize>) -> Atom {
        let mut key_positions = key_positions;
        key_positions.sort_unstable();
        key_positions.dedup();
        Atom {
            relation: relation.into(),
            vars: vars.into_iter().map(Into::into).collect(),
            key_positions,
        }
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// Variables in key positions.
    pub fn key_vars(&self) -> BTreeSet<&str> {
        self.key_positions.iter().map(|&p| self.vars[p].as_str()).collect()
    }

    /// All variables of the atom.
    pub fn vars_set(&self) -> BTreeSet<&str> {
        self.vars.iter().map(|v| v.as_str()).collect()
    }
}

/// A Boolean conjunctive query: atoms in written order, all variables
/// implicitly existentially quantified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    pub atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    pub fn new(atoms: Vec<Atom>) -> ConjunctiveQuery {
        ConjunctiveQuery { atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// True when all atoms use pairwise distinct relation names.
    pub fn is_self_join_free(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.atoms.iter().all(|a| seen.insert(a.relation.as_str()))
    }

    /// True for queries of the shape `R1(x0;x1) … Rn(x(n-1);xn)` over binary
    /// relations keyed on the first position, with n+1 distinct variables.
    pub fn is_path(&self) -> bool {
        self.path_word().is_some()
    }

    /// The word of relation names describing a path query, when it is one.
    pub fn path_word(&self) -> Option<Vec<String>> {
        if self.atoms.is_empty() {
            return None;
        }
        let mut vars: Vec<&str> = Vec::with_capacity(self.atoms.len() + 1);
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.arity() != 2 || atom.key_positions != [0] {
                return None;
            }
            if i == 0 {
                vars.push(atom.vars[0].as_str());
            } else if atom.vars[0] != self.atoms[i - 1].vars[1] {
                return None;
            }
            vars.push(atom.vars[1].as_str());
        }
        let distinct: BTreeSet<&str> = vars.iter().copied().collect();
        if distinct.len() != vars.len() {
            return None;
        }
        Some(self.atoms.iter().map(|a| a.relation.clone()).collect())
    }

    /// The schema a query imposes on the relations it mentions.
    pub fn induced_schema(&self) -> Result<Schema, Error> {
        let mut schema = Schema::new();
        for atom in &self.atoms {
            schema.declare(&atom.relation, atom.arity(), &atom.key_positions)?;
        }
        Ok(schema)
    }

    /// Checks that relations shared with `schema` agree on arity and key.
    pub fn check_compatible(&self, schema: &Schema) -> Result<(), Error> {
        let induced = self.induced_schema()?;
        for (name, info) in induced.relations() {
            if let Some(declared) = schema.relation(name) {
                if declared != info {
                    return Err(Error::SchemaMismatch(format!(
                        "relation `{}` is {}-ary with key {:?} in the query but {}-ary with key {:?} in the database",
                        name,
                        info.arity,
                        info.key_positions.iter().map(|p| p + 1).collect::<Vec<_>>(),
                        declared.arity,
                        declared.key_positions.iter().map(|p| p + 1).collect::<Vec<_>>(),
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rendered: Vec<String> = self
            .atoms
            .iter()
            .map(|atom| {
                let info = RelationInfo::new(atom.arity(), atom.key_positions.clone());
                let pseudo = Fact::new(atom.relation.clone(), atom.vars.clone());
                render_fact(&pseudo, &info)
            })
            .collect();
        write!(f, "{}", rendered.join(" & "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q1() -> ConjunctiveQuery {
        ConjunctiveQuery::new(vec![
            Atom::new("R1", vec!["x", "y"], vec![0]),
            Atom::new("R2", vec!["y", "z"], vec![0]),
        ])
    }

    #[test]
    fn blocks_group_by_key_projection() {
        let mut schema = Schema::new();
        schema.declare("R", 3, &[0]).unwrap();
        let db = Database::new(
            schema,
            vec![
                Fact::new("R", vec!["a", "b", "c"]),
                Fact::new("R", vec!["a", "c", "b"]),
                Fact::new("R", vec!["b", "b", "c"]),
            ],
        )
        .unwrap();
        assert_eq!(db.len(), 3);
        assert_eq!(db.blocks().len(), 2);
        let sizes: Vec<usize> = db.blocks().iter().map(Block::len).collect();
        assert_eq!(sizes, vec![2, 1]);
        // Every fact sits in exactly the block matching its key projection.
        for (id, fact) in db.facts().iter().enumerate() {
            let block = db.block(db.block_of_fact(id));
            assert_eq!(block.relation, fact.relation);
            assert_eq!(block.key, vec![fact.tuple[0].clone()]);
        }
    }

    #[test]
    fn duplicate_facts_merge() {
        let mut schema = Schema::new();
        schema.declare("R", 2, &[0]).unwrap();
        let db = Database::new(
            schema,
            vec![Fact::new("R", vec!["a", "b"]), Fact::new("R", vec!["a", "b"])],
        )
        .unwrap();
        assert_eq!(db.len(), 1);
    }

    #[test]
    fn full_key_means_singleton_blocks() {
        let mut schema = Schema::new();
        schema.declare("R", 2, &[0, 1]).unwrap();
        let db = Database::new(
            schema,
            vec![Fact::new("R", vec!["a", "b"]), Fact::new("R", vec!["a", "c"])],
        )
        .unwrap();
        assert_eq!(db.blocks().len(), 2);
        assert!(db.blocks().iter().all(|b| b.len() == 1));
    }

    #[test]
    fn arity_mismatch_rejected() {
        let mut schema = Schema::new();
        schema.declare("R", 3, &[0]).unwrap();
        let err = Database::new(schema, vec![Fact::new("R", vec!["a", "b"])]).unwrap_err();
        assert!(matches!(err, Error::ArityMismatch { .. }));
    }

    #[test]
    fn key_position_out_of_arity_rejected() {
        let mut schema = Schema::new();
        let err = schema.declare("R", 2, &[2]).unwrap_err();
        assert!(matches!(err, Error::BadRelation { .. }));
    }

    #[test]
    fn self_join_free_and_path_predicates() {
        assert!(q1().is_self_join_free());
        assert!(q1().is_path());

        let q4 = ConjunctiveQuery::new(vec![
            Atom::new("R", vec!["x", "y", "z"], vec![0]),
            Atom::new("R", vec!["z", "x", "y"], vec![0]),
        ]);
        assert!(!q4.is_self_join_free());
        assert!(!q4.is_path());

        // Shares a relation name but still a path.
        let rr = ConjunctiveQuery::new(vec![
            Atom::new("R", vec!["x0", "x1"], vec![0]),
            Atom::new("R", vec!["x1", "x2"], vec![0]),
        ]);
        assert!(!rr.is_self_join_free());
        assert!(rr.is_path());
        assert_eq!(rr.path_word().unwrap(), vec!["R", "R"]);

        // Repeated variable breaks the path shape.
        let looped = ConjunctiveQuery::new(vec![
            Atom::new("R", vec!["x0", "x1"], vec![0]),
            Atom::new("S", vec!["x1", "x0"], vec![0]),
        ]);
        assert!(!looped.is_path());
    }

    #[test]
    fn compatibility_check_flags_key_disagreement() {
        let mut schema = Schema::new();
        schema.declare("R1", 2, &[1]).unwrap();
        let err = q1().check_compatible(&schema).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }
}
