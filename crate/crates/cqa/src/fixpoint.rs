//! The inflationary k-set fixpoint and its two-atom extension.
//!
//! For a query `q` with parameter `k`, the standard run seeds a table with
//! every set of at most `k` facts that satisfies `q`, then repeatedly adds a
//! k-set `S` whenever some block `B` witnesses it: for every fact `u` of `B`
//! some subset of `S ∪ {u}` is already in the table. The run accepts when the
//! empty set is derived; acceptance implies the query is certain, never the
//! converse.
//!
//! The extended run, defined for two-atom queries only, adds a second rule:
//! `S` is also derived when some fact `a` that is not a self-loop (no
//! solution `q(aa)`) witnesses it through the set
//! `{b : q(ab) ∨ q(ba) ∨ a = b}` in place of a block.
//!
//! Rounds are synchronous: every set derivable from the round-`i` table is
//! stamped `i+1`, so the per-round slices match the unfoldings used by the
//! boundedness checks.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::eval::{assignment_is_solution, solutions};
use crate::model::{BlockId, ConjunctiveQuery, Database, FactId};

/// Which derivation rules are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Block rule only.
    Standard,
    /// Block rule plus the two-atom neighbourhood rule.
    Extended,
}

/// Candidate scheduling. Both strategies produce the identical table, stamps
/// and trace; `Frontier` merely skips candidates no new entry can unlock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Naive,
    Frontier,
}

#[derive(Debug, Clone)]
pub struct FixpointConfig {
    /// Cap on the number of k-sets (sum of binomials) a run may enumerate.
    pub kset_cap: u64,
    pub strategy: Strategy,
}

impl Default for FixpointConfig {
    fn default() -> Self {
        FixpointConfig { kset_cap: 1_000_000, strategy: Strategy::Naive }
    }
}

/// A set of at most k facts in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KSet(Vec<FactId>);

impl KSet {
    pub fn new(mut facts: Vec<FactId>) -> KSet {
        facts.sort_unstable();
        facts.dedup();
        KSet(facts)
    }

    pub fn empty() -> KSet {
        KSet(Vec::new())
    }

    pub fn facts(&self) -> &[FactId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every fact of `self` occurs in the sorted slice `other`.
    pub fn is_subset_of(&self, other: &[FactId]) -> bool {
        self.0.iter().all(|f| other.binary_search(f).is_ok())
    }
}

/// What justified a derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceWitness {
    /// The block rule fired with this block.
    Block(BlockId),
    /// The extended rule fired with this fact.
    Fact(FactId),
}

/// One table entry in derivation order. Round-0 entries carry no witness;
/// they are exactly the k-sets satisfying the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub round: u32,
    pub kset: KSet,
    pub witness: Option<TraceWitness>,
}

/// The derived family of k-sets with the round each was first derived.
#[derive(Debug, Clone)]
pub struct DeltaTable {
    pub k: usize,
    pub mode: Mode,
    entries: HashMap<KSet, u32>,
    trace: Vec<TraceEntry>,
    pub rounds: u32,
}

impl DeltaTable {
    pub fn contains(&self, kset: &KSet) -> bool {
        self.entries.contains_key(kset)
    }

    pub fn round_of(&self, kset: &KSet) -> Option<u32> {
        self.entries.get(kset).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&KSet, u32)> {
        self.entries.iter().map(|(k, &r)| (k, r))
    }

    /// Entries in derivation order with their witnesses.
    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Entries of one round, in canonical order.
    pub fn round_slice(&self, round: u32) -> Vec<&KSet> {
        let mut out: Vec<&KSet> = self.trace.iter().filter(|e| e.round == round).map(|e| &e.kset).collect();
        out.sort_unstable();
        out
    }
}

/// Result of one fixpoint run.
#[derive(Debug, Clone)]
pub struct CqkRun {
    pub accepted: bool,
    /// Round at which the empty set was derived, when accepted.
    pub empty_set_round: Option<u32>,
    pub table: DeltaTable,
}

/// Runs the standard fixpoint with parameter `k`.
pub fn run_cqk(db: &Database, q: &ConjunctiveQuery, k: usize, cfg: &FixpointConfig) -> Result<CqkRun, Error> {
    run(db, q, k, Mode::Standard, cfg)
}

/// Runs the extended fixpoint; the query must have exactly two atoms.
pub fn run_cqk_plus(db: &Database, q: &ConjunctiveQuery, k: usize, cfg: &FixpointConfig) -> Result<CqkRun, Error> {
    if q.len() != 2 {
        return Err(Error::WrongAtomCount(q.len()));
    }
    run(db, q, k, Mode::Extended, cfg)
}

fn run(db: &Database, q: &ConjunctiveQuery, k: usize, mode: Mode, cfg: &FixpointConfig) -> Result<CqkRun, Error> {
    if k == 0 {
        return Err(Error::OutOfRange("k must be at least 1".into()));
    }
    q.check_compatible(db.schema())?;
    check_kset_cap(db.len(), k, cfg.kset_cap)?;

    // Distinct fact sets of solutions, restricted to those fitting in a k-set.
    let mut solution_sets: BTreeSet<KSet> = BTreeSet::new();
    for sol in solutions(db, q) {
        let set = KSet::new(sol);
        if set.len() <= k {
            solution_sets.insert(set);
        }
    }
    let solution_sets: Vec<KSet> = solution_sets.into_iter().collect();

    let all_ksets = enumerate_ksets(db.len(), k);

    let mut entries: HashMap<KSet, u32> = HashMap::new();
    let mut trace: Vec<TraceEntry> = Vec::new();
    for kset in &all_ksets {
        if solution_sets.iter().any(|s| s.is_subset_of(kset.facts())) {
            entries.insert(kset.clone(), 0);
            trace.push(TraceEntry { round: 0, kset: kset.clone(), witness: None });
        }
    }

    let blocks: Vec<(BlockId, Vec<FactId>)> =
        db.blocks().iter().enumerate().map(|(i, b)| (i, b.facts.clone())).collect();
    let neighbourhoods = match mode {
        Mode::Standard => Vec::new(),
        Mode::Extended => two_atom_neighbourhoods(db, q),
    };

    let mut last_round_new: Vec<KSet> = trace.iter().map(|e| e.kset.clone()).collect();
    let mut rounds = 0u32;
    loop {
        let round = rounds + 1;
        let mut pending: Vec<(KSet, TraceWitness)> = Vec::new();
        for kset in &all_ksets {
            if entries.contains_key(kset) {
                continue;
            }
            if cfg.strategy == Strategy::Frontier
                && !last_round_new.iter().any(|t| t.facts().iter().filter(|f| kset.facts().binary_search(f).is_err()).count() <= 1)
            {
                // No entry of the previous round can serve as a fresh witness
                // subset for this candidate, so it cannot fire this round.
                continue;
            }
            if let Some(witness) = try_derive(kset, k, &entries, &blocks, &neighbourhoods) {
                pending.push((kset.clone(), witness));
            }
        }
        if pending.is_empty() {
            break;
        }
        rounds = round;
        last_round_new.clear();
        for (kset, witness) in pending {
            entries.insert(kset.clone(), round);
            last_round_new.push(kset.clone());
            trace.push(TraceEntry { round, kset, witness: Some(witness) });
        }
    }

    let empty_set_round = entries.get(&KSet::empty()).copied();
    Ok(CqkRun {
        accepted: empty_set_round.is_some(),
        empty_set_round,
        table: DeltaTable { k, mode, entries, trace, rounds },
    })
}

/// First witness (blocks in canonical order, then facts) deriving `kset`
/// from the current table, if any.
fn try_derive(
    kset: &KSet,
    k: usize,
    entries: &HashMap<KSet, u32>,
    blocks: &[(BlockId, Vec<FactId>)],
    neighbourhoods: &[(FactId, Vec<FactId>)],
) -> Option<TraceWitness> {
    let covered = |u: FactId| -> bool { has_subset_in(kset, u, k, entries) };
    for (bid, facts) in blocks {
        if facts.iter().all(|&u| covered(u)) {
            return Some(TraceWitness::Block(*bid));
        }
    }
    for (a, members) in neighbourhoods {
        if members.iter().all(|&u| covered(u)) {
            return Some(TraceWitness::Fact(*a));
        }
    }
    None
}

/// Does some subset of `kset ∪ {u}` of size at most `k` appear in the table?
fn has_subset_in(kset: &KSet, u: FactId, k: usize, entries: &HashMap<KSet, u32>) -> bool {
    let mut union: Vec<FactId> = kset.facts().to_vec();
    if let Err(pos) = union.binary_search(&u) {
        union.insert(pos, u);
    }
    let n = union.len();
    debug_assert!(n <= k + 1);
    for mask in 0u32..(1 << n) {
        if (mask.count_ones() as usize) > k {
            continue;
        }
        let subset: Vec<FactId> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| union[i]).collect();
        if entries.contains_key(&KSet(subset)) {
            return true;
        }
    }
    false
}

/// For each fact `a` that is not a self-loop, the set
/// `{b : q(ab) ∨ q(ba) ∨ a = b}` used by the extended rule.
fn two_atom_neighbourhoods(db: &Database, q: &ConjunctiveQuery) -> Vec<(FactId, Vec<FactId>)> {
    let n = db.len();
    let mut out = Vec::new();
    for a in 0..n {
        if assignment_is_solution(db, q, &[a, a]) {
            continue;
        }
        let members: Vec<FactId> = (0..n)
            .filter(|&b| {
                a == b || assignment_is_solution(db, q, &[a, b]) || assignment_is_solution(db, q, &[b, a])
            })
            .collect();
        out.push((a, members));
    }
    out
}

fn check_kset_cap(n: usize, k: usize, cap: u64) -> Result<(), Error> {
    let over = Error::LimitExceeded { what: "k-set enumeration", limit: cap };
    let mut total: u128 = 0;
    let mut choose: u128 = 1;
    for i in 0..=k.min(n) {
        if i > 0 {
            choose = choose
                .checked_mul(n as u128 - i as u128 + 1)
                .ok_or_else(|| over.clone())?
                / i as u128;
        }
        total += choose;
        if total > cap as u128 {
            return Err(over);
        }
    }
    Ok(())
}

/// All subsets of `{0..n}` of size at most `k`, in size-then-lexicographic
/// order starting with the empty set.
fn enumerate_ksets(n: usize, k: usize) -> Vec<KSet> {
    let mut out = vec![KSet::empty()];
    let mut current: Vec<FactId> = Vec::new();
    fn extend(n: usize, k: usize, start: usize, current: &mut Vec<FactId>, out: &mut Vec<KSet>) {
        if current.len() == k {
            return;
        }
        for next in start..n {
            current.push(next);
            out.push(KSet(current.clone()));
            extend(n, k, next + 1, current, out);
            current.pop();
        }
    }
    extend(n, k, 0, &mut current, &mut out);
    out.sort_unstable_by(|a, b| (a.len(), &a.0).cmp(&(b.len(), &b.0)));
    out
}

// ---------------------------------------------------------------------------
// Trace serialization and replay
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TraceLine {
    round: u32,
    kset: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<TraceWitnessLine>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TraceWitnessLine {
    Block { id: String },
    Fact { id: String },
}

/// Serializes the trace as JSON lines, one derivation per line. Facts are
/// rendered in the database text format; blocks as `REL(key)`.
pub fn trace_to_jsonl(db: &Database, table: &DeltaTable) -> String {
    let mut out = String::new();
    for entry in table.trace() {
        let line = TraceLine {
            round: entry.round,
            kset: entry.kset.facts().iter().map(|&f| db.render_fact(f)).collect(),
            witness: entry.witness.map(|w| match w {
                TraceWitness::Block(b) => {
                    let block = db.block(b);
                    TraceWitnessLine::Block { id: format!("{}({})", block.relation, block.key.join(",")) }
                }
                TraceWitness::Fact(f) => TraceWitnessLine::Fact { id: db.render_fact(f) },
            }),
        };
        out.push_str(&serde_json::to_string(&line).expect("trace serializes"));
        out.push('\n');
    }
    out
}

/// Replays a serialized trace against a database and query, re-checking
/// every derivation. Returns the reconstructed `kset -> round` map; fails if
/// any step is not justified, so a successful replay re-derives the table.
pub fn replay_trace(
    db: &Database,
    q: &ConjunctiveQuery,
    k: usize,
    text: &str,
) -> Result<HashMap<KSet, u32>, Error> {
    let mut fact_ids: HashMap<String, FactId> = HashMap::new();
    for id in 0..db.len() {
        fact_ids.insert(db.render_fact(id), id);
    }
    let mut block_ids: HashMap<String, BlockId> = HashMap::new();
    for (bid, block) in db.blocks().iter().enumerate() {
        block_ids.insert(format!("{}({})", block.relation, block.key.join(",")), bid);
    }

    let mut rebuilt: HashMap<KSet, u32> = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine =
            serde_json::from_str(line).map_err(|e| Error::BadTrace(format!("line {}: {}", no + 1, e)))?;
        let mut ids = Vec::new();
        for rendered in &parsed.kset {
            let id = fact_ids
                .get(rendered)
                .ok_or_else(|| Error::BadTrace(format!("line {}: unknown fact {}", no + 1, rendered)))?;
            ids.push(*id);
        }
        let kset = KSet::new(ids);
        if kset.len() > k {
            return Err(Error::BadTrace(format!("line {}: set exceeds k={}", no + 1, k)));
        }
        let justified = match &parsed.witness {
            None => {
                parsed.round == 0 && {
                    let mask: Vec<bool> = (0..db.len()).map(|f| kset.facts().contains(&f)).collect();
                    crate::eval::satisfied_within(db, q, &mask)
                }
            }
            Some(TraceWitnessLine::Block { id }) => {
                let bid = block_ids
                    .get(id)
                    .ok_or_else(|| Error::BadTrace(format!("line {}: unknown block {}", no + 1, id)))?;
                let earlier = |u: FactId| {
                    has_subset_earlier(&kset, u, k, &rebuilt, parsed.round)
                };
                db.block(*bid).facts.iter().all(|&u| earlier(u))
            }
            Some(TraceWitnessLine::Fact { id }) => {
                let a = *fact_ids
                    .get(id)
                    .ok_or_else(|| Error::BadTrace(format!("line {}: unknown fact {}", no + 1, id)))?;
                if assignment_is_solution(db, q, &[a, a]) {
                    false
                } else {
                    let members: Vec<FactId> = (0..db.len())
                        .filter(|&b| {
                            a == b
                                || assignment_is_solution(db, q, &[a, b])
                                || assignment_is_solution(db, q, &[b, a])
                        })
                        .collect();
                    members.iter().all(|&u| has_subset_earlier(&kset, u, k, &rebuilt, parsed.round))
                }
            }
        };
        if !justified {
            return Err(Error::BadTrace(format!("line {}: derivation not justified", no + 1)));
        }
        rebuilt.entry(kset).or_insert(parsed.round);
    }
    Ok(rebuilt)
}

fn has_subset_earlier(kset: &KSet, u: FactId, k: usize, entries: &HashMap<KSet, u32>, round: u32) -> bool {
    let mut union: Vec<FactId> = kset.facts().to_vec();
    if let Err(pos) = union.binary_search(&u) {
        union.insert(pos, u);
    }
    let n = union.len();
    for mask in 0u32..(1 << n) {
        if (mask.count_ones() as usize) > k {
            continue;
        }
        let subset: Vec<FactId> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| union[i]).collect();
        if entries.get(&KSet(subset)).map_or(false, |&r| r < round) {
            return true;
        }
    }
    false
}
