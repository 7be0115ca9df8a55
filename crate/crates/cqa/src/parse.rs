//! Parsers and renderers for the database file format and the query DSL.
//!
//! Database files are UTF-8 and line oriented:
//!
//! ```text
//! # schema lines declare arity and 1-based key positions
//! R/3 key 1
//! # fact lines list key constants left of `;`, remaining constants right,
//! # each side in declared position order; `;` is omitted when the key
//! # covers all positions
//! R(a; b, c)
//! ```
//!
//! Queries are atoms joined by `&`, with the same `;` convention; identifiers
//! are variables and key positions are the positions left of `;`:
//!
//! ```text
//! R1(x; y) & R2(y; z)
//! ```

use crate::error::Error;
use crate::model::{render_fact, Atom, ConjunctiveQuery, Database, Fact, Schema};

/// Non-fatal observation made while parsing, with its 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

fn valid_symbol(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | ',' | ';' | '#' | '&' | '/'))
}

fn split_symbols(text: &str, line: usize) -> Result<Vec<String>, Error> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in text.split(',') {
        let sym = part.trim();
        if !valid_symbol(sym) {
            return Err(Error::Syntax {
                line,
                message: format!("bad identifier `{}`", sym),
            });
        }
        out.push(sym.to_string());
    }
    Ok(out)
}

/// `REL(k1,..;v1,..)` split into relation name, key side and value side.
/// Returns the value side as `None` when no `;` is present.
fn split_atom(text: &str, line: usize) -> Result<(String, Vec<String>, Option<Vec<String>>), Error> {
    let text = text.trim();
    let open = text.find('(').ok_or_else(|| Error::Syntax {
        line,
        message: format!("expected `(` in `{}`", text),
    })?;
    if !text.ends_with(')') {
        return Err(Error::Syntax {
            line,
            message: format!("expected trailing `)` in `{}`", text),
        });
    }
    let relation = text[..open].trim().to_string();
    if !valid_symbol(&relation) {
        return Err(Error::Syntax {
            line,
            message: format!("bad relation name `{}`", relation),
        });
    }
    let inner = &text[open + 1..text.len() - 1];
    match inner.split_once(';') {
        None => Ok((relation, split_symbols(inner, line)?, None)),
        Some((left, right)) => {
            if right.contains(';') {
                return Err(Error::Syntax {
                    line,
                    message: "more than one `;`".into(),
                });
            }
            Ok((relation, split_symbols(left, line)?, Some(split_symbols(right, line)?)))
        }
    }
}

/// Rebuilds the full tuple from the key side and value side of an atom.
fn assemble_tuple(
    relation: &str,
    keys: Vec<String>,
    values: Option<Vec<String>>,
    arity: usize,
    key_positions: &[usize],
    line: usize,
) -> Result<Vec<String>, Error> {
    let values = match values {
        Some(v) => v,
        None if key_positions.len() == arity => Vec::new(),
        None => {
            return Err(Error::ArityMismatch {
                line,
                message: format!(
                    "`{}` needs a `;` because its key covers {} of {} positions",
                    relation,
                    key_positions.len(),
                    arity
                ),
            })
        }
    };
    if keys.len() != key_positions.len() || keys.len() + values.len() != arity {
        return Err(Error::ArityMismatch {
            line,
            message: format!(
                "`{}` expects {} key and {} other positions, got {} and {}",
                relation,
                key_positions.len(),
                arity - key_positions.len(),
                keys.len(),
                values.len()
            ),
        });
    }
    let mut tuple = vec![String::new(); arity];
    for (slot, constant) in key_positions.iter().zip(keys) {
        tuple[*slot] = constant;
    }
    let mut values = values.into_iter();
    for (slot, entry) in tuple.iter_mut().enumerate() {
        if !key_positions.contains(&slot) {
            *entry = values.next().expect("counted above");
        }
    }
    Ok(tuple)
}

/// Parses a database file. Duplicate fact lines are merged with a warning.
pub fn parse_database(text: &str) -> Result<(Database, Vec<ParseWarning>), Error> {
    let mut schema = Schema::new();
    let mut facts: Vec<(usize, Fact)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.contains('/') {
            parse_schema_line(line, line_no, &mut schema)?;
        } else {
            let (relation, keys, values) = split_atom(line, line_no)?;
            let info = schema.relation(&relation).ok_or_else(|| Error::Syntax {
                line: line_no,
                message: format!("relation `{}` has no schema line", relation),
            })?;
            let tuple = assemble_tuple(&relation, keys, values, info.arity, &info.key_positions, line_no)?;
            facts.push((line_no, Fact { relation, tuple }));
        }
    }

    let mut warnings = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, fact) in &facts {
        if !seen.insert(fact.clone()) {
            warnings.push(ParseWarning {
                line: *line,
                message: format!("duplicate fact {} merged", fact),
            });
        }
    }
    let db = Database::new(schema, facts.into_iter().map(|(_, f)| f))?;
    Ok((db, warnings))
}

fn parse_schema_line(line: &str, line_no: usize, schema: &mut Schema) -> Result<(), Error> {
    let (head, tail) = match line.split_once(char::is_whitespace) {
        Some((h, t)) => (h.trim(), t.trim()),
        None => (line, ""),
    };
    let (name, arity_text) = head.split_once('/').ok_or_else(|| Error::Syntax {
        line: line_no,
        message: format!("expected NAME/ARITY in `{}`", head),
    })?;
    if !valid_symbol(name) {
        return Err(Error::Syntax {
            line: line_no,
            message: format!("bad relation name `{}`", name),
        });
    }
    let arity: usize = arity_text.parse().map_err(|_| Error::Syntax {
        line: line_no,
        message: format!("bad arity `{}`", arity_text),
    })?;
    let key_list = match tail.strip_prefix("key") {
        Some(rest) => rest.trim(),
        None => {
            return Err(Error::Syntax {
                line: line_no,
                message: "schema line must read `NAME/ARITY key P1,P2,...`".into(),
            })
        }
    };
    let mut key_positions = Vec::new();
    if !key_list.is_empty() {
        for part in key_list.split(',') {
            let pos: usize = part.trim().parse().map_err(|_| Error::Syntax {
                line: line_no,
                message: format!("bad key position `{}`", part.trim()),
            })?;
            if pos == 0 {
                return Err(Error::Syntax {
                    line: line_no,
                    message: "key positions are 1-based".into(),
                });
            }
            key_positions.push(pos - 1);
        }
    }
    schema.declare(name, arity, &key_positions)
}

/// Renders a database in the file format; `parse_database` round-trips it.
pub fn render_database(db: &Database) -> String {
    let mut out = String::new();
    for (name, info) in db.schema().relations() {
        let keys: Vec<String> = info.key_positions.iter().map(|p| (p + 1).to_string()).collect();
        out.push_str(&format!("{}/{} key {}\n", name, info.arity, keys.join(",")));
    }
    for fact in db.facts() {
        let info = db.schema().relation(&fact.relation).expect("schema covers facts");
        out.push_str(&render_fact(fact, info));
        out.push('\n');
    }
    out
}

/// Parses the query DSL. Key positions of each atom are the positions left
/// of `;`; relations used twice must agree on arity and key split.
pub fn parse_query(text: &str) -> Result<ConjunctiveQuery, Error> {
    let stripped = text.split('#').next().unwrap_or("").trim();
    if stripped.is_empty() {
        return Err(Error::Syntax {
            line: 1,
            message: "empty query".into(),
        });
    }
    let mut atoms = Vec::new();
    let mut schema = Schema::new();
    for part in stripped.split('&') {
        let (relation, keys, values) = split_atom(part, 1)?;
        let key_len = keys.len();
        let arity = key_len + values.as_ref().map_or(0, Vec::len);
        if arity == 0 {
            return Err(Error::Syntax {
                line: 1,
                message: format!("atom `{}` has no positions", relation),
            });
        }
        let key_positions: Vec<usize> = (0..key_len).collect();
        // `declare` rejects the same relation reappearing with another shape.
        schema.declare(&relation, arity, &key_positions)?;
        let mut vars = keys;
        vars.extend(values.unwrap_or_default());
        atoms.push(Atom::new(relation, vars, key_positions));
    }
    Ok(ConjunctiveQuery::new(atoms))
}

/// Parses a query from a file's contents, ignoring comments and joining
/// lines, so multi-line query files are accepted.
pub fn parse_query_file(text: &str) -> Result<ConjunctiveQuery, Error> {
    let joined: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .collect();
    parse_query(&joined.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fact_single_block() {
        let (db, warnings) = parse_database("R/3 key 1\nR(a; b, c)\n").unwrap();
        assert!(warnings.is_empty());
        assert_eq!(db.len(), 1);
        assert_eq!(db.blocks().len(), 1);
        assert_eq!(db.fact(0).tuple, vec!["a", "b", "c"]);
    }

    #[test]
    fn shared_key_one_block() {
        let (db, _) = parse_database("R/3 key 1\nR(a; b, c)\nR(a; c, b)\n").unwrap();
        assert_eq!(db.len(), 2);
        assert_eq!(db.blocks().len(), 1);
        assert_eq!(db.block(0).len(), 2);
    }

    #[test]
    fn arity_mismatch_reported_with_line() {
        let err = parse_database("R/3 key 1\nR(a; b)\n").unwrap_err();
        match err {
            Error::ArityMismatch { line, .. } => assert_eq!(line, 2),
            other => panic!("expected arity mismatch, got {other:?}"),
        }
    }

    #[test]
    fn unknown_relation_reported() {
        let err = parse_database("R(a; b)\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, .. }));
    }

    #[test]
    fn inconsistent_key_split_rejected() {
        let err = parse_database("R/3 key 1\nR/3 key 2\n").unwrap_err();
        assert!(matches!(err, Error::InconsistentKey { .. }));
    }

    #[test]
    fn duplicate_fact_warns_and_merges() {
        let (db, warnings) = parse_database("R/2 key 1\nR(a; b)\nR(a; b)\n").unwrap();
        assert_eq!(db.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].line, 3);
    }

    #[test]
    fn key_reordering_fills_declared_positions() {
        // Key is the middle position: T(b; a, c) stands for tuple (a, b, c).
        let (db, _) = parse_database("T/3 key 2\nT(b; a, c)\n").unwrap();
        assert_eq!(db.fact(0).tuple, vec!["a", "b", "c"]);
        assert_eq!(render_database(&db), "T/3 key 2\nT(b; a, c)\n");
    }

    #[test]
    fn full_key_fact_has_no_semicolon() {
        let (db, _) = parse_database("R/2 key 1,2\nR(a, b)\n").unwrap();
        assert_eq!(db.fact(0).tuple, vec!["a", "b"]);
        // Missing `;` with a partial key is an error.
        assert!(parse_database("R/2 key 1\nR(a, b)\n").is_err());
    }

    #[test]
    fn empty_key_supported() {
        let (db, _) = parse_database("R/2 key\nR(; a, b)\nR(; c, d)\n").unwrap();
        // Empty key projection puts every R-fact in one block.
        assert_eq!(db.blocks().len(), 1);
        assert_eq!(db.block(0).len(), 2);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let (db, _) = parse_database("# header\nR/2 key 1\n\nR(a; b) # trailing\n").unwrap();
        assert_eq!(db.len(), 1);
    }

    #[test]
    fn render_parse_round_trip() {
        let text = "R/3 key 1\nS/2 key 1,2\nR(a; b, c)\nR(a; c, b)\nS(x, y)\n";
        let (db, _) = parse_database(text).unwrap();
        let (again, _) = parse_database(&render_database(&db)).unwrap();
        assert_eq!(db, again);
    }

    #[test]
    fn query_q1_shape() {
        let q = parse_query("R1(x; y) & R2(y; z)").unwrap();
        assert_eq!(q.len(), 2);
        assert!(q.is_self_join_free());
        let key_vars: Vec<&str> = q.atoms[0].key_vars().into_iter().collect();
        assert_eq!(key_vars, vec!["x"]);
        assert!(q.is_path());
    }

    #[test]
    fn query_q4_shape() {
        let q = parse_query("R(x; y, z) & R(z; x, y)").unwrap();
        assert_eq!(q.len(), 2);
        assert!(!q.is_self_join_free());
        assert!(!q.is_path());
    }

    #[test]
    fn query_path_word() {
        let q = parse_query("R(x0; x1) & X(x1; x2)").unwrap();
        assert_eq!(q.path_word().unwrap(), vec!["R", "X"]);
    }

    #[test]
    fn query_inconsistent_relation_use_rejected() {
        assert!(matches!(
            parse_query("R(x; y) & R(x; y, z)"),
            Err(Error::InconsistentKey { .. })
        ));
        assert!(matches!(
            parse_query("R(x; y) & R(x, y)"),
            Err(Error::InconsistentKey { .. })
        ));
    }

    #[test]
    fn query_syntax_errors() {
        assert!(parse_query("").is_err());
        assert!(parse_query("R(x; y) &").is_err());
        assert!(parse_query("R x; y").is_err());
    }
}
