//! Family-tree CSV.
//!
//! One row per generation `n = 0..=N`: `generation,Z,phi,k:count,...`. The
//! `phi` field and the offspring pairs are empty on the final row, which only
//! records `Z_N`.

use std::io::{Read, Write};

use cbp_mde::FamilyTree;

pub const HEADER: [&str; 4] = ["generation", "Z", "phi", "offspring"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn write_tree<W: Write>(tree: &FamilyTree, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(HEADER)?;
    let sizes = tree.sizes();
    for (n, &z) in sizes.iter().enumerate() {
        let mut rec = vec![n.to_string(), z.to_string()];
        if n < tree.generations() {
            rec.push(tree.progenitors()[n].to_string());
            rec.extend(
                tree.counts(n)
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(k, c)| format!("{k}:{c}")),
            );
        } else {
            rec.push(String::new());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn tree_to_string(tree: &FamilyTree) -> String {
    let mut buf = Vec::new();
    write_tree(tree, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_u64(field: &str, what: &str, line: u64) -> Result<u64, ParseError> {
    field.trim().parse().map_err(|_| ParseError {
        line,
        message: format!("{what}: expected a non-negative integer, got '{field}'"),
    })
}

pub fn read_tree<R: Read>(input: R) -> Result<FamilyTree, ParseError> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(input);
    let mut z = Vec::new();
    let mut phi = Vec::new();
    let mut counts = Vec::new();
    let mut saw_last = false;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ParseError {
            line: e.position().map_or(i as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 {
            if rec.iter().take(3).ne(HEADER.iter().take(3).copied()) {
                return Err(ParseError {
                    line,
                    message: format!("expected header {}", HEADER.join(",")),
                });
            }
            continue;
        }
        if saw_last {
            return Err(ParseError {
                line,
                message: "row after the final generation (empty phi)".into(),
            });
        }
        if rec.len() < 3 {
            return Err(ParseError {
                line,
                message: format!("expected at least 3 fields, got {}", rec.len()),
            });
        }
        let n = parse_u64(&rec[0], "generation", line)?;
        if n != (i - 1) as u64 {
            return Err(ParseError {
                line,
                message: format!("generation {n} out of order, expected {}", i - 1),
            });
        }
        z.push(parse_u64(&rec[1], "Z", line)?);
        if rec[2].trim().is_empty() {
            if rec.len() > 3 && rec.iter().skip(3).any(|f| !f.trim().is_empty()) {
                return Err(ParseError {
                    line,
                    message: "offspring counts on the final row".into(),
                });
            }
            saw_last = true;
            continue;
        }
        phi.push(parse_u64(&rec[2], "phi", line)?);
        let mut row: Vec<u64> = Vec::new();
        for field in rec.iter().skip(3).filter(|f| !f.trim().is_empty()) {
            let (k, c) = field.split_once(':').ok_or_else(|| ParseError {
                line,
                message: format!("offspring pair '{field}' is not k:count"),
            })?;
            let k = parse_u64(k, "offspring k", line)? as usize;
            let c = parse_u64(c, "offspring count", line)?;
            if row.len() <= k {
                row.resize(k + 1, 0);
            }
            if row[k] != 0 {
                return Err(ParseError {
                    line,
                    message: format!("duplicate offspring value {k}"),
                });
            }
            row[k] = c;
        }
        counts.push(row);
    }
    if !saw_last {
        return Err(ParseError {
            line: r.position().line(),
            message: "missing final row (generation with empty phi)".into(),
        });
    }
    FamilyTree::new(z, phi, counts).map_err(|e| ParseError {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cbp_mde::dist::ControlSpec;
    use cbp_mde::{simulate, Pmf};

    #[test]
    fn doubling_tree_layout() {
        let tree = simulate(&Pmf::point_mass(2), &ControlSpec::identity(), 1, 3, 0);
        let s = tree_to_string(&tree);
        assert_eq!(
            s,
            "generation,Z,phi,offspring\n0,1,1,2:1\n1,2,2,2:2\n2,4,4,2:4\n3,8,\n"
        );
        assert_eq!(read_tree(s.as_bytes()).unwrap(), tree);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = "generation,Z,phi,offspring\n0,1,1,2:1\n1,x,2,2:2\n2,4,\n";
        let e = read_tree(bad.as_bytes()).unwrap_err();
        assert_eq!(e.line, 3);
        let bad = "generation,Z,phi,offspring\n0,1,1,2-1\n1,2,\n";
        assert_eq!(read_tree(bad.as_bytes()).unwrap_err().line, 2);
        let bad = "generation,Z,phi,offspring\n0,1,1,2:1\n";
        assert!(read_tree(bad.as_bytes()).is_err());
    }

    #[test]
    fn bookkeeping_violations_are_rejected() {
        let bad = "generation,Z,phi,offspring\n0,1,1,3:1\n1,2,\n";
        assert!(read_tree(bad.as_bytes()).is_err());
    }
}
