//! Matrix Market coordinate I/O for [`CooMatrix`].

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::matrix::CooMatrix;

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Render a matrix in Matrix Market coordinate format (1-based indices).
pub fn to_matrix_market(m: &CooMatrix) -> String {
    let mut s = String::with_capacity(32 * (m.nnz() + 2));
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz());
    for (r, c, v) in m.triplets() {
        // `{:?}` is the shortest representation that round-trips
        let _ = writeln!(s, "{} {} {:?}", r + 1, c + 1, v);
    }
    s
}

pub fn write_matrix_market<W: Write>(m: &CooMatrix, mut out: W) -> Result<()> {
    out.write_all(to_matrix_market(m).as_bytes())?;
    Ok(())
}

/// Parse a `coordinate real general` Matrix Market stream into canonical COO.
pub fn read_matrix_market<R: BufRead>(input: R) -> Result<CooMatrix> {
    let mut lines = input.lines().enumerate();
    let parse_err = |line: usize, reason: &str| Error::Parse {
        line: line + 1,
        reason: reason.to_string(),
    };

    let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5
        || tokens[0] != "%%matrixmarket"
        || tokens[1] != "matrix"
        || tokens[2] != "coordinate"
        || tokens[3] != "real"
        || tokens[4] != "general"
    {
        return Err(parse_err(0, "expected `%%MatrixMarket matrix coordinate real general`"));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(no, "expected three fields"));
        }
        match size {
            None => {
                let p = |s: &str| s.parse::<usize>().map_err(|_| parse_err(no, "bad size line"));
                size = Some((p(fields[0])?, p(fields[1])?, p(fields[2])?));
            }
            Some((nr, nc, _)) => {
                let idx = |s: &str, lim: usize| -> Result<usize> {
                    let i = s.parse::<usize>().map_err(|_| parse_err(no, "bad index"))?;
                    if i == 0 || i > lim {
                        return Err(parse_err(no, "index out of range"));
                    }
                    Ok(i - 1)
                };
                let v = fields[2]
                    .parse::<f64>()
                    .map_err(|_| parse_err(no, "bad value"))?;
                triplets.push((idx(fields[0], nr)?, idx(fields[1], nc)?, v));
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| parse_err(0, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(Error::Parse {
            line: 2,
            reason: format!("declared {nnz} entries, found {}", triplets.len()),
        });
    }
    CooMatrix::from_triplets(nr, nc, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn writes_one_based() {
        let m = CooMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (1, 0, -1.5)]).unwrap();
        let s = to_matrix_market(&m);
        assert_eq!(
            s,
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2.0\n2 1 -1.5\n"
        );
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "%%MatrixMarket matrix array real general\n1 1\n1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n",
        ];
        for b in bad {
            assert!(read_matrix_market(b.as_bytes()).is_err(), "{b}");
        }
    }

    #[test]
    fn accepts_comments_and_unsorted_entries() {
        let s = "%%MatrixMarket matrix coordinate real general\n% note\n2 2 2\n2 2 4\n1 2 3e0\n";
        let m = read_matrix_market(s.as_bytes()).unwrap();
        assert_eq!(m.triplets().collect::<Vec<_>>(), [(0, 1, 3.0), (1, 1, 4.0)]);
    }

    proptest! {
        #[test]
        fn round_trip(entries in proptest::collection::btree_map((0usize..7, 0usize..5), -1e6f64..1e6, 0..30)) {
            let triplets = entries.iter().map(|(&(r, c), &v)| (r, c, v)).collect();
            let m = CooMatrix::from_triplets(7, 5, triplets).unwrap();
            let back = read_matrix_market(to_matrix_market(&m).as_bytes()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
