//! Structural patterns of the benchmark models. Each edge `(i, j)` means
//! `i → j`, i.e. the matrix entry `(j, i)` is free; every diagonal entry is
//! free as well.

use crate::error::Result;
use crate::graph::CausalGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Pattern {
    pub fn graph(&self) -> Result<CausalGraph> {
        CausalGraph::from_edges(self.n, self.edges.iter().copied())
    }

    /// 0-based `(row, col)` positions of free entries, diagonal included.
    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.n).map(|i| (i, i)).collect();
        out.extend(self.edges.iter().map(|&(i, j)| (j - 1, i - 1)));
        out
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        row == col || self.edges.contains(&(col + 1, row + 1))
    }
}

/// Instrument 1, treatment 2, outcome 3, hidden confounder 4.
pub fn single_instrument() -> Pattern {
    Pattern {
        n: 4,
        edges: vec![(1, 2), (2, 3), (4, 2), (4, 3)],
    }
}

/// [`single_instrument`] plus feedback from the outcome to the treatment.
pub fn single_instrument_feedback() -> Pattern {
    let mut p = single_instrument();
    p.edges.push((3, 2));
    p
}

/// Instruments {1,2}, treatments {3,4}, outcome 5, hidden 6.
pub fn two_instruments() -> Pattern {
    Pattern {
        n: 6,
        edges: vec![
            (1, 3),
            (2, 3),
            (1, 4),
            (2, 4),
            (3, 5),
            (4, 5),
            (6, 5),
            (6, 3),
            (6, 4),
        ],
    }
}

/// [`two_instruments`] with cycles inside the instrument and treatment sets
/// and feedback 5 → 3.
pub fn two_instruments_cyclic() -> Pattern {
    let mut p = two_instruments();
    p.edges.extend([(1, 2), (2, 1), (4, 3), (3, 4), (5, 3)]);
    p
}

/// Instruments {1,2} for the effect 3 → 4, hidden 5; overidentified.
pub fn overidentified() -> Pattern {
    Pattern {
        n: 5,
        edges: vec![(1, 2), (2, 1), (1, 3), (2, 3), (4, 3), (3, 4), (5, 3), (5, 4)],
    }
}

/// Free entries of the two lag matrices of the four-dimensional VAR(2)
/// example in which process 1 is instrumental for 2 → 3 (0-based
/// `(row, col)`).
pub fn var2_example() -> [Vec<(usize, usize)>; 2] {
    [
        vec![
            (0, 0),
            (1, 0),
            (1, 1),
            (1, 2),
            (1, 3),
            (2, 1),
            (2, 2),
            (2, 3),
            (3, 3),
        ],
        vec![(0, 0), (1, 0), (2, 3), (3, 3)],
    ]
}
