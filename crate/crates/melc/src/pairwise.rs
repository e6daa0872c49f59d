//! O(|A||B|) Gaussian pair sums shared by the divergence values and their
//! gradients. Every kernel accumulates with compensated summation inside
//! fixed-size row chunks and combines chunk partials in index order, so
//! results do not depend on thread count.
//!
//! Terms, with D = p_a - p_b and pair variance `var`:
//!   s0   = sum w_a w_b exp(-D^2 / (2 var))
//!   s2   = sum of the same terms times D^2
//!   row  = per-point sums of term * D, the projection part of gradients
//!
//! Exponents are clamped at -745 before exp, the underflow edge for f64.

use crate::parallel::{map_chunks, map_chunks_seq, Kahan, CHUNK_ROWS};

const EXP_CLAMP: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairSums {
    pub s0: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PairGradSums {
    pub s0: f64,
    pub s2: f64,
    /// For each a: sum_b w_a w_b exp(..) (p_a - p_b).
    pub row_a: Vec<f64>,
    /// For each b: sum_a w_a w_b exp(..) (p_a - p_b).
    pub row_b: Vec<f64>,
}

struct CrossChunk {
    s0: f64,
    s2: f64,
    row_a: Vec<f64>,
    row_b: Vec<f64>,
}

#[inline]
fn pair_term(wa: f64, wb: f64, d: f64, inv_two_var: f64) -> f64 {
    let expo = (-d * d * inv_two_var).max(EXP_CLAMP);
    wa * wb * expo.exp()
}

fn cross_chunk(
    range: std::ops::Range<usize>,
    pa: &[f64],
    wa: &[f64],
    pb: &[f64],
    wb: &[f64],
    inv_two_var: f64,
    grad: bool,
) -> CrossChunk {
    let mut s0 = Kahan::default();
    let mut s2 = Kahan::default();
    let mut row_a = if grad { vec![0.0; range.len()] } else { Vec::new() };
    let mut row_b = if grad { vec![0.0; pb.len()] } else { Vec::new() };
    for (local, i) in range.enumerate() {
        let (pi, wi) = (pa[i], wa[i]);
        let mut ri = 0.0;
        for j in 0..pb.len() {
            let d = pi - pb[j];
            let e = pair_term(wi, wb[j], d, inv_two_var);
            let ed = e * d;
            s0.add(e);
            s2.add(ed * d);
            if grad {
                ri += ed;
                row_b[j] += ed;
            }
        }
        if grad {
            row_a[local] = ri;
        }
    }
    CrossChunk {
        s0: s0.value(),
        s2: s2.value(),
        row_a,
        row_b,
    }
}

fn combine_cross(chunks: Vec<CrossChunk>, na: usize, nb: usize, grad: bool) -> PairGradSums {
    let mut s0 = Kahan::default();
    let mut s2 = Kahan::default();
    let mut row_a = if grad { Vec::with_capacity(na) } else { Vec::new() };
    let mut row_b = if grad { vec![0.0; nb] } else { Vec::new() };
    for c in chunks {
        s0.add(c.s0);
        s2.add(c.s2);
        if grad {
            row_a.extend_from_slice(&c.row_a);
            for (acc, x) in row_b.iter_mut().zip(&c.row_b) {
                *acc += x;
            }
        }
    }
    PairGradSums {
        s0: s0.value(),
        s2: s2.value(),
        row_a,
        row_b,
    }
}

pub(crate) fn cross_sums(pa: &[f64], wa: &[f64], pb: &[f64], wb: &[f64], var: f64) -> PairSums {
    let inv = 0.5 / var;
    let chunks = map_chunks(pa.len(), CHUNK_ROWS, |r| {
        cross_chunk(r, pa, wa, pb, wb, inv, false)
    });
    let c = combine_cross(chunks, pa.len(), pb.len(), false);
    PairSums { s0: c.s0, s2: c.s2 }
}

pub(crate) fn cross_grad_sums(
    pa: &[f64],
    wa: &[f64],
    pb: &[f64],
    wb: &[f64],
    var: f64,
) -> PairGradSums {
    let inv = 0.5 / var;
    let chunks = map_chunks(pa.len(), CHUNK_ROWS, |r| {
        cross_chunk(r, pa, wa, pb, wb, inv, true)
    });
    combine_cross(chunks, pa.len(), pb.len(), true)
}

pub(crate) fn cross_grad_sums_seq(
    pa: &[f64],
    wa: &[f64],
    pb: &[f64],
    wb: &[f64],
    var: f64,
) -> PairGradSums {
    let inv = 0.5 / var;
    let chunks = map_chunks_seq(pa.len(), CHUNK_ROWS, |r| {
        cross_chunk(r, pa, wa, pb, wb, inv, true)
    });
    combine_cross(chunks, pa.len(), pb.len(), true)
}

struct SelfChunk {
    s0: f64,
    s2: f64,
    row: Vec<f64>,
}

/// Upper-triangle pass. Off-diagonal pairs are counted twice in s0/s2
/// (the full double sum is symmetric); the diagonal contributes
/// sum w_i^2 to s0 and nothing to s2 or the row terms.
fn self_chunk(
    range: std::ops::Range<usize>,
    p: &[f64],
    w: &[f64],
    inv_two_var: f64,
    grad: bool,
) -> SelfChunk {
    let n = p.len();
    let mut s0 = Kahan::default();
    let mut s2 = Kahan::default();
    let mut row = if grad { vec![0.0; n] } else { Vec::new() };
    for i in range {
        let (pi, wi) = (p[i], w[i]);
        let mut ri = 0.0;
        for j in (i + 1)..n {
            let d = pi - p[j];
            let e = pair_term(wi, w[j], d, inv_two_var);
            let ed = e * d;
            s0.add(2.0 * e);
            s2.add(2.0 * ed * d);
            if grad {
                ri += ed;
                row[j] -= ed;
            }
        }
        if grad {
            row[i] += ri;
        }
    }
    SelfChunk {
        s0: s0.value(),
        s2: s2.value(),
        row,
    }
}

fn combine_self(chunks: Vec<SelfChunk>, w: &[f64], grad: bool) -> PairGradSums {
    let mut s0 = Kahan::default();
    let mut s2 = Kahan::default();
    let mut row = if grad { vec![0.0; w.len()] } else { Vec::new() };
    for c in chunks {
        s0.add(c.s0);
        s2.add(c.s2);
        if grad {
            for (acc, x) in row.iter_mut().zip(&c.row) {
                *acc += x;
            }
        }
    }
    for &wi in w {
        s0.add(wi * wi);
    }
    PairGradSums {
        s0: s0.value(),
        s2: s2.value(),
        row_a: row,
        row_b: Vec::new(),
    }
}

pub(crate) fn self_sums(p: &[f64], w: &[f64], var: f64) -> PairSums {
    let inv = 0.5 / var;
    let chunks = map_chunks(p.len(), CHUNK_ROWS, |r| self_chunk(r, p, w, inv, false));
    let c = combine_self(chunks, w, false);
    PairSums { s0: c.s0, s2: c.s2 }
}

/// `row_a` holds, for each i, sum over j != i of the term times (p_i - p_j).
pub(crate) fn self_grad_sums(p: &[f64], w: &[f64], var: f64) -> PairGradSums {
    let inv = 0.5 / var;
    let chunks = map_chunks(p.len(), CHUNK_ROWS, |r| self_chunk(r, p, w, inv, true));
    combine_self(chunks, w, true)
}

pub(crate) fn self_grad_sums_seq(p: &[f64], w: &[f64], var: f64) -> PairGradSums {
    let inv = 0.5 / var;
    let chunks = map_chunks_seq(p.len(), CHUNK_ROWS, |r| self_chunk(r, p, w, inv, true));
    combine_self(chunks, w, true)
}
