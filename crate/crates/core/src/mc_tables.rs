//! Marching cubes case table, derived from the cube's face sign patterns.
//!
//! Corner `i` sits at `(i & 1, i >> 1 & 1, i >> 2 & 1)`. A case index has bit
//! `i` set when corner `i` is below the iso value. On an ambiguous face the
//! two below-iso corners are cut off separately, so a face shared by two cubes
//! always gets the same segments and the resulting mesh is closed.

use alloc::vec::Vec;

/// Corner pairs joined by the twelve cube edges.
pub(crate) const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Faces as corner cycles.
const FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 3, 7, 6],
    [0, 1, 3, 2],
    [4, 5, 7, 6],
];

fn corner_pos(c: usize) -> [f64; 3] {
    [(c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64]
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(p, q)| (p, q) == (a, b) || (p, q) == (b, a))
        .expect("corners are adjacent")
}

/// Triangles (as edge-index triples) for every case.
pub(crate) struct CaseTable {
    pub cases: Vec<Vec<[u8; 3]>>,
}

impl CaseTable {
    pub fn build() -> Self {
        Self {
            cases: (0..256).map(triangulate_case).collect(),
        }
    }
}

fn triangulate_case(case: usize) -> Vec<[u8; 3]> {
    let inside = |c: usize| case >> c & 1 == 1;

    // undirected segments between crossed edges, face by face
    let mut links: [Vec<usize>; 12] = Default::default();
    for face in &FACES {
        let crossed: Vec<usize> = (0..4)
            .filter(|&k| inside(face[k]) != inside(face[(k + 1) % 4]))
            .collect();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        match crossed.len() {
            0 => {}
            2 => pairs.push((
                edge_between(face[crossed[0]], face[(crossed[0] + 1) % 4]),
                edge_between(face[crossed[1]], face[(crossed[1] + 1) % 4]),
            )),
            4 => {
                // cut off each inside corner with its two face edges
                for k in 0..4 {
                    if inside(face[k]) {
                        let prev = face[(k + 3) % 4];
                        let next = face[(k + 1) % 4];
                        pairs.push((edge_between(prev, face[k]), edge_between(face[k], next)));
                    }
                }
            }
            _ => unreachable!("a face cycle crosses an even number of times"),
        }
        for (a, b) in pairs {
            links[a].push(b);
            links[b].push(a);
        }
    }

    let mut used = [false; 12];
    let mut triangles = Vec::new();
    for start in 0..12 {
        if used[start] || links[start].is_empty() {
            continue;
        }
        // walk the cycle
        let mut lp = Vec::new();
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            used[cur] = true;
            lp.push(cur);
            let next = if links[cur][0] != prev {
                links[cur][0]
            } else {
                links[cur][1]
            };
            prev = cur;
            cur = next;
            if cur == start {
                break;
            }
        }
        orient(&mut lp, &inside);
        for k in 1..lp.len() - 1 {
            triangles.push([lp[0] as u8, lp[k] as u8, lp[k + 1] as u8]);
        }
    }
    triangles
}

/// Reverses `lp` unless its normal points from below-iso to above-iso corners.
fn orient(lp: &mut [usize], inside: &dyn Fn(usize) -> bool) {
    let mid = |e: usize| {
        let (a, b) = EDGES[e];
        let (pa, pb) = (corner_pos(a), corner_pos(b));
        [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0]
    };
    // Newell normal
    let mut n = [0.0; 3];
    for k in 0..lp.len() {
        let p = mid(lp[k]);
        let q = mid(lp[(k + 1) % lp.len()]);
        n[0] += (p[1] - q[1]) * (p[2] + q[2]);
        n[1] += (p[2] - q[2]) * (p[0] + q[0]);
        n[2] += (p[0] - q[0]) * (p[1] + q[1]);
    }
    let mut outward = [0.0; 3];
    for &e in lp.iter() {
        let (a, b) = EDGES[e];
        let (lo, hi) = if inside(a) { (a, b) } else { (b, a) };
        let (pl, ph) = (corner_pos(lo), corner_pos(hi));
        for i in 0..3 {
            outward[i] += ph[i] - pl[i];
        }
    }
    if n[0] * outward[0] + n[1] * outward[1] + n[2] * outward[2] < 0.0 {
        lp.reverse();
    }
}
