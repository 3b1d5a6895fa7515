//! Planar caps for cut solids.
//!
//! Open edges on the cutting plane are chained into closed loops, loops are
//! classified as outer boundaries or holes by signed area, holes are bridged
//! into their enclosing boundary and the result is ear-clipped. Every loop
//! vertex is kept (collinear ones included) so the cap shares each of its
//! edges with exactly one surface triangle.

use std::collections::HashMap;

use super::TaggedMesh;
use crate::mesh::Vec3;

type P2 = [f64; 2];

fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// In-plane basis with `u x v = n`; exact coordinate axes for axis planes.
fn basis(n: &Vec3) -> (Vec3, Vec3) {
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        if n[b] == 0.0 && n[c] == 0.0 && n[a] != 0.0 {
            return if n[a] > 0.0 {
                (axes[b], axes[c])
            } else {
                (axes[c], axes[b])
            };
        }
    }
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = helper.cross(n).normalize();
    let v = n.normalize().cross(&u);
    (u, v)
}

/// Cap triangles (oriented along `normal`) closing the open edges whose
/// endpoints lie on the cutting plane.
pub(super) fn cap_open_edges(mesh: &TaggedMesh, on_plane: &[bool], normal: &Vec3) -> Vec<[u32; 3]> {
    let mut count: HashMap<(u32, u32), i32> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            *count.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut edges = Vec::new();
    for (&(a, b), &c) in &count {
        if !on_plane[a as usize] || !on_plane[b as usize] {
            continue;
        }
        let back = count.get(&(b, a)).copied().unwrap_or(0);
        for _ in 0..(c - back).max(0) {
            edges.push((b, a));
        }
    }
    if edges.is_empty() {
        return Vec::new();
    }
    edges.sort_unstable();

    let (u, v) = basis(normal);
    let pts: HashMap<u32, P2> = edges
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .map(|i| {
            let p = mesh.vertices[i as usize];
            (i, [p.dot(&u), p.dot(&v)])
        })
        .collect();
    let p2 = |i: u32| pts[&i];

    let loops = chain_loops(&edges, &p2);
    let mut out = Vec::new();
    triangulate_loops(loops, &p2, &mut out);
    out
}

/// Follows cap edges into closed loops. At a vertex with several unused
/// outgoing edges the most counter-clockwise turn is taken, which keeps
/// regions touching at a single vertex in separate loops.
fn chain_loops(edges: &[(u32, u32)], p2: &impl Fn(u32) -> P2) -> Vec<Vec<u32>> {
    let mut outgoing: HashMap<u32, Vec<usize>> = HashMap::new();
    for (e, &(a, _)) in edges.iter().enumerate() {
        outgoing.entry(a).or_default().push(e);
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let first = edges[start].0;
        let (mut prev, mut cur) = edges[start];
        let mut lp = vec![first];
        while cur != first {
            lp.push(cur);
            let cands: Vec<usize> = outgoing[&cur].iter().copied().filter(|&e| !used[e]).collect();
            let next = match cands.len() {
                0 => break,
                1 => cands[0],
                _ => {
                    let (pp, pc) = (p2(prev), p2(cur));
                    let din = [pc[0] - pp[0], pc[1] - pp[1]];
                    let turn = |e: usize| {
                        let pn = p2(edges[e].1);
                        let dout = [pn[0] - pc[0], pn[1] - pc[1]];
                        let cross = din[0] * dout[1] - din[1] * dout[0];
                        let dot = din[0] * dout[0] + din[1] * dout[1];
                        cross.atan2(dot)
                    };
                    *cands
                        .iter()
                        .max_by(|&&a, &&b| turn(a).total_cmp(&turn(b)))
                        .unwrap()
                }
            };
            used[next] = true;
            prev = cur;
            cur = edges[next].1;
        }
        loops.push(lp);
    }
    loops
}

fn signed_area(lp: &[u32], p2: &impl Fn(u32) -> P2) -> f64 {
    let n = lp.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p2(lp[i]), p2(lp[(i + 1) % n]));
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn point_in_polygon(p: P2, lp: &[u32], p2: &impl Fn(u32) -> P2) -> bool {
    let n = lp.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (p2(lp[i]), p2(lp[(i + 1) % n]));
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn fan(lp: &[u32], out: &mut Vec<[u32; 3]>) {
    for k in 1..lp.len().saturating_sub(1) {
        push_tri([lp[0], lp[k], lp[k + 1]], out);
    }
}

fn push_tri(t: [u32; 3], out: &mut Vec<[u32; 3]>) {
    // Repeated indices only arise at hole bridges; their edges cancel.
    if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
        out.push(t);
    }
}

fn triangulate_loops(loops: Vec<Vec<u32>>, p2: &impl Fn(u32) -> P2, out: &mut Vec<[u32; 3]>) {
    let mut outers: Vec<(Vec<u32>, f64)> = Vec::new();
    let mut holes: Vec<Vec<u32>> = Vec::new();
    for lp in loops {
        if lp.len() < 3 {
            continue;
        }
        let area = signed_area(&lp, p2);
        let perim: f64 = (0..lp.len())
            .map(|i| {
                let (a, b) = (p2(lp[i]), p2(lp[(i + 1) % lp.len()]));
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .sum();
        if area.abs() <= 1e-12 * perim * perim {
            // A slit; zero-area triangles still pair its edges.
            fan(&lp, out);
        } else if area > 0.0 {
            outers.push((lp, area));
        } else {
            holes.push(lp);
        }
    }

    let mut assigned: Vec<Vec<Vec<u32>>> = vec![Vec::new(); outers.len()];
    for hole in holes {
        let probe = interior_probe(&hole, p2);
        let host = outers
            .iter()
            .enumerate()
            .filter(|(_, (o, _))| point_in_polygon(probe, o, p2))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i);
        match host {
            Some(i) => assigned[i].push(hole),
            None => fan(&hole, out),
        }
    }

    for ((outer, _), holes) in outers.into_iter().zip(assigned) {
        let ring = bridge_holes(outer, holes, p2);
        ear_clip(ring, p2, out);
    }
}

/// A point just left of the hole's longest edge, i.e. inside the material
/// surrounding the hole.
fn interior_probe(hole: &[u32], p2: &impl Fn(u32) -> P2) -> P2 {
    let n = hole.len();
    let (mut best, mut len) = (0, -1.0);
    for i in 0..n {
        let (a, b) = (p2(hole[i]), p2(hole[(i + 1) % n]));
        let l = (b[0] - a[0]).hypot(b[1] - a[1]);
        if l > len {
            best = i;
            len = l;
        }
    }
    let (a, b) = (p2(hole[best]), p2(hole[(best + 1) % n]));
    let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let left = [-(b[1] - a[1]) / len, (b[0] - a[0]) / len];
    let h = 1e-6 * len;
    [m[0] + left[0] * h, m[1] + left[1] * h]
}

fn segments_cross(p1: P2, p2: P2, q1: P2, q2: P2) -> bool {
    if p1 == q1 || p1 == q2 || p2 == q1 || p2 == q2 {
        return false;
    }
    let o1 = orient(p1, p2, q1);
    let o2 = orient(p1, p2, q2);
    let o3 = orient(q1, q2, p1);
    let o4 = orient(q1, q2, p2);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let between = |a: P2, b: P2, c: P2| {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    (o1 == 0.0 && between(p1, p2, q1))
        || (o2 == 0.0 && between(p1, p2, q2))
        || (o3 == 0.0 && between(q1, q2, p1))
        || (o4 == 0.0 && between(q1, q2, p2))
}

/// Whether the diagonal from ring node `m` towards `h` starts inside the polygon.
fn locally_inside(prev: P2, m: P2, next: P2, h: P2) -> bool {
    if orient(prev, m, next) > 0.0 {
        orient(m, next, h) >= 0.0 && orient(m, h, prev) >= 0.0
    } else {
        orient(m, h, prev) > 0.0 || orient(m, next, h) > 0.0
    }
}

/// Splices each hole into the outer ring through a zero-width bridge.
fn bridge_holes(outer: Vec<u32>, mut holes: Vec<Vec<u32>>, p2: &impl Fn(u32) -> P2) -> Vec<u32> {
    let max_u = |h: &Vec<u32>| h.iter().map(|&i| p2(i)[0]).fold(f64::MIN, f64::max);
    holes.sort_by(|a, b| max_u(b).total_cmp(&max_u(a)));
    let mut ring = outer;
    for k in 0..holes.len() {
        let hole = &holes[k];
        let hi = (0..hole.len())
            .max_by(|&a, &b| p2(hole[a])[0].total_cmp(&p2(hole[b])[0]))
            .unwrap();
        let h = p2(hole[hi]);
        let n = ring.len();
        let mut order: Vec<usize> = (0..n).collect();
        let dist = |i: usize| {
            let q = p2(ring[i]);
            (q[0] - h[0]).powi(2) + (q[1] - h[1]).powi(2)
        };
        order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)));
        let edges_of = |lp: &[u32]| -> Vec<(P2, P2)> {
            (0..lp.len()).map(|i| (p2(lp[i]), p2(lp[(i + 1) % lp.len()]))).collect()
        };
        let mut blockers = edges_of(&ring);
        for other in &holes[k..] {
            blockers.extend(edges_of(other));
        }
        let visible = |i: usize| {
            let m = p2(ring[i]);
            if m == h {
                return true;
            }
            let (prev, next) = (p2(ring[(i + n - 1) % n]), p2(ring[(i + 1) % n]));
            locally_inside(prev, m, next, h) && !blockers.iter().any(|&(a, b)| segments_cross(h, m, a, b))
        };
        let mi = order.iter().copied().find(|&i| visible(i)).unwrap_or(order[0]);
        let mut spliced = Vec::with_capacity(n + hole.len() + 2);
        spliced.extend_from_slice(&ring[..=mi]);
        spliced.extend_from_slice(&hole[hi..]);
        spliced.extend_from_slice(&hole[..=hi]);
        spliced.extend_from_slice(&ring[mi..]);
        ring = spliced;
    }
    ring
}

fn ear_clip(ring: Vec<u32>, p2: &impl Fn(u32) -> P2, out: &mut Vec<[u32; 3]>) {
    let n = ring.len();
    if n < 3 {
        return;
    }
    let pos: Vec<P2> = ring.iter().map(|&i| p2(i)).collect();
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in &pos {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let eps = 1e-14 * scale * scale;

    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut alive = vec![true; n];
    let turn = |prev: &[usize], next: &[usize], i: usize| orient(pos[prev[i]], pos[i], pos[next[i]]);
    let mut convex: Vec<f64> = (0..n).map(|i| turn(&prev, &next, i)).collect();

    let is_ear = |i: usize, prev: &[usize], next: &[usize], convex: &[f64], alive: &[bool]| {
        if convex[i] <= eps {
            return false;
        }
        let (a, b, c) = (pos[prev[i]], pos[i], pos[next[i]]);
        let (x0, x1) = (a[0].min(b[0]).min(c[0]), a[0].max(b[0]).max(c[0]));
        let (y0, y1) = (a[1].min(b[1]).min(c[1]), a[1].max(b[1]).max(c[1]));
        // Only reflex or flat nodes can lie inside or on a convex ear.
        !(0..n).any(|j| {
            if !alive[j] || convex[j] > eps || j == i || j == prev[i] || j == next[i] {
                return false;
            }
            let q = pos[j];
            if q[0] < x0 || q[0] > x1 || q[1] < y0 || q[1] > y1 || q == a || q == b || q == c {
                return false;
            }
            orient(a, b, q) >= -eps && orient(b, c, q) >= -eps && orient(c, a, q) >= -eps
        })
    };

    let mut remaining = n;
    let mut cur = 0;
    let mut misses = 0;
    while remaining > 3 {
        let pick = if is_ear(cur, &prev, &next, &convex, &alive) {
            Some(cur)
        } else {
            misses += 1;
            if misses < remaining {
                cur = next[cur];
                continue;
            }
            None
        };
        let i = pick.unwrap_or_else(|| {
            // No clean ear: drop a flat node, else the most convex one.
            let alive_nodes = (0..n).filter(|&j| alive[j]);
            alive_nodes
                .clone()
                .find(|&j| convex[j].abs() <= eps)
                .unwrap_or_else(|| alive_nodes.max_by(|&a, &b| convex[a].total_cmp(&convex[b])).unwrap())
        });
        let (a, c) = (prev[i], next[i]);
        push_tri([ring[a], ring[i], ring[c]], out);
        alive[i] = false;
        next[a] = c;
        prev[c] = a;
        convex[a] = turn(&prev, &next, a);
        convex[c] = turn(&prev, &next, c);
        remaining -= 1;
        misses = 0;
        cur = c;
    }
    let i = (0..n).find(|&j| alive[j]).unwrap();
    push_tri([ring[prev[i]], ring[i], ring[next[i]]], out);
}
