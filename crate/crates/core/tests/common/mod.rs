//! Fixture corpus transcribed from the figure instances, plus instance
//! transforms shared by the acceptance suite.

use std::collections::BTreeMap;

use hmod_core::balanced::BalancedFn;
use hmod_core::graph::{CurvePoint, EdgeId, Flag, TropicalCurve, VertexId};
use hmod_core::rat::{rat, rat_int, Rat};

pub fn slope_pair(f: &mut BalancedFn, at: VertexId, s: i64) {
    let r1 = f.curve.add_ray(at);
    let r2 = f.curve.add_ray(at);
    f.slopes.insert(Flag::Ray(r1), s);
    f.slopes.insert(Flag::Ray(r2), -s);
}

fn contracted_edge(f: &mut BalancedFn, a: VertexId, b: VertexId, len: Rat) -> EdgeId {
    let e = f.curve.add_edge(a, b, len);
    f.slopes.insert(Flag::Edge(e, 0), 0);
    f.slopes.insert(Flag::Edge(e, 1), 0);
    e
}

fn new_contracted_vertex(f: &mut BalancedFn) -> VertexId {
    let v = f.curve.add_vertex();
    f.values.insert(v, rat_int(0));
    v
}

/// Contracted cycle of two edges (lengths 3 and 5) between two vertices.
pub fn bare_cycle() -> BalancedFn {
    let mut c = TropicalCurve::new();
    let w1 = c.add_vertex();
    let w2 = c.add_vertex();
    c.add_edge(w1, w2, rat_int(3));
    c.add_edge(w1, w2, rat_int(5));
    let mut f = BalancedFn {
        curve: c,
        values: BTreeMap::new(),
        slopes: BTreeMap::new(),
    };
    f.values.insert(w1, rat_int(0));
    f.values.insert(w2, rat_int(0));
    for e in [EdgeId(0), EdgeId(1)] {
        f.slopes.insert(Flag::Edge(e, 0), 0);
        f.slopes.insert(Flag::Edge(e, 1), 0);
    }
    f
}

/// One simple critical path of length 2 (not realizable).
pub fn g1_one_leg() -> BalancedFn {
    let mut f = bare_cycle();
    let a = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, VertexId(0), a, rat_int(2));
    slope_pair(&mut f, a, 2);
    f.validate().unwrap();
    f
}

/// One critical path whose critical point carries three non-constant flags.
pub fn g1_three_flags() -> BalancedFn {
    let mut f = bare_cycle();
    let b = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, VertexId(0), b, rat_int(2));
    let r1 = f.curve.add_ray(b);
    let r2 = f.curve.add_ray(b);
    let r3 = f.curve.add_ray(b);
    f.slopes.insert(Flag::Ray(r1), 1);
    f.slopes.insert(Flag::Ray(r2), 1);
    f.slopes.insert(Flag::Ray(r3), -2);
    f.validate().unwrap();
    f
}

/// Two simple critical paths of equal length on distinct cycle points.
pub fn g1_two_legs_equal() -> BalancedFn {
    let mut f = bare_cycle();
    for (host, s) in [(VertexId(0), 1i64), (VertexId(1), 2)] {
        let a = new_contracted_vertex(&mut f);
        contracted_edge(&mut f, host, a, rat_int(2));
        slope_pair(&mut f, a, s);
    }
    f.validate().unwrap();
    f
}

/// Two simple critical paths of different lengths (not realizable).
pub fn g1_two_legs_unequal() -> BalancedFn {
    let mut f = bare_cycle();
    for (host, len, s) in [(VertexId(0), 2i64, 1i64), (VertexId(1), 3, 1)] {
        let a = new_contracted_vertex(&mut f);
        contracted_edge(&mut f, host, a, rat_int(len));
        slope_pair(&mut f, a, s);
    }
    f.validate().unwrap();
    f
}

/// Two critical paths sharing a stem, with equal arm lengths.
pub fn g1_y_equal_arms() -> BalancedFn {
    let mut f = bare_cycle();
    let j = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, VertexId(0), j, rat_int(1));
    for s in [1i64, 3] {
        let a = new_contracted_vertex(&mut f);
        contracted_edge(&mut f, j, a, rat_int(2));
        slope_pair(&mut f, a, s);
    }
    f.validate().unwrap();
    f
}

/// Theta core (arc lengths 2, 3, 4) with equal legs of length 1, one in the
/// interior of each arc.
pub fn g2_theta_three_legs() -> BalancedFn {
    theta_with_legs(
        [2, 3, 4],
        &[
            (0, rat_int(1), rat_int(1), 1),
            (1, rat_int(1), rat_int(1), 2),
            (2, rat_int(2), rat_int(1), 3),
        ],
    )
}

/// Theta core (arc lengths 4, 3, 5) with equal legs at conjugate positions
/// 1 and 3 on the first arc.
pub fn g2_theta_conjugate() -> BalancedFn {
    theta_with_legs(
        [4, 3, 5],
        &[(0, rat_int(1), rat_int(2), 1), (0, rat_int(3), rat_int(2), 2)],
    )
}

pub fn theta_with_legs(arc_lens: [i64; 3], legs: &[(usize, Rat, Rat, i64)]) -> BalancedFn {
    let mut c = TropicalCurve::new();
    let u = c.add_vertex();
    let v = c.add_vertex();
    for len in arc_lens {
        c.add_edge(u, v, rat_int(len));
    }
    let mut f = BalancedFn {
        curve: c,
        values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(0))]),
        slopes: (0..3)
            .flat_map(|i| {
                [
                    (Flag::Edge(EdgeId(i), 0), 0),
                    (Flag::Edge(EdgeId(i), 1), 0),
                ]
            })
            .collect(),
    };
    // cut points measured from u along each arc; arcs start as single edges,
    // so track the piece chains as we subdivide
    let mut arc_pieces: Vec<Vec<(EdgeId, Rat, bool)>> = (0..3)
        .map(|i| vec![(EdgeId(i as u32), rat_int(arc_lens[i]), false)])
        .collect();
    for (arc, offset, leg_len, s) in legs.iter().cloned() {
        // locate the piece containing `offset` from u
        let mut d = rat_int(0);
        let mut at: Option<(EdgeId, Rat, usize)> = None;
        for (k, (e, len, _)) in arc_pieces[arc].iter().enumerate() {
            if &d + len > offset && offset > d {
                at = Some((*e, &offset - &d, k));
                break;
            }
            if &d + len == offset {
                at = Some((*e, len.clone(), k));
                break;
            }
            d += len.clone();
        }
        let (e, local, k) = at.expect("offset on the arc");
        let piece_len = arc_pieces[arc][k].1.clone();
        let b = if local == piece_len {
            // already a vertex
            let ends = f.curve.edges[&e].ends;
            ends[1]
        } else {
            let (f2, sub) = f.subdivide(&CurvePoint::OnEdge(e, local.clone())).unwrap();
            f = f2;
            // replace the piece by its two halves in u-to-v order
            let low_len = local.clone();
            let high_len = &piece_len - &local;
            let hi = match sub.high {
                hmod_core::graph::HighPiece::Edge(h) => h,
                _ => unreachable!(),
            };
            arc_pieces[arc].splice(k..=k, [(sub.low_edge, low_len, false), (hi, high_len, false)]);
            sub.new_vertex
        };
        let a = new_contracted_vertex(&mut f);
        contracted_edge(&mut f, b, a, leg_len);
        slope_pair(&mut f, a, s);
    }
    f.validate().unwrap();
    f
}

/// Dumbbell (loops 4 and 6, bridge 5) with a leg on each loop and one on the
/// bridge, under the two distance equalities.
pub fn g2_dumbbell() -> BalancedFn {
    let mut c = TropicalCurve::new();
    let u = c.add_vertex();
    let v = c.add_vertex();
    let lu = c.add_edge(u, u, rat_int(4));
    let lv = c.add_edge(v, v, rat_int(6));
    let bridge = c.add_edge(u, v, rat_int(5));
    let mut f = BalancedFn {
        curve: c,
        values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(0))]),
        slopes: [lu, lv, bridge]
            .into_iter()
            .flat_map(|e| [(Flag::Edge(e, 0), 0), (Flag::Edge(e, 1), 0)])
            .collect(),
    };
    let (f2, sub) = f.subdivide(&CurvePoint::OnEdge(bridge, rat_int(2))).unwrap();
    f = f2;
    let x = sub.new_vertex;
    let a3 = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, x, a3, rat_int(1));
    slope_pair(&mut f, a3, 1);
    let (f2, sub) = f.subdivide(&CurvePoint::OnEdge(lu, rat_int(1))).unwrap();
    f = f2;
    let b1 = sub.new_vertex;
    let a1 = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, b1, a1, rat_int(3));
    slope_pair(&mut f, a1, 2);
    let (f2, sub) = f.subdivide(&CurvePoint::OnEdge(lv, rat_int(2))).unwrap();
    f = f2;
    let b2 = sub.new_vertex;
    let a2 = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, b2, a2, rat_int(4));
    slope_pair(&mut f, a2, 1);
    f.validate().unwrap();
    f
}

/// Theta three-legs frame plus a hanging tree on the core, attached by a
/// contracted connecting edge of the given length.
pub fn g2_frame_with_tree(connecting_len: Rat) -> BalancedFn {
    let mut f = theta_with_legs(
        [2, 3, 4],
        &[
            (0, rat_int(1), rat_int(2), 1),
            (1, rat_int(1), rat_int(2), 1),
            (2, rat_int(2), rat_int(2), 1),
        ],
    );
    // attach on the u side of the first arc at distance 1/2 from u
    let u_side_piece = *f
        .curve
        .edges
        .iter()
        .find(|(_, e)| e.ends.contains(&VertexId(0)) && e.length == rat_int(1))
        .map(|(id, _)| id)
        .unwrap();
    let (f2, sub) = f
        .subdivide(&CurvePoint::OnEdge(u_side_piece, rat(1, 2)))
        .unwrap();
    f = f2;
    let xi = sub.new_vertex;
    let t = new_contracted_vertex(&mut f);
    contracted_edge(&mut f, xi, t, connecting_len);
    slope_pair(&mut f, t, 1);
    f.validate().unwrap();
    f
}

pub fn fixtures() -> Vec<(&'static str, BalancedFn, bool)> {
    vec![
        ("g1_one_leg", g1_one_leg(), false),
        ("g1_three_flags", g1_three_flags(), true),
        ("g1_two_legs_equal", g1_two_legs_equal(), true),
        ("g1_two_legs_unequal", g1_two_legs_unequal(), false),
        ("g1_y_equal_arms", g1_y_equal_arms(), true),
        ("g2_theta_three_legs", g2_theta_three_legs(), true),
        ("g2_theta_conjugate", g2_theta_conjugate(), true),
        ("g2_dumbbell", g2_dumbbell(), true),
    ]
}

// ---- transforms for the invariance suite ----------------------------------

/// Subdivides one edge at a third of its length.
pub fn subdivide_one(f: &BalancedFn, e: EdgeId) -> BalancedFn {
    let len = f.curve.edges[&e].length.clone();
    let (g, _) = f
        .subdivide(&CurvePoint::OnEdge(e, len / rat_int(3)))
        .unwrap();
    g
}

/// Relabels vertices by a fixed permutation-like shift, rebuilding all maps.
pub fn relabel(f: &BalancedFn) -> BalancedFn {
    let ids: Vec<VertexId> = f.curve.vertices.iter().copied().collect();
    let n = ids.len();
    let newid = |v: VertexId| -> VertexId {
        let pos = ids.iter().position(|x| *x == v).unwrap();
        VertexId(ids[(pos + n / 2 + 1) % n].0)
    };
    let mut c = TropicalCurve::new();
    c.vertices = f.curve.vertices.clone();
    for (id, e) in &f.curve.edges {
        c.edges.insert(
            *id,
            hmod_core::graph::Edge {
                ends: [newid(e.ends[0]), newid(e.ends[1])],
                length: e.length.clone(),
            },
        );
    }
    for (id, r) in &f.curve.rays {
        c.rays.insert(*id, hmod_core::graph::Ray { base: newid(r.base) });
    }
    BalancedFn {
        curve: c,
        values: f.values.iter().map(|(v, x)| (newid(*v), x.clone())).collect(),
        slopes: f.slopes.clone(),
    }
}
