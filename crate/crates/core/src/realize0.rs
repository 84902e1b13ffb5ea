//! Certifiers for the unobstructed cases: no contracted edges, contracted
//! subtrees inside tree regions, and functions without contracted cycles.
//!
//! Contracted trees are mapped by a recursion that mirrors the
//! distance-to-boundary structure of the tree: the shortest boundary stubs
//! ride a fresh target segment with slope 1, a doubly-critical edge folds at
//! its midpoint, and branch points split the target into fresh branches.
//! Tied minimal stubs are processed together and attach at one common target
//! vertex. Everything contracted or newly added is mapped with slope 1,
//! which downstream gluing relies on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::balanced::BalancedFn;
use crate::builder::LiftBuilder;
use crate::error::Error;
use crate::graph::{CurvePoint, EdgeId, Flag, VertexId};
use crate::modify::HModCertificate;
use crate::rat::rat_int;

/// Certifies a balanced function with no contracted edges or rays: the
/// function itself is the finite harmonic lift onto the refined line, and
/// every vertex problem is solved directly.
pub fn certify_no_contracted_edges(
    f: &BalancedFn,
    degree_bound: u64,
) -> Result<HModCertificate, Error> {
    f.validate()?;
    if !f.is_balanced().is_balanced() {
        return Err(Error::Precondition("function not balanced".into()));
    }
    if let Some(flag) = f.curve.all_flags().iter().find(|fl| f.slopes[fl] == 0) {
        return Err(Error::NotApplicable(format!(
            "contracted element present: {}",
            flag.key()
        )));
    }
    if f.curve.vertices.iter().any(|v| f.curve.flags_at(*v).is_empty()) {
        return Err(Error::NotApplicable("isolated vertex".into()));
    }
    let mut b = LiftBuilder::new(&f.curve);
    b.assign_function_lift(f)?;
    b.finalize(f, degree_bound)
}

/// Components of a set of edges after removing a vertex.
fn components_without(
    b: &LiftBuilder,
    edges: &BTreeSet<EdgeId>,
    cut: VertexId,
) -> Vec<BTreeSet<EdgeId>> {
    let mut remaining: BTreeSet<EdgeId> = edges.clone();
    let mut out = Vec::new();
    while let Some(&start) = remaining.iter().next() {
        let mut comp = BTreeSet::from([start]);
        remaining.remove(&start);
        let mut frontier: VecDeque<VertexId> = b.dom.extended.edges[&start]
            .ends
            .iter()
            .copied()
            .filter(|v| *v != cut)
            .collect();
        while let Some(v) = frontier.pop_front() {
            let adjacent: Vec<EdgeId> = remaining
                .iter()
                .copied()
                .filter(|e| b.dom.extended.edges[e].ends.contains(&v))
                .collect();
            for e in adjacent {
                remaining.remove(&e);
                comp.insert(e);
                for w in b.dom.extended.edges[&e].ends {
                    if w != cut && w != v {
                        frontier.push_back(w);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Recursive mapping of a contracted tree whose boundary tips already map to
/// `anchor`. Everything gets slope 1.
pub(crate) fn build_tree_for(
    b: &mut LiftBuilder,
    edges: BTreeSet<EdgeId>,
    tips: BTreeSet<VertexId>,
    anchor: VertexId,
) -> Result<(), Error> {
    if edges.is_empty() {
        // keep the target legal: an added dead end must carry a ray
        let is_leaf = b.tgt.extended.valence(anchor) == 1 && !b.tgt.is_anchored_vertex(anchor);
        if is_leaf {
            b.add_target_ray(anchor);
        }
        return Ok(());
    }
    let valence = |b: &LiftBuilder, v: VertexId, edges: &BTreeSet<EdgeId>| -> usize {
        edges
            .iter()
            .map(|e| b.dom.extended.edges[e].ends.iter().filter(|&&x| x == v).count())
            .sum()
    };
    // split at a boundary vertex with several branches
    if let Some(&x) = tips.iter().find(|t| valence(b, **t, &edges) >= 2) {
        for comp in components_without(b, &edges, x) {
            let verts: BTreeSet<VertexId> = comp
                .iter()
                .flat_map(|e| b.dom.extended.edges[e].ends)
                .collect();
            let sub_tips: BTreeSet<VertexId> = tips
                .iter()
                .copied()
                .filter(|t| verts.contains(t))
                .chain([x])
                .collect();
            build_tree_for(b, comp, sub_tips, anchor)?;
        }
        return Ok(());
    }
    // single edge joining two boundary vertices: fold at the midpoint
    if edges.len() == 1 {
        let e = *edges.iter().next().unwrap();
        let ends = b.dom.extended.edges[&e].ends;
        if tips.contains(&ends[0]) && tips.contains(&ends[1]) {
            let len = b.dom.extended.edges[&e].length.clone();
            let half = len / rat_int(2);
            let m = b.dom_ensure_vertex(&CurvePoint::OnEdge(e, half.clone()))?;
            let (seg, n) = b.add_target_edge(anchor, half);
            b.add_target_ray(n);
            let (low, high) = split_pieces(b, ends, m);
            b.set_edge_walk(Flag::Edge(low, 0), vec![Flag::Edge(seg, 0)], 1)?;
            b.set_edge_walk(Flag::Edge(high, 1), vec![Flag::Edge(seg, 0)], 1)?;
            b.vmap.insert(m, n);
            return Ok(());
        }
    }
    // all boundary vertices are leaves: cut at the minimal stub length,
    // processing ties together
    let mut stubs: BTreeMap<VertexId, EdgeId> = BTreeMap::new();
    for &t in &tips {
        let mut incident = edges
            .iter()
            .copied()
            .filter(|e| b.dom.extended.edges[e].ends.contains(&t));
        let Some(e) = incident.next() else {
            continue; // tip already isolated within this subproblem
        };
        if incident.next().is_some() {
            unreachable!("handled by the split case");
        }
        let far = b.dom.extended.edges[&e]
            .ends
            .iter()
            .copied()
            .find(|v| *v != t)
            .unwrap();
        if tips.contains(&far) && edges.len() > 1 {
            return Err(Error::Precondition(
                "contracted subtree has a doubly-critical edge inside a larger tree".into(),
            ));
        }
        stubs.insert(t, e);
    }
    if stubs.is_empty() {
        return Err(Error::Construction("contracted tree with no boundary".into()));
    }
    let a = stubs
        .iter()
        .map(|(_, e)| b.dom.extended.edges[e].length.clone())
        .min()
        .unwrap();
    let (seg, n) = b.add_target_edge(anchor, a.clone());
    let mut rest: BTreeSet<EdgeId> = edges.clone();
    let mut new_tips: BTreeSet<VertexId> = BTreeSet::new();
    for (t, e) in stubs {
        let len = b.dom.extended.edges[&e].length.clone();
        let ends = b.dom.extended.edges[&e].ends;
        rest.remove(&e);
        if len == a {
            let far = ends.iter().copied().find(|v| *v != t).unwrap();
            let side = if ends[0] == t { 0 } else { 1 };
            b.set_edge_walk(Flag::Edge(e, side), vec![Flag::Edge(seg, 0)], 1)?;
            b.vmap.insert(far, n);
            new_tips.insert(far);
        } else {
            let offset = if ends[0] == t { a.clone() } else { &len - &a };
            let m = b.dom_ensure_vertex(&CurvePoint::OnEdge(e, offset))?;
            let (low, high) = split_pieces(b, ends, m);
            let (stub_piece, stub_side, rest_piece) =
                if ends[0] == t { (low, 0u8, high) } else { (high, 1u8, low) };
            b.set_edge_walk(Flag::Edge(stub_piece, stub_side), vec![Flag::Edge(seg, 0)], 1)?;
            b.vmap.insert(m, n);
            new_tips.insert(m);
            rest.insert(rest_piece);
        }
    }
    build_tree_for(b, rest, new_tips, n)
}

/// The two pieces of a just-subdivided edge `[ends0, m]`, `[m, ends1]`.
fn split_pieces(b: &LiftBuilder, ends: [VertexId; 2], m: VertexId) -> (EdgeId, EdgeId) {
    let low = b
        .dom
        .extended
        .edges
        .iter()
        .find(|(_, e)| e.ends == [ends[0], m])
        .map(|(id, _)| *id)
        .expect("low piece");
    let high = b
        .dom
        .extended
        .edges
        .iter()
        .find(|(_, e)| e.ends == [m, ends[1]])
        .map(|(id, _)| *id)
        .expect("high piece");
    (low, high)
}

/// Lays down the lift over every contracted component of `f` and parks
/// contracted rays; shared with the genus-1 and genus-2 certifiers.
pub(crate) fn lift_contracted_components(
    b: &mut LiftBuilder,
    f: &BalancedFn,
) -> Result<(), Error> {
    for (vs, es) in f.contracted_components() {
        let tips: BTreeSet<VertexId> = vs
            .iter()
            .copied()
            .filter(|v| f.curve.flags_at(*v).iter().any(|fl| f.slopes[fl] != 0))
            .collect();
        if tips.is_empty() {
            return Err(Error::NotApplicable(
                "contracted component with no boundary".into(),
            ));
        }
        let c = f.values[tips.iter().next().unwrap()].clone();
        let anchor = b.ensure_line_vertex(&c)?;
        build_tree_for(b, es, tips, anchor)?;
    }
    // park contracted rays on fresh target rays at their base's image
    for (id, ray) in f.curve.rays.clone() {
        if f.slopes[&Flag::Ray(id)] != 0 {
            continue;
        }
        let base_img = match b.vmap.get(&ray.base) {
            Some(v) => *v,
            None => {
                let c = f.values[&ray.base].clone();
                let tv = b.ensure_line_vertex(&c)?;
                b.vmap.insert(ray.base, tv);
                tv
            }
        };
        let tr = b.add_target_ray(base_img);
        b.set_ray_walk(id, vec![Flag::Ray(tr)], 1)?;
    }
    Ok(())
}

/// Certifies any balanced function without contracted cycles by treating the
/// maximal non-contracted part directly and mapping each contracted tree.
pub fn certify_no_contracted_cycles(
    f: &BalancedFn,
    degree_bound: u64,
) -> Result<HModCertificate, Error> {
    f.validate()?;
    if !f.is_balanced().is_balanced() {
        return Err(Error::Precondition("function not balanced".into()));
    }
    if !f.curve.is_connected() {
        return Err(Error::Precondition("curve not connected".into()));
    }
    if f.is_constant() {
        return Err(Error::NotApplicable(
            "constant function: trivially realizable, no finite lift exists".into(),
        ));
    }
    if f.has_contracted_cycle() {
        return Err(Error::Precondition("contracted cycle present".into()));
    }
    let mut b = LiftBuilder::new(&f.curve);
    b.assign_function_lift(f)?;
    lift_contracted_components(&mut b, f)?;
    b.finalize(f, degree_bound)
}

/// Certifies a function constant on a designated compact subtree whose
/// boundary stars cover the rest of the curve. The output maps the subtree
/// and all added material with slope 1.
pub fn certify_contracted_tree(
    f: &BalancedFn,
    t1_vertices: &BTreeSet<VertexId>,
    t1_edges: &BTreeSet<EdgeId>,
    degree_bound: u64,
) -> Result<HModCertificate, Error> {
    f.validate()?;
    if !f.is_balanced().is_balanced() {
        return Err(Error::Precondition("function not balanced".into()));
    }
    for e in t1_edges {
        if !f.edge_contracted(*e) {
            return Err(Error::Precondition(format!("subtree edge {e} not contracted")));
        }
        for v in f.curve.edges[e].ends {
            if !t1_vertices.contains(&v) {
                return Err(Error::Precondition(format!(
                    "subtree edge {e} leaves the vertex set"
                )));
            }
        }
    }
    if f.curve.first_betti()? != 0 {
        return Err(Error::Precondition("domain is not a tree region".into()));
    }
    if !t1_vertices.is_empty() {
        let mut seen = BTreeSet::from([*t1_vertices.iter().next().unwrap()]);
        let mut queue: VecDeque<VertexId> = seen.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            for e in t1_edges {
                let ends = f.curve.edges[e].ends;
                if ends.contains(&v) {
                    for w in ends {
                        if t1_vertices.contains(&w) && seen.insert(w) {
                            queue.push_back(w);
                        }
                    }
                }
            }
        }
        if seen.len() != t1_vertices.len() {
            return Err(Error::Precondition("subtree not connected".into()));
        }
    }
    let criticals: BTreeSet<VertexId> = t1_vertices
        .iter()
        .copied()
        .filter(|v| f.curve.flags_at(*v).iter().any(|fl| f.slopes[fl] != 0))
        .collect();
    for (id, e) in &f.curve.edges {
        if t1_edges.contains(id) {
            continue;
        }
        if !e.ends.iter().any(|v| criticals.contains(v)) {
            return Err(Error::Precondition(format!(
                "stars do not cover: edge {id} misses every critical point"
            )));
        }
    }
    for (id, r) in &f.curve.rays {
        if !criticals.contains(&r.base) && !t1_vertices.contains(&r.base) {
            return Err(Error::Precondition(format!(
                "stars do not cover: ray {id} based outside the subtree stars"
            )));
        }
    }
    certify_no_contracted_cycles(f, degree_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hurwitz::DEFAULT_DEGREE_BOUND;
    use crate::modify::verify_certificate;
    use crate::rat::rat;

    fn slope_map(entries: Vec<(Flag, i64)>) -> BTreeMap<Flag, i64> {
        entries.into_iter().collect()
    }

    #[test]
    fn trivalent_tree_all_nonzero() {
        let mut c = crate::graph::TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(1));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(u);
        let r3 = c.add_ray(v);
        let r4 = c.add_ray(v);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(2))]),
            slopes: slope_map(vec![
                (Flag::Edge(e, 0), 2),
                (Flag::Edge(e, 1), -2),
                (Flag::Ray(r1), -1),
                (Flag::Ray(r2), -1),
                (Flag::Ray(r3), 1),
                (Flag::Ray(r4), 1),
            ]),
        };
        let cert = certify_no_contracted_edges(&f, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn not_applicable_with_contracted_edge() {
        let mut c = crate::graph::TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(1));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(u);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(0))]),
            slopes: slope_map(vec![
                (Flag::Edge(e, 0), 0),
                (Flag::Edge(e, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
            ]),
        };
        assert!(matches!(
            certify_no_contracted_edges(&f, DEFAULT_DEGREE_BOUND),
            Err(Error::NotApplicable(_))
        ));
        let cert = certify_no_contracted_cycles(&f, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
    }

    /// Single contracted edge joining two critical vertices: the midpoint
    /// fold construction with two added rays at the turning point.
    #[test]
    fn doubly_critical_edge_midpoint_construction() {
        let mut c = crate::graph::TropicalCurve::new();
        let a1 = c.add_vertex();
        let a2 = c.add_vertex();
        let e = c.add_edge(a1, a2, rat_int(2));
        let r1 = c.add_ray(a1);
        let r2 = c.add_ray(a1);
        let r3 = c.add_ray(a2);
        let r4 = c.add_ray(a2);
        let f = BalancedFn {
            curve: c.clone(),
            values: c.vertices.iter().map(|&v| (v, rat_int(0))).collect(),
            slopes: slope_map(vec![
                (Flag::Edge(e, 0), 0),
                (Flag::Edge(e, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
                (Flag::Ray(r3), 2),
                (Flag::Ray(r4), -2),
            ]),
        };
        let t1v = BTreeSet::from([a1, a2]);
        let t1e = BTreeSet::from([e]);
        let cert = certify_contracted_tree(&f, &t1v, &t1e, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
        // slope-1 guarantee over the contracted subtree and added material
        for (id, _) in &cert.domain_mod.extended.edges {
            let over_t1 = match cert.domain_mod.edge_anchor.get(id) {
                Some(a) => matches!(a.host, crate::modify::Host::Edge(h) if h == e),
                None => true,
            };
            if over_t1 {
                if let crate::harmonic::FlagImage::To(_, s) =
                    cert.lift.flag_image(Flag::Edge(*id, 0))
                {
                    assert_eq!(s, 1, "slope-1 guarantee violated on {id}");
                }
            }
        }
    }

    #[test]
    fn leaf_critical_recursion_distinct_lengths() {
        // T1: path a1 - x - a2 with |a1 x| = 1, |x a2| = 3
        let mut c = crate::graph::TropicalCurve::new();
        let a1 = c.add_vertex();
        let x = c.add_vertex();
        let a2 = c.add_vertex();
        let e1 = c.add_edge(a1, x, rat_int(1));
        let e2 = c.add_edge(x, a2, rat_int(3));
        let r1 = c.add_ray(a1);
        let r2 = c.add_ray(a1);
        let r3 = c.add_ray(a2);
        let r4 = c.add_ray(a2);
        let f = BalancedFn {
            curve: c.clone(),
            values: c.vertices.iter().map(|&v| (v, rat_int(0))).collect(),
            slopes: slope_map(vec![
                (Flag::Edge(e1, 0), 0),
                (Flag::Edge(e1, 1), 0),
                (Flag::Edge(e2, 0), 0),
                (Flag::Edge(e2, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
                (Flag::Ray(r3), 1),
                (Flag::Ray(r4), -1),
            ]),
        };
        let cert = certify_contracted_tree(
            &f,
            &BTreeSet::from([a1, x, a2]),
            &BTreeSet::from([e1, e2]),
            DEFAULT_DEGREE_BOUND,
        )
        .unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn tied_minimal_stubs_share_a_target_vertex() {
        // starburst: center x, three critical tips at distances 2, 2, 5
        let mut c = crate::graph::TropicalCurve::new();
        let x = c.add_vertex();
        let mut slopes = Vec::new();
        let mut edges = BTreeSet::new();
        let mut verts = BTreeSet::from([x]);
        for (i, len) in [2i64, 2, 5].into_iter().enumerate() {
            let a = c.add_vertex();
            let e = c.add_edge(x, a, rat_int(len));
            let r1 = c.add_ray(a);
            let r2 = c.add_ray(a);
            slopes.push((Flag::Edge(e, 0), 0));
            slopes.push((Flag::Edge(e, 1), 0));
            slopes.push((Flag::Ray(r1), 1 + i as i64));
            slopes.push((Flag::Ray(r2), -(1 + i as i64)));
            edges.insert(e);
            verts.insert(a);
        }
        let f = BalancedFn {
            curve: c.clone(),
            values: c.vertices.iter().map(|&v| (v, rat_int(0))).collect(),
            slopes: slope_map(slopes),
        };
        let cert = certify_contracted_tree(&f, &verts, &edges, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn subdivision_invariance() {
        let mut c = crate::graph::TropicalCurve::new();
        let a1 = c.add_vertex();
        let a2 = c.add_vertex();
        let e = c.add_edge(a1, a2, rat_int(2));
        let r1 = c.add_ray(a1);
        let r2 = c.add_ray(a1);
        let r3 = c.add_ray(a2);
        let r4 = c.add_ray(a2);
        let f = BalancedFn {
            curve: c.clone(),
            values: c.vertices.iter().map(|&v| (v, rat_int(0))).collect(),
            slopes: slope_map(vec![
                (Flag::Edge(e, 0), 0),
                (Flag::Edge(e, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
                (Flag::Ray(r3), 1),
                (Flag::Ray(r4), -1),
            ]),
        };
        let (f2, _) = f.subdivide(&CurvePoint::OnEdge(e, rat(1, 3))).unwrap();
        let cert = certify_no_contracted_cycles(&f2, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f2, &cert, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn genus_one_with_non_contracted_cycle() {
        let mut c = crate::graph::TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e1 = c.add_edge(u, v, rat_int(1));
        let e2 = c.add_edge(u, v, rat_int(1));
        let w = c.add_vertex();
        let leg = c.add_edge(v, w, rat_int(1));
        let r1 = c.add_ray(u);
        let rv = c.add_ray(v);
        let r2 = c.add_ray(w);
        let r3 = c.add_ray(w);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(1)), (w, rat_int(1))]),
            slopes: slope_map(vec![
                (Flag::Edge(e1, 0), 1),
                (Flag::Edge(e1, 1), -1),
                (Flag::Edge(e2, 0), 1),
                (Flag::Edge(e2, 1), -1),
                (Flag::Edge(leg, 0), 0),
                (Flag::Edge(leg, 1), 0),
                (Flag::Ray(r1), -2),
                (Flag::Ray(rv), 2),
                (Flag::Ray(r2), 1),
                (Flag::Ray(r3), -1),
            ]),
        };
        f.validate().unwrap();
        assert!(f.is_balanced().is_balanced());
        assert!(!f.has_contracted_cycle());
        let cert = certify_no_contracted_cycles(&f, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn contracted_cycle_routes_away() {
        let mut c = crate::graph::TropicalCurve::new();
        let u = c.add_vertex();
        let e = c.add_edge(u, u, rat_int(1));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(u);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0))]),
            slopes: slope_map(vec![
                (Flag::Edge(e, 0), 0),
                (Flag::Edge(e, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
            ]),
        };
        assert!(matches!(
            certify_no_contracted_cycles(&f, DEFAULT_DEGREE_BOUND),
            Err(Error::Precondition(_))
        ));
    }
}
