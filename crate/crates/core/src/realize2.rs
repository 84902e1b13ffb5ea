//! Genus-2 analysis for functions contracting the core: classification of
//! the core, conjugate and Weierstrass point geometry, hypothesis checkers,
//! the explicit base certifiers, and the long-tree appender for frames.
//!
//! Every base construction rides one spine over the contracted value: legs
//! climb with slope 1, a Y-stem climbs with slope 2, the core splits at the
//! attachment points into trees or arcs that continue upward or fold over
//! fresh branches, and the builder's completion pass finishes the picture.
//! Hanging trees attach through long contracted connecting edges: each tree
//! rides the image route of its attachment point and folds over fresh
//! material, which is possible exactly when the connecting edge is longer
//! than the route. That route length is the tree's reported threshold.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::balanced::BalancedFn;
use crate::builder::LiftBuilder;
use crate::combine::SubgraphSpec;
use crate::error::Error;
use crate::graph::{CurvePoint, EdgeId, Flag, Subgraph, TropicalCurve, VertexId};
use crate::modify::{verify_certificate, HModCertificate};
use crate::rat::{rat_int, Rat};
use crate::realize1::{
    assign_profile, park_contracted_rays, park_twigs, target_route, Chain, Profile, ProfilePiece,
};
use num_traits::Zero;

/// One arc of a theta core: the edges from `u` to `v` in order.
#[derive(Debug, Clone)]
pub struct ThetaArc {
    pub edges: Vec<EdgeId>,
    pub length: Rat,
}

#[derive(Debug, Clone)]
pub struct ThetaGeometry {
    pub u: VertexId,
    pub v: VertexId,
    pub arcs: [ThetaArc; 3],
    pub core: Subgraph,
}

#[derive(Debug, Clone)]
pub struct DumbbellGeometry {
    pub u: VertexId,
    pub v: VertexId,
    /// Loop at `u`, loop at `v` (edges in traversal order), and the bridge
    /// from `u` to `v`.
    pub loop_u: Vec<EdgeId>,
    pub loop_v: Vec<EdgeId>,
    pub bridge: Vec<EdgeId>,
    pub core: Subgraph,
}

#[derive(Debug, Clone)]
pub enum Genus2Class {
    Theta(ThetaGeometry),
    Dumbbell(DumbbellGeometry),
}

/// Classifies a genus-2 curve by the homeomorphism type of its core.
pub fn classify_genus2(curve: &TropicalCurve) -> Result<Genus2Class, Error> {
    if curve.first_betti()? != 2 {
        return Err(Error::Precondition("not genus 2".into()));
    }
    let core = curve.core()?;
    let branch: Vec<VertexId> = core
        .vertices
        .iter()
        .copied()
        .filter(|v| {
            let deg: usize = core
                .edges
                .iter()
                .map(|e| curve.edges[e].ends.iter().filter(|x| **x == *v).count())
                .sum();
            deg >= 3
        })
        .collect();
    if branch.len() != 2 {
        return Err(Error::Precondition(
            "core does not stabilize to a theta or dumbbell graph".into(),
        ));
    }
    let (u, v) = (branch[0], branch[1]);
    // walk the arcs from u
    let mut remaining: BTreeSet<EdgeId> = core.edges.clone();
    let mut arcs_uv: Vec<(Vec<EdgeId>, Rat, VertexId)> = Vec::new();
    for start_vertex in [u, v] {
        loop {
            let Some(first) = remaining
                .iter()
                .copied()
                .find(|e| curve.edges[e].ends.contains(&start_vertex))
            else {
                break;
            };
            let mut edges = vec![first];
            remaining.remove(&first);
            let ends = curve.edges[&first].ends;
            let mut cur = if ends[0] == start_vertex { ends[1] } else { ends[0] };
            while cur != u && cur != v {
                let next = remaining
                    .iter()
                    .copied()
                    .find(|e| curve.edges[e].ends.contains(&cur))
                    .ok_or_else(|| Error::Precondition("core walk dead-ends".into()))?;
                remaining.remove(&next);
                let nends = curve.edges[&next].ends;
                cur = if nends[0] == cur { nends[1] } else { nends[0] };
                edges.push(next);
            }
            let length: Rat = edges.iter().map(|e| curve.edges[e].length.clone()).sum();
            arcs_uv.push((edges, length, cur));
        }
    }
    // adjust orientation bookkeeping: arcs recorded from u first, then from v
    let from_u: Vec<&(Vec<EdgeId>, Rat, VertexId)> =
        arcs_uv.iter().filter(|(e, _, _)| {
            let first = &curve.edges[&e[0]];
            first.ends.contains(&u)
        }).collect();
    let crossing: Vec<&(Vec<EdgeId>, Rat, VertexId)> =
        arcs_uv.iter().filter(|(_, _, endv)| *endv != u && *endv == v || *endv == u && false).collect();
    let _ = (from_u, crossing);
    let uv_arcs: Vec<(Vec<EdgeId>, Rat)> = arcs_uv
        .iter()
        .filter(|(e, _, endv)| {
            let first_at_u = curve.edges[&e[0]].ends.contains(&u);
            first_at_u && *endv == v
        })
        .map(|(e, l, _)| (e.clone(), l.clone()))
        .collect();
    let loops_u: Vec<Vec<EdgeId>> = arcs_uv
        .iter()
        .filter(|(e, _, endv)| curve.edges[&e[0]].ends.contains(&u) && *endv == u)
        .map(|(e, _, _)| e.clone())
        .collect();
    let loops_v: Vec<Vec<EdgeId>> = arcs_uv
        .iter()
        .filter(|(e, _, endv)| {
            let first_at_v = curve.edges[&e[0]].ends.contains(&v)
                && !curve.edges[&e[0]].ends.contains(&u);
            first_at_v && *endv == v
        })
        .map(|(e, _, _)| e.clone())
        .collect();
    if uv_arcs.len() == 3 && loops_u.is_empty() && loops_v.is_empty() {
        let mut arcs = uv_arcs;
        arcs.sort_by_key(|(e, _)| e[0]);
        let [a, b, c]: [(Vec<EdgeId>, Rat); 3] =
            arcs.try_into().map_err(|_| Error::Precondition("not three arcs".into()))?;
        Ok(Genus2Class::Theta(ThetaGeometry {
            u,
            v,
            arcs: [
                ThetaArc { edges: a.0, length: a.1 },
                ThetaArc { edges: b.0, length: b.1 },
                ThetaArc { edges: c.0, length: c.1 },
            ],
            core,
        }))
    } else if uv_arcs.len() == 1 && loops_u.len() == 1 && loops_v.len() == 1 {
        Ok(Genus2Class::Dumbbell(DumbbellGeometry {
            u,
            v,
            loop_u: loops_u.into_iter().next().unwrap(),
            loop_v: loops_v.into_iter().next().unwrap(),
            bridge: uv_arcs.into_iter().next().unwrap().0,
            core,
        }))
    } else {
        Err(Error::Precondition(
            "core does not stabilize to a theta or dumbbell graph".into(),
        ))
    }
}

impl ThetaGeometry {
    /// Position of a core vertex: the arc containing it and its distance
    /// from `u` along that arc. Branch vertices report arc 0 with offset 0
    /// (for `u`) or the full length (for `v`).
    pub fn position(&self, curve: &TropicalCurve, p: VertexId) -> Option<(usize, Rat)> {
        if p == self.u {
            return Some((0, Rat::zero()));
        }
        if p == self.v {
            return Some((0, self.arcs[0].length.clone()));
        }
        for (i, arc) in self.arcs.iter().enumerate() {
            let mut d = Rat::zero();
            let mut cur = self.u;
            for e in &arc.edges {
                let ends = curve.edges[e].ends;
                let far = if ends[0] == cur { ends[1] } else { ends[0] };
                d += curve.edges[e].length.clone();
                if far == p {
                    return Some((i, d));
                }
                cur = far;
            }
        }
        None
    }

    /// The vertices of one arc from `u` to `v`, inclusive.
    fn arc_vertices(&self, curve: &TropicalCurve, i: usize) -> Vec<VertexId> {
        let mut out = vec![self.u];
        let mut cur = self.u;
        for e in &self.arcs[i].edges {
            let ends = curve.edges[e].ends;
            let far = if ends[0] == cur { ends[1] } else { ends[0] };
            out.push(far);
            cur = far;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Conjugate,
    WeierstrassPairCoincident,
    Neither,
}

/// Classifies a pair of core points under the hyperelliptic involution of
/// the theta: conjugate when they sit on one arc at offsets `a` and
/// `len - a`, coincident Weierstrass when both are the midpoint.
pub fn conjugate_or_weierstrass(
    geom: &ThetaGeometry,
    curve: &TropicalCurve,
    p: VertexId,
    q: VertexId,
) -> PairClass {
    let (Some((ai, a)), Some((bi, b))) = (geom.position(curve, p), geom.position(curve, q)) else {
        return PairClass::Neither;
    };
    if p == q {
        let len = geom.arcs[ai].length.clone();
        if a.clone() * rat_int(2) == len {
            return PairClass::WeierstrassPairCoincident;
        }
        return PairClass::Neither;
    }
    if ai != bi {
        // branch vertices belong to all arcs
        if (p == geom.u && q == geom.v) || (p == geom.v && q == geom.u) {
            return PairClass::Conjugate;
        }
        return PairClass::Neither;
    }
    let len = geom.arcs[ai].length.clone();
    if a == &len - &b {
        PairClass::Conjugate
    } else {
        PairClass::Neither
    }
}

// ---- critical structure over a contracted core ----------------------------

#[derive(Debug, Clone)]
pub struct CoreCritical {
    pub vertex: VertexId,
    pub flag_number: usize,
    pub path_vertices: Vec<VertexId>,
    pub path_edges: Vec<EdgeId>,
    pub length: Rat,
    /// Where the path meets the core.
    pub location: VertexId,
}

#[derive(Debug, Clone)]
pub struct CoreStructure {
    pub contracted_value: Rat,
    pub criticals: Vec<CoreCritical>,
    pub minimal_length: Rat,
}

/// Critical paths of a function contracting the genus-2 core with an open
/// neighborhood.
pub fn core_structure(f: &BalancedFn, core: &Subgraph) -> Result<CoreStructure, Error> {
    f.validate()?;
    if !f.is_balanced().is_balanced() {
        return Err(Error::Precondition("function not balanced".into()));
    }
    for e in &core.edges {
        if !f.edge_contracted(*e) {
            return Err(Error::NotApplicable("core not contracted".into()));
        }
    }
    for v in &core.vertices {
        for fl in f.curve.flags_at(*v) {
            if f.slopes[&fl] != 0 {
                return Err(Error::NotApplicable(
                    "core contracted but a non-contracted element meets it".into(),
                ));
            }
        }
    }
    let comp = f
        .contracted_components()
        .into_iter()
        .find(|(vs, _)| core.vertices.iter().all(|v| vs.contains(v)))
        .ok_or_else(|| Error::NotApplicable("core not contracted".into()))?;
    let (comp_vs, comp_es) = comp;
    let contracted_value = f.values[comp_vs.iter().next().unwrap()].clone();
    let usable: BTreeSet<EdgeId> = comp_es
        .iter()
        .copied()
        .filter(|e| !core.edges.contains(e))
        .collect();
    let mut criticals = Vec::new();
    for &v in &comp_vs {
        let n = f.curve.flags_at(v).iter().filter(|fl| f.slopes[fl] != 0).count();
        if n == 0 {
            continue;
        }
        // BFS toward the core over contracted non-core edges
        let (pv, pe) = bfs_to(f, &usable, &core.vertices, v)?;
        let length: Rat = pe.iter().map(|e| f.curve.edges[e].length.clone()).sum();
        let location = *pv.last().unwrap();
        criticals.push(CoreCritical {
            vertex: v,
            flag_number: n,
            path_vertices: pv,
            path_edges: pe,
            length,
            location,
        });
    }
    if criticals.is_empty() {
        return Err(Error::NotApplicable("no critical points".into()));
    }
    criticals.sort_by(|a, b| a.vertex.cmp(&b.vertex));
    let minimal_length = criticals.iter().map(|c| c.length.clone()).min().unwrap();
    Ok(CoreStructure { contracted_value, criticals, minimal_length })
}

fn bfs_to(
    f: &BalancedFn,
    usable: &BTreeSet<EdgeId>,
    targets: &BTreeSet<VertexId>,
    from: VertexId,
) -> Result<(Vec<VertexId>, Vec<EdgeId>), Error> {
    if targets.contains(&from) {
        return Ok((vec![from], vec![]));
    }
    let mut parent: BTreeMap<VertexId, (VertexId, EdgeId)> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    let mut reached = None;
    'outer: while let Some(v) = queue.pop_front() {
        for e in usable {
            let ends = f.curve.edges[e].ends;
            if !ends.contains(&v) {
                continue;
            }
            let w = if ends[0] == v { ends[1] } else { ends[0] };
            if seen.insert(w) {
                parent.insert(w, (v, *e));
                if targets.contains(&w) {
                    reached = Some(w);
                    break 'outer;
                }
                queue.push_back(w);
            }
        }
    }
    let Some(end) = reached else {
        return Err(Error::NotApplicable(format!(
            "critical point {from} not connected to the core in the contracted part"
        )));
    };
    let mut pv = vec![end];
    let mut pe = vec![];
    let mut cur = end;
    while cur != from {
        let (prev, e) = parent[&cur];
        pe.push(e);
        pv.push(prev);
        cur = prev;
    }
    pv.reverse();
    pe.reverse();
    Ok((pv, pe))
}

// ---- hypothesis checkers ---------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HypothesisVerdict {
    HypothesesMet,
    PartIFails,
    LengthsBelowThreshold,
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub verdict: HypothesisVerdict,
    pub detail: String,
    /// Connecting edges below their bound: (edge, required bound, actual).
    pub below: Vec<(EdgeId, Rat, Rat)>,
}

/// Clause (i) of the minimal-legs criterion: one minimal critical path per
/// arc, located in the arc's interior; clause (ii) is the computed
/// connecting-edge threshold of the long-tree appender.
pub fn check_theorem_a(f: &BalancedFn, degree_bound: u64) -> Result<HypothesisReport, Error> {
    let Genus2Class::Theta(geom) = classify_genus2(&f.curve)? else {
        return Err(Error::Precondition("not a theta-type curve".into()));
    };
    let s = core_structure(f, &geom.core)?;
    let minimal: Vec<&CoreCritical> = s
        .criticals
        .iter()
        .filter(|c| c.length == s.minimal_length)
        .collect();
    let mut per_arc: BTreeMap<usize, usize> = BTreeMap::new();
    let mut interior = true;
    for c in &minimal {
        if c.location == geom.u || c.location == geom.v {
            interior = false;
            continue;
        }
        if let Some((arc, _)) = geom.position(&f.curve, c.location) {
            *per_arc.entry(arc).or_insert(0) += 1;
        }
    }
    let covers_all = (0..3).all(|i| per_arc.get(&i).copied().unwrap_or(0) >= 1);
    if !covers_all || !interior || minimal.len() != 3 {
        return Ok(HypothesisReport {
            verdict: HypothesisVerdict::PartIFails,
            detail: format!(
                "{} minimal paths, arcs covered: {:?}",
                minimal.len(),
                per_arc.keys().collect::<Vec<_>>()
            ),
            below: vec![],
        });
    }
    // clause (ii): build the frame and test the thresholds
    let minimal_vertices: Vec<VertexId> = minimal.iter().map(|c| c.vertex).collect();
    let frame = build_frame(f, &geom.core, &s, &minimal_vertices, degree_bound)?;
    match append_long_trees(f, &frame, degree_bound)? {
        AppendOutcome::Certificate(_) => Ok(HypothesisReport {
            verdict: HypothesisVerdict::HypothesesMet,
            detail: "three equal minimal legs, one per arc; all connecting edges exceed their thresholds".into(),
            below: vec![],
        }),
        AppendOutcome::ThresholdFail(below) => Ok(HypothesisReport {
            verdict: HypothesisVerdict::LengthsBelowThreshold,
            detail: "some connecting edge is at or below its computed threshold".into(),
            below,
        }),
    }
}

/// Clause (i) with the conjugate-pair condition instead.
pub fn check_theorem_b(f: &BalancedFn, degree_bound: u64) -> Result<HypothesisReport, Error> {
    let Genus2Class::Theta(geom) = classify_genus2(&f.curve)? else {
        return Err(Error::Precondition("not a theta-type curve".into()));
    };
    let s = core_structure(f, &geom.core)?;
    let minimal: Vec<&CoreCritical> = s
        .criticals
        .iter()
        .filter(|c| c.length == s.minimal_length)
        .collect();
    let pair_ok = minimal.len() == 2
        && conjugate_or_weierstrass(&geom, &f.curve, minimal[0].location, minimal[1].location)
            == PairClass::Conjugate
        && minimal
            .iter()
            .all(|c| c.location != geom.u && c.location != geom.v);
    if !pair_ok {
        return Ok(HypothesisReport {
            verdict: HypothesisVerdict::PartIFails,
            detail: format!("{} minimal paths; locations not a conjugate pair", minimal.len()),
            below: vec![],
        });
    }
    let minimal_vertices: Vec<VertexId> = minimal.iter().map(|c| c.vertex).collect();
    let frame = build_frame(f, &geom.core, &s, &minimal_vertices, degree_bound)?;
    match append_long_trees(f, &frame, degree_bound)? {
        AppendOutcome::Certificate(_) => Ok(HypothesisReport {
            verdict: HypothesisVerdict::HypothesesMet,
            detail: "two equal minimal legs at conjugate locations; all connecting edges exceed their thresholds".into(),
            below: vec![],
        }),
        AppendOutcome::ThresholdFail(below) => Ok(HypothesisReport {
            verdict: HypothesisVerdict::LengthsBelowThreshold,
            detail: "some connecting edge is at or below its computed threshold".into(),
            below,
        }),
    }
}

// ---- base certifiers -------------------------------------------------------

struct G2State {
    b: LiftBuilder,
    chains: Vec<Chain>,
    spine: usize,
}

fn g2_start(f: &BalancedFn, value: &Rat) -> Result<G2State, Error> {
    let mut b = LiftBuilder::new(&f.curve);
    b.assign_function_lift(f)?;
    let anchor = b.ensure_line_vertex(value)?;
    let spine = Chain::new(&mut b, anchor);
    Ok(G2State { b, chains: vec![spine], spine: 0 })
}

fn ride(chain: usize, from_h: Rat, len: Rat) -> Profile {
    Profile {
        pieces: vec![ProfilePiece { from_d: Rat::zero(), to_d: len, chain, from_h, slope: 1 }],
    }
}

fn fold(chain: usize, from_h: Rat, len: Rat) -> Profile {
    let half = &len / rat_int(2);
    Profile {
        pieces: vec![
            ProfilePiece {
                from_d: Rat::zero(),
                to_d: half.clone(),
                chain,
                from_h: from_h.clone(),
                slope: 1,
            },
            ProfilePiece {
                from_d: half.clone(),
                to_d: len,
                chain,
                from_h: from_h + half,
                slope: -1,
            },
        ],
    }
}

fn g2_finish(
    mut st: G2State,
    f: &BalancedFn,
    degree_bound: u64,
) -> Result<HModCertificate, Error> {
    park_twigs(&mut st.b)?;
    park_contracted_rays(&mut st.b, f)?;
    // other contracted components away from the core
    for (vs, es) in f.contracted_components() {
        let assigned = es.iter().all(|e| {
            // edges of the core component got walks already; others did not
            st.b.edge_walks.keys().any(|k| *k == *e) || !st.b.dom.extended.edges.contains_key(e)
        });
        if assigned {
            continue;
        }
        let tips: BTreeSet<VertexId> = vs
            .iter()
            .copied()
            .filter(|v| f.curve.flags_at(*v).iter().any(|fl| f.slopes[fl] != 0))
            .collect();
        if tips.is_empty() {
            return Err(Error::NotApplicable("contracted component with no boundary".into()));
        }
        let c = f.values[tips.iter().next().unwrap()].clone();
        let anchor = st.b.ensure_line_vertex(&c)?;
        crate::realize0::build_tree_for(&mut st.b, es, tips, anchor)?;
    }
    st.b.finalize(f, degree_bound)
}

/// Path of arc edges between two of its vertices, in order, with vertices.
fn arc_segment(
    f: &BalancedFn,
    geom: &ThetaGeometry,
    arc: usize,
    from: VertexId,
    to: VertexId,
) -> (Vec<VertexId>, Vec<EdgeId>) {
    let verts = geom.arc_vertices(&f.curve, arc);
    let i = verts.iter().position(|v| *v == from).expect("from on arc");
    let j = verts.iter().position(|v| *v == to).expect("to on arc");
    let (lo, hi) = (i.min(j), i.max(j));
    let seg_verts: Vec<VertexId> = verts[lo..=hi].to_vec();
    let seg_edges: Vec<EdgeId> = geom.arcs[arc].edges[lo..hi].to_vec();
    if i <= j {
        (seg_verts, seg_edges)
    } else {
        (
            seg_verts.into_iter().rev().collect(),
            seg_edges.into_iter().rev().collect(),
        )
    }
}

/// Three equal-length legs, one located in the interior of each arc: legs
/// climb to a common point, and the two components of the split core are
/// mapped by the contracted-tree recursion above it.
pub fn certify_theta_three_legs(f: &BalancedFn, degree_bound: u64) -> Result<HModCertificate, Error> {
    let Genus2Class::Theta(geom) = classify_genus2(&f.curve)? else {
        return Err(Error::Precondition("not a theta-type curve".into()));
    };
    let s = core_structure(f, &geom.core)?;
    if s.criticals.len() != 3 {
        return Err(Error::Precondition("need exactly three critical paths".into()));
    }
    if !s.criticals.iter().all(|c| c.length == s.minimal_length) {
        return Err(Error::Precondition("leg lengths not all equal".into()));
    }
    let mut arcs_used = BTreeSet::new();
    for c in &s.criticals {
        if c.location == geom.u || c.location == geom.v {
            return Err(Error::Precondition("leg located at a branch vertex".into()));
        }
        let (arc, _) = geom
            .position(&f.curve, c.location)
            .ok_or_else(|| Error::Precondition("location not on the core".into()))?;
        if !arcs_used.insert(arc) {
            return Err(Error::Precondition("two legs on one arc".into()));
        }
    }
    let ell = s.minimal_length.clone();
    let mut st = g2_start(f, &s.contracted_value)?;
    // legs
    for c in &s.criticals {
        let p = ride(st.spine, Rat::zero(), c.length.clone());
        assign_profile(&mut st.b, &mut st.chains, &c.path_vertices, &c.path_edges, &p)?;
    }
    let p_vertex = st.chains[st.spine].ensure(&mut st.b, &ell)?;
    // split the core at the three locations into the u-side and v-side trees
    let mut u_side: BTreeSet<EdgeId> = BTreeSet::new();
    let mut v_side: BTreeSet<EdgeId> = BTreeSet::new();
    let mut tips: BTreeSet<VertexId> = BTreeSet::new();
    for c in &s.criticals {
        let (arc, _) = geom.position(&f.curve, c.location).unwrap();
        let (_, ue) = arc_segment(f, &geom, arc, geom.u, c.location);
        let (_, ve) = arc_segment(f, &geom, arc, c.location, geom.v);
        u_side.extend(ue);
        v_side.extend(ve);
        tips.insert(c.location);
    }
    crate::realize0::build_tree_for(&mut st.b, u_side, tips.clone(), p_vertex)?;
    crate::realize0::build_tree_for(&mut st.b, v_side, tips, p_vertex)?;
    g2_finish(st, f, degree_bound)
}

/// Two equal legs at conjugate locations on one arc.
pub fn certify_theta_conjugate(f: &BalancedFn, degree_bound: u64) -> Result<HModCertificate, Error> {
    let Genus2Class::Theta(geom) = classify_genus2(&f.curve)? else {
        return Err(Error::Precondition("not a theta-type curve".into()));
    };
    let s = core_structure(f, &geom.core)?;
    if s.criticals.len() != 2 {
        return Err(Error::Precondition("need exactly two critical paths".into()));
    }
    if s.criticals[0].length != s.criticals[1].length {
        return Err(Error::Precondition("leg lengths not equal".into()));
    }
    let (b1, b2) = (s.criticals[0].location, s.criticals[1].location);
    if b1 == geom.u || b1 == geom.v || b2 == geom.u || b2 == geom.v {
        return Err(Error::Precondition("location at a branch vertex".into()));
    }
    match conjugate_or_weierstrass(&geom, &f.curve, b1, b2) {
        PairClass::Conjugate => {}
        PairClass::WeierstrassPairCoincident => {
            return Err(Error::Precondition(
                "coincident Weierstrass attachment (limit case)".into(),
            ))
        }
        PairClass::Neither => {
            return Err(Error::Precondition("locations not conjugate".into()))
        }
    }
    let (arc1, a) = geom.position(&f.curve, b1).unwrap();
    let ell = s.minimal_length.clone();
    // the lower offset along the arc belongs to the u side
    let (near_u, far_v, a_dist) = {
        let (_, a2) = geom.position(&f.curve, b2).unwrap();
        if a <= a2 {
            (b1, b2, a.clone())
        } else {
            (b2, b1, a2)
        }
    };
    let mut st = g2_start(f, &s.contracted_value)?;
    for c in &s.criticals {
        let p = ride(st.spine, Rat::zero(), c.length.clone());
        assign_profile(&mut st.b, &mut st.chains, &c.path_vertices, &c.path_edges, &p)?;
    }
    let _p_vertex = st.chains[st.spine].ensure(&mut st.b, &ell)?;
    // middle of the attachment arc folds between the two legs
    let (mid_verts, mid_edges) = arc_segment(f, &geom, arc1, near_u, far_v);
    let mid_len: Rat = mid_edges.iter().map(|e| f.curve.edges[e].length.clone()).sum();
    let mid_chain = Chain::new(&mut st.b, _p_vertex);
    let mid_idx = st.chains.len();
    st.chains.push(mid_chain);
    st.chains[mid_idx].ensure(&mut st.b, &(&mid_len / rat_int(2)))?;
    let p = fold(mid_idx, Rat::zero(), mid_len);
    assign_profile(&mut st.b, &mut st.chains, &mid_verts, &mid_edges, &p)?;
    // outer pieces climb to a common level above the legs
    let (us_verts, us_edges) = arc_segment(f, &geom, arc1, near_u, geom.u);
    let p = ride(st.spine, ell.clone(), a_dist.clone());
    assign_profile(&mut st.b, &mut st.chains, &us_verts, &us_edges, &p)?;
    let (vs_verts, vs_edges) = arc_segment(f, &geom, arc1, far_v, geom.v);
    let p = ride(st.spine, ell.clone(), a_dist.clone());
    assign_profile(&mut st.b, &mut st.chains, &vs_verts, &vs_edges, &p)?;
    let r_vertex = st.chains[st.spine].ensure(&mut st.b, &(&ell + &a_dist))?;
    // the other two arcs fold between u and v over fresh branches
    for arc in 0..3 {
        if arc == arc1 {
            continue;
        }
        let (averts, aedges) = arc_segment(f, &geom, arc, geom.u, geom.v);
        let alen = geom.arcs[arc].length.clone();
        let fresh = Chain::new(&mut st.b, r_vertex);
        let idx = st.chains.len();
        st.chains.push(fresh);
        st.chains[idx].ensure(&mut st.b, &(&alen / rat_int(2)))?;
        let p = fold(idx, Rat::zero(), alen);
        assign_profile(&mut st.b, &mut st.chains, &averts, &aedges, &p)?;
    }
    g2_finish(st, f, degree_bound)
}

/// A Y-shaped critical tree with equal arms whose stem attaches at the
/// midpoint of an arc.
pub fn certify_theta_weierstrass_y(
    f: &BalancedFn,
    degree_bound: u64,
) -> Result<HModCertificate, Error> {
    let Genus2Class::Theta(geom) = classify_genus2(&f.curve)? else {
        return Err(Error::Precondition("not a theta-type curve".into()));
    };
    let s = core_structure(f, &geom.core)?;
    if s.criticals.len() != 2 {
        return Err(Error::Precondition("need exactly two critical paths".into()));
    }
    if s.criticals[0].length != s.criticals[1].length {
        return Err(Error::Precondition("arm lengths not equal".into()));
    }
    let b_loc = s.criticals[0].location;
    if b_loc != s.criticals[1].location {
        return Err(Error::Precondition("critical paths do not share their location".into()));
    }
    if b_loc == geom.u || b_loc == geom.v {
        return Err(Error::Precondition("location at a branch vertex".into()));
    }
    let (arc1, a) = geom
        .position(&f.curve, b_loc)
        .ok_or_else(|| Error::Precondition("location not on the core".into()))?;
    let arc_len = geom.arcs[arc1].length.clone();
    if a.clone() * rat_int(2) != arc_len {
        return Err(Error::Precondition("attachment is not the arc midpoint".into()));
    }
    // the shared stem: junction = first common vertex of the two paths
    let set0: BTreeSet<VertexId> = s.criticals[0].path_vertices.iter().copied().collect();
    let junction = *s.criticals[1]
        .path_vertices
        .iter()
        .find(|v| set0.contains(v))
        .expect("paths share a vertex");
    let jpos0 = s.criticals[0].path_vertices.iter().position(|v| *v == junction).unwrap();
    let arm_len: Rat = s.criticals[0].path_edges[..jpos0]
        .iter()
        .map(|e| f.curve.edges[e].length.clone())
        .sum();
    let stem_len = &s.minimal_length - &arm_len;
    if stem_len.is_zero() {
        return Err(Error::Precondition("degenerate stem".into()));
    }
    let h_b = &arm_len + rat_int(2) * &stem_len;
    let mut st = g2_start(f, &s.contracted_value)?;
    // arms and the slope-2 stem ride the spine
    for (i, c) in s.criticals.iter().enumerate() {
        let jpos = c.path_vertices.iter().position(|v| *v == junction).unwrap();
        let this_arm: Rat = c.path_edges[..jpos]
            .iter()
            .map(|e| f.curve.edges[e].length.clone())
            .sum();
        if this_arm != arm_len {
            return Err(Error::Precondition("arm lengths not equal".into()));
        }
        let mut pieces = vec![ProfilePiece {
            from_d: Rat::zero(),
            to_d: this_arm.clone(),
            chain: st.spine,
            from_h: Rat::zero(),
            slope: 1,
        }];
        let total: Rat = c.path_edges.iter().map(|e| f.curve.edges[e].length.clone()).sum();
        if total > this_arm {
            pieces.push(ProfilePiece {
                from_d: this_arm.clone(),
                to_d: total.clone(),
                chain: st.spine,
                from_h: arm_len.clone(),
                slope: 2,
            });
        }
        let p = Profile { pieces };
        // the second path stops at the junction; its stem part is shared
        let stop = if i == 0 { c.path_vertices.len() - 1 } else { jpos };
        assign_profile(
            &mut st.b,
            &mut st.chains,
            &c.path_vertices[..=stop],
            &c.path_edges[..stop],
            &p,
        )?;
    }
    // the two half-arcs climb to a common level
    let (h1v, h1e) = arc_segment(f, &geom, arc1, b_loc, geom.u);
    let p = ride(st.spine, h_b.clone(), a.clone());
    assign_profile(&mut st.b, &mut st.chains, &h1v, &h1e, &p)?;
    let (h2v, h2e) = arc_segment(f, &geom, arc1, b_loc, geom.v);
    let p = ride(st.spine, h_b.clone(), a.clone());
    assign_profile(&mut st.b, &mut st.chains, &h2v, &h2e, &p)?;
    let r_vertex = st.chains[st.spine].ensure(&mut st.b, &(&h_b + &a))?;
    for arc in 0..3 {
        if arc == arc1 {
            continue;
        }
        let (averts, aedges) = arc_segment(f, &geom, arc, geom.u, geom.v);
        let alen = geom.arcs[arc].length.clone();
        let fresh = Chain::new(&mut st.b, r_vertex);
        let idx = st.chains.len();
        st.chains.push(fresh);
        st.chains[idx].ensure(&mut st.b, &(&alen / rat_int(2)))?;
        let p = fold(idx, Rat::zero(), alen);
        assign_profile(&mut st.b, &mut st.chains, &averts, &aedges, &p)?;
    }
    g2_finish(st, f, degree_bound)
}

/// Dumbbell with one leg on each loop and one on the bridge, under the two
/// distance equalities that put each loop's attachment points at a common
/// level.
pub fn certify_dumbbell(f: &BalancedFn, degree_bound: u64) -> Result<HModCertificate, Error> {
    let Genus2Class::Dumbbell(geom) = classify_genus2(&f.curve)? else {
        return Err(Error::Precondition("not a dumbbell-type curve".into()));
    };
    let s = core_structure(f, &geom.core)?;
    if s.criticals.len() != 3 {
        return Err(Error::Precondition("need exactly three critical paths".into()));
    }
    let loop_u_verts: BTreeSet<VertexId> = loop_vertices(f, &geom.loop_u, geom.u);
    let loop_v_verts: BTreeSet<VertexId> = loop_vertices(f, &geom.loop_v, geom.v);
    let bridge_verts: Vec<VertexId> = bridge_vertex_list(f, &geom.bridge, geom.u);
    let mut on_loop_u = None;
    let mut on_loop_v = None;
    let mut on_bridge = None;
    for (i, c) in s.criticals.iter().enumerate() {
        let loc = c.location;
        if loc != geom.u && loc != geom.v {
            if loop_u_verts.contains(&loc) {
                on_loop_u = Some(i);
                continue;
            }
            if loop_v_verts.contains(&loc) {
                on_loop_v = Some(i);
                continue;
            }
            if bridge_verts.contains(&loc) {
                on_bridge = Some(i);
                continue;
            }
        }
        return Err(Error::Precondition(
            "attachment pattern: need one leg per loop and one on the bridge interior".into(),
        ));
    }
    let (Some(i1), Some(i2), Some(i3)) = (on_loop_u, on_loop_v, on_bridge) else {
        return Err(Error::Precondition(
            "attachment pattern: need one leg per loop and one on the bridge interior".into(),
        ));
    };
    let c1 = &s.criticals[i1]; // loop at u
    let c2 = &s.criticals[i2]; // loop at v
    let c3 = &s.criticals[i3]; // bridge
    let x = c3.location;
    let xpos = bridge_verts.iter().position(|v| *v == x).unwrap();
    let d_xu: Rat = geom.bridge[..xpos]
        .iter()
        .map(|e| f.curve.edges[e].length.clone())
        .sum();
    let bridge_len: Rat = geom.bridge.iter().map(|e| f.curve.edges[e].length.clone()).sum();
    let d_xv = &bridge_len - &d_xu;
    if c1.length != &c3.length + &d_xu {
        return Err(Error::Precondition(
            "distance equality fails on the first loop".into(),
        ));
    }
    if c2.length != &c3.length + &d_xv {
        return Err(Error::Precondition(
            "distance equality fails on the second loop".into(),
        ));
    }

    let mut st = g2_start(f, &s.contracted_value)?;
    // bridge leg rides the spine, then the bridge continues toward u on the
    // spine and toward v on a fresh branch
    let p = ride(st.spine, Rat::zero(), c3.length.clone());
    assign_profile(&mut st.b, &mut st.chains, &c3.path_vertices, &c3.path_edges, &p)?;
    let x_img_h = c3.length.clone();
    let x_vertex = st.chains[st.spine].ensure(&mut st.b, &x_img_h)?;
    let (xu_verts, xu_edges) = bridge_segment(f, &geom, &bridge_verts, x, geom.u);
    let p = ride(st.spine, x_img_h.clone(), d_xu.clone());
    assign_profile(&mut st.b, &mut st.chains, &xu_verts, &xu_edges, &p)?;
    let branch_v = Chain::new(&mut st.b, x_vertex);
    let bv_idx = st.chains.len();
    st.chains.push(branch_v);
    let (xv_verts, xv_edges) = bridge_segment(f, &geom, &bridge_verts, x, geom.v);
    let p = ride(bv_idx, Rat::zero(), d_xv.clone());
    assign_profile(&mut st.b, &mut st.chains, &xv_verts, &xv_edges, &p)?;
    // loop legs
    let p = ride(st.spine, Rat::zero(), c1.length.clone());
    assign_profile(&mut st.b, &mut st.chains, &c1.path_vertices, &c1.path_edges, &p)?;
    // the second leg rides the spine to x's level, then the fresh branch
    let p = Profile {
        pieces: vec![
            ProfilePiece {
                from_d: Rat::zero(),
                to_d: c3.length.clone(),
                chain: st.spine,
                from_h: Rat::zero(),
                slope: 1,
            },
            ProfilePiece {
                from_d: c3.length.clone(),
                to_d: c2.length.clone(),
                chain: bv_idx,
                from_h: Rat::zero(),
                slope: 1,
            },
        ],
    };
    assign_profile(&mut st.b, &mut st.chains, &c2.path_vertices, &c2.path_edges, &p)?;
    // each loop splits at its two marked points into two arcs that fold
    let spine_idx = st.spine;
    assign_loop_folds(&mut st, f, &geom.loop_u, geom.u, c1.location, spine_idx, c1.length.clone())?;
    assign_loop_folds(&mut st, f, &geom.loop_v, geom.v, c2.location, bv_idx, d_xv.clone())?;
    g2_finish(st, f, degree_bound)
}

fn loop_vertices(f: &BalancedFn, loop_edges: &[EdgeId], base: VertexId) -> BTreeSet<VertexId> {
    let mut out = BTreeSet::from([base]);
    let mut cur = base;
    for e in loop_edges {
        let ends = f.curve.edges[e].ends;
        let far = if ends[0] == cur { ends[1] } else { ends[0] };
        out.insert(far);
        cur = far;
    }
    out
}

fn bridge_vertex_list(f: &BalancedFn, bridge: &[EdgeId], from: VertexId) -> Vec<VertexId> {
    let mut out = vec![from];
    let mut cur = from;
    for e in bridge {
        let ends = f.curve.edges[e].ends;
        let far = if ends[0] == cur { ends[1] } else { ends[0] };
        out.push(far);
        cur = far;
    }
    out
}

fn bridge_segment(
    _f: &BalancedFn,
    geom: &DumbbellGeometry,
    bridge_verts: &[VertexId],
    from: VertexId,
    to: VertexId,
) -> (Vec<VertexId>, Vec<EdgeId>) {
    let i = bridge_verts.iter().position(|v| *v == from).unwrap();
    let j = bridge_verts.iter().position(|v| *v == to).unwrap();
    let (lo, hi) = (i.min(j), i.max(j));
    let verts: Vec<VertexId> = bridge_verts[lo..=hi].to_vec();
    let edges: Vec<EdgeId> = geom.bridge[lo..hi].to_vec();
    if i <= j {
        (verts, edges)
    } else {
        (verts.into_iter().rev().collect(), edges.into_iter().rev().collect())
    }
}

/// The two arcs of a loop between its base vertex and a marked interior
/// point fold over fresh branches at the common level.
fn assign_loop_folds(
    st: &mut G2State,
    f: &BalancedFn,
    loop_edges: &[EdgeId],
    base: VertexId,
    marked: VertexId,
    chain: usize,
    level: Rat,
) -> Result<(), Error> {
    let verts = bridge_vertex_list(f, loop_edges, base);
    let mpos = verts
        .iter()
        .position(|v| *v == marked)
        .ok_or_else(|| Error::Precondition("marked point not on the loop".into()))?;
    let level_vertex = st.chains[chain].ensure(&mut st.b, &level)?;
    // arc 1: base .. marked; arc 2: marked .. base (the rest)
    let segs = [
        (verts[..=mpos].to_vec(), loop_edges[..mpos].to_vec()),
        (verts[mpos..].to_vec(), loop_edges[mpos..].to_vec()),
    ];
    for (sv, se) in segs {
        if se.is_empty() {
            return Err(Error::Precondition("loop attachment at the base vertex".into()));
        }
        let alen: Rat = se.iter().map(|e| f.curve.edges[e].length.clone()).sum();
        let fresh = Chain::new(&mut st.b, level_vertex);
        let idx = st.chains.len();
        st.chains.push(fresh);
        st.chains[idx].ensure(&mut st.b, &(&alen / rat_int(2)))?;
        let p = fold(idx, Rat::zero(), alen);
        assign_profile(&mut st.b, &mut st.chains, &sv, &se, &p)?;
    }
    Ok(())
}

// ---- frames and the long-tree appender ------------------------------------

/// A frame: a subgraph whose complement is a forest of trees, each hanging
/// by one contracted connecting edge, together with a verified certificate
/// for the frame instance.
#[derive(Debug, Clone)]
pub struct Frame {
    pub spec: SubgraphSpec,
    pub instance: BalancedFn,
    pub half_rays: BTreeMap<crate::graph::RayId, (EdgeId, u8)>,
    pub certificate: HModCertificate,
}

#[derive(Debug, Clone)]
pub enum AppendOutcome {
    Certificate(Box<HModCertificate>),
    /// Connecting edges at or below their bounds: (edge, required, actual).
    ThresholdFail(Vec<(EdgeId, Rat, Rat)>),
}

/// Assembles the frame around the core and the given base criticals: the
/// core, their paths, and the half-edge stars of all frame vertices, then
/// certifies the frame instance with the matching base certifier.
pub fn build_frame(
    f: &BalancedFn,
    core: &Subgraph,
    s: &CoreStructure,
    base_criticals: &[VertexId],
    degree_bound: u64,
) -> Result<Frame, Error> {
    let mut vertices: BTreeSet<VertexId> = core.vertices.clone();
    let mut full_edges: BTreeSet<EdgeId> = core.edges.clone();
    for c in &s.criticals {
        if !base_criticals.contains(&c.vertex) {
            continue;
        }
        vertices.extend(c.path_vertices.iter().copied());
        full_edges.extend(c.path_edges.iter().copied());
    }
    // non-contracted edges at frame vertices become half edges; rays at
    // frame vertices come along
    let mut half_edges: BTreeMap<EdgeId, u8> = BTreeMap::new();
    let mut rays: BTreeSet<crate::graph::RayId> = BTreeSet::new();
    for (id, e) in &f.curve.edges {
        if full_edges.contains(id) || f.edge_contracted(*id) {
            continue;
        }
        for side in 0..2u8 {
            if vertices.contains(&e.ends[side as usize]) {
                half_edges.insert(*id, side);
                break;
            }
        }
    }
    for (id, r) in &f.curve.rays {
        if vertices.contains(&r.base) && f.slopes[&Flag::Ray(*id)] != 0 {
            rays.insert(*id);
        }
    }
    let spec = SubgraphSpec { vertices, full_edges, half_edges, rays };
    let sub = spec.materialize(f)?;
    // certify the frame with whichever base pattern applies
    let cert = certify_theta_three_legs(&sub.fun, degree_bound)
        .or_else(|_| certify_theta_conjugate(&sub.fun, degree_bound))
        .or_else(|_| certify_theta_weierstrass_y(&sub.fun, degree_bound))
        .or_else(|_| certify_dumbbell(&sub.fun, degree_bound))?;
    if !verify_certificate(&sub.fun, &cert, degree_bound).is_accept() {
        return Err(Error::Construction("frame certificate failed verification".into()));
    }
    Ok(Frame { spec, instance: sub.fun, half_rays: sub.half_rays, certificate: cert })
}

/// Appends the hanging trees to a frame certificate. Each tree's contracted
/// material rides the image route of its attachment point and folds over
/// fresh branches; this requires the connecting edge to exceed the route
/// length, which is reported as the threshold on failure.
pub fn append_long_trees(
    f: &BalancedFn,
    frame: &Frame,
    degree_bound: u64,
) -> Result<AppendOutcome, Error> {
    let mut b = LiftBuilder::new(&f.curve);
    b.assign_function_lift(f)?;
    let half_rays = frame.half_rays.clone();
    let host_curve = f.curve.clone();
    let translate = move |p: &CurvePoint| -> Result<CurvePoint, Error> {
        match p {
            CurvePoint::Vertex(_) | CurvePoint::OnEdge(_, _) => Ok(p.clone()),
            CurvePoint::OnRay(r, t) => match half_rays.get(r) {
                None => Ok(p.clone()),
                Some((e, side)) => {
                    let len = host_curve.edges[e].length.clone();
                    if *t > len {
                        return Err(Error::DecompositionInvalid(format!(
                            "frame certificate material beyond half edge {e}"
                        )));
                    }
                    let offset = if *side == 0 { t.clone() } else { &len - t };
                    host_curve.normalize_point(&CurvePoint::OnEdge(*e, offset))
                }
            },
        }
    };
    let half_rays2 = frame.half_rays.clone();
    let host_curve2 = f.curve.clone();
    let extent = move |r: crate::graph::RayId| -> Option<Rat> {
        half_rays2.get(&r).map(|(e, _)| host_curve2.edges[e].length.clone())
    };
    b.import_certificate(&frame.certificate, &translate, &extent)?;
    let anchor = {
        let s_val = frame
            .instance
            .values
            .values()
            .next()
            .cloned()
            .unwrap_or_else(Rat::zero);
        let _ = s_val;
        // the line vertex over the contracted value: recover it from any
        // frame critical's image
        b.ensure_line_vertex(&contracted_value_of(&frame.instance))?
    };

    // hanging components: contracted edges of Γ without walks, grouped
    let mut comps: Vec<(BTreeSet<EdgeId>, VertexId)> = Vec::new();
    let mut remaining: BTreeSet<EdgeId> = f
        .curve
        .edges
        .keys()
        .copied()
        .filter(|e| f.edge_contracted(*e) && !frame.spec.full_edges.contains(e))
        .collect();
    while let Some(&start) = remaining.iter().next() {
        let mut edges = BTreeSet::from([start]);
        remaining.remove(&start);
        let mut attach: Option<VertexId> = None;
        let mut frontier: VecDeque<VertexId> =
            f.curve.edges[&start].ends.iter().copied().collect();
        let mut seen_v: BTreeSet<VertexId> = frontier.iter().copied().collect();
        while let Some(v) = frontier.pop_front() {
            if frame.spec.vertices.contains(&v) {
                attach = Some(v);
                continue;
            }
            let adj: Vec<EdgeId> = remaining
                .iter()
                .copied()
                .filter(|e| f.curve.edges[e].ends.contains(&v))
                .collect();
            for e in adj {
                remaining.remove(&e);
                edges.insert(e);
                for w in f.curve.edges[&e].ends {
                    if seen_v.insert(w) {
                        frontier.push_back(w);
                    }
                }
            }
        }
        let attach = attach.ok_or_else(|| {
            Error::Precondition("hanging material not attached to the frame".into())
        })?;
        comps.push((edges, attach));
    }

    // threshold check per component
    let mut below: Vec<(EdgeId, Rat, Rat)> = Vec::new();
    let mut plans: Vec<(BTreeSet<EdgeId>, VertexId, VertexId, Rat)> = Vec::new();
    for (edges, attach) in &comps {
        let x_img = *b
            .vmap
            .get(attach)
            .ok_or_else(|| Error::Construction(format!("no image for attachment {attach}")))?;
        let (_, route_len) = target_route(&b, anchor, x_img)?;
        let connecting = *edges
            .iter()
            .find(|e| f.curve.edges[e].ends.contains(attach))
            .expect("connecting edge");
        let c_len = f.curve.edges[&connecting].length.clone();
        if c_len <= route_len {
            below.push((connecting, route_len.clone(), c_len));
        } else {
            plans.push((edges.clone(), *attach, x_img, route_len));
        }
    }
    if !below.is_empty() {
        return Ok(AppendOutcome::ThresholdFail(below));
    }

    // build each tree: criticals ride the route from the line anchor to the
    // attachment image, with fold excess over fresh chains
    for (edges, attach, x_img, route_len) in plans {
        let (route_flags, _) = target_route(&b, anchor, x_img)?;
        let mut chains: Vec<Chain> = Vec::new();
        let route_chain = crate::realize1::route_as_chain(&mut b, anchor, &route_flags)?;
        chains.push(route_chain);
        // criticals in this component, by distance to the attachment
        let verts_of: BTreeSet<VertexId> =
            edges.iter().flat_map(|e| f.curve.edges[e].ends).collect();
        let mut tree_criticals: Vec<(Rat, Vec<VertexId>, Vec<EdgeId>)> = Vec::new();
        for v in &verts_of {
            if *v == attach {
                continue;
            }
            let n = f.curve.flags_at(*v).iter().filter(|fl| f.slopes[fl] != 0).count();
            if n == 0 {
                continue;
            }
            let (pv, pe) = bfs_to(f, &edges, &BTreeSet::from([attach]), *v)?;
            let len: Rat = pe.iter().map(|e| f.curve.edges[e].length.clone()).sum();
            tree_criticals.push((len, pv, pe));
        }
        tree_criticals.sort_by(|x, y| (&x.0, x.1[0]).cmp(&(&y.0, y.1[0])));
        let mut built: BTreeSet<VertexId> = BTreeSet::from([attach]);
        for (_, pv, pe) in tree_criticals {
            let stop = pv
                .iter()
                .position(|v| built.contains(v))
                .expect("path reaches the attachment");
            let seg_verts: Vec<VertexId> = pv[..=stop].to_vec();
            let seg_edges: Vec<EdgeId> = pe[..stop].to_vec();
            let seg_len: Rat = seg_edges.iter().map(|e| f.curve.edges[e].length.clone()).sum();
            let b_vertex = *seg_verts.last().unwrap();
            let tv = *b
                .vmap
                .get(&b_vertex)
                .ok_or_else(|| Error::Construction("attachment without image".into()))?;
            let (rf, rl) = target_route(&b, anchor, tv)?;
            if seg_len <= rl {
                return Err(Error::Precondition(
                    "hanging tree path not longer than its host image".into(),
                ));
            }
            let rc = crate::realize1::route_as_chain(&mut b, anchor, &rf)?;
            let r_idx = chains.len();
            chains.push(rc);
            let mut fresh = Chain::new(&mut b, tv);
            let delta = (&seg_len - &rl) / rat_int(2);
            fresh.ensure(&mut b, &delta)?;
            let f_idx = chains.len();
            chains.push(fresh);
            let profile = Profile {
                pieces: vec![
                    ProfilePiece {
                        from_d: Rat::zero(),
                        to_d: rl.clone(),
                        chain: r_idx,
                        from_h: Rat::zero(),
                        slope: 1,
                    },
                    ProfilePiece {
                        from_d: rl.clone(),
                        to_d: &rl + &delta,
                        chain: f_idx,
                        from_h: Rat::zero(),
                        slope: 1,
                    },
                    ProfilePiece {
                        from_d: &rl + &delta,
                        to_d: seg_len.clone(),
                        chain: f_idx,
                        from_h: delta.clone(),
                        slope: -1,
                    },
                ],
            };
            assign_profile(&mut b, &mut chains, &seg_verts, &seg_edges, &profile)?;
            built.extend(seg_verts);
        }
        let _ = route_len;
    }

    park_twigs(&mut b)?;
    park_contracted_rays(&mut b, f)?;
    let cert = b.finalize(f, degree_bound)?;
    Ok(AppendOutcome::Certificate(Box::new(cert)))
}

fn contracted_value_of(frame_instance: &BalancedFn) -> Rat {
    // the value where everything contracted sits: any vertex incident to a
    // contracted edge
    for (id, e) in &frame_instance.curve.edges {
        if frame_instance.edge_contracted(*id) {
            return frame_instance.values[&e.ends[0]].clone();
        }
    }
    frame_instance
        .values
        .values()
        .next()
        .cloned()
        .unwrap_or_else(Rat::zero)
}
