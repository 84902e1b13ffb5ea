//! Genus-1 analysis for functions contracting the cycle: critical structure,
//! the well-spacedness decision, the constructive certifier, and a bounded
//! falsification probe for the negative direction.
//!
//! The certifier builds one target spine at the contracted value. Minimal
//! critical paths ride it with slope 1; the stem below a junction or a
//! multi-flag critical point rides with slope 2 and drops back to slope 1 at
//! an adjustment point when later attachments need a lower common height.
//! The cycle maps at that common height: with one attachment point both arcs
//! ride the spine to the antipodal point, with several each arc folds at its
//! midpoint over a fresh ray. Non-minimal paths ride the image of their host
//! and fold over fresh rays, or fold over the spine when attached to the
//! cycle. The builder's completion pass supplies the remaining rays and
//! subtree copies, and the verifier gates every output.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::balanced::BalancedFn;
use crate::builder::LiftBuilder;
use crate::error::Error;
use crate::graph::{CurvePoint, EdgeId, Flag, RayId, Subgraph, VertexId};
use crate::modify::HModCertificate;
use crate::rat::{rat_int, rat_to_string, Rat};
use num_traits::Zero;

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub vertex: VertexId,
    pub flag_number: usize,
    /// Vertices from the critical point to the cycle point, inclusive.
    pub path_vertices: Vec<VertexId>,
    pub path_edges: Vec<EdgeId>,
    pub length: Rat,
    pub cycle_point: VertexId,
    /// First point where the path meets the cycle or an earlier (by vertex
    /// id) critical path.
    pub attachment: VertexId,
}

#[derive(Debug, Clone)]
pub struct CriticalStructure {
    pub cycle: Subgraph,
    pub cycle_length: Rat,
    pub contracted_value: Rat,
    pub criticals: Vec<CriticalPoint>,
    pub minimal_length: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Genus1Verdict {
    Realizable,
    NotRealizable { witness_critical: VertexId, witness_path: Vec<EdgeId> },
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub description: String,
    pub epsilon: Rat,
}

#[derive(Debug, Clone)]
pub enum Genus1Certificate {
    Certificate(HModCertificate),
    /// Non-generic instance: a one-parameter deformation is named, and a
    /// sample certificate at a small parameter value backs the verdict.
    LimitRealizable {
        perturbation: Perturbation,
        sample_instance: BalancedFn,
        sample: Box<HModCertificate>,
    },
}

/// Computes the cycle, critical points with paths and flag numbers, and
/// attachment points. Requires genus 1 and a contracted neighborhood of the
/// cycle.
pub fn critical_structure(f: &BalancedFn) -> Result<CriticalStructure, Error> {
    f.validate()?;
    if !f.is_balanced().is_balanced() {
        return Err(Error::Precondition("function not balanced".into()));
    }
    if f.curve.first_betti()? != 1 {
        return Err(Error::Precondition("not a genus-1 curve".into()));
    }
    let cycle = f.curve.core()?;
    for e in &cycle.edges {
        if !f.edge_contracted(*e) {
            return Err(Error::NotApplicable("cycle not contracted".into()));
        }
    }
    for v in &cycle.vertices {
        for fl in f.curve.flags_at(*v) {
            if f.slopes[&fl] != 0 {
                return Err(Error::NotApplicable(
                    "cycle contracted but a non-contracted element meets it".into(),
                ));
            }
        }
    }
    let cycle_length: Rat = cycle.edges.iter().map(|e| f.curve.edges[e].length.clone()).sum();
    let comp = f
        .contracted_components()
        .into_iter()
        .find(|(vs, _)| cycle.vertices.iter().all(|v| vs.contains(v)))
        .ok_or_else(|| Error::NotApplicable("cycle not contracted".into()))?;
    let (comp_vs, comp_es) = comp;
    let contracted_value = f.values[comp_vs.iter().next().unwrap()].clone();
    let mut criticals = Vec::new();
    for &v in &comp_vs {
        let n = f.curve.flags_at(v).iter().filter(|fl| f.slopes[fl] != 0).count();
        if n == 0 {
            continue;
        }
        let (pv, pe) = path_to_cycle(f, &comp_es, &cycle, v)?;
        let length: Rat = pe.iter().map(|e| f.curve.edges[e].length.clone()).sum();
        let cycle_point = *pv.last().unwrap();
        criticals.push(CriticalPoint {
            vertex: v,
            flag_number: n,
            path_vertices: pv,
            path_edges: pe,
            length,
            cycle_point,
            attachment: v,
        });
    }
    if criticals.is_empty() {
        return Err(Error::NotApplicable("no critical points".into()));
    }
    criticals.sort_by(|a, b| a.vertex.cmp(&b.vertex));
    let mut seen: BTreeSet<VertexId> = cycle.vertices.clone();
    for i in 0..criticals.len() {
        let pv = criticals[i].path_vertices.clone();
        let att = pv
            .iter()
            .copied()
            .find(|v| seen.contains(v))
            .unwrap_or(criticals[i].cycle_point);
        criticals[i].attachment = att;
        seen.extend(pv);
    }
    let minimal_length = criticals.iter().map(|c| c.length.clone()).min().unwrap();
    Ok(CriticalStructure { cycle, cycle_length, contracted_value, criticals, minimal_length })
}

fn path_to_cycle(
    f: &BalancedFn,
    comp_edges: &BTreeSet<EdgeId>,
    cycle: &Subgraph,
    from: VertexId,
) -> Result<(Vec<VertexId>, Vec<EdgeId>), Error> {
    if cycle.vertices.contains(&from) {
        return Ok((vec![from], vec![]));
    }
    let usable: BTreeSet<EdgeId> = comp_edges
        .iter()
        .copied()
        .filter(|e| !cycle.edges.contains(e))
        .collect();
    let mut parent: BTreeMap<VertexId, (VertexId, EdgeId)> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    let mut reached = None;
    'outer: while let Some(v) = queue.pop_front() {
        for e in &usable {
            let ends = f.curve.edges[e].ends;
            if !ends.contains(&v) {
                continue;
            }
            let w = if ends[0] == v { ends[1] } else { ends[0] };
            if seen.insert(w) {
                parent.insert(w, (v, *e));
                if cycle.vertices.contains(&w) {
                    reached = Some(w);
                    break 'outer;
                }
                queue.push_back(w);
            }
        }
    }
    let Some(end) = reached else {
        return Err(Error::NotApplicable(format!(
            "critical point {from} not connected to the cycle in the contracted part"
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

/// Well-spacedness: flag numbers over the minimal-length critical paths sum
/// to at least 3.
pub fn is_well_spaced(f: &BalancedFn) -> Result<bool, Error> {
    let s = critical_structure(f)?;
    Ok(well_spaced_sum(&s) >= 3)
}

fn well_spaced_sum(s: &CriticalStructure) -> usize {
    s.criticals
        .iter()
        .filter(|c| c.length == s.minimal_length)
        .map(|c| c.flag_number)
        .sum()
}

/// Realizable exactly when well-spaced; a negative verdict carries the
/// witnessing unique minimal simple path.
pub fn decide_genus1(f: &BalancedFn) -> Result<Genus1Verdict, Error> {
    let s = critical_structure(f)?;
    if well_spaced_sum(&s) >= 3 {
        Ok(Genus1Verdict::Realizable)
    } else {
        let w = s
            .criticals
            .iter()
            .find(|c| c.length == s.minimal_length)
            .expect("a minimal path exists");
        Ok(Genus1Verdict::NotRealizable {
            witness_critical: w.vertex,
            witness_path: w.path_edges.clone(),
        })
    }
}

// ---- target chains ------------------------------------------------------

/// A chain of target vertices along one added branch, with a terminal ray.
pub(crate) struct Chain {
    pub(crate) verts: BTreeMap<Rat, VertexId>,
    pub(crate) tail: RayId,
}

impl Chain {
    pub(crate) fn new(b: &mut LiftBuilder, root: VertexId) -> Chain {
        let tail = b.add_target_ray(root);
        Chain { verts: BTreeMap::from([(Rat::zero(), root)]), tail }
    }

    pub(crate) fn ensure(&mut self, b: &mut LiftBuilder, h: &Rat) -> Result<VertexId, Error> {
        if let Some(v) = self.verts.get(h) {
            return Ok(*v);
        }
        let top = self.verts.keys().next_back().unwrap().clone();
        if *h > top {
            let v = b.tgt_ensure_vertex(&CurvePoint::OnRay(self.tail, h - &top))?;
            let new_tail = *b
                .tgt
                .extended
                .rays
                .iter()
                .find(|(_, r)| r.base == v)
                .map(|(id, _)| id)
                .expect("new tail ray");
            self.tail = new_tail;
            self.verts.insert(h.clone(), v);
            Ok(v)
        } else {
            let (lo, vlo) = self
                .verts
                .range(..h.clone())
                .next_back()
                .map(|(k, v)| (k.clone(), *v))
                .ok_or_else(|| Error::Construction("no lower chain bracket".into()))?;
            let vhi = *self
                .verts
                .range(h.clone()..)
                .next()
                .map(|(_, v)| v)
                .ok_or_else(|| Error::Construction("no upper chain bracket".into()))?;
            let e = *b
                .tgt
                .extended
                .edges
                .iter()
                .find(|(_, ed)| ed.ends == [vlo, vhi])
                .map(|(id, _)| id)
                .ok_or_else(|| Error::Construction("chain piece missing".into()))?;
            let v = b.tgt_ensure_vertex(&CurvePoint::OnEdge(e, h - &lo))?;
            self.verts.insert(h.clone(), v);
            Ok(v)
        }
    }

    pub(crate) fn walk_between(&self, b: &LiftBuilder, from: &Rat, to: &Rat) -> Result<Vec<Flag>, Error> {
        if from == to {
            return Ok(vec![]);
        }
        let (lo, hi, upward) = if from < to { (from, to, true) } else { (to, from, false) };
        let keys: Vec<Rat> = self.verts.range(lo.clone()..=hi.clone()).map(|(k, _)| k.clone()).collect();
        if keys.first() != Some(lo) || keys.last() != Some(hi) {
            return Err(Error::Construction("chain endpoints not registered".into()));
        }
        let mut flags = Vec::new();
        for w in keys.windows(2) {
            let (vlo, vhi) = (self.verts[&w[0]], self.verts[&w[1]]);
            let e = *b
                .tgt
                .extended
                .edges
                .iter()
                .find(|(_, ed)| ed.ends == [vlo, vhi])
                .map(|(id, _)| id)
                .ok_or_else(|| Error::Construction("chain piece missing".into()))?;
            flags.push(Flag::Edge(e, 0));
        }
        if !upward {
            flags.reverse();
            flags = flags.iter().map(|f| f.reversed().unwrap()).collect();
        }
        Ok(flags)
    }
}

/// One piece of a path profile: over distances `[from_d, to_d]` the image
/// moves along `chain` starting at height `from_h` with the signed slope.
pub(crate) struct ProfilePiece {
    pub(crate) from_d: Rat,
    pub(crate) to_d: Rat,
    pub(crate) chain: usize,
    pub(crate) from_h: Rat,
    pub(crate) slope: i64,
}

pub(crate) struct Profile {
    pub(crate) pieces: Vec<ProfilePiece>,
}

impl Profile {
    pub(crate) fn ride(chain: usize, len: Rat) -> Profile {
        Profile {
            pieces: vec![ProfilePiece {
                from_d: Rat::zero(),
                to_d: len,
                chain,
                from_h: Rat::zero(),
                slope: 1,
            }],
        }
    }

    fn breakpoints(&self) -> Vec<Rat> {
        self.pieces.iter().skip(1).map(|p| p.from_d.clone()).collect()
    }

    fn locate(&self, d: &Rat) -> (usize, Rat) {
        for p in &self.pieces {
            if *d >= p.from_d && *d <= p.to_d {
                return (p.chain, &p.from_h + rat_int(p.slope) * (d - &p.from_d));
            }
        }
        panic!("distance outside profile");
    }

}

fn find_dom_edge(b: &LiftBuilder, u: VertexId, v: VertexId) -> Option<EdgeId> {
    b.dom
        .extended
        .edges
        .iter()
        .find(|(_, e)| e.ends == [u, v] || e.ends == [v, u])
        .map(|(id, _)| *id)
}

/// Subdivides a run of edges at total distance `at` from its start when the
/// cut falls inside an edge. Returns the updated run.
fn cut_run(
    b: &mut LiftBuilder,
    verts: &[VertexId],
    edges: &[EdgeId],
    at: &Rat,
) -> Result<(Vec<VertexId>, Vec<EdgeId>), Error> {
    let mut d = Rat::zero();
    for (i, e) in edges.iter().enumerate() {
        let len = b.dom.extended.edges[e].length.clone();
        if *at == d {
            return Ok((verts.to_vec(), edges.to_vec()));
        }
        if *at < &d + &len {
            let local = at - &d;
            let ends = b.dom.extended.edges[e].ends;
            let offset = if ends[0] == verts[i] { local } else { &len - &local };
            let m = b.dom_ensure_vertex(&CurvePoint::OnEdge(*e, offset))?;
            let lo = find_dom_edge(b, verts[i], m)
                .ok_or_else(|| Error::Construction("missing low piece".into()))?;
            let hi = find_dom_edge(b, m, verts[i + 1])
                .ok_or_else(|| Error::Construction("missing high piece".into()))?;
            let mut nv = verts[..=i].to_vec();
            nv.push(m);
            nv.extend_from_slice(&verts[i + 1..]);
            let mut ne = edges[..i].to_vec();
            ne.push(lo);
            ne.push(hi);
            ne.extend_from_slice(&edges[i + 1..]);
            return Ok((nv, ne));
        }
        d += len;
    }
    Ok((verts.to_vec(), edges.to_vec()))
}

struct G1Builder {
    b: LiftBuilder,
    chains: Vec<Chain>,
    spine: usize,
}

impl G1Builder {
    fn assign_path(
        &mut self,
        verts: &[VertexId],
        edges: &[EdgeId],
        profile: &Profile,
    ) -> Result<(), Error> {
        assign_profile(&mut self.b, &mut self.chains, verts, edges, profile)
    }
}

/// Assigns walks and images along a run of contracted edges following a
/// piecewise profile over target chains.
pub(crate) fn assign_profile(
    b: &mut LiftBuilder,
    chains: &mut [Chain],
    verts: &[VertexId],
    edges: &[EdgeId],
    profile: &Profile,
) -> Result<(), Error> {
    let mut verts = verts.to_vec();
    let mut edges = edges.to_vec();
    for bp in profile.breakpoints() {
        let (nv, ne) = cut_run(b, &verts, &edges, &bp)?;
        verts = nv;
        edges = ne;
    }
    let mut dists = vec![Rat::zero()];
    let mut d = Rat::zero();
    for e in &edges {
        d += b.dom.extended.edges[e].length.clone();
        dists.push(d.clone());
    }
    for (i, v) in verts.iter().enumerate() {
        let (chain, h) = profile.locate(&dists[i]);
        let tv = chains[chain].ensure(b, &h)?;
        match b.vmap.get(v) {
            Some(old) if *old != tv => {
                return Err(Error::Construction(format!(
                    "conflicting image for {v} while assigning a path"
                )))
            }
            _ => {
                b.vmap.insert(*v, tv);
            }
        }
    }
    for (i, e) in edges.iter().enumerate() {
        let (d1, d2) = (&dists[i], &dists[i + 1]);
        let piece = profile
            .pieces
            .iter()
            .find(|p| p.from_d <= *d1 && *d2 <= p.to_d)
            .ok_or_else(|| Error::Construction("edge straddles profile pieces".into()))?;
        let h1 = &piece.from_h + rat_int(piece.slope) * (d1 - &piece.from_d);
        let h2 = &piece.from_h + rat_int(piece.slope) * (d2 - &piece.from_d);
        let chain = piece.chain;
        let slope = piece.slope.unsigned_abs();
        chains[chain].ensure(b, &h1)?;
        chains[chain].ensure(b, &h2)?;
        let walk = chains[chain].walk_between(b, &h1, &h2)?;
        let ends = b.dom.extended.edges[e].ends;
        let side = if ends[0] == verts[i] { 0 } else { 1 };
        b.set_edge_walk(Flag::Edge(*e, side), walk, slope)?;
    }
    Ok(())
}

// ---- hanging trees -------------------------------------------------------

struct HangingTree {
    root: VertexId,
    criticals: Vec<usize>,
}

fn hanging_trees(f: &BalancedFn, s: &CriticalStructure) -> Vec<HangingTree> {
    let comp = f
        .contracted_components()
        .into_iter()
        .find(|(vs, _)| s.cycle.vertices.iter().all(|v| vs.contains(v)))
        .expect("cycle component");
    let tree_edges: BTreeSet<EdgeId> = comp
        .1
        .iter()
        .copied()
        .filter(|e| !s.cycle.edges.contains(e))
        .collect();
    let mut remaining = tree_edges;
    let mut out: Vec<HangingTree> = Vec::new();
    while let Some(&start) = remaining.iter().next() {
        let mut edges = BTreeSet::from([start]);
        remaining.remove(&start);
        let mut frontier: VecDeque<VertexId> = f.curve.edges[&start]
            .ends
            .iter()
            .copied()
            .filter(|v| !s.cycle.vertices.contains(v))
            .collect();
        let mut root = f.curve.edges[&start]
            .ends
            .iter()
            .copied()
            .find(|v| s.cycle.vertices.contains(v));
        while let Some(v) = frontier.pop_front() {
            let adj: Vec<EdgeId> = remaining
                .iter()
                .copied()
                .filter(|e| f.curve.edges[e].ends.contains(&v))
                .collect();
            for e in adj {
                remaining.remove(&e);
                edges.insert(e);
                for w in f.curve.edges[&e].ends {
                    if w == v {
                        continue;
                    }
                    if s.cycle.vertices.contains(&w) {
                        root = Some(w);
                    } else {
                        frontier.push_back(w);
                    }
                }
            }
        }
        let root = root.expect("hanging tree touches the cycle");
        let verts: BTreeSet<VertexId> = edges.iter().flat_map(|e| f.curve.edges[e].ends).collect();
        let criticals = s
            .criticals
            .iter()
            .enumerate()
            .filter(|(_, c)| verts.contains(&c.vertex))
            .map(|(i, _)| i)
            .collect();
        out.push(HangingTree { root, criticals });
    }
    out.sort_by_key(|t| t.root);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum BaseKind {
    TwoLeg,
    YShape { junction: VertexId },
    MultiFlag,
}

enum Obstruction {
    NonGeneric(String),
    Hard(Error),
}

impl From<Error> for Obstruction {
    fn from(e: Error) -> Obstruction {
        Obstruction::Hard(e)
    }
}

/// Certifies a well-spaced genus-1 instance, or reports a one-parameter
/// deformation with a verified sample when the instance is non-generic.
pub fn certify_well_spaced(f: &BalancedFn, degree_bound: u64) -> Result<Genus1Certificate, Error> {
    let s = critical_structure(f)?;
    if well_spaced_sum(&s) < 3 {
        return Err(Error::Precondition("not well-spaced".into()));
    }
    match try_generic_construction(f, &s, degree_bound) {
        Ok(cert) => Ok(Genus1Certificate::Certificate(cert)),
        Err(Obstruction::Hard(e)) => Err(e),
        Err(Obstruction::NonGeneric(gate)) => {
            let (f2, description, eps) = perturb_instance(f, &s, &gate)?;
            let s2 = critical_structure(&f2)?;
            if well_spaced_sum(&s2) < 3 {
                return Err(Error::Construction(format!(
                    "perturbation for non-generic instance breaks well-spacedness ({gate})"
                )));
            }
            let sample = try_generic_construction(&f2, &s2, degree_bound).map_err(|e| match e {
                Obstruction::Hard(e) => Error::Construction(format!(
                    "non-generic instance ({gate}); perturbed sample failed: {e}"
                )),
                Obstruction::NonGeneric(g2) => Error::Construction(format!(
                    "non-generic instance ({gate}); perturbation still non-generic ({g2})"
                )),
            })?;
            Ok(Genus1Certificate::LimitRealizable {
                perturbation: Perturbation { description, epsilon: eps },
                sample_instance: f2,
                sample: Box::new(sample),
            })
        }
    }
}

/// Builds a perturbed instance resolving the named non-genericity.
fn perturb_instance(
    f: &BalancedFn,
    s: &CriticalStructure,
    gate: &str,
) -> Result<(BalancedFn, String, Rat), Error> {
    // smallest positive gap among the relevant lengths bounds the parameter
    let mut lengths: Vec<Rat> = s.criticals.iter().map(|c| c.length.clone()).collect();
    lengths.push(s.cycle_length.clone());
    lengths.push(s.minimal_length.clone());
    lengths.sort();
    let mut gap: Option<Rat> = None;
    for w in lengths.windows(2) {
        let d = &w[1] - &w[0];
        if d > Rat::zero() && gap.as_ref().map(|g| d < *g).unwrap_or(true) {
            gap = Some(d);
        }
    }
    let eps = gap.unwrap_or_else(|| s.minimal_length.clone()) / rat_int(4);

    if gate.contains("share a cycle attachment") {
        // split the shared root: move all its hanging edges onto a new vertex
        // joined to the root by a short contracted stem
        let trees = hanging_trees(f, s);
        let mut roots_seen = BTreeSet::new();
        let shared = trees
            .iter()
            .map(|t| t.root)
            .find(|r| !roots_seen.insert(*r))
            .ok_or_else(|| Error::Construction("no shared root found".into()))?;
        let mut f2 = f.clone();
        let j = f2.curve.add_vertex();
        f2.values.insert(j, f.values[&shared].clone());
        let incident: Vec<EdgeId> = f2
            .curve
            .edges
            .iter()
            .filter(|(id, e)| !s.cycle.edges.contains(id) && e.ends.contains(&shared))
            .map(|(id, _)| *id)
            .collect();
        for e in incident {
            let edge = f2.curve.edges.get_mut(&e).unwrap();
            for end in edge.ends.iter_mut() {
                if *end == shared {
                    *end = j;
                }
            }
        }
        let stem = f2.curve.add_edge(shared, j, eps.clone());
        f2.slopes.insert(Flag::Edge(stem, 0), 0);
        f2.slopes.insert(Flag::Edge(stem, 1), 0);
        f2.validate()?;
        return Ok((
            f2,
            format!(
                "separate the critical trees at {shared} by a contracted stem of length {}; certificates exist for all smaller positive stem lengths",
                rat_to_string(&eps)
            ),
            eps,
        ));
    }

    // otherwise lengthen one tied or offending path: prefer the highest-id
    // member of a tied non-minimal group, then a tied minimal beyond the
    // second, then the longest path
    let mut by_len: BTreeMap<Rat, Vec<usize>> = BTreeMap::new();
    for (i, c) in s.criticals.iter().enumerate() {
        by_len.entry(c.length.clone()).or_default().push(i);
    }
    let tied_nonmin = by_len
        .iter()
        .filter(|(l, v)| **l != s.minimal_length && v.len() >= 2)
        .flat_map(|(_, v)| v.iter().copied())
        .max_by_key(|i| s.criticals[*i].vertex);
    let minimal_group = &by_len[&s.minimal_length];
    let extra_minimal = if minimal_group.len() >= 3 {
        minimal_group.iter().copied().max_by_key(|i| s.criticals[*i].vertex)
    } else {
        None
    };
    let idx = tied_nonmin
        .or(extra_minimal)
        .or_else(|| {
            s.criticals
                .iter()
                .enumerate()
                .max_by_key(|(_, c)| (c.length.clone(), c.vertex))
                .map(|(i, _)| i)
        })
        .unwrap();
    let edge = *s.criticals[idx]
        .path_edges
        .first()
        .ok_or_else(|| Error::Construction("cannot perturb an empty critical path".into()))?;
    let mut f2 = f.clone();
    f2.curve.edges.get_mut(&edge).unwrap().length += &eps;
    Ok((
        f2,
        format!(
            "lengthen edge {edge} (critical path at {}) by {}; certificates exist for all smaller positive values ({gate})",
            s.criticals[idx].vertex,
            rat_to_string(&eps)
        ),
        eps,
    ))
}

fn try_generic_construction(
    f: &BalancedFn,
    s: &CriticalStructure,
    degree_bound: u64,
) -> Result<HModCertificate, Obstruction> {
    let minimal: Vec<usize> = s
        .criticals
        .iter()
        .enumerate()
        .filter(|(_, c)| c.length == s.minimal_length)
        .map(|(i, _)| i)
        .collect();
    if minimal.len() > 2 {
        return Err(Obstruction::NonGeneric("three or more minimal critical paths".into()));
    }
    let mut nonmin: Vec<Rat> = s
        .criticals
        .iter()
        .filter(|c| c.length != s.minimal_length)
        .map(|c| c.length.clone())
        .collect();
    nonmin.sort();
    if nonmin.windows(2).any(|w| w[0] == w[1]) {
        return Err(Obstruction::NonGeneric("tied non-minimal critical path lengths".into()));
    }

    let trees = hanging_trees(f, s);
    let attach_roots: Vec<VertexId> = trees
        .iter()
        .filter(|t| !t.criticals.is_empty())
        .map(|t| t.root)
        .collect();
    let distinct_roots: BTreeSet<VertexId> = attach_roots.iter().copied().collect();
    let multi_attach = distinct_roots.len() >= 2;
    let trunk_of = |t: &HangingTree| -> Rat {
        t.criticals
            .iter()
            .map(|ci| s.criticals[*ci].length.clone())
            .min()
            .expect("tree has criticals")
    };

    let tree_of = |ci: usize| -> usize {
        trees
            .iter()
            .position(|t| t.criticals.contains(&ci))
            .expect("critical belongs to a tree")
    };
    let base = match minimal.len() {
        2 => {
            if tree_of(minimal[0]) == tree_of(minimal[1]) {
                let p0 = &s.criticals[minimal[0]];
                let p1 = &s.criticals[minimal[1]];
                let set0: BTreeSet<VertexId> = p0.path_vertices.iter().copied().collect();
                let junction = *p1
                    .path_vertices
                    .iter()
                    .find(|v| set0.contains(v))
                    .expect("paths in one tree share a vertex");
                BaseKind::YShape { junction }
            } else {
                BaseKind::TwoLeg
            }
        }
        1 => {
            let c = &s.criticals[minimal[0]];
            if c.flag_number < 3 {
                return Err(Obstruction::Hard(Error::Precondition(
                    "single simple minimal path".into(),
                )));
            }
            BaseKind::MultiFlag
        }
        _ => unreachable!(),
    };

    let (arm_len, junction_vertex): (Rat, VertexId) = match &base {
        BaseKind::TwoLeg => (s.minimal_length.clone(), VertexId(u32::MAX)),
        BaseKind::YShape { junction } => {
            let p0 = &s.criticals[minimal[0]];
            let pos = p0.path_vertices.iter().position(|v| v == junction).unwrap();
            let arm: Rat = p0.path_edges[..pos]
                .iter()
                .map(|e| f.curve.edges[e].length.clone())
                .sum();
            (arm, *junction)
        }
        BaseKind::MultiFlag => (Rat::zero(), s.criticals[minimal[0]].vertex),
    };
    let stem_len = &s.minimal_length - &arm_len;
    let heavy_height = &arm_len + rat_int(2) * &stem_len;

    if multi_attach && base != BaseKind::TwoLeg && stem_len.is_zero() {
        return Err(Obstruction::NonGeneric(
            "minimal junction on the cycle with several attachment trees".into(),
        ));
    }

    let hstar: Rat = if !multi_attach {
        heavy_height.clone()
    } else {
        match &base {
            BaseKind::TwoLeg => s.minimal_length.clone(),
            _ => {
                let lambda2 = s
                    .criticals
                    .iter()
                    .filter(|c| c.length != s.minimal_length)
                    .map(|c| c.length.clone())
                    .min()
                    .expect("more attachments exist");
                lambda2.min(heavy_height.clone())
            }
        }
    };

    // at most one climbing arrival per cycle point: the climbing trunk
    // supplies the line-ward coverage at the common height, and two of them
    // would collide in that direction
    let climbing = |t: &HangingTree| -> bool {
        let trunk = trunk_of(t);
        trunk == s.minimal_length || trunk == hstar
    };
    for root in &distinct_roots {
        let climbs = trees
            .iter()
            .filter(|t| t.root == *root && !t.criticals.is_empty() && climbing(t))
            .count();
        if climbs > 1 {
            return Err(Obstruction::NonGeneric(format!(
                "two climbing critical trees share the cycle attachment point {root}"
            )));
        }
    }
    let primary_roots: Vec<VertexId> = {
        let mut seen = BTreeSet::new();
        trees
            .iter()
            .filter(|t| !t.criticals.is_empty() && climbing(t))
            .map(|t| t.root)
            .filter(|r| seen.insert(*r))
            .collect()
    };

    let mut g = G1Builder { b: LiftBuilder::new(&f.curve), chains: Vec::new(), spine: 0 };
    g.b.assign_function_lift(f)?;
    let anchor = g.b.ensure_line_vertex(&s.contracted_value)?;
    let spine = Chain::new(&mut g.b, anchor);
    g.chains.push(spine);

    let mut built: BTreeSet<VertexId> = s.cycle.vertices.clone();
    let mut order: Vec<usize> = (0..s.criticals.len()).collect();
    order.sort_by_key(|i| (s.criticals[*i].length.clone(), s.criticals[*i].vertex));
    // trunk critical of each tree: its shortest path (ties by vertex id)
    let trunk_ids: BTreeSet<usize> = trees
        .iter()
        .filter(|t| !t.criticals.is_empty())
        .map(|t| {
            *t.criticals
                .iter()
                .min_by_key(|ci| (s.criticals[**ci].length.clone(), s.criticals[**ci].vertex))
                .unwrap()
        })
        .collect();
    let pass_a: Vec<usize> = order
        .iter()
        .copied()
        .filter(|i| {
            s.criticals[*i].length == s.minimal_length
                || (trunk_ids.contains(i) && s.criticals[*i].length == hstar)
        })
        .collect();
    let pass_b: Vec<usize> = order.iter().copied().filter(|i| !pass_a.contains(i)).collect();

    for &ci in &pass_a {
        let c = s.criticals[ci].clone();
        if built.contains(&c.vertex) {
            continue;
        }
        let stop = c
            .path_vertices
            .iter()
            .position(|v| built.contains(v))
            .expect("path reaches the cycle");
        let seg_verts: Vec<VertexId> = c.path_vertices[..=stop].to_vec();
        let seg_edges: Vec<EdgeId> = c.path_edges[..stop].to_vec();
        let seg_len: Rat = seg_edges.iter().map(|e| f.curve.edges[e].length.clone()).sum();
        let b_vertex = *seg_verts.last().unwrap();
        let is_minimal = c.length == s.minimal_length;

        if is_minimal {
            let profile = match &base {
                BaseKind::TwoLeg => Profile::ride(g.spine, seg_len.clone()),
                BaseKind::YShape { .. } | BaseKind::MultiFlag => {
                    let junction_d: Rat = match seg_verts.iter().position(|v| *v == junction_vertex)
                    {
                        Some(pos) => seg_edges[..pos]
                            .iter()
                            .map(|e| f.curve.edges[e].length.clone())
                            .sum(),
                        None => seg_len.clone(),
                    };
                    let mut pieces = Vec::new();
                    if junction_d > Rat::zero() {
                        pieces.push(ProfilePiece {
                            from_d: Rat::zero(),
                            to_d: junction_d.clone(),
                            chain: g.spine,
                            from_h: Rat::zero(),
                            slope: 1,
                        });
                    }
                    if seg_len > junction_d {
                        let adjust = &hstar - &s.minimal_length; // stem distance of the slope drop
                        let stem_span = &seg_len - &junction_d;
                        if hstar < heavy_height && adjust < stem_span {
                            pieces.push(ProfilePiece {
                                from_d: junction_d.clone(),
                                to_d: &junction_d + &adjust,
                                chain: g.spine,
                                from_h: arm_len.clone(),
                                slope: 2,
                            });
                            pieces.push(ProfilePiece {
                                from_d: &junction_d + &adjust,
                                to_d: seg_len.clone(),
                                chain: g.spine,
                                from_h: &arm_len + rat_int(2) * &adjust,
                                slope: 1,
                            });
                        } else {
                            pieces.push(ProfilePiece {
                                from_d: junction_d.clone(),
                                to_d: seg_len.clone(),
                                chain: g.spine,
                                from_h: arm_len.clone(),
                                slope: 2,
                            });
                        }
                    }
                    Profile { pieces }
                }
            };
            g.assign_path(&seg_verts, &seg_edges, &profile)?;
            built.extend(seg_verts);
            continue;
        }

        if s.cycle.vertices.contains(&b_vertex) && seg_len == hstar {
            // a primary trunk landing on the cycle at the common height
            let profile = Profile::ride(g.spine, seg_len.clone());
            g.assign_path(&seg_verts, &seg_edges, &profile)?;
            built.extend(seg_verts);
            continue;
        }
        return Err(Obstruction::Hard(Error::Construction(format!(
            "primary material at {} does not land at the common height",
            c.vertex
        ))));
    }

    // --- the cycle ---
    let cyc = cycle_order(f, s)?;
    if primary_roots.len() <= 1 {
        let w = primary_roots.first().copied().unwrap_or(cyc.verts[0]);
        let (averts, aedges) = rotate_cycle(&cyc, w);
        let half = &s.cycle_length / rat_int(2);
        let profile = Profile {
            pieces: vec![
                ProfilePiece {
                    from_d: Rat::zero(),
                    to_d: half.clone(),
                    chain: g.spine,
                    from_h: hstar.clone(),
                    slope: 1,
                },
                ProfilePiece {
                    from_d: half.clone(),
                    to_d: s.cycle_length.clone(),
                    chain: g.spine,
                    from_h: &hstar + &half,
                    slope: -1,
                },
            ],
        };
        let mut verts = averts;
        verts.push(w);
        g.assign_path(&verts, &aedges, &profile)?;
    } else {
        let xstar = g.chains[g.spine].ensure(&mut g.b, &hstar)?;
        for (arc_verts, arc_edges) in arcs_between(&cyc, &primary_roots) {
            let arc_len: Rat = arc_edges
                .iter()
                .map(|e| g.b.dom.extended.edges[e].length.clone())
                .sum();
            let half = &arc_len / rat_int(2);
            let mut fresh = Chain::new(&mut g.b, xstar);
            fresh.ensure(&mut g.b, &half)?;
            let idx = g.chains.len();
            g.chains.push(fresh);
            let profile = Profile {
                pieces: vec![
                    ProfilePiece {
                        from_d: Rat::zero(),
                        to_d: half.clone(),
                        chain: idx,
                        from_h: Rat::zero(),
                        slope: 1,
                    },
                    ProfilePiece {
                        from_d: half.clone(),
                        to_d: arc_len.clone(),
                        chain: idx,
                        from_h: half.clone(),
                        slope: -1,
                    },
                ],
            };
            g.assign_path(&arc_verts, &arc_edges, &profile)?;
        }
    }

    // --- remaining trees and nested paths: ride the image route of their
    // attachment point and fold over a fresh ray there ---
    for &ci in &pass_b {
        let c = s.criticals[ci].clone();
        if built.contains(&c.vertex) {
            continue;
        }
        let stop = c
            .path_vertices
            .iter()
            .position(|v| built.contains(v))
            .expect("path reaches built material");
        let seg_verts: Vec<VertexId> = c.path_vertices[..=stop].to_vec();
        let seg_edges: Vec<EdgeId> = c.path_edges[..stop].to_vec();
        let seg_len: Rat = seg_edges.iter().map(|e| f.curve.edges[e].length.clone()).sum();
        let b_vertex = *seg_verts.last().unwrap();
        let tv = *g
            .b
            .vmap
            .get(&b_vertex)
            .ok_or_else(|| Error::Construction(format!("attachment {b_vertex} has no image")))?;
        let (route_flags, route_len) = target_route(&g.b, anchor, tv)?;
        if seg_len < route_len {
            return Err(Obstruction::NonGeneric(
                "attachment shorter than its host image".into(),
            ));
        }
        if seg_len == route_len {
            return Err(Obstruction::NonGeneric(
                "attachment length ties its host image".into(),
            ));
        }
        let mut fresh = Chain::new(&mut g.b, tv);
        let delta = (&seg_len - &route_len) / rat_int(2);
        fresh.ensure(&mut g.b, &delta)?;
        let fresh_idx = g.chains.len();
        g.chains.push(fresh);
        let route_chain = route_as_chain(&mut g.b, anchor, &route_flags)?;
        let route_idx = g.chains.len();
        g.chains.push(route_chain);
        let profile = Profile {
            pieces: vec![
                ProfilePiece {
                    from_d: Rat::zero(),
                    to_d: route_len.clone(),
                    chain: route_idx,
                    from_h: Rat::zero(),
                    slope: 1,
                },
                ProfilePiece {
                    from_d: route_len.clone(),
                    to_d: &route_len + &delta,
                    chain: fresh_idx,
                    from_h: Rat::zero(),
                    slope: 1,
                },
                ProfilePiece {
                    from_d: &route_len + &delta,
                    to_d: seg_len.clone(),
                    chain: fresh_idx,
                    from_h: delta.clone(),
                    slope: -1,
                },
            ],
        };
        g.assign_path(&seg_verts, &seg_edges, &profile)?;
        built.extend(seg_verts);
    }

    park_twigs(&mut g.b)?;
    park_contracted_rays(&mut g.b, f)?;
    lift_other_components(&mut g.b, f, s)?;

    g.b.finalize(f, degree_bound).map_err(Obstruction::Hard)
}

/// Route between two target vertices through the target tree.
pub(crate) fn target_route(b: &LiftBuilder, from: VertexId, to: VertexId) -> Result<(Vec<Flag>, Rat), Error> {
    route_in_curve(&b.tgt.extended, from, to)
}

pub(crate) fn route_in_curve(
    curve: &crate::graph::TropicalCurve,
    from: VertexId,
    to: VertexId,
) -> Result<(Vec<Flag>, Rat), Error> {
    if from == to {
        return Ok((vec![], Rat::zero()));
    }
    let mut parent: BTreeMap<VertexId, Flag> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(v) = queue.pop_front() {
        for fl in curve.flags_at(v) {
            if let Some(far) = curve.flag_far(fl) {
                if seen.insert(far) {
                    parent.insert(far, fl);
                    queue.push_back(far);
                }
            }
        }
    }
    if !parent.contains_key(&to) {
        return Err(Error::Construction("no route in the target tree".into()));
    }
    let mut flags = Vec::new();
    let mut cur = to;
    while cur != from {
        let fl = parent[&cur];
        flags.push(fl);
        cur = curve.flag_base(fl);
    }
    flags.reverse();
    let len = flags
        .iter()
        .map(|fl| curve.flag_length(*fl).expect("bounded route"))
        .sum();
    Ok((flags, len))
}

/// Wraps an existing target route as a chain for profile assignment.
pub(crate) fn route_as_chain(b: &mut LiftBuilder, from: VertexId, flags: &[Flag]) -> Result<Chain, Error> {
    let mut verts = BTreeMap::from([(Rat::zero(), from)]);
    let mut d = Rat::zero();
    for fl in flags {
        d += b.tgt.extended.flag_length(*fl).expect("bounded route");
        verts.insert(d.clone(), b.tgt.extended.flag_far(*fl).unwrap());
    }
    let top = *verts.values().next_back().unwrap();
    let tail = b
        .tgt
        .extended
        .rays
        .iter()
        .find(|(_, r)| r.base == top)
        .map(|(id, _)| *id)
        .unwrap_or_else(|| b.add_target_ray(top));
    Ok(Chain { verts, tail })
}

struct CycleOrder {
    verts: Vec<VertexId>,
    edges: Vec<EdgeId>,
}

fn cycle_order(f: &BalancedFn, s: &CriticalStructure) -> Result<CycleOrder, Error> {
    let start = *s.cycle.vertices.iter().next().unwrap();
    let mut verts = vec![start];
    let mut edges: Vec<EdgeId> = Vec::new();
    let mut used: BTreeSet<EdgeId> = BTreeSet::new();
    let mut cur = start;
    loop {
        let e = s
            .cycle
            .edges
            .iter()
            .copied()
            .find(|e| !used.contains(e) && f.curve.edges[e].ends.contains(&cur));
        let Some(e) = e else { break };
        used.insert(e);
        let ends = f.curve.edges[&e].ends;
        let nxt = if ends[0] == cur { ends[1] } else { ends[0] };
        edges.push(e);
        if nxt == start {
            break;
        }
        verts.push(nxt);
        cur = nxt;
    }
    if edges.len() != s.cycle.edges.len() {
        return Err(Error::Construction("cycle traversal incomplete".into()));
    }
    Ok(CycleOrder { verts, edges })
}

fn rotate_cycle(cyc: &CycleOrder, w: VertexId) -> (Vec<VertexId>, Vec<EdgeId>) {
    let pos = cyc.verts.iter().position(|v| *v == w).expect("vertex on cycle");
    let n = cyc.verts.len();
    let mut verts = Vec::new();
    let mut edges = Vec::new();
    for i in 0..n {
        verts.push(cyc.verts[(pos + i) % n]);
        edges.push(cyc.edges[(pos + i) % n]);
    }
    (verts, edges)
}

fn arcs_between(cyc: &CycleOrder, roots: &[VertexId]) -> Vec<(Vec<VertexId>, Vec<EdgeId>)> {
    let n = cyc.verts.len();
    let root_pos: Vec<usize> = cyc
        .verts
        .iter()
        .enumerate()
        .filter(|(_, v)| roots.contains(v))
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::new();
    for (k, &p) in root_pos.iter().enumerate() {
        let q = root_pos[(k + 1) % root_pos.len()];
        let mut verts = vec![cyc.verts[p]];
        let mut edges = Vec::new();
        let mut i = p;
        loop {
            edges.push(cyc.edges[i]);
            i = (i + 1) % n;
            verts.push(cyc.verts[i]);
            if i == q {
                break;
            }
        }
        out.push((verts, edges));
    }
    out
}

/// Parks contracted material without a walk (twigs) isometrically on fresh
/// target copies rooted at the image of their attachment.
pub(crate) fn park_twigs(b: &mut LiftBuilder) -> Result<(), Error> {
    loop {
        let mut seed: Option<VertexId> = None;
        for (id, e) in &b.dom.extended.edges {
            if b.edge_walks.contains_key(id) {
                continue;
            }
            for v in e.ends {
                if b.vmap.contains_key(&v) {
                    seed = Some(v);
                    break;
                }
            }
            if seed.is_some() {
                break;
            }
        }
        let Some(root) = seed else {
            return Ok(());
        };
        let root_img = b.vmap[&root];
        let mut queue = VecDeque::from([root]);
        let mut mirror: BTreeMap<VertexId, VertexId> = BTreeMap::from([(root, root_img)]);
        while let Some(v) = queue.pop_front() {
            let mv = mirror[&v];
            let adj: Vec<(EdgeId, crate::graph::Edge)> = b
                .dom
                .extended
                .edges
                .iter()
                .filter(|(id, e)| !b.edge_walks.contains_key(id) && e.ends.contains(&v))
                .map(|(id, e)| (*id, e.clone()))
                .collect();
            for (id, e) in adj {
                if b.edge_walks.contains_key(&id) {
                    continue;
                }
                let far = if e.ends[0] == v { e.ends[1] } else { e.ends[0] };
                if mirror.contains_key(&far) {
                    continue;
                }
                let (te, tv) = b.add_target_edge(mv, e.length.clone());
                mirror.insert(far, tv);
                b.vmap.insert(far, tv);
                let side = if e.ends[0] == v { 0 } else { 1 };
                b.set_edge_walk(Flag::Edge(id, side), vec![Flag::Edge(te, 0)], 1)?;
                queue.push_back(far);
            }
        }
    }
}

pub(crate) fn park_contracted_rays(b: &mut LiftBuilder, f: &BalancedFn) -> Result<(), Error> {
    for (id, ray) in f.curve.rays.clone() {
        if f.slopes[&Flag::Ray(id)] != 0 || b.ray_walks.contains_key(&id) {
            continue;
        }
        let base_img = *b
            .vmap
            .get(&ray.base)
            .ok_or_else(|| Error::Construction(format!("no image for ray base {}", ray.base)))?;
        let tr = b.add_target_ray(base_img);
        b.set_ray_walk(id, vec![Flag::Ray(tr)], 1)?;
    }
    Ok(())
}

/// Contracted components away from the cycle are trees; the genus-0 builder
/// handles them.
fn lift_other_components(
    b: &mut LiftBuilder,
    f: &BalancedFn,
    s: &CriticalStructure,
) -> Result<(), Error> {
    for (vs, es) in f.contracted_components() {
        if s.cycle.vertices.iter().all(|v| vs.contains(v)) {
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
        let anchor = b.ensure_line_vertex(&c)?;
        crate::realize0::build_tree_for(b, es, tips, anchor)?;
    }
    Ok(())
}

// ---- bounded necessity probe ---------------------------------------------

/// Exhaustively searches a bounded family of modifications for a verifying
/// certificate: target shapes are a pre-subdivided spine over the contracted
/// value with up to `depth` extra pre-subdivided rays at candidate heights;
/// contracted domain edges are pre-split at midpoints; lift slopes stay at
/// or below `max_slope`. Returns the first certificate found. A bounded
/// falsification probe, not a completeness claim.
pub fn necessity_probe(
    f: &BalancedFn,
    depth: usize,
    max_slope: u64,
    degree_bound: u64,
) -> Result<Option<HModCertificate>, Error> {
    let s = critical_structure(f)?;
    let mut f2 = f.clone();
    for e in f.curve.edges.keys() {
        if f.edge_contracted(*e) {
            let len = f.curve.edges[e].length.clone();
            let (nf, _) = f2.subdivide(&CurvePoint::OnEdge(*e, len / rat_int(2)))?;
            f2 = nf;
        }
    }
    let mut cand: BTreeSet<Rat> = BTreeSet::new();
    let lengths: Vec<Rat> = s
        .criticals
        .iter()
        .map(|c| c.length.clone())
        .chain([s.cycle_length.clone()])
        .chain(s.cycle.edges.iter().map(|e| f.curve.edges[e].length.clone()))
        .collect();
    for a in &lengths {
        cand.insert(a.clone());
        cand.insert(a / rat_int(2));
        cand.insert(a * rat_int(2));
        for b in &lengths {
            cand.insert((a + b) / rat_int(2));
            cand.insert(a + b);
        }
    }
    cand.retain(|h| *h > Rat::zero());
    let heights: Vec<Rat> = cand.iter().cloned().take(16).collect();
    // extra rays only attach where certificates plausibly need them
    let mut attach: BTreeSet<Rat> = BTreeSet::new();
    for c in &s.criticals {
        attach.insert(c.length.clone());
        attach.insert(&c.length * rat_int(2));
        for d in &s.criticals {
            attach.insert((&c.length + &d.length) / rat_int(2));
        }
    }
    attach.retain(|h| *h > Rat::zero());
    let attach_heights: Vec<Rat> = attach.into_iter().take(8).collect();
    let offsets: Vec<Rat> = heights.clone();

    let mut shapes: Vec<Vec<Rat>> = vec![vec![]];
    for k in 1..=depth.min(3) {
        let mut pick = vec![0usize; k];
        'outer: loop {
            shapes.push(pick.iter().map(|i| attach_heights[*i].clone()).collect());
            let mut j = k;
            loop {
                if j == 0 {
                    break 'outer;
                }
                j -= 1;
                if pick[j] + 1 < attach_heights.len() {
                    pick[j] += 1;
                    for l in j + 1..k {
                        pick[l] = pick[j];
                    }
                    break;
                }
            }
        }
    }

    let mut global_budget = 150_000usize;
    for shape in shapes {
        if global_budget == 0 {
            break;
        }
        if let Some(cert) = probe_shape(
            &f2,
            &s,
            &shape,
            &heights,
            &offsets,
            max_slope,
            degree_bound,
            &mut global_budget,
        )? {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn probe_shape(
    f: &BalancedFn,
    s: &CriticalStructure,
    shape: &[Rat],
    heights: &[Rat],
    offsets: &[Rat],
    max_slope: u64,
    degree_bound: u64,
    global_budget: &mut usize,
) -> Result<Option<HModCertificate>, Error> {
    let mut b = LiftBuilder::new(&f.curve);
    b.assign_function_lift(f)?;
    let anchor = b.ensure_line_vertex(&s.contracted_value)?;
    let mut spine = Chain::new(&mut b, anchor);
    for h in heights {
        spine.ensure(&mut b, h)?;
    }
    for h in shape {
        let at = spine.ensure(&mut b, h)?;
        let mut extra = Chain::new(&mut b, at);
        for o in offsets.iter().take(6) {
            extra.ensure(&mut b, o)?;
        }
    }
    let contracted: Vec<EdgeId> = f
        .curve
        .edges
        .keys()
        .copied()
        .filter(|e| f.edge_contracted(*e))
        .collect();
    let mut budget = 4_000usize.min(*global_budget);
    let before = budget;
    let found = search_assignments(&b, f, &contracted, max_slope, degree_bound, &mut budget);
    *global_budget -= before - budget;
    Ok(found)
}

fn search_assignments(
    base: &LiftBuilder,
    f: &BalancedFn,
    edges: &[EdgeId],
    max_slope: u64,
    degree_bound: u64,
    budget: &mut usize,
) -> Option<HModCertificate> {
    fn rec(
        b: &LiftBuilder,
        f: &BalancedFn,
        remaining: &[EdgeId],
        max_slope: u64,
        degree_bound: u64,
        budget: &mut usize,
    ) -> Option<HModCertificate> {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        // prefer an edge that finishes a vertex, enabling purity pruning
        let unassigned_at = |v: &VertexId| -> usize {
            remaining
                .iter()
                .filter(|e| f.curve.edges[e].ends.contains(v))
                .count()
        };
        let pick = remaining
            .iter()
            .copied()
            .filter(|e| f.curve.edges[e].ends.iter().any(|v| b.vmap.contains_key(v)))
            .min_by_key(|e| {
                f.curve.edges[e]
                    .ends
                    .iter()
                    .filter(|v| b.vmap.contains_key(v))
                    .map(unassigned_at)
                    .min()
                    .unwrap_or(usize::MAX)
            });
        let Some(e) = pick else {
            if remaining.is_empty() {
                let mut attempt = b.clone();
                return attempt.finalize(f, degree_bound).ok();
            }
            return None;
        };
        let rest: Vec<EdgeId> = remaining.iter().copied().filter(|x| *x != e).collect();
        let ends = f.curve.edges[&e].ends;
        let from = if b.vmap.contains_key(&ends[0]) { ends[0] } else { ends[1] };
        let from_img = b.vmap[&from];
        let len = f.curve.edges[&e].length.clone();
        for slope in 1..=max_slope {
            let target_len = rat_int(slope as i64) * &len;
            for walk in walks_from(b, from_img, &target_len, 40) {
                let mut nb = b.clone();
                let side = if ends[0] == from { 0 } else { 1 };
                if nb.set_edge_walk(Flag::Edge(e, side), walk.clone(), slope).is_err() {
                    continue;
                }
                let far_v = if side == 0 { ends[1] } else { ends[0] };
                let end_vertex = nb.tgt.extended.flag_far(*walk.last().unwrap()).unwrap();
                match nb.vmap.get(&far_v) {
                    Some(old) if *old != end_vertex => continue,
                    _ => {
                        nb.vmap.insert(far_v, end_vertex);
                    }
                }
                // line directions can never be completed: a finished vertex
                // with unequal line degrees kills the whole subtree
                if !line_purity_ok(&nb, f, &rest, ends[0])
                    || !line_purity_ok(&nb, f, &rest, ends[1])
                {
                    continue;
                }
                if let Some(cert) = rec(&nb, f, &rest, max_slope, degree_bound, budget) {
                    return Some(cert);
                }
                if *budget == 0 {
                    return None;
                }
            }
        }
        None
    }
    rec(base, f, edges, max_slope, degree_bound, budget)
}

/// A fully-assigned vertex must already have equal local degrees over every
/// anchored (line) direction; those can never be raised by completion.
fn line_purity_ok(
    b: &LiftBuilder,
    f: &BalancedFn,
    remaining: &[EdgeId],
    v: VertexId,
) -> bool {
    let fully = !remaining
        .iter()
        .any(|e| f.curve.edges[e].ends.contains(&v));
    if !fully {
        return true;
    }
    let Some(&w) = b.vmap.get(&v) else { return true };
    let dirs = b.tgt.extended.flags_at(w);
    let mut line_degs: Vec<u64> = Vec::new();
    let mut max_deg = 0u64;
    for dir in dirs {
        let mut deg = 0u64;
        for fl in b.dom.extended.flags_at(v) {
            if let Some((seg, sl)) = b.probe_first_seg(fl) {
                if seg == dir {
                    deg += sl;
                }
            }
        }
        max_deg = max_deg.max(deg);
        if anchored_flag(b, dir) {
            line_degs.push(deg);
        }
    }
    line_degs.iter().all(|d| *d == max_deg)
}

/// Non-backtracking walks of exact total length from a vertex, staying off
/// the anchored line.
fn walks_from(b: &LiftBuilder, from: VertexId, total: &Rat, cap: usize) -> Vec<Vec<Flag>> {
    fn rec(
        b: &LiftBuilder,
        cur: Flag,
        remaining: Rat,
        walk: &mut Vec<Flag>,
        out: &mut Vec<Vec<Flag>>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        let Some(len) = b.tgt.extended.flag_length(cur) else {
            return;
        };
        if len > remaining {
            return;
        }
        walk.push(cur);
        let rem = &remaining - &len;
        if rem.is_zero() {
            out.push(walk.clone());
        } else {
            let far = b.tgt.extended.flag_far(cur).unwrap();
            for g in b.tgt.extended.flags_at(far) {
                if Some(g) != cur.reversed() && !anchored_flag(b, g) {
                    rec(b, g, rem.clone(), walk, out, cap);
                }
            }
        }
        walk.pop();
    }
    let mut out = Vec::new();
    let mut walk = Vec::new();
    for g in b.tgt.extended.flags_at(from) {
        if !anchored_flag(b, g) {
            rec(b, g, total.clone(), &mut walk, &mut out, cap);
        }
    }
    out
}

fn anchored_flag(b: &LiftBuilder, g: Flag) -> bool {
    match g {
        Flag::Edge(e, _) => b.tgt.is_anchored_edge(e),
        Flag::Ray(r) => b.tgt.is_anchored_ray(r),
    }
}
