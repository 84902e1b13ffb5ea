//! Modifications of tropical curves (iterated ray attachments), certified
//! lifts, and the independent certificate verifier.
//!
//! A modification keeps the original curve as an isometrically embedded,
//! possibly subdivided, "anchored" part of a larger curve; everything else is
//! a forest of attached trees, each meeting the anchored part in one vertex
//! and running out into rays. A realizability certificate consists of a
//! domain modification, a target modification of the real line, a finite
//! harmonic lift between the extended curves making the retraction square
//! commute, and a Hurwitz witness per vertex of the extended domain.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::balanced::BalancedFn;
use crate::error::Error;
use crate::graph::{
    CurvePoint, EdgeId, Flag, HighPiece, RayId, Subdivision, TropicalCurve, VertexId,
};
use crate::harmonic::{FlagImage, HarmonicMap};
use crate::hurwitz::{extract_local_problem, solve, verify_witness, HurwitzWitness, SolveOutcome};
use crate::rat::{rat_int, rat_to_string, Rat};
use num_traits::Zero;

pub const LINE_BASE: VertexId = VertexId(0);
pub const LINE_POS: RayId = RayId(0);
pub const LINE_NEG: RayId = RayId(1);

/// Signed coordinate of a point on the canonical line curve.
pub fn line_coordinate(p: &CurvePoint) -> Result<Rat, Error> {
    match p {
        CurvePoint::Vertex(v) if *v == LINE_BASE => Ok(Rat::zero()),
        CurvePoint::OnRay(r, t) if *r == LINE_POS => Ok(t.clone()),
        CurvePoint::OnRay(r, t) if *r == LINE_NEG => Ok(-t.clone()),
        _ => Err(Error::BadPoint(format!("not a point of the line curve: {p}"))),
    }
}

/// The point of the canonical line curve with the given coordinate.
pub fn line_point(c: &Rat) -> CurvePoint {
    if c.is_zero() {
        CurvePoint::Vertex(LINE_BASE)
    } else if *c > Rat::zero() {
        CurvePoint::OnRay(LINE_POS, c.clone())
    } else {
        CurvePoint::OnRay(LINE_NEG, -c.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Host {
    Edge(EdgeId),
    Ray(RayId),
}

/// Anchoring of an extended edge inside the base curve: it covers host
/// coordinates `[start, start + length]`; when `reversed`, the extended
/// edge's `ends[0]` sits at the upper end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeAnchor {
    pub host: Host,
    pub start: Rat,
    pub reversed: bool,
}

/// Anchoring of an extended ray as the terminal piece of a base ray.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RayAnchor {
    pub host: RayId,
    pub start: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modification {
    pub base: TropicalCurve,
    pub extended: TropicalCurve,
    pub vertex_anchor: BTreeMap<VertexId, CurvePoint>,
    pub edge_anchor: BTreeMap<EdgeId, EdgeAnchor>,
    pub ray_anchor: BTreeMap<RayId, RayAnchor>,
}

/// An added tree of a modification, reported by its attachment vertex.
#[derive(Debug, Clone)]
pub struct AddedComponent {
    pub attachment: VertexId,
    pub vertices: BTreeSet<VertexId>,
    pub edges: BTreeSet<EdgeId>,
    pub rays: BTreeSet<RayId>,
}

impl Modification {
    pub fn trivial(base: &TropicalCurve) -> Modification {
        Modification {
            base: base.clone(),
            extended: base.clone(),
            vertex_anchor: base
                .vertices
                .iter()
                .map(|&v| (v, CurvePoint::Vertex(v)))
                .collect(),
            edge_anchor: base
                .edges
                .keys()
                .map(|&e| (e, EdgeAnchor { host: Host::Edge(e), start: Rat::zero(), reversed: false }))
                .collect(),
            ray_anchor: base
                .rays
                .keys()
                .map(|&r| (r, RayAnchor { host: r, start: Rat::zero() }))
                .collect(),
        }
    }

    pub fn is_anchored_vertex(&self, v: VertexId) -> bool {
        self.vertex_anchor.contains_key(&v)
    }

    pub fn is_anchored_edge(&self, e: EdgeId) -> bool {
        self.edge_anchor.contains_key(&e)
    }

    pub fn is_anchored_ray(&self, r: RayId) -> bool {
        self.ray_anchor.contains_key(&r)
    }

    /// Host coordinate of a point on an anchored extended edge, measured in
    /// the host's own coordinates.
    fn host_coord(&self, anchor: &EdgeAnchor, len: &Rat, offset: &Rat) -> Rat {
        if anchor.reversed {
            &anchor.start + (len - offset)
        } else {
            &anchor.start + offset
        }
    }

    fn host_point(&self, host: Host, coord: &Rat) -> Result<CurvePoint, Error> {
        match host {
            Host::Edge(e) => self.base.normalize_point(&CurvePoint::OnEdge(e, coord.clone())),
            Host::Ray(r) => self.base.normalize_point(&CurvePoint::OnRay(r, coord.clone())),
        }
    }

    /// Retraction of a point of the extended curve to the base: anchored
    /// material maps isometrically, added trees collapse to their attachment.
    pub fn retract_point(&self, p: &CurvePoint) -> Result<CurvePoint, Error> {
        match self.extended.normalize_point(p)? {
            CurvePoint::Vertex(v) => {
                if let Some(a) = self.vertex_anchor.get(&v) {
                    Ok(a.clone())
                } else {
                    let att = self.attachment_of(v)?;
                    Ok(self.vertex_anchor[&att].clone())
                }
            }
            CurvePoint::OnEdge(e, t) => {
                if let Some(a) = self.edge_anchor.get(&e) {
                    let len = self.extended.edges[&e].length.clone();
                    let c = self.host_coord(a, &len, &t);
                    self.host_point(a.host, &c)
                } else {
                    let v = self.extended.edges[&e].ends[0];
                    self.retract_point(&CurvePoint::Vertex(v))
                }
            }
            CurvePoint::OnRay(r, t) => {
                if let Some(a) = self.ray_anchor.get(&r) {
                    let c = &a.start + &t;
                    self.base.normalize_point(&CurvePoint::OnRay(a.host, c))
                } else {
                    let v = self.extended.rays[&r].base;
                    self.retract_point(&CurvePoint::Vertex(v))
                }
            }
        }
    }

    /// The anchored vertex an added vertex retracts to.
    fn attachment_of(&self, v: VertexId) -> Result<VertexId, Error> {
        if self.is_anchored_vertex(v) {
            return Ok(v);
        }
        let mut seen = BTreeSet::from([v]);
        let mut queue = VecDeque::from([v]);
        while let Some(x) = queue.pop_front() {
            for f in self.extended.flags_at(x) {
                if let Flag::Edge(e, _) = f {
                    if self.is_anchored_edge(e) {
                        continue;
                    }
                    let far = self.extended.flag_far(f).unwrap();
                    if self.is_anchored_vertex(far) {
                        return Ok(far);
                    }
                    if seen.insert(far) {
                        queue.push_back(far);
                    }
                }
            }
        }
        Err(Error::InvalidMap(format!("added vertex {v} not attached to the base part")))
    }

    /// Subdivides the extended curve at an interior point, splitting anchors.
    pub fn subdivide_at(&self, at: &CurvePoint) -> Result<(Modification, Subdivision), Error> {
        let at = self.extended.normalize_point(at)?;
        let (curve, sub) = self.extended.subdivide(&at)?;
        let mut out = self.clone();
        out.extended = curve;
        match &at {
            CurvePoint::OnEdge(e, t) => {
                if let Some(a) = self.edge_anchor.get(e) {
                    let len = self.extended.edges[e].length.clone();
                    out.edge_anchor.remove(e);
                    let cut_coord = self.host_coord(a, &len, t);
                    if a.reversed {
                        out.edge_anchor.insert(
                            sub.low_edge,
                            EdgeAnchor { host: a.host, start: cut_coord.clone(), reversed: true },
                        );
                        let HighPiece::Edge(high) = sub.high else { unreachable!() };
                        out.edge_anchor.insert(
                            high,
                            EdgeAnchor { host: a.host, start: a.start.clone(), reversed: true },
                        );
                    } else {
                        out.edge_anchor.insert(
                            sub.low_edge,
                            EdgeAnchor { host: a.host, start: a.start.clone(), reversed: false },
                        );
                        let HighPiece::Edge(high) = sub.high else { unreachable!() };
                        out.edge_anchor.insert(
                            high,
                            EdgeAnchor { host: a.host, start: cut_coord.clone(), reversed: false },
                        );
                    }
                    out.vertex_anchor
                        .insert(sub.new_vertex, self.host_point(a.host, &cut_coord)?);
                }
            }
            CurvePoint::OnRay(r, t) => {
                if let Some(a) = self.ray_anchor.get(r) {
                    out.ray_anchor.remove(r);
                    let cut_coord = &a.start + t;
                    out.edge_anchor.insert(
                        sub.low_edge,
                        EdgeAnchor { host: Host::Ray(a.host), start: a.start.clone(), reversed: false },
                    );
                    let HighPiece::Ray(high) = sub.high else { unreachable!() };
                    out.ray_anchor
                        .insert(high, RayAnchor { host: a.host, start: cut_coord.clone() });
                    out.vertex_anchor.insert(
                        sub.new_vertex,
                        self.base
                            .normalize_point(&CurvePoint::OnRay(a.host, cut_coord))?,
                    );
                }
            }
            CurvePoint::Vertex(_) => unreachable!(),
        }
        Ok((out, sub))
    }

    /// Ensures the given extended point is a vertex, subdividing if interior.
    pub fn ensure_vertex(&self, at: &CurvePoint) -> Result<(Modification, VertexId), Error> {
        match self.extended.normalize_point(at)? {
            CurvePoint::Vertex(v) => Ok((self.clone(), v)),
            p => {
                let (m, sub) = self.subdivide_at(&p)?;
                Ok((m, sub.new_vertex))
            }
        }
    }

    /// Attaches one new (added) ray at a point of the extended curve.
    pub fn attach_ray(&self, at: &CurvePoint) -> Result<(Modification, RayId), Error> {
        let (mut m, v) = self.ensure_vertex(at)?;
        let r = m.extended.add_ray(v);
        Ok((m, r))
    }

    /// Adds an added edge from an existing vertex to a brand new vertex.
    pub fn add_added_edge(&mut self, from: VertexId, length: Rat) -> (EdgeId, VertexId) {
        let w = self.extended.add_vertex();
        let e = self.extended.add_edge(from, w, length);
        (e, w)
    }

    /// The connected components of the added part.
    pub fn added_components(&self) -> Result<Vec<AddedComponent>, Error> {
        let added_vs: BTreeSet<VertexId> = self
            .extended
            .vertices
            .iter()
            .copied()
            .filter(|v| !self.is_anchored_vertex(*v))
            .collect();
        let mut seen: BTreeSet<VertexId> = BTreeSet::new();
        let mut out = Vec::new();
        for &start in &added_vs {
            if seen.contains(&start) {
                continue;
            }
            let mut vs = BTreeSet::from([start]);
            let mut queue = VecDeque::from([start]);
            let mut attachments = BTreeSet::new();
            while let Some(v) = queue.pop_front() {
                for f in self.extended.flags_at(v) {
                    if let Flag::Edge(e, _) = f {
                        if self.is_anchored_edge(e) {
                            continue;
                        }
                        let far = self.extended.flag_far(f).unwrap();
                        if self.is_anchored_vertex(far) {
                            attachments.insert(far);
                        } else if vs.insert(far) {
                            queue.push_back(far);
                        }
                    }
                }
            }
            seen.extend(vs.iter().copied());
            if attachments.len() != 1 {
                return Err(Error::InvalidMap(format!(
                    "added component at {start} attaches at {} points",
                    attachments.len()
                )));
            }
            let attachment = *attachments.iter().next().unwrap();
            let edges = self
                .extended
                .edges
                .iter()
                .filter(|(id, e)| {
                    !self.is_anchored_edge(**id)
                        && (vs.contains(&e.ends[0]) || vs.contains(&e.ends[1]))
                })
                .map(|(id, _)| *id)
                .collect();
            let rays = self
                .extended
                .rays
                .iter()
                .filter(|(id, r)| !self.is_anchored_ray(**id) && (vs.contains(&r.base) || r.base == attachment))
                .map(|(id, _)| *id)
                .collect();
            out.push(AddedComponent { attachment, vertices: vs, edges, rays });
        }
        // added rays based directly at anchored vertices form their own
        // single-ray components
        for (id, r) in &self.extended.rays {
            if self.is_anchored_ray(*id) || !self.is_anchored_vertex(r.base) {
                continue;
            }
            out.push(AddedComponent {
                attachment: r.base,
                vertices: BTreeSet::new(),
                edges: BTreeSet::new(),
                rays: BTreeSet::from([*id]),
            });
        }
        Ok(out)
    }

    /// Full structural validation of the modification.
    pub fn validate(&self) -> Result<(), Error> {
        for c in [&self.base, &self.extended] {
            let rep = c.validate();
            if !rep.is_valid() {
                return Err(Error::InvalidCurve(rep.problems.join("; ")));
            }
        }
        // every base vertex appears exactly once among vertex anchors
        let mut base_vertex_hits: BTreeMap<VertexId, usize> = BTreeMap::new();
        for (v, a) in &self.vertex_anchor {
            if !self.extended.vertices.contains(v) {
                return Err(Error::InvalidMap(format!("anchor for missing vertex {v}")));
            }
            let a = self.base.normalize_point(a)?;
            if let CurvePoint::Vertex(b) = a {
                *base_vertex_hits.entry(b).or_insert(0) += 1;
            }
        }
        for v in &self.base.vertices {
            if base_vertex_hits.get(v).copied().unwrap_or(0) != 1 {
                return Err(Error::InvalidMap(format!(
                    "base vertex {v} is anchored {} times",
                    base_vertex_hits.get(v).copied().unwrap_or(0)
                )));
            }
        }
        // anchored edges tile their hosts
        let mut by_host: BTreeMap<Host, Vec<(Rat, Rat, EdgeId, bool)>> = BTreeMap::new();
        for (e, a) in &self.edge_anchor {
            let edge = self
                .extended
                .edges
                .get(e)
                .ok_or_else(|| Error::InvalidMap(format!("anchor for missing edge {e}")))?;
            by_host.entry(a.host).or_default().push((
                a.start.clone(),
                &a.start + &edge.length,
                *e,
                a.reversed,
            ));
        }
        let mut ray_tail: BTreeMap<RayId, Vec<(Rat, RayId)>> = BTreeMap::new();
        for (r, a) in &self.ray_anchor {
            if !self.extended.rays.contains_key(r) {
                return Err(Error::InvalidMap(format!("anchor for missing ray {r}")));
            }
            ray_tail.entry(a.host).or_default().push((a.start.clone(), *r));
        }
        for (id, e) in &self.base.edges {
            let mut pieces = by_host.remove(&Host::Edge(*id)).unwrap_or_default();
            pieces.sort_by(|a, b| a.0.cmp(&b.0));
            let mut cur = Rat::zero();
            for (s, t, pe, rev) in &pieces {
                if *s != cur {
                    return Err(Error::InvalidMap(format!(
                        "base edge {id} not tiled contiguously at {}",
                        rat_to_string(s)
                    )));
                }
                // endpoint anchors must match
                let piece = &self.extended.edges[pe];
                let (lo_v, hi_v) = if *rev {
                    (piece.ends[1], piece.ends[0])
                } else {
                    (piece.ends[0], piece.ends[1])
                };
                let lo_expect = self.host_point(Host::Edge(*id), s)?;
                let hi_expect = self.host_point(Host::Edge(*id), t)?;
                if self.vertex_anchor.get(&lo_v) != Some(&lo_expect)
                    || self.vertex_anchor.get(&hi_v) != Some(&hi_expect)
                {
                    return Err(Error::InvalidMap(format!(
                        "piece {pe} of base edge {id} has inconsistent endpoint anchors"
                    )));
                }
                cur = t.clone();
            }
            if cur != e.length {
                return Err(Error::InvalidMap(format!("base edge {id} not fully covered")));
            }
        }
        for (id, _) in &self.base.rays {
            let mut pieces = by_host.remove(&Host::Ray(*id)).unwrap_or_default();
            pieces.sort_by(|a, b| a.0.cmp(&b.0));
            let mut cur = Rat::zero();
            for (s, t, _, _) in &pieces {
                if *s != cur {
                    return Err(Error::InvalidMap(format!("base ray {id} not tiled contiguously")));
                }
                cur = t.clone();
            }
            let tails = ray_tail.remove(id).unwrap_or_default();
            if tails.len() != 1 || tails[0].0 != cur {
                return Err(Error::InvalidMap(format!("base ray {id} has no matching tail piece")));
            }
        }
        if !by_host.is_empty() || !ray_tail.is_empty() {
            return Err(Error::InvalidMap("anchors referencing unknown hosts".into()));
        }
        // added part: forest, one attachment per component, no bounded dead ends
        let comps = self.added_components()?;
        for comp in &comps {
            let b1 = comp.edges.len() + 1;
            if b1 != comp.vertices.len() + 1 {
                return Err(Error::InvalidMap(format!(
                    "added component at {} is not a tree",
                    comp.attachment
                )));
            }
            for &v in &comp.vertices {
                let deg = self.extended.edge_degree(v);
                let rays = self.extended.rays.values().filter(|r| r.base == v).count();
                if deg <= 1 && rays == 0 {
                    return Err(Error::InvalidMap(format!(
                        "added vertex {v} is a bounded dead end"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The anchored part of the extended curve, as a curve sharing ids (a
    /// subdivision of the base).
    pub fn refined_base(&self) -> TropicalCurve {
        TropicalCurve {
            vertices: self.vertex_anchor.keys().copied().collect(),
            edges: self
                .extended
                .edges
                .iter()
                .filter(|(id, _)| self.is_anchored_edge(**id))
                .map(|(id, e)| (*id, e.clone()))
                .collect(),
            rays: self
                .extended
                .rays
                .iter()
                .filter(|(id, _)| self.is_anchored_ray(**id))
                .map(|(id, r)| (*id, r.clone()))
                .collect(),
        }
    }

    /// The harmonic retraction extended -> refined base: identity on the
    /// anchored part, contraction on added trees.
    pub fn retraction(&self) -> Result<HarmonicMap, Error> {
        let target = self.refined_base();
        let mut vertex_map = BTreeMap::new();
        for &v in &self.extended.vertices {
            let w = if self.is_anchored_vertex(v) { v } else { self.attachment_of(v)? };
            vertex_map.insert(v, w);
        }
        let mut flag_map = BTreeMap::new();
        for f in self.extended.all_flags() {
            let anchored = match f {
                Flag::Edge(e, _) => self.is_anchored_edge(e),
                Flag::Ray(r) => self.is_anchored_ray(r),
            };
            flag_map.insert(f, if anchored { FlagImage::To(f, 1) } else { FlagImage::Contracted });
        }
        Ok(HarmonicMap { source: self.extended.clone(), target, vertex_map, flag_map })
    }

    /// Induces a function on the extended curve from one on the base:
    /// anchored material inherits values and slopes, added trees are constant.
    pub fn induce_function(&self, f: &BalancedFn) -> Result<BalancedFn, Error> {
        if f.curve != self.base {
            return Err(Error::InvalidFunction("function not on the modification base".into()));
        }
        let mut values = BTreeMap::new();
        for &v in &self.extended.vertices {
            let p = self.retract_point(&CurvePoint::Vertex(v))?;
            values.insert(v, f.value_at(&p)?);
        }
        let mut slopes = BTreeMap::new();
        for fl in self.extended.all_flags() {
            let s = match fl {
                Flag::Edge(e, side) => match self.edge_anchor.get(&e) {
                    None => 0,
                    Some(a) => {
                        let host_slope = match a.host {
                            Host::Edge(h) => f.slopes[&Flag::Edge(h, 0)],
                            Host::Ray(h) => f.slopes[&Flag::Ray(h)],
                        };
                        let sign = if (side == 1) ^ a.reversed { -1 } else { 1 };
                        sign * host_slope
                    }
                },
                Flag::Ray(r) => match self.ray_anchor.get(&r) {
                    None => 0,
                    Some(a) => f.slopes[&Flag::Ray(a.host)],
                },
            };
            slopes.insert(fl, s);
        }
        Ok(BalancedFn { curve: self.extended.clone(), values, slopes })
    }
}

/// A realizability certificate: the commuting square of modifications and
/// the finite harmonic lift, plus per-vertex Hurwitz witnesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HModCertificate {
    pub domain_mod: Modification,
    pub target_mod: Modification,
    pub lift: HarmonicMap,
    pub witnesses: BTreeMap<VertexId, HurwitzWitness>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CertVerdict {
    Accept,
    Reject { clause: String, location: String },
}

impl CertVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, CertVerdict::Accept)
    }

    pub fn describe(&self) -> String {
        match self {
            CertVerdict::Accept => "ACCEPT".to_string(),
            CertVerdict::Reject { clause, location } => {
                format!("REJECT: {clause} at {location}")
            }
        }
    }
}

fn reject(clause: &str, location: impl std::fmt::Display) -> CertVerdict {
    CertVerdict::Reject { clause: clause.to_string(), location: location.to_string() }
}

impl HModCertificate {
    /// Coordinate on the line of the retraction of an extended target vertex.
    pub fn target_coord(&self, v: VertexId) -> Result<Rat, Error> {
        let p = self.target_mod.retract_point(&CurvePoint::Vertex(v))?;
        line_coordinate(&p)
    }
}

/// Checks every clause of the certificate definition and reports the first
/// failure with its location. Witnesses are re-solved only when absent.
pub fn verify_certificate(f: &BalancedFn, cert: &HModCertificate, degree_bound: u64) -> CertVerdict {
    // instance sanity
    if let Err(e) = f.validate() {
        return reject("instance invalid", e);
    }
    if !f.is_balanced().is_balanced() {
        return reject("instance not balanced", "function");
    }
    // base matching
    if cert.domain_mod.base != f.curve {
        return reject("base mismatch", "domain modification");
    }
    if cert.target_mod.base != TropicalCurve::line() {
        return reject("base mismatch", "target modification");
    }
    // modification structure
    if let Err(e) = cert.domain_mod.validate() {
        return reject("domain modification invalid", e);
    }
    if let Err(e) = cert.target_mod.validate() {
        return reject("target modification invalid", e);
    }
    // lift structure
    if cert.lift.source != cert.domain_mod.extended {
        return reject("lift source mismatch", "lift");
    }
    if cert.lift.target != cert.target_mod.extended {
        return reject("lift target mismatch", "lift");
    }
    if let Err(e) = cert.lift.validate() {
        return reject("lift invalid", e);
    }
    if !cert.lift.is_refined() {
        return reject("lift not in refined form", "lift");
    }
    if !cert.lift.is_finite() {
        let bad = cert
            .lift
            .flag_map
            .iter()
            .find(|(_, i)| matches!(i, FlagImage::Contracted))
            .map(|(f, _)| f.key())
            .unwrap_or_default();
        return reject("lift not finite", bad);
    }
    match cert.lift.is_harmonic() {
        Err(e) => return reject("lift harmonicity check failed", e),
        Ok(rep) => {
            if let Some((v, d1, d2)) = rep.impure.first() {
                return reject(
                    "not harmonic",
                    format!("{v} (directions {} vs {})", d1.key(), d2.key()),
                );
            }
            if let Some(g) = rep.uncovered.first() {
                return reject("not harmonic (not surjective)", g.key());
            }
        }
    }
    // the square commutes: vertex values agree...
    for &v in &cert.domain_mod.extended.vertices {
        let below = match cert
            .domain_mod
            .retract_point(&CurvePoint::Vertex(v))
            .and_then(|p| f.value_at(&p))
        {
            Ok(x) => x,
            Err(e) => return reject("square check failed", e),
        };
        let above = match cert.target_coord(cert.lift.image_vertex(v)) {
            Ok(x) => x,
            Err(e) => return reject("square check failed", e),
        };
        if below != above {
            return reject(
                "square does not commute",
                format!("{v}: F gives {}, lift gives {}", rat_to_string(&below), rat_to_string(&above)),
            );
        }
    }
    // ...and per-edge slope bookkeeping matches
    for (id, e) in &cert.domain_mod.extended.edges {
        let c0 = cert.target_coord(cert.lift.image_vertex(e.ends[0])).unwrap();
        let c1 = cert.target_coord(cert.lift.image_vertex(e.ends[1])).unwrap();
        let expected = match cert.domain_mod.edge_anchor.get(id) {
            None => Rat::zero(),
            Some(a) => {
                let host_slope = match a.host {
                    Host::Edge(h) => f.slopes[&Flag::Edge(h, 0)],
                    Host::Ray(h) => f.slopes[&Flag::Ray(h)],
                };
                let sign = if a.reversed { -1 } else { 1 };
                rat_int(sign * host_slope) * &e.length
            }
        };
        if &c1 - &c0 != expected {
            return reject("edge slope bookkeeping mismatch", id);
        }
    }
    // rays: anchored rays with nonzero slope ride the line, everything else
    // must stay inside added target material
    for (id, _) in &cert.domain_mod.extended.rays {
        let img = cert.lift.flag_image(Flag::Ray(*id));
        let FlagImage::To(g, s) = img else {
            return reject("lift not finite", id);
        };
        let Flag::Ray(target_ray) = g else {
            return reject("lift not in refined form", id);
        };
        match cert.domain_mod.ray_anchor.get(id) {
            Some(a) => {
                let slope = f.slopes[&Flag::Ray(a.host)];
                if slope == 0 {
                    if cert.target_mod.is_anchored_ray(target_ray) {
                        return reject(
                            "contracted ray mapped onto the line",
                            id,
                        );
                    }
                } else {
                    if !cert.target_mod.is_anchored_ray(target_ray) {
                        return reject("function ray mapped off the line", id);
                    }
                    let host = cert.target_mod.ray_anchor[&target_ray].host;
                    let want_pos = slope > 0;
                    if (host == LINE_POS) != want_pos {
                        return reject("function ray mapped in the wrong direction", id);
                    }
                    if s != slope.unsigned_abs() {
                        return reject(
                            "function ray slope mismatch",
                            format!("{id}: lift slope {s}, function slope {slope}"),
                        );
                    }
                }
            }
            None => {
                if cert.target_mod.is_anchored_ray(target_ray) {
                    return reject("added ray mapped onto the line", id);
                }
            }
        }
    }
    // local realizability at every vertex
    for &v in &cert.domain_mod.extended.vertices {
        let problem = match extract_local_problem(&cert.lift, v) {
            Ok(p) => p,
            Err(e) => return reject("ramification extraction failed", format!("{v}: {e}")),
        };
        match cert.witnesses.get(&v) {
            Some(w) => {
                if !verify_witness(&problem, w) {
                    return reject("witness invalid", v);
                }
            }
            None => match solve(&problem, degree_bound) {
                Ok(SolveOutcome::Witness(_)) => {}
                Ok(SolveOutcome::Unsolvable) => {
                    return reject("local Hurwitz problem unsolvable", v)
                }
                Err(e) => return reject("local Hurwitz solve failed", format!("{v}: {e}")),
            },
        }
    }
    CertVerdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    fn segment_with_rays() -> BalancedFn {
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(2));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(v);
        BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(2))]),
            slopes: BTreeMap::from([
                (Flag::Edge(e, 0), 1),
                (Flag::Edge(e, 1), -1),
                (Flag::Ray(r1), -1),
                (Flag::Ray(r2), 1),
            ]),
        }
    }

    #[test]
    fn trivial_modification_retraction_is_identity_like() {
        let f = segment_with_rays();
        let m = Modification::trivial(&f.curve);
        m.validate().unwrap();
        let r = m.retraction().unwrap();
        r.validate().unwrap();
        assert!(r.is_finite());
        assert!(r.is_harmonic().unwrap().is_harmonic());
    }

    #[test]
    fn attach_ray_at_vertex_and_interior() {
        let f = segment_with_rays();
        let m = Modification::trivial(&f.curve);
        let (m1, _) = m.attach_ray(&CurvePoint::Vertex(VertexId(0))).unwrap();
        m1.validate().unwrap();
        assert_eq!(m1.added_components().unwrap().len(), 1);
        let r1 = m1.retraction().unwrap();
        assert!(!r1.is_finite());
        assert!(r1.is_harmonic().unwrap().is_harmonic());

        // interior of a base edge: the base gets subdivided in the embedding
        let (m2, _) = m1.attach_ray(&CurvePoint::OnEdge(EdgeId(0), rat(1, 2))).unwrap();
        m2.validate().unwrap();
        assert_eq!(m2.extended.edges.len(), 2);
        assert_eq!(m2.added_components().unwrap().len(), 2);

        // interior of a previously added ray: subdivides it, new branch
        let new_ray = *m2
            .extended
            .rays
            .keys()
            .find(|r| !m2.is_anchored_ray(**r))
            .unwrap();
        let (m3, _) = m2.attach_ray(&CurvePoint::OnRay(new_ray, rat_int(1))).unwrap();
        m3.validate().unwrap();
        // the added component now has a bounded edge and two rays
        let comps = m3.added_components().unwrap();
        assert!(comps.iter().any(|c| !c.edges.is_empty() && c.rays.len() == 2));
        // retraction composes: retract through m3 equals retract through m2
        // after m3's extra collapse
        let p = m3
            .retract_point(&CurvePoint::Vertex(*m3.extended.vertices.iter().last().unwrap()))
            .unwrap();
        let _ = p;
    }

    /// The retraction of an iterated modification factors through the
    /// stepwise retractions, checked pointwise.
    #[test]
    fn retraction_composes_over_steps() {
        let f = segment_with_rays();
        let m0 = Modification::trivial(&f.curve);
        let (m1, r1) = m0.attach_ray(&CurvePoint::OnEdge(EdgeId(0), rat(1, 2))).unwrap();
        // attach on the new ray, producing a nested tree over the same base
        let (m2, _) = m1.attach_ray(&CurvePoint::OnRay(r1, rat_int(2))).unwrap();
        m2.validate().unwrap();
        // stepwise: m2 viewed over m1.extended, then m1 over the base
        let m2_over_m1 = {
            let mut step = Modification::trivial(&m1.extended);
            let (step2, _) = step.attach_ray(&CurvePoint::OnRay(r1, rat_int(2))).unwrap();
            step = step2;
            step
        };
        for v in &m2.extended.vertices {
            let direct = m2.retract_point(&CurvePoint::Vertex(*v)).unwrap();
            let through = {
                let mid = m2_over_m1.retract_point(&CurvePoint::Vertex(*v)).unwrap();
                m1.retract_point(&mid).unwrap()
            };
            assert_eq!(direct, through, "composition mismatch at {v}");
        }
    }

    #[test]
    fn retract_point_on_subdivided_base() {
        let f = segment_with_rays();
        let m = Modification::trivial(&f.curve);
        let (m1, _) = m.subdivide_at(&CurvePoint::OnEdge(EdgeId(0), rat(1, 2))).unwrap();
        m1.validate().unwrap();
        // a point of the high piece retracts to the correct base offset
        let (high, _) = m1
            .extended
            .edges
            .iter()
            .find(|(id, _)| {
                m1.edge_anchor
                    .get(id)
                    .map(|a| a.start == rat(1, 2))
                    .unwrap_or(false)
            })
            .unwrap();
        let p = m1
            .retract_point(&CurvePoint::OnEdge(*high, rat(1, 4)))
            .unwrap();
        assert_eq!(p, CurvePoint::OnEdge(EdgeId(0), rat(3, 4)));
    }

    #[test]
    fn induced_function_on_modification() {
        let f = segment_with_rays();
        let m = Modification::trivial(&f.curve);
        let (m1, _) = m.attach_ray(&CurvePoint::OnEdge(EdgeId(0), rat(1, 2))).unwrap();
        let g = m1.induce_function(&f).unwrap();
        g.validate().unwrap();
        assert!(g.is_balanced().is_balanced());
        // the added ray is contracted
        let added = g
            .curve
            .rays
            .keys()
            .find(|r| !m1.is_anchored_ray(**r))
            .unwrap();
        assert_eq!(g.slopes[&Flag::Ray(*added)], 0);
    }

    #[test]
    fn line_coordinates_round_trip() {
        for c in [rat_int(0), rat_int(3), rat(-7, 2)] {
            assert_eq!(line_coordinate(&line_point(&c)).unwrap(), c);
        }
    }
}
