//! Certificate combinators: transporting a certificate through a further
//! modification of its instance, and gluing certificates of two subgraph
//! restrictions along a non-contracted overlap.

use std::collections::{BTreeMap, BTreeSet};

use crate::balanced::BalancedFn;
use crate::builder::{point_over_base, LiftBuilder};
use crate::error::Error;
use crate::graph::{CurvePoint, EdgeId, Flag, RayId, TropicalCurve, VertexId};
use crate::modify::{verify_certificate, HModCertificate, Modification};
use crate::rat::Rat;

/// Transports a certificate for `f` through a modification of its curve: the
/// certificate material is replayed on the extended curve, the new contracted
/// trees are mapped isometrically onto fresh target copies with slope 1, and
/// the completion pass supplies the matching rays at all other preimages.
/// Returns the induced function together with its verified certificate.
pub fn transport(
    f: &BalancedFn,
    cert: &HModCertificate,
    ext: &Modification,
    degree_bound: u64,
) -> Result<(BalancedFn, HModCertificate), Error> {
    if ext.base != f.curve {
        return Err(Error::Precondition("modification not based on the instance curve".into()));
    }
    ext.validate()?;
    if !verify_certificate(f, cert, degree_bound).is_accept() {
        return Err(Error::Precondition("input certificate does not verify".into()));
    }
    let f2 = ext.induce_function(f)?;
    let mut b = LiftBuilder::new(&ext.extended);
    let translate = |p: &CurvePoint| -> Result<CurvePoint, Error> { point_over_base(ext, p) };
    b.import_certificate(cert, &translate, &|_| None)?;
    // park each new tree isometrically on a fresh copy in the target
    for comp in ext.added_components()? {
        let root = comp.attachment;
        let root_img = *b
            .vmap
            .get(&root)
            .ok_or_else(|| Error::Construction(format!("no image for attachment {root}")))?;
        let mut mirror: BTreeMap<VertexId, VertexId> = BTreeMap::from([(root, root_img)]);
        let mut queue: Vec<VertexId> = vec![root];
        let mut seen_edges: BTreeSet<EdgeId> = BTreeSet::new();
        let mut seen_rays: BTreeSet<RayId> = BTreeSet::new();
        while let Some(v) = queue.pop() {
            let mv = mirror[&v];
            for fl in ext.extended.flags_at(v) {
                match fl {
                    Flag::Edge(e, _) => {
                        if ext.is_anchored_edge(e) || !seen_edges.insert(e) {
                            continue;
                        }
                        let len = ext.extended.edges[&e].length.clone();
                        let far = ext.extended.flag_far(fl).unwrap();
                        let (te, tv) = b.add_target_edge(mv, len);
                        mirror.insert(far, tv);
                        b.vmap.insert(far, tv);
                        b.set_edge_walk(
                            Flag::Edge(e, if ext.extended.edges[&e].ends[0] == v { 0 } else { 1 }),
                            vec![Flag::Edge(te, 0)],
                            1,
                        )?;
                        queue.push(far);
                    }
                    Flag::Ray(r) => {
                        if ext.is_anchored_ray(r) || !seen_rays.insert(r) {
                            continue;
                        }
                        let tr = b.add_target_ray(mv);
                        b.set_ray_walk(r, vec![Flag::Ray(tr)], 1)?;
                    }
                }
            }
        }
    }
    let cert2 = b.finalize(&f2, degree_bound)?;
    Ok((f2, cert2))
}

/// A locally closed subgraph: full edges, half edges (kept at one endpoint
/// and extended to a ray), rays, and vertices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubgraphSpec {
    pub vertices: BTreeSet<VertexId>,
    pub full_edges: BTreeSet<EdgeId>,
    /// edge id -> endpoint side (0 or 1) that stays in the subgraph
    pub half_edges: BTreeMap<EdgeId, u8>,
    pub rays: BTreeSet<RayId>,
}

/// A materialized subgraph instance: the induced function on the sub-curve,
/// plus the correspondence from its fresh rays to the host half edges.
#[derive(Debug, Clone)]
pub struct SubInstance {
    pub fun: BalancedFn,
    /// sub-ray id -> (host edge, kept endpoint side)
    pub half_rays: BTreeMap<RayId, (EdgeId, u8)>,
}

impl SubgraphSpec {
    /// Materializes the subgraph as a tropical curve with the induced
    /// function: shared elements keep their ids, half edges become rays.
    pub fn materialize(&self, f: &BalancedFn) -> Result<SubInstance, Error> {
        let mut curve = TropicalCurve::new();
        curve.vertices = self.vertices.clone();
        for e in &self.full_edges {
            let edge = f
                .curve
                .edges
                .get(e)
                .ok_or_else(|| Error::DecompositionInvalid(format!("unknown edge {e}")))?;
            if !self.vertices.contains(&edge.ends[0]) || !self.vertices.contains(&edge.ends[1]) {
                return Err(Error::DecompositionInvalid(format!(
                    "edge {e} has an endpoint outside the subgraph"
                )));
            }
            curve.edges.insert(*e, edge.clone());
        }
        for r in &self.rays {
            let ray = f
                .curve
                .rays
                .get(r)
                .ok_or_else(|| Error::DecompositionInvalid(format!("unknown ray {r}")))?;
            if !self.vertices.contains(&ray.base) {
                return Err(Error::DecompositionInvalid(format!(
                    "ray {r} based outside the subgraph"
                )));
            }
            curve.rays.insert(*r, ray.clone());
        }
        let mut half_rays = BTreeMap::new();
        let mut values = BTreeMap::new();
        for v in &self.vertices {
            values.insert(*v, f.values[v].clone());
        }
        let mut slopes = BTreeMap::new();
        for fl in curve.all_flags() {
            slopes.insert(fl, f.slopes[&fl]);
        }
        for (e, side) in &self.half_edges {
            let edge = f
                .curve
                .edges
                .get(e)
                .ok_or_else(|| Error::DecompositionInvalid(format!("unknown edge {e}")))?;
            if self.full_edges.contains(e) {
                return Err(Error::DecompositionInvalid(format!(
                    "edge {e} is both full and half"
                )));
            }
            let kept = edge.ends[*side as usize];
            if !self.vertices.contains(&kept) {
                return Err(Error::DecompositionInvalid(format!(
                    "half edge {e} kept at a vertex outside the subgraph"
                )));
            }
            let r = curve.add_ray(kept);
            half_rays.insert(r, (*e, *side));
            slopes.insert(Flag::Ray(r), f.slopes[&Flag::Edge(*e, *side)]);
        }
        let fun = BalancedFn { curve, values, slopes };
        fun.validate()?;
        Ok(SubInstance { fun, half_rays })
    }

    fn covers_edge(&self, e: EdgeId) -> bool {
        self.full_edges.contains(&e) || self.half_edges.contains_key(&e)
    }
}

/// Glues two certificates along a decomposition `Γ = Σ1 ∪ Σ2` whose overlap
/// carries no contracted edges. The certificates must have been produced on
/// the materialized sub-instances and must agree over the overlap; the glued
/// certificate is completed and re-verified.
pub fn glue(
    f: &BalancedFn,
    spec_a: &SubgraphSpec,
    cert_a: &HModCertificate,
    spec_b: &SubgraphSpec,
    cert_b: &HModCertificate,
    degree_bound: u64,
) -> Result<HModCertificate, Error> {
    f.validate()?;
    let sub_a = spec_a.materialize(f)?;
    let sub_b = spec_b.materialize(f)?;
    if cert_a.domain_mod.base != sub_a.fun.curve {
        return Err(Error::Precondition("first certificate not on the materialized Σ1".into()));
    }
    if cert_b.domain_mod.base != sub_b.fun.curve {
        return Err(Error::Precondition("second certificate not on the materialized Σ2".into()));
    }
    if !verify_certificate(&sub_a.fun, cert_a, degree_bound).is_accept() {
        return Err(Error::Precondition("first certificate does not verify".into()));
    }
    if !verify_certificate(&sub_b.fun, cert_b, degree_bound).is_accept() {
        return Err(Error::Precondition("second certificate does not verify".into()));
    }

    // coverage and allowability
    for v in &f.curve.vertices {
        if !spec_a.vertices.contains(v) && !spec_b.vertices.contains(v) {
            return Err(Error::DecompositionInvalid(format!("vertex {v} uncovered")));
        }
    }
    for (e, edge) in &f.curve.edges {
        let a = spec_a.covers_edge(*e);
        let b = spec_b.covers_edge(*e);
        if !a && !b {
            return Err(Error::DecompositionInvalid(format!("edge {e} uncovered")));
        }
        let full = spec_a.full_edges.contains(e) || spec_b.full_edges.contains(e);
        if !full {
            // two halves must keep opposite endpoints
            match (spec_a.half_edges.get(e), spec_b.half_edges.get(e)) {
                (Some(sa), Some(sb)) if sa != sb => {}
                _ => {
                    return Err(Error::DecompositionInvalid(format!(
                        "edge {e} not fully covered by the two halves"
                    )))
                }
            }
        }
        // overlap must be non-contracted
        if a && b && f.slopes[&Flag::Edge(*e, 0)] == 0 {
            return Err(Error::DecompositionInvalid(format!(
                "contracted edge {e} in the overlap"
            )));
        }
        let _ = edge;
    }
    for (r, _) in &f.curve.rays {
        let a = spec_a.rays.contains(r);
        let b = spec_b.rays.contains(r);
        if !a && !b {
            return Err(Error::DecompositionInvalid(format!("ray {r} uncovered")));
        }
        if a && b && f.slopes[&Flag::Ray(*r)] == 0 {
            return Err(Error::DecompositionInvalid(format!(
                "contracted ray {r} in the overlap"
            )));
        }
    }

    let mut b = LiftBuilder::new(&f.curve);
    for (sub, cert) in [(&sub_a, cert_a), (&sub_b, cert_b)] {
        let half_rays = sub.half_rays.clone();
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
                                "certificate material beyond the extent of half edge {e}"
                            )));
                        }
                        let offset = if *side == 0 { t.clone() } else { &len - t };
                        host_curve.normalize_point(&CurvePoint::OnEdge(*e, offset))
                    }
                },
            }
        };
        let half_rays2 = sub.half_rays.clone();
        let host_curve2 = f.curve.clone();
        let extent = move |r: RayId| -> Option<Rat> {
            half_rays2
                .get(&r)
                .map(|(e, _)| host_curve2.edges[e].length.clone())
        };
        b.import_certificate(cert, &translate, &extent)
            .map_err(|err| match err {
                Error::IncompatibleCertificates(loc) => Error::IncompatibleCertificates(loc),
                other => other,
            })?;
    }
    b.finalize(f, degree_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CurvePoint;
    use crate::hurwitz::DEFAULT_DEGREE_BOUND;
    use crate::rat::rat_int;
    use crate::realize0::certify_no_contracted_edges;

    fn two_vertex_instance() -> BalancedFn {
        // u --(2)-- v with rays at both ends, slope 1 along the edge
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
    fn transport_adds_ray_pair() {
        let f = two_vertex_instance();
        let cert = certify_no_contracted_edges(&f, DEFAULT_DEGREE_BOUND).unwrap();
        // add one contracted ray at a slope-1 point (the vertex u)
        let m = Modification::trivial(&f.curve);
        let (m1, _) = m.attach_ray(&CurvePoint::Vertex(VertexId(0))).unwrap();
        let (f2, cert2) = transport(&f, &cert, &m1, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f2, &cert2, DEFAULT_DEGREE_BOUND).is_accept());
        // one new domain ray over one new target ray
        assert_eq!(cert2.target_mod.added_components().unwrap().len(), 1);
    }

    #[test]
    fn transport_through_trivial_modification() {
        let f = two_vertex_instance();
        let cert = certify_no_contracted_edges(&f, DEFAULT_DEGREE_BOUND).unwrap();
        let m = Modification::trivial(&f.curve);
        let (f2, cert2) = transport(&f, &cert, &m, DEFAULT_DEGREE_BOUND).unwrap();
        assert_eq!(f2, f);
        assert!(verify_certificate(&f2, &cert2, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn transport_at_higher_degree_point() {
        // star with slopes {3, -3}: local degree 3 along the edge direction
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(u);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0))]),
            slopes: BTreeMap::from([(Flag::Ray(r1), 3), (Flag::Ray(r2), -3)]),
        };
        let cert = certify_no_contracted_edges(&f, DEFAULT_DEGREE_BOUND).unwrap();
        let m = Modification::trivial(&f.curve);
        let (m1, _) = m.attach_ray(&CurvePoint::Vertex(u)).unwrap();
        let (f2, cert2) = transport(&f, &cert, &m1, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f2, &cert2, DEFAULT_DEGREE_BOUND).is_accept());
        // degree bookkeeping: three domain rays over the one new target ray
        let new_target_rays: Vec<_> = cert2
            .target_mod
            .extended
            .rays
            .keys()
            .filter(|r| !cert2.target_mod.is_anchored_ray(**r))
            .collect();
        assert_eq!(new_target_rays.len(), 1);
        let tr = *new_target_rays[0];
        let over: usize = cert2
            .lift
            .flag_map
            .values()
            .filter(|img| matches!(img, crate::harmonic::FlagImage::To(Flag::Ray(r), _) if *r == tr))
            .count();
        assert_eq!(over, 3);
    }

    #[test]
    fn glue_two_stars_sharing_an_edge() {
        let f = two_vertex_instance();
        let u = VertexId(0);
        let v = VertexId(1);
        let e = EdgeId(0);
        let spec_a = SubgraphSpec {
            vertices: BTreeSet::from([u]),
            full_edges: BTreeSet::new(),
            half_edges: BTreeMap::from([(e, 0u8)]),
            rays: BTreeSet::from([RayId(0)]),
        };
        let spec_b = SubgraphSpec {
            vertices: BTreeSet::from([v]),
            full_edges: BTreeSet::new(),
            half_edges: BTreeMap::from([(e, 1u8)]),
            rays: BTreeSet::from([RayId(1)]),
        };
        let sub_a = spec_a.materialize(&f).unwrap();
        let sub_b = spec_b.materialize(&f).unwrap();
        let cert_a = certify_no_contracted_edges(&sub_a.fun, DEFAULT_DEGREE_BOUND).unwrap();
        let cert_b = certify_no_contracted_edges(&sub_b.fun, DEFAULT_DEGREE_BOUND).unwrap();
        let glued = glue(&f, &spec_a, &cert_a, &spec_b, &cert_b, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &glued, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn glue_with_trivial_second_piece() {
        let f = two_vertex_instance();
        // Σ1 = everything, Σ2 = the star of v
        let spec_a = SubgraphSpec {
            vertices: f.curve.vertices.clone(),
            full_edges: f.curve.edges.keys().copied().collect(),
            half_edges: BTreeMap::new(),
            rays: f.curve.rays.keys().copied().collect(),
        };
        let spec_b = SubgraphSpec {
            vertices: BTreeSet::from([VertexId(1)]),
            full_edges: BTreeSet::new(),
            half_edges: BTreeMap::from([(EdgeId(0), 1u8)]),
            rays: BTreeSet::from([RayId(1)]),
        };
        let sub_a = spec_a.materialize(&f).unwrap();
        let sub_b = spec_b.materialize(&f).unwrap();
        assert_eq!(sub_a.fun, f);
        let cert_a = certify_no_contracted_edges(&sub_a.fun, DEFAULT_DEGREE_BOUND).unwrap();
        let cert_b = certify_no_contracted_edges(&sub_b.fun, DEFAULT_DEGREE_BOUND).unwrap();
        let glued = glue(&f, &spec_a, &cert_a, &spec_b, &cert_b, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &glued, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn glue_rejects_contracted_overlap() {
        // contracted edge shared between the two pieces
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(1));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(u);
        let r3 = c.add_ray(v);
        let r4 = c.add_ray(v);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(0))]),
            slopes: BTreeMap::from([
                (Flag::Edge(e, 0), 0),
                (Flag::Edge(e, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
                (Flag::Ray(r3), 2),
                (Flag::Ray(r4), -2),
            ]),
        };
        let spec = |side: u8| SubgraphSpec {
            vertices: BTreeSet::from([u, v]),
            full_edges: BTreeSet::from([e]),
            half_edges: BTreeMap::new(),
            rays: if side == 0 {
                BTreeSet::from([r1, r2])
            } else {
                BTreeSet::from([r3, r4])
            },
        };
        // materialization fails balance (missing ray slopes), so build the
        // specs to include all rays; the overlap still has the contracted edge
        let spec_a = SubgraphSpec { rays: BTreeSet::from([r1, r2, r3, r4]), ..spec(0) };
        let spec_b = SubgraphSpec { rays: BTreeSet::from([r1, r2, r3, r4]), ..spec(1) };
        let sub_a = spec_a.materialize(&f).unwrap();
        let cert_a = crate::realize0::certify_no_contracted_cycles(&sub_a.fun, DEFAULT_DEGREE_BOUND)
            .unwrap();
        let err = glue(&f, &spec_a, &cert_a, &spec_b, &cert_a, DEFAULT_DEGREE_BOUND);
        assert!(matches!(err, Err(Error::DecompositionInvalid(_)) | Err(Error::Precondition(_))));
    }
}
