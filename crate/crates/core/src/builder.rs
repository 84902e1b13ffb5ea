//! Construction engine for certificates.
//!
//! A [`LiftBuilder`] holds a domain modification, a target modification of
//! the line, and a partial lift stored as per-element *walks* (ordered lists
//! of target flags). Walks tolerate later target subdivision: splitting a
//! target edge rewrites every stored walk. Once a construction has laid down
//! its material, `finalize` refines everything to normal form, runs the
//! completion pass that restores pure local degrees by grafting copies of
//! hanging target subtrees, solves all local Hurwitz problems, and gates the
//! assembled certificate through the independent verifier.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::balanced::BalancedFn;
use crate::error::Error;
use crate::graph::{CurvePoint, EdgeId, Flag, RayId, TropicalCurve, VertexId};
use crate::harmonic::{FlagImage, HarmonicMap};
use crate::hurwitz::{extract_local_problem, solve, SolveOutcome};
use crate::modify::{
    line_coordinate, line_point, verify_certificate, CertVerdict, HModCertificate, Host,
    Modification, LINE_NEG, LINE_POS,
};
use crate::rat::{rat_int, rat_to_string, Rat};
use num_traits::Zero;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub segs: Vec<Flag>,
    pub slope: u64,
}

#[derive(Debug, Clone, Copy)]
struct SplitRule {
    old_up: Flag,
    low_up: Flag,
    high_up: Flag,
}

fn apply_rule(segs: &[Flag], r: &SplitRule) -> Vec<Flag> {
    let old_down = r.old_up.reversed();
    let mut out = Vec::with_capacity(segs.len() + 1);
    for s in segs {
        if *s == r.old_up {
            out.push(r.low_up);
            out.push(r.high_up);
        } else if Some(*s) == old_down {
            if let Some(h) = r.high_up.reversed() {
                out.push(h);
            }
            if let Some(l) = r.low_up.reversed() {
                out.push(l);
            }
        } else {
            out.push(*s);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LiftBuilder {
    pub dom: Modification,
    pub tgt: Modification,
    pub vmap: BTreeMap<VertexId, VertexId>,
    /// Walk of each domain edge, in the `ends[0] -> ends[1]` direction.
    pub edge_walks: BTreeMap<EdgeId, Walk>,
    pub ray_walks: BTreeMap<RayId, Walk>,
}

impl LiftBuilder {
    pub fn new(domain_base: &TropicalCurve) -> LiftBuilder {
        LiftBuilder {
            dom: Modification::trivial(domain_base),
            tgt: Modification::trivial(&TropicalCurve::line()),
            vmap: BTreeMap::new(),
            edge_walks: BTreeMap::new(),
            ray_walks: BTreeMap::new(),
        }
    }

    // ---- target side -------------------------------------------------

    /// Line coordinate of an extended target vertex (attachment coordinate
    /// for added material).
    pub fn coord_of(&self, v: VertexId) -> Rat {
        line_coordinate(&self.tgt.retract_point(&CurvePoint::Vertex(v)).unwrap()).unwrap()
    }

    fn tgt_split(&mut self, at: &CurvePoint) -> Result<(VertexId, Option<SplitRule>), Error> {
        match self.tgt.extended.normalize_point(at)? {
            CurvePoint::Vertex(v) => Ok((v, None)),
            p => {
                let (t2, sub) = self.tgt.subdivide_at(&p)?;
                self.tgt = t2;
                let rule = match &p {
                    CurvePoint::OnEdge(e, _) => {
                        let crate::graph::HighPiece::Edge(high) = sub.high else { unreachable!() };
                        SplitRule {
                            old_up: Flag::Edge(*e, 0),
                            low_up: Flag::Edge(sub.low_edge, 0),
                            high_up: Flag::Edge(high, 0),
                        }
                    }
                    CurvePoint::OnRay(r, _) => {
                        let crate::graph::HighPiece::Ray(high) = sub.high else { unreachable!() };
                        SplitRule {
                            old_up: Flag::Ray(*r),
                            low_up: Flag::Edge(sub.low_edge, 0),
                            high_up: Flag::Ray(high),
                        }
                    }
                    CurvePoint::Vertex(_) => unreachable!(),
                };
                for walk in self
                    .edge_walks
                    .values_mut()
                    .chain(self.ray_walks.values_mut())
                {
                    walk.segs = apply_rule(&walk.segs, &rule);
                }
                Ok((sub.new_vertex, Some(rule)))
            }
        }
    }

    /// Subdivides the extended target at a point, rewriting stored walks.
    pub fn tgt_ensure_vertex(&mut self, at: &CurvePoint) -> Result<VertexId, Error> {
        Ok(self.tgt_split(at)?.0)
    }

    /// The extended-target point over a point of the line.
    pub fn tgt_point_over(&self, base: &CurvePoint) -> Result<CurvePoint, Error> {
        point_over_base(&self.tgt, base)
    }

    /// Ensures an extended-target vertex at the given line coordinate.
    pub fn ensure_line_vertex(&mut self, c: &Rat) -> Result<VertexId, Error> {
        let p = self.tgt_point_over(&line_point(c))?;
        self.tgt_ensure_vertex(&p)
    }

    /// Attaches a fresh (added) target ray at an extended target vertex.
    pub fn add_target_ray(&mut self, v: VertexId) -> RayId {
        self.tgt.extended.add_ray(v)
    }

    /// Attaches a fresh (added) target edge running to a brand-new vertex.
    pub fn add_target_edge(&mut self, v: VertexId, len: Rat) -> (EdgeId, VertexId) {
        self.tgt.add_added_edge(v, len)
    }

    /// Anchored line pieces as (low coordinate, high coordinate, upward
    /// flag), sorted, plus the negative and positive tails.
    fn line_segments(&self) -> (Vec<(Rat, Rat, Flag)>, (Rat, Flag), (Rat, Flag)) {
        let mut segs = Vec::new();
        let mut pos_tail = None;
        let mut neg_tail = None;
        for (e, a) in &self.tgt.edge_anchor {
            let len = self.tgt.extended.edges[e].length.clone();
            match a.host {
                Host::Ray(r) if r == LINE_POS => {
                    let lo = a.start.clone();
                    let hi = &a.start + &len;
                    let up = if a.reversed { Flag::Edge(*e, 1) } else { Flag::Edge(*e, 0) };
                    segs.push((lo, hi, up));
                }
                Host::Ray(r) if r == LINE_NEG => {
                    let lo = -(&a.start + &len);
                    let hi = -a.start.clone();
                    let up = if a.reversed { Flag::Edge(*e, 0) } else { Flag::Edge(*e, 1) };
                    segs.push((lo, hi, up));
                }
                _ => unreachable!("the line has no bounded base edges"),
            }
        }
        for (r, a) in &self.tgt.ray_anchor {
            if a.host == LINE_POS {
                pos_tail = Some((a.start.clone(), Flag::Ray(*r)));
            } else {
                neg_tail = Some((-a.start.clone(), Flag::Ray(*r)));
            }
        }
        segs.sort_by(|x, y| x.0.cmp(&y.0));
        (segs, neg_tail.expect("negative tail"), pos_tail.expect("positive tail"))
    }

    /// The chain of anchored target flags from coordinate `a` to `b`; both
    /// must already be vertices of the extended target.
    pub fn line_chain(&self, a: &Rat, b: &Rat) -> Result<Vec<Flag>, Error> {
        if a == b {
            return Ok(vec![]);
        }
        let (segs, _, _) = self.line_segments();
        let (lo, hi, upward) = if a < b { (a.clone(), b.clone(), true) } else { (b.clone(), a.clone(), false) };
        let mut picked: Vec<(Rat, Rat, Flag)> = segs
            .into_iter()
            .filter(|(s, t, _)| *s >= lo && *t <= hi)
            .collect();
        picked.sort_by(|x, y| x.0.cmp(&y.0));
        let contiguous = !picked.is_empty()
            && picked[0].0 == lo
            && picked.last().unwrap().1 == hi
            && picked.windows(2).all(|w| w[0].1 == w[1].0);
        if !contiguous {
            return Err(Error::Construction(format!(
                "line not subdivided at {} and {}",
                rat_to_string(&lo),
                rat_to_string(&hi)
            )));
        }
        let mut out: Vec<Flag> = picked.iter().map(|(_, _, f)| *f).collect();
        if !upward {
            out.reverse();
            out = out.iter().map(|f| f.reversed().unwrap()).collect();
        }
        Ok(out)
    }

    /// The chain of anchored flags from coordinate `a` out to infinity,
    /// ending with the tail ray. `a` must be a vertex coordinate.
    pub fn line_chain_to_infinity(&self, a: &Rat, positive: bool) -> Result<Vec<Flag>, Error> {
        let (segs, neg_tail, pos_tail) = self.line_segments();
        let mut out = Vec::new();
        if positive {
            let mut above: Vec<_> = segs.into_iter().filter(|(s, _, _)| s >= a).collect();
            above.sort_by(|x, y| x.0.cmp(&y.0));
            if !(above.is_empty() && pos_tail.0 == *a
                || !above.is_empty() && above[0].0 == *a && above.last().unwrap().1 == pos_tail.0)
            {
                return Err(Error::Construction("line not subdivided at chain start".into()));
            }
            out.extend(above.into_iter().map(|(_, _, f)| f));
            out.push(pos_tail.1);
        } else {
            let mut below: Vec<_> = segs.into_iter().filter(|(_, t, _)| t <= a).collect();
            below.sort_by(|x, y| y.1.cmp(&x.1));
            if !(below.is_empty() && neg_tail.0 == *a
                || !below.is_empty() && below[0].1 == *a && below.last().unwrap().0 == neg_tail.0)
            {
                return Err(Error::Construction("line not subdivided at chain start".into()));
            }
            out.extend(below.into_iter().map(|(_, _, f)| f.reversed().unwrap()));
            out.push(neg_tail.1);
        }
        Ok(out)
    }

    // ---- domain side -------------------------------------------------

    pub fn dom_point_over(&self, base: &CurvePoint) -> Result<CurvePoint, Error> {
        point_over_base(&self.dom, base)
    }

    /// Length of a walk in target units (None: it ends in a ray).
    fn walk_target_length(&self, segs: &[Flag]) -> Option<Rat> {
        let mut total = Rat::zero();
        for s in segs {
            total += self.tgt.extended.flag_length(*s)?;
        }
        Some(total)
    }

    /// Splits a walk at target-length `at`, subdividing the target when the
    /// cut lands inside a segment. Returns the halves and the cut vertex.
    fn split_walk(&mut self, walk: &Walk, at: &Rat) -> Result<(Walk, Walk, VertexId), Error> {
        let mut segs = walk.segs.clone();
        let mut acc = Rat::zero();
        let mut i = 0usize;
        loop {
            if acc == *at {
                let v = if i == 0 {
                    self.tgt.extended.flag_base(segs[0])
                } else {
                    self.tgt.extended.flag_far(segs[i - 1]).unwrap()
                };
                return Ok((
                    Walk { segs: segs[..i].to_vec(), slope: walk.slope },
                    Walk { segs: segs[i..].to_vec(), slope: walk.slope },
                    v,
                ));
            }
            if i >= segs.len() {
                return Err(Error::Construction("walk split beyond walk length".into()));
            }
            let seg = segs[i];
            let seg_len = self.tgt.extended.flag_length(seg);
            let fits = match &seg_len {
                Some(l) => &acc + l <= *at,
                None => false,
            };
            if fits {
                acc += seg_len.unwrap();
                i += 1;
                continue;
            }
            // the cut lands inside this segment: subdivide the target there
            let d = at - &acc;
            let p = self.tgt.extended.point_along(seg, &d)?;
            let (_, rule) = self.tgt_split(&p)?;
            if let Some(rule) = rule {
                segs = apply_rule(&segs, &rule);
            }
        }
    }

    /// Ensures a domain vertex at the given extended point, splitting the
    /// covering walk and registering the image of the new vertex.
    pub fn dom_ensure_vertex(&mut self, at: &CurvePoint) -> Result<VertexId, Error> {
        match self.dom.extended.normalize_point(at)? {
            CurvePoint::Vertex(v) => Ok(v),
            CurvePoint::OnEdge(e, t) => {
                let walk = self.edge_walks.remove(&e);
                let (d2, sub) = self.dom.subdivide_at(&CurvePoint::OnEdge(e, t.clone()))?;
                self.dom = d2;
                let crate::graph::HighPiece::Edge(high) = sub.high else { unreachable!() };
                if let Some(w) = walk {
                    let img_len = rat_int(w.slope as i64) * &t;
                    let (w1, w2, cutv) = self.split_walk(&w, &img_len)?;
                    self.edge_walks.insert(sub.low_edge, w1);
                    self.edge_walks.insert(high, w2);
                    self.vmap.insert(sub.new_vertex, cutv);
                }
                Ok(sub.new_vertex)
            }
            CurvePoint::OnRay(r, t) => {
                let walk = self.ray_walks.remove(&r);
                let (d2, sub) = self.dom.subdivide_at(&CurvePoint::OnRay(r, t.clone()))?;
                self.dom = d2;
                let crate::graph::HighPiece::Ray(high) = sub.high else { unreachable!() };
                if let Some(w) = walk {
                    let img_len = rat_int(w.slope as i64) * &t;
                    let (w1, w2, cutv) = self.split_walk(&w, &img_len)?;
                    self.edge_walks.insert(sub.low_edge, w1);
                    self.ray_walks.insert(high, w2);
                    self.vmap.insert(sub.new_vertex, cutv);
                }
                Ok(sub.new_vertex)
            }
        }
    }

    /// Stores a walk for the edge of `flag`, given in `flag`'s direction.
    pub fn set_edge_walk(&mut self, flag: Flag, segs: Vec<Flag>, slope: u64) -> Result<(), Error> {
        let Flag::Edge(e, side) = flag else {
            return Err(Error::Construction("set_edge_walk needs an edge flag".into()));
        };
        let stored: Vec<Flag> = if side == 0 {
            segs
        } else {
            segs.iter()
                .rev()
                .map(|f| {
                    f.reversed()
                        .ok_or_else(|| Error::Construction("ray segment in an edge walk".into()))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let expect = rat_int(slope as i64) * &self.dom.extended.edges[&e].length;
        match self.walk_target_length(&stored) {
            Some(l) if l == expect => {}
            _ => {
                return Err(Error::Construction(format!(
                    "walk length mismatch on {e}: expected image length {}",
                    rat_to_string(&expect)
                )))
            }
        }
        self.edge_walks.insert(e, Walk { segs: stored, slope });
        Ok(())
    }

    pub fn set_ray_walk(&mut self, ray: RayId, segs: Vec<Flag>, slope: u64) -> Result<(), Error> {
        if segs.is_empty() || self.walk_target_length(&segs).is_some() {
            return Err(Error::Construction(format!(
                "ray walk on {ray} must end in a target ray"
            )));
        }
        self.ray_walks.insert(ray, Walk { segs, slope });
        Ok(())
    }

    pub fn add_domain_ray(&mut self, v: VertexId) -> RayId {
        self.dom.extended.add_ray(v)
    }

    pub fn add_domain_edge(&mut self, v: VertexId, len: Rat) -> (EdgeId, VertexId) {
        self.dom.add_added_edge(v, len)
    }

    /// Assigns the plain part of the lift directly from a balanced function
    /// on the domain base: non-contracted edges and rays ride the line, and
    /// every vertex incident to something non-contracted maps to the line
    /// vertex at its value.
    pub fn assign_function_lift(&mut self, f: &BalancedFn) -> Result<(), Error> {
        if f.curve != self.dom.base {
            return Err(Error::Construction("function not on the builder's domain base".into()));
        }
        let live: Vec<VertexId> = f
            .curve
            .vertices
            .iter()
            .copied()
            .filter(|&v| f.curve.flags_at(v).iter().any(|fl| f.slopes[fl] != 0))
            .collect();
        for &v in &live {
            self.ensure_line_vertex(&f.values[&v])?;
        }
        for &v in &live {
            let tv = self.ensure_line_vertex(&f.values[&v])?;
            self.vmap.insert(v, tv);
        }
        for (id, e) in f.curve.edges.clone() {
            let s = f.slopes[&Flag::Edge(id, 0)];
            if s == 0 {
                continue;
            }
            let c0 = f.values[&e.ends[0]].clone();
            let c1 = f.values[&e.ends[1]].clone();
            let chain = self.line_chain(&c0, &c1)?;
            self.set_edge_walk(Flag::Edge(id, 0), chain, s.unsigned_abs())?;
        }
        for (id, r) in f.curve.rays.clone() {
            let s = f.slopes[&Flag::Ray(id)];
            if s == 0 {
                continue;
            }
            let c = f.values[&r.base].clone();
            let chain = self.line_chain_to_infinity(&c, s > 0)?;
            self.set_ray_walk(id, chain, s.unsigned_abs())?;
        }
        Ok(())
    }

    // ---- refinement, completion, finalization -------------------------

    /// Splits every multi-segment walk so each domain element maps onto one
    /// target element.
    fn refine_all(&mut self) -> Result<(), Error> {
        loop {
            let mut cut: Option<CurvePoint> = None;
            for (e, w) in &self.edge_walks {
                if w.segs.len() > 1 {
                    let first = self.tgt.extended.flag_length(w.segs[0]).ok_or_else(|| {
                        Error::Construction("edge walk passes through a target ray".into())
                    })?;
                    cut = Some(CurvePoint::OnEdge(*e, first / rat_int(w.slope as i64)));
                    break;
                }
            }
            if cut.is_none() {
                for (r, w) in &self.ray_walks {
                    if w.segs.len() > 1 {
                        let first = self.tgt.extended.flag_length(w.segs[0]).ok_or_else(|| {
                            Error::Construction("malformed ray walk".into())
                        })?;
                        cut = Some(CurvePoint::OnRay(*r, first / rat_int(w.slope as i64)));
                        break;
                    }
                }
            }
            match cut {
                Some(p) => {
                    self.dom_ensure_vertex(&p)?;
                }
                None => return Ok(()),
            }
        }
    }

    /// First target segment a flag's walk covers, with its slope.
    pub fn probe_first_seg(&self, f: Flag) -> Option<(Flag, u64)> {
        self.first_seg_at(f)
    }

    fn first_seg_at(&self, f: Flag) -> Option<(Flag, u64)> {
        match f {
            Flag::Edge(e, side) => {
                let w = self.edge_walks.get(&e)?;
                if side == 0 {
                    Some((*w.segs.first()?, w.slope))
                } else {
                    Some((w.segs.last()?.reversed()?, w.slope))
                }
            }
            Flag::Ray(r) => {
                let w = self.ray_walks.get(&r)?;
                Some((*w.segs.first()?, w.slope))
            }
        }
    }

    /// The component of the extended target hanging at `w` through direction
    /// `dir`, together with whether it touches anchored (line) material.
    fn hanging_component(
        &self,
        w: VertexId,
        dir: Flag,
    ) -> (BTreeSet<VertexId>, BTreeSet<EdgeId>, BTreeSet<RayId>, bool) {
        let mut vs = BTreeSet::new();
        let mut es = BTreeSet::new();
        let mut rs = BTreeSet::new();
        let mut anchored = false;
        let mut queue: VecDeque<Flag> = VecDeque::from([dir]);
        let mut seen = BTreeSet::new();
        while let Some(f) = queue.pop_front() {
            if !seen.insert(f) {
                continue;
            }
            match f {
                Flag::Ray(r) => {
                    rs.insert(r);
                    anchored |= self.tgt.is_anchored_ray(r);
                }
                Flag::Edge(e, _) => {
                    es.insert(e);
                    anchored |= self.tgt.is_anchored_edge(e);
                    let far = self.tgt.extended.flag_far(f).unwrap();
                    if far == w {
                        continue;
                    }
                    if vs.insert(far) {
                        for g in self.tgt.extended.flags_at(far) {
                            if Some(g) != f.reversed() {
                                queue.push_back(g);
                            }
                        }
                    }
                }
            }
        }
        (vs, es, rs, anchored)
    }

    /// Grafts one isometric slope-1 copy of the hanging component at `v`.
    fn graft_copy(&mut self, v: VertexId, w: VertexId, dir: Flag) -> Result<(), Error> {
        let mut mirror: BTreeMap<VertexId, VertexId> = BTreeMap::from([(w, v)]);
        let mut queue: VecDeque<Flag> = VecDeque::from([dir]);
        let mut seen = BTreeSet::new();
        while let Some(f) = queue.pop_front() {
            if !seen.insert(f) {
                continue;
            }
            let base = self.tgt.extended.flag_base(f);
            let dv = mirror[&base];
            match f {
                Flag::Ray(_) => {
                    let nr = self.add_domain_ray(dv);
                    self.set_ray_walk(nr, vec![f], 1)?;
                }
                Flag::Edge(e, _) => {
                    let len = self.tgt.extended.edges[&e].length.clone();
                    let far = self.tgt.extended.flag_far(f).unwrap();
                    let (ne, nv) = self.add_domain_edge(dv, len);
                    self.set_edge_walk(Flag::Edge(ne, 0), vec![f], 1)?;
                    mirror.insert(far, nv);
                    self.vmap.insert(nv, far);
                    for g in self.tgt.extended.flags_at(far) {
                        if Some(g) != f.reversed() {
                            queue.push_back(g);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Restores pure local degrees at every domain vertex by adding rays or
    /// isometric subtree copies over deficient tree directions. A deficient
    /// line direction cannot be repaired and aborts the construction.
    fn complete(&mut self) -> Result<(), Error> {
        let vertices: Vec<VertexId> = self.dom.extended.vertices.iter().copied().collect();
        for v in vertices {
            let w = *self
                .vmap
                .get(&v)
                .ok_or_else(|| Error::Construction(format!("no image assigned for {v}")))?;
            let dirs = self.tgt.extended.flags_at(w);
            let mut deg: BTreeMap<Flag, u64> = dirs.iter().map(|d| (*d, 0)).collect();
            for f in self.dom.extended.flags_at(v) {
                let (seg, s) = self.first_seg_at(f).ok_or_else(|| {
                    Error::Construction(format!("no walk assigned for flag {}", f.key()))
                })?;
                *deg.entry(seg).or_insert(0) += s;
            }
            let d = deg.values().copied().max().unwrap_or(0);
            if d == 0 {
                return Err(Error::Construction(format!("vertex {v} has local degree 0")));
            }
            for dir in dirs {
                let have = deg[&dir];
                if have == d {
                    continue;
                }
                let deficit = d - have;
                let (vs, es, _rs, anchored) = self.hanging_component(w, dir);
                if anchored {
                    return Err(Error::Construction(format!(
                        "cannot complete {v} toward the line (direction {}; image {w}; degrees {:?})",
                        dir.key(),
                        deg.iter().map(|(k, x)| (k.key(), *x)).collect::<Vec<_>>()
                    )));
                }
                if vs.is_empty() && es.is_empty() {
                    for _ in 0..deficit {
                        let nr = self.add_domain_ray(v);
                        self.set_ray_walk(nr, vec![dir], 1)?;
                    }
                } else {
                    for _ in 0..deficit {
                        self.graft_copy(v, w, dir)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn to_map(&self) -> Result<HarmonicMap, Error> {
        let mut flag_map = BTreeMap::new();
        for (e, w) in &self.edge_walks {
            if w.segs.len() != 1 {
                return Err(Error::Construction("unrefined edge walk at map assembly".into()));
            }
            flag_map.insert(Flag::Edge(*e, 0), FlagImage::To(w.segs[0], w.slope));
            flag_map.insert(
                Flag::Edge(*e, 1),
                FlagImage::To(w.segs[0].reversed().unwrap(), w.slope),
            );
        }
        for (r, w) in &self.ray_walks {
            if w.segs.len() != 1 {
                return Err(Error::Construction("unrefined ray walk at map assembly".into()));
            }
            flag_map.insert(Flag::Ray(*r), FlagImage::To(w.segs[0], w.slope));
        }
        for f in self.dom.extended.all_flags() {
            if !flag_map.contains_key(&f) {
                return Err(Error::Construction(format!("no walk for flag {}", f.key())));
            }
        }
        Ok(HarmonicMap {
            source: self.dom.extended.clone(),
            target: self.tgt.extended.clone(),
            vertex_map: self.vmap.clone(),
            flag_map,
        })
    }

    /// Refine, complete, solve witnesses, assemble, and verify against `f`.
    pub fn finalize(&mut self, f: &BalancedFn, degree_bound: u64) -> Result<HModCertificate, Error> {
        self.refine_all()?;
        self.complete()?;
        let lift = self.to_map()?;
        lift.validate()?;
        let mut witnesses = BTreeMap::new();
        for &v in &lift.source.vertices {
            let problem = extract_local_problem(&lift, v)?;
            match solve(&problem, degree_bound)? {
                SolveOutcome::Witness(w) => {
                    witnesses.insert(v, w);
                }
                SolveOutcome::Unsolvable => {
                    return Err(Error::Construction(format!(
                        "local Hurwitz problem unsolvable at {v} (degree {}, profiles {:?})",
                        problem.degree, problem.profiles
                    )));
                }
            }
        }
        let cert = HModCertificate {
            domain_mod: self.dom.clone(),
            target_mod: self.tgt.clone(),
            lift,
            witnesses,
        };
        match verify_certificate(f, &cert, degree_bound) {
            CertVerdict::Accept => Ok(cert),
            CertVerdict::Reject { clause, location } => Err(Error::Construction(format!(
                "constructed certificate failed verification: {clause} at {location}"
            ))),
        }
    }

    // ---- replaying existing certificates ------------------------------

    /// Imports a certificate whose instance embeds into this builder's
    /// domain base via `translate` (certificate base points to builder base
    /// points, metrically faithful). Where this builder already has walk
    /// data, the imported data must agree.
    pub fn import_certificate(
        &mut self,
        cert: &HModCertificate,
        translate: &dyn Fn(&CurvePoint) -> Result<CurvePoint, Error>,
        ray_extent: &dyn Fn(RayId) -> Option<Rat>,
    ) -> Result<(), Error> {
        // 1. replay target trees, recording correspondences
        let mut tflag: BTreeMap<Flag, Flag> = BTreeMap::new();
        let mut tvert: BTreeMap<VertexId, VertexId> = BTreeMap::new();
        for (v, a) in cert.target_mod.vertex_anchor.iter() {
            let c = line_coordinate(a)?;
            let here = self.ensure_line_vertex(&c)?;
            tvert.insert(*v, here);
        }
        let mut seen_edges: BTreeSet<EdgeId> = BTreeSet::new();
        let mut seen_rays: BTreeSet<RayId> = BTreeSet::new();
        for comp in cert.target_mod.added_components()? {
            let root = tvert[&comp.attachment];
            let mut mirror: BTreeMap<VertexId, VertexId> = BTreeMap::from([(comp.attachment, root)]);
            let mut queue: VecDeque<VertexId> = VecDeque::from([comp.attachment]);
            while let Some(cv) = queue.pop_front() {
                let mv = mirror[&cv];
                for f in cert.target_mod.extended.flags_at(cv) {
                    match f {
                        Flag::Edge(e, side) => {
                            if cert.target_mod.is_anchored_edge(e) || !seen_edges.insert(e) {
                                continue;
                            }
                            let len = cert.target_mod.extended.edges[&e].length.clone();
                            let far = cert.target_mod.extended.flag_far(f).unwrap();
                            let (ne, nv) = self.add_target_edge(mv, len);
                            mirror.insert(far, nv);
                            tvert.insert(far, nv);
                            tflag.insert(Flag::Edge(e, side), Flag::Edge(ne, 0));
                            tflag.insert(Flag::Edge(e, 1 - side), Flag::Edge(ne, 1));
                            queue.push_back(far);
                        }
                        Flag::Ray(r) => {
                            if cert.target_mod.is_anchored_ray(r) || !seen_rays.insert(r) {
                                continue;
                            }
                            let nr = self.add_target_ray(mv);
                            tflag.insert(Flag::Ray(r), Flag::Ray(nr));
                        }
                    }
                }
            }
        }

        let image_vertex_here = |me: &mut LiftBuilder,
                                 tvert: &BTreeMap<VertexId, VertexId>,
                                 iv: VertexId|
         -> Result<VertexId, Error> {
            if let Some(mv) = tvert.get(&iv) {
                return Ok(*mv);
            }
            let c = cert.target_coord(iv)?;
            me.ensure_line_vertex(&c)
        };

        let translate_seg = |me: &mut LiftBuilder, seg: Flag| -> Result<Vec<Flag>, Error> {
            if let Some(f) = tflag.get(&seg) {
                return Ok(vec![*f]);
            }
            match seg {
                Flag::Edge(e, side) => {
                    let ends = cert.target_mod.extended.edges[&e].ends;
                    let from = cert.target_coord(ends[side as usize])?;
                    let to = cert.target_coord(ends[1 - side as usize])?;
                    me.ensure_line_vertex(&from)?;
                    me.ensure_line_vertex(&to)?;
                    me.line_chain(&from, &to)
                }
                Flag::Ray(r) => {
                    let a = &cert.target_mod.ray_anchor[&r];
                    let base = cert.target_mod.extended.rays[&r].base;
                    let c = cert.target_coord(base)?;
                    me.ensure_line_vertex(&c)?;
                    me.line_chain_to_infinity(&c, a.host == LINE_POS)
                }
            }
        };

        // 2. domain cut points
        let mut dmirror: BTreeMap<VertexId, VertexId> = BTreeMap::new();
        for (v, anchor) in cert.domain_mod.vertex_anchor.iter() {
            let here = translate(anchor)?;
            let over = self.dom_point_over(&here)?;
            let dv = self.dom_ensure_vertex(&over)?;
            dmirror.insert(*v, dv);
        }
        for (v, dv) in dmirror.clone() {
            let tv = image_vertex_here(self, &tvert, cert.lift.image_vertex(v))?;
            match self.vmap.get(&dv) {
                Some(old) if *old != tv => {
                    return Err(Error::IncompatibleCertificates(format!(
                        "image disagreement at {dv}"
                    )))
                }
                _ => {
                    self.vmap.insert(dv, tv);
                }
            }
        }

        // 3. anchored pieces: copy walks along retract-guided runs
        for (e, ea) in cert.domain_mod.edge_anchor.clone() {
            let edge = cert.domain_mod.extended.edges[&e].clone();
            if let Host::Ray(h) = ea.host {
                if let Some(total) = ray_extent(h) {
                    if &ea.start + &edge.length > total {
                        return Err(Error::DecompositionInvalid(format!(
                            "certificate piece {e} straddles the end of a half edge"
                        )));
                    }
                }
            }
            let FlagImage::To(seg, s) = cert.lift.flag_image(Flag::Edge(e, 0)) else {
                return Err(Error::InvalidMap("imported lift not finite".into()));
            };
            let segs = translate_seg(self, seg)?;
            let from = dmirror[&edge.ends[0]];
            let to = dmirror[&edge.ends[1]];
            let host_at = |d: &Rat| -> Result<CurvePoint, Error> {
                // point of the certificate base at distance d from ends[0]
                let len = edge.length.clone();
                let c = if ea.reversed { &ea.start + (&len - d) } else { &ea.start + d };
                let p = match ea.host {
                    Host::Edge(h) => CurvePoint::OnEdge(h, c),
                    Host::Ray(h) => CurvePoint::OnRay(h, c),
                };
                let p = cert.domain_mod.base.normalize_point(&p)?;
                translate(&p)
            };
            self.assign_chain(from, to, &edge.length, segs, s, &host_at)?;
        }
        for (r, ra) in cert.domain_mod.ray_anchor.clone() {
            let ray = cert.domain_mod.extended.rays[&r].clone();
            let FlagImage::To(seg, s) = cert.lift.flag_image(Flag::Ray(r)) else {
                return Err(Error::InvalidMap("imported lift not finite".into()));
            };
            let segs = translate_seg(self, seg)?;
            let from = dmirror[&ray.base];
            let host_at = |d: &Rat| -> Result<CurvePoint, Error> {
                let p = cert
                    .domain_mod
                    .base
                    .normalize_point(&CurvePoint::OnRay(ra.host, &ra.start + d))?;
                translate(&p)
            };
            match ray_extent(ra.host) {
                None => self.assign_ray_chain(from, segs, s, &host_at)?,
                Some(total) => {
                    if ra.start >= total {
                        // the piece lies entirely beyond the half edge's real
                        // extent; its boundary vertex is handled by anchors
                        continue;
                    }
                    let real = &total - &ra.start;
                    let walk = Walk { segs, slope: s };
                    let img = rat_int(s as i64) * &real;
                    let (w1, _, cutv) = self.split_walk(&walk, &img)?;
                    let far_base = host_at(&real)?;
                    let over = self.dom_point_over(&far_base)?;
                    let to = self.dom_ensure_vertex(&over)?;
                    match self.vmap.get(&to) {
                        Some(old) if *old != cutv => {
                            return Err(Error::IncompatibleCertificates(format!(
                                "image disagreement at {to}"
                            )))
                        }
                        _ => {
                            self.vmap.insert(to, cutv);
                        }
                    }
                    self.assign_chain(from, to, &real, w1.segs, s, &host_at)?;
                }
            }
        }

        // 4. added domain trees: replicate with translated walks
        let mut dseen_edges: BTreeSet<EdgeId> = BTreeSet::new();
        let mut dseen_rays: BTreeSet<RayId> = BTreeSet::new();
        for comp in cert.domain_mod.added_components()? {
            let root = dmirror[&comp.attachment];
            let mut mirror: BTreeMap<VertexId, VertexId> = BTreeMap::from([(comp.attachment, root)]);
            let mut queue: VecDeque<VertexId> = VecDeque::from([comp.attachment]);
            while let Some(cv) = queue.pop_front() {
                let mv = mirror[&cv];
                for f in cert.domain_mod.extended.flags_at(cv) {
                    match f {
                        Flag::Edge(e, _) => {
                            if cert.domain_mod.is_anchored_edge(e) || !dseen_edges.insert(e) {
                                continue;
                            }
                            let len = cert.domain_mod.extended.edges[&e].length.clone();
                            let far = cert.domain_mod.extended.flag_far(f).unwrap();
                            let (ne, nv) = self.add_domain_edge(mv, len);
                            mirror.insert(far, nv);
                            let tv = image_vertex_here(self, &tvert, cert.lift.image_vertex(far))?;
                            self.vmap.insert(nv, tv);
                            let FlagImage::To(seg, s) = cert.lift.flag_image(f) else {
                                return Err(Error::InvalidMap("imported lift not finite".into()));
                            };
                            let segs = translate_seg(self, seg)?;
                            self.set_edge_walk(Flag::Edge(ne, 0), segs, s)?;
                            queue.push_back(far);
                        }
                        Flag::Ray(r) => {
                            if cert.domain_mod.is_anchored_ray(r) || !dseen_rays.insert(r) {
                                continue;
                            }
                            let nr = self.add_domain_ray(mv);
                            let FlagImage::To(seg, s) = cert.lift.flag_image(f) else {
                                return Err(Error::InvalidMap("imported lift not finite".into()));
                            };
                            let segs = translate_seg(self, seg)?;
                            self.set_ray_walk(nr, segs, s)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Assigns a walk to the retract-guided run of builder-domain edges from
    /// `from` to `to` whose base positions follow `host_at`. Pieces finer
    /// than the imported one receive proportional walk splits. Existing walk
    /// data must agree.
    fn assign_chain(
        &mut self,
        from: VertexId,
        to: VertexId,
        total_len: &Rat,
        segs: Vec<Flag>,
        slope: u64,
        host_at: &dyn Fn(&Rat) -> Result<CurvePoint, Error>,
    ) -> Result<(), Error> {
        let mut walk = Walk { segs, slope };
        let mut consumed = Rat::zero();
        let mut cur = from;
        let mut guard = 0usize;
        while !(cur == to && consumed == *total_len) {
            guard += 1;
            if guard > self.dom.extended.edges.len() + 2 {
                return Err(Error::Construction("runaway chain assignment".into()));
            }
            let mut next: Option<(Flag, VertexId, Rat)> = None;
            for f in self.dom.extended.flags_at(cur) {
                let Flag::Edge(e, _) = f else { continue };
                if !self.dom.is_anchored_edge(e) {
                    continue;
                }
                let len = self.dom.extended.edges[&e].length.clone();
                let reach = &consumed + &len;
                if reach > *total_len {
                    continue;
                }
                let far = self.dom.extended.flag_far(f).unwrap();
                let expect = host_at(&reach)?;
                let actual = self.dom.retract_point(&CurvePoint::Vertex(far))?;
                if actual == expect
                    && self.dom.retract_point(&self.dom.extended.point_along(f, &(len.clone() / rat_int(2)))?)?
                        == host_at(&(&consumed + &(len.clone() / rat_int(2))))?
                {
                    next = Some((f, far, reach));
                    break;
                }
            }
            let Some((f, far, reach)) = next else {
                return Err(Error::Construction(format!(
                    "no continuing piece at {cur} while assigning an imported chain"
                )));
            };
            let Flag::Edge(e, side) = f else { unreachable!() };
            let len = self.dom.extended.edges[&e].length.clone();
            let img = rat_int(slope as i64) * &len;
            let last = reach == *total_len;
            let piece = if last {
                std::mem::replace(&mut walk, Walk { segs: vec![], slope })
            } else {
                let (w1, w2, cutv) = self.split_walk(&walk, &img)?;
                walk = w2;
                match self.vmap.get(&far) {
                    Some(old) if *old != cutv => {
                        return Err(Error::IncompatibleCertificates(format!(
                            "image disagreement at {far}"
                        )))
                    }
                    _ => {
                        self.vmap.insert(far, cutv);
                    }
                }
                w1
            };
            let stored: Vec<Flag> = if side == 0 {
                piece.segs
            } else {
                piece.segs.iter().rev().map(|x| x.reversed().unwrap()).collect()
            };
            let candidate = Walk { segs: stored, slope };
            match self.edge_walks.get(&e) {
                Some(existing) if *existing != candidate => {
                    return Err(Error::IncompatibleCertificates(format!(
                        "walk disagreement on domain edge {e}"
                    )))
                }
                _ => {
                    self.edge_walks.insert(e, candidate);
                }
            }
            consumed = reach;
            cur = far;
        }
        Ok(())
    }

    fn assign_ray_chain(
        &mut self,
        from: VertexId,
        segs: Vec<Flag>,
        slope: u64,
        host_at: &dyn Fn(&Rat) -> Result<CurvePoint, Error>,
    ) -> Result<(), Error> {
        let mut walk = Walk { segs, slope };
        let mut consumed = Rat::zero();
        let mut cur = from;
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > self.dom.extended.edges.len() + self.dom.extended.rays.len() + 2 {
                return Err(Error::Construction("runaway ray chain assignment".into()));
            }
            // a matching anchored ray finishes the chain
            let ray = self
                .dom
                .extended
                .rays
                .iter()
                .filter(|(id, r)| r.base == cur && self.dom.is_anchored_ray(**id))
                .map(|(id, _)| *id)
                .find(|id| {
                    let probe = self
                        .dom
                        .retract_point(&CurvePoint::OnRay(*id, rat_int(1)))
                        .ok();
                    let expect = host_at(&(&consumed + &rat_int(1))).ok();
                    probe.is_some() && probe == expect
                });
            if let Some(r) = ray {
                let candidate = walk;
                match self.ray_walks.get(&r) {
                    Some(existing) if *existing != candidate => {
                        return Err(Error::IncompatibleCertificates(format!(
                            "walk disagreement on domain ray {r}"
                        )))
                    }
                    _ => {
                        self.ray_walks.insert(r, candidate);
                    }
                }
                return Ok(());
            }
            // otherwise continue along a matching anchored edge
            let mut next: Option<(Flag, VertexId, Rat)> = None;
            for f in self.dom.extended.flags_at(cur) {
                let Flag::Edge(e, _) = f else { continue };
                if !self.dom.is_anchored_edge(e) {
                    continue;
                }
                let len = self.dom.extended.edges[&e].length.clone();
                let reach = &consumed + &len;
                let far = self.dom.extended.flag_far(f).unwrap();
                let expect = host_at(&reach)?;
                let actual = self.dom.retract_point(&CurvePoint::Vertex(far))?;
                if actual == expect {
                    next = Some((f, far, reach));
                    break;
                }
            }
            let Some((f, far, reach)) = next else {
                return Err(Error::Construction(format!(
                    "no continuing piece at {cur} while assigning an imported ray chain"
                )));
            };
            let Flag::Edge(e, side) = f else { unreachable!() };
            let len = self.dom.extended.edges[&e].length.clone();
            let img = rat_int(slope as i64) * &len;
            let (w1, w2, cutv) = self.split_walk(&walk, &img)?;
            walk = w2;
            match self.vmap.get(&far) {
                Some(old) if *old != cutv => {
                    return Err(Error::IncompatibleCertificates(format!(
                        "image disagreement at {far}"
                    )))
                }
                _ => {
                    self.vmap.insert(far, cutv);
                }
            }
            let stored: Vec<Flag> = if side == 0 {
                w1.segs
            } else {
                w1.segs.iter().rev().map(|x| x.reversed().unwrap()).collect()
            };
            let candidate = Walk { segs: stored, slope };
            match self.edge_walks.get(&e) {
                Some(existing) if *existing != candidate => {
                    return Err(Error::IncompatibleCertificates(format!(
                        "walk disagreement on domain edge {e}"
                    )))
                }
                _ => {
                    self.edge_walks.insert(e, candidate);
                }
            }
            consumed = reach;
            cur = far;
        }
    }
}

/// The extended point over a base point, inverting the retraction on the
/// anchored part.
pub fn point_over_base(m: &Modification, base: &CurvePoint) -> Result<CurvePoint, Error> {
    let base = m.base.normalize_point(base)?;
    match &base {
        CurvePoint::Vertex(v) => {
            for (ev, a) in &m.vertex_anchor {
                if *a == CurvePoint::Vertex(*v) {
                    return Ok(CurvePoint::Vertex(*ev));
                }
            }
            Err(Error::BadPoint(format!("no anchored vertex over {v}")))
        }
        CurvePoint::OnEdge(h, t) => {
            for (e, a) in &m.edge_anchor {
                if a.host != Host::Edge(*h) {
                    continue;
                }
                let len = m.extended.edges[e].length.clone();
                if *t >= a.start && *t <= &a.start + &len {
                    let local = if a.reversed { &a.start + &len - t } else { t - &a.start };
                    return m.extended.normalize_point(&CurvePoint::OnEdge(*e, local));
                }
            }
            Err(Error::BadPoint(format!("no anchored piece over {base}")))
        }
        CurvePoint::OnRay(h, t) => {
            for (e, a) in &m.edge_anchor {
                if a.host != Host::Ray(*h) {
                    continue;
                }
                let len = m.extended.edges[e].length.clone();
                if *t >= a.start && *t <= &a.start + &len {
                    let local = if a.reversed { &a.start + &len - t } else { t - &a.start };
                    return m.extended.normalize_point(&CurvePoint::OnEdge(*e, local));
                }
            }
            for (r, a) in &m.ray_anchor {
                if a.host == *h && *t >= a.start {
                    return m
                        .extended
                        .normalize_point(&CurvePoint::OnRay(*r, t - &a.start));
                }
            }
            Err(Error::BadPoint(format!("no anchored piece over {base}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hurwitz::DEFAULT_DEGREE_BOUND;

    fn segment_fn() -> BalancedFn {
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
    fn plain_function_certificate() {
        let f = segment_fn();
        let mut b = LiftBuilder::new(&f.curve);
        b.assign_function_lift(&f).unwrap();
        let cert = b.finalize(&f, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
        assert!(cert.lift.is_finite());
    }

    #[test]
    fn star_with_higher_slopes() {
        let mut c = TropicalCurve::new();
        let v = c.add_vertex();
        let r1 = c.add_ray(v);
        let r2 = c.add_ray(v);
        let r3 = c.add_ray(v);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(v, rat_int(0))]),
            slopes: BTreeMap::from([
                (Flag::Ray(r1), 2),
                (Flag::Ray(r2), -1),
                (Flag::Ray(r3), -1),
            ]),
        };
        let mut b = LiftBuilder::new(&f.curve);
        b.assign_function_lift(&f).unwrap();
        let cert = b.finalize(&f, DEFAULT_DEGREE_BOUND).unwrap();
        // profiles [2] and [1,1]: one extra transposition in the witness
        let w = &cert.witnesses[&v];
        assert_eq!(w.permutations.len(), 3);
    }

    #[test]
    fn completion_grafts_over_missed_directions() {
        // a contracted edge parked on a fresh target ray: the far endpoint
        // needs a completion ray over the continuation of that target ray
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(1));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(u);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(0))]),
            slopes: BTreeMap::from([
                (Flag::Edge(e, 0), 0),
                (Flag::Edge(e, 1), 0),
                (Flag::Ray(r1), 1),
                (Flag::Ray(r2), -1),
            ]),
        };
        let mut b = LiftBuilder::new(&f.curve);
        b.assign_function_lift(&f).unwrap();
        let o = b.ensure_line_vertex(&rat_int(0)).unwrap();
        let fresh = b.add_target_ray(o);
        let apex = b
            .tgt_ensure_vertex(&CurvePoint::OnRay(fresh, rat_int(1)))
            .unwrap();
        let seg = *b
            .tgt
            .extended
            .edges
            .iter()
            .find(|(_, te)| te.ends == [o, apex])
            .map(|(id, _)| id)
            .unwrap();
        b.set_edge_walk(Flag::Edge(e, 0), vec![Flag::Edge(seg, 0)], 1).unwrap();
        b.vmap.insert(v, apex);
        let cert = b.finalize(&f, DEFAULT_DEGREE_BOUND).unwrap();
        assert!(verify_certificate(&f, &cert, DEFAULT_DEGREE_BOUND).is_accept());
        assert!(cert.domain_mod.extended.rays.len() > 2);
    }
}
