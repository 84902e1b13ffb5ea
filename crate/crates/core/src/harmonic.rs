//! Piecewise-linear maps between tropical curves: refinement to normal form,
//! local degrees, harmonicity, pullback, path lifting, and turning points.

use std::collections::BTreeMap;

use crate::balanced::BalancedFn;
use crate::error::Error;
use crate::graph::{CurvePoint, Flag, GraphPath, TropicalCurve, VertexId};
use crate::rat::{rat_int, Rat};
use num_traits::Zero;

/// Image of a source flag: a target flag with a positive expansion slope, or
/// contraction to the image vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagImage {
    To(Flag, u64),
    Contracted,
}

/// A piecewise-linear map of tropical curves. In *refined normal form* every
/// non-contracted source edge maps onto exactly one whole target edge and
/// every non-contracted source ray onto one target ray; all deciders first
/// bring maps into this form via [`HarmonicMap::common_refinement`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonicMap {
    pub source: TropicalCurve,
    pub target: TropicalCurve,
    pub vertex_map: BTreeMap<VertexId, VertexId>,
    pub flag_map: BTreeMap<Flag, FlagImage>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HarmonicReport {
    /// Vertices with unequal directional local degrees, with a witnessing
    /// pair of directions.
    pub impure: Vec<(VertexId, Flag, Flag)>,
    /// Target flags with no preimage flag.
    pub uncovered: Vec<Flag>,
}

impl HarmonicReport {
    pub fn is_harmonic(&self) -> bool {
        self.impure.is_empty() && self.uncovered.is_empty()
    }
}

impl HarmonicMap {
    pub fn image_vertex(&self, v: VertexId) -> VertexId {
        self.vertex_map[&v]
    }

    pub fn flag_image(&self, f: Flag) -> FlagImage {
        self.flag_map[&f]
    }

    pub fn is_flag_contracted(&self, f: Flag) -> bool {
        matches!(self.flag_map[&f], FlagImage::Contracted)
    }

    /// No contracted edges or rays.
    pub fn is_finite(&self) -> bool {
        self.flag_map
            .values()
            .all(|i| !matches!(i, FlagImage::Contracted))
    }

    /// Structural sanity at the coarse level: totality, images based at image
    /// vertices, opposite edge flags consistent.
    pub fn validate(&self) -> Result<(), Error> {
        for c in [&self.source, &self.target] {
            let rep = c.validate();
            if !rep.is_valid() {
                return Err(Error::InvalidCurve(rep.problems.join("; ")));
            }
        }
        for v in &self.source.vertices {
            let w = self
                .vertex_map
                .get(v)
                .ok_or_else(|| Error::InvalidMap(format!("no image for {v}")))?;
            if !self.target.vertices.contains(w) {
                return Err(Error::InvalidMap(format!("image of {v} missing in target")));
            }
        }
        for f in self.source.all_flags() {
            let img = self
                .flag_map
                .get(&f)
                .ok_or_else(|| Error::InvalidMap(format!("no image for flag {}", f.key())))?;
            if let FlagImage::To(g, s) = img {
                if *s == 0 {
                    return Err(Error::InvalidMap(format!("zero slope on flag {}", f.key())));
                }
                let exists = match g {
                    Flag::Edge(e, _) => self.target.edges.contains_key(e),
                    Flag::Ray(r) => self.target.rays.contains_key(r),
                };
                if !exists {
                    return Err(Error::InvalidMap(format!(
                        "image of flag {} does not exist in the target",
                        f.key()
                    )));
                }
                let base = self.source.flag_base(f);
                if self.target.flag_base(*g) != self.vertex_map[&base] {
                    return Err(Error::InvalidMap(format!(
                        "image of flag {} not based at image of its base",
                        f.key()
                    )));
                }
            }
        }
        for (id, _) in &self.source.edges {
            let i0 = self.flag_map[&Flag::Edge(*id, 0)];
            let i1 = self.flag_map[&Flag::Edge(*id, 1)];
            match (i0, i1) {
                (FlagImage::Contracted, FlagImage::Contracted) => {
                    let e = &self.source.edges[id];
                    if self.vertex_map[&e.ends[0]] != self.vertex_map[&e.ends[1]] {
                        return Err(Error::InvalidMap(format!(
                            "contracted edge {id} with endpoints mapping apart"
                        )));
                    }
                }
                (FlagImage::To(_, s0), FlagImage::To(_, s1)) => {
                    if s0 != s1 {
                        return Err(Error::InvalidMap(format!(
                            "edge {id} flags carry different slopes"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidMap(format!(
                        "edge {id} contracted on one side only"
                    )));
                }
            }
        }
        // rays map to rays (possibly through edges before refinement), never
        // backwards along an edge into a dead end: checked during refinement.
        Ok(())
    }

    /// True when already in refined normal form.
    pub fn is_refined(&self) -> bool {
        for (id, e) in &self.source.edges {
            let Some(img0) = self.flag_map.get(&Flag::Edge(*id, 0)) else { return false };
            if let FlagImage::To(g0, s) = *img0 {
                let Some(&FlagImage::To(g1, _)) = self.flag_map.get(&Flag::Edge(*id, 1)) else {
                    return false;
                };
                if g0.reversed() != Some(g1) {
                    return false;
                }
                let Some(tlen) = self.target.flag_length(g0) else {
                    return false;
                };
                if tlen != rat_int(s as i64) * &e.length {
                    return false;
                }
            }
        }
        for (id, _) in &self.source.rays {
            match self.flag_map.get(&Flag::Ray(*id)) {
                Some(FlagImage::To(g, _)) => {
                    if !matches!(g, Flag::Ray(_)) {
                        return false;
                    }
                }
                Some(FlagImage::Contracted) => {}
                None => return false,
            }
        }
        true
    }

    /// Walks the target from `start_flag` with forced continuations, taking
    /// whole segments, for exactly `budget` length. Returns the traversed
    /// flags, or the partial walk and remaining budget when it gets stuck at
    /// a branch vertex or enters a ray.
    fn forced_walk(&self, start: Flag, budget: &Rat) -> (Vec<Flag>, Rat) {
        let mut flags = vec![];
        let mut remaining = budget.clone();
        let mut cur = start;
        loop {
            match self.target.flag_length(cur) {
                None => {
                    // target ray: consumes everything that is left
                    return (flags, remaining);
                }
                Some(len) => {
                    if len > remaining {
                        return (flags, remaining);
                    }
                    flags.push(cur);
                    remaining -= len;
                    if remaining.is_zero() {
                        return (flags, remaining);
                    }
                    let far = self.target.flag_far(cur).unwrap();
                    let back = cur.reversed().unwrap();
                    let mut candidates = self
                        .target
                        .flags_at(far)
                        .into_iter()
                        .filter(|f| *f != back);
                    let Some(next) = candidates.next() else {
                        return (flags, remaining);
                    };
                    if candidates.next().is_some() {
                        return (flags, remaining); // branch: ambiguous
                    }
                    cur = next;
                }
            }
        }
    }

    /// Refined normal form: subdivides source edges and rays so that each
    /// non-contracted element maps onto exactly one target element. The
    /// target is not changed; the result is isometric to the input and the
    /// operation is idempotent.
    pub fn common_refinement(&self) -> Result<HarmonicMap, Error> {
        self.validate()?;
        let mut map = self.clone();
        loop {
            let mut changed = false;
            // --- edges ---
            let edge_ids: Vec<_> = map.source.edges.keys().copied().collect();
            for id in edge_ids {
                let e = map.source.edges[&id].clone();
                let h0 = Flag::Edge(id, 0);
                let h1 = Flag::Edge(id, 1);
                let (FlagImage::To(g0, s), FlagImage::To(g1, _)) =
                    (map.flag_map[&h0], map.flag_map[&h1])
                else {
                    continue; // contracted: nothing to refine
                };
                let total = rat_int(s as i64) * &e.length;
                // already refined?
                if g0.reversed() == Some(g1) {
                    match map.target.flag_length(g0) {
                        Some(l) if l == total => continue,
                        _ => {
                            return Err(Error::MetricInconsistency(format!(
                                "edge {id}: slope times length does not match its image"
                            )))
                        }
                    }
                }
                // walk forward from u, then backward from v, and meet.
                let (fw, fw_rem) = map.forced_walk(g0, &total);
                let segs: Vec<Flag> = if fw_rem.is_zero() {
                    // full path found: last flag must be the reverse of g1
                    if fw.last().and_then(|f| f.reversed()) != Some(g1) {
                        return Err(Error::MetricInconsistency(format!(
                            "edge {id}: declared far image inconsistent with walk"
                        )));
                    }
                    fw
                } else {
                    let (bw, bw_rem) = map.forced_walk(g1, &fw_rem);
                    if !bw_rem.is_zero() {
                        return Err(Error::MetricInconsistency(format!(
                            "edge {id}: image path is ambiguous or mismatched"
                        )));
                    }
                    // ends must meet at a common vertex
                    let f_end = match fw.last() {
                        Some(f) => map.target.flag_far(*f).unwrap(),
                        None => map.target.flag_base(g0),
                    };
                    let b_end = match bw.last() {
                        Some(f) => map.target.flag_far(*f).unwrap(),
                        None => map.target.flag_base(g1),
                    };
                    if f_end != b_end {
                        return Err(Error::MetricInconsistency(format!(
                            "edge {id}: image walks do not meet"
                        )));
                    }
                    let mut segs = fw;
                    segs.extend(bw.iter().rev().map(|f| f.reversed().unwrap()));
                    segs
                };
                if segs.len() <= 1 {
                    continue;
                }
                map = map.split_edge_along(id, s, &segs)?;
                changed = true;
                break; // ids changed; restart scan
            }
            if changed {
                continue;
            }
            // --- rays ---
            let ray_ids: Vec<_> = map.source.rays.keys().copied().collect();
            for id in ray_ids {
                let rf = Flag::Ray(id);
                let FlagImage::To(g, s) = map.flag_map[&rf] else { continue };
                if matches!(g, Flag::Ray(_)) {
                    continue;
                }
                // walk until a target ray is entered
                let mut segs = vec![];
                let mut cur = g;
                let guard = map.target.edges.len() * 2 + map.target.rays.len() + 2;
                loop {
                    if segs.len() > guard {
                        return Err(Error::MetricInconsistency(format!(
                            "ray {id}: image never reaches a target ray"
                        )));
                    }
                    if map.target.flag_length(cur).is_none() {
                        segs.push(cur);
                        break;
                    }
                    segs.push(cur);
                    let far = map.target.flag_far(cur).unwrap();
                    let back = cur.reversed().unwrap();
                    let mut candidates =
                        map.target.flags_at(far).into_iter().filter(|f| *f != back);
                    let Some(next) = candidates.next() else {
                        return Err(Error::MetricInconsistency(format!(
                            "ray {id}: image walk dead-ends"
                        )));
                    };
                    if candidates.next().is_some() {
                        return Err(Error::MetricInconsistency(format!(
                            "ray {id}: image walk is ambiguous at a branch vertex"
                        )));
                    }
                    cur = next;
                }
                if segs.len() <= 1 {
                    continue;
                }
                map = map.split_ray_along(id, s, &segs)?;
                changed = true;
                break;
            }
            if !changed {
                break;
            }
        }
        debug_assert!(map.is_refined());
        Ok(map)
    }

    /// Splits source edge `id` (slope `s`) along the given target path; the
    /// path's segments must all be bounded target edges.
    fn split_edge_along(&self, id: crate::graph::EdgeId, s: u64, segs: &[Flag]) -> Result<HarmonicMap, Error> {
        let mut out = self.clone();
        let h0 = Flag::Edge(id, 0);
        let h1 = Flag::Edge(id, 1);
        out.flag_map.remove(&h0);
        out.flag_map.remove(&h1);
        // current piece: (edge id, direction-side of travel matching h0)
        let mut cur_edge = id;
        let mut cur_side = 0u8;
        for (i, seg) in segs.iter().enumerate() {
            let seg_target_len = out.target.flag_length(*seg).expect("bounded segment");
            let seg_source_len = seg_target_len / rat_int(s as i64);
            let travel = Flag::Edge(cur_edge, cur_side);
            let last = i + 1 == segs.len();
            if last {
                out.flag_map.insert(travel, FlagImage::To(*seg, s));
                out.flag_map
                    .insert(travel.reversed().unwrap(), FlagImage::To(seg.reversed().unwrap(), s));
            } else {
                // cut the current piece at seg_source_len from the travel base
                let cut = out.source.point_along(travel, &seg_source_len)?;
                let CurvePoint::OnEdge(_, stored_t) = &cut else {
                    return Err(Error::MetricInconsistency(
                        "refinement cut lands on a vertex".into(),
                    ));
                };
                let _ = stored_t;
                let (src2, sub) = out.source.subdivide(&cut)?;
                out.source = src2;
                out.vertex_map
                    .insert(sub.new_vertex, out.target.flag_far(*seg).unwrap());
                // low piece covers [0, t] of the stored edge; figure out which
                // piece carries the travel direction's first part.
                let crate::graph::HighPiece::Edge(high) = sub.high else { unreachable!() };
                let (first, first_side, rest, rest_side) = if cur_side == 0 {
                    (sub.low_edge, 0u8, high, 0u8)
                } else {
                    (high, 1u8, sub.low_edge, 1u8)
                };
                out.flag_map
                    .insert(Flag::Edge(first, first_side), FlagImage::To(*seg, s));
                out.flag_map.insert(
                    Flag::Edge(first, 1 - first_side),
                    FlagImage::To(seg.reversed().unwrap(), s),
                );
                cur_edge = rest;
                cur_side = rest_side;
            }
        }
        Ok(out)
    }

    /// Splits source ray `id` (slope `s`) along the given target path whose
    /// last segment is a target ray.
    fn split_ray_along(&self, id: crate::graph::RayId, s: u64, segs: &[Flag]) -> Result<HarmonicMap, Error> {
        let mut out = self.clone();
        out.flag_map.remove(&Flag::Ray(id));
        let mut cur: Flag = Flag::Ray(id);
        for (i, seg) in segs.iter().enumerate() {
            let last = i + 1 == segs.len();
            if last {
                out.flag_map.insert(cur, FlagImage::To(*seg, s));
            } else {
                let seg_len = out.target.flag_length(*seg).unwrap() / rat_int(s as i64);
                let Flag::Ray(cur_ray) = cur else {
                    unreachable!("ray suffix stays a ray")
                };
                let (src2, sub) = out
                    .source
                    .subdivide(&CurvePoint::OnRay(cur_ray, seg_len))?;
                out.source = src2;
                out.vertex_map
                    .insert(sub.new_vertex, out.target.flag_far(*seg).unwrap());
                out.flag_map
                    .insert(Flag::Edge(sub.low_edge, 0), FlagImage::To(*seg, s));
                out.flag_map.insert(
                    Flag::Edge(sub.low_edge, 1),
                    FlagImage::To(seg.reversed().unwrap(), s),
                );
                let crate::graph::HighPiece::Ray(high) = sub.high else { unreachable!() };
                cur = Flag::Ray(high);
            }
        }
        Ok(out)
    }

    /// Image of a point under a refined map.
    pub fn image_point(&self, p: &CurvePoint) -> Result<CurvePoint, Error> {
        match self.source.normalize_point(p)? {
            CurvePoint::Vertex(v) => Ok(CurvePoint::Vertex(self.vertex_map[&v])),
            CurvePoint::OnEdge(e, t) => match self.flag_map[&Flag::Edge(e, 0)] {
                FlagImage::Contracted => {
                    Ok(CurvePoint::Vertex(self.vertex_map[&self.source.edges[&e].ends[0]]))
                }
                FlagImage::To(g, s) => self.target.point_along(g, &(rat_int(s as i64) * t)),
            },
            CurvePoint::OnRay(r, t) => match self.flag_map[&Flag::Ray(r)] {
                FlagImage::Contracted => {
                    Ok(CurvePoint::Vertex(self.vertex_map[&self.source.rays[&r].base]))
                }
                FlagImage::To(g, s) => self.target.point_along(g, &(rat_int(s as i64) * t)),
            },
        }
    }

    /// Local degree at a source point in a given target direction; the map
    /// must be refined. For interior points the accepted directions are the
    /// flags of the element containing the image.
    pub fn local_degree(&self, p: &CurvePoint, direction: Flag) -> Result<u64, Error> {
        match self.source.normalize_point(p)? {
            CurvePoint::Vertex(v) => {
                let mut deg = 0;
                for f in self.source.flags_at(v) {
                    if let FlagImage::To(g, s) = self.flag_map[&f] {
                        if g == direction {
                            deg += s;
                        }
                    }
                }
                Ok(deg)
            }
            CurvePoint::OnEdge(e, _) => match self.flag_map[&Flag::Edge(e, 0)] {
                FlagImage::Contracted => Ok(0),
                FlagImage::To(g, s) => {
                    let same_edge = match (g, direction) {
                        (Flag::Edge(a, _), Flag::Edge(b, _)) => a == b,
                        (Flag::Ray(a), Flag::Ray(b)) => a == b,
                        _ => false,
                    };
                    Ok(if same_edge { s } else { 0 })
                }
            },
            CurvePoint::OnRay(r, _) => match self.flag_map[&Flag::Ray(r)] {
                FlagImage::Contracted => Ok(0),
                FlagImage::To(g, s) => {
                    let same = match (g, direction) {
                        (Flag::Ray(a), Flag::Ray(b)) => a == b,
                        (Flag::Edge(a, _), Flag::Edge(b, _)) => a == b,
                        _ => false,
                    };
                    Ok(if same { s } else { 0 })
                }
            },
        }
    }

    /// Harmonicity: locally pure degree at every point plus surjectivity.
    /// On a refined map only vertices need pure-degree inspection.
    pub fn is_harmonic(&self) -> Result<HarmonicReport, Error> {
        if !self.is_refined() {
            return Err(Error::InvalidMap("map must be refined".into()));
        }
        let mut report = HarmonicReport::default();
        for &v in &self.source.vertices {
            let w = self.vertex_map[&v];
            let dirs = self.target.flags_at(w);
            if dirs.is_empty() {
                continue;
            }
            let degs: Vec<u64> = dirs
                .iter()
                .map(|d| self.local_degree(&CurvePoint::Vertex(v), *d).unwrap())
                .collect();
            if let Some(pos) = degs.iter().position(|d| *d != degs[0]) {
                report.impure.push((v, dirs[0], dirs[pos]));
            }
        }
        let mut covered: BTreeMap<Flag, bool> =
            self.target.all_flags().into_iter().map(|f| (f, false)).collect();
        for (_, img) in &self.flag_map {
            if let FlagImage::To(g, _) = img {
                covered.insert(*g, true);
            }
        }
        for (g, c) in covered {
            if !c {
                report.uncovered.push(g);
            }
        }
        Ok(report)
    }

    /// Pullback of a balanced function on the target: values compose, slopes
    /// multiply by the expansion factor, contracted flags get slope zero.
    pub fn pullback(&self, g: &BalancedFn) -> Result<BalancedFn, Error> {
        if !self.is_refined() {
            return Err(Error::InvalidMap("map must be refined".into()));
        }
        g.validate()?;
        if g.curve != self.target {
            return Err(Error::InvalidMap("function not defined on the map target".into()));
        }
        let mut values = BTreeMap::new();
        for &v in &self.source.vertices {
            values.insert(v, g.values[&self.vertex_map[&v]].clone());
        }
        let mut slopes = BTreeMap::new();
        for f in self.source.all_flags() {
            let s = match self.flag_map[&f] {
                FlagImage::Contracted => 0,
                FlagImage::To(gf, s) => s as i64 * g.slopes[&gf],
            };
            slopes.insert(f, s);
        }
        Ok(BalancedFn { curve: self.source.clone(), values, slopes })
    }

    /// Lifts a target path backwards from `terminal`, one edge at a time, as
    /// local surjectivity of harmonic maps guarantees is possible. When
    /// `avoid` is given and an alternative exists, the lift's last flag
    /// differs from it.
    pub fn lift_path(
        &self,
        target_path: &GraphPath,
        terminal: &CurvePoint,
        avoid: Option<Flag>,
    ) -> Result<GraphPath, Error> {
        let terminal = self.source.normalize_point(terminal)?;
        let CurvePoint::Vertex(tv) = terminal else {
            return Err(Error::NotLiftable("terminal must be a vertex".into()));
        };
        let CurvePoint::Vertex(path_end) = self.target.normalize_point(&target_path.end)? else {
            return Err(Error::NotLiftable("target path must end at a vertex".into()));
        };
        if self.vertex_map[&tv] != path_end {
            return Err(Error::NotLiftable(
                "terminal does not map to the end of the target path".into(),
            ));
        }
        let mut rev_steps: Vec<Flag> = Vec::new();
        let mut cur = tv;
        for (i, t_flag) in target_path.steps.iter().enumerate().rev() {
            let back = t_flag
                .reversed()
                .ok_or_else(|| Error::NotLiftable("ray step in target path".into()))?;
            let mut candidates: Vec<Flag> = self
                .source
                .flags_at(cur)
                .into_iter()
                .filter(|f| matches!(self.flag_map[f], FlagImage::To(g, _) if g == back))
                .collect();
            if candidates.is_empty() {
                return Err(Error::NotLiftable(format!(
                    "no preimage flag over {} at {cur}",
                    back.key()
                )));
            }
            let is_last = i + 1 == target_path.steps.len();
            if is_last {
                if let Some(av) = avoid {
                    if candidates.len() > 1 {
                        candidates.retain(|f| *f != av && f.reversed() != Some(av));
                        if candidates.is_empty() {
                            // all alternatives were the avoided flag itself
                            candidates = self
                                .source
                                .flags_at(cur)
                                .into_iter()
                                .filter(|f| {
                                    matches!(self.flag_map[f], FlagImage::To(g, _) if g == back)
                                })
                                .collect();
                        }
                    }
                }
            }
            let chosen = candidates[0];
            let far = self
                .source
                .flag_far(chosen)
                .ok_or_else(|| Error::NotLiftable("lift runs onto a ray".into()))?;
            rev_steps.push(chosen.reversed().unwrap());
            cur = far;
        }
        rev_steps.reverse();
        Ok(GraphPath {
            start: CurvePoint::Vertex(cur),
            steps: rev_steps,
            end: CurvePoint::Vertex(tv),
            allow_backtrack: true,
        })
    }

    /// Interior vertices of the path carrying a second flag with the same
    /// image direction as the arriving flag.
    pub fn turning_points(&self, path: &GraphPath) -> Result<Vec<CurvePoint>, Error> {
        path.check(&self.source)?;
        let mut out = Vec::new();
        for i in 1..path.steps.len() {
            let arrive = path.steps[i - 1];
            let Some(p) = self.source.flag_far(arrive) else {
                continue;
            };
            let Some(back) = arrive.reversed() else { continue };
            let FlagImage::To(back_img, _) = self.flag_map[&back] else {
                continue;
            };
            let turning = self.source.flags_at(p).into_iter().any(|f| {
                f != back && matches!(self.flag_map[&f], FlagImage::To(g, _) if g == back_img)
            });
            if turning {
                out.push(CurvePoint::Vertex(p));
            }
        }
        Ok(out)
    }

    /// Identity map on a curve.
    pub fn identity(curve: &TropicalCurve) -> HarmonicMap {
        HarmonicMap {
            source: curve.clone(),
            target: curve.clone(),
            vertex_map: curve.vertices.iter().map(|&v| (v, v)).collect(),
            flag_map: curve
                .all_flags()
                .into_iter()
                .map(|f| (f, FlagImage::To(f, 1)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeId, RayId};
    use crate::rat::rat;

    /// Degree-2 cover of a segment-with-rays by a cycle-with-rays.
    /// Target: p --(1)-- q with a ray at each end; source: 2-cycle {x,y}
    /// with a ray at x over p's ray and a ray at y over q's ray, slope 2.
    fn cycle_double_cover() -> HarmonicMap {
        let mut target = TropicalCurve::new();
        let p = target.add_vertex();
        let q = target.add_vertex();
        let te = target.add_edge(p, q, rat_int(1));
        let tl = target.add_ray(p);
        let tr = target.add_ray(q);

        let mut source = TropicalCurve::new();
        let x = source.add_vertex();
        let y = source.add_vertex();
        let a = source.add_edge(x, y, rat_int(1));
        let b = source.add_edge(x, y, rat_int(1));
        let rl = source.add_ray(x);
        let rr = source.add_ray(y);

        HarmonicMap {
            source,
            target,
            vertex_map: BTreeMap::from([(x, p), (y, q)]),
            flag_map: BTreeMap::from([
                (Flag::Edge(a, 0), FlagImage::To(Flag::Edge(te, 0), 1)),
                (Flag::Edge(a, 1), FlagImage::To(Flag::Edge(te, 1), 1)),
                (Flag::Edge(b, 0), FlagImage::To(Flag::Edge(te, 0), 1)),
                (Flag::Edge(b, 1), FlagImage::To(Flag::Edge(te, 1), 1)),
                (Flag::Ray(rl), FlagImage::To(Flag::Ray(tl), 2)),
                (Flag::Ray(rr), FlagImage::To(Flag::Ray(tr), 2)),
            ]),
        }
    }

    #[test]
    fn identity_is_harmonic() {
        let c = TropicalCurve::line();
        let id = HarmonicMap::identity(&c);
        id.validate().unwrap();
        assert!(id.is_refined());
        assert!(id.is_harmonic().unwrap().is_harmonic());
        assert!(id.is_finite());
    }

    #[test]
    fn double_cover_is_harmonic_degree_two() {
        let m = cycle_double_cover();
        m.validate().unwrap();
        assert!(m.is_refined());
        assert!(m.is_harmonic().unwrap().is_harmonic());
        // z -> z^s local model: both directions see degree 2 at x
        let dirs = m.target.flags_at(VertexId(0));
        for d in dirs {
            assert_eq!(m.local_degree(&CurvePoint::Vertex(VertexId(0)), d).unwrap(), 2);
        }
        // interior point of a slope-1 edge has degree 1 both ways
        let p = CurvePoint::OnEdge(EdgeId(0), rat(1, 2));
        assert_eq!(m.local_degree(&p, Flag::Edge(EdgeId(0), 0)).unwrap(), 1);
        assert_eq!(m.local_degree(&p, Flag::Edge(EdgeId(0), 1)).unwrap(), 1);
    }

    #[test]
    fn impure_vertex_is_reported() {
        let mut m = cycle_double_cover();
        // break purity at y: send ray rr with slope 1 instead of 2
        m.flag_map.insert(Flag::Ray(RayId(1)), FlagImage::To(Flag::Ray(RayId(1)), 1));
        let rep = m.is_harmonic().unwrap();
        assert!(!rep.is_harmonic());
        assert!(rep.impure.iter().any(|(v, _, _)| *v == VertexId(1)));
    }

    #[test]
    fn missing_direction_gives_degree_zero_and_uncovered() {
        let mut m = cycle_double_cover();
        // drop the source ray over the left target ray
        m.source.rays.remove(&RayId(0));
        m.flag_map.remove(&Flag::Ray(RayId(0)));
        assert_eq!(
            m.local_degree(&CurvePoint::Vertex(VertexId(0)), Flag::Ray(RayId(0))).unwrap(),
            0
        );
        let rep = m.is_harmonic().unwrap();
        assert!(rep.uncovered.contains(&Flag::Ray(RayId(0))));
    }

    #[test]
    fn refinement_splits_edge_crossing_a_target_vertex() {
        // target: path p -(1)- q -(1)- m with rays at p, m
        let mut target = TropicalCurve::new();
        let p = target.add_vertex();
        let q = target.add_vertex();
        let mm = target.add_vertex();
        let e1 = target.add_edge(p, q, rat_int(1));
        let e2 = target.add_edge(q, mm, rat_int(1));
        let tl = target.add_ray(p);
        let tr = target.add_ray(mm);
        // source: single edge of length 2 mapping across q, rays at both ends
        let mut source = TropicalCurve::new();
        let x = source.add_vertex();
        let y = source.add_vertex();
        let e = source.add_edge(x, y, rat_int(2));
        let rl = source.add_ray(x);
        let rr = source.add_ray(y);
        let m = HarmonicMap {
            source,
            target,
            vertex_map: BTreeMap::from([(x, p), (y, mm)]),
            flag_map: BTreeMap::from([
                (Flag::Edge(e, 0), FlagImage::To(Flag::Edge(e1, 0), 1)),
                (Flag::Edge(e, 1), FlagImage::To(Flag::Edge(e2, 1), 1)),
                (Flag::Ray(rl), FlagImage::To(Flag::Ray(tl), 1)),
                (Flag::Ray(rr), FlagImage::To(Flag::Ray(tr), 1)),
            ]),
        };
        assert!(!m.is_refined());
        let r = m.common_refinement().unwrap();
        assert!(r.is_refined());
        assert_eq!(r.source.edges.len(), 2);
        assert!(r.is_harmonic().unwrap().is_harmonic());
        // idempotent
        let r2 = r.common_refinement().unwrap();
        assert_eq!(r2.source, r.source);
        // answers preserved at persistent points
        assert!(r.is_finite());
    }

    #[test]
    fn refinement_metric_mismatch_errors() {
        // slope-2 edge of length 1 onto a target path of length 3
        let mut target = TropicalCurve::new();
        let p = target.add_vertex();
        let q = target.add_vertex();
        let mm = target.add_vertex();
        let e1 = target.add_edge(p, q, rat_int(1));
        let e2 = target.add_edge(q, mm, rat_int(2));
        let mut source = TropicalCurve::new();
        let x = source.add_vertex();
        let y = source.add_vertex();
        let e = source.add_edge(x, y, rat_int(1));
        let m = HarmonicMap {
            source,
            target,
            vertex_map: BTreeMap::from([(x, p), (y, mm)]),
            flag_map: BTreeMap::from([
                (Flag::Edge(e, 0), FlagImage::To(Flag::Edge(e1, 0), 2)),
                (Flag::Edge(e, 1), FlagImage::To(Flag::Edge(e2, 1), 2)),
            ]),
        };
        assert!(matches!(m.common_refinement(), Err(Error::MetricInconsistency(_))));
    }

    #[test]
    fn pullback_constant_and_chain_rule() {
        let m = cycle_double_cover();
        // constant on the target
        let g_const = BalancedFn {
            curve: m.target.clone(),
            values: m.target.vertices.iter().map(|&v| (v, rat_int(5))).collect(),
            slopes: m.target.all_flags().into_iter().map(|f| (f, 0)).collect(),
        };
        let pb = m.pullback(&g_const).unwrap();
        assert!(pb.is_constant());
        assert!(pb.is_balanced().is_balanced());

        // coordinate function: slope +1 from p to q
        let g = BalancedFn {
            curve: m.target.clone(),
            values: BTreeMap::from([(VertexId(0), rat_int(0)), (VertexId(1), rat_int(1))]),
            slopes: BTreeMap::from([
                (Flag::Edge(EdgeId(0), 0), 1),
                (Flag::Edge(EdgeId(0), 1), -1),
                (Flag::Ray(RayId(0)), -1),
                (Flag::Ray(RayId(1)), 1),
            ]),
        };
        g.validate().unwrap();
        assert!(g.is_balanced().is_balanced());
        let pb = m.pullback(&g).unwrap();
        pb.validate().unwrap();
        // balanced at the turning vertex y: -1 -1 + 2 = 0
        assert!(pb.is_balanced().is_balanced());
        assert_eq!(pb.slopes[&Flag::Ray(RayId(1))], 2);
    }

    #[test]
    fn lift_through_identity_and_through_cover() {
        let m = cycle_double_cover();
        let id = HarmonicMap::identity(&m.target);
        let w = GraphPath {
            start: CurvePoint::Vertex(VertexId(0)),
            steps: vec![Flag::Edge(EdgeId(0), 0)],
            end: CurvePoint::Vertex(VertexId(1)),
            allow_backtrack: false,
        };
        let lifted = id.lift_path(&w, &CurvePoint::Vertex(VertexId(1)), None).unwrap();
        assert_eq!(lifted.steps, w.steps);

        // lift through the double cover ending at y
        let lifted = m.lift_path(&w, &CurvePoint::Vertex(VertexId(1)), None).unwrap();
        assert_eq!(lifted.steps.len(), 1);
        // avoid the first edge: the lift must use the other one
        let first = lifted.steps[0];
        let lifted2 = m
            .lift_path(&w, &CurvePoint::Vertex(VertexId(1)), Some(first))
            .unwrap();
        assert_ne!(lifted2.steps[0], first);
        // image check, flag by flag
        for (sf, tf) in lifted2.steps.iter().zip(w.steps.iter()) {
            match m.flag_map[sf] {
                FlagImage::To(g, _) => assert_eq!(g, *tf),
                _ => panic!("contracted step in lift"),
            }
        }
    }

    #[test]
    fn turning_points_of_cycle_cover() {
        let m = cycle_double_cover();
        // walk around the cycle: a then b-reversed returns to x через y
        let path = GraphPath {
            start: CurvePoint::Vertex(VertexId(0)),
            steps: vec![Flag::Edge(EdgeId(0), 0), Flag::Edge(EdgeId(1), 1)],
            end: CurvePoint::Vertex(VertexId(0)),
            allow_backtrack: false,
        };
        let tps = m.turning_points(&path).unwrap();
        assert_eq!(tps, vec![CurvePoint::Vertex(VertexId(1))]);

        // injectively mapped slope-1 path has no turning points
        let id = HarmonicMap::identity(&m.target);
        let w = GraphPath {
            start: CurvePoint::Vertex(VertexId(0)),
            steps: vec![Flag::Edge(EdgeId(0), 0)],
            end: CurvePoint::Vertex(VertexId(1)),
            allow_backtrack: false,
        };
        assert!(id.turning_points(&w).unwrap().is_empty());
    }
}
