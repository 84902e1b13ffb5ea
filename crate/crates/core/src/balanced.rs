//! Balanced integer-slope piecewise-linear functions to the real line.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::Error;
use crate::graph::{CurvePoint, EdgeId, Flag, RayId, Subdivision, TropicalCurve, VertexId};
use crate::rat::{rat_int, Rat};
use num_traits::Zero;

/// A piecewise-linear function with integer slopes: a rational value at every
/// vertex and an outgoing slope at every flag. Values on edge interiors and
/// rays are determined by linear interpolation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedFn {
    pub curve: TropicalCurve,
    pub values: BTreeMap<VertexId, Rat>,
    pub slopes: BTreeMap<Flag, i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BalanceReport {
    /// Vertices where the outgoing slopes do not sum to zero.
    pub violations: Vec<VertexId>,
}

impl BalanceReport {
    pub fn is_balanced(&self) -> bool {
        self.violations.is_empty()
    }
}

impl BalancedFn {
    /// Structural validity: total data, opposite slopes on edge flags, and
    /// value differences matching slope times length.
    pub fn validate(&self) -> Result<(), Error> {
        let report = self.curve.validate();
        if !report.is_valid() {
            return Err(Error::InvalidCurve(report.problems.join("; ")));
        }
        for v in &self.curve.vertices {
            if !self.values.contains_key(v) {
                return Err(Error::InvalidFunction(format!("missing value at {v}")));
            }
        }
        for f in self.curve.all_flags() {
            if !self.slopes.contains_key(&f) {
                return Err(Error::InvalidFunction(format!("missing slope at {}", f.key())));
            }
        }
        for (id, e) in &self.curve.edges {
            let s0 = self.slopes[&Flag::Edge(*id, 0)];
            let s1 = self.slopes[&Flag::Edge(*id, 1)];
            if s0 != -s1 {
                return Err(Error::InvalidFunction(format!(
                    "edge {id} slopes not opposite: {s0} vs {s1}"
                )));
            }
            let dv = &self.values[&e.ends[1]] - &self.values[&e.ends[0]];
            if dv != rat_int(s0) * &e.length {
                return Err(Error::InvalidFunction(format!(
                    "edge {id} value difference does not match slope times length"
                )));
            }
        }
        Ok(())
    }

    pub fn is_balanced(&self) -> BalanceReport {
        let mut violations = Vec::new();
        for &v in &self.curve.vertices {
            let total: i64 = self
                .curve
                .flags_at(v)
                .iter()
                .map(|f| self.slopes[f])
                .sum();
            if total != 0 {
                violations.push(v);
            }
        }
        BalanceReport { violations }
    }

    pub fn slope(&self, f: Flag) -> i64 {
        self.slopes[&f]
    }

    pub fn is_contracted(&self, f: Flag) -> bool {
        self.slopes[&f] == 0
    }

    pub fn edge_contracted(&self, e: EdgeId) -> bool {
        self.is_contracted(Flag::Edge(e, 0))
    }

    pub fn ray_contracted(&self, r: RayId) -> bool {
        self.is_contracted(Flag::Ray(r))
    }

    pub fn is_constant(&self) -> bool {
        self.slopes.values().all(|s| *s == 0)
    }

    /// Value at any point, by interpolation.
    pub fn value_at(&self, p: &CurvePoint) -> Result<Rat, Error> {
        match self.curve.normalize_point(p)? {
            CurvePoint::Vertex(v) => Ok(self.values[&v].clone()),
            CurvePoint::OnEdge(e, t) => {
                let base = self.curve.edges[&e].ends[0];
                Ok(&self.values[&base] + rat_int(self.slopes[&Flag::Edge(e, 0)]) * t)
            }
            CurvePoint::OnRay(r, t) => {
                let base = self.curve.rays[&r].base;
                Ok(&self.values[&base] + rat_int(self.slopes[&Flag::Ray(r)]) * t)
            }
        }
    }

    /// Adds a constant; all deciders are invariant under this.
    pub fn translate(&self, c: &Rat) -> BalancedFn {
        let mut out = self.clone();
        for v in out.values.values_mut() {
            *v += c;
        }
        out
    }

    /// Scales all lengths (and hence values) by a positive rational.
    pub fn scale(&self, c: &Rat) -> BalancedFn {
        assert!(*c > Rat::zero(), "scale factor must be positive");
        let mut out = self.clone();
        for e in out.curve.edges.values_mut() {
            e.length = &e.length * c;
        }
        for v in out.values.values_mut() {
            *v = &*v * c;
        }
        out
    }

    /// Subdivides the underlying curve and induces the function on the
    /// pieces; returns the new function, the new vertex, and the split data.
    pub fn subdivide(&self, at: &CurvePoint) -> Result<(BalancedFn, Subdivision), Error> {
        let at = self.curve.normalize_point(at)?;
        let value = self.value_at(&at)?;
        let (slope_low, slope_high) = match &at {
            CurvePoint::Vertex(_) => return Err(Error::AlreadyVertex),
            CurvePoint::OnEdge(e, _) => {
                (self.slopes[&Flag::Edge(*e, 0)], self.slopes[&Flag::Edge(*e, 0)])
            }
            CurvePoint::OnRay(r, _) => (self.slopes[&Flag::Ray(*r)], self.slopes[&Flag::Ray(*r)]),
        };
        let (curve, sub) = self.curve.subdivide(&at)?;
        let mut values = self.values.clone();
        values.insert(sub.new_vertex, value);
        let mut slopes = self.slopes.clone();
        match &at {
            CurvePoint::OnEdge(e, _) => {
                slopes.remove(&Flag::Edge(*e, 0));
                slopes.remove(&Flag::Edge(*e, 1));
            }
            CurvePoint::OnRay(r, _) => {
                slopes.remove(&Flag::Ray(*r));
            }
            CurvePoint::Vertex(_) => unreachable!(),
        }
        slopes.insert(Flag::Edge(sub.low_edge, 0), slope_low);
        slopes.insert(Flag::Edge(sub.low_edge, 1), -slope_low);
        match sub.high {
            crate::graph::HighPiece::Edge(h) => {
                slopes.insert(Flag::Edge(h, 0), slope_high);
                slopes.insert(Flag::Edge(h, 1), -slope_high);
            }
            crate::graph::HighPiece::Ray(h) => {
                slopes.insert(Flag::Ray(h), slope_high);
            }
        }
        Ok((BalancedFn { curve, values, slopes }, sub))
    }

    /// Connected components of the contracted locus (edges of slope zero),
    /// as vertex sets together with their contracted edges. Vertices with no
    /// incident contracted edge form singleton components only when they are
    /// incident to something contracted; isolated non-contracted vertices are
    /// not reported.
    pub fn contracted_components(&self) -> Vec<(BTreeSet<VertexId>, BTreeSet<EdgeId>)> {
        let contracted: BTreeSet<EdgeId> = self
            .curve
            .edges
            .keys()
            .copied()
            .filter(|e| self.edge_contracted(*e))
            .collect();
        let mut seen: BTreeSet<VertexId> = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.curve.vertices.iter() {
            if seen.contains(&start) {
                continue;
            }
            let touches = contracted
                .iter()
                .any(|e| self.curve.edges[e].ends.contains(&start));
            if !touches {
                continue;
            }
            let mut vs = BTreeSet::new();
            let mut es = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            vs.insert(start);
            while let Some(v) = queue.pop_front() {
                for (id, e) in &self.curve.edges {
                    if !contracted.contains(id) || !e.ends.contains(&v) {
                        continue;
                    }
                    es.insert(*id);
                    for w in e.ends {
                        if vs.insert(w) {
                            queue.push_back(w);
                        }
                    }
                }
            }
            seen.extend(vs.iter().copied());
            out.push((vs, es));
        }
        out
    }

    /// True when some cycle of the curve consists entirely of contracted
    /// edges. Pre: valid connected curve.
    pub fn has_contracted_cycle(&self) -> bool {
        // Betti number of the contracted subgraph.
        for (vs, es) in self.contracted_components() {
            if es.len() + 1 > vs.len() {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    /// Star vertex with rays of the given slopes.
    pub(crate) fn star(slopes: &[i64]) -> BalancedFn {
        let mut c = TropicalCurve::new();
        let v = c.add_vertex();
        let mut slope_map = BTreeMap::new();
        for &s in slopes {
            let r = c.add_ray(v);
            slope_map.insert(Flag::Ray(r), s);
        }
        BalancedFn {
            curve: c,
            values: BTreeMap::from([(VertexId(0), rat_int(0))]),
            slopes: slope_map,
        }
    }

    #[test]
    fn star_balance() {
        assert!(star(&[2, -1, -1]).is_balanced().is_balanced());
        let bad = star(&[1, 1]);
        assert_eq!(bad.is_balanced().violations, vec![VertexId(0)]);
    }

    #[test]
    fn contracted_theta_with_three_attachments_is_balanced() {
        // Theta contracted to zero, three attached contracted segments, each
        // carrying a pair of opposite-slope rays at its far end.
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let mut slopes: BTreeMap<Flag, i64> = BTreeMap::new();
        for len in [2i64, 3, 4] {
            let e = c.add_edge(u, v, rat_int(len));
            slopes.insert(Flag::Edge(e, 0), 0);
            slopes.insert(Flag::Edge(e, 1), 0);
        }
        for (host, s) in [(u, 1i64), (v, 1), (u, 1)] {
            let a = c.add_vertex();
            let leg = c.add_edge(host, a, rat_int(1));
            slopes.insert(Flag::Edge(leg, 0), 0);
            slopes.insert(Flag::Edge(leg, 1), 0);
            let r1 = c.add_ray(a);
            let r2 = c.add_ray(a);
            slopes.insert(Flag::Ray(r1), s);
            slopes.insert(Flag::Ray(r2), -s);
        }
        let values = c.vertices.iter().map(|&v| (v, rat_int(0))).collect();
        let f = BalancedFn { curve: c, values, slopes };
        f.validate().unwrap();
        assert!(f.is_balanced().is_balanced());
        assert!(f.has_contracted_cycle());
    }

    #[test]
    fn value_interpolation_and_subdivide() {
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(2));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(v);
        let f = BalancedFn {
            curve: c,
            values: BTreeMap::from([(u, rat_int(0)), (v, rat_int(6))]),
            slopes: BTreeMap::from([
                (Flag::Edge(e, 0), 3),
                (Flag::Edge(e, 1), -3),
                (Flag::Ray(r1), -3),
                (Flag::Ray(r2), 3),
            ]),
        };
        f.validate().unwrap();
        assert!(f.is_balanced().is_balanced());
        assert_eq!(f.value_at(&CurvePoint::OnEdge(e, rat(1, 2))).unwrap(), rat(3, 2));
        let (g, sub) = f.subdivide(&CurvePoint::OnEdge(e, rat(1, 2))).unwrap();
        g.validate().unwrap();
        assert!(g.is_balanced().is_balanced());
        assert_eq!(g.values[&sub.new_vertex], rat(3, 2));
    }
}
