//! JSON formats: instances (curve plus function, scalar or vector-valued),
//! local Hurwitz problems, and canonical certificate files.
//!
//! Rationals are decimal-free `p/q` strings, flags use the `e3.0` / `r2`
//! keys, and all maps serialize with sorted keys so files are diffable.
//! Certificates reference their instance by a content hash so a certificate
//! cannot silently be checked against the wrong instance.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::balanced::BalancedFn;
use crate::error::Error;
use crate::graph::{CurvePoint, Edge, EdgeId, Flag, Ray, RayId, TropicalCurve, VertexId};
use crate::harmonic::{FlagImage, HarmonicMap};
use crate::hurwitz::{HurwitzWitness, LocalHurwitzProblem};
use crate::modify::{EdgeAnchor, HModCertificate, Host, Modification, RayAnchor};
use crate::multirank::TropicalMapRr;
use crate::rat::{parse_rat, rat_to_string, Rat};

fn bad(msg: impl std::fmt::Display) -> Error {
    Error::Json(msg.to_string())
}

fn as_obj(v: &Value, what: &str) -> Result<Map<String, Value>, Error> {
    v.as_object().cloned().ok_or_else(|| bad(format!("{what} must be an object")))
}

fn get<'a>(m: &'a Map<String, Value>, k: &str) -> Result<&'a Value, Error> {
    m.get(k).ok_or_else(|| bad(format!("missing field {k:?}")))
}

fn as_u32(v: &Value, what: &str) -> Result<u32, Error> {
    v.as_u64()
        .and_then(|x| u32::try_from(x).ok())
        .ok_or_else(|| bad(format!("{what} must be a small nonnegative integer")))
}

fn rat_of(v: &Value, what: &str) -> Result<Rat, Error> {
    let s = v.as_str().ok_or_else(|| bad(format!("{what} must be a rational string")))?;
    parse_rat(s).map_err(bad)
}

// ---- curves ---------------------------------------------------------------

pub fn curve_to_json(c: &TropicalCurve) -> Value {
    json!({
        "vertices": c.vertices.iter().map(|v| v.0).collect::<Vec<_>>(),
        "edges": c.edges.iter().map(|(id, e)| json!({
            "id": id.0,
            "ends": [e.ends[0].0, e.ends[1].0],
            "length": rat_to_string(&e.length),
        })).collect::<Vec<_>>(),
        "rays": c.rays.iter().map(|(id, r)| json!({
            "id": id.0,
            "base": r.base.0,
        })).collect::<Vec<_>>(),
    })
}

pub fn curve_from_json(v: &Value) -> Result<TropicalCurve, Error> {
    let m = as_obj(v, "curve")?;
    let mut c = TropicalCurve::new();
    for x in get(&m, "vertices")?.as_array().ok_or_else(|| bad("vertices must be an array"))? {
        c.vertices.insert(VertexId(as_u32(x, "vertex id")?));
    }
    for x in get(&m, "edges")?.as_array().ok_or_else(|| bad("edges must be an array"))? {
        let e = as_obj(x, "edge")?;
        let id = EdgeId(as_u32(get(&e, "id")?, "edge id")?);
        let ends = get(&e, "ends")?.as_array().ok_or_else(|| bad("ends must be an array"))?;
        if ends.len() != 2 {
            return Err(bad("ends must have two entries"));
        }
        let ends = [
            VertexId(as_u32(&ends[0], "endpoint")?),
            VertexId(as_u32(&ends[1], "endpoint")?),
        ];
        let length = rat_of(get(&e, "length")?, "length")?;
        if c.edges.insert(id, Edge { ends, length }).is_some() {
            return Err(bad(format!("duplicate edge id {id}")));
        }
    }
    for x in get(&m, "rays")?.as_array().ok_or_else(|| bad("rays must be an array"))? {
        let r = as_obj(x, "ray")?;
        let id = RayId(as_u32(get(&r, "id")?, "ray id")?);
        let base = VertexId(as_u32(get(&r, "base")?, "ray base")?);
        if c.rays.insert(id, Ray { base }).is_some() {
            return Err(bad(format!("duplicate ray id {id}")));
        }
    }
    Ok(c)
}

// ---- instances --------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Instance {
    Scalar(BalancedFn),
    Vector(TropicalMapRr),
}

impl Instance {
    pub fn curve(&self) -> &TropicalCurve {
        match self {
            Instance::Scalar(f) => &f.curve,
            Instance::Vector(f) => &f.curve,
        }
    }
}

pub fn instance_to_json(inst: &Instance) -> Value {
    match inst {
        Instance::Scalar(f) => json!({
            "curve": curve_to_json(&f.curve),
            "rank": 1,
            "function": {
                "values": f.values.iter()
                    .map(|(v, x)| (v.0.to_string(), Value::String(rat_to_string(x))))
                    .collect::<Map<_, _>>(),
                "slopes": f.slopes.iter()
                    .map(|(fl, s)| (fl.key(), json!(s)))
                    .collect::<Map<_, _>>(),
            },
        }),
        Instance::Vector(f) => json!({
            "curve": curve_to_json(&f.curve),
            "rank": f.rank,
            "function": {
                "values": f.values.iter()
                    .map(|(v, x)| (v.0.to_string(),
                        Value::Array(x.iter().map(|r| Value::String(rat_to_string(r))).collect())))
                    .collect::<Map<_, _>>(),
                "slopes": f.slopes.iter()
                    .map(|(fl, s)| (fl.key(), json!(s)))
                    .collect::<Map<_, _>>(),
            },
        }),
    }
}

pub fn instance_from_json(v: &Value) -> Result<Instance, Error> {
    let m = as_obj(v, "instance")?;
    let curve = curve_from_json(get(&m, "curve")?)?;
    let rank = match m.get("rank") {
        None => 1,
        Some(r) => r.as_u64().ok_or_else(|| bad("rank must be an integer"))? as usize,
    };
    let fun = as_obj(get(&m, "function")?, "function")?;
    let values_obj = as_obj(get(&fun, "values")?, "values")?;
    let slopes_obj = as_obj(get(&fun, "slopes")?, "slopes")?;
    if rank == 1 {
        let mut values = BTreeMap::new();
        for (k, x) in values_obj {
            let vid = VertexId(k.parse().map_err(|_| bad(format!("bad vertex key {k:?}")))?);
            values.insert(vid, rat_of(&x, "value")?);
        }
        let mut slopes = BTreeMap::new();
        for (k, x) in slopes_obj {
            let fl = Flag::parse_key(&k).map_err(bad)?;
            let s = x.as_i64().ok_or_else(|| bad("slope must be an integer"))?;
            slopes.insert(fl, s);
        }
        let f = BalancedFn { curve, values, slopes };
        f.validate()?;
        Ok(Instance::Scalar(f))
    } else {
        let mut values = BTreeMap::new();
        for (k, x) in values_obj {
            let vid = VertexId(k.parse().map_err(|_| bad(format!("bad vertex key {k:?}")))?);
            let arr = x.as_array().ok_or_else(|| bad("vector value must be an array"))?;
            let mut out = Vec::new();
            for y in arr {
                out.push(rat_of(y, "value entry")?);
            }
            values.insert(vid, out);
        }
        let mut slopes = BTreeMap::new();
        for (k, x) in slopes_obj {
            let fl = Flag::parse_key(&k).map_err(bad)?;
            let arr = x.as_array().ok_or_else(|| bad("vector slope must be an array"))?;
            let mut out = Vec::new();
            for y in arr {
                out.push(y.as_i64().ok_or_else(|| bad("slope entry must be an integer"))?);
            }
            slopes.insert(fl, out);
        }
        let f = TropicalMapRr { curve, rank, values, slopes };
        f.validate()?;
        Ok(Instance::Vector(f))
    }
}

/// Canonical text of an instance, used for hashing and as file output.
pub fn instance_to_string(inst: &Instance) -> String {
    serde_json::to_string_pretty(&instance_to_json(inst)).expect("serializable")
}

/// FNV-1a over the canonical instance text: a mismatch detector, not a
/// cryptographic commitment.
pub fn instance_hash(inst: &Instance) -> String {
    let s = instance_to_string(inst);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

// ---- local Hurwitz problems -------------------------------------------------

pub fn problem_to_json(p: &LocalHurwitzProblem) -> Value {
    json!({
        "degree": p.degree,
        "profiles": p.profiles,
        "extra": p.rh_defect(),
    })
}

pub fn problem_from_json(v: &Value) -> Result<LocalHurwitzProblem, Error> {
    let m = as_obj(v, "problem")?;
    let degree = get(&m, "degree")?
        .as_u64()
        .ok_or_else(|| bad("degree must be a positive integer"))?;
    let mut profiles = Vec::new();
    for p in get(&m, "profiles")?.as_array().ok_or_else(|| bad("profiles must be an array"))? {
        let arr = p.as_array().ok_or_else(|| bad("profile must be an array"))?;
        let mut parts = Vec::new();
        for x in arr {
            parts.push(x.as_u64().ok_or_else(|| bad("profile part must be a positive integer"))?);
        }
        profiles.push(parts);
    }
    let problem = LocalHurwitzProblem::new(degree, profiles)?;
    if let Some(extra) = m.get("extra") {
        let claimed = extra.as_i64().ok_or_else(|| bad("extra must be an integer"))?;
        if claimed != problem.rh_defect() {
            return Err(bad(format!(
                "stored extra-branching budget {claimed} disagrees with the recomputed value {}",
                problem.rh_defect()
            )));
        }
    }
    Ok(problem)
}

pub fn witness_to_json(w: &HurwitzWitness) -> Value {
    json!({
        "sigma": w.permutations[..w.num_profiles],
        "tau": w.permutations[w.num_profiles..],
    })
}

pub fn witness_from_json(v: &Value) -> Result<HurwitzWitness, Error> {
    let m = as_obj(v, "witness")?;
    let parse_perms = |v: &Value| -> Result<Vec<Vec<usize>>, Error> {
        let arr = v.as_array().ok_or_else(|| bad("permutation list must be an array"))?;
        let mut out = Vec::new();
        for p in arr {
            let xs = p.as_array().ok_or_else(|| bad("permutation must be an array"))?;
            let mut perm = Vec::new();
            for x in xs {
                perm.push(x.as_u64().ok_or_else(|| bad("permutation entry"))? as usize);
            }
            out.push(perm);
        }
        Ok(out)
    };
    let sigma = parse_perms(get(&m, "sigma")?)?;
    let tau = parse_perms(get(&m, "tau")?)?;
    let num_profiles = sigma.len();
    let mut permutations = sigma;
    permutations.extend(tau);
    Ok(HurwitzWitness { permutations, num_profiles })
}

// ---- points, modifications, certificates ------------------------------------

pub fn point_to_json(p: &CurvePoint) -> Value {
    match p {
        CurvePoint::Vertex(v) => json!({"vertex": v.0}),
        CurvePoint::OnEdge(e, t) => json!({"edge": e.0, "offset": rat_to_string(t)}),
        CurvePoint::OnRay(r, t) => json!({"ray": r.0, "dist": rat_to_string(t)}),
    }
}

pub fn point_from_json(v: &Value) -> Result<CurvePoint, Error> {
    let m = as_obj(v, "point")?;
    if let Some(x) = m.get("vertex") {
        return Ok(CurvePoint::Vertex(VertexId(as_u32(x, "vertex")?)));
    }
    if let Some(x) = m.get("edge") {
        return Ok(CurvePoint::OnEdge(
            EdgeId(as_u32(x, "edge")?),
            rat_of(get(&m, "offset")?, "offset")?,
        ));
    }
    if let Some(x) = m.get("ray") {
        return Ok(CurvePoint::OnRay(
            RayId(as_u32(x, "ray")?),
            rat_of(get(&m, "dist")?, "dist")?,
        ));
    }
    Err(bad("point must name a vertex, edge, or ray"))
}

fn host_to_json(h: &Host) -> Value {
    match h {
        Host::Edge(e) => json!({"edge": e.0}),
        Host::Ray(r) => json!({"ray": r.0}),
    }
}

fn host_from_json(v: &Value) -> Result<Host, Error> {
    let m = as_obj(v, "host")?;
    if let Some(x) = m.get("edge") {
        return Ok(Host::Edge(EdgeId(as_u32(x, "edge")?)));
    }
    if let Some(x) = m.get("ray") {
        return Ok(Host::Ray(RayId(as_u32(x, "ray")?)));
    }
    Err(bad("host must name an edge or ray"))
}

pub fn modification_to_json(m: &Modification) -> Value {
    json!({
        "base": curve_to_json(&m.base),
        "extended": curve_to_json(&m.extended),
        "anchors": {
            "vertices": m.vertex_anchor.iter()
                .map(|(v, p)| (v.0.to_string(), point_to_json(p)))
                .collect::<Map<_, _>>(),
            "edges": m.edge_anchor.iter()
                .map(|(e, a)| (e.0.to_string(), json!({
                    "host": host_to_json(&a.host),
                    "start": rat_to_string(&a.start),
                    "reversed": a.reversed,
                })))
                .collect::<Map<_, _>>(),
            "rays": m.ray_anchor.iter()
                .map(|(r, a)| (r.0.to_string(), json!({
                    "host": a.host.0,
                    "start": rat_to_string(&a.start),
                })))
                .collect::<Map<_, _>>(),
        }
    })
}

pub fn modification_from_json(v: &Value) -> Result<Modification, Error> {
    let m = as_obj(v, "modification")?;
    let base = curve_from_json(get(&m, "base")?)?;
    let extended = curve_from_json(get(&m, "extended")?)?;
    let anchors = as_obj(get(&m, "anchors")?, "anchors")?;
    let mut vertex_anchor = BTreeMap::new();
    for (k, x) in as_obj(get(&anchors, "vertices")?, "vertex anchors")? {
        vertex_anchor.insert(
            VertexId(k.parse().map_err(|_| bad("bad vertex key"))?),
            point_from_json(&x)?,
        );
    }
    let mut edge_anchor = BTreeMap::new();
    for (k, x) in as_obj(get(&anchors, "edges")?, "edge anchors")? {
        let o = as_obj(&x, "edge anchor")?;
        edge_anchor.insert(
            EdgeId(k.parse().map_err(|_| bad("bad edge key"))?),
            EdgeAnchor {
                host: host_from_json(get(&o, "host")?)?,
                start: rat_of(get(&o, "start")?, "start")?,
                reversed: get(&o, "reversed")?.as_bool().ok_or_else(|| bad("reversed"))?,
            },
        );
    }
    let mut ray_anchor = BTreeMap::new();
    for (k, x) in as_obj(get(&anchors, "rays")?, "ray anchors")? {
        let o = as_obj(&x, "ray anchor")?;
        ray_anchor.insert(
            RayId(k.parse().map_err(|_| bad("bad ray key"))?),
            RayAnchor {
                host: RayId(as_u32(get(&o, "host")?, "host ray")?),
                start: rat_of(get(&o, "start")?, "start")?,
            },
        );
    }
    Ok(Modification { base, extended, vertex_anchor, edge_anchor, ray_anchor })
}

pub fn certificate_to_json(instance: &Instance, cert: &HModCertificate) -> Value {
    json!({
        "instance_hash": instance_hash(instance),
        "domain_mod": modification_to_json(&cert.domain_mod),
        "target_mod": modification_to_json(&cert.target_mod),
        "lift": {
            "vertex_map": cert.lift.vertex_map.iter()
                .map(|(v, w)| (v.0.to_string(), json!(w.0)))
                .collect::<Map<_, _>>(),
            "flag_map": cert.lift.flag_map.iter()
                .map(|(fl, img)| (fl.key(), match img {
                    FlagImage::Contracted => json!("contracted"),
                    FlagImage::To(g, s) => json!({"to": g.key(), "slope": s}),
                }))
                .collect::<Map<_, _>>(),
        },
        "witnesses": cert.witnesses.iter()
            .map(|(v, w)| (v.0.to_string(), witness_to_json(w)))
            .collect::<Map<_, _>>(),
    })
}

pub fn certificate_from_json(v: &Value) -> Result<(String, HModCertificate), Error> {
    let m = as_obj(v, "certificate")?;
    let hash = get(&m, "instance_hash")?
        .as_str()
        .ok_or_else(|| bad("instance_hash must be a string"))?
        .to_string();
    let domain_mod = modification_from_json(get(&m, "domain_mod")?)?;
    let target_mod = modification_from_json(get(&m, "target_mod")?)?;
    let lift_obj = as_obj(get(&m, "lift")?, "lift")?;
    let mut vertex_map = BTreeMap::new();
    for (k, x) in as_obj(get(&lift_obj, "vertex_map")?, "vertex_map")? {
        vertex_map.insert(
            VertexId(k.parse().map_err(|_| bad("bad vertex key"))?),
            VertexId(as_u32(&x, "image vertex")?),
        );
    }
    let mut flag_map = BTreeMap::new();
    for (k, x) in as_obj(get(&lift_obj, "flag_map")?, "flag_map")? {
        let fl = Flag::parse_key(&k).map_err(bad)?;
        let img = if x.as_str() == Some("contracted") {
            FlagImage::Contracted
        } else {
            let o = as_obj(&x, "flag image")?;
            let to = Flag::parse_key(
                get(&o, "to")?.as_str().ok_or_else(|| bad("to must be a flag key"))?,
            )
            .map_err(bad)?;
            let s = get(&o, "slope")?.as_u64().ok_or_else(|| bad("slope"))?;
            FlagImage::To(to, s)
        };
        flag_map.insert(fl, img);
    }
    let mut witnesses = BTreeMap::new();
    for (k, x) in as_obj(get(&m, "witnesses")?, "witnesses")? {
        witnesses.insert(
            VertexId(k.parse().map_err(|_| bad("bad vertex key"))?),
            witness_from_json(&x)?,
        );
    }
    let lift = HarmonicMap {
        source: domain_mod.extended.clone(),
        target: target_mod.extended.clone(),
        vertex_map,
        flag_map,
    };
    Ok((hash, HModCertificate { domain_mod, target_mod, lift, witnesses }))
}

pub fn certificate_to_string(instance: &Instance, cert: &HModCertificate) -> String {
    serde_json::to_string_pretty(&certificate_to_json(instance, cert)).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hurwitz::DEFAULT_DEGREE_BOUND;
    use crate::modify::verify_certificate;
    use crate::rat::rat_int;

    fn sample_instance() -> BalancedFn {
        crate::realize1::tests::genus1_instance(&[(0, 2, 1), (1, 2, 1)])
    }

    #[test]
    fn instance_round_trip() {
        let f = sample_instance();
        let v = instance_to_json(&Instance::Scalar(f.clone()));
        let back = instance_from_json(&v).unwrap();
        match back {
            Instance::Scalar(g) => assert_eq!(g, f),
            _ => panic!("rank 1 expected"),
        }
        // hashing is stable
        assert_eq!(
            instance_hash(&Instance::Scalar(f.clone())),
            instance_hash(&Instance::Scalar(f))
        );
    }

    #[test]
    fn certificate_round_trip_and_verdict() {
        let f = sample_instance();
        let cert = match crate::realize1::certify_well_spaced(&f, DEFAULT_DEGREE_BOUND).unwrap() {
            crate::realize1::Genus1Certificate::Certificate(c) => c,
            _ => panic!("expected a certificate"),
        };
        let inst = Instance::Scalar(f.clone());
        let text = certificate_to_string(&inst, &cert);
        let v: Value = serde_json::from_str(&text).unwrap();
        let (hash, back) = certificate_from_json(&v).unwrap();
        assert_eq!(hash, instance_hash(&inst));
        assert_eq!(back, cert);
        assert!(verify_certificate(&f, &back, DEFAULT_DEGREE_BOUND).is_accept());
    }

    #[test]
    fn problem_round_trip_rejects_bad_budget() {
        let p = LocalHurwitzProblem::new(3, vec![vec![3], vec![2, 1]]).unwrap();
        let v = problem_to_json(&p);
        assert_eq!(problem_from_json(&v).unwrap(), p);
        let mut m = v.as_object().unwrap().clone();
        m.insert("extra".into(), json!(99));
        assert!(problem_from_json(&Value::Object(m)).is_err());
    }

    #[test]
    fn vector_instance_round_trip() {
        let f = sample_instance();
        let fr = TropicalMapRr {
            curve: f.curve.clone(),
            rank: 2,
            values: f.values.iter().map(|(v, x)| (*v, vec![x.clone(), rat_int(0)])).collect(),
            slopes: f.slopes.iter().map(|(fl, s)| (*fl, vec![*s, 0])).collect(),
        };
        let v = instance_to_json(&Instance::Vector(fr.clone()));
        match instance_from_json(&v).unwrap() {
            Instance::Vector(g) => assert_eq!(g, fr),
            _ => panic!("rank 2 expected"),
        }
    }
}
