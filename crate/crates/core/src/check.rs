//! Verdict dispatch across the genus cases.

use crate::balanced::BalancedFn;
use crate::error::Error;
use crate::graph::EdgeId;
use crate::modify::HModCertificate;
use crate::rat::{rat_int, Rat};
use crate::realize0::certify_no_contracted_cycles;
use crate::realize1::{
    certify_well_spaced, decide_genus1, Genus1Certificate, Genus1Verdict, Perturbation,
};
use crate::realize2::{
    append_long_trees, build_frame, classify_genus2, conjugate_or_weierstrass, core_structure,
    AppendOutcome, Genus2Class, PairClass,
};

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub degree_bound: u64,
    pub search_depth: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { degree_bound: crate::hurwitz::DEFAULT_DEGREE_BOUND, search_depth: 3 }
    }
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Realizable {
        certificate: Option<Box<HModCertificate>>,
        note: Option<String>,
    },
    NotRealizable {
        witness_path: Vec<EdgeId>,
        note: String,
    },
    LimitRealizable {
        perturbation: Perturbation,
        sample_instance: Box<BalancedFn>,
        sample: Box<HModCertificate>,
    },
    ThresholdFail {
        /// (connecting edge, required bound, actual length)
        bounds: Vec<(EdgeId, Rat, Rat)>,
    },
    Unknown {
        reason: String,
    },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Realizable { .. } => 0,
            Verdict::NotRealizable { .. } => 1,
            Verdict::LimitRealizable { .. } | Verdict::ThresholdFail { .. } | Verdict::Unknown { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Realizable { .. } => "REALIZABLE",
            Verdict::NotRealizable { .. } => "NOT_REALIZABLE",
            Verdict::LimitRealizable { .. } => "LIMIT_REALIZABLE",
            Verdict::ThresholdFail { .. } => "THRESHOLD_FAIL",
            Verdict::Unknown { .. } => "UNKNOWN",
        }
    }
}

/// Decides (and when possible certifies) one balanced function to the line.
pub fn check_instance(f: &BalancedFn, opts: &CheckOptions) -> Result<Verdict, Error> {
    f.validate()?;
    if !f.is_balanced().is_balanced() {
        return Err(Error::Precondition("function not balanced".into()));
    }
    if !f.curve.is_connected() {
        return Err(Error::Precondition("curve not connected".into()));
    }
    if f.is_constant() {
        return Ok(Verdict::Realizable {
            certificate: None,
            note: Some("constant function: realizable by a constant, no finite lift exists".into()),
        });
    }
    if !f.has_contracted_cycle() {
        let cert = certify_no_contracted_cycles(f, opts.degree_bound)?;
        return Ok(Verdict::Realizable { certificate: Some(Box::new(cert)), note: None });
    }
    let genus = f.curve.first_betti()?;
    match genus {
        1 => check_genus1(f, opts),
        2 => check_genus2(f, opts),
        g => Ok(Verdict::Unknown {
            reason: format!("genus {g} with a contracted cycle is out of scope"),
        }),
    }
}

fn check_genus1(f: &BalancedFn, opts: &CheckOptions) -> Result<Verdict, Error> {
    match decide_genus1(f) {
        Err(Error::NotApplicable(reason)) => return Ok(Verdict::Unknown { reason }),
        Err(e) => return Err(e),
        Ok(Genus1Verdict::NotRealizable { witness_critical, witness_path }) => {
            return Ok(Verdict::NotRealizable {
                witness_path,
                note: format!("unique minimal simple critical path at {witness_critical}"),
            });
        }
        Ok(Genus1Verdict::Realizable) => {}
    }
    match certify_well_spaced(f, opts.degree_bound)? {
        Genus1Certificate::Certificate(cert) => {
            Ok(Verdict::Realizable { certificate: Some(Box::new(cert)), note: None })
        }
        Genus1Certificate::LimitRealizable { perturbation, sample_instance, sample } => {
            Ok(Verdict::LimitRealizable {
                perturbation,
                sample_instance: Box::new(sample_instance),
                sample,
            })
        }
    }
}

fn check_genus2(f: &BalancedFn, opts: &CheckOptions) -> Result<Verdict, Error> {
    let class = match classify_genus2(&f.curve) {
        Ok(c) => c,
        Err(Error::Precondition(reason)) => return Ok(Verdict::Unknown { reason }),
        Err(e) => return Err(e),
    };
    let core = match &class {
        Genus2Class::Theta(g) => g.core.clone(),
        Genus2Class::Dumbbell(g) => g.core.clone(),
    };
    let s = match core_structure(f, &core) {
        Ok(s) => s,
        Err(Error::NotApplicable(reason)) => return Ok(Verdict::Unknown { reason }),
        Err(e) => return Err(e),
    };
    // coincident Weierstrass pair: the limit of the conjugate construction
    if let Genus2Class::Theta(geom) = &class {
        let minimal: Vec<_> =
            s.criticals.iter().filter(|c| c.length == s.minimal_length).collect();
        if minimal.len() == 2
            && minimal[0].location == minimal[1].location
            && conjugate_or_weierstrass(geom, &f.curve, minimal[0].location, minimal[0].location)
                == PairClass::WeierstrassPairCoincident
            && minimal[0].path_edges.last() != minimal[1].path_edges.last()
        {
            return genus2_weierstrass_limit(f, opts, minimal[0].vertex, minimal[1].vertex);
        }
    }
    // base candidates: the minimal criticals, then all criticals (dumbbell)
    let minimal_vertices: Vec<_> = s
        .criticals
        .iter()
        .filter(|c| c.length == s.minimal_length)
        .map(|c| c.vertex)
        .collect();
    let all_vertices: Vec<_> = s.criticals.iter().map(|c| c.vertex).collect();
    let mut last_err = String::new();
    for base in [&minimal_vertices, &all_vertices] {
        match build_frame(f, &core, &s, base, opts.degree_bound) {
            Ok(frame) => match append_long_trees(f, &frame, opts.degree_bound)? {
                AppendOutcome::Certificate(cert) => {
                    return Ok(Verdict::Realizable { certificate: Some(cert), note: None })
                }
                AppendOutcome::ThresholdFail(bounds) => {
                    return Ok(Verdict::ThresholdFail { bounds })
                }
            },
            Err(e) => last_err = e.to_string(),
        }
    }
    Ok(Verdict::Unknown {
        reason: format!("no genus-2 base construction applies ({last_err})"),
    })
}

/// Two minimal legs sharing a Weierstrass midpoint: separate them by an
/// epsilon stem and certify the perturbed instance.
fn genus2_weierstrass_limit(
    f: &BalancedFn,
    opts: &CheckOptions,
    a1: crate::graph::VertexId,
    a2: crate::graph::VertexId,
) -> Result<Verdict, Error> {
    let _ = (a1, a2);
    // the shared location is the base of both paths' last edges
    let s = {
        let class = classify_genus2(&f.curve)?;
        let core = match &class {
            Genus2Class::Theta(g) => g.core.clone(),
            Genus2Class::Dumbbell(g) => g.core.clone(),
        };
        core_structure(f, &core)?
    };
    let shared = s.criticals[0].location;
    let eps = s.minimal_length.clone() / rat_int(4);
    let mut f2 = f.clone();
    let j = f2.curve.add_vertex();
    f2.values.insert(j, f.values[&shared].clone());
    let incident: Vec<EdgeId> = f2
        .curve
        .edges
        .iter()
        .filter(|(id, e)| f.edge_contracted(**id) && e.ends.contains(&shared) && {
            // only the leg edges move, not the core
            let class = classify_genus2(&f.curve).unwrap();
            let core = match &class {
                Genus2Class::Theta(g) => g.core.clone(),
                Genus2Class::Dumbbell(g) => g.core.clone(),
            };
            !core.edges.contains(*id)
        })
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
    f2.slopes.insert(crate::graph::Flag::Edge(stem, 0), 0);
    f2.slopes.insert(crate::graph::Flag::Edge(stem, 1), 0);
    f2.validate()?;
    let sample = crate::realize2::certify_theta_weierstrass_y(&f2, opts.degree_bound)?;
    Ok(Verdict::LimitRealizable {
        perturbation: Perturbation {
            description: format!(
                "separate the two legs at the Weierstrass point {shared} by a contracted stem; certificates exist for all smaller positive stem lengths"
            ),
            epsilon: eps,
        },
        sample_instance: Box::new(f2),
        sample: Box::new(sample),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modify::verify_certificate;

    #[test]
    fn dispatch_genus0() {
        let mut c = crate::graph::TropicalCurve::new();
        let v = c.add_vertex();
        let r1 = c.add_ray(v);
        let r2 = c.add_ray(v);
        let f = BalancedFn {
            curve: c,
            values: [(v, rat_int(0))].into(),
            slopes: [
                (crate::graph::Flag::Ray(r1), 1),
                (crate::graph::Flag::Ray(r2), -1),
            ]
            .into(),
        };
        let v = check_instance(&f, &CheckOptions::default()).unwrap();
        assert_eq!(v.exit_code(), 0);
        match v {
            Verdict::Realizable { certificate: Some(cert), .. } => {
                assert!(verify_certificate(&f, &cert, 8).is_accept());
            }
            _ => panic!("expected a certificate"),
        }
    }

    #[test]
    fn dispatch_genus1_negative() {
        let f = crate::realize1::tests::genus1_instance(&[(0, 2, 1)]);
        let v = check_instance(&f, &CheckOptions::default()).unwrap();
        assert_eq!(v.exit_code(), 1);
    }

    #[test]
    fn weierstrass_coincident_is_limit() {
        // two equal legs at the midpoint of one arc
        let f = crate::realize2::tests::theta_instance(
            [4, 3, 5],
            &[(0, rat_int(2), rat_int(1), 1), (0, rat_int(2), rat_int(1), 2)],
        );
        let v = check_instance(&f, &CheckOptions::default()).unwrap();
        match v {
            Verdict::LimitRealizable { sample_instance, sample, .. } => {
                assert!(verify_certificate(&sample_instance, &sample, 8).is_accept());
            }
            other => panic!("expected a limit verdict, got {}", other.name()),
        }
    }
}
