//! Maps to r-dimensional targets: validation, coordinate projection, and the
//! coordinatewise dimensional-reduction report.

use std::collections::BTreeMap;

use crate::balanced::BalancedFn;
use crate::check::{check_instance, CheckOptions, Verdict};
use crate::error::Error;
use crate::graph::{Flag, TropicalCurve, VertexId};
use crate::rat::{rat_int, Rat};
use num_traits::Zero;

/// A piecewise-linear map to r-space: a rational vector at each vertex and
/// an integer slope vector at each flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TropicalMapRr {
    pub curve: TropicalCurve,
    pub rank: usize,
    pub values: BTreeMap<VertexId, Vec<Rat>>,
    pub slopes: BTreeMap<Flag, Vec<i64>>,
}

#[derive(Debug, Clone, Default)]
pub struct TropicalMapReport {
    /// Coordinates whose projection fails balance or validity, with details.
    pub failing: Vec<(usize, String)>,
}

impl TropicalMapReport {
    pub fn is_tropical(&self) -> bool {
        self.failing.is_empty()
    }
}

impl TropicalMapRr {
    pub fn validate(&self) -> Result<(), Error> {
        if self.rank == 0 {
            return Err(Error::InvalidFunction("rank must be positive".into()));
        }
        for (v, x) in &self.values {
            if x.len() != self.rank {
                return Err(Error::InvalidFunction(format!(
                    "value vector at {v} has length {}",
                    x.len()
                )));
            }
        }
        for (fl, x) in &self.slopes {
            if x.len() != self.rank {
                return Err(Error::InvalidFunction(format!(
                    "slope vector at {} has length {}",
                    fl.key(),
                    x.len()
                )));
            }
        }
        // every coordinate projection must be structurally valid
        for i in 0..self.rank {
            let e = std::iter::repeat(0i64)
                .take(self.rank)
                .enumerate()
                .map(|(j, _)| if j == i { 1 } else { 0 })
                .collect::<Vec<_>>();
            self.project(&e)?.validate()?;
        }
        Ok(())
    }

    /// Composes with an integer character: dot products of values and slopes.
    pub fn project(&self, chi: &[i64]) -> Result<BalancedFn, Error> {
        if chi.len() != self.rank {
            return Err(Error::InvalidFunction("character has the wrong length".into()));
        }
        let mut values = BTreeMap::new();
        for (&v, x) in &self.values {
            let mut acc = Rat::zero();
            for (c, xi) in chi.iter().zip(x) {
                acc += rat_int(*c) * xi;
            }
            values.insert(v, acc);
        }
        let mut slopes = BTreeMap::new();
        for (&fl, x) in &self.slopes {
            let s: i64 = chi.iter().zip(x).map(|(c, xi)| c * xi).sum();
            slopes.insert(fl, s);
        }
        Ok(BalancedFn { curve: self.curve.clone(), values, slopes })
    }

    /// Balanced in every coordinate?
    pub fn is_tropical_map(&self) -> Result<TropicalMapReport, Error> {
        let mut report = TropicalMapReport::default();
        for i in 0..self.rank {
            let chi: Vec<i64> = (0..self.rank).map(|j| i64::from(j == i)).collect();
            let f = self.project(&chi)?;
            if let Err(e) = f.validate() {
                report.failing.push((i, e.to_string()));
                continue;
            }
            let bal = f.is_balanced();
            if !bal.is_balanced() {
                report.failing.push((
                    i,
                    format!("unbalanced at {:?}", bal.violations),
                ));
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinedVerdict {
    Realizable,
    /// All characters realizable; conditional on the expected-codimension
    /// hypothesis of the dimensional-reduction theorem, which is reported,
    /// not verified.
    ConditionallyRealizable,
    /// Some character was only realizable in the limit sense.
    ConditionallyRealizableLimit,
    NotRealizable,
    Unknown,
}

#[derive(Debug)]
pub struct MultirankReport {
    pub per_character: Vec<(Vec<i64>, Verdict)>,
    pub combined: CombinedVerdict,
    /// The curve is trivalent with no higher-valence vertices after
    /// suppressing 2-valent ones (the maximal-degeneracy hypothesis).
    pub maximally_degenerate: bool,
    pub codimension_hypothesis_note: String,
}

impl MultirankReport {
    pub fn exit_code(&self) -> i32 {
        match self.combined {
            CombinedVerdict::Realizable
            | CombinedVerdict::ConditionallyRealizable
            | CombinedVerdict::ConditionallyRealizableLimit => 0,
            CombinedVerdict::NotRealizable => 1,
            CombinedVerdict::Unknown => 2,
        }
    }
}

fn det_unimodular(basis: &[Vec<i64>]) -> bool {
    let n = basis.len();
    if basis.iter().any(|row| row.len() != n) {
        return false;
    }
    let mut m: Vec<Vec<Rat>> = basis
        .iter()
        .map(|row| row.iter().map(|&x| rat_int(x)).collect())
        .collect();
    let mut det = rat_int(1);
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero());
        let Some(p) = pivot else { return false };
        if p != col {
            m.swap(p, col);
            det = -det;
        }
        det *= m[col][col].clone();
        let inv = m[col][col].clone();
        for r in col + 1..n {
            let factor = &m[r][col] / &inv;
            for c in col..n {
                let sub = &factor * &m[col][c];
                m[r][c] -= sub;
            }
        }
    }
    det == rat_int(1) || det == rat_int(-1)
}

fn stabilized_trivalent(curve: &TropicalCurve) -> bool {
    curve.vertices.iter().all(|&v| {
        let val = curve.valence(v);
        val == 2 || val == 3
    })
}

/// Runs the rank-1 decision for each basis character and combines: any
/// non-realizable projection refutes realizability; all-realizable is
/// conditional on the unverified expected-codimension hypothesis (except in
/// genus 0, where no obstruction exists).
pub fn coordinatewise_report(
    fr: &TropicalMapRr,
    basis: &[Vec<i64>],
    opts: &CheckOptions,
) -> Result<MultirankReport, Error> {
    fr.validate()?;
    if basis.len() != fr.rank {
        return Err(Error::Precondition("basis size differs from the rank".into()));
    }
    if !det_unimodular(basis) {
        return Err(Error::Precondition("basis is not unimodular".into()));
    }
    let report = fr.is_tropical_map()?;
    if !report.is_tropical() {
        return Err(Error::Precondition(format!(
            "not a tropical map; failing coordinates {:?}",
            report.failing.iter().map(|(i, _)| i).collect::<Vec<_>>()
        )));
    }
    let genus = fr.curve.first_betti()?;
    let mut per_character = Vec::new();
    let mut any_not = false;
    let mut any_limit = false;
    let mut any_unknown = false;
    for chi in basis {
        let f = fr.project(chi)?;
        let v = check_instance(&f, opts)?;
        match &v {
            Verdict::NotRealizable { .. } => any_not = true,
            Verdict::LimitRealizable { .. } => any_limit = true,
            Verdict::ThresholdFail { .. } | Verdict::Unknown { .. } => any_unknown = true,
            Verdict::Realizable { .. } => {}
        }
        per_character.push((chi.clone(), v));
    }
    let combined = if any_not {
        CombinedVerdict::NotRealizable
    } else if any_unknown {
        CombinedVerdict::Unknown
    } else if genus == 0 {
        CombinedVerdict::Realizable
    } else if any_limit {
        CombinedVerdict::ConditionallyRealizableLimit
    } else {
        CombinedVerdict::ConditionallyRealizable
    };
    Ok(MultirankReport {
        per_character,
        combined,
        maximally_degenerate: stabilized_trivalent(&fr.curve),
        codimension_hypothesis_note:
            "positive combined verdicts are conditional on the expected-codimension hypothesis of the dimensional reduction, which is reported, not verified"
                .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment_rr() -> TropicalMapRr {
        // segment with slope vector (1,1) and opposite rays
        let mut c = TropicalCurve::new();
        let u = c.add_vertex();
        let v = c.add_vertex();
        let e = c.add_edge(u, v, rat_int(1));
        let r1 = c.add_ray(u);
        let r2 = c.add_ray(v);
        TropicalMapRr {
            curve: c,
            rank: 2,
            values: BTreeMap::from([
                (u, vec![rat_int(0), rat_int(0)]),
                (v, vec![rat_int(1), rat_int(1)]),
            ]),
            slopes: BTreeMap::from([
                (Flag::Edge(e, 0), vec![1, 1]),
                (Flag::Edge(e, 1), vec![-1, -1]),
                (Flag::Ray(r1), vec![-1, -1]),
                (Flag::Ray(r2), vec![1, 1]),
            ]),
        }
    }

    #[test]
    fn projections_and_validity() {
        let fr = segment_rr();
        fr.validate().unwrap();
        assert!(fr.is_tropical_map().unwrap().is_tropical());
        // standard basis vector picks out a coordinate
        let f0 = fr.project(&[1, 0]).unwrap();
        assert_eq!(f0.slopes[&Flag::Edge(crate::graph::EdgeId(0), 0)], 1);
        // zero character gives a constant
        let fz = fr.project(&[0, 0]).unwrap();
        assert!(fz.is_constant());
        // difference character
        let fd = fr.project(&[1, -1]).unwrap();
        assert!(fd.is_constant());
    }

    #[test]
    fn unbalanced_coordinate_is_reported() {
        let mut fr = segment_rr();
        fr.slopes.insert(Flag::Ray(crate::graph::RayId(0)), vec![-1, 7]);
        let rep = fr.is_tropical_map().unwrap();
        assert!(!rep.is_tropical());
        assert_eq!(rep.failing[0].0, 1);
    }

    #[test]
    fn combined_verdicts() {
        // genus 0: realizable unconditionally
        let fr = segment_rr();
        let basis = vec![vec![1, 0], vec![0, 1]];
        let rep = coordinatewise_report(&fr, &basis, &CheckOptions::default()).unwrap();
        assert_eq!(rep.combined, CombinedVerdict::Realizable);
        assert_eq!(rep.exit_code(), 0);
        // non-unimodular basis errors
        let bad = vec![vec![2, 0], vec![0, 1]];
        assert!(coordinatewise_report(&fr, &bad, &CheckOptions::default()).is_err());
    }

    #[test]
    fn genus1_projection_controls_the_verdict() {
        // one simple leg on a contracted cycle in coordinate 0, constant in
        // coordinate 1: NOT_REALIZABLE overall
        let f = crate::realize1::tests::genus1_instance(&[(0, 2, 1)]);
        let fr = TropicalMapRr {
            curve: f.curve.clone(),
            rank: 2,
            values: f.values.iter().map(|(v, x)| (*v, vec![x.clone(), rat_int(0)])).collect(),
            slopes: f.slopes.iter().map(|(fl, s)| (*fl, vec![*s, 0])).collect(),
        };
        // make coordinate 1 nonconstant but harmless: reuse coordinate 0
        let fr = TropicalMapRr {
            slopes: fr
                .slopes
                .iter()
                .map(|(fl, s)| (*fl, vec![s[0], s[0]]))
                .collect(),
            values: fr
                .values
                .iter()
                .map(|(v, x)| (*v, vec![x[0].clone(), x[0].clone()]))
                .collect(),
            ..fr
        };
        let basis = vec![vec![1, 0], vec![0, 1]];
        let rep = coordinatewise_report(&fr, &basis, &CheckOptions::default()).unwrap();
        assert_eq!(rep.combined, CombinedVerdict::NotRealizable);
        assert_eq!(rep.exit_code(), 1);

        // two equal legs: all projections certify, genus 1: conditional
        let f = crate::realize1::tests::genus1_instance(&[(0, 2, 1), (1, 2, 1)]);
        let fr = TropicalMapRr {
            curve: f.curve.clone(),
            rank: 2,
            values: f
                .values
                .iter()
                .map(|(v, x)| (*v, vec![x.clone(), x.clone()]))
                .collect(),
            slopes: f.slopes.iter().map(|(fl, s)| (*fl, vec![*s, *s])).collect(),
        };
        let rep = coordinatewise_report(&fr, &basis, &CheckOptions::default()).unwrap();
        assert_eq!(rep.combined, CombinedVerdict::ConditionallyRealizable);
    }
}
