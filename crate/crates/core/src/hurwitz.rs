//! Local Hurwitz problems at vertices of a finite harmonic map, solved by
//! exhaustive transitive permutation factorization.
//!
//! A vertex of degree `d` with target directions carrying ramification
//! profiles (partitions of `d`) is realizable by a genus-0 cover exactly when
//! there are permutations of the prescribed cycle types whose product with
//! `k` extra transpositions is the identity and whose generated group is
//! transitive, where `k` is the Riemann-Hurwitz slack. Composition is fixed
//! left-to-right: the product sigma_1 ... sigma_m tau_1 ... tau_k applies
//! sigma_1 first.

use crate::error::Error;
use crate::graph::{CurvePoint, Flag, VertexId};
use crate::harmonic::{FlagImage, HarmonicMap};

pub const DEFAULT_DEGREE_BOUND: u64 = 8;

/// Ramification data at a single vertex: the local degree and one partition
/// of it per target direction, plus the Riemann-Hurwitz transposition budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalHurwitzProblem {
    pub degree: u64,
    /// One partition per target flag at the image vertex, parts descending.
    pub profiles: Vec<Vec<u64>>,
    /// Target flags the profiles belong to, parallel to `profiles`; empty
    /// when the problem was built from raw data.
    pub directions: Vec<Flag>,
}

/// A transitive factorization witnessing solvability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HurwitzWitness {
    /// One permutation per profile, then `k` transpositions, all in one-line
    /// notation on `0..d`.
    pub permutations: Vec<Vec<usize>>,
    pub num_profiles: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Witness(HurwitzWitness),
    Unsolvable,
}

impl LocalHurwitzProblem {
    pub fn new(degree: u64, mut profiles: Vec<Vec<u64>>) -> Result<Self, Error> {
        if degree == 0 {
            return Err(Error::InvalidFunction("degree must be positive".into()));
        }
        for p in profiles.iter_mut() {
            p.sort_unstable_by(|a, b| b.cmp(a));
            if p.iter().any(|&x| x == 0) {
                return Err(Error::InvalidFunction("zero part in profile".into()));
            }
            if p.iter().sum::<u64>() != degree {
                return Err(Error::InvalidFunction(format!(
                    "profile {:?} does not sum to degree {degree}",
                    p
                )));
            }
        }
        Ok(LocalHurwitzProblem { degree, profiles, directions: vec![] })
    }

    /// Riemann-Hurwitz slack: the number of extra simple branch points a
    /// genus-0 cover with these profiles must have. Negative means no cover.
    pub fn rh_defect(&self) -> i64 {
        let ram: i64 = self
            .profiles
            .iter()
            .map(|p| p.iter().map(|&x| x as i64 - 1).sum::<i64>())
            .sum();
        2 * self.degree as i64 - 2 - ram
    }
}

/// Reads the local problem off a refined finite harmonic map at a vertex.
pub fn extract_local_problem(map: &HarmonicMap, v: VertexId) -> Result<LocalHurwitzProblem, Error> {
    if !map.is_refined() {
        return Err(Error::InvalidMap("map must be refined".into()));
    }
    if !map.source.vertices.contains(&v) {
        return Err(Error::InvalidMap(format!("unknown vertex {v}")));
    }
    let w = map.image_vertex(v);
    let dirs = map.target.flags_at(w);
    if dirs.is_empty() {
        return Err(Error::InvalidMap(format!(
            "image of {v} has no directions; cannot extract ramification data"
        )));
    }
    let mut degree = None;
    let mut profiles = Vec::new();
    for d in &dirs {
        let mut profile: Vec<u64> = Vec::new();
        for f in map.source.flags_at(v) {
            match map.flag_image(f) {
                FlagImage::Contracted => {
                    return Err(Error::InvalidMap(format!(
                        "map not finite at {v}: contracted flag {}",
                        f.key()
                    )))
                }
                FlagImage::To(g, s) => {
                    if g == *d {
                        profile.push(s);
                    }
                }
            }
        }
        profile.sort_unstable_by(|a, b| b.cmp(a));
        let total: u64 = profile.iter().sum();
        match degree {
            None => degree = Some(total),
            Some(dd) => {
                if dd != total {
                    return Err(Error::InvalidMap(format!(
                        "map not harmonic at {v}: directional degrees differ"
                    )));
                }
            }
        }
        profiles.push(profile);
    }
    let degree = degree.unwrap();
    if degree == 0 {
        return Err(Error::InvalidMap(format!("map has local degree 0 at {v}")));
    }
    let mut problem = LocalHurwitzProblem::new(degree, profiles)?;
    problem.directions = dirs;
    let _ = CurvePoint::Vertex(v);
    Ok(problem)
}

pub fn cycle_type(perm: &[usize]) -> Vec<u64> {
    let n = perm.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let mut len = 0u64;
        let mut j = i;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        out.push(len);
    }
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

fn is_identity(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &x)| i == x)
}

/// Left-to-right composition: `(a * b)(x) = b(a(x))`.
pub fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().map(|&x| b[x]).collect()
}

fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut out = vec![0; perm.len()];
    for (i, &x) in perm.iter().enumerate() {
        out[x] = i;
    }
    out
}

/// Transitivity of the generated subgroup, via union-find on symbols.
fn generates_transitive(perms: &[Vec<usize>], d: usize) -> bool {
    if d <= 1 {
        return true;
    }
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in perms {
        for (i, &x) in p.iter().enumerate() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, x));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let root = find(&mut parent, 0);
    (1..d).all(|i| find(&mut parent, i) == root)
}

/// All permutations of `0..d` with the given cycle type, in lexicographic
/// one-line order.
pub fn permutations_of_type(d: usize, ty: &[u64]) -> Vec<Vec<usize>> {
    let mut sorted = ty.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..d).collect();
    loop {
        if cycle_type(&perm) == sorted {
            out.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

pub fn transpositions(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let mut p: Vec<usize> = (0..d).collect();
            p.swap(i, j);
            out.push(p);
        }
    }
    out
}

/// Deterministic search for a witness: iterates profile permutations and
/// transpositions in lexicographic order, solving for the last factor, and
/// returns the lexicographically first witness.
pub fn solve(problem: &LocalHurwitzProblem, degree_bound: u64) -> Result<SolveOutcome, Error> {
    let d = problem.degree;
    if d > degree_bound {
        return Err(Error::DegreeBound { degree: d, bound: degree_bound });
    }
    let k = problem.rh_defect();
    if k < 0 {
        return Ok(SolveOutcome::Unsolvable);
    }
    let k = k as usize;
    let d = d as usize;
    let m = problem.profiles.len();

    let mut candidate_lists: Vec<Vec<Vec<usize>>> = Vec::new();
    for p in &problem.profiles {
        let cands = permutations_of_type(d, p);
        if cands.is_empty() {
            return Ok(SolveOutcome::Unsolvable);
        }
        candidate_lists.push(cands);
    }
    let taus = transpositions(d);

    // chosen[i]: index into candidate list; products[i]: running product
    let mut chosen: Vec<Vec<usize>> = Vec::new();
    let identity: Vec<usize> = (0..d).collect();

    fn rec(
        level: usize,
        m: usize,
        k: usize,
        d: usize,
        running: &[usize],
        candidate_lists: &[Vec<Vec<usize>>],
        taus: &[Vec<usize>],
        chosen: &mut Vec<Vec<usize>>,
        identity: &[usize],
    ) -> Option<Vec<Vec<usize>>> {
        let total = m + k;
        if level == total {
            if !is_identity(running) {
                return None;
            }
            if !generates_transitive(chosen, d) {
                return None;
            }
            return Some(chosen.clone());
        }
        let solving_last = level + 1 == total;
        if solving_last {
            // the last factor is forced to be the inverse of the running product
            let needed = inverse(running);
            let ok = if level < m {
                cycle_type(&needed) == candidate_lists[level].first().map(|c| cycle_type(c)).unwrap_or_default()
            } else {
                cycle_type(&needed) == cycle_type(&taus[0])
            };
            if !ok {
                return None;
            }
            chosen.push(needed);
            let result = rec(level + 1, m, k, d, identity, candidate_lists, taus, chosen, identity);
            if result.is_some() {
                return result;
            }
            chosen.pop();
            return None;
        }
        let list = if level < m { &candidate_lists[level] } else { taus };
        for cand in list {
            let next = compose(running, cand);
            chosen.push(cand.clone());
            let res = rec(level + 1, m, k, d, &next, candidate_lists, taus, chosen, identity);
            if res.is_some() {
                return res;
            }
            chosen.pop();
        }
        None
    }

    // special case: zero factors overall
    if m + k == 0 {
        return Ok(if d == 1 {
            SolveOutcome::Witness(HurwitzWitness { permutations: vec![], num_profiles: 0 })
        } else {
            SolveOutcome::Unsolvable
        });
    }

    match rec(0, m, k, d, &identity, &candidate_lists, &taus, &mut chosen, &identity) {
        Some(perms) => Ok(SolveOutcome::Witness(HurwitzWitness {
            permutations: perms,
            num_profiles: m,
        })),
        None => Ok(SolveOutcome::Unsolvable),
    }
}

/// Checks cycle types, the product-identity condition, transposition shape,
/// and transitivity. Pure; no search.
pub fn verify_witness(problem: &LocalHurwitzProblem, witness: &HurwitzWitness) -> bool {
    let d = problem.degree as usize;
    let k = problem.rh_defect();
    if k < 0 {
        return false;
    }
    if witness.num_profiles != problem.profiles.len() {
        return false;
    }
    if witness.permutations.len() != problem.profiles.len() + k as usize {
        return false;
    }
    for p in &witness.permutations {
        if p.len() != d {
            return false;
        }
        let mut seen = vec![false; d];
        for &x in p {
            if x >= d || seen[x] {
                return false;
            }
            seen[x] = true;
        }
    }
    for (i, profile) in problem.profiles.iter().enumerate() {
        let mut expected = profile.clone();
        expected.sort_unstable_by(|a, b| b.cmp(a));
        if cycle_type(&witness.permutations[i]) != expected {
            return false;
        }
    }
    let tau_type: Vec<u64> = if d >= 2 {
        let mut t = vec![2u64];
        t.extend(std::iter::repeat(1).take(d - 2));
        t
    } else {
        vec![1]
    };
    for tau in &witness.permutations[problem.profiles.len()..] {
        if cycle_type(tau) != tau_type {
            return false;
        }
    }
    let mut running: Vec<usize> = (0..d).collect();
    for p in &witness.permutations {
        running = compose(&running, p);
    }
    if !is_identity(&running) {
        return false;
    }
    generates_transitive(&witness.permutations, d)
}
