//! Class arithmetic for momentum fields of `N` particles.
//!
//! With `n = 3N` components, `k` functional relations and `m` Clebsch pairs
//! the odd representation requires `n - k = 2m + 1`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClassSolution {
    pub particles: u32,
    pub n: u32,
    pub k: u32,
    pub m: u32,
    pub regular: bool,
    pub maximal_redundancy: bool,
}

impl ClassSolution {
    fn new(particles: u32, k: u32, m: u32) -> Self {
        let n = 3 * particles;
        Self {
            particles,
            n,
            k,
            m,
            regular: k + 1 == particles && m == particles,
            maximal_redundancy: m == 0 && k + 1 == n,
        }
    }

    /// Class `L = 2m + 1`.
    pub fn class(&self) -> u32 {
        2 * self.m + 1
    }

    pub fn pair(&self) -> (u32, u32) {
        (self.k, self.m)
    }
}

fn check_particles(particles: u32) -> Result<()> {
    if particles == 0 {
        Err(Error::argument("particle count must be at least 1"))
    } else {
        Ok(())
    }
}

/// All `(k, m)` with `3N - k = 2m + 1` and `0 ≤ k ≤ 3N - 1`, sorted by `k`.
/// The maximal-redundancy solution `m = 0` is included on request.
pub fn enumerate_class_solutions(particles: u32, include_maximal: bool) -> Result<Vec<ClassSolution>> {
    check_particles(particles)?;
    let n = 3 * particles;
    let min_m = if include_maximal { 0 } else { 1 };
    let max_m = (n - 1) / 2;
    let mut out: Vec<ClassSolution> = (min_m..=max_m)
        .map(|m| ClassSolution::new(particles, n - 1 - 2 * m, m))
        .collect();
    out.sort_by_key(|s| s.k);
    Ok(out)
}

/// The linear solution `k = N - 1`, `m = N`.
pub fn regular_solution(particles: u32) -> Result<ClassSolution> {
    check_particles(particles)?;
    let sol = ClassSolution::new(particles, particles - 1, particles);
    debug_assert!(enumerate_class_solutions(particles, false)?.contains(&sol));
    Ok(sol)
}

/// Number of dynamical variables `2m + 2`: the Clebsch potentials plus `ρ`.
pub fn variable_count(sol: &ClassSolution) -> u32 {
    2 * sol.m + 2
}

/// Representation admissible for every particle number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Odd,
    Even,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParityVerdict {
    pub representation: Representation,
    pub reason: &'static str,
}

pub fn parity_check(particles: u32) -> Result<ParityVerdict> {
    check_particles(particles)?;
    Ok(ParityVerdict {
        representation: Representation::Odd,
        reason: "the even representation yields an even number of fields and cannot \
                 describe a single particle, which needs three",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(n: u32, include_maximal: bool) -> Vec<(u32, u32)> {
        enumerate_class_solutions(n, include_maximal).unwrap().iter().map(|s| s.pair()).collect()
    }

    #[test]
    fn published_tables() {
        assert_eq!(pairs(2, false), vec![(1, 2), (3, 1)]);
        assert_eq!(pairs(3, false), vec![(0, 4), (2, 3), (4, 2), (6, 1)]);
        assert_eq!(pairs(1, true), vec![(0, 1), (2, 0)]);
        assert_eq!(pairs(1, false), vec![(0, 1)]);
        assert!(enumerate_class_solutions(0, false).is_err());
    }

    #[test]
    fn flags() {
        let all = enumerate_class_solutions(1, true).unwrap();
        assert!(all[0].regular && !all[0].maximal_redundancy);
        assert!(all[1].maximal_redundancy && !all[1].regular);
        assert_eq!(all[0].class(), 3);
    }

    #[test]
    fn regular_examples() {
        assert_eq!(regular_solution(1).unwrap().pair(), (0, 1));
        assert_eq!(regular_solution(2).unwrap().pair(), (1, 2));
        assert_eq!(regular_solution(5).unwrap().pair(), (4, 5));
        assert!(regular_solution(5).unwrap().regular);
    }

    #[test]
    fn variable_counts() {
        assert_eq!(variable_count(&regular_solution(1).unwrap()), 4);
        assert_eq!(variable_count(&regular_solution(3).unwrap()), 8);
        for n in 1..=10 {
            let max = enumerate_class_solutions(n, true).unwrap().into_iter().find(|s| s.maximal_redundancy).unwrap();
            assert_eq!(variable_count(&max), 2);
        }
        for n in 1..100 {
            let a = variable_count(&regular_solution(n).unwrap());
            let b = variable_count(&regular_solution(n + 1).unwrap());
            assert_eq!(b - a, 2);
        }
    }

    #[test]
    fn parity_is_always_odd() {
        for n in [1, 2, 7] {
            assert_eq!(parity_check(n).unwrap().representation, Representation::Odd);
        }
    }

    #[test]
    fn matches_brute_force_scan() {
        for n in 1..=50u32 {
            let nn = 3 * n;
            let mut scan = Vec::new();
            for k in 0..=nn {
                for m in 1..=nn {
                    if k < nn && nn - k == 2 * m + 1 {
                        scan.push((k, m));
                    }
                }
            }
            scan.sort();
            assert_eq!(pairs(n, false), scan);
            assert_eq!(scan.len() as u32, (3 * n).div_ceil(2) - 1);
        }
    }

    proptest! {
        #[test]
        fn class_relation_holds(n in 1u32..500, maximal in any::<bool>()) {
            for s in enumerate_class_solutions(n, maximal).unwrap() {
                prop_assert_eq!(s.n - s.k, 2 * s.m + 1);
                prop_assert!(s.k < s.n);
                prop_assert_eq!(s.regular, (s.k, s.m) == (n - 1, n));
            }
        }
    }
}
