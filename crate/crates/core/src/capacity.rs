//! Feasible-configuration enumeration and capacity-region membership.
//!
//! The capacity region is the convex hull of the per-server feasible set,
//! which is downward closed, so an arrival-weight vector `a` is inside
//! exactly when some convex combination of the maximal configurations
//! dominates it. Membership and the multiplicative margin are decided by an
//! exact rational linear program: verdicts at the scaled boundary of the
//! reference scenario differ in the fourth decimal digit, so floats are not
//! an option here.

use crate::domain::{Configuration, DomainError, ResourceVector, VmTypeSpec};
use crate::lp::{self, LpOutcome};
use crate::rational::{Rat, to_f64};
use num_traits::{One, Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CapacityError {
    #[error("feasible set is unbounded: type {0} consumes no capacity-limited resource")]
    Unbounded(usize),
    #[error("dimension mismatch: expected {expected} types, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// The pairwise non-dominated feasible configurations of one server,
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleSet {
    maximal_configs: Vec<Configuration>,
    j_count: usize,
}

impl FeasibleSet {
    pub fn maximal_configs(&self) -> &[Configuration] {
        &self.maximal_configs
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    /// Low-level constructor from an explicit maximal-configuration list,
    /// kept in lexicographic order. Intended for tests and synthetic setups;
    /// real scenarios go through [`enumerate_maximal_configs`].
    pub fn from_parts(mut maximal_configs: Vec<Configuration>, j_count: usize) -> Self {
        maximal_configs.sort();
        Self {
            maximal_configs,
            j_count,
        }
    }
}

/// Multiplicative stability margin: the largest `eps` with `(1+eps)*a`
/// still dominated by the region. `Infinite` is reported for `a = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Margin {
    Finite(Rat),
    Infinite,
}

impl Margin {
    pub fn as_f64(&self) -> f64 {
        match self {
            Margin::Finite(r) => to_f64(r),
            Margin::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Margin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Margin::Finite(r) => write!(f, "{}", crate::rational::display_rat(r)),
            Margin::Infinite => write!(f, "inf"),
        }
    }
}

/// Outcome of the membership test.
///
/// `inside` is closed-hull membership (margin >= 0). Stability prediction
/// additionally requires a strictly positive margin; see [`RegionVerdict::stability`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionVerdict {
    pub inside: bool,
    pub margin: Margin,
    /// Convex weights over the maximal configurations whose combination
    /// dominates `a`; present whenever `a` is inside.
    pub witness: Option<Vec<Rat>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    /// Strictly inside the region: a stable schedule exists.
    StrictlyInside,
    /// Exactly on the boundary: not guaranteed stable.
    Boundary,
    Outside,
}

impl RegionVerdict {
    pub fn stability(&self) -> Stability {
        match &self.margin {
            Margin::Infinite => Stability::StrictlyInside,
            Margin::Finite(m) => {
                if m.is_positive() {
                    Stability::StrictlyInside
                } else if m.is_zero() {
                    Stability::Boundary
                } else {
                    Stability::Outside
                }
            }
        }
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stability::StrictlyInside => "inside",
            Stability::Boundary => "boundary (not guaranteed stable)",
            Stability::Outside => "outside",
        };
        f.write_str(s)
    }
}

/// Enumerates the maximal feasible per-server configurations by depth-first
/// search over per-type counts with dominance filtering, returned in
/// lexicographic order.
pub fn enumerate_maximal_configs(
    capacity: &ResourceVector,
    demands: &[VmTypeSpec],
) -> Result<FeasibleSet, CapacityError> {
    let j_count = demands.len();
    // A type whose demand is zero in every dimension would make the feasible
    // set unbounded. VmTypeSpec already forbids the all-zero demand, but the
    // check stays cheap and explicit.
    for (j, vm) in demands.iter().enumerate() {
        if vm.demand.is_zero() {
            return Err(CapacityError::Unbounded(j));
        }
        if vm.demand.dim() != capacity.dim() {
            return Err(CapacityError::DimensionMismatch {
                expected: capacity.dim(),
                got: vm.demand.dim(),
            });
        }
    }

    let mut found: Vec<Configuration> = Vec::new();
    let mut counts = vec![0u32; j_count];
    let mut residual: Vec<Rat> = capacity.amounts().to_vec();

    fn fits_residual(demand: &ResourceVector, residual: &[Rat]) -> bool {
        demand.amounts().iter().zip(residual).all(|(d, r)| d <= r)
    }

    fn consume(demand: &ResourceVector, residual: &mut [Rat]) {
        for (r, d) in residual.iter_mut().zip(demand.amounts()) {
            *r -= d.clone();
        }
    }

    fn restore(demand: &ResourceVector, residual: &mut [Rat]) {
        for (r, d) in residual.iter_mut().zip(demand.amounts()) {
            *r += d.clone();
        }
    }

    fn dfs(
        j: usize,
        demands: &[VmTypeSpec],
        counts: &mut Vec<u32>,
        residual: &mut Vec<Rat>,
        found: &mut Vec<Configuration>,
    ) {
        if j == demands.len() {
            // Locally maximal: no single additional job of any type fits.
            let maximal = demands
                .iter()
                .all(|vm| !fits_residual(&vm.demand, residual));
            if maximal {
                found.push(Configuration::new(counts.clone()));
            }
            return;
        }
        // Count 0 first keeps the eventual output lexicographic.
        dfs(j + 1, demands, counts, residual, found);
        let mut taken = 0u32;
        while fits_residual(&demands[j].demand, residual) {
            consume(&demands[j].demand, residual);
            counts[j] += 1;
            taken += 1;
            dfs(j + 1, demands, counts, residual, found);
        }
        for _ in 0..taken {
            restore(&demands[j].demand, residual);
        }
        counts[j] -= taken;
    }

    dfs(0, demands, &mut counts, &mut residual, &mut found);

    // Local maximality does not imply global non-domination; filter.
    found.sort();
    found.dedup();
    let maximal: Vec<Configuration> = found
        .iter()
        .filter(|c| {
            !found
                .iter()
                .any(|other| *other != **c && c.dominated_by(other))
        })
        .cloned()
        .collect();

    Ok(FeasibleSet {
        maximal_configs: maximal,
        j_count,
    })
}

/// Decides whether `a` lies in the convex hull of the (downward-closed)
/// feasible set and reports the exact multiplicative margin.
///
/// Solves `max t  s.t.  t*a <= sum_k mu_k N^(k), sum mu = 1, mu >= 0` via its
/// packing dual `max a^T y  s.t.  N^(k) . y <= 1, y >= 0`, whose optimum `m`
/// is the minimal total weight mass needed to dominate `a`; then `t = 1/m`
/// and the margin is `t - 1`.
pub fn membership(a: &[Rat], fs: &FeasibleSet) -> Result<RegionVerdict, CapacityError> {
    if a.len() != fs.j_count {
        return Err(CapacityError::DimensionMismatch {
            expected: fs.j_count,
            got: a.len(),
        });
    }
    if a.iter().any(|v| v.is_negative()) {
        return Err(CapacityError::Domain(DomainError::NegativeRate));
    }
    if a.iter().all(Zero::is_zero) {
        let k = fs.maximal_configs.len();
        let mut witness = vec![Rat::zero(); k];
        if k > 0 {
            witness[0] = Rat::one();
        }
        return Ok(RegionVerdict {
            inside: true,
            margin: Margin::Infinite,
            witness: Some(witness),
        });
    }

    let rows: Vec<Vec<Rat>> = fs
        .maximal_configs
        .iter()
        .map(|cfg| {
            cfg.counts
                .iter()
                .map(|&c| Rat::from_integer(c.into()))
                .collect()
        })
        .collect();
    let rhs = vec![Rat::one(); rows.len()];

    match lp::maximize(a, &rows, &rhs) {
        LpOutcome::Unbounded => {
            // Some positive-rate type appears in no configuration: no scaling
            // of `a` is ever dominated, so t = 0 and the margin is exactly -1.
            Ok(RegionVerdict {
                inside: false,
                margin: Margin::Finite(-Rat::one()),
                witness: None,
            })
        }
        LpOutcome::Optimal(sol) => {
            let mass = sol.value;
            debug_assert!(mass.is_positive());
            let t = Rat::one() / mass.clone();
            let margin = t - Rat::one();
            let inside = !margin.is_negative();
            // The covering primal (weights over configs) is the dual of the
            // packing LP we solved; normalizing by the mass yields convex
            // weights whose combination dominates a when inside.
            let witness = if inside {
                Some(sol.duals.iter().map(|d| d.clone() / mass.clone()).collect())
            } else {
                None
            };
            Ok(RegionVerdict {
                inside,
                margin: Margin::Finite(margin),
                witness,
            })
        }
    }
}

/// Membership for the `n`-server system: the system region is the per-server
/// region scaled by `n`, represented implicitly.
pub fn system_membership(
    a_system: &[Rat],
    fs: &FeasibleSet,
    n_servers: usize,
) -> Result<RegionVerdict, CapacityError> {
    assert!(n_servers >= 1, "system needs at least one server");
    let n = Rat::from_integer((n_servers as u64).into());
    let per_server: Vec<Rat> = a_system.iter().map(|v| v.clone() / n.clone()).collect();
    membership(&per_server, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::job_fits;
    use crate::domain::test_fixtures::{ec2_capacity, ec2_demands};
    use crate::rational::{rat, rat_int};
    use proptest::prelude::*;

    fn reference_set() -> FeasibleSet {
        enumerate_maximal_configs(&ec2_capacity(), &ec2_demands()).unwrap()
    }

    fn cfg(c: &[u32]) -> Configuration {
        Configuration::new(c.to_vec())
    }

    #[test]
    fn reference_maximal_configs() {
        let fs = reference_set();
        assert_eq!(
            fs.maximal_configs(),
            &[cfg(&[0, 1, 1]), cfg(&[1, 0, 1]), cfg(&[2, 0, 0])]
        );
    }

    #[test]
    fn single_type_filling_capacity() {
        let capacity = ResourceVector::new(vec![rat_int(4)]).unwrap();
        let demands = vec![VmTypeSpec::new(0, ResourceVector::new(vec![rat_int(4)]).unwrap()).unwrap()];
        let fs = enumerate_maximal_configs(&capacity, &demands).unwrap();
        assert_eq!(fs.maximal_configs(), &[cfg(&[1])]);
    }

    #[test]
    fn unbounded_feasible_set_is_an_error() {
        // Constructing an all-zero demand is rejected by VmTypeSpec, so
        // smuggle it in through the raw struct path used here.
        let capacity = ResourceVector::new(vec![rat_int(1)]).unwrap();
        let vm = VmTypeSpec {
            type_index: 0,
            demand: ResourceVector::new(vec![rat_int(0)]).unwrap(),
        };
        assert_eq!(
            enumerate_maximal_configs(&capacity, &[vm]),
            Err(CapacityError::Unbounded(0))
        );
    }

    /// Brute-force oracle: feasibility scan over a bounded grid followed by a
    /// non-domination filter.
    fn brute_force_maximal(
        capacity: &ResourceVector,
        demands: &[VmTypeSpec],
        bound: u32,
    ) -> Vec<Configuration> {
        let j = demands.len();
        let mut feasible = Vec::new();
        let mut counts = vec![0u32; j];
        loop {
            let c = Configuration::new(counts.clone());
            if job_fits(&c, demands, capacity).unwrap() {
                feasible.push(c);
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == j {
                    let maximal: Vec<Configuration> = feasible
                        .iter()
                        .filter(|c| {
                            !feasible
                                .iter()
                                .any(|o| *o != **c && c.dominated_by(o))
                        })
                        .cloned()
                        .collect();
                    let mut sorted = maximal;
                    sorted.sort();
                    return sorted;
                }
                if counts[i] < bound {
                    counts[i] += 1;
                    break;
                }
                counts[i] = 0;
                i += 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn enumeration_matches_grid_oracle(
            caps in proptest::collection::vec(1i64..=12, 3),
            dem in proptest::collection::vec(proptest::collection::vec(0i64..=6, 3), 3),
        ) {
            // Demands must not be all zero per type.
            let demands: Vec<VmTypeSpec> = dem
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    let mut row = row.clone();
                    if row.iter().all(|&v| v == 0) {
                        row[j % 3] = 1;
                    }
                    VmTypeSpec::new(
                        j,
                        ResourceVector::new(row.iter().map(|&v| rat_int(v)).collect()).unwrap(),
                    )
                    .unwrap()
                })
                .collect();
            let capacity = ResourceVector::new(caps.iter().map(|&v| rat_int(v)).collect()).unwrap();
            let fs = enumerate_maximal_configs(&capacity, &demands).unwrap();
            // counts are bounded by 12 (capacity) / 1 (min demand) = 12, but the
            // oracle grid only needs to reach the largest feasible count; use 13.
            let oracle = brute_force_maximal(&capacity, &demands, 13);
            prop_assert_eq!(fs.maximal_configs().to_vec(), oracle);
        }
    }

    #[test]
    fn membership_reference_scaled_boundary() {
        // 0.99 * (1, 1/3, 2/3) is strictly inside with margin exactly 1/99.
        let fs = reference_set();
        let a = vec![rat(99, 100), rat(33, 100), rat(33, 50)];
        let v = membership(&a, &fs).unwrap();
        assert!(v.inside);
        assert_eq!(v.margin, Margin::Finite(rat(1, 99)));
        let w = v.witness.unwrap();
        assert_witness_valid(&w, &a, &fs);
    }

    #[test]
    fn membership_zero_vector() {
        let fs = reference_set();
        let v = membership(&[rat_int(0), rat_int(0), rat_int(0)], &fs).unwrap();
        assert!(v.inside);
        assert_eq!(v.margin, Margin::Infinite);
    }

    #[test]
    fn membership_unscanned_mixed_flow_is_outside() {
        // Genuine plus malicious per-server rates with no scanning: the
        // minimal dominating mass is 27/20, so the margin is 20/27 - 1 = -7/27.
        let fs = reference_set();
        let a = vec![rat(169, 100), rat(17, 50), rat(67, 100)];
        let v = membership(&a, &fs).unwrap();
        assert!(!v.inside);
        assert_eq!(v.margin, Margin::Finite(rat(-7, 27)));
        assert!(v.witness.is_none());
    }

    #[test]
    fn membership_boundary_point() {
        let fs = reference_set();
        let a = vec![rat_int(1), rat(1, 3), rat(2, 3)];
        let v = membership(&a, &fs).unwrap();
        assert!(v.inside);
        assert_eq!(v.margin, Margin::Finite(rat_int(0)));
        assert_eq!(v.stability(), Stability::Boundary);
    }

    #[test]
    fn membership_unservable_type() {
        // One type, but the only maximal config cannot run it at all.
        let fs = FeasibleSet {
            maximal_configs: vec![cfg(&[0, 2])],
            j_count: 2,
        };
        let v = membership(&[rat_int(1), rat_int(0)], &fs).unwrap();
        assert!(!v.inside);
        assert_eq!(v.margin, Margin::Finite(rat_int(-1)));
    }

    fn assert_witness_valid(w: &[Rat], a: &[Rat], fs: &FeasibleSet) {
        let total: Rat = w.iter().cloned().sum();
        assert_eq!(total, rat_int(1));
        assert!(w.iter().all(|x| !x.is_negative()));
        for j in 0..fs.j_count() {
            let combo: Rat = w
                .iter()
                .zip(fs.maximal_configs())
                .map(|(wk, c)| wk.clone() * rat_int(i64::from(c.counts[j])))
                .sum();
            assert!(combo >= a[j], "witness must dominate a in every coordinate");
        }
    }

    #[test]
    fn system_membership_scales() {
        let fs = reference_set();
        let a_sys = vec![rat_int(99), rat_int(33), rat_int(66)];
        let v = system_membership(&a_sys, &fs, 100).unwrap();
        assert!(v.inside);
        assert_eq!(v.margin, Margin::Finite(rat(1, 99)));
    }

    fn arb_small_a() -> impl Strategy<Value = Vec<Rat>> {
        proptest::collection::vec((0i64..=8, 1i64..=4), 3)
            .prop_map(|v| v.into_iter().map(|(n, d)| rat(n, d)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn downward_closure(a in arb_small_a(), shrink in proptest::collection::vec(0u32..=4, 3)) {
            let fs = reference_set();
            let v = membership(&a, &fs).unwrap();
            if v.inside {
                let smaller: Vec<Rat> = a
                    .iter()
                    .zip(&shrink)
                    .map(|(x, s)| x.clone() * rat(i64::from(*s), 4))
                    .collect();
                prop_assert!(membership(&smaller, &fs).unwrap().inside);
            }
        }

        #[test]
        fn scaling_lands_on_boundary(a in arb_small_a()) {
            let fs = reference_set();
            prop_assume!(a.iter().any(|x| x.is_positive()));
            let v = membership(&a, &fs).unwrap();
            if let Margin::Finite(m) = v.margin {
                let one_plus = rat_int(1) + m.clone();
                prop_assume!(one_plus.is_positive());
                let scaled: Vec<Rat> = a.iter().map(|x| x.clone() * one_plus.clone()).collect();
                let onb = membership(&scaled, &fs).unwrap();
                prop_assert_eq!(onb.margin, Margin::Finite(rat_int(0)));
                // Any rational delta > 0 pushes it outside.
                let delta = rat(1, 1000);
                let outside: Vec<Rat> = a
                    .iter()
                    .map(|x| x.clone() * (one_plus.clone() + delta.clone()))
                    .collect();
                prop_assert!(!membership(&outside, &fs).unwrap().inside);
            }
        }

        #[test]
        fn system_identity(a in arb_small_a(), n in 1usize..=64) {
            let fs = reference_set();
            let scaled: Vec<Rat> = a
                .iter()
                .map(|x| x.clone() * rat_int(n as i64))
                .collect();
            let sys = system_membership(&scaled, &fs, n).unwrap();
            let per = membership(&a, &fs).unwrap();
            prop_assert_eq!(sys.margin, per.margin);
            prop_assert_eq!(sys.inside, per.inside);
        }
    }
}
