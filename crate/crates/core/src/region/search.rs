//! Simulated boundary search by bisection on the load scale.

use crate::error::Result;

/// Result of a bisection: `stable` was judged stable, `unstable` was not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub stable: f64,
    pub unstable: f64,
    pub evaluations: usize,
    /// False if the budget ran out before the bracket was narrow enough.
    pub converged: bool,
}

impl Bracket {
    pub fn contains(&self, x: f64) -> bool {
        self.stable <= x && x <= self.unstable
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.stable + self.unstable)
    }
}

/// Bisects the load scale `t` between 0 and `upper`.
///
/// `is_stable(t)` runs the policy at load `t * direction`; inconclusive
/// verdicts should map to `false`. If `upper` is stable the bracket grows by
/// doubling. Stops once `unstable - stable <= rel_width * unstable` or after
/// `max_evals` evaluations.
pub fn empirical_boundary_search<F>(mut is_stable: F, upper: f64, rel_width: f64, max_evals: usize) -> Result<Bracket>
where
    F: FnMut(f64) -> Result<bool>,
{
    let mut lo = 0.0;
    let mut hi = upper;
    let mut evals = 0;
    let mut found_unstable = false;
    while evals < max_evals {
        evals += 1;
        if is_stable(hi)? {
            lo = hi;
            hi *= 2.0;
        } else {
            found_unstable = true;
            break;
        }
    }
    while found_unstable && evals < max_evals && hi - lo > rel_width * hi {
        let mid = 0.5 * (lo + hi);
        evals += 1;
        if is_stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bracket {
        stable: lo,
        unstable: hi,
        evaluations: evals,
        converged: found_unstable && hi - lo <= rel_width * hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_a_known_threshold() {
        let b = empirical_boundary_search(|t| Ok(t < 4.0), 10.0, 0.05, 50).unwrap();
        assert!(b.contains(4.0));
        assert!(b.converged);
        assert!(b.unstable - b.stable <= 0.05 * b.unstable);
    }

    #[test]
    fn grows_when_upper_is_stable() {
        let b = empirical_boundary_search(|t| Ok(t < 9.0), 1.0, 0.05, 50).unwrap();
        assert!(b.contains(9.0));
    }

    #[test]
    fn zero_rate_policy() {
        let mut tested = Vec::new();
        let b = empirical_boundary_search(
            |t| {
                tested.push(t);
                Ok(false)
            },
            8.0,
            0.05,
            12,
        )
        .unwrap();
        assert_eq!(b.stable, 0.0);
        let smallest = tested.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(b.unstable <= smallest);
        assert!(!b.converged);
    }
}
