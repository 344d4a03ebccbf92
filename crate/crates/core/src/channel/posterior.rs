//! Rician posterior of the true channel magnitude given an imperfect report,
//! and fixed-node Gauss-Legendre integration against it.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Node count used for expectations over the posterior.
pub const EXPECTATION_NODES: usize = 256;

/// Half-width of the integration window, in per-dimension standard deviations.
const WINDOW_SIGMAS: f64 = 10.0;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) struct Rule {
    pairs: Vec<(f64, f64)>,
}

impl Rule {
    fn new(n: usize) -> Self {
        let gl = GaussLegendre::new(NonZeroUsize::new(n).expect("nonzero rule size"));
        Rule {
            pairs: gl.as_node_weight_pairs().to_vec(),
        }
    }

    /// Maps the rule onto `[a, b]`, yielding `(x, w)`.
    pub(crate) fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, w * half))
    }
}

pub(crate) fn rule(n: usize) -> &'static Rule {
    static R8: OnceLock<Rule> = OnceLock::new();
    static R16: OnceLock<Rule> = OnceLock::new();
    static R64: OnceLock<Rule> = OnceLock::new();
    static R256: OnceLock<Rule> = OnceLock::new();
    let cell = match n {
        8 => &R8,
        16 => &R16,
        64 => &R64,
        256 => &R256,
        _ => panic!("no cached Gauss-Legendre rule with {n} nodes"),
    };
    cell.get_or_init(|| Rule::new(n))
}

/// Exponentially scaled modified Bessel function `exp(-x) I0(x)` for `x >= 0`.
///
/// Polynomial approximations from Abramowitz & Stegun 9.8.1/9.8.2, relative
/// error below 1e-6.
pub fn bessel_i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 3.75 {
        let t = (ax / 3.75).powi(2);
        let i0 = 1.0
            + t * (3.515_622_9
                + t * (3.089_942_4
                    + t * (1.206_749_2 + t * (0.265_973_2 + t * (0.036_076_8 + t * 0.004_581_3)))));
        i0 * (-ax).exp()
    } else {
        let t = 3.75 / ax;
        let poly = 0.398_942_28
            + t * (0.013_285_92
                + t * (0.002_253_19
                    + t * (-0.001_575_65
                        + t * (0.009_162_81
                            + t * (-0.020_577_06
                                + t * (0.026_355_37 + t * (-0.016_476_33 + t * 0.003_923_77)))))));
        poly / ax.sqrt()
    }
}

/// Distribution of `|h|` where `h ~ CN(mean, var)`: Rician with
/// noncentrality `nu = |mean|` and per-dimension deviation `sigma = sqrt(var/2)`.
/// `sigma == 0` is a point mass at `nu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RicianPosterior {
    pub nu: f64,
    pub sigma: f64,
}

impl RicianPosterior {
    pub fn new(mean_magnitude: f64, complex_variance: f64) -> Self {
        RicianPosterior {
            nu: mean_magnitude.abs(),
            sigma: (0.5 * complex_variance.max(0.0)).sqrt(),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if r <= 0.0 || self.sigma == 0.0 {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        let d = r - self.nu;
        (r / s2) * (-(d * d) / (2.0 * s2)).exp() * bessel_i0e(r * self.nu / s2)
    }

    /// Interval outside of which the posterior mass is negligible.
    pub fn window(&self) -> (f64, f64) {
        let lo = (self.nu - WINDOW_SIGMAS * self.sigma).max(0.0);
        (lo, self.nu + WINDOW_SIGMAS * self.sigma)
    }

    /// `E[f(|h|)]`, where `f` is smooth between the given breakpoints.
    ///
    /// Each piece of the window gets its own `nodes`-point rule. The result is
    /// normalised by the integrated window mass.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64], nodes: usize) -> f64 {
        if self.is_point_mass() {
            return f(self.nu);
        }
        let (lo, hi) = self.window();
        let rule = rule(nodes);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in pieces(lo, hi, breaks) {
            for (x, w) in rule.on(a, b) {
                let p = self.pdf(x) * w;
                num += p * f(x);
                den += p;
            }
        }
        num / den
    }

    /// `P(|h| >= c)` for every threshold in `sorted` (ascending).
    pub fn survival_many(&self, sorted: &[f64]) -> Vec<f64> {
        if self.is_point_mass() {
            return sorted.iter().map(|&c| if self.nu >= c { 1.0 } else { 0.0 }).collect();
        }
        let (lo, hi) = self.window();
        let mut edges: Vec<f64> = (0..=32).map(|k| lo + (hi - lo) * k as f64 / 32.0).collect();
        edges.extend(sorted.iter().copied().filter(|&c| c > lo && c < hi));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let rule = rule(8);
        // mass[k] = mass on [edges[k], edges[k+1]]
        let mass: Vec<f64> = edges
            .windows(2)
            .map(|e| rule.on(e[0], e[1]).map(|(x, w)| self.pdf(x) * w).sum())
            .collect();
        let total: f64 = mass.iter().sum();
        // above[k] = mass on [edges[k], hi]
        let mut above = vec![0.0; edges.len()];
        for k in (0..mass.len()).rev() {
            above[k] = above[k + 1] + mass[k];
        }
        sorted
            .iter()
            .map(|&c| {
                if c <= lo {
                    1.0
                } else if c >= hi {
                    0.0
                } else {
                    let k = edges.partition_point(|&e| e < c);
                    above[k] / total
                }
            })
            .collect()
    }
}

/// Splits `[lo, hi]` at the breakpoints falling strictly inside it.
pub(crate) fn pieces(lo: f64, hi: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut edges = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    inner.sort_by(f64::total_cmp);
    edges.extend(inner);
    edges.push(hi);
    edges.windows(2).map(|e| (e[0], e[1])).filter(|(a, b)| b > a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0e_matches_series() {
        // I0(x) = sum (x/2)^{2k} / (k!)^2
        for &x in &[0.0, 0.5, 1.0, 3.0, 3.75, 5.0, 10.0, 30.0] {
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..200 {
                term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
                sum += term;
            }
            let expected = sum * (-x).exp();
            assert!(
                ((bessel_i0e(x) - expected) / expected).abs() < 1e-6,
                "x={x}: {} vs {expected}",
                bessel_i0e(x)
            );
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for &(nu, var) in &[(0.0, 1.0), (1.0, 0.2), (3.0, 0.01), (0.3, 2.0)] {
            let post = RicianPosterior::new(nu, var);
            let (lo, hi) = post.window();
            let mass: f64 = rule(256).on(lo, hi).map(|(x, w)| post.pdf(x) * w).sum();
            assert!((mass - 1.0).abs() < 1e-6, "nu={nu} var={var} mass={mass}");
        }
    }

    #[test]
    fn rayleigh_survival_closed_form() {
        // nu = 0, E|h|^2 = var: P(|h| >= c) = exp(-c^2 / var)
        let post = RicianPosterior::new(0.0, 2.0);
        let cs = [0.1, 0.5, 1.0, 2.0, 3.0];
        for (c, s) in cs.iter().zip(post.survival_many(&cs)) {
            assert!((s - (-c * c / 2.0f64).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn second_moment() {
        let post = RicianPosterior::new(1.5, 0.4);
        let m2 = post.expect(|r| r * r, &[], 256);
        assert!((m2 - (1.5 * 1.5 + 0.4)).abs() < 1e-6);
    }
}
