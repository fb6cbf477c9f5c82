//! Summary statistics over per-seed results.

use serde::{Deserialize, Serialize};

/// Two-sided 95% Student-t critical values for 1..=30 degrees of freedom.
const T95: [f64; 30] = [
    12.706204736432095,
    4.302652729696142,
    3.182446305284263,
    2.7764451051977987,
    2.570581835636314,
    2.4469118511449692,
    2.3646242515927844,
    2.306004135204166,
    2.2621571628540993,
    2.2281388519649385,
    2.200985160082949,
    2.1788128296634177,
    2.1603686564610127,
    2.1447866879169273,
    2.131449545559323,
    2.1199052992210112,
    2.1098155778331806,
    2.10092204024096,
    2.093024054408263,
    2.0859634472658364,
    2.079613844727662,
    2.0738730679040147,
    2.0686576104190406,
    2.0638985616280205,
    2.059538552753294,
    2.055529438642871,
    2.0518305164802833,
    2.048407141795244,
    2.045229642132703,
    2.0422724563012373,
];

const Z975: f64 = 1.959963984540054;

/// Two-sided 95% critical value of Student's t with `df` degrees of freedom.
///
/// Tabulated up to 30; beyond that a Cornish-Fisher expansion around the
/// normal quantile, accurate to better than 1e-4.
pub fn t_critical_95(df: usize) -> f64 {
    match df {
        0 => f64::INFINITY,
        1..=30 => T95[df - 1],
        _ => {
            let z = Z975;
            let n = df as f64;
            let z3 = z.powi(3);
            let z5 = z.powi(5);
            let z7 = z.powi(7);
            z + (z3 + z) / (4.0 * n)
                + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * n * n)
                + (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * n.powi(3))
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Half-width of the 95% t-interval for the mean; 0 when `n < 2`.
    pub ci95: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        let std = sample_std(xs);
        let ci95 = if n < 2 {
            0.0
        } else {
            t_critical_95(n - 1) * std / (n as f64).sqrt()
        };
        Summary {
            n,
            mean: mean(xs),
            std,
            ci95,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }

    pub fn overlaps(&self, other: &Summary) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_and_ci() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.ci95 - 3.182446305284263 * s.std / 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[0.7]).ci95, 0.0);
    }

    #[test]
    fn t_expansion_is_continuous_with_table() {
        // scipy.stats.t.ppf(0.975, 31) = 2.0395134463964077
        assert!((t_critical_95(31) - 2.0395134463964077).abs() < 1e-4);
        // scipy.stats.t.ppf(0.975, 100) = 1.9839715184496334
        assert!((t_critical_95(100) - 1.9839715184496334).abs() < 1e-5);
        for df in 1..200 {
            assert!(t_critical_95(df + 1) < t_critical_95(df));
        }
    }

    #[test]
    fn overlap() {
        let a = Summary {
            n: 2,
            mean: 0.5,
            std: 0.0,
            ci95: 0.1,
        };
        let b = Summary {
            n: 2,
            mean: 0.65,
            std: 0.0,
            ci95: 0.1,
        };
        let c = Summary {
            n: 2,
            mean: 0.75,
            std: 0.0,
            ci95: 0.01,
        };
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&c));
    }
}
