//! Welch t-tests, t confidence intervals, significance grids and box-plot
//! summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// special functions

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// `P(T > |t|)` for Student's t with `dof` degrees of freedom.
fn t_upper_tail_abs(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    0.5 * inc_beta(0.5 * dof, 0.5, dof / (dof + t * t))
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t.is_nan() || !(dof > 0.0) {
        return f64::NAN;
    }
    let tail = t_upper_tail_abs(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse of [`student_t_cdf`] for `p` in `(0, 1)`.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) || !(dof > 0.0) {
        return f64::NAN;
    }
    if p == 0.5 {
        return 0.0;
    }
    // bracket then bisect; the cdf is monotone so this always converges
    let (mut lo, mut hi) = (-1.0, 1.0);
    while student_t_cdf(lo, dof) > p {
        lo *= 2.0;
    }
    while student_t_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// sample statistics

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom
    pub dof: f64,
    pub p_two_tailed: f64,
    /// `P(T ≥ t)`: small when the first sample's mean is larger
    pub p_one_tailed: f64,
}

/// Two-sample t-test without the equal-variance assumption.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(Error::UndefinedVariance(
            "both samples are constant".into(),
        ));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let p_two = (2.0 * t_upper_tail_abs(t, dof)).min(1.0);
    let p_one = 1.0 - student_t_cdf(t, dof);
    Ok(TTestResult {
        t,
        dof,
        p_two_tailed: p_two,
        p_one_tailed: p_one,
    })
}

/// Sample mean and the half-width of its 95% t confidence interval.
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "confidence interval needs n >= 2, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let s = variance(xs).sqrt();
    let t = student_t_quantile(0.975, n - 1.0);
    Ok((mean(xs), t * s / n.sqrt()))
}

// ---------------------------------------------------------------------------
// significance grids

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Plus,
    Minus,
    Blank,
}

impl Cell {
    pub fn symbol(self) -> &'static str {
        match self {
            Cell::Plus => "+",
            Cell::Minus => "-",
            Cell::Blank => "",
        }
    }
}

/// Whether larger metric values are better (accuracy) or worse (MSE,
/// stopping epoch).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignificanceGrid {
    pub labels: Vec<String>,
    pub alpha: f64,
    pub direction: Direction,
    /// row-major, `labels.len()²` cells
    pub cells: Vec<Cell>,
}

impl SignificanceGrid {
    pub fn cell(&self, i: usize, j: usize) -> Cell {
        self.cells[i * self.labels.len() + j]
    }

    pub fn is_antisymmetric(&self) -> bool {
        let n = self.labels.len();
        (0..n).all(|i| {
            self.cell(i, i) == Cell::Blank
                && (0..n).all(|j| match self.cell(i, j) {
                    Cell::Plus => self.cell(j, i) == Cell::Minus,
                    Cell::Minus => self.cell(j, i) == Cell::Plus,
                    Cell::Blank => self.cell(j, i) == Cell::Blank,
                })
        })
    }

    /// Fixed-width text rendering with row labels down the side.
    pub fn render(&self) -> String {
        let w = self.labels.iter().map(|l| l.len()).max().unwrap_or(1).max(1);
        let mut s = format!("{:>w$} |", "");
        for l in &self.labels {
            s.push_str(&format!(" {l:>w$}"));
        }
        s.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(&format!("{l:>w$} |"));
            for j in 0..self.labels.len() {
                s.push_str(&format!(" {:>w$}", self.cell(i, j).symbol()));
            }
            s.push('\n');
        }
        s
    }
}

/// Pairwise Welch tests: `+` where row mean is significantly higher than
/// column mean at `alpha` (two-tailed), `-` where lower, blank otherwise.
pub fn significance_grid(
    groups: &[(String, Vec<f64>)],
    alpha: f64,
    direction: Direction,
) -> Result<SignificanceGrid> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(
            "significance grid needs at least 2 groups".into(),
        ));
    }
    let n = groups.len();
    let mut cells = vec![Cell::Blank; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&groups[i].1, &groups[j].1);
            let cell = match welch_t(a, b) {
                Ok(r) if r.p_two_tailed < alpha => {
                    if r.t > 0.0 {
                        Cell::Plus
                    } else {
                        Cell::Minus
                    }
                }
                Ok(_) => Cell::Blank,
                // two constant samples: identical means are "no difference",
                // distinct ones are separated with certainty
                Err(Error::UndefinedVariance(_)) => {
                    let (ma, mb) = (mean(a), mean(b));
                    if ma > mb {
                        Cell::Plus
                    } else if ma < mb {
                        Cell::Minus
                    } else {
                        Cell::Blank
                    }
                }
                Err(e) => return Err(e),
            };
            cells[i * n + j] = cell;
            cells[j * n + i] = match cell {
                Cell::Plus => Cell::Minus,
                Cell::Minus => Cell::Plus,
                Cell::Blank => Cell::Blank,
            };
        }
    }
    Ok(SignificanceGrid {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        alpha,
        direction,
        cells,
    })
}

/// Table-style annotation: signed delta, star tier, parenthesized p.
/// `+0.0114*** (0.0004)`.
pub fn format_delta(delta: f64, p: f64) -> String {
    format!("{delta:+.4}{} ({p:.4})", stars(p))
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

// ---------------------------------------------------------------------------
// box-plot summaries

/// Quantile by linear interpolation between order statistics of a sorted
/// slice (position `(n-1)·q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let t = h - lo as f64;
    lerp(sorted[lo], sorted[hi], t)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 || a == b {
        a
    } else if t == 1.0 {
        b
    } else if a.is_infinite() {
        a
    } else if b.is_infinite() {
        b
    } else {
        a + t * (b - a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lower_fence, upper_fence) = if iqr.is_finite() {
            (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
        } else {
            (q1, q3)
        };
        Some(BoxStats {
            mean: mean(&sorted),
            q1,
            median: quantile_sorted(&sorted, 0.5),
            q3,
            lower_fence,
            upper_fence,
        })
    }

    pub fn is_outlier(&self, v: f64) -> bool {
        v < self.lower_fence || v > self.upper_fence
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_welch_example() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r.t, -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(r.dof, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_two_tailed, 0.2878641347266908, epsilon = 1e-10);
        assert!(r.p_one_tailed > 0.5);
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 4.0, 2.5, 3.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_abs_diff_eq!(r.p_two_tailed, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.p_one_tailed, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn scale_invariance() {
        let a = [1.0, 2.0, 3.5, 0.2];
        let b = [2.0, 3.0, 4.0];
        let r = welch_t(&a, &b).unwrap();
        let s: Vec<f64> = a.iter().map(|v| v * 7.3).collect();
        let t: Vec<f64> = b.iter().map(|v| v * 7.3).collect();
        let rs = welch_t(&s, &t).unwrap();
        assert_abs_diff_eq!(r.t, rs.t, epsilon = 1e-12);
        assert_abs_diff_eq!(r.dof, rs.dof, epsilon = 1e-10);
        assert_abs_diff_eq!(r.p_two_tailed, rs.p_two_tailed, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_and_short_samples() {
        assert!(matches!(
            welch_t(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::UndefinedVariance(_))
        ));
        assert!(matches!(welch_t(&[1.0], &[2.0, 3.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn antisymmetric_t() {
        let a = [0.3, 0.9, 1.7];
        let b = [2.0, 2.2, 1.9, 2.8];
        assert_eq!(welch_t(&a, &b).unwrap().t, -welch_t(&b, &a).unwrap().t);
    }

    #[test]
    fn ci_cases() {
        let (m, h) = mean_ci95(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((m, h), (2.0, 0.0));
        let (m, h) = mean_ci95(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        // t_{0.975,1} = 12.7062, s = 0.7071, sqrt(n) = 1.4142
        assert_abs_diff_eq!(h, 6.3531, epsilon = 1e-4);
        assert!(mean_ci95(&[1.0]).is_err());
    }

    #[test]
    fn t_quantile_table_values() {
        assert_abs_diff_eq!(student_t_quantile(0.975, 1.0), 12.706204736, epsilon = 1e-8);
        assert_abs_diff_eq!(student_t_quantile(0.975, 9.0), 2.262157163, epsilon = 1e-8);
        assert_abs_diff_eq!(student_t_quantile(0.025, 9.0), -2.262157163, epsilon = 1e-8);
    }

    #[test]
    fn grid_cases() {
        let same = vec![
            ("a".to_string(), vec![1.0, 2.0, 3.0]),
            ("b".to_string(), vec![1.0, 2.0, 3.0]),
        ];
        let g = significance_grid(&same, 0.01, Direction::LowerIsBetter).unwrap();
        assert!(g.cells.iter().all(|&c| c == Cell::Blank));

        let sep = vec![
            ("lo".to_string(), vec![0.0, 0.0, 0.001, 0.0005]),
            ("hi".to_string(), vec![1.0, 1.0, 1.001, 1.0005]),
        ];
        let g = significance_grid(&sep, 0.01, Direction::LowerIsBetter).unwrap();
        assert_eq!(g.cell(0, 1), Cell::Minus);
        assert_eq!(g.cell(1, 0), Cell::Plus);
        assert!(g.is_antisymmetric());
        assert!(g.render().contains('+'));

        assert!(significance_grid(&same[..1], 0.01, Direction::LowerIsBetter).is_err());
    }

    #[test]
    fn star_tiers() {
        assert_eq!(format_delta(0.0114, 0.0004), "+0.0114*** (0.0004)");
        assert_eq!(format_delta(0.0052, 0.0035), "+0.0052** (0.0035)");
        assert_eq!(format_delta(-0.002, 0.013), "-0.0020* (0.0130)");
        assert_eq!(stars(0.2), "");
    }

    #[test]
    fn quartiles_interpolate() {
        let b = BoxStats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(b.q1, 1.75);
        assert_eq!(b.median, 2.5);
        assert_eq!(b.q3, 3.25);
        assert_eq!(b.mean, 2.5);
        assert!(b.is_outlier(7.0));
        assert!(!b.is_outlier(5.5));

        let b = BoxStats::of(&[f64::NEG_INFINITY, 1.0, 2.0]).unwrap();
        assert_eq!(b.mean, f64::NEG_INFINITY);
        assert!(b.q1 == f64::NEG_INFINITY && b.median == 1.0);
    }
}
