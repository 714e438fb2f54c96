use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{differences, glass_delta, median, pct_negative, spearman_rho, wilcoxon_tost, TostResult};
use crate::{Error, Result};

/// Per-test-case relative L² errors (percent) of one model, possibly pooled
/// over several seeds. Entries are keyed by `(seed, case)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSequence {
    pub label: String,
    pub seeds: Vec<u64>,
    pub cases: Vec<usize>,
    pub errors: Vec<f64>,
}

impl ErrorSequence {
    pub const CSV_HEADER: &'static str = "seed,case,rel_l2_percent";

    pub fn new(label: impl Into<String>, seed: u64, errors: Vec<f64>) -> Result<Self> {
        let seq = Self {
            label: label.into(),
            seeds: vec![seed; errors.len()],
            cases: (0..errors.len()).collect(),
            errors,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.len() != self.errors.len() || self.cases.len() != self.errors.len() {
            return Err(Error::Format(format!("error sequence '{}' has ragged columns", self.label)));
        }
        if let Some(bad) = self.errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::Format(format!("error sequence '{}' holds invalid error {bad}", self.label)));
        }
        Ok(())
    }

    /// Concatenates runs of the same model (e.g. different seeds).
    pub fn pooled(label: impl Into<String>, parts: &[ErrorSequence]) -> Result<Self> {
        let mut out = Self {
            label: label.into(),
            ..Default::default()
        };
        for p in parts {
            out.seeds.extend_from_slice(&p.seeds);
            out.cases.extend_from_slice(&p.cases);
            out.errors.extend_from_slice(&p.errors);
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for i in 0..self.len() {
            let _ = writeln!(s, "{},{},{:.17e}", self.seeds[i], self.cases[i], self.errors[i]);
        }
        s
    }

    pub fn from_csv(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(Self::CSV_HEADER) {
            return Err(Error::Format(format!("expected header '{}'", Self::CSV_HEADER)));
        }
        let mut seq = Self {
            label: label.into(),
            ..Default::default()
        };
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("error row {}: '{line}'", n + 2));
            if f.len() != 3 {
                return Err(bad());
            }
            seq.seeds.push(f[0].parse().map_err(|_| bad())?);
            seq.cases.push(f[1].parse().map_err(|_| bad())?);
            seq.errors.push(f[2].parse().map_err(|_| bad())?);
        }
        seq.validate()?;
        Ok(seq)
    }

    /// Reorders `other` to this sequence's `(seed, case)` order.
    fn align(&self, other: &ErrorSequence) -> Result<Vec<f64>> {
        if self.len() != other.len() {
            return Err(Error::Pairing(format!(
                "'{}' has {} cases, '{}' has {}",
                self.label,
                self.len(),
                other.label,
                other.len()
            )));
        }
        let mut index = HashMap::with_capacity(other.len());
        for i in 0..other.len() {
            if index.insert((other.seeds[i], other.cases[i]), other.errors[i]).is_some() {
                return Err(Error::Pairing(format!(
                    "'{}' repeats seed {} case {}",
                    other.label, other.seeds[i], other.cases[i]
                )));
            }
        }
        (0..self.len())
            .map(|i| {
                index.get(&(self.seeds[i], self.cases[i])).copied().ok_or_else(|| {
                    Error::Pairing(format!(
                        "'{}' lacks seed {} case {}",
                        other.label, self.seeds[i], self.cases[i]
                    ))
                })
            })
            .collect()
    }
}

/// `Δ = 0.2 · min(baseline)`.
pub fn equivalence_margin(baseline: &[f64]) -> Result<f64> {
    let min = baseline.iter().copied().fold(f64::INFINITY, f64::min);
    if baseline.is_empty() || !(min > 0.0) || !min.is_finite() {
        return Err(Error::UndefinedMetric(
            "equivalence margin needs a positive minimum baseline error".into(),
        ));
    }
    Ok(0.2 * min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equivalent,
    VariantBetter,
    BaselineBetter,
    /// Not equivalent, yet the median difference is exactly zero.
    Undecided,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Equivalent => "equivalent",
            Verdict::VariantBetter => "variant_better",
            Verdict::BaselineBetter => "baseline_better",
            Verdict::Undecided => "undecided",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub variant: String,
    pub baseline: String,
    pub n: usize,
    pub pct_negative: f64,
    pub margin: f64,
    pub w_lower: f64,
    pub w_upper: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub equivalent: bool,
    pub exact: bool,
    pub median_difference: f64,
    pub verdict: Verdict,
    /// Only when not equivalent.
    pub glass_delta: Option<f64>,
    pub spearman_rho: f64,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "variant,baseline,n,pct_negative,margin,w_lower,w_upper,p_lower,p_upper,equivalent,median_difference,verdict,glass_delta,spearman_rho";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6e},{},{},{:.6e},{:.6e},{},{:.6e},{},{},{:.6}",
            self.variant,
            self.baseline,
            self.n,
            self.pct_negative,
            self.margin,
            self.w_lower,
            self.w_upper,
            self.p_lower,
            self.p_upper,
            if self.equivalent { "yes" } else { "no" },
            self.median_difference,
            self.verdict.name(),
            self.glass_delta.map_or(String::new(), |g| format!("{g:.6}")),
            self.spearman_rho,
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The full paired comparison of `variant` against `baseline`. The margin
/// defaults to [`equivalence_margin`] of the baseline errors.
pub fn compare(variant: &ErrorSequence, baseline: &ErrorSequence, margin: Option<f64>) -> Result<ComparisonReport> {
    variant.validate()?;
    baseline.validate()?;
    let b = &baseline.errors;
    let v = baseline.align(variant)?;
    let margin = match margin {
        Some(m) => m,
        None => equivalence_margin(b)?,
    };
    let d = differences(&v, b)?;
    let TostResult {
        w_lower,
        w_upper,
        p_lower,
        p_upper,
        equivalent,
        exact,
    } = wilcoxon_tost(&v, b, margin)?;
    let median_difference = median(&d)?;
    let verdict = if equivalent {
        Verdict::Equivalent
    } else if median_difference < 0.0 {
        Verdict::VariantBetter
    } else if median_difference > 0.0 {
        Verdict::BaselineBetter
    } else {
        Verdict::Undecided
    };
    let glass_delta = if equivalent { None } else { Some(glass_delta(&v, b)?) };
    Ok(ComparisonReport {
        variant: variant.label.clone(),
        baseline: baseline.label.clone(),
        n: d.len(),
        pct_negative: pct_negative(&d)?,
        margin,
        w_lower,
        w_upper,
        p_lower,
        p_upper,
        equivalent,
        exact,
        median_difference,
        verdict,
        glass_delta,
        spearman_rho: spearman_rho(&v, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(label: &str, e: &[f64]) -> ErrorSequence {
        ErrorSequence::new(label, 0, e.to_vec()).unwrap()
    }

    #[test]
    fn margin_rule() {
        assert!((equivalence_margin(&[3.0, 2.0, 4.0]).unwrap() - 0.4).abs() < 1e-15);
        assert!(equivalence_margin(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn self_comparison_is_equivalent() {
        let e: Vec<f64> = (0..12).map(|i| 1.0 + 0.37 * ((i * 5) % 7) as f64).collect();
        let r = compare(&seq("a", &e), &seq("a", &e), None).unwrap();
        assert_eq!(r.pct_negative, 0.0);
        assert_eq!(r.median_difference, 0.0);
        assert!(r.equivalent && r.glass_delta.is_none());
        assert_eq!(r.verdict, Verdict::Equivalent);
        assert!((r.spearman_rho - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clearly_better_variant() {
        let b: Vec<f64> = (0..15).map(|i| 2.0 + 0.1 * i as f64).collect();
        let v: Vec<f64> = b.iter().map(|x| x - 1.0).collect();
        let r = compare(&seq("v", &v), &seq("b", &b), None).unwrap();
        assert!(!r.equivalent);
        assert_eq!(r.verdict, Verdict::VariantBetter);
        assert!(r.glass_delta.unwrap() < 0.0);
        assert_eq!(r.pct_negative, 100.0);
    }

    #[test]
    fn pairs_by_key_not_position() {
        let b = seq("b", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut v = b.clone();
        v.label = "v".into();
        v.cases.reverse();
        v.errors.reverse();
        let r = compare(&v, &b, Some(0.1)).unwrap();
        assert_eq!(r.median_difference, 0.0);
        let mut missing = v.clone();
        missing.cases[0] = 99;
        assert!(matches!(compare(&missing, &b, None), Err(Error::Pairing(_))));
    }

    #[test]
    fn csv_round_trip_and_report_formats() {
        let s = ErrorSequence::new("m", 7, vec![0.25, 1.0 / 3.0, 2.5]).unwrap();
        let back = ErrorSequence::from_csv("m", &s.to_csv()).unwrap();
        assert_eq!(back, s);
        assert!(ErrorSequence::from_csv("m", "bad\n").is_err());
        assert!(ErrorSequence::from_csv("m", "seed,case,rel_l2_percent\n0,0,-1\n").is_err());

        let e: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let r = compare(&seq("a", &e), &seq("b", &e), None).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().nth(1).unwrap().split(',').count(),
            ComparisonReport::CSV_HEADER.split(',').count()
        );
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["equivalent"], true);
        assert!(json["glass_delta"].is_null());
    }
}
