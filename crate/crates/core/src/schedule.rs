//! Step-size schedules and the two-time-scale validity check.
//!
//! APCD needs step sizes `a(t)` (E step) and `b(t)` (M step) with
//! `Σ a = Σ b = ∞`, `Σ (a² + b²) < ∞` and `a(t)/b(t) → 0` or `∞`.
//! [`validate_schedule_pair`] decides those conditions analytically from the
//! schedule family, it never sums numerically.

use std::fmt;
use std::str::FromStr;

use crate::error::{ApcdError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    /// `c / (1 + t)^p`
    PowerLaw { c: f64, p: f64 },
    /// `c / (1 + t · ln(t + 2))`
    LogDamped { c: f64 },
    /// Linear interpolation from `start` to `end` over `epochs` epochs,
    /// constant per epoch and held at `end` afterwards.
    LinearDecay {
        start: f64,
        end: f64,
        epochs: usize,
        iters_per_epoch: usize,
    },
    /// `value` for every `t`. Zero freezes the corresponding step.
    Constant { value: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ApcdError::Schedule(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ScheduleSpec {
    pub fn power_law(c: f64, p: f64) -> Result<Self> {
        positive("c", c)?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(ApcdError::Schedule(format!("exponent p must lie in (0, 1], got {p}")));
        }
        Ok(ScheduleSpec::PowerLaw { c, p })
    }

    pub fn log_damped(c: f64) -> Result<Self> {
        positive("c", c)?;
        Ok(ScheduleSpec::LogDamped { c })
    }

    pub fn linear_decay(start: f64, end: f64, epochs: usize) -> Result<Self> {
        positive("start", start)?;
        positive("end", end)?;
        if end > start {
            return Err(ApcdError::Schedule(format!(
                "linear decay must not increase (start {start} < end {end})"
            )));
        }
        if epochs == 0 {
            return Err(ApcdError::Schedule("linear decay needs at least one epoch".into()));
        }
        Ok(ScheduleSpec::LinearDecay {
            start,
            end,
            epochs,
            iters_per_epoch: 1,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(ApcdError::Schedule(format!("constant step must be finite and >= 0, got {value}")));
        }
        Ok(ScheduleSpec::Constant { value })
    }

    /// Sets how many iterations make one epoch; only linear decay uses it.
    pub fn with_iters_per_epoch(self, iters: usize) -> Self {
        match self {
            ScheduleSpec::LinearDecay { start, end, epochs, .. } => ScheduleSpec::LinearDecay {
                start,
                end,
                epochs,
                iters_per_epoch: iters.max(1),
            },
            other => other,
        }
    }

    pub fn value(&self, t: usize) -> f64 {
        let tf = t as f64;
        match *self {
            ScheduleSpec::PowerLaw { c, p } => c / (1.0 + tf).powf(p),
            ScheduleSpec::LogDamped { c } => c / (1.0 + tf * (tf + 2.0).ln()),
            ScheduleSpec::LinearDecay {
                start,
                end,
                epochs,
                iters_per_epoch,
            } => {
                let epoch = t / iters_per_epoch.max(1);
                if epochs <= 1 {
                    return start;
                }
                let frac = (epoch as f64 / (epochs - 1) as f64).min(1.0);
                start + (end - start) * frac
            }
            ScheduleSpec::Constant { value } => value,
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScheduleSpec::PowerLaw { c, p } => write!(f, "power:{c}:{p}"),
            ScheduleSpec::LogDamped { c } => write!(f, "log:{c}"),
            ScheduleSpec::LinearDecay { start, end, epochs, .. } => write!(f, "linear:{start}:{end}:{epochs}"),
            ScheduleSpec::Constant { value } => write!(f, "const:{value}"),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = ApcdError;

    /// `power:C:P`, `log:C`, `linear:START:END:EPOCHS` or `const:V`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| ApcdError::Schedule(format!("missing field {i} in {s:?}")))?
                .parse::<f64>()
                .map_err(|e| ApcdError::Schedule(format!("bad number in {s:?}: {e}")))
        };
        let arity = |n: usize| -> Result<()> {
            if parts.len() == n {
                Ok(())
            } else {
                Err(ApcdError::Schedule(format!("{s:?} should have {} fields", n - 1)))
            }
        };
        match parts[0] {
            "power" => {
                arity(3)?;
                ScheduleSpec::power_law(num(1)?, num(2)?)
            }
            "log" => {
                arity(2)?;
                ScheduleSpec::log_damped(num(1)?)
            }
            "linear" => {
                arity(4)?;
                let epochs = parts[3]
                    .parse::<usize>()
                    .map_err(|e| ApcdError::Schedule(format!("bad epoch count in {s:?}: {e}")))?;
                ScheduleSpec::linear_decay(num(1)?, num(2)?, epochs)
            }
            "const" => {
                arity(2)?;
                ScheduleSpec::constant(num(1)?)
            }
            other => Err(ApcdError::Schedule(format!("unknown schedule family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleVerdict {
    /// `a/b → ∞`: the E step runs on the faster time scale.
    ValidEFast,
    /// `a/b → 0`: the M step runs on the faster time scale.
    ValidESlow,
    Invalid(String),
}

impl ScheduleVerdict {
    pub fn is_valid(&self) -> bool {
        !matches!(self, ScheduleVerdict::Invalid(_))
    }
}

impl fmt::Display for ScheduleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleVerdict::ValidEFast => write!(f, "valid-E-fast"),
            ScheduleVerdict::ValidESlow => write!(f, "valid-E-slow"),
            ScheduleVerdict::Invalid(reason) => write!(f, "invalid: {reason}"),
        }
    }
}

/// Asymptotic class `t^-exponent · (ln t)^-log_power`.
#[derive(Debug, Clone, Copy)]
struct Decay {
    exponent: f64,
    log_power: f64,
}

enum Class {
    Decay(Decay),
    Linear,
    Zero,
}

fn classify(s: &ScheduleSpec) -> Class {
    match *s {
        ScheduleSpec::PowerLaw { p, .. } => Class::Decay(Decay {
            exponent: p,
            log_power: 0.0,
        }),
        ScheduleSpec::LogDamped { .. } => Class::Decay(Decay {
            exponent: 1.0,
            log_power: 1.0,
        }),
        ScheduleSpec::LinearDecay { .. } => Class::Linear,
        ScheduleSpec::Constant { value } if value > 0.0 => Class::Decay(Decay {
            exponent: 0.0,
            log_power: 0.0,
        }),
        ScheduleSpec::Constant { .. } => Class::Zero,
    }
}

fn check_single(label: &str, s: &ScheduleSpec) -> std::result::Result<Decay, String> {
    let d = match classify(s) {
        Class::Decay(d) => d,
        Class::Linear => {
            return Err(format!(
                "{label} = {s} settles at a positive floor, so its squares are not summable"
            ))
        }
        Class::Zero => return Err(format!("{label} = {s} is not strictly positive")),
    };
    let divergent = d.exponent < 1.0 || (d.exponent == 1.0 && d.log_power <= 1.0);
    if !divergent {
        return Err(format!("{label} = {s} has a finite sum"));
    }
    let square_summable = 2.0 * d.exponent > 1.0 || (2.0 * d.exponent == 1.0 && 2.0 * d.log_power > 1.0);
    if !square_summable {
        return Err(format!("{label} = {s} is not square-summable"));
    }
    Ok(d)
}

pub fn validate_schedule_pair(a: &ScheduleSpec, b: &ScheduleSpec) -> ScheduleVerdict {
    let da = match check_single("a", a) {
        Ok(d) => d,
        Err(reason) => return ScheduleVerdict::Invalid(reason),
    };
    let db = match check_single("b", b) {
        Ok(d) => d,
        Err(reason) => return ScheduleVerdict::Invalid(reason),
    };
    // a/b ~ t^(p_b - p_a) (ln t)^(l_b - l_a)
    let key_a = (da.exponent, da.log_power);
    let key_b = (db.exponent, db.log_power);
    match key_a.partial_cmp(&key_b) {
        Some(std::cmp::Ordering::Less) => ScheduleVerdict::ValidEFast,
        Some(std::cmp::Ordering::Greater) => ScheduleVerdict::ValidESlow,
        _ => ScheduleVerdict::Invalid(format!(
            "a = {a} and b = {b} decay at the same rate, so a/b tends to a constant"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> ScheduleSpec {
        s.parse().unwrap()
    }

    #[test]
    fn power_law_values() {
        let s = ScheduleSpec::power_law(1.0, 1.0).unwrap();
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(9) - 0.1).abs() < 1e-15);
        let s = ScheduleSpec::power_law(2.5, 0.5).unwrap();
        assert_eq!(s.value(0), 2.5);
        assert!((s.value(3) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn log_damped_values() {
        let s = ScheduleSpec::log_damped(1.0).unwrap();
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(1) - 1.0 / (1.0 + 3f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn linear_decay_steps_per_epoch() {
        let s = ScheduleSpec::linear_decay(1.0, 0.1, 4).unwrap().with_iters_per_epoch(10);
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(9), 1.0);
        assert!((s.value(10) - 0.7).abs() < 1e-12);
        assert!((s.value(30) - 0.1).abs() < 1e-12);
        assert!((s.value(1000) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn schedules_are_positive_and_non_increasing() {
        for s in [
            p("power:0.3:0.6667"),
            p("power:2:1"),
            p("log:1"),
            p("linear:0.001:0.0001:300").with_iters_per_epoch(7),
        ] {
            let mut prev = f64::INFINITY;
            for t in 0..5000 {
                let v = s.value(t);
                assert!(v > 0.0 && v <= prev, "{s} at {t}");
                prev = v;
            }
        }
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(ScheduleSpec::power_law(0.0, 1.0).is_err());
        assert!(ScheduleSpec::power_law(1.0, 1.5).is_err());
        assert!(ScheduleSpec::power_law(1.0, 0.0).is_err());
        assert!(ScheduleSpec::log_damped(-1.0).is_err());
        assert!(ScheduleSpec::linear_decay(0.1, 1.0, 10).is_err());
        assert!(ScheduleSpec::constant(-0.5).is_err());
        assert!("power:1".parse::<ScheduleSpec>().is_err());
        assert!("cosine:1".parse::<ScheduleSpec>().is_err());
        assert!("linear:1:0.1:x".parse::<ScheduleSpec>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["power:1:0.6666666666666666", "log:0.5", "linear:0.001:0.0001:300", "const:0"] {
            assert_eq!(p(s).to_string(), s);
        }
    }

    #[test]
    fn verdicts_for_standard_pairs() {
        assert_eq!(
            validate_schedule_pair(&p("power:1:0.6666666666666666"), &p("power:1:1")),
            ScheduleVerdict::ValidEFast
        );
        assert_eq!(
            validate_schedule_pair(&p("power:1:1"), &p("log:1")),
            ScheduleVerdict::ValidEFast
        );
        assert_eq!(
            validate_schedule_pair(&p("log:1"), &p("power:1:1")),
            ScheduleVerdict::ValidESlow
        );
        assert_eq!(
            validate_schedule_pair(&p("power:1:1"), &p("power:1:0.75")),
            ScheduleVerdict::ValidESlow
        );
        assert!(!validate_schedule_pair(&p("power:1:1"), &p("power:3:1")).is_valid());
        assert!(!validate_schedule_pair(&p("power:1:0.5"), &p("power:1:1")).is_valid());
        assert!(!validate_schedule_pair(&p("linear:1:0.05:300"), &p("power:1:1")).is_valid());
        assert!(!validate_schedule_pair(&p("power:1:0.7"), &p("const:0.01")).is_valid());
        assert!(!validate_schedule_pair(&p("power:1:0.7"), &p("const:0")).is_valid());
        assert!(!validate_schedule_pair(&p("log:1"), &p("log:2")).is_valid());
    }
}
