//! Present values, exposures, LGD ratios and the portfolio value identity.

use std::collections::BTreeMap;
use std::path::Path;

use crate::csvio::CsvTable;
use crate::error::{Error, Result};
use crate::math::LGD_CLAMP;
use crate::portfolio::ResolvedValuation;

pub const GOV_CURVE: &str = "Gov";
const TENOR_TOL: f64 = 1e-9;

/// Discount factors `d_{t,s}` for one rating class (or the government curve).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve {
    label: String,
    points: Vec<(f64, f64)>,
}

impl DiscountCurve {
    /// Tenor 0 is implicitly 1. Factors must lie in (0, 1]; a factor that rises
    /// with tenor only produces a warning.
    pub fn new(label: &str, mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if (w[1].0 - w[0].0).abs() < TENOR_TOL {
                return Err(Error::Validation(format!(
                    "curve '{label}' repeats tenor {}",
                    w[0].0
                )));
            }
        }
        for &(tenor, df) in &points {
            if !(tenor >= 0.0 && tenor.is_finite()) {
                return Err(Error::Validation(format!("curve '{label}': bad tenor {tenor}")));
            }
            if !(df > 0.0 && df <= 1.0) {
                return Err(Error::Validation(format!(
                    "curve '{label}': discount factor {df} at tenor {tenor} outside (0,1]"
                )));
            }
            if tenor.abs() < TENOR_TOL && df != 1.0 {
                return Err(Error::Validation(format!(
                    "curve '{label}': discount factor at tenor 0 must be 1"
                )));
            }
        }
        if points.windows(2).any(|w| w[1].1 > w[0].1) {
            log::warn!("curve '{label}' has increasing discount factors (negative forward rates)");
        }
        Ok(Self {
            label: label.to_string(),
            points,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn discount(&self, tenor: f64) -> Result<f64> {
        if tenor.abs() < TENOR_TOL {
            return Ok(1.0);
        }
        self.points
            .iter()
            .find(|(t, _)| (t - tenor).abs() < TENOR_TOL)
            .map(|&(_, d)| d)
            .ok_or_else(|| Error::MissingTenor {
                curve: self.label.clone(),
                tenor,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cashflow {
    pub time: f64,
    /// Expected amount under the forward measure for `time`.
    pub amount: f64,
}

/// Expected cashflows in strictly increasing time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CashflowStream {
    flows: Vec<Cashflow>,
}

impl CashflowStream {
    pub fn new(flows: Vec<Cashflow>) -> Result<Self> {
        for f in &flows {
            if !(f.time >= 0.0 && f.time.is_finite() && f.amount.is_finite()) {
                return Err(Error::Validation(format!(
                    "invalid cashflow ({}, {})",
                    f.time, f.amount
                )));
            }
        }
        if flows.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::Validation(
                "cashflow times must be strictly increasing".into(),
            ));
        }
        Ok(Self { flows })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(time, amount)| Cashflow { time, amount })
                .collect(),
        )
    }

    pub fn flows(&self) -> &[Cashflow] {
        &self.flows
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// `Σ_s d_{t,s} · E[C_s]`.
pub fn present_value(stream: &CashflowStream, curve: &DiscountCurve) -> Result<f64> {
    stream
        .flows
        .iter()
        .map(|f| curve.discount(f.time).map(|d| d * f.amount))
        .sum()
}

/// Exposure at market and credit risk: the present value under the
/// instrument's rating curve. May be negative.
pub fn exposure(stream: &CashflowStream, rating_curve: &DiscountCurve) -> Result<f64> {
    present_value(stream, rating_curve)
}

/// `1 - PV(recovery; gov) / PV(stream; rating)`. Not bounded to [0, 1].
pub fn lgd_ratio(
    stream: &CashflowStream,
    recovery: &CashflowStream,
    rating_curve: &DiscountCurve,
    gov_curve: &DiscountCurve,
) -> Result<f64> {
    let pv = present_value(stream, rating_curve)?;
    if pv == 0.0 {
        return Err(Error::ZeroDenominator(
            "instrument present value is zero; LGD ratio undefined".into(),
        ));
    }
    Ok(1.0 - present_value(recovery, gov_curve)? / pv)
}

/// LGD ratios feed beta models, which need values strictly inside (0, 1).
pub fn clamp_lgd_for_model(ratio: f64) -> f64 {
    let clamped = ratio.clamp(LGD_CLAMP.0, LGD_CLAMP.1);
    if clamped != ratio {
        log::warn!("LGD ratio {ratio} clamped to {clamped} for the LGD model");
    }
    clamped
}

pub fn potential_loss(lgd: f64, exposure: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&lgd));
    lgd * exposure
}

/// `Σ_j (1 - X_j · LGD_j) · EXP_j`.
pub fn portfolio_value(indicators: &[bool], lgds: &[f64], exposures: &[f64]) -> Result<f64> {
    check_lengths(indicators, lgds, exposures)?;
    Ok(indicators
        .iter()
        .zip(lgds)
        .zip(exposures)
        .map(|((&x, &l), &e)| (1.0 - if x { l } else { 0.0 }) * e)
        .sum())
}

/// `Σ_j X_j · LGD_j · EXP_j`.
pub fn credit_loss(indicators: &[bool], lgds: &[f64], exposures: &[f64]) -> Result<f64> {
    check_lengths(indicators, lgds, exposures)?;
    Ok(indicators
        .iter()
        .zip(lgds)
        .zip(exposures)
        .filter(|((&x, _), _)| x)
        .map(|((_, &l), &e)| l * e)
        .sum())
}

fn check_lengths(a: &[bool], b: &[f64], c: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.len() != c.len() {
        return Err(Error::LengthMismatch(format!(
            "indicators {}, lgds {}, exposures {}",
            a.len(),
            b.len(),
            c.len()
        )));
    }
    Ok(())
}

/// Curves keyed by label: rating classes as decimal strings plus `Gov`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveSet {
    curves: BTreeMap<String, DiscountCurve>,
}

impl CurveSet {
    /// Reads `label,tenor,discount_factor`.
    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::from_path(path, &["label", "tenor", "discount_factor"])?;
        let mut raw: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for row in table.rows() {
            raw.entry(row.str("label")?)
                .or_default()
                .push((row.f64("tenor")?, row.f64("discount_factor")?));
        }
        let curves = raw
            .into_iter()
            .map(|(label, pts)| DiscountCurve::new(&label, pts).map(|c| (label, c)))
            .collect::<Result<_>>()?;
        Ok(Self { curves })
    }

    pub fn insert(&mut self, curve: DiscountCurve) {
        self.curves.insert(curve.label.clone(), curve);
    }

    pub fn get(&self, label: &str) -> Result<&DiscountCurve> {
        self.curves
            .get(label)
            .ok_or_else(|| Error::Validation(format!("no discount curve labelled '{label}'")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstrumentFlows {
    pub cashflows: CashflowStream,
    pub recovery: CashflowStream,
}

/// Cashflow streams per instrument id together with the curves that value them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CashflowBook {
    pub flows: BTreeMap<String, InstrumentFlows>,
    pub curves: CurveSet,
}

impl CashflowBook {
    /// Reads `id,time,amount,recovery_flag`.
    pub fn load(cashflow_path: &Path, curves: CurveSet) -> Result<Self> {
        let table = CsvTable::from_path(cashflow_path, &["id", "time", "amount", "recovery_flag"])?;
        let mut raw: BTreeMap<String, (Vec<Cashflow>, Vec<Cashflow>)> = BTreeMap::new();
        for row in table.rows() {
            let cf = Cashflow {
                time: row.f64("time")?,
                amount: row.f64("amount")?,
            };
            if cf.time < 0.0 {
                return Err(row.error("cashflow time must be >= 0"));
            }
            let entry = raw.entry(row.str("id")?).or_default();
            if row.bool("recovery_flag")? {
                entry.1.push(cf);
            } else {
                entry.0.push(cf);
            }
        }
        let mut flows = BTreeMap::new();
        for (id, (mut c, mut r)) in raw {
            c.sort_by(|a, b| a.time.total_cmp(&b.time));
            r.sort_by(|a, b| a.time.total_cmp(&b.time));
            let wrap = |v| {
                CashflowStream::new(v).map_err(|e| Error::Validation(format!("instrument '{id}': {e}")))
            };
            flows.insert(
                id.clone(),
                InstrumentFlows {
                    cashflows: wrap(c)?,
                    recovery: wrap(r)?,
                },
            );
        }
        Ok(Self { flows, curves })
    }

    /// Exposure (and LGD when recovery flows exist) for instrument `id` rated
    /// `rating`, or `None` if the book has no flows for it.
    pub fn resolve(&self, id: &str, rating: u32) -> Result<Option<ResolvedValuation>> {
        let Some(f) = self.flows.get(id) else {
            return Ok(None);
        };
        let curve = self.curves.get(&rating.to_string())?;
        let exposure = exposure(&f.cashflows, curve)?;
        let lgd = if f.recovery.is_empty() {
            None
        } else {
            let gov = self.curves.get(GOV_CURVE)?;
            Some(clamp_lgd_for_model(lgd_ratio(&f.cashflows, &f.recovery, curve, gov)?))
        };
        Ok(Some(ResolvedValuation { exposure, lgd }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(label: &str, pts: &[(f64, f64)]) -> DiscountCurve {
        DiscountCurve::new(label, pts.to_vec()).unwrap()
    }

    #[test]
    fn present_value_examples() {
        let c = curve("3", &[(1.0, 0.95), (2.0, 0.90)]);
        let single = CashflowStream::from_pairs(&[(1.0, 100.0)]).unwrap();
        assert!((present_value(&single, &c).unwrap() - 95.0).abs() < 1e-12);
        assert_eq!(present_value(&CashflowStream::default(), &c).unwrap(), 0.0);
        let two = CashflowStream::from_pairs(&[(1.0, 100.0), (2.0, 100.0)]).unwrap();
        assert!((present_value(&two, &c).unwrap() - 185.0).abs() < 1e-12);
        assert_eq!(exposure(&two, &c).unwrap(), present_value(&two, &c).unwrap());
        let missing = CashflowStream::from_pairs(&[(3.0, 1.0)]).unwrap();
        assert!(matches!(
            present_value(&missing, &c),
            Err(Error::MissingTenor { .. })
        ));
    }

    #[test]
    fn negative_exposure_allowed() {
        let c = curve("3", &[(1.0, 0.95), (2.0, 0.90)]);
        let s = CashflowStream::from_pairs(&[(1.0, 10.0), (2.0, -50.0)]).unwrap();
        assert!((exposure(&s, &c).unwrap() - (9.5 - 45.0)).abs() < 1e-12);
    }

    #[test]
    fn lgd_ratio_examples() {
        let rating = curve("5", &[(1.0, 1.0)]);
        let gov = curve(GOV_CURVE, &[(1.0, 1.0)]);
        let s = CashflowStream::from_pairs(&[(1.0, 100.0)]).unwrap();
        let r40 = CashflowStream::from_pairs(&[(1.0, 40.0)]).unwrap();
        assert!((lgd_ratio(&s, &r40, &rating, &gov).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(lgd_ratio(&s, &s, &rating, &gov).unwrap(), 0.0);
        assert_eq!(
            lgd_ratio(&s, &CashflowStream::default(), &rating, &gov).unwrap(),
            1.0
        );
        let zero = CashflowStream::from_pairs(&[(1.0, 0.0)]).unwrap();
        assert!(matches!(
            lgd_ratio(&zero, &r40, &rating, &gov),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn potential_loss_and_portfolio_value() {
        assert!((potential_loss(0.45, 200.0) - 90.0).abs() < 1e-12);
        assert_eq!(potential_loss(0.0, 7.0), 0.0);
        assert_eq!(potential_loss(1.0, 7.0), 7.0);
        assert_eq!(portfolio_value(&[false], &[0.6], &[100.0]).unwrap(), 100.0);
        assert!((portfolio_value(&[true], &[0.6], &[100.0]).unwrap() - 40.0).abs() < 1e-12);
        assert_eq!(portfolio_value(&[true], &[1.0], &[100.0]).unwrap(), 0.0);
        assert!(portfolio_value(&[true, false], &[1.0], &[100.0]).is_err());
    }

    #[test]
    fn curve_validation() {
        assert!(DiscountCurve::new("x", vec![(1.0, 1.2)]).is_err());
        assert!(DiscountCurve::new("x", vec![(0.0, 0.9)]).is_err());
        assert!(DiscountCurve::new("x", vec![(1.0, 0.9), (1.0, 0.8)]).is_err());
        // increasing factors only warn
        assert!(DiscountCurve::new("x", vec![(1.0, 0.9), (2.0, 0.95)]).is_ok());
        assert!(CashflowStream::from_pairs(&[(2.0, 1.0), (1.0, 1.0)]).is_err());
        assert_eq!(clamp_lgd_for_model(1.3), LGD_CLAMP.1);
    }

    #[test]
    fn ptl_consistent_with_lgd_ratio() {
        let rating = curve("5", &[(1.0, 0.97), (2.0, 0.93)]);
        let gov = curve(GOV_CURVE, &[(1.0, 0.99), (2.0, 0.97)]);
        let s = CashflowStream::from_pairs(&[(1.0, 5.0), (2.0, 105.0)]).unwrap();
        let r = CashflowStream::from_pairs(&[(2.0, 45.0)]).unwrap();
        let l = lgd_ratio(&s, &r, &rating, &gov).unwrap();
        let e = exposure(&s, &rating).unwrap();
        let expected_loss_if_default = e - present_value(&r, &gov).unwrap();
        assert!((potential_loss(l, e) - expected_loss_if_default).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pv_is_linear(
            a in proptest::collection::vec(-1e6f64..1e6, 3),
            b in proptest::collection::vec(-1e6f64..1e6, 3),
            k in -10.0f64..10.0,
        ) {
            let c = curve("1", &[(1.0, 0.99), (2.0, 0.97), (3.0, 0.94)]);
            let mk = |v: &[f64]| CashflowStream::from_pairs(&[(1.0, v[0]), (2.0, v[1]), (3.0, v[2])]).unwrap();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| k * x + y).collect();
            let lhs = present_value(&mk(&combo), &c).unwrap();
            let rhs = k * present_value(&mk(&a), &c).unwrap() + present_value(&mk(&b), &c).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()));
        }

        #[test]
        fn value_plus_loss_is_total_exposure(
            rows in proptest::collection::vec((any::<bool>(), 0.0f64..1.0, -1e6f64..1e6), 0..30)
        ) {
            let x: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let l: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let e: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let total: f64 = e.iter().sum();
            let v = portfolio_value(&x, &l, &e).unwrap();
            let loss = credit_loss(&x, &l, &e).unwrap();
            prop_assert!((v + loss - total).abs() < 1e-6);
        }
    }
}
