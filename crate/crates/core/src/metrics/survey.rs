//! Rater survey aggregation.
//!
//! Each response records one rater's verdict on one method for one
//! scenario: an optional rank in {1, 2, 3} and an "achieved" check box.
//! Ranks are worth 3, 2 and 1 points; unranked methods score 0.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyResponse {
    pub rater: String,
    pub scenario: String,
    pub method: String,
    pub rank: Option<u8>,
    pub achieved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyStats {
    pub scenario: String,
    pub method: String,
    pub raters: usize,
    pub win: f64,
    pub top3: f64,
    pub avg: f64,
    pub achieved: f64,
}

fn points(rank: Option<u8>) -> f64 {
    match rank {
        Some(r) => f64::from(4 - r),
        None => 0.0,
    }
}

/// Stats per (scenario, method), sorted by scenario then method.
pub fn survey_aggregate(responses: &[SurveyResponse]) -> Result<Vec<SurveyStats>> {
    let mut seen = HashSet::new();
    let mut ranks = HashSet::new();
    let mut groups: BTreeMap<(&str, &str), Vec<&SurveyResponse>> = BTreeMap::new();
    for r in responses {
        if let Some(k) = r.rank {
            if !(1..=3).contains(&k) {
                return Err(Error::Survey(format!(
                    "rater `{}` gave rank {k} in `{}`; ranks are 1, 2 or 3",
                    r.rater, r.scenario
                )));
            }
            if !ranks.insert((&r.rater, &r.scenario, k)) {
                return Err(Error::Survey(format!(
                    "rater `{}` assigned rank {k} twice in `{}`",
                    r.rater, r.scenario
                )));
            }
        }
        if !seen.insert((&r.rater, &r.scenario, &r.method)) {
            return Err(Error::Survey(format!(
                "rater `{}` answered `{}` twice for `{}`",
                r.rater, r.scenario, r.method
            )));
        }
        groups.entry((&r.scenario, &r.method)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((scenario, method), rs)| {
            let n = rs.len() as f64;
            let frac = |f: &dyn Fn(&SurveyResponse) -> bool| rs.iter().filter(|r| f(r)).count() as f64 / n;
            SurveyStats {
                scenario: scenario.to_string(),
                method: method.to_string(),
                raters: rs.len(),
                win: frac(&|r| r.rank == Some(1)),
                top3: frac(&|r| r.rank.is_some()),
                avg: rs.iter().map(|r| points(r.rank)).sum::<f64>() / n,
                achieved: frac(&|r| r.achieved),
            }
        })
        .collect())
}

/// Parses `rater,scenario,method,rank,achieved` CSV with a header row.
/// `rank` may be empty or `none`; `achieved` is `0`/`1` or `true`/`false`.
pub fn parse_survey_csv(text: &str) -> Result<Vec<SurveyResponse>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 || line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::Survey(format!("line {}: expected 5 columns, got {}", i + 1, cols.len())));
        }
        let rank = match cols[3] {
            "" | "none" => None,
            r => Some(
                r.parse::<u8>()
                    .map_err(|_| Error::Survey(format!("line {}: bad rank `{r}`", i + 1)))?,
            ),
        };
        let achieved = match cols[4] {
            "1" | "true" => true,
            "0" | "false" => false,
            a => return Err(Error::Survey(format!("line {}: bad achieved flag `{a}`", i + 1))),
        };
        out.push(SurveyResponse {
            rater: cols[0].into(),
            scenario: cols[1].into(),
            method: cols[2].into(),
            rank,
            achieved,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(rater: usize, method: &str, rank: Option<u8>, achieved: bool) -> SurveyResponse {
        SurveyResponse {
            rater: format!("r{rater}"),
            scenario: "Man pets dog".into(),
            method: method.into(),
            rank,
            achieved,
        }
    }

    #[test]
    fn unanimous_first_place() {
        let rs: Vec<_> = (0..21).map(|i| resp(i, "ours", Some(1), i < 17)).collect();
        let s = &survey_aggregate(&rs).unwrap()[0];
        assert_eq!((s.win, s.top3, s.avg), (1.0, 1.0, 3.0));
        assert!((s.achieved - 17.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn never_ranked() {
        let rs: Vec<_> = (0..5).map(|i| resp(i, "m", None, i == 0)).collect();
        let s = &survey_aggregate(&rs).unwrap()[0];
        assert_eq!((s.win, s.top3, s.avg), (0.0, 0.0, 0.0));
        assert!((s.achieved - 0.2).abs() < 1e-12);
    }

    #[test]
    fn duplicates_are_rejected() {
        assert!(survey_aggregate(&[resp(0, "a", Some(1), true), resp(0, "b", Some(1), true)]).is_err());
        assert!(survey_aggregate(&[resp(0, "a", Some(1), true), resp(0, "a", Some(2), true)]).is_err());
        assert!(survey_aggregate(&[resp(0, "a", Some(4), true)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "rater,scenario,method,rank,achieved\nr1,s,ours,1,1\nr1,s,base,,0\n";
        let rs = parse_survey_csv(text).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[1].rank, None);
        assert!(parse_survey_csv("h\nr1,s,ours,x,1\n").is_err());
    }
}
