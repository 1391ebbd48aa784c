//! ISO/IEC 25010 Likert scoring.
//!
//! Means are carried as integer hundredths ([`Score`]) so that rounding and
//! band lookup are exact. Rounding is half-up.

use std::fmt;
use std::io::Read;

use serde::{Serialize, Serializer};

/// A mean rating in hundredths, 100..=500.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u16);

impl Score {
    pub fn from_hundredths(h: u16) -> Result<Self, SurveyError> {
        if (100..=500).contains(&h) {
            Ok(Self(h))
        } else {
            Err(SurveyError::OutOfRange(f64::from(h) / 100.0))
        }
    }

    /// Nearest two-decimal value.
    pub fn from_f64(v: f64) -> Result<Self, SurveyError> {
        if !v.is_finite() {
            return Err(SurveyError::OutOfRange(v));
        }
        let h = (v * 100.0).round();
        if !(100.0..=500.0).contains(&h) {
            return Err(SurveyError::OutOfRange(v));
        }
        Ok(Self(h as u16))
    }

    /// `numerator / denominator` rounded half-up to hundredths.
    fn from_ratio(numerator: u64, denominator: u64) -> Result<Self, SurveyError> {
        let h = (200 * numerator + denominator) / (2 * denominator);
        Self::from_hundredths(u16::try_from(h).unwrap_or(u16::MAX))
    }

    pub fn hundredths(self) -> u16 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Excellent,
    VeryGood,
    Good,
    Fair,
    Poor,
}

impl Band {
    pub const ALL: [Band; 5] = [
        Band::Excellent,
        Band::VeryGood,
        Band::Good,
        Band::Fair,
        Band::Poor,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Excellent => "Excellent",
            Self::VeryGood => "Very Good",
            Self::Good => "Good",
            Self::Fair => "Fair",
            Self::Poor => "Poor",
        }
    }

    /// Inclusive range in hundredths.
    pub fn range(self) -> (u16, u16) {
        match self {
            Self::Excellent => (420, 500),
            Self::VeryGood => (340, 419),
            Self::Good => (260, 339),
            Self::Fair => (180, 259),
            Self::Poor => (100, 179),
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Band {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

pub fn interpret_band(mean: Score) -> Band {
    let h = mean.hundredths();
    Band::ALL
        .into_iter()
        .find(|b| {
            let (lo, hi) = b.range();
            (lo..=hi).contains(&h)
        })
        .expect("bands cover 1.00..=5.00")
}

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("mean {0} is outside 1.00..=5.00")]
    OutOfRange(f64),
    #[error("characteristic {0:?} has no ratings")]
    EmptyCharacteristic(String),
    #[error("expected {expected} characteristic means, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ratings grid: one row per respondent, one column per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSheet {
    pub items: Vec<String>,
    /// Characteristic of each item, parallel to `items`.
    pub characteristics: Vec<String>,
    pub ratings: Vec<Vec<u8>>,
}

impl ResponseSheet {
    /// CSV: item ids, then the characteristic of each item, then one row
    /// per respondent.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, SurveyError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut rows = rdr.records();
        let parse_err = |line: u64, reason: &str| SurveyError::Parse {
            line,
            reason: reason.to_string(),
        };
        let items: Vec<String> = rows
            .next()
            .ok_or_else(|| parse_err(1, "missing item id row"))??
            .iter()
            .map(str::to_string)
            .collect();
        let characteristics: Vec<String> = rows
            .next()
            .ok_or_else(|| parse_err(2, "missing characteristic row"))??
            .iter()
            .map(str::to_string)
            .collect();
        if characteristics.len() != items.len() {
            return Err(parse_err(
                2,
                "characteristic row length differs from item row",
            ));
        }
        if let Some(i) = characteristics.iter().position(String::is_empty) {
            return Err(parse_err(
                2,
                &format!("item {:?} has no characteristic", items[i]),
            ));
        }
        let mut ratings = Vec::new();
        for rec in rows {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != items.len() {
                return Err(parse_err(line, "row length differs from item row"));
            }
            let row = rec
                .iter()
                .map(|cell| match cell.parse::<u8>() {
                    Ok(v @ 1..=5) => Ok(v),
                    _ => Err(parse_err(line, &format!("rating {cell:?} is not in 1..=5"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            ratings.push(row);
        }
        Ok(Self {
            items,
            characteristics,
            ratings,
        })
    }

    /// Characteristics in order of first appearance.
    pub fn characteristic_names(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for c in &self.characteristics {
            if !seen.contains(&c.as_str()) {
                seen.push(c);
            }
        }
        seen
    }
}

/// Mean of every rating given to the characteristic's items.
pub fn item_mean(sheet: &ResponseSheet, characteristic: &str) -> Result<Score, SurveyError> {
    let cols: Vec<usize> = (0..sheet.characteristics.len())
        .filter(|&i| sheet.characteristics[i] == characteristic)
        .collect();
    let (sum, count) = sheet
        .ratings
        .iter()
        .flat_map(|row| cols.iter().map(move |&c| u64::from(row[c])))
        .fold((0u64, 0u64), |(s, n), r| (s + r, n + 1));
    if count == 0 {
        return Err(SurveyError::EmptyCharacteristic(characteristic.to_string()));
    }
    Score::from_ratio(sum, count)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CharacteristicScore {
    pub characteristic: String,
    pub mean: Score,
    pub interpretation: Band,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Overall {
    pub mean: Score,
    pub interpretation: Band,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreTable {
    pub rows: Vec<CharacteristicScore>,
    pub overall: Overall,
}

pub const CHARACTERISTIC_COUNT: usize = 8;

/// Band every row and average the eight means (unweighted).
pub fn score_table(means: &[(String, Score)]) -> Result<ScoreTable, SurveyError> {
    if means.len() != CHARACTERISTIC_COUNT {
        return Err(SurveyError::WrongCount {
            expected: CHARACTERISTIC_COUNT,
            got: means.len(),
        });
    }
    let rows = means
        .iter()
        .map(|(name, mean)| CharacteristicScore {
            characteristic: name.clone(),
            mean: *mean,
            interpretation: interpret_band(*mean),
        })
        .collect();
    let total: u64 = means.iter().map(|(_, m)| u64::from(m.hundredths())).sum();
    let overall = Score::from_ratio(total, 100 * means.len() as u64)?;
    Ok(ScoreTable {
        rows,
        overall: Overall {
            mean: overall,
            interpretation: interpret_band(overall),
        },
    })
}

/// Score a whole response sheet.
pub fn score_sheet(sheet: &ResponseSheet) -> Result<ScoreTable, SurveyError> {
    let means = sheet
        .characteristic_names()
        .into_iter()
        .map(|c| Ok((c.to_string(), item_mean(sheet, c)?)))
        .collect::<Result<Vec<_>, SurveyError>>()?;
    score_table(&means)
}

impl fmt::Display for ScoreTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.characteristic.len())
            .chain(["Overall Weighted Mean".len()])
            .max()
            .unwrap_or(0);
        writeln!(
            f,
            "{:<width$}  {:>4}  Interpretation",
            "Characteristic", "Mean"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {}  {}",
                r.characteristic, r.mean, r.interpretation
            )?;
        }
        writeln!(
            f,
            "{:<width$}  {}  {}",
            "Overall Weighted Mean", self.overall.mean, self.overall.interpretation
        )
    }
}
