//! Krippendorff's alpha for nominal data with missing values.

use std::collections::BTreeMap;

use serde::Serialize;

use super::ReliabilityError;

/// Units × observers matrix of nominal values; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ReliabilityData {
    units: Vec<String>,
    observers: Vec<String>,
    values: Vec<Vec<Option<String>>>,
}

impl ReliabilityData {
    pub fn new(units: Vec<String>, observers: Vec<String>) -> Self {
        let values = vec![vec![None; observers.len()]; units.len()];
        ReliabilityData {
            units,
            observers,
            values,
        }
    }

    /// Builds the matrix from a dense grid, naming units and observers by index.
    pub fn from_matrix<S: AsRef<str>>(rows: &[Vec<Option<S>>]) -> Self {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut d = ReliabilityData::new(
            (0..rows.len()).map(|u| format!("u{u}")).collect(),
            (0..width).map(|o| format!("o{o}")).collect(),
        );
        for (u, row) in rows.iter().enumerate() {
            for (o, v) in row.iter().enumerate() {
                d.values[u][o] = v.as_ref().map(|s| s.as_ref().to_string());
            }
        }
        d
    }

    /// Builds the matrix from `(unit, observer, value)` triples, keeping first
    /// appearance order for units and observers.
    pub fn from_triples<I, U, O, V>(triples: I) -> Result<Self, ReliabilityError>
    where
        I: IntoIterator<Item = (U, O, V)>,
        U: Into<String>,
        O: Into<String>,
        V: Into<String>,
    {
        let mut units: Vec<String> = Vec::new();
        let mut observers: Vec<String> = Vec::new();
        let mut unit_ix: BTreeMap<String, usize> = BTreeMap::new();
        let mut obs_ix: BTreeMap<String, usize> = BTreeMap::new();
        let mut cells: BTreeMap<(usize, usize), String> = BTreeMap::new();
        for (u, o, v) in triples {
            let (u, o, v) = (u.into(), o.into(), v.into());
            let ui = *unit_ix.entry(u.clone()).or_insert_with(|| {
                units.push(u.clone());
                units.len() - 1
            });
            let oi = *obs_ix.entry(o.clone()).or_insert_with(|| {
                observers.push(o.clone());
                observers.len() - 1
            });
            if let Some(prev) = cells.insert((ui, oi), v.clone()) {
                if prev != v {
                    return Err(ReliabilityError::ConflictingValue {
                        unit: u,
                        observer: o,
                    });
                }
            }
        }
        let mut d = ReliabilityData::new(units, observers);
        for ((u, o), v) in cells {
            d.values[u][o] = Some(v);
        }
        Ok(d)
    }

    /// Reads the long CSV form with header `unit,observer,value`.
    pub fn from_csv(text: &str) -> Result<Self, ReliabilityError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["unit", "observer", "value"] {
            return Err(ReliabilityError::Format {
                line: 1,
                message: format!(
                    "expected header unit,observer,value, found {}",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut triples = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| rec.get(i).unwrap_or_default().to_string();
            let (u, o, v) = (field(0), field(1), field(2));
            if u.is_empty() || o.is_empty() {
                return Err(ReliabilityError::Format {
                    line,
                    message: "unit and observer must be non-empty".into(),
                });
            }
            // An empty value is an explicit missing entry.
            if !v.is_empty() {
                triples.push((u, o, v));
            }
        }
        Self::from_triples(triples)
    }

    pub fn set(&mut self, unit: usize, observer: usize, value: Option<String>) {
        self.values[unit][observer] = value;
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn observers(&self) -> &[String] {
        &self.observers
    }

    pub fn value(&self, unit: usize, observer: usize) -> Option<&str> {
        self.values[unit][observer].as_deref()
    }

    pub fn rows(&self) -> &[Vec<Option<String>>] {
        &self.values
    }

    /// Number of units holding at least two values.
    pub fn pairable_units(&self) -> usize {
        self.values
            .iter()
            .filter(|row| row.iter().flatten().count() >= 2)
            .count()
    }
}

fn csv_err(e: csv::Error) -> ReliabilityError {
    ReliabilityError::Format {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Within-unit value coincidences, weighted by `1 / (m_u - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceMatrix {
    pub labels: Vec<String>,
    /// `counts[c][k]`, symmetric.
    pub counts: Vec<Vec<f64>>,
    pub marginals: Vec<f64>,
    pub total: f64,
}

impl CoincidenceMatrix {
    pub fn get(&self, c: &str, k: &str) -> f64 {
        let ix = |l: &str| self.labels.iter().position(|x| x == l);
        match (ix(c), ix(k)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0.0,
        }
    }
}

pub fn coincidence_matrix(d: &ReliabilityData) -> Result<CoincidenceMatrix, ReliabilityError> {
    let labels: Vec<String> = {
        let mut seen: Vec<String> = d.values.iter().flatten().flatten().cloned().collect();
        seen.sort();
        seen.dedup();
        seen
    };
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let k = labels.len();
    let mut counts = vec![vec![0.0; k]; k];
    let mut pairable = 0usize;
    let mut per_unit = vec![0u64; k];

    for row in &d.values {
        per_unit.iter_mut().for_each(|c| *c = 0);
        let mut m = 0u64;
        for v in row.iter().flatten() {
            per_unit[index[v.as_str()]] += 1;
            m += 1;
        }
        if m < 2 {
            continue;
        }
        pairable += 1;
        let w = 1.0 / (m - 1) as f64;
        for c in 0..k {
            let nc = per_unit[c];
            if nc == 0 {
                continue;
            }
            for kk in 0..k {
                let nk = per_unit[kk];
                let pairs = if c == kk { nc * (nc - 1) } else { nc * nk };
                if pairs > 0 {
                    counts[c][kk] += pairs as f64 * w;
                }
            }
        }
    }
    if pairable == 0 {
        return Err(ReliabilityError::InsufficientData);
    }
    let marginals: Vec<f64> = counts.iter().map(|row| row.iter().sum()).collect();
    let total = marginals.iter().sum();
    Ok(CoincidenceMatrix {
        labels,
        counts,
        marginals,
        total,
    })
}

/// Nominal alpha, `1 - D_o / D_e`.
///
/// Returns [`ReliabilityError::PerfectHomogeneity`] when every pairable value
/// is the same label, where the coefficient is undefined.
pub fn krippendorff_alpha_nominal(d: &ReliabilityData) -> Result<f64, ReliabilityError> {
    let cm = coincidence_matrix(d)?;
    alpha_from_coincidences(&cm)
}

pub fn alpha_from_coincidences(cm: &CoincidenceMatrix) -> Result<f64, ReliabilityError> {
    let k = cm.labels.len();
    let n = cm.total;
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for kk in 0..k {
            if c != kk {
                observed += cm.counts[c][kk];
                expected += cm.marginals[c] * cm.marginals[kk];
            }
        }
    }
    if expected == 0.0 {
        return Err(ReliabilityError::PerfectHomogeneity);
    }
    let expected = expected / (n - 1.0);
    Ok(1.0 - observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[Option<&str>]]) -> ReliabilityData {
        ReliabilityData::from_matrix(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn disagreeing_pair_coincidences() {
        let cm = coincidence_matrix(&m(&[&[Some("a"), Some("b")]])).unwrap();
        assert_eq!(cm.get("a", "b"), 1.0);
        assert_eq!(cm.get("b", "a"), 1.0);
        assert_eq!(cm.get("a", "a"), 0.0);
        assert_eq!(cm.get("b", "b"), 0.0);
        assert_eq!(cm.total, 2.0);
    }

    #[test]
    fn agreeing_pair_coincidences() {
        let cm = coincidence_matrix(&m(&[&[Some("a"), Some("a")]])).unwrap();
        assert_eq!(cm.get("a", "a"), 2.0);
        assert_eq!(cm.total, 2.0);
    }

    #[test]
    fn single_value_units_contribute_nothing() {
        let with = m(&[&[Some("a"), Some("b")], &[Some("c"), None]]);
        let cm = coincidence_matrix(&with).unwrap();
        assert_eq!(cm.total, 2.0);
        assert_eq!(cm.get("c", "c"), 0.0);
        assert!(matches!(
            coincidence_matrix(&m(&[&[Some("a"), None]])),
            Err(ReliabilityError::InsufficientData)
        ));
    }

    #[test]
    fn anchors() {
        let perfect = m(&[&[Some("a"), Some("a")], &[Some("b"), Some("b"), Some("b")]]);
        assert_eq!(krippendorff_alpha_nominal(&perfect).unwrap(), 1.0);
        let split = m(&[&[Some("a"), Some("b")]]);
        assert_eq!(krippendorff_alpha_nominal(&split).unwrap(), 0.0);
        let flat = m(&[&[Some("a"), Some("a")], &[Some("a"), Some("a")]]);
        assert!(matches!(
            krippendorff_alpha_nominal(&flat),
            Err(ReliabilityError::PerfectHomogeneity)
        ));
    }

    #[test]
    fn textbook_example() {
        // Four observers, twelve units, nominal values 1..5 with gaps; the
        // published nominal coefficient for this matrix is 0.743.
        let rows: Vec<Vec<Option<&str>>> = vec![
            vec![Some("1"), Some("1"), None, Some("1")],
            vec![Some("2"), Some("2"), Some("3"), Some("2")],
            vec![Some("3"), Some("3"), Some("3"), Some("3")],
            vec![Some("3"), Some("3"), Some("3"), Some("3")],
            vec![Some("2"), Some("2"), Some("2"), Some("2")],
            vec![Some("1"), Some("2"), Some("3"), Some("4")],
            vec![Some("4"), Some("4"), Some("4"), Some("4")],
            vec![Some("1"), Some("1"), Some("2"), Some("1")],
            vec![Some("2"), Some("2"), Some("2"), Some("2")],
            vec![None, Some("5"), Some("5"), Some("5")],
            vec![None, None, Some("1"), Some("1")],
            vec![None, None, Some("3"), None],
        ];
        let a = krippendorff_alpha_nominal(&ReliabilityData::from_matrix(&rows)).unwrap();
        assert!((a - 0.743).abs() < 5e-4, "{a}");
    }

    #[test]
    fn csv_long_form() {
        let d = ReliabilityData::from_csv(
            "unit,observer,value\nimg-1,a,1-1\nimg-1,b,1-1\nimg-2,a,2\nimg-2,b,\n",
        )
        .unwrap();
        assert_eq!(d.units(), ["img-1", "img-2"]);
        assert_eq!(d.observers(), ["a", "b"]);
        assert_eq!(d.value(1, 1), None);
        assert_eq!(d.pairable_units(), 1);

        assert!(matches!(
            ReliabilityData::from_csv("u,o,v\n"),
            Err(ReliabilityError::Format { line: 1, .. })
        ));
        assert!(matches!(
            ReliabilityData::from_csv("unit,observer,value\nx,a,1\nx,a,2\n"),
            Err(ReliabilityError::ConflictingValue { .. })
        ));
    }
}
