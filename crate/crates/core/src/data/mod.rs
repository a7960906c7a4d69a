//! Dataset ingestion, splitting and preprocessing.

mod synthetic;

pub use synthetic::{
    classification_fixture, regression_fixture, synth_oracle_solve, QuadraticLoss, SyntheticQuadratic,
};

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Activation, FrozenFeatureMap, Group, GroupedDataset};

/// How to turn a CSV file into a [`GroupedDataset`].
///
/// Parsed from flat `key = value` text:
///
/// ```text
/// target = income
/// target_positive = >50K, >50K.
/// group = race
/// group_positive = Black
/// group_values = White, Black
/// numeric = age, hours-per-week
/// categorical = workclass, education
/// drop_missing = true
/// missing = ?
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSchema {
    pub target_column: String,
    /// Target labels mapped to 1 (all others to 0). Empty means numeric targets.
    pub target_positive: Vec<String>,
    pub group_column: String,
    /// Group value mapped to `A = 1`.
    pub group_positive_value: String,
    /// Group values kept; empty keeps every row.
    pub group_values: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub numeric_columns: Vec<String>,
    pub drop_missing: bool,
    /// Cell contents treated as missing, besides the empty string.
    pub missing_tokens: Vec<String>,
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl DatasetSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = DatasetSchema {
            drop_missing: true,
            missing_tokens: vec!["?".into()],
            ..Default::default()
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected key = value", lineno + 1)))?;
            let value = value.trim();
            match key.trim() {
                "target" => schema.target_column = value.into(),
                "target_positive" => schema.target_positive = split_list(value),
                "group" => schema.group_column = value.into(),
                "group_positive" => schema.group_positive_value = value.into(),
                "group_values" => schema.group_values = split_list(value),
                "categorical" => schema.categorical_columns = split_list(value),
                "numeric" => schema.numeric_columns = split_list(value),
                "drop_missing" => {
                    schema.drop_missing = value
                        .parse()
                        .map_err(|_| Error::Schema(format!("line {}: drop_missing must be true/false", lineno + 1)))?
                }
                "missing" => schema.missing_tokens = split_list(value),
                other => return Err(Error::Schema(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_column.is_empty() || self.group_column.is_empty() {
            return Err(Error::Schema("target and group columns are required".into()));
        }
        if self.group_positive_value.is_empty() {
            return Err(Error::Schema("group_positive is required".into()));
        }
        let features: Vec<&String> = self.numeric_columns.iter().chain(&self.categorical_columns).collect();
        if features.is_empty() {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        for f in &features {
            if **f == self.target_column || **f == self.group_column {
                return Err(Error::Schema(format!(
                    "column '{f}' is both a feature and target/group"
                )));
            }
        }
        if self.target_column == self.group_column {
            return Err(Error::Schema("target and group columns must differ".into()));
        }
        let unique: BTreeSet<&String> = features.iter().copied().collect();
        if unique.len() != features.len() {
            return Err(Error::Schema("feature columns listed twice".into()));
        }
        Ok(())
    }

    fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing_tokens.iter().any(|t| t == cell)
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<GroupedDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Parses header-first CSV. Numeric features come first in schema order, followed by
/// one-hot blocks (levels sorted) for each categorical column.
pub fn read_csv<R: Read>(reader: R, schema: &DatasetSchema) -> Result<GroupedDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let target_idx = column(&schema.target_column)?;
    let group_idx = column(&schema.group_column)?;
    let numeric_idx: Vec<usize> = schema
        .numeric_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;
    let categorical_idx: Vec<usize> = schema
        .categorical_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;

    let mut numeric_rows: Vec<Vec<f64>> = Vec::new();
    let mut categorical_rows: Vec<Vec<String>> = Vec::new();
    let mut targets = Vec::new();
    let mut groups = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // line number in the file, header is line 1
        let row = i + 2;
        let cell_error = |idx: usize, message: String| Error::Cell {
            row,
            column: headers.get(idx).unwrap_or("?").to_string(),
            message,
        };
        let get = |idx: usize| {
            record
                .get(idx)
                .ok_or_else(|| cell_error(idx, "row is too short".into()))
        };

        let used = std::iter::once(target_idx)
            .chain(std::iter::once(group_idx))
            .chain(numeric_idx.iter().copied())
            .chain(categorical_idx.iter().copied());
        let mut missing = None;
        for idx in used {
            if schema.is_missing(get(idx)?) {
                missing = Some(idx);
                break;
            }
        }
        if let Some(idx) = missing {
            if schema.drop_missing {
                continue;
            }
            return Err(cell_error(idx, "missing value".into()));
        }

        let group_cell = get(group_idx)?;
        if !schema.group_values.is_empty() && !schema.group_values.iter().any(|v| v == group_cell) {
            continue;
        }
        let group = if group_cell == schema.group_positive_value {
            Group::One
        } else {
            Group::Zero
        };

        let target_cell = get(target_idx)?;
        let target = if schema.target_positive.is_empty() {
            target_cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| cell_error(target_idx, format!("cannot parse '{target_cell}' as a number")))?
        } else if schema.target_positive.iter().any(|v| v == target_cell) {
            1.0
        } else {
            0.0
        };

        let mut numeric = Vec::with_capacity(numeric_idx.len());
        for &idx in &numeric_idx {
            let cell = get(idx)?;
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| cell_error(idx, format!("cannot parse '{cell}' as a number")))?;
            numeric.push(v);
        }
        let mut categorical = Vec::with_capacity(categorical_idx.len());
        for &idx in &categorical_idx {
            categorical.push(get(idx)?.to_string());
        }

        numeric_rows.push(numeric);
        categorical_rows.push(categorical);
        targets.push(target);
        groups.push(group);
    }

    let levels: Vec<Vec<String>> = (0..categorical_idx.len())
        .map(|k| {
            categorical_rows
                .iter()
                .map(|r| r[k].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();
    let offsets: Vec<HashMap<&str, usize>> = levels
        .iter()
        .map(|ls| ls.iter().enumerate().map(|(j, l)| (l.as_str(), j)).collect())
        .collect();
    let n_numeric = numeric_idx.len();
    let d = n_numeric + levels.iter().map(Vec::len).sum::<usize>();
    let n = targets.len();

    let mut features = DMatrix::zeros(n, d);
    for i in 0..n {
        for (j, v) in numeric_rows[i].iter().enumerate() {
            features[(i, j)] = *v;
        }
        let mut base = n_numeric;
        for (k, value) in categorical_rows[i].iter().enumerate() {
            features[(i, base + offsets[k][value.as_str()])] = 1.0;
            base += levels[k].len();
        }
    }

    let mut names: Vec<String> = schema.numeric_columns.clone();
    for (k, col) in schema.categorical_columns.iter().enumerate() {
        names.extend(levels[k].iter().map(|l| format!("{col}={l}")));
    }

    let mut data = GroupedDataset::new(features, DVector::from_vec(targets), groups)?;
    data.feature_names = names;
    data.numeric_columns = (0..n_numeric).collect();
    Ok(data)
}

/// Shuffled split with `round(ratio * n)` training rows.
pub fn train_test_split(data: &GroupedDataset, ratio: f64, seed: u64) -> Result<(GroupedDataset, GroupedDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = data.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidInput(format!(
            "split of {n} rows at ratio {ratio} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, test_idx) = order.split_at(n_train);
    let train = data.select_rows(train_idx)?;
    let test = data.select_rows(test_idx)?;
    Ok((train, test))
}

/// Column means and standard deviations of the numeric features of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    columns: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &GroupedDataset) -> Self {
        let x = train.features();
        let n = x.nrows() as f64;
        let columns = train.numeric_columns.clone();
        let mut means = Vec::with_capacity(columns.len());
        let mut scales = Vec::with_capacity(columns.len());
        for &j in &columns {
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { columns, means, scales }
    }

    pub fn apply(&self, data: &GroupedDataset) -> Result<GroupedDataset> {
        let mut x = data.features().clone();
        for (k, &j) in self.columns.iter().enumerate() {
            if j >= x.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: j + 1,
                    found: x.ncols(),
                });
            }
            let (m, s) = (self.means[k], self.scales[k]);
            x.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        let mut out = data.with_features(x, data.feature_names.clone())?;
        out.numeric_columns = data.numeric_columns.clone();
        Ok(out)
    }
}

/// Splits, then standardizes both sides with training statistics.
pub fn split_and_standardize(data: &GroupedDataset, ratio: f64, seed: u64) -> Result<(GroupedDataset, GroupedDataset)> {
    let (train, test) = train_test_split(data, ratio, seed)?;
    let scaler = Standardizer::fit(&train);
    Ok((scaler.apply(&train)?, scaler.apply(&test)?))
}

/// Writes a dataset as CSV with columns `x0..x{d-1}, group, target`.
pub fn write_csv<W: std::io::Write>(data: &GroupedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = data.feature_names.clone();
    header.push("group".into());
    header.push("target".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = (0..data.n_features())
            .map(|j| format!("{}", data.features()[(i, j)]))
            .collect();
        rec.push(data.groups()[i].index().to_string());
        rec.push(format!("{}", data.targets()[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Schema matching the layout produced by [`write_csv`].
pub fn written_csv_schema(data: &GroupedDataset) -> String {
    format!(
        "target = target\ngroup = group\ngroup_positive = 1\nnumeric = {}\n",
        data.feature_names.join(", ")
    )
}

/// Reads a frozen feature map: a first line `activation = sigmoid|identity`, then one
/// comma-separated row of input weights per hidden unit.
pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FrozenFeatureMap> {
    parse_feature_map(&std::fs::read_to_string(path)?)
}

pub fn parse_feature_map(text: &str) -> Result<FrozenFeatureMap> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines
        .next()
        .ok_or_else(|| Error::Schema("feature map file is empty".into()))?;
    let activation = match first.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
        Some(("activation", "sigmoid")) => Activation::Sigmoid,
        Some(("activation", "identity")) => Activation::Identity,
        _ => {
            return Err(Error::Schema(format!(
                "feature map must start with 'activation = sigmoid|identity', got '{first}'"
            )))
        }
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| Error::Cell {
                    row: k + 2,
                    column: j.to_string(),
                    message: format!("cannot parse '{}' as a number", cell.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema("feature map has no hidden units".into()));
    }
    let weights = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    FrozenFeatureMap::new(weights, activation)
}

pub fn format_feature_map(map: &FrozenFeatureMap) -> String {
    let act = match map.activation() {
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    };
    let mut out = format!("activation = {act}\n");
    for row in map.weights().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "\
color,size,grp,label
red,1.0,a,1
blue,2.0,b,0
red,3.0,a,1
";

    fn toy_schema() -> DatasetSchema {
        DatasetSchema::parse("target = label\ngroup = grp\ngroup_positive = b\ncategorical = color\nnumeric = size\n")
            .unwrap()
    }

    #[test]
    fn one_hot_two_levels() {
        let data = read_csv(TOY.as_bytes(), &toy_schema()).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.n_features(), 3);
        assert_eq!(data.feature_names, ["size", "color=blue", "color=red"]);
        assert_eq!(
            data.features().row(0).iter().copied().collect::<Vec<_>>(),
            [1.0, 0.0, 1.0]
        );
        assert_eq!(
            data.features().row(1).iter().copied().collect::<Vec<_>>(),
            [2.0, 1.0, 0.0]
        );
        assert_eq!(data.groups(), [Group::Zero, Group::One, Group::Zero]);
        assert_eq!(data.numeric_columns, [0]);
    }

    #[test]
    fn missing_values_dropped_or_reported() {
        let csv = "color,size,grp,label\nred,1.0,a,1\n?,2.0,b,0\nred,,b,1\nblue,4.0,b,0\n";
        let data = read_csv(csv.as_bytes(), &toy_schema()).unwrap();
        assert_eq!(data.len(), 2);

        let mut strict = toy_schema();
        strict.drop_missing = false;
        match read_csv(csv.as_bytes(), &strict) {
            Err(Error::Cell { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "color");
            }
            other => panic!("expected cell error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_scope_groups_are_dropped() {
        let csv = "color,size,grp,label\nred,1.0,a,1\nred,1.0,c,1\nblue,2.0,b,0\n";
        let mut schema = toy_schema();
        schema.group_values = vec!["a".into(), "b".into()];
        assert_eq!(read_csv(csv.as_bytes(), &schema).unwrap().len(), 2);
    }

    #[test]
    fn unparseable_cell_has_coordinates() {
        let csv = "color,size,grp,label\nred,1.0,a,1\nblue,big,b,0\n";
        let err = read_csv(csv.as_bytes(), &toy_schema()).unwrap_err();
        assert!(
            matches!(err, Error::Cell { row: 3, ref column, .. } if column == "size"),
            "{err}"
        );
    }

    #[test]
    fn missing_column_is_schema_error() {
        let mut schema = toy_schema();
        schema.numeric_columns.push("weight".into());
        assert!(matches!(read_csv(TOY.as_bytes(), &schema), Err(Error::Schema(_))));
    }

    #[test]
    fn target_labels_map_to_binary() {
        let csv = "x,g,y\n1,0,>50K\n2,1,<=50K\n3,1,>50K.\n";
        let schema = DatasetSchema::parse(
            "target = y\ntarget_positive = >50K, >50K.\ngroup = g\ngroup_positive = 1\nnumeric = x\n",
        )
        .unwrap();
        let data = read_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(data.targets().as_slice(), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn schema_rejects_overlap_and_unknown_keys() {
        assert!(DatasetSchema::parse("target = y\ngroup = g\ngroup_positive = 1\nnumeric = y\n").is_err());
        assert!(DatasetSchema::parse("target = y\ngroup = g\ngroup_positive = 1\nnumeric = x\ncolour = 1\n").is_err());
        assert!(DatasetSchema::parse("target = y\ngroup = g\nnumeric = x\n").is_err());
    }

    #[test]
    fn loading_is_deterministic() {
        let a = read_csv(TOY.as_bytes(), &toy_schema()).unwrap();
        let b = read_csv(TOY.as_bytes(), &toy_schema()).unwrap();
        assert_eq!(a, b);
    }

    fn twenty_rows() -> GroupedDataset {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let groups: Vec<Group> = (0..20)
            .map(|i| if i % 2 == 0 { Group::Zero } else { Group::One })
            .collect();
        GroupedDataset::from_rows(&rows, &targets, &groups).unwrap()
    }

    #[test]
    fn split_sizes_and_reproducibility() {
        let data = twenty_rows();
        let (train, test) = train_test_split(&data, 0.7, 42).unwrap();
        assert_eq!((train.len(), test.len()), (14, 6));
        let mut seen: Vec<f64> = train.targets().iter().chain(test.targets().iter()).copied().collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..20).map(|i| i as f64).collect::<Vec<_>>());
        let (again, _) = train_test_split(&data, 0.7, 42).unwrap();
        assert_eq!(train, again);
        let (other, _) = train_test_split(&data, 0.7, 43).unwrap();
        assert_ne!(train.targets(), other.targets());
    }

    #[test]
    fn degenerate_split_is_rejected() {
        assert!(train_test_split(&twenty_rows(), 0.0, 0).is_err());
        assert!(train_test_split(&twenty_rows(), 0.99, 0).is_err());
        // a group absent from one side
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let groups = [Group::Zero, Group::Zero, Group::Zero, Group::One];
        let data = GroupedDataset::from_rows(&rows, &[0.0; 4], &groups).unwrap();
        assert!(train_test_split(&data, 0.5, 0).is_err());
    }

    #[test]
    fn feature_map_round_trip() {
        let map = FrozenFeatureMap::random(4, 3, Activation::Sigmoid, 5);
        let back = parse_feature_map(&format_feature_map(&map)).unwrap();
        assert_eq!(map, back);
        assert!(parse_feature_map("activation = relu\n1,2\n").is_err());
        assert!(parse_feature_map("activation = identity\n1,2\n3\n").is_err());
    }

    #[test]
    fn written_csv_reloads() {
        let data = twenty_rows();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let schema = DatasetSchema::parse(&written_csv_schema(&data)).unwrap();
        let back = read_csv(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.features(), data.features());
        assert_eq!(back.targets(), data.targets());
        assert_eq!(back.groups(), data.groups());
    }

    #[test]
    fn standardizer_uses_train_statistics() {
        let data = read_csv(TOY.as_bytes(), &toy_schema()).unwrap();
        let scaler = Standardizer::fit(&data);
        let z = scaler.apply(&data).unwrap();
        let col = z.features().column(0);
        assert!(col.sum().abs() < 1e-12);
        // one-hot columns untouched
        assert_eq!(z.features().column(1), data.features().column(1));
    }
}
