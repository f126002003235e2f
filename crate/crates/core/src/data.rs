//! Tabular datasets partitioned into sensitive groups.
//!
//! A [`Dataset`] holds a dense feature matrix, targets, and one integer group
//! label per row. Multiple sensitive columns are crossed into a single label,
//! keeping only the combinations that actually occur.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::exact_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

/// Features, targets and sensitive-group labels.
///
/// Invariants (checked by [`Dataset::new`]): every group label is below the
/// number of groups, every group is non-empty, and classification targets are
/// exactly `±1`.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    groups: Vec<usize>,
    group_index: Vec<Vec<usize>>,
    group_names: Vec<String>,
    task: Task,
    target_order: OnceLock<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        y: Array1<f64>,
        groups: Vec<usize>,
        n_groups: usize,
        task: Task,
    ) -> Result<Self> {
        let names = (0..n_groups).map(|a| format!("g{a}")).collect();
        Self::with_group_names(x, y, groups, names, task)
    }

    pub fn with_group_names(
        x: Array2<f64>,
        y: Array1<f64>,
        groups: Vec<usize>,
        group_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        if groups.len() != n {
            return Err(Error::Dimension { expected: n, got: groups.len() });
        }
        let n_groups = group_names.len();
        let mut group_index = vec![Vec::new(); n_groups];
        for (i, &g) in groups.iter().enumerate() {
            if g >= n_groups {
                return Err(Error::UnknownGroup { group: g, groups: n_groups });
            }
            group_index[g].push(i);
        }
        if let Some(a) = group_index.iter().position(Vec::is_empty) {
            return Err(Error::Stratification {
                group: a,
                reason: "is empty".into(),
            });
        }
        if task == Task::Classification {
            if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidTarget {
                    row: i,
                    message: format!("classification target {} is not ±1", y[i]),
                });
            }
        }
        Ok(Self {
            x,
            y,
            groups,
            group_index,
            group_names,
            task,
            target_order: OnceLock::new(),
        })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_index(&self) -> &[Vec<usize>] {
        &self.group_index
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.group_index.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.group_index.iter().map(Vec::len).collect()
    }

    /// Rows sorted by `(target, features, group)` under the IEEE total order.
    ///
    /// The order depends only on row contents, never on row positions, which
    /// keeps order-sensitive sweeps reproducible under any permutation.
    pub fn target_order(&self) -> &[usize] {
        self.target_order.get_or_init(|| {
            let mut idx: Vec<usize> = (0..self.n_samples()).collect();
            idx.sort_by(|&i, &j| {
                self.y[i]
                    .total_cmp(&self.y[j])
                    .then_with(|| {
                        self.x
                            .row(i)
                            .iter()
                            .zip(self.x.row(j).iter())
                            .map(|(a, b)| a.total_cmp(b))
                            .find(|o| o.is_ne())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .then_with(|| self.groups[i].cmp(&self.groups[j]))
            });
            idx
        })
    }

    /// Dataset restricted to `rows` (in the given order), keeping the group
    /// labelling. Fails if a group ends up empty.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select(Axis(0), rows);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let groups = rows.iter().map(|&i| self.groups[i]).collect();
        Dataset::with_group_names(x, y, groups, self.group_names.clone(), self.task)
    }
}

/// Reads a CSV file with a header row.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_col: &str,
    sensitive_cols: &[String],
    task: Task,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, target_col, sensitive_cols, task)
}

pub fn load_csv_reader<R: Read>(
    reader: R,
    target_col: &str,
    sensitive_cols: &[String],
    task: Task,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target_pos = find(target_col)?;
    let sensitive_pos = sensitive_cols
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let feature_pos: Vec<usize> = (0..headers.len())
        .filter(|p| *p != target_pos && !sensitive_pos.contains(p))
        .collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut keys: Vec<Vec<String>> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for &p in &feature_pos {
            features.push(parse_cell(&record, p, row, &headers)?);
        }
        targets.push(parse_cell(&record, target_pos, row, &headers)?);
        keys.push(
            sensitive_pos
                .iter()
                .map(|&p| record.get(p).unwrap_or("").trim().to_string())
                .collect(),
        );
    }
    let n = targets.len();

    if task == Task::Classification {
        let zero_one = targets.iter().all(|&t| t == 0.0 || t == 1.0);
        if zero_one {
            for t in targets.iter_mut() {
                *t = 2.0 * *t - 1.0;
            }
        } else if let Some(row) = targets.iter().position(|&t| t != 1.0 && t != -1.0) {
            return Err(Error::InvalidTarget {
                row,
                message: format!("expected labels in {{0,1}} or {{-1,1}}, found {}", targets[row]),
            });
        }
    }

    // Cartesian product restricted to observed combinations, lexicographic
    let distinct: BTreeSet<&Vec<String>> = keys.iter().collect();
    let label: BTreeMap<&Vec<String>, usize> =
        distinct.iter().enumerate().map(|(a, k)| (*k, a)).collect();
    let groups: Vec<usize> = keys.iter().map(|k| label[k]).collect();
    let names: Vec<String> = distinct.iter().map(|k| k.join("|")).collect();

    let x = Array2::from_shape_vec((n, feature_pos.len()), features)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Dataset::with_group_names(x, Array1::from(targets), groups, names, task)
}

fn parse_cell(record: &csv::StringRecord, pos: usize, row: usize, headers: &[String]) -> Result<f64> {
    let raw = record.get(pos).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|e| Error::Parse {
        row,
        column: headers[pos].clone(),
        message: format!("`{raw}`: {e}"),
    })
}

/// Zero-mean, unit-variance features (population convention) followed by an
/// intercept column of ones. Constant columns become all zeros.
pub fn standardize(ds: &Dataset) -> Dataset {
    let n = ds.n_samples();
    let d = ds.n_features();
    let mut out = Array2::<f64>::ones((n, d + 1));
    for j in 0..d {
        let col = ds.x.column(j);
        let mean = exact_sum(col.iter().copied()) / n as f64;
        let var = exact_sum(col.iter().map(|v| (v - mean) * (v - mean))) / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            out[[i, j]] = if sd > 0.0 { (col[i] - mean) / sd } else { 0.0 };
        }
    }
    Dataset {
        x: out,
        y: ds.y.clone(),
        groups: ds.groups.clone(),
        group_index: ds.group_index.clone(),
        group_names: ds.group_names.clone(),
        task: ds.task,
        target_order: OnceLock::new(),
    }
}

/// Stratified, seeded split. The train split has `floor(train_frac * n)` rows;
/// per-group quotas are floored and the remainder is handed out by largest
/// fractional part (lowest group first on ties). Every group must keep at
/// least one row on each side.
pub fn train_test_split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_frac must lie in (0,1), got {train_frac}"
        )));
    }
    let n = ds.n_samples();
    let target = (train_frac * n as f64).floor() as usize;
    let sizes = ds.group_sizes();
    let mut quota: Vec<usize> = sizes
        .iter()
        .map(|&na| (train_frac * na as f64).floor() as usize)
        .collect();
    let mut by_remainder: Vec<usize> = (0..sizes.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = train_frac * sizes[a] as f64 - quota[a] as f64;
        let rb = train_frac * sizes[b] as f64 - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(quota.iter().sum());
    while missing > 0 {
        let mut moved = false;
        for &a in &by_remainder {
            if missing > 0 && quota[a] + 1 < sizes[a] {
                quota[a] += 1;
                missing -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    for (a, (&q, &na)) in quota.iter().zip(&sizes).enumerate() {
        if q == 0 {
            return Err(Error::Stratification {
                group: a,
                reason: "would have no training samples".into(),
            });
        }
        if q >= na {
            return Err(Error::Stratification {
                group: a,
                reason: "would have no test samples".into(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (members, &q) in ds.group_index.iter().zip(&quota) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..q]);
        test.extend_from_slice(&shuffled[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Biased synthetic classification data, see [`synth_biased_with_task`].
pub fn synth_biased(n_per_group: &[usize], d: usize, shift: f64, seed: u64) -> Result<Dataset> {
    synth_biased_with_task(Task::Classification, n_per_group, d, shift, seed)
}

/// Gaussian features whose labelling hyperplane depends on the group.
///
/// Group `a` uses the direction `e_1` rotated by `shift * a` radians towards
/// `e_2`, an offset `shift * a / 2`, and features centred at
/// `(shift * a / 2) e_2`. With `shift = 0` all groups are identically
/// distributed.
pub fn synth_biased_with_task(
    task: Task,
    n_per_group: &[usize],
    d: usize,
    shift: f64,
    seed: u64,
) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if n_per_group.is_empty() || n_per_group.iter().any(|&c| c < 2) {
        return Err(Error::InvalidArgument(
            "every group needs at least two samples".into(),
        ));
    }
    let n: usize = n_per_group.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Array1::<f64>::zeros(n);
    let mut groups = Vec::with_capacity(n);
    let mut i = 0;
    for (a, &count) in n_per_group.iter().enumerate() {
        let angle = shift * a as f64;
        let offset = 0.5 * shift * a as f64;
        let mut direction = Array1::<f64>::zeros(d);
        if d == 1 {
            direction[0] = 2.0 * angle.cos();
        } else {
            direction[0] = 2.0 * angle.cos();
            direction[1] = 2.0 * angle.sin();
            for k in 2..d {
                direction[k] = 0.5 / k as f64;
            }
        }
        for _ in 0..count {
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                x[[i, k]] = z;
            }
            if d > 1 {
                x[[i, 1]] += offset;
            }
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
            let score = x.row(i).dot(&direction) + offset + noise;
            y[i] = match task {
                Task::Classification => {
                    if score >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Task::Regression => score,
            };
            groups.push(a);
            i += 1;
        }
    }
    Dataset::new(x, y, groups, n_per_group.len(), task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn csv_ds(text: &str, sens: &[&str], task: Task) -> Result<Dataset> {
        let sens: Vec<String> = sens.iter().map(|s| s.to_string()).collect();
        load_csv_reader(text.as_bytes(), "y", &sens, task)
    }

    #[test]
    fn crossing_single_column_is_lexicographic() {
        let ds = csv_ds("x,sex,y\n1,M,1\n2,F,0\n3,M,0\n4,F,1\n", &["sex"], Task::Classification).unwrap();
        assert_eq!(ds.n_groups(), 2);
        assert_eq!(ds.group_names(), &["F".to_string(), "M".to_string()]);
        assert_eq!(ds.group_index()[0], vec![1, 3]);
        assert_eq!(ds.y().to_vec(), vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(ds.n_features(), 1);
    }

    #[test]
    fn crossing_keeps_observed_pairs_only() {
        let text = "x,sex,age_band,y\n1,M,young,1\n2,F,young,-1\n3,F,old,1\n4,M,young,-1\n";
        let ds = csv_ds(text, &["sex", "age_band"], Task::Classification).unwrap();
        assert_eq!(ds.n_groups(), 3);
        assert_eq!(ds.group_names(), &["F|old", "F|young", "M|young"]);
    }

    #[test]
    fn missing_target_names_the_column() {
        let err = load_csv_reader("x,sex\n1,M\n".as_bytes(), "y", &["sex".into()], Task::Regression)
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "y"));
    }

    #[test]
    fn bad_feature_reports_row() {
        let err = csv_ds("x,sex,y\n1,M,1\nabc,F,0\n", &["sex"], Task::Classification).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, ref column, .. } if column == "x"));
    }

    #[test]
    fn rejects_non_binary_classification_targets() {
        let err = csv_ds("x,s,y\n1,a,2\n2,b,1\n", &["s"], Task::Classification).unwrap_err();
        assert!(matches!(err, Error::InvalidTarget { .. }));
    }

    #[test]
    fn standardize_two_points_and_constants() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let ds = Dataset::new(x, array![0.0, 1.0], vec![0, 0], 1, Task::Regression).unwrap();
        let s = standardize(&ds);
        assert_eq!(s.n_features(), 3);
        assert_eq!(s.x().column(0).to_vec(), vec![-1.0, 1.0]);
        assert_eq!(s.x().column(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.x().column(2).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn split_is_deterministic_and_floored() {
        let ds = synth_biased(&[5, 5], 2, 0.5, 3).unwrap();
        let (a1, b1) = train_test_split(&ds, 0.7, 0).unwrap();
        let (a2, b2) = train_test_split(&ds, 0.7, 0).unwrap();
        assert_eq!(a1.n_samples(), 7);
        assert_eq!(b1.n_samples(), 3);
        assert_eq!(a1.x(), a2.x());
        assert_eq!(b1.y(), b2.y());
    }

    #[test]
    fn single_group_half_split() {
        let ds = synth_biased(&[6], 2, 0.0, 1).unwrap();
        let (tr, te) = train_test_split(&ds, 0.5, 4).unwrap();
        assert_eq!(tr.n_groups(), 1);
        assert_eq!(te.n_groups(), 1);
        assert_eq!(tr.n_samples(), 3);
    }

    #[test]
    fn split_refuses_to_empty_a_group() {
        let x = Array2::zeros((4, 1));
        let ds = Dataset::new(x, array![1.0, -1.0, 1.0, -1.0], vec![0, 0, 0, 1], 2, Task::Classification)
            .unwrap();
        assert!(matches!(
            train_test_split(&ds, 0.7, 0),
            Err(Error::Stratification { group: 1, .. })
        ));
    }

    #[test]
    fn synth_sizes_and_determinism() {
        let a = synth_biased(&[100, 50], 3, 0.7, 11).unwrap();
        let b = synth_biased(&[100, 50], 3, 0.7, 11).unwrap();
        assert_eq!(a.group_sizes(), vec![100, 50]);
        let bits = |d: &Dataset| d.x().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.y(), b.y());
    }

    #[test]
    fn subset_keeps_labels() {
        let ds = synth_biased(&[4, 4], 2, 0.3, 2).unwrap();
        let sub = ds.subset(&[7, 0, 5]).unwrap();
        assert_eq!(sub.groups(), &[1, 0, 1]);
        assert!(ds.subset(&[0, 1]).is_err());
    }
}
