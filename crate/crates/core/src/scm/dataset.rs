use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CohortConfig, ScmError, COHORT_COLUMN, SELECTED_COLUMN};

/// Column-major multi-cohort data. Values are category codes; `levels`
/// optionally names the codes of a column (code `i` is `levels[i]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub cohort_ids: Vec<String>,
    /// Index into `cohort_ids` per row.
    pub cohort: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
    pub selected: Vec<bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub levels: BTreeMap<String, Vec<String>>,
}

/// Generation metadata written next to a CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenario: String,
    pub parameter_set: String,
    pub seed: u64,
    pub cohorts: Vec<CohortConfig>,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Harmonization {
    Identity,
    /// Relabel the categories of `variable` through `map`.
    Coarsen { variable: String, map: BTreeMap<String, String> },
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.cohort.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.column_index(name).map(|j| self.values[j].as_slice())
    }

    /// Labels of a column's codes, defaulting to the codes themselves.
    pub fn labels(&self, name: &str) -> Vec<String> {
        if let Some(l) = self.levels.get(name) {
            return l.clone();
        }
        let mut codes: Vec<f64> = self.column(name).unwrap_or(&[]).iter().flatten().copied().collect();
        codes.sort_by(f64::total_cmp);
        codes.dedup();
        codes.into_iter().map(fmt_value).collect()
    }

    fn label_of(&self, name: &str, v: f64) -> String {
        match self.levels.get(name) {
            Some(l) if v >= 0.0 && (v as usize) < l.len() && v.fract() == 0.0 => l[v as usize].clone(),
            _ => fmt_value(v),
        }
    }

    /// Rows where `keep` is true, in order.
    pub fn filter_rows(&self, keep: &[bool]) -> Dataset {
        let pick = |v: &Vec<Option<f64>>| v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect();
        Dataset {
            columns: self.columns.clone(),
            cohort_ids: self.cohort_ids.clone(),
            cohort: self.cohort.iter().zip(keep).filter(|(_, &k)| k).map(|(c, _)| *c).collect(),
            values: self.values.iter().map(pick).collect(),
            selected: self.selected.iter().zip(keep).filter(|(_, &k)| k).map(|(s, _)| *s).collect(),
            levels: self.levels.clone(),
        }
    }

    /// Rows of one cohort, as a single-cohort dataset.
    pub fn cohort_subset(&self, id: &str) -> Option<Dataset> {
        let k = self.cohort_ids.iter().position(|c| c == id)?;
        let mut d = self.filter_rows(&self.cohort.iter().map(|&c| c == k).collect::<Vec<_>>());
        d.cohort_ids = vec![id.to_string()];
        d.cohort.iter_mut().for_each(|c| *c = 0);
        Some(d)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ScmError> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| ScmError::Csv(e.to_string());
        let mut header = vec![COHORT_COLUMN.to_string()];
        header.extend(self.columns.iter().cloned());
        header.push(SELECTED_COLUMN.to_string());
        out.write_record(&header).map_err(csv_err)?;
        for r in 0..self.n_rows() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.cohort_ids[self.cohort[r]].clone());
            for (j, name) in self.columns.iter().enumerate() {
                rec.push(self.values[j][r].map(|v| self.label_of(name, v)).unwrap_or_default());
            }
            rec.push(if self.selected[r] { "1".into() } else { "0".into() });
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| ScmError::Csv(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// Reads the layout written by [`Dataset::write_csv`]. The `selected`
    /// column is optional; non-numeric values become labelled categories.
    pub fn read_csv<R: Read>(r: R) -> Result<Dataset, ScmError> {
        let mut rdr = csv::Reader::from_reader(r);
        let csv_err = |e: csv::Error| ScmError::Csv(e.to_string());
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let cohort_col = header.iter().position(|h| h == COHORT_COLUMN);
        let sel_col = header.iter().position(|h| h == SELECTED_COLUMN);
        let data_cols: Vec<usize> =
            (0..header.len()).filter(|&j| Some(j) != cohort_col && Some(j) != sel_col).collect();
        let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); data_cols.len()];
        let mut ds = Dataset {
            columns: data_cols.iter().map(|&j| header[j].clone()).collect(),
            cohort_ids: Vec::new(),
            cohort: Vec::new(),
            values: Vec::new(),
            selected: Vec::new(),
            levels: BTreeMap::new(),
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let id = cohort_col.map(|j| rec[j].to_string()).unwrap_or_else(|| "cohort1".into());
            let k = match ds.cohort_ids.iter().position(|c| *c == id) {
                Some(k) => k,
                None => {
                    ds.cohort_ids.push(id);
                    ds.cohort_ids.len() - 1
                }
            };
            ds.cohort.push(k);
            ds.selected.push(match sel_col.map(|j| rec[j].trim()) {
                None | Some("1") | Some("true") => true,
                Some("0") | Some("false") => false,
                Some(other) => return Err(ScmError::Csv(format!("row {}: bad selected flag `{other}`", line + 2))),
            });
            for (slot, &j) in data_cols.iter().enumerate() {
                let cell = rec[j].trim();
                raw[slot].push(if cell.is_empty() { None } else { Some(cell.to_string()) });
            }
        }
        for (slot, col) in raw.into_iter().enumerate() {
            let numeric = col.iter().flatten().all(|s| s.parse::<f64>().is_ok());
            if numeric {
                ds.values.push(col.iter().map(|c| c.as_ref().map(|s| s.parse().unwrap())).collect());
            } else {
                let mut labels: Vec<String> = Vec::new();
                let codes = col
                    .iter()
                    .map(|c| {
                        c.as_ref().map(|s| match labels.iter().position(|l| l == s) {
                            Some(i) => i as f64,
                            None => {
                                labels.push(s.clone());
                                (labels.len() - 1) as f64
                            }
                        })
                    })
                    .collect();
                ds.values.push(codes);
                ds.levels.insert(ds.columns[slot].clone(), labels);
            }
        }
        Ok(ds)
    }
}

/// Drops non-participants, keeping row order.
pub fn restrict_to_selected(ds: &Dataset) -> Dataset {
    ds.filter_rows(&ds.selected)
}

/// Stacks datasets; cohort ids are kept, so the cohort column acts as the
/// cohort indicator in pooled analyses.
pub fn pool(datasets: &[Dataset], harmonization: &Harmonization) -> Result<Dataset, ScmError> {
    let first = datasets.first().ok_or_else(|| ScmError::Irreconcilable("no datasets to pool".into()))?;
    let mut columns = first.columns.clone();
    columns.sort();
    for d in datasets {
        let mut c = d.columns.clone();
        c.sort();
        if c != columns {
            return Err(ScmError::Irreconcilable(format!("column sets differ: {:?} vs {:?}", first.columns, d.columns)));
        }
    }
    let columns = first.columns.clone();
    let coarsened = match harmonization {
        Harmonization::Identity => None,
        Harmonization::Coarsen { variable, map } => {
            if !columns.contains(variable) {
                return Err(ScmError::Irreconcilable(format!("no column `{variable}` to coarsen")));
            }
            Some((variable.as_str(), map))
        }
    };

    let mut out = Dataset {
        columns: columns.clone(),
        cohort_ids: Vec::new(),
        cohort: Vec::new(),
        values: vec![Vec::new(); columns.len()],
        selected: Vec::new(),
        levels: BTreeMap::new(),
    };
    // Shared labels per labelled column, in order of first appearance.
    let mut shared: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in &columns {
        let labelled = datasets.iter().any(|d| d.levels.contains_key(name));
        let is_target = coarsened.is_some_and(|(v, _)| v == name);
        if !labelled && !is_target {
            continue;
        }
        if !is_target {
            let reference = datasets[0].labels(name);
            for d in datasets {
                if d.labels(name) != reference {
                    return Err(ScmError::Irreconcilable(format!(
                        "column `{name}` is coded differently across datasets and no merge map is given"
                    )));
                }
            }
        }
        shared.insert(name.clone(), Vec::new());
    }

    for d in datasets {
        let offset = out.cohort_ids.len();
        for id in &d.cohort_ids {
            if out.cohort_ids.contains(id) {
                return Err(ScmError::Irreconcilable(format!("cohort `{id}` appears in more than one dataset")));
            }
            out.cohort_ids.push(id.clone());
        }
        out.cohort.extend(d.cohort.iter().map(|c| c + offset));
        out.selected.extend(&d.selected);
        for (j, name) in columns.iter().enumerate() {
            let src = d.column(name).expect("column sets checked");
            match shared.get_mut(name) {
                None => out.values[j].extend_from_slice(src),
                Some(labels) => {
                    for v in src {
                        let code = match v {
                            None => None,
                            Some(v) => {
                                let mut label = d.label_of(name, *v);
                                if let Some((var, map)) = coarsened {
                                    if var == name {
                                        label = map.get(&label).cloned().ok_or_else(|| ScmError::UnmappedCategory {
                                            column: name.clone(),
                                            category: label.clone(),
                                        })?;
                                    }
                                }
                                let i = labels.iter().position(|l| *l == label).unwrap_or_else(|| {
                                    labels.push(label);
                                    labels.len() - 1
                                });
                                Some(i as f64)
                            }
                        };
                        out.values[j].push(code);
                    }
                }
            }
        }
    }
    out.levels = shared;
    Ok(out)
}
