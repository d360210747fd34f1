//! Column-oriented datasets with declared roles, plus CSV ingestion.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of rows any dataset may carry.
pub const MIN_ROWS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Outcome,
    Treatment,
    Covariate,
    Instrument,
    HiddenConfounder,
    PotentialOutcomeY0,
    PotentialOutcomeY1,
    PotentialTreatmentZ0,
    PotentialTreatmentZ1,
    Mediator,
}

impl Role {
    pub const ALL: [Role; 10] = [
        Role::Outcome,
        Role::Treatment,
        Role::Covariate,
        Role::Instrument,
        Role::HiddenConfounder,
        Role::PotentialOutcomeY0,
        Role::PotentialOutcomeY1,
        Role::PotentialTreatmentZ0,
        Role::PotentialTreatmentZ1,
        Role::Mediator,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Outcome => "outcome",
            Role::Treatment => "treatment",
            Role::Covariate => "covariate",
            Role::Instrument => "instrument",
            Role::HiddenConfounder => "hidden_confounder",
            Role::PotentialOutcomeY0 => "potential_outcome_y0",
            Role::PotentialOutcomeY1 => "potential_outcome_y1",
            Role::PotentialTreatmentZ0 => "potential_treatment_z0",
            Role::PotentialTreatmentZ1 => "potential_treatment_z1",
            Role::Mediator => "mediator",
        }
    }

    fn is_binary(&self) -> bool {
        matches!(self, Role::PotentialTreatmentZ0 | Role::PotentialTreatmentZ1)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRole {
    pub name: String,
    pub role: Role,
}

/// Role assignment for a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleMap {
    pub assignments: Vec<ColumnRole>,
    /// Whether the treatment column must be 0/1.
    pub binary_treatment: bool,
}

impl Default for RoleMap {
    fn default() -> Self {
        RoleMap { assignments: Vec::new(), binary_treatment: true }
    }
}

impl RoleMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, role: Role, name: impl Into<String>) -> Self {
        self.assignments.push(ColumnRole { name: name.into(), role });
        self
    }

    pub fn with_all<I, S>(mut self, role: Role, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for n in names {
            self.assignments.push(ColumnRole { name: n.into(), role });
        }
        self
    }

    pub fn outcome(self, name: impl Into<String>) -> Self {
        self.with(Role::Outcome, name)
    }

    pub fn treatment(self, name: impl Into<String>) -> Self {
        self.with(Role::Treatment, name)
    }

    pub fn covariates<I: IntoIterator<Item = S>, S: Into<String>>(self, names: I) -> Self {
        self.with_all(Role::Covariate, names)
    }

    pub fn instruments<I: IntoIterator<Item = S>, S: Into<String>>(self, names: I) -> Self {
        self.with_all(Role::Instrument, names)
    }

    pub fn continuous_treatment(mut self) -> Self {
        self.binary_treatment = false;
        self
    }

    pub fn names(&self, role: Role) -> Vec<String> {
        self.assignments.iter().filter(|a| a.role == role).map(|a| a.name.clone()).collect()
    }
}

/// Immutable real-valued table with declared column roles.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    columns: Vec<(String, Vec<f64>)>,
    roles: RoleMap,
}

impl Dataset {
    /// Builds a dataset and rejects it unless every invariant holds.
    pub fn new(columns: Vec<(String, Vec<f64>)>, roles: RoleMap) -> Result<Self> {
        let ds = Self::from_parts(columns, roles);
        let report = validate_roles(&ds);
        if let Some(fail) = report.first_failure() {
            return Err(fail.to_error(&ds));
        }
        Ok(ds)
    }

    /// Builds a dataset without validation. `validate_roles` reports on it.
    pub fn from_parts(columns: Vec<(String, Vec<f64>)>, roles: RoleMap) -> Self {
        let n_rows = columns.first().map(|c| c.1.len()).unwrap_or(0);
        Dataset { n_rows, columns, roles }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn roles(&self) -> &RoleMap {
        &self.roles
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn names(&self, role: Role) -> Vec<String> {
        self.roles.names(role)
    }

    fn single(&self, role: Role) -> Result<&[f64]> {
        let names = self.names(role);
        match names.as_slice() {
            [one] => self.column(one),
            [] => Err(Error::Roles(format!("no {role} column declared"))),
            _ => Err(Error::Roles(format!("more than one {role} column declared"))),
        }
    }

    pub fn outcome(&self) -> Result<&[f64]> {
        self.single(Role::Outcome)
    }

    pub fn treatment(&self) -> Result<&[f64]> {
        self.single(Role::Treatment)
    }

    pub fn outcome_name(&self) -> Option<String> {
        self.names(Role::Outcome).into_iter().next()
    }

    pub fn treatment_name(&self) -> Option<String> {
        self.names(Role::Treatment).into_iter().next()
    }

    pub fn covariates(&self) -> Vec<String> {
        self.names(Role::Covariate)
    }

    pub fn instruments(&self) -> Vec<String> {
        self.names(Role::Instrument)
    }

    /// Returns a copy with `name` added (or replaced) and no role attached.
    pub fn with_column(&self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.n_rows {
            return Err(Error::Invalid(format!(
                "column '{name}' has {} entries, expected {}",
                values.len(),
                self.n_rows
            )));
        }
        let mut out = self.clone();
        match out.columns.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = values,
            None => out.columns.push((name, values)),
        }
        Ok(out)
    }

    /// Returns a copy carrying a different role assignment.
    pub fn with_roles(&self, roles: RoleMap) -> Result<Self> {
        Dataset::new(self.columns.clone(), roles)
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|(n, v)| (n.clone(), idx.iter().map(|&i| v[i]).collect()))
            .collect();
        Dataset { n_rows: idx.len(), columns, roles: self.roles.clone() }
    }

    /// Writes the table as CSV. Values use the shortest decimal text that
    /// parses back to the same double.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<&str> = self.column_names().collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_rows {
            line.clear();
            for (j, (_, v)) in self.columns.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{}", v[i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Reads a numeric CSV file and attaches roles.
pub fn ingest_csv(path: impl AsRef<Path>, roles: &RoleMap) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text, roles)
}

/// Parses CSV text (header row, comma delimited, numeric body).
pub fn parse_csv(text: &str, roles: &RoleMap) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Invalid(format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Invalid("missing header row".into()));
    }
    for a in &roles.assignments {
        if !header.contains(&a.name) {
            return Err(Error::MissingColumn(a.name.clone()));
        }
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Invalid(format!("row {row}: {e}")))?;
        for (j, name) in header.iter().enumerate() {
            let cell = rec.get(j).unwrap_or("");
            cols[j].push(parse_cell(cell, name, row)?);
        }
    }
    let columns: Vec<(String, Vec<f64>)> = header.into_iter().zip(cols).collect();
    Dataset::new(columns, roles.clone())
}

fn parse_cell(cell: &str, column: &str, row: usize) -> Result<f64> {
    let missing = || Error::MissingValue { column: column.to_string(), row };
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Err(missing());
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric { column: column.to_string(), row, value: cell.to_string() }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn to_error(&self, ds: &Dataset) -> Error {
        match self.name {
            "roles reference existing columns" => {
                let missing = ds
                    .roles
                    .assignments
                    .iter()
                    .find(|a| !ds.has_column(&a.name))
                    .map(|a| a.name.clone())
                    .unwrap_or_default();
                Error::MissingColumn(missing)
            }
            "binary treatment" => Error::NonBinary {
                role: "treatment".into(),
                column: ds.treatment_name().unwrap_or_default(),
            },
            "binary potential treatments" => {
                Error::NonBinary { role: "potential treatment".into(), column: self.detail.clone() }
            }
            "no missing values" => Error::MissingValue { column: self.detail.clone(), row: 0 },
            _ => Error::Roles(format!("{}: {}", self.name, self.detail)),
        }
    }
}

/// Outcome of every dataset invariant check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn is_binary(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Runs every dataset invariant and reports each one.
pub fn validate_roles(ds: &Dataset) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        checks.push(Check { name, passed, detail });
    };

    push("n_rows ≥ 2", ds.n_rows >= MIN_ROWS, format!("n_rows = {}", ds.n_rows));

    let bad_len: Vec<&str> = ds
        .columns
        .iter()
        .filter(|(_, v)| v.len() != ds.n_rows)
        .map(|(n, _)| n.as_str())
        .collect();
    push("column lengths", bad_len.is_empty(), bad_len.join(","));

    let non_finite: Vec<&str> = ds
        .columns
        .iter()
        .filter(|(_, v)| v.iter().any(|x| !x.is_finite()))
        .map(|(n, _)| n.as_str())
        .collect();
    push("no missing values", non_finite.is_empty(), non_finite.join(","));

    let mut dup_names: Vec<&str> = Vec::new();
    for (i, (n, _)) in ds.columns.iter().enumerate() {
        if ds.columns[..i].iter().any(|(m, _)| m == n) {
            dup_names.push(n);
        }
    }
    push("unique column names", dup_names.is_empty(), dup_names.join(","));

    let missing: Vec<&str> = ds
        .roles
        .assignments
        .iter()
        .filter(|a| !ds.has_column(&a.name))
        .map(|a| a.name.as_str())
        .collect();
    push("roles reference existing columns", missing.is_empty(), missing.join(","));

    let n_out = ds.names(Role::Outcome).len();
    push("exactly one outcome", n_out == 1, format!("{n_out} declared"));
    let n_trt = ds.names(Role::Treatment).len();
    push("exactly one treatment", n_trt == 1, format!("{n_trt} declared"));

    let mut seen: BTreeMap<&str, Role> = BTreeMap::new();
    let mut clashes = Vec::new();
    for a in &ds.roles.assignments {
        if let Some(prev) = seen.insert(a.name.as_str(), a.role) {
            clashes.push(format!("{} ({prev}, {})", a.name, a.role));
        }
    }
    push("disjoint roles", clashes.is_empty(), clashes.join("; "));

    let trt_binary = !ds.roles.binary_treatment
        || ds.treatment().map(is_binary).unwrap_or(true);
    push("binary treatment", trt_binary, String::new());

    let bad_pt: Vec<String> = ds
        .roles
        .assignments
        .iter()
        .filter(|a| a.role.is_binary())
        .filter(|a| ds.column(&a.name).map(|v| !is_binary(v)).unwrap_or(false))
        .map(|a| a.name.clone())
        .collect();
    push("binary potential treatments", bad_pt.is_empty(), bad_pt.join(","));

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TD1: &str = "z,d,y\n0,0,1\n0,0,1\n0,0,1\n0,1,3\n1,0,1\n1,1,3\n1,1,3\n1,1,3\n";

    fn td1_roles() -> RoleMap {
        RoleMap::new().instruments(["z"]).treatment("d").outcome("y")
    }

    #[test]
    fn parses_td1() {
        let ds = parse_csv(TD1, &td1_roles()).unwrap();
        assert_eq!(ds.n_rows(), 8);
        assert_eq!(ds.outcome().unwrap()[3], 3.0);
        assert!(validate_roles(&ds).passed());
    }

    #[test]
    fn missing_role_column() {
        let roles = td1_roles().covariates(["w"]);
        assert_eq!(parse_csv(TD1, &roles), Err(Error::MissingColumn("w".into())));
    }

    #[test]
    fn non_binary_treatment() {
        let text = TD1.replace("0,1,3\n1,0", "0,0.5,3\n1,0");
        let err = parse_csv(&text, &td1_roles()).unwrap_err();
        assert!(matches!(err, Error::NonBinary { .. }), "{err}");
        assert!(err.to_string().contains("non-binary treatment"));
        // Fine once the treatment is declared continuous.
        assert!(parse_csv(&text, &td1_roles().continuous_treatment()).is_ok());
    }

    #[test]
    fn bad_cells() {
        let text = TD1.replace("1,1,3\n1,1,3\n1,1,3", "1,1,3\n1,,3\n1,1,3");
        assert!(matches!(parse_csv(&text, &td1_roles()), Err(Error::MissingValue { row: 6, .. })));
        let text = TD1.replace("0,0,1\n0,1", "0,0,abc\n0,1");
        assert!(matches!(parse_csv(&text, &td1_roles()), Err(Error::NonNumeric { .. })));
        // Locale-style decimal comma is not a number.
        let text = "z,d,y\n0,0,\"1,5\"\n1,1,2\n";
        assert!(parse_csv(text, &td1_roles()).is_err());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(ingest_csv("/nonexistent/x.csv", &td1_roles()), Err(Error::Io(_))));
    }

    #[test]
    fn duplicated_role_fails_disjointness() {
        let ds = Dataset::from_parts(
            vec![("d".into(), vec![0.0, 1.0]), ("y".into(), vec![1.0, 2.0])],
            RoleMap::new().treatment("d").outcome("y").covariates(["d"]),
        );
        let report = validate_roles(&ds);
        assert!(!report.check("disjoint roles").unwrap().passed);
        assert!(!report.passed());
    }

    #[test]
    fn zero_rows_fail() {
        let ds = Dataset::from_parts(
            vec![("d".into(), vec![]), ("y".into(), vec![])],
            RoleMap::new().treatment("d").outcome("y"),
        );
        let report = validate_roles(&ds);
        assert!(!report.check("n_rows ≥ 2").unwrap().passed);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = Dataset::new(
            vec![
                ("d".into(), vec![0.0, 1.0, 1.0]),
                ("y".into(), vec![0.1, -1.234567890123456e-7, 98765.4321]),
            ],
            RoleMap::new().treatment("d").outcome("y"),
        )
        .unwrap();
        let back = parse_csv(&ds.to_csv_string(), ds.roles()).unwrap();
        assert_eq!(back, ds);
    }
}
