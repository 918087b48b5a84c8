use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{EventType, RegressorKind};
use crate::error::{Error, Result};

/// One regressor attached to a process or stoppage half. Specs that share a
/// `parameter` share a single coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub kind: RegressorKind,
    pub parameter: String,
}

impl RegressorSpec {
    pub fn new(kind: RegressorKind, parameter: impl Into<String>) -> Self {
        RegressorSpec {
            kind,
            parameter: parameter.into(),
        }
    }
}

/// `Σ coefficients[id] · ξ_id = rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coefficients: BTreeMap<String, f64>,
    pub rhs: f64,
}

/// Declarative model: regressors of each event process and stoppage half,
/// parameter tying through shared ids, and linear equality constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Teams known to the team-specific regressors. Empty for models without
    /// attack/defence terms.
    #[serde(default)]
    pub teams: Vec<String>,
    /// Processes absent from the map are not modelled (zero intensity).
    pub processes: BTreeMap<EventType, Vec<RegressorSpec>>,
    /// Stoppage regressors of the first and second half. An empty list
    /// means that half's stoppage is not modelled.
    pub stoppage: [Vec<RegressorSpec>; 2],
    #[serde(default)]
    pub constraints: Vec<LinearConstraint>,
}

impl ModelSpec {
    pub fn empty(name: impl Into<String>) -> Self {
        ModelSpec {
            name: name.into(),
            teams: Vec::new(),
            processes: BTreeMap::new(),
            stoppage: [Vec::new(), Vec::new()],
            constraints: Vec::new(),
        }
    }

    pub fn add_process_regressor(&mut self, process: EventType, kind: RegressorKind, parameter: &str) {
        self.processes
            .entry(process)
            .or_default()
            .push(RegressorSpec::new(kind, parameter));
    }

    pub fn add_stoppage_regressor(&mut self, half: u8, kind: RegressorKind, parameter: &str) {
        self.stoppage[usize::from(half - 1)].push(RegressorSpec::new(kind, parameter));
    }

    fn all_specs(&self) -> impl Iterator<Item = &RegressorSpec> {
        self.processes
            .values()
            .flatten()
            .chain(self.stoppage.iter().flatten())
    }

    /// Distinct parameter ids in order of first appearance: processes in
    /// canonical event order, then stoppage halves.
    pub fn parameter_ids(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut ids = Vec::new();
        for spec in self.all_specs() {
            if !seen.contains_key(&spec.parameter) {
                seen.insert(spec.parameter.clone(), ids.len());
                ids.push(spec.parameter.clone());
            }
        }
        ids
    }

    pub fn parameter_index(&self) -> HashMap<String, usize> {
        self.parameter_ids()
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.parameter_ids().len()
    }

    /// Hash of the parameter layout, used to check that designs and
    /// parameter vectors were built from the same spec.
    pub fn layout_fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.parameter_ids().hash(&mut h);
        h.finish()
    }

    pub fn has_team_regressors(&self) -> bool {
        self.all_specs().any(|s| s.kind.team().is_some())
    }

    pub fn requires_values(&self) -> bool {
        self.all_specs().any(|s| s.kind == RegressorKind::LogValueRatio)
    }

    pub fn has_stoppage_model(&self, half: u8) -> bool {
        !self.stoppage[usize::from(half - 1)].is_empty()
    }

    pub fn knows_team(&self, team: &str) -> bool {
        !self.has_team_regressors() || self.teams.iter().any(|t| t == team)
    }

    pub fn validate(&self) -> Result<()> {
        for (process, specs) in &self.processes {
            if let Some(bad) = specs.iter().find(|s| !s.kind.allowed_in_process()) {
                return Err(Error::Spec(format!(
                    "{:?} cannot be used in the {process} process",
                    bad.kind
                )));
            }
            if specs.iter().filter(|s| s.kind == RegressorKind::LogTime).count() > 1 {
                return Err(Error::Spec(format!("{process} has more than one ln t regressor")));
            }
        }
        for (i, specs) in self.stoppage.iter().enumerate() {
            let half = i as u8 + 1;
            if let Some(bad) = specs.iter().find(|s| !s.kind.allowed_in_stoppage(half)) {
                return Err(Error::Spec(format!(
                    "{:?} cannot be used in the stoppage of half {half}",
                    bad.kind
                )));
            }
        }
        let mut kinds: HashMap<&str, &RegressorKind> = HashMap::new();
        for spec in self.all_specs() {
            match kinds.get(spec.parameter.as_str()) {
                Some(k) if *k != &spec.kind => {
                    return Err(Error::Spec(format!(
                        "parameter {:?} is shared by incompatible regressors {:?} and {:?}",
                        spec.parameter, k, spec.kind
                    )))
                }
                _ => {
                    kinds.insert(&spec.parameter, &spec.kind);
                }
            }
        }
        for c in &self.constraints {
            if c.coefficients.values().all(|v| *v == 0.0) {
                return Err(Error::Spec("constraint with no nonzero coefficient".into()));
            }
            if let Some(id) = c.coefficients.keys().find(|id| !kinds.contains_key(id.as_str())) {
                return Err(Error::Spec(format!("constraint references unknown parameter {id:?}")));
            }
        }
        for spec in self.all_specs() {
            if let Some(team) = spec.kind.team() {
                if !self.teams.iter().any(|t| t == team) {
                    return Err(Error::Spec(format!("team {team:?} missing from the team list")));
                }
            }
        }
        Ok(())
    }

    /// Dense constraint system `C ξ = d` in parameter order.
    pub fn constraint_system(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let index = self.parameter_index();
        let n = index.len();
        let mut rows = Vec::with_capacity(self.constraints.len());
        let mut rhs = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let mut row = vec![0.0; n];
            for (id, v) in &c.coefficients {
                if let Some(&i) = index.get(id) {
                    row[i] += v;
                }
            }
            rows.push(row);
            rhs.push(c.rhs);
        }
        (rows, rhs)
    }
}

/// Coefficients `ξ` addressed by parameter id, ordered as in the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let ids = spec.parameter_ids();
        let values = vec![0.0; ids.len()];
        ParameterVector { ids, values }
    }

    /// Builds a vector for `spec` from `(id, value)` pairs; ids not listed
    /// default to zero, unknown ids are an error.
    pub fn from_pairs<'a>(
        spec: &ModelSpec,
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut pv = ParameterVector::zeros(spec);
        for (id, v) in pairs {
            pv.set(id, v)?;
        }
        Ok(pv)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|x| x == id).map(|i| self.values[i])
    }

    pub fn set(&mut self, id: &str, value: f64) -> Result<()> {
        let i = self
            .ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| Error::Spec(format!("unknown parameter {id:?}")))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn matches_spec(&self, spec: &ModelSpec) -> bool {
        self.ids == spec.parameter_ids()
    }
}
