//! Named model components, registered by name and composed at runtime.
//!
//! A model name such as `G4S5R` is read as a sequence of registered
//! component names, at most one per family: a goal model `G0..G4`, a
//! stoppage model `S0..S5` and the red-card model `R`.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use super::{EventType, LinearConstraint, ModelSpec, RegressorKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentFamily {
    Goals,
    Stoppage,
    RedCards,
}

/// A building block of a [`ModelSpec`].
pub trait ModelComponent: Send + Sync {
    fn name(&self) -> &str;

    fn family(&self) -> ComponentFamily;

    /// Adds this component's regressors and constraints to `spec`.
    fn apply(&self, teams: &[String], spec: &mut ModelSpec);

    /// Components of the same family that are special cases of this one
    /// (direct predecessors only; the registry closes the relation).
    fn nests(&self) -> Vec<&str> {
        Vec::new()
    }
}

/// Goal model `G<level>`; each level adds one shared regressor to the
/// static attack/defence/home-advantage model.
pub struct GoalComponent {
    name: String,
    level: u8,
}

impl GoalComponent {
    pub fn new(level: u8) -> Self {
        assert!(level <= 4, "goal models go up to G4");
        GoalComponent {
            name: format!("G{level}"),
            level,
        }
    }
}

pub fn geometric_mean_constraint(teams: &[String]) -> LinearConstraint {
    let mut coefficients = std::collections::BTreeMap::new();
    for t in teams {
        coefficients.insert(format!("attack:{t}"), 1.0);
        coefficients.insert(format!("defence:{t}"), -1.0);
    }
    LinearConstraint {
        coefficients,
        rhs: 0.0,
    }
}

/// Alternative identification: the attack parameters have geometric mean
/// one. Selects a different point on the same flat direction.
pub fn attack_mean_zero_constraint(teams: &[String]) -> LinearConstraint {
    LinearConstraint {
        coefficients: teams.iter().map(|t| (format!("attack:{t}"), 1.0)).collect(),
        rhs: 0.0,
    }
}

impl ModelComponent for GoalComponent {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> ComponentFamily {
        ComponentFamily::Goals
    }

    fn apply(&self, teams: &[String], spec: &mut ModelSpec) {
        for process in [EventType::HomeGoal, EventType::AwayGoal] {
            for team in teams {
                spec.add_process_regressor(
                    process,
                    RegressorKind::Attack { team: team.clone() },
                    &format!("attack:{team}"),
                );
            }
            for team in teams {
                spec.add_process_regressor(
                    process,
                    RegressorKind::Defence { team: team.clone() },
                    &format!("defence:{team}"),
                );
            }
            if process == EventType::HomeGoal {
                spec.add_process_regressor(process, RegressorKind::HomeAdvantage, "home");
            }
            let shared = [
                (1, RegressorKind::LogValueRatio, "value"),
                (2, RegressorKind::HalfIndicator, "half"),
                (3, RegressorKind::GoalDifference, "goal_diff"),
                (4, RegressorKind::RedCardDifference, "red_diff"),
            ];
            for (level, kind, id) in shared {
                if self.level >= level {
                    spec.add_process_regressor(process, kind, id);
                }
            }
        }
        for t in teams {
            if !spec.teams.contains(t) {
                spec.teams.push(t.clone());
            }
        }
        spec.constraints.push(geometric_mean_constraint(teams));
    }

    fn nests(&self) -> Vec<&str> {
        match self.level {
            0 => vec![],
            1 => vec!["G0"],
            2 => vec!["G1"],
            3 => vec!["G2"],
            _ => vec!["G3"],
        }
    }
}

/// Stoppage model `S0..S5`.
pub struct StoppageComponent {
    name: String,
    variant: u8,
}

impl StoppageComponent {
    pub fn new(variant: u8) -> Self {
        assert!(variant <= 5, "stoppage models go up to S5");
        StoppageComponent {
            name: format!("S{variant}"),
            variant,
        }
    }
}

impl ModelComponent for StoppageComponent {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> ComponentFamily {
        ComponentFamily::Stoppage
    }

    fn apply(&self, _teams: &[String], spec: &mut ModelSpec) {
        spec.add_stoppage_regressor(1, RegressorKind::Constant, "stoppage1_const");
        spec.add_stoppage_regressor(2, RegressorKind::Constant, "stoppage2_const");
        match self.variant {
            1 => {
                spec.add_stoppage_regressor(1, RegressorKind::HalfGoalCount, "stoppage_goals");
                spec.add_stoppage_regressor(2, RegressorKind::HalfGoalCount, "stoppage_goals");
            }
            2 => {
                spec.add_stoppage_regressor(1, RegressorKind::HalfGoalCount, "stoppage1_goals");
                spec.add_stoppage_regressor(2, RegressorKind::HalfGoalCount, "stoppage2_goals");
            }
            3 => {
                spec.add_stoppage_regressor(1, RegressorKind::HalfRedCount, "stoppage_reds");
                spec.add_stoppage_regressor(2, RegressorKind::HalfRedCount, "stoppage_reds");
            }
            4 | 5 => {
                spec.add_stoppage_regressor(1, RegressorKind::HalfRedCount, "stoppage1_reds");
                spec.add_stoppage_regressor(2, RegressorKind::HalfRedCount, "stoppage2_reds");
                if self.variant == 5 {
                    spec.add_stoppage_regressor(
                        2,
                        RegressorKind::CloseScoreIndicator,
                        "stoppage2_close",
                    );
                }
            }
            _ => {}
        }
    }

    fn nests(&self) -> Vec<&str> {
        match self.variant {
            1 | 3 => vec!["S0"],
            2 => vec!["S1"],
            4 => vec!["S3"],
            5 => vec!["S4"],
            _ => vec![],
        }
    }
}

/// Red-card model `R`: `λ(t) = exp(ξ0) · t^ξ1` for each side.
pub struct RedCardComponent;

impl ModelComponent for RedCardComponent {
    fn name(&self) -> &str {
        "R"
    }

    fn family(&self) -> ComponentFamily {
        ComponentFamily::RedCards
    }

    fn apply(&self, _teams: &[String], spec: &mut ModelSpec) {
        for (process, side) in [(EventType::HomeRed, "home"), (EventType::AwayRed, "away")] {
            spec.add_process_regressor(process, RegressorKind::Constant, &format!("red_{side}_const"));
            spec.add_process_regressor(process, RegressorKind::LogTime, &format!("red_{side}_log_time"));
        }
    }
}

#[derive(Default)]
pub struct ModelRegistry {
    components: Vec<Box<dyn ModelComponent>>,
}

static BUILTIN: LazyLock<ModelRegistry> = LazyLock::new(ModelRegistry::with_builtin);

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtin() -> Self {
        let mut r = ModelRegistry::new();
        for level in 0..=4 {
            r.register(Box::new(GoalComponent::new(level)));
        }
        for variant in 0..=5 {
            r.register(Box::new(StoppageComponent::new(variant)));
        }
        r.register(Box::new(RedCardComponent));
        r
    }

    pub fn builtin() -> &'static ModelRegistry {
        &BUILTIN
    }

    /// Registers a component; a later registration under an existing name
    /// replaces the earlier one.
    pub fn register(&mut self, component: Box<dyn ModelComponent>) {
        self.components.retain(|c| c.name() != component.name());
        self.components.push(component);
    }

    pub fn get(&self, name: &str) -> Option<&dyn ModelComponent> {
        self.components
            .iter()
            .find(|c| c.name() == name)
            .map(|c| c.as_ref())
    }

    pub fn names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name()).collect()
    }

    /// Splits a composite name into registered components, longest match
    /// first, at most one per family.
    pub fn parse(&self, name: &str) -> Result<Vec<&dyn ModelComponent>> {
        let mut rest = name;
        let mut parts: Vec<&dyn ModelComponent> = Vec::new();
        let mut families = BTreeSet::new();
        while !rest.is_empty() {
            let best = self
                .components
                .iter()
                .filter(|c| rest.starts_with(c.name()))
                .max_by_key(|c| c.name().len())
                .ok_or_else(|| Error::UnknownModel(name.to_string()))?;
            if !families.insert(best.family()) {
                return Err(Error::UnknownModel(name.to_string()));
            }
            parts.push(best.as_ref());
            rest = &rest[best.name().len()..];
        }
        if parts.is_empty() {
            return Err(Error::UnknownModel(name.to_string()));
        }
        parts.sort_by_key(|c| c.family());
        Ok(parts)
    }

    pub fn build(&self, name: &str, teams: &[String]) -> Result<ModelSpec> {
        let parts = self.parse(name)?;
        let mut spec = ModelSpec::empty(name);
        for part in parts {
            part.apply(teams, &mut spec);
        }
        spec.validate()?;
        Ok(spec)
    }

    fn component_nested(&self, small: &str, large: &str) -> bool {
        if small == large {
            return true;
        }
        let mut stack = vec![large.to_string()];
        let mut seen: HashMap<String, ()> = HashMap::new();
        while let Some(name) = stack.pop() {
            if seen.insert(name.clone(), ()).is_some() {
                continue;
            }
            if let Some(c) = self.get(&name) {
                for p in c.nests() {
                    if p == small {
                        return true;
                    }
                    stack.push(p.to_string());
                }
            }
        }
        false
    }

    /// Whether model `small` is a special case of model `large`: both use
    /// the same component families and each of `small`'s components is
    /// nested in the corresponding one of `large`.
    pub fn is_nested(&self, small: &str, large: &str) -> Result<bool> {
        let a = self.parse(small)?;
        let b = self.parse(large)?;
        if a.len() != b.len() {
            return Ok(false);
        }
        Ok(a.iter().zip(&b).all(|(x, y)| {
            x.family() == y.family() && self.component_nested(x.name(), y.name())
        }))
    }
}

/// Builds one of the named models (e.g. `G4S5R`) over `teams`.
pub fn make_named_model(name: &str, teams: &[String]) -> Result<ModelSpec> {
    ModelRegistry::builtin().build(name, teams)
}
