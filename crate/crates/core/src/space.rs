//! Conditional parameter spaces.
//!
//! A [`ParameterSpace`] is an ordered list of [`ParameterSpec`]s plus
//! equality-gated activation conditions. Configurations store values
//! positionally (space order); a child whose condition is not met holds
//! `None`, which is written as `nan` wherever values are rendered.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Text used for an inactive parameter in rendered output and files.
pub const INACTIVE_TEXT: &str = "nan";

/// Encoding of an inactive parameter. All active encodings are `>= 0`.
pub const INACTIVE_SENTINEL: f64 = -1.0;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("condition on `{child}`: {reason}")]
    InvalidCondition { child: String, reason: String },
    #[error("space document: {0}")]
    Document(String),
    #[error("reading space file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A concrete parameter value. Categorical and ordinal parameters are stored
/// as an index into their choice list; integers are stored raw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Choice(usize),
    Int(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Categorical { choices: Vec<String> },
    Ordinal { sequence: Vec<f64> },
    UniformInt { lower: i64, upper: i64, quantum: i64 },
}

/// Literal value as written in documents and on command lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Real(v) => write!(f, "{v}"),
            Literal::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub default: Value,
}

impl ParameterSpec {
    pub fn categorical<S: AsRef<str>>(
        name: &str,
        choices: &[S],
        default: &str,
    ) -> Result<Self, SpaceError> {
        let choices: Vec<String> = choices.iter().map(|c| c.as_ref().to_string()).collect();
        let kind = ParamKind::Categorical { choices };
        Self::with_literal(name, kind, &Literal::Text(default.to_string()))
    }

    pub fn ordinal(name: &str, sequence: &[f64], default: f64) -> Result<Self, SpaceError> {
        let kind = ParamKind::Ordinal {
            sequence: sequence.to_vec(),
        };
        Self::with_literal(name, kind, &Literal::Real(default))
    }

    pub fn uniform_int(
        name: &str,
        lower: i64,
        upper: i64,
        quantum: i64,
        default: i64,
    ) -> Result<Self, SpaceError> {
        let kind = ParamKind::UniformInt {
            lower,
            upper,
            quantum,
        };
        Self::with_literal(name, kind, &Literal::Int(default))
    }

    /// Builds a spec, checking the kind invariants and resolving the default.
    pub fn with_literal(name: &str, kind: ParamKind, default: &Literal) -> Result<Self, SpaceError> {
        let invalid = |reason: String| SpaceError::InvalidParameter {
            name: name.to_string(),
            reason,
        };
        if name.is_empty() {
            return Err(invalid("empty name".into()));
        }
        match &kind {
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(invalid("categorical choices are empty".into()));
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return Err(invalid(format!("duplicate choice `{c}`")));
                    }
                    if c == INACTIVE_TEXT {
                        return Err(invalid(format!("`{INACTIVE_TEXT}` is reserved")));
                    }
                }
            }
            ParamKind::Ordinal { sequence } => {
                if sequence.is_empty() {
                    return Err(invalid("ordinal sequence is empty".into()));
                }
                if sequence.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("ordinal sequence must be finite".into()));
                }
                for (i, v) in sequence.iter().enumerate() {
                    if sequence[..i].contains(v) {
                        return Err(invalid(format!("duplicate sequence entry {v}")));
                    }
                }
            }
            ParamKind::UniformInt {
                lower,
                upper,
                quantum,
            } => {
                if lower > upper {
                    return Err(invalid(format!("lower {lower} exceeds upper {upper}")));
                }
                if *quantum < 1 {
                    return Err(invalid(format!("quantum {quantum} must be >= 1")));
                }
                if *lower < 0 {
                    // Negative integers would collide with the inactive sentinel.
                    return Err(invalid(format!("lower {lower} must be >= 0")));
                }
            }
        }
        let mut spec = ParameterSpec {
            name: name.to_string(),
            kind,
            default: Value::Int(0),
        };
        spec.default = spec
            .parse_literal(default)
            .ok_or_else(|| invalid(format!("default `{default}` is not a legal value")))?;
        Ok(spec)
    }

    /// Number of distinct legal values.
    pub fn cardinality(&self) -> u128 {
        match &self.kind {
            ParamKind::Categorical { choices } => choices.len() as u128,
            ParamKind::Ordinal { sequence } => sequence.len() as u128,
            ParamKind::UniformInt {
                lower,
                upper,
                quantum,
            } => ((upper - lower) / quantum) as u128 + 1,
        }
    }

    /// The `k`-th legal value in natural order.
    pub fn nth_value(&self, k: u128) -> Value {
        match &self.kind {
            ParamKind::Categorical { .. } | ParamKind::Ordinal { .. } => Value::Choice(k as usize),
            ParamKind::UniformInt { lower, quantum, .. } => Value::Int(lower + k as i64 * quantum),
        }
    }

    pub fn check(&self, value: &Value) -> Result<(), Rule> {
        match (&self.kind, value) {
            (ParamKind::Categorical { choices }, Value::Choice(i)) => {
                if *i < choices.len() {
                    Ok(())
                } else {
                    Err(Rule::ChoiceOutOfRange(*i))
                }
            }
            (ParamKind::Ordinal { sequence }, Value::Choice(i)) => {
                if *i < sequence.len() {
                    Ok(())
                } else {
                    Err(Rule::ChoiceOutOfRange(*i))
                }
            }
            (
                ParamKind::UniformInt {
                    lower,
                    upper,
                    quantum,
                },
                Value::Int(v),
            ) => {
                if v < lower || v > upper {
                    Err(Rule::OutOfBounds {
                        value: *v,
                        lower: *lower,
                        upper: *upper,
                    })
                } else if (v - lower) % quantum != 0 {
                    Err(Rule::Quantization {
                        value: *v,
                        lower: *lower,
                        quantum: *quantum,
                    })
                } else {
                    Ok(())
                }
            }
            _ => Err(Rule::KindMismatch),
        }
    }

    pub fn parse_literal(&self, lit: &Literal) -> Option<Value> {
        let value = match (&self.kind, lit) {
            (ParamKind::Categorical { choices }, Literal::Text(s)) => {
                Value::Choice(choices.iter().position(|c| c == s)?)
            }
            (ParamKind::Categorical { .. }, other) => {
                return self.parse_literal(&Literal::Text(other.to_string()))
            }
            (ParamKind::Ordinal { sequence }, lit) => {
                let x = match lit {
                    Literal::Int(v) => *v as f64,
                    Literal::Real(v) => *v,
                    Literal::Text(s) => s.trim().parse::<f64>().ok()?,
                };
                Value::Choice(sequence.iter().position(|v| *v == x)?)
            }
            (ParamKind::UniformInt { .. }, lit) => match lit {
                Literal::Int(v) => Value::Int(*v),
                Literal::Real(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Value::Int(*v as i64),
                Literal::Real(_) => return None,
                Literal::Text(s) => Value::Int(s.trim().parse::<i64>().ok()?),
            },
        };
        self.check(&value).ok().map(|_| value)
    }

    /// Parses the textual form produced by [`ParameterSpec::render`].
    /// `nan` yields `Some(None)`.
    pub fn parse_text(&self, text: &str) -> Option<Option<Value>> {
        if text == INACTIVE_TEXT {
            return Some(None);
        }
        self.parse_literal(&Literal::Text(text.to_string())).map(Some)
    }

    pub fn render(&self, value: Option<&Value>) -> String {
        match (value, &self.kind) {
            (None, _) => INACTIVE_TEXT.to_string(),
            (Some(Value::Choice(i)), ParamKind::Categorical { choices }) => choices
                .get(*i)
                .cloned()
                .unwrap_or_else(|| format!("<choice {i}>")),
            (Some(Value::Choice(i)), ParamKind::Ordinal { sequence }) => sequence
                .get(*i)
                .map(|v| format!("{v}"))
                .unwrap_or_else(|| format!("<choice {i}>")),
            (Some(Value::Int(v)), _) => v.to_string(),
            (Some(Value::Choice(i)), _) => format!("<choice {i}>"),
        }
    }

    fn encode(&self, value: Option<&Value>) -> f64 {
        match value {
            None => INACTIVE_SENTINEL,
            Some(Value::Choice(i)) => *i as f64,
            Some(Value::Int(v)) => *v as f64,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        let k = rng.random_range(0..self.cardinality());
        self.nth_value(k)
    }
}

/// Activation condition: `child` is active iff `parent` currently equals `equals`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub child: String,
    pub parent: String,
    pub equals: Value,
}

/// Which rule a configuration broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    UnknownParameter,
    MissingParameter,
    Unparseable(String),
    Arity { expected: usize, found: usize },
    MustBeInactive,
    MustBeActive,
    KindMismatch,
    ChoiceOutOfRange(usize),
    OutOfBounds { value: i64, lower: i64, upper: i64 },
    Quantization { value: i64, lower: i64, quantum: i64 },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::UnknownParameter => f.write_str("unknown parameter"),
            Rule::MissingParameter => f.write_str("missing parameter"),
            Rule::Unparseable(s) => write!(f, "value `{s}` is not legal"),
            Rule::Arity { expected, found } => {
                write!(f, "configuration has {found} values, space has {expected}")
            }
            Rule::MustBeInactive => f.write_str("must be inactive (condition not met)"),
            Rule::MustBeActive => f.write_str("must be active (condition met)"),
            Rule::KindMismatch => f.write_str("value kind does not match parameter type"),
            Rule::ChoiceOutOfRange(i) => write!(f, "choice index {i} out of range"),
            Rule::OutOfBounds {
                value,
                lower,
                upper,
            } => write!(f, "{value} outside [{lower}, {upper}]"),
            Rule::Quantization {
                value,
                lower,
                quantum,
            } => write!(
                f,
                "quantization: {value} is not {lower} + k*{quantum}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parameter `{parameter}`: {rule}")]
pub struct Violation {
    pub parameter: String,
    pub rule: Rule,
}

/// One value (or `None` for inactive) per parameter, in space order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(Vec<Option<Value>>);

impl Configuration {
    pub fn new(values: Vec<Option<Value>>) -> Self {
        Configuration(values)
    }

    pub fn values(&self) -> &[Option<Value>] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Option<&Value> {
        self.0.get(index).and_then(|v| v.as_ref())
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.get(index).is_some()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An immutable, validated parameter space.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    params: Vec<ParameterSpec>,
    conditions: Vec<Condition>,
    by_name: HashMap<String, usize>,
    gate: Vec<Option<(usize, Value)>>,
    // parents before children
    order: Vec<usize>,
}

impl ParameterSpace {
    pub fn new(params: Vec<ParameterSpec>, conditions: Vec<Condition>) -> Result<Self, SpaceError> {
        let mut by_name = HashMap::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            if by_name.insert(p.name.clone(), i).is_some() {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        let mut gate: Vec<Option<(usize, Value)>> = vec![None; params.len()];
        for c in &conditions {
            let invalid = |reason: String| SpaceError::InvalidCondition {
                child: c.child.clone(),
                reason,
            };
            let child = *by_name
                .get(&c.child)
                .ok_or_else(|| invalid("child is not a parameter".into()))?;
            let parent = *by_name
                .get(&c.parent)
                .ok_or_else(|| invalid(format!("parent `{}` is not a parameter", c.parent)))?;
            if child == parent {
                return Err(invalid("child and parent are the same parameter".into()));
            }
            if gate[child].is_some() {
                return Err(invalid("parameter already has a condition".into()));
            }
            params[parent]
                .check(&c.equals)
                .map_err(|r| invalid(format!("required value is illegal for `{}`: {r}", c.parent)))?;
            gate[child] = Some((parent, c.equals));
        }

        // Each child has at most one parent, so following parent links either
        // reaches a root or loops.
        let mut depth = vec![0usize; params.len()];
        for start in 0..params.len() {
            let mut seen = 0usize;
            let mut cur = start;
            while let Some((parent, _)) = gate[cur] {
                seen += 1;
                if seen > params.len() {
                    return Err(SpaceError::InvalidCondition {
                        child: params[start].name.clone(),
                        reason: "conditions form a cycle".into(),
                    });
                }
                cur = parent;
            }
            depth[start] = seen;
        }
        let mut order: Vec<usize> = (0..params.len()).collect();
        order.sort_by_key(|&i| (depth[i], i));

        Ok(ParameterSpace {
            params,
            conditions,
            by_name,
            gate,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    fn active_given(&self, index: usize, values: &[Option<Value>]) -> bool {
        match self.gate[index] {
            None => true,
            Some((parent, required)) => values[parent] == Some(required),
        }
    }

    /// Defaults of every parameter, with children deactivated where their
    /// condition fails under the defaults.
    pub fn default_configuration(&self) -> Configuration {
        let mut values = vec![None; self.params.len()];
        for &i in &self.order {
            if self.active_given(i, &values) {
                values[i] = Some(self.params[i].default);
            }
        }
        Configuration(values)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut values = vec![None; self.params.len()];
        for &i in &self.order {
            if self.active_given(i, &values) {
                values[i] = Some(self.params[i].sample(rng));
            }
        }
        Configuration(values)
    }

    pub fn validate(&self, cfg: &Configuration) -> Result<(), Violation> {
        if cfg.len() != self.params.len() {
            let parameter = if cfg.len() < self.params.len() {
                self.params[cfg.len()].name.clone()
            } else {
                format!("#{}", self.params.len())
            };
            return Err(Violation {
                parameter,
                rule: Rule::Arity {
                    expected: self.params.len(),
                    found: cfg.len(),
                },
            });
        }
        for (i, spec) in self.params.iter().enumerate() {
            let violation = |rule| Violation {
                parameter: spec.name.clone(),
                rule,
            };
            let should_be_active = self.active_given(i, cfg.values());
            match (&cfg.values()[i], should_be_active) {
                (Some(_), false) => return Err(violation(Rule::MustBeInactive)),
                (None, true) => return Err(violation(Rule::MustBeActive)),
                (Some(v), true) => spec.check(v).map_err(violation)?,
                (None, false) => {}
            }
        }
        Ok(())
    }

    /// Builds a configuration from `(name, text)` pairs. Every parameter must
    /// appear exactly once; `nan` marks an inactive parameter. The result is
    /// not validated against the conditions.
    pub fn assign<N: AsRef<str>, T: AsRef<str>>(
        &self,
        pairs: &[(N, T)],
    ) -> Result<Configuration, Violation> {
        let mut values: Vec<Option<Option<Value>>> = vec![None; self.params.len()];
        for (name, text) in pairs {
            let (name, text) = (name.as_ref(), text.as_ref());
            let violation = |rule| Violation {
                parameter: name.to_string(),
                rule,
            };
            let i = self
                .index_of(name)
                .ok_or_else(|| violation(Rule::UnknownParameter))?;
            let parsed = self.params[i]
                .parse_text(text)
                .ok_or_else(|| violation(Rule::Unparseable(text.to_string())))?;
            values[i] = Some(parsed);
        }
        let mut out = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            out.push(v.ok_or_else(|| Violation {
                parameter: self.params[i].name.clone(),
                rule: Rule::MissingParameter,
            })?);
        }
        Ok(Configuration(out))
    }

    pub fn encode(&self, cfg: &Configuration) -> Result<Vec<f64>, Violation> {
        self.validate(cfg)?;
        Ok(self.encode_unchecked(cfg))
    }

    /// Encoding of a configuration already known to be valid.
    pub(crate) fn encode_unchecked(&self, cfg: &Configuration) -> Vec<f64> {
        self.params
            .iter()
            .zip(cfg.values())
            .map(|(spec, v)| spec.encode(v.as_ref()))
            .collect()
    }

    pub fn render_value(&self, index: usize, cfg: &Configuration) -> String {
        self.params[index].render(cfg.get(index))
    }

    /// `name=value` pairs separated by spaces.
    pub fn display(&self, cfg: &Configuration) -> String {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{}={}", p.name, self.render_value(i, cfg)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Number of distinct valid configurations, saturating at `u128::MAX`.
    pub fn cardinality(&self) -> u128 {
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.params.len()];
        for (child, gate) in self.gate.iter().enumerate() {
            if let Some((parent, _)) = gate {
                children[*parent].push(child);
            }
        }
        (0..self.params.len())
            .filter(|&i| self.gate[i].is_none())
            .fold(1u128, |acc, root| {
                acc.saturating_mul(self.subtree_count(root, &children))
            })
    }

    fn subtree_count(&self, index: usize, children: &[Vec<usize>]) -> u128 {
        // Values that gate no child contribute one configuration each.
        let mut gated: Vec<(Value, u128)> = Vec::new();
        for &c in &children[index] {
            let (_, required) = self.gate[c].expect("child has a gate");
            let n = self.subtree_count(c, children);
            match gated.iter_mut().find(|(v, _)| *v == required) {
                Some((_, product)) => *product = product.saturating_mul(n),
                None => gated.push((required, n)),
            }
        }
        let plain = self.params[index].cardinality() - gated.len() as u128;
        gated
            .iter()
            .fold(plain, |acc, (_, n)| acc.saturating_add(*n))
    }

    /// Every valid configuration, or `None` if there are more than `limit`.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<Configuration>> {
        if self.cardinality() > limit as u128 {
            return None;
        }
        let mut out = Vec::new();
        let mut values = vec![None; self.params.len()];
        self.enumerate_from(0, &mut values, &mut out);
        Some(out)
    }

    fn enumerate_from(
        &self,
        pos: usize,
        values: &mut Vec<Option<Value>>,
        out: &mut Vec<Configuration>,
    ) {
        let Some(&i) = self.order.get(pos) else {
            out.push(Configuration(values.clone()));
            return;
        };
        if self.active_given(i, values) {
            for k in 0..self.params[i].cardinality() {
                values[i] = Some(self.params[i].nth_value(k));
                self.enumerate_from(pos + 1, values, out);
            }
            values[i] = None;
        } else {
            self.enumerate_from(pos + 1, values, out);
        }
    }

    pub fn from_document(doc: SpaceDocument) -> Result<Self, SpaceError> {
        let mut params = Vec::with_capacity(doc.parameters.len());
        for p in &doc.parameters {
            let kind = match &p.kind {
                ParamKindDoc::Categorical { choices } => ParamKind::Categorical {
                    choices: choices.clone(),
                },
                ParamKindDoc::Ordinal { sequence } => ParamKind::Ordinal {
                    sequence: sequence.clone(),
                },
                ParamKindDoc::UniformInt {
                    lower,
                    upper,
                    quantum,
                } => ParamKind::UniformInt {
                    lower: *lower,
                    upper: *upper,
                    quantum: *quantum,
                },
            };
            params.push(ParameterSpec::with_literal(&p.name, kind, &p.default)?);
        }
        let mut conditions = Vec::with_capacity(doc.conditions.len());
        for c in &doc.conditions {
            let parent = params.iter().find(|p| p.name == c.parent).ok_or_else(|| {
                SpaceError::InvalidCondition {
                    child: c.child.clone(),
                    reason: format!("parent `{}` is not a parameter", c.parent),
                }
            })?;
            let equals = parent
                .parse_literal(&c.equals)
                .ok_or_else(|| SpaceError::InvalidCondition {
                    child: c.child.clone(),
                    reason: format!("`{}` is not a legal value of `{}`", c.equals, c.parent),
                })?;
            conditions.push(Condition {
                child: c.child.clone(),
                parent: c.parent.clone(),
                equals,
            });
        }
        ParameterSpace::new(params, conditions)
    }

    pub fn to_document(&self) -> SpaceDocument {
        let parameters = self
            .params
            .iter()
            .map(|p| {
                let kind = match &p.kind {
                    ParamKind::Categorical { choices } => ParamKindDoc::Categorical {
                        choices: choices.clone(),
                    },
                    ParamKind::Ordinal { sequence } => ParamKindDoc::Ordinal {
                        sequence: sequence.clone(),
                    },
                    ParamKind::UniformInt {
                        lower,
                        upper,
                        quantum,
                    } => ParamKindDoc::UniformInt {
                        lower: *lower,
                        upper: *upper,
                        quantum: *quantum,
                    },
                };
                ParameterDoc {
                    name: p.name.clone(),
                    kind,
                    default: literal_of(p, &p.default),
                }
            })
            .collect();
        let conditions = self
            .conditions
            .iter()
            .map(|c| {
                let parent = &self.params[self.by_name[&c.parent]];
                ConditionDoc {
                    child: c.child.clone(),
                    parent: c.parent.clone(),
                    equals: literal_of(parent, &c.equals),
                }
            })
            .collect();
        SpaceDocument {
            parameters,
            conditions,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SpaceError> {
        let doc: SpaceDocument =
            toml::from_str(text).map_err(|e| SpaceError::Document(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_json_str(text: &str) -> Result<Self, SpaceError> {
        let doc: SpaceDocument =
            serde_json::from_str(text).map_err(|e| SpaceError::Document(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Loads a `.json` or TOML (any other extension) space document.
    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpaceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }
}

fn literal_of(spec: &ParameterSpec, value: &Value) -> Literal {
    match (&spec.kind, value) {
        (ParamKind::Categorical { choices }, Value::Choice(i)) => Literal::Text(choices[*i].clone()),
        (ParamKind::Ordinal { sequence }, Value::Choice(i)) => {
            let v = sequence[*i];
            if v.fract() == 0.0 && v.abs() < 9.0e15 {
                Literal::Int(v as i64)
            } else {
                Literal::Real(v)
            }
        }
        (_, Value::Int(v)) => Literal::Int(*v),
        (_, Value::Choice(i)) => Literal::Int(*i as i64),
    }
}

/// Serialized form of a space: `parameters` and `conditions`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceDocument {
    pub parameters: Vec<ParameterDoc>,
    #[serde(default)]
    pub conditions: Vec<ConditionDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterDoc {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKindDoc,
    pub default: Literal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamKindDoc {
    Categorical {
        choices: Vec<String>,
    },
    Ordinal {
        sequence: Vec<f64>,
    },
    UniformInt {
        lower: i64,
        upper: i64,
        #[serde(default = "unit_quantum")]
        quantum: i64,
    },
}

fn unit_quantum() -> i64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionDoc {
    pub child: String,
    pub parent: String,
    pub equals: Literal,
}

/// Seeded source of configurations.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, space: &ParameterSpace) -> Configuration {
        space.sample(&mut self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::openmc_space;

    #[test]
    fn default_openmc_configuration_is_valid() {
        let space = openmc_space();
        let cfg = space.default_configuration();
        assert_eq!(space.validate(&cfg), Ok(()));
        assert_eq!(
            space.display(&cfg),
            "P0=openmc P1=1000000 P2=4000 P3=20000 P4=8 P5=1 P6=threads"
        );
    }

    #[test]
    fn active_child_under_queueless_is_rejected() {
        let space = openmc_space();
        let cfg = space
            .assign(&[
                ("P0", "openmc-queueless"),
                ("P1", "1000000"),
                ("P2", "4000"),
                ("P3", "20000"),
                ("P4", "8"),
                ("P5", "1"),
                ("P6", "threads"),
            ])
            .unwrap();
        let err = space.validate(&cfg).unwrap_err();
        assert_eq!(err.parameter, "P3");
        assert_eq!(err.rule, Rule::MustBeInactive);
    }

    #[test]
    fn off_lattice_integer_is_rejected() {
        let space = openmc_space();
        let mut values = space.default_configuration().values().to_vec();
        values[1] = Some(Value::Int(100_500));
        let err = space.validate(&Configuration::new(values)).unwrap_err();
        assert_eq!(err.parameter, "P1");
        assert!(matches!(err.rule, Rule::Quantization { .. }), "{err}");
    }

    #[test]
    fn unknown_and_missing_names() {
        let space = openmc_space();
        let err = space.assign(&[("P9", "1")]).unwrap_err();
        assert_eq!(err.rule, Rule::UnknownParameter);
        let err = space.assign(&[("P0", "openmc")]).unwrap_err();
        assert_eq!(err.rule, Rule::MissingParameter);
        assert_eq!(err.parameter, "P1");
        let short = Configuration::new(vec![Some(Value::Choice(0))]);
        assert!(matches!(
            space.validate(&short).unwrap_err().rule,
            Rule::Arity { .. }
        ));
    }

    #[test]
    fn encoding_conventions() {
        let space = openmc_space();
        let cfg = space
            .assign(&[
                ("P0", "openmc-queueless"),
                ("P1", "100000"),
                ("P2", "4000"),
                ("P3", "nan"),
                ("P4", "8"),
                ("P5", "2"),
                ("P6", "cores"),
            ])
            .unwrap();
        let x = space.encode(&cfg).unwrap();
        assert_eq!(x, vec![1.0, 100000.0, 4000.0, -1.0, 8.0, 1.0, 0.0]);
        let x = space.encode(&space.default_configuration()).unwrap();
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn single_choice_space_always_samples_it() {
        let p = ParameterSpec::categorical("only", &["x"], "x").unwrap();
        let space = ParameterSpace::new(vec![p], vec![]).unwrap();
        let mut s = Sampler::new(3);
        for _ in 0..20 {
            let cfg = s.sample(&space);
            assert_eq!(space.display(&cfg), "only=x");
        }
        assert_eq!(space.cardinality(), 1);
    }

    #[test]
    fn quantized_sampling_stays_on_lattice_below_upper() {
        // upper is not on the lattice: 0, 7, 14 are the only legal values.
        let p = ParameterSpec::uniform_int("n", 0, 20, 7, 7).unwrap();
        let space = ParameterSpace::new(vec![p], vec![]).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        let mut s = Sampler::new(11);
        for _ in 0..500 {
            if let Some(Value::Int(v)) = s.sample(&space).get(0) {
                seen.insert(*v);
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, 7, 14]);
    }

    #[test]
    fn spec_invariants_are_enforced() {
        assert!(ParameterSpec::categorical::<&str>("c", &[], "a").is_err());
        assert!(ParameterSpec::categorical("c", &["a", "a"], "a").is_err());
        assert!(ParameterSpec::categorical("c", &["a", "b"], "z").is_err());
        assert!(ParameterSpec::uniform_int("i", 0, 10, 3, 4).is_err());
        assert!(ParameterSpec::uniform_int("i", 0, 10, 0, 0).is_err());
        assert!(ParameterSpec::uniform_int("i", 5, 1, 1, 5).is_err());
        assert!(ParameterSpec::ordinal("o", &[], 1.0).is_err());
        assert!(ParameterSpec::ordinal("o", &[1.0, 2.0], 3.0).is_err());
    }

    #[test]
    fn condition_invariants_are_enforced() {
        let a = ParameterSpec::categorical("a", &["x", "y"], "x").unwrap();
        let b = ParameterSpec::categorical("b", &["x", "y"], "x").unwrap();
        let cond = |child: &str, parent: &str| Condition {
            child: child.into(),
            parent: parent.into(),
            equals: Value::Choice(0),
        };
        let mk = |conds| ParameterSpace::new(vec![a.clone(), b.clone()], conds);
        assert!(mk(vec![cond("a", "a")]).is_err());
        assert!(mk(vec![cond("a", "zz")]).is_err());
        assert!(mk(vec![cond("a", "b"), cond("b", "a")]).is_err());
        assert!(mk(vec![cond("a", "b"), cond("a", "b")]).is_err());
        assert!(mk(vec![Condition {
            equals: Value::Choice(5),
            ..cond("a", "b")
        }])
        .is_err());
        assert!(mk(vec![cond("a", "b")]).is_ok());
    }

    #[test]
    fn chained_conditions_deactivate_grandchildren() {
        let a = ParameterSpec::categorical("a", &["on", "off"], "on").unwrap();
        let b = ParameterSpec::categorical("b", &["on", "off"], "on").unwrap();
        let c = ParameterSpec::uniform_int("c", 0, 3, 1, 0).unwrap();
        // Declared child-first to exercise ordering.
        let space = ParameterSpace::new(
            vec![c, b, a],
            vec![
                Condition {
                    child: "c".into(),
                    parent: "b".into(),
                    equals: Value::Choice(0),
                },
                Condition {
                    child: "b".into(),
                    parent: "a".into(),
                    equals: Value::Choice(0),
                },
            ],
        )
        .unwrap();
        // a=off: 1; a=on,b=off: 1; a=on,b=on: 4
        assert_eq!(space.cardinality(), 6);
        let all = space.enumerate(100).unwrap();
        assert_eq!(all.len(), 6);
        for cfg in &all {
            space.validate(cfg).unwrap();
        }
        let mut s = Sampler::new(1);
        for _ in 0..200 {
            let cfg = s.sample(&space);
            space.validate(&cfg).unwrap();
        }
    }

    #[test]
    fn document_roundtrip_through_toml() {
        let text = r#"
[[parameters]]
name = "mode"
type = "categorical"
choices = ["queued", "queueless"]
default = "queued"

[[parameters]]
name = "threshold"
type = "uniform_int"
lower = 0
upper = 1000
quantum = 100
default = 200

[[parameters]]
name = "tasks"
type = "ordinal"
sequence = [1, 2]
default = 1

[[conditions]]
child = "threshold"
parent = "mode"
equals = "queued"
"#;
        let space = ParameterSpace::from_toml_str(text).unwrap();
        assert_eq!(space.len(), 3);
        assert_eq!(space.cardinality(), 11 * 2 + 2);
        let again = toml::to_string(&space.to_document()).unwrap();
        let space2 = ParameterSpace::from_toml_str(&again).unwrap();
        assert_eq!(space.params(), space2.params());
        assert_eq!(space.conditions(), space2.conditions());
    }

    #[test]
    fn document_errors_are_reported() {
        let bad = r#"
[[parameters]]
name = "x"
type = "uniform_int"
lower = 0
upper = 10
default = 11
"#;
        assert!(ParameterSpace::from_toml_str(bad).is_err());
        let bad_type = r#"
[[parameters]]
name = "x"
type = "float"
default = 1
"#;
        assert!(ParameterSpace::from_toml_str(bad_type).is_err());
    }
}
