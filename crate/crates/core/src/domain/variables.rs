use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on the number of enumerated joint states (2^22).
pub const DEFAULT_STATE_CAP: usize = 1 << 22;

/// A discrete variable with a finite, ordered domain of labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, domain: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Variable {
            name: name.into(),
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    /// A variable with domain `["0", "1"]`.
    pub fn binary(name: impl Into<String>) -> Self {
        Variable::new(name, ["0", "1"])
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.domain.iter().position(|v| v == label)
    }
}

/// Ordered collection of variables: the universe over which joints are enumerated.
///
/// States are encoded as one value index per variable and enumerated in
/// row-major order, the first variable varying slowest.
#[derive(Debug, Clone)]
pub struct VariableSet {
    vars: Vec<Variable>,
    index: HashMap<String, usize>,
}

impl PartialEq for VariableSet {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars
    }
}

impl VariableSet {
    pub fn new(vars: Vec<Variable>) -> Result<Self> {
        let mut index = HashMap::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            if v.name.is_empty() {
                return Err(Error::InvalidVariableSet("empty variable name".into()));
            }
            if v.domain.is_empty() {
                return Err(Error::InvalidVariableSet(format!("variable `{}` has an empty domain", v.name)));
            }
            for (a, label) in v.domain.iter().enumerate() {
                if v.domain[..a].contains(label) {
                    return Err(Error::InvalidVariableSet(format!(
                        "variable `{}` repeats domain value `{label}`",
                        v.name
                    )));
                }
            }
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::InvalidVariableSet(format!("duplicate variable `{}`", v.name)));
            }
        }
        Ok(VariableSet { vars, index })
    }

    /// Binary variables with domains `["0", "1"]`.
    pub fn binary<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        VariableSet::new(names.iter().map(|n| Variable::binary(n.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn get(&self, i: usize) -> &Variable {
        &self.vars[i]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn domain_size(&self, i: usize) -> usize {
        self.vars[i].domain.len()
    }

    /// Number of joint states, or `None` if it does not fit in `u128`.
    pub fn state_count_u128(&self) -> Option<u128> {
        self.vars
            .iter()
            .try_fold(1u128, |acc, v| acc.checked_mul(v.domain.len() as u128))
    }

    /// Number of joint states, checked against `cap`.
    pub fn state_count(&self, cap: usize) -> Result<usize> {
        match self.state_count_u128() {
            Some(n) if n <= cap as u128 => Ok(n as usize),
            Some(n) => Err(Error::StateSpaceTooLarge { size: n, cap }),
            None => Err(Error::StateSpaceTooLarge { size: u128::MAX, cap }),
        }
    }

    /// The sub-universe over the named variables, in the order given.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<VariableSet> {
        let mut vars = Vec::with_capacity(names.len());
        for n in names {
            vars.push(self.vars[self.index_of(n.as_ref())?].clone());
        }
        VariableSet::new(vars)
    }

    /// The universe without the named variable.
    pub fn without(&self, name: &str) -> Result<VariableSet> {
        self.index_of(name)?;
        VariableSet::new(self.vars.iter().filter(|v| v.name != name).cloned().collect())
    }

    /// Row-major position of a full state.
    pub fn state_index(&self, state: &[usize]) -> usize {
        debug_assert_eq!(state.len(), self.vars.len());
        state
            .iter()
            .zip(&self.vars)
            .fold(0, |acc, (&x, v)| acc * v.domain.len() + x)
    }

    /// Inverse of [`state_index`](Self::state_index).
    pub fn state_at(&self, mut index: usize) -> Vec<usize> {
        let mut state = vec![0; self.vars.len()];
        for (slot, v) in state.iter_mut().zip(&self.vars).rev() {
            let d = v.domain.len();
            *slot = index % d;
            index /= d;
        }
        state
    }

    /// Enumerate all full states in row-major order.
    pub fn states(&self, cap: usize) -> Result<StateIter> {
        let total = self.state_count(cap)?;
        Ok(StateIter {
            sizes: self.vars.iter().map(|v| v.domain.len()).collect(),
            next: Some(vec![0; self.vars.len()]),
            remaining: total,
        })
    }

    /// Labels of a full state, for display.
    pub fn labels(&self, state: &[usize]) -> Vec<&str> {
        state
            .iter()
            .zip(&self.vars)
            .map(|(&x, v)| v.domain[x].as_str())
            .collect()
    }
}

impl Serialize for VariableSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.vars.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VariableSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let vars = Vec::<Variable>::deserialize(deserializer)?;
        VariableSet::new(vars).map_err(serde::de::Error::custom)
    }
}

/// Row-major iterator over full states.
#[derive(Debug, Clone)]
pub struct StateIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
    remaining: usize,
}

impl Iterator for StateIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        let current = self.next.take()?;
        self.remaining -= 1;
        if self.remaining > 0 {
            let mut succ = current.clone();
            for i in (0..succ.len()).rev() {
                succ[i] += 1;
                if succ[i] < self.sizes[i] {
                    break;
                }
                succ[i] = 0;
            }
            self.next = Some(succ);
        }
        Some(current)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for StateIter {}

/// Enumerate the states of `vars` under the default cap.
pub fn enumerate_states(vars: &VariableSet) -> Result<StateIter> {
    vars.states(DEFAULT_STATE_CAP)
}

/// Values for a (possibly partial) scope, written `var=value;var=value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Assignment {
    entries: Vec<(String, String)>,
}

impl Assignment {
    pub fn new(entries: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>) -> Self {
        Assignment {
            entries: entries.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn single(name: impl Into<String>, value: impl Into<String>) -> Self {
        Assignment {
            entries: vec![(name.into(), value.into())],
        }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// Resolve labels to `(variable index, value index)` pairs.
    pub fn resolve(&self, vars: &VariableSet) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.entries.len());
        for (name, label) in &self.entries {
            let i = vars.index_of(name)?;
            let x = vars.get(i).value_index(label).ok_or_else(|| {
                Error::InvalidAssignment(format!("`{label}` is not in the domain of `{name}`"))
            })?;
            if out.iter().any(|&(j, _)| j == i) {
                return Err(Error::InvalidAssignment(format!("variable `{name}` assigned twice")));
            }
            out.push((i, x));
        }
        Ok(out)
    }

    /// Build the full state for `vars`; the assignment must cover every variable.
    pub fn to_state(&self, vars: &VariableSet) -> Result<Vec<usize>> {
        let resolved = self.resolve(vars)?;
        let mut state = vec![usize::MAX; vars.len()];
        for (i, x) in resolved {
            state[i] = x;
        }
        if let Some(i) = state.iter().position(|&x| x == usize::MAX) {
            return Err(Error::InvalidAssignment(format!(
                "variable `{}` is not assigned",
                vars.get(i).name
            )));
        }
        Ok(state)
    }

    /// Assignment naming every variable of `vars` at `state`.
    pub fn from_state(vars: &VariableSet, state: &[usize]) -> Self {
        Assignment {
            entries: vars
                .variables()
                .iter()
                .zip(state)
                .map(|(v, &x)| (v.name.clone(), v.domain[x].clone()))
                .collect(),
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Assignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Assignment::default());
        }
        let mut entries = Vec::new();
        for part in s.split(';') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidAssignment(format!("expected `var=value`, got `{part}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::InvalidAssignment(format!("expected `var=value`, got `{part}`")));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Assignment { entries })
    }
}

impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
