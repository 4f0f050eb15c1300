//! Feature-expression grammar: AST, canonical rendering, space
//! enumeration, and compilation into a deduplicated evaluation plan.
//!
//! A feature expression has the shape
//!
//! ```text
//! ACT( OUT( SEL )[ INN( SIG(a/D) ) ] )
//! ```
//!
//! where `ACT` is an activator (`identity` or `abs`), `OUT` and `INN` are
//! NaN-ignoring aggregators, `SEL` selects a cycle group (`Cycle(a/b)`) or
//! the difference of two groups (`Cycle(a/b) - Cycle(c/d)` with `b = d`,
//! `a < c`), and `SIG(a/D)` names the `a`-th of `D` contiguous segments of
//! a resampled intra-cycle signal, e.g.
//! `identity(nanmax(Cycle(6/7))[nanvar(VQ_d(1/4))])`.
//!
//! Rendering is canonical (single spaces around the selector `-`), and
//! `parse(render(e)) == e` for every valid expression. Enumeration order
//! is frozen because the column order of persisted feature matrices is
//! defined by it.

mod parse;
mod plan;

pub use parse::parse;
pub use plan::{compile, DescriptorNode, EvalPlan, FeatureNode, GroupAggNode};

use std::fmt;

use crate::error::{Error, Result};

/// Outer transform applied to the aggregated value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activator {
    Identity,
    Abs,
}

impl Activator {
    pub const ALL: [Activator; 2] = [Activator::Identity, Activator::Abs];

    pub fn token(self) -> &'static str {
        match self {
            Activator::Identity => "identity",
            Activator::Abs => "abs",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activator::Identity => x,
            Activator::Abs => x.abs(),
        }
    }
}

/// NaN-ignoring statistical aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggKind {
    NanMin,
    NanMax,
    NanMean,
    NanVar,
    NanSkew,
    NanKurtosis,
}

impl AggKind {
    /// Canonical ordering used by space enumeration.
    pub const ALL: [AggKind; 6] = [
        AggKind::NanMin,
        AggKind::NanMax,
        AggKind::NanMean,
        AggKind::NanVar,
        AggKind::NanSkew,
        AggKind::NanKurtosis,
    ];

    pub fn token(self) -> &'static str {
        match self {
            AggKind::NanMin => "nanmin",
            AggKind::NanMax => "nanmax",
            AggKind::NanMean => "nanmean",
            AggKind::NanVar => "nanvar",
            AggKind::NanSkew => "nanskew",
            AggKind::NanKurtosis => "nankurtosis",
        }
    }
}

/// Charge / discharge phase of a cycle, rendered as the `_c` / `_d`
/// suffix of signal tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Charge, Direction::Discharge];

    pub fn suffix(self) -> char {
        match self {
            Direction::Charge => 'c',
            Direction::Discharge => 'd',
        }
    }
}

/// Intra-cycle signal family (direction chosen separately).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalKind {
    /// Voltage interpolated on a uniform capacity grid.
    Vq,
    /// Capacity interpolated on a uniform voltage grid.
    Qv,
    /// Pairwise-difference dV/dQ series.
    DvDq,
    /// Current on a uniform time grid.
    I,
    /// Voltage on a uniform time grid.
    V,
    /// Cumulative energy on a uniform time grid.
    E,
    /// Power on a uniform time grid.
    W,
}

impl SignalKind {
    /// Canonical ordering used by space enumeration.
    pub const ALL: [SignalKind; 7] = [
        SignalKind::Vq,
        SignalKind::Qv,
        SignalKind::DvDq,
        SignalKind::I,
        SignalKind::V,
        SignalKind::E,
        SignalKind::W,
    ];

    pub fn stem(self) -> &'static str {
        match self {
            SignalKind::Vq => "VQ",
            SignalKind::Qv => "QV",
            SignalKind::DvDq => "dVdQ",
            SignalKind::I => "I",
            SignalKind::V => "V",
            SignalKind::E => "E",
            SignalKind::W => "W",
        }
    }
}

/// One of `total` contiguous slices of a resampled signal (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub index: u32,
    pub total: u32,
}

impl Segment {
    pub fn validate(&self) -> Result<()> {
        if self.total < 1 || self.index < 1 || self.index > self.total {
            return Err(Error::Validation(format!(
                "segment index {}/{} out of range",
                self.index, self.total
            )));
        }
        Ok(())
    }
}

/// Cycle-group selector: a single group or the difference of two groups
/// sharing one denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CycleSelector {
    Single { index: u32, total: u32 },
    Diff { first: u32, second: u32, total: u32 },
}

impl CycleSelector {
    pub fn total(&self) -> u32 {
        match *self {
            CycleSelector::Single { total, .. } => total,
            CycleSelector::Diff { total, .. } => total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CycleSelector::Single { index, total } => {
                if total < 1 || index < 1 || index > total {
                    return Err(Error::Validation(format!(
                        "cycle group {}/{} out of range",
                        index, total
                    )));
                }
            }
            CycleSelector::Diff {
                first,
                second,
                total,
            } => {
                if total < 1 || first < 1 || second < 1 || first > total || second > total {
                    return Err(Error::Validation(format!(
                        "cycle groups {}/{} - {}/{} out of range",
                        first, total, second, total
                    )));
                }
                if first >= second {
                    return Err(Error::Validation(format!(
                        "difference selector requires the first group index ({}) \
                         to be below the second ({})",
                        first, second
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for CycleSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CycleSelector::Single { index, total } => write!(f, "Cycle({}/{})", index, total),
            CycleSelector::Diff {
                first,
                second,
                total,
            } => write!(f, "Cycle({}/{}) - Cycle({}/{})", first, total, second, total),
        }
    }
}

/// A complete feature expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureExpr {
    pub activator: Activator,
    pub outer: AggKind,
    pub selector: CycleSelector,
    pub inner: AggKind,
    pub signal: SignalKind,
    pub direction: Direction,
    pub segment: Segment,
}

impl FeatureExpr {
    pub fn validate(&self) -> Result<()> {
        self.segment.validate()?;
        self.selector.validate()
    }

    /// Canonical text form; `parse` of the result reproduces `self`.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeatureExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}({})[{}({}_{}({}/{}))])",
            self.activator.token(),
            self.outer.token(),
            self.selector,
            self.inner.token(),
            self.signal.stem(),
            self.direction.suffix(),
            self.segment.index,
            self.segment.total,
        )
    }
}

/// Axes of the enumerated feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceConfig {
    /// Number of cycle groups (K).
    pub cycle_groups: u32,
    /// Number of signal segments (D).
    pub segments: u32,
    /// Early-cycle window: number of cycles consumed per cell (N).
    pub early_cycles: u32,
    pub directions: Vec<Direction>,
    pub signals: Vec<SignalKind>,
    pub inner_aggs: Vec<AggKind>,
    pub outer_aggs: Vec<AggKind>,
    pub activators: Vec<Activator>,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            cycle_groups: 7,
            segments: 4,
            early_cycles: 50,
            directions: Direction::ALL.to_vec(),
            signals: SignalKind::ALL.to_vec(),
            inner_aggs: AggKind::ALL.to_vec(),
            outer_aggs: AggKind::ALL.to_vec(),
            activators: Activator::ALL.to_vec(),
        }
    }
}

impl SpaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycle_groups < 1 {
            return Err(Error::invalid("cycle_groups must be >= 1"));
        }
        if self.segments < 1 {
            return Err(Error::invalid("segments must be >= 1"));
        }
        if self.early_cycles < self.cycle_groups {
            return Err(Error::invalid(format!(
                "early_cycles ({}) must be >= cycle_groups ({})",
                self.early_cycles, self.cycle_groups
            )));
        }
        if self.directions.is_empty()
            || self.signals.is_empty()
            || self.inner_aggs.is_empty()
            || self.outer_aggs.is_empty()
            || self.activators.is_empty()
        {
            return Err(Error::invalid("all enumeration axes must be non-empty"));
        }
        Ok(())
    }

    /// Number of cycle selectors: K singles plus K·(K−1)/2 ordered pairs.
    pub fn selector_count(&self) -> usize {
        let k = self.cycle_groups as usize;
        k + k * (k - 1) / 2
    }

    /// Closed-form size of the enumerated space.
    pub fn feature_count(&self) -> usize {
        self.directions.len()
            * self.signals.len()
            * self.segments as usize
            * self.inner_aggs.len()
            * self.selector_count()
            * self.outer_aggs.len()
            * self.activators.len()
    }
}

/// Parse a plain-text feature list: one canonical name per line, blank
/// lines ignored. The inverse of [`render_lines`]; evaluation plans are
/// not persisted and are rebuilt from such lists.
pub fn parse_lines(text: &str) -> Result<Vec<FeatureExpr>> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(parse)
        .collect()
}

/// Render expressions as a plain-text list, one canonical name per line.
pub fn render_lines(exprs: &[FeatureExpr]) -> String {
    let mut out = String::new();
    for e in exprs {
        out.push_str(&e.render());
        out.push('\n');
    }
    out
}

/// Enumerate the whole feature space in the frozen canonical order:
/// direction → signal → segment → inner aggregator → selector (singles
/// ascending, then difference pairs lexicographic) → outer aggregator →
/// activator.
pub fn enumerate_space(cfg: &SpaceConfig) -> Result<Vec<FeatureExpr>> {
    cfg.validate()?;
    let k = cfg.cycle_groups;
    let mut selectors = Vec::with_capacity(cfg.selector_count());
    for a in 1..=k {
        selectors.push(CycleSelector::Single { index: a, total: k });
    }
    for a in 1..=k {
        for c in (a + 1)..=k {
            selectors.push(CycleSelector::Diff {
                first: a,
                second: c,
                total: k,
            });
        }
    }

    let mut out = Vec::with_capacity(cfg.feature_count());
    for &direction in &cfg.directions {
        for &signal in &cfg.signals {
            for seg in 1..=cfg.segments {
                for &inner in &cfg.inner_aggs {
                    for &selector in &selectors {
                        for &outer in &cfg.outer_aggs {
                            for &activator in &cfg.activators {
                                out.push(FeatureExpr {
                                    activator,
                                    outer,
                                    selector,
                                    inner,
                                    signal,
                                    direction,
                                    segment: Segment {
                                        index: seg,
                                        total: cfg.segments,
                                    },
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
