//! Compilation of feature expressions into a deduplicated evaluation plan.
//!
//! Evaluation happens in three stages:
//!
//! 1. **Descriptor nodes** compute, per cycle, one inner aggregate over one
//!    segment of one resampled signal. Many expressions share the same
//!    `(direction, signal, segment, inner)` combination, so these are
//!    deduplicated.
//! 2. **Group-aggregate nodes** apply the outer aggregator to a descriptor's
//!    values over the cycles of one cycle group. Difference selectors reuse
//!    the two single-group nodes they refer to, so only `K` group nodes per
//!    `(descriptor, outer)` pair ever exist.
//! 3. **Feature nodes** combine one or two group aggregates with the
//!    activator. Column order equals input order.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{Activator, AggKind, CycleSelector, Direction, FeatureExpr, SignalKind};

/// Stage-1 node: per-cycle inner aggregate of one signal segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DescriptorNode {
    pub direction: Direction,
    pub signal: SignalKind,
    /// 1-based segment index; the segment count lives on the plan.
    pub segment: u32,
    pub inner: AggKind,
}

/// Stage-2 node: outer aggregate of one descriptor over one cycle group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupAggNode {
    /// Index into [`EvalPlan::stage1`].
    pub descriptor: usize,
    /// 1-based cycle-group index; the group count lives on the plan.
    pub group: u32,
    pub outer: AggKind,
}

/// Stage-3 node: one output feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureNode {
    Single {
        /// Index into [`EvalPlan::stage2`].
        node: usize,
        activator: Activator,
    },
    Diff {
        /// Stage-2 index of the minuend group aggregate.
        left: usize,
        /// Stage-2 index of the subtrahend group aggregate.
        right: usize,
        activator: Activator,
    },
}

/// Deduplicated evaluation plan for a batch of feature expressions.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    /// Shared cycle-group count (K) of every selector in the plan.
    pub cycle_groups: u32,
    /// Shared segment count (D) of every expression in the plan.
    pub segments: u32,
    pub stage1: Vec<DescriptorNode>,
    pub stage2: Vec<GroupAggNode>,
    pub features: Vec<FeatureNode>,
    /// Canonical names in column order.
    pub names: Vec<String>,
}

impl EvalPlan {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }
}

/// Compile expressions into an [`EvalPlan`]. All expressions must share one
/// cycle-group count and one segment count; mixing configurations is an
/// error. Duplicate input expressions keep their own output columns but
/// share plan nodes.
pub fn compile(exprs: &[FeatureExpr]) -> Result<EvalPlan> {
    let first = exprs
        .first()
        .ok_or_else(|| Error::invalid("cannot compile an empty feature list"))?;
    let cycle_groups = first.selector.total();
    let segments = first.segment.total;

    let mut stage1: Vec<DescriptorNode> = Vec::new();
    let mut stage2: Vec<GroupAggNode> = Vec::new();
    let mut s1_index: HashMap<DescriptorNode, usize> = HashMap::new();
    let mut s2_index: HashMap<GroupAggNode, usize> = HashMap::new();
    let mut features = Vec::with_capacity(exprs.len());
    let mut names = Vec::with_capacity(exprs.len());

    for expr in exprs {
        expr.validate()?;
        if expr.selector.total() != cycle_groups {
            return Err(Error::invalid(format!(
                "mixed cycle-group counts in one plan: {} vs {} ({})",
                cycle_groups,
                expr.selector.total(),
                expr
            )));
        }
        if expr.segment.total != segments {
            return Err(Error::invalid(format!(
                "mixed segment counts in one plan: {} vs {} ({})",
                segments, expr.segment.total, expr
            )));
        }

        let desc = DescriptorNode {
            direction: expr.direction,
            signal: expr.signal,
            segment: expr.segment.index,
            inner: expr.inner,
        };
        let d_idx = *s1_index.entry(desc).or_insert_with(|| {
            stage1.push(desc);
            stage1.len() - 1
        });

        let mut group_node = |group: u32, stage2: &mut Vec<GroupAggNode>| -> usize {
            let node = GroupAggNode {
                descriptor: d_idx,
                group,
                outer: expr.outer,
            };
            *s2_index.entry(node).or_insert_with(|| {
                stage2.push(node);
                stage2.len() - 1
            })
        };

        let feature = match expr.selector {
            CycleSelector::Single { index, .. } => FeatureNode::Single {
                node: group_node(index, &mut stage2),
                activator: expr.activator,
            },
            CycleSelector::Diff { first, second, .. } => FeatureNode::Diff {
                left: group_node(first, &mut stage2),
                right: group_node(second, &mut stage2),
                activator: expr.activator,
            },
        };
        features.push(feature);
        names.push(expr.render());
    }

    Ok(EvalPlan {
        cycle_groups,
        segments,
        stage1,
        stage2,
        features,
        names,
    })
}
