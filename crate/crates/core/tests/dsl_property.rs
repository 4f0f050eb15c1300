//! Property tests for the feature grammar: rendering any valid AST and
//! parsing it back must reproduce the AST exactly.

use cyclekit::dsl::{
    parse, Activator, AggKind, CycleSelector, Direction, FeatureExpr, Segment, SignalKind,
};
use proptest::prelude::*;

fn arb_agg() -> impl Strategy<Value = AggKind> {
    prop::sample::select(AggKind::ALL.to_vec())
}

fn arb_selector() -> impl Strategy<Value = CycleSelector> {
    (1u32..=10).prop_flat_map(|total| {
        prop_oneof![
            (1..=total).prop_map(move |index| CycleSelector::Single { index, total }),
            // Difference selectors need total >= 2 and first < second.
            (1..=total.max(2) - 1).prop_flat_map(move |first| {
                ((first + 1)..=total.max(2)).prop_map(move |second| CycleSelector::Diff {
                    first,
                    second,
                    total: total.max(2),
                })
            }),
        ]
    })
}

fn arb_expr() -> impl Strategy<Value = FeatureExpr> {
    (
        prop::sample::select(Activator::ALL.to_vec()),
        arb_agg(),
        arb_selector(),
        arb_agg(),
        prop::sample::select(SignalKind::ALL.to_vec()),
        prop::sample::select(Direction::ALL.to_vec()),
        (1u32..=8).prop_flat_map(|total| (1..=total).prop_map(move |index| Segment { index, total })),
    )
        .prop_map(
            |(activator, outer, selector, inner, signal, direction, segment)| FeatureExpr {
                activator,
                outer,
                selector,
                inner,
                signal,
                direction,
                segment,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 1000,
        ..ProptestConfig::default()
    })]

    #[test]
    fn parse_render_round_trip(expr in arb_expr()) {
        prop_assert!(expr.validate().is_ok());
        let text = expr.render();
        let back = parse(&text).unwrap();
        prop_assert_eq!(back, expr, "{}", text);
    }
}
