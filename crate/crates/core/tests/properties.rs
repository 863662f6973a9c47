use chatabl::abduction::{revise, standard_only, HypothesisState};
use chatabl::grammar::{eval_equation, BitString};
use chatabl::metrics::auc;
use chatabl::perception::PseudoLabel;
use chatabl::symbol::Symbol;
use chatabl::table::{make_standard_table, OperationTable};
use proptest::prelude::*;

fn rows(len: usize) -> impl Strategy<Value = Vec<[f64; 4]>> {
    prop::collection::vec(prop::array::uniform4(0.01f64..1.0), len).prop_map(|rs| {
        rs.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.map(|v| v / s)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn auc_ignores_monotone_rescaling(
        pairs in prop::collection::vec((0u8..10, any::<bool>()), 2..40),
    ) {
        let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(truth.iter().any(|&t| t) && truth.iter().any(|&t| !t));
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| (s * 0.7 - 3.0).exp() / (1.0 + (s * 0.7 - 3.0).exp())).collect();
        prop_assert_eq!(auc(&scores, &truth).unwrap(), auc(&squashed, &truth).unwrap());
    }

    #[test]
    fn revisions_are_sound(probs in (5usize..9).prop_flat_map(rows), budget in 0usize..3) {
        let pseudo = PseudoLabel::from_rows(probs).unwrap();
        let state = standard_only();
        if let Ok(r) = revise(&pseudo, &state, budget) {
            prop_assert!(r.edits <= budget);
            prop_assert!(r.log_score <= 0.0);
            prop_assert!(!r.supporting_tables.is_empty());
            for code in &r.supporting_tables {
                prop_assert!(chatabl::abduction::check_consistency(&r.revised_symbols, OperationTable::from_code(*code)));
            }
        }
    }

    #[test]
    fn filtering_never_adds(codes in prop::collection::vec(any::<u16>(), 1..50), x in 0u64..64, y in 0u64..64, v in any::<bool>()) {
        let state = HypothesisState::from_tables(codes.into_iter().map(OperationTable::from_code));
        let (bx, by) = (BitString::from_u64(x), BitString::from_u64(y));
        let z = eval_equation(&bx, &by, make_standard_table());
        let eq: Vec<Symbol> = chatabl::symbol::symbols_from_str(&format!("{bx}+{by}={z}")).unwrap();
        let next = state.filter_hypotheses(&eq, v).unwrap();
        prop_assert!(next.len() <= state.len());
        prop_assert!(next.tables().all(|t| state.contains(t)));
        prop_assert_eq!(next.contains(make_standard_table()), state.contains(make_standard_table()) && v);
    }
}
