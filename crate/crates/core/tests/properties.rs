use creditline_core::contract::{
    build_loan_paths, AbrCandidate, AbrReference, BaseRateOption, DefaultTerms, Facility, FeeSchedule,
    LiborTenorRule, SpreadSpec, UpfrontFee,
};
use creditline_core::dsl::{
    evaluate, parse_criterion, reference_criteria, BinOp, EvalContext, Expr, FacilityConstants, GridRow, PricingGrid,
};
use creditline_core::market::{compute_controls, FirmQuarter, SmoothingPolicy};
use creditline_core::returns::{amortization_schedule, AmortizationScheme};
use creditline_core::risk::{merton_pd, MertonInputs};
use creditline_core::{Quarter, Usd};
use proptest::prelude::*;

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..10_000).prop_map(|n| Expr::Num(f64::from(n) / 100.0)),
        (prop::sample::select(vec!["atq", "dlcq", "oibdpq", "borr", "spltrm"]), 0u8..=4)
            .prop_map(|(n, lag)| Expr::Var { name: n.to_string(), lag }),
        prop::sample::select(vec!["oibdpq", "xintq", "capxq"]).prop_map(|n| Expr::Roll4(n.to_string())),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::bin(op, a, b)),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
        ]
    })
}

fn constants() -> FacilityConstants {
    FacilityConstants {
        commitment: 100.0,
        has_borrowing_base: false,
        has_lc_program: false,
        origination: Quarter::new(2005, 1),
    }
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(e in arb_expr()) {
        let text = e.to_string();
        let back = parse_criterion(&text).unwrap();
        prop_assert_eq!(back.expr, e);
    }

    #[test]
    fn roll4_of_constant_is_four_times(v in -1e6f64..1e6) {
        let q = Quarter::new(2009, 2);
        let hist: Vec<FirmQuarter> = (0..5).map(|i| {
            let mut f = FirmQuarter::new("F", q.offset(-i));
            f.set("oibdpq", v);
            f
        }).collect();
        let ctx = EvalContext::from_histories(q, &hist, &[], constants());
        let got = evaluate(&parse_criterion("roll4(oibdpq)").unwrap(), &ctx).unwrap();
        prop_assert!((got - 4.0 * v).abs() <= 1e-9 * v.abs().max(1.0));
    }

    #[test]
    fn grid_levels_partition_the_line(mut ts in prop::collection::vec(-100.0f64..100.0, 1..6), x in -200.0f64..200.0) {
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let n = ts.len() + 1;
        let cells = (0..n).map(|i| GridRow { libor_spread: Some(creditline_core::Bps(i as f64)), ..GridRow::default() }).collect();
        let g = PricingGrid::single("atq", ts.clone(), cells).unwrap();
        let matching: Vec<usize> = (0..n).filter(|&l| {
            let lo = if l == 0 { f64::NEG_INFINITY } else { ts[l - 1] };
            let hi = if l == n - 1 { f64::INFINITY } else { ts[l] };
            lo <= x && x < hi
        }).collect();
        prop_assert_eq!(matching.len(), 1);
        prop_assert_eq!(g.level(0, x), matching[0]);
    }

    #[test]
    fn merton_is_scale_invariant(e in 1.0f64..1000.0, f in 1.0f64..1000.0, r in -0.5f64..0.5, s in 0.05f64..1.5, k in -8i32..8) {
        let c = 2f64.powi(k);
        let a = merton_pd(&MertonInputs { equity: e, barrier: f, r, sigma_e: s }).unwrap();
        let b = merton_pd(&MertonInputs { equity: c * e, barrier: c * f, r, sigma_e: s }).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a.pd));
    }

    #[test]
    fn rolling_controls_ignore_input_order(seed in prop::collection::vec(0.5f64..2.0, 8)) {
        let start = Quarter::new(2007, 1);
        let hist: Vec<FirmQuarter> = seed.iter().enumerate().map(|(i, m)| {
            let mut f = FirmQuarter::new("F", start.offset(i as i32));
            for (k, v) in [("atq", 1000.0), ("ltq", 500.0), ("dlcq", 40.0), ("dlttq", 200.0), ("oibdpq", 30.0), ("xintq", 4.0), ("actq", 300.0), ("lctq", 150.0)] {
                f.set(k, v * m);
            }
            f
        }).collect();
        let mut shuffled = hist.clone();
        shuffled.reverse();
        shuffled.sort_by_key(|f| f.quarter);
        prop_assert_eq!(
            compute_controls(&hist, SmoothingPolicy::RollingAvg).unwrap(),
            compute_controls(&shuffled, SmoothingPolicy::RollingAvg).unwrap()
        );
    }

    #[test]
    fn amortization_never_exceeds_fee(
        fee in 0.01f64..10.0,
        maturity in 1i32..40,
        amend in prop::collection::vec(1i32..12, 0..4),
        end in prop::option::of(1i32..50),
        scheme in prop::sample::select(vec![
            AmortizationScheme::StraightLineStatedMaturity,
            AmortizationScheme::SettleToMinMaturityOrPathEnd,
            AmortizationScheme::WhileUnamended,
        ]),
    ) {
        let start = Quarter::new(2005, 1);
        let mut offsets = vec![0];
        for a in amend {
            let next = offsets.last().unwrap() + a;
            offsets.push(next);
        }
        let fs: Vec<Facility> = offsets.iter().enumerate().map(|(k, off)| {
            let mut f = simple_facility(&format!("F{k}"), start.offset(*off), start.offset(off + maturity));
            f.predecessor_id = (k > 0).then(|| format!("F{}", k - 1));
            f.fee_schedule.upfront_fee = Some(UpfrontFee { amount: Usd(fee), paid_quarter: start.offset(*off) });
            f
        }).collect();
        let path = build_loan_paths(&fs).unwrap().remove(0);
        let term = end.map(|e| start.offset(e));
        let s = amortization_schedule(&path, term, scheme);
        prop_assert!(s.total() <= fee * fs.len() as f64 * (1.0 + 1e-12));
        prop_assert!(s.amounts.values().all(|v| *v >= 0.0));
    }
}

fn simple_facility(id: &str, orig: Quarter, maturity: Quarter) -> Facility {
    Facility {
        facility_id: id.into(),
        borrower_id: "F".into(),
        lender_id: "B".into(),
        origination_quarter: orig,
        stated_maturity_quarter: maturity,
        maturity_months: None,
        commitment: Usd(100.0),
        secured: false,
        syndicated: false,
        restructuring_purpose: false,
        has_borrowing_base: false,
        has_lc_program: false,
        base_rate_options: vec![
            BaseRateOption::libor(LiborTenorRule::M1, SpreadSpec::fixed(100.0)),
            BaseRateOption::abr(vec![AbrCandidate::new(AbrReference::Prime, 0.0)], SpreadSpec::fixed(0.0)),
        ],
        fixed_rate_pct: None,
        fee_schedule: FeeSchedule::default(),
        pricing_grid: None,
        default_terms: DefaultTerms::default(),
        loan_path_id: "P".into(),
        predecessor_id: None,
    }
}

#[test]
fn reference_criteria_parse_and_print() {
    let all = reference_criteria();
    assert_eq!(all.len(), 51);
    for (id, text) in all {
        let e = parse_criterion(text).unwrap_or_else(|err| panic!("{id}: {err}"));
        assert_eq!(parse_criterion(&e.to_string()).unwrap(), e, "{id}");
    }
}
