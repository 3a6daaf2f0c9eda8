use diffarb_core::arb_classifier::{classify, Status};
use diffarb_core::model_catalog::{build_model, expected_verdict, golden_sweep};

#[test]
fn sweep_matches_known_verdicts() {
    let mut failures = Vec::new();
    for (name, params) in golden_sweep() {
        let spec = build_model(name, &params).unwrap();
        let t = std::time::Instant::now();
        let v = classify(&spec).unwrap_or_else(|e| panic!("{name}({params}): {e}"));
        let e = expected_verdict(name, &params).unwrap();
        let got = (v.nip, v.nsa, v.nupbr, v.rp);
        let want = (e.nip, e.nsa, e.nupbr, e.rp);
        println!("{name}({params}) {} rp={:?} {:?}", v.symbols(), v.rp, t.elapsed());
        if got != want || [v.nip, v.nsa, v.nupbr, v.rp].contains(&Status::Inconclusive) {
            failures.push(format!("{name}({params}): got {got:?}, want {want:?}\n{:#?}", v.reports));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
