//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

mod common;

use std::time::{Duration, Instant};

use diffarb_core::arb_classifier::{check_nip, check_nip_zero_rate, classify, classify_view, Status};
use diffarb_core::diffusion_model::derive_natural_scale;
use diffarb_core::mc_engine::diagnostics::{martingale_diagnostic, DiagnosticTarget};
use diffarb_core::mc_engine::estimators::estimate_tradeoff;
use diffarb_core::mc_engine::stats::{ks_normal, mean_se};
use diffarb_core::mc_engine::strategies::{run_strategy, Strategy};
use diffarb_core::mc_engine::{build_chain, sample_paths, simulate, SimulationConfig};
use diffarb_core::measure_kit::{decide_l2_local, decide_weighted_l2_boundary, IntegrabilityStatus, LocalBehavior, Side};
use diffarb_core::model_catalog::{build_model, expected_verdict, golden_sweep, Params};
use diffarb_core::NaturalScaleView;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn view(name: &str, p: &str) -> NaturalScaleView {
    derive_natural_scale(&build_model(name, &Params::parse(p).unwrap()).unwrap()).unwrap()
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.2}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn golden_table() -> Outcome {
    let t = Instant::now();
    let mut bad = Vec::new();
    let sweep = golden_sweep();
    for (name, params) in &sweep {
        let spec = build_model(name, params).unwrap();
        let v = match classify(&spec) {
            Ok(v) => v,
            Err(e) => {
                bad.push(format!("{}: {e}", spec.model_id));
                continue;
            }
        };
        let e = expected_verdict(name, params).unwrap();
        let got = [v.nip, v.nsa, v.nupbr, v.rp];
        if got != [e.nip, e.nsa, e.nupbr, e.rp] || got.contains(&Status::Inconclusive) {
            bad.push(format!("{} gave {} rp={:?}", spec.model_id, v.symbols(), v.rp));
        }
    }
    let (fast, time) = within(t, Duration::from_secs(5));
    let mut detail = format!("{} models, {} mismatches, {time}", sweep.len(), bad.len());
    if !bad.is_empty() {
        detail += &format!(": {}", bad.join("; "));
    }
    outcome(bad.is_empty() && fast, detail)
}

fn fuzzing() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut chain, mut equiv, mut zero, mut errors, mut zero_checked) = (0, 0, 0, 0, 0);
    for id in 0..100 {
        let spec = common::fuzz_spec(&mut rng, id);
        let Ok(view) = derive_natural_scale(&spec) else {
            errors += 1;
            continue;
        };
        let v = classify_view(&spec.model_id, &view, Vec::new());
        if (v.nupbr == Status::Holds && v.nsa != Status::Holds) || (v.nsa == Status::Holds && v.nip != Status::Holds) {
            chain += 1;
        }
        if !common::has_absorbing(&view) && v.nsa != v.nupbr {
            equiv += 1;
        }
        if view.r == 0.0 {
            zero_checked += 1;
            if check_nip(&view).0 != check_nip_zero_rate(&view).unwrap().0 {
                zero += 1;
            }
        }
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    outcome(
        chain == 0 && equiv == 0 && zero == 0 && errors == 0 && fast,
        format!("100 specs: chain violations {chain}, NSA/NUPBR mismatches {equiv}, zero-rate disagreements {zero} of {zero_checked}, build errors {errors}, {time}"),
    )
}

fn exponent_rule() -> Outcome {
    let mut wrong = Vec::new();
    for k in 0..=12 {
        let p = -2.0 + 0.25 * k as f64;
        let f = move |x: f64| x.abs().powf(p);
        let local = decide_l2_local(&f, (-1.0, 1.0), &[LocalBehavior::new(0.0, Side::Both, p, 1.0)], &[]);
        let want = if p > -0.5 { IntegrabilityStatus::Finite } else { IntegrabilityStatus::Divergent };
        if local.status != want {
            wrong.push(format!("local p={p}: {:?}", local.status));
        }
        let weighted = decide_weighted_l2_boundary(&f, 0.0, (0.0, 1.0), &[LocalBehavior::new(0.0, Side::Right, p, 1.0)], &[]);
        let want = if p > -1.0 { IntegrabilityStatus::Finite } else { IntegrabilityStatus::Divergent };
        if weighted.status != want {
            wrong.push(format!("weighted p={p}: {:?}", weighted.status));
        }
    }
    outcome(wrong.is_empty(), format!("26 decisions, {} wrong {}", wrong.len(), wrong.join("; ")).trim_end().to_string())
}

fn chain_correctness() -> Outcome {
    let t = Instant::now();
    let v = view("brownian_motion", "r=0");
    let c = build_chain(&v, 512, 1.0).unwrap();
    let (s, counts) = sample_paths(&c, 100_000, 42, &[]);
    let m = mean_se(&s.terminal);
    let ks = ks_normal(&s.terminal, 0.0, 1.0);
    let d = c.grid[c.start + 1] - c.grid[c.start];
    let exit = mean_se(&s.first_exit);
    let ok_mean = m.t_stat(0.0).abs() < 3.0;
    let ok_exit = exit.t_stat(d * d).abs() < 3.0;
    let (fast, time) = within(t, Duration::from_secs(120));
    outcome(
        ok_mean && ks < 0.02 && ok_exit && fast,
        format!(
            "terminal mean {:.5} ± {:.5}, KS {:.4}, exit time {:.4e} ± {:.1e} vs Δ² = {:.4e}, discarded {}, {time}",
            m.mean, m.se, ks, exit.mean, exit.se, d * d, counts.exited
        ),
    )
}

fn arbitrage_detection() -> Outcome {
    let t = Instant::now();
    let v = view("sticky_reflected_bm", "r=0,rho=0,x0=3/2");
    let c = build_chain(&v, 512, 1.0).unwrap();
    let res = run_strategy(&c, &Strategy::PostHittingHold { level: v.boundaries[0].image }, 10_000, 42);
    let du = c.max_spacing();
    let (fast, time) = within(t, Duration::from_secs(60));
    outcome(
        res.min_payoff >= -2.0 * du && res.positive_ci.0 > 0.0 && fast,
        format!(
            "min payoff {:.3e} (bound {:.3e}), P(>0) = {:.4} CI [{:.4}, {:.4}], {time}",
            res.min_payoff,
            -2.0 * du,
            res.positive_fraction,
            res.positive_ci.0,
            res.positive_ci.1
        ),
    )
}

fn k_divergence() -> Outcome {
    let t = Instant::now();
    let cases = [
        ("cubed_bm", "r=0,x0=1/8", true),
        ("gen_squared_bessel", "r=0,m0=0", true),
        ("sticky_reflected_bm", "r=1/2,rho=1", false),
        ("brownian_motion", "r=0", false),
        ("brownian_motion", "r=1/5", false),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, p, want) in cases {
        let est = estimate_tradeoff(&view(name, p), 128, 3, 1.0, 4000, 42).unwrap();
        ok &= est.divergent == want;
        let ratios: Vec<String> = est.ratios.iter().map(|r| format!("{r:.2}")).collect();
        parts.push(format!("{name}({p}) ratios [{}] flag {}", ratios.join(", "), est.divergent));
    }
    let (fast, time) = within(t, Duration::from_secs(300));
    outcome(ok && fast, format!("{}; {time}", parts.join("; ")))
}

fn diagnostics() -> Outcome {
    let t = Instant::now();
    let v = view("sticky_reflected_bm", "r=0,rho=0,x0=3/2");
    let c = build_chain(&v, 512, 1.0).unwrap();
    let half = martingale_diagnostic(&v, &c, DiagnosticTarget::UMinusHalfL, 10_000, 42).unwrap();

    let v = view("sticky_skew", "kappa=3/4,c=1,xi=4/3,r=1");
    let c = build_chain(&v, 512, 1.0).unwrap();
    let held = martingale_diagnostic(&v, &c, DiagnosticTarget::DiscountedPriceDrift, 10_000, 42).unwrap();
    let v = view("sticky_skew", "kappa=3/4,c=1,xi=4/3,r=6/5");
    let c = build_chain(&v, 512, 1.0).unwrap();
    let broken = martingale_diagnostic(&v, &c, DiagnosticTarget::DiscountedPriceDrift, 10_000, 42).unwrap();
    let (fast, time) = within(t, Duration::from_secs(120));
    outcome(
        half.t_stat.abs() < 3.0 && held.t_stat.abs() < 3.0 && broken.t_stat.abs() >= 3.0 && fast,
        format!(
            "U - L/2 t = {:.2}; sticky-skew drift t = {:.2} (balanced), {:.2} (r x 1.2); {time}",
            half.t_stat, held.t_stat, broken.t_stat
        ),
    )
}

fn determinism() -> Outcome {
    let spec = build_model("sticky_skew", &Params::new()).unwrap();
    let cfg = SimulationConfig { grid: 128, paths: 2000, levels: 3, seed: 42 };
    let render = || {
        let r = simulate(&spec, &cfg).unwrap();
        let v = classify(&spec).unwrap();
        format!(
            "{}{}{}{}",
            r.render(),
            r.k_ladder_csv(),
            r.payoff_histogram_csv(20),
            serde_json::to_string(&v).unwrap()
        )
    };
    let a = render();
    let b = render();
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("golden catalog table", golden_table),
        ("implication-chain fuzzing", fuzzing),
        ("exponent-rule suite", exponent_rule),
        ("chain correctness", chain_correctness),
        ("empirical arbitrage detection", arbitrage_detection),
        ("K-divergence discrimination", k_divergence),
        ("martingale diagnostics", diagnostics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
