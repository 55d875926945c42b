use std::f64::consts::PI;

use chgrow_core::diagnostics::energy_identity_residual_forced;
use chgrow_core::*;

fn linear_run(eps: f64, m: f64, n: usize, dt: f64, t_final: f64, cadence: usize) -> Trajectory {
    let spec = CoefficientSpec::constant(m).unwrap();
    let u0 = Field::sample_pinned(&Grid1D::new(n).unwrap(), |x| eps * (PI * x).sin()).unwrap();
    run(&u0, t_final, SchemeConfig::imex_for(dt, &spec), &spec, NonlinearityVariant::Plain, cadence).unwrap()
}

#[test]
fn gronwall_constant_vanishes_in_linear_regime() {
    let traj = linear_run(1e-6, 2.0, 63, 1e-5, 0.01, 10);
    let fit = gronwall_fit(&traj).unwrap();
    assert!(fit.fitted_c2.abs() <= 1e-6, "{}", fit.fitted_c2);
    assert!(fit.min_margin() >= -1e-8 * fit.y0);
}

#[test]
fn integrated_gradient_dissipation_matches_linear_decay() {
    // M eps^2 (pi^2/2) (1 - e^{-2 M pi^4 T}) / (2 M pi^4)
    let (eps, m, t_final) = (1e-6, 2.0, 0.005);
    let traj = linear_run(eps, m, 127, 1e-6, t_final, 10);
    let rate = 2.0 * m * PI.powi(4);
    let oracle = m * eps * eps * (PI * PI / 2.0) * (1.0 - (-rate * t_final).exp()) / rate;
    let totals = integrated_dissipations(&traj).unwrap();
    let got = totals["dissipation_a_D1"];
    assert!((got / oracle - 1.0).abs() < 1e-3, "{got} vs {oracle}");
    assert!(totals.values().all(|v| *v >= 0.0));
}

#[test]
fn time_holder_modulus_matches_closed_form_brute_force() {
    let (eps, lam) = (0.01, 50.0);
    let spec = CoefficientSpec::constant(2.0).unwrap();
    let g = Grid1D::new(31).unwrap();
    let times: Vec<f64> = (0..40).map(|k| 0.002 * k as f64).collect();
    let states: Vec<State> = times
        .iter()
        .map(|&t| State::new(t, Field::sample_pinned(&g, |x| eps * (-lam * t).exp() * (PI * x).sin()).unwrap()))
        .collect();
    let records = states.iter().map(|s| record(s, None, &spec, NonlinearityVariant::Plain)).collect();
    let traj = Trajectory {
        states,
        records,
        scheme: SchemeConfig::imex_for(0.002, &spec),
        spec,
        variant: NonlinearityVariant::Plain,
        cadence: 1,
        status: RunStatus::Completed,
        last_finite: None,
        warnings: Vec::new(),
    };
    let peak = g.nodes().iter().map(|x| (PI * x).sin()).fold(0.0, f64::max);
    let mut brute = 0.0_f64;
    for (i, a) in times.iter().enumerate() {
        for b in &times[..i] {
            let d = ((-lam * a).exp() - (-lam * b).exp()).abs() / (a - b).abs().powf(0.125);
            brute = brute.max(eps * peak * d);
        }
    }
    let got = holder_modulus_time(&traj, 0.125).unwrap();
    assert!((got - brute).abs() <= 1e-12 * brute, "{got} vs {brute}");

    let frozen = traj.states[0].u.clone();
    let still = Trajectory { states: (0..3).map(|k| State::new(k as f64, frozen.clone())).collect(), ..traj };
    assert_eq!(holder_modulus_time(&still, 0.125).unwrap(), 0.0);
}

#[test]
fn forced_energy_identity_converges_under_refinement() {
    let spec = CoefficientSpec::constant(2.0).unwrap();
    let ms = ManufacturedSolution::decaying_mode(0.5, 1.0, 1).unwrap();
    let residual = |n: usize, dt: f64| {
        let g = Grid1D::new(n).unwrap();
        let src = |t: f64, g: &Grid1D| {
            manufactured_forcing_symbolic(&ms, &spec, NonlinearityVariant::Plain, t, g).unwrap().into_values()
        };
        let traj = run_forced(
            &ms.sample(&g, 0.0),
            0.04,
            SchemeConfig::imex_for(dt, &spec),
            &spec,
            NonlinearityVariant::Plain,
            10,
            Some(&src),
        )
        .unwrap();
        energy_identity_residual_forced(&traj, Some(&src)).unwrap().max_abs
    };
    let r: Vec<f64> = [(31, 4e-4), (63, 1e-4), (127, 2.5e-5)].iter().map(|&(n, dt)| residual(n, dt)).collect();
    for w in r.windows(2) {
        assert!(w[0] / w[1] > 3.0, "{r:?}");
    }
}

#[test]
fn estimate_report_serializes_with_documented_keys() {
    let traj = linear_run(0.1, 2.0, 31, 1e-4, 0.01, 10);
    let report = estimate_report(&traj).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    for key in [
        "identity_residuals",
        "fitted_C2",
        "gronwall_margin",
        "integrated_dissipation",
        "holder_space_modulus",
        "holder_time_modulus",
        "nirenberg_ratio_L8",
        "nirenberg_ratio_DL4",
        "initial_mass",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert!(report.holder_space_excess <= 1e-6);
    let back: EstimateReport = serde_json::from_value(json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn record_serializes_with_csv_column_names() {
    let spec = CoefficientSpec::constant(2.0).unwrap();
    let u = Field::sample_pinned(&Grid1D::new(15).unwrap(), |x| (PI * x).sin()).unwrap();
    let r = record(&State::new(0.0, u), None, &spec, NonlinearityVariant::Plain);
    let json = serde_json::to_value(r).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), DiagnosticsRecord::COLUMNS.len());
    for c in DiagnosticsRecord::COLUMNS {
        assert!(json.get(c).is_some(), "{c}");
    }
    assert_eq!(DiagnosticsRecord::from_row(r.as_row(), false), r);
}
