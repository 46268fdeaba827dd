use ctsd::analysis::{
    convergence_sweep, fit_loglog_slope, l2_error, riemann_lebesgue_check, FastSignal, SweepSpec,
    TestFunction, DEFAULT_NORM_WINDOW,
};
use ctsd::filter::{error_signal, uniform_grid, DemodulationResult, QuadratureSpec};
use ctsd::modulator::{run, ModulatorConfig};
use ctsd::signal::{cosine, ramp_kink, square, BSplineKernel, Envelope, InputModel};
use ctsd::AnalysisError;
use proptest::prelude::*;

fn trapezoid_l2(r: &DemodulationResult, t0: f64, t1: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..r.grid.len() - 1 {
        let (a, b) = (r.grid[i], r.grid[i + 1]);
        if a >= t0 - 1e-9 && b <= t1 + 1e-9 {
            acc += 0.5 * (b - a) * (r.error[i].powi(2) + r.error[i + 1].powi(2));
        }
    }
    acc.sqrt()
}

#[test]
fn simpson_agrees_with_refined_trapezoid() {
    let shape = ramp_kink(1.0).unwrap();
    let input = InputModel::new(Envelope::reference(), shape.clone());
    let trace = run(&input, &ModulatorConfig::default(), 250.0).unwrap();
    let k3 = BSplineKernel::new(3).unwrap();
    let q = QuadratureSpec::default();
    let (t0, t1) = DEFAULT_NORM_WINDOW;
    let on = |h: f64| error_signal(&input, &trace, &shape, &k3, &uniform_grid(0.0, 250.0, h), &q).unwrap();
    let coarse = on(1.0 / 32.0);
    let fine = on(1.0 / 128.0);
    let finest = on(1.0 / 512.0);

    // I(t) carries structure on the sample scale 1/200, which a 1/32 grid
    // does not resolve: the Simpson value there sits 5.6e-6 off the limit
    let simpson = l2_error(&coarse, t0, t1).unwrap();
    let oracle = trapezoid_l2(&fine, t0, t1);
    assert!((simpson - oracle).abs() <= 1e-5 * oracle, "{simpson} vs {oracle}");

    let simpson = l2_error(&fine, t0, t1).unwrap();
    let oracle = trapezoid_l2(&finest, t0, t1);
    assert!((simpson - oracle).abs() <= 1e-6 * oracle, "{simpson} vs {oracle}");
}

#[test]
fn modulator_beta_averages_out() {
    let shape = ramp_kink(1.0).unwrap();
    let input = InputModel::new(Envelope::reference(), shape);
    let trace = run(&input, &ModulatorConfig::default(), 250.0).unwrap();
    let beta = FastSignal::from_trace(&trace);
    let f = TestFunction::ShiftedKernel {
        kernel: BSplineKernel::new(3).unwrap(),
        shift: 3.0,
    };
    let rows = riemann_lebesgue_check(&beta, &f, &[50, 100, 200], &QuadratureSpec::default()).unwrap();
    assert!(rows[0].limit.abs() < 1e-4);
    for w in rows.windows(2) {
        assert!(w[1].deviation() < w[0].deviation(), "{rows:?}");
    }
}

#[test]
fn sweeps_need_three_ratios() {
    let shape = cosine(1.0).unwrap();
    let spec = SweepSpec {
        label: "u2".into(),
        input: InputModel::new(Envelope::reference(), shape.clone()),
        demod_shape: shape,
        kernel: BSplineKernel::new(3).unwrap(),
        base: ModulatorConfig::default(),
        ratios: vec![25, 50, 50],
        duration: 20.0,
        grid_spacing: 1.0 / 32.0,
        norm_window: (1.0, 20.0),
        quadrature: QuadratureSpec::default(),
    };
    assert!(matches!(convergence_sweep(&spec), Err(AnalysisError::TooFewRatios(2))));
}

#[test]
fn unstable_ratios_become_failures() {
    let shape = square(1.0).unwrap();
    let spec = SweepSpec {
        label: "u3".into(),
        input: InputModel::new(Envelope::reference(), shape.clone()),
        demod_shape: shape,
        kernel: BSplineKernel::new(3).unwrap(),
        base: ModulatorConfig {
            stability_bound: 1e-3,
            ..ModulatorConfig::default()
        },
        ratios: vec![25, 50, 100],
        duration: 20.0,
        grid_spacing: 1.0 / 32.0,
        norm_window: (1.0, 20.0),
        quadrature: QuadratureSpec::default(),
    };
    let result = convergence_sweep(&spec).unwrap();
    assert!(result.points.is_empty());
    assert_eq!(result.failures.len(), 3);
    assert!(result.fit.is_none());
}

#[test]
fn short_sweep_orders_its_points() {
    let shape = ramp_kink(1.0).unwrap();
    let spec = SweepSpec {
        label: "u1".into(),
        input: InputModel::new(Envelope::reference(), shape.clone()),
        demod_shape: shape,
        kernel: BSplineKernel::new(3).unwrap(),
        base: ModulatorConfig::default(),
        ratios: vec![100, 25, 50],
        duration: 40.0,
        grid_spacing: 1.0 / 32.0,
        norm_window: (1.0, 40.0),
        quadrature: QuadratureSpec::default(),
    };
    let result = convergence_sweep(&spec).unwrap();
    let ratios: Vec<u32> = result.points.iter().map(|p| p.ratio).collect();
    assert_eq!(ratios, vec![25, 50, 100]);
    assert!(result.fitted_slope().unwrap() > 1.0);
    assert!(result.l2_at(25).unwrap() > result.l2_at(100).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slope_fit_recovers_power_laws(p in 0.5f64..3.0, c in 1e-4f64..10.0, n0 in 5u32..60) {
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let n = f64::from(n0 * 2u32.pow(i));
                (n, c * n.powf(-p))
            })
            .collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!(fit.residual < 1e-9);
    }

    #[test]
    fn l2_scales_linearly(scale in 1e-3f64..1e3, n in 4usize..200) {
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let error: Vec<f64> = grid.iter().map(|t| (7.0 * t).sin()).collect();
        let make = |s: f64| DemodulationResult {
            grid: grid.clone(),
            z_hat: vec![0.0; n + 1],
            z_hat_sd: vec![0.0; n + 1],
            error: error.iter().map(|e| s * e).collect(),
        };
        let a = l2_error(&make(1.0), 0.0, 1.0).unwrap();
        let b = l2_error(&make(scale), 0.0, 1.0).unwrap();
        prop_assert!((b - scale * a).abs() <= 1e-12 * b.max(1e-300));
    }
}
