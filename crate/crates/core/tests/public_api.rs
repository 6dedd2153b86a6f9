use gammakde::bandwidth::{density_bandwidth, plug_in_bandwidth};
use gammakde::simulate::{gen_series, MixingProcessSpec};
use gammakde::{
    density_at, density_partial_at, field_on_grid, fragment, Bandwidth, Domain, EvalPoint, FieldKind, Marginal,
    ProductModel, Resolution, Sample, Target,
};

fn exp_sample() -> Sample {
    // deterministic quantiles of Exp(1)
    let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![-(1.0 - (i as f64 + 0.5) / 400.0).ln()]).collect();
    Sample::from_rows(&rows).unwrap()
}

#[test]
fn quantile_sample_recovers_exponential_density() {
    let s = exp_sample();
    let b = Bandwidth::uniform(0.1, 1).unwrap();
    for x in [0.5, 1.0, 2.0] {
        let f = density_at(&s, &EvalPoint::new(vec![x]).unwrap(), &b).unwrap();
        assert!((f - (-x).exp()).abs() < 0.05, "x={x} f={f}");
        let df = density_partial_at(&s, &EvalPoint::new(vec![x]).unwrap(), &b, 0).unwrap();
        assert!((df + (-x).exp()).abs() < 0.1, "x={x} df={df}");
    }
}

#[test]
fn grid_matches_pointwise() {
    let s = exp_sample();
    let b = Bandwidth::uniform(0.2, 1).unwrap();
    let axes = vec![vec![0.0, 0.7, 3.0]];
    let field = field_on_grid(&s, axes.clone(), &b, FieldKind::Derivative { axis: 0 }).unwrap();
    for (x, v) in axes[0].iter().zip(&field.values) {
        let p = density_partial_at(&s, &EvalPoint::new(vec![*x]).unwrap(), &b, 0).unwrap();
        assert_eq!(p, *v);
    }
}

#[test]
fn plug_in_close_to_reference_constant() {
    let rule = plug_in_bandwidth(&exp_sample(), Target::Density, 1).unwrap();
    let reference = density_bandwidth(&ProductModel::exponential(1.0, 1).unwrap(), &Domain::Orthant, Resolution::default())
        .unwrap();
    assert!((rule.constant / reference.constant - 1.0).abs() < 0.5, "{} vs {}", rule.constant, reference.constant);
}

#[test]
fn fragmented_series_shape() {
    let spec = MixingProcessSpec::new(0.4, Marginal::exponential(2.0).unwrap(), 1).unwrap();
    let x = gen_series(&spec, 300, 5).unwrap();
    assert_eq!(x, gen_series(&spec, 300, 5).unwrap());
    let s = fragment(&x, 2).unwrap();
    assert_eq!((s.n(), s.dim()), (298, 3));
    let b = Bandwidth::uniform(0.3, 3).unwrap();
    let f = density_at(&s, &EvalPoint::new(vec![0.5, 0.5, 0.5]).unwrap(), &b).unwrap();
    assert!(f.is_finite() && f > 0.0);
}
