use lscrit_core::criteria::{self, LambdaSource};
use lscrit_core::lambda_coeff::{aoyagi_lambda, CaseLabel, Rational};
use lscrit_core::math;
use lscrit_core::model::{Dataset, GmmParams, ModelFamily, ParameterPoint, RrrParams};
use lscrit_core::sampler::{posterior_expectation, PosteriorSamples, TemperSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn log_sum_exp_shift(values in prop::collection::vec(-50.0f64..50.0, 1..20), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let diff = math::log_sum_exp(&shifted) - math::log_sum_exp(&values);
        prop_assert!((diff - c).abs() < 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn lambda_hat_recovers_synthetic_lambda(
        l in -1000.0f64..1000.0,
        lambda in 0.0f64..20.0,
        n in 3usize..100_000,
        b1 in 0.2f64..20.0,
        b2 in 0.2f64..20.0,
    ) {
        prop_assume!((b1 - b2).abs() > 1e-3);
        let log_n = (n as f64).ln();
        let w = |b: f64| l + lambda * log_n / b;
        let est = criteria::lambda_hat_from_wbic((w(b1), w(b2)), (b1, b2), n).unwrap();
        prop_assert!((est.lambda_hat - lambda).abs() < 1e-10 * (1.0 + l.abs()) / (1.0 / b1 - 1.0 / b2).abs().min(1.0), "{} vs {}", est.lambda_hat, lambda);
    }

    #[test]
    fn ls_and_sbic_decompose(t_n in 0.0f64..50.0, lambda in 0.0f64..20.0, n in 1usize..100_000) {
        let pen = lambda * (n as f64).ln();
        let ls = criteria::ls(t_n, lambda, LambdaSource::Exact, n).unwrap();
        prop_assert_eq!(ls.value, n as f64 * t_n + pen);
        // the subtraction itself rounds once, so compare at one ulp of the value
        let ulp = f64::EPSILON * ls.value.abs();
        prop_assert!((ls.value - n as f64 * t_n - pen).abs() <= ulp);
        let nll = n as f64 * t_n;
        let s = criteria::sbic(nll, lambda, LambdaSource::Estimated, n).unwrap();
        prop_assert_eq!(s.value, nll + pen);
        prop_assert!((s.value - nll - pen).abs() <= f64::EPSILON * s.value.abs());
    }

    #[test]
    fn simulate_is_a_function_of_its_inputs(seed in any::<u64>(), n in 1usize..50) {
        let family = ModelFamily::rrr(2, 3, 1).unwrap();
        let truth = ParameterPoint::Rrr(RrrParams::new(vec![1.0, 0.5], vec![0.3, -0.2, 1.0], 2, 3, 1).unwrap());
        prop_assert_eq!(family.simulate(&truth, n, seed).unwrap(), family.simulate(&truth, n, seed).unwrap());
        let g = ModelFamily::gmm(2, 1).unwrap();
        let gt = ParameterPoint::Gmm(GmmParams::new(vec![0.4, 0.6], vec![-1.0, 1.0], 1).unwrap());
        prop_assert_eq!(g.simulate(&gt, n, seed).unwrap(), g.simulate(&gt, n, seed).unwrap());
    }

    #[test]
    fn empirical_loss_matches_direct_average(
        data in prop::collection::vec(-3.5f64..3.5, 1..30),
        thetas in prop::collection::vec(-3.5f64..3.5, 1..40),
    ) {
        let family = ModelFamily::normal_mean_conjugate(1.0).unwrap();
        let ds = Dataset::from_scalars(&data).unwrap();
        let points = thetas.iter().map(|&t| (0, ParameterPoint::normal_mean(t))).collect();
        let samples = PosteriorSamples::from_points(family, &ds, TemperSpec::untempered(data.len()), points).unwrap();
        let t_n = criteria::empirical_loss(&samples, &family, &ds).unwrap();
        let mut total = 0.0;
        for &x in &data {
            let mut mean = 0.0;
            for &t in &thetas {
                let l = math::normal_ln_pdf(x, t, 1.0);
                prop_assert!((-30.0..=0.0).contains(&l));
                mean += l.exp();
            }
            total -= (mean / thetas.len() as f64).ln();
        }
        prop_assert!((t_n - total / data.len() as f64).abs() < 1e-8);
    }

    #[test]
    fn plug_in_ignores_draw_order(thetas in prop::collection::vec(-1.0f64..1.0, 1..30), rot in 0usize..30) {
        let family = ModelFamily::normal_mean();
        let ds = Dataset::from_scalars(&[0.1, -0.4, 0.7]).unwrap();
        let make = |ts: &[f64]| {
            let pts = ts.iter().map(|&t| (0, ParameterPoint::normal_mean(t))).collect();
            PosteriorSamples::from_points(family, &ds, TemperSpec::untempered(3), pts).unwrap()
        };
        let mut rotated = thetas.clone();
        let k = rot % thetas.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let a = lscrit_core::model::plug_in_estimate(&family, &ds, &make(&thetas)).unwrap();
        let b = lscrit_core::model::plug_in_estimate(&family, &ds, &make(&rotated)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn expectation_is_linear(thetas in prop::collection::vec(-1.0f64..1.0, 1..50), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let family = ModelFamily::normal_mean();
        let ds = Dataset::from_scalars(&[0.2, 0.3]).unwrap();
        let pts = thetas.iter().enumerate().map(|(i, &t)| (i % 3, ParameterPoint::normal_mean(t))).collect();
        let s = PosteriorSamples::from_points(family, &ds, TemperSpec::untempered(2), pts).unwrap();
        let f = |d: &lscrit_core::sampler::Draw| d.params.as_normal_mean().unwrap();
        let g = |d: &lscrit_core::sampler::Draw| d.untempered_loglik;
        let lhs = posterior_expectation(&s, |d| a * f(d) + b * g(d)).unwrap();
        let rhs = a * posterior_expectation(&s, f).unwrap() + b * posterior_expectation(&s, g).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn nll_additive_over_concatenation(
        xs in prop::collection::vec(-4.0f64..4.0, 1..20),
        ys in prop::collection::vec(-4.0f64..4.0, 1..20),
        mu in -2.0f64..2.0,
    ) {
        let family = ModelFamily::gmm(2, 1).unwrap();
        let theta = ParameterPoint::Gmm(GmmParams::new(vec![0.25, 0.75], vec![mu, -mu], 1).unwrap());
        let a = Dataset::from_scalars(&xs).unwrap();
        let b = Dataset::from_scalars(&ys).unwrap();
        let joint = family.negative_log_likelihood(&theta, &a.concat(&b).unwrap()).unwrap();
        let split = family.negative_log_likelihood(&theta, &a).unwrap() + family.negative_log_likelihood(&theta, &b).unwrap();
        prop_assert!((joint - split).abs() < 1e-10);
    }
}

fn case_conditions(m: usize, n: usize, h: usize, r: usize) -> [bool; 5] {
    let strict = [m + r > n + h, n + r > m + h, h + r > m + n];
    let none = !strict.iter().any(|&c| c);
    let even = (m + h + n + r) % 2 == 0;
    [strict[0], strict[1], strict[2], none && even, none && !even]
}

#[test]
fn aoyagi_grid() {
    let labels = [CaseLabel::Case2, CaseLabel::Case3, CaseLabel::Case4, CaseLabel::Case1a, CaseLabel::Case1b];
    for m in 1..=6 {
        for n in 1..=6 {
            for h in 1..=6 {
                for r in 0..=h.min(m).min(n) {
                    let c = aoyagi_lambda(m, n, h, r).unwrap();
                    let fired = case_conditions(m, n, h, r);
                    assert_eq!(fired.iter().filter(|&&f| f).count(), 1, "({m},{n},{h},{r})");
                    assert!(!c.overlapping_cases);
                    let idx = fired.iter().position(|&f| f).unwrap();
                    assert_eq!(c.case, labels[idx]);
                    assert!(c.lambda > Rational::from_integer(0), "({m},{n},{h},{r})");
                    let cap = Rational::new((m * n) as i64, 2) + Rational::new(1, 8);
                    assert!(c.lambda <= cap);
                    assert_eq!(c, aoyagi_lambda(n, m, h, r).map(|s| {
                        // swapping M and N exchanges cases 2 and 3
                        let mut s = s;
                        s.case = c.case;
                        s
                    }).unwrap());
                    assert_eq!(c.lambda, aoyagi_lambda(n, m, h, r).unwrap().lambda);
                    assert!(c.multiplicity == 1 || c.multiplicity == 2);
                    if h == r && r == m.min(n) && h + r > m + n {
                        assert!(c.lambda <= Rational::new((m * n) as i64, 2));
                    }
                }
                assert!(aoyagi_lambda(m, n, h, h.min(m).min(n) + 1).is_err());
            }
        }
    }
}

#[test]
fn degenerate_wbic_is_the_nll() {
    let family = ModelFamily::rrr(2, 2, 1).unwrap();
    let theta = ParameterPoint::Rrr(RrrParams::new(vec![0.5, -0.3], vec![1.0, 2.0], 2, 2, 1).unwrap());
    let data = family.simulate(&theta, 25, 3).unwrap();
    let samples = PosteriorSamples::from_points(
        family,
        &data,
        TemperSpec::tempered(1.0, 25).unwrap(),
        vec![(0, theta.clone()); 5],
    )
    .unwrap();
    let w = criteria::wbic(&samples, &family, &data).unwrap();
    assert_eq!(w.value, family.negative_log_likelihood(&theta, &data).unwrap());
    assert_eq!(w.beta0, Some(1.0));
}
