mod common;

use phaseglm_core::radial::calibrate_radial;
use phaseglm_core::seeding::stream;
use phaseglm_core::theory::{check_pg_condition, univariate_separation_probability};
use phaseglm_core::{LinkFn, ModelParams, RadialFamily};

#[test]
fn formula_matches_simulation() {
    println!("{}", common::formula_vs_simulation().unwrap());
}

#[test]
fn fair_coin_gives_two_n_over_two_to_the_n() {
    let params = ModelParams::new(1.0, 0.0, 0.0).unwrap();
    for family in [RadialFamily::Gamma { shape: 0.5 }, RadialFamily::LogNormal] {
        let radial = calibrate_radial(family, 7, 1.0).unwrap();
        let mut rng = stream(2, &[]);
        for n in 1..=12 {
            let est = univariate_separation_probability(&params, LinkFn::Probit, &radial, 7, n, 5000, &mut rng).unwrap();
            let exact = 2.0 * n as f64 / 2f64.powi(n as i32);
            assert!((est.value - exact).abs() <= 1e-12 + 3.0 * est.se, "n = {n}: {est:?} vs {exact}");
        }
    }
}

#[test]
fn single_entry_table() {
    let params = ModelParams::new(1.0, 0.0, 1.0).unwrap();
    let radial = calibrate_radial(RadialFamily::HalfNormal, 10, 1.0).unwrap();
    let table = check_pg_condition(&params, LinkFn::Logit, &radial, 10, &[30], 10_000, &mut stream(3, &[])).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.decreasing);
}
