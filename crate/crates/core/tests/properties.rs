use std::sync::Arc;

use dampflow_core::analysis::{fit_algebraic, Column, Window};
use dampflow_core::{
    dirichlet_energy, energy_gradient, p_laplacian, EnergySample, Field, Grid, PExponent,
};
use proptest::prelude::*;

fn field_on(grid: Arc<Grid>, values: Vec<f64>) -> Field {
    Field::new(grid, values).unwrap()
}

fn grid_strategy() -> impl Strategy<Value = Arc<Grid>> {
    prop_oneof![
        (3usize..12, 0.5f64..3.0).prop_map(|(n, l)| Arc::new(Grid::new(1, &[n], &[l]).unwrap())),
        (3usize..7, 3usize..7, 0.5f64..2.0, 0.5f64..2.0)
            .prop_map(|(n0, n1, l0, l1)| Arc::new(Grid::new(2, &[n0, n1], &[l0, l1]).unwrap())),
    ]
}

fn grid_and_values() -> impl Strategy<Value = (Arc<Grid>, Vec<f64>)> {
    grid_strategy().prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), prop::collection::vec(-1.0f64..1.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_gradient_matches_central_differences(
        (grid, values) in grid_and_values(),
        p in prop::sample::select(vec![2.0, 3.0, 4.0]),
    ) {
        let p = PExponent::new(p).unwrap();
        let u = field_on(grid.clone(), values.clone());
        let grad = energy_gradient(&u, p);
        let scale = grad.max_abs().max(1e-3);
        let h = 1e-5;
        for k in 0..grid.node_count() {
            if grid.is_boundary(k) {
                prop_assert_eq!(grad.values()[k], 0.0);
                continue;
            }
            let mut plus = values.clone();
            let mut minus = values.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (dirichlet_energy(&field_on(grid.clone(), plus), p)
                - dirichlet_energy(&field_on(grid.clone(), minus), p)) / (2.0 * h);
            prop_assert!((fd - grad.values()[k]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn linear_laplacian_is_linear(
        (grid, a) in grid_and_values(),
        seed in any::<u64>(),
        s in -3.0f64..3.0,
    ) {
        let p = PExponent::new(2.0).unwrap();
        let b: Vec<f64> = (0..a.len()).map(|k| ((seed.wrapping_add(k as u64) % 1000) as f64) / 500.0 - 1.0).collect();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let la = p_laplacian(&field_on(grid.clone(), a), p);
        let lb = p_laplacian(&field_on(grid.clone(), b), p);
        let lc = p_laplacian(&field_on(grid.clone(), combo), p);
        let bound = 1e-10 * (1.0 + la.max_abs() + s.abs() * lb.max_abs());
        for k in 0..grid.node_count() {
            prop_assert!((lc.values()[k] - la.values()[k] - s * lb.values()[k]).abs() <= bound);
        }
    }

    #[test]
    fn p_laplacian_is_homogeneous_of_degree_p_minus_one(
        (grid, values) in grid_and_values(),
        p in 2.0f64..6.0,
        s in 0.1f64..4.0,
    ) {
        let p = PExponent::new(p).unwrap();
        let u = field_on(grid.clone(), values.clone());
        let su = field_on(grid, values.iter().map(|v| s * v).collect());
        let base = p_laplacian(&u, p);
        let scaled = p_laplacian(&su, p);
        let factor = s.powf(p.value() - 1.0);
        for (x, y) in base.values().iter().zip(scaled.values()) {
            prop_assert!((y - factor * x).abs() <= 1e-9 * (1.0 + factor * base.max_abs()));
        }
    }

    #[test]
    fn algebraic_fit_recovers_exponent(
        slope in -3.0f64..-0.01,
        c in 0.01f64..100.0,
    ) {
        let samples: Vec<EnergySample> = (0..60)
            .map(|k| {
                let t = 10f64.powf(k as f64 / 20.0);
                let mut r = [0.0; 12];
                r[0] = t;
                r[5] = c * t.powf(slope);
                EnergySample::from_record(&r)
            })
            .collect();
        let fit = fit_algebraic(&samples, Column::W1pErr, Window::new(1.0, 1000.0).unwrap(), 0.0).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }
}
