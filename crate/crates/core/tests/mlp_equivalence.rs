use chebynet::matrix::Matrix;
use chebynet::network::{ChebyLayer, ChebyMode, DenseLayer, InputMap, Layer, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, s: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-s..=s)).collect(),
    )
    .unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn order_zero_layer_is_a_dense_layer() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, outputs, rows) = (6, 4, 9);
        let w = random(&mut rng, outputs, inputs, 0.15);
        let b: Vec<f64> = (0..outputs)
            .map(|_| rng.random_range(-0.15..=0.15))
            .collect();
        let x = random(&mut rng, rows, inputs, 1.0);
        let dout = random(&mut rng, rows, outputs, 1.0);

        let dense = Layer::Dense(DenseLayer::new(w.clone(), b.clone()).unwrap());
        let cheby = Layer::Cheby(
            ChebyLayer::new(inputs, 0, w, b, ChebyMode::WeightForm, InputMap::Identity).unwrap(),
        );
        let (yd, td) = dense.forward_traced(&x).unwrap();
        let (yc, tc) = cheby.forward_traced(&x).unwrap();
        assert!(
            max_diff(yd.as_slice(), yc.as_slice()) <= 1e-12,
            "seed {seed}"
        );

        let (gd, dxd) = dense.backward(&td, &dout, true).unwrap();
        let (gc, dxc) = cheby.backward(&tc, &dout, true).unwrap();
        assert!(max_diff(&gd.weights, &gc.weights) <= 1e-10);
        assert!(max_diff(&gd.bias, &gc.bias) <= 1e-10);
        assert!(max_diff(dxd.unwrap().as_slice(), dxc.unwrap().as_slice()) <= 1e-10);
    }
}

#[test]
fn order_zero_network_trains_like_the_mlp() {
    for seed in 0..20 {
        let mlp = Network::mlp(3, &[4, 2], 2, &mut ChaCha8Rng::seed_from_u64(seed));
        let cheby = Network::cheby(
            3,
            &[4, 2],
            2,
            0,
            ChebyMode::WeightForm,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let x = random(&mut rng, 16, 3, 1.0);
        let y: Vec<usize> = (0..16).map(|_| rng.random_range(0..2)).collect();
        let (lm, gm) = mlp.loss_and_grads(&x, &y).unwrap();
        let (lc, gc) = cheby.loss_and_grads(&x, &y).unwrap();
        assert!((lm - lc).abs() <= 1e-12);
        for (a, b) in gm.tensors().iter().zip(gc.tensors()) {
            assert!(max_diff(a, b) <= 1e-10);
        }
    }
}

#[test]
fn expansion_form_at_order_zero_ignores_inputs() {
    let layer = Layer::Cheby(
        ChebyLayer::new(
            2,
            0,
            Matrix::from_rows(&[[0.5, -1.0]]).unwrap(),
            vec![0.25],
            ChebyMode::ExpansionForm,
            InputMap::Identity,
        )
        .unwrap(),
    );
    let x = Matrix::from_rows(&[[0.3, -0.8], [1.0, 1.0]]).unwrap();
    let y = layer.forward(&x).unwrap();
    assert_eq!(y.as_slice(), &[-0.25, -0.25]);
}
