mod common;

use common::{conv_oracle, mlp_oracle, random, rng, to_rows};
use inhernet::linalg::{Matrix, Tensor4D};
use inhernet::nn::{finite_difference_grad, max_relative_deviation, Conv2DLayer, Layer, Network, Objective};

fn dense_layers(net: &Network) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    net.layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Dense(d) => Some((to_rows(&d.weight), d.bias.clone().unwrap_or_else(|| vec![0.0; d.weight.cols()]))),
            _ => None,
        })
        .collect()
}

#[test]
fn mlp_forward_matches_oracle() {
    let net = Network::mlp(&[6, 9, 7, 3], 4).unwrap();
    let x = random(11, 6, 5);
    let y = net.forward(&x).unwrap();
    let layers = dense_layers(&net);
    for i in 0..x.rows() {
        let want = mlp_oracle(&layers, x.row(i));
        for (a, b) in y.row(i).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn gradcheck(net: &mut Network, x: &Matrix, obj: &Objective<'_>) -> f64 {
    let out = net.forward_train(x).unwrap();
    let analytic = net.backward(&obj.evaluate(&out).unwrap().1).unwrap();
    let numeric = finite_difference_grad(net, obj, x, 1e-5).unwrap();
    max_relative_deviation(&analytic, &numeric, 1e-6)
}

#[test]
fn mlp_backward_matches_finite_differences_mse() {
    let mut net = Network::mlp(&[4, 6, 5, 2], 8).unwrap();
    let x = random(5, 4, 9);
    let y = random(5, 2, 10);
    assert!(gradcheck(&mut net, &x, &Objective::Mse(&y)) < 1e-4);
}

#[test]
fn mlp_backward_matches_finite_differences_cross_entropy() {
    let mut net = Network::mlp(&[4, 6, 3], 11).unwrap();
    let x = random(6, 4, 12);
    let labels = [0, 2, 1, 1, 0, 2];
    assert!(gradcheck(&mut net, &x, &Objective::CrossEntropy(&labels)) < 1e-4);
}

fn image(c: usize, h: usize, w: usize, flat: &[f64]) -> Vec<Vec<Vec<f64>>> {
    (0..c).map(|ci| (0..h).map(|y| flat[(ci * h + y) * w..(ci * h + y + 1) * w].to_vec()).collect()).collect()
}

fn kernel_rows(k: &Tensor4D) -> Vec<Vec<Vec<Vec<f64>>>> {
    let [n, c, kh, kw] = k.dims();
    (0..n)
        .map(|a| (0..c).map(|b| (0..kh).map(|y| (0..kw).map(|x| k.get(a, b, y, x)).collect()).collect()).collect())
        .collect()
}

#[test]
fn conv_forward_matches_direct_convolution() {
    let mut g = rng(20);
    for &(stride, pad, (h, w)) in &[(1, 0, (6, 6)), (2, 1, (7, 5)), (1, 2, (4, 5)), (3, 1, (9, 8))] {
        let (n, c, k) = (3, 2, 3);
        let kernel = Tensor4D::from_vec([n, c, k, k], (0..n * c * k * k).map(|_| g.normal()).collect()).unwrap();
        let bias: Vec<f64> = (0..n).map(|_| g.normal()).collect();
        let layer = Conv2DLayer::new(kernel.clone(), Some(bias.clone()), stride, pad, (h, w)).unwrap();
        let x = Matrix::from_fn(2, c * h * w, |_, _| g.normal());
        let y = layer.forward(&x).unwrap();
        for s in 0..2 {
            let want: Vec<f64> = conv_oracle(&kernel_rows(&kernel), Some(&bias), &image(c, h, w, x.row(s)), stride, pad)
                .into_iter()
                .flatten()
                .flatten()
                .collect();
            assert_eq!(y.cols(), want.len());
            for (a, b) in y.row(s).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "stride {stride} pad {pad}");
            }
        }
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut g = rng(21);
    let conv = Conv2DLayer::kaiming(3, 2, 3, 2, 1, (5, 6), &mut g).unwrap();
    let out = conv.output_dim();
    let mut net = Network::new(vec![Layer::Conv2d(conv), Layer::Relu]).unwrap();
    let x = random(2, 60, 22);
    let y = random(2, out, 23);
    assert!(gradcheck(&mut net, &x, &Objective::Mse(&y)) < 1e-4);
}

#[test]
fn backward_without_forward_is_an_error() {
    let mut net = Network::mlp(&[2, 3, 1], 0).unwrap();
    assert!(net.backward(&Matrix::zeros(1, 1)).is_err());
}
