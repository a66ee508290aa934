//! Dense f64 tensor engine with reverse-mode autodiff, gradient checking,
//! Adam, and the binary checkpoint container.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod store;
pub mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_multi};
pub use graph::{Graph, NodeId, NormAxis};
pub use store::{ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let data = (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor::new(vec![r, c], data).unwrap()
    }

    #[test]
    fn row_softmax_uniform_logits() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let y = g.row_softmax(x).unwrap();
        assert_eq!(g.data(y), &[0.5, 0.5]);
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_tensor(&mut rng, 3, 3);
        let mut g = Graph::new();
        let i3 = g.input(Tensor::identity(3));
        let av = g.input(a.clone());
        let y = g.matmul(i3, av).unwrap();
        assert_eq!(g.data(y), a.data());
    }

    #[test]
    fn gelu_and_softmax_match_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, 3, 4);
        let mut g = Graph::new();
        let xid = g.input(x.clone());
        let gl = g.gelu(xid).unwrap();
        let sm = g.row_softmax(xid).unwrap();

        // independent scalar-loop references
        for (i, &v) in x.data().iter().enumerate() {
            let u = (2.0f64 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v * v * v);
            let expect = 0.5 * v * (1.0 + u.tanh());
            assert!((g.data(gl)[i] - expect).abs() < 1e-12);
        }
        for r in 0..3 {
            let row = &x.data()[r * 4..(r + 1) * 4];
            let mut exps = [0.0; 4];
            let mut s = 0.0;
            for j in 0..4 {
                exps[j] = row[j].exp();
                s += exps[j];
            }
            for j in 0..4 {
                assert!((g.data(sm)[r * 4 + j] - exps[j] / s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_axes_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, 6, 5);
        let mut g = Graph::new();
        let xid = g.input(x);
        let rs = g.row_softmax(xid).unwrap();
        let cs = g.col_softmax(xid).unwrap();
        for i in 0..6 {
            let s: f64 = (0..5).map(|j| g.data(rs)[i * 5 + j]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        for j in 0..5 {
            let s: f64 = (0..6).map(|i| g.data(cs)[i * 5 + j]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(g.data(rs).iter().all(|&v| v >= 0.0));
        assert!(g.data(cs).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn instance_norm_standardizes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = rand_tensor(&mut rng, 4, 64);
        let mut g = Graph::new();
        let xid = g.input(x);
        let y = g.instance_norm(xid, 1e-8).unwrap();
        for i in 0..4 {
            let row = &g.data(y)[i * 64..(i + 1) * 64];
            let mu = row.iter().sum::<f64>() / 64.0;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 64.0;
            assert!(mu.abs() < 1e-9, "mean {}", mu);
            assert!((var - 1.0).abs() < 1e-6, "var {}", var);
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_sum_is_2x() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.0));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert!(g.backward(s).is_err());
    }

    #[test]
    fn backward_on_detached_tensor_is_an_error() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(1.0));
        let s = g.sum(x).unwrap();
        assert!(g.backward(s).is_err());
    }

    #[test]
    fn ops_after_backward_are_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.0));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert!(g.sum(x).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(vec![2, 3]));
        let b = g.input(Tensor::zeros(vec![3, 3]));
        assert!(g.add(a, b).is_err());
        let c = g.input(Tensor::zeros(vec![2, 2]));
        assert!(g.matmul(a, c).is_err());
    }

    #[test]
    fn nonfinite_output_is_an_error() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![1, 1], vec![1e308]).unwrap());
        let b = g.input(Tensor::new(vec![1, 1], vec![1e308]).unwrap());
        assert!(g.add(a, b).is_err());
    }

    #[test]
    fn composite_ops_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = rand_tensor(&mut rng, 3, 6);
        let v = rand_tensor(&mut rng, 1, 6);
        let beta = Tensor::scalar(0.3);
        let err = grad_check_multi(
            |g, ids| {
                let (x, v, beta) = (ids[0], ids[1], ids[2]);
                let a = g.row_softmax(x)?;
                let b = g.layer_norm(x, 1e-8)?;
                let m = g.scalar_mix(beta, a, b)?;
                let m = g.mul_row_vec(m, v)?;
                let t = g.transpose(m)?;
                let p = g.matmul(m, t)?;
                let c = g.col_softmax(p)?;
                let cc = g.concat_cols(c, c)?;
                let s = g.slice_cols(cc, 1, 3)?;
                // weight the reduction so normalized rows/cols don't make
                // the objective a constant
                let w = g.sigmoid(s)?;
                let sw = g.mul(s, w)?;
                g.mean(sw)
            },
            &[x, v, beta],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "max rel err = {}", err);
    }

    #[test]
    fn index_map_and_col_vec_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = rand_tensor(&mut rng, 2, 4);
        let v = rand_tensor(&mut rng, 1, 2);
        let err = grad_check_multi(
            |g, ids| {
                let (x, v) = (ids[0], ids[1]);
                // overlapping gather with a padding hole
                let map = vec![
                    Some(0), Some(1), Some(1), Some(2),
                    None, Some(5), Some(6), Some(6),
                ];
                let m = g.index_map(x, vec![2, 4], map)?;
                let m = g.mul_col_vec(m, v)?;
                let sg = g.sigmoid(m)?;
                let n = g.row_normalize(sg)?;
                let nw = g.mul(n, sg)?;
                g.sum(nw)
            },
            &[x, v],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "max rel err = {}", err);
    }

    #[test]
    fn bce_matches_loop_oracle_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let logits = rand_tensor(&mut rng, 2, 5);
        let labels: Vec<f64> = (0..10).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let labels2 = labels.clone();
        let err = grad_check(
            move |g, x| {
                let p = g.sigmoid(x)?;
                g.bce_loss(p, &labels2, 1e-7)
            },
            &logits,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "bce grad err = {}", err);

        let mut g = Graph::new();
        let x = g.input(logits.clone());
        let p = g.sigmoid(x).unwrap();
        let l = g.bce_loss(p, &labels, 1e-7).unwrap();
        let mut expect = 0.0;
        for (i, &t) in labels.iter().enumerate() {
            let pv = 1.0 / (1.0 + (-logits.data()[i]).exp());
            let pc = pv.clamp(1e-7, 1.0 - 1e-7);
            expect -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        }
        expect /= 10.0;
        assert!((g.data(l)[0] - expect).abs() < 1e-12);
    }
}
