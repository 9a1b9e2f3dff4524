//! Finite-difference checks of the actor and critic gradients on random
//! networks and inputs.
//!
//! cargo run --release --example gradient_check

use fcsrl::agent::{actor_grad, actor_loss, cost_critic_grad, cost_critic_loss, reward_critic_grad, reward_critic_loss, CriticPair};
use fcsrl::nn::{grad_check, hcat, softmax_rows, Activation, GradCheckOptions, Mat, Mlp};
use fcsrl::repr::Bins;
use rand::{Rng, SeedableRng};

// Draws whose ReLU units sit this close to zero are redrawn; central
// differences straddling a kink say nothing about the analytic gradient.
const MARGIN: f64 = 1e-3;

fn main() -> fcsrl::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let (x_dim, a_dim, bins) = (5, 2, Bins::cost_value(21, 0.9));
    let opts = GradCheckOptions::default();
    let (mut worst, mut instances, mut redrawn) = ([0.0f64; 3], 0, 0);
    while instances < 20 {
        let actor = Mlp::new(&[x_dim, 8, a_dim], Activation::Relu, Activation::Tanh, &mut rng);
        let reward = Mlp::new(&[x_dim + a_dim, 8, 1], Activation::Relu, Activation::Identity, &mut rng);
        let cost = Mlp::new(&[x_dim + a_dim, 8, bins.n], Activation::Relu, Activation::Identity, &mut rng);
        let x = Mat::from_shape_fn((6, x_dim), |_| rng.random_range(-1.0..1.0));
        let xa = Mat::from_shape_fn((6, x_dim + a_dim), |_| rng.random_range(-1.0..1.0));
        let x_pi = hcat(&x, &actor.forward(&x)?);
        let margin = [actor.relu_margin(&x)?, reward.relu_margin(&xa)?, cost.relu_margin(&xa)?, reward.relu_margin(&x_pi)?, cost.relu_margin(&x_pi)?];
        if margin.iter().any(|&m| m < MARGIN) {
            redrawn += 1;
            continue;
        }
        instances += 1;
        let lambda = rng.random_range(0.0..3.0);
        let critics = CriticPair { reward: &reward, cost: &cost, cost_bins: &bins };

        let (_, g) = actor_grad(&actor, critics, &x, lambda, 1e-3)?;
        let r = grad_check(&actor, |m| actor_loss(m, critics, &x, lambda, 1e-3).unwrap(), &g, opts);
        worst[0] = worst[0].max(r.max_rel_error);

        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..3.0)).collect();
        let (_, g) = reward_critic_grad(&reward, &xa, &y)?;
        let r = grad_check(&reward, |m| reward_critic_loss(m, &xa, &y).unwrap(), &g, opts);
        worst[1] = worst[1].max(r.max_rel_error);

        let t = softmax_rows(&Mat::from_shape_fn((6, bins.n), |_| rng.random_range(-2.0..2.0)));
        let (_, g) = cost_critic_grad(&cost, &xa, &t)?;
        let r = grad_check(&cost, |m| cost_critic_loss(m, &xa, &t).unwrap(), &g, opts);
        worst[2] = worst[2].max(r.max_rel_error);
    }
    println!("{instances} instances ({redrawn} redrawn near a ReLU kink)");
    println!("max relative error: actor {:.2e}, reward critic {:.2e}, cost critic {:.2e}", worst[0], worst[1], worst[2]);
    Ok(())
}
