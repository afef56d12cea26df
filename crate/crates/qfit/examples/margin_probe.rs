//! Margin probe for the stochastic acceptance criteria (not part of CI).

use qfit::circuit::{Circuit, Gate, GateKind};
use qfit::numerics::{haar_random_unitary, stream_rng};
use qfit::optimizer::{multistart_instantiate, OptimizerConfig, Termination};
use rand_chacha::ChaCha8Rng;

fn u3_gate(q: usize, rng: &mut ChaCha8Rng) -> Gate {
    Gate::new(vec![q], GateKind::Variable, haar_random_unitary(2, rng).unwrap(), Some("u3".into())).unwrap()
}

fn layered_circuit(n: usize, layers: usize, rng: &mut ChaCha8Rng) -> Circuit {
    let mut circ = Circuit::new(n);
    for l in 0..layers {
        for q in 0..n { circ.push(u3_gate(q, rng)).unwrap(); }
        if n >= 2 {
            for q in (l % 2..n - 1).step_by(2) { circ.push(Gate::cnot(q, q + 1).unwrap()).unwrap(); }
        }
    }
    for q in 0..n { circ.push(u3_gate(q, rng)).unwrap(); }
    circ
}

fn main() {
    // Criterion-5 style with more patient plateau settings.
    for (label, window, dtr, max_iter) in [
        ("window5/dtr1e-5", 5usize, 1e-5f64, 2_000u64),
        ("window12/dtr1e-5", 12, 1e-5, 4_000),
        ("window8/dtr1e-6", 8, 1e-6, 4_000),
    ] {
        let mut total_conv = 0;
        let mut slowest = 0u128;
        for meta in 0..3u64 {
            for trial in 0..20 {
                let mut rng = stream_rng(105 + meta * 1000, trial as u64);
                let structure = layered_circuit(4, 1, &mut rng);
                let mut extra = layered_circuit(4, 1, &mut rng);
                let mut template = structure;
                while let Some(g) = extra.gates().first().cloned() {
                    template.push(g).unwrap();
                    extra.remove_gate(0);
                }
                let target = template.unitary().unwrap();
                template.randomize_variable_gates(&mut rng).unwrap();
                let cfg = OptimizerConfig {
                    multistarts: 16, multistart_batch: 8, dist_tol: 1e-8,
                    diff_tol_r: dtr, plateau_window: window, max_iter,
                    seed: 1000 + meta * 31 + trial as u64,
                    ..OptimizerConfig::default()
                };
                let t0 = std::time::Instant::now();
                let res = multistart_instantiate(&target, &template, &cfg).unwrap();
                if res.termination == Termination::Converged { total_conv += 1; }
                slowest = slowest.max(t0.elapsed().as_millis());
            }
        }
        println!("{label}: converged {total_conv}/60, slowest {slowest} ms");
    }

    // Criterion 6/7 instance driven through multistart.
    for meta in 0..8u64 {
        let mut rng = stream_rng(106, meta * 7);
        let structure = layered_circuit(4, 3, &mut rng);
        let target = { let mut t = structure.clone(); t.randomize_variable_gates(&mut rng).unwrap(); t.unitary().unwrap() };
        let mut template = structure;
        template.randomize_variable_gates(&mut rng).unwrap();
        let config = OptimizerConfig {
            num_training_states: 2, overtrain_ratio: 0.1, diff_tol_r: 1e-5,
            plateau_window: 10, max_iter: 50_000, multistarts: 8, multistart_batch: 4,
            seed: 900 + meta,
            ..OptimizerConfig::default()
        };
        let res = multistart_instantiate(&target, &template, &config).unwrap();
        println!(
            "restart instance meta {meta}: {:?} restarts={} final_m={} states_drawn={} start={} c_train={:.2e}",
            res.termination, res.restarts, res.final_m, res.states_drawn, res.start_index, res.c_train
        );
    }
}
