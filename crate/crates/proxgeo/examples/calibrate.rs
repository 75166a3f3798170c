use proxgeo::experiments::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let fam = args.get(1).map(|s| s.as_str()).unwrap_or("min-op");
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(200);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2e-3);
    let batch: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0);
    let file = ExperimentConfigFile {
        family: if fam == "min-op" { Family::MinOp } else { Family::PdeRd },
        seed,
        r: None, l: None, m: None,
        epochs: Some(epochs),
        lr: Some(lr),
        batch_size: if batch > 0 { Some(batch) } else { None },
        eval_interval: Some((epochs / 10).max(1)),
        n_train: None, n_test: None,
        init: None, train_sample_points: None, family_params: None,
    };
    let cfg = file.resolve().unwrap();
    let t0 = std::time::Instant::now();
    let run = run_experiment(&cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    for row in &run.metrics {
        println!("epoch {:5}  train {:.5}  test {:.5}", row.epoch, row.train_mse, row.test_mse);
    }
    let basis = cfg.basis().unwrap();
    let report = evaluate(&run.params, &run.dataset.test, &basis).unwrap();
    let frac = report.sup_errors.iter().filter(|&&e| e <= 0.15).count() as f64
        / report.sup_errors.len() as f64;
    println!(
        "seed {seed}: {dt:.1}s  final_test={:.5}  init_test={:.5}  median_rel={:.4}  sup<=0.15: {:.0}%",
        run.final_test_mse(), run.initial_test_mse(), report.median_rel_l2(), 100.0 * frac
    );
}
