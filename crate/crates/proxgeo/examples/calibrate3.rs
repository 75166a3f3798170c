use proxgeo::experiments::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let epochs: usize = args[2].parse().unwrap();
    let lr: f64 = args[3].parse().unwrap();
    let batch: usize = args[4].parse().unwrap();
    let train_samples: bool = args.get(5).map(|s| s == "ts").unwrap_or(false);
    let file = ExperimentConfigFile {
        family: Family::MinOp, seed,
        r: None, l: None, m: None,
        epochs: Some(epochs), lr: Some(lr), batch_size: Some(batch),
        eval_interval: Some((epochs / 4).max(1)),
        n_train: None, n_test: None, init: None,
        train_sample_points: Some(train_samples), family_params: None,
    };
    let cfg = file.resolve().unwrap();
    let t0 = std::time::Instant::now();
    let run = run_experiment(&cfg).unwrap();
    let basis = cfg.basis().unwrap();
    let report = evaluate(&run.params, &run.dataset.test, &basis).unwrap();
    let frac = report.sup_errors.iter().filter(|&&e| e <= 0.15).count() as f64 / report.sup_errors.len() as f64;
    println!("lr={} batch={} ts={} : {:.0}s test={:.4} med={:.4} sup<=0.15:{:.0}%",
        lr, batch, train_samples, t0.elapsed().as_secs_f64(), run.final_test_mse(), report.median_rel_l2(), 100.0*frac);
}
