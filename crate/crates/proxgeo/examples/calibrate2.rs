use proxgeo::experiments::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(400);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let file = ExperimentConfigFile {
        family: Family::MinOp, seed,
        r: None, l: None, m: None,
        epochs: Some(epochs), lr: Some(lr), batch_size: None,
        eval_interval: Some((epochs / 8).max(1)),
        n_train: None, n_test: None, init: None, train_sample_points: None, family_params: None,
    };
    let cfg = file.resolve().unwrap();
    let run = run_experiment(&cfg).unwrap();
    for row in &run.metrics { println!("epoch {:5} train {:.5} test {:.5}", row.epoch, row.train_mse, row.test_mse); }
    let basis = cfg.basis().unwrap();
    let report = evaluate(&run.params, &run.dataset.test, &basis).unwrap();
    // error vs |b| structure
    let mut rows: Vec<(f64, f64)> = run.dataset.test.iter().zip(&report.l2_errors).map(|(inst, e)| {
        let bmin = match &inst.g { GSpec::LogSumExp{b,..} => b.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min), _ => f64::NAN };
        (bmin, *e)
    }).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("worst 12 (min|b|, l2err):");
    for (bm, e) in rows.iter().take(12) { println!("  {:.3}  {:.3}", bm, e); }
    let frac = report.sup_errors.iter().filter(|&&e| e <= 0.15).count() as f64 / report.sup_errors.len() as f64;
    println!("final_test={:.5} median_rel={:.4} sup<=0.15: {:.0}%", run.final_test_mse(), report.median_rel_l2(), 100.0*frac);
}
