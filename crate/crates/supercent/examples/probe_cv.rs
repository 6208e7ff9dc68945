use supercent::model::{derive_stream, derive_substream, generate_dataset, toy_config};
use supercent::solver::*;
use supercent::sim::loss_subspace;
use supercent::two_stage::fit_two_stage;

fn main() {
    // Selection distribution at sigma_a = 2^2 with the lambda_0-anchored grid.
    let mut cfg = toy_config();
    cfg.sigma_a = 4.0;
    cfg.sigma_y = 0.25;
    cfg.beta_u = 16.0;
    let reps = 40u64;
    let mut within = 0;
    let mut sel = Vec::new();
    let mut loss_cv = Vec::new();
    let mut loss_ts = Vec::new();
    let mut bias_cv = Vec::new();
    let mut bias_ts = Vec::new();
    for rep in 0..reps {
        let mut rng = derive_stream(100, 0, rep);
        let params = cfg.realize(&mut rng).unwrap();
        let data = generate_dataset(&params, &mut rng).unwrap();
        let l0 = lambda_oracle(&params).unwrap();
        let grid: Vec<f64> = (0..21).map(|i| l0 * (2.0f64).powf(-5.0 + 0.5 * i as f64)).collect();
        let selection = LambdaSelection::cv_with_grid(grid);
        let mut cv_rng = derive_substream(100, 0, rep, 1);
        let report = cross_validate_lambda(&data, &selection, &SolverSettings::new(l0), &mut cv_rng).unwrap();
        let ratio = report.lambda_min / l0;
        sel.push(ratio.log2());
        if ratio >= (2.0f64).powf(-1.5) && ratio <= (2.0f64).powf(1.5) { within += 1; }
        let fit = fit_supercent(&data, &SolverSettings::new(report.lambda_min), None).unwrap().fit;
        let ts = fit_two_stage(&data, 1e-10, 100_000).unwrap();
        loss_cv.push(loss_subspace(fit.u_hat.view(), params.u.view()).unwrap());
        loss_ts.push(loss_subspace(ts.u_hat.view(), params.u.view()).unwrap());
        bias_cv.push(fit.beta_u_hat.abs() - 16.0);
        bias_ts.push(ts.beta_u_hat.abs() - 16.0);
    }
    sel.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("log2(lambda_sel/lambda0): {:?}", sel.iter().map(|x| (x * 10.0).round() / 10.0).collect::<Vec<_>>());
    println!("within factor 2^1.5 of lambda0: {within}/{reps}");
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean loss_u: cv {:.5} ts {:.5}", mean(&loss_cv), mean(&loss_ts));
    println!("mean bias_bu: cv {:.4} ts {:.4}", mean(&bias_cv), mean(&bias_ts));
}
