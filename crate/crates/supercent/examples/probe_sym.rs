// probe: symmetric variant behavior vs lambda
use ndarray::{Array1, Array2};
use supercent::linalg;
use supercent::model::{derive_stream, Dataset};
use supercent::solver::{fit_supercent_symmetric, SolverSettings};

fn main() {
    let n = 32usize;
    let mut rng = derive_stream(18, 0, 0);
    let (u, _) = supercent::model::make_centrality_pair(n, 0.0, &mut rng).unwrap();
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let noise: f64 = rng.sample(StandardNormal);
            let val = 1.2 * u[i] * u[j] + 0.4 * noise;
            a[[i, j]] = val;
            a[[j, i]] = val;
        }
    }
    let mut x = Array2::<f64>::zeros((n, 1));
    for i in 0..n { x[[i,0]] = 1.0; }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let noise: f64 = rng.sample(StandardNormal);
        y[i] = 2.0 * u[i] + 0.3 * noise;
    }
    let data = Dataset::new(a, x, y).unwrap();
    let (_, lead) = linalg::leading_eigenpair(data.a.view(), 1e-12, 500_000).unwrap();
    for lam in [1.0, 100.0, 1e4, 1e6, 1e9] {
        let mut s = SolverSettings::new(lam);
        s.max_iter = 5000;
        match fit_supercent_symmetric(&data, &s) {
            Ok(o) => println!(
                "lambda={lam:.0e} converged={} iters={} sin_angle_to_eig={:.3e} d_hat={:.4} beta_u={:.4}",
                o.fit.converged, o.fit.iterations,
                linalg::sin_angle(o.fit.u_hat.view(), lead.view()),
                o.fit.d_hat, o.fit.beta_u_hat
            ),
            Err(e) => println!("lambda={lam:.0e} ERR {e}"),
        }
    }
}
