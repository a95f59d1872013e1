//! Rough training-throughput check: times one configuration on a moderator
//! dataset. Run: `cargo run --release -p mcfid --example bench_train [layers neurons lr batch u]`

use std::time::Instant;

use mcfid::dataset::{fit_scaler, generate_dataset, split};
use mcfid::emulator::UncertaintySpec;
use mcfid::nn::{init_net, prepare_training_data, train, NetConfig};
use mcfid::problems::ProblemId;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let layers: usize = args.get(1).map_or(4, |s| s.parse().unwrap());
    let neurons: usize = args.get(2).map_or(400, |s| s.parse().unwrap());
    let lr: f64 = args.get(3).map_or(1e-4, |s| s.parse().unwrap());
    let batch: usize = args.get(4).map_or(4, |s| s.parse().unwrap());
    let u: f64 = args.get(5).map_or(0.01, |s| s.parse().unwrap());

    let ds = generate_dataset(ProblemId::Moderator, UncertaintySpec::new(u).unwrap(), 7);
    let sp = split(&ds, 7).unwrap();
    let sc = fit_scaler(&ds, &sp.train);
    let data = prepare_training_data(&ds, &sp, &sc);
    let config = NetConfig::new(layers, neurons, lr, batch);

    let t0 = Instant::now();
    let mut net = init_net(config, 2, 1);
    net.set_scalers(&sc);
    let report = train(&mut net, &data, 1).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "layers={layers} neurons={neurons} lr={lr} batch={batch} u={u}: {} epochs (best {}), r2={:.6}, {:.2}s total, {:.1}ms/epoch",
        report.epochs_run,
        report.best_epoch,
        report.test_r2_aggregate,
        dt,
        1000.0 * dt / report.epochs_run as f64
    );
}
