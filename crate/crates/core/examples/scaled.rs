use actguide::harness::{run_experiment, ExperimentConfig};

fn main() {
    let mut cfg = ExperimentConfig::default();
    if let Some(s) = std::env::args().nth(1) {
        cfg.seed = s.parse().unwrap();
    }
    let t = std::time::Instant::now();
    let r = run_experiment(&cfg).unwrap();
    for m in &r.methods {
        println!(
            "{:10} mean {:12.4} var {:12.4} t {:.2}s {}",
            m.name, m.cost.mean, m.cost.variance, m.wall_time_s, m.details
        );
    }
    println!("total {:.1}s", t.elapsed().as_secs_f64());
}
