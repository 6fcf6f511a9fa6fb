use gendom::flows::{fpu_system, integrate_flow, systems::fpu_half_period, IntegrationOptions};
use gendom::interval::BoxDomain;

fn main() {
    let k = 5000.0;
    let sys = fpu_system(2, k);
    let b = BoxDomain::cube(6, 0.05).unwrap();
    for budget in [f64::INFINITY, 1e-8, 1e-10] {
        let t = std::time::Instant::now();
        let opts = IntegrationOptions::order(6).budget(budget);
        match integrate_flow(&sys, &b, 0.0, fpu_half_period(k), &opts) {
            Ok(flow) => {
                let hs: Vec<f64> = flow.steps.iter().map(|s| s.h).collect();
                println!(
                    "budget {budget:.1e}: {} steps in {:?}, h range [{:.2e}, {:.2e}], widths {:?}",
                    flow.steps.len(),
                    t.elapsed(),
                    hs.iter().cloned().fold(f64::INFINITY, f64::min),
                    hs.iter().cloned().fold(0.0, f64::max),
                    flow.remainder_widths()
                );
            }
            Err(e) => println!("budget {budget:.1e}: error {e} after {:?}", t.elapsed()),
        }
    }
}
