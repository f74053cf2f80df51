use std::time::Instant;

use slowlight::analysis::HopScheme;

fn main() {
    let t = Instant::now();
    let sweep = HopScheme::<f64>::default().simulate(1.0, &[5.0, 50.0, 100.0]).unwrap();
    for (ns, loss, _) in &sweep.hops {
        let eq5 = slowlight::oracle::eq5_loss(1.0, *ns).unwrap();
        println!("switch {ns} ns: simulated loss {loss:.4}, closed form {eq5:.4}");
    }
    println!("elapsed {:.1} s", t.elapsed().as_secs_f64());
}
