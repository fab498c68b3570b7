use cvxfn::extension::*;
use cvxfn::geometry::*;
use cvxfn::reference::random_max_affine;
use rand::Rng;

fn random_instance(dim: usize, n: usize, seed: u64) -> SampleSet {
    let l = 1.0;
    let f = random_max_affine(dim, 4, l, seed);
    let mut r = cvxfn::rng::stream(seed, "instance-points");
    let pts: Vec<Vector> = (0..n)
        .map(|_| Vector::new((0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| f.evaluate(p)).collect();
    SampleSet::new(pts, ys, l).unwrap()
}

#[test]
fn dbg_interp() {
    for seed in 0..10u64 {
        let s = random_instance(2, 2 + (seed as usize % 7), seed);
        for (i, (xi, yi)) in s.points().iter().zip(s.values()).enumerate() {
            let f = primal_envelope(&s, xi, 500).unwrap();
            if (f - yi).abs() > 1e-6 {
                println!("seed={seed} i={i} n={} y={yi} env={f} diff={}", s.len(), f - yi);
            }
        }
    }
}

#[test]
fn dbg_jensen() {
    let mut r = cvxfn::rng::stream(43, "env-lip");
    for seed in 0..5u64 {
        let s = random_instance(2, 4, seed + 300);
        let l = s.lipschitz();
        for rep in 0..40 {
            let a = Vector::new(vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).unwrap();
            let b = Vector::new(vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).unwrap();
            let fa = primal_envelope(&s, &a, 500).unwrap();
            let fb = primal_envelope(&s, &b, 500).unwrap();
            if (fa - fb).abs() > l * a.dist(&b) + 2e-6 {
                println!("seed={seed} rep={rep} LIPSCHITZ violated: {} vs {}", (fa-fb).abs(), l*a.dist(&b));
            }
            let t: f64 = r.gen_range(0.0..1.0);
            let mid = a.scaled(t).add(&b.scaled(1.0 - t));
            let fm = primal_envelope(&s, &mid, 500).unwrap();
            if fm > t * fa + (1.0 - t) * fb + 2e-6 {
                println!("seed={seed} rep={rep} JENSEN violated by {} (fm={fm})", fm - t*fa - (1.0-t)*fb);
            }
        }
    }
}
