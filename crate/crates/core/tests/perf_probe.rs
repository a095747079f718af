//! Manual throughput probe for sizing default architectures.
//! Run with: cargo test -p handwave-core --test perf_probe -- --ignored --nocapture

use std::time::Instant;

use handwave_core::Element;

fn probe(m: usize, k: usize, n: usize, reps: usize) {
    let a = vec![1.0f32; m * k];
    let b = vec![1.0f32; k * n];
    let mut c = vec![0.0f32; m * n];
    // warm up
    f32::gemm(m, k, n, 1.0, &a, false, &b, false, 0.0, &mut c);
    let t0 = Instant::now();
    for _ in 0..reps {
        f32::gemm(m, k, n, 1.0, &a, false, &b, false, 0.0, &mut c);
    }
    let dt = t0.elapsed().as_secs_f64();
    let gflops = (2.0 * m as f64 * k as f64 * n as f64 * reps as f64) / dt / 1e9;
    println!("sgemm {m}x{k}x{n}: {gflops:.2} GF/s ({:.1} ms/iter)", dt / reps as f64 * 1e3);
}

#[test]
#[ignore]
fn gemm_throughput() {
    probe(512, 512, 512, 8);
    // conv-shaped problems (im2col layouts, batch 25)
    probe(8, 32, 25 * 1024, 8); // layer1 of a small ladder
    probe(16, 128, 25 * 256, 16);
    probe(32, 256, 25 * 64, 16);
    probe(64, 512, 25 * 16, 16);
    probe(16, 32, 25 * 1024, 8); // layer1 of the wide ladder
    probe(32, 256, 25 * 256, 16);
    probe(128, 1024, 25 * 16, 16);
    // offset branches: 2N=32 output channels
    probe(32, 32, 25 * 1024, 8);
    probe(32, 512, 25 * 16, 16);
}
