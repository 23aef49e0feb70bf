//! Tour of the compressor kinds: kept support, residuals, encoded sizes and
//! Monte-Carlo approximation factors.
//!
//!     cargo run --release --example compressor_tour

use cser::compressors::{
    compress, delta_estimate, encoded_size_bits, residual, CompressorSpec,
};
use cser::numerics::{norm_sq, Vector};

fn main() -> cser::Result<()> {
    let v = Vector::from_vec(vec![1.0, -5.0, 2.0, 0.5, -0.25, 4.0, -3.0, 0.125]);
    println!("input: {:?}", v.as_slice());

    let specs = [
        ("identity", CompressorSpec::identity()),
        ("zero", CompressorSpec::zero()),
        ("top_k (R=4)", CompressorSpec::top_k(4.0)),
        ("random_k (R=4)", CompressorSpec::random_k(4.0, 7)),
        ("blockwise (R=2, B=4)", CompressorSpec::grbs(2.0, 4, 7)),
    ];
    for (name, spec) in &specs {
        let msg = compress(spec, &v, 1)?;
        let r = residual(&v, &msg)?;
        println!(
            "{name:<22} kept = {:?}\n{:<22} residual = {:?}, payload = {} bits ({} value + {} index)",
            msg.dense.as_slice(),
            "",
            r.as_slice(),
            encoded_size_bits(&msg),
            msg.value_bits(),
            msg.index_bits(),
        );
        // dropped mass never exceeds the (1 - delta) budget
        let delta = spec.delta_nominal(v.len());
        println!(
            "{:<22} dropped mass = {:.4}, (1 - delta_nominal) * |v|^2 = {:.4}",
            "",
            norm_sq(&r),
            (1.0 - delta) * norm_sq(&v)
        );
    }

    println!(
        "\nnote: random_k and blockwise satisfy the budget in expectation only;\n\
         a single draw may exceed it, as the random_k line above can show.\n"
    );
    println!("Monte-Carlo approximation factors over standard-normal vectors (d = 4096):");
    for ratio in [2.0, 4.0, 32.0] {
        let spec = CompressorSpec::grbs(ratio, 64, 21);
        let est = delta_estimate(&spec, 5000, 4096, 5)?;
        println!(
            "  blockwise R = {ratio:>4}: E[dropped share] = {est:.4}   (expected {:.4})",
            1.0 - 1.0 / ratio
        );
    }
    Ok(())
}
