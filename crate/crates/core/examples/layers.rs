//! The tensor building blocks on tiny hand-checkable inputs.

use lungseg::tensor::{argmax_channels, batch_norm, conv2d, relu, softmax_channels, upsample_nearest};
use lungseg::{BnParams, KernelBank, Result, Tensor};

fn show(name: &str, t: &Tensor) {
    let (c, h, w) = t.shape();
    println!("{name} ({c}x{h}x{w}):");
    for ch in 0..c {
        for y in 0..h {
            let row: Vec<String> = (0..w).map(|x| format!("{:7.4}", t.get(ch, y, x))).collect();
            println!("  [{ch}] {}", row.join(" "));
        }
    }
}

fn main() -> Result<()> {
    let ones = Tensor::filled(1, 3, 3, 1.0);
    let box3 = KernelBank::new(1, 1, 3, 3, vec![1.0; 9], vec![0.0])?;
    // Zero padding: corners see 4 pixels, edges 6, the centre 9.
    show("3x3 box filter over ones", &conv2d(&ones, &box3)?);

    let x = Tensor::new(1, 1, 4, vec![-2.0, -0.5, 0.0, 3.0])?;
    show("relu", &relu(&x));

    let bn = BnParams::new(vec![2.0], vec![1.0], vec![0.5], vec![4.0], 0.0)?;
    show("batch norm, gamma 2 beta 1 mean 0.5 var 4", &batch_norm(&x, &bn)?);

    let small = Tensor::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0])?;
    show("nearest upsample x2", &upsample_nearest(&small, 2)?);

    let logits = Tensor::new(2, 1, 3, vec![0.0, 2.0, 1000.0, 0.0, -1.0, 1000.0])?;
    let p = softmax_channels(&logits)?;
    show("softmax over channels", &p);
    println!("argmax labels: {:?}", argmax_channels(&p).labels());
    Ok(())
}
