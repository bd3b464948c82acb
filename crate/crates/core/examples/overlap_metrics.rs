//! Dice and IoU on a pair of small masks, including the empty/empty convention.

use lungseg::metrics::{aggregate, overlap_counts, PairReport};
use lungseg::{BinaryMask, Result};

fn main() -> Result<()> {
    let gt = BinaryMask::from_fn(3, 3, |y, _| y < 2);
    let pred = BinaryMask::from_fn(3, 3, |y, _| y > 0);
    let c = overlap_counts(&pred, &gt)?;
    println!("counts: {c:?}");
    println!("dice {:.6}  iou {:.6}", c.dice(), c.iou());

    let empty = BinaryMask::empty(3, 3);
    let reports = vec![
        PairReport::evaluate("shifted", &pred, &gt, false)?,
        PairReport::evaluate("perfect", &gt, &gt, false)?,
        PairReport::evaluate("both-empty", &empty, &empty, false)?,
        PairReport::evaluate("missed", &empty, &gt, false)?,
    ];
    for r in &reports {
        println!(
            "{:<11} dice {:.6} iou {:.6} degenerate {}",
            r.id, r.dice, r.iou, r.degenerate
        );
    }
    let s = aggregate(&reports)?;
    println!("macro dice {:.6} iou {:.6}", s.macro_dice, s.macro_iou);
    println!("micro dice {:.6} iou {:.6}", s.micro_dice, s.micro_iou);
    Ok(())
}
