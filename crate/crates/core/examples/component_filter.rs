//! Connected-component labeling and keep-largest-k filtering on an ASCII mask.

use lungseg::postprocess::{keep_largest_k, label_components, Connectivity};
use lungseg::{BinaryMask, Result};

const MASK: [&str; 8] = [
    "##......###.",
    "##.....####.",
    "..#....####.",
    "........###.",
    "#...........",
    "...##.......",
    "...##....#..",
    ".........#..",
];

fn print(m: &BinaryMask) {
    for y in 0..m.height() {
        let row: String = (0..m.width()).map(|x| if m.get(y, x) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> Result<()> {
    let m = BinaryMask::from_fn(MASK.len(), MASK[0].len(), |y, x| MASK[y].as_bytes()[x] == b'#');
    println!("input:");
    print(&m);

    for conn in [Connectivity::Four, Connectivity::Eight] {
        let (labels, stats) = label_components(&m, conn);
        println!("\n{conn}-connectivity: {} components", stats.len());
        for y in 0..labels.height() {
            let row: String = (0..labels.width())
                .map(|x| match labels.get(y, x) {
                    0 => '.',
                    l => char::from_digit(l % 36, 36).unwrap(),
                })
                .collect();
            println!("  {row}");
        }
        for s in &stats {
            println!(
                "  label {}: area {:2}, bbox ({},{}) {}x{}, centroid ({:.2}, {:.2})",
                s.label, s.area, s.bbox.left, s.bbox.top, s.bbox.width, s.bbox.height, s.centroid.0, s.centroid.1
            );
        }
        println!("keep 2 largest:");
        print(&keep_largest_k(&m, 2, conn)?);
    }
    Ok(())
}
