#![allow(dead_code)]

use fttnp::{AxisBox, Instance, Metric, Neighborhood, RootedTopology};
use rand::Rng;

pub fn boxes_instance(parents: &[usize], boxes: &[([f64; 2], [f64; 2])], metric: Metric) -> Instance {
    Instance::new(
        RootedTopology::from_parents(parents).unwrap(),
        boxes.iter().map(|(lo, hi)| Neighborhood::single(AxisBox::new(*lo, *hi))).collect(),
        metric,
    )
    .unwrap()
}

/// Root box above two leaf boxes.
pub fn toy(metric: Metric) -> Instance {
    boxes_instance(
        &[0, 0],
        &[([0., 0.], [1., 1.]), ([-1., -3.], [0., -2.]), ([1., -3.], [2., -2.])],
        metric,
    )
}

/// Two stacked families of three boxes each.
pub fn fig6() -> Instance {
    boxes_instance(
        &[0, 0, 0, 3, 3],
        &[
            ([3., 16.], [7., 20.]),
            ([0., 10.], [4., 14.]),
            ([6., 10.], [10., 14.]),
            ([3., 5.], [7., 9.]),
            ([0., 0.], [4., 4.]),
            ([6., 0.], [10., 4.]),
        ],
        Metric::L1,
    )
}

/// Random parent list for nodes `1..n`: each node hangs below an earlier one.
pub fn random_parents(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (1..n).map(|v| rng.gen_range(0..v)).collect()
}

/// Integer-cornered box inside `[0, w] x [0, h]`, possibly degenerate.
pub fn random_box(w: u32, h: u32, max_side: u32, rng: &mut impl Rng) -> AxisBox {
    let x0 = rng.gen_range(0..=w);
    let y0 = rng.gen_range(0..=h);
    let x1 = (x0 + rng.gen_range(0..=max_side)).min(w);
    let y1 = (y0 + rng.gen_range(0..=max_side)).min(h);
    AxisBox::new([x0 as f64, y0 as f64], [x1 as f64, y1 as f64])
}

/// `n` tree nodes, up to `b` integer boxes each, inside `[0, w] x [0, h]`.
pub fn random_instance(n: usize, b: usize, w: u32, h: u32, max_side: u32, metric: Metric, rng: &mut impl Rng) -> Instance {
    let parents = random_parents(n, rng);
    let neighborhoods = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=b);
            Neighborhood::new((0..k).map(|_| random_box(w, h, max_side, rng)).collect())
        })
        .collect();
    Instance::new(RootedTopology::from_parents(&parents).unwrap(), neighborhoods, metric).unwrap()
}
