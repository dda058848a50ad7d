//! Layer-stack builders for the experiment architectures.

use crate::error::Result;
use crate::labels::LabelScheme;
use crate::nnet::LayerSpec;

/// Where the multi-task heads split from the shared trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchPoint {
    /// Heads branch after the shared dense(64)+dropout+batch-norm block.
    AfterDenseBlock,
    /// Heads branch right after flatten, each owning its dense block.
    AfterFlatten,
}

fn conv_block(filters: usize, kernel: (usize, usize), pool: (usize, usize)) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d { filters, kernel, stride: 1 },
        LayerSpec::BatchNorm,
        LayerSpec::MaxPool2d { pool, stride: 2 },
        LayerSpec::Dropout { rate: 0.3 },
    ]
}

fn conv_trunk(blocks: usize) -> Vec<LayerSpec> {
    let mut trunk = Vec::new();
    trunk.extend(conv_block(32, (7, 7), (5, 5)));
    trunk.extend(conv_block(64, (7, 7), (4, 7)));
    if blocks >= 3 {
        trunk.extend(conv_block(128, (2, 2), (5, 5)));
    }
    trunk.push(LayerSpec::Flatten);
    trunk
}

fn dense_block() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { units: 64 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.3 },
        LayerSpec::BatchNorm,
    ]
}

fn output_head(n_classes: usize, sigmoid: bool) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { units: n_classes },
        if sigmoid { LayerSpec::Sigmoid } else { LayerSpec::Softmax },
    ]
}

/// The single-output stack: three convolution blocks
/// (32x7x7, 64x7x7 with a 4x7 pool, 128x2x2), flatten, dense(64) relu,
/// dropout, batch norm, and an n-class output. The multilabel scheme swaps
/// the final softmax for a sigmoid.
pub fn build_baseline(
    n_classes: usize,
    scheme: LabelScheme,
) -> Result<(Vec<LayerSpec>, Vec<Vec<LayerSpec>>)> {
    if n_classes < 2 {
        return Err(crate::error::Error::Config(format!(
            "a classifier needs at least 2 classes, got {n_classes}"
        )));
    }
    let mut trunk = conv_trunk(3);
    trunk.extend(dense_block());
    let sigmoid = scheme == LabelScheme::Multilabel16;
    Ok((trunk, vec![output_head(n_classes, sigmoid)]))
}

/// The two-convolution-block variant used as the scene benchmark.
pub fn build_benchmark(
    n_classes: usize,
    scheme: LabelScheme,
) -> Result<(Vec<LayerSpec>, Vec<Vec<LayerSpec>>)> {
    if n_classes < 2 {
        return Err(crate::error::Error::Config(format!(
            "a classifier needs at least 2 classes, got {n_classes}"
        )));
    }
    let mut trunk = conv_trunk(2);
    trunk.extend(dense_block());
    let sigmoid = scheme == LabelScheme::Multilabel16;
    Ok((trunk, vec![output_head(n_classes, sigmoid)]))
}

/// The two-head multi-task stack: shared trunk, then a 10-way scene head and
/// a 6-way city head.
pub fn build_multitask(branch: BranchPoint) -> (Vec<LayerSpec>, Vec<Vec<LayerSpec>>) {
    let mut trunk = conv_trunk(3);
    match branch {
        BranchPoint::AfterDenseBlock => {
            trunk.extend(dense_block());
            (trunk, vec![output_head(10, false), output_head(6, false)])
        }
        BranchPoint::AfterFlatten => {
            let mut scene_head = dense_block();
            scene_head.extend(output_head(10, false));
            let mut city_head = dense_block();
            city_head.extend(output_head(6, false));
            (trunk, vec![scene_head, city_head])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn propagate(specs: &[LayerSpec], mut shape: [usize; 3]) -> [usize; 3] {
        for s in specs {
            shape = s.output_shape(shape);
        }
        shape
    }

    #[test]
    fn baseline_shape_chain_at_full_scale() {
        let (trunk, heads) = build_baseline(6, LabelScheme::City6).unwrap();
        // after each pool: (469,64) -> (235,32) -> (118,16)
        let after_block1 = propagate(&trunk[..4], [938, 128, 1]);
        assert_eq!(after_block1, [469, 64, 32]);
        let after_block2 = propagate(&trunk[..8], [938, 128, 1]);
        assert_eq!(after_block2, [235, 32, 64]);
        let after_block3 = propagate(&trunk[..12], [938, 128, 1]);
        assert_eq!(after_block3, [118, 16, 128]);
        let after_flatten = propagate(&trunk[..13], [938, 128, 1]);
        assert_eq!(after_flatten, [1, 1, 241_664]);
        let out = propagate(&heads[0], propagate(&trunk, [938, 128, 1]));
        assert_eq!(out, [1, 1, 6]);
    }

    #[test]
    fn head_widths_per_scheme() {
        for (scheme, n) in [
            (LabelScheme::City6, 6),
            (LabelScheme::Scene10, 10),
            (LabelScheme::Pair60, 60),
            (LabelScheme::Grouped3, 3),
            (LabelScheme::GroupedPair18, 18),
            (LabelScheme::Multilabel16, 16),
        ] {
            let (trunk, heads) = build_baseline(n, scheme).unwrap();
            let out = propagate(&heads[0], propagate(&trunk, [64, 32, 1]));
            assert_eq!(out, [1, 1, n], "{scheme}");
            let last = heads[0].last().unwrap();
            if scheme == LabelScheme::Multilabel16 {
                assert_eq!(*last, LayerSpec::Sigmoid);
            } else {
                assert_eq!(*last, LayerSpec::Softmax);
            }
        }
    }

    #[test]
    fn multitask_two_heads_10_and_6() {
        let (trunk, heads) = build_multitask(BranchPoint::AfterDenseBlock);
        assert_eq!(heads.len(), 2);
        let base = propagate(&trunk, [64, 32, 1]);
        assert_eq!(propagate(&heads[0], base), [1, 1, 10]);
        assert_eq!(propagate(&heads[1], base), [1, 1, 6]);
    }

    #[test]
    fn benchmark_has_two_conv_blocks() {
        let (trunk, _) = build_benchmark(10, LabelScheme::Scene10).unwrap();
        let convs = trunk
            .iter()
            .filter(|s| matches!(s, LayerSpec::Conv2d { .. }))
            .count();
        assert_eq!(convs, 2);
        let (full, _) = build_baseline(10, LabelScheme::Scene10).unwrap();
        let convs_full = full
            .iter()
            .filter(|s| matches!(s, LayerSpec::Conv2d { .. }))
            .count();
        assert_eq!(convs_full, 3);
    }
}
