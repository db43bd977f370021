//! Construction of the DenseMapNet graph.
//!
//! The network reads a rectified stereo pair and emits a sigmoid-normalized
//! disparity map. A correspondence branch works on the pooled, concatenated
//! pair with 5x5 kernels at dilations 1..4; a disparity branch densely
//! stacks reference-image features with the correspondence output through
//! four bottlenecked dense layers (growth 16), then returns to full
//! resolution for the final 9x9 transposed-convolution prediction.

use super::{LayerKind, LayerSpec, ModelGraph, NetworkPart, OpRegistry};
use crate::error::GraphError;
use crate::tensor::Element;

/// Dropout rate applied after every 5x5 feature-extracting convolution.
pub const DROPOUT_RATE: f64 = 0.2;

/// Growth rate of the dense layers: channels each one appends to the stack.
pub const GROWTH: usize = 16;

struct SpecList {
    specs: Vec<LayerSpec>,
}

impl SpecList {
    fn push(
        &mut self,
        name: &str,
        kind: LayerKind,
        inputs: &[&str],
        part: NetworkPart,
    ) -> String {
        self.specs.push(LayerSpec::new(name, kind, inputs, part));
        name.to_string()
    }

    /// Conv -> BN -> ReLU (-> Dropout for feature extractors). `suffix`
    /// names the companion layers, e.g. `C1` gives `BN_C1`, `ReLU_C1`.
    #[allow(clippy::too_many_arguments)]
    fn conv_block(
        &mut self,
        conv_name: &str,
        suffix: &str,
        kernel: usize,
        dilation: usize,
        out_channels: usize,
        input: &str,
        dropout: bool,
        part: NetworkPart,
    ) -> String {
        self.push(
            conv_name,
            LayerKind::Conv {
                kernel,
                dilation,
                out_channels,
            },
            &[input],
            part,
        );
        self.push(&format!("BN_{suffix}"), LayerKind::BatchNorm, &[conv_name], part);
        let mut last = self.push(
            &format!("ReLU_{suffix}"),
            LayerKind::Relu,
            &[&format!("BN_{suffix}")],
            part,
        );
        if dropout {
            last = self.push(
                &format!("Dropout_{suffix}"),
                LayerKind::Dropout { rate: DROPOUT_RATE },
                &[&last.clone()],
                part,
            );
        }
        last
    }
}

/// Layer descriptions of the full network, in topological order.
pub fn densemapnet_specs() -> Vec<LayerSpec> {
    use NetworkPart::{Correspondence as Corr, Disparity as Disp};
    let mut g = SpecList { specs: Vec::new() };

    // Stem: concatenated stereo pair, one wide feature extractor, pooled by 8.
    g.push("Concat_1", LayerKind::Concat, &["left", "right"], Corr);
    let stem = g.conv_block("Conv2D_1", "1", 5, 1, 32, "Concat_1", true, Corr);
    let pooled_stem = g.push("MaxPooling_1", LayerKind::MaxPool { pool: 8 }, &[&stem], Corr);

    // Correspondence network: four sequential 5x5 convs, dilation 1..4.
    let mut prev = pooled_stem.clone();
    let mut corr_outs = vec![pooled_stem.clone()];
    for i in 1..=4 {
        let conv = format!("Conv2D_C{i}");
        prev = g.conv_block(&conv, &format!("C{i}"), 5, i, 32, &prev, true, Corr);
        corr_outs.push(prev.clone());
    }
    let corr_refs: Vec<&str> = corr_outs.iter().map(String::as_str).collect();
    g.push("Concat_2", LayerKind::Concat, &corr_refs, Corr);

    // Reference branch: left-image features, pooled to match.
    let left_feat = g.conv_block("Conv2D_2", "2", 5, 1, GROWTH, "left", true, Disp);
    g.push(
        "MaxPooling_2",
        LayerKind::MaxPool { pool: 8 },
        &[&left_feat],
        Disp,
    );

    // Disparity network: four dense layers with 1x1 bottlenecks to 64 and
    // 5x5 extractors back to the growth rate, dilation 1..4. Each Concat_Di
    // stacks the newest 16-channel feature in front of the running stack.
    let mut newest = "MaxPooling_2".to_string();
    let mut stack = "Concat_2".to_string();
    for i in 1..=4 {
        let concat = format!("Concat_D{i}");
        g.push(&concat, LayerKind::Concat, &[&newest, &stack], Disp);
        let bottleneck = g.conv_block(
            &format!("Conv2D_m{i}"),
            &format!("m{i}"),
            1,
            1,
            64,
            &concat,
            false,
            Disp,
        );
        newest = g.conv_block(
            &format!("Conv2D_n{i}"),
            &format!("n{i}"),
            5,
            i,
            GROWTH,
            &bottleneck,
            true,
            Disp,
        );
        stack = concat;
    }
    g.push("Concat_3", LayerKind::Concat, &[&newest, &stack], Disp);
    let compressed = g.conv_block("Conv2D_4", "4", 1, 1, 32, "Concat_3", false, Disp);

    // Back to full resolution.
    g.push(
        "UpSampling_1",
        LayerKind::Upsample { factor: 8 },
        &[&compressed],
        Disp,
    );
    g.push("ZeroPadding_1", LayerKind::ZeroPad, &["UpSampling_1"], Disp);

    // Full-resolution reference features and the final prediction head.
    let left_full = g.conv_block("Conv2D_3", "3", 5, 1, 1, "left", true, Disp);
    g.push(
        "Concat_4",
        LayerKind::Concat,
        &["ZeroPadding_1", &left_full],
        Disp,
    );
    let head = g.conv_block("Conv2D_5", "5", 5, 1, GROWTH, "Concat_4", true, Disp);
    g.push("Concat_5", LayerKind::Concat, &["Concat_4", &head], Disp);
    g.push(
        "Conv2DT_1",
        LayerKind::ConvTranspose {
            kernel: 9,
            out_channels: 1,
        },
        &["Concat_5"],
        Disp,
    );
    g.push("Sigmoid_1", LayerKind::Sigmoid, &["Conv2DT_1"], Disp);

    g.specs
}

/// Builds the network for `channels`-channel stereo input. The output is
/// normalized disparity: multiply by `dmax` to get pixels.
pub fn build_densemapnet<T: Element>(
    channels: usize,
    dmax: f64,
) -> Result<ModelGraph<T>, GraphError> {
    if channels != 1 && channels != 3 {
        return Err(GraphError::UnsupportedChannels(channels));
    }
    if !(dmax > 0.0) {
        return Err(GraphError::InvalidDmax(dmax));
    }
    let registry = OpRegistry::builtin();
    ModelGraph::from_specs(densemapnet_specs(), &registry, channels, dmax)
}
