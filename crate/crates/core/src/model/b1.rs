//! EfficientNet-B1 topology with parameter names matching torchvision's
//! `efficientnet_b1` state dict, so published weights load by name.

use super::nn::{Activation, Builder, Init, Layer, ParamGroup, ParamLayout, SqueezeExcite};

pub const FEATURE_DIM: usize = 1280;
const BN_EPS: f32 = 1e-5;

/// (expand ratio, kernel, stride, in, out, repeats) per MBConv stage,
/// with B1's depth multiplier (1.1, rounded up) already applied.
const STAGES: [(usize, usize, usize, usize, usize, usize); 7] = [
    (1, 3, 1, 32, 16, 2),
    (6, 3, 2, 16, 24, 3),
    (6, 5, 2, 24, 40, 3),
    (6, 3, 2, 40, 80, 4),
    (6, 5, 1, 80, 112, 4),
    (6, 5, 2, 112, 192, 5),
    (6, 3, 1, 192, 320, 2),
];

fn kaiming_fan_out(cout: usize, kernel: usize) -> f32 {
    (2.0 / (cout * kernel * kernel) as f32).sqrt()
}

fn conv_bn_act(
    b: &mut Builder<'_>,
    prefix: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    depthwise: bool,
    act: bool,
) -> Vec<Layer> {
    let std = if depthwise {
        kaiming_fan_out(1, kernel)
    } else {
        kaiming_fan_out(cout, kernel)
    };
    let mut layers = vec![
        Layer::Conv(b.conv(&format!("{prefix}.0"), cin, cout, kernel, stride, depthwise, false, std)),
        Layer::Norm(b.batch_norm(&format!("{prefix}.1"), cout, BN_EPS)),
    ];
    if act {
        layers.push(Layer::Act(Activation::Silu));
    }
    layers
}

fn mbconv(
    b: &mut Builder<'_>,
    prefix: &str,
    expand: usize,
    kernel: usize,
    stride: usize,
    cin: usize,
    cout: usize,
) -> Layer {
    let hidden = cin * expand;
    let squeeze = (cin / 4).max(1);
    let mut body = Vec::new();
    let mut idx = 0;
    if expand != 1 {
        body.extend(conv_bn_act(
            b,
            &format!("{prefix}.block.{idx}"),
            cin,
            hidden,
            1,
            1,
            false,
            true,
        ));
        idx += 1;
    }
    body.extend(conv_bn_act(
        b,
        &format!("{prefix}.block.{idx}"),
        hidden,
        hidden,
        kernel,
        stride,
        true,
        true,
    ));
    idx += 1;
    let se = format!("{prefix}.block.{idx}");
    body.push(Layer::SqueezeExcite(SqueezeExcite {
        reduce: b.conv(
            &format!("{se}.fc1"),
            hidden,
            squeeze,
            1,
            1,
            false,
            true,
            kaiming_fan_out(squeeze, 1),
        ),
        expand: b.conv(
            &format!("{se}.fc2"),
            squeeze,
            hidden,
            1,
            1,
            false,
            true,
            kaiming_fan_out(hidden, 1),
        ),
    }));
    idx += 1;
    body.extend(conv_bn_act(
        b,
        &format!("{prefix}.block.{idx}"),
        hidden,
        cout,
        1,
        1,
        false,
        false,
    ));
    if stride == 1 && cin == cout {
        Layer::Residual(body)
    } else {
        Layer::Sequential(body)
    }
}

pub(crate) fn build(layout: &mut ParamLayout, head_outputs: usize) -> (Layer, Layer) {
    let mut b = Builder {
        layout,
        group: ParamGroup::Backbone,
    };
    let mut layers = conv_bn_act(&mut b, "features.0", 3, 32, 3, 2, false, true);
    for (s, &(expand, kernel, stride, cin, cout, repeats)) in STAGES.iter().enumerate() {
        for r in 0..repeats {
            let (block_in, block_stride) = if r == 0 { (cin, stride) } else { (cout, 1) };
            layers.push(mbconv(
                &mut b,
                &format!("features.{}.{r}", s + 1),
                expand,
                kernel,
                block_stride,
                block_in,
                cout,
            ));
        }
    }
    layers.extend(conv_bn_act(&mut b, "features.8", 320, FEATURE_DIM, 1, 1, false, true));
    layers.push(Layer::GlobalAvgPool);

    b.group = ParamGroup::Head;
    let bound = 1.0 / (FEATURE_DIM as f32).sqrt();
    let head = Layer::Conv(b.linear("head", FEATURE_DIM, head_outputs, Init::Uniform(bound)));
    (Layer::Sequential(layers), head)
}

/// Number of MBConv blocks per stage.
pub fn stage_repeats() -> [usize; 7] {
    STAGES.map(|s| s.5)
}
