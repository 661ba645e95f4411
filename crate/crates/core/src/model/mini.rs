//! Small from-scratch backbone for desk-scale runs on 72×72 inputs.
//!
//! stem 3×3/2 (3→16) → three inverted-residual blocks (expansion 4,
//! depthwise 3×3, strides 2/2/1, channels 16→24→40→40) → global average
//! pool → linear 40→64 + SiLU. The head maps the 64 features to 5 scores.

use super::nn::{Activation, Builder, Init, Layer, ParamGroup, ParamLayout};

pub const FEATURE_DIM: usize = 64;
const EXPANSION: usize = 4;
const BLOCKS: [(usize, usize, usize); 3] = [(16, 24, 2), (24, 40, 2), (40, 40, 1)];

fn he(fan_in: usize) -> f32 {
    (2.0 / fan_in as f32).sqrt()
}

fn lecun(fan_in: usize) -> f32 {
    (1.0 / fan_in as f32).sqrt()
}

pub(crate) fn build(layout: &mut ParamLayout, head_outputs: usize) -> (Layer, Layer) {
    let mut b = Builder {
        layout,
        group: ParamGroup::Backbone,
    };
    let mut layers = vec![
        Layer::Conv(b.conv("stem", 3, 16, 3, 2, false, true, he(27))),
        Layer::Act(Activation::Silu),
    ];
    for (i, &(cin, cout, stride)) in BLOCKS.iter().enumerate() {
        let hidden = cin * EXPANSION;
        let body = vec![
            Layer::Conv(b.conv(&format!("blocks.{i}.expand"), cin, hidden, 1, 1, false, true, he(cin))),
            Layer::Act(Activation::Silu),
            Layer::Conv(b.conv(
                &format!("blocks.{i}.depthwise"),
                hidden,
                hidden,
                3,
                stride,
                true,
                true,
                he(9),
            )),
            Layer::Act(Activation::Silu),
            Layer::Conv(b.conv(
                &format!("blocks.{i}.project"),
                hidden,
                cout,
                1,
                1,
                false,
                true,
                lecun(hidden),
            )),
        ];
        if stride == 1 && cin == cout {
            layers.push(Layer::Residual(body));
        } else {
            layers.extend(body);
        }
    }
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Conv(b.linear(
        "features.fc",
        40,
        FEATURE_DIM,
        Init::Normal(he(40)),
    )));
    layers.push(Layer::Act(Activation::Silu));

    b.group = ParamGroup::Head;
    let head = Layer::Conv(b.linear("head", FEATURE_DIM, head_outputs, Init::Normal(lecun(FEATURE_DIM))));
    (Layer::Sequential(layers), head)
}
