//! Layer specifications for the two fixed topologies: the sketching
//! Q-network (global conv stack + local patch conv + two dense layers) and
//! the category classifier that reuses the global conv stack on a single
//! channel.

use serde::{Deserialize, Serialize};

/// Canvas side length the conv stacks are sized for.
pub const CANVAS_SIZE: usize = 84;
/// Side length of the pen-centred local patch.
pub const PATCH_SIZE: usize = 11;
/// Number of discrete drawing actions.
pub const NUM_ACTIONS: usize = 242;
/// Channels of the global stream.
pub const GLOBAL_CHANNELS: usize = 4;
/// Parameter count of the Q-network.
pub const Q_NETWORK_PARAMS: usize = 1_889_426;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    QNetwork,
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvSpec {
    fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            name: name.to_string(),
            in_channels,
            out_channels,
            kernel,
            stride,
            activation: Activation::Relu,
        }
    }

    /// Valid-padding output side length.
    pub fn output_size(&self, input: usize) -> usize {
        (input - self.kernel) / self.stride + 1
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub name: String,
    pub inputs: usize,
    pub units: usize,
    pub activation: Activation,
}

impl DenseSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.units, self.inputs]
    }
}

/// Complete description of a network. Convolutions use valid padding; the
/// global stack output is flattened channel-major and concatenated with the
/// local conv output (if any) before the dense head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub input_size: usize,
    pub global_channels: usize,
    pub global: Vec<ConvSpec>,
    pub local: Option<ConvSpec>,
    pub patch_size: usize,
    pub head: Vec<DenseSpec>,
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorShape {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Architecture {
    /// conv(32,k8,s4) → conv(64,k4,s2) → conv(64,k3,s1) over the 4-channel
    /// global stream, conv(128,k11,s1) over the local patch, then
    /// fc(512) → fc(242).
    pub fn q_network(fc1_activation: Activation) -> Self {
        let global = vec![
            ConvSpec::new("conv1", GLOBAL_CHANNELS, 32, 8, 4),
            ConvSpec::new("conv2", 32, 64, 4, 2),
            ConvSpec::new("conv3", 64, 64, 3, 1),
        ];
        let local = ConvSpec::new("local", 1, 128, PATCH_SIZE, 1);
        let mut arch = Self {
            kind: ModelKind::QNetwork,
            input_size: CANVAS_SIZE,
            global_channels: GLOBAL_CHANNELS,
            global,
            local: Some(local),
            patch_size: PATCH_SIZE,
            head: Vec::new(),
        };
        let width = arch.concat_width();
        arch.head = vec![
            DenseSpec {
                name: "fc1".into(),
                inputs: width,
                units: 512,
                activation: fc1_activation,
            },
            DenseSpec {
                name: "fc2".into(),
                inputs: 512,
                units: NUM_ACTIONS,
                activation: Activation::Linear,
            },
        ];
        arch
    }

    /// The global conv stack on a single-channel canvas with an
    /// fc(512, relu) → fc(categories) head.
    pub fn classifier(categories: usize) -> Self {
        let global = vec![
            ConvSpec::new("conv1", 1, 32, 8, 4),
            ConvSpec::new("conv2", 32, 64, 4, 2),
            ConvSpec::new("conv3", 64, 64, 3, 1),
        ];
        let mut arch = Self {
            kind: ModelKind::Classifier,
            input_size: CANVAS_SIZE,
            global_channels: 1,
            global,
            local: None,
            patch_size: 0,
            head: Vec::new(),
        };
        let width = arch.concat_width();
        arch.head = vec![
            DenseSpec {
                name: "fc1".into(),
                inputs: width,
                units: 512,
                activation: Activation::Relu,
            },
            DenseSpec {
                name: "fc2".into(),
                inputs: 512,
                units: categories,
                activation: Activation::Linear,
            },
        ];
        arch
    }

    /// Output side length of every global conv layer, in order.
    pub fn global_output_sizes(&self) -> Vec<usize> {
        let mut size = self.input_size;
        self.global
            .iter()
            .map(|c| {
                size = c.output_size(size);
                size
            })
            .collect()
    }

    pub fn global_flat_width(&self) -> usize {
        let side = self.global_output_sizes().last().copied().unwrap_or(self.input_size);
        let channels = self.global.last().map_or(self.global_channels, |c| c.out_channels);
        channels * side * side
    }

    pub fn local_width(&self) -> usize {
        self.local
            .as_ref()
            .map_or(0, |c| c.out_channels * c.output_size(self.patch_size).pow(2))
    }

    pub fn concat_width(&self) -> usize {
        self.global_flat_width() + self.local_width()
    }

    pub fn outputs(&self) -> usize {
        self.head.last().map_or(0, |d| d.units)
    }

    pub fn global_input_len(&self) -> usize {
        self.global_channels * self.input_size * self.input_size
    }

    pub fn local_input_len(&self) -> usize {
        self.local.as_ref().map_or(0, |c| c.in_channels * self.patch_size * self.patch_size)
    }

    /// Parameter tensors in storage order: global convs, local conv, dense
    /// head; weight before bias for each layer.
    pub fn tensor_shapes(&self) -> Vec<TensorShape> {
        let mut out = Vec::new();
        let mut push = |name: String, w: Vec<usize>, bias: usize| {
            out.push(TensorShape {
                name: format!("{name}.weight"),
                shape: w,
            });
            out.push(TensorShape {
                name: format!("{name}.bias"),
                shape: vec![bias],
            });
        };
        for c in &self.global {
            push(format!("global.{}", c.name), c.weight_shape(), c.out_channels);
        }
        if let Some(c) = &self.local {
            push(format!("local.{}", c.name), c.weight_shape(), c.out_channels);
        }
        for d in &self.head {
            push(format!("head.{}", d.name), d.weight_shape(), d.units);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensor_shapes().iter().map(TensorShape::len).sum()
    }

    /// Fan-in of the layer owning tensor `index` (weights and biases share it).
    pub(crate) fn fan_ins(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.global.iter().map(ConvSpec::fan_in).collect();
        if let Some(c) = &self.local {
            v.push(c.fan_in());
        }
        v.extend(self.head.iter().map(|d| d.inputs));
        v
    }
}
