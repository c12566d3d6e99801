use crate::error::{Error, Result};
use crate::neuron::{Firing, LIFParams};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        fan_in: usize,
        fan_out: usize,
    },
    /// Square kernels over `[channels, height, width]` samples.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_h: usize,
        in_w: usize,
    },
}

impl LayerKind {
    pub fn in_features(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_in, .. } => fan_in,
            LayerKind::Conv2d {
                in_channels,
                in_h,
                in_w,
                ..
            } => in_channels * in_h * in_w,
        }
    }

    pub fn out_features(&self) -> usize {
        self.channels() * self.spatial()
    }

    /// Output spatial extents; (1, 1) for dense layers.
    pub fn out_hw(&self) -> (usize, usize) {
        match *self {
            LayerKind::Dense { .. } => (1, 1),
            LayerKind::Conv2d {
                kernel,
                stride,
                padding,
                in_h,
                in_w,
                ..
            } => (
                (in_h + 2 * padding - kernel) / stride + 1,
                (in_w + 2 * padding - kernel) / stride + 1,
            ),
        }
    }

    /// Normalization channels: output units for dense, filters for conv.
    pub fn channels(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_out, .. } => fan_out,
            LayerKind::Conv2d { out_channels, .. } => out_channels,
        }
    }

    /// Positions per channel sharing one set of normalization statistics.
    pub fn spatial(&self) -> usize {
        let (h, w) = self.out_hw();
        h * w
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerKind::Dense { fan_in, fan_out } => vec![fan_out, fan_in],
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![out_channels, in_channels, kernel, kernel],
        }
    }

    /// Inputs feeding one output unit, used for He initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_in, .. } => fan_in,
            LayerKind::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub has_norm: bool,
    pub is_readout: bool,
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, has_norm: bool) -> Self {
        Self {
            kind: LayerKind::Dense { fan_in, fan_out },
            has_norm,
            is_readout: false,
        }
    }

    pub fn readout(fan_in: usize, classes: usize) -> Self {
        Self {
            kind: LayerKind::Dense {
                fan_in,
                fan_out: classes,
            },
            has_norm: false,
            is_readout: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormConfig<S> {
    pub eps: S,
    pub momentum: S,
}

impl<S: Scalar> Default for NormConfig<S> {
    fn default() -> Self {
        Self {
            eps: S::of(1e-5),
            momentum: S::of(0.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec<S> {
    pub layers: Vec<LayerSpec>,
    pub lif: LIFParams<S>,
    pub time_steps: usize,
    pub firing: Firing,
    pub norm: NormConfig<S>,
}

impl<S: Scalar> NetworkSpec<S> {
    /// Dense stack `widths[0] -> ... -> widths[last]`; every layer but the
    /// last is spiking, the last is the readout.
    pub fn dense(widths: &[usize], has_norm: bool, lif: LIFParams<S>, time_steps: usize) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Invalid(
                "a network needs at least input and output widths".into(),
            ));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i == last {
                    LayerSpec::readout(w[0], w[1])
                } else {
                    LayerSpec::dense(w[0], w[1], has_norm)
                }
            })
            .collect();
        let spec = Self {
            layers,
            lif,
            time_steps,
            firing: Firing::Heaviside,
            norm: NormConfig::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        if self.time_steps == 0 {
            return Err(Error::Invalid("time_steps must be >= 1".into()));
        }
        let Some((readout, hidden)) = self.layers.split_last() else {
            return Err(Error::Invalid("network has no layers".into()));
        };
        if !readout.is_readout || readout.has_norm {
            return Err(Error::Invalid(
                "the last layer must be a readout without normalization".into(),
            ));
        }
        if !matches!(readout.kind, LayerKind::Dense { .. }) {
            return Err(Error::Invalid("the readout must be dense".into()));
        }
        if hidden.iter().any(|l| l.is_readout) {
            return Err(Error::Invalid("only the last layer may be a readout".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if let LayerKind::Conv2d {
                kernel,
                stride,
                padding,
                in_h,
                in_w,
                in_channels,
                out_channels,
            } = l.kind
            {
                if kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
                    return Err(Error::Invalid(format!("layer {i}: degenerate conv geometry")));
                }
                if in_h + 2 * padding < kernel || in_w + 2 * padding < kernel {
                    return Err(Error::Invalid(format!("layer {i}: kernel larger than padded input")));
                }
            }
            if l.kind.in_features() == 0 || l.kind.out_features() == 0 {
                return Err(Error::Invalid(format!("layer {i}: zero extent")));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].kind.out_features() != pair[1].kind.in_features() {
                return Err(Error::Shape(format!(
                    "layer {} emits {} features but layer {} expects {}",
                    i,
                    pair[0].kind.out_features(),
                    i + 1,
                    pair[1].kind.in_features()
                )));
            }
        }
        Ok(())
    }

    pub fn input_features(&self) -> usize {
        self.layers[0].kind.in_features()
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].kind.out_features()
    }

    /// Number of spiking (non-readout) layers.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn with_firing(mut self, firing: Firing) -> Self {
        self.firing = firing;
        self
    }

    pub fn with_gamma(mut self, gamma: S) -> Self {
        self.lif.gamma = gamma;
        self
    }
}
