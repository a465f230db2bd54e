use std::fmt;
use std::str::FromStr;

use crate::numerics::{conv_output_size, lstm_param_count};

use super::AgentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Conv stack, one fully connected layer, Q head.
    Dqn,
    /// Conv stack, LSTM over the flattened feature maps, Q head.
    Drqn,
    /// Conv stack, soft attention, LSTM, Q head.
    DarqnSoft,
    /// Conv stack, sampled attention, LSTM, Q head and baseline head.
    DarqnHard,
    /// Bias-free linear map from pixels to Q-values.
    Linear,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Dqn,
        Architecture::Drqn,
        Architecture::DarqnSoft,
        Architecture::DarqnHard,
        Architecture::Linear,
    ];

    /// Identifier stored in checkpoints.
    pub fn id(self) -> u32 {
        match self {
            Architecture::Dqn => 0,
            Architecture::Drqn => 1,
            Architecture::DarqnSoft => 2,
            Architecture::DarqnHard => 3,
            Architecture::Linear => 4,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.id() == id)
    }

    pub fn is_recurrent(self) -> bool {
        matches!(
            self,
            Architecture::Drqn | Architecture::DarqnSoft | Architecture::DarqnHard
        )
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Architecture::DarqnSoft | Architecture::DarqnHard)
    }

    pub fn has_conv(self) -> bool {
        self != Architecture::Linear
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Dqn => "dqn",
            Architecture::Drqn => "drqn",
            Architecture::DarqnSoft => "darqn_soft",
            Architecture::DarqnHard => "darqn_hard",
            Architecture::Linear => "linear",
        })
    }
}

impl FromStr for Architecture {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| AgentError::UnknownArchitecture(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// 84×84 input, 32@8×8/4 → 64@4×4/2 → 256@3×3/1, 256 hidden units.
    Paper,
    /// 24×24 input, 8@4×4/2 → 16@3×3/2, 64 hidden units.
    Small,
}

impl Profile {
    pub fn geometry(self) -> Geometry {
        match self {
            Profile::Paper => Geometry::paper(),
            Profile::Small => Geometry::small(),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Small => "small",
        })
    }
}

impl FromStr for Profile {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Profile::Paper),
            "small" => Ok(Profile::Small),
            other => Err(AgentError::UnknownProfile(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Layer sizes shared by every architecture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub input_height: usize,
    pub input_width: usize,
    pub convs: Vec<ConvLayer>,
    /// LSTM width.
    pub hidden: usize,
    /// Width of the attention network's inner layer.
    pub attention_hidden: usize,
    /// Width of the DQN fully connected layer.
    pub fc: usize,
}

impl Geometry {
    pub fn paper() -> Self {
        Geometry {
            input_height: 84,
            input_width: 84,
            convs: vec![
                ConvLayer {
                    channels: 32,
                    kernel: 8,
                    stride: 4,
                },
                ConvLayer {
                    channels: 64,
                    kernel: 4,
                    stride: 2,
                },
                ConvLayer {
                    channels: 256,
                    kernel: 3,
                    stride: 1,
                },
            ],
            hidden: 256,
            attention_hidden: 256,
            fc: 256,
        }
    }

    pub fn small() -> Self {
        Geometry {
            input_height: 24,
            input_width: 24,
            convs: vec![
                ConvLayer {
                    channels: 8,
                    kernel: 4,
                    stride: 2,
                },
                ConvLayer {
                    channels: 16,
                    kernel: 3,
                    stride: 2,
                },
            ],
            hidden: 64,
            attention_hidden: 32,
            fc: 64,
        }
    }

    /// Geometry for the linear model over an `h`×`w` input.
    pub fn linear(height: usize, width: usize) -> Self {
        Geometry {
            input_height: height,
            input_width: width,
            convs: Vec::new(),
            hidden: 1,
            attention_hidden: 1,
            fc: 1,
        }
    }

    /// Spatial size `(height, width)` after each conv layer.
    pub fn conv_sizes(&self) -> Result<Vec<(usize, usize)>, AgentError> {
        let mut h = self.input_height;
        let mut w = self.input_width;
        let mut out = Vec::with_capacity(self.convs.len());
        for layer in &self.convs {
            h = conv_output_size(h, layer.kernel, layer.stride)?;
            w = conv_output_size(w, layer.kernel, layer.stride)?;
            out.push((h, w));
        }
        Ok(out)
    }

    /// Side `m` of the final square feature map.
    pub fn grid_side(&self) -> Result<usize, AgentError> {
        let (h, w) = self
            .conv_sizes()?
            .last()
            .copied()
            .ok_or(AgentError::NoConvStack)?;
        if h != w {
            return Err(AgentError::GeometryMismatch(format!(
                "feature map {h}x{w} is not square"
            )));
        }
        Ok(h)
    }

    /// Feature dimension `D` (channels of the last conv layer).
    pub fn feature_dim(&self) -> Result<usize, AgentError> {
        self.convs
            .last()
            .map(|l| l.channels)
            .ok_or(AgentError::NoConvStack)
    }

    /// Number of attention locations `L = m²`.
    pub fn locations(&self) -> Result<usize, AgentError> {
        let m = self.grid_side()?;
        Ok(m * m)
    }

    /// Receptive-field `(size, jump)` of one final-layer cell in input pixels.
    pub fn receptive_field(&self) -> (usize, usize) {
        let mut size = 1;
        let mut jump = 1;
        for layer in &self.convs {
            size += (layer.kernel - 1) * jump;
            jump *= layer.stride;
        }
        (size, jump)
    }
}

/// Architecture, layer sizes and action count: everything needed to build parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub geometry: Geometry,
    pub actions: usize,
}

/// Name, shape and fan-in of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

fn entry(name: &str, shape: &[usize], fan_in: usize) -> ParamShape {
    ParamShape {
        name: name.to_string(),
        shape: shape.to_vec(),
        fan_in,
    }
}

impl ModelSpec {
    pub fn new(arch: Architecture, geometry: Geometry, actions: usize) -> Self {
        ModelSpec {
            arch,
            geometry,
            actions,
        }
    }

    pub fn from_profile(arch: Architecture, profile: Profile, actions: usize) -> Self {
        Self::new(arch, profile.geometry(), actions)
    }

    /// Ordered parameter layout for this architecture.
    pub fn param_shapes(&self) -> Result<Vec<ParamShape>, AgentError> {
        if self.actions < 2 {
            return Err(AgentError::GeometryMismatch(format!(
                "need at least 2 actions, got {}",
                self.actions
            )));
        }
        let g = &self.geometry;
        let a = self.actions;
        let mut out = Vec::new();

        if self.arch == Architecture::Linear {
            let n = g.input_height * g.input_width;
            out.push(entry("linear.weight", &[a, n], n));
            return Ok(out);
        }

        let mut c_in = 1;
        for (i, layer) in g.convs.iter().enumerate() {
            let fan = c_in * layer.kernel * layer.kernel;
            out.push(entry(
                &format!("conv{}.kernel", i + 1),
                &[layer.channels, c_in, layer.kernel, layer.kernel],
                fan,
            ));
            out.push(entry(
                &format!("conv{}.bias", i + 1),
                &[layer.channels],
                fan,
            ));
            c_in = layer.channels;
        }
        let m = g.grid_side()?;
        let d = g.feature_dim()?;
        let flat = d * m * m;
        let h = g.hidden;

        let lstm = |out: &mut Vec<ParamShape>, input: usize| {
            out.push(entry("lstm.w_ih", &[4 * h, input], input));
            out.push(entry("lstm.b_ih", &[4 * h], input));
            out.push(entry("lstm.w_hh", &[4 * h, h], h));
            out.push(entry("lstm.b_hh", &[4 * h], h));
        };

        match self.arch {
            Architecture::Dqn => {
                out.push(entry("fc.weight", &[g.fc, flat], flat));
                out.push(entry("fc.bias", &[g.fc], flat));
                out.push(entry("q.weight", &[a, g.fc], g.fc));
                out.push(entry("q.bias", &[a], g.fc));
            }
            Architecture::Drqn => {
                lstm(&mut out, flat);
                out.push(entry("q.weight", &[a, h], h));
                out.push(entry("q.bias", &[a], h));
            }
            Architecture::DarqnSoft | Architecture::DarqnHard => {
                let ah = g.attention_hidden;
                out.push(entry("att.inner.weight", &[ah, d], d));
                out.push(entry("att.inner.bias", &[ah], d));
                out.push(entry("att.recurrent.weight", &[ah, h], h));
                out.push(entry("att.outer.weight", &[1, ah], ah));
                out.push(entry("att.outer.bias", &[1], ah));
                lstm(&mut out, d);
                out.push(entry("q.weight", &[a, h], h));
                out.push(entry("q.bias", &[a], h));
                if self.arch == Architecture::DarqnHard {
                    out.push(entry("baseline.weight", &[1, h], h));
                    out.push(entry("baseline.bias", &[1], h));
                }
            }
            Architecture::Linear => unreachable!(),
        }
        Ok(out)
    }
}

/// Total number of trainable scalars.
pub fn count_params(spec: &ModelSpec) -> Result<usize, AgentError> {
    Ok(spec
        .param_shapes()?
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum())
}

/// Scalars in the conv stack alone.
pub fn conv_param_count(geometry: &Geometry) -> usize {
    let mut c_in = 1;
    let mut total = 0;
    for layer in &geometry.convs {
        total += layer.channels * c_in * layer.kernel * layer.kernel + layer.channels;
        c_in = layer.channels;
    }
    total
}

/// Scalars in the double-bias LSTM for the given architecture.
pub fn lstm_count(spec: &ModelSpec) -> Result<usize, AgentError> {
    let g = &spec.geometry;
    Ok(match spec.arch {
        Architecture::Drqn => lstm_param_count(g.feature_dim()? * g.locations()?, g.hidden),
        Architecture::DarqnSoft | Architecture::DarqnHard => {
            lstm_param_count(g.feature_dim()?, g.hidden)
        }
        _ => 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper(arch: Architecture, actions: usize) -> usize {
        count_params(&ModelSpec::from_profile(arch, Profile::Paper, actions)).unwrap()
    }

    #[test]
    fn paper_counts() {
        assert_eq!(paper(Architecture::DarqnSoft, 18), 845_171);
        assert_eq!(paper(Architecture::DarqnHard, 18), 845_428);
        assert_eq!(paper(Architecture::DarqnSoft, 4), 841_573);
    }

    #[test]
    fn conv_stack_count() {
        assert_eq!(
            conv_param_count(&Geometry::paper()),
            2_080 + 32_832 + 147_712
        );
        assert_eq!(conv_param_count(&Geometry::paper()), 182_624);
    }

    #[test]
    fn paper_grid_is_7x7x256() {
        let g = Geometry::paper();
        assert_eq!(g.conv_sizes().unwrap(), vec![(20, 20), (9, 9), (7, 7)]);
        assert_eq!(g.locations().unwrap(), 49);
        assert_eq!(g.feature_dim().unwrap(), 256);
        assert_eq!(g.receptive_field(), (36, 8));
    }

    #[test]
    fn small_grid() {
        let g = Geometry::small();
        // 24 → (24-4)/2+1 = 11 → (11-3)/2+1 = 5
        assert_eq!(g.conv_sizes().unwrap(), vec![(11, 11), (5, 5)]);
        assert_eq!(g.locations().unwrap(), 25);
        assert_eq!(g.receptive_field(), (8, 4));
    }

    #[test]
    fn hard_minus_soft_is_baseline_head() {
        for profile in [Profile::Paper, Profile::Small] {
            for actions in [2, 3, 18] {
                let s = count_params(&ModelSpec::from_profile(
                    Architecture::DarqnSoft,
                    profile,
                    actions,
                ))
                .unwrap();
                let h = count_params(&ModelSpec::from_profile(
                    Architecture::DarqnHard,
                    profile,
                    actions,
                ))
                .unwrap();
                assert_eq!(h - s, profile.geometry().hidden + 1);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
            assert_eq!(Architecture::from_id(a.id()), Some(a));
        }
        assert!("resnet".parse::<Architecture>().is_err());
    }

    #[test]
    fn non_integral_geometry_is_rejected() {
        let mut g = Geometry::small();
        g.convs[0].kernel = 5;
        assert!(g.grid_side().is_err());
    }
}
