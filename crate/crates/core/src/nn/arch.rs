//! Architecture strings such as `IC32+FC1024+DO(0.5)+FC2048+DO(0.5)+Softmax`.
//!
//! Tokens are `FC<Q>`, `IC<Q>`, `DO(<rate>)`, `BN` and `Softmax`. FC layers
//! apply a ReLU and IC layers are linear unless a `:linear` or `:relu` suffix
//! says otherwise.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Fc { outputs: usize, relu: bool },
    Ic { outputs: usize, relu: bool },
    Softmax,
    Dropout { rate: f64 },
    BatchNorm,
}

impl LayerSpec {
    fn default_relu(kind: &str) -> bool {
        kind == "FC"
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, outputs, relu) = match *self {
            LayerSpec::Fc { outputs, relu } => ("FC", outputs, relu),
            LayerSpec::Ic { outputs, relu } => ("IC", outputs, relu),
            LayerSpec::Softmax => return f.write_str("Softmax"),
            LayerSpec::Dropout { rate } => return write!(f, "DO({rate:?})"),
            LayerSpec::BatchNorm => return f.write_str("BN"),
        };
        write!(f, "{kind}{outputs}")?;
        if relu != Self::default_relu(kind) {
            f.write_str(if relu { ":relu" } else { ":linear" })?;
        }
        Ok(())
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(token: &str) -> Result<Self, Error> {
        let bad = |why: &str| Error::Architecture(format!("layer `{token}`: {why}"));
        let t = token.trim();
        match t {
            "Softmax" => return Ok(LayerSpec::Softmax),
            "BN" => return Ok(LayerSpec::BatchNorm),
            _ => {}
        }
        if let Some(inner) = t.strip_prefix("DO(").and_then(|s| s.strip_suffix(')')) {
            let rate: f64 = inner.trim().parse().map_err(|_| bad("dropout rate is not a number"))?;
            if !(0.0..=1.0).contains(&rate) {
                return Err(bad("dropout rate outside [0, 1]"));
            }
            return Ok(LayerSpec::Dropout { rate });
        }
        let kind = t.get(..2).ok_or_else(|| bad("unknown layer"))?;
        if kind != "FC" && kind != "IC" {
            return Err(bad("unknown layer"));
        }
        let (width, activation) = match t[2..].split_once(':') {
            Some((w, a)) => (w, Some(a)),
            None => (&t[2..], None),
        };
        let outputs: usize = width.parse().map_err(|_| bad("missing output width"))?;
        if outputs == 0 {
            return Err(bad("output width must be positive"));
        }
        let relu = match activation {
            None => Self::default_relu(kind),
            Some("relu") => true,
            Some("linear") => false,
            Some(_) => return Err(bad("activation must be `relu` or `linear`")),
        };
        Ok(if kind == "FC" {
            LayerSpec::Fc { outputs, relu }
        } else {
            LayerSpec::Ic { outputs, relu }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture(pub Vec<LayerSpec>);

impl Architecture {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.0
    }

    pub fn has_ic(&self) -> bool {
        self.0.iter().any(|l| matches!(l, LayerSpec::Ic { .. }))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, layer) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{layer}")?;
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s.trim().is_empty() {
            return Err(Error::Architecture("empty architecture".into()));
        }
        s.split('+').map(str::parse).collect::<Result<Vec<_>, _>>().map(Architecture)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_architectures() {
        for s in [
            "FC64+IC64+IC128+IC256+FC1024+FC512+Softmax",
            "IC32+FC1024+DO(0.5)+FC2048+DO(0.5)+Softmax",
            "IC16:relu+BN+FC32:linear+Softmax",
        ] {
            let arch: Architecture = s.parse().unwrap();
            assert_eq!(arch.to_string(), s);
        }
        let arch: Architecture = "IC32+FC1024+DO(0.5)+Softmax".parse().unwrap();
        assert_eq!(arch.0[0], LayerSpec::Ic { outputs: 32, relu: false });
        assert_eq!(arch.0[1], LayerSpec::Fc { outputs: 1024, relu: true });
        assert_eq!(arch.0[2], LayerSpec::Dropout { rate: 0.5 });
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", "FC", "FC0", "XY3", "DO(2)", "DO(x)", "FC3:tanh", "FC3++Softmax"] {
            assert!(s.parse::<Architecture>().is_err(), "{s}");
        }
    }

    #[test]
    fn print_then_parse_is_identity() {
        let arch = Architecture(vec![
            LayerSpec::Dropout { rate: 0.1 },
            LayerSpec::Fc { outputs: 3, relu: false },
            LayerSpec::Ic { outputs: 7, relu: true },
            LayerSpec::BatchNorm,
            LayerSpec::Dropout { rate: 1.0 / 3.0 },
            LayerSpec::Softmax,
        ]);
        assert_eq!(arch.to_string().parse::<Architecture>().unwrap(), arch);
    }
}
