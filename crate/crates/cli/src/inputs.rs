use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use klopt::inequality::van_handel_map;
use klopt::{compose_givens, LinearMap64, RotationParams64, VarianceSpec64};
use serde::Serialize;

use crate::CliError;

/// `--spec`: an inline JSON array or a path to a file holding one.
pub fn parse_spec(arg: &str) -> Result<VarianceSpec64, CliError> {
    let text = if arg.trim_start().starts_with('[') {
        arg.to_owned()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Usage(format!("--spec {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--spec: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum MapArg {
    Identity,
    VanHandel,
    Givens(PathBuf),
    Matrix(PathBuf),
}

impl FromStr for MapArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identity" => Ok(MapArg::Identity),
            "van-handel" => Ok(MapArg::VanHandel),
            _ => match s.split_once(':') {
                Some(("givens", p)) if !p.is_empty() => Ok(MapArg::Givens(p.into())),
                Some(("matrix", p)) if !p.is_empty() => Ok(MapArg::Matrix(p.into())),
                _ => Err(format!(
                    "expected identity, van-handel, givens:FILE or matrix:FILE, got {s:?}"
                )),
            },
        }
    }
}

impl From<MapArg> for String {
    fn from(m: MapArg) -> Self {
        match m {
            MapArg::Identity => "identity".into(),
            MapArg::VanHandel => "van-handel".into(),
            MapArg::Givens(p) => format!("givens:{}", p.display()),
            MapArg::Matrix(p) => format!("matrix:{}", p.display()),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl MapArg {
    pub fn load(&self, dim: usize) -> Result<LinearMap64, CliError> {
        let map = match self {
            MapArg::Identity => LinearMap64::identity(dim),
            MapArg::VanHandel => van_handel_map(),
            MapArg::Givens(p) => {
                let params: RotationParams64 = read_json(p)?;
                compose_givens(&params).into_map()
            }
            MapArg::Matrix(p) => read_json(p)?,
        };
        if map.dim() != dim {
            return Err(CliError::Usage(format!(
                "map dimension {} does not match spec dimension {dim}",
                map.dim()
            )));
        }
        Ok(map)
    }
}
