//! Parsers for grid, list and design flags.

use std::str::FromStr;

use powersim_core::design::DesignSpec;

/// Values `lo, lo + step, ...` up to `hi` inclusive (within a small
/// tolerance), computed as `lo + k * step` so there is no drift.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(format!("expected lo:hi:step, got `{s}`"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
        return Err("grid bounds must be finite".into());
    }
    if step <= 0.0 {
        return Err("grid step must be positive".into());
    }
    if hi < lo {
        return Err("grid needs lo <= hi".into());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 10_000_000 {
        return Err("grid has too many points".into());
    }
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

/// Either a `lo:hi:step` grid or a comma-separated list.
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    if s.contains(':') {
        return parse_grid(s);
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(v)
}

/// Sample sizes as a grid or list; every value must be a whole number.
pub fn parse_counts(s: &str) -> Result<Vec<u64>, String> {
    parse_values(s)?
        .into_iter()
        .map(|x| {
            let r = x.round();
            if (x - r).abs() > 1e-9 || r < 0.0 {
                Err(format!("`{x}` is not a whole number"))
            } else {
                Ok(r as u64)
            }
        })
        .collect()
}

/// `SUBJECTSxITEMS`, e.g. `30x16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignArg(pub DesignSpec);

impl FromStr for DesignArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected SUBJECTSxITEMS, got `{s}`"))?;
        let n = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a count"));
        DesignSpec::new(n(a)?, n(b)?).map(DesignArg).map_err(|e| e.to_string())
    }
}

pub fn parse_designs(s: &str) -> Result<Vec<DesignSpec>, String> {
    s.split(',').map(|t| t.parse::<DesignArg>().map(|d| d.0)).collect()
}
