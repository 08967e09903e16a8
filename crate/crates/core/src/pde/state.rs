use std::fmt::Write as _;

use super::PdeError;
use crate::grid::Grid;
use crate::scalar::Real;
use crate::symmetry::Character;

/// Grid fields `u_1, …, u_ℓ` with per-component symmetry tags.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T> {
    pub grid: Grid<T>,
    pub fields: Vec<Vec<T>>,
    /// `None`: no projection; otherwise the character the component follows.
    pub tags: Vec<Option<Character>>,
    /// Rotation order `m` of the group used for tagged components.
    pub group_order: Option<usize>,
}

impl<T: Real> SystemState<T> {
    pub fn new(grid: Grid<T>, fields: Vec<Vec<T>>) -> Result<Self, PdeError> {
        let ell = fields.len();
        Self::with_tags(grid, fields, vec![None; ell], None)
    }

    pub fn with_tags(
        grid: Grid<T>,
        mut fields: Vec<Vec<T>>,
        tags: Vec<Option<Character>>,
        group_order: Option<usize>,
    ) -> Result<Self, PdeError> {
        if tags.len() != fields.len() {
            return Err(PdeError::GridMismatch(format!(
                "{} tags for {} fields",
                tags.len(),
                fields.len()
            )));
        }
        if tags.iter().any(Option::is_some) && group_order.is_none() {
            return Err(PdeError::InvalidSpec("tagged components need a group order".into()));
        }
        for (i, f) in fields.iter_mut().enumerate() {
            if f.len() != grid.len() {
                return Err(PdeError::GridMismatch(format!(
                    "field {} has {} values, grid has {}",
                    i + 1,
                    f.len(),
                    grid.len()
                )));
            }
            for (idx, v) in f.iter_mut().enumerate() {
                if grid.is_boundary(idx) {
                    *v = T::zero();
                }
            }
        }
        Ok(Self {
            grid,
            fields,
            tags,
            group_order,
        })
    }

    pub fn zeros(grid: Grid<T>, ell: usize) -> Self {
        let fields = vec![vec![T::zero(); grid.len()]; ell];
        Self {
            grid,
            fields,
            tags: vec![None; ell],
            group_order: None,
        }
    }

    pub fn ell(&self) -> usize {
        self.fields.len()
    }

    /// `(∫ u_i²)^{1/2}` by the nodal rule.
    pub fn l2_norm(&self, i: usize) -> T {
        (self.fields[i].iter().map(|v| *v * *v).sum::<T>() * self.grid.cell_volume()).sqrt()
    }

    /// Text checkpoint: a key/value header and one row per node.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# nlsys state\n");
        let _ = writeln!(out, "dimension {}", self.grid.dim());
        let _ = writeln!(out, "half_width {:e}", self.grid.half_width().as_f64());
        let _ = writeln!(out, "points {}", self.grid.points_per_axis());
        let _ = writeln!(out, "components {}", self.ell());
        let tags: Vec<&str> = self
            .tags
            .iter()
            .map(|t| match t {
                None => "none",
                Some(Character::Trivial) => "trivial",
                Some(Character::Theta) => "theta",
            })
            .collect();
        let _ = writeln!(out, "tags {}", tags.join(" "));
        match self.group_order {
            Some(m) => {
                let _ = writeln!(out, "group {m}");
            }
            None => out.push_str("group none\n"),
        }
        out.push_str("values\n");
        for idx in 0..self.grid.len() {
            let row: Vec<String> = self.fields.iter().map(|f| format!("{:e}", f[idx].as_f64())).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PdeError> {
        let bad = |m: String| PdeError::Checkpoint(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let mut dim = None;
        let mut half = None;
        let mut n = None;
        let mut ell = None;
        let mut tags = None;
        let mut group = None;
        for line in lines.by_ref() {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let one = || {
                rest.first()
                    .copied()
                    .ok_or_else(|| bad(format!("missing value for {key}")))
            };
            match key {
                "values" => break,
                "dimension" => dim = Some(one()?.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "half_width" => half = Some(one()?.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "points" => n = Some(one()?.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "components" => ell = Some(one()?.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "tags" => {
                    tags = Some(
                        rest.iter()
                            .map(|t| match *t {
                                "none" => Ok(None),
                                "trivial" => Ok(Some(Character::Trivial)),
                                "theta" => Ok(Some(Character::Theta)),
                                other => Err(bad(format!("unknown tag {other}"))),
                            })
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "group" => {
                    let v = one()?;
                    group = Some(if v == "none" {
                        None
                    } else {
                        Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                    })
                }
                other => return Err(bad(format!("unknown header key {other}"))),
            }
        }
        let (dim, half, n, ell) = match (dim, half, n, ell) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(bad("incomplete header".into())),
        };
        let grid = Grid::new(dim, n, T::lit(half)).ok_or_else(|| bad("invalid grid".into()))?;
        let mut fields = vec![Vec::with_capacity(grid.len()); ell];
        for (row, line) in lines.enumerate() {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != ell {
                return Err(bad(format!("row {} has {} values, expected {ell}", row + 1, vals.len())));
            }
            for (f, v) in fields.iter_mut().zip(vals) {
                f.push(T::lit(v.parse::<f64>().map_err(|e| bad(e.to_string()))?));
            }
        }
        Self::with_tags(grid, fields, tags.unwrap_or_else(|| vec![None; ell]), group.flatten())
    }
}
