//! Plain-text tensor format used for MDP fixtures and parameter checkpoints.
//!
//! A file is a sequence of named blocks. Each block starts with a header
//! line holding the name followed by the dimensions, then one line per
//! row of the innermost dimension:
//!
//! ```text
//! # a 2x3 reward table
//! reward 2 3
//! 0.5 -1 0
//! 0.25 0 1
//! ```
//!
//! A rank-1 tensor occupies a single row. Blank lines and lines starting
//! with `#` are ignored. Values are written with Rust's shortest
//! round-trip formatting, so `parse(write(t)) == t` bit for bit.

use std::fmt::Write as _;

use crate::{Error, Result};

const MAX_ELEMENTS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Tensor::new(name, vec![1], vec![value])
    }
}

/// Collection of parsed blocks with lookup by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: Vec<Tensor>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidModel(format!("missing tensor `{name}`")))
    }

    /// Like [`get`](Self::get) but also checks the shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::InvalidModel(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        Ok(&t.data)
    }
}

fn is_name(token: &str) -> bool {
    let mut chars = token.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
        && token.parse::<f64>().is_err()
}

pub fn parse(text: &str) -> Result<TensorFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut tensors: Vec<Tensor> = Vec::new();
    while let Some((lineno, header)) = lines.next() {
        let mut tokens = header.split_whitespace();
        let name = tokens.next().unwrap_or_default();
        if !is_name(name) {
            return Err(Error::parse(
                lineno,
                format!("expected a tensor header, found `{name}`"),
            ));
        }
        if tensors.iter().any(|t| t.name == name) {
            return Err(Error::parse(lineno, format!("duplicate tensor `{name}`")));
        }
        let shape = tokens
            .map(|t| match t.parse::<usize>() {
                Ok(0) => Err(Error::parse(lineno, "dimensions must be positive")),
                Ok(d) => Ok(d),
                Err(_) => Err(Error::parse(lineno, format!("bad dimension `{t}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let Some(&row_len) = shape.last() else {
            return Err(Error::parse(
                lineno,
                format!("tensor `{name}` has no dimensions"),
            ));
        };
        let total = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::parse(lineno, "tensor too large"))?;
        let n_rows = total / row_len;

        let mut data = Vec::with_capacity(total.min(4096));
        for _ in 0..n_rows {
            let Some((rowno, row)) = lines.next() else {
                return Err(Error::parse(
                    lineno,
                    format!("tensor `{name}` is truncated"),
                ));
            };
            let before = data.len();
            for token in row.split_whitespace() {
                let value: f64 = token
                    .parse()
                    .map_err(|_| Error::parse(rowno, format!("bad value `{token}`")))?;
                if !value.is_finite() {
                    return Err(Error::parse(rowno, format!("non-finite value `{token}`")));
                }
                data.push(value);
            }
            if data.len() - before != row_len {
                return Err(Error::parse(
                    rowno,
                    format!("expected {row_len} values, found {}", data.len() - before),
                ));
            }
        }
        tensors.push(Tensor {
            name: name.to_owned(),
            shape,
            data,
        });
    }
    Ok(TensorFile { tensors })
}

pub fn write(tensors: &[Tensor]) -> String {
    let mut out = String::new();
    for t in tensors {
        out.push_str(&t.name);
        for d in &t.shape {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let row_len = t.shape.last().copied().unwrap_or(1).max(1);
        for row in t.data.chunks(row_len) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_blocks_and_comments() {
        let text = "# fixture\nreward 2 3\n0.5 -1 0\n\n0.25 0 1\ngamma 1\n0.9\n";
        let file = parse(text).unwrap();
        assert_eq!(file.tensors.len(), 2);
        assert_eq!(
            file.expect("reward", &[2, 3]).unwrap(),
            &[0.5, -1.0, 0.0, 0.25, 0.0, 1.0]
        );
        assert_eq!(file.expect("gamma", &[1]).unwrap(), &[0.9]);
        assert!(file.expect("gamma", &[2]).is_err());
        assert!(file.get("missing").is_err());
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "1.0 2.0\n",
            "t 2\n1.0\n",
            "t 2\n1 2 3\n",
            "t 0\n",
            "t\n1\n",
            "t 2\n1 nan\n",
            "t 2\n1 x\n",
            "t 1\n1\nt 1\n2\n",
            "t 99999999 99999999\n",
        ] {
            assert!(parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn rank_three_layout() {
        let t = Tensor::new("p", vec![2, 2, 3], (0..12).map(f64::from).collect());
        let text = write(std::slice::from_ref(&t));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(parse(&text).unwrap().tensors, vec![t]);
    }

    proptest! {
        #[test]
        fn write_then_parse_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in prop::collection::vec(-1e12f64..1e12, 25),
        ) {
            let data: Vec<f64> = seed.iter().cycle().take(rows * cols).map(|v| v / 7.0).collect();
            let t = Tensor::new("w", vec![rows, cols], data);
            let back = parse(&write(std::slice::from_ref(&t))).unwrap();
            prop_assert_eq!(back.tensors[0].data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
