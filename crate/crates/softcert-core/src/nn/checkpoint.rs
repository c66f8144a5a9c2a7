//! Model checkpoint serialization.
//!
//! Line-oriented text format:
//!
//! ```text
//! SOFTCERT-MODEL v1
//! INPUT <d0> <d1> ...
//! <layer header>            one of: AFFINE out_dim
//!                                   CONV filters kh kw stride
//!                                   RELU
//!                                   FLATTEN
//! <weights...>              for AFFINE/CONV: whitespace-separated decimals,
//! <biases...>               row-major weights first, then biases
//! ...
//! ```
//!
//! Numbers are written with 17 significant digits, which round-trips f64
//! exactly. The parser accepts arbitrary whitespace between tokens.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::layer::{Layer, LayerSpec};
use crate::nn::network::Network;
use crate::tensor::Tensor;

const MAGIC: &str = "SOFTCERT-MODEL";
const VERSION: &str = "v1";
const VALUES_PER_LINE: usize = 8;

/// Write `network` to `writer` in the checkpoint format.
pub fn write_checkpoint(network: &Network, writer: &mut impl Write) -> Result<()> {
    writeln!(writer, "{MAGIC} {VERSION}")?;
    let dims: Vec<String> = network.input_shape().iter().map(|d| d.to_string()).collect();
    writeln!(writer, "INPUT {}", dims.join(" "))?;
    for layer in network.layers() {
        match layer.spec() {
            LayerSpec::Affine { out_dim } => writeln!(writer, "AFFINE {out_dim}")?,
            LayerSpec::Conv { filters, kernel_h, kernel_w, stride } => {
                writeln!(writer, "CONV {filters} {kernel_h} {kernel_w} {stride}")?
            }
            LayerSpec::Relu => writeln!(writer, "RELU")?,
            LayerSpec::Flatten => writeln!(writer, "FLATTEN")?,
        }
        if let (Some(w), Some(b)) = (layer.weight(), layer.bias()) {
            write_values(writer, w.data())?;
            write_values(writer, b.data())?;
        }
    }
    Ok(())
}

fn write_values(writer: &mut impl Write, values: &[f64]) -> Result<()> {
    for chunk in values.chunks(VALUES_PER_LINE) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(writer, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Save `network` to a file, replacing any existing content.
pub fn save_checkpoint(network: &Network, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(network, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parse a checkpoint from text.
pub fn read_checkpoint(text: &str) -> Result<Network> {
    let mut tokens = text.split_whitespace().peekable();
    let mut expect = |what: &str| -> Result<()> {
        match tokens_next(&mut tokens) {
            Some(tok) if tok == what => Ok(()),
            Some(tok) => Err(Error::format(format!("expected '{what}', found '{tok}'"))),
            None => Err(Error::format(format!("expected '{what}', found end of file"))),
        }
    };
    expect(MAGIC)?;
    expect(VERSION)?;
    expect("INPUT")?;

    let mut input_shape = Vec::new();
    while let Some(tok) = tokens.peek() {
        match tok.parse::<usize>() {
            Ok(d) => {
                input_shape.push(d);
                tokens.next();
            }
            Err(_) => break,
        }
    }
    if input_shape.is_empty() {
        return Err(Error::format("INPUT line carries no dimensions"));
    }

    let mut specs: Vec<LayerSpec> = Vec::new();
    let mut params: Vec<Option<(Vec<f64>, Vec<f64>)>> = Vec::new();
    // Shape inference runs in lockstep with parsing so weight counts are
    // known before reading them.
    let mut shape = input_shape.clone();
    while let Some(tok) = tokens.next() {
        let spec = match tok {
            "AFFINE" => LayerSpec::Affine { out_dim: parse_usize(&mut tokens, "AFFINE out_dim")? },
            "CONV" => LayerSpec::Conv {
                filters: parse_usize(&mut tokens, "CONV filters")?,
                kernel_h: parse_usize(&mut tokens, "CONV kernel_h")?,
                kernel_w: parse_usize(&mut tokens, "CONV kernel_w")?,
                stride: parse_usize(&mut tokens, "CONV stride")?,
            },
            "RELU" => LayerSpec::Relu,
            "FLATTEN" => LayerSpec::Flatten,
            other => return Err(Error::format(format!("unknown layer header '{other}'"))),
        };
        let layer = Layer::from_spec(&spec, &shape)?;
        let values = match (layer.weight(), layer.bias()) {
            (Some(w), Some(b)) => {
                let wv = parse_values(&mut tokens, w.len(), "weights")?;
                let bv = parse_values(&mut tokens, b.len(), "biases")?;
                Some((wv, bv))
            }
            _ => None,
        };
        shape = layer.out_shape();
        specs.push(spec);
        params.push(values);
    }

    let mut net = Network::compose(&input_shape, &specs)?;
    for (layer, values) in net.layers_mut().iter_mut().zip(params) {
        if let Some((wv, bv)) = values {
            let (weight, bias) = match layer {
                Layer::Affine(a) => (&mut a.weight, &mut a.bias),
                Layer::Conv(c) => (&mut c.weight, &mut c.bias),
                _ => unreachable!("only parametric layers carry values"),
            };
            weight.data_mut().copy_from_slice(&wv);
            bias.data_mut().copy_from_slice(&bv);
        }
    }
    Ok(net)
}

/// Load a checkpoint from a file.
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    read_checkpoint(&text)
}

fn tokens_next<'a>(tokens: &mut impl Iterator<Item = &'a str>) -> Option<&'a str> {
    tokens.next()
}

fn parse_usize<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    what: &str,
) -> Result<usize> {
    let tok = tokens
        .next()
        .ok_or_else(|| Error::format(format!("missing {what}")))?;
    tok.parse::<usize>()
        .map_err(|_| Error::format(format!("bad {what}: '{tok}'")))
}

fn parse_values<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    count: usize,
    what: &str,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let tok = tokens.next().ok_or_else(|| {
            Error::format(format!("checkpoint truncated: expected {count} {what}, found {i}"))
        })?;
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::format(format!("bad value in {what}: '{tok}'")))?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Architecture;

    #[test]
    fn round_trip_is_exact() {
        let net = Architecture::Custom {
            input_shape: vec![4, 4, 1],
            layers: vec![
                LayerSpec::Conv { filters: 2, kernel_h: 2, kernel_w: 2, stride: 2 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Affine { out_dim: 3 },
            ],
        }
        .build(99)
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("SOFTCERT-MODEL v1\nINPUT 4 4 1\n"));
        let back = read_checkpoint(&text).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let err = read_checkpoint("SOFTCERT-THING v1\nINPUT 2\nRELU\n");
        assert!(matches!(err, Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_weights() {
        let text = "SOFTCERT-MODEL v1\nINPUT 2\nAFFINE 2\n1.0 2.0 3.0\n";
        let err = read_checkpoint(text);
        assert!(matches!(err, Err(Error::Format(_))));
    }

    #[test]
    fn rejects_unknown_header() {
        let err = read_checkpoint("SOFTCERT-MODEL v1\nINPUT 2\nMAXPOOL 2\n");
        assert!(matches!(err, Err(Error::Format(_))));
    }

    #[test]
    fn seventeen_digit_values_survive() {
        let mut net =
            Network::compose(&[1], &[LayerSpec::Affine { out_dim: 1 }]).unwrap();
        net.nudge_param(0, crate::nn::ParamKind::Weight, 0, 0.1 + 0.2).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let back = read_checkpoint(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(
            net.layers()[0].weight().unwrap().data()[0],
            back.layers()[0].weight().unwrap().data()[0],
        );
    }
}
