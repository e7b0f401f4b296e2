//! Posterior sample files.
//!
//! A samples file starts with `#` comment lines of `key=value` provenance
//! (config hash, seed, ...), followed by a CSV table with columns `chain`,
//! `iteration` and one column per natural-layout parameter. Values are
//! written in shortest round-trip form, so reading a file back reproduces
//! the draws exactly.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sampler::PosteriorSamples;

/// Ordered `key=value` provenance pairs.
pub type Provenance = Vec<(String, String)>;

/// Writes `# key=value` lines.
pub fn write_provenance<W: Write>(writer: &mut W, provenance: &Provenance) -> Result<()> {
    for (k, v) in provenance {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidParams(format!("provenance entry `{k}` cannot be written")));
        }
        writeln!(writer, "# {k}={v}")?;
    }
    Ok(())
}

/// Reads leading `# key=value` lines; other comment lines are skipped.
pub fn read_provenance<R: BufRead>(reader: R) -> Result<Provenance> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let Some(comment) = line.trim_end().strip_prefix('#') else { break };
        if let Some((k, v)) = comment.trim().split_once('=') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

pub fn write_samples<W: Write>(samples: &PosteriorSamples, provenance: &Provenance, mut writer: W) -> Result<()> {
    writeln!(writer, "# stockout posterior samples")?;
    write_provenance(&mut writer, provenance)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(samples.names.iter().cloned());
    w.write_record(&header)?;
    for (c, chain) in samples.chains.iter().enumerate() {
        for (draw, it) in chain.iter().zip(&samples.iterations) {
            let mut row = vec![c.to_string(), it.to_string()];
            row.extend(draw.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a samples file written for `spec`. The parameter columns must be
/// exactly `names`; each chain must list the same iterations.
pub fn read_samples<R: Read>(reader: R, spec: &ModelSpec, names: &[String]) -> Result<(PosteriorSamples, Provenance)> {
    let mut reader = BufReader::new(reader);
    let mut provenance = Vec::new();
    let mut line_no: usize = 0;
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let Some(comment) = line.trim_end().strip_prefix('#') else {
            body.push_str(&line);
            break;
        };
        if let Some((k, v)) = comment.trim().split_once('=') {
            provenance.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    reader.read_to_string(&mut body)?;
    let offset = line_no.saturating_sub(1);

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = ["chain", "iteration"].into_iter().chain(names.iter().map(String::as_str)).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: offset + 1,
            msg: format!(
                "sample columns do not match the model ({} columns, expected {})",
                header.len(),
                expected.len()
            ),
        });
    }
    let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut iterations: Vec<Vec<usize>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = offset + record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |what: &str, text: &str| Error::Parse { line, msg: format!("invalid {what} `{text}`") };
        let chain: usize = record[0].trim().parse().map_err(|_| parse_err("chain", &record[0]))?;
        let it: usize = record[1].trim().parse().map_err(|_| parse_err("iteration", &record[1]))?;
        let draw = record
            .iter()
            .skip(2)
            .map(|f| f.trim().parse::<f64>().map_err(|_| parse_err("value", f)))
            .collect::<Result<Vec<f64>>>()?;
        if chain > chains.len() {
            return Err(Error::Parse { line, msg: format!("chain {chain} appears before chain {}", chains.len()) });
        }
        if chain == chains.len() {
            chains.push(Vec::new());
            iterations.push(Vec::new());
        }
        chains[chain].push(draw);
        iterations[chain].push(it);
    }
    if chains.is_empty() {
        return Err(Error::InvalidData("samples file has no draws".into()));
    }
    if iterations.iter().any(|its| *its != iterations[0]) {
        return Err(Error::InvalidData("chains list different iterations".into()));
    }
    let samples = PosteriorSamples::new(spec.clone(), names.to_vec(), chains, iterations.swap_remove(0))?;
    Ok((samples, provenance))
}

/// Writes `parameter,rhat` rows; undefined values are left empty.
pub fn write_rhat<W: Write>(samples: &PosteriorSamples, provenance: &Provenance, mut writer: W) -> Result<()> {
    write_provenance(&mut writer, provenance)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["parameter", "rhat"])?;
    for (name, r) in samples.names.iter().zip(&samples.rhat) {
        w.write_record([name.as_str(), &r.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}
