//! Versioned model archive: a one-line header followed by a JSON body with
//! base64-packed little-endian f64 arrays for the dense blocks.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::ingest::Standardization;

use super::{FittedModel, Hyperparameters, LatentPosterior};

pub const MODEL_HEADER: &str = "SEASMAP-MODEL v1";

#[derive(Serialize, Deserialize)]
struct PackedMatrix {
    rows: usize,
    cols: usize,
    /// Row-major little-endian f64 bytes, base64.
    data: String,
}

impl PackedMatrix {
    fn pack(m: &Array2<f64>) -> Self {
        let mut bytes = Vec::with_capacity(m.len() * 8);
        for v in m.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        PackedMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: B64.encode(bytes),
        }
    }

    fn unpack(&self) -> Result<Array2<f64>> {
        let values = decode_f64s(&self.data, self.rows * self.cols)?;
        Array2::from_shape_vec((self.rows, self.cols), values)
            .map_err(|e| Error::Validation(format!("bad matrix shape in archive: {e}")))
    }
}

fn pack_vector(v: &Array1<f64>) -> String {
    let mut bytes = Vec::with_capacity(v.len() * 8);
    for x in v.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64s(encoded: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(encoded)
        .map_err(|e| Error::Validation(format!("bad base64 block in archive: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Validation(format!(
            "archive block holds {} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ArchiveBody {
    hyper: Hyperparameters,
    log_marginal: f64,
    dic: f64,
    locations: Vec<(f64, f64)>,
    months_observed: Vec<usize>,
    stationary_ar1: bool,
    beta_prior_var: f64,
    covariates: Vec<String>,
    standardization: Vec<Standardization>,
    n_coef: usize,
    mean: String,
    cov_factor: PackedMatrix,
    design: PackedMatrix,
}

/// Writes a fitted model: the version header line, then one JSON document.
pub fn write_model<W: Write>(model: &FittedModel, mut writer: W) -> Result<()> {
    let body = ArchiveBody {
        hyper: model.hyper,
        log_marginal: model.log_marginal,
        dic: model.dic,
        locations: model.locations.clone(),
        months_observed: model.months_observed.clone(),
        stationary_ar1: model.stationary_ar1,
        beta_prior_var: model.beta_prior_var,
        covariates: model.covariates.clone(),
        standardization: model.standardization.clone(),
        n_coef: model.posterior.n_coef,
        mean: pack_vector(&model.posterior.mean),
        cov_factor: PackedMatrix::pack(&model.posterior.cov_factor),
        design: PackedMatrix::pack(&model.posterior.design),
    };
    let io_err = |e: std::io::Error| Error::Validation(format!("archive write failed: {e}"));
    writeln!(writer, "{MODEL_HEADER}").map_err(io_err)?;
    let json = serde_json::to_string(&body)
        .map_err(|e| Error::Validation(format!("archive serialization failed: {e}")))?;
    writeln!(writer, "{json}").map_err(io_err)
}

/// Reads a model archive, rejecting unknown headers.
pub fn read_model<R: BufRead>(mut reader: R) -> Result<FittedModel> {
    let io_err = |e: std::io::Error| Error::Validation(format!("archive read failed: {e}"));
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io_err)?;
    if header.trim_end() != MODEL_HEADER {
        return Err(Error::Validation(format!(
            "not a model archive: expected header {MODEL_HEADER:?}, found {:?}",
            header.trim_end()
        )));
    }
    let mut json = String::new();
    reader.read_to_string(&mut json).map_err(io_err)?;
    let body: ArchiveBody = serde_json::from_str(&json)
        .map_err(|e| Error::Validation(format!("malformed archive body: {e}")))?;

    let n_locations = body.locations.len();
    let dim = body.n_coef + 12 * n_locations;
    let mean = Array1::from_vec(decode_f64s(&body.mean, dim)?);
    let cov_factor = body.cov_factor.unpack()?;
    if cov_factor.nrows() != dim || cov_factor.ncols() != dim {
        return Err(Error::Validation(format!(
            "archive covariance factor is {}x{}, expected {dim}x{dim}",
            cov_factor.nrows(),
            cov_factor.ncols()
        )));
    }
    let design = body.design.unpack()?;
    if design.ncols() != body.n_coef {
        return Err(Error::Validation(format!(
            "archive design has {} columns for {} coefficients",
            design.ncols(),
            body.n_coef
        )));
    }

    Ok(FittedModel {
        hyper: Hyperparameters::new(
            body.hyper.sigma_e2,
            body.hyper.sigma_f2,
            body.hyper.kappa,
            body.hyper.a,
        )?,
        posterior: LatentPosterior {
            mean,
            cov_factor,
            design,
            n_coef: body.n_coef,
            n_locations,
        },
        log_marginal: body.log_marginal,
        dic: body.dic,
        locations: body.locations,
        months_observed: body.months_observed,
        stationary_ar1: body.stationary_ar1,
        beta_prior_var: body.beta_prior_var,
        covariates: body.covariates,
        standardization: body.standardization,
    })
}
