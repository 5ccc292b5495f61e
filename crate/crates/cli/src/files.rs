//! On-disk formats. Every writer goes through [`write_atomic`].

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use acam_core::gccphat::{AudioBuffer, EmissionWindow};
use acam_core::geometry::Pose;
use acam_core::simulator::McReport;
use acam_core::tdoa_model::{PairingStrategy, TdoaRow, TdoaTable};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), e.line())))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(path.display(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>, CliError> {
    let poses: Vec<Pose> = read_json(path)?;
    if poses.is_empty() {
        return Err(CliError::Input(format!("{}: no poses", path.display())));
    }
    Ok(poses)
}

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<(), CliError> {
    write_json(path, &poses)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::Input(format!("{} line {}: {e}", path.display(), pos.line())),
        None => CliError::input(path.display(), e),
    }
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path.display(), e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Measurement CSV: `event,board_index,source_index,pair_i,pair_ref,tdoa_seconds`.
pub fn read_measurements(
    path: &Path,
    mic_count: usize,
    strategy: PairingStrategy,
) -> Result<TdoaTable, CliError> {
    let rows: Vec<TdoaRow> = read_csv(path)?;
    TdoaTable::from_rows(mic_count, strategy, &rows).map_err(|e| match e {
        // Data rows start on line 2, after the header.
        acam_core::Error::MalformedRow { row, message } => {
            CliError::Input(format!("{} line {}: {message}", path.display(), row + 2))
        }
        other => CliError::input(path.display(), other),
    })
}

pub fn measurements_csv(table: &TdoaTable) -> Result<Vec<u8>, CliError> {
    to_csv(table.rows())
}

pub fn write_measurements(path: &Path, table: &TdoaTable) -> Result<(), CliError> {
    write_atomic(path, &measurements_csv(table)?)
}

/// Window CSV: `start_sample,length_samples,board_index,source_index`.
pub fn read_windows(path: &Path) -> Result<Vec<EmissionWindow>, CliError> {
    read_csv(path)
}

pub fn write_windows(path: &Path, windows: &[EmissionWindow]) -> Result<(), CliError> {
    write_atomic(path, &to_csv(windows)?)
}

#[derive(Serialize)]
struct TrialErrorRow {
    trial: usize,
    mic_index: usize,
    error_m: f64,
    converged: bool,
}

/// Per-trial CSV: `trial,mic_index,error_m,converged`. Failed trials have
/// no rows.
pub fn trials_csv(report: &McReport) -> Result<Vec<u8>, CliError> {
    to_csv(report.trials.iter().flat_map(|t| {
        t.mic_indices
            .iter()
            .zip(&t.mic_errors)
            .map(move |(&mic_index, &error_m)| TrialErrorRow {
                trial: t.trial,
                mic_index,
                error_m,
                converged: t.converged,
            })
    }))
}

/// Reads 16/24/32-bit integer or 32-bit float PCM; integer samples are
/// scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<AudioBuffer, CliError> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| CliError::input(path.display(), e))?;
    let spec = reader.spec();
    let n = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
        }
    }
    .map_err(|e| CliError::input(path.display(), e))?;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n.max(1)); n];
    for frame in interleaved.chunks(n) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    AudioBuffer::new(spec.sample_rate as f64, channels)
        .map_err(|e| CliError::input(path.display(), e))
}

/// Writes 32-bit float PCM.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<(), CliError> {
    let spec = hound::WavSpec {
        channels: audio.channel_count() as u16,
        sample_rate: audio.sample_rate().round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut bytes = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut bytes, spec)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for i in 0..audio.len() {
            for ch in audio.channels() {
                writer
                    .write_sample(ch[i] as f32)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
        }
        writer
            .finalize()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    write_atomic(path, &bytes.into_inner())
}
