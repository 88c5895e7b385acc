//! RIR manifest: a directory of WAV files plus `index.toml` mapping
//! `(source, array, mic)` to a file path relative to the directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Rir, RirSet, SourceRole};
use crate::signal::{read_wav, write_wav, WavFormat, Waveform};
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceIndexEntry {
    pub id: usize,
    pub role: SourceRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirIndexEntry {
    pub source: usize,
    pub array: usize,
    pub mic: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirIndex {
    pub sample_rate: u32,
    pub sources: Vec<SourceIndexEntry>,
    pub rirs: Vec<RirIndexEntry>,
}

/// Writes every RIR as a 64-bit float WAV (lossless) and the index file.
pub fn save_rirs(rirs: &RirSet, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for s in 0..rirs.sources() {
        for a in 0..rirs.arrays() {
            for m in 0..rirs.mics_per_array[a] {
                let name = PathBuf::from(format!("rir_s{s}_a{a}_m{m}.wav"));
                let rir = rirs.get(s, a, m);
                let wave = Waveform { samples: rir.taps.clone(), sample_rate: rir.sample_rate };
                write_wav(dir.join(&name), &wave, WavFormat::Float64)?;
                entries.push(RirIndexEntry { source: s, array: a, mic: m, path: name });
            }
        }
    }
    let index = RirIndex {
        sample_rate: rirs.sample_rate,
        sources: rirs.roles.iter().enumerate().map(|(id, &role)| SourceIndexEntry { id, role }).collect(),
        rirs: entries,
    };
    let path = dir.join(INDEX_FILE);
    std::fs::write(&path, toml::to_string(&index).map_err(|e| Error::Config(e.to_string()))?)?;
    Ok(path)
}

/// Loads a manifest from its directory or its index file.
pub fn load_rirs(path: impl AsRef<Path>) -> Result<RirSet> {
    let path = path.as_ref();
    let (dir, index_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(INDEX_FILE))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let index: RirIndex = toml::from_str(&std::fs::read_to_string(&index_path)?)?;

    let mut roles = vec![None; index.sources.len()];
    for s in &index.sources {
        let slot = roles
            .get_mut(s.id)
            .ok_or_else(|| Error::Config(format!("source id {} out of range", s.id)))?;
        *slot = Some(s.role);
    }
    let roles: Vec<SourceRole> = roles
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::Config(format!("source id {i} missing from index"))))
        .collect::<Result<_>>()?;
    if roles.iter().filter(|&&r| r == SourceRole::Target).count() != 1 {
        return Err(Error::Config("index must name exactly one target source".into()));
    }

    let arrays = index.rirs.iter().map(|e| e.array + 1).max().unwrap_or(0);
    let mut mics_per_array = vec![0; arrays];
    for e in &index.rirs {
        if e.source >= roles.len() {
            return Err(Error::Config(format!("RIR entry names unknown source {}", e.source)));
        }
        mics_per_array[e.array] = mics_per_array[e.array].max(e.mic + 1);
    }

    let mut slots: Vec<Vec<Vec<Option<Rir>>>> = roles
        .iter()
        .map(|_| mics_per_array.iter().map(|&m| vec![None; m]).collect())
        .collect();
    for e in &index.rirs {
        let wave = read_wav(dir.join(&e.path))?;
        if wave.sample_rate != index.sample_rate {
            return Err(Error::SampleRateMismatch { expected: index.sample_rate, found: wave.sample_rate });
        }
        slots[e.source][e.array][e.mic] = Some(Rir { taps: wave.samples, sample_rate: wave.sample_rate });
    }
    let mut rirs = Vec::with_capacity(roles.len());
    for (s, per_source) in slots.into_iter().enumerate() {
        let mut arrays_out = Vec::with_capacity(arrays);
        for (a, per_array) in per_source.into_iter().enumerate() {
            let mut mics = Vec::with_capacity(per_array.len());
            for (m, rir) in per_array.into_iter().enumerate() {
                mics.push(rir.ok_or(Error::MissingRir { source_id: s, array: a, mic: m })?);
            }
            arrays_out.push(mics);
        }
        rirs.push(arrays_out);
    }
    Ok(RirSet { roles, mics_per_array, sample_rate: index.sample_rate, rirs })
}
