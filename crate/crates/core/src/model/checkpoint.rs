//! Checkpoint directory:
//!
//! ```text
//! config.toml    encoder configuration
//! params.bin     every parameter block, little-endian f64, concatenated
//! manifest.csv   name,shape,offset,len  (offset in bytes into params.bin)
//! ```

use std::path::Path;

use super::{init_params, EncoderConfig, ModelParams};
use crate::binio::{self, format_err};
use crate::error::Result;

impl ModelParams {
    pub fn save(&self, dir: &Path) -> Result<()> {
        binio::create_dir(dir)?;
        binio::write(&dir.join("config.toml"), toml::to_string(&self.config)?)?;
        let mut blob = Vec::new();
        let mut w = csv::Writer::from_path(dir.join("manifest.csv"))?;
        w.write_record(["name", "shape", "offset", "len"])?;
        for (name, (shape, data)) in self.param_names().iter().zip(self.tensors()) {
            let shape = shape.iter().map(ToString::to_string).collect::<Vec<_>>().join("x");
            w.write_record([name.as_str(), &shape, &blob.len().to_string(), &data.len().to_string()])?;
            blob.extend(binio::f64s_to_le(data));
        }
        w.flush().map_err(|e| crate::error::Error::io(dir.join("manifest.csv"), e))?;
        binio::write(&dir.join("params.bin"), blob)
    }

    pub fn load(dir: &Path) -> Result<ModelParams> {
        let config: EncoderConfig = toml::from_str(&binio::read_string(&dir.join("config.toml"))?)?;
        let mut params = init_params(&config)?;
        let bin_path = dir.join("params.bin");
        let blob = binio::read(&bin_path)?;
        let man_path = dir.join("manifest.csv");
        let expected: Vec<(String, String)> = params
            .param_names()
            .into_iter()
            .zip(params.tensors())
            .map(|(n, (s, _))| (n, s.iter().map(ToString::to_string).collect::<Vec<_>>().join("x")))
            .collect();
        let mut rows = Vec::new();
        for rec in csv::Reader::from_path(&man_path)?.records() {
            let rec = rec?;
            let offset: usize = rec[2].parse().map_err(|_| format_err(&man_path, "bad offset"))?;
            let len: usize = rec[3].parse().map_err(|_| format_err(&man_path, "bad len"))?;
            rows.push((rec[0].to_string(), rec[1].to_string(), offset, len));
        }
        if rows.len() != expected.len() {
            return Err(format_err(&man_path, format!("expected {} entries, found {}", expected.len(), rows.len())));
        }
        let no_grads = vec![None; rows.len()];
        for (slot, ((name, shape, offset, len), (want_name, want_shape))) in
            params.param_refs(&no_grads).into_iter().zip(rows.into_iter().zip(expected))
        {
            if name != want_name || shape != want_shape || len != slot.value.len() {
                return Err(format_err(&man_path, format!("entry {name} ({shape}) does not match {want_name} ({want_shape})")));
            }
            let bytes = blob.get(offset..offset + 8 * len).ok_or_else(|| format_err(&bin_path, format!("{name} out of bounds")))?;
            slot.value.copy_from_slice(&binio::le_to_f64s(&bin_path, bytes)?);
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let cfg = EncoderConfig { hidden_dims: vec![7], ..EncoderConfig::new(5, 2, 9) };
        let mut p = init_params(&cfg).unwrap();
        p.log_var = vec![0.25, -1.5];
        let dir = tempfile::tempdir().unwrap();
        p.save(dir.path()).unwrap();
        let back = ModelParams::load(dir.path()).unwrap();
        assert_eq!(back, p);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert!(manifest.starts_with("name,shape,offset,len\nencoder.0.weight,5x7,0,35\nencoder.0.bias,1x7,280,7\n"));
    }

    #[test]
    fn tampered_manifest_rejected() {
        let cfg = EncoderConfig::new(4, 1, 1);
        let p = init_params(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.save(dir.path()).unwrap();
        let path = dir.path().join("manifest.csv");
        let text = std::fs::read_to_string(&path).unwrap().replace("encoder.0.weight", "encoder.9.weight");
        std::fs::write(&path, text).unwrap();
        assert!(ModelParams::load(dir.path()).is_err());
    }
}
