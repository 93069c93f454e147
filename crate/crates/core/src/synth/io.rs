//! On-disk layout of a dataset directory:
//!
//! ```text
//! spec.toml     generating spec
//! inputs.bin    "<M> <input_dim>\n" followed by M*input_dim little-endian f64
//! labels.csv    one column per task (training tasks, then held-out tasks)
//! split.csv     index,split with split in {train, val, test}
//! ```

use std::path::Path;

use super::{DatasetSpec, MultiSimDataset, SplitIndices};
use crate::autodiff::Tensor;
use crate::binio::{self, format_err};
use crate::error::Result;

impl MultiSimDataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        binio::create_dir(dir)?;
        binio::write(&dir.join("spec.toml"), toml::to_string(&self.spec)?)?;

        let mut bin = format!("{} {}\n", self.num_samples(), self.input_dim()).into_bytes();
        bin.extend(binio::f64s_to_le(self.inputs.data()));
        binio::write(&dir.join("inputs.bin"), bin)?;

        let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
        w.write_record(self.spec.all_tasks().map(|t| t.name.as_str()))?;
        let labels = self.raw_labels();
        for i in 0..self.num_samples() {
            w.write_record(labels.iter().map(|col| col[i].to_string()))?;
        }
        w.flush().map_err(|e| crate::error::Error::io(dir.join("labels.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("split.csv"))?;
        w.write_record(["index", "split"])?;
        for (name, idx) in [("train", &self.split.train), ("val", &self.split.val), ("test", &self.split.test)] {
            for i in idx {
                w.write_record([i.to_string().as_str(), name])?;
            }
        }
        w.flush().map_err(|e| crate::error::Error::io(dir.join("split.csv"), e))?;
        Ok(())
    }

    /// Reads a directory written by [`MultiSimDataset::save`]. Ground truth is not stored.
    pub fn load(dir: &Path) -> Result<MultiSimDataset> {
        let spec: DatasetSpec = toml::from_str(&binio::read_string(&dir.join("spec.toml"))?)?;

        let path = dir.join("inputs.bin");
        let bytes = binio::read(&path)?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| format_err(&path, "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| format_err(&path, "header is not utf-8"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format_err(&path, format!("bad header `{header}`"))))
            .collect::<Result<_>>()?;
        let [m, d] = dims[..] else { return Err(format_err(&path, format!("bad header `{header}`"))) };
        let values = binio::le_to_f64s(&path, &bytes[nl + 1..])?;
        let inputs = Tensor::matrix(m, d, values).map_err(|e| format_err(&path, e.to_string()))?;

        let path = dir.join("labels.csv");
        let mut r = csv::Reader::from_path(&path)?;
        let ncols = r.headers()?.len();
        let mut labels = vec![Vec::with_capacity(m); ncols];
        for rec in r.records() {
            let rec = rec?;
            for (c, field) in rec.iter().enumerate() {
                labels[c].push(field.parse().map_err(|_| format_err(&path, format!("bad label `{field}`")))?);
            }
        }
        if labels.iter().any(|col| col.len() != m) {
            return Err(format_err(&path, "row count differs from inputs"));
        }

        let path = dir.join("split.csv");
        let mut split = SplitIndices { train: vec![], val: vec![], test: vec![] };
        for rec in csv::Reader::from_path(&path)?.records() {
            let rec = rec?;
            let i: usize = rec[0].parse().map_err(|_| format_err(&path, format!("bad index `{}`", &rec[0])))?;
            match &rec[1] {
                "train" => split.train.push(i),
                "val" => split.val.push(i),
                "test" => split.test.push(i),
                other => return Err(format_err(&path, format!("unknown split `{other}`"))),
            }
        }
        Ok(MultiSimDataset::from_parts(spec, inputs, labels, split, None))
    }
}

#[cfg(test)]
mod tests {
    use crate::synth::{generate_dataset, DatasetSpec, MultiSimDataset, TaskSpec};

    #[test]
    fn save_load_preserves_contents() {
        let spec = DatasetSpec {
            training_tasks: vec![TaskSpec::new("a", 3), TaskSpec::new("b", 4)],
            ood_tasks: vec![TaskSpec::new("c", 2)],
            num_samples: 200,
            input_dim: 12,
            ..DatasetSpec::default()
        };
        let ds = generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = MultiSimDataset::load(dir.path()).unwrap();
        assert_eq!(back.spec, ds.spec);
        assert_eq!(back.inputs, ds.inputs);
        assert_eq!(back.raw_labels(), ds.raw_labels());
        assert_eq!(back.split, ds.split);
        assert!(back.ground_truth.is_none());

        let header = std::fs::read(dir.path().join("inputs.bin")).unwrap();
        assert!(header.starts_with(b"200 12\n"));
        assert_eq!(header.len(), "200 12\n".len() + 200 * 12 * 8);
    }
}
