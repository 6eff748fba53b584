//! Small fully connected networks with hand-written backpropagation and Adam.

mod adam;
mod mlp;

use std::path::Path;

pub use adam::AdamState;
pub use mlp::{Gradients, Mlp, Snapshot, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

use crate::error::{Error, Result};

pub fn save_snapshot(net: &Mlp, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&net.snapshot()).expect("snapshot serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<Mlp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let snap: Snapshot = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Mlp::from_snapshot(&snap)
}

/// Soft target update `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if target.layer_sizes() != online.layer_sizes() {
        return Err(Error::Dimension(format!(
            "soft update between {:?} and {:?}",
            target.layer_sizes(),
            online.layer_sizes()
        )));
    }
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_update_cases() {
        let online = Mlp::from_params(&[1, 1], vec![1.0, 1.0]).unwrap();
        let mut target = Mlp::zeros(&[1, 1]).unwrap();
        soft_update(&mut target, &online, 2e-4).unwrap();
        assert_eq!(target.params(), &[2e-4, 2e-4]);

        let mut t1 = Mlp::from_params(&[1, 1], vec![0.3, -0.7]).unwrap();
        soft_update(&mut t1, &online, 1.0).unwrap();
        assert_eq!(t1.params(), online.params());

        let mut t0 = Mlp::from_params(&[1, 1], vec![0.3, -0.7]).unwrap();
        soft_update(&mut t0, &online, 0.0).unwrap();
        assert_eq!(t0.params(), &[0.3, -0.7]);

        let mut wrong = Mlp::zeros(&[2, 1]).unwrap();
        assert!(soft_update(&mut wrong, &online, 0.5).is_err());
    }

    #[test]
    fn snapshot_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = Mlp::from_params(&[2, 1], vec![0.1, -0.25, 3.5]).unwrap();
        save_snapshot(&net, &path).unwrap();
        assert_eq!(load_snapshot(&path).unwrap(), net);
    }
}
