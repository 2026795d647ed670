#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use etchloop::config::Config;
use etchloop::server::{serve, AppState};
use etchloop_core::io::decode_mask_png;
use etchloop_core::synth::{write_corpus, SynthConfig};
use etchloop_core::BinaryMask;

/// A running service on an ephemeral loopback port.
pub struct Server {
    pub base: String,
    pub app: Arc<AppState>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(cfg: Config) -> Server {
        let app = Arc::new(AppState::new(cfg, None).expect("app state"));
        Self::start_with(app)
    }

    pub fn start_with(app: Arc<AppState>) -> Server {
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let served = app.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve(served, listener, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Server {
            base: format!("http://{addr}"),
            app,
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Synthetic dataset of `count` mirrors of side `size`; returns mirror ids.
pub fn dataset(root: &Path, count: usize, size: usize, seed: u64) -> Vec<String> {
    let cfg = SynthConfig {
        height: size,
        width: size,
        ..SynthConfig::default()
    };
    write_corpus(root, &cfg, count, seed)
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect()
}

pub fn service_config(dataset: &Path, journals: &Path, backend: &str) -> Config {
    Config {
        dataset: dataset.to_path_buf(),
        journal_dir: journals.to_path_buf(),
        backend: backend.into(),
        patch_size: 64,
        cap: 500,
        ..Config::default()
    }
}

pub fn png_mask(b64: &str) -> BinaryMask {
    decode_mask_png(&B64.decode(b64).unwrap()).unwrap()
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().no_proxy().build().unwrap()
}

pub fn tmp() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let journals = dir.path().join("journals");
    (dir, data, journals)
}
