use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use tabmia::dataset::Role;
use tabmia::ingest::{fetch, Format, Location, SourceSpec};
use tabmia::Error;

const BODY: &str = "@relation toy\n@attribute x numeric\n@attribute c {a,b}\n@data\n1,a\n2,b\n3,a\n";

/// Minimal HTTP server: `/data.arff` serves BODY, anything else is a 404.
fn serve() -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut buf = [0u8; 4096];
            let n = stream.read(&mut buf).unwrap_or(0);
            let request = String::from_utf8_lossy(&buf[..n]);
            let path = request.split_whitespace().nth(1).unwrap_or("/").to_string();
            counter.fetch_add(1, Ordering::SeqCst);
            let response = if path == "/data.arff" {
                format!("HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{BODY}", BODY.len())
            } else {
                "HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string()
            };
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}"), hits)
}

#[test]
fn second_fetch_is_served_from_cache() {
    let (base, hits) = serve();
    let cache = tempfile::tempdir().unwrap();
    let url = format!("{base}/data.arff");
    let first = fetch(&url, cache.path()).unwrap();
    assert_eq!(std::fs::read_to_string(&first).unwrap(), BODY);
    let second = fetch(&url, cache.path()).unwrap();
    assert_eq!(first, second);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn corrupted_cache_entry_is_refetched() {
    let (base, hits) = serve();
    let cache = tempfile::tempdir().unwrap();
    let url = format!("{base}/data.arff");
    let blob = fetch(&url, cache.path()).unwrap();
    std::fs::write(&blob, "tampered").unwrap();
    let again = fetch(&url, cache.path()).unwrap();
    assert_eq!(std::fs::read_to_string(again).unwrap(), BODY);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn http_error_status_is_reported() {
    let (base, _) = serve();
    let cache = tempfile::tempdir().unwrap();
    let err = fetch(&format!("{base}/missing.csv"), cache.path()).unwrap_err();
    assert!(matches!(err, Error::Fetch { status: Some(404), .. }), "{err}");
    assert!(err.is_data_error());
}

#[test]
fn non_http_url_is_rejected() {
    let cache = tempfile::tempdir().unwrap();
    assert!(matches!(fetch("ftp://example.org/x.csv", cache.path()), Err(Error::Fetch { status: None, .. })));
}

#[test]
fn url_source_loads_arff() {
    let (base, _) = serve();
    let cache = tempfile::tempdir().unwrap();
    let spec = SourceSpec {
        location: Location::Url(format!("{base}/data.arff")),
        format: Format::Arff,
        cache_dir: cache.path().to_path_buf(),
    };
    let ds = spec.load(Role::Population).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.schema.len(), 2);
}
