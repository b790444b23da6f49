//! REST vitals endpoint and MJPEG streaming over plain HTTP/1.1.
//!
//! Two listeners run concurrently: the REST server answers
//! `GET /vhealth` with the seven-value vitals line (a small worker pool,
//! one request per connection), and the stream server pushes
//! `multipart/x-mixed-replace` MJPEG on `/mainstream` (cropped camera feed)
//! and `/pulsestream` (pulse visualization), one thread per stream
//! connection. Handlers read only container snapshots, so the processing
//! tick never waits on the network.
//!
//! Each MJPEG part is an independently decodable baseline JPEG. Per
//! connection only the latest frame is encoded and written; a consumer that
//! stalls simply misses frames (the send buffer is capped so back-pressure
//! kicks in after a handful of parts).

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::os::fd::AsRawFd;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;

use crate::error::{Error, Result};
use crate::ingest::RgbFrame;
use crate::pipeline::{DataContainer, VitalsRecord};

/// Network endpoints and encoding parameters.
#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub bind_addr: String,
    pub rest_port: u16,
    pub stream_port: u16,
    pub boundary: String,
    pub jpeg_quality: u8,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            bind_addr: "127.0.0.1".into(),
            rest_port: 8080,
            stream_port: 8081,
            boundary: "pulsegridframe".into(),
            jpeg_quality: 80,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rest_port == self.stream_port && self.rest_port != 0 {
            return Err(Error::Config("rest and stream ports must differ".into()));
        }
        if self.boundary.is_empty() || !self.boundary.is_ascii() {
            return Err(Error::Config("boundary must be non-empty ASCII".into()));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(Error::Config("jpeg quality must be in 1..=100".into()));
        }
        Ok(())
    }
}

/// REST worker pool size.
const REST_WORKERS: usize = 8;

/// Serializes the seven-value record: reals with two decimals, flags bare.
pub fn format_vitals(v: &VitalsRecord) -> String {
    format!(
        "{:.2},{:.2},{:.2},{},{},{:.2},{:.2}",
        v.g_hr, v.g_br, v.g_o2, v.g_seeuser, v.g_stable, v.g_hr_graph, v.g_br_graph
    )
}

/// Encodes one frame as a standalone baseline JPEG.
pub fn encode_jpeg(frame: &RgbFrame, quality: u8) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut encoder = JpegEncoder::new_with_quality(&mut buf, quality);
    encoder
        .encode(
            &frame.data,
            frame.width as u32,
            frame.height as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Runtime(format!("jpeg encode failed: {e}")))?;
    Ok(buf)
}

/// Running servers; dropping without `shutdown` leaves detached threads, so
/// call `shutdown` for an orderly stop.
pub struct ServerHandle {
    stop: Arc<AtomicBool>,
    rest_addr: SocketAddr,
    stream_addr: SocketAddr,
    accept_threads: Vec<JoinHandle<()>>,
    active_connections: Arc<AtomicUsize>,
}

impl ServerHandle {
    pub fn rest_addr(&self) -> SocketAddr {
        self.rest_addr
    }

    pub fn stream_addr(&self) -> SocketAddr {
        self.stream_addr
    }

    /// Stops accepting, signals every connection handler, and waits up to
    /// the grace period for them to drain.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.accept_threads {
            let _ = t.join();
        }
        let deadline = Instant::now() + Duration::from_secs(6);
        while self.active_connections.load(Ordering::SeqCst) > 0 && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(10));
        }
    }
}

struct ConnectionGuard(Arc<AtomicUsize>);

impl ConnectionGuard {
    fn new(counter: &Arc<AtomicUsize>) -> Self {
        counter.fetch_add(1, Ordering::SeqCst);
        Self(Arc::clone(counter))
    }
}

impl Drop for ConnectionGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

fn bind(addr: &str, port: u16) -> Result<TcpListener> {
    let listener = TcpListener::bind((addr, port)).map_err(|source| Error::Bind {
        addr: addr.to_string(),
        port,
        source,
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Starts the REST and stream servers. Returns once both listeners are
/// bound; `container` provides every response.
pub fn start_servers(cfg: &StreamConfig, container: DataContainer) -> Result<ServerHandle> {
    cfg.validate()?;
    let rest_listener = bind(&cfg.bind_addr, cfg.rest_port)?;
    let stream_listener = bind(&cfg.bind_addr, cfg.stream_port)?;
    let rest_addr = rest_listener.local_addr()?;
    let stream_addr = stream_listener.local_addr()?;

    let stop = Arc::new(AtomicBool::new(false));
    let active = Arc::new(AtomicUsize::new(0));
    let mut accept_threads = Vec::new();

    // REST requests are tiny; a fixed worker pool avoids per-request thread
    // churn under concurrent load.
    let (rest_tx, rest_rx) = mpsc::channel::<TcpStream>();
    let rest_rx = Arc::new(Mutex::new(rest_rx));
    for i in 0..REST_WORKERS {
        let stop = Arc::clone(&stop);
        let active = Arc::clone(&active);
        let container = container.clone();
        let rx = Arc::clone(&rest_rx);
        accept_threads.push(
            std::thread::Builder::new()
                .name(format!("pg-rest-{i}"))
                .spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        let received = rx
                            .lock()
                            .expect("rest queue poisoned")
                            .recv_timeout(Duration::from_millis(50));
                        if let Ok(stream) = received {
                            let _guard = ConnectionGuard::new(&active);
                            let _ = handle_rest(stream, &container, &stop);
                        }
                    }
                })
                .expect("spawn rest worker"),
        );
    }
    {
        let stop = Arc::clone(&stop);
        accept_threads.push(
            std::thread::Builder::new()
                .name("pg-rest-accept".into())
                .spawn(move || {
                    accept_loop(rest_listener, stop, move |stream, _| {
                        let _ = rest_tx.send(stream);
                    })
                })
                .expect("spawn rest accept thread"),
        );
    }
    {
        let stop = Arc::clone(&stop);
        let active = Arc::clone(&active);
        let cfg = cfg.clone();
        accept_threads.push(
            std::thread::Builder::new()
                .name("pg-stream-accept".into())
                .spawn(move || {
                    accept_loop(stream_listener, stop, move |stream, stop| {
                        let container = container.clone();
                        let cfg = cfg.clone();
                        let guard = ConnectionGuard::new(&active);
                        std::thread::spawn(move || {
                            let _guard = guard;
                            let _ = handle_stream(stream, &container, &cfg, &stop);
                        });
                    })
                })
                .expect("spawn stream accept thread"),
        );
    }

    Ok(ServerHandle {
        stop,
        rest_addr,
        stream_addr,
        accept_threads,
        active_connections: active,
    })
}

fn accept_loop(
    listener: TcpListener,
    stop: Arc<AtomicBool>,
    mut handle: impl FnMut(TcpStream, Arc<AtomicBool>),
) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false).ok();
                handle(stream, Arc::clone(&stop));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => std::thread::sleep(Duration::from_millis(5)),
        }
    }
}

/// Reads the request head (start line + headers) and returns method & path.
fn read_request(stream: &mut TcpStream) -> Result<(String, String)> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 512];
    loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
        if buf.windows(4).any(|w| w == b"\r\n\r\n") || buf.len() > 8192 {
            break;
        }
    }
    let head = String::from_utf8_lossy(&buf);
    let start_line = head
        .lines()
        .next()
        .ok_or_else(|| Error::Runtime("empty request".into()))?;
    let mut parts = start_line.split_whitespace();
    let method = parts
        .next()
        .ok_or_else(|| Error::Runtime("missing method".into()))?
        .to_string();
    let path = parts
        .next()
        .ok_or_else(|| Error::Runtime("missing path".into()))?
        .to_string();
    Ok((method, path))
}

fn write_simple(stream: &mut TcpStream, status: &str, extra: &str, body: &str) -> Result<()> {
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n{extra}\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    Ok(())
}

fn handle_rest(mut stream: TcpStream, container: &DataContainer, _stop: &AtomicBool) -> Result<()> {
    stream.set_write_timeout(Some(Duration::from_secs(5)))?;
    let (method, path) = read_request(&mut stream)?;
    if path != "/vhealth" {
        return write_simple(&mut stream, "404 Not Found", "", "not found\n");
    }
    if method != "GET" {
        return write_simple(&mut stream, "405 Method Not Allowed", "Allow: GET\r\n", "");
    }
    let body = format_vitals(&container.snapshot().vitals);
    write_simple(&mut stream, "200 OK", "", &body)
}

/// Caps the kernel send buffer so a stalled reader back-pressures after a
/// few frames instead of absorbing the whole stream.
fn cap_send_buffer(stream: &TcpStream, bytes: i32) {
    unsafe {
        libc::setsockopt(
            stream.as_raw_fd(),
            libc::SOL_SOCKET,
            libc::SO_SNDBUF,
            &bytes as *const i32 as *const libc::c_void,
            std::mem::size_of::<i32>() as libc::socklen_t,
        );
    }
}

fn handle_stream(
    mut stream: TcpStream,
    container: &DataContainer,
    cfg: &StreamConfig,
    stop: &AtomicBool,
) -> Result<()> {
    stream.set_write_timeout(Some(Duration::from_secs(5)))?;
    let (method, path) = read_request(&mut stream)?;
    let want_pulse = match path.as_str() {
        "/pulsestream" => true,
        "/mainstream" => false,
        _ => return write_simple(&mut stream, "404 Not Found", "", "not found\n"),
    };
    if method != "GET" {
        return write_simple(&mut stream, "405 Method Not Allowed", "Allow: GET\r\n", "");
    }
    cap_send_buffer(&stream, 32 * 1024);

    let header = format!(
        "HTTP/1.1 200 OK\r\nConnection: close\r\nCache-Control: no-cache\r\nContent-Type: multipart/x-mixed-replace; boundary={}\r\n\r\n",
        cfg.boundary
    );
    stream.write_all(header.as_bytes())?;

    let mut last_seq = 0u64;
    while !stop.load(Ordering::SeqCst) {
        let Some(snapshot) = container.wait_newer(last_seq, Duration::from_millis(100)) else {
            continue;
        };
        last_seq = snapshot.seq;
        let frame = if want_pulse {
            snapshot.pulse_frame
        } else {
            snapshot.main_frame
        };
        let Some(frame) = frame else { continue };
        let jpeg = encode_jpeg(&frame, cfg.jpeg_quality)?;
        let part_head = format!(
            "--{}\r\nContent-Type: image/jpeg\r\nContent-Length: {}\r\n\r\n",
            cfg.boundary,
            jpeg.len()
        );
        stream.write_all(part_head.as_bytes())?;
        stream.write_all(&jpeg)?;
        stream.write_all(b"\r\n")?;
    }
    Ok(())
}
