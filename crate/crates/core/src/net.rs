//! Loopback TCP transport for the networked run mode.
//!
//! The connector service runs behind a real socket; gateway and consumer
//! traffic crosses it as length-prefixed envelopes, one request/response
//! pair at a time per connection. Each accepted connection gets its own
//! thread, which exercises the service's concurrent-connection contract
//! (all state mutations serialize through the service mutex). The simulated
//! clock reaches the server through a shared atomic set by the harness
//! before each request.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::dataspace::service::ConnectorService;
use crate::wire::{read_envelope, write_envelope, Envelope, FramingError};

pub struct NetServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl NetServer {
    /// Binds an ephemeral loopback port and serves the connector until
    /// [`NetServer::shutdown`].
    pub fn spawn(
        service: Arc<Mutex<ConnectorService>>,
        clock: Arc<AtomicU64>,
    ) -> io::Result<NetServer> {
        let listener = TcpListener::bind(("127.0.0.1", 0))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));

        let stop_flag = stop.clone();
        let accept_thread = std::thread::spawn(move || {
            let mut connections: Vec<JoinHandle<()>> = Vec::new();
            while !stop_flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _peer)) => {
                        let service = service.clone();
                        let clock = clock.clone();
                        connections.push(std::thread::spawn(move || {
                            serve_connection(stream, service, clock);
                        }));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(1));
                    }
                    Err(_) => break,
                }
            }
            for conn in connections {
                let _ = conn.join();
            }
        });

        Ok(NetServer {
            addr,
            stop,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and joins all connection threads. Clients must be
    /// dropped first so their connections unblock.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for NetServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection(
    mut stream: TcpStream,
    service: Arc<Mutex<ConnectorService>>,
    clock: Arc<AtomicU64>,
) {
    let _ = stream.set_nodelay(true);
    // a read error means the peer closed or sent garbage; drop the connection
    while let Ok(request) = read_envelope(&mut stream) {
        let now = clock.load(Ordering::Relaxed);
        let response = {
            let mut guard = match service.lock() {
                Ok(g) => g,
                Err(poisoned) => poisoned.into_inner(),
            };
            guard.handle(&request, now)
        };
        if write_envelope(&mut stream, &response).is_err() {
            break;
        }
    }
}

/// Blocking request/response client over one connection.
pub struct EnvelopeClient {
    stream: TcpStream,
}

impl EnvelopeClient {
    pub fn connect(addr: SocketAddr) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn request(&mut self, envelope: &Envelope) -> Result<Envelope, FramingError> {
        write_envelope(&mut self.stream, envelope)?;
        read_envelope(&mut self.stream)
    }
}
