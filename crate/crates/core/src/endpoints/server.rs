use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::CloudService;
use crate::transport::http::{read_message, write_message};
use crate::transport::{frame_http_response, to_json, ErrorReply};
use crate::Result;

/// Thread-per-connection HTTP front end for a [`CloudService`].
pub struct CloudServer {
    listener: TcpListener,
    service: Arc<CloudService>,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

fn handle_connection(mut stream: TcpStream, service: &CloudService) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
    let response = match read_message(&mut stream) {
        Ok(req) => service.handle(&req),
        Err(e) => frame_http_response(400, &to_json(&ErrorReply { error: e.to_string() })),
    };
    if let Err(e) = write_message(&mut stream, &response) {
        log::warn!("failed to write response: {e}");
    }
}

impl CloudServer {
    pub fn bind(addr: &str, service: Arc<CloudService>) -> Result<Self> {
        Ok(CloudServer {
            listener: TcpListener::bind(addr)?,
            service,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    fn accept_loop(self, stop: &AtomicBool) {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let service = Arc::clone(&self.service);
                    thread::spawn(move || handle_connection(stream, &service));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    }

    /// Blocks serving requests.
    pub fn serve(self) {
        self.accept_loop(&AtomicBool::new(false));
    }

    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || self.accept_loop(&flag));
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_now();
        }
    }
}
