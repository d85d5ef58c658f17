//! Socket server exposing a `MazeEnv` per connection, and the matching client.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::env::{EnvConfig, MazeEnv};
use crate::error::EnvError;
use crate::physics::Action;
use crate::protocol::{
    read_frame, reward_to_millis, write_frame, ErrorCode, ProtocolError, Request, Response, StateMsg,
    WireObservation, PROTOCOL_VERSION,
};
use crate::render::ObsKind;

/// Running server; dropping the handle does not stop it, call `shutdown`.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

/// Binds `endpoint` and serves in a background thread.
pub fn spawn_server(endpoint: impl ToSocketAddrs, config: EnvConfig, seed: u64) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = thread::spawn(move || accept_loop(listener, config, seed, flag));
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Serves until the process is killed.
pub fn serve(endpoint: impl ToSocketAddrs, config: EnvConfig, seed: u64) -> io::Result<()> {
    let listener = TcpListener::bind(endpoint)?;
    log::info!("environment server listening on {}", listener.local_addr()?);
    accept_loop(listener, config, seed, Arc::new(AtomicBool::new(false)))
}

fn accept_loop(listener: TcpListener, config: EnvConfig, seed: u64, stop: Arc<AtomicBool>) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false)?;
                let cfg = config.clone();
                workers.push(thread::spawn(move || {
                    if let Err(e) = handle_connection(stream, cfg, seed) {
                        log::warn!("connection {peer}: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(e),
        }
        workers.retain(|w| !w.is_finished());
    }
    Ok(())
}

fn send<W: Write>(w: &mut W, resp: &Response) -> io::Result<()> {
    write_frame(w, &resp.encode())
}

fn error(code: ErrorCode, message: impl ToString) -> Response {
    Response::Error {
        code,
        message: message.to_string(),
    }
}

fn handle_connection(stream: TcpStream, config: EnvConfig, seed: u64) -> Result<(), ProtocolError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);

    let hello = match read_frame(&mut reader) {
        Ok(Some(body)) => Request::decode(&body),
        Ok(None) => return Ok(()),
        Err(e) => Err(e),
    };
    match hello {
        Ok(Request::Hello { version }) if version == PROTOCOL_VERSION => {}
        Ok(Request::Hello { version }) => {
            send(&mut writer, &error(ErrorCode::VersionMismatch, format!("version {version} unsupported")))?;
            return Err(ProtocolError::VersionMismatch(version));
        }
        Ok(_) => {
            send(&mut writer, &error(ErrorCode::Malformed, "expected HELLO"))?;
            return Err(ProtocolError::Malformed("expected HELLO".into()));
        }
        Err(e) => {
            send(&mut writer, &error(ErrorCode::Malformed, &e))?;
            return Err(e);
        }
    }

    let mut env = match MazeEnv::new(config, seed) {
        Ok(env) => env,
        Err(e) => {
            send(&mut writer, &error(ErrorCode::Environment, &e))?;
            return Ok(());
        }
    };
    let obs_kind = match env.config().observation {
        ObsKind::Image => 0,
        ObsKind::Lowdim => 1,
    };
    send(
        &mut writer,
        &Response::Welcome {
            version: PROTOCOL_VERSION,
            obs_kind,
            obs_len: env.observation_len() as u32,
        },
    )?;

    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(e) => {
                let _ = send(&mut writer, &error(ErrorCode::Malformed, &e));
                return Err(e);
            }
        };
        let req = match Request::decode(&body) {
            Ok(r) => r,
            Err(e) => {
                send(&mut writer, &error(ErrorCode::Malformed, &e))?;
                return Err(e);
            }
        };
        let resp = match req {
            Request::Reset { seed } => {
                if let Some(s) = seed {
                    env.reseed(s);
                }
                match env.reset() {
                    Ok(obs) => Response::State(StateMsg {
                        observation: WireObservation::from_observation(&obs),
                        reward_millis: 0,
                        terminal: false,
                        step: 0,
                    }),
                    Err(e) => error(ErrorCode::Environment, e),
                }
            }
            Request::Step { action } => match Action::from_id(action) {
                None => error(ErrorCode::Environment, EnvError::InvalidAction(action)),
                Some(a) => match env.step(a) {
                    Ok(out) => Response::State(StateMsg {
                        observation: WireObservation::from_observation(&out.observation),
                        reward_millis: reward_to_millis(out.reward),
                        terminal: out.terminal,
                        step: env.episode().map(|e| e.step as u32).unwrap_or(0),
                    }),
                    Err(EnvError::NotReset) => error(ErrorCode::NotReset, EnvError::NotReset),
                    Err(e) => error(ErrorCode::Environment, e),
                },
            },
            Request::Close => {
                send(&mut writer, &Response::Bye)?;
                return Ok(());
            }
            Request::Hello { .. } => {
                send(&mut writer, &error(ErrorCode::Malformed, "duplicate HELLO"))?;
                return Err(ProtocolError::Malformed("duplicate HELLO".into()));
            }
        };
        send(&mut writer, &resp)?;
    }
}

/// Client side of the protocol: one connection, one outstanding request.
pub struct RemoteEnv {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    pub obs_kind: u8,
    pub obs_len: u32,
}

impl RemoteEnv {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtocolError> {
        Self::connect_with_version(addr, PROTOCOL_VERSION)
    }

    pub fn connect_with_version(addr: impl ToSocketAddrs, version: u16) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut client = RemoteEnv {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            obs_kind: 0,
            obs_len: 0,
        };
        match client.call(&Request::Hello { version })? {
            Response::Welcome { obs_kind, obs_len, .. } => {
                client.obs_kind = obs_kind;
                client.obs_len = obs_len;
                Ok(client)
            }
            other => Err(ProtocolError::Malformed(format!("expected WELCOME, got {other:?}"))),
        }
    }

    fn call(&mut self, req: &Request) -> Result<Response, ProtocolError> {
        write_frame(&mut self.writer, &req.encode())?;
        let body = read_frame(&mut self.reader)?
            .ok_or_else(|| ProtocolError::Malformed("connection closed".into()))?;
        match Response::decode(&body)? {
            Response::Error { code, message } => Err(ProtocolError::Remote { code, message }),
            r => Ok(r),
        }
    }

    fn state(&mut self, req: &Request) -> Result<StateMsg, ProtocolError> {
        match self.call(req)? {
            Response::State(s) => Ok(s),
            other => Err(ProtocolError::Malformed(format!("expected STATE, got {other:?}"))),
        }
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<StateMsg, ProtocolError> {
        self.state(&Request::Reset { seed })
    }

    pub fn step(&mut self, action: Action) -> Result<StateMsg, ProtocolError> {
        self.state(&Request::Step { action: action.id() })
    }

    pub fn close(mut self) -> Result<(), ProtocolError> {
        match self.call(&Request::Close)? {
            Response::Bye => Ok(()),
            other => Err(ProtocolError::Malformed(format!("expected BYE, got {other:?}"))),
        }
    }

    /// Sends raw bytes; used to exercise the server's framing checks.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<Option<Response>, ProtocolError> {
        self.writer.write_all(bytes)?;
        self.writer.flush()?;
        match read_frame(&mut self.reader)? {
            Some(body) => Ok(Some(Response::decode(&body)?)),
            None => Ok(None),
        }
    }
}
