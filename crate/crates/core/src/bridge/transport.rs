//! Framing: newline-delimited JSON over any byte stream, or `u32`
//! little-endian length-prefixed frames over TCP.

use std::io::{self, BufRead, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use super::{BridgeError, Reply, Session};
use crate::simulator::EpisodeConfig;

/// Largest accepted frame body in bytes.
pub const MAX_FRAME_LEN: u32 = 1 << 24;

fn write_reply_line<W: Write>(w: &mut W, reply: &Reply) -> io::Result<()> {
    serde_json::to_writer(&mut *w, reply)?;
    w.write_all(b"\n")?;
    w.flush()
}

/// Serves one session over newline-delimited JSON until `close` or end of
/// input. Blank lines are ignored.
pub fn serve_lines<R: BufRead, W: Write>(session: &mut Session, mut reader: R, mut writer: W) -> io::Result<()> {
    let mut line = Vec::new();
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        let body = line.trim_ascii();
        if body.is_empty() {
            continue;
        }
        let reply = session.handle_bytes(body);
        write_reply_line(&mut writer, &reply)?;
        if session.is_closed() {
            return Ok(());
        }
    }
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(header);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds {MAX_FRAME_LEN}"),
        ));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&l| l <= MAX_FRAME_LEN)
        .ok_or_else(|| io::Error::new(ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Serves one session over length-prefixed frames. An oversized header gets
/// an error reply and ends the connection, since the stream cannot be
/// resynchronized.
pub fn serve_framed<S: Read + Write>(session: &mut Session, stream: &mut S) -> io::Result<()> {
    loop {
        let body = match read_frame(stream) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(e) if e.kind() == ErrorKind::InvalidData => {
                let reply = Reply::error(None, &BridgeError::Protocol(e.to_string()));
                write_frame(stream, &serde_json::to_vec(&reply)?)?;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let reply = session.handle_bytes(&body);
        write_frame(stream, &serde_json::to_vec(&reply)?)?;
        if session.is_closed() {
            return Ok(());
        }
    }
}

fn serve_connection(cfg: EpisodeConfig, mut stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut session = Session::new(cfg).map_err(|e| io::Error::new(ErrorKind::InvalidInput, e))?;
    serve_framed(&mut session, &mut stream)
}

/// Accepts connections on `addr`, one independent session and thread each.
/// `on_bound` receives the bound address before the first accept; with
/// `max_connections` the server returns after that many sessions end.
pub fn serve_tcp<A: ToSocketAddrs>(
    addr: A,
    cfg: &EpisodeConfig,
    max_connections: Option<usize>,
    on_bound: impl FnOnce(std::net::SocketAddr),
) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    on_bound(listener.local_addr()?);
    let mut handles = Vec::new();
    for (served, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let cfg = cfg.clone();
        handles.push(std::thread::spawn(move || serve_connection(cfg, stream)));
        if max_connections.is_some_and(|m| served + 1 >= m) {
            break;
        }
    }
    for h in handles {
        h.join().map_err(|_| io::Error::other("session thread panicked"))??;
    }
    Ok(())
}
