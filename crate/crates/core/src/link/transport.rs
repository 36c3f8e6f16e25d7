//! Reliable, ordered frame transports: an in-process channel pair and a
//! localhost TCP stream. Both move encoded frames, so the bytes are the same
//! whichever one carries them.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::mpsc::{channel, Receiver, Sender};

use super::wire::{decode_frame, encode_frame, read_frame};
use super::{LinkError, Message};

pub trait FrameTransport: Send {
    fn send(&mut self, m: &Message) -> Result<(), LinkError>;

    /// Sends frames in order as one unit, so the peer wakes once per burst
    /// rather than once per frame.
    fn send_batch(&mut self, ms: &[Message]) -> Result<(), LinkError> {
        for m in ms {
            self.send(m)?;
        }
        Ok(())
    }

    /// Blocks for the next frame. A peer that has gone away yields
    /// [`LinkError::Closed`].
    fn recv(&mut self) -> Result<Message, LinkError>;
}

impl<T: FrameTransport + ?Sized> FrameTransport for Box<T> {
    fn send(&mut self, m: &Message) -> Result<(), LinkError> {
        (**self).send(m)
    }

    fn send_batch(&mut self, ms: &[Message]) -> Result<(), LinkError> {
        (**self).send_batch(ms)
    }

    fn recv(&mut self) -> Result<Message, LinkError> {
        (**self).recv()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportKind {
    InProc,
    Socket,
}

impl TransportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransportKind::InProc => "inproc",
            TransportKind::Socket => "socket",
        }
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "inproc" => Ok(TransportKind::InProc),
            "socket" => Ok(TransportKind::Socket),
            other => Err(format!("unknown transport `{other}`")),
        }
    }
}

/// One end of an in-process channel pair.
pub struct InProcTransport {
    tx: Sender<Vec<Vec<u8>>>,
    rx: Receiver<Vec<Vec<u8>>>,
    /// Frames of a received burst not yet handed out.
    pending: VecDeque<Vec<u8>>,
}

pub fn inproc_pair() -> (InProcTransport, InProcTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        InProcTransport {
            tx: a_tx,
            rx: a_rx,
            pending: VecDeque::new(),
        },
        InProcTransport {
            tx: b_tx,
            rx: b_rx,
            pending: VecDeque::new(),
        },
    )
}

impl FrameTransport for InProcTransport {
    fn send(&mut self, m: &Message) -> Result<(), LinkError> {
        self.tx
            .send(vec![encode_frame(m)])
            .map_err(|_| LinkError::Closed)
    }

    fn send_batch(&mut self, ms: &[Message]) -> Result<(), LinkError> {
        if ms.is_empty() {
            return Ok(());
        }
        self.tx
            .send(ms.iter().map(encode_frame).collect())
            .map_err(|_| LinkError::Closed)
    }

    fn recv(&mut self) -> Result<Message, LinkError> {
        while self.pending.is_empty() {
            self.pending = self.rx.recv().map_err(|_| LinkError::Closed)?.into();
        }
        decode_frame(&self.pending.pop_front().expect("nonempty"))
    }
}

/// Plain TCP byte stream with Nagle disabled; no reconnection.
pub struct SocketTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl SocketTransport {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, LinkError> {
        Self::from_stream(TcpStream::connect(addr)?)
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self, LinkError> {
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }
}

fn write_err(e: std::io::Error) -> LinkError {
    match e.kind() {
        std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => LinkError::Closed,
        _ => LinkError::Transport(e),
    }
}

impl FrameTransport for SocketTransport {
    fn send(&mut self, m: &Message) -> Result<(), LinkError> {
        self.writer.write_all(&encode_frame(m)).map_err(write_err)
    }

    fn send_batch(&mut self, ms: &[Message]) -> Result<(), LinkError> {
        let mut buf = Vec::new();
        for m in ms {
            buf.extend_from_slice(&encode_frame(m));
        }
        self.writer.write_all(&buf).map_err(write_err)
    }

    fn recv(&mut self) -> Result<Message, LinkError> {
        match read_frame(&mut self.reader) {
            Ok(Some(m)) => Ok(m),
            Ok(None) => Err(LinkError::Closed),
            Err(LinkError::Transport(e)) if e.kind() == std::io::ErrorKind::ConnectionReset => {
                Err(LinkError::Closed)
            }
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::MsgType;
    use std::net::TcpListener;

    #[test]
    fn inproc_ordered_delivery() {
        let (mut a, mut b) = inproc_pair();
        for n in 0..5 {
            a.send(&Message::run_cycles(n)).unwrap();
        }
        for n in 0..5 {
            assert_eq!(b.recv().unwrap(), Message::run_cycles(n));
        }
        drop(a);
        assert!(matches!(b.recv(), Err(LinkError::Closed)));
    }

    #[test]
    fn socket_ordered_delivery() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut t = SocketTransport::from_stream(s).unwrap();
            loop {
                let m = t.recv().unwrap();
                let stop = m.msg_type == MsgType::Shutdown;
                t.send(&m).unwrap();
                if stop {
                    break;
                }
            }
        });
        let mut c = SocketTransport::connect(addr).unwrap();
        for n in 0..10 {
            c.send(&Message::run_cycles(n)).unwrap();
        }
        c.send(&Message::control(MsgType::Shutdown)).unwrap();
        for n in 0..10 {
            assert_eq!(c.recv().unwrap(), Message::run_cycles(n));
        }
        assert_eq!(c.recv().unwrap().msg_type, MsgType::Shutdown);
        h.join().unwrap();
        assert!(matches!(c.recv(), Err(LinkError::Closed)));
    }
}
