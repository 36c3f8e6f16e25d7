use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::rc::Rc;

use crate::codec::{
    encode_header, pack_pixel_word, unpack_frame_header, unpack_pixel_word, FrameHeader, PackedBits,
};
use crate::dut::{VideoPins, VideoSample};
use crate::kernel::{ModelFault, Process, ProcessIo, ResetGen, SignalId};
use crate::link::hdl::{HdlErrorCounter, HdlServer, SharedInQueue, SharedOutbox, XtfTask};
use crate::link::LinkError;

/// Cycles from the input BFM accepting a frame to its first pixel being
/// visible on the pins.
pub const DRIVE_OFFSET: u64 = 1;

fn reg(server: &mut HdlServer, key: &str, p: Box<dyn Process>) -> Result<(), LinkError> {
    server
        .kernel_mut()
        .register_process(key, p)
        .map_err(|e| LinkError::Usage(e.to_string()))
        .map(|_| ())
}

/// Drives frames from two stream-in queues (headers, pixel words) onto a
/// pixel bus at one pixel per cycle. A frame starts only once all of its
/// words are queued, so a frame never underruns mid-line.
pub struct VideoInBfm {
    pins: VideoPins,
    headers: SharedInQueue,
    words: SharedInQueue,
    reset: SignalId,
    reset_gen: ResetGen,
    active: Option<ActiveFrame>,
    accepted: Rc<RefCell<Vec<u64>>>,
}

struct ActiveFrame {
    header: FrameHeader,
    pixels: VecDeque<u16>,
    index: usize,
}

impl VideoInBfm {
    /// Returns the list of cycles at which frames were accepted.
    pub fn install(
        server: &mut HdlServer,
        key: &str,
        pins: VideoPins,
        hdr_port: u16,
        pix_port: u16,
        depth: u32,
    ) -> Result<Rc<RefCell<Vec<u64>>>, LinkError> {
        let headers = server.bind_stream_in(hdr_port, depth)?;
        let words = server.bind_stream_in(pix_port, depth)?;
        let accepted = Rc::new(RefCell::new(Vec::new()));
        let bfm = Self {
            pins,
            headers,
            words,
            reset: server.kernel().reset_signal(),
            reset_gen: server.kernel().config().reset,
            active: None,
            accepted: accepted.clone(),
        };
        reg(server, key, Box::new(bfm))?;
        Ok(accepted)
    }

    fn try_accept(&mut self, cycle: u64) -> Result<(), ModelFault> {
        let Some(h) = self.headers.borrow().front().cloned() else {
            return Ok(());
        };
        let header = unpack_frame_header(&h).map_err(|e| ModelFault(e.to_string()))?;
        if self.words.borrow().len() < header.word_count() {
            return Ok(());
        }
        self.headers.borrow_mut().pop();
        let mut pixels = VecDeque::with_capacity(header.pixel_count());
        let mut q = self.words.borrow_mut();
        for _ in 0..header.word_count() {
            let w = q.pop().expect("length checked");
            let (a, b) = unpack_pixel_word(&w).map_err(|e| ModelFault(e.to_string()))?;
            pixels.push_back(a);
            pixels.push_back(b);
        }
        pixels.truncate(header.pixel_count());
        self.accepted.borrow_mut().push(cycle);
        self.active = Some(ActiveFrame {
            header,
            pixels,
            index: 0,
        });
        Ok(())
    }
}

impl Process for VideoInBfm {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        if self.active.is_none() && !self.reset_gen.is_asserted(io.read(self.reset)) {
            self.try_accept(io.cycle().0)?;
        }
        let sample = match self.active.as_mut() {
            Some(f) => {
                let n = f.header.pixel_count();
                let w = f.header.width as usize;
                let data = f.pixels.pop_front().expect("pixel count");
                let s = VideoSample {
                    frame_start: f.index == 0,
                    line_start: f.index % w == 0,
                    valid: true,
                    data,
                    frame_end: f.index + 1 == n,
                };
                f.index += 1;
                if f.index == n {
                    self.active = None;
                }
                s
            }
            None => VideoSample::default(),
        };
        self.pins.drive(io, &sample)
    }
}

/// Shared count of frames the output BFM has completed.
pub type FrameCounter = Rc<Cell<u32>>;

/// Reassembles frames from a pixel bus. Width is the length of the first
/// line and height the number of line starts; frames are numbered in
/// arrival order.
pub struct VideoOutBfm {
    pins: VideoPins,
    hdr_port: u16,
    pix_port: u16,
    outbox: SharedOutbox,
    errors: HdlErrorCounter,
    completed: FrameCounter,
    cur: Option<Collecting>,
}

#[derive(Default)]
struct Collecting {
    pixels: Vec<u16>,
    first_line: Option<usize>,
    lines: usize,
}

impl VideoOutBfm {
    pub fn install(
        server: &mut HdlServer,
        key: &str,
        pins: VideoPins,
        hdr_port: u16,
        pix_port: u16,
    ) -> Result<FrameCounter, LinkError> {
        let completed = Rc::new(Cell::new(0));
        let bfm = Self {
            pins,
            hdr_port,
            pix_port,
            outbox: server.outbox(),
            errors: server.error_counter(),
            completed: completed.clone(),
            cur: None,
        };
        reg(server, key, Box::new(bfm))?;
        Ok(completed)
    }

    fn emit(&mut self, c: Collecting) -> Result<(), ModelFault> {
        let width = c.first_line.unwrap_or(c.pixels.len());
        let header = FrameHeader {
            frame_id: self.completed.get() as u16,
            width: width as u16,
            height: c.lines as u16,
        };
        if width * c.lines != c.pixels.len()
            || width > u16::MAX as usize
            || c.lines > u16::MAX as usize
        {
            self.errors.bump();
            return Ok(());
        }
        let mut out = self.outbox.borrow_mut();
        out.push(self.hdr_port, encode_header(&header));
        for pair in c.pixels.chunks(2) {
            out.push(
                self.pix_port,
                pack_pixel_word(pair[0], pair.get(1).copied()),
            );
        }
        self.completed.set(self.completed.get() + 1);
        Ok(())
    }
}

impl Process for VideoOutBfm {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        let s = self.pins.sample(io);
        if !s.valid {
            return Ok(());
        }
        if s.frame_start {
            if self.cur.is_some() {
                // previous frame never saw frame_end
                self.errors.bump();
            }
            self.cur = Some(Collecting::default());
        }
        let Some(c) = self.cur.as_mut() else {
            // pixel outside any frame
            self.errors.bump();
            return Ok(());
        };
        if s.line_start {
            if c.lines == 1 && c.first_line.is_none() {
                c.first_line = Some(c.pixels.len());
            }
            c.lines += 1;
        }
        c.pixels.push(s.data);
        if s.frame_end {
            let c = self.cur.take().expect("present");
            self.emit(c)?;
        }
        Ok(())
    }
}

/// Counts interrupt pulses (cycles with the line high) and streams the
/// running count on every pulse.
pub struct IrqMonitorBfm {
    line: SignalId,
    port: u16,
    outbox: SharedOutbox,
    count: u32,
}

impl IrqMonitorBfm {
    pub fn install(
        server: &mut HdlServer,
        key: &str,
        line: SignalId,
        port: u16,
    ) -> Result<(), LinkError> {
        let bfm = Self {
            line,
            port,
            outbox: server.outbox(),
            count: 0,
        };
        reg(server, key, Box::new(bfm))
    }
}

impl Process for IrqMonitorBfm {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        if io.read_bool(self.line) {
            self.count += 1;
            let p = PackedBits::from_u128(32, self.count as u128).expect("fits");
            self.outbox.borrow_mut().push(self.port, p);
        }
        Ok(())
    }
}

/// Reactive task: runs until the output BFM has completed the requested
/// number of frames, or until `limit` cycles pass. Returns the count.
pub struct VideoSyncTask {
    completed: FrameCounter,
    target: Option<u32>,
    waited: u64,
    limit: u64,
}

impl VideoSyncTask {
    pub fn new(completed: FrameCounter, limit: u64) -> Self {
        Self {
            completed,
            target: None,
            waited: 0,
            limit,
        }
    }
}

impl XtfTask for VideoSyncTask {
    fn start(&mut self, payload: PackedBits) -> Result<(), ModelFault> {
        self.target = Some(payload.field(0, 32) as u32);
        self.waited = 0;
        Ok(())
    }

    fn poll(&mut self) -> Option<PackedBits> {
        let t = self.target?;
        self.waited += 1;
        let n = self.completed.get();
        if n >= t || self.waited >= self.limit {
            self.target = None;
            return Some(PackedBits::from_u128(32, n as u128).expect("fits"));
        }
        None
    }
}
