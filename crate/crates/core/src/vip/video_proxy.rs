use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::codec::{frame_from_words, frame_to_words, unpack_frame_header, FrameTxn, PackedBits};
use crate::uvm::{
    Activity, AnalysisPort, BuildCtx, Component, NextItem, RunCtx, Sequencer, UvmError,
};

use super::{BfmHandle, LinkHandle, DRIVER_BFM_KEY, MONITOR_BFM_KEY};

fn pair_of(ctx: &mut BuildCtx<'_>, key: &str) -> Result<(u16, u16), UvmError> {
    match ctx.registry.get::<BfmHandle>(ctx.path, key) {
        Ok(BfmHandle {
            port,
            data_port: Some(d),
        }) => Ok((port, d)),
        Ok(_) => Err(ctx.fatal(format!("{key} needs a header and a pixel port"))),
        Err(_) => Err(ctx.fatal(format!("{key} is not set"))),
    }
}

/// Streams each frame item as a header plus packed pixel words.
pub struct VideoInDriverProxy {
    link: LinkHandle,
    seq: Rc<RefCell<Sequencer<FrameTxn>>>,
    sent: Rc<RefCell<AnalysisPort<FrameTxn>>>,
    ports: Option<(u16, u16)>,
    depth: u32,
}

impl VideoInDriverProxy {
    /// `depth` is the link's per-port stream capacity.
    pub fn new(link: LinkHandle, depth: u32) -> Self {
        Self {
            link,
            seq: Rc::new(RefCell::new(Sequencer::new())),
            sent: Rc::new(RefCell::new(AnalysisPort::new())),
            ports: None,
            depth,
        }
    }

    pub fn sequencer(&self) -> Rc<RefCell<Sequencer<FrameTxn>>> {
        self.seq.clone()
    }

    /// Frames as they were handed to the BFM.
    pub fn sent_port(&self) -> Rc<RefCell<AnalysisPort<FrameTxn>>> {
        self.sent.clone()
    }
}

impl Component for VideoInDriverProxy {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        self.ports = Some(pair_of(ctx, DRIVER_BFM_KEY)?);
        Ok(())
    }

    fn run_step(&mut self, ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        let (hp, pp) = self
            .ports
            .ok_or_else(|| UvmError::Config("video driver ran without BUILD".into()))?;
        let mut seq = self.seq.borrow_mut();
        let NextItem::Item(frame) = seq.get_next_item(ctx.end_of_test())? else {
            return Ok(Activity::Idle);
        };
        let (hdr, words) = frame_to_words(&frame)?;
        let mut link = self.link.borrow_mut();
        let free_h = self.depth - link.stream_in_flight(hp);
        let free_p = self.depth - link.stream_in_flight(pp);
        if free_h < 1 || (free_p as usize) < words.len() {
            return Err(ctx.fatal(format!(
                "frame {} needs {} stream slots, {} free",
                frame.frame_id,
                words.len(),
                free_p
            )));
        }
        link.stream_send(hp, hdr)?;
        for w in words {
            link.stream_send(pp, w)?;
        }
        drop(link);
        seq.item_done(None)?;
        drop(seq);
        self.sent.borrow_mut().write(&frame);
        Ok(Activity::Busy)
    }
}

/// Collects reassembled output frames.
pub struct VideoOutMonitorProxy {
    link: LinkHandle,
    ap: Rc<RefCell<AnalysisPort<FrameTxn>>>,
    ports: Option<(u16, u16)>,
    header: Option<PackedBits>,
    words: Vec<PackedBits>,
    frames: u64,
}

impl VideoOutMonitorProxy {
    pub fn new(link: LinkHandle) -> Self {
        Self {
            link,
            ap: Rc::new(RefCell::new(AnalysisPort::new())),
            ports: None,
            header: None,
            words: Vec::new(),
            frames: 0,
        }
    }

    pub fn analysis_port(&self) -> Rc<RefCell<AnalysisPort<FrameTxn>>> {
        self.ap.clone()
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }
}

impl Component for VideoOutMonitorProxy {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        self.ports = Some(pair_of(ctx, MONITOR_BFM_KEY)?);
        Ok(())
    }

    fn run_step(&mut self, _ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        let Some((hp, pp)) = self.ports else {
            return Ok(Activity::Idle);
        };
        let mut any = false;
        let mut link = self.link.borrow_mut();
        loop {
            if self.header.is_none() {
                match link.stream_recv_ready(hp)? {
                    Some(h) => {
                        self.header = Some(h);
                        any = true;
                    }
                    None => break,
                }
            }
            let h = self.header.as_ref().expect("set above");
            let need = unpack_frame_header(h)?.word_count();
            while self.words.len() < need {
                match link.stream_recv_ready(pp)? {
                    Some(w) => {
                        self.words.push(w);
                        any = true;
                    }
                    None => break,
                }
            }
            if self.words.len() < need {
                break;
            }
            let h = self.header.take().expect("set above");
            let f = frame_from_words(&h, &std::mem::take(&mut self.words))?;
            self.frames += 1;
            self.ap.borrow_mut().write(&f);
        }
        Ok(Activity::busy_if(any))
    }
}

/// Counts interrupt pulses reported by an irq monitor BFM.
pub struct IrqMonitorProxy {
    link: LinkHandle,
    port: Option<u16>,
    count: Rc<Cell<u64>>,
}

impl IrqMonitorProxy {
    pub fn new(link: LinkHandle) -> Self {
        Self {
            link,
            port: None,
            count: Rc::new(Cell::new(0)),
        }
    }

    pub fn counter(&self) -> Rc<Cell<u64>> {
        self.count.clone()
    }
}

impl Component for IrqMonitorProxy {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        match ctx.registry.get::<BfmHandle>(ctx.path, MONITOR_BFM_KEY) {
            Ok(h) => {
                self.port = Some(h.port);
                Ok(())
            }
            Err(_) => Err(ctx.fatal(format!("{MONITOR_BFM_KEY} is not set"))),
        }
    }

    fn run_step(&mut self, _ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        let Some(port) = self.port else {
            return Ok(Activity::Idle);
        };
        let mut any = false;
        while self.link.borrow_mut().stream_recv_ready(port)?.is_some() {
            self.count.set(self.count.get() + 1);
            any = true;
        }
        Ok(Activity::busy_if(any))
    }
}
