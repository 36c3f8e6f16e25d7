use std::collections::VecDeque;

use super::UvmError;

/// What a driver gets back from [`Sequencer::get_next_item`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextItem<T> {
    Item(T),
    /// Nothing queued yet; the driver yields and retries.
    Pending,
    /// Nothing queued and the test has ended.
    EndOfTest,
}

/// Sequence-to-driver handshake with strict get/done alternation.
#[derive(Debug)]
pub struct Sequencer<T> {
    pending: VecDeque<T>,
    in_flight: Option<T>,
    done_count: u64,
    get_count: u64,
    responses: VecDeque<T>,
}

impl<T> Default for Sequencer<T> {
    fn default() -> Self {
        Self {
            pending: VecDeque::new(),
            in_flight: None,
            done_count: 0,
            get_count: 0,
            responses: VecDeque::new(),
        }
    }
}

impl<T: Clone> Sequencer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sequence side: queue an item for the driver.
    pub fn send(&mut self, item: T) {
        self.pending.push_back(item);
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.in_flight.is_none()
    }

    pub fn get_next_item(&mut self, end_of_test: bool) -> Result<NextItem<T>, UvmError> {
        if self.in_flight.is_some() {
            return Err(UvmError::Protocol(
                "get_next_item called before item_done".into(),
            ));
        }
        match self.pending.pop_front() {
            Some(item) => {
                self.in_flight = Some(item.clone());
                self.get_count += 1;
                Ok(NextItem::Item(item))
            }
            None if end_of_test => Ok(NextItem::EndOfTest),
            None => Ok(NextItem::Pending),
        }
    }

    /// Completes the in-flight item, optionally with a response for the
    /// sequence.
    pub fn item_done(&mut self, response: Option<T>) -> Result<(), UvmError> {
        if self.in_flight.take().is_none() {
            return Err(UvmError::Protocol(
                "item_done without an item in flight".into(),
            ));
        }
        self.done_count += 1;
        if let Some(r) = response {
            self.responses.push_back(r);
        }
        Ok(())
    }

    pub fn take_response(&mut self) -> Option<T> {
        self.responses.pop_front()
    }

    pub fn done_count(&self) -> u64 {
        self.done_count
    }

    pub fn get_count(&self) -> u64 {
        self.get_count
    }

    pub fn in_flight(&self) -> Option<&T> {
        self.in_flight.as_ref()
    }
}
