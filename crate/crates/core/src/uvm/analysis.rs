type Sink<T> = Box<dyn FnMut(&T)>;

/// One-to-many broadcast of observed transactions.
pub struct AnalysisPort<T> {
    subscribers: Vec<Sink<T>>,
    writes: u64,
}

impl<T> Default for AnalysisPort<T> {
    fn default() -> Self {
        Self {
            subscribers: Vec::new(),
            writes: 0,
        }
    }
}

impl<T> AnalysisPort<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, sink: impl FnMut(&T) + 'static) {
        self.subscribers.push(Box::new(sink));
    }

    /// Delivers `t` to every subscriber exactly once, in subscription order.
    pub fn write(&mut self, t: &T) {
        self.writes += 1;
        for s in &mut self.subscribers {
            s(t);
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.len()
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    #[test]
    fn every_subscriber_in_order() {
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut p = AnalysisPort::new();
        for id in 0..3 {
            let log = log.clone();
            p.subscribe(move |v: &u32| log.borrow_mut().push((id, *v)));
        }
        p.write(&7);
        p.write(&8);
        assert_eq!(
            *log.borrow(),
            vec![(0, 7), (1, 7), (2, 7), (0, 8), (1, 8), (2, 8)]
        );
        assert_eq!(p.writes(), 2);
    }
}
