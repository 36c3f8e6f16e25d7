use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use super::registry::BindingRegistry;
use super::report::{ReportSummary, Reporter, Severity};
use super::UvmError;

/// Phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Build,
    Connect,
    Run,
    Report,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Build => "BUILD",
            Phase::Connect => "CONNECT",
            Phase::Run => "RUN",
            Phase::Report => "REPORT",
        })
    }
}

/// Whether a RUN step made progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Busy,
    Idle,
}

impl Activity {
    pub fn busy_if(b: bool) -> Self {
        if b {
            Activity::Busy
        } else {
            Activity::Idle
        }
    }
}

pub struct BuildCtx<'a> {
    pub path: &'a str,
    pub registry: &'a mut BindingRegistry,
    reporter: &'a mut Reporter,
}

pub struct ConnectCtx<'a> {
    pub path: &'a str,
    pub registry: &'a BindingRegistry,
    reporter: &'a mut Reporter,
}

pub struct RunCtx<'a> {
    pub path: &'a str,
    objections: &'a mut u64,
    reporter: &'a mut Reporter,
}

pub struct ReportCtx<'a> {
    pub path: &'a str,
    summary: &'a mut ReportSummary,
    reporter: &'a mut Reporter,
}

macro_rules! reporting {
    ($t:ident) => {
        impl $t<'_> {
            pub fn info(&mut self, msg: impl Into<String>) {
                self.reporter.log(Severity::Info, self.path, msg);
            }

            pub fn error(&mut self, msg: impl Into<String>) {
                self.reporter.log(Severity::Error, self.path, msg);
            }

            /// Builds the error that aborts the phase engine; return it.
            pub fn fatal(&mut self, msg: impl Into<String>) -> UvmError {
                let msg = msg.into();
                self.reporter.log(Severity::Fatal, self.path, msg.clone());
                UvmError::Fatal {
                    path: self.path.to_string(),
                    message: msg,
                }
            }
        }
    };
}

reporting!(BuildCtx);
reporting!(ConnectCtx);
reporting!(RunCtx);
reporting!(ReportCtx);

impl RunCtx<'_> {
    pub fn raise_objection(&mut self) {
        *self.objections += 1;
    }

    pub fn drop_objection(&mut self) -> Result<(), UvmError> {
        if *self.objections == 0 {
            return Err(UvmError::Protocol(format!(
                "{}: objection dropped below zero",
                self.path
            )));
        }
        *self.objections -= 1;
        Ok(())
    }

    pub fn objections(&self) -> u64 {
        *self.objections
    }

    /// True once every objection has been dropped.
    pub fn end_of_test(&self) -> bool {
        *self.objections == 0
    }
}

impl ReportCtx<'_> {
    pub fn add_transactions(&mut self, n: u64) {
        self.summary.transactions += n;
    }

    /// Records the final simulated time; the largest value reported wins.
    pub fn observe_cycles(&mut self, cycles: u64) {
        self.summary.cycles = self.summary.cycles.max(cycles);
    }
}

/// A testbench component. Every hook has a no-op default.
pub trait Component {
    fn build(&mut self, _ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        Ok(())
    }

    fn connect(&mut self, _ctx: &mut ConnectCtx<'_>) -> Result<(), UvmError> {
        Ok(())
    }

    /// One cooperative step of RUN. Must not block on anything but link
    /// replies.
    fn run_step(&mut self, _ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        Ok(Activity::Idle)
    }

    fn report(&mut self, _ctx: &mut ReportCtx<'_>) {}
}

impl<C: Component + ?Sized> Component for Rc<RefCell<C>> {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        self.borrow_mut().build(ctx)
    }

    fn connect(&mut self, ctx: &mut ConnectCtx<'_>) -> Result<(), UvmError> {
        self.borrow_mut().connect(ctx)
    }

    fn run_step(&mut self, ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        self.borrow_mut().run_step(ctx)
    }

    fn report(&mut self, ctx: &mut ReportCtx<'_>) {
        self.borrow_mut().report(ctx)
    }
}

/// A container with no behavior of its own (env, agent).
pub struct Container;

impl Component for Container {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

struct Node {
    name: String,
    full_path: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    comp: Box<dyn Component>,
}

/// Component hierarchy. Nodes are only ever added under an existing
/// parent, so the tree is acyclic by construction.
pub struct ComponentTree {
    nodes: Vec<Node>,
    paths: HashSet<String>,
    history: Vec<(Phase, String)>,
    max_run_rounds: Option<u64>,
}

impl ComponentTree {
    pub fn new(root_name: &str, root: Box<dyn Component>) -> Result<Self, UvmError> {
        check_name(root_name)?;
        let mut paths = HashSet::new();
        paths.insert(root_name.to_string());
        Ok(Self {
            nodes: vec![Node {
                name: root_name.to_string(),
                full_path: root_name.to_string(),
                parent: None,
                children: Vec::new(),
                comp: root,
            }],
            paths,
            history: Vec::new(),
            max_run_rounds: None,
        })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn add_child(
        &mut self,
        parent: NodeId,
        name: &str,
        comp: Box<dyn Component>,
    ) -> Result<NodeId, UvmError> {
        check_name(name)?;
        let p = self
            .nodes
            .get(parent.0)
            .ok_or_else(|| UvmError::Config("unknown parent node".into()))?;
        let full_path = format!("{}.{}", p.full_path, name);
        if !self.paths.insert(full_path.clone()) {
            return Err(UvmError::Config(format!(
                "duplicate component path {full_path}"
            )));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            name: name.to_string(),
            full_path,
            parent: Some(parent),
            children: Vec::new(),
            comp,
        });
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn path(&self, id: NodeId) -> &str {
        &self.nodes[id.0].full_path
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn find(&self, path: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.full_path == path)
            .map(NodeId)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parent-before-child, children in insertion order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![NodeId(0)];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id.0].children.iter().rev());
        }
        out
    }

    /// Every hook invocation as `(phase, path)`, in call order. RUN steps
    /// are recorded once per component, on the first step.
    pub fn history(&self) -> &[(Phase, String)] {
        &self.history
    }

    /// Aborts RUN with a fatal error after this many rounds.
    pub fn set_max_run_rounds(&mut self, n: u64) {
        self.max_run_rounds = Some(n);
    }

    /// Executes BUILD, CONNECT, RUN and REPORT. A fatal error ends the
    /// phase in which it occurred and skips the rest except REPORT.
    pub fn run_phases(&mut self, registry: &mut BindingRegistry) -> ReportSummary {
        let mut reporter = Reporter::default();
        let mut summary = ReportSummary::default();
        let order = self.preorder();

        let fatal = self
            .phase_build(&order, registry, &mut reporter)
            .and_then(|_| {
                registry.seal();
                self.phase_connect(&order, registry, &mut reporter)
            })
            .and_then(|_| self.phase_run(&order, &mut reporter, &mut summary));
        if let Err((phase, e)) = fatal {
            summary.fatal = Some((phase, e));
        }

        for &id in &order {
            let node = &mut self.nodes[id.0];
            self.history.push((Phase::Report, node.full_path.clone()));
            let mut ctx = ReportCtx {
                path: &node.full_path,
                summary: &mut summary,
                reporter: &mut reporter,
            };
            node.comp.report(&mut ctx);
        }
        summary.warnings = registry.warnings().len() as u64;
        summary.finish(reporter);
        summary
    }

    fn phase_build(
        &mut self,
        order: &[NodeId],
        registry: &mut BindingRegistry,
        reporter: &mut Reporter,
    ) -> Result<(), (Phase, UvmError)> {
        for &id in order {
            let node = &mut self.nodes[id.0];
            self.history.push((Phase::Build, node.full_path.clone()));
            let mut ctx = BuildCtx {
                path: &node.full_path,
                registry,
                reporter,
            };
            node.comp
                .build(&mut ctx)
                .map_err(|e| (Phase::Build, tag(e, &node.full_path)))?;
        }
        Ok(())
    }

    fn phase_connect(
        &mut self,
        order: &[NodeId],
        registry: &BindingRegistry,
        reporter: &mut Reporter,
    ) -> Result<(), (Phase, UvmError)> {
        for &id in order {
            let node = &mut self.nodes[id.0];
            self.history.push((Phase::Connect, node.full_path.clone()));
            let mut ctx = ConnectCtx {
                path: &node.full_path,
                registry,
                reporter,
            };
            node.comp
                .connect(&mut ctx)
                .map_err(|e| (Phase::Connect, tag(e, &node.full_path)))?;
        }
        Ok(())
    }

    fn phase_run(
        &mut self,
        order: &[NodeId],
        reporter: &mut Reporter,
        summary: &mut ReportSummary,
    ) -> Result<(), (Phase, UvmError)> {
        let mut objections = 0u64;
        let mut rounds = 0u64;
        loop {
            let mut busy = false;
            for &id in order {
                let node = &mut self.nodes[id.0];
                if rounds == 0 {
                    self.history.push((Phase::Run, node.full_path.clone()));
                }
                let mut ctx = RunCtx {
                    path: &node.full_path,
                    objections: &mut objections,
                    reporter,
                };
                let a = node
                    .comp
                    .run_step(&mut ctx)
                    .map_err(|e| (Phase::Run, tag(e, &node.full_path)))?;
                busy |= a == Activity::Busy;
            }
            rounds += 1;
            summary.run_rounds = rounds;
            if !busy {
                if objections == 0 {
                    return Ok(());
                }
                return Err((
                    Phase::Run,
                    UvmError::Fatal {
                        path: self.nodes[0].full_path.clone(),
                        message: format!(
                            "{objections} objection(s) outstanding with every component idle"
                        ),
                    },
                ));
            }
            if self.max_run_rounds.is_some_and(|m| rounds >= m) {
                return Err((
                    Phase::Run,
                    UvmError::Fatal {
                        path: self.nodes[0].full_path.clone(),
                        message: format!("RUN exceeded {rounds} rounds"),
                    },
                ));
            }
        }
    }
}

fn check_name(name: &str) -> Result<(), UvmError> {
    if name.is_empty() || name.contains('.') {
        return Err(UvmError::Config(format!(
            "component name {name:?} must be non-empty and contain no '.'"
        )));
    }
    Ok(())
}

/// Non-fatal errors escaping a hook are promoted to fatal at that path.
fn tag(e: UvmError, path: &str) -> UvmError {
    match e {
        UvmError::Fatal { .. } => e,
        other => UvmError::Fatal {
            path: path.to_string(),
            message: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uvm::sequencer::{NextItem, Sequencer};

    struct Logger(Rc<RefCell<Vec<String>>>);

    impl Component for Logger {
        fn build(&mut self, c: &mut BuildCtx<'_>) -> Result<(), UvmError> {
            self.0.borrow_mut().push(format!("build {}", c.path));
            Ok(())
        }
        fn connect(&mut self, c: &mut ConnectCtx<'_>) -> Result<(), UvmError> {
            self.0.borrow_mut().push(format!("connect {}", c.path));
            Ok(())
        }
        fn run_step(&mut self, c: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
            self.0.borrow_mut().push(format!("run {}", c.path));
            Ok(Activity::Idle)
        }
    }

    #[test]
    fn paths_and_duplicates() {
        let mut t = ComponentTree::new("top", Box::new(Container)).unwrap();
        let env = t.add_child(t.root(), "env", Box::new(Container)).unwrap();
        let a = t.add_child(env, "agent", Box::new(Container)).unwrap();
        assert_eq!(t.path(a), "top.env.agent");
        assert_eq!(t.find("top.env.agent"), Some(a));
        assert!(t.add_child(env, "agent", Box::new(Container)).is_err());
        assert!(t.add_child(env, "a.b", Box::new(Container)).is_err());
        assert!(ComponentTree::new("", Box::new(Container)).is_err());
    }

    #[test]
    fn build_is_top_down_and_connect_precedes_run() {
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut t = ComponentTree::new("top", Box::new(Logger(log.clone()))).unwrap();
        let env = t
            .add_child(t.root(), "env", Box::new(Logger(log.clone())))
            .unwrap();
        t.add_child(env, "a", Box::new(Logger(log.clone())))
            .unwrap();
        t.add_child(t.root(), "b", Box::new(Logger(log.clone())))
            .unwrap();
        let s = t.run_phases(&mut BindingRegistry::new());
        assert!(s.passed());
        let log = log.borrow();
        assert_eq!(
            &log[..4],
            [
                "build top",
                "build top.env",
                "build top.env.a",
                "build top.b"
            ]
        );
        let last_connect = log.iter().rposition(|l| l.starts_with("connect")).unwrap();
        let first_run = log.iter().position(|l| l.starts_with("run")).unwrap();
        assert!(last_connect < first_run);
    }

    #[test]
    fn no_objections_returns_after_one_round() {
        let mut t = ComponentTree::new("top", Box::new(Container)).unwrap();
        let s = t.run_phases(&mut BindingRegistry::new());
        assert!(s.passed());
        assert_eq!(s.run_rounds, 1);
    }

    struct FatalBuild;
    impl Component for FatalBuild {
        fn build(&mut self, c: &mut BuildCtx<'_>) -> Result<(), UvmError> {
            c.registry.get::<u32>(c.path, "driver_bfm_if")?;
            Ok(())
        }
    }

    #[test]
    fn fatal_in_build_skips_run() {
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut t = ComponentTree::new("top", Box::new(FatalBuild)).unwrap();
        t.add_child(t.root(), "x", Box::new(Logger(log.clone())))
            .unwrap();
        let s = t.run_phases(&mut BindingRegistry::new());
        assert!(!s.passed());
        assert_ne!(s.exit_code(), 0);
        assert!(log.borrow().is_empty());
        assert!(t.history().iter().all(|(p, _)| *p != Phase::Run));
        assert_eq!(s.fatal.as_ref().unwrap().0, Phase::Build);
    }

    // Test raises one objection and feeds 10 items; it drops once the
    // driver has completed all of them.
    struct Test {
        seq: Rc<RefCell<Sequencer<u32>>>,
        started: bool,
    }
    impl Component for Test {
        fn run_step(&mut self, c: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
            if !self.started {
                self.started = true;
                c.raise_objection();
                for i in 0..10 {
                    self.seq.borrow_mut().send(i);
                }
                return Ok(Activity::Busy);
            }
            if c.objections() > 0 && self.seq.borrow().done_count() == 10 {
                c.drop_objection()?;
                return Ok(Activity::Busy);
            }
            Ok(Activity::Idle)
        }
    }

    struct Driver {
        seq: Rc<RefCell<Sequencer<u32>>>,
        log: Rc<RefCell<Vec<u32>>>,
        saw_end: bool,
    }
    impl Component for Driver {
        fn run_step(&mut self, c: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
            let mut s = self.seq.borrow_mut();
            match s.get_next_item(c.end_of_test())? {
                NextItem::Item(i) => {
                    self.log.borrow_mut().push(i);
                    s.item_done(None)?;
                    Ok(Activity::Busy)
                }
                NextItem::Pending => Ok(Activity::Idle),
                NextItem::EndOfTest => {
                    self.saw_end = true;
                    Ok(Activity::Idle)
                }
            }
        }
        fn report(&mut self, c: &mut ReportCtx<'_>) {
            c.add_transactions(self.log.borrow().len() as u64);
            if !self.saw_end {
                c.error("driver never saw end of test");
            }
        }
    }

    #[test]
    fn run_ends_after_tenth_item_done() {
        let seq = Rc::new(RefCell::new(Sequencer::new()));
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut t = ComponentTree::new(
            "top",
            Box::new(Test {
                seq: seq.clone(),
                started: false,
            }),
        )
        .unwrap();
        t.add_child(
            t.root(),
            "driv",
            Box::new(Driver {
                seq: seq.clone(),
                log: log.clone(),
                saw_end: false,
            }),
        )
        .unwrap();
        let s = t.run_phases(&mut BindingRegistry::new());
        assert!(s.passed(), "{s}");
        assert_eq!(*log.borrow(), (0..10).collect::<Vec<_>>());
        assert_eq!(s.transactions, 10);
        // round 1 queues and drives item 0; rounds 2..=10 drive items 1..9;
        // round 11 drops; round 12 is idle everywhere
        assert_eq!(s.run_rounds, 12);
    }

    struct Stuck;
    impl Component for Stuck {
        fn run_step(&mut self, c: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
            if c.objections() == 0 {
                c.raise_objection();
            }
            Ok(Activity::Idle)
        }
    }

    #[test]
    fn stalled_objection_is_fatal() {
        let mut t = ComponentTree::new("top", Box::new(Stuck)).unwrap();
        let s = t.run_phases(&mut BindingRegistry::new());
        assert_eq!(s.fatal.as_ref().unwrap().0, Phase::Run);
        assert_eq!(s.exit_code(), 1);
    }
}
