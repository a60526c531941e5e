//! MultiProcess mode: one worker per rank, each holding a full copy of the
//! dataset, talking to the master over its stdin/stdout with [`wire`] frames.
//!
//! The master spawns all workers, delivers DATASET and SPEC down a binary
//! tree (rank 0 first, then one level per [`fanout_levels`] entry, each level
//! written concurrently), pushes every rank its own PLAN_BLOCK, and collects
//! one RESULTS or ERROR frame per rank.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::Instant;

use super::wire::{self, Tag};
use super::{evaluate_block, fanout_levels, nanos, Launcher, LocalResults, WorkerBlock};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::plan::{ResamplePlan, Stype};
use crate::statistic::{PreparedStatistic, StatisticSpec};

/// Path of the worker executable, overriding discovery.
pub const WORKER_EXE_ENV: &str = "PBOOT_WORKER_EXE";
/// Subcommand that runs [`serve`] on stdin/stdout.
pub const WORKER_SUBCOMMAND: &str = "worker";

/// Worker side: answers PLAN_BLOCK frames until SHUTDOWN or end of input.
pub fn serve<R: Read, W: Write>(input: R, output: W) -> Result<()> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    let mut data: Option<Dataset> = None;
    let mut spec: Option<StatisticSpec> = None;
    let io_err = |e: io::Error| Error::Protocol {
        rank: usize::MAX,
        message: e.to_string(),
    };
    loop {
        let Some(frame) = wire::read_frame(&mut input).map_err(io_err)? else {
            return Ok(());
        };
        match frame.tag {
            Tag::Dataset => data = Some(wire::decode_dataset(&frame.payload)?),
            Tag::Spec => spec = Some(wire::decode_spec(&frame.payload)?),
            Tag::PlanBlock => {
                let block = wire::decode_plan_block(&frame.payload)?;
                let (tag, payload) = match evaluate_message(data.as_ref(), spec.as_ref(), &block) {
                    Ok(results) => (Tag::Results, wire::encode_results(&results)),
                    Err(err) => (Tag::Error, wire::encode_error(&error_message(block.rank, err))),
                };
                wire::write_frame(&mut output, tag, &payload).map_err(io_err)?;
            }
            Tag::Shutdown => return Ok(()),
            Tag::Results | Tag::Error => {
                return Err(Error::Protocol {
                    rank: usize::MAX,
                    message: format!("unexpected {:?} frame on worker input", frame.tag),
                })
            }
        }
    }
}

fn evaluate_message(
    data: Option<&Dataset>,
    spec: Option<&StatisticSpec>,
    block: &wire::PlanBlockMsg,
) -> Result<wire::ResultsMsg> {
    let (Some(data), Some(spec)) = (data, spec) else {
        return Err(Error::Remote("PLAN_BLOCK received before DATASET and SPEC".into()));
    };
    if block.n != data.n() {
        return Err(Error::ViewLength {
            expected: data.n(),
            found: block.n,
        });
    }
    let stat = PreparedStatistic::new(spec, data)?;
    let local = evaluate_block(
        &stat,
        WorkerBlock {
            rank: block.rank,
            start: block.start,
            len: block.len(),
        },
        &block.rows,
        block.stype,
    )?;
    Ok(wire::ResultsMsg {
        rank: local.rank,
        start: local.start,
        count: local.len(),
        p: local.p,
        values: local.values,
    })
}

fn error_message(rank: usize, err: Error) -> wire::ErrorMsg {
    match err {
        Error::Resample { resample, source, .. } => wire::ErrorMsg {
            rank,
            resample: Some(resample),
            message: source.to_string(),
        },
        other => wire::ErrorMsg {
            rank,
            resample: None,
            message: other.to_string(),
        },
    }
}

/// `PBOOT_WORKER_EXE`, else the running executable if it is `pboot`, else a
/// `pboot` beside it or one directory up (covers `target/*/deps`).
pub fn resolve_worker_exe() -> Result<PathBuf> {
    if let Some(path) = std::env::var_os(WORKER_EXE_ENV) {
        return Ok(PathBuf::from(path));
    }
    let not_found = |message: String| Error::WorkerSpawnFailure { rank: 0, message };
    let current = std::env::current_exe().map_err(|e| not_found(e.to_string()))?;
    let name = format!("pboot{}", std::env::consts::EXE_SUFFIX);
    if current.file_name().is_some_and(|f| f == name.as_str()) {
        return Ok(current);
    }
    let dir = current.parent();
    dir.into_iter()
        .chain(dir.and_then(|d| d.parent()))
        .map(|d| d.join(&name))
        .find(|p| p.is_file())
        .ok_or_else(|| not_found(format!("no pboot executable found; set {WORKER_EXE_ENV}")))
}

struct Link {
    rank: usize,
    writer: Box<dyn Write + Send>,
    reader: Box<dyn Read + Send>,
    child: Option<Child>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl Link {
    fn spawn(launcher: &Launcher, rank: usize) -> Result<Link> {
        let command = match launcher {
            Launcher::InProcess => return Self::in_process(rank),
            Launcher::Auto => {
                let mut c = Command::new(resolve_worker_exe().map_err(|e| with_rank(e, rank))?);
                c.arg(WORKER_SUBCOMMAND);
                c
            }
            Launcher::Executable(path) => {
                let mut c = Command::new(path);
                c.arg(WORKER_SUBCOMMAND);
                c
            }
            Launcher::Custom(build) => build(rank),
        };
        Self::from_command(command, rank)
    }

    fn from_command(mut command: Command, rank: usize) -> Result<Link> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::WorkerSpawnFailure {
                rank,
                message: e.to_string(),
            })?;
        let writer = child.stdin.take().expect("piped stdin");
        let reader = child.stdout.take().expect("piped stdout");
        Ok(Link {
            rank,
            writer: Box::new(BufWriter::new(writer)),
            reader: Box::new(BufReader::new(reader)),
            child: Some(child),
            thread: None,
        })
    }

    fn in_process(rank: usize) -> Result<Link> {
        let spawn_err = |e: io::Error| Error::WorkerSpawnFailure {
            rank,
            message: e.to_string(),
        };
        let (to_worker_r, to_worker_w) = io::pipe().map_err(spawn_err)?;
        let (from_worker_r, from_worker_w) = io::pipe().map_err(spawn_err)?;
        let thread = std::thread::Builder::new()
            .name(format!("pboot-inproc-{rank}"))
            .spawn(move || serve(to_worker_r, from_worker_w))
            .map_err(spawn_err)?;
        Ok(Link {
            rank,
            writer: Box::new(BufWriter::new(to_worker_w)),
            reader: Box::new(BufReader::new(from_worker_r)),
            child: None,
            thread: Some(thread),
        })
    }

    fn send(&mut self, tag: Tag, payload: &[u8]) -> Result<()> {
        wire::frame_header(tag, payload.len())?;
        wire::write_frame(&mut self.writer, tag, payload).map_err(|e| channel_error(self.rank, e))
    }

    fn receive(&mut self) -> Result<wire::Frame> {
        match wire::read_frame(&mut self.reader) {
            Ok(Some(frame)) => Ok(frame),
            Ok(None) => Err(Error::ChannelClosed { rank: self.rank }),
            Err(e) => Err(channel_error(self.rank, e)),
        }
    }

    fn shutdown(mut self) {
        let _ = self.send(Tag::Shutdown, &[]);
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for Link {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn channel_error(rank: usize, e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::BrokenPipe | io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset => {
            Error::ChannelClosed { rank }
        }
        _ => Error::Protocol {
            rank,
            message: e.to_string(),
        },
    }
}

fn with_rank(err: Error, rank: usize) -> Error {
    match err {
        Error::WorkerSpawnFailure { message, .. } => Error::WorkerSpawnFailure { rank, message },
        Error::Protocol { message, .. } => Error::Protocol { rank, message },
        other => other,
    }
}

pub(crate) struct MultiProcessOutput {
    pub locals: Vec<LocalResults>,
    pub scatter_ns: u64,
    pub evaluate_ns: u64,
}

/// Runs `f` on every link whose rank is in `ranks`, concurrently; returns the
/// lowest-rank error.
fn on_links<F>(links: &mut [Link], ranks: &[usize], f: F) -> Result<()>
where
    F: Fn(&mut Link) -> Result<()> + Sync,
{
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = links
            .iter_mut()
            .filter(|l| ranks.contains(&l.rank))
            .map(|link| scope.spawn(move || f(link)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Remote("master thread panicked".into()))))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<()>>()
    })
}

pub(crate) fn run_multiprocess(
    launcher: &Launcher,
    data: &Dataset,
    spec: &StatisticSpec,
    plan: &ResamplePlan,
    blocks: &[WorkerBlock],
    stype: Stype,
    p: usize,
) -> Result<MultiProcessOutput> {
    let k = blocks.len();
    let scatter_start = Instant::now();
    let mut links = Vec::with_capacity(k);
    for rank in 0..k {
        links.push(Link::spawn(launcher, rank)?);
    }

    let dataset = wire::encode_dataset(data);
    let statistic = wire::encode_spec(spec);
    let deliver = |link: &mut Link| {
        link.send(Tag::Dataset, &dataset)?;
        link.send(Tag::Spec, &statistic)
    };
    on_links(&mut links, &[0], deliver)?;
    for level in fanout_levels(k) {
        let ranks: Vec<usize> = level.iter().map(|&(_, dst)| dst).collect();
        on_links(&mut links, &ranks, deliver)?;
    }

    let all: Vec<usize> = (0..k).collect();
    let n = plan.n();
    let seed = plan.rng().seed;
    on_links(&mut links, &all, |link| {
        let b = blocks[link.rank];
        let payload = wire::encode_plan_block(b.rank, b.start, stype, n, seed, plan.block(b.start, b.len));
        link.send(Tag::PlanBlock, &payload)
    })?;
    let scatter_ns = nanos(scatter_start);

    let eval_start = Instant::now();
    let outcomes: Vec<Result<LocalResults>> = std::thread::scope(|scope| {
        let handles: Vec<_> = links
            .iter_mut()
            .map(|link| scope.spawn(move || collect_one(link, blocks[link.rank], p)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Remote("master thread panicked".into()))))
            .collect()
    });
    let evaluate_ns = nanos(eval_start);
    let locals = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    for link in links {
        link.shutdown();
    }
    Ok(MultiProcessOutput {
        locals,
        scatter_ns,
        evaluate_ns,
    })
}

fn collect_one(link: &mut Link, block: WorkerBlock, p: usize) -> Result<LocalResults> {
    let rank = link.rank;
    let protocol = |message: String| Error::Protocol { rank, message };
    let frame = link.receive()?;
    match frame.tag {
        Tag::Results => {
            let msg = wire::decode_results(&frame.payload).map_err(|e| with_rank(e, rank))?;
            if msg.rank != rank || msg.start != block.start || msg.count != block.len || msg.p != p {
                return Err(protocol(format!(
                    "results for rank {} rows {}+{} (p = {}) do not match block rows {}+{} (p = {p})",
                    msg.rank, msg.start, msg.count, msg.p, block.start, block.len
                )));
            }
            Ok(LocalResults {
                rank,
                start: msg.start,
                p,
                values: msg.values,
            })
        }
        Tag::Error => {
            let msg = wire::decode_error(&frame.payload).map_err(|e| with_rank(e, rank))?;
            Err(match msg.resample {
                Some(resample) => Error::Resample {
                    rank,
                    resample,
                    source: Box::new(Error::Remote(msg.message)),
                },
                None => Error::Remote(format!("worker {rank}: {}", msg.message)),
            })
        }
        other => Err(protocol(format!("unexpected {other:?} frame from worker"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(payloads: &[(Tag, Vec<u8>)]) -> Vec<u8> {
        let mut buf = Vec::new();
        for (tag, p) in payloads {
            wire::write_frame(&mut buf, *tag, p).unwrap();
        }
        buf
    }

    #[test]
    fn serve_answers_plan_blocks() {
        let d = Dataset::new([("c", vec![1.0, 3.0])]).unwrap();
        let input = frames(&[
            (Tag::Dataset, wire::encode_dataset(&d)),
            (Tag::Spec, wire::encode_spec(&StatisticSpec::mean())),
            (Tag::PlanBlock, wire::encode_plan_block(1, 4, Stype::Indices, 2, 0, &[0, 0, 1, 1])),
            (Tag::Shutdown, vec![]),
        ]);
        let mut out = Vec::new();
        serve(input.as_slice(), &mut out).unwrap();
        let frame = wire::read_frame(&mut out.as_slice()).unwrap().unwrap();
        assert_eq!(frame.tag, Tag::Results);
        let msg = wire::decode_results(&frame.payload).unwrap();
        assert_eq!((msg.rank, msg.start, msg.count, msg.p), (1, 4, 2, 1));
        assert_eq!(msg.values, [1.0, 3.0]);
    }

    #[test]
    fn serve_reports_statistic_failures() {
        let d = Dataset::new([("x", vec![1.0, 2.0]), ("u", vec![0.0, 1.0])]).unwrap();
        let input = frames(&[
            (Tag::Dataset, wire::encode_dataset(&d)),
            (Tag::Spec, wire::encode_spec(&StatisticSpec::ratio("x", "u"))),
            (Tag::PlanBlock, wire::encode_plan_block(0, 7, Stype::Weights, 2, 0, &[1, 1, 0, 0])),
        ]);
        let mut out = Vec::new();
        serve(input.as_slice(), &mut out).unwrap();
        let frame = wire::read_frame(&mut out.as_slice()).unwrap().unwrap();
        assert_eq!(frame.tag, Tag::Error);
        let msg = wire::decode_error(&frame.payload).unwrap();
        assert_eq!((msg.rank, msg.resample), (0, Some(8)));
        assert!(msg.message.contains("non-finite"), "{}", msg.message);
    }

    #[test]
    fn serve_requires_dataset_first() {
        let input = frames(&[(Tag::PlanBlock, wire::encode_plan_block(0, 0, Stype::Indices, 1, 0, &[0]))]);
        let mut out = Vec::new();
        serve(input.as_slice(), &mut out).unwrap();
        let frame = wire::read_frame(&mut out.as_slice()).unwrap().unwrap();
        assert_eq!(frame.tag, Tag::Error);
    }

    #[test]
    fn custom_launcher_early_exit_is_channel_closed() {
        use crate::engine::{Engine, ExecutionMode, RunRequest};
        use std::sync::Arc;

        // Every rank exits before reading anything.
        let d = Dataset::new([("c", vec![1.0, 2.0, 3.0])]).unwrap();
        let launcher = Launcher::Custom(Arc::new(|_| Command::new("true")));
        let mut engine = Engine::default().with_launcher(launcher);
        let err = engine
            .run(&d, &StatisticSpec::mean(), &RunRequest::new(4, Stype::Indices, 0, ExecutionMode::MultiProcess(2)))
            .unwrap_err();
        assert!(matches!(err, Error::ChannelClosed { .. }), "{err:?}");
    }

    #[test]
    fn spawn_failure_names_rank() {
        use crate::engine::{Engine, ExecutionMode, RunRequest};
        let d = Dataset::new([("c", vec![1.0])]).unwrap();
        let launcher = Launcher::Executable("/nonexistent/pboot-worker".into());
        let mut engine = Engine::default().with_launcher(launcher);
        let err = engine
            .run(&d, &StatisticSpec::mean(), &RunRequest::new(1, Stype::Indices, 0, ExecutionMode::MultiProcess(3)))
            .unwrap_err();
        assert!(matches!(err, Error::WorkerSpawnFailure { rank: 0, .. }), "{err:?}");
    }
}
