//! Bounded worker pool whose results are delivered to a single sink in
//! input order, so concurrent runs produce deterministic output files.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

/// Runs `work` over `items` on up to `workers` threads. `sink` is invoked on
/// the calling thread in index order. A sink error stops dispatch of new
/// items and is returned once in-flight work drains.
pub fn run_ordered<T, R, E, W, S>(
    items: &[T],
    workers: usize,
    work: W,
    mut sink: S,
) -> Result<(), E>
where
    T: Sync,
    R: Send,
    W: Fn(&T) -> R + Sync,
    S: FnMut(usize, R) -> Result<(), E>,
{
    if items.is_empty() {
        return Ok(());
    }
    let workers = workers.clamp(1, items.len());
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, R)>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, work) = (&next, &stop, &work);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                if tx.send((i, work(&items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut expected = 0;
        let mut result = Ok(());
        for (i, r) in rx {
            if result.is_err() {
                continue;
            }
            pending.insert(i, r);
            while let Some(r) = pending.remove(&expected) {
                if let Err(e) = sink(expected, r) {
                    stop.store(true, Ordering::Relaxed);
                    result = Err(e);
                    break;
                }
                expected += 1;
            }
        }
        result
    })
}
