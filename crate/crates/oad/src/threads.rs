//! Threaded executor.
//!
//! Splits the index range into contiguous chunks, one per worker, and
//! reassembles results in range order, so outputs are identical to the
//! sequential executor for any thread count.

use oad_core::exec::Executor;

#[derive(Debug, Clone, Copy)]
pub struct ThreadExec {
    threads: usize,
}

impl ThreadExec {
    pub fn new(threads: usize) -> Self {
        ThreadExec { threads: threads.max(1) }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl Executor for ThreadExec {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        if self.threads == 1 || n < 2 {
            return (0..n).map(f).collect();
        }
        let workers = self.threads.min(n);
        let chunk = n.div_ceil(workers);
        let f = &f;
        let mut chunks: Vec<Vec<T>> = Vec::with_capacity(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let start = w * chunk;
                    let end = ((w + 1) * chunk).min(n);
                    scope.spawn(move || (start..end).map(f).collect::<Vec<T>>())
                })
                .collect();
            for handle in handles {
                chunks.push(handle.join().expect("worker panicked"));
            }
        });
        chunks.into_iter().flatten().collect()
    }
}
