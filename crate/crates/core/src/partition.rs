//! Work distribution across nodelets and the analytic migration oracle.
//!
//! Rows are assigned to nodelets (and to threads within each nodelet) either
//! in even contiguous chunks ([`distribute_rows_even`]) or by walking rows
//! until each thread has gathered roughly its share of non-zeros
//! ([`distribute_by_nnz`]). [`build_distributed_plan`] then carves the matrix
//! into per-nodelet CSR shards and fixes the x / b vector layouts.
//!
//! [`trace_migrations`] predicts, without simulating time, exactly which
//! memory accesses the machine will execute and where. Each thread walks its
//! rows in program order: the two row-extent reads and the column-index and
//! value reads execute on the thread's home nodelet, each `x[col]` read
//! executes on the nodelet owning that column (the thread migrates there when
//! it is elsewhere), and the final `b[row]` store executes on the owner of
//! that row — as a local write when the thread happens to be there, otherwise
//! as a remote update that needs no migration. A migration is counted every
//! time consecutive accesses of one thread land on different nodelets, and is
//! attributed to the destination.

use crate::matrix::CsrMatrix;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Errors from distribution and plan construction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    /// At least one nodelet is required.
    #[error("nodelet count must be at least 1")]
    ZeroNodelets,
    /// At least one thread per nodelet is required.
    #[error("threads per nodelet must be at least 1")]
    ZeroThreads,
    /// The assignment was built for a different row count.
    #[error("assignment covers {assignment_rows} rows, matrix has {matrix_rows}")]
    RowCountMismatch {
        /// Rows covered by the assignment.
        assignment_rows: usize,
        /// Rows in the matrix.
        matrix_rows: usize,
    },
}

fn ceil_div(a: usize, b: usize) -> usize {
    if a == 0 {
        0
    } else {
        (a - 1) / b + 1
    }
}

/// How a distributed vector maps indices to owning nodelets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VectorLayout {
    /// Element i lives on nodelet `i mod nodelets`.
    Cyclic,
    /// Contiguous blocks of `ceil(len / nodelets)` elements per nodelet; the
    /// last block may be short (trailing nodelets may own nothing).
    Block,
}

impl VectorLayout {
    /// Block length used by the block layout.
    pub fn block_size(len: usize, nodelets: usize) -> usize {
        ceil_div(len, nodelets).max(1)
    }

    /// Owning nodelet of element `index` in a vector of `len` elements.
    pub fn owner(self, index: usize, len: usize, nodelets: usize) -> usize {
        debug_assert!(index < len, "index {index} out of vector length {len}");
        match self {
            VectorLayout::Cyclic => index % nodelets,
            VectorLayout::Block => index / Self::block_size(len, nodelets),
        }
    }
}

/// Contiguous row ranges per (nodelet, thread), nodelet-major.
///
/// Invariants, guaranteed by the constructors: thread ranges are contiguous,
/// non-overlapping, ordered, and cover `0..num_rows`; empty ranges are
/// allowed anywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkAssignment {
    num_rows: usize,
    nodelets: usize,
    threads_per_nodelet: usize,
    /// `thread_starts[n * threads_per_nodelet + t]` = first row of that
    /// thread; a final sentinel holds `num_rows`.
    thread_starts: Vec<usize>,
}

impl WorkAssignment {
    /// Total rows distributed.
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    /// Nodelet count.
    pub fn nodelets(&self) -> usize {
        self.nodelets
    }

    /// Worker threads per nodelet.
    pub fn threads_per_nodelet(&self) -> usize {
        self.threads_per_nodelet
    }

    /// Row range `[first, end)` of one thread.
    pub fn thread_rows(&self, nodelet: usize, thread: usize) -> (usize, usize) {
        let flat = nodelet * self.threads_per_nodelet + thread;
        (self.thread_starts[flat], self.thread_starts[flat + 1])
    }

    /// Row range `[first, end)` of one nodelet (union of its threads).
    pub fn nodelet_rows(&self, nodelet: usize) -> (usize, usize) {
        let base = nodelet * self.threads_per_nodelet;
        (self.thread_starts[base], self.thread_starts[base + self.threads_per_nodelet])
    }

    /// Absolute index of the first row held by a nodelet.
    pub fn nodelet_first_row(&self, nodelet: usize) -> usize {
        self.nodelet_rows(nodelet).0
    }

    /// Non-zeros owned by each thread, flattened nodelet-major.
    pub fn per_thread_nnz(&self, a: &CsrMatrix) -> Vec<usize> {
        let row_ptr = a.row_ptr();
        (0..self.nodelets * self.threads_per_nodelet)
            .map(|flat| row_ptr[self.thread_starts[flat + 1]] - row_ptr[self.thread_starts[flat]])
            .collect()
    }
}

/// Splits rows into even contiguous chunks: `ceil(num_rows / nodelets)` rows
/// per nodelet, then the same rule across each nodelet's threads. Trailing
/// nodelets and threads may receive empty ranges.
pub fn distribute_rows_even(
    num_rows: usize,
    nodelets: usize,
    threads_per_nodelet: usize,
) -> Result<WorkAssignment, PartitionError> {
    if nodelets == 0 {
        return Err(PartitionError::ZeroNodelets);
    }
    if threads_per_nodelet == 0 {
        return Err(PartitionError::ZeroThreads);
    }
    let per_nodelet = ceil_div(num_rows, nodelets);
    let mut thread_starts = Vec::with_capacity(nodelets * threads_per_nodelet + 1);
    for nodelet in 0..nodelets {
        let lo = (nodelet * per_nodelet).min(num_rows);
        let hi = ((nodelet + 1) * per_nodelet).min(num_rows);
        let per_thread = ceil_div(hi - lo, threads_per_nodelet);
        for thread in 0..threads_per_nodelet {
            thread_starts.push((lo + thread * per_thread).min(hi));
        }
    }
    thread_starts.push(num_rows);
    Ok(WorkAssignment { num_rows, nodelets, threads_per_nodelet, thread_starts })
}

/// Splits rows so each thread gathers roughly `ceil(nnz / total_threads)`
/// non-zeros.
///
/// Rows stay atomic: the walk adds whole rows to the current thread and
/// advances to the next thread once the running count reaches the threshold.
/// Threads fill in nodelet-major order and the final thread absorbs any
/// remainder, so a thread's load never exceeds `threshold - 1` plus its last
/// row's non-zeros (except for that final absorber).
pub fn distribute_by_nnz(
    a: &CsrMatrix,
    nodelets: usize,
    threads_per_nodelet: usize,
) -> Result<WorkAssignment, PartitionError> {
    if nodelets == 0 {
        return Err(PartitionError::ZeroNodelets);
    }
    if threads_per_nodelet == 0 {
        return Err(PartitionError::ZeroThreads);
    }
    let num_rows = a.num_rows();
    let total_threads = nodelets * threads_per_nodelet;
    let threshold = ceil_div(a.nnz(), total_threads).max(1);

    let mut thread_starts = Vec::with_capacity(total_threads + 1);
    thread_starts.push(0);
    let mut acc = 0usize;
    for row in 0..num_rows {
        acc += a.row_nnz(row);
        if acc >= threshold && thread_starts.len() < total_threads {
            thread_starts.push(row + 1);
            acc = 0;
        }
    }
    while thread_starts.len() < total_threads + 1 {
        thread_starts.push(num_rows);
    }
    Ok(WorkAssignment { num_rows, nodelets, threads_per_nodelet, thread_starts })
}

/// One nodelet's slice of the matrix: a mini-CSR over its contiguous rows.
///
/// `row_ptr` is rebased so the shard stands alone; `col_index` keeps global
/// column numbers (columns of x live wherever the x layout puts them).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeletShard {
    first_row: usize,
    row_ptr: Vec<usize>,
    col_index: Vec<usize>,
    values: Vec<f64>,
}

impl NodeletShard {
    /// Absolute index of this shard's first row.
    pub fn first_row(&self) -> usize {
        self.first_row
    }

    /// Rows held by this shard.
    pub fn num_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Non-zeros held by this shard.
    pub fn nnz(&self) -> usize {
        self.col_index.len()
    }

    /// Rebased row extents.
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Global column indices.
    pub fn col_index(&self) -> &[usize] {
        &self.col_index
    }

    /// Non-zero values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns and values of the absolute row `row`.
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let rel = row - self.first_row;
        let span = self.row_ptr[rel]..self.row_ptr[rel + 1];
        (&self.col_index[span.clone()], &self.values[span])
    }
}

/// A matrix carved into per-nodelet shards plus the vector layouts — the
/// complete input of both the simulator and the analytic oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedPlan {
    num_rows: usize,
    num_cols: usize,
    assignment: WorkAssignment,
    x_layout: VectorLayout,
    b_layout: VectorLayout,
    shards: Vec<NodeletShard>,
}

impl DistributedPlan {
    /// Rows of the distributed matrix.
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    /// Columns of the distributed matrix (length of x).
    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// Nodelet count.
    pub fn nodelets(&self) -> usize {
        self.assignment.nodelets()
    }

    /// Worker threads per nodelet.
    pub fn threads_per_nodelet(&self) -> usize {
        self.assignment.threads_per_nodelet()
    }

    /// The row-to-thread assignment this plan was built from.
    pub fn assignment(&self) -> &WorkAssignment {
        &self.assignment
    }

    /// Layout of the input vector x.
    pub fn x_layout(&self) -> VectorLayout {
        self.x_layout
    }

    /// Layout of the output vector b.
    pub fn b_layout(&self) -> VectorLayout {
        self.b_layout
    }

    /// One nodelet's shard.
    pub fn shard(&self, nodelet: usize) -> &NodeletShard {
        &self.shards[nodelet]
    }

    /// Nodelet owning `x[col]`.
    pub fn x_owner(&self, col: usize) -> usize {
        self.x_layout.owner(col, self.num_cols, self.nodelets())
    }

    /// Nodelet owning `b[row]`.
    pub fn b_owner(&self, row: usize) -> usize {
        self.b_layout.owner(row, self.num_rows.max(1), self.nodelets())
    }

    /// Stitches the shards back into one matrix (testing aid).
    pub fn reassemble(&self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.num_rows + 1);
        let mut col_index = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for shard in &self.shards {
            for rel in 0..shard.num_rows() {
                let span = shard.row_ptr[rel]..shard.row_ptr[rel + 1];
                col_index.extend_from_slice(&shard.col_index[span.clone()]);
                values.extend_from_slice(&shard.values[span]);
                row_ptr.push(col_index.len());
            }
        }
        CsrMatrix::new(self.num_rows, self.num_cols, row_ptr, col_index, values)
            .expect("shards preserve CSR invariants")
    }
}

/// Carves `a` into per-nodelet shards under `assignment` and fixes the vector
/// layouts.
///
/// # Errors
///
/// [`PartitionError::RowCountMismatch`] when the assignment was built for a
/// different matrix height.
pub fn build_distributed_plan(
    a: &CsrMatrix,
    assignment: WorkAssignment,
    x_layout: VectorLayout,
    b_layout: VectorLayout,
) -> Result<DistributedPlan, PartitionError> {
    if assignment.num_rows() != a.num_rows() {
        return Err(PartitionError::RowCountMismatch {
            assignment_rows: assignment.num_rows(),
            matrix_rows: a.num_rows(),
        });
    }
    let row_ptr = a.row_ptr();
    let mut shards = Vec::with_capacity(assignment.nodelets());
    for nodelet in 0..assignment.nodelets() {
        let (lo, hi) = assignment.nodelet_rows(nodelet);
        let base = row_ptr[lo];
        let rebased: Vec<usize> = row_ptr[lo..=hi].iter().map(|&p| p - base).collect();
        shards.push(NodeletShard {
            first_row: lo,
            row_ptr: rebased,
            col_index: a.col_index()[row_ptr[lo]..row_ptr[hi]].to_vec(),
            values: a.values()[row_ptr[lo]..row_ptr[hi]].to_vec(),
        });
    }
    Ok(DistributedPlan {
        num_rows: a.num_rows(),
        num_cols: a.num_cols(),
        assignment,
        x_layout,
        b_layout,
        shards,
    })
}

/// Per-nodelet access and migration counts predicted by the program-order
/// walk. All vectors are indexed by nodelet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceCounts {
    /// Migrations arriving at each nodelet (migrations are attributed to
    /// their destination).
    pub migrations_in: Vec<u64>,
    /// Migrations departing each nodelet.
    pub migrations_out: Vec<u64>,
    /// Memory instructions executed on each nodelet (loads where they are
    /// read, stores and remote updates where the data lives).
    pub mem_instrs: Vec<u64>,
    /// Remote b-updates serviced by each nodelet.
    pub remote_updates: Vec<u64>,
    /// x-reads that arrived by migration, per owning nodelet.
    pub remote_x_reads: Vec<u64>,
}

impl TraceCounts {
    /// Total migrations across all nodelets.
    pub fn total_migrations(&self) -> u64 {
        self.migrations_in.iter().sum()
    }

    /// Total memory instructions across all nodelets.
    pub fn total_mem_instrs(&self) -> u64 {
        self.mem_instrs.iter().sum()
    }
}

/// Walks every thread's access sequence in program order and counts, exactly,
/// the migrations and memory instructions the machine will perform.
///
/// See the module docs for the access model. The result is independent of
/// thread interleaving (each thread's walk is self-contained), so it serves
/// as the timing-free oracle for the cycle-level simulator.
pub fn trace_migrations(plan: &DistributedPlan) -> TraceCounts {
    let nodelets = plan.nodelets();
    let mut counts = TraceCounts {
        migrations_in: vec![0; nodelets],
        migrations_out: vec![0; nodelets],
        mem_instrs: vec![0; nodelets],
        remote_updates: vec![0; nodelets],
        remote_x_reads: vec![0; nodelets],
    };

    for home in 0..nodelets {
        let shard = plan.shard(home);
        for thread in 0..plan.threads_per_nodelet() {
            let (first, end) = plan.assignment().thread_rows(home, thread);
            let mut cur = home;
            for row in first..end {
                // Two row-extent reads at home.
                for _ in 0..2 {
                    if cur != home {
                        counts.migrations_out[cur] += 1;
                        counts.migrations_in[home] += 1;
                        cur = home;
                    }
                    counts.mem_instrs[home] += 1;
                }
                let (cols, _) = shard.row(row);
                for &col in cols {
                    // Column index and value reads at home.
                    counts.mem_instrs[home] += 2;
                    debug_assert_eq!(cur, home, "thread is home after row-extent reads");
                    // x read at the column owner.
                    let owner = plan.x_owner(col);
                    if owner != cur {
                        counts.migrations_out[cur] += 1;
                        counts.migrations_in[owner] += 1;
                        counts.remote_x_reads[owner] += 1;
                        cur = owner;
                    }
                    counts.mem_instrs[owner] += 1;
                    // When more non-zeros follow, the next column-index read
                    // pulls the thread home; the b write below never migrates,
                    // so a thread left remote by its row's last x read stays
                    // there until the next row's extent read.
                    if cur != home && col != *cols.last().unwrap() {
                        counts.migrations_out[cur] += 1;
                        counts.migrations_in[home] += 1;
                        cur = home;
                    }
                }
                // b[row] write at its owner: local store or remote update.
                let owner = plan.b_owner(row);
                counts.mem_instrs[owner] += 1;
                if owner != cur {
                    counts.remote_updates[owner] += 1;
                }
            }
        }
    }
    counts
}
