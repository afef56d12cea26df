//! Partition-based gate-deletion re-synthesis: split a circuit into blocks
//! of at most `k` qubits, try deleting one gate at a time per block while
//! re-instantiating the rest to the block's original unitary, then merge.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::numerics::derive_seed;
use crate::optimizer::{multistart_instantiate, OptimizerConfig, Termination};
use crate::sim::frobenius_cost;

/// Blocks are verified against their dense unitary, which bounds their size.
pub const MAX_PARTITION_QUBITS: usize = 12;

/// Whole-circuit verification after a flow is only attempted up to here.
pub const MAX_VERIFY_QUBITS: usize = 10;

/// A contiguous-ownership block: a subset of gates supported on at most `k`
/// qubits such that every non-owned gate interleaved between owned ones acts
/// on disjoint qubits (so the block can be replaced as a unit).
#[derive(Debug, Clone)]
pub struct Partition {
    qubit_subset: Vec<usize>,
    gate_indices: Vec<usize>,
    block: Circuit,
}

impl Partition {
    pub fn qubit_subset(&self) -> &[usize] {
        &self.qubit_subset
    }

    pub fn gate_indices(&self) -> &[usize] {
        &self.gate_indices
    }

    pub fn first_gate(&self) -> usize {
        self.gate_indices[0]
    }

    /// The owned gates relabeled onto `0..subset` qubits, in original order.
    pub fn block(&self) -> &Circuit {
        &self.block
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub size: usize,
    pub partitions: usize,
    pub gates: usize,
    pub gate_fraction: f64,
}

/// Per-qubit-size histogram of how the partitioner covered the circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total_gates: usize,
    pub rows: Vec<CoverageRow>,
}

/// Greedy left-to-right partitioning. An open block absorbs the next gate
/// when the qubit union stays within `k` and the gate does not touch qubits
/// already claimed by a deferred gate; everything deferred seeds the next
/// block, so ownership stays disjoint, covering, and causally consistent.
pub fn partition(circuit: &Circuit, k: usize) -> Result<(Vec<Partition>, CoverageReport)> {
    let max_arity = circuit.gates().iter().map(Gate::arity).max().unwrap_or(0);
    if k < max_arity {
        return Err(Error::InfeasiblePartition(format!(
            "k={k} is below the largest gate arity {max_arity}"
        )));
    }

    let mut queue: Vec<usize> = (0..circuit.len()).collect();
    let mut partitions = Vec::new();
    while !queue.is_empty() {
        let mut qubits: BTreeSet<usize> = BTreeSet::new();
        let mut owned: Vec<usize> = Vec::new();
        let mut blocked: BTreeSet<usize> = BTreeSet::new();
        let mut deferred: Vec<usize> = Vec::new();
        for &idx in &queue {
            let support = circuit.gate(idx).location();
            let conflict = support.iter().any(|q| blocked.contains(q));
            let union_size = {
                let mut u = qubits.clone();
                u.extend(support.iter().copied());
                u.len()
            };
            if !conflict && union_size <= k {
                owned.push(idx);
                qubits.extend(support.iter().copied());
            } else {
                deferred.push(idx);
                blocked.extend(support.iter().copied());
            }
        }
        partitions.push(build_partition(circuit, qubits, owned)?);
        queue = deferred;
    }

    let coverage = coverage_of(&partitions, circuit.len());
    Ok((partitions, coverage))
}

fn build_partition(
    circuit: &Circuit,
    qubits: BTreeSet<usize>,
    owned: Vec<usize>,
) -> Result<Partition> {
    let subset: Vec<usize> = qubits.into_iter().collect();
    let local_index = |q: usize| subset.iter().position(|&s| s == q).expect("owned support");
    let mut block = Circuit::new(subset.len());
    for &idx in &owned {
        let g = circuit.gate(idx);
        let loc: Vec<usize> = g.location().iter().map(|&q| local_index(q)).collect();
        block.push(Gate::new(
            loc,
            g.kind(),
            g.unitary().clone(),
            g.label().map(str::to_string),
        )?)?;
    }
    Ok(Partition {
        qubit_subset: subset,
        gate_indices: owned,
        block,
    })
}

fn coverage_of(partitions: &[Partition], total_gates: usize) -> CoverageReport {
    let max_size = partitions.iter().map(|p| p.qubit_subset.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for size in 1..=max_size {
        let of_size: Vec<&Partition> = partitions
            .iter()
            .filter(|p| p.qubit_subset.len() == size)
            .collect();
        if of_size.is_empty() {
            continue;
        }
        let gates: usize = of_size.iter().map(|p| p.gate_indices.len()).sum();
        rows.push(CoverageRow {
            size,
            partitions: of_size.len(),
            gates,
            gate_fraction: if total_gates == 0 {
                0.0
            } else {
                gates as f64 / total_gates as f64
            },
        });
    }
    CoverageReport { total_gates, rows }
}

/// Options for the gate-deletion flow.
#[derive(Debug, Clone)]
pub struct ResynthConfig {
    pub optimizer: OptimizerConfig,
    /// Maximum partition qubit count.
    pub k: usize,
    /// Iteration budget per deletion attempt; bounds flow runtime.
    pub per_partition_max_iter: u64,
    /// Re-run the deletion sweep until no gate is removed (default off: one
    /// strict uni-directional pass).
    pub repeat_until_fixpoint: bool,
}

impl ResynthConfig {
    pub fn new(k: usize, optimizer: OptimizerConfig) -> Self {
        Self {
            optimizer,
            k,
            per_partition_max_iter: 10_000,
            repeat_until_fixpoint: false,
        }
    }
}

/// Uni-directional deletion sweep over one block: tentatively remove each
/// gate in turn and keep the removal (with the re-instantiated unitaries)
/// only when the remaining template converges back to the block's original
/// unitary.
pub fn delete_gates_pass(part: &Partition, cfg: &ResynthConfig) -> Result<(Circuit, usize)> {
    if part.block.qubits() > MAX_PARTITION_QUBITS {
        return Err(Error::Capacity(format!(
            "partition spans {} qubits, verification bound is {MAX_PARTITION_QUBITS}",
            part.block.qubits()
        )));
    }
    let target = part.block.unitary()?;
    let mut ocfg = cfg.optimizer.clone();
    ocfg.max_iter = ocfg.max_iter.min(cfg.per_partition_max_iter);
    ocfg.min_iter = ocfg.min_iter.min(ocfg.max_iter);

    let mut block = part.block.clone();
    let mut deleted = 0usize;
    let mut attempt = 0u64;
    loop {
        let mut removed_any = false;
        let mut i = 0usize;
        while i < block.len() {
            let mut candidate = block.clone();
            candidate.remove_gate(i);
            let mut acfg = ocfg.clone();
            acfg.seed = derive_seed(ocfg.seed, attempt);
            attempt += 1;
            let res = multistart_instantiate(&target, &candidate, &acfg)?;
            if res.termination == Termination::Converged {
                block = res.circuit;
                deleted += 1;
                removed_any = true;
            } else {
                i += 1;
            }
        }
        if !(cfg.repeat_until_fixpoint && removed_any) {
            break;
        }
    }
    Ok((block, deleted))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionOutcome {
    pub index: usize,
    pub qubits: usize,
    pub gates_before: usize,
    pub gates_after: usize,
    pub deleted: usize,
    /// Present when the partition was left untouched because of an error.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResynthTiming {
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResynthReport {
    pub u3_before: usize,
    pub u3_after: usize,
    pub cnot_before: usize,
    pub cnot_after: usize,
    pub gates_before: usize,
    pub gates_after: usize,
    pub deleted_gates: usize,
    pub partitions: usize,
    pub modified_partitions: usize,
    pub requested_k: usize,
    pub effective_k: usize,
    pub warnings: Vec<String>,
    /// Normalized Frobenius distance to the original circuit, when the
    /// circuit is small enough to verify densely.
    pub verified_distance: Option<f64>,
    pub coverage: CoverageReport,
    pub per_partition: Vec<PartitionOutcome>,
    pub timing: ResynthTiming,
}

/// Partition the circuit, run the deletion pass on every block in parallel,
/// and merge the surviving blocks back in original order.
pub fn resynth_flow(circuit: &Circuit, cfg: &ResynthConfig) -> Result<(Circuit, ResynthReport)> {
    let started = Instant::now();
    let mut warnings = Vec::new();
    let mut k = cfg.k;
    if k > MAX_PARTITION_QUBITS {
        warnings.push(format!(
            "requested k={k} clamped to {MAX_PARTITION_QUBITS} (dense block verification bound)"
        ));
        k = MAX_PARTITION_QUBITS;
    }
    let (parts, coverage) = partition(circuit, k)?;

    let results: Vec<(Circuit, usize, Option<String>)> = parts
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let mut pcfg = cfg.clone();
            pcfg.k = k;
            pcfg.optimizer.seed = derive_seed(cfg.optimizer.seed, idx as u64);
            match delete_gates_pass(p, &pcfg) {
                Ok((block, deleted)) => (block, deleted, None),
                Err(e) => (p.block.clone(), 0, Some(e.to_string())),
            }
        })
        .collect();

    // Merge: each block's gates re-enter at the position of the partition's
    // first owned gate, relabeled back onto the original qubits. Deferred
    // gates that sit inside a partition's span never touch its qubits, so
    // this placement preserves the whole-circuit unitary.
    let mut owner: Vec<Option<usize>> = vec![None; circuit.len()];
    for (pidx, p) in parts.iter().enumerate() {
        for &g in &p.gate_indices {
            owner[g] = Some(pidx);
        }
    }
    let mut merged = Circuit::new(circuit.qubits());
    for (idx, own) in owner.iter().enumerate() {
        match *own {
            Some(pidx) if parts[pidx].first_gate() == idx => {
                let p = &parts[pidx];
                let block = &results[pidx].0;
                for g in block.gates() {
                    let loc: Vec<usize> =
                        g.location().iter().map(|&l| p.qubit_subset[l]).collect();
                    merged.push(Gate::new(
                        loc,
                        g.kind(),
                        g.unitary().clone(),
                        g.label().map(str::to_string),
                    )?)?;
                }
            }
            Some(_) => {}
            None => merged.push(circuit.gate(idx).clone())?,
        }
    }

    let per_partition: Vec<PartitionOutcome> = parts
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(index, (p, (block, deleted, skipped)))| PartitionOutcome {
            index,
            qubits: p.qubit_subset.len(),
            gates_before: p.block.len(),
            gates_after: block.len(),
            deleted: *deleted,
            skipped: skipped.clone(),
        })
        .collect();
    for outcome in &per_partition {
        if let Some(msg) = &outcome.skipped {
            warnings.push(format!("partition {} skipped: {msg}", outcome.index));
        }
    }

    let verified_distance = if circuit.qubits() <= MAX_VERIFY_QUBITS {
        Some(frobenius_cost(&circuit.unitary()?, &merged)?)
    } else {
        None
    };

    let report = ResynthReport {
        u3_before: count_label(circuit, "u3"),
        u3_after: count_label(&merged, "u3"),
        cnot_before: count_label(circuit, "cx"),
        cnot_after: count_label(&merged, "cx"),
        gates_before: circuit.len(),
        gates_after: merged.len(),
        deleted_gates: circuit.len() - merged.len(),
        partitions: parts.len(),
        modified_partitions: per_partition.iter().filter(|o| o.deleted > 0).count(),
        requested_k: cfg.k,
        effective_k: k,
        warnings,
        verified_distance,
        coverage,
        per_partition,
        timing: ResynthTiming {
            runtime_s: started.elapsed().as_secs_f64(),
        },
    };
    Ok((merged, report))
}

fn count_label(circuit: &Circuit, label: &str) -> usize {
    circuit
        .gates()
        .iter()
        .filter(|g| g.label() == Some(label))
        .count()
}
