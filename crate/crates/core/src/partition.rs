//! Load-balanced partitioning of the 1-D element chain.
//!
//! All three partitioners cut the global element ordering into `np` contiguous
//! ranges so that per-range load sums come out even, subject to a hard
//! per-rank capacity `lelt`:
//!
//! * [`partition_centralized`] — one pass over the full prefix-sum array,
//!   cutting at the prefix nearest each threshold `i * total / np`.
//! * [`partition_distributed`] — SPMD over the rank ensemble: local prefix
//!   sums shifted by an exclusive scan, a per-element quotient assignment,
//!   a nearest-neighbour boundary exchange, and an allgather of range starts.
//! * [`partition_hybrid`] — the distributed assignment stages, but fragments
//!   are routed to rank 0 which assembles, applies the capacity fix, and
//!   broadcasts. Bit-identical to the distributed result by construction.
//!
//! Capacity handling differs deliberately: the centralized cutter forces
//! oversize cuts *while* cutting, the other two fix the assembled map in a
//! post-pass ([`enforce_lelt`]). Either way, overflow that cannot be pushed
//! anywhere ends in [`Error::Infeasible`].

use crate::comm::{RankCtx, RankEnsemble};
use crate::error::{Error, Result};
use crate::load::ElementLoadArray;
use crate::mesh::GlobalElementIndex;

/// Rank count and per-rank element capacity for one partitioning call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionConfig {
    pub np: usize,
    /// Maximum elements one rank may own.
    pub lelt: usize,
}

impl PartitionConfig {
    pub fn new(np: usize, lelt: usize) -> Self {
        PartitionConfig { np, lelt }
    }

    /// Hard feasibility: `np * lelt >= nelgt` or no map exists at all.
    pub fn check_feasible(&self, nelgt: usize) -> Result<()> {
        if self.np == 0 {
            return Err(Error::invalid("np must be >= 1"));
        }
        if self.lelt == 0 {
            return Err(Error::invalid("lelt must be >= 1"));
        }
        if self.np * self.lelt < nelgt {
            return Err(Error::infeasible(
                self.np - 1,
                format!(
                    "np * lelt = {} * {} = {} cannot hold {} elements",
                    self.np,
                    self.lelt,
                    self.np * self.lelt,
                    nelgt
                ),
            ));
        }
        Ok(())
    }
}

/// Running totals over the loads of elements `1..=p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSum {
    sums: Vec<f64>,
}

impl PrefixSum {
    /// Build from loads listed in global-index order.
    pub fn new(loads: &[f64]) -> Self {
        let mut sums = Vec::with_capacity(loads.len());
        let mut acc = 0.0;
        for &l in loads {
            acc += l;
            sums.push(acc);
        }
        PrefixSum { sums }
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    /// Sum of loads of elements `1..=p`; `value(0) == 0`.
    #[inline]
    pub fn value(&self, p: usize) -> f64 {
        if p == 0 {
            0.0
        } else {
            self.sums[p - 1]
        }
    }

    pub fn total(&self) -> f64 {
        self.value(self.len())
    }

    /// 1-based position of the first prefix strictly exceeding `threshold`,
    /// or `len` when none does.
    pub fn first_exceeding(&self, threshold: f64) -> usize {
        let p = self.sums.partition_point(|&s| s <= threshold) + 1;
        p.min(self.len())
    }
}

/// Assignment of the element chain to ranks as contiguous ranges.
///
/// `first_element[k]` is the index of rank k's first element; rank k owns
/// `first_element[k] ..= first_element[k+1] - 1` (the last rank runs to
/// `nelgt`). Equal neighbouring entries mean an empty rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementProcessorMap {
    first_element: Vec<u32>,
    nelgt: u32,
}

impl ElementProcessorMap {
    /// Validated constructor: entries must start at 1, be non-decreasing, and
    /// stay within `nelgt + 1`.
    pub fn new(first_element: Vec<u32>, nelgt: usize) -> Result<Self> {
        if first_element.is_empty() {
            return Err(Error::invalid("map needs at least one rank"));
        }
        if first_element[0] != 1 {
            return Err(Error::invalid(format!(
                "first rank must start at element 1, got {}",
                first_element[0]
            )));
        }
        for w in first_element.windows(2) {
            if w[1] < w[0] {
                return Err(Error::invalid("first_element must be non-decreasing"));
            }
        }
        let last = *first_element.last().unwrap();
        if last as usize > nelgt + 1 {
            return Err(Error::invalid(format!(
                "first_element {last} exceeds nelgt + 1 = {}",
                nelgt + 1
            )));
        }
        Ok(ElementProcessorMap {
            first_element,
            nelgt: nelgt as u32,
        })
    }

    /// Near-even contiguous split: the initial assignment before any
    /// balancing.
    pub fn uniform(np: usize, nelgt: usize) -> Self {
        let first_element = (0..np).map(|k| (k * nelgt / np) as u32 + 1).collect();
        ElementProcessorMap {
            first_element,
            nelgt: nelgt as u32,
        }
    }

    #[inline]
    pub fn np(&self) -> usize {
        self.first_element.len()
    }

    #[inline]
    pub fn nelgt(&self) -> usize {
        self.nelgt as usize
    }

    pub fn first_elements(&self) -> &[u32] {
        &self.first_element
    }

    /// Inclusive element range owned by `rank`; `None` when empty.
    pub fn range(&self, rank: usize) -> Option<(u32, u32)> {
        let start = self.first_element[rank];
        let end = if rank + 1 < self.first_element.len() {
            self.first_element[rank + 1] - 1
        } else {
            self.nelgt
        };
        (start <= end).then_some((start, end))
    }

    pub fn size(&self, rank: usize) -> usize {
        self.range(rank).map_or(0, |(s, e)| (e - s + 1) as usize)
    }

    /// Rank owning `element`.
    pub fn owner_of(&self, element: GlobalElementIndex) -> usize {
        let e = element.get();
        debug_assert!(e >= 1 && e <= self.nelgt);
        // Last rank whose first element is <= e.
        self.first_element.partition_point(|&f| f <= e) - 1
    }

    /// Check the structural invariants against a capacity config.
    pub fn validate(&self, cfg: &PartitionConfig) -> Result<()> {
        if self.np() != cfg.np {
            return Err(Error::contract(format!(
                "map has {} ranks, config expects {}",
                self.np(),
                cfg.np
            )));
        }
        for rank in 0..self.np() {
            if self.size(rank) > cfg.lelt {
                return Err(Error::infeasible(
                    rank,
                    format!(
                        "rank {rank} holds {} > lelt = {}",
                        self.size(rank),
                        cfg.lelt
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Clamp every rank to at most `lelt` elements by pushing overflow rightward.
///
/// A single left-to-right sweep: any oversize rank keeps its first `lelt`
/// elements and shifts the rest onto its successor. Overflow reaching past
/// the last rank is an infeasibility error naming that rank.
pub fn enforce_lelt(
    first_element: &[u32],
    nelgt: usize,
    cfg: &PartitionConfig,
) -> Result<Vec<u32>> {
    let np = first_element.len();
    let mut out = first_element.to_vec();
    for k in 0..np {
        let start = out[k] as usize;
        let end = if k + 1 < np {
            out[k + 1] as usize - 1
        } else {
            nelgt
        };
        let size = (end + 1).saturating_sub(start);
        if size > cfg.lelt {
            if k + 1 == np {
                return Err(Error::infeasible(
                    k,
                    format!(
                        "last rank left with {size} elements > lelt = {} after capacity sweep",
                        cfg.lelt
                    ),
                ));
            }
            out[k + 1] = (start + cfg.lelt) as u32;
        }
    }
    Ok(out)
}

fn as_global_loads(loads: &ElementLoadArray) -> Result<Vec<f64>> {
    // The cutter wants loads in global-index order covering 1..=nelgt.
    let n = loads.len();
    let mut ordered = vec![f64::NAN; n];
    for (gid, &l) in loads.global_ids.iter().zip(&loads.loads) {
        let idx = gid.get() as usize;
        if idx == 0 || idx > n || !ordered[idx - 1].is_nan() {
            return Err(Error::contract(
                "global load array must cover 1..=nelgt exactly once".to_string(),
            ));
        }
        ordered[idx - 1] = l;
    }
    Ok(ordered)
}

/// Cut the full chain on one rank: thresholds at `i * total / np`, each cut at
/// the prefix nearest its threshold, oversize cuts forced at `lelt`.
///
/// Pure: same loads, same map, no ensemble involved.
pub fn partition_centralized(
    loads: &ElementLoadArray,
    cfg: &PartitionConfig,
) -> Result<ElementProcessorMap> {
    let nelgt = loads.len();
    cfg.check_feasible(nelgt)?;
    let ordered = as_global_loads(loads)?;
    let prefix = PrefixSum::new(&ordered);
    let total = prefix.total();
    let mut first = Vec::with_capacity(cfg.np);
    first.push(1u32);
    let mut lp = 0usize; // elements consumed by ranks cut so far
    for i in 1..cfg.np {
        let threshold = i as f64 * total / cfg.np as f64;
        let p = prefix.first_exceeding(threshold);
        let d1 = threshold - prefix.value(p - 1);
        let d2 = prefix.value(p) - threshold;
        let mut cut = if d1 < d2 { p - 1 } else { p };
        debug_assert!(cut >= lp, "cuts must advance monotonically");
        if cut - lp > cfg.lelt {
            // Capacity reached before the threshold: place the cut here.
            cut = lp + cfg.lelt;
        }
        first.push(cut as u32 + 1);
        lp = cut;
    }
    if nelgt - lp > cfg.lelt {
        return Err(Error::infeasible(
            cfg.np - 1,
            format!(
                "last rank left with {} elements > lelt = {} after forced cuts",
                nelgt - lp,
                cfg.lelt
            ),
        ));
    }
    ElementProcessorMap::new(first, nelgt)
}

/// Owned-range loads a rank contributes to a distributed partitioning call.
fn check_rank_inputs(local_loads: &[ElementLoadArray]) -> Result<usize> {
    let mut expect = 1u32;
    for (rank, arr) in local_loads.iter().enumerate() {
        for gid in &arr.global_ids {
            if gid.get() != expect {
                return Err(Error::contract(format!(
                    "rank {rank} supplies element {} where {} was expected; \
                     local loads must tile 1..=nelgt in rank order",
                    gid.get(),
                    expect
                )));
            }
            expect += 1;
        }
    }
    Ok(expect as usize - 1)
}

/// One rank's slice of the assignment stage: global prefix sums via exscan,
/// per-element quotient assignment, neighbour exchange, and the (processor,
/// first element) fragments this rank can name.
fn assignment_fragments(
    ctx: &mut RankCtx,
    my: &ElementLoadArray,
    np_target: usize,
) -> Vec<(u32, u32)> {
    let local_total: f64 = my.loads.iter().sum();
    let offset = ctx.exscan_sum(local_total);
    let elems_before = ctx.exscan_sum(my.loads.len() as f64) as usize;
    let comm_np = ctx.np();
    let total = ctx.broadcast(
        comm_np - 1,
        (ctx.rank() == comm_np - 1).then_some(offset + local_total),
    );
    let loadavg = total / np_target as f64;
    let proc_of = |prefix: f64| -> u32 {
        let q = ((prefix - 1.0) / loadavg).floor();
        (q.max(0.0) as usize).min(np_target - 1) as u32
    };

    let mut gprefix = Vec::with_capacity(my.loads.len());
    let mut acc = offset;
    for &l in &my.loads {
        acc += l;
        gprefix.push(acc);
    }
    let assign: Vec<u32> = gprefix.iter().map(|&p| proc_of(p)).collect();

    // Tell the right-hand neighbour which processor the element before its
    // range went to. A rank that owns nothing forwards the assignment of the
    // last element before it (its prefix offset is exactly that element's);
    // the chain's very first owner gets no message at all.
    let last_assign = match assign.last() {
        Some(&last) => Some(last),
        None if elems_before > 0 => Some(proc_of(offset)),
        None => None,
    };
    let outbound = match (last_assign, ctx.rank() + 1 < comm_np) {
        (Some(last), true) => vec![(ctx.rank() + 1, last)],
        _ => Vec::new(),
    };
    let inbound = ctx.route(outbound);
    let recv_assign: Option<u32> = inbound.first().map(|&(_, a)| a);

    let mut fragments = Vec::new();
    for (j, (&gid, &proc)) in my.global_ids.iter().zip(&assign).enumerate() {
        let boundary = if j == 0 {
            match recv_assign {
                None => true, // rank 0 (or empty predecessors): chain start
                Some(prev) => prev != proc,
            }
        } else {
            assign[j - 1] != proc
        };
        if boundary {
            fragments.push((proc, gid.get()));
        }
    }
    fragments
}

/// Assemble a first-element vector from (processor, first element) fragments.
///
/// Processors that never appear own nothing and inherit their successor's
/// start; the chain is anchored at `nelgt + 1` past the last rank.
fn assemble_first_elements(fragments: &[(u32, u32)], np: usize, nelgt: usize) -> Result<Vec<u32>> {
    let mut starts: Vec<Option<u32>> = vec![None; np];
    for &(proc, gid) in fragments {
        let p = proc as usize;
        if p >= np {
            return Err(Error::contract(format!(
                "fragment names processor {p} out of range"
            )));
        }
        if starts[p].replace(gid).is_some() {
            return Err(Error::contract(format!(
                "processor {p} named twice in assignment fragments"
            )));
        }
    }
    let mut first = vec![0u32; np];
    let mut next = nelgt as u32 + 1;
    for k in (0..np).rev() {
        first[k] = starts[k].unwrap_or(next);
        next = first[k];
    }
    debug_assert_eq!(first[0], 1);
    Ok(first)
}

/// Distributed partitioner plus the pre-capacity assignment, for callers that
/// want to inspect the raw quotient cut before [`enforce_lelt`] runs.
pub fn partition_distributed_with_raw(
    ens: &RankEnsemble,
    local_loads: &[ElementLoadArray],
    cfg: &PartitionConfig,
) -> Result<(Vec<u32>, ElementProcessorMap)> {
    let nelgt = check_rank_inputs(local_loads)?;
    cfg.check_feasible(nelgt)?;
    assert_eq!(
        ens.np(),
        local_loads.len(),
        "one load slice per ensemble rank"
    );
    let results = ens.run_with(local_loads.iter().collect::<Vec<_>>(), |ctx, my| {
        let fragments = assignment_fragments(ctx, my, cfg.np);
        // Everybody learns every boundary, then fixes capacity locally;
        // identical inputs give identical maps on all ranks.
        let all = ctx.allgatherv(fragments);
        let raw = assemble_first_elements(&all, cfg.np, nelgt)?;
        let fixed = enforce_lelt(&raw, nelgt, cfg)?;
        Ok((raw, ElementProcessorMap::new(fixed, nelgt)?))
    });
    let mut iter = results.into_iter();
    let first: Result<(Vec<u32>, ElementProcessorMap)> = iter.next().unwrap();
    for other in iter {
        debug_assert_eq!(
            format!("{other:?}"),
            format!("{first:?}"),
            "ranks must agree on the assembled map"
        );
    }
    first
}

/// Cut the chain collectively; every rank contributes its local loads and all
/// ranks return the same map.
pub fn partition_distributed(
    ens: &RankEnsemble,
    local_loads: &[ElementLoadArray],
    cfg: &PartitionConfig,
) -> Result<ElementProcessorMap> {
    partition_distributed_with_raw(ens, local_loads, cfg).map(|(_, map)| map)
}

/// Distributed assignment stages with centralized assembly: fragments go to
/// rank 0, which assembles the map, applies the capacity fix, and broadcasts.
pub fn partition_hybrid(
    ens: &RankEnsemble,
    local_loads: &[ElementLoadArray],
    cfg: &PartitionConfig,
) -> Result<ElementProcessorMap> {
    let nelgt = check_rank_inputs(local_loads)?;
    cfg.check_feasible(nelgt)?;
    assert_eq!(
        ens.np(),
        local_loads.len(),
        "one load slice per ensemble rank"
    );
    let results = ens.run_with(local_loads.iter().collect::<Vec<_>>(), |ctx, my| {
        let fragments = assignment_fragments(ctx, my, cfg.np);
        let tagged: Vec<(usize, (u32, u32))> = fragments.into_iter().map(|f| (0usize, f)).collect();
        let inbound = ctx.route(tagged);
        let assembled: Option<std::result::Result<Vec<u32>, Error>> =
            (ctx.rank() == 0).then(|| {
                let frags: Vec<(u32, u32)> = inbound.into_iter().map(|(_, f)| f).collect();
                let raw = assemble_first_elements(&frags, cfg.np, nelgt)?;
                enforce_lelt(&raw, nelgt, cfg)
            });
        match ctx.broadcast(0, assembled) {
            Ok(first) => ElementProcessorMap::new(first, nelgt),
            Err(e) => Err(e),
        }
    });
    results.into_iter().next().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::ExecMode;
    use crate::load::ElementLoadArray;

    /// Scattered-particle strip reconstructed from the worked example:
    /// per-element particle counts (1,1,1,3,5,6,6,7,3,1,1,1) plus a fluid
    /// cost of 3 per element.
    pub(crate) fn strip_loads() -> ElementLoadArray {
        let loads = [4.0, 4.0, 4.0, 6.0, 8.0, 9.0, 9.0, 10.0, 6.0, 4.0, 4.0, 4.0];
        ElementLoadArray::global(loads.to_vec())
    }

    fn split_by_map(loads: &ElementLoadArray, map: &ElementProcessorMap) -> Vec<ElementLoadArray> {
        (0..map.np())
            .map(|rank| {
                let (ids, ls): (Vec<_>, Vec<_>) = loads
                    .global_ids
                    .iter()
                    .zip(&loads.loads)
                    .filter(|(g, _)| map.owner_of(**g) == rank)
                    .map(|(g, l)| (*g, *l))
                    .unzip();
                ElementLoadArray::new(ids, ls).unwrap()
            })
            .collect()
    }

    #[test]
    fn prefix_sums_match_hand_computed_strip() {
        let prefix = PrefixSum::new(&strip_loads().loads);
        let expect = [
            4.0, 8.0, 12.0, 18.0, 26.0, 35.0, 44.0, 54.0, 60.0, 64.0, 68.0, 72.0,
        ];
        for (p, &e) in (1..=12).zip(&expect) {
            assert_eq!(prefix.value(p), e);
        }
        assert_eq!(prefix.total(), 72.0);
        assert_eq!(prefix.value(0), 0.0);
    }

    #[test]
    fn centralized_cuts_nearest_prefix() {
        let map = partition_centralized(&strip_loads(), &PartitionConfig::new(3, 12)).unwrap();
        // threshold 24 -> prefix 26 at element 5 (d1=6, d2=2): cut after 5;
        // threshold 48 -> prefix 54 at element 8 (d1=4, d2=6): cut before 8.
        assert_eq!(map.first_elements(), &[1, 6, 8]);
        assert_eq!(map.range(0), Some((1, 5)));
        assert_eq!(map.range(1), Some((6, 7)));
        assert_eq!(map.range(2), Some((8, 12)));
    }

    #[test]
    fn centralized_cut_lands_on_exact_threshold_hit() {
        let loads = ElementLoadArray::global(vec![2.0, 2.0, 2.0, 2.0]);
        let map = partition_centralized(&loads, &PartitionConfig::new(2, 4)).unwrap();
        // threshold = 4 equals prefix(2): the first *strictly* exceeding
        // position is 3, and d1 = 0 < d2 = 2 pulls the cut back onto the
        // exact hit.
        assert_eq!(map.first_elements(), &[1, 3]);
    }

    #[test]
    fn centralized_equal_distances_cut_at_the_exceeding_position() {
        let loads = ElementLoadArray::global(vec![1.0, 2.0, 1.0]);
        let map = partition_centralized(&loads, &PartitionConfig::new(2, 3)).unwrap();
        // threshold = 2 sits midway between prefix(1) = 1 and prefix(2) = 3;
        // d1 == d2 keeps element 2 in the first range.
        assert_eq!(map.first_elements(), &[1, 3]);
    }

    #[test]
    fn centralized_forces_cut_at_capacity() {
        // Light head, heavy tail: the first threshold wants 5 elements but
        // capacity forces the cut at 3.
        let loads = ElementLoadArray::global(vec![1.0, 1.0, 1.0, 1.0, 1.0, 19.0]);
        let map = partition_centralized(&loads, &PartitionConfig::new(3, 3)).unwrap();
        assert_eq!(map.first_elements(), &[1, 4, 7]);
        assert_eq!(map.size(2), 0);
    }

    #[test]
    fn centralized_cascade_overflow_is_infeasible() {
        // Feasible by np*lelt, but the forced cascade leaves the last rank
        // with 5 > 4 elements.
        let err = partition_centralized(&strip_loads(), &PartitionConfig::new(3, 4)).unwrap_err();
        match err {
            Error::Infeasible { rank, .. } => assert_eq!(rank, 2),
            other => panic!("expected infeasibility, got {other}"),
        }
    }

    #[test]
    fn capacity_product_too_small_is_infeasible_everywhere() {
        let cfg = PartitionConfig::new(3, 3);
        let loads = strip_loads();
        assert!(matches!(
            partition_centralized(&loads, &cfg),
            Err(Error::Infeasible { .. })
        ));
        let ens = RankEnsemble::new(3, ExecMode::Sequential);
        let locals = split_by_map(&loads, &ElementProcessorMap::uniform(3, 12));
        assert!(matches!(
            partition_distributed(&ens, &locals, &cfg),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            partition_hybrid(&ens, &locals, &cfg),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn distributed_matches_hand_computed_quotients() {
        for mode in [ExecMode::Sequential, ExecMode::Threaded] {
            let ens = RankEnsemble::new(3, mode);
            let loads = strip_loads();
            let locals = split_by_map(&loads, &ElementProcessorMap::uniform(3, 12));
            let (raw, map) =
                partition_distributed_with_raw(&ens, &locals, &PartitionConfig::new(3, 12))
                    .unwrap();
            // loadavg = 24; floor((prefix - 1) / 24) puts the range starts at
            // 1, 5 and 8.
            assert_eq!(raw, vec![1, 5, 8]);
            assert_eq!(map.first_elements(), &[1, 5, 8]);
            assert_eq!(map.range(1), Some((5, 7)));
        }
    }

    #[test]
    fn distributed_and_centralized_may_disagree() {
        let loads = strip_loads();
        let cfg = PartitionConfig::new(3, 12);
        let central = partition_centralized(&loads, &cfg).unwrap();
        let ens = RankEnsemble::new(3, ExecMode::Sequential);
        let locals = split_by_map(&loads, &ElementProcessorMap::uniform(3, 12));
        let dist = partition_distributed(&ens, &locals, &cfg).unwrap();
        assert_ne!(
            central, dist,
            "the two heuristics cut this strip differently"
        );
        let sizes: Vec<usize> = (0..3).map(|r| dist.size(r)).collect();
        assert_eq!(sizes, vec![4, 3, 5]);
    }

    #[test]
    fn distributed_capacity_overflow_is_infeasible() {
        let ens = RankEnsemble::new(3, ExecMode::Sequential);
        let loads = strip_loads();
        let locals = split_by_map(&loads, &ElementProcessorMap::uniform(3, 12));
        // Raw starts (1,5,8) leave the last rank 5 elements; lelt=4 cannot
        // absorb them anywhere.
        let err = partition_distributed(&ens, &locals, &PartitionConfig::new(3, 4)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { rank: 2, .. }));
    }

    #[test]
    fn hybrid_equals_distributed_on_the_strip() {
        for mode in [ExecMode::Sequential, ExecMode::Threaded] {
            let ens = RankEnsemble::new(3, mode);
            let loads = strip_loads();
            let locals = split_by_map(&loads, &ElementProcessorMap::uniform(3, 12));
            let cfg = PartitionConfig::new(3, 12);
            let dist = partition_distributed(&ens, &locals, &cfg).unwrap();
            let hybrid = partition_hybrid(&ens, &locals, &cfg).unwrap();
            assert_eq!(dist, hybrid);
        }
    }

    #[test]
    fn enforce_lelt_examples() {
        let cfg = PartitionConfig::new(3, 5);
        assert_eq!(enforce_lelt(&[1, 5, 8], 12, &cfg).unwrap(), vec![1, 5, 8]);
        assert_eq!(enforce_lelt(&[1, 8, 10], 12, &cfg).unwrap(), vec![1, 6, 10]);
        let err = enforce_lelt(&[1, 2, 3], 12, &PartitionConfig::new(3, 4)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { rank: 2, .. }));
    }

    #[test]
    fn enforce_lelt_cascades_rightward() {
        let cfg = PartitionConfig::new(4, 3);
        // Sizes (6,1,2,3): rank 0's overflow spills into rank 1, which then
        // overflows in turn; two truncations settle at (3,3,3,3).
        assert_eq!(
            enforce_lelt(&[1, 7, 8, 10], 12, &cfg).unwrap(),
            vec![1, 4, 7, 10]
        );
        // Sizes (5,1,1,5): the head truncates fine, but the tail's overflow
        // has nowhere to go -- boundaries only ever move left, so the sweep
        // cannot refill the slack in ranks 1..2.
        let err = enforce_lelt(&[1, 6, 7, 8], 12, &cfg).unwrap_err();
        assert!(matches!(err, Error::Infeasible { rank: 3, .. }));
    }

    #[test]
    fn uniform_map_splits_evenly() {
        let map = ElementProcessorMap::uniform(3, 12);
        assert_eq!(map.first_elements(), &[1, 5, 9]);
        let map = ElementProcessorMap::uniform(4, 10);
        let sizes: Vec<usize> = (0..4).map(|r| map.size(r)).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
    }

    #[test]
    fn owner_lookup_brackets_ranges() {
        let map = ElementProcessorMap::new(vec![1, 6, 8], 12).unwrap();
        assert_eq!(map.owner_of(GlobalElementIndex(1)), 0);
        assert_eq!(map.owner_of(GlobalElementIndex(5)), 0);
        assert_eq!(map.owner_of(GlobalElementIndex(6)), 1);
        assert_eq!(map.owner_of(GlobalElementIndex(7)), 1);
        assert_eq!(map.owner_of(GlobalElementIndex(8)), 2);
        assert_eq!(map.owner_of(GlobalElementIndex(12)), 2);
    }

    #[test]
    fn map_constructor_rejects_malformed_vectors() {
        assert!(ElementProcessorMap::new(vec![], 5).is_err());
        assert!(ElementProcessorMap::new(vec![2, 3], 5).is_err());
        assert!(ElementProcessorMap::new(vec![1, 4, 3], 5).is_err());
        assert!(ElementProcessorMap::new(vec![1, 9], 5).is_err());
        // Empty trailing rank is fine.
        let map = ElementProcessorMap::new(vec![1, 6, 6], 5).unwrap();
        assert_eq!(map.size(1), 0);
        assert_eq!(map.size(2), 0);
    }

    #[test]
    fn centralized_scale_invariance_under_power_of_two() {
        let loads = strip_loads();
        let cfg = PartitionConfig::new(3, 12);
        let base = partition_centralized(&loads, &cfg).unwrap();
        for scale in [0.25, 0.5, 2.0, 8.0] {
            let scaled =
                ElementLoadArray::global(loads.loads.iter().map(|l| l * scale).collect::<Vec<_>>());
            assert_eq!(partition_centralized(&scaled, &cfg).unwrap(), base);
        }
    }

    proptest::proptest! {
        #[test]
        fn random_instances_produce_valid_maps(
            seed in 0u64..400,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let np = rng.gen_range(1..=8usize);
            let nelgt = rng.gen_range(np..=60.max(np));
            let lelt = rng.gen_range(nelgt.div_ceil(np)..=nelgt);
            let cfg = PartitionConfig::new(np, lelt);
            let loads = ElementLoadArray::global(
                (0..nelgt).map(|_| rng.gen_range(0..40) as f64 + 3.0).collect::<Vec<_>>(),
            );
            let check = |map: &ElementProcessorMap| {
                map.validate(&cfg).unwrap();
                let covered: usize = (0..np).map(|r| map.size(r)).sum();
                assert_eq!(covered, nelgt);
            };
            if let Ok(map) = partition_centralized(&loads, &cfg) {
                check(&map);
            }
            let ens = RankEnsemble::new(np, ExecMode::Sequential);
            let locals = split_by_map(&loads, &ElementProcessorMap::uniform(np, nelgt));
            match (partition_distributed(&ens, &locals, &cfg), partition_hybrid(&ens, &locals, &cfg)) {
                (Ok(d), Ok(h)) => {
                    check(&d);
                    assert_eq!(d, h);
                }
                (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {}
                (d, h) => panic!("distributed/hybrid disagree: {d:?} vs {h:?}"),
            }
        }
    }
}
