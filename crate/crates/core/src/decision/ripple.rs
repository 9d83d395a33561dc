//! Ripple resolution: moving VNFs of services that are not being shifted so
//! that a transition which does not fit can go ahead.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::plan::{prepare, prepare_with, Migration, Prepared, TransitionPlan, World};
use crate::placement::{evaluate_kpis, route_vlink, Placement};
use crate::servicemodel::VLinkKey;
use crate::topology::CapacityView;

/// At most this many foreign VNFs (smallest first) are considered for moving.
pub const RIPPLE_POOL: usize = 16;

/// A search gives up after this many complete plans were turned down by
/// its acceptance test.
pub const RIPPLE_REJECT_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no set of at most {depth_limit} migrations makes room for {service:?}")]
pub struct RippleExhausted {
    pub service: String,
    pub depth_limit: usize,
}

/// A VNF of another service that could be moved.
#[derive(Debug, Clone, PartialEq)]
pub struct ForeignVnf {
    pub service: String,
    pub vnf: String,
    pub node: String,
    pub cpu: f64,
    pub mem: f64,
}

/// Movable VNFs of idle services other than `service`, sorted by
/// (cpu, mem, service, vnf). Broken services are included: moving one of
/// their VNFs may be exactly what repairs them.
pub fn foreign_vnfs(world: &World, service: &str) -> Vec<ForeignVnf> {
    let mut out = Vec::new();
    for (sid, d) in &world.deployments {
        if sid == service || world.in_flight.contains(sid) {
            continue;
        }
        for (vnf, node) in &d.placement.vnf_map {
            let dem = d.vnf_demand[vnf];
            out.push(ForeignVnf { service: sid.clone(), vnf: vnf.clone(), node: node.clone(), cpu: dem.cpu, mem: dem.mem });
        }
    }
    out.sort_by(|a, b| {
        a.cpu
            .total_cmp(&b.cpu)
            .then(a.mem.total_cmp(&b.mem))
            .then_with(|| a.service.cmp(&b.service))
            .then_with(|| a.vnf.cmp(&b.vnf))
    });
    out.truncate(RIPPLE_POOL);
    out
}

/// Finds the smallest set of foreign migrations (at most `depth_limit`)
/// after which `service` can move to `to_level`.
///
/// Sets are tried by increasing size and, within a size, in lexicographic
/// order of the sorted foreign VNFs. For each set the target graph is
/// placed first (exactly, when small), then every assignment of the moved
/// VNFs to other nodes is tried; migrated services must end up feasible
/// and keep their delay KPI.
pub fn resolve_ripple(
    world: &World,
    service: &str,
    to_level: usize,
    depth_limit: usize,
) -> Result<TransitionPlan, RippleExhausted> {
    resolve_ripple_where(world, service, to_level, depth_limit, &|_| true)
}

/// As [`resolve_ripple`], skipping plans that `accept` rejects. Gives up
/// once [`RIPPLE_REJECT_LIMIT`] plans were skipped.
pub fn resolve_ripple_where(
    world: &World,
    service: &str,
    to_level: usize,
    depth_limit: usize,
    accept: &dyn Fn(&TransitionPlan) -> bool,
) -> Result<TransitionPlan, RippleExhausted> {
    let exhausted = || RippleExhausted { service: service.to_string(), depth_limit };
    if depth_limit == 0 {
        return Err(exhausted());
    }
    let pool = foreign_vnfs(world, service);
    let base = world.residual_without(service);
    let report = world.feasibility();
    let broken: BTreeSet<&str> =
        world.deployments.keys().filter(|s| world.is_broken(s, &report)).map(String::as_str).collect();
    let rejected = Cell::new(0);
    let ctx = Ctx { world, service, to_level, base: &base, pool: &pool, broken: &broken, accept, rejected: &rejected };
    for k in 0..=depth_limit.min(pool.len()) {
        let mut found = None;
        for_each_subset(pool.len(), k, &mut |subset| {
            found = try_subset(&ctx, subset);
            found.is_some() || rejected.get() >= RIPPLE_REJECT_LIMIT
        });
        if let Some(plan) = found {
            return Ok(plan);
        }
    }
    Err(exhausted())
}

/// Calls `f` on every k-subset of 0..n in lexicographic order until it
/// returns true.
fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..n {
            cur.push(i);
            if go(i + 1, n, k, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    go(0, n, k, &mut Vec::with_capacity(k), f);
}

struct Ctx<'a> {
    world: &'a World<'a>,
    service: &'a str,
    to_level: usize,
    base: &'a CapacityView,
    pool: &'a [ForeignVnf],
    /// Services already broken; every route of theirs that is touched by a
    /// migration is recomputed.
    broken: &'a BTreeSet<&'a str>,
    accept: &'a dyn Fn(&TransitionPlan) -> bool,
    rejected: &'a Cell<usize>,
}

fn try_subset(ctx: &Ctx, subset: &[usize]) -> Option<TransitionPlan> {
    let world = ctx.world;
    let moved: Vec<&ForeignVnf> = subset.iter().map(|i| &ctx.pool[*i]).collect();
    let mut freed = ctx.base.clone();
    let mut moved_by_service: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for m in &moved {
        freed.adjust_vnf(&m.node, m.cpu, m.mem);
        moved_by_service.entry(&m.service).or_default().insert(&m.vnf);
    }
    // routes to be recomputed give their bandwidth back
    for svc in moved_by_service.keys() {
        let d = &world.deployments[*svc];
        for (key, path) in &d.placement.route_map {
            if rerouted(ctx, svc, &moved_by_service[svc], key) {
                freed.adjust_path(path, d.vlink_bw[key]);
            }
        }
    }

    let scale = world.deployments.get(ctx.service).map_or(1.0, |d| d.scale);
    let prep = prepare(world, ctx.service, ctx.to_level, scale, &freed).ok()?;
    let nodes = world.infra.up_node_ids();
    // the target only takes capacity away: if the moved VNFs find no home
    // now, no embedding of it will help
    let mut scratch = vec![0usize; moved.len()];
    assign(ctx, &moved, &moved_by_service, &nodes, &freed, 0, &mut scratch)?;
    let attempt = |prep: &Prepared, placement: Placement| -> Option<TransitionPlan> {
        let (mut plan, after) = prep.finish(placement);
        let mut choice = vec![0usize; moved.len()];
        let placements = assign(ctx, &moved, &moved_by_service, &nodes, &after, 0, &mut choice)?;
        plan.ripple_migrations = moved
            .iter()
            .zip(&choice)
            .map(|(m, c)| Migration {
                service: m.service.clone(),
                vnf: m.vnf.clone(),
                from: m.node.clone(),
                to: nodes[*c].to_string(),
            })
            .collect();
        plan.ripple_placements = placements;
        if (ctx.accept)(&plan) {
            return Some(plan);
        }
        ctx.rejected.set(ctx.rejected.get() + 1);
        None
    };
    // the greedy embedding first; if the moved VNFs do not fit around it,
    // every exact embedding (small instances only)
    let greedy = prep.greedy(world).ok();
    if let Some(plan) = greedy.clone().and_then(|p| attempt(&prep, p)) {
        return Some(plan);
    }
    let mut found = None;
    prep.for_each_exact(world, &mut |p| {
        if greedy.as_ref() == Some(&p) {
            return false;
        }
        found = attempt(&prep, p);
        found.is_some() || ctx.rejected.get() >= RIPPLE_REJECT_LIMIT
    });
    if found.is_none() && prep.has_pins() && ctx.rejected.get() < RIPPLE_REJECT_LIMIT {
        // last resort: shared VNFs may move too
        let loose = prepare_with(world, ctx.service, ctx.to_level, scale, &freed, false).ok()?;
        loose.for_each_exact(world, &mut |p| {
            found = attempt(&loose, p);
            found.is_some() || ctx.rejected.get() >= RIPPLE_REJECT_LIMIT
        });
    }
    found
}

/// Whether the route of `key` in `svc` is recomputed when `moved` VNFs of
/// it migrate: always for a broken service, else only when an end moves.
fn rerouted(ctx: &Ctx, svc: &str, moved: &BTreeSet<&str>, key: &VLinkKey) -> bool {
    ctx.broken.contains(svc) || moved.contains(key.src.as_str()) || moved.contains(key.dst.as_str())
}

/// Depth-first over node choices for the moved VNFs; a VNF never stays on
/// its current node.
fn assign(
    ctx: &Ctx,
    moved: &[&ForeignVnf],
    by_service: &BTreeMap<&str, BTreeSet<&str>>,
    nodes: &[&str],
    residual: &CapacityView,
    idx: usize,
    choice: &mut Vec<usize>,
) -> Option<BTreeMap<String, Placement>> {
    if idx == moved.len() {
        return reroute(ctx, moved, by_service, nodes, residual, choice);
    }
    let m = moved[idx];
    for (ni, n) in nodes.iter().enumerate() {
        if *n == m.node || !residual.fits_vnf(n, m.cpu, m.mem) {
            continue;
        }
        let mut next = residual.clone();
        next.adjust_vnf(n, -m.cpu, -m.mem);
        choice[idx] = ni;
        if let Some(p) = assign(ctx, moved, by_service, nodes, &next, idx + 1, choice) {
            return Some(p);
        }
    }
    None
}

fn reroute(
    ctx: &Ctx,
    moved: &[&ForeignVnf],
    by_service: &BTreeMap<&str, BTreeSet<&str>>,
    nodes: &[&str],
    residual: &CapacityView,
    choice: &[usize],
) -> Option<BTreeMap<String, Placement>> {
    let world = ctx.world;
    let mut work = residual.clone();
    let mut out = BTreeMap::new();
    for (svc, vnfs) in by_service {
        let d = &world.deployments[*svc];
        let mut placement = d.placement.clone();
        for (m, c) in moved.iter().zip(choice) {
            if m.service == *svc {
                placement.vnf_map.insert(m.vnf.clone(), nodes[*c].to_string());
            }
        }
        if placement.vnf_map.values().any(|n| !world.infra.is_node_up(n)) {
            return None;
        }
        for key in d.placement.route_map.keys() {
            if !rerouted(ctx, svc, vnfs, key) {
                continue;
            }
            let need = d.vlink_bw[key];
            let path =
                route_vlink(world.infra, &work, &placement.vnf_map[&key.src], &placement.vnf_map[&key.dst], need).ok()?;
            work.adjust_path(&path, -need);
            placement.route_map.insert(key.clone(), path);
        }
        let spec = world.spec(svc);
        let kpi = evaluate_kpis(&placement, &spec.graphs[placement.graph_level], &spec.catalog, world.infra).ok()?;
        if !kpi.satisfied {
            return None;
        }
        out.insert(svc.to_string(), placement);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, &mut |s| {
            seen.push(s.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
