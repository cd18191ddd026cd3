"""Optimization decision logic: worked examples plus invariants.

Savings numbers live in the accounting tests; here we pin down the
decision rules themselves (who gets evicted, who gets cores, in what
order) and the onboarding registry contract.
"""

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hintfabric.hints import (
    HintSet,
    PreemptionPriority,
    ScalePreference,
    NotificationKind,
    UtilStats,
)
from hintfabric.ids import PRIORITY, FrequencyLevel, OptimizationId
from hintfabric.optimizers import (
    DuplicatePriorityError,
    OptimizerDescriptor,
    Registry,
    UnknownChannelError,
    UnknownResourceKindError,
    autoscale,
    builtin_registry,
    harvest,
    madc,
    overclock,
    oversub,
    preprovision,
    region,
    rightsize,
    spot,
    underclock,
)
from hintfabric.optimizers import registry as reg


# ---------------------------------------------------------------------------
# registry


def test_builtin_registry_matches_priority_table():
    r = builtin_registry()
    assert r.priorities() == {o.value: p for o, p in PRIORITY.items()}
    ordered = [d.optimization for d in r.all()]
    assert ordered == [
        "on_demand",
        "madc",
        "rightsizing",
        "oversubscription",
        "auto_scaling",
        "non_pre_provision",
        "region_agnostic",
        "underclocking",
        "overclocking",
        "spot_vms",
        "harvest_vms",
    ]


def test_consume_publish_matrix():
    r = builtin_registry()
    expected = {
        "on_demand": (set(), set()),
        "auto_scaling": ({reg.DEPLOY_SCALE_OUT_IN}, set()),
        "spot_vms": (
            {reg.DEPLOY_PREEMPTIBILITY, reg.RUNTIME_PREEMPTION_PRIORITY},
            {NotificationKind.PREEMPTION},
        ),
        "harvest_vms": (
            {
                reg.DEPLOY_PREEMPTIBILITY,
                reg.DEPLOY_SCALE_UP_DOWN,
                reg.RUNTIME_PREEMPTION_PRIORITY,
                reg.RUNTIME_SCALE_PREFERENCE,
            },
            {
                NotificationKind.PREEMPTION,
                NotificationKind.SCALE_UP,
                NotificationKind.SCALE_DOWN,
            },
        ),
        "overclocking": (
            {reg.DEPLOY_SCALE_UP_DOWN, reg.RUNTIME_SCALE_PREFERENCE},
            {NotificationKind.SCALE_UP},
        ),
        "underclocking": (
            {reg.DEPLOY_SCALE_UP_DOWN, reg.RUNTIME_SCALE_PREFERENCE},
            {NotificationKind.SCALE_DOWN},
        ),
        "non_pre_provision": ({reg.DEPLOY_DEPLOY_TIME}, set()),
        "region_agnostic": ({reg.DEPLOY_REGION_INDEPENDENCE}, set()),
        "oversubscription": (
            {
                reg.DEPLOY_SCALE_UP_DOWN,
                reg.DEPLOY_DELAY_TOLERANCE,
                reg.RUNTIME_SCALE_PREFERENCE,
            },
            set(),
        ),
        "rightsizing": (
            {reg.DEPLOY_SCALE_UP_DOWN, reg.DEPLOY_DELAY_TOLERANCE},
            set(),
        ),
        "madc": (
            {reg.DEPLOY_SCALE_UP_DOWN, reg.DEPLOY_PREEMPTIBILITY},
            {NotificationKind.SCALE_DOWN, NotificationKind.PREEMPTION},
        ),
    }
    assert set(r.priorities()) == set(expected)
    for opt_id, (consumes, publishes) in expected.items():
        desc = r.get(opt_id)
        assert desc.consumes == frozenset(consumes), opt_id
        assert desc.publishes == frozenset(publishes), opt_id


def test_onboard_new_optimization_at_free_priority():
    r = builtin_registry()
    desc = OptimizerDescriptor(
        optimization="gpu_sharing",
        priority=11,
        resources=frozenset({"spare_compute"}),
        consumes=frozenset({reg.DEPLOY_DELAY_TOLERANCE}),
    )
    r.onboard(desc)
    assert r.get("gpu_sharing") is desc
    assert r.all()[-1].optimization == "gpu_sharing"


def test_onboard_rejects_duplicate_priority():
    r = builtin_registry()
    with pytest.raises(DuplicatePriorityError, match="spot_vms"):
        r.onboard(
            OptimizerDescriptor(
                optimization="bargain_bin",
                priority=9,
                resources=frozenset({"spare_compute"}),
            )
        )


def test_onboard_rejects_unknown_resource_and_channel():
    r = Registry()
    with pytest.raises(UnknownResourceKindError):
        r.onboard(
            OptimizerDescriptor(
                optimization="x", priority=1, resources=frozenset({"quantum_flux"})
            )
        )
    with pytest.raises(UnknownChannelError):
        r.onboard(
            OptimizerDescriptor(
                optimization="x",
                priority=1,
                resources=frozenset({"capacity"}),
                consumes=frozenset({"deployment:vibes"}),
            )
        )


def test_onboard_rejects_duplicate_id():
    r = builtin_registry()
    with pytest.raises(ValueError, match="already onboarded"):
        r.onboard(
            OptimizerDescriptor(
                optimization="spot_vms", priority=42, resources=frozenset()
            )
        )


# ---------------------------------------------------------------------------
# auto-scaling


def test_threshold_scaling():
    policy = autoscale.ScalePolicy(threshold_pct=70.0, min_vms=1, max_vms=100)
    assert autoscale.tick("w", 10, 91.0, policy).target_vms == 13  # ceil(910/70)
    assert autoscale.tick("w", 10, 35.0, policy).target_vms == 5
    assert autoscale.tick("w", 10, 70.0, policy).target_vms == 10  # at target: hold
    assert autoscale.tick("w", 10, 0.0, policy).target_vms == 1    # floor
    assert autoscale.tick("w", 10, 91.0, policy).delta == 3


def test_threshold_scaling_clamps():
    policy = autoscale.ScalePolicy(threshold_pct=50.0, min_vms=2, max_vms=12)
    assert autoscale.tick("w", 10, 95.0, policy).target_vms == 12
    assert autoscale.tick("w", 10, 1.0, policy).target_vms == 2


def test_schedule_scaling():
    policy = autoscale.ScalePolicy(
        kind="schedule",
        schedule=((0, 2), (3_600_000, 8)),
        min_vms=1,
        max_vms=100,
    )
    assert autoscale.tick("w", 2, 99.0, policy, now_ms=0).target_vms == 2
    assert autoscale.tick("w", 2, 0.0, policy, now_ms=3_600_000).target_vms == 8
    assert autoscale.tick("w", 2, 50.0, policy, now_ms=3_599_999).target_vms == 2


def test_policy_validation():
    with pytest.raises(ValueError):
        autoscale.ScalePolicy(kind="vibes")
    with pytest.raises(ValueError):
        autoscale.ScalePolicy(threshold_pct=0.0)
    with pytest.raises(ValueError):
        autoscale.ScalePolicy(min_vms=5, max_vms=2)


# ---------------------------------------------------------------------------
# spot


def _cand(vm_id, cores, created, prio=PreemptionPriority.NORMAL, workload="w"):
    return spot.SpotCandidate(
        vm_id=vm_id,
        workload_id=workload,
        cores=cores,
        created_at_ms=created,
        priority=prio,
    )


def test_eviction_order_priority_then_youngest():
    cands = [
        _cand("a", 4, 100, PreemptionPriority.HIGH),
        _cand("b", 4, 999, PreemptionPriority.LOW),
        _cand("c", 4, 100, PreemptionPriority.LOW),
        _cand("d", 4, 500, PreemptionPriority.NORMAL),
    ]
    assert [c.vm_id for c in spot.eviction_order(cands)] == ["b", "c", "d", "a"]


def test_reclaim_spares_high_priority():
    cands = [
        _cand("low", 4, 100, PreemptionPriority.LOW),
        _cand("normal", 4, 200, PreemptionPriority.NORMAL),
        _cand("high", 4, 300, PreemptionPriority.HIGH),
    ]
    plan, notes = spot.reclaim(8, cands, now_ms=1_000)
    assert plan.vm_ids == ("low", "normal")
    assert plan.freed_cores == 8
    assert not plan.insufficient
    assert len(notes) == 2
    for n in notes:
        assert n.kind is NotificationKind.PREEMPTION
        assert n.effective_at_ms - n.issued_at_ms == 30_000
        assert n.optimization is OptimizationId.SPOT_VMS
        assert n.payload["cores"] == 4


def test_reclaim_respects_workload_budget():
    cands = [_cand(f"v{i}", 4, i, workload="w") for i in range(3)]
    budgets = {"w": spot.WorkloadBudget(vm_count=10, preemptibility_pct=25, in_flight=1)}
    assert budgets["w"].remaining == 1  # floor(2.5) - 1
    plan, _ = spot.reclaim(12, cands, budgets=budgets)
    assert len(plan.evict) == 1
    assert plan.insufficient


def test_reclaim_plan_is_minimal():
    cands = [
        _cand("small", 2, 300, PreemptionPriority.LOW),
        _cand("big", 4, 200, PreemptionPriority.LOW),
    ]
    # greedy picks small (younger) then big; small's 2 cores turn out slack
    plan, _ = spot.reclaim(4, cands)
    assert plan.vm_ids == ("big",)
    assert plan.freed_cores == 4


def test_reclaim_insufficient_flag():
    plan, _ = spot.reclaim(100, [_cand("only", 4, 0)])
    assert plan.insufficient
    assert plan.freed_cores == 4
    assert plan.vm_ids == ("only",)


def test_reclaim_zero_demand():
    plan, notes = spot.reclaim(0, [_cand("a", 4, 0)])
    assert plan.evict == ()
    assert notes == []


@settings(max_examples=200, deadline=None)
@given(
    demand=st.integers(min_value=0, max_value=60),
    sizes=st.lists(st.integers(min_value=1, max_value=8), min_size=0, max_size=12),
)
def test_reclaim_properties(demand, sizes):
    cands = [
        _cand(f"v{i:02d}", c, created=i * 7 % 5, workload=f"w{i % 3}")
        for i, c in enumerate(sizes)
    ]
    plan, _ = spot.reclaim(demand, cands)
    if plan.insufficient:
        assert plan.freed_cores < demand
        assert set(plan.vm_ids) == {c.vm_id for c in cands}
    else:
        assert plan.freed_cores >= demand
        for victim in plan.evict:  # dropping anyone would miss demand
            assert plan.freed_cores - victim.cores < demand


@settings(max_examples=100, deadline=None)
@given(
    demand=st.integers(min_value=0, max_value=80),
    n=st.integers(min_value=0, max_value=10),
    pct=st.sampled_from([0, 10, 25, 50, 100]),
)
def test_reclaim_budget_property(demand, n, pct):
    cands = [_cand(f"v{i}", 4, i, workload="w") for i in range(n)]
    budgets = {"w": spot.WorkloadBudget(vm_count=n, preemptibility_pct=pct)}
    plan, _ = spot.reclaim(demand, cands, budgets=budgets)
    assert len(plan.evict) <= n * pct // 100


# ---------------------------------------------------------------------------
# harvest


def _hvm(vm_id, harvested, pref=ScalePreference.NEUTRAL, base=2, cap=None):
    return harvest.HarvestVm(
        vm_id=vm_id,
        base_cores=base,
        harvested_cores=harvested,
        preference=pref,
        max_harvest=cap,
    )


def test_grow_splits_fairly_among_grow_preference():
    plan = harvest.rebalance(
        6,
        [
            _hvm("a", 0, ScalePreference.PREFER_GROW),
            _hvm("b", 0, ScalePreference.PREFER_GROW),
            _hvm("c", 0, ScalePreference.PREFER_SHRINK),
        ],
    )
    assert {a.vm_id: a.delta_cores for a in plan.actions} == {"a": 3, "b": 3}
    assert plan.deficit_cores == 0


def test_grow_spills_to_neutral_after_caps():
    plan = harvest.rebalance(
        5,
        [
            _hvm("a", 0, ScalePreference.PREFER_GROW, cap=2),
            _hvm("b", 0, ScalePreference.NEUTRAL),
        ],
    )
    assert {a.vm_id: a.delta_cores for a in plan.actions} == {"a": 2, "b": 3}


def test_shrink_order_and_conservation():
    plan = harvest.rebalance(
        -6,
        [
            _hvm("a", 3, ScalePreference.PREFER_SHRINK),
            _hvm("b", 5, ScalePreference.NEUTRAL),
            _hvm("c", 4, ScalePreference.PREFER_GROW),
        ],
    )
    assert {a.vm_id: a.delta_cores for a in plan.actions} == {"a": -3, "b": -3}
    assert plan.moved == -6
    assert plan.deficit_cores == 0


def test_shrink_reports_deficit_for_eviction_escalation():
    plan = harvest.rebalance(-9, [_hvm("a", 1), _hvm("b", 3)])
    assert plan.moved == -4
    assert plan.deficit_cores == 5


def test_zero_delta_is_noop():
    assert harvest.rebalance(0, [_hvm("a", 3)]) == harvest.RebalancePlan((), 0)


@settings(max_examples=200, deadline=None)
@given(
    delta=st.integers(min_value=-40, max_value=40),
    spec=st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=8),   # harvested
            st.sampled_from(list(ScalePreference)),
            st.one_of(st.none(), st.integers(min_value=0, max_value=12)),
        ),
        min_size=0,
        max_size=8,
    ),
)
def test_rebalance_conserves_cores(delta, spec):
    vms = []
    for i, (harv, pref, cap) in enumerate(spec):
        if cap is not None and cap < harv:
            cap = harv
        vms.append(_hvm(f"v{i}", harv, pref, cap=cap))
    plan = harvest.rebalance(delta, vms)
    granted = {a.vm_id: a.delta_cores for a in plan.actions}
    by_id = {v.vm_id: v for v in vms}
    for vm_id, d in granted.items():
        vm = by_id[vm_id]
        if d < 0:
            assert -d <= vm.harvested_cores  # never below base
        elif vm.max_harvest is not None:
            assert vm.harvested_cores + d <= vm.max_harvest
    if delta >= 0:
        assert plan.deficit_cores == 0
        assert 0 <= plan.moved <= delta
        can_absorb = sum(
            delta if v.headroom is None else v.headroom
            for v in vms
            if v.preference is not ScalePreference.PREFER_SHRINK
        )
        assert plan.moved == min(delta, can_absorb)
    else:
        assert plan.moved == delta + plan.deficit_cores
        assert plan.deficit_cores == max(
            0, -delta - sum(v.harvested_cores for v in vms)
        )


# ---------------------------------------------------------------------------
# overclock


def test_boost_limited_by_tighter_budget():
    grants = overclock.plan(
        [overclock.BoostCandidate("a", cores=8)],
        power_budget_slots=4,
        reliability_budget_slots=10,
    )
    assert grants == [
        overclock.BoostGrant("a", FrequencyLevel.BOOST_1, boosted_cores=4, slot_cost=4)
    ]


def test_boost_two_costs_double_and_leftover_flows_down():
    grants = overclock.plan(
        [
            overclock.BoostCandidate(
                "hot", cores=4, preference=ScalePreference.PREFER_GROW,
                level=FrequencyLevel.BOOST_2,
            ),
            overclock.BoostCandidate("meek", cores=1),
        ],
        power_budget_slots=5,
        reliability_budget_slots=5,
    )
    # hot gets all 5 slots in tier one but can only use 4 (2 per core);
    # the stranded slot serves the neutral tier
    assert grants == [
        overclock.BoostGrant("hot", FrequencyLevel.BOOST_2, boosted_cores=2, slot_cost=4),
        overclock.BoostGrant("meek", FrequencyLevel.BOOST_1, boosted_cores=1, slot_cost=1),
    ]


def test_grow_preference_starves_neutral_when_tight():
    grants = overclock.plan(
        [
            overclock.BoostCandidate("pg", cores=4, preference=ScalePreference.PREFER_GROW),
            overclock.BoostCandidate("nn", cores=4),
        ],
        power_budget_slots=4,
        reliability_budget_slots=4,
    )
    assert [g.vm_id for g in grants] == ["pg"]
    assert grants[0].boosted_cores == 4


def test_prefer_shrink_never_boosts():
    grants = overclock.plan(
        [overclock.BoostCandidate("ps", cores=4, preference=ScalePreference.PREFER_SHRINK)],
        power_budget_slots=8,
        reliability_budget_slots=8,
    )
    assert grants == []


def test_boost_budget_edges():
    assert overclock.plan([overclock.BoostCandidate("a", cores=2)], 0, 9) == []
    with pytest.raises(ValueError):
        overclock.plan([], -1, 4)
    with pytest.raises(ValueError):
        overclock.BoostCandidate("a", cores=2, level=FrequencyLevel.THROTTLE_1)


@settings(max_examples=150, deadline=None)
@given(
    budget=st.integers(min_value=0, max_value=40),
    cores=st.lists(st.integers(min_value=1, max_value=16), min_size=0, max_size=6),
)
def test_boost_never_exceeds_budget(budget, cores):
    grants = overclock.plan(
        [overclock.BoostCandidate(f"v{i}", cores=c) for i, c in enumerate(cores)],
        power_budget_slots=budget,
        reliability_budget_slots=budget + 3,
    )
    assert sum(g.slot_cost for g in grants) <= budget
    for g in grants:
        assert g.slot_cost == g.boosted_cores * int(g.level)


# ---------------------------------------------------------------------------
# underclock


def test_underclock_decisions():
    actions = underclock.plan(
        [
            underclock.UnderclockCandidate("idle", utilization_pct=5.0),
            underclock.UnderclockCandidate("busy", utilization_pct=55.0),
            underclock.UnderclockCandidate(
                "shrinkme", utilization_pct=80.0,
                preference=ScalePreference.PREFER_SHRINK,
            ),
            underclock.UnderclockCandidate(
                "already", utilization_pct=3.0, level=FrequencyLevel.THROTTLE_1
            ),
            underclock.UnderclockCandidate(
                "recovered", utilization_pct=60.0, level=FrequencyLevel.THROTTLE_1
            ),
            underclock.UnderclockCandidate(
                "emergency", utilization_pct=1.0, level=FrequencyLevel.THROTTLE_2
            ),
            underclock.UnderclockCandidate(
                "boosted", utilization_pct=1.0, level=FrequencyLevel.BOOST_1
            ),
        ]
    )
    assert {(a.vm_id, a.to_level) for a in actions} == {
        ("idle", FrequencyLevel.THROTTLE_1),
        ("shrinkme", FrequencyLevel.THROTTLE_1),
        ("recovered", FrequencyLevel.NOMINAL),
    }


# ---------------------------------------------------------------------------
# pre-provisioning


def test_pool_counts_only_strict_deployers():
    plan = preprovision.pool_size(
        [
            preprovision.PoolInput("fast", deploy_time_ms=55_000, forecast_scale_out_vms=3),
            preprovision.PoolInput("lazy", deploy_time_ms=60_000, forecast_scale_out_vms=5),
            preprovision.PoolInput("batch", deploy_time_ms=300_000, forecast_scale_out_vms=9),
        ]
    )
    assert plan.pool_vms == 3
    assert plan.strict_workloads == ("fast",)
    assert plan.relaxed_workloads == ("batch", "lazy")


def test_pool_empty_when_everyone_is_relaxed():
    plan = preprovision.pool_size(
        [preprovision.PoolInput("w", deploy_time_ms=120_000, forecast_scale_out_vms=7)]
    )
    assert plan.pool_vms == 0


# ---------------------------------------------------------------------------
# region placement


def test_weighted_region_choice():
    a = region.RegionProfile("alpha", price_factor=1.0, carbon_gco2_per_kwh=546.0)
    b = region.RegionProfile("bravo", price_factor=0.78, carbon_gco2_per_kwh=267.0)
    assert region.place([a, b]).region_id == "bravo"
    assert region.place([a, b], weight_price=1.0).region_id == "bravo"
    assert region.place([a, b], weight_price=0.0).region_id == "bravo"


def test_weight_extremes_pick_opposite_winners():
    cheap_dirty = region.RegionProfile("cheap", 0.5, 900.0)
    dear_clean = region.RegionProfile("clean", 1.0, 100.0)
    assert region.place([cheap_dirty, dear_clean], weight_price=1.0).region_id == "cheap"
    assert region.place([cheap_dirty, dear_clean], weight_price=0.0).region_id == "clean"


def test_region_tie_breaks_lexicographically():
    twin_a = region.RegionProfile("aa", 0.9, 400.0)
    twin_b = region.RegionProfile("ab", 0.9, 400.0)
    assert region.place([twin_b, twin_a]).region_id == "aa"


def test_region_validation():
    with pytest.raises(ValueError):
        region.place([])
    with pytest.raises(ValueError):
        region.place([region.RegionProfile("x", 1.0, 1.0)], weight_price=1.5)
    with pytest.raises(ValueError):
        region.RegionProfile("x", 0.0, 1.0)


# ---------------------------------------------------------------------------
# oversubscription


def test_oversub_requires_unanimous_eligibility():
    all_ok = [oversub.PackedVm("a", True), oversub.PackedVm("b", True)]
    assert oversub.admit(all_ok) == oversub.PackingRatios(cpu=1.5, mem=1.2)
    one_strict = all_ok + [oversub.PackedVm("c", False)]
    assert oversub.admit(one_strict) == oversub.PackingRatios(cpu=1.0, mem=1.0)
    assert oversub.admit([]) == oversub.PackingRatios(cpu=1.0, mem=1.0)


def test_oversub_throttle_order():
    vms = [
        oversub.PackedVm("g", True, ScalePreference.PREFER_GROW),
        oversub.PackedVm("n2", True, ScalePreference.NEUTRAL),
        oversub.PackedVm("s", True, ScalePreference.PREFER_SHRINK),
        oversub.PackedVm("n1", True, ScalePreference.NEUTRAL),
    ]
    assert oversub.throttle_order(vms) == ["s", "n1", "n2", "g"]


# ---------------------------------------------------------------------------
# rightsizing


_DAY = 86_400_000


def _series(peaks_by_hour):
    out = []
    for hour, peaks in enumerate(peaks_by_hour):
        out.append(
            (
                hour * 3_600_000,
                UtilStats(
                    p95_cpu_pct=peaks["cpu"],
                    p95_max_cpu_pct=peaks["cpu"],
                    peak_pct=dict(peaks),
                ),
            )
        )
    return out


def test_insufficient_history_raises():
    short = _series([{"cpu": 30, "memory": 30, "disk": 30}] * 23)  # 22 h span
    with pytest.raises(rightsize.InsufficientHistoryError):
        rightsize.recommend("vm", 8, short)
    with pytest.raises(rightsize.InsufficientHistoryError):
        rightsize.recommend("vm", 8, [])


def test_downsize_when_every_peak_stays_low():
    quiet = _series([{"cpu": 42, "memory": 35, "disk": 20}] * 25)  # 24 h span
    advice = rightsize.recommend("vm", 8, quiet)
    assert advice == rightsize.ResizeAdvice("vm", 8, 4, "downsize")


def test_single_core_never_downsizes_below_one():
    quiet = _series([{"cpu": 10, "memory": 10, "disk": 10}] * 25)
    assert rightsize.recommend("vm", 1, quiet) is None


def test_upsize_on_any_saturated_sample():
    spiky = [{"cpu": 30, "memory": 30, "disk": 30}] * 24 + [
        {"cpu": 30, "memory": 95, "disk": 30}
    ]
    advice = rightsize.recommend("vm", 8, _series(spiky))
    assert advice == rightsize.ResizeAdvice("vm", 8, 16, "upsize")


def test_well_sized_vm_gets_no_advice():
    steady = _series([{"cpu": 70, "memory": 60, "disk": 55}] * 25)
    assert rightsize.recommend("vm", 8, steady) is None


def test_auto_apply_gate():
    tolerant = HintSet(
        scale_up_down=True,
        scale_out_in=False,
        deploy_time_ms=0,
        availability_nines=3,
        preemptibility_pct=20,
        delay_tolerance_ms=0,
        region_independent=False,
    )
    assert rightsize.auto_apply(tolerant)
    fragile = dataclasses.replace(tolerant, availability_nines=4)
    assert not rightsize.auto_apply(fragile)
    precious = dataclasses.replace(tolerant, preemptibility_pct=10)
    assert not rightsize.auto_apply(precious)


# ---------------------------------------------------------------------------
# power emergencies


def _shed_vm(vm_id, cores, *, eligible=False, preemptible=False,
             level=FrequencyLevel.NOMINAL, created=0,
             prio=PreemptionPriority.NORMAL):
    return madc.ShedCandidate(
        vm_id=vm_id,
        workload_id="w",
        cores=cores,
        level=level,
        throttle_eligible=eligible,
        preemptible=preemptible,
        created_at_ms=created,
        priority=prio,
    )


def test_shed_with_single_throttle_step():
    plan, notes = madc.shed(0.8, [_shed_vm("a", 4, eligible=True)])
    assert [(s.vm_id, s.to_level) for s in plan.throttles] == [
        ("a", FrequencyLevel.THROTTLE_1)
    ]
    assert plan.evictions == ()
    assert plan.shed_power == pytest.approx(0.8)
    assert plan.shortfall_power == 0
    assert notes[0].kind is NotificationKind.SCALE_DOWN
    assert notes[0].payload == {"from_level": 0, "to_level": -1}
    assert notes[0].optimization is OptimizationId.MADC
    assert not notes[0].emergency


def test_shed_escalates_to_second_throttle_pass():
    plan, _ = madc.shed(
        2.4,
        [_shed_vm("a", 4, eligible=True), _shed_vm("b", 2, eligible=True)],
    )
    steps = [(s.vm_id, int(s.to_level)) for s in plan.throttles]
    assert steps == [("a", -1), ("b", -1), ("a", -2), ("b", -2)]
    assert plan.shed_power == pytest.approx(2.4)
    assert plan.evictions == ()


def test_shed_evicts_after_throttling_runs_out():
    vms = [
        _shed_vm("t", 4, eligible=True),
        _shed_vm("spot_low", 8, preemptible=True, prio=PreemptionPriority.LOW),
        _shed_vm("spot_norm", 4, preemptible=True, prio=PreemptionPriority.NORMAL),
    ]
    plan, notes = madc.shed(10.0, vms)
    # throttles shed 4*(1-0.6)=1.6; evictions: low (8.0) then normal (4.0)
    assert [v.vm_id for v in plan.evictions] == ["spot_low", "spot_norm"]
    assert plan.shed_power == pytest.approx(13.6)
    assert plan.shortfall_power == 0
    kinds = {n.vm_id: n.kind for n in notes}
    assert kinds["spot_low"] is NotificationKind.PREEMPTION


def test_shed_counts_post_throttle_power_for_evicted_vm():
    both = _shed_vm("x", 5, eligible=True, preemptible=True)
    plan, _ = madc.shed(5.0, [both])
    # throttle passes shed 5*(1-0.6)=2.0, eviction sheds the remaining 3.0
    assert plan.shed_power == pytest.approx(5.0)
    assert [v.vm_id for v in plan.evictions] == ["x"]
    assert plan.shortfall_power == 0


def test_shed_reports_shortfall():
    plan, _ = madc.shed(100.0, [_shed_vm("a", 4, eligible=True, preemptible=True)])
    assert plan.shortfall_power == pytest.approx(96.0)
    assert plan.shed_power == pytest.approx(4.0)


def test_emergency_deadline_compresses_notice():
    plan, notes = madc.shed(
        0.8, [_shed_vm("a", 4, eligible=True)], now_ms=1_000, deadline_ms=5_000
    )
    assert plan.emergency
    assert all(n.emergency for n in notes)
    assert notes[0].effective_at_ms == 6_000
    plan2, notes2 = madc.shed(
        0.8, [_shed_vm("a", 4, eligible=True)], now_ms=1_000, deadline_ms=45_000
    )
    assert not plan2.emergency
    assert notes2[0].effective_at_ms == 31_000


def test_shed_stops_once_target_met():
    vms = [_shed_vm(f"v{i}", 4, eligible=True) for i in range(5)]
    plan, _ = madc.shed(1.0, vms)
    # v0 (-1) sheds 0.8, v1 (-1) reaches 1.6 >= 1.0; v2..v4 untouched
    assert [(s.vm_id, int(s.to_level)) for s in plan.throttles] == [
        ("v0", -1),
        ("v1", -1),
    ]


@settings(max_examples=150, deadline=None)
@given(
    target=st.floats(min_value=0.0, max_value=50.0, allow_nan=False),
    spec=st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=8),
            st.booleans(),
            st.booleans(),
        ),
        min_size=0,
        max_size=8,
    ),
)
def test_shed_meets_target_or_exhausts_fleet(target, spec):
    vms = [
        _shed_vm(f"v{i}", c, eligible=e, preemptible=p)
        for i, (c, e, p) in enumerate(spec)
    ]
    plan, _ = madc.shed(target, vms)
    if plan.shortfall_power > 0:
        # nothing left to give: every eligible VM at -2, every preemptible gone
        evicted = {v.vm_id for v in plan.evictions}
        final = {v.vm_id: v.level for v in vms}
        for s in plan.throttles:
            final[s.vm_id] = s.to_level
        for v in vms:
            if v.preemptible:
                assert v.vm_id in evicted
            elif v.throttle_eligible:
                assert final[v.vm_id] is FrequencyLevel.THROTTLE_2
        assert plan.shed_power + plan.shortfall_power == pytest.approx(target)
    else:
        assert plan.shed_power >= target - 1e-9
