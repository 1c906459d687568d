from __future__ import annotations

from fractions import Fraction

import pytest

from ditforge.config.schema import EmulatorSettings
from ditforge.cost.flops import CostCoefficients
from ditforge.emulator.estimate import (
    ModelInconsistencyError,
    OverlapModel,
    estimate_iteration,
    mfu,
)
from ditforge.emulator.pipeline import closed_form_bubble, device_schedule, simulate_pipeline
from ditforge.emulator.search import SearchSpace, parse_pin, search_configs
from ditforge.workload.shapes import derive_latent_shape
from ditforge.workload.types import ClusterSpec, ModelSpec, ParallelismConfig, SpecValidationError

SMALL_MODEL = ModelSpec(layers=4, hidden_dim=1024, attention_heads=16, param_count=1e9)


def test_single_stage_has_no_bubble() -> None:
    result = simulate_pipeline(1, 1, 8, 1.0, 2.0)

    assert result.bubble_fraction == 0.0
    assert result.makespan_s == pytest.approx(8 * 3.0)


@pytest.mark.parametrize(("fwd", "bwd"), [(1.0, 1.0), (1.0, 2.0)])
def test_one_f_one_b_bubble(fwd: float, bwd: float) -> None:
    result = simulate_pipeline(4, 1, 8, fwd, bwd)

    assert result.bubble_fraction == pytest.approx(float(Fraction(3, 11)), rel=1e-9)
    assert result.ops == 2 * 4 * 8


def test_interleaved_bubble() -> None:
    result = simulate_pipeline(4, 2, 8, 1.0, 1.0)

    assert result.bubble_fraction == pytest.approx(float(Fraction(3, 19)), rel=1e-9)
    assert closed_form_bubble(4, 2, 8) == pytest.approx(3 / 19)


PIPELINE_GRID = [(pp, vpp, m) for pp in range(1, 5) for vpp in (1, 2) for m in range(1, 17)]


@pytest.mark.parametrize(("pp", "vpp", "m"), PIPELINE_GRID)
def test_simulated_bubble_over_grid(pp: int, vpp: int, m: int) -> None:
    if vpp > 1 and pp == 1:
        with pytest.raises(SpecValidationError, match="interleaving needs pp > 1"):
            simulate_pipeline(pp, vpp, m, 1.0, 1.0)
        return

    result = simulate_pipeline(pp, vpp, m, 1.0, 1.0)

    if vpp > 1 and m < pp:
        # One microbatch alone crosses pp*vpp chunks each way, which outlasts the closed form
        expected = 1 - Fraction(vpp * m, pp * vpp + m - 1)
        assert expected > Fraction(pp - 1, vpp * m + pp - 1)
    else:
        expected = Fraction(pp - 1, vpp * m + pp - 1)
    assert result.bubble_fraction == pytest.approx(float(expected), rel=1e-9, abs=1e-12)
    assert result.ops == 2 * pp * vpp * m


@pytest.mark.parametrize(("pp", "m"), [(2, 3), (3, 4), (3, 5), (4, 5), (4, 7)])
def test_single_round_interleaving_matches_closed_form_for_uneven_stages(pp: int, m: int) -> None:
    result = simulate_pipeline(pp, 2, m, 1.0, 2.0)

    assert result.bubble_fraction == pytest.approx(closed_form_bubble(pp, 2, m), rel=1e-9)
    assert result.makespan_s == pytest.approx(m * 3.0 + (pp - 1) * 1.5)


def test_uneven_round_runs_all_forwards_first() -> None:
    order = device_schedule(1, 4, 2, 6)

    assert [kind for kind, _, _ in order] == ["F"] * 12 + ["B"] * 12
    assert order[6] == ("F", 0, 1)
    assert order[12] == ("B", 0, 1)


def test_device_schedule_runs_every_op_once() -> None:
    order = device_schedule(0, 4, 2, 8)

    assert len(order) == 2 * 8 * 2
    assert len(set(order)) == len(order)
    assert order[0][0] == "F"
    assert order[-1][0] == "B"


def test_mfu_arithmetic() -> None:
    cluster = ClusterSpec.reference()

    assert mfu(3956.0, 1.0, cluster) == pytest.approx(0.5)
    assert mfu(3956.0, 2.0, cluster) == pytest.approx(0.25)
    with pytest.raises(ModelInconsistencyError):
        mfu(3956.0, 0.25, cluster)


def test_hand_computed_iteration_estimate() -> None:
    model = ModelSpec(layers=2, hidden_dim=64, attention_heads=4, param_count=1e6)
    cluster = ClusterSpec(
        nodes=1, gpus_per_node=2, peak_tflops_per_gpu=1000, hbm_gb=80, intra_node_bw=100, inter_node_bw=50
    )
    bucket = derive_latent_shape(1, 256, 256)
    coeffs = CostCoefficients(constant_c=200.0, linear_a=0.0, quad_b=0.0, latent_multiplier_k=12)
    overlap = OverlapModel(kernel_efficiency=1.0, tp_overlap_eff=0.5, dp_overlap=True)

    est = estimate_iteration(model, ParallelismConfig(tp=2), cluster, bucket, 1, overlap, coeffs)

    # 200 TFLOPs split over 2 GPUs at 1000 TFLOP/s
    assert est.compute_s == pytest.approx(0.1, rel=1e-12)
    # 256 tokens x 64 hidden x 2 bytes per layer, 2 layers, fwd+bwd, half exposed, 100 GB/s
    tp_bytes = 2 * (1 / 2) * 256 * 64 * 2 * 2 * 2
    exposed = 0.5 * tp_bytes / 100e9
    assert est.exposed_comm_s == pytest.approx(exposed, rel=1e-9)
    assert est.iteration_s == pytest.approx(0.1 + exposed, rel=1e-9)
    assert est.bubble_fraction == 0.0
    assert est.mfu == pytest.approx(200.0 / ((0.1 + exposed) * 2000.0), rel=1e-9)


def test_comm_free_iteration_is_compute_over_busy_share() -> None:
    model = ModelSpec(layers=8, hidden_dim=64, attention_heads=4, param_count=1e6)
    cluster = ClusterSpec(
        nodes=1, gpus_per_node=4, peak_tflops_per_gpu=1000, hbm_gb=80, intra_node_bw=100, inter_node_bw=50
    )
    bucket = derive_latent_shape(1, 256, 256)
    coeffs = CostCoefficients(constant_c=400.0, linear_a=0.0, quad_b=0.0, latent_multiplier_k=12)
    overlap = OverlapModel(kernel_efficiency=1.0, tp_overlap_eff=1.0, dp_overlap=True)
    cfg = ParallelismConfig(pp=4, micro_batches=8)

    est = estimate_iteration(model, cfg, cluster, bucket, 8, overlap, coeffs)

    # pp point-to-point traffic is the only communication; remove it from the comparison
    p2p = 8 * est.comm.time_of("pp-p2p")
    assert est.iteration_s - p2p == pytest.approx(est.compute_s / (1 - est.bubble_fraction), rel=1e-9)
    assert est.bubble_fraction == pytest.approx(3 / 11, rel=1e-9)


def test_dp_allgather_hides_under_first_forward() -> None:
    model = ModelSpec(layers=2, hidden_dim=64, attention_heads=4, param_count=1e6)
    cluster = ClusterSpec(
        nodes=1, gpus_per_node=2, peak_tflops_per_gpu=1000, hbm_gb=80, intra_node_bw=100, inter_node_bw=50
    )
    bucket = derive_latent_shape(1, 256, 256)
    coeffs = CostCoefficients(constant_c=200.0, linear_a=0.0, quad_b=0.0, latent_multiplier_k=12)
    hooks_off = ParallelismConfig(dp=2)
    hooks_on = ParallelismConfig(dp=2, forward_hooks=True)
    overlap = OverlapModel(kernel_efficiency=0.5, tp_overlap_eff=1.0, dp_overlap=True)

    hidden = estimate_iteration(model, hooks_off, cluster, bucket, 1, overlap, coeffs)
    blocked = estimate_iteration(model, hooks_on, cluster, bucket, 1, overlap, coeffs)

    assert hidden.exposed_comm_s == 0.0
    assert blocked.exposed_comm_s == pytest.approx(hidden.comm.time_of("dp-allgather"))


def test_single_config_space_ranks_it_first() -> None:
    cfg = ParallelismConfig(tp=8, micro_batches=1)
    bucket = derive_latent_shape(68, 256, 256)

    report = search_configs(SMALL_MODEL, ClusterSpec.reference(), bucket, [cfg])

    assert report.best is not None
    assert report.best.config == cfg
    assert report.infeasible == []


def test_config_over_hbm_is_infeasible_with_memory_reason() -> None:
    huge = ModelSpec(layers=4, hidden_dim=1024, attention_heads=16, param_count=1e11)
    bucket = derive_latent_shape(68, 256, 256)

    report = search_configs(huge, ClusterSpec.reference(), bucket, [ParallelismConfig(tp=8)])

    assert report.entries == []
    assert report.infeasible[0].reason.startswith("memory")


def test_dominated_config_ranks_lower() -> None:
    bucket = derive_latent_shape(68, 256, 256)
    sequence = ParallelismConfig(tp=2, cp=2, dp=2, cp_cross_attn_mode="sequence-wise")
    head = ParallelismConfig(tp=2, cp=2, dp=2, cp_cross_attn_mode="head-wise")

    report = search_configs(SMALL_MODEL, ClusterSpec.reference(), bucket, [head, sequence])

    assert [e.config for e in report.entries] == [sequence, head]
    assert report.entries[0].estimate.compute_s == pytest.approx(report.entries[1].estimate.compute_s)
    assert report.entries[0].estimate.mfu > report.entries[1].estimate.mfu


def test_search_is_deterministic_and_reports_pinned_gap() -> None:
    bucket = derive_latent_shape(68, 256, 256)
    space = SearchSpace(tp=[2, 4, 8], cp=[1], pp=[1], vpp=[1], ckpt_fractions=[0.0])
    settings = EmulatorSettings(workers=3)

    first = search_configs(SMALL_MODEL, ClusterSpec.reference(), bucket, space, pin={"tp": 8}, settings=settings)
    second = search_configs(SMALL_MODEL, ClusterSpec.reference(), bucket, space, pin={"tp": 8}, settings=settings)

    assert [e.config for e in first.entries] == [e.config for e in second.entries]
    mfus = [e.estimate.mfu for e in first.entries]
    assert mfus == sorted(mfus, reverse=True)
    assert first.pinned is not None
    assert first.pinned.config.tp == 8
    assert first.pinned.gap <= 0


def test_search_space_respects_divisors() -> None:
    space = SearchSpace(tp=[1, 3, 8], cp=[1], pp=[1, 2], vpp=[1, 2])

    configs = list(space.configs(SMALL_MODEL, ClusterSpec.reference()))

    assert configs
    assert all(c.world_size == 8 for c in configs)
    assert all(c.tp != 3 for c in configs)
    assert all(c.vpp == 1 or c.pp > 1 for c in configs)
    assert len({c.key() for c in configs}) == len(configs)


def test_parse_pin() -> None:
    assert parse_pin("tp=8,sp=1,zero1=1") == {"tp": 8, "sp": True, "zero1": True}
    with pytest.raises(SpecValidationError, match="bad pin component"):
        parse_pin("colour=red")
