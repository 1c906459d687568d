from __future__ import annotations

import json
from pathlib import Path

import pytest

from ditforge.cost.comm import comm_volumes, tp_layer_bytes, vae_halo
from ditforge.cost.flops import (
    CalibrationError,
    CostCoefficients,
    FlopsRow,
    FlopsTable,
    calibrate,
    default_coefficients,
    fit_coefficients,
    predict_row,
    reference_table,
    sample_flops,
)
from ditforge.cost.memory import activation_check, memory_breakdown
from ditforge.workload.shapes import derive_latent_shape
from ditforge.workload.types import ClusterSpec, ModelSpec, ParallelismConfig, SpecValidationError

MODEL = ModelSpec(layers=48, hidden_dim=6144, attention_heads=48, param_count=30e9)


def _rows(coeffs: CostCoefficients, keys: list[tuple[int, int, int]]) -> list[FlopsRow]:
    return [
        FlopsRow(frames=f, height=h, width=w, tflops=predict_row(coeffs, f, h, w)) for f, h, w in keys
    ]


@pytest.mark.parametrize(
    ("bucket", "expected"),
    [((204, 256, 256), 1717.20), ((1, 256, 256), 44.99), ((68, 192, 320), 475.87)],
)
def test_sample_flops_reproduces_reference_table(bucket: tuple[int, int, int], expected: float) -> None:
    res = derive_latent_shape(*bucket)

    assert sample_flops(default_coefficients(), res) == pytest.approx(expected, rel=0.005)


def test_calibration_recovers_latent_multiplier() -> None:
    result = calibrate(reference_table())
    coeffs = result.coefficients

    assert coeffs.latent_multiplier_k == 12
    assert coeffs.constant_c == pytest.approx(5.6, abs=0.3)
    assert coeffs.linear_a * 12 == pytest.approx(470.3, rel=0.01)
    assert coeffs.quad_b * 144 == pytest.approx(33.4, rel=0.05)
    assert result.max_residual < 0.005
    assert len(result.residuals) == 7


def test_exactly_linear_table_fits_zero_quadratic_term() -> None:
    truth = CostCoefficients(constant_c=2.0, linear_a=10.0, quad_b=0.0, latent_multiplier_k=12)
    rows = _rows(truth, [(1, 256, 256), (68, 256, 256), (136, 256, 256), (204, 256, 256), (68, 192, 320)])

    result = calibrate(FlopsTable(rows=rows))

    assert result.coefficients.latent_multiplier_k == 12
    assert result.coefficients.quad_b == pytest.approx(0.0, abs=1e-9 * truth.linear_a)
    assert result.coefficients.linear_a == pytest.approx(10.0, rel=1e-9)


def test_three_row_fit_predicts_held_out_row() -> None:
    truth = CostCoefficients(constant_c=3.0, linear_a=20.0, quad_b=0.5, latent_multiplier_k=12)
    rows = _rows(truth, [(1, 256, 256), (68, 256, 256), (136, 256, 256), (204, 192, 320)])

    fitted = fit_coefficients(rows[:3], k=12)

    held_out = rows[3]
    assert predict_row(fitted, held_out.frames, held_out.height, held_out.width) == pytest.approx(
        held_out.tflops, rel=1e-9
    )


def test_calibration_needs_two_frame_buckets() -> None:
    rows = [
        FlopsRow(frames=68, height=256, width=256, tflops=500.0),
        FlopsRow(frames=68, height=192, width=320, tflops=470.0),
        FlopsRow(frames=68, height=128, width=128, tflops=130.0),
        FlopsRow(frames=68, height=512, width=512, tflops=2100.0),
    ]

    with pytest.raises(CalibrationError, match="2 frame buckets"):
        calibrate(FlopsTable(rows=rows))


def test_flops_table_rejects_non_monotone_frames(tmp_path: Path) -> None:
    path = tmp_path / "table.json"
    path.write_text(
        json.dumps(
            [
                {"frames": 68, "height": 256, "width": 256, "tflops": 600.0},
                {"frames": 136, "height": 256, "width": 256, "tflops": 500.0},
            ]
        ),
        encoding="utf-8",
    )

    with pytest.raises(SpecValidationError, match="must increase with frames"):
        FlopsTable.load(path)


def test_unsharded_model_is_fully_resident() -> None:
    res = derive_latent_shape(68, 256, 256)

    report = memory_breakdown(MODEL, ParallelismConfig(), res, activation_bytes_per_token=1.0)

    assert report.params_gb == pytest.approx(30e9 * 2 / 1e9)


def test_tp8_shards_params_and_grads() -> None:
    res = derive_latent_shape(68, 256, 256)

    report = memory_breakdown(MODEL, ParallelismConfig(tp=8), res, activation_bytes_per_token=1.0)

    assert report.params_gb + report.grads_gb == pytest.approx(22.5)
    assert report.total_gb == pytest.approx(
        report.params_gb + report.grads_gb + report.optimizer_gb + report.activations_gb
    )


def test_doubling_cp_halves_activations() -> None:
    res = derive_latent_shape(204, 544, 992)
    one = memory_breakdown(MODEL, ParallelismConfig(tp=8, cp=1), res, 245760.0)
    two = memory_breakdown(MODEL, ParallelismConfig(tp=8, cp=2), res, 245760.0)

    assert two.activations_gb == pytest.approx(one.activations_gb / 2, rel=1e-12)


def test_zero1_divides_optimizer_state() -> None:
    res = derive_latent_shape(68, 256, 256)
    plain = memory_breakdown(MODEL, ParallelismConfig(tp=8, dp=4), res, 1.0)
    zero = memory_breakdown(MODEL, ParallelismConfig(tp=8, dp=4, zero1=True), res, 1.0)

    assert zero.optimizer_gb == pytest.approx(plain.optimizer_gb / 4)


def test_single_gpu_has_no_collectives() -> None:
    cluster = ClusterSpec(
        nodes=1, gpus_per_node=1, peak_tflops_per_gpu=989, hbm_gb=80, intra_node_bw=400, inter_node_bw=100
    )
    res = derive_latent_shape(68, 256, 256)

    report = comm_volumes(MODEL, ParallelismConfig(), cluster, res, res.tokens)

    assert report.total_bytes == 0


def test_tp_collective_bytes_per_layer() -> None:
    assert tp_layer_bytes(64e6, 8) == pytest.approx(112e6)


def test_cross_node_dp_uses_inter_link() -> None:
    res = derive_latent_shape(68, 256, 256)
    cfg = ParallelismConfig(tp=8, dp=4)

    report = comm_volumes(MODEL, cfg, ClusterSpec.reference(nodes=4), res, res.tokens)

    links = {e.kind: e.link for e in report.entries}
    assert links["tp-allreduce"] == "intra"
    assert links["dp-reducescatter"] == "inter"


def test_vae_halo_is_small_next_to_convolution() -> None:
    # 64x64 latent grid x 512 channels x 2 bytes = 4 MiB per latent frame
    res = derive_latent_shape(68, 1024, 1024)

    report = vae_halo(res, ClusterSpec.reference(), split=2)

    assert report.bytes_per_boundary == 4 * 1024 * 1024
    assert report.boundaries == 1
    assert report.ratio < 0.01


def test_vae_halo_rejects_single_shard() -> None:
    with pytest.raises(SpecValidationError, match="split must be >= 2"):
        vae_halo(derive_latent_shape(68, 256, 256), ClusterSpec.reference(), split=1)


def test_activation_check_reports_without_raising() -> None:
    res = derive_latent_shape(204, 544, 992)

    check = activation_check(MODEL, ParallelismConfig(tp=8, sp=True, cp=2, dp=4), res)

    assert check.ratio == pytest.approx(check.modeled_gb / 120.0)
    assert check.within_tolerance == (abs(check.ratio - 1.0) <= 0.30)
    assert any("204x544x992" in line for line in check.assumptions)


def test_pipeline_stages_save_about_twenty_gb_after_tp8() -> None:
    res = derive_latent_shape(204, 544, 992)
    flat = memory_breakdown(MODEL, ParallelismConfig(tp=8), res, 245760.0)
    staged = memory_breakdown(MODEL, ParallelismConfig(tp=8, pp=8, micro_batches=8), res, 245760.0)

    saved = (flat.params_gb + flat.grads_gb) - (staged.params_gb + staged.grads_gb)

    assert flat.params_gb + flat.grads_gb == pytest.approx(22.5)
    assert 15.0 <= saved <= 25.0


def test_activation_check_lands_near_reference_after_tp8_sp() -> None:
    # 36x34x62 latent tokens x 48 layers x 40*6144 bytes, split 8 ways by sequence parallelism
    res = derive_latent_shape(204, 544, 992)

    check = activation_check(MODEL, ParallelismConfig(tp=8, sp=True, dp=4, zero1=True), res)

    assert check.modeled_gb == pytest.approx(75888 * 48 * 245760 / 8 / 1e9)
    assert check.within_tolerance
    assert 0.7 <= check.ratio <= 1.3


def test_uneven_interleaving_keeps_every_microbatch_resident() -> None:
    res = derive_latent_shape(68, 256, 256)
    even = memory_breakdown(MODEL, ParallelismConfig(pp=4, vpp=2, micro_batches=8), res, 1.0)
    uneven = memory_breakdown(MODEL, ParallelismConfig(pp=4, vpp=2, micro_batches=6), res, 1.0)

    assert uneven.activations_gb == pytest.approx(even.activations_gb * 6 / 4)


def test_vae_halo_charges_both_directions_of_every_boundary() -> None:
    res = derive_latent_shape(68, 1024, 1024)

    two = vae_halo(res, ClusterSpec.reference(), split=2)
    four = vae_halo(res, ClusterSpec.reference(), split=4)

    assert two.entry.bytes == 2 * two.bytes_per_boundary
    assert four.boundaries == 3
    assert four.entry.bytes == 6 * four.bytes_per_boundary
    assert any("3 boundaries" in line for line in four.assumptions)
