from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ditforge.balance.bucketize import bucketize
from ditforge.balance.coarse import coarse_batch_sizes, solve_alpha
from ditforge.balance.fine import brute_force_pad, greedy_pad, image_budget
from ditforge.balance.planner import ClipRecord, balancer_config, plan_clips, read_manifest
from ditforge.balance.types import (
    AlphaTooLargeError,
    InstanceTooLargeError,
    ManifestError,
    UnreachableBatchError,
)
from ditforge.cost.flops import FlopsRow, FlopsTable, reference_table

IMAGE = 44.99


def _table(*rows: tuple[int, int, int, float]) -> FlopsTable:
    return FlopsTable(rows=[FlopsRow(frames=f, height=h, width=w, tflops=t) for f, h, w, t in rows])


def test_coarse_sizes_on_reference_table() -> None:
    sizes = coarse_batch_sizes(reference_table(), (204, 256, 256), alpha=1.0)

    assert [s.batch_size for s in sizes] == [1, 1, 1, 1, 3, 3, 38]
    assert sizes[-1].bucket == "1x256x256"


def test_single_row_table_has_batch_of_one() -> None:
    sizes = coarse_batch_sizes(_table((68, 256, 256, 500.0)))

    assert [s.batch_size for s in sizes] == [1]


def test_alpha_too_large_names_the_resolution() -> None:
    with pytest.raises(AlphaTooLargeError, match="204x256x256"):
        coarse_batch_sizes(reference_table(), "204x256x256", alpha=2.0)


def test_solve_alpha_for_equal_resolutions() -> None:
    table = _table((68, 256, 256, 100.0), (68, 192, 320, 100.0))

    solution = solve_alpha(table, [1, 1], global_batch=4)

    assert solution.alpha == pytest.approx(0.5, rel=1e-9)
    assert [s.batch_size for s in solution.sizes] == [2, 2]
    assert solution.exact


def test_solve_alpha_single_resolution() -> None:
    solution = solve_alpha(_table((68, 256, 256, 100.0)), None, global_batch=1)

    assert solution.alpha == pytest.approx(1.0)
    assert solution.sizes[0].batch_size == 1


def test_solve_alpha_reaches_reference_global_batch() -> None:
    solution = solve_alpha(reference_table(), None, global_batch=96)

    assert solution.total >= 96
    assert all(s.batch_size >= 1 for s in solution.sizes)
    # Any larger alpha loses samples
    assert sum(s.batch_size for s in coarse_batch_sizes(reference_table(), None, solution.alpha * 1.001)) < 96


def test_global_batch_below_resolution_count_is_unreachable() -> None:
    with pytest.raises(UnreachableBatchError, match="below the 7 weighted resolutions"):
        solve_alpha(reference_table(), None, global_batch=6)


def test_caps_bound_the_reachable_batch() -> None:
    table = _table((68, 256, 256, 100.0), (68, 192, 320, 100.0))

    with pytest.raises(UnreachableBatchError, match="caps allow at most 4"):
        solve_alpha(table, None, global_batch=5, caps={"68x256x256": 2, "68x192x320": 2})


def test_greedy_pads_the_lightest_batch() -> None:
    result = greedy_pad([1717.20, 1004.89, 509.31], 4, IMAGE)

    assert result.trace == [2, 2, 2, 2]
    assert [b.final_flops for b in result.batches] == pytest.approx([1717.20, 1004.89, 689.27])
    assert result.max_flops == pytest.approx(brute_force_pad([1717.20, 1004.89, 509.31], 4, IMAGE))


def test_greedy_with_no_images_is_identity() -> None:
    result = greedy_pad([3.0, 1.0], 0, IMAGE)

    assert [b.final_flops for b in result.batches] == [3.0, 1.0]
    assert result.trace == []


def test_greedy_breaks_ties_by_batch_id() -> None:
    result = greedy_pad([10.0, 10.0, 10.0], 3, 1.0)

    assert result.trace == [0, 1, 2]
    assert [b.images_added for b in result.batches] == [1, 1, 1]


def test_brute_force_small_cases() -> None:
    assert brute_force_pad([5.0], 3, 1.0) == 8.0
    assert brute_force_pad([5.0, 5.0], 2, 1.0) == 6.0
    with pytest.raises(InstanceTooLargeError):
        brute_force_pad([1.0] * 7, 1, 1.0)


@settings(max_examples=200, deadline=None)
@given(
    bases=st.lists(st.integers(min_value=1, max_value=2000), min_size=1, max_size=5),
    budget=st.integers(min_value=0, max_value=8),
    image=st.integers(min_value=1, max_value=300),
)
def test_greedy_stays_within_one_image_of_the_optimum(bases: list[int], budget: int, image: int) -> None:
    result = greedy_pad([float(b) for b in bases], budget, float(image))
    optimum = brute_force_pad([float(b) for b in bases], budget, float(image))

    assert sum(b.images_added for b in result.batches) == budget
    assert optimum <= result.max_flops <= optimum + image
    for batch in result.batches:
        assert batch.final_flops == pytest.approx(batch.base_flops + batch.images_added * image)


@pytest.mark.parametrize(("videos", "beta", "expected"), [(30, 0.1, 3), (30, 0.0, 0), (25, 0.1, 2), (35, 0.1, 4)])
def test_image_budget_rounds_half_to_even(videos: int, beta: float, expected: int) -> None:
    assert image_budget(videos, beta) == expected


def test_image_budget_accepts_per_batch_counts() -> None:
    assert image_budget([10, 10, 10], 0.1) == 3


@pytest.mark.parametrize(
    ("frames", "height", "width", "expected"),
    [
        (204, 544, 992, (204, "landscape")),
        (150, 1080, 1080, (136, "square")),
        (90, 992, 544, (68, "portrait")),
    ],
)
def test_bucketize(frames: int, height: int, width: int, expected: tuple[int, str]) -> None:
    assignment = bucketize(frames, height, width)

    assert (assignment.frame_bucket, assignment.aspect) == expected


def test_single_frame_goes_to_image_bucket() -> None:
    assert bucketize(1, 720, 1280).frame_bucket == 1


def _clip(clip_id: str, frames: int, height: int = 256, width: int = 256) -> ClipRecord:
    return ClipRecord(id=clip_id, frames=frames, height=height, width=width, source_url="s3://clips")


def test_streaming_planner_pads_cached_batches() -> None:
    table = reference_table()
    config = balancer_config(table, beta=0.5, cache_n=2)
    clips = [
        _clip("i1", 1),
        _clip("i2", 1),
        _clip("i3", 1),
        _clip("v1", 204),
        _clip("v2", 204, 544, 992),
        _clip("v3", 68),
        _clip("v4", 68),
        _clip("v5", 68),
        _clip("v6", 70),
    ]

    plan = plan_clips(clips, table, config=config)

    batches = plan.padded_batches
    assert [b.batch_id for b in batches] == [0, 1, 2]
    assert [b.bucket for b in batches] == ["204x256x256", "204x192x320", "68x256x256"]
    # One image for the first two batches goes to the lighter 192x320 batch
    assert batches[1].image_ids == ["i1"]
    assert batches[1].final_flops == pytest.approx(1592.61 + IMAGE)
    # round(0.5 * 3) = 2 images for the cached 68-frame batch
    assert batches[2].sample_ids == ["v3", "v4", "v5"]
    assert batches[2].image_ids == ["i2", "i3"]
    assert batches[2].final_flops == pytest.approx(3 * 509.31 + 2 * IMAGE)
    assert plan.leftover_videos == ["v6"]
    assert plan.unused_images == []


def test_read_manifest_reports_bad_line(tmp_path: Path) -> None:
    path = tmp_path / "clips.jsonl"
    path.write_text(
        json.dumps({"id": "a", "frames": 68, "height": 256, "width": 256, "source_url": "u", "duration_s": 2.7})
        + "\n\n{broken\n",
        encoding="utf-8",
    )

    with pytest.raises(ManifestError, match="clips.jsonl:3"):
        read_manifest(path)


def test_read_manifest_ignores_unknown_fields(tmp_path: Path) -> None:
    path = tmp_path / "clips.jsonl"
    path.write_text(
        json.dumps({"id": "a", "frames": 68, "height": 256, "width": 256, "caption": "a cat"}) + "\n",
        encoding="utf-8",
    )

    assert [c.id for c in read_manifest(path)] == ["a"]
