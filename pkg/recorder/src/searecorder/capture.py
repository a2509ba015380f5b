"""Capture per-step features from a pipeline and write them as SEATRAJ.

The recorder subscribes read-only observers at named module paths, slices
the image-token span out of concatenated sequences (overridable), undoes the
model's patchify to recover grid-shaped tensors, and stores steps in
sampling order (descending t).  Since the format has no metadata field, the
capture configuration goes into a JSON run log next to the output file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import seatraj
from .pipeline import ToyDiTPipeline, load_pipeline


class CapturePointError(LookupError):
    """A requested capture point does not exist in the model graph."""


class ReshapeError(ValueError):
    """Captured tokens cannot be reshaped to the declared grid."""


@dataclass(frozen=True)
class CapturePlan:
    """What to record and how to lay it out on the latent grid.

    `grid` is (C, F, H, W); `patch` and `token_order` spell out the model's
    patchify convention instead of guessing it.  When `image_token_slice`
    is set (the default), only the image span of a concatenated text+image
    sequence is recorded.
    """

    model_id: str
    first_block_input: bool = True
    last_block_output: bool = False
    grid: tuple[int, int, int, int] = (4, 1, 16, 16)
    patch: int = 2
    token_order: str = "patch-row-major"
    image_token_slice: bool = True
    steps_to_record: tuple[int, ...] | None = None  # None = all solver steps
    input_path: str | None = None   # default: the pipeline's first-block pre-attention
    output_path: str | None = None  # default: the pipeline's last-block output

    def __post_init__(self):
        if not (self.first_block_input or self.last_block_output):
            raise ValueError("plan captures nothing: enable an input or output point")
        if self.token_order != "patch-row-major":
            raise ValueError(f"unsupported token order {self.token_order!r}")
        if min(self.grid) < 1:
            raise ValueError(f"grid dims must be positive, got {self.grid}")


def _resolve_path(pipeline, path: str | None, default: str) -> str:
    chosen = path or default
    if chosen not in pipeline.hook_points():
        raise CapturePointError(
            f"capture point {chosen!r} not found in the model graph; "
            f"searched module paths: {pipeline.hook_points()}")
    return chosen


def _tokens_to_grid(plan: CapturePlan, pipeline, tokens: np.ndarray) -> np.ndarray:
    C, F, H, W = plan.grid
    if plan.image_token_slice:
        lo, hi = pipeline.image_token_span
        tokens = tokens[lo:hi]
    n_tokens, token_dim = tokens.shape
    grid_elems = C * F * H * W
    if n_tokens * token_dim != grid_elems:
        raise ReshapeError(
            f"token payload {n_tokens} x {token_dim} = {n_tokens * token_dim} values "
            f"does not factor as C x F x H x W = {C} x {F} x {H} x {W} = {grid_elems}")
    p = plan.patch
    if F != 1:
        raise ReshapeError("the reference pipeline records 2D latents (F = 1)")
    if H % p or W % p or token_dim != C * p * p or n_tokens != (H // p) * (W // p):
        raise ReshapeError(
            f"tokens of shape {n_tokens} x {token_dim} do not match a patch-{p} "
            f"layout of a {C} x {H} x {W} grid (expected {(H // p) * (W // p)} x {C * p * p})")
    gh, gw = H // p, W // p
    return tokens.reshape(gh, gw, C, p, p).transpose(2, 0, 3, 1, 4).reshape(C, H, W)


def record_run(plan: CapturePlan, prompt: str, seed: int, out_path,
               pipeline: ToyDiTPipeline | None = None) -> dict:
    """Run the pipeline once and write one SEATRAJ file plus a JSON run log.

    Returns the run-log dictionary.  Observation is pure: outputs of the
    instrumented run are bitwise identical to an unobserved run.
    """
    pipeline = pipeline if pipeline is not None else load_pipeline(plan.model_id)
    captured: dict[str, dict[int, np.ndarray]] = {}
    observers = {}
    paths = {}
    if plan.first_block_input:
        paths["input"] = _resolve_path(pipeline, plan.input_path, pipeline.first_block_input_path)
    if plan.last_block_output:
        paths["output"] = _resolve_path(pipeline, plan.output_path, pipeline.last_block_output_path)
    if len(set(paths.values())) != len(paths):
        raise ValueError(f"input and output capture points must differ, both are {paths['input']!r}")
    if plan.steps_to_record is not None:
        bad = [t for t in plan.steps_to_record if not 1 <= t <= pipeline.scheduler.T]
        if bad:
            raise ValueError(f"steps {bad} outside the solver range [1, {pipeline.scheduler.T}]")
    for role, path in paths.items():
        store = captured.setdefault(role, {})

        def observer(t, value, store=store):
            store[t] = value

        observers[path] = observer

    pipeline.run(prompt, seed, observers=observers)

    sched = pipeline.scheduler
    wanted = set(plan.steps_to_record) if plan.steps_to_record is not None else None
    steps = []
    for t in range(sched.T, 0, -1):
        if wanted is not None and t not in wanted:
            continue
        inp = captured.get("input", {}).get(t)
        outp = captured.get("output", {}).get(t)
        steps.append((
            t,
            None if inp is None else _tokens_to_grid(plan, pipeline, inp),
            None if outp is None else _tokens_to_grid(plan, pipeline, outp),
        ))

    C, F, H, W = plan.grid
    data = seatraj.encode(rank=2, dims=(C, F, H, W), schedule_kind=sched.kind_byte,
                          a=sched.a, b=sched.b, steps=steps)
    with open(out_path, "wb") as fh:
        fh.write(data)

    run_log = {
        "model_id": plan.model_id,
        "prompt": prompt,
        "seed": seed,
        "solver_steps": sched.T,
        "capture_points": paths,
        "capture_semantics": "features taken after the timestep modulation (the measured proxy)",
        "grid": list(plan.grid),
        "patch": plan.patch,
        "token_order": plan.token_order,
        "image_token_slice": plan.image_token_slice,
        "recorded_steps": [s[0] for s in steps],
    }
    with open(str(out_path) + ".runlog.json", "w") as fh:
        json.dump(run_log, fh, indent=2)
        fh.write("\n")
    return run_log
