"""Dense-vs-separable kernel benchmark with a built-in correctness gate.

Every case first verifies the separable fusion path against the dense path
run on the expanded (outer-product) kernels; no timing is reported unless
the relative residual is below 1e-5. Timings are wall-clock per fused
pyramid (one frame), median and min over the repetitions after warmup. The
quantity the harness is really about is the per-pixel kernel parameter
count: n*n stored values per pixel for dense fields versus 2n for
separable ones.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fusion
from .tensor import SeededRng


class BenchCorrectnessError(RuntimeError):
    def __init__(self, case, residual):
        super().__init__(
            f"{case.descriptor()}: residual {residual:.3e} exceeds 1e-5; timing aborted"
        )
        self.case = case
        self.residual = residual


@dataclass(frozen=True)
class BenchCase:
    mode: str
    kernel_size: int
    resolutions: tuple[int, ...]
    channels: int = 4
    repetitions: int = 5
    warmup: int = 1

    def __post_init__(self):
        if self.mode not in ("dense", "separable"):
            raise ValueError(f"mode must be dense|separable, got {self.mode!r}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 3:
            raise ValueError(f"kernel size must be odd >= 3, got {self.kernel_size}")
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3")
        if self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        if not self.resolutions:
            raise ValueError("need at least one resolution")

    @property
    def scales(self) -> int:
        return len(self.resolutions)

    def descriptor(self) -> str:
        return f"{self.mode}-n{self.kernel_size}-S{self.scales}"


@dataclass
class BenchResult:
    case: BenchCase
    descriptor: str
    params_per_pixel: int
    total_kernel_values: int
    median_ns: int
    min_ns: int
    residual: float
    peak_bytes: int

    def csv_row(self) -> str:
        return (
            f"{self.descriptor},{self.case.kernel_size},{self.case.scales},"
            f"{self.case.mode},{self.params_per_pixel},{self.median_ns},"
            f"{self.min_ns},{self.residual:.3e}"
        )


CSV_HEADER = "case,n,S,mode,params_per_pixel,median_ns,min_ns,residual"


def _case_inputs(case: BenchCase, seed: int):
    rng = SeededRng(seed)
    n = case.kernel_size
    pyramid, separable, dense, masks = [], [], [], []
    for res in case.resolutions:
        pyramid.append(rng.normals((case.channels, res, res), dtype=np.float32))
        wv = rng.normals((res, res, n), dtype=np.float32)
        wh = rng.normals((res, res, n), dtype=np.float32)
        separable.append(fusion.SeparableKernelField(wv, wh))
        dense.append(
            fusion.DenseKernelField(fusion.flatten_kernel(fusion.expand_kernel(wv, wh)))
        )
        masks.append(np.full((res, res), 0.5, dtype=np.float32))
    return pyramid, separable, dense, masks


def _residual(pyramid, separable, dense, masks) -> float:
    sep_out, _ = fusion.fuse_pyramid_forward(pyramid, separable, masks)
    den_out, _ = fusion.fuse_pyramid_forward(pyramid, dense, masks)
    worst = 0.0
    for a, b in zip(sep_out, den_out):
        scale = max(float(np.linalg.norm(b)), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - b)) / scale)
    return worst


def _fuse_once(pyramid, kernels, masks, pool=None):
    if pool is None:
        return fusion.fuse_pyramid_forward(pyramid, kernels, masks)
    jobs = [
        pool.submit(fusion.adaptive_conv_forward, h, k)
        for h, k in zip(pyramid, kernels)
    ]
    refined = []
    for h, m, job in zip(pyramid, masks, jobs):
        ht, _ = job.result()
        out, _ = fusion.mask_blend_forward(h, ht, m)
        refined.append(out)
    return refined, None


def run_case(case: BenchCase, seed: int = 0, pool=None) -> BenchResult:
    pyramid, separable, dense, masks = _case_inputs(case, seed)
    residual = _residual(pyramid, separable, dense, masks)
    if residual >= 1e-5:
        raise BenchCorrectnessError(case, residual)
    kernels = separable if case.mode == "separable" else dense
    for _ in range(case.warmup):
        _fuse_once(pyramid, kernels, masks, pool)
    samples = []
    for _ in range(case.repetitions):
        t0 = time.perf_counter_ns()
        _fuse_once(pyramid, kernels, masks, pool)
        samples.append(time.perf_counter_ns() - t0)
    counts = fusion.kernel_param_count(
        case.kernel_size, case.scales, case.mode, case.resolutions
    )
    # padded content + kernel values + windowed patches + output, float32
    n = case.kernel_size
    peak = sum(
        4 * (case.channels * (r + n - 1) ** 2 + case.channels * r * r * (1 + n * n))
        for r in case.resolutions
    ) + 4 * counts["total"]
    return BenchResult(
        case=case,
        descriptor=case.descriptor() + ("-par" if pool is not None else ""),
        params_per_pixel=counts["per_pixel"],
        total_kernel_values=counts["total"],
        median_ns=int(np.median(samples)),
        min_ns=int(np.min(samples)),
        residual=residual,
        peak_bytes=peak,
    )


def run_bench(cases, seed: int = 0, parallel: bool = False) -> list[BenchResult]:
    """Verify then time every case; with `parallel` also time a threaded
    per-scale variant of each case."""
    results = [run_case(case, seed) for case in cases]
    if parallel:
        with ThreadPoolExecutor() as pool:
            results.extend(run_case(case, seed, pool) for case in cases)
    return results


def results_to_csv(results) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in results]) + "\n"
