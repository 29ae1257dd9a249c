"""Benchmark dense versus separable per-pixel kernels.

The harness refuses to time anything whose separable path disagrees with
the dense-expanded oracle, then reports wall time per fused pyramid and
the per-pixel kernel storage, which is where the separable form wins.
"""

from motionfuse.bench import BenchCase, results_to_csv, run_bench

cases = [
    BenchCase(mode="dense", kernel_size=17, resolutions=(64,), repetitions=5),
    BenchCase(mode="separable", kernel_size=17, resolutions=(64,), repetitions=5),
    BenchCase(mode="dense", kernel_size=5, resolutions=(8, 16, 32, 64), repetitions=5),
    BenchCase(mode="separable", kernel_size=5, resolutions=(8, 16, 32, 64), repetitions=5),
]

results = run_bench(cases, seed=0)
print(results_to_csv(results))

for r in results:
    ms = r.median_ns / 1e6
    print(
        f"{r.descriptor:<22} {r.params_per_pixel:3d} values/pixel, "
        f"{r.total_kernel_values:9,} total, {ms:7.2f} ms/frame, "
        f"~{r.peak_bytes / 1e6:.1f} MB working set"
    )
