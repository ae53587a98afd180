"""Acceptance suite: one test per criterion, one PASS line each (run with -s).

Hermetic criteria use the deterministic analytic cost model; the final
smoke test compiles and times real kernels and skips cleanly when no C
toolchain is available.
"""

import json
import os
import random
import statistics
import time

import pytest

from matfuse.cemit import emit_c
from matfuse.corpus import SMALL_KERNELS, TABLE_KERNELS
from matfuse.cost import AnalyticCost, MachineModel, cached
from matfuse.fuse import (
    Limits, canonical_key, digit_space_size, enumerate_space, format_notation,
    fusion_legal, initial_forest, joint_partitions, parse_notation,
)
from matfuse.interp import reference_evaluate
from matfuse.lower import contract_arrays, lower
from matfuse.runtime import (
    Toolchain, max_rel_error, random_inputs, run_kernel, time_binary, workdir,
)
from matfuse.search import (
    SearchConfig, crossover, max_fuse, mutate, random_organism, run_strategy,
)

CORES = 24  # matches the largest machine the search defaults were sized for


def analytic_fitness(graph, cores=CORES, M=1000, N=1000):
    extents = tuple(
        (name, {"M": M, "N": N}.get(name, M)) for name in graph.extent_names
    )
    machine = MachineModel(core_count=cores, extents=extents)
    return cached(AnalyticCost(graph, machine))


@pytest.fixture(scope="module")
def exhaustive_optima(corpus_graphs):
    """Full per-partition-thread enumeration of the five small kernels."""
    out = {}
    for name in SMALL_KERNELS:
        g = corpus_graphs[name]
        cfg = SearchConfig(core_count=CORES, thread_mode="exhaustive")
        res = run_strategy("exhaustive", g, cfg, analytic_fitness(g))
        out[name] = res
    return out


def test_criterion_1_correctness_suite(corpus_graphs, toolchain):
    """All 9 kernels: max-fuse + 50 random legal organisms match the
    reference evaluator within 1e-10 at extents drawn from {1,7,50,200}."""
    t0 = time.perf_counter()
    extent_pairs = [
        {"M": 1, "N": 1}, {"M": 1, "N": 7}, {"M": 7, "N": 1}, {"M": 2, "N": 2},
        {"M": 7, "N": 50}, {"M": 50, "N": 200}, {"M": 200, "N": 200},
    ]
    cfg = SearchConfig(core_count=8)
    worst = 0.0
    checked = 0
    for name in TABLE_KERNELS:
        g = corpus_graphs[name]
        rng = random.Random(1234)
        organisms = {canonical_key(max_fuse(g, 8)): max_fuse(g, 8)}
        draws = 0
        while draws < 50:
            org = random_organism(g, rng, cfg, steps=rng.randrange(1, 14))
            organisms.setdefault(canonical_key(org), org)
            draws += 1
        wd = workdir()
        for idx, org in enumerate(organisms.values()):
            assert fusion_legal(org, g) is None
            kernel = emit_c(contract_arrays(lower(org, g)),
                            {"M": 200, "N": 200})
            lib = toolchain.compile(kernel.source, wd, name=f"k{idx}",
                                    shared=True)
            for extents in extent_pairs:
                inputs = random_inputs(g, extents, seed=idx)
                got = run_kernel(lib, kernel, g, inputs, extents)
                want = reference_evaluate(g.spec, inputs)
                err = max_rel_error(got, want)
                worst = max(worst, err)
                assert err < 1e-10, (name, kernel.organism_key, extents, err)
                checked += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 600
    print(f"\nPASS criterion 1: {checked} kernel/extent validations across "
          f"{len(TABLE_KERNELS)} kernels, worst relative error {worst:.2e}, "
          f"{elapsed:.0f}s")


def test_criterion_2_legality_by_construction(all_graphs):
    """10,000 organisms from mutation/crossover chains all pass the
    legality check; the two classic negative cases are rejected with the
    right diagnostic categories."""
    cfg = SearchConfig(core_count=8)
    produced = 0
    per_kernel = 10_000 // len(all_graphs)
    for name, g in sorted(all_graphs.items()):
        rng = random.Random(99)
        pool = [initial_forest(g), max_fuse(g, 8)]
        while produced < per_kernel * (sorted(all_graphs).index(name) + 1):
            if rng.random() < 0.6 or len(pool) < 2:
                org = mutate(pool[rng.randrange(len(pool))], g, rng, cfg)
            else:
                a = pool[rng.randrange(len(pool))]
                b = pool[rng.randrange(len(pool))]
                org = crossover(a, b, g, rng)
            diag = fusion_legal(org, g)
            assert diag is None, (name, format_notation(org), str(diag))
            produced += 1
            pool.append(org)
            if len(pool) > 40:
                pool = pool[-40:]
    assert produced >= 10_000

    batax = all_graphs["batax"]
    # fuse set d: ops 1 and 3 grouped with op 2 outside
    d = parse_notation("{_{p(j)}{_i{_j 1}}{_j 3}}{_i{_j 2}}", batax)
    diag = fusion_legal(d, batax)
    assert diag is not None and diag.rule == "dependence" and 2 in diag.ops
    # inner-loop fusion of ops 1 and 2
    c = parse_notation("{_i{_j 1 2}}{_j 3}", batax)
    diag = fusion_legal(c, batax)
    assert diag is not None and diag.rule == "reduction"
    print(f"\nPASS criterion 2: {produced} mutated/crossed organisms all "
          "legal; dependence and reduction negatives rejected correctly")


def test_criterion_3_batax_worked_example(batax):
    """Exact max-fuse organism and the unique joint partition pair."""
    org = max_fuse(batax, core_count=CORES)
    assert format_notation(org) == \
        "{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}"
    assignments = joint_partitions([1, 2], batax)
    assert len(assignments) == 1
    chosen = assignments[0]
    assert chosen[1].axis == "i" and chosen[2].axis == "i"
    assert chosen[1].sliced == ("A", "t0") and not chosen[1].parallel_reduction
    assert chosen[2].sliced == ("A", "t0") and chosen[2].parallel_reduction
    print("\nPASS criterion 3: max-fuse reproduces "
          "{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}; joint partitions on "
          "{1,2} reduce to the rows-of-A pair")


def test_criterion_4_space_reduction(batax):
    """Digit encoding size is 1,259,712; the legal space is under 0.1%."""
    digits = digit_space_size(3, 3, 8)
    assert digits == 1_259_712
    legal = sum(1 for _ in enumerate_space(batax, Limits(max_threads=8)))
    ratio = legal / digits
    assert ratio < 0.001
    print(f"\nPASS criterion 4: digit space {digits:,}; legal space {legal} "
          f"({ratio:.4%} of the digit encoding)")


def test_criterion_5_mfga_vs_exhaustive(corpus_graphs, exhaustive_optima):
    """MFGA lands within 2% of the exhaustive optimum on the five small
    kernels, five seeds each, at M=N=1000."""
    t0 = time.perf_counter()
    worst_ratio = 1.0
    for name in SMALL_KERNELS:
        g = corpus_graphs[name]
        optimum = exhaustive_optima[name].best_fitness
        for seed in range(5):
            cfg = SearchConfig(core_count=CORES, seed=seed, generations=60,
                               budget=600)
            res = run_strategy("mfga", g, cfg, analytic_fitness(g))
            ratio = res.best_fitness / optimum
            worst_ratio = max(worst_ratio, ratio)
            assert ratio <= 1.02, (name, seed, ratio)
    elapsed = time.perf_counter() - t0
    assert elapsed < 900
    print(f"\nPASS criterion 5: MFGA within 2% of exhaustive optimum on "
          f"{len(SMALL_KERNELS)} kernels x 5 seeds (worst ratio "
          f"{worst_ratio:.4f}), {elapsed:.0f}s")


def test_criterion_6_strategy_ordering(corpus_graphs):
    """GEMVER at equal 1,000-evaluation budgets, median of five seeds:
    mfga <= ga <= random and mfga <= mf."""
    g = corpus_graphs["gemver"]
    medians = {}
    for strategy in ("mfga", "ga", "random", "mf"):
        bests = []
        for seed in range(5):
            cfg = SearchConfig(core_count=CORES, seed=seed, generations=200,
                               budget=1000)
            res = run_strategy(strategy, g, cfg, analytic_fitness(g))
            assert res.evaluations <= 1000
            bests.append(res.best_fitness)
        medians[strategy] = statistics.median(bests)
    assert medians["mfga"] <= medians["ga"] <= medians["random"]
    assert medians["mfga"] <= medians["mf"]
    print("\nPASS criterion 6: median best cost "
          f"mfga {medians['mfga']:.0f} <= ga {medians['ga']:.0f} <= "
          f"random {medians['random']:.0f}; mfga <= mf {medians['mf']:.0f}")


def test_criterion_7_orthogonal_efficiency(corpus_graphs, exhaustive_optima):
    """Orthogonal search reaches the exhaustive optimum on all five small
    kernels with at most 10% of exhaustive's evaluations."""
    for name in SMALL_KERNELS:
        g = corpus_graphs[name]
        exh = exhaustive_optima[name]
        res = run_strategy("orthogonal", g, SearchConfig(core_count=CORES),
                           analytic_fitness(g))
        spent = res.evaluations + res.sweeps
        assert res.best_fitness == exh.best_fitness, name
        assert spent <= 0.10 * exh.evaluations, (name, spent, exh.evaluations)
    print("\nPASS criterion 7: orthogonal search matches every exhaustive "
          "optimum within 10% of the evaluations")


def test_criterion_8_determinism(corpus_graphs):
    """Identical (kernel, strategy, seed, config) runs produce
    byte-identical logs and emitted C."""
    for name, strategy in (("atax", "mfga"), ("vadd", "random"),
                           ("gemver", "mfga")):
        g = corpus_graphs[name]
        artifacts = []
        for _ in range(2):
            cfg = SearchConfig(core_count=CORES, seed=7, generations=12,
                               budget=200)
            res = run_strategy(strategy, g, cfg, analytic_fitness(g))
            log_bytes = "\n".join(
                json.dumps(e.as_dict(), sort_keys=True) for e in res.log
            ).encode()
            source = emit_c(contract_arrays(lower(res.best, g)),
                            {"M": 100, "N": 100}).source.encode()
            artifacts.append((log_bytes, source))
        assert artifacts[0][0] == artifacts[1][0], (name, "log differs")
        assert artifacts[0][1] == artifacts[1][1], (name, "source differs")
    print("\nPASS criterion 8: byte-identical logs and C across repeated "
          "runs (3 kernel/strategy pairs)")


def test_criterion_9_empirical_smoke(corpus_graphs, have_cc):
    """GEMVER at M=N=2000: the MFGA-selected kernel's median runtime over
    five trials is no worse than the unfused baseline's."""
    if not have_cc:
        pytest.skip("no C toolchain configured; empirical smoke test skipped")
    toolchain = Toolchain()
    g = corpus_graphs["gemver"]
    cores = os.cpu_count() or 1
    cfg = SearchConfig(core_count=cores, seed=0, generations=40, budget=400)
    res = run_strategy("mfga", g, cfg,
                       analytic_fitness(g, cores=cores, M=2000, N=2000))
    extents = {"M": 2000, "N": 2000}

    def median_runtime(org):
        kernel = emit_c(contract_arrays(lower(org, g)), extents)
        binary = toolchain.compile(kernel.source, workdir(), name="bench")
        trials = [time_binary(binary, extents, g.extent_names, reps=3)
                  for _ in range(5)]
        return statistics.median(trials)

    tuned = median_runtime(res.best)
    baseline = median_runtime(initial_forest(g))
    assert tuned <= baseline, (tuned, baseline)
    print(f"\nPASS criterion 9: tuned GEMVER median {tuned:.4f}s <= unfused "
          f"baseline {baseline:.4f}s at M=N=2000 "
          f"(speedup {baseline / tuned:.2f}x)")
