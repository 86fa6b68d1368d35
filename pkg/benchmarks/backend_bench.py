"""Compare the Monte Carlo trial kernel backends.

Runs the same pre-drawn noise batch through the pure-numpy kernel and,
when built, the compiled one, and reports wall time per backend plus
the speedup. Usage:

    python3 benchmarks/backend_bench.py [--trials 20000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from droopmle import _backend, _design, cli, experiment, measurement


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--delta", type=float, default=0.005)
    args = parser.parse_args()

    spec = cli.load_spec()
    config = spec.scenario
    plan = spec.build_plan(args.delta)
    trace = measurement.simulate_training(config, plan)
    alphas = _design.slot_alphas(
        plan.deviations, config.rated_voltage, config.min_voltage
    )
    controller = spec.controllers[0]
    sigma = float(np.sqrt(spec.noise_variance()))
    noise = experiment.trial_noise(
        spec.seed, 0, args.trials, controller, sigma, plan.slots
    )
    kernel_args = (
        trace.voltages,
        trace.nominal_voltage,
        noise,
        plan.deviations,
        alphas,
        controller - 1,
        config.capacities[controller - 1],
        config.rated_voltage,
        False,
    )

    results = {}
    outputs = {}
    for name in _backend.available_backends():
        previous = _backend.set_backend(name)
        try:
            _backend.estimate_batch(*kernel_args)  # warm up
            best = float("inf")
            for _ in range(args.repeats):
                start = time.perf_counter()
                outputs[name] = _backend.estimate_batch(*kernel_args)
                best = min(best, time.perf_counter() - start)
            results[name] = best
        finally:
            _backend.set_backend(previous)

    print(f"{args.trials} trials, {plan.slots} slots, "
          f"{config.unit_count} units, best of {args.repeats}:")
    for name, seconds in results.items():
        rate = args.trials / seconds
        print(f"  {name:>9}: {seconds * 1e3:8.2f} ms  ({rate:,.0f} trials/s)")
    if len(results) == 2:
        speedup = results["python"] / results["compiled"]
        print(f"  compiled is {speedup:.1f}x the python backend")
        worst = max(
            float(np.max(np.abs(outputs["python"][i] - outputs["compiled"][i])))
            for i in range(2)
        )
        print(f"  max |difference| between backends: {worst:.3e}")
    else:
        print("  compiled backend not built; only the python kernel was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
