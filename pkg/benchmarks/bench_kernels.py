"""Timings of the hot kernels: compiled core against the pure-NumPy fallback.

Run: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from cogneq._kernels import get_backend
from cogneq.network import Profile, Strategy, generate_scenario
from cogneq.sensing import SensingModel
from cogneq.solver import best_response, cold_start, player_data


def _instance(Q=3, N=8):
    scn = generate_scenario(1, Q=Q, N=N, L=5, dist_ratio=10.0, pu_gain=1e-3,
                            normalize_direct=True, los_factor=5.0, c=1.0,
                            Imax_local=0.5)
    model = SensingModel.from_snr(Q, N, snr_det=1.0)
    prof = Profile(x=[Strategy(1.1, np.full(N, 0.08), 0.3) for _ in range(Q)])
    return scn, model, prof


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    scn, model, prof = _instance()
    pld = player_data(0, prof, scn, model)
    x0 = cold_start(pld)
    rng = np.random.default_rng(0)
    pts = [np.concatenate(([rng.uniform(0, 3)], rng.uniform(0, 0.4, scn.N),
                           [rng.uniform(0, 0.6)])) for _ in range(1000)]

    rows = []
    for name in ("python", "compiled"):
        try:
            K = get_backend(name)
        except ImportError:
            print(f"{name}: unavailable (extension not built)")
            continue

        t_eval = _time(lambda: [K.eval_obj_grad(x0, pld, 0.8)
                                for _ in range(1000)], args.repeat) / 1000
        t_proj = _time(lambda: [K.project_player(p, pld) for p in pts],
                       args.repeat) / len(pts)
        t_inner = _time(lambda: K.inner_solve(x0, pld, 0.8, grad_tol=1e-7,
                                              max_iter=4000), args.repeat)

        import os
        os.environ["COGNEQ_BACKEND"] = name
        import importlib
        import cogneq._kernels as km
        importlib.reload(km)
        import cogneq.solver as sv
        importlib.reload(sv)
        t_br = _time(lambda: sv.best_response(0, prof, 0.0, scn, model),
                     max(1, args.repeat // 2))
        rows.append((name, t_eval, t_proj, t_inner, t_br))

    print(f"{'backend':<10} {'eval_obj_grad':>14} {'project':>10} "
          f"{'inner_solve':>12} {'best_response':>14}")
    for name, t_eval, t_proj, t_inner, t_br in rows:
        print(f"{name:<10} {t_eval * 1e6:>11.1f} us {t_proj * 1e6:>7.1f} us "
              f"{t_inner * 1e3:>9.2f} ms {t_br * 1e3:>11.2f} ms")
    if len(rows) == 2:
        print(f"\nspeedup (python / compiled): "
              f"eval {rows[0][1] / rows[1][1]:.1f}x, "
              f"project {rows[0][2] / rows[1][2]:.1f}x, "
              f"inner {rows[0][3] / rows[1][3]:.1f}x, "
              f"best-response {rows[0][4] / rows[1][4]:.1f}x")

    # restore auto selection
    import os
    os.environ.pop("COGNEQ_BACKEND", None)


if __name__ == "__main__":
    main()
