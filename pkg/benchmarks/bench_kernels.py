"""Compare the compiled kernels with the NumPy fallback.

Run with ``python benchmarks/bench_kernels.py``. Prints wall time per call
and the speedup; both backends must agree to round-off.
"""

import argparse
import timeit

import numpy as np

from depolyinv import _fallback, kernels
from depolyinv.asymptotic import stencil_coefficients
from depolyinv.becker_doring import distribution_from_profile
from depolyinv.config import ModelConfig, gaussian_initial_condition

try:
    from depolyinv import _kernels
except ImportError:
    _kernels = None


def cases(scale):
    cfg = ModelConfig()
    u0 = gaussian_initial_condition(cfg, 50, 50)
    conc = np.array(distribution_from_profile(u0, cfg).concentrations)
    n_bd = int(cfg.n_bd_steps * scale)
    fine = cfg.replace(h=1e-3)
    fine = fine.replace(dt=0.9 * fine.h / (1 + fine.eps / fine.h))
    u_fine = np.array(gaussian_initial_condition(fine, 50, 50).values)
    n_st = int(2000 * scale)
    coeffs = tuple(float(c) for c in stencil_coefficients(fine))
    return {
        f"bd_run  ({conc.size} species, {n_bd} steps)":
            ("bd_run", (conc, 0.0, cfg.b * cfg.dtau, n_bd, 500)),
        f"stencil ({u_fine.size} nodes, {n_st} steps)":
            ("stencil_run", (u_fine,) + coeffs + (n_st, 100)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=0.2, help="fraction of the full step count")
    args = ap.parse_args(argv)
    print(f"selected backend: {kernels.BACKEND}")
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    for label, (name, call_args) in cases(args.scale).items():
        py = getattr(_fallback, name)
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat))
        line = f"{label:42s} python {t_py * 1e3:9.2f} ms"
        if _kernels is not None:
            cy = getattr(_kernels, name)
            t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat))
            a, b = py(*call_args), cy(*call_args)
            a = a[0] if isinstance(a, tuple) else a
            b = b[0] if isinstance(b, tuple) else b
            diff = float(np.max(np.abs(a - b)))
            line += f"  compiled {t_cy * 1e3:9.2f} ms  speedup {t_py / t_cy:6.1f}x  max|diff| {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
