"""Compare closed-form biases with Monte-Carlo estimates on random linear systems.

    python3 scripts/mc_bias_check.py --configs 20 --n 200000
"""
import argparse

import numpy as np

from sensa.estimators import estimate_all
from sensa.io_ingest import partial_out
from sensa.simulate import generate, population_oracle, random_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma-wy", type=float, default=None,
                   help="fix the W_Y -> Z coefficient (0 makes the proximal formula exact)")
    a = p.parse_args()
    rng = np.random.default_rng(a.seed)
    fixed = {} if a.gamma_wy is None else {"gamma_wy": a.gamma_wy}
    print(f"{'cfg':>3} {'strategy':>8} {'formula':>10} {'exact':>10} {'empirical':>10} {'z':>6}")
    for k in range(a.configs):
        cfg = random_config(rng, **fixed)
        cfg = cfg.__class__(**{**cfg.to_dict(), "n": a.n, "seed": a.seed + k})
        o = population_oracle(cfg)
        est = estimate_all(partial_out(generate(cfg, with_u=False)))
        for s in ("soo", "iv", "prox"):
            emp = est[s].tau - cfg.tau
            z = (emp - o.formula[s]) / est[s].se
            print(f"{k:>3} {s:>8} {o.formula[s]:>10.4f} {o.bias[s]:>10.4f} {emp:>10.4f} {z:>6.2f}")


if __name__ == "__main__":
    main()
