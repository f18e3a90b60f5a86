"""Independent evaluation of the theoretical exploration schedule.

Writes golden/schedule.csv with log|Xi_t| and beta_t for 20 random
(t, |A|, |C|, a, b) tuples, computed in 50-digit arithmetic. The Rust
acceptance harness compares against this file.

    python3 golden/schedule.py
"""

import csv
import random
from pathlib import Path

from mpmath import mp, mpf, log, pi, sqrt

mp.dps = 50


def log_xi(t, na, nc, a, b):
    ac = na * nc
    base = mpf(b) * ac * mpf(t) ** 2 * (log(mpf(a) * ac) + sqrt(pi) / 2)
    return ac * log(base) if base > 1 else mpf(0)


def beta(t, na, nc, a, b):
    # 2 log(|A||C| |Xi_t| t^2 / sqrt(2 pi))
    return 2 * (log(na * nc) + log_xi(t, na, nc, a, b) + 2 * log(t) - log(2 * pi) / 2)


def main():
    rng = random.Random(8)
    out = Path(__file__).with_name("schedule.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "num_actions", "num_contexts", "a", "b", "log_xi", "beta"])
        for _ in range(20):
            t = rng.randint(1, 1000)
            na, nc = rng.randint(1, 50), rng.randint(1, 5)
            a, b = round(rng.uniform(0.2, 5.0), 6), round(rng.uniform(0.2, 5.0), 6)
            w.writerow([t, na, nc, a, b, mp.nstr(log_xi(t, na, nc, a, b), 25), mp.nstr(beta(t, na, nc, a, b), 25)])


if __name__ == "__main__":
    main()
