#!/usr/bin/env python3
"""Generate the desk-scale estimate-mode fixture CSVs committed under tests/fixtures/.

A tiny S2-flavored dataset: 200 population units with two covariates, an
SRSWOR probability sample of 40 with observed outcomes, and an outcome-
dependent non-probability sample.  Regeneration with the same seed is byte
identical.
"""

import csv
from pathlib import Path

import numpy as np
from scipy.special import expit


def main() -> None:
    rng = np.random.default_rng(77)
    n = 200
    x = rng.standard_normal((n, 2))
    y = x[:, 0] + x[:, 1] + rng.normal(0, 2.0, size=n)
    pi_b = expit(-0.3 + 0.5 * x[:, 0] + 0.5 * x[:, 1] + 0.2 * y)
    delta = rng.random(n) < pi_b
    a_idx = np.sort(rng.choice(n, size=40, replace=False))

    fixtures = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)

    with (fixtures / "estimate_population.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2"])
        for row in x:
            w.writerow([repr(float(row[0])), repr(float(row[1]))])

    with (fixtures / "estimate_prob_sample.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "inclusion_prob", "y"])
        for i in a_idx:
            w.writerow([i + 1, repr(40 / n), repr(float(y[i]))])

    with (fixtures / "estimate_nonprob_sample.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "y"])
        for i in np.flatnonzero(delta):
            w.writerow([i + 1, repr(float(y[i]))])

    print(f"population mean y = {y.mean():.6f}, n_B = {delta.sum()}")


if __name__ == "__main__":
    main()
