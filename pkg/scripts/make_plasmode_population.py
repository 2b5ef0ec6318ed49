#!/usr/bin/env python3
"""Generate the synthetic plasmode population committed at data/plasmode_population.csv.

A fixed finite population mimicking a large attitude survey: two regional
covariates (an ordinal x1 in 1..4 and a binary x2), a 5-level ordinal response
generated from a multinomial-linear model in (x1, x2), eight sampling strata
of uneven sizes (one small enough to trigger the minimum-allocation rule), and
four age-group domains tilted by x1.  Regenerating with the same seed
reproduces the file byte for byte.
"""

import csv
from pathlib import Path

import numpy as np

N = 30000
SEED = 20240615

STRATUM_SHARES = np.array([0.02, 0.07, 0.11, 0.15, 0.17, 0.18, 0.16, 0.14])

# multinomial-linear scores for y in {1..5}: score_j = a_j + b_j x1 + c_j x2,
# category 1 is the reference.  Covariates carry real but modest outcome
# signal (so the candidate estimating systems are well conditioned) while
# most outcome variation stays unexplained (so covariate-only weighting
# cannot remove outcome-driven selection bias).
A = np.array([0.0, -0.10, 0.10, 0.70, 0.55])
B = np.array([0.0, 0.15, 0.28, 0.42, 0.55])
C = np.array([0.0, 0.30, 0.60, 0.90, 1.20])


def main() -> None:
    rng = np.random.default_rng(SEED)
    strata = rng.choice(np.arange(1, 9), size=N, p=STRATUM_SHARES)
    x2 = (strata >= 5).astype(int)

    # ordinal regional covariate tilted by stratum
    tilt = (strata - 4.5) / 3.5
    logits = 0.8 * np.arange(1, 5)[None, :] * tilt[:, None]
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(N)
    x1 = 1 + (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)

    scores = A[None, :] + B[None, :] * x1[:, None] + C[None, :] * x2[:, None]
    p_y = np.exp(scores - scores.max(axis=1, keepdims=True))
    p_y /= p_y.sum(axis=1, keepdims=True)
    u = rng.random(N)
    y = 1 + (u[:, None] > np.cumsum(p_y, axis=1)).sum(axis=1)

    # age groups mildly associated with x1 so the domain means differ a little
    age_logits = 0.25 * np.arange(4)[None, :] * ((x1 - 2.5) / 1.5)[:, None]
    p_age = np.exp(age_logits - age_logits.max(axis=1, keepdims=True))
    p_age /= p_age.sum(axis=1, keepdims=True)
    u = rng.random(N)
    age = 1 + (u[:, None] > np.cumsum(p_age, axis=1)).sum(axis=1)

    out = Path(__file__).resolve().parents[1] / "data" / "plasmode_population.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "y", "stratum", "age_group"])
        for i in range(N):
            writer.writerow([x1[i], x2[i], y[i], strata[i], age[i]])
    print(f"wrote {out} (N={N}, mean y={y.mean():.4f})")
    logit = -2.0 + 0.2 * x2 + 0.3 * y
    pi = 1.0 / (1.0 + np.exp(-logit))
    print(f"mean selection prob under the study design: {pi.mean():.4f}")
    for d in range(1, 5):
        print(f"age group {d}: share={np.mean(age == d):.3f} mean y={y[age == d].mean():.4f}")


if __name__ == "__main__":
    main()
