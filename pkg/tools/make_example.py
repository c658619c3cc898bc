"""Regenerate the bundled example cohort (src/mvlme/example/cohort.csv).

Three groups of sizes 140, 125 and 60; outcomes fev1 and depindex observed at
shared encounters aged 6 to 20, with some depindex cells missing.  fev1 depends
on the 5-year window mean of depindex's latent trajectory with alpha = -20.
"""
import numpy as np
import pandas as pd

ALPHA, WINDOW = -20.0, 5.0


def main(path="src/mvlme/example/cohort.csv", seed=11):
    rng = np.random.default_rng(seed)
    rows = []
    sid = 0
    for group, n in (("north", 140), ("south", 125), ("west", 60)):
        for _ in range(n):
            sid += 1
            n_i = rng.integers(4, 13)
            t = np.round(np.sort(rng.uniform(6, 20, n_i)), 2)
            t = np.unique(t)
            gender = rng.integers(0, 2)
            genotype = rng.choice(["other", "het", "hom"], p=[0.2, 0.4, 0.4])
            d0 = 0.35 + rng.normal(0, 0.1)
            d1 = 0.004 + rng.normal(0, 0.004)
            lo = np.maximum(t - WINDOW, 0.0)
            window_mean = d0 + d1 * (lo + t) / 2
            f0 = rng.normal(0, 6)
            f1 = rng.normal(0, 0.8)
            fev = (100 + f0 - (1.5 + f1) * (t - 6) + 2.0 * gender
                   - {"other": 0, "het": 3, "hom": 6}[genotype]
                   + ALPHA * window_mean + rng.normal(0, 4, t.size))
            dep = d0 + d1 * t + rng.normal(0, 0.02, t.size)
            dep[rng.uniform(size=t.size) < 0.1] = np.nan
            for j in range(t.size):
                rows.append({"id": f"p{sid:04d}", "time": t[j], "fev1": round(fev[j], 2),
                             "depindex": None if np.isnan(dep[j]) else round(dep[j], 4),
                             "gender": gender, "genotype": genotype, "state": group})
    pd.DataFrame(rows).to_csv(path, index=False)


if __name__ == "__main__":
    main()
