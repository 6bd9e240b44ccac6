"""Regenerates the bundled two-regime market CSV. Deterministic; run from repo root.

The drift/half-width parameters are tuned so that trend tests on the fixture
are structurally stable: one asset dominates the empirical ranking in both
regimes by >3 sigma of the 60-day window mean, and every asset has a worst
bounded draw below zero so full contamination empties the risky book.
"""
import datetime

import numpy as np

T = 420
SWITCH = 200
MU1 = np.array([0.01075, 0.0040, 0.0030])
H1 = np.array([0.0130, 0.0140, 0.0150])
MU2 = MU1 * np.array([0.65, 0.40, 0.40])
H2 = H1 * np.array([1.15, 1.35, 1.35])
SEED = 20240
TICKERS = ("ALPHA", "BRAVO", "CHARLIE")


def main(path="tests/data/two_regime.csv"):
    rng = np.random.default_rng(SEED)
    u = rng.uniform(-1.0, 1.0, size=(T, 3))
    rets = np.empty((T, 3))
    rets[:SWITCH] = MU1 + H1 * u[:SWITCH]
    rets[SWITCH:] = MU2 + H2 * u[SWITCH:]
    prices = 100.0 * np.cumprod(1.0 + rets, axis=0)
    prices = np.vstack([100.0 * np.ones(3), prices])
    day = datetime.date(2021, 1, 4)
    dates = []
    while len(dates) < len(prices):
        if day.weekday() < 5:
            dates.append(day.isoformat())
        day += datetime.timedelta(days=1)
    with open(path, "w") as fh:
        fh.write("date," + ",".join(TICKERS) + "\n")
        for rd, row in zip(dates, prices):
            fh.write(rd + "," + ",".join(f"{v:.8f}" for v in row) + "\n")
    print(f"wrote {path}: {len(prices)} rows")


if __name__ == "__main__":
    main()
