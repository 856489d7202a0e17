"""Regenerate the bundled demo experiment data (committed as CSV).

Truth: y = 2.0 * x + 1.0 with Gaussian measurement noise sd 0.05 at 20
settings over [0, 10]. Even rows are assigned to inference, odd rows to
validation in the demo config.
"""

import numpy as np

from gpcal.fileio import write_csv

SEED = 20240811
TRUTH = (2.0, 1.0)
NOISE_SD = 0.05
N = 20


def main():
    rng = np.random.default_rng(SEED)
    x = np.linspace(0.0, 10.0, N)
    y = TRUTH[0] * x + TRUTH[1] + rng.normal(0.0, NOISE_SD, N)
    rows = [(xi, yi, NOISE_SD) for xi, yi in zip(x, y)]
    write_csv("demo/experiments.csv", ["x", "y", "sigma_exp"], rows)
    print("wrote demo/experiments.csv")


if __name__ == "__main__":
    main()
