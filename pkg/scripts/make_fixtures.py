#!/usr/bin/env python3
"""
Write small example data files for trying out the geodesum commands.

    python scripts/make_fixtures.py --dir fixtures
    geodesum sumcheck --coeffs fixtures/coeffs.json --spectra fixtures/spectra_d2.json
    geodesum growth --mode weyl --in fixtures/weyl_d3.json
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from geodesum.spectra import SpectralDataset, SpectralEntry, save_coeffs, save_spectral
from geodesum.transforms import CoefficientSequence

logger = logging.getLogger("make_fixtures")


def coefficients(k_max: int) -> CoefficientSequence:
    """Gaussian a_k = exp(-k**2 / 2) on -k_max..k_max."""
    k = np.arange(-k_max, k_max + 1, dtype=float)
    return CoefficientSequence(-k_max, k_max, np.exp(-0.5 * k**2), 0.3, 1.0)


def spectra_d2() -> SpectralDataset:
    """Three tempered entries and one complementary entry."""
    entries = (
        SpectralEntry(0.04j, 0.5, 0.8),
        SpectralEntry(0.35, 1.0, 0.5),
        SpectralEntry(0.9, 0.25 - 0.1j, 1.0),
        SpectralEntry(1.6, 0.1, 0.3j),
    )
    return SpectralDataset(2, entries, "make_fixtures: hand-made d=2 example")


def weyl_d3(n: int, seed: int) -> SpectralDataset:
    """lambda_j = j**(1/3) with random unit-modulus c_j."""
    rng = np.random.default_rng(seed)
    phases = np.exp(2j * np.pi * rng.random(n))
    entries = tuple(
        SpectralEntry(float(j) ** (1.0 / 3.0), complex(c), 1.0)
        for j, c in zip(range(1, n + 1), phases)
    )
    return SpectralDataset(3, entries, f"make_fixtures: Weyl-law d=3 example, seed {seed}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--dir", default="fixtures", help="Output directory")
    parser.add_argument("--k-max", type=int, default=12)
    parser.add_argument("--n-weyl", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    save_coeffs(coefficients(args.k_max), out / "coeffs.json")
    save_spectral(spectra_d2(), out / "spectra_d2.json")
    save_spectral(weyl_d3(args.n_weyl, args.seed), out / "weyl_d3.json")
    logger.info("wrote coeffs.json, spectra_d2.json and weyl_d3.json to %s", out)


if __name__ == "__main__":
    main()
