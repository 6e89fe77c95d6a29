#!/usr/bin/env python3
"""Stand-alone re-derivation of the frozen micro-instance constants.

Evaluates the coverage-weighted loss, the attraction term, and their sum
for the 1-prediction vs 2-ground-truth instance

    pred = {(0,0,0)}   gt = {(0,0,0), (1,0,0)}   eps=0.5  omega=10  lambda=1

using 50-digit arithmetic and nothing from the pcqal package. The printed
values are the source of the constants frozen in the test suite.
"""

from mpmath import mp, mpf, exp

mp.dps = 50


def sigmoid(z):
    return 1 / (1 + exp(-z))


def weight(d, eps, omega):
    # 1.5 - sigmoid(omega * (eps - d))
    return mpf("1.5") - sigmoid(omega * (eps - d))


def main():
    eps = mpf("0.5")
    omega = mpf(10)
    lam = mpf(1)

    # Nearest-neighbor distances, worked by hand:
    #   pred point (0,0,0): nearest gt is (0,0,0) at distance 0 (index 0)
    #   gt (0,0,0): nearest pred at distance 0; gt (1,0,0): nearest pred at 1
    d_a = [mpf(0)]
    d_b = [mpf(0), mpf(1)]

    cov = sum(weight(d, eps, omega) * d for d in d_a) / len(d_a) + sum(
        weight(d, eps, omega) * d for d in d_b
    ) / len(d_b)

    # Only gt index 1 is uncovered: the single pred's nearest gt is index 0.
    mask = [0, 1]
    attr = sum(
        m * sigmoid(omega * (eps - d)) * d for m, d in zip(mask, d_b)
    ) / len(d_b)

    total = cov + lam * attr

    print(f"sigma(-5)      = {sigmoid(mpf(-5))}")
    print(f"w(1)           = {weight(mpf(1), eps, omega)}")
    print(f"cov_term       = {cov}")
    print(f"attr_term      = {attr}")
    print(f"total          = {total}")
    print()
    print("release anchors: cov 0.746654 +-1e-5, attr 0.003346 +-1e-5, "
          "total 0.750001 +-2e-5")
    assert abs(cov - mpf("0.746654")) < mpf("1e-5")
    assert abs(attr - mpf("0.003346")) < mpf("1e-5")
    assert abs(total - mpf("0.750001")) < mpf("2e-5")
    print("all anchors confirmed")


if __name__ == "__main__":
    main()
