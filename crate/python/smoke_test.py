"""Smoke test for the hybridcop_py extension module.

Build and install first, e.g. `pip install ./crates/python`, then run
`python python/smoke_test.py`.
"""

import math

import hybridcop_py as hc


def close(a, b, tol=1e-12):
    assert abs(a - b) <= tol, (a, b)


def main():
    indep = hc.Copula("independence")
    close(indep.cdf([0.5, 0.5]), 0.25)
    clayton = hc.Copula("clayton", 1.0)
    close(clayton.cdf([0.5, 0.5]), 1.0 / 3.0)
    assert 0.0 < clayton.partial(0, [0.3, 0.6]) < 1.0

    rows = [[0.3, 2.0], [0.1, 5.0], [0.7, 1.0], [0.5, 4.0]]
    est = hc.HybridEstimator.fit(rows)
    close(est.eval([0.5, 0.5]), 0.25)
    close(est.eval([0.0, 0.7]), 0.0)

    data = hc.simulate(indep, 500, 7, scheme="missing", px=0.8, py=0.8, pxy=0.64)
    assert len(data) == 500 and any(v is None for row in data for v in row)
    fitted = hc.HybridEstimator.fit(data, joint="complete-case", margins=["available-case"])
    assert 0.0 <= fitted.eval([0.5, 0.5]) <= 0.5

    close(hc.LimitCovariance("empirical", indep).limit_variance([0.5, 0.5]), 0.0625)
    close(hc.LimitCovariance("known", indep).limit_variance([0.5, 0.5]), 0.1875)
    missing = hc.LimitCovariance("missing", indep, px=0.8, py=0.8, pxy=0.64)
    close(missing.cov_beta(0, 0.5, 0.5), 0.3125)
    parametric = hc.LimitCovariance("parametric", indep)
    close(parametric.cov_beta(0, 0.5, 0.5), 1.0 / (2.0 * math.pi))

    holds, slack = hc.sandwich_check([0.2, 0.9, 0.4], [k / 100 for k in range(1, 101)])
    assert holds and slack >= -1e-12

    try:
        indep.partial(0, [0.0, 0.5])
    except ValueError:
        pass
    else:
        raise AssertionError("boundary partial derivative should raise")

    print(f"hybridcop_py {hc.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
