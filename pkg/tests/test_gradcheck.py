import pytest

from advflow.gradcheck import CHECKS, run_gradcheck


def test_all_checks_pass():
    results = run_gradcheck(seed=0, instances=5, tol=1e-4)
    assert [r.name for r in results] == list(CHECKS)
    for r in results:
        assert r.passed, f"{r.name}: {r.max_rel_err}"
        assert r.max_rel_err < 1e-4


def test_checks_have_headroom():
    # errors should sit orders of magnitude under the tolerance, not at it
    for r in run_gradcheck(seed=1, instances=3, tol=1e-4):
        assert r.max_rel_err < 1e-6, f"{r.name}: {r.max_rel_err}"


def test_fault_injection_fails_target_only():
    for victim in CHECKS:
        results = run_gradcheck(seed=0, instances=2, tol=1e-4, fault=victim)
        by_name = {r.name: r for r in results}
        assert not by_name[victim].passed
        for name, r in by_name.items():
            if name != victim:
                assert r.passed, name


def test_unknown_fault_rejected():
    with pytest.raises(ValueError):
        run_gradcheck(seed=0, instances=1, fault="bogus")


def test_deterministic():
    a = run_gradcheck(seed=3, instances=3)
    b = run_gradcheck(seed=3, instances=3)
    assert [(r.name, r.max_rel_err) for r in a] == [(r.name, r.max_rel_err) for r in b]
