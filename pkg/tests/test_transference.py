import math

import numpy as np
import pytest

from multdirichlet.cartan import CartanVector, ConeQuery, Dims, in_cone
from multdirichlet.errors import DomainError
from multdirichlet.lattice import MatrixY, delta_brute, realized_log_norm
from multdirichlet.transference import (TransferInput, design_input_a, design_input_b, dirichlet_simultaneous,
                                        transfer_a, transfer_b, verify_delta_below)


def test_dirichlet_half():
    assert dirichlet_simultaneous([0.5], 2) == (2, (1,))


def test_dirichlet_integers():
    assert dirichlet_simultaneous([3.0, -2.0], 1) == (1, (3, -2))


def test_dirichlet_thirds():
    assert dirichlet_simultaneous([1 / 3, 2 / 3], 9) == (3, (1, 2))


def test_dirichlet_bound_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        k = int(rng.integers(1, 4))
        theta = rng.random(k)
        N = float(rng.uniform(1, 200))
        ell, pp = dirichlet_simultaneous(theta, N)
        assert 1 <= ell <= N
        assert np.all(np.abs(ell * theta - np.array(pp)) <= N ** (-1 / k) + 1e-12)


def _worked_input_a():
    dims = Dims(2, 1)
    Y = MatrixY.of([[0.3], [0.02]])
    a = CartanVector(dims, (-0.2, 2.2, -2.0))
    return TransferInput(a, Y, 0.05, 2.0, (0, 0), (1,))


def test_transfer_a_worked_instance():
    inp = _worked_input_a()
    out = transfer_a(inp)
    cutoff = 0.05 ** (1 / 6)
    assert out.t_prime == 2.0
    assert in_cone(out.a_prime, ConeQuery(Dims(2, 1), 0.0, 2.0))
    assert delta_brute(inp.Y, out.a_prime.array, 5).delta < cutoff
    assert out.achieved_bound < cutoff
    assert not out.passthrough


def test_transfer_a_passthrough_for_m1():
    dims = Dims(1, 1)
    Y = MatrixY.of([[0.01]])
    t = 3.0
    a = CartanVector(dims, (t, -t))
    out = transfer_a(TransferInput(a, Y, 0.5, t, (0,), (1,)))
    assert out.passthrough and out.a_prime == a


def test_transfer_a_rejects_unmet_hypothesis():
    inp = _worked_input_a()
    bad = TransferInput(inp.a, MatrixY.of([[0.3], [0.4]]), inp.c, inp.t, inp.p, inp.q)
    with pytest.raises(DomainError):
        transfer_a(bad)


def test_transfer_b_n1_keeps_t():
    rng = np.random.default_rng(3)
    inp = design_input_b(rng, Dims(2, 1))
    out = transfer_b(inp)
    assert out.t_prime == inp.t


def test_transfer_b_t_prime_formula():
    # t' = t - ((n-1)/(m+n)) log c; at (1,2), c = 0.1, t = 1 this is about 1.768
    assert 1 - (1 / 3) * math.log(0.1) == pytest.approx(1.7675, abs=1e-4)
    rng = np.random.default_rng(4)
    inp = design_input_b(rng, Dims(1, 2), c=0.1)
    out = transfer_b(inp)
    assert out.t_prime == pytest.approx(inp.t - math.log(0.1) / 3, abs=1e-14)


@pytest.mark.parametrize("dims", [Dims(2, 1), Dims(1, 2), Dims(2, 2)])
@pytest.mark.parametrize("part", ["a", "b"])
def test_transfer_property(dims, part):
    rng = np.random.default_rng([17, dims.m, dims.n, ord(part)])
    for _ in range(100):
        if part == "a":
            inp = design_input_a(rng, dims)
            out = transfer_a(inp)
            cone = ConeQuery(dims, 0.0, inp.t)
            cutoff = inp.c ** (1 / (dims.m * dims.total))
        else:
            inp = design_input_b(rng, dims)
            out = transfer_b(inp)
            kappa = inp.c ** (1 / dims.total)
            cone = ConeQuery(dims, -math.log(kappa), out.t_prime)
            cutoff = kappa
        assert in_cone(out.a_prime, cone)
        assert realized_log_norm(inp.Y, out.a_prime, out.p, out.q) < math.log(cutoff)
        assert verify_delta_below(inp.Y, out.a_prime, cutoff) < cutoff
