import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabichaos.hilbert import SIGMA_X, embed, is_hermitian
from rabichaos.models import (
    ModelParams,
    build_hamiltonian,
    build_perturbed_qr,
    build_qjt,
    build_qr,
    parity_operator,
    params_from_gc_eta,
    qjt_layout,
    qr_layout,
    u1_charge_operator,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams("XY", 1, 1, 1)
    with pytest.raises(ValueError):
        ModelParams("QR", 0, 1, 1)
    with pytest.raises(ValueError):
        ModelParams("QR", 1, 1, -1)
    with pytest.raises(ValueError):
        ModelParams("QR", 1, 1, 1, lambda_perturb=0.1)


@given(st.sampled_from(["QR", "QJT"]), st.floats(0.5, 20), st.floats(1, 500))
@settings(max_examples=50, deadline=None)
def test_gc_eta_roundtrip(kind, g_c, eta):
    p = params_from_gc_eta(kind, g_c, eta)
    assert math.isclose(p.g_c, g_c, rel_tol=1e-12)
    assert math.isclose(p.eta, eta, rel_tol=1e-12)


def test_gc_eta_values():
    p = params_from_gc_eta("QR", 5, 100, g=7)
    assert math.isclose(p.omega, 1.0) and math.isclose(p.delta, 100.0)
    assert math.isclose(p.coupling_ratio, 1.4)
    q = params_from_gc_eta("QJT", 5, 100)
    assert math.isclose(q.omega, math.sqrt(2) / 2) and math.isclose(q.delta, 50 * math.sqrt(2))


def test_qr_elements():
    p = ModelParams("QR", 1.3, 4.0, 0.7)
    h = build_qr(p, 6)
    lay = qr_layout(6)
    assert is_hermitian(h)
    for n in range(6):
        assert math.isclose(h[lay.index("up", n), lay.index("up", n)], 1.3 * n + 2.0)
        assert math.isclose(h[lay.index("down", n), lay.index("down", n)], 1.3 * n - 2.0)
        # g sigma_x (a + a^dag) flips spin and shifts n by one
        assert math.isclose(h[lay.index("up", n + 1), lay.index("down", n)], 0.7 * math.sqrt(n + 1))
        assert h[lay.index("up", n), lay.index("down", n)] == 0


def test_perturbed_qr_adds_sigma_x():
    p = ModelParams("PerturbedQR", 1, 3, 0.5, lambda_perturb=0.2)
    h = build_perturbed_qr(p, 5)
    h0 = build_qr(ModelParams("QR", 1, 3, 0.5), 5)
    diff = (h - h0).toarray()
    assert np.allclose(diff, 0.2 * embed(SIGMA_X, None, qr_layout(5)).toarray())
    # parity is broken, QR parity is kept
    P = parity_operator(qr_layout(5))
    assert abs(P @ h - h @ P).max() > 0.1
    assert abs(P @ h0 - h0 @ P).max() == 0


def test_qjt_element_and_charge_conservation():
    p = ModelParams("QJT", 0.9, 5.0, 1.1)
    h = build_qjt(p, 4, 5)
    lay = qjt_layout(4, 5)
    assert is_hermitian(h)
    # <up, n_r, n_l|H|down, n_r - 1, n_l> = g sqrt(n_r)
    for nr in range(1, 5):
        assert math.isclose(h[lay.index("up", nr, 2), lay.index("down", nr - 1, 2)], 1.1 * math.sqrt(nr))
    # the rl form conserves C exactly, so <up, n_r - 1, n_l|H|down, n_r, n_l> vanishes
    assert h[lay.index("up", 1, 2), lay.index("down", 2, 2)] == 0
    C = u1_charge_operator(lay)
    assert abs(C @ h - h @ C).max() < 1e-14


def test_qjt_forms_agree_on_low_spectrum():
    p = ModelParams("QJT", 1.0, 6.0, 1.2)
    w_rl = np.linalg.eigvalsh(build_qjt(p, 24, 24, "rl").toarray())[:10]
    w_ab = np.linalg.eigvalsh(build_qjt(p, 24, 24, "ab").toarray())[:10]
    assert np.allclose(w_rl, w_ab, atol=1e-8)
    with pytest.raises(ValueError):
        build_qjt(p, 2, 2, "xy")


def test_dispatch_and_cutoffs():
    assert build_hamiltonian(ModelParams("QJT", 1, 1, 1), 3).shape == (32, 32)
    assert build_hamiltonian(ModelParams("QR", 1, 1, 1), (3,)).shape == (8, 8)
    with pytest.raises(ValueError):
        build_hamiltonian(ModelParams("QR", 1, 1, 1), (3, 3))
    with pytest.raises(ValueError):
        build_qr(ModelParams("QJT", 1, 1, 1), 3)


def test_parity_values():
    lay = qr_layout(3)
    P = parity_operator(lay).diagonal()
    assert P[lay.index("up", 0)] == -1 and P[lay.index("down", 0)] == 1 and P[lay.index("down", 3)] == -1
