"""Sequential estimator against textbook batch-filter oracles."""

import numpy as np
import pytest

from schedkf import (
    FilterState,
    LinearSystem,
    SlotUpdate,
    component_stats,
    innovation_stats,
    predict,
    step,
    update_component,
)


def batch_kf_step(x, P, A, C, Q, R, y):
    """Independent oracle: one classical Kalman cycle with the full
    measurement vector (Joseph-form covariance update)."""
    x_pred = A @ x
    P_pred = A @ P @ A.T + Q
    S = C @ P_pred @ C.T + R
    K = P_pred @ C.T @ np.linalg.inv(S)
    x_post = x_pred + K @ (y - C @ x_pred)
    IKC = np.eye(P.shape[0]) - K @ C
    P_post = IKC @ P_pred @ IKC.T + K @ R @ K.T
    return x_post, 0.5 * (P_post + P_post.T)


def random_observable_system(rng, n, m, spectral_radius=0.95):
    while True:
        A = rng.standard_normal((n, n))
        A *= spectral_radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
        C = rng.standard_normal((m, n))
        blocks = [C]
        for _ in range(n - 1):
            blocks.append(blocks[-1] @ A)
        if np.linalg.matrix_rank(np.vstack(blocks)) == n:
            break
    G = rng.standard_normal((n, n))
    Q = G @ G.T / n + 0.1 * np.eye(n)
    R = np.diag(rng.uniform(0.2, 1.5, size=m))
    P0 = np.eye(n)
    return LinearSystem(A=A, C=C, Q=Q, R=R, x0_mean=rng.standard_normal(n), P0=P0)


def delivered_slots(sysm, y):
    return [SlotUpdate(index=i, value=float(y[i]), high_power=True, arrived=True)
            for i in range(sysm.m)]


SCALAR = LinearSystem(A=[[1.2]], C=[[1.0]], Q=[[1.0]], R=[[1.0]],
                      x0_mean=[0.0], P0=[[1.0]])


class TestPredict:
    def test_zero_covariance_gives_q(self):
        st = predict(FilterState(x=[0.0], P=[[0.0]]), SCALAR)
        assert st.P[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert st.k == 1

    def test_identity_dynamics_no_noise(self):
        sysm = LinearSystem(A=np.eye(2), C=[[1.0, 0.0]], Q=np.zeros((2, 2)),
                            R=[[1.0]], x0_mean=[1.0, 2.0], P0=np.eye(2))
        st0 = FilterState(x=[1.0, 2.0], P=np.eye(2))
        st = predict(st0, sysm)
        assert np.allclose(st.x, st0.x, atol=1e-15)
        assert np.allclose(st.P, st0.P, atol=1e-15)

    def test_scalar_arithmetic(self):
        st = predict(FilterState(x=[0.0], P=[[2.0]]), SCALAR)
        assert st.P[0, 0] == pytest.approx(1.2 * 2.0 * 1.2 + 1.0, rel=1e-15)


class TestInnovationStats:
    def test_zero_covariance(self):
        z, sigma = innovation_stats(FilterState(x=[3.0], P=[[0.0]]), SCALAR, 0)
        assert z == pytest.approx(3.0)
        assert sigma == pytest.approx(1.0)

    def test_zero_row(self):
        sysm = LinearSystem(A=[[1.0]], C=[[0.0]], Q=[[1.0]], R=[[0.25]],
                            x0_mean=[0.0], P0=[[1.0]])
        z, sigma = innovation_stats(FilterState(x=[5.0], P=[[7.0]]), sysm, 0)
        assert z == 0.0
        assert sigma == pytest.approx(0.5)

    def test_vector_row(self):
        sysm = LinearSystem(A=np.eye(2), C=[[1.0, 1.0]], Q=np.eye(2), R=[[0.1]],
                            x0_mean=[0.0, 0.0], P0=np.eye(2))
        _, sigma = innovation_stats(FilterState(x=[0.0, 0.0], P=np.eye(2)), sysm, 0)
        assert sigma == pytest.approx(np.sqrt(2.1), rel=1e-14)


class TestUpdateComponent:
    def test_delivered_matches_sequential_kf_oracle(self):
        rng = np.random.default_rng(0)
        sysm = random_observable_system(rng, 3, 1)
        st = FilterState(x=rng.standard_normal(3), P=np.eye(3))
        y = 0.7
        slot = SlotUpdate(index=0, value=y, high_power=True, arrived=True)
        out = update_component(st, sysm, slot, component_stats(1.0, 0.5))
        # textbook scalar update written independently
        c = sysm.C[0]
        s = c @ st.P @ c + sysm.R[0, 0]
        K = st.P @ c / s
        x_ref = st.x + K * (y - c @ st.x)
        P_ref = st.P - np.outer(K, c @ st.P)
        assert np.allclose(out.x, x_ref, atol=1e-14)
        assert np.allclose(out.P, 0.5 * (P_ref + P_ref.T), atol=1e-12)

    def test_dropped_keeps_mean_and_shrinks(self):
        st = FilterState(x=[2.0], P=[[1.0]])
        slot = SlotUpdate(index=0, value=None, high_power=False, arrived=False)
        stats = component_stats(1.0, 0.5)
        out = update_component(st, SCALAR, slot, stats)
        assert out.x[0] == 2.0
        want = 1.0 - stats.drop_shrink * 0.5 * 1.0  # gain is 1/2 here
        assert out.P[0, 0] == pytest.approx(want, rel=1e-14)

    def test_dropped_scalar_half_shrink(self):
        # p=1, c=1, r=1, shrink weight 1/2: gain 1/2, P -> 1 - 0.5*0.5 = 0.75
        st = FilterState(x=[0.0], P=[[1.0]])
        slot = SlotUpdate(index=0, value=None, high_power=False, arrived=False)
        fake = component_stats(1.0, 0.5).__class__(
            threshold=1.0, arrival_prob=0.5, high_rate=0.3,
            drop_shrink=0.5, low_info=0.75, info_rate=0.8)
        out = update_component(st, SCALAR, slot, fake)
        assert out.P[0, 0] == pytest.approx(0.75, rel=1e-15)

    def test_contract_errors(self):
        st = FilterState(x=[0.0], P=[[1.0]])
        stats = component_stats(1.0, 0.5)
        with pytest.raises(ValueError):
            update_component(st, SCALAR, SlotUpdate(0, None, True, True), stats)
        with pytest.raises(ValueError):
            update_component(st, SCALAR, SlotUpdate(0, 1.0, False, False), stats)


class TestStep:
    def test_all_delivered_equals_batch_kf(self):
        rng = np.random.default_rng(7)
        sysm = random_observable_system(rng, 3, 2)
        stats = [component_stats(0.0, 0.5)] * 2
        st = FilterState.initial(sysm)
        x_ref, P_ref = sysm.x0_mean.copy(), sysm.P0.copy()
        for _ in range(50):
            y = rng.standard_normal(2)
            st, _ = step(st, sysm, delivered_slots(sysm, y), stats)
            x_ref, P_ref = batch_kf_step(x_ref, P_ref, sysm.A, sysm.C, sysm.Q,
                                         sysm.R, y)
            assert np.max(np.abs(st.x - x_ref)) <= 1e-9
            assert np.max(np.abs(st.P - P_ref)) <= 1e-9

    def test_all_dropped_with_huge_threshold_keeps_prediction(self):
        sysm = LinearSystem(A=[[1.2]], C=[[1.0], [1.0]], Q=[[1.0]],
                            R=[[0.1, 0.0], [0.0, 1.0]], x0_mean=[0.0], P0=[[1.0]])
        stats = [component_stats(12.0, 0.5)] * 2
        st = FilterState(x=[0.0], P=[[1.0]])
        pred = predict(st, sysm)
        slots = [SlotUpdate(i, None, False, False) for i in range(2)]
        out, _ = step(st, sysm, slots, stats)
        assert out.P[0, 0] == pytest.approx(pred.P[0, 0], rel=1e-10)

    def test_slot_monotonicity_and_symmetry(self):
        rng = np.random.default_rng(21)
        sysm = random_observable_system(rng, 3, 2)
        stats = [component_stats(1.0, 0.5)] * 2
        st = FilterState.initial(sysm)
        for k in range(40):
            st_pred = predict(st, sysm)
            prev = st_pred
            for i in range(2):
                deliver = bool(rng.random() < 0.5)
                y = float(rng.standard_normal()) if deliver else None
                slot = SlotUpdate(i, y, deliver, deliver)
                cur = update_component(prev, sysm, slot, stats[i])
                diff = prev.P - cur.P
                assert np.linalg.eigvalsh(diff)[0] >= -1e-10
                assert np.max(np.abs(cur.P - cur.P.T)) <= 1e-12
                prev = cur
            st = prev

    def test_trace_and_order_validation(self):
        rng = np.random.default_rng(3)
        sysm = random_observable_system(rng, 2, 2)
        stats = [component_stats(1.0, 0.5)] * 2
        st = FilterState.initial(sysm)
        slots = [SlotUpdate(0, 1.0, True, True),
                 SlotUpdate(1, None, False, False)]
        out, traces = step(st, sysm, slots, stats)
        assert len(traces) == 2
        assert traces[0].innovation is not None
        assert traces[1].innovation is None
        assert traces[0].sigma > 0
        assert traces[0].gain.shape == (2,)
        wrong = [SlotUpdate(1, 1.0, True, True), SlotUpdate(0, 1.0, True, True)]
        with pytest.raises(ValueError):
            step(st, sysm, wrong, stats)

    def test_shrink_weight_stays_in_range(self):
        # weight t is drop_shrink on silent slots and 1 otherwise, so the
        # covariance decrement is bracketed by the two pure cases
        rng = np.random.default_rng(5)
        sysm = random_observable_system(rng, 2, 1)
        stats = [component_stats(1.3, 0.4)]
        st = predict(FilterState.initial(sysm), sysm)
        silent = update_component(st, sysm, SlotUpdate(0, None, False, False), stats[0])
        heard = update_component(st, sysm, SlotUpdate(0, 0.3, True, True), stats[0])
        assert np.linalg.eigvalsh(st.P - silent.P)[0] >= -1e-12
        assert np.linalg.eigvalsh(silent.P - heard.P)[0] >= -1e-12
