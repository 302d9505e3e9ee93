"""Smoke test for the mcgehee_py extension module."""

import math

import mcgehee_py as mg


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    kepler = mg.ModelParams(2, 2)
    assert close(mg.r_min(kepler, -0.5, 1.0), 1.0, 1e-12)
    assert mg.r_min(kepler, -0.5, 0.0) == 0.0
    try:
        mg.r_min(kepler, -0.5, 3.0)
    except mg.NoPericenterError:
        pass
    else:
        raise AssertionError("expected NoPericenterError")

    try:
        mg.ModelParams(2, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("d = 1 must be rejected")

    p = mg.ModelParams(3, 3, m=1.0, Z=1.0, eps=0.1)
    q, mom = [0.03, 0.02, 0.01], [-11.0, 5.0, 2.0]
    assert mg.in_u_eps(p, q, mom)
    c = mg.chart_forward(p, q, mom)
    assert close(c.h, mg.hamiltonian(p, q, mom), 1e-12)
    assert close(sum(b * b for b in c.b), mg.l_squared(q, mom), 1e-9)
    back = mg.chart_inverse(p, c)
    assert not back.is_collision
    assert max(abs(x - y) for x, y in zip(back.q, q)) < 1e-9
    assert mg.chart_roundtrip_error(p, q, mom) < 1e-8

    residual, sign = mg.bracket_table(p, q, mom)
    assert residual < 1e-5 and sign == -1.0

    # radial infall through the collision and back out
    x = mg.ExtendedPoint.regular([0.5, 0.0, 0.0], [-1.0, 0.0, 0.0])
    e0 = x.energy(p)
    y = mg.global_flow(p, x, 1.0)
    assert close(y.energy(p), e0, 1e-8)
    z = mg.global_flow(p, y, -1.0)
    assert max(abs(a - b) for a, b in zip(z.q, x.q)) < 1e-6

    col = mg.ExtendedPoint.collision(0.5, [0.0, 1.0, 0.0])
    assert col.is_collision and col.p is None
    out = mg.global_flow(p, col, 0.01)
    assert close(out.energy(p), 0.5, 1e-8)

    measured, bound = mg.transit_time(p, [0.1, 0.0, 0.0], [-7.0, 1.0, 0.0])
    assert 0.0 < measured <= bound

    lmat = mg.angular_momentum(q, mom)
    assert close(lmat[0][1], q[1] * mom[0] - q[0] * mom[1], 1e-15)
    dq, dp = mg.vector_field(p, q, mom)
    assert close(dq[0], mom[0], 1e-15)
    assert math.isfinite(p.transit_bound())
    print("smoke test passed")


if __name__ == "__main__":
    main()
