"""Smoke test of the horst Python module.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import cmath
import math
import os
import sys
import tempfile

import horst


def main() -> int:
    assert horst.grid_interval(5.0, 1500.0) == 75.0
    assert abs(horst.phase_velocity_error(4.0, 0.4, 0.3)) < 1e-2
    assert abs(horst.phase_velocity_error(4.0, 0.0, 0.0, seven_point=True)) > 1e-2

    model = horst.Model.homogeneous([16, 16, 16], 50.0, 2000.0, 2000.0)
    assert len(model) == 16**3
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.fdm")
        model.write(path)
        again = horst.Model.read(path)
        assert again.v0 == model.v0 and again.dims == [16, 16, 16]

        a, b = [300.0, 350.0, 400.0], [420.0, 380.0, 360.0]
        ab = horst.simulate(model, [a], [b], 4.0, free_surface=False, pml_width=0)[0][0]
        ba = horst.simulate(model, [b], [a], 4.0, free_surface=False, pml_width=0)[0][0]
        assert abs(ab - ba) <= 1e-6 * abs(ab), (ab, ba)
        assert cmath.isfinite(ab) and abs(ab) > 0.0

        code = horst.main(["--set", "paths.output_dir=" + tmp, "weights",
                           "--set", "weights.g_samples=[4.0,8.0]"])
        assert code == 0 and os.path.exists(os.path.join(tmp, "weights.csv"))
        assert horst.main(["--set", "plan.ppw=-1", "forward"]) == 2

    bad = model.v0
    bad[0] = math.nan
    try:
        model.v0 = bad
    except ValueError:
        pass
    else:
        raise AssertionError("NaN velocity accepted")
    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
