"""Smoke test for the cemfield Python extension.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import math
import tempfile
from pathlib import Path

import cemfield

CONFIG = """
[project]
modality = eeg
seed = 3

[phantom]
names = brain csf skull scalp
radii = 0.078 0.080 0.086 0.092
conductivities = 0.33 1.79 0.0064 0.43
subdivisions = 3

[mesh]
resolution = 0.02
smoothing = 0

[electrodes]
count = 16
radius = 0.012

[sources]
count = 150

[simulate]
dipoles = 0 0 0.05 1 0 0 10e-9
"""


def main():
    cfg = cemfield.ProjectConfig.parse(CONFIG)
    assert cfg.modality == "eeg" and cfg.seed == 3 and len(cfg.hash) == 64

    model = cfg.build_model()
    assert model.element_count == len(model.tetra()) > 0
    assert model.electrode_count == 16

    lf = model.leadfield(cfg)
    rows, cols = lf.shape
    assert (rows, cols) == (16, 450), lf.shape
    for j in range(0, cols, 37):
        col_sum = sum(r[j] for r in lf.matrix())
        col_norm = math.sqrt(sum(r[j] ** 2 for r in lf.matrix()))
        assert abs(col_sum) <= 1e-9 * col_norm

    y = lf.simulate([((0.0, 0.0, 0.05), (1.0, 0.0, 0.0), 10e-9)], noise_percent=2.0, seed=5)
    nu = 0.02 * max(abs(v) for v in y)
    x = cemfield.ias_map(lf.matrix(), y, nu, hypermodel="ig", theta0=1e-9)
    assert len(x) == cols
    k = max(range(cols), key=lambda i: abs(x[i]))
    p = lf.positions()[k]
    print(f"peak DOF {k} at {p}, |p - true| = {math.dist(p, (0, 0, 0.05)) * 1e3:.1f} mm")

    xm = cemfield.multires_ias(lf.matrix(), lf.positions(), y, nu, theta0=1e-9, subsets=20, decompositions=3)
    assert len(xm) == cols

    with tempfile.TemporaryDirectory() as d:
        outputs = dict(cfg.run("leadfield", output=d))
        assert set(outputs) == {"leadfield.bin", "leadfield.json"}
        loaded = cemfield.LeadField.load(str(Path(d) / "leadfield"))
        assert loaded.shape == lf.shape

    try:
        cemfield.ProjectConfig.parse(CONFIG + "bogus = 1\n")
    except ValueError as e:
        assert "bogus" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("cemfield", cemfield.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
