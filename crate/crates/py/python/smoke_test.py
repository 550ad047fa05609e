"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import json
import math
import random

import codesign


def main():
    finger = codesign.base_finger()
    assert finger.is_watertight() and len(finger.faces) > 0

    # Round trip through OBJ text.
    again = codesign.Mesh.from_obj(finger.to_obj())
    assert again.faces == finger.faces

    space = codesign.DeformationSpace(finger, mount_z=0.0, steps=8)
    zero = space.zero_params()
    assert len(zero) == space.raw_dim == 4 * space.kernel_count
    assert space.deform_mesh(zero).vertices == finger.vertices

    # Fit to a shape produced by known parameters.
    rng = random.Random(0)
    known = [v + (rng.uniform(-0.01, 0.01) if i % 4 != 3 else 0.0) for i, v in enumerate(zero)]
    target = space.deform_mesh(known).sample(512, 1)
    fit = space.fit(target, {"samples": 512, "budget": 60}, seed=1)
    assert fit["final_chamfer"] < fit["initial_chamfer"]

    # Latent model over a few perturbations.
    data = [[v + (rng.gauss(0, 0.004) if i % 4 != 3 else 0.0) for i, v in enumerate(zero)] for _ in range(10)]
    model = codesign.DesignModel.build(space, data, 3)
    mean = model.decode([0.0, 0.0, 0.0])
    assert max(abs(a - b) for a, b in zip(mean, model.mean)) == 0.0
    assert len(model.decode_mesh([0.5, -0.5, 0.0]).faces) == len(finger.faces)

    # CMA-ES maximizes.
    cma = codesign.CmaEs([1.0, -1.0, 0.5], 0.5, seed=2)
    x, f = cma.optimize(lambda v: -sum(t * t for t in v), 3000)
    assert f > -1e-8, f

    assert codesign.percentile_top(list(range(1, 101)), 2.5) == 98
    assert math.isclose(codesign.env_score("grasp", 0.12, 1, 500, 9000, 12000), 179.4)

    try:
        codesign.primitive_design("cubic", 10.0)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range primitive accepted")

    # One cheap rollout.
    cfg = codesign.default_config()
    cfg.update(envs=1, candidates=1)
    cfg["pose"]["generations"] = 6
    cfg["sim"].update(resolution=[24, 24, 24], cell=0.008)
    cfg["plan"]["horizon_grasp"] = 120
    out = codesign.rollout(codesign.primitive_design("cubic", 0.03), cfg, seed=3)
    assert set(out) == {"context", "components", "pose", "rollout"}
    if out["rollout"] is not None:
        json.loads(out["rollout"].splitlines()[-1])
    print("smoke test ok:", json.dumps(out["components"]))


if __name__ == "__main__":
    main()
