"""Quick end-to-end check of the partbox Python module."""

import math
import os
import tempfile

import partbox


def main():
    assert partbox.print_score(1000.0, 600.0) == 13000.0
    assert math.isclose(partbox.estimate_time(1000.0, 600.0), 145.0)

    cube = partbox.Mesh(
        [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
        [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7), (0, 1, 5), (0, 5, 4),
         (1, 2, 6), (1, 6, 5), (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7)],
        name="cube",
    )
    assert cube.is_watertight()
    assert math.isclose(cube.volume(), 1.0)
    half = cube.clip_to_box((0, 0, 0), (0.5, 1, 1))
    assert math.isclose(half.volume(), 0.5, rel_tol=1e-9)
    pos, neg = cube.cut_by_plane((0, 0, 1), 0.25)
    assert math.isclose(pos.volume() + neg.volume(), 1.0, rel_tol=1e-9)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "cube.stl")
        cube.save_stl(path)
        assert len(partbox.Mesh.load(path)) == 12

    bar = partbox.dumbbell()
    normal, offset, error = partbox.find_symmetry_plane(bar)
    assert error < 1e-6

    d = partbox.decompose(bar, printers=2, granularity="coarse", sample_tries=1)
    assert d.valid and d.printers_used == 2
    scores = [p.print_score for p in d.parts]
    assert max(scores) == d.parallel_score
    total = sum(p.volume for p in d.parts)
    assert math.isclose(total, bar.volume(), rel_tol=1e-6)

    base = partbox.symmetry_baseline(bar, 2)
    assert base.printers_used == 2

    try:
        partbox.decompose(partbox.unit_cube(), granularity="bogus")
    except partbox.PartboxError:
        pass
    else:
        raise AssertionError("bad granularity accepted")

    print("smoke test ok:", d)


if __name__ == "__main__":
    main()
