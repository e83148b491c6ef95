import json
import math

import numpy as np
import pytest

from gcpw.errors import SchemaError
from gcpw.io_formats import (
    CorrespondenceSet,
    correspondences_from_dict,
    dumps,
    load_correspondences,
    save_correspondences,
)
from gcpw.pipeline import StitchConfig


def test_empty_set_is_valid(tmp_path):
    corr = correspondences_from_dict({"points": [], "lines": []})
    assert corr.points.shape == (0, 4) and corr.lines.shape == (0, 2, 2, 2)
    path = tmp_path / "c.json"
    path.write_text("{}")
    assert load_correspondences(path).frame == "input"


def test_roundtrip_bit_exact(tmp_path):
    corr = CorrespondenceSet(np.array([[1.0 / 3, 2.0, 1.0 / 3, 2.0]]),
                             np.array([[[[0.1, 0.2], [5.0, 7.0]], [[0.3, 0.2], [5.5, 7.25]]]]))
    path = tmp_path / "c.json"
    save_correspondences(path, corr)
    back = load_correspondences(path)
    assert back.points.tobytes() == corr.points.tobytes()
    assert back.lines.tobytes() == corr.lines.tobytes()


@pytest.mark.parametrize("doc,fragment", [
    ({"points": [[1, 2, 3, 4], [1, 2, 3]]}, "points[1]"),
    ({"points": [[1, 2, "x", 4]]}, "points[0][2]"),
    ({"lines": [[[[0, 0], [0, 0]], [[1, 1], [2, 2]]]]}, "lines[0][0]"),
    ({"lines": [[[[0, 0], [1, 1]]]]}, "lines[0]"),
    ({"frame": "world"}, "frame"),
    ({"pts": []}, "unknown"),
])
def test_schema_errors_name_the_entry(doc, fragment):
    with pytest.raises(SchemaError) as exc:
        correspondences_from_dict(doc)
    assert fragment in str(exc.value)


def test_non_finite_rejected(tmp_path):
    with pytest.raises(SchemaError):
        correspondences_from_dict({"points": [[1, 2, math.nan, 4]]})
    path = tmp_path / "bad.json"
    path.write_text('{"points": [[1, 2, Infinity, 4]]}')
    with pytest.raises(SchemaError):
        load_correspondences(path)
    path.write_text("{not json")
    with pytest.raises(SchemaError, match="line 1"):
        load_correspondences(path)


def test_dumps_plain_types():
    text = dumps({"a": np.float64(1.5), "b": np.arange(2), "c": np.bool_(True)})
    assert json.loads(text) == {"a": 1.5, "b": [0, 1], "c": True}
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


def test_config_fields_roundtrip_and_reject_unknown():
    cfg = StitchConfig(mesh_rows=8, lambda_similarity=0.25)
    assert StitchConfig.from_dict(json.loads(dumps(cfg.to_dict()))) == cfg
    with pytest.raises(SchemaError, match="lamda"):
        StitchConfig.from_dict({"lamda_photometric": 3})
    with pytest.raises(SchemaError):
        StitchConfig(mesh_rows=0)
    with pytest.raises(SchemaError):
        StitchConfig(lambda_color=-1)
