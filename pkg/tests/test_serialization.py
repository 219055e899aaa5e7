import json
import math

import numpy as np

from fisher_shadow.measurement import random_povm, tensor_power
from fisher_shadow.parallel import max_workers, parallel_map
from fisher_shadow.serialization import (
    config_hash,
    op_from_json,
    op_to_json,
    povm_from_json,
    povm_to_json,
    to_jsonable,
)


def test_operator_round_trip(rng):
    op = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.array_equal(op_from_json(json.loads(json.dumps(op_to_json(op)))), op)


def test_povm_round_trip(rng):
    povm = tensor_power(random_povm(2, 2, seed=rng), 2)
    back = povm_from_json(json.loads(json.dumps(povm_to_json(povm))))
    assert np.allclose(back.elements, povm.elements) and back.labels == povm.labels
    assert back.copies == 2


def test_config_hash_is_key_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_to_jsonable_handles_numpy_and_infinity():
    out = to_jsonable({"x": np.float64(math.inf), "y": np.arange(2), "z": np.bool_(True)})
    assert out == {"x": "inf", "y": [0, 1], "z": True}
    json.dumps(out)


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv("FISHER_SHADOW_THREADS", "3")
    assert max_workers() == 3
    assert parallel_map(lambda x: x * x, range(20)) == [x * x for x in range(20)]
    monkeypatch.setenv("FISHER_SHADOW_THREADS", "1")
    assert parallel_map(str, [3, 1]) == ["3", "1"]
