"""Versioned on-disk artifacts: ``.npz`` arrays with a JSON header."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .assoc import Classifier
from .cnp import CnpConfig, CnpModel
from .regime import RegimePosterior

ARTIFACT_VERSION = "regimecast-artifact/1"


class ArtifactError(ValueError):
    pass


def save_arrays(path, kind: str, arrays: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": ARTIFACT_VERSION, "kind": kind, **(meta or {})}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)),
                 **{k: np.asarray(v) for k, v in arrays.items()})
    return path


def load_arrays(path, kind: str):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        arrays = {k: z[k] for k in z.files if k != "__header__"}
    if header.get("version") != ARTIFACT_VERSION:
        raise ArtifactError(f"{path}: unsupported artifact version {header.get('version')!r}")
    if header.get("kind") != kind:
        raise ArtifactError(f"{path}: expected a {kind} artifact, found {header.get('kind')!r}")
    return arrays, header


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


_SCALARS = ("alpha", "gamma", "rho1", "rho2", "sticky_kappa")


def save_segmentation(path, post: RegimePosterior, meta: dict | None = None) -> Path:
    arrays = {k: getattr(post, k) for k in ("z", "w", "beta", "kappa", "mu", "sigma2")}
    head = {k: float(getattr(post, k)) for k in _SCALARS}
    return save_arrays(path, "segmentation", arrays, {**head, "variant": post.variant, **(meta or {})})


def load_segmentation(path) -> tuple[RegimePosterior, dict]:
    a, head = load_arrays(path, "segmentation")
    post = RegimePosterior(a["z"], a["w"], a["beta"], a["kappa"], a["mu"], a["sigma2"],
                           *(head[k] for k in _SCALARS[:4]), variant=head["variant"],
                           sticky_kappa=head["sticky_kappa"])
    return post, head


def save_classifier(path, clf: Classifier, meta: dict | None = None) -> Path:
    return save_arrays(path, "classifier", clf.state(), meta)


def load_classifier(path) -> tuple[Classifier, dict]:
    a, head = load_arrays(path, "classifier")
    return Classifier.from_state(a), head


def save_cnp(path, model: CnpModel, meta: dict | None = None) -> Path:
    cfg = {k: getattr(model.config, k) for k in model.config.__dataclass_fields__}
    return save_arrays(path, "cnp", model.state(), {"config": cfg, **(meta or {})})


def load_cnp(path) -> tuple[CnpModel, dict]:
    a, head = load_arrays(path, "cnp")
    return CnpModel.from_state(a, CnpConfig(**head["config"])), head
