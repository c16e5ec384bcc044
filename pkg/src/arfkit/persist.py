"""Versioned JSON persistence for fitted density models.

One document per model: format header, schema, fit config, free-form meta
(seed provenance, adversarial trace, ...), then per tree the nested split
structure and columnar leaf parameters. Floats round-trip exactly through
repr, so a reloaded model reproduces log-densities bit for bit; categorical
leaf distributions are stored as integer counts plus allowed-level masks and
recomputed on load with the same arithmetic as the fit. Infinite bounds
(the empty-leaf placeholders) are stored as null.

Reloaded trees carry split structure and leaf parameters only; in-bag row
bookkeeping is not persisted (it is a fitting intermediate, not part of the
density).
"""

from __future__ import annotations

import json
import sys

import numpy as np

from .forde import FordeFitConfig, FordeModel, TreeParams
from .forest import InternalError, Tree
from .tabular import Schema, schema_from_dict, schema_to_dict

FORMAT = "arfkit-forde"
VERSION = 1

# nested-split depth can exceed the default interpreter recursion limit on
# deep trees; json.dump/load recurse per level
_RECURSION_HEADROOM = 20_000


class ModelFormatError(ValueError):
    """The file is not a model document this version can read."""


def _tree_to_obj(tree: Tree) -> dict:
    # children have larger ids than parents: one reverse pass builds the
    # nested structure without recursion
    nodes: list = [None] * tree.n_nodes
    for nid in range(tree.n_nodes - 1, -1, -1):
        if tree.leaf_id[nid] >= 0:
            nodes[nid] = {"leaf": int(tree.leaf_id[nid])}
        else:
            nodes[nid] = {"feature": int(tree.feature[nid]),
                          "kind": "equal" if tree.cat_split[nid] else "less",
                          "value": float(tree.value[nid]),
                          "left": nodes[tree.left[nid]],
                          "right": nodes[tree.right[nid]]}
    return nodes[0]


def _tree_from_obj(obj: dict, original_count: np.ndarray) -> Tree:
    feature: list = []
    value: list = []
    cat_split: list = []
    left: list = []
    right: list = []
    leaf_id: list = []
    # preorder ids, left subtree before right, as in the growth kernel
    stack = [(obj, -1, False)]
    while stack:
        node, parent, is_right = stack.pop()
        nid = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = nid
        if "leaf" in node:
            feature.append(-1)
            value.append(0.0)
            cat_split.append(0)
            left.append(-1)
            right.append(-1)
            leaf_id.append(int(node["leaf"]))
        else:
            feature.append(int(node["feature"]))
            value.append(float(node["value"]))
            cat_split.append(1 if node["kind"] == "equal" else 0)
            left.append(-1)
            right.append(-1)
            leaf_id.append(-1)
            stack.append((node["right"], nid, True))
            stack.append((node["left"], nid, False))
    leaves = sorted(i for i in leaf_id if i >= 0)
    L = len(original_count)
    if leaves != list(range(L)):
        raise ModelFormatError("leaf ids are not contiguous or do not match "
                               "the parameter table")
    return Tree(np.array(feature, np.int64), np.array(value, np.float64),
                np.array(cat_split, np.uint8), np.array(left, np.int64),
                np.array(right, np.int64), np.array(leaf_id, np.int64),
                np.empty(0, np.int64), np.zeros((L, 2), np.int64),
                original_count[:, None].copy())


def _nullable(arr: np.ndarray) -> list:
    out = []
    for row in arr:
        out.append([None if not np.isfinite(v) else float(v) for v in row])
    return out


def _from_nullable(rows: list, fill: float) -> np.ndarray:
    arr = np.array([[fill if v is None else v for v in row] for row in rows],
                   dtype=np.float64)
    return arr.reshape(len(rows), -1)


def _params_to_obj(tp: TreeParams, alpha: float) -> dict:
    cat = []
    for j in sorted(tp.cat_probs):
        probs = tp.cat_probs[j]
        # probs = (counts + alpha*allowed) / (count + alpha*n_allowed) with
        # integer counts; invert, then prove the factorization reproduces the
        # stored floats exactly before trusting it
        allowed = probs > 0.0
        n_allowed = allowed.sum(axis=1, keepdims=True)
        denom = tp.original_count[:, None] + alpha * n_allowed
        cnt = np.rint(probs * denom - alpha * allowed).astype(np.int64)
        if not np.array_equal((cnt + alpha * allowed) / denom, probs):
            raise InternalError("categorical probabilities do not factor "
                                "into integer counts")
        cat.append({"feature": int(j), "counts": cnt.tolist(),
                    "allowed": allowed.astype(int).tolist()})
    return {"coverage": tp.coverage.tolist(),
            "count": tp.original_count.tolist(),
            "empty": tp.empty.astype(int).tolist(),
            "mu": tp.mu.tolist(),
            "sigma": tp.sigma.tolist(),
            "lo": _nullable(tp.lo),
            "hi": _nullable(tp.hi),
            "cat": cat}


def save_model(model: FordeModel, path, extra_meta: dict | None = None) -> None:
    meta = dict(model.meta)
    if extra_meta:
        meta.update(extra_meta)
    doc = {"format": FORMAT, "version": VERSION,
           "schema": schema_to_dict(model.schema),
           "n_train": int(model.n_train),
           "fit_config": {"alpha": model.fit_config.alpha,
                          "sigma_floor_rel": model.fit_config.sigma_floor_rel,
                          "sigma_floor_abs": model.fit_config.sigma_floor_abs},
           "meta": meta,
           "trees": []}
    for tree, tp in zip(model.trees, model.params):
        entry = {"split": _tree_to_obj(tree),
                 "params": _params_to_obj(tp, model.fit_config.alpha)}
        doc["trees"].append(entry)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, _RECURSION_HEADROOM))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, allow_nan=False, separators=(",", ":"))
            fh.write("\n")
    finally:
        sys.setrecursionlimit(old)


def _params_from_obj(obj: dict, schema: Schema, alpha: float) -> TreeParams:
    coverage = np.array(obj["coverage"], np.float64)
    count = np.array(obj["count"], np.int64)
    empty = np.array(obj["empty"], bool)
    L = len(coverage)
    mu = np.array(obj["mu"], np.float64).reshape(L, -1)
    sigma = np.array(obj["sigma"], np.float64).reshape(L, -1)
    lo = _from_nullable(obj["lo"], -np.inf)
    hi = _from_nullable(obj["hi"], np.inf)
    cat_probs: dict = {}
    for entry in obj["cat"]:
        j = int(entry["feature"])
        allowed = np.array(entry["allowed"], bool)
        cnt = np.array(entry["counts"], np.int64)
        if allowed.shape != (L, schema[j].n_levels) or cnt.shape != allowed.shape:
            raise ModelFormatError(f"bad categorical table for feature {j}")
        # same expression and dtypes as the fit, for bit-identical probs
        n_allowed = allowed.sum(axis=1, keepdims=True)
        denom = count[:, None] + alpha * n_allowed
        cat_probs[j] = (cnt + alpha * allowed) / denom
    return TreeParams(coverage, count, mu, sigma, lo, hi, cat_probs, empty)


def load_model(path) -> FordeModel:
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, _RECURSION_HEADROOM))
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    finally:
        sys.setrecursionlimit(old)
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    schema = schema_from_dict(doc["schema"])
    cfg = FordeFitConfig(**doc["fit_config"])
    trees = []
    params = []
    for entry in doc["trees"]:
        tp = _params_from_obj(entry["params"], schema, cfg.alpha)
        trees.append(_tree_from_obj(entry["split"], tp.original_count))
        params.append(tp)
    cont_features = np.flatnonzero(~schema.categorical_mask())
    return FordeModel(schema, trees, params, cont_features, cfg,
                      int(doc["n_train"]), dict(doc.get("meta", {})))
