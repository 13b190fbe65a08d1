"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D matrix (scalars are 1x1).  Operations are recorded on a
:class:`Record`; calling :meth:`Record.gradient` emits the backward pass onto
the *same* record as ordinary primitive operations, so gradients are
themselves differentiable.  That second-order capability is what lets the
attack optimizer push gradients through a one-step parameter update.

Design notes:

* float64 everywhere -- second-order quantities amplify rounding error.
* ``relu`` uses the one-sided subgradient: derivative at exactly 0 is 0.
* ``masked-cross-entropy`` fuses log-softmax with the label/weight reduction
  in a single primitive; both the forward pass and its recorded backward rule
  use the max-shift stabilization.
* Records are single-threaded, value-like objects; two records never share
  mutable state.
"""

from __future__ import annotations

import numpy as np


class EngineError(Exception):
    """Base class for recorded-operation failures."""


class ShapeError(EngineError):
    """Operand shapes do not conform for the requested operation."""


class NonFiniteError(EngineError):
    """An operation produced NaN or infinite entries."""


#: Operation kinds accepted by :meth:`Record.build_op`.  The kinds after
#: ``masked-cross-entropy`` are emitted internally by backward rules but are
#: valid to build directly as well.
OP_KINDS = (
    "matmul",
    "add",
    "add-n",
    "subtract",
    "elementwise-multiply",
    "scalar-multiply",
    "sigmoid",
    "relu",
    "log-softmax-rows",
    "sum",
    "row-select",
    "block-assemble-2x2",
    "stack-rows",
    "power",
    "divide",
    "masked-cross-entropy",
    "transpose",
    "softmax-rows",
    "row-scatter",
    "positive-mask",
)


class Tensor:
    """Handle to one matrix value recorded on a :class:`Record`."""

    __slots__ = ("record", "nid", "values")

    def __init__(self, record: "Record", nid: int, values: np.ndarray):
        self.record = record
        self.nid = nid
        self.values = values

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.values.shape}")
        return float(self.values[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(nid={self.nid}, shape={self.values.shape})"


class _Node:
    __slots__ = ("kind", "inputs", "params", "values")

    def __init__(self, kind, inputs, params, values):
        self.kind = kind
        self.inputs = inputs
        self.params = params
        self.values = values


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"engine values must be 2-D matrices, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"engine values must be non-empty, got shape {arr.shape}")
    return arr


def _check_finite(kind: str, arr: np.ndarray) -> None:
    # min/max both propagate NaN and catch either infinity without allocating.
    lo = arr.min()
    hi = arr.max()
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise NonFiniteError(f"operation '{kind}' produced non-finite entries")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax_rows(x: np.ndarray) -> np.ndarray:
    shift = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shift).sum(axis=1, keepdims=True))
    return shift - lse


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shift = x - x.max(axis=1, keepdims=True)
    ex = np.exp(shift)
    return ex / ex.sum(axis=1, keepdims=True)


class Record:
    """Append-only expression record (a tape of primitive matrix operations).

    Node ids are topologically ordered by construction: every input id
    precedes its consumers.  ``replay`` recomputes every cached forward value
    from the leaves and verifies exact reproduction.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    # ------------------------------------------------------------------
    # recording machinery
    # ------------------------------------------------------------------

    def _emit(self, kind, values, inputs=(), **params) -> Tensor:
        values = _as_matrix(values)
        _check_finite(kind, values)
        nid = len(self._nodes)
        self._nodes.append(_Node(kind, tuple(inputs), params, values))
        return Tensor(self, nid, values)

    def _tensor(self, nid: int) -> Tensor:
        return Tensor(self, nid, self._nodes[nid].values)

    def _own(self, *tensors: Tensor) -> None:
        for t in tensors:
            if t.record is not self:
                raise EngineError("tensor belongs to a different record")

    def leaf(self, values) -> Tensor:
        """Record an input matrix (weights, data, constants)."""
        return self._emit("leaf", values)

    def scalar(self, value: float) -> Tensor:
        return self.leaf([[float(value)]])

    def zeros_like(self, t: Tensor) -> Tensor:
        return self.leaf(np.zeros(t.shape))

    def build_op(self, kind: str, *inputs: Tensor, **params) -> Tensor:
        """Generic dispatcher; the named methods below are the primary API."""
        try:
            method = _DISPATCH[kind]
        except KeyError:
            raise EngineError(f"unknown operation kind '{kind}'") from None
        return method(self, *inputs, **params)

    # ------------------------------------------------------------------
    # primitive operations
    # ------------------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor, ta: bool = False, tb: bool = False) -> Tensor:
        self._own(a, b)
        ar, ac = a.shape if not ta else a.shape[::-1]
        br, bc = b.shape if not tb else b.shape[::-1]
        if ac != br:
            raise ShapeError(f"matmul: {a.shape}{'^T' if ta else ''} @ {b.shape}{'^T' if tb else ''}")
        av = a.values.T if ta else a.values
        bv = b.values.T if tb else b.values
        return self._emit("matmul", av @ bv, (a.nid, b.nid), ta=ta, tb=tb)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        self._own(a, b)
        if a.shape != b.shape:
            raise ShapeError(f"add: {a.shape} vs {b.shape}")
        return self._emit("add", a.values + b.values, (a.nid, b.nid))

    def add_n(self, tensors) -> Tensor:
        """Sum of two or more same-shape tensors in one node (keeps adjoint
        accumulation from materializing a chain of pairwise adds)."""
        tensors = list(tensors)
        if len(tensors) < 2:
            raise ShapeError("add-n needs at least two operands")
        self._own(*tensors)
        shape = tensors[0].shape
        if any(t.shape != shape for t in tensors):
            raise ShapeError(f"add-n: shapes {[t.shape for t in tensors]}")
        out = tensors[0].values + tensors[1].values
        for t in tensors[2:]:
            out += t.values
        return self._emit("add-n", out, tuple(t.nid for t in tensors))

    def subtract(self, a: Tensor, b: Tensor) -> Tensor:
        self._own(a, b)
        if a.shape != b.shape:
            raise ShapeError(f"subtract: {a.shape} vs {b.shape}")
        return self._emit("subtract", a.values - b.values, (a.nid, b.nid))

    def multiply(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product."""
        self._own(a, b)
        if a.shape != b.shape:
            raise ShapeError(f"elementwise-multiply: {a.shape} vs {b.shape}")
        return self._emit("elementwise-multiply", a.values * b.values, (a.nid, b.nid))

    def scalar_multiply(self, x: Tensor, scalar) -> Tensor:
        """Multiply by a python float or by a recorded 1x1 tensor."""
        self._own(x)
        if isinstance(scalar, Tensor):
            self._own(scalar)
            if scalar.shape != (1, 1):
                raise ShapeError(f"scalar-multiply: scalar operand has shape {scalar.shape}")
            return self._emit(
                "scalar-multiply", x.values * scalar.values[0, 0], (x.nid, scalar.nid)
            )
        return self._emit("scalar-multiply", x.values * float(scalar), (x.nid,), scalar=float(scalar))

    def sigmoid(self, x: Tensor) -> Tensor:
        self._own(x)
        return self._emit("sigmoid", _stable_sigmoid(x.values), (x.nid,))

    def relu(self, x: Tensor) -> Tensor:
        self._own(x)
        return self._emit("relu", np.maximum(x.values, 0.0), (x.nid,))

    def log_softmax_rows(self, x: Tensor) -> Tensor:
        self._own(x)
        return self._emit("log-softmax-rows", _log_softmax_rows(x.values), (x.nid,))

    def softmax_rows(self, x: Tensor) -> Tensor:
        self._own(x)
        return self._emit("softmax-rows", _softmax_rows(x.values), (x.nid,))

    def sum(self, x: Tensor) -> Tensor:
        """Full reduction to a 1x1 tensor."""
        self._own(x)
        return self._emit("sum", [[x.values.sum()]], (x.nid,))

    def row_select(self, x: Tensor, rows) -> Tensor:
        self._own(x)
        rows = np.asarray(rows, dtype=np.intp)
        if rows.ndim != 1 or rows.size == 0:
            raise ShapeError("row-select: rows must be a non-empty 1-D index list")
        if rows.min() < 0 or rows.max() >= x.shape[0]:
            raise ShapeError(f"row-select: index out of range for {x.shape[0]} rows")
        return self._emit("row-select", x.values[rows, :], (x.nid,), rows=rows)

    def row_scatter(self, x: Tensor, rows, n_rows: int) -> Tensor:
        """Adjoint of row-select: accumulate rows of x into a zero matrix."""
        self._own(x)
        rows = np.asarray(rows, dtype=np.intp)
        if rows.shape != (x.shape[0],):
            raise ShapeError(f"row-scatter: {rows.shape} rows for {x.shape[0]} input rows")
        out = np.zeros((n_rows, x.shape[1]))
        np.add.at(out, rows, x.values)
        return self._emit("row-scatter", out, (x.nid,), rows=rows, n_rows=int(n_rows))

    def block_assemble(self, tl: Tensor, inter: Tensor, intra: Tensor) -> Tensor:
        """[[tl, inter^T], [inter, intra]] for tl (n,n), inter (m,n), intra (m,m)."""
        self._own(tl, inter, intra)
        n = tl.shape[0]
        m = inter.shape[0]
        if tl.shape != (n, n) or inter.shape != (m, n) or intra.shape != (m, m):
            raise ShapeError(
                f"block-assemble-2x2: tl {tl.shape}, inter {inter.shape}, intra {intra.shape}"
            )
        out = np.empty((n + m, n + m))
        out[:n, :n] = tl.values
        out[:n, n:] = inter.values.T
        out[n:, :n] = inter.values
        out[n:, n:] = intra.values
        return self._emit(
            "block-assemble-2x2", out, (tl.nid, inter.nid, intra.nid), n=n, m=m
        )

    def block_grad(self, x: Tensor, part: str, n: int, m: int) -> Tensor:
        """Adjoint extraction from a (n+m)x(n+m) block matrix."""
        self._own(x)
        if x.shape != (n + m, n + m):
            raise ShapeError(f"block-grad-2x2: {x.shape} vs n={n}, m={m}")
        v = x.values
        if part == "tl":
            out = v[:n, :n]
        elif part == "inter":
            out = v[n:, :n] + v[:n, n:].T
        elif part == "br":
            out = v[n:, n:]
        else:
            raise EngineError(f"block-grad-2x2: unknown part '{part}'")
        return self._emit("block-grad-2x2", out, (x.nid,), part=part, n=n, m=m)

    def stack_rows(self, top: Tensor, bottom: Tensor) -> Tensor:
        self._own(top, bottom)
        if top.shape[1] != bottom.shape[1]:
            raise ShapeError(f"stack-rows: {top.shape} over {bottom.shape}")
        return self._emit(
            "stack-rows", np.vstack([top.values, bottom.values]), (top.nid, bottom.nid)
        )

    def power(self, x: Tensor, exponent: float) -> Tensor:
        """Elementwise power; non-integer exponents require positive entries."""
        self._own(x)
        exponent = float(exponent)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.power(x.values, exponent)
        return self._emit("power", vals, (x.nid,), exponent=exponent)

    def divide(self, a: Tensor, b: Tensor) -> Tensor:
        self._own(a, b)
        if a.shape != b.shape:
            raise ShapeError(f"divide: {a.shape} vs {b.shape}")
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = a.values / b.values
        return self._emit("divide", vals, (a.nid, b.nid))

    def masked_cross_entropy(self, logits: Tensor, labels, weights) -> Tensor:
        """sum_i weights[i] * cross_entropy(logits[i], labels[i]) as a 1x1 tensor.

        labels and weights are fixed arrays, not differentiable operands.
        """
        self._own(logits)
        labels = np.asarray(labels, dtype=np.intp)
        weights = np.asarray(weights, dtype=np.float64)
        n, c = logits.shape
        if labels.shape != (n,) or weights.shape != (n,):
            raise ShapeError(
                f"masked-cross-entropy: logits {logits.shape}, labels {labels.shape}, "
                f"weights {weights.shape}"
            )
        if labels.min() < 0 or labels.max() >= c:
            raise ShapeError(f"masked-cross-entropy: label out of range for {c} classes")
        logp = _log_softmax_rows(logits.values)
        ce = -logp[np.arange(n), labels]
        value = float(weights @ ce)
        return self._emit(
            "masked-cross-entropy", [[value]], (logits.nid,), labels=labels, weights=weights
        )

    def transpose(self, x: Tensor) -> Tensor:
        self._own(x)
        return self._emit("transpose", x.values.T.copy(), (x.nid,))

    def positive_mask(self, x: Tensor) -> Tensor:
        """1.0 where x > 0, else 0.0; derivative is zero everywhere."""
        self._own(x)
        return self._emit("positive-mask", (x.values > 0).astype(np.float64), (x.nid,))

    # ------------------------------------------------------------------
    # differentiation
    # ------------------------------------------------------------------

    def gradient(self, loss: Tensor, wrt) -> list[Tensor]:
        """d(loss)/d(w) for each w in wrt, emitted as recorded operations.

        loss must be 1x1.  Tensors unreachable from loss get an exact zero
        gradient.  The returned tensors live on this record and can be
        differentiated again.
        """
        self._own(loss)
        wrt = list(wrt)
        self._own(*wrt)
        if loss.shape != (1, 1):
            raise ShapeError(f"gradient: loss must be 1x1, got {loss.shape}")

        nodes = self._nodes
        limit = loss.nid + 1

        # nodes the loss depends on
        needed = np.zeros(limit, dtype=bool)
        needed[loss.nid] = True
        stack = [loss.nid]
        while stack:
            nid = stack.pop()
            for inp in nodes[nid].inputs:
                if not needed[inp]:
                    needed[inp] = True
                    stack.append(inp)

        # nodes that depend on some wrt tensor
        active = np.zeros(limit, dtype=bool)
        for t in wrt:
            if t.nid < limit:
                active[t.nid] = True
        for nid in range(limit):
            if active[nid]:
                continue
            for inp in nodes[nid].inputs:
                if active[inp]:
                    active[nid] = True
                    break

        live = needed & active
        pending: dict[int, list[Tensor]] = {loss.nid: [self.leaf([[1.0]])]}

        def combined(nid: int) -> Tensor:
            parts = pending[nid]
            if len(parts) > 1:
                pending[nid] = [self.add_n(parts)]
            return pending[nid][0]

        for nid in range(loss.nid, -1, -1):
            if not live[nid] or nid not in pending:
                continue
            node = nodes[nid]
            if not node.inputs:
                continue
            grad_out = combined(nid)
            want = [live[inp] for inp in node.inputs]
            contribs = _VJP[node.kind](self, nid, node, grad_out, want)
            for inp, contrib in zip(node.inputs, contribs):
                if contrib is not None:
                    pending.setdefault(inp, []).append(contrib)

        out = []
        for t in wrt:
            out.append(combined(t.nid) if t.nid in pending else self.zeros_like(t))
        return out

    # ------------------------------------------------------------------
    # replay
    # ------------------------------------------------------------------

    def replay(self) -> bool:
        """Recompute every non-leaf value from its inputs; True iff all values
        are reproduced exactly."""
        for node in self._nodes:
            if node.kind == "leaf":
                continue
            ins = [self._nodes[i].values for i in node.inputs]
            fresh = _replay_forward(node, ins)
            if not np.array_equal(fresh, node.values):
                return False
        return True

    def set_leaf(self, t: Tensor, values) -> None:
        """Overwrite a leaf's buffer in place (shape must match)."""
        self._own(t)
        if self._nodes[t.nid].kind != "leaf":
            raise EngineError("set_leaf: tensor is not a leaf")
        np.copyto(t.values, values)

    def recompute(self) -> None:
        """Re-evaluate every non-leaf value in place, reusing all buffers.

        After updating leaves via set_leaf this recomputes the whole record --
        including any recorded backward passes -- without allocating.  Finite
        checks are skipped; callers inspect the outputs they consume.
        """
        nodes = self._nodes
        for node in nodes:
            if node.kind == "leaf":
                continue
            ins = [nodes[i].values for i in node.inputs]
            _recompute_forward(node, ins, node.values)


# ----------------------------------------------------------------------
# replay forward rules
# ----------------------------------------------------------------------


def _replay_forward(node: _Node, ins: list[np.ndarray]) -> np.ndarray:
    kind = node.kind
    p = node.params
    if kind == "matmul":
        a = ins[0].T if p["ta"] else ins[0]
        b = ins[1].T if p["tb"] else ins[1]
        return a @ b
    if kind == "add":
        return ins[0] + ins[1]
    if kind == "add-n":
        out = ins[0] + ins[1]
        for extra in ins[2:]:
            out += extra
        return out
    if kind == "subtract":
        return ins[0] - ins[1]
    if kind == "elementwise-multiply":
        return ins[0] * ins[1]
    if kind == "scalar-multiply":
        if len(ins) == 2:
            return ins[0] * ins[1][0, 0]
        return ins[0] * p["scalar"]
    if kind == "sigmoid":
        return _stable_sigmoid(ins[0])
    if kind == "relu":
        return np.maximum(ins[0], 0.0)
    if kind == "log-softmax-rows":
        return _log_softmax_rows(ins[0])
    if kind == "softmax-rows":
        return _softmax_rows(ins[0])
    if kind == "sum":
        return np.array([[ins[0].sum()]])
    if kind == "row-select":
        return ins[0][p["rows"], :]
    if kind == "row-scatter":
        out = np.zeros((p["n_rows"], ins[0].shape[1]))
        np.add.at(out, p["rows"], ins[0])
        return out
    if kind == "block-assemble-2x2":
        n, m = p["n"], p["m"]
        out = np.empty((n + m, n + m))
        out[:n, :n] = ins[0]
        out[:n, n:] = ins[1].T
        out[n:, :n] = ins[1]
        out[n:, n:] = ins[2]
        return out
    if kind == "block-grad-2x2":
        n, m = p["n"], p["m"]
        v = ins[0]
        if p["part"] == "tl":
            return v[:n, :n].copy()
        if p["part"] == "inter":
            return v[n:, :n] + v[:n, n:].T
        return v[n:, n:].copy()
    if kind == "stack-rows":
        return np.vstack(ins)
    if kind == "power":
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.power(ins[0], p["exponent"])
    if kind == "divide":
        with np.errstate(divide="ignore", invalid="ignore"):
            return ins[0] / ins[1]
    if kind == "masked-cross-entropy":
        logp = _log_softmax_rows(ins[0])
        ce = -logp[np.arange(ins[0].shape[0]), p["labels"]]
        return np.array([[float(p["weights"] @ ce)]])
    if kind == "transpose":
        return ins[0].T.copy()
    if kind == "positive-mask":
        return (ins[0] > 0).astype(np.float64)
    raise EngineError(f"replay: unknown kind '{kind}'")


def _recompute_forward(node: _Node, ins: list[np.ndarray], out: np.ndarray) -> None:
    """Evaluate a node into its existing buffer (allocation-free hot path for
    the shapes that matter; small shapes may still build temporaries)."""
    kind = node.kind
    p = node.params
    if kind == "matmul":
        a = ins[0].T if p["ta"] else ins[0]
        b = ins[1].T if p["tb"] else ins[1]
        np.matmul(a, b, out=out)
    elif kind == "add":
        np.add(ins[0], ins[1], out=out)
    elif kind == "add-n":
        np.add(ins[0], ins[1], out=out)
        for extra in ins[2:]:
            np.add(out, extra, out=out)
    elif kind == "subtract":
        np.subtract(ins[0], ins[1], out=out)
    elif kind == "elementwise-multiply":
        np.multiply(ins[0], ins[1], out=out)
    elif kind == "scalar-multiply":
        scalar = ins[1][0, 0] if len(ins) == 2 else p["scalar"]
        np.multiply(ins[0], scalar, out=out)
    elif kind == "relu":
        np.maximum(ins[0], 0.0, out=out)
    elif kind == "power":
        with np.errstate(divide="ignore", invalid="ignore"):
            np.power(ins[0], p["exponent"], out=out)
    elif kind == "divide":
        with np.errstate(divide="ignore", invalid="ignore"):
            np.divide(ins[0], ins[1], out=out)
    elif kind == "block-assemble-2x2":
        n = p["n"]
        out[:n, :n] = ins[0]
        out[:n, n:] = ins[1].T
        out[n:, :n] = ins[1]
        out[n:, n:] = ins[2]
    elif kind == "stack-rows":
        r = ins[0].shape[0]
        out[:r] = ins[0]
        out[r:] = ins[1]
    elif kind == "row-select":
        np.take(ins[0], p["rows"], axis=0, out=out)
    elif kind == "row-scatter":
        out.fill(0.0)
        np.add.at(out, p["rows"], ins[0])
    elif kind == "transpose":
        np.copyto(out, ins[0].T)
    else:
        np.copyto(out, _replay_forward(node, ins))


# ----------------------------------------------------------------------
# backward (vector-Jacobian) rules, expressed as recorded operations
# ----------------------------------------------------------------------


def _broadcast_scalar(rec: Record, g: Tensor, rows: int, cols: int) -> Tensor:
    """Spread a 1x1 adjoint over a rows x cols matrix."""
    row = rec.matmul(g, rec.leaf(np.ones((1, cols))))
    return rec.matmul(rec.leaf(np.ones((rows, 1))), row)


def _rowsum_broadcast(rec: Record, x: Tensor) -> Tensor:
    """Per-row sums of x, broadcast back over the columns of x."""
    cols = x.shape[1]
    sums = rec.matmul(x, rec.leaf(np.ones((cols, 1))))
    return rec.matmul(sums, rec.leaf(np.ones((1, cols))))


def _vjp_matmul(rec, nid, node, g, want):
    a = rec._tensor(node.inputs[0])
    b = rec._tensor(node.inputs[1])
    ta, tb = node.params["ta"], node.params["tb"]
    da = db = None
    if want[0]:
        da = rec.matmul(g, b, tb=not tb) if not ta else rec.matmul(b, g, ta=tb, tb=True)
    if want[1]:
        db = rec.matmul(a, g, ta=not ta) if not tb else rec.matmul(g, a, ta=True, tb=ta)
    return [da, db]


def _vjp_add(rec, nid, node, g, want):
    return [g if want[0] else None, g if want[1] else None]


def _vjp_add_n(rec, nid, node, g, want):
    return [g if w else None for w in want]


def _vjp_subtract(rec, nid, node, g, want):
    return [
        g if want[0] else None,
        rec.scalar_multiply(g, -1.0) if want[1] else None,
    ]


def _vjp_multiply(rec, nid, node, g, want):
    a = rec._tensor(node.inputs[0])
    b = rec._tensor(node.inputs[1])
    return [
        rec.multiply(g, b) if want[0] else None,
        rec.multiply(g, a) if want[1] else None,
    ]


def _vjp_scalar_multiply(rec, nid, node, g, want):
    x = rec._tensor(node.inputs[0])
    if len(node.inputs) == 2:
        s = rec._tensor(node.inputs[1])
        dx = rec.scalar_multiply(g, s) if want[0] else None
        ds = rec.sum(rec.multiply(g, x)) if want[1] else None
        return [dx, ds]
    return [rec.scalar_multiply(g, node.params["scalar"]) if want[0] else None]


def _vjp_sigmoid(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    out = rec._tensor(nid)
    deriv = rec.subtract(out, rec.multiply(out, out))
    return [rec.multiply(g, deriv)]


def _vjp_relu(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    mask = rec.positive_mask(rec._tensor(node.inputs[0]))
    return [rec.multiply(g, mask)]


def _vjp_log_softmax_rows(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    x = rec._tensor(node.inputs[0])
    sm = rec.softmax_rows(x)
    return [rec.subtract(g, rec.multiply(sm, _rowsum_broadcast(rec, g)))]


def _vjp_softmax_rows(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    s = rec._tensor(nid)
    inner = rec.subtract(g, _rowsum_broadcast(rec, rec.multiply(g, s)))
    return [rec.multiply(s, inner)]


def _vjp_sum(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    rows, cols = rec._nodes[node.inputs[0]].values.shape
    return [_broadcast_scalar(rec, g, rows, cols)]


def _vjp_row_select(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    n_rows = rec._nodes[node.inputs[0]].values.shape[0]
    return [rec.row_scatter(g, node.params["rows"], n_rows)]


def _vjp_row_scatter(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    return [rec.row_select(g, node.params["rows"])]


def _vjp_block_assemble(rec, nid, node, g, want):
    n, m = node.params["n"], node.params["m"]
    return [
        rec.block_grad(g, "tl", n, m) if want[0] else None,
        rec.block_grad(g, "inter", n, m) if want[1] else None,
        rec.block_grad(g, "br", n, m) if want[2] else None,
    ]


def _vjp_block_grad(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    n, m = node.params["n"], node.params["m"]
    part = node.params["part"]
    if part == "tl":
        out = rec.block_assemble(g, rec.leaf(np.zeros((m, n))), rec.leaf(np.zeros((m, m))))
    elif part == "inter":
        out = rec.block_assemble(rec.leaf(np.zeros((n, n))), g, rec.leaf(np.zeros((m, m))))
    else:
        out = rec.block_assemble(rec.leaf(np.zeros((n, n))), rec.leaf(np.zeros((m, n))), g)
    return [out]


def _vjp_stack_rows(rec, nid, node, g, want):
    r_top = rec._nodes[node.inputs[0]].values.shape[0]
    r_bot = rec._nodes[node.inputs[1]].values.shape[0]
    top = rec.row_select(g, np.arange(r_top)) if want[0] else None
    bot = rec.row_select(g, np.arange(r_top, r_top + r_bot)) if want[1] else None
    return [top, bot]


def _vjp_power(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    p = node.params["exponent"]
    if p == 0.0:
        return [None]
    x = rec._tensor(node.inputs[0])
    return [rec.scalar_multiply(rec.multiply(g, rec.power(x, p - 1.0)), p)]


def _vjp_divide(rec, nid, node, g, want):
    a = rec._tensor(node.inputs[0])
    b = rec._tensor(node.inputs[1])
    da = rec.divide(g, b) if want[0] else None
    db = None
    if want[1]:
        db = rec.scalar_multiply(
            rec.multiply(g, rec.divide(a, rec.multiply(b, b))), -1.0
        )
    return [da, db]


def _vjp_masked_cross_entropy(rec, nid, node, g, want):
    if not want[0]:
        return [None]
    logits = rec._tensor(node.inputs[0])
    labels = node.params["labels"]
    weights = node.params["weights"]
    n, c = logits.shape
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    sm = rec.softmax_rows(logits)
    diff = rec.subtract(sm, rec.leaf(onehot))
    weighted = rec.multiply(diff, rec.leaf(np.repeat(weights[:, None], c, axis=1)))
    return [rec.scalar_multiply(weighted, g)]


def _vjp_transpose(rec, nid, node, g, want):
    return [rec.transpose(g) if want[0] else None]


def _vjp_positive_mask(rec, nid, node, g, want):
    # piecewise constant: zero derivative almost everywhere
    return [None]


_VJP = {
    "matmul": _vjp_matmul,
    "add": _vjp_add,
    "add-n": _vjp_add_n,
    "subtract": _vjp_subtract,
    "elementwise-multiply": _vjp_multiply,
    "scalar-multiply": _vjp_scalar_multiply,
    "sigmoid": _vjp_sigmoid,
    "relu": _vjp_relu,
    "log-softmax-rows": _vjp_log_softmax_rows,
    "softmax-rows": _vjp_softmax_rows,
    "sum": _vjp_sum,
    "row-select": _vjp_row_select,
    "row-scatter": _vjp_row_scatter,
    "block-assemble-2x2": _vjp_block_assemble,
    "block-grad-2x2": _vjp_block_grad,
    "stack-rows": _vjp_stack_rows,
    "power": _vjp_power,
    "divide": _vjp_divide,
    "masked-cross-entropy": _vjp_masked_cross_entropy,
    "transpose": _vjp_transpose,
    "positive-mask": _vjp_positive_mask,
}

_DISPATCH = {
    "matmul": Record.matmul,
    "add": Record.add,
    "add-n": lambda rec, *tensors: rec.add_n(tensors),
    "subtract": Record.subtract,
    "elementwise-multiply": Record.multiply,
    "scalar-multiply": Record.scalar_multiply,
    "sigmoid": Record.sigmoid,
    "relu": Record.relu,
    "log-softmax-rows": Record.log_softmax_rows,
    "softmax-rows": Record.softmax_rows,
    "sum": Record.sum,
    "row-select": Record.row_select,
    "row-scatter": Record.row_scatter,
    "block-assemble-2x2": Record.block_assemble,
    "block-grad-2x2": Record.block_grad,
    "stack-rows": Record.stack_rows,
    "power": Record.power,
    "divide": Record.divide,
    "masked-cross-entropy": Record.masked_cross_entropy,
    "transpose": Record.transpose,
    "positive-mask": Record.positive_mask,
}
