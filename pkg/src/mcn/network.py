"""MCN layers and networks: forward pass, max patterns, JSON encoding.

A layer maps the running state ``x_k`` to

    x_{k+1} = [ L x_k ;  gamma(Atilde x_0) + max(W x_k, sigma(A x_khat)) ]

where ``khat`` is any earlier layer (0 is the raw input).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Activation, IDENTITY, RELU, EXP, LinearMap

READOUT_MODES = ("fixed", "learnable")
MAP_NAMES = ("L", "W", "A", "Atilde")


class NetworkError(ValueError):
    """Invalid network structure; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class MCNLayer:
    L: LinearMap
    W: LinearMap
    A: LinearMap
    Atilde: LinearMap
    sigma: Activation = RELU
    skip_index: int = 0

    def __post_init__(self):
        if self.L.cols != self.W.cols:
            raise NetworkError("L.cols", f"L reads {self.L.cols} inputs but W reads {self.W.cols}")
        for name in ("A", "Atilde"):
            if getattr(self, name).rows != self.W.rows:
                raise NetworkError(
                    f"{name}.rows", f"{getattr(self, name).rows} rows, W has {self.W.rows}"
                )
        if self.skip_index < 0:
            raise NetworkError("skip_index", "must be nonnegative")

    @property
    def d_L(self) -> int:
        return self.L.rows

    @property
    def width(self) -> int:
        """Number of max units."""
        return self.W.rows

    @property
    def in_dim(self) -> int:
        return self.L.cols

    @property
    def out_dim(self) -> int:
        return self.L.rows + self.W.rows

    def maps(self) -> dict[str, LinearMap]:
        return {name: getattr(self, name) for name in MAP_NAMES}


@dataclass(frozen=True)
class MCNNetwork:
    input_dim: int
    layers: tuple
    readout: LinearMap
    gamma: Activation = IDENTITY
    readout_mode: str = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_dim < 0:
            raise NetworkError("input_dim", "must be nonnegative")
        if self.readout_mode not in READOUT_MODES:
            raise NetworkError("readout.mode", f"unknown mode {self.readout_mode!r}")
        dims = [self.input_dim]
        for k, layer in enumerate(self.layers):
            at = f"layers[{k}]"
            if layer.in_dim != dims[-1]:
                raise NetworkError(f"{at}.L.cols", f"expects {layer.in_dim}, previous layer gives {dims[-1]}")
            if layer.skip_index > k:
                raise NetworkError(f"{at}.skip_index", f"{layer.skip_index} exceeds {k}")
            if layer.A.cols != dims[layer.skip_index]:
                raise NetworkError(
                    f"{at}.A.cols", f"{layer.A.cols} but skip layer has dimension {dims[layer.skip_index]}"
                )
            if layer.Atilde.cols != self.input_dim:
                raise NetworkError(f"{at}.Atilde.cols", f"{layer.Atilde.cols} but input_dim is {self.input_dim}")
            dims.append(layer.out_dim)
        if self.readout.cols != dims[-1]:
            raise NetworkError("readout.cols", f"{self.readout.cols} but last layer gives {dims[-1]}")
        if self.readout_mode == "fixed" and self.readout.rows > 0:
            if np.linalg.matrix_rank(self.readout.weights) < self.readout.rows:
                raise NetworkError("readout.weights", "fixed readout must have full row rank")

    @property
    def dims(self) -> list[int]:
        out = [self.input_dim]
        for layer in self.layers:
            out.append(layer.out_dim)
        return out

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def output_dim(self) -> int:
        return self.readout.rows

    def nnz(self) -> int:
        n = self.readout.nnz()
        for layer in self.layers:
            n += sum(m.nnz() for m in layer.maps().values())
        return n

    def __call__(self, x):
        return mcn_forward(self, x).output


@dataclass
class ForwardResult:
    states: list  # x_0 .. x_l
    output: np.ndarray
    w_branch: list = field(default_factory=list)
    a_branch: list = field(default_factory=list)


def mcn_forward(net: MCNNetwork, x) -> ForwardResult:
    """Evaluate all layer states and the readout.

    ``x`` is a vector of length ``input_dim`` or a batch of shape ``(n, input_dim)``.
    """
    x0 = np.asarray(x, dtype=np.float64)
    if x0.shape[-1:] != (net.input_dim,):
        raise NetworkError("input", f"expected trailing dimension {net.input_dim}, got shape {x0.shape}")
    states = [x0]
    wbs, abs_ = [], []
    for layer in net.layers:
        xk = states[-1]
        lin = layer.L(xk)
        wb = layer.W(xk)
        ab = layer.sigma(layer.A(states[layer.skip_index]))
        g = net.gamma(layer.Atilde(x0))
        # first argument wins ties, matching the gradient convention
        mx = np.where(wb >= ab, wb, ab)
        states.append(np.concatenate([lin, g + mx], axis=-1))
        wbs.append(wb)
        abs_.append(ab)
    return ForwardResult(states, net.readout(states[-1]), wbs, abs_)


def max_pattern(net: MCNNetwork, x) -> list[np.ndarray]:
    """Per-layer masks; True where the activated skip branch is selected (W <= sigma(A))."""
    res = mcn_forward(net, x)
    return [wb <= ab for wb, ab in zip(res.w_branch, res.a_branch)]


def forward_with_pattern(net: MCNNetwork, x, pattern) -> ForwardResult:
    """Forward pass where each max is replaced by the branch the mask selects."""
    x0 = np.asarray(x, dtype=np.float64)
    states = [x0]
    for layer, mask in zip(net.layers, pattern):
        xk = states[-1]
        wb = layer.W(xk)
        ab = layer.sigma(layer.A(states[layer.skip_index]))
        sel = np.where(mask, ab, wb)
        states.append(np.concatenate([layer.L(xk), net.gamma(layer.Atilde(x0)) + sel], axis=-1))
    return ForwardResult(states, net.readout(states[-1]))


# ---------------------------------------------------------------- parameters


def parameter_arrays(net: MCNNetwork, include_readout: bool | None = None) -> list[np.ndarray]:
    """Flat list of weight and bias arrays in a fixed order.

    Per layer: L.w, L.b, W.w, W.b, A.w, A.b, Atilde.w, Atilde.b. The readout
    weights are appended when learnable (its bias is never trained).
    """
    if include_readout is None:
        include_readout = net.readout_mode == "learnable"
    out = []
    for layer in net.layers:
        for m in layer.maps().values():
            out += [np.array(m.weights), np.array(m.bias)]
    if include_readout:
        out.append(np.array(net.readout.weights))
    return out


def with_parameter_arrays(net: MCNNetwork, arrays, include_readout: bool | None = None) -> MCNNetwork:
    if include_readout is None:
        include_readout = net.readout_mode == "learnable"
    arrays = list(arrays)
    it = iter(arrays)
    layers = []
    for layer in net.layers:
        maps = {name: LinearMap(next(it), next(it)) for name in MAP_NAMES}
        layers.append(replace(layer, **maps))
    readout = LinearMap(next(it), net.readout.bias) if include_readout else net.readout
    return replace(net, layers=tuple(layers), readout=readout)


# ---------------------------------------------------------------- constructors


def orthonormal_readout(rows: int, cols: int, rng: np.random.Generator) -> LinearMap:
    """Random map with orthonormal rows (needs rows <= cols)."""
    if rows > cols:
        raise ValueError(f"cannot have {rows} orthonormal rows in dimension {cols}")
    q, r = np.linalg.qr(rng.standard_normal((cols, rows)))
    q = q * np.sign(np.diag(r))
    return LinearMap(q.T)


def random_layer(
    rng: np.random.Generator,
    in_dim: int,
    d_L: int,
    width: int,
    skip_dim: int,
    input_dim: int,
    skip_index: int = 0,
    sigma: Activation = RELU,
    scale: float = 1.0,
    atilde_scale: float | None = None,
) -> MCNLayer:
    def rand(rows, cols, s):
        w = rng.standard_normal((rows, cols)) * s / np.sqrt(max(cols, 1))
        b = rng.standard_normal(rows) * s * 0.1
        return LinearMap(w, b)

    ats = scale if atilde_scale is None else atilde_scale
    return MCNLayer(
        L=rand(d_L, in_dim, scale),
        W=rand(width, in_dim, scale),
        A=rand(width, skip_dim, scale),
        Atilde=rand(width, input_dim, ats),
        sigma=sigma,
        skip_index=skip_index,
    )


def random_network(
    rng: np.random.Generator,
    input_dim: int,
    shapes,
    output_dim: int = 1,
    gamma: Activation = IDENTITY,
    sigma: Activation = RELU,
    readout_mode: str = "learnable",
    skip: str = "zero",
    scale: float = 1.0,
    atilde_scale: float | None = None,
) -> MCNNetwork:
    """Random network; ``shapes`` is a list of ``(d_L, width)`` per layer.

    ``skip`` is ``"zero"`` (always read x_0), ``"prev"`` (read x_k) or
    ``"random"`` (uniform over earlier layers).
    """
    dims = [input_dim]
    layers = []
    for k, (d_L, width) in enumerate(shapes):
        if skip == "zero":
            kh = 0
        elif skip == "prev":
            kh = k
        elif skip == "random":
            kh = int(rng.integers(0, k + 1))
        else:
            raise ValueError(f"unknown skip policy {skip!r}")
        layer = random_layer(rng, dims[-1], d_L, width, dims[kh], input_dim, kh, sigma, scale, atilde_scale)
        layers.append(layer)
        dims.append(layer.out_dim)
    if readout_mode == "fixed":
        readout = orthonormal_readout(output_dim, dims[-1], rng)
    else:
        readout = LinearMap(rng.standard_normal((output_dim, dims[-1])) / np.sqrt(max(dims[-1], 1)))
    return MCNNetwork(input_dim, tuple(layers), readout, gamma, readout_mode)


def zero_network(input_dim: int = 1, d_L: int = 1, width: int = 1, gamma: Activation = EXP) -> MCNNetwork:
    """One layer with every weight and bias zero and an identity-like readout."""
    layer = MCNLayer(
        LinearMap.zeros(d_L, input_dim),
        LinearMap.zeros(width, input_dim),
        LinearMap.zeros(width, input_dim),
        LinearMap.zeros(width, input_dim),
    )
    out = d_L + width
    readout = LinearMap(np.eye(1, out, out - 1))
    return MCNNetwork(input_dim, (layer,), readout, gamma, "fixed")


# ---------------------------------------------------------------- JSON


def _map_to_dict(m: LinearMap) -> dict:
    # json emits floats via repr, the shortest string that round-trips exactly
    return {
        "rows": m.rows,
        "cols": m.cols,
        "weights": [float(v) for v in m.weights.ravel()],
        "bias": [float(v) for v in m.bias],
    }


def network_to_dict(net: MCNNetwork) -> dict:
    readout = _map_to_dict(net.readout)
    readout["mode"] = net.readout_mode
    return {
        "input_dim": net.input_dim,
        "gamma": net.gamma.to_json(),
        "readout": readout,
        "layers": [
            {
                "d_L": layer.d_L,
                "skip_index": layer.skip_index,
                "sigma": layer.sigma.to_json(),
                **{name: _map_to_dict(m) for name, m in layer.maps().items()},
            }
            for layer in net.layers
        ],
    }


def serialize(net: MCNNetwork) -> bytes:
    return json.dumps(network_to_dict(net), indent=1).encode("utf-8")


def _get(doc, key, path, kind):
    if not isinstance(doc, dict):
        raise NetworkError(path, "expected an object")
    if key not in doc:
        raise NetworkError(f"{path}.{key}" if path else key, "missing field")
    v = doc[key]
    p = f"{path}.{key}" if path else key
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise NetworkError(p, f"expected a nonnegative integer, got {v!r}")
    elif kind is str:
        if not isinstance(v, str):
            raise NetworkError(p, f"expected a string, got {v!r}")
    elif kind is list:
        if not isinstance(v, list):
            raise NetworkError(p, "expected an array")
    elif kind is dict:
        if not isinstance(v, dict):
            raise NetworkError(p, "expected an object")
    return v


def _number(v, path):
    if isinstance(v, bool):
        raise NetworkError(path, f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        out = float(v)
    elif isinstance(v, str):
        try:
            out = float(v)
        except ValueError:
            raise NetworkError(path, f"not a number: {v!r}") from None
    else:
        raise NetworkError(path, f"expected a number, got {v!r}")
    if not np.isfinite(out):
        raise NetworkError(path, "entries must be finite")
    return out


def _map_from_dict(doc, path) -> LinearMap:
    rows = _get(doc, "rows", path, int)
    cols = _get(doc, "cols", path, int)
    weights = _get(doc, "weights", path, list)
    if len(weights) != rows * cols:
        raise NetworkError(f"{path}.weights", f"has {len(weights)} entries, expected rows*cols={rows * cols}")
    w = np.array([_number(v, f"{path}.weights[{i}]") for i, v in enumerate(weights)], dtype=np.float64)
    if "bias" in doc:
        bias = _get(doc, "bias", path, list)
        if len(bias) != rows:
            raise NetworkError(f"{path}.bias", f"has {len(bias)} entries, expected rows={rows}")
        b = np.array([_number(v, f"{path}.bias[{i}]") for i, v in enumerate(bias)], dtype=np.float64)
    else:
        b = np.zeros(rows)
    return LinearMap(w.reshape(rows, cols), b)


def _activation(name, path) -> Activation:
    try:
        return Activation.from_json(name)
    except ValueError as e:
        raise NetworkError(path, str(e)) from None


def network_from_dict(doc) -> MCNNetwork:
    input_dim = _get(doc, "input_dim", "", int)
    gamma = _activation(_get(doc, "gamma", "", str), "gamma")
    rdoc = _get(doc, "readout", "", dict)
    readout = _map_from_dict(rdoc, "readout")
    mode = _get(rdoc, "mode", "readout", str)
    layers = []
    for k, ldoc in enumerate(_get(doc, "layers", "", list)):
        at = f"layers[{k}]"
        maps = {}
        for name in MAP_NAMES:
            _get(ldoc, name, at, dict)
            maps[name] = _map_from_dict(ldoc[name], f"{at}.{name}")
        d_L = _get(ldoc, "d_L", at, int)
        if d_L != maps["L"].rows:
            raise NetworkError(f"{at}.d_L", f"{d_L} but L has {maps['L'].rows} rows")
        sigma = _activation(_get(ldoc, "sigma", at, str), f"{at}.sigma")
        skip = _get(ldoc, "skip_index", at, int)
        try:
            layers.append(MCNLayer(sigma=sigma, skip_index=skip, **maps))
        except NetworkError as e:
            raise NetworkError(f"{at}.{e.path}", str(e).split(": ", 1)[1]) from None
    return MCNNetwork(input_dim, tuple(layers), readout, gamma, mode)


def deserialize(data: bytes | str) -> MCNNetwork:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise NetworkError("$", f"invalid JSON: {e}") from None
    return network_from_dict(doc)


def networks_equal(a: MCNNetwork, b: MCNNetwork) -> bool:
    """Structural equality with bit-identical weights."""
    if (a.input_dim, a.gamma, a.readout_mode, len(a.layers)) != (b.input_dim, b.gamma, b.readout_mode, len(b.layers)):
        return False
    if a.readout != b.readout:
        return False
    for la, lb in zip(a.layers, b.layers):
        if (la.sigma, la.skip_index) != (lb.sigma, lb.skip_index):
            return False
        if any(la.maps()[n] != lb.maps()[n] for n in MAP_NAMES):
            return False
    return True
