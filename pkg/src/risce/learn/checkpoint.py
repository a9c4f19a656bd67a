"""Binary checkpoint format for trained phase + CNN models.

Layout ("RCNN", little-endian)::

    magic        4 bytes  b"RCNN"
    version      u16      currently 1
    M, L, N_v    u32 each
    locked       u8       first phase row locked flag
    n_conv       u16      number of convolution layers
    per conv layer:
        out, in      u32 each
        kh, kw       u16 each
        activation   u8   index into the activation table
        batch_norm   u8
    resize in, out   u32 each
    phase angles     (L+1)*N_v f64, row-major
    per conv layer: kernels, biases, then (if batch norm)
        gamma, beta, running mean, running var
    resize weights, biases

All floating point payloads are little-endian f64 in C order.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from ..model import SystemDims
from .layers import ACTIVATIONS, BatchNorm, Conv2d, PhaseLayer, WidthResize
from .network import PhaseCnnModel

MAGIC = b"RCNN"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIIBH")
_CONV = struct.Struct("<IIHHBB")
_RESIZE = struct.Struct("<II")


def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_array(fh, shape, path) -> np.ndarray:
    count = int(np.prod(shape))
    blob = fh.read(count * 8)
    if len(blob) != count * 8:
        raise FormatError(f"{path}: truncated parameter payload")
    return np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(shape)


def save_model(model: PhaseCnnModel, path) -> None:
    dims = model.dims
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dims.bs_antennas, dims.ris_elements,
                              dims.num_phases, 1 if model.phase.lock_first_row else 0,
                              len(model.conv_layers)))
        for layer in model.conv_layers:
            c_out, c_in, kh, kw = layer.weights.shape
            fh.write(_CONV.pack(c_out, c_in, kh, kw,
                                ACTIVATIONS.index(layer.activation),
                                1 if layer.norm is not None else 0))
        fh.write(_RESIZE.pack(*model.resize.weights.shape))
        _write_array(fh, model.phase.angles)
        for layer in model.conv_layers:
            _write_array(fh, layer.weights)
            _write_array(fh, layer.bias)
            if layer.norm is not None:
                _write_array(fh, layer.norm.gamma)
                _write_array(fh, layer.norm.beta)
                _write_array(fh, layer.norm.running_mean)
                _write_array(fh, layer.norm.running_var)
        _write_array(fh, model.resize.weights)
        _write_array(fh, model.resize.bias)


def load_model(path) -> PhaseCnnModel:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: file too short for a checkpoint header")
        magic, version, m, el, n_v, locked, n_conv = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not a model checkpoint")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        if m < 1 or el < 1 or n_v < 1 or n_conv < 1:
            raise FormatError(f"{path}: invalid checkpoint header")
        layer_specs = []
        for _ in range(n_conv):
            raw = fh.read(_CONV.size)
            if len(raw) < _CONV.size:
                raise FormatError(f"{path}: truncated layer table")
            c_out, c_in, kh, kw, act_id, has_norm = _CONV.unpack(raw)
            if act_id >= len(ACTIVATIONS):
                raise FormatError(f"{path}: unknown activation id {act_id}")
            layer_specs.append((c_out, c_in, kh, kw, ACTIVATIONS[act_id], bool(has_norm)))
        raw = fh.read(_RESIZE.size)
        if len(raw) < _RESIZE.size:
            raise FormatError(f"{path}: truncated layer table")
        width_in, width_out = _RESIZE.unpack(raw)

        dims = SystemDims(bs_antennas=m, ris_elements=el, num_phases=n_v)
        rng = np.random.default_rng(0)
        angles = _read_array(fh, (el + 1, n_v), path)
        phase = PhaseLayer(angles, lock_first_row=bool(locked))
        conv_layers = []
        for c_out, c_in, kh, kw, activation, has_norm in layer_specs:
            layer = Conv2d(c_in, c_out, activation, rng, kernel_size=kh,
                           batch_norm=has_norm)
            if (kh, kw) != layer.weights.shape[2:]:
                raise FormatError(f"{path}: non-square kernels are not supported")
            layer.weights = _read_array(fh, (c_out, c_in, kh, kw), path)
            layer.bias = _read_array(fh, (c_out,), path)
            if has_norm:
                layer.norm = BatchNorm(c_out)
                layer.norm.gamma = _read_array(fh, (c_out,), path)
                layer.norm.beta = _read_array(fh, (c_out,), path)
                layer.norm.running_mean = _read_array(fh, (c_out,), path)
                layer.norm.running_var = _read_array(fh, (c_out,), path)
            conv_layers.append(layer)
        resize = WidthResize(width_in, width_out)
        resize.weights = _read_array(fh, (width_in, width_out), path)
        resize.bias = _read_array(fh, (width_out,), path)
        trailing = fh.read(1)
    if trailing:
        raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    return PhaseCnnModel(dims, phase, conv_layers, resize)
