#!/usr/bin/env python3
"""Writes a tiny ONNX classifier for the adapter tests.

Graph: GlobalAveragePool -> Flatten -> Gemm(W, b) with fixed weights, so the
logits are a hand-computable function of the per-channel means. Encodes the
protobuf wire format directly; no onnx package needed.
"""
import struct
import sys

W = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, -0.5, 0.25]]
B = [0.0, 0.1, -0.1, 0.0]


def varint(n):
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def field_varint(num, value):
    return varint(num << 3) + varint(value)


def field_bytes(num, payload):
    if isinstance(payload, str):
        payload = payload.encode()
    return varint((num << 3) | 2) + varint(len(payload)) + payload


def tensor(name, dims, values):
    body = b"".join(field_varint(1, d) for d in dims)
    body += field_varint(2, 1)  # FLOAT
    body += field_bytes(8, name)
    body += field_bytes(9, struct.pack("<%df" % len(values), *values))
    return body


def int_attr(name, value):
    return field_bytes(1, name) + field_varint(3, value) + field_varint(20, 2)


def node(op, inputs, outputs, attrs=()):
    body = b"".join(field_bytes(1, i) for i in inputs)
    body += b"".join(field_bytes(2, o) for o in outputs)
    body += field_bytes(3, op.lower())
    body += field_bytes(4, op)
    body += b"".join(field_bytes(5, a) for a in attrs)
    return body


def value_info(name, shape):
    dims = b"".join(field_bytes(1, field_varint(1, d)) for d in shape)
    tensor_type = field_varint(1, 1) + field_bytes(2, dims)
    return field_bytes(1, name) + field_bytes(2, field_bytes(1, tensor_type))


def main(path, size=8):
    graph = b"".join([
        field_bytes(1, node("GlobalAveragePool", ["input"], ["pooled"])),
        field_bytes(1, node("Flatten", ["pooled"], ["flat"], [int_attr("axis", 1)])),
        field_bytes(1, node("Gemm", ["flat", "W", "B"], ["logits"], [int_attr("transB", 1)])),
        field_bytes(2, "tiny_gap"),
        field_bytes(5, tensor("W", [4, 3], [v for row in W for v in row])),
        field_bytes(5, tensor("B", [4], B)),
        field_bytes(11, value_info("input", [1, 3, size, size])),
        field_bytes(12, value_info("logits", [1, 4])),
    ])
    model = field_varint(1, 7) + field_bytes(2, "xprobe") + field_bytes(7, graph)
    model += field_bytes(8, field_bytes(1, "") + field_varint(2, 11))
    with open(path, "wb") as f:
        f.write(model)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/tiny_gap.onnx")
