#!/usr/bin/env python3
"""Independent reference for the symmetric crypto and packet layout.

Writes `name hex` lines to crates/core/tests/data/golden.txt, and
`hex(key) hex(input) hex(output)` records to prf.txt and keystream.txt in
the same directory (keystream input is the 8-byte timestamp). Only the
`cryptography` package is used, so the vectors do not depend on the Rust
code they check.

    python3 oracles/golden.py
"""

import hashlib
import pathlib
import struct

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

DATA = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/data"
OUT = DATA / "golden.txt"


def aes_block(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def prf(key: bytes, data: bytes) -> bytes:
    # CBC-MAC with 0x80 then zero padding; the marker block is always added.
    padded = data + b"\x80" + b"\x00" * (15 - len(data) % 16)
    state = bytes(16)
    for i in range(0, len(padded), 16):
        state = aes_block(key, bytes(a ^ b for a, b in zip(state, padded[i : i + 16])))
    return state


def keystream(key: bytes, ts: int) -> bytes:
    return aes_block(key, struct.pack(">Q", ts) + bytes(8))


def digest16(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()[:16]


def as_bytes(isd: int, asn: int) -> bytes:
    return struct.pack(">H", isd) + asn.to_bytes(6, "big")


def host(a, b, c, d) -> bytes:
    return bytes([a, b, c, d])


def as_level(secret: bytes, holder: bytes) -> bytes:
    return prf(secret, holder)


def host_as(as_key: bytes, holder_host: bytes) -> bytes:
    return prf(as_key, holder_host)


def host_host(as_key: bytes, issuer_host: bytes, holder_host: bytes) -> bytes:
    return prf(as_key, issuer_host + holder_host)


def enc_index(key: bytes, ts: int, index: int) -> bytes:
    ks = keystream(key, ts)
    raw = struct.pack(">H", index)
    return bytes([raw[0] ^ ks[0], raw[1] ^ ks[1]])


def hvf_input(ts, src_as, src_host, sigma, enc) -> bytes:
    return struct.pack(">Q", ts) + src_as + src_host + sigma + enc


def dvf(key: bytes, ts: int, payload: bytes) -> bytes:
    return prf(key, struct.pack(">Q", ts) + digest16(payload))[:4]


def control_mac(key, kind, ts, index, as_id) -> bytes:
    return prf(key, bytes([kind]) + struct.pack(">QH", ts, index) + as_id)[:4]


def main() -> None:
    lines = []

    def emit(name: str, value: bytes) -> None:
        lines.append(f"{name} {value.hex()}")

    key = bytes(range(16))
    emit("prf_key", key)
    for n in (0, 1, 15, 16, 17, 38, 64):
        msg = bytes((7 * i + 3) % 256 for i in range(n))
        emit(f"prf_msg_{n}", msg)
        emit(f"prf_out_{n}", prf(key, msg))

    ts = 0x0123456789ABCDEF
    emit("ks_ts", struct.pack(">Q", ts))
    emit("ks_out", keystream(key, ts))
    emit("digest16_abc", digest16(b"abc"))

    # Key hierarchy.
    secret = bytes([0x5A] * 16)
    holder = as_bytes(1, 0xFF00_0000_0111)
    src_host = host(10, 1, 0, 7)
    dst_host = host(10, 2, 0, 9)
    lvl = as_level(secret, holder)
    emit("drkey_as_level", lvl)
    emit("drkey_host_as", host_as(lvl, src_host))
    emit("drkey_host_host", host_host(lvl, dst_host, src_host))

    # A three-hop packet and its state after each honest hop.
    pkt_ts = 1_700_000_000_123_456_789
    src_as = as_bytes(1, 0xFF00_0000_0111)
    dst_as = as_bytes(1, 0xFF00_0000_0113)
    secrets = [bytes([0x10 + i] * 16) for i in range(3)]
    hop_as = [as_bytes(1, 0xFF00_0000_0111 + i) for i in range(3)]
    ifs = [(0, 1), (2, 3), (4, 0)]
    sigmas = [bytes([0xA0 + i] * 16) for i in range(3)]
    indices = [0, 5, 0x1234]
    payload = b"golden payload"
    keys = [host_as(as_level(s, src_as), src_host) for s in secrets]
    dst_secret = secrets[2]
    kdvf = host_host(as_level(dst_secret, src_as), dst_host, src_host)

    auth = []
    updated = []
    for i in range(3):
        idx = 0 if i == 0 else indices[i]
        e = enc_index(keys[i], pkt_ts, idx)
        mac = prf(keys[i], hvf_input(pkt_ts, src_as, src_host, sigmas[i], e))
        auth.append([e, mac[:4]])
        updated.append(mac[4:8])

    def encode(cur: int) -> bytes:
        out = struct.pack(">Q", pkt_ts) + src_as + src_host + dst_as + dst_host + bytes([3, cur])
        for i in range(3):
            out += hop_as[i] + struct.pack(">HH", *ifs[i]) + sigmas[i]
        for e, h in auth:
            out += e + h
        return out + dvf(kdvf, pkt_ts, payload) + payload

    emit("pkt_ts", struct.pack(">Q", pkt_ts))
    for i, s in enumerate(secrets):
        emit(f"pkt_secret_{i}", s)
    emit("pkt_sent", encode(0))
    for i in range(3):
        auth[i][1] = updated[i]
        emit(f"pkt_after_hop_{i}", encode(i + 1))
    emit("pkt_control_mac", control_mac(keys[1], 1, pkt_ts, 5, hop_as[1]))

    records = {"prf.txt": [], "keystream.txt": []}
    seed = hashlib.sha256(b"records").digest()
    for i in range(64):
        seed = hashlib.sha256(seed).digest()
        k = seed[:16]
        msg = hashlib.sha256(seed + b"m").digest() * 3
        msg = msg[: (i * 7) % 80]
        records["prf.txt"].append(f"{k.hex()} {msg.hex()} {prf(k, msg).hex()}")
        ts = int.from_bytes(seed[16:24], "big")
        tsb = struct.pack(">Q", ts)
        records["keystream.txt"].append(f"{k.hex()} {tsb.hex()} {keystream(k, ts).hex()}")

    DATA.mkdir(parents=True, exist_ok=True)
    for name, rows in records.items():
        (DATA / name).write_text("\n".join(rows) + "\n")

    OUT.write_text("# generated by oracles/golden.py\n" + "\n".join(lines) + "\n")
    print(f"wrote {len(lines)} vectors to {OUT}")


if __name__ == "__main__":
    main()
