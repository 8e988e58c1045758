"""
Permissioned hyperledger for model updates.

Blocks carry update records (weight digests plus metadata) and the hash of
their predecessor. Only devices in the registry may submit; there is no
proof-of-work.
"""
import hashlib
import logging
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .exceptions import ChainFormatError, InvalidChainError, LedgerError

logger = logging.getLogger(__name__)

DIGEST_SIZE = 32
ZERO_HASH = bytes(DIGEST_SIZE)

CHAIN_MAGIC = b'FGCH'
CHAIN_VERSION = 1

_BLOCK_HEAD = struct.Struct('<QI')
_RECORD_HEAD = struct.Struct(f'<QQ{DIGEST_SIZE}sdB')
_FACTOR = struct.Struct('<d')


class Authorization(Enum):
    ACCEPT = 'accept'
    REJECT = 'reject'


@dataclass(frozen=True)
class DeviceRegistry:
    trusted_ids: frozenset = frozenset()


@dataclass(frozen=True)
class UpdateRecord:
    client_id: int
    round: int
    weight_digest: bytes
    reported_accuracy: float
    factor_assigned: float = None

    def __post_init__(self):
        if len(self.weight_digest) != DIGEST_SIZE:
            raise LedgerError(f"weight digest must be {DIGEST_SIZE} bytes, got {len(self.weight_digest)}")

    def with_factor(self, factor):
        return UpdateRecord(self.client_id, self.round, self.weight_digest, self.reported_accuracy, factor)


@dataclass(frozen=True)
class Block:
    index: int
    records: tuple
    prev_hash: bytes
    hash: bytes


@dataclass(frozen=True)
class Chain:
    blocks: tuple

    def __len__(self):
        return len(self.blocks)

    @property
    def tip(self):
        return self.blocks[-1]


@dataclass(frozen=True)
class ChainStatus:
    valid: bool
    at_index: int = None

    def __bool__(self):
        return self.valid


# Canonical encoding

def _encode_record(record):
    has_factor = record.factor_assigned is not None
    encoded = _RECORD_HEAD.pack(
        record.client_id, record.round, record.weight_digest,
        record.reported_accuracy, 1 if has_factor else 0,
    )
    if has_factor:
        encoded += _FACTOR.pack(record.factor_assigned)
    return encoded


def encode_block_body(index, records, prev_hash):
    """Bytes hashed into a block: index, record count, records, prev_hash"""
    parts = [_BLOCK_HEAD.pack(index, len(records))]
    parts.extend(_encode_record(r) for r in records)
    parts.append(prev_hash)
    return b''.join(parts)


def block_hash(index, records, prev_hash):
    return hashlib.sha256(encode_block_body(index, records, prev_hash)).digest()


def _make_block(index, records, prev_hash):
    records = tuple(records)
    return Block(index, records, prev_hash, block_hash(index, records, prev_hash))


# Operations

def new_chain():
    """Chain holding only the genesis block"""
    return Chain((_make_block(0, (), ZERO_HASH),))


def authorize(registry, client_id):
    if client_id in registry.trusted_ids:
        return Authorization.ACCEPT
    return Authorization.REJECT


def verify_chain(chain):
    """Recompute every hash and link; report the first bad block"""
    if not chain.blocks:
        return ChainStatus(False, 0)
    genesis = chain.blocks[0]
    if genesis.index != 0 or genesis.records or genesis.prev_hash != ZERO_HASH:
        return ChainStatus(False, 0)
    for i, block in enumerate(chain.blocks):
        if i > 0 and (block.index != i or block.prev_hash != chain.blocks[i - 1].hash):
            return ChainStatus(False, i)
        if block.hash != block_hash(block.index, block.records, block.prev_hash):
            return ChainStatus(False, i)
    return ChainStatus(True)


def append_block(chain, records):
    """Return the chain extended by one block; the input chain is untouched"""
    status = verify_chain(chain)
    if not status:
        raise InvalidChainError(status.at_index, f"cannot append to a chain invalid at block {status.at_index}")
    tip = chain.tip
    block = _make_block(tip.index + 1, records, tip.hash)
    return Chain(chain.blocks + (block,))


def replicate(chain):
    """Copy handed to a client replica"""
    return Chain(tuple(chain.blocks))


def reconcile(local, remote):
    """Longest valid chain wins; equal lengths keep local"""
    for name, candidate in (('local', local), ('remote', remote)):
        status = verify_chain(candidate)
        if not status:
            raise InvalidChainError(status.at_index, f"{name} chain invalid at block {status.at_index}")
    if len(remote) > len(local):
        logger.warning("Replacing local chain (%d blocks) with remote chain (%d blocks)", len(local), len(remote))
        return remote
    return local


def block_digest_hex(block):
    return block.hash.hex()


def chain_summary(chain):
    return {
        'length': len(chain),
        'tip_index': chain.tip.index,
        'tip_hash': block_digest_hex(chain.tip),
        'records': sum(len(b.records) for b in chain.blocks),
    }


# Chain file: magic, version, then each block's canonical body followed by its hash

def serialize_chain(chain):
    parts = [CHAIN_MAGIC, bytes([CHAIN_VERSION])]
    for block in chain.blocks:
        parts.append(encode_block_body(block.index, block.records, block.prev_hash))
        parts.append(block.hash)
    return b''.join(parts)


def _take(payload, offset, size, what):
    end = offset + size
    if end > len(payload):
        raise ChainFormatError(f"truncated {what} at byte {offset}")
    return payload[offset:end], end


def deserialize_chain(payload):
    if len(payload) < len(CHAIN_MAGIC) + 1:
        raise ChainFormatError("file too short for a chain header")
    if payload[:4] != CHAIN_MAGIC:
        raise ChainFormatError(f"bad magic {payload[:4]!r}")
    if payload[4] != CHAIN_VERSION:
        raise ChainFormatError(f"unsupported chain version {payload[4]}")

    offset = 5
    blocks = []
    while offset < len(payload):
        # position in the file, not the stored index
        position = len(blocks)
        raw, offset = _take(payload, offset, _BLOCK_HEAD.size, f'header of block {position}')
        index, count = _BLOCK_HEAD.unpack(raw)
        records = []
        for _ in range(count):
            raw, offset = _take(payload, offset, _RECORD_HEAD.size, f'record in block {position}')
            client_id, round_, digest, accuracy, flag = _RECORD_HEAD.unpack(raw)
            if flag not in (0, 1):
                raise ChainFormatError(f"bad factor flag {flag} in block {position}")
            factor = None
            if flag:
                raw, offset = _take(payload, offset, _FACTOR.size, f'factor in block {position}')
                (factor,) = _FACTOR.unpack(raw)
            records.append(UpdateRecord(client_id, round_, digest, accuracy, factor))
        prev_hash, offset = _take(payload, offset, DIGEST_SIZE, f'prev_hash of block {position}')
        stored_hash, offset = _take(payload, offset, DIGEST_SIZE, f'hash of block {position}')
        blocks.append(Block(index, tuple(records), prev_hash, stored_hash))
    if not blocks:
        raise ChainFormatError("chain file holds no blocks")
    return Chain(tuple(blocks))


def save_chain(path, chain):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize_chain(chain))


def load_chain(path):
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise ChainFormatError(f"cannot read chain file {path}: {exc}") from exc
    return deserialize_chain(payload)


@dataclass
class Hyperledger:
    """
    The server's chain. Appends go through one lock; readers take the
    committed snapshot, which is immutable.
    """
    registry: DeviceRegistry
    chain: Chain = field(default_factory=new_chain)
    rejected: list = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def snapshot(self):
        return self.chain

    def admit(self, client_id):
        """Gate a submission; rejected ids are logged and remembered"""
        decision = authorize(self.registry, client_id)
        if decision is Authorization.REJECT:
            logger.warning("Rejected submission from untrusted device %d", client_id)
            self.rejected.append(client_id)
        return decision

    def commit(self, records):
        with self._lock:
            for record in records:
                if authorize(self.registry, record.client_id) is Authorization.REJECT:
                    raise LedgerError(f"record from untrusted device {record.client_id}")
            self.chain = append_block(self.chain, records)
            logger.info(
                "Appended block %d with %d records (%s)",
                self.chain.tip.index, len(records), block_digest_hex(self.chain.tip)[:16],
            )
            return self.chain
