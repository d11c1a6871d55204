from .codec import DecodeError
from .crypto import (
    Account, Digest, InvalidSeed, KeyPair, account_of, hash_bytes, keygen,
    seed_from, sign, verify,
)
from .types import (
    Block, NodeId, OutPoint, Params, Proposal, ProposerMode, Transaction,
    TxInput, TxOutput, default_t,
)

__all__ = [
    "Account", "Block", "DecodeError", "Digest", "InvalidSeed", "KeyPair",
    "NodeId", "OutPoint", "Params", "Proposal", "ProposerMode", "Transaction",
    "TxInput", "TxOutput", "account_of", "default_t", "hash_bytes", "keygen",
    "seed_from", "sign", "verify",
]
