"""Linkage analysis over the public ledger and log.

The observer is as strong as the mix server: it knows every signed offer of
the epoch (k_AM, k_esc, D) and sees every transaction and log post. It still
cannot tell which payout belongs to which deposit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx

from . import crypto
from .crypto import Address, AddressKind
from .ledger import Ledger
from .messages import ServerAdvertisement, SignedOffer, UnblindedPost, decode_log_payload, output_message

MAX_BRUTE_FORCE = 8


@dataclass(frozen=True)
class InputCluster:
    label: str
    addresses: frozenset[Address]
    v: int
    deposit_height: int
    t3: int
    t4: int


@dataclass(frozen=True)
class PaidOutput:
    k_out: Address
    amount: int
    denomination: int | None
    post_height: int
    payout_height: int


def _input_clusters(ledger: Ledger, epoch: Sequence[tuple[str, SignedOffer]]) -> list[InputCluster]:
    clusters = []
    for label, offer in epoch:
        p = offer.params
        addrs = {offer.k_AM, offer.k_esc}
        deposit_height = None
        for address, amount in ((offer.k_AM, p.deposit), (offer.k_esc, p.v)):
            for op in ledger.outputs_to.get(address, ()):
                utxo = ledger.utxos[op]
                if utxo.amount != amount:
                    continue
                tx = ledger.txs[op.txid]
                addrs |= {ledger.utxos[i.prevout].owner for i in tx.inputs}
                if address == offer.k_AM:
                    deposit_height = utxo.created_at
                break
        if deposit_height is not None:
            clusters.append(InputCluster(label, frozenset(addrs), p.v, deposit_height, p.t(3), p.t(4)))
    return clusters


def _paid_outputs(ledger: Ledger) -> list[PaidOutput]:
    adverts = [post for e in ledger.log
               if isinstance(post := decode_log_payload(e.payload), ServerAdvertisement) and post.verify()]
    outputs = []
    for entry in ledger.log:
        post = decode_log_payload(entry.payload)
        if not isinstance(post, UnblindedPost):
            continue
        denomination = None
        for adv in adverts:
            for v, pub in adv.chunk_keys:
                if crypto.verify(pub, output_message(post.k_out), post.signature):
                    denomination = v
        for op in ledger.outputs_to.get(post.k_out, ()):
            utxo = ledger.utxos[op]
            outputs.append(PaidOutput(post.k_out, utxo.amount, denomination, entry.posted_at, utxo.created_at))
            break
    return outputs


def _compatible(c: InputCluster, o: PaidOutput) -> bool:
    return (o.amount == c.v and o.denomination == c.v
            and c.deposit_height < o.post_height <= c.t3 and o.payout_height <= c.t4)


def anonymity_set(ledger: Ledger, epoch: Sequence[tuple[str, SignedOffer]]) -> dict[Address, set[str]]:
    """For each paid k_out, the input clusters consistent with all public data.

    Enumerates every injective assignment of payouts to the epoch's deposits
    and keeps those where amounts, denominations and deadline windows agree.
    """
    clusters = _input_clusters(ledger, epoch)
    outputs = _paid_outputs(ledger)
    if len(clusters) > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force is capped at {MAX_BRUTE_FORCE} sessions")
    compat = [[_compatible(c, o) for c in clusters] for o in outputs]
    candidates: dict[Address, set[str]] = {o.k_out: set() for o in outputs}
    if len(outputs) > len(clusters):
        return candidates
    for assignment in itertools.permutations(range(len(clusters)), len(outputs)):
        if all(compat[i][j] for i, j in enumerate(assignment)):
            for i, j in enumerate(assignment):
                candidates[outputs[i].k_out].add(clusters[j].label)
    return candidates


def linkage_graph(ledger: Ledger) -> nx.Graph:
    """Addresses joined whenever they appear in the same transaction."""
    g = nx.Graph()
    for block in ledger.blocks:
        for tx in block.transactions:
            if tx.is_coinbase:
                continue
            addrs = [ledger.utxos[i.prevout].owner for i in tx.inputs]
            addrs += [o.address for o in tx.outputs if o.address.kind is not AddressKind.OP_RETURN]
            g.add_nodes_from(addrs)
            g.add_edges_from(zip(addrs, addrs[1:]))
    return g


def disconnected(ledger: Ledger, pairs: Iterable[tuple[Iterable[Address], Iterable[Address]]]) -> bool:
    """True iff no input-side address is graph-reachable from its output-side addresses."""
    g = linkage_graph(ledger)
    component = {}
    for i, comp in enumerate(nx.connected_components(g)):
        for addr in comp:
            component[addr] = i
    for inputs, outputs in pairs:
        left = {component[a] for a in inputs if a in component}
        right = {component[a] for a in outputs if a in component}
        if left & right:
            return False
    return True
