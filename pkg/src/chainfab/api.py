"""REST API served by every node; the CLI and the marketplace UI are its clients.

Write endpoints accept either a pre-signed transaction (``{"tx": {...}}``) or
unsigned payload fields that the node signs server-side (local-wallet mode:
its own key, or a wallet created via POST /wallet and named by ``from``).
All writes funnel through Node.submit_transaction on the runtime's single
writer thread; reads are snapshots of the fork-choice tip.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .contract import UnknownRequestError
from .crypto import KeyPair, generate_keypair, is_address
from .node import MEMPOOL_FULL, Node, SubmitRejected
from .runtime import NodeRuntime
from .tx import (
    MalformedTransaction,
    Transaction,
    make_acceptance,
    make_confirmation,
    make_offer,
    make_request,
    make_transfer,
)
from .wallet import new_wallet, save_wallet


class StatusResponse(BaseModel):
    network_id: str
    node_id: str
    role: str
    height: int
    tip: str
    peers: int
    mempool: int
    synced: bool
    version: str


class WalletResponse(BaseModel):
    address: str
    public: str
    seed: str


class SubmitResponse(BaseModel):
    tx_id: str
    status: str = "pending"


class BalanceResponse(BaseModel):
    address: str
    balance: int


class OfferView(BaseModel):
    offer_id: str
    provider: str
    quoted_price: int
    promised_due_date: int


class RequestView(BaseModel):
    request_id: str
    customer: str
    product_spec: str
    process_tag: str
    due_date: int
    max_price: int
    status: str
    accepted_offer: Optional[str]
    escrow: int
    offers: list[OfferView]


class RequestListResponse(BaseModel):
    requests: list[RequestView]


class SignedTx(BaseModel):
    tx: dict


class PostRequestBody(BaseModel):
    tx: Optional[dict] = None
    product_spec: Optional[str] = None
    process_tag: Optional[str] = None
    due_date: Optional[int] = None
    max_price: Optional[int] = None
    sender: Optional[str] = Field(default=None, alias="from")

    model_config = {"populate_by_name": True}


class PostOfferBody(BaseModel):
    tx: Optional[dict] = None
    request_id: Optional[str] = None
    quoted_price: Optional[int] = None
    promised_due_date: Optional[int] = None
    sender: Optional[str] = Field(default=None, alias="from")

    model_config = {"populate_by_name": True}


class PostAcceptBody(BaseModel):
    tx: Optional[dict] = None
    request_id: Optional[str] = None
    offer_id: Optional[str] = None
    sender: Optional[str] = Field(default=None, alias="from")

    model_config = {"populate_by_name": True}


class PostConfirmBody(BaseModel):
    tx: Optional[dict] = None
    request_id: Optional[str] = None
    sender: Optional[str] = Field(default=None, alias="from")

    model_config = {"populate_by_name": True}


class PostTransferBody(BaseModel):
    tx: Optional[dict] = None
    to: Optional[str] = None
    amount: Optional[int] = None
    sender: Optional[str] = Field(default=None, alias="from")

    model_config = {"populate_by_name": True}


def create_app(runtime: NodeRuntime) -> FastAPI:
    app = FastAPI(title="chainfab node", version="0.1.0")
    app.state.runtime = runtime
    # the browser marketplace runs on another origin; the API trusts its operator
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    def _signer(node: Node, sender: Optional[str]) -> KeyPair:
        if sender is None or sender == node.address:
            return node.keypair
        if not is_address(sender):
            raise HTTPException(400, detail={"error": "BadAddress", "detail": sender})
        if node.data_dir is None:
            raise HTTPException(400, detail={"error": "UnknownWallet", "detail": sender})
        path = node.data_dir / "wallets" / f"{sender}.json"
        if not path.exists():
            raise HTTPException(400, detail={"error": "UnknownWallet", "detail": sender})
        record = json.loads(path.read_text(encoding="utf-8"))
        return generate_keypair(bytes.fromhex(record["seed"]))

    def _submit(tx: Transaction) -> SubmitResponse:
        def run(node: Node, now: int) -> str:
            if not node.synced:
                raise HTTPException(503, detail={"error": "NotSynced"})
            return node.submit_transaction(tx, now)

        try:
            tx_id = runtime.execute(run)
        except SubmitRejected as exc:
            status = 503 if exc.violation.code == MEMPOOL_FULL else 400
            raise HTTPException(status, detail={
                "error": exc.violation.code, "detail": exc.violation.detail})
        return SubmitResponse(tx_id=tx_id)

    def _decode_signed(obj: dict) -> Transaction:
        try:
            return Transaction.from_wire(obj)
        except MalformedTransaction as exc:
            raise HTTPException(400, detail={
                "error": "MalformedTransaction", "detail": str(exc)})

    def _require(body: BaseModel, *fields: str) -> None:
        missing = [f for f in fields if getattr(body, f) is None]
        if missing:
            raise HTTPException(400, detail={
                "error": "MissingFields", "detail": f"missing {missing}"})

    # --- reads -------------------------------------------------------------

    @app.get("/status", response_model=StatusResponse)
    def status() -> Any:
        return runtime.execute(lambda node, now: node.status())

    @app.get("/chain")
    def chain(from_height: int = Query(0, alias="from", ge=0),
              to_height: Optional[int] = Query(None, alias="to", ge=0)) -> Any:
        def run(node: Node, now: int) -> dict:
            ids = node.chain.canonical_chain()
            end = to_height if to_height is not None else len(ids) - 1
            window = ids[from_height:end + 1]
            return {
                "height": node.chain.height(),
                "blocks": [
                    {"id": bid,
                     "height": node.chain.store.height_of(bid),
                     **node.chain.store.get(bid).to_wire()}
                    for bid in window
                ],
            }

        return runtime.execute(run)

    @app.get("/block/{block_id}")
    def block(block_id: str) -> Any:
        def run(node: Node, now: int) -> Optional[dict]:
            if block_id not in node.chain.store:
                return None
            blk = node.chain.store.get(block_id)
            return {
                "id": block_id,
                "height": blk.header.height,
                "confirmations": node.chain.confirmations(block_id),
                **blk.to_wire(),
            }

        found = runtime.execute(run)
        if found is None:
            raise HTTPException(404, detail={"error": "UnknownBlock"})
        return found

    @app.get("/tx/{tx_id}")
    def tx(tx_id: str) -> Any:
        found = runtime.execute(lambda node, now: node.tx_lookup(tx_id))
        if found is None:
            raise HTTPException(404, detail={"error": "UnknownTransaction"})
        return found

    @app.get("/mempool")
    def mempool() -> Any:
        def run(node: Node, now: int) -> dict:
            return {"transactions": [
                {"tx_id": t.id_hex, "kind": t.kind} for t in node.mempool.transactions()
            ]}

        return runtime.execute(run)

    @app.get("/peers")
    def peers() -> Any:
        def run(node: Node, now: int) -> dict:
            return {
                "peers": [
                    {"node_id": i.node_id, "endpoint": i.endpoint,
                     "last_seen": i.last_seen, "score": i.score}
                    for i in node.peers.entries()
                ],
                "banned": sorted(node.peers.banned),
            }

        return runtime.execute(run)

    @app.get("/balance/{address}", response_model=BalanceResponse)
    def balance(address: str) -> Any:
        if not is_address(address):
            raise HTTPException(400, detail={"error": "BadAddress", "detail": address})
        amount = runtime.execute(
            lambda node, now: node.chain.tip_state().balance(address))
        return BalanceResponse(address=address, balance=amount)

    @app.get("/requests", response_model=RequestListResponse)
    def requests(status: Optional[str] = None) -> Any:
        views = runtime.execute(lambda node, now: node.list_requests(status))
        return RequestListResponse(requests=views)

    @app.get("/requests/{request_id}", response_model=RequestView)
    def request_one(request_id: str) -> Any:
        def run(node: Node, now: int) -> Optional[dict]:
            try:
                return node.request_view(request_id)
            except UnknownRequestError:
                return None

        view = runtime.execute(run)
        if view is None:
            raise HTTPException(404, detail={"error": "UnknownRequest"})
        return view

    # --- writes -------------------------------------------------------------

    @app.post("/wallet", response_model=WalletResponse)
    def wallet() -> Any:
        def run(node: Node, now: int) -> dict:
            record = new_wallet()
            if node.data_dir is not None:
                save_wallet(record, node.data_dir / "wallets" / f"{record['address']}.json")
            return record

        return runtime.execute(run)

    @app.post("/requests", response_model=SubmitResponse)
    def post_request(body: PostRequestBody) -> Any:
        if body.tx is not None:
            return _submit(_decode_signed(body.tx))
        _require(body, "product_spec", "process_tag", "due_date", "max_price")

        def build(node: Node, now: int) -> Transaction:
            return make_request(_signer(node, body.sender), body.product_spec,
                                body.process_tag, body.due_date, body.max_price)

        return _submit(runtime.execute(build))

    @app.post("/offers", response_model=SubmitResponse)
    def post_offer(body: PostOfferBody) -> Any:
        if body.tx is not None:
            return _submit(_decode_signed(body.tx))
        _require(body, "request_id", "quoted_price", "promised_due_date")

        def build(node: Node, now: int) -> Transaction:
            return make_offer(_signer(node, body.sender), body.request_id,
                              body.quoted_price, body.promised_due_date)

        return _submit(runtime.execute(build))

    @app.post("/accept", response_model=SubmitResponse)
    def post_accept(body: PostAcceptBody) -> Any:
        if body.tx is not None:
            return _submit(_decode_signed(body.tx))
        _require(body, "request_id", "offer_id")

        def build(node: Node, now: int) -> Transaction:
            return make_acceptance(_signer(node, body.sender),
                                   body.request_id, body.offer_id)

        return _submit(runtime.execute(build))

    @app.post("/confirm", response_model=SubmitResponse)
    def post_confirm(body: PostConfirmBody) -> Any:
        if body.tx is not None:
            return _submit(_decode_signed(body.tx))
        _require(body, "request_id")

        def build(node: Node, now: int) -> Transaction:
            return make_confirmation(_signer(node, body.sender), body.request_id)

        return _submit(runtime.execute(build))

    @app.post("/transfer", response_model=SubmitResponse)
    def post_transfer(body: PostTransferBody) -> Any:
        if body.tx is not None:
            return _submit(_decode_signed(body.tx))
        _require(body, "to", "amount")

        def build(node: Node, now: int) -> Transaction:
            return make_transfer(_signer(node, body.sender), body.to, body.amount)

        return _submit(runtime.execute(build))

    return app
