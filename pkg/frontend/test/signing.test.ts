// Signing parity: the browser wallet must reproduce the node's addresses,
// signatures, and transaction ids exactly, or its writes would be rejected.

import { describe, expect, it } from "vitest";

import { canonicalBytes } from "../src/encoding";
import {
  buildAcceptance,
  buildConfirmation,
  buildOffer,
  buildRequest,
  buildTransfer,
  createWallet,
  deriveAddress,
  type SignedTx,
} from "../src/signing";
import golden from "./fixtures/tx_golden.json";

const wallet = createWallet(golden.wallet.seed);

function rebuild(name: string): SignedTx {
  const byName = Object.fromEntries(golden.transactions.map((t) => [t.name, t]));
  const tx = byName[name];
  // fixture payloads are heterogeneous per kind; index loosely
  const p = tx.wire.payload as Record<string, any>;
  switch (name) {
    case "request":
      return buildRequest(wallet, p["product_spec"], p["process_tag"],
        p["due_date"], p["max_price"]);
    case "offer":
      return buildOffer(wallet, p["request_id"], p["quoted_price"],
        p["promised_due_date"]);
    case "acceptance":
      return buildAcceptance(wallet, p["request_id"], p["offer_id"]);
    case "confirmation":
      return buildConfirmation(wallet, p["request_id"]);
    case "transfer":
      return buildTransfer(wallet, p["to"], p["amount"]);
    default:
      throw new Error(`unknown case ${name}`);
  }
}

describe("wallet", () => {
  it("derives the golden public key and address from the seed", () => {
    expect(wallet.public).toBe(golden.wallet.public);
    expect(wallet.address).toBe(golden.wallet.address);
    expect(deriveAddress(wallet.public)).toBe(golden.wallet.address);
  });

  it("fresh wallets give distinct addresses", () => {
    expect(createWallet().address).not.toBe(createWallet().address);
  });
});

describe("transaction parity with the node implementation", () => {
  for (const tx of golden.transactions) {
    it(`${tx.name}: identical preimage, signature, and tx id`, () => {
      const ours = rebuild(tx.name);
      const preimage = { ...ours.wire };
      delete preimage.signature;
      expect(new TextDecoder().decode(canonicalBytes(preimage)))
        .toBe(tx.signing_preimage);
      expect(ours.wire.signature).toBe(tx.signature);
      expect(ours.txId).toBe(tx.tx_id);
      expect(ours.wire).toEqual(tx.wire);
    });
  }

  it("different payloads give different ids", () => {
    const a = buildTransfer(wallet, "cm1" + "ab".repeat(20), 25);
    const b = buildTransfer(wallet, "cm1" + "ab".repeat(20), 26);
    expect(a.txId).not.toBe(b.txId);
  });
});
