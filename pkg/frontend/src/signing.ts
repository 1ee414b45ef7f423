// Client-side wallet: Ed25519 keys, cm1 addresses, transaction building and
// signing. The node never sees the seed; requests are submitted pre-signed.

import * as ed from "@noble/ed25519";
import { sha256, sha512 } from "@noble/hashes/sha2.js";

import { canonicalBytes } from "./encoding";

ed.hashes.sha512 = sha512;

export interface Wallet {
  seed: string; // 64 hex chars
  public: string;
  address: string;
}

export interface TxWire {
  kind: string;
  payload: Record<string, unknown>;
  sender_public?: string;
  signature?: string;
}

export interface SignedTx {
  wire: TxWire;
  txId: string;
}

export const bytesToHex = ed.etc.bytesToHex;
export const hexToBytes = ed.etc.hexToBytes;

export function deriveAddress(publicHex: string): string {
  const digest = sha256(hexToBytes(publicHex));
  return "cm1" + bytesToHex(digest.slice(0, 20));
}

export function createWallet(seedHex?: string): Wallet {
  const seed = seedHex ? hexToBytes(seedHex) : crypto.getRandomValues(new Uint8Array(32));
  const pub = ed.getPublicKey(seed);
  return {
    seed: bytesToHex(seed),
    public: bytesToHex(pub),
    address: deriveAddress(bytesToHex(pub)),
  };
}

export function txIdOf(wire: TxWire): string {
  return bytesToHex(sha256(canonicalBytes(wire)));
}

export function signTx(
  wallet: Wallet,
  kind: string,
  payload: Record<string, unknown>,
): SignedTx {
  const unsigned: TxWire = { kind, payload, sender_public: wallet.public };
  const signature = ed.sign(canonicalBytes(unsigned), hexToBytes(wallet.seed));
  const wire: TxWire = { ...unsigned, signature: bytesToHex(signature) };
  return { wire, txId: txIdOf(wire) };
}

export function buildRequest(
  wallet: Wallet,
  productSpec: string,
  processTag: string,
  dueDate: number,
  maxPrice: number,
): SignedTx {
  return signTx(wallet, "ServiceRequest", {
    product_spec: productSpec,
    process_tag: processTag,
    due_date: dueDate,
    max_price: maxPrice,
  });
}

export function buildOffer(
  wallet: Wallet,
  requestId: string,
  quotedPrice: number,
  promisedDueDate: number,
): SignedTx {
  return signTx(wallet, "ServiceOffer", {
    request_id: requestId,
    quoted_price: quotedPrice,
    promised_due_date: promisedDueDate,
  });
}

export function buildAcceptance(wallet: Wallet, requestId: string, offerId: string): SignedTx {
  return signTx(wallet, "OfferAcceptance", { request_id: requestId, offer_id: offerId });
}

export function buildConfirmation(wallet: Wallet, requestId: string): SignedTx {
  return signTx(wallet, "DeliveryConfirmation", { request_id: requestId });
}

export function buildTransfer(wallet: Wallet, to: string, amount: number): SignedTx {
  return signTx(wallet, "Transfer", { to, amount });
}
